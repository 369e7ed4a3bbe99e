//! Problem data model: loss family, regularizer and constraint set.

use crate::error::{Error, Result};
use crate::linalg::{diff, dot, norm1, norm2, sub, DenseMatrix};
use crate::partition::ColumnPartition;

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSet {
    Free,
    NonNeg,
    /// Coordinatewise bounds; infinite values are allowed.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `{x : C x <= d}`
    GeneralPolyhedron { c: DenseMatrix, d: Vec<f64> },
    /// One `(C_i, d_i)` pair per agent block, acting on `x_{I_i}` only.
    DecoupledPolyhedron { blocks: Vec<(DenseMatrix, Vec<f64>)> },
}

impl ConstraintSet {
    pub fn name(&self) -> &'static str {
        match self {
            ConstraintSet::Free => "free",
            ConstraintSet::NonNeg => "nonneg",
            ConstraintSet::Box { .. } => "box",
            ConstraintSet::GeneralPolyhedron { .. } => "polyhedron",
            ConstraintSet::DecoupledPolyhedron { .. } => "decoupled-polyhedron",
        }
    }

    /// Cones keep `0` on the boundary of every scaling, which the scaled two-stage
    /// variant relies on.
    pub fn is_cone(&self) -> bool {
        match self {
            ConstraintSet::Free | ConstraintSet::NonNeg => true,
            ConstraintSet::GeneralPolyhedron { d, .. } => d.iter().all(|&v| v == 0.0),
            ConstraintSet::DecoupledPolyhedron { blocks } => {
                blocks.iter().all(|(_, d)| d.iter().all(|&v| v == 0.0))
            }
            ConstraintSet::Box { .. } => false,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            ConstraintSet::Free | ConstraintSet::NonNeg => Ok(()),
            ConstraintSet::Box { lower, upper } => {
                if lower.len() != n || upper.len() != n {
                    return Err(Error::InvalidProblem("box bounds must have length N".into()));
                }
                for (j, (&l, &u)) in lower.iter().zip(upper).enumerate() {
                    if l.is_nan() || u.is_nan() || l > 0.0 || u < 0.0 || l >= u {
                        return Err(Error::InvalidProblem(format!(
                            "box bound {j}: need l <= 0 <= u and l < u, got [{l}, {u}]"
                        )));
                    }
                }
                Ok(())
            }
            ConstraintSet::GeneralPolyhedron { c, d } => {
                if c.cols() != n || c.rows() != d.len() {
                    return Err(Error::InvalidProblem(format!(
                        "polyhedron is {}x{} with {} offsets, N={n}",
                        c.rows(),
                        c.cols(),
                        d.len()
                    )));
                }
                if d.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidProblem("non-finite polyhedron offset".into()));
                }
                Ok(())
            }
            ConstraintSet::DecoupledPolyhedron { blocks } => {
                let total: usize = blocks.iter().map(|(c, _)| c.cols()).sum();
                if total != n {
                    return Err(Error::InvalidProblem(format!(
                        "decoupled blocks cover {total} columns, N={n}"
                    )));
                }
                for (i, (c, d)) in blocks.iter().enumerate() {
                    if c.rows() != d.len() || d.iter().any(|v| !v.is_finite()) {
                        return Err(Error::InvalidProblem(format!("decoupled block {i} malformed")));
                    }
                }
                Ok(())
            }
        }
    }

    /// Largest constraint violation of `x` (0 when feasible).
    pub fn violation(&self, x: &[f64], partition: Option<&ColumnPartition>) -> f64 {
        match self {
            ConstraintSet::Free => 0.0,
            ConstraintSet::NonNeg => x.iter().fold(0.0, |m, &v| m.max(-v)),
            ConstraintSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .fold(0.0, |m, (&v, (&l, &u))| m.max(l - v).max(v - u)),
            ConstraintSet::GeneralPolyhedron { c, d } => sub(&c.matvec(x), d)
                .into_iter()
                .fold(0.0, f64::max),
            ConstraintSet::DecoupledPolyhedron { blocks } => {
                let part = partition.expect("decoupled constraints need the partition");
                let mut worst: f64 = 0.0;
                for ((c, d), idx) in blocks.iter().zip(part.blocks()) {
                    let xb: Vec<f64> = idx.iter().map(|&j| x[j]).collect();
                    for (r, dv) in c.matvec(&xb).iter().zip(d) {
                        worst = worst.max(r - dv);
                    }
                }
                worst
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Regularizer {
    L1 { lambda: f64 },
    /// `lambda ||x||_1 + gamma ||D x||_1`
    FusedL1 { lambda: f64, gamma: f64 },
    GroupL2 { partition: ColumnPartition, weights: Vec<f64> },
}

impl Regularizer {
    pub fn name(&self) -> &'static str {
        match self {
            Regularizer::L1 { .. } => "l1",
            Regularizer::FusedL1 { .. } => "fused-l1",
            Regularizer::GroupL2 { .. } => "group-l2",
        }
    }

    /// `||E x||_*`
    pub fn norm(&self, x: &[f64]) -> f64 {
        match self {
            Regularizer::L1 { lambda } => lambda * norm1(x),
            Regularizer::FusedL1 { lambda, gamma } => lambda * norm1(x) + gamma * norm1(&diff(x)),
            Regularizer::GroupL2 { partition, weights } => partition
                .blocks()
                .iter()
                .zip(weights)
                .map(|(b, w)| w * b.iter().map(|&j| x[j] * x[j]).sum::<f64>().sqrt())
                .sum(),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        match self {
            Regularizer::L1 { lambda } if !positive(*lambda) => {
                Err(Error::InvalidProblem(format!("lambda must be positive, got {lambda}")))
            }
            Regularizer::FusedL1 { lambda, gamma } if !positive(*lambda) || !positive(*gamma) => Err(
                Error::InvalidProblem(format!("fused weights must be positive, got {lambda}, {gamma}")),
            ),
            Regularizer::FusedL1 { .. } if n < 2 => {
                Err(Error::InvalidProblem("fused penalty needs N >= 2".into()))
            }
            Regularizer::GroupL2 { partition, weights } => {
                if partition.n() != n {
                    return Err(Error::InvalidProblem("group partition does not cover N".into()));
                }
                if weights.len() != partition.agents() || !weights.iter().all(|&w| positive(w)) {
                    return Err(Error::InvalidProblem(
                        "group weights must be positive, one per block".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProblemKind {
    /// `min ||Ex||_* + alpha/2 ||x||^2  s.t. Ax = b, x in C`
    RegBp { alpha: f64 },
    /// `min 1/2 ||Ax - b||^2 + ||Ex||_*  s.t. x in C`
    Lasso,
    /// `min ||Ex||_*  s.t. ||Ax - b|| <= sigma, x in C`
    Bpdn { sigma: f64 },
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::RegBp { .. } => "regbp",
            ProblemKind::Lasso => "lasso",
            ProblemKind::Bpdn { .. } => "bpdn",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    kind: ProblemKind,
    a: DenseMatrix,
    b: Vec<f64>,
    regularizer: Regularizer,
    constraint: ConstraintSet,
}

impl ProblemSpec {
    pub fn new(
        kind: ProblemKind,
        a: DenseMatrix,
        b: Vec<f64>,
        regularizer: Regularizer,
        constraint: ConstraintSet,
    ) -> Result<Self> {
        if b.len() != a.rows() {
            return Err(Error::InvalidProblem(format!(
                "b has length {}, A has {} rows",
                b.len(),
                a.rows()
            )));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("non-finite entry in b".into()));
        }
        match kind {
            ProblemKind::RegBp { alpha } if !(alpha.is_finite() && alpha > 0.0) => {
                return Err(Error::InvalidProblem(format!("alpha must be positive, got {alpha}")));
            }
            ProblemKind::Bpdn { sigma } => {
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(Error::InvalidProblem(format!("sigma must be positive, got {sigma}")));
                }
                let norm_b = norm2(&b);
                if norm_b <= sigma {
                    return Err(Error::TrivialSolution { norm_b, sigma });
                }
            }
            _ => {}
        }
        regularizer.validate(a.cols())?;
        constraint.validate(a.cols())?;
        Ok(Self {
            kind,
            a,
            b,
            regularizer,
            constraint,
        })
    }

    pub fn reg_bp(a: DenseMatrix, b: Vec<f64>, alpha: f64, reg: Regularizer, c: ConstraintSet) -> Result<Self> {
        Self::new(ProblemKind::RegBp { alpha }, a, b, reg, c)
    }

    pub fn lasso(a: DenseMatrix, b: Vec<f64>, reg: Regularizer, c: ConstraintSet) -> Result<Self> {
        Self::new(ProblemKind::Lasso, a, b, reg, c)
    }

    pub fn bpdn(a: DenseMatrix, b: Vec<f64>, sigma: f64, reg: Regularizer, c: ConstraintSet) -> Result<Self> {
        Self::new(ProblemKind::Bpdn { sigma }, a, b, reg, c)
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    pub fn constraint(&self) -> &ConstraintSet {
        &self.constraint
    }

    pub fn m(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    /// Same data with a different right-hand side (validated again).
    pub fn with_rhs(&self, b: Vec<f64>) -> Result<Self> {
        Self::new(self.kind, self.a.clone(), b, self.regularizer.clone(), self.constraint.clone())
    }

    pub fn with_kind(&self, kind: ProblemKind) -> Result<Self> {
        Self::new(kind, self.a.clone(), self.b.clone(), self.regularizer.clone(), self.constraint.clone())
    }

    pub fn with_regularizer(&self, regularizer: Regularizer) -> Result<Self> {
        Self::new(self.kind, self.a.clone(), self.b.clone(), regularizer, self.constraint.clone())
    }

    /// Objective value, ignoring feasibility.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let reg = self.regularizer.norm(x);
        match self.kind {
            ProblemKind::RegBp { alpha } => reg + 0.5 * alpha * dot(x, x),
            ProblemKind::Lasso => {
                let r = sub(&self.a.matvec(x), &self.b);
                0.5 * dot(&r, &r) + reg
            }
            ProblemKind::Bpdn { .. } => reg,
        }
    }

    /// Residual of the equality (RegBp) or ball (Bpdn) constraint; 0 for Lasso.
    pub fn data_residual(&self, x: &[f64]) -> f64 {
        let r = norm2(&sub(&self.a.matvec(x), &self.b));
        match self.kind {
            ProblemKind::RegBp { .. } => r,
            ProblemKind::Lasso => 0.0,
            ProblemKind::Bpdn { sigma } => (r - sigma).max(0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye2() -> DenseMatrix {
        DenseMatrix::identity(2)
    }

    #[test]
    fn rejects_invariant_violations() {
        let l1 = Regularizer::L1 { lambda: 1.0 };
        assert!(ProblemSpec::lasso(eye2(), vec![1.0], l1.clone(), ConstraintSet::Free).is_err());
        assert!(ProblemSpec::reg_bp(eye2(), vec![1.0, 0.0], 0.0, l1.clone(), ConstraintSet::Free).is_err());
        assert!(ProblemSpec::reg_bp(eye2(), vec![1.0, 0.0], -1.0, l1.clone(), ConstraintSet::Free).is_err());
        assert!(matches!(
            ProblemSpec::bpdn(eye2(), vec![0.5, 0.0], 1.0, l1.clone(), ConstraintSet::Free),
            Err(Error::TrivialSolution { .. })
        ));
        assert!(ProblemSpec::bpdn(eye2(), vec![2.0, 0.0], 0.0, l1.clone(), ConstraintSet::Free).is_err());
        assert!(ProblemSpec::lasso(eye2(), vec![1.0, 0.0], Regularizer::L1 { lambda: 0.0 }, ConstraintSet::Free).is_err());
        let fused_bad = Regularizer::FusedL1 { lambda: 1.0, gamma: -0.1 };
        assert!(ProblemSpec::lasso(eye2(), vec![1.0, 0.0], fused_bad, ConstraintSet::Free).is_err());
        let bad_box = ConstraintSet::Box { lower: vec![0.1, -1.0], upper: vec![1.0, 1.0] };
        assert!(ProblemSpec::lasso(eye2(), vec![1.0, 0.0], l1.clone(), bad_box).is_err());
        let flat_box = ConstraintSet::Box { lower: vec![0.0, 0.0], upper: vec![0.0, 1.0] };
        assert!(ProblemSpec::lasso(eye2(), vec![1.0, 0.0], l1.clone(), flat_box).is_err());
        let bad_poly = ConstraintSet::GeneralPolyhedron { c: DenseMatrix::identity(3), d: vec![0.0; 3] };
        assert!(ProblemSpec::lasso(eye2(), vec![1.0, 0.0], l1.clone(), bad_poly).is_err());
        let part = crate::partition::make_partition(2, 2, crate::partition::PartitionStrategy::Even).unwrap();
        let bad_group = Regularizer::GroupL2 { partition: part.clone(), weights: vec![1.0] };
        assert!(ProblemSpec::lasso(eye2(), vec![1.0, 0.0], bad_group, ConstraintSet::Free).is_err());
        let zero_w = Regularizer::GroupL2 { partition: part, weights: vec![1.0, 0.0] };
        assert!(ProblemSpec::lasso(eye2(), vec![1.0, 0.0], zero_w, ConstraintSet::Free).is_err());
        let short = ConstraintSet::DecoupledPolyhedron { blocks: vec![(DenseMatrix::identity(1), vec![0.0])] };
        assert!(ProblemSpec::lasso(eye2(), vec![1.0, 0.0], l1, short).is_err());
    }

    #[test]
    fn objectives() {
        let l1 = Regularizer::L1 { lambda: 1.0 };
        let p = ProblemSpec::lasso(eye2(), vec![2.0, 0.0], l1.clone(), ConstraintSet::Free).unwrap();
        assert_eq!(p.objective(&[1.0, 0.0]), 1.5);
        let f = Regularizer::FusedL1 { lambda: 0.5, gamma: 2.0 };
        assert_eq!(f.norm(&[1.0, -1.0]), 0.5 * 2.0 + 2.0 * 2.0);
        let c = ConstraintSet::Box { lower: vec![0.0, -1.0], upper: vec![1.0, 1.0] };
        assert_eq!(c.violation(&[1.5, -3.0], None), 2.0);
        assert!(ConstraintSet::NonNeg.is_cone());
        assert!(!c.is_cone());
    }
}
