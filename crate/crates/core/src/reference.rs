//! Centralized oracles used to certify the distributed solver, plus seeded test
//! instance generators.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{norm2, sub, DenseMatrix};
use crate::partition::{make_partition, ColumnPartition, PartitionStrategy};
use crate::problem::{ConstraintSet, ProblemKind, ProblemSpec, Regularizer};

pub const ORACLE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub objective: f64,
    pub solution: Option<Vec<f64>>,
    pub iterations: usize,
    /// Largest of the relative gap and the primal/dual residuals at exit.
    pub tolerance: f64,
}

/// Sparse constraint rows `A z + s = b`, `s` in a product of cones, built one
/// cone at a time.
#[derive(Default)]
struct ConicBuilder {
    rows: usize,
    ii: Vec<usize>,
    jj: Vec<usize>,
    vv: Vec<f64>,
    rhs: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

impl ConicBuilder {
    /// Appends rows given as `(coefficients, rhs)`.
    fn push(&mut self, cone: SupportedConeT<f64>, rows: Vec<(Vec<(usize, f64)>, f64)>) {
        for (coeffs, r) in rows {
            for (j, v) in coeffs {
                if v != 0.0 {
                    self.ii.push(self.rows);
                    self.jj.push(j);
                    self.vv.push(v);
                }
            }
            self.rhs.push(r);
            self.rows += 1;
        }
        self.cones.push(cone);
    }

    fn nonneg(&mut self, rows: Vec<(Vec<(usize, f64)>, f64)>) {
        if !rows.is_empty() {
            let k = rows.len();
            self.push(SupportedConeT::NonnegativeConeT(k), rows);
        }
    }
}

/// Variable layout: `x` (N), then regularizer epigraph variables, then the
/// LASSO residual `r = Ax - b` when present.
fn conic_solve(problem: &ProblemSpec, ridge: f64, tol: f64) -> Result<OracleReport> {
    let a = problem.a();
    let b = problem.b();
    let (m, n) = (problem.m(), problem.n());
    let mut nv = n;
    let mut q = vec![0.0; n];
    let mut cb = ConicBuilder::default();

    match problem.regularizer() {
        Regularizer::L1 { lambda } | Regularizer::FusedL1 { lambda, .. } => {
            let t0 = nv;
            nv += n;
            q.extend(std::iter::repeat(*lambda).take(n));
            let mut rows = Vec::new();
            for j in 0..n {
                rows.push((vec![(j, 1.0), (t0 + j, -1.0)], 0.0));
                rows.push((vec![(j, -1.0), (t0 + j, -1.0)], 0.0));
            }
            if let Regularizer::FusedL1 { gamma, .. } = problem.regularizer() {
                let s0 = nv;
                nv += n - 1;
                q.extend(std::iter::repeat(*gamma).take(n - 1));
                for k in 0..n - 1 {
                    rows.push((vec![(k + 1, 1.0), (k, -1.0), (s0 + k, -1.0)], 0.0));
                    rows.push((vec![(k + 1, -1.0), (k, 1.0), (s0 + k, -1.0)], 0.0));
                }
            }
            cb.nonneg(rows);
        }
        Regularizer::GroupL2 { partition, weights } => {
            for (blk, &w) in partition.blocks().iter().zip(weights) {
                let t = nv;
                nv += 1;
                q.push(w);
                let mut rows = vec![(vec![(t, -1.0)], 0.0)];
                rows.extend(blk.iter().map(|&j| (vec![(j, -1.0)], 0.0)));
                cb.push(SupportedConeT::SecondOrderConeT(blk.len() + 1), rows);
            }
        }
    }

    let a_row = |r: usize, scale: f64| -> Vec<(usize, f64)> { (0..n).map(|j| (j, scale * a.get(r, j))).collect() };
    // an empty quadratic term trips the factorization, so keep the diagonal even at 0
    let mut p_diag: Vec<(usize, f64)> = (0..n).map(|j| (j, ridge)).collect();
    match problem.kind() {
        ProblemKind::RegBp { .. } => {
            let rows = (0..m).map(|r| (a_row(r, 1.0), b[r])).collect();
            cb.push(SupportedConeT::ZeroConeT(m), rows);
        }
        ProblemKind::Lasso => {
            let r0 = nv;
            nv += m;
            q.extend(std::iter::repeat(0.0).take(m));
            p_diag.extend((0..m).map(|r| (r0 + r, 1.0)));
            let rows = (0..m)
                .map(|r| {
                    let mut row = a_row(r, 1.0);
                    row.push((r0 + r, -1.0));
                    (row, b[r])
                })
                .collect();
            cb.push(SupportedConeT::ZeroConeT(m), rows);
        }
        ProblemKind::Bpdn { sigma } => {
            let mut rows = vec![(vec![], sigma)];
            rows.extend((0..m).map(|r| (a_row(r, 1.0), b[r])));
            cb.push(SupportedConeT::SecondOrderConeT(m + 1), rows);
        }
    }

    match problem.constraint() {
        ConstraintSet::Free => {}
        ConstraintSet::NonNeg => cb.nonneg((0..n).map(|j| (vec![(j, -1.0)], 0.0)).collect()),
        ConstraintSet::Box { lower, upper } => {
            let mut rows = Vec::new();
            for j in 0..n {
                if upper[j].is_finite() {
                    rows.push((vec![(j, 1.0)], upper[j]));
                }
                if lower[j].is_finite() {
                    rows.push((vec![(j, -1.0)], -lower[j]));
                }
            }
            cb.nonneg(rows);
        }
        ConstraintSet::GeneralPolyhedron { c, d } => {
            cb.nonneg((0..c.rows()).map(|r| ((0..n).map(|j| (j, c.get(r, j))).collect(), d[r])).collect());
        }
        ConstraintSet::DecoupledPolyhedron { blocks } => {
            let mut start = 0;
            let mut rows = Vec::new();
            for (c, d) in blocks {
                for r in 0..c.rows() {
                    rows.push(((0..c.cols()).map(|j| (start + j, c.get(r, j))).collect(), d[r]));
                }
                start += c.cols();
            }
            cb.nonneg(rows);
        }
    }

    let (pi, pv): (Vec<usize>, Vec<f64>) = p_diag.into_iter().unzip();
    let pmat = CscMatrix::new_from_triplets(nv, nv, pi.clone(), pi, pv);
    let amat = CscMatrix::new_from_triplets(cb.rows, nv, cb.ii, cb.jj, cb.vv);
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .max_iter(500)
        .tol_gap_abs(tol)
        .tol_gap_rel(tol)
        .tol_feas(tol)
        .tol_ktratio(tol.min(1e-6))
        .build()
        .map_err(|e| Error::Oracle(format!("{e:?}")))?;
    let mut solver = DefaultSolver::new(&pmat, &q, &amat, &cb.rhs, &cb.cones, settings);
    solver.solve();
    let sol = &solver.solution;
    let info = &solver.info;
    let tolerance = info.gap_rel.max(info.res_primal).max(info.res_dual);
    match sol.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => {}
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            return Err(Error::Infeasible {
                iterations: sol.iterations as usize,
                objective: f64::NEG_INFINITY,
            })
        }
        s => return Err(Error::Oracle(format!("conic solver stopped with {s:?} (tolerance {tolerance:e})"))),
    }
    let x = sol.x[..n].to_vec();
    let objective = problem.regularizer().norm(&x)
        + 0.5 * ridge * crate::linalg::dot(&x, &x)
        + match problem.kind() {
            ProblemKind::Lasso => {
                let r = sub(&a.matvec(&x), b);
                0.5 * crate::linalg::dot(&r, &r)
            }
            _ => 0.0,
        };
    Ok(OracleReport {
        objective,
        solution: Some(x),
        iterations: sol.iterations as usize,
        tolerance,
    })
}

/// High-accuracy centralized solve of the problem as stated.
pub fn solve_centralized(problem: &ProblemSpec, tol: f64) -> Result<OracleReport> {
    let ridge = match problem.kind() {
        ProblemKind::RegBp { alpha } => alpha,
        _ => 0.0,
    };
    conic_solve(problem, ridge, tol)
}

/// RegBp with the quadratic term dropped: the plain BP-like problem.
pub fn solve_unregularized(problem: &ProblemSpec, tol: f64) -> Result<OracleReport> {
    conic_solve(problem, 0.0, tol)
}

/// Adds `ridge/2 ||x||^2` to any problem kind (RegBp keeps its own alpha on top).
pub fn solve_with_ridge(problem: &ProblemSpec, ridge: f64, tol: f64) -> Result<OracleReport> {
    let own = match problem.kind() {
        ProblemKind::RegBp { alpha } => alpha,
        _ => 0.0,
    };
    conic_solve(problem, own + ridge, tol)
}

fn feasible(problem: &ProblemSpec, x: &[f64], slack: f64) -> bool {
    if problem.constraint().violation(x, None) > slack {
        return false;
    }
    match problem.kind() {
        ProblemKind::Bpdn { sigma } => norm2(&sub(&problem.a().matvec(x), problem.b())) <= sigma + slack,
        _ => true,
    }
}

/// Grid search with repeated zoom for `N <= 3`. RegBp equality constraints are
/// eliminated through a null-space parametrization; `half_width` bounds the
/// search box around the least-norm solution (or the origin).
pub fn brute_force_tiny(problem: &ProblemSpec, half_width: f64, points_per_axis: usize) -> Result<OracleReport> {
    let n = problem.n();
    if n > 3 {
        return Err(Error::Dimension(format!("brute force needs N <= 3, got {n}")));
    }
    if points_per_axis < 3 {
        return Err(Error::Dimension("need at least 3 grid points per axis".into()));
    }
    if matches!(problem.constraint(), ConstraintSet::DecoupledPolyhedron { .. }) {
        return Err(Error::UnsupportedCase {
            problem: problem.kind().name().into(),
            constraint: problem.constraint().name().into(),
            norm: problem.regularizer().name().into(),
        });
    }
    let (origin, basis) = match problem.kind() {
        ProblemKind::RegBp { .. } => {
            let a = problem.a().to_nalgebra();
            let x0 = a
                .clone()
                .svd(true, true)
                .solve(&nalgebra::DVector::from_column_slice(problem.b()), 1e-12)
                .map_err(|e| Error::Oracle(e.to_string()))?;
            let full = a.transpose() * &a;
            let eig = full.symmetric_eigen();
            let mut null = Vec::new();
            for k in 0..n {
                if eig.eigenvalues[k].abs() <= 1e-12 * (1.0 + eig.eigenvalues.amax()) {
                    null.push(eig.eigenvectors.column(k).iter().copied().collect::<Vec<f64>>());
                }
            }
            (x0.iter().copied().collect::<Vec<f64>>(), null)
        }
        _ => (vec![0.0; n], (0..n).map(|k| (0..n).map(|j| f64::from(j == k)).collect()).collect()),
    };
    let dim = basis.len();
    let slack = 1e-12;
    let point = |t: &[f64]| -> Vec<f64> {
        let mut x = origin.clone();
        for (tk, v) in t.iter().zip(&basis) {
            for j in 0..n {
                x[j] += tk * v[j];
            }
        }
        x
    };
    let eval = |t: &[f64]| -> f64 {
        let x = point(t);
        if feasible(problem, &x, slack) {
            problem.objective(&x)
        } else {
            f64::INFINITY
        }
    };
    let mut center = vec![0.0; dim];
    let mut best = eval(&center);
    let mut width = half_width;
    let mut evals = 1;
    let mut spacing = if dim == 0 { 0.0 } else { 2.0 * width / (points_per_axis - 1) as f64 };
    while dim > 0 && spacing > 1e-13 {
        let mut idx = vec![0usize; dim];
        let mut best_t = center.clone();
        loop {
            let t: Vec<f64> = idx.iter().zip(&center).map(|(&i, c)| c - width + i as f64 * spacing).collect();
            let v = eval(&t);
            evals += 1;
            if v < best {
                best = v;
                best_t = t;
            }
            let mut k = 0;
            while k < dim {
                idx[k] += 1;
                if idx[k] < points_per_axis {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == dim {
                break;
            }
        }
        center = best_t;
        width = 2.0 * spacing;
        spacing = 2.0 * width / (points_per_axis - 1) as f64;
    }
    if !best.is_finite() {
        return Err(Error::Infeasible { iterations: evals, objective: f64::INFINITY });
    }
    Ok(OracleReport {
        objective: best,
        solution: Some(point(&center)),
        iterations: evals,
        tolerance: spacing,
    })
}

/// `|J_dist - J_true| / |J_true|`
pub fn relative_error(j_dist: f64, j_true: f64) -> Result<f64> {
    if j_true == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok((j_dist - j_true).abs() / j_true.abs())
}

/// Standard normal `A` (m x n) and `b`, drawn in that order from a seeded stream.
pub fn random_instance(m: usize, n: usize, seed: u64) -> (DenseMatrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..m * n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    (DenseMatrix::new(m, n, data).expect("finite normal draws"), b)
}

/// Like [`random_instance`] but redraws `b` from the same stream until
/// `||b|| > sigma`. Returns the number of redraws as well.
pub fn random_bpdn_instance(m: usize, n: usize, sigma: f64, seed: u64) -> (DenseMatrix, Vec<f64>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..m * n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut redraws = 0;
    loop {
        let b: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        if norm2(&b) > sigma {
            return (DenseMatrix::new(m, n, data).expect("finite normal draws"), b, redraws);
        }
        redraws += 1;
    }
}

/// `A = [I_2 ... I_2]` with `r` copies and `b = (1, 1)`.
pub fn repeated_identity(r: usize) -> (DenseMatrix, Vec<f64>) {
    let mut a = DenseMatrix::zeros(2, 2 * r);
    for k in 0..r {
        a.set(0, 2 * k, 1.0);
        a.set(1, 2 * k + 1, 1.0);
    }
    (a, vec![1.0, 1.0])
}

/// Closed-form block of the ridge-regularized LASSO on [`repeated_identity`]:
/// every block equals `(1 - lambda) / (r + alpha) * b` for `lambda < 1`.
pub fn repeated_identity_block(r: usize, lambda: f64, alpha: f64) -> Vec<f64> {
    vec![(1.0 - lambda) / (r as f64 + alpha); 2]
}

/// `A = [I_2 Q R]` with `Q` a rotation and `||R^T||_2 = shrink < 1`, grouped in
/// column pairs. Returns the matrix and its group partition.
pub fn grouped_identity_rotation(angle: f64, r: &DenseMatrix, shrink: f64) -> Result<(DenseMatrix, ColumnPartition)> {
    if r.rows() != 2 || r.cols() % 2 != 0 || !(0.0..1.0).contains(&shrink) {
        return Err(Error::Dimension("R must be 2 x (even) and shrink in [0, 1)".into()));
    }
    let norm = r.spectral_norm_sq().sqrt();
    let k = r.cols();
    let n = 4 + k;
    let mut a = DenseMatrix::zeros(2, n);
    a.set(0, 0, 1.0);
    a.set(1, 1, 1.0);
    let (s, c) = angle.sin_cos();
    a.set(0, 2, c);
    a.set(0, 3, -s);
    a.set(1, 2, s);
    a.set(1, 3, c);
    for i in 0..2 {
        for j in 0..k {
            let v = if norm > 0.0 { r.get(i, j) * shrink / norm } else { 0.0 };
            a.set(i, 4 + j, v);
        }
    }
    let part = make_partition(n, n / 2, PartitionStrategy::Even)?;
    Ok((a, part))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l1(lambda: f64) -> Regularizer {
        Regularizer::L1 { lambda }
    }

    #[test]
    fn lasso_identity() {
        let p = ProblemSpec::lasso(DenseMatrix::identity(2), vec![2.0, 0.0], l1(1.0), ConstraintSet::Free).unwrap();
        let r = solve_centralized(&p, ORACLE_TOL).unwrap();
        assert!((r.objective - 1.5).abs() < 1e-8, "{}", r.objective);
        let x = r.solution.unwrap();
        assert!((x[0] - 1.0).abs() < 1e-7 && x[1].abs() < 1e-7);
    }

    #[test]
    fn bp_two_columns() {
        let a = DenseMatrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        let p = ProblemSpec::reg_bp(a, vec![1.0], 0.3, l1(1.0), ConstraintSet::Free).unwrap();
        let bp = solve_unregularized(&p, ORACLE_TOL).unwrap();
        assert!((bp.objective - 1.0).abs() < 1e-8);
        let reg = solve_centralized(&p, ORACLE_TOL).unwrap();
        let x = reg.solution.unwrap();
        assert!((x[0] - 0.5).abs() < 1e-7 && (x[1] - 0.5).abs() < 1e-7, "{x:?}");
    }

    #[test]
    fn repeated_identity_ridge_lasso() {
        let (a, b) = repeated_identity(2);
        let p = ProblemSpec::lasso(a, b, l1(0.5), ConstraintSet::Free).unwrap();
        let r = solve_with_ridge(&p, 0.1, ORACLE_TOL).unwrap();
        let x = r.solution.unwrap();
        let want = repeated_identity_block(2, 0.5, 0.1);
        assert!((want[0] - 0.5 / 2.1).abs() < 1e-15);
        for k in 0..2 {
            for c in 0..2 {
                assert!((x[2 * k + c] - want[c]).abs() < 1e-7, "{x:?}");
            }
        }
    }

    #[test]
    fn brute_force_agrees_with_conic() {
        let lasso = ProblemSpec::lasso(DenseMatrix::identity(2), vec![2.0, 0.0], l1(1.0), ConstraintSet::Free).unwrap();
        let a = DenseMatrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        let regbp = ProblemSpec::reg_bp(a, vec![1.0], 0.3, l1(1.0), ConstraintSet::Free).unwrap();
        let bpdn = ProblemSpec::bpdn(DenseMatrix::identity(1), vec![2.0], 1.0, l1(1.0), ConstraintSet::Free).unwrap();
        let mut rng_a = DenseMatrix::new(2, 3, vec![0.3, -1.2, 0.8, 1.1, 0.4, -0.5]).unwrap();
        rng_a.set(0, 0, 0.9);
        let nonneg_lasso = ProblemSpec::lasso(rng_a.clone(), vec![1.0, -0.4], l1(0.2), ConstraintSet::NonNeg).unwrap();
        let fused = ProblemSpec::lasso(
            rng_a,
            vec![0.7, 1.3],
            Regularizer::FusedL1 { lambda: 0.3, gamma: 0.2 },
            ConstraintSet::Box { lower: vec![-0.5; 3], upper: vec![2.0; 3] },
        )
        .unwrap();
        for p in [lasso, regbp, bpdn, nonneg_lasso, fused] {
            let grid = brute_force_tiny(&p, 4.0, if p.n() == 3 { 41 } else { 201 }).unwrap();
            let conic = solve_centralized(&p, ORACLE_TOL).unwrap();
            assert!(
                (grid.objective - conic.objective).abs() < 1e-7,
                "{:?}: grid {} conic {}",
                p.kind(),
                grid.objective,
                conic.objective
            );
        }
    }

    #[test]
    fn brute_force_trivial_cases() {
        let bpdn = ProblemSpec::bpdn(DenseMatrix::identity(1), vec![2.0], 1.0, l1(1.0), ConstraintSet::Free).unwrap();
        let r = brute_force_tiny(&bpdn, 4.0, 201).unwrap();
        assert!((r.solution.unwrap()[0] - 1.0).abs() < 1e-9);
        let huge = ProblemSpec::lasso(DenseMatrix::identity(2), vec![2.0, -1.0], l1(100.0), ConstraintSet::Free).unwrap();
        let r = brute_force_tiny(&huge, 4.0, 201).unwrap();
        assert!(r.solution.unwrap().iter().all(|v| v.abs() < 1e-9));
        assert!((r.objective - 2.5).abs() < 1e-12);
        let big = ProblemSpec::lasso(DenseMatrix::identity(4), vec![1.0; 4], l1(1.0), ConstraintSet::Free).unwrap();
        assert!(brute_force_tiny(&big, 1.0, 11).is_err());
    }

    #[test]
    fn relative_error_examples() {
        assert!((relative_error(1.7211, 1.72).unwrap() - 6.395e-4).abs() < 1e-6);
        assert_eq!(relative_error(3.3, 3.3).unwrap(), 0.0);
        assert_eq!(relative_error(2.0, 1.0).unwrap(), 1.0);
        assert_eq!(relative_error(1.0, 0.0), Err(Error::ZeroDenominator));
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(random_instance(3, 5, 9), random_instance(3, 5, 9));
        assert_ne!(random_instance(3, 5, 9).1, random_instance(3, 5, 10).1);
        let (_, b, _) = random_bpdn_instance(2, 4, 1.5, 4);
        assert!(norm2(&b) > 1.5);
    }

    #[test]
    fn grouped_instance_shape() {
        let r = DenseMatrix::new(2, 2, vec![1.0, 2.0, -0.5, 0.3]).unwrap();
        let (a, part) = grouped_identity_rotation(0.7, &r, 0.6).unwrap();
        assert_eq!((a.rows(), a.cols(), part.agents()), (2, 6, 3));
        let tail = a.select_columns(&[4, 5]);
        assert!((tail.spectral_norm_sq().sqrt() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn permutation_invariance() {
        let (a, b) = random_instance(4, 9, 2);
        let part = make_partition(9, 3, PartitionStrategy::Even).unwrap();
        let weights = vec![0.8, 1.1, 0.5];
        let p = ProblemSpec::lasso(
            a.clone(),
            b.clone(),
            Regularizer::GroupL2 { partition: part.clone(), weights: weights.clone() },
            ConstraintSet::NonNeg,
        )
        .unwrap();
        let perm = [4, 7, 0, 2, 8, 1, 6, 3, 5];
        let inv: Vec<usize> = (0..9).map(|j| perm.iter().position(|&q| q == j).unwrap()).collect();
        let ap = a.select_columns(&perm);
        let blocks: Vec<Vec<usize>> = part.blocks().iter().map(|blk| blk.iter().map(|&j| inv[j]).collect()).collect();
        let pp = make_partition(9, 3, PartitionStrategy::Explicit(blocks)).unwrap();
        let q = ProblemSpec::lasso(ap, b, Regularizer::GroupL2 { partition: pp, weights }, ConstraintSet::NonNeg).unwrap();
        let j1 = solve_centralized(&p, ORACLE_TOL).unwrap().objective;
        let j2 = solve_centralized(&q, ORACLE_TOL).unwrap().objective;
        assert!((j1 - j2).abs() <= 1e-10 * j1.abs().max(1.0), "{j1} {j2}");
    }
}
