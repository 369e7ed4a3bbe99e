//! Per-agent dual pieces for every supported (problem, regularizer, constraint)
//! case, primal recovery from dual variables, and the stage-2 right-hand side.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, DenseMatrix};
use crate::network::AveragingMode;
use crate::partition::ColumnPartition;
use crate::problem::{ConstraintSet, ProblemKind, ProblemSpec, Regularizer};
use crate::prox::{
    group_shrink_by, project, soft_threshold, theta, ConvexIntersection, EllipticBall, Interval, ProjectionSet,
    SimpleSet, SmoothFunction,
};
use crate::splitting::{power_iteration, AgentObjective, Consensus, OverlapLink, SharedBlock};

/// Offsets of the blocks inside one agent's dual vector
/// `[y | mu_shared | mu_local | v_fused | v_aux]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentLayout {
    pub m: usize,
    pub mu_shared: usize,
    pub mu_local: usize,
    pub v_fused: usize,
    /// Global index of the first fused coordinate.
    pub v_fused_first: usize,
    pub v_aux: usize,
}

impl AgentLayout {
    pub fn dim(&self) -> usize {
        self.m + self.mu_shared + self.mu_local + self.v_fused + self.v_aux
    }
    pub fn mu_shared_start(&self) -> usize {
        self.m
    }
    pub fn mu_local_start(&self) -> usize {
        self.m + self.mu_shared
    }
    pub fn v_fused_start(&self) -> usize {
        self.mu_local_start() + self.mu_local
    }
    pub fn v_aux_start(&self) -> usize {
        self.v_fused_start() + self.v_fused
    }
}

/// Closed-form primal minimizer `x(u)` of the conjugate term; its negative is the
/// gradient of the conjugate in `u`.
#[derive(Debug, Clone, PartialEq)]
pub enum PrimalMap {
    /// `x_j = clamp(-S_lambda(u_j)/alpha, l_j, u_j)`
    Shrink { lambda: f64, bounds: Vec<Interval> },
    /// `x = -S_{lambda ||.||}(u) / alpha`
    GroupFree { lambda: f64 },
    /// `x = S_{lambda ||.||}(u_-) / alpha`
    GroupNonNeg { lambda: f64 },
    /// `x_j = clamp(-u_j/alpha, l_j, u_j)` (the norm lives in a local ball variable)
    GroupBox { bounds: Vec<Interval> },
}

impl PrimalMap {
    /// Returns `(phi(u), x(u))`.
    pub fn evaluate(&self, u: &[f64], alpha: f64) -> (f64, Vec<f64>) {
        match self {
            PrimalMap::Shrink { lambda, bounds } => {
                let mut val = 0.0;
                let x = u
                    .iter()
                    .zip(bounds)
                    .map(|(&uj, iv)| {
                        let t = -soft_threshold(uj, *lambda) / alpha;
                        val += 0.5 * alpha * theta(t, *iv);
                        iv.clamp(t)
                    })
                    .collect();
                (val, x)
            }
            PrimalMap::GroupFree { lambda } => {
                let s = (norm2(u) - lambda).max(0.0);
                let x = group_shrink_by(u, *lambda).iter().map(|v| -v / alpha).collect();
                (0.5 * s * s / alpha, x)
            }
            PrimalMap::GroupNonNeg { lambda } => {
                let neg: Vec<f64> = u.iter().map(|&v| (-v).max(0.0)).collect();
                let s = (norm2(&neg) - lambda).max(0.0);
                let x = group_shrink_by(&neg, *lambda).iter().map(|v| v / alpha).collect();
                (0.5 * s * s / alpha, x)
            }
            PrimalMap::GroupBox { bounds } => {
                let mut val = 0.0;
                let x = u
                    .iter()
                    .zip(bounds)
                    .map(|(&uj, iv)| {
                        let t = -uj / alpha;
                        val += 0.5 * alpha * theta(t, *iv);
                        iv.clamp(t)
                    })
                    .collect();
                (val, x)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum SmoothPart {
    /// `phi(M w)` with `M` mapping the agent vector to its column block.
    Conjugate { map: DenseMatrix, alpha: f64, primal: PrimalMap },
    /// `scale/2 ||y||^2`
    Quadratic { scale: f64 },
    /// `scale ||y||`, zero subgradient at the origin.
    Norm { scale: f64 },
}

#[derive(Debug, Clone)]
pub struct DualPiece {
    agent: usize,
    layout: AgentLayout,
    linear: Vec<f64>,
    smooth: SmoothPart,
    local: Option<ConvexIntersection>,
    lipschitz: f64,
}

impl DualPiece {
    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn layout(&self) -> &AgentLayout {
        &self.layout
    }

    pub fn smooth(&self) -> &SmoothPart {
        &self.smooth
    }

    /// Primal block recovered from this agent's dual vector (conjugate pieces only).
    pub fn primal_block(&self, w: &[f64]) -> Option<Vec<f64>> {
        match &self.smooth {
            SmoothPart::Conjugate { map, alpha, primal } => Some(primal.evaluate(&map.matvec(w), *alpha).1),
            _ => None,
        }
    }
}

impl SmoothFunction for DualPiece {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn value(&self, w: &[f64]) -> f64 {
        let lin = dot(&self.linear, w);
        let m = self.layout.m;
        lin + match &self.smooth {
            SmoothPart::Conjugate { map, alpha, primal } => primal.evaluate(&map.matvec(w), *alpha).0,
            SmoothPart::Quadratic { scale } => 0.5 * scale * dot(&w[..m], &w[..m]),
            SmoothPart::Norm { scale } => scale * norm2(&w[..m]),
        }
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = self.linear.clone();
        let m = self.layout.m;
        match &self.smooth {
            SmoothPart::Conjugate { map, alpha, primal } => {
                let x = primal.evaluate(&map.matvec(w), *alpha).1;
                for (gi, v) in g.iter_mut().zip(map.tmatvec(&x)) {
                    *gi -= v;
                }
            }
            SmoothPart::Quadratic { scale } => {
                for t in 0..m {
                    g[t] += scale * w[t];
                }
            }
            SmoothPart::Norm { scale } => {
                let n = norm2(&w[..m]);
                if n > 0.0 {
                    for t in 0..m {
                        g[t] += scale * w[t] / n;
                    }
                }
            }
        }
        g
    }
}

impl AgentObjective for DualPiece {
    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn local_set(&self) -> Option<&ConvexIntersection> {
        self.local.as_ref()
    }
}

/// Gradient of the smooth part of a piece.
pub fn dual_gradient(piece: &DualPiece, point: &[f64]) -> Vec<f64> {
    piece.gradient(point)
}

/// Consensual dual variables in global layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub y: Vec<f64>,
    /// Polyhedron multipliers: the shared vector, or block multipliers concatenated
    /// in agent order for decoupled constraints. Empty when absent.
    pub mu: Vec<f64>,
    /// Fused difference multipliers (length `N - 1`) or per-column group
    /// auxiliaries (length `N`). Empty when absent.
    pub v: Vec<f64>,
    pub fixed_point_residual: f64,
    pub consensus_residual: f64,
}

impl DualSolution {
    /// Multiplier of the BPDN ball constraint, `||y|| / (2 sigma)`.
    pub fn ball_multiplier(&self, sigma: f64) -> f64 {
        norm2(&self.y) / (2.0 * sigma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AuxKind {
    None,
    /// Ball of radius `lambda_i` per block.
    GroupBall,
}

/// All agents' pieces plus the consensus structure for one problem.
#[derive(Debug, Clone)]
pub struct DualProblem {
    problem: ProblemSpec,
    partition: ColumnPartition,
    pub pieces: Vec<DualPiece>,
    pub consensus: Consensus,
    aux: AuxKind,
    group_weights: Vec<f64>,
}

fn unsupported(problem: &ProblemSpec, partition_note: Option<&str>) -> Error {
    let mut constraint = problem.constraint().name().to_string();
    if let Some(n) = partition_note {
        constraint = format!("{constraint} ({n})");
    }
    Error::UnsupportedCase {
        problem: problem.kind().name().into(),
        constraint,
        norm: problem.regularizer().name().into(),
    }
}

pub fn build_dual(problem: &ProblemSpec, partition: &ColumnPartition) -> Result<DualProblem> {
    let n = problem.n();
    let m = problem.m();
    let p = partition.agents();
    if partition.n() != n {
        return Err(Error::Dimension(format!("partition covers {} columns, A has {n}", partition.n())));
    }
    let regbp_alpha = match problem.kind() {
        ProblemKind::RegBp { alpha } => Some(alpha),
        _ => None,
    };
    let constraint = problem.constraint();
    if regbp_alpha.is_none()
        && matches!(constraint, ConstraintSet::Box { .. } | ConstraintSet::DecoupledPolyhedron { .. })
    {
        return Err(unsupported(problem, None));
    }
    let group_weights = match problem.regularizer() {
        Regularizer::GroupL2 { partition: gp, weights } => {
            if gp != partition {
                return Err(unsupported(problem, Some("group blocks differ from the agent partition")));
            }
            weights.clone()
        }
        _ => Vec::new(),
    };
    let fused_gamma = match problem.regularizer() {
        Regularizer::FusedL1 { gamma, .. } => {
            if !partition.is_contiguous() {
                return Err(unsupported(problem, Some("fused penalty needs contiguous ordered blocks")));
            }
            Some(*gamma)
        }
        _ => None,
    };
    if let ConstraintSet::DecoupledPolyhedron { blocks } = constraint {
        if blocks.len() != p || blocks.iter().zip(partition.blocks()).any(|((c, _), b)| c.cols() != b.len()) {
            return Err(Error::InvalidProblem("decoupled blocks do not match the partition".into()));
        }
    }
    let a = problem.a();
    let b = problem.b();
    let pf = p as f64;
    let mu_shared = match constraint {
        ConstraintSet::GeneralPolyhedron { c, .. } => c.rows(),
        _ => 0,
    };
    let aux = match (problem.kind(), problem.regularizer(), constraint) {
        (ProblemKind::RegBp { .. }, Regularizer::GroupL2 { .. }, ConstraintSet::Box { .. }) => AuxKind::GroupBall,
        (ProblemKind::Lasso | ProblemKind::Bpdn { .. }, Regularizer::GroupL2 { .. }, ConstraintSet::NonNeg) => {
            AuxKind::GroupBall
        }
        _ => AuxKind::None,
    };
    // lower bound on the norm of a BPDN dual solution: some constraint is active
    let bpdn_radius = match problem.regularizer() {
        Regularizer::L1 { lambda } | Regularizer::FusedL1 { lambda, .. } => {
            let cmax = a.column_norms().into_iter().fold(0.0, f64::max);
            lambda / cmax.max(f64::MIN_POSITIVE)
        }
        Regularizer::GroupL2 { weights, .. } => partition
            .blocks()
            .iter()
            .zip(weights)
            .map(|(blk, w)| w / a.select_columns(blk).spectral_norm_sq().sqrt().max(f64::MIN_POSITIVE))
            .fold(f64::INFINITY, f64::min),
    };

    let mut pieces = Vec::with_capacity(p);
    let mut links = Vec::new();
    let mut local_nonneg = Vec::with_capacity(p);
    for (i, blk) in partition.blocks().iter().enumerate() {
        let k = blk.len();
        let mu_local = match constraint {
            ConstraintSet::DecoupledPolyhedron { blocks } => blocks[i].0.rows(),
            _ => 0,
        };
        let (v_fused, v_fused_first) = if fused_gamma.is_some() {
            let s = blk[0];
            let e = blk[k - 1];
            let lo = s.saturating_sub(1);
            let hi = e.min(n - 2);
            (hi + 1 - lo, lo)
        } else {
            (0, 0)
        };
        let layout = AgentLayout {
            m,
            mu_shared,
            mu_local,
            v_fused,
            v_fused_first,
            v_aux: if aux == AuxKind::GroupBall { k } else { 0 },
        };
        let dim = layout.dim();
        if i + 1 < p && v_fused > 0 {
            links.push((i, layout.v_fused_start() + v_fused - 1));
        }
        local_nonneg.push(if mu_local > 0 {
            vec![(layout.mu_local_start(), mu_local)]
        } else {
            vec![]
        });

        // rows of the block map u = M w, one per owned column
        let mut map = DenseMatrix::zeros(k, dim);
        for (jl, &j) in blk.iter().enumerate() {
            for r in 0..m {
                map.set(jl, r, a.get(r, j));
            }
            if let ConstraintSet::GeneralPolyhedron { c, .. } = constraint {
                for r in 0..mu_shared {
                    map.set(jl, layout.mu_shared_start() + r, c.get(r, j));
                }
            }
            if let ConstraintSet::DecoupledPolyhedron { blocks } = constraint {
                for r in 0..mu_local {
                    map.set(jl, layout.mu_local_start() + r, blocks[i].0.get(r, jl));
                }
            }
            if let Some(gamma) = fused_gamma {
                // (D^T v)_j = v_{j-1} - v_j
                if j >= 1 {
                    map.set(jl, layout.v_fused_start() + (j - 1 - v_fused_first), gamma);
                }
                if j + 1 < n {
                    map.set(jl, layout.v_fused_start() + (j - v_fused_first), -gamma);
                }
            }
            if aux == AuxKind::GroupBall {
                map.set(jl, layout.v_aux_start() + jl, 1.0);
            }
        }

        let mut linear = vec![0.0; dim];
        for r in 0..m {
            linear[r] = b[r] / pf;
        }
        match constraint {
            ConstraintSet::GeneralPolyhedron { d, .. } => {
                for r in 0..mu_shared {
                    linear[layout.mu_shared_start() + r] = d[r] / pf;
                }
            }
            ConstraintSet::DecoupledPolyhedron { blocks } => {
                for r in 0..mu_local {
                    linear[layout.mu_local_start() + r] = blocks[i].1[r];
                }
            }
            _ => {}
        }

        let mut sets = Vec::new();
        if v_fused > 0 {
            sets.push(SimpleSet::Clamp {
                start: layout.v_fused_start(),
                len: v_fused,
                lower: -1.0,
                upper: 1.0,
            });
        }
        let (smooth, lipschitz) = match regbp_alpha {
            Some(alpha) => {
                let primal = regbp_primal_map(problem, blk, i, aux)?;
                if aux == AuxKind::GroupBall {
                    sets.push(SimpleSet::Ball {
                        start: layout.v_aux_start(),
                        len: k,
                        radius: group_weights[i],
                    });
                }
                let mt = map.transpose();
                let lmax = power_iteration(dim, |v| mt.matvec(&map.matvec(v)), 1e-9, 100_000);
                (SmoothPart::Conjugate { map: map.clone(), alpha, primal }, lmax / alpha)
            }
            None => {
                lasso_like_sets(problem, &layout, &map, &group_weights, i, &mut sets);
                match problem.kind() {
                    ProblemKind::Bpdn { sigma } => (
                        SmoothPart::Norm { scale: sigma / pf },
                        sigma / (pf * bpdn_radius),
                    ),
                    _ => (SmoothPart::Quadratic { scale: 1.0 / pf }, 1.0 / pf),
                }
            }
        };
        let local = if sets.is_empty() {
            None
        } else {
            Some(ConvexIntersection::new(dim, sets))
        };
        pieces.push(DualPiece {
            agent: i,
            layout,
            linear,
            smooth,
            local,
            lipschitz,
        });
    }
    let links = links
        .into_iter()
        .map(|(i, idx)| OverlapLink {
            left: (i, idx),
            right: (i + 1, pieces[i + 1].layout.v_fused_start()),
        })
        .collect();
    let mut shared = vec![SharedBlock { offset: 0, len: m, nonneg: false }];
    if mu_shared > 0 {
        shared.push(SharedBlock { offset: m, len: mu_shared, nonneg: true });
    }
    let consensus = Consensus {
        dims: pieces.iter().map(|pc| pc.layout.dim()).collect(),
        shared,
        local_nonneg,
        links,
        mode: AveragingMode::Exact,
        mixing: None,
    };
    Ok(DualProblem {
        problem: problem.clone(),
        partition: partition.clone(),
        pieces,
        consensus,
        aux,
        group_weights,
    })
}

fn regbp_primal_map(problem: &ProblemSpec, blk: &[usize], agent: usize, aux: AuxKind) -> Result<PrimalMap> {
    let bounds: Vec<Interval> = match problem.constraint() {
        ConstraintSet::NonNeg => vec![Interval::NONNEG; blk.len()],
        ConstraintSet::Box { lower, upper } => blk
            .iter()
            .map(|&j| Interval { lower: lower[j], upper: upper[j] })
            .collect(),
        _ => vec![Interval::FREE; blk.len()],
    };
    Ok(match problem.regularizer() {
        Regularizer::L1 { lambda } | Regularizer::FusedL1 { lambda, .. } => PrimalMap::Shrink { lambda: *lambda, bounds },
        Regularizer::GroupL2 { weights, .. } => match (problem.constraint(), aux) {
            (ConstraintSet::NonNeg, _) => PrimalMap::GroupNonNeg { lambda: weights[agent] },
            (_, AuxKind::GroupBall) => PrimalMap::GroupBox { bounds },
            _ => PrimalMap::GroupFree { lambda: weights[agent] },
        },
    })
}

/// Local feasible set of the LASSO/BPDN dual copies.
fn lasso_like_sets(
    problem: &ProblemSpec,
    layout: &AgentLayout,
    map: &DenseMatrix,
    group_weights: &[f64],
    agent: usize,
    sets: &mut Vec<SimpleSet>,
) {
    let nonneg = matches!(problem.constraint(), ConstraintSet::NonNeg);
    match problem.regularizer() {
        Regularizer::L1 { lambda } | Regularizer::FusedL1 { lambda, .. } => {
            for jl in 0..map.rows() {
                sets.push(SimpleSet::Slab {
                    normal: map.row(jl).to_vec(),
                    lower: -lambda,
                    upper: if nonneg { f64::INFINITY } else { *lambda },
                });
            }
        }
        Regularizer::GroupL2 { .. } => {
            let radius = group_weights[agent];
            if nonneg {
                // A_i^T y + v >= 0, ||v|| <= lambda_i
                for jl in 0..map.rows() {
                    sets.push(SimpleSet::Slab {
                        normal: map.row(jl).to_vec(),
                        lower: 0.0,
                        upper: f64::INFINITY,
                    });
                }
                sets.push(SimpleSet::Ball {
                    start: layout.v_aux_start(),
                    len: layout.v_aux,
                    radius,
                });
            } else {
                // ||A_i^T y + C_i^T mu|| <= lambda_i over the leading (y, mu) coordinates
                let width = layout.m + layout.mu_shared;
                let mut sub = DenseMatrix::zeros(map.rows(), width);
                for r in 0..map.rows() {
                    for c in 0..width {
                        sub.set(r, c, map.get(r, c));
                    }
                }
                sets.push(SimpleSet::Elliptic(EllipticBall::new(0, sub, radius)));
            }
        }
    }
}

impl DualProblem {
    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn partition(&self) -> &ColumnPartition {
        &self.partition
    }

    /// Sum of the pieces at per-agent states.
    pub fn objective(&self, states: &[Vec<f64>]) -> f64 {
        self.pieces.iter().zip(states).map(|(pc, w)| pc.value(w)).sum()
    }

    /// Collects consensual states into global dual variables (agent 0's copy of the
    /// shared blocks is canonical).
    pub fn gather(&self, states: &[Vec<f64>], fixed_point_residual: f64, consensus_residual: f64) -> DualSolution {
        let l0 = self.pieces[0].layout;
        let y = states[0][..l0.m].to_vec();
        let mut mu = states[0][l0.mu_shared_start()..l0.mu_shared_start() + l0.mu_shared].to_vec();
        for (pc, w) in self.pieces.iter().zip(states) {
            let lay = pc.layout;
            mu.extend_from_slice(&w[lay.mu_local_start()..lay.mu_local_start() + lay.mu_local]);
        }
        let n = self.problem.n();
        let mut v = Vec::new();
        if l0.v_fused > 0 || matches!(self.problem.regularizer(), Regularizer::FusedL1 { .. }) {
            let mut acc = vec![0.0; n - 1];
            let mut cnt = vec![0usize; n - 1];
            for (pc, w) in self.pieces.iter().zip(states) {
                let lay = pc.layout;
                for t in 0..lay.v_fused {
                    acc[lay.v_fused_first + t] += w[lay.v_fused_start() + t];
                    cnt[lay.v_fused_first + t] += 1;
                }
            }
            v = acc
                .iter()
                .zip(&cnt)
                .map(|(s, &c)| (s / c.max(1) as f64).clamp(-1.0, 1.0))
                .collect();
        } else if self.aux == AuxKind::GroupBall {
            v = vec![0.0; n];
            for (i, (pc, w)) in self.pieces.iter().zip(states).enumerate() {
                let lay = pc.layout;
                let seg = &w[lay.v_aux_start()..lay.v_aux_start() + lay.v_aux];
                let seg = project(seg, &ProjectionSet::Ball2(self.group_weights[i]));
                for (&j, val) in self.partition.block(i).iter().zip(seg) {
                    v[j] = val;
                }
            }
        }
        DualSolution {
            y,
            mu,
            v,
            fixed_point_residual,
            consensus_residual,
        }
    }

    /// Inverse of [`DualProblem::gather`]: per-agent states holding local copies.
    pub fn scatter(&self, dual: &DualSolution) -> Result<Vec<Vec<f64>>> {
        let l0 = self.pieces[0].layout;
        let mu_total: usize = l0.mu_shared + self.pieces.iter().map(|pc| pc.layout.mu_local).sum::<usize>();
        if dual.y.len() != l0.m || dual.mu.len() != mu_total {
            return Err(Error::Dimension("dual solution does not match the problem".into()));
        }
        let mut mu_off = l0.mu_shared;
        let mut out = Vec::with_capacity(self.pieces.len());
        for (i, pc) in self.pieces.iter().enumerate() {
            let lay = pc.layout;
            let mut w = vec![0.0; lay.dim()];
            w[..lay.m].copy_from_slice(&dual.y);
            w[lay.mu_shared_start()..lay.mu_shared_start() + lay.mu_shared].copy_from_slice(&dual.mu[..lay.mu_shared]);
            w[lay.mu_local_start()..lay.mu_local_start() + lay.mu_local]
                .copy_from_slice(&dual.mu[mu_off..mu_off + lay.mu_local]);
            mu_off += lay.mu_local;
            if lay.v_fused > 0 {
                if dual.v.len() != self.problem.n() - 1 {
                    return Err(Error::Dimension("fused multiplier must have length N - 1".into()));
                }
                w[lay.v_fused_start()..lay.v_fused_start() + lay.v_fused]
                    .copy_from_slice(&dual.v[lay.v_fused_first..lay.v_fused_first + lay.v_fused]);
            }
            if lay.v_aux > 0 {
                if dual.v.len() != self.problem.n() {
                    return Err(Error::Dimension("group multiplier must have length N".into()));
                }
                for (t, &j) in self.partition.block(i).iter().enumerate() {
                    w[lay.v_aux_start() + t] = dual.v[j];
                }
            }
            out.push(w);
        }
        Ok(out)
    }

    /// Primal blocks from per-agent states (RegBp only).
    pub fn recover_blocks(&self, states: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.pieces
            .iter()
            .zip(states)
            .map(|(pc, w)| pc.primal_block(w).ok_or_else(|| unsupported(&self.problem, Some("recovery needs regbp"))))
            .collect()
    }
}

pub fn recover_primal(problem: &ProblemSpec, partition: &ColumnPartition, dual: &DualSolution) -> Result<Vec<Vec<f64>>> {
    if !matches!(problem.kind(), ProblemKind::RegBp { .. }) {
        return Err(unsupported(problem, Some("recovery needs regbp")));
    }
    let dp = build_dual(problem, partition)?;
    let states = dp.scatter(dual)?;
    dp.recover_blocks(&states)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Plain,
    /// Normalize the stage-2 target so that the solution has unit l1 norm, then
    /// rescale.
    Scaled,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stage2Target {
    Solve { rhs: Vec<f64>, scale: f64 },
    /// The scaling denominator vanished: the primal solution is zero.
    Zero,
}

const DEGENERATE: f64 = 1e-12;

pub fn stage2_target(problem: &ProblemSpec, y: &[f64], variant: Variant) -> Result<Stage2Target> {
    let b = problem.b();
    if y.len() != b.len() {
        return Err(Error::Dimension("dual vector length differs from b".into()));
    }
    let scale_ok = matches!(problem.regularizer(), Regularizer::L1 { .. }) && problem.constraint().is_cone();
    if variant == Variant::Scaled && !scale_ok {
        return Err(unsupported(problem, Some("scaled variant needs l1 and a cone")));
    }
    let lambda = match problem.regularizer() {
        Regularizer::L1 { lambda } => *lambda,
        _ => 1.0,
    };
    let yb: Vec<f64> = y.iter().zip(b).map(|(a, c)| a + c).collect();
    match problem.kind() {
        ProblemKind::Lasso => match variant {
            Variant::Plain => Ok(Stage2Target::Solve { rhs: yb, scale: 1.0 }),
            Variant::Scaled => {
                let den = dot(y, &yb);
                if den.abs() <= DEGENERATE * (1.0 + norm2(y) * norm2(&yb)) {
                    return Ok(Stage2Target::Zero);
                }
                Ok(Stage2Target::Solve {
                    rhs: yb.iter().map(|v| -lambda * v / den).collect(),
                    scale: -den / lambda,
                })
            }
        },
        ProblemKind::Bpdn { sigma } => {
            let ny = norm2(y);
            if ny <= DEGENERATE * (1.0 + norm2(b)) {
                return Err(Error::DegenerateDual(format!("||y*|| = {ny:e} for BPDN")));
            }
            let target: Vec<f64> = b.iter().zip(y).map(|(bi, yi)| bi + sigma * yi / ny).collect();
            match variant {
                Variant::Plain => Ok(Stage2Target::Solve { rhs: target, scale: 1.0 }),
                Variant::Scaled => {
                    let den = dot(b, y) + sigma * ny;
                    if den.abs() <= DEGENERATE * (1.0 + norm2(b) * ny) {
                        return Ok(Stage2Target::Zero);
                    }
                    Ok(Stage2Target::Solve {
                        rhs: target.iter().map(|v| -lambda * v / den).collect(),
                        scale: -den / lambda,
                    })
                }
            }
        }
        ProblemKind::RegBp { .. } => Err(unsupported(problem, Some("stage-2 target needs lasso or bpdn"))),
    }
}
