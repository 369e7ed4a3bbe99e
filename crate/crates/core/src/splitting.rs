//! Douglas-Rachford and Davis-Yin engines over per-agent dual copies.

use crate::error::{Error, Result};
use crate::linalg::{dist_inf, norm2};
use crate::network::{distributed_average, AveragingMode, MixingMatrix};
use crate::prox::{prox_numeric_projected, ConvexIntersection, DykstraState, SmoothFunction, PROX_MAX_ITER};
use rayon::prelude::*;
use std::fmt::Write as _;

/// One agent's smooth dual piece plus its local constraint set.
pub trait AgentObjective: SmoothFunction + Sync {
    /// Upper bound on the Lipschitz constant of the gradient.
    fn lipschitz(&self) -> f64;
    /// `None` means no local constraint.
    fn local_set(&self) -> Option<&ConvexIntersection>;
}

/// Coordinates copied across all agents at the same offset.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedBlock {
    pub offset: usize,
    pub len: usize,
    pub nonneg: bool,
}

/// Two coordinates (agent, index) that must agree between neighbours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapLink {
    pub left: (usize, usize),
    pub right: (usize, usize),
}

/// The consensus set: shared blocks are averaged (then clipped when `nonneg`),
/// local nonneg ranges are clipped, and overlap links are averaged pairwise.
#[derive(Debug, Clone)]
pub struct Consensus {
    pub dims: Vec<usize>,
    pub shared: Vec<SharedBlock>,
    pub local_nonneg: Vec<Vec<(usize, usize)>>,
    pub links: Vec<OverlapLink>,
    pub mode: AveragingMode,
    pub mixing: Option<MixingMatrix>,
}

impl Consensus {
    pub fn agents(&self) -> usize {
        self.dims.len()
    }

    pub fn with_averaging(mut self, mode: AveragingMode, mixing: Option<MixingMatrix>) -> Self {
        self.mode = mode;
        self.mixing = mixing;
        self
    }

    pub fn project(&self, z: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut out = z.to_vec();
        if !self.shared.is_empty() {
            let packed: Vec<Vec<f64>> = z
                .iter()
                .map(|zi| {
                    self.shared
                        .iter()
                        .flat_map(|s| zi[s.offset..s.offset + s.len].iter().cloned())
                        .collect()
                })
                .collect();
            let avg = distributed_average(&packed, self.mixing.as_ref(), self.mode);
            for (oi, ai) in out.iter_mut().zip(&avg) {
                let mut k = 0;
                for s in &self.shared {
                    for t in 0..s.len {
                        let v = ai[k];
                        oi[s.offset + t] = if s.nonneg { v.max(0.0) } else { v };
                        k += 1;
                    }
                }
            }
        }
        for (oi, ranges) in out.iter_mut().zip(&self.local_nonneg) {
            for &(off, len) in ranges {
                oi[off..off + len].iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        for link in &self.links {
            let a = z[link.left.0][link.left.1];
            let b = z[link.right.0][link.right.1];
            let m = 0.5 * (a + b);
            out[link.left.0][link.left.1] = m;
            out[link.right.0][link.right.1] = m;
        }
        out
    }

    /// Largest disagreement among copies that should coincide.
    pub fn residual(&self, w: &[Vec<f64>]) -> f64 {
        let mut worst: f64 = 0.0;
        for s in &self.shared {
            let rows: Vec<Vec<f64>> = w.iter().map(|wi| wi[s.offset..s.offset + s.len].to_vec()).collect();
            let m = crate::network::mean(&rows);
            for r in &rows {
                worst = worst.max(dist_inf(r, &m));
            }
        }
        for link in &self.links {
            worst = worst.max((w[link.left.0][link.left.1] - w[link.right.0][link.right.1]).abs());
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    DouglasRachford,
    DavisYin,
}

impl Engine {
    pub fn name(&self) -> &'static str {
        match self {
            Engine::DouglasRachford => "douglas-rachford",
            Engine::DavisYin => "davis-yin",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeParams {
    pub engine: Engine,
    /// D-R relaxation in (0, 1) or D-Y gradient step; `None` picks the default.
    pub eta: Option<f64>,
    /// D-R prox weight; `None` means `step_scale / L`.
    pub rho: Option<f64>,
    /// Default step as a multiple of `1 / L` (D-Y gradient step, D-R prox weight).
    pub step_scale: f64,
    pub lambda_relax: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Inner projection / prox tolerance; `None` means `tol * step / 100`.
    pub inner_tol: Option<f64>,
    pub parallel: bool,
}

impl Default for SchemeParams {
    fn default() -> Self {
        Self {
            engine: Engine::DavisYin,
            eta: None,
            rho: None,
            step_scale: 1.0,
            lambda_relax: 1.0,
            max_iter: 200_000,
            tol: 1e-6,
            inner_tol: None,
            parallel: false,
        }
    }
}

impl SchemeParams {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub fixed_point_residual: f64,
    pub consensus_residual: f64,
    pub dual_objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub engine: Engine,
    pub step: f64,
    pub iterations: usize,
    pub converged: bool,
    pub fixed_point_residual: f64,
    pub consensus_residual: f64,
    pub dual_objective: f64,
    /// Inner projections or proxes that hit their cap.
    pub inner_failures: usize,
    pub history: Vec<IterationRecord>,
}

impl SolveReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,fixed_point_residual,consensus_residual,dual_objective\n");
        for r in &self.history {
            let _ = writeln!(
                s,
                "{},{:e},{:e},{:.17e}",
                r.iter, r.fixed_point_residual, r.consensus_residual, r.dual_objective
            );
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct EngineOutput {
    /// States after the final consensus projection.
    pub consensus_states: Vec<Vec<f64>>,
    /// Last local-step states (`w_hat` for D-Y, prox outputs for D-R).
    pub local_states: Vec<Vec<f64>>,
    pub report: SolveReport,
}

/// Largest per-agent constant: the product-space gradient is block diagonal.
pub fn lipschitz_estimate<P: AgentObjective>(pieces: &[P]) -> f64 {
    pieces.iter().map(|p| p.lipschitz()).fold(0.0, f64::max)
}

/// Largest eigenvalue of a symmetric PSD operator, inflated by 1% so the result is
/// an upper bound once the iteration has settled to `tol`.
pub fn power_iteration<F: Fn(&[f64]) -> Vec<f64>>(dim: usize, apply: F, tol: f64, max_iter: usize) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    // deterministic start with all-nonzero components
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0).collect();
    let n = norm2(&v);
    v.iter_mut().for_each(|x| *x /= n);
    let mut est = 0.0;
    for _ in 0..max_iter {
        let w = apply(&v);
        let nw = norm2(&w);
        if nw == 0.0 {
            return 0.0;
        }
        let next = nw;
        v = w.iter().map(|x| x / nw).collect();
        if (next - est).abs() <= tol * next {
            est = next;
            break;
        }
        est = next;
    }
    est * 1.01
}

fn check_init(consensus: &Consensus, init: Option<&[Vec<f64>]>) -> Result<Vec<Vec<f64>>> {
    match init {
        None => Ok(consensus.dims.iter().map(|&d| vec![0.0; d]).collect()),
        Some(z) => {
            if z.len() != consensus.agents() || z.iter().zip(&consensus.dims).any(|(v, &d)| v.len() != d) {
                return Err(Error::Dimension("initial state does not match the consensus layout".into()));
            }
            Ok(z.to_vec())
        }
    }
}

fn check_pieces<P: AgentObjective>(pieces: &[P], consensus: &Consensus) -> Result<()> {
    if pieces.len() != consensus.agents() || pieces.iter().zip(&consensus.dims).any(|(p, &d)| p.dim() != d) {
        return Err(Error::Dimension("pieces do not match the consensus layout".into()));
    }
    Ok(())
}

struct Tracker {
    history: Vec<IterationRecord>,
    tol: f64,
}

enum Verdict {
    Continue,
    Converged,
}

impl Tracker {
    fn push(&mut self, rec: IterationRecord) -> Result<Verdict> {
        self.history.push(rec);
        if !rec.dual_objective.is_finite() || !rec.fixed_point_residual.is_finite() {
            return Err(Error::NonConvergence {
                iterations: rec.iter,
                fixed_point: rec.fixed_point_residual,
                consensus: rec.consensus_residual,
            });
        }
        if rec.dual_objective < -1.0 / self.tol {
            return Err(Error::Infeasible {
                iterations: rec.iter,
                objective: rec.dual_objective,
            });
        }
        if rec.fixed_point_residual.max(rec.consensus_residual) <= self.tol {
            return Ok(Verdict::Converged);
        }
        Ok(Verdict::Continue)
    }
}

fn map_agents<T: Send, S: Send, F>(parallel: bool, states: &mut [S], f: F) -> Vec<T>
where
    F: Fn(usize, &mut S) -> T + Sync + Send,
{
    if parallel {
        states.par_iter_mut().enumerate().map(|(i, s)| f(i, s)).collect()
    } else {
        states.iter_mut().enumerate().map(|(i, s)| f(i, s)).collect()
    }
}

/// Three-operator splitting:
/// `w~ = P_cons(z)`, `w^ = P_local(2w~ - z - eta grad J(w~))`, `z += lambda (w^ - w~)`.
pub fn davis_yin_run<P: AgentObjective>(
    pieces: &[P],
    consensus: &Consensus,
    params: &SchemeParams,
    init: Option<&[Vec<f64>]>,
) -> Result<EngineOutput> {
    check_pieces(pieces, consensus)?;
    let lip = lipschitz_estimate(pieces);
    let eta = match params.eta {
        Some(e) => e,
        None if lip > 0.0 => params.step_scale / lip,
        None => 1.0,
    };
    if !(eta > 0.0) || (lip > 0.0 && eta >= 2.0 / lip) {
        return Err(Error::StepSizeRejected(format!(
            "eta = {eta} must lie in (0, 2/L) with L = {lip}"
        )));
    }
    let relax_cap = 2.0 - eta * lip / 2.0;
    if !(params.lambda_relax > 0.0 && params.lambda_relax < relax_cap) {
        return Err(Error::StepSizeRejected(format!(
            "relaxation {} must lie in (0, {relax_cap})",
            params.lambda_relax
        )));
    }
    let inner_tol = params.inner_tol.unwrap_or(params.tol * eta / 100.0);
    let mut z = check_init(consensus, init)?;
    let p = pieces.len();
    let mut dyk: Vec<DykstraState> = pieces
        .iter()
        .map(|pc| pc.local_set().map(|s| s.new_state()).unwrap_or_default())
        .collect();
    let mut tracker = Tracker {
        history: Vec::new(),
        tol: params.tol,
    };
    let mut local = z.clone();
    let mut inner_failures = 0;
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=params.max_iter {
        iterations = k;
        let wt = consensus.project(&z);
        let results = map_agents(params.parallel, &mut dyk, |i, st| {
            let piece = &pieces[i];
            let g = piece.gradient(&wt[i]);
            let trial: Vec<f64> = (0..wt[i].len())
                .map(|t| 2.0 * wt[i][t] - z[i][t] - eta * g[t])
                .collect();
            let (wh, ok) = match piece.local_set() {
                Some(set) => set.project_lenient(&trial, st, inner_tol, set.default_sweep_cap()),
                None => (trial, true),
            };
            let step = dist_inf(&wh, &wt[i]);
            (wh, ok, step, piece.value(&wt[i]))
        });
        let mut fp: f64 = 0.0;
        let mut obj = 0.0;
        for (i, (wh, ok, step, val)) in results.into_iter().enumerate() {
            for t in 0..wh.len() {
                z[i][t] += params.lambda_relax * (wh[t] - wt[i][t]);
            }
            fp = fp.max(step);
            obj += val;
            inner_failures += usize::from(!ok);
            local[i] = wh;
        }
        let rec = IterationRecord {
            iter: k,
            fixed_point_residual: fp / eta,
            consensus_residual: consensus.residual(&wt),
            dual_objective: obj,
        };
        if let Verdict::Converged = tracker.push(rec)? {
            converged = true;
            break;
        }
    }
    finish(Engine::DavisYin, eta, consensus, z, local, tracker, iterations, converged, inner_failures, p)
}

/// Consensus Douglas-Rachford:
/// `w = P_cons(z)`, `z_i += 2 eta (prox_{rho J_i + i_{W_i}}(2 w_i - z_i) - w_i)`.
pub fn douglas_rachford_run<P: AgentObjective>(
    pieces: &[P],
    consensus: &Consensus,
    params: &SchemeParams,
    init: Option<&[Vec<f64>]>,
) -> Result<EngineOutput> {
    check_pieces(pieces, consensus)?;
    let eta = params.eta.unwrap_or(0.9);
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::StepSizeRejected(format!("D-R eta = {eta} must lie in (0, 1)")));
    }
    let lip = lipschitz_estimate(pieces);
    let rho = params.rho.unwrap_or(if lip > 0.0 { params.step_scale / lip } else { 1.0 });
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::StepSizeRejected(format!("D-R rho = {rho} must be positive")));
    }
    let inner_tol = params.inner_tol.unwrap_or(params.tol * rho / 100.0);
    let mut z = check_init(consensus, init)?;
    let p = pieces.len();
    struct Warm {
        dyk: DykstraState,
        prox: Vec<f64>,
    }
    let mut warm: Vec<Warm> = pieces
        .iter()
        .map(|pc| Warm {
            dyk: pc.local_set().map(|s| s.new_state()).unwrap_or_default(),
            prox: vec![0.0; pc.dim()],
        })
        .collect();
    let mut tracker = Tracker {
        history: Vec::new(),
        tol: params.tol,
    };
    let mut inner_failures = 0;
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=params.max_iter {
        iterations = k;
        let w = consensus.project(&z);
        let results = map_agents(params.parallel, &mut warm, |i, st| {
            let piece = &pieces[i];
            let v: Vec<f64> = w[i].iter().zip(&z[i]).map(|(a, b)| 2.0 * a - b).collect();
            let Warm { dyk, prox } = st;
            let outcome = match piece.local_set() {
                Some(set) => {
                    let cap = set.default_sweep_cap();
                    prox_numeric_projected(
                        piece,
                        rho,
                        &v,
                        prox,
                        |x| Ok(set.project_lenient(x, dyk, inner_tol, cap).0),
                        inner_tol,
                        PROX_MAX_ITER,
                    )
                }
                None => prox_numeric_projected(piece, rho, &v, prox, |x| Ok(x.to_vec()), inner_tol, PROX_MAX_ITER),
            }
            .expect("lenient projections do not fail");
            *prox = outcome.point.clone();
            let step = dist_inf(&outcome.point, &w[i]);
            (outcome.point, outcome.converged, step, piece.value(&w[i]))
        });
        let mut fp: f64 = 0.0;
        let mut obj = 0.0;
        for (i, (pr, ok, step, val)) in results.into_iter().enumerate() {
            for t in 0..pr.len() {
                z[i][t] += 2.0 * eta * (pr[t] - w[i][t]);
            }
            fp = fp.max(step);
            obj += val;
            inner_failures += usize::from(!ok);
        }
        let rec = IterationRecord {
            iter: k,
            fixed_point_residual: fp / rho,
            consensus_residual: consensus.residual(&w),
            dual_objective: obj,
        };
        if let Verdict::Converged = tracker.push(rec)? {
            converged = true;
            break;
        }
    }
    let local = warm.into_iter().map(|w| w.prox).collect();
    finish(Engine::DouglasRachford, rho, consensus, z, local, tracker, iterations, converged, inner_failures, p)
}

/// Dispatches on `params.engine`.
pub fn run_engine<P: AgentObjective>(
    pieces: &[P],
    consensus: &Consensus,
    params: &SchemeParams,
    init: Option<&[Vec<f64>]>,
) -> Result<EngineOutput> {
    match params.engine {
        Engine::DavisYin => davis_yin_run(pieces, consensus, params, init),
        Engine::DouglasRachford => douglas_rachford_run(pieces, consensus, params, init),
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    engine: Engine,
    step: f64,
    consensus: &Consensus,
    z: Vec<Vec<f64>>,
    local: Vec<Vec<f64>>,
    tracker: Tracker,
    iterations: usize,
    converged: bool,
    inner_failures: usize,
    _p: usize,
) -> Result<EngineOutput> {
    let last = tracker.history.last().copied();
    if !converged {
        let last = last.unwrap_or(IterationRecord {
            iter: 0,
            fixed_point_residual: f64::INFINITY,
            consensus_residual: f64::INFINITY,
            dual_objective: f64::NAN,
        });
        return Err(Error::NonConvergence {
            iterations,
            fixed_point: last.fixed_point_residual,
            consensus: last.consensus_residual,
        });
    }
    let last = last.expect("converged runs record at least one iteration");
    let consensus_states = consensus.project(&z);
    Ok(EngineOutput {
        consensus_states,
        local_states: local,
        report: SolveReport {
            engine,
            step,
            iterations,
            converged,
            fixed_point_residual: last.fixed_point_residual,
            consensus_residual: last.consensus_residual,
            dual_objective: last.dual_objective,
            inner_failures,
            history: tracker.history,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dot;
    use crate::network::{build_topology, mixing_weight, TopologyKind};

    /// `1/2 ||w - c||^2`
    struct Quadratic {
        center: Vec<f64>,
        set: Option<ConvexIntersection>,
    }

    impl SmoothFunction for Quadratic {
        fn dim(&self) -> usize {
            self.center.len()
        }
        fn value(&self, w: &[f64]) -> f64 {
            0.5 * w.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        }
        fn gradient(&self, w: &[f64]) -> Vec<f64> {
            w.iter().zip(&self.center).map(|(a, b)| a - b).collect()
        }
    }

    impl AgentObjective for Quadratic {
        fn lipschitz(&self) -> f64 {
            1.0
        }
        fn local_set(&self) -> Option<&ConvexIntersection> {
            self.set.as_ref()
        }
    }

    fn shared(p: usize, dim: usize) -> Consensus {
        Consensus {
            dims: vec![dim; p],
            shared: vec![SharedBlock { offset: 0, len: dim, nonneg: false }],
            local_nonneg: vec![vec![]; p],
            links: vec![],
            mode: AveragingMode::Exact,
            mixing: None,
        }
    }

    fn quad(c: &[f64]) -> Quadratic {
        Quadratic { center: c.to_vec(), set: None }
    }

    #[test]
    fn single_agent_quadratic() {
        let pieces = vec![quad(&[1.0, 2.0])];
        let params = SchemeParams::default().with_tol(1e-10);
        for engine in [Engine::DouglasRachford, Engine::DavisYin] {
            let out = run_engine(&pieces, &shared(1, 2), &params.clone().with_engine(engine), None).unwrap();
            assert!(dist_inf(&out.consensus_states[0], &[1.0, 2.0]) < 1e-8, "{engine:?}");
        }
    }

    #[test]
    fn two_agents_average_centers() {
        let pieces = vec![quad(&[0.0]), quad(&[2.0])];
        let params = SchemeParams::default().with_tol(1e-10);
        for engine in [Engine::DouglasRachford, Engine::DavisYin] {
            let out = run_engine(&pieces, &shared(2, 1), &params.clone().with_engine(engine), None).unwrap();
            for s in &out.consensus_states {
                assert!((s[0] - 1.0).abs() < 1e-8);
            }
        }
    }

    struct Flat(usize);
    impl SmoothFunction for Flat {
        fn dim(&self) -> usize {
            self.0
        }
        fn value(&self, _: &[f64]) -> f64 {
            0.0
        }
        fn gradient(&self, _: &[f64]) -> Vec<f64> {
            vec![0.0; self.0]
        }
    }
    impl AgentObjective for Flat {
        fn lipschitz(&self) -> f64 {
            0.0
        }
        fn local_set(&self) -> Option<&ConvexIntersection> {
            None
        }
    }

    #[test]
    fn zero_gradient_identity_projections_stop_immediately() {
        let c = Consensus {
            dims: vec![2, 2],
            shared: vec![],
            local_nonneg: vec![vec![], vec![]],
            links: vec![],
            mode: AveragingMode::Exact,
            mixing: None,
        };
        let init = vec![vec![1.0, -1.0], vec![3.0, 0.5]];
        let out = davis_yin_run(&[Flat(2), Flat(2)], &c, &SchemeParams::default(), Some(&init)).unwrap();
        assert_eq!(out.report.iterations, 1);
        assert_eq!(out.consensus_states, init);
    }

    #[test]
    fn nonneg_shared_block_and_local_ball() {
        // min 1/2 (w - c)^2 per agent, shared and clipped at 0: centers -3, 1 -> w = 0
        let mut c = shared(2, 1);
        c.shared[0].nonneg = true;
        let pieces = vec![quad(&[-3.0]), quad(&[1.0])];
        let out = davis_yin_run(&pieces, &c, &SchemeParams::default().with_tol(1e-10), None).unwrap();
        assert!(out.consensus_states[0][0].abs() < 1e-8);
        // local ball of radius 0.5 around the shared copy: centers 2 and 2 -> 0.5
        let ball = ConvexIntersection::new(1, vec![crate::prox::SimpleSet::Ball { start: 0, len: 1, radius: 0.5 }]);
        let pieces = vec![
            Quadratic { center: vec![2.0], set: Some(ball.clone()) },
            Quadratic { center: vec![2.0], set: Some(ball) },
        ];
        for engine in [Engine::DavisYin, Engine::DouglasRachford] {
            let params = SchemeParams::default().with_tol(1e-10).with_engine(engine);
            let out = run_engine(&pieces, &shared(2, 1), &params, None).unwrap();
            assert!((out.consensus_states[0][0] - 0.5).abs() < 1e-7, "{engine:?}");
        }
    }

    #[test]
    fn overlap_links_average() {
        let c = Consensus {
            dims: vec![1, 1],
            shared: vec![],
            local_nonneg: vec![vec![], vec![]],
            links: vec![OverlapLink { left: (0, 0), right: (1, 0) }],
            mode: AveragingMode::Exact,
            mixing: None,
        };
        let out = davis_yin_run(&[quad(&[0.0]), quad(&[4.0])], &c, &SchemeParams::default().with_tol(1e-10), None).unwrap();
        assert!((out.consensus_states[0][0] - 2.0).abs() < 1e-8);
        assert!((out.consensus_states[1][0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn step_rejection() {
        let params = SchemeParams {
            eta: Some(2.5),
            ..SchemeParams::default()
        };
        assert!(matches!(
            davis_yin_run(&[quad(&[1.0])], &shared(1, 1), &params, None),
            Err(Error::StepSizeRejected(_))
        ));
        let params = SchemeParams {
            lambda_relax: 1.6,
            ..SchemeParams::default()
        };
        assert!(davis_yin_run(&[quad(&[1.0])], &shared(1, 1), &params, None).is_err());
        let params = SchemeParams {
            eta: Some(1.0),
            engine: Engine::DouglasRachford,
            ..SchemeParams::default()
        };
        assert!(douglas_rachford_run(&[quad(&[1.0])], &shared(1, 1), &params, None).is_err());
    }

    #[test]
    fn nonconvergence_reported() {
        let params = SchemeParams {
            eta: Some(0.5),
            ..SchemeParams::default().with_max_iter(2).with_tol(1e-14)
        };
        let r = davis_yin_run(&[quad(&[0.0]), quad(&[5.0])], &shared(2, 1), &params, None);
        assert!(matches!(r, Err(Error::NonConvergence { iterations: 2, .. })));
    }

    #[test]
    fn gossip_consensus_and_determinism() {
        let t = build_topology(TopologyKind::Cycle, 6).unwrap();
        let mix = mixing_weight(&t);
        let rounds = mix.rounds_for(1e-12);
        let c = shared(6, 2).with_averaging(AveragingMode::Gossip { rounds }, Some(mix));
        let pieces: Vec<Quadratic> = (0..6).map(|i| quad(&[i as f64, -(i as f64)])).collect();
        let params = SchemeParams::default().with_tol(1e-8);
        let a = davis_yin_run(&pieces, &c, &params, None).unwrap();
        for s in &a.consensus_states {
            assert!((s[0] - 2.5).abs() < 1e-6 && (s[1] + 2.5).abs() < 1e-6);
        }
        let par = SchemeParams { parallel: true, ..params.clone() };
        let b = davis_yin_run(&pieces, &c, &par, None).unwrap();
        assert_eq!(a.report, b.report);
        assert_eq!(a.consensus_states, b.consensus_states);
    }

    #[test]
    fn power_iteration_matches_dense() {
        let a = crate::linalg::DenseMatrix::from_rows(&[vec![2.0, 1.0, 0.0], vec![1.0, 3.0, 1.0], vec![0.0, 1.0, 4.0]]).unwrap();
        let est = power_iteration(3, |v| a.matvec(v), 1e-10, 10_000);
        let exact = a.spectral_norm_sq().sqrt();
        assert!(est >= exact && est <= 1.05 * exact);
        let _ = dot(&[1.0], &[1.0]);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let out = davis_yin_run(&[quad(&[1.0])], &shared(1, 1), &SchemeParams::default(), None).unwrap();
        let csv = out.report.to_csv();
        assert!(csv.starts_with("iter,fixed_point_residual,consensus_residual,dual_objective\n"));
        assert_eq!(csv.lines().count(), out.report.history.len() + 1);
    }
}
