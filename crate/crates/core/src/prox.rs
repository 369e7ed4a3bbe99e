//! Shrinkage kernels, envelope functions and Euclidean projections used by the duals.

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, DenseMatrix};

/// Scalar soft threshold with the closed branches `|s| <= kappa -> 0`.
#[inline]
pub fn soft_threshold(s: f64, kappa: f64) -> f64 {
    if s >= kappa {
        s - kappa
    } else if s <= -kappa {
        s + kappa
    } else {
        0.0
    }
}

pub fn soft_threshold_vec(v: &[f64], kappa: f64) -> Vec<f64> {
    v.iter().map(|&s| soft_threshold(s, kappa)).collect()
}

/// Block shrinkage with unit radius: `(1 - 1/||z||)_+ z`.
pub fn group_shrink(z: &[f64]) -> Vec<f64> {
    group_shrink_by(z, 1.0)
}

/// Block shrinkage with radius `kappa`: `(1 - kappa/||z||)_+ z`.
pub fn group_shrink_by(z: &[f64], kappa: f64) -> Vec<f64> {
    let nz = norm2(z);
    if nz <= kappa {
        return vec![0.0; z.len()];
    }
    let f = 1.0 - kappa / nz;
    z.iter().map(|v| f * v).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub const FREE: Interval = Interval {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };
    pub const NONNEG: Interval = Interval {
        lower: 0.0,
        upper: f64::INFINITY,
    };

    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if lower.is_nan() || upper.is_nan() || lower > 0.0 || upper < 0.0 || lower >= upper {
            return Err(Error::InvalidProblem(format!(
                "interval [{lower}, {upper}] must contain 0 and be nondegenerate"
            )));
        }
        Ok(Self { lower, upper })
    }

    #[inline]
    pub fn clamp(&self, t: f64) -> f64 {
        t.max(self.lower).min(self.upper)
    }
}

/// `t^2 - dist(t, [l, u])^2`
#[inline]
pub fn theta(t: f64, iv: Interval) -> f64 {
    let d = t - iv.clamp(t);
    t * t - d * d
}

#[inline]
pub fn theta_grad(t: f64, iv: Interval) -> f64 {
    2.0 * iv.clamp(t)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionSet {
    Box(Vec<Interval>),
    BallInf(f64),
    Ball2(f64),
    NonNeg,
}

pub fn project(z: &[f64], set: &ProjectionSet) -> Vec<f64> {
    match set {
        ProjectionSet::Box(ivs) => {
            assert_eq!(ivs.len(), z.len(), "box dimension");
            z.iter().zip(ivs).map(|(&v, iv)| iv.clamp(v)).collect()
        }
        ProjectionSet::BallInf(r) => z.iter().map(|&v| v.max(-r).min(*r)).collect(),
        ProjectionSet::Ball2(r) => {
            let nz = norm2(z);
            if nz <= *r {
                z.to_vec()
            } else {
                z.iter().map(|v| v * r / nz).collect()
            }
        }
        ProjectionSet::NonNeg => z.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// `{w : ||M w_R|| <= r}` on a coordinate range `R`, with `M^T M` diagonalized once.
#[derive(Debug, Clone)]
pub struct EllipticBall {
    start: usize,
    len: usize,
    map: DenseMatrix,
    radius: f64,
    basis: DenseMatrix,
    eigenvalues: Vec<f64>,
}

impl EllipticBall {
    pub fn new(start: usize, map: DenseMatrix, radius: f64) -> Self {
        let len = map.cols();
        let gram = map.transpose().gram_rows();
        let eig = nalgebra::SymmetricEigen::new(gram.to_nalgebra());
        let mut basis = DenseMatrix::zeros(len, len);
        for i in 0..len {
            for j in 0..len {
                basis.set(i, j, eig.eigenvectors[(i, j)]);
            }
        }
        let eigenvalues = eig.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
        Self {
            start,
            len,
            map,
            radius,
            basis,
            eigenvalues,
        }
    }

    pub fn contains(&self, w: &[f64], slack: f64) -> bool {
        norm2(&self.map.matvec(&w[self.start..self.start + self.len])) <= self.radius + slack
    }

    fn project_range(&self, x: &mut [f64]) {
        let r2 = self.radius * self.radius;
        let c = self.basis.tmatvec(x);
        let h = |nu: f64| -> (f64, f64) {
            let mut v = 0.0;
            let mut dv = 0.0;
            for (&l, &ci) in self.eigenvalues.iter().zip(&c) {
                let q = 1.0 + nu * l;
                v += l * ci * ci / (q * q);
                dv -= 2.0 * l * l * ci * ci / (q * q * q);
            }
            (v, dv)
        };
        let (h0, _) = h(0.0);
        if h0 <= r2 {
            return;
        }
        // Newton on 1/sqrt(h) - 1/r, which is close to linear in nu.
        let mut nu = 0.0;
        for _ in 0..200 {
            let (v, dv) = h(nu);
            if v <= r2 * (1.0 + 1e-15) {
                break;
            }
            let phi = 1.0 / v.sqrt() - 1.0 / self.radius;
            let dphi = -0.5 * dv / (v * v.sqrt());
            let step = -phi / dphi;
            if !step.is_finite() || step.abs() <= 1e-17 * (1.0 + nu) {
                break;
            }
            nu += step;
        }
        let scaled: Vec<f64> = c
            .iter()
            .zip(&self.eigenvalues)
            .map(|(ci, l)| ci / (1.0 + nu * l))
            .collect();
        x.copy_from_slice(&self.basis.matvec(&scaled));
    }
}

/// Building blocks for per-agent local constraint sets.
#[derive(Debug, Clone)]
pub enum SimpleSet {
    /// `lower <= a^T w <= upper` (either side may be infinite).
    Slab { normal: Vec<f64>, lower: f64, upper: f64 },
    /// Coordinatewise bounds on `w[start..start + len]`.
    Clamp { start: usize, len: usize, lower: f64, upper: f64 },
    /// `||w[start..start + len]|| <= radius`
    Ball { start: usize, len: usize, radius: f64 },
    Elliptic(EllipticBall),
}

impl SimpleSet {
    fn correction_len(&self) -> usize {
        match self {
            SimpleSet::Slab { .. } => 1,
            SimpleSet::Clamp { len, .. } | SimpleSet::Ball { len, .. } => *len,
            SimpleSet::Elliptic(e) => e.len,
        }
    }

    fn violation(&self, w: &[f64]) -> f64 {
        match self {
            SimpleSet::Slab { normal, lower, upper } => {
                let s = dot(normal, w);
                (lower - s).max(s - upper).max(0.0)
            }
            SimpleSet::Clamp { start, len, lower, upper } => w[*start..start + len]
                .iter()
                .fold(0.0, |m, &v| m.max(lower - v).max(v - upper)),
            SimpleSet::Ball { start, len, radius } => (norm2(&w[*start..start + len]) - radius).max(0.0),
            SimpleSet::Elliptic(e) => {
                (norm2(&e.map.matvec(&w[e.start..e.start + e.len])) - e.radius).max(0.0)
            }
        }
    }
}

/// Intersection of simple sets, projected by Dykstra's method. Dual corrections
/// live in a separate [`DykstraState`] so repeated projections can warm start.
#[derive(Debug, Clone)]
pub struct ConvexIntersection {
    dim: usize,
    sets: Vec<SimpleSet>,
    norms_sq: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct DykstraState {
    corrections: Vec<Vec<f64>>,
    pub last_sweeps: usize,
}

impl ConvexIntersection {
    pub fn new(dim: usize, sets: Vec<SimpleSet>) -> Self {
        let norms_sq = sets
            .iter()
            .map(|s| match s {
                SimpleSet::Slab { normal, .. } => {
                    assert_eq!(normal.len(), dim, "slab normal dimension");
                    dot(normal, normal)
                }
                _ => 0.0,
            })
            .collect();
        Self { dim, sets, norms_sq }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sets(&self) -> &[SimpleSet] {
        &self.sets
    }

    pub fn violation(&self, w: &[f64]) -> f64 {
        self.sets.iter().fold(0.0, |m, s| m.max(s.violation(w)))
    }

    pub fn new_state(&self) -> DykstraState {
        DykstraState {
            corrections: self.sets.iter().map(|s| vec![0.0; s.correction_len()]).collect(),
            last_sweeps: 0,
        }
    }

    /// `10 * sets * dim`, floored at 20000 sweeps: Dykstra is linear-rate and slow
    /// on nearly parallel faces.
    pub fn default_sweep_cap(&self) -> usize {
        (10 * self.sets.len().max(1) * self.dim.max(1)).max(20_000)
    }

    /// Projects `z`; stops once no correction moves by more than `tol` in a sweep.
    pub fn project(&self, z: &[f64], state: &mut DykstraState, tol: f64, max_sweeps: usize) -> Result<Vec<f64>> {
        let (x, converged) = self.project_lenient(z, state, tol, max_sweeps);
        if converged {
            Ok(x)
        } else {
            Err(Error::NonConvergence {
                iterations: max_sweeps,
                fixed_point: self.violation(&x),
                consensus: 0.0,
            })
        }
    }

    /// Like [`ConvexIntersection::project`] but returns the last iterate and a
    /// convergence flag instead of failing.
    pub fn project_lenient(&self, z: &[f64], state: &mut DykstraState, tol: f64, max_sweeps: usize) -> (Vec<f64>, bool) {
        assert_eq!(z.len(), self.dim, "projection dimension");
        if state.corrections.len() != self.sets.len() {
            *state = self.new_state();
        }
        if self.sets.len() == 1 {
            let mut x = z.to_vec();
            let mut q = vec![0.0; self.sets[0].correction_len()];
            self.apply(0, &mut x, &mut q);
            state.last_sweeps = 1;
            return (x, true);
        }
        let mut x = z.to_vec();
        for (k, q) in state.corrections.iter().enumerate() {
            self.subtract_correction(k, q, &mut x);
        }
        for sweep in 1..=max_sweeps {
            let mut delta: f64 = 0.0;
            for k in 0..self.sets.len() {
                let q = &mut state.corrections[k];
                delta = delta.max(self.apply(k, &mut x, q));
            }
            if delta <= tol {
                state.last_sweeps = sweep;
                return (x, true);
            }
        }
        state.last_sweeps = max_sweeps;
        (x, false)
    }

    fn subtract_correction(&self, k: usize, q: &[f64], x: &mut [f64]) {
        match &self.sets[k] {
            SimpleSet::Slab { normal, .. } => {
                for (xi, a) in x.iter_mut().zip(normal) {
                    *xi -= q[0] * a;
                }
            }
            SimpleSet::Clamp { start, .. } | SimpleSet::Ball { start, .. } => {
                for (xi, qi) in x[*start..].iter_mut().zip(q) {
                    *xi -= qi;
                }
            }
            SimpleSet::Elliptic(e) => {
                for (xi, qi) in x[e.start..].iter_mut().zip(q) {
                    *xi -= qi;
                }
            }
        }
    }

    /// One Dykstra block step for set `k`; returns the correction change (inf-norm in `w` units).
    fn apply(&self, k: usize, x: &mut [f64], q: &mut [f64]) -> f64 {
        match &self.sets[k] {
            SimpleSet::Slab { normal, lower, upper } => {
                let nsq = self.norms_sq[k];
                if nsq == 0.0 {
                    return 0.0;
                }
                // x' = x + t a, then project onto the slab
                let s = dot(normal, x) + q[0] * nsq;
                let t_new = if s > *upper {
                    (s - upper) / nsq
                } else if s < *lower {
                    (s - lower) / nsq
                } else {
                    0.0
                };
                let dt = t_new - q[0];
                for (xi, a) in x.iter_mut().zip(normal) {
                    *xi -= dt * a;
                }
                q[0] = t_new;
                dt.abs() * nsq.sqrt()
            }
            SimpleSet::Clamp { start, len, lower, upper } => {
                let mut delta: f64 = 0.0;
                for (xi, qi) in x[*start..start + len].iter_mut().zip(q.iter_mut()) {
                    let shifted = *xi + *qi;
                    let p = shifted.max(*lower).min(*upper);
                    let qn = shifted - p;
                    delta = delta.max((qn - *qi).abs());
                    *qi = qn;
                    *xi = p;
                }
                delta
            }
            SimpleSet::Ball { start, len, radius } => {
                let seg = &mut x[*start..start + len];
                let shifted: Vec<f64> = seg.iter().zip(q.iter()).map(|(a, b)| a + b).collect();
                let p = project(&shifted, &ProjectionSet::Ball2(*radius));
                Self::finish_block(seg, q, &shifted, &p)
            }
            SimpleSet::Elliptic(e) => {
                let seg = &mut x[e.start..e.start + e.len];
                let shifted: Vec<f64> = seg.iter().zip(q.iter()).map(|(a, b)| a + b).collect();
                let mut p = shifted.clone();
                e.project_range(&mut p);
                Self::finish_block(seg, q, &shifted, &p)
            }
        }
    }

    fn finish_block(seg: &mut [f64], q: &mut [f64], shifted: &[f64], p: &[f64]) -> f64 {
        let mut delta: f64 = 0.0;
        for i in 0..seg.len() {
            let qn = shifted[i] - p[i];
            delta = delta.max((qn - q[i]).abs());
            q[i] = qn;
            seg[i] = p[i];
        }
        delta
    }
}

/// Euclidean projection onto `{x : C x <= d}` with a cold start.
pub fn project_polyhedron(c: &DenseMatrix, d: &[f64], z: &[f64], tol: f64) -> Result<Vec<f64>> {
    if c.cols() != z.len() || c.rows() != d.len() {
        return Err(Error::Dimension("polyhedron and point do not match".into()));
    }
    let sets = (0..c.rows())
        .map(|i| SimpleSet::Slab {
            normal: c.row(i).to_vec(),
            lower: f64::NEG_INFINITY,
            upper: d[i],
        })
        .collect();
    let poly = ConvexIntersection::new(z.len(), sets);
    let mut state = poly.new_state();
    let cap = poly.default_sweep_cap();
    poly.project(z, &mut state, tol, cap)
}

/// A differentiable convex function.
pub trait SmoothFunction {
    fn dim(&self) -> usize;
    fn value(&self, w: &[f64]) -> f64;
    fn gradient(&self, w: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone)]
pub struct ProxOutcome {
    pub point: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

pub const PROX_MAX_ITER: usize = 5000;

/// `argmin_w rho f(w) + 1/2 ||w - z||^2`, unconstrained.
pub fn prox_numeric<F: SmoothFunction + ?Sized>(f: &F, rho: f64, z: &[f64], tol: f64) -> Result<Vec<f64>> {
    let out = prox_numeric_projected(f, rho, z, z, |w| Ok(w.to_vec()), tol, PROX_MAX_ITER)?;
    if out.converged {
        Ok(out.point)
    } else {
        Err(Error::NonConvergence {
            iterations: out.iterations,
            fixed_point: out.residual,
            consensus: 0.0,
        })
    }
}

/// Same as [`prox_numeric`] over a convex set given by its projection. Uses projected
/// gradient steps with Barzilai-Borwein lengths and backtracking; the residual is
/// the unit-step projected-gradient norm. Hitting `max_iter` is reported through
/// `converged = false` with the last iterate.
pub fn prox_numeric_projected<F, P>(
    f: &F,
    rho: f64,
    z: &[f64],
    start: &[f64],
    mut proj: P,
    tol: f64,
    max_iter: usize,
) -> Result<ProxOutcome>
where
    F: SmoothFunction + ?Sized,
    P: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    assert!(rho > 0.0, "prox weight must be positive");
    let phi = |w: &[f64]| rho * f.value(w) + 0.5 * w.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let grad = |w: &[f64]| -> Vec<f64> {
        let g = f.gradient(w);
        g.iter().zip(w).zip(z).map(|((gi, wi), zi)| rho * gi + wi - zi).collect()
    };
    let mut w = proj(start)?;
    let mut g = grad(&w);
    let mut fw = phi(&w);
    let mut t = 1.0;
    let mut residual = f64::INFINITY;
    for it in 0..=max_iter {
        let trial: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - b).collect();
        let pg = proj(&trial)?;
        residual = norm2(&w.iter().zip(&pg).map(|(a, b)| a - b).collect::<Vec<_>>());
        if residual <= tol {
            return Ok(ProxOutcome {
                point: w,
                iterations: it,
                residual,
                converged: true,
            });
        }
        if it == max_iter {
            break;
        }
        let (wn, fwn) = loop {
            let step: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            let cand = if t == 1.0 { pg.clone() } else { proj(&step)? };
            let d: Vec<f64> = cand.iter().zip(&w).map(|(a, b)| a - b).collect();
            let fc = phi(&cand);
            let model = fw + dot(&g, &d) + dot(&d, &d) / (2.0 * t);
            if fc <= model + 1e-13 * (1.0 + fw.abs()) || t < 1e-14 {
                break (cand, fc);
            }
            t *= 0.5;
        };
        let gn = grad(&wn);
        let s: Vec<f64> = wn.iter().zip(&w).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        t = if sy > 0.0 { (dot(&s, &s) / sy).clamp(1e-12, 1e12) } else { (2.0 * t).min(1e12) };
        w = wn;
        g = gn;
        fw = fwn;
    }
    Ok(ProxOutcome {
        point: w,
        iterations: max_iter,
        residual,
        converged: false,
    })
}
