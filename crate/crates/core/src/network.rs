//! Agent graphs, mixing weights, gossip averaging and the consensus projection.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use rand::{Rng, SeedableRng};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    p: usize,
    /// 0-based pairs with `i < j`, sorted.
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopologyKind {
    Cycle,
    Path,
    /// Path backbone plus each other pair with probability `extra_edge_prob`.
    RandomWithPath { seed: u64, extra_edge_prob: f64 },
}

pub fn build_topology(kind: TopologyKind, p: usize) -> Result<Topology> {
    if p == 0 {
        return Err(Error::Topology("need at least one agent".into()));
    }
    let mut edges: Vec<(usize, usize)> = (0..p - 1).map(|i| (i, i + 1)).collect();
    match kind {
        TopologyKind::Path => {}
        TopologyKind::Cycle => {
            if p > 2 {
                edges.push((0, p - 1));
            }
        }
        TopologyKind::RandomWithPath { seed, extra_edge_prob } => {
            if !(0.0..=1.0).contains(&extra_edge_prob) {
                return Err(Error::Topology(format!(
                    "edge probability {extra_edge_prob} outside [0, 1]"
                )));
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for i in 0..p {
                for j in i + 2..p {
                    if rng.gen_bool(extra_edge_prob) {
                        edges.push((i, j));
                    }
                }
            }
        }
    }
    Topology::from_edges(p, edges)
}

impl Topology {
    pub fn from_edges(p: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut norm = Vec::with_capacity(edges.len());
        for (i, j) in edges {
            if i == j {
                return Err(Error::Topology(format!("self-loop at agent {i}")));
            }
            if i >= p || j >= p {
                return Err(Error::Topology(format!("edge ({i}, {j}) out of range for p={p}")));
            }
            norm.push((i.min(j), i.max(j)));
        }
        norm.sort_unstable();
        norm.dedup();
        let mut neighbors = vec![Vec::new(); p];
        for &(i, j) in &norm {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        let t = Self {
            p,
            edges: norm,
            neighbors,
        };
        if !t.is_connected() {
            return Err(Error::Topology("graph is not connected".into()));
        }
        Ok(t)
    }

    /// Edge-list text: first line `p`, then one 1-based `i j` pair per line.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let p: usize = lines
            .next()
            .ok_or_else(|| Error::Topology("empty edge list".into()))?
            .parse()
            .map_err(|e| Error::Topology(format!("bad agent count: {e}")))?;
        let mut edges = Vec::new();
        for (k, line) in lines.enumerate() {
            let nums: Vec<usize> = line
                .split_whitespace()
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Topology(format!("edge line {}: {e}", k + 2)))?;
            if nums.len() != 2 || nums[0] == 0 || nums[1] == 0 {
                return Err(Error::Topology(format!("edge line {} must hold two 1-based ids", k + 2)));
            }
            edges.push((nums[0] - 1, nums[1] - 1));
        }
        Self::from_edges(p, edges)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.binary_search(&(i.min(j), i.max(j))).is_ok()
    }

    /// Every consecutive pair `(i, i+1)` is an edge.
    pub fn has_path_edges(&self) -> bool {
        (0..self.p.saturating_sub(1)).all(|i| self.has_edge(i, i + 1))
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.p];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn laplacian(&self) -> DenseMatrix {
        let mut l = DenseMatrix::zeros(self.p, self.p);
        for &(i, j) in &self.edges {
            l.set(i, j, -1.0);
            l.set(j, i, -1.0);
            l.set(i, i, l.get(i, i) + 1.0);
            l.set(j, j, l.get(j, j) + 1.0);
        }
        l
    }
}

/// `W = I - w L` with the constant edge weight `w = 2 / (lambda_max + lambda_min_nonzero)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    weight: f64,
    matrix: DenseMatrix,
    /// Spectral radius of `W - 11^T/p`.
    rate: f64,
    neighbors: Vec<Vec<usize>>,
}

pub fn mixing_weight(t: &Topology) -> MixingMatrix {
    let lap = t.laplacian();
    let mut eig: Vec<f64> = nalgebra::SymmetricEigen::new(lap.to_nalgebra())
        .eigenvalues
        .iter()
        .cloned()
        .collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let p = t.p();
    if p == 1 {
        return MixingMatrix {
            weight: 0.0,
            matrix: DenseMatrix::identity(1),
            rate: 0.0,
            neighbors: t.neighbors.clone(),
        };
    }
    // connected graph: exactly one zero eigenvalue
    let smallest = eig[1];
    let largest = eig[eig.len() - 1];
    let weight = 2.0 / (largest + smallest);
    let mut matrix = DenseMatrix::identity(p);
    for i in 0..p {
        for j in 0..p {
            matrix.set(i, j, matrix.get(i, j) - weight * lap.get(i, j));
        }
    }
    let rate = eig[1..]
        .iter()
        .fold(0.0f64, |m, &l| m.max((1.0 - weight * l).abs()));
    MixingMatrix {
        weight,
        matrix,
        rate,
        neighbors: t.neighbors.clone(),
    }
}

impl MixingMatrix {
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn p(&self) -> usize {
        self.neighbors.len()
    }

    /// Rounds needed for the worst-case contraction `rate^k` to reach `factor`.
    pub fn rounds_for(&self, factor: f64) -> usize {
        if self.rate <= 0.0 {
            return 1;
        }
        (factor.ln() / self.rate.ln()).ceil().max(1.0) as usize
    }

    /// One synchronous round: `v_i <- v_i + w sum_{j ~ i} (v_j - v_i)`, reading only
    /// the previous round's values.
    pub fn round(&self, values: &[Vec<f64>]) -> Vec<Vec<f64>> {
        values
            .iter()
            .enumerate()
            .map(|(i, vi)| {
                let mut out = vi.clone();
                for &j in &self.neighbors[i] {
                    for (o, (a, b)) in out.iter_mut().zip(values[j].iter().zip(vi)) {
                        *o += self.weight * (a - b);
                    }
                }
                out
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AveragingMode {
    Exact,
    Gossip { rounds: usize },
}

pub fn mean(values: &[Vec<f64>]) -> Vec<f64> {
    let dim = values.first().map_or(0, |v| v.len());
    let mut m = vec![0.0; dim];
    for v in values {
        assert_eq!(v.len(), dim, "agent vectors must share a dimension");
        for (a, b) in m.iter_mut().zip(v) {
            *a += b;
        }
    }
    let p = values.len() as f64;
    m.iter_mut().for_each(|a| *a /= p);
    m
}

pub fn distributed_average(
    values: &[Vec<f64>],
    mixing: Option<&MixingMatrix>,
    mode: AveragingMode,
) -> Vec<Vec<f64>> {
    match mode {
        AveragingMode::Exact => {
            let m = mean(values);
            vec![m; values.len()]
        }
        AveragingMode::Gossip { rounds } => {
            let w = mixing.expect("gossip averaging needs a mixing matrix");
            let mut cur = values.to_vec();
            for _ in 0..rounds {
                cur = w.round(&cur);
            }
            cur
        }
    }
}

/// Averages the `y` copies and clips the averaged `mu` copies at zero.
pub fn consensus_project(
    z_y: &[Vec<f64>],
    z_mu: Option<&[Vec<f64>]>,
    mixing: Option<&MixingMatrix>,
    mode: AveragingMode,
) -> (Vec<Vec<f64>>, Option<Vec<Vec<f64>>>) {
    let y = distributed_average(z_y, mixing, mode);
    let mu = z_mu.map(|zm| {
        distributed_average(zm, mixing, mode)
            .into_iter()
            .map(|v| v.into_iter().map(|x| x.max(0.0)).collect())
            .collect()
    });
    (y, mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;

    #[test]
    fn topology_examples() {
        let c3 = build_topology(TopologyKind::Cycle, 3).unwrap();
        assert_eq!(c3.edges(), &[(0, 1), (0, 2), (1, 2)]);
        let p2 = build_topology(TopologyKind::Path, 2).unwrap();
        assert_eq!(p2.edges(), &[(0, 1)]);
        assert!(build_topology(TopologyKind::Cycle, 0).is_err());
        let single = build_topology(TopologyKind::Cycle, 1).unwrap();
        assert!(single.edges().is_empty());
        assert_eq!(mixing_weight(&single).rate(), 0.0);
        let r = build_topology(TopologyKind::RandomWithPath { seed: 7, extra_edge_prob: 0.1 }, 40).unwrap();
        assert!(r.has_path_edges());
        assert!(r.is_connected());
        assert!(r.edges().len() > 39);
        let r2 = build_topology(TopologyKind::RandomWithPath { seed: 7, extra_edge_prob: 0.1 }, 40).unwrap();
        assert_eq!(r, r2);
    }

    #[test]
    fn edge_list_parsing() {
        let t = Topology::parse_edge_list("3\n1 2\n2 3\n").unwrap();
        assert_eq!(t.edges(), &[(0, 1), (1, 2)]);
        assert!(Topology::parse_edge_list("3\n1 2\n").is_err());
        assert!(Topology::parse_edge_list("2\n1 1\n").is_err());
        assert!(Topology::parse_edge_list("2\n0 1\n").is_err());
    }

    #[test]
    fn mixing_examples() {
        let w = mixing_weight(&build_topology(TopologyKind::Cycle, 3).unwrap());
        assert!((w.weight() - 1.0 / 3.0).abs() < 1e-12);
        for i in 0..3 {
            for j in 0..3 {
                assert!((w.matrix().get(i, j) - 1.0 / 3.0).abs() < 1e-12);
            }
        }
        let w = mixing_weight(&build_topology(TopologyKind::Path, 2).unwrap());
        assert!((w.weight() - 0.5).abs() < 1e-12);
        let p = 6;
        let all: Vec<(usize, usize)> = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect();
        let w = mixing_weight(&Topology::from_edges(p, all).unwrap());
        let vals: Vec<Vec<f64>> = (0..p).map(|i| vec![i as f64, 1.0]).collect();
        let out = distributed_average(&vals, Some(&w), AveragingMode::Gossip { rounds: 1 });
        for v in out {
            assert!((v[0] - 2.5).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mixing_invariants_on_random_graph() {
        let t = build_topology(TopologyKind::RandomWithPath { seed: 3, extra_edge_prob: 0.2 }, 12).unwrap();
        let w = mixing_weight(&t);
        let m = w.matrix();
        for i in 0..12 {
            let row: f64 = (0..12).map(|j| m.get(i, j)).sum();
            assert!((row - 1.0).abs() < 1e-12);
            for j in 0..12 {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
        assert!(w.rate() < 1.0);
    }

    #[test]
    fn averaging_examples() {
        let c3 = mixing_weight(&build_topology(TopologyKind::Cycle, 3).unwrap());
        let vals = vec![vec![1.0], vec![2.0], vec![3.0]];
        for v in distributed_average(&vals, None, AveragingMode::Exact) {
            assert_eq!(v, vec![2.0]);
        }
        assert_eq!(distributed_average(&vals, Some(&c3), AveragingMode::Gossip { rounds: 0 }), vals);
        for v in distributed_average(&vals, Some(&c3), AveragingMode::Gossip { rounds: 1 }) {
            assert!((v[0] - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn consensus_examples() {
        let (y, mu) = consensus_project(&[vec![1.0, 0.0], vec![3.0, 0.0]], None, None, AveragingMode::Exact);
        assert_eq!(y, vec![vec![2.0, 0.0]; 2]);
        assert!(mu.is_none());
        let zy = vec![vec![0.0], vec![0.0]];
        let (_, mu) = consensus_project(&zy, Some(&[vec![-4.0], vec![2.0]]), None, AveragingMode::Exact);
        assert_eq!(mu.unwrap(), vec![vec![0.0]; 2]);
        let fixed = vec![vec![1.5, 2.0], vec![1.5, 2.0]];
        let (y, mu) = consensus_project(&fixed, Some(&fixed), None, AveragingMode::Exact);
        assert_eq!(y, fixed);
        assert_eq!(mu.unwrap(), fixed);
    }

    #[test]
    fn consensus_projection_is_idempotent_and_optimal() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let zy: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let zm: Vec<Vec<f64>> = (0..4).map(|_| (0..2).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let (y, mu) = consensus_project(&zy, Some(&zm), None, AveragingMode::Exact);
        let mu = mu.unwrap();
        let (y2, mu2) = consensus_project(&y, Some(&mu), None, AveragingMode::Exact);
        assert_eq!(y, y2);
        assert_eq!(mu, mu2.unwrap());
        // brute-force QP: for each mu coordinate minimize sum_i (c - z_i)^2 over c >= 0 on a fine grid
        for k in 0..2 {
            let cost = |c: f64| zm.iter().map(|z| (c - z[k]).powi(2)).sum::<f64>();
            let mut best = (f64::INFINITY, 0.0);
            for s in 0..=200_000 {
                let c = s as f64 * 1e-5;
                let v = cost(c);
                if v < best.0 {
                    best = (v, c);
                }
            }
            assert!((mu[0][k] - best.1).abs() <= 1e-5);
        }
    }

    #[test]
    fn exact_average_invariant_under_relabeling() {
        let vals = vec![vec![1.0, 5.0], vec![-2.0, 0.5], vec![4.0, 1.0]];
        let perm = vec![vals[2].clone(), vals[0].clone(), vals[1].clone()];
        let a = distributed_average(&vals, None, AveragingMode::Exact);
        let b = distributed_average(&perm, None, AveragingMode::Exact);
        for (x, y) in a[0].iter().zip(&b[0]) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn gossip_decays_geometrically_on_40_cycle() {
        use rand::{Rng, SeedableRng};
        let w = mixing_weight(&build_topology(TopologyKind::Cycle, 40).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let v0: Vec<Vec<f64>> = (0..40).map(|_| vec![rng.gen_range(-1.0..1.0)]).collect();
        let target = mean(&v0);
        let total0: f64 = v0.iter().map(|v| v[0]).sum();
        let err = |v: &[Vec<f64>]| norm2(&v.iter().map(|x| x[0] - target[0]).collect::<Vec<_>>());
        let e0 = err(&v0);
        let mut cur = v0;
        for k in 1..=200 {
            cur = w.round(&cur);
            assert!(err(&cur) <= w.rate().powi(k) * e0 * (1.0 + 1e-9) + 1e-14);
        }
        let total: f64 = cur.iter().map(|v| v[0]).sum();
        assert!((total - total0).abs() < 1e-12);
    }
}
