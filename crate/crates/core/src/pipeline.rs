//! End-to-end drivers: the distributed RegBp solve and the two-stage scheme for
//! LASSO and BPDN.

use crate::dual::{build_dual, stage2_target, DualSolution, Stage2Target, Variant};
use crate::error::{Error, Result};
use crate::linalg::{norm1, norm2, sub};
use crate::network::{mixing_weight, AveragingMode, MixingMatrix, Topology};
use crate::partition::ColumnPartition;
use crate::problem::{ProblemKind, ProblemSpec, Regularizer};
use crate::splitting::{run_engine, SchemeParams, SolveReport};

/// Communication graph plus the averaging rule used in consensus steps.
#[derive(Debug, Clone)]
pub struct Network {
    pub topology: Topology,
    pub mixing: MixingMatrix,
    pub averaging: AveragingMode,
}

impl Network {
    pub fn new(topology: Topology, averaging: AveragingMode) -> Self {
        let mixing = mixing_weight(&topology);
        Self {
            topology,
            mixing,
            averaging,
        }
    }

    /// Gossip with enough rounds to contract disagreement by `factor`.
    pub fn gossip(topology: Topology, factor: f64) -> Self {
        let mut net = Self::new(topology, AveragingMode::Exact);
        net.averaging = AveragingMode::Gossip {
            rounds: net.mixing.rounds_for(factor),
        };
        net
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageConfig {
    pub stage1: SchemeParams,
    pub stage2: SchemeParams,
    /// Stage-2 regularization weight.
    pub alpha: f64,
    pub variant: Variant,
}

impl Default for TwoStageConfig {
    fn default() -> Self {
        Self {
            stage1: SchemeParams::default(),
            stage2: SchemeParams::default(),
            alpha: 0.18,
            variant: Variant::Plain,
        }
    }
}

impl TwoStageConfig {
    pub fn scaled() -> Self {
        Self {
            alpha: 0.1,
            variant: Variant::Scaled,
            ..Self::default()
        }
    }

    pub fn with_tols(mut self, stage1: f64, stage2: f64) -> Self {
        self.stage1.tol = stage1;
        self.stage2.tol = stage2;
        self
    }
}

#[derive(Debug, Clone)]
pub struct RegBpOutcome {
    pub blocks: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    pub dual: DualSolution,
    pub report: SolveReport,
    /// `||A x - b||`
    pub feasibility: f64,
}

fn check_network(partition: &ColumnPartition, network: &Network, problem: &ProblemSpec) -> Result<()> {
    if network.topology.p() != partition.agents() {
        return Err(Error::Topology(format!(
            "{} agents in the partition, {} in the topology",
            partition.agents(),
            network.topology.p()
        )));
    }
    if matches!(problem.regularizer(), Regularizer::FusedL1 { .. }) && !network.topology.has_path_edges() {
        return Err(Error::Topology("fused penalty needs edges between consecutive agents".into()));
    }
    Ok(())
}

pub fn solve_regbp_distributed(
    problem: &ProblemSpec,
    partition: &ColumnPartition,
    network: &Network,
    params: &SchemeParams,
) -> Result<RegBpOutcome> {
    if !matches!(problem.kind(), ProblemKind::RegBp { .. }) {
        return Err(Error::InvalidProblem(format!("expected regbp, got {}", problem.kind().name())));
    }
    check_network(partition, network, problem)?;
    let dp = build_dual(problem, partition)?;
    let consensus = dp.consensus.clone().with_averaging(network.averaging, Some(network.mixing.clone()));
    let out = run_engine(&dp.pieces, &consensus, params, None)?;
    let rep = &out.report;
    let dual = dp.gather(&out.consensus_states, rep.fixed_point_residual, rep.consensus_residual);
    // every agent recovers its block from its own copy
    let blocks = dp.recover_blocks(&out.consensus_states)?;
    let x = partition.assemble(&blocks)?;
    let feasibility = norm2(&sub(&problem.a().matvec(&x), problem.b()));
    Ok(RegBpOutcome {
        blocks,
        x,
        dual,
        report: out.report,
        feasibility,
    })
}

#[derive(Debug, Clone)]
pub struct TwoStageOutcome {
    pub blocks: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    /// Stage-1 dual variables (agent 0's copy).
    pub stage1_dual: DualSolution,
    pub stage1: SolveReport,
    /// Absent when the target already determines the zero solution.
    pub stage2: Option<RegBpOutcome>,
    pub target: Stage2Target,
}

impl TwoStageOutcome {
    /// Stage-2 solution before post-scaling.
    pub fn unscaled(&self) -> Option<&[f64]> {
        self.stage2.as_ref().map(|s| s.x.as_slice())
    }
}

pub fn solve_two_stage(
    problem: &ProblemSpec,
    partition: &ColumnPartition,
    network: &Network,
    config: &TwoStageConfig,
) -> Result<TwoStageOutcome> {
    if matches!(problem.kind(), ProblemKind::RegBp { .. }) {
        return Err(Error::InvalidProblem("two-stage scheme needs lasso or bpdn".into()));
    }
    if !(config.alpha > 0.0 && config.alpha.is_finite()) {
        return Err(Error::InvalidProblem(format!("stage-2 alpha must be positive, got {}", config.alpha)));
    }
    check_network(partition, network, problem)?;
    let dp = build_dual(problem, partition)?;
    let consensus = dp.consensus.clone().with_averaging(network.averaging, Some(network.mixing.clone()));
    let out = run_engine(&dp.pieces, &consensus, &config.stage1, None)?;
    let rep = &out.report;
    let stage1_dual = dp.gather(&out.consensus_states, rep.fixed_point_residual, rep.consensus_residual);
    let target = stage2_target(problem, &stage1_dual.y, config.variant)?;
    let n = problem.n();
    let (blocks, stage2) = match &target {
        Stage2Target::Zero => (partition.split(&vec![0.0; n]), None),
        Stage2Target::Solve { rhs, scale } => {
            let reg = match config.variant {
                Variant::Plain => problem.regularizer().clone(),
                Variant::Scaled => Regularizer::L1 { lambda: 1.0 },
            };
            let second = ProblemSpec::reg_bp(
                problem.a().clone(),
                rhs.clone(),
                config.alpha,
                reg,
                problem.constraint().clone(),
            )?;
            let res = solve_regbp_distributed(&second, partition, network, &config.stage2)?;
            let blocks = res
                .blocks
                .iter()
                .map(|blk| blk.iter().map(|v| v * scale).collect())
                .collect();
            (blocks, Some(res))
        }
    };
    let x = partition.assemble(&blocks)?;
    Ok(TwoStageOutcome {
        blocks,
        x,
        stage1_dual,
        stage1: out.report,
        stage2,
        target,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeRow {
    pub db_norm: f64,
    pub dx_norm: f64,
}

impl ProbeRow {
    /// `||dx|| / ||db||`, or 0 for a zero perturbation.
    pub fn ratio(&self) -> f64 {
        if self.db_norm == 0.0 {
            0.0
        } else {
            self.dx_norm / self.db_norm
        }
    }
}

/// Solves the base problem and each `b + offset`, reporting displacement norms.
pub fn continuity_probe(
    problem: &ProblemSpec,
    partition: &ColumnPartition,
    network: &Network,
    params: &SchemeParams,
    perturbations: &[Vec<f64>],
) -> Result<Vec<ProbeRow>> {
    let base = solve_regbp_distributed(problem, partition, network, params)?;
    perturbations
        .iter()
        .map(|db| {
            if db.len() != problem.m() {
                return Err(Error::Dimension("perturbation length differs from b".into()));
            }
            let b: Vec<f64> = problem.b().iter().zip(db).map(|(a, c)| a + c).collect();
            let moved = solve_regbp_distributed(&problem.with_rhs(b)?, partition, network, params)?;
            Ok(ProbeRow {
                db_norm: norm2(db),
                dx_norm: norm2(&sub(&moved.x, &base.x)),
            })
        })
        .collect()
}

/// `||z||_1` of the scaled stage-2 solution, which should be 1.
pub fn scaled_l1(outcome: &TwoStageOutcome) -> Option<f64> {
    outcome.unscaled().map(norm1)
}
