//! Experiment harness: TOML configuration, distributed and oracle runs, and the
//! summary / trace / solution artifacts they leave on disk.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use colsplit::dual::Variant;
use colsplit::linalg::{norm1, norm2, sub, DenseMatrix};
use colsplit::network::{build_topology, AveragingMode, Topology, TopologyKind};
use colsplit::pipeline::{solve_regbp_distributed, solve_two_stage, Network, TwoStageConfig};
use colsplit::reference::{random_bpdn_instance, random_instance, relative_error, solve_centralized, ORACLE_TOL};
use colsplit::splitting::{Engine, SchemeParams, SolveReport};
use colsplit::{make_partition, ColumnPartition, ConstraintSet, PartitionStrategy, ProblemSpec, Regularizer};
use serde::Deserialize;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("solver failure: {0}")]
    Solver(#[from] colsplit::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(_) => EXIT_SOLVER,
            _ => EXIT_CONFIG,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Lasso,
    Bpdn,
    Regbp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegKind {
    L1,
    Fused,
    Group,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Free,
    Nonneg,
    Box,
    Polyhedron,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub family: Family,
    #[serde(default = "default_reg")]
    pub regularizer: RegKind,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub sigma: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Per-group weights; defaults to `lambda` for every group.
    pub group_weights: Option<Vec<f64>>,
    #[serde(default = "default_constraint")]
    pub constraint: ConstraintKind,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub c_file: Option<PathBuf>,
    pub d_file: Option<PathBuf>,
    #[serde(default)]
    pub scaled: bool,
}

fn default_reg() -> RegKind {
    RegKind::L1
}

fn default_constraint() -> ConstraintKind {
    ConstraintKind::Free
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, tag = "source", rename_all = "lowercase")]
pub enum DataSection {
    Random { seed: u64, m: usize, n: usize },
    Files { a_file: PathBuf, b_file: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSection {
    pub p: usize,
    /// `"even"` or an explicit list of 0-based column blocks.
    #[serde(default)]
    pub blocks: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyName {
    Cycle,
    Path,
    Random,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    #[serde(default = "default_topology")]
    pub kind: TopologyName,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_edge_prob")]
    pub extra_edge_prob: f64,
    /// Edge-list file (first line p, then 1-based pairs); overrides `kind`.
    pub edges_file: Option<PathBuf>,
}

fn default_topology() -> TopologyName {
    TopologyName::Cycle
}

fn default_edge_prob() -> f64 {
    0.1
}

impl Default for TopologySection {
    fn default() -> Self {
        Self {
            kind: default_topology(),
            seed: 0,
            extra_edge_prob: default_edge_prob(),
            edges_file: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AveragingSection {
    #[serde(default)]
    pub mode: AveragingName,
    /// Gossip rounds per consensus step; default contracts disagreement by 1e-6.
    pub rounds: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AveragingName {
    #[default]
    Exact,
    Gossip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineName {
    DavisYin,
    DouglasRachford,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub engine: Option<EngineName>,
    pub eta: Option<f64>,
    pub step_scale: Option<f64>,
    pub relax: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_out() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: ProblemSection,
    data: DataSection,
    partition: PartitionSection,
    #[serde(default)]
    topology: TopologySection,
    #[serde(default)]
    averaging: AveragingSection,
    #[serde(default)]
    stage1: StageSection,
    #[serde(default)]
    stage2: StageSection,
    #[serde(default)]
    output: OutputSection,
}

/// Validated configuration with defaults applied and data loaded.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub partition: ColumnPartition,
    pub topology: Topology,
    pub averaging: AveragingMode,
    pub stage1: SchemeParams,
    pub stage2: SchemeParams,
    /// Stage-2 weight for LASSO/BPDN, ignored for RegBp (whose own alpha applies).
    pub alpha: f64,
    pub variant: Variant,
    pub output_dir: PathBuf,
    /// Echo of the settings that identify the run.
    pub label: Vec<(String, String)>,
}

pub const DEFAULT_ALPHA: f64 = 0.18;
pub const DEFAULT_SCALED_ALPHA: f64 = 0.1;
pub const DEFAULT_MAX_ITER: usize = 200_000;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Whitespace-delimited matrix: first line `rows cols`, then the rows.
pub fn read_matrix(path: &Path) -> Result<DenseMatrix, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let parse_err = |message: String| CliError::Parse {
        path: path.display().to_string(),
        message,
    };
    let mut tokens = text.split_whitespace();
    let mut next_usize = |what: &str| -> Result<usize, CliError> {
        tokens
            .next()
            .ok_or_else(|| parse_err(format!("missing {what}")))?
            .parse()
            .map_err(|e| parse_err(format!("{what}: {e}")))
    };
    let rows = next_usize("row count")?;
    let cols = next_usize("column count")?;
    let mut data = Vec::with_capacity(rows * cols);
    for (k, line) in text.lines().skip(1).enumerate() {
        for tok in line.split_whitespace() {
            data.push(
                tok.parse::<f64>()
                    .map_err(|e| parse_err(format!("line {}: {tok:?}: {e}", k + 2)))?,
            );
        }
    }
    if data.len() != rows * cols {
        return Err(parse_err(format!("expected {} entries, found {}", rows * cols, data.len())));
    }
    DenseMatrix::new(rows, cols, data).map_err(|e| parse_err(e.to_string()))
}

/// A vector stored as an `n x 1` or `1 x n` matrix file.
pub fn read_vector(path: &Path) -> Result<Vec<f64>, CliError> {
    let m = read_matrix(path)?;
    if m.rows() != 1 && m.cols() != 1 {
        return Err(CliError::Parse {
            path: path.display().to_string(),
            message: format!("expected a vector, got {}x{}", m.rows(), m.cols()),
        });
    }
    Ok(m.data().to_vec())
}

pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<(), CliError> {
    let mut s = format!("{} {}\n", m.rows(), m.cols());
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| io_err(path, e))
}

fn stage_params(sec: &StageSection, name: &str) -> Result<SchemeParams, CliError> {
    let mut p = SchemeParams::default();
    p.tol = sec.tol.unwrap_or(DEFAULT_TOL);
    p.max_iter = sec.max_iter.unwrap_or(DEFAULT_MAX_ITER);
    p.engine = match sec.engine.unwrap_or(EngineName::DavisYin) {
        EngineName::DavisYin => Engine::DavisYin,
        EngineName::DouglasRachford => Engine::DouglasRachford,
    };
    p.eta = sec.eta;
    if let Some(s) = sec.step_scale {
        p.step_scale = s;
    }
    if let Some(r) = sec.relax {
        p.lambda_relax = r;
    }
    if !(p.tol > 0.0 && p.tol.is_finite()) {
        return Err(CliError::Validation(format!("{name}.tol must be positive, got {}", p.tol)));
    }
    if p.max_iter == 0 {
        return Err(CliError::Validation(format!("{name}.max_iter must be positive")));
    }
    if !(p.step_scale > 0.0 && p.step_scale.is_finite()) {
        return Err(CliError::Validation(format!("{name}.step_scale must be positive")));
    }
    Ok(p)
}

fn required(v: Option<f64>, name: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| CliError::Validation(format!("problem.{name} is required for this family/regularizer")))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base).map_err(|e| match e {
        CliError::Parse { message, .. } => CliError::Parse {
            path: path.display().to_string(),
            message,
        },
        e => e,
    })
}

/// Parses configuration text; relative file paths resolve against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<ExperimentConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Parse {
        path: "<config>".into(),
        message: e.to_string(),
    })?;
    let pr = &raw.problem;
    let mut label = vec![
        ("family".to_string(), format!("{:?}", pr.family).to_lowercase()),
        ("regularizer".to_string(), format!("{:?}", pr.regularizer).to_lowercase()),
        ("constraint".to_string(), format!("{:?}", pr.constraint).to_lowercase()),
    ];

    let (a, b) = match &raw.data {
        DataSection::Random { seed, m, n } => {
            if *m == 0 || *n == 0 {
                return Err(CliError::Validation("data.m and data.n must be positive".into()));
            }
            label.push(("data".into(), format!("random seed={seed} m={m} n={n}")));
            match (pr.family, pr.sigma) {
                (Family::Bpdn, Some(sigma)) => {
                    let (a, b, redraws) = random_bpdn_instance(*m, *n, sigma, *seed);
                    label.push(("b_redraws".into(), redraws.to_string()));
                    (a, b)
                }
                _ => random_instance(*m, *n, *seed),
            }
        }
        DataSection::Files { a_file, b_file } => {
            label.push(("data".into(), "files".into()));
            (read_matrix(&resolve(base, a_file))?, read_vector(&resolve(base, b_file))?)
        }
    };
    let n = a.cols();

    let part = &raw.partition;
    if part.p == 0 {
        return Err(CliError::Validation("partition.p must be positive".into()));
    }
    if part.p > n {
        return Err(CliError::Validation(format!("partition.p = {} exceeds N = {n}", part.p)));
    }
    let strategy = match &part.blocks {
        Some(blocks) => PartitionStrategy::Explicit(blocks.clone()),
        None => PartitionStrategy::Even,
    };
    let partition = make_partition(n, part.p, strategy).map_err(|e| CliError::Validation(e.to_string()))?;
    label.push(("p".into(), part.p.to_string()));

    let lambda = || required(pr.lambda, "lambda");
    let regularizer = match pr.regularizer {
        RegKind::L1 => Regularizer::L1 { lambda: lambda()? },
        RegKind::Fused => Regularizer::FusedL1 {
            lambda: lambda()?,
            gamma: required(pr.gamma, "gamma")?,
        },
        RegKind::Group => Regularizer::GroupL2 {
            partition: partition.clone(),
            weights: match &pr.group_weights {
                Some(w) => w.clone(),
                None => vec![lambda()?; part.p],
            },
        },
    };
    let constraint = match pr.constraint {
        ConstraintKind::Free => ConstraintSet::Free,
        ConstraintKind::Nonneg => ConstraintSet::NonNeg,
        ConstraintKind::Box => ConstraintSet::Box {
            lower: pr
                .lower
                .clone()
                .ok_or_else(|| CliError::Validation("box constraint needs problem.lower".into()))?,
            upper: pr
                .upper
                .clone()
                .ok_or_else(|| CliError::Validation("box constraint needs problem.upper".into()))?,
        },
        ConstraintKind::Polyhedron => {
            let c_file = pr
                .c_file
                .as_ref()
                .ok_or_else(|| CliError::Validation("polyhedron needs problem.c_file".into()))?;
            let d_file = pr
                .d_file
                .as_ref()
                .ok_or_else(|| CliError::Validation("polyhedron needs problem.d_file".into()))?;
            ConstraintSet::GeneralPolyhedron {
                c: read_matrix(&resolve(base, c_file))?,
                d: read_vector(&resolve(base, d_file))?,
            }
        }
    };
    let variant = if pr.scaled { Variant::Scaled } else { Variant::Plain };
    let alpha = pr
        .alpha
        .unwrap_or(if pr.scaled { DEFAULT_SCALED_ALPHA } else { DEFAULT_ALPHA });
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(CliError::Validation(format!("problem.alpha must be positive, got {alpha}")));
    }
    let problem = match pr.family {
        Family::Lasso => ProblemSpec::lasso(a, b, regularizer, constraint),
        Family::Bpdn => ProblemSpec::bpdn(a, b, required(pr.sigma, "sigma")?, regularizer, constraint),
        Family::Regbp => ProblemSpec::reg_bp(a, b, alpha, regularizer, constraint),
    }
    .map_err(|e| match e {
        colsplit::Error::TrivialSolution { .. } => CliError::Solver(e),
        e => CliError::Validation(e.to_string()),
    })?;
    label.push(("alpha".into(), format!("{alpha}")));

    let topo = &raw.topology;
    let topology = match &topo.edges_file {
        Some(f) => {
            let path = resolve(base, f);
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            Topology::parse_edge_list(&text).map_err(|e| CliError::Validation(e.to_string()))?
        }
        None => {
            let kind = match topo.kind {
                TopologyName::Cycle => TopologyKind::Cycle,
                TopologyName::Path => TopologyKind::Path,
                TopologyName::Random => TopologyKind::RandomWithPath {
                    seed: topo.seed,
                    extra_edge_prob: topo.extra_edge_prob,
                },
            };
            build_topology(kind, part.p).map_err(|e| CliError::Validation(e.to_string()))?
        }
    };
    if topology.p() != part.p {
        return Err(CliError::Validation(format!(
            "topology has {} agents, partition has {}",
            topology.p(),
            part.p
        )));
    }
    label.push(("topology".into(), format!("{:?} edges={}", topo.kind, topology.edges().len()).to_lowercase()));

    let averaging = match raw.averaging.mode {
        AveragingName::Exact => AveragingMode::Exact,
        AveragingName::Gossip => {
            let rounds = match raw.averaging.rounds {
                Some(0) => return Err(CliError::Validation("averaging.rounds must be positive".into())),
                Some(r) => r,
                None => colsplit::network::mixing_weight(&topology).rounds_for(1e-6),
            };
            AveragingMode::Gossip { rounds }
        }
    };
    label.push(("averaging".into(), format!("{averaging:?}").to_lowercase()));

    Ok(ExperimentConfig {
        problem,
        partition,
        topology,
        averaging,
        stage1: stage_params(&raw.stage1, "stage1")?,
        stage2: stage_params(&raw.stage2, "stage2")?,
        alpha,
        variant,
        output_dir: resolve(base, &raw.output.dir),
        label,
    })
}

/// `key = value` lines in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
}

impl Summary {
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self { entries }
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.12e}")
}

fn record_report(summary: &mut Summary, prefix: &str, rep: &SolveReport) {
    summary.set(&format!("{prefix}_engine"), rep.engine.name());
    summary.set(&format!("{prefix}_iterations"), rep.iterations);
    summary.set(&format!("{prefix}_fixed_point_residual"), fmt_f(rep.fixed_point_residual));
    summary.set(&format!("{prefix}_consensus_residual"), fmt_f(rep.consensus_residual));
    summary.set(&format!("{prefix}_dual_objective"), fmt_f(rep.dual_objective));
}

/// Per-agent blocks as CSV rows `agent,column,value`.
pub fn blocks_csv(partition: &ColumnPartition, blocks: &[Vec<f64>]) -> String {
    let mut s = String::from("agent,column,value\n");
    for (i, (idx, vals)) in partition.blocks().iter().zip(blocks).enumerate() {
        for (j, v) in idx.iter().zip(vals) {
            let _ = writeln!(s, "{i},{j},{v:.17e}");
        }
    }
    s
}

/// Files written by one run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub summary: Summary,
    pub exit_code: i32,
    pub dir: PathBuf,
}

fn write(dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| io_err(&path, e))
}

fn base_summary(config: &ExperimentConfig) -> Summary {
    let mut s = Summary::default();
    for (k, v) in &config.label {
        s.set(k, v);
    }
    s.set("m", config.problem.m());
    s.set("n", config.problem.n());
    s
}

/// Oracle value of the configured problem.
fn oracle_value(config: &ExperimentConfig, summary: &mut Summary) -> Result<f64, colsplit::Error> {
    let oracle = solve_centralized(&config.problem, ORACLE_TOL)?;
    summary.set("j_true", fmt_f(oracle.objective));
    summary.set("oracle_iterations", oracle.iterations);
    summary.set("oracle_tolerance", fmt_f(oracle.tolerance));
    Ok(oracle.objective)
}

/// Runs the distributed solver and the oracle, writing `summary.txt`,
/// `stage1_trace.csv`, `stage2_trace.csv` and `solution_blocks.csv` into the
/// output directory. Solver failures are recorded in the summary and mapped to
/// exit code 3.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts, CliError> {
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let mut summary = base_summary(config);
    let started = Instant::now();
    let outcome = run_distributed(config, &dir, &mut summary);
    let exit_code = match outcome {
        Ok(()) => {
            summary.set("status", "ok");
            EXIT_OK
        }
        Err(e) => {
            summary.set("status", "failure");
            summary.set("error", e.to_string().replace('\n', " "));
            EXIT_SOLVER
        }
    };
    summary.set("wall_time_s", format!("{:.3}", started.elapsed().as_secs_f64()));
    write(&dir, "summary.txt", &summary.render())?;
    Ok(RunArtifacts { summary, exit_code, dir })
}

fn run_distributed(config: &ExperimentConfig, dir: &Path, summary: &mut Summary) -> Result<(), colsplit::Error> {
    let net = Network::new(config.topology.clone(), config.averaging);
    let problem = &config.problem;
    let x = match problem.kind() {
        colsplit::ProblemKind::RegBp { .. } => {
            let out = solve_regbp_distributed(problem, &config.partition, &net, &config.stage1)
                .map_err(|e| record_error(summary, "stage1", e))?;
            record_report(summary, "stage1", &out.report);
            write_trace(dir, "stage1_trace.csv", &out.report);
            write_blocks(dir, &config.partition, &out.blocks);
            out.x
        }
        _ => {
            let cfg = TwoStageConfig {
                stage1: config.stage1.clone(),
                stage2: config.stage2.clone(),
                alpha: config.alpha,
                variant: config.variant,
            };
            let out = solve_two_stage(problem, &config.partition, &net, &cfg).map_err(|e| record_error(summary, "run", e))?;
            record_report(summary, "stage1", &out.stage1);
            write_trace(dir, "stage1_trace.csv", &out.stage1);
            if let Some(s2) = &out.stage2 {
                record_report(summary, "stage2", &s2.report);
                summary.set("stage2_target_residual", fmt_f(s2.feasibility));
                write_trace(dir, "stage2_trace.csv", &s2.report);
            } else {
                summary.set("stage2", "skipped (zero solution)");
            }
            let y = &out.stage1_dual.y;
            let r = sub(&problem.a().matvec(&out.x), problem.b());
            match problem.kind() {
                colsplit::ProblemKind::Lasso => {
                    summary.set("certificate_residual", fmt_f(norm2(&sub(&r, y))));
                }
                colsplit::ProblemKind::Bpdn { sigma } => {
                    let ny = norm2(y);
                    let target: Vec<f64> = y.iter().map(|v| sigma * v / ny).collect();
                    summary.set("certificate_residual", fmt_f(norm2(&sub(&r, &target))));
                    summary.set("data_residual_norm", fmt_f(norm2(&r)));
                }
                _ => {}
            }
            if let Some(z) = out.unscaled().filter(|_| config.variant == Variant::Scaled) {
                summary.set("scaled_l1_norm", fmt_f(norm1(z)));
            }
            write_blocks(dir, &config.partition, &out.blocks);
            out.x
        }
    };
    let j_dist = problem.objective(&x);
    summary.set("j_dist", fmt_f(j_dist));
    summary.set("feasibility", fmt_f(problem.data_residual(&x)));
    summary.set("constraint_violation", fmt_f(problem.constraint().violation(&x, Some(&config.partition))));
    let j_true = oracle_value(config, summary)?;
    summary.set("j_re", fmt_f(relative_error(j_dist, j_true)?));
    Ok(())
}

fn record_error(summary: &mut Summary, stage: &str, e: colsplit::Error) -> colsplit::Error {
    summary.set("failed_stage", stage);
    e
}

fn write_trace(dir: &Path, name: &str, rep: &SolveReport) {
    // a failed trace write must not mask the solver result; the summary is authoritative
    let _ = fs::write(dir.join(name), rep.to_csv());
}

fn write_blocks(dir: &Path, partition: &ColumnPartition, blocks: &[Vec<f64>]) {
    let _ = fs::write(dir.join("solution_blocks.csv"), blocks_csv(partition, blocks));
}

/// Oracle-only run: writes `summary.txt` with `j_true` and the oracle solution.
pub fn run_oracle(config: &ExperimentConfig) -> Result<RunArtifacts, CliError> {
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let mut summary = base_summary(config);
    let exit_code = match solve_centralized(&config.problem, ORACLE_TOL) {
        Ok(rep) => {
            summary.set("j_true", fmt_f(rep.objective));
            summary.set("oracle_iterations", rep.iterations);
            summary.set("oracle_tolerance", fmt_f(rep.tolerance));
            if let Some(x) = &rep.solution {
                write_blocks(&dir, &config.partition, &config.partition.split(x));
            }
            summary.set("status", "ok");
            EXIT_OK
        }
        Err(e) => {
            summary.set("status", "failure");
            summary.set("error", e.to_string());
            EXIT_SOLVER
        }
    };
    write(&dir, "summary.txt", &summary.render())?;
    Ok(RunArtifacts { summary, exit_code, dir })
}

/// Repeats the run for each alpha into `alpha_<k>` subdirectories and writes
/// `sweep.csv` (`alpha,status,j_dist,l1_norm,j_re`).
pub fn run_sweep(config: &ExperimentConfig, values: &[f64]) -> Result<i32, CliError> {
    if values.is_empty() {
        return Err(CliError::Validation("sweep needs at least one value".into()));
    }
    let root = config.output_dir.clone();
    fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
    let mut csv = String::from("alpha,status,j_dist,l1_norm,j_re\n");
    let mut worst = EXIT_OK;
    for (k, &alpha) in values.iter().enumerate() {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(CliError::Validation(format!("sweep value {alpha} must be positive")));
        }
        let mut cfg = config.clone();
        cfg.alpha = alpha;
        if let colsplit::ProblemKind::RegBp { .. } = cfg.problem.kind() {
            cfg.problem = cfg
                .problem
                .with_kind(colsplit::ProblemKind::RegBp { alpha })
                .map_err(|e| CliError::Validation(e.to_string()))?;
        }
        cfg.output_dir = root.join(format!("alpha_{k}"));
        cfg.label.retain(|(key, _)| key != "alpha");
        cfg.label.push(("alpha".into(), format!("{alpha}")));
        let art = run_experiment(&cfg)?;
        worst = worst.max(art.exit_code);
        let l1 = read_solution(&cfg.output_dir.join("solution_blocks.csv"), cfg.problem.n())
            .map(|x| fmt_f(norm1(&x)))
            .unwrap_or_default();
        let _ = writeln!(
            csv,
            "{alpha},{},{},{l1},{}",
            art.summary.get("status").unwrap_or(""),
            art.summary.get("j_dist").unwrap_or(""),
            art.summary.get("j_re").unwrap_or("")
        );
    }
    write(&root, "sweep.csv", &csv)?;
    Ok(worst)
}

/// Reassembles `x` from a `solution_blocks.csv` file.
pub fn read_solution(path: &Path, n: usize) -> Option<Vec<f64>> {
    let text = fs::read_to_string(path).ok()?;
    let mut x = vec![0.0; n];
    for line in text.lines().skip(1) {
        let mut it = line.split(',');
        let _agent = it.next()?;
        let j: usize = it.next()?.parse().ok()?;
        let v: f64 = it.next()?.parse().ok()?;
        *x.get_mut(j)? = v;
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_roundtrip() {
        let mut s = Summary::default();
        s.set("j_dist", fmt_f(1.5));
        s.set("status", "ok");
        s.set("j_dist", fmt_f(2.5));
        assert_eq!(Summary::parse(&s.render()), s);
        assert_eq!(s.get("j_dist"), Some("2.500000000000e0"));
    }

    #[test]
    fn matrix_files_roundtrip_and_reject_bad_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        let m = DenseMatrix::new(2, 3, vec![1.0, -2.5, 0.0, 1e-12, 3.0, 4.0]).unwrap();
        write_matrix(&path, &m).unwrap();
        assert_eq!(read_matrix(&path).unwrap(), m);
        assert!(matches!(read_vector(&path), Err(CliError::Parse { .. })));
        fs::write(&path, "2 2\n1 2\n3\n").unwrap();
        assert!(matches!(read_matrix(&path), Err(CliError::Parse { .. })));
        fs::write(&path, "1 2\n1 x\n").unwrap();
        let err = read_matrix(&path).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(matches!(read_matrix(&dir.path().join("none")), Err(CliError::Io { .. })));
    }

    #[test]
    fn solution_reassembly() {
        let part = ColumnPartition::from_blocks(3, vec![vec![0, 2], vec![1]]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        fs::write(&path, blocks_csv(&part, &[vec![1.0, 3.0], vec![2.0]])).unwrap();
        assert_eq!(read_solution(&path, 3), Some(vec![1.0, 2.0, 3.0]));
        assert_eq!(read_solution(&path, 2), None);
    }
}
