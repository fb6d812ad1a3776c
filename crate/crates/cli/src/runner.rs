//! Experiment orchestration: build samples, oracle and ansatz, initialize,
//! integrate, and write the artifacts.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use teng_core::ansatz::{
    init_params, load_snapshot, save_snapshot, Ansatz, AnsatzError, AnsatzKind, FrozenDifference, Mlp, ModelSpec,
};
use teng_core::engine::{
    integrate, pretrain, Collocation, EngineError, ErrorMonitor, IntegratorConfig, Problem, StepperConfig,
    TrajectoryRecord,
};
use teng_core::pde::{loss, DirichletBC, HeatOperator, LossReport};
use teng_core::sampling::{make_grid, EvalGrid, SampleSet};
use teng_core::special::{experiment1_expansion, ExactSolution, ModalExpansion};
use teng_core::ParamVector64;
use thiserror::Error;

use crate::config::{ConfigError, InitMode, InitialCondition, RunConfig};
use crate::output::{export_grid, CsvWriter};

pub const ERROR_CSV: &str = "errors.csv";
pub const CONFIG_ECHO: &str = "config.txt";
pub const FIELD_DIR: &str = "fields";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("setup: {0}")]
    Setup(String),
    #[error("snapshot {path}: {source}")]
    Snapshot {
        path: PathBuf,
        #[source]
        source: AnsatzError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("integration failed: {source}")]
    Engine {
        #[source]
        source: EngineError,
        /// Whatever was written before the failure.
        partial: Option<Box<OutputManifest>>,
    },
}

impl RunError {
    /// 2 for usage problems, 3 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Setup(_) | Self::Snapshot { .. } => 2,
            Self::Engine { .. } => 3,
            Self::Io { .. } => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldFiles {
    pub step: usize,
    pub time: f64,
    pub exact: PathBuf,
    pub predicted: PathBuf,
    pub error: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainSummary {
    pub rounds: usize,
    pub tolerance_met: bool,
    pub loss: LossReport<f64>,
    /// Loss threshold the relative tolerance was converted to.
    pub loss_tolerance: f64,
    pub from_snapshot: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputManifest {
    pub error_csv: PathBuf,
    pub field_grids: Vec<FieldFiles>,
    pub config_echo: PathBuf,
    pub snapshot: Option<PathBuf>,
    pub pretrain: Option<PretrainSummary>,
    pub final_rel_l2: Option<f64>,
    pub wall_time: Duration,
    /// Set when the run stopped early; the files hold the steps completed.
    pub partial: bool,
}

pub fn initial_expansion(ic: InitialCondition) -> Result<ModalExpansion<f64>, RunError> {
    match ic {
        InitialCondition::Experiment1 => experiment1_expansion(),
        InitialCondition::Mode { m, n } => ModalExpansion::single_mode(m, n, 1.0),
    }
    .map_err(|e| RunError::Setup(e.to_string()))
}

/// Converts a relative L² target on the interior samples to a total-loss
/// threshold: `tol² · mean(u₀²)`.
pub fn pretrain_loss_tolerance(rel_tol: f64, u0_interior: &[f64]) -> f64 {
    let mean_sq = u0_interior.iter().map(|v| v * v).sum::<f64>() / u0_interior.len().max(1) as f64;
    rel_tol * rel_tol * mean_sq
}

pub fn stepper_config(cfg: &RunConfig) -> StepperConfig<f64> {
    StepperConfig { n_it: cfg.n_it, alpha: cfg.alpha, ridge: cfg.ridge, lambda_d: cfg.lambda_d }
}

pub fn pretrain_stepper_config(cfg: &RunConfig) -> StepperConfig<f64> {
    StepperConfig { ridge: cfg.pretrain_ridge, ..stepper_config(cfg) }
}

/// Everything derived from the configuration before any training.
pub struct Setup {
    pub expansion: ModalExpansion<f64>,
    pub exact: ExactSolution<f64>,
    pub samples: SampleSet<f64>,
    pub grid: EvalGrid<f64>,
    pub bc: DirichletBC<f64>,
    pub spec: ModelSpec,
}

impl Setup {
    pub fn new(cfg: &RunConfig) -> Result<Self, RunError> {
        let setup = |e: &dyn std::fmt::Display| RunError::Setup(e.to_string());
        let expansion = initial_expansion(cfg.initial_condition)?;
        let samples = SampleSet::generate(cfg.n_samples, cfg.n_boundary, cfg.sampler_seed).map_err(|e| setup(&e))?;
        let grid = make_grid(cfg.grid_resolution).map_err(|e| setup(&e))?;
        let bc = DirichletBC::homogeneous(cfg.lambda_d).map_err(|e| setup(&e))?;
        let spec = ModelSpec::new(cfg.hidden_widths.clone(), cfg.model_seed).map_err(|e| setup(&e))?;
        Ok(Self { exact: ExactSolution::new(expansion.clone(), cfg.nu), expansion, samples, grid, bc, spec })
    }

    pub fn monitor(&self) -> ErrorMonitor<f64> {
        ErrorMonitor::uniform(self.exact.clone(), self.grid.points.clone())
    }
}

/// Pretrained plain network, from `snapshot_path` when that file exists.
pub fn pretrained_network(
    cfg: &RunConfig,
    setup: &Setup,
) -> Result<(Mlp, ParamVector64, PretrainSummary), RunError> {
    let net = Mlp::new(setup.spec.clone()).map_err(|e| RunError::Setup(e.to_string()))?;
    let u0 = setup.expansion.eval(setup.samples.interior());
    let loss_tolerance = pretrain_loss_tolerance(cfg.pretrain_tol, &u0);
    let summarize = |theta: &ParamVector64| -> Result<LossReport<f64>, RunError> {
        let values = net.eval(theta, setup.samples.all_points());
        let (inner, outer) = values.split_at(setup.samples.n_interior());
        loss(inner, &u0, outer, &setup.bc, setup.samples.boundary()).map_err(|e| RunError::Setup(e.to_string()))
    };

    if let Some(path) = cfg.snapshot_path.as_ref().filter(|p| p.exists()) {
        let snap = |source| RunError::Snapshot { path: path.clone(), source };
        let (spec, theta) = load_snapshot::<f64>(path).map_err(snap)?;
        if spec.hidden_widths != setup.spec.hidden_widths {
            return Err(RunError::Setup(format!(
                "snapshot widths {:?} differ from hidden_widths {:?}",
                spec.hidden_widths, setup.spec.hidden_widths
            )));
        }
        let report = summarize(&theta)?;
        let summary = PretrainSummary {
            rounds: 0,
            tolerance_met: report.total <= loss_tolerance,
            loss: report,
            loss_tolerance,
            from_snapshot: true,
        };
        return Ok((net, theta, summary));
    }

    let rep = pretrain(
        &net,
        &init_params(&setup.spec),
        &setup.expansion,
        &setup.samples,
        &setup.bc,
        &pretrain_stepper_config(cfg),
        cfg.pretrain_max_rounds,
        loss_tolerance,
    )
    .map_err(|source| RunError::Engine { source, partial: None })?;
    if let Some(path) = &cfg.snapshot_path {
        save_snapshot(path, &setup.spec, &rep.theta).map_err(|source| RunError::Snapshot { path: path.clone(), source })?;
    }
    let summary = PretrainSummary {
        rounds: rep.rounds,
        tolerance_met: rep.tolerance_met,
        loss: rep.achieved_loss,
        loss_tolerance,
        from_snapshot: false,
    };
    Ok((net, rep.theta, summary))
}

/// Writes the CSV row and any requested field grids for each record.
struct Recorder<'a> {
    csv: CsvWriter,
    csv_path: PathBuf,
    field_dir: PathBuf,
    field_steps: Vec<usize>,
    grid: &'a EvalGrid<f64>,
    exact: &'a ExactSolution<f64>,
    fields: Vec<FieldFiles>,
    last_error: Option<f64>,
    failure: Option<RunError>,
}

impl<'a> Recorder<'a> {
    fn new(cfg: &RunConfig, setup: &'a Setup) -> Result<Self, RunError> {
        let csv_path = cfg.output_dir.join(ERROR_CSV);
        let field_dir = cfg.output_dir.join(FIELD_DIR);
        fs::create_dir_all(&field_dir).map_err(io_err(&field_dir))?;
        Ok(Self {
            csv: CsvWriter::create(&csv_path).map_err(io_err(&csv_path))?,
            csv_path,
            field_dir,
            field_steps: cfg.field_steps(),
            grid: &setup.grid,
            exact: &setup.exact,
            fields: Vec::new(),
            last_error: None,
            failure: None,
        })
    }

    fn record(&mut self, r: &TrajectoryRecord<f64>, predicted: impl FnOnce() -> Vec<f64>) {
        if self.failure.is_some() {
            return;
        }
        if let Err(e) = self.try_record(r, predicted) {
            self.failure = Some(e);
        }
    }

    fn try_record(&mut self, r: &TrajectoryRecord<f64>, predicted: impl FnOnce() -> Vec<f64>) -> Result<(), RunError> {
        self.csv.push(r).map_err(io_err(&self.csv_path))?;
        self.last_error = r.rel_l2_error;
        if self.field_steps.binary_search(&r.step_index).is_err() {
            return Ok(());
        }
        let exact = self.exact.eval(r.time, &self.grid.points);
        let predicted = predicted();
        let error: Vec<f64> = predicted.iter().zip(&exact).map(|(p, e)| p - e).collect();
        let stem = format!("step{:06}", r.step_index);
        let files = FieldFiles {
            step: r.step_index,
            time: r.time,
            exact: self.field_dir.join(format!("{stem}_exact.txt")),
            predicted: self.field_dir.join(format!("{stem}_predicted.txt")),
            error: self.field_dir.join(format!("{stem}_error.txt")),
        };
        for (path, values) in [(&files.exact, &exact), (&files.predicted, &predicted), (&files.error, &error)] {
            export_grid(self.grid, values, path).map_err(io_err(path))?;
        }
        self.fields.push(files);
        Ok(())
    }

    fn finish(self) -> Result<(PathBuf, Vec<FieldFiles>, Option<f64>), RunError> {
        if let Some(e) = self.failure {
            return Err(e);
        }
        self.csv.finish().map_err(io_err(&self.csv_path))?;
        Ok((self.csv_path, self.fields, self.last_error))
    }
}

/// Runs one experiment end to end and writes its artifacts under
/// `cfg.output_dir`.
pub fn run_experiment(cfg: &RunConfig) -> Result<OutputManifest, RunError> {
    let start = Instant::now();
    cfg.validate()?;
    fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    let config_echo = cfg.output_dir.join(CONFIG_ECHO);
    fs::write(&config_echo, cfg.to_text()).map_err(io_err(&config_echo))?;

    let setup = Setup::new(cfg)?;
    let mut recorder = Recorder::new(cfg, &setup)?;
    let n_steps = cfg.n_steps;

    if cfg.oracle_selftest {
        oracle_trajectory(cfg, &setup, &mut recorder)?;
        let (error_csv, field_grids, final_rel_l2) = recorder.finish()?;
        return Ok(OutputManifest {
            error_csv,
            field_grids,
            config_echo,
            snapshot: None,
            pretrain: None,
            final_rel_l2,
            wall_time: start.elapsed(),
            partial: false,
        });
    }

    let (ansatz, theta0, pretrain_summary) = match cfg.init_mode {
        InitMode::Pretrained => {
            let (net, theta, summary) = pretrained_network(cfg, &setup)?;
            (AnsatzKind::PlainMlp(net), theta, Some(summary))
        }
        InitMode::FrozenDifference => {
            let net = Mlp::new(setup.spec.clone()).map_err(|e| RunError::Setup(e.to_string()))?;
            let theta = init_params(&setup.spec);
            let fd = FrozenDifference::new(net, theta.clone(), setup.expansion.clone())
                .map_err(|e| RunError::Setup(e.to_string()))?;
            (AnsatzKind::FrozenDifference(fd), theta, None)
        }
    };

    let collocation = if cfg.resample {
        Collocation::Resampled { n_interior: cfg.n_samples, n_boundary: cfg.n_boundary, seed: cfg.sampler_seed }
    } else {
        Collocation::Fixed(setup.samples.clone())
    };
    let monitor = setup.monitor();
    let operator = HeatOperator::new(cfg.nu).map_err(|e| RunError::Setup(e.to_string()))?;
    let problem = Problem { ansatz: &ansatz, operator, bc: &setup.bc, collocation: &collocation, monitor: Some(&monitor) };
    let icfg = IntegratorConfig { dt: cfg.dt, t_final: cfg.t_final(), scheme: cfg.scheme };
    debug_assert_eq!(icfg.n_steps(), n_steps);

    let grid_points = &setup.grid.points;
    let mut observer = |r: &TrajectoryRecord<f64>, theta: &ParamVector64| {
        recorder.record(r, || ansatz.eval(theta, grid_points));
    };
    let outcome = integrate(&problem, &theta0, &stepper_config(cfg), &icfg, Some(&mut observer));

    let snapshot = cfg.snapshot_path.clone().filter(|_| cfg.init_mode == InitMode::Pretrained);
    let (error_csv, field_grids, final_rel_l2) = recorder.finish()?;
    let manifest = OutputManifest {
        error_csv,
        field_grids,
        config_echo,
        snapshot,
        pretrain: pretrain_summary,
        final_rel_l2,
        wall_time: start.elapsed(),
        partial: outcome.is_err(),
    };
    match outcome {
        Ok(_) => Ok(manifest),
        Err(source) => Err(RunError::Engine { source, partial: Some(Box::new(manifest)) }),
    }
}

/// Records the exact solution as the prediction at every step.
fn oracle_trajectory(cfg: &RunConfig, setup: &Setup, recorder: &mut Recorder<'_>) -> Result<(), RunError> {
    let monitor = setup.monitor();
    for step in 0..=cfg.n_steps {
        let time = step as f64 * cfg.dt;
        let exact_grid = setup.exact.eval(time, &monitor.points);
        let inner = setup.exact.eval(time, setup.samples.interior());
        let outer = setup.exact.eval(time, setup.samples.boundary());
        let report = loss(&inner, &inner, &outer, &setup.bc, setup.samples.boundary())
            .map_err(|e| RunError::Setup(e.to_string()))?;
        let record = TrajectoryRecord {
            step_index: step,
            time,
            loss_report: report,
            rel_l2_error: teng_core::engine::relative_l2(&exact_grid, &exact_grid, &monitor.weights),
            stepper_iterations_used: 0,
            backoff_events: 0,
        };
        recorder.record(&record, || exact_grid.clone());
    }
    Ok(())
}

/// Exact-solution grids at the configured field times.
pub fn dump_oracle(cfg: &RunConfig) -> Result<Vec<PathBuf>, RunError> {
    let setup = Setup::new(cfg)?;
    fs::create_dir_all(&cfg.output_dir).map_err(io_err(&cfg.output_dir))?;
    let mut paths = Vec::new();
    for step in cfg.field_steps() {
        let path = cfg.output_dir.join(format!("oracle_step{step:06}.txt"));
        let values = setup.exact.eval(step as f64 * cfg.dt, &setup.grid.points);
        export_grid(&setup.grid, &values, &path).map_err(io_err(&path))?;
        paths.push(path);
    }
    Ok(paths)
}
