//! Subcommand arguments and implementations.
//!
//! Every argument struct holds optional values so that `--config` files and
//! command-line flags can be merged; `resolve` fills in the defaults and
//! produces the settings echoed to `run_config.json`.

use std::fs::File;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use filtra_core::fdata::Grid;
use filtra_core::fusionpath::{compute_path, FusionConfig, GroupingPath, Penalty};
use filtra_core::io::{align_response, read_curves, read_response, write_curves, write_predictions, write_response, LabeledDataset};
use filtra_core::model::{model_report, FittedModel};
use filtra_core::pipeline::{PipelineConfig, Session};
use filtra_core::simgen::{gen_dataset, run_experiment, Decay, ExperimentConfig, Method, SimConfig};
use filtra_core::{Dataset, StoppingConfig};

use crate::config::{merge, RunConfig, RUN_CONFIG_FILE};
use crate::output::OutputDir;
use crate::{CliError, CliResult};

fn parse_decay(s: &str) -> Result<Decay, String> {
    s.parse().map_err(|e: filtra_core::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: filtra_core::Error| e.to_string())
}

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("missing required option --{flag}")))
}

fn with_file<T>(r: filtra_core::Result<T>, file: &Path) -> CliResult<T> {
    r.map_err(|error| CliError::Data {
        error,
        file: Some(file.to_path_buf()),
    })
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::Data {
        error: e.into(),
        file: Some(path.to_path_buf()),
    })
}

fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data {
        error: e.into(),
        file: Some(path.to_path_buf()),
    })
}

fn grid(size: usize) -> CliResult<Grid> {
    Grid::uniform(size).map_err(|e| CliError::Usage(e.to_string()))
}

fn read_data(curves: &Path, response: &Path, grid: &Grid) -> CliResult<LabeledDataset> {
    let table = with_file(read_curves(open(curves)?, grid), curves)?;
    let resp = with_file(read_response(open(response)?), response)?;
    let y = with_file(align_response(&table, &resp), response)?;
    Ok(LabeledDataset {
        data: Dataset::new(table.curves, y)?,
        sample_ids: table.sample_ids,
        predictor_ids: table.predictor_ids,
    })
}

fn read_model(path: &Path) -> CliResult<FittedModel> {
    with_file(FittedModel::from_json(&read_text(path)?), path)
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::from(std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::from(std::io::Error::other(e.to_string())))
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> filtra_core::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn echo<T: Serialize>(out: &OutputDir, subcommand: &str, settings: &T) -> CliResult<()> {
    out.write_json(RUN_CONFIG_FILE, &RunConfig::new(subcommand, settings))?;
    Ok(())
}

fn members(m: &[usize]) -> String {
    m.iter().map(|j| j.to_string()).collect::<Vec<_>>().join(";")
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Number of samples [default: 200].
    #[arg(long)]
    pub n: Option<usize>,
    /// Noise standard deviation [default: 0.5].
    #[arg(long)]
    pub sigma: Option<f64>,
    /// strong or weak [default: strong].
    #[arg(long, value_parser = parse_decay)]
    pub decay: Option<Decay>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid points [default: 101].
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replay an earlier run_config.json.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateSettings {
    pub n: usize,
    pub sigma: f64,
    pub decay: Decay,
    pub seed: u64,
    pub grid_size: usize,
    pub out: PathBuf,
}

impl SimulateArgs {
    pub fn resolve(self) -> CliResult<SimulateSettings> {
        let a: SimulateArgs = merge("simulate", &self, self.config.as_deref())?;
        Ok(SimulateSettings {
            n: a.n.unwrap_or(200),
            sigma: a.sigma.unwrap_or(0.5),
            decay: a.decay.unwrap_or(Decay::Strong),
            seed: a.seed.unwrap_or(0),
            grid_size: a.grid_size.unwrap_or(filtra_core::fdata::DEFAULT_GRID_SIZE),
            out: required(a.out, "out")?,
        })
    }
}

pub fn simulate(args: SimulateArgs) -> CliResult<()> {
    let s = args.resolve()?;
    let cfg = SimConfig {
        n_samples: s.n,
        sigma: s.sigma,
        decay: s.decay,
        seed: s.seed,
        grid_size: s.grid_size,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let sim = gen_dataset(&cfg)?;
    let out = OutputDir::create(&s.out)?;
    out.write("curves.csv", &to_bytes(|b| write_curves(b, &sim.data.curves))?)?;
    out.write("response.csv", &to_bytes(|b| write_response(b, &sim.data.response))?)?;
    out.write_json("truth.json", &sim.truth)?;
    echo(&out, "simulate", &s)
}

// -------------------------------------------------------------------- path

/// Fusion-path knobs shared by `path` and `fit`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct FusionArgs {
    /// Number of λ values [default: 40].
    #[arg(long)]
    pub n_lambda: Option<usize>,
    /// Smallest λ as a fraction of the largest [default: 0.001].
    #[arg(long)]
    pub lambda_ratio: Option<f64>,
    /// mcp or scad [default: mcp].
    #[arg(long)]
    pub penalty: Option<String>,
    /// Concavity of the penalty [default: 3].
    #[arg(long)]
    pub penalty_gamma: Option<f64>,
    /// Relative distance below which coefficient functions are fused [default: 0.001].
    #[arg(long)]
    pub fusion_tol: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FusionSettings {
    pub n_lambda: usize,
    pub lambda_ratio: f64,
    pub penalty: String,
    pub penalty_gamma: f64,
    pub fusion_tol: f64,
}

impl FusionArgs {
    fn resolve(&self) -> FusionSettings {
        let d = FusionConfig::default();
        FusionSettings {
            n_lambda: self.n_lambda.unwrap_or(d.n_lambda),
            lambda_ratio: self.lambda_ratio.unwrap_or(d.lambda_ratio),
            penalty: self.penalty.clone().unwrap_or_else(|| "mcp".into()),
            penalty_gamma: self.penalty_gamma.unwrap_or(3.0),
            fusion_tol: self.fusion_tol.unwrap_or(d.fusion_tol),
        }
    }
}

impl FusionSettings {
    fn config(&self) -> CliResult<FusionConfig> {
        let penalty = match self.penalty.as_str() {
            "mcp" => Penalty::Mcp { gamma: self.penalty_gamma },
            "scad" => Penalty::Scad { gamma: self.penalty_gamma },
            other => return Err(CliError::Usage(format!("unknown penalty '{other}', expected mcp or scad"))),
        };
        penalty.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if self.n_lambda == 0 || !(self.lambda_ratio > 0.0 && self.lambda_ratio < 1.0) {
            return Err(CliError::Usage("--n-lambda must be positive and --lambda-ratio in (0, 1)".into()));
        }
        Ok(FusionConfig {
            penalty,
            n_lambda: self.n_lambda,
            lambda_ratio: self.lambda_ratio,
            fusion_tol: self.fusion_tol,
            ..FusionConfig::default()
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct PathArgs {
    /// Long-format curves CSV.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// Response CSV.
    #[arg(long)]
    pub response: Option<PathBuf>,
    /// Grid points [default: 101].
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub fusion: FusionArgs,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replay an earlier run_config.json.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathSettings {
    pub curves: PathBuf,
    pub response: PathBuf,
    pub grid_size: usize,
    #[serde(flatten)]
    pub fusion: FusionSettings,
    pub out: PathBuf,
}

impl PathArgs {
    pub fn resolve(self) -> CliResult<PathSettings> {
        let a: PathArgs = merge("path", &self, self.config.as_deref())?;
        Ok(PathSettings {
            curves: required(a.curves, "curves")?,
            response: required(a.response, "response")?,
            grid_size: a.grid_size.unwrap_or(filtra_core::fdata::DEFAULT_GRID_SIZE),
            fusion: a.fusion.resolve(),
            out: required(a.out, "out")?,
        })
    }
}

pub fn path(args: PathArgs) -> CliResult<()> {
    let s = args.resolve()?;
    let fusion = s.fusion.config()?;
    let data = read_data(&s.curves, &s.response, &grid(s.grid_size)?)?;
    let prepared = filtra_core::PreparedData::new(&data.data)?;
    let (path, diag) = compute_path(&prepared.curves, &prepared.response, &fusion)?;
    let out = OutputDir::create(&s.out)?;
    out.write_json("path.json", &path)?;
    out.write_json("path_diagnostics.json", &diag)?;
    echo(&out, "path", &s)
}

// --------------------------------------------------------------------- fit

/// Stopping knobs shared by `fit` and `evaluate`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct StopArgs {
    /// Relative response improvement below which a layer is weak [default: 0.01].
    #[arg(long)]
    pub e_y: Option<f64>,
    /// Residual energy fraction that removes a predictor [default: 0.01].
    #[arg(long)]
    pub e_x: Option<f64>,
    /// Maximum number of layers [default: 12].
    #[arg(long)]
    pub d_max: Option<usize>,
    /// Consecutive weak layers that stop filtration [default: 2].
    #[arg(long)]
    pub window: Option<usize>,
    /// Monte Carlo splits [default: 100].
    #[arg(long)]
    pub splits: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StopSettings {
    pub e_y: f64,
    pub e_x: f64,
    pub d_max: usize,
    pub window: usize,
    pub splits: usize,
}

impl StopArgs {
    fn resolve(&self) -> StopSettings {
        let d = StoppingConfig::default();
        StopSettings {
            e_y: self.e_y.unwrap_or(d.e_y),
            e_x: self.e_x.unwrap_or(d.e_x),
            d_max: self.d_max.unwrap_or(d.d_max),
            window: self.window.unwrap_or(d.window),
            splits: self.splits.unwrap_or(100),
        }
    }
}

impl StopSettings {
    fn pipeline(&self, seed: u64) -> CliResult<PipelineConfig> {
        let stop = StoppingConfig {
            e_y: self.e_y,
            e_x: self.e_x,
            window: self.window,
            d_max: self.d_max,
        };
        stop.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let mut cfg = PipelineConfig { stop, ..PipelineConfig::default() };
        cfg.mccv.n_splits = self.splits;
        cfg.mccv.seed = seed;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct FitArgs {
    /// Long-format curves CSV.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// Response CSV.
    #[arg(long)]
    pub response: Option<PathBuf>,
    /// Grouping path JSON from `filtra path`; computed when omitted.
    #[arg(long)]
    pub path: Option<PathBuf>,
    /// `default`, or a JSON list of [rho, gamma] pairs [default: default].
    #[arg(long)]
    pub theta_grid: Option<String>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid points [default: 101].
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub stop: StopArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub fusion: FusionArgs,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replay an earlier run_config.json.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSettings {
    pub curves: PathBuf,
    pub response: PathBuf,
    pub path: Option<PathBuf>,
    pub theta_grid: String,
    pub seed: u64,
    pub grid_size: usize,
    #[serde(flatten)]
    pub stop: StopSettings,
    #[serde(flatten)]
    pub fusion: FusionSettings,
    pub out: PathBuf,
}

impl FitArgs {
    pub fn resolve(self) -> CliResult<FitSettings> {
        let a: FitArgs = merge("fit", &self, self.config.as_deref())?;
        Ok(FitSettings {
            curves: required(a.curves, "curves")?,
            response: required(a.response, "response")?,
            path: a.path,
            theta_grid: a.theta_grid.unwrap_or_else(|| "default".into()),
            seed: a.seed.unwrap_or(0),
            grid_size: a.grid_size.unwrap_or(filtra_core::fdata::DEFAULT_GRID_SIZE),
            stop: a.stop.resolve(),
            fusion: a.fusion.resolve(),
            out: required(a.out, "out")?,
        })
    }
}

fn parse_theta_grid(s: &str) -> CliResult<Option<Vec<(f64, f64)>>> {
    if s == "default" {
        return Ok(None);
    }
    let points: Vec<(f64, f64)> =
        serde_json::from_str(s).map_err(|e| CliError::Usage(format!("--theta-grid must be 'default' or [[rho, gamma], ...]: {e}")))?;
    Ok(Some(points))
}

pub fn fit(args: FitArgs) -> CliResult<()> {
    let s = args.resolve()?;
    let mut cfg = s.stop.pipeline(s.seed)?;
    cfg.fusion = s.fusion.config()?;
    cfg.theta_grid = parse_theta_grid(&s.theta_grid)?;
    let path = match &s.path {
        Some(p) => Some(with_file(GroupingPath::from_json(&read_text(p)?), p)?),
        None => None,
    };
    let data = read_data(&s.curves, &s.response, &grid(s.grid_size)?)?;
    if let Some(p) = &path {
        if p.n_predictors != data.data.n_predictors() {
            return Err(CliError::Data {
                error: filtra_core::Error::Dimension(format!(
                    "path covers {} predictors but the curves have {}",
                    p.n_predictors,
                    data.data.n_predictors()
                )),
                file: s.path.clone(),
            });
        }
    }
    cfg.validate(data.data.n_samples()).map_err(|e| CliError::Usage(e.to_string()))?;
    let session = Session::new(&data.data, &cfg)?;
    let path = match path {
        Some(p) => p,
        None => session.path()?.0,
    };
    let (model, report) = session.fit_filtrated(&path)?;
    let out = OutputDir::create(&s.out)?;
    let mut text = model.to_json()?;
    text.push('\n');
    out.write("model.json", text.as_bytes())?;
    out.write_json("structure_report.json", &report)?;
    echo(&out, "fit", &s)
}

// ----------------------------------------------------------------- predict

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct PredictArgs {
    /// Model JSON from `filtra fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Long-format curves CSV.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replay an earlier run_config.json.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictSettings {
    pub model: PathBuf,
    pub curves: PathBuf,
    pub out: PathBuf,
}

impl PredictArgs {
    pub fn resolve(self) -> CliResult<PredictSettings> {
        let a: PredictArgs = merge("predict", &self, self.config.as_deref())?;
        Ok(PredictSettings {
            model: required(a.model, "model")?,
            curves: required(a.curves, "curves")?,
            out: required(a.out, "out")?,
        })
    }
}

pub fn predict(args: PredictArgs) -> CliResult<()> {
    let s = args.resolve()?;
    let model = read_model(&s.model)?;
    let table = with_file(read_curves(open(&s.curves)?, &model.grid), &s.curves)?;
    let y_hat = with_file(model.predict(&table.curves), &s.curves)?;
    let out = OutputDir::create(&s.out)?;
    out.write("predictions.csv", &to_bytes(|b| write_predictions(b, &table.sample_ids, &y_hat))?)?;
    echo(&out, "predict", &s)
}

// ------------------------------------------------------------------ report

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Model JSON from `filtra fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Long-format curves CSV of the training data.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// Response CSV of the training data.
    #[arg(long)]
    pub response: Option<PathBuf>,
    /// Bootstrap resamples [default: 200].
    #[arg(long)]
    pub n_boot: Option<usize>,
    /// Interval level [default: 0.95].
    #[arg(long)]
    pub level: Option<f64>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replay an earlier run_config.json.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportSettings {
    pub model: PathBuf,
    pub curves: PathBuf,
    pub response: PathBuf,
    pub n_boot: usize,
    pub level: f64,
    pub seed: u64,
    pub out: PathBuf,
}

impl ReportArgs {
    pub fn resolve(self) -> CliResult<ReportSettings> {
        let a: ReportArgs = merge("report", &self, self.config.as_deref())?;
        Ok(ReportSettings {
            model: required(a.model, "model")?,
            curves: required(a.curves, "curves")?,
            response: required(a.response, "response")?,
            n_boot: a.n_boot.unwrap_or(200),
            level: a.level.unwrap_or(0.95),
            seed: a.seed.unwrap_or(0),
            out: required(a.out, "out")?,
        })
    }
}

pub fn report(args: ReportArgs) -> CliResult<()> {
    let s = args.resolve()?;
    let model = read_model(&s.model)?;
    let data = read_data(&s.curves, &s.response, &model.grid)?;
    let rep = model_report(&model, &data.data, s.n_boot, s.level, s.seed)?;
    let out = OutputDir::create(&s.out)?;
    out.write_json("report.json", &rep)?;
    let pss = rep.pss.iter().map(|e| {
        vec![e.layer.to_string(), e.group.to_string(), members(&e.members), e.coef_score.to_string(), e.pss.to_string()]
    });
    out.write("pss.csv", &csv_bytes(&["layer", "group", "members", "coef_score", "pss"], pss)?)?;
    let ci = rep.ci.entries.iter().map(|e| {
        vec![
            e.layer.to_string(),
            e.group.to_string(),
            members(&e.members),
            e.estimate.to_string(),
            e.lower.to_string(),
            e.upper.to_string(),
            e.significant.to_string(),
        ]
    });
    out.write("ci.csv", &csv_bytes(&["layer", "group", "members", "estimate", "lower", "upper", "significant"], ci)?)?;
    out.write("shared_layers.csv", &matrix_csv(&rep.shared_layers.counts, "count")?)?;
    echo(&out, "report", &s)
}

fn matrix_csv(m: &[Vec<f64>], value: &str) -> CliResult<Vec<u8>> {
    let rows = m
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, v)| vec![(i + 1).to_string(), (j + 1).to_string(), v.to_string()]));
    csv_bytes(&["i", "j", value], rows)
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    /// Replications [default: 50].
    #[arg(long)]
    pub reps: Option<usize>,
    /// Comma-separated subset of filtrated,grouped,ordinary,setup [default: all].
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub methods: Option<Vec<Method>>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training samples per replication [default: 200].
    #[arg(long)]
    pub n: Option<usize>,
    /// Noise standard deviation [default: 0.5].
    #[arg(long)]
    pub sigma: Option<f64>,
    /// strong or weak [default: strong].
    #[arg(long, value_parser = parse_decay)]
    pub decay: Option<Decay>,
    /// Grid points [default: 101].
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub stop: StopArgs,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Replay an earlier run_config.json.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateSettings {
    pub reps: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub n: usize,
    pub sigma: f64,
    pub decay: Decay,
    pub grid_size: usize,
    #[serde(flatten)]
    pub stop: StopSettings,
    pub out: PathBuf,
}

impl EvaluateArgs {
    pub fn resolve(self) -> CliResult<EvaluateSettings> {
        let a: EvaluateArgs = merge("evaluate", &self, self.config.as_deref())?;
        let mut methods = a.methods.unwrap_or_else(|| Method::ALL.to_vec());
        methods.sort();
        methods.dedup();
        Ok(EvaluateSettings {
            reps: a.reps.unwrap_or(50),
            methods,
            seed: a.seed.unwrap_or(0),
            n: a.n.unwrap_or(200),
            sigma: a.sigma.unwrap_or(0.5),
            decay: a.decay.unwrap_or(Decay::Strong),
            grid_size: a.grid_size.unwrap_or(filtra_core::fdata::DEFAULT_GRID_SIZE),
            stop: a.stop.resolve(),
            out: required(a.out, "out")?,
        })
    }
}

pub fn evaluate(args: EvaluateArgs) -> CliResult<()> {
    let s = args.resolve()?;
    let sim = SimConfig {
        n_samples: s.n,
        sigma: s.sigma,
        decay: s.decay,
        seed: s.seed,
        grid_size: s.grid_size,
    };
    sim.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if s.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    let cfg = ExperimentConfig {
        sim,
        n_reps: s.reps,
        methods: s.methods.clone(),
        pipeline: s.stop.pipeline(s.seed)?,
    };
    let (rep, stats) = run_experiment(&cfg)?;
    let out = OutputDir::create(&s.out)?;
    out.write_json("experiment_report.json", &rep)?;
    let mse = rep
        .replications
        .iter()
        .flat_map(|r| r.mse.iter().map(move |(m, v)| vec![r.index.to_string(), m.name().to_string(), v.to_string()]));
    out.write("mse_long.csv", &csv_bytes(&["replication", "method", "mse"], mse)?)?;
    if let Some(shared) = &rep.mean_shared {
        out.write("shared_heatmap.csv", &matrix_csv(&shared.counts, "mean_count")?)?;
    }
    out.write_json("runtime.json", &stats)?;
    echo(&out, "evaluate", &s)
}
