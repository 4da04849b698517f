//! Synthetic benchmark: ten functional predictors built from nine Fourier
//! components, a multiscale coefficient table, and a replication harness
//! comparing the filtrated fit with fixed-structure baselines.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::FORMAT_VERSION;
use crate::error::{Error, Result};
use crate::fdata::{fourier_basis, inner_product, Curve, CurveSet, Dataset, Grid, DEFAULT_GRID_SIZE};
use crate::forest::Forest;
use crate::fusionpath::GroupingStructure;
use crate::linalg::median;
use crate::model::{FittedModel, SharedLayerMatrix};
use crate::pipeline::{PipelineConfig, Session};
use crate::rng::{derive_seed, task_rng};

/// Coefficient scores `b_{jd}` (rows: predictors, columns: dimensions).
pub const COEFFICIENTS: [[f64; 9]; 10] = [
    [3.0, 2.0, 0.0, 2.0, 1.60, 1.35, 1.05, 0.80, 0.55],
    [3.0, 2.0, 0.0, 2.0, 1.20, 1.00, 0.82, 0.58, 0.40],
    [3.0, 2.0, 2.0, 0.0, 1.45, 1.10, 0.78, 0.50, 0.32],
    [3.0, 2.0, 2.0, 0.0, 1.00, 1.45, 0.95, 0.62, 0.38],
    [3.0, 2.0, 2.0, 0.0, 0.85, 1.55, 1.20, 0.82, 0.60],
    [3.0, 2.0, 1.0, 1.0, 0.82, 1.28, 0.88, 0.56, 0.32],
    [3.0, 2.0, 1.0, 1.0, 0.72, 1.42, 1.02, 0.78, 0.46],
    [3.0, 2.0, 1.0, 1.0, 1.22, 0.72, 0.48, 0.28, 0.16],
    [3.0, 2.0, 1.0, 1.0, 1.42, 1.05, 0.72, 0.46, 0.24],
    [3.0, 2.0, 1.0, 1.0, 0.70, 0.92, 0.68, 0.46, 0.22],
];

pub const N_PREDICTORS: usize = 10;
pub const N_DIMS: usize = 9;
pub const TEST_SIZE: usize = 200;

/// Variance law of the predictor scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decay {
    /// `Var ξ_d = 1.1^{-d}`.
    Strong,
    /// `Var ξ_d = 1.1^{d-10}`.
    Weak,
}

impl Decay {
    /// Score variance of 1-based dimension `d`.
    pub fn variance(self, d: usize) -> f64 {
        match self {
            Decay::Strong => 1.1f64.powi(-(d as i32)),
            Decay::Weak => 1.1f64.powi(d as i32 - 10),
        }
    }
}

impl std::str::FromStr for Decay {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strong" => Ok(Decay::Strong),
            "weak" => Ok(Decay::Weak),
            _ => Err(Error::InvalidInput(format!("unknown decay '{s}', expected strong or weak"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_samples: usize,
    pub sigma: f64,
    pub decay: Decay,
    pub seed: u64,
    pub grid_size: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_samples: 200,
            sigma: 0.5,
            decay: Decay::Strong,
            seed: 0,
            grid_size: DEFAULT_GRID_SIZE,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::InvalidInput("at least two samples are required".into()));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidInput("sigma must be finite and nonnegative".into()));
        }
        Grid::uniform(self.grid_size).map(|_| ())
    }
}

/// The generating hierarchy: two global layers, two block layers
/// `{1,2}, {3,4,5}, {6..10}`, and five singleton layers.
pub fn setup_forest() -> Forest {
    let p = N_PREDICTORS;
    let blocks = GroupingStructure::new(vec![vec![0, 1], vec![2, 3, 4], vec![5, 6, 7, 8, 9]]).expect("valid blocks");
    let mut layers = vec![GroupingStructure::single_group(p); 2];
    layers.extend(vec![blocks; 2]);
    layers.extend(vec![GroupingStructure::singletons(p); 5]);
    Forest { layers }
}

/// Everything used to generate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub version: String,
    pub config: SimConfig,
    /// Scores `ξ[j][n][d]`.
    pub scores: Vec<Vec<Vec<f64>>>,
    pub noiseless: Vec<f64>,
    pub coefficients: Vec<Vec<f64>>,
    pub hierarchy: Forest,
}

#[derive(Debug, Clone)]
pub struct SimData {
    pub data: Dataset,
    pub truth: Truth,
}

/// Coefficient function `β_j = Σ_d b_{jd} B_d` on `grid`.
pub fn coefficient_curve(j: usize, grid: &Grid) -> Curve {
    let mut v = vec![0.0; grid.len()];
    for (d, b) in COEFFICIENTS[j].iter().enumerate() {
        let basis = fourier_basis(d + 1, grid);
        for (k, x) in v.iter_mut().enumerate() {
            *x += b * basis.values[k];
        }
    }
    Curve::new(v)
}

/// Scores `ξ[j][n][d]` for `n` samples.
pub fn draw_scores<R: Rng>(decay: Decay, n: usize, rng: &mut R) -> Vec<Vec<Vec<f64>>> {
    let sd: Vec<f64> = (1..=N_DIMS).map(|d| decay.variance(d).sqrt()).collect();
    let mut scores = vec![vec![vec![0.0; N_DIMS]; n]; N_PREDICTORS];
    for xi_n in scores.iter_mut().flat_map(|s| s.iter_mut()) {
        for (d, v) in xi_n.iter_mut().enumerate() {
            *v = sd[d] * rng.sample::<f64, _>(StandardNormal);
        }
    }
    scores
}

/// Draws `n` samples from the stream `tag` of `cfg.seed`.
pub fn gen_sample(cfg: &SimConfig, n: usize, tag: &str) -> Result<SimData> {
    cfg.validate()?;
    let grid = Grid::uniform(cfg.grid_size)?;
    let basis: Vec<Curve> = (1..=N_DIMS).map(|d| fourier_basis(d, &grid)).collect();
    let mut rng = task_rng(cfg.seed, tag, 0);
    let scores = draw_scores(cfg.decay, n, &mut rng);
    let preds: Vec<DMatrix<f64>> = scores
        .iter()
        .map(|sj| {
            DMatrix::from_fn(n, grid.len(), |i, k| {
                (0..N_DIMS).map(|d| sj[i][d] * basis[d].values[k]).sum()
            })
        })
        .collect();
    let curves = CurveSet::new(grid.clone(), preds)?;
    let betas: Vec<Curve> = (0..N_PREDICTORS).map(|j| coefficient_curve(j, &grid)).collect();
    let mut noiseless = vec![0.0; n];
    for (i, y) in noiseless.iter_mut().enumerate() {
        for (j, beta) in betas.iter().enumerate() {
            *y += inner_product(&curves.curve(i, j), beta, &grid)?;
        }
    }
    let response: Vec<f64> = noiseless
        .iter()
        .map(|y| y + cfg.sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Ok(SimData {
        data: Dataset::new(curves, response)?,
        truth: Truth {
            version: FORMAT_VERSION.to_string(),
            config: *cfg,
            scores,
            noiseless,
            coefficients: COEFFICIENTS.iter().map(|r| r.to_vec()).collect(),
            hierarchy: setup_forest(),
        },
    })
}

/// Training dataset of `cfg`.
pub fn gen_dataset(cfg: &SimConfig) -> Result<SimData> {
    gen_sample(cfg, cfg.n_samples, "train")
}

/// Competing fitting methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Learned forest.
    Filtrated,
    /// One path structure repeated across layers.
    Grouped,
    /// All singletons at every layer.
    Ordinary,
    /// The generating hierarchy.
    Setup,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Filtrated, Method::Grouped, Method::Ordinary, Method::Setup];

    pub fn name(self) -> &'static str {
        match self {
            Method::Filtrated => "filtrated",
            Method::Grouped => "grouped",
            Method::Ordinary => "ordinary",
            Method::Setup => "setup",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method '{s}'")))
    }
}

/// Baseline fits on a prepared session.
pub fn fit_ordinary_baseline(data: &Dataset, cfg: &PipelineConfig) -> Result<FittedModel> {
    Session::new(data, cfg)?.fit_ordinary()
}

pub fn fit_fixed_group_baseline(
    data: &Dataset,
    path: &crate::fusionpath::GroupingPath,
    cfg: &PipelineConfig,
) -> Result<(FittedModel, GroupingStructure)> {
    Session::new(data, cfg)?.fit_fixed_group(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub n_reps: usize,
    pub methods: Vec<Method>,
    pub pipeline: PipelineConfig,
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    pub mse: BTreeMap<Method, f64>,
    /// Learned forest, 1-based signatures per layer.
    pub forest: Vec<String>,
    pub grouped_structure: Option<String>,
    pub n_layers: BTreeMap<Method, usize>,
    pub theta: Option<(f64, f64)>,
    pub shared: Option<SharedLayerMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub index: usize,
    pub error: String,
}

/// Aggregated replication results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub mse: BTreeMap<Method, Vec<f64>>,
    pub median_mse: BTreeMap<Method, f64>,
    /// Mean shared-layer counts of the learned forests.
    pub mean_shared: Option<SharedLayerMatrix>,
    pub replications: Vec<Replication>,
    pub failures: Vec<Failure>,
}

/// Wall-clock timings, kept apart from the report so that reports are
/// reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub total_secs: f64,
    pub per_replication_secs: Vec<f64>,
}

fn test_mse(model: &FittedModel, test: &Dataset) -> Result<f64> {
    let pred = model.predict(&test.curves)?;
    Ok(pred.iter().zip(&test.response).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / pred.len() as f64)
}

/// One replication: fresh train/test data, then every requested method.
pub fn run_replication(cfg: &ExperimentConfig, index: usize) -> Result<Replication> {
    let seed = derive_seed(cfg.sim.seed, "replication", index as u64);
    let sim = SimConfig { seed, ..cfg.sim };
    let train = gen_sample(&sim, sim.n_samples, "train")?.data;
    let test = gen_sample(&sim, TEST_SIZE, "test")?.data;
    let mut pipeline = cfg.pipeline.clone();
    pipeline.mccv.seed = derive_seed(seed, "mccv", 0);
    let session = Session::new(&train, &pipeline)?;
    let wants = |m: Method| cfg.methods.contains(&m);
    let mut rep = Replication {
        index,
        seed,
        mse: BTreeMap::new(),
        forest: Vec::new(),
        grouped_structure: None,
        n_layers: BTreeMap::new(),
        theta: None,
        shared: None,
    };
    let record = |rep: &mut Replication, m: Method, model: &FittedModel| -> Result<()> {
        rep.mse.insert(m, test_mse(model, &test)?);
        rep.n_layers.insert(m, model.layers.len());
        Ok(())
    };
    if wants(Method::Filtrated) || wants(Method::Grouped) {
        let (path, _) = session.path()?;
        let ((model, report), (grouped, structure)) = session.fit_both(&path)?;
        if wants(Method::Filtrated) {
            record(&mut rep, Method::Filtrated, &model)?;
            rep.forest = model.forest.layers.iter().map(|s| s.signature()).collect();
            rep.theta = Some((report.theta.rho, report.theta.gamma));
            rep.shared = Some(model.shared_layer_counts());
        }
        if wants(Method::Grouped) {
            record(&mut rep, Method::Grouped, &grouped)?;
            rep.grouped_structure = Some(structure.signature());
        }
    }
    if wants(Method::Ordinary) {
        record(&mut rep, Method::Ordinary, &session.fit_ordinary()?)?;
    }
    if wants(Method::Setup) {
        record(&mut rep, Method::Setup, &session.fit_forest(&setup_forest())?)?;
    }
    Ok(rep)
}

/// Runs `n_reps` replications and aggregates the results.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentReport, RuntimeStats)> {
    if cfg.n_reps == 0 {
        return Err(Error::InvalidInput("at least one replication is required".into()));
    }
    if cfg.methods.is_empty() {
        return Err(Error::InvalidInput("no methods requested".into()));
    }
    cfg.sim.validate()?;
    let start = Instant::now();
    let outcomes: Vec<(Result<Replication>, f64)> = (0..cfg.n_reps)
        .into_par_iter()
        .map(|i| {
            let t = Instant::now();
            let r = run_replication(cfg, i);
            (r, t.elapsed().as_secs_f64())
        })
        .collect();
    let mut replications = Vec::new();
    let mut failures = Vec::new();
    let mut per_rep = Vec::new();
    for (i, (r, secs)) in outcomes.into_iter().enumerate() {
        per_rep.push(secs);
        match r {
            Ok(r) => replications.push(r),
            Err(e) => {
                log::warn!("replication {i} failed: {e}");
                failures.push(Failure { index: i, error: e.to_string() });
            }
        }
    }
    if failures.len() as f64 > 0.1 * cfg.n_reps as f64 {
        return Err(Error::Evaluation(format!("{} of {} replications failed", failures.len(), cfg.n_reps)));
    }
    let mut mse: BTreeMap<Method, Vec<f64>> = BTreeMap::new();
    for r in &replications {
        for (m, v) in &r.mse {
            mse.entry(*m).or_default().push(*v);
        }
    }
    let median_mse = mse.iter().map(|(m, v)| (*m, median(v))).collect();
    let shared: Vec<SharedLayerMatrix> = replications.iter().filter_map(|r| r.shared.clone()).collect();
    let report = ExperimentReport {
        version: FORMAT_VERSION.to_string(),
        config: cfg.clone(),
        mse,
        median_mse,
        mean_shared: SharedLayerMatrix::mean(&shared),
        replications,
        failures,
    };
    let stats = RuntimeStats {
        total_secs: start.elapsed().as_secs_f64(),
        per_replication_secs: per_rep,
    };
    Ok((report, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdata::l2_norm;
    use crate::model::shared_layer_counts;

    #[test]
    fn table_rows_match() {
        assert_eq!(COEFFICIENTS[0], [3.0, 2.0, 0.0, 2.0, 1.60, 1.35, 1.05, 0.80, 0.55]);
        assert_eq!(COEFFICIENTS[9], [3.0, 2.0, 1.0, 1.0, 0.70, 0.92, 0.68, 0.46, 0.22]);
    }

    #[test]
    fn setup_counts() {
        let s = shared_layer_counts(&setup_forest());
        assert_eq!(s.get(1, 2), 4.0);
        assert_eq!(s.get(3, 5), 4.0);
        assert_eq!(s.get(1, 3), 2.0);
        assert_eq!(s.get(1, 10), 2.0);
        assert_eq!(s.get(3, 4), 4.0);
        for i in 1..=10 {
            assert_eq!(s.get(i, i), 9.0);
        }
        setup_forest().validate(10).unwrap();
    }

    #[test]
    fn noiseless_response_is_score_sum() {
        let cfg = SimConfig { sigma: 0.0, n_samples: 30, ..Default::default() };
        let sim = gen_dataset(&cfg).unwrap();
        for n in 0..30 {
            let want: f64 = (0..10)
                .map(|j| (0..9).map(|d| sim.truth.scores[j][n][d] * COEFFICIENTS[j][d]).sum::<f64>())
                .sum();
            assert!((sim.data.response[n] - want).abs() < 1e-9 * (1.0 + want.abs()));
            assert_eq!(sim.data.response[n], sim.truth.noiseless[n]);
        }
    }

    #[test]
    fn noiseless_variance_matches_closed_form() {
        // Independent scores: Var y = Σ_d Var ξ_d Σ_j b_jd².
        let cfg = SimConfig { sigma: 0.0, n_samples: 200, seed: 3, ..Default::default() };
        let y = gen_dataset(&cfg).unwrap().data.response;
        let n = y.len() as f64;
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let want: f64 = (0..9)
            .map(|d| Decay::Strong.variance(d + 1) * (0..10).map(|j| COEFFICIENTS[j][d].powi(2)).sum::<f64>())
            .sum();
        // Normal data: SE of the sample variance is σ² √(2/(n-1)).
        let se = want * (2.0 / (n - 1.0)).sqrt();
        assert!((var - want).abs() < 3.0 * se, "{var} vs {want}");
    }

    #[test]
    fn first_score_variance_follows_strong_law() {
        let sim = gen_dataset(&SimConfig { seed: 5, ..Default::default() }).unwrap();
        let v: Vec<f64> = sim.truth.scores[0].iter().map(|s| s[0]).collect();
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        let want = 1.0 / 1.1;
        assert!((var - want).abs() < 3.0 * want * (2.0 / (n - 1.0)).sqrt());
    }

    #[test]
    fn score_laws_calibrate() {
        let n = 10_000;
        for decay in [Decay::Strong, Decay::Weak] {
            let xi = draw_scores(decay, n, &mut task_rng(11, "calibration", 0));
            for j in 0..10 {
                for d in 0..9 {
                    let v: Vec<f64> = xi[j].iter().map(|s| s[d]).collect();
                    let m = v.iter().sum::<f64>() / n as f64;
                    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
                    let law = match decay {
                        Decay::Strong => 1.1f64.powf(-(d as f64 + 1.0)),
                        Decay::Weak => 1.1f64.powf(d as f64 + 1.0 - 10.0),
                    };
                    let se = law * (2.0 / (n as f64 - 1.0)).sqrt();
                    assert!((var - law).abs() < 4.0 * se, "{decay:?} j={j} d={d}: {var} vs {law}");
                }
            }
        }
    }

    #[test]
    fn noiseless_response_is_exact_in_scores() {
        let cfg = SimConfig { sigma: 0.0, n_samples: 150, seed: 2, ..Default::default() };
        let sim = gen_dataset(&cfg).unwrap();
        let n = 150;
        let design = DMatrix::from_fn(n, 90, |i, c| sim.truth.scores[c / 9][i][c % 9]);
        let y = nalgebra::DVector::from_vec(sim.data.response.clone());
        let rss = crate::linalg::lstsq_rss(&design, &y);
        let mean = y.mean();
        let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        assert!(1.0 - rss / tss > 1.0 - 1e-8);
    }

    #[test]
    fn generation_is_reproducible() {
        let cfg = SimConfig { n_samples: 20, seed: 9, ..Default::default() };
        let a = gen_dataset(&cfg).unwrap();
        let b = gen_dataset(&cfg).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.truth, b.truth);
        let c = gen_dataset(&SimConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.data, c.data);
    }

    #[test]
    fn coefficient_curves_have_table_norms() {
        let grid = Grid::uniform(101).unwrap();
        for j in 0..10 {
            let want: f64 = COEFFICIENTS[j].iter().map(|b| b * b).sum::<f64>().sqrt();
            assert!((l2_norm(&coefficient_curve(j, &grid), &grid).unwrap() - want).abs() < 1e-8);
        }
    }

    #[test]
    fn decay_parsing() {
        assert_eq!("weak".parse::<Decay>().unwrap(), Decay::Weak);
        assert!("medium".parse::<Decay>().is_err());
        assert_eq!("setup".parse::<Method>().unwrap(), Method::Setup);
    }
}
