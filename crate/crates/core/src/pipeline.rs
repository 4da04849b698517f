//! End-to-end fitting: grouping path, candidate chains, θ selection,
//! refinement, plus the fixed-structure baselines that share its caches.

use serde::{Deserialize, Serialize};

use crate::artifact::FORMAT_VERSION;
use crate::error::{Error, Result};
use crate::fdata::{Dataset, PreparedData};
use crate::filtpls::{assemble_model, fit_forest, CoordData, CoreRun, StopReason, StoppingConfig};
use crate::forest::{
    enumerate_candidate_sets, fit_grouped, fixed_depth, pick_theta, refine_coords, select_cached, theta_errors, CandidateSet, Forest,
    GicConfig, GicTable, McCvConfig, ProbeCache, StructureErrors, ThetaGrid, DEFAULT_CHAIN_CAP,
};
use crate::fusionpath::{compute_path, FusionConfig, GroupingPath, GroupingStructure, PathDiagnostics};
use crate::model::FittedModel;
use crate::rng::derive_seed;

/// Every knob of the full fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub fusion: FusionConfig,
    pub mccv: McCvConfig,
    /// Explicit `(ρ, γ)` grid; `None` uses the default grid scaled by the
    /// response variance.
    pub theta_grid: Option<Vec<(f64, f64)>>,
    pub stop: StoppingConfig,
    pub chain_cap: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            fusion: FusionConfig::default(),
            mccv: McCvConfig::default(),
            theta_grid: None,
            stop: StoppingConfig::default(),
            chain_cap: DEFAULT_CHAIN_CAP,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        self.stop.validate()?;
        self.mccv.validate(n)?;
        self.fusion.penalty.validate()?;
        if self.chain_cap == 0 {
            return Err(Error::InvalidInput("chain cap must be positive".into()));
        }
        if let Some(g) = &self.theta_grid {
            if g.is_empty() {
                return Err(Error::InvalidInput("empty theta grid".into()));
            }
            for &(rho, gamma) in g {
                GicConfig::new(rho, gamma, self.stop)?;
            }
        }
        Ok(())
    }
}

/// How the structure of a filtrated fit was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub version: String,
    pub candidate_sets: Vec<CandidateSet>,
    pub candidate_errors: Vec<Option<f64>>,
    pub selected_set: usize,
    pub theta_grid: Vec<(f64, f64)>,
    pub theta_errors: Vec<Option<f64>>,
    pub theta: GicConfig,
    pub gic_tables: Vec<GicTable>,
    pub stop_reason: StopReason,
    pub forest: Forest,
}

/// Shared state of one training dataset: preprocessing, coordinates and
/// the per-structure error cache.
pub struct Session<'a> {
    data: &'a Dataset,
    prepared: PreparedData,
    raw: CoordData,
    cfg: PipelineConfig,
}

impl<'a> Session<'a> {
    pub fn new(data: &'a Dataset, cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate(data.n_samples())?;
        let prepared = PreparedData::new(data)?;
        let raw = CoordData::new(&data.curves, &data.response);
        Ok(Session {
            data,
            prepared,
            raw,
            cfg: cfg.clone(),
        })
    }

    pub fn prepared(&self) -> &PreparedData {
        &self.prepared
    }

    /// Grouping path of the standardized data.
    pub fn path(&self) -> Result<(GroupingPath, PathDiagnostics)> {
        compute_path(&self.prepared.curves, &self.prepared.response, &self.cfg.fusion)
    }

    fn errors(&self) -> StructureErrors<'_> {
        StructureErrors::new(&self.raw, self.cfg.mccv, self.cfg.stop.e_x)
    }

    /// Full filtrated fit from a grouping path.
    pub fn fit_filtrated(&self, path: &GroupingPath) -> Result<(FittedModel, StructureReport)> {
        let mut errs = self.errors();
        self.fit_filtrated_with(path, &mut errs)
    }

    fn fit_filtrated_with(&self, path: &GroupingPath, errs: &mut StructureErrors<'_>) -> Result<(FittedModel, StructureReport)> {
        let p = self.data.n_predictors();
        if path.n_predictors != p {
            return Err(Error::Dimension(format!(
                "path covers {} predictors but the data has {p}",
                path.n_predictors
            )));
        }
        path.validate()?;
        let sets = enumerate_candidate_sets(path, self.cfg.chain_cap);
        let (selected, candidate_errors) = select_cached(&sets, errs)?;
        let set = &sets[selected];

        let grid = self.theta_grid();
        let theta_errs = theta_errors(set, &self.raw, &grid, &self.cfg.stop, &self.cfg.mccv)?;
        let (rho, gamma) = grid.points[pick_theta(&theta_errs)?];
        let theta = GicConfig::new(rho, gamma, self.cfg.stop)?;

        // The prepared curves are already standardized.
        let coords = CoordData::new(&self.prepared.curves, &self.prepared.response.values);
        let y = self.prepared.response.to_dvector();
        let r = refine_coords(set, &coords.x, &y, &theta, &mut ProbeCache::new());
        let forest_layers: Vec<GroupingStructure> = r.chosen.iter().map(|&k| set.structures[k].clone()).collect();
        let run = CoreRun {
            layers: r.layers,
            stop: r.stop,
            initial_ss: r.initial_ss,
        };
        let model = assemble_model(
            self.prepared.curves.grid(),
            &coords.span,
            self.prepared.standardization.clone(),
            self.prepared.response.mean,
            &forest_layers,
            &run,
        );
        let report = StructureReport {
            version: FORMAT_VERSION.to_string(),
            candidate_sets: sets.clone(),
            candidate_errors,
            selected_set: selected,
            theta_grid: grid.points.clone(),
            theta_errors: theta_errs,
            theta,
            gic_tables: r.tables,
            stop_reason: run.stop,
            forest: model.forest.clone(),
        };
        Ok((model, report))
    }

    fn theta_grid(&self) -> ThetaGrid {
        match &self.cfg.theta_grid {
            Some(points) => ThetaGrid { points: points.clone() },
            None => {
                let y = &self.data.response;
                let n = y.len() as f64;
                let mean = y.iter().sum::<f64>() / n;
                let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                ThetaGrid::default_for(var)
            }
        }
    }

    /// `structure` repeated with depth `1..=d_max` chosen by inner CV.
    pub fn fit_repeated(&self, structure: &GroupingStructure) -> Result<FittedModel> {
        let stop = &self.cfg.stop;
        let seed = derive_seed(self.cfg.mccv.seed, "baseline-depth", 0);
        let (_, depth) = fit_grouped(structure, &self.raw, stop.d_max, self.cfg.mccv.inner_folds, stop.e_x, seed)?;
        let forest = Forest {
            layers: vec![structure.clone(); depth],
        };
        fit_forest(&forest, &self.prepared, &fixed_depth(depth, stop.e_x))
    }

    /// Ordinary model: all singletons at every layer.
    pub fn fit_ordinary(&self) -> Result<FittedModel> {
        self.fit_repeated(&GroupingStructure::singletons(self.data.n_predictors()))
    }

    /// Grouped model: the single path structure with the lowest Monte
    /// Carlo error, repeated across layers.
    pub fn fit_fixed_group(&self, path: &GroupingPath) -> Result<(FittedModel, GroupingStructure)> {
        let mut errs = self.errors();
        self.fit_fixed_group_with(path, &mut errs)
    }

    fn fit_fixed_group_with(&self, path: &GroupingPath, errs: &mut StructureErrors<'_>) -> Result<(FittedModel, GroupingStructure)> {
        let mut best: Option<(f64, GroupingStructure)> = None;
        for s in path.structures() {
            let Ok(e) = errs.mean_error(&s) else { continue };
            let better = match &best {
                None => true,
                Some((b, bs)) => e < *b || (e == *b && (s.n_groups(), s.signature()) < (bs.n_groups(), bs.signature())),
            };
            if better {
                best = Some((e, s));
            }
        }
        let (_, s) = best.ok_or_else(|| Error::Evaluation("no path structure could be evaluated".into()))?;
        Ok((self.fit_repeated(&s)?, s))
    }

    /// The filtrated and fixed-group fits sharing one error cache.
    pub fn fit_both(&self, path: &GroupingPath) -> Result<((FittedModel, StructureReport), (FittedModel, GroupingStructure))> {
        let mut errs = self.errors();
        let filtrated = self.fit_filtrated_with(path, &mut errs)?;
        let grouped = self.fit_fixed_group_with(path, &mut errs)?;
        Ok((filtrated, grouped))
    }

    /// Filtration along a given forest with the session's stopping rule.
    pub fn fit_forest(&self, forest: &Forest) -> Result<FittedModel> {
        fit_forest(forest, &self.prepared, &self.cfg.stop)
    }
}

/// Path, structure learning and final fit in one call. When `path` is
/// `None` it is computed from the data.
pub fn fit_filtrated(data: &Dataset, cfg: &PipelineConfig, path: Option<&GroupingPath>) -> Result<(FittedModel, StructureReport)> {
    let session = Session::new(data, cfg)?;
    match path {
        Some(p) => session.fit_filtrated(p),
        None => session.fit_filtrated(&session.path()?.0),
    }
}
