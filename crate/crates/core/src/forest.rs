//! Forest learning: candidate chains from the grouping path, prediction-based
//! chain selection, GIC-driven layer refinement, and θ tuning.

use std::collections::{BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtpls::{filtrate, filtrate_forest, layer_core, CoordData, CoordModel, LayerCore, StopReason, StoppingConfig};
use crate::fusionpath::{GroupingPath, GroupingStructure};
use crate::rng::task_rng;

/// Maximal chains kept by default.
pub const DEFAULT_CHAIN_CAP: usize = 50;
/// Largest number of chains enumerated before pruning.
const CHAIN_ENUMERATION_LIMIT: usize = 200_000;
/// Fraction of failed splits tolerated by an evaluation.
const MAX_DROP_FRACTION: f64 = 0.2;

/// Nested chain of structures from one group down to all singletons.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CandidateSet {
    pub structures: Vec<GroupingStructure>,
}

impl CandidateSet {
    pub fn new(structures: Vec<GroupingStructure>, p: usize) -> Result<Self> {
        let set = CandidateSet { structures };
        set.validate(p)?;
        Ok(set)
    }

    /// Checks nestedness and the one-group / singleton endpoints.
    pub fn validate(&self, p: usize) -> Result<()> {
        let s = &self.structures;
        if s.is_empty() {
            return Err(Error::InvalidInput("empty candidate set".into()));
        }
        if s.iter().any(|g| !g.is_partition_of(p)) {
            return Err(Error::InvalidInput(format!("candidate structure is not a partition of {p} predictors")));
        }
        if s[0] != GroupingStructure::single_group(p) || *s.last().unwrap() != GroupingStructure::singletons(p) {
            return Err(Error::InvalidInput("candidate set must run from one group to singletons".into()));
        }
        if s.windows(2).any(|w| !w[1].refines(&w[0]) || w[0] == w[1]) {
            return Err(Error::InvalidInput("candidate set is not a strictly nested chain".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.structures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.structures.is_empty()
    }

    fn signature(&self) -> Vec<String> {
        self.structures.iter().map(|s| s.signature()).collect()
    }
}

/// Selected layer partitions `F_1, F_2, …` of a fitted model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Forest {
    pub layers: Vec<GroupingStructure>,
}

impl Forest {
    /// Checks that each layer partitions `{0..p}` and refines its
    /// predecessor (repeats allowed).
    pub fn validate(&self, p: usize) -> Result<()> {
        if let Some(s) = self.layers.iter().find(|s| !s.is_partition_of(p)) {
            return Err(Error::InvalidInput(format!(
                "forest layer {} is not a partition of {p} predictors",
                s.signature()
            )));
        }
        if self.layers.windows(2).any(|w| !w[1].refines(&w[0])) {
            return Err(Error::InvalidInput("forest layers are not nested".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// Layer penalty `τ_d = ρ γ^{1-d}` plus the stopping rule used while
/// refining.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GicConfig {
    pub rho: f64,
    pub gamma: f64,
    #[serde(flatten)]
    pub stop: StoppingConfig,
}

impl GicConfig {
    pub fn new(rho: f64, gamma: f64, stop: StoppingConfig) -> Result<Self> {
        let c = GicConfig { rho, gamma, stop };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::InvalidInput("rho must be finite and nonnegative".into()));
        }
        if !(self.gamma >= 1.0) || !self.gamma.is_finite() {
            return Err(Error::InvalidInput("gamma must be at least 1".into()));
        }
        self.stop.validate()
    }

    /// Penalty of 1-based layer `d`.
    pub fn tau(&self, d: usize) -> f64 {
        self.rho * self.gamma.powi(1 - d as i32)
    }
}

/// How candidate-set errors are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    /// Uniform over (structure, split) pairs.
    #[default]
    Pooled,
    /// Per-structure mean first, then mean over structures.
    PerStructure,
}

/// Monte Carlo cross-validation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McCvConfig {
    pub n_splits: usize,
    pub train_fraction: f64,
    pub seed: u64,
    /// Folds of the inner CV choosing the depth of grouped fits.
    pub inner_folds: usize,
    /// Largest depth tried by grouped fits during candidate evaluation.
    pub max_depth: usize,
    pub averaging: Averaging,
}

impl Default for McCvConfig {
    fn default() -> Self {
        McCvConfig {
            n_splits: 100,
            train_fraction: 0.8,
            seed: 0,
            inner_folds: 5,
            max_depth: 6,
            averaging: Averaging::Pooled,
        }
    }
}

impl McCvConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.n_splits == 0 || self.inner_folds < 2 || self.max_depth == 0 {
            return Err(Error::InvalidInput("splits, inner folds and depth must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidInput("train fraction must lie in (0, 1)".into()));
        }
        let (tr, te) = split_sizes(n, self.train_fraction);
        if te == 0 || tr < 2 * self.inner_folds {
            return Err(Error::InvalidInput(format!("{n} samples are too few for the split ratio")));
        }
        Ok(())
    }

    /// Train and test indices of split `k`.
    pub fn split(&self, n: usize, k: usize) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut task_rng(self.seed, "mccv-split", k as u64));
        let (tr, _) = split_sizes(n, self.train_fraction);
        let test = idx.split_off(tr);
        (idx, test)
    }
}

fn split_sizes(n: usize, frac: f64) -> (usize, usize) {
    let tr = ((n as f64) * frac).round() as usize;
    let tr = tr.min(n);
    (tr, n - tr)
}

/// Structures of the path plus both endpoints, deduplicated and sorted
/// coarse to fine (ties by signature).
fn path_pool(path: &GroupingPath) -> Vec<GroupingStructure> {
    let p = path.n_predictors;
    let mut set: BTreeSet<(usize, String, GroupingStructure)> = BTreeSet::new();
    let all = path
        .structures()
        .into_iter()
        .chain([GroupingStructure::single_group(p), GroupingStructure::singletons(p)]);
    for s in all {
        set.insert((s.n_groups(), s.signature(), s));
    }
    set.into_iter().map(|(_, _, s)| s).collect()
}

/// Maximal nested chains through the path's structures, at most `cap` of
/// them (longest first, then lexicographic by signature).
pub fn enumerate_candidate_sets(path: &GroupingPath, cap: usize) -> Vec<CandidateSet> {
    let pool = path_pool(path);
    let k = pool.len();
    if k == 1 {
        // p = 1: both endpoints coincide.
        return vec![CandidateSet { structures: pool }];
    }
    // Cover relation of the strict refinement order restricted to the pool.
    let finer = |a: usize, b: usize| a != b && pool[b].refines(&pool[a]) && pool[a] != pool[b];
    let mut covers: Vec<Vec<usize>> = vec![Vec::new(); k];
    for a in 0..k {
        for b in 0..k {
            if finer(a, b) && !(0..k).any(|c| finer(a, c) && finer(c, b)) {
                covers[a].push(b);
            }
        }
    }
    let top = 0;
    let bottom = k - 1;
    let mut chains: Vec<Vec<usize>> = Vec::new();
    let mut stack = vec![top];
    fn walk(node: usize, bottom: usize, covers: &[Vec<usize>], stack: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if out.len() >= CHAIN_ENUMERATION_LIMIT {
            return;
        }
        if node == bottom {
            out.push(stack.clone());
            return;
        }
        for &next in &covers[node] {
            stack.push(next);
            walk(next, bottom, covers, stack, out);
            stack.pop();
        }
    }
    walk(top, bottom, &covers, &mut stack, &mut chains);
    let mut sets: Vec<CandidateSet> = chains
        .into_iter()
        .map(|c| CandidateSet {
            structures: c.into_iter().map(|i| pool[i].clone()).collect(),
        })
        .collect();
    sets.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.signature().cmp(&b.signature())));
    sets.truncate(cap.max(1));
    sets
}

/// `N⁻¹ Σ r_n² + τ |F_d|`.
pub fn gic(residual_response: &[f64], n_groups: usize, tau_d: f64) -> f64 {
    let n = residual_response.len() as f64;
    residual_response.iter().map(|v| v * v).sum::<f64>() / n + tau_d * n_groups as f64
}

pub(crate) fn fixed_depth(d_max: usize, e_x: f64) -> StoppingConfig {
    // e_y = 0 never triggers the improvement rule, so fits have exactly
    // d_max layers unless the active set empties.
    StoppingConfig {
        e_y: 0.0,
        e_x,
        window: 1,
        d_max,
    }
}

/// Grouped model: `structure` repeated, depth `K ≤ max_depth` chosen by
/// inner k-fold CV. Returns the model and the chosen depth.
pub(crate) fn fit_grouped(
    structure: &GroupingStructure,
    data: &CoordData,
    max_depth: usize,
    folds: usize,
    e_x: f64,
    seed: u64,
) -> Result<(CoordModel, usize)> {
    let n = data.n_samples();
    let layers = vec![structure.clone(); max_depth];
    let stop = fixed_depth(max_depth, e_x);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut task_rng(seed, "inner-cv", 0));
    let mut sse = vec![0.0; max_depth + 1];
    let mut used = 0usize;
    for f in 0..folds {
        let test: Vec<usize> = order.iter().copied().skip(f).step_by(folds).collect();
        let train: Vec<usize> = order
            .iter()
            .enumerate()
            .filter(|(i, _)| i % folds != f)
            .map(|(_, &v)| v)
            .collect();
        let Ok(model) = fit_forest_coords(&layers, &data.select(&train), &stop) else {
            continue;
        };
        let te = data.select(&test);
        let pred = model.predict_prefixes(&te.x);
        used += 1;
        for k in 0..=max_depth {
            let col = pred.column(k.min(pred.ncols() - 1));
            sse[k] += col.iter().zip(&te.y).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
    }
    if used == 0 {
        return Err(Error::Evaluation("every inner fold failed".into()));
    }
    let best = (1..=max_depth)
        .min_by(|&a, &b| sse[a].total_cmp(&sse[b]).then(a.cmp(&b)))
        .unwrap();
    let mut model = fit_forest_coords(&layers, data, &stop)?;
    model.layers.truncate(best);
    Ok((model, best))
}

/// Filtration along fixed layers on raw coordinates.
pub(crate) fn fit_forest_coords(layers: &[GroupingStructure], data: &CoordData, stop: &StoppingConfig) -> Result<CoordModel> {
    let prep = data.prepare()?;
    let run = filtrate_forest(layers, prep.x, prep.y, stop);
    Ok(CoordModel {
        std: prep.std,
        y_mean: prep.y_mean,
        layers: run.layers,
    })
}

fn mse(pred: &DVector<f64>, y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

/// Test errors of grouped fits, cached per (structure, split).
pub(crate) struct StructureErrors<'a> {
    data: &'a CoordData,
    cfg: McCvConfig,
    e_x: f64,
    cache: HashMap<GroupingStructure, Vec<Option<f64>>>,
}

impl<'a> StructureErrors<'a> {
    pub fn new(data: &'a CoordData, cfg: McCvConfig, e_x: f64) -> Self {
        StructureErrors {
            data,
            cfg,
            e_x,
            cache: HashMap::new(),
        }
    }

    /// Per-split test MSE of `s` (`None` for a failed split).
    pub fn errors(&mut self, s: &GroupingStructure) -> &[Option<f64>] {
        if !self.cache.contains_key(s) {
            let errs = self.compute(s);
            self.cache.insert(s.clone(), errs);
        }
        &self.cache[s]
    }

    fn compute(&self, s: &GroupingStructure) -> Vec<Option<f64>> {
        let n = self.data.n_samples();
        let cfg = self.cfg;
        (0..cfg.n_splits)
            .into_par_iter()
            .map(|k| {
                let (tr, te) = cfg.split(n, k);
                let train = self.data.select(&tr);
                let test = self.data.select(&te);
                let seed = crate::rng::derive_seed(cfg.seed, "grouped-fit", k as u64);
                let (model, _) = fit_grouped(s, &train, cfg.max_depth, cfg.inner_folds, self.e_x, seed).ok()?;
                let e = mse(&model.predict(&test.x), &test.y);
                e.is_finite().then_some(e)
            })
            .collect()
    }

    /// Mean error over successful splits; fails when too many were dropped.
    pub fn mean_error(&mut self, s: &GroupingStructure) -> Result<f64> {
        let errs = self.errors(s);
        let ok: Vec<f64> = errs.iter().flatten().copied().collect();
        check_drops(errs.len(), errs.len() - ok.len())?;
        Ok(ok.iter().sum::<f64>() / ok.len() as f64)
    }
}

fn check_drops(total: usize, dropped: usize) -> Result<()> {
    if total == 0 || dropped as f64 > MAX_DROP_FRACTION * total as f64 || dropped == total {
        return Err(Error::Evaluation(format!("{dropped} of {total} resampling fits failed")));
    }
    Ok(())
}

/// Average grouped-model test error over the structures of `set` and the
/// Monte Carlo splits.
pub fn evaluate_candidate_set(set: &CandidateSet, data: &crate::fdata::Dataset, cfg: &McCvConfig) -> Result<f64> {
    cfg.validate(data.n_samples())?;
    let coords = CoordData::new(&data.curves, &data.response);
    let mut errs = StructureErrors::new(&coords, *cfg, StoppingConfig::default().e_x);
    evaluate_cached(set, &mut errs)
}

pub(crate) fn evaluate_cached(set: &CandidateSet, errs: &mut StructureErrors<'_>) -> Result<f64> {
    let averaging = errs.cfg.averaging;
    let mut total = 0usize;
    let mut dropped = 0usize;
    let mut pooled = Vec::new();
    let mut per_structure = Vec::new();
    for s in &set.structures {
        let e = errs.errors(s);
        total += e.len();
        dropped += e.iter().filter(|v| v.is_none()).count();
        let ok: Vec<f64> = e.iter().flatten().copied().collect();
        if !ok.is_empty() {
            per_structure.push(ok.iter().sum::<f64>() / ok.len() as f64);
        }
        pooled.extend(ok);
    }
    check_drops(total, dropped)?;
    Ok(match averaging {
        Averaging::Pooled => pooled.iter().sum::<f64>() / pooled.len() as f64,
        Averaging::PerStructure => per_structure.iter().sum::<f64>() / per_structure.len() as f64,
    })
}

/// Candidate set with the lowest average error, ties to the longer set,
/// then lexicographic. Returns the index into `sets` and all scores.
pub fn select_candidate_set(sets: &[CandidateSet], data: &crate::fdata::Dataset, cfg: &McCvConfig) -> Result<(usize, Vec<Option<f64>>)> {
    cfg.validate(data.n_samples())?;
    let coords = CoordData::new(&data.curves, &data.response);
    let mut errs = StructureErrors::new(&coords, *cfg, StoppingConfig::default().e_x);
    select_cached(sets, &mut errs)
}

pub(crate) fn select_cached(sets: &[CandidateSet], errs: &mut StructureErrors<'_>) -> Result<(usize, Vec<Option<f64>>)> {
    if sets.is_empty() {
        return Err(Error::InvalidInput("no candidate sets".into()));
    }
    let scores: Vec<Option<f64>> = sets.iter().map(|s| evaluate_cached(s, errs).ok()).collect();
    let best = (0..sets.len())
        .filter(|&i| scores[i].is_some())
        .min_by(|&a, &b| {
            scores[a]
                .unwrap()
                .total_cmp(&scores[b].unwrap())
                .then_with(|| sets[b].len().cmp(&sets[a].len()))
                .then_with(|| sets[a].signature().cmp(&sets[b].signature()))
        })
        .ok_or_else(|| Error::Evaluation("every candidate set failed to evaluate".into()))?;
    Ok((best, scores))
}

/// GIC values of the structures probed at one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GicTable {
    pub layer: usize,
    pub tau: f64,
    /// `(candidate index, number of groups after restriction, GIC)`.
    pub entries: Vec<(usize, usize, f64)>,
    pub chosen: usize,
}

/// Result of layer-by-layer refinement.
#[derive(Debug, Clone)]
pub(crate) struct Refinement {
    /// Candidate index chosen at each kept layer.
    pub chosen: Vec<usize>,
    pub tables: Vec<GicTable>,
    pub layers: Vec<LayerCore>,
    pub stop: StopReason,
    pub initial_ss: f64,
}

/// One-layer probes memoized by the prefix of chosen candidate indices, so
/// refinements for several θ on the same data share work.
pub(crate) struct ProbeCache {
    nodes: HashMap<Vec<usize>, Vec<Option<LayerCore>>>,
}

impl ProbeCache {
    pub fn new() -> Self {
        ProbeCache { nodes: HashMap::new() }
    }
}

pub(crate) fn refine_coords(
    set: &CandidateSet,
    x: &[DMatrix<f64>],
    y: &DVector<f64>,
    cfg: &GicConfig,
    cache: &mut ProbeCache,
) -> Refinement {
    let n = y.len();
    let mut chosen: Vec<usize> = Vec::new();
    let mut tables = Vec::new();
    let run = filtrate(x.to_vec(), y.clone(), &cfg.stop, |d, active, x, y| {
        let start = chosen.last().copied().unwrap_or(0);
        let probes = cache.nodes.entry(chosen.clone()).or_insert_with(|| {
            let mut seen: Vec<GroupingStructure> = Vec::new();
            (0..set.len())
                .map(|k| {
                    if k < start {
                        return None;
                    }
                    let s = set.structures[k].restrict(active);
                    // Identical restrictions are probed once, at the lowest index.
                    if s.n_groups() == 0 || s.n_groups() >= n || seen.contains(&s) {
                        return None;
                    }
                    seen.push(s.clone());
                    Some(layer_core(&s, x, y))
                })
                .collect()
        });
        let tau = cfg.tau(d + 1);
        let entries: Vec<(usize, usize, f64)> = (start..set.len())
            .filter_map(|k| {
                let c = probes[k].as_ref()?;
                Some((k, c.partition.n_groups(), c.residual_ss / n as f64 + tau * c.partition.n_groups() as f64))
            })
            .collect();
        let &(best, _, _) = entries.iter().min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)))?;
        tables.push(GicTable {
            layer: d + 1,
            tau,
            entries,
            chosen: best,
        });
        chosen.push(best);
        probes[best].clone()
    });
    chosen.truncate(run.layers.len());
    tables.truncate(run.layers.len());
    Refinement {
        chosen,
        tables,
        layers: run.layers,
        stop: run.stop,
        initial_ss: run.initial_ss,
    }
}

/// Learns the forest layer by layer by minimising GIC over the candidate
/// structures at or after the previous layer's position in the chain.
pub fn refine_layers(set: &CandidateSet, data: &crate::fdata::PreparedData, config: &GicConfig) -> Result<Forest> {
    config.validate()?;
    let p = data.curves.n_predictors();
    set.validate(p)?;
    // The curves are already standardized, so their coordinates are used as is.
    let coords = CoordData::new(&data.curves, &data.response.values);
    let y = data.response.to_dvector();
    let r = refine_coords(set, &coords.x, &y, config, &mut ProbeCache::new());
    Ok(Forest {
        layers: r.chosen.iter().map(|&k| set.structures[k].clone()).collect(),
    })
}

/// `(ρ, γ)` pairs searched by [`select_theta`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaGrid {
    pub points: Vec<(f64, f64)>,
}

impl ThetaGrid {
    /// `ρ ∈ {0.005, 0.01, 0.05, 0.1, 0.5}·var(y)`, `γ ∈ {1, 1.25, 1.5, 2}`.
    pub fn default_for(var_y: f64) -> Self {
        let mut points = Vec::new();
        for r in [0.005, 0.01, 0.05, 0.1, 0.5] {
            for g in [1.0, 1.25, 1.5, 2.0] {
                points.push((r * var_y, g));
            }
        }
        ThetaGrid { points }
    }
}

/// Per-θ mean test error of learned forests over the Monte Carlo splits.
pub(crate) fn theta_errors(set: &CandidateSet, data: &CoordData, grid: &ThetaGrid, stop: &StoppingConfig, cfg: &McCvConfig) -> Result<Vec<Option<f64>>> {
    let n = data.n_samples();
    let per_split: Vec<Option<Vec<f64>>> = (0..cfg.n_splits)
        .into_par_iter()
        .map(|k| {
            let (tr, te) = cfg.split(n, k);
            let train = data.select(&tr);
            let test = data.select(&te);
            let prep = train.prepare().ok()?;
            let mut cache = ProbeCache::new();
            let errs = grid
                .points
                .iter()
                .map(|&(rho, gamma)| {
                    let gic = GicConfig { rho, gamma, stop: *stop };
                    let r = refine_coords(set, &prep.x, &prep.y, &gic, &mut cache);
                    let model = CoordModel {
                        std: prep.std.clone(),
                        y_mean: prep.y_mean,
                        layers: r.layers,
                    };
                    mse(&model.predict(&test.x), &test.y)
                })
                .collect::<Vec<_>>();
            errs.iter().all(|e| e.is_finite()).then_some(errs)
        })
        .collect();
    let ok: Vec<&Vec<f64>> = per_split.iter().flatten().collect();
    check_drops(per_split.len(), per_split.len() - ok.len())?;
    Ok((0..grid.points.len())
        .map(|t| Some(ok.iter().map(|e| e[t]).sum::<f64>() / ok.len() as f64))
        .collect())
}

/// θ with the lowest Monte Carlo prediction error (ties to the earlier
/// grid point).
pub fn select_theta(
    set: &CandidateSet,
    grid: &ThetaGrid,
    data: &crate::fdata::Dataset,
    stop: &StoppingConfig,
    cfg: &McCvConfig,
) -> Result<(GicConfig, Vec<Option<f64>>)> {
    if grid.points.is_empty() {
        return Err(Error::InvalidInput("empty theta grid".into()));
    }
    cfg.validate(data.n_samples())?;
    let coords = CoordData::new(&data.curves, &data.response);
    let errs = theta_errors(set, &coords, grid, stop, cfg)?;
    let best = pick_theta(&errs)?;
    let (rho, gamma) = grid.points[best];
    Ok((GicConfig::new(rho, gamma, *stop)?, errs))
}

pub(crate) fn pick_theta(errs: &[Option<f64>]) -> Result<usize> {
    (0..errs.len())
        .filter(|&i| errs[i].is_some())
        .min_by(|&a, &b| errs[a].unwrap().total_cmp(&errs[b].unwrap()).then(a.cmp(&b)))
        .ok_or_else(|| Error::Evaluation("every theta failed to evaluate".into()))
}
