//! Filtrated functional PLS: per-layer group bases, shared-component
//! scores, joint OLS for the coefficient scores, and deflation.
//!
//! All numerical work happens in orthonormal span coordinates (see
//! [`SpanBasis`]). Every basis and loading is a linear combination of
//! training curves, so the coordinate computation is exact and grid curves
//! are only materialised at the API boundary.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdata::{Curve, CurveSet, Grid, PreparedData, ResponseVector, SpanBasis};
use crate::forest::Forest;
use crate::fusionpath::GroupingStructure;
use crate::linalg::GramSolver;
use crate::model::FittedModel;

/// Relative size of a pooled covariance below which a group is degenerate.
const DEGENERATE_TOL: f64 = 1e-12;

/// Stopping and predictor-removal thresholds for the layer loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingConfig {
    /// Minimum relative response-SS improvement of a useful layer.
    pub e_y: f64,
    /// Residual energy fraction below which a predictor leaves the active set.
    pub e_x: f64,
    /// Number of consecutive sub-threshold layers that ends filtration.
    pub window: usize,
    pub d_max: usize,
}

impl Default for StoppingConfig {
    fn default() -> Self {
        StoppingConfig {
            e_y: 0.01,
            e_x: 0.01,
            window: 2,
            d_max: 12,
        }
    }
}

impl StoppingConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.e_y) || !unit(self.e_x) {
            return Err(Error::InvalidInput("e_y and e_x must lie in (0, 1)".into()));
        }
        if self.window == 0 || self.d_max == 0 {
            return Err(Error::InvalidInput("window and d_max must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// `window` consecutive layers improved the response SS by less than `e_y`.
    Improvement,
    ActiveSetEmpty,
    MaxDepth,
    LayersExhausted,
}

/// One filtration layer in span coordinates.
#[derive(Debug, Clone)]
pub(crate) struct LayerCore {
    /// Partition restricted to the predictors active in this layer.
    pub partition: GroupingStructure,
    /// Unit-norm basis coordinates; `None` for a degenerate group.
    pub basis: Vec<Option<DVector<f64>>>,
    /// `N × g` training scores (zero columns for degenerate groups).
    pub scores: DMatrix<f64>,
    pub coefs: Vec<f64>,
    /// Per active predictor, the `g × r` loading coordinates.
    pub loadings: Vec<(usize, DMatrix<f64>)>,
    pub explained_ss: f64,
    pub residual_ss: f64,
    pub ridged: bool,
}

impl LayerCore {
    fn n_groups(&self) -> usize {
        self.partition.n_groups()
    }

    /// Scores of (possibly new) residual coordinates.
    pub fn scores_of(&self, x: &[DMatrix<f64>]) -> DMatrix<f64> {
        let n = x.first().map_or(0, |m| m.nrows());
        let mut z = DMatrix::zeros(n, self.n_groups());
        for (i, g) in self.partition.groups().iter().enumerate() {
            if let Some(b) = &self.basis[i] {
                let mut col = z.column_mut(i);
                for &j in g {
                    col.gemv(1.0, &x[j], b, 1.0);
                }
            }
        }
        z
    }

    /// Removes this layer's contribution from residual coordinates given
    /// the layer scores `z`.
    pub fn deflate_curves(&self, x: &mut [DMatrix<f64>], z: &DMatrix<f64>) {
        for (j, phi) in &self.loadings {
            x[*j].gemm(-1.0, z, phi, 1.0);
        }
    }

    pub fn fitted(&self, z: &DMatrix<f64>) -> DVector<f64> {
        z * DVector::from_column_slice(&self.coefs)
    }
}

/// Pooled covariance direction of `group`, normalised; `None` when the
/// group carries no covariance with `y`.
pub(crate) fn basis_coords(group: &[usize], x: &[DMatrix<f64>], y: &DVector<f64>) -> Option<DVector<f64>> {
    let r = x[group[0]].ncols();
    let mut v = DVector::zeros(r);
    let mut energy = 0.0;
    for &j in group {
        v.gemv_tr(1.0, &x[j], y, 1.0);
        energy += x[j].norm_squared();
    }
    let norm = v.norm();
    let scale = y.norm() * energy.sqrt();
    if !(norm > DEGENERATE_TOL * scale) || !norm.is_finite() {
        return None;
    }
    Some(v / norm)
}

/// Fits one layer on residual coordinates. `partition` must already be
/// restricted to the active predictors.
pub(crate) fn layer_core(partition: &GroupingStructure, x: &[DMatrix<f64>], y: &DVector<f64>) -> LayerCore {
    let g = partition.n_groups();
    let r = x.first().map_or(0, |m| m.ncols());
    let basis: Vec<Option<DVector<f64>>> = partition
        .groups()
        .iter()
        .map(|grp| basis_coords(grp, x, y))
        .collect();
    let mut core = LayerCore {
        partition: partition.clone(),
        basis,
        scores: DMatrix::zeros(y.len(), g),
        coefs: vec![0.0; g],
        loadings: Vec::new(),
        explained_ss: 0.0,
        residual_ss: y.norm_squared(),
        ridged: false,
    };
    let z = core.scores_of(x);
    let live: Vec<usize> = (0..g).filter(|&i| core.basis[i].is_some()).collect();
    let members = partition.members();
    let solver = if live.is_empty() {
        None
    } else {
        let zl = z.select_columns(&live);
        GramSolver::new(&zl.tr_mul(&zl)).map(|s| (zl, s))
    };
    match solver {
        Some((zl, solver)) => {
            core.ridged = solver.ridged;
            let a = solver.solve_vec(&zl.tr_mul(y));
            for (k, &i) in live.iter().enumerate() {
                core.coefs[i] = a[k];
            }
            for &j in &members {
                let phi_live = solver.solve_mat(&zl.tr_mul(&x[j]));
                let mut phi = DMatrix::zeros(g, r);
                for (k, &i) in live.iter().enumerate() {
                    phi.set_row(i, &phi_live.row(k));
                }
                core.loadings.push((j, phi));
            }
            let resid = y - &zl * a;
            core.residual_ss = resid.norm_squared();
            core.explained_ss = (y.norm_squared() - core.residual_ss).max(0.0);
        }
        None => {
            core.basis.iter_mut().for_each(|b| *b = None);
            for &j in &members {
                core.loadings.push((j, DMatrix::zeros(g, r)));
            }
        }
    }
    core.scores = if core.basis.iter().all(Option::is_none) {
        DMatrix::zeros(y.len(), g)
    } else {
        z
    };
    core
}

/// Deflates residual coordinates and response by a layer fitted on them.
pub(crate) fn deflate_core(core: &LayerCore, x: &mut [DMatrix<f64>], y: &mut DVector<f64>) {
    core.deflate_curves(x, &core.scores);
    *y -= core.fitted(&core.scores);
}

/// Standardized coordinates plus the constants that produced them.
#[derive(Debug, Clone)]
pub(crate) struct CoordStandardization {
    pub means: Vec<DVector<f64>>,
    pub scales: Vec<f64>,
}

impl CoordStandardization {
    /// Learns per-predictor centering and scaling from raw coordinates.
    pub fn fit(x: &[DMatrix<f64>]) -> Result<Self> {
        let mut means = Vec::with_capacity(x.len());
        let mut scales = Vec::with_capacity(x.len());
        for (j, xj) in x.iter().enumerate() {
            let n = xj.nrows() as f64;
            let mean: DVector<f64> = xj.row_mean().transpose();
            let raw = xj.norm_squared() / n;
            let var = raw - mean.norm_squared();
            let var = if var < 1e-6 * raw {
                // Cancellation guard: recompute directly.
                let mut ss = 0.0;
                for row in xj.row_iter() {
                    ss += (row.transpose() - &mean).norm_squared();
                }
                ss / n
            } else {
                var
            };
            if !(var > 1e-24 * raw) || var <= f64::MIN_POSITIVE {
                return Err(Error::DegeneratePredictor { index: j });
            }
            means.push(mean);
            scales.push(var.sqrt());
        }
        Ok(CoordStandardization { means, scales })
    }

    pub fn apply(&self, x: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        x.iter()
            .enumerate()
            .map(|(j, xj)| {
                let mut out = xj.clone();
                let inv = 1.0 / self.scales[j];
                for mut row in out.row_iter_mut() {
                    for (k, v) in row.iter_mut().enumerate() {
                        *v = (*v - self.means[j][k]) * inv;
                    }
                }
                out
            })
            .collect()
    }
}

/// A dataset in the span coordinates of its own raw curves.
#[derive(Debug, Clone)]
pub(crate) struct CoordData {
    pub span: Arc<SpanBasis>,
    pub x: Vec<DMatrix<f64>>,
    pub y: Vec<f64>,
}

impl CoordData {
    pub fn new(curves: &CurveSet, y: &[f64]) -> Self {
        let span = Arc::new(SpanBasis::of(curves));
        let x = curves.predictors().iter().map(|xj| span.project(xj)).collect();
        CoordData { span, x, y: y.to_vec() }
    }

    pub fn n_samples(&self) -> usize {
        self.y.len()
    }

    pub fn select(&self, idx: &[usize]) -> CoordData {
        CoordData {
            span: self.span.clone(),
            x: self.x.iter().map(|m| m.select_rows(idx)).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Standardized coordinates and centered response of this dataset.
    pub fn prepare(&self) -> Result<PreparedCoords> {
        let std = CoordStandardization::fit(&self.x)?;
        let x = std.apply(&self.x);
        let n = self.y.len() as f64;
        let y_mean = self.y.iter().sum::<f64>() / n;
        let y = DVector::from_iterator(self.y.len(), self.y.iter().map(|v| v - y_mean));
        Ok(PreparedCoords { std, y_mean, x, y })
    }
}

/// Standardized training coordinates ready for filtration.
#[derive(Debug, Clone)]
pub(crate) struct PreparedCoords {
    pub std: CoordStandardization,
    pub y_mean: f64,
    pub x: Vec<DMatrix<f64>>,
    pub y: DVector<f64>,
}

/// Outcome of a coordinate-level filtration.
#[derive(Debug, Clone)]
pub(crate) struct CoreRun {
    pub layers: Vec<LayerCore>,
    pub stop: StopReason,
    pub initial_ss: f64,
}

/// Layer loop shared by every fitter. `choose(d, active, x, y)` returns the
/// layer to use at 0-based depth `d`, or `None` when no layers remain.
pub(crate) fn filtrate<F>(mut x: Vec<DMatrix<f64>>, mut y: DVector<f64>, stop: &StoppingConfig, mut choose: F) -> CoreRun
where
    F: FnMut(usize, &[usize], &[DMatrix<f64>], &DVector<f64>) -> Option<LayerCore>,
{
    let p = x.len();
    let energy0: Vec<f64> = x.iter().map(|m| m.norm_squared()).collect();
    let mut active: Vec<usize> = (0..p).filter(|&j| energy0[j] > 0.0).collect();
    let initial_ss = y.norm_squared();
    let mut layers: Vec<LayerCore> = Vec::new();
    let mut weak_run = 0usize;
    let reason = loop {
        if active.is_empty() {
            break StopReason::ActiveSetEmpty;
        }
        if layers.len() >= stop.d_max {
            break StopReason::MaxDepth;
        }
        let Some(core) = choose(layers.len(), &active, &x, &y) else {
            break StopReason::LayersExhausted;
        };
        let before = y.norm_squared();
        deflate_core(&core, &mut x, &mut y);
        let rel = if before > 0.0 { core.explained_ss / before } else { 0.0 };
        layers.push(core);
        if rel < stop.e_y {
            weak_run += 1;
            if weak_run >= stop.window {
                layers.truncate(layers.len() - weak_run);
                break StopReason::Improvement;
            }
        } else {
            weak_run = 0;
        }
        active.retain(|&j| x[j].norm_squared() > stop.e_x * energy0[j]);
    };
    CoreRun {
        layers,
        stop: reason,
        initial_ss,
    }
}

/// Filtration along a fixed list of structures, each restricted to the
/// active set of its layer.
pub(crate) fn filtrate_forest(layers: &[GroupingStructure], x: Vec<DMatrix<f64>>, y: DVector<f64>, stop: &StoppingConfig) -> CoreRun {
    filtrate(x, y, stop, |d, active, x, y| {
        let s = layers.get(d)?.restrict(active);
        if s.n_groups() == 0 {
            return None;
        }
        Some(layer_core(&s, x, y))
    })
}

/// Prediction engine in coordinates, used where many fits are scored.
#[derive(Debug, Clone)]
pub(crate) struct CoordModel {
    pub std: CoordStandardization,
    pub y_mean: f64,
    pub layers: Vec<LayerCore>,
}

impl CoordModel {
    /// Predictions after each prefix of layers: column `k` holds the
    /// prediction using the first `k` layers (`k = 0..=L`).
    pub fn predict_prefixes(&self, raw_x: &[DMatrix<f64>]) -> DMatrix<f64> {
        let n = raw_x.first().map_or(0, |m| m.nrows());
        let mut x = self.std.apply(raw_x);
        let mut out = DMatrix::from_element(n, self.layers.len() + 1, self.y_mean);
        let mut acc = DVector::from_element(n, self.y_mean);
        for (d, layer) in self.layers.iter().enumerate() {
            let z = layer.scores_of(&x);
            acc += layer.fitted(&z);
            out.set_column(d + 1, &acc);
            if d + 1 < self.layers.len() {
                layer.deflate_curves(&mut x, &z);
            }
        }
        out
    }

    pub fn predict(&self, raw_x: &[DMatrix<f64>]) -> DVector<f64> {
        let all = self.predict_prefixes(raw_x);
        all.column(all.ncols() - 1).into_owned()
    }
}

/// Converts coordinate layers into a grid-level model.
pub(crate) fn assemble_model(
    grid: &Grid,
    span: &SpanBasis,
    standardization: crate::fdata::Standardization,
    response_mean: f64,
    forest: &[GroupingStructure],
    run: &CoreRun,
) -> FittedModel {
    let layers: Vec<LayerFit> = run.layers.iter().map(|c| LayerFit::from_core(c, span)).collect();
    let forest = Forest {
        layers: forest[..layers.len()].to_vec(),
    };
    FittedModel::new(grid.clone(), response_mean, standardization, layers, forest, run.stop, run.initial_ss)
}

/// Loading curves of one predictor, one per group of the layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorLoadings {
    pub predictor: usize,
    pub curves: Vec<Curve>,
}

/// One fitted filtration layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerFit {
    /// Layer partition restricted to the predictors active in this layer.
    pub partition: GroupingStructure,
    /// Unit-norm ψ per group; `None` marks a degenerate group.
    pub bases: Vec<Option<Curve>>,
    pub coef_scores: Vec<f64>,
    pub loadings: Vec<PredictorLoadings>,
    pub explained_ss: f64,
    pub residual_ss: f64,
    /// Set when the score Gram matrix needed ridge stabilisation.
    pub ridged: bool,
    /// Training scores, `N` per group. Not serialized.
    #[serde(skip)]
    pub scores: Vec<Vec<f64>>,
    #[serde(skip)]
    pub(crate) core: Option<Box<LayerCore>>,
}

impl PartialEq for LayerFit {
    fn eq(&self, o: &Self) -> bool {
        self.partition == o.partition
            && self.bases == o.bases
            && self.coef_scores == o.coef_scores
            && self.loadings == o.loadings
            && self.explained_ss.to_bits() == o.explained_ss.to_bits()
            && self.residual_ss.to_bits() == o.residual_ss.to_bits()
            && self.ridged == o.ridged
    }
}

impl LayerFit {
    pub(crate) fn from_core(core: &LayerCore, span: &SpanBasis) -> Self {
        let g = core.n_groups();
        LayerFit {
            partition: core.partition.clone(),
            bases: core.basis.iter().map(|b| b.as_ref().map(|b| span.curve(b))).collect(),
            coef_scores: core.coefs.clone(),
            loadings: core
                .loadings
                .iter()
                .map(|(j, phi)| PredictorLoadings {
                    predictor: *j,
                    curves: (0..g).map(|i| span.curve(&phi.row(i).transpose())).collect(),
                })
                .collect(),
            explained_ss: core.explained_ss,
            residual_ss: core.residual_ss,
            ridged: core.ridged,
            scores: core.scores.column_iter().map(|c| c.iter().copied().collect()).collect(),
            core: Some(Box::new(core.clone())),
        }
    }

    pub fn n_groups(&self) -> usize {
        self.partition.n_groups()
    }

    /// Predictors that were active in this layer.
    pub fn active_set(&self) -> Vec<usize> {
        self.partition.members()
    }

    /// Groups whose pooled covariance vanished.
    pub fn degenerate_groups(&self) -> Vec<usize> {
        (0..self.bases.len()).filter(|&i| self.bases[i].is_none()).collect()
    }

    /// Checks the shape of a deserialized layer against `p` predictors and
    /// `m` grid points.
    pub(crate) fn validate(&self, p: usize, m: usize) -> Result<()> {
        let g = self.n_groups();
        let bad = |msg: &str| Err(Error::InvalidInput(format!("malformed layer: {msg}")));
        if self.partition.members().iter().any(|&j| j >= p) {
            return bad("partition references an unknown predictor");
        }
        if self.bases.len() != g || self.coef_scores.len() != g {
            return bad("group count mismatch");
        }
        if self.bases.iter().flatten().any(|c| c.len() != m) {
            return bad("basis length differs from the grid");
        }
        for l in &self.loadings {
            if l.predictor >= p || l.curves.len() != g || l.curves.iter().any(|c| c.len() != m) {
                return bad("loading shape");
            }
        }
        Ok(())
    }
}

/// Residual state of the filtration before layer `layer_index`.
#[derive(Debug, Clone)]
pub struct FiltrationState {
    layer_index: usize,
    span: Arc<SpanBasis>,
    grid: Grid,
    residuals: Vec<DMatrix<f64>>,
    initial_energy: Vec<f64>,
    residual_response: DVector<f64>,
    active_set: Vec<usize>,
}

impl FiltrationState {
    /// Initial state from standardized curves and a centered response.
    pub fn new(curves: &CurveSet, response: &ResponseVector) -> Result<Self> {
        if curves.n_samples() != response.len() {
            return Err(Error::Dimension(format!(
                "{} curve samples but {} responses",
                curves.n_samples(),
                response.len()
            )));
        }
        let span = Arc::new(SpanBasis::of(curves));
        let residuals: Vec<DMatrix<f64>> = curves.predictors().iter().map(|x| span.project(x)).collect();
        let initial_energy: Vec<f64> = residuals.iter().map(|m| m.norm_squared()).collect();
        let active_set = (0..curves.n_predictors()).filter(|&j| initial_energy[j] > 0.0).collect();
        Ok(FiltrationState {
            layer_index: 1,
            span,
            grid: curves.grid().clone(),
            residuals,
            initial_energy,
            residual_response: response.to_dvector(),
            active_set,
        })
    }

    /// 1-based index of the next layer.
    pub fn layer_index(&self) -> usize {
        self.layer_index
    }

    pub fn active_set(&self) -> &[usize] {
        &self.active_set
    }

    pub fn residual_response(&self) -> &DVector<f64> {
        &self.residual_response
    }

    pub fn residual_ss(&self) -> f64 {
        self.residual_response.norm_squared()
    }

    /// Residual curves `X^{[d]}` on the grid.
    pub fn residual_curves(&self) -> CurveSet {
        let preds = self.residuals.iter().map(|c| self.span.curves(c)).collect();
        CurveSet::new(self.grid.clone(), preds).expect("residual curves keep their shape")
    }

    /// Fraction of each predictor's initial energy left in its residual.
    pub fn energy_fractions(&self) -> Vec<f64> {
        self.residuals
            .iter()
            .zip(&self.initial_energy)
            .map(|(m, e)| if *e > 0.0 { m.norm_squared() / e } else { 0.0 })
            .collect()
    }

    /// Drops predictors whose residual energy fraction is at most `e_x`.
    pub fn update_active_set(&mut self, e_x: f64) {
        let f = self.energy_fractions();
        self.active_set.retain(|&j| f[j] > e_x);
    }

    fn check_group(&self, group: &[usize]) -> Result<()> {
        if group.is_empty() {
            return Err(Error::InvalidInput("empty group".into()));
        }
        if let Some(j) = group.iter().find(|j| !self.active_set.contains(j)) {
            return Err(Error::InvalidInput(format!("predictor {j} is not active")));
        }
        Ok(())
    }
}

/// Normalised pooled covariance curve `Σ_n y_n Σ_{j∈group} X_jn(t)`.
/// Returns `Ok(None)` for a degenerate group.
pub fn estimate_basis(group: &[usize], state: &FiltrationState) -> Result<Option<Curve>> {
    state.check_group(group)?;
    Ok(basis_coords(group, &state.residuals, &state.residual_response).map(|b| state.span.curve(&b)))
}

/// Shared-component scores `ζ_n = Σ_{j∈group} ⟨X_jn, ψ⟩`.
pub fn compute_scores(group: &[usize], basis: &Curve, state: &FiltrationState) -> Result<Vec<f64>> {
    state.check_group(group)?;
    if basis.len() != state.grid.len() {
        return Err(Error::Dimension("basis length differs from the grid".into()));
    }
    let b = state.span.project_curve(basis);
    let mut z = DVector::zeros(state.residual_response.len());
    for &j in group {
        z.gemv(1.0, &state.residuals[j], &b, 1.0);
    }
    Ok(z.iter().copied().collect())
}

/// Fits one layer with `partition` (restricted to the active set).
pub fn fit_layer(partition: &GroupingStructure, state: &FiltrationState) -> Result<LayerFit> {
    let restricted = partition.restrict(&state.active_set);
    if restricted.members() != state.active_set {
        return Err(Error::InvalidInput("partition does not cover the active set".into()));
    }
    if state.residual_response.len() <= restricted.n_groups() {
        return Err(Error::InvalidInput(format!(
            "{} samples cannot support {} groups",
            state.residual_response.len(),
            restricted.n_groups()
        )));
    }
    let core = layer_core(&restricted, &state.residuals, &state.residual_response);
    Ok(LayerFit::from_core(&core, &state.span))
}

/// Removes a fitted layer from the state's curves and response. The active
/// set is left unchanged; see [`FiltrationState::update_active_set`].
pub fn deflate(state: &FiltrationState, layer: &LayerFit) -> FiltrationState {
    let core = match &layer.core {
        Some(c) => (**c).clone(),
        None => core_from_curves(layer, &state.span),
    };
    let mut next = state.clone();
    let z = core.scores_of(&next.residuals);
    core.deflate_curves(&mut next.residuals, &z);
    next.residual_response -= core.fitted(&z);
    next.layer_index += 1;
    next
}

fn core_from_curves(layer: &LayerFit, span: &SpanBasis) -> LayerCore {
    let g = layer.n_groups();
    let r = span.dim();
    LayerCore {
        partition: layer.partition.clone(),
        basis: layer.bases.iter().map(|b| b.as_ref().map(|c| span.project_curve(c))).collect(),
        scores: DMatrix::zeros(0, g),
        coefs: layer.coef_scores.clone(),
        loadings: layer
            .loadings
            .iter()
            .map(|l| {
                let mut phi = DMatrix::zeros(g, r);
                for (i, c) in l.curves.iter().enumerate() {
                    phi.set_row(i, &span.project_curve(c).transpose());
                }
                (l.predictor, phi)
            })
            .collect(),
        explained_ss: layer.explained_ss,
        residual_ss: layer.residual_ss,
        ridged: layer.ridged,
    }
}

/// Runs filt-PLS along the layers of `forest` on standardized data.
pub fn run_filtration(forest: &Forest, data: &PreparedData, stop: &StoppingConfig) -> Result<FittedModel> {
    stop.validate()?;
    fit_forest(forest, data, stop)
}

/// [`run_filtration`] without validating `stop`, so internal callers can
/// disable the improvement rule with `e_y = 0`.
pub(crate) fn fit_forest(forest: &Forest, data: &PreparedData, stop: &StoppingConfig) -> Result<FittedModel> {
    let p = data.curves.n_predictors();
    forest.validate(p)?;
    let state = FiltrationState::new(&data.curves, &data.response)?;
    if state.active_set.is_empty() {
        return Err(Error::InvalidInput("no predictor carries any variation".into()));
    }
    let run = filtrate_forest(&forest.layers, state.residuals, state.residual_response, stop);
    Ok(assemble_model(
        data.curves.grid(),
        &state.span,
        data.standardization.clone(),
        data.response.mean,
        &forest.layers,
        &run,
    ))
}
