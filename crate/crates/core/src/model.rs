//! Fitted multiscale models: prediction, partial sums of squares,
//! bootstrap intervals for coefficient scores, and shared-layer counts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::{check_version, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::fdata::{CurveSet, Dataset, Grid, Standardization};
use crate::filtpls::{layer_core, CoordData, LayerFit, StopReason};
use crate::forest::Forest;
use crate::fusionpath::GroupingStructure;
use crate::linalg::{lstsq_rss, quantile};
use crate::rng::task_rng;

/// Fraction of failed bootstrap resamples tolerated.
const MAX_BOOT_DROP: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub stop_reason: StopReason,
    /// Response SS before the first layer.
    pub initial_ss: f64,
    pub explained_ss: Vec<f64>,
    pub residual_ss: Vec<f64>,
}

/// A fitted filtrated model with everything needed to predict new curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub version: String,
    pub grid: Grid,
    pub n_predictors: usize,
    pub response_mean: f64,
    pub standardization: Standardization,
    pub layers: Vec<LayerFit>,
    pub forest: Forest,
    pub diagnostics: FitDiagnostics,
}

impl FittedModel {
    pub(crate) fn new(
        grid: Grid,
        response_mean: f64,
        standardization: Standardization,
        layers: Vec<LayerFit>,
        forest: Forest,
        stop_reason: StopReason,
        initial_ss: f64,
    ) -> Self {
        let diagnostics = FitDiagnostics {
            stop_reason,
            initial_ss,
            explained_ss: layers.iter().map(|l| l.explained_ss).collect(),
            residual_ss: layers.iter().map(|l| l.residual_ss).collect(),
        };
        FittedModel {
            version: FORMAT_VERSION.to_string(),
            grid,
            n_predictors: standardization.n_predictors(),
            response_mean,
            standardization,
            layers,
            forest,
            diagnostics,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and validates a model, rejecting other major versions.
    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        let found = v.get("version").and_then(|v| v.as_str()).unwrap_or("");
        check_version(found)?;
        let model: FittedModel = serde_json::from_value(v)?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.n_predictors;
        let m = self.grid.len();
        if self.standardization.n_predictors() != p || self.standardization.means.iter().any(|c| c.len() != m) {
            return Err(Error::InvalidInput("standardization does not match the model".into()));
        }
        if self.layers.len() != self.forest.len() {
            return Err(Error::InvalidInput("layer count differs from the forest".into()));
        }
        self.forest.validate(p)?;
        for l in &self.layers {
            l.validate(p, m)?;
        }
        Ok(())
    }

    fn check_curves(&self, curves: &CurveSet) -> Result<()> {
        if curves.n_predictors() != self.n_predictors {
            return Err(Error::Dimension(format!(
                "model has {} predictors, data has {}",
                self.n_predictors,
                curves.n_predictors()
            )));
        }
        if curves.grid().len() != self.grid.len() {
            return Err(Error::Dimension(format!(
                "model grid has {} points, data grid has {}",
                self.grid.len(),
                curves.grid().len()
            )));
        }
        Ok(())
    }

    /// Walks the layers over `curves`, calling `visit(d, scores)` with the
    /// `N × g` score matrix of each layer.
    fn walk(&self, curves: &CurveSet, mut visit: impl FnMut(usize, &DMatrix<f64>)) -> Result<()> {
        self.check_curves(curves)?;
        let std = self.standardization.apply(curves)?;
        let mut x: Vec<DMatrix<f64>> = std.predictors().to_vec();
        let w = DVector::from_column_slice(self.grid.weights());
        let n = curves.n_samples();
        for (d, layer) in self.layers.iter().enumerate() {
            let g = layer.n_groups();
            let mut z = DMatrix::zeros(n, g);
            for (i, grp) in layer.partition.groups().iter().enumerate() {
                if let Some(b) = &layer.bases[i] {
                    let wb = DVector::from_iterator(b.len(), b.values.iter().zip(w.iter()).map(|(v, w)| v * w));
                    let mut col = z.column_mut(i);
                    for &j in grp {
                        col.gemv(1.0, &x[j], &wb, 1.0);
                    }
                }
            }
            visit(d, &z);
            if d + 1 < self.layers.len() {
                for l in &layer.loadings {
                    let phi = DMatrix::from_fn(g, self.grid.len(), |i, k| l.curves[i].values[k]);
                    x[l.predictor].gemm(-1.0, &z, &phi, 1.0);
                }
            }
        }
        Ok(())
    }

    /// Predictions for new curves, standardized with the training constants.
    pub fn predict(&self, curves: &CurveSet) -> Result<Vec<f64>> {
        let mut acc = DVector::from_element(curves.n_samples(), self.response_mean);
        self.walk(curves, |d, z| {
            acc += z * DVector::from_column_slice(&self.layers[d].coef_scores);
        })?;
        Ok(acc.iter().copied().collect())
    }

    /// Score matrices (`N × g`, one per layer) of `curves`.
    pub fn component_scores(&self, curves: &CurveSet) -> Result<Vec<DMatrix<f64>>> {
        let mut out = Vec::with_capacity(self.layers.len());
        self.walk(curves, |_, z| out.push(z.clone()))?;
        Ok(out)
    }

    /// Shared-layer counts of the fitted layers (partitions restricted to
    /// each layer's active set).
    pub fn shared_layer_counts(&self) -> SharedLayerMatrix {
        SharedLayerMatrix::from_partitions(self.n_predictors, self.layers.iter().map(|l| &l.partition))
    }

    fn component_index(&self, layer: usize, group: usize) -> Result<usize> {
        if layer >= self.layers.len() || group >= self.layers[layer].n_groups() {
            return Err(Error::InvalidInput(format!("no component at layer {layer}, group {group}")));
        }
        Ok(self.layers[..layer].iter().map(|l| l.n_groups()).sum::<usize>() + group)
    }
}

/// All component scores side by side, with the centered response.
fn full_design(model: &FittedModel, data: &Dataset) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let scores = model.component_scores(&data.curves)?;
    let n = data.n_samples();
    let k: usize = scores.iter().map(|z| z.ncols()).sum();
    let mut design = DMatrix::zeros(n, k);
    let mut c = 0;
    for z in &scores {
        design.view_mut((0, c), (n, z.ncols())).copy_from(z);
        c += z.ncols();
    }
    let y = DVector::from_iterator(n, data.response.iter().map(|v| v - model.response_mean));
    Ok((design, y))
}

/// Increase in RSS of the joint OLS of the centered response on all
/// components when component `(layer, group)` (0-based) is omitted.
pub fn pss(model: &FittedModel, data: &Dataset, layer: usize, group: usize) -> Result<f64> {
    let idx = model.component_index(layer, group)?;
    let (design, y) = full_design(model, data)?;
    Ok(pss_of_column(&design, &y, idx))
}

pub(crate) fn pss_of_column(design: &DMatrix<f64>, y: &DVector<f64>, idx: usize) -> f64 {
    let full = lstsq_rss(design, y);
    let reduced = lstsq_rss(&design.clone().remove_column(idx), y);
    reduced - full
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PssEntry {
    /// 1-based layer.
    pub layer: usize,
    /// 1-based group within the layer.
    pub group: usize,
    /// Member predictors, 1-based.
    pub members: Vec<usize>,
    pub coef_score: f64,
    pub pss: f64,
}

/// PSS of every component.
pub fn pss_table(model: &FittedModel, data: &Dataset) -> Result<Vec<PssEntry>> {
    let (design, y) = full_design(model, data)?;
    let mut out = Vec::new();
    let mut idx = 0;
    for (d, l) in model.layers.iter().enumerate() {
        for (i, g) in l.partition.groups().iter().enumerate() {
            out.push(PssEntry {
                layer: d + 1,
                group: i + 1,
                members: g.iter().map(|j| j + 1).collect(),
                coef_score: l.coef_scores[i],
                pss: pss_of_column(&design, &y, idx),
            });
            idx += 1;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiEntry {
    pub layer: usize,
    pub group: usize,
    pub members: Vec<usize>,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    /// The interval excludes zero.
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiTable {
    pub level: f64,
    pub n_boot: usize,
    pub dropped: usize,
    pub entries: Vec<CiEntry>,
}

/// Percentile bootstrap intervals for the coefficient scores with the
/// forest and the training standardization held fixed.
pub fn coefficient_cis(model: &FittedModel, data: &Dataset, n_boot: usize, level: f64, seed: u64) -> Result<CiTable> {
    if n_boot < 100 {
        return Err(Error::InvalidInput("at least 100 bootstrap resamples are required".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput("level must lie in (0, 1)".into()));
    }
    model.check_curves(&data.curves)?;
    let std = model.standardization.apply(&data.curves)?;
    let coords = CoordData::new(&std, &data.response);
    let n = data.n_samples();
    let partitions: Vec<&GroupingStructure> = model.layers.iter().map(|l| &l.partition).collect();
    let draws: Vec<Option<Vec<f64>>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = task_rng(seed, "bootstrap", b as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            bootstrap_coefs(&coords.select(&idx), &partitions)
        })
        .collect();
    let ok: Vec<&Vec<f64>> = draws.iter().flatten().collect();
    let dropped = n_boot - ok.len();
    if dropped as f64 > MAX_BOOT_DROP * n_boot as f64 {
        return Err(Error::Evaluation(format!("{dropped} of {n_boot} bootstrap resamples were degenerate")));
    }
    let alpha = 1.0 - level;
    let mut entries = Vec::new();
    let mut k = 0;
    for (d, l) in model.layers.iter().enumerate() {
        for (i, g) in l.partition.groups().iter().enumerate() {
            let mut v: Vec<f64> = ok.iter().map(|c| c[k]).collect();
            v.sort_by(f64::total_cmp);
            let lower = quantile(&v, alpha / 2.0);
            let upper = quantile(&v, 1.0 - alpha / 2.0);
            entries.push(CiEntry {
                layer: d + 1,
                group: i + 1,
                members: g.iter().map(|j| j + 1).collect(),
                estimate: l.coef_scores[i],
                lower,
                upper,
                significant: lower > 0.0 || upper < 0.0,
            });
            k += 1;
        }
    }
    Ok(CiTable {
        level,
        n_boot,
        dropped,
        entries,
    })
}

/// Refits the coefficient scores on a resample along fixed partitions;
/// `None` if any group degenerates.
fn bootstrap_coefs(sample: &CoordData, partitions: &[&GroupingStructure]) -> Option<Vec<f64>> {
    let mut x = sample.x.clone();
    let n = sample.y.len() as f64;
    let mean = sample.y.iter().sum::<f64>() / n;
    let mut y = DVector::from_iterator(sample.y.len(), sample.y.iter().map(|v| v - mean));
    let mut out = Vec::new();
    for s in partitions {
        let core = layer_core(s, &x, &y);
        if core.basis.iter().any(Option::is_none) || core.ridged {
            return None;
        }
        out.extend_from_slice(&core.coefs);
        crate::filtpls::deflate_core(&core, &mut x, &mut y);
    }
    Some(out)
}

/// Everything `filtra report` emits for a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub version: String,
    pub pss: Vec<PssEntry>,
    pub ci: CiTable,
    pub shared_layers: SharedLayerMatrix,
}

pub fn model_report(model: &FittedModel, data: &Dataset, n_boot: usize, level: f64, seed: u64) -> Result<ModelReport> {
    Ok(ModelReport {
        version: FORMAT_VERSION.to_string(),
        pss: pss_table(model, data)?,
        ci: coefficient_cis(model, data, n_boot, level, seed)?,
        shared_layers: model.shared_layer_counts(),
    })
}

/// Pairwise counts of layers in which two predictors share a group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedLayerMatrix {
    pub counts: Vec<Vec<f64>>,
}

impl SharedLayerMatrix {
    pub fn zeros(p: usize) -> Self {
        SharedLayerMatrix {
            counts: vec![vec![0.0; p]; p],
        }
    }

    pub(crate) fn from_partitions<'a>(p: usize, parts: impl IntoIterator<Item = &'a GroupingStructure>) -> Self {
        let mut m = SharedLayerMatrix::zeros(p);
        for s in parts {
            for g in s.groups() {
                for &a in g {
                    for &b in g {
                        m.counts[a][b] += 1.0;
                    }
                }
            }
        }
        m
    }

    pub fn n_predictors(&self) -> usize {
        self.counts.len()
    }

    /// Entry for 1-based predictors `(i, j)`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.counts[i - 1][j - 1]
    }

    /// Entrywise mean of equally sized matrices.
    pub fn mean(items: &[SharedLayerMatrix]) -> Option<SharedLayerMatrix> {
        let p = items.first()?.n_predictors();
        let mut m = SharedLayerMatrix::zeros(p);
        for it in items {
            for a in 0..p {
                for b in 0..p {
                    m.counts[a][b] += it.counts[a][b];
                }
            }
        }
        let k = items.len() as f64;
        m.counts.iter_mut().flatten().for_each(|v| *v /= k);
        Some(m)
    }
}

/// Counts for a forest whose layers have every predictor active.
pub fn shared_layer_counts(forest: &Forest) -> SharedLayerMatrix {
    let p = forest.layers.first().map_or(0, |s| s.members().len());
    SharedLayerMatrix::from_partitions(p, &forest.layers)
}
