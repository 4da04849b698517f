//! Discretized functional data: grids with quadrature weights, curves,
//! curve sets, and the numerics shared by every other module.
//!
//! Functions on `[0, 1]` are stored as samples on a [`Grid`]; inner products
//! use the composite trapezoid rule.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusionpath::GroupingStructure;

/// Default number of uniform grid points.
pub const DEFAULT_GRID_SIZE: usize = 101;
const MIN_GRID_SIZE: usize = 8;

/// Ascending sample points on `[0, 1]` with trapezoid weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl TryFrom<GridRepr> for Grid {
    type Error = Error;

    fn try_from(r: GridRepr) -> Result<Self> {
        let grid = Grid::new(r.points)?;
        if grid.weights.len() != r.weights.len()
            || grid
                .weights
                .iter()
                .zip(&r.weights)
                .any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(Error::InvalidInput(
                "grid weights do not match the trapezoid rule".into(),
            ));
        }
        Ok(grid)
    }
}

impl From<Grid> for GridRepr {
    fn from(g: Grid) -> Self {
        GridRepr {
            points: g.points,
            weights: g.weights,
        }
    }
}

impl Grid {
    /// Builds a grid from strictly increasing points with `points[0] == 0`
    /// and `points[last] == 1`.
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < MIN_GRID_SIZE {
            return Err(Error::InvalidInput(format!(
                "grid needs at least {MIN_GRID_SIZE} points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidInput("grid points must be finite".into()));
        }
        if points[0] != 0.0 || *points.last().unwrap() != 1.0 {
            return Err(Error::InvalidInput("grid must start at 0 and end at 1".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("grid points must be strictly increasing".into()));
        }
        let m = points.len();
        let mut weights = vec![0.0; m];
        for k in 0..m - 1 {
            let h = 0.5 * (points[k + 1] - points[k]);
            weights[k] += h;
            weights[k + 1] += h;
        }
        Ok(Grid { points, weights })
    }

    /// Uniform grid with `m` points.
    pub fn uniform(m: usize) -> Result<Self> {
        if m < MIN_GRID_SIZE {
            return Err(Error::InvalidInput(format!(
                "grid needs at least {MIN_GRID_SIZE} points, got {m}"
            )));
        }
        let mut points: Vec<f64> = (0..m).map(|k| k as f64 / (m - 1) as f64).collect();
        points[m - 1] = 1.0;
        Grid::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Samples of one function on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Curve {
    pub values: Vec<f64>,
}

impl Curve {
    pub fn new(values: Vec<f64>) -> Self {
        Curve { values }
    }

    pub fn zeros(m: usize) -> Self {
        Curve { values: vec![0.0; m] }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        Curve {
            values: grid.points().iter().map(|&t| f(t)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        if self.values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "curve has {} samples but the grid has {} points",
                self.values.len(),
                grid.len()
            )));
        }
        Ok(())
    }
}

/// Trapezoid-rule inner product of two curves on `grid`.
pub fn inner_product(f: &Curve, g: &Curve, grid: &Grid) -> Result<f64> {
    f.check(grid)?;
    g.check(grid)?;
    Ok(weighted_dot(&f.values, &g.values, grid.weights()))
}

pub fn l2_norm(f: &Curve, grid: &Grid) -> Result<f64> {
    Ok(inner_product(f, f, grid)?.max(0.0).sqrt())
}

pub(crate) fn weighted_dot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    a.iter().zip(b).zip(w).map(|((x, y), w)| x * y * w).sum()
}

/// The `d`-th element (1-based) of the orthonormal Fourier system on `[0, 1]`:
/// `1, √2 sin(2πt), √2 cos(2πt), √2 sin(4πt), ...`.
pub fn fourier_basis(d: usize, grid: &Grid) -> Curve {
    assert!(d >= 1, "Fourier basis index is 1-based");
    let two_pi = 2.0 * std::f64::consts::PI;
    let k = (d / 2) as f64;
    let sqrt2 = std::f64::consts::SQRT_2;
    match d {
        1 => Curve::from_fn(grid, |_| 1.0),
        _ if d % 2 == 0 => Curve::from_fn(grid, |t| sqrt2 * (two_pi * k * t).sin()),
        _ => Curve::from_fn(grid, |t| sqrt2 * (two_pi * k * t).cos()),
    }
}

/// `N × p` functional observations on one shared grid.
///
/// Predictor `j` is stored as an `N × m` matrix whose rows are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    grid: Grid,
    predictors: Vec<DMatrix<f64>>,
}

impl CurveSet {
    pub fn new(grid: Grid, predictors: Vec<DMatrix<f64>>) -> Result<Self> {
        if predictors.is_empty() {
            return Err(Error::InvalidInput("a curve set needs at least one predictor".into()));
        }
        let n = predictors[0].nrows();
        for (j, x) in predictors.iter().enumerate() {
            if x.nrows() != n || x.ncols() != grid.len() {
                return Err(Error::Dimension(format!(
                    "predictor {j} is {}x{}, expected {n}x{}",
                    x.nrows(),
                    x.ncols(),
                    grid.len()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("predictor {j} has non-finite values")));
            }
        }
        Ok(CurveSet { grid, predictors })
    }

    /// Like [`CurveSet::new`] but also requires at least two samples.
    pub fn for_training(grid: Grid, predictors: Vec<DMatrix<f64>>) -> Result<Self> {
        let set = CurveSet::new(grid, predictors)?;
        if set.n_samples() < 2 {
            return Err(Error::InvalidInput("at least two samples are required".into()));
        }
        Ok(set)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_samples(&self) -> usize {
        self.predictors[0].nrows()
    }

    pub fn n_predictors(&self) -> usize {
        self.predictors.len()
    }

    pub fn predictor(&self, j: usize) -> &DMatrix<f64> {
        &self.predictors[j]
    }

    pub fn predictors(&self) -> &[DMatrix<f64>] {
        &self.predictors
    }

    pub fn curve(&self, n: usize, j: usize) -> Curve {
        Curve::new(self.predictors[j].row(n).iter().copied().collect())
    }

    /// Rows `indices` of every predictor, in the given order.
    pub fn select_samples(&self, indices: &[usize]) -> CurveSet {
        let predictors = self
            .predictors
            .iter()
            .map(|x| x.select_rows(indices))
            .collect();
        CurveSet {
            grid: self.grid.clone(),
            predictors,
        }
    }

    /// Pooled curves `Z_i = Σ_{j ∈ group i} X_j`, one predictor per group.
    pub fn aggregate(&self, structure: &GroupingStructure) -> CurveSet {
        let predictors = structure
            .groups()
            .iter()
            .map(|g| {
                let mut z = self.predictors[g[0]].clone();
                for &j in &g[1..] {
                    z += &self.predictors[j];
                }
                z
            })
            .collect();
        CurveSet {
            grid: self.grid.clone(),
            predictors,
        }
    }
}

/// Raw curves paired with a raw scalar response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub curves: CurveSet,
    pub response: Vec<f64>,
}

impl Dataset {
    pub fn new(curves: CurveSet, response: Vec<f64>) -> Result<Self> {
        if curves.n_samples() != response.len() {
            return Err(Error::Dimension(format!(
                "{} curve samples but {} responses",
                curves.n_samples(),
                response.len()
            )));
        }
        if response.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("response has non-finite values".into()));
        }
        Ok(Dataset { curves, response })
    }

    pub fn n_samples(&self) -> usize {
        self.response.len()
    }

    pub fn n_predictors(&self) -> usize {
        self.curves.n_predictors()
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            curves: self.curves.select_samples(indices),
            response: indices.iter().map(|&i| self.response[i]).collect(),
        }
    }
}

/// Standardized curves and centered response, with the constants needed to
/// repeat the preprocessing on new data.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub curves: CurveSet,
    pub response: ResponseVector,
    pub standardization: Standardization,
}

impl PreparedData {
    pub fn new(data: &Dataset) -> Result<Self> {
        let standardization = Standardization::fit(&data.curves)?;
        let curves = standardization.apply(&data.curves)?;
        let response = center_response(&data.response)?;
        Ok(PreparedData {
            curves,
            response,
            standardization,
        })
    }
}

/// Centered scalar response with its centering constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseVector {
    pub values: Vec<f64>,
    pub mean: f64,
}

impl ResponseVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }
}

pub fn center_response(y: &[f64]) -> Result<ResponseVector> {
    if y.len() < 2 {
        return Err(Error::InvalidInput("response needs at least two values".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("response has non-finite values".into()));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    Ok(ResponseVector {
        values: y.iter().map(|v| v - mean).collect(),
        mean,
    })
}

/// Per-predictor centering curves and scales learned from training curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<Curve>,
    pub scales: Vec<f64>,
}

impl Standardization {
    /// Learns `X̄_j(t)` and `s_j = (N⁻¹ Σ_n ‖X_jn − X̄_j‖²)^{1/2}`.
    pub fn fit(x: &CurveSet) -> Result<Self> {
        let n = x.n_samples();
        if n < 2 {
            return Err(Error::InvalidInput("standardization needs at least two samples".into()));
        }
        let w = x.grid().weights();
        let mut means = Vec::with_capacity(x.n_predictors());
        let mut scales = Vec::with_capacity(x.n_predictors());
        for (j, xj) in x.predictors().iter().enumerate() {
            let mean: Vec<f64> = xj.column_iter().map(|c| c.sum() / n as f64).collect();
            let mut ss = 0.0;
            let mut raw = 0.0;
            for row in xj.row_iter() {
                for (k, v) in row.iter().enumerate() {
                    let c = v - mean[k];
                    ss += w[k] * c * c;
                    raw += w[k] * v * v;
                }
            }
            let var = ss / n as f64;
            let raw = raw / n as f64;
            if !(var > 1e-24 * raw) || var <= f64::MIN_POSITIVE {
                return Err(Error::DegeneratePredictor { index: j });
            }
            means.push(Curve::new(mean));
            scales.push(var.sqrt());
        }
        Ok(Standardization { means, scales })
    }

    pub fn n_predictors(&self) -> usize {
        self.scales.len()
    }

    /// Applies the stored constants to (possibly new) curves.
    pub fn apply(&self, x: &CurveSet) -> Result<CurveSet> {
        if x.n_predictors() != self.n_predictors() {
            return Err(Error::Dimension(format!(
                "expected {} predictors, found {}",
                self.n_predictors(),
                x.n_predictors()
            )));
        }
        let predictors = x
            .predictors()
            .iter()
            .enumerate()
            .map(|(j, xj)| {
                if self.means[j].len() != xj.ncols() {
                    return Err(Error::Dimension("grid length differs from the training grid".into()));
                }
                let mut out = xj.clone();
                let inv = 1.0 / self.scales[j];
                for mut row in out.row_iter_mut() {
                    for (k, v) in row.iter_mut().enumerate() {
                        *v = (*v - self.means[j].values[k]) * inv;
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        CurveSet::new(x.grid().clone(), predictors)
    }
}

/// Centers each predictor at its mean curve and scales it to unit mean
/// squared L² norm.
pub fn standardize_curves(x: &CurveSet) -> Result<CurveSet> {
    Standardization::fit(x)?.apply(x)
}

/// Linear interpolation of `(points, values)` onto `grid`. `points` must be
/// strictly increasing and cover `[0, 1]`.
pub fn resample_linear(points: &[f64], values: &[f64], grid: &Grid) -> Curve {
    debug_assert_eq!(points.len(), values.len());
    let mut out = Vec::with_capacity(grid.len());
    let mut k = 0;
    for &t in grid.points() {
        while k + 2 < points.len() && points[k + 1] < t {
            k += 1;
        }
        let (t0, t1) = (points[k], points[k + 1]);
        let a = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
        // Exact at the knots so that data already on the grid round-trips.
        out.push(if a == 1.0 { values[k + 1] } else { values[k] + a * (values[k + 1] - values[k]) });
    }
    Curve::new(out)
}

/// Orthonormal coordinates for the span of a set of curves.
///
/// A curve `x` maps to `c = Uᵀ(√w ⊙ x)`; inner products of curves in the
/// span equal Euclidean dot products of their coordinates. Because every
/// filt-PLS basis and loading is a linear combination of training curves,
/// computing in these coordinates is exact and, for low-rank data, much
/// cheaper than working on the raw grid.
#[derive(Debug, Clone)]
pub struct SpanBasis {
    sqrt_w: DVector<f64>,
    // m × r, orthonormal columns
    u: DMatrix<f64>,
}

impl SpanBasis {
    /// Span of all curves in `x`, keeping directions whose Gram eigenvalue
    /// exceeds `1e-12` times the largest.
    pub fn of(x: &CurveSet) -> Self {
        Self::with_threshold(x, 1.0)
    }

    /// Leading directions whose eigenvalues capture at least `fraction` of
    /// the total variation; `fraction = 1` keeps the full numerical span.
    pub fn with_threshold(x: &CurveSet, fraction: f64) -> Self {
        let m = x.grid().len();
        let sqrt_w = DVector::from_iterator(m, x.grid().weights().iter().map(|w| w.sqrt()));
        let mut gram = DMatrix::<f64>::zeros(m, m);
        for xj in x.predictors() {
            let scaled = weighted_rows(xj, &sqrt_w);
            gram.gemm_tr(1.0, &scaled, &scaled, 1.0);
        }
        let eig = nalgebra::SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let top = eig.eigenvalues[order[0]].max(0.0);
        let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        let mut keep = Vec::new();
        let mut acc = 0.0;
        for &k in &order {
            let v = eig.eigenvalues[k];
            if !(v > 1e-12 * top) {
                break;
            }
            keep.push(k);
            acc += v;
            if fraction < 1.0 && acc >= fraction * total {
                break;
            }
        }
        let mut u = DMatrix::zeros(m, keep.len());
        for (c, &k) in keep.iter().enumerate() {
            u.set_column(c, &eig.eigenvectors.column(k));
        }
        SpanBasis { sqrt_w, u }
    }

    pub fn dim(&self) -> usize {
        self.u.ncols()
    }

    /// Coordinates of the rows of an `N × m` curve matrix (`N × r`).
    pub fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        weighted_rows(x, &self.sqrt_w) * &self.u
    }

    pub fn project_curve(&self, c: &Curve) -> DVector<f64> {
        let scaled = DVector::from_iterator(
            c.len(),
            c.values.iter().zip(self.sqrt_w.iter()).map(|(v, s)| v * s),
        );
        self.u.tr_mul(&scaled)
    }

    /// Grid samples (`N × m`) of the curves whose coordinates are the rows
    /// of `coords` (`N × r`).
    pub fn curves(&self, coords: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = coords * self.u.transpose();
        for (k, mut col) in z.column_iter_mut().enumerate() {
            col /= self.sqrt_w[k];
        }
        z
    }

    /// Grid samples of the curve with coordinates `coords`.
    pub fn curve(&self, coords: &DVector<f64>) -> Curve {
        let z = &self.u * coords;
        Curve::new(z.iter().zip(self.sqrt_w.iter()).map(|(v, s)| v / s).collect())
    }
}

fn weighted_rows(x: &DMatrix<f64>, sqrt_w: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (k, mut col) in out.column_iter_mut().enumerate() {
        col *= sqrt_w[k];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn grid512() -> Grid {
        Grid::uniform(512).unwrap()
    }

    fn random_set(seed: u64, n: usize, p: usize, m: usize) -> CurveSet {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let grid = Grid::uniform(m).unwrap();
        let preds = (0..p)
            .map(|j| DMatrix::from_fn(n, m, |_, k| rng.gen_range(-1.0..1.0) * (1.0 + j as f64) + k as f64 * 0.01))
            .collect();
        CurveSet::new(grid, preds).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::uniform(7).is_err());
        assert!(Grid::new(vec![0.0, 0.1, 0.2, 0.3, 0.3, 0.5, 0.6, 1.0]).is_err());
        assert!(Grid::new(vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 1.0]).is_err());
        let g = Grid::new(vec![0.0, 0.05, 0.2, 0.3, 0.45, 0.6, 0.9, 1.0]).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert!(g.weights().iter().all(|w| *w > 0.0));
    }

    #[test]
    fn constant_one_has_unit_inner_product() {
        for g in [Grid::uniform(8).unwrap(), Grid::uniform(101).unwrap(), grid512()] {
            let one = Curve::from_fn(&g, |_| 1.0);
            assert!((inner_product(&one, &one, &g).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fourier_pair_is_orthogonal() {
        let g = grid512();
        let s = Curve::from_fn(&g, |t| (2.0 * PI * t).sin());
        let c = Curve::from_fn(&g, |t| (2.0 * PI * t).cos());
        assert!(inner_product(&s, &c, &g).unwrap().abs() < 1e-6);
    }

    #[test]
    fn scaled_sine_has_unit_norm() {
        // Closed form: ∫ 2 sin²(2πt) dt = 1. Fine-grid oracle agrees.
        let g = grid512();
        let f = Curve::from_fn(&g, |t| 2f64.sqrt() * (2.0 * PI * t).sin());
        assert!((inner_product(&f, &f, &g).unwrap() - 1.0).abs() < 1e-6);
        assert!((l2_norm(&f, &g).unwrap() - 1.0).abs() < 1e-6);
        let fine = Grid::uniform(20_001).unwrap();
        let ff = Curve::from_fn(&fine, |t| 2f64.sqrt() * (2.0 * PI * t).sin());
        assert!((l2_norm(&ff, &fine).unwrap() - l2_norm(&f, &g).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn norm_of_simple_curves() {
        let g = Grid::uniform(101).unwrap();
        assert_eq!(l2_norm(&Curve::zeros(101), &g).unwrap(), 0.0);
        assert!((l2_norm(&Curve::from_fn(&g, |_| 2.0), &g).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn grid_mismatch_is_a_dimension_error() {
        let g = Grid::uniform(101).unwrap();
        let err = inner_product(&Curve::zeros(100), &Curve::zeros(101), &g).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn fourier_basis_elements() {
        let g = grid512();
        assert!(fourier_basis(1, &g).values.iter().all(|v| *v == 1.0));
        let b2 = fourier_basis(2, &g);
        let b3 = fourier_basis(3, &g);
        assert!(inner_product(&b2, &b3, &g).unwrap().abs() < 1e-8);
        assert!((l2_norm(&fourier_basis(4, &g), &g).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fourier_gram_is_identity() {
        for m in [256, DEFAULT_GRID_SIZE] {
            let g = Grid::uniform(m).unwrap();
            let basis: Vec<Curve> = (1..=9).map(|d| fourier_basis(d, &g)).collect();
            for a in 0..9 {
                for b in 0..9 {
                    let ip = inner_product(&basis[a], &basis[b], &g).unwrap();
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((ip - want).abs() < 1e-5, "m={m} ({a},{b}) = {ip}");
                }
            }
        }
    }

    #[test]
    fn standardize_rejects_constant_predictor() {
        let g = Grid::uniform(16).unwrap();
        let x0 = DMatrix::from_fn(5, 16, |n, k| (n * k) as f64);
        let x1 = DMatrix::from_fn(5, 16, |_, k| 0.1 * k as f64);
        let set = CurveSet::new(g, vec![x0, x1]).unwrap();
        match standardize_curves(&set) {
            Err(Error::DegeneratePredictor { index }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn standardized_curves_have_zero_mean_and_unit_energy() {
        let set = random_set(3, 30, 3, 41);
        let z = standardize_curves(&set).unwrap();
        let w = z.grid().weights();
        for j in 0..3 {
            let xj = z.predictor(j);
            for col in xj.column_iter() {
                assert!(col.sum().abs() / 30.0 < 1e-12);
            }
            // Direct recomputation oracle.
            let mut energy = 0.0;
            for n in 0..30 {
                for k in 0..41 {
                    energy += w[k] * xj[(n, k)] * xj[(n, k)];
                }
            }
            assert!((energy / 30.0 - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn center_response_examples() {
        let r = center_response(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.values, vec![-1.0, 0.0, 1.0]);
        assert_eq!(r.mean, 2.0);
        let r = center_response(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(r.values, vec![-1.0, 0.0, 1.0]);
        assert_eq!(r.mean, 0.0);
        assert!(center_response(&[1.0]).is_err());
        assert!(center_response(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn span_basis_preserves_inner_products() {
        let set = random_set(11, 12, 2, 33);
        let span = SpanBasis::of(&set);
        let g = set.grid().clone();
        let a = set.curve(3, 0);
        let b = set.curve(7, 1);
        let ca = span.project_curve(&a);
        let cb = span.project_curve(&b);
        let exact = inner_product(&a, &b, &g).unwrap();
        assert!((ca.dot(&cb) - exact).abs() < 1e-10 * (1.0 + exact.abs()));
        let back = span.curve(&ca);
        for (x, y) in back.values.iter().zip(&a.values) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn resample_is_identity_on_the_same_points() {
        let g = Grid::uniform(21).unwrap();
        let vals: Vec<f64> = g.points().iter().map(|t| t * t).collect();
        let c = resample_linear(g.points(), &vals, &g);
        assert_eq!(c.values, vals);
        let coarse = Grid::uniform(11).unwrap();
        let lin: Vec<f64> = coarse.points().iter().map(|t| 3.0 * t - 1.0).collect();
        let c = resample_linear(coarse.points(), &lin, &g);
        for (t, v) in g.points().iter().zip(&c.values) {
            assert!((v - (3.0 * t - 1.0)).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn inner_product_is_symmetric_and_bilinear(
            seed in 0u64..10_000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0
        ) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = Grid::uniform(64).unwrap();
            let mut rc = || Curve::new((0..64).map(|_| rng.gen_range(-2.0..2.0)).collect());
            let (f, h, k) = (rc(), rc(), rc());
            let fh = inner_product(&f, &h, &g).unwrap();
            prop_assert!((fh - inner_product(&h, &f, &g).unwrap()).abs() < 1e-14);
            let comb = Curve::new(f.values.iter().zip(&h.values).map(|(a, b)| alpha * a + beta * b).collect());
            let lhs = inner_product(&comb, &k, &g).unwrap();
            let rhs = alpha * inner_product(&f, &k, &g).unwrap() + beta * inner_product(&h, &k, &g).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn standardization_is_idempotent(seed in 0u64..10_000) {
            let set = random_set(seed, 8, 2, 16);
            let once = standardize_curves(&set).unwrap();
            let twice = standardize_curves(&once).unwrap();
            for j in 0..2 {
                let d = (once.predictor(j) - twice.predictor(j)).amax();
                prop_assert!(d < 1e-10);
            }
        }

        #[test]
        fn centering_round_trips(values in proptest::collection::vec(-1e3f64..1e3, 2..40)) {
            let r = center_response(&values).unwrap();
            for (c, v) in r.values.iter().zip(&values) {
                prop_assert!(((c + r.mean) - v).abs() <= 1e-12 * (1.0 + v.abs().max(r.mean.abs())));
            }
            let s: f64 = r.values.iter().sum();
            let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
            prop_assert!(s.abs() <= 1e-12 * values.len() as f64 * (1.0 + scale));
        }
    }
}
