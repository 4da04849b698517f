//! Pairwise-fusion penalized multiple functional regression and the
//! grouping path it induces as the penalty level grows.
//!
//! Coefficient functions are represented in the leading principal
//! directions of the pooled predictor curves, so `β_j = V c_j` and
//! `‖β_i − β_j‖ = ‖c_i − c_j‖`. The concave penalty is handled by
//! majorize-minimize: each outer step linearizes `J_λ` at the current
//! pairwise distances and solves the resulting weighted group fused lasso
//! with ADMM on auxiliary difference variables `v_ij = c_i − c_j`.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::artifact::{check_version, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::fdata::{l2_norm, Curve, CurveSet, Grid, ResponseVector, SpanBasis};
use crate::linalg;

/// A partition of (a subset of) the predictor indices.
///
/// Groups are sorted ascending and ordered by their smallest member.
/// Indices are zero-based in memory and one-based in JSON.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct GroupingStructure {
    groups: Vec<Vec<usize>>,
}

impl TryFrom<Vec<Vec<usize>>> for GroupingStructure {
    type Error = Error;

    fn try_from(one_based: Vec<Vec<usize>>) -> Result<Self> {
        let groups = one_based
            .into_iter()
            .map(|g| {
                g.into_iter()
                    .map(|j| {
                        j.checked_sub(1)
                            .ok_or_else(|| Error::InvalidInput("predictor indices are 1-based".into()))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        GroupingStructure::new(groups)
    }
}

impl From<GroupingStructure> for Vec<Vec<usize>> {
    fn from(s: GroupingStructure) -> Self {
        s.groups
            .into_iter()
            .map(|g| g.into_iter().map(|j| j + 1).collect())
            .collect()
    }
}

impl GroupingStructure {
    /// Canonicalizes `groups`; rejects empty or overlapping groups.
    pub fn new(mut groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for g in &mut groups {
            if g.is_empty() {
                return Err(Error::InvalidInput("groups must be nonempty".into()));
            }
            g.sort_unstable();
            for &j in g.iter() {
                if !seen.insert(j) {
                    return Err(Error::InvalidInput(format!("predictor {} appears in two groups", j + 1)));
                }
            }
        }
        groups.sort_by_key(|g| g[0]);
        Ok(GroupingStructure { groups })
    }

    /// Like [`GroupingStructure::new`] but also requires the groups to cover
    /// exactly `0..p`.
    pub fn partition(groups: Vec<Vec<usize>>, p: usize) -> Result<Self> {
        let s = Self::new(groups)?;
        if !s.is_partition_of(p) {
            return Err(Error::InvalidInput(format!(
                "groups do not partition predictors 1..{p}"
            )));
        }
        Ok(s)
    }

    pub fn singletons(p: usize) -> Self {
        GroupingStructure {
            groups: (0..p).map(|j| vec![j]).collect(),
        }
    }

    pub fn single_group(p: usize) -> Self {
        GroupingStructure {
            groups: vec![(0..p).collect()],
        }
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn members(&self) -> Vec<usize> {
        let mut m: Vec<usize> = self.groups.iter().flatten().copied().collect();
        m.sort_unstable();
        m
    }

    pub fn is_partition_of(&self, p: usize) -> bool {
        self.members() == (0..p).collect::<Vec<_>>()
    }

    pub fn group_of(&self, j: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&j))
    }

    /// Whether every group of `self` lies inside some group of `coarser`.
    pub fn refines(&self, coarser: &GroupingStructure) -> bool {
        self.groups.iter().all(|g| {
            coarser
                .group_of(g[0])
                .is_some_and(|k| g.iter().all(|j| coarser.groups[k].contains(j)))
        })
    }

    /// Drops members outside `active` (and groups left empty).
    pub fn restrict(&self, active: &[usize]) -> GroupingStructure {
        let groups = self
            .groups
            .iter()
            .map(|g| g.iter().copied().filter(|j| active.contains(j)).collect::<Vec<_>>())
            .filter(|g| !g.is_empty())
            .collect();
        GroupingStructure { groups }
    }

    /// Compact text form such as `1,2|3,4,5`.
    pub fn signature(&self) -> String {
        self.groups
            .iter()
            .map(|g| g.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(","))
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// Concave fusion penalty family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Penalty {
    Mcp { gamma: f64 },
    Scad { gamma: f64 },
}

impl Default for Penalty {
    fn default() -> Self {
        Penalty::Mcp { gamma: 3.0 }
    }
}

impl Penalty {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Penalty::Mcp { gamma } if gamma > 1.0 => Ok(()),
            Penalty::Scad { gamma } if gamma > 2.0 => Ok(()),
            _ => Err(Error::InvalidInput(format!(
                "penalty {self:?} needs gamma > 1 (MCP) or gamma > 2 (SCAD)"
            ))),
        }
    }

    /// `J_λ(t)` for `t ≥ 0`.
    pub fn value(&self, lambda: f64, t: f64) -> f64 {
        match *self {
            Penalty::Mcp { gamma } => {
                if t <= gamma * lambda {
                    lambda * t - t * t / (2.0 * gamma)
                } else {
                    0.5 * gamma * lambda * lambda
                }
            }
            Penalty::Scad { gamma } => {
                if t <= lambda {
                    lambda * t
                } else if t <= gamma * lambda {
                    (2.0 * gamma * lambda * t - t * t - lambda * lambda) / (2.0 * (gamma - 1.0))
                } else {
                    0.5 * lambda * lambda * (gamma + 1.0)
                }
            }
        }
    }

    /// Right derivative `J'_λ(t)`.
    pub fn derivative(&self, lambda: f64, t: f64) -> f64 {
        match *self {
            Penalty::Mcp { gamma } => (lambda - t / gamma).max(0.0),
            Penalty::Scad { gamma } => {
                if t <= lambda {
                    lambda
                } else {
                    ((gamma * lambda - t) / (gamma - 1.0)).max(0.0)
                }
            }
        }
    }
}

/// Solver settings for the fusion path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub penalty: Penalty,
    /// Relative tolerance for declaring two coefficient functions fused.
    pub fusion_tol: f64,
    /// Fraction of pooled curve variance kept in the coefficient representation.
    pub variance_fraction: f64,
    pub n_lambda: usize,
    /// Smallest grid λ as a fraction of the largest.
    pub lambda_ratio: f64,
    pub max_outer: usize,
    pub outer_tol: f64,
    pub max_admm: usize,
    pub admm_abs_tol: f64,
    pub admm_rel_tol: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            penalty: Penalty::default(),
            fusion_tol: 1e-3,
            variance_fraction: 0.995,
            n_lambda: 40,
            lambda_ratio: 1e-3,
            max_outer: 200,
            outer_tol: 1e-9,
            max_admm: 20_000,
            admm_abs_tol: 1e-10,
            admm_rel_tol: 1e-8,
        }
    }
}

/// Per-predictor coefficient functions `β_j(t)` and the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedCoefficients {
    pub coefficients: Vec<Curve>,
    pub intercept: f64,
}

/// Result of one penalized fit.
#[derive(Debug, Clone)]
pub struct FusionFit {
    pub lambda: f64,
    pub coefficients: FusedCoefficients,
    /// Objective after each accepted majorize-minimize step (non-increasing).
    pub objective_trace: Vec<f64>,
    pub admm_iterations: usize,
    coords: DMatrix<f64>,
}

impl FusionFit {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().unwrap()
    }
}

/// Precomputed design for fitting the fusion objective on one dataset.
pub struct FusionProblem {
    config: FusionConfig,
    grid: Grid,
    span: SpanBasis,
    p: usize,
    r: usize,
    // N × (p·r): block j holds the span scores of predictor j.
    design: DMatrix<f64>,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    y: DVector<f64>,
    y_mean: f64,
    rho: f64,
    system: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

impl FusionProblem {
    /// `curves` should be standardized and `response` centered.
    pub fn new(curves: &CurveSet, response: &ResponseVector, config: FusionConfig) -> Result<Self> {
        config.penalty.validate()?;
        if response.len() != curves.n_samples() {
            return Err(Error::Dimension(format!(
                "{} responses for {} samples",
                response.len(),
                curves.n_samples()
            )));
        }
        let span = SpanBasis::with_threshold(curves, config.variance_fraction);
        let p = curves.n_predictors();
        let r = span.dim();
        let n = curves.n_samples();
        let mut design = DMatrix::zeros(n, p * r);
        for j in 0..p {
            design
                .columns_mut(j * r, r)
                .copy_from(&span.project(curves.predictor(j)));
        }
        let gram = design.tr_mul(&design);
        let y = response.to_dvector();
        let xty = design.tr_mul(&y);
        let rho = (gram.trace() / (p * r).max(1) as f64).max(1e-12);
        let mut prob = FusionProblem {
            config,
            grid: curves.grid().clone(),
            span,
            p,
            r,
            design,
            gram,
            xty,
            y,
            y_mean: response.mean,
            rho,
            system: None,
        };
        prob.system = prob.factor_system();
        Ok(prob)
    }

    pub fn config(&self) -> &FusionConfig {
        &self.config
    }

    pub fn n_predictors(&self) -> usize {
        self.p
    }

    /// Dimension of the coefficient representation per predictor.
    pub fn representation_dim(&self) -> usize {
        self.r
    }

    fn factor_system(&self) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let (p, r) = (self.p, self.r);
        let mut h = self.gram.clone();
        // ρ·(L ⊗ I_r) with L = p·I − 11ᵀ for the complete pair graph
        for a in 0..p {
            for b in 0..p {
                let l = if a == b { (p - 1) as f64 } else { -1.0 };
                for k in 0..r {
                    h[(a * r + k, b * r + k)] += self.rho * l;
                }
            }
        }
        let ridge = 1e-12 * h.trace().max(1e-300);
        for i in 0..h.nrows() {
            h[(i, i)] += ridge;
        }
        nalgebra::Cholesky::new(h)
    }

    fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let p = self.p;
        (0..p).flat_map(move |i| (i + 1..p).map(move |j| (i, j)))
    }

    fn block<'a>(&self, c: &'a DVector<f64>, j: usize) -> nalgebra::DVectorView<'a, f64> {
        c.rows(j * self.r, self.r)
    }

    fn rss(&self, c: &DVector<f64>) -> f64 {
        (&self.y - &self.design * c).norm_squared()
    }

    /// Fusion objective `½ RSS + Σ_{i<j} J_λ(‖c_i − c_j‖)`.
    pub fn objective_of(&self, lambda: f64, c: &DVector<f64>) -> f64 {
        let pen: f64 = self
            .pairs()
            .map(|(i, j)| {
                let t = (self.block(c, i) - self.block(c, j)).norm();
                self.config.penalty.value(lambda, t)
            })
            .sum();
        0.5 * self.rss(c) + pen
    }

    /// Unpenalized minimum-norm least-squares coefficients.
    fn least_squares(&self) -> DVector<f64> {
        linalg::lstsq(&self.design, &self.y)
    }

    fn to_coefficients(&self, c: &DVector<f64>) -> FusedCoefficients {
        let coefficients = (0..self.p)
            .map(|j| self.span.curve(&self.block(c, j).into_owned()))
            .collect();
        FusedCoefficients {
            coefficients,
            intercept: self.y_mean,
        }
    }

    fn to_coords(&self, coefs: &FusedCoefficients) -> Result<DVector<f64>> {
        if coefs.coefficients.len() != self.p {
            return Err(Error::Dimension(format!(
                "warm start has {} coefficient functions, expected {}",
                coefs.coefficients.len(),
                self.p
            )));
        }
        let mut c = DVector::zeros(self.p * self.r);
        for (j, curve) in coefs.coefficients.iter().enumerate() {
            if curve.len() != self.grid.len() {
                return Err(Error::Dimension("warm start is on a different grid".into()));
            }
            c.rows_mut(j * self.r, self.r).copy_from(&self.span.project_curve(curve));
        }
        Ok(c)
    }

    /// Fits the penalized objective at `lambda`, starting from `warm_start`
    /// (least squares when absent).
    pub fn fit(&self, lambda: f64, warm_start: Option<&FusedCoefficients>) -> Result<FusionFit> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let start = match warm_start {
            Some(w) => self.to_coords(w)?,
            None => self.least_squares(),
        };
        self.fit_from(lambda, start)
    }

    fn fit_from(&self, lambda: f64, start: DVector<f64>) -> Result<FusionFit> {
        if lambda == 0.0 || self.p == 1 || self.r == 0 {
            let c = self.least_squares();
            let obj = self.objective_of(lambda, &c);
            return Ok(FusionFit {
                lambda,
                coefficients: self.to_coefficients(&c),
                objective_trace: vec![obj],
                admm_iterations: 0,
                coords: DMatrix::from_column_slice(self.p * self.r, 1, c.as_slice()),
            });
        }
        let n_pairs = self.p * (self.p - 1) / 2;
        let mut c = start;
        let mut v: Vec<DVector<f64>> = self
            .pairs()
            .map(|(i, j)| self.block(&c, i) - self.block(&c, j))
            .collect();
        let mut u: Vec<DVector<f64>> = vec![DVector::zeros(self.r); n_pairs];
        let mut obj = self.objective_of(lambda, &c);
        let mut trace = vec![obj];
        let mut admm_total = 0;
        let mut converged = false;
        for _ in 0..self.config.max_outer {
            let weights: Vec<f64> = self
                .pairs()
                .map(|(i, j)| {
                    let t = (self.block(&c, i) - self.block(&c, j)).norm();
                    self.config.penalty.derivative(lambda, t)
                })
                .collect();
            let (mut c_new, iters) = self.admm(&weights, &c, &mut v, &mut u);
            admm_total += iters;
            self.snap_fused(&mut c_new, &v);
            let obj_new = self.objective_of(lambda, &c_new);
            if !(obj_new <= obj) {
                converged = true;
                break;
            }
            let gain = obj - obj_new;
            c = c_new;
            obj = obj_new;
            trace.push(obj);
            if gain <= self.config.outer_tol * obj.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence {
                lambda,
                iterations: self.config.max_outer,
                objective_trace: trace,
                last_iterate: Box::new(self.to_coefficients(&c)),
            });
        }
        Ok(FusionFit {
            lambda,
            coefficients: self.to_coefficients(&c),
            objective_trace: trace,
            admm_iterations: admm_total,
            coords: DMatrix::from_column_slice(self.p * self.r, 1, c.as_slice()),
        })
    }

    /// ADMM for `½‖y − Sc‖² + Σ w_ij ‖c_i − c_j‖`, warm-started from
    /// `c0`, `v`, `u` (updated in place). Returns the final `c`.
    fn admm(
        &self,
        weights: &[f64],
        c0: &DVector<f64>,
        v: &mut [DVector<f64>],
        u: &mut [DVector<f64>],
    ) -> (DVector<f64>, usize) {
        let (p, r, rho) = (self.p, self.r, self.rho);
        let system = self.system.as_ref().expect("fusion system is positive definite");
        let pr = p * r;
        let mut c = c0.clone();
        let eps_abs = self.config.admm_abs_tol;
        let eps_rel = self.config.admm_rel_tol;
        let sqrt_dim_pairs = ((v.len() * r) as f64).sqrt();
        let sqrt_dim = (pr as f64).sqrt();
        let mut iters = 0;
        for it in 0..self.config.max_admm {
            iters = it + 1;
            // c-update
            let mut rhs = self.xty.clone();
            for (k, (i, j)) in self.pairs().enumerate() {
                let d = (&v[k] - &u[k]) * rho;
                rhs.rows_mut(i * r, r).axpy(1.0, &d, 1.0);
                rhs.rows_mut(j * r, r).axpy(-1.0, &d, 1.0);
            }
            c = system.solve(&rhs);
            // v- and u-updates
            let mut primal_sq = 0.0;
            let mut dual = DVector::zeros(pr);
            let mut dc_sq = 0.0;
            let mut v_sq = 0.0;
            let mut u_agg = DVector::zeros(pr);
            for (k, (i, j)) in self.pairs().enumerate() {
                let diff = self.block(&c, i) - self.block(&c, j);
                let delta = &diff + &u[k];
                let norm = delta.norm();
                let thresh = weights[k] / rho;
                let v_new = if norm > thresh {
                    delta * (1.0 - thresh / norm)
                } else {
                    DVector::zeros(r)
                };
                let dv = &v_new - &v[k];
                dual.rows_mut(i * r, r).axpy(rho, &dv, 1.0);
                dual.rows_mut(j * r, r).axpy(-rho, &dv, 1.0);
                let res = &diff - &v_new;
                u[k] += &res;
                primal_sq += res.norm_squared();
                dc_sq += diff.norm_squared();
                v_sq += v_new.norm_squared();
                u_agg.rows_mut(i * r, r).axpy(rho, &u[k], 1.0);
                u_agg.rows_mut(j * r, r).axpy(-rho, &u[k], 1.0);
                v[k] = v_new;
            }
            let eps_pri = sqrt_dim_pairs * eps_abs + eps_rel * dc_sq.sqrt().max(v_sq.sqrt());
            let eps_dual = sqrt_dim * eps_abs + eps_rel * u_agg.norm();
            if primal_sq.sqrt() <= eps_pri && dual.norm() <= eps_dual {
                break;
            }
        }
        (c, iters)
    }

    /// Replaces coefficients joined by exactly-zero difference variables by
    /// their component average.
    fn snap_fused(&self, c: &mut DVector<f64>, v: &[DVector<f64>]) {
        let mut uf = UnionFind::new(self.p);
        for (k, (i, j)) in self.pairs().enumerate() {
            if v[k].iter().all(|x| *x == 0.0) {
                uf.union(i, j);
            }
        }
        for comp in uf.components() {
            if comp.len() < 2 {
                continue;
            }
            let mut mean = DVector::zeros(self.r);
            for &j in &comp {
                mean += self.block(c, j);
            }
            mean /= comp.len() as f64;
            for &j in &comp {
                c.rows_mut(j * self.r, self.r).copy_from(&mean);
            }
        }
    }

    /// λ at which the fully fused solution satisfies the stationarity
    /// conditions of the fusion objective.
    fn fusion_scale(&self) -> f64 {
        let (p, r) = (self.p, self.r);
        let n = self.y.len();
        let mut pooled = DMatrix::zeros(n, r);
        for j in 0..p {
            pooled += self.design.columns(j * r, r);
        }
        let c = linalg::lstsq(&pooled, &self.y);
        let res = &self.y - &pooled * &c;
        let grads: Vec<DVector<f64>> = (0..p)
            .map(|j| self.design.columns(j * r, r).tr_mul(&res))
            .collect();
        let mut best: f64 = 0.0;
        for (i, j) in self.pairs() {
            best = best.max((&grads[i] - &grads[j]).norm());
        }
        best / p as f64
    }

    /// Smallest power-of-two multiple of the stationarity scale at which a
    /// fit started from least squares fuses every predictor.
    pub fn full_fusion_lambda(&self) -> Result<f64> {
        let base = self.fusion_scale();
        if !(base > 0.0) {
            return Ok(1.0);
        }
        let mut lambda = 1.05 * base;
        let mut warm = self.least_squares();
        for _ in 0..30 {
            let fit = self.fit_from(lambda, warm.clone())?;
            if extract_grouping(&fit.coefficients, &self.grid, self.config.fusion_tol).n_groups() == 1 {
                return Ok(lambda);
            }
            warm = fit.coords.column(0).into_owned();
            lambda *= 2.0;
        }
        Err(Error::Evaluation("could not reach full fusion".into()))
    }
}

/// Fits the fusion objective at a single λ.
pub fn fit_fused(
    curves: &CurveSet,
    response: &ResponseVector,
    lambda: f64,
    config: &FusionConfig,
    warm_start: Option<&FusedCoefficients>,
) -> Result<FusionFit> {
    FusionProblem::new(curves, response, config.clone())?.fit(lambda, warm_start)
}

/// Groups are the connected components of the graph joining `i` and `j`
/// when `‖β_i − β_j‖ ≤ tol · max_k ‖β_k‖`.
pub fn extract_grouping(coefs: &FusedCoefficients, grid: &Grid, tol: f64) -> GroupingStructure {
    let p = coefs.coefficients.len();
    let scale = coefs
        .coefficients
        .iter()
        .map(|b| l2_norm(b, grid).unwrap_or(0.0))
        .fold(0.0, f64::max);
    let mut uf = UnionFind::new(p);
    for i in 0..p {
        for j in i + 1..p {
            let diff = Curve::new(
                coefs.coefficients[i]
                    .values
                    .iter()
                    .zip(&coefs.coefficients[j].values)
                    .map(|(a, b)| a - b)
                    .collect(),
            );
            let d = l2_norm(&diff, grid).unwrap_or(f64::INFINITY);
            if d <= tol * scale {
                uf.union(i, j);
            }
        }
    }
    GroupingStructure::new(uf.components()).expect("components form a partition")
}

pub(crate) struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }

    pub fn components(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut comps: Vec<Vec<usize>> = Vec::new();
        let mut root_slot = vec![usize::MAX; n];
        for x in 0..n {
            let r = self.find(x);
            if root_slot[r] == usize::MAX {
                root_slot[r] = comps.len();
                comps.push(Vec::new());
            }
            comps[root_slot[r]].push(x);
        }
        comps
    }
}

/// One structure on the grouping path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub lambda: f64,
    pub groups: GroupingStructure,
    /// True for endpoint structures added because no fit produced them.
    #[serde(default)]
    pub augmented: bool,
}

/// Deduplicated grouping structures ordered coarse to fine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingPath {
    pub version: String,
    pub n_predictors: usize,
    pub entries: Vec<PathEntry>,
}

impl GroupingPath {
    /// Builds a path from raw `(λ, structure)` fits: deduplicates, orders by
    /// group count (coarse first) and adds the one-group and all-singleton
    /// endpoints when missing.
    pub fn from_fits(n_predictors: usize, mut fits: Vec<(f64, GroupingStructure)>) -> Result<Self> {
        for (_, s) in &fits {
            if !s.is_partition_of(n_predictors) {
                return Err(Error::InvalidInput(format!(
                    "structure {} is not a partition of 1..{n_predictors}",
                    s.signature()
                )));
            }
        }
        // Larger λ first, so each structure keeps the largest λ producing it.
        fits.sort_by(|a, b| b.0.total_cmp(&a.0));
        let max_lambda = fits.first().map(|f| f.0).unwrap_or(0.0);
        let mut entries: Vec<PathEntry> = Vec::new();
        for (lambda, groups) in fits {
            if !entries.iter().any(|e| e.groups == groups) {
                entries.push(PathEntry {
                    lambda,
                    groups,
                    augmented: false,
                });
            }
        }
        let top = GroupingStructure::single_group(n_predictors);
        if !entries.iter().any(|e| e.groups == top) {
            entries.push(PathEntry {
                lambda: max_lambda,
                groups: top,
                augmented: true,
            });
        }
        let bottom = GroupingStructure::singletons(n_predictors);
        if !entries.iter().any(|e| e.groups == bottom) {
            entries.push(PathEntry {
                lambda: 0.0,
                groups: bottom,
                augmented: true,
            });
        }
        entries.sort_by(|a, b| {
            a.groups
                .n_groups()
                .cmp(&b.groups.n_groups())
                .then(b.lambda.total_cmp(&a.lambda))
        });
        Ok(GroupingPath {
            version: FORMAT_VERSION.to_string(),
            n_predictors,
            entries,
        })
    }

    pub fn structures(&self) -> Vec<GroupingStructure> {
        self.entries.iter().map(|e| e.groups.clone()).collect()
    }

    /// Checks the canonical-path invariants.
    pub fn validate(&self) -> Result<()> {
        check_version(&self.version)?;
        let p = self.n_predictors;
        if self.entries.is_empty() {
            return Err(Error::InvalidInput("empty grouping path".into()));
        }
        for (k, e) in self.entries.iter().enumerate() {
            if !e.groups.is_partition_of(p) {
                return Err(Error::InvalidInput(format!(
                    "path entry {k} does not partition predictors 1..{p}"
                )));
            }
            if self.entries[..k].iter().any(|o| o.groups == e.groups) {
                return Err(Error::InvalidInput(format!("path entry {k} is a duplicate")));
            }
        }
        if self
            .entries
            .windows(2)
            .any(|w| w[0].groups.n_groups() > w[1].groups.n_groups())
        {
            return Err(Error::InvalidInput("path group counts must be non-decreasing".into()));
        }
        if self.entries[0].groups.n_groups() != 1 || self.entries.last().unwrap().groups.n_groups() != p {
            return Err(Error::InvalidInput(
                "path must start with one group and end with singletons".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let path: GroupingPath = serde_json::from_str(text)?;
        path.validate()?;
        Ok(path)
    }
}

/// Solver diagnostics collected along the path.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PathDiagnostics {
    pub version: String,
    pub lambda_max: f64,
    pub representation_dim: usize,
    pub fits: Vec<LambdaDiagnostics>,
    pub dropped: Vec<DroppedLambda>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaDiagnostics {
    pub lambda: f64,
    pub n_groups: usize,
    pub admm_iterations: usize,
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DroppedLambda {
    pub lambda: f64,
    pub reason: String,
}

/// Ascending log-spaced λ grid ending at `lambda_max`.
pub fn lambda_grid(lambda_max: f64, n: usize, ratio: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lambda_max];
    }
    (0..n)
        .map(|k| {
            let e = (n - 1 - k) as f64 / (n - 1) as f64;
            lambda_max * ratio.powf(e)
        })
        .collect()
}

/// Warm-started fits over `lambdas` (ascending). A λ whose fit fails is
/// dropped and reported in the diagnostics.
pub fn compute_path_on_grid(
    problem: &FusionProblem,
    lambdas: &[f64],
) -> Result<(GroupingPath, PathDiagnostics)> {
    if lambdas.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("lambda grid must be ascending".into()));
    }
    let tol = problem.config.fusion_tol;
    let mut warm = problem.least_squares();
    let mut fits = Vec::new();
    let mut diag = PathDiagnostics {
        version: FORMAT_VERSION.to_string(),
        lambda_max: lambdas.last().copied().unwrap_or(0.0),
        representation_dim: problem.r,
        ..Default::default()
    };
    for &lambda in lambdas {
        match problem.fit_from(lambda, warm.clone()) {
            Ok(fit) => {
                let s = extract_grouping(&fit.coefficients, &problem.grid, tol);
                diag.fits.push(LambdaDiagnostics {
                    lambda,
                    n_groups: s.n_groups(),
                    admm_iterations: fit.admm_iterations,
                    objective_trace: fit.objective_trace.clone(),
                });
                warm = fit.coords.column(0).into_owned();
                fits.push((lambda, s));
            }
            Err(e) => {
                log::warn!("dropping lambda {lambda}: {e}");
                if let Error::Convergence { last_iterate, .. } = &e {
                    warm = problem.to_coords(last_iterate)?;
                }
                diag.dropped.push(DroppedLambda {
                    lambda,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok((GroupingPath::from_fits(problem.p, fits)?, diag))
}

/// Grouping path over an auto-scaled log-spaced λ grid.
pub fn compute_path(
    curves: &CurveSet,
    response: &ResponseVector,
    config: &FusionConfig,
) -> Result<(GroupingPath, PathDiagnostics)> {
    let problem = FusionProblem::new(curves, response, config.clone())?;
    if problem.p == 1 {
        return Ok((GroupingPath::from_fits(1, vec![])?, PathDiagnostics {
            version: FORMAT_VERSION.to_string(),
            ..Default::default()
        }));
    }
    let lambda_max = problem.full_fusion_lambda()?;
    let grid = lambda_grid(lambda_max, config.n_lambda, config.lambda_ratio);
    compute_path_on_grid(&problem, &grid)
}
