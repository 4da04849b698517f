//! Acceptance suite. Each test checks one criterion at its stated tolerance
//! and prints a single `criterion N PASS|FAIL` line.
//!
//! The Monte Carlo criteria (1 to 3) take several minutes; run with
//! `cargo test -p filtra-core --test acceptance -- --nocapture` to see the
//! summary lines.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use filtra_core::fdata::{fourier_basis, inner_product, l2_norm, CurveSet, Dataset, Grid, PreparedData};
use filtra_core::forest::{enumerate_candidate_sets, gic, refine_layers, CandidateSet, Forest, GicConfig};
use filtra_core::fusionpath::{GroupingPath, GroupingStructure};
use filtra_core::io::write_predictions;
use filtra_core::model::{model_report, pss, pss_table, shared_layer_counts, FittedModel};
use filtra_core::pipeline::{PipelineConfig, Session};
use filtra_core::simgen::{draw_scores, gen_dataset, run_experiment, setup_forest, Decay, ExperimentConfig, ExperimentReport, Method, SimConfig};
use filtra_core::{run_filtration, StoppingConfig};

fn verdict(n: usize, pass: bool, detail: &str) {
    println!("criterion {n} {}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ------------------------------------------------------------ Monte Carlo

fn experiment(n: usize, decay: Decay, seed: u64) -> ExperimentReport {
    let cfg = ExperimentConfig {
        sim: SimConfig {
            n_samples: n,
            sigma: 0.5,
            decay,
            seed,
            ..SimConfig::default()
        },
        n_reps: 50,
        methods: Method::ALL.to_vec(),
        pipeline: PipelineConfig::default(),
    };
    let (report, stats) = run_experiment(&cfg).expect("experiment runs");
    println!("{n} samples, {decay:?} decay: 50 replications in {:.0}s", stats.total_secs);
    report
}

fn strong_run() -> &'static ExperimentReport {
    static RUN: OnceLock<ExperimentReport> = OnceLock::new();
    RUN.get_or_init(|| experiment(200, Decay::Strong, 20_240))
}

fn medians(r: &ExperimentReport) -> [f64; 4] {
    [Method::Filtrated, Method::Grouped, Method::Ordinary, Method::Setup].map(|m| r.median_mse[&m])
}

fn check_report(r: &ExperimentReport) {
    assert_eq!(r.replications.len() + r.failures.len(), 50);
    for v in r.mse.values().flatten() {
        assert!(v.is_finite() && *v >= 0.0);
    }
}

#[test]
fn criterion_01_strong_signal_mse_ordering() {
    let r = strong_run();
    check_report(r);
    let [f, g, o, s] = medians(r);
    let margin = (g - f) / g;
    let pass = f < g && g < o && f < s && margin >= 0.02;
    verdict(
        1,
        pass,
        &format!("median MSE filtrated {f:.4}, grouped {g:.4}, ordinary {o:.4}, setup {s:.4}; filtrated vs grouped margin {:.1}%", 100.0 * margin),
    );
}

#[test]
fn criterion_02_weak_signal_mse_ordering() {
    let r = experiment(100, Decay::Weak, 20_241);
    check_report(&r);
    let [f, g, o, s] = medians(&r);
    let pass = f <= g && f <= o && f <= s;
    verdict(2, pass, &format!("median MSE filtrated {f:.4}, grouped {g:.4}, ordinary {o:.4}, setup {s:.4}"));
}

#[test]
fn criterion_03_blockwise_structure_recovery() {
    let r = strong_run();
    let m = r.mean_shared.as_ref().expect("filtrated forests recorded");
    let block = |j: usize| match j {
        1 | 2 => 0,
        3..=5 => 1,
        _ => 2,
    };
    let (mut within, mut cross) = (Vec::new(), Vec::new());
    for i in 1..=10 {
        for j in i + 1..=10 {
            if block(i) == block(j) {
                within.push(m.get(i, j));
            } else {
                cross.push(m.get(i, j));
            }
        }
    }
    let avg = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (w, c) = (avg(&within), avg(&cross));
    verdict(3, w - c >= 0.5, &format!("mean within-block count {w:.3}, cross-block {c:.3}, gap {:.3} layers", w - c));
}

// ------------------------------------------------------------ exact checks

#[test]
fn criterion_04_setup_hierarchy_counts() {
    let m = shared_layer_counts(&setup_forest());
    let diag = (1..=10).all(|i| m.get(i, i) == 9.0);
    let pass = m.get(1, 2) == 4.0 && m.get(3, 5) == 4.0 && m.get(1, 3) == 2.0 && m.get(1, 10) == 2.0 && diag;
    verdict(
        4,
        pass,
        &format!(
            "counts(1,2)={} counts(3,5)={} counts(1,3)={} counts(1,10)={} diagonal all 9: {diag}",
            m.get(1, 2),
            m.get(3, 5),
            m.get(1, 3),
            m.get(1, 10)
        ),
    );
}

fn random_curves(r: &mut ChaCha8Rng, n: usize, p: usize, grid: &Grid) -> CurveSet {
    let m = grid.len();
    let preds = (0..p)
        .map(|_| {
            // Smooth random curves plus a little roughness.
            let k = r.gen_range(2..8);
            let basis: Vec<_> = (1..=k).map(|d| fourier_basis(d, grid)).collect();
            {
                let mut x = DMatrix::zeros(n, m);
                for i in 0..n {
                    for b in &basis {
                        let c: f64 = r.sample(StandardNormal);
                        for t in 0..m {
                            x[(i, t)] += c * b.values[t];
                        }
                    }
                    for t in 0..m {
                        x[(i, t)] += 0.05 * r.sample::<f64, _>(StandardNormal);
                    }
                }
                x
            }
        })
        .collect();
    CurveSet::new(grid.clone(), preds).unwrap()
}

/// Reference first-component functional PLS on the summed curve
/// `Z = Σ_j X̃_j`, with every step done directly on the grid.
fn reference_scores(data: &Dataset) -> Vec<f64> {
    let x = &data.curves;
    let (n, m, w) = (x.n_samples(), x.grid().len(), x.grid().weights());
    let mut z = DMatrix::<f64>::zeros(n, m);
    for xj in x.predictors() {
        let mean = xj.row_mean();
        let centered = DMatrix::from_fn(n, m, |i, t| xj[(i, t)] - mean[t]);
        let ss: f64 = (0..n).map(|i| (0..m).map(|t| w[t] * centered[(i, t)].powi(2)).sum::<f64>()).sum();
        z += centered / (ss / n as f64).sqrt();
    }
    let ybar = data.response.iter().sum::<f64>() / n as f64;
    let mut psi = vec![0.0; m];
    for i in 0..n {
        for t in 0..m {
            psi[t] += (data.response[i] - ybar) * z[(i, t)];
        }
    }
    let norm = (0..m).map(|t| w[t] * psi[t] * psi[t]).sum::<f64>().sqrt();
    (0..n).map(|i| (0..m).map(|t| w[t] * z[(i, t)] * psi[t]).sum::<f64>() / norm).collect()
}

#[test]
fn criterion_05_single_group_matches_reference_fpls() {
    let grid = Grid::uniform(64).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut r = rng(500 + seed);
        let curves = random_curves(&mut r, 30, 3, &grid);
        let y: Vec<f64> = (0..30).map(|_| r.sample(StandardNormal)).collect();
        let data = Dataset::new(curves, y).unwrap();
        let prepared = PreparedData::new(&data).unwrap();
        let forest = Forest { layers: vec![GroupingStructure::single_group(3)] };
        let stop = StoppingConfig { d_max: 1, ..Default::default() };
        let model = run_filtration(&forest, &prepared, &stop).unwrap();
        let got = model.component_scores(&data.curves).unwrap();
        let got: Vec<f64> = got[0].column(0).iter().copied().collect();
        let want = reference_scores(&data);
        let scale = want.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sign = if got.iter().zip(&want).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        let err = got.iter().zip(&want).map(|(a, b)| (sign * a - b).powi(2)).sum::<f64>().sqrt() / scale;
        worst = worst.max(err);
    }
    verdict(5, worst <= 1e-8, &format!("worst relative score error over 20 instances {worst:.2e}"));
}

fn random_partition(r: &mut ChaCha8Rng, members: &[usize]) -> Vec<Vec<usize>> {
    let k = r.gen_range(1..=members.len());
    let mut groups = vec![Vec::new(); k];
    let mut idx = members.to_vec();
    idx.shuffle(r);
    for (i, j) in idx.into_iter().enumerate() {
        // First k members seed the groups so none is empty.
        let g = if i < k { i } else { r.gen_range(0..k) };
        groups[g].push(j);
    }
    groups
}

/// Random nested forest: each layer splits groups of the previous one.
fn random_forest(r: &mut ChaCha8Rng, p: usize) -> Forest {
    let depth = r.gen_range(1..=5);
    let mut layers = vec![GroupingStructure::partition(random_partition(r, &(0..p).collect::<Vec<_>>()), p).unwrap()];
    for _ in 1..depth {
        let prev = layers.last().unwrap();
        let groups: Vec<Vec<usize>> = prev
            .groups()
            .iter()
            .flat_map(|g| if r.gen_bool(0.4) { random_partition(r, g) } else { vec![g.clone()] })
            .collect();
        layers.push(GroupingStructure::partition(groups, p).unwrap());
    }
    Forest { layers }
}

struct RandomFit {
    data: Dataset,
    model: FittedModel,
}

fn random_fits() -> &'static Vec<RandomFit> {
    static FITS: OnceLock<Vec<RandomFit>> = OnceLock::new();
    FITS.get_or_init(|| {
        let grid = Grid::uniform(33).unwrap();
        (0..100)
            .map(|seed| {
                let mut r = rng(9_000 + seed);
                let p = r.gen_range(2..=5);
                let n = r.gen_range(20..=50);
                let curves = random_curves(&mut r, n, p, &grid);
                let beta: Vec<f64> = (0..p).map(|_| r.sample(StandardNormal)).collect();
                let y = (0..n)
                    .map(|i| {
                        (0..p).map(|j| beta[j] * curves.predictor(j)[(i, 3)]).sum::<f64>() + r.sample::<f64, _>(StandardNormal)
                    })
                    .collect();
                let data = Dataset::new(curves, y).unwrap();
                let forest = random_forest(&mut r, p);
                forest.validate(p).unwrap();
                let stop = StoppingConfig { e_y: 1e-6, e_x: 1e-6, ..Default::default() };
                let model = run_filtration(&forest, &PreparedData::new(&data).unwrap(), &stop).unwrap();
                RandomFit { data, model }
            })
            .collect()
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[test]
fn criterion_06_orthogonality() {
    let (mut worst_cross, mut worst_resid, mut worst_norm) = (0.0f64, 0.0f64, 0.0f64);
    for fit in random_fits() {
        let (model, data) = (&fit.model, &fit.data);
        let scores = model.component_scores(&data.curves).unwrap();
        let cols: Vec<Vec<Vec<f64>>> = scores
            .iter()
            .map(|z| (0..z.ncols()).map(|c| z.column(c).iter().copied().collect()).collect())
            .collect();
        for a in 0..cols.len() {
            for b in a + 1..cols.len() {
                for u in &cols[a] {
                    for v in &cols[b] {
                        let s = norm(u) * norm(v);
                        if s > 0.0 {
                            worst_cross = worst_cross.max(dot(u, v).abs() / s);
                        }
                    }
                }
            }
        }
        let ybar = data.response.iter().sum::<f64>() / data.response.len() as f64;
        let mut resid: Vec<f64> = data.response.iter().map(|v| v - ybar).collect();
        let scale = norm(&resid);
        for (d, layer) in model.layers.iter().enumerate() {
            for (g, u) in cols[d].iter().enumerate() {
                for (ri, ui) in resid.iter_mut().zip(u) {
                    *ri -= layer.coef_scores[g] * ui;
                }
            }
            for u in &cols[d] {
                let s = norm(u) * scale;
                if s > 0.0 {
                    worst_resid = worst_resid.max(dot(u, &resid).abs() / s);
                }
            }
            for psi in layer.bases.iter().flatten() {
                worst_norm = worst_norm.max((l2_norm(psi, &model.grid).unwrap() - 1.0).abs());
            }
        }
    }
    let pass = worst_cross <= 1e-8 && worst_resid <= 1e-8 && worst_norm <= 1e-8;
    verdict(
        6,
        pass,
        &format!("100 models: cross-layer {worst_cross:.2e}, score-residual {worst_resid:.2e}, |‖ψ‖-1| {worst_norm:.2e}"),
    );
}

#[test]
fn criterion_07_monotone_residual_ss() {
    let mut worst = 0.0f64;
    for fit in random_fits() {
        let m = &fit.model;
        let mut prev = m.diagnostics.initial_ss;
        for l in &m.layers {
            worst = worst.max((l.residual_ss - prev) / m.diagnostics.initial_ss.max(f64::MIN_POSITIVE));
            prev = l.residual_ss;
        }
    }
    verdict(7, worst <= 1e-10, &format!("largest relative residual SS increase {worst:.2e}"));
}

fn random_path(r: &mut ChaCha8Rng) -> GroupingPath {
    let p = r.gen_range(2..=6);
    let k = r.gen_range(0..8);
    let fits = (0..k)
        .map(|_| {
            let s = GroupingStructure::partition(random_partition(r, &(0..p).collect::<Vec<_>>()), p).unwrap();
            (r.gen_range(0.01..10.0), s)
        })
        .collect();
    GroupingPath::from_fits(p, fits).unwrap()
}

fn set_ok(set: &CandidateSet, p: usize) -> bool {
    let s = &set.structures;
    s.first().map(|g| g.n_groups()) == Some(1)
        && s.last().map(|g| g.n_groups()) == Some(p)
        && s.windows(2).all(|w| w[1].refines(&w[0]) && w[1] != w[0])
        && set.validate(p).is_ok()
}

#[test]
fn criterion_08_partition_and_nesting_properties() {
    let mut r = rng(808);
    let mut violations = [0usize; 3];
    for _ in 0..1000 {
        // Structure validity: canonical, disjoint and covering.
        let p = r.gen_range(1..=12);
        let raw = random_partition(&mut r, &(0..p).collect::<Vec<_>>());
        let s = GroupingStructure::partition(raw.clone(), p).unwrap();
        let mut seen = BTreeSet::new();
        let ok = s.is_partition_of(p)
            && s.groups().iter().all(|g| !g.is_empty() && g.windows(2).all(|w| w[0] < w[1]))
            && s.groups().windows(2).all(|w| w[0][0] < w[1][0])
            && s.groups().iter().flatten().all(|&j| seen.insert(j))
            && seen.len() == p
            && s.n_groups() == raw.len();
        let mut dup = raw.clone();
        let first = dup[0][0];
        dup[0].push(first);
        if !ok || GroupingStructure::partition(dup, p).is_ok() {
            violations[0] += 1;
        }

        // Candidate sets: endpoints, strict nesting and no set inside another.
        let path = random_path(&mut r);
        let sets = enumerate_candidate_sets(&path, 50);
        let p = path.n_predictors;
        let contained = |a: &CandidateSet, b: &CandidateSet| a.structures.iter().all(|s| b.structures.contains(s));
        let mut ok = !sets.is_empty() && sets.iter().all(|s| set_ok(s, p));
        for (i, a) in sets.iter().enumerate() {
            for (j, b) in sets.iter().enumerate() {
                if i != j && contained(a, b) {
                    ok = false;
                }
            }
        }
        if !ok {
            violations[1] += 1;
        }
    }
    // Forest nesting of refinement output on small random problems.
    let grid = Grid::uniform(17).unwrap();
    for seed in 0..1000u64 {
        let mut r = rng(80_800 + seed);
        let path = random_path(&mut r);
        let p = path.n_predictors;
        let sets = enumerate_candidate_sets(&path, 50);
        let set = &sets[r.gen_range(0..sets.len())];
        let n = 24;
        let curves = random_curves(&mut r, n, p, &grid);
        let y: Vec<f64> = (0..n).map(|i| curves.predictor(0)[(i, 5)] + r.sample::<f64, _>(StandardNormal)).collect();
        let data = PreparedData::new(&Dataset::new(curves, y).unwrap()).unwrap();
        let cfg = GicConfig::new(r.gen_range(0.0..0.5), r.gen_range(1.0..2.0), StoppingConfig::default()).unwrap();
        let forest = refine_layers(set, &data, &cfg).unwrap();
        let nested = forest.validate(p).is_ok()
            && forest.layers.windows(2).all(|w| w[1].refines(&w[0]))
            && forest.layers.iter().all(|l| set.structures.contains(l));
        if !nested {
            violations[2] += 1;
        }
    }
    verdict(
        8,
        violations == [0, 0, 0],
        &format!(
            "violations over 1000 cases each: structures {}, candidate sets {}, forests {}",
            violations[0], violations[1], violations[2]
        ),
    );
}

#[test]
fn criterion_09_generator_calibration() {
    let n = 10_000;
    let mut worst_z = 0.0f64;
    for (k, decay) in [Decay::Strong, Decay::Weak].into_iter().enumerate() {
        let xi = draw_scores(decay, n, &mut rng(900 + k as u64));
        for j in 0..10 {
            for d in 1..=9 {
                let v: Vec<f64> = xi[j].iter().map(|s| s[d - 1]).collect();
                let mean = v.iter().sum::<f64>() / n as f64;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
                let law = match decay {
                    Decay::Strong => 1.1f64.powf(-(d as f64)),
                    Decay::Weak => 1.1f64.powf(d as f64 - 10.0),
                };
                let se = law * (2.0 / (n as f64 - 1.0)).sqrt();
                worst_z = worst_z.max((var - law).abs() / se);
            }
        }
    }
    let grid = Grid::uniform(101).unwrap();
    let mut worst_gram = 0.0f64;
    for a in 1..=9 {
        for b in 1..=9 {
            let ip = inner_product(&fourier_basis(a, &grid), &fourier_basis(b, &grid), &grid).unwrap();
            worst_gram = worst_gram.max((ip - if a == b { 1.0 } else { 0.0 }).abs());
        }
    }
    verdict(
        9,
        worst_z < 4.0 && worst_gram <= 1e-5,
        &format!("largest variance deviation {worst_z:.2} SE; Fourier Gram error {worst_gram:.2e}"),
    );
}

/// The pinned pipeline of the command-line golden test, run through the
/// library: simulate 60 samples (seed 7), default path, 10 splits (seed 3),
/// predict on the training curves and report with 100 resamples (seed 5).
fn pinned_pipeline() -> (Vec<u8>, Vec<u8>, FittedModel, Dataset) {
    let sim = gen_dataset(&SimConfig { n_samples: 60, sigma: 0.5, decay: Decay::Strong, seed: 7, ..SimConfig::default() }).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.mccv.n_splits = 10;
    cfg.mccv.seed = 3;
    let session = Session::new(&sim.data, &cfg).unwrap();
    let (path, _) = session.path().unwrap();
    let (model, _) = session.fit_filtrated(&path).unwrap();
    let y_hat = model.predict(&sim.data.curves).unwrap();
    let ids: Vec<String> = (1..=60).map(|i| i.to_string()).collect();
    let mut pred = Vec::new();
    write_predictions(&mut pred, &ids, &y_hat).unwrap();
    let report = model_report(&model, &sim.data, 100, 0.95, 5).unwrap();
    let mut rep = serde_json::to_string_pretty(&report).unwrap().into_bytes();
    rep.push(b'\n');
    (pred, rep, model, sim.data)
}

#[test]
fn criterion_10_determinism_and_round_trip() {
    let golden = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../cli/tests/golden");
    let (pred, rep, model, data) = pinned_pipeline();
    let pred_ok = std::fs::read(golden.join("predictions.csv")).map(|g| g == pred).unwrap_or(false);
    let rep_ok = std::fs::read(golden.join("report.json")).map(|g| g == rep).unwrap_or(false);
    let back = FittedModel::from_json(&model.to_json().unwrap()).unwrap();
    let a = model.predict(&data.curves).unwrap();
    let b = back.predict(&data.curves).unwrap();
    let bits = a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits());
    verdict(
        10,
        pred_ok && rep_ok && bits,
        &format!("golden predictions match: {pred_ok}; golden report matches: {rep_ok}; JSON round-trip bit-identical: {bits}"),
    );
}

#[test]
fn criterion_11_gic_and_pss_identities() {
    let mut r = rng(1_111);
    let mut gic_mismatch = 0;
    for _ in 0..1000 {
        let n = r.gen_range(1..200);
        let resid: Vec<f64> = (0..n).map(|_| r.gen_range(-10.0..10.0)).collect();
        let g = r.gen_range(1..20);
        let tau = r.gen_range(0.0..5.0);
        let mut ss = 0.0;
        for v in &resid {
            ss += v * v;
        }
        let want = ss / n as f64 + tau * g as f64;
        if gic(&resid, g, tau).to_bits() != want.to_bits() {
            gic_mismatch += 1;
        }
    }
    let mut min_pss = f64::INFINITY;
    for fit in random_fits() {
        for e in pss_table(&fit.model, &fit.data).unwrap() {
            min_pss = min_pss.min(e.pss);
        }
    }
    // Two identical predictors fitted as singletons give duplicate components.
    let grid = Grid::uniform(33).unwrap();
    let mut rr = rng(1_112);
    let base = random_curves(&mut rr, 40, 1, &grid);
    let x = base.predictor(0).clone();
    let curves = CurveSet::new(grid, vec![x.clone(), x]).unwrap();
    let y: Vec<f64> = (0..40).map(|i| curves.predictor(0)[(i, 10)] + 0.1 * rr.sample::<f64, _>(StandardNormal)).collect();
    let data = Dataset::new(curves, y).unwrap();
    let forest = Forest { layers: vec![GroupingStructure::singletons(2)] };
    let model = run_filtration(&forest, &PreparedData::new(&data).unwrap(), &StoppingConfig { d_max: 1, ..Default::default() }).unwrap();
    let dup = pss(&model, &data, 0, 0).unwrap().abs().max(pss(&model, &data, 0, 1).unwrap().abs());
    let pass = gic_mismatch == 0 && min_pss >= -1e-10 && dup <= 1e-8;
    verdict(
        11,
        pass,
        &format!("GIC mismatches {gic_mismatch}/1000; smallest PSS {min_pss:.2e}; duplicate-component PSS {dup:.2e}"),
    );
}
