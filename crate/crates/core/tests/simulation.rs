//! Law-of-large-numbers and known-generator checks of the statistics.

use dca_core::dca::{build_product_matrix, la_score, DynamicComponent};
use dca_core::enrichment::{between_process, GeneSet};
use dca_core::fdr::{fit_null, select_pairs_by_fdr, FitOptions};
use dca_core::lac::{lac, lac_matrix, lac_squared, LacVariant};
use dca_core::simulate::*;
use dca_core::stats::{mean, pearson, sample_sd, standardized};
use std::f64::consts::PI;

fn corr(x: &[f64], y: &[f64]) -> f64 {
    pearson(x, y).unwrap()
}

#[test]
fn dynamic_pair_regimes() {
    let n = 100_000;
    let (x, y) = gen_dynamic_pair(n, 0.8, &mut SimRng::new(1)).unwrap();
    let t = n / 3;
    assert!(corr(&x, &y).abs() < 0.02);
    assert!((corr(&x[..t], &y[..t]) - 0.8).abs() < 0.02);
    assert!((corr(&x[t..2 * t], &y[t..2 * t]) + 0.8).abs() < 0.02);
    assert!(corr(&x[2 * t..], &y[2 * t..]).abs() < 0.02);
    let band = 4.0 / (n as f64).sqrt();
    for v in [&x, &y] {
        assert!(mean(v).abs() < band);
        assert!((sample_sd(v) - 1.0).abs() < band * 1.5);
    }
}

#[test]
fn dynamic_pair_block_sizes() {
    let (x, y) = gen_dynamic_pair(10, 0.5, &mut SimRng::new(2)).unwrap();
    assert_eq!((x.len(), y.len()), (10, 10));
    // the remainder of 10 = 3 + 3 + 4 goes to the independent block
    let mut a = SimRng::new(2);
    let mut b = SimRng::new(2);
    let (x1, _) = gen_dynamic_pair(10, 0.5, &mut a).unwrap();
    let (x2, _) = gen_independent_pair(10, &mut b);
    assert_eq!(x1, x2);
}

#[test]
fn correlated_pair_moments() {
    let (x, y) = gen_correlated_pair(100_000, 0.6, &mut SimRng::new(3)).unwrap();
    assert!((corr(&x, &y) - 0.6).abs() < 0.01);
    let (x, y) = gen_correlated_pair(100_000, 1.0 - 1e-9, &mut SimRng::new(4)).unwrap();
    assert!(corr(&x, &y) > 0.999);
    let (x, y) = gen_correlated_pair(100_000, 0.0, &mut SimRng::new(4)).unwrap();
    assert!(corr(&x, &y).abs() < 0.02);
}

#[test]
fn independent_pair_moments() {
    let (x, y) = gen_independent_pair(100_000, &mut SimRng::new(5));
    assert!(corr(&x, &y).abs() < 0.02);
    for v in [&x, &y] {
        assert!(mean(v).abs() < 0.02);
        assert!((sample_sd(v) - 1.0).abs() < 0.02);
    }
    let again = gen_independent_pair(100_000, &mut SimRng::new(5));
    assert_eq!((x, y), again);
}

/// Population LAC of the three-regime mixture, from normal moments:
/// E[x²y²] = 1 + 2ρ², E|x||y| = (2/π)(√(1−ρ²) + ρ asin ρ).
fn mixture_population_lac(rho: f64, variant: LacVariant) -> f64 {
    match variant {
        LacVariant::Squared => 2.0 * rho * rho / 3.0,
        LacVariant::Absolute => {
            let e_abs = |r: f64| 2.0 / PI * ((1.0 - r * r).sqrt() + r * r.asin());
            let e = (2.0 * e_abs(rho) + e_abs(0.0)) / 3.0;
            (e - 2.0 / PI) / (1.0 - 2.0 / PI)
        }
    }
}

#[test]
fn mixture_lac_matches_monte_carlo() {
    let n = 10_000;
    for variant in [LacVariant::Squared, LacVariant::Absolute] {
        let mut rng = SimRng::new(6);
        let (x, y) = gen_scenario_pair(Scenario::Dynamic, n, 0.8, &mut rng).unwrap();
        let value = lac(&x, &y, variant).unwrap();
        assert!(value > 0.0);
        let reps: Vec<f64> = (0..200)
            .map(|r| {
                let mut rng = SimRng::for_stream(1000, 1, r);
                let (x, y) = gen_scenario_pair(Scenario::Dynamic, n, 0.8, &mut rng).unwrap();
                lac(&x, &y, variant).unwrap()
            })
            .collect();
        let (m, sd) = (mean(&reps), sample_sd(&reps));
        assert!(
            (value - m).abs() <= 3.0 * sd,
            "{variant:?}: {value} vs {m} +- {sd}"
        );
        // |r(x, y)| has mean sqrt(2 Var(r) / pi) when the population r is 0,
        // with Var(r) = E[x²y²] / n = (1 + 4ρ²/3) / n
        let bias = match variant {
            LacVariant::Squared => 0.0,
            LacVariant::Absolute => (2.0 / PI * (1.0 + 4.0 * 0.64 / 3.0) / n as f64).sqrt(),
        };
        let pop = mixture_population_lac(0.8, variant) - bias;
        assert!(
            (m - pop).abs() <= 3.0 * sd / (reps.len() as f64).sqrt() + 2e-3,
            "{variant:?}: {m} vs {pop}"
        );
    }
}

#[test]
fn correlated_lac_centers() {
    let cell = lac_distribution_cell(Scenario::Correlated, 0.8, 2000, 300, 9).unwrap();
    let sq = cell.summary(LacVariant::Squared);
    let ab = cell.summary(LacVariant::Absolute);
    assert!(sq.mean.abs() < 3.0 * sq.se() + 2e-3);
    assert!(ab.mean < -0.1);
}

#[test]
fn study_is_reproducible() {
    let design = StudyDesign {
        scenarios: vec![Scenario::Dynamic, Scenario::Independent],
        rhos: vec![0.5],
        sample_sizes: vec![30, 60],
        replicates: 40,
        seed: 12,
    };
    let a = lac_distribution_study(&design).unwrap();
    let b = lac_distribution_study(&design).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 4);
    let mut long_a = Vec::new();
    let mut long_b = Vec::new();
    write_long_tsv(&a, &mut long_a).unwrap();
    write_long_tsv(&b, &mut long_b).unwrap();
    assert_eq!(long_a, long_b);
    assert_eq!(
        String::from_utf8(long_a).unwrap().lines().count(),
        1 + 4 * 2 * 40
    );
}

fn planted(n_genes: usize, n_pairs: usize, n: usize, s: f64, seed: u64) -> PlantedDataset {
    gen_planted_dataset(&SimulationConfig {
        scenario: Scenario::PlantedFactor,
        n_samples: n,
        n_genes,
        n_pairs,
        signal_strength: s,
        seed,
        ..SimulationConfig::default()
    })
    .unwrap()
}

#[test]
fn planted_pairs_separate_from_background() {
    let d = planted(400, 100, 300, 1.5, 21);
    let table = lac_matrix(&d.matrix, LacVariant::Squared).unwrap();
    let planted: Vec<f64> = d.pairs.iter().map(|&(i, j)| table.get(i, j)).collect();
    let background: Vec<f64> = (0..100)
        .map(|k| table.get(200 + 2 * k, 201 + 2 * k))
        .collect();
    let se = (sample_sd(&planted).powi(2) / planted.len() as f64
        + sample_sd(&background).powi(2) / background.len() as f64)
        .sqrt();
    assert!(mean(&planted) - mean(&background) > 5.0 * se);
}

#[test]
fn zero_signal_plants_nothing() {
    let d = planted(400, 100, 300, 0.0, 22);
    let table = lac_matrix(&d.matrix, LacVariant::Squared).unwrap();
    let planted: Vec<f64> = d.pairs.iter().map(|&(i, j)| table.get(i, j)).collect();
    let background: Vec<f64> = (0..100)
        .map(|k| table.get(200 + 2 * k, 201 + 2 * k))
        .collect();
    let se = (sample_sd(&planted).powi(2) / 100.0 + sample_sd(&background).powi(2) / 100.0).sqrt();
    assert!((mean(&planted) - mean(&background)).abs() < 4.0 * se);
    let r: Vec<f64> = d
        .pairs
        .iter()
        .map(|&(i, j)| corr(d.matrix.row(i), d.matrix.row(j)))
        .collect();
    assert!(mean(&r).abs() < 0.02);
}

fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn planted_background_matches_independent_scenario() {
    let d = planted(2200, 100, 300, 1.5, 23);
    let sample: Vec<f64> = (0..1000)
        .map(|k| lac_squared(d.matrix.row(200 + 2 * k), d.matrix.row(201 + 2 * k)).unwrap())
        .collect();
    let reference = lac_distribution_cell(Scenario::Independent, 0.0, 300, 1000, 24).unwrap();
    let ks = ks_statistic(&sample, &reference.squared);
    let critical = 1.628 * (2.0f64 / 1000.0).sqrt();
    assert!(ks < critical, "KS {ks} >= {critical}");
}

#[test]
fn recovery_of_unrelated_signal_is_small() {
    let mut rng = SimRng::new(30);
    let truth = rng.normals(1000);
    let below = (0..200)
        .filter(|_| recovery_score(&rng.normals(1000), &truth).unwrap() < 0.1)
        .count();
    assert!(below as f64 / 200.0 >= 0.99);
}

#[test]
fn null_la_score_is_small() {
    let mut rng = SimRng::new(31);
    let x = standardized(&rng.normals(10_000)).unwrap();
    let y = standardized(&rng.normals(10_000)).unwrap();
    let z = rng.normals(10_000);
    assert!(la_score(&x, &y, &z).unwrap().abs() < 0.05);
}

#[test]
fn fdr_fit_on_standard_normal_scores() {
    let scores = SimRng::new(40).normals(10_000);
    let m = fit_null(&scores, &FitOptions::default()).unwrap();
    assert!(m.mode.abs() <= 0.05, "mode {}", m.mode);
    assert!((0.9..=1.1).contains(&m.sigma_left), "{}", m.sigma_left);
    assert!((0.9..=1.1).contains(&m.sigma_right), "{}", m.sigma_right);
    assert!((0.9..=1.0).contains(&m.pi0), "{}", m.pi0);
    let called = scores.iter().filter(|&&s| m.local_fdr(s) < 0.01).count();
    assert!(called as f64 <= 0.005 * scores.len() as f64);
    assert!((m.local_fdr(m.mode) - 1.0).abs() < 1e-12);
}

fn split_normal_draws(n: usize, left: f64, right: f64, seed: u64) -> Vec<f64> {
    let mut rng = SimRng::new(seed);
    let p_left = left / (left + right);
    (0..n)
        .map(|_| {
            let side = rng.uniform();
            let z = rng.normal_pair().0.abs();
            if side < p_left {
                -left * z
            } else {
                right * z
            }
        })
        .collect()
}

#[test]
fn fdr_fit_recovers_split_normal_asymmetry() {
    let scores = split_normal_draws(20_000, 0.5, 1.5, 41);
    let m = fit_null(&scores, &FitOptions::default()).unwrap();
    let ratio = m.sigma_right / m.sigma_left;
    assert!(
        (ratio - 3.0).abs() <= 0.45,
        "sigma ratio {ratio} (mode {}, left {}, right {}) is not within 15% of 3",
        m.mode,
        m.sigma_left,
        m.sigma_right
    );
}

#[test]
fn heavy_tail_scores_get_low_fdr() {
    let mut rng = SimRng::new(42);
    let mut scores = rng.normals(9_500);
    scores.extend(rng.normals(500).into_iter().map(|v| 6.0 + v));
    let m = fit_null(&scores, &FitOptions::default()).unwrap();
    assert!(m.local_fdr(7.0) < 0.01);
    assert!(m.pi0 <= 1.0);
}

#[test]
fn planted_la_pairs_dominate_the_fdr_selection() {
    // 50 of 1000 pairs have correlation tanh(2 z) with the scouting signal
    let n = 300;
    let mut rng = SimRng::new(43);
    let z = rng.normals(n);
    let zt = standardized(&z).unwrap();
    let mut rows = Vec::new();
    for k in 0..1000 {
        let (mut x, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for &zi in &zt {
            let r = if k < 50 { (2.0 * zi).tanh() } else { 0.0 };
            let (e1, e2) = rng.normal_pair();
            x.push(e1);
            y.push(r * e1 + (1.0 - r * r).sqrt() * e2);
        }
        rows.push(x);
        rows.push(y);
    }
    let m = dca_core::preprocess::standardize(
        &dca_core::preprocess::ExpressionMatrix::from_rows(&rows).unwrap(),
    )
    .unwrap();
    let pairs: Vec<(usize, usize)> = (0..1000).map(|k| (2 * k, 2 * k + 1)).collect();
    let b = build_product_matrix(&m, &pairs).unwrap();
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let component = DynamicComponent {
        scores: z.iter().map(|v| v / norm).collect(),
        eigenvalue: 0.0,
        rank: 1,
        rotated: false,
    };
    let sel = select_pairs_by_fdr(&b, &component, 0.01, &FitOptions::default()).unwrap();
    assert!(!sel.selected.is_empty());
    let hits = sel.selected.iter().filter(|p| p.i < 100).count();
    assert!(
        hits as f64 / sel.selected.len() as f64 >= 0.8,
        "{hits} of {}",
        sel.selected.len()
    );
    for w in sel.selected.windows(2) {
        assert!(w[0].fdr <= w[1].fdr);
    }
}

#[test]
fn random_pairs_calibrate_between_process() {
    let n_genes = 60usize;
    let a = GeneSet {
        name: "A".into(),
        description: String::new(),
        genes: (0..15).collect(),
    };
    let b = GeneSet {
        name: "B".into(),
        description: String::new(),
        genes: (10..40).collect(),
    };
    let all: Vec<(usize, usize)> = (0..n_genes)
        .flat_map(|i| (i + 1..n_genes).map(move |j| (i, j)))
        .collect();
    let m = 200;
    let mut observed = Vec::new();
    let mut expected = 0.0;
    for r in 0..1000u64 {
        let mut rng = SimRng::for_stream(50, 0, r);
        let pairs: Vec<(usize, usize)> = (0..m)
            .map(|_| all[((rng.uniform() * all.len() as f64) as usize).min(all.len() - 1)])
            .collect();
        let res = between_process(&pairs, &a, &b, n_genes).unwrap();
        observed.push(res.observed as f64);
        expected = res.expected;
    }
    // A' has 10 genes, B' has 25: q = 250 / 1770
    assert!((expected - 200.0 * 250.0 / 1770.0).abs() < 1e-12);
    let se = sample_sd(&observed) / (observed.len() as f64).sqrt();
    assert!((mean(&observed) - expected).abs() <= 3.0 * se);
}
