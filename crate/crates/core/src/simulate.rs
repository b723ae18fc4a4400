//! Seeded generators and experiment drivers.
//!
//! Every random stream is a ChaCha8 generator keyed by a 64-bit seed and a
//! cell key, with the replicate index selecting the stream
//! (`set_stream(replicate)`). Replicates are therefore independent of the
//! order and thread on which they run.
//!
//! Normal variates use Box–Muller on exactly two uniforms per pair.

use std::io::Write;

use ndarray::Array2;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dca::{build_product_matrix, extract_components, ExtractOptions};
use crate::error::{DcaError, Result};
use crate::format::fmt_num;
use crate::lac::{lac, lac_matrix, select_top_pairs, LacVariant, DEFAULT_TOP_FRACTION};
use crate::preprocess::{standardize, ExpressionMatrix};
use crate::stats;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Deterministic random source.
#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self::for_stream(seed, 0, 0)
    }

    /// Stream `stream` of the generator keyed by `(seed, cell)`.
    pub fn for_stream(seed: u64, cell: u64, stream: u64) -> Self {
        let key = splitmix64(seed ^ splitmix64(cell));
        let mut inner = ChaCha8Rng::seed_from_u64(key);
        inner.set_stream(stream);
        Self { inner }
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
    }

    /// Two independent standard normals.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        (r * c, r * s)
    }

    /// `n` standard normals, consuming `2 * ceil(n / 2)` uniforms.
    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(n + 1);
        while out.len() < n {
            let (a, b) = self.normal_pair();
            out.push(a);
            out.push(b);
        }
        out.truncate(n);
        out
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(DcaError::InvalidParameter(format!(
            "rho must lie in [0, 1), got {rho}"
        )));
    }
    Ok(())
}

fn correlated_point(rng: &mut SimRng, rho: f64) -> (f64, f64) {
    let (e1, e2) = rng.normal_pair();
    (e1, rho * e1 + (1.0 - rho * rho).sqrt() * e2)
}

/// Three-regime mixture: the first `n / 3` points have correlation `rho`, the
/// next `n / 3` have `-rho`, the remainder are independent.
pub fn gen_dynamic_pair(n: usize, rho: f64, rng: &mut SimRng) -> Result<(Vec<f64>, Vec<f64>)> {
    check_rho(rho)?;
    let third = n / 3;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let r = if i < third {
            rho
        } else if i < 2 * third {
            -rho
        } else {
            0.0
        };
        let (a, b) = correlated_point(rng, r);
        x.push(a);
        y.push(b);
    }
    Ok((x, y))
}

/// Bivariate normal with correlation `rho`.
pub fn gen_correlated_pair(n: usize, rho: f64, rng: &mut SimRng) -> Result<(Vec<f64>, Vec<f64>)> {
    check_rho(rho)?;
    Ok((0..n).map(|_| correlated_point(rng, rho)).unzip())
}

pub fn gen_independent_pair(n: usize, rng: &mut SimRng) -> (Vec<f64>, Vec<f64>) {
    (0..n).map(|_| rng.normal_pair()).unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Dynamic,
    Correlated,
    Independent,
    PlantedFactor,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Dynamic => "dynamic",
            Scenario::Correlated => "correlated",
            Scenario::Independent => "independent",
            Scenario::PlantedFactor => "planted_factor",
        }
    }

    fn key(self) -> u64 {
        match self {
            Scenario::Dynamic => 1,
            Scenario::Correlated => 2,
            Scenario::Independent => 3,
            Scenario::PlantedFactor => 4,
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = DcaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynamic" => Ok(Scenario::Dynamic),
            "correlated" => Ok(Scenario::Correlated),
            "independent" => Ok(Scenario::Independent),
            "planted_factor" | "planted" => Ok(Scenario::PlantedFactor),
            other => Err(DcaError::InvalidParameter(format!(
                "unknown scenario '{other}'"
            ))),
        }
    }
}

pub const MIN_SAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub scenario: Scenario,
    pub rho: f64,
    pub n_samples: usize,
    pub n_replicates: usize,
    /// Planted factor only.
    pub n_genes: usize,
    /// Planted factor only.
    pub n_pairs: usize,
    /// Planted factor only.
    pub signal_strength: f64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Dynamic,
            rho: 0.8,
            n_samples: 200,
            n_replicates: 1000,
            n_genes: 400,
            n_pairs: 100,
            signal_strength: 1.5,
            seed: 1,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        check_rho(self.rho)?;
        if self.n_samples < MIN_SAMPLES {
            return Err(DcaError::InvalidParameter(format!(
                "n_samples must be at least {MIN_SAMPLES}, got {}",
                self.n_samples
            )));
        }
        if self.n_replicates == 0 {
            return Err(DcaError::InvalidParameter(
                "n_replicates must be positive".into(),
            ));
        }
        if self.scenario == Scenario::PlantedFactor {
            if self.n_genes < 2 || !self.n_genes.is_multiple_of(2) {
                return Err(DcaError::InvalidParameter(format!(
                    "n_genes must be even and at least 2, got {}",
                    self.n_genes
                )));
            }
            if self.n_pairs == 0 || self.n_pairs > self.n_genes / 2 {
                return Err(DcaError::InvalidParameter(format!(
                    "n_pairs must lie in [1, {}], got {}",
                    self.n_genes / 2,
                    self.n_pairs
                )));
            }
            if !self.signal_strength.is_finite() {
                return Err(DcaError::InvalidParameter(
                    "signal_strength must be finite".into(),
                ));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// LAC distribution study

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q95: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q = |p| stats::quantile_sorted(&sorted, p);
        Self {
            count: values.len(),
            mean: stats::mean(values),
            sd: if values.len() > 1 {
                stats::sample_sd(values)
            } else {
                0.0
            },
            q05: q(0.05),
            q25: q(0.25),
            median: q(0.5),
            q75: q(0.75),
            q95: q(0.95),
        }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        self.sd / (self.count as f64).sqrt()
    }
}

/// One (scenario, rho, n) cell; both variants come from the same samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub scenario: Scenario,
    pub rho: f64,
    pub n: usize,
    pub squared: Vec<f64>,
    pub absolute: Vec<f64>,
}

impl CellResult {
    pub fn values(&self, variant: LacVariant) -> &[f64] {
        match variant {
            LacVariant::Squared => &self.squared,
            LacVariant::Absolute => &self.absolute,
        }
    }

    pub fn summary(&self, variant: LacVariant) -> Summary {
        Summary::of(self.values(variant))
    }
}

fn cell_key(scenario: Scenario, rho: f64, n: usize) -> u64 {
    splitmix64(scenario.key() ^ splitmix64(rho.to_bits() ^ splitmix64(n as u64)))
}

/// A sample pair for `scenario`, standardized.
pub fn gen_scenario_pair(
    scenario: Scenario,
    n: usize,
    rho: f64,
    rng: &mut SimRng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (x, y) = match scenario {
        Scenario::Dynamic => gen_dynamic_pair(n, rho, rng)?,
        Scenario::Correlated => gen_correlated_pair(n, rho, rng)?,
        Scenario::Independent => gen_independent_pair(n, rng),
        Scenario::PlantedFactor => {
            return Err(DcaError::InvalidParameter(
                "planted_factor is not a pair scenario".into(),
            ))
        }
    };
    let x =
        stats::standardized(&x).ok_or_else(|| DcaError::Degenerate("constant sample".into()))?;
    let y =
        stats::standardized(&y).ok_or_else(|| DcaError::Degenerate("constant sample".into()))?;
    Ok((x, y))
}

/// `replicates` LAC values of both variants for one cell.
pub fn lac_distribution_cell(
    scenario: Scenario,
    rho: f64,
    n: usize,
    replicates: usize,
    seed: u64,
) -> Result<CellResult> {
    let key = cell_key(scenario, rho, n);
    let values: Vec<(f64, f64)> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = SimRng::for_stream(seed, key, r);
            let (x, y) = gen_scenario_pair(scenario, n, rho, &mut rng)?;
            Ok((
                lac(&x, &y, LacVariant::Squared)?,
                lac(&x, &y, LacVariant::Absolute)?,
            ))
        })
        .collect::<Result<_>>()?;
    let (squared, absolute) = values.into_iter().unzip();
    Ok(CellResult {
        scenario,
        rho,
        n,
        squared,
        absolute,
    })
}

/// Grid of pair scenarios. Independent cells ignore `rhos` and run at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDesign {
    pub scenarios: Vec<Scenario>,
    pub rhos: Vec<f64>,
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
}

impl StudyDesign {
    /// Three scenarios, rho in {0.4, 0.6, 0.8}, n in {100, 200, 500}.
    pub fn standard_grid(replicates: usize, seed: u64) -> Self {
        Self {
            scenarios: vec![
                Scenario::Dynamic,
                Scenario::Correlated,
                Scenario::Independent,
            ],
            rhos: vec![0.4, 0.6, 0.8],
            sample_sizes: vec![100, 200, 500],
            replicates,
            seed,
        }
    }

    pub fn cells(&self) -> Vec<(Scenario, f64, usize)> {
        let mut cells = Vec::new();
        for &scenario in &self.scenarios {
            let rhos: &[f64] = if scenario == Scenario::Independent {
                &[0.0]
            } else {
                &self.rhos
            };
            for &rho in rhos {
                for &n in &self.sample_sizes {
                    cells.push((scenario, rho, n));
                }
            }
        }
        cells
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(DcaError::InvalidParameter(
                "replicates must be positive".into(),
            ));
        }
        if self.scenarios.contains(&Scenario::PlantedFactor) {
            return Err(DcaError::InvalidParameter(
                "planted_factor is not a LAC distribution scenario".into(),
            ));
        }
        for &rho in &self.rhos {
            check_rho(rho)?;
        }
        if let Some(&n) = self.sample_sizes.iter().find(|&&n| n < MIN_SAMPLES) {
            return Err(DcaError::InvalidParameter(format!(
                "sample size must be at least {MIN_SAMPLES}, got {n}"
            )));
        }
        Ok(())
    }
}

pub fn lac_distribution_study(design: &StudyDesign) -> Result<Vec<CellResult>> {
    design.validate()?;
    design
        .cells()
        .into_iter()
        .map(|(s, rho, n)| lac_distribution_cell(s, rho, n, design.replicates, design.seed))
        .collect()
}

const VARIANTS: [LacVariant; 2] = [LacVariant::Squared, LacVariant::Absolute];

/// Columns `scenario variant rho n replicate lac`.
pub fn write_long_tsv<W: Write>(cells: &[CellResult], mut out: W) -> std::io::Result<()> {
    writeln!(out, "scenario\tvariant\trho\tn\treplicate\tlac")?;
    for c in cells {
        for v in VARIANTS {
            for (r, value) in c.values(v).iter().enumerate() {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    c.scenario.name(),
                    v.name(),
                    fmt_num(c.rho),
                    c.n,
                    r,
                    fmt_num(*value)
                )?;
            }
        }
    }
    out.flush()
}

pub fn write_summary_tsv<W: Write>(cells: &[CellResult], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "scenario\tvariant\trho\tn\treplicates\tmean\tsd\tq05\tq25\tmedian\tq75\tq95"
    )?;
    for c in cells {
        for v in VARIANTS {
            let s = c.summary(v);
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                c.scenario.name(),
                v.name(),
                fmt_num(c.rho),
                c.n,
                s.count,
                fmt_num(s.mean),
                fmt_num(s.sd),
                fmt_num(s.q05),
                fmt_num(s.q25),
                fmt_num(s.median),
                fmt_num(s.q75),
                fmt_num(s.q95)
            )?;
        }
    }
    out.flush()
}

// ---------------------------------------------------------------------------
// planted latent factor

#[derive(Debug, Clone)]
pub struct PlantedDataset {
    /// Standardized genes `g0001..`, samples `s001..`.
    pub matrix: ExpressionMatrix,
    /// The latent signal as drawn.
    pub z: Vec<f64>,
    /// Planted pairs `(2k, 2k + 1)`.
    pub pairs: Vec<(usize, usize)>,
}

fn id_width(count: usize, min: usize) -> usize {
    count.to_string().len().max(min)
}

/// Planted pair `k` has per-sample correlation `tanh(s * z̃_i)` where `z̃` is
/// the standardized latent signal; the other genes are independent normals.
pub fn gen_planted_dataset(config: &SimulationConfig) -> Result<PlantedDataset> {
    let config = SimulationConfig {
        scenario: Scenario::PlantedFactor,
        ..config.clone()
    };
    config.validate()?;
    let n = config.n_samples;
    let p = config.n_genes;
    let mut rng = SimRng::for_stream(config.seed, Scenario::PlantedFactor.key(), 0);

    let z = rng.normals(n);
    let zt = stats::standardized(&z)
        .ok_or_else(|| DcaError::Degenerate("constant latent signal".into()))?;
    let rhos: Vec<f64> = zt
        .iter()
        .map(|&v| (config.signal_strength * v).tanh())
        .collect();

    let mut values = Array2::<f64>::zeros((p, n));
    for k in 0..config.n_pairs {
        for (i, &r) in rhos.iter().enumerate() {
            let (e1, e2) = rng.normal_pair();
            values[[2 * k, i]] = e1;
            values[[2 * k + 1, i]] = r * e1 + (1.0 - r * r).sqrt() * e2;
        }
    }
    for g in 2 * config.n_pairs..p {
        let row = rng.normals(n);
        values
            .row_mut(g)
            .iter_mut()
            .zip(row)
            .for_each(|(v, x)| *v = x);
    }

    let gw = id_width(p, 4);
    let sw = id_width(n, 3);
    let genes = (1..=p).map(|i| format!("g{i:0gw$}")).collect();
    let samples = (1..=n).map(|i| format!("s{i:0sw$}")).collect();
    let matrix = standardize(&ExpressionMatrix::new(genes, samples, values)?)?;
    Ok(PlantedDataset {
        matrix,
        z,
        pairs: (0..config.n_pairs).map(|k| (2 * k, 2 * k + 1)).collect(),
    })
}

/// `|pearson(z_est, z_true)|`, so component sign does not matter.
pub fn recovery_score(z_est: &[f64], z_true: &[f64]) -> Result<f64> {
    Ok(stats::pearson(z_est, z_true)?.abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryOptions {
    pub variant: LacVariant,
    pub top_fraction: f64,
    pub extract: ExtractOptions,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            variant: LacVariant::Squared,
            top_fraction: DEFAULT_TOP_FRACTION,
            extract: ExtractOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryOutcome {
    pub seed: u64,
    /// Recovery of the planted signal by the first component.
    pub score: f64,
    /// Planted pairs among the top-scoring pairs.
    pub planted_selected: usize,
    pub selected: usize,
}

/// LAC screen, product matrix and component extraction on one planted dataset.
pub fn planted_recovery(
    config: &SimulationConfig,
    options: &RecoveryOptions,
) -> Result<RecoveryOutcome> {
    let data = gen_planted_dataset(config)?;
    let table = lac_matrix(&data.matrix, options.variant)?;
    let top = select_top_pairs(&table, options.top_fraction)?;
    let pairs = top.index_pairs();
    let planted_selected = pairs
        .iter()
        .filter(|&&(i, j)| j == i + 1 && i % 2 == 0 && j < 2 * config.n_pairs)
        .count();
    let b = build_product_matrix(&data.matrix, &pairs)?;
    let extraction = extract_components(&b, &options.extract)?;
    let score = recovery_score(&extraction.components[0].scores, &data.z)?;
    Ok(RecoveryOutcome {
        seed: config.seed,
        score,
        planted_selected,
        selected: pairs.len(),
    })
}

/// Runs [`planted_recovery`] for seeds `seed, seed + 1, ...`, one per replicate.
pub fn planted_recovery_study(
    config: &SimulationConfig,
    options: &RecoveryOptions,
) -> Result<Vec<RecoveryOutcome>> {
    config.validate()?;
    (0..config.n_replicates as u64)
        .map(|r| {
            let c = SimulationConfig {
                seed: config.seed.wrapping_add(r),
                ..config.clone()
            };
            planted_recovery(&c, options)
        })
        .collect()
}

pub fn write_recovery_tsv<W: Write>(
    outcomes: &[RecoveryOutcome],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "seed\trecovery\tplanted_selected\tselected")?;
    for o in outcomes {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            o.seed,
            fmt_num(o.score),
            o.planted_selected,
            o.selected
        )?;
    }
    out.flush()
}
