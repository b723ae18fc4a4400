//! Gene-set enrichment of selected gene pairs.
//!
//! Selected pairs are compared against a null in which every unordered pair
//! of universe genes is equally likely. Within-set enrichment counts pairs
//! with both genes in one set; between-set enrichment counts pairs spanning
//! two sets after removing their shared genes. Both use an exact upper
//! binomial tail.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{DcaError, Result};
use crate::format::fmt_num;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneSet {
    pub name: String,
    pub description: String,
    /// Universe indices, ascending and unique.
    pub genes: Vec<usize>,
}

/// A raw set as read from a GMT line.
#[derive(Debug, Clone, PartialEq)]
pub struct GmtRecord {
    pub name: String,
    pub description: String,
    pub genes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct GeneSetCollection {
    sets: Vec<GeneSet>,
    universe: Vec<String>,
    index: HashMap<String, usize>,
}

impl GeneSetCollection {
    pub fn sets(&self) -> &[GeneSet] {
        &self.sets
    }

    pub fn universe(&self) -> &[String] {
        &self.universe
    }

    pub fn universe_size(&self) -> usize {
        self.universe.len()
    }

    pub fn gene_index(&self, gene: &str) -> Option<usize> {
        self.index.get(gene).copied()
    }

    /// Builds a collection from parsed records: each set is intersected with
    /// `matrix_genes` and kept when its size lies in `[min_size, max_size]`.
    /// The universe is the union of the surviving sets.
    pub fn from_records(
        records: Vec<GmtRecord>,
        min_size: usize,
        max_size: usize,
        matrix_genes: &[String],
    ) -> Result<Self> {
        if min_size > max_size {
            return Err(DcaError::InvalidParameter(format!(
                "min set size {min_size} exceeds max set size {max_size}"
            )));
        }
        let present: HashSet<&str> = matrix_genes.iter().map(String::as_str).collect();
        let mut kept: Vec<(GmtRecord, Vec<String>)> = Vec::new();
        for rec in records {
            let mut genes: Vec<String> = rec
                .genes
                .iter()
                .filter(|g| present.contains(g.as_str()))
                .cloned()
                .collect();
            genes.sort();
            genes.dedup();
            if !genes.is_empty() && (min_size..=max_size).contains(&genes.len()) {
                kept.push((rec, genes));
            }
        }
        if kept.is_empty() {
            return Err(DcaError::EmptyResult(format!(
                "no gene set has between {min_size} and {max_size} genes in the matrix"
            )));
        }
        let mut universe: Vec<String> = kept.iter().flat_map(|(_, g)| g.iter().cloned()).collect();
        universe.sort();
        universe.dedup();
        let index: HashMap<String, usize> = universe
            .iter()
            .enumerate()
            .map(|(k, g)| (g.clone(), k))
            .collect();
        let sets = kept
            .into_iter()
            .map(|(rec, genes)| GeneSet {
                name: rec.name,
                description: rec.description,
                genes: genes.iter().map(|g| index[g]).collect(),
            })
            .collect();
        Ok(Self {
            sets,
            universe,
            index,
        })
    }

    /// Maps gene-name pairs into universe indices, dropping pairs that touch
    /// a gene outside the universe.
    pub fn restrict_pairs<'a, I>(&self, pairs: I) -> Vec<(usize, usize)>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        pairs
            .into_iter()
            .filter_map(|(a, b)| Some((self.gene_index(a)?, self.gene_index(b)?)))
            .filter(|(a, b)| a != b)
            .collect()
    }
}

/// Parses GMT: `name <tab> description <tab> gene ...` per line.
pub fn read_gmt<R: BufRead>(reader: R) -> Result<Vec<GmtRecord>> {
    let mut records = Vec::new();
    let mut names = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DcaError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 {
            return Err(DcaError::Parse {
                line: line_no,
                message: "GMT line needs a name and a description".into(),
            });
        }
        let name = fields[0].trim().to_string();
        if name.is_empty() {
            return Err(DcaError::Parse {
                line: line_no,
                message: "empty gene set name".into(),
            });
        }
        if !names.insert(name.clone()) {
            return Err(DcaError::Parse {
                line: line_no,
                message: format!("duplicate gene set name '{name}'"),
            });
        }
        records.push(GmtRecord {
            name,
            description: fields[1].trim().to_string(),
            genes: fields[2..]
                .iter()
                .map(|g| g.trim())
                .filter(|g| !g.is_empty())
                .map(String::from)
                .collect(),
        });
    }
    Ok(records)
}

pub fn load_gene_sets(
    path: impl AsRef<Path>,
    min_size: usize,
    max_size: usize,
    matrix_genes: &[String],
) -> Result<GeneSetCollection> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DcaError::io(path, e))?;
    let records = read_gmt(BufReader::new(file))?;
    GeneSetCollection::from_records(records, min_size, max_size, matrix_genes)
}

/// Gene-id pairs from the first two columns of a tab-separated file with a
/// header row.
pub fn read_gene_pairs<R: BufRead>(reader: R) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| DcaError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if idx == 0 || line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next()) {
            (Some(a), Some(b)) if !a.trim().is_empty() && !b.trim().is_empty() => {
                pairs.push((a.trim().to_string(), b.trim().to_string()))
            }
            _ => {
                return Err(DcaError::Parse {
                    line: line_no,
                    message: "expected two gene ids".into(),
                })
            }
        }
    }
    Ok(pairs)
}

pub fn load_gene_pairs(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| DcaError::io(path, e))?;
    read_gene_pairs(BufReader::new(file))
}

// ---------------------------------------------------------------------------
// exact binomial tail

/// `ln Γ(n + 1) - (n + 1/2) ln n + n - ln √(2π)` for integer `n`.
fn stirling_error(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n == 0 {
        return 0.0;
    }
    if n <= 15 {
        let factorial: f64 = (1..=n).map(|k| k as f64).product();
        let x = n as f64;
        return factorial.ln() - (x + 0.5) * x.ln() + x - 0.5 * (2.0 * std::f64::consts::PI).ln();
    }
    let x = n as f64;
    let nn = x * x;
    if n > 500 {
        (S0 - S1 / nn) / x
    } else if n > 80 {
        (S0 - (S1 - S2 / nn) / nn) / x
    } else if n > 35 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / x
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / x
    }
}

/// Deviance term `x ln(x / np) + np - x`, evaluated stably near `x = np`.
fn deviance(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// Binomial probability mass by the saddle-point expansion, accurate to a few
/// ulps without evaluating large log-gamma values.
pub fn binomial_pmf(k: u64, trials: u64, q: f64) -> f64 {
    if k > trials {
        return 0.0;
    }
    let p = 1.0 - q;
    if q == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 0.0 {
        return if k == trials { 1.0 } else { 0.0 };
    }
    let n = trials as f64;
    if k == 0 {
        let lc = if q < 0.1 {
            -deviance(n, n * p) - n * q
        } else {
            n * p.ln()
        };
        return lc.exp();
    }
    if k == trials {
        let lc = if p < 0.1 {
            -deviance(n, n * q) - n * p
        } else {
            n * q.ln()
        };
        return lc.exp();
    }
    let x = k as f64;
    let lc = stirling_error(trials)
        - stirling_error(k)
        - stirling_error(trials - k)
        - deviance(x, n * q)
        - deviance(n - x, n * p);
    let lf = (2.0 * std::f64::consts::PI).ln() + x.ln() + (-x / n).ln_1p();
    (lc - 0.5 * lf).exp()
}

/// `P(X >= k)` for `X ~ Binomial(trials, q)`, summed term by term.
pub fn binomial_upper_tail(k: u64, trials: u64, q: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > trials || q <= 0.0 {
        return 0.0;
    }
    if q >= 1.0 {
        return 1.0;
    }
    let ratio = q / (1.0 - q);
    let mode = ((trials + 1) as f64 * q).floor() as u64;
    if k > mode {
        let mut term = binomial_pmf(k, trials, q);
        let mut sum = term;
        let mut j = k;
        while j < trials {
            term *= (trials - j) as f64 / (j + 1) as f64 * ratio;
            sum += term;
            j += 1;
            if term <= sum * 1e-17 {
                break;
            }
        }
        sum.min(1.0)
    } else {
        // 1 - P(X <= k - 1), summing downward from k - 1
        let mut j = k - 1;
        let mut term = binomial_pmf(j, trials, q);
        let mut lower = term;
        while j > 0 {
            term *= j as f64 / (trials - j + 1) as f64 / ratio;
            lower += term;
            j -= 1;
            if term <= lower * 1e-17 {
                break;
            }
        }
        (1.0 - lower).clamp(0.0, 1.0)
    }
}

// ---------------------------------------------------------------------------
// counting

#[derive(Debug, Clone, PartialEq)]
pub enum Subject {
    Set(String),
    SetPair(String, String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichmentResult {
    pub subject: Subject,
    pub observed: u64,
    pub expected: f64,
    pub fold_change: f64,
    pub p_value: f64,
    /// Set too small (or fully overlapping) to be tested.
    pub degenerate: bool,
}

fn choose2(n: usize) -> f64 {
    n as f64 * (n as f64 - 1.0) / 2.0
}

fn score(subject: Subject, observed: u64, q: f64, total_pairs: usize) -> EnrichmentResult {
    let expected = total_pairs as f64 * q;
    let fold_change = if expected > 0.0 {
        observed as f64 / expected
    } else {
        0.0
    };
    EnrichmentResult {
        subject,
        observed,
        expected,
        fold_change,
        p_value: binomial_upper_tail(observed, total_pairs as u64, q),
        degenerate: false,
    }
}

fn degenerate(subject: Subject) -> EnrichmentResult {
    EnrichmentResult {
        subject,
        observed: 0,
        expected: 0.0,
        fold_change: 0.0,
        p_value: 1.0,
        degenerate: true,
    }
}

fn membership(genes: &[usize], universe_size: usize) -> Vec<bool> {
    let mut mask = vec![false; universe_size];
    for &g in genes {
        mask[g] = true;
    }
    mask
}

fn check_universe(pairs: &[(usize, usize)], universe_size: usize) -> Result<()> {
    if universe_size < 2 {
        return Err(DcaError::Validation(
            "universe needs at least 2 genes".into(),
        ));
    }
    if let Some(&(a, b)) = pairs
        .iter()
        .find(|&&(a, b)| a >= universe_size || b >= universe_size)
    {
        return Err(DcaError::InvalidParameter(format!(
            "pair ({a}, {b}) is outside a universe of {universe_size} genes"
        )));
    }
    Ok(())
}

/// Pairs with both genes in `set`, against `q = C(s, 2) / C(N, 2)`.
/// `pairs` must already be restricted to the universe; `M = pairs.len()`.
pub fn within_process(
    pairs: &[(usize, usize)],
    set: &GeneSet,
    universe_size: usize,
) -> Result<EnrichmentResult> {
    check_universe(pairs, universe_size)?;
    let subject = Subject::Set(set.name.clone());
    if set.genes.len() < 2 {
        return Ok(degenerate(subject));
    }
    let mask = membership(&set.genes, universe_size);
    let observed = pairs.iter().filter(|&&(a, b)| mask[a] && mask[b]).count() as u64;
    let q = choose2(set.genes.len()) / choose2(universe_size);
    Ok(score(subject, observed, q, pairs.len()))
}

fn set_difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    let other: HashSet<usize> = b.iter().copied().collect();
    a.iter().copied().filter(|g| !other.contains(g)).collect()
}

/// Pairs spanning `A \ B` and `B \ A`, against `q = |A'| |B'| / C(N, 2)`.
pub fn between_process(
    pairs: &[(usize, usize)],
    set_a: &GeneSet,
    set_b: &GeneSet,
    universe_size: usize,
) -> Result<EnrichmentResult> {
    check_universe(pairs, universe_size)?;
    let subject = Subject::SetPair(set_a.name.clone(), set_b.name.clone());
    let only_a = set_difference(&set_a.genes, &set_b.genes);
    let only_b = set_difference(&set_b.genes, &set_a.genes);
    if only_a.is_empty() || only_b.is_empty() {
        return Ok(degenerate(subject));
    }
    let in_a = membership(&only_a, universe_size);
    let in_b = membership(&only_b, universe_size);
    let observed = pairs
        .iter()
        .filter(|&&(x, y)| (in_a[x] && in_b[y]) || (in_b[x] && in_a[y]))
        .count() as u64;
    let q = only_a.len() as f64 * only_b.len() as f64 / choose2(universe_size);
    Ok(score(subject, observed, q, pairs.len()))
}

/// Within-set results for every set of the collection, in collection order.
pub fn all_within(
    collection: &GeneSetCollection,
    pairs: &[(usize, usize)],
) -> Result<Vec<EnrichmentResult>> {
    collection
        .sets()
        .par_iter()
        .map(|s| within_process(pairs, s, collection.universe_size()))
        .collect()
}

/// Between-set results for every set pair `a < b` in collection order,
/// degenerate pairs included. Counting goes pair by pair over set memberships,
/// which equals calling [`between_process`] on each set pair.
pub fn all_between(
    collection: &GeneSetCollection,
    pairs: &[(usize, usize)],
) -> Result<Vec<EnrichmentResult>> {
    let n_universe = collection.universe_size();
    check_universe(pairs, n_universe)?;
    let sets = collection.sets();
    let n_sets = sets.len();
    let mut memberships: Vec<Vec<usize>> = vec![Vec::new(); n_universe];
    for (s, set) in sets.iter().enumerate() {
        for &g in &set.genes {
            memberships[g].push(s);
        }
    }
    let is_member = |g: usize, s: usize| memberships[g].binary_search(&s).is_ok();

    // counts[a * n + b] for a < b
    let counts: Vec<u64> = pairs
        .par_chunks(4096)
        .map(|chunk| {
            let mut local: HashMap<(usize, usize), u64> = HashMap::new();
            for &(x, y) in chunk {
                for &sa in &memberships[x] {
                    if is_member(y, sa) {
                        continue;
                    }
                    for &sb in &memberships[y] {
                        if sa == sb || is_member(x, sb) {
                            continue;
                        }
                        let key = if sa < sb { (sa, sb) } else { (sb, sa) };
                        *local.entry(key).or_default() += 1;
                    }
                }
            }
            local
        })
        .reduce(HashMap::new, |mut acc, other| {
            for (k, v) in other {
                *acc.entry(k).or_default() += v;
            }
            acc
        })
        .into_iter()
        .fold(vec![0u64; n_sets * n_sets], |mut flat, ((a, b), v)| {
            flat[a * n_sets + b] = v;
            flat
        });

    let total = pairs.len();
    let all_pairs = choose2(n_universe);
    let results = (0..n_sets)
        .into_par_iter()
        .flat_map_iter(|a| {
            let counts = &counts;
            (a + 1..n_sets).map(move |b| {
                let subject = Subject::SetPair(sets[a].name.clone(), sets[b].name.clone());
                let only_a = set_difference(&sets[a].genes, &sets[b].genes).len();
                let only_b = set_difference(&sets[b].genes, &sets[a].genes).len();
                if only_a == 0 || only_b == 0 {
                    return degenerate(subject);
                }
                let q = only_a as f64 * only_b as f64 / all_pairs;
                score(subject, counts[a * n_sets + b], q, total)
            })
        })
        .collect();
    Ok(results)
}

// ---------------------------------------------------------------------------
// network export

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkEdge {
    pub source: String,
    pub target: String,
    pub observed: u64,
    pub expected: f64,
    pub fold_change: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProcessNetwork {
    /// Every qualifying edge.
    pub edges: Vec<NetworkEdge>,
    /// Node degree over the full edge list.
    pub degrees: BTreeMap<String, usize>,
    /// Edges whose endpoints both reach `min_degree`.
    pub view: Vec<NetworkEdge>,
}

pub const SIF_INTERACTION: &str = "dyncorr";
pub const DEFAULT_P_THRESHOLD: f64 = 0.001;
pub const DEFAULT_FC_THRESHOLD: f64 = 2.0;

/// Significant set pairs: `p < p_threshold` and `fold_change >= fc_threshold`.
pub fn process_pair_network(
    results: &[EnrichmentResult],
    p_threshold: f64,
    fc_threshold: f64,
    min_degree: usize,
) -> ProcessNetwork {
    let edges: Vec<NetworkEdge> = results
        .iter()
        .filter(|r| !r.degenerate && r.p_value < p_threshold && r.fold_change >= fc_threshold)
        .filter_map(|r| match &r.subject {
            Subject::SetPair(a, b) => Some(NetworkEdge {
                source: a.clone(),
                target: b.clone(),
                observed: r.observed,
                expected: r.expected,
                fold_change: r.fold_change,
                p_value: r.p_value,
            }),
            Subject::Set(_) => None,
        })
        .collect();
    let mut degrees = BTreeMap::new();
    for e in &edges {
        *degrees.entry(e.source.clone()).or_insert(0) += 1;
        *degrees.entry(e.target.clone()).or_insert(0) += 1;
    }
    let view = edges
        .iter()
        .filter(|e| degrees[&e.source] >= min_degree && degrees[&e.target] >= min_degree)
        .cloned()
        .collect();
    ProcessNetwork {
        edges,
        degrees,
        view,
    }
}

/// Cytoscape simple interaction format: `source <tab> dyncorr <tab> target`.
pub fn write_sif<W: Write>(edges: &[NetworkEdge], mut out: W) -> std::io::Result<()> {
    for e in edges {
        writeln!(out, "{}\t{}\t{}", e.source, SIF_INTERACTION, e.target)?;
    }
    out.flush()
}

pub fn write_edges_tsv<W: Write>(network: &ProcessNetwork, mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "source\ttarget\tobserved\texpected\tfold_change\tp_value\tsource_degree\ttarget_degree"
    )?;
    for e in &network.edges {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.source,
            e.target,
            e.observed,
            fmt_num(e.expected),
            fmt_num(e.fold_change),
            fmt_num(e.p_value),
            network.degrees[&e.source],
            network.degrees[&e.target]
        )?;
    }
    out.flush()
}

pub fn write_within_tsv<W: Write>(results: &[EnrichmentResult], mut out: W) -> std::io::Result<()> {
    writeln!(out, "name\tobserved\texpected\tfold_change\tp_value")?;
    for r in results {
        if let Subject::Set(name) = &r.subject {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                name,
                r.observed,
                fmt_num(r.expected),
                fmt_num(r.fold_change),
                fmt_num(r.p_value)
            )?;
        }
    }
    out.flush()
}

/// Non-degenerate set pairs only.
pub fn write_between_tsv<W: Write>(
    results: &[EnrichmentResult],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(
        out,
        "set_a\tset_b\tobserved\texpected\tfold_change\tp_value"
    )?;
    for r in results.iter().filter(|r| !r.degenerate) {
        if let Subject::SetPair(a, b) = &r.subject {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                a,
                b,
                r.observed,
                fmt_num(r.expected),
                fmt_num(r.fold_change),
                fmt_num(r.p_value)
            )?;
        }
    }
    out.flush()
}
