use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};

use dca_core::dca::{
    build_product_matrix, extract_components, write_components, write_eigenvalues, ExtractOptions,
};
use dca_core::enrichment::{
    all_between, all_within, load_gene_pairs, load_gene_sets, process_pair_network,
    write_between_tsv, write_edges_tsv, write_sif, write_within_tsv, GeneSetCollection,
};
use dca_core::fdr::{select_pairs_by_fdr, write_selected, FdrPair, FitOptions};
use dca_core::format::fmt_num;
use dca_core::lac::{lac_matrix, select_top_pairs};
use dca_core::preprocess::{
    filter_genes, knn_impute, load_expression, standardize, write_expression, ExpressionMatrix,
    LoadOptions,
};
use dca_core::simulate::{
    lac_distribution_study, planted_recovery_study, write_long_tsv, write_recovery_tsv,
    write_summary_tsv, RecoveryOptions, Scenario, SimulationConfig, StudyDesign,
};
use dca_core::stats::quantile_sorted;

use crate::args::{
    DcaArgs, DcaOptions, EnrichArgs, EnrichOptions, PipelineArgs, PreprocessArgs,
    PreprocessOptions, ScenarioArg, SimulateArgs,
};
use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

fn require_input(path: &Option<PathBuf>, flag: &str) -> CliResult<PathBuf> {
    let path = path
        .clone()
        .ok_or_else(|| CliError::Usage(format!("missing required argument --{flag}")))?;
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "--{flag}: input file {} does not exist",
            path.display()
        )));
    }
    Ok(path)
}

fn require_out_dir(path: &Option<PathBuf>) -> CliResult<PathBuf> {
    let dir = path
        .clone()
        .ok_or_else(|| CliError::Usage("missing required argument --out-dir".into()))?;
    fs::create_dir_all(&dir).map_err(|e| CliError::output(&dir, e))?;
    Ok(dir)
}

fn write_file<F>(path: &Path, manifest: &mut RunManifest, stage: &str, body: F) -> CliResult<()>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let file = File::create(path).map_err(|e| CliError::output(path, e))?;
    let mut out = BufWriter::new(file);
    body(&mut out)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::output(path, e))?;
    manifest.add_output(stage, path);
    Ok(())
}

fn parse_delimiter(s: &str) -> CliResult<char> {
    match s {
        "tab" | "\\t" | "\t" => Ok('\t'),
        "comma" | "," => Ok(','),
        other => {
            let mut chars = other.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(CliError::Usage(format!(
                    "--delimiter must be tab, comma or one character, got '{other}'"
                ))),
            }
        }
    }
}

fn load_tsv(path: &Path) -> CliResult<ExpressionMatrix> {
    Ok(load_expression(path, &LoadOptions::default())?)
}

// ---------------------------------------------------------------------------

fn preprocess_matrix(input: &Path, options: &PreprocessOptions) -> CliResult<ExpressionMatrix> {
    let load = LoadOptions {
        delimiter: parse_delimiter(&options.delimiter)?,
        na_tokens: options.na_tokens.clone(),
        ..LoadOptions::default()
    };
    let raw = load_expression(input, &load)?;
    info!(
        "loaded {} genes x {} samples with {} missing values",
        raw.n_genes(),
        raw.n_samples(),
        raw.missing_count()
    );
    let (imputed, warnings) = knn_impute(&raw, options.knn_k)?;
    for w in &warnings {
        warn!(
            "gene {} sample {}: {} neighbors available, {} requested",
            w.gene, w.sample, w.used, w.requested
        );
    }
    let filtered = filter_genes(&imputed, options.max_zero_frac, options.min_variance)?;
    info!("{} genes kept after filtering", filtered.n_genes());
    Ok(standardize(&filtered)?)
}

pub fn preprocess(args: &PreprocessArgs) -> CliResult<()> {
    let input = require_input(&args.input, "input")?;
    if !args.stdout && args.out_dir.is_none() {
        return Err(CliError::Usage(
            "either --out-dir or --stdout is required".into(),
        ));
    }
    let mut manifest = RunManifest::start("preprocess", args);
    manifest.add_input(&input)?;
    let matrix = preprocess_matrix(&input, &args.options)?;
    if args.stdout {
        let stdout = std::io::stdout();
        write_expression(&matrix, stdout.lock(), '\t')
            .map_err(|e| CliError::output("<stdout>", e))?;
    }
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))?;
        write_file(
            &dir.join("standardized.tsv"),
            &mut manifest,
            "preprocess",
            |w| write_expression(&matrix, w, '\t'),
        )?;
        manifest.finish(&dir.join("manifest.json"))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------

pub struct ComponentPairs {
    pub rank: usize,
    pub pairs: Vec<FdrPair>,
}

fn run_dca(
    matrix: &ExpressionMatrix,
    options: &DcaOptions,
    dir: &Path,
    manifest: &mut RunManifest,
) -> CliResult<Vec<ComponentPairs>> {
    let genes = matrix.gene_ids();
    let table = lac_matrix(matrix, options.variant.into())?;
    if options.all_pairs {
        write_file(&dir.join("lac_scores.tsv"), manifest, "dca", |w| {
            table.write_tsv(w)
        })?;
    }
    let top = select_top_pairs(&table, options.top_fraction)?;
    info!("kept {} of {} pairs", top.len(), table.len());
    write_file(&dir.join("top_pairs.tsv"), manifest, "dca", |w| {
        top.write_tsv(genes, w)
    })?;

    let b = build_product_matrix(matrix, &top.index_pairs())?;
    let extract = ExtractOptions {
        k: options.k,
        rotate: !options.no_rotate,
        rotation_max_iter: options.rotation_max_iter,
        rotation_tol: options.rotation_tol,
    };
    let extraction = extract_components(&b, &extract)?;
    write_file(&dir.join("components.tsv"), manifest, "dca", |w| {
        write_components(matrix.sample_ids(), &extraction.components, w)
    })?;
    write_file(&dir.join("eigenvalues.tsv"), manifest, "dca", |w| {
        write_eigenvalues(&extraction, w)
    })?;

    let fit = FitOptions {
        grid_points: options.kde_grid,
        min_scores: options.min_scores,
    };
    let mut models = Vec::new();
    let mut selections = Vec::new();
    for component in &extraction.components {
        let sel = select_pairs_by_fdr(&b, component, options.fdr_threshold, &fit)?;
        info!(
            "dc{}: {} pairs below fdr {}",
            component.rank,
            sel.selected.len(),
            options.fdr_threshold
        );
        let path = dir.join(format!("dc{}_pairs.tsv", component.rank));
        write_file(&path, manifest, "dca", |w| {
            write_selected(genes, &sel.selected, w)
        })?;
        models.push((component.rank, sel.model, sel.selected.len()));
        selections.push(ComponentPairs {
            rank: component.rank,
            pairs: sel.selected,
        });
    }
    write_file(&dir.join("fdr_models.tsv"), manifest, "dca", |w| {
        writeln!(
            w,
            "component\tmode\tsigma_left\tsigma_right\tpi0\tn_scores\tn_selected\tleft_fallback\tright_fallback"
        )?;
        for (rank, m, selected) in &models {
            writeln!(
                w,
                "dc{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                rank,
                fmt_num(m.mode),
                fmt_num(m.sigma_left),
                fmt_num(m.sigma_right),
                fmt_num(m.pi0),
                m.n_scores,
                selected,
                m.diagnostics.left_fallback,
                m.diagnostics.right_fallback
            )?;
        }
        Ok(())
    })?;
    Ok(selections)
}

fn standardized_input(path: &Path) -> CliResult<ExpressionMatrix> {
    let m = load_tsv(path)?;
    if m.missing_count() > 0 {
        return Err(dca_core::DcaError::Validation(
            "input has missing values; run preprocess first".into(),
        )
        .into());
    }
    Ok(m.assume_standardized()?)
}

pub fn dca(args: &DcaArgs) -> CliResult<()> {
    let input = require_input(&args.input, "input")?;
    let dir = require_out_dir(&args.out_dir)?;
    let mut manifest = RunManifest::start("dca", args);
    manifest.add_input(&input)?;
    let matrix = standardized_input(&input)?;
    run_dca(&matrix, &args.options, &dir, &mut manifest)?;
    manifest.finish(&dir.join("manifest.json"))
}

// ---------------------------------------------------------------------------

fn run_enrich(
    collection: &GeneSetCollection,
    pairs: &[(String, String)],
    options: &EnrichOptions,
    dir: &Path,
    manifest: &mut RunManifest,
    stage: &str,
) -> CliResult<()> {
    let restricted = collection.restrict_pairs(pairs.iter().map(|(a, b)| (a.as_str(), b.as_str())));
    info!(
        "{} of {} pairs fall inside a universe of {} genes",
        restricted.len(),
        pairs.len(),
        collection.universe_size()
    );
    let within = all_within(collection, &restricted)?;
    let between = all_between(collection, &restricted)?;
    let network = process_pair_network(
        &between,
        options.p_threshold,
        options.fc_threshold,
        options.min_degree,
    );
    info!(
        "{} process-pair edges, {} in the pruned view",
        network.edges.len(),
        network.view.len()
    );
    write_file(&dir.join("within.tsv"), manifest, stage, |w| {
        write_within_tsv(&within, w)
    })?;
    write_file(&dir.join("between.tsv"), manifest, stage, |w| {
        write_between_tsv(&between, w)
    })?;
    write_file(&dir.join("network.sif"), manifest, stage, |w| {
        write_sif(&network.edges, w)
    })?;
    write_file(&dir.join("network_view.sif"), manifest, stage, |w| {
        write_sif(&network.view, w)
    })?;
    write_file(&dir.join("network_edges.tsv"), manifest, stage, |w| {
        write_edges_tsv(&network, w)
    })?;
    Ok(())
}

pub fn enrich(args: &EnrichArgs) -> CliResult<()> {
    let pairs_path = require_input(&args.pairs, "pairs")?;
    let matrix_path = require_input(&args.matrix, "matrix")?;
    let gmt = require_input(&args.gmt, "gmt")?;
    let dir = require_out_dir(&args.out_dir)?;
    let mut manifest = RunManifest::start("enrich", args);
    for p in [&pairs_path, &matrix_path, &gmt] {
        manifest.add_input(p)?;
    }
    let matrix = load_tsv(&matrix_path)?;
    let collection = load_gene_sets(
        &gmt,
        args.options.min_set,
        args.options.max_set,
        matrix.gene_ids(),
    )?;
    info!("{} gene sets kept", collection.sets().len());
    let pairs = load_gene_pairs(&pairs_path)?;
    run_enrich(
        &collection,
        &pairs,
        &args.options,
        &dir,
        &mut manifest,
        "enrich",
    )?;
    manifest.finish(&dir.join("manifest.json"))
}

// ---------------------------------------------------------------------------

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    if args.replicates == 0 {
        return Err(CliError::Usage("--replicates must be positive".into()));
    }
    let dir = require_out_dir(&args.out_dir)?;
    let mut manifest = RunManifest::start("simulate", args);
    manifest.seeds.push(args.seed);

    if args.scenario == ScenarioArg::PlantedFactor {
        let config = SimulationConfig {
            scenario: Scenario::PlantedFactor,
            rho: 0.0,
            n_samples: args.n.first().copied().unwrap_or(300),
            n_replicates: args.replicates,
            n_genes: args.genes,
            n_pairs: args.planted_pairs,
            signal_strength: args.signal,
            seed: args.seed,
        };
        let options = RecoveryOptions {
            variant: args.dca.variant.into(),
            top_fraction: args.dca.top_fraction,
            extract: ExtractOptions {
                k: args.dca.k,
                rotate: !args.dca.no_rotate,
                rotation_max_iter: args.dca.rotation_max_iter,
                rotation_tol: args.dca.rotation_tol,
            },
        };
        let outcomes = planted_recovery_study(&config, &options)?;
        manifest.seeds = outcomes.iter().map(|o| o.seed).collect();
        let scores: Vec<f64> = outcomes.iter().map(|o| o.score).collect();
        info!(
            "median recovery over {} seeds: {}",
            scores.len(),
            fmt_num(median(&scores))
        );
        write_file(&dir.join("recovery.tsv"), &mut manifest, "simulate", |w| {
            write_recovery_tsv(&outcomes, w)
        })?;
    } else {
        let mut design = StudyDesign::standard_grid(args.replicates, args.seed);
        design.scenarios = match args.scenario {
            ScenarioArg::Dynamic => vec![Scenario::Dynamic],
            ScenarioArg::Correlated => vec![Scenario::Correlated],
            ScenarioArg::Independent => vec![Scenario::Independent],
            _ => design.scenarios,
        };
        if !args.rho.is_empty() {
            design.rhos = args.rho.clone();
        }
        if !args.n.is_empty() {
            design.sample_sizes = args.n.clone();
        }
        let cells = lac_distribution_study(&design)?;
        info!("{} cells x {} replicates", cells.len(), args.replicates);
        write_file(
            &dir.join("lac_summary.tsv"),
            &mut manifest,
            "simulate",
            |w| write_summary_tsv(&cells, w),
        )?;
        if args.raw {
            write_file(&dir.join("lac_long.tsv"), &mut manifest, "simulate", |w| {
                write_long_tsv(&cells, w)
            })?;
        }
    }
    manifest.finish(&dir.join("manifest.json"))
}

// ---------------------------------------------------------------------------

pub fn pipeline(args: &PipelineArgs) -> CliResult<()> {
    let input = require_input(&args.input, "input")?;
    let gmt = require_input(&args.gmt, "gmt")?;
    let dir = require_out_dir(&args.out_dir)?;
    let mut manifest = RunManifest::start("pipeline", args);
    manifest.add_input(&input)?;
    manifest.add_input(&gmt)?;

    let pre_dir = dir.join("preprocess");
    let dca_dir = dir.join("dca");
    for d in [&pre_dir, &dca_dir] {
        fs::create_dir_all(d).map_err(|e| CliError::output(d, e))?;
    }
    let matrix = preprocess_matrix(&input, &args.preprocess)?;
    write_file(
        &pre_dir.join("standardized.tsv"),
        &mut manifest,
        "preprocess",
        |w| write_expression(&matrix, w, '\t'),
    )?;

    let selections = run_dca(&matrix, &args.dca, &dca_dir, &mut manifest)?;

    let collection = load_gene_sets(
        &gmt,
        args.enrich.min_set,
        args.enrich.max_set,
        matrix.gene_ids(),
    )?;
    info!("{} gene sets kept", collection.sets().len());
    let genes = matrix.gene_ids();
    for sel in &selections {
        let sub = dir.join("enrich").join(format!("dc{}", sel.rank));
        fs::create_dir_all(&sub).map_err(|e| CliError::output(&sub, e))?;
        let pairs: Vec<(String, String)> = sel
            .pairs
            .iter()
            .map(|p| (genes[p.i].clone(), genes[p.j].clone()))
            .collect();
        run_enrich(
            &collection,
            &pairs,
            &args.enrich,
            &sub,
            &mut manifest,
            "enrich",
        )?;
    }
    manifest.finish(&dir.join("manifest.json"))
}
