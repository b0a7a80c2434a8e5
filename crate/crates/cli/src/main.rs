//! Command-line front end. Each pipeline stage is its own subcommand and
//! exchanges intermediate files through the output directory; `run` does
//! everything in one go.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use erkit::blocking::{read_candidates, write_candidates};
use erkit::config::{EmbedderKind, IndexChoice, PipelineConfig, TaskKind};
use erkit::datagen::{generate_dirty_dataset, GenParams};
use erkit::embedding::read_embv;
use erkit::evaluation::{emit_report, Report, ReportFormat};
use erkit::matching::{read_matches, write_matches, write_sweep};
use erkit::model::{load_groundtruth, write_csv, write_groundtruth, GroundTruth};
use erkit::pipeline::{
    block_embedded, blocking_row, choose_delta, embed_task, load_task, matching_row, read_match_meta, round_ms,
    run_pipeline, score_task, write_match_meta, MatchMeta, StageError, BLOCKING_REPORT_FILE, CANDIDATES_FILE,
    LEFT_VECTORS_FILE, MATCHES_FILE, MATCHING_REPORT_FILE, RIGHT_VECTORS_FILE, SWEEP_FILE,
};
use erkit::{EmbeddedCollection, Error};

#[derive(Debug, Parser)]
#[command(name = "erkit", version, about = "Embedding-based entity resolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pipeline configuration file (TOML with dotted keys).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for every random choice (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; intermediate files are exchanged through it.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic Dirty dataset with known duplicates.
    Generate(GenerateArgs),
    /// Embed the task's collections into EMBV files.
    Vectorize(Overrides),
    /// Build candidate pairs from the embedded collections.
    Block(Overrides),
    /// Score pairs and compute a one-to-one matching.
    Match(Overrides),
    /// Evaluate the matching over a grid of thresholds.
    Sweep(Overrides),
    /// Score stored matches against the ground truth.
    Evaluate(Overrides),
    /// Run every stage end to end.
    Run(Overrides),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 10_000)]
    n_total: usize,
    #[arg(long, default_value_t = 0.40)]
    dup_fraction: f64,
    #[arg(long, default_value_t = 9)]
    max_dups_per_record: usize,
    #[arg(long, default_value_t = 3)]
    max_mods_per_attribute: usize,
    #[arg(long, default_value_t = 10)]
    max_mods_per_record: usize,
    #[arg(long, default_value_t = 12)]
    attributes: usize,
}

#[derive(Debug, Args, Default)]
struct Overrides {
    #[arg(long)]
    k: Option<usize>,
    /// Fixed matching threshold; turns the sweep off.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_parser = ["exact", "hnsw"])]
    index: Option<String>,
    #[arg(long, value_parser = ["word-avg", "char-ngram", "precomputed"])]
    embedder: Option<String>,
    /// EMBV file for the left (or only) collection.
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// EMBV file for the right collection of a Clean-Clean task.
    #[arg(long)]
    right_vectors: Option<PathBuf>,
}

/// Exit statuses.
const USAGE: u8 = 1;
const DATA: u8 = 2;
const INTERNAL: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    let core = err
        .chain()
        .find_map(|e| {
            e.downcast_ref::<StageError>()
                .map(|s| &s.source)
                .or_else(|| e.downcast_ref::<Error>())
        });
    match core {
        Some(Error::Config(_) | Error::Domain(_)) => USAGE,
        Some(e) if e.is_data_error() => DATA,
        _ => INTERNAL,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let stage: fn(&PipelineConfig) -> anyhow::Result<()> = match &cli.command {
        Command::Generate(args) => return generate(args, cli.seed, cli.output.as_deref()),
        Command::Vectorize(_) => vectorize,
        Command::Block(_) => block,
        Command::Match(_) => run_matching,
        Command::Sweep(_) => sweep,
        Command::Evaluate(_) => evaluate,
        Command::Run(_) => run,
    };
    let overrides = match &cli.command {
        Command::Vectorize(o) | Command::Block(o) | Command::Match(o) | Command::Sweep(o) | Command::Evaluate(o) | Command::Run(o) => o,
        Command::Generate(_) => unreachable!("handled above"),
    };
    stage(&load_config(&cli, overrides)?)
}

fn load_config(cli: &Cli, o: &Overrides) -> anyhow::Result<PipelineConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required for this subcommand".into()))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.output {
        cfg.output = out.clone();
    }
    if let Some(k) = o.k {
        cfg.blocking.k = k;
    }
    if let Some(d) = o.delta {
        cfg.matching.delta = Some(d);
        cfg.matching.sweep = Some(false);
    }
    if let Some(index) = &o.index {
        cfg.blocking.index = index.parse::<IndexChoice>()?;
    }
    if let Some(kind) = &o.embedder {
        cfg.embedder.kind = kind.parse::<EmbedderKind>()?;
    }
    if let Some(v) = &o.vectors {
        cfg.embedder.vectors = Some(v.clone());
    }
    if let Some(v) = &o.right_vectors {
        cfg.embedder.right_vectors = Some(v.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn generate(args: &GenerateArgs, seed: Option<u64>, output: Option<&Path>) -> anyhow::Result<()> {
    let params = GenParams {
        n_total: args.n_total,
        dup_fraction: args.dup_fraction,
        max_dups_per_record: args.max_dups_per_record,
        max_mods_per_attribute: args.max_mods_per_attribute,
        max_mods_per_record: args.max_mods_per_record,
        n_attributes: args.attributes,
        seed: seed.unwrap_or(GenParams::default().seed),
    };
    let out = output.unwrap_or(Path::new("out"));
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let d = generate_dirty_dataset(&params)?;
    write_csv(&d.collection, out.join("entities.csv"), "id")?;
    write_groundtruth(&d.ground_truth, out.join("groundtruth.csv"))?;
    println!(
        "wrote {} entities and {} true pairs to {} (duplicate-member fraction {:.3})",
        d.collection.len(),
        d.ground_truth.len(),
        out.display(),
        d.duplicate_member_fraction()
    );
    Ok(())
}

fn output_dir(cfg: &PipelineConfig) -> anyhow::Result<&Path> {
    std::fs::create_dir_all(&cfg.output).map_err(|e| Error::io(&cfg.output, e))?;
    Ok(&cfg.output)
}

fn vectorize(cfg: &PipelineConfig) -> anyhow::Result<()> {
    let out = output_dir(cfg)?;
    let task = load_task(cfg)?;
    let t0 = Instant::now();
    let (left, right) = embed_task(cfg, &task)?;
    log::info!("embed: {:.3} s", round_ms(t0.elapsed().as_secs_f64()));
    left.write_embv(out.join(LEFT_VECTORS_FILE))?;
    if let Some(r) = right {
        r.write_embv(out.join(RIGHT_VECTORS_FILE))?;
    }
    println!("wrote {} vectors of dimension {} to {}", left.len(), left.dim(), out.display());
    Ok(())
}

/// Embeddings written by `vectorize`.
fn read_vectors(cfg: &PipelineConfig) -> anyhow::Result<(EmbeddedCollection, Option<EmbeddedCollection>)> {
    let left = read_embv(cfg.output.join(LEFT_VECTORS_FILE)).context("run `vectorize` first")?;
    let right = match cfg.task.kind {
        TaskKind::CleanClean => Some(read_embv(cfg.output.join(RIGHT_VECTORS_FILE)).context("run `vectorize` first")?),
        TaskKind::Dirty => None,
    };
    Ok((left, right))
}

fn block(cfg: &PipelineConfig) -> anyhow::Result<()> {
    let out = output_dir(cfg)?;
    let gt = load_groundtruth(&cfg.task.groundtruth)?;
    let (left, right) = read_vectors(cfg)?;
    let t0 = Instant::now();
    let cands = block_embedded(cfg, &left, right.as_ref())?;
    let secs = round_ms(t0.elapsed().as_secs_f64());
    write_candidates(&cands, out.join(CANDIDATES_FILE))?;
    let row = blocking_row(cfg, &cands, &gt, secs);
    emit_report(&Report::Blocking(vec![row.clone()]), out.join(BLOCKING_REPORT_FILE), ReportFormat::Csv)?;
    println!("{} candidates, recall {:.4}, precision {:.4}, {secs:.3} s", cands.len(), row.recall, row.precision);
    Ok(())
}

fn clean_clean_vectors(cfg: &PipelineConfig) -> anyhow::Result<(EmbeddedCollection, EmbeddedCollection)> {
    match read_vectors(cfg)? {
        (left, Some(right)) => Ok((left, right)),
        _ => Err(Error::Config("matching is evaluated on clean-clean tasks only".into()).into()),
    }
}

fn stored_candidates(cfg: &PipelineConfig) -> anyhow::Result<Option<erkit::CandidateSet>> {
    let path = cfg.output.join(CANDIDATES_FILE);
    Ok(if path.exists() { Some(read_candidates(path)?) } else { None })
}

fn run_matching(cfg: &PipelineConfig) -> anyhow::Result<()> {
    let out = output_dir(cfg)?;
    let (left, right) = clean_clean_vectors(cfg)?;
    let cands = stored_candidates(cfg)?;
    let scored = score_task(cfg, &left, &right, cands.as_ref())?;
    let gt = if cfg.matching.sweeps() { load_groundtruth(&cfg.task.groundtruth)? } else { GroundTruth::new() };
    let smaller = left.len().min(right.len());
    let (delta, s) = choose_delta(cfg, &scored, &gt, smaller)?;
    if let Some(s) = &s {
        write_sweep(s, out.join(SWEEP_FILE))?;
    }
    let t0 = Instant::now();
    let m = cfg.matching.algorithm.run(&scored, delta, smaller);
    let meta = MatchMeta {
        algorithm: cfg.matching.algorithm,
        delta,
        secs: round_ms(t0.elapsed().as_secs_f64()),
    };
    let path = out.join(MATCHES_FILE);
    write_matches(&m, &path)?;
    write_match_meta(&meta, &path)?;
    println!("{} matches with {} at delta {delta}", m.len(), meta.algorithm.name());
    Ok(())
}

fn sweep(cfg: &PipelineConfig) -> anyhow::Result<()> {
    let out = output_dir(cfg)?;
    let (left, right) = clean_clean_vectors(cfg)?;
    let cands = stored_candidates(cfg)?;
    let scored = score_task(cfg, &left, &right, cands.as_ref())?;
    let gt = load_groundtruth(&cfg.task.groundtruth)?;
    let smaller = left.len().min(right.len());
    let s = erkit::matching::threshold_sweep(&scored, &gt, smaller, &cfg.matching.grid())?;
    write_sweep(&s, out.join(SWEEP_FILE))?;
    println!(
        "best delta {} (precision {:.4}, recall {:.4}, f1 {:.4})",
        s.best.delta, s.best.precision, s.best.recall, s.best.f1
    );
    Ok(())
}

fn evaluate(cfg: &PipelineConfig) -> anyhow::Result<()> {
    let out = output_dir(cfg)?;
    if cfg.task.kind == TaskKind::Dirty {
        return Err(Error::Config("matching is evaluated on clean-clean tasks only; `block` reports blocking quality".into()).into());
    }
    let path = out.join(MATCHES_FILE);
    let matched = read_matches(&path).context("run `match` first")?;
    let meta = read_match_meta(&path)?;
    let gt = load_groundtruth(&cfg.task.groundtruth)?;
    let pairs = matched.iter().map(|p| p.id_pair()).collect();
    let row = matching_row(cfg, &pairs, &gt, &meta);
    emit_report(&Report::Matching(vec![row.clone()]), out.join(MATCHING_REPORT_FILE), ReportFormat::Csv)?;
    println!("precision {:.4}, recall {:.4}, f1 {:.4}", row.precision, row.recall, row.f1);
    Ok(())
}

fn run(cfg: &PipelineConfig) -> anyhow::Result<()> {
    let outcome = run_pipeline(cfg)?;
    let b = &outcome.blocking;
    println!(
        "blocking: {} candidates, recall {:.4}, precision {:.4}",
        outcome.candidates.len(),
        b.recall,
        b.precision
    );
    if let Some(m) = &outcome.matching {
        println!(
            "matching: {} at delta {}: precision {:.4}, recall {:.4}, f1 {:.4}",
            m.algorithm, m.delta, m.precision, m.recall, m.f1
        );
    }
    println!("reports written to {}", cfg.output.display());
    Ok(())
}
