use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cmfd_core::eval::{aggregate, size_bucket, write_csv, write_json, EvalSummary, ScoreRow};
use cmfd_core::lab::{generate_corpus, read_manifest, CorpusConfig, ForgeryKind};
use cmfd_core::{
    detect_intensity_dct, detect_intensity_exact, detect_rescale, load_image, load_mask, save_mask,
    score, DctConfig, DetectionReport, Error, ExactConfig, RescaleConfig,
};

/// Copy-move forgery detection, synthesis and evaluation.
#[derive(Parser, Debug)]
#[command(name = "cmfd", version, about)]
struct Cli {
    /// Worker threads; output is identical for any value.
    #[arg(long, env = "CMFD_JOBS", global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one detector on an image and write its mask and JSON report.
    Detect(DetectArgs),
    /// Generate a seeded forgery corpus with ground-truth masks.
    Synth(SynthArgs),
    /// Score predicted masks against a corpus.
    Eval(EvalArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Rescale,
    Exact,
    Dct,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    /// PGM, PNG or f64 sidecar.
    #[arg(long)]
    input: PathBuf,
    /// Defaults: 8 for dct, 4 for exact and rescale.
    #[arg(long)]
    block_size: Option<usize>,
    /// dct: pairs must be strictly farther apart than this (pixels).
    #[arg(long)]
    threshold: Option<f64>,
    /// rescale: Hu log-magnitude tolerance.
    #[arg(long)]
    hu_tol: Option<f64>,
    /// rescale: `start:step:end` or a comma list, in percent.
    #[arg(long, value_parser = parse_factors)]
    factors: Option<List>,
    /// exact: minimum Chebyshev distance between matched blocks.
    #[arg(long)]
    min_offset: Option<usize>,
    /// exact: ignore zero-offset (plain) copies.
    #[arg(long)]
    strict: bool,
    /// exact: pair cap per signature group; dct: run cap. `none` disables.
    #[arg(long, value_parser = parse_cap)]
    cap: Option<Cap>,
    /// Decimal places for feature rounding (dct 13, rescale 15).
    #[arg(long)]
    places: Option<u32>,
    /// rescale: candidate limit before verification.
    #[arg(long)]
    max_candidates: Option<usize>,
    /// rescale: ignore sample values repeated more often than this.
    #[arg(long)]
    max_multiplicity: Option<usize>,
    /// Mask output (PNG or PGM).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON report output; printed to stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Ground-truth mask; adds a score to the report.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug)]
struct Cap(Option<usize>);

/// Comma or range list; a newtype so clap treats it as one value.
#[derive(Clone, Debug)]
struct List(Vec<u32>);

fn parse_cap(s: &str) -> Result<Cap, String> {
    if s == "none" {
        return Ok(Cap(None));
    }
    s.parse().map(|n| Cap(Some(n))).map_err(|_| format!("expected a number or `none`, got `{s}`"))
}

fn parse_list(s: &str) -> Result<Vec<u32>, String> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| format!("invalid number `{t}`"))
        })
        .collect()
}

fn parse_factors(s: &str) -> Result<List, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [start, step, end] => {
            let n = |t: &str| t.trim().parse::<u32>().map_err(|_| format!("invalid number `{t}`"));
            let (start, step, end) = (n(start)?, n(step)?, n(end)?);
            if step == 0 || start > end {
                return Err(format!("empty factor range `{s}`"));
            }
            Ok(List((start..=end).step_by(step as usize).collect()))
        }
        [_] => parse_list(s).map(List),
        _ => Err(format!("expected start:step:end or a comma list, got `{s}`")),
    }
}

fn parse_sizes(s: &str) -> Result<List, String> {
    let sizes = parse_list(s)?;
    if let Some(bad) = sizes.iter().find(|&&p| p == 0 || p >= 100) {
        return Err(format!("size {bad}% outside 1..=99"));
    }
    Ok(List(sizes))
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    kind: ForgeryKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 105)]
    count: usize,
    /// Destination area in percent of the image, cycled across images.
    #[arg(long, value_parser = parse_sizes, default_value = "10,20,30,40")]
    sizes: List,
    /// Rescale factors (percent), cycled across images.
    #[arg(long, value_parser = parse_factors, default_value = "50,170,250,300")]
    factors: List,
    #[arg(long, default_value_t = 256)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    height: usize,
    /// Intensity offsets are drawn from 1..=N.
    #[arg(long, default_value_t = 100)]
    max_offset: i32,
    /// Clones per multi_clone image.
    #[arg(long, default_value_t = 2)]
    clones: usize,
    /// Round rescaled pastes to 8 bits.
    #[arg(long)]
    quantize_output: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Predicted masks named `<id>.png` (for example `img_3.png`).
    #[arg(long)]
    pred_dir: PathBuf,
    /// Corpus directory with `manifest.json` and `mask_<k>.png`.
    #[arg(long)]
    truth_dir: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Method label for the CSV rows.
    #[arg(long, default_value = "unknown")]
    method: String,
}

fn precondition(msg: impl Into<String>) -> anyhow::Error {
    Error::Precondition(msg.into()).into()
}

fn cap_or(cap: Option<Cap>, default: Option<usize>) -> Option<usize> {
    cap.map_or(default, |c| c.0)
}

fn detect(args: &DetectArgs) -> Result<()> {
    let img = load_image(&args.input)?;
    let start = Instant::now();
    let mut report: DetectionReport = match args.method {
        MethodArg::Exact => {
            let mut cfg = ExactConfig::with_block_size(args.block_size.unwrap_or(4));
            if let Some(m) = args.min_offset {
                cfg.min_offset = m;
            }
            cfg.allow_zero_offset = !args.strict;
            cfg.pair_cap = cap_or(args.cap, cfg.pair_cap);
            detect_intensity_exact(&img, &cfg)?
        }
        MethodArg::Dct => {
            let mut cfg = DctConfig::default();
            cfg.block_size = args.block_size.unwrap_or(cfg.block_size);
            cfg.threshold = args.threshold.unwrap_or(cfg.threshold);
            cfg.rounding_places = args.places.unwrap_or(cfg.rounding_places);
            cfg.run_cap = cap_or(args.cap, cfg.run_cap);
            detect_intensity_dct(&img, &cfg)?
        }
        MethodArg::Rescale => {
            let mut cfg = RescaleConfig::default();
            cfg.block_size = args.block_size.unwrap_or(cfg.block_size);
            cfg.hu_tolerance = args.hu_tol.unwrap_or(cfg.hu_tolerance);
            if let Some(f) = &args.factors {
                cfg.factors = f.0.clone();
            }
            cfg.rounding_places = args.places.unwrap_or(cfg.rounding_places);
            cfg.max_candidates = args.max_candidates.unwrap_or(cfg.max_candidates);
            cfg.max_value_multiplicity = args.max_multiplicity.unwrap_or(cfg.max_value_multiplicity);
            detect_rescale(&img, &cfg)?
        }
    };
    report.elapsed_ms = start.elapsed().as_millis() as u64;
    if let Some(truth) = &args.truth {
        report.score = Some(score(&report.mask, &load_mask(truth)?)?);
    }
    if let Some(out) = &args.out {
        save_mask(&report.mask, out)?;
        report.mask_path = Some(out.display().to_string());
    }
    let json = serde_json::to_string_pretty(&report)? + "\n";
    match &args.report {
        Some(path) => std::fs::write(path, json)
            .map_err(|e| Error::Io { path: path.clone(), source: e })?,
        None => std::io::stdout()
            .write_all(json.as_bytes())
            .context("writing report to stdout")?,
    }
    eprintln!(
        "{}: {} ({} match(es), {} ms)",
        args.input.display(),
        report.message,
        report.matches.len(),
        report.elapsed_ms
    );
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let cfg = CorpusConfig {
        seed: args.seed,
        count: args.count,
        kind: args.kind,
        sizes: args.sizes.0.clone(),
        width: args.width,
        height: args.height,
        factors: args.factors.0.clone(),
        max_offset: args.max_offset,
        clones: args.clones,
        quantize_output: args.quantize_output,
    };
    let entries = generate_corpus(&cfg, &args.out_dir)?;
    let clamped = entries.iter().filter(|e| e.clamped).count();
    println!(
        "wrote {} image(s) to {} ({clamped} with clamped samples)",
        entries.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let manifest = read_manifest(&args.truth_dir)?;
    let pred_path = |id: &str| args.pred_dir.join(format!("{id}.png"));
    let missing: Vec<String> = manifest
        .iter()
        .filter(|e| !pred_path(&e.id).is_file())
        .map(|e| e.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(precondition(format!(
            "no prediction for {} image(s): {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    let mut rows = Vec::with_capacity(manifest.len());
    for e in &manifest {
        let truth = load_mask(args.truth_dir.join(&e.mask))?;
        let pred = load_mask(pred_path(&e.id))?;
        let s = score(&pred, &truth).with_context(|| format!("scoring {}", e.id))?;
        rows.push(ScoreRow {
            image_id: e.id.clone(),
            method: args.method.clone(),
            size_bucket_pct: size_bucket(e.size_pct),
            p_pct: s.p,
            fp_pixels: s.false_positive_pixels,
        });
    }
    let agg = aggregate(&rows);
    println!("image_id,size_bucket_pct,P_pct,fp_pixels");
    for r in &rows {
        println!("{},{},{:.4},{}", r.image_id, r.size_bucket_pct, r.p_pct, r.fp_pixels);
    }
    println!();
    println!("bucket_pct,images,mean_P_pct");
    for b in &agg.buckets {
        println!("{},{},{:.4}", b.size_bucket_pct, b.images, b.mean_p);
    }
    if let Some(m) = agg.overall_mean {
        println!("overall,{},{m:.4}", rows.len());
    }
    for b in &agg.empty_buckets {
        eprintln!("warning: no images in the {b}% bucket");
    }
    if let Some(path) = &args.csv {
        write_csv(&rows, path)?;
    }
    if let Some(path) = &args.json {
        write_json(&EvalSummary { rows, aggregate: agg }, path)?;
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(
            Error::Io { .. }
            | Error::Format(_)
            | Error::UnsupportedFormat(_)
            | Error::DimensionOverflow { .. },
        ) => 3,
        Some(_) => 4,
        None if err.chain().any(|e| e.is::<std::io::Error>()) => 3,
        None => 1,
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Detect(a) => detect(a),
        Command::Synth(a) => synth(a),
        Command::Eval(a) => eval(a),
    }
}

fn with_jobs(jobs: Option<usize>, f: impl FnOnce() -> Result<()> + Send) -> Result<()> {
    match jobs {
        Some(0) => Err(precondition("--jobs must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building thread pool")?
            .install(f),
        None => f(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match with_jobs(cli.jobs, || run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn one_line(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if parts.last().is_some_and(|p| p.contains(&text)) {
            continue;
        }
        parts.push(text);
    }
    parts.join(": ").replace('\n', " ")
}
