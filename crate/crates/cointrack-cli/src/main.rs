//! Command-line front end: track, eval, stats, synth and overlay
//! subcommands over the dataset layout.
//!
//! Exit codes: 0 success, 2 usage, 3 data error, 4 internal error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use cointrack::config::Config;
use cointrack::error::{Error, Result};
use cointrack::evalkit::{self, Histogram, SequenceRecord};
use cointrack::mask::BinaryMask;
use cointrack::overlay::{render_overlay, OverlayStyle};
use cointrack::synth::SceneSpec;
use cointrack::tracker::{self, Templates};

#[derive(Parser)]
#[command(
    name = "cointrack",
    about = "Double-sided planar object tracker and evaluation toolkit",
    version
)]
struct Cli {
    /// Base directory all relative paths resolve against.
    #[arg(long, global = true, default_value = ".")]
    root: PathBuf,

    /// Parallelism across sequences (eval/stats).
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track one sequence and write JSON-lines results plus mask PNGs.
    Track(TrackArgs),
    /// Evaluate tracking results against dataset ground truth.
    Eval(EvalArgs),
    /// Dataset statistics: textureness and aspect-ratio-change histograms.
    Stats(StatsArgs),
    /// Generate a synthetic dataset from a scene spec.
    Synth(SynthArgs),
    /// Render diagnostic overlays for tracked frames.
    Overlay(OverlayArgs),
}

#[derive(Args)]
struct TrackArgs {
    /// Sequence directory (frames/, gt/, init.json).
    #[arg(long)]
    sequence: PathBuf,
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for results.jsonl and masks/.
    #[arg(long)]
    out: PathBuf,
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Results directory: either one sequence's output or a directory of
    /// per-sequence outputs named like the dataset sequences.
    #[arg(long)]
    results: PathBuf,
    /// Dataset directory: one sequence or a directory of sequences.
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for the CSV tables.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    /// Dataset directory: one sequence or a directory of sequences.
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for CSVs and histogram PNGs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Scene spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OverlayArgs {
    /// Sequence directory.
    #[arg(long)]
    sequence: PathBuf,
    /// Tracking results directory for that sequence.
    #[arg(long)]
    results: PathBuf,
    /// Output directory for overlay PNGs.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<()> {
    let root = &cli.root;
    match cli.command {
        Command::Track(args) => cmd_track(root, args),
        Command::Eval(args) => cmd_eval(root, args, cli.jobs),
        Command::Stats(args) => cmd_stats(root, args, cli.jobs),
        Command::Synth(args) => cmd_synth(root, args),
        Command::Overlay(args) => cmd_overlay(root, args),
    }
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

fn cmd_track(root: &Path, args: TrackArgs) -> Result<()> {
    let seq_dir = resolve(root, &args.sequence);
    let out_dir = resolve(root, &args.out);
    let mut config = match &args.config {
        Some(p) => Config::load(&resolve(root, p))?,
        None => Config::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    if config.seed.is_none() {
        return Err(Error::InvalidConfig(
            "a seed is required: pass --seed or set `seed` in the config".into(),
        ));
    }
    let seq = SequenceRecord::load(&seq_dir)?;
    let results = tracker::run_sequence(&seq, &config)?;
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    tracker::write_results(&results, &out_dir)?;
    println!("tracked {} frames -> {}", results.len(), out_dir.display());
    Ok(())
}

/// Sequence directories under `dir`, or `dir` itself when it already is one.
fn sequence_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join("init.json").exists() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_dir() && path.join("init.json").exists() {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::malformed(dir, "no sequences found (missing init.json)"));
    }
    Ok(out)
}

/// Results directories: either `dir` itself or its matching subdirectories.
fn results_dir_for(results_root: &Path, seq_dir: &Path) -> PathBuf {
    if results_root.join("results.jsonl").exists() {
        results_root.to_path_buf()
    } else {
        let name = seq_dir.file_name().expect("sequence dir has a name");
        results_root.join(name)
    }
}

fn with_jobs<T: Send, F: Fn(&PathBuf) -> Result<T> + Sync>(
    jobs: usize,
    dirs: &[PathBuf],
    f: F,
) -> Result<Vec<T>> {
    if jobs <= 1 || dirs.len() <= 1 {
        return dirs.iter().map(&f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    pool.install(|| {
        use rayon::prelude::*;
        dirs.par_iter().map(&f).collect()
    })
}

fn cmd_eval(root: &Path, args: EvalArgs, jobs: usize) -> Result<()> {
    let results_root = resolve(root, &args.results);
    let dataset_root = resolve(root, &args.dataset);
    let out_dir = resolve(root, &args.out);
    let seq_dirs = sequence_dirs(&dataset_root)?;

    let evals = with_jobs(jobs, &seq_dirs, |seq_dir| {
        let seq = SequenceRecord::load(seq_dir)?;
        let results_dir = results_dir_for(&results_root, seq_dir);
        if !results_dir.join("results.jsonl").exists() {
            return Err(Error::malformed(
                results_dir.join("results.jsonl"),
                "missing results for sequence",
            ));
        }
        evalkit::evaluate_sequence(&seq, &results_dir)
    })?;

    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let iou_csv = evalkit::iou_table_csv(&evals);
    let tracking_csv = evalkit::tracking_table_csv(&evals);
    let iou_path = out_dir.join("iou_table.csv");
    std::fs::write(&iou_path, &iou_csv).map_err(|e| Error::io(&iou_path, e))?;
    let tracking_path = out_dir.join("tracking_table.csv");
    std::fs::write(&tracking_path, &tracking_csv).map_err(|e| Error::io(&tracking_path, e))?;
    print!("{iou_csv}");
    print!("{tracking_csv}");
    Ok(())
}

fn cmd_stats(root: &Path, args: StatsArgs, jobs: usize) -> Result<()> {
    let dataset_root = resolve(root, &args.dataset);
    let out_dir = resolve(root, &args.out);
    let seq_dirs = sequence_dirs(&dataset_root)?;

    struct SeqStats {
        name: String,
        textureness: Option<f64>,
        annotated: usize,
        ar_first: Vec<f64>,
        ar_speed: Vec<f64>,
    }

    let stats = with_jobs(jobs, &seq_dirs, |seq_dir| {
        let seq = SequenceRecord::load(seq_dir)?;
        let mut masks: Vec<(usize, BinaryMask)> = Vec::new();
        let mut tex_sum = 0.0;
        let mut tex_n = 0usize;
        for &idx in seq.gt.keys() {
            let gt = seq.read_gt(idx)?.object_mask();
            if !gt.is_empty() {
                let frame = cointrack::imgproc::GrayF::from_rgb(&seq.read_frame(idx)?);
                tex_sum += evalkit::textureness(&frame, &gt, evalkit::TEXTURENESS_SIGMA)?;
                tex_n += 1;
            }
            masks.push((idx, gt));
        }
        let mask_refs: Vec<(usize, &BinaryMask)> =
            masks.iter().map(|(i, m)| (*i, m)).collect();
        let ar_first = evalkit::ar_change_vs_first(&mask_refs).unwrap_or_default();
        let ar_speed = evalkit::ar_change_speed(&mask_refs, 5)?;
        Ok(SeqStats {
            name: seq_dir
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "sequence".into()),
            textureness: (tex_n > 0).then(|| tex_sum / tex_n as f64),
            annotated: masks.len(),
            ar_first,
            ar_speed,
        })
    })?;

    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let mut tex_csv = String::from("sequence,mean_abs_log,annotated_frames\n");
    let mut hist_first = Histogram::log_default();
    let mut hist_speed = Histogram::log_default();
    for s in &stats {
        match s.textureness {
            Some(t) => tex_csv.push_str(&format!("{},{:.6},{}\n", s.name, t, s.annotated)),
            None => tex_csv.push_str(&format!("{},,{}\n", s.name, s.annotated)),
        }
        for v in &s.ar_first {
            hist_first.add(*v);
        }
        for v in &s.ar_speed {
            hist_speed.add(*v);
        }
    }
    for (name, hist) in [("ar_change_first", &hist_first), ("ar_change_speed", &hist_speed)] {
        let csv_path = out_dir.join(format!("{name}.csv"));
        std::fs::write(&csv_path, hist.to_csv()).map_err(|e| Error::io(&csv_path, e))?;
        let png_path = out_dir.join(format!("{name}.png"));
        hist.render(640, 360)
            .save(&png_path)
            .map_err(|e| Error::image(&png_path, e))?;
    }
    let tex_path = out_dir.join("textureness.csv");
    std::fs::write(&tex_path, &tex_csv).map_err(|e| Error::io(&tex_path, e))?;
    print!("{tex_csv}");
    println!("ar-change measurements: {} vs-first, {} speed", hist_first.total(), hist_speed.total());
    Ok(())
}

fn cmd_synth(root: &Path, args: SynthArgs) -> Result<()> {
    let spec_path = resolve(root, &args.spec);
    let out_dir = resolve(root, &args.out);
    let spec = SceneSpec::load(&spec_path)?;
    let summary = cointrack::synth::write_dataset(&spec, &out_dir)?;
    println!(
        "wrote {} frames (obverse init {}, reverse init {}) -> {}",
        summary.frames,
        summary.obverse_frame,
        summary.reverse_frame,
        out_dir.display()
    );
    Ok(())
}

fn cmd_overlay(root: &Path, args: OverlayArgs) -> Result<()> {
    let seq_dir = resolve(root, &args.sequence);
    let results_dir = resolve(root, &args.results);
    let out_dir = resolve(root, &args.out);
    let seq = SequenceRecord::load(&seq_dir)?;
    let records = tracker::read_results_jsonl(&results_dir.join("results.jsonl"))?;
    if records.is_empty() {
        return Err(Error::malformed(
            results_dir.join("results.jsonl"),
            "no frame records to overlay",
        ));
    }
    let templates = Templates::from_sequence(&seq)?;
    let style = OverlayStyle::default();
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    for rec in &records {
        let frame = seq.read_frame(rec.frame)?;
        let mask = cointrack::mask::read_label_png(&results_dir.join(&rec.mask_path))?;
        let bbox = templates.side(rec.side).bbox;
        let img = render_overlay(&frame, &mask, rec, Some(&bbox), &style)?;
        let path = out_dir.join(format!("{:06}.png", rec.frame));
        img.save(&path).map_err(|e| Error::image(&path, e))?;
    }
    println!("rendered {} overlays -> {}", records.len(), out_dir.display());
    Ok(())
}
