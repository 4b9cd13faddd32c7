use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use xms_core::bench::{
    lambda_sweep, run_benchmark, synthetic_dataset, ttests_from_report, BenchmarkConfig, ExperimentReport,
    SyntheticSpec,
};
use xms_core::dataset_io::{load_dataset, save_dataset, MatrixFormat};
use xms_core::error::XmsError;
use xms_core::methods::{fit_method, load_model, save_model, FitOptions, MethodKind, MethodParams};
use xms_core::preprocess::PcaSetting;
use xms_core::retrieval_eval::{evaluate_model, Direction};

#[derive(Parser)]
#[command(
    name = "xms",
    version,
    about = "Cross-modal subspace learning and retrieval benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one method on a whole dataset and save the model.
    Fit(FitArgs),
    /// Score a saved model on a dataset in one query direction.
    Eval(EvalArgs),
    /// Run the repeated-split benchmark described by a config file.
    Bench(BenchArgs),
    /// Mean-MAP surface over a (lambda1, lambda2) grid.
    Sweep(SweepArgs),
    /// Recompute t-tests from a saved benchmark report.
    Ttest(TtestArgs),
    /// Write a synthetic paired dataset directory.
    Synth(SynthArgs),
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    method: String,
    #[arg(long)]
    out: PathBuf,
    /// Keep this fraction of variance per modality (default 0.98).
    #[arg(long, group = "pca")]
    pca_energy: Option<f64>,
    /// Keep this many principal components per modality.
    #[arg(long, group = "pca")]
    pca_dim: Option<usize>,
    /// Center only.
    #[arg(long, group = "pca")]
    no_pca: bool,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    ridge: Option<f64>,
    /// Seed of the randomized CDFE start.
    #[arg(long)]
    seed: Option<u64>,
    /// Include PCA fitting in the recorded fit time.
    #[arg(long)]
    time_includes_pca: bool,
    /// Scale every raw sample to unit norm first.
    #[arg(long)]
    l2_normalize: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// `a2b` (photo queries, sketch gallery) or `b2a`.
    #[arg(long)]
    direction: Direction,
    /// Comma-separated subset of `map,cmc`.
    #[arg(long, default_value = "map,cmc")]
    metrics: String,
    /// Truncate average precision at this rank.
    #[arg(long)]
    map_cutoff: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Overrides `threads` from the config.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    method: String,
    /// Comma-separated values used for lambda1 (and lambda2 unless `--grid2`).
    #[arg(long, default_value = "0,0.0001,0.001,0.01,0.1,1,10,100")]
    grid: String,
    #[arg(long)]
    grid2: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct TtestArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value = "lcfs")]
    baseline: String,
    /// Welch's unequal-variance test instead of Student's.
    #[arg(long)]
    welch: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 400)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 128)]
    dim_a: usize,
    #[arg(long, default_value_t = 128)]
    dim_b: usize,
    #[arg(long, default_value_t = 2017)]
    seed: u64,
    /// Binary matrix files instead of CSV.
    #[arg(long)]
    binary: bool,
}

fn config_error(msg: impl Into<String>) -> XmsError {
    XmsError::Config(msg.into())
}

fn write_output(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), XmsError> {
    let io = |e| XmsError::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write(&mut w).and_then(|_| w.flush()).map_err(io)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), XmsError> {
    write_output(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn parse_grid(text: &str) -> Result<Vec<f64>, XmsError> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| config_error(format!("bad grid value {v:?}")))
        })
        .collect()
}

fn fit(args: FitArgs) -> Result<(), XmsError> {
    let kind: MethodKind = args.method.parse()?;
    let pca = match (args.pca_energy, args.pca_dim, args.no_pca) {
        (Some(r), _, _) => PcaSetting::Energy(r),
        (_, Some(k), _) => PcaSetting::Dim(k),
        (_, _, true) => PcaSetting::Off,
        _ => PcaSetting::Default,
    };
    let params = MethodParams {
        dim: args.dim,
        ridge: args.ridge,
        mu: args.mu,
        alpha: args.alpha,
        beta: args.beta,
        lambda1: args.lambda1,
        lambda2: args.lambda2,
        seed: args.seed,
        ..Default::default()
    };
    let data = load_dataset(&args.dataset)?;
    log::info!("fitting {kind} on {} pairs", data.len());
    let options = FitOptions {
        pca,
        time_includes_pca: args.time_includes_pca,
        l2_normalize: args.l2_normalize,
    };
    let model = fit_method(kind, &data, &params, options)?;
    save_model(&model, &args.out)?;
    println!(
        "{kind}: d = {}, fit {:.4} s, saved to {}",
        model.dim(),
        model.fit_seconds,
        args.out.display()
    );
    Ok(())
}

fn eval(args: EvalArgs) -> Result<(), XmsError> {
    let (mut want_map, mut want_cmc) = (false, false);
    for m in args.metrics.split(',').map(str::trim).filter(|m| !m.is_empty()) {
        match m.to_ascii_lowercase().as_str() {
            "map" => want_map = true,
            "cmc" | "acc" => want_cmc = true,
            other => return Err(config_error(format!("unknown metric {other:?}; use map and/or cmc"))),
        }
    }
    if !(want_map || want_cmc) {
        return Err(config_error("no metrics requested"));
    }
    let model = load_model(&args.model)?;
    let data = load_dataset(&args.dataset)?;
    let ev = evaluate_model(&model, &data, args.direction, args.map_cutoff)?;

    let mut out = json!({
        "method": model.method,
        "direction": ev.direction,
        "queries": data.len(),
        "zero_norm_vectors": ev.zero_norm_vectors,
    });
    if want_map {
        out["map"] = json!(ev.map);
        out["per_query_ap"] = json!(ev.per_query_ap);
        println!("MAP ({}) = {:.4}", ev.direction, ev.map);
    }
    if want_cmc {
        out["cmc"] = json!(ev.acc_at_k);
        for k in [1, 10] {
            if let Some(v) = ev.acc_at(k) {
                println!("acc@{k} ({}) = {v:.4}", ev.direction);
            }
        }
    }
    if ev.zero_norm_vectors > 0 {
        log::warn!("{} projected vectors had zero norm", ev.zero_norm_vectors);
    }
    write_json(&args.out, &out)
}

fn load_config(path: &Path, threads: Option<usize>) -> Result<BenchmarkConfig, XmsError> {
    let mut cfg = BenchmarkConfig::from_path(path)?;
    if threads.is_some() {
        cfg.threads = threads;
    }
    Ok(cfg)
}

fn bench(args: BenchArgs) -> Result<(), XmsError> {
    let cfg = load_config(&args.config, args.threads)?;
    let report = run_benchmark(&cfg)?;
    let text = report.to_json()?;
    write_output(&args.out, |w| writeln!(w, "{text}"))?;
    if let Some(csv) = &args.csv {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        write_output(csv, |w| w.write_all(&buf))?;
    }

    println!("{:<12} {:>10} {:>10} {:>10}", "method", "a2b", "b2a", "fit s");
    for label in &report.method_order {
        let m = &report.methods[label];
        let cell = |d: &str| {
            m.directions
                .get(d)
                .and_then(|r| r.summary)
                .map_or("-".to_string(), |s| format!("{:.4}", s.mean))
        };
        let secs = m.fit_seconds_mean.map_or("-".to_string(), |s| format!("{s:.4}"));
        println!("{label:<12} {:>10} {:>10} {secs:>10}", cell("a2b"), cell("b2a"));
    }
    if report.incomplete {
        log::warn!("some repetitions failed; see `missing` in the report");
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), XmsError> {
    let cfg = load_config(&args.config, args.threads)?;
    let kind: MethodKind = args.method.parse()?;
    let l1 = parse_grid(&args.grid)?;
    let l2 = match &args.grid2 {
        Some(g) => parse_grid(g)?,
        None => l1.clone(),
    };
    let data = cfg.load_data()?;
    let surface = lambda_sweep(&cfg, &data, kind, &l1, &l2)?;
    if !surface.missing.is_empty() {
        log::warn!("{} sweep cells failed", surface.missing.len());
    }
    write_json(&args.out, &surface)
}

fn ttest(args: TtestArgs) -> Result<(), XmsError> {
    let text = std::fs::read_to_string(&args.report).map_err(|e| XmsError::Io {
        path: args.report.clone(),
        source: e,
    })?;
    let report = ExperimentReport::from_json(&text).map_err(|e| XmsError::Malformed {
        path: args.report.clone(),
        line: 0,
        msg: e.to_string(),
    })?;
    let tests = ttests_from_report(&report, &args.baseline, args.welch)?;
    for t in &tests {
        println!(
            "{} vs {} [{}]: t = {:.4}, p = {:.4}{}",
            t.method_pair[0],
            t.method_pair[1],
            t.direction,
            t.t_statistic,
            t.p_value,
            if t.significant_at_005 { " *" } else { "" }
        );
    }
    let out: Value = json!({ "baseline": args.baseline, "welch": args.welch, "ttests": tests });
    write_json(&args.out, &out)
}

fn synth(args: SynthArgs) -> Result<(), XmsError> {
    let spec = SyntheticSpec {
        n: args.n,
        num_classes: args.classes,
        dim_a: args.dim_a,
        dim_b: args.dim_b,
        seed: args.seed,
        ..Default::default()
    };
    let data = synthetic_dataset(&spec)?;
    let format = if args.binary {
        MatrixFormat::Binary
    } else {
        MatrixFormat::Text
    };
    save_dataset(&data, &args.out, format)?;
    println!("wrote {} pairs to {}", data.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::Bench(a) => bench(a),
        Command::Sweep(a) => sweep(a),
        Command::Ttest(a) => ttest(a),
        Command::Synth(a) => synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
