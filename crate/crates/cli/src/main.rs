use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vlmforge::depe::ResizeParams;
use vlmforge::eval::{BenchmarkKind, DEFAULT_RHO};
use vlmforge::sample::SampleFamily;
use vlmforge_cli::{parse_benchmark, run_depe_resize, run_eval, run_forge, run_validate, CliError, ForgeConfig, Overrides, ResizeJob};

#[derive(Parser)]
#[command(name = "vlmforge", version, about = "Forge, score and validate embodied VLM training samples")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate samples of one family from an episode directory.
    Forge(ForgeArgs),
    /// Score predictions against a benchmark directory.
    Eval(EvalArgs),
    /// Position-embedding grid tools.
    Depe {
        #[command(subcommand)]
        cmd: DepeCmd,
    },
    /// Check episodes load cleanly, and optionally re-check forged samples.
    Validate {
        episodes: PathBuf,
        #[arg(long)]
        samples: Option<PathBuf>,
    },
}

fn forge_family(s: &str) -> Result<SampleFamily, String> {
    SampleFamily::parse(s).ok_or_else(|| {
        let all: Vec<_> = SampleFamily::FORGE.iter().map(|f| f.name()).collect();
        format!("unknown family '{s}' (one of {})", all.join(", "))
    })
}

fn benchmark(s: &str) -> Result<BenchmarkKind, String> {
    parse_benchmark(s).ok_or_else(|| format!("unknown metric '{s}' (one of points, traj, afford)"))
}

#[derive(Args)]
struct ForgeArgs {
    #[arg(value_parser = forge_family)]
    family: SampleFamily,
    #[arg(long)]
    episodes: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    paraphrase: bool,
    #[arg(long)]
    min_len_px: Option<f64>,
    #[arg(long)]
    max_ratio: Option<f64>,
    #[arg(long)]
    magnitude_px: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(value_parser = benchmark)]
    metric: BenchmarkKind,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RHO)]
    rho: f64,
    /// Report path; defaults to `<pred>.score.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum DepeCmd {
    /// Bicubic resize of a square embedding grid.
    Resize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `<out>` with a `.json` extension.
        #[arg(long)]
        out_meta: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        new_side: usize,
        #[arg(long, default_value_t = -0.5, allow_hyphen_values = true)]
        kernel_a: f64,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        align_corners: bool,
    },
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.cmd {
        Cmd::Forge(a) => {
            let flags = Overrides {
                seed: a.seed,
                output: a.output,
                transcript: a.transcript,
                endpoint: a.endpoint,
                workers: a.workers,
                paraphrase: a.paraphrase,
                min_len_px: a.min_len_px,
                max_ratio: a.max_ratio,
                magnitude_px: a.magnitude_px,
            };
            let cfg = ForgeConfig::resolve(a.config.as_deref(), &flags)?;
            let report = run_forge(&cfg, a.family, &a.episodes)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&report.stats.to_json()).expect("stats serialize")
            );
            for e in &report.stats.errors {
                eprintln!("error: {e}");
            }
            Ok(report.ok())
        }
        Cmd::Eval(a) => {
            let out = a.out.unwrap_or_else(|| {
                let mut p = a.pred.clone().into_os_string();
                p.push(".score.json");
                p.into()
            });
            let r = run_eval(a.metric, &a.pred, &a.gt, a.rho, &out)?;
            println!("{} over {} samples: {:.6}", r.metric, r.count, r.aggregate);
            Ok(true)
        }
        Cmd::Depe {
            cmd:
                DepeCmd::Resize {
                    input,
                    meta,
                    out,
                    out_meta,
                    new_side,
                    kernel_a,
                    align_corners,
                },
        } => {
            let out_meta = out_meta.unwrap_or_else(|| out.with_extension("json"));
            let job = ResizeJob {
                input,
                meta,
                out,
                out_meta,
                new_side,
                params: ResizeParams { a: kernel_a, align_corners },
            };
            let (h, w, d) = run_depe_resize(&job)?;
            println!("wrote {h}x{w}x{d} grid to {}", job.out.display());
            Ok(true)
        }
        Cmd::Validate { episodes, samples } => {
            let r = run_validate(&episodes, samples.as_deref())?;
            println!(
                "{} episodes, {} of {} samples passed",
                r.episodes, r.passed, r.samples
            );
            for e in &r.errors {
                eprintln!("error: {e}");
            }
            Ok(r.ok())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
