use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nslab::Result;
use nslab_cli::analyze::{analyze, group_means};
use nslab_cli::channels::{fit_channels, predict};
use nslab_cli::config::{ExperimentConfig, Overrides};
use nslab_cli::data::gen_data;
use nslab_cli::report::report;
use nslab_cli::train::train;

#[derive(Parser, Debug)]
#[command(name = "nslab", version, about = "Nonsmoothness experiments on small conv autoencoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (INI).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; NSLAB_OUT takes precedence.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Use the full-size dataset, video and realization counts.
    #[arg(long, global = true)]
    paper_scale: bool,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Generate training / validation images and test videos.
    GenData,
    /// Train every realization of every configured setup.
    Train,
    /// AveNonSmooth of original and reconstructed videos.
    Analyze,
    /// Fit the ReLU and max-pool channel models from probed SMPs.
    FitChannels,
    /// Conv/transpose-conv R², Monte Carlo prediction, weight correlation.
    Predict,
    /// Validate all tables and write the manifest.
    Report,
    /// gen-data, train, analyze, fit-channels, predict and report in order.
    All,
}

fn run(command: Command, cfg: &ExperimentConfig) -> Result<()> {
    match command {
        Command::GenData => {
            let s = gen_data(cfg)?;
            println!("wrote {} training images, {} validation images, {} videos", s.train_images, s.val_images, s.videos);
        }
        Command::Train => {
            for run in train(cfg)? {
                println!(
                    "{} r{}: best val MSE {:.6} at epoch {}",
                    run.setup, run.realization, run.best_val_loss, run.best_epoch
                );
            }
        }
        Command::Analyze => {
            for (group, mean) in group_means(&analyze(cfg)?) {
                println!("{group}: mean AveNonSmooth {mean:.6e}");
            }
        }
        Command::FitChannels => {
            for s in fit_channels(cfg)? {
                let p = &s.params;
                println!(
                    "r{}: relu theta={:.4} sigma={:.4e} ({} pairs); maxpool {} pairs",
                    s.realization, p.relu.theta, p.relu.sigma, s.relu_pairs, s.pool_pairs
                );
                println!("  split a={:.4e}", p.maxpool.a);
                if let Some(l) = p.conv_line {
                    println!("  conv line: slope={:.4} intercept={:.4e}", l.slope, l.intercept);
                }
                match p.maxpool.small {
                    Some(b) => println!("  x < a: mu0={:.4e} sigma0={:.4e}", b.mu0, b.sigma0),
                    None => println!("  x < a: unfit (too few pairs)"),
                }
                match p.maxpool.mixture {
                    Some(m) => println!(
                        "  x >= a: pi0={:.4} sigma1={:.4e} mu2={:.4e} sigma2={:.4e}",
                        m.pi0, m.sigma1, m.mu2, m.sigma2
                    ),
                    None => println!("  x >= a: unfit (too few pairs)"),
                }
            }
        }
        Command::Predict => {
            let s = predict(cfg)?;
            for row in &s.r2 {
                let reference = row.reference.map_or(String::new(), |p| format!(" (reference {p})"));
                println!("R2 {} {}: {:.4}{reference}", row.layer, row.mode, row.fit.r2);
            }
            for w in s.wasserstein.iter().filter(|w| w.realization.is_none()) {
                println!("W1 predicted vs real: {:.4e} = {:.3} x mean SMP", w.w1, w.ratio());
            }
            for (_, n, p) in s.pearson.iter().filter(|p| p.0.is_none()) {
                println!("Pearson(|W|, input SMP) over {n} pairs: {p:.4} (reference 0.16)");
            }
        }
        Command::Report => {
            let s = report(cfg)?;
            println!("config sha256 {}", s.config_sha256);
            for t in &s.tables {
                println!("{} ({} rows)", t.path.display(), t.rows);
            }
        }
        Command::All => {
            for c in [Command::GenData, Command::Train, Command::Analyze, Command::FitChannels, Command::Predict, Command::Report] {
                run(c, cfg)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        seed: cli.seed,
        out: std::env::var_os("NSLAB_OUT").map(PathBuf::from).or(cli.out),
        paper_scale: cli.paper_scale,
    };
    let result = ExperimentConfig::load(cli.config.as_deref(), &overrides).and_then(|cfg| {
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(jobs) = cli.jobs {
            pool = pool.num_threads(jobs.max(1));
        }
        let pool = pool.build().map_err(|e| nslab::Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| run(cli.command, &cfg))
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
