use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use stidi_core::encoding::encode_image;
use stidi_core::harness::metrics::write_eval;
use stidi_core::harness::{evaluate, export_packed, load_datasets, train};
use stidi_core::verify::{run_all, VerifyConfig};
use stidi_core::{Checkpoint, Dataset, EncodingConfig, Mode, RunConfig, Split};

#[derive(Parser)]
#[command(name = "stidi", version, about = "Single-spike temporal SNN trainer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network and write its best checkpoint and metrics.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Train with sign weights and scaling factors.
        #[arg(long)]
        binary: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Override a config entry, e.g. `--set epochs=5`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint on an IDX dataset directory.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        metrics_out: Option<PathBuf>,
        #[arg(long, default_value_t = 255)]
        intensity_max: u32,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Print the spike raster of a grayscale image.
    Encode {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 100)]
        t_max: u32,
        #[arg(long, default_value_t = 255)]
        intensity_max: u32,
    },
    /// Write the bit-packed form of a binary checkpoint.
    Pack {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle, gradient and smoke suites.
    Verify {
        #[arg(long, default_value_t = 50)]
        cases: u64,
        #[arg(long, default_value_t = 100)]
        resolution: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Train { config, binary, seed, out, overrides } => {
            let mut cfg = RunConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
            for kv in &overrides {
                let Some((k, v)) = kv.split_once('=') else { bail!("--set expects KEY=VALUE, got {kv:?}") };
                cfg.set(k.trim(), v.trim())?;
            }
            if binary {
                cfg.mode = Mode::Binary;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let (tr, te) = load_datasets(&cfg)?;
            log::info!("{} training / {} test samples, architecture {}", tr.len(), te.len(), cfg.architecture);
            let outcome = train(&cfg, &tr, &te)?;
            outcome.write_dir(&cfg, &out)?;
            println!("{}", outcome.metrics.summary());
            println!("wrote {}", out.display());
        }
        Command::Eval { checkpoint, data, split, metrics_out, intensity_max, threads } => {
            let ckpt = Checkpoint::load(&checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let ds = Dataset::load_split(&data, split)?;
            let enc = EncodingConfig::new(ckpt.network.t_max, intensity_max)?;
            let m = evaluate(&ckpt.network, &ds, &enc, threads)?;
            println!("accuracy {:.4} on {} samples", m.accuracy(), m.samples());
            println!("mean total spikes {:.1} (required {:.1})", m.mean_total_emitted(), m.mean_total_required());
            if let Some(dir) = metrics_out {
                write_eval(&m, &dir)?;
                println!("wrote {}", dir.display());
            }
        }
        Command::Encode { image, t_max, intensity_max } => {
            let img = load_gray(&image)?;
            let enc = EncodingConfig::new(t_max, intensity_max)?;
            let (w, h) = img.dimensions();
            let raster = encode_image(img.as_raw(), h as usize, w as usize, &enc)?;
            let width = t_max.to_string().len();
            for row in 0..h as usize {
                let line: Vec<String> = (0..w as usize)
                    .map(|col| match raster.time(row * w as usize + col) {
                        Some(t) => format!("{t:>width$}"),
                        None => format!("{:>width$}", "."),
                    })
                    .collect();
                println!("{}", line.join(" "));
            }
            println!("{} of {} pixels spike", raster.spike_count(), raster.len());
        }
        Command::Pack { checkpoint, out } => {
            let ckpt = Checkpoint::load(&checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
            let fp = export_packed(&ckpt, &out)?;
            println!("{}", fp.report());
            println!("wrote {}", out.display());
        }
        Command::Verify { cases, resolution, seed } => {
            if resolution < 10 {
                bail!("--resolution must be at least 10");
            }
            let results = run_all(&VerifyConfig { cases, resolution, seed });
            for r in &results {
                println!("{r}");
            }
            return Ok(results.iter().all(|r| r.passed));
        }
    }
    Ok(true)
}

fn load_gray(path: &Path) -> Result<image::GrayImage> {
    Ok(image::open(path).with_context(|| format!("reading {}", path.display()))?.into_luma8())
}
