//! `cvpoly`: shift audits, toy training, PolSAR decompositions and checks.
//!
//! Exit codes: 0 pass, 1 failed audit or check, 2 usage or configuration
//! error, 3 any other runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use cvpoly::ctensor::ComplexTensor;
use cvpoly::dataio::{read_cplx, tile_dataset};
use cvpoly::harness::audit::{audit, parse_shift_range, shift_set, Task};
use cvpoly::harness::checkpoint;
use cvpoly::harness::config::RunConfig;
use cvpoly::harness::tools::{decompose_field, generate_dataset, gradcheck_target, gumbel_check, GradTarget, Method};
use cvpoly::harness::{train, HarnessError};

#[derive(Debug, Parser)]
#[command(name = "cvpoly", version, about = "Shift-equivariant complex-valued polyphase sampling toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Circular-shift consistency audit of a checkpoint.
    Audit {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        task: String,
        /// Per-axis shift amounts, `lo..hi` inclusive.
        #[arg(long, default_value = "1..9")]
        shifts: String,
        /// CPLX inputs, `[N, C, ..]` or a single `[C, ..]`; synthetic tiles
        /// when absent.
        #[arg(long)]
        inputs: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        count: usize,
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train from a key = value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Decompose a `[3, H, W]` (HH, HV, VV) field.
    Decompose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 5)]
        window: usize,
        /// Write the RGB rendering as PNG.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare Gumbel-max frequencies with the target probabilities.
    GumbelCheck {
        #[arg(long, value_delimiter = ',', required = true)]
        probs: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.01)]
        tol: f64,
    },
    /// Reverse-mode gradients against central differences.
    Gradcheck {
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic scene and tile set.
    GenData {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e
                .downcast_ref::<HarnessError>()
                .is_some_and(|h| matches!(h, HarnessError::Config(_)));
            ExitCode::from(if usage { 2 } else { 3 })
        }
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    HarnessError::Config(msg.into()).into()
}

fn run(cmd: Command) -> anyhow::Result<bool> {
    match cmd {
        Command::Audit {
            model,
            task,
            shifts,
            inputs,
            count,
            size,
            seed,
        } => {
            let task = Task::parse(&task)?;
            let (lo, hi) = parse_shift_range(&shifts)?;
            let m = checkpoint::load(&model).with_context(|| format!("loading {}", model.display()))?;
            if Task::of(&m.spec.head) != task {
                return Err(usage(format!("checkpoint is a {:?} model", Task::of(&m.spec.head))));
            }
            let xs = match inputs {
                Some(p) => load_inputs(&p, m.spec.dims)?,
                None => {
                    if m.spec.in_channels != 3 || m.spec.dims != 2 {
                        return Err(usage("synthetic inputs need a 2-D model with 3 channels; pass --inputs"));
                    }
                    if size == 0 || size % m.spec.granularity() != 0 {
                        return Err(usage(format!("--size must be a multiple of {}", m.spec.granularity())));
                    }
                    tile_dataset(seed, count, size, Some(4))?.into_iter().map(|t| t.data).collect()
                }
            };
            let id = model.file_stem().map_or("model".into(), |s| s.to_string_lossy().into_owned());
            let report = audit(&m, &xs, &shift_set(m.spec.dims, lo, hi), &id)?;
            println!("{report}");
            Ok(report.passed)
        }
        Command::Train { config } => {
            let cfg = RunConfig::from_file(&config).with_context(|| format!("reading {}", config.display()))?;
            println!("task {:?} seed {} epochs {} config {}", cfg.task, cfg.seed, cfg.epochs, config.display());
            let run = train::train(&cfg)?;
            for r in &run.log {
                println!("{}", serde_json::to_string(r)?);
            }
            println!("test {}", serde_json::to_string(&run.test)?);
            if let Some(p) = &cfg.paths.checkpoint {
                println!("checkpoint {}", p.display());
            }
            Ok(true)
        }
        Command::Decompose {
            input,
            method,
            window,
            out,
        } => {
            let method = Method::parse(&method)?;
            let (field, _) = read_cplx(&input).with_context(|| format!("reading {}", input.display()))?;
            let d = decompose_field(&field, method, window).map_err(|e| match e {
                HarnessError::Polsar(p) => usage(p.to_string()),
                e => e.into(),
            })?;
            println!("{:?} {}×{}", d.method, d.height, d.width);
            let [r, g, b] = d.rgb_means();
            println!("rgb means {r:.2} {g:.2} {b:.2}");
            if d.classes.is_some() {
                println!("class histogram {:?}", d.histogram());
            }
            if let (Some(h), Some(a)) = (&d.entropy, &d.alpha) {
                let n = h.len().max(1) as f64;
                println!("mean H {:.4} mean alpha {:.2} deg", h.iter().sum::<f64>() / n, a.iter().sum::<f64>() / n);
            }
            if let Some(p) = out {
                write_png(&p, d.width, d.height, d.rgb)?;
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
        Command::GumbelCheck { probs, samples, seed, tol } => {
            let r = gumbel_check(&probs, samples, seed, tol)?;
            println!("samples {}", r.samples);
            for (p, f) in r.probs.iter().zip(&r.frequencies) {
                println!("pi {p:.4} freq {f:.4} diff {:+.4}", f - p);
            }
            println!("max deviation {:.5}  cdf sup distance {:.5}  tol {}", r.max_deviation, r.ks, r.tolerance);
            println!("{}", if r.passed { "PASS" } else { "FAIL" });
            Ok(r.passed)
        }
        Command::Gradcheck { target, seed } => {
            let reports = gradcheck_target(GradTarget::parse(&target)?, seed)?;
            let mut ok = true;
            for (name, r) in &reports {
                println!("{name}: max rel err {:.3e} (tol {:.0e}) {}", r.max_rel_err, r.tol, if r.passed { "PASS" } else { "FAIL" });
                for g in &r.groups {
                    println!("  {:<28} {:.3e}", g.name, g.rel_err);
                }
                if let Some(f) = &r.failure {
                    println!("  failure: {f}");
                }
                ok &= r.passed;
            }
            Ok(ok)
        }
        Command::GenData { seed, out } => {
            for p in generate_dataset(seed, &out)? {
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
    }
}

fn load_inputs(path: &Path, dims: usize) -> anyhow::Result<Vec<ComplexTensor>> {
    let (t, _) = read_cplx(path).with_context(|| format!("reading {}", path.display()))?;
    match t.rank() {
        r if r == dims + 1 => Ok(vec![t]),
        r if r == dims + 2 => Ok((0..t.shape()[0]).map(|i| t.index_axis0(i)).collect()),
        _ => Err(usage(format!("inputs of shape {:?} do not fit a {dims}-D model", t.shape()))),
    }
}

fn write_png(path: &Path, width: usize, height: usize, rgb: Vec<u8>) -> anyhow::Result<()> {
    let Some(img) = image::RgbImage::from_raw(width as u32, height as u32, rgb) else {
        bail!("RGB buffer does not match {width}×{height}");
    };
    img.save(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
