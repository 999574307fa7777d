//! `coverless`: train generator pairs, hide and reveal images, and run the
//! steganalysis contrast from the shell.
//!
//! stdout carries only `key=value` lines or TSV; diagnostics go to stderr.
//! Exit codes: 0 ok, 1 error, 2 trained but unconverged, 3 no matching model.

mod error;

use clap::{Args, Parser, Subcommand};
use coverless_core::image::{psnr, read_pgm, ssim, write_pgm, ImageBuffer, Psnr};
use coverless_core::modeldb::{image_digest, ModelDatabase};
use coverless_core::protocol::{build_pair_with, hide, reveal, Direction};
use coverless_core::stegbench::{bench_contrast, BenchPair};
use coverless_core::train::{LossMode, TrainingConfig, TrainingReport};
use error::CliError;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "coverless",
    version,
    about = "Coverless image hiding with trained generator pairs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Training configuration as JSON; individual flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for training and for benchmark payloads.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Progress and training logs on stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train and register both directions of a secret/cover pair.
    TrainPair {
        #[arg(long)]
        secret: PathBuf,
        #[arg(long)]
        cover_target: PathBuf,
        /// Sender database directory, created if missing.
        #[arg(long)]
        db: PathBuf,
        /// Receiver database directory, created if missing.
        #[arg(long)]
        recv_db: PathBuf,
        #[command(flatten)]
        training: TrainingFlags,
    },
    /// Write the cover registered for a secret image.
    Hide {
        #[arg(long)]
        db: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover the secret paired with a received cover.
    Reveal {
        #[arg(long)]
        db: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Original secret, to report reconstruction quality.
        #[arg(long)]
        secret: Option<PathBuf>,
    },
    /// PSNR and SSIM between two images.
    Eval { a: PathBuf, b: PathBuf },
    /// Chi-square and monobit attacks on covers, LSB stego and natural images.
    Stegbench {
        #[arg(long)]
        db: PathBuf,
        /// Registered secret; repeat once per benchmark pair.
        #[arg(long, required = true)]
        secret: Vec<PathBuf>,
        /// Natural reference image; repeat once per secret, in the same order.
        #[arg(long = "in", required = true)]
        natural: Vec<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the database manifest as TSV.
    DbList {
        #[arg(long)]
        db: PathBuf,
    },
}

#[derive(Args)]
struct TrainingFlags {
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    n_critic: Option<usize>,
    #[arg(long)]
    clip: Option<f32>,
    #[arg(long)]
    lr_d: Option<f64>,
    #[arg(long)]
    lr_g: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    jitter: Option<f64>,
    #[arg(long)]
    target_psnr: Option<f64>,
    /// WGAN or GAN_LOG.
    #[arg(long)]
    loss_mode: Option<LossMode>,
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which here means "unconverged".
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    match &cli.command {
        Command::TrainPair {
            secret,
            cover_target,
            db,
            recv_db,
            training,
        } => train_pair(cli, secret, cover_target, db, recv_db, training),
        Command::Hide { db, input, out } => cmd_hide(cli, db, input, out),
        Command::Reveal {
            db,
            input,
            out,
            secret,
        } => cmd_reveal(cli, db, input, out, secret.as_deref()),
        Command::Eval { a, b } => cmd_eval(a, b),
        Command::Stegbench {
            db,
            secret,
            natural,
            out,
        } => cmd_stegbench(cli, db, secret, natural, out.as_deref()),
        Command::DbList { db } => cmd_db_list(db),
    }
}

fn load_image(path: &Path) -> Result<ImageBuffer, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    read_pgm(&bytes).map_err(|source| CliError::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn save_image(path: &Path, img: &ImageBuffer) -> Result<(), CliError> {
    fs::write(path, write_pgm(img)).map_err(|e| CliError::io(path, e))
}

/// Fails unless `path` could be created: its parent directory must exist.
fn check_output(path: &Path) -> Result<(), CliError> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if parent.is_dir() {
        Ok(())
    } else {
        Err(CliError::io(
            parent,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "output directory does not exist",
            ),
        ))
    }
}

/// Opens an existing database without creating it.
fn open_existing(path: &Path) -> Result<ModelDatabase, CliError> {
    if !path.is_dir() {
        return Err(CliError::io(
            path,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "database directory does not exist",
            ),
        ));
    }
    Ok(ModelDatabase::open(path)?)
}

fn training_config(cli: &Cli, flags: &TrainingFlags) -> Result<TrainingConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_slice(&bytes)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => TrainingConfig::default(),
    };
    macro_rules! apply {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = flags.$flag { cfg.$field = v; })*
        };
    }
    apply!(
        iterations => iterations,
        n_critic => n_critic,
        clip => clip_c,
        lr_d => lr_d,
        lr_g => lr_g,
        batch => batch,
        jitter => jitter_sigma,
        target_psnr => target_psnr,
        loss_mode => loss_mode
    );
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_psnr(p: Psnr) -> String {
    match p {
        Psnr::Infinite => "inf".into(),
        Psnr::Finite(v) => format!("{v:?}"),
    }
}

fn fmt_db(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v:?}")
    }
}

fn print_report(tag: &str, id: &str, r: &TrainingReport) {
    println!("{tag}_entry_id={id}");
    println!("{tag}_psnr={}", fmt_db(r.final_psnr));
    println!("{tag}_converged={}", r.converged);
    println!("{tag}_iterations={}", r.iterations_run);
}

fn train_pair(
    cli: &Cli,
    secret: &Path,
    cover_target: &Path,
    db: &Path,
    recv_db: &Path,
    flags: &TrainingFlags,
) -> Result<ExitCode, CliError> {
    let cfg = training_config(cli, flags)?;
    let secret = load_image(secret)?;
    let target = load_image(cover_target)?;
    for dir in [db, recv_db] {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut sender = ModelDatabase::open(db)?;
    let mut receiver = ModelDatabase::open(recv_db)?;
    if cli.verbose {
        eprintln!("direction\t{}", TrainingReport::HEADER.trim_end());
    }
    let out = build_pair_with(
        &secret,
        &target,
        &cfg,
        &mut sender,
        &mut receiver,
        |dir, row| {
            if cli.verbose {
                let tag = match dir {
                    Direction::Forward => "forward",
                    Direction::Reverse => "reverse",
                };
                eprintln!("{tag}\t{}", row.to_tsv().trim_end());
            }
        },
    )?;
    print_report("forward", &out.forward.entry_id, &out.forward_report);
    print_report("reverse", &out.reverse.entry_id, &out.reverse_report);
    println!("cover_digest={}", out.forward.target_digest_hex());
    if out.converged() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "warning: pair registered but did not reach {} dB PSNR",
            cfg.target_psnr
        );
        Ok(ExitCode::from(2))
    }
}

fn cmd_hide(cli: &Cli, db: &Path, input: &Path, out: &Path) -> Result<ExitCode, CliError> {
    let secret = load_image(input)?;
    check_output(out)?;
    let db = open_existing(db)?;
    let result = hide(&db, &secret)?;
    save_image(out, &result.cover)?;
    println!("entry_id={}", result.entry_id);
    println!("cover_digest={}", hex::encode(image_digest(&result.cover)));
    println!("fidelity_psnr={}", fmt_psnr(result.fidelity));
    if cli.verbose {
        eprintln!("wrote cover to {}", out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_reveal(
    cli: &Cli,
    db: &Path,
    input: &Path,
    out: &Path,
    original: Option<&Path>,
) -> Result<ExitCode, CliError> {
    let cover = load_image(input)?;
    let original = original.map(load_image).transpose()?;
    check_output(out)?;
    let db = open_existing(db)?;
    let result = reveal(&db, &cover)?;
    save_image(out, &result.reconstruction)?;
    println!("entry_id={}", result.entry_id);
    println!("match_distance={}", result.match_distance);
    if let Some(orig) = original {
        println!("psnr={}", fmt_psnr(psnr(&result.reconstruction, &orig)?));
        println!("ssim={:?}", ssim(&result.reconstruction, &orig)?);
    }
    if cli.verbose {
        eprintln!("wrote reconstruction to {}", out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(a: &Path, b: &Path) -> Result<ExitCode, CliError> {
    let (a, b) = (load_image(a)?, load_image(b)?);
    println!("psnr={} ssim={:?}", fmt_psnr(psnr(&a, &b)?), ssim(&a, &b)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_stegbench(
    cli: &Cli,
    db: &Path,
    secrets: &[PathBuf],
    naturals: &[PathBuf],
    out: Option<&Path>,
) -> Result<ExitCode, CliError> {
    if secrets.len() != naturals.len() {
        return Err(CliError::Config(format!(
            "{} secrets but {} natural images; give one --in per --secret",
            secrets.len(),
            naturals.len()
        )));
    }
    let mut pairs = Vec::with_capacity(secrets.len());
    for (i, (s, n)) in secrets.iter().zip(naturals).enumerate() {
        let stem = s
            .file_stem()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default();
        pairs.push(BenchPair {
            id: format!("{i:03}-{stem}"),
            secret: load_image(s)?,
            natural: load_image(n)?,
        });
    }
    if let Some(path) = out {
        check_output(path)?;
    }
    let db = open_existing(db)?;
    let summary = bench_contrast(&db, &pairs, &[cli.seed.unwrap_or(0)])?;
    let tsv = summary.to_tsv();
    match out {
        Some(path) => fs::write(path, tsv).map_err(|e| CliError::io(path, e))?,
        None => print!("{tsv}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_db_list(db: &Path) -> Result<ExitCode, CliError> {
    if !db.is_dir() {
        return Err(CliError::io(
            db,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "database directory does not exist",
            ),
        ));
    }
    let records = ModelDatabase::read_manifest_at(db)?;
    println!("entry_id\tkey_fingerprint\ttarget_digest\tblob_filename\tinput_width\tinput_height\tcreated_at");
    for r in records {
        println!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.entry_id,
            r.key_fingerprint,
            r.target_digest,
            r.blob_filename,
            r.input_width,
            r.input_height,
            r.created_at
        );
    }
    Ok(ExitCode::SUCCESS)
}
