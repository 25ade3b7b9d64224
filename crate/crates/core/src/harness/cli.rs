use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::mask::{
    backward_mask, diversity_table, forward_mask, mask_diversity, transposable_mask,
    BinarizationCriterion, DiversityFamily, TransposableMethod,
};
use crate::permutation::{
    brute_force_best_permutation, search_permutation, Permutation, SearchReport,
};
use crate::tensor::{Matrix, NmPattern};
use crate::train::Strategy;

use super::config::ExperimentConfig;
use super::runner::{ablate, ablation_table, run_experiment};

/// Default seed when no flag or config value sets one.
pub const SEED_ENV: &str = "NM_SPARSE_SEED";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "nm-sparse-kit",
    version,
    about = "N:M sparse masks, permutation search and sparse training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute a mask for a weight matrix in the text matrix format.
    Mask(MaskArgs),
    /// Count masks per tile for vanilla and transposable families.
    Diversity(DiversityArgs),
    /// Search a row permutation that maximizes eligible column blocks.
    Permute(PermuteArgs),
    /// Train one configuration and write its artifacts.
    Train(TrainArgs),
    /// Run baseline, +backward-mask and +permutation on one configuration.
    Ablate(TrainArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum MaskFamily {
    Vanilla,
    Transposable,
    Bimask,
}

#[derive(Debug, Args)]
struct MaskArgs {
    /// Weight matrix file.
    input: PathBuf,
    #[arg(long)]
    pattern: NmPattern,
    #[arg(long, value_enum, default_value = "vanilla")]
    family: MaskFamily,
    /// Transposable construction: exact, approx or flow.
    #[arg(long, default_value = "approx")]
    method: TransposableMethod,
    /// Backward criterion: weight, gradient, multinomial or random.
    #[arg(long, default_value = "weight")]
    criterion: String,
    /// Weight gradient file for the gradient criterion.
    #[arg(long)]
    gradient: Option<PathBuf>,
    /// Search this many random permutations before building the backward mask.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiversityArgs {
    #[arg(long, required_unless_present = "table")]
    pattern: Option<NmPattern>,
    #[arg(long, default_value = "vanilla")]
    family: DiversityFamily,
    /// Tile height; defaults to M.
    #[arg(long)]
    tile_rows: Option<usize>,
    /// Print the vanilla/transposable comparison for the standard patterns.
    #[arg(long, conflicts_with = "pattern")]
    table: bool,
}

#[derive(Debug, Args)]
struct PermuteArgs {
    /// Weight matrix file.
    input: PathBuf,
    #[arg(long)]
    pattern: NmPattern,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Exhaustive search instead of random candidates (at most 8 rows).
    #[arg(long)]
    oracle: bool,
    /// Treat the input as already masked.
    #[arg(long)]
    raw: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    pattern: Option<NmPattern>,
    /// `synthetic` or `idx:<dir>`.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(e)) => {
            let _ = writeln!(err, "usage error: {e}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(err, "error: {e}");
            if matches!(e, Error::Diverged { .. }) {
                EXIT_DIVERGED
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

enum Failure {
    /// Bad flags, seed variable or config file.
    Usage(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| {
            Error::InvalidArgument(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
        }),
        Err(_) => Ok(None),
    }
}

fn seed_or_env(flag: Option<u64>) -> Result<u64> {
    Ok(flag.or(env_seed()?).unwrap_or(0))
}

fn read_matrix(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Matrix::from_text(&text)
}

fn io_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn dispatch(command: Command, out: &mut dyn Write) -> std::result::Result<(), Failure> {
    match command {
        Command::Mask(a) => Ok(mask_cmd(a, out)?),
        Command::Diversity(a) => Ok(diversity_cmd(a, out)?),
        Command::Permute(a) => Ok(permute_cmd(a, out)?),
        Command::Train(a) => {
            let cfg = experiment_config(&a).map_err(Failure::Usage)?;
            let summary = run_experiment(&cfg)?;
            Ok(io_out(out, &format!("{summary}\n"))?)
        }
        Command::Ablate(a) => {
            let cfg = experiment_config(&a).map_err(Failure::Usage)?;
            Ok(io_out(out, &ablation_table(&ablate(&cfg)?))?)
        }
    }
}

fn mask_cmd(a: MaskArgs, out: &mut dyn Write) -> Result<()> {
    let w = read_matrix(&a.input)?;
    let seed = seed_or_env(a.seed)?;
    let text = match a.family {
        MaskFamily::Vanilla => forward_mask(&w, a.pattern)?.to_text(),
        MaskFamily::Transposable => transposable_mask(&w, a.pattern, a.method)?.to_text(),
        MaskFamily::Bimask => {
            let fwd = forward_mask(&w, a.pattern)?;
            let perm = match a.k {
                Some(k) => {
                    search_permutation(
                        &fwd.apply(&w)?,
                        a.pattern,
                        k,
                        &Permutation::identity(w.rows()),
                        seed,
                    )?
                    .chosen
                }
                None => Permutation::identity(w.rows()),
            };
            let criterion = BinarizationCriterion::parse(&a.criterion, seed)?;
            let grad = a.gradient.as_deref().map(read_matrix).transpose()?;
            let bwd = backward_mask(&w, &fwd, &perm, criterion, grad.as_ref())?;
            format!("{}{}# permutation: {perm}\n", fwd.to_text(), bwd.to_text())
        }
    };
    match a.output {
        Some(path) => std::fs::write(&path, text).map_err(|e| Error::io(path, e)),
        None => io_out(out, &text),
    }
}

fn diversity_cmd(a: DiversityArgs, out: &mut dyn Write) -> Result<()> {
    if a.table {
        let mut s = String::from("pattern,vanilla,transposable,log10_ratio\n");
        for row in diversity_table()? {
            s.push_str(&format!(
                "{},{},{},{:.3}\n",
                row.pattern,
                row.vanilla,
                row.transposable,
                row.log10_ratio()
            ));
        }
        return io_out(out, &s);
    }
    let pattern = a.pattern.expect("clap requires pattern without --table");
    let count = mask_diversity(pattern, a.family, a.tile_rows.unwrap_or(pattern.m()))?;
    io_out(out, &format!("{count}\n"))
}

fn permute_cmd(a: PermuteArgs, out: &mut dyn Write) -> Result<()> {
    let w = read_matrix(&a.input)?;
    let masked = if a.raw {
        w
    } else {
        forward_mask(&w, a.pattern)?.apply(&w)?
    };
    let report: SearchReport = if a.oracle {
        brute_force_best_permutation(&masked, a.pattern)?
    } else {
        let seed = seed_or_env(a.seed)?;
        search_permutation(
            &masked,
            a.pattern,
            a.k,
            &Permutation::identity(masked.rows()),
            seed,
        )?
    };
    io_out(
        out,
        &format!("{}\n{}\n", SearchReport::CSV_HEADER, report.to_csv_row()),
    )
}

/// Defaults, then `NM_SPARSE_SEED`, then the config file, then flags.
fn experiment_config(a: &TrainArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(seed) = env_seed()? {
        cfg.train.seed = seed;
    }
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        cfg = cfg.with_text(&text)?;
    }
    if let Some(s) = a.strategy {
        cfg.strategy = s;
    }
    if let Some(p) = a.pattern {
        cfg.pattern = p;
    }
    if let Some(d) = &a.dataset {
        cfg = cfg.with_text(&format!("dataset = {d}\n"))?;
    }
    if let Some(o) = &a.out {
        cfg.out = Some(o.clone());
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    cfg.validate()?;
    Ok(cfg)
}
