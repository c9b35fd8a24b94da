use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use holonomy_core::geometry::BUILTIN_FAMILIES;
use holonomy_core::harness::{render_report, to_text, Experiment, ExperimentManifest, Member, Overrides};
use holonomy_core::linalg::so_residual;
use holonomy_core::subgroup::{catalog, leq, ConjugacyClass, SubgroupSpec};
use holonomy_core::{config, Error, Matrix};

const EXIT_VERDICT: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "holonomy-lab", version, about = "Numerical holonomy of metric families on a chart")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Tuning {
    /// RK4 steps per unit parameter length.
    #[arg(long)]
    steps: Option<usize>,
    /// Seed for random loops and the conjugacy search.
    #[arg(long)]
    seed: Option<u64>,
    /// Random restarts of the conjugacy search.
    #[arg(long)]
    restarts: Option<usize>,
}

impl Tuning {
    fn overrides(&self) -> Overrides {
        Overrides {
            steps: self.steps,
            seed: self.seed,
            restarts: self.restarts,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a semicontinuity experiment and write report.csv and summary.txt.
    Run {
        manifest: PathBuf,
        #[command(flatten)]
        tuning: Tuning,
        /// Output directory; overrides the manifest and $HOLONOMY_LAB_OUT.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Transport around one catalog loop and print the matrix.
    Transport {
        manifest: PathBuf,
        /// Member index, or `limit`.
        #[arg(long)]
        k: Member,
        /// Loop label; an unknown label lists the available ones.
        #[arg(long = "loop")]
        label: String,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Classify the holonomy of one member, or of the limit.
    Classify {
        manifest: PathBuf,
        #[arg(long)]
        k: Member,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Test [A] ≤ [B] between catalog subgroups of SO(dim).
    Order {
        a: String,
        b: String,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = config::RESTARTS)]
        restarts: usize,
        #[arg(long, default_value_t = config::CLASSIFY_TOL)]
        tol: f64,
        #[arg(long, default_value_t = config::SEED)]
        seed: u64,
    },
    /// List the built-in metric families.
    Families,
}

fn experiment(path: &Path, overrides: Overrides) -> holonomy_core::Result<Experiment> {
    let mut manifest = ExperimentManifest::load(path)?;
    manifest.apply(&overrides);
    manifest.resolve()
}

fn print_matrix(m: &Matrix) {
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:+.12e}")).collect();
        println!("  [{}]", cells.join(", "));
    }
}

/// Catalog entry, or `so2_block_{i}{j}` for another coordinate plane.
fn subgroup(l: usize, id: &str) -> holonomy_core::Result<SubgroupSpec> {
    let unknown = || Error::UnknownSubgroup { id: id.to_string(), dim: l };
    if let Some(found) = catalog(l)?.into_iter().find(|s| s.id == id) {
        return Ok(found);
    }
    let digits: Vec<usize> = id
        .strip_prefix("so2_block_")
        .ok_or_else(unknown)?
        .chars()
        .map(|c| c.to_digit(10).map(|d| d as usize))
        .collect::<Option<_>>()
        .ok_or_else(unknown)?;
    match digits[..] {
        [i, j] if i < j && j < l => Ok(SubgroupSpec::plane_rotations(l, i, j)),
        _ => Err(unknown()),
    }
}

fn execute(command: Command) -> holonomy_core::Result<u8> {
    match command {
        Command::Run { manifest, tuning, out } => {
            let experiment = experiment(&manifest, tuning.overrides())?;
            let report = experiment.run()?;
            let dir = out.unwrap_or_else(|| experiment.manifest.output_directory());
            let files = render_report(&report, &dir)?;
            print!("{}", to_text(&report));
            println!("wrote {} and {}", files.csv.display(), files.text.display());
            Ok(report.exit_code() as u8)
        }
        Command::Transport { manifest, k, label, steps } => {
            let experiment = experiment(&manifest, Overrides { steps, ..Overrides::default() })?;
            let t = experiment.transport(k, &label)?;
            println!("loop {label}, {k}, {} steps", t.steps_used);
            print_matrix(&t.matrix);
            println!("error_estimate {:.6e}", t.error_estimate);
            println!("so_defect {:.6e}", t.so_defect);
            Ok(0)
        }
        Command::Classify { manifest, k, tuning } => {
            let experiment = experiment(&manifest, tuning.overrides())?;
            let p = experiment.pipeline(k)?;
            let c = &p.classification;
            println!("{k}: {} (residual {:.6e})", c.id(), c.residual);
            println!("algebra dim {}, spectral gap {:.3e}", p.estimate.dim, p.estimate.spectral_gap);
            println!(
                "[Hol({k})] ≤ [{}] {} (residual {:.6e})",
                experiment.target.id,
                if p.in_target.holds { "holds" } else { "fails" },
                p.in_target.residual
            );
            println!("witness (so_residual {:.1e}):", so_residual(&c.witness, &Matrix::identity(c.witness.nrows(), c.witness.ncols())));
            print_matrix(&c.witness);
            Ok(if c.subgroup.is_some() { 0 } else { EXIT_VERDICT })
        }
        Command::Order { a, b, dim, restarts, tol, seed } => {
            let (sa, sb) = (subgroup(dim, &a)?, subgroup(dim, &b)?);
            let v = leq(&ConjugacyClass::Subgroup(sa), &ConjugacyClass::Subgroup(sb), restarts, tol, seed)?;
            println!(
                "[{a}] ≤ [{b}] in SO({dim}): {} (residual {:.6e})",
                if v.holds { "holds" } else { "does not hold" },
                v.residual
            );
            Ok(if v.holds { 0 } else { EXIT_VERDICT })
        }
        Command::Families => {
            for name in BUILTIN_FAMILIES {
                println!("{name}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
