use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sheaflab_core::harness::{
    format_summary, run_grid, ExperimentConfig, GridOutcome, MetricsRecord, ModelSpec, Preset,
};
use sheaflab_core::synth::{generate_dataset, DegreeMode, FeatureMode, SyntheticConfig};
use sheaflab_core::{checks, Error, Execution};

const EXIT_CONFIG: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;
const EXIT_NON_FINITE: u8 = 4;

#[derive(Parser)]
#[command(name = "sheaflab", version, about = "Sheaf neural networks vs. GCNs on synthetic signed graphs")]
#[command(args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every model over the noise grid and write per-epoch metrics as CSV.
    Run(RunArgs),
    /// Generate one synthetic dataset from a JSON config.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the randomized invariant and oracle checks.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "desk")]
    preset: String,
    /// linear or nonlinear.
    #[arg(long)]
    feature_mode: Option<String>,
    /// Degree used to scale the sheaf diffusion: weighted or unweighted.
    #[arg(long)]
    degree_mode: Option<String>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Comma-separated feature noise variances.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    sigma_feat: Option<Vec<f64>>,
    /// Comma-separated edge weight noise variances.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    sigma_w: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated model names, e.g. SheafNN-32,GCN-32 or GCN-2x8.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    log_interval: Option<usize>,
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    /// Force single-threaded kernels.
    #[arg(long)]
    sequential: bool,
    /// Suppress progress output on stderr.
    #[arg(long, short)]
    quiet: bool,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut c = ExperimentConfig::preset(self.preset.parse::<Preset>()?);
        if let Some(m) = &self.feature_mode {
            c.feature_mode = m.parse::<FeatureMode>()?;
        }
        if let Some(m) = &self.degree_mode {
            c.degree_mode = m.parse::<DegreeMode>()?;
        }
        if let Some(models) = &self.models {
            c.models = models.iter().map(|m| ModelSpec::parse(m)).collect::<Result<_, _>>()?;
        }
        c.nodes = self.nodes.unwrap_or(c.nodes);
        c.epochs = self.epochs.unwrap_or(c.epochs);
        c.lr = self.lr.unwrap_or(c.lr);
        c.trials = self.trials.unwrap_or(c.trials);
        c.seed = self.seed.unwrap_or(c.seed);
        c.log_interval = self.log_interval.unwrap_or(c.log_interval);
        c.sigma_feat_sq = self.sigma_feat.clone().unwrap_or(c.sigma_feat_sq);
        c.sigma_w_sq = self.sigma_w.clone().unwrap_or(c.sigma_w_sq);
        c.validate()?;
        Ok(c)
    }
}

fn write_csv(path: &Path, records: &[MetricsRecord]) -> Result<(), Box<dyn std::error::Error>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    if records.is_empty() {
        w.write_record(sheaflab_core::harness::CSV_HEADER.split(','))?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Exit status for a finished grid: a (cell, model) with no completed trial
/// is degenerate (3) unless every one of its trials diverged (4).
fn grid_status(config: &ExperimentConfig, out: &GridOutcome) -> u8 {
    let summary = out.summary(config);
    let empty: Vec<_> = summary.iter().filter(|s| s.n == 0).collect();
    let all_non_finite = |s: &&sheaflab_core::harness::CellSummary| {
        out.failures
            .iter()
            .filter(|f| f.cell == (s.sigma_feat_sq, s.sigma_w_sq) && f.model == s.model)
            .all(|f| f.non_finite)
    };
    if empty.iter().any(|s| !all_non_finite(s)) {
        EXIT_DEGENERATE
    } else if !empty.is_empty() {
        EXIT_NON_FINITE
    } else {
        0
    }
}

fn run(args: RunArgs) -> ExitCode {
    let config = match args.config() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let exec = if args.sequential { Execution::Sequential } else { Execution::default() };
    let quiet = args.quiet;
    let outcome = run_grid(&config, exec, |done, total| {
        if !quiet {
            eprint!("\rdatasets {done}/{total}");
            if done == total {
                eprintln!();
            }
        }
    });
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    for f in &outcome.failures {
        eprintln!(
            "trial failed: sigma_feat_sq={} sigma_w_sq={} model={} trial={}: {}",
            f.cell.0, f.cell.1, f.model, f.trial, f.error
        );
    }
    if let Err(e) = write_csv(&args.out, &outcome.records) {
        eprintln!("error: writing {}: {e}", args.out.display());
        return ExitCode::FAILURE;
    }
    print!("{}", format_summary(&outcome.summary(&config)));
    ExitCode::from(grid_status(&config, &outcome))
}

fn gen(config: &Path, out: &Path) -> ExitCode {
    let cfg: SyntheticConfig = match fs::read_to_string(config)
        .map_err(Error::from)
        .and_then(|s| serde_json::from_str(&s).map_err(Error::from))
    {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let data = match generate_dataset(&cfg) {
        Ok(d) => d,
        Err(e @ Error::InvalidConfig(_)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_DEGENERATE);
        }
    };
    match data.to_json_string().map_err(|e| e.to_string()).and_then(|s| fs::write(out, s).map_err(|e| e.to_string())) {
        Ok(()) => {
            println!(
                "{} nodes, {} edges, {} train / {} test -> {}",
                data.num_nodes(),
                data.graph.num_edges(),
                data.train_idx.len(),
                data.test_idx.len(),
                out.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: writing {}: {e}", out.display());
            ExitCode::FAILURE
        }
    }
}

fn check(seed: u64) -> ExitCode {
    let mut stdout = io::stdout().lock();
    let mut ok = true;
    for c in [
        checks::operator_suite as fn(u64) -> checks::CheckOutcome,
        checks::spectral_duality,
        checks::gradient_suite,
        checks::reduction_identity,
        checks::generator_invariants,
    ]
    .iter()
    .enumerate()
    .map(|(i, f)| f(seed.wrapping_add(i as u64)))
    {
        ok &= c.passed;
        let _ = writeln!(stdout, "{c}");
        let _ = stdout.flush();
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args),
        Command::Gen { config, out } => gen(&config, &out),
        Command::Check { seed } => check(seed),
    }
}
