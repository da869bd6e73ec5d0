use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use cellfree::orchestrator::{emit_csv, run_drop, write_csv};
use cellfree::{monte_carlo, CsiMode, MonteCarloSpec, Scheme, SimConfig};

#[derive(Parser)]
#[command(
    name = "cellfree",
    version,
    about = "Cell-free massive MIMO max-min beamforming simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scheme and print its per-iteration trajectory.
    Run(Common),
    /// Monte Carlo sweep over schemes, drops and block sizes.
    Sweep(Common),
    /// Check the configuration and run a small feasibility self-check.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the `seed` key.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    drops: usize,
    #[arg(long, default_value_t = 30)]
    iters: usize,
    /// Comma-separated scheme labels, or `all`.
    #[arg(long, default_value = "all")]
    schemes: String,
    /// Comma-separated scheduling block sizes in slots.
    #[arg(long, default_value = "4")]
    block_slots: String,
    /// `ideal` or `trained`.
    #[arg(long, default_value = "ideal")]
    csi: String,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> anyhow::Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(path) => SimConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => SimConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.scenario.seed = seed;
        }
        Ok(cfg)
    }

    fn schemes(&self) -> anyhow::Result<Vec<Scheme>> {
        if self.schemes.trim() == "all" {
            return Ok(Scheme::ALL.to_vec());
        }
        self.schemes
            .split(',')
            .map(|s| s.trim().parse::<Scheme>().map_err(anyhow::Error::from))
            .collect()
    }

    fn blocks(&self) -> anyhow::Result<Vec<f64>> {
        let blocks = self
            .block_slots
            .split(',')
            .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad block size '{s}'")))
            .collect::<anyhow::Result<Vec<f64>>>()?;
        if blocks.iter().any(|b| !(*b >= 1.0)) {
            bail!("block sizes must be at least one slot");
        }
        Ok(blocks)
    }

    fn spec(&self, cfg: &SimConfig) -> anyhow::Result<MonteCarloSpec> {
        if self.drops == 0 {
            bail!("--drops must be at least 1");
        }
        Ok(MonteCarloSpec {
            schemes: self.schemes()?,
            drops: self.drops,
            iters: self.iters,
            csi: self.csi.parse::<CsiMode>()?,
            seed: cfg.scenario.seed,
        })
    }
}

fn run(args: &Common) -> anyhow::Result<()> {
    let cfg = args.config()?;
    let spec = args.spec(&cfg)?;
    if spec.schemes.len() != 1 {
        bail!("`run` takes exactly one scheme");
    }
    let drop = run_drop(&cfg, &spec, 0)?;
    let result = &drop.runs[&spec.schemes[0]];
    eprintln!("iteration  min_dl  min_ul  objective");
    for m in std::iter::once(&result.initial).chain(&result.series) {
        eprintln!(
            "{:>9}  {:.6}  {:.6}  {:.6}",
            m.iteration, m.min_dl, m.min_ul, m.objective
        );
    }
    let report = cellfree::MonteCarloReport {
        spec: MonteCarloSpec { drops: 1, ..spec },
        drops: vec![drop],
    };
    output(args, &report, &cfg)
}

fn output(args: &Common, report: &cellfree::MonteCarloReport, cfg: &SimConfig) -> anyhow::Result<()> {
    let blocks = args.blocks()?;
    match &args.out {
        Some(path) => emit_csv(path, report, &cfg.overhead, &blocks)?,
        None => write_csv(&mut std::io::stdout().lock(), report, &cfg.overhead, &blocks)?,
    }
    Ok(())
}

fn sweep(args: &Common) -> anyhow::Result<()> {
    let cfg = args.config()?;
    let spec = args.spec(&cfg)?;
    let report = monte_carlo(&cfg, &spec)?;
    for &scheme in &spec.schemes {
        eprint!("{:<14} converged {:.6}", scheme.label(), report.converged_mean(scheme));
        for block in args.blocks()? {
            let (iter, value) = report.best_effective(scheme, &cfg.overhead, block);
            eprint!("  T={block}: {value:.6}@{iter}");
        }
        eprintln!();
    }
    output(args, &report, &cfg)
}

fn validate(args: &Common) -> anyhow::Result<()> {
    let cfg = args.config()?;
    let spec = MonteCarloSpec {
        drops: 1,
        iters: args.iters.min(3),
        ..args.spec(&cfg)?
    };
    let report = monte_carlo(&cfg, &spec)?;
    if !report.all_feasible(1e-9) {
        bail!("power audit failed");
    }
    eprintln!(
        "configuration valid; {} scheme(s) feasible over {} iteration(s)",
        spec.schemes.len(),
        spec.iters
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Validate(args) => validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
