//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use trajaudit_core::audit::Tester;
use trajaudit_core::stats::DistanceMetric;

use crate::bench::{run_grid, write_bench, Artifacts};
use crate::config::{parse_config, Overrides, RunConfig};
use crate::error::Result;
use crate::pipeline::{audit_cmd, gen_data, train_critic_cmd, train_shadows_cmd};

#[derive(Debug, Parser)]
#[command(name = "trajaudit", version, about = "Trajectory-level dataset auditing for offline RL policies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the benchmark datasets.
    GenData,
    /// Train shadow policies and a held-out policy per dataset.
    TrainShadows,
    /// Train the fingerprinting critic per dataset.
    TrainCritic,
    /// Audit a suspect policy against the target dataset.
    Audit,
    /// Run the TPR/TNR benchmark grid.
    Bench {
        /// Train every artifact in memory instead of loading them from --out.
        #[arg(long)]
        train: bool,
    },
    /// Print the fully resolved configuration as TOML.
    Config,
}

#[derive(Debug, Args)]
pub struct Flags {
    /// TOML configuration file; every key is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for all artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_metric)]
    pub metric: Option<DistanceMetric>,
    #[arg(long, global = true, value_parser = parse_tester)]
    pub tester: Option<Tester>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Number of shadow models used by the audit.
    #[arg(long, global = true)]
    pub shadows: Option<usize>,
    /// Audited prefix of each trajectory, in (0, 1].
    #[arg(long, global = true)]
    pub fraction: Option<f64>,
    #[arg(long, global = true)]
    pub distort_sigma: Option<f64>,
    #[arg(long, global = true)]
    pub ensemble_k: Option<usize>,
    /// Dataset to audit (and to restrict training to).
    #[arg(long, global = true)]
    pub target: Option<String>,
    /// `holdout`, a dataset name, or a policy file.
    #[arg(long, global = true)]
    pub suspect: Option<String>,
}

fn parse_metric(s: &str) -> std::result::Result<DistanceMetric, String> {
    s.parse().map_err(|e: trajaudit_core::Error| e.to_string())
}

fn parse_tester(s: &str) -> std::result::Result<Tester, String> {
    s.parse().map_err(|e: trajaudit_core::Error| e.to_string())
}

impl Flags {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            metric: self.metric,
            tester: self.tester,
            alpha: self.alpha,
            shadows: self.shadows,
            fraction: self.fraction,
            distort_sigma: self.distort_sigma,
            ensemble_k: self.ensemble_k,
            target: self.target.clone(),
            suspect: self.suspect.clone(),
        }
    }
}

/// Datasets a training step touches: the target if one was given on the
/// command line, otherwise all of them.
fn selected(cfg: &RunConfig, flags: &Flags) -> Result<Vec<usize>> {
    match &flags.target {
        Some(name) => Ok(vec![cfg.dataset_index(name)?]),
        None => Ok((0..cfg.num_datasets()).collect()),
    }
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = parse_config(cli.flags.config.as_deref(), &cli.flags.overrides())?;
    match &cli.command {
        Command::GenData => print_paths(&gen_data(&cfg, &selected(&cfg, &cli.flags)?)?),
        Command::TrainShadows => print_paths(&train_shadows_cmd(&cfg, &selected(&cfg, &cli.flags)?)?),
        Command::TrainCritic => print_paths(&train_critic_cmd(&cfg, &selected(&cfg, &cli.flags)?)?),
        Command::Audit => {
            let (path, doc) = audit_cmd(&cfg)?;
            let s = &doc.summary;
            println!(
                "{} vs {}: {} member, {} non-member, {} skipped; member fraction {:.3}; pirated: {}",
                doc.target.dataset,
                doc.suspect.label,
                s.members,
                s.non_members,
                s.skipped,
                doc.dataset_verdict.member_fraction,
                if doc.dataset_verdict.pirated { "yes" } else { "no" },
            );
            println!("wrote {}", path.display());
        }
        Command::Bench { train } => {
            let art = if *train {
                Artifacts::train(&cfg)?
            } else {
                Artifacts::load(&cfg)?
            };
            let report = run_grid(&cfg, &art)?;
            print!("{}", report.to_tsv());
            let (tsv, json) = write_bench(&cfg, &report)?;
            print_paths(&[tsv, json]);
        }
        Command::Config => print!("{}", cfg.to_toml()),
    }
    Ok(())
}
