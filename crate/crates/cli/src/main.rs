//! `stopo`: catalogs, optimization runs, verification and gradient checks.
//!
//! Every subcommand resolves a config (a TOML file, or a preset when no
//! file is given), applies `--set section.key=value` overrides and `--seed`,
//! and writes its outputs into a fresh run directory under
//! `run.output_dir`.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use stopo::driver::{
    load_config, parse_config, resume_optimize, run_catalog_build, run_fdcheck, run_optimize, run_rve_sample,
    run_verify, DesignSource, ProblemConfig, RunContext, RunSummary, MANIFEST, PRESETS,
};

#[derive(Parser)]
#[command(name = "stopo", version, about = "Level-set topology optimization under random microstructure")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Microstructure catalogs.
    #[command(subcommand)]
    Catalog(CatalogCommand),
    /// Run the stochastic optimization, or resume one from its checkpoint.
    Optimize {
        #[command(flatten)]
        config: ConfigArgs,
        /// Continue the run in this directory from its checkpoint.
        #[arg(long, value_name = "RUN_DIR")]
        resume: Option<PathBuf>,
    },
    /// Monte Carlo evaluation of a saved design.
    Verify {
        #[command(flatten)]
        config: ConfigArgs,
        /// Finished run directory (its manifest is the config).
        #[arg(long, value_name = "RUN_DIR", conflicts_with_all = ["checkpoint", "initial"])]
        run: Option<PathBuf>,
        #[arg(long, conflicts_with = "initial")]
        checkpoint: Option<PathBuf>,
        /// Catalog for `--checkpoint` (otherwise built from the config).
        #[arg(long, requires = "checkpoint")]
        catalog: Option<PathBuf>,
        /// Evaluate the hole-seeded initial design.
        #[arg(long)]
        initial: bool,
        /// Number of random layouts (default `verify.samples`).
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Compare analytic design gradients with central differences.
    Fdcheck {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 20)]
        components: usize,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
    },
    /// Microstructure images.
    #[command(subcommand)]
    Rve(RveCommand),
}

#[derive(Subcommand)]
enum CatalogCommand {
    /// Build the configured catalog.
    Build {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Subcommand)]
enum RveCommand {
    /// Write the images behind the first catalog entries (RVE1 and PGM).
    Sample {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// TOML config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Preset used when no config file is given.
    #[arg(long, default_value = "desk")]
    preset: String,
    /// Override a config key, e.g. `--set optimizer.eta=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Parent directory of the run directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        if let Some(d) = &self.output_dir {
            o.push(format!("run.output_dir={:?}", d.display().to_string()));
        }
        o
    }

    fn load(&self) -> Result<ProblemConfig> {
        let overrides = self.overrides();
        let config = match &self.config {
            Some(path) => load_config(path, &overrides, self.seed)?,
            None => {
                if !PRESETS.contains(&self.preset.as_str()) {
                    bail!("unknown preset {:?}; available: {}", self.preset, PRESETS.join(", "));
                }
                parse_config(&format!("preset = {:?}", self.preset), "--preset", &overrides, self.seed)?
            }
        };
        Ok(config)
    }
}

fn context() -> Result<RunContext> {
    Ok(RunContext {
        base_dir: std::env::current_dir().context("reading the working directory")?,
        timestamp: None,
    })
}

fn print_run(s: &RunSummary) {
    println!("run directory: {}", s.run_dir.display());
    if let Some(last) = s.history.last() {
        println!(
            "iterations: {} (last objective {}, step {})",
            s.state.next_iteration, last.objective, last.step_norm
        );
    }
    if s.stopped_early {
        println!("stopped early: objective moving average settled");
    }
    print!("{}", s.report.to_text());
}

fn run(cli: Cli) -> Result<()> {
    let ctx = context()?;
    match cli.command {
        Command::Catalog(CatalogCommand::Build { config }) => {
            let (dir, catalog) = run_catalog_build(&config.load()?, &ctx)?;
            println!("run directory: {}", dir.display());
            println!("catalog: {} entries ({}D)", catalog.len(), catalog.dim);
        }
        Command::Optimize { config, resume } => {
            let summary = match resume {
                Some(dir) => {
                    if config.config.is_some() || config.seed.is_some() {
                        bail!("--resume takes its config from the run manifest; only --set may change it");
                    }
                    resume_optimize(&dir, &config.overrides)?
                }
                None => run_optimize(&config.load()?, &ctx)?,
            };
            print_run(&summary);
        }
        Command::Verify {
            config,
            run,
            checkpoint,
            catalog,
            initial,
            samples,
        } => {
            let (cfg, source) = match (run, checkpoint) {
                (Some(dir), _) => {
                    let manifest = dir.join(MANIFEST);
                    let text = std::fs::read_to_string(&manifest)
                        .with_context(|| format!("reading {}", manifest.display()))?;
                    let mut o = config.overrides();
                    if config.config.is_some() {
                        bail!("--run takes its config from the run manifest");
                    }
                    o.extend(config.seed.map(|s| format!("run.seed={s}")));
                    (parse_config(&text, &manifest.display().to_string(), &o, None)?, DesignSource::Run(dir))
                }
                (None, Some(checkpoint)) => (config.load()?, DesignSource::Checkpoint { checkpoint, catalog }),
                (None, None) if initial => (config.load()?, DesignSource::Initial),
                (None, None) => bail!("give --run, --checkpoint or --initial"),
            };
            let (dir, report) = run_verify(&cfg, &source, samples, &ctx)?;
            println!("run directory: {}", dir.display());
            print!("{}", report.to_text());
        }
        Command::Fdcheck {
            config,
            components,
            step,
        } => {
            let (dir, checks) = run_fdcheck(&config.load()?, components, step, &ctx)?;
            println!("run directory: {}", dir.display());
            for (name, r) in &checks {
                println!("{name}: max relative error {:e} over {} components", r.max_relative_error, r.rows.len());
            }
        }
        Command::Rve(RveCommand::Sample { config, count }) => {
            let dir = run_rve_sample(&config.load()?, count, &ctx)?;
            println!("run directory: {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    const TINY: [&str; 16] = [
        "--set", "mesh.nx=15", "--set", "mesh.ny=5", "--set", "design.holes_x=3", "--set", "design.holes_y=1",
        "--set", "design.hole_radius=0.3", "--set", "catalog.generator=fiber", "--set", "catalog.count=4",
        "--set", "verify.samples=5",
    ];

    fn stopo(out: &Path, args: &[&str], tiny: bool) -> Result<()> {
        let mut argv = vec!["stopo".to_string()];
        argv.extend(args.iter().map(|s| s.to_string()));
        if tiny {
            argv.extend(TINY.iter().map(|s| s.to_string()));
        }
        argv.extend(["--output-dir".to_string(), out.display().to_string()]);
        run(Cli::try_parse_from(argv)?)
    }

    fn run_dirs(out: &Path) -> Vec<PathBuf> {
        let mut d: Vec<PathBuf> = std::fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
        d.sort();
        d
    }

    fn one_new_dir(out: &Path, before: &[PathBuf]) -> PathBuf {
        let new: Vec<PathBuf> = run_dirs(out).into_iter().filter(|d| !before.contains(d)).collect();
        assert_eq!(new.len(), 1, "{new:?}");
        new.into_iter().next().unwrap()
    }

    #[test]
    fn optimize_resume_and_verify() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path();
        stopo(out, &["optimize", "--seed", "9", "--set", "optimizer.iterations=2", "--set", "optimizer.batch=2"], true)
            .unwrap();
        let run = one_new_dir(out, &[]);
        let name = run.file_name().unwrap().to_str().unwrap().to_string();
        let (stamp, hash) = name.split_once('-').unwrap();
        assert!(stamp.len() == 16 && stamp.ends_with('Z') && hash.len() == 12, "{name}");
        let history = std::fs::read_to_string(run.join("history.csv")).unwrap();
        assert_eq!(history.lines().next(), Some("iteration,objective,constraint_1,step_norm,wall_ms"));
        assert_eq!(history.lines().count(), 3);

        let resume = run.display().to_string();
        run_cli(&["optimize", "--resume", &resume, "--set", "optimizer.iterations=4"]).unwrap();
        let history = std::fs::read_to_string(run.join("history.csv")).unwrap();
        assert_eq!(history.lines().count(), 5);
        assert!(history.lines().last().unwrap().starts_with("3,"));
        assert!(run_cli(&["optimize", "--resume", &resume, "--seed", "1"]).is_err());

        let before = run_dirs(out);
        stopo(out, &["verify", "--run", &resume, "--samples", "7"], false).unwrap();
        let report = std::fs::read_to_string(one_new_dir(out, &before).join("mc_report.txt")).unwrap();
        assert!(report.starts_with("samples 7\n"), "{report}");
    }

    fn run_cli(args: &[&str]) -> Result<()> {
        let mut argv = vec!["stopo"];
        argv.extend(args);
        run(Cli::try_parse_from(argv)?)
    }

    #[test]
    fn fdcheck_rve_and_catalog_outputs() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path();
        stopo(out, &["fdcheck", "--components", "6"], true).unwrap();
        let csv = std::fs::read_to_string(one_new_dir(out, &[]).join("fdcheck.csv")).unwrap();
        assert_eq!(csv.lines().next(), Some("functional,component,analytic,fd,rel_error"));
        assert_eq!(csv.lines().count(), 1 + 4 * 6);

        let before = run_dirs(out);
        stopo(out, &["rve", "sample", "--count", "2", "--set", "catalog.resolution=16"], false).unwrap();
        let dir = one_new_dir(out, &before);
        for f in ["rve_0000.rve", "rve_0001.rve", "rve_0000.pgm", "rve_0001.pgm"] {
            assert!(dir.join(f).is_file(), "{f}");
        }

        let before = run_dirs(out);
        stopo(out, &["catalog", "build"], true).unwrap();
        let dir = one_new_dir(out, &before);
        assert!(dir.join("catalog.ctlg").is_file() && dir.join("catalog.ctlg.manifest").is_file());
        let manifest = std::fs::read_to_string(dir.join("manifest.toml")).unwrap();
        assert!(manifest.contains("command = \"catalog build\"") && manifest.contains("status = \"complete\""));
    }

    #[test]
    fn bad_invocations_fail() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path();
        let bad = out.join("bad.toml");
        std::fs::write(&bad, "preset = \"desk\"\n[optimizer]\nbatch = 0\n").unwrap();
        let e = stopo(out, &["optimize", "-c", bad.to_str().unwrap()], false).unwrap_err();
        assert!(e.to_string().contains("batch"), "{e}");
        std::fs::write(&bad, "[run]\nseed = 1\n").unwrap();
        let e = stopo(out, &["optimize", "-c", bad.to_str().unwrap()], false).unwrap_err();
        assert!(e.to_string().contains("mesh.nx") && e.to_string().contains("optimizer.batch"), "{e}");
        assert!(stopo(out, &["optimize", "--preset", "huge"], false).is_err());
        assert!(stopo(out, &["verify"], false).is_err());
        assert!(stopo(out, &["optimize", "--set", "optimizer.eta"], false).is_err());
    }
}
