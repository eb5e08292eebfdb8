//! Run directories and the end-to-end stages behind the CLI subcommands.
//!
//! Every command writes into a fresh `{output_dir}/{timestamp}-{hash}`
//! directory holding `manifest.toml`: the fully resolved config plus a
//! `[provenance]` table whose `status` is `running`, `complete` or
//! `FAILED`. Replaying the manifest as a config reproduces the outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::{parse_config, ProblemConfig};
use super::monte_carlo::{monte_carlo_evaluate, McReport};
use super::sampling::sample_layouts;
use crate::error::{Error, Result};
use crate::homogenization::{build_catalog, read_catalog, write_catalog, MicrostructureCatalog};
use crate::macro_model::{
    assemble_solve, evaluate, perimeter_penalty, regularization_penalty, seed_holes, to_design_units,
    write_density_pgm, write_vtk, DesignFields, MacroProblem, StiffnessLibrary,
};
use crate::microstructure::{write_pgm, write_rve};
use crate::optim::{
    calibrate_normalizer, history_header, history_row, read_checkpoint, run_loop, write_checkpoint, IterationRecord,
    RunState,
};
use crate::rng::{Purpose, RandomStream};
use crate::sensitivity::{fd_check, grad_mass, grad_perimeter, grad_reg, grad_strain_energy, FdReport};

pub const MANIFEST: &str = "manifest.toml";
pub const CATALOG: &str = "catalog.ctlg";
pub const HISTORY: &str = "history.csv";
pub const CHECKPOINT: &str = "checkpoint.ckpt";
pub const DESIGN_VTK: &str = "design.vtk";
pub const DESIGN_PGM: &str = "design.pgm";
pub const MC_REPORT: &str = "mc_report.txt";

/// Where a command resolves relative paths and which timestamp names its
/// run directory (the current UTC time when `None`).
#[derive(Debug, Clone, Default)]
pub struct RunContext {
    pub base_dir: PathBuf,
    pub timestamp: Option<String>,
}

impl RunContext {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_relative() {
            self.base_dir.join(p)
        } else {
            p.to_path_buf()
        }
    }
}

/// An open run directory with its manifest.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub path: PathBuf,
    pub config: ProblemConfig,
    pub command: String,
    provenance: toml::Table,
}

impl RunDir {
    /// Creates `{output_dir}/{timestamp}-{hash}` (with a numeric suffix if
    /// taken) and writes a `running` manifest.
    pub fn create(config: &ProblemConfig, command: &str, ctx: &RunContext) -> Result<Self> {
        let hash = config.hash()?;
        let stamp = ctx
            .timestamp
            .clone()
            .unwrap_or_else(|| chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string());
        let root = ctx.resolve(&config.run.output_dir);
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let mut path = root.join(format!("{stamp}-{hash}"));
        let mut suffix = 1;
        loop {
            match std::fs::create_dir(&path) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    path = root.join(format!("{stamp}-{hash}-{suffix}"));
                    suffix += 1;
                }
                Err(e) => return Err(Error::io(&path, e)),
            }
        }
        let mut dir = Self {
            path,
            config: config.clone(),
            command: command.to_string(),
            provenance: toml::Table::new(),
        };
        dir.note("command", command);
        dir.note("config_hash", hash);
        dir.note("seed", config.run.seed as i64);
        dir.note("version", env!("CARGO_PKG_VERSION"));
        dir.note("started", chrono::Utc::now().to_rfc3339());
        dir.set_status("running")?;
        Ok(dir)
    }

    /// Reopens an existing run directory from its manifest; `overrides`
    /// may change keys (for instance to extend the iteration count).
    pub fn open(path: &Path, overrides: &[String]) -> Result<Self> {
        let manifest = path.join(MANIFEST);
        let text = std::fs::read_to_string(&manifest).map_err(|e| Error::io(&manifest, e))?;
        let config = parse_config(&text, &manifest.display().to_string(), overrides, None)?;
        let table: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", manifest.display())))?;
        let provenance = match table.get("provenance") {
            Some(toml::Value::Table(t)) => t.clone(),
            _ => toml::Table::new(),
        };
        let command = provenance.get("command").and_then(|v| v.as_str()).unwrap_or("optimize").to_string();
        let mut dir = Self {
            path: path.to_path_buf(),
            config,
            command,
            provenance,
        };
        dir.note("config_hash", dir.config.hash()?);
        Ok(dir)
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Records a provenance entry; written with the next status change.
    pub fn note(&mut self, key: &str, value: impl Into<toml::Value>) {
        self.provenance.insert(key.to_string(), value.into());
    }

    pub fn set_status(&mut self, status: &str) -> Result<()> {
        self.note("status", status);
        if status != "running" {
            self.note("finished", chrono::Utc::now().to_rfc3339());
        }
        let mut table = toml::Table::try_from(&self.config).map_err(|e| Error::Config(e.to_string()))?;
        table.insert("provenance".into(), toml::Value::Table(self.provenance.clone()));
        let text = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
        crate::io::write_file(&self.file(MANIFEST), text.as_bytes())
    }

    /// Runs `body`, then marks the manifest `complete`, or `FAILED` with the
    /// error message (artifacts written so far are kept).
    pub fn finish<T>(&mut self, body: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        match body(self) {
            Ok(v) => {
                self.provenance.remove("error");
                self.set_status("complete")?;
                Ok(v)
            }
            Err(e) => {
                self.note("error", e.to_string());
                // The original error matters more than a failed manifest write.
                let _ = self.set_status("FAILED");
                Err(e)
            }
        }
    }
}

pub fn master_stream(config: &ProblemConfig) -> RandomStream {
    RandomStream::new(config.run.seed, 0)
}

/// Builds the configured catalog or loads `catalog.path`.
pub fn obtain_catalog(config: &ProblemConfig, ctx: &RunContext) -> Result<MicrostructureCatalog> {
    match &config.catalog.path {
        Some(p) => read_catalog(&ctx.resolve(p)),
        None => build_catalog(config.catalog.count, &config.generator(), master_stream(config), config.exec()),
    }
}

/// Hole-seeded initial design in design units.
pub fn initial_design(config: &ProblemConfig, problem: &MacroProblem) -> Result<Vec<f64>> {
    let d = &config.design;
    let phys = seed_holes(&problem.mesh, d.holes_x, d.holes_y, d.hole_radius)?;
    Ok(to_design_units(&phys, problem.mesh.h, problem.bounds))
}

/// Design VTK (filtered level set, densities) and graymap.
pub fn export_design(dir: &Path, problem: &MacroProblem, theta: &[f64]) -> Result<()> {
    let fields = DesignFields::new(problem, theta)?;
    write_vtk(&dir.join(DESIGN_VTK), &problem.mesh, &fields.filtered, &fields.density)?;
    write_density_pgm(&dir.join(DESIGN_PGM), &problem.mesh, &fields.density)
}

pub fn write_report(path: &Path, report: &McReport, psi0: f64, keep_raw: bool) -> Result<()> {
    let mut text = report.to_text();
    text += &format!("psi0 {psi0}\n");
    if keep_raw {
        text += "layout,objective,strain_energy,constraints\n";
        for (i, s) in report.raw.iter().enumerate() {
            let g: Vec<String> = s.constraints.iter().map(|c| c.to_string()).collect();
            text += &format!("{i},{},{},{}\n", s.objective, s.strain_energy, g.join(";"));
        }
    }
    crate::io::write_file(path, text.as_bytes())
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub run_dir: PathBuf,
    /// Iterations logged by this invocation.
    pub history: Vec<IterationRecord>,
    pub state: RunState,
    pub report: McReport,
    pub stopped_early: bool,
}

struct HistoryLog {
    out: BufWriter<File>,
    path: PathBuf,
}

impl HistoryLog {
    fn open(path: PathBuf, constraints: usize, append: bool) -> Result<Self> {
        let exists = append && path.is_file();
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(exists)
            .write(true)
            .truncate(!exists)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut log = Self {
            out: BufWriter::new(file),
            path,
        };
        if !exists {
            log.line(&history_header(constraints))?;
        }
        Ok(log)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Catalog, seeded design, optimization, Monte Carlo verification and
/// exports. With `resume`, continues the run directory from its checkpoint.
fn optimize_in(dir: &mut RunDir, ctx: &RunContext, resume: bool) -> Result<RunSummary> {
    let config = dir.config.clone();
    let exec = config.exec();
    let catalog = if resume {
        read_catalog(&dir.file(CATALOG))?
    } else {
        let c = obtain_catalog(&config, ctx)?;
        write_catalog(&c, &dir.file(CATALOG))?;
        c
    };
    dir.note("catalog_entries", catalog.len() as i64);
    let lib = StiffnessLibrary::new(&catalog)?;
    let mut problem = config.problem()?;
    let spec = config.optimizer_spec()?;
    let master = master_stream(&config);
    let state = if resume {
        let s = read_checkpoint(&dir.file(CHECKPOINT))?;
        if s.stream != master {
            return Err(Error::Config(format!(
                "checkpoint was written with seed {} but the config has {}",
                s.stream.seed, config.run.seed
            )));
        }
        s
    } else {
        RunState::new(initial_design(&config, &problem)?, &spec, problem.bounds, master)?
    };

    let (history, state, stopped_early) = if spec.iterations as u64 > state.next_iteration {
        let mut log = HistoryLog::open(dir.file(HISTORY), 1, resume)?;
        let every = config.optimizer.checkpoint_every as u64;
        let ckpt = dir.file(CHECKPOINT);
        let outcome = run_loop(&mut problem, &lib, &spec, state, exec, |record, state| {
            log.line(&history_row(record))?;
            if every > 0 && state.next_iteration % every == 0 {
                write_checkpoint(state, &ckpt)?;
            }
            Ok(())
        })?;
        write_checkpoint(&outcome.state, &ckpt)?;
        (outcome.history, outcome.state, outcome.stopped_early)
    } else {
        let mut state = state;
        let psi0 = match state.psi0 {
            Some(p) => p,
            None => calibrate_normalizer(&problem, &lib, &state.theta, state.layout_stream(0), spec.batch, exec)?,
        };
        state.psi0 = Some(psi0);
        problem.psi0 = psi0;
        (Vec::new(), state, false)
    };
    let psi0 = state.psi0.expect("calibrated");
    dir.note("psi0", psi0);
    dir.note("iterations_completed", state.next_iteration as i64);
    dir.note("stopped_early", stopped_early);

    export_design(&dir.path, &problem, &state.theta)?;
    let report = monte_carlo_evaluate(&problem, &lib, &state.theta, config.verify.samples, master, exec)?;
    write_report(&dir.file(MC_REPORT), &report, psi0, config.verify.keep_raw)?;
    Ok(RunSummary {
        run_dir: dir.path.clone(),
        history,
        state,
        report,
        stopped_early,
    })
}

fn in_pool<T: Send>(config: &ProblemConfig, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    crate::par::with_threads(config.run.threads, f)
}

/// `optimize`: a fresh run.
pub fn run_optimize(config: &ProblemConfig, ctx: &RunContext) -> Result<RunSummary> {
    let mut dir = RunDir::create(config, "optimize", ctx)?;
    let ctx = ctx.clone();
    in_pool(config, move || dir.finish(|d| optimize_in(d, &ctx, false)))
}

/// `optimize --resume`: continues `run_dir` from its checkpoint.
pub fn resume_optimize(run_dir: &Path, overrides: &[String]) -> Result<RunSummary> {
    let mut dir = RunDir::open(run_dir, overrides)?;
    if !dir.file(CHECKPOINT).is_file() {
        return Err(Error::Config(format!("{} has no checkpoint to resume from", run_dir.display())));
    }
    dir.set_status("running")?;
    // The catalog is read back from the run directory.
    let ctx = RunContext::default();
    let config = dir.config.clone();
    in_pool(&config, move || dir.finish(|d| optimize_in(d, &ctx, true)))
}

/// `catalog build`: builds the configured catalog into a run directory.
pub fn run_catalog_build(config: &ProblemConfig, ctx: &RunContext) -> Result<(PathBuf, MicrostructureCatalog)> {
    let mut dir = RunDir::create(config, "catalog build", ctx)?;
    let config = config.clone();
    in_pool(&config.clone(), move || {
        dir.finish(|d| {
            let c = build_catalog(config.catalog.count, &config.generator(), master_stream(&config), config.exec())?;
            write_catalog(&c, &d.file(CATALOG))?;
            Ok((d.path.clone(), c))
        })
    })
}

/// `rve sample`: the images behind the first `count` catalog entries, as
/// RVE1 bit files and graymaps.
pub fn run_rve_sample(config: &ProblemConfig, count: usize, ctx: &RunContext) -> Result<PathBuf> {
    if count == 0 {
        return Err(Error::Parameter("at least one image is required".into()));
    }
    let mut dir = RunDir::create(config, "rve sample", ctx)?;
    let generator = config.generator();
    let master = master_stream(config);
    dir.finish(|d| {
        for i in 0..count {
            let image = generator
                .sample_image(master.child(Purpose::Catalog, i as u64))?
                .ok_or_else(|| Error::Config("only the random_field generator produces images".into()))?;
            write_rve(&image, &d.file(&format!("rve_{i:04}.rve")))?;
            write_pgm(&image, &d.file(&format!("rve_{i:04}.pgm")))?;
        }
        Ok(d.path.clone())
    })
}

/// Where `verify` takes its design from.
#[derive(Debug, Clone)]
pub enum DesignSource {
    /// The checkpoint and catalog of a finished run.
    Run(PathBuf),
    /// An explicit checkpoint; the catalog comes from `catalog` or the config.
    Checkpoint { checkpoint: PathBuf, catalog: Option<PathBuf> },
    /// The hole-seeded initial design.
    Initial,
}

/// `verify`: Monte Carlo evaluation of a saved design with `samples`
/// layouts (default `verify.samples`), written to a new run directory.
pub fn run_verify(
    config: &ProblemConfig,
    source: &DesignSource,
    samples: Option<usize>,
    ctx: &RunContext,
) -> Result<(PathBuf, McReport)> {
    let mut config = config.clone();
    if let Some(n) = samples {
        config.verify.samples = n;
    }
    config.validate()?;
    let mut dir = RunDir::create(&config, "verify", ctx)?;
    let ctx = ctx.clone();
    let source = source.clone();
    in_pool(&config.clone(), move || {
        dir.finish(|d| {
            let (catalog, state) = match &source {
                DesignSource::Run(run) => (
                    read_catalog(&run.join(CATALOG))?,
                    Some(read_checkpoint(&run.join(CHECKPOINT))?),
                ),
                DesignSource::Checkpoint { checkpoint, catalog } => {
                    let c = match catalog {
                        Some(p) => read_catalog(&ctx.resolve(p))?,
                        None => obtain_catalog(&config, &ctx)?,
                    };
                    (c, Some(read_checkpoint(&ctx.resolve(checkpoint))?))
                }
                DesignSource::Initial => (obtain_catalog(&config, &ctx)?, None),
            };
            let lib = StiffnessLibrary::new(&catalog)?;
            let mut problem = config.problem()?;
            let exec = config.exec();
            let master = master_stream(&config);
            let (theta, psi0) = match state {
                Some(s) => {
                    let psi0 = s.psi0.ok_or_else(|| Error::Config("checkpoint has no objective normalizer".into()))?;
                    (s.theta, psi0)
                }
                None => {
                    let theta = initial_design(&config, &problem)?;
                    let psi0 = calibrate_normalizer(
                        &problem,
                        &lib,
                        &theta,
                        master.child(Purpose::Layout, 0),
                        config.optimizer.batch,
                        exec,
                    )?;
                    (theta, psi0)
                }
            };
            if theta.len() != problem.design_size() {
                return Err(Error::Config(format!(
                    "design of {} values does not fit the {}×{} mesh",
                    theta.len(),
                    config.mesh.nx,
                    config.mesh.ny
                )));
            }
            problem.psi0 = psi0;
            d.note("psi0", psi0);
            let report = monte_carlo_evaluate(&problem, &lib, &theta, config.verify.samples, master, exec)?;
            export_design(&d.path, &problem, &theta)?;
            write_report(&d.file(MC_REPORT), &report, psi0, config.verify.keep_raw)?;
            Ok((d.path.clone(), report))
        })
    })
}

/// Finite-difference checks of the strain energy, mass, perimeter and
/// regularization gradients at `theta` on `components` random design
/// components, for one random layout.
pub fn gradient_checks(
    config: &ProblemConfig,
    catalog: &MicrostructureCatalog,
    theta: &[f64],
    components: usize,
    step: f64,
) -> Result<Vec<(&'static str, FdReport)>> {
    let lib = StiffnessLibrary::new(catalog)?;
    let problem = config.problem()?;
    let master = master_stream(config);
    let n = problem.design_size();
    let layout = sample_layouts(lib.len(), problem.mesh.element_count(), 1, master.child(Purpose::FiniteDifference, 0))?
        .pop()
        .expect("one layout");
    let picks: Vec<usize> = {
        use rand::seq::index::sample;
        let mut rng = master.child(Purpose::FiniteDifference, 1).rng();
        sample(&mut rng, n, components.min(n)).into_vec()
    };
    let fields = DesignFields::new(&problem, theta)?;
    let u = assemble_solve(&problem.mesh, &fields.density, &layout, &lib)?;
    let mut out = Vec::new();
    let g = grad_strain_energy(&problem, &fields, &lib, &layout, &u);
    out.push((
        "strain_energy",
        fd_check(|t| evaluate(&problem, &lib, t, &layout).map(|r| r.strain_energy), &g, theta, &picks, step)?,
    ));
    let g = grad_mass(&problem, &fields);
    out.push((
        "mass",
        fd_check(|t| DesignFields::new(&problem, t).map(|d| d.mass_ratio), &g, theta, &picks, step)?,
    ));
    let g = grad_perimeter(&problem, &fields);
    out.push((
        "perimeter",
        fd_check(|t| Ok(perimeter_penalty(&problem, &problem.filter.apply(t))), &g, theta, &picks, step)?,
    ));
    let g = grad_reg(&problem, &fields);
    let target = fields.target.clone();
    out.push((
        "regularization",
        fd_check(
            |t| Ok(regularization_penalty(&problem, &problem.filter.apply(t), &target)),
            &g,
            theta,
            &picks,
            step,
        )?,
    ));
    Ok(out)
}

pub fn write_gradient_csv(path: &Path, checks: &[(&str, FdReport)]) -> Result<()> {
    let mut s = String::from("functional,component,analytic,fd,rel_error\n");
    for (name, report) in checks {
        for r in &report.rows {
            s += &format!("{name},{},{:e},{:e},{:e}\n", r.component, r.analytic, r.finite_difference, r.relative_error);
        }
    }
    crate::io::write_file(path, s.as_bytes())
}

/// `fdcheck`: gradient checks at the seeded design, written to
/// `fdcheck.csv` in a run directory.
pub fn run_fdcheck(
    config: &ProblemConfig,
    components: usize,
    step: f64,
    ctx: &RunContext,
) -> Result<(PathBuf, Vec<(&'static str, FdReport)>)> {
    let mut dir = RunDir::create(config, "fdcheck", ctx)?;
    let ctx = ctx.clone();
    let config = config.clone();
    in_pool(&config.clone(), move || {
        dir.finish(|d| {
            let catalog = obtain_catalog(&config, &ctx)?;
            let theta = initial_design(&config, &config.problem()?)?;
            let checks = gradient_checks(&config, &catalog, &theta, components, step)?;
            write_gradient_csv(&d.file("fdcheck.csv"), &checks)?;
            Ok((d.path.clone(), checks))
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path, iterations: usize) -> (ProblemConfig, RunContext) {
        let text = format!(
            "preset = \"desk\"\n[mesh]\nnx = 15\nny = 5\n[design]\nholes_x = 3\nholes_y = 1\nhole_radius = 0.3\n\
             [catalog]\ngenerator = \"fiber\"\ncount = 4\n[optimizer]\niterations = {iterations}\nbatch = 2\n\
             [verify]\nsamples = 5\n[run]\nseed = 3\noutput_dir = \"out\"\n"
        );
        let ctx = RunContext {
            base_dir: dir.to_path_buf(),
            timestamp: Some("t".into()),
        };
        (parse_config(&text, "tiny", &[], None).unwrap(), ctx)
    }

    #[test]
    fn zero_iterations_export_only_the_initial_design() {
        let tmp = tempfile::tempdir().unwrap();
        let (c, ctx) = tiny(tmp.path(), 0);
        let s = run_optimize(&c, &ctx).unwrap();
        assert!(s.history.is_empty());
        for f in [DESIGN_VTK, DESIGN_PGM, MC_REPORT, MANIFEST, CATALOG] {
            assert!(s.run_dir.join(f).is_file(), "{f}");
        }
        assert!(!s.run_dir.join(HISTORY).exists());
        assert!(!s.run_dir.join(CHECKPOINT).exists());
        let manifest = std::fs::read_to_string(s.run_dir.join(MANIFEST)).unwrap();
        assert!(manifest.contains("status = \"complete\""), "{manifest}");
    }

    #[test]
    fn rerun_is_identical_and_resume_continues_the_same_history() {
        let tmp = tempfile::tempdir().unwrap();
        let (c, ctx) = tiny(tmp.path(), 6);
        let a = run_optimize(&c, &ctx).unwrap();
        let b = run_optimize(&c, &ctx).unwrap();
        assert_ne!(a.run_dir, b.run_dir);
        let read = |d: &Path| std::fs::read_to_string(d.join(HISTORY)).unwrap();
        assert_eq!(read(&a.run_dir), read(&b.run_dir));
        assert_eq!(read(&a.run_dir).lines().count(), 7);

        let (short, _) = tiny(tmp.path(), 3);
        let r = run_optimize(&short, &ctx).unwrap();
        let resumed = resume_optimize(&r.run_dir, &["optimizer.iterations=6".into()]).unwrap();
        assert_eq!(resumed.history.len(), 3);
        assert_eq!(read(&r.run_dir), read(&a.run_dir));
        assert_eq!(resumed.state, a.state);
    }

    #[test]
    fn failures_mark_the_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let (c, ctx) = tiny(tmp.path(), 2);
        let src = DesignSource::Checkpoint {
            checkpoint: "missing.ckpt".into(),
            catalog: None,
        };
        assert!(run_verify(&c, &src, Some(3), &ctx).is_err());
        let dirs: Vec<_> = std::fs::read_dir(tmp.path().join("out")).unwrap().collect();
        assert_eq!(dirs.len(), 1);
        let manifest = std::fs::read_to_string(dirs[0].as_ref().unwrap().path().join(MANIFEST)).unwrap();
        assert!(manifest.contains("status = \"FAILED\""), "{manifest}");
        // The manifest still replays as a config.
        assert_eq!(parse_config(&manifest, "m", &[], None).unwrap().verify.samples, 3);
    }

    #[test]
    fn verify_a_finished_run() {
        let tmp = tempfile::tempdir().unwrap();
        let (c, ctx) = tiny(tmp.path(), 2);
        let s = run_optimize(&c, &ctx).unwrap();
        let (_, r) = run_verify(&c, &DesignSource::Run(s.run_dir.clone()), None, &ctx).unwrap();
        assert_eq!(r, s.report);
    }
}
