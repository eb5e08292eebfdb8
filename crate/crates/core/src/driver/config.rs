//! Run configuration: a TOML document with one table per stage.
//!
//! A config either names a `preset` (every key then has a value) or must
//! give at least the keys in [`REQUIRED_KEYS`]; everything else falls back
//! to the desk-scale defaults. `[provenance]` tables written into run
//! manifests are ignored on input, so a manifest replays as a config.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::homogenization::{CatalogGenerator, Hypothesis, IsotropicPhase};
use crate::macro_model::{ErsatzParams, MacroMesh, MacroProblem, ObjectiveWeights};
use crate::microstructure::{FiberBounds, FieldParams};
use crate::optim::{EarlyStop, GcmmaParams, OptimizerKind, OptimizerSpec, PenaltySpec};
use crate::par::Exec;

pub const PRESETS: [&str; 5] = ["desk", "example1-ia", "example1-ib", "example1-iia", "example1-iib"];

/// Keys a config without a preset has to set.
pub const REQUIRED_KEYS: [&str; 7] = [
    "mesh.nx",
    "mesh.ny",
    "catalog.count",
    "optimizer.algorithm",
    "optimizer.iterations",
    "optimizer.batch",
    "run.seed",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub mesh: MeshConfig,
    pub design: DesignConfig,
    pub objective: ObjectiveConfig,
    pub catalog: CatalogConfig,
    pub optimizer: OptimizerConfig,
    pub verify: VerifyConfig,
    pub run: RunConfig,
}

/// Half-beam domain `length × height` on `nx × ny` square elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub nx: usize,
    pub ny: usize,
    pub length: f64,
    pub height: f64,
    /// Point load at the top of the symmetry edge (half the midspan load).
    pub load: f64,
    /// Filter radius in element sizes.
    pub filter_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignConfig {
    pub holes_x: usize,
    pub holes_y: usize,
    /// Physical hole radius.
    pub hole_radius: f64,
    /// Box bounds of the design values, in element sizes.
    pub bounds: [f64; 2],
    /// Heaviside half-width, in element sizes.
    pub smoothing_width: f64,
    pub void_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    pub w_strain_energy: f64,
    pub w_mass: f64,
    pub w_perimeter: f64,
    pub w_regularization: f64,
    /// Required mass fraction γ.
    pub mass_limit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatalogKind {
    RandomField,
    Fiber,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogConfig {
    /// Load a catalog file instead of generating one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub generator: CatalogKind,
    pub count: usize,
    pub period: f64,
    pub max_wavenumber: f64,
    pub correlation_length: f64,
    /// RVE pixels per side.
    pub resolution: usize,
    pub stiff_e: f64,
    pub stiff_nu: f64,
    pub compliant_e: f64,
    pub compliant_nu: f64,
    pub hypothesis: Hypothesis,
    pub fiber: FiberBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub algorithm: OptimizerKind,
    pub eta: f64,
    pub kappa: f64,
    /// Layouts per iteration (n_s).
    pub batch: usize,
    pub iterations: usize,
    pub beta_m: f64,
    pub beta_v: f64,
    pub epsilon: f64,
    pub early_stop: bool,
    pub early_stop_window: usize,
    pub early_stop_tolerance: f64,
    pub record_wall_time: bool,
    /// Write a checkpoint every this many iterations (0: only at the end).
    pub checkpoint_every: usize,
    pub gcmma: GcmmaParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Monte Carlo layouts for the final design (N_s).
    pub samples: usize,
    /// Also write every per-layout value.
    pub keep_raw: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads (0: one per core).
    pub threads: usize,
    pub parallel: bool,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            nx: 60,
            ny: 20,
            length: 3.0,
            height: 1.0,
            load: 1.0,
            filter_radius: 1.6,
        }
    }
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            holes_x: 18,
            holes_y: 6,
            hole_radius: 1.0 / 15.0,
            bounds: [-1.5, 1.5],
            smoothing_width: 1.5,
            void_factor: 1e-6,
        }
    }
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        let w = ObjectiveWeights::default();
        Self {
            w_strain_energy: w.strain_energy,
            w_mass: w.mass,
            w_perimeter: w.perimeter,
            w_regularization: w.regularization,
            mass_limit: 0.4,
        }
    }
}

impl Default for CatalogConfig {
    fn default() -> Self {
        Self {
            path: None,
            generator: CatalogKind::RandomField,
            count: 50,
            period: 4.0 * PI,
            max_wavenumber: 25.0,
            correlation_length: 1.0,
            resolution: 64,
            stiff_e: 10.0,
            stiff_nu: 0.3,
            compliant_e: 1.0,
            compliant_nu: 0.3,
            hypothesis: Hypothesis::PlaneStress,
            fiber: FiberBounds::default(),
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: OptimizerKind::Adam,
            eta: 0.05,
            kappa: 1000.0,
            batch: 4,
            iterations: 300,
            beta_m: 0.9,
            beta_v: 0.999,
            epsilon: 1e-8,
            early_stop: false,
            early_stop_window: 50,
            early_stop_tolerance: 1e-3,
            record_wall_time: false,
            checkpoint_every: 0,
            gcmma: GcmmaParams::default(),
        }
    }
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            samples: 200,
            keep_raw: false,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            output_dir: PathBuf::from("runs"),
            threads: 0,
            parallel: true,
        }
    }
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            preset: None,
            mesh: MeshConfig::default(),
            design: DesignConfig::default(),
            objective: ObjectiveConfig::default(),
            catalog: CatalogConfig::default(),
            optimizer: OptimizerConfig::default(),
            verify: VerifyConfig::default(),
            run: RunConfig::default(),
        }
    }
}

/// The named preset: the desk-scale default or one of the four material
/// cases of the simply supported beam at full scale.
pub fn preset(name: &str) -> Result<ProblemConfig> {
    let mut c = ProblemConfig {
        preset: Some(name.to_string()),
        ..ProblemConfig::default()
    };
    if name == "desk" {
        return Ok(c);
    }
    let (period, max_wavenumber, compliant_e, eta) = match name {
        "example1-ia" => (4.0 * PI, 25.0, 1.0, 0.05),
        "example1-ib" => (4.0 * PI, 25.0, 0.1, 0.05),
        "example1-iia" => (2.0 * PI, 50.0, 1.0, 0.025),
        "example1-iib" => (2.0 * PI, 50.0, 0.1, 0.025),
        _ => {
            return Err(Error::Config(format!(
                "unknown preset {name:?}; available: {}",
                PRESETS.join(", ")
            )))
        }
    };
    c.mesh.nx = 120;
    c.mesh.ny = 40;
    c.catalog.count = 200;
    c.catalog.period = period;
    c.catalog.max_wavenumber = max_wavenumber;
    c.catalog.compliant_e = compliant_e;
    c.optimizer.eta = eta;
    c.verify.samples = 1000;
    Ok(c)
}

fn config_error(source: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{source}: {e}"))
}

/// File shape for line-numbered errors; only a manifest's `[provenance]`
/// is tolerated beyond the config itself.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct ConfigFile {
    preset: Option<String>,
    mesh: Option<MeshConfig>,
    design: Option<DesignConfig>,
    objective: Option<ObjectiveConfig>,
    catalog: Option<CatalogConfig>,
    optimizer: Option<OptimizerConfig>,
    verify: Option<VerifyConfig>,
    run: Option<RunConfig>,
    provenance: Option<toml::Value>,
}

/// Parses a `key=value` override; values are TOML, bare words fall back to
/// strings.
fn parse_override(spec: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(|p| p.trim().is_empty()) {
        return Err(Error::Config(format!("override {spec:?} has an empty key")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.split('.').map(|p| p.trim().to_string()).collect(), value))
}

fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("non-empty key");
    let mut t = table;
    for p in parents {
        let entry = t.entry(p.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key {} crosses the non-table {p:?}", path.join("."))))?;
    }
    t.insert(last.clone(), value);
    Ok(())
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn has_path(table: &toml::Table, key: &str) -> bool {
    let mut t = table;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        match t.get(*p) {
            Some(toml::Value::Table(inner)) if i + 1 < parts.len() => t = inner,
            Some(_) if i + 1 == parts.len() => return true,
            _ => return false,
        }
    }
    false
}

/// Parses config text, applies `overrides` (`section.key=value`) and an
/// optional seed, fills defaults and validates. `source` names the text in
/// error messages.
pub fn parse_config(text: &str, source: &str, overrides: &[String], seed: Option<u64>) -> Result<ProblemConfig> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| config_error(source, e))?;
    table.remove("provenance");
    // Typed pass over the text itself so unknown keys and type mismatches
    // are reported with their line.
    let _: ConfigFile = toml::from_str(text).map_err(|e| config_error(source, e))?;
    for o in overrides {
        let (path, value) = parse_override(o)?;
        set_path(&mut table, &path, value)?;
    }
    if let Some(s) = seed {
        set_path(&mut table, &["run".into(), "seed".into()], toml::Value::Integer(s as i64))?;
    }
    let preset_name = match table.get("preset") {
        None => None,
        Some(toml::Value::String(s)) => Some(s.clone()),
        Some(v) => return Err(Error::Config(format!("{source}: preset must be a string, got {v}"))),
    };
    let mut base = match &preset_name {
        Some(name) => preset(name)?,
        None => {
            let missing: Vec<&str> = REQUIRED_KEYS
                .iter()
                .copied()
                .filter(|k| !has_path(&table, k) && !(*k == "catalog.count" && has_path(&table, "catalog.path")))
                .collect();
            if !missing.is_empty() {
                return Err(Error::Config(format!(
                    "{source}: missing required keys {} (or set `preset` to one of {})",
                    missing.join(", "),
                    PRESETS.join(", ")
                )));
            }
            ProblemConfig::default()
        }
    };
    base.preset = preset_name;
    let mut merged = toml::Table::try_from(&base).map_err(|e| config_error(source, e))?;
    merge(&mut merged, table);
    let config =
        ProblemConfig::deserialize(toml::Value::Table(merged)).map_err(|e| config_error(&format!("{source} (after overrides)"), e))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<ProblemConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config = parse_config(&text, &path.display().to_string(), overrides, seed)?;
    config.check_files(None)?;
    Ok(config)
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let o = &self.objective;
        if [o.w_strain_energy, o.w_mass, o.w_perimeter, o.w_regularization].iter().any(|w| !(*w >= 0.0)) {
            return bad("objective weights must be ≥ 0".into());
        }
        if !(0.0..=1.0).contains(&o.mass_limit) {
            return bad(format!("objective.mass_limit {} must lie in [0, 1]", o.mass_limit));
        }
        if self.optimizer.batch == 0 {
            return bad("optimizer.batch (layouts per iteration) must be ≥ 1".into());
        }
        if self.verify.samples == 0 {
            return bad("verify.samples must be ≥ 1".into());
        }
        if self.catalog.path.is_none() && self.catalog.count == 0 {
            return bad("catalog.count must be ≥ 1".into());
        }
        if !(self.mesh.filter_radius >= 0.0) {
            return bad("mesh.filter_radius must be ≥ 0".into());
        }
        if self.mesh.nx == 0 || self.mesh.ny == 0 {
            return bad("mesh.nx and mesh.ny must be ≥ 1".into());
        }
        if !(self.mesh.length > 0.0) || !(self.mesh.height > 0.0) {
            return bad("mesh.length and mesh.height must be positive".into());
        }
        if self.design.holes_x == 0 || self.design.holes_y == 0 || !(self.design.hole_radius > 0.0) {
            return bad("design.holes_x, design.holes_y and design.hole_radius must be positive".into());
        }
        self.optimizer_spec()
            .and_then(|s| s.validate())
            .map_err(|e| Error::Config(e.to_string()))?;
        ErsatzParams {
            smoothing_width: self.design.smoothing_width,
            void_factor: self.design.void_factor,
        }
        .validate()
        .map_err(|e| Error::Config(e.to_string()))?;
        let [lo, hi] = self.design.bounds;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return bad(format!("design.bounds {:?} must be finite and increasing", self.design.bounds));
        }
        Ok(())
    }

    /// Checks that a catalog path exists; relative paths are taken from
    /// `base`, or the working directory.
    pub fn check_files(&self, base: Option<&Path>) -> Result<()> {
        if let Some(p) = &self.catalog.path {
            let full = match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p.clone(),
            };
            if !full.is_file() {
                return Err(Error::Config(format!("catalog.path {} does not exist", full.display())));
            }
        }
        Ok(())
    }

    pub fn exec(&self) -> Exec {
        if self.run.parallel {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex prefix of the SHA-256 of the resolved config.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().take(6).map(|b| format!("{b:02x}")).collect())
    }

    pub fn generator(&self) -> CatalogGenerator {
        let c = &self.catalog;
        match c.generator {
            CatalogKind::RandomField => CatalogGenerator::RandomField {
                field: FieldParams {
                    period: c.period,
                    max_wavenumber: c.max_wavenumber,
                    correlation_length: c.correlation_length,
                },
                stiff: IsotropicPhase::new(c.stiff_e, c.stiff_nu),
                compliant: IsotropicPhase::new(c.compliant_e, c.compliant_nu),
                dim: 2,
                resolution: c.resolution,
                hypothesis: c.hypothesis,
            },
            CatalogKind::Fiber => CatalogGenerator::Fiber {
                bounds: c.fiber,
                plane: Some(c.hypothesis),
            },
            CatalogKind::Uniform => CatalogGenerator::Uniform {
                phase: IsotropicPhase::new(c.stiff_e, c.stiff_nu),
                dim: 2,
                hypothesis: c.hypothesis,
            },
        }
    }

    pub fn mesh(&self) -> Result<MacroMesh> {
        let m = &self.mesh;
        MacroMesh::half_beam(m.nx, m.ny, m.length, m.height, m.load)
    }

    /// Macro problem with Ψ₀ still at its placeholder value.
    pub fn problem(&self) -> Result<MacroProblem> {
        let mesh = self.mesh()?;
        let h = mesh.h;
        let mut p = MacroProblem::new(mesh, self.mesh.filter_radius * h)?;
        p.ersatz = ErsatzParams {
            smoothing_width: self.design.smoothing_width,
            void_factor: self.design.void_factor,
        };
        let o = &self.objective;
        p.weights = ObjectiveWeights {
            strain_energy: o.w_strain_energy,
            mass: o.w_mass,
            perimeter: o.w_perimeter,
            regularization: o.w_regularization,
        };
        p.mass_limit = o.mass_limit;
        p.bounds = self.design.bounds;
        p.validate()?;
        Ok(p)
    }

    pub fn optimizer_spec(&self) -> Result<OptimizerSpec> {
        let o = &self.optimizer;
        Ok(OptimizerSpec {
            kind: o.algorithm,
            eta: o.eta,
            penalty: PenaltySpec::new(vec![o.kappa])?,
            batch: o.batch,
            iterations: o.iterations,
            beta_m: o.beta_m,
            beta_v: o.beta_v,
            epsilon: o.epsilon,
            gcmma: o.gcmma,
            early_stop: o.early_stop.then_some(EarlyStop {
                window: o.early_stop_window,
                tolerance: o.early_stop_tolerance,
            }),
            record_wall_time: o.record_wall_time,
        })
    }
}
