//! TOML run configuration with an explicit schema version.
//!
//! Every section is optional and falls back to the defaults below; unknown keys
//! are rejected.
//!
//! ```toml
//! schema_version = 1
//! counterdiabatic = true
//!
//! [grid]
//! k_points = 100
//! t_points = 100
//!
//! [rice_mele]
//! omega = 5.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{PumpError, Result};
use crate::inverse::{InverseConfig, OptimSettings};
use crate::protocols::{ControlFreakParams, RmParams};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum OutputFormat {
    #[default]
    #[serde(rename = "csv")]
    Csv,
    #[serde(rename = "csv+svg")]
    CsvSvg,
}

impl OutputFormat {
    pub fn plots(self) -> bool {
        self == OutputFormat::CsvSvg
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = PumpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "csv+svg" => Ok(Self::CsvSvg),
            other => Err(PumpError::Config(format!("unknown output format {other:?} (expected csv or csv+svg)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub k_points: usize,
    pub t_points: usize,
    /// Integrator steps per cycle for the spinor evolution.
    pub ode_steps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { k_points: 100, t_points: 100, ode_steps: 10_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlFreakConfig {
    /// Cycle length; defaults to the Rice-Mele period `2π/ω`.
    pub period: Option<f64>,
    pub lambda: f64,
    /// Allowed `max |analytic - numeric|` over the cycle.
    pub tolerance: f64,
}

impl Default for ControlFreakConfig {
    fn default() -> Self {
        Self { period: None, lambda: 0.0, tolerance: 1e-3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InverseSection {
    pub harmonics: usize,
    /// Momentum of the component plot.
    pub k_slice: f64,
    pub objective_steps: usize,
    pub verify_steps: usize,
    pub trajectory_nodes: usize,
    pub threshold: f64,
    pub gap_min: f64,
    pub gap_penalty: f64,
    pub stop_fraction: f64,
    pub optimizer: OptimSettings,
}

impl Default for InverseSection {
    fn default() -> Self {
        let d = InverseConfig::default();
        Self {
            harmonics: 3,
            k_slice: 1.1,
            objective_steps: d.objective_steps,
            verify_steps: d.verify_steps,
            trajectory_nodes: d.trajectory_nodes,
            threshold: d.threshold,
            gap_min: d.gap_min,
            gap_penalty: d.gap_penalty,
            stop_fraction: d.stop_fraction,
            optimizer: d.optimizer,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RealspaceConfig {
    pub continuity_cells: usize,
    pub continuity_steps: usize,
    pub initial_site: usize,
    pub residual_threshold: f64,
    /// Coarse step count of the dt² refinement check (compared against twice as many).
    pub refinement_steps: usize,
    pub locality_cells: usize,
    pub locality_range: usize,
    pub locality_threshold: f64,
    pub bond_charge_steps: usize,
    pub bond_charge_tolerance: f64,
}

impl Default for RealspaceConfig {
    fn default() -> Self {
        Self {
            continuity_cells: 32,
            continuity_steps: 100_000,
            initial_site: 21,
            residual_threshold: 1e-8,
            refinement_steps: 1000,
            locality_cells: 64,
            locality_range: 16,
            locality_threshold: 1e-8,
            bond_charge_steps: 1000,
            bond_charge_tolerance: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), format: OutputFormat::Csv }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Add the counter-diabatic term to the drive.
    pub counterdiabatic: bool,
    /// Allowed `|Q_pump(T) - 1|` and pairwise disagreement between charge routes.
    pub charge_tolerance: f64,
    pub grid: GridConfig,
    pub rice_mele: RmParams,
    pub control_freak: ControlFreakConfig,
    pub inverse: InverseSection,
    pub realspace: RealspaceConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            counterdiabatic: true,
            charge_tolerance: 1e-2,
            grid: GridConfig::default(),
            rice_mele: RmParams::default(),
            control_freak: ControlFreakConfig::default(),
            inverse: InverseSection::default(),
            realspace: RealspaceConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub no_cd: bool,
    pub omega: Option<f64>,
    pub k_points: Option<usize>,
    pub t_points: Option<usize>,
    pub harmonics: Option<usize>,
    pub format: Option<OutputFormat>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| PumpError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PumpError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(mut self, o: &Overrides) -> Result<Self> {
        if let Some(out) = &o.out {
            self.output.dir = out.clone();
        }
        if o.no_cd {
            self.counterdiabatic = false;
        }
        if let Some(w) = o.omega {
            self.rice_mele.omega = w;
        }
        if let Some(n) = o.k_points {
            self.grid.k_points = n;
        }
        if let Some(n) = o.t_points {
            self.grid.t_points = n;
        }
        if let Some(n) = o.harmonics {
            self.inverse.harmonics = n;
        }
        if let Some(f) = o.format {
            self.output.format = f;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PumpError::Config(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})", self.schema_version));
        }
        let g = &self.grid;
        if g.k_points < 8 || g.t_points < 8 || g.ode_steps < 8 {
            return bad("grid sizes must be at least 8".into());
        }
        if !(self.charge_tolerance > 0.0) {
            return bad("charge_tolerance must be positive".into());
        }
        self.rice_mele.validate().map_err(|e| PumpError::Config(e.to_string()))?;
        self.control_freak_params()?;
        if !(self.control_freak.tolerance > 0.0) {
            return bad("control_freak.tolerance must be positive".into());
        }
        self.inverse_config().validate().map_err(|e| PumpError::Config(e.to_string()))?;
        if !self.inverse.k_slice.is_finite() {
            return bad("inverse.k_slice must be finite".into());
        }
        let r = &self.realspace;
        if r.continuity_cells < 8 || r.locality_cells < 8 || r.continuity_steps < 8 || r.refinement_steps < 8 || r.bond_charge_steps < 8 {
            return bad("realspace sizes must be at least 8".into());
        }
        if !r.continuity_cells.is_multiple_of(2) || !r.locality_cells.is_multiple_of(2) {
            return bad("realspace cell counts must be even".into());
        }
        if r.initial_site >= 2 * r.continuity_cells {
            return bad(format!("realspace.initial_site {} outside the chain", r.initial_site));
        }
        if r.locality_range > r.locality_cells / 2 {
            return bad("realspace.locality_range exceeds half the chain".into());
        }
        if !(r.residual_threshold > 0.0 && r.locality_threshold > 0.0 && r.bond_charge_tolerance > 0.0) {
            return bad("realspace thresholds must be positive".into());
        }
        Ok(())
    }

    pub fn control_freak_params(&self) -> Result<ControlFreakParams> {
        let period = self.control_freak.period.unwrap_or_else(|| self.rice_mele.period());
        let p = ControlFreakParams { lambda: self.control_freak.lambda, ..ControlFreakParams::with_period(period) };
        p.validate().map_err(|e| PumpError::Config(e.to_string()))?;
        Ok(p)
    }

    pub fn inverse_config(&self) -> InverseConfig {
        let s = &self.inverse;
        InverseConfig {
            k_points: self.grid.k_points,
            t_points: self.grid.t_points,
            objective_steps: s.objective_steps,
            verify_steps: s.verify_steps,
            trajectory_nodes: s.trajectory_nodes,
            threshold: s.threshold,
            gap_min: s.gap_min,
            gap_penalty: s.gap_penalty,
            stop_fraction: s.stop_fraction,
            optimizer: s.optimizer,
        }
    }

    /// SHA-256 of the canonical TOML form, hex encoded. The output directory is
    /// excluded so relocating a run does not change its hash.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output.dir = PathBuf::new();
        let digest = Sha256::digest(canon.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
