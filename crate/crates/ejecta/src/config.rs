//! Run configuration: strict TOML parsing, validation, and the resolved
//! echo written next to every output for provenance.

use serde::{Deserialize, Serialize};

use crate::error::{SimError, SimResult};
use crate::particles::DragModel;
use crate::state::GasModel;
use crate::timestep::DtCoefficients;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Case preset name; fills the sections below before overrides apply.
    pub case: Option<String>,
    pub t_end: f64,
    pub mesh: MeshConfig,
    pub gas: GasModel,
    pub drag: DragConfig,
    pub coupling: CouplingConfig,
    pub motion: MotionConfig,
    pub dt: DtCoefficients,
    pub bc: BcConfig,
    pub init: InitConfig,
    pub forcing: ForcingConfig,
    pub seed_particles: SeedConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub nx: usize,
    pub ny: usize,
    /// [x0, x1, y0, y1]
    pub domain: [f64; 4],
    /// Interior-vertex jitter as a fraction of the cell size.
    pub perturb: f64,
    pub seed: u64,
    /// Plain-text mesh file; overrides the generator when set.
    pub file: Option<String>,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig { nx: 10, ny: 10, domain: [0.0, 1.0, 0.0, 1.0], perturb: 0.0, seed: 0, file: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct DragConfig {
    pub model: DragModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingMode {
    #[default]
    TwoWay,
    OneWay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ExchangeMode {
    /// The fluid receives the exact negation of the particle gain.
    #[default]
    Conservative,
    /// Start-of-step sources reused in both update stages.
    Literal,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingConfig {
    pub mode: CouplingMode,
    pub exchange: ExchangeMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MotionModeConfig {
    #[default]
    Eulerian,
    Lagrangian,
    Smoothed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionConfig {
    pub mode: MotionModeConfig,
    pub smooth_passes: usize,
}

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig { mode: MotionModeConfig::Eulerian, smooth_passes: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BcSide {
    #[default]
    Transmissive,
    Wall,
    Prescribed,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct BcConfig {
    pub left: BcSide,
    pub right: BcSide,
    pub bottom: BcSide,
    pub top: BcSide,
    /// Far-field (rho, u, v, P) for prescribed sides.
    pub prescribed: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    #[default]
    Uniform,
    Riemann,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub kind: InitKind,
    /// (rho, u, v, P); the uniform state, or the left state of a Riemann split.
    pub left: [f64; 4],
    pub right: [f64; 4],
    pub x_split: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            kind: InitKind::Uniform,
            left: [1.2, 0.0, 0.0, 101325.0],
            right: [1.2, 0.0, 0.0, 101325.0],
            x_split: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ForcingKind {
    #[default]
    None,
    Constant,
    Sinusoidal,
}

/// Prescribed body acceleration of the gas, a(t) = accel or accel*sin(omega t).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingConfig {
    pub kind: ForcingKind,
    pub accel: [f64; 2],
    pub omega: f64,
}

impl Default for ForcingConfig {
    fn default() -> Self {
        ForcingConfig { kind: ForcingKind::None, accel: [0.0, 0.0], omega: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SeedMode {
    #[default]
    None,
    /// Per-cell counts derived from a target volume fraction.
    Fraction,
    /// One particle at a given position.
    Single,
    /// `count` particles at uniform random in-domain positions.
    Random,
    /// Plain-text particle file.
    File,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedConfig {
    pub mode: SeedMode,
    pub volume_fraction: f64,
    pub radius: f64,
    pub mat_density: f64,
    pub spec_heat: f64,
    /// Initial particle temperature; the local gas temperature when unset.
    pub temp: Option<f64>,
    pub velocity: [f64; 2],
    /// Uniform random velocity added per component, for mixing studies.
    pub velocity_jitter: f64,
    pub count: usize,
    pub position: [f64; 2],
    pub file: Option<String>,
    pub seed: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig {
            mode: SeedMode::None,
            volume_fraction: 0.0,
            radius: 1e-4,
            mat_density: 1000.0,
            spec_heat: 1.0,
            temp: None,
            velocity: [0.0, 0.0],
            velocity_jitter: 0.0,
            count: 1,
            position: [0.5, 0.5],
            file: None,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    CsvFields,
    VtkLegacy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<String>,
    /// Field-snapshot cadence; initial and final snapshots always emit.
    pub field_dt: Option<f64>,
    pub formats: Vec<OutputFormat>,
    pub write_particles: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            field_dt: None,
            formats: vec![OutputFormat::CsvFields, OutputFormat::VtkLegacy],
            write_particles: true,
        }
    }
}

/// Strict parse: TOML syntax errors carry the location, unknown keys fail.
pub fn parse_config(text: &str) -> SimResult<SimConfig> {
    toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))
}

/// Deterministic serialization of the resolved configuration.
pub fn echo_config(cfg: &SimConfig) -> String {
    toml::to_string_pretty(cfg).expect("config serializes")
}

impl SimConfig {
    pub fn validate(&self) -> SimResult<()> {
        if !(self.gas.gamma > 1.0) {
            return Err(SimError::validation("gas.gamma", "must exceed 1"));
        }
        if !(self.gas.mu >= 0.0) {
            return Err(SimError::validation("gas.mu", "must be non-negative"));
        }
        if !(self.gas.cpg > 0.0) {
            return Err(SimError::validation("gas.cpg", "must be positive"));
        }
        if !(self.t_end >= 0.0) {
            return Err(SimError::validation("t_end", "must be non-negative"));
        }
        self.dt.validate()?;
        let [x0, x1, y0, y1] = self.mesh.domain;
        if !(x1 > x0 && y1 > y0) {
            return Err(SimError::validation("mesh.domain", "extents must be increasing"));
        }
        if self.mesh.file.is_none() && (self.mesh.nx == 0 || self.mesh.ny == 0) {
            return Err(SimError::validation("mesh.nx/ny", "must be positive"));
        }
        if !(self.mesh.perturb >= 0.0 && self.mesh.perturb < 1.0) {
            return Err(SimError::validation("mesh.perturb", "must lie in [0, 1)"));
        }
        for (key, [rho, _, _, p]) in [("init.left", self.init.left), ("init.right", self.init.right)] {
            if !(rho > 0.0 && p > 0.0) {
                return Err(SimError::validation(key, "density and pressure must be positive"));
            }
        }
        let uses_prescribed = [self.bc.left, self.bc.right, self.bc.bottom, self.bc.top]
            .contains(&BcSide::Prescribed);
        if uses_prescribed {
            match self.bc.prescribed {
                None => {
                    return Err(SimError::validation("bc.prescribed", "required by a prescribed side"))
                }
                Some([rho, _, _, p]) if !(rho > 0.0 && p > 0.0) => {
                    return Err(SimError::validation("bc.prescribed", "must be admissible"))
                }
                _ => {}
            }
        }
        match self.seed_particles.mode {
            SeedMode::None => {}
            SeedMode::File => {
                if self.seed_particles.file.is_none() {
                    return Err(SimError::validation("seed_particles.file", "required in file mode"));
                }
            }
            _ => {
                let s = &self.seed_particles;
                if !(s.radius > 0.0 && s.mat_density > 0.0 && s.spec_heat > 0.0) {
                    return Err(SimError::validation(
                        "seed_particles",
                        "radius, mat_density and spec_heat must be positive",
                    ));
                }
                if let Some(t) = s.temp {
                    if !(t > 0.0) {
                        return Err(SimError::validation("seed_particles.temp", "must be positive"));
                    }
                }
                if s.mode == SeedMode::Fraction && !(s.volume_fraction > 0.0) {
                    return Err(SimError::validation(
                        "seed_particles.volume_fraction",
                        "must be positive in fraction mode",
                    ));
                }
            }
        }
        if let Some(dt) = self.output.field_dt {
            if !(dt > 0.0) {
                return Err(SimError::validation("output.field_dt", "must be positive"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert!(cfg.case.is_none());
        assert_eq!(cfg.dt.c_e, 0.3);
        assert_eq!(cfg.dt.c_v, 0.1);
        assert_eq!(cfg.dt.c_p, 0.5);
        assert_eq!(cfg.dt.growth, 1.01);
        assert_eq!(cfg.gas.gamma, 1.4);
        cfg.validate().unwrap();
    }

    #[test]
    fn dt_override_in_stated_range() {
        let cfg = parse_config("[dt]\nc_e = 0.35\n").unwrap();
        assert_eq!(cfg.dt.c_e, 0.35);
        cfg.validate().unwrap();
    }

    #[test]
    fn bad_gamma_rejected() {
        let cfg = parse_config("[gas]\ngamma = 0.9\n").unwrap();
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, SimError::Validation { ref key, .. } if key == "gas.gamma"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse_config("frobnicate = 3\n").is_err());
        assert!(parse_config("[gas]\ngama = 1.4\n").is_err());
    }

    #[test]
    fn syntax_error_carries_location() {
        let err = parse_config("[gas\ngamma = 1.4\n").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = parse_config("t_end = 0.25\n[drag]\nmodel = \"crowe\"\n").unwrap();
        cfg.case = Some("demo".into());
        let echo = echo_config(&cfg);
        let back = parse_config(&echo).unwrap();
        assert_eq!(back.t_end, 0.25);
        assert_eq!(back.drag.model, DragModel::Crowe);
        assert_eq!(back.case.as_deref(), Some("demo"));
        // Deterministic.
        assert_eq!(echo, echo_config(&back));
    }

    #[test]
    fn prescribed_side_requires_state() {
        let cfg = parse_config("[bc]\nleft = \"prescribed\"\n").unwrap();
        assert!(cfg.validate().is_err());
        let cfg =
            parse_config("[bc]\nleft = \"prescribed\"\nprescribed = [1.2, 0.0, 0.0, 101325.0]\n")
                .unwrap();
        cfg.validate().unwrap();
    }
}
