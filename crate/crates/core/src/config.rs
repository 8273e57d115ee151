//! TOML run configuration.
//!
//! Every key except `geometry.preset` has a default:
//!
//! | key | default |
//! |---|---|
//! | geometry.amplitude | 0.1 for curved-interface, 0 otherwise |
//! | geometry.refinement | 1 |
//! | time.t_final, time.n_steps | 1.0, 10 |
//! | solid.mu, solid.lambda | 1.0, 1.0 |
//! | law.id, law.kappa, law.beta | saturating, 1.0, 1.0 |
//! | law.alpha_min, law.alpha_max | 1.0, 2.0 |
//! | fluid.tol, fluid.max_it, fluid.newton | 1e-10, 500, false |
//! | coupling.eps_schedule | [1e-1, 1e-2, 1e-3, 1e-4] |
//! | coupling.omega, coupling.rho_mode | 0.7, one |
//! | coupling.tol_rel, coupling.tol_abs, coupling.max_outer | 1e-8, 1e-10, 50 |
//! | data.body_force, data.force_magnitude, data.v0 | zero, 1.0, zero |
//! | output.out_dir, output.dump_fields, output.seed | out, false, 42 |
//! | verify.samples, verify.lipschitz_pairs, verify.levels | 8, 5, 2 |
//! | verify.eps_lipschitz | [1e-2, 1e-4] |

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coupling::{BodyForce, CoupledProblem, CouplingConfig, InitialVelocity};
use crate::error::{FsiError, Result};
use crate::fluid::StepOptions;
use crate::law::{DiffusionLaw, FluidParams, LawKind, SolidParams};
use crate::mesh::{build_geometry, Preset, TimeGrid, MAX_REFINEMENT};
use crate::verify::VerifySettings;

pub const DEFAULT_TABLE: &str = "\
[geometry] preset (required: flat-channel | curved-interface), amplitude = 0.1 (curved) / 0, refinement = 1
[time] t_final = 1.0, n_steps = 10
[solid] mu = 1.0, lambda = 1.0
[law] id = \"saturating\", kappa = 1.0, beta = 1.0, alpha_min = 1.0, alpha_max = 2.0
[fluid] tol = 1e-10, max_it = 500, newton = false
[coupling] eps_schedule = [1e-1, 1e-2, 1e-3, 1e-4], omega = 0.7, rho_mode = \"one\", tol_rel = 1e-8, tol_abs = 1e-10, max_outer = 50
[data] body_force = \"zero\", force_magnitude = 1.0, v0 = \"zero\"
[output] out_dir = \"out\", dump_fields = false, seed = 42
[verify] samples = 8, lipschitz_pairs = 5, levels = 2, eps_lipschitz = [1e-2, 1e-4]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub preset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default = "one_u32")]
    pub refinement: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub t_final: f64,
    pub n_steps: usize,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection { t_final: 1.0, n_steps: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolidSection {
    pub mu: f64,
    pub lambda: f64,
}

impl Default for SolidSection {
    fn default() -> Self {
        SolidSection { mu: 1.0, lambda: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LawSection {
    pub id: String,
    pub kappa: f64,
    pub beta: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
}

impl Default for LawSection {
    fn default() -> Self {
        LawSection { id: "saturating".into(), kappa: 1.0, beta: 1.0, alpha_min: 1.0, alpha_max: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluidSection {
    pub tol: f64,
    pub max_it: usize,
    pub newton: bool,
}

impl Default for FluidSection {
    fn default() -> Self {
        let d = StepOptions::default();
        FluidSection { tol: d.tol, max_it: d.max_it, newton: d.newton }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoMode {
    /// `ρ = 1`: iterate `T^ε` itself.
    One,
    /// `ρ = 0.5 / (Ĉ_s Ĉ_f)` from measured constants, with `ω = 1`.
    Paper,
}

impl FromStr for RhoMode {
    type Err = FsiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(RhoMode::One),
            "paper" => Ok(RhoMode::Paper),
            other => Err(FsiError::Config(format!("unknown coupling.rho_mode {other:?} (expected one or paper)"))),
        }
    }
}

impl fmt::Display for RhoMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RhoMode::One => "one",
            RhoMode::Paper => "paper",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingSection {
    pub eps_schedule: Vec<f64>,
    pub omega: f64,
    pub rho_mode: String,
    pub tol_rel: f64,
    pub tol_abs: f64,
    pub max_outer: usize,
}

impl Default for CouplingSection {
    fn default() -> Self {
        let d = CouplingConfig::default();
        CouplingSection {
            eps_schedule: d.eps_schedule,
            omega: d.omega,
            rho_mode: "one".into(),
            tol_rel: d.tol_rel,
            tol_abs: d.tol_abs,
            max_outer: d.max_outer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// `zero`, `downward` or `swirl`.
    pub body_force: String,
    pub force_magnitude: f64,
    /// `zero` or `circulation`.
    pub v0: String,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { body_force: "zero".into(), force_magnitude: 1.0, v0: "zero".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub out_dir: String,
    pub dump_fields: bool,
    pub seed: u64,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { out_dir: "out".into(), dump_fields: false, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub samples: usize,
    pub lipschitz_pairs: usize,
    /// 1 or 2 refinement levels starting at `geometry.refinement`.
    pub levels: u32,
    pub eps_lipschitz: Vec<f64>,
}

impl Default for VerifySection {
    fn default() -> Self {
        let d = VerifySettings::default();
        VerifySection { samples: d.samples, lipschitz_pairs: d.lipschitz_pairs, levels: 2, eps_lipschitz: d.eps_lipschitz }
    }
}

fn one_u32() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub solid: SolidSection,
    #[serde(default)]
    pub law: LawSection,
    #[serde(default)]
    pub fluid: FluidSection,
    #[serde(default)]
    pub coupling: CouplingSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub verify: VerifySection,
}

impl RunConfig {
    /// Defaults with the given preset.
    pub fn with_preset(preset: Preset) -> Self {
        RunConfig {
            geometry: GeometrySection { preset: preset.to_string(), amplitude: None, refinement: 1 },
            time: TimeSection::default(),
            solid: SolidSection::default(),
            law: LawSection::default(),
            fluid: FluidSection::default(),
            coupling: CouplingSection::default(),
            data: DataSection::default(),
            output: OutputSection::default(),
            verify: VerifySection::default(),
        }
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.to_string();
            if msg.contains("missing field") {
                FsiError::Config(format!("{msg}\ndefaults:\n{DEFAULT_TABLE}"))
            } else {
                FsiError::Config(msg)
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| FsiError::Config(e.to_string()))
    }

    pub fn preset(&self) -> Result<Preset> {
        self.geometry.preset.parse()
    }

    pub fn amplitude(&self) -> Result<f64> {
        Ok(match (self.geometry.amplitude, self.preset()?) {
            (Some(a), _) => a,
            (None, Preset::CurvedInterface) => 0.1,
            (None, Preset::FlatChannel) => 0.0,
        })
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.time.t_final, self.time.n_steps)
    }

    pub fn law(&self) -> Result<DiffusionLaw> {
        let l = &self.law;
        let kind: LawKind = l.id.parse()?;
        let (alpha_min, alpha_max) = match kind {
            LawKind::TimeModulated => (l.alpha_min, l.alpha_max),
            _ => (l.kappa, l.kappa),
        };
        let kappa = if kind == LawKind::TimeModulated { l.alpha_min } else { l.kappa };
        DiffusionLaw::new(kind, kappa, l.beta, alpha_min, alpha_max, self.time.t_final)
    }

    pub fn solid_params(&self) -> Result<SolidParams> {
        SolidParams::new(self.solid.mu, self.solid.lambda)
    }

    pub fn step_options(&self) -> StepOptions {
        StepOptions { tol: self.fluid.tol, max_it: self.fluid.max_it, newton: self.fluid.newton }
    }

    pub fn rho_mode(&self) -> Result<RhoMode> {
        self.coupling.rho_mode.parse()
    }

    /// Coupling settings with `ρ = 1`; paper mode sets `ρ` (and `ω = 1`)
    /// once the constants are measured.
    pub fn coupling_config(&self) -> CouplingConfig {
        let c = &self.coupling;
        CouplingConfig {
            eps_schedule: c.eps_schedule.clone(),
            omega: c.omega,
            rho: 1.0,
            tol_rel: c.tol_rel,
            tol_abs: c.tol_abs,
            max_outer: c.max_outer,
        }
    }

    pub fn body_force(&self) -> Result<BodyForce> {
        let m = self.data.force_magnitude;
        match self.data.body_force.as_str() {
            "zero" => Ok(BodyForce::Zero),
            "downward" => Ok(BodyForce::Downward(m)),
            "swirl" => Ok(BodyForce::Swirl(m)),
            other => Err(FsiError::Config(format!(
                "unknown data.body_force {other:?} (expected zero, downward or swirl)"
            ))),
        }
    }

    pub fn initial_velocity(&self) -> Result<InitialVelocity> {
        self.data.v0.parse()
    }

    pub fn verify_settings(&self, seed: u64) -> VerifySettings {
        let r = self.geometry.refinement;
        VerifySettings {
            samples: self.verify.samples,
            lipschitz_pairs: self.verify.lipschitz_pairs,
            refinements: (r..r + self.verify.levels).collect(),
            seed,
            eps_lipschitz: self.verify.eps_lipschitz.clone(),
        }
    }

    /// Re-runs every range check of the owning modules.
    pub fn validate(&self) -> Result<()> {
        self.preset()?;
        let amplitude = self.amplitude()?;
        if !(amplitude.is_finite() && amplitude.abs() < 0.25) {
            return Err(FsiError::Config(format!("geometry.amplitude = {amplitude} must satisfy |a| < 0.25")));
        }
        if self.geometry.refinement > MAX_REFINEMENT {
            return Err(FsiError::Config(format!(
                "geometry.refinement = {} is out of range 0..={MAX_REFINEMENT}",
                self.geometry.refinement
            )));
        }
        self.grid()?;
        self.solid_params()?;
        self.law()?;
        if !(self.fluid.tol > 0.0 && self.fluid.max_it > 0) {
            return Err(FsiError::Config("fluid.tol must be positive and fluid.max_it at least 1".into()));
        }
        self.coupling_config().validate()?;
        self.rho_mode()?;
        self.body_force()?;
        if !self.data.force_magnitude.is_finite() {
            return Err(FsiError::Config("data.force_magnitude must be finite".into()));
        }
        self.initial_velocity()?;
        if !(1..=2).contains(&self.verify.levels) {
            return Err(FsiError::Config("verify.levels must be 1 or 2".into()));
        }
        if self.geometry.refinement + self.verify.levels - 1 > MAX_REFINEMENT {
            return Err(FsiError::Config("verify levels exceed the maximum refinement".into()));
        }
        if self.verify.samples == 0 || self.verify.lipschitz_pairs == 0 {
            return Err(FsiError::Config("verify.samples and verify.lipschitz_pairs must be positive".into()));
        }
        if self.verify.eps_lipschitz.is_empty() || self.verify.eps_lipschitz.iter().any(|e| !(*e >= 0.0)) {
            return Err(FsiError::Config("verify.eps_lipschitz must be a nonempty list of eps >= 0".into()));
        }
        Ok(())
    }

    /// Assembles the coupled problem at refinement `r` (the configured one by default).
    pub fn build_problem(&self, refinement: Option<u32>) -> Result<CoupledProblem> {
        let mesh = build_geometry(self.preset()?, self.amplitude()?, refinement.unwrap_or(self.geometry.refinement))?;
        CoupledProblem::new(
            mesh,
            self.grid()?,
            self.solid_params()?,
            FluidParams::new(self.law()?),
            self.body_force()?,
            self.initial_velocity()?,
            self.step_options(),
        )
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| FsiError::Config(format!("cannot read {}: {e}", path.display())))?;
    RunConfig::parse_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = RunConfig::parse_str("[geometry]\npreset = \"flat-channel\"\n").unwrap();
        assert_eq!(cfg, RunConfig::with_preset(Preset::FlatChannel));
        assert_eq!(cfg.coupling_config(), CouplingConfig::default());
        assert_eq!(cfg.law().unwrap(), DiffusionLaw::saturating(1.0, 1.0).unwrap());
        let curved = RunConfig::parse_str("[geometry]\npreset = \"curved-interface\"\n").unwrap();
        assert_eq!(curved.amplitude().unwrap(), 0.1);
    }

    #[test]
    fn missing_preset_lists_defaults() {
        let err = RunConfig::parse_str("[time]\nn_steps = 4\n").unwrap_err().to_string();
        assert!(err.contains("geometry"), "{err}");
        assert!(err.contains("defaults:"), "{err}");
    }

    #[test]
    fn unknown_key_names_key_and_line() {
        let err = RunConfig::parse_str("[geometry]\npreset = \"flat-channel\"\n\n[time]\nsteps = 3\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("steps") && err.contains("line 5"), "{err}");
    }

    #[test]
    fn schedule_must_decrease() {
        let text = "[geometry]\npreset = \"flat-channel\"\n[coupling]\neps_schedule = [1e-3, 1e-2]\n";
        let err = RunConfig::parse_str(text).unwrap_err().to_string();
        assert!(err.contains("CouplingConfig invariant"), "{err}");
    }

    #[test]
    fn range_violations_are_rejected() {
        for extra in [
            "[solid]\nmu = -1.0\n",
            "[coupling]\nomega = 1.5\n",
            "[coupling]\nrho_mode = \"half\"\n",
            "[law]\nid = \"cubic\"\n",
            "[data]\nbody_force = \"wind\"\n",
            "[time]\nn_steps = 0\n",
            "[verify]\nlevels = 3\n",
        ] {
            let text = format!("[geometry]\npreset = \"flat-channel\"\n{extra}");
            assert!(RunConfig::parse_str(&text).is_err(), "{extra}");
        }
        let steep = "[geometry]\npreset = \"curved-interface\"\namplitude = 0.3\n";
        assert!(RunConfig::parse_str(steep).is_err());
    }

    #[test]
    fn round_trip() {
        let text = "[geometry]\npreset = \"curved-interface\"\namplitude = 0.05\nrefinement = 2\n\
                    [law]\nid = \"time-modulated\"\nalpha_min = 0.5\nalpha_max = 1.5\n\
                    [coupling]\neps_schedule = [1e-2, 0.0]\nrho_mode = \"paper\"\n";
        let cfg = RunConfig::parse_str(text).unwrap();
        let again = RunConfig::parse_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.rho_mode().unwrap(), RhoMode::Paper);
        assert_eq!(again.law().unwrap().kind, LawKind::TimeModulated);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn base() -> RunConfig {
            RunConfig::with_preset(Preset::CurvedInterface)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn valid_configs_round_trip(
                amplitude in -0.24f64..0.24,
                n_steps in 1usize..40,
                mu in 0.1f64..10.0,
                omega in 0.05f64..=1.0,
                eps in proptest::collection::vec(1e-6f64..1.0, 1..5),
            ) {
                let mut cfg = base();
                cfg.geometry.amplitude = Some(amplitude);
                cfg.time.n_steps = n_steps;
                cfg.solid.mu = mu;
                cfg.coupling.omega = omega;
                let mut eps = eps;
                eps.sort_by(|a, b| b.partial_cmp(a).unwrap());
                eps.dedup();
                cfg.coupling.eps_schedule = eps;
                prop_assert!(cfg.validate().is_ok());
                let back = RunConfig::parse_str(&cfg.to_toml().unwrap()).unwrap();
                prop_assert_eq!(back, cfg);
            }

            #[test]
            fn out_of_range_values_are_rejected(
                omega in prop_oneof![-1.0f64..=0.0, 1.0001f64..3.0],
                amplitude in 0.25f64..1.0,
            ) {
                let mut cfg = base();
                cfg.coupling.omega = omega;
                prop_assert!(cfg.validate().is_err());
                let mut cfg = base();
                cfg.geometry.amplitude = Some(-amplitude);
                prop_assert!(cfg.validate().is_err());
            }

            #[test]
            fn increasing_schedules_are_rejected(a in 1e-5f64..0.5, gap in 1e-3f64..0.5) {
                let mut cfg = base();
                cfg.coupling.eps_schedule = vec![a, a + gap];
                prop_assert!(cfg.validate().is_err());
            }
        }
    }
}
