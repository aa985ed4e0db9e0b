//! Run configuration documents (TOML or JSON).

use std::f64::consts::FRAC_1_SQRT_2;
use std::path::{Path, PathBuf};

use qudit_control::gates::GateKind;
use qudit_control::sqpt::SqptSettings;
use qudit_control::units::RB87_MASS_U;
use qudit_control::{
    LatticeConfig, NoiseModel, OptimizerConfig, RobustnessEnsemble, SubspaceMap, TargetGate,
    UnitTable,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub units: UnitsSection,
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub target: TargetSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub sqpt: SqptSection,
    #[serde(default)]
    pub phase: PhaseSection,
    /// Coefficients artifact (or bare ramp JSON) used by `sweep`, `sqpt` and
    /// `export-ramp`. Relative paths resolve against the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp: Option<PathBuf>,
    /// Output location is not an input, so it is kept out of artifacts.
    #[serde(default, skip_serializing)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnitsSection {
    pub wavelength_nm: f64,
    pub mass_u: f64,
}

impl Default for UnitsSection {
    fn default() -> Self {
        Self {
            wavelength_nm: 1064.0,
            mass_u: RB87_MASS_U,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetSection {
    pub gate: GateKind,
    /// Momentum orders spanning the qudit, in basis order.
    pub subspace: Vec<i64>,
}

impl Default for TargetSection {
    fn default() -> Self {
        Self {
            gate: GateKind::X,
            subspace: vec![-1, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSection {
    pub duration_us: f64,
    pub dt_ns: f64,
    pub f_max_khz: f64,
    pub fidelity_goal: f64,
    pub max_iters: usize,
    pub restarts: usize,
    pub epsilon0: f64,
    pub init_amplitude: f64,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self {
            duration_us: 350.0,
            dt_ns: 500.0,
            f_max_khz: 125.0,
            fidelity_goal: 0.99,
            max_iters: 2000,
            restarts: 1,
            epsilon0: 1.0,
            init_amplitude: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    /// Depths span `lattice.depth ± half_width`.
    pub half_width: f64,
    pub depths: usize,
    /// Defaults to `[lattice.quasimomentum]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quasimomenta: Option<Vec<f64>>,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            half_width: 0.0,
            depths: 1,
            quasimomenta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Defaults to `lattice.depth`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    pub half_width: f64,
    pub points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            center: None,
            half_width: 1.0,
            points: 81,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisChoice {
    /// The whole truncated lattice.
    Standard,
    /// Orders `−4..=4`.
    Compact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SqptSection {
    pub basis: BasisChoice,
    pub bootstrap: usize,
}

impl Default for SqptSection {
    fn default() -> Self {
        Self {
            basis: BasisChoice::Standard,
            bootstrap: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseSection {
    /// Each `j` defines the two-mode subspace `{−j, +j}`.
    pub orders: Vec<i64>,
    /// Weight of `|−j⟩`; the `|+j⟩` weight is `√(1 − a²)`.
    pub amplitude: f64,
    /// Prepared phases in radians; defaults to `2πn/8`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thetas: Option<Vec<f64>>,
    pub resamples: usize,
}

impl Default for PhaseSection {
    fn default() -> Self {
        Self {
            orders: vec![1, 2],
            amplitude: FRAC_1_SQRT_2,
            thetas: None,
            resamples: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

/// Dimensionless quantities derived from the laboratory-unit settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Derived {
    pub time_unit_s: f64,
    pub t_f: f64,
    pub dt: f64,
    pub steps: usize,
    pub n_max: usize,
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let is_json = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg: RunConfig = if is_json {
            serde_json::from_str(text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        };
        if let Some(r) = &cfg.ramp {
            if r.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.ramp = Some(base.join(r));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    /// Seeds every stochastic component from the top-level seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn unit_table(&self) -> Result<UnitTable, CliError> {
        let u = &self.units;
        if !(u.wavelength_nm > 0.0 && u.mass_u > 0.0) {
            return Err(CliError::Config(
                "units need positive wavelength_nm and mass_u".into(),
            ));
        }
        Ok(UnitTable {
            wavelength_m: u.wavelength_nm * 1e-9,
            mass_kg: u.mass_u * qudit_control::units::ATOMIC_MASS_UNIT,
        })
    }

    pub fn lattice(&self) -> Result<LatticeConfig, CliError> {
        self.lattice.validate()?;
        Ok(self.lattice)
    }

    pub fn target(&self) -> Result<TargetGate, CliError> {
        let map = SubspaceMap::new(self.target.subspace.clone())?;
        let t = TargetGate::builtin(self.target.gate, map)?;
        self.lattice()?.check_subspace(&t.subspace)?;
        Ok(t)
    }

    pub fn optimizer(&self) -> Result<OptimizerConfig, CliError> {
        let o = &self.optimizer;
        let mut cfg = OptimizerConfig::from_physical(
            &self.unit_table()?,
            o.duration_us * 1e-6,
            o.dt_ns * 1e-9,
            o.f_max_khz * 1e3,
        )?;
        cfg.fidelity_goal = o.fidelity_goal;
        cfg.max_iters = o.max_iters;
        cfg.restarts = o.restarts;
        cfg.epsilon0 = o.epsilon0;
        cfg.init_amplitude = o.init_amplitude;
        cfg.rng_seed = self.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn derived(&self) -> Result<Derived, CliError> {
        let o = self.optimizer()?;
        Ok(Derived {
            time_unit_s: self.unit_table()?.time_unit_s(),
            t_f: o.t_f,
            dt: o.dt,
            steps: qudit_control::ramp::step_count(o.t_f, o.dt)?,
            n_max: o.n_max,
        })
    }

    pub fn ensemble(&self) -> Result<RobustnessEnsemble, CliError> {
        let e = &self.ensemble;
        if e.depths == 0 {
            return Err(CliError::Config(
                "ensemble.depths must be at least 1".into(),
            ));
        }
        if e.depths > 1 && !(e.half_width > 0.0) {
            return Err(CliError::Config(
                "ensemble.half_width must be positive for several depths".into(),
            ));
        }
        let depths =
            RobustnessEnsemble::around(self.lattice.depth, e.half_width, e.depths)?.depth_samples;
        let qs = e
            .quasimomenta
            .clone()
            .unwrap_or_else(|| vec![self.lattice.quasimomentum]);
        Ok(RobustnessEnsemble::new(depths, qs)?)
    }

    pub fn sweep_depths(&self) -> Result<Vec<f64>, CliError> {
        let s = &self.sweep;
        if s.points < 2 || !(s.half_width > 0.0) {
            return Err(CliError::Config(
                "sweep needs points >= 2 and a positive half_width".into(),
            ));
        }
        let c = s.center.unwrap_or(self.lattice.depth);
        if c - s.half_width < 0.0 {
            return Err(CliError::Config(
                "sweep range reaches negative depths".into(),
            ));
        }
        Ok(qudit_control::control::linspace(
            c - s.half_width,
            c + s.half_width,
            s.points,
        ))
    }

    pub fn noise(&self) -> Result<NoiseModel, CliError> {
        let n = self.noise.clone().with_seed(self.seed);
        n.validate()?;
        Ok(n)
    }

    pub fn sqpt_settings(&self) -> Result<SqptSettings, CliError> {
        let lat = self.lattice()?;
        let s = match self.sqpt.basis {
            BasisChoice::Standard => SqptSettings::standard(&lat)?,
            BasisChoice::Compact => SqptSettings::compact(&lat)?,
        };
        Ok(s.with_bootstrap(self.sqpt.bootstrap))
    }

    pub fn phase_thetas(&self) -> Vec<f64> {
        self.phase
            .thetas
            .clone()
            .unwrap_or_else(qudit_control::phase::eighth_turns)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfig, CliError> {
        RunConfig::parse(s, Path::new("run.toml"))
    }

    #[test]
    fn minimal_document_takes_defaults() {
        let c = parse("[lattice]\ndepth = 5.57\n").unwrap();
        assert_eq!(c.target.gate, GateKind::X);
        let d = c.derived().unwrap();
        assert_eq!(d.steps, 700);
        assert_eq!(d.n_max, 44);
        assert_eq!(c.ensemble().unwrap().len(), 1);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("[lattice]\ndepth = 5.0\ncolour = 1\n").is_err());
        assert!(parse("bogus = 1\n[lattice]\ndepth = 5.0\n").is_err());
        assert!(parse("[lattice]\ndepth = 5.0\n[optimizer]\nstep = 1\n").is_err());
    }

    #[test]
    fn non_integer_step_count_is_a_config_error() {
        let c = parse("[lattice]\ndepth = 5.0\n[optimizer]\ndt_ns = 333.0\n").unwrap();
        assert!(matches!(c.optimizer(), Err(CliError::Config(_))));
    }

    #[test]
    fn json_and_toml_agree() {
        let t = parse("seed = 3\n[lattice]\ndepth = 5.0\n[target]\ngate = \"h\"\n").unwrap();
        let j = RunConfig::parse(
            r#"{"seed": 3, "lattice": {"depth": 5.0}, "target": {"gate": "h"}}"#,
            Path::new("run.json"),
        )
        .unwrap();
        assert_eq!(t, j);
    }

    #[test]
    fn relative_ramp_resolves_against_config_dir() {
        let c = RunConfig::parse(
            "ramp = \"r.json\"\n[lattice]\ndepth = 5.0\n",
            Path::new("cfg/run.toml"),
        )
        .unwrap();
        assert_eq!(c.ramp.unwrap(), Path::new("cfg/r.json"));
    }

    #[test]
    fn ensemble_spans_window() {
        let c =
            parse("[lattice]\ndepth = 5.0\n[ensemble]\nhalf_width = 0.3\ndepths = 3\n").unwrap();
        let e = c.ensemble().unwrap();
        assert_eq!(e.depth_samples.len(), 3);
        assert!(
            (e.depth_samples[0] - 4.7).abs() < 1e-12 && (e.depth_samples[2] - 5.3).abs() < 1e-12
        );
    }
}
