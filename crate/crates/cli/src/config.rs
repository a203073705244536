//! Experiment configuration: one TOML file, strict schema, every key
//! defaulted. Precedence is defaults < file < `--set` < `--seed`/`LAB_SEED`.

use crate::error::CliError;
use jumplab::fourier::InterpMode;
use jumplab::levy_model::{shipped, LevyMeasureSpec};
use jumplab::nonlocal_op::InnerBall;
use jumplab::pbp_ode::OdeScheme;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub measure: MeasureSection,
    pub grid: GridSection,
    pub sigma: SigmaSection,
    pub drift: DriftSection,
    pub resolvent: ResolventSection,
    pub zvonkin: ZvonkinSection,
    pub sde: SdeSection,
    pub malliavin: MalliavinSection,
    pub pbp: PbpSection,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 20_240_601,
            measure: MeasureSection::default(),
            grid: GridSection::default(),
            sigma: SigmaSection::default(),
            drift: DriftSection::default(),
            resolvent: ResolventSection::default(),
            zvonkin: ZvonkinSection::default(),
            sde: SdeSection::default(),
            malliavin: MalliavinSection::default(),
            pbp: PbpSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureSection {
    /// one of `isotropic_1d`, `cylindrical_2d`, `discrete_2d`, `sde_1d`
    pub shipped: String,
    /// inline spec; overrides `shipped` when present
    #[serde(skip_serializing_if = "Option::is_none")]
    pub custom: Option<LevyMeasureSpec>,
    pub quad_levels: usize,
    pub inner: InnerBall,
    pub path_horizon: f64,
    pub path_cutoff: f64,
}

impl Default for MeasureSection {
    fn default() -> Self {
        Self {
            shipped: "sde_1d".into(),
            custom: None,
            quad_levels: 8,
            inner: InnerBall::Lumped,
            path_horizon: 1.0,
            path_cutoff: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub half_period: f64,
    pub n: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            half_period: 8.0,
            n: 128,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaKind {
    Identity,
    Constant,
    /// `σ(x) = diag(1 + (L/ω) sin(ω x_i))` with `ω = π/4`
    Variable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SigmaSection {
    pub kind: SigmaKind,
    /// row-major, `d²` entries
    pub matrix: Vec<f64>,
    pub lipschitz: f64,
}

impl Default for SigmaSection {
    fn default() -> Self {
        Self {
            kind: SigmaKind::Identity,
            matrix: Vec::new(),
            lipschitz: 0.2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftKind {
    Zero,
    Constant,
    PlaneWave,
    Holder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftSection {
    pub kind: DriftKind,
    pub beta: f64,
    pub amplitude: f64,
    /// highest dyadic level of a Hölder sample (negative: grid maximum)
    pub max_level: i32,
    pub constant: Vec<f64>,
    /// integer multiples of `π/L` per axis
    pub wavenumber: Vec<f64>,
}

impl Default for DriftSection {
    fn default() -> Self {
        Self {
            kind: DriftKind::Holder,
            beta: 0.7,
            amplitude: 1.0,
            max_level: 3,
            constant: Vec::new(),
            wavenumber: vec![2.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingKind {
    /// `f = b`, the Zvonkin equation
    Drift,
    /// `f = cos(ξ·x)` with `ξ = wavenumber·π/L`
    PlaneWave,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolventSection {
    pub forcing: ForcingKind,
    pub wavenumber: Vec<f64>,
    /// fixed λ for plane-wave runs; drift runs search `λ₀` from here
    pub lambda: f64,
    pub lambda_cap: f64,
    pub tolerance: f64,
    pub residual_tol: f64,
    pub max_iters: usize,
    pub gamma: f64,
    pub p: f64,
    pub closed_form_tol: f64,
}

impl Default for ResolventSection {
    fn default() -> Self {
        Self {
            forcing: ForcingKind::Drift,
            wavenumber: vec![6.0],
            lambda: 1.0,
            lambda_cap: 1e6,
            tolerance: 1e-10,
            residual_tol: 1e-6,
            max_iters: 400,
            gamma: 0.45,
            p: 2.0,
            closed_form_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZvonkinSection {
    pub target: f64,
    pub lambda_start: f64,
    pub lambda_cap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    pub interp: InterpMode,
    pub inversion_tol: f64,
    pub round_trip_points: usize,
    pub round_trip_tol: f64,
    /// tabulate the `K` moments over every quadrature node (costly in 2-d)
    pub k_moments: bool,
}

impl Default for ZvonkinSection {
    fn default() -> Self {
        Self {
            target: 0.5,
            lambda_start: 1.0,
            lambda_cap: 1e7,
            mu: None,
            interp: InterpMode::Spectral,
            inversion_tol: 1e-13,
            round_trip_points: 1000,
            round_trip_tol: 1e-8,
            k_moments: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeSection {
    /// quadrature depth of the SDE pipelines; the inner ball is dropped, so
    /// the path cutoff is `2^{−levels}`
    pub levels: usize,
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub x0: Vec<f64>,
    pub n_max: usize,
    pub tol: f64,
    pub contraction_limit: f64,
    pub euler_refinements: u32,
    pub agreement_tol: f64,
    pub ratio_limit: f64,
    pub flow_h: f64,
    pub flow_paths: usize,
}

impl Default for SdeSection {
    fn default() -> Self {
        Self {
            levels: 3,
            horizon: 1.0,
            dt: 1.0 / 64.0,
            paths: 8,
            x0: vec![0.25],
            n_max: 60,
            tol: 1e-12,
            contraction_limit: 0.5,
            euler_refinements: 4,
            agreement_tol: 1e-3,
            ratio_limit: 0.6,
            flow_h: 1e-3,
            flow_paths: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MalliavinSection {
    pub samples: usize,
    pub dt: f64,
    pub route_tol: f64,
    pub bound_paths: usize,
    pub bound_horizon: f64,
    pub r_grid: Vec<f64>,
    pub n_iter: usize,
    pub growth_limit: f64,
}

impl Default for MalliavinSection {
    fn default() -> Self {
        Self {
            samples: 8,
            dt: 1.0 / 128.0,
            route_tol: 1e-4,
            bound_paths: 4,
            bound_horizon: 0.5,
            r_grid: vec![0.05, 0.25, 0.45],
            n_iter: 8,
            growth_limit: 1.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PbpSection {
    pub beta: f64,
    pub amplitude: f64,
    pub paths: usize,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub dt0: f64,
    pub refinements: usize,
    pub schemes: Vec<OdeScheme>,
    pub tolerance: f64,
    pub probe_dt: f64,
    pub probe_perturbation: f64,
    pub probe_trials: usize,
    pub probe_tol: f64,
}

impl Default for PbpSection {
    fn default() -> Self {
        Self {
            beta: 0.5,
            amplitude: 0.5,
            paths: 4,
            x0: vec![0.1],
            horizon: 1.0,
            dt0: 1.0 / 512.0,
            refinements: 4,
            schemes: OdeScheme::ALL.to_vec(),
            tolerance: 1e-4,
            probe_dt: 1.0 / 128.0,
            probe_perturbation: 1e-2,
            probe_trials: 4,
            probe_tol: 1e-13,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    /// output root; relative paths resolve against the working directory
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::ConfigInvalid(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)
            }
        }
    }

    /// Applies `section.key=value`; the value is parsed as a TOML literal
    /// and falls back to a bare string. Call `validate` once all overrides
    /// are in.
    pub fn set(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::ConfigInvalid(format!("expected key=value, got `{assignment}`")))?;
        let key = key.trim();
        let value = parse_literal(raw.trim());
        let mut tree = toml::Value::try_from(&*self).map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        let mut slot = &mut tree;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let table = slot
                .as_table_mut()
                .ok_or_else(|| CliError::ConfigInvalid(format!("`{key}` does not name a table entry")))?;
            if i + 1 == parts.len() {
                table.insert(part.to_string(), value.clone());
                break;
            }
            slot = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
        }
        let text = toml::to_string(&tree).map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        *self = toml::from_str(&text).map_err(|e| CliError::ConfigInvalid(format!("--set {key}: {e}")))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::ConfigInvalid(m));
        let spec = self.spec()?;
        let d = spec.dim;
        if self.grid.n < 8 || !self.grid.n.is_power_of_two() {
            return bad(format!("grid.n = {} must be a power of two >= 8", self.grid.n));
        }
        if !(self.grid.half_period > 0.0) {
            return bad("grid.half_period must be positive".into());
        }
        if self.sigma.kind == SigmaKind::Constant && self.sigma.matrix.len() != d * d {
            return bad(format!("sigma.matrix needs {} entries", d * d));
        }
        if self.drift.kind == DriftKind::Constant && self.drift.constant.len() != d {
            return bad(format!("drift.constant needs {d} entries"));
        }
        for (name, v) in [
            ("drift.wavenumber", &self.drift.wavenumber),
            ("resolvent.wavenumber", &self.resolvent.wavenumber),
        ] {
            if v.len() != d {
                return bad(format!("{name} needs {d} entries"));
            }
        }
        for (name, v) in [("sde.x0", &self.sde.x0), ("pbp.x0", &self.pbp.x0)] {
            if v.len() != d {
                return bad(format!("{name} needs {d} entries"));
            }
        }
        for (name, v) in [
            ("sde.dt", self.sde.dt),
            ("sde.horizon", self.sde.horizon),
            ("malliavin.dt", self.malliavin.dt),
            ("pbp.dt0", self.pbp.dt0),
            ("pbp.horizon", self.pbp.horizon),
            ("measure.path_horizon", self.measure.path_horizon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.malliavin.r_grid.iter().any(|&r| !(r > 0.0 && r < self.malliavin.bound_horizon)) {
            return bad("malliavin.r_grid must lie in (0, bound_horizon)".into());
        }
        if self.pbp.schemes.is_empty() {
            return bad("pbp.schemes is empty".into());
        }
        if self.output.dir.is_empty() {
            return bad("output.dir is empty".into());
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<LevyMeasureSpec, CliError> {
        if let Some(s) = &self.measure.custom {
            s.validate().map_err(|e| CliError::ConfigInvalid(format!("measure.custom: {e}")))?;
            return Ok(s.clone());
        }
        Ok(match self.measure.shipped.as_str() {
            "isotropic_1d" => shipped::isotropic_1d(),
            "cylindrical_2d" => shipped::cylindrical_2d(),
            "discrete_2d" => shipped::discrete_2d(),
            "sde_1d" => shipped::sde_1d(),
            other => return Err(CliError::ConfigInvalid(format!("unknown shipped measure `{other}`"))),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("[grid]\nsize = 4\n").is_err());
        assert!(ExperimentConfig::from_toml("colour = 1\n").is_err());
    }

    #[test]
    fn set_overrides() {
        let mut c = ExperimentConfig::default();
        c.set("grid.n=64").unwrap();
        c.set("drift.kind=zero").unwrap();
        c.set("pbp.schemes=[\"rk4\"]").unwrap();
        assert_eq!(c.grid.n, 64);
        assert_eq!(c.drift.kind, DriftKind::Zero);
        assert_eq!(c.pbp.schemes, vec![OdeScheme::Rk4]);
        assert!(c.set("grid.bogus=1").is_err());
        c.set("grid.n=63").unwrap();
        assert!(c.validate().is_err());
        assert!(c.set("no_equals").is_err());
    }

    #[test]
    fn dimension_checks() {
        let mut c = ExperimentConfig::default();
        c.set("measure.shipped=cylindrical_2d").unwrap();
        assert!(c.validate().is_err());
        for kv in ["drift.wavenumber=[1.0, 2.0]", "resolvent.wavenumber=[1.0, 0.0]", "sde.x0=[0.0, 0.0]", "pbp.x0=[0.0, 0.0]"] {
            c.set(kv).unwrap();
        }
        c.validate().unwrap();
        c.measure.shipped = "nope".into();
        assert!(c.validate().is_err());
    }
}
