//! Run configuration. Frequencies are plain Hz here and become rad/s on the way in;
//! phases and Jτ are given in units of π.

use phip_core::catalog::BuildOptions;
use phip_core::propagator::EvolveOptions;
use phip_core::robustness::{ErrorKind, SweepSpec};
use phip_core::spin::{ErrorParams, MoleculeParams};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::f64::consts::{PI, TAU};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub a_hz: f64,
    pub a_sigma_hz: f64,
    pub j_hz: f64,
    pub omega_hz: f64,
    pub omega_i_hz: f64,

    pub seq: Option<String>,
    pub phi_pi: Option<f64>,
    pub j_tau_pi: Option<f64>,
    pub phi_i_pi: Option<f64>,
    pub eta: Option<f64>,
    pub m: Option<usize>,
    pub reps: Option<usize>,
    pub design_df_hz: Option<f64>,

    pub d0_hz: f64,
    pub d1_hz: f64,
    pub ddf_hz: f64,
    pub drd_hz: f64,
    pub dcs_hz: f64,

    pub error: Option<ErrorKind>,
    pub grid_min_hz: Option<f64>,
    pub grid_max_hz: Option<f64>,
    pub per_decade: usize,
    pub baseline_df_hz: Option<f64>,
    pub negative: bool,
    pub threads: Option<usize>,
    pub rows: Option<String>,

    pub evolve: EvolveOptions,
    pub out_dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = RunConfig {
            a_hz: 0.0,
            a_sigma_hz: 0.0,
            j_hz: 0.0,
            omega_hz: 0.0,
            omega_i_hz: 0.0,
            seq: None,
            phi_pi: None,
            j_tau_pi: None,
            phi_i_pi: None,
            eta: None,
            m: None,
            reps: None,
            design_df_hz: None,
            d0_hz: 0.0,
            d1_hz: 0.0,
            ddf_hz: 0.0,
            drd_hz: 0.0,
            dcs_hz: 0.0,
            error: None,
            grid_min_hz: None,
            grid_max_hz: None,
            per_decade: 24,
            baseline_df_hz: None,
            negative: false,
            threads: None,
            rows: None,
            evolve: EvolveOptions::default(),
            out_dir: PathBuf::from("."),
            formats: vec![Format::Csv, Format::Json, Format::Svg],
        };
        c.apply_preset("pyruvate").expect("built-in preset");
        c
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}:{line}:{column}: {msg}")]
    Parse { path: String, line: usize, column: usize, msg: String },
    #[error("--set {0}: expected key=value")]
    SetSyntax(String),
    #[error("--set {key}: {msg}")]
    SetKey { key: String, msg: String },
    #[error("unknown preset {0:?} (available: pyruvate)")]
    Preset(String),
    #[error("{0}")]
    Invalid(String),
}

impl RunConfig {
    pub fn apply_preset(&mut self, name: &str) -> Result<(), ConfigError> {
        match name.to_ascii_lowercase().as_str() {
            "pyruvate" => {
                let p = MoleculeParams::pyruvate();
                let hz = |w: f64| (w / TAU * 1e9).round() / 1e9;
                self.a_hz = hz(p.a);
                self.a_sigma_hz = hz(p.a_sigma);
                self.j_hz = hz(p.j);
                self.omega_hz = hz(p.omega);
                self.omega_i_hz = hz(p.omega_i);
                Ok(())
            }
            other => Err(ConfigError::Preset(other.to_string())),
        }
    }

    pub fn from_json_str(s: &str, path: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(s).map_err(|e| ConfigError::Parse {
            path: path.to_string(),
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let s = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Read { path: path.display().to_string(), source })?;
        Self::from_json_str(&s, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        crate::output::json_string(self)
    }

    /// Apply one `key=value` override; dotted keys reach into `evolve`.
    pub fn set(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (key, raw) = kv.split_once('=').ok_or_else(|| ConfigError::SetSyntax(kv.to_string()))?;
        let key = key.trim();
        let raw = raw.trim();
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut doc = serde_json::to_value(&*self).expect("config serializes");
        let mut slot = &mut doc;
        let err = |msg: &str| ConfigError::SetKey { key: key.to_string(), msg: msg.to_string() };
        let parts: Vec<&str> = key.split('.').collect();
        for (k, part) in parts.iter().enumerate() {
            let obj = slot.as_object_mut().ok_or_else(|| err("not an object"))?;
            let last = k + 1 == parts.len();
            if !obj.contains_key(*part) && !(last && k > 0) {
                return Err(err("unknown key"));
            }
            slot = obj.entry(part.to_string()).or_insert(Value::Null);
        }
        *slot = value;
        *self = serde_json::from_value(doc).map_err(|e| err(&e.to_string()))?;
        Ok(())
    }

    pub fn params(&self) -> Result<MoleculeParams, ConfigError> {
        let p = MoleculeParams {
            a: TAU * self.a_hz,
            a_sigma: TAU * self.a_sigma_hz,
            j: TAU * self.j_hz,
            omega: TAU * self.omega_hz,
            omega_i: TAU * self.omega_i_hz,
        };
        if !p.is_valid() {
            return Err(ConfigError::Invalid("molecule parameters must be finite and non-negative".into()));
        }
        Ok(p)
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            phi: self.phi_pi.map(|x| x * PI),
            j_tau: self.j_tau_pi.map(|x| x * PI),
            phi_i: self.phi_i_pi.map(|x| x * PI),
            eta: self.eta,
            m: self.m,
            reps: self.reps,
            design_df: self.design_df_hz.map(|x| x * TAU),
        }
    }

    pub fn errors(&self) -> ErrorParams {
        ErrorParams {
            delta0: TAU * self.d0_hz,
            delta1: TAU * self.d1_hz,
            delta_df: TAU * self.ddf_hz,
            delta_rd: TAU * self.drd_hz,
            delta_cs: TAU * self.dcs_hz,
        }
    }

    pub fn sequence(&self) -> Result<&'static str, ConfigError> {
        let name = self.seq.as_deref().ok_or_else(|| ConfigError::Invalid("no sequence given (--seq)".into()))?;
        phip_core::catalog::canonical(name).ok_or_else(|| ConfigError::Invalid(format!("unknown sequence {name:?}")))
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec, ConfigError> {
        let error = self.error.ok_or_else(|| ConfigError::Invalid("no error line given (--error)".into()))?;
        if self.per_decade == 0 {
            return Err(ConfigError::Invalid("per_decade must be positive".into()));
        }
        Ok(SweepSpec {
            sequence: self.sequence()?.to_string(),
            options: self.build_options(),
            error,
            params: self.params()?,
            grid_min: self.grid_min_hz.map(|x| x * TAU),
            grid_max: self.grid_max_hz.map(|x| x * TAU),
            per_decade: self.per_decade,
            baseline_df: self.baseline_df_hz.map(|x| x * TAU),
            negative: self.negative,
            evolve: self.evolve,
            threads: self.threads,
        })
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        let mut c = RunConfig { seq: Some("PulsePol".into()), error: Some(ErrorKind::Delta0), ..Default::default() };
        c.set("evolve.dt_max=5e-5").unwrap();
        let back = RunConfig::from_json_str(&c.to_json(), "x").unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn overrides_and_units() {
        let mut c = RunConfig::default();
        c.set("d0_hz=1000").unwrap();
        c.set("seq=PulsePol").unwrap();
        c.set("error=dDF").unwrap();
        assert!((c.errors().delta0 - TAU * 1000.0).abs() < 1e-9);
        assert_eq!(c.sequence().unwrap(), "PulsePol");
        assert_eq!(c.error, Some(ErrorKind::DeltaDf));
        assert!((c.params().unwrap().j - TAU * 11.7).abs() < 1e-12);
    }

    #[test]
    fn rejects_unknown_keys() {
        let mut c = RunConfig::default();
        assert!(matches!(c.set("bogus=1"), Err(ConfigError::SetKey { .. })));
        assert!(matches!(c.set("evolve.bogus=1"), Err(ConfigError::SetKey { .. })));
        assert!(matches!(c.set("novalue"), Err(ConfigError::SetSyntax(_))));
        let e = RunConfig::from_json_str("{\n  \"a_hz\": 1,\n  \"nope\": 2\n}", "cfg.json").unwrap_err();
        match e {
            ConfigError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other}"),
        }
    }
}
