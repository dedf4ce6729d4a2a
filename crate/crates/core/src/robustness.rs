//! Single-error sweeps, threshold extraction, parameter scans and the overview table.

use crate::catalog::{self, BuildOptions, CatalogError};
use crate::propagator::{evolve, transfer_curve_fit, EvolveOptions};
use crate::sequence::schedule;
use crate::spin::{ErrorParams, MoleculeParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    #[serde(rename = "dDF")]
    DeltaDf,
    #[serde(rename = "d0")]
    Delta0,
    #[serde(rename = "d1")]
    Delta1,
    #[serde(rename = "dCS")]
    DeltaCs,
    #[serde(rename = "dRD")]
    DeltaRd,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 5] = [ErrorKind::DeltaDf, ErrorKind::Delta0, ErrorKind::Delta1, ErrorKind::DeltaCs, ErrorKind::DeltaRd];

    pub fn key(&self) -> &'static str {
        match self {
            ErrorKind::DeltaDf => "dDF",
            ErrorKind::Delta0 => "d0",
            ErrorKind::Delta1 => "d1",
            ErrorKind::DeltaCs => "dCS",
            ErrorKind::DeltaRd => "dRD",
        }
    }

    pub fn parse(s: &str) -> Option<ErrorKind> {
        let k = s.trim().to_ascii_lowercase();
        let k = k.trim_end_matches("_hz");
        Some(match k {
            "ddf" | "df" | "delta_df" => ErrorKind::DeltaDf,
            "d0" | "delta0" | "delta_0" => ErrorKind::Delta0,
            "d1" | "delta1" | "delta_1" => ErrorKind::Delta1,
            "dcs" | "cs" | "delta_cs" => ErrorKind::DeltaCs,
            "drd" | "rd" | "delta_rd" => ErrorKind::DeltaRd,
            _ => return None,
        })
    }

    pub fn set(&self, e: &mut ErrorParams, v: f64) {
        match self {
            ErrorKind::DeltaDf => e.delta_df = v,
            ErrorKind::Delta0 => e.delta0 = v,
            ErrorKind::Delta1 => e.delta1 = v,
            ErrorKind::DeltaCs => e.delta_cs = v,
            ErrorKind::DeltaRd => e.delta_rd = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub sequence: String,
    #[serde(default)]
    pub options: BuildOptions,
    pub error: ErrorKind,
    #[serde(default = "MoleculeParams::pyruvate")]
    pub params: MoleculeParams,
    /// rad/s; A/10 when absent.
    #[serde(default)]
    pub grid_min: Option<f64>,
    /// rad/s; 2Ω when absent, and never above J for Δ_CS.
    #[serde(default)]
    pub grid_max: Option<f64>,
    #[serde(default = "default_per_decade")]
    pub per_decade: usize,
    /// Δ_DF kept on while other errors are swept; (2π)3 Hz for amp swept SLIC when absent.
    #[serde(default)]
    pub baseline_df: Option<f64>,
    /// Sweep −v instead of v.
    #[serde(default)]
    pub negative: bool,
    #[serde(default)]
    pub evolve: EvolveOptions,
    /// Worker threads; rayon's default when absent.
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_per_decade() -> usize {
    24
}

impl SweepSpec {
    pub fn new(sequence: &str, error: ErrorKind) -> Self {
        SweepSpec {
            sequence: sequence.to_string(),
            options: BuildOptions::default(),
            error,
            params: MoleculeParams::pyruvate(),
            grid_min: None,
            grid_max: None,
            per_decade: default_per_decade(),
            baseline_df: None,
            negative: false,
            evolve: EvolveOptions::default(),
            threads: None,
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        let p = &self.params;
        let mut hi = self.grid_max.unwrap_or(2.0 * p.omega);
        if self.error == ErrorKind::DeltaCs {
            hi = hi.min(p.j);
        }
        log_grid(self.grid_min.unwrap_or(p.a / 10.0), hi, self.per_decade)
    }

    fn baseline(&self) -> f64 {
        match self.baseline_df {
            Some(b) => b,
            None if catalog::canonical(&self.sequence) == Some("amp swept SLIC") => TAU * 3.0,
            None => 0.0,
        }
    }

    /// Build options and error amplitudes for one grid value.
    pub fn point_setup(&self, v: f64) -> (BuildOptions, ErrorParams) {
        let v = if self.negative { -v } else { v };
        let mut o = self.options;
        let mut e = ErrorParams::default();
        let adapts = matches!(catalog::canonical(&self.sequence), Some("SLIC*" | "PulsePol*" | "amp swept SLIC"));
        if self.error == ErrorKind::DeltaDf {
            if adapts && self.options.design_df.is_none() {
                o.design_df = Some(v);
            }
        } else {
            let b = self.baseline();
            e.delta_df = b;
            if adapts && self.options.design_df.is_none() {
                o.design_df = Some(b);
            }
        }
        self.error.set(&mut e, v);
        (o, e)
    }
}

/// Log-spaced grid starting exactly at `lo`, `per_decade` points per factor of ten, ending at or below `hi`.
pub fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    if !(lo > 0.0) || !(hi >= lo) || per_decade == 0 {
        return Vec::new();
    }
    let n = ((hi / lo).log10() * per_decade as f64 + 1e-9).floor() as usize;
    (0..=n).map(|k| lo * 10f64.powf(k as f64 / per_decade as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub sequence: String,
    pub error: ErrorKind,
    /// rad/s.
    pub values: Vec<f64>,
    /// Final transfer per value; `None` where the evolution failed.
    pub p: Vec<Option<f64>>,
    pub p0: f64,
    pub threshold90: Option<f64>,
    pub threshold80: Option<f64>,
    /// Some value below threshold90 fails.
    pub non_monotonic: bool,
    /// Ratio between neighbouring grid values.
    pub grid_spacing: f64,
    pub failures: Vec<(usize, String)>,
}

impl SweepResult {
    fn threshold(values: &[f64], p: &[Option<f64>], level: f64) -> Option<f64> {
        values.iter().zip(p).rev().find(|(_, q)| q.is_some_and(|q| q >= level)).map(|(v, _)| *v)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("error-free evolution failed: {0}")]
    Reference(String),
    #[error("error-free transfer {0} is not positive")]
    NoTransfer(f64),
    #[error("thread pool: {0}")]
    Pool(String),
}

fn final_p(spec: &SweepSpec, o: &BuildOptions, e: &ErrorParams) -> Result<f64, String> {
    let prog = catalog::build(&spec.sequence, &spec.params, o).map_err(|x| x.to_string())?;
    let sch = schedule(&prog, &spec.params).map_err(|x| x.to_string())?;
    let opts = EvolveOptions { samples: 2, sample_stride: None, ..spec.evolve };
    evolve(&sch, e, &opts).map(|t| t.final_transfer()).map_err(|x| x.to_string())
}

/// p(final) with every error of the line at zero.
pub fn reference_transfer(spec: &SweepSpec) -> Result<f64, SweepError> {
    let (o, e) = spec.point_setup(0.0);
    catalog::build(&spec.sequence, &spec.params, &o)?;
    final_p(spec, &o, &e).map_err(SweepError::Reference)
}

fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool, SweepError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    b.build().map_err(|e| SweepError::Pool(e.to_string()))
}

pub fn sweep(spec: &SweepSpec) -> Result<SweepResult, SweepError> {
    let p0 = reference_transfer(spec)?;
    if !(p0 > 0.0) {
        return Err(SweepError::NoTransfer(p0));
    }
    let values = spec.grid();
    let raw: Vec<Result<f64, String>> = pool(spec.threads)?.install(|| {
        values
            .par_iter()
            .map(|&v| {
                let (o, e) = spec.point_setup(v);
                final_p(spec, &o, &e)
            })
            .collect()
    });
    Ok(assemble(spec, values, raw, p0))
}

fn assemble(spec: &SweepSpec, values: Vec<f64>, raw: Vec<Result<f64, String>>, p0: f64) -> SweepResult {
    let mut failures = Vec::new();
    let p: Vec<Option<f64>> = raw
        .into_iter()
        .enumerate()
        .map(|(i, r)| r.map_err(|m| failures.push((i, m))).ok())
        .collect();
    let threshold90 = SweepResult::threshold(&values, &p, 0.9 * p0);
    let threshold80 = SweepResult::threshold(&values, &p, 0.8 * p0);
    let non_monotonic = threshold90.is_some_and(|t| {
        values.iter().zip(&p).any(|(v, q)| *v < t && !q.is_some_and(|q| q >= 0.9 * p0))
    });
    SweepResult {
        sequence: spec.sequence.clone(),
        error: spec.error,
        values,
        p,
        p0,
        threshold90,
        threshold80,
        non_monotonic,
        grid_spacing: 10f64.powf(1.0 / spec.per_decade as f64),
        failures,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanParam {
    Phi,
    Eta,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanPoint {
    pub value: f64,
    pub omega_scale: f64,
    pub threshold90: Option<f64>,
    pub threshold80: Option<f64>,
    /// Why the point was skipped, if it was.
    pub skipped: Option<String>,
}

/// Δ_DF (or `spec.error`) thresholds over a φ or η grid and a set of Ω multipliers.
/// `spec` supplies the sequence, error line and grid; its options are the base.
pub fn parameter_scan(spec: &SweepSpec, param: ScanParam, values: &[f64], omega_scales: &[f64]) -> Vec<ScanPoint> {
    let mut out = Vec::new();
    for &k in omega_scales {
        for &x in values {
            let mut s = spec.clone();
            s.params.omega *= k;
            s.params.omega_i *= k;
            match param {
                ScanParam::Phi => {
                    s.options.phi = Some(x);
                    s.options.j_tau = None;
                }
                ScanParam::Eta => s.options.eta = Some(x),
            }
            let mut pt = ScanPoint { value: x, omega_scale: k, threshold90: None, threshold80: None, skipped: None };
            match sweep(&s) {
                Ok(r) => {
                    pt.threshold90 = r.threshold90;
                    pt.threshold80 = r.threshold80;
                }
                Err(e) => pt.skipped = Some(e.to_string()),
            }
            out.push(pt);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub name: String,
    pub category: String,
    #[serde(rename = "Astar_over_A")]
    pub astar_over_a: Option<f64>,
    #[serde(rename = "dDF_Hz")]
    pub ddf_hz: Option<f64>,
    #[serde(rename = "d0_Hz")]
    pub d0_hz: Option<f64>,
    #[serde(rename = "d1_Hz")]
    pub d1_hz: Option<f64>,
    #[serde(rename = "dCS_Hz")]
    pub dcs_hz: Option<f64>,
    #[serde(rename = "dRD_Hz")]
    pub drd_hz: Option<f64>,
    pub grid_spacing: f64,
    #[serde(skip)]
    pub notes: Vec<String>,
}

pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// A*/A fitted from the error-free trajectory (with the baseline Δ_DF for amp swept SLIC).
pub fn fitted_astar(name: &str, params: &MoleculeParams, o: &BuildOptions, opts: &EvolveOptions) -> Result<f64, String> {
    let spec = SweepSpec { options: *o, params: *params, ..SweepSpec::new(name, ErrorKind::Delta0) };
    let (o, e) = spec.point_setup(0.0);
    let prog = catalog::build(name, params, &o).map_err(|x| x.to_string())?;
    let sch = schedule(&prog, params).map_err(|x| x.to_string())?;
    let tr = evolve(&sch, &e, opts).map_err(|x| x.to_string())?;
    transfer_curve_fit(&tr).map(|a| a / params.a).map_err(|x| x.to_string())
}

/// One row per name; rows are independent and merged in input order.
pub fn overview_table(names: &[&str], base: &SweepSpec) -> Vec<TableRow> {
    let work: Vec<(usize, Option<ErrorKind>)> =
        (0..names.len()).flat_map(|i| std::iter::once((i, None)).chain(ErrorKind::ALL.map(|k| (i, Some(k))))).collect();
    let run = || {
        work.par_iter()
            .map(|&(i, k)| {
                let name = names[i];
                match k {
                    None => fitted_astar(name, &base.params, &base.options, &EvolveOptions { samples: 2000, ..base.evolve })
                        .map(|a| (Some(a), false)),
                    Some(k) => {
                        let spec = SweepSpec { sequence: name.to_string(), error: k, threads: Some(1), ..base.clone() };
                        sweep(&spec).map(|r| (r.threshold90, r.non_monotonic)).map_err(|e| e.to_string())
                    }
                }
            })
            .collect::<Vec<_>>()
    };
    let results = match pool(base.threads) {
        Ok(p) => p.install(run),
        Err(_) => run(),
    };
    let spacing = 10f64.powf(1.0 / base.per_decade as f64);
    names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mut row = TableRow {
                name: catalog::canonical(name).unwrap_or(name).to_string(),
                category: catalog::category(name).label().to_string(),
                astar_over_a: None,
                ddf_hz: None,
                d0_hz: None,
                d1_hz: None,
                dcs_hz: None,
                drd_hz: None,
                grid_spacing: spacing,
                notes: Vec::new(),
            };
            for (j, (_, k)) in work.iter().enumerate().filter(|(_, w)| w.0 == i) {
                let label = k.map_or("Astar", |k| k.key());
                match &results[j] {
                    Ok((v, nm)) => {
                        if *nm {
                            row.notes.push(format!("{label}: non-monotonic"));
                        }
                        let hz = v.map(|v| if k.is_some() { round1(v / TAU) } else { v });
                        match k {
                            None => row.astar_over_a = hz,
                            Some(ErrorKind::DeltaDf) => row.ddf_hz = hz,
                            Some(ErrorKind::Delta0) => row.d0_hz = hz,
                            Some(ErrorKind::Delta1) => row.d1_hz = hz,
                            Some(ErrorKind::DeltaCs) => row.dcs_hz = hz,
                            Some(ErrorKind::DeltaRd) => row.drd_hz = hz,
                        }
                        if k.is_some() && v.is_none() {
                            row.notes.push(format!("{label}: below grid"));
                        }
                    }
                    Err(e) => row.notes.push(format!("{label}: {e}")),
                }
            }
            row
        })
        .collect()
}
