//! Constructors for the seventeen overview sequences at their reference settings.

use crate::sequence::{Category, Channel, FitMode, Segment, SequenceMeta, SequenceProgram, Waveform};
use crate::spin::MoleculeParams;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, SQRT_2, TAU};

pub const X: f64 = 0.0;
pub const Y: f64 = FRAC_PI_2;
pub const XBAR: f64 = PI;
pub const YBAR: f64 = 3.0 * FRAC_PI_2;

/// arccos √(1/3).
pub fn magic_angle() -> f64 {
    (1.0f64 / 3.0).sqrt().acos()
}

/// Row labels in overview order.
pub const NAMES: [&str; 17] = [
    "SLIC",
    "PulsePol",
    "SLIC*",
    "PulsePol*",
    "amp swept SLIC",
    "MA-SLIC",
    "MA-PulsePol",
    "M2A-PulsePol",
    "DF-PulsePol",
    "LG-SLIC",
    "BLEWpol",
    "MREVpol",
    "MREV-PulsePol",
    "PP+XY",
    "M2A-PP+XY",
    "DF-PP+XY",
    "altMREVpol",
];

/// Canonical row label for a user-supplied name.
pub fn canonical(name: &str) -> Option<&'static str> {
    let n = name.trim();
    let alias = match n {
        "amp-swept SLIC" | "amplitude swept SLIC" => "amp swept SLIC",
        "altMREVpol+XY" => "altMREVpol",
        "PulsePol+XY" => "PP+XY",
        other => other,
    };
    NAMES.iter().copied().find(|k| k.eq_ignore_ascii_case(alias))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuildOptions {
    /// Free phase φ (rad).
    pub phi: Option<f64>,
    /// Jτ (rad); solved from φ when absent.
    pub j_tau: Option<f64>,
    /// I-channel π-pulse phase (rad).
    pub phi_i: Option<f64>,
    /// Filling factor.
    pub eta: Option<f64>,
    /// MREV cycles per free-evolution window (MREV-PulsePol).
    pub m: Option<usize>,
    pub reps: Option<usize>,
    /// Δ_DF the adjusted and swept sequences are designed for (rad/s).
    pub design_df: Option<f64>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CatalogError {
    #[error("unknown sequence {0:?}")]
    UnknownSequence(String),
    #[error("resonance violated for {name}: {rule}")]
    ResonanceViolation { name: String, rule: String },
    #[error("degenerate resonance: phase {0} gives no transfer")]
    DegenerateResonance(f64),
    #[error("no closed-form A* for {0}")]
    NoFormula(String),
    #[error("invalid option: {0}")]
    InvalidOption(String),
}

/// Resonance families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Jτ = 2n(2π) ∓ 2φ; the minus branch builds +ẑ.
    PulsePol,
    /// Same rule with I-channel π pulses; n = 0 is the natural choice.
    PulsePolXy,
    /// 12Jτ = 2|φ|; φ < 0 builds +ẑ.
    Multipulse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Minus,
    Plus,
}

/// Solve the resonance rule for τ (s).
pub fn resonance_solve(family: Family, phi: f64, j: f64, n: u32, branch: Branch) -> Result<f64, CatalogError> {
    let s = if branch == Branch::Minus { -1.0 } else { 1.0 };
    let jt = match family {
        Family::PulsePol | Family::PulsePolXy => {
            let r = phi.rem_euclid(PI);
            if r < 1e-12 || PI - r < 1e-12 {
                return Err(CatalogError::DegenerateResonance(phi));
            }
            2.0 * n as f64 * TAU + s * 2.0 * phi
        }
        Family::Multipulse => 2.0 * phi.abs() / 12.0,
    };
    if !(jt > 0.0) || !(j > 0.0) {
        return Err(CatalogError::InvalidOption(format!("no positive τ for φ = {phi}, n = {n}")));
    }
    Ok(jt / j)
}

fn pp_factor(jt: f64) -> f64 {
    let x = jt / 8.0;
    x.sin().powi(2) / x
}

fn sinc4(jt: f64) -> f64 {
    let x = jt / 4.0;
    x.sin() / x
}

fn mrev_factor(eta: f64) -> f64 {
    SQRT_2 / 3.0 + eta * (SQRT_2 / PI - SQRT_2 / 4.0)
}

fn m2a_factor() -> f64 {
    (1.0 + SQRT_2) / 3.0
}

fn spec_of(name: &str) -> Result<&'static str, CatalogError> {
    canonical(name).ok_or_else(|| CatalogError::UnknownSequence(name.to_string()))
}

/// Reference phases and Jτ, filled in where the caller left them open.
#[derive(Debug, Clone, Copy)]
struct Resolved {
    phi: f64,
    jt: f64,
    phi_i: f64,
    eta: f64,
}

fn resolve(name: &'static str, params: &MoleculeParams, o: &BuildOptions, strict: bool) -> Result<Resolved, CatalogError> {
    let (j, omega) = (params.j, params.omega);
    let check = |family: Family, phi: f64, jt: Option<f64>| -> Result<f64, CatalogError> {
        let n0 = if family == Family::PulsePol { 1 } else { 0 };
        let solved = resonance_solve(family, phi, j, n0, Branch::Minus).map(|t| t * j);
        match jt {
            None => solved,
            Some(v) => {
                // Any branch is accepted.
                let ok = (0..4).any(|n| {
                    [Branch::Minus, Branch::Plus].iter().any(|&b| {
                        resonance_solve(family, phi, j, n, b).is_ok_and(|t| (t * j - v).abs() < 1e-9 * v.max(1.0))
                    })
                });
                if ok {
                    Ok(v)
                } else {
                    Err(CatalogError::ResonanceViolation {
                        name: name.into(),
                        rule: format!("Jτ = {v} does not satisfy Jτ = 2n(2π) ∓ 2φ at φ = {phi}"),
                    })
                }
            }
        }
    };
    let r = match name {
        "PulsePol" | "PulsePol*" | "MA-PulsePol" => {
            let phi = o.phi.unwrap_or(FRAC_PI_4);
            Resolved { phi, jt: check(Family::PulsePol, phi, o.j_tau)?, phi_i: 0.0, eta: 0.0 }
        }
        "DF-PulsePol" => {
            let phi = o.phi.unwrap_or(3.0 * FRAC_PI_4);
            Resolved { phi, jt: check(Family::PulsePol, phi, o.j_tau)?, phi_i: 0.0, eta: 0.0 }
        }
        "M2A-PulsePol" => {
            let phi = o.phi.unwrap_or(0.6 * PI);
            Resolved { phi, jt: check(Family::PulsePol, phi, o.j_tau)?, phi_i: 0.0, eta: 0.0 }
        }
        "MREV-PulsePol" => {
            let phi = o.phi.unwrap_or(0.4 * PI);
            Resolved { phi, jt: check(Family::PulsePol, phi, o.j_tau)?, phi_i: 0.0, eta: 0.0 }
        }
        "PP+XY" => {
            // η is the pulse filling of one τ block: 4π/(Ωτ).
            let eta = o.eta.unwrap_or(0.2);
            let jt = match (o.phi, o.j_tau) {
                (Some(phi), jt) => check(Family::PulsePolXy, phi, jt)?,
                (None, Some(jt)) => jt,
                (None, None) => j * 4.0 * PI / (omega * eta),
            };
            Resolved { phi: o.phi.unwrap_or(-jt / 2.0), jt, phi_i: o.phi_i.unwrap_or(3.0 * FRAC_PI_4), eta }
        }
        "M2A-PP+XY" | "DF-PP+XY" => {
            let phi = o.phi.unwrap_or(-0.4 * PI);
            let jt = check(Family::PulsePolXy, phi, o.j_tau)?;
            Resolved { phi, jt, phi_i: o.phi_i.unwrap_or(3.0 * FRAC_PI_4), eta: 0.0 }
        }
        "BLEWpol" | "MREVpol" | "altMREVpol" => {
            let eta_default = match name {
                "BLEWpol" => 1.0,
                "MREVpol" => 0.5,
                _ => 2.0 / 3.0,
            };
            let eta = o.eta.unwrap_or(eta_default);
            if !(eta > 0.0) {
                return Err(CatalogError::InvalidOption("eta must be positive".into()));
            }
            let tau = if name == "BLEWpol" { FRAC_PI_2 / (omega * eta) } else { 4.0 * PI / (12.0 * omega * eta) };
            let phi = o.phi.unwrap_or(-6.0 * j * tau);
            if strict && (12.0 * j * tau - 2.0 * phi.abs()).abs() > 1e-9 * phi.abs().max(1e-12) {
                return Err(CatalogError::ResonanceViolation {
                    name: name.into(),
                    rule: format!("12Jτ = 2|φ| fails for τ = {tau}, φ = {phi}"),
                });
            }
            Resolved { phi, jt: j * tau, phi_i: o.phi_i.unwrap_or(0.9 * PI), eta }
        }
        _ => Resolved { phi: 0.0, jt: 0.0, phi_i: 0.0, eta: 0.0 },
    };
    Ok(r)
}

/// Closed-form A* (rad/s) at the resolved settings.
pub fn analytic_astar(name: &str, params: &MoleculeParams, o: &BuildOptions) -> Result<f64, CatalogError> {
    let name = spec_of(name)?;
    let r = resolve(name, params, o, true)?;
    let a = params.a;
    let v = match name {
        "SLIC" | "SLIC*" => a,
        "PulsePol" | "PulsePol*" => a * pp_factor(r.jt),
        "amp swept SLIC" => a / 3.0,
        "MA-SLIC" => a * (2.0f64 / 3.0).sqrt(),
        "MA-PulsePol" => a * (2.0f64 / 3.0).sqrt() * pp_factor(r.jt),
        "M2A-PulsePol" => a * m2a_factor() * pp_factor(r.jt),
        "DF-PulsePol" => a * 2.0 / 3.0 * pp_factor(r.jt),
        "LG-SLIC" => return Err(CatalogError::NoFormula(name.into())),
        "BLEWpol" => a * 4.0 / (3.0 * PI),
        "MREVpol" | "altMREVpol" => a * mrev_factor(r.eta),
        "MREV-PulsePol" => a * pp_factor(r.jt) * mrev_block_coupling(params, o, r.jt)?,
        "PP+XY" => a * sinc4(r.jt),
        "M2A-PP+XY" => a * m2a_factor() * sinc4(r.jt),
        "DF-PP+XY" => a * 2.0 / 3.0 * sinc4(r.jt),
        _ => unreachable!(),
    };
    Ok(v)
}

/// A* used to size N: the closed form when one exists, otherwise the nominal value.
pub fn nominal_astar(name: &str, params: &MoleculeParams, o: &BuildOptions) -> Result<f64, CatalogError> {
    match analytic_astar(name, params, o) {
        Err(CatalogError::NoFormula(_)) => Ok(params.a / 3.0f64.sqrt()),
        other => other,
    }
}

pub fn category(name: &str) -> Category {
    match canonical(name).unwrap_or(name) {
        "SLIC" | "PulsePol" => Category::Unadjusted,
        "SLIC*" | "PulsePol*" => Category::Adjusted,
        "amp swept SLIC" => Category::Enabled,
        "MA-SLIC" | "MA-PulsePol" | "M2A-PulsePol" | "DF-PulsePol" => Category::Suppressing1,
        "LG-SLIC" | "BLEWpol" | "MREVpol" | "MREV-PulsePol" => Category::Suppressing2,
        _ => Category::DualChannel,
    }
}

fn sp(angle: f64, phase: f64) -> Segment {
    Segment::pulse(Channel::S, angle, phase)
}

fn ip(angle: f64, phase: f64) -> Segment {
    Segment::pulse(Channel::I, angle, phase)
}

/// One PulsePol half-block; `outer = None` drops the flanking pulses.
fn half_block(ch: Channel, outer: Option<f64>, shift: f64, pi_phase: f64, tau: f64, group: u32) -> Vec<Segment> {
    let pulse = |a, p| Segment::pulse(ch, a, p).charged(group, 1.0);
    let mut v = Vec::new();
    if let Some(a) = outer {
        v.push(pulse(a, X + shift));
    }
    v.push(Segment::wait(ch, tau / 4.0, group));
    v.push(pulse(PI, pi_phase));
    v.push(Segment::wait(ch, tau / 4.0, group));
    if let Some(a) = outer {
        v.push(pulse(a, X + shift));
    }
    v
}

/// PulsePol-type S core from a list of (outer angle, phase shift) halves.
fn pulsepol_core(halves: &[(Option<f64>, f64)], tau: f64, offset: f64, group0: u32) -> Vec<Segment> {
    halves
        .iter()
        .enumerate()
        .flat_map(|(k, &(a, shift))| half_block(Channel::S, a, shift + offset, Y + shift + offset, tau, group0 + k as u32))
        .collect()
}

/// XY-type I-channel block of duration τ.
fn xy_block(tau: f64, phi_i: f64, group0: u32) -> Vec<Segment> {
    let mut v = Vec::new();
    for g in [group0, group0 + 1] {
        v.push(ip(FRAC_PI_2, X).charged(g, 1.0));
        v.push(Segment::wait(Channel::I, tau / 4.0, g));
        v.push(ip(PI, phi_i).charged(g, 1.0));
        v.push(Segment::wait(Channel::I, tau / 4.0, g));
        v.push(ip(FRAC_PI_2, X).charged(g, 1.0));
    }
    v
}

/// Windows between consecutive pulses; each pulse charges half its duration to
/// the wait on either side (cyclically), centring pulses on their ideal positions.
fn centred(items: &[(Option<f64>, f64)], ch: Channel) -> Vec<Segment> {
    // items: (Some(phase) = π/2 pulse | None, wait τ before the next item)
    let waits: Vec<usize> = items.iter().enumerate().filter(|(_, x)| x.0.is_none()).map(|(k, _)| k).collect();
    let n = items.len();
    let group_of = |k: usize| waits.iter().position(|&w| w == k).unwrap() as u32;
    let neighbour = |k: usize, dir: isize| -> usize {
        let mut i = k as isize;
        loop {
            i = (i + dir).rem_euclid(n as isize);
            if items[i as usize].0.is_none() {
                return i as usize;
            }
        }
    };
    items
        .iter()
        .enumerate()
        .map(|(k, &(ph, t))| match ph {
            Some(p) => Segment::pulse(ch, FRAC_PI_2, p)
                .charged(group_of(neighbour(k, -1)), 0.5)
                .charged(group_of(neighbour(k, 1)), 0.5),
            None => Segment::wait(ch, t, group_of(k)),
        })
        .collect()
}

fn mrev_rows(rows: &[[f64; 4]], tau: f64) -> Vec<(Option<f64>, f64)> {
    let mut v = Vec::new();
    for r in rows {
        for (k, &p) in r.iter().enumerate() {
            v.push((Some(p), 0.0));
            v.push((None, if k % 2 == 0 { 2.0 * tau } else { tau }));
        }
    }
    v
}

/// MREV-8 with all phases shifted, spread over `tau_free` in `m` cycles.
fn mrev_block(shift: f64, tau_free: f64, m: usize, group: u32, reversed: bool) -> Vec<Segment> {
    let phases = [X, X, Y, YBAR, XBAR, XBAR, Y, YBAR];
    let mut v = Vec::new();
    for _ in 0..m {
        for (k, &p) in phases.iter().enumerate() {
            v.push(sp(FRAC_PI_2, p + shift).charged(group, 1.0));
            let w = if k % 2 == 0 { tau_free / (6.0 * m as f64) } else { tau_free / (12.0 * m as f64) };
            v.push(Segment::wait(Channel::S, w, group));
        }
    }
    if reversed {
        v.reverse();
    }
    v
}

/// Transverse mean of the toggling frame over one MREV^m_{3π/4} window.
fn mrev_block_coupling(params: &MoleculeParams, o: &BuildOptions, jt: f64) -> Result<f64, CatalogError> {
    let (m, tau_free) = mrev_pp_layout(params, o, jt)?;
    let block = SequenceProgram {
        name: "MREV block".into(),
        channels: 1,
        pre: vec![],
        core: mrev_block(3.0 * FRAC_PI_4, tau_free, m, 0, false),
        reps: 1,
        post: vec![],
        params_overrides: Default::default(),
        metadata: SequenceMeta::default(),
    };
    let avg = crate::aht::block_average(&block, params).map_err(|e| CatalogError::InvalidOption(e.to_string()))?;
    Ok(avg[0].hypot(avg[1]))
}

fn mrev_pp_layout(params: &MoleculeParams, o: &BuildOptions, jt: f64) -> Result<(usize, f64), CatalogError> {
    let tau_free = jt / params.j / 4.0;
    let m = match o.m {
        Some(m) if m >= 1 => m,
        Some(_) => return Err(CatalogError::InvalidOption("m must be >= 1".into())),
        None => {
            // Largest m keeping the quarter-window filling (with half a π pulse) under 90 % of 2/3.
            let per_cycle = 4.0 * PI / params.omega;
            let half_pi = 0.5 * PI / params.omega;
            let mut m = 0;
            while m < 64 && ((m + 1) as f64 * per_cycle + half_pi) / tau_free < 0.9 * 2.0 / 3.0 {
                m += 1;
            }
            m.max(1)
        }
    };
    Ok((m, tau_free))
}

fn reps_for(o: &BuildOptions, astar: f64, period: f64) -> usize {
    o.reps.unwrap_or_else(|| ((TAU / astar) / period).round().max(1.0) as usize)
}

/// PulsePol* phase shift for the block ending at `t`: the accumulated dipolar
/// precession φ(t). Advancing every phase by χ inserts a z rotation by −Δχ
/// between blocks, which undoes the precession.
fn pulsepol_star_shift(t: f64, design_df: f64, astar: f64) -> f64 {
    -design_df / 2.0 * (t / 2.0 - (astar * t / 2.0).sin() / astar)
}

/// Build a catalog sequence at the given molecule parameters.
pub fn build(name: &str, params: &MoleculeParams, o: &BuildOptions) -> Result<SequenceProgram, CatalogError> {
    build_inner(name, params, o, true)
}

fn build_inner(name: &str, params: &MoleculeParams, o: &BuildOptions, strict: bool) -> Result<SequenceProgram, CatalogError> {
    let name = spec_of(name)?;
    let r = resolve(name, params, o, strict)?;
    let (j, omega) = (params.j, params.omega);
    let astar_formula = if strict { analytic_astar(name, params, o).ok() } else { None };
    let astar = if strict { nominal_astar(name, params, o)? } else { params.a };
    let design = o.design_df.unwrap_or(if name == "amp swept SLIC" { TAU * 3.0 } else { 0.0 });
    let t_j = TAU / j;
    let ma = magic_angle();
    let mut pre = Vec::new();
    let mut post = Vec::new();
    let mut channels = 1u8;
    let mut fit = FitMode::Rising;
    let mut window = None;
    let (core, period, alpha, reps) = match name {
        "SLIC" => {
            pre.push(sp(FRAC_PI_2, YBAR));
            post.push(sp(FRAC_PI_2, Y));
            let core = vec![Segment::cw(Channel::S, X, t_j, Waveform::Const { value: j }).with_angle(TAU)];
            (core, t_j, 0.0, reps_for(o, astar, t_j))
        }
        "SLIC*" => {
            pre.push(sp(FRAC_PI_2, YBAR));
            post.push(sp(FRAC_PI_2, Y));
            let n = reps_for(o, astar, t_j);
            let amp = Waveform::SinSquared { base: j, depth: design / 2.0, rate: astar / 4.0 };
            let core = vec![Segment::cw(Channel::S, X, n as f64 * t_j, amp).with_angle(TAU * n as f64)];
            (core, t_j, 0.0, 1)
        }
        "amp swept SLIC" => {
            pre.push(sp(FRAC_PI_2, YBAR));
            post.push(sp(FRAC_PI_2, Y));
            fit = FitMode::EndTime;
            let dur = TAU / astar;
            let sgn = if design < 0.0 { -1.0 } else { 1.0 };
            let amp = Waveform::Linear { start: j + sgn * params.a, slope: -sgn * (design.abs() / 2.0 + 3.0 * params.a) / dur };
            (vec![Segment::cw(Channel::S, X, dur, amp)], dur, 0.0, 1)
        }
        "MA-SLIC" => {
            // The Ȳ alignment pulse maps the drive axis onto ẑ only for a negative z-component.
            pre.push(sp(ma, YBAR));
            post.push(sp(ma, Y));
            let core = vec![Segment::cw(Channel::S, X, t_j, Waveform::Const { value: (2.0f64 / 3.0).sqrt() * j })
                .with_detuning(Waveform::Const { value: -(1.0f64 / 3.0).sqrt() * j })
                .with_angle(TAU)];
            window = Some(t_j);
            (core, t_j, 0.0, reps_for(o, astar, t_j))
        }
        "PulsePol" | "MA-PulsePol" => {
            let tau = r.jt / j;
            let a = if name == "PulsePol" { FRAC_PI_2 } else { ma };
            let core = pulsepol_core(&[(Some(a), 0.0), (Some(a), r.phi)], tau, 0.0, 0);
            (core, tau, 2.0 * r.phi, reps_for(o, astar, tau))
        }
        "PulsePol*" => {
            let tau = r.jt / j;
            let n = reps_for(o, astar, tau);
            let mut core = Vec::new();
            for k in 1..=n {
                let shift = pulsepol_star_shift(k as f64 * tau, design, astar);
                let g = 2 * (k as u32 - 1);
                core.extend(pulsepol_core(&[(Some(FRAC_PI_2), 0.0), (Some(FRAC_PI_2), r.phi)], tau, shift, g));
            }
            (core, tau, 2.0 * r.phi, 1)
        }
        "DF-PulsePol" => {
            let tau = r.jt / j;
            let h = [(Some(FRAC_PI_2), 0.0), (Some(FRAC_PI_2), r.phi), (None, 0.0), (Some(FRAC_PI_2), r.phi), (Some(FRAC_PI_2), 0.0), (None, r.phi)];
            (pulsepol_core(&h, tau, 0.0, 0), 3.0 * tau, 6.0 * r.phi, reps_for(o, astar, 3.0 * tau))
        }
        "M2A-PulsePol" => {
            let tau = r.jt / j;
            let (q, hf) = (Some(FRAC_PI_4), Some(FRAC_PI_2));
            let h = [(q, 0.0), (hf, r.phi), (q, 0.0), (q, r.phi), (hf, 0.0), (q, r.phi)];
            (pulsepol_core(&h, tau, 0.0, 0), 3.0 * tau, 6.0 * r.phi, reps_for(o, astar, 3.0 * tau))
        }
        "LG-SLIC" => {
            let w_lg = omega * 1.5f64.sqrt();
            let t = TAU / w_lg;
            pre.push(sp(FRAC_PI_2, X));
            post.push(sp(FRAC_PI_2, XBAR));
            let core = vec![Segment::cw(Channel::S, X, t, Waveform::Const { value: omega })
                .with_detuning(Waveform::Const { value: omega / SQRT_2 })
                .with_quad(Waveform::Cosine { amp: 2.0 * j, freq: w_lg, phase: 0.0 })
                .with_angle(TAU)];
            window = Some(t);
            (core, t, 0.0, reps_for(o, astar, t))
        }
        "BLEWpol" => {
            let tau = r.jt / j;
            let first = [X, Y, XBAR, Y, X, Y];
            let second = [YBAR, XBAR, YBAR, X, YBAR, XBAR];
            let mut items = vec![(None, tau / 2.0)];
            for (k, &p) in first.iter().chain(second.iter()).enumerate() {
                let shift = if k >= 6 { r.phi } else { 0.0 };
                items.push((Some(p + shift), 0.0));
                items.push((None, if k == 11 { tau / 2.0 } else { tau }));
            }
            window = Some(12.0 * tau);
            (centred(&items, Channel::S), 12.0 * tau, 2.0 * r.phi, reps_for(o, astar, 12.0 * tau))
        }
        "MREVpol" => {
            let tau = r.jt / j;
            let rows = [[X, X, Y, YBAR], [XBAR + r.phi, XBAR + r.phi, Y, YBAR]];
            window = Some(12.0 * tau);
            (centred(&mrev_rows(&rows, tau), Channel::S), 12.0 * tau, 2.0 * r.phi, reps_for(o, astar, 12.0 * tau))
        }
        "MREV-PulsePol" => {
            let tau = r.jt / j;
            let (m, tau_free) = mrev_pp_layout(params, o, r.jt)?;
            let base = 3.0 * FRAC_PI_4;
            let mut core = Vec::new();
            for (h, shift) in [(0u32, 0.0), (1u32, r.phi)] {
                let (g0, g1) = (2 * h, 2 * h + 1);
                core.extend(mrev_block(base + shift, tau_free, m, g0, false));
                core.push(sp(PI, Y + shift).charged(g0, 0.5).charged(g1, 0.5));
                core.extend(mrev_block(base + shift, tau_free, m, g1, true));
            }
            window = Some(tau_free / m as f64);
            (core, tau, 2.0 * r.phi, reps_for(o, astar, tau))
        }
        "PP+XY" | "M2A-PP+XY" | "DF-PP+XY" => {
            channels = 2;
            let tau = r.jt / j;
            let (halves, blocks): (Vec<(Option<f64>, f64)>, usize) = match name {
                "PP+XY" => (vec![(Some(FRAC_PI_2), 0.0), (Some(FRAC_PI_2), r.phi)], 1),
                "M2A-PP+XY" => {
                    let (q, hf) = (Some(FRAC_PI_4), Some(FRAC_PI_2));
                    (vec![(q, 0.0), (hf, r.phi), (q, 0.0), (q, r.phi), (hf, 0.0), (q, r.phi)], 3)
                }
                _ => {
                    let hf = Some(FRAC_PI_2);
                    (vec![(hf, 0.0), (hf, r.phi), (None, 0.0), (hf, r.phi), (hf, 0.0), (Some(PI), r.phi)], 3)
                }
            };
            let mut core = pulsepol_core(&halves, tau, 0.0, 0);
            for b in 0..blocks {
                core.extend(xy_block(tau, r.phi_i, 100 + 2 * b as u32));
            }
            pre.push(ip(FRAC_PI_2, X));
            post.push(ip(FRAC_PI_2, X));
            let period = blocks as f64 * tau;
            (core, period, blocks as f64 * 2.0 * r.phi, reps_for(o, astar, period))
        }
        "altMREVpol" => {
            channels = 2;
            let tau = r.jt / j;
            let p = r.phi;
            let rows = [[X, X, Y, YBAR], [XBAR + p, XBAR + p, Y, YBAR], [XBAR, XBAR, YBAR, Y], [X + p, X + p, YBAR, Y]];
            let mut core = centred(&mrev_rows(&rows, tau), Channel::S);
            core.extend([
                ip(FRAC_PI_2, X).charged(100, 1.0),
                Segment::wait(Channel::I, 12.0 * tau, 100),
                ip(PI, r.phi_i).charged(100, 1.0),
                Segment::wait(Channel::I, 12.0 * tau, 100),
                ip(FRAC_PI_2, X).charged(100, 1.0),
            ]);
            pre.push(ip(FRAC_PI_2, X));
            post.push(ip(FRAC_PI_2, X));
            window = Some(12.0 * tau);
            (core, 24.0 * tau, 4.0 * r.phi, reps_for(o, astar, 24.0 * tau))
        }
        _ => unreachable!(),
    };
    if window.is_none() && category(name) == Category::Suppressing1 {
        window = Some(suppression_window(period, alpha));
    }
    Ok(SequenceProgram {
        name: name.to_string(),
        channels,
        pre,
        core,
        reps,
        post,
        params_overrides: Default::default(),
        metadata: SequenceMeta {
            period,
            alpha,
            astar: astar_formula,
            astar_nominal: Some(astar),
            category: Some(category(name)),
            window,
            fit,
            design_df: (design != 0.0).then_some(design),
        },
    })
}

/// Smallest k·T with k·α ≡ 0 (mod 2π), k ≤ 64.
pub fn suppression_window(period: f64, alpha: f64) -> f64 {
    for k in 1..=64 {
        let x = (k as f64 * alpha).rem_euclid(TAU);
        if x < 1e-9 || TAU - x < 1e-9 {
            return k as f64 * period;
        }
    }
    period
}

/// Program and window T̃ for the dipolar-suppression certificate. The window
/// starts at the core start of the returned program.
pub fn certificate(name: &str, params: &MoleculeParams, o: &BuildOptions) -> Result<(SequenceProgram, f64), CatalogError> {
    let name = spec_of(name)?;
    match name {
        "LG-SLIC" => {
            let mut p = build(name, params, &BuildOptions::default())?;
            for s in &mut p.core {
                s.quad = None;
            }
            p.reps = 1;
            Ok((p, p_window(name, params)?))
        }
        "BLEWpol" | "MREVpol" => {
            let mut p = build_inner(name, params, &BuildOptions { phi: Some(0.0), ..Default::default() }, false)?;
            p.reps = 1;
            let w = p.metadata.period;
            Ok((p, w))
        }
        "MREV-PulsePol" => {
            let r = resolve(name, params, o, true)?;
            let (m, tau_free) = mrev_pp_layout(params, o, r.jt)?;
            let mut p = build(name, params, o)?;
            p.core = mrev_block(3.0 * FRAC_PI_4, tau_free / m as f64, 1, 0, false);
            p.reps = 1;
            let w: f64 = crate::sequence::schedule(&p, params).map_err(|e| CatalogError::InvalidOption(e.to_string()))?.period;
            Ok((p, w))
        }
        _ => {
            let mut p = build(name, params, &BuildOptions::default())?;
            let w = p_window(name, params)?;
            p.reps = ((w / p.metadata.period).ceil() as usize).max(1);
            Ok((p, w))
        }
    }
}

fn p_window(name: &str, params: &MoleculeParams) -> Result<f64, CatalogError> {
    let p = build(name, params, &BuildOptions::default())?;
    let m = &p.metadata;
    Ok(m.window.unwrap_or(m.period))
}
