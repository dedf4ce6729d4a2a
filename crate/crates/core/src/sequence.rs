//! Two-channel pulse programs and their expansion into a time-ordered schedule.

use crate::hamiltonian::Vec3;
use crate::spin::MoleculeParams;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    S,
    I,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Pulse,
    Wait,
    Cw,
}

/// Scalar function of segment-local time, in rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum Waveform {
    Const { value: f64 },
    Linear { start: f64, slope: f64 },
    /// base − depth·sin²(rate·t)
    SinSquared { base: f64, depth: f64, rate: f64 },
    /// amp·cos(freq·t + phase)
    Cosine { amp: f64, freq: f64, phase: f64 },
}

impl Waveform {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            Waveform::Const { value } => value,
            Waveform::Linear { start, slope } => start + slope * t,
            Waveform::SinSquared { base, depth, rate } => base - depth * (rate * t).sin().powi(2),
            Waveform::Cosine { amp, freq, phase } => amp * (freq * t + phase).cos(),
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match *self {
            Waveform::Const { value } => Some(value),
            _ => None,
        }
    }

    /// Fastest oscillation frequency, used to bound integration steps.
    pub fn frequency(&self) -> f64 {
        match *self {
            Waveform::Cosine { freq, .. } => freq.abs(),
            Waveform::SinSquared { rate, .. } => 2.0 * rate.abs(),
            _ => 0.0,
        }
    }
}

/// Share of a pulse's duration deducted from a wait group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Charge {
    pub group: u32,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SegmentJson", into = "SegmentJson")]
pub struct Segment {
    pub kind: SegmentKind,
    pub channel: Channel,
    /// Rotation angle in units of π (nominal total angle for CW).
    pub angle_pi_units: f64,
    pub phase: f64,
    /// In-phase amplitude; `None` on a pulse means the channel maximum.
    pub amp: Option<Waveform>,
    /// Quadrature amplitude (CW only).
    pub quad: Option<Waveform>,
    pub detuning: Option<Waveform>,
    /// Nominal wait, or the explicit CW duration.
    pub tau: Option<f64>,
    pub wait_group: Option<u32>,
    pub charges: Vec<Charge>,
}

pub fn phase_from_name(name: &str) -> Option<f64> {
    match name {
        "X" => Some(0.0),
        "Y" => Some(FRAC_PI_2),
        "Xbar" | "-X" => Some(PI),
        "Ybar" | "-Y" => Some(3.0 * FRAC_PI_2),
        _ => None,
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentJson {
    kind: SegmentKind,
    channel: Channel,
    #[serde(default, skip_serializing_if = "is_zero")]
    angle_pi_units: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    phase_rad: Option<f64>,
    #[serde(default, skip_serializing)]
    phase_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amp_spec: Option<Waveform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    quad_spec: Option<Waveform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    detuning_spec: Option<Waveform>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tau_spec: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wait_group: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    charges: Vec<Charge>,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl TryFrom<SegmentJson> for Segment {
    type Error = String;

    fn try_from(j: SegmentJson) -> Result<Self, String> {
        let phase = match (j.phase_rad, j.phase_name) {
            (Some(_), Some(_)) => return Err("give either phase_rad or phase_name".into()),
            (Some(p), None) => p,
            (None, Some(n)) => phase_from_name(&n).ok_or(format!("unknown phase name {n:?}"))?,
            (None, None) => 0.0,
        };
        let seg = Segment {
            kind: j.kind,
            channel: j.channel,
            angle_pi_units: j.angle_pi_units,
            phase,
            amp: j.amp_spec,
            quad: j.quad_spec,
            detuning: j.detuning_spec,
            tau: j.tau_spec,
            wait_group: j.wait_group,
            charges: j.charges,
        };
        seg.check()?;
        Ok(seg)
    }
}

impl From<Segment> for SegmentJson {
    fn from(s: Segment) -> Self {
        SegmentJson {
            kind: s.kind,
            channel: s.channel,
            angle_pi_units: s.angle_pi_units,
            phase_rad: (s.phase != 0.0).then_some(s.phase),
            phase_name: None,
            amp_spec: s.amp,
            quad_spec: s.quad,
            detuning_spec: s.detuning,
            tau_spec: s.tau,
            wait_group: s.wait_group,
            charges: s.charges,
        }
    }
}

impl Segment {
    pub fn pulse(channel: Channel, angle: f64, phase: f64) -> Self {
        Segment {
            kind: SegmentKind::Pulse,
            channel,
            angle_pi_units: angle / PI,
            phase,
            amp: None,
            quad: None,
            detuning: None,
            tau: None,
            wait_group: None,
            charges: Vec::new(),
        }
    }

    pub fn wait(channel: Channel, tau: f64, group: u32) -> Self {
        Segment {
            kind: SegmentKind::Wait,
            channel,
            angle_pi_units: 0.0,
            phase: 0.0,
            amp: None,
            quad: None,
            detuning: None,
            tau: Some(tau),
            wait_group: Some(group),
            charges: Vec::new(),
        }
    }

    pub fn cw(channel: Channel, phase: f64, duration: f64, amp: Waveform) -> Self {
        Segment {
            kind: SegmentKind::Cw,
            channel,
            angle_pi_units: 0.0,
            phase,
            amp: Some(amp),
            quad: None,
            detuning: None,
            tau: Some(duration),
            wait_group: None,
            charges: Vec::new(),
        }
    }

    pub fn charged(mut self, group: u32, fraction: f64) -> Self {
        self.charges.push(Charge { group, fraction });
        self
    }

    pub fn with_detuning(mut self, w: Waveform) -> Self {
        self.detuning = Some(w);
        self
    }

    pub fn with_quad(mut self, w: Waveform) -> Self {
        self.quad = Some(w);
        self
    }

    pub fn with_angle(mut self, angle: f64) -> Self {
        self.angle_pi_units = angle / PI;
        self
    }

    pub fn angle(&self) -> f64 {
        self.angle_pi_units * PI
    }

    fn check(&self) -> Result<(), String> {
        match self.kind {
            SegmentKind::Pulse => {
                if !(self.angle_pi_units > 0.0) {
                    return Err("pulse needs a positive angle".into());
                }
                if self.amp.as_ref().is_some_and(|a| a.constant().is_none()) {
                    return Err("pulse amplitude must be constant".into());
                }
            }
            SegmentKind::Wait => {
                if !self.tau.is_some_and(|t| t >= 0.0) {
                    return Err("wait needs tau_spec >= 0".into());
                }
            }
            SegmentKind::Cw => {
                if !self.tau.is_some_and(|t| t > 0.0) {
                    return Err("cw needs a positive tau_spec (duration)".into());
                }
                if self.amp.is_none() {
                    return Err("cw needs amp_spec".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "DF-unadjusted")]
    Unadjusted,
    #[serde(rename = "DF-adjusted")]
    Adjusted,
    #[serde(rename = "DF-enabled")]
    Enabled,
    #[serde(rename = "DF-suppressing (1)")]
    Suppressing1,
    #[serde(rename = "DF-suppressing (2)")]
    Suppressing2,
    #[serde(rename = "dual channel")]
    DualChannel,
}

impl Category {
    pub fn label(&self) -> &'static str {
        match self {
            Category::Unadjusted => "DF-unadjusted",
            Category::Adjusted => "DF-adjusted",
            Category::Enabled => "DF-enabled",
            Category::Suppressing1 => "DF-suppressing (1)",
            Category::Suppressing2 => "DF-suppressing (2)",
            Category::DualChannel => "dual channel",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Fit the rising edge of p(t) in the rotating frame.
    #[default]
    Rising,
    /// A_fit from the time at which the sequence ends.
    EndTime,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceMeta {
    /// Nominal core period with ideal pulses (s).
    pub period: f64,
    /// Net z-precession per repetition (rad).
    pub alpha: f64,
    /// Closed-form A* (rad/s).
    #[serde(default)]
    pub astar: Option<f64>,
    /// Value used to choose N when no formula exists.
    #[serde(default)]
    pub astar_nominal: Option<f64>,
    #[serde(default)]
    pub category: Option<Category>,
    /// Dipolar-suppression window T̃ (s).
    #[serde(default)]
    pub window: Option<f64>,
    #[serde(default)]
    pub fit: FitMode,
    /// Δ_DF the waveform was designed for (rad/s).
    #[serde(default)]
    pub design_df: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceProgram {
    pub name: String,
    pub channels: u8,
    #[serde(default)]
    pub pre: Vec<Segment>,
    pub core: Vec<Segment>,
    pub reps: usize,
    #[serde(default)]
    pub post: Vec<Segment>,
    #[serde(default)]
    pub params_overrides: BTreeMap<String, f64>,
    #[serde(default)]
    pub metadata: SequenceMeta,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ScheduleError {
    #[error("infeasible schedule: {section} wait group {group} on channel {channel:?} lacks {deficit:.6e} s")]
    Infeasible { section: &'static str, channel: Channel, group: u32, deficit: f64 },
    #[error("invalid segment: {0}")]
    InvalidSegment(String),
    #[error("core durations differ between channels: S {s:.9e} s, I {i:.9e} s")]
    ChannelMismatch { s: f64, i: f64 },
    #[error("unknown parameter override {0:?}")]
    UnknownOverride(String),
    #[error("time {0} s outside schedule")]
    OutOfRange(f64),
}

impl SequenceProgram {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("program serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    /// Molecule parameters with `params_overrides` (Hz) applied.
    pub fn effective_params(&self, base: &MoleculeParams) -> Result<MoleculeParams, ScheduleError> {
        let mut p = *base;
        for (k, v) in &self.params_overrides {
            let slot = match k.as_str() {
                "a_hz" => &mut p.a,
                "a_sigma_hz" => &mut p.a_sigma,
                "j_hz" => &mut p.j,
                "omega_hz" => &mut p.omega,
                "omega_i_hz" => &mut p.omega_i,
                _ => return Err(ScheduleError::UnknownOverride(k.clone())),
            };
            *slot = TAU * v;
        }
        Ok(p)
    }
}

/// Control vector of a scheduled entry.
#[derive(Debug, Clone, PartialEq)]
pub enum Drive {
    Idle,
    Const(Vec3),
    Wave(WaveDrive),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveDrive {
    pub phase: f64,
    pub amp: Waveform,
    pub quad: Option<Waveform>,
    pub detuning: Option<Waveform>,
    /// Segment-local time at the entry start.
    pub t0: f64,
    /// +1 forward, −1 time-reversed.
    pub dir: f64,
    pub sign: f64,
}

fn field(phase: f64, i: f64, q: f64, d: f64) -> Vec3 {
    let (s, c) = phase.sin_cos();
    [i * c - q * s, i * s + q * c, d]
}

impl Drive {
    pub fn at(&self, t_entry: f64) -> Vec3 {
        match self {
            Drive::Idle => [0.0; 3],
            Drive::Const(v) => *v,
            Drive::Wave(w) => {
                let tl = w.t0 + w.dir * t_entry;
                let q = w.quad.as_ref().map_or(0.0, |x| x.eval(tl));
                let d = w.detuning.as_ref().map_or(0.0, |x| x.eval(tl));
                field(w.phase, w.amp.eval(tl), q, d).map(|x| w.sign * x)
            }
        }
    }

    pub fn is_idle(&self) -> bool {
        matches!(self, Drive::Idle)
    }

    pub fn frequency(&self) -> f64 {
        match self {
            Drive::Wave(w) => [Some(&w.amp), w.quad.as_ref(), w.detuning.as_ref()]
                .into_iter()
                .flatten()
                .map(Waveform::frequency)
                .fold(0.0, f64::max),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Pad,
    Pre,
    Core,
    Post,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub t_start: f64,
    pub t_end: f64,
    pub channel: Channel,
    pub drive: Drive,
    pub kind: SegmentKind,
    pub section: Section,
    pub rep: usize,
}

impl Entry {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn field_at(&self, t: f64) -> Vec3 {
        self.drive.at(t - self.t_start)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub name: String,
    pub channels: u8,
    pub s: Vec<Entry>,
    pub i: Vec<Entry>,
    pub t_total: f64,
    pub core_start: f64,
    /// Scheduled core duration.
    pub period: f64,
    pub reps: usize,
    pub meta: SequenceMeta,
    pub params: MoleculeParams,
}

/// Piece of the timeline on which neither channel changes entry.
#[derive(Debug, Clone, Copy)]
pub struct Interval {
    pub t0: f64,
    pub t1: f64,
    pub s: usize,
    pub i: Option<usize>,
}

struct Resolved {
    seg: Segment,
    duration: f64,
}

fn resolve(
    segs: &[&Segment],
    max_amp: f64,
    section: &'static str,
) -> Result<Vec<Resolved>, ScheduleError> {
    let mut out = Vec::with_capacity(segs.len());
    for seg in segs {
        let duration = match seg.kind {
            SegmentKind::Pulse => {
                let amp = seg.amp.as_ref().and_then(Waveform::constant).unwrap_or(max_amp);
                let det = seg.detuning.as_ref().and_then(Waveform::constant).unwrap_or(0.0);
                let norm = amp.hypot(det);
                if !(norm > 0.0) {
                    return Err(ScheduleError::InvalidSegment(format!(
                        "pulse in {section} has zero amplitude"
                    )));
                }
                seg.angle() / norm
            }
            SegmentKind::Wait | SegmentKind::Cw => seg.tau.unwrap_or(0.0),
        };
        out.push(Resolved { seg: (*seg).clone(), duration });
    }
    let mut budget: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for r in &out {
        if r.seg.kind == SegmentKind::Wait {
            if let Some(g) = r.seg.wait_group {
                budget.entry(g).or_default().0 += r.duration;
            }
        }
        if r.seg.kind == SegmentKind::Pulse {
            for c in &r.seg.charges {
                budget.entry(c.group).or_default().1 += c.fraction * r.duration;
            }
        }
    }
    let mut ratio = BTreeMap::new();
    for (g, (w, p)) in budget {
        let tol = 1e-12 * w.max(p);
        if p > w + tol {
            let channel = out.first().map_or(Channel::S, |r| r.seg.channel);
            return Err(ScheduleError::Infeasible { section, channel, group: g, deficit: p - w });
        }
        ratio.insert(g, if w > 0.0 { (1.0 - p / w).max(0.0) } else { 0.0 });
    }
    for r in &mut out {
        if r.seg.kind == SegmentKind::Wait {
            if let Some(g) = r.seg.wait_group {
                r.duration *= ratio[&g];
            }
        }
    }
    Ok(out)
}

fn drive_of(seg: &Segment, max_amp: f64) -> Drive {
    match seg.kind {
        SegmentKind::Wait => Drive::Idle,
        SegmentKind::Pulse => {
            let amp = seg.amp.as_ref().and_then(Waveform::constant).unwrap_or(max_amp);
            let det = seg.detuning.as_ref().and_then(Waveform::constant).unwrap_or(0.0);
            Drive::Const(field(seg.phase, amp, 0.0, det))
        }
        SegmentKind::Cw => {
            let amp = seg.amp.clone().unwrap_or(Waveform::Const { value: max_amp });
            let parts = [Some(&amp), seg.quad.as_ref(), seg.detuning.as_ref()];
            if parts.iter().flatten().all(|w| w.constant().is_some()) {
                let c = |w: Option<&Waveform>| w.and_then(Waveform::constant).unwrap_or(0.0);
                Drive::Const(field(seg.phase, c(Some(&amp)), c(seg.quad.as_ref()), c(seg.detuning.as_ref())))
            } else {
                Drive::Wave(WaveDrive {
                    phase: seg.phase,
                    amp,
                    quad: seg.quad.clone(),
                    detuning: seg.detuning.clone(),
                    t0: 0.0,
                    dir: 1.0,
                    sign: 1.0,
                })
            }
        }
    }
}

fn total(r: &[Resolved]) -> f64 {
    r.iter().map(|x| x.duration).sum()
}

/// Expand a program into absolute-time entries for each channel.
pub fn schedule(program: &SequenceProgram, params: &MoleculeParams) -> Result<Schedule, ScheduleError> {
    let params = program.effective_params(params)?;
    if program.reps == 0 {
        return Err(ScheduleError::InvalidSegment("reps must be >= 1".into()));
    }
    let chans: &[Channel] = if program.channels >= 2 { &[Channel::S, Channel::I] } else { &[Channel::S] };
    let mut resolved = Vec::new();
    for &ch in chans {
        let max_amp = if ch == Channel::S { params.omega } else { params.omega_i };
        fn pick(v: &[Segment], ch: Channel) -> Vec<&Segment> {
            v.iter().filter(|s| s.channel == ch).collect()
        }
        let pre = resolve(&pick(&program.pre, ch), max_amp, "pre")?;
        let core = resolve(&pick(&program.core, ch), max_amp, "core")?;
        let post = resolve(&pick(&program.post, ch), max_amp, "post")?;
        resolved.push((ch, max_amp, pre, core, post));
    }
    if program.channels < 2 && program.core.iter().chain(&program.pre).chain(&program.post).any(|s| s.channel == Channel::I) {
        return Err(ScheduleError::InvalidSegment("I-channel segment in a single-channel program".into()));
    }
    let period = total(&resolved[0].3);
    if let Some(r) = resolved.get(1) {
        let pi = total(&r.3);
        if (pi - period).abs() > 1e-9 * period.max(1e-12) {
            return Err(ScheduleError::ChannelMismatch { s: period, i: pi });
        }
    }
    if !(period > 0.0) {
        return Err(ScheduleError::InvalidSegment("core has zero duration".into()));
    }
    let core_start = resolved.iter().map(|r| total(&r.2)).fold(0.0, f64::max);
    let core_end = core_start + period * program.reps as f64;
    let t_total = core_end + resolved.iter().map(|r| total(&r.4)).fold(0.0, f64::max);

    let mut lists: Vec<Vec<Entry>> = Vec::new();
    for (ch, max_amp, pre, core, post) in &resolved {
        let mut v = Vec::new();
        let push = |v: &mut Vec<Entry>, t0: f64, t1: f64, drive: Drive, kind, section, rep| {
            // Start exactly where the previous entry ended.
            let t0 = v.last().map_or(t0, |e: &Entry| e.t_end);
            if t1 > t0 {
                v.push(Entry { t_start: t0, t_end: t1, channel: *ch, drive, kind, section, rep });
            }
        };
        let pad = core_start - total(pre);
        push(&mut v, 0.0, pad, Drive::Idle, SegmentKind::Wait, Section::Pad, 0);
        let mut t = pad;
        for r in pre {
            let t1 = if std::ptr::eq(r, pre.last().unwrap()) { core_start } else { t + r.duration };
            push(&mut v, t, t1, drive_of(&r.seg, *max_amp), r.seg.kind, Section::Pre, 0);
            t = t1;
        }
        let offsets: Vec<f64> = core
            .iter()
            .scan(0.0, |acc, r| {
                let s = *acc;
                *acc += r.duration;
                Some(s)
            })
            .collect();
        let drives: Vec<Drive> = core.iter().map(|r| drive_of(&r.seg, *max_amp)).collect();
        for rep in 0..program.reps {
            let base = core_start + period * rep as f64;
            for (k, r) in core.iter().enumerate() {
                let t0 = base + offsets[k];
                let t1 = if k + 1 == core.len() { core_start + period * (rep + 1) as f64 } else { base + offsets[k + 1] };
                push(&mut v, t0, t1, drives[k].clone(), r.seg.kind, Section::Core, rep);
            }
        }
        let mut t = core_end;
        for r in post {
            push(&mut v, t, t + r.duration, drive_of(&r.seg, *max_amp), r.seg.kind, Section::Post, 0);
            t += r.duration;
        }
        push(&mut v, t, t_total, Drive::Idle, SegmentKind::Wait, Section::Pad, 0);
        if let Some(last) = v.last_mut() {
            last.t_end = t_total;
        }
        lists.push(v);
    }
    let s = lists.remove(0);
    let i = lists.pop().unwrap_or_default();
    Ok(Schedule {
        name: program.name.clone(),
        channels: program.channels.max(1),
        s,
        i,
        t_total,
        core_start,
        period,
        reps: program.reps,
        meta: program.metadata.clone(),
        params,
    })
}

fn locate(entries: &[Entry], t: f64) -> Option<usize> {
    if entries.is_empty() {
        return None;
    }
    let k = entries.partition_point(|e| e.t_end <= t);
    Some(k.min(entries.len() - 1))
}

impl Schedule {
    /// Control vectors (Ω⃗_S, Ω⃗_I) at time t; the later entry wins at boundaries.
    pub fn waveform(&self, t: f64) -> Result<(Vec3, Vec3), ScheduleError> {
        if !(0.0..=self.t_total).contains(&t) {
            return Err(ScheduleError::OutOfRange(t));
        }
        let at = |v: &[Entry]| locate(v, t).map_or([0.0; 3], |k| v[k].field_at(t));
        Ok((at(&self.s), at(&self.i)))
    }

    /// Merged breakpoints of both channels. Boundaries closer than 1e-12 of the
    /// total duration count as one.
    pub fn intervals(&self) -> Vec<Interval> {
        let mut out = Vec::with_capacity(self.s.len() + self.i.len());
        let (mut a, mut b) = (0usize, 0usize);
        let mut t = 0.0;
        let tol = 1e-12 * self.t_total;
        while a < self.s.len() {
            let ea = self.s[a].t_end;
            let eb = self.i.get(b).map_or(f64::INFINITY, |e| e.t_end);
            let t1 = if (ea - eb).abs() <= tol { ea.max(eb) } else { ea.min(eb) };
            if t1 > t {
                out.push(Interval { t0: t, t1, s: a, i: (b < self.i.len()).then_some(b) });
            }
            t = t.max(t1);
            if ea <= t1 {
                a += 1;
            }
            if eb <= t1 {
                b += 1;
            }
        }
        out
    }

    pub fn is_dual(&self) -> bool {
        self.channels >= 2
    }

    /// Time-reversed schedule with negated controls; combined with negated
    /// couplings it propagates by the inverse unitary.
    pub fn reversed_negated(&self) -> Schedule {
        let flip = |v: &[Entry]| {
            v.iter()
                .rev()
                .map(|e| {
                    let drive = match &e.drive {
                        Drive::Idle => Drive::Idle,
                        Drive::Const(x) => Drive::Const(x.map(|c| -c)),
                        Drive::Wave(w) => Drive::Wave(WaveDrive {
                            t0: w.t0 + w.dir * e.duration(),
                            dir: -w.dir,
                            sign: -w.sign,
                            ..w.clone()
                        }),
                    };
                    Entry {
                        t_start: self.t_total - e.t_end,
                        t_end: self.t_total - e.t_start,
                        drive,
                        ..e.clone()
                    }
                })
                .collect::<Vec<_>>()
        };
        Schedule { s: flip(&self.s), i: flip(&self.i), ..self.clone() }
    }

    /// Total pulse time of the S core over its scheduled duration.
    pub fn filling_factor(&self) -> f64 {
        let core: Vec<&Entry> = self.s.iter().filter(|e| e.section == Section::Core && e.rep == 0).collect();
        if core.iter().all(|e| e.kind == SegmentKind::Cw) {
            return 1.0;
        }
        let pulses: f64 = core.iter().filter(|e| e.kind == SegmentKind::Pulse).map(|e| e.duration()).sum();
        pulses / self.period
    }
}

pub fn filling_factor(program: &SequenceProgram, params: &MoleculeParams) -> Result<f64, ScheduleError> {
    Ok(schedule(program, params)?.filling_factor())
}
