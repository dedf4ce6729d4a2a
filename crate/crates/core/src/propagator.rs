//! Time evolution under a schedule.
//!
//! The state is carried as a weighted ensemble of kets; the initial state is a
//! rank-2 mixture, and unitary (even state-dependent) evolution preserves the
//! decomposition exactly. The linear path reuses one eigendecomposition per
//! distinct constant drive. The nonlinear path takes implicit steps with
//! fixed-point iteration on the mean-field expectations, either a two-node
//! fourth-order Magnus step (default) or the exponential midpoint rule.

use crate::expm::HermitianEig;
use crate::hamiltonian::{DipolarFieldModel, HamiltonianTerms, Vec3};
use crate::sequence::{Drive, FitMode, Schedule, SegmentKind};
use crate::spin::{build_basis, initial_ensemble, DensityState, ErrorParams, Expectations, Ket, Op, C64};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathChoice {
    #[default]
    Auto,
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Gauss-node Magnus step with commutator correction. Node mean fields come from
    /// carrying the endpoint expectations along the step's field.
    #[default]
    Magnus4,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveOptions {
    pub dt_max: f64,
    pub substeps_per_pulse: usize,
    /// Cap on fixed-point iterations per midpoint step.
    pub midpoint_iterations: usize,
    /// Early exit once successive midpoint estimates agree to this level.
    pub midpoint_tol: f64,
    /// Uniform output samples (including both ends).
    pub samples: usize,
    /// Overrides `samples` when set (s).
    pub sample_stride: Option<f64>,
    pub path: PathChoice,
    /// Mean-field rotation allowed per nonlinear step (rad).
    pub max_nl_angle: f64,
    /// Steps per period of a modulated waveform.
    pub steps_per_cycle: usize,
    /// Dual-species dipolar model for two-channel schedules when `None`.
    pub df_model: Option<DipolarFieldModel>,
    pub integrator: Integrator,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            dt_max: 1e-4,
            substeps_per_pulse: 4,
            midpoint_iterations: 12,
            midpoint_tol: 1e-10,
            samples: 400,
            sample_stride: None,
            path: PathChoice::Auto,
            max_nl_angle: 0.1,
            steps_per_cycle: 16,
            df_model: None,
            integrator: Integrator::Magnus4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathUsed {
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct EvolveStats {
    pub steps: usize,
    pub eigendecompositions: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub records: Vec<Expectations>,
    pub final_state: DensityState,
    pub path: PathUsed,
    pub stats: EvolveStats,
    /// Image of ẑ under the error-free S control rotation at each sample.
    pub frame_axes: Vec<Vec3>,
    pub core_start: f64,
    pub fit_mode: FitMode,
}

impl Trajectory {
    /// Transfer seen in the control frame, 2⟨S⃗⟩·(R ẑ).
    pub fn transfer_rot(&self) -> Vec<f64> {
        self.records
            .iter()
            .zip(&self.frame_axes)
            .map(|(e, g)| 2.0 * (e.sx * g[0] + e.sy * g[1] + e.sz * g[2]))
            .collect()
    }

    pub fn transfer(&self) -> Vec<f64> {
        self.records.iter().map(Expectations::transfer).collect()
    }

    pub fn final_transfer(&self) -> f64 {
        self.final_state.transfer()
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvolveError {
    #[error("midpoint iteration did not converge at t = {t:.6e} s (residual {residual:.3e})")]
    NonConvergence { t: f64, residual: f64 },
    #[error("linear path requested with nonzero nonlinear error amplitudes")]
    PathViolation,
    #[error("invalid options: {0}")]
    Options(String),
}

/// Sparse copies of the operators whose expectations are tracked.
struct Observables {
    ops: Vec<Vec<(usize, usize, C64)>>,
}

impl Observables {
    fn new() -> Self {
        let b = build_basis();
        let list: [&Op; 9] =
            [&b.s[0], &b.s[1], &b.s[2], &b.itot[0], &b.itot[1], &b.itot[2], &b.ps[0], &b.ps[1], &b.ps[2]];
        let ops = list
            .iter()
            .map(|m| {
                let mut v = Vec::new();
                for r in 0..8 {
                    for c in 0..8 {
                        if m[(r, c)].norm() > 0.0 {
                            v.push((r, c, m[(r, c)]));
                        }
                    }
                }
                v
            })
            .collect();
        Observables { ops }
    }

    fn eval(&self, kets: &[(f64, Ket)]) -> Expectations {
        let mut out = [0.0; 9];
        for (k, op) in self.ops.iter().enumerate() {
            let mut acc = 0.0;
            for (w, psi) in kets {
                let mut s = C64::new(0.0, 0.0);
                for &(r, c, v) in op {
                    s += psi[r].conj() * v * psi[c];
                }
                acc += w * s.re;
            }
            out[k] = acc;
        }
        Expectations {
            sx: out[0],
            sy: out[1],
            sz: out[2],
            ix_tot: out[3],
            iy_tot: out[4],
            iz_tot: out[5],
            ix_ps: out[6],
            iy_ps: out[7],
            iz_ps: out[8],
        }
    }
}

fn sample_times(t_total: f64, opts: &EvolveOptions) -> Vec<f64> {
    let n = match opts.sample_stride {
        Some(s) if s > 0.0 => (t_total / s).floor() as usize + 1,
        _ => opts.samples.max(2),
    };
    if n < 2 || t_total == 0.0 {
        return vec![0.0, t_total];
    }
    let mut v: Vec<f64> = (0..n).map(|k| t_total * k as f64 / (n - 1) as f64).collect();
    v[n - 1] = t_total;
    v
}

fn key(a: Vec3, b: Vec3) -> [u64; 6] {
    [a[0], a[1], a[2], b[0], b[1], b[2]].map(f64::to_bits)
}

struct Recorder {
    times: Vec<f64>,
    next: usize,
    out_t: Vec<f64>,
    out: Vec<Expectations>,
}

impl Recorder {
    fn pending(&self) -> Option<f64> {
        self.times.get(self.next).copied()
    }

    fn push(&mut self, t: f64, e: Expectations) {
        self.out_t.push(t);
        self.out.push(e);
        self.next += 1;
    }
}

struct Evolver<'a> {
    sch: &'a Schedule,
    terms: HamiltonianTerms,
    opts: &'a EvolveOptions,
    obs: Observables,
    kets: Vec<(f64, Ket)>,
    stats: EvolveStats,
    cache: HashMap<[u64; 6], HermitianEig>,
    rec: Recorder,
}

impl<'a> Evolver<'a> {
    fn drives(&self, s: usize, i: Option<usize>) -> (&'a Drive, Option<&'a Drive>, f64, f64) {
        let es = &self.sch.s[s];
        let ei = i.map(|k| &self.sch.i[k]);
        (&es.drive, ei.map(|e| &e.drive), es.t_start, ei.map_or(0.0, |e| e.t_start))
    }

    fn apply(&mut self, eig: &HermitianEig, dt: f64) {
        for (_, k) in &mut self.kets {
            *k = eig.apply(dt, k);
        }
    }

    fn record_until(&mut self, t: f64, eig: &HermitianEig, t_cur: &mut f64) {
        while let Some(ts) = self.rec.pending() {
            if ts > t {
                break;
            }
            self.apply(eig, ts - *t_cur);
            *t_cur = ts;
            let e = self.obs.eval(&self.kets);
            self.rec.push(ts, e);
        }
    }

    fn linear(&mut self) {
        let intervals = self.sch.intervals();
        for iv in intervals {
            let (ds, di, ts0, ti0) = self.drives(iv.s, iv.i);
            let varying = matches!(ds, Drive::Wave(_)) || matches!(di, Some(Drive::Wave(_)));
            if !varying {
                let (vs, vi) = (ds.at(0.0), di.map_or([0.0; 3], |d| d.at(0.0)));
                let k = key(vs, vi);
                if !self.cache.contains_key(&k) {
                    let h = self.terms.assemble(vs, vi, None);
                    self.cache.insert(k, HermitianEig::new(&h));
                    self.stats.eigendecompositions += 1;
                }
                let eig = self.cache[&k].clone();
                let mut t = iv.t0;
                self.record_until(iv.t1, &eig, &mut t);
                self.apply(&eig, iv.t1 - t);
                self.stats.steps += 1;
            } else {
                let h = self.step_size(ds, di, iv.t1 - iv.t0, None);
                let n = ((iv.t1 - iv.t0) / h).ceil().max(1.0) as usize;
                for k in 0..n {
                    let a = iv.t0 + (iv.t1 - iv.t0) * k as f64 / n as f64;
                    let b = if k + 1 == n { iv.t1 } else { iv.t0 + (iv.t1 - iv.t0) * (k + 1) as f64 / n as f64 };
                    self.varying_linear(ds, di, ts0, ti0, a, b);
                }
            }
        }
    }

    /// One step of the configured integrator for a time-dependent drive, splitting at samples.
    fn varying_linear(&mut self, ds: &Drive, di: Option<&Drive>, ts0: f64, ti0: f64, a: f64, b: f64) {
        let mut t = a;
        while t < b {
            let stop = self.rec.pending().filter(|&ts| ts > t && ts < b).unwrap_or(b);
            let at = |c: f64| {
                let m = t + c * (stop - t);
                self.terms.assemble(ds.at(m - ts0), di.map_or([0.0; 3], |d| d.at(m - ti0)), None)
            };
            let eig = match self.opts.integrator {
                Integrator::Midpoint => HermitianEig::new(&at(0.5)),
                Integrator::Magnus4 => {
                    let (h0, h1) = (at(GAUSS[0]), at(GAUSS[1]));
                    let c = C64::new(0.0, -3f64.sqrt() / 12.0 * (stop - t));
                    HermitianEig::new(&((h0 + h1) * C64::new(0.5, 0.0) + (h1 * h0 - h0 * h1) * c))
                }
            };
            self.stats.eigendecompositions += 1;
            self.stats.steps += 1;
            self.apply(&eig, stop - t);
            t = stop;
            while let Some(ts) = self.rec.pending().filter(|&ts| ts <= t) {
                let e = self.obs.eval(&self.kets);
                self.rec.push(ts, e);
            }
        }
    }

    fn step_size(&self, ds: &Drive, di: Option<&Drive>, len: f64, e: Option<&Expectations>) -> f64 {
        let mut h = self.opts.dt_max;
        let active = !ds.is_idle() || di.is_some_and(|d| !d.is_idle());
        if active && self.opts.substeps_per_pulse > 0 {
            h = h.min(len / self.opts.substeps_per_pulse as f64);
        }
        let f = ds.frequency().max(di.map_or(0.0, Drive::frequency));
        if f > 0.0 {
            h = h.min(std::f64::consts::TAU / (f * self.opts.steps_per_cycle as f64));
        }
        if let Some(e) = e {
            let (bs, bi) = crate::hamiltonian::nonlinear_fields(&self.terms.errors, e, &self.terms.df);
            let norm = |v: Vec3| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            let rate = norm(bs) + norm(bi);
            if rate > 0.0 {
                h = h.min(self.opts.max_nl_angle / rate);
            }
        }
        h
    }

    fn nonlinear(&mut self) -> Result<(), EvolveError> {
        let intervals = self.sch.intervals();
        let mut e_n = self.obs.eval(&self.kets);
        if self.rec.pending() == Some(0.0) {
            self.rec.push(0.0, e_n);
        }
        for iv in intervals {
            let (ds, di, ts0, ti0) = self.drives(iv.s, iv.i);
            let len = iv.t1 - iv.t0;
            let mut t = iv.t0;
            while t < iv.t1 {
                let mut h = self.step_size(ds, di, len, Some(&e_n));
                // Land on interval ends and samples exactly; avoid slivers.
                let mut end = iv.t1;
                if let Some(ts) = self.rec.pending() {
                    if ts > t && ts < end {
                        end = ts;
                    }
                }
                let remaining = end - t;
                if h >= remaining {
                    h = remaining;
                } else {
                    h = remaining / (remaining / h).ceil();
                }
                let t1 = if h == remaining || t + h >= end || t + h <= t { end } else { t + h };
                let at = |c: f64| {
                    let m = t + c * (t1 - t);
                    (ds.at(m - ts0), di.map_or([0.0; 3], |d| d.at(m - ti0)))
                };
                e_n = match self.opts.integrator {
                    Integrator::Midpoint => {
                        let (vs, vi) = at(0.5);
                        self.midpoint_step(vs, vi, t1 - t, &e_n, t)?
                    }
                    Integrator::Magnus4 => {
                        self.magnus_step([at(0.0), at(GAUSS[0]), at(GAUSS[1]), at(1.0)], t1 - t, &e_n, t)?
                    }
                };
                t = t1;
                self.stats.steps += 1;
                while self.rec.pending().is_some_and(|ts| ts <= t) {
                    self.rec.push(t, e_n);
                }
            }
        }
        Ok(())
    }

    fn midpoint_step(
        &mut self,
        vs: Vec3,
        vi: Vec3,
        h: f64,
        e_n: &Expectations,
        t: f64,
    ) -> Result<Expectations, EvolveError> {
        let mut e_mid = *e_n;
        let mut residual = f64::INFINITY;
        let mut next = self.kets.clone();
        let mut e_next = *e_n;
        for _ in 0..self.opts.midpoint_iterations.max(1) {
            let (bs, bi) = self.terms.fields(vs, vi, Some(&e_mid));
            let eig = HermitianEig::new(&self.terms.with_fields(bs, bi));
            self.stats.eigendecompositions += 1;
            for (dst, (_, src)) in next.iter_mut().zip(&self.kets) {
                dst.1 = eig.apply(h, src);
            }
            e_next = self.obs.eval(&next);
            let mut cand = e_next;
            for (c, (a, b)) in [&mut cand.sx, &mut cand.sy, &mut cand.sz, &mut cand.ix_tot, &mut cand.iy_tot, &mut cand.iz_tot]
                .into_iter()
                .zip([
                    (e_n.sx, e_next.sx),
                    (e_n.sy, e_next.sy),
                    (e_n.sz, e_next.sz),
                    (e_n.ix_tot, e_next.ix_tot),
                    (e_n.iy_tot, e_next.iy_tot),
                    (e_n.iz_tot, e_next.iz_tot),
                ])
            {
                *c = 0.5 * (a + b);
            }
            residual = [
                cand.sx - e_mid.sx,
                cand.sy - e_mid.sy,
                cand.sz - e_mid.sz,
                cand.ix_tot - e_mid.ix_tot,
                cand.iy_tot - e_mid.iy_tot,
                cand.iz_tot - e_mid.iz_tot,
            ]
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
            e_mid = cand;
            if residual <= self.opts.midpoint_tol {
                break;
            }
        }
        self.stats.max_residual = self.stats.max_residual.max(residual);
        if residual > 1e-8 {
            return Err(EvolveError::NonConvergence { t, residual });
        }
        self.kets = next;
        Ok(e_next)
    }
}

const GAUSS: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];

fn axpy(a: Vec3, b: Vec3, wa: f64, wb: f64) -> Vec3 {
    std::array::from_fn(|k| wa * a[k] + wb * b[k])
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Cubic Hermite value at fraction `g` of a step of length `h`.
fn hermite(v0: Vec3, d0: Vec3, v1: Vec3, d1: Vec3, g: f64, h: f64) -> Vec3 {
    let (g2, g3) = (g * g, g * g * g);
    let (h00, h10, h01, h11) = (2.0 * g3 - 3.0 * g2 + 1.0, g3 - 2.0 * g2 + g, 3.0 * g2 - 2.0 * g3, g3 - g2);
    std::array::from_fn(|k| h00 * v0[k] + h * (h10 * d0[k] + h11 * d1[k]) + h01 * v1[k])
}

fn e_max_diff(a: &Expectations, b: &Expectations) -> f64 {
    [a.sx - b.sx, a.sy - b.sy, a.sz - b.sz, a.ix_tot - b.ix_tot, a.iy_tot - b.iy_tot, a.iz_tot - b.iz_tot]
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
}

impl Evolver<'_> {
    /// Two-node Magnus step. `drive` holds control values at the step start, the two
    /// Gauss nodes and the step end. Node mean fields come from a cubic Hermite
    /// interpolant whose end slopes are the precession b × v.
    fn magnus_step(
        &mut self,
        drive: [(Vec3, Vec3); 4],
        h: f64,
        e_n: &Expectations,
        t: f64,
    ) -> Result<Expectations, EvolveError> {
        let mut next = self.kets.clone();
        let mut e_next = *e_n;
        let vs = axpy(drive[1].0, drive[2].0, 0.5, 0.5);
        let vi = axpy(drive[1].1, drive[2].1, 0.5, 0.5);
        let (fs, fi) = self.terms.fields(vs, vi, Some(e_n));
        [e_next.sx, e_next.sy, e_next.sz] = rotate(e_n.s_vec(), fs, h);
        [e_next.ix_tot, e_next.iy_tot, e_next.iz_tot] = rotate(e_n.i_vec(), fi, h);
        let (bs0, bi0) = self.terms.fields(drive[0].0, drive[0].1, Some(e_n));
        let (ds0, di0) = (cross(bs0, e_n.s_vec()), cross(bi0, e_n.i_vec()));
        let mut residual = f64::INFINITY;
        let c = C64::new(0.0, -3f64.sqrt() / 12.0 * h);
        let mut corr: Option<Op> = None;
        for _ in 0..self.opts.midpoint_iterations.max(1) {
            let (bs1, bi1) = self.terms.fields(drive[3].0, drive[3].1, Some(&e_next));
            let (ds1, di1) = (cross(bs1, e_next.s_vec()), cross(bi1, e_next.i_vec()));
            let hs: Vec<Op> = (1..3)
                .map(|k| {
                    let g = GAUSS[k - 1];
                    let mut e = *e_n;
                    [e.sx, e.sy, e.sz] = hermite(e_n.s_vec(), ds0, e_next.s_vec(), ds1, g, h);
                    [e.ix_tot, e.iy_tot, e.iz_tot] = hermite(e_n.i_vec(), di0, e_next.i_vec(), di1, g, h);
                    let (bs, bi) = self.terms.fields(drive[k].0, drive[k].1, Some(&e));
                    self.terms.with_fields(bs, bi)
                })
                .collect();
            // The correction is O(h); one evaluation per step is enough.
            let corr = *corr.get_or_insert_with(|| (hs[1] * hs[0] - hs[0] * hs[1]) * c);
            let eig = HermitianEig::new(&((hs[0] + hs[1]) * C64::new(0.5, 0.0) + corr));
            self.stats.eigendecompositions += 1;
            for (dst, (_, src)) in next.iter_mut().zip(&self.kets) {
                dst.1 = eig.apply(h, src);
            }
            let cand = self.obs.eval(&next);
            residual = e_max_diff(&cand, &e_next);
            e_next = cand;
            if residual <= self.opts.midpoint_tol {
                break;
            }
        }
        self.stats.max_residual = self.stats.max_residual.max(residual);
        if residual > 1e-8 {
            return Err(EvolveError::NonConvergence { t, residual });
        }
        self.kets = next;
        Ok(e_next)
    }
}

fn default_df(sch: &Schedule, opts: &EvolveOptions) -> DipolarFieldModel {
    opts.df_model.unwrap_or(if sch.is_dual() {
        DipolarFieldModel::dual(3.98)
    } else {
        DipolarFieldModel::default()
    })
}

/// Evolve ρ0 through the schedule.
pub fn evolve(sch: &Schedule, errors: &ErrorParams, opts: &EvolveOptions) -> Result<Trajectory, EvolveError> {
    evolve_ensemble(sch, errors, opts, initial_ensemble())
}

/// Evolve an arbitrary initial density matrix.
pub fn evolve_from(
    sch: &Schedule,
    errors: &ErrorParams,
    opts: &EvolveOptions,
    initial: &DensityState,
) -> Result<Trajectory, EvolveError> {
    evolve_ensemble(sch, errors, opts, initial.ensemble())
}

fn evolve_ensemble(
    sch: &Schedule,
    errors: &ErrorParams,
    opts: &EvolveOptions,
    kets: Vec<(f64, Ket)>,
) -> Result<Trajectory, EvolveError> {
    if !(opts.dt_max > 0.0) {
        return Err(EvolveError::Options("dt_max must be positive".into()));
    }
    let path = match opts.path {
        PathChoice::Auto if errors.is_nonlinear() => PathUsed::Nonlinear,
        PathChoice::Auto | PathChoice::Linear => PathUsed::Linear,
        PathChoice::Nonlinear => PathUsed::Nonlinear,
    };
    if path == PathUsed::Linear && errors.is_nonlinear() {
        return Err(EvolveError::PathViolation);
    }
    let terms = HamiltonianTerms::new(&sch.params, errors, default_df(sch, opts));
    let mut ev = Evolver {
        sch,
        terms,
        opts,
        obs: Observables::new(),
        kets,
        stats: EvolveStats::default(),
        cache: HashMap::new(),
        rec: Recorder { times: sample_times(sch.t_total, opts), next: 0, out_t: Vec::new(), out: Vec::new() },
    };
    match path {
        PathUsed::Linear => {
            if ev.rec.pending() == Some(0.0) {
                let e = ev.obs.eval(&ev.kets);
                ev.rec.push(0.0, e);
            }
            ev.linear()
        }
        PathUsed::Nonlinear => ev.nonlinear()?,
    }
    let final_state = DensityState::from_ensemble(&ev.kets);
    if ev.rec.out_t.last().is_none_or(|&t| t < sch.t_total) {
        ev.rec.out_t.push(sch.t_total);
        ev.rec.out.push(*final_state.expectations());
    }
    let frame_axes = control_axes(sch, &ev.rec.out_t);
    Ok(Trajectory {
        times: ev.rec.out_t,
        records: ev.rec.out,
        final_state,
        path,
        stats: ev.stats,
        frame_axes,
        core_start: sch.core_start,
        fit_mode: sch.meta.fit,
    })
}

fn rotate(v: Vec3, b: Vec3, dt: f64) -> Vec3 {
    let w = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    let th = w * dt;
    if th == 0.0 {
        return v;
    }
    let k = [b[0] / w, b[1] / w, b[2] / w];
    let (s, c) = th.sin_cos();
    let kv = k[0] * v[0] + k[1] * v[1] + k[2] * v[2];
    let cr = [k[1] * v[2] - k[2] * v[1], k[2] * v[0] - k[0] * v[2], k[0] * v[1] - k[1] * v[0]];
    std::array::from_fn(|a| v[a] * c + cr[a] * s + k[a] * kv * (1.0 - c))
}

/// ẑ carried by the nominal S control field (dg/dt = Ω⃗ × g), sampled at `times`.
pub fn control_axes(sch: &Schedule, times: &[f64]) -> Vec<Vec3> {
    let mut out = Vec::with_capacity(times.len());
    let mut g = [0.0, 0.0, 1.0];
    let mut t = 0.0;
    let mut k = 0;
    let advance = |g: &mut Vec3, e: &crate::sequence::Entry, t0: f64, t1: f64| match &e.drive {
        Drive::Idle => {}
        Drive::Const(b) => *g = rotate(*g, *b, t1 - t0),
        Drive::Wave(_) => {
            let f = e.field_at(0.5 * (t0 + t1));
            let w = (f[0] * f[0] + f[1] * f[1] + f[2] * f[2]).sqrt() + e.drive.frequency();
            let n = ((t1 - t0) * w / 0.02).ceil().max(1.0) as usize;
            let h = (t1 - t0) / n as f64;
            for j in 0..n {
                *g = rotate(*g, e.field_at(t0 + (j as f64 + 0.5) * h), h);
            }
        }
    };
    for e in &sch.s {
        while k < times.len() && times[k] <= e.t_end {
            advance(&mut g, e, t, times[k].max(t));
            t = times[k].max(t);
            out.push(g);
            k += 1;
        }
        advance(&mut g, e, t, e.t_end);
        t = e.t_end;
    }
    while out.len() < times.len() {
        out.push(g);
    }
    out
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FitError {
    #[error("transfer never exceeds 0.25 (max {0:.3})")]
    FitFailure(f64),
}

/// Fit p(t) ≈ sin²(A t/4) and return A (rad/s).
pub fn transfer_curve_fit(tr: &Trajectory) -> Result<f64, FitError> {
    let p = tr.transfer_rot();
    let t: Vec<f64> = tr.times.iter().map(|&x| x - tr.core_start).collect();
    let (imax, &pmax) = p
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(FitError::FitFailure(0.0))?;
    if !(pmax > 0.25) {
        return Err(FitError::FitFailure(pmax));
    }
    if tr.fit_mode == FitMode::EndTime {
        let (tl, pl) = (*t.last().unwrap(), p.last().unwrap().clamp(0.0, 1.0));
        return Ok(4.0 * pl.sqrt().asin() / tl);
    }
    let cross = p.iter().position(|&x| x >= 0.5 * pmax.min(1.0)).unwrap_or(imax);
    let guess = 4.0 * (0.5 * pmax.min(1.0)).sqrt().asin() / t[cross].max(f64::MIN_POSITIVE);
    let cost = |a: f64| -> f64 {
        (0..=imax)
            .filter(|&k| t[k] >= 0.0)
            .map(|k| {
                let r = p[k] - (a * t[k] / 4.0).sin().powi(2);
                r * r
            })
            .sum()
    };
    let (mut lo, mut hi) = (0.6 * guess, 1.4 * guess);
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - gr * (hi - lo), lo + gr * (hi - lo));
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = cost(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = cost(x2);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Linear path with per-drive propagator caching.
pub fn evolve_linear_cached(sch: &Schedule, errors: &ErrorParams) -> Result<Trajectory, EvolveError> {
    if errors.is_nonlinear() {
        return Err(EvolveError::PathViolation);
    }
    evolve(sch, errors, &EvolveOptions { path: PathChoice::Linear, ..Default::default() })
}

/// Number of S-channel pulse entries whose duration is shorter than `dt` (diagnostics).
pub fn short_pulses(sch: &Schedule, dt: f64) -> usize {
    sch.s.iter().filter(|e| e.kind == SegmentKind::Pulse && e.duration() < dt).count()
}
