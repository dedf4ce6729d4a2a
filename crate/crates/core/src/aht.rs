//! Toggling-frame diagnostics.
//!
//! The control-only propagator is tracked as an SO(3) rotation R(t) of the
//! S Bloch sphere; the toggling-frame vector is f(t) = Rᵀẑ, so that
//! U†S_zU = f·S⃗. Integrals are evaluated piecewise with Gauss–Legendre
//! quadrature on pieces short enough for the integrands to be smooth.

use crate::hamiltonian::Vec3;
use crate::sequence::{schedule, Drive, Entry, Schedule, ScheduleError, SegmentKind, SequenceProgram};
use crate::spin::MoleculeParams;
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

pub type Mat3 = [[f64; 3]; 3];

const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).map(|k| a[i][k] * b[k][j]).sum()))
}

fn norm(b: &Vec3) -> f64 {
    (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt()
}

/// Rotation by |b|·dt about b̂ (dv/dt = b × v).
pub fn rotation(b: Vec3, dt: f64) -> Mat3 {
    let w = norm(&b);
    let th = w * dt;
    if th == 0.0 {
        return IDENTITY;
    }
    let k = [b[0] / w, b[1] / w, b[2] / w];
    let (s, c) = th.sin_cos();
    let v = 1.0 - c;
    [
        [c + k[0] * k[0] * v, k[0] * k[1] * v - k[2] * s, k[0] * k[2] * v + k[1] * s],
        [k[1] * k[0] * v + k[2] * s, c + k[1] * k[1] * v, k[1] * k[2] * v - k[0] * s],
        [k[2] * k[0] * v - k[1] * s, k[2] * k[1] * v + k[0] * s, c + k[2] * k[2] * v],
    ]
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AhtError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("core propagator is not a z rotation (deviation {0:.2e})")]
    NotPrecession(f64),
    #[error("window [{0}, {1}] lies outside the trace")]
    Window(f64, f64),
}

/// Constant-field stretch of the control evolution.
#[derive(Debug, Clone, Copy)]
struct Piece {
    t0: f64,
    t1: f64,
    rs: Mat3,
    ri: Mat3,
    bs: Vec3,
    bi: Vec3,
    pulse: bool,
}

impl Piece {
    /// Filtered toggling vector at t ∈ [t0, t1].
    fn f(&self, t: f64, dual: bool) -> Vec3 {
        let r = matmul(&rotation(self.bs, t - self.t0), &self.rs);
        let mut f = r[2];
        if dual {
            let ri = matmul(&rotation(self.bi, t - self.t0), &self.ri);
            let s = ri[2][2];
            f = f.map(|x| x * s);
        }
        f
    }

    fn end(&self) -> (Mat3, Mat3) {
        let dt = self.t1 - self.t0;
        (matmul(&rotation(self.bs, dt), &self.rs), matmul(&rotation(self.bi, dt), &self.ri))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TogglingTrace {
    pub times: Vec<f64>,
    pub f: Vec<Vec3>,
    /// f_xf_x, f_xf_y, f_xf_z, f_yf_y, f_yf_z, f_zf_z.
    pub quad: Vec<[f64; 6]>,
    pub period: f64,
    pub alpha: f64,
    pub core_start: f64,
    /// End of the last traced repetition.
    pub core_end: f64,
    pub t_total: f64,
    /// Repetitions of the source program.
    pub reps: usize,
    pub dual: bool,
    #[serde(skip)]
    pieces: Vec<Piece>,
}

const GL_X: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_W: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

fn wave_steps(e: &Entry, t0: f64, t1: f64) -> usize {
    let mid = e.field_at(0.5 * (t0 + t1));
    let w = norm(&mid) + e.drive.frequency();
    ((t1 - t0) * w / 0.05).ceil().max(1.0) as usize
}

/// Constant field reproducing the step propagator to fourth order (two-point Magnus).
fn drive_field(e: Option<&Entry>, t0: f64, t1: f64) -> Vec3 {
    match e.map(|e| (&e.drive, e)) {
        Some((Drive::Const(b), _)) => *b,
        Some((Drive::Wave(_), e)) => {
            let h = t1 - t0;
            let c = 3f64.sqrt() / 6.0;
            let b1 = e.field_at(t0 + (0.5 - c) * h);
            let b2 = e.field_at(t0 + (0.5 + c) * h);
            let cross = [b2[1] * b1[2] - b2[2] * b1[1], b2[2] * b1[0] - b2[0] * b1[2], b2[0] * b1[1] - b2[1] * b1[0]];
            let k = 3f64.sqrt() / 12.0 * h;
            std::array::from_fn(|a| 0.5 * (b1[a] + b2[a]) + k * cross[a])
        }
        _ => [0.0; 3],
    }
}

fn build_pieces(sch: &Schedule) -> Vec<Piece> {
    let mut out = Vec::new();
    let (mut rs, mut ri) = (IDENTITY, IDENTITY);
    for iv in sch.intervals() {
        let es = &sch.s[iv.s];
        let ei = iv.i.map(|k| &sch.i[k]);
        let wave = matches!(es.drive, Drive::Wave(_)) || ei.is_some_and(|e| matches!(e.drive, Drive::Wave(_)));
        let n = if wave {
            let ns = wave_steps(es, iv.t0, iv.t1);
            let ni = ei.map_or(1, |e| wave_steps(e, iv.t0, iv.t1));
            ns.max(ni)
        } else {
            1
        };
        let h = (iv.t1 - iv.t0) / n as f64;
        for k in 0..n {
            let t0 = iv.t0 + k as f64 * h;
            let t1 = if k + 1 == n { iv.t1 } else { t0 + h };
            let pulse = es.kind == SegmentKind::Pulse || ei.is_some_and(|e| e.kind == SegmentKind::Pulse);
            let p = Piece { t0, t1, rs, ri, bs: drive_field(Some(es), t0, t1), bi: drive_field(ei, t0, t1), pulse };
            (rs, ri) = p.end();
            out.push(p);
        }
    }
    out
}

fn piece_at(pieces: &[Piece], t: f64) -> &Piece {
    let k = pieces.partition_point(|p| p.t1 < t);
    &pieces[k.min(pieces.len() - 1)]
}

fn quad_of(f: &Vec3) -> [f64; 6] {
    [f[0] * f[0], f[0] * f[1], f[0] * f[2], f[1] * f[1], f[1] * f[2], f[2] * f[2]]
}

/// S-channel rotation accumulated over one core repetition.
fn core_rotation(sch: &Schedule) -> Mat3 {
    let mut r = IDENTITY;
    for e in sch.s.iter().filter(|e| e.section == crate::sequence::Section::Core && e.rep == 0) {
        match &e.drive {
            Drive::Idle => {}
            Drive::Const(b) => r = matmul(&rotation(*b, e.duration()), &r),
            Drive::Wave(_) => {
                let n = wave_steps(e, e.t_start, e.t_end);
                let h = e.duration() / n as f64;
                for k in 0..n {
                    let t = e.t_start + k as f64 * h;
                    r = matmul(&rotation(drive_field(Some(e), t, t + h), h), &r);
                }
            }
        }
    }
    r
}

/// Net z precession α of one core repetition, read from its S rotation.
pub fn net_precession(program: &SequenceProgram, params: &MoleculeParams) -> Result<f64, AhtError> {
    let mut p = program.clone();
    p.reps = 1;
    let sch = schedule(&p, params)?;
    let r = core_rotation(&sch);
    let dev = r[0][2].abs() + r[1][2].abs() + r[2][0].abs() + r[2][1].abs() + (1.0 - r[2][2]).abs();
    if dev > 1e-6 {
        return Err(AhtError::NotPrecession(dev));
    }
    Ok(r[1][0].atan2(r[0][0]).rem_euclid(2.0 * PI))
}

/// Toggling-frame trace over the whole program.
pub fn toggling_trace(program: &SequenceProgram, params: &MoleculeParams) -> Result<TogglingTrace, AhtError> {
    toggling_trace_span(program, params, program.reps)
}

/// Trace over the pre block and the first `span` repetitions only; the
/// program's own repetition count is kept for dephasing estimates.
pub fn toggling_trace_span(program: &SequenceProgram, params: &MoleculeParams, span: usize) -> Result<TogglingTrace, AhtError> {
    let mut short = program.clone();
    short.reps = span.clamp(1, program.reps.max(1));
    if short.reps < program.reps {
        short.post.clear();
    }
    let sch = schedule(&short, params)?;
    let alpha = net_precession(program, params).unwrap_or(f64::NAN);
    let pieces = build_pieces(&sch);
    let dual = sch.is_dual();
    let mut times = Vec::new();
    let mut fs = Vec::new();
    let j = params.j;
    for p in &pieces {
        let len = p.t1 - p.t0;
        let rate = norm(&p.bs).max(norm(&p.bi));
        let n = if p.pulse {
            50
        } else if rate > 0.0 {
            ((len * rate.max(j) / (2.0 * PI) * 50.0).ceil() as usize).max(2)
        } else {
            ((len * j / (2.0 * PI) * 50.0).ceil() as usize).clamp(1, 200)
        };
        for s in 0..n {
            let t = p.t0 + len * s as f64 / n as f64;
            if times.last() != Some(&t) {
                times.push(t);
                fs.push(p.f(t, dual));
            }
        }
    }
    if let Some(last) = pieces.last() {
        times.push(last.t1);
        fs.push(last.f(last.t1, dual));
    }
    let quad = fs.iter().map(quad_of).collect();
    Ok(TogglingTrace {
        times,
        f: fs,
        quad,
        period: sch.period,
        alpha,
        core_start: sch.core_start,
        core_end: sch.core_start + sch.period * sch.reps as f64,
        t_total: sch.t_total,
        reps: program.reps,
        dual,
        pieces,
    })
}

impl TogglingTrace {
    /// ∫ g(t, f(t)) dt over [a, b].
    pub fn integrate<T, G>(&self, a: f64, b: f64, j: f64, g: G) -> Result<T, AhtError>
    where
        T: Default + std::ops::AddAssign + std::ops::Mul<f64, Output = T>,
        G: Fn(f64, Vec3) -> T,
    {
        if a < -1e-12 || b > self.t_total * (1.0 + 1e-12) || b < a {
            return Err(AhtError::Window(a, b));
        }
        let mut acc = T::default();
        let k0 = self.pieces.partition_point(|p| p.t1 <= a);
        for p in &self.pieces[k0..] {
            if p.t0 >= b {
                break;
            }
            let (lo, hi) = (p.t0.max(a), p.t1.min(b));
            if hi <= lo {
                continue;
            }
            let rate = norm(&p.bs) + norm(&p.bi) + j.abs();
            let n = ((hi - lo) * rate / 0.5).ceil().max(1.0) as usize;
            let h = (hi - lo) / n as f64;
            for s in 0..n {
                let c = lo + (s as f64 + 0.5) * h;
                for (x, w) in GL_X.iter().zip(GL_W) {
                    let t = c + 0.5 * h * x;
                    acc += g(t, p.f(t, self.dual)) * (0.5 * h * w);
                }
            }
        }
        Ok(acc)
    }

    /// f at an arbitrary time.
    pub fn f_at(&self, t: f64) -> Vec3 {
        piece_at(&self.pieces, t).f(t, self.dual)
    }

    /// Mean of f over [a, a + len].
    pub fn average(&self, a: f64, len: f64) -> Result<Vec3, AhtError> {
        let v = self.integrate(a, a + len, 0.0, |_, f| V3(f))?;
        Ok(v.0.map(|x| x / len))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct V3(Vec3);
impl std::ops::AddAssign for V3 {
    fn add_assign(&mut self, o: V3) {
        for a in 0..3 {
            self.0[a] += o.0[a];
        }
    }
}
impl std::ops::Mul<f64> for V3 {
    type Output = V3;
    fn mul(self, s: f64) -> V3 {
        V3(self.0.map(|x| x * s))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct M6([f64; 6]);
impl std::ops::AddAssign for M6 {
    fn add_assign(&mut self, o: M6) {
        for a in 0..6 {
            self.0[a] += o.0[a];
        }
    }
}
impl std::ops::Mul<f64> for M6 {
    type Output = M6;
    fn mul(self, s: f64) -> M6 {
        M6(self.0.map(|x| x * s))
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct C2([Complex64; 2]);
impl std::ops::AddAssign for C2 {
    fn add_assign(&mut self, o: C2) {
        self.0[0] += o.0[0];
        self.0[1] += o.0[1];
    }
}
impl std::ops::Mul<f64> for C2 {
    type Output = C2;
    fn mul(self, s: f64) -> C2 {
        C2([self.0[0] * s, self.0[1] * s])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coupling {
    /// A*/A of the stronger branch.
    pub astar_over_a: f64,
    /// |c±| · D(δ±) for the e^{∓iJt} components.
    pub plus: f64,
    pub minus: f64,
    /// Per-repetition phase mismatch of each branch (rad).
    pub mismatch: [f64; 2],
}

fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

fn dephasing(delta: f64, n: usize) -> f64 {
    let n = n.max(1);
    if delta.abs() < 1e-12 {
        return 1.0;
    }
    ((n as f64 * delta / 2.0).sin() / (delta / 2.0).sin()).abs() / n as f64
}

/// Effective coupling: the resonant Fourier component of f_x ± i f_y against
/// e^{−iJt} over the first core repetition, reduced by the dephasing of N
/// repetitions when α and JT are not matched. When a repetition is not a pure
/// z rotation the component is taken over the whole traced core instead.
pub fn effective_coupling(trace: &TogglingTrace, j: f64) -> Result<Coupling, AhtError> {
    let a = trace.core_start;
    let periodic = trace.alpha.is_finite();
    let t = if periodic { trace.period } else { trace.core_end - a };
    let c = trace.integrate(a, a + t, j, |s, f| {
        let ph = Complex64::from_polar(1.0, -j * s);
        C2([Complex64::new(f[0], f[1]) * ph, Complex64::new(f[0], -f[1]) * ph])
    })?;
    let (d, n) = if periodic {
        ([wrap(-trace.alpha - j * t), wrap(trace.alpha - j * t)], trace.reps)
    } else {
        ([0.0, 0.0], 1)
    };
    let plus = c.0[0].norm() / t * dephasing(d[0], n);
    let minus = c.0[1].norm() / t * dephasing(d[1], n);
    Ok(Coupling { astar_over_a: plus.max(minus), plus, minus, mismatch: d })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DipolarTensor {
    pub m: Mat3,
    /// ‖3M − tr(M)·𝟙‖_F.
    pub residual: f64,
}

/// M_ij = (1/T̃)∫ f_i f_j dt over [t0, t0 + T̃].
pub fn dipolar_average_tensor(trace: &TogglingTrace, t0: f64, window: f64) -> Result<DipolarTensor, AhtError> {
    let q = trace.integrate(t0, t0 + window, 0.0, |_, f| M6(quad_of(&f)))?.0.map(|x| x / window);
    let m = [[q[0], q[1], q[2]], [q[1], q[3], q[4]], [q[2], q[4], q[5]]];
    let tr = m[0][0] + m[1][1] + m[2][2];
    let mut r = 0.0;
    for i in 0..3 {
        for k in 0..3 {
            let d = 3.0 * m[i][k] - if i == k { tr } else { 0.0 };
            r += d * d;
        }
    }
    Ok(DipolarTensor { m, residual: r.sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "order")]
pub enum Suppression {
    /// Error enters at full strength.
    None,
    /// Averaged to zero over a cycle of length `period`.
    FirstOrder { period: f64 },
    /// Averaged on the Rabi time scale 2π/Ω.
    Fast { omega: f64 },
}

/// Largest error strength (rad/s) predicted to leave the transfer intact,
/// reading ≪ as equality.
pub fn error_budget(astar: f64, suppression: Suppression) -> f64 {
    match suppression {
        Suppression::None => astar,
        Suppression::FirstOrder { period } => (2.0 * astar / period).sqrt(),
        Suppression::Fast { omega } => (omega * astar / PI).sqrt(),
    }
}

/// Mean of f over the full core of a one-repetition program started at f = ẑ.
pub fn block_average(program: &SequenceProgram, params: &MoleculeParams) -> Result<Vec3, AhtError> {
    let mut p = program.clone();
    p.reps = 1;
    let tr = toggling_trace(&p, params)?;
    tr.average(tr.core_start, tr.period)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expm::HermitianEig;
    use crate::sequence::{Channel, Segment, SequenceMeta, Waveform};
    use crate::spin::{build_basis, Op, C64};
    use std::f64::consts::{FRAC_PI_2, TAU};

    fn prog(core: Vec<Segment>, reps: usize) -> SequenceProgram {
        SequenceProgram {
            name: "t".into(),
            channels: 1,
            pre: vec![],
            core,
            reps,
            post: vec![],
            params_overrides: Default::default(),
            metadata: SequenceMeta::default(),
        }
    }

    fn py() -> MoleculeParams {
        MoleculeParams::pyruvate()
    }

    #[test]
    fn slic_trace_is_a_circle() {
        let p = py();
        let core = vec![Segment::cw(Channel::S, 0.0, TAU / p.j, Waveform::Const { value: p.j })];
        let mut pr = prog(core, 1);
        pr.pre = vec![Segment::pulse(Channel::S, FRAC_PI_2, 3.0 * FRAC_PI_2)];
        let tr = toggling_trace(&pr, &p).unwrap();
        for (t, f) in tr.times.iter().zip(&tr.f) {
            if *t < tr.core_start {
                continue;
            }
            let s = t - tr.core_start;
            assert!((f[0] - (p.j * s).cos()).abs() < 1e-9, "{t} {f:?}");
            assert!((f[1] - (p.j * s).sin()).abs() < 1e-9);
            assert!(f[2].abs() < 1e-9);
        }
        let c = effective_coupling(&tr, p.j).unwrap();
        assert!((c.astar_over_a - 1.0).abs() < 1e-12);
        let m = dipolar_average_tensor(&tr, tr.core_start, tr.period).unwrap();
        assert!((m.m[0][0] - 0.5).abs() < 1e-12 && (m.m[1][1] - 0.5).abs() < 1e-12 && m.m[2][2].abs() < 1e-12);
        assert!((m.residual - 1.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn idle_is_z() {
        let tr = toggling_trace(&prog(vec![Segment::wait(Channel::S, 0.1, 0)], 1), &py()).unwrap();
        assert!(tr.f.iter().all(|f| *f == [0.0, 0.0, 1.0]));
        let m = dipolar_average_tensor(&tr, 0.0, 0.1).unwrap();
        assert!((m.residual - 6f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn magic_cone_is_isotropic() {
        let w = 100.0;
        let th = (1.0f64 / 3.0).sqrt().acos();
        let core = vec![Segment::cw(Channel::S, 0.0, TAU / w, Waveform::Const { value: w * th.sin() })
            .with_detuning(Waveform::Const { value: w * th.cos() })];
        let tr = toggling_trace(&prog(core, 1), &py()).unwrap();
        let m = dipolar_average_tensor(&tr, 0.0, TAU / w).unwrap();
        assert!(m.residual < 1e-9, "{}", m.residual);
    }

    #[test]
    fn unit_norm_and_reconstruction() {
        let p = py();
        let core = vec![
            Segment::pulse(Channel::S, FRAC_PI_2, 0.3),
            Segment::wait(Channel::S, 1e-3, 0),
            Segment::cw(Channel::S, 1.1, 0.01, Waveform::Const { value: 300.0 }).with_detuning(Waveform::Const { value: -120.0 }),
            Segment::pulse(Channel::S, 2.0, 4.0),
        ];
        let pr = prog(core, 2);
        let tr = toggling_trace(&pr, &p).unwrap();
        for f in &tr.f {
            assert!((norm(f) - 1.0).abs() < 1e-9);
        }
        // Direct propagation of S_z under the control Hamiltonian.
        let sch = schedule(&pr, &p).unwrap();
        let b = build_basis();
        let mut u = Op::identity();
        for e in &sch.s {
            if let Drive::Const(v) = e.drive {
                let h = b.s[0] * C64::new(v[0], 0.0) + b.s[1] * C64::new(v[1], 0.0) + b.s[2] * C64::new(v[2], 0.0);
                u = HermitianEig::new(&h).propagator(e.duration()) * u;
            }
        }
        let rot = u.adjoint() * b.s[2] * u;
        let f = tr.f.last().unwrap();
        let rec = b.s[0] * C64::new(f[0], 0.0) + b.s[1] * C64::new(f[1], 0.0) + b.s[2] * C64::new(f[2], 0.0);
        assert!((rot - rec).camax() < 1e-9);
    }

    #[test]
    fn precession_of_a_z_pulse_pair() {
        let p = py();
        // Two π pulses about axes 0.2 apart rotate by 0.4 about z.
        let core = vec![Segment::pulse(Channel::S, PI, 0.0), Segment::pulse(Channel::S, PI, 0.2)];
        let a = net_precession(&prog(core, 1), &p).unwrap();
        assert!((a - 0.4).abs() < 1e-12);
        let bad = vec![Segment::pulse(Channel::S, FRAC_PI_2, 0.0)];
        assert!(matches!(net_precession(&prog(bad, 1), &p), Err(AhtError::NotPrecession(_))));
    }

    #[test]
    fn budgets() {
        let j = py().j;
        let a = TAU * 0.33;
        let b = error_budget(a, Suppression::FirstOrder { period: TAU / j });
        assert!((b - (j * a / PI).sqrt()).abs() < 1e-12);
        assert_eq!(error_budget(a, Suppression::None), a);
    }
}
