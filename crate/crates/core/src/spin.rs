//! Operator algebra for the three-spin system.
//!
//! Tensor order is (I1 ⊗ I2 ⊗ S); basis index = 4·i1 + 2·i2 + s with 0 = up.
//! Spin operators are halved Pauli matrices, ħ = 1.

use nalgebra::{SMatrix, SVector};
use num_complex::Complex64;
use std::sync::OnceLock;

pub type C64 = Complex64;
pub type Op = SMatrix<C64, 8, 8>;
pub type Ket = SVector<C64, 8>;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

fn pauli(k: usize) -> [[C64; 2]; 2] {
    let h = 0.5;
    match k {
        0 => [[ZERO, C64::new(h, 0.0)], [C64::new(h, 0.0), ZERO]],
        1 => [[ZERO, C64::new(0.0, -h)], [C64::new(0.0, h), ZERO]],
        _ => [[C64::new(h, 0.0), ZERO], [ZERO, C64::new(-h, 0.0)]],
    }
}

/// Embed a 2×2 operator on spin `site` (0 = I1, 1 = I2, 2 = S).
fn embed(m: [[C64; 2]; 2], site: usize) -> Op {
    let shift = 2 - site;
    let mut out = Op::zeros();
    for r in 0..8 {
        for c in 0..8 {
            let (br, bc) = ((r >> shift) & 1, (c >> shift) & 1);
            let mask = !(1usize << shift) & 7;
            if r & mask == c & mask {
                out[(r, c)] = m[br][bc];
            }
        }
    }
    out
}

/// Vector components (x, y, z).
pub type Triple = [Op; 3];

#[derive(Debug, Clone)]
pub struct SpinBasis {
    pub s: Triple,
    pub i1: Triple,
    pub i2: Triple,
    /// I⃗1 + I⃗2.
    pub itot: Triple,
    /// Pseudospin on the {T0, S0} pair, T0 as the upper state.
    pub ps: Triple,
    pub identity: Op,
    pub singlet: Op,
    pub triplet0: Op,
    /// I⃗1·I⃗2.
    pub i1_dot_i2: Op,
}

impl SpinBasis {
    fn new() -> Self {
        let s = [0, 1, 2].map(|k| embed(pauli(k), 2));
        let i1 = [0, 1, 2].map(|k| embed(pauli(k), 0));
        let i2 = [0, 1, 2].map(|k| embed(pauli(k), 1));
        let itot = [0, 1, 2].map(|k| i1[k] + i2[k]);
        let i1_dot_i2 = (0..3).fold(Op::zeros(), |acc, k| acc + i1[k] * i2[k]);

        let r = std::f64::consts::FRAC_1_SQRT_2;
        // |↑↓⟩ has index 2 (i1=0, i2=1), |↓↑⟩ index 4, on the (I1, I2) factor with S traced in.
        let pair = |a: f64, b: f64| {
            let mut k = SVector::<C64, 4>::zeros();
            k[1] = C64::new(a, 0.0);
            k[2] = C64::new(b, 0.0);
            k
        };
        let s0 = pair(r, -r);
        let t0 = pair(r, r);
        let lift = |bra: &SVector<C64, 4>, ket: &SVector<C64, 4>| {
            let mut out = Op::zeros();
            for a in 0..4 {
                for b in 0..4 {
                    let v = ket[a] * bra[b].conj();
                    for sp in 0..2 {
                        out[(2 * a + sp, 2 * b + sp)] = v;
                    }
                }
            }
            out
        };
        let singlet = lift(&s0, &s0);
        let triplet0 = lift(&t0, &t0);
        let t0s0 = lift(&s0, &t0);
        let s0t0 = lift(&t0, &s0);
        let half = C64::new(0.5, 0.0);
        let ps = [
            (t0s0 + s0t0) * half,
            (t0s0 - s0t0) * C64::new(0.0, -0.5),
            (triplet0 - singlet) * half,
        ];
        SpinBasis {
            s,
            i1,
            i2,
            itot,
            ps,
            identity: Op::identity(),
            singlet,
            triplet0,
            i1_dot_i2,
        }
    }
}

/// Shared operator set, built once.
pub fn build_basis() -> &'static SpinBasis {
    static BASIS: OnceLock<SpinBasis> = OnceLock::new();
    BASIS.get_or_init(SpinBasis::new)
}

/// Singlet ket of the hydrogen pair tensored with an S basis state (0 = up).
pub fn singlet_ket(s_down: bool) -> Ket {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let sp = usize::from(s_down);
    let mut k = Ket::zeros();
    k[2 + sp] = C64::new(r, 0.0);
    k[4 + sp] = C64::new(-r, 0.0);
    k
}

/// Angular-frequency parameters of the molecule and control hardware.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MoleculeParams {
    pub a: f64,
    pub a_sigma: f64,
    pub j: f64,
    pub omega: f64,
    pub omega_i: f64,
}

impl MoleculeParams {
    /// Pyruvate values in rad/s.
    pub fn pyruvate() -> Self {
        let tau = std::f64::consts::TAU;
        MoleculeParams {
            a: tau * 0.4,
            a_sigma: tau * 0.4,
            j: tau * 11.7,
            omega: tau * 500.0,
            omega_i: tau * 600.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.a, self.a_sigma, self.j, self.omega, self.omega_i]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
    }
}

/// Error amplitudes in rad/s.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ErrorParams {
    pub delta0: f64,
    pub delta1: f64,
    pub delta_df: f64,
    pub delta_rd: f64,
    pub delta_cs: f64,
}

impl ErrorParams {
    pub fn is_nonlinear(&self) -> bool {
        self.delta_df != 0.0 || self.delta_rd != 0.0
    }
}

/// Cached expectation values. `i*_tot` refer to I⃗1 + I⃗2, `*_ps` to the pseudospin.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize)]
pub struct Expectations {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
    pub ix_tot: f64,
    pub iy_tot: f64,
    pub iz_tot: f64,
    pub ix_ps: f64,
    pub iy_ps: f64,
    pub iz_ps: f64,
}

impl Expectations {
    pub fn transfer(&self) -> f64 {
        2.0 * self.sz
    }

    pub fn s_vec(&self) -> [f64; 3] {
        [self.sx, self.sy, self.sz]
    }

    pub fn i_vec(&self) -> [f64; 3] {
        [self.ix_tot, self.iy_tot, self.iz_tot]
    }

    pub fn from_rho(rho: &Op) -> Self {
        let b = build_basis();
        let ev = |o: &Op| (rho * o).trace().re;
        Expectations {
            sx: ev(&b.s[0]),
            sy: ev(&b.s[1]),
            sz: ev(&b.s[2]),
            ix_tot: ev(&b.itot[0]),
            iy_tot: ev(&b.itot[1]),
            iz_tot: ev(&b.itot[2]),
            ix_ps: ev(&b.ps[0]),
            iy_ps: ev(&b.ps[1]),
            iz_ps: ev(&b.ps[2]),
        }
    }

    /// Weighted pure-state ensemble.
    pub fn from_ensemble(kets: &[(f64, Ket)]) -> Self {
        let b = build_basis();
        let ev = |o: &Op| {
            kets.iter()
                .map(|(w, k)| w * k.dotc(&(o * k)).re)
                .sum::<f64>()
        };
        Expectations {
            sx: ev(&b.s[0]),
            sy: ev(&b.s[1]),
            sz: ev(&b.s[2]),
            ix_tot: ev(&b.itot[0]),
            iy_tot: ev(&b.itot[1]),
            iz_tot: ev(&b.itot[2]),
            ix_ps: ev(&b.ps[0]),
            iy_ps: ev(&b.ps[1]),
            iz_ps: ev(&b.ps[2]),
        }
    }

    pub fn max_abs_diff(&self, o: &Self) -> f64 {
        let a = self.as_array();
        let b = o.as_array();
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    pub fn as_array(&self) -> [f64; 9] {
        [
            self.sx, self.sy, self.sz, self.ix_tot, self.iy_tot, self.iz_tot, self.ix_ps,
            self.iy_ps, self.iz_ps,
        ]
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum StateError {
    #[error("density matrix not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("trace deviates from 1 by {0:.3e}")]
    Trace(f64),
    #[error("negative eigenvalue {0:.3e}")]
    NotPositive(f64),
}

#[derive(Debug, Clone)]
pub struct DensityState {
    rho: Op,
    exp: Expectations,
}

impl DensityState {
    pub fn new(rho: Op) -> Result<Self, StateError> {
        let herm = (rho - rho.adjoint()).camax();
        if herm > 1e-10 {
            return Err(StateError::NotHermitian(herm));
        }
        let tr = (rho.trace() - ONE).norm();
        if tr > 1e-10 {
            return Err(StateError::Trace(tr));
        }
        let min = spectrum(&rho)[0];
        if min < -1e-9 {
            return Err(StateError::NotPositive(min));
        }
        Ok(Self::from_rho_unchecked(rho))
    }

    pub(crate) fn from_rho_unchecked(rho: Op) -> Self {
        DensityState { exp: Expectations::from_rho(&rho), rho }
    }

    pub fn from_ensemble(kets: &[(f64, Ket)]) -> Self {
        let mut rho = Op::zeros();
        for (w, k) in kets {
            rho += k * k.adjoint() * C64::new(*w, 0.0);
        }
        Self::from_rho_unchecked(rho)
    }

    pub fn rho(&self) -> &Op {
        &self.rho
    }

    pub fn expectations(&self) -> &Expectations {
        &self.exp
    }

    pub fn transfer(&self) -> f64 {
        self.exp.transfer()
    }

    /// Decomposition into weighted pure states, dropping zero weights.
    pub fn ensemble(&self) -> Vec<(f64, Ket)> {
        let eig = self.rho.symmetric_eigen();
        let mut out = Vec::new();
        for (k, w) in eig.eigenvalues.iter().enumerate() {
            if *w > 1e-15 {
                out.push((*w, eig.eigenvectors.column(k).into_owned()));
            }
        }
        out
    }

    pub fn spectrum(&self) -> [f64; 8] {
        spectrum(&self.rho)
    }
}

/// Ascending eigenvalues of a Hermitian operator.
pub fn spectrum(m: &Op) -> [f64; 8] {
    let mut v: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    let mut out = [0.0; 8];
    out.copy_from_slice(&v);
    out
}

/// ρ0 = |S0⟩⟨S0| ⊗ 𝟙_S/2.
pub fn initial_state() -> DensityState {
    DensityState::from_rho_unchecked(build_basis().singlet * C64::new(0.5, 0.0))
}

/// The two pure states whose equal mixture is the initial state.
pub fn initial_ensemble() -> Vec<(f64, Ket)> {
    vec![(0.5, singlet_ket(false)), (0.5, singlet_ket(true))]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comm(a: &Op, b: &Op) -> Op {
        a * b - b * a
    }

    #[test]
    fn commutation_relations() {
        let b = build_basis();
        let i = C64::new(0.0, 1.0);
        for t in [&b.s, &b.i1, &b.i2, &b.ps] {
            for k in 0..3 {
                let (x, y, z) = (&t[k], &t[(k + 1) % 3], &t[(k + 2) % 3]);
                assert!((comm(x, y) - z * i).camax() < 1e-12);
            }
        }
        for k in 0..3 {
            for l in 0..3 {
                assert!(comm(&b.s[k], &b.i1[l]).camax() < 1e-15);
                assert!(comm(&b.i1[k], &b.i2[l]).camax() < 1e-15);
            }
        }
    }

    #[test]
    fn hermitian_traceless() {
        let b = build_basis();
        for op in b.s.iter().chain(&b.i1).chain(&b.i2).chain(&b.ps) {
            assert!((op - op.adjoint()).camax() < 1e-15);
            assert!(op.trace().norm() < 1e-15);
        }
    }

    #[test]
    fn sz_square_trace() {
        let b = build_basis();
        assert!(((b.s[2] * b.s[2]).trace() - C64::new(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn singlet_energy() {
        let b = build_basis();
        let k = singlet_ket(false);
        let e = k.dotc(&(b.i1_dot_i2 * k)).re;
        assert!((e + 0.75).abs() < 1e-14);
    }

    #[test]
    fn pseudospin_matches_difference() {
        // I1z − I2z = 2 I_x^ps on the {T0, S0} subspace.
        let b = build_basis();
        let d = b.i1[2] - b.i2[2];
        let p = b.singlet + b.triplet0;
        assert!((p * d * p - b.ps[0] * C64::new(2.0, 0.0)).camax() < 1e-14);
    }

    #[test]
    fn initial_state_properties() {
        let st = initial_state();
        let e = st.expectations();
        assert_eq!(e.s_vec(), [0.0, 0.0, 0.0]);
        assert!((e.iz_ps + 0.5).abs() < 1e-14);
        assert!((st.rho().trace() - ONE).norm() < 1e-14);
        assert!(st.spectrum()[0] > -1e-12);
        let b = build_basis();
        assert!(((st.rho() * b.i1_dot_i2).trace().re + 0.75).abs() < 1e-14);
        let ens = Expectations::from_ensemble(&initial_ensemble());
        assert!(ens.max_abs_diff(e) < 1e-15);
        assert!(DensityState::new(*st.rho()).is_ok());
    }

    #[test]
    fn polarized_and_rotated() {
        let b = build_basis();
        let up = (b.identity + b.s[2] * C64::new(2.0, 0.0)) * C64::new(1.0 / 8.0, 0.0);
        let st = DensityState::new(up).unwrap();
        assert!((st.expectations().sz - 0.5).abs() < 1e-14);
        assert!((st.transfer() - 1.0).abs() < 1e-14);
        // π/2 about y: ρ → U ρ U† with U = exp(−i π/2 S_y) = cos(π/4) − 2i sin(π/4) S_y.
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let u = b.identity * C64::new(r, 0.0) - b.s[1] * C64::new(0.0, 2.0 * r);
        let st2 = DensityState::new(u * up * u.adjoint()).unwrap();
        assert!((st2.expectations().sx - 0.5).abs() < 1e-14);
        assert!(st2.expectations().sz.abs() < 1e-14);
    }

    #[test]
    fn rejects_invalid_state() {
        assert!(matches!(DensityState::new(Op::zeros()), Err(StateError::Trace(_))));
    }
}
