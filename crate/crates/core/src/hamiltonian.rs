//! Rotating-frame Hamiltonian with mean-field dipolar and radiation-damping terms.
//!
//! Every term beyond the static part is a field coupling to S⃗ or to I⃗1 + I⃗2,
//! so the instantaneous Hamiltonian is `static + b_S·S⃗ + b_I·I⃗_tot`.

use crate::spin::{build_basis, ErrorParams, Expectations, MoleculeParams, Op, C64};
use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DipolarMode {
    #[default]
    SOnly,
    DualSpecies,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipolarFieldModel {
    pub mode: DipolarMode,
    /// γ_I/γ_S.
    pub g: f64,
}

impl Default for DipolarFieldModel {
    fn default() -> Self {
        DipolarFieldModel { mode: DipolarMode::SOnly, g: 3.98 }
    }
}

impl DipolarFieldModel {
    pub fn dual(g: f64) -> Self {
        DipolarFieldModel { mode: DipolarMode::DualSpecies, g }
    }
}

/// Mean-field vectors (b_S, b_I) produced by Δ_DF and Δ_RD.
pub fn nonlinear_fields(
    errors: &ErrorParams,
    e: &Expectations,
    df: &DipolarFieldModel,
) -> (Vec3, Vec3) {
    let d = errors.delta_df;
    let r = errors.delta_rd;
    let mut bs = [-d * e.sx + r * e.sy, -d * e.sy - r * e.sx, 2.0 * d * e.sz];
    let mut bi = [0.0; 3];
    if df.mode == DipolarMode::DualSpecies {
        let g = df.g;
        bs[2] += 2.0 * g * d * e.iz_tot;
        let g2 = g * g * d;
        bi = [-g2 * e.ix_tot, -g2 * e.iy_tot, 2.0 * g2 * e.iz_tot + 2.0 * g * d * e.sz];
    }
    (bs, bi)
}

/// Static part plus precomputed handles for the field couplings.
#[derive(Debug, Clone)]
pub struct HamiltonianTerms {
    pub params: MoleculeParams,
    pub errors: ErrorParams,
    pub df: DipolarFieldModel,
    pub static_part: Op,
}

impl HamiltonianTerms {
    pub fn new(params: &MoleculeParams, errors: &ErrorParams, df: DipolarFieldModel) -> Self {
        let b = build_basis();
        let c = |x: f64| C64::new(x, 0.0);
        let diff = b.i1[2] - b.i2[2];
        let sum = b.itot[2];
        let static_part = b.i1_dot_i2 * c(params.j)
            + b.s[2] * diff * c(params.a / 2.0)
            + b.s[2] * sum * c(params.a_sigma / 2.0)
            + b.s[2] * c(errors.delta0)
            + diff * c(errors.delta_cs);
        HamiltonianTerms { params: *params, errors: *errors, df, static_part }
    }

    /// Amplitude-error scaling of the S control vector.
    pub fn control_scale(&self) -> f64 {
        if self.params.omega > 0.0 {
            1.0 + self.errors.delta1 / self.params.omega
        } else {
            1.0
        }
    }

    /// Total field vectors on S and I_tot.
    pub fn fields(&self, ctrl_s: Vec3, ctrl_i: Vec3, e: Option<&Expectations>) -> (Vec3, Vec3) {
        let k = self.control_scale();
        let mut bs = ctrl_s.map(|x| k * x);
        let mut bi = ctrl_i;
        if let Some(e) = e {
            let (ns, ni) = nonlinear_fields(&self.errors, e, &self.df);
            for a in 0..3 {
                bs[a] += ns[a];
                bi[a] += ni[a];
            }
        }
        (bs, bi)
    }

    pub fn with_fields(&self, bs: Vec3, bi: Vec3) -> Op {
        let b = build_basis();
        let mut h = self.static_part;
        for a in 0..3 {
            if bs[a] != 0.0 {
                h += b.s[a] * C64::new(bs[a], 0.0);
            }
            if bi[a] != 0.0 {
                h += b.itot[a] * C64::new(bi[a], 0.0);
            }
        }
        h
    }

    pub fn assemble(&self, ctrl_s: Vec3, ctrl_i: Vec3, e: Option<&Expectations>) -> Op {
        let (bs, bi) = self.fields(ctrl_s, ctrl_i, e);
        self.with_fields(bs, bi)
    }
}

/// One-shot assembly of H(t, ρ).
pub fn assemble(
    params: &MoleculeParams,
    errors: &ErrorParams,
    ctrl_s: Vec3,
    ctrl_i: Vec3,
    e: &Expectations,
    df: &DipolarFieldModel,
) -> Op {
    HamiltonianTerms::new(params, errors, *df).assemble(ctrl_s, ctrl_i, Some(e))
}

/// Nonlinear part alone in dual-species form.
pub fn dual_species_df(e: &Expectations, delta_df: f64, g: f64) -> Op {
    let zero = MoleculeParams { a: 0.0, a_sigma: 0.0, j: 0.0, omega: 0.0, omega_i: 0.0 };
    let errors = ErrorParams { delta_df, ..Default::default() };
    assemble(&zero, &errors, [0.0; 3], [0.0; 3], e, &DipolarFieldModel::dual(g))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_params() -> MoleculeParams {
        MoleculeParams { a: 0.0, a_sigma: 0.0, j: 0.0, omega: 0.0, omega_i: 0.0 }
    }

    fn exp_s(s: Vec3) -> Expectations {
        Expectations { sx: s[0], sy: s[1], sz: s[2], ..Default::default() }
    }

    #[test]
    fn all_zero_is_zero() {
        let h = assemble(
            &zero_params(),
            &ErrorParams::default(),
            [0.0; 3],
            [0.0; 3],
            &exp_s([0.1, 0.2, 0.3]),
            &DipolarFieldModel::default(),
        );
        assert_eq!(h.camax(), 0.0);
    }

    #[test]
    fn dipolar_along_z() {
        let d = 3.7;
        let errors = ErrorParams { delta_df: d, ..Default::default() };
        let h = assemble(
            &zero_params(),
            &errors,
            [0.0; 3],
            [0.0; 3],
            &exp_s([0.0, 0.0, 0.5]),
            &DipolarFieldModel::default(),
        );
        let sz = build_basis().s[2];
        let expect = sz * C64::new(d * (1.5 - 0.5), 0.0);
        assert!((h - expect).camax() < 1e-14);
    }

    #[test]
    fn radiation_damping_along_x() {
        let r = 2.0;
        let errors = ErrorParams { delta_rd: r, ..Default::default() };
        let h = assemble(
            &zero_params(),
            &errors,
            [0.0; 3],
            [0.0; 3],
            &exp_s([0.5, 0.0, 0.0]),
            &DipolarFieldModel::default(),
        );
        let sy = build_basis().s[1];
        assert!((h + sy * C64::new(r / 2.0, 0.0)).camax() < 1e-14);
    }

    #[test]
    fn dual_species_limits() {
        assert_eq!(dual_species_df(&Expectations::default(), 5.0, 3.98).camax(), 0.0);
        let e = Expectations { sx: 0.1, sy: -0.2, sz: 0.3, iz_tot: 0.4, ..Default::default() };
        let d = 1.3;
        let g0 = dual_species_df(&e, d, 0.0);
        let errors = ErrorParams { delta_df: d, ..Default::default() };
        let s_only =
            assemble(&zero_params(), &errors, [0.0; 3], [0.0; 3], &e, &DipolarFieldModel::default());
        assert!((g0 - s_only).camax() < 1e-15);
    }

    #[test]
    fn dual_species_hydrogen_scale() {
        // Both hydrogens up, S unpolarised: the I term is g² times the like-spin form.
        let e = Expectations { iz_tot: 1.0, ..Default::default() };
        let d = 0.7;
        let g = 4.0;
        let h = dual_species_df(&e, d, g);
        let b = build_basis();
        let expect = b.itot[2] * C64::new(16.0 * d * 2.0, 0.0) + b.s[2] * C64::new(2.0 * g * d, 0.0);
        assert!((h - expect).camax() < 1e-13);
    }

    #[test]
    fn delta1_scales_control() {
        let p = MoleculeParams::pyruvate();
        let d1 = 40.0;
        let with = HamiltonianTerms::new(&p, &ErrorParams { delta1: d1, ..Default::default() }, Default::default());
        let without = HamiltonianTerms::new(&p, &ErrorParams::default(), Default::default());
        let ctrl = [p.j, 0.0, 0.0];
        let diff = with.assemble(ctrl, [0.0; 3], None) - without.assemble(ctrl, [0.0; 3], None);
        let sx = build_basis().s[0];
        assert!((diff - sx * C64::new(d1 * p.j / p.omega, 0.0)).camax() < 1e-12);
    }

    #[test]
    fn hermitian_static() {
        let p = MoleculeParams::pyruvate();
        let errors = ErrorParams { delta0: 1.0, delta_cs: 2.0, delta_df: 3.0, delta_rd: 4.0, delta1: 5.0 };
        let h = assemble(&p, &errors, [1.0, 2.0, 3.0], [4.0, 5.0, 6.0], &exp_s([0.1, 0.2, 0.3]), &DipolarFieldModel::dual(3.98));
        assert!((h - h.adjoint()).camax() < 1e-12);
    }
}
