//! Hermitian eigendecomposition with block detection, used for exp(−iHt).

use crate::spin::{Ket, Op, C64};
use nalgebra::DMatrix;

/// H = V diag(λ) V†, with V block-diagonal up to a permutation.
#[derive(Debug, Clone)]
pub struct HermitianEig {
    pub vecs: Op,
    pub vals: [f64; 8],
}

fn components(h: &Op) -> Vec<Vec<usize>> {
    let mut parent: [usize; 8] = [0, 1, 2, 3, 4, 5, 6, 7];
    fn find(p: &mut [usize; 8], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for r in 0..8 {
        for c in (r + 1)..8 {
            if h[(r, c)] != C64::new(0.0, 0.0) {
                let (a, b) = (find(&mut parent, r), find(&mut parent, c));
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of = [usize::MAX; 8];
    for i in 0..8 {
        let r = find(&mut parent, i);
        if root_of[r] == usize::MAX {
            root_of[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_of[r]].push(i);
    }
    groups
}

impl HermitianEig {
    pub fn new(h: &Op) -> Self {
        let mut vecs = Op::zeros();
        let mut vals = [0.0; 8];
        for idx in components(h) {
            let n = idx.len();
            if n == 1 {
                let i = idx[0];
                vecs[(i, i)] = C64::new(1.0, 0.0);
                vals[i] = h[(i, i)].re;
                continue;
            }
            let sub = DMatrix::from_fn(n, n, |r, c| h[(idx[r], idx[c])]);
            let eig = sub.symmetric_eigen();
            for (k, &col) in idx.iter().enumerate() {
                vals[col] = eig.eigenvalues[k];
                for (r, &row) in idx.iter().enumerate() {
                    vecs[(row, col)] = eig.eigenvectors[(r, k)];
                }
            }
        }
        HermitianEig { vecs, vals }
    }

    fn phases(&self, t: f64) -> [C64; 8] {
        self.vals.map(|l| C64::from_polar(1.0, -l * t))
    }

    /// exp(−iHt).
    pub fn propagator(&self, t: f64) -> Op {
        let ph = self.phases(t);
        let mut scaled = self.vecs;
        for c in 0..8 {
            for r in 0..8 {
                scaled[(r, c)] *= ph[c];
            }
        }
        scaled * self.vecs.adjoint()
    }

    /// exp(−iHt)·ψ without forming the propagator.
    pub fn apply(&self, t: f64, psi: &Ket) -> Ket {
        let ph = self.phases(t);
        let mut y = self.vecs.ad_mul(psi);
        for k in 0..8 {
            y[k] *= ph[k];
        }
        self.vecs * y
    }
}

/// exp(−iHt)·ψ by a Taylor series on the vector, with substeps keeping ‖Ht‖∞ ≤ 1/2.
pub fn apply_taylor(h: &Op, t: f64, psi: &Ket) -> Ket {
    let norm = (0..8).map(|r| (0..8).map(|c| h[(r, c)].norm()).sum::<f64>()).fold(0.0, f64::max);
    let n = ((norm * t.abs()) / 0.5).ceil().max(1.0) as usize;
    let a = h * C64::new(0.0, -t / n as f64);
    let scale = psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut y = *psi;
    for _ in 0..n {
        let mut term = y;
        for k in 1..40 {
            term = a * term * C64::new(1.0 / k as f64, 0.0);
            y += term;
            if term.iter().all(|z| z.norm() <= 1e-18 * scale) {
                break;
            }
        }
    }
    y
}
