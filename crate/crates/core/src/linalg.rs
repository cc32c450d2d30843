//! Small complex linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::model::{CVector, C64};

pub type CMatrix = DMatrix<C64>;

/// `hᴴ v`.
#[inline]
pub fn inner(h: &CVector, v: &CVector) -> C64 {
    h.dotc(v)
}

/// `m += w · h hᴴ`.
pub fn add_outer(m: &mut CMatrix, w: f64, h: &CVector) {
    if w == 0.0 {
        return;
    }
    let n = h.len();
    for c in 0..n {
        let hc = h[c].conj() * w;
        for r in 0..n {
            m[(r, c)] += h[r] * hc;
        }
    }
}

/// `σ I + Σ w_j h_j h_jᴴ`.
pub fn regularized_gram<'a>(
    n: usize,
    diag: f64,
    terms: impl IntoIterator<Item = (f64, &'a CVector)>,
) -> CMatrix {
    let mut m = CMatrix::identity(n, n) * C64::new(diag, 0.0);
    for (w, h) in terms {
        add_outer(&mut m, w, h);
    }
    m
}

/// Cholesky factor of a Hermitian positive-definite matrix.
pub fn factor(m: CMatrix, what: &str) -> Result<Cholesky<C64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::DegenerateRegularizer(format!("{what} is not positive definite")))
}

/// Real part of `hᴴ M⁻¹ h` given `x = M⁻¹ h`.
#[inline]
pub fn quad_re(h: &CVector, x: &CVector) -> f64 {
    inner(h, x).re
}

pub fn unit(v: &CVector) -> CVector {
    let n = v.norm();
    if n > 0.0 {
        v / C64::new(n, 0.0)
    } else {
        v.clone()
    }
}
