//! Forward-difference gradient with Neumann boundary, its adjoint, isotropic
//! TV and the smoothed ℓ1 norm.

use ndarray::{ArrayView2, ArrayViewMut2, Zip};

use crate::error::{invalid, Result, SegError};
use crate::image::{GradientField, Image};

pub(crate) fn check_grid(n1: usize, n2: usize) -> Result<()> {
    if n1 < 2 || n2 < 2 {
        return Err(SegError::DimensionTooSmall { n1, n2 });
    }
    Ok(())
}

/// Writes `(∇1 u, ∇2 u)` into `g1`, `g2`. The last row of `g1` and the last
/// column of `g2` are zero.
pub(crate) fn gradient_into(
    u: ArrayView2<f64>,
    spacing: f64,
    mut g1: ArrayViewMut2<f64>,
    mut g2: ArrayViewMut2<f64>,
) {
    let (n1, n2) = u.dim();
    let inv_h = 1.0 / spacing;
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            let here = u[[i1, i2]];
            g1[[i1, i2]] = if i1 + 1 < n1 {
                (u[[i1 + 1, i2]] - here) * inv_h
            } else {
                0.0
            };
            g2[[i1, i2]] = if i2 + 1 < n2 {
                (u[[i1, i2 + 1]] - here) * inv_h
            } else {
                0.0
            };
        }
    }
}

/// Writes `∇1* g1 + ∇2* g2 = -div(g1, g2)` into `out`.
///
/// Three cases per axis: interior backward difference, `-g[1]` on the first
/// index and `+g[N-1]` on the last. Entries of `g1` on the last row (and of
/// `g2` on the last column) never contribute.
pub(crate) fn adjoint_into(
    g1: ArrayView2<f64>,
    g2: ArrayView2<f64>,
    spacing: f64,
    mut out: ArrayViewMut2<f64>,
) {
    let (n1, n2) = g1.dim();
    let inv_h = 1.0 / spacing;
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            let a = if i1 == 0 {
                -g1[[0, i2]]
            } else if i1 + 1 == n1 {
                g1[[n1 - 2, i2]]
            } else {
                -(g1[[i1, i2]] - g1[[i1 - 1, i2]])
            };
            let b = if i2 == 0 {
                -g2[[i1, 0]]
            } else if i2 + 1 == n2 {
                g2[[i1, n2 - 2]]
            } else {
                -(g2[[i1, i2]] - g2[[i1, i2 - 1]])
            };
            out[[i1, i2]] = (a + b) * inv_h;
        }
    }
}

pub(crate) fn tv_of(u: ArrayView2<f64>, spacing: f64) -> f64 {
    let (n1, n2) = u.dim();
    let inv_h = 1.0 / spacing;
    let mut total = 0.0;
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            let here = u[[i1, i2]];
            let d1 = if i1 + 1 < n1 {
                (u[[i1 + 1, i2]] - here) * inv_h
            } else {
                0.0
            };
            let d2 = if i2 + 1 < n2 {
                (u[[i1, i2 + 1]] - here) * inv_h
            } else {
                0.0
            };
            total += d1.hypot(d2);
        }
    }
    total
}

pub(crate) fn smoothed_l1_of(u: ArrayView2<f64>, eps: f64) -> f64 {
    u.iter().map(|x| (x * x + eps).sqrt()).sum()
}

pub fn gradient(u: &Image) -> Result<GradientField> {
    let (n1, n2) = u.dims();
    check_grid(n1, n2)?;
    let mut g = GradientField::zeros(n1, n2, u.spacing());
    gradient_into(u.view(), u.spacing(), g.g1.view_mut(), g.g2.view_mut());
    Ok(g)
}

pub fn gradient_adjoint(g: &GradientField) -> Result<Image> {
    if g.g1.dim() != g.g2.dim() {
        return Err(SegError::DimensionMismatch {
            expected: g.g1.shape().to_vec(),
            actual: g.g2.shape().to_vec(),
        });
    }
    let (n1, n2) = g.dims();
    check_grid(n1, n2)?;
    let mut out = ndarray::Array2::zeros((n1, n2));
    adjoint_into(g.g1.view(), g.g2.view(), g.spacing, out.view_mut());
    Image::with_spacing(out, g.spacing)
}

/// `Σ_i |∇u[i]|₂`.
pub fn tv_isotropic(u: &Image) -> Result<f64> {
    let (n1, n2) = u.dims();
    check_grid(n1, n2)?;
    Ok(tv_of(u.view(), u.spacing()))
}

/// `Σ_i (u[i]² + eps)^{1/2}`, a smooth upper bound of the ℓ1 norm.
pub fn smoothed_l1(u: &Image, eps: f64) -> Result<f64> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(invalid("eps", format!("must be positive, got {eps}")));
    }
    Ok(smoothed_l1_of(u.view(), eps))
}

/// `⟨a, b⟩` over all pixels of a gradient field.
pub fn field_dot(a: &GradientField, b: &GradientField) -> f64 {
    let mut s = 0.0;
    Zip::from(&a.g1).and(&b.g1).for_each(|x, y| s += x * y);
    Zip::from(&a.g2).and(&b.g2).for_each(|x, y| s += x * y);
    s
}
