//! The nonlinear data-fit operator `M(u) = (m(u_k), m(1 - u_k))_k` and its
//! derivative.
//!
//! Per channel, `m(x) = x ⊙ (A(x)𝟙 - φ)²` where `A(x) = ⟨x, φ⟩ / |x|_{1,ε}` is
//! the data-weighted mean of `φ` over the soft region `x`. Writing
//! `t = A(x)𝟙 - φ` and `q = ∇A(x)`, the derivative is
//!
//! ```text
//! Dm(x) d  = t² ⊙ d + 2 (x ⊙ t) ⟨q, d⟩
//! Dm(x)* w = t² ⊙ w + 2 ⟨x ⊙ t, w⟩ q
//! ```
//!
//! i.e. a diagonal plus a rank-one term, applied in `O(n)` without forming
//! any matrix.

use ndarray::parallel::prelude::*;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, SegError};
use crate::grid_ops::smoothed_l1_of;
use crate::image::{ChannelStack, DataFitValue, FeatureStack, Image, MaskStack};

/// Smoothing parameter of `|·|_{1,ε}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SmoothingEps(f64);

impl SmoothingEps {
    pub const DEFAULT: f64 = 1e-6;

    pub fn new(eps: f64) -> Result<Self> {
        if eps.is_finite() && eps > 0.0 {
            Ok(Self(eps))
        } else {
            Err(invalid("eps", format!("must be positive, got {eps}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for SmoothingEps {
    fn default() -> Self {
        Self(Self::DEFAULT)
    }
}

impl TryFrom<f64> for SmoothingEps {
    type Error = SegError;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SmoothingEps> for f64 {
    fn from(e: SmoothingEps) -> f64 {
        e.0
    }
}

/// Which formula is used for the gradient of the channel mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeForm {
    /// Exact chain rule: `∂|x|_{1,ε}/∂x_j = x_j / (x_j² + ε)^{1/2}`, rank-one
    /// term added.
    #[default]
    Exact,
    /// The alternative matrix form: `∂|x|_{1,ε}/∂x_j` replaced by
    /// `x_j / |x|_{1,ε}` and the rank-one term subtracted. Kept for comparison
    /// only; it is not the derivative of `m`.
    Printed,
}

fn mean_parts(x: ArrayView2<f64>, phi: ArrayView2<f64>, eps: f64) -> (f64, f64) {
    let num: f64 = Zip::from(&x).and(&phi).fold(0.0, |acc, a, b| acc + a * b);
    (num, smoothed_l1_of(x, eps))
}

fn residual_into(x: ArrayView2<f64>, phi: ArrayView2<f64>, eps: f64, out: ArrayViewMut2<f64>) {
    let (num, den) = mean_parts(x, phi, eps);
    let mean = num / den;
    Zip::from(out).and(&x).and(&phi).for_each(|o, &xi, &p| {
        let t = mean - p;
        *o = xi * t * t;
    });
}

fn check_pair(u: ArrayView2<f64>, phi: ArrayView2<f64>) -> Result<()> {
    if u.dim() != phi.dim() {
        return Err(SegError::DimensionMismatch {
            expected: phi.shape().to_vec(),
            actual: u.shape().to_vec(),
        });
    }
    Ok(())
}

/// `A(u) = ⟨u, φ⟩ / |u|_{1,ε}`.
pub fn channel_mean(u: &Image, phi: &Image, eps: SmoothingEps) -> Result<f64> {
    check_pair(u.view(), phi.view())?;
    let (num, den) = mean_parts(u.view(), phi.view(), eps.get());
    Ok(num / den)
}

/// `m(u) = u ⊙ (A(u)𝟙 - φ)²`.
pub fn m_residual(u: &Image, phi: &Image, eps: SmoothingEps) -> Result<Image> {
    check_pair(u.view(), phi.view())?;
    let mut out = Array2::zeros(u.dims());
    residual_into(u.view(), phi.view(), eps.get(), out.view_mut());
    Image::with_spacing(out, u.spacing())
}

fn check_stacks(u: &MaskStack, phi: &FeatureStack) -> Result<()> {
    if u.channels() != phi.channels() {
        return Err(SegError::ChannelMismatch {
            expected: phi.channels(),
            actual: u.channels(),
        });
    }
    u.same_shape(phi)
}

/// Stacks `m(u_k)` and `m(1 - u_k)` as channels `2k` and `2k + 1`.
pub fn data_operator(u: &MaskStack, phi: &FeatureStack, eps: SmoothingEps) -> Result<DataFitValue> {
    check_stacks(u, phi)?;
    let k = u.channels();
    let (n1, n2) = u.dims();
    let mut out = ChannelStack::zeros(2 * k, n1, n2, u.spacing());
    out.data_mut()
        .axis_chunks_iter_mut(Axis(0), 2)
        .into_par_iter()
        .enumerate()
        .for_each(|(c, mut pair)| {
            let uc = u.channel(c);
            let pc = phi.channel(c);
            residual_into(uc, pc, eps.get(), pair.index_axis_mut(Axis(0), 0));
            let comp = uc.mapv(|x| 1.0 - x);
            residual_into(comp.view(), pc, eps.get(), pair.index_axis_mut(Axis(0), 1));
        });
    Ok(out)
}

/// Linearization of `m` at a single channel `x`.
#[derive(Debug, Clone)]
struct ChannelLinearization {
    /// `t ⊙ t`
    t_sq: Array2<f64>,
    /// `x ⊙ t`
    xt: Array2<f64>,
    /// gradient of the channel mean, already carrying the sign of the
    /// rank-one term
    q: Array2<f64>,
}

impl ChannelLinearization {
    fn new(x: ArrayView2<f64>, phi: ArrayView2<f64>, eps: f64, form: DerivativeForm) -> Self {
        let (num, den) = mean_parts(x, phi, eps);
        let mean = num / den;
        let t = phi.mapv(|p| mean - p);
        let t_sq = t.mapv(|v| v * v);
        let xt = &x * &t;
        let q = match form {
            DerivativeForm::Exact => {
                let c = num / (den * den);
                Zip::from(&x)
                    .and(&phi)
                    .map_collect(|&xi, &p| p / den - c * xi / (xi * xi + eps).sqrt())
            }
            DerivativeForm::Printed => {
                let c = num / (den * den * den);
                Zip::from(&x)
                    .and(&phi)
                    .map_collect(|&xi, &p| -(p / den - c * xi))
            }
        };
        Self { t_sq, xt, q }
    }

    /// `out += sign · Dm(x) d`
    fn apply_add(&self, d: ArrayView2<f64>, sign: f64, out: ArrayViewMut2<f64>) {
        let qd: f64 = Zip::from(&self.q)
            .and(&d)
            .fold(0.0, |acc, a, b| acc + a * b);
        let r = 2.0 * qd;
        Zip::from(out)
            .and(&self.t_sq)
            .and(&self.xt)
            .and(&d)
            .for_each(|o, &ts, &xt, &di| *o += sign * (ts * di + r * xt));
    }

    /// `out += sign · Dm(x)* w`
    fn adjoint_add(&self, w: ArrayView2<f64>, sign: f64, out: ArrayViewMut2<f64>) {
        let xtw: f64 = Zip::from(&self.xt)
            .and(&w)
            .fold(0.0, |acc, a, b| acc + a * b);
        let r = 2.0 * xtw;
        Zip::from(out)
            .and(&self.t_sq)
            .and(&self.q)
            .and(&w)
            .for_each(|o, &ts, &q, &wi| *o += sign * (ts * wi + r * q));
    }
}

/// The derivative `DM(u)` of the full data operator, linearized once and
/// applied any number of times.
///
/// Because `M` contains `m(1 - u_k)`, the second block carries the inner
/// derivative `-1`.
#[derive(Debug, Clone)]
pub struct DataJacobian {
    inside: Vec<ChannelLinearization>,
    outside: Vec<ChannelLinearization>,
    dims: (usize, usize),
    spacing: f64,
}

impl DataJacobian {
    pub fn new(
        u: &MaskStack,
        phi: &FeatureStack,
        eps: SmoothingEps,
        form: DerivativeForm,
    ) -> Result<Self> {
        check_stacks(u, phi)?;
        let (inside, outside): (Vec<_>, Vec<_>) = (0..u.channels())
            .into_par_iter()
            .map(|c| {
                let uc = u.channel(c);
                let pc = phi.channel(c);
                let comp = uc.mapv(|x| 1.0 - x);
                (
                    ChannelLinearization::new(uc, pc, eps.get(), form),
                    ChannelLinearization::new(comp.view(), pc, eps.get(), form),
                )
            })
            .unzip();
        Ok(Self {
            inside,
            outside,
            dims: u.dims(),
            spacing: u.spacing(),
        })
    }

    pub fn channels(&self) -> usize {
        self.inside.len()
    }

    fn check_shape(&self, s: &ChannelStack, channels: usize) -> Result<()> {
        if s.channels() != channels {
            return Err(SegError::ChannelMismatch {
                expected: channels,
                actual: s.channels(),
            });
        }
        if s.dims() != self.dims {
            return Err(SegError::DimensionMismatch {
                expected: vec![self.dims.0, self.dims.1],
                actual: vec![s.dims().0, s.dims().1],
            });
        }
        Ok(())
    }

    /// `DM(u) d`, a `2K`-channel stack.
    pub fn apply(&self, d: &MaskStack) -> Result<DataFitValue> {
        let k = self.channels();
        self.check_shape(d, k)?;
        let mut out = ChannelStack::zeros(2 * k, self.dims.0, self.dims.1, self.spacing);
        out.data_mut()
            .axis_chunks_iter_mut(Axis(0), 2)
            .into_par_iter()
            .enumerate()
            .for_each(|(c, mut pair)| {
                let dc = d.channel(c);
                self.inside[c].apply_add(dc, 1.0, pair.index_axis_mut(Axis(0), 0));
                self.outside[c].apply_add(dc, -1.0, pair.index_axis_mut(Axis(0), 1));
            });
        Ok(out)
    }

    /// `DM(u)* w`, a `K`-channel stack.
    pub fn adjoint(&self, w: &DataFitValue) -> Result<MaskStack> {
        let k = self.channels();
        self.check_shape(w, 2 * k)?;
        let mut out = ChannelStack::zeros(k, self.dims.0, self.dims.1, self.spacing);
        out.data_mut()
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(c, mut dst)| {
                self.inside[c].adjoint_add(w.channel(2 * c), 1.0, dst.view_mut());
                self.outside[c].adjoint_add(w.channel(2 * c + 1), -1.0, dst.view_mut());
            });
        Ok(out)
    }

    /// Per channel `Dm(u_k) w_k^a - Dm(1 - u_k) w_k^b` with the forward
    /// (untransposed) blocks.
    pub fn forward_on_dual(&self, w: &DataFitValue) -> Result<MaskStack> {
        let k = self.channels();
        self.check_shape(w, 2 * k)?;
        let mut out = ChannelStack::zeros(k, self.dims.0, self.dims.1, self.spacing);
        out.data_mut()
            .axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(c, mut dst)| {
                self.inside[c].apply_add(w.channel(2 * c), 1.0, dst.view_mut());
                self.outside[c].apply_add(w.channel(2 * c + 1), -1.0, dst.view_mut());
            });
        Ok(out)
    }

    /// Power-iteration estimate of the operator norm `‖DM(u)‖`.
    pub fn norm_estimate(&self, iterations: usize) -> f64 {
        let k = self.channels();
        let (n1, n2) = self.dims;
        let mut x = ChannelStack::zeros(k, n1, n2, self.spacing);
        for (j, v) in x.data_mut().iter_mut().enumerate() {
            *v = 1.0 + 0.5 * (j as f64 * 0.618_033_988_75).sin();
        }
        let mut estimate = 0.0;
        for _ in 0..iterations.max(1) {
            let nx = x.norm();
            if nx == 0.0 {
                return 0.0;
            }
            x.data_mut().mapv_inplace(|v| v / nx);
            let y = self.apply(&x).expect("shape checked");
            estimate = y.norm();
            x = self.adjoint(&y).expect("shape checked");
        }
        estimate
    }
}

/// `DM(u)* w` with the exact derivative.
pub fn data_jacobian_adjoint(
    u: &MaskStack,
    phi: &FeatureStack,
    w: &DataFitValue,
    eps: SmoothingEps,
) -> Result<MaskStack> {
    DataJacobian::new(u, phi, eps, DerivativeForm::Exact)?.adjoint(w)
}

/// `DM(u) d` with the exact derivative.
pub fn data_jacobian_apply(
    u: &MaskStack,
    phi: &FeatureStack,
    d: &MaskStack,
    eps: SmoothingEps,
) -> Result<DataFitValue> {
    DataJacobian::new(u, phi, eps, DerivativeForm::Exact)?.apply(d)
}
