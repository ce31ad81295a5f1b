//! Feature lifting: turns input imagery into `K` channels in `[0, 1]`, each
//! meant to highlight one target class.
//!
//! Recipes are plain data (serde), so filter banks such as
//! `n = 3..6: (0, 2^{n+1/2}/256)` are written as a [`GaborBank`] with
//! `octaves = [3, 4, 5, 6]`.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{invalid, Result, SegError};
use crate::image::{ChannelStack, FeatureStack, Image};

/// One complex Gabor filter, parameterized like scikit-image's
/// `gabor_kernel` with an isotropic Gaussian envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaborSpec {
    /// Radians; the carrier varies along `(cos θ, sin θ)` in `(column, row)`
    /// coordinates.
    pub orientation: f64,
    /// Cycles per pixel, in `(0, 0.5]`.
    pub frequency: f64,
    /// Octaves.
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
}

fn default_bandwidth() -> f64 {
    1.0
}

impl GaborSpec {
    pub fn new(orientation: f64, frequency: f64) -> Result<Self> {
        Self {
            orientation,
            frequency,
            bandwidth: 1.0,
        }
        .validated()
    }

    /// Checks the frequency range and folds the orientation into `[0, π)`.
    /// The response magnitude is invariant under `θ → θ + π`.
    pub fn validated(self) -> Result<Self> {
        if !(self.frequency > 0.0 && self.frequency <= 0.5) {
            return Err(invalid(
                "frequency",
                format!("must lie in (0, 0.5], got {}", self.frequency),
            ));
        }
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(invalid(
                "bandwidth",
                format!("must be positive, got {}", self.bandwidth),
            ));
        }
        if !self.orientation.is_finite() {
            return Err(invalid("orientation", "must be finite"));
        }
        let mut orientation = self.orientation.rem_euclid(PI);
        if orientation >= PI {
            orientation = 0.0;
        }
        Ok(Self {
            orientation,
            ..self
        })
    }

    /// Standard deviation of the Gaussian envelope for the given bandwidth.
    pub fn sigma(&self) -> f64 {
        let b = 2f64.powf(self.bandwidth);
        (0.5 * 2f64.ln()).sqrt() / PI * (b + 1.0) / (b - 1.0) / self.frequency
    }

    /// Kernel half-width: three standard deviations, projected on the
    /// carrier direction, at least 1.
    pub fn half_width(&self) -> usize {
        let s = 3.0 * self.sigma();
        let (sin, cos) = self.orientation.sin_cos();
        (s * cos).abs().max((s * sin).abs()).max(1.0).ceil() as usize
    }
}

/// A family `(θ, 2^{n+1/2}/base)` for each `n` in `octaves`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaborBank {
    /// Orientation in multiples of π.
    pub orientation_pi: f64,
    pub octaves: Vec<f64>,
    #[serde(default = "default_base")]
    pub base: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth: f64,
}

fn default_base() -> f64 {
    256.0
}

impl GaborBank {
    pub fn specs(&self) -> Result<Vec<GaborSpec>> {
        self.octaves
            .iter()
            .map(|n| {
                GaborSpec {
                    orientation: self.orientation_pi * PI,
                    frequency: 2f64.powf(n + 0.5) / self.base,
                    bandwidth: self.bandwidth,
                }
                .validated()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    /// Index of an earlier output channel.
    pub channel: usize,
    pub weight: f64,
}

/// One output channel of a recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelDef {
    /// Sum of Gabor magnitudes of input channel `source`, min-max scaled.
    GaborSum {
        #[serde(default)]
        source: usize,
        #[serde(default)]
        filters: Vec<GaborSpec>,
        #[serde(default)]
        banks: Vec<GaborBank>,
    },
    /// `1` where input channel `source` is at least `threshold`, else `0`.
    ColorThreshold {
        source: usize,
        threshold: f64,
    },
    /// Maps `[lo, hi]` of input channel `source` affinely onto `[0, 1]`.
    Window {
        source: usize,
        lo: f64,
        hi: f64,
    },
    Passthrough {
        source: usize,
    },
    /// `offset + Σ weight · output[channel]` over earlier outputs.
    Combination {
        #[serde(default)]
        offset: f64,
        terms: Vec<Term>,
    },
}

impl ChannelDef {
    fn filters(&self) -> Result<Vec<GaborSpec>> {
        match self {
            ChannelDef::GaborSum { filters, banks, .. } => {
                let mut all = filters
                    .iter()
                    .map(|f| f.validated())
                    .collect::<Result<Vec<_>>>()?;
                for b in banks {
                    all.extend(b.specs()?);
                }
                Ok(all)
            }
            _ => Ok(Vec::new()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftingRecipe {
    pub channels: Vec<ChannelDef>,
}

impl LiftingRecipe {
    pub fn new(channels: Vec<ChannelDef>) -> Self {
        Self { channels }
    }

    pub fn passthrough(k: usize) -> Self {
        Self::new(
            (0..k)
                .map(|source| ChannelDef::Passthrough { source })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    /// Static checks against an input with `inputs` channels. Returns one
    /// message per problem.
    pub fn diagnose(&self, inputs: Option<usize>) -> Vec<String> {
        let mut out = Vec::new();
        if self.channels.is_empty() {
            out.push("recipe has no channels".to_string());
        }
        for (i, def) in self.channels.iter().enumerate() {
            let source = match def {
                ChannelDef::GaborSum { source, .. }
                | ChannelDef::ColorThreshold { source, .. }
                | ChannelDef::Window { source, .. }
                | ChannelDef::Passthrough { source } => Some(*source),
                ChannelDef::Combination { .. } => None,
            };
            if let (Some(s), Some(n)) = (source, inputs) {
                if s >= n {
                    out.push(format!(
                        "channel {i}: source {s} does not exist (input has {n} channels)"
                    ));
                }
            }
            match def {
                ChannelDef::GaborSum { filters, banks, .. } => {
                    if filters.is_empty() && banks.iter().all(|b| b.octaves.is_empty()) {
                        out.push(format!("channel {i}: gabor_sum has no filters"));
                    }
                    if let Err(e) = def.filters() {
                        out.push(format!("channel {i}: {e}"));
                    }
                }
                ChannelDef::Window { lo, hi, .. }
                    if hi.partial_cmp(lo) != Some(std::cmp::Ordering::Greater) =>
                {
                    out.push(format!(
                        "channel {i}: window needs hi > lo, got [{lo}, {hi}]"
                    ));
                }
                ChannelDef::Combination { terms, .. } => {
                    for t in terms {
                        if t.channel >= i {
                            out.push(format!(
                                "channel {i}: combination refers to channel {} which is not defined earlier",
                                t.channel
                            ));
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }
}

/// Index into `0..n` under whole-sample symmetric reflection
/// (`d c b a | a b c d | d c b a`).
fn reflect(j: isize, n: usize) -> usize {
    let n = n as isize;
    let m = j.rem_euclid(2 * n);
    (if m >= n { 2 * n - 1 - m } else { m }) as usize
}

/// 1-D complex taps `exp(-x²/2σ²) · exp(i 2π f c x)` for `x ∈ [-r, r]`.
fn taps(radius: usize, sigma: f64, omega: f64) -> Vec<(f64, f64)> {
    let r = radius as isize;
    (-r..=r)
        .map(|x| {
            let x = x as f64;
            let g = (-0.5 * x * x / (sigma * sigma)).exp();
            let (s, c) = (omega * x).sin_cos();
            (g * c, g * s)
        })
        .collect()
}

/// Magnitude of the complex Gabor response, with symmetric reflection at the
/// borders. The isotropic kernel factors into a row pass and a column pass.
pub fn gabor_response(img: &Image, spec: &GaborSpec) -> Result<Image> {
    let spec = spec.validated()?;
    let out = gabor_magnitude(img.view(), &spec);
    Image::with_spacing(out, img.spacing())
}

fn gabor_magnitude(img: ArrayView2<f64>, spec: &GaborSpec) -> Array2<f64> {
    let (n1, n2) = img.dim();
    let sigma = spec.sigma();
    let r = spec.half_width();
    let (sin, cos) = spec.orientation.sin_cos();
    let omega = 2.0 * PI * spec.frequency;
    // x runs along columns, y along rows
    let kx = taps(r, sigma, omega * cos);
    let ky = taps(r, sigma, omega * sin);
    let norm = 1.0 / (2.0 * PI * sigma * sigma);
    let ri = r as isize;

    // convolve along axis 2: real input, complex taps
    let mut re = Array2::<f64>::zeros((n1, n2));
    let mut im = Array2::<f64>::zeros((n1, n2));
    for i1 in 0..n1 {
        let row = img.row(i1);
        for i2 in 0..n2 {
            let (mut a, mut b) = (0.0, 0.0);
            for (t, &(cr, ci)) in kx.iter().enumerate() {
                let x = t as isize - ri;
                let v = row[reflect(i2 as isize - x, n2)];
                a += v * cr;
                b += v * ci;
            }
            re[[i1, i2]] = a;
            im[[i1, i2]] = b;
        }
    }

    // convolve along axis 1: complex input, complex taps
    let mut out = Array2::<f64>::zeros((n1, n2));
    for i1 in 0..n1 {
        for i2 in 0..n2 {
            let (mut a, mut b) = (0.0, 0.0);
            for (t, &(cr, ci)) in ky.iter().enumerate() {
                let y = t as isize - ri;
                let j = reflect(i1 as isize - y, n1);
                let (vr, vi) = (re[[j, i2]], im[[j, i2]]);
                a += vr * cr - vi * ci;
                b += vr * ci + vi * cr;
            }
            out[[i1, i2]] = norm * a.hypot(b);
        }
    }
    out
}

fn min_max_normalize(a: &mut Array2<f64>) {
    let lo = a.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span > 0.0 {
        a.mapv_inplace(|v| (v - lo) / span);
    } else {
        a.fill(0.0);
    }
}

/// Evaluates a recipe channel by channel; every output is clipped to
/// `[0, 1]`.
pub fn apply_recipe(input: &FeatureStack, recipe: &LiftingRecipe) -> Result<FeatureStack> {
    if recipe.is_empty() {
        return Err(SegError::Recipe("recipe has no channels".into()));
    }
    if let Some(problem) = recipe.diagnose(Some(input.channels())).into_iter().next() {
        return Err(SegError::Recipe(problem));
    }
    let (n1, n2) = input.dims();
    let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(recipe.len());
    for def in &recipe.channels {
        let mut ch =
            match def {
                ChannelDef::GaborSum { source, .. } => {
                    let src = input.channel(*source);
                    let responses: Vec<Array2<f64>> = def
                        .filters()?
                        .par_iter()
                        .map(|spec| gabor_magnitude(src, spec))
                        .collect();
                    let mut sum = Array2::zeros((n1, n2));
                    for r in &responses {
                        sum += r;
                    }
                    min_max_normalize(&mut sum);
                    sum
                }
                ChannelDef::ColorThreshold { source, threshold } => input
                    .channel(*source)
                    .mapv(|v| if v >= *threshold { 1.0 } else { 0.0 }),
                ChannelDef::Window { source, lo, hi } => {
                    input.channel(*source).mapv(|v| (v - lo) / (hi - lo))
                }
                ChannelDef::Passthrough { source } => input.channel(*source).to_owned(),
                ChannelDef::Combination { offset, terms } => {
                    let mut acc = Array2::from_elem((n1, n2), *offset);
                    for t in terms {
                        acc.scaled_add(t.weight, &outputs[t.channel]);
                    }
                    acc
                }
            };
        ch.mapv_inplace(|v| v.clamp(0.0, 1.0));
        outputs.push(ch);
    }
    let views: Vec<ArrayView2<f64>> = outputs.iter().map(|a| a.view()).collect();
    let data = ndarray::stack(Axis(0), &views).expect("equal shapes");
    ChannelStack::with_spacing(data, input.spacing())
}
