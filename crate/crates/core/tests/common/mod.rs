#![allow(dead_code)]

use std::f64::consts::PI;

use liftseg_core::lifting::{ChannelDef, GaborBank, LiftingRecipe};
use liftseg_core::{ChannelStack, Image, LabelMap, SimplexMode};
use ndarray::{Array2, Array3};

/// Closest point of `{x ≥ 0, Σx = 1}` (or `Σx ≤ 1`) by enumerating every
/// support set: on a support `S` with the sum constraint active the KKT point
/// is `y_S - (Σy_S - 1)/|S|`; with it inactive it is `y_S` itself.
pub fn simplex_oracle(y: &[f64], mode: SimplexMode) -> Vec<f64> {
    let k = y.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |x: Vec<f64>| {
        let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, x));
        }
    };
    for mask in 0u32..(1 << k) {
        let support: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        // sum constraint active
        if !support.is_empty() {
            let s: f64 = support.iter().map(|&i| y[i]).sum();
            let shift = (s - 1.0) / support.len() as f64;
            let mut x = vec![0.0; k];
            let mut ok = true;
            for &i in &support {
                x[i] = y[i] - shift;
                ok &= x[i] >= 0.0;
            }
            if ok {
                consider(x);
            }
        }
        // sum constraint inactive
        if mode == SimplexMode::Inequality {
            let mut x = vec![0.0; k];
            let mut ok = true;
            for &i in &support {
                x[i] = y[i];
                ok &= y[i] >= 0.0;
            }
            if ok && x.iter().sum::<f64>() <= 1.0 {
                consider(x);
            }
        }
    }
    best.expect("feasible set is non-empty").1
}

/// Two disjoint squares on an `n x n` grid (n = 64 in the acceptance suite):
/// binary features `φ_k = a·1_Σk + b·1_{Ω∖Σk}` with `a = 1`, `b = 0`, and the
/// ground-truth label map with background label 0.
pub fn two_squares(n: usize) -> (ChannelStack, LabelMap) {
    let s = n as f64 / 64.0;
    let r = |a: f64, b: f64| (a * s) as usize..(b * s) as usize;
    let (r1, c1, r2, c2) = (r(8.0, 28.0), r(8.0, 28.0), r(36.0, 58.0), r(30.0, 56.0));
    let inside = |c: usize, a: usize, b: usize| match c {
        0 => r1.contains(&a) && c1.contains(&b),
        _ => r2.contains(&a) && c2.contains(&b),
    };
    let phi = Array3::from_shape_fn(
        (2, n, n),
        |(c, a, b)| if inside(c, a, b) { 1.0 } else { 0.0 },
    );
    let labels = Array2::from_shape_fn((n, n), |(a, b)| {
        if inside(0, a, b) {
            1
        } else if inside(1, a, b) {
            2
        } else {
            0
        }
    });
    (
        ChannelStack::new(phi).unwrap(),
        LabelMap::new(labels, 2, true).unwrap(),
    )
}

pub const TEXTURE_ORIENTATIONS: [f64; 3] = [0.0, PI / 3.0, 2.0 * PI / 3.0];

/// Carrier frequency of the synthetic textures, `2^{5.5}/256`.
pub fn texture_frequency() -> f64 {
    2f64.powf(5.5) / 256.0
}

/// Three oriented sinusoidal textures: left half, top-right and bottom-right
/// quadrants. Labels 1..=3.
pub fn three_textures(n: usize, noise: f64, seed: u64) -> (Image, LabelMap) {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let f = texture_frequency();
    let region = |a: usize, b: usize| {
        if b < n / 2 {
            0
        } else if a < n / 2 {
            1
        } else {
            2
        }
    };
    let img = Image::from_fn(n, n, |(a, b)| {
        let (s, c) = TEXTURE_ORIENTATIONS[region(a, b)].sin_cos();
        let v = 0.5 + 0.4 * (2.0 * PI * f * (b as f64 * c + a as f64 * s)).cos();
        v + noise * rng.random_range(-1.0..1.0)
    })
    .unwrap();
    let labels = Array2::from_shape_fn((n, n), |(a, b)| region(a, b) as u16 + 1);
    (img, LabelMap::new(labels, 3, false).unwrap())
}

/// One Gabor-sum channel per texture, tuned to its orientation at octave 5
/// of the `2^{n+1/2}/256` frequency ladder.
pub fn texture_recipe() -> LiftingRecipe {
    LiftingRecipe::new(
        [0.0, 1.0 / 3.0, 2.0 / 3.0]
            .iter()
            .map(|&o| ChannelDef::GaborSum {
                source: 0,
                filters: vec![],
                banks: vec![GaborBank {
                    orientation_pi: o,
                    octaves: vec![5.0],
                    base: 256.0,
                    bandwidth: 1.0,
                }],
            })
            .collect(),
    )
}

pub fn random_stack(
    rng: &mut impl rand::Rng,
    k: usize,
    n1: usize,
    n2: usize,
    lo: f64,
    hi: f64,
) -> ChannelStack {
    ChannelStack::new(Array3::from_shape_fn((k, n1, n2), |_| {
        rng.random_range(lo..hi)
    }))
    .unwrap()
}
