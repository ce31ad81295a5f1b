#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::Path;

use liftseg::io::{write_labels, write_mask};
use ndarray::Array2;

pub const N: usize = 48;

pub fn truth_labels() -> Array2<u16> {
    Array2::from_shape_fn((N, N), |(r, c)| {
        if (6..22).contains(&r) && (6..22).contains(&c) {
            1
        } else if (27..44).contains(&r) && (20..42).contains(&c) {
            2
        } else {
            0
        }
    })
}

/// `a.png` and `b.png` holding the two square indicators, `truth.png` with
/// the labels, and `run.toml` running a passthrough recipe on them.
pub fn squares_fixture(dir: &Path) {
    let truth = truth_labels();
    for (name, class) in [("a.png", 1), ("b.png", 2)] {
        let mask = truth.mapv(|l| if l == class { 1.0 } else { 0.0 });
        write_mask(&dir.join(name), mask.view()).unwrap();
    }
    write_labels(&dir.join("truth.png"), &truth).unwrap();
    std::fs::write(
        dir.join("run.toml"),
        r#"version = 1

[input]
paths = ["a.png", "b.png"]

[solver]
classes = 2
lambda = 0.1
mode = "inequality"

[evaluation]
ground_truth = "truth.png"

[output]
dir = "out"
"#,
    )
    .unwrap();
}

/// Grayscale image of four oriented gratings, one per quadrant.
pub fn texture_fixture(dir: &Path) {
    let f = 2f64.powf(4.5) / 256.0;
    let angles = [0.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0];
    let img = Array2::from_shape_fn((64, 64), |(r, c)| {
        let q = 2 * usize::from(r >= 32) + usize::from(c >= 32);
        let (s, co) = angles[q].sin_cos();
        0.5 + 0.4 * (2.0 * PI * f * (c as f64 * co + r as f64 * s)).cos()
    });
    write_mask(&dir.join("texture.png"), img.view()).unwrap();
}
