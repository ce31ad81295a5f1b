//! End-to-end acceptance checks. Each test prints a single
//! `[PASS]`/`[FAIL]` line before asserting.

mod common;

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use liftseg_core::evaluation::Confusion;
use liftseg_core::grid_ops::field_dot;
use liftseg_core::projections::{feasibility, project_simplex_point};
use liftseg_core::solver::{MASK_NEG_TOL, MASK_SUM_TOL};
use liftseg_core::{
    apply_recipe, assign_labels, compute_metrics, data_operator, gradient, gradient_adjoint,
    history_csv, solve_with, ChannelStack, DataJacobian, DerivativeForm, GradientField, Image,
    LabelMap, MetricsReport, SimplexMode, SmoothingEps, Solution, SolverConfig,
};
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, ok: bool, elapsed: Duration, detail: &str) {
    let tag = if ok { "PASS" } else { "FAIL" };
    println!(
        "[{tag}] criterion {id}: {name} ({:.3} s) {detail}",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_1_operator_adjointness() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let h = rng.random_range(0.5..2.0);
        let u = Image::with_spacing(
            Array2::from_shape_fn((32, 32), |_| rng.random_range(-1.0..1.0)),
            h,
        )
        .unwrap();
        let g = GradientField {
            g1: Array2::from_shape_fn((32, 32), |_| rng.random_range(-1.0..1.0)),
            g2: Array2::from_shape_fn((32, 32), |_| rng.random_range(-1.0..1.0)),
            spacing: h,
        };
        let lhs = field_dot(&gradient(&u).unwrap(), &g);
        let rhs = (u.values() * gradient_adjoint(&g).unwrap().values()).sum();
        let scale = u.values().mapv(|x| x * x).sum().sqrt()
            * (g.g1.mapv(|x| x * x).sum() + g.g2.mapv(|x| x * x).sum()).sqrt()
            + 1.0;
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-10 && elapsed < Duration::from_secs(1);
    report(
        1,
        "operator adjointness",
        ok,
        elapsed,
        &format!("worst scaled gap {worst:.2e}"),
    );
    assert!(ok);
}

#[test]
fn criterion_2_data_term_derivative() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let eps = SmoothingEps::new(1e-6).unwrap();
    let h = 1e-6;
    let start = Instant::now();
    let (mut worst_fd, mut worst_fd_adj, mut worst_adj): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..20 {
        let k = rng.random_range(1..=3);
        let (n1, n2) = (rng.random_range(2..=12), rng.random_range(2..=12));
        let u = common::random_stack(&mut rng, k, n1, n2, 0.05, 0.95);
        let phi = common::random_stack(&mut rng, k, n1, n2, 0.0, 1.0);
        let d = common::random_stack(&mut rng, k, n1, n2, -1.0, 1.0);
        let w = common::random_stack(&mut rng, 2 * k, n1, n2, -1.0, 1.0);

        let shifted = |s: f64| ChannelStack::new(u.data() + &(d.data() * s)).unwrap();
        let plus = data_operator(&shifted(h), &phi, eps).unwrap();
        let minus = data_operator(&shifted(-h), &phi, eps).unwrap();
        let fd = ChannelStack::new((plus.data() - minus.data()) / (2.0 * h)).unwrap();

        let jac = DataJacobian::new(&u, &phi, eps, DerivativeForm::Exact).unwrap();
        let jd = jac.apply(&d).unwrap();
        let jtw = jac.adjoint(&w).unwrap();

        let diff = ChannelStack::new(jd.data() - fd.data()).unwrap();
        worst_fd = worst_fd.max(diff.norm() / fd.norm());

        let (a, b) = (w.dot(&fd), jtw.dot(&d));
        worst_fd_adj = worst_fd_adj.max((a - b).abs() / (w.norm() * fd.norm()));

        let (a, b) = (jd.dot(&w), d.dot(&jtw));
        worst_adj = worst_adj.max((a - b).abs() / a.abs().max(b.abs()));
    }
    let elapsed = start.elapsed();
    let ok = worst_fd <= 1e-4
        && worst_fd_adj <= 1e-4
        && worst_adj <= 1e-8
        && elapsed < Duration::from_secs(10);
    report(
        2,
        "data-term derivative",
        ok,
        elapsed,
        &format!(
            "fd {worst_fd:.2e}, fd-adjoint {worst_fd_adj:.2e}, adjoint identity {worst_adj:.2e}"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_3_simplex_projection_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for mode in [SimplexMode::Equality, SimplexMode::Inequality] {
        for i in 0..1000 {
            let k = 2 + i % 3;
            let y: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let mut p = y.clone();
            project_simplex_point(&mut p, mode);
            let oracle = common::simplex_oracle(&y, mode);
            for (a, b) in p.iter().zip(&oracle) {
                worst = worst.max((a - b).abs());
            }
            count += 1;
        }
    }
    let elapsed = start.elapsed();
    let ok = worst <= 1e-8 && elapsed < Duration::from_secs(5);
    report(
        3,
        "simplex projection oracle",
        ok,
        elapsed,
        &format!("{count} vectors, worst deviation {worst:.2e}"),
    );
    assert!(ok);
}

const SQUARES_LAMBDA: f64 = 0.1;
const NOISE_AMPLITUDE: f64 = 0.05;

struct SquaresRun {
    solution: Solution,
    metrics: MetricsReport,
    elapsed: Duration,
    /// Iterations at which a primal or dual bound was violated.
    violations: Vec<String>,
    /// Worst primal and dual bound values seen over the run.
    worst_neg: f64,
    worst_sum: f64,
    worst_v: f64,
    worst_w: f64,
}

fn squares_config() -> SolverConfig {
    SolverConfig {
        lambda: SQUARES_LAMBDA,
        max_iters: 200,
        mode: SimplexMode::Inequality,
        ..SolverConfig::default()
    }
}

fn run_squares(noise: f64) -> SquaresRun {
    let (mut phi, truth) = common::two_squares(64);
    if noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        phi.data_mut()
            .mapv_inplace(|x| x + rng.random_range(-noise..=noise));
    }
    let cfg = squares_config();
    let start = Instant::now();
    let mut violations = Vec::new();
    let (mut worst_neg, mut worst_sum, mut worst_v, mut worst_w) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let solution = solve_with(
        &phi,
        &cfg,
        None,
        Some(truth.indicator_masks(1.0)),
        |state| {
            let f = feasibility(&state.u, cfg.mode);
            let v = state.v.max_pixel_norm();
            let w = state.w.data().fold(0.0f64, |m, x| m.max(x.abs()));
            worst_neg = worst_neg.max(-f.min_value);
            worst_sum = worst_sum.max(f.max_sum_defect);
            worst_v = worst_v.max(v);
            worst_w = worst_w.max(w);
            if !f.holds(MASK_NEG_TOL, MASK_SUM_TOL) || v > cfg.lambda + 1e-12 || w > 1.0 + 1e-12 {
                violations.push(format!("iter {}", state.iter));
            }
        },
    )
    .unwrap();
    let elapsed = start.elapsed();
    let pred = assign_labels(&solution.masks, cfg.mode);
    let metrics = compute_metrics(&pred, &truth, true).unwrap();
    SquaresRun {
        solution,
        metrics,
        elapsed,
        violations,
        worst_neg,
        worst_sum,
        worst_v,
        worst_w,
    }
}

fn clean_run() -> &'static SquaresRun {
    static RUN: OnceLock<SquaresRun> = OnceLock::new();
    RUN.get_or_init(|| run_squares(0.0))
}

fn noisy_run() -> &'static SquaresRun {
    static RUN: OnceLock<SquaresRun> = OnceLock::new();
    RUN.get_or_init(|| run_squares(NOISE_AMPLITUDE))
}

fn dice_summary(m: &MetricsReport) -> String {
    m.per_class
        .iter()
        .map(|c| format!("{}:{:.4}", c.class, c.dice))
        .collect::<Vec<_>>()
        .join(" ")
}

#[test]
fn criterion_4_exact_data_recovery() {
    let run = clean_run();
    let min_dice = run
        .metrics
        .per_class
        .iter()
        .map(|c| c.dice)
        .fold(f64::INFINITY, f64::min);
    let ok = min_dice >= 0.99 && run.elapsed < Duration::from_secs(60);
    report(
        4,
        "exact-data recovery",
        ok,
        run.elapsed,
        &format!("Dice {}", dice_summary(&run.metrics)),
    );
    assert!(ok);
}

#[test]
fn criterion_5_stability_under_noise() {
    let clean = clean_run();
    let noisy = noisy_run();
    let mut ok = noisy.elapsed < Duration::from_secs(60);
    let mut worst_gap: f64 = 0.0;
    for c in &noisy.metrics.per_class {
        let reference = clean.metrics.class(c.class).unwrap();
        worst_gap = worst_gap.max((c.dice - reference.dice).abs());
        ok &= c.dice >= 0.97;
    }
    ok &= worst_gap <= 0.02;
    report(
        5,
        "stability under noise",
        ok,
        noisy.elapsed,
        &format!(
            "Dice {}, max |ΔDice| {worst_gap:.4}",
            dice_summary(&noisy.metrics)
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_6_feasibility_invariants() {
    let start = Instant::now();
    let runs = [clean_run(), noisy_run()];
    let ok = runs
        .iter()
        .all(|r| r.violations.is_empty() && r.solution.history.len() == 201);
    let detail = runs
        .iter()
        .map(|r| {
            format!(
                "min u {:.1e}, sum defect {:.1e}, max|v| {:.6} (λ {SQUARES_LAMBDA}), max|w| {:.6}, {} violations",
                -r.worst_neg,
                r.worst_sum,
                r.worst_v,
                r.worst_w,
                r.violations.len()
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    report(6, "feasibility invariants", ok, start.elapsed(), &detail);
    assert!(ok);
}

struct CsvRow {
    iter: usize,
    energy: f64,
    tv: f64,
    abs_error: f64,
}

fn parse_history(csv: &str) -> Vec<CsvRow> {
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iter,energy,tv,datafit,abs_error"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 5);
            CsvRow {
                iter: f[0].parse().unwrap(),
                energy: f[1].parse().unwrap(),
                tv: f[2].parse().unwrap(),
                abs_error: f[4].parse().unwrap(),
            }
        })
        .collect()
}

/// Energy does not increase overall; TV starts at zero, rises, and settles
/// (relative spread over the last quarter of the run below 1%).
fn curve_shape(rows: &[CsvRow]) -> (bool, String) {
    let first = &rows[0];
    let last = rows.last().unwrap();
    let peak_tv = rows.iter().map(|r| r.tv).fold(0.0, f64::max);
    let tail = &rows[rows.len() * 3 / 4..];
    let (lo, hi) = tail.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), r| {
        (lo.min(r.tv), hi.max(r.tv))
    });
    let spread = (hi - lo) / hi;
    let ok = first.iter == 0
        && last.energy <= first.energy
        && first.tv == 0.0
        && peak_tv > 0.0
        && spread < 1e-2
        && last.abs_error < first.abs_error;
    (
        ok,
        format!(
            "energy {:.3} -> {:.3}, TV 0 -> {:.3} (tail spread {spread:.1e}), abs error {:.3} -> {:.3}",
            first.energy, last.energy, last.tv, first.abs_error, last.abs_error
        ),
    )
}

#[test]
fn criterion_7_energy_behaviour() {
    let start = Instant::now();
    let mut ok = true;
    let mut details = Vec::new();
    for (name, run) in [("clean", clean_run()), ("noisy", noisy_run())] {
        let rows = parse_history(&history_csv(&run.solution.history));
        let (good, detail) = curve_shape(&rows);
        ok &= good && rows.len() == 201;
        details.push(format!("{name}: {detail}"));
    }
    report(
        7,
        "energy behaviour",
        ok,
        start.elapsed(),
        &details.join("; "),
    );
    assert!(ok);
}

#[test]
fn criterion_8_three_texture_segmentation() {
    let start = Instant::now();
    let (img, truth) = common::three_textures(128, 0.0, 8);
    let features = apply_recipe(
        &ChannelStack::from_images(&[img]).unwrap(),
        &common::texture_recipe(),
    )
    .unwrap();
    let mut ok = true;
    let mut details = Vec::new();
    for lambda in [0.1, 0.2] {
        let cfg = SolverConfig::with_lambda(lambda);
        let sol = solve_with(&features, &cfg, None, None, |_| {}).unwrap();
        let pred = assign_labels(&sol.masks, cfg.mode);
        let m = compute_metrics(&pred, &truth, false).unwrap();
        ok &= m.mean.dice >= 0.90;
        details.push(format!("λ {lambda}: mean Dice {:.4}", m.mean.dice));
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(120);
    report(
        8,
        "three-texture segmentation",
        ok,
        elapsed,
        &details.join(", "),
    );
    assert!(ok);
}

#[test]
fn criterion_9_metrics_correctness() {
    let start = Instant::now();
    let truth = LabelMap::new(
        array![[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]],
        1,
        true,
    )
    .unwrap();
    let pred = LabelMap::new(
        array![[1, 1, 1, 0], [1, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]],
        1,
        true,
    )
    .unwrap();
    // Class 1: TP 3, FP 1, FN 1, TN 11.
    let m = compute_metrics(&pred, &truth, false).unwrap();
    let c1 = m.class(1).unwrap();
    let mut ok = Confusion::of(&pred, &truth, 1)
        == Confusion {
            tp: 3,
            fp: 1,
            tn: 11,
            fn_: 1,
        };
    ok &= c1.dice == 6.0 / 8.0
        && c1.accuracy == 14.0 / 16.0
        && c1.specificity == 11.0 / 12.0
        && c1.recall == 3.0 / 4.0
        && c1.precision == 3.0 / 4.0;
    // Background mirrors it: TP 11, FP 1, FN 1, TN 3.
    let c0 = m.class(0).unwrap();
    ok &= c0.dice == 22.0 / 24.0
        && c0.accuracy == 14.0 / 16.0
        && c0.specificity == 3.0 / 4.0
        && c0.recall == 11.0 / 12.0
        && c0.precision == 11.0 / 12.0;
    ok &= (
        m.mean.dice,
        m.mean.accuracy,
        m.mean.specificity,
        m.mean.recall,
        m.mean.precision,
    ) == (
        c1.dice,
        c1.accuracy,
        c1.specificity,
        c1.recall,
        c1.precision,
    );

    // Three foreground classes, no background.
    let truth3 = LabelMap::new(
        array![[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 3, 3], [3, 3, 3, 3]],
        3,
        false,
    )
    .unwrap();
    let pred3 = LabelMap::new(
        array![[1, 2, 2, 2], [1, 1, 2, 3], [3, 3, 3, 3], [3, 1, 3, 3]],
        3,
        false,
    )
    .unwrap();
    let m3 = compute_metrics(&pred3, &truth3, false).unwrap();
    // class 1: TP 3, FP 1, FN 1, TN 11
    // class 2: TP 3, FP 1, FN 1, TN 11
    // class 3: TP 7, FP 1, FN 1, TN 7
    let expect = [(1, 3, 1, 1, 11), (2, 3, 1, 1, 11), (3, 7, 1, 1, 7)];
    for (c, tp, fp, fn_, tn) in expect {
        let got = m3.class(c).unwrap();
        let (tp, fp, fn_, tn) = (tp as f64, fp as f64, fn_ as f64, tn as f64);
        ok &= got.dice == 2.0 * tp / (2.0 * tp + fp + fn_)
            && got.accuracy == (tp + tn) / 16.0
            && got.specificity == tn / (tn + fp)
            && got.recall == tp / (tp + fn_)
            && got.precision == tp / (tp + fp);
    }

    let identity = compute_metrics(&truth3, &truth3, true).unwrap();
    ok &= identity.per_class.iter().chain([&identity.mean]).all(|c| {
        c.dice == 1.0
            && c.accuracy == 1.0
            && c.specificity == 1.0
            && c.recall == 1.0
            && c.precision == 1.0
    });
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(1);
    report(
        9,
        "metrics correctness",
        ok,
        elapsed,
        "hand-counted 4x4 cases and identity",
    );
    assert!(ok);
}
