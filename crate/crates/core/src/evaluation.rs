//! Class assignment by per-pixel argmax and overlap metrics.

use ndarray::{Array2, Zip};
use serde::Serialize;

use crate::error::{Result, SegError};
use crate::image::MaskStack;
use crate::projections::SimplexMode;

/// Per-pixel class labels. Labels run over `1..=classes`, plus `0` for the
/// background when `background` is set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    labels: Array2<u16>,
    classes: u16,
    background: bool,
}

impl LabelMap {
    pub fn new(labels: Array2<u16>, classes: u16, background: bool) -> Result<Self> {
        let lo = if background { 0 } else { 1 };
        if let Some(bad) = labels.iter().find(|&&l| l < lo || l > classes) {
            return Err(SegError::Labels(format!(
                "label {bad} outside the alphabet {lo}..={classes}"
            )));
        }
        Ok(Self {
            labels,
            classes,
            background,
        })
    }

    pub fn labels(&self) -> &Array2<u16> {
        &self.labels
    }

    pub fn classes(&self) -> u16 {
        self.classes
    }

    pub fn has_background(&self) -> bool {
        self.background
    }

    pub fn dims(&self) -> (usize, usize) {
        self.labels.dim()
    }

    /// All labels that may occur, in increasing order.
    pub fn alphabet(&self) -> Vec<u16> {
        let lo = if self.background { 0 } else { 1 };
        (lo..=self.classes).collect()
    }

    /// Binary indicator masks for classes `1..=K`.
    pub fn indicator_masks(&self, spacing: f64) -> MaskStack {
        let (n1, n2) = self.dims();
        let data = ndarray::Array3::from_shape_fn((self.classes as usize, n1, n2), |(c, a, b)| {
            if self.labels[[a, b]] as usize == c + 1 {
                1.0
            } else {
                0.0
            }
        });
        MaskStack::with_spacing(data, spacing).expect("non-empty label map")
    }
}

/// Per-pixel argmax over `(u_1, …, u_K)`, or over `(u_0, u_1, …, u_K)` with
/// `u_0 = 1 - Σ u_k` in inequality mode. Ties go to the lowest index.
pub fn assign_labels(u: &MaskStack, mode: SimplexMode) -> LabelMap {
    let k = u.channels();
    let (n1, n2) = u.dims();
    let data = u.data();
    let labels = Array2::from_shape_fn((n1, n2), |(a, b)| {
        let (mut best, mut best_val) = match mode {
            SimplexMode::Equality => (1u16, data[[0, a, b]]),
            SimplexMode::Inequality => {
                let s: f64 = (0..k).map(|c| data[[c, a, b]]).sum();
                (0u16, 1.0 - s)
            }
        };
        let start = match mode {
            SimplexMode::Equality => 1,
            SimplexMode::Inequality => 0,
        };
        for c in start..k {
            let v = data[[c, a, b]];
            if v > best_val {
                best = c as u16 + 1;
                best_val = v;
            }
        }
        best
    });
    LabelMap {
        labels,
        classes: k as u16,
        background: mode == SimplexMode::Inequality,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: u16,
    pub dice: f64,
    pub accuracy: f64,
    pub specificity: f64,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn of(pred: &LabelMap, truth: &LabelMap, class: u16) -> Self {
        let mut c = Confusion::default();
        Zip::from(&pred.labels)
            .and(&truth.labels)
            .for_each(|&p, &t| match (p == class, t == class) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            });
        c
    }

    /// Ratios whose denominator vanishes count as 1 when the class is absent
    /// from both maps and 0 otherwise.
    pub fn metrics(&self, class: u16) -> ClassMetrics {
        let absent = self.tp + self.fp + self.fn_ == 0;
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                if absent {
                    1.0
                } else {
                    0.0
                }
            } else {
                num as f64 / den as f64
            }
        };
        let n = self.tp + self.fp + self.tn + self.fn_;
        ClassMetrics {
            class,
            dice: ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_),
            accuracy: ratio(self.tp + self.tn, n),
            specificity: ratio(self.tn, self.tn + self.fp),
            recall: ratio(self.tp, self.tp + self.fn_),
            precision: ratio(self.tp, self.tp + self.fp),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean over the classes that enter the average.
    pub mean: ClassMetrics,
    pub background_in_mean: bool,
}

impl MetricsReport {
    pub fn class(&self, class: u16) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|m| m.class == class)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,dice,accuracy,specificity,recall,precision\n");
        let row = |s: &mut String, name: &str, m: &ClassMetrics| {
            s.push_str(&format!(
                "{name},{},{},{},{},{}\n",
                m.dice, m.accuracy, m.specificity, m.recall, m.precision
            ));
        };
        for m in &self.per_class {
            row(&mut s, &m.class.to_string(), m);
        }
        row(&mut s, "mean", &self.mean);
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<8} {:>8} {:>9} {:>12} {:>8} {:>10}\n",
            "class", "Dice", "Accuracy", "Specificity", "Recall", "Precision"
        );
        let row = |s: &mut String, name: &str, m: &ClassMetrics| {
            s.push_str(&format!(
                "{name:<8} {:>8.4} {:>9.4} {:>12.4} {:>8.4} {:>10.4}\n",
                m.dice, m.accuracy, m.specificity, m.recall, m.precision
            ));
        };
        for m in &self.per_class {
            row(&mut s, &m.class.to_string(), m);
        }
        row(&mut s, "mean", &self.mean);
        s
    }
}

/// One-vs-rest metrics for every label of the alphabet. The background
/// class is reported but left out of the mean unless `include_background`.
pub fn compute_metrics(
    pred: &LabelMap,
    truth: &LabelMap,
    include_background: bool,
) -> Result<MetricsReport> {
    if pred.dims() != truth.dims() {
        return Err(SegError::DimensionMismatch {
            expected: vec![truth.dims().0, truth.dims().1],
            actual: vec![pred.dims().0, pred.dims().1],
        });
    }
    if pred.alphabet() != truth.alphabet() {
        return Err(SegError::Labels(format!(
            "label alphabets differ: {:?} vs {:?}",
            pred.alphabet(),
            truth.alphabet()
        )));
    }
    let per_class: Vec<ClassMetrics> = truth
        .alphabet()
        .into_iter()
        .map(|c| Confusion::of(pred, truth, c).metrics(c))
        .collect();
    let in_mean: Vec<&ClassMetrics> = per_class
        .iter()
        .filter(|m| include_background || m.class != 0)
        .collect();
    let n = in_mean.len() as f64;
    let avg = |f: fn(&ClassMetrics) -> f64| in_mean.iter().map(|m| f(m)).sum::<f64>() / n;
    let mean = ClassMetrics {
        class: u16::MAX,
        dice: avg(|m| m.dice),
        accuracy: avg(|m| m.accuracy),
        specificity: avg(|m| m.specificity),
        recall: avg(|m| m.recall),
        precision: avg(|m| m.precision),
    };
    Ok(MetricsReport {
        per_class,
        mean,
        background_in_mean: include_background && truth.has_background(),
    })
}
