//! Confusion matrices and classification metrics.
//!
//! Matrices are indexed `[predicted][actual]`. Per-class figures are
//! one-vs-rest. The overall row pools accuracy over all samples (micro) and
//! averages precision, specificity, sensitivity and F1 over classes with
//! equal weight (macro). Kappa is the multiclass Cohen's kappa
//! `(P_o − P_e)/(1 − P_e)` with `P_o = trace/N` and
//! `P_e = Σ_c row_c·col_c / N²`.
//!
//! A rate whose denominator is zero is reported as 0 and flagged.

use std::fmt::Write as _;

use crate::dataset::BehaviorClass;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    /// From rows of counts, `rows[predicted][actual]`.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch("confusion matrix must be square and nonempty".into()));
        }
        let cm = Self {
            k,
            counts: rows.concat(),
        };
        if cm.total() == 0 {
            return Err(Error::InvalidInput("confusion matrix is empty".into()));
        }
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, predicted: usize, actual: usize) -> u64 {
        self.counts[predicted * self.k + actual]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|c| self.get(c, c)).sum()
    }

    /// Samples predicted as `c`.
    pub fn row_sum(&self, c: usize) -> u64 {
        (0..self.k).map(|a| self.get(c, a)).sum()
    }

    /// Samples whose true class is `c`.
    pub fn col_sum(&self, c: usize) -> u64 {
        (0..self.k).map(|p| self.get(p, c)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k).map(<[u64]>::to_vec).collect()
    }

    /// Relabels class `c` as `perm[c]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.k];
        if perm.len() != self.k || perm.iter().any(|&p| p >= self.k || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidInput("not a permutation".into()));
        }
        let mut counts = vec![0; self.k * self.k];
        for p in 0..self.k {
            for a in 0..self.k {
                counts[perm[p] * self.k + perm[a]] = self.get(p, a);
            }
        }
        Ok(Self { k: self.k, counts })
    }
}

/// Tallies `(predicted, actual)` pairs.
pub fn confusion_matrix(preds: &[usize], labels: &[usize], k: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidInput("no predictions".into()));
    }
    let mut counts = vec![0u64; k * k];
    for (&p, &a) in preds.iter().zip(labels) {
        if p >= k || a >= k {
            return Err(Error::InvalidInput(format!("class id outside 0..{k}")));
        }
        counts[p * k + a] += 1;
    }
    Ok(ConfusionMatrix { k, counts })
}

/// One-vs-rest counts for one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn per_class_counts(cm: &ConfusionMatrix, class: usize) -> Result<ClassCounts> {
    if class >= cm.k {
        return Err(Error::InvalidInput(format!("class {class} outside 0..{}", cm.k)));
    }
    let tp = cm.get(class, class);
    let fp = cm.row_sum(class) - tp;
    let fn_ = cm.col_sum(class) - tp;
    Ok(ClassCounts {
        tp,
        tn: cm.total() - tp - fp - fn_,
        fp,
        fn_,
    })
}

/// Which rates fell back to 0 because their denominator was 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DegenerateFlags {
    pub precision: bool,
    pub specificity: bool,
    pub sensitivity: bool,
    pub f1: bool,
}

impl DegenerateFlags {
    pub fn any(&self) -> bool {
        self.precision || self.specificity || self.sensitivity || self.f1
    }

    fn describe(&self) -> String {
        let names: Vec<&str> = [
            (self.precision, "precision"),
            (self.specificity, "specificity"),
            (self.sensitivity, "sensitivity"),
            (self.f1, "f1"),
        ]
        .iter()
        .filter(|p| p.0)
        .map(|p| p.1)
        .collect();
        if names.is_empty() {
            "none".into()
        } else {
            names.join(",")
        }
    }
}

/// Rates in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub specificity: f64,
    pub sensitivity: f64,
    pub f1: f64,
    pub degenerate: DegenerateFlags,
}

fn ratio(num: f64, den: f64, flag: &mut bool) -> f64 {
    if den == 0.0 {
        *flag = true;
        0.0
    } else {
        num / den
    }
}

pub fn class_metrics(c: &ClassCounts) -> Result<ClassMetrics> {
    let total = c.total();
    if total == 0 {
        return Err(Error::InvalidInput("no samples".into()));
    }
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let mut flags = DegenerateFlags::default();
    let precision = ratio(tp, tp + fp, &mut flags.precision);
    let specificity = ratio(tn, tn + fp, &mut flags.specificity);
    let sensitivity = ratio(tp, tp + fn_, &mut flags.sensitivity);
    let f1 = ratio(2.0 * precision * sensitivity, precision + sensitivity, &mut flags.f1);
    Ok(ClassMetrics {
        accuracy: (tp + tn) / total as f64,
        precision,
        specificity,
        sensitivity,
        f1,
        degenerate: flags,
    })
}

fn kappa_from(po: f64, pe: f64) -> Result<f64> {
    if pe >= 1.0 {
        return Err(Error::Numeric("kappa undefined: expected agreement is 1".into()));
    }
    Ok((po - pe) / (1.0 - pe))
}

/// Multiclass Cohen's kappa.
pub fn cohen_kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.total() as f64;
    let po = cm.trace() as f64 / n;
    let pe: f64 = (0..cm.k)
        .map(|c| cm.row_sum(c) as f64 * cm.col_sum(c) as f64)
        .sum::<f64>()
        / (n * n);
    kappa_from(po, pe)
}

/// Cohen's kappa of the one-vs-rest 2×2 table; `None` when undefined.
pub fn binary_kappa(c: &ClassCounts) -> Option<f64> {
    let n = c.total() as f64;
    if n == 0.0 {
        return None;
    }
    let (tp, tn, fp, fn_) = (c.tp as f64, c.tn as f64, c.fp as f64, c.fn_ as f64);
    let po = (tp + tn) / n;
    let pe = ((tp + fp) * (tp + fn_) + (fn_ + tn) * (fp + tn)) / (n * n);
    kappa_from(po, pe).ok()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverallMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub specificity: f64,
    pub sensitivity: f64,
    pub f1: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub name: String,
    pub counts: ClassCounts,
    pub metrics: ClassMetrics,
    /// One-vs-rest binary kappa.
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassReport>,
    pub overall: OverallMetrics,
}

/// Behaviour-class names for `k = 4`, `class<i>` otherwise.
pub fn default_class_names(k: usize) -> Vec<String> {
    if k == BehaviorClass::COUNT {
        BehaviorClass::ALL.iter().map(|c| c.name().to_string()).collect()
    } else {
        (0..k).map(|i| format!("class{i}")).collect()
    }
}

pub fn overall_report(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    overall_report_named(cm, &default_class_names(cm.k))
}

pub fn overall_report_named(cm: &ConfusionMatrix, names: &[String]) -> Result<MetricsReport> {
    if names.len() != cm.k {
        return Err(Error::DimensionMismatch(format!("{} names for {} classes", names.len(), cm.k)));
    }
    let per_class = (0..cm.k)
        .map(|c| {
            let counts = per_class_counts(cm, c)?;
            Ok(ClassReport {
                name: names[c].clone(),
                counts,
                metrics: class_metrics(&counts)?,
                kappa: binary_kappa(&counts),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let k = cm.k as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(|r| f(&r.metrics)).sum::<f64>() / k;
    let overall = OverallMetrics {
        accuracy: cm.trace() as f64 / cm.total() as f64,
        precision: mean(|m| m.precision),
        specificity: mean(|m| m.specificity),
        sensitivity: mean(|m| m.sensitivity),
        f1: mean(|m| m.f1),
        kappa: cohen_kappa(cm)?,
    };
    Ok(MetricsReport {
        confusion: cm.clone(),
        per_class,
        overall,
    })
}

/// `a − b` per metric: rates in percentage points, kappa as a raw difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessDrop {
    pub accuracy: f64,
    pub precision: f64,
    pub specificity: f64,
    pub sensitivity: f64,
    pub f1: f64,
    pub kappa: f64,
}

pub fn robustness_drop(a: &OverallMetrics, b: &OverallMetrics) -> RobustnessDrop {
    let pp = |x: f64, y: f64| (x - y) * 100.0;
    RobustnessDrop {
        accuracy: pp(a.accuracy, b.accuracy),
        precision: pp(a.precision, b.precision),
        specificity: pp(a.specificity, b.specificity),
        sensitivity: pp(a.sensitivity, b.sensitivity),
        f1: pp(a.f1, b.f1),
        kappa: a.kappa - b.kappa,
    }
}

impl RobustnessDrop {
    pub fn to_text(&self) -> String {
        format!(
            "drop.accuracy_pp: {:.4}\ndrop.precision_pp: {:.4}\ndrop.specificity_pp: {:.4}\n\
             drop.sensitivity_pp: {:.4}\ndrop.f1_pp: {:.4}\ndrop.kappa: {:.6}\n",
            self.accuracy, self.precision, self.specificity, self.sensitivity, self.f1, self.kappa
        )
    }
}

impl MetricsReport {
    /// `key: value` lines in a fixed order, then the matrix as aligned
    /// columns.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let o = &self.overall;
        let _ = writeln!(s, "samples: {}", self.confusion.total());
        let _ = writeln!(s, "classes: {}", self.confusion.k);
        for (key, v) in [
            ("accuracy", o.accuracy),
            ("precision", o.precision),
            ("specificity", o.specificity),
            ("sensitivity", o.sensitivity),
            ("f1", o.f1),
            ("kappa", o.kappa),
        ] {
            let _ = writeln!(s, "overall.{key}: {v:.6}");
        }
        for r in &self.per_class {
            let n = &r.name;
            let c = &r.counts;
            let m = &r.metrics;
            let _ = writeln!(s, "class.{n}.tp: {}", c.tp);
            let _ = writeln!(s, "class.{n}.tn: {}", c.tn);
            let _ = writeln!(s, "class.{n}.fp: {}", c.fp);
            let _ = writeln!(s, "class.{n}.fn: {}", c.fn_);
            for (key, v) in [
                ("accuracy", m.accuracy),
                ("precision", m.precision),
                ("specificity", m.specificity),
                ("sensitivity", m.sensitivity),
                ("f1", m.f1),
            ] {
                let _ = writeln!(s, "class.{n}.{key}: {v:.6}");
            }
            match r.kappa {
                Some(k) => {
                    let _ = writeln!(s, "class.{n}.kappa: {k:.6}");
                }
                None => {
                    let _ = writeln!(s, "class.{n}.kappa: undefined");
                }
            }
            let _ = writeln!(s, "class.{n}.degenerate: {}", m.degenerate.describe());
        }
        let _ = writeln!(s, "confusion (rows predicted, columns actual):");
        s.push_str(&self.confusion_table());
        s
    }

    /// The matrix with a header row of class names, right-aligned.
    pub fn confusion_table(&self) -> String {
        let names: Vec<&str> = self.per_class.iter().map(|r| r.name.as_str()).collect();
        let width = names
            .iter()
            .map(|n| n.len())
            .chain(self.confusion.counts.iter().map(|c| c.to_string().len()))
            .max()
            .unwrap_or(1);
        let mut s = String::new();
        let _ = write!(s, "{:>width$}", "");
        for n in &names {
            let _ = write!(s, " {n:>width$}");
        }
        s.push('\n');
        for (p, n) in names.iter().enumerate() {
            let _ = write!(s, "{n:>width$}");
            for a in 0..self.confusion.k {
                let _ = write!(s, " {:>width$}", self.confusion.get(p, a));
            }
            s.push('\n');
        }
        s
    }

    /// Per-class rows plus an overall row, comma separated.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,tp,tn,fp,fn,accuracy,precision,specificity,sensitivity,f1,kappa\n");
        for r in &self.per_class {
            let c = &r.counts;
            let m = &r.metrics;
            let kappa = r.kappa.map_or_else(String::new, |k| format!("{k:.6}"));
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{kappa}",
                r.name, c.tp, c.tn, c.fp, c.fn_, m.accuracy, m.precision, m.specificity, m.sensitivity, m.f1
            );
        }
        let o = &self.overall;
        let n = self.confusion.total();
        let t = self.confusion.trace();
        let _ = writeln!(
            s,
            "overall,{t},,{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            n - t,
            n - t,
            o.accuracy,
            o.precision,
            o.specificity,
            o.sensitivity,
            o.f1,
            o.kappa
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_swapped_predictions() {
        let labels: Vec<usize> = (0..10).map(|i| i % 4).collect();
        let cm = confusion_matrix(&labels, &labels, 4).unwrap();
        assert_eq!(cm.trace(), 10);
        assert_eq!(cm.total(), 10);
        let cm = confusion_matrix(&[1, 0], &[0, 1], 2).unwrap();
        assert_eq!(cm.rows(), vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn identity_matrix_is_perfect() {
        let cm = ConfusionMatrix::from_rows(&[vec![5, 0, 0], vec![0, 3, 0], vec![0, 0, 9]]).unwrap();
        let r = overall_report(&cm).unwrap();
        for c in &r.per_class {
            assert_eq!((c.counts.fp, c.counts.fn_), (0, 0));
            assert_eq!(c.kappa, Some(1.0));
        }
        let o = r.overall;
        assert_eq!([o.accuracy, o.precision, o.specificity, o.sensitivity, o.f1, o.kappa], [1.0; 6]);
    }

    #[test]
    fn all_true_positives() {
        let m = class_metrics(&ClassCounts { tp: 7, tn: 0, fp: 0, fn_: 0 }).unwrap();
        assert_eq!((m.accuracy, m.precision, m.sensitivity, m.f1), (1.0, 1.0, 1.0, 1.0));
        // Specificity is 0/0 here.
        assert!(m.degenerate.specificity && !m.degenerate.precision);
    }

    #[test]
    fn uniform_matrix_has_zero_kappa() {
        let cm = ConfusionMatrix::from_rows(&vec![vec![3; 4]; 4]).unwrap();
        assert!(cohen_kappa(&cm).unwrap().abs() < 1e-15);
    }

    #[test]
    fn single_cell_kappa_is_an_error() {
        let cm = ConfusionMatrix::from_rows(&[vec![4, 0], vec![0, 0]]).unwrap();
        assert!(matches!(cohen_kappa(&cm), Err(Error::Numeric(_))));
    }

    #[test]
    fn empty_class_is_flagged_not_nan() {
        let cm = ConfusionMatrix::from_rows(&[vec![3, 1, 0], vec![1, 4, 0], vec![0, 0, 0]]).unwrap();
        let r = overall_report(&cm).unwrap();
        let empty = &r.per_class[2];
        assert!(empty.metrics.degenerate.precision && empty.metrics.degenerate.sensitivity);
        assert_eq!(empty.metrics.f1, 0.0);
        assert!(r.to_text().contains("class.class2.degenerate: precision,sensitivity,f1"));
    }

    #[test]
    fn robustness_drop_of_equal_reports_is_zero() {
        let o = OverallMetrics {
            accuracy: 0.9,
            precision: 0.8,
            specificity: 0.7,
            sensitivity: 0.6,
            f1: 0.5,
            kappa: 0.4,
        };
        let d = robustness_drop(&o, &o);
        assert_eq!([d.accuracy, d.precision, d.specificity, d.sensitivity, d.f1, d.kappa], [0.0; 6]);
    }

    #[test]
    fn permutation_rejects_non_permutations() {
        let cm = ConfusionMatrix::from_rows(&[vec![1, 2], vec![3, 4]]).unwrap();
        assert!(cm.permuted(&[0, 0]).is_err());
        assert_eq!(cm.permuted(&[1, 0]).unwrap().rows(), vec![vec![4, 3], vec![2, 1]]);
    }

    #[test]
    fn text_report_is_stable() {
        let cm = ConfusionMatrix::from_rows(&[vec![8, 1, 0, 0], vec![1, 9, 0, 1], vec![0, 0, 7, 0], vec![1, 0, 1, 10]])
            .unwrap();
        let r = overall_report(&cm).unwrap();
        let text = r.to_text();
        assert!(text.starts_with("samples: 39\nclasses: 4\noverall.accuracy: 0.871795\n"));
        assert!(text.contains("class.braking.tp: 8\n"));
        let table: Vec<&str> = text.lines().rev().take(5).collect();
        assert_eq!(
            table,
            vec![
                "right_turn          1          0          1         10",
                " left_turn          0          0          7          0",
                "   running          1          9          0          1",
                "   braking          8          1          0          0",
                "              braking    running  left_turn right_turn",
            ]
        );
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.lines().nth(1).unwrap().starts_with("braking,8,"));
    }
}
