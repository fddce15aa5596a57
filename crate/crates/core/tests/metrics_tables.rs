use proptest::prelude::*;
use taillight::metrics::{
    cohen_kappa, confusion_matrix, overall_report, per_class_counts, robustness_drop, ConfusionMatrix, OverallMetrics,
};

// Published matrices, rows predicted and columns actual, in the published
// class order running, braking, left turn, right turn.
const FC1_PUBLISHED: [[u64; 4]; 4] = [[762, 14, 41, 11], [12, 780, 27, 26], [25, 6, 693, 39], [14, 21, 15, 708]];
const FC2_PUBLISHED: [[u64; 4]; 4] = [[773, 20, 30, 32], [12, 767, 16, 44], [18, 8, 709, 34], [10, 26, 21, 674]];

/// Reorders to class ids braking=0, running=1, left_turn=2, right_turn=3.
fn to_ids(m: [[u64; 4]; 4]) -> ConfusionMatrix {
    let src = [1, 0, 2, 3];
    let rows: Vec<Vec<u64>> = (0..4).map(|p| (0..4).map(|a| m[src[p]][src[a]]).collect()).collect();
    ConfusionMatrix::from_rows(&rows).unwrap()
}

struct Row {
    counts: [u64; 4],
    rates: [f64; 5],
}

// Per class in id order: TP, TN, FP, FN; acc, pre, spe, sen, f1 in percent.
fn fc1_rows() -> [Row; 4] {
    [
        Row { counts: [780, 2308, 65, 41], rates: [96.68, 92.31, 97.26, 95.01, 93.64] },
        Row { counts: [762, 2315, 66, 51], rates: [96.34, 92.03, 97.23, 93.73, 92.87] },
        Row { counts: [693, 2348, 70, 83], rates: [95.21, 90.83, 97.10, 89.30, 90.06] },
        Row { counts: [708, 2360, 50, 76], rates: [96.05, 93.40, 97.92, 90.31, 91.83] },
    ]
}

fn fc2_rows() -> [Row; 4] {
    [
        Row { counts: [767, 2301, 72, 54], rates: [96.05, 91.42, 96.97, 93.42, 92.41] },
        Row { counts: [773, 2299, 82, 40], rates: [96.18, 90.41, 96.56, 95.08, 92.69] },
        Row { counts: [709, 2358, 60, 67], rates: [96.02, 92.20, 97.52, 91.37, 91.78] },
        Row { counts: [674, 2353, 57, 110], rates: [94.77, 92.20, 97.63, 85.97, 88.98] },
    ]
}

fn check_table(cm: &ConfusionMatrix, rows: &[Row; 4], overall: [f64; 5], kappa: f64) {
    let r = overall_report(cm).unwrap();
    for (c, want) in rows.iter().enumerate() {
        let got = per_class_counts(cm, c).unwrap();
        assert_eq!([got.tp, got.tn, got.fp, got.fn_], want.counts, "class {c}");
        let m = r.per_class[c].metrics;
        let rates = [m.accuracy, m.precision, m.specificity, m.sensitivity, m.f1];
        for (g, w) in rates.iter().zip(&want.rates) {
            assert!((g * 100.0 - w).abs() <= 0.01, "class {c}: {} vs {w}", g * 100.0);
        }
    }
    let o = r.overall;
    for (g, w) in [o.accuracy, o.precision, o.specificity, o.sensitivity, o.f1].iter().zip(&overall) {
        assert!((g * 100.0 - w).abs() <= 0.01, "overall {} vs {w}", g * 100.0);
    }
    assert!((o.kappa - kappa).abs() <= 0.001, "kappa {}", o.kappa);
}

#[test]
fn fc1_table() {
    let cm = to_ids(FC1_PUBLISHED);
    assert_eq!((cm.total(), cm.trace()), (3194, 2943));
    check_table(&cm, &fc1_rows(), [92.14, 92.14, 97.38, 92.09, 92.10], 0.895);
}

#[test]
fn fc2_table() {
    check_table(&to_ids(FC2_PUBLISHED), &fc2_rows(), [91.52, 91.56, 97.17, 91.46, 91.46], 0.887);
}

#[test]
fn kappa_by_hand() {
    // P_e numerator Σ row·col, summed by hand from the published FC-1 matrix.
    let cm = to_ids(FC1_PUBLISHED);
    let pe_num: u64 = (0..4).map(|c| cm.row_sum(c) * cm.col_sum(c)).sum();
    assert_eq!(pe_num, 2_553_269);
    let n = 3194f64;
    let want = (2943.0 / n - pe_num as f64 / (n * n)) / (1.0 - pe_num as f64 / (n * n));
    assert!((cohen_kappa(&cm).unwrap() - want).abs() < 1e-15);
}

#[test]
fn assembled_stream_reproduces_the_matrix() {
    let cm = to_ids(FC1_PUBLISHED);
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    // Interleave cells so the stream is not sorted by cell.
    let mut left: Vec<u64> = (0..16).map(|i| cm.get(i / 4, i % 4)).collect();
    while left.iter().any(|&c| c > 0) {
        for (i, c) in left.iter_mut().enumerate() {
            if *c > 0 {
                *c -= 1;
                preds.push(i / 4);
                labels.push(i % 4);
            }
        }
    }
    assert_eq!(confusion_matrix(&preds, &labels, 4).unwrap(), cm);
}

#[test]
fn robustness_drops_from_published_pairs() {
    let m = |a: f64, p: f64, s: f64, se: f64, f: f64, k: f64| OverallMetrics {
        accuracy: a / 100.0,
        precision: p / 100.0,
        specificity: s / 100.0,
        sensitivity: se / 100.0,
        f1: f / 100.0,
        kappa: k,
    };
    let cases = [
        (
            m(92.14, 92.14, 97.38, 92.09, 92.10, 0.895),
            m(66.56, 66.69, 88.84, 66.48, 66.48, 0.554),
            [25.58, 25.45, 8.54, 25.61, 25.62, 0.341],
        ),
        (
            m(91.52, 91.56, 97.17, 91.46, 91.46, 0.887),
            m(65.25, 65.45, 88.41, 65.20, 65.19, 0.536),
            [26.27, 26.11, 8.76, 26.26, 26.27, 0.351],
        ),
    ];
    for (a, b, want) in cases {
        let d = robustness_drop(&a, &b);
        let got = [d.accuracy, d.precision, d.specificity, d.sensitivity, d.f1, d.kappa];
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-9, "{g} vs {w}");
        }
    }
}

proptest! {
    #[test]
    fn relabelling_preserves_macro_metrics(
        cells in proptest::collection::vec(0u64..50, 16),
        perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let rows: Vec<Vec<u64>> = cells.chunks(4).map(|r| r.to_vec()).collect();
        prop_assume!(cells.iter().sum::<u64>() > 0);
        let cm = ConfusionMatrix::from_rows(&rows).unwrap();
        let pm = cm.permuted(&perm).unwrap();
        let (Ok(a), Ok(b)) = (overall_report(&cm), overall_report(&pm)) else {
            prop_assert!(overall_report(&cm).is_err() && overall_report(&pm).is_err());
            return Ok(());
        };
        for c in 0..4 {
            prop_assert_eq!(a.per_class[c].counts, b.per_class[perm[c]].counts);
            prop_assert_eq!(a.per_class[c].counts.total(), cm.total());
        }
        let (x, y) = (a.overall, b.overall);
        for (u, v) in [(x.accuracy, y.accuracy), (x.precision, y.precision), (x.specificity, y.specificity),
                       (x.sensitivity, y.sensitivity), (x.f1, y.f1), (x.kappa, y.kappa)] {
            prop_assert!((u - v).abs() < 1e-12);
        }
        let tp: u64 = a.per_class.iter().map(|r| r.counts.tp).sum();
        prop_assert_eq!(tp, cm.trace());
        prop_assert!(x.kappa <= 1.0 + 1e-12);
    }
}
