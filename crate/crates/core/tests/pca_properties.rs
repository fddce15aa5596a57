use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taillight::pca::{FeatureMatrix, PcaModel};

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

fn random_matrix(seed: u64, n: usize, d: usize) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Column scales spread the spectrum so the top components are well separated.
    let data = (0..n * d)
        .map(|i| rng.gen_range(-1.0..1.0) * (1.0 + 4.0 / (1 + i % d) as f64))
        .collect();
    FeatureMatrix::new(ids(n), d, data).unwrap()
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn orthonormality_error(m: &PcaModel) -> f64 {
    let k = m.output_dim();
    let mut worst = 0.0f64;
    for i in 0..k {
        for j in 0..=i {
            let d: f64 = m.component(i).iter().zip(m.component(j)).map(|(a, b)| a * b).sum();
            worst = worst.max((d - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    worst
}

#[test]
fn eckart_young_on_50_by_200() {
    for seed in 0..5 {
        let (n, d) = (50, 200);
        let x = random_matrix(seed, n, d);
        // Independent spectrum: Jacobi on the centred Gram matrix / (n − 1).
        let mean: Vec<f64> = (0..d).map(|j| x.iter_rows().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let xc: Vec<Vec<f64>> = x.iter_rows().map(|r| r.iter().zip(&mean).map(|(a, m)| a - m).collect()).collect();
        let gram: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| xc[i].iter().zip(&xc[j]).map(|(a, b)| a * b).sum::<f64>() / (n - 1) as f64).collect())
            .collect();
        let spectrum = jacobi_eigenvalues(gram);
        for k in [1, 10, 25, 49] {
            let m = PcaModel::fit(&x, k).unwrap();
            assert!(orthonormality_error(&m) <= 1e-8);
            let mse: f64 = x
                .iter_rows()
                .map(|r| {
                    let back = m.inverse_transform(&m.transform(r).unwrap()).unwrap();
                    back.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
                })
                .sum::<f64>()
                / (n - 1) as f64;
            let discarded: f64 = spectrum[k..].iter().map(|l| l.max(0.0)).sum();
            let rel = (mse - discarded).abs() / discarded.max(1e-300);
            assert!(rel <= 1e-6 || (mse < 1e-12 && discarded < 1e-9), "seed {seed} k {k}: {mse} vs {discarded}");
            for (got, want) in m.eigenvalues().iter().zip(&spectrum) {
                assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0));
            }
        }
    }
}

#[test]
fn reduces_4096_to_250() {
    let x = random_matrix(7, 260, 4096);
    let m = PcaModel::fit(&x, 250).unwrap();
    assert_eq!(m.components().len(), 250 * 4096);
    assert_eq!(m.output_dim(), 250);
    assert!(orthonormality_error(&m) <= 1e-8);
    assert!(m.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
    let z = m.transform_matrix(&x).unwrap();
    assert_eq!((z.rows(), z.cols()), (260, 250));
    assert_eq!(PcaModel::fit(&x, 250).unwrap(), m);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn fits_are_orthonormal_and_sorted(seed in 0u64..10_000, n in 3usize..24, d in 1usize..30, kf in 0.0f64..1.0) {
        let x = random_matrix(seed, n, d);
        let kmax = (n - 1).min(d);
        let k = 1 + ((kmax - 1) as f64 * kf) as usize;
        let m = PcaModel::fit(&x, k).unwrap();
        prop_assert!(orthonormality_error(&m) <= 1e-8);
        prop_assert!(m.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(m.eigenvalues().iter().all(|&l| l >= 0.0));
        let s: f64 = m.explained_variance_ratio().iter().sum();
        prop_assert!(s <= 1.0 + 1e-9);
        for i in 0..k {
            let c = m.component(i);
            let big = c.iter().cloned().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            prop_assert!(big > 0.0);
        }
    }
}
