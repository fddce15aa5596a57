//! Principal component analysis and the feature-matrix container.
//!
//! [`PcaModel::fit`] centres the rows, then takes the top-`k` eigenvectors
//! of the sample covariance (divisor `n − 1`). When `n ≤ d` it decomposes the
//! `n × n` Gram matrix of centred rows and maps eigenvectors back through
//! `Xcᵀ`, so a 4096-wide covariance is never formed. No whitening.
//!
//! Sign convention: each component's largest-magnitude coordinate is
//! positive (the first such coordinate on ties). Components with equal
//! eigenvalues keep the eigensolver's index order.
//!
//! # File formats
//!
//! Both little-endian.
//!
//! ```text
//! TLFM  n u32, d u32, n × (id: u32 length + UTF-8), n·d f64 row-major
//! TLPC  version u32 = 1, d u32, k u32,
//!       mean d × f64, components k·d × f64 row-major, eigenvalues k × f64,
//!       total_variance f64
//! ```

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::binio::{check_finite, read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 4] = b"TLFM";
pub const PCA_MAGIC: &[u8; 4] = b"TLPC";
const PCA_VERSION: u32 = 1;

/// Number of retained components used by the pipeline unless configured.
pub const DEFAULT_COMPONENTS: usize = 250;

/// `n × d` row-major features with one id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    ids: Vec<String>,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<String>, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != ids.len() * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} rows of width {cols}",
                data.len(),
                ids.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite feature value".into()));
        }
        Ok(Self { ids, cols, data })
    }

    pub fn from_rows(ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if ids.len() != rows.len() {
            return Err(Error::DimensionMismatch(format!("{} ids for {} rows", ids.len(), rows.len())));
        }
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged feature rows".into()));
        }
        Self::new(ids, cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            cols: self.cols,
            data: indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = Writer::new(MATRIX_MAGIC);
        w.u32(self.rows() as u32).u32(self.cols as u32);
        for id in &self.ids {
            w.str_u32(id);
        }
        w.f64s(&self.data);
        write_file(path.as_ref(), &w.finish())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = read_file(path)?;
        let mut r = Reader::new(path, &buf, MATRIX_MAGIC)?;
        let n = r.u32()? as usize;
        let d = r.u32()? as usize;
        let ids = (0..n).map(|_| r.str_u32()).collect::<Result<Vec<_>>>()?;
        let data = r.f64s(n.checked_mul(d).ok_or_else(|| r.err("size overflow"))?)?;
        r.finish()?;
        check_finite(path, &data)?;
        Self::new(ids, d, data)
    }
}

/// Fitted projection `z = components · (x − mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    components: Vec<f64>,
    eigenvalues: Vec<f64>,
    total_variance: f64,
}

/// `C (m × n) = A (m × k) · Bᵀ` where `B` is `n × k`, all row-major.
fn gemm_abt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    if m * n * k > 0 {
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, 1.0, a.as_ptr(), k as isize, 1, b.as_ptr(), 1, k as isize, 0.0,
                c.as_mut_ptr(), n as isize, 1,
            );
        }
    }
    c
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Removes from `v` its projection on each of `basis`, twice for stability.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let p = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Eigenpairs sorted by descending eigenvalue, stable by solver index.
fn sorted_eigen(m: DMatrix<f64>) -> Result<Vec<(f64, Vec<f64>)>> {
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("eigendecomposition did not converge".into()))?;
    let mut pairs: Vec<(f64, Vec<f64>)> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .map(|(&l, v)| (l, v.iter().copied().collect()))
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(pairs)
}

impl PcaModel {
    /// Fits `k` components. Requires `n ≥ 2` and `1 ≤ k ≤ min(n − 1, d)`.
    ///
    /// Directions beyond the data's rank get eigenvalue 0 and are completed
    /// to an orthonormal set from the standard basis.
    pub fn fit(x: &FeatureMatrix, k: usize) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        if n < 2 {
            return Err(Error::InvalidInput(format!("PCA needs at least 2 rows, got {n}")));
        }
        if k == 0 || k > (n - 1).min(d) {
            return Err(Error::Config(format!(
                "component count {k} outside [1, {}] for {n}×{d} data",
                (n - 1).min(d)
            )));
        }
        let mut mean = vec![0.0; d];
        for row in x.iter_rows() {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let xc: Vec<f64> = x
            .iter_rows()
            .flat_map(|row| row.iter().zip(&mean).map(|(v, m)| v - m))
            .collect();
        let scale = 1.0 / (n - 1) as f64;
        let total_variance = dot(&xc, &xc) * scale;

        // (eigenvalue of the covariance, unit direction) for the top k.
        let mut top: Vec<(f64, Option<Vec<f64>>)> = Vec::with_capacity(k);
        if n <= d {
            let gram = gemm_abt(&xc, &xc, n, d, n);
            let pairs = sorted_eigen(DMatrix::from_row_slice(n, n, &gram))?;
            let tol = pairs[0].0.max(0.0) * 1e-11 * n as f64;
            for (mu, u) in pairs.into_iter().take(k) {
                if mu <= tol || mu <= 0.0 {
                    top.push((0.0, None));
                    continue;
                }
                // v = Xcᵀ u / √μ
                let mut v = vec![0.0; d];
                for (row, &ui) in xc.chunks_exact(d).zip(&u) {
                    v.iter_mut().zip(row).for_each(|(a, b)| *a += ui * b);
                }
                let s = mu.sqrt();
                v.iter_mut().for_each(|a| *a /= s);
                top.push((mu * scale, Some(v)));
            }
        } else {
            let mut cov = vec![0.0; d * d];
            unsafe {
                matrixmultiply::dgemm(
                    d, n, d, scale, xc.as_ptr(), 1, d as isize, xc.as_ptr(), d as isize, 1, 0.0,
                    cov.as_mut_ptr(), d as isize, 1,
                );
            }
            let pairs = sorted_eigen(DMatrix::from_row_slice(d, d, &cov))?;
            let tol = pairs[0].0.max(0.0) * 1e-11 * d as f64;
            for (l, v) in pairs.into_iter().take(k) {
                top.push(if l <= tol || l <= 0.0 { (0.0, None) } else { (l, Some(v)) });
            }
        }

        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut eigenvalues = Vec::with_capacity(k);
        let mut pending = 0;
        for (l, v) in top {
            match v {
                Some(mut v) => {
                    orthogonalize(&mut v, &basis);
                    if normalize(&mut v) < 0.5 {
                        return Err(Error::Numeric("lost orthogonality between components".into()));
                    }
                    fix_sign(&mut v);
                    basis.push(v);
                    eigenvalues.push(l);
                }
                None => pending += 1,
            }
        }
        let mut j = 0;
        while pending > 0 {
            if j >= d {
                return Err(Error::Numeric("could not complete the component basis".into()));
            }
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            j += 1;
            orthogonalize(&mut e, &basis);
            if normalize(&mut e) < 1e-3 {
                continue;
            }
            fix_sign(&mut e);
            basis.push(e);
            eigenvalues.push(0.0);
            pending -= 1;
        }
        Ok(Self {
            mean,
            components: basis.concat(),
            eigenvalues,
            total_variance,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Row-major `k × d`.
    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &[f64] {
        let d = self.input_dim();
        &self.components[i * d..(i + 1) * d]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Total sample variance of the training data (trace of the covariance).
    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        if self.total_variance <= 0.0 {
            return vec![0.0; self.output_dim()];
        }
        self.eigenvalues.iter().map(|l| l / self.total_variance).collect()
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for PCA input {}",
                x.len(),
                self.input_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite PCA input".into()));
        }
        let centred: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        Ok((0..self.output_dim()).map(|i| dot(self.component(i), &centred)).collect())
    }

    /// `mean + componentsᵀ · z`.
    pub fn inverse_transform(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.output_dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} for PCA output {}",
                z.len(),
                self.output_dim()
            )));
        }
        let mut x = self.mean.clone();
        for (i, &zi) in z.iter().enumerate() {
            x.iter_mut().zip(self.component(i)).for_each(|(a, c)| *a += zi * c);
        }
        Ok(x)
    }

    /// Transforms every row, keeping ids.
    pub fn transform_matrix(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        let rows = x.iter_rows().map(|r| self.transform(r)).collect::<Result<Vec<_>>>()?;
        let k = self.output_dim();
        FeatureMatrix::new(x.ids().to_vec(), k, rows.concat())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = Writer::new(PCA_MAGIC);
        w.u32(PCA_VERSION)
            .u32(self.input_dim() as u32)
            .u32(self.output_dim() as u32)
            .f64s(&self.mean)
            .f64s(&self.components)
            .f64s(&self.eigenvalues)
            .f64(self.total_variance);
        write_file(path.as_ref(), &w.finish())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let buf = read_file(path)?;
        let mut r = Reader::new(path, &buf, PCA_MAGIC)?;
        let version = r.u32()?;
        if version != PCA_VERSION {
            return Err(r.err(format!("unsupported version {version}")));
        }
        let d = r.u32()? as usize;
        let k = r.u32()? as usize;
        let mean = r.f64s(d)?;
        let components = r.f64s(k.checked_mul(d).ok_or_else(|| r.err("size overflow"))?)?;
        let eigenvalues = r.f64s(k)?;
        let total_variance = r.f64()?;
        r.finish()?;
        for part in [&mean, &components, &eigenvalues] {
            check_finite(path, part)?;
        }
        check_finite(path, &[total_variance])?;
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) || eigenvalues.iter().any(|&l| l < 0.0) {
            return Err(Error::format(path, "eigenvalues must be nonnegative and non-increasing"));
        }
        Ok(Self {
            mean,
            components,
            eigenvalues,
            total_variance,
        })
    }
}
