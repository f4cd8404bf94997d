//! Principal components via cyclic Jacobi eigendecomposition.

use crate::error::{Error, Result};

const JACOBI_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;
const ZERO_VARIANCE: f64 = 1e-12;

/// Eigenvalues (descending) and unit eigenvectors of a symmetric matrix;
/// `vectors[i]` belongs to `values[i]`.
pub fn symmetric_eigen(m: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off < JACOBI_TOL {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < f64::MIN_POSITIVE {
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
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k][i]).collect())
        .collect();
    (values, vectors)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// Indices of the input columns kept after dropping zero-variance ones.
    pub kept: Vec<usize>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Component loadings over the kept columns, strongest component first.
    pub components: Vec<Vec<f64>>,
    /// Explained variance ratio per returned component.
    pub explained: Vec<f64>,
}

impl Pca {
    /// Fits on `rows` (at least 3 rows of at least 2 columns) and keeps
    /// `n_components` components; missing directions are zero-padded.
    pub fn fit(rows: &[Vec<f64>], n_components: usize) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.len());
        if n < 3 || d < 2 {
            return Err(Error::Degenerate(format!(
                "PCA needs at least 3 rows and 2 columns, got {n}x{d}"
            )));
        }
        if rows
            .iter()
            .any(|r| r.len() != d || r.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::Degenerate("ragged or non-finite matrix".into()));
        }
        let mut kept = Vec::new();
        let mut means = Vec::new();
        let mut stds = Vec::new();
        for j in 0..d {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            if var > ZERO_VARIANCE {
                kept.push(j);
                means.push(mean);
                stds.push(var.sqrt());
            }
        }
        let k = kept.len();
        let z: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| (0..k).map(|c| (r[kept[c]] - means[c]) / stds[c]).collect())
            .collect();
        let cov: Vec<Vec<f64>> = (0..k)
            .map(|a| {
                (0..k)
                    .map(|b| z.iter().map(|r| r[a] * r[b]).sum::<f64>() / (n - 1) as f64)
                    .collect()
            })
            .collect();
        let (values, vectors) = symmetric_eigen(&cov);
        let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
        let mut components = Vec::new();
        let mut explained = Vec::new();
        for i in 0..n_components {
            match (values.get(i), vectors.get(i)) {
                (Some(&val), Some(vec)) if val > ZERO_VARIANCE => {
                    let mut vec = vec.clone();
                    let lead =
                        vec.iter()
                            .cloned()
                            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
                    if lead < 0.0 {
                        vec.iter_mut().for_each(|x| *x = -*x);
                    }
                    components.push(vec);
                    explained.push(val.max(0.0) / total);
                }
                _ => {
                    components.push(vec![0.0; k]);
                    explained.push(0.0);
                }
            }
        }
        Ok(Pca {
            kept,
            means,
            stds,
            components,
            explained,
        })
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        let z: Vec<f64> = self
            .kept
            .iter()
            .enumerate()
            .map(|(c, &j)| (row[j] - self.means[c]) / self.stds[c])
            .collect();
        self.components
            .iter()
            .map(|v| v.iter().zip(&z).map(|(a, b)| a * b).sum())
            .collect()
    }
}
