//! Ordinary least squares by Householder QR.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on a column's residual norm after orthogonalization.
const RANK_TOL: f64 = 1e-10;

/// A named, row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    names: Vec<String>,
    data: Vec<f64>,
}

impl Design {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        Self {
            names: names.into_iter().map(Into::into).collect(),
            data: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.cols(), "row width must match column count");
        self.data.extend_from_slice(row);
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn rows(&self) -> usize {
        if self.cols() == 0 {
            0
        } else {
            self.data.len() / self.cols()
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.cols();
        &self.data[i * k..(i + 1) * k]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols() + j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residuals: Vec<f64>,
    pub ssr: f64,
    pub df_resid: usize,
    /// √(SSR / (n − k)), k counting every column including the intercept.
    pub sigma: f64,
}

impl OlsFit {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.coefficients[i])
    }
}

/// Least-squares fit of `y` on the columns of `design`.
///
/// Fails on fewer than `k + 1` rows or a rank-deficient design; the error
/// names the first dependent column and the columns it is a combination of.
pub fn fit(design: &Design, y: &[f64]) -> Result<OlsFit> {
    let n = design.rows();
    let k = design.cols();
    if y.len() != n {
        return Err(Error::InvalidArgument(format!(
            "design has {n} rows but response has {}",
            y.len()
        )));
    }
    if k == 0 || n < k + 1 {
        return Err(Error::InsufficientSample(format!(
            "{n} rows for {k} coefficients; need at least {}",
            k + 1
        )));
    }
    if design.data.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite value in regression data".into()));
    }

    // column-major working copy
    let mut a: Vec<Vec<f64>> = (0..k)
        .map(|j| (0..n).map(|i| design.get(i, j)).collect())
        .collect();
    let col_norms: Vec<f64> = a.iter().map(|c| norm(c)).collect();
    let mut qty = y.to_vec();

    for j in 0..k {
        let alpha = norm(&a[j][j..]);
        if alpha <= RANK_TOL * col_norms[j] || col_norms[j] == 0.0 {
            return Err(rank_error(design, &a, j));
        }
        // Householder vector v = x + sign(x0)·‖x‖·e0
        let sign = if a[j][j] >= 0.0 { 1.0 } else { -1.0 };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] += sign * alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        for col in a.iter_mut().skip(j) {
            reflect(&v, vnorm2, &mut col[j..]);
        }
        reflect(&v, vnorm2, &mut qty[j..]);
    }

    // back substitution R β = (Qᵀy)[..k]; a[c][r] holds R[r][c]
    let r = |row: usize, col: usize| a[col][row];
    let mut beta = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|c| r(i, c) * beta[c]).sum();
        beta[i] = (qty[i] - s) / r(i, i);
    }

    let residuals: Vec<f64> = (0..n)
        .map(|i| {
            let fitted: f64 = design.row(i).iter().zip(&beta).map(|(x, b)| x * b).sum();
            y[i] - fitted
        })
        .collect();
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let df_resid = n - k;
    let sigma = (ssr / df_resid as f64).sqrt();

    // diag((XᵀX)⁻¹) = row norms² of R⁻¹
    let mut rinv = vec![vec![0.0; k]; k];
    for c in 0..k {
        rinv[c][c] = 1.0 / r(c, c);
        for i in (0..c).rev() {
            let s: f64 = (i + 1..=c).map(|m| r(i, m) * rinv[m][c]).sum();
            rinv[i][c] = -s / r(i, i);
        }
    }
    let std_errors = (0..k)
        .map(|i| sigma * rinv[i].iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();

    Ok(OlsFit {
        names: design.names().to_vec(),
        coefficients: beta,
        std_errors,
        residuals,
        ssr,
        df_resid,
        sigma,
    })
}

fn norm(x: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    scale * x.iter().map(|v| (v / scale).powi(2)).sum::<f64>().sqrt()
}

fn reflect(v: &[f64], vnorm2: f64, x: &mut [f64]) {
    let dot: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    let f = 2.0 * dot / vnorm2;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= f * vi;
    }
}

/// Expresses deficient column `j` in terms of the previous (independent) ones.
fn rank_error(design: &Design, a: &[Vec<f64>], j: usize) -> Error {
    let r = |row: usize, col: usize| a[col][row];
    let mut c = vec![0.0; j];
    for i in (0..j).rev() {
        let s: f64 = (i + 1..j).map(|m| r(i, m) * c[m]).sum();
        c[i] = (r(i, j) - s) / r(i, i);
    }
    let cmax = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let with = c
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > 1e-8 * cmax && cmax > 0.0)
        .map(|(i, _)| design.names()[i].clone())
        .collect();
    Error::RankDeficient {
        column: design.names()[j].clone(),
        with,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_line() {
        let mut d = Design::new(["intercept", "x"]);
        let mut y = vec![];
        for i in 0..10 {
            let x = i as f64 * 0.7 - 2.0;
            d.push_row(&[1.0, x]);
            y.push(2.0 + 3.0 * x);
        }
        let f = fit(&d, &y).unwrap();
        assert_abs_diff_eq!(f.coefficients[0], 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.coefficients[1], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.sigma, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn duplicate_column_is_named() {
        let mut d = Design::new(["intercept", "x", "x_copy"]);
        for i in 0..10 {
            let x = (i * i) as f64;
            d.push_row(&[1.0, x, 2.0 * x]);
        }
        let err = fit(&d, &[0.0; 10]).unwrap_err();
        match err {
            Error::RankDeficient { column, with } => {
                assert_eq!(column, "x_copy");
                assert_eq!(with, vec!["x".to_owned()]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_rows() {
        let mut d = Design::new(["intercept", "x"]);
        d.push_row(&[1.0, 1.0]);
        d.push_row(&[1.0, 2.0]);
        assert!(matches!(fit(&d, &[1.0, 2.0]), Err(Error::InsufficientSample(_))));
    }

    #[test]
    fn standard_errors_for_simple_regression() {
        // closed form: se(b1) = sigma / sqrt(Sxx), se(b0) = sigma * sqrt(1/n + xbar²/Sxx)
        let xs = [1.0, 2.0, 4.0, 5.0, 7.0, 8.0];
        let ys = [1.2, 2.1, 3.8, 5.3, 6.9, 8.4];
        let mut d = Design::new(["intercept", "x"]);
        for x in xs {
            d.push_row(&[1.0, x]);
        }
        let f = fit(&d, &ys).unwrap();
        let n = xs.len() as f64;
        let xbar = xs.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
        assert_abs_diff_eq!(f.std_errors[1], f.sigma / sxx.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(f.std_errors[0], f.sigma * (1.0 / n + xbar * xbar / sxx).sqrt(), epsilon = 1e-12);
    }
}
