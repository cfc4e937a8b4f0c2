//! Least-squares helpers shared by the initializer and the baselines.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative residual norm below which a column counts as collinear with the
/// columns before it.
const COLLINEAR_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub rss: f64,
    /// RSS / (rows - columns); NaN when there are no residual degrees of freedom.
    pub residual_variance: f64,
    pub fitted: Vec<f64>,
}

/// Columns that are (numerically) linear combinations of earlier columns,
/// found by twice-iterated modified Gram-Schmidt.
pub fn collinear_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(x.ncols());
    let mut bad = Vec::new();
    for k in 0..x.ncols() {
        let col = x.column(k).into_owned();
        let norm = col.norm();
        let mut v = col;
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let rn = v.norm();
        if norm == 0.0 || rn <= COLLINEAR_TOL * norm {
            bad.push(k);
        } else {
            basis.push(v / rn);
        }
    }
    bad
}

/// Ordinary least squares of `y` on the columns of `x` (no implicit
/// intercept). Rank deficiency is an error naming the offending columns.
pub fn ols(x: &DMatrix<f64>, y: &[f64], names: &[String]) -> Result<OlsFit> {
    let (n, p) = x.shape();
    if y.len() != n || names.len() != p {
        return Err(Error::Dimension(format!(
            "design {n}x{p}, outcome {}, names {}",
            y.len(),
            names.len()
        )));
    }
    if n < p {
        return Err(Error::RankDeficient {
            columns: names.to_vec(),
        });
    }
    let bad = collinear_columns(x);
    if !bad.is_empty() {
        return Err(Error::RankDeficient {
            columns: bad.into_iter().map(|k| names[k].clone()).collect(),
        });
    }
    let qr = x.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let yv = DVector::from_column_slice(y);
    let qty = q.transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient { columns: names.to_vec() })?;
    let fitted = x * &beta;
    let rss = (&yv - &fitted).norm_squared();
    let dof = n - p;
    let residual_variance = if dof > 0 { rss / dof as f64 } else { f64::NAN };
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::RankDeficient { columns: names.to_vec() })?;
    let standard_errors = (0..p)
        .map(|k| (residual_variance * r_inv.row(k).norm_squared()).sqrt())
        .collect();
    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        standard_errors,
        rss,
        residual_variance,
        fitted: fitted.iter().copied().collect(),
    })
}

/// Residual sum of squares of the least-squares fit, or `None` when the
/// design is rank deficient.
pub fn ols_rss(x: &DMatrix<f64>, y: &[f64]) -> Option<f64> {
    if x.nrows() < x.ncols() || !collinear_columns(x).is_empty() {
        return None;
    }
    let qr = x.clone().qr();
    let yv = DVector::from_column_slice(y);
    let beta = qr.r().solve_upper_triangular(&(qr.q().transpose() * &yv))?;
    Some((&yv - x * beta).norm_squared())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|k| format!("c{k}")).collect()
    }

    #[test]
    fn exact_fit_recovers_coefficients() {
        let x = DMatrix::from_fn(10, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => ((i * i) % 7) as f64,
        });
        let y: Vec<f64> = (0..10)
            .map(|i| 2.0 - 0.5 * i as f64 + 0.25 * ((i * i) % 7) as f64)
            .collect();
        let fit = ols(&x, &y, &names(3)).unwrap();
        for (b, t) in fit.coefficients.iter().zip([2.0, -0.5, 0.25]) {
            assert!((b - t).abs() < 1e-10);
        }
        assert!(fit.rss < 1e-20);
    }

    #[test]
    fn collinear_columns_are_named() {
        let x = DMatrix::from_fn(6, 3, |i, j| match j {
            0 => 1.0,
            1 => i as f64,
            _ => 3.0,
        });
        let err = ols(&x, &[0.0; 6], &names(3)).unwrap_err();
        match err {
            Error::RankDeficient { columns } => assert_eq!(columns, ["c2"]),
            e => panic!("{e}"),
        }
    }
}
