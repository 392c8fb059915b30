//! Augmented Dickey-Fuller unit-root test, constant-only regression, with
//! MacKinnon (1994) response-surface p-values.

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::mathcore::Matrix;

const PIVOT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residual_variance: f64,
    pub dof: usize,
    /// Residual sum of squares.
    pub rss: f64,
    pub residuals: Vec<f64>,
}

/// Least squares via Householder QR. The coefficient covariance is
/// `s² (RᵀR)⁻¹`, computed from `R⁻¹`.
pub fn ols_fit(design: &Matrix, response: &[f64]) -> Result<OlsFit> {
    let (n, k) = design.shape();
    if response.len() != n {
        return Err(Error::dims(format!(
            "design has {n} rows, response has {}",
            response.len()
        )));
    }
    if n <= k {
        return Err(Error::TooFewSamples {
            needed: k + 1,
            have: n,
        });
    }

    // column-major working copy
    let mut a: Vec<Vec<f64>> = (0..k).map(|c| design.col(c)).collect();
    let mut qty = response.to_vec();
    let col_scale = a
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);

    for j in 0..k {
        let norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= PIVOT_TOLERANCE * col_scale.max(f64::MIN_POSITIVE) {
            return Err(Error::RankDeficient);
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(j) {
                let dot: f64 = v.iter().zip(&col[j..]).map(|(x, y)| x * y).sum();
                let f = 2.0 * dot / vnorm2;
                for (c, vi) in col[j..].iter_mut().zip(&v) {
                    *c -= f * vi;
                }
            }
            let dot: f64 = v.iter().zip(&qty[j..]).map(|(x, y)| x * y).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in qty[j..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
    }

    let r = |i: usize, j: usize| a[j][i];
    let max_diag = (0..k).map(|i| r(i, i).abs()).fold(0.0, f64::max);
    if (0..k).any(|i| r(i, i).abs() <= PIVOT_TOLERANCE * max_diag) {
        return Err(Error::RankDeficient);
    }

    let mut beta = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| r(i, j) * beta[j]).sum();
        beta[i] = (qty[i] - s) / r(i, i);
    }

    // R⁻¹, upper triangular
    let mut rinv = vec![vec![0.0; k]; k];
    for c in 0..k {
        rinv[c][c] = 1.0 / r(c, c);
        for i in (0..c).rev() {
            let s: f64 = (i + 1..=c).map(|j| r(i, j) * rinv[j][c]).sum();
            rinv[i][c] = -s / r(i, i);
        }
    }

    let residuals: Vec<f64> = (0..n)
        .map(|i| {
            let fitted: f64 = design.row(i).iter().zip(&beta).map(|(x, b)| x * b).sum();
            response[i] - fitted
        })
        .collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let dof = n - k;
    let s2 = rss / dof as f64;
    let std_errors = (0..k)
        .map(|i| {
            let diag: f64 = rinv[i].iter().map(|v| v * v).sum();
            (s2 * diag).sqrt()
        })
        .collect();

    Ok(OlsFit {
        coefficients: beta,
        std_errors,
        residual_variance: s2,
        dof,
        rss,
        residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LagSpec {
    Fixed(usize),
    /// Schwert upper bound, then the AIC-minimizing lag.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub p_value: f64,
    pub lags_used: usize,
    pub n_obs: usize,
    pub stationary_at_5pct: bool,
}

/// Minimum regression sample after differencing and lag trimming.
pub const ADF_MIN_OBS: usize = 20;

/// `⌊12 (n/100)^{1/4}⌋`.
pub fn schwert_max_lag(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

/// Regression of Δy_t on `[1, y_{t-1}, Δy_{t-1} … Δy_{t-lag}]` for
/// `t = start..n`, with `start ≥ lag + 1`.
fn adf_regression(y: &[f64], lag: usize, start: usize) -> Result<OlsFit> {
    let n = y.len();
    let dy: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let rows = n - start;
    let k = 2 + lag;
    let mut data = Vec::with_capacity(rows * k);
    let mut response = Vec::with_capacity(rows);
    for t in start..n {
        data.push(1.0);
        data.push(y[t - 1]);
        for i in 1..=lag {
            data.push(dy[t - 1 - i]);
        }
        response.push(dy[t - 1]);
    }
    ols_fit(&Matrix::new(rows, k, data)?, &response)
}

pub fn adf_test(series: &[f64], lags: LagSpec) -> Result<AdfResult> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n.max(1) as f64;
    if n >= 2 && series.iter().all(|&v| v == series[0]) {
        return Err(Error::ConstantSeries);
    }
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    if n >= 2 && var == 0.0 {
        return Err(Error::ConstantSeries);
    }

    let lag = match lags {
        LagSpec::Fixed(p) => p,
        LagSpec::Auto => {
            // the regression sample must keep ADF_MIN_OBS rows at the largest lag
            let cap = n.saturating_sub(ADF_MIN_OBS + 1);
            let max_lag = schwert_max_lag(n).min(cap).min((n / 2).saturating_sub(3));
            if n < ADF_MIN_OBS + 1 {
                return Err(Error::TooShort {
                    needed: ADF_MIN_OBS + 1,
                    have: n,
                });
            }
            let start = max_lag + 1;
            let mut best = (f64::INFINITY, 0);
            for p in 0..=max_lag {
                let fit = adf_regression(series, p, start)?;
                let m = (n - start) as f64;
                let aic = m * (fit.rss / m).ln() + 2.0 * (p + 2) as f64;
                if aic < best.0 {
                    best = (aic, p);
                }
            }
            best.1
        }
    };

    let n_obs = n.saturating_sub(lag + 1);
    if n_obs < ADF_MIN_OBS {
        return Err(Error::TooShort {
            needed: ADF_MIN_OBS + lag + 1,
            have: n,
        });
    }
    let fit = adf_regression(series, lag, lag + 1)?;
    let statistic = fit.coefficients[1] / fit.std_errors[1];
    if !statistic.is_finite() {
        return Err(Error::Numeric("ADF statistic is not finite".into()));
    }
    let p_value = mackinnon_p_value(statistic);
    Ok(AdfResult {
        statistic,
        p_value,
        lags_used: lag,
        n_obs,
        stationary_at_5pct: p_value < 0.05,
    })
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Asymptotic p-value for the constant-only, single-series case.
pub fn mackinnon_p_value(stat: f64) -> f64 {
    const TAU_MAX: f64 = 2.74;
    const TAU_MIN: f64 = -18.83;
    const TAU_STAR: f64 = -1.61;
    const SMALL_P: [f64; 3] = [2.1659, 1.4412, 0.038269];
    const LARGE_P: [f64; 4] = [1.7339, 0.93202, -0.12745, -0.010368];

    if stat > TAU_MAX {
        return 0.999;
    }
    if stat < TAU_MIN {
        return 0.001;
    }
    let coeffs: &[f64] = if stat <= TAU_STAR { &SMALL_P } else { &LARGE_P };
    let poly = coeffs.iter().rev().fold(0.0, |acc, c| acc * stat + c);
    normal_cdf(poly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Normal equations solved by Gauss-Jordan elimination.
    fn normal_equation_oracle(x: &Matrix, y: &[f64]) -> Vec<f64> {
        let k = x.cols();
        let mut aug = vec![vec![0.0; k + 1]; k];
        for i in 0..k {
            for j in 0..k {
                aug[i][j] = (0..x.rows()).map(|r| x.get(r, i) * x.get(r, j)).sum();
            }
            aug[i][k] = (0..x.rows()).map(|r| x.get(r, i) * y[r]).sum();
        }
        for c in 0..k {
            let p = (c..k).max_by(|&a, &b| aug[a][c].abs().total_cmp(&aug[b][c].abs())).unwrap();
            aug.swap(c, p);
            for r in 0..k {
                if r != c {
                    let f = aug[r][c] / aug[c][c];
                    for j in c..=k {
                        aug[r][j] -= f * aug[c][j];
                    }
                }
            }
        }
        (0..k).map(|i| aug[i][k] / aug[i][i]).collect()
    }

    #[test]
    fn exact_fit() {
        let x = Matrix::column(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let fit = ols_fit(&x, &[2.0, 4.0, 6.0, 8.0]).unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-14);
        assert!(fit.residual_variance < 1e-28);
        assert_eq!(fit.dof, 3);
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let x = Matrix::from_rows(&[
            vec![1.0, 1.0],
            vec![2.0, 2.0],
            vec![3.0, 3.0],
            vec![5.0, 5.0],
        ])
        .unwrap();
        assert!(matches!(ols_fit(&x, &[1.0, 2.0, 3.0, 4.0]), Err(Error::RankDeficient)));
    }

    #[test]
    fn matches_normal_equations_and_residuals_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 60;
        let k = 4;
        let data: Vec<f64> = (0..n * k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = Matrix::new(n, k, data).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let fit = ols_fit(&x, &y).unwrap();
        let oracle = normal_equation_oracle(&x, &y);
        for (a, b) in fit.coefficients.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8);
        }
        for c in 0..k {
            let dot: f64 = (0..n).map(|r| x.get(r, c) * fit.residuals[r]).sum();
            assert!(dot.abs() < 1e-8);
        }
    }

    #[test]
    fn mackinnon_values() {
        // reference values from statsmodels.tsa.adfvalues.mackinnonp(stat, "c", 1)
        assert!((mackinnon_p_value(-2.8621) - 0.049_936_096_264_282_4).abs() < 1e-9);
        assert_eq!(mackinnon_p_value(3.0), 0.999);
        assert_eq!(mackinnon_p_value(-20.0), 0.001);
        assert!(mackinnon_p_value(-1.0) > mackinnon_p_value(-2.0));
    }

    fn white_noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn random_walk_not_rejected() {
        let mut acc = 0.0;
        let walk: Vec<f64> = white_noise(42, 300)
            .into_iter()
            .map(|e| {
                acc += e;
                acc
            })
            .collect();
        let r = adf_test(&walk, LagSpec::Auto).unwrap();
        assert!(r.p_value > 0.05, "{r:?}");
        assert!(!r.stationary_at_5pct);
    }

    #[test]
    fn white_noise_rejected() {
        let r = adf_test(&white_noise(42, 300), LagSpec::Auto).unwrap();
        assert!(r.p_value < 0.01, "{r:?}");
        assert!(r.stationary_at_5pct);
    }

    #[test]
    fn matches_reference_package() {
        // statsmodels.tsa.stattools.adfuller on the same seed-42 draws
        // (autolag="AIC", maxlag=⌊12 (n/100)^¼⌋; and maxlag=3, autolag=None)
        let noise = white_noise(42, 300);
        let mut acc = 0.0;
        let walk: Vec<f64> = noise
            .iter()
            .map(|e| {
                acc += e;
                acc
            })
            .collect();
        let cases = [
            (&noise, -17.3047616431413, -8.945521131151718, 9.010806230894427e-15),
            (&walk, -0.541035969216814, -0.5447639733118692, 0.8829811676855892),
        ];
        for (series, auto_stat, fixed_stat, fixed_p) in cases {
            let auto = adf_test(series, LagSpec::Auto).unwrap();
            assert_eq!(auto.lags_used, 0);
            assert!((auto.statistic - auto_stat).abs() < 1e-9);
            let fixed = adf_test(series, LagSpec::Fixed(3)).unwrap();
            assert!((fixed.statistic - fixed_stat).abs() < 1e-9);
            assert!((fixed.p_value - fixed_p).abs() < 1e-9);
        }
    }

    #[test]
    fn guards() {
        assert!(matches!(adf_test(&[3.0; 50], LagSpec::Auto), Err(Error::ConstantSeries)));
        assert!(matches!(
            adf_test(&white_noise(1, 15), LagSpec::Auto),
            Err(Error::TooShort { .. })
        ));
        assert!(matches!(
            adf_test(&white_noise(1, 25), LagSpec::Fixed(6)),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn affine_invariance() {
        let y = white_noise(7, 200);
        let r1 = adf_test(&y, LagSpec::Auto).unwrap();
        let z: Vec<f64> = y.iter().map(|v| 3.7 * v - 12.0).collect();
        let r2 = adf_test(&z, LagSpec::Auto).unwrap();
        assert_eq!(r1.lags_used, r2.lags_used);
        assert!((r1.statistic - r2.statistic).abs() < 1e-9);
    }
}
