use serde::{Deserialize, Serialize};

use super::linalg::{back_substitute, householder, inverse_gram_diagonal};
use super::RegressionError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HuberConfig {
    /// Tuning constant in units of the scale estimate.
    pub k: f64,
    /// Multiplier turning the median absolute deviation into a scale.
    pub mad_factor: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for HuberConfig {
    fn default() -> Self {
        HuberConfig { k: 1.345, mad_factor: 1.4826, tol: 1e-8, max_iter: 50 }
    }
}

impl HuberConfig {
    fn validate(&self) -> Result<(), RegressionError> {
        if !(self.k > 0.0) {
            return Err(RegressionError::BadConfig(format!("k must be positive, got {}", self.k)));
        }
        if !(self.mad_factor > 0.0) || !self.mad_factor.is_finite() {
            return Err(RegressionError::BadConfig(format!("mad_factor must be positive, got {}", self.mad_factor)));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(RegressionError::BadConfig("tol and max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Column-major design matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Design {
    /// Prepends an intercept column to the given predictors.
    pub fn with_intercept(n: usize, predictors: Vec<(String, Vec<f64>)>) -> Self {
        let mut names = vec!["intercept".to_string()];
        let mut columns = vec![vec![1.0; n]];
        for (name, col) in predictors {
            names.push(name);
            columns.push(col);
        }
        Design { names, columns }
    }

    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>) -> Self {
        assert_eq!(names.len(), columns.len());
        Design { names, columns }
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    fn predict(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        for (col, b) in self.columns.iter().zip(beta) {
            for (o, x) in out.iter_mut().zip(col) {
                *o += b * x;
            }
        }
        out
    }

    fn validate(&self, y: &[f64]) -> Result<(), RegressionError> {
        let (n, p) = (self.rows(), self.cols());
        if self.columns.iter().any(|c| c.len() != y.len()) {
            return Err(RegressionError::LengthMismatch { design: n, response: y.len() });
        }
        if n <= p {
            return Err(RegressionError::TooFewRows { rows: n, cols: p });
        }
        for (name, col) in self.names.iter().zip(&self.columns) {
            if col.iter().any(|v| !v.is_finite()) {
                return Err(RegressionError::NonFinite { column: name.clone() });
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(RegressionError::NonFinite { column: "response".into() });
        }
        Ok(())
    }
}

struct Solve {
    beta: Vec<f64>,
    r: Vec<Vec<f64>>,
}

fn solve_weighted(x: &Design, y: &[f64], w: &[f64]) -> Result<Solve, RegressionError> {
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let cols: Vec<Vec<f64>> =
        x.columns.iter().map(|c| c.iter().zip(&sw).map(|(a, s)| a * s).collect()).collect();
    let b: Vec<f64> = y.iter().zip(&sw).map(|(a, s)| a * s).collect();
    let qr = householder(cols, b);
    if !qr.deficient.is_empty() {
        return Err(RegressionError::RankDeficient {
            columns: qr.deficient.iter().map(|&j| x.names[j].clone()).collect(),
        });
    }
    Ok(Solve { beta: back_substitute(&qr.r, &qr.qtb), r: qr.r })
}

/// Weighted least squares with fixed weights.
pub fn wls(x: &Design, y: &[f64], weights: &[f64]) -> Result<Vec<f64>, RegressionError> {
    x.validate(y)?;
    if weights.len() != y.len() || weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(RegressionError::BadConfig("weights must be positive and match the rows".into()));
    }
    Ok(solve_weighted(x, y, weights)?.beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub names: Vec<String>,
    /// Intercept first, then slopes in design order.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Weights used in the final solve.
    pub weights: Vec<f64>,
    pub residuals: Vec<f64>,
    pub scale: f64,
    /// Weighted correlation, signed by the first slope.
    pub r: f64,
    pub r_squared: f64,
    /// t-statistic of the first slope.
    pub slope_t: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl RegressionFit {
    pub fn slope(&self) -> f64 {
        self.coefficients.get(1).copied().unwrap_or(0.0)
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|j| self.coefficients[j])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|j| self.std_errors[j])
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn mad_scale(residuals: &[f64], factor: f64) -> f64 {
    let mut r = residuals.to_vec();
    let m = median(&mut r);
    let mut dev: Vec<f64> = residuals.iter().map(|x| (x - m).abs()).collect();
    factor * median(&mut dev)
}

fn residuals(x: &Design, y: &[f64], beta: &[f64]) -> Vec<f64> {
    y.iter().zip(x.predict(beta)).map(|(a, b)| a - b).collect()
}

/// Huber regression of `y` on `x`. The design should carry its own
/// intercept column. A fit that runs out of iterations is returned with
/// `converged = false`.
pub fn huber_fit(x: &Design, y: &[f64], cfg: &HuberConfig) -> Result<RegressionFit, RegressionError> {
    cfg.validate()?;
    x.validate(y)?;
    let n = y.len();
    let floor = 1e-12 * (1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    let mut weights = vec![1.0; n];
    let mut solve = solve_weighted(x, y, &weights)?;
    let mut scale = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let res = residuals(x, y, &solve.beta);
        scale = mad_scale(&res, cfg.mad_factor).max(floor);
        let cut = cfg.k * scale;
        for (w, r) in weights.iter_mut().zip(&res) {
            *w = if r.abs() <= cut { 1.0 } else { cut / r.abs() };
        }
        let next = solve_weighted(x, y, &weights)?;
        let delta = next.beta.iter().zip(&solve.beta).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        solve = next;
        if delta < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("Huber fit stopped after {iterations} iterations without converging");
    }
    let res = residuals(x, y, &solve.beta);
    Ok(summarize(x, y, solve, weights, res, scale, iterations, converged))
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    x: &Design,
    y: &[f64],
    solve: Solve,
    weights: Vec<f64>,
    res: Vec<f64>,
    scale: f64,
    iterations: usize,
    converged: bool,
) -> RegressionFit {
    let n = y.len();
    let p = x.cols();
    let sw: f64 = weights.iter().sum();
    let ybar = weights.iter().zip(y).map(|(w, v)| w * v).sum::<f64>() / sw;
    let sst: f64 = weights.iter().zip(y).map(|(w, v)| w * (v - ybar).powi(2)).sum();
    let ssr: f64 = weights.iter().zip(&res).map(|(w, r)| w * r * r).sum();
    let flat = sst <= 1e-20 * sw * ybar * ybar;
    let r_squared = if flat { 0.0 } else { (1.0 - ssr / sst).clamp(0.0, 1.0) };
    let sigma2 = ssr / (n - p) as f64;
    let std_errors: Vec<f64> = inverse_gram_diagonal(&solve.r).into_iter().map(|d| (sigma2 * d).sqrt()).collect();
    let slope = solve.beta.get(1).copied().unwrap_or(0.0);
    let slope_t = match std_errors.get(1) {
        None => 0.0,
        Some(_) if flat => 0.0,
        Some(&se) if se == 0.0 => {
            if slope == 0.0 {
                0.0
            } else {
                slope.signum() * f64::INFINITY
            }
        }
        Some(&se) => slope / se,
    };
    let r = if flat || slope == 0.0 { 0.0 } else { slope.signum() * r_squared.sqrt() };
    RegressionFit {
        names: x.names.clone(),
        coefficients: solve.beta,
        std_errors,
        weights,
        residuals: res,
        scale,
        r,
        r_squared,
        slope_t,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SplitMix64;
    use proptest::prelude::*;

    fn simple(x: &[f64]) -> Design {
        Design::with_intercept(x.len(), vec![("x".into(), x.to_vec())])
    }

    /// Normal equations solved by Gauss-Jordan elimination with partial pivoting.
    fn normal_equations(cols: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let p = cols.len();
        let mut a = vec![vec![0.0; p + 1]; p];
        for i in 0..p {
            for j in 0..p {
                a[i][j] = cols[i].iter().zip(&cols[j]).map(|(u, v)| u * v).sum();
            }
            a[i][p] = cols[i].iter().zip(y).map(|(u, v)| u * v).sum();
        }
        for c in 0..p {
            let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            for r in 0..p {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..=p {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        (0..p).map(|i| a[i][p] / a[i][i]).collect()
    }

    /// Straightforward IRLS written independently of the library loop.
    fn irls_oracle(xs: &[f64], y: &[f64]) -> (f64, f64, Vec<f64>) {
        let n = xs.len();
        let mut w = vec![1.0; n];
        let (mut a, mut b) = (0.0, 0.0);
        for _ in 0..200 {
            let sw: f64 = w.iter().sum();
            let mx = w.iter().zip(xs).map(|(w, x)| w * x).sum::<f64>() / sw;
            let my = w.iter().zip(y).map(|(w, v)| w * v).sum::<f64>() / sw;
            let sxy: f64 = (0..n).map(|i| w[i] * (xs[i] - mx) * (y[i] - my)).sum();
            let sxx: f64 = (0..n).map(|i| w[i] * (xs[i] - mx).powi(2)).sum();
            b = sxy / sxx;
            a = my - b * mx;
            let r: Vec<f64> = (0..n).map(|i| y[i] - a - b * xs[i]).collect();
            let mut sorted = r.clone();
            sorted.sort_by(f64::total_cmp);
            let med = 0.5 * (sorted[(n - 1) / 2] + sorted[n / 2]);
            let mut dev: Vec<f64> = r.iter().map(|v| (v - med).abs()).collect();
            dev.sort_by(f64::total_cmp);
            let s = 1.4826 * 0.5 * (dev[(n - 1) / 2] + dev[n / 2]);
            w = r.iter().map(|v| if v.abs() <= 1.345 * s { 1.0 } else { 1.345 * s / v.abs() }).collect();
        }
        (a, b, w)
    }

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let fit = huber_fit(&simple(&x), &y, &HuberConfig::default()).unwrap();
        assert!((fit.slope() - 2.0).abs() < 1e-10);
        assert!((fit.intercept() - 1.0).abs() < 1e-10);
        assert!(fit.weights.iter().all(|&w| w == 1.0));
        assert!(fit.converged);
        assert!((fit.r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn displaced_point_downweighted() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let mut rng = SplitMix64::new(3);
        let mut y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0 + 0.3 * rng.normal()).collect();
        y[12] += 1000.0;
        let fit = huber_fit(&simple(&x), &y, &HuberConfig::default()).unwrap();
        assert!((fit.slope() - 2.0).abs() < 0.1);
        assert!(fit.weights[12] < 0.05);
        let (a, b, w) = irls_oracle(&x, &y);
        assert!((fit.slope() - b).abs() < 1e-6);
        assert!((fit.intercept() - a).abs() < 1e-6);
        assert!((fit.weights[12] - w[12]).abs() < 1e-6);
    }

    #[test]
    fn constant_response() {
        let x: Vec<f64> = (0..30).map(f64::from).collect();
        let y = vec![0.7; 30];
        let fit = huber_fit(&simple(&x), &y, &HuberConfig::default()).unwrap();
        assert!(fit.slope().abs() < 1e-12);
        assert_eq!(fit.r, 0.0);
        assert_eq!(fit.slope_t, 0.0);
    }

    #[test]
    fn collinear_columns_named() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let twice: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let d = Design::with_intercept(10, vec![("a".into(), x.clone()), ("b".into(), twice)]);
        let err = huber_fit(&d, &x, &HuberConfig::default()).unwrap_err();
        assert_eq!(err, RegressionError::RankDeficient { columns: vec!["b".into()] });
        let flat = Design::with_intercept(10, vec![("c".into(), vec![3.0; 10])]);
        assert!(matches!(huber_fit(&flat, &x, &HuberConfig::default()), Err(RegressionError::RankDeficient { .. })));
    }

    #[test]
    fn rejects_bad_shapes() {
        let d = simple(&[1.0, 2.0]);
        assert!(matches!(huber_fit(&d, &[1.0, 2.0], &HuberConfig::default()), Err(RegressionError::TooFewRows { .. })));
        let d = simple(&[1.0, 2.0, f64::NAN]);
        assert!(matches!(huber_fit(&d, &[1.0, 2.0, 3.0], &HuberConfig::default()), Err(RegressionError::NonFinite { .. })));
    }

    #[test]
    fn non_convergence_reported() {
        let x: Vec<f64> = (0..40).map(f64::from).collect();
        let mut rng = SplitMix64::new(5);
        let y: Vec<f64> = x.iter().map(|v| v + 5.0 * rng.normal() + if rng.bernoulli(0.2) { 80.0 } else { 0.0 }).collect();
        let cfg = HuberConfig { max_iter: 1, tol: 1e-300, ..Default::default() };
        let fit = huber_fit(&simple(&x), &y, &cfg).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 1);
    }

    #[test]
    fn slope_t_matches_textbook_ols() {
        let x: Vec<f64> = (0..25).map(|i| f64::from(i) * 0.4).collect();
        let mut rng = SplitMix64::new(11);
        let y: Vec<f64> = x.iter().map(|v| 0.5 * v - 2.0 + rng.normal()).collect();
        let cfg = HuberConfig { k: f64::INFINITY, ..Default::default() };
        let fit = huber_fit(&simple(&x), &y, &cfg).unwrap();
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let sse: f64 = fit.residuals.iter().map(|r| r * r).sum();
        let se = (sse / (n - 2.0) / sxx).sqrt();
        assert!((fit.slope_t - fit.slope() / se).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn unit_weights_equal_least_squares(seed in any::<u64>(), n in 8usize..60) {
            let mut rng = SplitMix64::new(seed);
            let x1: Vec<f64> = (0..n).map(|_| rng.range(-5.0, 5.0)).collect();
            let x2: Vec<f64> = (0..n).map(|_| rng.range(0.0, 3.0)).collect();
            let y: Vec<f64> = (0..n).map(|i| 1.5 - 0.7 * x1[i] + 2.0 * x2[i] + rng.normal()).collect();
            let d = Design::with_intercept(n, vec![("x1".into(), x1.clone()), ("x2".into(), x2.clone())]);
            let cfg = HuberConfig { k: f64::INFINITY, ..Default::default() };
            let fit = huber_fit(&d, &y, &cfg).unwrap();
            let oracle = normal_equations(&[vec![1.0; n], x1, x2], &y);
            for (a, b) in fit.coefficients.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-8);
            }
        }

        #[test]
        fn scale_equivariance(seed in any::<u64>(), c in 0.1..50.0f64) {
            let mut rng = SplitMix64::new(seed);
            let x: Vec<f64> = (0..40).map(|i| i as f64 / 4.0).collect();
            let y: Vec<f64> = x.iter().map(|v| 3.0 * v + 2.0 * rng.normal() + if rng.bernoulli(0.1) { 40.0 } else { 0.0 }).collect();
            let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
            let a = huber_fit(&simple(&x), &y, &HuberConfig::default()).unwrap();
            let b = huber_fit(&simple(&x), &ys, &HuberConfig::default()).unwrap();
            prop_assert!((b.slope() - c * a.slope()).abs() <= 1e-6 * (1.0 + c * a.slope().abs()));
            for (ra, rb) in a.residuals.iter().zip(&b.residuals) {
                prop_assert!((rb - c * ra).abs() <= 1e-6 * (1.0 + c * ra.abs()));
            }
            let argmax = |r: &[f64]| (0..r.len()).max_by(|&i, &j| r[i].total_cmp(&r[j])).unwrap();
            prop_assert_eq!(argmax(&a.residuals), argmax(&b.residuals));
        }

        #[test]
        fn fit_invariants(seed in any::<u64>()) {
            let mut rng = SplitMix64::new(seed);
            let x: Vec<f64> = (0..50).map(|_| rng.range(0.0, 10.0)).collect();
            let y: Vec<f64> = x.iter().map(|v| -v + rng.normal() * 2.0 + if rng.bernoulli(0.1) { -30.0 } else { 0.0 }).collect();
            let d = simple(&x);
            let fit = huber_fit(&d, &y, &HuberConfig::default()).unwrap();
            prop_assert!(fit.weights.iter().all(|&w| w > 0.0 && w <= 1.0));
            for i in 0..50 {
                prop_assert_eq!(fit.residuals[i], y[i] - (fit.coefficients[0] * 1.0 + fit.coefficients[1] * x[i]));
            }
            let wr: f64 = fit.weights.iter().zip(&fit.residuals).map(|(w, r)| w * r).sum::<f64>() / fit.weights.iter().sum::<f64>();
            prop_assert!(wr.abs() <= 1e-6 * fit.scale.max(1e-12));
            prop_assert!(fit.converged);
        }
    }
}
