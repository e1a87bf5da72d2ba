use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedT {
    pub n: usize,
    pub mean: f64,
    /// Absent below two pairs.
    pub t: Option<f64>,
    /// Two-sided.
    pub p: Option<f64>,
    /// Zero spread with a nonzero mean.
    pub degenerate: bool,
}

/// Paired t-test of the mean difference against zero.
pub fn paired_t(d: &[f64]) -> PairedT {
    let n = d.len();
    let mean = if n == 0 { 0.0 } else { d.iter().sum::<f64>() / n as f64 };
    let mut out = PairedT { n, mean, t: None, p: None, degenerate: false };
    if n < 2 {
        return out;
    }
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    // Spread below rounding noise of the mean counts as zero.
    if sd <= 1e-12 * mean.abs() {
        if mean == 0.0 {
            out.t = Some(0.0);
            out.p = Some(1.0);
        } else {
            out.t = Some(mean.signum() * f64::INFINITY);
            out.p = Some(0.0);
            out.degenerate = true;
        }
        return out;
    }
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("positive degrees of freedom");
    out.t = Some(t);
    out.p = Some((2.0 * dist.sf(t.abs())).min(1.0));
    out
}

/// Flags `p < alpha / m`, where m counts the tested cells.
pub fn bonferroni(raw_p: &[Option<f64>], alpha: f64) -> (Vec<bool>, usize) {
    let m = raw_p.iter().filter(|p| p.is_some()).count();
    let flags = raw_p.iter().map(|p| matches!(p, Some(p) if m > 0 && *p < alpha / m as f64)).collect();
    (flags, m)
}

/// Linear-interpolation percentile of unsorted values, `q` in [0, 100].
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * (q / 100.0).clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}
