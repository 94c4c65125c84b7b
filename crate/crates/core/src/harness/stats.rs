use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const SUCCESS_WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct SuccessRate {
    /// Best sliding-window success fraction of each experiment.
    pub per_experiment: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation across experiments; 0 for a single one.
    pub std: f64,
}

/// Highest fraction of successes in any `window` consecutive episodes.
pub fn best_window(successes: &[bool], window: usize) -> Result<f64> {
    if window == 0 {
        return Err(Error::config("success window must be positive"));
    }
    if successes.len() < window {
        return Err(Error::InsufficientData(format!(
            "{} episodes recorded, window needs {window}",
            successes.len()
        )));
    }
    let mut count = successes[..window].iter().filter(|s| **s).count();
    let mut best = count;
    for i in window..successes.len() {
        count += successes[i] as usize;
        count -= successes[i - window] as usize;
        best = best.max(count);
    }
    Ok(best as f64 / window as f64)
}

pub fn success_rate(experiments: &[Vec<bool>], window: usize) -> Result<SuccessRate> {
    if experiments.is_empty() {
        return Err(Error::InsufficientData("no experiments".into()));
    }
    let per_experiment = experiments
        .iter()
        .map(|e| best_window(e, window))
        .collect::<Result<Vec<_>>>()?;
    let (mean, std) = mean_std(&per_experiment);
    Ok(SuccessRate {
        per_experiment,
        mean,
        std,
    })
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Weights that evaluate, at the center, the least-squares polynomial of
/// degree `order` through `2·half + 1` equally spaced samples.
fn savgol_weights(half: usize, order: usize) -> Vec<f64> {
    let len = 2 * half + 1;
    let degree = order.min(len - 1);
    let vander = DMatrix::from_fn(len, degree + 1, |i, p| (i as f64 - half as f64).powi(p as i32));
    let pinv = vander
        .pseudo_inverse(1e-12)
        .expect("Vandermonde pseudo-inverse with positive epsilon");
    pinv.row(0).iter().copied().collect()
}

/// Savitzky-Golay smoothing. Near the edges the window shrinks symmetrically
/// so every output stays centered on its own sample.
pub fn smooth(series: &[f64], window: usize, order: usize) -> Result<Vec<f64>> {
    if window.is_multiple_of(2) {
        return Err(Error::config("smoothing window must be odd"));
    }
    if window > series.len() {
        return Err(Error::config("smoothing window longer than the series"));
    }
    let half = window / 2;
    let n = series.len();
    let mut cache: Vec<Option<Vec<f64>>> = vec![None; half + 1];
    Ok((0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            let w = cache[h].get_or_insert_with(|| savgol_weights(h, order));
            w.iter().zip(&series[i - h..=i + h]).map(|(w, x)| w * x).sum()
        })
        .collect())
}
