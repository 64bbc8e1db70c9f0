//! Error metrics comparing estimates with the plant truth.

use std::time::Duration;

use crate::cell::{CellState, STATE_DIM};
use crate::error::{Error, Result};

/// State names in estimate order.
pub const STATE_NAMES: [&str; STATE_DIM] = ["soc", "csc", "ce1", "ce2", "tc", "ts"];

/// Steps excluded from timing statistics.
pub const TIMING_WARMUP: usize = 10;

/// Relative error `(truth - estimate) / truth`.
pub fn relative_error(truth: f64, estimate: f64) -> Result<f64> {
    if truth == 0.0 || !truth.is_finite() {
        return Err(Error::Validation(format!("relative error undefined for truth value {truth}")));
    }
    Ok((truth - estimate) / truth)
}

/// Relative error of every state of every cell at every step.
pub fn relative_error_series(truth: &[Vec<CellState>], estimate: &[Vec<CellState>]) -> Result<Vec<Vec<[f64; STATE_DIM]>>> {
    check_aligned(truth, estimate)?;
    truth
        .iter()
        .zip(estimate)
        .map(|(tk, ek)| {
            tk.iter()
                .zip(ek)
                .map(|(t, e)| {
                    let (t, e) = (t.to_array(), e.to_array());
                    let mut out = [0.0; STATE_DIM];
                    for s in 0..STATE_DIM {
                        out[s] = relative_error(t[s], e[s])?;
                    }
                    Ok(out)
                })
                .collect()
        })
        .collect()
}

/// Root mean square of the relative error, pooled over steps and cells, per state.
pub fn rmse(truth: &[Vec<CellState>], estimate: &[Vec<CellState>]) -> Result<[f64; STATE_DIM]> {
    let series = relative_error_series(truth, estimate)?;
    let mut acc = [0.0; STATE_DIM];
    let mut count = 0usize;
    for step in &series {
        for cell in step {
            for s in 0..STATE_DIM {
                acc[s] += cell[s] * cell[s];
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Validation("no samples to score".into()));
    }
    Ok(acc.map(|a| (a / count as f64).sqrt()))
}

/// Ratio of a filter's error to the reference filter's error, per state.
pub fn normalize_metrics(eps: &[f64; STATE_DIM], reference: &[f64; STATE_DIM]) -> Result<[f64; STATE_DIM]> {
    let mut out = [0.0; STATE_DIM];
    for s in 0..STATE_DIM {
        if !(reference[s] > 0.0) {
            return Err(Error::Validation(format!(
                "reference error for {} is {}, cannot normalize",
                STATE_NAMES[s], reference[s]
            )));
        }
        out[s] = eps[s] / reference[s];
    }
    Ok(out)
}

/// Median over all samples recorded after the warm-up steps.
///
/// `times[k]` holds the samples of step `k`: one for a centralized step, one per
/// node for a partitioned step.
pub fn median_after_warmup(times: &[Vec<Duration>]) -> Option<Duration> {
    let mut t: Vec<Duration> = times.iter().skip(TIMING_WARMUP).flatten().copied().collect();
    if t.is_empty() {
        return None;
    }
    t.sort_unstable();
    let n = t.len();
    Some(if n % 2 == 1 { t[n / 2] } else { (t[n / 2 - 1] + t[n / 2]) / 2 })
}

fn check_aligned(truth: &[Vec<CellState>], estimate: &[Vec<CellState>]) -> Result<()> {
    if truth.len() != estimate.len() {
        return Err(Error::Validation(format!(
            "{} truth steps against {} estimate steps",
            truth.len(),
            estimate.len()
        )));
    }
    if let Some(k) = truth.iter().zip(estimate).position(|(a, b)| a.len() != b.len()) {
        return Err(Error::Validation(format!("cell count mismatch at step {k}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn state(v: f64) -> CellState {
        CellState::from_slice(&[v; STATE_DIM])
    }

    #[test]
    fn relative_error_sign_and_zero_truth() {
        assert_relative_eq!(relative_error(2.0, 1.5).unwrap(), 0.25);
        assert_relative_eq!(relative_error(2.0, 2.5).unwrap(), -0.25);
        assert!(relative_error(0.0, 1.0).is_err());
    }

    #[test]
    fn rmse_pools_cells_and_steps() {
        let truth = vec![vec![state(1.0), state(1.0)]; 2];
        let est = vec![vec![state(0.9), state(1.0)], vec![state(1.1), state(1.0)]];
        let r = rmse(&truth, &est).unwrap();
        let expected = (0.02f64 / 4.0).sqrt();
        for v in r {
            assert_relative_eq!(v, expected, max_relative = 1e-12);
        }
        assert!(rmse(&truth, &est[..1]).is_err());
    }

    #[test]
    fn normalization() {
        let n = normalize_metrics(&[2.0; 6], &[4.0; 6]).unwrap();
        assert_eq!(n, [0.5; 6]);
        let mut z = [1.0; 6];
        z[3] = 0.0;
        assert!(normalize_metrics(&[1.0; 6], &z).is_err());
    }

    #[test]
    fn median_skips_warmup() {
        let mut t = vec![vec![Duration::from_secs(100)]; TIMING_WARMUP];
        t.push([1, 3].map(Duration::from_millis).to_vec());
        t.push([2, 10].map(Duration::from_millis).to_vec());
        assert_eq!(median_after_warmup(&t), Some(Duration::from_micros(2500)));
        assert_eq!(median_after_warmup(&t[..TIMING_WARMUP]), None);
    }
}
