//! Open-circuit voltage and entropic coefficient tables.
//!
//! Table files are plain text: one header line, then whitespace-separated
//! rows `theta ocv docv_dT` with strictly increasing `theta`. Values between
//! grid points come from monotone piecewise-cubic Hermite interpolation.

use std::path::Path;

use super::Electrode;
use crate::error::{Error, Result};

const GRAPHITE: &str = include_str!("../../data/ocv_graphite.txt");
const LCO: &str = include_str!("../../data/ocv_lco.txt");

#[derive(Clone, Debug, PartialEq)]
pub struct OcvTable {
    electrode: Electrode,
    theta: Vec<f64>,
    ocv: Vec<f64>,
    docv_dt: Vec<f64>,
    ocv_slopes: Vec<f64>,
    docv_dt_slopes: Vec<f64>,
}

/// OCV and its temperature derivative at one stoichiometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OcvPoint {
    pub ocv: f64,
    pub docv_dt: f64,
}

impl OcvTable {
    pub fn new(electrode: Electrode, theta: Vec<f64>, ocv: Vec<f64>, docv_dt: Vec<f64>) -> Result<Self> {
        if theta.len() < 10 {
            return Err(Error::Validation(format!(
                "OCV table needs at least 10 points, got {}",
                theta.len()
            )));
        }
        if ocv.len() != theta.len() || docv_dt.len() != theta.len() {
            return Err(Error::Validation("OCV table columns have different lengths".into()));
        }
        if theta.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("OCV table stoichiometry grid must be strictly increasing".into()));
        }
        if theta[0] > 0.0 || theta[theta.len() - 1] < 1.0 {
            return Err(Error::Validation(format!(
                "OCV table must cover [0, 1], covers [{}, {}]",
                theta[0],
                theta[theta.len() - 1]
            )));
        }
        if ocv.iter().chain(&docv_dt).any(|v| !v.is_finite()) {
            return Err(Error::Validation("OCV table contains non-finite values".into()));
        }
        let ocv_slopes = pchip_slopes(&theta, &ocv);
        let docv_dt_slopes = pchip_slopes(&theta, &docv_dt);
        Ok(Self {
            electrode,
            theta,
            ocv,
            docv_dt,
            ocv_slopes,
            docv_dt_slopes,
        })
    }

    pub fn parse(electrode: Electrode, text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines();
        lines.next().ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            msg: "empty OCV table".into(),
        })?;
        let (mut theta, mut ocv, mut docv) = (Vec::new(), Vec::new(), Vec::new());
        for (n, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse {
                    path: origin.to_string(),
                    msg: format!("line {}: {e}", n + 2),
                })?;
            if vals.len() != 3 {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    msg: format!("line {}: expected 3 columns, found {}", n + 2, vals.len()),
                });
            }
            theta.push(vals[0]);
            ocv.push(vals[1]);
            docv.push(vals[2]);
        }
        Self::new(electrode, theta, ocv, docv)
    }

    pub fn load(electrode: Electrode, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(electrode, &text, &path.display().to_string())
    }

    /// Synthetic graphite-shaped curve for the negative electrode.
    pub fn builtin_graphite() -> Self {
        Self::parse(Electrode::Negative, GRAPHITE, "builtin:graphite").expect("shipped table is valid")
    }

    /// Synthetic LiCoO2-shaped curve for the positive electrode.
    pub fn builtin_lco() -> Self {
        Self::parse(Electrode::Positive, LCO, "builtin:lco").expect("shipped table is valid")
    }

    pub fn electrode(&self) -> Electrode {
        self.electrode
    }

    pub fn grid(&self) -> &[f64] {
        &self.theta
    }

    pub fn eval(&self, theta: f64) -> Result<OcvPoint> {
        let (lo, hi) = (self.theta[0], self.theta[self.theta.len() - 1]);
        if !(theta >= lo && theta <= hi) {
            return Err(Error::Domain(format!(
                "{:?} stoichiometry {theta} outside OCV table domain [{lo}, {hi}]",
                self.electrode
            )));
        }
        let k = match self.theta.partition_point(|&t| t <= theta) {
            0 => 0,
            p if p >= self.theta.len() => self.theta.len() - 2,
            p => p - 1,
        };
        Ok(OcvPoint {
            ocv: hermite(&self.theta, &self.ocv, &self.ocv_slopes, k, theta),
            docv_dt: hermite(&self.theta, &self.docv_dt, &self.docv_dt_slopes, k, theta),
        })
    }
}

fn hermite(x: &[f64], y: &[f64], m: &[f64], k: usize, t: f64) -> f64 {
    let h = x[k + 1] - x[k];
    let s = (t - x[k]) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * y[k]
        + (s3 - 2.0 * s2 + s) * h * m[k]
        + (-2.0 * s3 + 3.0 * s2) * y[k + 1]
        + (s3 - s2) * h * m[k + 1]
}

// Fritsch-Butland interior slopes with the shape-preserving three-point end rule.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let d: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut m = vec![0.0; n];
    for k in 1..n - 1 {
        if d[k - 1] * d[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    m[0] = end(h[0], h[1], d[0], d[1]);
    m[n - 1] = end(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
    m
}
