//! Unscented transform and Kalman update.
//!
//! The default [`SigmaSpace::Augmented`] builds sigma points over
//! `x^a = [x; w; v]` with covariance `diag(P, Q, R)`: process noise enters
//! the propagated points additively and measurement noise the predicted
//! outputs. [`SigmaSpace::StateOnly`] spreads points over the state alone and
//! adds `Q` and `R` to the predicted covariances instead.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diagonal jitter levels tried when a covariance is not numerically positive definite.
pub const JITTER_LEVELS: [f64; 4] = [1e-12, 1e-10, 1e-8, 1e-6];

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::Validation(format!(
                "covariance is {}x{} for a mean of length {}",
                cov.nrows(),
                cov.ncols(),
                mean.len()
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Which vector the sigma points span.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSpace {
    /// State, process noise and measurement noise.
    #[default]
    Augmented,
    /// State only, with additive noise covariances.
    StateOnly,
}

impl SigmaSpace {
    /// Dimension spanned by the sigma points for a given state and output size.
    pub fn dimension(&self, n: usize, ny: usize) -> usize {
        match self {
            SigmaSpace::Augmented => 2 * n + ny,
            SigmaSpace::StateOnly => n,
        }
    }
}

/// Scaled unscented transform weights.
#[derive(Clone, Debug, PartialEq)]
pub struct UtWeights {
    pub n_aug: usize,
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub wm: DVector<f64>,
    pub wc: DVector<f64>,
}

/// Weights for dimension `n_aug`; `lambda = alpha^2 (n_aug + kappa) - n_aug`.
pub fn ut_weights(n_aug: usize, alpha: f64, beta: f64, kappa: f64) -> Result<UtWeights> {
    let n = n_aug as f64;
    let lambda = alpha * alpha * (n + kappa) - n;
    if !(n + lambda > 0.0) || !alpha.is_finite() {
        return Err(Error::Parameter(format!(
            "unscented scaling n + lambda = {} must be positive (alpha {alpha}, kappa {kappa})",
            n + lambda
        )));
    }
    let count = 2 * n_aug + 1;
    let wl = 1.0 / (2.0 * (n + lambda));
    let mut wm = DVector::from_element(count, wl);
    let mut wc = wm.clone();
    wm[0] = lambda / (n + lambda);
    wc[0] = lambda / (n + lambda) + 1.0 - alpha * alpha + beta;
    Ok(UtWeights {
        n_aug,
        alpha,
        beta,
        kappa,
        lambda,
        gamma: (n + lambda).sqrt(),
        wm,
        wc,
    })
}

impl UtWeights {
    /// Weights with `kappa = 3 - n_aug`.
    pub fn standard(n_aug: usize, alpha: f64, beta: f64) -> Result<Self> {
        ut_weights(n_aug, alpha, beta, 3.0 - n_aug as f64)
    }

    pub fn count(&self) -> usize {
        2 * self.n_aug + 1
    }

    /// Weight shared by all non-central points.
    pub fn w_point(&self) -> f64 {
        self.wm[1.min(self.wm.len() - 1)]
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Lower Cholesky factor, retrying with diagonal jitter. Returns the jitter used.
pub fn matrix_sqrt(cov: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let mut sym = cov.clone();
    symmetrize(&mut sym);
    if let Some(c) = sym.clone().cholesky() {
        return Ok((c.l(), 0.0));
    }
    let n = sym.nrows();
    for eps in JITTER_LEVELS {
        let jittered = &sym + DMatrix::identity(n, n) * eps;
        if let Some(c) = jittered.cholesky() {
            return Ok((c.l(), eps));
        }
    }
    Err(Error::CovarianceCollapse {
        jitter: JITTER_LEVELS[JITTER_LEVELS.len() - 1],
    })
}

/// Sigma points as columns: mean, then `mean + gamma S e_l`, then `mean - gamma S e_l`.
pub fn sigma_points(belief: &GaussianBelief, gamma: f64) -> Result<(DMatrix<f64>, f64)> {
    let n = belief.dim();
    let (s, jitter) = matrix_sqrt(&belief.cov)?;
    let mut pts = DMatrix::zeros(n, 2 * n + 1);
    pts.set_column(0, &belief.mean);
    for l in 0..n {
        let d = s.column(l) * gamma;
        pts.set_column(1 + l, &(&belief.mean + &d));
        pts.set_column(1 + n + l, &(&belief.mean - &d));
    }
    Ok((pts, jitter))
}

/// Weighted mean and covariance of transformed points.
///
/// Deviations are taken from the central point so the large negative
/// central weight of small-alpha transforms never multiplies a full vector.
pub fn weighted_moments(points: &DMatrix<f64>, w: &UtWeights) -> (DVector<f64>, DMatrix<f64>) {
    let (mean, cov, _) = weighted_cross(points, points, w);
    (mean, cov)
}

fn weighted_cross(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &UtWeights) -> (DVector<f64>, DMatrix<f64>, DVector<f64>) {
    let a0 = a.column(0).into_owned();
    let b0 = b.column(0).into_owned();
    let count = a.ncols();
    let mut da = DMatrix::zeros(a.nrows(), count - 1);
    let mut db = DMatrix::zeros(b.nrows(), count - 1);
    for l in 1..count {
        da.set_column(l - 1, &(a.column(l) - &a0));
        db.set_column(l - 1, &(b.column(l) - &b0));
    }
    let wl = DVector::from_iterator(count - 1, w.wm.iter().skip(1).copied());
    let delta_a = &da * &wl;
    let delta_b = &db * &wl;
    let mut scaled_b = db.clone();
    for (l, mut col) in scaled_b.column_iter_mut().enumerate() {
        col *= w.wc[l + 1];
    }
    // The central weights enter only through a rank-one correction:
    // sum_l wc_l (a_l - a_bar)(b_l - b_bar)^T equals sum_{l>0} w_l d_l e_l^T
    // plus (wc_0 - wm_0 - 1) delta_a delta_b^T.
    let correction = w.wc[0] - w.wm[0] - 1.0;
    let cov = &da * scaled_b.transpose() + (&delta_a * delta_b.transpose()) * correction;
    (&a0 + &delta_a, cov, &b0 + &delta_b)
}

/// Result of one predict/update cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub prior: GaussianBelief,
    pub posterior: GaussianBelief,
    pub predicted_output: DVector<f64>,
    pub innovation_cov: DMatrix<f64>,
    pub jitter: f64,
}

/// Noise and weight settings of one filter.
#[derive(Clone, Debug, PartialEq)]
pub struct UkfSettings {
    pub weights: UtWeights,
    pub space: SigmaSpace,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl UkfSettings {
    pub fn new(space: SigmaSpace, alpha: f64, beta: f64, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let n = q.nrows();
        let ny = r.nrows();
        let weights = UtWeights::standard(space.dimension(n, ny), alpha, beta)?;
        Ok(Self { weights, space, q, r })
    }

    pub fn state_dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.r.nrows()
    }
}

/// Sigma points of the (possibly augmented) belief, split into state, process-noise and
/// measurement-noise rows.
pub struct SigmaSet {
    pub state: DMatrix<f64>,
    pub process_noise: Option<DMatrix<f64>>,
    pub measurement_noise: Option<DMatrix<f64>>,
    pub jitter: f64,
}

pub fn build_sigma_set(belief: &GaussianBelief, s: &UkfSettings) -> Result<SigmaSet> {
    let n = s.state_dim();
    let ny = s.output_dim();
    match s.space {
        SigmaSpace::StateOnly => {
            let (pts, jitter) = sigma_points(belief, s.weights.gamma)?;
            Ok(SigmaSet {
                state: pts,
                process_noise: None,
                measurement_noise: None,
                jitter,
            })
        }
        SigmaSpace::Augmented => {
            let na = 2 * n + ny;
            let mut mean = DVector::zeros(na);
            mean.rows_mut(0, n).copy_from(&belief.mean);
            let mut cov = DMatrix::zeros(na, na);
            cov.view_mut((0, 0), (n, n)).copy_from(&belief.cov);
            cov.view_mut((n, n), (n, n)).copy_from(&s.q);
            cov.view_mut((2 * n, 2 * n), (ny, ny)).copy_from(&s.r);
            let (pts, jitter) = sigma_points(&GaussianBelief { mean, cov }, s.weights.gamma)?;
            Ok(SigmaSet {
                state: pts.rows(0, n).into_owned(),
                process_noise: Some(pts.rows(n, n).into_owned()),
                measurement_noise: Some(pts.rows(2 * n, ny).into_owned()),
                jitter,
            })
        }
    }
}

/// Propagate sigma points through the process map.
///
/// `process(l, x)` receives the index of the sigma point so callers can pair
/// it with externally generated points.
pub fn predict<F>(set: &SigmaSet, s: &UkfSettings, process: F) -> Result<(DMatrix<f64>, GaussianBelief)>
where
    F: Fn(usize, &DVector<f64>) -> Result<DVector<f64>>,
{
    let n = s.state_dim();
    let count = set.state.ncols();
    let mut out = DMatrix::zeros(n, count);
    for l in 0..count {
        let x = set.state.column(l).into_owned();
        let mut y = process(l, &x)?;
        if let Some(w) = &set.process_noise {
            y += w.column(l);
        }
        out.set_column(l, &y);
    }
    let (mean, mut cov) = weighted_moments(&out, &s.weights);
    if set.process_noise.is_none() {
        cov += &s.q;
    }
    symmetrize(&mut cov);
    Ok((out, GaussianBelief { mean, cov }))
}

/// Measurement update of predicted points against observation `y`.
pub fn correct<H>(
    set: &SigmaSet,
    propagated: &DMatrix<f64>,
    prior: &GaussianBelief,
    s: &UkfSettings,
    measure: H,
    y: &DVector<f64>,
) -> Result<(GaussianBelief, DVector<f64>, DMatrix<f64>)>
where
    H: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let ny = s.output_dim();
    let count = propagated.ncols();
    let mut outputs = DMatrix::zeros(ny, count);
    for l in 0..count {
        let mut o = measure(&propagated.column(l).into_owned())?;
        if let Some(v) = &set.measurement_noise {
            o += v.column(l);
        }
        outputs.set_column(l, &o);
    }
    let (y_hat, mut p_y) = weighted_moments(&outputs, &s.weights);
    if set.measurement_noise.is_none() {
        p_y += &s.r;
    }
    symmetrize(&mut p_y);
    let (_, p_xy, _) = weighted_cross(propagated, &outputs, &s.weights);
    let chol = p_y.clone().cholesky().ok_or(Error::SingularInnovation)?;
    // K = P_xy P_y^-1, solved as P_y K^T = P_xy^T.
    let gain = chol.solve(&p_xy.transpose()).transpose();
    let mean = &prior.mean + &gain * (y - &y_hat);
    let mut cov = &prior.cov - &gain * &p_y * gain.transpose();
    symmetrize(&mut cov);
    Ok((GaussianBelief { mean, cov }, y_hat, p_y))
}

/// One full unscented Kalman step.
pub fn unscented_step<F, H>(belief: &GaussianBelief, s: &UkfSettings, process: F, measure: H, y: &DVector<f64>) -> Result<StepOutput>
where
    F: Fn(usize, &DVector<f64>) -> Result<DVector<f64>>,
    H: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let set = build_sigma_set(belief, s)?;
    let (propagated, prior) = predict(&set, s, process)?;
    let (posterior, predicted_output, innovation_cov) = correct(&set, &propagated, &prior, s, measure, y)?;
    Ok(StepOutput {
        prior,
        posterior,
        predicted_output,
        innovation_cov,
        jitter: set.jitter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn weight_formulas() {
        let w = ut_weights(6, 1.0, 0.0, -3.0).unwrap();
        assert_relative_eq!(w.lambda, -3.0);
        assert_relative_eq!(w.wm[0], -1.0, epsilon = 1e-15);
        assert_relative_eq!(w.wm[1], 1.0 / 6.0, epsilon = 1e-15);
        assert_relative_eq!(w.wm.sum(), 1.0, epsilon = 1e-12);
        let p = UtWeights::standard(14, 0.0245, 2.0).unwrap();
        assert_relative_eq!(p.gamma, 0.0245 * 3f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(p.wm.sum(), 1.0, epsilon = 1e-9);
        assert_relative_eq!(p.wc[0] - p.wm[0], 1.0 - 0.0245 * 0.0245 + 2.0, max_relative = 1e-12);
        assert!(ut_weights(3, 1.0, 2.0, -3.0).is_err());
    }

    #[test]
    fn matrix_sqrt_examples() {
        let (l, j) = matrix_sqrt(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(l, DMatrix::identity(3, 3));
        assert_eq!(j, 0.0);
        let (l, _) = matrix_sqrt(&DMatrix::from_diagonal(&DVector::from_row_slice(&[4.0, 9.0]))).unwrap();
        assert_relative_eq!(l, DMatrix::from_diagonal(&DVector::from_row_slice(&[2.0, 3.0])));
        // Rank deficient needs jitter.
        let (_, j) = matrix_sqrt(&DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0])).unwrap();
        assert!(j > 0.0);
        assert!(matches!(
            matrix_sqrt(&DMatrix::from_diagonal(&DVector::from_row_slice(&[1.0, -1.0]))),
            Err(Error::CovarianceCollapse { .. })
        ));
    }

    #[test]
    fn sigma_points_reconstruct_belief() {
        let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
        let b = GaussianBelief::new(DVector::from_row_slice(&[1.0, -2.0, 3.0]), cov.clone()).unwrap();
        for alpha in [1e-2, 0.5, 1.0] {
            let w = UtWeights::standard(3, alpha, 2.0).unwrap();
            let (pts, _) = sigma_points(&b, w.gamma).unwrap();
            let (m, p) = weighted_moments(&pts, &w);
            assert!((m - &b.mean).amax() < 1e-10);
            assert!((p - &cov).amax() < 1e-10);
        }
        let zero = GaussianBelief::new(DVector::from_element(2, 5.0), DMatrix::zeros(2, 2)).unwrap();
        let (pts, _) = sigma_points(&zero, 1.0).unwrap();
        assert!(pts.iter().all(|&v| (v - 5.0).abs() < 1e-5));
    }

    #[test]
    fn exact_measurement_pulls_mean_to_observation() {
        let b = GaussianBelief::new(DVector::from_row_slice(&[0.0, 0.0]), DMatrix::identity(2, 2)).unwrap();
        let s = UkfSettings::new(SigmaSpace::Augmented, 0.5, 2.0, DMatrix::zeros(2, 2), DMatrix::identity(2, 2) * 1e-12)
            .unwrap();
        let y = DVector::from_row_slice(&[1.5, -0.5]);
        let out = unscented_step(&b, &s, |_, x| Ok(x.clone()), |x| Ok(x.clone()), &y).unwrap();
        assert!((out.posterior.mean - y).amax() < 1e-6);
    }

    #[test]
    fn identity_dynamics_never_grow_covariance() {
        let mut b = GaussianBelief::new(DVector::from_row_slice(&[0.3, 0.2]), DMatrix::identity(2, 2)).unwrap();
        let s = UkfSettings::new(SigmaSpace::Augmented, 0.3, 2.0, DMatrix::zeros(2, 2), DMatrix::identity(1, 1) * 1e-9)
            .unwrap();
        let mut prev = b.cov.trace();
        for _ in 0..5 {
            let y = DVector::from_row_slice(&[0.1]);
            b = unscented_step(&b, &s, |_, x| Ok(x.clone()), |x| Ok(DVector::from_row_slice(&[x[0] + x[1]])), &y)
                .unwrap()
                .posterior;
            assert!(b.cov.trace() <= prev + 1e-14);
            prev = b.cov.trace();
        }
    }
}
