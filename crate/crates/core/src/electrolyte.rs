//! Reduction of electrolyte diffusion to a two-tank model.
//!
//! [`ElectrolyteTf`] evaluates the exact transcendental transfer function
//! from cell current to electrolyte concentration at the negative current
//! collector. Its low-frequency moments are matched by a second-order Padé
//! form `gamma (beta s + g) / (s (beta (1 - beta) s + g))`, giving
//! [`EhmParams`], which [`ehm_discretize`] turns into the two Ce rows of the
//! cell state update.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cell::{effective_transport, electrolyte_diffusivity_ref, CellParams};
use crate::consts::FARADAY;
use crate::error::{Error, Result};

/// Relative agreement required between the two moment extraction methods.
pub const MOMENT_AGREEMENT: f64 = 1e-8;

const CONTOUR_POINTS: usize = 128;

/// One spatial region of the cell sandwich.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub eps_e: f64,
    /// Effective diffusivity, m^2/s.
    pub diffusivity: f64,
    /// Thickness, m.
    pub thickness: f64,
}

impl Region {
    fn alpha(&self) -> f64 {
        (self.eps_e / self.diffusivity).sqrt()
    }
}

/// Exact electrolyte transfer function `Ce(0, s) / J(s)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ElectrolyteTf {
    pub negative: Region,
    pub separator: Region,
    pub positive: Region,
    pub t_plus: f64,
    /// Electrode cross-section, m^2.
    pub area: f64,
}

/// `sinh(z) e^-z` and `cosh(z) e^-z`, accurate for small and large `|z|`.
fn scaled_hyperbolic(z: Complex64) -> (Complex64, Complex64) {
    if z.norm() < 0.5 {
        let e = (-z).exp();
        (z.sinh() * e, z.cosh() * e)
    } else {
        let e2 = (-2.0 * z).exp();
        ((1.0 - e2) * 0.5, (1.0 + e2) * 0.5)
    }
}

/// Truncated power series in `s`, lowest order first.
type Series = Vec<f64>;

fn series_mul(a: &[f64], b: &[f64], n: usize) -> Series {
    let mut out = vec![0.0; n];
    for (i, &x) in a.iter().enumerate().take(n) {
        for (j, &y) in b.iter().enumerate().take(n - i) {
            out[i + j] += x * y;
        }
    }
    out
}

fn series_mul3(a: &[f64], b: &[f64], c: &[f64], n: usize) -> Series {
    series_mul(&series_mul(a, b, n), c, n)
}

fn series_axpy(acc: &mut [f64], k: f64, x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += k * b;
    }
}

/// `sinh(a u) / u` and `cosh(a u)` as series in `s = u^2`.
fn hyperbolic_series(a: f64, n: usize) -> (Series, Series) {
    let mut s = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    let mut term_c = 1.0;
    let mut term_s = a;
    for k in 0..n {
        c.push(term_c);
        s.push(term_s);
        let k2 = 2.0 * k as f64;
        term_c *= a * a / ((k2 + 1.0) * (k2 + 2.0));
        term_s *= a * a / ((k2 + 2.0) * (k2 + 3.0));
    }
    (s, c)
}

impl ElectrolyteTf {
    /// Transfer function for a parameter set, with diffusivities taken at the
    /// initial concentration and reference temperature.
    pub fn from_params(p: &CellParams) -> Result<Self> {
        let el = &p.electrolyte;
        let d = electrolyte_diffusivity_ref(el.initial_concentration)? * el.diffusivity_scale;
        let region = |eps: f64, thickness: f64| -> Result<Region> {
            Ok(Region {
                eps_e: eps,
                diffusivity: effective_transport(d, eps, el.bruggeman)?,
                thickness,
            })
        };
        let tf = Self {
            negative: region(p.negative.eps_e, p.negative.thickness)?,
            separator: region(el.separator_eps_e, el.separator_thickness)?,
            positive: region(p.positive.eps_e, p.positive.thickness)?,
            t_plus: el.t_plus,
            area: p.area,
        };
        tf.validate()?;
        Ok(tf)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("negative", &self.negative), ("separator", &self.separator), ("positive", &self.positive)] {
            if !(r.eps_e > 0.0 && r.eps_e <= 1.0 && r.diffusivity > 0.0 && r.thickness > 0.0) {
                return Err(Error::Parameter(format!("invalid {name} electrolyte region {r:?}")));
            }
        }
        if !(self.t_plus > 0.0 && self.t_plus < 1.0 && self.area > 0.0) {
            return Err(Error::Parameter("transference number or area out of range".into()));
        }
        Ok(())
    }

    /// Source coefficient of the negative region, positive.
    pub fn b_negative(&self) -> f64 {
        (1.0 - self.t_plus) / (FARADAY * self.negative.thickness * self.area)
    }

    /// Source coefficient of the positive region, negative.
    pub fn b_positive(&self) -> f64 {
        -(1.0 - self.t_plus) / (FARADAY * self.positive.thickness * self.area)
    }

    /// Evaluate `Ce(0, s) / J(s)` at a nonzero complex frequency.
    pub fn eval(&self, s: Complex64) -> Result<Complex64> {
        if s == Complex64::new(0.0, 0.0) {
            return Err(Error::TfEvaluation(s));
        }
        let (n, sep, p) = (&self.negative, &self.separator, &self.positive);
        let (an, asp, ap) = (n.alpha(), sep.alpha(), p.alpha());
        let root = s.sqrt();
        let zn = root * (an * n.thickness);
        let zs = root * (asp * sep.thickness);
        let zp = root * (ap * p.thickness);
        let (shn, chn) = scaled_hyperbolic(zn);
        let (shs, chs) = scaled_hyperbolic(zs);
        let (shp, chp) = scaled_hyperbolic(zp);
        let en = (-zn).exp();
        let es = (-zs).exp();
        let d = n.diffusivity;

        // Both numerator and denominator carry the common factor e^-(zn+zs+zp).
        let t1 = an * p.eps_e * shn * shp * shs;
        let t2 = asp * p.eps_e * chn * chs * shp;
        let t3 = an * ap * asp * d * chp * chs * shn;
        let t4 = ap * sep.eps_e * chn * chp * shs;
        let t5 = -asp * p.eps_e * chs * shp * en;
        let t6 = -ap * sep.eps_e * chp * shs * en;
        let t7 = -self.b_positive() * asp * n.eps_e * shp * en * es;
        let num = self.b_negative() * (t1 + t2 + t3 + t4 + t5 + t6) + t7;
        let den = n.eps_e * s * (t2 + t4 + t1 + t3);
        let out = num / den;
        if !(out.re.is_finite() && out.im.is_finite()) || den.norm() == 0.0 {
            return Err(Error::TfEvaluation(s));
        }
        Ok(out)
    }

    /// Taylor coefficients of `s * TF(s)` at the origin by exact series expansion.
    pub fn moments_series(&self, count: usize) -> Result<Vec<f64>> {
        let k = count + 2;
        let (n, sep, p) = (&self.negative, &self.separator, &self.positive);
        let (an, asp, ap) = (n.alpha(), sep.alpha(), p.alpha());
        let (sn, cn) = hyperbolic_series(an * n.thickness, k);
        let (ss, cs) = hyperbolic_series(asp * sep.thickness, k);
        let (sp, cp) = hyperbolic_series(ap * p.thickness, k);
        let d = n.diffusivity;

        let mut triple = vec![0.0];
        triple.extend(series_mul3(&sn, &sp, &ss, k - 1));
        let t2 = series_mul3(&cn, &cs, &sp, k);
        let t3 = series_mul3(&cp, &cs, &sn, k);
        let t4 = series_mul3(&cn, &cp, &ss, k);
        let t5 = series_mul(&cs, &sp, k);
        let t6 = series_mul(&cp, &ss, k);

        let mut den = vec![0.0; k];
        series_axpy(&mut den, asp * p.eps_e, &t2);
        series_axpy(&mut den, ap * sep.eps_e, &t4);
        series_axpy(&mut den, an * p.eps_e, &triple);
        series_axpy(&mut den, an * ap * asp * d, &t3);

        let mut inner = den.clone();
        series_axpy(&mut inner, -asp * p.eps_e, &t5);
        series_axpy(&mut inner, -ap * sep.eps_e, &t6);
        let mut num = vec![0.0; k];
        series_axpy(&mut num, self.b_negative(), &inner);
        series_axpy(&mut num, -self.b_positive() * asp * n.eps_e, &sp);

        for v in den.iter_mut() {
            *v *= n.eps_e;
        }
        if den[0] == 0.0 || !den[0].is_finite() {
            return Err(Error::Precision("denominator series vanishes at the origin".into()));
        }
        // Series division num / den.
        let mut out = vec![0.0; count];
        for i in 0..count {
            let mut acc = num[i];
            for j in 0..i {
                acc -= out[j] * den[i - j];
            }
            out[i] = acc / den[0];
        }
        Ok(out)
    }

    /// Taylor coefficients of `s * TF(s)` by trapezoidal Cauchy integrals on a small circle.
    pub fn moments_contour(&self, count: usize) -> Result<Vec<f64>> {
        let rate = [&self.negative, &self.separator, &self.positive]
            .iter()
            .map(|r| r.diffusivity / r.eps_e)
            .fold(f64::INFINITY, f64::min);
        let total = self.negative.thickness + self.separator.thickness + self.positive.thickness;
        let radius = 0.5 * rate / (total * total);
        let mut acc = vec![Complex64::new(0.0, 0.0); count];
        for j in 0..CONTOUR_POINTS {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / CONTOUR_POINTS as f64;
            let w = Complex64::from_polar(1.0, theta);
            let s = w * radius;
            let g = s * self.eval(s)?;
            let mut wk = Complex64::new(1.0, 0.0);
            for a in acc.iter_mut() {
                *a += g / wk;
                wk *= w;
            }
        }
        Ok(acc
            .iter()
            .enumerate()
            .map(|(k, a)| a.re / CONTOUR_POINTS as f64 / radius.powi(k as i32))
            .collect())
    }
}

/// First `count` moments of `s * TF(s)`, cross-checked by two independent methods.
pub fn tf_moments(tf: &ElectrolyteTf, count: usize) -> Result<Vec<f64>> {
    let a = tf.moments_series(count)?;
    let b = tf.moments_contour(count)?;
    for (k, (x, y)) in a.iter().zip(&b).enumerate() {
        let rel = (x - y).abs() / x.abs().max(f64::MIN_POSITIVE);
        if !(rel <= MOMENT_AGREEMENT) {
            return Err(Error::Precision(format!(
                "moment {k}: series {x:e} vs contour {y:e} (relative gap {rel:e})"
            )));
        }
    }
    Ok(a)
}

/// Second-order equivalent hydraulic model of electrolyte diffusion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EhmParams {
    /// Input gain, mol m^-3 A^-1 s^-1.
    pub gamma: f64,
    /// Tank split, in (0, 1).
    pub beta: f64,
    /// Inter-tank conductance, 1/s.
    pub g: f64,
}

impl EhmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Parameter(format!("reduced beta {} must lie in (0, 1)", self.beta)));
        }
        if !(self.g > 0.0 && self.g.is_finite() && self.gamma.is_finite() && self.gamma != 0.0) {
            return Err(Error::Parameter(format!("invalid reduced parameters {self:?}")));
        }
        Ok(())
    }

    /// `beta (1 - beta)`.
    pub fn b(&self) -> f64 {
        self.beta * (1.0 - self.beta)
    }

    /// First three Taylor coefficients of `s * transfer(s)`.
    pub fn moments(&self) -> [f64; 3] {
        let b2 = self.beta * self.beta;
        [
            self.gamma,
            self.gamma * b2 / self.g,
            -self.gamma * b2 * self.b() / (self.g * self.g),
        ]
    }

    /// `gamma (beta s + g) / (s (b s + g))`.
    pub fn transfer(&self, s: Complex64) -> Complex64 {
        self.gamma * (self.beta * s + self.g) / (s * (self.b() * s + self.g))
    }

    /// `s * transfer(s)`, finite at the origin.
    pub fn transfer_times_s(&self, s: Complex64) -> Complex64 {
        self.gamma * (self.beta * s + self.g) / (self.b() * s + self.g)
    }
}

/// Match the first three moments with the Padé form.
pub fn pade_fit(m: [f64; 3]) -> Result<EhmParams> {
    let infeasible = |beta: f64| Error::InfeasibleReduction { beta, moments: m };
    if m[0] == 0.0 || !m.iter().all(|v| v.is_finite()) {
        return Err(infeasible(f64::NAN));
    }
    let r1 = m[1] / m[0];
    let r2 = m[2] / m[0];
    if !(r1 > 0.0) {
        return Err(infeasible(f64::NAN));
    }
    let q = -r2 / (r1 * r1);
    let beta = 1.0 / (1.0 + q);
    if !(beta > 0.0 && beta < 1.0) {
        return Err(infeasible(beta));
    }
    Ok(EhmParams {
        gamma: m[0],
        beta,
        g: beta * beta / r1,
    })
}

/// Forward-Euler discretisation: transition block and input column.
pub fn ehm_discretize(p: &EhmParams, ts: f64) -> Result<(Matrix2<f64>, Vector2<f64>)> {
    let k = p.g / p.b() * ts;
    if !(ts >= 0.0 && k < 1.0) {
        return Err(Error::Parameter(format!(
            "sample time {ts} s gives relaxation coefficient {k}, must be below 1"
        )));
    }
    let a = Matrix2::new(1.0, 0.0, k, 1.0 - k);
    let b = Vector2::new(ts * p.gamma, ts * p.gamma / (1.0 - p.beta));
    Ok((a, b))
}

/// Reduced electrolyte parameters for a cell at its reference temperature.
pub fn reduce(p: &CellParams) -> Result<EhmParams> {
    let tf = ElectrolyteTf::from_params(p)?;
    let m = tf_moments(&tf, 3)?;
    pade_fit([m[0], m[1], m[2]])
}

/// Worst relative gap `|TF - Pade| / |TF|` on `omega in [0, g/b]` over `points` samples.
pub fn pade_fidelity(tf: &ElectrolyteTf, ehm: &EhmParams, points: usize) -> Result<f64> {
    let wc = ehm.g / ehm.b();
    let mut worst: f64 = 0.0;
    for i in 0..=points {
        let w = wc * i as f64 / points.max(1) as f64;
        let (exact, approx) = if i == 0 {
            let m = tf_moments(tf, 1)?;
            (Complex64::new(m[0], 0.0), Complex64::new(ehm.gamma, 0.0))
        } else {
            let s = Complex64::new(0.0, w);
            (tf.eval(s)?, ehm.transfer(s))
        };
        worst = worst.max((exact - approx).norm() / exact.norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference_tf() -> ElectrolyteTf {
        ElectrolyteTf::from_params(&CellParams::reference()).unwrap()
    }

    #[test]
    fn dc_gain_matches_series_moment() {
        let tf = reference_tf();
        let m = tf.moments_series(3).unwrap();
        let s = Complex64::new(1e-9, 0.0);
        let g = s * tf.eval(s).unwrap();
        assert_relative_eq!(g.re, m[0], max_relative = 1e-6);
    }

    #[test]
    fn dc_gain_equals_total_electrolyte_volume_oracle() {
        // A uniform source (1 - t+) J / F spread over the whole electrolyte volume.
        let tf = reference_tf();
        let vol = tf.area
            * (tf.negative.eps_e * tf.negative.thickness
                + tf.separator.eps_e * tf.separator.thickness
                + tf.positive.eps_e * tf.positive.thickness);
        let m = tf.moments_series(1).unwrap();
        assert_relative_eq!(m[0], 2.0 * (1.0 - tf.t_plus) / (FARADAY * vol), max_relative = 1e-12);
    }

    #[test]
    fn conjugate_symmetry_and_real_axis() {
        let tf = reference_tf();
        for s in [Complex64::new(0.01, 0.03), Complex64::new(-0.002, 0.5), Complex64::new(3.0, -40.0)] {
            let a = tf.eval(s.conj()).unwrap();
            let b = tf.eval(s).unwrap().conj();
            assert!((a - b).norm() <= 1e-12 * a.norm());
        }
        for x in [1e-4, 0.1, 10.0, 1e4] {
            let v = tf.eval(Complex64::new(x, 0.0)).unwrap();
            assert!(v.im.abs() <= 1e-12 * v.norm());
        }
    }

    #[test]
    fn large_frequency_does_not_overflow() {
        let tf = reference_tf();
        let v = tf.eval(Complex64::new(0.0, 1e8)).unwrap();
        assert!(v.norm().is_finite());
        assert!(tf.eval(Complex64::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn series_and_contour_agree() {
        let tf = reference_tf();
        let a = tf.moments_series(3).unwrap();
        let b = tf.moments_contour(3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, max_relative = MOMENT_AGREEMENT);
        }
    }

    #[test]
    fn diffusivity_scaling_rescales_time_moments() {
        let tf = reference_tf();
        let mut fast = tf.clone();
        let c = 3.0;
        for r in [&mut fast.negative, &mut fast.separator, &mut fast.positive] {
            r.diffusivity *= c;
        }
        let m = tf_moments(&tf, 3).unwrap();
        let f = tf_moments(&fast, 3).unwrap();
        assert_relative_eq!(f[0], m[0], max_relative = 1e-10);
        assert_relative_eq!(f[1], m[1] / c, max_relative = 1e-10);
        assert_relative_eq!(f[2], m[2] / (c * c), max_relative = 1e-10);
    }

    #[test]
    fn pade_round_trip() {
        let p = EhmParams { gamma: 2.0, beta: 0.4, g: 0.01 };
        let back = pade_fit(p.moments()).unwrap();
        assert_relative_eq!(back.gamma, 2.0, max_relative = 1e-12);
        assert_relative_eq!(back.beta, 0.4, max_relative = 1e-12);
        assert_relative_eq!(back.g, 0.01, max_relative = 1e-12);

        let half = EhmParams { gamma: 1.0, beta: 0.5, g: 0.2 };
        assert_relative_eq!(pade_fit(half.moments()).unwrap().beta, 0.5, max_relative = 1e-12);
    }

    #[test]
    fn infeasible_moments_are_reported() {
        // Positive second moment makes beta exceed one.
        match pade_fit([1.0, 2.0, 1.0]) {
            Err(Error::InfeasibleReduction { beta, moments }) => {
                assert!(beta > 1.0);
                assert_eq!(moments, [1.0, 2.0, 1.0]);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(pade_fit([0.0, 1.0, -1.0]).is_err());
    }

    #[test]
    fn reference_reduction_is_accurate() {
        let tf = reference_tf();
        let ehm = reduce(&CellParams::reference()).unwrap();
        assert!(ehm.beta > 0.0 && ehm.beta < 1.0);
        assert!(pade_fidelity(&tf, &ehm, 200).unwrap() <= 0.05);
    }

    #[test]
    fn discretize_zero_step_is_identity() {
        let p = EhmParams { gamma: 2.0, beta: 0.3, g: 0.01 };
        let (a, b) = ehm_discretize(&p, 0.0).unwrap();
        assert_eq!(a, Matrix2::identity());
        assert_eq!(b, Vector2::zeros());
        assert!(ehm_discretize(&p, 1e3).is_err());
    }

    #[test]
    fn discrete_step_response_matches_continuous() {
        let p = EhmParams { gamma: 2.1, beta: 0.28, g: 0.0102 };
        let ts = 0.01;
        let (a, b) = ehm_discretize(&p, ts).unwrap();
        let mut x = Vector2::zeros();
        let steps = (100.0 / ts) as usize;
        for k in 1..=steps {
            x = a * x + b;
            if k % 1000 == 0 {
                let t = k as f64 * ts;
                let exact = p.gamma * t + p.gamma * p.beta * p.beta / p.g * (1.0 - (-p.g / p.b() * t).exp());
                assert!((x[1] - exact).abs() <= 0.005 * exact.abs(), "t={t}: {} vs {exact}", x[1]);
            }
        }
        // Fixed point of the second row under zero input.
        let y = a * Vector2::new(5.0, 5.0);
        assert_relative_eq!(y[1], 5.0, max_relative = 1e-15);
    }
}
