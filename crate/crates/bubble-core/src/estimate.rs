//! Statistical layer: volatility from quadratic variation, the Girsanov
//! likelihood for (a, b) with its closed-form profile in a, pseudo-period
//! estimators from the likelihood and from zero-crossing times, and the
//! two-epoch comparison arithmetic.

use serde::Serialize;

use crate::error::{BubbleError, Result};

/// Uniformly sampled scalar observations of the price.
#[derive(Debug, Clone)]
pub struct ObservedSeries {
    pub dt: f64,
    pub x: Vec<f64>,
}

impl ObservedSeries {
    pub fn new(dt: f64, x: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(BubbleError::InvalidInput("dt must be positive".into()));
        }
        if x.len() < 2 {
            return Err(BubbleError::InvalidInput(
                "a series needs at least two samples".into(),
            ));
        }
        Ok(Self { dt, x })
    }

    pub fn t_total(&self) -> f64 {
        self.dt * (self.x.len() - 1) as f64
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dt: self.dt,
            x: self.x.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Volatility estimate c_hat = sqrt(QV/t): the quadratic variation of X is
/// c^2 t (only X carries the noise), so the display "c* = <X>_t / t" is read
/// as an estimate of c*^2 and the square root is returned.
pub fn quadratic_variation_c(series: &ObservedSeries) -> Result<f64> {
    if series.x.len() < 100 {
        return Err(BubbleError::InvalidInput(
            "quadratic variation needs at least 100 samples".into(),
        ));
    }
    let qv: f64 = series.x.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok((qv / series.t_total()).sqrt())
}

/// Memory process Y^b along the series: Y^b_t = b int_0^t e^{b(s-t)} dX_s -
/// b X_t, via the per-step exponential recursion (exact when X is linear on
/// each step), O(n) total.
pub fn y_process(series: &ObservedSeries, b: f64) -> Result<Vec<f64>> {
    if !(b > 0.0) {
        return Err(BubbleError::InvalidParameter(format!(
            "y_process requires b > 0, got {b}"
        )));
    }
    let dt = series.dt;
    let decay = (-b * dt).exp();
    let gain = (1.0 - decay) / dt;
    let mut m = 0.0f64;
    let mut out = Vec::with_capacity(series.x.len());
    out.push(-b * series.x[0]);
    for w in series.x.windows(2) {
        m = decay * m + gain * (w[1] - w[0]);
        out.push(m - b * w[1]);
    }
    Ok(out)
}

/// Same process through the integration-by-parts form
/// Y^b_t = -b e^{-bt} X_0 - b^2 e^{-bt} int_0^t e^{bs} X_s ds (trapezoid).
/// Agrees with `y_process` to discretization error; kept as a cross-check.
pub fn y_process_by_parts(series: &ObservedSeries, b: f64) -> Result<Vec<f64>> {
    if !(b > 0.0) {
        return Err(BubbleError::InvalidParameter(format!(
            "y_process requires b > 0, got {b}"
        )));
    }
    let dt = series.dt;
    let decay = (-b * dt).exp();
    let mut integral = 0.0f64; // e^{-b t_k} int_0^{t_k} e^{bs} X_s ds
    let mut out = Vec::with_capacity(series.x.len());
    out.push(-b * series.x[0]);
    for (k, w) in series.x.windows(2).enumerate() {
        integral = decay * integral + 0.5 * dt * (decay * w[0] + w[1]);
        let t = dt * (k + 1) as f64;
        out.push(-b * (-b * t).exp() * series.x[0] - b * b * integral);
    }
    Ok(out)
}

/// Quadrature rule for the likelihood time integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Quadrature {
    Trapezoid,
    RiemannLeft,
}

fn integrate(values: impl Iterator<Item = f64>, dt: f64, rule: Quadrature) -> f64 {
    let vals: Vec<f64> = values.collect();
    match rule {
        Quadrature::Trapezoid => {
            let inner: f64 = vals[1..vals.len() - 1].iter().sum();
            dt * (0.5 * vals[0] + inner + 0.5 * vals[vals.len() - 1])
        }
        Quadrature::RiemannLeft => dt * vals[..vals.len() - 1].iter().sum::<f64>(),
    }
}

/// Robust (Ito-free) log-likelihood of (a, b) on a c-normalized series:
/// L = (b-a)/2 [X_t^2 - t] + X_t Y_t + int b^2 X^2 + b X Y - ((b-a)X + Y)^2/2.
pub fn log_likelihood_with(
    series: &ObservedSeries,
    a: f64,
    b: f64,
    rule: Quadrature,
) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(BubbleError::InvalidParameter(format!(
            "likelihood requires a, b > 0, got ({a}, {b})"
        )));
    }
    let y = y_process(series, b)?;
    let t = series.t_total();
    let n = series.x.len();
    let (x_t, y_t) = (series.x[n - 1], y[n - 1]);
    let integrand = series.x.iter().zip(&y).map(|(&x, &yv)| {
        b * b * x * x + b * x * yv - 0.5 * ((b - a) * x + yv).powi(2)
    });
    Ok((b - a) / 2.0 * (x_t * x_t - t) + x_t * y_t + integrate(integrand, series.dt, rule))
}

pub fn log_likelihood(series: &ObservedSeries, a: f64, b: f64) -> Result<f64> {
    log_likelihood_with(series, a, b, Quadrature::Trapezoid)
}

/// Closed-form maximizer of a -> L(a, b):
/// a_b = b + (int X Y^b ds + (t - X_t^2)/2) / int X^2 ds.
pub fn profile_a(series: &ObservedSeries, b: f64) -> Result<f64> {
    let y = y_process(series, b)?;
    let t = series.t_total();
    let n = series.x.len();
    let x_t = series.x[n - 1];
    let int_xy = integrate(
        series.x.iter().zip(&y).map(|(&x, &yv)| x * yv),
        series.dt,
        Quadrature::Trapezoid,
    );
    let int_x2 = integrate(
        series.x.iter().map(|&x| x * x),
        series.dt,
        Quadrature::Trapezoid,
    );
    if int_x2 <= 0.0 {
        return Err(BubbleError::InvalidInput(
            "degenerate series: int X^2 = 0".into(),
        ));
    }
    Ok(b + (int_xy + (t - x_t * x_t) / 2.0) / int_x2)
}

/// Pseudo-period T = 2 pi / sqrt(a (b - a/4)) of the parameter pair.
pub fn pseudo_period(a: f64, b: f64) -> f64 {
    2.0 * std::f64::consts::PI / (a * (b - a / 4.0)).sqrt()
}

/// Output of the likelihood search.
#[derive(Debug, Clone, Serialize)]
pub struct EstimationResult {
    pub a_hat: f64,
    pub b_hat: f64,
    pub c_hat: f64,
    pub t_hat_ml: f64,
    pub t_hat_eps: Option<f64>,
    pub loglik: f64,
    /// True when the grid optimum sat on a boundary point.
    pub boundary_hit: bool,
    /// (b, a_b, L(a_b, b)) over the search grid.
    pub b_grid_diagnostics: Vec<(f64, f64, f64)>,
}

/// Exhaustive b-grid search with the closed-form profile a_b, then
/// golden-section refinement around the best grid point. The series must
/// already be c-normalized.
pub fn mle(series: &ObservedSeries, b_grid: &[f64]) -> Result<EstimationResult> {
    if b_grid.len() < 10 {
        return Err(BubbleError::InvalidInput(format!(
            "b-grid needs at least 10 points, got {}",
            b_grid.len()
        )));
    }
    if b_grid.iter().any(|&b| b <= 0.0) {
        return Err(BubbleError::InvalidParameter(
            "b-grid must be positive".into(),
        ));
    }
    let profile_loglik = |b: f64| -> Result<(f64, f64)> {
        let a_b = profile_a(series, b)?.max(1e-8);
        let l = log_likelihood(series, a_b, b)?;
        Ok((a_b, l))
    };
    let mut diagnostics = Vec::with_capacity(b_grid.len());
    let mut best = (f64::NAN, f64::NAN, f64::NEG_INFINITY);
    let mut best_idx = 0usize;
    for (i, &b) in b_grid.iter().enumerate() {
        let (a_b, l) = profile_loglik(b)?;
        diagnostics.push((b, a_b, l));
        if l > best.2 {
            best = (b, a_b, l);
            best_idx = i;
        }
    }
    let boundary_hit = best_idx == 0 || best_idx == b_grid.len() - 1;
    // golden-section refinement on the bracketing interval
    let (mut lo, mut hi) = (
        b_grid[best_idx.saturating_sub(1)],
        b_grid[(best_idx + 1).min(b_grid.len() - 1)],
    );
    if !boundary_hit {
        const INVPHI: f64 = 0.618_033_988_749_894_9;
        let mut x1 = hi - INVPHI * (hi - lo);
        let mut x2 = lo + INVPHI * (hi - lo);
        let mut f1 = profile_loglik(x1)?.1;
        let mut f2 = profile_loglik(x2)?.1;
        for _ in 0..60 {
            if (hi - lo).abs() < 1e-10 * hi.abs() {
                break;
            }
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + INVPHI * (hi - lo);
                f2 = profile_loglik(x2)?.1;
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - INVPHI * (hi - lo);
                f1 = profile_loglik(x1)?.1;
            }
        }
        let b_ref = 0.5 * (lo + hi);
        let (a_ref, l_ref) = profile_loglik(b_ref)?;
        if l_ref >= best.2 {
            best = (b_ref, a_ref, l_ref);
        }
    }
    let (b_hat, a_hat, loglik) = best;
    Ok(EstimationResult {
        a_hat,
        b_hat,
        c_hat: 1.0,
        t_hat_ml: pseudo_period(a_hat, b_hat),
        t_hat_eps: None,
        loglik,
        boundary_hit,
        b_grid_diagnostics: diagnostics,
    })
}

/// Full pipeline on a raw series: volatility from quadratic variation,
/// c-normalization, likelihood search, and the crossing-time period with the
/// default threshold epsilon = c_hat sqrt(dt).
pub fn estimate_all(series: &ObservedSeries, b_grid: &[f64]) -> Result<EstimationResult> {
    let c_hat = quadratic_variation_c(series)?;
    if c_hat <= 0.0 {
        return Err(BubbleError::InvalidInput(
            "series has zero quadratic variation".into(),
        ));
    }
    let normalized = series.scaled(1.0 / c_hat);
    let mut result = mle(&normalized, b_grid)?;
    result.c_hat = c_hat;
    let skeleton = crossing_skeleton(series, default_epsilon(series, c_hat))?;
    result.t_hat_eps = hitting_period_from_skeleton(&skeleton).ok();
    Ok(result)
}

/// Default crossing threshold epsilon = c_hat sqrt(dt).
pub fn default_epsilon(series: &ObservedSeries, c_hat: f64) -> f64 {
    c_hat * series.dt.sqrt()
}

/// Alternating stopping times: tau_0 = 0; r_k = first time >= tau_k with
/// |X| >= eps; tau_{k+1} = first zero of X after r_k (sign change against
/// the excursion side, linearly interpolated inside the step).
#[derive(Debug, Clone, Serialize)]
pub struct CrossingSkeleton {
    pub epsilon: f64,
    pub tau: Vec<f64>,
    pub r: Vec<f64>,
    /// Number of completed crossings, N_t.
    pub n_crossings: usize,
}

pub fn crossing_skeleton(series: &ObservedSeries, epsilon: f64) -> Result<CrossingSkeleton> {
    if !(epsilon > 0.0) {
        return Err(BubbleError::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let dt = series.dt;
    let x = &series.x;
    let mut tau = vec![0.0f64];
    let mut r = Vec::new();
    let mut i = 0usize;
    loop {
        // excursion detection at grid resolution
        while i < x.len() && x[i].abs() < epsilon {
            i += 1;
        }
        if i >= x.len() {
            break;
        }
        r.push(i as f64 * dt);
        let side = x[i].signum();
        // next zero: first sign change against the excursion side
        let mut found = None;
        while i + 1 < x.len() {
            i += 1;
            if x[i] == 0.0 {
                found = Some(i as f64 * dt);
                break;
            }
            if x[i].signum() != side {
                let (x_prev, x_new) = (x[i - 1], x[i]);
                let frac = x_prev / (x_prev - x_new);
                found = Some(((i - 1) as f64 + frac) * dt);
                break;
            }
        }
        match found {
            Some(t) => tau.push(t),
            None => break,
        }
    }
    let n_crossings = tau.len() - 1;
    Ok(CrossingSkeleton {
        epsilon,
        tau,
        r,
        n_crossings,
    })
}

/// Crossing-time period estimate: twice the mean gap between consecutive
/// returns, 2 (tau_N - tau_0) / N. (The summed display telescopes with an
/// off-by-one; the closed ratio form is implemented.)
pub fn hitting_period_from_skeleton(skeleton: &CrossingSkeleton) -> Result<f64> {
    if skeleton.n_crossings < 5 {
        return Err(BubbleError::InvalidInput(format!(
            "period estimate needs at least 5 crossings, got {}",
            skeleton.n_crossings
        )));
    }
    let n = skeleton.n_crossings;
    Ok(2.0 * (skeleton.tau[n] - skeleton.tau[0]) / n as f64)
}

pub fn hitting_period(series: &ObservedSeries, epsilon: f64) -> Result<f64> {
    hitting_period_from_skeleton(&crossing_skeleton(series, epsilon)?)
}

/// Two-epoch comparison: chi from the period counts over the spans, chi_tilde
/// from the ratio of time-averaged squared values, and the parameter-ratio
/// factors a1/a2 = (chi/chi_tilde)^{1/3}, b1/b2 = chi^{2/3} chi_tilde^{1/3}.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpochComparison {
    pub chi: f64,
    pub chi_tilde: f64,
    pub ratio_a: f64,
    pub ratio_b: f64,
}

pub fn epoch_compare(
    series_1: &ObservedSeries,
    series_2: &ObservedSeries,
    t0: f64,
    t1: f64,
    t2: f64,
) -> Result<EpochComparison> {
    if !(t0 < t1 && t1 < t2) {
        return Err(BubbleError::InvalidInput(format!(
            "breakpoints must be ordered t0 < t1 < t2, got {t0}, {t1}, {t2}"
        )));
    }
    let mean_sq = |s: &ObservedSeries| -> f64 {
        s.x.iter().map(|v| v * v).sum::<f64>() / s.x.len() as f64
    };
    let m2 = mean_sq(series_2);
    if m2 <= 0.0 {
        return Err(BubbleError::InvalidInput(
            "second epoch has zero mean square".into(),
        ));
    }
    let chi = (12.0 * (t2 - t1) / (t1 - t0)).powi(2);
    let chi_tilde = mean_sq(series_1) / m2;
    Ok(EpochComparison {
        chi,
        chi_tilde,
        ratio_a: (chi / chi_tilde).cbrt(),
        ratio_b: chi.powf(2.0 / 3.0) * chi_tilde.cbrt(),
    })
}
