//! Closed-form Gaussian transition and stationary laws, the chi-square type
//! divergence J, and the relaxation-rate fit.
//!
//! In the oscillatory regime the covariance of the pair follows
//! `Sigma_t = R_0 - e^{-at} R_t` with a sinusoidal matrix family `R_t`;
//! outside it the Lyapunov ODE is integrated numerically.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{BubbleError, Result};
use crate::model::{drift_system, ModelParams, Regime};

/// Mean vector and 2x2 covariance of a planar Gaussian law.
#[derive(Debug, Clone, Copy)]
pub struct GaussianLaw {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
}

impl GaussianLaw {
    /// Lower-triangular square root tolerating semi-definite covariances
    /// (zero noise, degenerate bridge ends).
    pub fn cov_sqrt(&self) -> Matrix2<f64> {
        psd_sqrt_2x2(&self.cov)
    }

    /// Draw one sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector2<f64> {
        let l = self.cov_sqrt();
        let xi = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        self.mean + l * xi
    }

    /// Lebesgue density at z. Requires a nondegenerate covariance.
    pub fn density(&self, z: &Vector2<f64>) -> Result<f64> {
        let det = self.cov.determinant();
        if det <= 0.0 {
            return Err(BubbleError::NotPositiveDefinite(format!(
                "covariance determinant {det} <= 0"
            )));
        }
        let d = z - self.mean;
        let inv = Matrix2::new(
            self.cov[(1, 1)],
            -self.cov[(0, 1)],
            -self.cov[(1, 0)],
            self.cov[(0, 0)],
        ) / det;
        let q = (d.transpose() * inv * d)[(0, 0)];
        Ok((-0.5 * q).exp() / (2.0 * std::f64::consts::PI * det.sqrt()))
    }
}

/// Lower-triangular L with L L^T = m for symmetric PSD m, clamping tiny
/// negative pivots to zero.
pub(crate) fn psd_sqrt_2x2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let s11 = m[(0, 0)].max(0.0);
    if s11 <= 0.0 {
        // first coordinate deterministic; the rest is a scalar Gaussian
        return Matrix2::new(0.0, 0.0, 0.0, m[(1, 1)].max(0.0).sqrt());
    }
    let l11 = s11.sqrt();
    let l21 = m[(0, 1)] / l11;
    let rem = (m[(1, 1)] - l21 * l21).max(0.0);
    Matrix2::new(l11, 0.0, l21, rem.sqrt())
}

/// 2x2 matrix exponential e^{At} for the drift matrix, split by regime.
pub fn drift_exp(params: &ModelParams, t: f64) -> Matrix2<f64> {
    let a_mat = drift_system(params).drift;
    let a = params.a;
    match params.regime() {
        Regime::Oscillatory => {
            // (A - l I)^2 = -omega^2 I with l = -a/2
            let l = -a / 2.0;
            let omega = params.omega();
            let (s, c) = (omega * t).sin_cos();
            let n = a_mat - Matrix2::identity() * l;
            (Matrix2::identity() * c + n * (s / omega)) * (l * t).exp()
        }
        Regime::Critical => {
            let l = -a / 2.0;
            let n = a_mat - Matrix2::identity() * l;
            (Matrix2::identity() + n * t) * (l * t).exp()
        }
        Regime::Overdamped => {
            let root = (a * a - 4.0 * a * params.b).sqrt();
            let (lp, lm) = ((-a + root) / 2.0, (-a - root) / 2.0);
            let pp = (a_mat - Matrix2::identity() * lm) / (lp - lm);
            let pm = (a_mat - Matrix2::identity() * lp) / (lm - lp);
            pp * (lp * t).exp() + pm * (lm * t).exp()
        }
    }
}

/// Oscillating covariance family: stationary covariance, the angles
/// (alpha, beta) and the matrix family R_t with Sigma_t = R_0 - e^{-at} R_t.
#[derive(Debug, Clone, Copy)]
pub struct CovarianceSchedule {
    params: ModelParams,
    pub sigma_inf: Matrix2<f64>,
    /// Angle of lambda_minus = sqrt(ab) e^{i alpha}, in (pi/2, 3pi/2).
    pub alpha: f64,
    /// Angle of z = a/2 - b + i omega = b e^{i beta}, in [0, 2pi).
    pub beta: f64,
}

impl CovarianceSchedule {
    pub fn new(params: ModelParams) -> Self {
        let (a, b, c) = (params.a, params.b, params.c);
        let sigma_inf =
            Matrix2::new(a + b, -b * b, -b * b, b * b * b) * (c * c / (2.0 * a * a));
        let (alpha, beta) = if params.regime() == Regime::Oscillatory {
            let omega = params.omega();
            let alpha = f64::atan2(-omega / (a * b).sqrt(), -a.sqrt() / (2.0 * b.sqrt()));
            let alpha = if alpha < 0.0 {
                alpha + 2.0 * std::f64::consts::PI
            } else {
                alpha
            };
            let beta = f64::atan2(omega / b, (a - 2.0 * b) / (2.0 * b));
            let beta = if beta < 0.0 {
                beta + 2.0 * std::f64::consts::PI
            } else {
                beta
            };
            (alpha, beta)
        } else {
            (f64::NAN, f64::NAN)
        };
        Self {
            params,
            sigma_inf,
            alpha,
            beta,
        }
    }

    /// The sinusoidal matrix R_t (oscillatory regime only).
    ///
    /// The off-diagonal carries a factor b^2 relative to the (1,1) entry
    /// scale; R_0 equals the stationary covariance exactly.
    pub fn r_matrix(&self, t: f64) -> Matrix2<f64> {
        let (a, b, c) = (self.params.a, self.params.b, self.params.c);
        let omega = self.params.omega();
        let w2 = 4.0 * omega * omega;
        let pref = c * c * b * b / w2;
        let r11 = pref * (2.0 / a + (2.0 * self.beta - self.alpha - 2.0 * omega * t).cos() / (a * b).sqrt());
        let r12 = pref * ((a - 2.0 * b) / a + (b / a).sqrt() * (self.beta - self.alpha - 2.0 * omega * t).cos());
        let r22 = pref * b * b * (2.0 / a + (self.alpha + 2.0 * omega * t).cos() / (a * b).sqrt());
        Matrix2::new(r11, r12, r12, r22)
    }

    /// First entry of R_t; the X-marginal variance is r_0 - e^{-at} r_t.
    pub fn r_first_entry(&self, t: f64) -> f64 {
        self.r_matrix(t)[(0, 0)]
    }

    /// Covariance of Z_t started from a point, any regime.
    pub fn sigma_at(&self, t: f64) -> Matrix2<f64> {
        if t <= 0.0 {
            return Matrix2::zeros();
        }
        match self.params.regime() {
            Regime::Oscillatory => {
                self.r_matrix(0.0) - self.r_matrix(t) * (-self.params.a * t).exp()
            }
            _ => lyapunov_integrate(&self.params, t),
        }
    }
}

/// Integrate d Sigma/dt = A Sigma + Sigma A^T + C C^T from zero with an
/// adaptive Dormand-Prince 4(5) scheme, absolute/relative tolerance 1e-10.
fn lyapunov_integrate(params: &ModelParams, t_end: f64) -> Matrix2<f64> {
    let sys = drift_system(params);
    let a = sys.drift;
    let cc = sys.noise * sys.noise.transpose();
    // symmetric state (sxx, sxy, syy)
    let f = |s: [f64; 3]| -> [f64; 3] {
        let m = Matrix2::new(s[0], s[1], s[1], s[2]);
        let d = a * m + m * a.transpose() + cc;
        [d[(0, 0)], d[(0, 1)], d[(1, 1)]]
    };
    let mut y = [0.0f64; 3];
    let mut t = 0.0;
    let mut h = (t_end / 100.0).min(1e-2).max(1e-8);
    let tol = 1e-10;
    // Dormand-Prince coefficients
    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    const E1: f64 = 71.0 / 57600.0;
    const E3: f64 = -71.0 / 16695.0;
    const E4: f64 = 71.0 / 1920.0;
    const E5: f64 = -17253.0 / 339200.0;
    const E6: f64 = 22.0 / 525.0;
    const E7: f64 = -1.0 / 40.0;
    let axpy = |y: &[f64; 3], pairs: &[(f64, [f64; 3])]| {
        let mut out = *y;
        for (c, k) in pairs {
            for i in 0..3 {
                out[i] += c * k[i];
            }
        }
        out
    };
    while t < t_end {
        h = h.min(t_end - t);
        let k1 = f(y);
        let k2 = f(axpy(&y, &[(h * A21, k1)]));
        let k3 = f(axpy(&y, &[(h * A31, k1), (h * A32, k2)]));
        let k4 = f(axpy(&y, &[(h * A41, k1), (h * A42, k2), (h * A43, k3)]));
        let k5 = f(axpy(
            &y,
            &[(h * A51, k1), (h * A52, k2), (h * A53, k3), (h * A54, k4)],
        ));
        let k6 = f(axpy(
            &y,
            &[
                (h * A61, k1),
                (h * A62, k2),
                (h * A63, k3),
                (h * A64, k4),
                (h * A65, k5),
            ],
        ));
        let y5 = axpy(
            &y,
            &[(h * B1, k1), (h * B3, k3), (h * B4, k4), (h * B5, k5), (h * B6, k6)],
        );
        let k7 = f(y5);
        let mut err = 0.0f64;
        for i in 0..3 {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol + tol * y5[i].abs().max(y[i].abs());
            err = err.max((e / sc).abs());
        }
        if err <= 1.0 {
            t += h;
            y = y5;
        }
        let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
        h = (h * fac).max(1e-12);
    }
    Matrix2::new(y[0], y[1], y[1], y[2])
}

/// Law of Z_t started from the deterministic point z0.
pub fn transition_law(params: &ModelParams, z0: &Vector2<f64>, t: f64) -> GaussianLaw {
    let schedule = CovarianceSchedule::new(*params);
    GaussianLaw {
        mean: drift_exp(params, t) * z0,
        cov: schedule.sigma_at(t),
    }
}

// ---------------------------------------------------------------------------
// normalized turning system: dU = (-rho U - V) dt, dV = (-rho V + U) dt + sqrt(2) dW
// ---------------------------------------------------------------------------

/// Covariance entries of the turning system at time t:
/// integrals of e^{-2 rho s} (1 -/+ cos 2s) and -e^{-2 rho s} sin 2s.
///
/// For t < 0.05 a degree-30 power series is used: the closed form loses all
/// significant digits near t ~ 1e-6, which would wreck the small-duration
/// bridge asymptotics.
pub fn turning_cov(rho: f64, t: f64) -> Matrix2<f64> {
    if t <= 0.0 {
        return Matrix2::zeros();
    }
    if t < 0.05 {
        return turning_cov_series(rho, t);
    }
    // (1 - e^{-2 rho t}) / (2 rho), stable down to rho = 0 via expm1
    let x = -2.0 * rho * t;
    let e_term = if x.abs() < 1e-300 { t } else { t * (x.exp_m1() / x) };
    let q = 2.0 * (1.0 + rho * rho);
    let e2 = (-2.0 * rho * t).exp();
    let (s2t, c2t) = (2.0 * t).sin_cos();
    let osc = e2 * (s2t - rho * c2t);
    let s11 = e_term - osc / q - rho / q;
    let s12 = e2 * (c2t + rho * s2t) / q - 1.0 / q;
    let s22 = e_term + osc / q + rho / q;
    Matrix2::new(s11, s12, s12, s22)
}

fn turning_cov_series(rho: f64, t: f64) -> Matrix2<f64> {
    const N: usize = 30;
    // coefficients of e^{-2 rho s}
    let mut ea = [0.0f64; N];
    ea[0] = 1.0;
    for k in 1..N {
        ea[k] = ea[k - 1] * (-2.0 * rho) / k as f64;
    }
    // 1 - cos 2s and -sin 2s
    let mut factorial = [1.0f64; N];
    for n in 1..N {
        factorial[n] = factorial[n - 1] * n as f64;
    }
    let mut one_minus_cos = [0.0f64; N];
    let mut neg_sin = [0.0f64; N];
    for m in 1..(N / 2) {
        one_minus_cos[2 * m] =
            if m % 2 == 1 { 1.0 } else { -1.0 } * 4f64.powi(m as i32) / factorial[2 * m];
    }
    for m in 0..((N - 1) / 2) {
        neg_sin[2 * m + 1] = -if m % 2 == 0 { 1.0 } else { -1.0 }
            * 2f64.powi(2 * m as i32 + 1)
            / factorial[2 * m + 1];
    }
    // convolve with the exponential coefficients, then integrate monomials
    let integ = |b: &[f64; N]| -> f64 {
        let mut acc = 0.0;
        let mut tp = 1.0; // holds t^n entering the loop, becomes t^{n+1}
        for n in 0..N {
            let mut cn = 0.0;
            for k in 0..=n {
                cn += ea[k] * b[n - k];
            }
            tp *= t;
            acc += cn * tp / (n + 1) as f64;
        }
        acc
    };
    let s11 = integ(&one_minus_cos);
    let s12 = integ(&neg_sin);
    // 1 + cos 2s = 2 - (1 - cos 2s)
    let mut one_plus_cos = one_minus_cos;
    for v in one_plus_cos.iter_mut() {
        *v = -*v;
    }
    one_plus_cos[0] += 2.0;
    let s22 = integ(&one_plus_cos);
    Matrix2::new(s11, s12, s12, s22)
}

/// Rotation by angle t.
pub fn rotation(t: f64) -> Matrix2<f64> {
    let (s, c) = t.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Law of the turning process at time t from z0: mean e^{-rho t} R(t) z0 and
/// the closed-form covariance, continuous through rho = 0.
pub fn turning_transition_law(rho: f64, z0: &Vector2<f64>, t: f64) -> GaussianLaw {
    GaussianLaw {
        mean: (-rho * t).exp() * (rotation(t) * z0),
        cov: turning_cov(rho, t),
    }
}

/// Transition density of the original pair at z, t > 0 (Lebesgue reference).
pub fn density(params: &ModelParams, z0: &Vector2<f64>, t: f64, z: &Vector2<f64>) -> Result<f64> {
    if t <= 0.0 {
        return Err(BubbleError::InvalidInput(format!(
            "transition density requires t > 0 (degenerate at t = {t})"
        )));
    }
    transition_law(params, z0, t).density(z)
}

/// Transition kernel with respect to the stationary law: p_t(z0, z) / mu(z).
/// This is the mu-relative form; `density` is the Lebesgue one.
pub fn density_relative_to_stationary(
    params: &ModelParams,
    z0: &Vector2<f64>,
    t: f64,
    z: &Vector2<f64>,
) -> Result<f64> {
    let stationary = GaussianLaw {
        mean: Vector2::zeros(),
        cov: CovarianceSchedule::new(*params).sigma_inf,
    };
    Ok(density(params, z0, t, z)? / stationary.density(z)?)
}

/// Chi-square type divergence between centered Gaussians:
/// `J = sqrt(1/sqrt(det(I - S^2)) - 1)` with `S = Sigma^{-1} Sigma_tilde - I`,
/// `+inf` when `Sigma_tilde^{-1} - Sigma^{-1}/2` is not positive definite.
pub fn chi2_divergence(law_tilde: &GaussianLaw, law: &GaussianLaw) -> Result<f64> {
    if law.mean.norm() > 1e-12 || law_tilde.mean.norm() > 1e-12 {
        return Err(BubbleError::InvalidInput(
            "chi2 divergence is defined for centered laws".into(),
        ));
    }
    let s_eigs = normalized_spectrum(&law_tilde.cov, &law.cov)?;
    // finiteness is equivalent to every eigenvalue of S being < 1
    if s_eigs.iter().any(|&s| s >= 1.0) {
        return Ok(f64::INFINITY);
    }
    let det: f64 = s_eigs.iter().map(|&s| 1.0 - s * s).product();
    Ok((1.0 / det.sqrt() - 1.0).max(0.0).sqrt())
}

/// Eigenvalues of `Sigma^{-1/2} Sigma_tilde Sigma^{-1/2} - I`, the symmetric
/// form of S (same spectrum, numerically robust).
fn normalized_spectrum(sigma_tilde: &Matrix2<f64>, sigma: &Matrix2<f64>) -> Result<Vec<f64>> {
    let inv_sqrt = sym_inv_sqrt(sigma).ok_or_else(|| {
        BubbleError::NotPositiveDefinite("reference covariance must be positive definite".into())
    })?;
    let tilde_eigs = sigma_tilde.symmetric_eigenvalues();
    if tilde_eigs.iter().any(|&e| e <= 0.0) {
        return Err(BubbleError::NotPositiveDefinite(
            "perturbed covariance must be positive definite".into(),
        ));
    }
    let w = inv_sqrt * sigma_tilde * inv_sqrt;
    let w = (w + w.transpose()) * 0.5;
    Ok(w.symmetric_eigenvalues().iter().map(|e| e - 1.0).collect())
}

fn sym_inv_sqrt(m: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let se = m.symmetric_eigen();
    // Cholesky-grade tolerance on the smallest eigenvalue
    if se.eigenvalues.iter().any(|&e| e <= 1e-12 * m.norm()) {
        return None;
    }
    let d = Matrix2::from_diagonal(&se.eigenvalues.map(|e| 1.0 / e.sqrt()));
    Some(se.eigenvectors * d * se.eigenvectors.transpose())
}

/// Least-squares fit of ln J(mu_t, mu) against t for both the joint law and
/// the X marginal.
#[derive(Debug, Clone, Copy)]
pub struct RelaxationFit {
    /// Fitted slope of ln J(mu_t, mu); the limit is 2l = -a.
    pub slope_joint: f64,
    /// Same for the first marginal nu_t.
    pub slope_marginal: f64,
    pub n_points: usize,
}

pub fn relaxation_rate(params: &ModelParams, t_grid: &[f64]) -> Result<RelaxationFit> {
    if params.regime() != Regime::Oscillatory {
        return Err(BubbleError::NotOscillatory {
            a: params.a,
            b: params.b,
        });
    }
    if t_grid.len() < 5 {
        return Err(BubbleError::InvalidInput(format!(
            "relaxation fit needs at least 5 grid points, got {}",
            t_grid.len()
        )));
    }
    let schedule = CovarianceSchedule::new(*params);
    let stationary = GaussianLaw {
        mean: Vector2::zeros(),
        cov: schedule.sigma_inf,
    };
    let mut ts = Vec::with_capacity(t_grid.len());
    let mut ln_joint = Vec::with_capacity(t_grid.len());
    let mut ln_marg = Vec::with_capacity(t_grid.len());
    let r0 = schedule.r_first_entry(0.0);
    for &t in t_grid {
        let law_t = GaussianLaw {
            mean: Vector2::zeros(),
            cov: schedule.sigma_at(t),
        };
        let j = chi2_divergence(&law_t, &stationary)?;
        if !j.is_finite() || j <= 0.0 {
            return Err(BubbleError::InvalidInput(format!(
                "J(mu_t, mu) not finite/positive at t = {t}; grid must stay in the PD region"
            )));
        }
        // 1-D marginal: variance r_0 - e^{-at} r_t against r_0
        let vt = r0 - (-params.a * t).exp() * schedule.r_first_entry(t);
        let s = vt / r0 - 1.0;
        if s.abs() >= 1.0 {
            return Err(BubbleError::InvalidInput(format!(
                "marginal divergence diverges at t = {t}"
            )));
        }
        let jm = (1.0 / (1.0 - s * s).sqrt() - 1.0).max(f64::MIN_POSITIVE).sqrt();
        ts.push(t);
        ln_joint.push(j.ln());
        ln_marg.push(jm.ln());
    }
    let slope = |ys: &[f64]| -> f64 {
        let n = ts.len() as f64;
        let mx = ts.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = ts.iter().map(|x| (x - mx) * (x - mx)).sum();
        let sxy: f64 = ts.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        sxy / sxx
    };
    Ok(RelaxationFit {
        slope_joint: slope(&ln_joint),
        slope_marginal: slope(&ln_marg),
        n_points: ts.len(),
    })
}
