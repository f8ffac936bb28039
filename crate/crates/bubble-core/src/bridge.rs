//! Exact conditional (bridge) laws of the turning process between fixed
//! endpoints, bridge path sampling, and the small-duration explosion
//! asymptotics.
//!
//! With S_w = Sigma_{wT}^{-1} and B_w the rotation by wT, the bridge marginal
//! at fraction u has covariance sigma_u = (S_u + e^{-2 rho v T} B_v^* S_v
//! B_v)^{-1} and mean eta_u = sigma_u (e^{-rho u T} S_u B_u z_0 +
//! e^{-rho v T} B_v^* S_v z_T), v = 1 - u.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use serde::Serialize;

use crate::error::{BubbleError, Result};
use crate::gaussian::{rotation, turning_cov, GaussianLaw};
use crate::model::{ModelParams, TurningTransform};
use crate::simulate::Trajectory;

/// Bridge marginals on a grid of interior fractions u in (0, 1).
#[derive(Debug, Clone)]
pub struct BridgeLaw {
    pub rho: f64,
    pub duration: f64,
    pub z0: Vector2<f64>,
    pub z_end: Vector2<f64>,
    pub u_grid: Vec<f64>,
    pub means: Vec<Vector2<f64>>,
    pub covs: Vec<Matrix2<f64>>,
}

/// Guarded 2x2 inverse via the adjugate; S_w entries grow like T^{-3}, so the
/// determinant is checked against underflow.
fn inv2(m: &Matrix2<f64>, what: &str) -> Result<Matrix2<f64>> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if !det.is_finite() || det.abs() < 1e-300 {
        return Err(BubbleError::Numerical(format!(
            "{what}: determinant {det} out of range"
        )));
    }
    Ok(Matrix2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

/// Mean and covariance of Z_{uT} conditioned on Z_0 = z0 and Z_T = z_end.
pub fn bridge_point(
    rho: f64,
    z0: &Vector2<f64>,
    z_end: &Vector2<f64>,
    duration: f64,
    u: f64,
) -> Result<(Vector2<f64>, Matrix2<f64>)> {
    if !(duration > 0.0) {
        return Err(BubbleError::InvalidInput(format!(
            "bridge duration must be positive, got {duration}"
        )));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(BubbleError::InvalidInput(format!(
            "bridge fraction must lie strictly inside (0,1), got {u} (endpoints are degenerate)"
        )));
    }
    let v = 1.0 - u;
    let s_u = inv2(&turning_cov(rho, u * duration), "Sigma_{uT}")?;
    let s_v = inv2(&turning_cov(rho, v * duration), "Sigma_{vT}")?;
    let b_u = rotation(u * duration);
    let b_v = rotation(v * duration);
    let prec = s_u + b_v.transpose() * s_v * b_v * (-2.0 * rho * v * duration).exp();
    let cov = inv2(&prec, "bridge precision")?;
    let cov = (cov + cov.transpose()) * 0.5;
    let rhs = s_u * b_u * z0 * (-rho * u * duration).exp()
        + b_v.transpose() * s_v * z_end * (-rho * v * duration).exp();
    Ok((cov * rhs, cov))
}

/// Bridge marginals over a u-grid (grid points must be interior).
pub fn bridge_law(
    rho: f64,
    z0: &Vector2<f64>,
    z_end: &Vector2<f64>,
    duration: f64,
    u_grid: &[f64],
) -> Result<BridgeLaw> {
    let mut means = Vec::with_capacity(u_grid.len());
    let mut covs = Vec::with_capacity(u_grid.len());
    for &u in u_grid {
        let (m, c) = bridge_point(rho, z0, z_end, duration, u)?;
        means.push(m);
        covs.push(c);
    }
    Ok(BridgeLaw {
        rho,
        duration,
        z0: *z0,
        z_end: *z_end,
        u_grid: u_grid.to_vec(),
        means,
        covs,
    })
}

/// Default interior grid: 101 uniform points in (0, 1).
pub fn default_u_grid() -> Vec<f64> {
    (1..=101).map(|i| i as f64 / 102.0).collect()
}

/// Sample a bridge path on n_grid uniform steps by sequential conditioning:
/// each step draws Z_{t+dt} given the current state and the fixed endpoint
/// (Markov property), so every marginal is exact; the final state is set to
/// the endpoint bitwise.
pub fn bridge_sample<R: Rng + ?Sized>(
    rho: f64,
    z0: &Vector2<f64>,
    z_end: &Vector2<f64>,
    duration: f64,
    n_grid: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    if n_grid < 2 {
        return Err(BubbleError::InvalidInput(
            "bridge sampling needs at least 2 grid steps".into(),
        ));
    }
    let dt = duration / n_grid as f64;
    let mut states = Vec::with_capacity(n_grid + 1);
    let mut z = *z0;
    states.push(z);
    for m in 1..n_grid {
        let remaining = duration - (m - 1) as f64 * dt;
        let (mean, cov) = bridge_point(rho, &z, z_end, remaining, dt / remaining)?;
        let law = GaussianLaw { mean, cov };
        z = law.sample(rng);
        states.push(z);
    }
    states.push(*z_end);
    Ok(Trajectory { dt, states })
}

/// Limiting rescaled mean trajectory in the turning frame:
/// phi(u) = (0, 6 u (1-u) (x0 - xT)).
pub fn phi_turning(z0: &Vector2<f64>, z_end: &Vector2<f64>, u: f64) -> Vector2<f64> {
    Vector2::new(0.0, 6.0 * u * (1.0 - u) * (z0.x - z_end.x))
}

/// Small-duration limit of the (un-rescaled) bridge mean when the endpoints
/// share their x-coordinate:
/// (x0, (1-4u+3u^2) y0 - (2u-3u^2) yT - 6 rho u (1-u) x0).
pub fn equal_x_limit(rho: f64, z0: &Vector2<f64>, z_end: &Vector2<f64>, u: f64) -> Vector2<f64> {
    Vector2::new(
        z0.x,
        (1.0 - 4.0 * u + 3.0 * u * u) * z0.y - (2.0 * u - 3.0 * u * u) * z_end.y
            - 6.0 * rho * u * (1.0 - u) * z0.x,
    )
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ExplosionRow {
    pub duration: f64,
    /// sup over the u-grid of |T eta_u - phi(u)|, infinity norm.
    pub sup_error: f64,
    /// sup_error / duration; bounded when the remainder is O(T).
    pub normalized: f64,
}

/// Convergence table for T eta_u -> phi(u) over a decreasing duration
/// sequence.
pub fn explosion_check(
    rho: f64,
    z0: &Vector2<f64>,
    z_end: &Vector2<f64>,
    durations: &[f64],
    u_grid: &[f64],
) -> Result<Vec<ExplosionRow>> {
    let mut rows = Vec::with_capacity(durations.len());
    for &t in durations {
        let law = bridge_law(rho, z0, z_end, t, u_grid)?;
        let mut sup = 0.0f64;
        for (i, &u) in law.u_grid.iter().enumerate() {
            let want = phi_turning(z0, z_end, u);
            let got = law.means[i] * t;
            sup = sup.max((got - want).abs().max());
        }
        rows.push(ExplosionRow {
            duration: t,
            sup_error: sup,
            normalized: sup / t,
        });
    }
    Ok(rows)
}

/// Bridge quantities mapped back to the original coordinates.
#[derive(Debug, Clone)]
pub struct OriginalBridge {
    /// Duration in original time, duration_turning / omega.
    pub duration: f64,
    pub u_grid: Vec<f64>,
    pub means: Vec<Vector2<f64>>,
    pub covs: Vec<Matrix2<f64>>,
    /// Limit of duration * mean: ((6/b^2) u(1-u) (y - y'), 0).
    ///
    /// The ratio of the transform's omega/b^2 matrix entry to the omega time
    /// rescale leaves 1/b^2; the explosion stays along the x-axis with the
    /// sign of y - y'.
    pub phi: Vec<Vector2<f64>>,
}

/// Bridge of the original pair between original-coordinates endpoints over
/// `duration`, computed through the turning frame.
pub fn original_bridge(
    params: &ModelParams,
    transform: &TurningTransform,
    z0: &Vector2<f64>,
    z_end: &Vector2<f64>,
    duration: f64,
    u_grid: &[f64],
) -> Result<OriginalBridge> {
    let t_hat = duration * transform.time_scale;
    let hat0 = transform.to_turning(*z0);
    let hat_end = transform.to_turning(*z_end);
    let law = bridge_law(transform.rho, &hat0, &hat_end, t_hat, u_grid)?;
    let scale = transform.time_scale.sqrt() * transform.alpha;
    let mut means = Vec::with_capacity(u_grid.len());
    let mut covs = Vec::with_capacity(u_grid.len());
    let mut phi = Vec::with_capacity(u_grid.len());
    let b2 = params.b * params.b;
    for (i, &u) in u_grid.iter().enumerate() {
        means.push(transform.p * law.means[i] / scale);
        covs.push(transform.p * law.covs[i] * transform.p.transpose() / (scale * scale));
        phi.push(Vector2::new(
            6.0 / b2 * u * (1.0 - u) * (z0.y - z_end.y),
            0.0,
        ));
    }
    Ok(OriginalBridge {
        duration,
        u_grid: u_grid.to_vec(),
        means,
        covs,
        phi,
    })
}
