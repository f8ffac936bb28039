//! First-passage Monte Carlo: return time to {x = 0}, angular-sector exits,
//! survival curves with exact binomial bands, and exponential tail-rate fits.

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{BubbleError, Result};
use crate::model::{sector_angles, AngularSector, ModelParams, Slope};
use crate::rng::RngPolicy;
use crate::simulate::{matched_ou_rate, ExactStepper};
use crate::stats;

/// One first-passage draw; `censored` marks paths still alive at the horizon.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TauSample {
    pub time: f64,
    pub censored: bool,
}

/// Knobs for crossing detection.
#[derive(Debug, Clone, Copy)]
pub struct HittingConfig {
    /// Approximate Brownian-bridge correction for intra-step crossings of the
    /// x-coordinate. X carries no direct noise, so this is a heuristic using
    /// the one-step x-variance; OFF by default and documented as a
    /// limitation of step-boundary detection.
    pub bridge_correction: bool,
}

impl Default for HittingConfig {
    fn default() -> Self {
        Self {
            bridge_correction: false,
        }
    }
}

/// Boundary functionals of a stopping set, all linear through the origin;
/// the path is inside while every functional is positive.
fn boundary_functionals(sector: &AngularSector) -> Vec<(f64, f64)> {
    let mut fs = vec![(1.0, 0.0)]; // x > 0
    if let Slope::Finite(s) = sector.alpha1 {
        fs.push((-s, 1.0)); // y - s x > 0
    }
    if let Slope::Finite(s) = sector.alpha2 {
        fs.push((s, -1.0)); // s x - y > 0
    }
    fs
}

fn run_one_path(
    stepper: &ExactStepper,
    functionals: &[(f64, f64)],
    z0: Vector2<f64>,
    horizon: f64,
    cfg: &HittingConfig,
    rng: &mut rand_chacha::ChaCha12Rng,
) -> TauSample {
    use rand::Rng;
    let dt = stepper.dt;
    let n_steps = (horizon / dt).ceil() as usize;
    let var_x = stepper.noise_sqrt[(0, 0)].powi(2);
    let mut z = z0;
    let mut fvals: Vec<f64> = functionals.iter().map(|(p, q)| p * z.x + q * z.y).collect();
    for m in 0..n_steps {
        let z_new = stepper.step(&z, rng);
        let mut best: Option<f64> = None;
        for (i, (p, q)) in functionals.iter().enumerate() {
            let f_new = p * z_new.x + q * z_new.y;
            if f_new <= 0.0 {
                // linear interpolation of the crossing instant inside the step
                let f_prev = fvals[i];
                let frac = if f_prev > 0.0 {
                    f_prev / (f_prev - f_new)
                } else {
                    0.0
                };
                best = Some(best.map_or(frac, |b: f64| b.min(frac)));
            }
            fvals[i] = f_new;
        }
        if let Some(frac) = best {
            return TauSample {
                time: (m as f64 + frac) * dt,
                censored: false,
            };
        }
        if cfg.bridge_correction && var_x > 0.0 {
            // pseudo bridge: both x endpoints positive, crossing probability
            // exp(-2 x_prev x_new / var_x)
            let p_cross = (-2.0 * z.x * z_new.x / var_x).exp();
            if rng.random::<f64>() < p_cross {
                let frac = z.x / (z.x + z_new.x);
                return TauSample {
                    time: (m as f64 + frac) * dt,
                    censored: false,
                };
            }
        }
        z = z_new;
    }
    TauSample {
        time: horizon,
        censored: true,
    }
}

/// Return-time samples tau = inf{t : X_t = 0} from z0 with x0 > 0, by exact
/// stepping and sign-change detection with linear refinement.
pub fn return_time_samples(
    params: &ModelParams,
    z0: Vector2<f64>,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    policy: &RngPolicy,
    cfg: &HittingConfig,
) -> Result<Vec<TauSample>> {
    if z0.x <= 0.0 {
        return Err(BubbleError::InvalidInput(format!(
            "return time requires x0 > 0, got {}",
            z0.x
        )));
    }
    let sector = sector_angles(params, Slope::NegInf, Slope::PosInf)?;
    sector_exit_samples(params, &sector, z0, dt, horizon, n_paths, policy, cfg)
}

/// Exit-time samples from an angular sector {x>0, a1 x < y < a2 x}.
#[allow(clippy::too_many_arguments)]
pub fn sector_exit_samples(
    params: &ModelParams,
    sector: &AngularSector,
    z0: Vector2<f64>,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    policy: &RngPolicy,
    cfg: &HittingConfig,
) -> Result<Vec<TauSample>> {
    if !sector.contains(&z0) {
        return Err(BubbleError::InvalidInput(format!(
            "start point ({}, {}) is not strictly inside the sector",
            z0.x, z0.y
        )));
    }
    if !(horizon > 0.0) {
        return Err(BubbleError::InvalidInput("horizon must be positive".into()));
    }
    let stepper = ExactStepper::new(params, dt)?;
    let functionals = boundary_functionals(sector);
    Ok((0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = policy.stream(i as u64);
            run_one_path(&stepper, &functionals, z0, horizon, cfg, &mut rng)
        })
        .collect())
}

/// Empirical survivor curve with exact 95% binomial bands.
#[derive(Debug, Clone, Serialize)]
pub struct SurvivalCurve {
    pub t_grid: Vec<f64>,
    pub survival: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    pub n_paths: usize,
    pub censored: usize,
    pub horizon: f64,
}

pub fn survival_curve(samples: &[TauSample], t_grid: &[f64]) -> Result<SurvivalCurve> {
    if samples.is_empty() {
        return Err(BubbleError::InvalidInput(
            "survival curve needs at least one sample".into(),
        ));
    }
    let n = samples.len();
    let horizon = samples
        .iter()
        .filter(|s| s.censored)
        .map(|s| s.time)
        .fold(f64::INFINITY, f64::min);
    let mut times: Vec<f64> = samples.iter().map(|s| s.time).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut t_grid: Vec<f64> = t_grid.to_vec();
    // censoring at the horizon: the curve is only valid up to it
    t_grid.retain(|&t| t <= horizon);
    let mut survival = Vec::with_capacity(t_grid.len());
    let mut ci_lo = Vec::with_capacity(t_grid.len());
    let mut ci_hi = Vec::with_capacity(t_grid.len());
    for &t in &t_grid {
        // censored samples have time = horizon >= t, counted alive by the
        // partition_point below
        let alive = n - times.partition_point(|&x| x <= t);
        let (lo, hi) = stats::clopper_pearson(alive, n, 0.95);
        survival.push(alive as f64 / n as f64);
        ci_lo.push(lo);
        ci_hi.push(hi);
    }
    Ok(SurvivalCurve {
        t_grid,
        survival,
        ci_lo,
        ci_hi,
        n_paths: n,
        censored: samples.iter().filter(|s| s.censored).count(),
        horizon: if horizon.is_finite() {
            horizon
        } else {
            times.last().copied().unwrap_or(0.0)
        },
    })
}

/// Fitted exponential tail rate of a survival curve.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateFit {
    pub lambda_hat: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub n_points: usize,
}

/// Weighted least squares on ln S(t) over the window; weights are the
/// delta-method inverse variances n S / (1 - S).
pub fn fit_rate(curve: &SurvivalCurve, window: (f64, f64)) -> Result<RateFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for (i, &t) in curve.t_grid.iter().enumerate() {
        if t < window.0 || t > window.1 {
            continue;
        }
        let s = curve.survival[i];
        if s <= 0.0 || s >= 1.0 {
            continue;
        }
        xs.push(t);
        ys.push(s.ln());
        ws.push(curve.n_paths as f64 * s / (1.0 - s));
    }
    if xs.len() < 5 {
        return Err(BubbleError::InvalidInput(format!(
            "rate fit needs at least 5 usable grid points in the window, got {}",
            xs.len()
        )));
    }
    let fit = stats::weighted_least_squares(&xs, &ys, &ws)
        .ok_or_else(|| BubbleError::Numerical("degenerate regression".into()))?;
    Ok(RateFit {
        lambda_hat: -fit.slope,
        stderr: fit.slope_stderr,
        window,
        r_squared: fit.r_squared,
        n_points: fit.n,
    })
}

/// Default fit window: skip the pre-asymptotic transient up to 3/omega, stop
/// at the 0.999 quantile of the uncensored samples.
pub fn default_fit_window(params: &ModelParams, samples: &[TauSample]) -> (f64, f64) {
    let uncensored: Vec<f64> = samples
        .iter()
        .filter(|s| !s.censored)
        .map(|s| s.time)
        .collect();
    let hi = if uncensored.is_empty() {
        f64::INFINITY
    } else {
        stats::quantile(&uncensored, 0.999)
    };
    (3.0 / params.omega(), hi)
}

/// Uniform grid helper for survival curves.
pub fn uniform_grid(t_max: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| t_max * i as f64 / n as f64).collect()
}

/// Return-time tail rates of the bubble process and its matched OU
/// comparator (same stationary X-variance, same injected randomness).
#[derive(Debug, Clone, Serialize)]
pub struct OuComparison {
    pub bubble: RateFit,
    pub ou: RateFit,
    /// True when the bubble rate exceeds the OU rate with non-overlapping
    /// 2-stderr intervals.
    pub separated: bool,
}

/// Matched-OU return times to 0 from x0 > 0 (exact OU stepping).
pub fn ou_return_time_samples(
    params: &ModelParams,
    x0: f64,
    dt: f64,
    horizon: f64,
    n_paths: usize,
    policy: &RngPolicy,
) -> Result<Vec<TauSample>> {
    use rand::Rng;
    use rand_distr::StandardNormal;
    if x0 <= 0.0 {
        return Err(BubbleError::InvalidInput("x0 must be positive".into()));
    }
    let theta = matched_ou_rate(params);
    let decay = (-theta * dt).exp();
    let step_sd = (params.c * params.c * (1.0 - decay * decay) / (2.0 * theta)).sqrt();
    let n_steps = (horizon / dt).ceil() as usize;
    Ok((0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = policy.stream(i as u64);
            let mut x = x0;
            for m in 0..n_steps {
                let xi: f64 = rng.sample(StandardNormal);
                let x_new = decay * x + step_sd * xi;
                if x_new <= 0.0 {
                    let frac = x / (x - x_new);
                    return TauSample {
                        time: (m as f64 + frac) * dt,
                        censored: false,
                    };
                }
                x = x_new;
            }
            TauSample {
                time: horizon,
                censored: true,
            }
        })
        .collect())
}

/// Fit both tail rates on their default windows and compare.
#[allow(clippy::too_many_arguments)]
pub fn compare_with_matched_ou(
    params: &ModelParams,
    x0: f64,
    dt: f64,
    horizon_bubble: f64,
    horizon_ou: f64,
    n_paths: usize,
    policy: &RngPolicy,
    grid_points: usize,
) -> Result<OuComparison> {
    let cfg = HittingConfig::default();
    let z0 = Vector2::new(x0, 0.0);
    let bubble_samples =
        return_time_samples(params, z0, dt, horizon_bubble, n_paths, policy, &cfg)?;
    let ou_samples = ou_return_time_samples(params, x0, dt, horizon_ou, n_paths, policy)?;
    let bubble_curve = survival_curve(&bubble_samples, &uniform_grid(horizon_bubble, grid_points))?;
    let ou_curve = survival_curve(&ou_samples, &uniform_grid(horizon_ou, grid_points))?;
    let bubble = fit_rate(
        &bubble_curve,
        default_fit_window(params, &bubble_samples),
    )?;
    // the OU transient scale is 1/theta; same 0.999-quantile cap
    let ou_uncensored: Vec<f64> = ou_samples
        .iter()
        .filter(|s| !s.censored)
        .map(|s| s.time)
        .collect();
    let ou_window = (
        0.5 / matched_ou_rate(params),
        stats::quantile(&ou_uncensored, 0.999),
    );
    let ou = fit_rate(&ou_curve, ou_window)?;
    let separated =
        bubble.lambda_hat - 2.0 * bubble.stderr > ou.lambda_hat + 2.0 * ou.stderr;
    Ok(OuComparison {
        bubble,
        ou,
        separated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::drift_exp;
    use approx::assert_relative_eq;

    fn reference() -> ModelParams {
        ModelParams::new(1.0, 5.0, 1.0).unwrap()
    }

    #[test]
    fn noiseless_return_time_matches_flow_root() {
        // c=0: tau is the first zero of the deterministic x-component
        let p = ModelParams::new(1.0, 5.0, 0.0).unwrap();
        let z0 = Vector2::new(1.0, 0.0);
        let policy = RngPolicy::new(1);
        let samples = return_time_samples(
            &p,
            z0,
            1e-5,
            3.0,
            1,
            &policy,
            &HittingConfig::default(),
        )
        .unwrap();
        // oracle: dense sign scan of e^{At} z0
        let mut tau_scan = None;
        let scan_dt = 1e-6;
        for m in 1..4_000_000 {
            let t = m as f64 * scan_dt;
            if (drift_exp(&p, t) * z0).x <= 0.0 {
                tau_scan = Some(t);
                break;
            }
        }
        let tau_scan = tau_scan.unwrap();
        // analytic: (pi/2 - phi0)/omega with tan(phi0) = -(4+a/2... ) derived
        // from X(t) = C e^{-at/2} cos(omega t + phi0)
        let omega = p.omega();
        let phi0 = (-4.5 / omega).atan();
        let analytic = (std::f64::consts::FRAC_PI_2 - phi0) / omega;
        assert_relative_eq!(samples[0].time, tau_scan, max_relative = 1e-4);
        assert_relative_eq!(samples[0].time, analytic, max_relative = 1e-4);
        assert!(!samples[0].censored);
    }

    #[test]
    fn half_plane_sector_reproduces_return_time() {
        let p = reference();
        let z0 = Vector2::new(1.0, 0.0);
        let policy = RngPolicy::new(7);
        let cfg = HittingConfig::default();
        let a = return_time_samples(&p, z0, 0.01, 10.0, 200, &policy, &cfg).unwrap();
        let sector = sector_angles(&p, Slope::NegInf, Slope::PosInf).unwrap();
        let b = sector_exit_samples(&p, &sector, z0, 0.01, 10.0, 200, &policy, &cfg).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.time, y.time);
            assert_eq!(x.censored, y.censored);
        }
    }

    #[test]
    fn sector_exit_monotone_in_sector_size() {
        let p = reference();
        let z0 = Vector2::new(1.0, 0.0);
        let policy = RngPolicy::new(11);
        let cfg = HittingConfig::default();
        let small = sector_angles(&p, Slope::Finite(-1.0), Slope::Finite(1.0)).unwrap();
        let large = sector_angles(&p, Slope::Finite(-3.0), Slope::Finite(3.0)).unwrap();
        let hp = sector_angles(&p, Slope::NegInf, Slope::PosInf).unwrap();
        let ts = sector_exit_samples(&p, &small, z0, 0.005, 10.0, 300, &policy, &cfg).unwrap();
        let tl = sector_exit_samples(&p, &large, z0, 0.005, 10.0, 300, &policy, &cfg).unwrap();
        let th = sector_exit_samples(&p, &hp, z0, 0.005, 10.0, 300, &policy, &cfg).unwrap();
        for i in 0..300 {
            assert!(ts[i].time <= tl[i].time + 1e-12);
            assert!(tl[i].time <= th[i].time + 1e-12);
        }
    }

    #[test]
    fn survival_curve_trivial_cases() {
        // all samples beyond the grid -> survival 1
        let samples = vec![
            TauSample {
                time: 10.0,
                censored: false,
            };
            5
        ];
        let c = survival_curve(&samples, &[0.0, 1.0, 2.0]).unwrap();
        assert!(c.survival.iter().all(|&s| s == 1.0));
        // single sample at t=1: step from 1 to 0
        let one = vec![TauSample {
            time: 1.0,
            censored: false,
        }];
        let c = survival_curve(&one, &[0.5, 1.5]).unwrap();
        assert_eq!(c.survival, vec![1.0, 0.0]);
        assert!(survival_curve(&[], &[0.0]).is_err());
    }

    #[test]
    fn survival_starts_at_one_and_monotone() {
        let p = reference();
        let policy = RngPolicy::new(3);
        let samples = return_time_samples(
            &p,
            Vector2::new(1.0, 0.0),
            0.005,
            12.0,
            2000,
            &policy,
            &HittingConfig::default(),
        )
        .unwrap();
        let grid = uniform_grid(12.0, 100);
        let c = survival_curve(&samples, &grid).unwrap();
        assert_eq!(c.survival[0], 1.0);
        for w in c.survival.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(c.ci_lo.iter().zip(&c.survival).all(|(lo, s)| lo <= s));
        assert!(c.ci_hi.iter().zip(&c.survival).all(|(hi, s)| hi >= s));
    }

    #[test]
    fn fit_rate_recovers_synthetic_exponential() {
        use rand::Rng;
        let lambda = 2.0;
        let mut rng = RngPolicy::new(17).stream(0);
        let samples: Vec<TauSample> = (0..100_000)
            .map(|_| TauSample {
                time: -(1.0 - rng.random::<f64>()).ln() / lambda,
                censored: false,
            })
            .collect();
        let grid = uniform_grid(4.0, 200);
        let curve = survival_curve(&samples, &grid).unwrap();
        let fit = fit_rate(&curve, (0.0, 4.0)).unwrap();
        assert!((fit.lambda_hat - lambda).abs() < 0.05, "{}", fit.lambda_hat);
        assert!(fit.r_squared > 0.99);
    }

    #[test]
    fn fit_rate_rejects_thin_windows() {
        let samples = vec![
            TauSample {
                time: 1.0,
                censored: false,
            };
            200
        ];
        let curve = survival_curve(&samples, &uniform_grid(2.0, 10)).unwrap();
        assert!(fit_rate(&curve, (1.5, 2.0)).is_err());
    }

    #[test]
    fn theorem_bound_holds_at_reference_params() {
        // P(tau > t) <= 2 exp(-ln2/pi omega t) within the 95% band
        let p = reference();
        let policy = RngPolicy::new(23);
        let samples = return_time_samples(
            &p,
            Vector2::new(1.0, 0.0),
            0.005,
            12.0,
            20_000,
            &policy,
            &HittingConfig::default(),
        )
        .unwrap();
        let grid = uniform_grid(12.0, 120);
        let curve = survival_curve(&samples, &grid).unwrap();
        let rate = std::f64::consts::LN_2 / std::f64::consts::PI * p.omega();
        for (i, &t) in curve.t_grid.iter().enumerate() {
            let bound = 2.0 * (-rate * t).exp();
            assert!(
                curve.ci_lo[i] <= bound,
                "t={t}: ci_lo={} > bound={bound}",
                curve.ci_lo[i]
            );
        }
        // fitted rate within [ln2/pi w, (3 + a/w) w]
        let fit = fit_rate(&curve, default_fit_window(&p, &samples)).unwrap();
        assert!(fit.lambda_hat >= 0.480873 && fit.lambda_hat <= 7.538347, "{}", fit.lambda_hat);
    }

    #[test]
    fn dt_refinement_stable() {
        let p = reference();
        let policy = RngPolicy::new(29);
        let fit_at = |dt: f64| {
            let samples = return_time_samples(
                &p,
                Vector2::new(1.0, 0.0),
                dt,
                12.0,
                20_000,
                &policy,
                &HittingConfig::default(),
            )
            .unwrap();
            let curve = survival_curve(&samples, &uniform_grid(12.0, 120)).unwrap();
            fit_rate(&curve, default_fit_window(&p, &samples)).unwrap()
        };
        let coarse = fit_at(0.01);
        let fine = fit_at(0.005);
        let tol = coarse.stderr + fine.stderr;
        assert!(
            (coarse.lambda_hat - fine.lambda_hat).abs() < tol.max(2.0 * coarse.stderr),
            "{} vs {} (se {} {})",
            coarse.lambda_hat,
            fine.lambda_hat,
            coarse.stderr,
            fine.stderr
        );
    }

    #[test]
    fn sector_rate_dominates_half_plane_bound_direction() {
        // fitted sub-sector rate >= fitted half-plane rate; and empirical
        // survival stays below 2 e^{-bound t} for the sector bound
        let p = reference();
        let policy = RngPolicy::new(31);
        let cfg = HittingConfig::default();
        let z0 = Vector2::new(1.0, 0.2);
        let sector = sector_angles(&p, Slope::Finite(-1.0), Slope::Finite(1.5)).unwrap();
        let s_samples =
            sector_exit_samples(&p, &sector, z0, 0.004, 8.0, 20_000, &policy, &cfg).unwrap();
        let h_samples =
            return_time_samples(&p, z0, 0.004, 8.0, 20_000, &policy, &cfg).unwrap();
        let s_curve = survival_curve(&s_samples, &uniform_grid(6.0, 80)).unwrap();
        let h_curve = survival_curve(&h_samples, &uniform_grid(8.0, 80)).unwrap();
        let s_fit = fit_rate(&s_curve, (0.5, stats::quantile(
            &s_samples.iter().filter(|s| !s.censored).map(|s| s.time).collect::<Vec<_>>(),
            0.999,
        )))
        .unwrap();
        let h_fit = fit_rate(&h_curve, default_fit_window(&p, &h_samples)).unwrap();
        assert!(s_fit.lambda_hat > h_fit.lambda_hat);
        // Prop upper2result sandwich direction for the sector
        let bound = sector.exit_rate_bound(&p);
        for (i, &t) in s_curve.t_grid.iter().enumerate() {
            assert!(s_curve.ci_lo[i] <= 2.0 * (-bound * t).exp());
        }
    }

    #[test]
    fn rejects_bad_starts() {
        let p = reference();
        let policy = RngPolicy::new(1);
        let cfg = HittingConfig::default();
        assert!(return_time_samples(&p, Vector2::new(0.0, 1.0), 0.01, 1.0, 1, &policy, &cfg)
            .is_err());
        assert!(return_time_samples(&p, Vector2::new(-1.0, 0.0), 0.01, 1.0, 1, &policy, &cfg)
            .is_err());
        let sector = sector_angles(&p, Slope::Finite(0.0), Slope::Finite(1.0)).unwrap();
        assert!(sector_exit_samples(
            &p,
            &sector,
            Vector2::new(1.0, 2.0),
            0.01,
            1.0,
            1,
            &policy,
            &cfg
        )
        .is_err());
    }

    #[test]
    fn matched_ou_comparison_separates() {
        let p = reference();
        let policy = RngPolicy::new(37);
        let cmp = compare_with_matched_ou(&p, 1.0, 0.005, 12.0, 60.0, 20_000, &policy, 120)
            .unwrap();
        assert!(cmp.bubble.lambda_hat > cmp.ou.lambda_hat);
        assert!(cmp.separated, "bubble {:?} ou {:?}", cmp.bubble, cmp.ou);
        // OU rate is theta = a^2/(a+b) for the half-line problem
        assert_relative_eq!(cmp.ou.lambda_hat, 1.0 / 6.0, max_relative = 0.25);
    }
}
