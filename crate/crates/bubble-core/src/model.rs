//! Parameters, eigenstructure, linear transformations and memory kernels.
//!
//! The price process follows the integro-SDE
//! `dX_t = -a X_t dt + (b \int_0^t e^{b(s-t)} dX_s) dt + c dB_t`.
//! With `Y_t = b \int_0^t e^{b(s-t)} dX_s - b X_t`, the pair `Z = (X, Y)`
//! is Markov: `dZ = A Z dt + C dB` with `A = [[b-a, 1], [-b^2, -b]]`,
//! `C = (c, 0)`.

use nalgebra::{Complex, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{BubbleError, Result};

/// The triple (a, b, c): restoring rate, memory decay rate, volatility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Restoring rate toward the equilibrium price (1/time), > 0.
    pub a: f64,
    /// Memory decay rate; 1/b is the typical observation window (1/time), > 0.
    pub b: f64,
    /// Volatility of the driving Brownian motion (state/sqrt(time)), >= 0.
    pub c: f64,
}

/// Spectral regime of the drift matrix, a pure function of (a, b).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// a < 4b: complex conjugate eigenvalues, rotating flow.
    Oscillatory,
    /// a = 4b: double real eigenvalue -a/2 (Jordan block).
    Critical,
    /// a > 4b: two distinct real eigenvalues.
    Overdamped,
}

impl ModelParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(BubbleError::InvalidParameter(format!(
                "a must satisfy a > 0, got {a}"
            )));
        }
        if !(b > 0.0) || !b.is_finite() {
            return Err(BubbleError::InvalidParameter(format!(
                "b must satisfy b > 0, got {b}"
            )));
        }
        if !(c >= 0.0) || !c.is_finite() {
            return Err(BubbleError::InvalidParameter(format!(
                "c must satisfy c >= 0, got {c}"
            )));
        }
        Ok(Self { a, b, c })
    }

    pub fn regime(&self) -> Regime {
        if self.a < 4.0 * self.b {
            Regime::Oscillatory
        } else if self.a == 4.0 * self.b {
            Regime::Critical
        } else {
            Regime::Overdamped
        }
    }

    /// Angular frequency of the rotating flow, `sqrt(ab - a^2/4)`; zero
    /// outside the oscillatory regime.
    pub fn omega(&self) -> f64 {
        let d = self.a * self.b - self.a * self.a / 4.0;
        if d > 0.0 {
            d.sqrt()
        } else {
            0.0
        }
    }

    fn require_oscillatory(&self) -> Result<()> {
        if self.regime() != Regime::Oscillatory {
            return Err(BubbleError::NotOscillatory {
                a: self.a,
                b: self.b,
            });
        }
        Ok(())
    }
}

/// Eigenstructure of the drift matrix.
#[derive(Debug, Clone, Copy)]
pub struct SpectralData {
    pub lambda_plus: Complex<f64>,
    pub lambda_minus: Complex<f64>,
    /// Largest real part of the eigenvalues, `(-a + sqrt((a^2-4ab)_+))/2` < 0.
    pub l: f64,
    /// Angular frequency; 0 unless a < 4b.
    pub omega: f64,
    /// a/(2 omega); defined in the oscillatory regime only.
    pub rho: Option<f64>,
    /// (b - a/2)/omega; defined in the oscillatory regime only.
    pub kappa: Option<f64>,
}

/// Eigenvalues and the convergence rate of the drift matrix.
pub fn spectral(params: &ModelParams) -> SpectralData {
    let (a, b) = (params.a, params.b);
    let disc = a * a - 4.0 * a * b;
    let l = (-a + disc.max(0.0).sqrt()) / 2.0;
    match params.regime() {
        Regime::Oscillatory => {
            let omega = params.omega();
            SpectralData {
                lambda_plus: Complex::new(-a / 2.0, omega),
                lambda_minus: Complex::new(-a / 2.0, -omega),
                l,
                omega,
                rho: Some(a / (2.0 * omega)),
                kappa: Some((b - a / 2.0) / omega),
            }
        }
        Regime::Critical => SpectralData {
            lambda_plus: Complex::new(-a / 2.0, 0.0),
            lambda_minus: Complex::new(-a / 2.0, 0.0),
            l,
            omega: 0.0,
            rho: None,
            kappa: None,
        },
        Regime::Overdamped => {
            let root = disc.sqrt();
            SpectralData {
                lambda_plus: Complex::new((-a + root) / 2.0, 0.0),
                lambda_minus: Complex::new((-a - root) / 2.0, 0.0),
                l,
                omega: 0.0,
                rho: None,
                kappa: None,
            }
        }
    }
}

/// The linear system dZ = A Z dt + C dB of the Markov pair.
#[derive(Debug, Clone, Copy)]
pub struct DriftSystem {
    pub drift: Matrix2<f64>,
    pub noise: Vector2<f64>,
}

pub fn drift_system(params: &ModelParams) -> DriftSystem {
    let (a, b, c) = (params.a, params.b, params.c);
    DriftSystem {
        drift: Matrix2::new(b - a, 1.0, -b * b, -b),
        noise: Vector2::new(c, 0.0),
    }
}

/// Change of basis and scaling that turns the system into the normalized
/// rotation dU = (-rho U - V) dt, dV = (-rho V + U) dt + sqrt(2) dW with
/// unit angular speed, where rho = a/(2 omega).
///
/// Forward map on states: `z_hat = sqrt(omega) * alpha * P^{-1} z`, on time:
/// `t_hat = omega * t`.
#[derive(Debug, Clone, Copy)]
pub struct TurningTransform {
    pub p: Matrix2<f64>,
    pub p_inv: Matrix2<f64>,
    /// Scale factor sqrt(2) omega / (c b^2).
    pub alpha: f64,
    /// Time rescale factor omega.
    pub time_scale: f64,
    pub rho: f64,
    /// Slope of the transformed half-plane boundary: {x>0} maps to {v > kappa u}.
    pub kappa: f64,
}

impl TurningTransform {
    /// Map an original-coordinates state into the turning frame.
    pub fn to_turning(&self, z: Vector2<f64>) -> Vector2<f64> {
        self.time_scale.sqrt() * self.alpha * (self.p_inv * z)
    }

    /// Map a turning-frame state back to original coordinates.
    pub fn to_original(&self, z_hat: Vector2<f64>) -> Vector2<f64> {
        (self.p * z_hat) / (self.time_scale.sqrt() * self.alpha)
    }
}

pub fn turning_transform(params: &ModelParams) -> Result<TurningTransform> {
    params.require_oscillatory()?;
    if params.c <= 0.0 {
        return Err(BubbleError::InvalidParameter(
            "turning transform requires c > 0".into(),
        ));
    }
    let (a, b, c) = (params.a, params.b, params.c);
    let omega = params.omega();
    let b2 = b * b;
    // P_v for v = ((a/2 - b)/b^2, 1); second column is B v with
    // B = (A + a/2 I)/omega.
    let p = Matrix2::new((a / 2.0 - b) / b2, omega / b2, 1.0, 0.0);
    // Exact inverse; note the (2,2) entry is +(b - a/2)/omega.
    let p_inv = Matrix2::new(0.0, 1.0, b2 / omega, (b - a / 2.0) / omega);
    Ok(TurningTransform {
        p,
        p_inv,
        alpha: std::f64::consts::SQRT_2 * omega / (c * b2),
        time_scale: omega,
        rho: a / (2.0 * omega),
        kappa: (b - a / 2.0) / omega,
    })
}

/// A sector boundary slope, possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Slope {
    NegInf,
    Finite(f64),
    PosInf,
}

impl Slope {
    fn rank(&self) -> (u8, f64) {
        match self {
            Slope::NegInf => (0, 0.0),
            Slope::Finite(v) => (1, *v),
            Slope::PosInf => (2, 0.0),
        }
    }

    /// Strict order on the extended reals.
    pub fn lt(&self, other: &Slope) -> bool {
        let (ra, va) = self.rank();
        let (rb, vb) = other.rank();
        ra < rb || (ra == rb && ra == 1 && va < vb)
    }
}

/// Angular sector {x > 0, alpha1 x < y < alpha2 x} together with its
/// transformed angles theta_i = Arctan((a/2 - b - alpha_i)/omega).
#[derive(Debug, Clone, Copy)]
pub struct AngularSector {
    pub alpha1: Slope,
    pub alpha2: Slope,
    pub theta_tilde1: f64,
    pub theta_tilde2: f64,
}

impl AngularSector {
    /// Strict membership test for (x, y).
    pub fn contains(&self, z: &Vector2<f64>) -> bool {
        let (x, y) = (z.x, z.y);
        if x <= 0.0 {
            return false;
        }
        let lower_ok = match self.alpha1 {
            Slope::NegInf => true,
            Slope::Finite(s) => y > s * x,
            Slope::PosInf => false,
        };
        let upper_ok = match self.alpha2 {
            Slope::NegInf => false,
            Slope::Finite(s) => y < s * x,
            Slope::PosInf => true,
        };
        lower_ok && upper_ok
    }

    /// Angular width in the turning frame.
    pub fn theta_width(&self) -> f64 {
        self.theta_tilde1 - self.theta_tilde2
    }

    /// Exit-rate upper-bound exponent ln(2) omega / (theta1 - theta2).
    pub fn exit_rate_bound(&self, params: &ModelParams) -> f64 {
        std::f64::consts::LN_2 * params.omega() / self.theta_width()
    }
}

pub fn sector_angles(params: &ModelParams, alpha1: Slope, alpha2: Slope) -> Result<AngularSector> {
    params.require_oscillatory()?;
    if !alpha1.lt(&alpha2) {
        return Err(BubbleError::InvalidInput(format!(
            "sector slopes must satisfy alpha1 < alpha2, got {alpha1:?} >= {alpha2:?}"
        )));
    }
    let omega = params.omega();
    let arg = |alpha: Slope| -> f64 {
        match alpha {
            // Arctan limits: alpha -> -inf gives +pi/2, alpha -> +inf gives -pi/2.
            Slope::NegInf => std::f64::consts::FRAC_PI_2,
            Slope::PosInf => -std::f64::consts::FRAC_PI_2,
            Slope::Finite(s) => ((params.a / 2.0 - params.b - s) / omega).atan(),
        }
    };
    Ok(AngularSector {
        alpha1,
        alpha2,
        theta_tilde1: arg(alpha1),
        theta_tilde2: arg(alpha2),
    })
}

/// Memory kernel of the order-k model: weight(s) = b (k-2)! g_{b,k}(s) with
/// g_{b,k}(s) = e^{-bs} sum_{l=0}^{k-2} (bs)^l / l!.
///
/// k = 2 recovers the exponential window b e^{-bs}; the window length of the
/// underlying agents is Gamma(k, b) distributed, mean k/b.
#[derive(Debug, Clone, Copy)]
pub struct MemoryKernel {
    pub k: usize,
    pub b: f64,
}

impl MemoryKernel {
    pub fn new(k: usize, b: f64) -> Result<Self> {
        if k < 2 {
            return Err(BubbleError::InvalidParameter(format!(
                "memory order k must be >= 2, got {k}"
            )));
        }
        if !(b > 0.0) {
            return Err(BubbleError::InvalidParameter(format!(
                "kernel decay rate b must be > 0, got {b}"
            )));
        }
        Ok(Self { k, b })
    }

    /// g_{b,k}(s), the truncated-Poisson tail weight.
    pub fn g(&self, s: f64) -> f64 {
        let bs = self.b * s;
        let mut term = 1.0;
        let mut sum = 1.0;
        for l in 1..=(self.k - 2) {
            term *= bs / l as f64;
            sum += term;
        }
        (-bs).exp() * sum
    }

    /// b (k-2)! g_{b,k}(s), the drift weight of the integro-SDE.
    pub fn weight(&self, s: f64) -> f64 {
        let fact: f64 = (1..=(self.k.saturating_sub(2))).map(|l| l as f64).product();
        self.b * fact * self.g(s)
    }
}

/// Pointwise evaluation of the drift weight on a grid.
pub fn kernel_weights(k: usize, b: f64, s_grid: &[f64]) -> Result<Vec<f64>> {
    let kernel = MemoryKernel::new(k, b)?;
    Ok(s_grid.iter().map(|&s| kernel.weight(s)).collect())
}
