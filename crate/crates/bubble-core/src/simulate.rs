//! Path generation: exact Gaussian stepping, Euler-Maruyama, direct
//! integration of the order-k memory SDE, and the matched 1-D OU comparator.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{BubbleError, Result};
use crate::gaussian::{drift_exp, psd_sqrt_2x2, CovarianceSchedule};
use crate::model::{drift_system, ModelParams};
use crate::rng::RngPolicy;

/// Uniformly sampled path of the planar state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<Vector2<f64>>,
}

impl Trajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        let dt = self.dt;
        (0..self.states.len()).map(move |i| i as f64 * dt)
    }

    pub fn x(&self) -> impl Iterator<Item = f64> + '_ {
        self.states.iter().map(|z| z.x)
    }
}

/// Uniformly sampled scalar path (matched OU comparator).
#[derive(Debug, Clone)]
pub struct ScalarTrajectory {
    pub dt: f64,
    pub values: Vec<f64>,
}

/// Path of the order-k system: state = (X, m_0, ..., m_{k-2}) stored row-major.
#[derive(Debug, Clone)]
pub struct MemoryTrajectory {
    pub dt: f64,
    pub k: usize,
    data: Vec<f64>,
    params: ModelParams,
}

impl MemoryTrajectory {
    pub fn len(&self) -> usize {
        self.data.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn x(&self, i: usize) -> f64 {
        self.data[i * self.k]
    }

    /// The companion of X: b (k-2)! sum_l m_l - b X. For k = 2 this is the
    /// Markov pair's second coordinate Y.
    pub fn y_equivalent(&self, i: usize) -> f64 {
        let s = self.state(i);
        let fact: f64 = (1..=(self.k - 2)).map(|l| l as f64).product();
        let mem: f64 = s[1..].iter().sum();
        self.params.b * fact * mem - self.params.b * s[0]
    }
}

/// Precomputed one-step exact sampler: z' = Phi z + L xi.
pub struct ExactStepper {
    pub phi: Matrix2<f64>,
    pub noise_sqrt: Matrix2<f64>,
    pub dt: f64,
}

impl ExactStepper {
    pub fn new(params: &ModelParams, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(BubbleError::InvalidInput(format!(
                "step size must be positive, got {dt}"
            )));
        }
        let cov = CovarianceSchedule::new(*params).sigma_at(dt);
        Ok(Self {
            phi: drift_exp(params, dt),
            noise_sqrt: psd_sqrt_2x2(&cov),
            dt,
        })
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, z: &Vector2<f64>, rng: &mut R) -> Vector2<f64> {
        let xi = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        self.phi * z + self.noise_sqrt * xi
    }
}

/// Exact path: every step is a draw from the closed-form transition law, so
/// the marginal at step m has exactly the law of Z_{m dt}.
pub fn exact_path<R: Rng + ?Sized>(
    params: &ModelParams,
    z0: &Vector2<f64>,
    dt: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    let stepper = ExactStepper::new(params, dt)?;
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut z = *z0;
    states.push(z);
    for _ in 0..n_steps {
        z = stepper.step(&z, rng);
        states.push(z);
    }
    Ok(Trajectory { dt, states })
}

/// Explicit Euler-Maruyama path; weak error O(dt) in moments at fixed time.
pub fn euler_path<R: Rng + ?Sized>(
    params: &ModelParams,
    z0: &Vector2<f64>,
    dt: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(BubbleError::InvalidInput(format!(
            "step size must be positive, got {dt}"
        )));
    }
    let sys = drift_system(params);
    let sqrt_dt = dt.sqrt();
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut z = *z0;
    states.push(z);
    for _ in 0..n_steps {
        let xi: f64 = rng.sample(StandardNormal);
        z += sys.drift * z * dt + sys.noise * (sqrt_dt * xi);
        states.push(z);
    }
    Ok(Trajectory { dt, states })
}

/// One-step exact integrator for the augmented order-k linear system.
///
/// State w = (X, m_0, ..., m_{k-2}) with m_l the exponential-polynomial
/// memory components: dm_0 = -b m_0 dt + dX, dm_l = b(m_{l-1} - m_l) dt, and
/// dX = (-a X + b (k-2)! sum_l m_l) dt + c dB. The per-step transition is
/// computed once via the Van Loan block-exponential, then applied exactly.
pub struct MemoryStepper {
    phi: DMatrix<f64>,
    noise_sqrt: DMatrix<f64>,
    pub k: usize,
    pub dt: f64,
}

impl MemoryStepper {
    pub fn new(params: &ModelParams, k: usize, dt: f64) -> Result<Self> {
        if k < 2 {
            return Err(BubbleError::InvalidParameter(format!(
                "memory order k must be >= 2, got {k}"
            )));
        }
        if !(dt > 0.0) {
            return Err(BubbleError::InvalidInput(format!(
                "step size must be positive, got {dt}"
            )));
        }
        let (a, b, c) = (params.a, params.b, params.c);
        let fact: f64 = (1..=(k - 2)).map(|l| l as f64).product();
        let dim = k;
        let mut gen = DMatrix::zeros(dim, dim);
        gen[(0, 0)] = -a;
        for l in 0..=(k - 2) {
            gen[(0, 1 + l)] = b * fact;
        }
        // m_0 receives dX in full, including its drift row
        for j in 0..dim {
            gen[(1, j)] = gen[(0, j)];
        }
        gen[(1, 1)] += -b;
        for l in 1..=(k - 2) {
            gen[(1 + l, 1 + l)] = -b;
            gen[(1 + l, l)] = b;
        }
        let mut noise = DVector::zeros(dim);
        noise[0] = c;
        noise[1] = c;
        // Van Loan: exp([[-G, NN^T],[0, G^T]] dt) = [[.., F^{-T} Q],[0, F^T]]
        let mut block = DMatrix::zeros(2 * dim, 2 * dim);
        block.view_mut((0, 0), (dim, dim)).copy_from(&(-&gen * dt));
        block
            .view_mut((0, dim), (dim, dim))
            .copy_from(&(&noise * noise.transpose() * dt));
        block
            .view_mut((dim, dim), (dim, dim))
            .copy_from(&(gen.transpose() * dt));
        let e = block.exp();
        let f3 = e.view((dim, dim), (dim, dim)).into_owned();
        let g2 = e.view((0, dim), (dim, dim)).into_owned();
        let phi = f3.transpose();
        let q = &phi * g2;
        let q = (&q + q.transpose()) * 0.5;
        let noise_sqrt = psd_sqrt_dyn(&q);
        Ok(Self {
            phi,
            noise_sqrt,
            k,
            dt,
        })
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, w: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let xi = DVector::from_fn(self.k, |_, _| rng.sample(StandardNormal));
        &self.phi * w + &self.noise_sqrt * xi
    }
}

/// Symmetric PSD square root via eigendecomposition, tolerating zero noise
/// and the rank-deficient c = 0 case.
fn psd_sqrt_dyn(m: &DMatrix<f64>) -> DMatrix<f64> {
    let se = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&se.eigenvalues.map(|e| e.max(0.0).sqrt()));
    &se.eigenvectors * d * se.eigenvectors.transpose()
}

/// Direct integration of the order-k integro-SDE from X_0 = x0 (memory
/// components start at zero, matching the time-origin convention).
pub fn memory_path<R: Rng + ?Sized>(
    params: &ModelParams,
    k: usize,
    x0: f64,
    dt: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<MemoryTrajectory> {
    let stepper = MemoryStepper::new(params, k, dt)?;
    let mut data = Vec::with_capacity((n_steps + 1) * k);
    let mut w = DVector::zeros(k);
    w[0] = x0;
    data.extend_from_slice(w.as_slice());
    for _ in 0..n_steps {
        w = stepper.step(&w, rng);
        data.extend_from_slice(w.as_slice());
    }
    Ok(MemoryTrajectory {
        dt,
        k,
        data,
        params: *params,
    })
}

/// Mean-reversion rate of the 1-D OU comparator with the same stationary
/// X-variance c^2 (a+b) / (2 a^2): theta = a^2 / (a+b).
pub fn matched_ou_rate(params: &ModelParams) -> f64 {
    params.a * params.a / (params.a + params.b)
}

/// Exact path of the matched OU process dX = -theta X dt + c dB.
pub fn matched_ou_path<R: Rng + ?Sized>(
    params: &ModelParams,
    x0: f64,
    dt: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<ScalarTrajectory> {
    if !(dt > 0.0) {
        return Err(BubbleError::InvalidInput(format!(
            "step size must be positive, got {dt}"
        )));
    }
    let theta = matched_ou_rate(params);
    let decay = (-theta * dt).exp();
    let step_sd = (params.c * params.c * (1.0 - decay * decay) / (2.0 * theta)).sqrt();
    let mut values = Vec::with_capacity(n_steps + 1);
    let mut x = x0;
    values.push(x);
    for _ in 0..n_steps {
        let xi: f64 = rng.sample(StandardNormal);
        x = decay * x + step_sd * xi;
        values.push(x);
    }
    Ok(ScalarTrajectory { dt, values })
}

/// Run `n_paths` independent path computations in parallel; path i always
/// sees stream i of the policy, so results do not depend on thread count.
pub fn par_ensemble<T, F>(policy: &RngPolicy, n_paths: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, rand_chacha::ChaCha12Rng) -> T + Sync,
{
    (0..n_paths)
        .into_par_iter()
        .map(|i| f(i, policy.stream(i as u64)))
        .collect()
}
