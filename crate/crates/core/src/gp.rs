//! Gaussian-process regression over 1-D (bid) and 2-D (bid × budget) inputs.
//!
//! Inputs are mapped to `[0, 1]` per dimension before the kernel is applied,
//! and targets are divided by a fixed scale, so that the squared-exponential
//! kernel with unit amplitude is a sensible default whatever the units of the
//! modelled quantity. Everything returned to callers is in raw units.
//!
//! The Gram matrix `K + λI` is held as a packed lower Cholesky factor that is
//! extended by one row per observation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("Gram matrix is numerically singular (condition estimate {condition_estimate:.3e})")]
    IllConditioned { condition_estimate: f64 },
    #[error("non-finite target {0}")]
    NonFiniteTarget(f64),
    #[error("input has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid hyperparameter: {0}")]
    Hyperparameter(String),
}

/// Squared-exponential kernel `a · exp(-½ Σ_d (u_d - v_d)² / l_d²)` on scaled inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    length_scales: Vec<f64>,
    amplitude: f64,
}

impl Kernel {
    pub fn squared_exponential(length_scales: Vec<f64>, amplitude: f64) -> Result<Self, GpError> {
        if length_scales.is_empty() || length_scales.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(GpError::Hyperparameter(format!(
                "length scales must be positive and finite, got {length_scales:?}"
            )));
        }
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(GpError::Hyperparameter(format!(
                "amplitude must be positive, got {amplitude}"
            )));
        }
        Ok(Self {
            length_scales,
            amplitude,
        })
    }

    pub fn dim(&self) -> usize {
        self.length_scales.len()
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn length_scales(&self) -> &[f64] {
        &self.length_scales
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut r2 = 0.0;
        for ((x, y), l) in a.iter().zip(b).zip(&self.length_scales) {
            let d = (x - y) / l;
            r2 += d * d;
        }
        self.amplitude * (-0.5 * r2).exp()
    }
}

/// Prior mean function, in raw target units over raw inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorMean {
    Zero,
    Constant { value: f64 },
    /// `intercept + Σ_d slopes[d] · x_d`.
    Linear { intercept: f64, slopes: Vec<f64> },
    /// Tabulated values; a query takes the value of the nearest listed point.
    Table { points: Vec<Vec<f64>>, values: Vec<f64> },
}

impl PriorMean {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            PriorMean::Zero => 0.0,
            PriorMean::Constant { value } => *value,
            PriorMean::Linear { intercept, slopes } => {
                intercept + slopes.iter().zip(x).map(|(s, v)| s * v).sum::<f64>()
            }
            PriorMean::Table { points, values } => {
                let mut best = (f64::INFINITY, 0.0);
                for (p, &v) in points.iter().zip(values) {
                    let d: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d < best.0 {
                        best = (d, v);
                    }
                }
                best.1
            }
        }
    }
}

/// Affine map of each input dimension onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InputScaling {
    pub fn identity(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        for ((v, lo), hi) in x.iter().zip(&self.lower).zip(&self.upper) {
            let span = hi - lo;
            out.push(if span > 0.0 { (v - lo) / span } else { v - lo });
        }
    }
}

/// Hyperparameters and fixed transforms of one GP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub kernel: Kernel,
    /// Observation noise variance λ, in scaled target units.
    pub noise: f64,
    /// Raw targets are divided by this before fitting.
    pub target_scale: f64,
    pub scaling: InputScaling,
    pub prior: PriorMean,
}

impl GpConfig {
    pub fn new(kernel: Kernel, noise: f64) -> Self {
        let dim = kernel.dim();
        Self {
            kernel,
            noise,
            target_scale: 1.0,
            scaling: InputScaling::identity(dim),
            prior: PriorMean::Zero,
        }
    }

    pub fn with_target_scale(mut self, scale: f64) -> Self {
        self.target_scale = scale;
        self
    }

    pub fn with_scaling(mut self, scaling: InputScaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn with_prior(mut self, prior: PriorMean) -> Self {
        self.prior = prior;
        self
    }

    fn validate(&self) -> Result<(), GpError> {
        if !(self.noise.is_finite() && self.noise > 0.0) {
            return Err(GpError::Hyperparameter(format!(
                "noise variance must be positive, got {}",
                self.noise
            )));
        }
        if !(self.target_scale.is_finite() && self.target_scale > 0.0) {
            return Err(GpError::Hyperparameter(format!(
                "target scale must be positive, got {}",
                self.target_scale
            )));
        }
        let dim = self.kernel.dim();
        if self.scaling.lower.len() != dim || self.scaling.upper.len() != dim {
            return Err(GpError::Hyperparameter("input scaling dimension mismatch".into()));
        }
        Ok(())
    }
}

/// Marginal posterior at one input, in raw units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Packed lower-triangular Cholesky factor, grown one row at a time.
#[derive(Debug, Clone, Default, PartialEq)]
struct Cholesky {
    n: usize,
    data: Vec<f64>,
    max_pivot: f64,
}

impl Cholesky {
    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.data[start..start + i + 1]
    }

    /// Appends the row for a new point given its covariances with the
    /// existing points and its own diagonal entry.
    fn push(&mut self, cross: &[f64], diag: f64) -> Result<(), GpError> {
        let mut row = cross.to_vec();
        self.forward_solve(&mut row);
        let pivot2 = diag - row.iter().map(|v| v * v).sum::<f64>();
        let floor = diag.abs() * 1e-13;
        if !(pivot2 > floor) {
            let max_pivot = self.max_pivot.max(diag.sqrt());
            return Err(GpError::IllConditioned {
                condition_estimate: max_pivot * max_pivot / pivot2.abs().max(f64::MIN_POSITIVE),
            });
        }
        let pivot = pivot2.sqrt();
        self.max_pivot = self.max_pivot.max(pivot);
        row.push(pivot);
        self.data.extend_from_slice(&row);
        self.n += 1;
        Ok(())
    }

    /// Solves `L z = b` in place.
    fn forward_solve(&self, b: &mut [f64]) {
        for i in 0..self.n {
            let row = self.row(i);
            let mut s = b[i];
            for k in 0..i {
                s -= row[k] * b[k];
            }
            b[i] = s / row[i];
        }
    }

    /// Solves `Lᵀ z = b` in place.
    fn backward_solve(&self, b: &mut [f64]) {
        for i in (0..self.n).rev() {
            let row = self.row(i);
            b[i] /= row[i];
            let bi = b[i];
            for k in 0..i {
                b[k] -= row[k] * bi;
            }
        }
    }

    fn log_det(&self) -> f64 {
        2.0 * (0..self.n).map(|i| self.row(i)[i].ln()).sum::<f64>()
    }
}

/// Observations plus the factorized Gram matrix of one GP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GpSnapshot", try_from = "GpSnapshot")]
pub struct GpState {
    config: GpConfig,
    dim: usize,
    raw_inputs: Vec<f64>,
    scaled_inputs: Vec<f64>,
    targets: Vec<f64>,
    /// Scaled residuals `(target - m(x)) / scale`.
    residuals: Vec<f64>,
    chol: Cholesky,
    /// `Φ⁻¹ · residuals`.
    alpha: Vec<f64>,
}

/// Persisted form of a [`GpState`]; the factor is rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSnapshot {
    pub config: GpConfig,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl From<GpState> for GpSnapshot {
    fn from(state: GpState) -> Self {
        GpSnapshot {
            inputs: state.inputs().map(<[f64]>::to_vec).collect(),
            targets: state.targets,
            config: state.config,
        }
    }
}

impl TryFrom<GpSnapshot> for GpState {
    type Error = GpError;
    fn try_from(snap: GpSnapshot) -> Result<Self, Self::Error> {
        GpState::fit(snap.config, &snap.inputs, &snap.targets)
    }
}

impl GpState {
    pub fn new(config: GpConfig) -> Result<Self, GpError> {
        config.validate()?;
        let dim = config.kernel.dim();
        Ok(Self {
            config,
            dim,
            raw_inputs: Vec::new(),
            scaled_inputs: Vec::new(),
            targets: Vec::new(),
            residuals: Vec::new(),
            chol: Cholesky::default(),
            alpha: Vec::new(),
        })
    }

    /// Fits all observations at once.
    pub fn fit(config: GpConfig, inputs: &[Vec<f64>], targets: &[f64]) -> Result<Self, GpError> {
        let mut state = Self::new(config)?;
        for (x, &y) in inputs.iter().zip(targets) {
            state.push_unsolved(x, y)?;
        }
        state.refresh_alpha();
        Ok(state)
    }

    pub fn config(&self) -> &GpConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn inputs(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.raw_inputs.chunks_exact(self.dim)
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    fn scaled_input(&self, i: usize) -> &[f64] {
        &self.scaled_inputs[i * self.dim..(i + 1) * self.dim]
    }

    fn scale(&self, x: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim);
        self.config.scaling.apply(x, &mut out);
        out
    }

    fn cross_covariances(&self, scaled: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|h| self.config.kernel.eval(scaled, self.scaled_input(h)))
            .collect()
    }

    fn push_unsolved(&mut self, x: &[f64], target: f64) -> Result<(), GpError> {
        if x.len() != self.dim {
            return Err(GpError::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !target.is_finite() {
            return Err(GpError::NonFiniteTarget(target));
        }
        let scaled = self.scale(x);
        let cross = self.cross_covariances(&scaled);
        let diag = self.config.kernel.eval(&scaled, &scaled) + self.config.noise;
        self.chol.push(&cross, diag)?;
        self.raw_inputs.extend_from_slice(x);
        self.scaled_inputs.extend_from_slice(&scaled);
        self.targets.push(target);
        self.residuals
            .push((target - self.config.prior.eval(x)) / self.config.target_scale);
        Ok(())
    }

    fn refresh_alpha(&mut self) {
        let mut alpha = self.residuals.clone();
        self.chol.forward_solve(&mut alpha);
        self.chol.backward_solve(&mut alpha);
        self.alpha = alpha;
    }

    /// Adds one observation, extending the factor by a single row.
    pub fn add_observation(&mut self, x: &[f64], target: f64) -> Result<(), GpError> {
        self.push_unsolved(x, target)?;
        self.refresh_alpha();
        Ok(())
    }

    /// Keeps only the most recent `count` observations.
    pub fn retain_last(&mut self, count: usize) -> Result<(), GpError> {
        if self.len() <= count {
            return Ok(());
        }
        let skip = self.len() - count;
        let inputs: Vec<Vec<f64>> = self.inputs().skip(skip).map(<[f64]>::to_vec).collect();
        let targets = self.targets[skip..].to_vec();
        *self = Self::fit(self.config.clone(), &inputs, &targets)?;
        Ok(())
    }

    /// Posterior mean and variance at `x`.
    ///
    /// Round-off can push the variance slightly below zero; it is clamped.
    pub fn posterior(&self, x: &[f64]) -> Posterior {
        let scaled = self.scale(x);
        let prior_var = self.config.kernel.eval(&scaled, &scaled);
        let s = self.config.target_scale;
        let prior_mean = self.config.prior.eval(x);
        if self.is_empty() {
            return Posterior {
                mean: prior_mean,
                variance: prior_var * s * s,
            };
        }
        let mut k = self.cross_covariances(&scaled);
        let mean_shift: f64 = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        self.chol.forward_solve(&mut k);
        let explained: f64 = k.iter().map(|v| v * v).sum();
        Posterior {
            mean: prior_mean + s * mean_shift,
            variance: (prior_var - explained).max(0.0) * s * s,
        }
    }

    pub fn posterior_batch(&self, points: &[Vec<f64>]) -> Vec<Posterior> {
        points.iter().map(|p| self.posterior(p)).collect()
    }

    /// Joint posterior covariance over `points`, row-major, raw units.
    pub fn posterior_covariance(&self, points: &[Vec<f64>]) -> Vec<f64> {
        let m = points.len();
        let scaled: Vec<Vec<f64>> = points.iter().map(|p| self.scale(p)).collect();
        let solved: Vec<Vec<f64>> = scaled
            .iter()
            .map(|p| {
                let mut k = self.cross_covariances(p);
                self.chol.forward_solve(&mut k);
                k
            })
            .collect();
        let s2 = self.config.target_scale * self.config.target_scale;
        let mut cov = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..=i {
                let prior = self.config.kernel.eval(&scaled[i], &scaled[j]);
                let explained: f64 = solved[i].iter().zip(&solved[j]).map(|(a, b)| a * b).sum();
                let c = (prior - explained) * s2;
                cov[i * m + j] = c;
                cov[j * m + i] = c;
            }
        }
        cov
    }

    /// `½ log|I + K/λ|` over the observed inputs, from the Cholesky factor.
    pub fn information_gain(&self) -> f64 {
        let n = self.len() as f64;
        0.5 * (self.chol.log_det() - n * self.config.noise.ln())
    }

    /// The same quantity accumulated as `½ Σ_h log(1 + σ²_{h-1}(x_h)/λ)`,
    /// replaying the observations and querying the predictive variance
    /// before each one.
    pub fn information_gain_sequential(&self) -> Result<f64, GpError> {
        let mut replay = GpState::new(self.config.clone())?;
        let s2 = self.config.target_scale * self.config.target_scale;
        let mut total = 0.0;
        for (x, &y) in self.inputs().zip(&self.targets) {
            let var = replay.posterior(x).variance / s2;
            total += (1.0 + var / self.config.noise).ln();
            replay.add_observation(x, y)?;
        }
        Ok(0.5 * total)
    }
}

/// Upper bound `e^{-b/2}` on `P(|f(x) - μ(x)| ≥ √b σ(x))` for a Gaussian marginal.
pub fn gaussian_tail_bound(b: f64) -> f64 {
    (-0.5 * b).exp()
}
