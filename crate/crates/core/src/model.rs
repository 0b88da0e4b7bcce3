//! Fast-slow SDE model definition, the κ weight matrix, and structural
//! validation.
//!
//! A model is the coefficient tuple (c_θ, σ, f, τ₁, τ₂) of
//!
//! ```text
//! dX = c_θ(X, Y) dt + √ϵ σ(X, Y) dW
//! dY = (1/δ) f(X, Y) dt + (1/√δ) [τ₁(X, Y) dW + τ₂(X, Y) dB]
//! ```
//!
//! together with dimensions, the parameter box Θ, and the initial
//! condition. Coefficients are plain closures writing into caller-provided
//! buffers so the simulation and likelihood loops stay allocation-free.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::num::Real;
use crate::rng;

/// Parametric slow drift c_θ: `(theta, x, y, out[dim_slow])`.
pub type SlowDriftFn<T> = Arc<dyn Fn(&[T], &[T], &[T], &mut [T]) + Send + Sync>;
/// θ-gradient of the slow drift: `(theta, x, y, out[dim_slow × dim_param])`, row-major.
pub type SlowDriftGradFn<T> = Arc<dyn Fn(&[T], &[T], &[T], &mut [T]) + Send + Sync>;
/// θ-free coefficient (σ, f, τ₁, τ₂): `(x, y, out)`, matrices row-major.
pub type CoeffFn<T> = Arc<dyn Fn(&[T], &[T], &mut [T]) + Send + Sync>;
/// Averaged drift c̄_θ: `(theta, x, out[dim_slow])`.
pub type AveragedDriftFn<T> = Arc<dyn Fn(&[T], &[T], &mut [T]) + Send + Sync>;

/// Condition-number ceiling above which a diffusion Gram matrix is treated
/// as singular.
pub const GRAM_COND_LIMIT: f64 = 1e8;

/// The pair ε = (ϵ, δ): slow-noise intensity and timescale separation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonPair<T> {
    pub eps: T,
    pub delta: T,
}

impl<T: Real> EpsilonPair<T> {
    pub fn new(eps: T, delta: T) -> Result<Self> {
        if !(eps > T::zero()) || !eps.is_finite() {
            return Err(Error::InvalidConfig(format!("eps must be positive, got {eps}")));
        }
        if !(delta > T::zero()) || !delta.is_finite() {
            return Err(Error::InvalidConfig(format!("delta must be positive, got {delta}")));
        }
        Ok(EpsilonPair { eps, delta })
    }

    /// True when δ > ϵ, outside the regime δ ≤ ϵ^α the normality theory
    /// assumes; callers attach a warning rather than reject.
    pub fn delta_exceeds_eps(&self) -> bool {
        self.delta > self.eps
    }
}

/// Axis-aligned parameter box Θ (open, bounded; closure Θ̄ used for argmax).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDomain<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Real> ParamDomain<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidConfig("parameter bounds must be non-empty and equal length".into()));
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidConfig(format!("parameter bound {i} is not finite")));
            }
            if !(hi > lo) {
                return Err(Error::InvalidConfig(format!(
                    "parameter domain must have strictly positive width in coordinate {i}"
                )));
            }
        }
        Ok(ParamDomain { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    /// Membership in the closure Θ̄.
    pub fn contains(&self, theta: &[T]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&t, (&lo, &hi))| t >= lo && t <= hi)
    }

    /// Clamp onto Θ̄ coordinate-wise.
    pub fn project(&self, theta: &mut [T]) {
        for i in 0..theta.len() {
            if theta[i] < self.lower[i] {
                theta[i] = self.lower[i];
            } else if theta[i] > self.upper[i] {
                theta[i] = self.upper[i];
            }
        }
    }

    pub fn midpoint(&self) -> Vec<T> {
        let half = T::from_f64_lossy(0.5);
        self.lower.iter().zip(&self.upper).map(|(&lo, &hi)| (lo + hi) * half).collect()
    }

    /// Whether any coordinate sits on the boundary (relative tolerance on
    /// the box width).
    pub fn on_boundary(&self, theta: &[T]) -> bool {
        let tol = T::from_f64_lossy(1e-9);
        theta.iter().zip(self.lower.iter().zip(&self.upper)).any(|(&t, (&lo, &hi))| {
            let w = hi - lo;
            (t - lo).abs() <= tol * w || (hi - t).abs() <= tol * w
        })
    }

    /// k-th point of a Kronecker (additive golden-ratio) low-discrepancy
    /// sequence inside Θ; used for multi-start placement.
    pub fn low_discrepancy_point(&self, k: usize) -> Vec<T> {
        // generalized golden ratios: x^{d+1} = x + 1
        let d = self.dim();
        let mut phi = 2.0f64;
        for _ in 0..32 {
            phi = (1.0 + phi).powf(1.0 / (d as f64 + 1.0));
        }
        (0..d)
            .map(|j| {
                let alpha = (1.0 / phi.powi(j as i32 + 1)).fract();
                let u = (0.5 + alpha * (k as f64 + 1.0)).fract();
                self.lower[j] + (self.upper[j] - self.lower[j]) * T::from_f64_lossy(u)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub slow: usize,
    pub fast: usize,
    pub w: usize,
    pub b: usize,
    pub param: usize,
}

/// The fast-slow model: coefficients, dimensions, Θ, and initial state.
///
/// Immutable after construction; coefficient closures must be pure, so a
/// model can be shared freely across threads.
#[derive(Clone)]
pub struct MultiscaleModel<T> {
    dims: Dims,
    drift_slow: SlowDriftFn<T>,
    drift_slow_grad: Option<SlowDriftGradFn<T>>,
    diffusion_slow: CoeffFn<T>,
    drift_fast: CoeffFn<T>,
    diffusion_fast_w: CoeffFn<T>,
    diffusion_fast_b: CoeffFn<T>,
    param_domain: ParamDomain<T>,
    x0: Vec<T>,
    y0: Vec<T>,
    averaged_drift_override: Option<AveragedDriftFn<T>>,
    linear_in_theta: Option<CoeffFn<T>>,
    name: Option<String>,
}

impl<T: Real> std::fmt::Debug for MultiscaleModel<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MultiscaleModel")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("x0", &self.x0)
            .field("y0", &self.y0)
            .field("linear_in_theta", &self.linear_in_theta.is_some())
            .field("averaged_drift_override", &self.averaged_drift_override.is_some())
            .finish()
    }
}

impl<T: Real> MultiscaleModel<T> {
    pub fn builder() -> ModelBuilder<T> {
        ModelBuilder::default()
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn dim_slow(&self) -> usize {
        self.dims.slow
    }

    pub fn dim_fast(&self) -> usize {
        self.dims.fast
    }

    pub fn dim_w(&self) -> usize {
        self.dims.w
    }

    pub fn dim_b(&self) -> usize {
        self.dims.b
    }

    pub fn dim_param(&self) -> usize {
        self.dims.param
    }

    pub fn param_domain(&self) -> &ParamDomain<T> {
        &self.param_domain
    }

    pub fn x0(&self) -> &[T] {
        &self.x0
    }

    pub fn y0(&self) -> &[T] {
        &self.y0
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn is_linear_in_theta(&self) -> bool {
        self.linear_in_theta.is_some()
    }

    pub fn has_averaged_drift_override(&self) -> bool {
        self.averaged_drift_override.is_some()
    }

    #[inline(always)]
    pub fn drift_slow(&self, theta: &[T], x: &[T], y: &[T], out: &mut [T]) {
        (self.drift_slow)(theta, x, y, out)
    }

    #[inline(always)]
    pub fn diffusion_slow(&self, x: &[T], y: &[T], out: &mut [T]) {
        (self.diffusion_slow)(x, y, out)
    }

    #[inline(always)]
    pub fn drift_fast(&self, x: &[T], y: &[T], out: &mut [T]) {
        (self.drift_fast)(x, y, out)
    }

    #[inline(always)]
    pub fn diffusion_fast_w(&self, x: &[T], y: &[T], out: &mut [T]) {
        (self.diffusion_fast_w)(x, y, out)
    }

    #[inline(always)]
    pub fn diffusion_fast_b(&self, x: &[T], y: &[T], out: &mut [T]) {
        (self.diffusion_fast_b)(x, y, out)
    }

    /// Linear-in-θ basis g with c_θ = g·θ, when declared.
    #[inline(always)]
    pub fn linear_basis(&self, x: &[T], y: &[T], out: &mut [T]) -> bool {
        match &self.linear_in_theta {
            Some(g) => {
                g(x, y, out);
                true
            }
            None => false,
        }
    }

    /// Analytic averaged drift c̄_θ, when declared.
    pub fn averaged_drift_override(&self, theta: &[T], x: &[T], out: &mut [T]) -> bool {
        match &self.averaged_drift_override {
            Some(f) => {
                f(theta, x, out);
                true
            }
            None => false,
        }
    }

    pub fn has_drift_slow_grad(&self) -> bool {
        self.drift_slow_grad.is_some()
    }

    /// ∇_θ c_θ into `out[dim_slow × dim_param]` (row-major).
    ///
    /// Uses the supplied gradient when present, otherwise a central finite
    /// difference with step 1e-6·(1+‖θ‖).
    pub fn grad_drift_slow(&self, theta: &[T], x: &[T], y: &[T], out: &mut [T]) {
        debug_assert_eq!(out.len(), self.dims.slow * self.dims.param);
        if let Some(grad) = &self.drift_slow_grad {
            grad(theta, x, y, out);
            return;
        }
        let norm = linalg::dot(theta, theta).sqrt();
        let h = T::from_f64_lossy(1e-6) * (T::one() + norm);
        let mut th = theta.to_vec();
        let mut plus = vec![T::zero(); self.dims.slow];
        let mut minus = vec![T::zero(); self.dims.slow];
        for j in 0..self.dims.param {
            let orig = th[j];
            th[j] = orig + h;
            (self.drift_slow)(&th, x, y, &mut plus);
            th[j] = orig - h;
            (self.drift_slow)(&th, x, y, &mut minus);
            th[j] = orig;
            let two_h = h + h;
            for i in 0..self.dims.slow {
                out[i * self.dims.param + j] = (plus[i] - minus[i]) / two_h;
            }
        }
    }
}

/// Builder for [`MultiscaleModel`]; all coefficients and dimensions are
/// required, gradients/overrides optional.
pub struct ModelBuilder<T> {
    dims: Option<Dims>,
    drift_slow: Option<SlowDriftFn<T>>,
    drift_slow_grad: Option<SlowDriftGradFn<T>>,
    diffusion_slow: Option<CoeffFn<T>>,
    drift_fast: Option<CoeffFn<T>>,
    diffusion_fast_w: Option<CoeffFn<T>>,
    diffusion_fast_b: Option<CoeffFn<T>>,
    param_domain: Option<ParamDomain<T>>,
    x0: Option<Vec<T>>,
    y0: Option<Vec<T>>,
    averaged_drift_override: Option<AveragedDriftFn<T>>,
    linear_in_theta: Option<CoeffFn<T>>,
    name: Option<String>,
}

impl<T> Default for ModelBuilder<T> {
    fn default() -> Self {
        ModelBuilder {
            dims: None,
            drift_slow: None,
            drift_slow_grad: None,
            diffusion_slow: None,
            drift_fast: None,
            diffusion_fast_w: None,
            diffusion_fast_b: None,
            param_domain: None,
            x0: None,
            y0: None,
            averaged_drift_override: None,
            linear_in_theta: None,
            name: None,
        }
    }
}

impl<T: Real> ModelBuilder<T> {
    /// State/noise/parameter dimensions (d̂, d−d̂, dim W, dim B, dim θ).
    pub fn dims(mut self, slow: usize, fast: usize, w: usize, b: usize, param: usize) -> Self {
        self.dims = Some(Dims { slow, fast, w, b, param });
        self
    }

    pub fn drift_slow(mut self, f: impl Fn(&[T], &[T], &[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.drift_slow = Some(Arc::new(f));
        self
    }

    pub fn drift_slow_grad(
        mut self,
        f: impl Fn(&[T], &[T], &[T], &mut [T]) + Send + Sync + 'static,
    ) -> Self {
        self.drift_slow_grad = Some(Arc::new(f));
        self
    }

    pub fn diffusion_slow(mut self, f: impl Fn(&[T], &[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.diffusion_slow = Some(Arc::new(f));
        self
    }

    pub fn drift_fast(mut self, f: impl Fn(&[T], &[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.drift_fast = Some(Arc::new(f));
        self
    }

    pub fn diffusion_fast_w(mut self, f: impl Fn(&[T], &[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.diffusion_fast_w = Some(Arc::new(f));
        self
    }

    pub fn diffusion_fast_b(mut self, f: impl Fn(&[T], &[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.diffusion_fast_b = Some(Arc::new(f));
        self
    }

    pub fn param_domain(mut self, domain: ParamDomain<T>) -> Self {
        self.param_domain = Some(domain);
        self
    }

    pub fn initial_state(mut self, x0: Vec<T>, y0: Vec<T>) -> Self {
        self.x0 = Some(x0);
        self.y0 = Some(y0);
        self
    }

    pub fn averaged_drift_override(
        mut self,
        f: impl Fn(&[T], &[T], &mut [T]) + Send + Sync + 'static,
    ) -> Self {
        self.averaged_drift_override = Some(Arc::new(f));
        self
    }

    pub fn linear_in_theta(mut self, g: impl Fn(&[T], &[T], &mut [T]) + Send + Sync + 'static) -> Self {
        self.linear_in_theta = Some(Arc::new(g));
        self
    }

    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn build(self) -> Result<MultiscaleModel<T>> {
        let dims = self.dims.ok_or_else(|| Error::InvalidConfig("dims missing".into()))?;
        for (label, v) in
            [("dim_slow", dims.slow), ("dim_fast", dims.fast), ("dim_w", dims.w), ("dim_b", dims.b), ("dim_param", dims.param)]
        {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{label} must be positive")));
            }
        }
        let param_domain =
            self.param_domain.ok_or_else(|| Error::InvalidConfig("param_domain missing".into()))?;
        if param_domain.dim() != dims.param {
            return Err(Error::InvalidConfig(format!(
                "param_domain dimension {} does not match dim_param {}",
                param_domain.dim(),
                dims.param
            )));
        }
        let x0 = self.x0.ok_or_else(|| Error::InvalidConfig("initial state missing".into()))?;
        let y0 = self.y0.ok_or_else(|| Error::InvalidConfig("initial state missing".into()))?;
        if x0.len() != dims.slow || y0.len() != dims.fast {
            return Err(Error::InvalidConfig("initial state dimension mismatch".into()));
        }
        if !x0.iter().chain(&y0).all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("initial state must be finite".into()));
        }

        let model = MultiscaleModel {
            dims,
            drift_slow: self.drift_slow.ok_or_else(|| Error::InvalidConfig("drift_slow missing".into()))?,
            drift_slow_grad: self.drift_slow_grad,
            diffusion_slow: self
                .diffusion_slow
                .ok_or_else(|| Error::InvalidConfig("diffusion_slow missing".into()))?,
            drift_fast: self.drift_fast.ok_or_else(|| Error::InvalidConfig("drift_fast missing".into()))?,
            diffusion_fast_w: self
                .diffusion_fast_w
                .ok_or_else(|| Error::InvalidConfig("diffusion_fast_w missing".into()))?,
            diffusion_fast_b: self
                .diffusion_fast_b
                .ok_or_else(|| Error::InvalidConfig("diffusion_fast_b missing".into()))?,
            param_domain,
            x0,
            y0,
            averaged_drift_override: self.averaged_drift_override,
            linear_in_theta: self.linear_in_theta,
            name: self.name,
        };

        // one probe evaluation at the domain midpoint to catch panics and
        // non-finite outputs early
        let theta = model.param_domain.midpoint();
        let mut buf = vec![T::zero(); model.dims.slow.max(model.dims.fast) * model.dims.w.max(model.dims.b).max(model.dims.param)];
        model.drift_slow(&theta, &model.x0, &model.y0, &mut buf[..model.dims.slow]);
        if !buf[..model.dims.slow].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("drift_slow not finite at initial state".into()));
        }
        model.drift_fast(&model.x0, &model.y0, &mut buf[..model.dims.fast]);
        if !buf[..model.dims.fast].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("drift_fast not finite at initial state".into()));
        }
        Ok(model)
    }
}

/// Reusable buffers for the κ-derived weights along a path.
///
/// `eval` fills, for the current (x, y):
/// * `g` — the slow-space weight G = κᵀκ = (σσᵀ)⁻¹ + Mᵀ(τ₂τ₂ᵀ)M,
/// * `m` — the correction weight M = (τ₂τ₂ᵀ)⁻¹ τ₁ σᵀ(σσᵀ)⁻¹,
///
/// with no allocation, surfacing `SingularDiffusion` when either Gram
/// matrix exceeds the condition limit.
pub struct KappaWorkspace<T> {
    dims: Dims,
    pub sigma: Mat<T>,
    pub tau1: Mat<T>,
    pub tau2: Mat<T>,
    gram_s: Mat<T>,
    inv_gram_s: Mat<T>,
    scratch_s: Mat<T>,
    gram_t: Mat<T>,
    inv_gram_t: Mat<T>,
    scratch_t: Mat<T>,
    v_fs: Mat<T>,
    p_fs: Mat<T>,
    q_fs: Mat<T>,
    /// M = (τ₂τ₂ᵀ)⁻¹ τ₁ σᵀ(σσᵀ)⁻¹, `dim_fast × dim_slow`.
    pub m: Mat<T>,
    /// G = κᵀκ, `dim_slow × dim_slow`.
    pub g: Mat<T>,
}

impl<T: Real> KappaWorkspace<T> {
    pub fn new(model: &MultiscaleModel<T>) -> Self {
        let d = model.dims();
        KappaWorkspace {
            dims: d,
            sigma: Mat::zeros(d.slow, d.w),
            tau1: Mat::zeros(d.fast, d.w),
            tau2: Mat::zeros(d.fast, d.b),
            gram_s: Mat::zeros(d.slow, d.slow),
            inv_gram_s: Mat::zeros(d.slow, d.slow),
            scratch_s: Mat::zeros(d.slow, d.slow),
            gram_t: Mat::zeros(d.fast, d.fast),
            inv_gram_t: Mat::zeros(d.fast, d.fast),
            scratch_t: Mat::zeros(d.fast, d.fast),
            v_fs: Mat::zeros(d.fast, d.slow),
            p_fs: Mat::zeros(d.fast, d.slow),
            q_fs: Mat::zeros(d.fast, d.slow),
            m: Mat::zeros(d.fast, d.slow),
            g: Mat::zeros(d.slow, d.slow),
        }
    }

    #[inline]
    pub fn is_scalar(&self) -> bool {
        self.dims.slow == 1 && self.dims.fast == 1 && self.dims.w == 1 && self.dims.b == 1
    }

    pub fn eval(&mut self, model: &MultiscaleModel<T>, x: &[T], y: &[T]) -> Result<()> {
        if self.is_scalar() {
            return self.eval_scalar(model, x, y);
        }
        model.diffusion_slow(x, y, self.sigma.as_mut_slice());
        model.diffusion_fast_w(x, y, self.tau1.as_mut_slice());
        model.diffusion_fast_b(x, y, self.tau2.as_mut_slice());

        self.sigma.gram_into(&mut self.gram_s);
        if !linalg::invert_into(&self.gram_s, &mut self.scratch_s, &mut self.inv_gram_s) {
            return Err(singular("sigma sigma^T", f64::INFINITY, x, y));
        }
        let cond_s = (self.gram_s.norm_inf() * self.inv_gram_s.norm_inf()).to_f64_lossy();
        if !(cond_s <= GRAM_COND_LIMIT) {
            return Err(singular("sigma sigma^T", cond_s, x, y));
        }

        self.tau2.gram_into(&mut self.gram_t);
        if !linalg::invert_into(&self.gram_t, &mut self.scratch_t, &mut self.inv_gram_t) {
            return Err(singular("tau2 tau2^T", f64::INFINITY, x, y));
        }
        let cond_t = (self.gram_t.norm_inf() * self.inv_gram_t.norm_inf()).to_f64_lossy();
        if !(cond_t <= GRAM_COND_LIMIT) {
            return Err(singular("tau2 tau2^T", cond_t, x, y));
        }

        // v = τ₁ σᵀ, p = v (σσᵀ)⁻¹, M = (τ₂τ₂ᵀ)⁻¹ p
        self.tau1.matmul_nt_into(&self.sigma, &mut self.v_fs);
        self.v_fs.matmul_into(&self.inv_gram_s, &mut self.p_fs);
        self.inv_gram_t.matmul_into(&self.p_fs, &mut self.m);

        // G = (σσᵀ)⁻¹ + Mᵀ (τ₂τ₂ᵀ) M
        self.gram_t.matmul_into(&self.m, &mut self.q_fs);
        self.m.t_matmul_into(&self.q_fs, &mut self.g);
        for i in 0..self.dims.slow * self.dims.slow {
            self.g.as_mut_slice()[i] = self.g.as_slice()[i] + self.inv_gram_s.as_slice()[i];
        }
        Ok(())
    }

    /// All-scalar route: identical quantities without the small-matrix
    /// machinery. Keeps the shared buffers populated so [`stacked_kappa`]
    /// works the same way.
    ///
    /// [`stacked_kappa`]: KappaWorkspace::stacked_kappa
    #[inline]
    fn eval_scalar(&mut self, model: &MultiscaleModel<T>, x: &[T], y: &[T]) -> Result<()> {
        model.diffusion_slow(x, y, &mut self.sigma.as_mut_slice()[..1]);
        model.diffusion_fast_w(x, y, &mut self.tau1.as_mut_slice()[..1]);
        model.diffusion_fast_b(x, y, &mut self.tau2.as_mut_slice()[..1]);
        let s = self.sigma.as_slice()[0];
        let t1 = self.tau1.as_slice()[0];
        let t2 = self.tau2.as_slice()[0];
        let s2 = s * s;
        let t22 = t2 * t2;
        if !(s2 > T::zero()) || !s2.is_finite() {
            return Err(singular("sigma sigma^T", f64::INFINITY, x, y));
        }
        if !(t22 > T::zero()) || !t22.is_finite() {
            return Err(singular("tau2 tau2^T", f64::INFINITY, x, y));
        }
        let inv_s2 = T::one() / s2;
        let inv_t22 = T::one() / t22;
        let m = t1 / (t22 * s);
        self.gram_s.as_mut_slice()[0] = s2;
        self.inv_gram_s.as_mut_slice()[0] = inv_s2;
        self.gram_t.as_mut_slice()[0] = t22;
        self.inv_gram_t.as_mut_slice()[0] = inv_t22;
        self.m.as_mut_slice()[0] = m;
        self.g.as_mut_slice()[0] = inv_s2 + m * m * t22;
        Ok(())
    }

    /// Assemble the stacked κ matrix `[(dim_w + dim_b) × dim_slow]` from the
    /// current buffers (top block σᵀ(σσᵀ)⁻¹, bottom block −τ₂ᵀM).
    pub fn stacked_kappa(&self) -> Mat<T> {
        let d = self.dims;
        let mut out = Mat::zeros(d.w + d.b, d.slow);
        // top: σᵀ(σσᵀ)⁻¹ = ((σσᵀ)⁻¹σ)ᵀ
        let top_t = self.inv_gram_s.matmul(&self.sigma); // slow × w
        for r in 0..d.w {
            for c in 0..d.slow {
                out[(r, c)] = top_t[(c, r)];
            }
        }
        // bottom: −τ₂ᵀ M
        let mut bottom = Mat::zeros(d.b, d.slow);
        self.tau2.t_matmul_into(&self.m, &mut bottom);
        for r in 0..d.b {
            for c in 0..d.slow {
                out[(d.w + r, c)] = -bottom[(r, c)];
            }
        }
        out
    }
}

fn singular<T: Real>(which: &'static str, cond: f64, x: &[T], y: &[T]) -> Error {
    Error::SingularDiffusion {
        which,
        cond,
        limit: GRAM_COND_LIMIT,
        location: format!(
            "x = {:?}, y = {:?}",
            x.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>(),
            y.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>()
        ),
    }
}

/// κ(x, y): the stacked weight matrix
/// `[σᵀ(σσᵀ)⁻¹ ; −τ₂ᵀ(τ₂τ₂ᵀ)⁻¹τ₁σᵀ(σσᵀ)⁻¹]`
/// with `dim_w` top rows and `dim_b` bottom rows.
pub fn kappa<T: Real>(model: &MultiscaleModel<T>, x: &[T], y: &[T]) -> Result<Mat<T>> {
    let mut ws = KappaWorkspace::new(model);
    ws.eval(model, x, y)?;
    Ok(ws.stacked_kappa())
}

/// Sampling plan for [`validate_model`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeConfig<T> {
    /// Box for slow-state samples; empty means `[-2, 2]` per coordinate.
    pub x_box: Vec<(T, T)>,
    /// Radius ladder R₁ < … < R_k for the recurrence heuristic.
    pub radii: Vec<T>,
    /// Directions sampled per sphere |y| = R.
    pub n_directions: usize,
    /// Slow-state samples.
    pub n_x_samples: usize,
    /// θ samples (linearity / gradient checks).
    pub n_theta_samples: usize,
    pub seed: u64,
}

impl<T: Real> Default for ProbeConfig<T> {
    fn default() -> Self {
        ProbeConfig {
            x_box: Vec::new(),
            radii: [1.0, 2.0, 4.0, 8.0, 16.0].iter().map(|&r| T::from_f64_lossy(r)).collect(),
            n_directions: 32,
            n_x_samples: 8,
            n_theta_samples: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

/// Outcome of the sampling-based structural checks. Heuristic by nature:
/// a pass is evidence, not proof.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<ConditionCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&ConditionCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Sample-based validation of the model's structural conditions:
/// nondegenerate diffusion, recurrence of the fast drift, declared
/// linear-in-θ structure, finite outputs, and (when both are supplied)
/// agreement of the analytic θ-gradient with finite differences.
pub fn validate_model<T: Real>(model: &MultiscaleModel<T>, probe: &ProbeConfig<T>) -> ValidationReport {
    use rand::Rng;

    let d = model.dims();
    let mut rng = rng::rng_from_seed(probe.seed);
    let mut checks = Vec::new();

    let x_box: Vec<(T, T)> = if probe.x_box.is_empty() {
        (0..d.slow).map(|_| (T::from_f64_lossy(-2.0), T::from_f64_lossy(2.0))).collect()
    } else {
        probe.x_box.clone()
    };

    let sample_x = |rng: &mut rng::SimRng| -> Vec<T> {
        x_box
            .iter()
            .map(|&(lo, hi)| lo + (hi - lo) * T::from_f64_lossy(rng.random::<f64>()))
            .collect()
    };
    let sample_dir = |rng: &mut rng::SimRng| -> Vec<T> {
        loop {
            let v: Vec<T> = (0..d.fast).map(|_| T::standard_normal(rng)).collect();
            let n = linalg::dot(&v, &v).sqrt();
            if n > T::from_f64_lossy(1e-8) {
                return v.iter().map(|&c| c / n).collect();
            }
        }
    };

    let xs: Vec<Vec<T>> = (0..probe.n_x_samples.max(1)).map(|_| sample_x(&mut rng)).collect();
    let dirs: Vec<Vec<T>> = (0..probe.n_directions.max(1)).map(|_| sample_dir(&mut rng)).collect();
    let thetas: Vec<Vec<T>> = (0..probe.n_theta_samples.max(1))
        .map(|i| model.param_domain().low_discrepancy_point(i))
        .collect();

    // (a) nondegeneracy of the diffusion Gram matrices
    {
        let mut ws = KappaWorkspace::new(model);
        let mut failures = 0usize;
        let mut total = 0usize;
        let mut first: Option<String> = None;
        for x in &xs {
            for dir in &dirs {
                let y: Vec<T> = dir.to_vec();
                total += 1;
                if let Err(e) = ws.eval(model, x, &y) {
                    failures += 1;
                    if first.is_none() {
                        first = Some(e.to_string());
                    }
                }
            }
        }
        checks.push(ConditionCheck {
            name: "nondegeneracy".into(),
            status: if failures == 0 { CheckStatus::Pass } else { CheckStatus::Fail },
            detail: match first {
                None => format!("sigma*sigma^T and tau2*tau2^T well conditioned at {total} probe points"),
                Some(e) => format!("{failures}/{total} probe points singular; first: {e}"),
            },
        });
    }

    // (b) recurrence heuristic: max over samples of f(x, R d)·(R d) must
    // decrease along the radius ladder and be negative at the largest radius
    {
        let mut f_buf = vec![T::zero(); d.fast];
        let mut values = Vec::with_capacity(probe.radii.len());
        for &r in &probe.radii {
            let mut worst = T::neg_infinity();
            for x in &xs {
                for dir in &dirs {
                    let y: Vec<T> = dir.iter().map(|&c| c * r).collect();
                    model.drift_fast(x, &y, &mut f_buf);
                    let v = linalg::dot(&f_buf, &y);
                    if v > worst {
                        worst = v;
                    }
                }
            }
            values.push(worst);
        }
        let decreasing = values.windows(2).all(|w| w[1] < w[0]);
        let negative_tail = values.last().is_some_and(|&v| v < T::zero());
        let detail = format!(
            "max f(x,y)·y over radii {:?}: {:?}",
            probe.radii.iter().map(|r| r.to_f64_lossy()).collect::<Vec<_>>(),
            values.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>()
        );
        checks.push(ConditionCheck {
            name: "recurrence".into(),
            status: if decreasing && negative_tail { CheckStatus::Pass } else { CheckStatus::Fail },
            detail,
        });
    }

    // (c) declared linear-in-θ structure
    if model.is_linear_in_theta() {
        let mut g = vec![T::zero(); d.slow * d.param];
        let mut c = vec![T::zero(); d.slow];
        let mut worst = 0.0f64;
        for theta in &thetas {
            for x in &xs {
                for dir in dirs.iter().take(4) {
                    model.linear_basis(x, dir, &mut g);
                    model.drift_slow(theta, x, dir, &mut c);
                    for i in 0..d.slow {
                        let mut pred = T::zero();
                        for j in 0..d.param {
                            pred += g[i * d.param + j] * theta[j];
                        }
                        let scale = 1.0 + c[i].to_f64_lossy().abs();
                        let resid = (c[i] - pred).to_f64_lossy().abs() / scale;
                        if resid > worst {
                            worst = resid;
                        }
                    }
                }
            }
        }
        checks.push(ConditionCheck {
            name: "linearity".into(),
            status: if worst <= 1e-10 { CheckStatus::Pass } else { CheckStatus::Fail },
            detail: format!("max relative residual |c_theta - g*theta| = {worst:.3e}"),
        });
    }

    // (d) finite outputs everywhere sampled
    {
        let mut buf = vec![T::zero(); (d.slow * d.w).max(d.fast * d.w).max(d.fast * d.b).max(d.slow).max(d.fast)];
        let mut bad = 0usize;
        for theta in &thetas {
            for x in &xs {
                for dir in &dirs {
                    let finite = {
                        let mut ok = true;
                        model.drift_slow(theta, x, dir, &mut buf[..d.slow]);
                        ok &= buf[..d.slow].iter().all(|v| v.is_finite());
                        model.drift_fast(x, dir, &mut buf[..d.fast]);
                        ok &= buf[..d.fast].iter().all(|v| v.is_finite());
                        model.diffusion_slow(x, dir, &mut buf[..d.slow * d.w]);
                        ok &= buf[..d.slow * d.w].iter().all(|v| v.is_finite());
                        model.diffusion_fast_w(x, dir, &mut buf[..d.fast * d.w]);
                        ok &= buf[..d.fast * d.w].iter().all(|v| v.is_finite());
                        model.diffusion_fast_b(x, dir, &mut buf[..d.fast * d.b]);
                        ok &= buf[..d.fast * d.b].iter().all(|v| v.is_finite());
                        ok
                    };
                    if !finite {
                        bad += 1;
                    }
                }
            }
        }
        checks.push(ConditionCheck {
            name: "finite-outputs".into(),
            status: if bad == 0 { CheckStatus::Pass } else { CheckStatus::Fail },
            detail: if bad == 0 { "all coefficient outputs finite".into() } else { format!("{bad} probe points with non-finite outputs") },
        });
    }

    // (e) analytic gradient vs central finite difference, when supplied
    if model.has_drift_slow_grad() {
        let mut analytic = vec![T::zero(); d.slow * d.param];
        let mut numeric = vec![T::zero(); d.slow * d.param];
        let fd_model = {
            let mut clone = model.clone();
            clone.drift_slow_grad = None;
            clone
        };
        let mut worst = 0.0f64;
        for theta in &thetas {
            for x in &xs {
                for dir in dirs.iter().take(4) {
                    model.grad_drift_slow(theta, x, dir, &mut analytic);
                    fd_model.grad_drift_slow(theta, x, dir, &mut numeric);
                    for i in 0..analytic.len() {
                        let scale = 1.0 + analytic[i].to_f64_lossy().abs();
                        let err = (analytic[i] - numeric[i]).to_f64_lossy().abs() / scale;
                        if err > worst {
                            worst = err;
                        }
                    }
                }
            }
        }
        let status = if worst <= 1e-4 {
            CheckStatus::Pass
        } else if worst <= 1e-2 {
            CheckStatus::Warn
        } else {
            CheckStatus::Fail
        };
        checks.push(ConditionCheck {
            name: "grad-consistency".into(),
            status,
            detail: format!("max relative deviation analytic vs finite-difference gradient = {worst:.3e}"),
        });
    }

    ValidationReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry;

    fn sin_ou_indep() -> MultiscaleModel<f64> {
        registry::builtin("sin-ou-indep").unwrap()
    }

    #[test]
    fn kappa_scalar_examples() {
        // independent noise: tau1 = 0 zeroes the bottom block
        let m = sin_ou_indep();
        let k = kappa(&m, &[1.0], &[0.5]).unwrap();
        assert_eq!((k.rows(), k.cols()), (2, 1));
        assert!((k[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(k[(1, 0)].abs() < 1e-15);

        // correlated example: sigma = 1, tau1 = tau2 = 1/sqrt(2)
        let m = registry::builtin::<f64>("sin-ou-corr").unwrap();
        let k = kappa(&m, &[1.0], &[0.5]).unwrap();
        assert!((k[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((k[(1, 0)] + 1.0).abs() < 1e-12);
        let ktk = k.transpose().matmul(&k);
        assert!((ktk[(0, 0)] - 2.0).abs() < 1e-12);

        // unbounded-drift example: tau1 = sqrt(3)/2, tau2 = 1/2
        let m = registry::builtin::<f64>("linear-ou-corr").unwrap();
        let k = kappa(&m, &[1.0], &[0.5]).unwrap();
        assert!((k[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((k[(1, 0)] + 3.0f64.sqrt()).abs() < 1e-12);
        let ktk = k.transpose().matmul(&k);
        assert!((ktk[(0, 0)] - 4.0).abs() < 1e-12);
    }

    /// 2-slow/2-fast model with non-trivial rectangular sigma.
    fn matrix_model() -> MultiscaleModel<f64> {
        MultiscaleModel::builder()
            .dims(2, 2, 3, 2, 1)
            .drift_slow(|th: &[f64], _x: &[f64], _y: &[f64], out: &mut [f64]| {
                out[0] = th[0];
                out[1] = -th[0];
            })
            .diffusion_slow(|x, _y, out| {
                // rows 2, cols 3; well conditioned, x-dependent
                let s = 0.1 * x[0];
                out.copy_from_slice(&[1.0 + s, 0.2, 0.1, -0.3, 1.5, 0.4]);
            })
            .drift_fast(|_x, y, out| {
                out[0] = -y[0];
                out[1] = -2.0 * y[1];
            })
            .diffusion_fast_w(|_x, _y, out| {
                out.copy_from_slice(&[0.5, 0.0, 0.1, 0.0, 0.25, 0.0]);
            })
            .diffusion_fast_b(|_x, _y, out| {
                out.copy_from_slice(&[1.0, 0.1, 0.0, 0.8]);
            })
            .param_domain(ParamDomain::new(vec![-5.0], vec![5.0]).unwrap())
            .initial_state(vec![0.0, 0.0], vec![0.0, 0.0])
            .build()
            .unwrap()
    }

    #[test]
    fn kappa_top_block_is_left_inverse_of_sigma() {
        let m = matrix_model();
        let x = [0.7, -0.3];
        let y = [0.2, 0.4];
        let k = kappa(&m, &x, &y).unwrap();
        // extract top block (dim_w rows) and check (topᵀ σᵀ)... top = σᵀ(σσᵀ)⁻¹,
        // so topᵀ·σᵀ = identity on the slow space: equivalently σ·top... use
        // (top)ᵀ with σ: (σᵀ(σσᵀ)⁻¹)ᵀ σᵀ?? — check σ·top = I_slow directly.
        let mut sigma = Mat::zeros(2, 3);
        m.diffusion_slow(&x, &y, sigma.as_mut_slice());
        let mut top = Mat::zeros(3, 2);
        for r in 0..3 {
            for c in 0..2 {
                top[(r, c)] = k[(r, c)];
            }
        }
        let prod = sigma.matmul(&top);
        for i in 0..2 {
            for j in 0..2 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - want).abs() < 1e-10, "prod[{i}{j}] = {}", prod[(i, j)]);
            }
        }
    }

    #[test]
    fn kappa_square_sigma_top_is_inverse() {
        let m = MultiscaleModel::builder()
            .dims(2, 1, 2, 1, 1)
            .drift_slow(|_t: &[f64], _x: &[f64], _y: &[f64], out: &mut [f64]| out.fill(0.0))
            .diffusion_slow(|_x, _y, out| out.copy_from_slice(&[2.0, 0.5, -1.0, 1.5]))
            .drift_fast(|_x, y, out| out[0] = -y[0])
            .diffusion_fast_w(|_x, _y, out| out[0] = 0.0)
            .diffusion_fast_b(|_x, _y, out| out[0] = 1.0)
            .param_domain(ParamDomain::new(vec![0.0], vec![1.0]).unwrap())
            .initial_state(vec![0.0, 0.0], vec![0.0])
            .build()
            .unwrap();
        let k = kappa(&m, &[0.0, 0.0], &[0.0]).unwrap();
        // top block should equal sigma^{-1}; sigma = [[2,0.5],[-1,1.5]], det = 3.5
        let det = 3.5;
        let inv = [[1.5 / det, -0.5 / det], [1.0 / det, 2.0 / det]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((k[(i, j)] - inv[i][j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn kappa_and_workspace_agree_on_g() {
        let m = matrix_model();
        let x = [0.3, 1.1];
        let y = [-0.6, 0.9];
        let k = kappa(&m, &x, &y).unwrap();
        let ktk = k.transpose().matmul(&k);
        let mut ws = KappaWorkspace::new(&m);
        ws.eval(&m, &x, &y).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((ktk[(i, j)] - ws.g[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_sigma_is_singular() {
        let m = MultiscaleModel::builder()
            .dims(1, 1, 1, 1, 1)
            .drift_slow(|_t, _x, _y, out| out[0] = 0.0)
            .diffusion_slow(|_x, _y, out| out[0] = 0.0)
            .drift_fast(|_x, y, out| out[0] = -y[0])
            .diffusion_fast_w(|_x, _y, out| out[0] = 0.0)
            .diffusion_fast_b(|_x, _y, out| out[0] = 1.0)
            .param_domain(ParamDomain::new(vec![0.0], vec![1.0]).unwrap())
            .initial_state(vec![0.0], vec![0.0])
            .build()
            .unwrap();
        match kappa(&m, &[0.0], &[0.0]) {
            Err(Error::SingularDiffusion { which, .. }) => assert_eq!(which, "sigma sigma^T"),
            other => panic!("expected SingularDiffusion, got {other:?}"),
        }
        let report = validate_model(&m, &ProbeConfig::default());
        assert_eq!(report.check("nondegeneracy").unwrap().status, CheckStatus::Fail);
    }

    #[test]
    fn validation_passes_for_builtin_ou() {
        let m = sin_ou_indep();
        let report = validate_model(&m, &ProbeConfig::default());
        assert!(report.passed(), "report: {report:?}");
        // recurrence values are -R^2, strictly decreasing
        let rec = report.check("recurrence").unwrap();
        assert_eq!(rec.status, CheckStatus::Pass);
        assert_eq!(report.check("linearity").unwrap().status, CheckStatus::Pass);
        assert_eq!(report.check("grad-consistency").unwrap().status, CheckStatus::Pass);
    }

    #[test]
    fn validation_fails_for_antirecurrent_fast_drift() {
        let m = MultiscaleModel::builder()
            .dims(1, 1, 1, 1, 1)
            .drift_slow(|_t, _x, _y, out| out[0] = 0.0)
            .diffusion_slow(|_x, _y, out| out[0] = 1.0)
            .drift_fast(|_x, y, out| out[0] = y[0]) // f = +y: transient
            .diffusion_fast_w(|_x, _y, out| out[0] = 0.0)
            .diffusion_fast_b(|_x, _y, out| out[0] = 1.0)
            .param_domain(ParamDomain::new(vec![0.0], vec![1.0]).unwrap())
            .initial_state(vec![0.0], vec![0.0])
            .build()
            .unwrap();
        let report = validate_model(&m, &ProbeConfig::default());
        assert_eq!(report.check("recurrence").unwrap().status, CheckStatus::Fail);
    }

    #[test]
    fn validation_is_deterministic_given_seed() {
        let m = sin_ou_indep();
        let probe = ProbeConfig { seed: 99, ..ProbeConfig::default() };
        let a = validate_model(&m, &probe);
        let b = validate_model(&m, &probe);
        let fmt = |r: &ValidationReport| format!("{r:?}");
        assert_eq!(fmt(&a), fmt(&b));
    }

    #[test]
    fn fd_gradient_matches_analytic_for_builtins() {
        for name in registry::names() {
            let m: MultiscaleModel<f64> = registry::builtin(name).unwrap();
            let mut fd = m.clone();
            fd.drift_slow_grad = None;
            let theta = [1.3];
            let x = [0.7];
            let y = [-0.4];
            let mut ga = [0.0];
            let mut gn = [0.0];
            m.grad_drift_slow(&theta, &x, &y, &mut ga);
            fd.grad_drift_slow(&theta, &x, &y, &mut gn);
            assert!((ga[0] - gn[0]).abs() < 1e-7, "{name}: {} vs {}", ga[0], gn[0]);
        }
    }

    #[test]
    fn epsilon_pair_validation() {
        assert!(EpsilonPair::new(0.1, 1e-3).is_ok());
        assert!(EpsilonPair::new(0.0, 1e-3).is_err());
        assert!(EpsilonPair::new(0.1, -1.0).is_err());
        assert!(EpsilonPair::new(1e-3, 0.1).unwrap().delta_exceeds_eps());
        assert!(!EpsilonPair::new(0.1, 1e-3).unwrap().delta_exceeds_eps());
    }

    #[test]
    fn param_domain_basics() {
        let d = ParamDomain::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert!(d.contains(&[0.0, 1.0]));
        assert!(d.contains(&[1.0, 2.0])); // closure
        assert!(!d.contains(&[1.1, 1.0]));
        let mut th = vec![3.0, -1.0];
        d.project(&mut th);
        assert_eq!(th, vec![1.0, 0.0]);
        assert!(d.on_boundary(&th));
        assert!(!d.on_boundary(&[0.0, 1.0]));
        assert!(ParamDomain::new(vec![1.0], vec![1.0]).is_err());
        // low-discrepancy points stay inside and differ
        let p0 = d.low_discrepancy_point(0);
        let p1 = d.low_discrepancy_point(1);
        assert!(d.contains(&p0) && d.contains(&p1));
        assert_ne!(p0, p1);
    }
}
