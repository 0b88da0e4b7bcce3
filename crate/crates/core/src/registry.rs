//! Built-in example models, addressable by name from the CLI.
//!
//! All three are scalar systems on `t ∈ [0, 1]` with `X₀ = Y₀ = 1` and an
//! Ornstein–Uhlenbeck fast process `dY = −(1/δ)Y dt + ...`, differing in the
//! slow drift and in how the fast noise correlates with the slow one:
//!
//! | name             | c_θ(x, y)    | τ₁      | τ₂      |
//! |------------------|--------------|---------|---------|
//! | `sin-ou-indep`   | θ·sin(x)·y²  | 0       | 1       |
//! | `sin-ou-corr`    | θ·sin(x)·y²  | 1/√2    | 1/√2    |
//! | `linear-ou-corr` | θ·x·y²       | √3/2    | 1/2     |
//!
//! In each case the OU invariant variance is 1/2, so the averaged drift is
//! known in closed form (θ·sin(x)/2 resp. θ·x/2) and is registered as the
//! analytic override. The slow drift is linear in θ, enabling the
//! closed-form estimator.

use crate::model::{MultiscaleModel, ParamDomain};
use crate::num::Real;

/// Names accepted by [`builtin`].
pub fn names() -> &'static [&'static str] {
    &["sin-ou-indep", "sin-ou-corr", "linear-ou-corr"]
}

/// Construct a built-in model by name.
pub fn builtin<T: Real>(name: &str) -> Option<MultiscaleModel<T>> {
    match name {
        "sin-ou-indep" => Some(sin_ou(name, T::zero(), T::one())),
        "sin-ou-corr" => {
            let half_sqrt = T::from_f64_lossy(0.5).sqrt();
            Some(sin_ou(name, half_sqrt, half_sqrt))
        }
        "linear-ou-corr" => Some(linear_ou(name)),
        _ => None,
    }
}

/// Name-keyed model registry: starts with the builtins, extendable with
/// custom models at run time.
pub struct Registry<T> {
    entries: Vec<(String, MultiscaleModel<T>)>,
}

impl<T: Real> Registry<T> {
    pub fn with_builtins() -> Self {
        let entries = names()
            .iter()
            .map(|name| ((*name).to_string(), builtin(name).expect("builtin exists")))
            .collect();
        Registry { entries }
    }

    /// Register (or replace) a model under a name.
    pub fn register(&mut self, name: impl Into<String>, model: MultiscaleModel<T>) {
        let name = name.into();
        if let Some(slot) = self.entries.iter_mut().find(|(n, _)| *n == name) {
            slot.1 = model;
        } else {
            self.entries.push((name, model));
        }
    }

    pub fn get(&self, name: &str) -> Option<&MultiscaleModel<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }
}

impl<T: Real> Default for Registry<T> {
    fn default() -> Self {
        Self::with_builtins()
    }
}

fn domain<T: Real>() -> ParamDomain<T> {
    ParamDomain::new(vec![T::from_f64_lossy(-10.0)], vec![T::from_f64_lossy(10.0)]).unwrap()
}

/// dX = θ sin(X) Y² dt + √ϵ dW, dY = −(1/δ)Y dt + (1/√δ)(τ₁ dW + τ₂ dB).
fn sin_ou<T: Real>(name: &str, tau1: T, tau2: T) -> MultiscaleModel<T> {
    let half = T::from_f64_lossy(0.5);
    MultiscaleModel::builder()
        .name(name)
        .dims(1, 1, 1, 1, 1)
        .drift_slow(|th: &[T], x: &[T], y: &[T], out: &mut [T]| {
            out[0] = th[0] * x[0].sin() * y[0] * y[0];
        })
        .drift_slow_grad(|_th: &[T], x: &[T], y: &[T], out: &mut [T]| {
            out[0] = x[0].sin() * y[0] * y[0];
        })
        .linear_in_theta(|x: &[T], y: &[T], out: &mut [T]| {
            out[0] = x[0].sin() * y[0] * y[0];
        })
        .diffusion_slow(|_x: &[T], _y: &[T], out: &mut [T]| out[0] = T::one())
        .drift_fast(|_x: &[T], y: &[T], out: &mut [T]| out[0] = -y[0])
        .diffusion_fast_w(move |_x: &[T], _y: &[T], out: &mut [T]| out[0] = tau1)
        .diffusion_fast_b(move |_x: &[T], _y: &[T], out: &mut [T]| out[0] = tau2)
        .averaged_drift_override(move |th: &[T], x: &[T], out: &mut [T]| {
            out[0] = th[0] * x[0].sin() * half;
        })
        .param_domain(domain())
        .initial_state(vec![T::one()], vec![T::one()])
        .build()
        .expect("built-in model is well formed")
}

/// dX = θ X Y² dt + √ϵ dW, dY = −(1/δ)Y dt + (1/√δ)((√3/2) dW + (1/2) dB).
fn linear_ou<T: Real>(name: &str) -> MultiscaleModel<T> {
    let half = T::from_f64_lossy(0.5);
    let tau1 = T::from_f64_lossy(0.75).sqrt();
    MultiscaleModel::builder()
        .name(name)
        .dims(1, 1, 1, 1, 1)
        .drift_slow(|th: &[T], x: &[T], y: &[T], out: &mut [T]| {
            out[0] = th[0] * x[0] * y[0] * y[0];
        })
        .drift_slow_grad(|_th: &[T], x: &[T], y: &[T], out: &mut [T]| {
            out[0] = x[0] * y[0] * y[0];
        })
        .linear_in_theta(|x: &[T], y: &[T], out: &mut [T]| {
            out[0] = x[0] * y[0] * y[0];
        })
        .diffusion_slow(|_x: &[T], _y: &[T], out: &mut [T]| out[0] = T::one())
        .drift_fast(|_x: &[T], y: &[T], out: &mut [T]| out[0] = -y[0])
        .diffusion_fast_w(move |_x: &[T], _y: &[T], out: &mut [T]| out[0] = tau1)
        .diffusion_fast_b(move |_x: &[T], _y: &[T], out: &mut [T]| out[0] = half)
        .averaged_drift_override(move |th: &[T], x: &[T], out: &mut [T]| {
            out[0] = th[0] * x[0] * half;
        })
        .param_domain(domain())
        .initial_state(vec![T::one()], vec![T::one()])
        .build()
        .expect("built-in model is well formed")
}
