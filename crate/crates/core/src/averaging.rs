//! Invariant-measure averages of the fast process and the deterministic
//! limit of the slow one.
//!
//! The invariant measure μ_x of the frozen-x fast dynamics is realized by
//! ergodic time-averaging of the δ = 1 process `dY = f(x,Y)dt + τ₁dW + τ₂dB`
//! across independent chains; no Fokker–Planck solves, so nothing here
//! depends on the fast dimension. Models may carry an analytic averaged
//! drift instead, which the limit-ODE solver prefers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MultiscaleModel;
use crate::num::Real;
use crate::rng;
use crate::simulate::{simulate_frozen_fast, TimeGrid};

/// Ergodic-averaging plan: chains of the frozen-x fast process, a burn-in
/// prefix discarded, the rest time-averaged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantAvgOptions<T> {
    /// Time discarded at the start of each chain.
    pub burn_in: T,
    /// Total simulated time per chain.
    pub horizon: T,
    /// Euler steps per chain.
    pub n_steps: usize,
    /// Independent chains (across-chain spread provides the error bar).
    pub n_chains: usize,
    pub seed: u64,
}

impl<T: Real> Default for InvariantAvgOptions<T> {
    fn default() -> Self {
        InvariantAvgOptions {
            burn_in: T::from_f64_lossy(10.0),
            horizon: T::from_f64_lossy(210.0),
            n_steps: 200_000,
            n_chains: 8,
            seed: 0,
        }
    }
}

impl<T: Real> InvariantAvgOptions<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.burn_in >= T::zero()) || !(self.horizon > self.burn_in) {
            return Err(Error::InvalidConfig(
                "invariant averaging needs 0 <= burn_in < horizon".into(),
            ));
        }
        if self.n_steps == 0 || self.n_chains == 0 {
            return Err(Error::InvalidConfig("invariant averaging needs n_steps, n_chains >= 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Result of [`invariant_average`].
#[derive(Debug, Clone, Serialize)]
pub struct InvariantAverage<T> {
    pub mean: Vec<T>,
    /// Across-chain standard error (NaN with a single chain).
    pub mc_stderr: Vec<T>,
    pub warnings: Vec<String>,
}

/// Monte Carlo estimate of ∫ φ(x, y) μ_x(dy) with an across-chain standard
/// error. Chain `i` uses the stream derived from `(opts.seed, i)`, so the
/// estimate is deterministic given the options and independent of any
/// parallel schedule a caller might use.
pub fn invariant_average<T: Real, F>(
    model: &MultiscaleModel<T>,
    x: &[T],
    phi: F,
    phi_dim: usize,
    opts: &InvariantAvgOptions<T>,
) -> Result<InvariantAverage<T>>
where
    F: Fn(&[T], &[T], &mut [T]),
{
    opts.validate()?;
    let d = model.dims();
    let dt = opts.horizon / T::from_f64_lossy(opts.n_steps as f64);
    let burn_idx = (opts.burn_in / dt).to_f64_lossy().ceil() as usize;
    if burn_idx >= opts.n_steps {
        return Err(Error::InvalidConfig("burn-in consumes the whole horizon".into()));
    }

    let mut chain_means: Vec<Vec<T>> = Vec::with_capacity(opts.n_chains);
    let mut val = vec![T::zero(); phi_dim];
    for chain in 0..opts.n_chains {
        let seed = rng::derive_seed(opts.seed, chain as u64);
        let path = simulate_frozen_fast(model, x, opts.horizon, opts.n_steps, seed)?;
        let mut acc = vec![T::zero(); phi_dim];
        let mut count = 0usize;
        for k in burn_idx..=opts.n_steps {
            let y = &path[k * d.fast..(k + 1) * d.fast];
            phi(x, y, &mut val);
            for (a, &v) in acc.iter_mut().zip(val.iter()) {
                *a += v;
            }
            count += 1;
        }
        let inv = T::one() / T::from_f64_lossy(count as f64);
        for a in acc.iter_mut() {
            *a *= inv;
        }
        chain_means.push(acc);
    }

    let n_chains = T::from_f64_lossy(opts.n_chains as f64);
    let mut mean = vec![T::zero(); phi_dim];
    for cm in &chain_means {
        for (m, &v) in mean.iter_mut().zip(cm.iter()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n_chains;
    }

    let mut stderr = vec![T::nan(); phi_dim];
    if opts.n_chains > 1 {
        for j in 0..phi_dim {
            let mut ss = T::zero();
            for cm in &chain_means {
                let dev = cm[j] - mean[j];
                ss += dev * dev;
            }
            let var = ss / T::from_f64_lossy((opts.n_chains - 1) as f64);
            stderr[j] = (var / n_chains).sqrt();
        }
    }

    let mut warnings = Vec::new();
    let five_pct = T::from_f64_lossy(0.05);
    for j in 0..phi_dim {
        if opts.n_chains > 1 && stderr[j] > five_pct * mean[j].abs() {
            warnings.push(format!(
                "StderrTooLarge: coordinate {j} has stderr {} > 5% of |mean| {}",
                stderr[j].to_f64_lossy(),
                mean[j].to_f64_lossy()
            ));
        }
    }

    Ok(InvariantAverage { mean, mc_stderr: stderr, warnings })
}

/// The averaged drift c̄_θ(x) = ∫ c_θ(x, y) μ_x(dy): analytic override when
/// the model declares one, ergodic average otherwise.
pub fn averaged_drift<T: Real>(
    model: &MultiscaleModel<T>,
    theta: &[T],
    x: &[T],
    opts: &InvariantAvgOptions<T>,
) -> Result<Vec<T>> {
    let d = model.dims();
    let mut out = vec![T::zero(); d.slow];
    if model.averaged_drift_override(theta, x, &mut out) {
        return Ok(out);
    }
    let avg = invariant_average(
        model,
        x,
        |x, y, out| model.drift_slow(theta, x, y, out),
        d.slow,
        opts,
    )?;
    Ok(avg.mean)
}

/// Deterministic limit of the slow process: the RK4 solution of
/// `ẋ = c̄_θ(x)` on `grid`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitPath<T> {
    grid: TimeGrid<T>,
    dim_slow: usize,
    x_bar: Vec<T>,
    theta: Vec<T>,
}

impl<T: Real> LimitPath<T> {
    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    #[inline]
    pub fn x_at(&self, k: usize) -> &[T] {
        &self.x_bar[k * self.dim_slow..(k + 1) * self.dim_slow]
    }

    pub fn x_flat(&self) -> &[T] {
        &self.x_bar
    }

    pub fn final_x(&self) -> &[T] {
        self.x_at(self.grid.n_steps())
    }

    /// CSV export with columns `t, xbar_0, ...`.
    pub fn export_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        let mut header = String::from("t");
        for i in 0..self.dim_slow {
            header.push_str(&format!(",xbar_{i}"));
        }
        writeln!(w, "{header}")?;
        for k in 0..=self.grid.n_steps() {
            let mut line = format!("{}", self.grid.t_at(k).to_f64_lossy());
            for v in self.x_at(k) {
                line.push_str(&format!(",{}", v.to_f64_lossy()));
            }
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Classical fixed-step RK4 for `ẋ = c̄_θ(x)`, x(0) = x₀, on the grid.
/// When c̄ is numeric (no override) the invariant average is evaluated at
/// every stage point, all stages sharing `opts.seed` so the surrogate drift
/// is a smooth function of x.
pub fn solve_limit_ode<T: Real>(
    model: &MultiscaleModel<T>,
    theta: &[T],
    grid: &TimeGrid<T>,
    opts: &InvariantAvgOptions<T>,
) -> Result<LimitPath<T>> {
    let d = model.dims();
    if theta.len() != d.param {
        return Err(Error::InvalidConfig("theta dimension mismatch".into()));
    }
    let has_override = model.has_averaged_drift_override();
    if !has_override {
        opts.validate()?;
    }

    let cbar = |x: &[T], out: &mut [T]| -> Result<()> {
        if has_override {
            model.averaged_drift_override(theta, x, out);
            Ok(())
        } else {
            let avg = invariant_average(
                model,
                x,
                |x, y, out| model.drift_slow(theta, x, y, out),
                d.slow,
                opts,
            )?;
            out.copy_from_slice(&avg.mean);
            Ok(())
        }
    };

    let n = grid.n_steps();
    let dt = grid.dt();
    let half = T::from_f64_lossy(0.5);
    let sixth = T::from_f64_lossy(1.0 / 6.0);
    let two = T::from_f64_lossy(2.0);

    let mut x_bar = Vec::with_capacity((n + 1) * d.slow);
    x_bar.extend_from_slice(model.x0());
    let mut x = model.x0().to_vec();
    let mut k1 = vec![T::zero(); d.slow];
    let mut k2 = vec![T::zero(); d.slow];
    let mut k3 = vec![T::zero(); d.slow];
    let mut k4 = vec![T::zero(); d.slow];
    let mut stage = vec![T::zero(); d.slow];

    for step in 0..n {
        cbar(&x, &mut k1)?;
        for i in 0..d.slow {
            stage[i] = x[i] + half * dt * k1[i];
        }
        cbar(&stage, &mut k2)?;
        for i in 0..d.slow {
            stage[i] = x[i] + half * dt * k2[i];
        }
        cbar(&stage, &mut k3)?;
        for i in 0..d.slow {
            stage[i] = x[i] + dt * k3[i];
        }
        cbar(&stage, &mut k4)?;
        for i in 0..d.slow {
            x[i] += dt * sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState { step: step + 1, t: grid.t_at(step + 1).to_f64_lossy() });
        }
        x_bar.extend_from_slice(&x);
    }

    Ok(LimitPath { grid: *grid, dim_slow: d.slow, x_bar, theta: theta.to_vec() })
}
