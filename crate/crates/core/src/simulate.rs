//! Euler–Maruyama simulation of the coupled fast-slow system.
//!
//! The recursion is the standard explicit scheme
//!
//! ```text
//! x_{k+1} = x_k + c_θ(x_k, y_k) Δt + √ϵ σ(x_k, y_k) ΔW_k
//! y_{k+1} = y_k + (1/δ) f(x_k, y_k) Δt + (1/√δ) [τ₁ ΔW_k + τ₂ ΔB_k]
//! ```
//!
//! with ΔW_k, ΔB_k ~ N(0, Δt·I) independent across steps and of each other;
//! the same ΔW drives both equations, which is what correlates the noises.
//! The discretization error is O(Δt/δ), so a simulation with Δt/δ > 0.1
//! carries a [`SimWarning::Discretization`].

pub mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dims, EpsilonPair, MultiscaleModel};
use crate::num::Real;
use crate::rng;

/// Uniform time grid on [0, T] with n steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid<T> {
    t_end: T,
    n_steps: usize,
    dt: T,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(t_end: T, n_steps: usize) -> Result<Self> {
        if !(t_end > T::zero()) || !t_end.is_finite() {
            return Err(Error::InvalidConfig(format!("t_end must be positive, got {t_end}")));
        }
        if n_steps == 0 {
            return Err(Error::InvalidConfig("n_steps must be positive".into()));
        }
        let dt = t_end / T::from_f64_lossy(n_steps as f64);
        Ok(TimeGrid { t_end, n_steps, dt })
    }

    #[inline]
    pub fn t_end(&self) -> T {
        self.t_end
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    pub fn dt(&self) -> T {
        self.dt
    }

    /// Time of grid node k (k = 0..=n).
    #[inline]
    pub fn t_at(&self, k: usize) -> T {
        self.dt * T::from_f64_lossy(k as f64)
    }
}

/// Warnings attached to a simulated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SimWarning {
    /// Δt/δ exceeds 0.1; the Euler error O(Δt/δ) is no longer small.
    Discretization { dt_over_delta: f64 },
    /// δ > ϵ, outside the regime the asymptotic theory covers.
    ScaleOrdering { eps: f64, delta: f64 },
}

/// A simulated (or replayed) path of the coupled system on a uniform grid.
///
/// State arrays are flat row-major: entry `k * dim + i` is coordinate `i`
/// at grid node `k`. Noise increments, when recorded, have `n` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    grid: TimeGrid<T>,
    dims: Dims,
    x: Vec<T>,
    y: Vec<T>,
    dw: Option<Vec<T>>,
    db: Option<Vec<T>>,
    eps: EpsilonPair<T>,
    seed: u64,
    warnings: Vec<SimWarning>,
}

impl<T: Real> Trajectory<T> {
    /// Wrap externally observed (or hand-built) state arrays in a
    /// trajectory. `x` must hold `(n+1) × dims.slow` entries and `y`
    /// `(n+1) × dims.fast`; noise increments are absent and the (ϵ, δ)
    /// pair is taken as declared, not estimated.
    pub fn from_observations(
        grid: &TimeGrid<T>,
        dims: Dims,
        x: Vec<T>,
        y: Vec<T>,
        eps: EpsilonPair<T>,
    ) -> Result<Self> {
        let n = grid.n_steps();
        if x.len() != (n + 1) * dims.slow || y.len() != (n + 1) * dims.fast {
            return Err(Error::GridMismatch(format!(
                "state arrays have {} / {} entries, grid needs {} / {}",
                x.len(),
                y.len(),
                (n + 1) * dims.slow,
                (n + 1) * dims.fast
            )));
        }
        let warnings = scale_warnings(&eps, grid);
        Ok(Trajectory { grid: *grid, dims, x, y, dw: None, db: None, eps, seed: 0, warnings })
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn eps(&self) -> &EpsilonPair<T> {
        &self.eps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn warnings(&self) -> &[SimWarning] {
        &self.warnings
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    #[inline]
    pub fn x_at(&self, k: usize) -> &[T] {
        &self.x[k * self.dims.slow..(k + 1) * self.dims.slow]
    }

    #[inline]
    pub fn y_at(&self, k: usize) -> &[T] {
        &self.y[k * self.dims.fast..(k + 1) * self.dims.fast]
    }

    pub fn dw_at(&self, k: usize) -> Option<&[T]> {
        self.dw.as_ref().map(|dw| &dw[k * self.dims.w..(k + 1) * self.dims.w])
    }

    pub fn db_at(&self, k: usize) -> Option<&[T]> {
        self.db.as_ref().map(|db| &db[k * self.dims.b..(k + 1) * self.dims.b])
    }

    pub fn x_flat(&self) -> &[T] {
        &self.x
    }

    pub fn y_flat(&self) -> &[T] {
        &self.y
    }

    pub fn has_noise(&self) -> bool {
        self.dw.is_some() && self.db.is_some()
    }

    pub fn final_x(&self) -> &[T] {
        self.x_at(self.n_steps())
    }

    pub fn final_y(&self) -> &[T] {
        self.y_at(self.n_steps())
    }
}

struct StepBufs<T> {
    c: Vec<T>,
    f: Vec<T>,
    sigma: Vec<T>,
    tau1: Vec<T>,
    tau2: Vec<T>,
}

impl<T: Real> StepBufs<T> {
    fn new(d: Dims) -> Self {
        StepBufs {
            c: vec![T::zero(); d.slow],
            f: vec![T::zero(); d.fast],
            sigma: vec![T::zero(); d.slow * d.w],
            tau1: vec![T::zero(); d.fast * d.w],
            tau2: vec![T::zero(); d.fast * d.b],
        }
    }
}

/// One Euler step; shared verbatim by simulation and replay so that
/// replaying recorded increments reproduces a path bitwise.
#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn em_step<T: Real>(
    model: &MultiscaleModel<T>,
    theta: &[T],
    dt: T,
    sqrt_eps: T,
    inv_delta: T,
    inv_sqrt_delta: T,
    x: &mut [T],
    y: &mut [T],
    dw: &[T],
    db: &[T],
    bufs: &mut StepBufs<T>,
) {
    let d = model.dims();
    model.drift_slow(theta, x, y, &mut bufs.c);
    model.drift_fast(x, y, &mut bufs.f);
    model.diffusion_slow(x, y, &mut bufs.sigma);
    model.diffusion_fast_w(x, y, &mut bufs.tau1);
    model.diffusion_fast_b(x, y, &mut bufs.tau2);
    for i in 0..d.slow {
        let mut noise = T::zero();
        for j in 0..d.w {
            noise += bufs.sigma[i * d.w + j] * dw[j];
        }
        x[i] = x[i] + bufs.c[i] * dt + sqrt_eps * noise;
    }
    for i in 0..d.fast {
        let mut nw = T::zero();
        for j in 0..d.w {
            nw += bufs.tau1[i * d.w + j] * dw[j];
        }
        let mut nb = T::zero();
        for j in 0..d.b {
            nb += bufs.tau2[i * d.b + j] * db[j];
        }
        y[i] = y[i] + inv_delta * bufs.f[i] * dt + inv_sqrt_delta * (nw + nb);
    }
}

fn scale_warnings<T: Real>(eps: &EpsilonPair<T>, grid: &TimeGrid<T>) -> Vec<SimWarning> {
    let mut warnings = Vec::new();
    let ratio = (grid.dt() / eps.delta).to_f64_lossy();
    if ratio > 0.1 {
        warnings.push(SimWarning::Discretization { dt_over_delta: ratio });
    }
    if eps.delta_exceeds_eps() {
        warnings.push(SimWarning::ScaleOrdering {
            eps: eps.eps.to_f64_lossy(),
            delta: eps.delta.to_f64_lossy(),
        });
    }
    warnings
}

/// Simulate one path of the coupled system.
///
/// Identical `(model, theta, eps, grid, seed)` produce a bitwise-identical
/// trajectory within a build. With `record_noise` the Brownian increments
/// are stored alongside the states.
pub fn euler_maruyama<T: Real>(
    model: &MultiscaleModel<T>,
    theta: &[T],
    eps: &EpsilonPair<T>,
    grid: &TimeGrid<T>,
    seed: u64,
    record_noise: bool,
) -> Result<Trajectory<T>> {
    let d = model.dims();
    if theta.len() != d.param {
        return Err(Error::InvalidConfig(format!(
            "theta has {} coordinates, model has {} parameters",
            theta.len(),
            d.param
        )));
    }
    let n = grid.n_steps();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let sqrt_eps = eps.eps.sqrt();
    let inv_delta = T::one() / eps.delta;
    let inv_sqrt_delta = inv_delta.sqrt();

    let mut x_path = Vec::with_capacity((n + 1) * d.slow);
    let mut y_path = Vec::with_capacity((n + 1) * d.fast);
    x_path.extend_from_slice(model.x0());
    y_path.extend_from_slice(model.y0());
    let mut dw_all = if record_noise { Some(Vec::with_capacity(n * d.w)) } else { None };
    let mut db_all = if record_noise { Some(Vec::with_capacity(n * d.b)) } else { None };

    let scalar = d.slow == 1 && d.fast == 1 && d.w == 1 && d.b == 1;
    let mut rng = rng::rng_from_seed(seed);

    if scalar {
        // all-scalar systems dominate the Monte Carlo workloads; a
        // stack-buffer loop shaves the slice bookkeeping off every step
        let mut x = [model.x0()[0]];
        let mut y = [model.y0()[0]];
        let mut c = [T::zero()];
        let mut f = [T::zero()];
        let mut sigma = [T::zero()];
        let mut tau1 = [T::zero()];
        let mut tau2 = [T::zero()];
        for k in 0..n {
            let dw = T::standard_normal(&mut rng) * sqrt_dt;
            let db = T::standard_normal(&mut rng) * sqrt_dt;
            model.drift_slow(theta, &x, &y, &mut c);
            model.drift_fast(&x, &y, &mut f);
            model.diffusion_slow(&x, &y, &mut sigma);
            model.diffusion_fast_w(&x, &y, &mut tau1);
            model.diffusion_fast_b(&x, &y, &mut tau2);
            // same expression trees as em_step so replay stays bitwise
            x[0] = x[0] + c[0] * dt + sqrt_eps * (sigma[0] * dw);
            y[0] = y[0] + inv_delta * f[0] * dt + inv_sqrt_delta * (tau1[0] * dw + tau2[0] * db);
            if !x[0].is_finite() || !y[0].is_finite() {
                return Err(Error::NonFiniteState { step: k + 1, t: grid.t_at(k + 1).to_f64_lossy() });
            }
            x_path.push(x[0]);
            y_path.push(y[0]);
            if let Some(dw_all) = dw_all.as_mut() {
                dw_all.push(dw);
            }
            if let Some(db_all) = db_all.as_mut() {
                db_all.push(db);
            }
        }
    } else {
        let mut x = model.x0().to_vec();
        let mut y = model.y0().to_vec();
        let mut dw = vec![T::zero(); d.w];
        let mut db = vec![T::zero(); d.b];
        let mut bufs = StepBufs::new(d);
        for k in 0..n {
            for v in dw.iter_mut() {
                *v = T::standard_normal(&mut rng) * sqrt_dt;
            }
            for v in db.iter_mut() {
                *v = T::standard_normal(&mut rng) * sqrt_dt;
            }
            em_step(model, theta, dt, sqrt_eps, inv_delta, inv_sqrt_delta, &mut x, &mut y, &dw, &db, &mut bufs);
            if !x.iter().all(|v| v.is_finite()) || !y.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFiniteState { step: k + 1, t: grid.t_at(k + 1).to_f64_lossy() });
            }
            x_path.extend_from_slice(&x);
            y_path.extend_from_slice(&y);
            if let Some(dw_all) = dw_all.as_mut() {
                dw_all.extend_from_slice(&dw);
            }
            if let Some(db_all) = db_all.as_mut() {
                db_all.extend_from_slice(&db);
            }
        }
    }

    Ok(Trajectory {
        grid: *grid,
        dims: d,
        x: x_path,
        y: y_path,
        dw: dw_all,
        db: db_all,
        eps: *eps,
        seed,
        warnings: scale_warnings(eps, grid),
    })
}

/// Rebuild a path from recorded increments through the same recursion.
/// Bitwise-identical to the original simulation.
pub fn replay_increments<T: Real>(
    model: &MultiscaleModel<T>,
    theta: &[T],
    eps: &EpsilonPair<T>,
    grid: &TimeGrid<T>,
    dw_all: &[T],
    db_all: &[T],
) -> Result<Trajectory<T>> {
    let d = model.dims();
    let n = grid.n_steps();
    if dw_all.len() != n * d.w || db_all.len() != n * d.b {
        return Err(Error::GridMismatch(format!(
            "increment arrays have {} / {} entries, grid needs {} / {}",
            dw_all.len(),
            db_all.len(),
            n * d.w,
            n * d.b
        )));
    }
    let dt = grid.dt();
    let sqrt_eps = eps.eps.sqrt();
    let inv_delta = T::one() / eps.delta;
    let inv_sqrt_delta = inv_delta.sqrt();

    let mut x_path = Vec::with_capacity((n + 1) * d.slow);
    let mut y_path = Vec::with_capacity((n + 1) * d.fast);
    x_path.extend_from_slice(model.x0());
    y_path.extend_from_slice(model.y0());
    let mut x = model.x0().to_vec();
    let mut y = model.y0().to_vec();
    let mut bufs = StepBufs::new(d);

    for k in 0..n {
        let dw = &dw_all[k * d.w..(k + 1) * d.w];
        let db = &db_all[k * d.b..(k + 1) * d.b];
        em_step(model, theta, dt, sqrt_eps, inv_delta, inv_sqrt_delta, &mut x, &mut y, dw, db, &mut bufs);
        if !x.iter().all(|v| v.is_finite()) || !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState { step: k + 1, t: grid.t_at(k + 1).to_f64_lossy() });
        }
        x_path.extend_from_slice(&x);
        y_path.extend_from_slice(&y);
    }

    Ok(Trajectory {
        grid: *grid,
        dims: d,
        x: x_path,
        y: y_path,
        dw: Some(dw_all.to_vec()),
        db: Some(db_all.to_vec()),
        eps: *eps,
        seed: 0,
        warnings: scale_warnings(eps, grid),
    })
}

/// Simulate the frozen-x fast process `dY = f(x, Y) dt + τ₁(x, Y) dW + τ₂(x, Y) dB`
/// (the δ = 1 rescaling whose generator is L_x); returns the flat
/// `(n_steps + 1) × dim_fast` path for ergodic averaging.
pub fn simulate_frozen_fast<T: Real>(
    model: &MultiscaleModel<T>,
    x_frozen: &[T],
    horizon: T,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<T>> {
    let d = model.dims();
    if x_frozen.len() != d.slow {
        return Err(Error::InvalidConfig("x_frozen dimension mismatch".into()));
    }
    if n_steps == 0 || !(horizon > T::zero()) {
        return Err(Error::InvalidConfig("frozen-fast simulation needs positive horizon and steps".into()));
    }
    let dt = horizon / T::from_f64_lossy(n_steps as f64);
    let sqrt_dt = dt.sqrt();

    let mut path = Vec::with_capacity((n_steps + 1) * d.fast);
    path.extend_from_slice(model.y0());
    let mut rng = rng::rng_from_seed(seed);

    if d.fast == 1 && d.w == 1 && d.b == 1 {
        let mut y = [model.y0()[0]];
        let mut f = [T::zero()];
        let mut tau1 = [T::zero()];
        let mut tau2 = [T::zero()];
        for k in 0..n_steps {
            model.drift_fast(x_frozen, &y, &mut f);
            model.diffusion_fast_w(x_frozen, &y, &mut tau1);
            model.diffusion_fast_b(x_frozen, &y, &mut tau2);
            let dw = T::standard_normal(&mut rng) * sqrt_dt;
            let db = T::standard_normal(&mut rng) * sqrt_dt;
            y[0] = y[0] + f[0] * dt + (tau1[0] * dw + tau2[0] * db);
            if !y[0].is_finite() {
                return Err(Error::NonFiniteState {
                    step: k + 1,
                    t: (dt * T::from_f64_lossy((k + 1) as f64)).to_f64_lossy(),
                });
            }
            path.push(y[0]);
        }
        return Ok(path);
    }

    let mut y = model.y0().to_vec();
    let mut f = vec![T::zero(); d.fast];
    let mut tau1 = vec![T::zero(); d.fast * d.w];
    let mut tau2 = vec![T::zero(); d.fast * d.b];
    let mut dw = vec![T::zero(); d.w];
    let mut db = vec![T::zero(); d.b];

    for k in 0..n_steps {
        model.drift_fast(x_frozen, &y, &mut f);
        model.diffusion_fast_w(x_frozen, &y, &mut tau1);
        model.diffusion_fast_b(x_frozen, &y, &mut tau2);
        for v in dw.iter_mut() {
            *v = T::standard_normal(&mut rng) * sqrt_dt;
        }
        for v in db.iter_mut() {
            *v = T::standard_normal(&mut rng) * sqrt_dt;
        }
        for i in 0..d.fast {
            let mut noise = T::zero();
            for j in 0..d.w {
                noise += tau1[i * d.w + j] * dw[j];
            }
            for j in 0..d.b {
                noise += tau2[i * d.b + j] * db[j];
            }
            y[i] = y[i] + f[i] * dt + noise;
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteState { step: k + 1, t: (dt * T::from_f64_lossy((k + 1) as f64)).to_f64_lossy() });
        }
        path.extend_from_slice(&y);
    }
    Ok(path)
}
