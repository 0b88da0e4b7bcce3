//! Maximum-likelihood drift estimation, Fisher information, and
//! normal-approximation confidence intervals.
//!
//! For models declaring a linear-in-θ drift c_θ = g·θ both likelihoods are
//! concave quadratics and the maximizer solves the normal equations
//!
//! ```text
//! A θ = b,   A = Σ_k gᵀGg Δt,
//!            b = Σ_k gᵀG Δx_k  (+ √(ϵ/δ) Σ gᵀMᵀf Δt − √(ϵδ) Σ gᵀMᵀΔy_k)
//! ```
//!
//! with the parenthesized corrections dropped for the quasi estimator.
//! Everything else goes through multi-start projected Newton with
//! finite-difference derivatives, plus a golden-section pass for scalar θ.

use std::cell::RefCell;

use serde::Serialize;

use crate::averaging::{invariant_average, InvariantAvgOptions, LimitPath};
use crate::error::{Error, Result};
use crate::linalg::{self, dot, Mat};
use crate::likelihood::{log_likelihood, quasi_log_likelihood};
use crate::model::{KappaWorkspace, MultiscaleModel, ParamDomain};
use crate::num::Real;
use crate::rng;
use crate::simulate::Trajectory;
use crate::stats;

/// Condition-number ceiling for the normal-equation matrix.
pub const NORMAL_EQ_COND_LIMIT: f64 = 1e10;
/// Smallest admissible Fisher eigenvalue.
pub const FISHER_MIN_EIG: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizerOptions<T> {
    /// Multi-start count for the numeric optimizer.
    pub n_starts: usize,
    /// Projected-gradient tolerance (scaled by 1 + |objective|).
    pub grad_tol: T,
    pub max_iter: usize,
    /// Skip the closed form even when the model is linear in θ (used to
    /// cross-check the two routes).
    pub force_numeric: bool,
}

impl<T: Real> Default for OptimizerOptions<T> {
    fn default() -> Self {
        OptimizerOptions {
            n_starts: 8,
            grad_tol: T::from_f64_lossy(1e-8),
            max_iter: 100,
            force_numeric: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EstimationMethod {
    ClosedForm,
    GoldenSection,
    ProjectedNewton,
}

/// Point estimate with optimizer diagnostics; Fisher information and
/// confidence intervals are attached by the caller when computed.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorResult<T> {
    pub theta_hat: Vec<T>,
    pub objective: T,
    pub method: EstimationMethod,
    pub iterations: usize,
    pub on_boundary: bool,
    pub fisher: Option<FisherInfo<T>>,
    pub ci: Option<Vec<ConfidenceInterval<T>>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfidenceInterval<T> {
    pub level: T,
    /// Per-coordinate (lower, upper).
    pub bounds: Vec<(T, T)>,
}

/// Fisher information I(θ) = ∫₀ᵀ Q(x̄(t), θ) dt with the Q path retained.
#[derive(Debug, Clone, Serialize)]
pub struct FisherInfo<T> {
    /// Symmetrized D × D information matrix.
    pub matrix: Mat<T>,
    /// Q(x̄(t_i), θ) along the limit grid, flattened D² per node.
    pub q_path: Vec<T>,
    pub theta: Vec<T>,
    pub min_eigenvalue: T,
}

/// Per-path sufficient statistics of the linear-in-θ likelihood.
#[derive(Debug, Clone, Serialize)]
pub struct LinearSuffStats<T> {
    pub a: Mat<T>,
    pub b_main: Vec<T>,
    pub b_corr: Vec<T>,
}

impl<T: Real> LinearSuffStats<T> {
    pub fn b_full(&self) -> Vec<T> {
        self.b_main.iter().zip(&self.b_corr).map(|(&m, &c)| m + c).collect()
    }

    /// Z(θ) = θᵀb − ½ θᵀAθ for the chosen b.
    pub fn objective(&self, theta: &[T], with_corrections: bool) -> T {
        let d = theta.len();
        let mut a_theta = vec![T::zero(); d];
        self.a.mul_vec_into(theta, &mut a_theta);
        let half = T::from_f64_lossy(0.5);
        let b = if with_corrections { self.b_full() } else { self.b_main.clone() };
        dot(theta, &b) - half * dot(theta, &a_theta)
    }
}

/// Accumulate the normal-equation statistics along a trajectory.
/// Errors with `InvalidConfig` when the model declares no linear basis.
pub fn linear_suff_stats<T: Real>(
    model: &MultiscaleModel<T>,
    traj: &Trajectory<T>,
) -> Result<LinearSuffStats<T>> {
    if !model.is_linear_in_theta() {
        return Err(Error::InvalidConfig("model does not declare linear-in-theta structure".into()));
    }
    let d = model.dims();
    let n = traj.n_steps();
    let dt = traj.grid().dt();
    let eps = traj.eps();

    let mut ws = KappaWorkspace::new(model);

    if ws.is_scalar() && d.param == 1 {
        // scalar route for the Monte Carlo hot path
        let x = traj.x_flat();
        let y = traj.y_flat();
        let mut g_buf = [T::zero()];
        let mut f_buf = [T::zero()];
        let mut a_sum = T::zero();
        let mut b_main_sum = T::zero();
        let mut b_dt_sum = T::zero();
        let mut b_dy_sum = T::zero();
        for k in 0..n {
            let xk = &x[k..k + 1];
            let yk = &y[k..k + 1];
            ws.eval(model, xk, yk)?;
            let g_k = {
                model.linear_basis(xk, yk, &mut g_buf);
                g_buf[0]
            };
            let g_w = ws.g.as_slice()[0];
            let m_w = ws.m.as_slice()[0];
            a_sum += g_k * g_w * g_k;
            b_main_sum += g_k * g_w * (x[k + 1] - x[k]);
            model.drift_fast(xk, yk, &mut f_buf);
            let mg = m_w * g_k;
            b_dt_sum += mg * f_buf[0];
            b_dy_sum += mg * (y[k + 1] - y[k]);
        }
        let mut a = Mat::zeros(1, 1);
        a.as_mut_slice()[0] = a_sum * dt;
        let scale_dt = (eps.eps / eps.delta).sqrt() * dt;
        let scale_dy = (eps.eps * eps.delta).sqrt();
        return Ok(LinearSuffStats {
            a,
            b_main: vec![b_main_sum],
            b_corr: vec![scale_dt * b_dt_sum - scale_dy * b_dy_sum],
        });
    }

    let mut g = Mat::zeros(d.slow, d.param);
    let mut gg = Mat::zeros(d.slow, d.param);
    let mut mg = Mat::zeros(d.fast, d.param);
    let mut a_step = Mat::zeros(d.param, d.param);
    let mut a = Mat::zeros(d.param, d.param);
    let mut b_main = vec![T::zero(); d.param];
    let mut b_dt = vec![T::zero(); d.param];
    let mut b_dy = vec![T::zero(); d.param];
    let mut tmp = vec![T::zero(); d.param];
    let mut dx = vec![T::zero(); d.slow];
    let mut dy = vec![T::zero(); d.fast];
    let mut f = vec![T::zero(); d.fast];

    for k in 0..n {
        let x_k = traj.x_at(k);
        let y_k = traj.y_at(k);
        ws.eval(model, x_k, y_k)?;
        model.linear_basis(x_k, y_k, g.as_mut_slice());

        ws.g.matmul_into(&g, &mut gg);
        g.t_matmul_into(&gg, &mut a_step);
        for (acc, &v) in a.as_mut_slice().iter_mut().zip(a_step.as_slice()) {
            *acc += v;
        }

        let x_next = traj.x_at(k + 1);
        for i in 0..d.slow {
            dx[i] = x_next[i] - x_k[i];
        }
        gg.t_mul_vec_into(&dx, &mut tmp);
        for (acc, &v) in b_main.iter_mut().zip(&tmp) {
            *acc += v;
        }

        ws.m.matmul_into(&g, &mut mg);
        model.drift_fast(x_k, y_k, &mut f);
        mg.t_mul_vec_into(&f, &mut tmp);
        for (acc, &v) in b_dt.iter_mut().zip(&tmp) {
            *acc += v;
        }
        let y_next = traj.y_at(k + 1);
        for i in 0..d.fast {
            dy[i] = y_next[i] - y_k[i];
        }
        mg.t_mul_vec_into(&dy, &mut tmp);
        for (acc, &v) in b_dy.iter_mut().zip(&tmp) {
            *acc += v;
        }
    }

    a.scale(dt);
    let scale_dt = (eps.eps / eps.delta).sqrt() * dt;
    let scale_dy = (eps.eps * eps.delta).sqrt();
    let b_corr: Vec<T> =
        b_dt.iter().zip(&b_dy).map(|(&p, &q)| scale_dt * p - scale_dy * q).collect();

    Ok(LinearSuffStats { a, b_main, b_corr })
}

/// Solve A θ = b for the requested likelihood variant and project onto Θ̄.
/// Returns the estimate and whether the projection clipped it.
pub fn solve_normal_equations<T: Real>(
    stats: &LinearSuffStats<T>,
    domain: &ParamDomain<T>,
    with_corrections: bool,
) -> Result<(Vec<T>, bool)> {
    let cond = linalg::cond_inf(&stats.a);
    if !(cond <= NORMAL_EQ_COND_LIMIT) {
        return Err(Error::DegenerateNormalEquations { cond });
    }
    let lu = linalg::Lu::new(&stats.a).ok_or(Error::DegenerateNormalEquations { cond: f64::INFINITY })?;
    let b = if with_corrections { stats.b_full() } else { stats.b_main.clone() };
    let mut theta = vec![T::zero(); b.len()];
    lu.solve_vec(&b, &mut theta);
    domain.project(&mut theta);
    let on_boundary = domain.on_boundary(&theta);
    Ok((theta, on_boundary))
}

fn closed_form<T: Real>(
    model: &MultiscaleModel<T>,
    traj: &Trajectory<T>,
    with_corrections: bool,
) -> Result<EstimatorResult<T>> {
    let stats = linear_suff_stats(model, traj)?;
    let (theta, on_boundary) = solve_normal_equations(&stats, model.param_domain(), with_corrections)?;
    let objective = stats.objective(&theta, with_corrections);
    Ok(EstimatorResult {
        theta_hat: theta,
        objective,
        method: EstimationMethod::ClosedForm,
        iterations: 0,
        on_boundary,
        fisher: None,
        ci: None,
    })
}

/// Finite-difference gradient of a scalar function of θ.
fn fd_gradient<T: Real>(f: &mut dyn FnMut(&[T]) -> Result<T>, theta: &[T], out: &mut [T]) -> Result<()> {
    let base_h = T::from_f64_lossy(1e-6);
    let mut th = theta.to_vec();
    for j in 0..theta.len() {
        let h = base_h * (T::one() + theta[j].abs());
        let orig = th[j];
        th[j] = orig + h;
        let fp = f(&th)?;
        th[j] = orig - h;
        let fm = f(&th)?;
        th[j] = orig;
        out[j] = (fp - fm) / (h + h);
    }
    Ok(())
}

/// Central finite-difference Hessian.
fn fd_hessian<T: Real>(f: &mut dyn FnMut(&[T]) -> Result<T>, theta: &[T], out: &mut Mat<T>) -> Result<()> {
    let d = theta.len();
    let base_h = T::from_f64_lossy(1e-4);
    let f0 = f(theta)?;
    let mut th = theta.to_vec();
    let two = T::from_f64_lossy(2.0);
    let four = T::from_f64_lossy(4.0);
    for i in 0..d {
        let hi = base_h * (T::one() + theta[i].abs());
        th[i] = theta[i] + hi;
        let fp = f(&th)?;
        th[i] = theta[i] - hi;
        let fm = f(&th)?;
        th[i] = theta[i];
        out[(i, i)] = (fp - two * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = base_h * (T::one() + theta[j].abs());
            th[i] = theta[i] + hi;
            th[j] = theta[j] + hj;
            let fpp = f(&th)?;
            th[j] = theta[j] - hj;
            let fpm = f(&th)?;
            th[i] = theta[i] - hi;
            let fmm = f(&th)?;
            th[j] = theta[j] + hj;
            let fmp = f(&th)?;
            th[i] = theta[i];
            th[j] = theta[j];
            let v = (fpp - fpm - fmp + fmm) / (four * hi * hj);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(())
}

struct NewtonOutcome<T> {
    theta: Vec<T>,
    value: T,
    iterations: usize,
}

/// Maximize `f` over the box by projected Newton with backtracking.
fn projected_newton<T: Real>(
    f: &mut dyn FnMut(&[T]) -> Result<T>,
    domain: &crate::model::ParamDomain<T>,
    start: Vec<T>,
    opts: &OptimizerOptions<T>,
) -> Result<NewtonOutcome<T>> {
    let d = start.len();
    let mut theta = start;
    domain.project(&mut theta);
    let mut value = f(&theta)?;
    let mut grad = vec![T::zero(); d];
    let mut hess = Mat::zeros(d, d);
    let mut step = vec![T::zero(); d];
    let mut candidate = vec![T::zero(); d];
    let edge_tol = T::from_f64_lossy(1e-12);

    let mut iterations = 0;
    for _ in 0..opts.max_iter {
        fd_gradient(f, &theta, &mut grad)?;
        // projected gradient: zero out components pushing outside an active bound
        let mut pg_norm = T::zero();
        for i in 0..d {
            let lo = domain.lower()[i];
            let hi = domain.upper()[i];
            let blocked_low = theta[i] - lo <= edge_tol * (T::one() + lo.abs()) && grad[i] < T::zero();
            let blocked_high = hi - theta[i] <= edge_tol * (T::one() + hi.abs()) && grad[i] > T::zero();
            let g = if blocked_low || blocked_high { T::zero() } else { grad[i] };
            if g.abs() > pg_norm {
                pg_norm = g.abs();
            }
        }
        if pg_norm <= opts.grad_tol * (T::one() + value.abs()) {
            break;
        }
        iterations += 1;

        fd_hessian(f, &theta, &mut hess)?;
        // Newton direction for a maximum: solve H s = -g
        let mut use_newton = false;
        if let Some(lu) = linalg::Lu::new(&hess) {
            let neg: Vec<T> = grad.iter().map(|&g| -g).collect();
            lu.solve_vec(&neg, &mut step);
            if dot(&step, &grad) > T::zero() && step.iter().all(|s| s.is_finite()) {
                use_newton = true;
            }
        }
        if !use_newton {
            // gradient ascent, scaled to a unit-ish move
            let norm = dot(&grad, &grad).sqrt();
            let scale = if norm > T::zero() { T::one() / norm } else { T::zero() };
            for i in 0..d {
                step[i] = grad[i] * scale;
            }
        }

        let slope = dot(&step, &grad);
        let mut alpha = T::one();
        let c1 = T::from_f64_lossy(1e-4);
        let mut improved = false;
        for _ in 0..50 {
            for i in 0..d {
                candidate[i] = theta[i] + alpha * step[i];
            }
            domain.project(&mut candidate);
            let trial = f(&candidate)?;
            if trial > value + c1 * alpha * slope.max(T::zero()) {
                theta.copy_from_slice(&candidate);
                value = trial;
                improved = true;
                break;
            }
            alpha *= T::from_f64_lossy(0.5);
        }
        if !improved {
            break;
        }
    }

    Ok(NewtonOutcome { theta, value, iterations })
}

/// Golden-section maximization over a closed interval.
fn golden_section<T: Real>(
    f: &mut dyn FnMut(&[T]) -> Result<T>,
    lo: T,
    hi: T,
) -> Result<NewtonOutcome<T>> {
    let phi = T::from_f64_lossy(0.618_033_988_749_894_8);
    let mut a = lo;
    let mut b = hi;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(&[c])?;
    let mut fd = f(&[d])?;
    let tol = T::from_f64_lossy(1e-11) * (T::one() + (hi - lo).abs());
    let mut iterations = 0;
    while (b - a).abs() > tol && iterations < 200 {
        iterations += 1;
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(&[c])?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(&[d])?;
        }
    }
    let mid = (a + b) * T::from_f64_lossy(0.5);
    let fm = f(&[mid])?;
    // keep the best of the bracket
    let (theta, value) = if fm >= fc && fm >= fd {
        (mid, fm)
    } else if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    };
    Ok(NewtonOutcome { theta: vec![theta], value, iterations })
}

fn maximize_numeric<T: Real>(
    model: &MultiscaleModel<T>,
    traj: &Trajectory<T>,
    opts: &OptimizerOptions<T>,
    with_corrections: bool,
) -> Result<EstimatorResult<T>> {
    let domain = model.param_domain().clone();
    let mut objective = |theta: &[T]| -> Result<T> {
        let z = if with_corrections {
            log_likelihood(model, theta, traj)?
        } else {
            quasi_log_likelihood(model, theta, traj)?
        };
        Ok(z.value)
    };

    let mut best: Option<(NewtonOutcome<T>, EstimationMethod)> = None;
    let consider = |outcome: NewtonOutcome<T>, method: EstimationMethod, best: &mut Option<(NewtonOutcome<T>, EstimationMethod)>| {
        let replace = match best {
            None => true,
            Some((cur, _)) => outcome.value > cur.value,
        };
        if replace {
            *best = Some((outcome, method));
        }
    };

    let mut starts = vec![domain.midpoint()];
    for k in 0..opts.n_starts.saturating_sub(1) {
        starts.push(domain.low_discrepancy_point(k));
    }
    for start in starts {
        let outcome = projected_newton(&mut objective, &domain, start, opts)?;
        consider(outcome, EstimationMethod::ProjectedNewton, &mut best);
    }
    if domain.dim() == 1 {
        let outcome = golden_section(&mut objective, domain.lower()[0], domain.upper()[0])?;
        consider(outcome, EstimationMethod::GoldenSection, &mut best);
    }

    let (outcome, method) = best.expect("at least one start");
    let on_boundary = domain.on_boundary(&outcome.theta);
    Ok(EstimatorResult {
        theta_hat: outcome.theta,
        objective: outcome.value,
        method,
        iterations: outcome.iterations,
        on_boundary,
        fisher: None,
        ci: None,
    })
}

fn estimate<T: Real>(
    model: &MultiscaleModel<T>,
    traj: &Trajectory<T>,
    opts: &OptimizerOptions<T>,
    with_corrections: bool,
) -> Result<EstimatorResult<T>> {
    if model.is_linear_in_theta() && !opts.force_numeric {
        closed_form(model, traj, with_corrections)
    } else {
        maximize_numeric(model, traj, opts, with_corrections)
    }
}

/// Maximize the full likelihood Z^ε over Θ̄.
pub fn mle<T: Real>(
    model: &MultiscaleModel<T>,
    traj: &Trajectory<T>,
    opts: &OptimizerOptions<T>,
) -> Result<EstimatorResult<T>> {
    estimate(model, traj, opts, true)
}

/// Maximize the quasi likelihood Z̃ over Θ̄ (no correction terms).
pub fn quasi_mle<T: Real>(
    model: &MultiscaleModel<T>,
    traj: &Trajectory<T>,
    opts: &OptimizerOptions<T>,
) -> Result<EstimatorResult<T>> {
    estimate(model, traj, opts, false)
}

/// Fisher information along a limit path:
/// Q(x, θ) = ∫ (∇_θc_θ)ᵀ κᵀκ (∇_θc_θ) dμ_x per grid node (ergodic average,
/// node i seeded from `(opts.seed, i)`), then the trapezoid rule in time.
pub fn fisher_information<T: Real>(
    model: &MultiscaleModel<T>,
    theta: &[T],
    lim: &LimitPath<T>,
    opts: &InvariantAvgOptions<T>,
) -> Result<FisherInfo<T>> {
    let d = model.dims();
    if theta.len() != d.param {
        return Err(Error::InvalidConfig("theta dimension mismatch".into()));
    }
    let n = lim.grid().n_steps();
    let dt = lim.grid().dt();
    let dp = d.param;

    let ws = RefCell::new(KappaWorkspace::new(model));
    let bufs = RefCell::new((Mat::<T>::zeros(d.slow, dp), Mat::<T>::zeros(d.slow, dp), Mat::<T>::zeros(dp, dp)));
    let failure: RefCell<Option<Error>> = RefCell::new(None);

    let mut q_path = vec![T::zero(); (n + 1) * dp * dp];
    for i in 0..=n {
        let x = lim.x_at(i);
        let phi = |x: &[T], y: &[T], out: &mut [T]| {
            let mut ws = ws.borrow_mut();
            let (grad, gg, q) = &mut *bufs.borrow_mut();
            if let Err(e) = ws.eval(model, x, y) {
                if failure.borrow().is_none() {
                    *failure.borrow_mut() = Some(e);
                }
                out.fill(T::nan());
                return;
            }
            model.grad_drift_slow(theta, x, y, grad.as_mut_slice());
            ws.g.matmul_into(grad, gg);
            grad.t_matmul_into(gg, q);
            out.copy_from_slice(q.as_slice());
        };
        let avg =
            invariant_average(model, x, phi, dp * dp, &opts.with_seed(rng::derive_seed(opts.seed, i as u64)))?;
        if let Some(e) = failure.borrow_mut().take() {
            return Err(e);
        }
        q_path[i * dp * dp..(i + 1) * dp * dp].copy_from_slice(&avg.mean);
    }

    let half = T::from_f64_lossy(0.5);
    let mut matrix = Mat::zeros(dp, dp);
    for i in 0..=n {
        let w = if i == 0 || i == n { half } else { T::one() };
        let block = &q_path[i * dp * dp..(i + 1) * dp * dp];
        for (acc, &v) in matrix.as_mut_slice().iter_mut().zip(block) {
            *acc += w * v;
        }
    }
    matrix.scale(dt);
    matrix.symmetrize();

    let (eigs, _) = linalg::sym_eigen(&matrix);
    let min_eig = eigs[0];
    if min_eig.to_f64_lossy() < FISHER_MIN_EIG {
        return Err(Error::NonPositiveDefinite { min_eig: min_eig.to_f64_lossy() });
    }

    Ok(FisherInfo { matrix, q_path, theta: theta.to_vec(), min_eigenvalue: min_eig })
}

/// Per-coordinate asymptotic standard deviations √(ϵ·(I⁻¹)_ii).
pub fn theoretical_sd<T: Real>(fisher: &FisherInfo<T>, eps: T) -> Result<Vec<T>> {
    if fisher.min_eigenvalue.to_f64_lossy() < FISHER_MIN_EIG {
        return Err(Error::NonPositiveDefinite { min_eig: fisher.min_eigenvalue.to_f64_lossy() });
    }
    let inv = linalg::inverse(&fisher.matrix)
        .ok_or(Error::NonPositiveDefinite { min_eig: fisher.min_eigenvalue.to_f64_lossy() })?;
    Ok((0..fisher.matrix.rows()).map(|i| (eps * inv[(i, i)]).sqrt()).collect())
}

/// Normal confidence intervals θ̂_i ± z_{(1+level)/2} √(ϵ·(I⁻¹)_ii).
pub fn confidence_interval<T: Real>(
    result: &EstimatorResult<T>,
    fisher: &FisherInfo<T>,
    eps: T,
    level: T,
) -> Result<Vec<(T, T)>> {
    let level_f = level.to_f64_lossy();
    if !(0.0 < level_f && level_f < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence level must lie in (0,1), got {level_f}")));
    }
    let sds = theoretical_sd(fisher, eps)?;
    let z = T::from_f64_lossy(stats::standard_normal_quantile((1.0 + level_f) / 2.0));
    Ok(result
        .theta_hat
        .iter()
        .zip(&sds)
        .map(|(&th, &sd)| (th - z * sd, th + z * sd))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::averaging::solve_limit_ode;
    use crate::model::{Dims, EpsilonPair, ParamDomain};
    use crate::registry;
    use crate::simulate::{euler_maruyama, TimeGrid};

    /// Noise-free path: Δx_k = c_{θ*}(x_k, y_k) Δt with y ≡ 1.
    fn noiseless_sin_path(theta_star: f64, n: usize) -> (TimeGrid<f64>, Vec<f64>, Vec<f64>) {
        let grid = TimeGrid::new(1.0, n).unwrap();
        let dt = grid.dt();
        let mut x = Vec::with_capacity(n + 1);
        let mut y = Vec::with_capacity(n + 1);
        x.push(1.0);
        y.push(1.0);
        for k in 0..n {
            let xk: f64 = x[k];
            x.push(xk + theta_star * xk.sin() * dt);
            y.push(1.0);
        }
        (grid, x, y)
    }

    #[test]
    fn noise_free_path_recovers_theta_exactly() {
        let m = registry::builtin::<f64>("sin-ou-indep").unwrap();
        let (grid, x, y) = noiseless_sin_path(1.3, 2000);
        let traj = Trajectory::from_observations(
            &grid,
            Dims { slow: 1, fast: 1, w: 1, b: 1, param: 1 },
            x,
            y,
            EpsilonPair::new(0.1, 1e-3).unwrap(),
        )
        .unwrap();
        let fit = mle(&m, &traj, &OptimizerOptions::default()).unwrap();
        assert_eq!(fit.method, EstimationMethod::ClosedForm);
        assert!((fit.theta_hat[0] - 1.3).abs() < 1e-8, "theta_hat = {}", fit.theta_hat[0]);
        assert!(!fit.on_boundary);
    }

    #[test]
    fn two_parameter_noise_free_recovery() {
        // c = theta1 sin(x) y^2 + theta2 x: the 2x2 normal equations must
        // recover both coordinates exactly on a noise-free path
        let m = MultiscaleModel::builder()
            .dims(1, 1, 1, 1, 2)
            .drift_slow(|th: &[f64], x: &[f64], y: &[f64], out: &mut [f64]| {
                out[0] = th[0] * x[0].sin() * y[0] * y[0] + th[1] * x[0];
            })
            .linear_in_theta(|x: &[f64], y: &[f64], out: &mut [f64]| {
                out[0] = x[0].sin() * y[0] * y[0];
                out[1] = x[0];
            })
            .drift_slow_grad(|_th: &[f64], x: &[f64], y: &[f64], out: &mut [f64]| {
                out[0] = x[0].sin() * y[0] * y[0];
                out[1] = x[0];
            })
            .diffusion_slow(|_x, _y, out| out[0] = 1.0)
            .drift_fast(|_x, y, out| out[0] = -y[0])
            .diffusion_fast_w(|_x, _y, out| out[0] = 0.0)
            .diffusion_fast_b(|_x, _y, out| out[0] = 1.0)
            .param_domain(ParamDomain::new(vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap())
            .initial_state(vec![1.0], vec![1.0])
            .build()
            .unwrap();
        let theta_star = [1.3, 0.7];
        let n = 1000;
        let grid = TimeGrid::new(1.0, n).unwrap();
        let dt = grid.dt();
        let mut x = vec![1.0f64];
        for k in 0..n {
            let xk = x[k];
            x.push(xk + (theta_star[0] * xk.sin() + theta_star[1] * xk) * dt);
        }
        let y = vec![1.0f64; n + 1];
        let traj = Trajectory::from_observations(
            &grid,
            Dims { slow: 1, fast: 1, w: 1, b: 1, param: 2 },
            x,
            y,
            EpsilonPair::new(0.1, 1e-2).unwrap(),
        )
        .unwrap();
        let fit = mle(&m, &traj, &OptimizerOptions::default()).unwrap();
        assert!((fit.theta_hat[0] - 1.3).abs() < 1e-8, "theta1 = {}", fit.theta_hat[0]);
        assert!((fit.theta_hat[1] - 0.7).abs() < 1e-8, "theta2 = {}", fit.theta_hat[1]);
    }

    #[test]
    fn two_step_toy_mle_matches_hand_oracle() {
        // correlated-noise coefficients with a hand-set two-step path
        let m = registry::builtin::<f64>("sin-ou-corr").unwrap();
        let grid = TimeGrid::new(0.2, 2).unwrap();
        let eps = EpsilonPair::new(0.1, 0.025).unwrap();
        let x = vec![1.0, 1.2, 0.95];
        let y = vec![0.8, -0.3, 0.5];
        let traj = Trajectory::from_observations(
            &grid,
            Dims { slow: 1, fast: 1, w: 1, b: 1, param: 1 },
            x.clone(),
            y.clone(),
            eps,
        )
        .unwrap();
        let fit = mle(&m, &traj, &OptimizerOptions::default()).unwrap();

        // hand arithmetic: G = 2, M = sqrt(2), g = sin(x) y^2, f = -y
        let dt: f64 = 0.1;
        let sqrt2 = 2.0f64.sqrt();
        let sdt = (0.1f64 / 0.025).sqrt();
        let sdy = (0.1f64 * 0.025).sqrt();
        let mut a = 0.0;
        let mut b = 0.0;
        for k in 0..2 {
            let g = x[k].sin() * y[k] * y[k];
            a += 2.0 * g * g * dt;
            b += 2.0 * g * (x[k + 1] - x[k]);
            b += sdt * sqrt2 * g * (-y[k]) * dt;
            b -= sdy * sqrt2 * g * (y[k + 1] - y[k]);
        }
        let want = b / a;
        assert!(
            (fit.theta_hat[0] - want).abs() < 1e-10,
            "theta_hat {} vs oracle {want}",
            fit.theta_hat[0]
        );
        // objective agrees with a direct likelihood evaluation
        let z = crate::likelihood::log_likelihood(&m, &fit.theta_hat, &traj).unwrap();
        assert!((fit.objective - z.value).abs() < 1e-12);
    }

    #[test]
    fn closed_form_and_newton_agree() {
        let m = registry::builtin::<f64>("sin-ou-corr").unwrap();
        let grid = TimeGrid::new(1.0, 20_000).unwrap();
        let eps = EpsilonPair::new(0.1, 1e-2).unwrap();
        let traj = euler_maruyama(&m, &[1.0], &eps, &grid, 37, false).unwrap();
        let closed = mle(&m, &traj, &OptimizerOptions::default()).unwrap();
        let numeric =
            mle(&m, &traj, &OptimizerOptions { force_numeric: true, ..Default::default() }).unwrap();
        assert_eq!(closed.method, EstimationMethod::ClosedForm);
        assert!(matches!(
            numeric.method,
            EstimationMethod::ProjectedNewton | EstimationMethod::GoldenSection
        ));
        let gap = (closed.theta_hat[0] - numeric.theta_hat[0]).abs();
        assert!(gap <= 1e-6, "closed {} vs numeric {}", closed.theta_hat[0], numeric.theta_hat[0]);

        // quasi variants agree with each other too
        let closed_q = quasi_mle(&m, &traj, &OptimizerOptions::default()).unwrap();
        let numeric_q =
            quasi_mle(&m, &traj, &OptimizerOptions { force_numeric: true, ..Default::default() }).unwrap();
        assert!((closed_q.theta_hat[0] - numeric_q.theta_hat[0]).abs() <= 1e-6);
    }

    #[test]
    fn independent_noise_makes_mle_and_quasi_identical() {
        let m = registry::builtin::<f64>("sin-ou-indep").unwrap();
        let grid = TimeGrid::new(1.0, 20_000).unwrap();
        let eps = EpsilonPair::new(0.1, 1e-3).unwrap();
        for seed in [3, 5, 9] {
            let traj = euler_maruyama(&m, &[2.0], &eps, &grid, seed, false).unwrap();
            let full = mle(&m, &traj, &OptimizerOptions::default()).unwrap();
            let quasi = quasi_mle(&m, &traj, &OptimizerOptions::default()).unwrap();
            assert_eq!(full.theta_hat[0], quasi.theta_hat[0], "seed {seed}");
        }
    }

    #[test]
    fn degenerate_normal_equations_are_reported() {
        // g vanishes identically: A = 0
        let m = MultiscaleModel::builder()
            .dims(1, 1, 1, 1, 1)
            .drift_slow(|_t, _x, _y, out| out[0] = 0.0)
            .linear_in_theta(|_x, _y, out| out[0] = 0.0)
            .diffusion_slow(|_x, _y, out| out[0] = 1.0)
            .drift_fast(|_x, y, out| out[0] = -y[0])
            .diffusion_fast_w(|_x, _y, out| out[0] = 0.0)
            .diffusion_fast_b(|_x, _y, out| out[0] = 1.0)
            .param_domain(ParamDomain::new(vec![-1.0], vec![1.0]).unwrap())
            .initial_state(vec![0.0], vec![0.0])
            .build()
            .unwrap();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let eps = EpsilonPair::new(0.1, 0.01).unwrap();
        let traj = euler_maruyama(&m, &[0.0], &eps, &grid, 2, false).unwrap();
        match mle(&m, &traj, &OptimizerOptions::default()) {
            Err(Error::DegenerateNormalEquations { .. }) => {}
            other => panic!("expected DegenerateNormalEquations, got {other:?}"),
        }
    }

    #[test]
    fn out_of_domain_optimum_is_projected_and_flagged() {
        // true theta = 1.3 but the domain is capped at 0.5
        let tight = MultiscaleModel::builder()
            .dims(1, 1, 1, 1, 1)
            .drift_slow(|th: &[f64], x: &[f64], y: &[f64], out: &mut [f64]| {
                out[0] = th[0] * x[0].sin() * y[0] * y[0]
            })
            .linear_in_theta(|x: &[f64], y: &[f64], out: &mut [f64]| out[0] = x[0].sin() * y[0] * y[0])
            .drift_slow_grad(|_th: &[f64], x: &[f64], y: &[f64], out: &mut [f64]| {
                out[0] = x[0].sin() * y[0] * y[0]
            })
            .diffusion_slow(|_x, _y, out| out[0] = 1.0)
            .drift_fast(|_x, y, out| out[0] = -y[0])
            .diffusion_fast_w(|_x, _y, out| out[0] = 0.0)
            .diffusion_fast_b(|_x, _y, out| out[0] = 1.0)
            .param_domain(ParamDomain::new(vec![0.0], vec![0.5]).unwrap())
            .initial_state(vec![1.0], vec![1.0])
            .build()
            .unwrap();
        let (grid, x, y) = noiseless_sin_path(1.3, 500);
        let traj = Trajectory::from_observations(
            &grid,
            Dims { slow: 1, fast: 1, w: 1, b: 1, param: 1 },
            x,
            y,
            EpsilonPair::new(0.1, 1e-3).unwrap(),
        )
        .unwrap();
        let fit = mle(&tight, &traj, &OptimizerOptions::default()).unwrap();
        assert_eq!(fit.theta_hat[0], 0.5);
        assert!(fit.on_boundary);
        // the numeric route lands on the same boundary point
        let numeric =
            mle(&tight, &traj, &OptimizerOptions { force_numeric: true, ..Default::default() }).unwrap();
        assert!((numeric.theta_hat[0] - 0.5).abs() < 1e-7);
        assert!(numeric.on_boundary);
    }

    #[test]
    fn fisher_information_of_constant_drift_is_t() {
        // c = theta, sigma = 1, tau1 = 0: Q ≡ 1, I = T = 1
        let m = MultiscaleModel::builder()
            .dims(1, 1, 1, 1, 1)
            .drift_slow(|th: &[f64], _x: &[f64], _y: &[f64], out: &mut [f64]| out[0] = th[0])
            .drift_slow_grad(|_th: &[f64], _x: &[f64], _y: &[f64], out: &mut [f64]| out[0] = 1.0)
            .averaged_drift_override(|th, _x, out| out[0] = th[0])
            .diffusion_slow(|_x, _y, out| out[0] = 1.0)
            .drift_fast(|_x, y, out| out[0] = -y[0])
            .diffusion_fast_w(|_x, _y, out| out[0] = 0.0)
            .diffusion_fast_b(|_x, _y, out| out[0] = 1.0)
            .param_domain(ParamDomain::new(vec![-5.0], vec![5.0]).unwrap())
            .initial_state(vec![0.0], vec![0.0])
            .build()
            .unwrap();
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let lim = solve_limit_ode(&m, &[1.0], &grid, &InvariantAvgOptions::default()).unwrap();
        let opts = InvariantAvgOptions { horizon: 30.0, n_steps: 5_000, n_chains: 2, ..Default::default() };
        let fisher = fisher_information(&m, &[1.0], &lim, &opts).unwrap();
        assert!((fisher.matrix[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(fisher.q_path.len(), 51);
        assert!((fisher.min_eigenvalue - 1.0).abs() < 1e-12);
    }

    /// Shared ergodic-averaging plan for the Fisher reference checks: modest
    /// per-node chains, accuracy recovered by averaging across nodes.
    fn fisher_opts() -> InvariantAvgOptions<f64> {
        InvariantAvgOptions { horizon: 210.0, n_steps: 50_000, n_chains: 8, seed: 2, ..Default::default() }
    }

    #[test]
    fn fisher_reproduces_reported_theoretical_sds() {
        // sqrt(0.1 / I(theta0)) for theta0 = 2, 1, 0.1 against the reported
        // 0.381, 0.391, 0.428
        let m = registry::builtin::<f64>("sin-ou-indep").unwrap();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        for (theta0, want) in [(2.0, 0.381), (1.0, 0.391), (0.1, 0.428)] {
            let lim = solve_limit_ode(&m, &[theta0], &grid, &InvariantAvgOptions::default()).unwrap();
            let fisher = fisher_information(&m, &[theta0], &lim, &fisher_opts()).unwrap();
            let sd = theoretical_sd(&fisher, 0.1).unwrap()[0];
            assert!((sd - want).abs() < 0.005, "theta0 {theta0}: sd {sd} vs {want}");
        }
    }

    #[test]
    fn fisher_matches_closed_form_for_unbounded_drift_example() {
        // I = 3(e - 1); sd(0.1) = 0.139, sd(0.01) = 0.044
        let m = registry::builtin::<f64>("linear-ou-corr").unwrap();
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let lim = solve_limit_ode(&m, &[1.0], &grid, &InvariantAvgOptions::default()).unwrap();
        let fisher = fisher_information(&m, &[1.0], &lim, &fisher_opts()).unwrap();
        let i_closed = 3.0 * (std::f64::consts::E - 1.0);
        let rel = (fisher.matrix[(0, 0)] - i_closed).abs() / i_closed;
        assert!(rel < 0.02, "I = {} vs {i_closed}", fisher.matrix[(0, 0)]);
        let sd1 = theoretical_sd(&fisher, 0.1).unwrap()[0];
        let sd2 = theoretical_sd(&fisher, 0.01).unwrap()[0];
        assert!((sd1 - 0.139).abs() < 0.005, "sd1 = {sd1}");
        assert!((sd2 - 0.044).abs() < 0.005, "sd2 = {sd2}");
    }

    #[test]
    fn non_identifiable_model_fails_fisher_pd_check() {
        // drift does not depend on theta at all
        let m = MultiscaleModel::builder()
            .dims(1, 1, 1, 1, 1)
            .drift_slow(|_th: &[f64], x: &[f64], _y: &[f64], out: &mut [f64]| out[0] = x[0].sin())
            .drift_slow_grad(|_th: &[f64], _x: &[f64], _y: &[f64], out: &mut [f64]| out[0] = 0.0)
            .averaged_drift_override(|_th, x, out| out[0] = x[0].sin() * 0.5)
            .diffusion_slow(|_x, _y, out| out[0] = 1.0)
            .drift_fast(|_x, y, out| out[0] = -y[0])
            .diffusion_fast_w(|_x, _y, out| out[0] = 0.0)
            .diffusion_fast_b(|_x, _y, out| out[0] = 1.0)
            .param_domain(ParamDomain::new(vec![-1.0], vec![1.0]).unwrap())
            .initial_state(vec![1.0], vec![0.0])
            .build()
            .unwrap();
        let grid = TimeGrid::new(1.0, 20).unwrap();
        let lim = solve_limit_ode(&m, &[0.0], &grid, &InvariantAvgOptions::default()).unwrap();
        let opts = InvariantAvgOptions { horizon: 20.0, n_steps: 2_000, n_chains: 2, ..Default::default() };
        match fisher_information(&m, &[0.0], &lim, &opts) {
            Err(Error::NonPositiveDefinite { .. }) => {}
            other => panic!("expected NonPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn confidence_interval_reference_values() {
        let fisher = FisherInfo {
            matrix: Mat::from_row_major(1, 1, &[1.0f64]),
            q_path: vec![1.0],
            theta: vec![1.0],
            min_eigenvalue: 1.0,
        };
        let result = EstimatorResult {
            theta_hat: vec![1.0],
            objective: 0.0,
            method: EstimationMethod::ClosedForm,
            iterations: 0,
            on_boundary: false,
            fisher: None,
            ci: None,
        };
        let ci95 = confidence_interval(&result, &fisher, 0.01, 0.95).unwrap();
        assert!((ci95[0].0 - 0.804_003_601_545_994_6).abs() < 1e-9, "lo = {}", ci95[0].0);
        assert!((ci95[0].1 - 1.195_996_398_454_005_4).abs() < 1e-9, "hi = {}", ci95[0].1);
        let ci68 = confidence_interval(&result, &fisher, 0.01, 0.68).unwrap();
        assert!((ci68[0].0 - 0.900_554_211_679_024_7).abs() < 1e-9, "lo = {}", ci68[0].0);
        assert!((ci68[0].1 - 1.099_445_788_320_975_3).abs() < 1e-9, "hi = {}", ci68[0].1);
        assert!(confidence_interval(&result, &fisher, 0.01, 1.5).is_err());
    }

    #[test]
    fn estimation_error_shrinks_along_the_epsilon_ladder() {
        // delta = eps^{3/2}; mean |theta_hat - theta0| must decrease
        let m = registry::builtin::<f64>("sin-ou-indep").unwrap();
        let theta0 = [1.0];
        let cases: [(f64, usize); 3] = [(1e-1, 10_000), (1e-2, 100_000), (1e-3, 1_000_000)];
        let mut means = Vec::new();
        for (i, (eps_val, n)) in cases.into_iter().enumerate() {
            let eps = EpsilonPair::new(eps_val, eps_val.powf(1.5)).unwrap();
            let grid = TimeGrid::new(1.0, n).unwrap();
            let reps = 30;
            let mut acc = 0.0;
            for r in 0..reps {
                let seed = crate::rng::replicate_seed(7000 + i as u64, r);
                let traj = euler_maruyama(&m, &theta0, &eps, &grid, seed, false).unwrap();
                let fit = mle(&m, &traj, &OptimizerOptions::default()).unwrap();
                acc += (fit.theta_hat[0] - theta0[0]).abs();
            }
            means.push(acc / reps as f64);
        }
        assert!(
            means[0] > means[1] && means[1] > means[2],
            "mean |error| not decreasing: {means:?}"
        );
    }
}
