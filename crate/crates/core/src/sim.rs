//! Closed-loop simulation and empirical decay-rate fitting.
//!
//! The loop is autonomous positive feedback: `x_{k+1} = A x_k + B u_k`,
//! `y_k = C x_k + D u_k`, `u_k = Δ(y_k)`. When `D ≠ 0` the per-step
//! algebraic loop is solved by damped fixed-point iteration.

use crate::error::{Error, Result};
use crate::iqc::NonlinearityModel;
use crate::lti::StateSpace;
use nalgebra::DVector;

/// One simulated closed-loop run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// States `x_0 … x_T` (length `T + 1`).
    pub states: Vec<DVector<f64>>,
    /// Outputs `y_0 … y_T`.
    pub outputs: Vec<f64>,
    /// Nonlinearity outputs `u_0 … u_T`.
    pub inputs: Vec<f64>,
    /// Number of steps taken (states has `horizon + 1` entries).
    pub horizon: usize,
}

impl Trajectory {
    /// Euclidean state norms `‖x_k‖`.
    pub fn state_norms(&self) -> Vec<f64> {
        self.states.iter().map(|x| x.norm()).collect()
    }
}

/// Convergence threshold for the `D ≠ 0` algebraic loop.
const LOOP_TOL: f64 = 1e-12;
const LOOP_MAX_ITER: usize = 200;

/// Simulates the autonomous loop for `t_steps` steps from `x0`.
///
/// Requires a SISO plant and a nonlinearity with a concrete map attached.
/// With `D ≠ 0`, requires `|β·D| < 1` so the damped fixed-point iteration
/// for `y = Cx + D·Δ(y)` contracts.
pub fn simulate(
    g: &StateSpace,
    delta: &NonlinearityModel,
    x0: &DVector<f64>,
    t_steps: usize,
) -> Result<Trajectory> {
    if g.ninputs() != 1 || g.noutputs() != 1 {
        return Err(Error::Dimension(format!(
            "simulation needs a SISO plant, got {}x{}",
            g.noutputs(),
            g.ninputs()
        )));
    }
    if x0.len() != g.nx() {
        return Err(Error::Dimension(format!(
            "initial state has length {} but the plant has {} states",
            x0.len(),
            g.nx()
        )));
    }
    if t_steps < 1 {
        return Err(Error::Parameter("horizon must be at least 1".into()));
    }
    if !delta.has_func() {
        return Err(Error::Parameter(format!(
            "nonlinearity '{}' has no concrete map to simulate",
            delta.label
        )));
    }
    let d = g.d()[(0, 0)];
    let slope_cap = delta.alpha.abs().max(delta.beta.abs());
    if d != 0.0 && slope_cap * d.abs() >= 1.0 {
        return Err(Error::SingularLoop(slope_cap * d.abs()));
    }

    let mut x = x0.clone();
    let mut states = Vec::with_capacity(t_steps + 1);
    let mut outputs = Vec::with_capacity(t_steps + 1);
    let mut inputs = Vec::with_capacity(t_steps + 1);

    for k in 0..=t_steps {
        let cx = (g.c() * &x)[(0, 0)];
        let (y, u) = if d == 0.0 {
            let y = cx;
            let u = delta.eval(y).expect("map checked above");
            (y, u)
        } else {
            solve_algebraic_loop(cx, d, delta).ok_or(Error::LoopDivergence { step: k })?
        };
        if !(y.is_finite() && u.is_finite() && x.iter().all(|v| v.is_finite())) {
            return Err(Error::LoopDivergence { step: k });
        }
        states.push(x.clone());
        outputs.push(y);
        inputs.push(u);
        if k < t_steps {
            x = g.a() * &x + g.b() * u;
        }
    }
    Ok(Trajectory {
        states,
        outputs,
        inputs,
        horizon: t_steps,
    })
}

/// Damped fixed-point solve of `y = cx + d·Δ(y)` to `1e−12` residual.
fn solve_algebraic_loop(cx: f64, d: f64, delta: &NonlinearityModel) -> Option<(f64, f64)> {
    let mut y = cx;
    for _ in 0..LOOP_MAX_ITER {
        let u = delta.eval(y)?;
        let target = cx + d * u;
        let resid = target - y;
        if resid.abs() <= LOOP_TOL {
            return Some((y, u));
        }
        y += 0.5 * resid;
        if !y.is_finite() {
            return None;
        }
    }
    None
}

/// Result of a log-linear decay fit.
#[derive(Debug, Clone, Copy)]
pub struct FitResult {
    /// Exponentiated least-squares slope of `ln ‖x_k‖` vs `k`.
    pub rate: f64,
    /// True if the trajectory hit an exact zero state (rate reported as 0).
    pub hit_zero: bool,
    /// Number of samples entering the fit.
    pub points_used: usize,
}

/// Fits the empirical decay rate of the state norms over `k ≥ burn_in`.
///
/// Needs at least two usable points past the burn-in; hitting an exact zero
/// norm short-circuits to rate 0 with the `hit_zero` flag set.
pub fn fit_decay_rate(traj: &Trajectory, burn_in: usize) -> Result<FitResult> {
    let norms = traj.state_norms();
    if burn_in + 2 > norms.len() {
        return Err(Error::FitRange(format!(
            "burn-in {burn_in} leaves fewer than 2 of the {} samples",
            norms.len()
        )));
    }
    let tail = &norms[burn_in..];
    if tail.contains(&0.0) {
        return Ok(FitResult {
            rate: 0.0,
            hit_zero: true,
            points_used: 0,
        });
    }
    // Least squares on (k, ln‖x_k‖): slope = cov(k, l)/var(k).
    let n = tail.len() as f64;
    let mut sk = 0.0;
    let mut sl = 0.0;
    let mut skk = 0.0;
    let mut skl = 0.0;
    for (i, &nk) in tail.iter().enumerate() {
        let k = (burn_in + i) as f64;
        let l = nk.ln();
        sk += k;
        sl += l;
        skk += k * k;
        skl += k * l;
    }
    let denom = n * skk - sk * sk;
    if denom <= 0.0 {
        return Err(Error::FitRange("degenerate abscissa in decay fit".into()));
    }
    let slope = (n * skl - sk * sl) / denom;
    Ok(FitResult {
        rate: slope.exp(),
        hit_zero: false,
        points_used: tail.len(),
    })
}
