//! Euler integration of the learned ODE.
//!
//! Fixed-step explicit Euler, field evaluated at the left endpoint of each
//! step. No adaptive solvers: the step count N is a first-class experimental
//! knob and must map one-to-one onto the ablation sweeps.

use crate::error::{Error, Result};
use crate::net::{field_forward, VelocityFieldParams};
use crate::numerics::Vector;

pub const MAX_ODE_STEPS: usize = 10_000;

#[derive(Debug, Clone, Copy)]
pub struct FlowConfig {
    pub n_steps: usize,
    pub record_trajectory: bool,
}

impl FlowConfig {
    pub fn new(n_steps: usize) -> Result<Self> {
        if n_steps == 0 || n_steps > MAX_ODE_STEPS {
            return Err(Error::Contract(format!(
                "n_steps must be in 1..={MAX_ODE_STEPS}, got {n_steps}"
            )));
        }
        Ok(FlowConfig { n_steps, record_trajectory: false })
    }

    pub fn with_trajectory(mut self) -> Self {
        self.record_trajectory = true;
        self
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.n_steps as f64
    }
}

/// States x_{t_0}..x_{t_N} at times 0, 1/N, …, 1.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub times: Vec<f64>,
}

/// Forward/backward evaluation and cached-tape accounting for one solve.
///
/// A "tape" is the activation memory of a single network forward pass.
/// `peak_tapes` records the largest number simultaneously alive, which is
/// the memory-complexity observable the solver comparisons report.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalCounters {
    pub forward_evals: usize,
    pub backward_evals: usize,
    live_tapes: usize,
    pub peak_tapes: usize,
}

impl EvalCounters {
    pub fn tape_acquired(&mut self) {
        self.forward_evals += 1;
        self.live_tapes += 1;
        self.peak_tapes = self.peak_tapes.max(self.live_tapes);
    }

    pub fn tape_released(&mut self) {
        debug_assert!(self.live_tapes > 0);
        self.live_tapes -= 1;
    }

    pub fn backward_applied(&mut self) {
        self.backward_evals += 1;
    }

    pub fn live_tapes(&self) -> usize {
        self.live_tapes
    }
}

/// Integrate the ODE from x0 over [0, 1] with exactly N field evaluations.
pub fn flow_forward(
    params: &VelocityFieldParams,
    x0: &Vector,
    cfg: &FlowConfig,
) -> Result<(Vector, Option<Trajectory>)> {
    flow_forward_counted(params, x0, cfg, &mut EvalCounters::default())
}

/// Same as [`flow_forward`] but charges evaluations and tape lifetimes to
/// the supplied counters. Each step's tape is dropped as soon as the state
/// advances, so at most one tape is ever alive.
pub fn flow_forward_counted(
    params: &VelocityFieldParams,
    x0: &Vector,
    cfg: &FlowConfig,
    counters: &mut EvalCounters,
) -> Result<(Vector, Option<Trajectory>)> {
    if x0.dim() != params.data_dim() {
        return Err(Error::Contract(format!(
            "flow_forward: state dim {} does not match field dim {}",
            x0.dim(),
            params.data_dim()
        )));
    }
    let n = cfg.n_steps;
    let dt = cfg.dt();
    let mut x = x0.clone();
    let mut traj = if cfg.record_trajectory {
        Some(Trajectory {
            states: {
                let mut s = Vec::with_capacity(n + 1);
                s.push(x.clone());
                s
            },
            times: {
                let mut t = Vec::with_capacity(n + 1);
                t.push(0.0);
                t
            },
        })
    } else {
        None
    };

    for i in 0..n {
        let t = i as f64 * dt;
        counters.tape_acquired();
        let step = field_forward(params, &x, t);
        counters.tape_released();
        let (v, _tape) = step.map_err(|e| Error::Integration {
            step: i,
            msg: e.to_string(),
        })?;
        x = x.axpy(dt, &v);
        if !x.is_finite() {
            return Err(Error::Integration {
                step: i,
                msg: "state became non-finite".into(),
            });
        }
        if let Some(tr) = traj.as_mut() {
            tr.states.push(x.clone());
            tr.times.push((i + 1) as f64 * dt);
        }
    }
    Ok((x, traj))
}

/// Empirical check of the flow's Lipschitz bound.
#[derive(Debug, Clone)]
pub struct GronwallReport {
    /// exp(L_v) with L_v the certified field Lipschitz bound.
    pub bound: f64,
    /// max over pairs of ‖ψ(x₀) − ψ(x₀′)‖ / ‖x₀ − x₀′‖.
    pub max_ratio: f64,
    pub violations: usize,
    pub pairs: usize,
}

/// For every pair, compare the output separation against
/// exp(L_v)·‖x₀ − x₀′‖. Identical inputs count as ratio 0.
pub fn gronwall_check(
    params: &VelocityFieldParams,
    pairs: &[(Vector, Vector)],
    cfg: &FlowConfig,
) -> Result<GronwallReport> {
    let lv = params.lipschitz_upper_bound()?;
    let bound = lv.exp();
    let mut max_ratio = 0.0_f64;
    let mut violations = 0;
    for (a, b) in pairs {
        let input_gap = a.sub(b).norm();
        let (ya, _) = flow_forward(params, a, cfg)?;
        let (yb, _) = flow_forward(params, b, cfg)?;
        let output_gap = ya.sub(&yb).norm();
        if input_gap == 0.0 {
            continue;
        }
        let ratio = output_gap / input_gap;
        max_ratio = max_ratio.max(ratio);
        if output_gap > bound * input_gap {
            violations += 1;
        }
    }
    Ok(GronwallReport { bound, max_ratio, violations, pairs: pairs.len() })
}

/// Mean angle between successive displacement vectors, plus how many
/// interior nodes were skipped because a segment had zero length.
#[derive(Debug, Clone, Copy)]
pub struct Curvature {
    pub mean_angle: f64,
    pub skipped: usize,
}

/// 0 for a perfectly straight trajectory; π/2 for a right-angle turn.
pub fn trajectory_curvature(traj: &Trajectory) -> Result<Curvature> {
    let n = traj.states.len();
    if n < 3 {
        return Err(Error::Contract(format!(
            "curvature needs at least 3 states (N >= 2), got {n}"
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    let mut skipped = 0usize;
    for i in 1..n - 1 {
        let d0 = traj.states[i].sub(&traj.states[i - 1]);
        let d1 = traj.states[i + 1].sub(&traj.states[i]);
        let (n0, n1) = (d0.norm(), d1.norm());
        if n0 == 0.0 || n1 == 0.0 {
            skipped += 1;
            continue;
        }
        let cos = (d0.dot(&d1) / (n0 * n1)).clamp(-1.0, 1.0);
        total += cos.acos();
        count += 1;
    }
    let mean_angle = if count == 0 { 0.0 } else { total / count as f64 };
    Ok(Curvature { mean_angle, skipped })
}
