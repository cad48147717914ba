//! Source-point optimization.
//!
//! Three solvers share one loop shape — integrate the flow, take a gradient
//! step on the data-fidelity term, optionally re-project the latent onto the
//! √d sphere — and differ only in the gradient:
//!
//! * [`pflow_solve`]: proxy gradient C·∇_{x₁}L, no backprop through the ODE.
//! * [`dflow_solve`]: true gradient M_Nᵀ∇_{x₁}L by reverse accumulation
//!   through all N Euler steps, caching one tape per step.
//! * [`exact_linear_oracle`]: closed-form gradient for fields v = Ax, the
//!   ground truth the other two are tested against.

use std::time::Instant;

use crate::degrade::{LinearOperator, Observation};
use crate::error::{Error, Result};
use crate::flow::{flow_forward_counted, EvalCounters, FlowConfig};
use crate::net::{field_forward, field_vjp_input, VelocityFieldParams};
use crate::numerics::{matmul, Matrix, RngState, Vector};

#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Optimization iterations K.
    pub iterations: usize,
    /// ODE steps N per flow evaluation.
    pub ode_steps: usize,
    /// Step size η.
    pub step_size: f64,
    /// Proxy scalar C; multiplies the proxy gradient only. Defaults to 1 and
    /// can be folded into η.
    pub proxy_scalar: f64,
    /// Latent dimension d.
    pub dim: usize,
    /// Re-project the latent onto the sphere of radius √d after each update.
    pub projection_enabled: bool,
    /// ℓ2 latent penalty λ for the full-backprop baseline; 0 disables it.
    pub latent_penalty: f64,
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(dim: usize) -> Self {
        SolverConfig {
            iterations: 100,
            ode_steps: 10,
            step_size: 0.3,
            proxy_scalar: 1.0,
            dim,
            projection_enabled: true,
            latent_penalty: 0.0,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Contract("iterations must be >= 1".into()));
        }
        if self.step_size < 0.0 || !self.step_size.is_finite() {
            return Err(Error::Contract("step size must be finite and >= 0".into()));
        }
        if self.proxy_scalar <= 0.0 {
            return Err(Error::Contract("proxy scalar must be > 0".into()));
        }
        FlowConfig::new(self.ode_steps).map(|_| ())
    }
}

/// Per-iteration scalars; one per optimization step.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub iteration: usize,
    pub loss: f64,
    pub x0_norm: f64,
    /// Measured wall time; excluded from the determinism guarantee.
    pub wall_ms: f64,
    /// Peak simultaneously cached forward tapes up to this iteration.
    pub cached_tapes: usize,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x0_final: Vector,
    pub x1_final: Vector,
    pub records: Vec<RunRecord>,
    pub counters: EvalCounters,
}

impl SolveResult {
    pub fn final_loss(&self) -> f64 {
        self.records.last().map(|r| r.loss).unwrap_or(f64::NAN)
    }

    pub fn initial_loss(&self) -> f64 {
        self.records.first().map(|r| r.loss).unwrap_or(f64::NAN)
    }
}

/// Quadratic data-fidelity term: L = ½‖Hx₁ − y‖², ∇ = Hᵀ(Hx₁ − y).
pub fn data_fidelity_grad(
    op: &LinearOperator,
    x1: &Vector,
    y: &Vector,
) -> Result<(f64, Vector)> {
    let residual = op.apply(x1)?.sub(y);
    let loss = 0.5 * residual.dot(&residual);
    let grad = op.adjoint(&residual)?;
    Ok((loss, grad))
}

/// Rescale onto the hypersphere of radius √d.
///
/// A vanishing input is an error rather than a silent re-randomization: the
/// event is measure-zero and re-sampling would break determinism.
pub fn sphere_project(x: &Vector) -> Result<Vector> {
    let norm = x.norm();
    if norm <= 1e-12 {
        return Err(Error::Degenerate(format!(
            "cannot project a vector of norm {norm:.3e} onto the sphere"
        )));
    }
    let target = (x.dim() as f64).sqrt();
    Ok(x.scale(target / norm))
}

fn check_dims(params: &VelocityFieldParams, obs: &Observation, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    let d = params.data_dim();
    if cfg.dim != d {
        return Err(Error::Contract(format!(
            "config dim {} does not match field dim {d}",
            cfg.dim
        )));
    }
    if obs.operator.in_dim() != d {
        return Err(Error::Contract(format!(
            "operator input dim {} does not match field dim {d}",
            obs.operator.in_dim()
        )));
    }
    if obs.y.dim() != obs.operator.out_dim() {
        return Err(Error::Contract(format!(
            "observation dim {} does not match operator output dim {}",
            obs.y.dim(),
            obs.operator.out_dim()
        )));
    }
    Ok(())
}

/// Proxy-gradient source optimization (the P-Flow loop).
///
/// Runs exactly K iterations of {flow forward; proxy gradient step; optional
/// sphere projection}, then one more flow forward for the returned sample.
/// Peak cached tapes stays at 1 regardless of N.
pub fn pflow_solve(
    params: &VelocityFieldParams,
    obs: &Observation,
    cfg: &SolverConfig,
    rng: &mut RngState,
) -> Result<SolveResult> {
    check_dims(params, obs, cfg)?;
    let flow_cfg = FlowConfig::new(cfg.ode_steps)?;
    let mut counters = EvalCounters::default();
    let mut x0 = crate::numerics::sample_standard_normal(rng, cfg.dim);
    let mut records = Vec::with_capacity(cfg.iterations);

    for k in 0..cfg.iterations {
        let started = Instant::now();
        let (x1, _) = flow_forward_counted(params, &x0, &flow_cfg, &mut counters)
            .map_err(|e| annotate_iteration(e, k))?;
        let (loss, grad) = data_fidelity_grad(&obs.operator, &x1, &obs.y)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration: k, msg: format!("loss = {loss}") });
        }
        x0 = x0.axpy(-cfg.step_size * cfg.proxy_scalar, &grad);
        if cfg.projection_enabled {
            x0 = sphere_project(&x0)?;
        }
        records.push(RunRecord {
            iteration: k,
            loss,
            x0_norm: x0.norm(),
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            cached_tapes: counters.peak_tapes,
        });
    }

    let (x1_final, _) = flow_forward_counted(params, &x0, &flow_cfg, &mut counters)?;
    Ok(SolveResult { x0_final: x0, x1_final, records, counters })
}

/// Full-backprop baseline: the update uses the true latent gradient
/// g = M_Nᵀ∇_{x₁}L, reverse-accumulated through all N Euler steps.
///
/// All N step tapes stay cached until the backward pass finishes, so peak
/// cached tapes equals N. Plain gradient descent, no momentum: the only
/// difference from [`pflow_solve`] is the gradient itself. The returned
/// sample is the one generated in the last iteration.
pub fn dflow_solve(
    params: &VelocityFieldParams,
    obs: &Observation,
    cfg: &SolverConfig,
    rng: &mut RngState,
) -> Result<SolveResult> {
    check_dims(params, obs, cfg)?;
    let n = cfg.ode_steps;
    let dt = 1.0 / n as f64;
    let mut counters = EvalCounters::default();
    let mut x0 = crate::numerics::sample_standard_normal(rng, cfg.dim);
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut x1_final = x0.clone();

    for k in 0..cfg.iterations {
        let started = Instant::now();

        // forward pass, caching one tape per step
        let mut tapes = Vec::with_capacity(n);
        let mut x = x0.clone();
        for i in 0..n {
            let t = i as f64 * dt;
            counters.tape_acquired();
            let (v, tape) = field_forward(params, &x, t).map_err(|e| Error::Integration {
                step: i,
                msg: format!("iteration {k}: {e}"),
            })?;
            x = x.axpy(dt, &v);
            if !x.is_finite() {
                return Err(Error::Integration {
                    step: i,
                    msg: format!("iteration {k}: state became non-finite"),
                });
            }
            tapes.push(tape);
        }
        let x1 = x;
        let (loss, u) = data_fidelity_grad(&obs.operator, &x1, &obs.y)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration: k, msg: format!("loss = {loss}") });
        }

        // reverse accumulation: a ← (I + δt·J_i)ᵀ a across steps, newest first
        let mut a = u;
        for tape in tapes.iter().rev() {
            let pullback = field_vjp_input(params, tape, &a)?;
            counters.backward_applied();
            a = a.axpy(dt, &pullback);
        }
        for _ in 0..n {
            counters.tape_released();
        }
        drop(tapes);

        let mut g = a;
        if cfg.latent_penalty != 0.0 {
            g = g.axpy(cfg.latent_penalty, &x0);
        }
        x0 = x0.axpy(-cfg.step_size, &g);
        if cfg.projection_enabled {
            x0 = sphere_project(&x0)?;
        }
        x1_final = x1;
        records.push(RunRecord {
            iteration: k,
            loss,
            x0_norm: x0.norm(),
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            cached_tapes: counters.peak_tapes,
        });
    }

    Ok(SolveResult { x0_final: x0, x1_final, records, counters })
}

/// Ground-truth solver for linear fields v = Ax: the flow map and its
/// Jacobian are both the explicit matrix power (I + A/N)^N, so the true
/// gradient is available in closed form. Mirrors the baseline's loop
/// structure so trajectories are comparable iteration by iteration.
pub fn exact_linear_oracle(
    a: &Matrix,
    obs: &Observation,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    if a.rows() != a.cols() || a.rows() != cfg.dim {
        return Err(Error::Contract(format!(
            "oracle field matrix must be {}x{}, got {}x{}",
            cfg.dim,
            cfg.dim,
            a.rows(),
            a.cols()
        )));
    }
    let n = cfg.ode_steps;
    let power = Matrix::identity(cfg.dim)
        .add(&a.scale(1.0 / n as f64))?
        .pow(n)?;
    let mut rng = RngState::new(cfg.seed);
    let mut x0 = crate::numerics::sample_standard_normal(&mut rng, cfg.dim);
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut x1_final = x0.clone();

    for k in 0..cfg.iterations {
        let started = Instant::now();
        let x1 = power.matvec(&x0)?;
        let (loss, u) = data_fidelity_grad(&obs.operator, &x1, &obs.y)?;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration: k, msg: format!("loss = {loss}") });
        }
        let mut g = power.matvec_transposed(&u)?;
        if cfg.latent_penalty != 0.0 {
            g = g.axpy(cfg.latent_penalty, &x0);
        }
        x0 = x0.axpy(-cfg.step_size, &g);
        if cfg.projection_enabled {
            x0 = sphere_project(&x0)?;
        }
        x1_final = x1;
        records.push(RunRecord {
            iteration: k,
            loss,
            x0_norm: x0.norm(),
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
            cached_tapes: 0,
        });
    }

    Ok(SolveResult {
        x0_final: x0,
        x1_final,
        records,
        counters: EvalCounters::default(),
    })
}

fn annotate_iteration(e: Error, k: usize) -> Error {
    match e {
        Error::Integration { step, msg } => Error::Integration {
            step,
            msg: format!("iteration {k}: {msg}"),
        },
        other => other,
    }
}

/// Convenience: (I + A/N)^N, used by oracle-based tests.
pub fn euler_transfer_matrix(a: &Matrix, n_steps: usize) -> Result<Matrix> {
    Matrix::identity(a.rows())
        .add(&a.scale(1.0 / n_steps as f64))?
        .pow(n_steps)
}

/// Write per-iteration records in the per-solve CSV layout.
pub fn records_to_csv(records: &[RunRecord]) -> String {
    let mut out = String::from("k,loss,x0_norm,wall_ms,cached_tapes\n");
    for r in records {
        out.push_str(&format!(
            "{},{:.17e},{:.17e},{:.3},{}\n",
            r.iteration, r.loss, r.x0_norm, r.wall_ms, r.cached_tapes
        ));
    }
    out
}
