//! Conditioning and alignment diagnostics for the flow's cumulative
//! Jacobian.
//!
//! The central object is M_N = ∏ (I + δt·J_i) along an Euler trajectory:
//! its condition number measures how ill-posed full backpropagation is, and
//! uᵀM_N u measures whether the proxy gradient still points downhill.

use crate::degrade::Observation;
use crate::error::{Error, Result};
use crate::flow::{flow_forward, FlowConfig};
use crate::net::{field_forward, field_jacobian, field_vjp_input, VelocityFieldParams};
use crate::numerics::{condition_number, matmul, svd, Matrix, RngState, Vector};
use crate::solver::{data_fidelity_grad, sphere_project, SolveResult, SolverConfig};

/// Per-step Jacobians along one trajectory with their running product.
#[derive(Debug, Clone)]
pub struct JacobianChain {
    /// Local Jacobians J_i at (x_{t_i}, t_i).
    pub step_jacobians: Vec<Matrix>,
    /// Transition factors A_i = I + δt·J_i.
    pub step_factors: Vec<Matrix>,
    /// M_N = A_{N-1}···A_0.
    pub cumulative: Matrix,
    /// κ(M_k) for k = 1..N.
    pub prefix_condition_numbers: Vec<f64>,
}

impl JacobianChain {
    pub fn kappa(&self) -> f64 {
        *self
            .prefix_condition_numbers
            .last()
            .expect("chain has at least one step")
    }
}

/// Dense Jacobian chain along the Euler trajectory from x0 (d ≤ 64).
pub fn build_jacobian_chain(
    params: &VelocityFieldParams,
    x0: &Vector,
    n_steps: usize,
) -> Result<JacobianChain> {
    let d = params.data_dim();
    let dt = 1.0 / n_steps as f64;
    let mut x = x0.clone();
    let mut step_jacobians = Vec::with_capacity(n_steps);
    let mut step_factors = Vec::with_capacity(n_steps);
    let mut cumulative = Matrix::identity(d);
    let mut prefix_condition_numbers = Vec::with_capacity(n_steps);

    for i in 0..n_steps {
        let t = i as f64 * dt;
        let jac = field_jacobian(params, &x, t)?;
        let factor = Matrix::identity(d).add(&jac.scale(dt))?;
        cumulative = matmul(&factor, &cumulative)?;
        let kappa = condition_number(&cumulative).map_err(|e| {
            Error::Numerical(format!("condition number failed at step {i}: {e}"))
        })?;
        prefix_condition_numbers.push(kappa);

        let (v, _) = field_forward(params, &x, t)?;
        x = x.axpy(dt, &v);
        step_jacobians.push(jac);
        step_factors.push(factor);
    }
    Ok(JacobianChain { step_jacobians, step_factors, cumulative, prefix_condition_numbers })
}

/// Pull a cotangent back through the flow by reverse accumulation:
/// returns M_Nᵀ·u without ever forming M_N. Exact for any dimension.
pub fn reverse_accumulated_pullback(
    params: &VelocityFieldParams,
    x0: &Vector,
    n_steps: usize,
    u: &Vector,
) -> Result<Vector> {
    let dt = 1.0 / n_steps as f64;
    let mut x = x0.clone();
    let mut tapes = Vec::with_capacity(n_steps);
    for i in 0..n_steps {
        let t = i as f64 * dt;
        let (v, tape) = field_forward(params, &x, t)?;
        x = x.axpy(dt, &v);
        tapes.push(tape);
    }
    let mut a = u.clone();
    for tape in tapes.iter().rev() {
        let pullback = field_vjp_input(params, tape, &a)?;
        a = a.axpy(dt, &pullback);
    }
    Ok(a)
}

/// One row of the condition-number growth table.
#[derive(Debug, Clone, Copy)]
pub struct AnisotropyRow {
    pub epsilon: f64,
    pub n_steps: usize,
    /// κ(M_N) for aligned diagonal factors diag(1+ε, 1−ε).
    pub kappa_aligned: f64,
    /// The (1+ε)^N growth floor.
    pub growth_floor: f64,
    /// ∏ κ(A_i), the aligned-case exact value and the general upper bound.
    pub kappa_product: f64,
    /// κ(M_N) when each factor is rotated by a fresh random angle.
    pub kappa_misaligned: f64,
}

/// Synthetic condition-number growth: aligned diagonal factors realize
/// κ(M_N) = ∏κ(A_i) ≥ (1+ε)^N exactly, while randomly rotated factors are
/// capped by submultiplicativity.
pub fn anisotropy_growth_experiment(
    epsilons: &[f64],
    step_counts: &[usize],
    rng: &mut RngState,
) -> Result<Vec<AnisotropyRow>> {
    let mut rows = Vec::new();
    for &eps in epsilons {
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::Contract(format!("epsilon {eps} must be in [0,1)")));
        }
        let d = Matrix::diag(&[1.0 + eps, 1.0 - eps]);
        for &n in step_counts {
            let mut aligned = Matrix::identity(2);
            let mut misaligned = Matrix::identity(2);
            for _ in 0..n {
                aligned = matmul(&d, &aligned)?;
                let theta = rng.next_range(0.0, 2.0 * std::f64::consts::PI);
                let rot = Matrix::new(
                    2,
                    2,
                    vec![theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
                )?;
                let factor = matmul(&matmul(&rot, &d)?, &rot.transpose())?;
                misaligned = matmul(&factor, &misaligned)?;
            }
            let kappa_a = if eps == 0.0 { 1.0 } else { condition_number(&aligned)? };
            let kappa_m = if eps == 0.0 { 1.0 } else { condition_number(&misaligned)? };
            let per_step = (1.0 + eps) / (1.0 - eps);
            rows.push(AnisotropyRow {
                epsilon: eps,
                n_steps: n,
                kappa_aligned: kappa_a,
                growth_floor: (1.0 + eps).powi(n as i32),
                kappa_product: per_step.powi(n as i32),
                kappa_misaligned: kappa_m,
            });
        }
    }
    Ok(rows)
}

/// Alignment between the true latent gradient and the proxy at one probe.
#[derive(Debug, Clone, Copy)]
pub struct AlignmentRecord {
    pub iteration: usize,
    /// k/K, the normalized solve progress the probe sits at.
    pub progress: f64,
    /// cos∠(g, g′) with g = M_Nᵀu and g′ = u.
    pub cosine: f64,
    /// α̂ = uᵀM_N u / ‖u‖².
    pub alpha_hat: f64,
}

#[derive(Debug, Clone)]
pub struct AlignmentSweep {
    pub records: Vec<AlignmentRecord>,
    /// Probes dropped because the loss gradient vanished.
    pub skipped: usize,
}

impl AlignmentSweep {
    pub fn fraction_positive(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let positive = self.records.iter().filter(|r| r.cosine > 0.0).count();
        positive as f64 / self.records.len() as f64
    }
}

/// Run the proxy-gradient loop and, at evenly spaced iterations, compare the
/// proxy direction u against the true pullback M_Nᵀu.
///
/// The pullback uses reverse accumulation, so the sweep works at any
/// dimension; α̂ comes from uᵀ(M_Nᵀu)ᵀ… = gᵀu, no dense matrix needed.
pub fn alignment_sweep(
    params: &VelocityFieldParams,
    obs: &Observation,
    cfg: &SolverConfig,
    probes: usize,
) -> Result<AlignmentSweep> {
    if probes == 0 {
        return Err(Error::Contract("need at least one probe".into()));
    }
    let flow_cfg = FlowConfig::new(cfg.ode_steps)?;
    let stride = (cfg.iterations as f64 / probes as f64).max(1.0);
    let mut rng = RngState::new(cfg.seed);
    let mut x0 = crate::numerics::sample_standard_normal(&mut rng, cfg.dim);
    let mut records = Vec::new();
    let mut skipped = 0usize;
    let mut next_probe = 0.0_f64;

    for k in 0..cfg.iterations {
        let (x1, _) = flow_forward(params, &x0, &flow_cfg)?;
        let (_, u) = data_fidelity_grad(&obs.operator, &x1, &obs.y)?;

        if k as f64 >= next_probe {
            next_probe += stride;
            let unorm = u.norm();
            if unorm == 0.0 {
                skipped += 1;
            } else {
                let g = reverse_accumulated_pullback(params, &x0, cfg.ode_steps, &u)?;
                let alignment = g.dot(&u);
                records.push(AlignmentRecord {
                    iteration: k,
                    progress: k as f64 / cfg.iterations as f64,
                    cosine: g.cosine(&u),
                    alpha_hat: alignment / (unorm * unorm),
                });
            }
        }

        x0 = x0.axpy(-cfg.step_size * cfg.proxy_scalar, &u);
        if cfg.projection_enabled {
            x0 = sphere_project(&x0)?;
        }
    }
    Ok(AlignmentSweep { records, skipped })
}

/// One noise scale of the gradient-perturbation experiment.
#[derive(Debug, Clone, Copy)]
pub struct PerturbationRow {
    pub noise_scale: f64,
    /// ‖M_Nᵀξ‖ / ‖M_Nᵀu‖, the realized relative gradient error.
    pub relative_error: f64,
    /// κ(M_N)·‖ξ‖/‖u‖, the conditioning bound.
    pub bound: f64,
    pub violated: bool,
}

#[derive(Debug, Clone)]
pub struct PerturbationTable {
    pub kappa: f64,
    pub rows: Vec<PerturbationRow>,
}

/// Inject noise ξ of each given norm into the loss gradient and measure how
/// the backpropagated error compares against the κ(M_N) bound.
pub fn perturbation_experiment(
    params: &VelocityFieldParams,
    x0: &Vector,
    n_steps: usize,
    base_grad: &Vector,
    noise_scales: &[f64],
    rng: &mut RngState,
) -> Result<PerturbationTable> {
    let chain = build_jacobian_chain(params, x0, n_steps)?;
    let kappa = chain.kappa();
    let m_t = chain.cumulative.transpose();
    let g0 = m_t.matvec(base_grad)?;
    let g0_norm = g0.norm();
    let base_norm = base_grad.norm();
    if g0_norm == 0.0 || base_norm == 0.0 {
        return Err(Error::Degenerate("base gradient pulls back to zero".into()));
    }

    let mut rows = Vec::with_capacity(noise_scales.len());
    for &scale in noise_scales {
        let (xi, xi_norm) = if scale == 0.0 {
            (Vector::zeros(base_grad.dim()), 0.0)
        } else {
            let dir = crate::numerics::sample_standard_normal(rng, base_grad.dim());
            let dn = dir.norm();
            (dir.scale(scale / dn), scale)
        };
        let delta = m_t.matvec(&xi)?;
        let relative_error = delta.norm() / g0_norm;
        let bound = kappa * xi_norm / base_norm;
        rows.push(PerturbationRow {
            noise_scale: scale,
            relative_error,
            bound,
            violated: relative_error > bound * (1.0 + 1e-12),
        });
    }
    Ok(PerturbationTable { kappa, rows })
}

/// Directions that make the perturbation bound tight: ξ along the top left
/// singular vector of M_N (maximal amplification) and u along the bottom one
/// (minimal pullback).
pub fn worst_case_directions(chain: &JacobianChain) -> Result<(Vector, Vector)> {
    let (sigma, u_mat, _) = svd(&chain.cumulative)?;
    let d = chain.cumulative.rows();
    let last = sigma.dim() - 1;
    let xi = Vector::new((0..d).map(|r| u_mat[(r, 0)]).collect());
    let u = Vector::new((0..d).map(|r| u_mat[(r, last)]).collect());
    Ok((xi, u))
}

/// Exact evaluation/memory counters read back from an instrumented solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComplexityProbe {
    pub peak_tapes: usize,
    pub evals_forward: usize,
    pub evals_backward: usize,
}

pub fn complexity_probe(run: &SolveResult) -> ComplexityProbe {
    ComplexityProbe {
        peak_tapes: run.counters.peak_tapes,
        evals_forward: run.counters.forward_evals,
        evals_backward: run.counters.backward_evals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::LinearOperator;
    use crate::numerics::sample_standard_normal;

    #[test]
    fn zero_field_chain_is_identity() {
        let p = VelocityFieldParams::zero(3, 1);
        let chain = build_jacobian_chain(&p, &Vector::zeros(3), 5).unwrap();
        for k in &chain.prefix_condition_numbers {
            assert!((k - 1.0).abs() < 1e-12);
        }
        for f in &chain.step_factors {
            assert_eq!(f, &Matrix::identity(3));
        }
    }

    #[test]
    fn constant_diagonal_jacobian_closed_form() {
        // J = diag(a, -a) constant: kappa(M_N) = ((1+a*dt)/(1-a*dt))^N
        let a = 0.8;
        let field = Matrix::diag(&[a, -a]);
        let p = VelocityFieldParams::linear(&field).unwrap();
        let n = 6;
        let chain = build_jacobian_chain(&p, &Vector::new(vec![0.3, -0.2]), n).unwrap();
        let dt = 1.0 / n as f64;
        let expect = ((1.0 + a * dt) / (1.0 - a * dt)).powi(n as i32);
        let got = chain.kappa();
        assert!((got - expect).abs() <= 1e-9 * expect, "{got} vs {expect}");
    }

    #[test]
    fn chain_product_matches_reverse_accumulation() {
        let mut rng = RngState::new(900);
        let p = VelocityFieldParams::init(4, &[10, 10], 2, &mut rng);
        let x0 = sample_standard_normal(&mut rng, 4);
        let n = 5;
        let chain = build_jacobian_chain(&p, &x0, n).unwrap();
        for _ in 0..5 {
            let u = sample_standard_normal(&mut rng, 4);
            let via_chain = chain.cumulative.matvec_transposed(&u).unwrap();
            let via_reverse = reverse_accumulated_pullback(&p, &x0, n, &u).unwrap();
            for i in 0..4 {
                assert!(
                    (via_chain[i] - via_reverse[i]).abs() <= 1e-8,
                    "coord {i}: {} vs {}",
                    via_chain[i],
                    via_reverse[i]
                );
            }
        }
    }

    #[test]
    fn anisotropy_zero_eps_flat() {
        let mut rng = RngState::new(901);
        let rows = anisotropy_growth_experiment(&[0.0], &[1, 5, 10], &mut rng).unwrap();
        for row in rows {
            assert_eq!(row.kappa_aligned, 1.0);
            assert_eq!(row.growth_floor, 1.0);
        }
    }

    #[test]
    fn anisotropy_aligned_exact_and_misaligned_bounded() {
        let mut rng = RngState::new(902);
        let rows = anisotropy_growth_experiment(&[0.2], &[10], &mut rng).unwrap();
        let row = rows[0];
        assert!((row.kappa_aligned - 1.5_f64.powi(10)).abs() <= 1e-9 * row.kappa_aligned);
        assert!(row.kappa_aligned >= row.growth_floor - 1e-9);
        assert!(row.kappa_misaligned <= row.kappa_product * (1.0 + 1e-9));
    }

    #[test]
    fn alignment_identity_flow_is_perfect() {
        // zero field: M_N = I, so cos = 1 and alpha = 1 at every probe
        let p = VelocityFieldParams::zero(2, 1);
        let obs = Observation {
            y: Vector::new(vec![0.5, -0.5]),
            operator: LinearOperator::identity(2, 0.0),
            ground_truth: None,
        };
        let mut cfg = SolverConfig::new(2);
        cfg.iterations = 10;
        cfg.ode_steps = 4;
        cfg.step_size = 0.1;
        cfg.projection_enabled = false;
        let sweep = alignment_sweep(&p, &obs, &cfg, 5).unwrap();
        assert!(!sweep.records.is_empty());
        for r in &sweep.records {
            assert!((r.cosine - 1.0).abs() < 1e-12);
            assert!((r.alpha_hat - 1.0).abs() < 1e-12);
        }
        assert_eq!(sweep.fraction_positive(), 1.0);
    }

    #[test]
    fn alignment_flags_constructed_negative_case() {
        // linear field A = -2N·I at N=1 gives M_N = -I exactly
        let a = Matrix::diag(&[-2.0, -2.0]);
        let p = VelocityFieldParams::linear(&a).unwrap();
        let obs = Observation {
            y: Vector::new(vec![1.0, 2.0]),
            operator: LinearOperator::identity(2, 0.0),
            ground_truth: None,
        };
        let mut cfg = SolverConfig::new(2);
        cfg.iterations = 3;
        cfg.ode_steps = 1;
        cfg.step_size = 0.01;
        cfg.projection_enabled = false;
        let sweep = alignment_sweep(&p, &obs, &cfg, 3).unwrap();
        for r in &sweep.records {
            assert!((r.cosine + 1.0).abs() < 1e-12);
            assert!(r.alpha_hat < 0.0);
        }
        assert_eq!(sweep.fraction_positive(), 0.0);
    }

    #[test]
    fn perturbation_zero_noise_zero_error() {
        let mut rng = RngState::new(903);
        let p = VelocityFieldParams::init(3, &[8], 1, &mut rng);
        let x0 = sample_standard_normal(&mut rng, 3);
        let u = sample_standard_normal(&mut rng, 3);
        let table =
            perturbation_experiment(&p, &x0, 4, &u, &[0.0, 0.1], &mut rng).unwrap();
        assert_eq!(table.rows[0].relative_error, 0.0);
        assert!(!table.rows[0].violated);
        assert!(!table.rows[1].violated);
    }

    #[test]
    fn perturbation_identity_flow_exact_ratio() {
        let p = VelocityFieldParams::zero(3, 1);
        let mut rng = RngState::new(904);
        let u = sample_standard_normal(&mut rng, 3);
        let table = perturbation_experiment(&p, &Vector::zeros(3), 3, &u, &[0.25], &mut rng).unwrap();
        // M = I: relative error is exactly ||xi|| / ||u||
        let want = 0.25 / u.norm();
        assert!((table.rows[0].relative_error - want).abs() <= 1e-12);
        assert!((table.kappa - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn perturbation_bound_tight_for_svd_aligned_noise() {
        let mut rng = RngState::new(905);
        let p = VelocityFieldParams::init(4, &[10], 2, &mut rng);
        let x0 = sample_standard_normal(&mut rng, 4);
        let n = 5;
        let chain = build_jacobian_chain(&p, &x0, n).unwrap();
        let (xi_dir, u_dir) = worst_case_directions(&chain).unwrap();

        let m_t = chain.cumulative.transpose();
        let scale = 0.01;
        let xi = xi_dir.scale(scale);
        let g0 = m_t.matvec(&u_dir).unwrap();
        let delta = m_t.matvec(&xi).unwrap();
        let rel = delta.norm() / g0.norm();
        let bound = chain.kappa() * xi.norm() / u_dir.norm();
        assert!(rel <= bound * (1.0 + 1e-9));
        assert!((rel - bound).abs() <= 1e-6 * bound, "rel {rel} vs bound {bound}");
    }
}
