//! The parameterized velocity field: a small MLP with exact reverse-mode
//! gradients.
//!
//! The field maps `(x, t)` to a velocity in the same space as `x`. Time
//! enters by concatenation: the input layer sees `[x; sin(2πkt), cos(2πkt)
//! for k = 1..F; t]`. Hidden layers use tanh, the output layer is linear.
//! Smoothness matters here: every Jacobian-based diagnostic downstream
//! assumes the field is differentiable everywhere.

use crate::error::{Error, Result};
use crate::numerics::{spectral_norm, Matrix, RngState, Vector};

/// Activation applied to hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    /// tanh; derivative bounded by 1, which the Lipschitz bound relies on.
    SmoothTanh,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::SmoothTanh => 0,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::SmoothTanh),
            other => Err(Error::Config(format!("unknown activation tag {other}"))),
        }
    }
}

/// All weights and biases of the velocity network plus architecture metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityFieldParams {
    /// Full dimension chain: input (d + time features), hiddens, output (d).
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
    /// Number of sinusoidal frequencies F; the time embedding has 2F+1 entries.
    pub time_features: usize,
    pub activation: Activation,
}

impl VelocityFieldParams {
    /// Random initialization: per-layer uniform in ±sqrt(6/(fan_in+fan_out)),
    /// zero biases.
    pub fn init(data_dim: usize, hidden: &[usize], time_features: usize, rng: &mut RngState) -> Self {
        let input_dim = data_dim + 2 * time_features + 1;
        let mut layer_dims = Vec::with_capacity(hidden.len() + 2);
        layer_dims.push(input_dim);
        layer_dims.extend_from_slice(hidden);
        layer_dims.push(data_dim);

        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(Matrix::from_fn(fan_out, fan_in, |_, _| {
                rng.next_range(-bound, bound)
            }));
            biases.push(Vector::zeros(fan_out));
        }
        VelocityFieldParams {
            layer_dims,
            weights,
            biases,
            time_features,
            activation: Activation::SmoothTanh,
        }
    }

    /// Default architecture: 3 hidden layers of width 128, 4 time frequencies.
    pub fn init_default(data_dim: usize, rng: &mut RngState) -> Self {
        Self::init(data_dim, &[128, 128, 128], 4, rng)
    }

    /// All-zero single-layer network: v ≡ 0.
    pub fn zero(data_dim: usize, time_features: usize) -> Self {
        let input_dim = data_dim + 2 * time_features + 1;
        VelocityFieldParams {
            layer_dims: vec![input_dim, data_dim],
            weights: vec![Matrix::zeros(data_dim, input_dim)],
            biases: vec![Vector::zeros(data_dim)],
            time_features,
            activation: Activation::SmoothTanh,
        }
    }

    /// Constant field v ≡ c for every (x, t).
    pub fn constant(c: &Vector, time_features: usize) -> Self {
        let mut p = Self::zero(c.dim(), time_features);
        p.biases[0] = c.clone();
        p
    }

    /// Exact linear field v = A·x, time-independent. The single layer has
    /// the x-block set to A and the time block zeroed, so the network output
    /// and Jacobian are A·x and A with no approximation.
    pub fn linear(a: &Matrix) -> Result<Self> {
        if a.rows() != a.cols() {
            return Err(Error::Contract("linear field matrix must be square".into()));
        }
        let d = a.rows();
        let mut p = Self::zero(d, 0);
        for r in 0..d {
            for c in 0..d {
                p.weights[0][(r, c)] = a[(r, c)];
            }
        }
        Ok(p)
    }

    pub fn data_dim(&self) -> usize {
        *self.layer_dims.last().expect("at least one layer")
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.rows() * w.cols()).sum::<usize>()
            + self.biases.iter().map(|b| b.dim()).sum::<usize>()
    }

    /// Time embedding: [sin(2πkt), cos(2πkt) for k = 1..F, then raw t].
    pub fn time_embedding(&self, t: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.time_features + 1);
        for k in 1..=self.time_features {
            let phase = 2.0 * std::f64::consts::PI * k as f64 * t;
            out.push(phase.sin());
            out.push(phase.cos());
        }
        out.push(t);
        out
    }

    /// Canonical flattening: all weights row-major in layer order, then all
    /// biases in layer order. Gradients, Adam state, and checkpoints all use
    /// this layout.
    pub fn to_flat(&self) -> Vector {
        let mut flat = Vec::with_capacity(self.n_params());
        for w in &self.weights {
            flat.extend_from_slice(w.as_slice());
        }
        for b in &self.biases {
            flat.extend_from_slice(b.as_slice());
        }
        Vector::new(flat)
    }

    /// Inverse of [`to_flat`]; the architecture metadata stays as-is.
    pub fn set_from_flat(&mut self, flat: &Vector) -> Result<()> {
        if flat.dim() != self.n_params() {
            return Err(Error::Contract(format!(
                "flat parameter vector has {} entries, network needs {}",
                flat.dim(),
                self.n_params()
            )));
        }
        let mut off = 0;
        let src = flat.as_slice();
        for w in &mut self.weights {
            let (rows, cols) = (w.rows(), w.cols());
            let mut m = Matrix::zeros(rows, cols);
            for r in 0..rows {
                for c in 0..cols {
                    m[(r, c)] = src[off + r * cols + c];
                }
            }
            off += rows * cols;
            *w = m;
        }
        for b in &mut self.biases {
            for i in 0..b.dim() {
                b[i] = src[off + i];
            }
            off += b.dim();
        }
        Ok(())
    }

    /// Certified upper bound on ‖∂v/∂x‖₂ over all inputs: the product of the
    /// spectral norms of the weight x-blocks (first layer restricted to the x
    /// columns), using that the tanh derivative never exceeds 1.
    pub fn lipschitz_upper_bound(&self) -> Result<f64> {
        let d = self.data_dim();
        let mut bound = 1.0;
        for (l, w) in self.weights.iter().enumerate() {
            let block = if l == 0 {
                Matrix::from_fn(w.rows(), d, |r, c| w[(r, c)])
            } else {
                w.clone()
            };
            bound *= spectral_norm(&block)?;
        }
        Ok(bound)
    }
}

/// Per-layer inputs cached during a forward pass; everything the backward
/// pass needs to reproduce exact gradients.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    /// Input to each weight layer: activations[0] is the embedded network
    /// input, activations[l] the post-tanh output feeding layer l.
    activations: Vec<Vector>,
    output: Vector,
}

impl ForwardTape {
    pub fn output(&self) -> &Vector {
        &self.output
    }

    pub fn n_layers(&self) -> usize {
        self.activations.len()
    }
}

/// Evaluate v(x, t), caching layer inputs on the tape.
pub fn field_forward(
    params: &VelocityFieldParams,
    x: &Vector,
    t: f64,
) -> Result<(Vector, ForwardTape)> {
    let d = params.data_dim();
    if x.dim() != d {
        return Err(Error::Contract(format!(
            "field_forward: expected {}-vector, got {}",
            d,
            x.dim()
        )));
    }
    let mut input = Vec::with_capacity(params.input_dim());
    input.extend_from_slice(x.as_slice());
    input.extend_from_slice(&params.time_embedding(t));
    let mut act = Vector::new(input);

    let n = params.n_layers();
    let mut activations = Vec::with_capacity(n);
    for l in 0..n {
        activations.push(act.clone());
        let mut z = params.weights[l].matvec(&act)?;
        for i in 0..z.dim() {
            z[i] += params.biases[l][i];
        }
        if !z.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite pre-activation in layer {l}"
            )));
        }
        if l + 1 < n {
            for i in 0..z.dim() {
                z[i] = z[i].tanh();
            }
        }
        act = z;
    }
    let tape = ForwardTape { activations, output: act.clone() };
    Ok((act, tape))
}

/// Reverse-mode pullback through one forward pass.
///
/// Returns the input-space gradient `(∂v/∂x)ᵀ·cotangent` and the parameter
/// gradient of `⟨cotangent, v⟩` in the canonical flat layout.
pub fn field_vjp(
    params: &VelocityFieldParams,
    tape: &ForwardTape,
    cotangent: &Vector,
) -> Result<(Vector, Vector)> {
    vjp_impl(params, tape, cotangent, true)
}

/// Input-space pullback only; skips the parameter gradient allocation. This
/// is the hot path of the full-backprop baseline.
pub fn field_vjp_input(
    params: &VelocityFieldParams,
    tape: &ForwardTape,
    cotangent: &Vector,
) -> Result<Vector> {
    Ok(vjp_impl(params, tape, cotangent, false)?.0)
}

fn vjp_impl(
    params: &VelocityFieldParams,
    tape: &ForwardTape,
    cotangent: &Vector,
    want_params: bool,
) -> Result<(Vector, Vector)> {
    let n = params.n_layers();
    let d = params.data_dim();
    if tape.activations.len() != n {
        return Err(Error::Contract(format!(
            "tape has {} layers, params have {}",
            tape.activations.len(),
            n
        )));
    }
    if cotangent.dim() != d {
        return Err(Error::Contract(format!(
            "cotangent has dim {}, output has dim {}",
            cotangent.dim(),
            d
        )));
    }
    for (l, a) in tape.activations.iter().enumerate() {
        if a.dim() != params.layer_dims[l] {
            return Err(Error::Contract(format!(
                "tape activation {l} has dim {}, expected {}",
                a.dim(),
                params.layer_dims[l]
            )));
        }
    }

    let mut grad_w: Vec<Matrix> = Vec::new();
    let mut grad_b: Vec<Vector> = Vec::new();
    if want_params {
        grad_w = params
            .weights
            .iter()
            .map(|w| Matrix::zeros(w.rows(), w.cols()))
            .collect();
        grad_b = params.biases.iter().map(|b| Vector::zeros(b.dim())).collect();
    }

    let mut delta = cotangent.clone();
    for l in (0..n).rev() {
        let a_in = &tape.activations[l];
        if want_params {
            let gw = &mut grad_w[l];
            for r in 0..gw.rows() {
                let dr = delta[r];
                if dr != 0.0 {
                    for c in 0..gw.cols() {
                        gw[(r, c)] += dr * a_in[c];
                    }
                }
            }
            for r in 0..delta.dim() {
                grad_b[l][r] += delta[r];
            }
        }
        let back = params.weights[l].matvec_transposed(&delta)?;
        if l > 0 {
            // a_in here is tanh(z_l); tanh'(z) = 1 - tanh(z)^2.
            let mut next = back;
            for i in 0..next.dim() {
                next[i] *= 1.0 - a_in[i] * a_in[i];
            }
            delta = next;
        } else {
            delta = back;
        }
    }

    let grad_x = Vector::new(delta.as_slice()[..d].to_vec());
    let grad_params = if want_params {
        let mut flat = Vec::with_capacity(params.n_params());
        for g in &grad_w {
            flat.extend_from_slice(g.as_slice());
        }
        for g in &grad_b {
            flat.extend_from_slice(g.as_slice());
        }
        Vector::new(flat)
    } else {
        Vector::zeros(0)
    };
    Ok((grad_x, grad_params))
}

/// Maximum data dimension for dense Jacobians.
pub const MAX_DENSE_JACOBIAN_DIM: usize = 64;

/// Dense ∂v/∂x at (x, t): row k is the pullback of the unit cotangent e_k.
pub fn field_jacobian(params: &VelocityFieldParams, x: &Vector, t: f64) -> Result<Matrix> {
    let d = params.data_dim();
    if d > MAX_DENSE_JACOBIAN_DIM {
        return Err(Error::Capability(format!(
            "dense Jacobians are limited to d <= {MAX_DENSE_JACOBIAN_DIM} (got {d}); use the vjp paths instead"
        )));
    }
    let (_, tape) = field_forward(params, x, t)?;
    let mut jac = Matrix::zeros(d, d);
    for k in 0..d {
        let mut e = Vector::zeros(d);
        e[k] = 1.0;
        let row = field_vjp_input(params, &tape, &e)?;
        for c in 0..d {
            jac[(k, c)] = row[c];
        }
    }
    Ok(jac)
}
