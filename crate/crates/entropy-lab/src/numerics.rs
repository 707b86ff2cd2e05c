//! Minimal dense-network engine.
//!
//! Everything the agents and the update-rule verifier need: a feed-forward
//! pass, the full per-output Jacobian `∇Z(s)` (one row per network output,
//! one column per trainable weight), softmax with max-subtraction, plain SGD
//! steps, and a central finite-difference Jacobian used only as a test oracle.
//!
//! All arithmetic is `f64`; the verifier thresholds sit well below `1e-8` and
//! need the headroom.
//!
//! # Parameter layout
//!
//! Parameters are a single flat vector, layer-major. For layer `l` mapping
//! `in_l -> out_l` the weight matrix is stored row-major (`out_l x in_l`,
//! row = output unit), followed by `out_l` biases when the network has hidden
//! layers. Networks with no hidden layer are plain bias-free linear maps
//! `Z(s) = W x s`, so for those the flat vector is exactly `W` row-major.

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NumericsError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("action index {action} out of range for {count} outputs")]
    ActionOutOfRange { action: usize, count: usize },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("step size must be positive and finite, got {0}")]
    InvalidStepSize(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative at the pre-activation `x`. ReLU takes the left limit 0 at 0.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Architecture of a feed-forward network. `hidden` may be empty, in which
/// case the network is a bias-free linear map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn linear(input_dim: usize, output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden: Vec::new(),
            output_dim,
            activation: Activation::Identity,
        }
    }

    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize, activation: Activation) -> Self {
        MlpSpec {
            input_dim,
            hidden,
            output_dim,
            activation,
        }
    }

    pub fn validate(&self) -> Result<(), NumericsError> {
        if self.input_dim == 0 {
            return Err(NumericsError::InvalidSpec("input_dim must be >= 1".into()));
        }
        if self.output_dim == 0 {
            return Err(NumericsError::InvalidSpec("output_dim must be >= 1".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(NumericsError::InvalidSpec("hidden sizes must be >= 1".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 1);
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            dims.push((prev, h));
            prev = h;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    /// Hidden networks carry biases on every layer; the linear case is
    /// bias-free.
    pub fn has_biases(&self) -> bool {
        !self.hidden.is_empty()
    }

    /// Total number of trainable weights `M`.
    pub fn param_count(&self) -> usize {
        let bias = self.has_biases() as usize;
        self.layer_dims()
            .iter()
            .map(|&(i, o)| i * o + bias * o)
            .sum()
    }
}

/// Flat parameter vector together with the spec that interprets it.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    spec: MlpSpec,
    theta: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(spec: MlpSpec) -> Result<Self, NumericsError> {
        spec.validate()?;
        let theta = vec![0.0; spec.param_count()];
        Ok(NetworkParams { spec, theta })
    }

    /// Uniform init in `[-1/sqrt(fan_in), +1/sqrt(fan_in)]` per layer, for
    /// weights and biases alike.
    pub fn init(spec: MlpSpec, rng: &mut impl rand::Rng) -> Result<Self, NumericsError> {
        spec.validate()?;
        let mut theta = Vec::with_capacity(spec.param_count());
        let bias = spec.has_biases();
        for (fan_in, fan_out) in spec.layer_dims() {
            let limit = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                theta.push(rng.gen_range(-limit..=limit));
            }
            if bias {
                for _ in 0..fan_out {
                    theta.push(rng.gen_range(-limit..=limit));
                }
            }
        }
        Ok(NetworkParams { spec, theta })
    }

    pub fn from_theta(spec: MlpSpec, theta: Vec<f64>) -> Result<Self, NumericsError> {
        spec.validate()?;
        if theta.len() != spec.param_count() {
            return Err(NumericsError::DimensionMismatch {
                what: "theta",
                expected: spec.param_count(),
                got: theta.len(),
            });
        }
        if !theta.iter().all(|x| x.is_finite()) {
            return Err(NumericsError::NonFinite { what: "theta" });
        }
        Ok(NetworkParams { spec, theta })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    /// Flat offset of the weight block of layer `layer` (layers counted from
    /// the input).
    pub fn layer_offset(&self, layer: usize) -> usize {
        let bias = self.spec.has_biases() as usize;
        self.spec
            .layer_dims()
            .iter()
            .take(layer)
            .map(|&(i, o)| i * o + bias * o)
            .sum()
    }

    /// Weight row `row` of layer `layer` (the incoming weights of one unit).
    pub fn weight_row(&self, layer: usize, row: usize) -> &[f64] {
        let (fan_in, _) = self.spec.layer_dims()[layer];
        let start = self.layer_offset(layer) + row * fan_in;
        &self.theta[start..start + fan_in]
    }
}

/// The `K x M` matrix `∇Z(s)`: row `k` is the gradient of output `z_k(s)`
/// with respect to the flat parameter vector.
#[derive(Debug, Clone)]
pub struct OutputJacobian {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    state: Vec<f64>,
}

impl OutputJacobian {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.cols..(k + 1) * self.cols]
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn entry(&self, k: usize, m: usize) -> f64 {
        self.data[k * self.cols + m]
    }

    /// `coeffs^T x J`: combines rows into a length-`M` vector.
    pub fn combine_rows(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (k, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (o, &j) in out.iter_mut().zip(self.row(k)) {
                *o += c * j;
            }
        }
        out
    }

    /// `J x delta`: the first-order output change for a parameter change.
    pub fn apply(&self, delta: &[f64]) -> Vec<f64> {
        assert_eq!(delta.len(), self.cols);
        (0..self.rows)
            .map(|k| dot(self.row(k), delta))
            .collect()
    }

    pub fn max_abs_diff(&self, other: &OutputJacobian) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn frobenius_distance(&self, other: &OutputJacobian) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct ForwardTrace {
    /// Pre-activations per layer (output layer last, raw).
    pre: Vec<Vec<f64>>,
    /// Input followed by each layer's post-activation values.
    post: Vec<Vec<f64>>,
}

fn forward_trace(params: &NetworkParams, state: &[f64]) -> Result<ForwardTrace, NumericsError> {
    let spec = params.spec();
    if state.len() != spec.input_dim {
        return Err(NumericsError::DimensionMismatch {
            what: "state",
            expected: spec.input_dim,
            got: state.len(),
        });
    }
    let dims = spec.layer_dims();
    let bias = spec.has_biases();
    let mut pre = Vec::with_capacity(dims.len());
    let mut post = Vec::with_capacity(dims.len() + 1);
    post.push(state.to_vec());

    let mut offset = 0usize;
    for (l, &(fan_in, fan_out)) in dims.iter().enumerate() {
        let x = &post[l];
        let mut z = vec![0.0; fan_out];
        for (j, zj) in z.iter_mut().enumerate() {
            let row = &params.theta[offset + j * fan_in..offset + (j + 1) * fan_in];
            *zj = dot(row, x);
        }
        offset += fan_in * fan_out;
        if bias {
            for (j, zj) in z.iter_mut().enumerate() {
                *zj += params.theta[offset + j];
            }
            offset += fan_out;
        }
        let is_output = l == dims.len() - 1;
        let a = if is_output {
            z.clone()
        } else {
            z.iter().map(|&v| spec.activation.apply(v)).collect()
        };
        pre.push(z);
        post.push(a);
    }
    Ok(ForwardTrace { pre, post })
}

/// Network outputs `Z(s)`. Pure; the output layer carries no activation, so
/// an empty-hidden spec is exactly the matrix-vector product `W x s`.
pub fn forward(params: &NetworkParams, state: &[f64]) -> Result<Vec<f64>, NumericsError> {
    let trace = forward_trace(params, state)?;
    Ok(trace.post.last().unwrap().clone())
}

/// Shared backward pass: propagates `seeds` (one row per requested output
/// direction) from the outputs down to every parameter.
fn backward(params: &NetworkParams, trace: &ForwardTrace, seeds: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let spec = params.spec();
    let dims = spec.layer_dims();
    let bias = spec.has_biases();
    let n_rows = seeds.len();
    let m = params.param_count();
    let mut grads = vec![vec![0.0; m]; n_rows];

    // `g[r]` holds d(direction r)/d(pre-activation of the current layer).
    let mut g: Vec<Vec<f64>> = seeds.to_vec();
    for l in (0..dims.len()).rev() {
        let (fan_in, fan_out) = dims[l];
        let offset = params.layer_offset(l);
        let input = &trace.post[l];
        for r in 0..n_rows {
            let gr = &g[r];
            let grad = &mut grads[r];
            for j in 0..fan_out {
                let gj = gr[j];
                if gj != 0.0 {
                    let base = offset + j * fan_in;
                    for (i, &xi) in input.iter().enumerate() {
                        grad[base + i] += gj * xi;
                    }
                }
            }
            if bias {
                let base = offset + fan_in * fan_out;
                for j in 0..fan_out {
                    grad[base + j] += gr[j];
                }
            }
        }
        if l == 0 {
            break;
        }
        // Pull the signal through W_l and the activation of layer l-1.
        let mut next: Vec<Vec<f64>> = vec![vec![0.0; fan_in]; n_rows];
        for (r, gr) in g.iter().enumerate() {
            let nr = &mut next[r];
            for j in 0..fan_out {
                let gj = gr[j];
                if gj != 0.0 {
                    let row = &params.theta[offset + j * fan_in..offset + (j + 1) * fan_in];
                    for (i, &w) in row.iter().enumerate() {
                        nr[i] += gj * w;
                    }
                }
            }
            let pre_prev = &trace.pre[l - 1];
            for (i, v) in nr.iter_mut().enumerate() {
                *v *= spec.activation.derivative(pre_prev[i]);
            }
        }
        g = next;
    }
    grads
}

/// The full `K x M` Jacobian `∇Z(s)` by reverse accumulation, one output row
/// at a time. For a linear network row `k` contains `s` in the positions of
/// weight row `k` and zeros elsewhere.
pub fn output_jacobian(params: &NetworkParams, state: &[f64]) -> Result<OutputJacobian, NumericsError> {
    let trace = forward_trace(params, state)?;
    let k = params.spec().output_dim;
    let seeds: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut e = vec![0.0; k];
            e[i] = 1.0;
            e
        })
        .collect();
    let rows = backward(params, &trace, &seeds);
    let cols = params.param_count();
    let mut data = Vec::with_capacity(k * cols);
    for row in rows {
        data.extend_from_slice(&row);
    }
    Ok(OutputJacobian {
        rows: k,
        cols,
        data,
        state: state.to_vec(),
    })
}

/// Vector-Jacobian product `coeffs^T x ∇Z(s)` in a single backward pass.
/// This is what the agents use per interaction; it avoids materializing the
/// full Jacobian.
pub fn vjp(params: &NetworkParams, state: &[f64], coeffs: &[f64]) -> Result<Vec<f64>, NumericsError> {
    let spec = params.spec();
    if coeffs.len() != spec.output_dim {
        return Err(NumericsError::DimensionMismatch {
            what: "output coefficients",
            expected: spec.output_dim,
            got: coeffs.len(),
        });
    }
    let trace = forward_trace(params, state)?;
    let mut rows = backward(params, &trace, std::slice::from_ref(&coeffs.to_vec()));
    Ok(rows.pop().unwrap())
}

/// Softmax with max-subtraction; arbitrarily large inputs do not overflow and
/// the argmax is preserved.
pub fn softmax(z: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if z.is_empty() {
        return Err(NumericsError::InvalidSpec("softmax of empty vector".into()));
    }
    if !z.iter().all(|x| x.is_finite()) {
        return Err(NumericsError::NonFinite { what: "softmax input" });
    }
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// `∇π(a|s) = π(a|s) [1(a=k) - π(k|s)]_k x ∇Z(s)` as a flat `M`-vector.
pub fn policy_gradient(params: &NetworkParams, state: &[f64], action: usize) -> Result<Vec<f64>, NumericsError> {
    let k = params.spec().output_dim;
    if action >= k {
        return Err(NumericsError::ActionOutOfRange { action, count: k });
    }
    let z = forward(params, state)?;
    let pi = softmax(&z)?;
    let coeffs: Vec<f64> = (0..k)
        .map(|i| pi[action] * (((i == action) as u8 as f64) - pi[i]))
        .collect();
    vjp(params, state, &coeffs)
}

/// Pure SGD update `theta' = theta - lr * grad`; the input is left untouched.
pub fn sgd_step(params: &NetworkParams, grad: &[f64], lr: f64) -> Result<NetworkParams, NumericsError> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(NumericsError::InvalidStepSize(lr));
    }
    if grad.len() != params.param_count() {
        return Err(NumericsError::DimensionMismatch {
            what: "gradient",
            expected: params.param_count(),
            got: grad.len(),
        });
    }
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(NumericsError::NonFinite { what: "gradient" });
    }
    let theta: Vec<f64> = params
        .theta
        .iter()
        .zip(grad)
        .map(|(t, g)| t - lr * g)
        .collect();
    if !theta.iter().all(|t| t.is_finite()) {
        return Err(NumericsError::NonFinite { what: "updated theta" });
    }
    Ok(NetworkParams {
        spec: params.spec.clone(),
        theta,
    })
}

/// Central finite-difference Jacobian, `(Z(theta + h e_i) - Z(theta - h e_i)) / 2h`
/// per coordinate. Test oracle only; quadratic in the network size.
pub fn finite_difference_jacobian(
    params: &NetworkParams,
    state: &[f64],
    h: f64,
) -> Result<OutputJacobian, NumericsError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(NumericsError::InvalidStepSize(h));
    }
    let k = params.spec().output_dim;
    let m = params.param_count();
    let mut data = vec![0.0; k * m];
    let mut theta = params.theta.clone();
    for i in 0..m {
        let orig = theta[i];
        theta[i] = orig + h;
        let plus = forward(
            &NetworkParams {
                spec: params.spec.clone(),
                theta: theta.clone(),
            },
            state,
        )?;
        theta[i] = orig - h;
        let minus = forward(
            &NetworkParams {
                spec: params.spec.clone(),
                theta: theta.clone(),
            },
            state,
        )?;
        theta[i] = orig;
        for kk in 0..k {
            data[kk * m + i] = (plus[kk] - minus[kk]) / (2.0 * h);
        }
    }
    Ok(OutputJacobian {
        rows: k,
        cols: m,
        data,
        state: state.to_vec(),
    })
}

/// Central finite differences of a scalar function of the parameters.
/// Test oracle for the agents' loss gradients.
pub fn finite_difference_scalar<F>(
    params: &NetworkParams,
    h: f64,
    mut f: F,
) -> Result<Vec<f64>, NumericsError>
where
    F: FnMut(&NetworkParams) -> Result<f64, NumericsError>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(NumericsError::InvalidStepSize(h));
    }
    let m = params.param_count();
    let mut grad = vec![0.0; m];
    let mut theta = params.theta.clone();
    for i in 0..m {
        let orig = theta[i];
        theta[i] = orig + h;
        let plus = f(&NetworkParams {
            spec: params.spec.clone(),
            theta: theta.clone(),
        })?;
        theta[i] = orig - h;
        let minus = f(&NetworkParams {
            spec: params.spec.clone(),
            theta: theta.clone(),
        })?;
        theta[i] = orig;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    Ok(grad)
}
