//! Small fully connected networks with exact backpropagation and Adam.
//!
//! Parameters live in one flat vector, layer-major, with each layer's
//! weights (row-major, `fan_out x fan_in`) stored before its biases. This
//! keeps genomes exchangeable as opaque vectors between grid cells.
//!
//! Hidden layers always use `tanh`; the output activation is chosen per
//! network (sigmoid for discriminators so outputs lie in `(0, 1)`).

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                // exp is much cheaper than libm tanh; absolute error stays near 1e-16
                let t = 1.0 - 2.0 / ((2.0 * x.abs()).exp() + 1.0);
                t.copysign(x)
            }
            Activation::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    fn derivative_at_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::Parse(format!("unknown activation `{other}`"))),
        }
    }
}

/// Topology of a multilayer perceptron.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
    output_activation: Activation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, output_activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least an input and an output layer, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidSpec(format!(
                "layer sizes must be positive, got {layer_sizes:?}"
            )));
        }
        Ok(Self {
            layer_sizes,
            output_activation,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated non-empty")
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output_activation
        } else {
            Activation::Tanh
        }
    }

    /// `(fan_in, fan_out, offset)` for every layer.
    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.layer_sizes.windows(2).map(move |w| {
            let start = offset;
            offset += (w[0] + 1) * w[1];
            (w[0], w[1], start)
        })
    }
}

/// Flat network parameters.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Row-major matrix of samples, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Batch {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} batch needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has width {}, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero width
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Values of column `c`, one per row.
    pub fn column(&self, c: usize) -> Vec<f64> {
        self.iter_rows().map(|r| r[c]).collect()
    }

    /// Stacks batches with equal width on top of each other.
    pub fn concat(parts: &[Batch]) -> Result<Batch> {
        let cols = parts.first().map(|b| b.cols).unwrap_or(0);
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(Error::Shape(format!(
                    "cannot stack width {} onto width {cols}",
                    p.cols
                )));
            }
            rows += p.rows;
            data.extend_from_slice(&p.data);
        }
        Ok(Batch { rows, cols, data })
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> ParamVector {
    let mut values = vec![0.0; spec.param_count()];
    for (fan_in, fan_out, offset) in spec.layers() {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite positive bound");
        for w in &mut values[offset..offset + fan_in * fan_out] {
            *w = dist.sample(rng);
        }
    }
    ParamVector { values }
}

fn check_params(spec: &MlpSpec, params: &ParamVector) -> Result<()> {
    if params.len() != spec.param_count() {
        return Err(Error::Shape(format!(
            "parameter vector has {} entries, spec needs {}",
            params.len(),
            spec.param_count()
        )));
    }
    Ok(())
}

fn check_inputs(spec: &MlpSpec, inputs: &Batch) -> Result<()> {
    if inputs.cols != spec.input_dim() {
        return Err(Error::Shape(format!(
            "input width {} does not match network input {}",
            inputs.cols,
            spec.input_dim()
        )));
    }
    Ok(())
}

/// Dot product with four independent accumulators.
fn dot(w: &[f64], a: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (wc, ac) = (w.chunks_exact(4), a.chunks_exact(4));
    let tail: f64 = wc.remainder().iter().zip(ac.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in wc.zip(ac) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Post-activation outputs of every layer, input included.
fn forward_trace(spec: &MlpSpec, params: &ParamVector, inputs: &Batch) -> Vec<Vec<f64>> {
    let n = inputs.rows;
    let mut trace = Vec::with_capacity(spec.num_layers() + 1);
    trace.push(inputs.data.clone());
    for (layer, (fan_in, fan_out, offset)) in spec.layers().enumerate() {
        let act = spec.activation_of(layer);
        let weights = &params.values[offset..offset + fan_in * fan_out];
        let biases = &params.values[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
        let prev = trace.last().expect("input pushed");
        let mut out = vec![0.0; n * fan_out];
        for r in 0..n {
            let a = &prev[r * fan_in..(r + 1) * fan_in];
            let z = &mut out[r * fan_out..(r + 1) * fan_out];
            for (o, zo) in z.iter_mut().enumerate() {
                let w = &weights[o * fan_in..(o + 1) * fan_in];
                *zo = act.apply(dot(w, a) + biases[o]);
            }
        }
        trace.push(out);
    }
    trace
}

pub fn forward(spec: &MlpSpec, params: &ParamVector, inputs: &Batch) -> Result<Batch> {
    check_params(spec, params)?;
    check_inputs(spec, inputs)?;
    let mut trace = forward_trace(spec, params, inputs);
    Ok(Batch {
        rows: inputs.rows,
        cols: spec.output_dim(),
        data: trace.pop().expect("at least one layer"),
    })
}

/// Gradients of a scalar loss with respect to parameters and inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub params: ParamVector,
    pub inputs: Batch,
}

/// Activations recorded by a forward pass, reusable for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    rows: usize,
    layers: Vec<Vec<f64>>,
}

impl Trace {
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Network output as a batch.
    pub fn output(&self, spec: &MlpSpec) -> Batch {
        Batch {
            rows: self.rows,
            cols: spec.output_dim(),
            data: self.layers.last().expect("input recorded").clone(),
        }
    }

    /// Network output, flattened row-major.
    pub fn output_slice(&self) -> &[f64] {
        self.layers.last().expect("input recorded")
    }
}

/// Forward pass keeping every layer's activations.
pub fn forward_traced(spec: &MlpSpec, params: &ParamVector, inputs: &Batch) -> Result<Trace> {
    check_params(spec, params)?;
    check_inputs(spec, inputs)?;
    Ok(Trace {
        rows: inputs.rows,
        layers: forward_trace(spec, params, inputs),
    })
}

/// Backpropagates `output_grad` (the loss gradient with respect to the
/// post-activation outputs, summed over the batch) through the network.
pub fn backward(
    spec: &MlpSpec,
    params: &ParamVector,
    inputs: &Batch,
    output_grad: &Batch,
) -> Result<Gradients> {
    let trace = forward_traced(spec, params, inputs)?;
    backward_traced(spec, params, &trace, output_grad)
}

/// [`backward`] from a trace recorded with the same parameters.
pub fn backward_traced(
    spec: &MlpSpec,
    params: &ParamVector,
    trace: &Trace,
    output_grad: &Batch,
) -> Result<Gradients> {
    check_params(spec, params)?;
    let n = trace.rows;
    if trace.layers.len() != spec.num_layers() + 1 || trace.layers[0].len() != n * spec.input_dim() {
        return Err(Error::Shape("trace does not match the network".into()));
    }
    if output_grad.rows != n || output_grad.cols != spec.output_dim() {
        return Err(Error::Shape(format!(
            "output gradient is {}x{}, expected {}x{}",
            output_grad.rows,
            output_grad.cols,
            n,
            spec.output_dim()
        )));
    }
    let trace = &trace.layers;
    let layers: Vec<_> = spec.layers().collect();
    let mut grad = vec![0.0; params.len()];

    // delta: dL/d(pre-activation) of the current layer
    let out = &trace[layers.len()];
    let out_act = spec.output_activation;
    let mut delta: Vec<f64> = output_grad
        .data
        .iter()
        .zip(out)
        .map(|(g, y)| g * out_act.derivative_at_output(*y))
        .collect();

    for (layer, &(fan_in, fan_out, offset)) in layers.iter().enumerate().rev() {
        let prev = &trace[layer];
        let weights = &params.values[offset..offset + fan_in * fan_out];
        let (gw, gb) = grad[offset..offset + (fan_in + 1) * fan_out].split_at_mut(fan_in * fan_out);
        let mut prev_delta = vec![0.0; n * fan_in];
        for r in 0..n {
            let a = &prev[r * fan_in..(r + 1) * fan_in];
            let d = &delta[r * fan_out..(r + 1) * fan_out];
            let pd = &mut prev_delta[r * fan_in..(r + 1) * fan_in];
            for (o, &dout) in d.iter().enumerate() {
                if dout == 0.0 {
                    continue;
                }
                gb[o] += dout;
                let w = &weights[o * fan_in..(o + 1) * fan_in];
                let gwo = &mut gw[o * fan_in..(o + 1) * fan_in];
                for i in 0..fan_in {
                    gwo[i] += dout * a[i];
                    pd[i] += dout * w[i];
                }
            }
        }
        if layer > 0 {
            // previous layer is hidden, hence tanh
            for (pd, y) in prev_delta.iter_mut().zip(prev) {
                *pd *= 1.0 - y * y;
            }
        }
        delta = prev_delta;
    }

    Ok(Gradients {
        params: ParamVector { values: grad },
        inputs: Batch {
            rows: n,
            cols: spec.input_dim(),
            data: delta,
        },
    })
}

/// A network topology bundled with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: MlpSpec,
    pub params: ParamVector,
}

impl Network {
    pub fn new(spec: MlpSpec, params: ParamVector) -> Result<Self> {
        check_params(&spec, &params)?;
        Ok(Self { spec, params })
    }

    pub fn random<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let params = init_params(&spec, rng);
        Self { spec, params }
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let params = ParamVector::zeros(spec.param_count());
        Self { spec, params }
    }

    pub fn forward(&self, inputs: &Batch) -> Result<Batch> {
        forward(&self.spec, &self.params, inputs)
    }

    pub fn backward(&self, inputs: &Batch, output_grad: &Batch) -> Result<Gradients> {
        backward(&self.spec, &self.params, inputs, output_grad)
    }

    pub fn forward_traced(&self, inputs: &Batch) -> Result<Trace> {
        forward_traced(&self.spec, &self.params, inputs)
    }

    pub fn backward_traced(&self, trace: &Trace, output_grad: &Batch) -> Result<Gradients> {
        backward_traced(&self.spec, &self.params, trace, output_grad)
    }
}

/// Adam moment estimates for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. On non-finite gradients or results the
/// parameters and state are left untouched and [`Error::Diverged`] is
/// returned.
pub fn adam_step(
    params: &mut ParamVector,
    grads: &ParamVector,
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.first_moment.len() != n || state.second_moment.len() != n {
        return Err(Error::Shape(format!(
            "adam: params {n}, grads {}, moments {}/{}",
            grads.len(),
            state.first_moment.len(),
            state.second_moment.len()
        )));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    if !grads.is_finite() {
        return Err(Error::Diverged);
    }

    let t = state.step_count + 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let bc1 = 1.0 - b1.powi(t as i32);
    let bc2 = 1.0 - b2.powi(t as i32);

    let mut m = state.first_moment.clone();
    let mut v = state.second_moment.clone();
    let mut next = params.values.clone();
    for i in 0..n {
        let g = grads.values[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        next[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    if next.iter().any(|x| !x.is_finite()) {
        return Err(Error::Diverged);
    }
    params.values = next;
    state.first_moment = m;
    state.second_moment = v;
    state.step_count = t;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_batch(rows: usize, cols: usize, r: &mut ChaCha8Rng) -> Batch {
        let data = (0..rows * cols).map(|_| rand::Rng::random_range(r, -1.5..1.5)).collect();
        Batch::new(rows, cols, data).unwrap()
    }

    /// Central finite differences of `sum(outputs * weights)`.
    fn fd_param_grad(spec: &MlpSpec, p: &ParamVector, x: &Batch, upstream: &Batch) -> Vec<f64> {
        let h = 1e-5;
        let loss = |p: &ParamVector| -> f64 {
            let y = forward(spec, p, x).unwrap();
            y.as_slice().iter().zip(upstream.as_slice()).map(|(a, b)| a * b).sum()
        };
        (0..p.len())
            .map(|i| {
                let mut plus = p.clone();
                plus.values[i] += h;
                let mut minus = p.clone();
                minus.values[i] -= h;
                (loss(&plus) - loss(&minus)) / (2.0 * h)
            })
            .collect()
    }

    fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::new(vec![3], Activation::Tanh).is_err());
        assert!(MlpSpec::new(vec![3, 0, 1], Activation::Tanh).is_err());
        let s = MlpSpec::new(vec![2, 3, 1], Activation::Sigmoid).unwrap();
        assert_eq!(s.param_count(), 13);
    }

    #[test]
    fn init_zero_biases_and_deterministic() {
        let spec = MlpSpec::new(vec![2, 3, 1], Activation::Sigmoid).unwrap();
        let a = init_params(&spec, &mut rng(7));
        let b = init_params(&spec, &mut rng(7));
        assert_eq!(a.len(), 13);
        assert_eq!(a, b);
        // layer 1 biases at 6..9, layer 2 bias at 12
        assert!(a.values[6..9].iter().all(|&v| v == 0.0));
        assert_eq!(a.values[12], 0.0);
        let bound = (6.0f64 / 5.0).sqrt();
        assert!(a.values[..6].iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn zero_params_forward() {
        let x = random_batch(5, 2, &mut rng(1));
        let tanh = MlpSpec::new(vec![2, 4, 3], Activation::Tanh).unwrap();
        let y = forward(&tanh, &ParamVector::zeros(tanh.param_count()), &x).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
        let sig = MlpSpec::new(vec![2, 4, 1], Activation::Sigmoid).unwrap();
        let y = forward(&sig, &ParamVector::zeros(sig.param_count()), &x).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn forward_rejects_bad_width() {
        let spec = MlpSpec::new(vec![2, 1], Activation::Identity).unwrap();
        let p = ParamVector::zeros(3);
        let x = Batch::zeros(4, 3);
        assert!(matches!(forward(&spec, &p, &x), Err(Error::Shape(_))));
        assert!(matches!(forward(&spec, &ParamVector::zeros(2), &Batch::zeros(1, 2)), Err(Error::Shape(_))));
    }

    #[test]
    fn batch_equals_single_rows() {
        let spec = MlpSpec::new(vec![3, 6, 2], Activation::Tanh).unwrap();
        let mut r = rng(3);
        let p = init_params(&spec, &mut r);
        let x = random_batch(4, 3, &mut r);
        let y = forward(&spec, &p, &x).unwrap();
        for i in 0..4 {
            let single = Batch::new(1, 3, x.row(i).to_vec()).unwrap();
            let yi = forward(&spec, &p, &single).unwrap();
            assert_eq!(yi.row(0), y.row(i));
        }
    }

    #[test]
    fn backward_zero_upstream() {
        let spec = MlpSpec::new(vec![2, 5, 1], Activation::Sigmoid).unwrap();
        let mut r = rng(4);
        let p = init_params(&spec, &mut r);
        let x = random_batch(6, 2, &mut r);
        let g = backward(&spec, &p, &x, &Batch::zeros(6, 1)).unwrap();
        assert!(g.params.values.iter().all(|&v| v == 0.0));
        assert!(g.inputs.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_linear_chain_rule() {
        // y = w*x + b with x = 2
        let spec = MlpSpec::new(vec![1, 1], Activation::Identity).unwrap();
        let p = ParamVector::from_vec(vec![0.7, 0.0]);
        let x = Batch::new(1, 1, vec![2.0]).unwrap();
        let g = backward(&spec, &p, &x, &Batch::new(1, 1, vec![1.0]).unwrap()).unwrap();
        assert_eq!(g.params.values, vec![2.0, 1.0]);
        assert_eq!(g.inputs.as_slice(), &[0.7]);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut r = rng(11);
        for (sizes, act) in [
            (vec![2, 3, 1], Activation::Sigmoid),
            (vec![4, 8, 8, 2], Activation::Tanh),
            (vec![3, 5, 2], Activation::Identity),
        ] {
            let spec = MlpSpec::new(sizes, act).unwrap();
            let p = init_params(&spec, &mut r);
            let x = random_batch(7, spec.input_dim(), &mut r);
            let up = random_batch(7, spec.output_dim(), &mut r);
            let g = backward(&spec, &p, &x, &up).unwrap();
            let fd = fd_param_grad(&spec, &p, &x, &up);
            assert!(max_rel_err(&g.params.values, &fd) <= 1e-4);
        }
    }

    #[test]
    fn tanh_matches_std() {
        let mut x = -30.0;
        while x <= 30.0 {
            assert!((Activation::Tanh.apply(x) - x.tanh()).abs() <= 4e-16, "{x}");
            x += 0.0137;
        }
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);
        assert_eq!(Activation::Tanh.apply(1e3), 1.0);
        assert_eq!(Activation::Tanh.apply(-1e3), -1.0);
    }

    #[test]
    fn adam_zero_grad_is_noop() {
        let mut p = ParamVector::from_vec(vec![0.3, -1.2]);
        let mut s = AdamState::new(2);
        adam_step(&mut p, &ParamVector::zeros(2), &mut s, 0.01).unwrap();
        assert_eq!(p.values, vec![0.3, -1.2]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        for g in [3.5, -0.02, 1e-3] {
            let mut p = ParamVector::from_vec(vec![1.0]);
            let mut s = AdamState::new(1);
            let lr = 0.0002;
            adam_step(&mut p, &ParamVector::from_vec(vec![g]), &mut s, lr).unwrap();
            // epsilon shrinks the step by g / (g + eps)
            assert!(((1.0 - p.values[0]).abs() - lr).abs() <= lr * 2e-5);
        }
    }

    #[test]
    fn adam_minimizes_square() {
        let mut p = ParamVector::from_vec(vec![1.0]);
        let mut s = AdamState::new(1);
        for _ in 0..100 {
            let g = ParamVector::from_vec(vec![2.0 * p.values[0]]);
            adam_step(&mut p, &g, &mut s, 0.1).unwrap();
        }
        assert!(p.values[0].abs() < 0.5);
    }

    #[test]
    fn adam_rejects_nonfinite() {
        let mut p = ParamVector::from_vec(vec![1.0, 2.0]);
        let mut s = AdamState::new(2);
        let before = (p.clone(), s.clone());
        let err = adam_step(&mut p, &ParamVector::from_vec(vec![f64::NAN, 1.0]), &mut s, 0.1);
        assert!(matches!(err, Err(Error::Diverged)));
        assert_eq!((p, s), before);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn prop_gradcheck(
            seed in any::<u64>(),
            input in 1usize..=4,
            h1 in 1usize..=8,
            h2 in 1usize..=8,
            out in 1usize..=2,
            rows in 1usize..=16,
        ) {
            let mut r = rng(seed);
            let spec = MlpSpec::new(vec![input, h1, h2, out], Activation::Sigmoid).unwrap();
            let p = init_params(&spec, &mut r);
            let x = random_batch(rows, input, &mut r);
            let up = random_batch(rows, out, &mut r);
            let g = backward(&spec, &p, &x, &up).unwrap();
            let fd = fd_param_grad(&spec, &p, &x, &up);
            prop_assert!(max_rel_err(&g.params.values, &fd) <= 1e-4);
        }

        #[test]
        fn prop_row_permutation(seed in any::<u64>(), rows in 1usize..=12) {
            let mut r = rng(seed);
            let spec = MlpSpec::new(vec![2, 7, 3], Activation::Tanh).unwrap();
            let p = init_params(&spec, &mut r);
            let x = random_batch(rows, 2, &mut r);
            let perm: Vec<usize> = (0..rows).rev().collect();
            let xp = Batch::from_rows(&perm.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
            let y = forward(&spec, &p, &x).unwrap();
            let yp = forward(&spec, &p, &xp).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(yp.row(k), y.row(i));
            }
        }

        #[test]
        fn prop_adam_deterministic(g in proptest::collection::vec(-10.0f64..10.0, 1..8)) {
            let n = g.len();
            let grads = ParamVector::from_vec(g);
            let mut p1 = ParamVector::zeros(n);
            let mut p2 = ParamVector::zeros(n);
            let mut s1 = AdamState::new(n);
            let mut s2 = AdamState::new(n);
            adam_step(&mut p1, &grads, &mut s1, 0.01).unwrap();
            adam_step(&mut p2, &grads, &mut s2, 0.01).unwrap();
            prop_assert_eq!(p1, p2);
            prop_assert!(s1.second_moment.iter().all(|&v| v >= 0.0));
        }
    }
}
