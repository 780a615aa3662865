//! Multilayer perceptron with exact reverse-mode gradients.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected network: ReLU hidden layers, configurable output
/// activation (tanh for actors, identity for critics).
#[derive(Debug, Clone)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub output_activation: Activation,
}

/// Intermediate values of one forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: DVector<f64>,
    pre_activations: Vec<DVector<f64>>,
    activations: Vec<DVector<f64>>,
}

/// Per-layer parameter gradients plus the gradient at the input, which the
/// actor update needs to differentiate the critic through its action half.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub d_weights: Vec<DMatrix<f64>>,
    pub d_biases: Vec<DVector<f64>>,
    pub d_input: DVector<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            d_weights: net.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            d_biases: net.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
            d_input: DVector::zeros(net.sizes[0]),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.d_weights.iter_mut().zip(&other.d_weights) {
            *a += b;
        }
        for (a, b) in self.d_biases.iter_mut().zip(&other.d_biases) {
            *a += b;
        }
        self.d_input += &other.d_input;
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.d_weights {
            *w *= factor;
        }
        for b in &mut self.d_biases {
            *b *= factor;
        }
        self.d_input *= factor;
    }
}

impl Mlp {
    /// He-style initialization on the hidden layers and a small uniform
    /// final layer, drawn deterministically from the given rng.
    pub fn new<R: Rng>(sizes: &[usize], output_activation: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "network needs input and output sizes");
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let last = l == sizes.len() - 2;
            let scale = if last { 1e-3 } else { (2.0 / fan_in as f64).sqrt() };
            let w = DMatrix::from_fn(fan_out, fan_in, |_, _| {
                if last {
                    rng.gen_range(-scale..scale)
                } else {
                    // Uniform with matched variance keeps init cheap and seedable.
                    rng.gen_range(-scale * 1.7320508_f64..scale * 1.7320508_f64)
                }
            });
            weights.push(w);
            biases.push(DVector::zeros(fan_out));
        }
        Self { sizes: sizes.to_vec(), weights, biases, output_activation }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    fn activation_at(&self, layer: usize) -> Activation {
        if layer == self.n_layers() - 1 {
            self.output_activation
        } else {
            Activation::Relu
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(self.forward_cached(input)?.0)
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache), AgentError> {
        if input.len() != self.input_dim() {
            return Err(AgentError::Dimension(format!(
                "input has {} components, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut x = DVector::from_column_slice(input);
        let cache_input = x.clone();
        let mut pre_activations = Vec::with_capacity(self.n_layers());
        let mut activations = Vec::with_capacity(self.n_layers());
        for l in 0..self.n_layers() {
            let z = &self.weights[l] * &x + &self.biases[l];
            let act = self.activation_at(l);
            let a = z.map(|v| act.apply(v));
            pre_activations.push(z);
            activations.push(a.clone());
            x = a;
        }
        let out = x.iter().copied().collect();
        Ok((out, ForwardCache { input: cache_input, pre_activations, activations }))
    }

    /// Exact reverse-mode gradients for the forward pass recorded in
    /// `cache`, seeded with dL/d(output).
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<Gradients, AgentError> {
        if grad_output.len() != self.output_dim() {
            return Err(AgentError::Dimension(format!(
                "output gradient has {} components, network emits {}",
                grad_output.len(),
                self.output_dim()
            )));
        }
        let layers = self.n_layers();
        let mut d_weights = Vec::with_capacity(layers);
        let mut d_biases = Vec::with_capacity(layers);
        let mut delta = DVector::from_column_slice(grad_output);
        for l in (0..layers).rev() {
            let act = self.activation_at(l);
            let z = &cache.pre_activations[l];
            for (d, zv) in delta.iter_mut().zip(z.iter()) {
                *d *= act.derivative(*zv);
            }
            let below = if l == 0 { &cache.input } else { &cache.activations[l - 1] };
            d_weights.push(&delta * below.transpose());
            d_biases.push(delta.clone());
            delta = self.weights[l].transpose() * delta;
        }
        d_weights.reverse();
        d_biases.reverse();
        Ok(Gradients { d_weights, d_biases, d_input: delta })
    }

    /// All parameters flattened in declaration order (weights row-major,
    /// then bias, per layer); the checkpoint format stores exactly this.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in 0..self.n_layers() {
            for r in 0..self.weights[l].nrows() {
                for c in 0..self.weights[l].ncols() {
                    out.push(self.weights[l][(r, c)]);
                }
            }
            out.extend(self.biases[l].iter().copied());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Restores parameters from a flat vector; the inverse of `flatten`.
    pub fn load_flat(&mut self, params: &[f64]) -> Result<(), AgentError> {
        if params.len() != self.param_count() {
            return Err(AgentError::Checkpoint(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut it = params.iter();
        for l in 0..self.n_layers() {
            for r in 0..self.weights[l].nrows() {
                for c in 0..self.weights[l].ncols() {
                    self.weights[l][(r, c)] = *it.next().unwrap();
                }
            }
            for b in self.biases[l].iter_mut() {
                *b = *it.next().unwrap();
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn zero_weights_emit_activated_bias() {
        let mut net = Mlp::new(&[3, 2], Activation::Tanh, &mut rng());
        net.weights[0].fill(0.0);
        net.biases[0] = DVector::from_column_slice(&[0.5, -0.25]);
        let out = net.forward(&[1.0, 2.0, 3.0]).unwrap();
        assert!((out[0] - 0.5_f64.tanh()).abs() < 1e-15);
        assert!((out[1] - (-0.25_f64).tanh()).abs() < 1e-15);
    }

    #[test]
    fn identity_single_layer_passes_through() {
        let mut net = Mlp::new(&[3, 3], Activation::Identity, &mut rng());
        net.weights[0] = DMatrix::identity(3, 3);
        net.biases[0].fill(0.0);
        let out = net.forward(&[0.1, -0.2, 0.3]).unwrap();
        assert_eq!(out, vec![0.1, -0.2, 0.3]);
    }

    #[test]
    fn tanh_output_is_bounded() {
        let net = Mlp::new(&[4, 8, 3], Activation::Tanh, &mut rng());
        let mut r = rng();
        for _ in 0..50 {
            let x: Vec<f64> = (0..4).map(|_| r.gen_range(-10.0..10.0)).collect();
            let out = net.forward(&x).unwrap();
            assert!(out.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn linear_net_matches_least_squares_gradient() {
        // Single identity-activation layer with quadratic loss: the gradient
        // of 0.5*|Wx + b - y|^2 is (Wx + b - y) x^T.
        let mut net = Mlp::new(&[2, 2], Activation::Identity, &mut rng());
        net.weights[0] = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 0.3]);
        net.biases[0] = DVector::from_column_slice(&[0.1, -0.2]);
        let x = [0.7, -1.3];
        let y = [0.25, 0.75];
        let (out, cache) = net.forward_cached(&x).unwrap();
        let grad_out: Vec<f64> = out.iter().zip(y.iter()).map(|(o, t)| o - t).collect();
        let grads = net.backward(&cache, &grad_out).unwrap();
        for r in 0..2 {
            for c in 0..2 {
                let expected = grad_out[r] * x[c];
                assert!((grads.d_weights[0][(r, c)] - expected).abs() < 1e-12);
            }
            assert!((grads.d_biases[0][r] - grad_out[r]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_output_gradient_gives_zero_parameter_gradients() {
        let net = Mlp::new(&[3, 5, 2], Activation::Tanh, &mut rng());
        let (_, cache) = net.forward_cached(&[0.2, 0.4, -0.1]).unwrap();
        let grads = net.backward(&cache, &[0.0, 0.0]).unwrap();
        assert!(grads.d_weights.iter().all(|w| w.iter().all(|&v| v == 0.0)));
        assert!(grads.d_biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    /// Central finite differences over every parameter of a small net.
    #[test]
    fn gradients_match_finite_differences_exhaustively() {
        let mut r = rng();
        let mut net = Mlp::new(&[3, 6, 4, 2], Activation::Tanh, &mut r);
        // Non-degenerate final layer so output gradients are meaningful.
        for w in net.weights.last_mut().unwrap().iter_mut() {
            *w = r.gen_range(-0.5..0.5);
        }
        let x: Vec<f64> = (0..3).map(|_| r.gen_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..2).map(|_| r.gen_range(-0.5..0.5)).collect();
        let loss = |net: &Mlp| -> f64 {
            let out = net.forward(&x).unwrap();
            0.5 * out.iter().zip(&target).map(|(o, t)| (o - t) * (o - t)).sum::<f64>()
        };
        let (out, cache) = net.forward_cached(&x).unwrap();
        let grad_out: Vec<f64> = out.iter().zip(&target).map(|(o, t)| o - t).collect();
        let grads = net.backward(&cache, &grad_out).unwrap();

        let h = 1e-5;
        let mut worst = 0.0_f64;
        let flat = net.flatten();
        for i in 0..flat.len() {
            let mut plus = flat.clone();
            plus[i] += h;
            let mut minus = flat.clone();
            minus[i] -= h;
            let mut np = net.clone();
            np.load_flat(&plus).unwrap();
            let mut nm = net.clone();
            nm.load_flat(&minus).unwrap();
            let fd = (loss(&np) - loss(&nm)) / (2.0 * h);
            // Map flat index back through the analytic gradients.
            let analytic = {
                let mut offset = 0;
                let mut val = f64::NAN;
                for l in 0..net.n_layers() {
                    let wlen = net.weights[l].len();
                    let blen = net.biases[l].len();
                    if i < offset + wlen {
                        let local = i - offset;
                        let ncols = net.weights[l].ncols();
                        val = grads.d_weights[l][(local / ncols, local % ncols)];
                        break;
                    }
                    offset += wlen;
                    if i < offset + blen {
                        val = grads.d_biases[l][i - offset];
                        break;
                    }
                    offset += blen;
                }
                val
            };
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn flatten_round_trips() {
        let net = Mlp::new(&[4, 7, 3], Activation::Identity, &mut rng());
        let flat = net.flatten();
        let mut other = Mlp::new(&[4, 7, 3], Activation::Identity, &mut rng());
        other.load_flat(&flat).unwrap();
        assert_eq!(net.flatten(), other.flatten());
        let mut wrong = Mlp::new(&[4, 7, 2], Activation::Identity, &mut rng());
        assert!(wrong.load_flat(&flat).is_err());
    }
}
