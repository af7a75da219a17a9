//! Fully connected networks with hand-written backpropagation.
//!
//! All parameters live in one flat vector so optimizers, target averaging
//! and serialization can treat a network as a plain `[f64]`. Layer `l`
//! stores its weight matrix (`out x in`, column-major) followed by its bias.
//! Batches are matrices with one sample per column.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DMatrixView};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
        }
    }

    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Linear => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "linear" => Ok(Activation::Linear),
            other => Err(format!("unknown activation '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

/// Intermediate values of a forward pass, needed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Tape {
    /// `inputs[l]` is the input of layer `l`; the last entry is the output.
    inputs: Vec<DMatrix<f64>>,
    pre: Vec<DMatrix<f64>>,
}

impl Tape {
    pub fn output(&self) -> &DMatrix<f64> {
        self.inputs.last().expect("tape holds at least the input")
    }
}

fn parameter_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

impl Mlp {
    /// He-uniform weights for hidden layers; the output layer starts in
    /// `[-3e-3, 3e-3]` so initial outputs sit near the activation's centre.
    pub fn new(widths: &[usize], activations: &[Activation], rng: &mut impl Rng) -> Self {
        assert!(widths.len() >= 2 && activations.len() == widths.len() - 1, "one activation per layer");
        assert!(widths.iter().all(|&w| w > 0), "layer widths must be positive");
        let mut params = Vec::with_capacity(parameter_count(widths));
        let layers = widths.len() - 1;
        for (l, w) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = if l + 1 == layers { 3e-3 } else { (6.0 / fan_in as f64).sqrt() };
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-bound..bound));
            }
            for _ in 0..fan_out {
                params.push(if l + 1 == layers { rng.random_range(-bound..bound) } else { 0.0 });
            }
        }
        Self { widths: widths.to_vec(), activations: activations.to_vec(), params }
    }

    pub fn from_params(widths: &[usize], activations: &[Activation], params: Vec<f64>) -> Result<Self, String> {
        if widths.len() < 2 || activations.len() + 1 != widths.len() {
            return Err(format!("{} widths need {} activations, got {}", widths.len(), widths.len().saturating_sub(1), activations.len()));
        }
        if widths.contains(&0) {
            return Err("layer widths must be positive".into());
        }
        let expected = parameter_count(widths);
        if params.len() != expected {
            return Err(format!("expected {expected} parameters, got {}", params.len()));
        }
        Ok(Self { widths: widths.to_vec(), activations: activations.to_vec(), params })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn layer(&self, l: usize, offset: usize) -> (DMatrixView<'_, f64>, &[f64]) {
        let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
        let w = DMatrixView::from_slice(&self.params[offset..offset + fan_in * fan_out], fan_out, fan_in);
        let b = &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
        (w, b)
    }

    fn affine(&self, l: usize, offset: usize, x: &DMatrix<f64>) -> DMatrix<f64> {
        let (w, b) = self.layer(l, offset);
        let mut z = w * x;
        for mut col in z.column_iter_mut() {
            for (zi, bi) in col.iter_mut().zip(b) {
                *zi += bi;
            }
        }
        z
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.input_dim(), "input width");
        let mut a = x.clone();
        let mut offset = 0;
        for (l, act) in self.activations.iter().enumerate() {
            let mut z = self.affine(l, offset, &a);
            z.apply(|v| *v = act.apply(*v));
            a = z;
            offset += self.widths[l] * self.widths[l + 1] + self.widths[l + 1];
        }
        a
    }

    /// Forward pass on a single sample.
    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        self.forward(&DMatrix::from_column_slice(x.len(), 1, x)).as_slice().to_vec()
    }

    pub fn forward_tape(&self, x: &DMatrix<f64>) -> Tape {
        assert_eq!(x.nrows(), self.input_dim(), "input width");
        let mut inputs = vec![x.clone()];
        let mut pre = Vec::with_capacity(self.activations.len());
        let mut offset = 0;
        for (l, act) in self.activations.iter().enumerate() {
            let z = self.affine(l, offset, inputs.last().unwrap());
            inputs.push(z.map(|v| act.apply(v)));
            pre.push(z);
            offset += self.widths[l] * self.widths[l + 1] + self.widths[l + 1];
        }
        Tape { inputs, pre }
    }

    /// Gradient of a scalar loss given `d_out = dL/d(output)`; returns the
    /// parameter gradient (same layout as `params`) and `dL/d(input)`.
    pub fn backward(&self, tape: &Tape, d_out: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
        let layers = self.activations.len();
        let mut offsets = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            offsets.push(offset);
            offset += self.widths[l] * self.widths[l + 1] + self.widths[l + 1];
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut delta = d_out.clone();
        for l in (0..layers).rev() {
            let act = self.activations[l];
            let (z, a) = (&tape.pre[l], &tape.inputs[l + 1]);
            delta.zip_zip_apply(z, a, |d, z, a| *d *= act.derivative(z, a));
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let gw = &delta * tape.inputs[l].transpose();
            let start = offsets[l];
            grad[start..start + fan_in * fan_out].copy_from_slice(gw.as_slice());
            for (r, g) in grad[start + fan_in * fan_out..start + fan_in * fan_out + fan_out].iter_mut().enumerate() {
                *g = delta.row(r).sum();
            }
            let (w, _) = self.layer(l, start);
            delta = w.transpose() * &delta;
        }
        (grad, delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_and_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[2, 5, 3], &[Activation::Relu, Activation::Sigmoid], &mut rng);
        assert_eq!(net.param_count(), 2 * 5 + 5 + 5 * 3 + 3);
        let y = net.forward(&DMatrix::from_element(2, 7, 0.3));
        assert_eq!(y.shape(), (3, 7));
        assert!(y.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(Mlp::from_params(&[2, 5, 3], &[Activation::Relu], vec![]).is_err());
    }

    #[test]
    fn single_linear_layer_is_affine() {
        // W = [1 2; 3 4] column-major, b = [0.5, -1].
        let net = Mlp::from_params(&[2, 2], &[Activation::Linear], vec![1.0, 3.0, 2.0, 4.0, 0.5, -1.0]).unwrap();
        assert_eq!(net.forward_one(&[1.0, -1.0]), vec![-0.5, -2.0]);
    }

    #[test]
    fn tape_output_matches_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[3, 4, 4, 2], &[Activation::Relu, Activation::Relu, Activation::Linear], &mut rng);
        let x = DMatrix::from_fn(3, 5, |i, j| (i as f64 - j as f64) * 0.7);
        assert_eq!(net.forward_tape(&x).output(), &net.forward(&x));
    }
}
