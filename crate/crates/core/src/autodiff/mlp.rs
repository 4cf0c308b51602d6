use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{gelu, Graph, Matrix, Var};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Identity,
}

/// Shape of a fully connected network: `widths[0]` inputs, `widths.last()`
/// outputs, one linear layer between each consecutive pair. The activation
/// is applied between layers, never after the last one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation, seed: u64) -> Self {
        Self {
            widths,
            activation,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::invalid(format!(
                "an MLP needs at least one layer (two widths), got {:?}",
                self.widths
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::invalid(format!(
                "MLP widths must be positive, got {:?}",
                self.widths
            )));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated")
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn parameter_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `fan_in × fan_out`, applied as `x · W`.
    pub weight: Matrix,
    /// `1 × fan_out`.
    pub bias: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Linear>,
}

impl Mlp {
    /// Glorot-uniform weights drawn from `MlpSpec::seed`, zero biases.
    pub fn new(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_from_seed(spec.seed);
        let layers = spec
            .widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((fan_in, fan_out), || {
                    rng.random_range(-limit..limit)
                });
                Linear {
                    weight,
                    bias: Matrix::zeros((1, fan_out)),
                }
            })
            .collect();
        Ok(Self { spec, layers })
    }

    pub fn from_layers(spec: MlpSpec, layers: Vec<Linear>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.layer_count() {
            return Err(Error::shape(format!(
                "spec declares {} layers, got {}",
                spec.layer_count(),
                layers.len()
            )));
        }
        for (i, (layer, w)) in layers.iter().zip(spec.widths.windows(2)).enumerate() {
            if layer.weight.dim() != (w[0], w[1]) || layer.bias.dim() != (1, w[1]) {
                return Err(Error::shape(format!(
                    "layer {i}: expected weight {}x{} and bias 1x{}, got {:?} and {:?}",
                    w[0],
                    w[1],
                    w[1],
                    layer.weight.dim(),
                    layer.bias.dim()
                )));
            }
        }
        Ok(Self { spec, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn zero_parameters(&mut self) {
        for layer in &mut self.layers {
            layer.weight.fill(0.0);
            layer.bias.fill(0.0);
        }
    }

    /// Weights then bias, layer by layer.
    pub fn parameters(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    /// Plain forward pass, no tape. `x` is `batch × input_width`.
    pub fn forward(&self, x: &Matrix) -> Matrix {
        assert_eq!(x.ncols(), self.spec.input_width(), "MLP input width");
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.weight) + &layer.bias;
            if i != last && self.spec.activation == Activation::Gelu {
                h.mapv_inplace(gelu);
            }
        }
        h
    }

    /// Registers every parameter as a leaf on `graph`.
    pub fn bind(&self, graph: &mut Graph) -> BoundMlp {
        let layers = self
            .layers
            .iter()
            .map(|l| (graph.leaf(l.weight.clone()), graph.leaf(l.bias.clone())))
            .collect();
        BoundMlp {
            layers,
            activation: self.spec.activation,
        }
    }
}

/// An [`Mlp`] whose parameters live on a particular graph.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    layers: Vec<(Var, Var)>,
    activation: Activation,
}

impl BoundMlp {
    pub fn forward(&self, graph: &mut Graph, x: Var) -> Var {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let xw = graph.matmul(h, w);
            h = graph.add_row(xw, b);
            if i != last && self.activation == Activation::Gelu {
                h = graph.gelu(h);
            }
        }
        h
    }

    /// Parameter handles in the same order as [`Mlp::parameters`].
    pub fn parameter_vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_degenerate_specs() {
        assert!(Mlp::new(MlpSpec::new(vec![3], Activation::Gelu, 0)).is_err());
        assert!(Mlp::new(MlpSpec::new(vec![3, 0, 1], Activation::Gelu, 0)).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let spec = MlpSpec::new(vec![4, 8, 2], Activation::Gelu, 9);
        let a = Mlp::new(spec.clone()).unwrap();
        let b = Mlp::new(spec).unwrap();
        assert_eq!(a, b);
        let limit = (6.0f64 / 12.0).sqrt();
        assert!(a.layers()[0].weight.iter().all(|w| w.abs() <= limit));
        assert!(a.layers()[0].bias.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn identity_network_reproduces_input() {
        let spec = MlpSpec::new(vec![3, 3, 3], Activation::Identity, 0);
        let eye = Linear {
            weight: Matrix::eye(3),
            bias: Matrix::zeros((1, 3)),
        };
        let mlp = Mlp::from_layers(spec, vec![eye.clone(), eye]).unwrap();
        let x = array![[1.5, -2.0, 0.25], [0.0, 3.0, -7.0]];
        assert_eq!(mlp.forward(&x), x);

        let mut g = Graph::new();
        let bound = mlp.bind(&mut g);
        let xv = g.constant(x.clone());
        let y = bound.forward(&mut g, xv);
        assert_eq!(g.value(y), &x);
    }

    #[test]
    fn tape_and_plain_forward_agree() {
        let mlp = Mlp::new(MlpSpec::new(vec![5, 7, 3], Activation::Gelu, 3)).unwrap();
        let x = Array2::from_shape_fn((4, 5), |(i, j)| (i as f64 - 1.5) * 0.3 + j as f64 * 0.1);
        let mut g = Graph::new();
        let bound = mlp.bind(&mut g);
        let xv = g.constant(x.clone());
        let y = bound.forward(&mut g, xv);
        assert_eq!(g.value(y), &mlp.forward(&x));
    }
}
