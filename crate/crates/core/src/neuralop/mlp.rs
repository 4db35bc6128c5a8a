//! Dense tanh networks with a hand-written reverse pass.
//!
//! Activations are stored column-wise: a batch of `B` inputs is a
//! `width × B` matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }
}

/// Feed-forward network: tanh on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Activations of a forward pass, input first.
#[derive(Debug, Clone)]
pub struct Tape {
    activations: Vec<DMatrix<f64>>,
}

impl Tape {
    pub fn output(&self) -> &DMatrix<f64> {
        self.activations.last().expect("tape holds at least the input")
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].ncols()
    }
}

/// Parameter gradients, laid out like [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weight: Vec<DMatrix<f64>>,
    pub bias: Vec<DVector<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weight: net.layers.iter().map(|l| DMatrix::zeros(l.out_dim(), l.in_dim())).collect(),
            bias: net.layers.iter().map(|l| DVector::zeros(l.out_dim())).collect(),
        }
    }

    /// Flat views in parameter order (weights then bias, per layer).
    pub fn slices(&self) -> Vec<&[f64]> {
        self.weight
            .iter()
            .zip(&self.bias)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Dense {
                    weight: DMatrix::from_fn(fan_out, fan_in, |_, _| rng.uniform_in(-bound, bound)),
                    bias: DVector::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        check_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| Dense { weight: DMatrix::zeros(w[1], w[0]), bias: DVector::zeros(w[1]) })
            .collect();
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.out_dim() {
                return Err(Error::DimensionMismatch { expected: l.out_dim(), got: l.bias.len() });
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::DimensionMismatch { expected: layers[i - 1].out_dim(), got: l.in_dim() });
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("non-finite parameter in layer {i}")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim()).chain(self.layers.iter().map(Dense::out_dim)).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Dense::out_dim).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()]).collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// Single-input forward pass.
    pub fn forward(&self, input: &DVector<f64>) -> Result<(DVector<f64>, Tape)> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), got: input.len() });
        }
        let tape = self.forward_batch(&DMatrix::from_column_slice(input.len(), 1, input.as_slice()));
        Ok((tape.output().column(0).into_owned(), tape))
    }

    /// Forward pass over the columns of `input`. Panics on a width mismatch.
    pub fn forward_batch(&self, input: &DMatrix<f64>) -> Tape {
        assert_eq!(input.nrows(), self.input_dim(), "input width");
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let prev = activations.last().unwrap();
            let mut z = DMatrix::zeros(layer.out_dim(), prev.ncols());
            z.gemm(1.0, &layer.weight, prev, 0.0);
            for mut col in z.column_iter_mut() {
                col += &layer.bias;
            }
            if i != last {
                z.apply(|v| *v = v.tanh());
            }
            activations.push(z);
        }
        Tape { activations }
    }

    /// Reverse pass. `d_output` is `out × k`; when the tape holds one input
    /// and `k > 1`, every column is treated as a separate seed at that input.
    /// Parameter gradients are accumulated into `grads` when given.
    /// Returns the gradient with respect to the input (`in × k`).
    pub fn backward(&self, tape: &Tape, d_output: &DMatrix<f64>, mut grads: Option<&mut MlpGrads>) -> DMatrix<f64> {
        let broadcast = tape.batch_size() == 1 && d_output.ncols() != 1;
        assert!(broadcast || d_output.ncols() == tape.batch_size(), "seed count");
        assert!(!(broadcast && grads.is_some()), "parameter gradients need one seed per input");
        let last = self.layers.len() - 1;
        let mut delta = d_output.clone();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if i != last {
                let a = &tape.activations[i + 1];
                for (j, mut col) in delta.column_iter_mut().enumerate() {
                    let a_col = a.column(if broadcast { 0 } else { j });
                    col.zip_apply(&a_col, |d, a| *d *= 1.0 - a * a);
                }
            }
            if let Some(g) = grads.as_deref_mut() {
                g.weight[i].gemm(1.0, &delta, &tape.activations[i].transpose(), 1.0);
                for col in delta.column_iter() {
                    g.bias[i] += col;
                }
            }
            let mut prev = DMatrix::zeros(layer.in_dim(), delta.ncols());
            prev.gemm_tr(1.0, &layer.weight, &delta, 0.0);
            delta = prev;
        }
        delta
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::InvalidArgument(format!("invalid layer sizes {sizes:?}")));
    }
    Ok(())
}
