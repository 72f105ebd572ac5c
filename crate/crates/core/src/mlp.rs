use serde::{Deserialize, Serialize};

use crate::error::{check_finite_input, Error, Result};
use crate::linalg::{affine, Matrix};
use crate::provenance::LayerTags;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

/// An affine layer `x ↦ σ(W·x + B)`, optionally carrying provenance tags from a
/// conversion.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpLayer {
    weight: Matrix,
    bias: Vec<f64>,
    activation: Activation,
    tags: Option<LayerTags>,
}

impl MlpLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::invalid(
                "mlp layer",
                format!("bias length {} must equal weight row count {}", bias.len(), weight.rows()),
            ));
        }
        if weight.data().iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::invalid("mlp layer", "weights and biases must be finite"));
        }
        Ok(MlpLayer {
            weight,
            bias,
            activation,
            tags: None,
        })
    }

    pub fn with_tags(mut self, tags: LayerTags) -> Result<Self> {
        if tags.weight.len() != self.weight.rows() * self.weight.cols() || tags.bias.len() != self.bias.len() {
            return Err(Error::invalid("mlp layer", "provenance tags must match the layer shape"));
        }
        self.tags = Some(tags);
        Ok(self)
    }

    pub fn without_tags(mut self) -> Self {
        self.tags = None;
        self
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn tags(&self) -> Option<&LayerTags> {
        self.tags.as_ref()
    }

    pub fn n_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn n_out(&self) -> usize {
        self.weight.rows()
    }

    pub(crate) fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = affine(&self.weight, &self.bias, x);
        if self.activation == Activation::Relu {
            for v in &mut y {
                *v = v.max(0.0);
            }
        }
        y
    }
}

/// A feedforward network: ReLU on every layer but the last, which is affine.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<MlpLayer>,
}

impl Mlp {
    pub fn new(layers: Vec<MlpLayer>) -> Result<Self> {
        let Some(last) = layers.last() else {
            return Err(Error::invalid("mlp", "an mlp needs at least one layer"));
        };
        if last.activation != Activation::Identity {
            return Err(Error::invalid("mlp", "output layer must use the identity activation"));
        }
        if let Some(i) = layers[..layers.len() - 1]
            .iter()
            .position(|l| l.activation != Activation::Relu)
        {
            return Err(Error::invalid("mlp", format!("hidden layer {i} must use the relu activation")));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].n_out() != w[1].n_in() {
                return Err(Error::invalid(
                    "mlp",
                    format!(
                        "layer {i} outputs {} values but layer {} expects {}",
                        w[0].n_out(),
                        i + 1,
                        w[1].n_in()
                    ),
                ));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[MlpLayer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().n_out()
    }

    /// Widths of the relu layers, i.e. every layer output except the last.
    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1].iter().map(MlpLayer::n_out).collect()
    }

    pub fn max_hidden_width(&self) -> usize {
        self.hidden_widths().into_iter().max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::shape("mlp input", self.input_dim(), x.len()));
        }
        check_finite_input(x)?;
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer.apply(&h);
        }
        Ok(h)
    }

    pub fn without_tags(self) -> Self {
        Mlp {
            layers: self.layers.into_iter().map(MlpLayer::without_tags).collect(),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn abs_mlp() -> Mlp {
        Mlp::new(vec![
            MlpLayer::new(Matrix::from_rows(vec![vec![1.0], vec![-1.0]]).unwrap(), vec![0.0, 0.0], Activation::Relu)
                .unwrap(),
            MlpLayer::new(Matrix::from_rows(vec![vec![1.0, 1.0]]).unwrap(), vec![0.0], Activation::Identity).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn relu_pair_is_abs() {
        assert_eq!(abs_mlp().eval(&[-3.0]).unwrap(), vec![3.0]);
        assert_eq!(abs_mlp().eval(&[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn single_affine_layer() {
        let m = Mlp::new(vec![MlpLayer::new(
            Matrix::from_rows(vec![vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap(),
            vec![1.0, 1.0],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        assert_eq!(m.eval(&[1.0, 1.0]).unwrap(), vec![3.0, 3.0]);
        assert!(m.hidden_widths().is_empty());
    }

    #[test]
    fn output_convention_enforced() {
        let relu_out = MlpLayer::new(Matrix::from_rows(vec![vec![1.0]]).unwrap(), vec![0.0], Activation::Relu).unwrap();
        assert!(Mlp::new(vec![relu_out]).is_err());
        let id = MlpLayer::new(Matrix::from_rows(vec![vec![1.0]]).unwrap(), vec![0.0], Activation::Identity).unwrap();
        assert!(Mlp::new(vec![id.clone(), id]).is_err());
        assert!(MlpLayer::new(Matrix::from_rows(vec![vec![1.0]]).unwrap(), vec![0.0, 1.0], Activation::Relu).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(abs_mlp().eval(&[1.0, 2.0]), Err(Error::Shape { .. })));
    }
}
