use crate::error::{check_finite_input, Error, Result};
use crate::piecewise::PiecewiseLinear;

/// One KAN layer: an `n_out × n_in` grid of activations, output `q` being
/// `Σ_p φ_{q,p}(x_p)` summed in ascending `p`.
#[derive(Clone, Debug, PartialEq)]
pub struct KanLayer {
    n_in: usize,
    n_out: usize,
    /// Row-major: `activations[q * n_in + p]`.
    activations: Vec<PiecewiseLinear>,
}

impl KanLayer {
    pub fn new(n_in: usize, n_out: usize, activations: Vec<PiecewiseLinear>) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::invalid("kan layer", "layer widths must be positive"));
        }
        if activations.len() != n_in * n_out {
            return Err(Error::invalid(
                "kan layer",
                format!(
                    "activation grid must be n_out × n_in = {n_out} × {n_in}, got {} activations",
                    activations.len()
                ),
            ));
        }
        Ok(KanLayer {
            n_in,
            n_out,
            activations,
        })
    }

    /// Builds a layer from `n_out` rows of `n_in` activations each.
    pub fn from_rows(rows: Vec<Vec<PiecewiseLinear>>) -> Result<Self> {
        let n_out = rows.len();
        let n_in = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != n_in) {
            return Err(Error::invalid("kan layer", "activation rows must all have n_in entries"));
        }
        KanLayer::new(n_in, n_out, rows.into_iter().flatten().collect())
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    /// Activation reading input `p` and feeding output `q`.
    pub fn activation(&self, q: usize, p: usize) -> &PiecewiseLinear {
        &self.activations[q * self.n_in + p]
    }

    pub fn activations(&self) -> &[PiecewiseLinear] {
        &self.activations
    }

    pub fn row(&self, q: usize) -> &[PiecewiseLinear] {
        &self.activations[q * self.n_in..(q + 1) * self.n_in]
    }

    pub fn max_segments(&self) -> usize {
        self.activations.iter().map(PiecewiseLinear::segments).max().unwrap_or(1)
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_in {
            return Err(Error::shape("kan layer input", self.n_in, x.len()));
        }
        check_finite_input(x)?;
        Ok(self.apply(x))
    }

    pub(crate) fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|q| {
                self.row(q)
                    .iter()
                    .zip(x)
                    .fold(0.0, |acc, (phi, &xp)| acc + phi.value(xp))
            })
            .collect()
    }
}

/// A composition of KAN layers applied left to right.
#[derive(Clone, Debug, PartialEq)]
pub struct Kan {
    layers: Vec<KanLayer>,
}

impl Kan {
    pub fn new(layers: Vec<KanLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("kan", "a KAN needs at least one layer"));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].n_out != w[1].n_in {
                return Err(Error::invalid(
                    "kan",
                    format!(
                        "layer {i} has n_out = {} but layer {} has n_in = {}",
                        w[0].n_out,
                        i + 1,
                        w[1].n_in
                    ),
                ));
            }
        }
        Ok(Kan { layers })
    }

    pub fn layers(&self) -> &[KanLayer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().n_out
    }

    /// `[n_0, n_1, …, n_L]`, input width first and output width last.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(KanLayer::n_out))
            .collect()
    }

    pub fn num_activations(&self) -> usize {
        self.layers.iter().map(|l| l.n_in * l.n_out).sum()
    }

    pub fn max_segments(&self) -> usize {
        self.layers.iter().map(KanLayer::max_segments).max().unwrap_or(1)
    }

    /// `Some(k)` when every activation has exactly `k` segments.
    pub fn uniform_segments(&self) -> Option<usize> {
        let mut all = self.layers.iter().flat_map(|l| l.activations.iter().map(PiecewiseLinear::segments));
        let first = all.next()?;
        all.all(|s| s == first).then_some(first)
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::shape("kan input", self.input_dim(), x.len()));
        }
        check_finite_input(x)?;
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer.apply(&h);
        }
        Ok(h)
    }
}
