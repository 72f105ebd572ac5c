use crate::convert::ReluBlock;
use crate::error::Result;
use crate::kan::Kan;
use crate::mlp::Mlp;
use crate::piecewise::PiecewiseLinear;

/// Anything that maps `ℝⁿ → ℝᵐ` and can be checked for equivalence.
pub trait Network: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// First-layer breakpoint coordinates, one list per input axis. Used to place
    /// probes right next to the kinks a sampler would otherwise step over.
    fn axis_breakpoints(&self) -> Vec<Vec<f64>> {
        vec![Vec::new(); self.input_dim()]
    }
}

fn sorted_dedup(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

impl Network for PiecewiseLinear {
    fn input_dim(&self) -> usize {
        1
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != 1 {
            return Err(crate::Error::shape("piecewise linear input", 1, x.len()));
        }
        Ok(vec![PiecewiseLinear::eval(self, x[0])?])
    }

    fn axis_breakpoints(&self) -> Vec<Vec<f64>> {
        vec![self.breakpoints().to_vec()]
    }
}

impl Network for Kan {
    fn input_dim(&self) -> usize {
        Kan::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        Kan::output_dim(self)
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Kan::eval(self, x)
    }

    fn axis_breakpoints(&self) -> Vec<Vec<f64>> {
        let first = &self.layers()[0];
        (0..first.n_in())
            .map(|p| {
                sorted_dedup(
                    (0..first.n_out())
                        .flat_map(|q| first.activation(q, p).breakpoints().iter().copied())
                        .collect(),
                )
            })
            .collect()
    }
}

/// Hidden units reading a single input coordinate define an axis-aligned kink at
/// `x_p = −b / w`; rows mixing several inputs have no axis breakpoint.
pub(crate) fn axis_kinks(weight: &crate::linalg::Matrix, bias: &[f64]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(); weight.cols()];
    for (r, b) in bias.iter().enumerate() {
        let row = weight.row(r);
        let mut nz = row.iter().enumerate().filter(|(_, w)| **w != 0.0);
        if let (Some((p, &w)), None) = (nz.next(), nz.next()) {
            out[p].push(-b / w);
        }
    }
    out.into_iter().map(sorted_dedup).collect()
}

impl Network for Mlp {
    fn input_dim(&self) -> usize {
        Mlp::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        Mlp::output_dim(self)
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Mlp::eval(self, x)
    }

    fn axis_breakpoints(&self) -> Vec<Vec<f64>> {
        let first = &self.layers()[0];
        if self.depth() == 1 {
            return vec![Vec::new(); first.n_in()];
        }
        axis_kinks(first.weight(), first.bias())
    }
}

impl Network for ReluBlock {
    fn input_dim(&self) -> usize {
        self.n_in()
    }

    fn output_dim(&self) -> usize {
        self.n_out()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        ReluBlock::eval(self, x)
    }

    fn axis_breakpoints(&self) -> Vec<Vec<f64>> {
        axis_kinks(&self.w1, &self.b1)
    }
}
