//! Conversions between piecewise linear KANs and ReLU networks.
//!
//! A single activation `φ` with slopes `a_1…a_n`, breakpoints `b_1…b_{n−1}` and
//! first-segment intercept `c` is lowered to one hidden ReLU layer:
//!
//! ```text
//! φ(x) = a_1·x + c + Σ_i (a_{i+1} − a_i)·relu(x − b_i)
//! ```
//!
//! The `a_1·x` term needs care. [`ConversionMode::Paper`] feeds it through a single
//! `relu(x)` unit, which is only correct for `x ≥ 0`. [`ConversionMode::Exact`] uses
//! the identity pair `relu(x) − relu(−x) = x` instead, shared per input coordinate
//! across all activations of a layer, and is correct on all of ℝⁿ.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite_input, Error, Result};
use crate::kan::{Kan, KanLayer};
use crate::linalg::{affine, Matrix};
use crate::mlp::{Activation, Mlp, MlpLayer};
use crate::piecewise::PiecewiseLinear;
use crate::provenance::{product_tag, sum_tag, LayerTags, ParamId, ParamKind, Tag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConversionMode {
    Exact,
    Paper,
}

impl std::fmt::Display for ConversionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ConversionMode::Exact => "exact",
            ConversionMode::Paper => "paper",
        })
    }
}

impl std::str::FromStr for ConversionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ConversionMode::Exact),
            "paper" => Ok(ConversionMode::Paper),
            other => Err(Error::invalid("conversion mode", format!("unknown mode `{other}`"))),
        }
    }
}

/// Where a converted block is guaranteed to agree with its source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    /// Every point of ℝⁿ.
    Everywhere,
    /// Points whose coordinates are all non-negative.
    NonNegativeInputs,
}

impl ConversionMode {
    pub fn validity(self) -> Validity {
        match self {
            ConversionMode::Exact => Validity::Everywhere,
            ConversionMode::Paper => Validity::NonNegativeInputs,
        }
    }
}

/// `x ↦ w2·relu(w1·x + b1) + b2`, with a provenance tag for every entry.
#[derive(Clone, Debug, PartialEq)]
pub struct ReluBlock {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub w1_tags: Vec<Tag>,
    pub b1_tags: Vec<Tag>,
    pub w2_tags: Vec<Tag>,
    pub b2_tags: Vec<Tag>,
    pub validity: Validity,
}

impl ReluBlock {
    pub fn n_in(&self) -> usize {
        self.w1.cols()
    }

    pub fn n_out(&self) -> usize {
        self.w2.rows()
    }

    pub fn hidden_width(&self) -> usize {
        self.w1.rows()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_in() {
            return Err(Error::shape("relu block input", self.n_in(), x.len()));
        }
        check_finite_input(x)?;
        let mut h = affine(&self.w1, &self.b1, x);
        for v in &mut h {
            *v = v.max(0.0);
        }
        Ok(affine(&self.w2, &self.b2, &h))
    }

    pub fn first_layer(&self) -> (Matrix, Vec<f64>, LayerTags) {
        (
            self.w1.clone(),
            self.b1.clone(),
            LayerTags {
                weight: self.w1_tags.clone(),
                bias: self.b1_tags.clone(),
            },
        )
    }
}

/// Lowers one activation to a one-hidden-layer ReLU block.
///
/// Exact mode has hidden pre-activations `(x, −x, x − b_1, …)` and width
/// `segments + 1`; paper mode has `(x, x − b_1, …)` and width `segments`.
pub fn pl_to_relu_unit(f: &PiecewiseLinear, mode: ConversionMode) -> ReluBlock {
    let layer = KanLayer::new(1, 1, vec![f.clone()]).expect("1×1 layer");
    layer_block(&layer, 0, mode)
}

/// Lowers a KAN layer to a one-hidden-layer ReLU block.
///
/// Hidden units are grouped by input coordinate so `w1` is block diagonal. Within
/// the group of input `p`, exact mode starts with the shared identity pair and then
/// lists each output's breakpoint units; paper mode lists, per output, the `relu(x_p)`
/// unit followed by the breakpoint units.
pub fn kan_layer_to_relu(layer: &KanLayer, mode: ConversionMode) -> ReluBlock {
    layer_block(layer, 0, mode)
}

/// Hidden width of [`kan_layer_to_relu`] without building the block.
pub fn relu_hidden_width(layer: &KanLayer, mode: ConversionMode) -> usize {
    let seg_sum: usize = layer.activations().iter().map(PiecewiseLinear::segments).sum();
    match mode {
        ConversionMode::Exact => 2 * layer.n_in() + seg_sum - layer.activations().len(),
        ConversionMode::Paper => seg_sum,
    }
}

/// One hidden unit before assembly: which input it reads, with what sign, its bias,
/// and its contribution to one output row.
struct Unit {
    input: usize,
    sign: f64,
    bias: f64,
    bias_tag: Tag,
    /// `(output row, weight, tag)`; rows not listed get a structural zero.
    outputs: Vec<(usize, f64, Tag)>,
}

fn layer_block(layer: &KanLayer, layer_idx: usize, mode: ConversionMode) -> ReluBlock {
    let (n_in, n_out) = (layer.n_in(), layer.n_out());
    let id = |q: usize, p: usize, kind: ParamKind| ParamId::new(layer_idx, q, p, kind);
    let slope_tag = |q, p, j: usize| Tag::free([id(q, p, ParamKind::Slope(j as u32))]);
    let diff_tag = |q, p, j: usize| {
        Tag::free([
            id(q, p, ParamKind::Slope(j as u32)),
            id(q, p, ParamKind::Slope(j as u32 + 1)),
        ])
    };

    let mut units = Vec::with_capacity(relu_hidden_width(layer, mode));
    for p in 0..n_in {
        if mode == ConversionMode::Exact {
            for sign in [1.0, -1.0] {
                units.push(Unit {
                    input: p,
                    sign,
                    bias: 0.0,
                    bias_tag: Tag::Structural,
                    outputs: (0..n_out)
                        .map(|q| (q, sign * layer.activation(q, p).slopes()[0] + 0.0, slope_tag(q, p, 0)))
                        .collect(),
                });
            }
        }
        for q in 0..n_out {
            let phi = layer.activation(q, p);
            if mode == ConversionMode::Paper {
                units.push(Unit {
                    input: p,
                    sign: 1.0,
                    bias: 0.0,
                    bias_tag: Tag::Structural,
                    outputs: vec![(q, phi.slopes()[0], slope_tag(q, p, 0))],
                });
            }
            for (i, &b) in phi.breakpoints().iter().enumerate() {
                units.push(Unit {
                    input: p,
                    sign: 1.0,
                    bias: -b + 0.0,
                    bias_tag: Tag::free([id(q, p, ParamKind::Breakpoint(i as u32))]),
                    outputs: vec![(q, phi.slopes()[i + 1] - phi.slopes()[i], diff_tag(q, p, i))],
                });
            }
        }
    }

    let hidden = units.len();
    let mut w1 = Matrix::zeros(hidden, n_in);
    let w1_tags = vec![Tag::Structural; hidden * n_in];
    let mut b1 = Vec::with_capacity(hidden);
    let mut b1_tags = Vec::with_capacity(hidden);
    let mut w2 = Matrix::zeros(n_out, hidden);
    let mut w2_tags = vec![Tag::Structural; n_out * hidden];
    for (h, unit) in units.into_iter().enumerate() {
        w1.set(h, unit.input, unit.sign);
        b1.push(unit.bias);
        b1_tags.push(unit.bias_tag);
        for (q, w, tag) in unit.outputs {
            w2.set(q, h, w);
            w2_tags[q * hidden + h] = tag;
        }
    }
    let b2 = (0..n_out)
        .map(|q| layer.row(q).iter().fold(0.0, |s, phi| s + phi.intercept()))
        .collect();
    let b2_tags = (0..n_out)
        .map(|q| Tag::free((0..n_in).map(|p| id(q, p, ParamKind::Intercept))))
        .collect();

    ReluBlock {
        w1,
        b1,
        w2,
        b2,
        w1_tags,
        b1_tags,
        w2_tags,
        b2_tags,
        validity: mode.validity(),
    }
}

/// Lowers a whole KAN to an MLP with `depth + 1` affine layers.
///
/// Each KAN layer becomes a ReLU block; the output affine map of block `ℓ` and the
/// input affine map of block `ℓ + 1` are merged into one layer with weight
/// `W^{(ℓ+1,1)}·W^{(ℓ,2)}` and bias `W^{(ℓ+1,1)}·B^{(ℓ,2)} + B^{(ℓ+1,1)}`.
pub fn kan_to_mlp(kan: &Kan, mode: ConversionMode) -> Mlp {
    let blocks: Vec<ReluBlock> = kan
        .layers()
        .iter()
        .enumerate()
        .map(|(i, l)| layer_block(l, i, mode))
        .collect();

    let mut layers = Vec::with_capacity(blocks.len() + 1);
    let (w, b, tags) = blocks[0].first_layer();
    layers.push(tagged_layer(w, b, Activation::Relu, tags));
    for pair in blocks.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let (w, b, tags) = merge_affine(next, prev);
        layers.push(tagged_layer(w, b, Activation::Relu, tags));
    }
    let last = blocks.last().unwrap();
    layers.push(tagged_layer(
        last.w2.clone(),
        last.b2.clone(),
        Activation::Identity,
        LayerTags {
            weight: last.w2_tags.clone(),
            bias: last.b2_tags.clone(),
        },
    ));
    Mlp::new(layers).expect("converted layers chain by construction")
}

fn tagged_layer(w: Matrix, b: Vec<f64>, act: Activation, tags: LayerTags) -> MlpLayer {
    MlpLayer::new(w, b, act)
        .and_then(|l| l.with_tags(tags))
        .expect("converted layer is well formed")
}

/// Combines `next.w1 · (prev.w2 · h + prev.b2) + next.b1`.
fn merge_affine(next: &ReluBlock, prev: &ReluBlock) -> (Matrix, Vec<f64>, LayerTags) {
    let (rows, mid, cols) = (next.w1.rows(), next.w1.cols(), prev.w2.cols());
    let weight = next.w1.matmul(&prev.w2);
    let mut weight_tags = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            weight_tags.push(product_tag((0..mid).map(|k| {
                (
                    (&next.w1_tags[i * mid + k], next.w1.get(i, k)),
                    (&prev.w2_tags[k * cols + j], prev.w2.get(k, j)),
                )
            })));
        }
    }
    let bias = affine(&next.w1, &next.b1, &prev.b2);
    let bias_tags = (0..rows)
        .map(|i| {
            let carried = product_tag(
                (0..mid).map(|k| ((&next.w1_tags[i * mid + k], next.w1.get(i, k)), (&prev.b2_tags[k], prev.b2[k]))),
            );
            sum_tag(&carried, &next.b1_tags[i])
        })
        .collect();
    (
        weight,
        bias,
        LayerTags {
            weight: weight_tags,
            bias: bias_tags,
        },
    )
}

/// Lifts an MLP to a KAN with the same number of layers.
///
/// Layer 0 activations are `x ↦ W_{q,p}·x` (one segment), later layers are
/// `s ↦ W_{q,p}·relu(s)` (two segments, breakpoint 0). The full bias `B_q` rides on
/// the activation reading input 0.
pub fn mlp_to_kan(mlp: &Mlp) -> Kan {
    let layers = mlp
        .layers()
        .iter()
        .enumerate()
        .map(|(l, layer)| {
            let w = layer.weight();
            let acts = (0..layer.n_out())
                .flat_map(|q| {
                    (0..layer.n_in()).map(move |p| {
                        let offset = if p == 0 { layer.bias()[q] } else { 0.0 };
                        if l == 0 {
                            PiecewiseLinear::affine(w.get(q, p), offset)
                        } else {
                            PiecewiseLinear::scaled_relu(w.get(q, p), offset)
                        }
                    })
                })
                .collect();
            KanLayer::new(layer.n_in(), layer.n_out(), acts).expect("mlp layer shape is a valid grid")
        })
        .collect();
    Kan::new(layers).expect("mlp layers chain")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f_star() -> PiecewiseLinear {
        PiecewiseLinear::new(vec![-1.0, 1.0], vec![1.0, 2.0, 0.5], 0.0).unwrap()
    }

    fn single(f: PiecewiseLinear) -> Kan {
        Kan::new(vec![KanLayer::new(1, 1, vec![f]).unwrap()]).unwrap()
    }

    #[test]
    fn exact_unit_for_f_star() {
        let block = pl_to_relu_unit(&f_star(), ConversionMode::Exact);
        assert_eq!(block.hidden_width(), 4);
        assert_eq!(block.w1.data(), &[1.0, -1.0, 1.0, 1.0]);
        assert_eq!(block.b1, vec![0.0, 0.0, 1.0, -1.0]);
        // relu(x) − relu(−x) + relu(x+1) − 1.5·relu(x−1)
        assert_eq!(block.w2.data(), &[1.0, -1.0, 1.0, -1.5]);
        assert_eq!(block.b2, vec![0.0]);
        for (x, y) in [(-2.0, -2.0), (0.0, 1.0), (2.0, 3.5)] {
            assert_eq!(block.eval(&[x]).unwrap(), vec![y]);
        }
        assert_eq!(block.validity, Validity::Everywhere);
    }

    #[test]
    fn relu_reproduces_relu() {
        let block = pl_to_relu_unit(&PiecewiseLinear::relu(), ConversionMode::Exact);
        for x in [-1.0, 0.0, 1.0] {
            assert_eq!(block.eval(&[x]).unwrap(), vec![x.max(0.0)]);
        }
    }

    #[test]
    fn paper_unit_literal_form() {
        // a_1·relu(x) + (a_2 − a_1)·relu(x − b_1) + (a_3 − a_2)·relu(x − b_2) + c
        let f = PiecewiseLinear::new(vec![0.5, 2.0], vec![0.25, -1.0, 3.0], 0.75).unwrap();
        let block = pl_to_relu_unit(&f, ConversionMode::Paper);
        assert_eq!(block.hidden_width(), 3);
        assert_eq!(block.w1.data(), &[1.0, 1.0, 1.0]);
        assert_eq!(block.b1, vec![0.0, -0.5, -2.0]);
        assert_eq!(block.w2.data(), &[0.25, -1.25, 4.0]);
        assert_eq!(block.b2, vec![0.75]);
        assert_eq!(block.validity, Validity::NonNegativeInputs);
        for x in [0.0, 0.3, 1.0, 2.0, 7.5] {
            assert!((block.eval(&[x]).unwrap()[0] - f.value(x)).abs() <= 1e-12);
        }
        // Outside the validity region the a_1·x term is lost.
        assert_eq!(block.eval(&[-2.0]).unwrap(), vec![0.75]);
        assert_ne!(f.value(-2.0), 0.75);
    }

    #[test]
    fn provenance_of_exact_unit() {
        let block = pl_to_relu_unit(&f_star(), ConversionMode::Exact);
        assert!(block.w1_tags.iter().all(|t| *t == Tag::Structural));
        assert_eq!(block.b1_tags[0], Tag::Structural);
        assert_eq!(block.b1_tags[1], Tag::Structural);
        assert!(block.b1_tags[2..].iter().all(Tag::is_free));
        assert!(block.w2_tags.iter().all(Tag::is_free));
        assert_eq!(
            block.b2_tags[0],
            Tag::free([ParamId::new(0, 0, 0, ParamKind::Intercept)])
        );
    }

    #[test]
    fn layer_sum_map() {
        let layer = KanLayer::new(2, 1, vec![PiecewiseLinear::identity(); 2]).unwrap();
        let block = kan_layer_to_relu(&layer, ConversionMode::Exact);
        assert_eq!(block.eval(&[1.5, -0.5]).unwrap(), vec![1.0]);
    }

    #[test]
    fn layer_componentwise() {
        let layer = KanLayer::new(1, 2, vec![f_star(), PiecewiseLinear::relu()]).unwrap();
        let block = kan_layer_to_relu(&layer, ConversionMode::Exact);
        assert_eq!(block.eval(&[2.0]).unwrap(), vec![3.5, 2.0]);
    }

    #[test]
    fn layer_widths() {
        let layer = KanLayer::new(2, 2, vec![f_star(); 4]).unwrap();
        let exact = kan_layer_to_relu(&layer, ConversionMode::Exact);
        assert_eq!(exact.hidden_width(), 12);
        assert_eq!(relu_hidden_width(&layer, ConversionMode::Exact), 12);
        let paper = kan_layer_to_relu(&layer, ConversionMode::Paper);
        assert_eq!(paper.hidden_width(), 12);
        // w1 is block diagonal: every hidden unit reads exactly one coordinate.
        for h in 0..exact.hidden_width() {
            assert_eq!(exact.w1.row(h).iter().filter(|v| **v != 0.0).count(), 1);
        }
    }

    #[test]
    fn kan_to_mlp_f_star() {
        let mlp = kan_to_mlp(&single(f_star()), ConversionMode::Exact);
        assert_eq!(mlp.depth(), 2);
        for (x, y) in [(-2.0, -2.0), (0.0, 1.0), (2.0, 3.5)] {
            assert_eq!(mlp.eval(&[x]).unwrap(), vec![y]);
        }
    }

    #[test]
    fn identity_kan_to_identity_mlp() {
        let id = |_| {
            KanLayer::from_rows(vec![
                vec![PiecewiseLinear::identity(), PiecewiseLinear::zero()],
                vec![PiecewiseLinear::zero(), PiecewiseLinear::identity()],
            ])
            .unwrap()
        };
        let kan = Kan::new((0..2).map(id).collect()).unwrap();
        let mlp = kan_to_mlp(&kan, ConversionMode::Exact);
        assert_eq!(mlp.depth(), 3);
        for x in [[0.25, -3.0], [-1.0, 0.0], [4.0, 2.5]] {
            assert_eq!(mlp.eval(&x).unwrap(), x.to_vec());
        }
    }

    #[test]
    fn merged_layers_follow_product_rule() {
        let l0 = KanLayer::new(1, 2, vec![f_star(), PiecewiseLinear::relu()]).unwrap();
        let l1 = KanLayer::new(2, 1, vec![f_star(), PiecewiseLinear::affine(-0.5, 0.25)]).unwrap();
        let kan = Kan::new(vec![l0.clone(), l1.clone()]).unwrap();
        let mlp = kan_to_mlp(&kan, ConversionMode::Exact);
        let (b0, b1) = (
            kan_layer_to_relu(&l0, ConversionMode::Exact),
            kan_layer_to_relu(&l1, ConversionMode::Exact),
        );
        let merged = &mlp.layers()[1];
        assert_eq!(merged.weight(), &b1.w1.matmul(&b0.w2));
        assert_eq!(merged.bias(), affine(&b1.w1, &b1.b1, &b0.b2).as_slice());
        for x in [-3.0, -1.0, -0.2, 0.0, 0.9, 1.0, 2.5] {
            let a = kan.eval(&[x]).unwrap()[0];
            let b = mlp.eval(&[x]).unwrap()[0];
            assert!((a - b).abs() <= 1e-12, "x={x}: {a} vs {b}");
        }
    }

    #[test]
    fn abs_mlp_to_kan() {
        let mlp = crate::mlp::tests::abs_mlp();
        let kan = mlp_to_kan(&mlp);
        assert_eq!(kan.depth(), 2);
        let l0 = &kan.layers()[0];
        assert_eq!(l0.activation(0, 0), &PiecewiseLinear::affine(1.0, 0.0));
        assert_eq!(l0.activation(1, 0), &PiecewiseLinear::affine(-1.0, 0.0));
        let l1 = &kan.layers()[1];
        assert_eq!(l1.activation(0, 0), &PiecewiseLinear::relu());
        assert_eq!(l1.activation(0, 1), &PiecewiseLinear::relu());
        assert_eq!(kan.eval(&[-3.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn one_layer_with_outer_relu() {
        // relu(w·x + b) as a two-layer mlp whose second layer is the identity readout.
        let (w, b) = ([0.5, -2.0, 1.5], 0.25);
        let mlp = Mlp::new(vec![
            MlpLayer::new(Matrix::from_rows(vec![w.to_vec()]).unwrap(), vec![b], Activation::Relu).unwrap(),
            MlpLayer::new(Matrix::from_rows(vec![vec![1.0]]).unwrap(), vec![0.0], Activation::Identity).unwrap(),
        ])
        .unwrap();
        let kan = mlp_to_kan(&mlp);
        let l0 = &kan.layers()[0];
        assert_eq!(l0.activation(0, 0), &PiecewiseLinear::affine(0.5, 0.25));
        assert_eq!(l0.activation(0, 1), &PiecewiseLinear::affine(-2.0, 0.0));
        assert_eq!(l0.activation(0, 2), &PiecewiseLinear::affine(1.5, 0.0));
        let x = [1.0, -0.5, 0.75];
        assert_eq!(kan.eval(&x).unwrap(), mlp.eval(&x).unwrap());
    }

    #[test]
    fn affine_mlp_to_one_segment_kan() {
        let mlp = Mlp::new(vec![MlpLayer::new(
            Matrix::from_rows(vec![vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap(),
            vec![1.0, 1.0],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        let kan = mlp_to_kan(&mlp);
        assert_eq!(kan.depth(), 1);
        assert_eq!(kan.max_segments(), 1);
        assert_eq!(kan.eval(&[1.0, 1.0]).unwrap(), vec![3.0, 3.0]);
    }

    #[test]
    fn mode_parses() {
        assert_eq!("exact".parse::<ConversionMode>().unwrap(), ConversionMode::Exact);
        assert!("fast".parse::<ConversionMode>().is_err());
    }
}
