use super::poly::{shift_poly, PolySegmentSpline, SplineKan, SplineKanLayer, MAX_DEGREE};
use crate::error::{check_finite_input, Error, Result};
use crate::linalg::{affine, Matrix};
use crate::mlp::Mlp;
use crate::network::{axis_kinks, Network};

/// One affine → relu → monomial stage.
///
/// Each row of `weight` feeds an `(r+1)`-group: the relu'd value `y` is emitted as
/// `(1, y, y², …, yʳ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MonomialReluBlock {
    weight: Matrix,
    bias: Vec<f64>,
    degree: usize,
}

impl MonomialReluBlock {
    pub fn new(weight: Matrix, bias: Vec<f64>, degree: usize) -> Result<Self> {
        check_degree(degree)?;
        if bias.len() != weight.rows() {
            return Err(Error::shape("monomial block bias", weight.rows(), bias.len()));
        }
        if weight.data().iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::invalid("monomial relu block", "weights and biases must be finite"));
        }
        Ok(MonomialReluBlock { weight, bias, degree })
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn groups(&self) -> usize {
        self.weight.rows()
    }

    pub fn n_in(&self) -> usize {
        self.weight.cols()
    }

    pub fn n_out(&self) -> usize {
        self.groups() * (self.degree + 1)
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let z = affine(&self.weight, &self.bias, x);
        let mut out = Vec::with_capacity(self.n_out());
        for v in z {
            let y = v.max(0.0);
            let mut p = 1.0;
            for _ in 0..=self.degree {
                out.push(p);
                p *= y;
            }
        }
        out
    }
}

fn check_degree(r: usize) -> Result<()> {
    if r == 0 || r > MAX_DEGREE {
        return Err(Error::invalid(
            "monomial relu network",
            format!("degree must be between 1 and {MAX_DEGREE}, got {r}"),
        ));
    }
    Ok(())
}

/// A stack of [`MonomialReluBlock`]s followed by an affine read-out.
#[derive(Clone, Debug, PartialEq)]
pub struct MonomialReluNetwork {
    input_dim: usize,
    degree: usize,
    blocks: Vec<MonomialReluBlock>,
    readout_weight: Matrix,
    readout_bias: Vec<f64>,
}

impl MonomialReluNetwork {
    pub fn new(
        input_dim: usize,
        degree: usize,
        blocks: Vec<MonomialReluBlock>,
        readout_weight: Matrix,
        readout_bias: Vec<f64>,
    ) -> Result<Self> {
        const WHAT: &str = "monomial relu network";
        check_degree(degree)?;
        if input_dim == 0 {
            return Err(Error::invalid(WHAT, "input dimension must be positive"));
        }
        let mut width = input_dim;
        for (i, b) in blocks.iter().enumerate() {
            if b.degree != degree {
                return Err(Error::invalid(WHAT, format!("block {i} has degree {} instead of {degree}", b.degree)));
            }
            if b.n_in() != width {
                return Err(Error::invalid(WHAT, format!("block {i} expects {} inputs, gets {width}", b.n_in())));
            }
            width = b.n_out();
        }
        if readout_weight.cols() != width {
            return Err(Error::invalid(
                WHAT,
                format!("read-out expects {} inputs, gets {width}", readout_weight.cols()),
            ));
        }
        if readout_bias.len() != readout_weight.rows() {
            return Err(Error::shape("monomial read-out bias", readout_weight.rows(), readout_bias.len()));
        }
        if readout_weight.data().iter().chain(&readout_bias).any(|v| !v.is_finite()) {
            return Err(Error::invalid(WHAT, "read-out weights and biases must be finite"));
        }
        Ok(MonomialReluNetwork {
            input_dim,
            degree,
            blocks,
            readout_weight,
            readout_bias,
        })
    }

    /// Re-expresses a ReLU MLP with degree-1 blocks: group `g` emits `(1, relu(z_g))`.
    pub fn from_relu_mlp(mlp: &Mlp) -> Self {
        let layers = mlp.layers();
        let mut blocks = Vec::new();
        let mut prev_groups: Option<usize> = None;
        for layer in &layers[..layers.len() - 1] {
            let weight = match prev_groups {
                None => layer.weight().clone(),
                Some(g) => spread_columns(layer.weight(), g),
            };
            prev_groups = Some(layer.n_out());
            blocks.push(MonomialReluBlock::new(weight, layer.bias().to_vec(), 1).expect("mlp layers are valid"));
        }
        let last = layers.last().unwrap();
        let readout = match prev_groups {
            None => last.weight().clone(),
            Some(g) => spread_columns(last.weight(), g),
        };
        MonomialReluNetwork::new(mlp.input_dim(), 1, blocks, readout, last.bias().to_vec())
            .expect("widths chain by construction")
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.readout_weight.rows()
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn blocks(&self) -> &[MonomialReluBlock] {
        &self.blocks
    }

    pub fn readout_weight(&self) -> &Matrix {
        &self.readout_weight
    }

    pub fn readout_bias(&self) -> &[f64] {
        &self.readout_bias
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::shape("monomial relu input", self.input_dim, x.len()));
        }
        check_finite_input(x)?;
        let mut h = x.to_vec();
        for b in &self.blocks {
            h = b.apply(&h);
        }
        Ok(affine(&self.readout_weight, &self.readout_bias, &h))
    }
}

/// Maps a weight acting on `g` relu values onto the `(1, y)` layout of `g` degree-1 groups.
fn spread_columns(w: &Matrix, g: usize) -> Matrix {
    let mut out = Matrix::zeros(w.rows(), 2 * g);
    for r in 0..w.rows() {
        for c in 0..g {
            out.set(r, 2 * c + 1, w.get(r, c));
        }
    }
    out
}

impl Network for MonomialReluNetwork {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        MonomialReluNetwork::output_dim(self)
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        MonomialReluNetwork::eval(self, x)
    }

    fn axis_breakpoints(&self) -> Vec<Vec<f64>> {
        match self.blocks.first() {
            Some(b) => axis_kinks(&b.weight, &b.bias),
            None => vec![Vec::new(); self.input_dim],
        }
    }
}

/// Pre-activation rows and read-out for one spline KAN layer.
struct Lowered {
    pre_weight: Matrix,
    pre_bias: Vec<f64>,
    readout: Matrix,
}

fn padded(coeffs: &[f64], r: usize) -> Vec<f64> {
    let mut v = coeffs.to_vec();
    v.resize(r + 1, 0.0);
    v
}

fn lower_layer(layer: &SplineKanLayer, r: usize) -> Lowered {
    let (n_in, n_out) = (layer.n_in(), layer.n_out());
    // Group rows: (input p, sign, offset) and the read-out coefficients per output.
    let mut rows: Vec<(usize, f64, f64)> = Vec::new();
    let mut coeffs: Vec<Vec<(usize, Vec<f64>)>> = Vec::new();
    for p in 0..n_in {
        // P_1(relu(x)) for every output reading x_p.
        rows.push((p, 1.0, 0.0));
        coeffs.push((0..n_out).map(|q| (q, padded(&layer.activation(q, p).pieces()[0], r))).collect());
        // P_1(−relu(−x)) − P_1(0): sign-corrected coefficients, no constant term.
        rows.push((p, -1.0, 0.0));
        coeffs.push(
            (0..n_out)
                .map(|q| {
                    let mut c = padded(&layer.activation(q, p).pieces()[0], r);
                    c[0] = 0.0;
                    for (j, v) in c.iter_mut().enumerate().skip(1) {
                        if j % 2 == 1 {
                            *v = -*v + 0.0;
                        }
                    }
                    (q, c)
                })
                .collect(),
        );
        for q in 0..n_out {
            let s = layer.activation(q, p);
            for (i, &b) in s.breakpoints().iter().enumerate() {
                let hi = shift_poly(&padded(&s.pieces()[i + 1], r), b);
                let lo = shift_poly(&padded(&s.pieces()[i], r), b);
                let diff = hi.iter().zip(&lo).map(|(h, l)| h - l).collect();
                rows.push((p, 1.0, -b + 0.0));
                coeffs.push(vec![(q, diff)]);
            }
        }
    }
    let groups = rows.len();
    let mut pre_weight = Matrix::zeros(groups, n_in);
    let mut pre_bias = vec![0.0; groups];
    let mut readout = Matrix::zeros(n_out, groups * (r + 1));
    for (g, ((p, w, b), cs)) in rows.into_iter().zip(coeffs).enumerate() {
        pre_weight.set(g, p, w);
        pre_bias[g] = b;
        for (q, c) in cs {
            for (j, v) in c.into_iter().enumerate() {
                readout.set(q, g * (r + 1) + j, v);
            }
        }
    }
    Lowered {
        pre_weight,
        pre_bias,
        readout,
    }
}

/// Lowers a spline KAN to a `(ReLU, xʳ)` network of degree `r` via the telescoping
/// decomposition, one block per KAN layer with consecutive affine maps merged.
pub fn spline_kan_to_monomial_relu(kan: &SplineKan, r: usize) -> Result<MonomialReluNetwork> {
    check_degree(r)?;
    if kan.degree() > r {
        return Err(Error::invalid(
            "spline lowering",
            format!("spline degree {} exceeds the configured degree {r}", kan.degree()),
        ));
    }
    let lowered: Vec<Lowered> = kan.layers().iter().map(|l| lower_layer(l, r)).collect();
    let mut blocks = Vec::with_capacity(lowered.len());
    for (i, l) in lowered.iter().enumerate() {
        let weight = match i {
            0 => l.pre_weight.clone(),
            _ => l.pre_weight.matmul(&lowered[i - 1].readout),
        };
        blocks.push(MonomialReluBlock::new(weight, l.pre_bias.clone(), r)?);
    }
    let last = lowered.last().unwrap();
    MonomialReluNetwork::new(kan.input_dim(), r, blocks, last.readout.clone(), vec![0.0; kan.output_dim()])
}

/// Lowers a single univariate spline.
pub fn bspline_to_monomial_relu(s: &PolySegmentSpline, r: usize) -> Result<MonomialReluNetwork> {
    let kan = SplineKan::new(vec![SplineKanLayer::new(1, 1, vec![s.clone()])?])?;
    spline_kan_to_monomial_relu(&kan, r)
}

fn affine_spline(slope: f64, intercept: f64) -> PolySegmentSpline {
    PolySegmentSpline::new(Vec::new(), vec![vec![intercept, slope]], 1).expect("affine piece")
}

fn affine_kan_layer(w: &Matrix, b: &[f64]) -> SplineKanLayer {
    let mut acts = Vec::with_capacity(w.rows() * w.cols());
    for q in 0..w.rows() {
        for p in 0..w.cols() {
            acts.push(affine_spline(w.get(q, p), if p == 0 { b[q] } else { 0.0 }));
        }
    }
    SplineKanLayer::new(w.cols(), w.rows(), acts).expect("affine grid has the right size")
}

/// Lifts a `(ReLU, xʳ)` network into a spline KAN: each block becomes an affine
/// layer, a diagonal relu layer and a monomial layer; the read-out becomes an affine layer.
pub fn monomial_relu_to_spline_kan(net: &MonomialReluNetwork) -> SplineKan {
    let r = net.degree;
    let relu = PolySegmentSpline::new(vec![0.0], vec![vec![0.0], vec![0.0, 1.0]], 1).expect("relu spline");
    let mut layers = Vec::with_capacity(3 * net.blocks.len() + 1);
    for b in &net.blocks {
        let g = b.groups();
        layers.push(affine_kan_layer(&b.weight, &b.bias));
        let diag = (0..g * g)
            .map(|i| if i / g == i % g { relu.clone() } else { PolySegmentSpline::zero() })
            .collect();
        layers.push(SplineKanLayer::new(g, g, diag).expect("square grid"));
        let mut mono = Vec::with_capacity(g * (r + 1) * g);
        for row in 0..g * (r + 1) {
            let (group, j) = (row / (r + 1), row % (r + 1));
            for p in 0..g {
                mono.push(if p != group {
                    PolySegmentSpline::zero()
                } else if j == 0 {
                    PolySegmentSpline::new(Vec::new(), vec![vec![1.0]], 0).expect("constant")
                } else {
                    let mut c = vec![0.0; j + 1];
                    c[j] = 1.0;
                    PolySegmentSpline::new(Vec::new(), vec![c], j).expect("monomial")
                });
            }
        }
        layers.push(SplineKanLayer::new(g, g * (r + 1), mono).expect("grid size"));
    }
    layers.push(affine_kan_layer(&net.readout_weight, &net.readout_bias));
    SplineKan::new(layers).expect("widths chain by construction")
}
