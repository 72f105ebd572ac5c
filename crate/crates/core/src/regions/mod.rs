//! Linear regions of piecewise linear networks.
//!
//! For one-dimensional input the polyhedral complex is computed exactly by pushing a
//! piecewise-affine description of every intermediate coordinate through the network,
//! splitting intervals wherever an affine piece crosses an activation breakpoint.
//! Regions are counted as maximal intervals of constant affine data.

mod grid;

pub use grid::{grid_fingerprint_2d, GridBox, RegionGrid};

use serde::{Deserialize, Serialize};

use crate::convert::ReluBlock;
use crate::error::{Error, Result};
use crate::kan::{Kan, KanLayer};
use crate::linalg::Matrix;
use crate::mlp::{Activation, Mlp};
use crate::network::Network;
use crate::piecewise::PiecewiseLinear;

/// Cut points closer than this (relative to their magnitude, floor 1) are merged.
pub const CUT_DEDUP_TOL: f64 = 1e-12;
/// Adjacent pieces whose slopes agree to this relative tolerance are merged.
pub const MERGE_REL_TOL: f64 = 1e-10;

/// Affine data of one interval: coordinate `o` equals `slopes[o]·x + intercepts[o]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinePiece {
    pub slopes: Vec<f64>,
    pub intercepts: Vec<f64>,
}

impl AffinePiece {
    pub fn eval(&self, x: f64) -> Vec<f64> {
        self.slopes.iter().zip(&self.intercepts).map(|(a, b)| a * x + b).collect()
    }

    fn same_slopes(&self, other: &AffinePiece, rel_tol: f64) -> bool {
        self.slopes
            .iter()
            .zip(&other.slopes)
            .all(|(a, b)| (a - b).abs() <= rel_tol * 1f64.max(a.abs()).max(b.abs()))
    }
}

/// Exact polyhedral complex of a map `ℝ → ℝᵐ`: `cuts.len() + 1` intervals, each with
/// its affine piece. A point on a cut belongs to the interval on its right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Complex1D {
    #[serde(rename = "cuts")]
    cut_points: Vec<f64>,
    pieces: Vec<AffinePiece>,
}

impl Complex1D {
    pub fn new(cut_points: Vec<f64>, pieces: Vec<AffinePiece>) -> Result<Self> {
        if pieces.len() != cut_points.len() + 1 {
            return Err(Error::invalid("complex", "need exactly one more piece than cut points"));
        }
        if cut_points.windows(2).any(|w| w[0] >= w[1]) || cut_points.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("complex", "cut points must be finite and strictly increasing"));
        }
        let dim = pieces[0].slopes.len();
        if pieces.iter().any(|p| p.slopes.len() != dim || p.intercepts.len() != dim) {
            return Err(Error::invalid("complex", "every piece must have the same output dimension"));
        }
        Ok(Complex1D { cut_points, pieces })
    }

    /// The identity map on ℝ.
    pub fn identity() -> Self {
        Complex1D {
            cut_points: Vec::new(),
            pieces: vec![AffinePiece {
                slopes: vec![1.0],
                intercepts: vec![0.0],
            }],
        }
    }

    pub fn cut_points(&self) -> &[f64] {
        &self.cut_points
    }

    pub fn pieces(&self) -> &[AffinePiece] {
        &self.pieces
    }

    pub fn num_regions(&self) -> usize {
        self.pieces.len()
    }

    pub fn output_dim(&self) -> usize {
        self.pieces[0].slopes.len()
    }

    pub fn piece_index(&self, x: f64) -> usize {
        self.cut_points.partition_point(|&c| c <= x)
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        self.pieces[self.piece_index(x)].eval(x)
    }

    /// Bounds of interval `i`; `None` stands for ∓∞.
    pub fn interval(&self, i: usize) -> (Option<f64>, Option<f64>) {
        let lo = i.checked_sub(1).map(|j| self.cut_points[j]);
        (lo, self.cut_points.get(i).copied())
    }

    /// A point strictly inside interval `i`.
    pub fn representative(&self, i: usize) -> f64 {
        representative(self.interval(i))
    }

    /// Largest disagreement between the left and right pieces at any cut point,
    /// relative to `1 + |value|`.
    pub fn continuity_defect(&self) -> f64 {
        self.cut_points
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| {
                let (l, r) = (self.pieces[i].eval(c), self.pieces[i + 1].eval(c));
                l.into_iter()
                    .zip(r)
                    .map(|(a, b)| (a - b).abs() / (1.0 + a.abs().max(b.abs())))
                    .collect::<Vec<_>>()
            })
            .fold(0.0, f64::max)
    }

    /// Merges adjacent pieces whose slopes agree within [`MERGE_REL_TOL`].
    pub fn normalize(&self) -> Self {
        let mut cuts = Vec::with_capacity(self.cut_points.len());
        let mut pieces = vec![self.pieces[0].clone()];
        for (c, piece) in self.cut_points.iter().zip(&self.pieces[1..]) {
            if !pieces.last().unwrap().same_slopes(piece, MERGE_REL_TOL) {
                cuts.push(*c);
                pieces.push(piece.clone());
            }
        }
        Complex1D {
            cut_points: cuts,
            pieces,
        }
    }

    /// Refines every interval by the crossings `split` reports inside it, then maps each
    /// resulting interval's affine data through `map` (given a point inside it).
    fn refine(
        &self,
        split: impl Fn(&AffinePiece, Option<f64>, Option<f64>) -> Vec<f64>,
        map: impl Fn(&AffinePiece, f64) -> AffinePiece,
    ) -> Self {
        let mut cuts = Vec::new();
        let mut pieces = Vec::new();
        for (i, piece) in self.pieces.iter().enumerate() {
            let (lo, hi) = self.interval(i);
            if let Some(lo) = lo {
                cuts.push(lo);
            }
            let mut inner: Vec<f64> = split(piece, lo, hi)
                .into_iter()
                .filter(|&x| {
                    lo.is_none_or(|l| x - l > CUT_DEDUP_TOL * 1f64.max(x.abs()))
                        && hi.is_none_or(|h| h - x > CUT_DEDUP_TOL * 1f64.max(x.abs()))
                })
                .collect();
            inner.sort_by(f64::total_cmp);
            inner.dedup_by(|b, a| (*b - *a).abs() <= CUT_DEDUP_TOL * 1f64.max(a.abs()));

            let mut bounds = Vec::with_capacity(inner.len() + 2);
            bounds.push(lo);
            bounds.extend(inner.iter().copied().map(Some));
            bounds.push(hi);
            for w in bounds.windows(2) {
                pieces.push(map(piece, representative((w[0], w[1]))));
            }
            cuts.extend(inner);
        }
        Complex1D {
            cut_points: cuts,
            pieces,
        }
    }

    fn through_kan_layer(&self, layer: &KanLayer) -> Self {
        let axis_breaks: Vec<Vec<f64>> = (0..layer.n_in())
            .map(|p| {
                let mut v: Vec<f64> = (0..layer.n_out())
                    .flat_map(|q| layer.activation(q, p).breakpoints().iter().copied())
                    .collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            })
            .collect();
        self.refine(
            |piece, lo, hi| {
                let mut xs = Vec::new();
                for (p, breaks) in axis_breaks.iter().enumerate() {
                    crossings(piece.slopes[p], piece.intercepts[p], breaks, lo, hi, &mut xs);
                }
                xs
            },
            |piece, xm| {
                let mut slopes = vec![0.0; layer.n_out()];
                let mut intercepts = vec![0.0; layer.n_out()];
                for q in 0..layer.n_out() {
                    for p in 0..layer.n_in() {
                        let (a, b) = (piece.slopes[p], piece.intercepts[p]);
                        let (s, o) = compose_segment(layer.activation(q, p), a, b, xm);
                        slopes[q] += s * a;
                        intercepts[q] += s * b + o;
                    }
                }
                AffinePiece { slopes, intercepts }
            },
        )
    }

    fn through_affine(&self, weight: &Matrix, bias: &[f64]) -> Self {
        Complex1D {
            cut_points: self.cut_points.clone(),
            pieces: self
                .pieces
                .iter()
                .map(|p| AffinePiece {
                    slopes: weight.mul_vec(&p.slopes),
                    intercepts: crate::linalg::affine(weight, bias, &p.intercepts),
                })
                .collect(),
        }
    }

    fn through_relu(&self) -> Self {
        let relu = PiecewiseLinear::relu();
        self.refine(
            |piece, lo, hi| {
                let mut xs = Vec::new();
                for (&a, &b) in piece.slopes.iter().zip(&piece.intercepts) {
                    crossings(a, b, &[0.0], lo, hi, &mut xs);
                }
                xs
            },
            |piece, xm| {
                let mut out = piece.clone();
                for (s, o) in out.slopes.iter_mut().zip(out.intercepts.iter_mut()) {
                    let (k, _) = compose_segment(&relu, *s, *o, xm);
                    *s *= k;
                    *o *= k;
                }
                out
            },
        )
    }
}

pub(crate) fn representative((lo, hi): (Option<f64>, Option<f64>)) -> f64 {
    match (lo, hi) {
        (Some(l), Some(h)) => l + (h - l) / 2.0,
        (Some(l), None) => l + 1.0,
        (None, Some(h)) => h - 1.0,
        (None, None) => 0.0,
    }
}

/// Pushes every `x` in `(lo, hi)` with `a·x + b = t` for `t` in `breaks`. A zero slope
/// never crosses: the piece sits on one side of every breakpoint.
fn crossings(a: f64, b: f64, breaks: &[f64], lo: Option<f64>, hi: Option<f64>, out: &mut Vec<f64>) {
    if a == 0.0 {
        return;
    }
    for &t in breaks {
        // `+ 0.0` folds a negative zero into +0 so cut lists print canonically.
        let x = (t - b) / a + 0.0;
        if lo.is_none_or(|l| x > l) && hi.is_none_or(|h| x < h) {
            out.push(x);
        }
    }
}

/// Segment of `phi` hit by the piece `a·x + b` on an interval containing `xm` with no
/// crossing inside, as `(slope, offset)` of that segment. With `a = 0` the value is `b`
/// exactly, so a tie with a breakpoint lands on the right segment.
fn compose_segment(phi: &PiecewiseLinear, a: f64, b: f64, xm: f64) -> (f64, f64) {
    let u = if a == 0.0 { b } else { a * xm + b };
    phi.segment_affine(phi.segment_index(u))
}

/// One step of a piecewise linear network, as seen by the region extractor.
pub enum Stage<'a> {
    Kan(&'a KanLayer),
    Affine(&'a Matrix, &'a [f64]),
    Relu,
}

/// A network that can be written as a sequence of piecewise linear stages.
pub trait PiecewiseLinearNet: Network {
    fn stages(&self) -> Vec<Stage<'_>>;
}

impl PiecewiseLinearNet for Kan {
    fn stages(&self) -> Vec<Stage<'_>> {
        self.layers().iter().map(Stage::Kan).collect()
    }
}

impl PiecewiseLinearNet for Mlp {
    fn stages(&self) -> Vec<Stage<'_>> {
        let mut out = Vec::new();
        for l in self.layers() {
            out.push(Stage::Affine(l.weight(), l.bias()));
            if l.activation() == Activation::Relu {
                out.push(Stage::Relu);
            }
        }
        out
    }
}

impl PiecewiseLinearNet for ReluBlock {
    fn stages(&self) -> Vec<Stage<'_>> {
        vec![Stage::Affine(&self.w1, &self.b1), Stage::Relu, Stage::Affine(&self.w2, &self.b2)]
    }
}

/// Exact normalized polyhedral complex of a network with one input.
pub fn exact_regions_1d<N: PiecewiseLinearNet + ?Sized>(net: &N) -> Result<Complex1D> {
    if net.input_dim() != 1 {
        return Err(Error::UnsupportedDimension {
            got: net.input_dim(),
            required: 1,
        });
    }
    let mut c = Complex1D::identity();
    for stage in net.stages() {
        c = match stage {
            Stage::Kan(layer) => c.through_kan_layer(layer),
            Stage::Affine(w, b) => c.through_affine(w, b),
            Stage::Relu => c.through_relu(),
        }
        .normalize();
    }
    Ok(c)
}

/// Upper bound on the segments of `g ∘ f` when `f` has `k` and `g` has `k_prime`.
pub fn composition_segment_bound(k: usize, k_prime: usize) -> usize {
    k * k_prime
}

/// `g ∘ f` as a two-layer scalar KAN.
pub fn compose_univariate(f: &PiecewiseLinear, g: &PiecewiseLinear) -> Kan {
    Kan::new(vec![
        KanLayer::new(1, 1, vec![f.clone()]).expect("1×1"),
        KanLayer::new(1, 1, vec![g.clone()]).expect("1×1"),
    ])
    .expect("1→1→1 chains")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convert::{kan_to_mlp, ConversionMode};

    fn f_star() -> PiecewiseLinear {
        PiecewiseLinear::new(vec![-1.0, 1.0], vec![1.0, 2.0, 0.5], 0.0).unwrap()
    }

    fn kan1(f: PiecewiseLinear) -> Kan {
        Kan::new(vec![KanLayer::new(1, 1, vec![f]).unwrap()]).unwrap()
    }

    fn slopes(c: &Complex1D) -> Vec<f64> {
        c.pieces().iter().map(|p| p.slopes[0]).collect()
    }

    #[test]
    fn f_star_read_off() {
        let c = exact_regions_1d(&kan1(f_star())).unwrap();
        assert_eq!(c.num_regions(), 3);
        assert_eq!(c.cut_points(), &[-1.0, 1.0]);
        assert_eq!(slopes(&c), vec![1.0, 2.0, 0.5]);
    }

    #[test]
    fn affine_has_one_region() {
        let c = exact_regions_1d(&kan1(PiecewiseLinear::affine(-2.0, 3.0))).unwrap();
        assert_eq!(c.num_regions(), 1);
        assert_eq!(c.eval(4.0), vec![-5.0]);
    }

    #[test]
    fn f_star_after_relu() {
        let kan = compose_univariate(&PiecewiseLinear::relu(), &f_star());
        let c = exact_regions_1d(&kan).unwrap();
        assert_eq!(c.num_regions(), 3);
        assert_eq!(c.cut_points(), &[0.0, 1.0]);
        assert_eq!(slopes(&c), vec![0.0, 2.0, 0.5]);
        assert_eq!(c.eval(-3.0), vec![1.0]);
        assert!(c.num_regions() <= composition_segment_bound(2, 3));
    }

    #[test]
    fn mlp_and_kan_complexes_agree() {
        let kan = compose_univariate(&f_star(), &PiecewiseLinear::new(vec![0.0], vec![-1.0, 1.0], 0.0).unwrap());
        let mlp = kan_to_mlp(&kan, ConversionMode::Exact);
        let a = exact_regions_1d(&kan).unwrap();
        let b = exact_regions_1d(&mlp).unwrap();
        assert_eq!(a.num_regions(), b.num_regions());
        for (x, y) in a.cut_points().iter().zip(b.cut_points()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_slope_tie_goes_right() {
        // The inner map is the constant 1, exactly on the outer breakpoint.
        let inner = PiecewiseLinear::affine(0.0, 1.0);
        let outer = PiecewiseLinear::new(vec![1.0], vec![0.0, 3.0], 0.0).unwrap();
        let c = exact_regions_1d(&compose_univariate(&inner, &outer)).unwrap();
        assert_eq!(c.num_regions(), 1);
        // Right segment: 3·u − 3 at u = 1 is 0, left segment is 0 too; slope is 0 either way.
        assert_eq!(c.eval(10.0), vec![0.0]);
        assert_eq!(c.pieces()[0].slopes, vec![0.0]);
    }

    #[test]
    fn spurious_breakpoint_normalizes_away() {
        let f = PiecewiseLinear::new(vec![0.3], vec![1.0, 1.0], 0.0).unwrap();
        assert_eq!(exact_regions_1d(&kan1(f)).unwrap().num_regions(), 1);
    }

    #[test]
    fn rejects_wider_input() {
        let kan = Kan::new(vec![KanLayer::new(2, 1, vec![PiecewiseLinear::identity(); 2]).unwrap()]).unwrap();
        assert!(matches!(
            exact_regions_1d(&kan),
            Err(Error::UnsupportedDimension { got: 2, required: 1 })
        ));
    }

    #[test]
    fn complex_json_shape() {
        let c = exact_regions_1d(&kan1(PiecewiseLinear::relu())).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(
            json,
            r#"{"cuts":[0.0],"pieces":[{"slopes":[0.0],"intercepts":[0.0]},{"slopes":[1.0],"intercepts":[0.0]}]}"#
        );
    }
}
