//! Seeded random model generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::kan::{Kan, KanLayer};
use crate::linalg::Matrix;
use crate::mlp::{Activation, Mlp, MlpLayer};
use crate::piecewise::PiecewiseLinear;
use crate::spline::PolySegmentSpline;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Size limits for random networks. All maxima are inclusive.
#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    pub max_input: usize,
    pub max_width: usize,
    /// KAN layers, or affine layers for an mlp.
    pub max_depth: usize,
    pub max_segments: usize,
    /// Breakpoints are drawn from `[−breakpoint_range, breakpoint_range]`.
    pub breakpoint_range: f64,
    /// Slopes and weights are drawn from `[−value_range, value_range]`.
    pub value_range: f64,
    /// Fix the output width instead of drawing it.
    pub output_dim: Option<usize>,
    /// Give every KAN activation exactly this many segments.
    pub uniform_segments: Option<usize>,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            max_input: 4,
            max_width: 4,
            max_depth: 3,
            max_segments: 6,
            breakpoint_range: 2.0,
            value_range: 1.5,
            output_dim: None,
            uniform_segments: None,
        }
    }
}

impl CorpusSpec {
    pub fn univariate() -> Self {
        CorpusSpec {
            max_input: 1,
            ..CorpusSpec::default()
        }
    }

    fn widths(&self, rng: &mut impl Rng, layers: usize) -> Vec<usize> {
        let mut w = vec![rng.random_range(1..=self.max_input)];
        for i in 0..layers {
            let last = i + 1 == layers;
            w.push(match (last, self.output_dim) {
                (true, Some(d)) => d,
                _ => rng.random_range(1..=self.max_width),
            });
        }
        w
    }
}

fn sym(rng: &mut impl Rng, r: f64) -> f64 {
    rng.random_range(-r..=r)
}

/// Strictly increasing draws from `[−range, range]`.
fn breakpoints(rng: &mut impl Rng, n: usize, range: f64) -> Vec<f64> {
    loop {
        let mut b: Vec<f64> = (0..n).map(|_| sym(rng, range)).collect();
        b.sort_by(f64::total_cmp);
        if b.windows(2).all(|w| w[1] - w[0] > 1e-3 * range) {
            return b;
        }
    }
}

pub fn random_pl(rng: &mut impl Rng, segments: usize, spec: &CorpusSpec) -> PiecewiseLinear {
    let b = breakpoints(rng, segments - 1, spec.breakpoint_range);
    let slopes = (0..segments).map(|_| sym(rng, spec.value_range)).collect();
    let c = sym(rng, 1.0);
    PiecewiseLinear::new(b, slopes, c).expect("sorted finite data")
}

pub fn random_kan(rng: &mut impl Rng, spec: &CorpusSpec) -> Kan {
    let depth = rng.random_range(1..=spec.max_depth);
    let widths = spec.widths(rng, depth);
    let layers = widths
        .windows(2)
        .map(|w| {
            let acts = (0..w[0] * w[1])
                .map(|_| {
                    let k = spec.uniform_segments.unwrap_or_else(|| rng.random_range(1..=spec.max_segments));
                    random_pl(rng, k, spec)
                })
                .collect();
            KanLayer::new(w[0], w[1], acts).expect("grid sized from widths")
        })
        .collect();
    Kan::new(layers).expect("widths chain")
}

pub fn random_mlp(rng: &mut impl Rng, spec: &CorpusSpec) -> Mlp {
    let depth = rng.random_range(1..=spec.max_depth);
    let widths = spec.widths(rng, depth);
    let layers = widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let data = (0..w[0] * w[1]).map(|_| sym(rng, spec.value_range)).collect();
            let bias = (0..w[1]).map(|_| sym(rng, 1.0)).collect();
            let act = if i + 1 == depth { Activation::Identity } else { Activation::Relu };
            MlpLayer::new(Matrix::from_row_major(w[1], w[0], data).expect("sized"), bias, act).expect("valid layer")
        })
        .collect();
    Mlp::new(layers).expect("widths chain")
}

/// A continuous spline with `pieces` pieces of degree at most `degree` and
/// coefficients in `[−1, 1]`; each piece's constant term is adjusted for continuity.
pub fn random_spline(rng: &mut impl Rng, pieces: usize, degree: usize, range: f64) -> PolySegmentSpline {
    let b = breakpoints(rng, pieces - 1, range);
    let mut polys: Vec<Vec<f64>> = Vec::with_capacity(pieces);
    for i in 0..pieces {
        let mut p: Vec<f64> = (0..=degree).map(|_| sym(rng, 1.0)).collect();
        if i > 0 {
            let x = b[i - 1];
            let gap = crate::spline::eval_poly(&polys[i - 1], x) - crate::spline::eval_poly(&p, x);
            p[0] += gap;
        }
        polys.push(p);
    }
    PolySegmentSpline::new(b, polys, degree).expect("continuous by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn respects_limits() {
        let spec = CorpusSpec::default();
        let mut r = rng(1);
        for _ in 0..50 {
            let k = random_kan(&mut r, &spec);
            assert!(k.depth() <= 3 && k.input_dim() <= 4 && k.max_segments() <= 6);
            assert!(k.widths().iter().all(|&w| (1..=4).contains(&w)));
            let m = random_mlp(&mut r, &spec);
            assert!(m.depth() <= 3 && m.input_dim() <= 4);
        }
    }

    #[test]
    fn seeded() {
        let spec = CorpusSpec::default();
        assert_eq!(random_kan(&mut rng(9), &spec), random_kan(&mut rng(9), &spec));
    }

    #[test]
    fn splines_are_continuous() {
        let mut r = rng(3);
        for _ in 0..50 {
            let s = random_spline(&mut r, 4, 3, 2.0);
            assert_eq!(s.segments(), 4);
        }
    }
}
