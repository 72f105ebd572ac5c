use crate::error::{check_finite_input, Error, Result};
use crate::network::Network;
use crate::piecewise::PiecewiseLinear;

/// Highest polynomial degree accepted anywhere in the spline module.
pub const MAX_DEGREE: usize = 5;

const CONTINUITY_TOL: f64 = 1e-9;

/// `Σ_j coeffs[j]·x^j`, summed in ascending powers with `x^j` built by repeated
/// multiplication. This is the order a monomial read-out uses, so a single
/// polynomial and its lowered network agree bit for bit.
pub fn eval_poly(coeffs: &[f64], x: f64) -> f64 {
    let mut p = 1.0;
    let mut acc = 0.0;
    for c in coeffs {
        acc += c * p;
        p *= x;
    }
    acc
}

/// Coefficients of `x ↦ P(x + b)`.
pub fn shift_poly(coeffs: &[f64], b: f64) -> Vec<f64> {
    let n = coeffs.len();
    let mut out = vec![0.0; n];
    for (i, &a) in coeffs.iter().enumerate() {
        // a·(x + b)^i = a·Σ_j C(i, j)·b^{i−j}·x^j
        let mut binom = 1.0;
        for j in (0..=i).rev() {
            out[j] += a * binom * b.powi((i - j) as i32);
            binom = binom * j as f64 / (i - j + 1) as f64;
        }
    }
    out
}

/// A continuous spline stored as one monomial-basis polynomial per segment.
#[derive(Clone, Debug, PartialEq)]
pub struct PolySegmentSpline {
    breakpoints: Vec<f64>,
    pieces: Vec<Vec<f64>>,
    degree: usize,
}

impl PolySegmentSpline {
    pub fn new(breakpoints: Vec<f64>, pieces: Vec<Vec<f64>>, degree: usize) -> Result<Self> {
        const WHAT: &str = "polynomial spline";
        if degree > MAX_DEGREE {
            return Err(Error::invalid(WHAT, format!("degree {degree} exceeds the cap of {MAX_DEGREE}")));
        }
        if pieces.len() != breakpoints.len() + 1 {
            return Err(Error::invalid(WHAT, "need exactly one more piece than breakpoints"));
        }
        if let Some(i) = pieces.iter().position(|p| p.is_empty() || p.len() > degree + 1) {
            return Err(Error::invalid(
                WHAT,
                format!("piece {i} must have between 1 and degree + 1 = {} coefficients", degree + 1),
            ));
        }
        if breakpoints.iter().chain(pieces.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::invalid(WHAT, "breakpoints and coefficients must be finite"));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(WHAT, "breakpoints must be strictly increasing"));
        }
        for (i, &b) in breakpoints.iter().enumerate() {
            let (l, r) = (eval_poly(&pieces[i], b), eval_poly(&pieces[i + 1], b));
            if (l - r).abs() > CONTINUITY_TOL * 1f64.max(l.abs()).max(r.abs()) {
                return Err(Error::invalid(
                    WHAT,
                    format!("discontinuous at breakpoint {i} (x = {b}): {l} vs {r}"),
                ));
            }
        }
        Ok(PolySegmentSpline {
            breakpoints,
            pieces,
            degree,
        })
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self> {
        let degree = coeffs.len().saturating_sub(1);
        PolySegmentSpline::new(Vec::new(), vec![coeffs], degree)
    }

    pub fn zero() -> Self {
        PolySegmentSpline {
            breakpoints: Vec::new(),
            pieces: vec![vec![0.0]],
            degree: 0,
        }
    }

    pub fn from_piecewise_linear(f: &PiecewiseLinear) -> Self {
        let pieces = (0..f.segments())
            .map(|j| {
                let (s, o) = f.segment_affine(j);
                vec![o, s]
            })
            .collect();
        PolySegmentSpline::new(f.breakpoints().to_vec(), pieces, 1).expect("piecewise linear input is continuous")
    }

    /// Converts a B-spline given by its knot vector and control points to
    /// piecewise polynomial form.
    ///
    /// The knot vector needs `control_points.len() + degree + 1` non-decreasing entries.
    /// Pieces are recovered per non-empty knot span of the domain
    /// `[t_degree, t_{n}]` by interpolation at Chebyshev nodes; the first and last
    /// pieces extend beyond the domain.
    pub fn from_bspline(degree: usize, knots: &[f64], control_points: &[f64]) -> Result<Self> {
        const WHAT: &str = "b-spline";
        let n = control_points.len();
        if degree > MAX_DEGREE {
            return Err(Error::invalid(WHAT, format!("degree {degree} exceeds the cap of {MAX_DEGREE}")));
        }
        if n <= degree {
            return Err(Error::invalid(WHAT, "need more control points than the degree"));
        }
        if knots.len() != n + degree + 1 {
            return Err(Error::invalid(
                WHAT,
                format!("knot vector must have {} entries, got {}", n + degree + 1, knots.len()),
            ));
        }
        if knots.iter().chain(control_points).any(|v| !v.is_finite()) || knots.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid(WHAT, "knots must be finite and non-decreasing"));
        }
        let (lo, hi) = (knots[degree], knots[n]);
        if lo >= hi {
            return Err(Error::invalid(WHAT, "spline domain is empty"));
        }

        let mut breakpoints = Vec::new();
        let mut pieces = Vec::new();
        for span in degree..n {
            let (a, b) = (knots[span], knots[span + 1]);
            if a >= b {
                continue;
            }
            if !pieces.is_empty() {
                breakpoints.push(a);
            }
            pieces.push(interpolate_span(degree, a, b, |x| de_boor(degree, knots, control_points, span, x))?);
        }
        PolySegmentSpline::new(breakpoints, pieces, degree)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Vec<f64>] {
        &self.pieces
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn segments(&self) -> usize {
        self.pieces.len()
    }

    pub fn piece_index(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= x)
    }

    pub fn value(&self, x: f64) -> f64 {
        eval_poly(&self.pieces[self.piece_index(x)], x)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("cannot evaluate at non-finite x = {x}")));
        }
        Ok(self.value(x))
    }
}

/// Value of the B-spline at `x` using the basis functions supported on `span`.
fn de_boor(p: usize, t: &[f64], c: &[f64], span: usize, x: f64) -> f64 {
    let mut d: Vec<f64> = (0..=p).map(|j| c[j + span - p]).collect();
    for r in 1..=p {
        for j in (r..=p).rev() {
            let i = j + span - p;
            let denom = t[i + p + 1 - r] - t[i];
            let alpha = if denom == 0.0 { 0.0 } else { (x - t[i]) / denom };
            d[j] = (1.0 - alpha) * d[j - 1] + alpha * d[j];
        }
    }
    d[p]
}

/// Monomial coefficients of the degree-`p` polynomial agreeing with `f` on `[a, b]`.
fn interpolate_span(p: usize, a: f64, b: f64, f: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
    let m = p + 1;
    // Local variable s = (x − mid) / half on Chebyshev nodes in [−1, 1].
    let nodes: Vec<f64> = (0..m)
        .map(|i| if m == 1 { 0.0 } else { (std::f64::consts::PI * (2 * i + 1) as f64 / (2 * m) as f64).cos() })
        .collect();
    let mut a_mat: Vec<Vec<f64>> = nodes.iter().map(|&s| (0..m).map(|j| s.powi(j as i32)).collect()).collect();
    let mut rhs: Vec<f64> = nodes.iter().map(|&s| f(mid + half * s)).collect();
    let local = solve_dense(&mut a_mat, &mut rhs)
        .ok_or_else(|| Error::invalid("b-spline", "singular interpolation system"))?;
    // Q(s) with s = (x − mid)/half, i.e. R(x) = Q(x / half) shifted by −mid.
    let scaled: Vec<f64> = local.iter().enumerate().map(|(j, q)| q / half.powi(j as i32)).collect();
    Ok(shift_poly(&scaled, -mid))
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplineKanLayer {
    n_in: usize,
    n_out: usize,
    activations: Vec<PolySegmentSpline>,
}

impl SplineKanLayer {
    pub fn new(n_in: usize, n_out: usize, activations: Vec<PolySegmentSpline>) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::invalid("spline kan layer", "layer widths must be positive"));
        }
        if activations.len() != n_in * n_out {
            return Err(Error::invalid(
                "spline kan layer",
                format!("activation grid must be {n_out} × {n_in}, got {} activations", activations.len()),
            ));
        }
        Ok(SplineKanLayer {
            n_in,
            n_out,
            activations,
        })
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn activation(&self, q: usize, p: usize) -> &PolySegmentSpline {
        &self.activations[q * self.n_in + p]
    }

    pub fn activations(&self) -> &[PolySegmentSpline] {
        &self.activations
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|q| (0..self.n_in).fold(0.0, |acc, p| acc + self.activation(q, p).value(x[p])))
            .collect()
    }
}

/// A KAN whose activations are polynomial splines.
#[derive(Clone, Debug, PartialEq)]
pub struct SplineKan {
    layers: Vec<SplineKanLayer>,
}

impl SplineKan {
    pub fn new(layers: Vec<SplineKanLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("spline kan", "a KAN needs at least one layer"));
        }
        if layers.windows(2).any(|w| w[0].n_out != w[1].n_in) {
            return Err(Error::invalid("spline kan", "consecutive layer widths must chain"));
        }
        Ok(SplineKan { layers })
    }

    pub fn layers(&self) -> &[SplineKanLayer] {
        &self.layers
    }

    pub fn degree(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.activations.iter().map(PolySegmentSpline::degree))
            .max()
            .unwrap_or(0)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().n_out
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::shape("spline kan input", self.input_dim(), x.len()));
        }
        check_finite_input(x)?;
        let mut h = x.to_vec();
        for l in &self.layers {
            h = l.apply(&h);
        }
        Ok(h)
    }
}

impl Network for SplineKan {
    fn input_dim(&self) -> usize {
        SplineKan::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        SplineKan::output_dim(self)
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        SplineKan::eval(self, x)
    }

    fn axis_breakpoints(&self) -> Vec<Vec<f64>> {
        let first = &self.layers[0];
        (0..first.n_in)
            .map(|p| {
                let mut v: Vec<f64> = (0..first.n_out)
                    .flat_map(|q| first.activation(q, p).breakpoints().iter().copied())
                    .collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shift_examples() {
        assert_eq!(shift_poly(&[0.0, 0.0, 1.0], 1.0), vec![1.0, 2.0, 1.0]);
        assert_eq!(shift_poly(&[3.0, 2.0], -1.0), vec![1.0, 2.0]);
        let p = [0.5, -1.25, 3.0, 2.0];
        assert_eq!(shift_poly(&p, 0.0), p.to_vec());
    }

    proptest! {
        #[test]
        fn shift_round_trip(p in prop::collection::vec(-1.0f64..1.0, 1..=4), b in -3.0f64..3.0) {
            let back = shift_poly(&shift_poly(&p, b), -b);
            for (x, y) in p.iter().zip(&back) {
                prop_assert!((x - y).abs() <= 1e-12 * 1f64.max(x.abs()) * 64.0);
            }
        }

        #[test]
        fn shift_evaluates_shifted(p in prop::collection::vec(-1.0f64..1.0, 1..=4), b in -3.0f64..3.0, x in -3.0f64..3.0) {
            let lhs = eval_poly(&shift_poly(&p, b), x);
            let rhs = eval_poly(&p, x + b);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn continuity_enforced() {
        assert!(PolySegmentSpline::new(vec![0.0], vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, -1.0]], 2).is_ok());
        assert!(PolySegmentSpline::new(vec![0.0], vec![vec![1.0], vec![0.0, 1.0]], 1).is_err());
        assert!(PolySegmentSpline::new(vec![], vec![vec![0.0; 7]], 6).is_err());
        assert!(PolySegmentSpline::new(vec![], vec![vec![0.0; 4]], 2).is_err());
    }

    #[test]
    fn hat_bspline() {
        let s = PolySegmentSpline::from_bspline(1, &[0.0, 0.0, 1.0, 2.0, 2.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(s.breakpoints(), &[1.0]);
        for (x, y) in [(0.0, 0.0), (0.5, 0.5), (1.0, 1.0), (1.5, 0.5), (2.0, 0.0)] {
            assert!((s.value(x) - y).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn clamped_cubic_partition_of_unity() {
        let knots = [0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 3.0, 3.0, 3.0];
        let s = PolySegmentSpline::from_bspline(3, &knots, &[1.0; 6]).unwrap();
        assert_eq!(s.segments(), 3);
        for i in 0..=30 {
            let x = i as f64 * 0.1;
            assert!((s.value(x) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn cubic_bspline_matches_de_boor() {
        let knots = [-1.0, -1.0, -1.0, -1.0, -0.2, 0.5, 1.5, 1.5, 1.5, 1.5];
        let ctrl = [0.3, -0.7, 1.1, 0.2, -0.4, 0.9];
        let s = PolySegmentSpline::from_bspline(3, &knots, &ctrl).unwrap();
        for i in 0..=50 {
            let x = -1.0 + 2.5 * i as f64 / 50.0;
            let span = (3..6).rev().find(|&k| knots[k] <= x).unwrap_or(3);
            let span = if x >= 1.5 { 5 } else { span };
            assert!((s.value(x) - de_boor(3, &knots, &ctrl, span, x)).abs() < 1e-9, "x={x}");
        }
    }

    #[test]
    fn from_piecewise_linear_agrees() {
        let f = PiecewiseLinear::new(vec![-1.0, 1.0], vec![1.0, 2.0, 0.5], 0.0).unwrap();
        let s = PolySegmentSpline::from_piecewise_linear(&f);
        for x in [-3.0, -1.0, 0.0, 1.0, 2.0] {
            assert!((s.value(x) - f.value(x)).abs() < 1e-12);
        }
    }
}
