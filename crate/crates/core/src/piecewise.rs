use crate::error::{Error, Result};

/// A continuous univariate piecewise linear function.
///
/// Stored as the slopes of its `n` segments, the `n - 1` strictly increasing
/// breakpoints between them, and the intercept of the first segment. Continuity holds
/// by construction: each segment starts where the previous one ends. Adjacent
/// segments may share a slope; [`PiecewiseLinear::normalize`] merges them.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinear {
    breakpoints: Vec<f64>,
    slopes: Vec<f64>,
    intercept: f64,
}

impl PiecewiseLinear {
    pub fn new(breakpoints: Vec<f64>, slopes: Vec<f64>, intercept: f64) -> Result<Self> {
        if slopes.len() != breakpoints.len() + 1 {
            return Err(Error::invalid(
                "piecewise linear function",
                format!(
                    "slopes length must equal breakpoints length + 1 (got {} slopes, {} breakpoints)",
                    slopes.len(),
                    breakpoints.len()
                ),
            ));
        }
        if breakpoints.iter().chain(&slopes).any(|v| !v.is_finite()) || !intercept.is_finite() {
            return Err(Error::invalid(
                "piecewise linear function",
                "breakpoints, slopes and intercept must be finite",
            ));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "piecewise linear function",
                "breakpoints must be strictly increasing",
            ));
        }
        Ok(PiecewiseLinear {
            breakpoints,
            slopes,
            intercept,
        })
    }

    /// `x ↦ slope·x + intercept`, a single segment.
    pub fn affine(slope: f64, intercept: f64) -> Self {
        PiecewiseLinear::new(Vec::new(), vec![slope], intercept).expect("finite affine coefficients")
    }

    pub fn identity() -> Self {
        Self::affine(1.0, 0.0)
    }

    pub fn zero() -> Self {
        Self::affine(0.0, 0.0)
    }

    /// `x ↦ scale·relu(x) + offset` as a two-segment function with its breakpoint at 0.
    pub fn scaled_relu(scale: f64, offset: f64) -> Self {
        PiecewiseLinear::new(vec![0.0], vec![0.0, scale], offset).expect("finite relu coefficients")
    }

    pub fn relu() -> Self {
        Self::scaled_relu(1.0, 0.0)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn segments(&self) -> usize {
        self.slopes.len()
    }

    /// Evaluates the function, rejecting non-finite input.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Domain(format!("cannot evaluate at non-finite x = {x}")));
        }
        Ok(self.value(x))
    }

    /// `a_1·x + c + Σ_{b_i ≤ x} (a_{i+1} − a_i)(x − b_i)`.
    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        let mut y = self.slopes[0] * x + self.intercept;
        for (i, &b) in self.breakpoints.iter().enumerate() {
            if b > x {
                break;
            }
            y += (self.slopes[i + 1] - self.slopes[i]) * (x - b);
        }
        y
    }

    /// Index of the segment containing `x`; a point on a breakpoint belongs to the
    /// segment on its right.
    pub fn segment_index(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= x)
    }

    /// `(slope, offset)` such that segment `j` is `x ↦ slope·x + offset`.
    pub fn segment_affine(&self, j: usize) -> (f64, f64) {
        let mut offset = self.intercept;
        for i in 0..j {
            offset -= (self.slopes[i + 1] - self.slopes[i]) * self.breakpoints[i];
        }
        (self.slopes[j], offset)
    }

    /// Merges adjacent segments whose slopes are exactly equal.
    pub fn normalize(&self) -> Self {
        let mut breakpoints = Vec::with_capacity(self.breakpoints.len());
        let mut slopes = vec![self.slopes[0]];
        for (i, &b) in self.breakpoints.iter().enumerate() {
            let next = self.slopes[i + 1];
            if next != *slopes.last().unwrap() {
                breakpoints.push(b);
                slopes.push(next);
            }
        }
        PiecewiseLinear {
            breakpoints,
            slopes,
            intercept: self.intercept,
        }
    }
}
