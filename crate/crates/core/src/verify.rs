//! Semantic equivalence checks between networks.
//!
//! [`assert_equiv`] compares two networks on a scrambled Halton point set plus probes
//! placed right next to every first-layer breakpoint. [`equiv_exact_1d`] compares the
//! exact region complexes of two univariate networks and needs no sampling at all.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::par::{self, Parallelism};
use crate::regions::{exact_regions_1d, Complex1D, PiecewiseLinearNet};

pub const DEFAULT_SEED: u64 = 0x6b61_6e5f_7265_6c75;
/// Distance of the breakpoint probes from the breakpoint itself.
pub const PROBE_OFFSET: f64 = 1e-6;
/// Relative tolerance for pairing cut points in [`equiv_exact_1d`].
pub const CUT_PAIR_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquivMode {
    #[serde(rename = "sampled")]
    Sampled,
    #[serde(rename = "exact_1d")]
    Exact1d,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivReport {
    pub max_abs_error: f64,
    /// Largest `|Δ| / (1 + max(|a|, |b|))`; the pass criterion.
    pub max_rel_error: f64,
    pub worst_point: Vec<f64>,
    pub samples: usize,
    pub passed: bool,
    pub mode: EquivMode,
    pub tolerance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleConfig {
    pub seed: u64,
    pub parallelism: Parallelism,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            seed: DEFAULT_SEED,
            parallelism: Parallelism::default(),
        }
    }
}

/// Scrambled Halton sequence: one prime base per coordinate, shifted modulo 1 by a
/// seeded random offset.
#[derive(Clone, Debug)]
pub struct HaltonSampler {
    bases: Vec<u64>,
    shifts: Vec<f64>,
}

impl HaltonSampler {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        HaltonSampler {
            bases: first_primes(dim),
            shifts: (0..dim).map(|_| rng.random::<f64>()).collect(),
        }
    }

    /// The `i`-th point of the unit cube.
    pub fn unit_point(&self, i: usize) -> Vec<f64> {
        self.bases
            .iter()
            .zip(&self.shifts)
            .map(|(&b, &s)| (radical_inverse(i as u64 + 1, b) + s).fract())
            .collect()
    }

    pub fn point_in(&self, i: usize, bbox: &[(f64, f64)]) -> Vec<f64> {
        self.unit_point(i)
            .into_iter()
            .zip(bbox)
            .map(|(u, &(lo, hi))| lo + (hi - lo) * u)
            .collect()
    }
}

fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut c = 2u64;
    while primes.len() < n {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| c % p != 0) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn check_dims(a: &(impl Network + ?Sized), b: &(impl Network + ?Sized)) -> Result<()> {
    if a.input_dim() != b.input_dim() {
        return Err(Error::shape("equivalence input dimension", a.input_dim(), b.input_dim()));
    }
    if a.output_dim() != b.output_dim() {
        return Err(Error::shape("equivalence output dimension", a.output_dim(), b.output_dim()));
    }
    Ok(())
}

/// `(abs, combined)` error between two output vectors; NaN counts as infinite.
fn point_error(ya: &[f64], yb: &[f64]) -> (f64, f64) {
    ya.iter().zip(yb).fold((0.0, 0.0), |(abs, rel), (&a, &b)| {
        let d = (a - b).abs();
        let r = d / (1.0 + a.abs().max(b.abs()));
        let (d, r) = if d.is_nan() || r.is_nan() { (f64::INFINITY, f64::INFINITY) } else { (d, r) };
        (f64::max(abs, d), f64::max(rel, r))
    })
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()) == Some(std::cmp::Ordering::Less)
}

/// Order-independent reduction: worst combined error wins, ties go to the
/// lexicographically lowest point.
fn reduce(points: Vec<Vec<f64>>, errors: Vec<(f64, f64)>) -> (f64, f64, Vec<f64>) {
    let mut max_abs: f64 = 0.0;
    let mut worst: Option<(f64, usize)> = None;
    for (i, &(abs, rel)) in errors.iter().enumerate() {
        max_abs = max_abs.max(abs);
        let better = match worst {
            None => true,
            Some((w, j)) => rel > w || (rel == w && lex_less(&points[i], &points[j])),
        };
        if better {
            worst = Some((rel, i));
        }
    }
    let (rel, idx) = worst.expect("at least one point");
    (max_abs, rel, points[idx].clone())
}

/// The points [`assert_equiv_with`] evaluates: `samples` quasi-random points, then
/// breakpoint probes at `b − δ`, `b` and `b + δ` along each axis with the remaining
/// coordinates taken from the quasi-random points.
pub fn probe_points(
    a: &(impl Network + ?Sized),
    b: &(impl Network + ?Sized),
    bbox: &[(f64, f64)],
    samples: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let sampler = HaltonSampler::new(bbox.len(), seed);
    let mut points: Vec<Vec<f64>> = (0..samples).map(|i| sampler.point_in(i, bbox)).collect();
    let (ka, kb) = (a.axis_breakpoints(), b.axis_breakpoints());
    let mut probe = 0;
    for (axis, &(lo, hi)) in bbox.iter().enumerate() {
        let mut kinks: Vec<f64> = ka.get(axis).into_iter().chain(kb.get(axis)).flatten().copied().collect();
        kinks.sort_by(f64::total_cmp);
        kinks.dedup();
        for k in kinks {
            for x in [k - PROBE_OFFSET, k, k + PROBE_OFFSET] {
                if x < lo || x > hi {
                    continue;
                }
                let mut p = points[probe % samples].clone();
                p[axis] = x;
                probe += 1;
                points.push(p);
            }
        }
    }
    points
}

/// Sampled equivalence check with the default seed and parallelism.
pub fn assert_equiv(
    a: &(impl Network + ?Sized),
    b: &(impl Network + ?Sized),
    bbox: &[(f64, f64)],
    samples: usize,
    tol: f64,
) -> Result<EquivReport> {
    assert_equiv_with(a, b, bbox, samples, tol, SampleConfig::default())
}

pub fn assert_equiv_with(
    a: &(impl Network + ?Sized),
    b: &(impl Network + ?Sized),
    bbox: &[(f64, f64)],
    samples: usize,
    tol: f64,
    config: SampleConfig,
) -> Result<EquivReport> {
    check_dims(a, b)?;
    if bbox.len() != a.input_dim() {
        return Err(Error::shape("equivalence box", a.input_dim(), bbox.len()));
    }
    if bbox.iter().any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(Error::invalid("box", "every interval must be finite with lo ≤ hi"));
    }
    if samples == 0 {
        return Err(Error::invalid("sample count", "at least one sample is required"));
    }
    let points = probe_points(a, b, bbox, samples, config.seed);
    let errors = par::map(&points, config.parallelism, |x| -> Result<(f64, f64)> {
        Ok(point_error(&a.eval(x)?, &b.eval(x)?))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let n = points.len();
    let (max_abs_error, max_rel_error, worst_point) = reduce(points, errors);
    Ok(EquivReport {
        max_abs_error,
        max_rel_error,
        worst_point,
        samples: n,
        passed: max_rel_error <= tol,
        mode: EquivMode::Sampled,
        tolerance: tol,
    })
}

fn cuts_paired(a: &Complex1D, b: &Complex1D) -> bool {
    a.cut_points().len() == b.cut_points().len()
        && a
            .cut_points()
            .iter()
            .zip(b.cut_points())
            .all(|(x, y)| (x - y).abs() <= CUT_PAIR_TOL * 1f64.max(x.abs()).max(y.abs()))
}

/// Exact comparison of two univariate networks through their normalized region
/// complexes. Passes when the cut sets pair up and every overlay interval's affine
/// coefficients agree within `tol` (combined metric).
pub fn equiv_exact_1d<A, B>(a: &A, b: &B, tol: f64) -> Result<EquivReport>
where
    A: PiecewiseLinearNet + ?Sized,
    B: PiecewiseLinearNet + ?Sized,
{
    check_dims(a, b)?;
    let (ca, cb) = (exact_regions_1d(a)?, exact_regions_1d(b)?);
    let overlay = {
        let mut cuts: Vec<f64> = ca.cut_points().iter().chain(cb.cut_points()).copied().collect();
        cuts.sort_by(f64::total_cmp);
        // Cuts within the pairing tolerance are one cut; keeping both would leave a
        // sliver that each complex assigns to a different piece.
        cuts.dedup_by(|c, kept| *c - *kept <= CUT_PAIR_TOL * 1f64.max(c.abs()));
        cuts
    };
    let reps: Vec<Vec<f64>> = (0..=overlay.len())
        .map(|i| {
            let lo = i.checked_sub(1).map(|j| overlay[j]);
            vec![crate::regions::representative((lo, overlay.get(i).copied()))]
        })
        .collect();
    let errors: Vec<(f64, f64)> = reps
        .iter()
        .map(|x| {
            let (pa, pb) = (&ca.pieces()[ca.piece_index(x[0])], &cb.pieces()[cb.piece_index(x[0])]);
            let (s_abs, s_rel) = point_error(&pa.slopes, &pb.slopes);
            let (i_abs, i_rel) = point_error(&pa.intercepts, &pb.intercepts);
            (s_abs.max(i_abs), s_rel.max(i_rel))
        })
        .collect();
    let n = reps.len();
    let (max_abs_error, max_rel_error, worst_point) = reduce(reps, errors);
    Ok(EquivReport {
        max_abs_error,
        max_rel_error,
        worst_point,
        samples: n,
        passed: cuts_paired(&ca, &cb) && max_rel_error <= tol,
        mode: EquivMode::Exact1d,
        tolerance: tol,
    })
}
