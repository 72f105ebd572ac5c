//! Parameter accounting, linear-region upper bounds and class-embedding checks.
//!
//! Counts come in three tiers because different formulas describe different things:
//! `total` counts every stored scalar, `nonzero` the ones that are not zero, and
//! `free` the distinct source parameters a converted model carries (entries without
//! provenance count as free when nonzero).

use std::collections::BTreeSet;

use num_bigint::BigUint;
use num_traits::One;
use serde::{Serialize, Serializer};

use crate::convert::{kan_to_mlp, mlp_to_kan, ConversionMode};
use crate::error::{Error, Result};
use crate::kan::Kan;
use crate::mlp::Mlp;
use crate::piecewise::PiecewiseLinear;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LayerCounts {
    pub total: u64,
    pub nonzero: u64,
    pub free: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParamReport {
    pub total_entries: u64,
    pub nonzero_entries: u64,
    pub free_entries: u64,
    pub per_layer: Vec<LayerCounts>,
}

impl ParamReport {
    fn from_layers(per_layer: Vec<LayerCounts>) -> Self {
        ParamReport {
            total_entries: per_layer.iter().map(|l| l.total).sum(),
            nonzero_entries: per_layer.iter().map(|l| l.nonzero).sum(),
            free_entries: per_layer.iter().map(|l| l.free).sum(),
            per_layer,
        }
    }
}

pub fn count_params_mlp(m: &Mlp) -> ParamReport {
    let per_layer = m
        .layers()
        .iter()
        .map(|layer| {
            let w = layer.weight();
            let nonzero = (w.count_nonzero() + layer.bias().iter().filter(|b| **b != 0.0).count()) as u64;
            let free = match layer.tags() {
                Some(tags) => {
                    let sources: BTreeSet<_> = tags
                        .weight
                        .iter()
                        .chain(&tags.bias)
                        .flat_map(|t| t.sources().iter().copied())
                        .collect();
                    sources.len() as u64
                }
                None => nonzero,
            };
            LayerCounts {
                total: (w.rows() * w.cols() + layer.bias().len()) as u64,
                nonzero,
                free,
            }
        })
        .collect();
    ParamReport::from_layers(per_layer)
}

/// Each activation with `s` segments stores `s` slopes, `s − 1` breakpoints and one
/// intercept: `2s` scalars.
pub fn count_params_kan(k: &Kan) -> ParamReport {
    let per_layer = k
        .layers()
        .iter()
        .map(|layer| {
            let acts = layer.activations();
            let total: u64 = acts.iter().map(|f| 2 * f.segments() as u64).sum();
            let nonzero: u64 = acts.iter().map(nonzero_scalars).sum();
            LayerCounts {
                total,
                nonzero,
                free: total,
            }
        })
        .collect();
    ParamReport::from_layers(per_layer)
}

fn nonzero_scalars(f: &PiecewiseLinear) -> u64 {
    let nz = f
        .slopes()
        .iter()
        .chain(f.breakpoints())
        .chain(std::iter::once(&f.intercept()))
        .filter(|v| **v != 0.0)
        .count();
    nz as u64
}

/// Weight and bias entries of a dense network `n → hidden… → output_dim`.
pub fn mlp_param_formula(input_dim: usize, hidden: &[usize], output_dim: usize) -> u64 {
    let dims: Vec<u64> = std::iter::once(input_dim)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(output_dim))
        .map(|d| d as u64)
        .collect();
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Closed form for a scalar-output ReLU network with hidden widths `n_1…n_L`:
/// `1 + n·n_1 + 2·n_L + Σ_{i=1}^{L−1} (n_i·n_{i+1} + n_i)`.
///
/// With no hidden layers the network is a single affine map and the count is `n + 1`.
pub fn relu_lemma_param_count(input_dim: usize, hidden: &[usize]) -> u64 {
    let n = input_dim as u64;
    let h: Vec<u64> = hidden.iter().map(|&v| v as u64).collect();
    let (Some(first), Some(last)) = (h.first(), h.last()) else {
        return n + 1;
    };
    let inner: u64 = h.windows(2).map(|w| w[0] * w[1] + w[0]).sum();
    1 + n * first + 2 * last + inner
}

fn require_scalar_output(out: usize) -> Result<()> {
    if out != 1 {
        return Err(Error::invalid(
            "network",
            format!("closed-form count requires a scalar output, got output dimension {out}"),
        ));
    }
    Ok(())
}

/// The stated count for the KAN built from a ReLU network: `#(g) + 4·(n_1 + … + n_L + 1)`.
pub fn paper_formula_relu_to_kan(m: &Mlp) -> Result<u64> {
    require_scalar_output(m.output_dim())?;
    let hidden = m.hidden_widths();
    let relu_applications = hidden.iter().sum::<usize>() as u64 + 1;
    Ok(relu_lemma_param_count(m.input_dim(), &hidden) + 4 * relu_applications)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct KanToReluFormula {
    pub value: u64,
    /// `Some(k)` when every activation has exactly `k` segments and `value` is the
    /// closed form `2k·Σ n_ℓ n_{ℓ−1}`; `None` when it is the per-activation sum
    /// `Σ 2·segments` instead.
    pub uniform_segments: Option<usize>,
}

/// The stated nonzero-parameter count of the ReLU network built from a KAN.
pub fn paper_formula_kan_to_relu(k: &Kan) -> KanToReluFormula {
    match k.uniform_segments() {
        Some(seg) => {
            let widths = k.widths();
            let pairs: u64 = widths.windows(2).map(|w| (w[0] * w[1]) as u64).sum();
            KanToReluFormula {
                value: 2 * seg as u64 * pairs,
                uniform_segments: Some(seg),
            }
        }
        None => KanToReluFormula {
            value: count_params_kan(k).free_entries,
            uniform_segments: None,
        },
    }
}

/// Exact binomial coefficient by the multiplicative formula.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::ZERO;
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// `∏_ℓ Σ_{j=0}^{d_ℓ} C(n_ℓ, j)` with `d_ℓ = min{n, n_1, …, n_ℓ}`.
pub fn relu_region_upper_bound(input_dim: usize, hidden_widths: &[usize]) -> BigUint {
    let mut d = input_dim;
    let mut bound = BigUint::one();
    for &w in hidden_widths {
        d = d.min(w);
        let layer: BigUint = (0..=d as u64).map(|j| binomial(w as u64, j)).sum();
        bound *= layer;
    }
    bound
}

/// `k^{n_L + Σ_{i=0}^{L−1} n_i·n_{i+1}}` for widths `n_0…n_L`, the last KAN layer
/// mapping `ℝ^{n_L} → ℝ`.
pub fn kan_region_upper_bound(widths: &[usize], k: usize) -> BigUint {
    let exponent = widths.last().copied().unwrap_or(0) + widths.windows(2).map(|w| w[0] * w[1]).sum::<usize>();
    BigUint::from(k).pow(exponent as u32)
}

/// Region bound for a concrete KAN: `k^{#activations}` with `k` its largest segment
/// count. Equals [`kan_region_upper_bound`] for scalar-output KANs.
pub fn kan_region_upper_bound_for(kan: &Kan) -> BigUint {
    BigUint::from(kan.max_segments()).pow(kan.num_activations() as u32)
}

pub fn relu_region_upper_bound_for(mlp: &Mlp) -> BigUint {
    relu_region_upper_bound(mlp.input_dim(), &mlp.hidden_widths())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Kan,
    Relu,
}

pub(crate) fn big_as_string<S: Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_str_radix(10))
}

/// Region bound over parameter count, kept as an exact pair.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RegionRatio {
    pub family: Family,
    #[serde(serialize_with = "big_as_string")]
    pub bound: BigUint,
    /// Denominator of the displayed ratio. For KANs this is `2k·Σ_{l=1}^{L+1} n_l`.
    pub params: u64,
    /// KAN only: the counting-proposition denominator `2k·Σ_{l=1}^{L+1} n_l·n_{l−1}`.
    pub params_with_fan_in: Option<u64>,
}

impl RegionRatio {
    pub fn ratio(&self) -> f64 {
        use num_traits::ToPrimitive;
        self.bound.to_f64().unwrap_or(f64::INFINITY) / self.params as f64
    }
}

/// Regions-per-parameter pair.
///
/// For `Family::Relu`, `dims` is `[n, n_1, …, n_L]` (scalar output) and `k` is
/// ignored. For `Family::Kan`, `dims` is `[n_0, …, n_L]` with the last layer mapping
/// to ℝ, and `k` is the segment count.
pub fn regions_per_parameter(family: Family, dims: &[usize], k: usize) -> Result<RegionRatio> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::invalid("dimensions", "widths must be positive and non-empty"));
    }
    Ok(match family {
        Family::Relu => RegionRatio {
            family,
            bound: relu_region_upper_bound(dims[0], &dims[1..]),
            params: relu_lemma_param_count(dims[0], &dims[1..]),
            params_with_fan_in: None,
        },
        Family::Kan => {
            if k == 0 {
                return Err(Error::invalid("segment count", "k must be at least 1"));
            }
            let k64 = k as u64;
            let width_sum: u64 = dims[1..].iter().map(|&n| n as u64).sum::<u64>() + 1;
            let fan_in: u64 =
                dims.windows(2).map(|w| (w[0] * w[1]) as u64).sum::<u64>() + *dims.last().unwrap() as u64;
            RegionRatio {
                family,
                bound: kan_region_upper_bound(dims, k),
                params: 2 * k64 * width_sum,
                params_with_fan_in: Some(2 * k64 * fan_in),
            }
        }
    })
}

/// Class descriptor `KAN(L, n, k)` or `ReLU(L, n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ClassSignature {
    pub family: Family,
    pub depth: usize,
    pub width: usize,
    /// KAN only: activations have at most `segment_bound + 1` segments.
    pub segment_bound: Option<usize>,
}

impl ClassSignature {
    /// Width is the largest layer width, input included.
    pub fn of_kan(k: &Kan) -> Self {
        ClassSignature {
            family: Family::Kan,
            depth: k.depth(),
            width: k.widths().into_iter().max().unwrap_or(0),
            segment_bound: Some(k.max_segments() - 1),
        }
    }

    /// Width is the largest hidden width.
    pub fn of_mlp(m: &Mlp) -> Self {
        ClassSignature {
            family: Family::Relu,
            depth: m.depth(),
            width: m.max_hidden_width(),
            segment_bound: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EmbeddingReport {
    pub source: ClassSignature,
    /// The paper-mode ReLU network.
    pub converted: ClassSignature,
    /// The exact-mode ReLU network.
    pub converted_exact: ClassSignature,
    /// The KAN obtained by lifting the exact-mode network back.
    pub reconverted: ClassSignature,
    /// `n²(k + 1)`.
    pub paper_width_bound: usize,
    /// `n²k + 2n`.
    pub exact_width_bound: usize,
    pub width_bound_satisfied: bool,
    pub depth_bound_satisfied: bool,
    pub segment_bound_satisfied: bool,
}

impl EmbeddingReport {
    pub fn all_satisfied(&self) -> bool {
        self.width_bound_satisfied && self.depth_bound_satisfied && self.segment_bound_satisfied
    }
}

/// Checks `KAN(L,n,k) ⊆ ReLU(L+1, n²(k+1)) ⊆ KAN(L+1, n²(k+1), 1)` on a concrete KAN
/// by running both conversions and measuring what comes out.
pub fn class_embedding_check(k: &Kan) -> EmbeddingReport {
    let source = ClassSignature::of_kan(k);
    let (n, kk) = (source.width, source.segment_bound.unwrap_or(0));
    let paper = kan_to_mlp(k, ConversionMode::Paper);
    let exact = kan_to_mlp(k, ConversionMode::Exact);
    let lifted = mlp_to_kan(&exact);

    let converted = ClassSignature::of_mlp(&paper);
    let converted_exact = ClassSignature::of_mlp(&exact);
    let reconverted = ClassSignature::of_kan(&lifted);
    let paper_width_bound = n * n * (kk + 1);
    let exact_width_bound = n * n * kk + 2 * n;

    let target_depth = source.depth + 1;
    EmbeddingReport {
        source,
        converted,
        converted_exact,
        reconverted,
        paper_width_bound,
        exact_width_bound,
        width_bound_satisfied: converted.width <= paper_width_bound
            && converted_exact.width <= exact_width_bound
            && reconverted.width <= converted_exact.width.max(n),
        depth_bound_satisfied: converted.depth <= target_depth
            && converted_exact.depth <= target_depth
            && reconverted.depth <= target_depth,
        segment_bound_satisfied: reconverted.segment_bound.is_some_and(|s| s <= 1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kan::KanLayer;
    use crate::linalg::Matrix;
    use crate::mlp::{Activation, MlpLayer};

    fn dense_mlp(dims: &[usize]) -> Mlp {
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 1 == n { Activation::Identity } else { Activation::Relu };
                MlpLayer::new(
                    Matrix::from_row_major(w[1], w[0], vec![0.5; w[0] * w[1]]).unwrap(),
                    vec![0.25; w[1]],
                    act,
                )
                .unwrap()
            })
            .collect();
        Mlp::new(layers).unwrap()
    }

    fn f_star() -> PiecewiseLinear {
        PiecewiseLinear::new(vec![-1.0, 1.0], vec![1.0, 2.0, 0.5], 0.0).unwrap()
    }

    fn uniform_kan(dims: &[usize], f: &PiecewiseLinear) -> Kan {
        Kan::new(
            dims.windows(2)
                .map(|w| KanLayer::new(w[0], w[1], vec![f.clone(); w[0] * w[1]]).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn mlp_counts() {
        let m = dense_mlp(&[2, 3, 2, 1]);
        let r = count_params_mlp(&m);
        // 14 weights + 6 biases.
        assert_eq!(r.total_entries, 20);
        assert_eq!(relu_lemma_param_count(2, &[3, 2]), 20);
        assert_eq!(mlp_param_formula(2, &[3, 2], 1), 20);

        let single = dense_mlp(&[1, 1]);
        assert_eq!(count_params_mlp(&single).total_entries, 2);

        let abs = crate::mlp::tests::abs_mlp();
        let r = count_params_mlp(&abs);
        assert_eq!(r.total_entries, 7);
        assert_eq!(r.nonzero_entries, 4);
        assert_eq!(r.free_entries, 4);
    }

    #[test]
    fn kan_counts() {
        let f3 = PiecewiseLinear::new(vec![-1.0, 0.5], vec![1.0, -1.0, 2.0], 0.3).unwrap();
        assert_eq!(count_params_kan(&uniform_kan(&[2, 2, 1], &f3)).free_entries, 36);
        assert_eq!(count_params_kan(&uniform_kan(&[1, 1], &PiecewiseLinear::identity())).free_entries, 2);
        let r = count_params_kan(&uniform_kan(&[1, 1], &f_star()));
        assert_eq!(r.free_entries, 6);
        assert_eq!(r.total_entries, 6);
        // slopes 1, 2, 0.5 and breakpoints -1, 1 are nonzero; the intercept is 0.
        assert_eq!(r.nonzero_entries, 5);
    }

    #[test]
    fn relu_to_kan_formula() {
        assert_eq!(paper_formula_relu_to_kan(&dense_mlp(&[2, 3, 2, 1])).unwrap(), 44);
        let one_hidden = dense_mlp(&[3, 1, 1]);
        let p = relu_lemma_param_count(3, &[1]);
        assert_eq!(paper_formula_relu_to_kan(&one_hidden).unwrap(), p + 8);
        let affine = dense_mlp(&[3, 1]);
        assert_eq!(paper_formula_relu_to_kan(&affine).unwrap(), 4 + 4);
        assert!(paper_formula_relu_to_kan(&dense_mlp(&[2, 3, 2])).is_err());
    }

    #[test]
    fn kan_to_relu_formula() {
        let f3 = PiecewiseLinear::new(vec![-1.0, 0.5], vec![1.0, -1.0, 2.0], 0.3).unwrap();
        let v = paper_formula_kan_to_relu(&uniform_kan(&[2, 2, 1], &f3));
        assert_eq!(v, KanToReluFormula { value: 36, uniform_segments: Some(3) });
        assert_eq!(paper_formula_kan_to_relu(&uniform_kan(&[1, 1], &PiecewiseLinear::identity())).value, 2);
        let f4 = PiecewiseLinear::new(vec![-1.0, 0.0, 1.0], vec![1.0, -1.0, 2.0, 0.0], 0.3).unwrap();
        assert_eq!(paper_formula_kan_to_relu(&uniform_kan(&[3, 3], &f4)).value, 72);

        let mixed = Kan::new(vec![KanLayer::new(2, 1, vec![f_star(), PiecewiseLinear::relu()]).unwrap()]).unwrap();
        let v = paper_formula_kan_to_relu(&mixed);
        assert_eq!(v.uniform_segments, None);
        assert_eq!(v.value, 6 + 4);
    }

    #[test]
    fn free_entries_of_paper_conversion_match_formula() {
        let f3 = PiecewiseLinear::new(vec![-1.0, 0.5], vec![1.0, -1.0, 2.0], 0.3).unwrap();
        for dims in [vec![1, 1], vec![2, 2, 1], vec![3, 2, 4, 1]] {
            let kan = uniform_kan(&dims, &f3);
            for mode in [ConversionMode::Paper, ConversionMode::Exact] {
                let r = count_params_mlp(&kan_to_mlp(&kan, mode));
                assert_eq!(r.free_entries, paper_formula_kan_to_relu(&kan).value, "{dims:?} {mode:?}");
            }
        }
    }

    #[test]
    fn montufar_values() {
        assert_eq!(relu_region_upper_bound(2, &[3]), BigUint::from(7u32));
        assert_eq!(relu_region_upper_bound(2, &[2, 2]), BigUint::from(16u32));
        assert_eq!(relu_region_upper_bound(1, &[5]), BigUint::from(6u32));
    }

    #[test]
    fn kan_bound_values() {
        assert_eq!(kan_region_upper_bound(&[1, 2], 3), BigUint::from(81u32));
        assert_eq!(kan_region_upper_bound(&[2, 2], 2), BigUint::from(64u32));
        assert_eq!(kan_region_upper_bound(&[4, 3, 5], 1), BigUint::one());
        // k^(Σ n_i n_{i+1}) leaves u64 range quickly.
        let big = kan_region_upper_bound(&[8, 8, 8], 5);
        assert_eq!(big, BigUint::from(5u32).pow(136));
        let kan = uniform_kan(&[1, 2, 1], &f_star());
        assert_eq!(kan_region_upper_bound_for(&kan), kan_region_upper_bound(&[1, 2], 3));
    }

    #[test]
    fn kan_bound_increases_in_k() {
        let w = [2, 3];
        for k in 1..8 {
            assert!(kan_region_upper_bound(&w, k) < kan_region_upper_bound(&w, k + 1));
        }
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), BigUint::from(10u32));
        assert_eq!(binomial(3, 5), BigUint::ZERO);
        assert_eq!(binomial(60, 30), BigUint::from(118264581564861424u64));
    }

    #[test]
    fn ratios() {
        let r = regions_per_parameter(Family::Relu, &[2, 3], 0).unwrap();
        assert_eq!((r.bound.clone(), r.params), (BigUint::from(7u32), 6 + 3 + 3 + 1));
        let k = regions_per_parameter(Family::Kan, &[1, 2], 3).unwrap();
        assert_eq!(k.bound, BigUint::from(81u32));
        assert_eq!(k.params, 2 * 3 * (2 + 1));
        assert_eq!(k.params_with_fan_in, Some(2 * 3 * (2 + 2)));
        assert_eq!(regions_per_parameter(Family::Kan, &[3, 2], 1).unwrap().bound, BigUint::one());
        assert!(regions_per_parameter(Family::Kan, &[3, 0], 2).is_err());
    }

    #[test]
    fn embedding_of_four_f_star() {
        let kan = uniform_kan(&[2, 2], &f_star());
        let r = class_embedding_check(&kan);
        assert_eq!(r.source.segment_bound, Some(2));
        assert_eq!(r.paper_width_bound, 12);
        assert_eq!(r.converted.width, 12);
        assert_eq!(r.converted.depth, 2);
        assert_eq!(r.reconverted.segment_bound, Some(1));
        assert!(r.all_satisfied());
    }

    #[test]
    fn embedding_of_identity_kan() {
        let kan = uniform_kan(&[2, 2], &PiecewiseLinear::identity());
        let r = class_embedding_check(&kan);
        assert_eq!(r.source.segment_bound, Some(0));
        assert_eq!(r.converted.width, 4);
        assert_eq!(r.converted_exact.width, 4);
        assert_eq!(r.exact_width_bound, 4);
        assert!(r.all_satisfied());
    }
}
