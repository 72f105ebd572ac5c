use kanrelu::complexity::{kan_region_upper_bound_for, relu_region_upper_bound_for};
use kanrelu::corpus::{self, random_kan, random_mlp, random_pl, CorpusSpec};
use kanrelu::regions::{compose_univariate, composition_segment_bound, exact_regions_1d, grid_fingerprint_2d, GridBox};
use kanrelu::{kan_to_mlp, ConversionMode, Network, Parallelism};
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::Rng;

fn spec_1d() -> CorpusSpec {
    CorpusSpec {
        output_dim: Some(1),
        ..CorpusSpec::univariate()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn kan_complex_is_faithful_and_bounded(seed in any::<u64>()) {
        let mut rng = corpus::rng(seed);
        let k = random_kan(&mut rng, &spec_1d());
        let c = exact_regions_1d(&k).unwrap();
        prop_assert!(c.continuity_defect() < 1e-9);
        prop_assert!(BigUint::from(c.num_regions()) <= kan_region_upper_bound_for(&k));
        for _ in 0..100 {
            let x = rng.random_range(-8.0..8.0);
            let want = k.eval(&[x]).unwrap()[0];
            prop_assert!((c.eval(x)[0] - want).abs() <= 1e-9 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn normalized_neighbours_differ_in_slope(seed in any::<u64>()) {
        let m = random_mlp(&mut corpus::rng(seed), &spec_1d());
        let c = exact_regions_1d(&m).unwrap();
        prop_assert!(BigUint::from(c.num_regions()) <= relu_region_upper_bound_for(&m));
        for w in c.pieces().windows(2) {
            prop_assert!(w[0].slopes != w[1].slopes);
        }
    }

    #[test]
    fn kan_and_converted_mlp_share_regions(seed in any::<u64>()) {
        let k = random_kan(&mut corpus::rng(seed), &spec_1d());
        let a = exact_regions_1d(&k).unwrap();
        let b = exact_regions_1d(&kan_to_mlp(&k, ConversionMode::Exact)).unwrap();
        prop_assert_eq!(a.num_regions(), b.num_regions());
    }

    #[test]
    fn composition_bound(seed in any::<u64>()) {
        let mut rng = corpus::rng(seed);
        let (kf, kg) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let f = random_pl(&mut rng, kf, &CorpusSpec::default());
        let g = random_pl(&mut rng, kg, &CorpusSpec::default());
        let c = exact_regions_1d(&compose_univariate(&f, &g)).unwrap();
        prop_assert!(c.num_regions() <= composition_segment_bound(kf, kg));
    }
}

#[test]
fn fingerprint_never_exceeds_cell_count_and_modes_agree() {
    let spec = CorpusSpec {
        max_input: 2,
        output_dim: Some(1),
        ..CorpusSpec::default()
    };
    let mut rng = corpus::rng(21);
    let bbox = GridBox {
        x0: -2.0,
        x1: 2.0,
        y0: -2.0,
        y1: 2.0,
    };
    let mut checked = 0;
    while checked < 10 {
        let m = random_mlp(&mut rng, &spec);
        if m.input_dim() != 2 {
            continue;
        }
        checked += 1;
        let a = grid_fingerprint_2d(&m, bbox, 48, Parallelism::Parallel).unwrap();
        let b = grid_fingerprint_2d(&m, bbox, 48, Parallelism::Sequential).unwrap();
        assert_eq!(a, b);
        assert!(a.estimated_regions >= 1 && a.estimated_regions <= 48 * 48);
        assert_eq!(Network::input_dim(&m), 2);
    }
}
