use gcs_core::instances::{generate, random_instance, LengthKind, RandomParams};
use gcs_core::io::{gcs_from_json, gcs_to_json};
use gcs_core::oracle::certify;
use gcs_core::*;
use proptest::prelude::*;

#[test]
fn json_round_trip_preserves_optimum() {
    for spec in ["hpp:3", "symmetry", "twodim:1:sq", "random:7:2:8:14:0.02"] {
        let g = generate(spec).unwrap().gcs;
        let back = gcs_from_json(&gcs_to_json(&g)).unwrap();
        let (a, b) = (solve_micp(&g, &BnbConfig::default()).unwrap(), solve_micp(&back, &BnbConfig::default()).unwrap());
        let (ca, cb) = (a.cost().unwrap(), b.cost().unwrap());
        assert!((ca - cb).abs() <= 1e-9 * ca.max(1.0), "{spec}: {ca} vs {cb}");
        assert_eq!(a.incumbent.unwrap().vertices, b.incumbent.unwrap().vertices, "{spec}");
    }
}

#[test]
fn sequential_and_parallel_search_agree() {
    let g = generate("twodim:1").unwrap().gcs;
    let one = solve_micp(&g, &BnbConfig { threads: 1, ..Default::default() }).unwrap();
    let four = solve_micp(&g, &BnbConfig { threads: 4, ..Default::default() }).unwrap();
    assert!((one.cost().unwrap() - four.cost().unwrap()).abs() <= 1e-7);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn bounds_are_ordered(seed in 0u64..10_000, sq in any::<bool>(), extra in 0usize..6) {
        let p = RandomParams {
            seed,
            n: 2,
            num_vertices: 7,
            num_edges: 6 + extra,
            volume: 0.02,
            length: if sq { LengthKind::SqEuclidean } else { LengthKind::Euclidean },
            singletons: false,
        };
        let g = random_instance(&p).unwrap();
        let rep = solve_micp(&g, &BnbConfig::default()).unwrap();
        let best = certify(&g, 10_000).unwrap();
        let cost = rep.cost().unwrap();
        let scale = cost.max(1.0);
        prop_assert!(rep.root_bound <= cost + 1e-6 * scale);
        prop_assert!((cost - best.cost).abs() <= 1e-5 * scale);
        let path = rep.incumbent.unwrap();
        prop_assert!(path.validate(&g).is_ok());
    }
}
