mod support;

use num_rational::Ratio;
use proptest::prelude::*;
use sbmgof::deviation::{entrywise_deviations, gamma_max, sample_psi};
use sbmgof::estimation::estimate_q;
use sbmgof::graph::block_counts;
use sbmgof::gumbel::{critical_value, p_value, GumbelParams};
use sbmgof::sbm::{generate_sbm, BlockProbabilityMatrix, SbmSpec};
use sbmgof::testing::{test_membership, BChoice, TestOptions};
use sbmgof::{AdjacencyMatrix, Membership};

#[test]
fn exact_identities_on_random_graphs() {
    for seed in 1000..1100 {
        if let Err(e) = support::exact_algebra(seed) {
            panic!("seed {seed}: {e}");
        }
    }
}

fn graph_and_labels() -> impl Strategy<Value = (AdjacencyMatrix, Membership)> {
    (4usize..30, 1usize..4).prop_flat_map(|(n, k)| {
        let k = k.min(n / 2);
        (
            proptest::collection::vec((0..n, 0..n), 0..120),
            Just(k),
            proptest::sample::subsequence((0..n).collect::<Vec<_>>(), 2 * k),
            proptest::collection::vec(0..k, n),
        )
            .prop_map(move |(pairs, k, pinned, mut labels)| {
                // Two pinned nodes per block keep every block non-singleton.
                for (t, &i) in pinned.iter().enumerate() {
                    labels[i] = t % k;
                }
                let edges = pairs.into_iter().filter(|(i, j)| i != j);
                (AdjacencyMatrix::from_edges(n, edges).unwrap(), Membership::new(labels, k).unwrap())
            })
    })
}

proptest! {
    #[test]
    fn rational_estimate_is_exact((a, g) in graph_and_labels()) {
        let q = estimate_q::<Ratio<i64>>(&a, &g).unwrap();
        let c = block_counts(&a, &g).unwrap();
        for u in 0..g.k() {
            for v in 0..g.k() {
                prop_assert_eq!(
                    *q.get(u, v) * Ratio::from_integer(c.n_pairs(u, v) as i64),
                    Ratio::from_integer(c.m(u, v) as i64)
                );
                prop_assert_eq!(q.get(u, v), q.get(v, u));
            }
        }
    }

    #[test]
    fn counts_are_symmetric_and_total_twice_the_edges((a, g) in graph_and_labels()) {
        let c = block_counts(&a, &g).unwrap();
        let mut total = 0;
        for u in 0..g.k() {
            for v in 0..g.k() {
                prop_assert_eq!(c.m(u, v), c.m(v, u));
                prop_assert!(c.m(u, v) <= c.n_pairs(u, v));
                total += c.m(u, v);
            }
        }
        prop_assert_eq!(total as usize, 2 * a.edge_count());
    }

    #[test]
    fn block_sums_vanish((a, g) in graph_and_labels()) {
        let q = estimate_q::<f64>(&a, &g).unwrap();
        let d = entrywise_deviations(&a, &g, &q).unwrap();
        for u in 0..g.k() {
            for v in 0..g.k() {
                let s: f64 = (0..a.n()).filter(|&i| g.label(i) == u).map(|i| d.get(i, v)).sum();
                prop_assert!(s.abs() <= 1e-9, "({}, {}) sums to {}", u, v, s);
            }
        }
    }

    #[test]
    fn psi_is_bounded_by_the_largest_deviation((a, g) in graph_and_labels(), b in 1usize..40, m in 1usize..30, seed in any::<u64>()) {
        let q = estimate_q::<f64>(&a, &g).unwrap();
        let d = entrywise_deviations(&a, &g, &q).unwrap();
        let psi = sample_psi(&d, b, m, seed).unwrap();
        let bound = (b as f64).sqrt() * d.max_abs();
        for &x in psi.values() {
            prop_assert!(x.abs() <= bound * (1.0 + 1e-12));
        }
        prop_assert!(gamma_max(&psi) <= bound * (1.0 + 1e-12));
    }

    #[test]
    fn edge_list_roundtrip((a, _g) in graph_and_labels()) {
        let mut buf = Vec::new();
        a.write_edge_list(&mut buf).unwrap();
        prop_assert_eq!(AdjacencyMatrix::load_edge_list(buf.as_slice()).unwrap(), a);
    }

    #[test]
    fn quantile_inverts_cdf(mu in -5.0f64..5.0, beta in 0.1f64..5.0, p in 0.001f64..0.999) {
        let law = GumbelParams::new(mu, beta).unwrap();
        prop_assert!((law.cdf(law.quantile(p)) - p).abs() <= 1e-12);
    }

    #[test]
    fn p_value_is_monotone_and_agrees_with_critical_value(x in -10.0f64..30.0, alpha in 0.001f64..0.5) {
        let p = p_value(x);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(p_value(x + 0.5) <= p);
        let q = critical_value(alpha).unwrap();
        if (x - q).abs() > 1e-9 {
            prop_assert_eq!(x > q, p < alpha);
        }
    }

    #[test]
    fn generated_graphs_are_simple_and_reproducible(seed in any::<u64>(), n in 4usize..60, p in 0.0f64..1.0) {
        let g = Membership::contiguous(&[n / 2, n - n / 2]).unwrap();
        let q = BlockProbabilityMatrix::new(vec![vec![p, p / 2.0], vec![p / 2.0, p]]).unwrap();
        let spec = SbmSpec::new(q, g, seed).unwrap();
        let a = generate_sbm(&spec);
        prop_assert_eq!(&a, &generate_sbm(&spec));
        for i in 0..n {
            prop_assert!(!a.has_edge(i, i));
            for &j in a.neighbors(i) {
                prop_assert!(a.has_edge(j, i));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reports_are_internally_consistent(seed in any::<u64>(), alpha in 0.01f64..0.3, b in 1usize..20) {
        let g = Membership::contiguous(&[15, 15]).unwrap();
        let q = BlockProbabilityMatrix::new(vec![vec![0.5, 0.1], vec![0.1, 0.5]]).unwrap();
        let a = generate_sbm(&SbmSpec::new(q, g.clone(), seed).unwrap());
        let opts = TestOptions { alpha, b: BChoice::Fixed(b), seed, ..TestOptions::default() };
        let r = test_membership(&a, &g, &opts).unwrap();
        prop_assert_eq!(r.reject, r.statistic > r.critical_value);
        prop_assert_eq!(r.reject, r.p_value < alpha);
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        prop_assert_eq!(r.b_used, b);
    }
}
