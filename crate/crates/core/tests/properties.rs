use bhplus_core::dist::{DiscreteDistribution, Pareto, Quantile};
use bhplus_core::ingest::{filter_hiv, filter_methylation, CountRecord};
use bhplus_core::pvalue::{Flavor, NullTable};
use bhplus_core::stepup::{bh, bh_plus, build_max_cdf};
use bhplus_core::PValueSupport;
use proptest::prelude::*;

/// An exact-test margin: a binomial total, or Fisher group sizes and margin.
fn margin() -> impl Strategy<Value = (u64, u64, u64, bool)> {
    (1u64..20, 1u64..20, any::<bool>())
        .prop_flat_map(|(n1, n2, fet)| (Just(n1), Just(n2), 0..=n1 + n2, Just(fet)))
}

fn table((n1, n2, m, fet): (u64, u64, u64, bool)) -> NullTable {
    if fet {
        NullTable::fisher_test(n1, n2, m).unwrap()
    } else {
        NullTable::binomial_test(m)
    }
}

/// Tests with observed outcomes picked by index into each null's outcomes.
fn instance() -> impl Strategy<Value = Vec<(NullTable, u64)>> {
    prop::collection::vec((margin(), any::<prop::sample::Index>()), 1..40).prop_map(|v| {
        v.into_iter()
            .map(|(mg, ix)| {
                let t = table(mg);
                let x = *ix.get(t.outcomes());
                (t, x)
            })
            .collect()
    })
}

fn pvalues_and_supports(
    tests: &[(NullTable, u64)],
    flavor: Flavor,
) -> (Vec<f64>, Vec<&PValueSupport>) {
    tests
        .iter()
        .map(|(t, x)| (t.pvalue(*x, flavor).unwrap(), t.support(flavor)))
        .unzip()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rejections_grow_with_alpha(tests in instance(), a in 0.01f64..0.5, b in 0.01f64..0.5) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for flavor in [Flavor::Conventional, Flavor::Mid] {
            let (p, s) = pvalues_and_supports(&tests, flavor);
            let r_lo = bh_plus(&p, &s, lo).unwrap();
            let r_hi = bh_plus(&p, &s, hi).unwrap();
            prop_assert!(r_lo.rejection_count <= r_hi.rejection_count);
        }
    }

    #[test]
    fn step_up_is_self_consistent(tests in instance(), alpha in 0.01f64..0.5) {
        let (p, s) = pvalues_and_supports(&tests, Flavor::Mid);
        let r = bh_plus(&p, &s, alpha).unwrap();
        prop_assert_eq!(r.rejected.len(), r.rejection_count);
        let mask = r.rejection_mask(p.len());
        match r.threshold {
            Some(g) => {
                for (pi, rej) in p.iter().zip(mask) {
                    prop_assert_eq!(*pi <= g, rej);
                }
            }
            None => prop_assert_eq!(r.rejection_count, 0),
        }
        let f = build_max_cdf(&s).unwrap();
        let m = p.len();
        let mut prev = f64::NEG_INFINITY;
        for (k, g) in r.critical_values.iter().enumerate() {
            if let Some(g) = g {
                prop_assert!(f.eval(*g) <= alpha * (k + 1) as f64 / m as f64);
                prop_assert!(*g >= prev);
                prev = *g;
            }
        }
    }

    #[test]
    fn bh_plus_contains_bh(tests in instance(), alpha in 0.01f64..0.5) {
        let (p, s) = pvalues_and_supports(&tests, Flavor::Conventional);
        let plus = bh_plus(&p, &s, alpha).unwrap();
        let classic = bh(&p, alpha).unwrap();
        for i in &classic.rejected {
            prop_assert!(plus.rejected.contains(i));
        }
    }

    #[test]
    fn mid_max_cdf_dominates_conventional(tests in instance()) {
        let (_, conv) = pvalues_and_supports(&tests, Flavor::Conventional);
        let (_, mid) = pvalues_and_supports(&tests, Flavor::Mid);
        let w_cp = build_max_cdf(&conv).unwrap();
        let w_mp = build_max_cdf(&mid).unwrap();
        for &t in w_cp.grid().iter().chain(w_mp.grid()) {
            prop_assert!(w_mp.eval(t) >= w_cp.eval(t));
        }
    }

    #[test]
    fn mid_rejections_never_exceed_bh(tests in instance(), alpha in 0.01f64..0.5) {
        let (p, _) = pvalues_and_supports(&tests, Flavor::Conventional);
        let (q, mid) = pvalues_and_supports(&tests, Flavor::Mid);
        let r_mp = bh_plus(&q, &mid, alpha).unwrap().rejection_count;
        prop_assert!(r_mp <= bh(&p, alpha).unwrap().rejection_count);
    }

    #[test]
    fn discrete_quantile_is_monotone(theta in 0.01f64..0.99, n in 0u64..60, u in 1e-9f64..1.0, v in 1e-9f64..1.0) {
        let d = DiscreteDistribution::binomial(theta, n).unwrap();
        let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
        prop_assume!(hi < 1.0);
        prop_assert!(d.quantile(lo).unwrap() <= d.quantile(hi).unwrap());
    }

    #[test]
    fn pareto_quantile_is_monotone(loc in 0.1f64..10.0, u in 1e-9f64..1.0, v in 1e-9f64..1.0) {
        let p = Pareto::new(loc, 5.0).unwrap();
        let (lo, hi) = if u <= v { (u, v) } else { (v, u) };
        prop_assume!(hi < 1.0);
        let (a, b) = (p.quantile(lo).unwrap(), p.quantile(hi).unwrap());
        prop_assert!(a >= loc && a <= b);
    }

    #[test]
    fn filters_are_idempotent(counts in prop::collection::vec((0u64..40, 0u64..40), 0..60)) {
        let records: Vec<CountRecord> = counts
            .iter()
            .enumerate()
            .map(|(i, &(c1, c2))| CountRecord { id: i.to_string(), c1, c2, n1: None, n2: None })
            .collect();
        let once = filter_methylation(&records);
        prop_assert_eq!(filter_methylation(&once), once.clone());
        prop_assert!(once.iter().all(|r| r.c1 + r.c2 > 10 && r.c1 <= 25 && r.c2 <= 25));
        let once = filter_hiv(&records);
        prop_assert_eq!(filter_hiv(&once), once.clone());
        prop_assert!(once.iter().all(|r| r.c1 + r.c2 >= 5));
    }
}
