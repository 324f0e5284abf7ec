use hre_core::measures::{join, required_join_grid, w2, EmpiricalMeasure};
use hre_core::prob::{DiscreteSpace, RandomVariable};
use hre_oracles::w2_squared_transport;
use proptest::prelude::*;

/// Up to five atoms on a coarse grid (so ties occur) with integer weights.
fn small_measure() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-8i32..=8, 1u32..=6), 1..=5).prop_map(|atoms| {
        let total: u32 = atoms.iter().map(|a| a.1).sum();
        atoms
            .into_iter()
            .map(|(x, w)| (f64::from(x) * 0.5, f64::from(w) / f64::from(total)))
            .collect()
    })
}

fn measure(atoms: &[(f64, f64)]) -> EmpiricalMeasure {
    EmpiricalMeasure::from_atoms(atoms.iter().copied()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn quantile_coupling_matches_transport_solver(a in small_measure(), b in small_measure()) {
        let d = w2(&measure(&a), &measure(&b));
        let reference = w2_squared_transport(&a, &b).max(0.0).sqrt();
        prop_assert!((d - reference).abs() <= 1e-9, "{d} vs {reference}");
    }

    #[test]
    fn metric_axioms(a in small_measure(), b in small_measure(), c in small_measure()) {
        let (ma, mb, mc) = (measure(&a), measure(&b), measure(&c));
        prop_assert_eq!(w2(&ma, &ma), 0.0);
        prop_assert!((w2(&ma, &mb) - w2(&mb, &ma)).abs() <= 1e-12);
        prop_assert!(w2(&ma, &mc) <= w2(&ma, &mb) + w2(&mb, &mc) + 1e-9);
        if w2(&ma, &mb) == 0.0 {
            prop_assert!(ma.total_variation(&mb) <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn joining_realizes_target_law(
        values in prop::collection::vec(-4i32..=4, 1..=6),
        target in small_measure(),
    ) {
        let space = DiscreteSpace::uniform(values.len()).unwrap();
        let f = RandomVariable::new(&space, values.iter().map(|&v| f64::from(v)).collect()).unwrap();
        let nu = measure(&target);
        let grid = required_join_grid(&f, &nu).unwrap();
        let j = join(&f, &nu, grid).unwrap();
        let law = EmpiricalMeasure::law_of(&j.g);
        let discrepancy: f64 = 2.0 * law.total_variation(&nu);
        prop_assert!(discrepancy <= 1e-12, "mass discrepancy {discrepancy}");
        let gap = j.f.sub(&j.g).unwrap().map(|d| d * d).expectation();
        let w = w2(&EmpiricalMeasure::law_of(&f), &nu);
        prop_assert!(gap <= w * w + 1e-9);
        prop_assert!((EmpiricalMeasure::law_of(&j.f).total_variation(&EmpiricalMeasure::law_of(&f))) <= 1e-12);
    }
}
