use hre_core::laws::Law;
use hre_core::models::{to_discrete, SequenceModel};
use hre_core::prob::{cond_exp, doob_chain, generated_partition, random_md_path, verify_md, DiscreteSpace, Partition, RandomVariable};
use hre_oracles::{brute_force_sum_law, discrete_prob};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn weighted_space() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1u32..=9, 2..=24).prop_map(|w| {
        let total: u32 = w.iter().sum();
        w.into_iter().map(|x| f64::from(x) / f64::from(total)).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tower_property_and_mean_preservation(
        weights in weighted_space(),
        seed in any::<u64>(),
        coarse_labels in 1usize..=3,
        fine_labels in 2usize..=6,
    ) {
        let space = DiscreteSpace::new(weights).unwrap();
        let n = space.atom_count();
        let x = RandomVariable::from_fn(&space, |a| ((a as u64).wrapping_mul(seed | 1) % 17) as f64 - 8.0);
        let fine: Vec<usize> = (0..n).map(|a| a % (coarse_labels * fine_labels)).collect();
        let coarse: Vec<usize> = fine.iter().map(|l| l % coarse_labels).collect();
        let pf = Partition::from_labels(&space, &fine).unwrap();
        let pc = Partition::from_labels(&space, &coarse).unwrap();
        prop_assert!(pf.refines(&pc));
        let inner = cond_exp(&x, &pf).unwrap();
        let tower = cond_exp(&inner, &pc).unwrap();
        let direct = cond_exp(&x, &pc).unwrap();
        for a in 0..n {
            prop_assert!((tower.value(a) - direct.value(a)).abs() <= 1e-12);
        }
        prop_assert!((inner.expectation() - x.expectation()).abs() <= 1e-12);
        prop_assert!(pf.measures(&inner));
        // conditioning on the finest partition is the identity
        prop_assert_eq!(cond_exp(&x, &Partition::finest(&space)).unwrap(), x.clone());
        // generated σ-algebra of x measures x
        prop_assert!(generated_partition(&space, std::slice::from_ref(&x)).unwrap().measures(&x));
    }

    #[test]
    fn exact_sum_law_matches_enumeration(
        values in prop::collection::vec(-3i32..=3, 1..=3),
        n in 1usize..=4,
        level in 0.0f64..6.0,
    ) {
        let m = values.len();
        let law = Law::Discrete {
            values: values.iter().map(|&v| f64::from(v)).collect(),
            probs: vec![1.0 / m as f64; m],
        };
        let real = to_discrete(&SequenceModel::iid(law.clone()), n, 10_000).unwrap();
        let sum = real.variables.iter().skip(1).fold(real.variables[0].clone(), |s, v| s.add(v).unwrap());
        let exact = real.space.prob(|a| sum.value(a).abs() > level);
        let atoms: Vec<(f64, f64)> = law.as_measure().unwrap().atoms().collect();
        let reference = discrete_prob(&brute_force_sum_law(&atoms, n), |s| s.abs() > level);
        prop_assert!((exact - reference).abs() <= 1e-12, "{exact} vs {reference}");
    }
}

#[test]
fn doob_chain_on_random_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..40 {
        let path = random_md_path(&mut rng, 16, 4096).unwrap();
        assert!(verify_md(&path, 1.0).pass);
        for horizon in [3, 8, 16] {
            let rep = doob_chain(&path, horizon).unwrap();
            assert!(rep.pass(), "horizon {horizon}: {rep:?}");
            assert!(rep.prob_large_sum <= rep.prob_large_increment + rep.prob_large_sum_small_increments + 1e-12);
        }
    }
}
