use std::sync::Arc;

use rand::Rng;

use super::space::{cond_exp, generated_partition, DiscreteSpace, Partition, RandomVariable};
use crate::error::{Error, Result};

/// Conditional means below this are treated as exact zeros.
pub const MD_TOLERANCE: f64 = 1e-12;

/// Increments `f_1, f_2, ...` together with a filtration `F_1 ⊆ F_2 ⊆ ...`
/// such that `f_n` is `F_n`-measurable. `F_0` is the trivial σ-algebra.
#[derive(Debug, Clone)]
pub struct MartingalePath {
    space: Arc<DiscreteSpace>,
    increments: Vec<RandomVariable>,
    filtration: Vec<Partition>,
}

impl MartingalePath {
    pub fn new(
        space: &Arc<DiscreteSpace>,
        increments: Vec<RandomVariable>,
        filtration: Vec<Partition>,
    ) -> Result<Self> {
        if increments.len() != filtration.len() {
            return Err(Error::InvalidPath(format!(
                "{} increments but {} filtration steps",
                increments.len(),
                filtration.len()
            )));
        }
        if increments.iter().any(|x| !Arc::ptr_eq(x.space(), space))
            || filtration.iter().any(|p| !Arc::ptr_eq(p.space(), space))
        {
            return Err(Error::SpaceMismatch);
        }
        for (n, (x, p)) in increments.iter().zip(&filtration).enumerate() {
            if !p.measures(x) {
                return Err(Error::InvalidPath(format!(
                    "increment {} is not measurable for its filtration step",
                    n + 1
                )));
            }
            if n > 0 && !p.refines(&filtration[n - 1]) {
                return Err(Error::InvalidPath(format!(
                    "filtration step {} does not refine its predecessor",
                    n + 1
                )));
            }
        }
        Ok(MartingalePath {
            space: Arc::clone(space),
            increments,
            filtration,
        })
    }

    /// Path with the natural filtration `F_n = σ(f_1, ..., f_n)`.
    pub fn natural(space: &Arc<DiscreteSpace>, increments: Vec<RandomVariable>) -> Result<Self> {
        let filtration = (1..=increments.len())
            .map(|n| generated_partition(space, &increments[..n]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(space, increments, filtration)
    }

    pub fn space(&self) -> &Arc<DiscreteSpace> {
        &self.space
    }

    pub fn increments(&self) -> &[RandomVariable] {
        &self.increments
    }

    pub fn filtration(&self) -> &[Partition] {
        &self.filtration
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// σ-algebra available before increment `n` (1-based).
    fn past(&self, n: usize) -> Partition {
        if n == 1 {
            Partition::trivial(&self.space)
        } else {
            self.filtration[n - 2].clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdReport {
    /// `max_n max_ω |E(f_n | F_{n-1})|`.
    pub max_cond_mean: f64,
    /// `max_n max_ω E(f_n² | F_{n-1})`.
    pub max_cond_second_moment: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Checks the martingale-difference property and the conditional second
/// moment bound `E(f_n² | F_{n-1}) ≤ bound`.
pub fn verify_md(path: &MartingalePath, bound: f64) -> MdReport {
    let mut max_cond_mean: f64 = 0.0;
    let mut max_cond_second_moment: f64 = 0.0;
    for (i, f) in path.increments.iter().enumerate() {
        let past = path.past(i + 1);
        let mean = cond_exp(f, &past).expect("path increments share the path space");
        let second = cond_exp(&f.map(|v| v * v), &past).expect("same space");
        max_cond_mean = max_cond_mean.max(mean.max_abs());
        max_cond_second_moment = max_cond_second_moment.max(second.max_abs());
    }
    MdReport {
        max_cond_mean,
        max_cond_second_moment,
        bound,
        pass: max_cond_mean <= MD_TOLERANCE && max_cond_second_moment <= bound + MD_TOLERANCE,
    }
}

/// First passage time; `Never` when the level is not crossed by the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StoppingTime {
    At(usize),
    Never,
}

impl StoppingTime {
    pub fn is_finite(self) -> bool {
        matches!(self, StoppingTime::At(_))
    }
}

/// Exact event probabilities for the stopped walk at horizon `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DoobChainReport {
    pub horizon: usize,
    /// Per atom: first `m ≤ n` with `|X_m| > n/3`.
    pub stopping_times: Vec<StoppingTime>,
    /// Per atom: `Y_n = X_n - X_{n ∧ τ}`.
    pub stopped_remainder: Vec<f64>,
    pub prob_stopped: f64,
    /// `P(|X_n| > n)`.
    pub prob_large_sum: f64,
    /// `P(max_{m≤n} |f_m| > n/3)`.
    pub prob_large_increment: f64,
    /// `P(|X_n| > n, max_{m≤n} |f_m| ≤ n/3)`.
    pub prob_large_sum_small_increments: f64,
    /// `P(τ < ∞, |X_τ| ≤ 2n/3, |Y_n| > n/3)`, the intermediate event of the chain.
    pub prob_overshoot_event: f64,
    /// `36/n`.
    pub stopping_bound: f64,
    /// `324/n²`.
    pub joint_bound: f64,
}

impl DoobChainReport {
    pub fn pass(&self) -> bool {
        self.prob_stopped <= self.stopping_bound
            && self.prob_large_sum_small_increments <= self.prob_overshoot_event
            && self.prob_overshoot_event <= self.joint_bound
    }
}

pub fn doob_chain(path: &MartingalePath, horizon: usize) -> Result<DoobChainReport> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    if horizon > path.len() {
        return Err(Error::HorizonTooLong {
            requested: horizon,
            available: path.len(),
        });
    }
    let level = horizon as f64 / 3.0;
    let nf = horizon as f64;
    let space = &path.space;
    let atoms = space.atom_count();

    let mut stopping_times = Vec::with_capacity(atoms);
    let mut stopped_remainder = Vec::with_capacity(atoms);
    let mut report = DoobChainReport {
        horizon,
        stopping_times: Vec::new(),
        stopped_remainder: Vec::new(),
        prob_stopped: 0.0,
        prob_large_sum: 0.0,
        prob_large_increment: 0.0,
        prob_large_sum_small_increments: 0.0,
        prob_overshoot_event: 0.0,
        stopping_bound: 36.0 / nf,
        joint_bound: 324.0 / (nf * nf),
    };

    for atom in 0..atoms {
        let w = space.weight(atom);
        let mut sum = 0.0;
        let mut max_inc: f64 = 0.0;
        let mut tau = StoppingTime::Never;
        let mut sum_at_tau = 0.0;
        for (m, f) in path.increments[..horizon].iter().enumerate() {
            let v = f.value(atom);
            sum += v;
            max_inc = max_inc.max(v.abs());
            if tau == StoppingTime::Never && sum.abs() > level {
                tau = StoppingTime::At(m + 1);
                sum_at_tau = sum;
            }
        }
        let remainder = if tau.is_finite() { sum - sum_at_tau } else { 0.0 };
        let large_sum = sum.abs() > nf;
        let small_increments = max_inc <= level;
        if tau.is_finite() {
            report.prob_stopped += w;
            if sum_at_tau.abs() <= 2.0 * level && remainder.abs() > level {
                report.prob_overshoot_event += w;
            }
        }
        if large_sum {
            report.prob_large_sum += w;
            if small_increments {
                report.prob_large_sum_small_increments += w;
            }
        }
        if !small_increments {
            report.prob_large_increment += w;
        }
        stopping_times.push(tau);
        stopped_remainder.push(remainder);
    }
    report.stopping_times = stopping_times;
    report.stopped_remainder = stopped_remainder;
    Ok(report)
}

/// Random simple martingale-difference path on a finite tree.
///
/// Every leaf either stays put (increment 0) or splits into a centered
/// two-point law `{a, -b}` with `ab ≤ 1`, so `E(f_n² | F_{n-1}) ≤ 1`.
/// Large `a` with small probability produces occasional big jumps. Splits
/// are suppressed once the leaf count would exceed `atom_cap`.
pub fn random_md_path<R: Rng + ?Sized>(
    rng: &mut R,
    steps: usize,
    atom_cap: usize,
) -> Result<MartingalePath> {
    if atom_cap == 0 {
        return Err(Error::InvalidParameter("atom cap must be positive".into()));
    }
    struct Leaf {
        weight: f64,
        values: Vec<f64>,
        nodes: Vec<usize>,
    }
    let mut leaves = vec![Leaf {
        weight: 1.0,
        values: Vec::new(),
        nodes: Vec::new(),
    }];
    let mut next_node = 0usize;
    // expected growth per step keeps the tree near the cap by the horizon
    let split_prob = if steps == 0 {
        0.0
    } else {
        ((atom_cap as f64).log2() / steps as f64).clamp(0.05, 1.0)
    };
    for _ in 0..steps {
        let mut next = Vec::with_capacity(leaves.len() * 2);
        let mut count = leaves.len();
        for leaf in leaves {
            let split = count < atom_cap && rng.random::<f64>() < split_prob;
            if split {
                count += 1;
                let a = 10f64.powf(rng.random_range(-1.0..1.5));
                let b = rng.random_range(0.05..=1.0) / a;
                let q = b / (a + b);
                for (value, p) in [(a, q), (-b, 1.0 - q)] {
                    let mut values = leaf.values.clone();
                    values.push(value);
                    let mut nodes = leaf.nodes.clone();
                    nodes.push(next_node);
                    next_node += 1;
                    next.push(Leaf {
                        weight: leaf.weight * p,
                        values,
                        nodes,
                    });
                }
            } else {
                let Leaf {
                    weight,
                    mut values,
                    mut nodes,
                } = leaf;
                values.push(0.0);
                nodes.push(next_node);
                next_node += 1;
                next.push(Leaf {
                    weight,
                    values,
                    nodes,
                });
            }
        }
        leaves = next;
    }
    let space = DiscreteSpace::new(leaves.iter().map(|l| l.weight).collect())?;
    let increments = (0..steps)
        .map(|n| RandomVariable::new(&space, leaves.iter().map(|l| l.values[n]).collect()))
        .collect::<Result<Vec<_>>>()?;
    let filtration = (0..steps)
        .map(|n| {
            let labels: Vec<usize> = leaves.iter().map(|l| l.nodes[n]).collect();
            Partition::from_labels(&space, &labels)
        })
        .collect::<Result<Vec<_>>>()?;
    MartingalePath::new(&space, increments, filtration)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Coordinates of the uniform product space `{-1, 1}^n`.
    fn rademacher_walk(n: usize) -> MartingalePath {
        let space = DiscreteSpace::uniform(1 << n).unwrap();
        let coords = (0..n)
            .map(|k| {
                RandomVariable::from_fn(&space, |a| if a >> (n - 1 - k) & 1 == 1 { 1.0 } else { -1.0 })
            })
            .collect();
        MartingalePath::natural(&space, coords).unwrap()
    }

    #[test]
    fn rademacher_coordinates_are_martingale_differences() {
        let r = verify_md(&rademacher_walk(4), 1.0);
        assert!(r.pass);
        assert_eq!(r.max_cond_mean, 0.0);
        assert_eq!(r.max_cond_second_moment, 1.0);
    }

    #[test]
    fn copied_increment_fails() {
        let space = DiscreteSpace::uniform(2).unwrap();
        let f = RandomVariable::new(&space, vec![1.0, -1.0]).unwrap();
        let path = MartingalePath::natural(&space, vec![f.clone(), f]).unwrap();
        let r = verify_md(&path, 10.0);
        assert!(!r.pass);
        assert_eq!(r.max_cond_mean, 1.0);
    }

    #[test]
    fn zero_path_never_stops() {
        let space = DiscreteSpace::uniform(3).unwrap();
        let zero = RandomVariable::constant(&space, 0.0);
        let path = MartingalePath::natural(&space, vec![zero; 5]).unwrap();
        let r = doob_chain(&path, 5).unwrap();
        assert_eq!(r.prob_stopped, 0.0);
        assert_eq!(r.prob_large_sum, 0.0);
        assert!(r.stopping_times.iter().all(|t| *t == StoppingTime::Never));
    }

    #[test]
    fn simple_walk_horizon_three() {
        // |X_1| = 1 never exceeds 1; |X_2| = 2 on half the paths.
        let r = doob_chain(&rademacher_walk(3), 3).unwrap();
        assert_eq!(r.prob_stopped, 0.5);
        assert!(r.pass());
        assert_eq!(r.stopping_bound, 12.0);
    }

    #[test]
    fn horizon_longer_than_path_is_rejected() {
        assert_eq!(
            doob_chain(&rademacher_walk(2), 3).unwrap_err(),
            Error::HorizonTooLong {
                requested: 3,
                available: 2
            }
        );
    }

    #[test]
    fn non_refining_filtration_is_rejected() {
        let space = DiscreteSpace::uniform(2).unwrap();
        let f = RandomVariable::new(&space, vec![1.0, -1.0]).unwrap();
        let zero = RandomVariable::constant(&space, 0.0);
        let fine = Partition::finest(&space);
        let coarse = Partition::trivial(&space);
        assert!(MartingalePath::new(&space, vec![f, zero], vec![fine, coarse]).is_err());
    }

    #[test]
    fn random_paths_are_bounded_martingale_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let path = random_md_path(&mut rng, 16, 512).unwrap();
            assert!(path.space().atom_count() <= 512);
            assert!(verify_md(&path, 1.0).pass);
        }
    }
}
