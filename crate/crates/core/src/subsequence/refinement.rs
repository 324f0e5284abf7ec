use std::collections::HashMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{w2, ConditionalMeasureTable, EmpiricalMeasure};
use crate::prob::{canonical_bits, Partition, RandomVariable};

/// Absolute slack on exact comparisons between weighted sums.
const SUM_TOLERANCE: f64 = 1e-12;

/// One stage of a refinement tree.
#[derive(Debug, Clone)]
pub struct RefinementStage {
    pub eps: f64,
    /// Clusters plus, when non-empty, the exceptional block (last).
    pub partition: Partition,
    /// Table blocks grouped into each cluster.
    pub clusters: Vec<Vec<usize>>,
    /// W2 diameter of `{law of f_n given a member block : n ≥ ℓ}` per cluster.
    pub diameters: Vec<f64>,
    /// Atoms of the exceptional block.
    pub exceptional: Vec<usize>,
    pub exceptional_mass: f64,
    /// `ℓ_k`: the diameters hold over indices `ℓ_k, ..., L` (one-based).
    pub start_index: usize,
}

/// `dist[(b, n), (b', n')]` over all table cells, row-major.
struct CellDistances {
    indices: usize,
    cells: usize,
    dist: Vec<f64>,
}

impl CellDistances {
    fn new(table: &ConditionalMeasureTable) -> Self {
        let indices = table.index_count();
        let cells = table.partition().block_count() * indices;
        let measure = |c: usize| table.measure(c / indices, c % indices);
        let mut dist = vec![0.0; cells * cells];
        for i in 0..cells {
            for j in i + 1..cells {
                let d = w2(measure(i), measure(j));
                dist[i * cells + j] = d;
                dist[j * cells + i] = d;
            }
        }
        CellDistances { indices, cells, dist }
    }

    /// `max_{n, n' ≥ start} dist[(a, n), (b, n')]`, zero-based `start`.
    fn block_distance(&self, a: usize, b: usize, start: usize) -> f64 {
        let mut d: f64 = 0.0;
        for n in start..self.indices {
            let row = (a * self.indices + n) * self.cells;
            for m in start..self.indices {
                d = d.max(self.dist[row + b * self.indices + m]);
            }
        }
        d
    }
}

/// Groups the blocks of `table` into clusters whose conditional laws of
/// `f_n`, over all member blocks and all `n ≥ ℓ_k`, have W2 diameter below
/// `√eps`. Blocks that cannot meet the bound on their own form the
/// exceptional block, of mass at most `min(eps, budget)`. `ℓ_k` is the
/// smallest start index (not below the previous stage's, and leaving at
/// least two indices) for which that works; clustering is complete linkage
/// within the previous stage's blocks.
pub fn refinement_step(
    table: &ConditionalMeasureTable,
    eps: f64,
    budget: f64,
    previous: Option<&RefinementStage>,
) -> Result<RefinementStage> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    let partition = table.partition();
    let space = partition.space().clone();
    let blocks = partition.block_count();
    let indices = table.index_count();
    if indices < 2 {
        return Err(Error::InvalidParameter("table needs at least two variables".into()));
    }
    let (group, was_exceptional, first_start) = match previous {
        Some(prev) => {
            if !std::sync::Arc::ptr_eq(prev.partition.space(), &space) {
                return Err(Error::SpaceMismatch);
            }
            if !partition.refines(&prev.partition) {
                return Err(Error::InvalidPartition(
                    "table partition does not refine the previous stage".into(),
                ));
            }
            let mut in_prev = vec![false; space.atom_count()];
            for &a in &prev.exceptional {
                in_prev[a] = true;
            }
            let group: Vec<usize> = partition
                .blocks()
                .iter()
                .map(|b| prev.partition.block_of(b[0]))
                .collect();
            let was: Vec<bool> = partition.blocks().iter().map(|b| in_prev[b[0]]).collect();
            (group, Some(was), prev.start_index - 1)
        }
        None => (vec![0; blocks], None, 0),
    };
    let limit = eps.min(budget);
    let radius = eps.sqrt();
    let distances = CellDistances::new(table);
    let mut smallest_mass = f64::INFINITY;
    let mut chosen = None;
    // a one-index window has no spread to measure
    for start in first_start..indices - 1 {
        let bad: Vec<bool> = (0..blocks)
            .map(|b| distances.block_distance(b, b, start) >= radius)
            .collect();
        let mass: f64 = (0..blocks)
            .filter(|&b| bad[b])
            .map(|b| partition.block_mass(b))
            .fold(0.0, |acc, m| acc + m);
        let nested = was_exceptional
            .as_ref()
            .is_none_or(|was| (0..blocks).all(|b| !bad[b] || was[b]));
        if nested {
            smallest_mass = smallest_mass.min(mass);
        }
        if nested && mass <= limit {
            chosen = Some((start, bad, mass));
            break;
        }
    }
    let Some((start, bad, exceptional_mass)) = chosen else {
        return Err(Error::EgorovBudgetExceeded {
            mass: smallest_mass,
            budget: limit,
        });
    };

    // complete-linkage agglomeration within groups
    let mut clusters: Vec<Vec<usize>> = (0..blocks).filter(|&b| !bad[b]).map(|b| vec![b]).collect();
    let linkage = |x: &[usize], y: &[usize]| {
        x.iter()
            .flat_map(|&a| y.iter().map(move |&b| (a, b)))
            .map(|(a, b)| distances.block_distance(a, b, start))
            .fold(0.0, f64::max)
    };
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                if group[clusters[i][0]] != group[clusters[j][0]] {
                    continue;
                }
                let d = linkage(&clusters[i], &clusters[j]);
                if d < radius && best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let Some((_, i, j)) = best else { break };
        let merged = clusters.remove(j);
        clusters[i].extend(merged);
        clusters[i].sort_unstable();
    }
    let diameters: Vec<f64> = clusters.iter().map(|c| linkage(c, c)).collect();
    let mut atom_blocks: Vec<Vec<usize>> = clusters
        .iter()
        .map(|c| {
            let mut atoms: Vec<usize> = c.iter().flat_map(|&b| partition.blocks()[b].iter().copied()).collect();
            atoms.sort_unstable();
            atoms
        })
        .collect();
    let mut exceptional: Vec<usize> = (0..blocks)
        .filter(|&b| bad[b])
        .flat_map(|b| partition.blocks()[b].iter().copied())
        .collect();
    exceptional.sort_unstable();
    if !exceptional.is_empty() {
        atom_blocks.push(exceptional.clone());
    }
    Ok(RefinementStage {
        eps,
        partition: Partition::new(&space, atom_blocks)?,
        clusters,
        diameters,
        exceptional,
        exceptional_mass,
        start_index: start + 1,
    })
}

/// Speeds `ε_k = 2^{-k}`, `k = 1, ..., depth`.
pub fn default_schedule(depth: usize) -> Vec<f64> {
    (1..=depth).map(|k| 0.5f64.powi(k as i32)).collect()
}

/// Fixed-depth sequence of refinement stages.
#[derive(Debug, Clone, Default)]
pub struct RefinementTree {
    pub stages: Vec<RefinementStage>,
}

impl RefinementTree {
    /// Adds a stage built from `table`, which must refine the last stage.
    pub fn push(&mut self, table: &ConditionalMeasureTable, eps: f64, budget: f64) -> Result<&RefinementStage> {
        let stage = refinement_step(table, eps, budget, self.stages.last())?;
        self.stages.push(stage);
        Ok(self.stages.last().expect("just pushed"))
    }

    /// One table for every stage.
    pub fn build(table: &ConditionalMeasureTable, schedule: &[f64]) -> Result<Self> {
        let mut tree = RefinementTree::default();
        for &eps in schedule {
            tree.push(table, eps, eps)?;
        }
        Ok(tree)
    }

    /// Monotone refinement, nested exceptional blocks, exceptional masses
    /// and diameter bounds.
    pub fn invariants_hold(&self) -> bool {
        let each = self.stages.iter().all(|s| {
            s.exceptional_mass <= s.eps && s.diameters.iter().all(|&d| d <= s.eps.sqrt())
        });
        let nested = self.stages.windows(2).all(|w| {
            let mut prev = vec![false; w[0].partition.space().atom_count()];
            for &a in &w[0].exceptional {
                prev[a] = true;
            }
            w[1].partition.refines(&w[0].partition)
                && w[1].exceptional.iter().all(|&a| prev[a])
                && w[1].start_index >= w[0].start_index
        });
        each && nested
    }

    /// Per-stage table: speed, start index, exceptional mass and the
    /// largest cluster diameter.
    pub fn to_text(&self) -> String {
        let mut out = String::from("stage,eps,start_index,clusters,exceptional_mass,max_diameter,sqrt_eps\n");
        for (k, s) in self.stages.iter().enumerate() {
            let dmax = s.diameters.iter().copied().fold(0.0, f64::max);
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                k + 1,
                s.eps,
                s.start_index,
                s.clusters.len(),
                s.exceptional_mass,
                dmax,
                s.eps.sqrt()
            )
            .expect("writing to a string");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmnibusBlock {
    pub mass: f64,
    /// Largest deviation of the conditional joint law of `h` from the
    /// product of its first conditional marginal.
    pub iid_gap: f64,
    /// `max_n E^B[(f*_n − h_n)²]`.
    pub conditional_mse: f64,
    /// Cumulative exact series of `h` at `ε/2` under `P(· | B)`.
    pub h_series: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmnibusReport {
    pub epsilon: f64,
    pub blocks: Vec<OmnibusBlock>,
    /// `E(f_n − f*_n)² − 2^{-n}` maxima, when originals were supplied.
    pub paired_excess: Option<f64>,
    /// Cumulative `Σ_{N'≤N} P(|Σ_{n≤N'} f*_n| > εN')` for each `N`.
    pub series_target: Vec<f64>,
    /// Same for `h` at `ε/2`.
    pub series_h: Vec<f64>,
    /// Same for `f* − h` at `ε/2`.
    pub series_difference: Vec<f64>,
    /// `Σ_B P(B)·(block series of h)` at the last horizon.
    pub h_series_by_total_probability: f64,
    pub conditionally_iid: bool,
    pub mse_within_one: bool,
    pub decomposition_holds: bool,
}

impl OmnibusReport {
    pub fn pass(&self) -> bool {
        self.conditionally_iid
            && self.mse_within_one
            && self.decomposition_holds
            && self.paired_excess.is_none_or(|e| e <= SUM_TOLERANCE)
    }
}

/// Cumulative exact tail series of `xs` at level `eps`, conditional on the
/// atoms listed.
fn exact_series(xs: &[RandomVariable], eps: f64, atoms: &[usize]) -> Vec<f64> {
    let space = xs[0].space();
    let total: f64 = atoms.iter().map(|&a| space.weight(a)).sum();
    let mut p = vec![0.0; xs.len()];
    for &a in atoms {
        let w = space.weight(a) / total;
        let mut s = 0.0;
        for (i, x) in xs.iter().enumerate() {
            s += x.value(a);
            if s.abs() > eps * (i + 1) as f64 {
                p[i] += w;
            }
        }
    }
    p.iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Largest deviation between the joint conditional law of `h` on `atoms`
/// and the product of the conditional law of `h_1`; also covers unequal
/// marginals, which break the factorization.
fn iid_gap(h: &[RandomVariable], atoms: &[usize]) -> Result<f64> {
    let space = h[0].space();
    let total: f64 = atoms.iter().map(|&a| space.weight(a)).sum();
    let common = EmpiricalMeasure::conditional_law(&h[0], atoms)?;
    let mass_of: HashMap<u64, f64> = common.atoms().map(|(x, m)| (canonical_bits(x), m)).collect();
    let mut joint: HashMap<Vec<u64>, (f64, f64)> = HashMap::new();
    for &a in atoms {
        let key: Vec<u64> = h.iter().map(|x| canonical_bits(x.value(a))).collect();
        let product = key.iter().map(|k| mass_of.get(k).copied().unwrap_or(0.0)).product();
        joint.entry(key).or_insert((0.0, product)).0 += space.weight(a) / total;
    }
    let mut gap: f64 = 0.0;
    let mut covered = 0.0;
    for (p, q) in joint.values() {
        gap = gap.max((p - q).abs());
        covered += q;
    }
    // product mass on tuples that never occur
    Ok(gap.max(1.0 - covered))
}

/// Per-block conditional iid-ness of `h`, the conditional mean-square bound
/// `E^B[(f*_n − h_n)²] ≤ 1`, the paired bound `E(f_n − f*_n)² ≤ 2^{-n}` for
/// supplied originals, and the pathwise split
/// `{|Σf*| > εN} ⊆ {|Σh| > εN/2} ∪ {|Σ(f* − h)| > εN/2}` at every horizon.
pub fn omnibus_check(
    blocks: &Partition,
    h: &[RandomVariable],
    f_star: &[RandomVariable],
    originals: Option<&[RandomVariable]>,
    epsilon: f64,
) -> Result<OmnibusReport> {
    if h.is_empty() || h.len() != f_star.len() {
        return Err(Error::InvalidParameter("h and f* must be non-empty and of equal length".into()));
    }
    let space = blocks.space();
    let same = |xs: &[RandomVariable]| xs.iter().all(|x| std::sync::Arc::ptr_eq(x.space(), space));
    if !same(h) || !same(f_star) || originals.is_some_and(|f| !same(f)) {
        return Err(Error::SpaceMismatch);
    }
    let diff: Vec<RandomVariable> = f_star
        .iter()
        .zip(h)
        .map(|(f, g)| f.sub(g))
        .collect::<Result<_>>()?;
    let squared: Vec<RandomVariable> = diff.iter().map(|d| d.map(|v| v * v)).collect();
    let mut out_blocks = Vec::with_capacity(blocks.block_count());
    for (b, atoms) in blocks.blocks().iter().enumerate() {
        let mass = blocks.block_mass(b);
        if mass <= 0.0 {
            return Err(Error::ZeroMassBlock { block: b });
        }
        let conditional_mse = squared
            .iter()
            .map(|s| atoms.iter().map(|&a| space.weight(a) * s.value(a)).sum::<f64>() / mass)
            .fold(0.0, f64::max);
        out_blocks.push(OmnibusBlock {
            mass,
            iid_gap: iid_gap(h, atoms)?,
            conditional_mse,
            h_series: exact_series(h, epsilon / 2.0, atoms),
        });
    }
    let paired_excess = originals
        .map(|f| -> Result<f64> {
            if f.len() != f_star.len() {
                return Err(Error::InvalidParameter("originals must match f* in length".into()));
            }
            Ok(f.iter()
                .zip(f_star)
                .enumerate()
                .map(|(i, (x, y))| {
                    let gap = x.sub(y).expect("same space").map(|v| v * v).expectation();
                    gap - 0.5f64.powi(i as i32 + 1)
                })
                .fold(f64::NEG_INFINITY, f64::max))
        })
        .transpose()?;
    let all: Vec<usize> = (0..space.atom_count()).collect();
    let series_target = exact_series(f_star, epsilon, &all);
    let series_h = exact_series(h, epsilon / 2.0, &all);
    let series_difference = exact_series(&diff, epsilon / 2.0, &all);
    let decomposition_holds = (0..h.len())
        .all(|i| series_target[i] <= series_h[i] + series_difference[i] + SUM_TOLERANCE);
    let h_series_by_total_probability = out_blocks
        .iter()
        .map(|b| b.mass * b.h_series.last().copied().unwrap_or(0.0))
        .sum();
    Ok(OmnibusReport {
        epsilon,
        conditionally_iid: out_blocks.iter().all(|b| b.iid_gap <= SUM_TOLERANCE),
        mse_within_one: out_blocks.iter().all(|b| b.conditional_mse <= 1.0 + SUM_TOLERANCE),
        decomposition_holds,
        blocks: out_blocks,
        paired_excess,
        series_target,
        series_h,
        series_difference,
        h_series_by_total_probability,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::DiscreteSpace;
    use std::sync::Arc;

    /// `label × {±1}^n` with label masses `masses` and scale per label.
    fn labelled_walk(masses: &[f64], scales: &[f64], n: usize) -> (Arc<DiscreteSpace>, Vec<usize>, Vec<RandomVariable>) {
        let cells = 1usize << n;
        let weights: Vec<f64> = masses
            .iter()
            .flat_map(|&m| std::iter::repeat_n(m / cells as f64, cells))
            .collect();
        let space = DiscreteSpace::new(weights).unwrap();
        let labels: Vec<usize> = (0..space.atom_count()).map(|a| a / cells).collect();
        let h = (0..n)
            .map(|i| {
                RandomVariable::from_fn(&space, |a| {
                    let bit = ((a % cells) >> (n - 1 - i)) & 1;
                    scales[a / cells] * if bit == 1 { 1.0 } else { -1.0 }
                })
            })
            .collect();
        (space, labels, h)
    }

    #[test]
    fn iid_needs_no_split() {
        let (space, _, h) = labelled_walk(&[1.0], &[1.0], 3);
        let table = ConditionalMeasureTable::new(&Partition::trivial(&space), &h).unwrap();
        let tree = RefinementTree::build(&table, &default_schedule(3)).unwrap();
        for s in &tree.stages {
            assert_eq!(s.diameters, vec![0.0]);
            assert_eq!(s.start_index, 1);
            assert!(s.exceptional.is_empty());
            assert!(s.exceptional_mass.is_sign_positive());
        }
        assert!(tree.invariants_hold());
    }

    #[test]
    fn mixture_splits_along_labels() {
        let (space, labels, h) = labelled_walk(&[0.5, 0.5], &[1.0, 3.0], 3);
        let p = Partition::from_labels(&space, &labels).unwrap();
        let table = ConditionalMeasureTable::new(&p, &h).unwrap();
        let tree = RefinementTree::build(&table, &default_schedule(2)).unwrap();
        let last = tree.stages.last().unwrap();
        assert_eq!(last.clusters, vec![vec![0], vec![1]]);
        assert!(last.diameters.iter().all(|&d| d == 0.0));
        assert!(tree.invariants_hold());
        assert!(tree.to_text().lines().count() == 3);
    }

    #[test]
    fn drifting_laws_push_the_start_index() {
        let space = DiscreteSpace::uniform(2).unwrap();
        let f: Vec<_> = (1..=8)
            .map(|n| {
                let s = 1.0 + 0.5f64.powi(n);
                RandomVariable::new(&space, vec![-s, s]).unwrap()
            })
            .collect();
        let table = ConditionalMeasureTable::new(&Partition::trivial(&space), &f).unwrap();
        let tree = RefinementTree::build(&table, &default_schedule(6)).unwrap();
        let starts: Vec<usize> = tree.stages.iter().map(|s| s.start_index).collect();
        assert!(starts.windows(2).all(|w| w[0] <= w[1]));
        assert!(starts.last().unwrap() > &starts[0]);
        assert!(tree.invariants_hold());
    }

    #[test]
    fn rough_data_exceeds_budget() {
        let space = DiscreteSpace::uniform(2).unwrap();
        let f = vec![
            RandomVariable::new(&space, vec![-1.0, 1.0]).unwrap(),
            RandomVariable::new(&space, vec![-5.0, 5.0]).unwrap(),
        ];
        let p = Partition::trivial(&space);
        let table = ConditionalMeasureTable::new(&p, &f).unwrap();
        let f2 = vec![f[0].clone(), f[1].clone(), f[0].clone()];
        let table2 = ConditionalMeasureTable::new(&p, &f2).unwrap();
        assert!(matches!(
            refinement_step(&table, 0.25, 0.25, None),
            Err(Error::EgorovBudgetExceeded { .. })
        ));
        assert!(matches!(
            refinement_step(&table2, 0.25, 0.25, None),
            Err(Error::EgorovBudgetExceeded { .. })
        ));
    }

    #[test]
    fn light_rough_block_becomes_exceptional() {
        // atoms 0..8 form a calm block of mass 7/8, atoms 8..10 a rough one
        let mut w = vec![7.0 / 64.0; 8];
        w.extend([1.0 / 16.0; 2]);
        let space = DiscreteSpace::new(w).unwrap();
        let labels: Vec<usize> = (0..10).map(|a| a / 8).collect();
        let p = Partition::from_labels(&space, &labels).unwrap();
        let f: Vec<_> = (0..4)
            .map(|n| {
                RandomVariable::from_fn(&space, |a| {
                    let sign = if a % 2 == 0 { -1.0 } else { 1.0 };
                    let scale = if a < 8 || n % 2 == 0 { 1.0 } else { 5.0 };
                    sign * scale
                })
            })
            .collect();
        let table = ConditionalMeasureTable::new(&p, &f).unwrap();
        let stage = refinement_step(&table, 0.25, 0.25, None).unwrap();
        assert_eq!(stage.exceptional, vec![8, 9]);
        assert!((stage.exceptional_mass - 0.125).abs() < 1e-15);
        assert_eq!(stage.clusters, vec![vec![0]]);
        assert!(refinement_step(&table, 0.0625, 0.0625, None).is_err());
    }

    #[test]
    fn omnibus_identical_sequences() {
        let (space, _, h) = labelled_walk(&[1.0], &[1.0], 4);
        let rep = omnibus_check(&Partition::trivial(&space), &h, &h, None, 0.5).unwrap();
        assert!(rep.pass());
        assert!(rep.series_difference.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn omnibus_with_constant_perturbations() {
        let (space, _, h) = labelled_walk(&[1.0], &[1.0], 4);
        let f_star: Vec<_> = h
            .iter()
            .enumerate()
            .map(|(i, x)| x.map(|v| v + 0.5f64.powi(i as i32 + 1)))
            .collect();
        let rep = omnibus_check(&Partition::trivial(&space), &h, &f_star, Some(&f_star), 1.0).unwrap();
        assert!(rep.pass());
    }

    #[test]
    fn omnibus_total_probability_over_blocks() {
        let (space, labels, h) = labelled_walk(&[0.75, 0.25], &[1.0, 2.0], 5);
        let p = Partition::from_labels(&space, &labels).unwrap();
        let rep = omnibus_check(&p, &h, &h, None, 1.0).unwrap();
        assert!(rep.pass());
        let last = *rep.series_h.last().unwrap();
        assert!((rep.h_series_by_total_probability - last).abs() < 1e-12);
        // h is not iid on the whole space: scales differ between labels
        let whole = omnibus_check(&Partition::trivial(&space), &h, &h, None, 1.0).unwrap();
        assert!(!whole.conditionally_iid);
    }
}
