use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Weight deviations up to this size are renormalized silently.
const RENORMALIZE_TOLERANCE: f64 = 1e-9;

/// A finite probability space: atoms `0..atom_count` with strictly positive
/// weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSpace {
    weights: Vec<f64>,
}

impl DiscreteSpace {
    pub fn new(weights: Vec<f64>) -> Result<Arc<Self>> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("no atoms".into()));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !(w.is_finite() && **w > 0.0))
        {
            return Err(Error::InvalidWeights(format!(
                "atom {i} has non-positive weight {w}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > RENORMALIZE_TOLERANCE {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        let weights = if total == 1.0 {
            weights
        } else {
            weights.into_iter().map(|w| w / total).collect()
        };
        Ok(Arc::new(DiscreteSpace { weights }))
    }

    /// `n` equally likely atoms.
    pub fn uniform(n: usize) -> Result<Arc<Self>> {
        if n == 0 {
            return Err(Error::InvalidWeights("no atoms".into()));
        }
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn atom_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, atom: usize) -> f64 {
        self.weights[atom]
    }

    /// Probability of the event given by an atom mask.
    pub fn prob(&self, event: impl Fn(usize) -> bool) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .filter(|(i, _)| event(*i))
            .map(|(_, w)| *w)
            .sum()
    }
}

/// A real function on the atoms of a [`DiscreteSpace`].
#[derive(Debug, Clone)]
pub struct RandomVariable {
    space: Arc<DiscreteSpace>,
    values: Vec<f64>,
}

impl PartialEq for RandomVariable {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.space, &other.space) && self.values == other.values
    }
}

impl RandomVariable {
    pub fn new(space: &Arc<DiscreteSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.atom_count() {
            return Err(Error::InvalidParameter(format!(
                "random variable has {} values for {} atoms",
                values.len(),
                space.atom_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "random variable values must be finite".into(),
            ));
        }
        Ok(RandomVariable {
            space: Arc::clone(space),
            values,
        })
    }

    pub fn constant(space: &Arc<DiscreteSpace>, c: f64) -> Self {
        RandomVariable {
            space: Arc::clone(space),
            values: vec![c; space.atom_count()],
        }
    }

    pub fn from_fn(space: &Arc<DiscreteSpace>, f: impl Fn(usize) -> f64) -> Self {
        RandomVariable {
            space: Arc::clone(space),
            values: (0..space.atom_count()).map(f).collect(),
        }
    }

    pub fn space(&self) -> &Arc<DiscreteSpace> {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, atom: usize) -> f64 {
        self.values[atom]
    }

    pub fn same_space(&self, other: &RandomVariable) -> bool {
        Arc::ptr_eq(&self.space, &other.space)
    }

    pub fn expectation(&self) -> f64 {
        self.values
            .iter()
            .zip(self.space.weights())
            .map(|(v, w)| v * w)
            .sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        RandomVariable {
            space: Arc::clone(&self.space),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &RandomVariable, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !self.same_space(other) {
            return Err(Error::SpaceMismatch);
        }
        Ok(RandomVariable {
            space: Arc::clone(&self.space),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &RandomVariable) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &RandomVariable) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Restriction to an event: values off the mask are set to zero.
    pub fn restrict(&self, mask: &[bool]) -> Self {
        RandomVariable {
            space: Arc::clone(&self.space),
            values: self
                .values
                .iter()
                .zip(mask)
                .map(|(&v, &keep)| if keep { v } else { 0.0 })
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `E(X²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        self.map(|v| v * v).expectation().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.map(f64::abs).expectation()
    }

    /// Number of distinct values taken.
    pub fn alphabet_size(&self) -> usize {
        let mut v: Vec<u64> = self.values.iter().map(|x| canonical_bits(*x)).collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    }
}

/// Bit pattern used for exact value comparison; `-0.0` is folded onto `0.0`.
pub(crate) fn canonical_bits(x: f64) -> u64 {
    if x == 0.0 {
        0.0f64.to_bits()
    } else {
        x.to_bits()
    }
}

/// A finite partition of the atoms: the σ-algebra it generates.
#[derive(Debug, Clone)]
pub struct Partition {
    space: Arc<DiscreteSpace>,
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl PartialEq for Partition {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.space, &other.space) && self.blocks == other.blocks
    }
}

impl Partition {
    pub fn new(space: &Arc<DiscreteSpace>, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let n = space.atom_count();
        let mut block_of = vec![usize::MAX; n];
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::InvalidPartition(format!("block {b} is empty")));
            }
            for &atom in block {
                if atom >= n {
                    return Err(Error::InvalidPartition(format!(
                        "atom {atom} out of range"
                    )));
                }
                if block_of[atom] != usize::MAX {
                    return Err(Error::InvalidPartition(format!(
                        "atom {atom} appears in blocks {} and {b}",
                        block_of[atom]
                    )));
                }
                block_of[atom] = b;
            }
        }
        if let Some(atom) = block_of.iter().position(|&b| b == usize::MAX) {
            return Err(Error::InvalidPartition(format!("atom {atom} not covered")));
        }
        Ok(Partition {
            space: Arc::clone(space),
            blocks,
            block_of,
        })
    }

    /// Blocks given by a label per atom; block order follows first occurrence.
    pub fn from_labels<K: std::hash::Hash + Eq + Clone>(
        space: &Arc<DiscreteSpace>,
        labels: &[K],
    ) -> Result<Self> {
        if labels.len() != space.atom_count() {
            return Err(Error::InvalidPartition(format!(
                "{} labels for {} atoms",
                labels.len(),
                space.atom_count()
            )));
        }
        let mut index: HashMap<K, usize> = HashMap::new();
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let mut block_of = Vec::with_capacity(labels.len());
        for (atom, label) in labels.iter().enumerate() {
            let b = *index.entry(label.clone()).or_insert_with(|| {
                blocks.push(Vec::new());
                blocks.len() - 1
            });
            blocks[b].push(atom);
            block_of.push(b);
        }
        Ok(Partition {
            space: Arc::clone(space),
            blocks,
            block_of,
        })
    }

    pub fn trivial(space: &Arc<DiscreteSpace>) -> Self {
        let n = space.atom_count();
        Partition {
            space: Arc::clone(space),
            blocks: vec![(0..n).collect()],
            block_of: vec![0; n],
        }
    }

    pub fn finest(space: &Arc<DiscreteSpace>) -> Self {
        let n = space.atom_count();
        Partition {
            space: Arc::clone(space),
            blocks: (0..n).map(|i| vec![i]).collect(),
            block_of: (0..n).collect(),
        }
    }

    pub fn space(&self) -> &Arc<DiscreteSpace> {
        &self.space
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_of(&self, atom: usize) -> usize {
        self.block_of[atom]
    }

    pub fn block_mass(&self, block: usize) -> f64 {
        self.blocks[block]
            .iter()
            .map(|&a| self.space.weight(a))
            .sum()
    }

    /// True when every block of `self` lies inside a block of `coarser`.
    pub fn refines(&self, coarser: &Partition) -> bool {
        if !Arc::ptr_eq(&self.space, &coarser.space) {
            return false;
        }
        self.blocks.iter().all(|block| {
            let target = coarser.block_of[block[0]];
            block.iter().all(|&a| coarser.block_of[a] == target)
        })
    }

    /// True when `x` is constant on every block.
    pub fn measures(&self, x: &RandomVariable) -> bool {
        Arc::ptr_eq(&self.space, x.space())
            && self.blocks.iter().all(|block| {
                let v = canonical_bits(x.value(block[0]));
                block.iter().all(|&a| canonical_bits(x.value(a)) == v)
            })
    }

    /// Coarsest common refinement.
    pub fn join(&self, other: &Partition) -> Result<Partition> {
        if !Arc::ptr_eq(&self.space, &other.space) {
            return Err(Error::SpaceMismatch);
        }
        let labels: Vec<(usize, usize)> = (0..self.space.atom_count())
            .map(|a| (self.block_of[a], other.block_of[a]))
            .collect();
        Partition::from_labels(&self.space, &labels)
    }
}

/// Conditional expectation of `x` given the σ-algebra of `p`.
pub fn cond_exp(x: &RandomVariable, p: &Partition) -> Result<RandomVariable> {
    if !Arc::ptr_eq(x.space(), p.space()) {
        return Err(Error::SpaceMismatch);
    }
    let space = x.space();
    let mut values = vec![0.0; space.atom_count()];
    for block in p.blocks() {
        let first = x.value(block[0]);
        let avg = if block.iter().all(|&a| x.value(a) == first) {
            first
        } else {
            let (num, den) = block.iter().fold((0.0, 0.0), |(num, den), &a| {
                let w = space.weight(a);
                (num + w * x.value(a), den + w)
            });
            num / den
        };
        for &a in block {
            values[a] = avg;
        }
    }
    RandomVariable::new(space, values)
}

/// Partition generated by a family of random variables: two atoms share a
/// block iff every variable takes bit-identical values on both.
pub fn generated_partition(space: &Arc<DiscreteSpace>, xs: &[RandomVariable]) -> Result<Partition> {
    if xs.iter().any(|x| !Arc::ptr_eq(x.space(), space)) {
        return Err(Error::SpaceMismatch);
    }
    if xs.is_empty() {
        return Ok(Partition::trivial(space));
    }
    let labels: Vec<Vec<u64>> = (0..space.atom_count())
        .map(|a| xs.iter().map(|x| canonical_bits(x.value(a))).collect())
        .collect();
    Partition::from_labels(space, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four() -> Arc<DiscreteSpace> {
        DiscreteSpace::uniform(4).unwrap()
    }

    #[test]
    fn weights_must_be_positive_and_normalized() {
        assert!(DiscreteSpace::new(vec![0.5, 0.5, 0.0]).is_err());
        assert!(DiscreteSpace::new(vec![0.5, 0.6]).is_err());
        let s = DiscreteSpace::new(vec![0.5, 0.5 + 5e-10]).unwrap();
        let total: f64 = s.weights().iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn cond_exp_of_constant_is_constant() {
        let s = DiscreteSpace::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let c = RandomVariable::constant(&s, 0.7);
        let p = Partition::new(&s, vec![vec![0, 3], vec![1, 2]]).unwrap();
        assert_eq!(cond_exp(&c, &p).unwrap().values(), &[0.7; 4]);
    }

    #[test]
    fn cond_exp_on_finest_partition_is_identity() {
        let s = four();
        let x = RandomVariable::new(&s, vec![1.5, -2.0, 0.25, 9.0]).unwrap();
        assert_eq!(cond_exp(&x, &Partition::finest(&s)).unwrap(), x);
    }

    #[test]
    fn cond_exp_block_averages() {
        let s = four();
        let x = RandomVariable::new(&s, vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let p = Partition::new(&s, vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(cond_exp(&x, &p).unwrap().values(), &[2.0, 2.0, 6.0, 6.0]);
    }

    #[test]
    fn cond_exp_rejects_foreign_partition() {
        let x = RandomVariable::constant(&four(), 1.0);
        let p = Partition::trivial(&four());
        assert_eq!(cond_exp(&x, &p), Err(Error::SpaceMismatch));
    }

    #[test]
    fn generated_partitions() {
        let s = four();
        assert_eq!(generated_partition(&s, &[]).unwrap().block_count(), 1);

        let ind = RandomVariable::new(&s, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let p = generated_partition(&s, &[ind]).unwrap();
        assert_eq!(p.blocks(), &[vec![0, 2], vec![1, 3]]);

        // two Rademacher coordinates on the product space
        let r1 = RandomVariable::new(&s, vec![1.0, 1.0, -1.0, -1.0]).unwrap();
        let r2 = RandomVariable::new(&s, vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let p = generated_partition(&s, &[r1, r2]).unwrap();
        assert_eq!(p.block_count(), 4);
        assert!(p.blocks().iter().all(|b| b.len() == 1));
    }

    #[test]
    fn negative_zero_is_not_a_new_value() {
        let s = DiscreteSpace::uniform(2).unwrap();
        let x = RandomVariable::new(&s, vec![0.0, -0.0]).unwrap();
        assert_eq!(generated_partition(&s, &[x]).unwrap().block_count(), 1);
    }

    #[test]
    fn partition_validation() {
        let s = four();
        assert!(Partition::new(&s, vec![vec![0, 1], vec![1, 2, 3]]).is_err());
        assert!(Partition::new(&s, vec![vec![0, 1], vec![2]]).is_err());
        assert!(Partition::new(&s, vec![vec![0, 1, 2, 3], vec![]]).is_err());
    }
}
