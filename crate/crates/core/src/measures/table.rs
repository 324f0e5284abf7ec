use super::empirical::EmpiricalMeasure;
use crate::error::{Error, Result};
use crate::prob::{Partition, RandomVariable};

/// Conditional laws of `f_1, ..., f_L` given each block of a partition.
#[derive(Debug, Clone)]
pub struct ConditionalMeasureTable {
    partition: Partition,
    variables: Vec<RandomVariable>,
    /// `rows[block][n]` is the law of `f_{n+1}` under `P(· | block)`.
    rows: Vec<Vec<EmpiricalMeasure>>,
}

impl ConditionalMeasureTable {
    pub fn new(partition: &Partition, variables: &[RandomVariable]) -> Result<Self> {
        if variables
            .iter()
            .any(|x| !std::sync::Arc::ptr_eq(x.space(), partition.space()))
        {
            return Err(Error::SpaceMismatch);
        }
        let rows = partition
            .blocks()
            .iter()
            .map(|block| {
                variables
                    .iter()
                    .map(|x| EmpiricalMeasure::conditional_law(x, block))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ConditionalMeasureTable {
            partition: partition.clone(),
            variables: variables.to_vec(),
            rows,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn variables(&self) -> &[RandomVariable] {
        &self.variables
    }

    pub fn rows(&self) -> &[Vec<EmpiricalMeasure>] {
        &self.rows
    }

    pub fn index_count(&self) -> usize {
        self.variables.len()
    }

    /// Law of `f_{n+1}` given `block`.
    pub fn measure(&self, block: usize, n: usize) -> &EmpiricalMeasure {
        &self.rows[block][n]
    }
}

#[derive(Debug, Clone)]
pub struct Aggregate {
    /// Per index, `Σ_B P(B) μ_n^B`.
    pub mixtures: Vec<EmpiricalMeasure>,
    /// Largest gap between `∫ φ d(mixture)` and `E φ(f_n)` over
    /// `φ ∈ {1, x, x²}` and all indices.
    pub max_moment_gap: f64,
    pub pass: bool,
}

/// Relative tolerance for the aggregation identity.
const AGGREGATE_TOLERANCE: f64 = 1e-12;

/// Mixes the conditional laws with the block masses and checks the result
/// against direct expectations of the test functions `1, x, x²`.
pub fn aggregate(table: &ConditionalMeasureTable) -> Result<Aggregate> {
    let masses: Vec<f64> = (0..table.partition.block_count())
        .map(|b| table.partition.block_mass(b))
        .collect();
    let mut mixtures = Vec::with_capacity(table.index_count());
    let mut max_moment_gap: f64 = 0.0;
    let mut pass = true;
    for (n, x) in table.variables.iter().enumerate() {
        let mixture = EmpiricalMeasure::mixture(
            masses
                .iter()
                .zip(&table.rows)
                .map(|(&w, row)| (w, &row[n])),
        )?;
        let tests: [fn(f64) -> f64; 3] = [|_| 1.0, |v| v, |v| v * v];
        for phi in tests {
            let direct = x.map(phi).expectation();
            let mixed = mixture.integrate(phi);
            let gap = (direct - mixed).abs();
            max_moment_gap = max_moment_gap.max(gap);
            if gap > AGGREGATE_TOLERANCE * (1.0 + direct.abs()) {
                pass = false;
            }
        }
        mixtures.push(mixture);
    }
    Ok(Aggregate {
        mixtures,
        max_moment_gap,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::DiscreteSpace;

    #[test]
    fn single_block_aggregate_is_unconditional_law() {
        let s = DiscreteSpace::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let x = RandomVariable::new(&s, vec![1.0, 2.0, 1.0, -3.0]).unwrap();
        let table = ConditionalMeasureTable::new(&Partition::trivial(&s), std::slice::from_ref(&x)).unwrap();
        let agg = aggregate(&table).unwrap();
        assert!(agg.pass);
        assert_eq!(
            agg.mixtures[0].total_variation(&EmpiricalMeasure::law_of(&x)),
            0.0
        );
    }

    #[test]
    fn two_blocks_with_point_laws() {
        let s = DiscreteSpace::uniform(2).unwrap();
        let x = RandomVariable::new(&s, vec![0.0, 2.0]).unwrap();
        let table = ConditionalMeasureTable::new(&Partition::finest(&s), &[x]).unwrap();
        assert_eq!(table.measure(1, 0), &EmpiricalMeasure::dirac(2.0));
        let agg = aggregate(&table).unwrap();
        assert_eq!(agg.mixtures[0].mean(), 1.0);
        assert_eq!(agg.mixtures[0].masses(), &[0.5, 0.5]);
    }
}
