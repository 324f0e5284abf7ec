use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{canonical_bits, RandomVariable};

const RENORMALIZE_TOLERANCE: f64 = 1e-9;

/// A finitely supported probability measure on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    support: Vec<f64>,
    masses: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Support must be strictly increasing and masses positive.
    pub fn new(support: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidMeasure("empty support".into()));
        }
        if support.len() != masses.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} support points but {} masses",
                support.len(),
                masses.len()
            )));
        }
        if support.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure("support must be finite".into()));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidMeasure(
                "support must be strictly increasing".into(),
            ));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::InvalidMeasure(format!("non-positive mass {m}")));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > RENORMALIZE_TOLERANCE {
            return Err(Error::InvalidMeasure(format!(
                "masses sum to {total}, expected 1"
            )));
        }
        let masses = if total == 1.0 {
            masses
        } else {
            masses.into_iter().map(|m| m / total).collect()
        };
        Ok(EmpiricalMeasure { support, masses })
    }

    /// Builds a measure from unsorted `(point, mass)` pairs, merging equal
    /// points and dropping zero masses.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut atoms: Vec<(f64, f64)> = atoms.into_iter().filter(|(_, m)| *m != 0.0).collect();
        if atoms.iter().any(|(x, _)| x.is_nan()) {
            return Err(Error::InvalidMeasure("NaN support point".into()));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support: Vec<f64> = Vec::with_capacity(atoms.len());
        let mut masses: Vec<f64> = Vec::with_capacity(atoms.len());
        for (x, m) in atoms {
            match support.last() {
                Some(&last) if canonical_bits(last) == canonical_bits(x) => {
                    *masses.last_mut().expect("parallel vectors") += m;
                }
                _ => {
                    support.push(if x == 0.0 { 0.0 } else { x });
                    masses.push(m);
                }
            }
        }
        Self::new(support, masses)
    }

    pub fn dirac(x: f64) -> Self {
        EmpiricalMeasure {
            support: vec![x],
            masses: vec![1.0],
        }
    }

    /// Law of a random variable on a finite space.
    pub fn law_of(x: &RandomVariable) -> Self {
        Self::from_atoms(
            x.values()
                .iter()
                .copied()
                .zip(x.space().weights().iter().copied()),
        )
        .expect("random variables carry a valid law")
    }

    /// Conditional law of `x` given the event formed by `atoms`.
    pub fn conditional_law(x: &RandomVariable, atoms: &[usize]) -> Result<Self> {
        let total: f64 = atoms.iter().map(|&a| x.space().weight(a)).sum();
        if total <= 0.0 {
            return Err(Error::InvalidMeasure("conditioning on a null event".into()));
        }
        Self::from_atoms(
            atoms
                .iter()
                .map(|&a| (x.value(a), x.space().weight(a) / total)),
        )
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn atoms(&self) -> impl DoubleEndedIterator<Item = (f64, f64)> + '_ {
        self.support.iter().copied().zip(self.masses.iter().copied())
    }

    /// `∫ φ dμ`.
    pub fn integrate(&self, phi: impl Fn(f64) -> f64) -> f64 {
        self.atoms().map(|(x, m)| m * phi(x)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|x| x)
    }

    pub fn second_moment(&self) -> f64 {
        self.integrate(|x| x * x)
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.integrate(|x| (x - mean) * (x - mean))
    }

    /// `μ(|x| > t)`.
    pub fn tail(&self, t: f64) -> f64 {
        self.atoms().filter(|(x, _)| x.abs() > t).map(|(_, m)| m).sum()
    }

    /// `∫ |x| 1{|x| > t} dμ`.
    pub fn abs_moment(&self, t: f64) -> f64 {
        self.atoms()
            .filter(|(x, _)| x.abs() > t)
            .map(|(x, m)| x.abs() * m)
            .sum()
    }

    /// Mixture `Σ w_i μ_i`.
    pub fn mixture<'a>(parts: impl IntoIterator<Item = (f64, &'a EmpiricalMeasure)>) -> Result<Self> {
        let mut atoms = Vec::new();
        for (w, mu) in parts {
            atoms.extend(mu.atoms().map(|(x, m)| (x, w * m)));
        }
        Self::from_atoms(atoms)
    }

    /// Total variation distance `½ Σ |μ(x) - ν(x)|`.
    pub fn total_variation(&self, other: &EmpiricalMeasure) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        while i < self.len() || j < other.len() {
            let x = self.support.get(i).copied().unwrap_or(f64::INFINITY);
            let y = other.support.get(j).copied().unwrap_or(f64::INFINITY);
            if x == y {
                acc += (self.masses[i] - other.masses[j]).abs();
                i += 1;
                j += 1;
            } else if x < y {
                acc += self.masses[i];
                i += 1;
            } else {
                acc += other.masses[j];
                j += 1;
            }
        }
        acc / 2.0
    }

    /// Two whitespace-separated columns `support mass`, one atom per line,
    /// with shortest round-trip decimal formatting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (x, m) in self.atoms() {
            writeln!(out, "{x} {m}").expect("writing to a string");
        }
        out
    }

    /// Inverse of [`to_text`](Self::to_text); blank lines and `#` comments
    /// are skipped.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut atoms = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split_whitespace();
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| {
                    Error::InvalidMeasure(format!("line {}: expected two numbers", lineno + 1))
                })
            };
            let x = parse(cols.next())?;
            let m = parse(cols.next())?;
            if cols.next().is_some() {
                return Err(Error::InvalidMeasure(format!(
                    "line {}: expected two numbers",
                    lineno + 1
                )));
            }
            atoms.push((x, m));
        }
        let support = atoms.iter().map(|a| a.0).collect();
        let masses = atoms.iter().map(|a| a.1).collect();
        Self::new(support, masses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::DiscreteSpace;

    #[test]
    fn from_atoms_merges_and_sorts() {
        let mu = EmpiricalMeasure::from_atoms([(2.0, 0.25), (-1.0, 0.5), (2.0, 0.25)]).unwrap();
        assert_eq!(mu.support(), &[-1.0, 2.0]);
        assert_eq!(mu.masses(), &[0.5, 0.5]);
        assert_eq!(mu.mean(), 0.5);
    }

    #[test]
    fn rejects_unsorted_or_unnormalized() {
        assert!(EmpiricalMeasure::new(vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(EmpiricalMeasure::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(EmpiricalMeasure::new(vec![0.0, 1.0], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn law_of_random_variable() {
        let s = DiscreteSpace::uniform(4).unwrap();
        let x = RandomVariable::new(&s, vec![1.0, -1.0, 1.0, 3.0]).unwrap();
        let mu = EmpiricalMeasure::law_of(&x);
        assert_eq!(mu.support(), &[-1.0, 1.0, 3.0]);
        assert_eq!(mu.masses(), &[0.25, 0.5, 0.25]);
        assert_eq!(mu.tail(1.0), 0.25);
        assert_eq!(mu.abs_moment(0.5), 1.5);
    }

    #[test]
    fn text_round_trip() {
        let mu = EmpiricalMeasure::new(vec![-0.1, 1.0 / 3.0, 7.0], vec![0.2, 0.3, 0.5]).unwrap();
        let text = mu.to_text();
        assert_eq!(EmpiricalMeasure::from_text(&text).unwrap(), mu);
        assert!(EmpiricalMeasure::from_text("1 0.5 3\n").is_err());
    }

    #[test]
    fn total_variation_of_disjoint_measures() {
        let a = EmpiricalMeasure::dirac(0.0);
        let b = EmpiricalMeasure::dirac(1.0);
        assert_eq!(a.total_variation(&b), 1.0);
        assert_eq!(a.total_variation(&a), 0.0);
    }
}
