use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laws::{Law, LawSampler};

/// Tolerance for the declared zero conditional mean of kernel states.
const KERNEL_MEAN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub law: Law,
}

/// A state of a finite martingale kernel: the next increment takes
/// `values[i]` with probability `probs[i]` and moves the chain to `next[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelState {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
    pub next: Vec<usize>,
}

/// Generative description of a random sequence `f_1, f_2, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceModel {
    Iid {
        law: Law,
    },
    /// Draw a component once, then sample iid from it.
    DeFinetti {
        components: Vec<MixtureComponent>,
    },
    MartingaleKernel {
        #[serde(default)]
        initial_state: usize,
        states: Vec<KernelState>,
    },
    /// One categorical draw selects the single index `n` with
    /// `f_n = heights[n]`; every other increment is zero. The remaining
    /// probability mass selects no index at all.
    DisjointSpikes {
        heights: Vec<f64>,
        probs: Vec<f64>,
    },
    /// `f_n = base_n + s_n·r_n` with independent Rademacher signs `r_n`.
    /// `s_n = scales[n-1]` (zero past the end) or `2^{-n}` by default.
    Perturbed {
        base: Box<SequenceModel>,
        #[serde(default)]
        scales: Option<Vec<f64>>,
    },
}

impl SequenceModel {
    pub fn iid(law: Law) -> Self {
        SequenceModel::Iid { law }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SequenceModel::Iid { law } => law.validate(),
            SequenceModel::DeFinetti { components } => {
                if components.is_empty() {
                    return Err(Error::InvalidParameter("mixture has no components".into()));
                }
                check_probabilities(components.iter().map(|c| c.weight), "mixture weights")?;
                components.iter().try_for_each(|c| c.law.validate())
            }
            SequenceModel::MartingaleKernel {
                initial_state,
                states,
            } => {
                if *initial_state >= states.len() {
                    return Err(Error::InvalidParameter(format!(
                        "initial state {initial_state} out of range"
                    )));
                }
                for (s, state) in states.iter().enumerate() {
                    if state.values.is_empty()
                        || state.values.len() != state.probs.len()
                        || state.values.len() != state.next.len()
                    {
                        return Err(Error::InvalidParameter(format!(
                            "kernel state {s} needs matching non-empty values, probs and next"
                        )));
                    }
                    check_probabilities(state.probs.iter().copied(), "kernel probabilities")?;
                    if state.next.iter().any(|&t| t >= states.len()) {
                        return Err(Error::InvalidParameter(format!(
                            "kernel state {s} points to a missing state"
                        )));
                    }
                    let mean: f64 = state.values.iter().zip(&state.probs).map(|(v, p)| v * p).sum();
                    if mean.abs() > KERNEL_MEAN_TOLERANCE {
                        return Err(Error::InvalidParameter(format!(
                            "kernel state {s} has conditional mean {mean}, expected 0"
                        )));
                    }
                }
                Ok(())
            }
            SequenceModel::DisjointSpikes { heights, probs } => {
                if heights.len() != probs.len() {
                    return Err(Error::InvalidParameter(
                        "spike heights and probabilities differ in length".into(),
                    ));
                }
                if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(Error::InvalidParameter("negative spike probability".into()));
                }
                let total: f64 = probs.iter().sum();
                if total > 1.0 + 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "spike probabilities sum to {total} > 1"
                    )));
                }
                Ok(())
            }
            SequenceModel::Perturbed { base, scales } => {
                if let Some(scales) = scales {
                    if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                        return Err(Error::InvalidParameter(
                            "perturbation scales must be non-negative".into(),
                        ));
                    }
                }
                base.validate()
            }
        }
    }

    /// Finite-horizon laws are invariant under permutations of indices.
    pub fn is_exchangeable(&self) -> bool {
        matches!(self, SequenceModel::Iid { .. } | SequenceModel::DeFinetti { .. })
    }

    /// Marginal law of `f_n` when every index shares one law.
    pub fn common_law(&self) -> Option<&Law> {
        match self {
            SequenceModel::Iid { law } => Some(law),
            _ => None,
        }
    }

    /// Perturbation size `s_n` (1-based `n`).
    pub fn perturbation_scale(scales: &Option<Vec<f64>>, n: usize) -> f64 {
        match scales {
            Some(s) => s.get(n - 1).copied().unwrap_or(0.0),
            None => 0.5f64.powi(n as i32),
        }
    }

    /// `P(|f_n| > t)` where the marginal law is known in closed form.
    pub fn marginal_tail(&self, n: usize, t: f64) -> Option<f64> {
        match self {
            SequenceModel::Iid { law } => Some(law.tail(t)),
            SequenceModel::DeFinetti { components } => {
                Some(components.iter().map(|c| c.weight * c.law.tail(t)).sum())
            }
            SequenceModel::DisjointSpikes { .. } if t < 0.0 => Some(1.0),
            SequenceModel::DisjointSpikes { heights, probs } => Some(
                heights
                    .get(n - 1)
                    .map(|h| if h.abs() > t { probs[n - 1] } else { 0.0 })
                    .unwrap_or(0.0),
            ),
            SequenceModel::Perturbed { base, scales } => match base.as_ref() {
                SequenceModel::Iid {
                    law: Law::PointMass { value },
                } => {
                    let s = Self::perturbation_scale(scales, n);
                    let side = |x: f64| if x.abs() > t { 0.5 } else { 0.0 };
                    Some(side(value + s) + side(value - s))
                }
                _ => None,
            },
            _ => None,
        }
    }

    /// `E(|f_n| 1{|f_n| > t})` where the marginal law is known in closed form.
    pub fn marginal_abs_moment(&self, n: usize, t: f64) -> Option<f64> {
        match self {
            SequenceModel::Iid { law } => Some(law.abs_moment(t)),
            SequenceModel::DeFinetti { components } => {
                Some(components.iter().map(|c| c.weight * c.law.abs_moment(t)).sum())
            }
            SequenceModel::DisjointSpikes { heights, probs } => Some(
                heights
                    .get(n - 1)
                    .map(|h| if h.abs() > t.max(0.0) { h.abs() * probs[n - 1] } else { 0.0 })
                    .unwrap_or(0.0),
            ),
            _ => None,
        }
    }

    /// `E(f_n² 1{|f_n| ≤ k})` where the marginal law is known in closed form.
    pub fn marginal_truncated_second_moment(&self, n: usize, k: f64) -> Option<f64> {
        match self {
            SequenceModel::Iid { law } => Some(law.truncated_second_moment(k)),
            SequenceModel::DeFinetti { components } => Some(
                components
                    .iter()
                    .map(|c| c.weight * c.law.truncated_second_moment(k))
                    .sum(),
            ),
            SequenceModel::DisjointSpikes { heights, probs } => Some(
                heights
                    .get(n - 1)
                    .map(|h| if h.abs() <= k { h * h * probs[n - 1] } else { 0.0 })
                    .unwrap_or(0.0),
            ),
            _ => None,
        }
    }

    pub fn compile(&self) -> Result<CompiledModel> {
        self.validate()?;
        Ok(match self {
            SequenceModel::Iid { law } => CompiledModel::Iid(LawSampler::new(law)?),
            SequenceModel::DeFinetti { components } => CompiledModel::Mixture {
                cumulative: cumulative(components.iter().map(|c| c.weight)),
                samplers: components
                    .iter()
                    .map(|c| LawSampler::new(&c.law))
                    .collect::<Result<_>>()?,
            },
            SequenceModel::MartingaleKernel {
                initial_state,
                states,
            } => CompiledModel::Kernel {
                initial: *initial_state,
                states: states
                    .iter()
                    .map(|s| (s.values.clone(), cumulative(s.probs.iter().copied()), s.next.clone()))
                    .collect(),
            },
            SequenceModel::DisjointSpikes { heights, probs } => {
                let mut acc = 0.0;
                CompiledModel::Spikes {
                    heights: heights.clone(),
                    cumulative: probs
                        .iter()
                        .map(|p| {
                            acc += p;
                            acc
                        })
                        .collect(),
                }
            }
            SequenceModel::Perturbed { base, scales } => CompiledModel::Perturbed {
                base: Box::new(base.compile()?),
                scales: scales.clone(),
            },
        })
    }
}

fn check_probabilities(probs: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let mut total = 0.0;
    for p in probs {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::InvalidParameter(format!("{what}: negative entry {p}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("{what} sum to {total}, expected 1")));
    }
    Ok(())
}

/// Cumulative sums with the last entry pushed to `+∞`, so a uniform draw
/// always lands in some bucket.
fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = f64::INFINITY;
    }
    out
}

/// A validated model with prebuilt samplers.
#[derive(Debug, Clone)]
pub enum CompiledModel {
    Iid(LawSampler),
    Mixture {
        cumulative: Vec<f64>,
        samplers: Vec<LawSampler>,
    },
    Kernel {
        initial: usize,
        states: Vec<(Vec<f64>, Vec<f64>, Vec<usize>)>,
    },
    Spikes {
        heights: Vec<f64>,
        cumulative: Vec<f64>,
    },
    Perturbed {
        base: Box<CompiledModel>,
        scales: Option<Vec<f64>>,
    },
}

impl CompiledModel {
    /// Fills `out` with `f_1, ..., f_{out.len()}`. Returns the mixture
    /// component for de Finetti models and the selected spike index for
    /// spike models.
    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Option<usize> {
        match self {
            CompiledModel::Iid(s) => {
                for x in out.iter_mut() {
                    *x = s.sample(rng);
                }
                None
            }
            CompiledModel::Mixture {
                cumulative,
                samplers,
            } => {
                let u: f64 = rng.random();
                let c = cumulative.partition_point(|&w| w <= u);
                for x in out.iter_mut() {
                    *x = samplers[c].sample(rng);
                }
                Some(c)
            }
            CompiledModel::Kernel { initial, states } => {
                let mut state = *initial;
                for x in out.iter_mut() {
                    let (values, cum, next) = &states[state];
                    let u: f64 = rng.random();
                    let i = cum.partition_point(|&w| w <= u);
                    *x = values[i];
                    state = next[i];
                }
                None
            }
            CompiledModel::Spikes {
                heights,
                cumulative,
            } => {
                out.fill(0.0);
                let u: f64 = rng.random();
                let c = cumulative.partition_point(|&w| w <= u);
                if c < heights.len() {
                    if let Some(x) = out.get_mut(c) {
                        *x = heights[c];
                    }
                    Some(c)
                } else {
                    None
                }
            }
            CompiledModel::Perturbed { base, scales } => {
                let label = base.sample_path(rng, out);
                for (i, x) in out.iter_mut().enumerate() {
                    let s = SequenceModel::perturbation_scale(scales, i + 1);
                    *x += if rng.random::<bool>() { s } else { -s };
                }
                label
            }
        }
    }
}
