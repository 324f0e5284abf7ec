use std::sync::Arc;

use serde::Serialize;

use super::model::SequenceModel;
use crate::error::{Error, Result};
use crate::prob::{DiscreteSpace, Partition, RandomVariable};

/// Exact finite realization of `f_1, ..., f_n`.
#[derive(Debug, Clone)]
pub struct DiscreteRealization {
    pub space: Arc<DiscreteSpace>,
    pub variables: Vec<RandomVariable>,
    /// Mixture component per atom, for de Finetti models.
    pub labels: Option<Vec<usize>>,
}

impl DiscreteRealization {
    /// Partition by mixture component (the trivial partition when there is
    /// no mixing).
    pub fn label_partition(&self) -> Partition {
        match &self.labels {
            Some(labels) => Partition::from_labels(&self.space, labels).expect("one label per atom"),
            None => Partition::trivial(&self.space),
        }
    }
}

/// Finite law as `(values, probs)` with zero-probability values dropped.
fn finite_alphabet(law: &crate::laws::Law) -> Result<Vec<(f64, f64)>> {
    let m = law.as_measure().ok_or_else(|| {
        Error::UnsupportedModel(format!(
            "law {law:?} has no finite alphabet; quantize it before realizing exactly"
        ))
    })?;
    Ok(m.atoms().collect())
}

/// Every outcome sequence of length `n` over `alphabet`, first coordinate
/// varying slowest, with product weights.
fn product_paths(alphabet: &[(f64, f64)], n: usize) -> Vec<(f64, Vec<f64>)> {
    let mut paths = vec![(1.0, Vec::with_capacity(n))];
    for _ in 0..n {
        let mut next = Vec::with_capacity(paths.len() * alphabet.len());
        for (w, path) in &paths {
            for &(v, p) in alphabet {
                let mut extended = path.clone();
                extended.push(v);
                next.push((w * p, extended));
            }
        }
        paths = next;
    }
    paths
}

fn check_budget(required: u128, budget: usize) -> Result<()> {
    if required > budget as u128 {
        Err(Error::BudgetExceeded { required, budget })
    } else {
        Ok(())
    }
}

fn atom_count(model: &SequenceModel, n_vars: usize) -> Result<u128> {
    let pow = |k: usize| (k as u128).checked_pow(n_vars as u32).unwrap_or(u128::MAX);
    Ok(match model {
        SequenceModel::Iid { law } => pow(finite_alphabet(law)?.len()),
        SequenceModel::DeFinetti { components } => {
            let mut total: u128 = 0;
            for c in components {
                total = total.saturating_add(pow(finite_alphabet(&c.law)?.len()));
            }
            total
        }
        SequenceModel::MartingaleKernel {
            initial_state,
            states,
        } => {
            // paths of length n from each state
            let mut count = vec![1u128; states.len()];
            for _ in 0..n_vars {
                count = states
                    .iter()
                    .map(|s| s.next.iter().fold(0u128, |acc, &t| acc.saturating_add(count[t])))
                    .collect();
            }
            count[*initial_state]
        }
        SequenceModel::DisjointSpikes { heights, probs } => {
            let rest = 1.0 - probs.iter().sum::<f64>();
            let spikes = probs.iter().filter(|&&p| p > 0.0).count() as u128;
            let _ = heights;
            spikes + u128::from(rest > 1e-15)
        }
        SequenceModel::Perturbed { base, .. } => {
            let signs = 1u128.checked_shl(n_vars as u32).unwrap_or(u128::MAX);
            atom_count(base, n_vars)?.saturating_mul(signs)
        }
    })
}

/// Builds the exact product space carrying the joint law of
/// `f_1, ..., f_{n_vars}`; fails when it would need more than
/// `space_budget` atoms.
pub fn to_discrete(model: &SequenceModel, n_vars: usize, space_budget: usize) -> Result<DiscreteRealization> {
    model.validate()?;
    check_budget(atom_count(model, n_vars)?, space_budget)?;
    let (weights, paths, labels) = weighted_paths(model, n_vars)?;
    let space = DiscreteSpace::new(weights)?;
    let variables = (0..n_vars)
        .map(|n| RandomVariable::new(&space, paths.iter().map(|p| p[n]).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiscreteRealization {
        space,
        variables,
        labels,
    })
}

type WeightedPaths = (Vec<f64>, Vec<Vec<f64>>, Option<Vec<usize>>);

fn weighted_paths(model: &SequenceModel, n_vars: usize) -> Result<WeightedPaths> {
    Ok(match model {
        SequenceModel::Iid { law } => {
            let (w, p) = product_paths(&finite_alphabet(law)?, n_vars).into_iter().unzip();
            (w, p, None)
        }
        SequenceModel::DeFinetti { components } => {
            let mut weights = Vec::new();
            let mut paths = Vec::new();
            let mut labels = Vec::new();
            for (c, comp) in components.iter().enumerate() {
                if comp.weight == 0.0 {
                    continue;
                }
                for (w, p) in product_paths(&finite_alphabet(&comp.law)?, n_vars) {
                    weights.push(comp.weight * w);
                    paths.push(p);
                    labels.push(c);
                }
            }
            (weights, paths, Some(labels))
        }
        SequenceModel::MartingaleKernel {
            initial_state,
            states,
        } => {
            let mut frontier = vec![(1.0, *initial_state, Vec::with_capacity(n_vars))];
            for _ in 0..n_vars {
                let mut next = Vec::new();
                for (w, s, path) in frontier {
                    let state = &states[s];
                    for i in 0..state.values.len() {
                        if state.probs[i] == 0.0 {
                            continue;
                        }
                        let mut extended = path.clone();
                        extended.push(state.values[i]);
                        next.push((w * state.probs[i], state.next[i], extended));
                    }
                }
                frontier = next;
            }
            let (w, p) = frontier.into_iter().map(|(w, _, p)| (w, p)).unzip();
            (w, p, None)
        }
        SequenceModel::DisjointSpikes { heights, probs } => {
            let mut weights = Vec::new();
            let mut paths = Vec::new();
            for (i, (&h, &p)) in heights.iter().zip(probs).enumerate() {
                if p > 0.0 {
                    let mut path = vec![0.0; n_vars];
                    if i < n_vars {
                        path[i] = h;
                    }
                    weights.push(p);
                    paths.push(path);
                }
            }
            let rest = 1.0 - probs.iter().sum::<f64>();
            if rest > 1e-15 {
                weights.push(rest);
                paths.push(vec![0.0; n_vars]);
            }
            (weights, paths, None)
        }
        SequenceModel::Perturbed { base, scales } => {
            let (base_w, base_p, base_labels) = weighted_paths(base, n_vars)?;
            let signs = product_paths(&[(-1.0, 0.5), (1.0, 0.5)], n_vars);
            let mut weights = Vec::new();
            let mut paths = Vec::new();
            let mut labels = base_labels.as_ref().map(|_| Vec::new());
            for (i, (w, p)) in base_w.iter().zip(&base_p).enumerate() {
                for (sw, sign) in &signs {
                    weights.push(w * sw);
                    paths.push(
                        p.iter()
                            .zip(sign)
                            .enumerate()
                            .map(|(n, (x, r))| x + r * SequenceModel::perturbation_scale(scales, n + 1))
                            .collect(),
                    );
                    if let (Some(out), Some(src)) = (labels.as_mut(), base_labels.as_ref()) {
                        out.push(src[i]);
                    }
                }
            }
            (weights, paths, labels)
        }
    })
}

/// Randomized limiting moments of one mixture component.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentMoments {
    pub weight: f64,
    /// Conditional mean given the component; `None` when not integrable.
    pub f_infty: Option<f64>,
    /// Conditional second moment; `+∞` when infinite.
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSummary {
    pub components: Vec<ComponentMoments>,
    /// Mixture-weighted mean of `eta`.
    pub expected_eta: f64,
}

pub fn definetti_moments(model: &SequenceModel) -> Result<MomentSummary> {
    let components = match model {
        SequenceModel::DeFinetti { components } => components,
        SequenceModel::Iid { law } => {
            return Ok(MomentSummary {
                components: vec![ComponentMoments {
                    weight: 1.0,
                    f_infty: law.mean(),
                    eta: law.second_moment(),
                }],
                expected_eta: law.second_moment(),
            })
        }
        other => {
            return Err(Error::UnsupportedModel(format!(
                "moments need a de Finetti mixture, got {}",
                kind_name(other)
            )))
        }
    };
    model.validate()?;
    let components: Vec<ComponentMoments> = components
        .iter()
        .map(|c| ComponentMoments {
            weight: c.weight,
            f_infty: c.law.mean(),
            eta: c.law.second_moment(),
        })
        .collect();
    let expected_eta = components
        .iter()
        .filter(|c| c.weight > 0.0)
        .map(|c| c.weight * c.eta)
        .sum();
    Ok(MomentSummary {
        components,
        expected_eta,
    })
}

pub fn kind_name(model: &SequenceModel) -> &'static str {
    match model {
        SequenceModel::Iid { .. } => "iid",
        SequenceModel::DeFinetti { .. } => "de_finetti",
        SequenceModel::MartingaleKernel { .. } => "martingale_kernel",
        SequenceModel::DisjointSpikes { .. } => "disjoint_spikes",
        SequenceModel::Perturbed { .. } => "perturbed",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laws::Law;
    use crate::models::{KernelState, MixtureComponent};
    use crate::prob::{verify_md, MartingalePath};

    #[test]
    fn rademacher_cube() {
        let r = to_discrete(&SequenceModel::iid(Law::Rademacher), 3, 64).unwrap();
        assert_eq!(r.space.atom_count(), 8);
        assert_eq!(r.variables.len(), 3);
        assert!(r.space.weights().iter().all(|&w| w == 0.125));
    }

    #[test]
    fn four_spikes_give_five_atoms() {
        let m = SequenceModel::DisjointSpikes {
            heights: vec![1.0, 2.0, 3.0, 4.0],
            probs: vec![0.1, 0.1, 0.1, 0.1],
        };
        let r = to_discrete(&m, 4, 100).unwrap();
        assert_eq!(r.space.atom_count(), 5);
        assert_eq!(r.variables[2].values(), &[0.0, 0.0, 3.0, 0.0, 0.0]);
    }

    #[test]
    fn two_component_mixture_on_eight_atoms() {
        let coin = |a: f64| Law::Discrete {
            values: vec![a - 1.0, a + 1.0],
            probs: vec![0.5, 0.5],
        };
        let m = SequenceModel::DeFinetti {
            components: vec![
                MixtureComponent { weight: 0.5, law: coin(-1.0) },
                MixtureComponent { weight: 0.5, law: coin(1.0) },
            ],
        };
        let r = to_discrete(&m, 2, 8).unwrap();
        assert_eq!(r.space.atom_count(), 8);
        assert_eq!(r.label_partition().block_count(), 2);
    }

    #[test]
    fn budget_error_names_required_size() {
        let err = to_discrete(&SequenceModel::iid(Law::Rademacher), 10, 1000).unwrap_err();
        assert_eq!(
            err,
            Error::BudgetExceeded {
                required: 1024,
                budget: 1000
            }
        );
    }

    #[test]
    fn kernel_realization_is_martingale() {
        let m = SequenceModel::MartingaleKernel {
            initial_state: 0,
            states: vec![
                KernelState {
                    values: vec![-1.0, 1.0],
                    probs: vec![0.5, 0.5],
                    next: vec![0, 1],
                },
                KernelState {
                    values: vec![-0.5, 1.5],
                    probs: vec![0.75, 0.25],
                    next: vec![0, 1],
                },
            ],
        };
        let r = to_discrete(&m, 6, 1 << 10).unwrap();
        let path = MartingalePath::natural(&r.space, r.variables).unwrap();
        assert!(verify_md(&path, 1.0).pass);
    }

    #[test]
    fn mixture_moments() {
        let m = SequenceModel::DeFinetti {
            components: vec![
                MixtureComponent {
                    weight: 0.5,
                    law: Law::Gaussian { mean: -1.0, sd: 1.0 },
                },
                MixtureComponent {
                    weight: 0.5,
                    law: Law::Gaussian { mean: 1.0, sd: 1.0 },
                },
            ],
        };
        let s = definetti_moments(&m).unwrap();
        assert_eq!(s.expected_eta, 2.0);
        assert_eq!(s.components[0].f_infty, Some(-1.0));

        let heavy = SequenceModel::DeFinetti {
            components: vec![MixtureComponent {
                weight: 1.0,
                law: Law::SymmetricPareto { alpha: 1.5 },
            }],
        };
        assert!(definetti_moments(&heavy).unwrap().expected_eta.is_infinite());
    }
}
