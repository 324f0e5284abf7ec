//! One-dimensional laws with exact tail functionals and samplers.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Pareto};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;

/// `P(Z > x)` for a standard normal `Z`.
pub fn normal_upper_tail(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

pub fn normal_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum Law {
    PointMass { value: f64 },
    Rademacher,
    Discrete { values: Vec<f64>, probs: Vec<f64> },
    Gaussian { mean: f64, sd: f64 },
    Uniform { low: f64, high: f64 },
    /// Centered Laplace law with density `e^{-|x|/scale} / (2 scale)`.
    Laplace { scale: f64 },
    /// `P(|f| > t) = t^{-alpha}` for `t ≥ 1`, with a fair random sign.
    SymmetricPareto { alpha: f64 },
}

impl Law {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match self {
            Law::PointMass { value } if !value.is_finite() => bad("point mass must be finite".into()),
            Law::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return bad("discrete law needs matching non-empty values and probs".into());
                }
                EmpiricalMeasure::from_atoms(values.iter().copied().zip(probs.iter().copied()))
                    .map(|_| ())
            }
            Law::Gaussian { mean, sd } if !(mean.is_finite() && *sd > 0.0 && sd.is_finite()) => {
                bad(format!("gaussian needs finite mean and positive sd, got {mean}, {sd}"))
            }
            Law::Uniform { low, high } if !(low.is_finite() && high.is_finite() && low < high) => {
                bad(format!("uniform needs low < high, got {low}, {high}"))
            }
            Law::Laplace { scale } if !(*scale > 0.0 && scale.is_finite()) => {
                bad(format!("laplace scale must be positive, got {scale}"))
            }
            Law::SymmetricPareto { alpha } if !(*alpha > 0.0 && alpha.is_finite()) => {
                bad(format!("pareto alpha must be positive, got {alpha}"))
            }
            _ => Ok(()),
        }
    }

    /// Finite support as a measure, when there is one.
    pub fn as_measure(&self) -> Option<EmpiricalMeasure> {
        match self {
            Law::PointMass { value } => Some(EmpiricalMeasure::dirac(*value)),
            Law::Rademacher => Some(
                EmpiricalMeasure::new(vec![-1.0, 1.0], vec![0.5, 0.5]).expect("valid measure"),
            ),
            Law::Discrete { values, probs } => EmpiricalMeasure::from_atoms(
                values.iter().copied().zip(probs.iter().copied()),
            )
            .ok(),
            _ => None,
        }
    }

    /// `E f`, or `None` when `f` is not integrable.
    pub fn mean(&self) -> Option<f64> {
        match self {
            Law::Gaussian { mean, .. } => Some(*mean),
            Law::Uniform { low, high } => Some(0.5 * (low + high)),
            Law::Laplace { .. } => Some(0.0),
            Law::SymmetricPareto { alpha } => (*alpha > 1.0).then_some(0.0),
            _ => self.as_measure().map(|m| m.mean()),
        }
    }

    /// `E f²`; `+∞` when infinite.
    pub fn second_moment(&self) -> f64 {
        match self {
            Law::Gaussian { mean, sd } => mean * mean + sd * sd,
            Law::Uniform { low, high } => (low * low + low * high + high * high) / 3.0,
            Law::Laplace { scale } => 2.0 * scale * scale,
            Law::SymmetricPareto { alpha } => {
                if *alpha > 2.0 {
                    alpha / (alpha - 2.0)
                } else {
                    f64::INFINITY
                }
            }
            _ => self.as_measure().expect("finite law").second_moment(),
        }
    }

    /// `Var f`; `+∞` when infinite, `NaN` when the mean is undefined.
    pub fn variance(&self) -> f64 {
        match self.mean() {
            Some(m) => {
                let s = self.second_moment();
                if s.is_infinite() {
                    s
                } else {
                    (s - m * m).max(0.0)
                }
            }
            None => f64::NAN,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match self {
            Law::PointMass { value } => *value == 0.0,
            Law::Rademacher | Law::Laplace { .. } | Law::SymmetricPareto { .. } => true,
            Law::Gaussian { mean, .. } => *mean == 0.0,
            Law::Uniform { low, high } => low + high == 0.0,
            Law::Discrete { .. } => {
                let m = self.as_measure().expect("validated law");
                let mirrored = m.atoms().zip(m.atoms().rev()).all(|((x, p), (y, q))| x == -y && p == q);
                mirrored
            }
        }
    }

    /// `P(f > t)`.
    pub fn prob_greater(&self, t: f64) -> f64 {
        match self {
            Law::Gaussian { mean, sd } => normal_upper_tail((t - mean) / sd),
            Law::Uniform { low, high } => ((high - t) / (high - low)).clamp(0.0, 1.0),
            Law::Laplace { scale } => {
                if t >= 0.0 {
                    0.5 * (-t / scale).exp()
                } else {
                    1.0 - 0.5 * (t / scale).exp()
                }
            }
            Law::SymmetricPareto { alpha } => {
                if t >= 1.0 {
                    0.5 * t.powf(-alpha)
                } else if t >= -1.0 {
                    0.5
                } else {
                    1.0 - 0.5 * (-t).powf(-alpha)
                }
            }
            _ => {
                let m = self.as_measure().expect("finite law");
                m.atoms().filter(|(x, _)| *x > t).map(|(_, p)| p).sum()
            }
        }
    }

    /// `P(f < t)`.
    pub fn prob_less(&self, t: f64) -> f64 {
        match self {
            Law::Gaussian { mean, sd } => normal_upper_tail((mean - t) / sd),
            Law::Uniform { low, high } => ((t - low) / (high - low)).clamp(0.0, 1.0),
            Law::Laplace { .. } | Law::SymmetricPareto { .. } => self.prob_greater(-t),
            _ => {
                let m = self.as_measure().expect("finite law");
                m.atoms().filter(|(x, _)| *x < t).map(|(_, p)| p).sum()
            }
        }
    }

    /// `P(|f| > t)`.
    pub fn tail(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 1.0;
        }
        match self {
            Law::Laplace { scale } => (-t / scale).exp(),
            Law::SymmetricPareto { alpha } => {
                if t >= 1.0 {
                    t.powf(-alpha)
                } else {
                    1.0
                }
            }
            Law::Gaussian { .. } | Law::Uniform { .. } => {
                (self.prob_greater(t) + self.prob_less(-t)).min(1.0)
            }
            _ => self.as_measure().expect("finite law").tail(t),
        }
    }

    /// `E(|f| 1{|f| > t})`; `+∞` when `f` is not integrable.
    pub fn abs_moment(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        match self {
            Law::Gaussian { mean, sd } => {
                // E(X; X > t) + E(-X; X < -t) for X ~ N(mean, sd²)
                let a = (t - mean) / sd;
                let b = (-t - mean) / sd;
                let upper = mean * normal_upper_tail(a) + sd * normal_density(a);
                let lower = -mean * normal_upper_tail(-b) + sd * normal_density(b);
                upper + lower
            }
            Law::Uniform { low, high } => {
                let width = high - low;
                let upper = if *high > t {
                    let from = t.max(*low);
                    (high * high - from * from) / (2.0 * width)
                } else {
                    0.0
                };
                let lower = if *low < -t {
                    let to = (-t).min(*high);
                    (low * low - to * to) / (2.0 * width)
                } else {
                    0.0
                };
                upper + lower
            }
            Law::Laplace { scale } => (t + scale) * (-t / scale).exp(),
            Law::SymmetricPareto { alpha } => {
                if *alpha <= 1.0 {
                    f64::INFINITY
                } else {
                    let from = t.max(1.0);
                    alpha / (alpha - 1.0) * from.powf(1.0 - alpha)
                }
            }
            _ => self.as_measure().expect("finite law").abs_moment(t),
        }
    }

    /// `E(f² 1{|f| ≤ k})`.
    pub fn truncated_second_moment(&self, k: f64) -> f64 {
        if k < 0.0 {
            return 0.0;
        }
        if k == f64::INFINITY {
            return self.second_moment();
        }
        match self {
            Law::Gaussian { mean, sd } => {
                // X = mean + sd·Z on the window α < Z < β
                let alpha = (-k - mean) / sd;
                let beta = (k - mean) / sd;
                let mass = normal_upper_tail(alpha) - normal_upper_tail(beta);
                let (da, db) = (normal_density(alpha), normal_density(beta));
                mean * mean * mass
                    + 2.0 * mean * sd * (da - db)
                    + sd * sd * (mass + alpha * da - beta * db)
            }
            Law::Uniform { low, high } => {
                let (a, b) = (low.max(-k), high.min(k));
                if b > a {
                    (b * b * b - a * a * a) / (3.0 * (high - low))
                } else {
                    0.0
                }
            }
            Law::Laplace { scale } => {
                2.0 * scale * scale - (-k / scale).exp() * (k * k + 2.0 * scale * k + 2.0 * scale * scale)
            }
            Law::SymmetricPareto { alpha } => {
                if k < 1.0 {
                    0.0
                } else if *alpha == 2.0 {
                    2.0 * k.ln()
                } else {
                    alpha * (k.powf(2.0 - alpha) - 1.0) / (2.0 - alpha)
                }
            }
            _ => self
                .as_measure()
                .expect("finite law")
                .integrate(|x| if x.abs() <= k { x * x } else { 0.0 }),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Law::PointMass { value } => *value,
            Law::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Law::Discrete { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("validated non-empty")
            }
            Law::Gaussian { mean, sd } => Normal::new(*mean, *sd).expect("validated").sample(rng),
            Law::Uniform { low, high } => rng.random_range(*low..*high),
            Law::Laplace { scale } => {
                let e = Exp::new(1.0 / scale).expect("validated").sample(rng);
                if rng.random::<bool>() {
                    e
                } else {
                    -e
                }
            }
            Law::SymmetricPareto { alpha } => {
                let x = Pareto::new(1.0, *alpha).expect("validated").sample(rng);
                if rng.random::<bool>() {
                    x
                } else {
                    -x
                }
            }
        }
    }
}

/// Pre-built sampler: avoids re-validating distribution parameters in hot
/// loops.
#[derive(Debug, Clone)]
pub enum LawSampler {
    Constant(f64),
    Rademacher,
    Discrete { values: Vec<f64>, cumulative: Vec<f64> },
    Normal(Normal<f64>),
    Uniform { low: f64, high: f64 },
    Laplace(Exp<f64>),
    Pareto(Pareto<f64>),
}

impl LawSampler {
    pub fn new(law: &Law) -> Result<Self> {
        law.validate()?;
        Ok(match law {
            Law::PointMass { value } => LawSampler::Constant(*value),
            Law::Rademacher => LawSampler::Rademacher,
            Law::Discrete { values, probs } => {
                let mut acc = 0.0;
                let mut cumulative: Vec<f64> = probs
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                *cumulative.last_mut().expect("non-empty") = f64::INFINITY;
                LawSampler::Discrete {
                    values: values.clone(),
                    cumulative,
                }
            }
            Law::Gaussian { mean, sd } => LawSampler::Normal(
                Normal::new(*mean, *sd).map_err(|e| Error::InvalidParameter(e.to_string()))?,
            ),
            Law::Uniform { low, high } => LawSampler::Uniform {
                low: *low,
                high: *high,
            },
            Law::Laplace { scale } => LawSampler::Laplace(
                Exp::new(1.0 / scale).map_err(|e| Error::InvalidParameter(e.to_string()))?,
            ),
            Law::SymmetricPareto { alpha } => LawSampler::Pareto(
                Pareto::new(1.0, *alpha).map_err(|e| Error::InvalidParameter(e.to_string()))?,
            ),
        })
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            LawSampler::Constant(v) => *v,
            LawSampler::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            LawSampler::Discrete { values, cumulative } => {
                let u: f64 = rng.random();
                values[cumulative.partition_point(|&c| c <= u)]
            }
            LawSampler::Normal(d) => d.sample(rng),
            LawSampler::Uniform { low, high } => rng.random_range(*low..*high),
            LawSampler::Laplace(d) => {
                let e = d.sample(rng);
                if rng.random::<bool>() {
                    e
                } else {
                    -e
                }
            }
            LawSampler::Pareto(d) => {
                let x = d.sample(rng);
                if rng.random::<bool>() {
                    x
                } else {
                    -x
                }
            }
        }
    }
}
