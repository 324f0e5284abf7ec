use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dyadic tail masses `a_i = P(|f| > 2^i)`, `i = 0..=i_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicTailProfile {
    pub a: Vec<f64>,
    /// `Σ_{i≤j} 2^{2i} a_i`.
    pub partial_sums: Vec<f64>,
}

/// Two-sided dyadic estimate of a second moment.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichCheck {
    /// `Σ_{i≤i_max} 2^{2i−1} a_i`.
    pub lower: f64,
    /// `Σ_{i≤i_max} 2^{2i+2} a_i`.
    pub upper: f64,
    pub second_moment: f64,
    /// The truncated lower sum never exceeds the second moment; this is the
    /// asserted half.
    pub lower_holds: bool,
    /// Informational only: the upper sum ignores mass in `|f| ≤ 1`, so it
    /// can fall below `E f²` for laws concentrated on `[-1, 1]`.
    pub upper_holds: bool,
}

impl DyadicTailProfile {
    pub fn total(&self) -> f64 {
        self.partial_sums.last().copied().unwrap_or(0.0)
    }

    pub fn check_second_moment(&self, second_moment: f64) -> SandwichCheck {
        let lower = self.total() / 2.0;
        let upper = self.total() * 4.0;
        SandwichCheck {
            lower,
            upper,
            second_moment,
            lower_holds: lower <= second_moment * (1.0 + 1e-12),
            upper_holds: second_moment <= upper,
        }
    }

    /// First index whose partial sum exceeds `level`.
    pub fn first_exceeding(&self, level: f64) -> Option<usize> {
        self.partial_sums.iter().position(|&s| s > level)
    }
}

pub fn dyadic_profile(tail: impl Fn(f64) -> f64, i_max: usize) -> DyadicTailProfile {
    let a: Vec<f64> = (0..=i_max).map(|i| tail(2f64.powi(i as i32))).collect();
    let mut acc = 0.0;
    let partial_sums = a
        .iter()
        .enumerate()
        .map(|(i, ai)| {
            acc += 4f64.powi(i as i32) * ai;
            acc
        })
        .collect();
    DyadicTailProfile { a, partial_sums }
}

/// Search grid for truncation levels: multiples of `step` up to `max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationGrid {
    pub step: f64,
    pub max: f64,
}

impl Default for TruncationGrid {
    fn default() -> Self {
        TruncationGrid {
            step: 1.0 / 1024.0,
            max: 2f64.powi(50),
        }
    }
}

/// Levels `K_1 ≤ K_2 ≤ ...`, each the smallest grid point with
/// `P(|f_n| > K_n) ≤ 2^{-n}` and `E(|f_n| 1{|f_n| > K_n}) ≤ 2^{-n}`.
///
/// `tail(n, t)` and `abs_moment(n, t)` describe `f_n` and must be
/// non-increasing in `t`.
pub fn truncation_levels(
    tail: impl Fn(usize, f64) -> f64,
    abs_moment: impl Fn(usize, f64) -> f64,
    n_max: usize,
    grid: TruncationGrid,
) -> Result<Vec<f64>> {
    if !(grid.step > 0.0 && grid.max >= grid.step) {
        return Err(Error::InvalidParameter(format!(
            "invalid truncation grid step {} max {}",
            grid.step, grid.max
        )));
    }
    let max_k = (grid.max / grid.step).floor() as u64;
    let mut levels: Vec<f64> = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let target = 0.5f64.powi(n as i32);
        let ok = |k: u64| {
            let t = k as f64 * grid.step;
            tail(n, t) <= target && abs_moment(n, t) <= target
        };
        let start = levels
            .last()
            .map(|&k| (k / grid.step).round() as u64)
            .unwrap_or(1)
            .max(1);
        let level_k = if ok(start) {
            start
        } else {
            // exponential search for a feasible point, then bisect
            let mut lo = start;
            let mut hi = start.saturating_mul(2);
            while !ok(hi.min(max_k)) {
                if hi >= max_k {
                    let t = grid.max;
                    return Err(Error::Unattainable(format!(
                        "level {n}: bound {target} not met on the grid up to {t} \
                         (tail {}, absolute moment {})",
                        tail(n, t),
                        abs_moment(n, t)
                    )));
                }
                lo = hi;
                hi = hi.saturating_mul(2);
            }
            let mut hi = hi.min(max_k);
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if ok(mid) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi
        };
        levels.push(level_k as f64 * grid.step);
    }
    Ok(levels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_tail(half_width: f64) -> impl Fn(f64) -> f64 {
        move |t: f64| ((half_width - t) / half_width).clamp(0.0, 1.0)
    }

    #[test]
    fn rademacher_has_no_dyadic_tail() {
        let p = dyadic_profile(|t| if t < 1.0 { 1.0 } else { 0.0 }, 10);
        assert!(p.a.iter().all(|&a| a == 0.0));
        assert_eq!(p.total(), 0.0);
    }

    #[test]
    fn uniform_on_minus_four_four() {
        let p = dyadic_profile(uniform_tail(4.0), 6);
        assert_eq!(&p.a[..3], &[0.75, 0.5, 0.0]);
        assert_eq!(p.total(), 2.75);
        let check = p.check_second_moment(16.0 / 3.0);
        assert_eq!(check.lower, 1.375);
        assert_eq!(check.upper, 11.0);
        assert!(check.lower_holds && check.upper_holds);
    }

    #[test]
    fn pareto_partial_sums_grow_geometrically() {
        let p = dyadic_profile(|t: f64| if t < 1.0 { 1.0 } else { t.powf(-1.5) }, 40);
        for (i, a) in p.a.iter().enumerate() {
            let term = 4f64.powi(i as i32) * a;
            assert!((term / 2f64.powf(i as f64 / 2.0) - 1.0).abs() < 1e-12);
        }
        assert!(p.first_exceeding(1e3).unwrap() <= 40);
    }

    #[test]
    fn bounded_variable_truncates_at_its_bound() {
        let tail = |_: usize, t: f64| if t < 1.0 { 1.0 } else { 0.0 };
        let moment = |_: usize, t: f64| if t < 1.0 { 1.0 } else { 0.0 };
        let k = truncation_levels(tail, moment, 8, TruncationGrid::default()).unwrap();
        assert!(k.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn pareto_levels_follow_moment_bound() {
        // E(|f| 1{|f| > t}) = 3 t^{-1/2} binds: K_n = 9·4^n.
        let tail = |_: usize, t: f64| if t < 1.0 { 1.0 } else { t.powf(-1.5) };
        let moment = |_: usize, t: f64| if t < 1.0 { 3.0 } else { 3.0 / t.sqrt() };
        let grid = TruncationGrid { step: 1.0, max: 1e12 };
        let k = truncation_levels(tail, moment, 6, grid).unwrap();
        for (n, level) in k.iter().enumerate() {
            assert_eq!(*level, 9.0 * 4f64.powi(n as i32 + 1));
        }
    }

    #[test]
    fn unattainable_levels_are_reported() {
        let tail = |_: usize, _: f64| 1.0;
        let err = truncation_levels(tail, tail, 1, TruncationGrid { step: 1.0, max: 64.0 });
        assert!(matches!(err, Err(Error::Unattainable(_))));
    }
}
