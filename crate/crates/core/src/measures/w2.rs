use std::sync::Arc;

use super::empirical::EmpiricalMeasure;
use crate::error::{Error, Result};
use crate::prob::{DiscreteSpace, RandomVariable};

/// One cell `(x, y, mass)` of a coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingCell {
    pub x: f64,
    pub y: f64,
    pub mass: f64,
}

/// Monotone (quantile) coupling: the `u`-quantile of `mu` is paired with
/// the `u`-quantile of `nu`. Cells are emitted in increasing order of both
/// coordinates.
pub fn monotone_coupling(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Vec<CouplingCell> {
    let cum_mu = cumulative(mu.masses());
    let cum_nu = cumulative(nu.masses());
    let (xs, ys) = (mu.support(), nu.support());
    let mut cells = Vec::with_capacity(xs.len() + ys.len());
    let (mut i, mut j) = (0, 0);
    let mut reached = 0.0;
    while i < xs.len() && j < ys.len() {
        let next = cum_mu[i].min(cum_nu[j]);
        let mass = next - reached;
        if mass > 0.0 {
            cells.push(CouplingCell {
                x: xs[i],
                y: ys[j],
                mass,
            });
        }
        reached = next;
        if cum_mu[i] == cum_nu[j] {
            i += 1;
            j += 1;
        } else if cum_mu[i] < cum_nu[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    cells
}

/// Cumulative masses with the final entry pinned to exactly one.
fn cumulative(masses: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = masses
        .iter()
        .map(|m| {
            acc += m;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}

/// `Σ mass·(x − y)²`.
pub fn coupling_cost(cells: &[CouplingCell]) -> f64 {
    cells.iter().map(|c| c.mass * (c.x - c.y) * (c.x - c.y)).sum()
}

/// Quadratic Wasserstein distance.
pub fn w2(mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> f64 {
    coupling_cost(&monotone_coupling(mu, nu)).sqrt()
}

/// Output of [`join`]: `f` and `g` lifted to the product of a uniform grid
/// with the original space. Atom `(cell, a)` has index `cell * atoms + a`.
#[derive(Debug, Clone)]
pub struct Joining {
    pub space: Arc<DiscreteSpace>,
    pub grid: u64,
    pub f: RandomVariable,
    pub g: RandomVariable,
    pub w2_squared: f64,
    /// `E(f − g)²` on the product space.
    pub mean_square_gap: f64,
}

const RATIONAL_TOLERANCE: f64 = 1e-13;
const MAX_DENOMINATOR: u64 = 1_000_000_000;

/// Continued-fraction approximation `p/q` of `x ∈ [0, 1]` within `tol`.
fn rational(x: f64, tol: f64, max_den: u64) -> Option<(u64, u64)> {
    let (mut h0, mut h1) = (0u128, 1u128);
    let (mut k0, mut k1) = (1u128, 0u128);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        let ai = a as u128;
        let h2 = ai * h1 + h0;
        let k2 = ai * k1 + k0;
        if k2 > max_den as u128 {
            return None;
        }
        if (x - h2 as f64 / k2 as f64).abs() <= tol {
            return Some((h2 as u64, k2 as u64));
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a;
        if frac <= 0.0 {
            break;
        }
        r = 1.0 / frac;
    }
    None
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Per value of `f`: the conditional law of the partner under the monotone
/// coupling, as `(partner values, cumulative fractions)`.
fn conditional_kernels(
    mu: &EmpiricalMeasure,
    cells: &[CouplingCell],
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut kernels: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); mu.len()];
    let mut j = 0;
    let mut acc = 0.0;
    for cell in cells {
        while mu.support()[j] != cell.x {
            j += 1;
            acc = 0.0;
        }
        acc += cell.mass;
        kernels[j].0.push(cell.y);
        kernels[j].1.push(acc / mu.masses()[j]);
    }
    for (_, cum) in &mut kernels {
        if let Some(last) = cum.last_mut() {
            *last = 1.0;
        }
    }
    kernels
}

/// Smallest grid on which every conditional kernel of the monotone
/// coupling between the law of `f` and `nu` is represented exactly.
pub fn required_join_grid(f: &RandomVariable, nu: &EmpiricalMeasure) -> Result<u64> {
    let mu = EmpiricalMeasure::law_of(f);
    let cells = monotone_coupling(&mu, nu);
    let mut required: u64 = 1;
    for (_, cum) in conditional_kernels(&mu, &cells) {
        for c in cum {
            let (_, q) = rational(c, RATIONAL_TOLERANCE, MAX_DENOMINATOR).ok_or_else(|| {
                Error::InvalidMeasure(format!(
                    "conditional mass {c} has no rational form with denominator ≤ {MAX_DENOMINATOR}"
                ))
            })?;
            let lcm = (required as u128) * (q as u128) / gcd(required, q) as u128;
            if lcm > MAX_DENOMINATOR as u128 * 1000 {
                return Err(Error::GridInsufficient {
                    required: u64::try_from(lcm).unwrap_or(u64::MAX),
                    grid: 0,
                });
            }
            required = lcm as u64;
        }
    }
    Ok(required)
}

/// Couples `f` with a variable `g` of law `nu` on an enlarged space.
///
/// The law `μ` of `f` is coupled to `nu` monotonically; on each level set
/// `{f = α_j}` the conditional law `κ_j` of the partner is realized by its
/// inverse distribution function on an auxiliary uniform factor cut into
/// `grid` cells. Then `g` has law `nu` and `E(f − g)² = w2(μ, nu)²`.
pub fn join(f: &RandomVariable, nu: &EmpiricalMeasure, grid: u64) -> Result<Joining> {
    if grid == 0 {
        return Err(Error::InvalidParameter("grid must be positive".into()));
    }
    let required = required_join_grid(f, nu)?;
    if !grid.is_multiple_of(required) {
        return Err(Error::GridInsufficient { required, grid });
    }
    let mu = EmpiricalMeasure::law_of(f);
    let cells = monotone_coupling(&mu, nu);
    let w2_squared = coupling_cost(&cells);
    // cumulative fractions become exact integer cell boundaries
    let kernels: Vec<(Vec<f64>, Vec<u64>)> = conditional_kernels(&mu, &cells)
        .into_iter()
        .map(|(ys, cum)| {
            let bounds = cum
                .iter()
                .map(|&c| {
                    let (p, q) = rational(c, RATIONAL_TOLERANCE, MAX_DENOMINATOR)
                        .expect("checked by required_join_grid");
                    p * (grid / q)
                })
                .collect();
            (ys, bounds)
        })
        .collect();

    let base = f.space();
    let atoms = base.atom_count();
    let cells_count = usize::try_from(grid)
        .ok()
        .and_then(|g| g.checked_mul(atoms))
        .ok_or(Error::BudgetExceeded {
            required: grid as u128 * atoms as u128,
            budget: usize::MAX,
        })?;
    let mut weights = Vec::with_capacity(cells_count);
    let mut f_values = Vec::with_capacity(cells_count);
    let mut g_values = Vec::with_capacity(cells_count);
    let value_index: Vec<usize> = f
        .values()
        .iter()
        .map(|v| {
            mu.support()
                .binary_search_by(|s| s.total_cmp(v))
                .or_else(|_| mu.support().iter().position(|s| s == v).ok_or(()))
                .expect("value belongs to its own law")
        })
        .collect();
    for cell in 0..grid {
        for a in 0..atoms {
            let (ys, bounds) = &kernels[value_index[a]];
            let l = bounds.partition_point(|&b| b <= cell);
            weights.push(base.weight(a) / grid as f64);
            f_values.push(f.value(a));
            g_values.push(ys[l]);
        }
    }
    let space = DiscreteSpace::new(weights)?;
    let f_lifted = RandomVariable::new(&space, f_values)?;
    let g = RandomVariable::new(&space, g_values)?;
    let mean_square_gap = f_lifted.sub(&g)?.map(|d| d * d).expectation();
    Ok(Joining {
        space,
        grid,
        f: f_lifted,
        g,
        w2_squared,
        mean_square_gap,
    })
}
