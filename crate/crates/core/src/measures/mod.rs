//! Finitely supported measures on the line and the quadratic Wasserstein
//! distance.

mod empirical;
mod table;
mod tails;
mod w2;

pub use empirical::EmpiricalMeasure;
pub use table::{aggregate, Aggregate, ConditionalMeasureTable};
pub use tails::{dyadic_profile, truncation_levels, DyadicTailProfile, SandwichCheck, TruncationGrid};
pub use w2::{
    coupling_cost, join, monotone_coupling, required_join_grid, w2, CouplingCell, Joining,
};
