//! Monte Carlo estimators of tail series and checks of the quantitative
//! bounds around them.

mod bounds;
mod diagnostics;
mod series;

pub use bounds::{
    fuk_nagaev_bound, fuk_nagaev_check, fuk_nagaev_constant, lower_bound_check, uniform_bounds,
    upper_additive_constant, BoundCase, BoundReport, LOWER_COEFFICIENT, UPPER_VARIANCE_COEFFICIENT,
};
pub use diagnostics::{elementary_sandwich, tightness_and_integrability, SandwichReport, TightnessReport};
pub use series::{
    component_series, default_horizon, heyde_scan, max_term_oracle, max_term_series,
    max_term_series_streaming, permutation_stress, sum_tail_oracle, tail_series,
    tail_series_streaming, wilson, ExceedanceCounter, GroupCounts, HeydePoint, HeydeScan, McConfig,
    PermutationReport, SeriesRow, TailSeriesEstimate, Z95,
};
