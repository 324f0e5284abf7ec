//! Constructive selection procedures on finite spaces: quantization, the
//! martingale-difference selector, spike decompositions, truncation splits
//! and finite-stage refinement checks.

mod refinement;
mod selection;
mod spikes;
mod truncation;

pub use refinement::{
    default_schedule, omnibus_check, refinement_step, OmnibusBlock, OmnibusReport, RefinementStage,
    RefinementTree,
};
pub use selection::{quantize, select_md_subsequence, Quantized, SelectionReport};
pub use spikes::{
    adversarial_pairing, disjoint_support_series, kpr_decompose, pairing_family, BlockSeries,
    DisjointSupportReport, KprDecomposition, PairingCertificate, PairingStage, SupportMode,
    ThresholdRule,
};
pub use truncation::{truncation_split, truncation_split_samples, truncation_split_variables, TruncationSplit};
