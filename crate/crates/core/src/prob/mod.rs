//! Exact finite probability spaces.

mod martingale;
mod space;

pub use martingale::{
    doob_chain, random_md_path, verify_md, DoobChainReport, MartingalePath, MdReport,
    StoppingTime, MD_TOLERANCE,
};
pub use space::{cond_exp, generated_partition, DiscreteSpace, Partition, RandomVariable};
pub(crate) use space::canonical_bits;
