//! Generative sequence models, exact finite realizations and seeded,
//! scheduling-independent sampling.

mod discrete;
mod model;
mod sampling;

pub use discrete::{
    definetti_moments, kind_name, to_discrete, ComponentMoments, DiscreteRealization,
    MomentSummary,
};
pub use model::{CompiledModel, KernelState, MixtureComponent, SequenceModel};
pub use sampling::{
    derive_seed, replica_rng, run_replicas, sample_paths, PathEnsemble, PathObserver, RunSpec,
    SampledPath, CHUNK,
};
