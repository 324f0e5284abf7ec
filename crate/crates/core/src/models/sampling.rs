use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::{CompiledModel, SequenceModel};
use crate::error::{Error, Result};

/// Replicas per work unit. Fixed so that the merge order, and therefore
/// every floating-point reduction, is independent of the worker count.
pub const CHUNK: u64 = 256;

/// Random stream of one replica: a pure function of `(seed, replica)`.
pub fn replica_rng(seed: u64, replica: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica);
    rng
}

/// Mixes a purpose tag into a seed so that independent experiments in one
/// run use unrelated streams (splitmix64 finalizer over the tag bytes).
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for b in tag.bytes() {
        h = h.wrapping_add(u64::from(b)).wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

/// One sampled path of increments `f_1, ..., f_{N_max}`.
#[derive(Debug, Clone)]
pub struct SampledPath {
    pub label: Option<usize>,
    pub increments: Vec<f64>,
}

/// Streaming consumer of replicas. Each work unit gets a fresh observer;
/// units are merged in replica order.
pub trait PathObserver: Send + Sized {
    /// `paths` holds the independent copies drawn for this replica.
    fn observe(&mut self, replica: u64, paths: &[SampledPath]);
    fn merge(&mut self, later: Self);
}

/// Sampling run parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSpec {
    pub horizon: usize,
    pub replicas: u64,
    pub seed: u64,
    pub workers: usize,
    /// Independent copies of the sequence drawn per replica.
    pub copies: usize,
}

impl RunSpec {
    pub fn new(horizon: usize, replicas: u64, seed: u64) -> Self {
        RunSpec {
            horizon,
            replicas,
            seed,
            workers: 1,
            copies: 1,
        }
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn copies(mut self, copies: usize) -> Self {
        self.copies = copies;
        self
    }
}

pub fn run_replicas<O, F>(model: &SequenceModel, spec: RunSpec, make: F) -> Result<O>
where
    O: PathObserver,
    F: Fn() -> O + Sync,
{
    if spec.horizon == 0 || spec.replicas == 0 || spec.workers == 0 || spec.copies == 0 {
        return Err(Error::InvalidParameter(
            "horizon, replicas, workers and copies must be positive".into(),
        ));
    }
    let compiled = model.compile()?;
    let chunks = spec.replicas.div_ceil(CHUNK);
    let work = |c: u64| run_chunk(&compiled, spec, c, &make);
    let parts: Vec<O> = if spec.workers == 1 {
        (0..chunks).map(work).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.workers)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
        pool.install(|| (0..chunks).into_par_iter().map(work).collect())
    };
    let mut parts = parts.into_iter();
    let mut acc = parts.next().expect("at least one chunk");
    for p in parts {
        acc.merge(p);
    }
    Ok(acc)
}

fn run_chunk<O: PathObserver>(
    compiled: &CompiledModel,
    spec: RunSpec,
    chunk: u64,
    make: &impl Fn() -> O,
) -> O {
    let mut observer = make();
    let mut paths = vec![
        SampledPath {
            label: None,
            increments: vec![0.0; spec.horizon],
        };
        spec.copies
    ];
    let end = ((chunk + 1) * CHUNK).min(spec.replicas);
    for replica in chunk * CHUNK..end {
        let mut rng = replica_rng(spec.seed, replica);
        for path in paths.iter_mut() {
            path.label = compiled.sample_path(&mut rng, &mut path.increments);
        }
        observer.observe(replica, &paths);
    }
    observer
}

/// Stored partial-sum paths, one row per replica.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub horizon: usize,
    pub replicas: u64,
    pub seed: u64,
    /// Row-major `replicas × horizon`; entry `(r, N-1)` is `S_N`.
    pub partial_sums: Vec<f64>,
    /// Same layout; entry `(r, N-1)` is `max_{n≤N} |f_n|`.
    pub running_max: Vec<f64>,
    pub labels: Vec<Option<usize>>,
}

impl PathEnsemble {
    fn empty(horizon: usize, seed: u64) -> Self {
        PathEnsemble {
            horizon,
            replicas: 0,
            seed,
            partial_sums: Vec::new(),
            running_max: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn sums(&self, replica: usize) -> &[f64] {
        &self.partial_sums[replica * self.horizon..(replica + 1) * self.horizon]
    }

    pub fn maxima(&self, replica: usize) -> &[f64] {
        &self.running_max[replica * self.horizon..(replica + 1) * self.horizon]
    }

    /// Little-endian bytes of every stored number, for byte-level
    /// reproducibility checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 * self.partial_sums.len());
        for x in self.partial_sums.iter().chain(&self.running_max) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for l in &self.labels {
            out.extend_from_slice(&l.map_or(u64::MAX, |v| v as u64).to_le_bytes());
        }
        out
    }
}

impl PathObserver for PathEnsemble {
    fn observe(&mut self, _replica: u64, paths: &[SampledPath]) {
        let path = &paths[0];
        let mut sum = 0.0;
        let mut max: f64 = 0.0;
        for &x in &path.increments {
            sum += x;
            max = max.max(x.abs());
            self.partial_sums.push(sum);
            self.running_max.push(max);
        }
        self.labels.push(path.label);
        self.replicas += 1;
    }

    fn merge(&mut self, later: Self) {
        self.partial_sums.extend(later.partial_sums);
        self.running_max.extend(later.running_max);
        self.labels.extend(later.labels);
        self.replicas += later.replicas;
    }
}

/// Samples and stores `replicas` paths of length `horizon`.
pub fn sample_paths(
    model: &SequenceModel,
    horizon: usize,
    replicas: u64,
    seed: u64,
    workers: usize,
) -> Result<PathEnsemble> {
    let spec = RunSpec::new(horizon, replicas, seed).workers(workers);
    let mut ensemble = run_replicas(model, spec, || PathEnsemble::empty(horizon, seed))?;
    ensemble.seed = seed;
    Ok(ensemble)
}
