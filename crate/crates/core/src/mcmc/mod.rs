//! Adaptive random-walk Metropolis-within-Gibbs with multi-chain orchestration.
//!
//! Chain `c` draws from `ChaCha8Rng::seed_from_u64(seed)` with its stream set
//! to `c`, so each chain has its own independent keystream and results do not
//! depend on how chains are scheduled across threads.

mod adapt;
mod diagnostics;
mod export;
mod sampler;

pub use adapt::{random_walk_metropolis, Adapter, BlockCount, Ledger};
pub use diagnostics::{effective_sample_size, split_rhat, summarize, SummaryRow, SummaryTable};
pub use export::{read_binary, write_binary, write_csv, BINARY_MAGIC, BINARY_VERSION};
pub use sampler::{block_update, parameter_names, run_chains, Block, BlockOutcome};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub type ChainRng = ChaCha8Rng;

/// Environment variable that caps the number of worker threads for chains.
pub const THREADS_ENV: &str = "BSBE_THREADS";

pub fn chain_rng(seed: u64, chain: usize) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSettings {
    pub n_chains: usize,
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub adapt_target: f64,
    pub adapt_window: usize,
    /// Step size of the log-scale adaptation.
    pub adapt_rate: f64,
    /// Run chains on the rayon pool. Output is identical either way.
    pub parallel: bool,
    /// Also keep draws of the latent log offsets and log error sds.
    pub record_latent: bool,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self::paper()
    }
}

impl SamplerSettings {
    /// 8 chains of 80,000 iterations, 20,000 burn-in, thinned by 10.
    pub fn paper() -> Self {
        Self {
            n_chains: 8,
            n_iterations: 80_000,
            burn_in: 20_000,
            thin: 10,
            seed: 1,
            adapt_target: 0.44,
            adapt_window: 50,
            adapt_rate: 0.05,
            parallel: true,
            record_latent: false,
        }
    }

    /// 4 chains of 6,000 iterations, 2,000 burn-in, thinned by 2.
    pub fn desk() -> Self {
        Self {
            n_chains: 4,
            n_iterations: 6_000,
            burn_in: 2_000,
            thin: 2,
            ..Self::paper()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn n_draws(&self) -> usize {
        (self.n_iterations - self.burn_in) / self.thin
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::Config(reason));
        if self.n_chains == 0 || self.n_iterations == 0 || self.thin == 0 || self.adapt_window == 0 {
            return bad("chains, iterations, thin and adapt_window must be positive".into());
        }
        if self.burn_in >= self.n_iterations {
            return bad(format!(
                "burn_in ({}) must be below n_iterations ({})",
                self.burn_in, self.n_iterations
            ));
        }
        if self.n_draws() < 2 {
            return bad("(n_iterations - burn_in) / thin must be at least 2".into());
        }
        if !(self.adapt_target > 0.0 && self.adapt_target < 1.0) {
            return bad(format!("adapt_target must be in (0, 1), got {}", self.adapt_target));
        }
        if !(self.adapt_rate >= 0.0) || !self.adapt_rate.is_finite() {
            return bad(format!("adapt_rate must be nonnegative, got {}", self.adapt_rate));
        }
        Ok(())
    }
}

/// A model the generic runner can drive: one Gibbs sweep of Metropolis
/// updates over adaptive scale slots, each slot belonging to a block.
pub trait ChainModel {
    /// Block index of every adaptive scale slot.
    fn slot_blocks(&self) -> Vec<usize>;
    fn initial_scale(&self) -> f64 {
        2.4
    }
    fn sweep(&mut self, scales: &[f64], ledger: &mut Ledger, rng: &mut ChainRng);
    /// Appends the current values of the recorded parameters.
    fn record(&self, out: &mut Vec<f64>);
}

/// Thinned post-burn-in draws of every chain plus acceptance bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet {
    names: Vec<String>,
    n_chains: usize,
    n_draws: usize,
    /// `[chain][param][draw]`.
    draws: Vec<f64>,
    settings: SamplerSettings,
    block_names: Vec<String>,
    burn_in_acceptance: Vec<Vec<BlockCount>>,
    acceptance: Vec<Vec<BlockCount>>,
}

impl ChainSet {
    /// Assembles a set from `draws[chain][param][draw]`.
    pub fn from_draws(
        names: Vec<String>,
        draws: Vec<Vec<Vec<f64>>>,
        settings: SamplerSettings,
    ) -> Result<Self> {
        let n_chains = draws.len();
        let n_draws = draws.first().and_then(|c| c.first()).map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(n_chains * names.len() * n_draws);
        for chain in &draws {
            if chain.len() != names.len() {
                return Err(Error::Dimension {
                    context: "parameters per chain",
                    expected: names.len(),
                    actual: chain.len(),
                });
            }
            for param in chain {
                if param.len() != n_draws {
                    return Err(Error::Dimension {
                        context: "draws per chain",
                        expected: n_draws,
                        actual: param.len(),
                    });
                }
                flat.extend_from_slice(param);
            }
        }
        Ok(Self {
            names,
            n_chains,
            n_draws,
            draws: flat,
            settings,
            block_names: Vec::new(),
            burn_in_acceptance: vec![Vec::new(); n_chains],
            acceptance: vec![Vec::new(); n_chains],
        })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn settings(&self) -> &SamplerSettings {
        &self.settings
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn chain_draws(&self, chain: usize, param: usize) -> &[f64] {
        let start = (chain * self.n_params() + param) * self.n_draws;
        &self.draws[start..start + self.n_draws]
    }

    pub fn param_chains(&self, param: usize) -> Vec<&[f64]> {
        (0..self.n_chains).map(|c| self.chain_draws(c, param)).collect()
    }

    /// All chains concatenated in chain order.
    pub fn pooled(&self, param: usize) -> Vec<f64> {
        self.param_chains(param).concat()
    }

    pub fn pooled_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.param_index(name).map(|p| self.pooled(p))
    }

    pub fn block_names(&self) -> &[String] {
        &self.block_names
    }

    /// Post-burn-in proposal counts, `[chain][block]`.
    pub fn acceptance(&self) -> &[Vec<BlockCount>] {
        &self.acceptance
    }

    pub fn burn_in_acceptance(&self) -> &[Vec<BlockCount>] {
        &self.burn_in_acceptance
    }

    /// Post-burn-in acceptance rate of every block that made proposals,
    /// pooled over chains.
    pub fn acceptance_rates(&self) -> Vec<(String, f64)> {
        self.block_names
            .iter()
            .enumerate()
            .filter_map(|(b, name)| {
                let total = self.acceptance.iter().fold(BlockCount::default(), |acc, c| BlockCount {
                    proposed: acc.proposed + c[b].proposed,
                    accepted: acc.accepted + c[b].accepted,
                });
                (total.proposed > 0).then(|| (name.clone(), total.rate()))
            })
            .collect()
    }
}

struct ChainOutput {
    /// `[draw][param]`.
    rows: Vec<f64>,
    burn_in: Vec<BlockCount>,
    sampling: Vec<BlockCount>,
}

fn run_one<M: ChainModel>(
    mut model: M,
    mut rng: ChainRng,
    settings: &SamplerSettings,
    n_blocks: usize,
    n_params: usize,
) -> Result<ChainOutput> {
    let slot_blocks = model.slot_blocks();
    let mut scales = vec![model.initial_scale(); slot_blocks.len()];
    let mut ledger = Ledger::new(slot_blocks, n_blocks);
    let mut adapter = Adapter::new(settings.adapt_target, settings.adapt_rate);
    let mut rows = Vec::with_capacity(settings.n_draws() * n_params);
    for iteration in 0..settings.n_iterations {
        if iteration == settings.burn_in {
            adapter.freeze();
            ledger.begin_sampling();
        }
        model.sweep(&scales, &mut ledger, &mut rng);
        if iteration < settings.burn_in {
            if (iteration + 1) % settings.adapt_window == 0 {
                scales = adapter.adapt_scales(&ledger, &scales)?;
                ledger.reset_window();
            }
        } else if (iteration - settings.burn_in + 1) % settings.thin == 0 {
            let before = rows.len();
            model.record(&mut rows);
            if rows.len() - before != n_params {
                return Err(Error::Dimension {
                    context: "recorded parameters",
                    expected: n_params,
                    actual: rows.len() - before,
                });
            }
            if let Some(i) = rows[before..].iter().position(|x| !x.is_finite()) {
                return Err(Error::invalid(
                    "draws",
                    format!("non-finite value for parameter {i} at iteration {iteration}"),
                ));
            }
        }
    }
    Ok(ChainOutput {
        rows,
        burn_in: ledger.burn_in_counts().to_vec(),
        sampling: ledger.sampling_counts().to_vec(),
    })
}

fn thread_count() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Runs `settings.n_chains` chains of the model built by `build(chain, rng)`
/// and merges them in chain order.
pub fn run_model<M, F>(
    names: Vec<String>,
    block_names: Vec<String>,
    settings: &SamplerSettings,
    build: F,
) -> Result<ChainSet>
where
    M: ChainModel,
    F: Fn(usize, &mut ChainRng) -> Result<M> + Sync,
{
    settings.validate()?;
    let n_params = names.len();
    let n_blocks = block_names.len();
    let chain = |c: usize| -> Result<ChainOutput> {
        let mut rng = chain_rng(settings.seed, c);
        let model = build(c, &mut rng)?;
        run_one(model, rng, settings, n_blocks, n_params)
    };
    let outputs: Vec<Result<ChainOutput>> = if settings.parallel && settings.n_chains > 1 {
        let run = || (0..settings.n_chains).into_par_iter().map(chain).collect();
        match thread_count() {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?
                .install(run),
            None => run(),
        }
    } else {
        (0..settings.n_chains).map(chain).collect()
    };

    let n_draws = settings.n_draws();
    let mut draws = Vec::with_capacity(settings.n_chains * n_params * n_draws);
    let mut burn_in_acceptance = Vec::with_capacity(settings.n_chains);
    let mut acceptance = Vec::with_capacity(settings.n_chains);
    for output in outputs {
        let output = output?;
        for p in 0..n_params {
            draws.extend((0..n_draws).map(|d| output.rows[d * n_params + p]));
        }
        burn_in_acceptance.push(output.burn_in);
        acceptance.push(output.sampling);
    }
    Ok(ChainSet {
        names,
        n_chains: settings.n_chains,
        n_draws,
        draws,
        settings: settings.clone(),
        block_names,
        burn_in_acceptance,
        acceptance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles() {
        let paper = SamplerSettings::paper();
        assert_eq!(paper.n_draws(), 6_000);
        assert_eq!(paper.n_draws() * paper.n_chains, 48_000);
        assert_eq!(SamplerSettings::desk().n_draws(), 2_000);
        paper.validate().unwrap();
        SamplerSettings::desk().validate().unwrap();
    }

    #[test]
    fn settings_validation() {
        let mut s = SamplerSettings::desk();
        s.burn_in = s.n_iterations;
        assert!(s.validate().is_err());
        let mut s = SamplerSettings::desk();
        s.thin = 3000;
        assert!(s.validate().is_err());
        let mut s = SamplerSettings::desk();
        s.adapt_target = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn chain_streams_differ() {
        use rand::Rng;
        let a: u64 = chain_rng(5, 0).random();
        let b: u64 = chain_rng(5, 1).random();
        let a2: u64 = chain_rng(5, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, a2);
    }

    #[test]
    fn chain_set_layout() {
        let draws = vec![
            vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            vec![vec![5.0, 6.0], vec![7.0, 8.0]],
        ];
        let set = ChainSet::from_draws(vec!["a".into(), "b".into()], draws, SamplerSettings::desk()).unwrap();
        assert_eq!(set.chain_draws(1, 0), &[5.0, 6.0]);
        assert_eq!(set.pooled(1), vec![3.0, 4.0, 7.0, 8.0]);
        assert_eq!(set.param_index("b"), Some(1));
        assert!(ChainSet::from_draws(vec!["a".into()], vec![vec![vec![1.0], vec![2.0]]], SamplerSettings::desk()).is_err());
    }
}
