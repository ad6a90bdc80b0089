use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Acceptance bookkeeping: a per-scale window used for adaptation and
/// per-block totals split into burn-in and sampling phases.
#[derive(Debug, Clone)]
pub struct Ledger {
    slot_block: Vec<usize>,
    window_accepted: Vec<u32>,
    window_proposed: Vec<u32>,
    burn_in: Vec<BlockCount>,
    sampling: Vec<BlockCount>,
    in_sampling: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BlockCount {
    pub proposed: u64,
    pub accepted: u64,
}

impl BlockCount {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

impl Ledger {
    pub fn new(slot_block: Vec<usize>, n_blocks: usize) -> Self {
        let n = slot_block.len();
        Self {
            slot_block,
            window_accepted: vec![0; n],
            window_proposed: vec![0; n],
            burn_in: vec![BlockCount::default(); n_blocks],
            sampling: vec![BlockCount::default(); n_blocks],
            in_sampling: false,
        }
    }

    #[inline]
    pub fn record(&mut self, slot: usize, accepted: bool) {
        self.window_proposed[slot] += 1;
        self.window_accepted[slot] += accepted as u32;
        let block = self.slot_block[slot];
        let counts = if self.in_sampling {
            &mut self.sampling[block]
        } else {
            &mut self.burn_in[block]
        };
        counts.proposed += 1;
        counts.accepted += accepted as u64;
    }

    pub fn window_rate(&self, slot: usize) -> Option<f64> {
        let proposed = self.window_proposed[slot];
        (proposed > 0).then(|| self.window_accepted[slot] as f64 / proposed as f64)
    }

    pub fn reset_window(&mut self) {
        self.window_accepted.iter_mut().for_each(|x| *x = 0);
        self.window_proposed.iter_mut().for_each(|x| *x = 0);
    }

    pub fn begin_sampling(&mut self) {
        self.in_sampling = true;
        self.reset_window();
    }

    pub fn burn_in_counts(&self) -> &[BlockCount] {
        &self.burn_in
    }

    pub fn sampling_counts(&self) -> &[BlockCount] {
        &self.sampling
    }

    pub fn n_slots(&self) -> usize {
        self.slot_block.len()
    }
}

/// Multiplicative scale adaptation toward a target acceptance rate, applied
/// once per window during burn-in and frozen afterwards.
#[derive(Debug, Clone)]
pub struct Adapter {
    pub target: f64,
    pub rate: f64,
    pub min_scale: f64,
    pub max_scale: f64,
    frozen: bool,
}

impl Adapter {
    pub fn new(target: f64, rate: f64) -> Self {
        Self {
            target,
            rate,
            min_scale: 1e-6,
            max_scale: 1e3,
            frozen: false,
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// `scale * exp(rate * (window acceptance - target))` per slot, clamped;
    /// slots without proposals in the window are left alone.
    pub fn adapt_scales(&self, ledger: &Ledger, scales: &[f64]) -> Result<Vec<f64>> {
        if self.frozen {
            return Err(Error::AdaptationFrozen);
        }
        if scales.len() != ledger.n_slots() {
            return Err(Error::Dimension {
                context: "adaptive scales",
                expected: ledger.n_slots(),
                actual: scales.len(),
            });
        }
        Ok(scales
            .iter()
            .enumerate()
            .map(|(slot, &scale)| match ledger.window_rate(slot) {
                Some(acc) => (scale * (self.rate * (acc - self.target)).exp())
                    .clamp(self.min_scale, self.max_scale),
                None => scale,
            })
            .collect())
    }
}

#[inline]
pub(crate) fn metropolis_accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    if log_ratio >= 0.0 {
        true
    } else if log_ratio.is_nan() {
        false
    } else {
        rng.random::<f64>().ln() < log_ratio
    }
}

#[inline]
pub(crate) fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// One symmetric Gaussian random-walk Metropolis step on a scalar target.
/// Returns the new point, its log density, and whether the move was accepted.
pub fn random_walk_metropolis<R, F>(
    x: f64,
    log_density: f64,
    scale: f64,
    target: F,
    rng: &mut R,
) -> (f64, f64, bool)
where
    R: Rng + ?Sized,
    F: Fn(f64) -> f64,
{
    let proposal = x + scale * standard_normal(rng);
    let proposed_density = target(proposal);
    if metropolis_accept(proposed_density - log_density, rng) {
        (proposal, proposed_density, true)
    } else {
        (x, log_density, false)
    }
}
