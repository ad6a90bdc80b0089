use rustfft::{num_complex::Complex, FftPlanner};

use super::ChainSet;
use crate::error::{Error, Result};
use crate::math::quantile_sorted;

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// Classic split R-hat: every chain is cut in half (dropping the middle draw
/// of odd-length chains) and `sqrt(V / W)` is computed over the halves.
/// When the within-chain variance is zero the result is 1 if the halves
/// agree and infinity otherwise.
pub fn split_rhat<C: AsRef<[f64]>>(chains: &[C]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::InsufficientDraws(format!(
            "split R-hat needs at least 2 chains, got {}",
            chains.len()
        )));
    }
    let n = chains.iter().map(|c| c.as_ref().len()).min().unwrap_or(0);
    if n < 4 {
        return Err(Error::InsufficientDraws(format!(
            "split R-hat needs at least 4 draws per chain, got {n}"
        )));
    }
    let half = n / 2;
    let mut halves = Vec::with_capacity(2 * chains.len());
    for chain in chains {
        let c = &chain.as_ref()[..n];
        halves.push(&c[..half]);
        halves.push(&c[n - half..]);
    }
    let means: Vec<f64> = halves.iter().map(|h| mean(h)).collect();
    let w = mean(&halves.iter().map(|h| sample_variance(h)).collect::<Vec<_>>());
    let b_over_n = sample_variance(&means);
    if w == 0.0 {
        return Ok(if b_over_n == 0.0 { 1.0 } else { f64::INFINITY });
    }
    let nh = half as f64;
    let var_plus = (nh - 1.0) / nh * w + b_over_n;
    Ok((var_plus / w).sqrt())
}

/// Biased autocovariance at every lag, via zero-padded FFT.
fn autocovariance(x: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = x.len();
    let m = mean(x);
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - m, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    planner.plan_fft_forward(size).process(&mut buf);
    for z in buf.iter_mut() {
        *z = Complex::new(z.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    buf[..n].iter().map(|z| z.re / (size as f64 * n as f64)).collect()
}

/// Multi-chain effective sample size with Geyer's initial positive and
/// monotone sequence truncation. Floored at 1 and capped at the total
/// number of draws.
pub fn effective_sample_size<C: AsRef<[f64]>>(chains: &[C]) -> Result<f64> {
    let m = chains.len();
    let n = chains.iter().map(|c| c.as_ref().len()).min().unwrap_or(0);
    if m == 0 || n < 10 {
        return Err(Error::InsufficientDraws(format!(
            "ESS needs at least 10 draws per chain, got {n}"
        )));
    }
    let total = (m * n) as f64;
    let nf = n as f64;
    let mut planner = FftPlanner::new();
    let acov: Vec<Vec<f64>> = chains.iter().map(|c| autocovariance(&c.as_ref()[..n], &mut planner)).collect();
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(&c.as_ref()[..n])).collect();
    let mean_var = acov.iter().map(|a| a[0]).sum::<f64>() / m as f64 * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += sample_variance(&chain_means);
    }
    if !(var_plus > 0.0) || !var_plus.is_finite() {
        return Ok(1.0);
    }
    let rho = |t: usize| -> f64 {
        let avg = acov.iter().map(|a| a[t]).sum::<f64>() / m as f64;
        1.0 - (mean_var - avg) / var_plus
    };

    let mut sum = 0.0;
    let mut previous = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(previous);
        previous = pair;
        sum += pair;
        t += 2;
    }
    let tau = -1.0 + 2.0 * sum;
    Ok((total / tau).clamp(1.0, total))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q2_5: f64,
    pub median: f64,
    pub q97_5: f64,
    pub rhat: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SummaryTable {
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub const HEADER: [&'static str; 8] = ["parameter", "mean", "sd", "q2.5", "median", "q97.5", "rhat", "ess"];

    pub fn get(&self, name: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Pooled summaries of every recorded parameter. R-hat and ESS are NaN when
/// there are too few chains or draws to compute them.
pub fn summarize(chains: &ChainSet) -> Result<SummaryTable> {
    if chains.n_chains() == 0 || chains.n_draws() == 0 {
        return Err(Error::InsufficientDraws("chain set is empty".into()));
    }
    let rows = (0..chains.n_params())
        .map(|p| {
            let per_chain = chains.param_chains(p);
            let mut pooled = per_chain.concat();
            let mean = self::mean(&pooled);
            let sd = if pooled.len() > 1 { sample_variance(&pooled).sqrt() } else { 0.0 };
            pooled.sort_by(f64::total_cmp);
            SummaryRow {
                name: chains.names()[p].clone(),
                mean,
                sd,
                q2_5: quantile_sorted(&pooled, 0.025),
                median: quantile_sorted(&pooled, 0.5),
                q97_5: quantile_sorted(&pooled, 0.975),
                rhat: split_rhat(&per_chain).unwrap_or(f64::NAN),
                ess: effective_sample_size(&per_chain).unwrap_or(f64::NAN),
            }
        })
        .collect();
    Ok(SummaryTable { rows })
}
