//! Simulation study: synthetic counts around error-prone populations, fits of
//! naive and Berkson offset models, and error/coverage scoring.
//!
//! Each replicate draws covariates `X1, X2 ~ N(0, 1)` per cell, true
//! populations `n* ~ N(n_ACS, sd^2)` truncated below at 1, `Omega* = X beta*`
//! with a leading column of ones, and `y* ~ Poisson(R* n* exp(Omega*))`.
//! Models are then fitted with the *reported* population of a chosen source.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::AreaGraph;
use crate::math::{median, quantile_sorted};
use crate::mcmc::{run_chains, split_rhat, SamplerSettings};
use crate::model::{DatasetParts, ModelConfig, OffsetModel, Source, StratifiedDataset};
use crate::offsets::acs_log_scale_sd;

/// Names of the generated design columns.
pub const COVARIATE_NAMES: [&str; 3] = ["intercept", "x1", "x2"];

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSpec {
    /// Intercept first, then one coefficient per generated covariate.
    pub true_betas: Vec<f64>,
    pub true_rate: f64,
    pub n_replicates: usize,
    pub area_ids: Vec<String>,
    pub group_labels: Vec<String>,
    /// ACS reported population per cell, `cell = area * n_groups + group`.
    pub base_population: Vec<f64>,
    /// ACS sd on the natural scale per cell.
    pub population_sd: Vec<f64>,
    /// Reported populations the PEP and WP fits plug in.
    pub pep_population: Vec<f64>,
    pub wp_population: Vec<f64>,
    pub seed: u64,
}

impl SimulationSpec {
    /// Spec with the default truth and every source reporting `base`.
    pub fn new(
        area_ids: Vec<String>,
        group_labels: Vec<String>,
        base_population: Vec<f64>,
        population_sd: Vec<f64>,
    ) -> Self {
        Self {
            true_betas: vec![0.001, 0.02, 0.01],
            true_rate: 0.001,
            n_replicates: 50,
            area_ids,
            group_labels,
            pep_population: base_population.clone(),
            wp_population: base_population.clone(),
            base_population,
            population_sd,
            seed: 2024,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.area_ids.len() * self.group_labels.len()
    }

    pub fn validate(&self) -> Result<()> {
        let cells = self.n_cells();
        if cells == 0 {
            return Err(Error::invalid("simulation", "needs at least one area and group"));
        }
        for (context, len) in [
            ("base_population", self.base_population.len()),
            ("population_sd", self.population_sd.len()),
            ("pep_population", self.pep_population.len()),
            ("wp_population", self.wp_population.len()),
        ] {
            if len != cells {
                return Err(Error::Dimension {
                    context,
                    expected: cells,
                    actual: len,
                });
            }
        }
        let positive = |v: &[f64]| v.iter().all(|&x| x > 0.0 && x.is_finite());
        if !positive(&self.base_population) || !positive(&self.pep_population) || !positive(&self.wp_population) {
            return Err(Error::invalid("population", "reported populations must be positive"));
        }
        if self.population_sd.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
            return Err(Error::invalid("population_sd", "must be finite and nonnegative"));
        }
        if !(self.true_rate > 0.0) {
            return Err(Error::invalid("true_rate", "must be positive"));
        }
        if self.true_betas.is_empty() {
            return Err(Error::invalid("true_betas", "needs at least the intercept"));
        }
        if self.n_replicates == 0 {
            return Err(Error::invalid("n_replicates", "must be positive"));
        }
        Ok(())
    }

    pub fn reported_population(&self, source: Source) -> &[f64] {
        match source {
            Source::Acs => &self.base_population,
            Source::Pep => &self.pep_population,
            Source::Wp => &self.wp_population,
        }
    }

    fn covariate_names(&self) -> Vec<String> {
        (0..self.true_betas.len())
            .map(|k| match COVARIATE_NAMES.get(k) {
                Some(name) => name.to_string(),
                None => format!("x{k}"),
            })
            .collect()
    }
}

/// One generated data set and its truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub index: usize,
    /// `[cell][covariate]`, intercept column included.
    pub covariates: Vec<f64>,
    pub n_star: Vec<f64>,
    pub omega: Vec<f64>,
    pub counts: Vec<u64>,
    /// Cells whose population draw fell below 1 and was truncated.
    pub clamped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub betas: Vec<f64>,
    pub omega: Vec<f64>,
    pub n_star: Vec<f64>,
}

/// Deterministic in `(spec.seed, index)`.
pub fn generate_replicate(spec: &SimulationSpec, index: usize) -> Result<Replicate> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let cells = spec.n_cells();
    let k = spec.true_betas.len();

    let mut covariates = Vec::with_capacity(cells * k);
    for _ in 0..cells {
        covariates.push(1.0);
        for _ in 1..k {
            covariates.push(StandardNormal.sample(&mut rng));
        }
    }
    let mut clamped = 0;
    let n_star = (0..cells)
        .map(|c| {
            let (mean, sd) = (spec.base_population[c], spec.population_sd[c]);
            let draw = if sd > 0.0 {
                Normal::new(mean, sd).expect("validated sd").sample(&mut rng)
            } else {
                mean
            };
            if draw < 1.0 {
                clamped += 1;
                1.0
            } else {
                draw
            }
        })
        .collect::<Vec<f64>>();
    let omega: Vec<f64> = (0..cells)
        .map(|c| {
            covariates[c * k..(c + 1) * k]
                .iter()
                .zip(&spec.true_betas)
                .map(|(x, b)| x * b)
                .sum()
        })
        .collect();
    let counts = (0..cells)
        .map(|c| {
            let mean = spec.true_rate * n_star[c] * omega[c].exp();
            Poisson::new(mean)
                .map(|p| p.sample(&mut rng) as u64)
                .map_err(|e| Error::invalid("poisson mean", format!("{mean}: {e}")))
        })
        .collect::<Result<Vec<u64>>>()?;
    Ok(Replicate {
        index,
        covariates,
        n_star,
        omega,
        counts,
        clamped,
    })
}

impl Replicate {
    /// The data a model sees when `source` reports the population. The
    /// reference rate is fixed at the true rate.
    pub fn dataset(&self, spec: &SimulationSpec, source: Source) -> Result<StratifiedDataset> {
        let offsets = spec.reported_population(source).to_vec();
        let offset_log_sd = match source {
            Source::Acs => Some(
                spec.base_population
                    .iter()
                    .zip(&spec.population_sd)
                    .map(|(&n, &sd)| acs_log_scale_sd(n, sd))
                    .collect::<Result<Vec<f64>>>()?,
            ),
            _ => None,
        };
        StratifiedDataset::new(DatasetParts {
            area_ids: spec.area_ids.clone(),
            group_labels: spec.group_labels.clone(),
            counts: self.counts.clone(),
            covariate_names: spec.covariate_names(),
            covariates: self.covariates.clone(),
            offsets,
            offset_log_sd,
            source,
            reference_rate: Some(spec.true_rate),
        })
    }

    pub fn truth(&self, spec: &SimulationSpec) -> Truth {
        Truth {
            betas: spec.true_betas.clone(),
            omega: self.omega.clone(),
            n_star: self.n_star.clone(),
        }
    }
}

/// ACS-reported data set and truth of one replicate.
pub fn generate_dataset(
    spec: &SimulationSpec,
    graph: &AreaGraph,
    index: usize,
) -> Result<(StratifiedDataset, Truth)> {
    if graph.area_ids() != spec.area_ids.as_slice() {
        return Err(Error::Config("graph area ids do not match the simulation areas".into()));
    }
    let replicate = generate_replicate(spec, index)?;
    Ok((replicate.dataset(spec, Source::Acs)?, replicate.truth(spec)))
}

/// Posterior point estimate (median) and central 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Estimate {
    pub fn from_draws(draws: &[f64]) -> Result<Self> {
        if draws.is_empty() {
            return Err(Error::InsufficientDraws("no draws to summarize".into()));
        }
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            median: quantile_sorted(&sorted, 0.5),
            lower: quantile_sorted(&sorted, 0.025),
            upper: quantile_sorted(&sorted, 0.975),
        })
    }
}

/// Error summaries with `error = truth - estimate`. `lc` is the share of
/// truths below the interval, `uc` above it, `ic` inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    pub me: f64,
    pub mde: f64,
    pub mae: f64,
    pub mse: f64,
    pub lc: f64,
    pub uc: f64,
    pub ic: f64,
}

impl ErrorSummary {
    fn mean_of(items: &[ErrorSummary]) -> Self {
        let n = items.len() as f64;
        let avg = |f: fn(&ErrorSummary) -> f64| items.iter().map(f).sum::<f64>() / n;
        Self {
            me: avg(|s| s.me),
            mde: avg(|s| s.mde),
            mae: avg(|s| s.mae),
            mse: avg(|s| s.mse),
            lc: avg(|s| s.lc),
            uc: avg(|s| s.uc),
            ic: avg(|s| s.ic),
        }
    }
}

pub fn summarize_errors(truths: &[f64], estimates: &[Estimate]) -> Result<ErrorSummary> {
    if truths.is_empty() {
        return Err(Error::InsufficientDraws("no replicates to score".into()));
    }
    if truths.len() != estimates.len() {
        return Err(Error::Dimension {
            context: "truths vs estimates",
            expected: truths.len(),
            actual: estimates.len(),
        });
    }
    let n = truths.len() as f64;
    let errors: Vec<f64> = truths.iter().zip(estimates).map(|(t, e)| t - e.median).collect();
    let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    let below = truths.iter().zip(estimates).filter(|(t, e)| **t < e.lower).count();
    let above = truths.iter().zip(estimates).filter(|(t, e)| **t > e.upper).count();
    let inside = truths.len() - below - above;
    Ok(ErrorSummary {
        me: errors.iter().sum::<f64>() / n,
        mde: median(&errors),
        mae: median(&abs),
        mse: errors.iter().map(|e| e * e).sum::<f64>() / n,
        lc: below as f64 / n,
        uc: above as f64 / n,
        ic: inside as f64 / n,
    })
}

/// One summary per coefficient, over replicates. `fits[j][k]` is the
/// estimate of coefficient `k` in replicate `j`.
pub fn score_fixed_effects(true_betas: &[f64], fits: &[Vec<Estimate>]) -> Result<Vec<ErrorSummary>> {
    if fits.is_empty() {
        return Err(Error::InsufficientDraws("no replicates to score".into()));
    }
    (0..true_betas.len())
        .map(|k| {
            let estimates = fits
                .iter()
                .map(|f| {
                    f.get(k).copied().ok_or(Error::Dimension {
                        context: "coefficients per fit",
                        expected: true_betas.len(),
                        actual: f.len(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            summarize_errors(&vec![true_betas[k]; fits.len()], &estimates)
        })
        .collect()
}

/// Per-cell summaries over replicates, then their mean over cells.
/// `truths[j][cell]` and `fits[j][cell]` index replicate then cell.
pub fn score_relative_risks(
    truths: &[Vec<f64>],
    fits: &[Vec<Estimate>],
) -> Result<(ErrorSummary, Vec<ErrorSummary>)> {
    if truths.is_empty() || fits.is_empty() {
        return Err(Error::InsufficientDraws("no replicates to score".into()));
    }
    if truths.len() != fits.len() {
        return Err(Error::Dimension {
            context: "replicates",
            expected: truths.len(),
            actual: fits.len(),
        });
    }
    let cells = truths[0].len();
    if truths.iter().any(|t| t.len() != cells) || fits.iter().any(|f| f.len() != cells) {
        return Err(Error::Dimension {
            context: "cells per replicate",
            expected: cells,
            actual: fits.iter().map(Vec::len).find(|&l| l != cells).unwrap_or(0),
        });
    }
    let per_cell = (0..cells)
        .map(|c| {
            let t: Vec<f64> = truths.iter().map(|r| r[c]).collect();
            let e: Vec<Estimate> = fits.iter().map(|r| r[c]).collect();
            summarize_errors(&t, &e)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ErrorSummary::mean_of(&per_cell), per_cell))
}

/// Fit of one (source, model) combination to one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateFit {
    pub source: Source,
    pub model: OffsetModel,
    pub replicate: usize,
    pub clamped: usize,
    pub outcome: std::result::Result<FitSummary, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub beta: Vec<Estimate>,
    pub log_rr: Vec<Estimate>,
    /// Split R-hat of every global parameter (betas, rho, delta).
    pub global_rhat: Vec<(String, f64)>,
    pub acceptance: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRow {
    pub source: Source,
    pub model: OffsetModel,
    /// `beta[<name>]` or `log_rr`.
    pub scope: String,
    pub summary: ErrorSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub rows: Vec<StudyRow>,
    pub fits: Vec<ReplicateFit>,
}

impl StudyReport {
    pub const HEADER: [&'static str; 10] = ["source", "model", "scope", "ME", "MDE", "MAE", "MSE", "LC", "UC", "IC"];

    pub fn row(&self, source: Source, model: OffsetModel, scope: &str) -> Option<&StudyRow> {
        self.rows
            .iter()
            .find(|r| r.source == source && r.model == model && r.scope == scope)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReplicateFit> {
        self.fits.iter().filter(|f| f.outcome.is_err())
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let fail = |e: csv::Error| Error::data(path, e.to_string());
        let mut w = csv::Writer::from_path(path).map_err(fail)?;
        w.write_record(Self::HEADER).map_err(fail)?;
        for r in &self.rows {
            let s = &r.summary;
            let mut record = vec![r.source.to_string(), r.model.to_string(), r.scope.clone()];
            record.extend([s.me, s.mde, s.mae, s.mse, s.lc, s.uc, s.ic].iter().map(f64::to_string));
            w.write_record(&record).map_err(fail)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// The six (source, model) pairs of the study: naive and Berkson fits for
/// each of ACS, PEP and WP.
pub fn default_combinations() -> Vec<(Source, OffsetModel)> {
    vec![
        (Source::Acs, OffsetModel::Naive),
        (Source::Acs, OffsetModel::BerksonKnown),
        (Source::Pep, OffsetModel::Naive),
        (Source::Pep, OffsetModel::BerksonIcar),
        (Source::Wp, OffsetModel::Naive),
        (Source::Wp, OffsetModel::BerksonWp),
    ]
}

fn fit_replicate(
    spec: &SimulationSpec,
    graph: &AreaGraph,
    replicate: &Replicate,
    source: Source,
    model: OffsetModel,
    settings: &SamplerSettings,
) -> Result<FitSummary> {
    let data = replicate.dataset(spec, source)?;
    let config = ModelConfig::new(model, graph)?;
    let chains = run_chains(&data, &config, graph, settings)?;
    let estimate = |name: &str| -> Result<Estimate> {
        let draws = chains
            .pooled_by_name(name)
            .ok_or_else(|| Error::Config(format!("parameter `{name}` was not recorded")))?;
        Estimate::from_draws(&draws)
    };
    let beta_names: Vec<String> = data.covariate_names().iter().map(|n| format!("beta[{n}]")).collect();
    let beta = beta_names.iter().map(|n| estimate(n)).collect::<Result<Vec<_>>>()?;
    let mut log_rr = Vec::with_capacity(data.n_cells());
    for area in data.area_ids() {
        for group in data.group_labels() {
            log_rr.push(estimate(&format!("log_rr[{area}:{group}]"))?);
        }
    }
    let mut global_rhat = Vec::new();
    for name in beta_names.iter().map(String::as_str).chain(["rho", "delta"]) {
        if let Some(p) = chains.param_index(name) {
            if let Ok(r) = split_rhat(&chains.param_chains(p)) {
                global_rhat.push((name.to_string(), r));
            }
        }
    }
    Ok(FitSummary {
        beta,
        log_rr,
        global_rhat,
        acceptance: chains.acceptance_rates(),
    })
}

/// Fits every combination to every replicate and scores them. Fit failures
/// are kept in the per-replicate records and skipped in the scores.
pub fn run_study(
    spec: &SimulationSpec,
    graph: &AreaGraph,
    combinations: &[(Source, OffsetModel)],
    settings: &SamplerSettings,
) -> Result<StudyReport> {
    spec.validate()?;
    settings.validate()?;
    if graph.area_ids() != spec.area_ids.as_slice() {
        return Err(Error::Config("graph area ids do not match the simulation areas".into()));
    }
    let replicates = (0..spec.n_replicates)
        .map(|j| generate_replicate(spec, j))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..combinations.len())
        .flat_map(|c| (0..spec.n_replicates).map(move |j| (c, j)))
        .collect();
    let fits: Vec<ReplicateFit> = jobs
        .par_iter()
        .map(|&(c, j)| {
            let (source, model) = combinations[c];
            let mut run = settings.clone();
            run.parallel = false;
            run.seed = settings.seed.wrapping_add(j as u64);
            let outcome = fit_replicate(spec, graph, &replicates[j], source, model, &run)
                .map_err(|e| e.to_string());
            ReplicateFit {
                source,
                model,
                replicate: j,
                clamped: replicates[j].clamped,
                outcome,
            }
        })
        .collect();

    let names = spec.covariate_names();
    let mut rows = Vec::new();
    for &(source, model) in combinations {
        let ok: Vec<(&FitSummary, usize)> = fits
            .iter()
            .filter(|f| f.source == source && f.model == model)
            .filter_map(|f| f.outcome.as_ref().ok().map(|s| (s, f.replicate)))
            .collect();
        if ok.is_empty() {
            continue;
        }
        let betas: Vec<Vec<Estimate>> = ok.iter().map(|(s, _)| s.beta.clone()).collect();
        for (k, summary) in score_fixed_effects(&spec.true_betas, &betas)?.into_iter().enumerate() {
            rows.push(StudyRow {
                source,
                model,
                scope: format!("beta[{}]", names[k]),
                summary,
            });
        }
        let truths: Vec<Vec<f64>> = ok.iter().map(|(_, j)| replicates[*j].omega.clone()).collect();
        let cells: Vec<Vec<Estimate>> = ok.iter().map(|(s, _)| s.log_rr.clone()).collect();
        let (summary, _) = score_relative_risks(&truths, &cells)?;
        rows.push(StudyRow {
            source,
            model,
            scope: "log_rr".into(),
            summary,
        });
    }
    Ok(StudyReport { rows, fits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(n: f64, sd: f64) -> SimulationSpec {
        SimulationSpec::new(vec!["a".into()], vec!["g".into()], vec![n], vec![sd])
    }

    fn est(median: f64, lower: f64, upper: f64) -> Estimate {
        Estimate { median, lower, upper }
    }

    #[test]
    fn degenerate_noise_and_null_model() {
        let mut s = spec(5000.0, 0.0);
        s.true_betas = vec![0.0, 0.0, 0.0];
        let r = generate_replicate(&s, 3).unwrap();
        assert_eq!(r.n_star, vec![5000.0]);
        assert_eq!(r.omega, vec![0.0]);
        assert_eq!(r, generate_replicate(&s, 3).unwrap());
        assert_ne!(r.covariates, generate_replicate(&s, 4).unwrap().covariates);
    }

    #[test]
    fn truncation_counts_events() {
        let s = spec(2.0, 50.0);
        let clamped: usize = (0..200).map(|j| generate_replicate(&s, j).unwrap().clamped).sum();
        assert!(clamped > 50);
        assert!((0..200).all(|j| generate_replicate(&s, j).unwrap().n_star[0] >= 1.0));
    }

    #[test]
    fn poisson_moments() {
        let mut s = spec(20_000.0, 0.0);
        s.true_betas = vec![0.0, 0.0, 0.0];
        let ys: Vec<f64> = (0..10_000)
            .map(|j| generate_replicate(&s, j).unwrap().counts[0] as f64)
            .collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (ys.len() - 1) as f64;
        assert!((mean / 20.0 - 1.0).abs() < 0.05, "{mean}");
        assert!((0.9..=1.1).contains(&(var / mean)), "{}", var / mean);
    }

    #[test]
    fn hand_scored_errors() {
        let truths = [0.0, 0.0, 0.0];
        let estimates = [est(1.0, 0.5, 1.5), est(0.0, -1.0, 1.0), est(-3.0, -4.0, -2.0)];
        let s = summarize_errors(&truths, &estimates).unwrap();
        assert_abs_diff_eq!(s.me, 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(s.mde, 0.0);
        assert_eq!(s.mae, 1.0);
        assert_abs_diff_eq!(s.mse, 10.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.lc, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.uc, 1.0 / 3.0, epsilon = 1e-15);
        assert!((s.lc + s.uc + s.ic - 1.0).abs() < 1e-12);
        assert!(summarize_errors(&[], &[]).is_err());
    }

    #[test]
    fn perfect_and_biased_fits() {
        let perfect = score_fixed_effects(&[0.5], &[vec![est(0.5, 0.4, 0.6)]]).unwrap();
        assert_eq!(perfect[0].mae, 0.0);
        assert_eq!(perfect[0].ic, 1.0);

        let truths = vec![vec![0.1, -0.2], vec![0.3, 0.0]];
        let b = 0.25;
        let fits: Vec<Vec<Estimate>> = truths
            .iter()
            .map(|r| r.iter().map(|t| est(t - b, t - b - 1.0, t - b + 1.0)).collect())
            .collect();
        let (s, cells) = score_relative_risks(&truths, &fits).unwrap();
        assert_eq!(cells.len(), 2);
        assert_abs_diff_eq!(s.me, b, epsilon = 1e-12);
        assert_abs_diff_eq!(s.mde, b, epsilon = 1e-12);
        assert_abs_diff_eq!(s.mae, b, epsilon = 1e-12);
        assert_abs_diff_eq!(s.mse, b * b, epsilon = 1e-12);
        assert_eq!(s.ic, 1.0);
    }

    #[test]
    fn smoke_study() {
        let ids = vec!["a".into(), "b".into()];
        let graph = AreaGraph::from_edge_list(2, &[(0, 1)], ids.clone()).unwrap();
        let mut s = SimulationSpec::new(ids, vec!["g".into()], vec![3000.0, 5000.0], vec![100.0, 200.0]);
        s.n_replicates = 1;
        let settings = SamplerSettings {
            n_chains: 2,
            n_iterations: 200,
            burn_in: 100,
            thin: 1,
            ..SamplerSettings::desk()
        };
        let report = run_study(&s, &graph, &[(Source::Pep, OffsetModel::Naive)], &settings).unwrap();
        assert_eq!(report.fits.len(), 1);
        assert_eq!(report.rows.len(), 4);
        assert!(report.row(Source::Pep, OffsetModel::Naive, "log_rr").is_some());
        assert_eq!(report.failures().count(), 0);
    }
}
