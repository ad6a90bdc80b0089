//! The joint disease-mapping model: Poisson counts with a BYM2 log-relative
//! risk and a latent log population offset.
//!
//! Cells are indexed row-major, `cell = area * n_groups + group`.

pub(crate) mod density;

pub use density::{
    effective_log_gamma, linear_predictor, log_likelihood, log_posterior, log_prior, log_risk,
    relative_risk,
};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{bym2_scaling_factor, AreaGraph};
use crate::math::ln_factorial;

/// Where the reported population-at-risk comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Pep,
    Acs,
    Wp,
}

impl Source {
    pub const ALL: [Source; 3] = [Source::Pep, Source::Acs, Source::Wp];
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Pep => "PEP",
            Source::Acs => "ACS",
            Source::Wp => "WP",
        })
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "PEP" => Ok(Source::Pep),
            "ACS" => Ok(Source::Acs),
            "WP" | "WORLDPOP" => Ok(Source::Wp),
            other => Err(Error::Config(format!("unknown population source `{other}`"))),
        }
    }
}

/// How the true log offset relates to the reported population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OffsetModel {
    /// Reported population treated as exact.
    Naive,
    /// Normal error on the log scale with known sd (ACS margins of error).
    BerksonKnown,
    /// Unknown cell sds with a spatial ICAR prior on their logs, one field per group.
    BerksonIcar,
    /// As `BerksonIcar` plus a source-wide extra variance component.
    BerksonWp,
}

impl OffsetModel {
    /// Column label used in study reports.
    pub fn label(self) -> &'static str {
        match self {
            OffsetModel::Naive => "Naive",
            OffsetModel::BerksonKnown => "BSBE-ACS",
            OffsetModel::BerksonIcar | OffsetModel::BerksonWp => "BSBE-ICAR",
        }
    }

    pub fn has_latent_offsets(self) -> bool {
        self != OffsetModel::Naive
    }

    pub fn has_error_fields(self) -> bool {
        matches!(self, OffsetModel::BerksonIcar | OffsetModel::BerksonWp)
    }
}

impl fmt::Display for OffsetModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OffsetModel::Naive => "Naive",
            OffsetModel::BerksonKnown => "BerksonKnown",
            OffsetModel::BerksonIcar => "BerksonICAR",
            OffsetModel::BerksonWp => "BerksonWP",
        })
    }
}

impl FromStr for OffsetModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "naive" => Ok(OffsetModel::Naive),
            "berksonknown" | "bsbe-acs" => Ok(OffsetModel::BerksonKnown),
            "berksonicar" | "bsbe-icar" => Ok(OffsetModel::BerksonIcar),
            "berksonwp" | "bsbe-wp" => Ok(OffsetModel::BerksonWp),
            other => Err(Error::Config(format!("unknown offset model `{other}`"))),
        }
    }
}

/// Inputs for [`StratifiedDataset::new`].
#[derive(Debug, Clone)]
pub struct DatasetParts {
    pub area_ids: Vec<String>,
    pub group_labels: Vec<String>,
    pub counts: Vec<u64>,
    pub covariate_names: Vec<String>,
    /// `[cell][covariate]`, row-major.
    pub covariates: Vec<f64>,
    pub offsets: Vec<f64>,
    pub offset_log_sd: Option<Vec<f64>>,
    pub source: Source,
    /// `None` derives the rate as total count over total population.
    pub reference_rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StratifiedDataset {
    area_ids: Vec<String>,
    group_labels: Vec<String>,
    counts: Vec<u64>,
    covariate_names: Vec<String>,
    covariates: Vec<f64>,
    offsets: Vec<f64>,
    offset_log_sd: Option<Vec<f64>>,
    source: Source,
    reference_rate: f64,
    log_offsets: Vec<f64>,
    ln_count_factorial: Vec<f64>,
}

impl StratifiedDataset {
    pub fn new(parts: DatasetParts) -> Result<Self> {
        let n_areas = parts.area_ids.len();
        let n_groups = parts.group_labels.len();
        if n_areas == 0 || n_groups == 0 {
            return Err(Error::invalid("dataset", "needs at least one area and one group"));
        }
        let cells = n_areas * n_groups;
        let k = parts.covariate_names.len();
        for (context, len, expected) in [
            ("counts", parts.counts.len(), cells),
            ("offsets", parts.offsets.len(), cells),
            ("covariates", parts.covariates.len(), cells * k),
        ] {
            if len != expected {
                return Err(Error::Dimension {
                    context,
                    expected,
                    actual: len,
                });
            }
        }
        if let Some(cell) = parts.offsets.iter().position(|&n| !(n > 0.0) || !n.is_finite()) {
            return Err(Error::invalid(
                "offset_values",
                format!("population must be positive and finite (cell {cell})"),
            ));
        }
        if parts.covariates.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("covariates", "must be finite"));
        }
        match (&parts.offset_log_sd, parts.source) {
            (Some(sd), Source::Acs) => {
                if sd.len() != cells {
                    return Err(Error::Dimension {
                        context: "offset_log_sd",
                        expected: cells,
                        actual: sd.len(),
                    });
                }
                if sd.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
                    return Err(Error::invalid("offset_log_sd", "must be finite and nonnegative"));
                }
            }
            (None, Source::Acs) => {
                return Err(Error::invalid("offset_log_sd", "required for ACS populations"))
            }
            (Some(_), _) => {
                return Err(Error::invalid(
                    "offset_log_sd",
                    "only ACS populations carry a reported log-scale sd",
                ))
            }
            (None, _) => {}
        }
        let reference_rate = match parts.reference_rate {
            Some(r) => r,
            None => {
                let total_y: f64 = parts.counts.iter().map(|&y| y as f64).sum();
                let total_n: f64 = parts.offsets.iter().sum();
                total_y / total_n
            }
        };
        if !(reference_rate > 0.0) || !reference_rate.is_finite() {
            return Err(Error::invalid(
                "reference_rate",
                format!("must be positive, got {reference_rate}"),
            ));
        }

        let log_offsets = parts.offsets.iter().map(|n| n.ln()).collect();
        let ln_count_factorial = parts.counts.iter().map(|&y| ln_factorial(y)).collect();
        Ok(Self {
            area_ids: parts.area_ids,
            group_labels: parts.group_labels,
            counts: parts.counts,
            covariate_names: parts.covariate_names,
            covariates: parts.covariates,
            offsets: parts.offsets,
            offset_log_sd: parts.offset_log_sd,
            source: parts.source,
            reference_rate,
            log_offsets,
            ln_count_factorial,
        })
    }

    pub fn n_areas(&self) -> usize {
        self.area_ids.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_labels.len()
    }

    pub fn n_cells(&self) -> usize {
        self.counts.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn cell(&self, area: usize, group: usize) -> usize {
        area * self.n_groups() + group
    }

    pub fn area_ids(&self) -> &[String] {
        &self.area_ids
    }

    pub fn group_labels(&self) -> &[String] {
        &self.group_labels
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    pub fn covariate_row(&self, cell: usize) -> &[f64] {
        let k = self.n_covariates();
        &self.covariates[cell * k..(cell + 1) * k]
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn log_offsets(&self) -> &[f64] {
        &self.log_offsets
    }

    pub fn offset_log_sd(&self) -> Option<&[f64]> {
        self.offset_log_sd.as_deref()
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn reference_rate(&self) -> f64 {
        self.reference_rate
    }

    pub(crate) fn ln_count_factorial(&self) -> &[f64] {
        &self.ln_count_factorial
    }

    /// Same data with a different reference rate.
    pub fn with_reference_rate(mut self, rate: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::invalid("reference_rate", format!("must be positive, got {rate}")));
        }
        self.reference_rate = rate;
        Ok(self)
    }
}

/// One point in the joint parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterState {
    pub beta: Vec<f64>,
    /// Scaled structured effect, one per area; zero-sum per component.
    pub theta_star: Vec<f64>,
    /// Unstructured effect, one per area.
    pub phi_star: Vec<f64>,
    pub rho: f64,
    pub delta: f64,
    /// Latent true log population, per cell.
    pub log_gamma: Vec<f64>,
    /// Log error sd of the latent offset, per cell.
    pub log_sigma_err: Vec<f64>,
    /// Precision of the ICAR prior on each group's `log_sigma_err` field.
    pub icar_precision_err: Vec<f64>,
    pub sigma_wp: f64,
}

impl ParameterState {
    /// Deterministic starting point: zero effects, `rho = 0.5`, `delta = 1`,
    /// latent offsets at the reported values, error sds at 5%.
    pub fn initial(data: &StratifiedDataset, config: &ModelConfig) -> Self {
        let n_areas = data.n_areas();
        let (rho, delta) = if config.random_effects { (0.5, 1.0) } else { (0.5, 0.0) };
        Self {
            beta: vec![0.0; data.n_covariates()],
            theta_star: vec![0.0; n_areas],
            phi_star: vec![0.0; n_areas],
            rho,
            delta,
            log_gamma: data.log_offsets().to_vec(),
            log_sigma_err: vec![config.log_sigma_level_mean; data.n_cells()],
            icar_precision_err: vec![1.0; data.n_groups()],
            sigma_wp: if config.offset_model == OffsetModel::BerksonWp { 0.1 } else { 0.0 },
        }
    }

    pub(crate) fn check_dims(&self, data: &StratifiedDataset) -> Result<()> {
        for (context, len, expected) in [
            ("beta", self.beta.len(), data.n_covariates()),
            ("theta_star", self.theta_star.len(), data.n_areas()),
            ("phi_star", self.phi_star.len(), data.n_areas()),
            ("log_gamma", self.log_gamma.len(), data.n_cells()),
            ("log_sigma_err", self.log_sigma_err.len(), data.n_cells()),
            ("icar_precision_err", self.icar_precision_err.len(), data.n_groups()),
        ] {
            if len != expected {
                return Err(Error::Dimension {
                    context,
                    expected,
                    actual: len,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub offset_model: OffsetModel,
    pub beta_prior_sd: f64,
    /// Scale of the half-normal prior on `delta`.
    pub delta_prior_scale: f64,
    /// BYM2 factor; the structured effect prior is ICAR with this precision.
    pub scaling_factor: f64,
    /// When false the model is `X beta` only: no BYM2 effects, `delta` pinned at 0.
    pub random_effects: bool,
    /// Gamma(shape, rate) prior on each error-field ICAR precision.
    pub error_precision_shape: f64,
    pub error_precision_rate: f64,
    /// Normal prior on the component mean of each `log_sigma_err` field.
    pub log_sigma_level_mean: f64,
    pub log_sigma_level_sd: f64,
    /// sd of the zero-truncated normal prior on `sigma_wp`.
    pub sigma_wp_prior_sd: f64,
}

impl ModelConfig {
    pub fn new(offset_model: OffsetModel, graph: &AreaGraph) -> Result<Self> {
        let scaling_factor = if graph.edges().is_empty() {
            1.0
        } else {
            bym2_scaling_factor(graph)?
        };
        Ok(Self {
            offset_model,
            beta_prior_sd: 5.0,
            delta_prior_scale: 1.0,
            scaling_factor,
            random_effects: true,
            error_precision_shape: 1.0,
            error_precision_rate: 0.01,
            log_sigma_level_mean: 0.05f64.ln(),
            log_sigma_level_sd: 1.0,
            sigma_wp_prior_sd: 10f64.sqrt(),
        })
    }

    /// Fixed-effects-only variant.
    pub fn without_random_effects(mut self) -> Self {
        self.random_effects = false;
        self
    }

    pub fn check_compatible(&self, data: &StratifiedDataset, graph: &AreaGraph) -> Result<()> {
        if graph.n_areas() != data.n_areas() {
            return Err(Error::Dimension {
                context: "graph areas vs dataset areas",
                expected: data.n_areas(),
                actual: graph.n_areas(),
            });
        }
        if graph.area_ids() != data.area_ids() {
            return Err(Error::Config("graph area ids do not match dataset area order".into()));
        }
        if self.offset_model == OffsetModel::BerksonKnown && data.offset_log_sd().is_none() {
            return Err(Error::Config(
                "BerksonKnown needs reported margins of error (ACS source)".into(),
            ));
        }
        for (name, value) in [
            ("beta_prior_sd", self.beta_prior_sd),
            ("delta_prior_scale", self.delta_prior_scale),
            ("scaling_factor", self.scaling_factor),
            ("error_precision_shape", self.error_precision_shape),
            ("error_precision_rate", self.error_precision_rate),
            ("log_sigma_level_sd", self.log_sigma_level_sd),
            ("sigma_wp_prior_sd", self.sigma_wp_prior_sd),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }
}
