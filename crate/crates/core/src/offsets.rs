//! Berkson error submodels for the latent log population offset.
//!
//! In every variant the true log offset is Normal around the reported log
//! population. They differ in the variance:
//!
//! * `BerksonKnown` uses the reported ACS log-scale sd `s`.
//! * `BerksonIcar` uses an unknown per-cell sd `sigma`, whose log is a spatial
//!   ICAR field over areas, one independent field per group.
//! * `BerksonWp` adds a source-wide component: variance `sigma^2 + sigma_wp^2`.

use crate::error::{Error, Result};
use crate::graph::{icar_log_density_unnormalized, AreaGraph};
use crate::math::{normal_ln_pdf, normal_ln_pdf_var};
use crate::model::{ModelConfig, OffsetModel, ParameterState, StratifiedDataset};

/// z-score of a 90% two-sided interval, used to turn ACS margins of error into sds.
pub const ACS_MOE_Z: f64 = 1.645;

pub fn acs_moe_to_sd(moe: f64) -> Result<f64> {
    if !(moe >= 0.0) || !moe.is_finite() {
        return Err(Error::invalid("moe", format!("must be finite and nonnegative, got {moe}")));
    }
    Ok(moe / ACS_MOE_Z)
}

/// First-order delta method for `log(n)`: `sd(log n) = sd(n) / n`.
pub fn acs_log_scale_sd(population: f64, sd: f64) -> Result<f64> {
    if !(population > 0.0) || !population.is_finite() {
        return Err(Error::invalid(
            "population",
            format!("must be positive, got {population}"),
        ));
    }
    if !(sd >= 0.0) || !sd.is_finite() {
        return Err(Error::invalid("sd", format!("must be finite and nonnegative, got {sd}")));
    }
    Ok(sd / population)
}

/// Attenuation factor `sigma_x^2 / (sigma_x^2 + sigma_u^2)`.
pub fn berkson_attenuation(sigma_x: f64, sigma_u: f64) -> Result<f64> {
    if !(sigma_x > 0.0) || !sigma_x.is_finite() {
        return Err(Error::invalid("sigma_x", format!("must be positive, got {sigma_x}")));
    }
    if !(sigma_u >= 0.0) {
        return Err(Error::invalid("sigma_u", format!("must be nonnegative, got {sigma_u}")));
    }
    let vx = sigma_x * sigma_x;
    Ok(vx / (vx + sigma_u * sigma_u))
}

/// Variance of the latent log offset around the reported value for one cell,
/// `None` when the offset is treated as exact.
#[inline]
pub(crate) fn cell_error_variance(
    state: &ParameterState,
    data: &StratifiedDataset,
    model: OffsetModel,
    cell: usize,
) -> Option<f64> {
    match model {
        OffsetModel::Naive => None,
        OffsetModel::BerksonKnown => {
            let s = data.offset_log_sd()?[cell];
            (s > 0.0).then_some(s * s)
        }
        OffsetModel::BerksonIcar => Some((2.0 * state.log_sigma_err[cell]).exp()),
        OffsetModel::BerksonWp => {
            Some((2.0 * state.log_sigma_err[cell]).exp() + state.sigma_wp * state.sigma_wp)
        }
    }
}

/// Log density of one error field's hyperstructure: ICAR on the field with
/// its precision, the level prior on each component mean, and the Gamma
/// hyperprior on the precision.
pub(crate) fn error_field_log_density(
    field: &[f64],
    precision: f64,
    config: &ModelConfig,
    graph: &AreaGraph,
) -> Result<f64> {
    if !(precision > 0.0) || !precision.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }
    let icar = icar_log_density_unnormalized(field, graph, precision)?;
    let level: f64 = graph
        .connected_components()
        .iter()
        .map(|members| {
            let mean = members.iter().map(|&v| field[v]).sum::<f64>() / members.len() as f64;
            normal_ln_pdf(mean, config.log_sigma_level_mean, config.log_sigma_level_sd)
        })
        .sum();
    Ok(icar + level + gamma_ln_pdf(precision, config.error_precision_shape, config.error_precision_rate))
}

pub(crate) fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - libm::lgamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Zero-truncated normal prior on `sigma_wp`.
pub(crate) fn sigma_wp_ln_prior(sigma_wp: f64, sd: f64) -> f64 {
    if !(sigma_wp >= 0.0) || !sigma_wp.is_finite() {
        return f64::NEG_INFINITY;
    }
    std::f64::consts::LN_2 + normal_ln_pdf(sigma_wp, 0.0, sd)
}

/// All offset-model terms of the joint log density.
pub fn offset_log_density(
    state: &ParameterState,
    data: &StratifiedDataset,
    config: &ModelConfig,
    graph: &AreaGraph,
) -> Result<f64> {
    state.check_dims(data)?;
    let model = config.offset_model;
    match model {
        OffsetModel::Naive => return Ok(0.0),
        OffsetModel::BerksonKnown if data.offset_log_sd().is_none() => {
            return Err(Error::Config(
                "BerksonKnown needs reported margins of error (ACS source)".into(),
            ))
        }
        _ => {}
    }
    if graph.n_areas() != data.n_areas() {
        return Err(Error::Dimension {
            context: "graph areas vs dataset areas",
            expected: data.n_areas(),
            actual: graph.n_areas(),
        });
    }

    let mut total = 0.0;
    if model == OffsetModel::BerksonWp {
        total += sigma_wp_ln_prior(state.sigma_wp, config.sigma_wp_prior_sd);
        if total == f64::NEG_INFINITY {
            return Ok(total);
        }
    }
    for cell in 0..data.n_cells() {
        if let Some(var) = cell_error_variance(state, data, model, cell) {
            total += normal_ln_pdf_var(state.log_gamma[cell], data.log_offsets()[cell], var);
        }
    }
    if model.has_error_fields() {
        let groups = data.n_groups();
        let mut field = vec![0.0; data.n_areas()];
        for group in 0..groups {
            for (area, slot) in field.iter_mut().enumerate() {
                *slot = state.log_sigma_err[area * groups + group];
            }
            total += error_field_log_density(&field, state.icar_precision_err[group], config, graph)?;
        }
    }
    Ok(if total.is_nan() { f64::NEG_INFINITY } else { total })
}
