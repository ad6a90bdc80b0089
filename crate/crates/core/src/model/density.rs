use super::{ModelConfig, OffsetModel, ParameterState, StratifiedDataset};
use crate::error::{Error, Result};
use crate::graph::{icar_log_density_unnormalized, AreaGraph};
use crate::math::normal_ln_pdf;
use crate::offsets::offset_log_density;

fn check_cell(data: &StratifiedDataset, area: usize, group: usize) -> Result<usize> {
    if area >= data.n_areas() {
        return Err(Error::IndexOutOfRange {
            index: area,
            n_areas: data.n_areas(),
        });
    }
    if group >= data.n_groups() {
        return Err(Error::invalid(
            "group",
            format!("index {group} out of range for {} groups", data.n_groups()),
        ));
    }
    Ok(data.cell(area, group))
}

/// Latent log offset actually entering the predictor. Naive models, and ACS
/// cells with a zero reported sd, use the reported population.
#[inline]
pub fn effective_log_gamma(
    state: &ParameterState,
    data: &StratifiedDataset,
    config: &ModelConfig,
    cell: usize,
) -> f64 {
    match config.offset_model {
        OffsetModel::Naive => data.log_offsets()[cell],
        OffsetModel::BerksonKnown => match data.offset_log_sd() {
            Some(sd) if sd[cell] == 0.0 => data.log_offsets()[cell],
            _ => state.log_gamma[cell],
        },
        OffsetModel::BerksonIcar | OffsetModel::BerksonWp => state.log_gamma[cell],
    }
}

#[inline]
pub(crate) fn random_effect(state: &ParameterState, area: usize) -> f64 {
    if state.delta == 0.0 {
        return 0.0;
    }
    // The boundary cases must drop the other term exactly, whatever its value.
    let structured = if state.rho == 0.0 {
        0.0
    } else {
        state.rho.sqrt() * state.theta_star[area]
    };
    let unstructured = if state.rho == 1.0 {
        0.0
    } else {
        (1.0 - state.rho).sqrt() * state.phi_star[area]
    };
    state.delta * (structured + unstructured)
}

#[inline]
pub(crate) fn fixed_part(state: &ParameterState, data: &StratifiedDataset, cell: usize) -> f64 {
    data.covariate_row(cell)
        .iter()
        .zip(&state.beta)
        .map(|(x, b)| x * b)
        .sum()
}

/// Log relative risk `mu = X'beta + delta (sqrt(rho) theta* + sqrt(1 - rho) phi*)`.
pub fn log_risk(state: &ParameterState, data: &StratifiedDataset, area: usize, group: usize) -> Result<f64> {
    state.check_dims(data)?;
    let cell = check_cell(data, area, group)?;
    Ok(fixed_part(state, data, cell) + random_effect(state, area))
}

/// `exp(mu)`: excludes the reference rate and the offset.
pub fn relative_risk(
    state: &ParameterState,
    data: &StratifiedDataset,
    area: usize,
    group: usize,
) -> Result<f64> {
    Ok(log_risk(state, data, area, group)?.exp())
}

/// Poisson log-mean `omega = mu + log R + log gamma`.
pub fn linear_predictor(
    state: &ParameterState,
    data: &StratifiedDataset,
    config: &ModelConfig,
    area: usize,
    group: usize,
) -> Result<f64> {
    let mu = log_risk(state, data, area, group)?;
    let cell = data.cell(area, group);
    Ok(mu + data.reference_rate().ln() + effective_log_gamma(state, data, config, cell))
}

/// `sum_cells y omega - exp(omega) - log(y!)`; `-inf` when any predictor is
/// not finite.
pub fn log_likelihood(
    state: &ParameterState,
    data: &StratifiedDataset,
    config: &ModelConfig,
) -> Result<f64> {
    state.check_dims(data)?;
    let log_r = data.reference_rate().ln();
    let groups = data.n_groups();
    let mut total = 0.0;
    for area in 0..data.n_areas() {
        let re = random_effect(state, area);
        for group in 0..groups {
            let cell = area * groups + group;
            let omega = fixed_part(state, data, cell)
                + re
                + log_r
                + effective_log_gamma(state, data, config, cell);
            if !omega.is_finite() {
                return Ok(f64::NEG_INFINITY);
            }
            let y = data.counts()[cell] as f64;
            total += y * omega - omega.exp() - data.ln_count_factorial()[cell];
        }
    }
    Ok(if total.is_nan() { f64::NEG_INFINITY } else { total })
}

/// Priors on the regression and BYM2 parameters. Offset-model terms live in
/// [`offset_log_density`].
pub fn log_prior(state: &ParameterState, config: &ModelConfig, graph: &AreaGraph) -> Result<f64> {
    let beta: f64 = state
        .beta
        .iter()
        .map(|&b| normal_ln_pdf(b, 0.0, config.beta_prior_sd))
        .sum();
    if !config.random_effects {
        return Ok(beta);
    }
    if !(0.0..=1.0).contains(&state.rho) || !(state.delta > 0.0) || !state.delta.is_finite() {
        return Ok(f64::NEG_INFINITY);
    }
    if state.theta_star.len() != graph.n_areas() || state.phi_star.len() != graph.n_areas() {
        return Err(Error::Dimension {
            context: "random effects vs graph",
            expected: graph.n_areas(),
            actual: state.theta_star.len(),
        });
    }
    let unstructured: f64 = state
        .phi_star
        .iter()
        .map(|&p| normal_ln_pdf(p, 0.0, 1.0))
        .sum();
    let structured = icar_log_density_unnormalized(&state.theta_star, graph, config.scaling_factor)?;
    let delta = std::f64::consts::LN_2 + normal_ln_pdf(state.delta, 0.0, config.delta_prior_scale);
    Ok(beta + unstructured + structured + delta)
}

/// `log_likelihood + log_prior + offset_log_density`.
pub fn log_posterior(
    state: &ParameterState,
    data: &StratifiedDataset,
    config: &ModelConfig,
    graph: &AreaGraph,
) -> Result<f64> {
    let prior = log_prior(state, config, graph)?;
    if prior == f64::NEG_INFINITY {
        return Ok(prior);
    }
    let offset = offset_log_density(state, data, config, graph)?;
    if offset == f64::NEG_INFINITY {
        return Ok(offset);
    }
    Ok(log_likelihood(state, data, config)? + prior + offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DatasetParts, Source};
    use approx::assert_abs_diff_eq;

    fn graph2() -> AreaGraph {
        AreaGraph::from_edge_list(2, &[(0, 1)], vec!["a".into(), "b".into()]).unwrap()
    }

    fn one_cell(y: u64, x: Vec<f64>, n: f64, rate: f64) -> StratifiedDataset {
        let k = x.len();
        StratifiedDataset::new(DatasetParts {
            area_ids: vec!["a".into()],
            group_labels: vec!["g".into()],
            counts: vec![y],
            covariate_names: (0..k).map(|i| format!("x{i}")).collect(),
            covariates: x,
            offsets: vec![n],
            offset_log_sd: None,
            source: Source::Pep,
            reference_rate: Some(rate),
        })
        .unwrap()
    }

    fn single_graph() -> AreaGraph {
        AreaGraph::from_edge_list(1, &[], vec!["a".into()]).unwrap()
    }

    #[test]
    fn predictor_all_zero() {
        let d = one_cell(0, vec![1.0], 1.0, 1.0);
        let c = ModelConfig::new(OffsetModel::Naive, &single_graph()).unwrap();
        let mut s = ParameterState::initial(&d, &c);
        s.delta = 0.0;
        assert_eq!(linear_predictor(&s, &d, &c, 0, 0).unwrap(), 0.0);
    }

    #[test]
    fn predictor_hand_arithmetic() {
        let d = one_cell(0, vec![2.0, 5.0], 1.0, std::f64::consts::E);
        let c = ModelConfig::new(OffsetModel::BerksonIcar, &single_graph()).unwrap();
        let mut s = ParameterState::initial(&d, &c);
        s.beta = vec![1.0, 0.0];
        s.delta = 0.0;
        s.log_gamma = vec![2.0];
        assert_abs_diff_eq!(linear_predictor(&s, &d, &c, 0, 0).unwrap(), 5.0, epsilon = 1e-15);
        assert!(linear_predictor(&s, &d, &c, 1, 0).is_err());
        assert!(linear_predictor(&s, &d, &c, 0, 1).is_err());
    }

    #[test]
    fn mixing_boundaries_are_exact() {
        let d = one_cell(0, vec![1.0], 1.0, 1.0);
        let c = ModelConfig::new(OffsetModel::Naive, &single_graph()).unwrap();
        let mut s = ParameterState::initial(&d, &c);
        s.theta_star = vec![0.7];
        s.phi_star = vec![-1.3];
        s.delta = 2.0;
        s.rho = 1.0;
        assert_eq!(log_risk(&s, &d, 0, 0).unwrap(), 2.0 * 0.7);
        s.rho = 0.0;
        assert_eq!(log_risk(&s, &d, 0, 0).unwrap(), 2.0 * -1.3);
    }

    #[test]
    fn poisson_scalar_values() {
        let c = ModelConfig::new(OffsetModel::Naive, &single_graph()).unwrap();
        let d = one_cell(0, vec![1.0], 1.0, 1.0);
        let mut s = ParameterState::initial(&d, &c);
        s.delta = 0.0;
        assert_abs_diff_eq!(log_likelihood(&s, &d, &c).unwrap(), -1.0, epsilon = 1e-15);

        let d = one_cell(3, vec![1.0], 2.0, 1.0);
        let expected = 3.0 * 2f64.ln() - 2.0 - 6f64.ln();
        assert_abs_diff_eq!(log_likelihood(&s, &d, &c).unwrap(), expected, epsilon = 1e-13);
    }

    #[test]
    fn nonfinite_predictor_is_rejection() {
        let c = ModelConfig::new(OffsetModel::Naive, &single_graph()).unwrap();
        let d = one_cell(1, vec![1.0], 1.0, 1.0);
        let mut s = ParameterState::initial(&d, &c);
        s.beta = vec![f64::INFINITY];
        assert_eq!(log_likelihood(&s, &d, &c).unwrap(), f64::NEG_INFINITY);
        s.beta = vec![f64::NAN];
        assert_eq!(log_likelihood(&s, &d, &c).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn prior_terms() {
        let g = graph2();
        let c = ModelConfig::new(OffsetModel::Naive, &g).unwrap();
        let s = ParameterState {
            beta: vec![0.0, 0.0],
            theta_star: vec![0.0, 0.0],
            phi_star: vec![0.0, 0.0],
            rho: 0.5,
            delta: 1.0,
            log_gamma: vec![0.0; 2],
            log_sigma_err: vec![0.0; 2],
            icar_precision_err: vec![1.0],
            sigma_wp: 0.0,
        };
        let ln_norm0 = |sd: f64| -0.5 * (2.0 * std::f64::consts::PI).ln() - sd.ln();
        // K2 graph: scaling factor 1/4, rank 1.
        let expected = 2.0 * ln_norm0(5.0)
            + 2.0 * ln_norm0(1.0)
            + 0.5 * 0.25f64.ln()
            + (2f64.ln() + ln_norm0(1.0) - 0.5);
        assert_abs_diff_eq!(log_prior(&s, &c, &g).unwrap(), expected, epsilon = 1e-13);

        let mut t = s.clone();
        t.beta[1] = 1.0;
        let diff = log_prior(&t, &c, &g).unwrap() - log_prior(&s, &c, &g).unwrap();
        assert_abs_diff_eq!(diff, -(2.0 * 0.0 + 1.0) / (2.0 * 25.0), epsilon = 1e-14);

        let mut t = s.clone();
        t.rho = 1.2;
        assert_eq!(log_prior(&t, &c, &g).unwrap(), f64::NEG_INFINITY);
        t.rho = 0.5;
        t.delta = 0.0;
        assert_eq!(log_prior(&t, &c, &g).unwrap(), f64::NEG_INFINITY);
    }
}
