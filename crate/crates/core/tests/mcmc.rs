use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use bsbe_core::mcmc::{
    effective_sample_size, random_walk_metropolis, run_chains, split_rhat, summarize, ChainSet, SamplerSettings,
};
use bsbe_core::{AreaGraph, DatasetParts, ModelConfig, OffsetModel, Source, StratifiedDataset};

fn stream(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let innovation = Normal::new(0.0, (1.0 - phi * phi).sqrt()).unwrap();
    let mut x: f64 = StandardNormal.sample(&mut rng);
    (0..n)
        .map(|_| {
            x = phi * x + innovation.sample(&mut rng);
            x
        })
        .collect()
}

fn quick(n_chains: usize, n_iterations: usize, burn_in: usize, thin: usize) -> SamplerSettings {
    SamplerSettings {
        n_chains,
        n_iterations,
        burn_in,
        thin,
        ..SamplerSettings::desk()
    }
}

#[test]
fn rhat_reference_streams() {
    let a = stream(1, 10_000);
    let b = stream(2, 10_000);
    let r = split_rhat(&[&a, &b]).unwrap();
    assert!((0.99..=1.02).contains(&r), "iid R-hat {r}");
    let shifted: Vec<f64> = b.iter().map(|x| x + 10.0).collect();
    assert!(split_rhat(&[&a, &shifted]).unwrap() > 1.5);
    assert_eq!(split_rhat(&[vec![3.0; 100], vec![3.0; 100]]).unwrap(), 1.0);
}

#[test]
fn ess_reference_streams() {
    let white = stream(3, 10_000);
    let ess = effective_sample_size(&[&white]).unwrap();
    assert!((8_000.0..=12_000.0).contains(&ess), "white-noise ESS {ess}");

    let n = 20_000;
    let expected = n as f64 * (1.0 - 0.9) / (1.0 + 0.9);
    let ess = effective_sample_size(&[ar1(0.9, n, 4)]).unwrap();
    assert!(ess > expected / 1.5 && ess < expected * 1.5, "AR(1) ESS {ess} vs {expected}");

    assert_eq!(effective_sample_size(&[vec![2.0; 50]]).unwrap(), 1.0);
}

#[test]
fn summary_of_known_draws() {
    let names = vec!["seq".to_string(), "normal".to_string()];
    let seq: Vec<f64> = (1..=100).map(f64::from).collect();
    let chains = ChainSet::from_draws(names, vec![vec![seq, stream(5, 100)]], quick(1, 200, 100, 1)).unwrap();
    let table = summarize(&chains).unwrap();
    assert_eq!(table.get("seq").unwrap().median, 50.5);

    let draws: Vec<Vec<Vec<f64>>> = (0..4).map(|c| vec![stream(10 + c, 12_000)]).collect();
    let chains = ChainSet::from_draws(vec!["z".into()], draws, quick(4, 24_000, 12_000, 1)).unwrap();
    assert!(summarize(&chains).unwrap().get("z").unwrap().mean.abs() < 0.02);
}

#[test]
fn metropolis_acceptance_at_reference_scales() {
    let target = |x: f64| -0.5 * x * x;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut x, mut lp, mut accepted) = (0.0, 0.0, 0usize);
    for _ in 0..100_000 {
        let step = random_walk_metropolis(x, lp, 2.4, target, &mut rng);
        (x, lp) = (step.0, step.1);
        accepted += usize::from(step.2);
    }
    let rate = accepted as f64 / 100_000.0;
    assert!((rate - 0.44).abs() < 0.05, "rate {rate}");

    let mut tiny = 0;
    for _ in 0..1000 {
        tiny += usize::from(random_walk_metropolis(0.3, target(0.3), 1e-12, target, &mut rng).2);
    }
    assert!(tiny >= 990);
}

fn single_cell(count: u64) -> (StratifiedDataset, AreaGraph) {
    let graph = AreaGraph::from_edge_list(1, &[], vec!["a".into()]).unwrap();
    let data = StratifiedDataset::new(DatasetParts {
        area_ids: vec!["a".into()],
        group_labels: vec!["all".into()],
        counts: vec![count],
        covariate_names: vec!["intercept".into()],
        covariates: vec![1.0],
        offsets: vec![1000.0],
        offset_log_sd: None,
        source: Source::Pep,
        reference_rate: Some(0.01),
    })
    .unwrap();
    (data, graph)
}

#[test]
fn single_coefficient_posterior_matches_grid_quadrature() {
    let (data, graph) = single_cell(12);
    let config = ModelConfig::new(OffsetModel::Naive, &graph).unwrap().without_random_effects();
    let chains = run_chains(&data, &config, &graph, &quick(4, 22_000, 2_000, 2).with_seed(8)).unwrap();
    let draws = chains.pooled_by_name("beta[intercept]").unwrap();

    // Poisson(10 e^b) at y = 12 with a N(0, 25) prior, integrated on a fine grid.
    let log_post = |b: f64| 12.0 * b - 10.0 * b.exp() - b * b / 50.0;
    let (lo, hi, steps) = (-3.0, 3.0, 60_000);
    let h = (hi - lo) / steps as f64;
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for k in 0..=steps {
        let b = lo + k as f64 * h;
        let w = (log_post(b) - log_post(0.18)).exp();
        z += w;
        m1 += w * b;
        m2 += w * b * b;
    }
    let mean = m1 / z;
    let sd = (m2 / z - mean * mean).sqrt();

    let ess = effective_sample_size(&chains.param_chains(chains.param_index("beta[intercept]").unwrap())).unwrap();
    let got = draws.iter().sum::<f64>() / draws.len() as f64;
    assert!((got - mean).abs() < 3.0 * sd / ess.sqrt(), "mean {got} vs quadrature {mean}");
}

fn small_berkson() -> (StratifiedDataset, AreaGraph) {
    let ids: Vec<String> = (0..4).map(|i| format!("a{i}")).collect();
    let graph = AreaGraph::from_edge_list(4, &[(0, 1), (1, 2), (2, 3)], ids.clone()).unwrap();
    let cells = 8;
    let data = StratifiedDataset::new(DatasetParts {
        area_ids: ids,
        group_labels: vec!["young".into(), "old".into()],
        counts: vec![3, 7, 0, 5, 2, 9, 4, 1],
        covariate_names: vec!["intercept".into(), "x".into()],
        covariates: (0..cells).flat_map(|c| [1.0, c as f64 / 4.0 - 1.0]).collect(),
        offsets: vec![800.0, 1200.0, 400.0, 900.0, 650.0, 1500.0, 1000.0, 300.0],
        offset_log_sd: None,
        source: Source::Wp,
        reference_rate: None,
    })
    .unwrap();
    (data, graph)
}

#[test]
fn retained_draws_respect_support_and_are_deterministic() {
    let (data, graph) = small_berkson();
    let config = ModelConfig::new(OffsetModel::BerksonWp, &graph).unwrap();
    let settings = quick(3, 1_500, 500, 5).with_seed(11);
    let chains = run_chains(&data, &config, &graph, &settings).unwrap();
    for name in chains.names() {
        let draws = chains.pooled_by_name(name).unwrap();
        assert!(draws.iter().all(|d| d.is_finite()), "{name}");
        match name.as_str() {
            "rho" => assert!(draws.iter().all(|d| (0.0..=1.0).contains(d))),
            n if n == "delta" || n == "sigma_wp" || n.starts_with("tau_err") => assert!(draws.iter().all(|&d| d > 0.0), "{name}"),
            _ => {}
        }
    }
    assert_eq!(chains, run_chains(&data, &config, &graph, &settings).unwrap());
    let serial = SamplerSettings { parallel: false, ..settings };
    let serial_chains = run_chains(&data, &config, &graph, &serial).unwrap();
    for p in 0..chains.n_params() {
        assert_eq!(chains.pooled(p), serial_chains.pooled(p));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn summary_orders_quantiles_and_bounds_ess(seed in any::<u64>(), n in 10usize..200, spread in 0.1f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|_| vec![(0..n).map(|_| spread * rng.random::<f64>().powi(3)).collect()])
            .collect();
        let chains = ChainSet::from_draws(vec!["p".into()], draws, quick(2, 2 * n, n, 1)).unwrap();
        let row = summarize(&chains).unwrap().rows.remove(0);
        prop_assert!(row.q2_5 <= row.median && row.median <= row.q97_5);
        prop_assert!(row.ess >= 1.0 && row.ess <= (2 * n) as f64);
        prop_assert!(row.sd >= 0.0);
    }
}
