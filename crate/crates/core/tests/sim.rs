use proptest::prelude::*;

use bsbe_core::sim::{
    generate_replicate, score_relative_risks, summarize_errors, Estimate, ErrorSummary, SimulationSpec,
};

fn est(median: f64, lower: f64, upper: f64) -> Estimate {
    Estimate { median, lower, upper }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

#[test]
fn four_cells_three_replicates_match_spreadsheet() {
    let truths = vec![
        vec![0.1, -0.2, 0.0, 0.5],
        vec![0.3, 0.1, -0.4, 0.2],
        vec![-0.1, 0.0, 0.2, 0.6],
    ];
    let fits = vec![
        vec![est(0.0, -0.2, 0.2), est(-0.1, -0.3, 0.1), est(0.1, -0.05, 0.3), est(0.5, 0.45, 0.55)],
        vec![est(0.1, -0.1, 0.25), est(0.3, 0.15, 0.5), est(-0.1, -0.3, 0.1), est(0.1, 0.0, 0.3)],
        vec![est(0.2, 0.0, 0.4), est(-0.2, -0.4, 0.0), est(0.2, 0.0, 0.4), est(0.2, 0.1, 0.5)],
    ];
    // me, mde, mae, mse, lc, uc, ic per cell, worked by hand.
    let third = 1.0 / 3.0;
    let expected = [
        [0.0, 0.1, 0.2, 0.14 / 3.0, third, third, third],
        [-0.1 / 3.0, -0.1, 0.2, 0.03, third, 0.0, 2.0 * third],
        [-0.4 / 3.0, -0.1, 0.1, 0.1 / 3.0, third, 0.0, 2.0 * third],
        [0.5 / 3.0, 0.1, 0.1, 0.17 / 3.0, 0.0, third, 2.0 * third],
    ];
    let fields = |s: &ErrorSummary| [s.me, s.mde, s.mae, s.mse, s.lc, s.uc, s.ic];
    let (overall, cells) = score_relative_risks(&truths, &fits).unwrap();
    for (cell, want) in cells.iter().zip(&expected) {
        for (got, want) in fields(cell).iter().zip(want) {
            assert!(close(*got, *want), "{got} vs {want}");
        }
    }
    let pooled = [0.0, 0.0, 0.15, 0.125 / 3.0, 0.25, 1.0 / 6.0, 7.0 / 12.0];
    for (got, want) in fields(&overall).iter().zip(&pooled) {
        assert!(close(*got, *want), "{got} vs {want}");
    }
}

fn one_cell(population: f64) -> SimulationSpec {
    let mut spec = SimulationSpec::new(vec!["a".into()], vec!["g".into()], vec![population], vec![0.0]);
    spec.true_betas = vec![0.0, 0.0, 0.0];
    spec
}

#[test]
fn counts_follow_poisson_moments() {
    let spec = one_cell(20_000.0);
    let mean_target = spec.true_rate * 20_000.0;
    let draws: Vec<f64> = (0..10_000)
        .map(|j| {
            let r = generate_replicate(&spec, j).unwrap();
            assert_eq!(r.n_star, vec![20_000.0]);
            r.counts[0] as f64
        })
        .collect();
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    assert!((mean / mean_target - 1.0).abs() < 0.05, "mean {mean}");
    assert!((0.9..=1.1).contains(&(var / mean)), "dispersion {}", var / mean);
}

#[test]
fn replicates_are_keyed_by_seed_and_index() {
    let mut spec = SimulationSpec::new(
        vec!["a".into(), "b".into()],
        vec!["g".into(), "h".into()],
        vec![500.0, 800.0, 60.0, 2_000.0],
        vec![50.0, 90.0, 40.0, 100.0],
    );
    let first = generate_replicate(&spec, 3).unwrap();
    assert_eq!(first, generate_replicate(&spec, 3).unwrap());
    assert_ne!(first, generate_replicate(&spec, 4).unwrap());
    spec.seed += 1;
    assert_ne!(first, generate_replicate(&spec, 3).unwrap());
}

fn scored_sample() -> impl Strategy<Value = (Vec<f64>, Vec<Estimate>)> {
    (1usize..40).prop_flat_map(|n| {
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec((-5.0f64..5.0, 0.0f64..2.0, 0.0f64..2.0), n),
        )
            .prop_map(|(t, e)| (t, e.into_iter().map(|(m, dl, du)| est(m, m - dl, m + du)).collect()))
    })
}

proptest! {
    #[test]
    fn score_identities((truths, estimates) in scored_sample()) {
        let s = summarize_errors(&truths, &estimates).unwrap();
        prop_assert!(s.mse + 1e-12 >= s.me * s.me);
        prop_assert!(s.mae >= 0.0 && s.mse >= 0.0);
        prop_assert!((s.lc + s.uc + s.ic - 1.0).abs() < 1e-12);

        let flipped_t: Vec<f64> = truths.iter().map(|t| -t).collect();
        let flipped_e: Vec<Estimate> = estimates.iter().map(|e| est(-e.median, -e.upper, -e.lower)).collect();
        let f = summarize_errors(&flipped_t, &flipped_e).unwrap();
        prop_assert!((f.mae - s.mae).abs() < 1e-12);
        prop_assert!((f.me + s.me).abs() < 1e-12);
        prop_assert!((f.lc - s.uc).abs() < 1e-12 && (f.uc - s.lc).abs() < 1e-12);
    }
}
