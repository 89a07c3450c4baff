use selfapprox::forecaster::CONVERGED_RELATIVE;
use selfapprox::{
    fit, fit_guaranteed, run_candidate, scan_semi_period, synth, CandidateContext, Error, FitOptions, PeriodMethod,
    PeriodicTerm, Recipe, Series, StopReason,
};

fn line_and_day(noise: f64, len: usize, seed: u64) -> Series {
    let recipe = Recipe::default()
        .with_trend(&[10.0, 0.02])
        .with_term(PeriodicTerm::sine(24.0, 2.0))
        .with_noise(noise);
    synth(&recipe, len, seed).unwrap()
}

// Brute-force argmin of the mean absolute lag difference, smallest lag on ties.
fn brute_force_period(v: &[f64]) -> usize {
    let score = |t: usize| (t..v.len()).map(|k| (v[k] - v[k - t]).abs()).sum::<f64>() / (v.len() - t) as f64;
    let scores: Vec<(usize, f64)> = (2..=v.len() / 2).map(|t| (t, score(t))).collect();
    let min = scores.iter().fold(f64::INFINITY, |lo, (_, s)| lo.min(*s));
    let (vmin, vmax) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(*x), hi.max(*x))
    });
    let tol = 1e-10 * (vmax - vmin);
    scores.iter().find(|(_, s)| *s <= min + tol).unwrap().0
}

#[test]
fn raw_candidate_period_matches_brute_force_on_detrended_train_part() {
    let series = line_and_day(0.05, 600, 3);
    let options = FitOptions::default();
    let ctx = CandidateContext::from_residual(&series, 60).unwrap();
    for config in options
        .integer_grid()
        .into_iter()
        .filter(|c| c.period_method == PeriodMethod::LsgRaw)
    {
        let it = run_candidate(&ctx, &config).unwrap();
        let train: Vec<f64> = series.values()[..it.train_length]
            .iter()
            .zip(it.trend_values.values())
            .map(|(y, t)| y - t)
            .collect();
        assert_eq!(it.semi_period, brute_force_period(&train), "{config}");
    }
}

#[test]
fn noisy_line_and_day_recovers_the_day() {
    let series = line_and_day(0.1, 720, 5);
    let model = fit(&series, &FitOptions::default().with_test_length(72)).unwrap();
    assert_eq!(model.iterations[0].semi_period, 24);
    let test = model.final_metrics.test.unwrap();
    assert!(test.smape < 2.0 && test.nmse.unwrap() < 0.2, "{test:?}");
}

#[test]
fn forecast_of_exact_signal_tracks_clean_continuation() {
    let recipe = Recipe::default()
        .with_trend(&[1.0, 0.01])
        .with_term(PeriodicTerm::sine(24.0, 1.0));
    let series = synth(&recipe, 480, 0).unwrap();
    let model = fit(&series, &FitOptions::default()).unwrap();
    let forecast = model.predict(96).unwrap();
    assert_eq!(forecast.values.start_index(), 480);
    for (k, v) in forecast.values.values().iter().enumerate() {
        let want = recipe.clean_value((480 + k) as f64);
        assert!((v - want).abs() < 1e-6, "h={k}: {v} vs {want}");
    }
    let parts: f64 = forecast
        .trend_components
        .iter()
        .chain(&forecast.periodic_components)
        .map(|c| c[10])
        .sum();
    assert!((parts - forecast.values.values()[10]).abs() < 1e-12);
}

#[test]
fn commensurate_periods_favour_their_common_multiple() {
    // With periods 24 and 7, any lag divisible by both makes every difference vanish.
    let recipe = Recipe::default()
        .with_term(PeriodicTerm::sine(24.0, 1.0))
        .with_term(PeriodicTerm::sine(7.0, 0.5));
    let series = synth(&recipe, 1008, 0).unwrap();
    let scan = scan_semi_period(series.values(), 2, 504).unwrap();
    assert_eq!(scan.best_period, 168);
    assert!(scan.best_score() < 1e-12);
    assert!(scan.score(24).unwrap() > 0.1 && scan.score(7).unwrap() > 0.1);
}

#[test]
fn guaranteed_mode_halves_every_iteration() {
    let inputs = [
        Series::new((0..200).map(|x| (x as f64).powi(3)).collect()).unwrap(),
        line_and_day(0.0, 480, 0),
        line_and_day(0.05, 480, 1),
        synth(&Recipe::default().with_noise(1.0), 200, 9).unwrap(),
    ];
    for series in &inputs {
        let model = match fit_guaranteed(series, &FitOptions::default()) {
            Ok(m) => m,
            Err(Error::GuaranteeUnreachable { partial, iteration }) => {
                assert!(
                    matches!(partial.stop_reason, StopReason::GuaranteeUnreachable { iteration: i } if i == iteration)
                );
                *partial
            }
            Err(e) => panic!("{e}"),
        };
        for (k, n) in model.residual_norms.iter().enumerate().skip(1) {
            assert!(*n <= 0.5f64.powi(k as i32) * model.centered_norm, "k={k}");
        }
        if let StopReason::Converged { .. } = model.stop_reason {
            assert!(*model.residual_norms.last().unwrap() <= CONVERGED_RELATIVE * model.residual_norms[0]);
        }
    }
}

#[test]
fn components_and_residual_add_back_to_the_input() {
    let series = line_and_day(0.2, 500, 8);
    let model = fit(&series, &FitOptions::default().with_test_length(50)).unwrap();
    assert_eq!(model.fit_length, 450);
    for k in 0..model.fit_length {
        let parts: f64 = model.iterations.iter().map(|it| it.component()[k]).sum();
        let total = parts + model.residual[k];
        assert!((total - series.values()[k]).abs() <= 1e-9 * (1.0 + series.values()[k].abs()));
        assert!((model.fitted[k] - parts).abs() <= 1e-9 * (1.0 + parts.abs()));
    }
}

#[test]
fn test_window_does_not_influence_choices() {
    let series = line_and_day(0.1, 400, 4);
    let options = FitOptions::default().with_test_length(40);
    let with_test = fit(&series, &options).unwrap();
    let mut corrupted = series.values().to_vec();
    for v in &mut corrupted[360..] {
        *v = -*v * 1e3;
    }
    let other = fit(&Series::new(corrupted).unwrap(), &options).unwrap();
    assert_eq!(with_test.iterations, other.iterations);
    assert_eq!(with_test.final_metrics.validation, other.final_metrics.validation);
    assert_ne!(with_test.final_metrics.test, other.final_metrics.test);
}

#[test]
fn parallel_and_sequential_agree_exactly() {
    let series = line_and_day(0.3, 400, 12);
    let parallel = fit(&series, &FitOptions::default().with_test_length(40)).unwrap();
    let sequential = fit(
        &series,
        &FitOptions {
            parallel: false,
            ..FitOptions::default().with_test_length(40)
        },
    )
    .unwrap();
    assert_eq!(parallel.iterations, sequential.iterations);
    assert_eq!(parallel.residual, sequential.residual);
    assert_eq!(parallel.final_metrics, sequential.final_metrics);
    assert_eq!(parallel.stop_reason, sequential.stop_reason);
}

#[test]
fn start_index_carries_through_to_the_forecast() {
    let series = line_and_day(0.0, 300, 0);
    let shifted = Series::with_start(series.values().to_vec(), 1000).unwrap();
    let options = FitOptions::default().with_test_length(24);
    let forecast = fit(&shifted, &options).unwrap().predict(24).unwrap();
    let reference = fit(&series, &options).unwrap().predict(24).unwrap();
    assert_eq!(forecast.values.start_index(), 1276);
    assert_eq!(reference.values.start_index(), 276);
    assert_eq!(forecast.values.values(), reference.values.values());
}
