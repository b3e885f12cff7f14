use droughtcast_core::date::CivilDate;
use droughtcast_core::evaluation::{classification_report, regression_metrics};
use droughtcast_core::neural::{dropout_mask, gradient_check, random_problem, CnnConfig, CnnNet, GradCheckConfig, LstmConfig, LstmNet};
use droughtcast_core::seed;
use droughtcast_core::windowing::{apply_normalizer, fit_normalizer, make_windows, NormalizedSeries};
use droughtcast_core::{CountySeries, WeeklyRecord, WindowSpec};
use proptest::prelude::*;

fn county(fips: u32, values: &[f64]) -> CountySeries {
    let start = CivilDate::new(2001, 1, 2).unwrap();
    let weeks = values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let week_end = start.add_days(7 * i as i64);
            let mut weather = [0.0; 18];
            for (k, w) in weather.iter_mut().enumerate() {
                *w = v * (k as f64 + 1.0) + k as f64;
            }
            WeeklyRecord { fips, week_index: i as u32, week_end, weather, score: v.abs() % 5.0, month: week_end.month, latitude: 37.0, longitude: -120.0 }
        })
        .collect();
    CountySeries { fips, weeks }
}

proptest! {
    #[test]
    fn window_count_law(t in 0usize..120, m in 1usize..40, n in 1usize..40) {
        let series = NormalizedSeries { fips: 6001, first_week: 0, n_features: 2, features: vec![0.0; 2 * t], scores: (0..t).map(|i| i as f64).collect() };
        let spec = WindowSpec::new(m, n).unwrap();
        let w = make_windows(&series, spec);
        prop_assert_eq!(w.len(), (t + 1).saturating_sub(m + n));
        for s in &w {
            let a = s.anchor as f64;
            prop_assert_eq!(s.history.last().copied(), Some(a));
            prop_assert_eq!(s.labels[0], a + 1.0);
            prop_assert_eq!(s.labels.len(), n);
        }
    }

    #[test]
    fn normalized_features_are_z_scores(values in prop::collection::vec(-50.0f64..50.0, 2..60)) {
        let s = county(6003, &values);
        let stats = fit_normalizer(std::slice::from_ref(&s)).unwrap();
        let norm = &apply_normalizer(std::slice::from_ref(&s), &stats)[0];
        let f = norm.n_features;
        for j in 0..f {
            let col: Vec<f64> = norm.features.chunks(f).map(|r| r[j]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
            if stats.std[j] > 0.0 {
                prop_assert!((var - 1.0).abs() < 1e-9, "feature {} variance {}", j, var);
            } else {
                prop_assert!(col.iter().all(|&v| v == 0.0));
            }
        }
        prop_assert_eq!(&norm.scores, &s.weeks.iter().map(|w| w.score).collect::<Vec<_>>());
    }

    #[test]
    fn macro_f1_invariant_to_class_swap(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
        let (a, p): (Vec<bool>, Vec<bool>) = pairs.iter().copied().unzip();
        let (na, np): (Vec<bool>, Vec<bool>) = pairs.iter().map(|&(x, y)| (!x, !y)).unzip();
        let r = classification_report(&a, &p).unwrap();
        let s = classification_report(&na, &np).unwrap();
        prop_assert!((r.macro_f1 - s.macro_f1).abs() < 1e-15);
        prop_assert_eq!(r.classes[0].support + r.classes[1].support, a.len());
    }

    #[test]
    fn confusion_counts_match_enumeration(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
        let (a, p): (Vec<bool>, Vec<bool>) = pairs.iter().copied().unzip();
        let r = classification_report(&a, &p).unwrap();
        let count = |x: bool, y: bool| pairs.iter().filter(|&&(u, v)| u == x && v == y).count() as f64;
        let (tp, fp, fnn) = (count(true, true), count(false, true), count(true, false));
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fnn > 0.0 { tp / (tp + fnn) } else { 0.0 };
        prop_assert!((r.classes[1].precision - precision).abs() < 1e-12);
        prop_assert!((r.classes[1].recall - recall).abs() < 1e-12);
    }

    #[test]
    fn jensen_bound(pairs in prop::collection::vec((0.0f64..5.0, -1.0f64..6.0), 1..100)) {
        let (a, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = regression_metrics(&a, &p).unwrap();
        prop_assert!(m.mse + 1e-12 >= m.mae * m.mae);
    }
}

#[test]
fn inverted_dropout_expectation() {
    let mut rng = seed::rng(41);
    let x: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let exact: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
    let draws = 10_000;
    let outs: Vec<f64> = (0..draws)
        .map(|_| {
            let mask = dropout_mask(x.len(), 0.5, &mut rng);
            x.iter().zip(&w).zip(&mask).map(|((a, b), m)| a * b * m).sum()
        })
        .collect();
    let mean = outs.iter().sum::<f64>() / draws as f64;
    let sd = (outs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / draws as f64).sqrt();
    assert!((mean - exact).abs() < 4.0 * sd / (draws as f64).sqrt(), "mean {mean} exact {exact}");
}

#[test]
fn bptt_and_conv_gradients_on_random_small_models() {
    for s in 0..20u64 {
        let mut r = seed::rng(seed::derive(99, &[s]));
        let (m, f, n) = (r.random_range(2..=6), r.random_range(1..=4), r.random_range(1..=3));
        let lstm = LstmNet::new(LstmConfig {
            layer1_units: r.random_range(1..=8),
            layer2_units: r.random_range(1..=8),
            dropout_rate: 0.0,
            ..LstmConfig::new(m, f, n, s)
        })
        .unwrap();
        let (x, y) = random_problem(&lstm, 3, s);
        let rep = gradient_check(&lstm, &x, &y, 3, &GradCheckConfig::default()).unwrap();
        assert!(rep.max_rel_error < 1e-4, "lstm seed {s}: {rep:?}");

        let kernel = r.random_range(1..=m.min(3));
        let cnn = CnnNet::new(CnnConfig {
            filters: r.random_range(1..=8),
            kernel_size: kernel,
            pool_size: r.random_range(1..=2).min(m + 1 - kernel),
            dense_units: r.random_range(1..=8),
            dropout_rate: 0.0,
            ..CnnConfig::new(m, f, n, s)
        })
        .unwrap();
        let rep = gradient_check(&cnn, &x, &y, 3, &GradCheckConfig::default()).unwrap();
        assert!(rep.max_rel_error < 1e-4, "cnn seed {s}: {rep:?}");
    }
}
