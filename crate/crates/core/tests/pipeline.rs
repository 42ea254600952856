use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};
use grpboost::boosting::TrainConfig;
use grpboost::evaluation::{extremogram, roc_auc, tree_shap};
use grpboost::io::GriddedDataset;
use grpboost::losses::{GrpScoreLoss, PrecisionMethod, ScoreSetup};
use grpboost::pipeline::*;
use grpboost::spatial::{Grid, GridPoint};
use grpboost::stats::{quantile_type7, stream_rng};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian_fields(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, 0);
    (0..n)
        .map(|_| {
            let common: f64 = rng.sample(StandardNormal);
            (0..d).map(|_| 0.6 * common + 0.8 * rng.sample::<f64, _>(StandardNormal)).collect()
        })
        .collect()
}

// ---------- risk series ----------

#[test]
fn risk_series_examples() {
    assert_eq!(compute_risk_series(&[vec![2.5; 4], vec![-1.0; 4]], &[0, 2, 3]).unwrap(), vec![2.5, -1.0]);
    let fields = gaussian_fields(30, 6, 1);
    let single = compute_risk_series(&fields, &[4]).unwrap();
    assert!(single.iter().zip(&fields).all(|(r, f)| *r == f[4]));
    let region = [0, 3, 5];
    let got = compute_risk_series(&fields, &region).unwrap();
    for (r, f) in got.iter().zip(&fields) {
        let expected = (f[0] + f[3] + f[5]) / 3.0;
        assert!((r - expected).abs() < 1e-15);
    }
    assert!(compute_risk_series(&fields, &[]).is_err());
    assert!(compute_risk_series(&fields, &[6]).is_err());
}

proptest! {
    #[test]
    fn risk_series_is_linear(seed in 0u64..500) {
        let x = gaussian_fields(5, 8, seed);
        let y = gaussian_fields(5, 8, seed + 1000);
        let sum: Vec<Vec<f64>> = x.iter().zip(&y).map(|(a, b)| a.iter().zip(b).map(|(u, v)| u + v).collect()).collect();
        let region = [1, 2, 6];
        let (rx, ry, rs) = (
            compute_risk_series(&x, &region).unwrap(),
            compute_risk_series(&y, &region).unwrap(),
            compute_risk_series(&sum, &region).unwrap(),
        );
        for i in 0..5 {
            prop_assert!((rs[i] - rx[i] - ry[i]).abs() <= 1e-14 * (1.0 + rs[i].abs()));
        }
    }
}

// ---------- thresholds ----------

#[test]
fn calibrated_thresholds_match_a_grid_search() {
    let (n, d) = (2000, 20);
    let fields = gaussian_fields(n, d, 2);
    let region: Vec<usize> = (0..8).collect();
    let spec = select_thresholds(&fields, &region, &ThresholdConfig::default()).unwrap();
    let risk = compute_risk_series(&fields, &region).unwrap();
    assert_eq!(spec.u, quantile_type7(&risk, 0.95));
    let expected_days: Vec<usize> = (0..n).filter(|&t| risk[t] >= spec.u).collect();
    assert_eq!(spec.exceedance_days, expected_days);
    let r_of_b = |b: &[f64]| region.iter().map(|&i| b[i]).sum::<f64>() / region.len() as f64;
    assert!((r_of_b(&spec.b) - spec.u).abs() <= 1e-9 * (1.0 + spec.u.abs()));

    let b_at = |q: f64| -> Vec<f64> {
        (0..d).map(|s| quantile_type7(&expected_days.iter().map(|&t| fields[t][s]).collect::<Vec<_>>(), q)).collect()
    };
    let best = (0..=10_000)
        .map(|i| i as f64 / 10_000.0)
        .min_by(|a, b| (r_of_b(&b_at(*a)) - spec.u).abs().total_cmp(&(r_of_b(&b_at(*b)) - spec.u).abs()))
        .unwrap();
    assert!((best - spec.q_prime).abs() < 1e-3, "{best} vs {}", spec.q_prime);

    for s in 0..d {
        assert!(spec.xi_hat[s] >= 0.0 || (spec.m[s] - (-spec.sigma_hat[s] / spec.xi_hat[s])).abs() == 0.0);
        let excess = expected_days.iter().filter(|&&t| fields[t][s] > spec.b[s]).count();
        assert_eq!(spec.n_excesses[s], excess);
    }
}

#[test]
fn spatially_constant_fields_use_the_convention() {
    let mut rng = stream_rng(3, 0);
    let fields: Vec<Vec<f64>> = (0..300).map(|_| vec![rng.sample::<f64, _>(StandardNormal); 5]).collect();
    let cfg = ThresholdConfig { risk_level: 0.9, decluster_gap: 0 };
    let spec = select_thresholds(&fields, &[0, 1], &cfg).unwrap();
    assert!(spec.b.iter().all(|&b| b == spec.u));
    assert_eq!(spec.q_prime, 0.9);
}

#[test]
fn threshold_errors() {
    let fields = gaussian_fields(99, 4, 4);
    assert!(select_thresholds(&fields, &[0], &ThresholdConfig::default()).is_err());
    let fields = gaussian_fields(200, 4, 4);
    assert!(select_thresholds(&fields, &[], &ThresholdConfig::default()).is_err());
    assert!(select_thresholds(&fields, &[0], &ThresholdConfig { risk_level: 1.0, decluster_gap: 0 }).is_err());

    // perfectly dependent fields with site offsets: r(b(0)) already exceeds u
    let mut rng = stream_rng(5, 0);
    let dependent: Vec<Vec<f64>> = (0..402)
        .map(|_| {
            let c: f64 = rng.sample(StandardNormal);
            vec![c, c + 1.0, c - 2.0]
        })
        .collect();
    let err = select_thresholds(&dependent, &[0, 1], &ThresholdConfig::default()).unwrap_err().to_string();
    assert!(err.contains("ranges over"), "{err}");
}

#[test]
fn declustering_keeps_separated_days() {
    let fields = gaussian_fields(2000, 6, 6);
    let all = select_thresholds(&fields, &[0, 1], &ThresholdConfig::default()).unwrap();
    let sparse = select_thresholds(&fields, &[0, 1], &ThresholdConfig { risk_level: 0.95, decluster_gap: 3 }).unwrap();
    assert!(sparse.exceedance_days.len() < all.exceedance_days.len());
    assert!(sparse.exceedance_days.windows(2).all(|w| w[1] - w[0] > 3));
    assert!(sparse.exceedance_days.iter().all(|t| all.exceedance_days.contains(t)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn raising_the_risk_level_shrinks_the_event_set(seed in 0u64..100, a in 0.80f64..0.97, step in 0.0f64..0.02) {
        let fields = gaussian_fields(400, 5, seed);
        let lo = select_thresholds(&fields, &[0, 2], &ThresholdConfig { risk_level: a, decluster_gap: 0 }).unwrap();
        let hi = select_thresholds(&fields, &[0, 2], &ThresholdConfig { risk_level: a + step, decluster_gap: 0 }).unwrap();
        prop_assert!(hi.exceedance_days.len() <= lo.exceedance_days.len());
        prop_assert!(hi.u >= lo.u);
    }
}

// ---------- predictors ----------

#[test]
fn rectangle_partition_of_a_square_grid() {
    let grid = Grid::regular(4, 4, 1.0);
    let rects = rectangle_partition(&grid);
    assert_eq!(rects[0], vec![0, 1, 4, 5]);
    assert_eq!(rects[1], vec![2, 3, 6, 7]);
    assert_eq!(rects[2], vec![8, 9, 12, 13]);
    assert_eq!(rects[3], vec![10, 11, 14, 15]);
}

fn schema_4x4() -> (Grid, PredictorSchema) {
    let grid = Grid::regular(4, 4, 1.0);
    let schema = PredictorSchema::new(&grid, &[5, 6], "z500", "sm").unwrap();
    (grid, schema)
}

#[test]
fn predictor_rows_examples() {
    let (_, schema) = schema_4x4();
    let inputs = DayInputs { z500: (0..16).map(f64::from).collect(), sm: vec![1.0; 16] };
    let dep = schema.dependence_row(&inputs);
    assert_eq!(&dep[16..], &[1.0; 4]);
    assert_eq!(schema.occurrence_row(&inputs)[16], 1.0);

    let mut rng = stream_rng(7, 0);
    let sm: Vec<f64> = (0..16).map(|_| rng.random::<f64>()).collect();
    let inputs = DayInputs { z500: vec![0.0; 16], sm: sm.clone() };
    let dep = schema.dependence_row(&inputs);
    let hand = [
        (sm[0] + sm[1] + sm[4] + sm[5]) / 4.0,
        (sm[2] + sm[3] + sm[6] + sm[7]) / 4.0,
        (sm[8] + sm[9] + sm[12] + sm[13]) / 4.0,
        (sm[10] + sm[11] + sm[14] + sm[15]) / 4.0,
    ];
    for (a, b) in dep[16..].iter().zip(hand) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!((schema.occurrence_row(&inputs)[16] - (sm[5] + sm[6]) / 2.0).abs() < 1e-15);
    let int = schema.intensity_row(&inputs, 9);
    assert_eq!(&int[16..], &[sm[9], 2.0, 1.0]);
    assert_eq!(schema.intensity_names().len(), int.len());
    assert_eq!(schema.dependence_names().len(), dep.len());
}

#[test]
fn degenerate_rectangles_fall_back_to_the_region_mean() {
    let grid = Grid::new((0..3).map(|i| GridPoint { id: i, x: 0.0, y: i as f64, lonlat: None }).collect()).unwrap();
    let schema = PredictorSchema::new(&grid, &[0], "z500", "sm").unwrap();
    let row = schema.dependence_row(&DayInputs { z500: vec![0.0; 3], sm: vec![1.0, 2.0, 6.0] });
    assert_eq!(&row[3..], &[3.0, 1.0, 3.0, 4.0]);
}

#[test]
fn missing_predictors_are_reported() {
    let (grid, schema) = schema_4x4();
    let dates: Vec<NaiveDate> =
        (0..3).map(|i| NaiveDate::from_ymd_opt(2020, 6, 1).unwrap() + Duration::days(i)).collect();
    let mut vars = BTreeMap::new();
    vars.insert("z500".to_string(), vec![vec![0.0; 16]; 3]);
    let mut sm = vec![vec![0.0; 16]; 3];
    sm[1][7] = f64::NAN;
    vars.insert("sm".to_string(), sm);
    let ds = GriddedDataset::new(grid, dates, vars).unwrap();
    let err = assemble_predictors(&ds, &schema, &[0, 1, 2]).unwrap_err().to_string();
    assert!(err.contains("sm") && err.contains("point 7") && err.contains("2020-06-02"), "{err}");
    assert!(assemble_predictors(&ds, &schema, &[0, 2]).is_ok());
    assert!(schema.check(&DayInputs { z500: vec![0.0; 15], sm: vec![0.0; 16] }).is_err());
}

// ---------- fitting ----------

/// Days of GPD(-0.3)-tailed fields whose mean is driven by `sm_mean`.
fn synthetic_dataset(n: usize, nx: usize, ny: usize, signal: f64, seed: u64) -> GriddedDataset {
    let d = nx * ny;
    let grid = Grid::regular(nx, ny, 1.0);
    let dates: Vec<NaiveDate> =
        (0..n).map(|i| NaiveDate::from_ymd_opt(1990, 1, 1).unwrap() + Duration::days(i as i64)).collect();
    let mut rng = stream_rng(seed, 0);
    let mut t2m = Vec::with_capacity(n);
    let mut z500 = Vec::with_capacity(n);
    let mut sm = Vec::with_capacity(n);
    for _ in 0..n {
        let driver: f64 = rng.sample(StandardNormal);
        let common: f64 = rng.sample(StandardNormal);
        t2m.push(
            (0..d)
                .map(|_| {
                    let g = signal * driver + 0.7 * common + 0.7 * rng.sample::<f64, _>(StandardNormal);
                    let tail = grpboost::stats::normal_cdf(-g / (0.98 + signal * signal).sqrt());
                    (1.0 - tail.powf(0.3)) / 0.3
                })
                .collect(),
        );
        z500.push((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
        sm.push((0..d).map(|_| -driver + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect());
    }
    let vars = [("t2m".to_string(), t2m), ("z500".to_string(), z500), ("sm".to_string(), sm)].into_iter().collect();
    GriddedDataset::new(grid, dates, vars).unwrap()
}

fn small_fit_config(target: Vec<usize>, seed: u64) -> FitConfig {
    let train = TrainConfig { n_trees: 60, max_depth: 2, learning_rate: 0.1, ..Default::default() };
    FitConfig {
        target_region: target,
        method: PrecisionMethod::Dense,
        occurrence: train,
        intensity: train,
        dependence: train,
        seed,
        ..Default::default()
    }
}

#[test]
fn bundle_round_trip_preserves_predictions_bitwise() {
    let ds = synthetic_dataset(1200, 4, 3, 1.0, 8);
    let (bundle, report) = fit_all(&ds, &small_fit_config(vec![4, 5, 6], 1)).unwrap();
    assert_eq!(bundle.occurrence.selected_trees, report.occurrence.selected);
    assert_eq!(bundle.occurrence.ensemble.n_trees(), report.occurrence.selected);
    assert!(bundle.occurrence.selected_trees > 0);
    let text = bundle.to_json().unwrap();
    let back = SubModelBundle::from_json(&text).unwrap();
    assert_eq!(back.to_json().unwrap(), text);
    for t in [0, 17, 900] {
        let inputs = bundle.schema.day_inputs(&ds, t).unwrap();
        let a = predict_day(&bundle, &inputs).unwrap();
        let b = predict_day(&back, &inputs).unwrap();
        assert_eq!(a.p_occ.to_bits(), b.p_occ.to_bits());
        assert_eq!(a.theta_extent.to_bits(), b.theta_extent.to_bits());
        assert!(a.theta_int.iter().zip(&b.theta_int).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let mut tampered = back.clone();
    tampered.format = "other/9".into();
    assert!(SubModelBundle::from_json(&tampered.to_json().unwrap()).is_err());
    let short = DayInputs { z500: vec![0.0; 3], sm: vec![0.0; 12] };
    assert!(predict_day(&bundle, &short).is_err());
}

#[test]
fn fitting_is_deterministic() {
    let ds = synthetic_dataset(600, 3, 3, 1.0, 9);
    let cfg = small_fit_config(vec![0, 1], 4);
    let a = fit_all(&ds, &cfg).unwrap().0.to_json().unwrap();
    let b = fit_all(&ds, &cfg).unwrap().0.to_json().unwrap();
    assert_eq!(a, b);
}

#[test]
fn empty_ensembles_predict_their_base_scores() {
    let ds = synthetic_dataset(600, 3, 3, 1.0, 10);
    let mut cfg = small_fit_config(vec![0, 1], 5);
    for t in [&mut cfg.occurrence, &mut cfg.intensity, &mut cfg.dependence] {
        t.n_trees = 0;
    }
    let (bundle, _) = fit_all(&ds, &cfg).unwrap();
    let p = predict_day(&bundle, &bundle.schema.day_inputs(&ds, 3).unwrap()).unwrap();
    assert_eq!(p.p_occ, grpboost::stats::ilogit(bundle.occurrence.ensemble.base_score));
    assert!(p.theta_int.iter().all(|&v| v == bundle.intensity.ensemble.base_score));
    assert_eq!(p.theta_extent, bundle.dependence.ensemble.base_score);
    // the unconditional occurrence estimate is the event frequency
    let freq = bundle.thresholds.exceedance_days.len() as f64 / ds.n_days() as f64;
    assert!((p.p_occ - freq).abs() < 1e-6);
}

#[test]
fn zero_signal_data_select_few_trees() {
    let mut ok = 0;
    for seed in 0..5 {
        let ds = synthetic_dataset(1000, 3, 3, 0.0, 100 + seed);
        let (bundle, _) = fit_all(&ds, &small_fit_config(vec![0, 1, 2], seed)).unwrap();
        let counts =
            [bundle.occurrence.selected_trees, bundle.intensity.selected_trees, bundle.dependence.selected_trees];
        if counts.iter().all(|&c| c <= 5) {
            ok += 1;
        }
    }
    assert!(ok >= 4, "{ok} of 5");
}

#[test]
fn separable_occurrence_is_predicted_out_of_sample() {
    let ds = synthetic_dataset(2000, 3, 3, 3.0, 11);
    let train_days: Vec<usize> = (0..1500).collect();
    let train = ds.select_days(&train_days);
    let (bundle, _) = fit_all(&train, &small_fit_config(vec![0, 1, 2], 2)).unwrap();
    let risk = dataset_risk_series(&ds, "t2m", &[0, 1, 2]).unwrap();
    let (mut labels, mut scores) = (Vec::new(), Vec::new());
    for t in 1500..2000 {
        labels.push(risk[t] >= bundle.thresholds.u);
        scores.push(predict_day(&bundle, &bundle.schema.day_inputs(&ds, t).unwrap()).unwrap().p_occ);
    }
    let auc = roc_auc(&labels, &scores).unwrap().auc;
    assert!(auc >= 0.95, "{auc}");
}

#[test]
fn fitted_thresholds_keep_every_training_excess_in_support() {
    let ds = synthetic_dataset(1200, 4, 3, 1.0, 12);
    let (bundle, _) = fit_all(&ds, &small_fit_config(vec![4, 5], 3)).unwrap();
    let th = &bundle.thresholds;
    let y = ds.variable("t2m").unwrap();
    for &t in &th.exceedance_days {
        let p = predict_day(&bundle, &bundle.schema.day_inputs(&ds, t).unwrap()).unwrap();
        let z = standardize_day(&y[t], &p.theta_int, th, bundle.xi, bundle.scale_convention);
        assert!(z.iter().all(|v| *v > 0.0 && v.is_finite()));
    }
}

// ---------- scenarios ----------

fn fitted_bundle() -> (GriddedDataset, SubModelBundle) {
    let ds = synthetic_dataset(1200, 5, 4, 1.0, 13);
    let (bundle, _) = fit_all(&ds, &small_fit_config(vec![6, 7, 11, 12], 6)).unwrap();
    (ds, bundle)
}

#[test]
fn scenarios_are_r_exceedances_and_reproducible() {
    let (ds, bundle) = fitted_bundle();
    let inputs = bundle.schema.day_inputs(&ds, bundle.thresholds.exceedance_days[0]).unwrap();
    assert!(generate_scenarios(&bundle, &inputs, 0, 1, None).unwrap().fields.is_empty());
    let s = generate_scenarios(&bundle, &inputs, 300, 1, None).unwrap();
    assert_eq!(s.fields.len(), 300);
    assert!(s.risk.iter().all(|&r| r >= bundle.thresholds.u));
    let again = generate_scenarios(&bundle, &inputs, 300, 1, None).unwrap();
    assert_eq!(s, again);
    assert_eq!(event_probability(&s, |_| true), s.p_occ);
}

#[test]
fn event_probabilities_add_over_disjoint_sets() {
    let (ds, bundle) = fitted_bundle();
    let inputs = bundle.schema.day_inputs(&ds, 5).unwrap();
    let s = generate_scenarios(&bundle, &inputs, 500, 2, None).unwrap();
    let cut = quantile_type7(&s.risk, 0.5);
    let a = event_probability(&s, |f| f[6] > bundle.thresholds.b[6] && f[0] <= cut);
    let b = event_probability(&s, |f| f[6] > bundle.thresholds.b[6] && f[0] > cut);
    let both = event_probability(&s, |f| f[6] > bundle.thresholds.b[6]);
    assert!((a + b - both).abs() < 1e-15);
    assert!(both <= s.p_occ);
}

#[test]
fn overriding_the_extent_orders_the_extremogram() {
    let (ds, bundle) = fitted_bundle();
    let inputs = bundle.schema.day_inputs(&ds, 0).unwrap();
    let weak = generate_scenarios(&bundle, &inputs, 1000, 3, Some(0.05)).unwrap();
    let strong = generate_scenarios(&bundle, &inputs, 1000, 4, Some(4.0)).unwrap();
    let ew = extremogram(&weak.fields, &bundle.grid, 0.75).unwrap();
    let es = extremogram(&strong.fields, &bundle.grid, 0.75).unwrap();
    let mean = |v: &[grpboost::evaluation::ExtremogramPair]| v.iter().map(|p| p.estimate).sum::<f64>() / v.len() as f64;
    assert!(mean(&es) > mean(&ew));
}

#[test]
fn qq_wrapper_uses_exceedance_day_excesses() {
    let (ds, bundle) = fitted_bundle();
    let qq = qq_for_point(&bundle, &ds, "t2m", 6, 200, 0.95, 1).unwrap();
    assert_eq!(qq.points.len(), bundle.thresholds.n_excesses[6]);
    assert!(qq_for_point(&bundle, &ds, "t2m", 99, 200, 0.95, 1).is_err());
}

// ---------- dependence sub-model explanation ----------

#[test]
fn dependence_shap_recovers_the_driving_columns() {
    let driver = grpboost::synth::ExtentDriver { col_a: 40, col_b: 170, lo: 0.2, hi: 3.0 };
    let grid = Grid::regular(10, 5, 1.0);
    let n_reps = 20;
    let mut hits = 0;
    for rep in 0..n_reps {
        let seed = 500 + rep;
        let x = grpboost::synth::smooth_fields(272, 22, 11, seed);
        let z_days: Vec<Vec<f64>> = x
            .iter()
            .enumerate()
            .map(|(t, row)| {
                let spec = grpboost::brown_resnick::GrpSpec {
                    grid: grid.clone(),
                    params: grpboost::spatial::SemivariogramParams::new(1.0, driver.theta(row), 0.0).unwrap(),
                    scale: vec![1.0; 50],
                    b: vec![1.0; 50],
                    xi: 1.0,
                    risk: grpboost::risk::RiskFunctional::uniform(50),
                    u: 1.0,
                };
                grpboost::brown_resnick::simulate_grp(&spec, 1, grpboost::stats::derive_seed(seed, t as u64))
                    .unwrap()
                    .fields[0]
                    .clone()
            })
            .collect();
        let setup = ScoreSetup { grid: grid.clone(), alpha: 1.0, theta_scale: 0.0, method: PrecisionMethod::Dense };
        let loss = GrpScoreLoss::new(&z_days, &setup).unwrap();
        let features = grpboost::boosting::FeatureMatrix::unnamed(242, x.concat()).unwrap();
        let rows: Vec<usize> = (0..272).collect();
        let cfg = TrainConfig { n_trees: 190, max_depth: 2, learning_rate: 0.05, ..Default::default() };
        let ens = grpboost::boosting::boost(&loss, &features, &rows, &cfg).unwrap();
        let mut importance = vec![0.0; 242];
        for r in &rows {
            for (imp, v) in importance.iter_mut().zip(tree_shap(&ens, features.row(*r)).unwrap().values) {
                *imp += v.abs();
            }
        }
        let mut order: Vec<usize> = (0..242).collect();
        order.sort_by(|a, b| importance[*b].total_cmp(&importance[*a]));
        if order[..10].contains(&driver.col_a) && order[..10].contains(&driver.col_b) {
            hits += 1;
        }
    }
    assert!(hits * 10 >= n_reps * 8, "{hits} of {n_reps}");
}
