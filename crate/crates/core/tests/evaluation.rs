use grpboost::boosting::*;
use grpboost::brown_resnick::{simulate_grp, GrpSpec};
use grpboost::evaluation::*;
use grpboost::risk::RiskFunctional;
use grpboost::spatial::{pairwise_limit_prob, semivariogram, Grid, SemivariogramParams};
use grpboost::stats::stream_rng;
use proptest::prelude::*;
use rand::Rng;

// ---------- ROC / Brier / permutation ----------

fn pairwise_auc(labels: &[bool], scores: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..labels.len() {
        for j in 0..labels.len() {
            if labels[i] && !labels[j] {
                den += 1.0;
                num += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

#[test]
fn auc_of_separated_scores_is_one() {
    let labels = [false, false, true, true];
    let roc = roc_auc(&labels, &[0.1, 0.2, 0.8, 0.9]).unwrap();
    assert_eq!(roc.auc, 1.0);
    assert_eq!(roc.curve.first().unwrap().true_positive_rate, 0.0);
    let last = roc.curve.last().unwrap();
    assert_eq!((last.false_positive_rate, last.true_positive_rate), (1.0, 1.0));
}

#[test]
fn auc_matches_pairwise_oracle_with_ties() {
    let mut rng = stream_rng(1, 0);
    let labels: Vec<bool> = (0..200).map(|_| rng.random::<bool>()).collect();
    let scores: Vec<f64> = (0..200).map(|_| (rng.random::<f64>() * 20.0).floor()).collect();
    let roc = roc_auc(&labels, &scores).unwrap();
    assert!((roc.auc - pairwise_auc(&labels, &scores)).abs() < 1e-14);
    assert_eq!(
        roc.curve.len(),
        1 + {
            let mut s = scores.clone();
            s.sort_by(f64::total_cmp);
            s.dedup();
            s.len()
        }
    );
}

#[test]
fn auc_of_uninformative_scores_is_one_half() {
    let mut rng = stream_rng(2, 0);
    let n = 20_000;
    let labels: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
    let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let auc = roc_auc(&labels, &scores).unwrap().auc;
    let se = (1.0 / (12.0 * n as f64 / 4.0)).sqrt() * 2.0;
    assert!((auc - 0.5).abs() < 3.0 * se, "{auc}");
}

#[test]
fn auc_needs_both_classes() {
    assert!(roc_auc(&[true, true], &[0.1, 0.2]).is_err());
}

proptest! {
    #[test]
    fn auc_is_invariant_to_increasing_transforms(seed in 0u64..500) {
        let mut rng = stream_rng(seed, 1);
        let mut labels: Vec<bool> = (0..50).map(|_| rng.random::<bool>()).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..50).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let transformed: Vec<f64> = scores.iter().map(|s| s.exp() * 3.0 + s.powi(3)).collect();
        prop_assert_eq!(roc_auc(&labels, &scores).unwrap().auc, roc_auc(&labels, &transformed).unwrap().auc);
    }

    #[test]
    fn brier_reports_concatenate(seed in 0u64..500, split in 1usize..39) {
        let mut rng = stream_rng(seed, 2);
        let y: Vec<bool> = (0..40).map(|_| rng.random::<bool>()).collect();
        let p: Vec<f64> = (0..40).map(|_| rng.random::<f64>()).collect();
        let all = brier(&y, &p).unwrap();
        let a = brier(&y[..split], &p[..split]).unwrap();
        let b = brier(&y[split..], &p[split..]).unwrap();
        let pooled = a.concat(&b);
        prop_assert_eq!(pooled.contributions, all.contributions.clone());
        prop_assert_eq!(pooled.value, all.value);
    }
}

#[test]
fn brier_examples() {
    let y = [true, false, true];
    assert_eq!(brier(&y, &[1.0, 0.0, 1.0]).unwrap().value, 0.0);
    assert_eq!(brier(&y, &[0.5, 0.5, 0.5]).unwrap().value, 0.25);
    assert!(brier(&y, &[0.5, 0.5]).is_err());
    assert!(brier(&y, &[0.5, 1.5, 0.5]).is_err());
}

#[test]
fn permutation_test_examples() {
    let a: Vec<f64> = (0..100).map(|i| (i as f64 * 0.1).sin().abs()).collect();
    assert_eq!(permutation_test(&a, &a, 10_000, 1).unwrap(), 1.0);
    assert_eq!(permutation_test(&a, &a, 0, 1).unwrap(), 1.0);
    let mut rng = stream_rng(3, 0);
    let b: Vec<f64> = a.iter().map(|v| v + 0.5 + 0.1 * rng.random::<f64>()).collect();
    assert!(permutation_test(&a, &b, 10_000, 1).unwrap() <= 0.001);
    assert!(permutation_test(&a, &b[..10], 100, 1).is_err());
}

#[test]
fn permutation_p_values_are_super_uniform_under_the_null() {
    let trials = 1000;
    let mut p = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = stream_rng(100 + t as u64, 0);
        let a: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        let b: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        p.push(permutation_test(&a, &b, 199, t as u64).unwrap());
    }
    for level in [0.01, 0.05, 0.1] {
        let frac = p.iter().filter(|&&v| v <= level).count() as f64 / trials as f64;
        let se = (level * (1.0 - level) / trials as f64).sqrt();
        assert!(frac <= level + 3.0 * se, "level {level}: {frac}");
    }
}

// ---------- QQ ----------

fn gpd_sample(n: usize, sigma: f64, xi: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, 0);
    (0..n).map(|_| sigma * ((1.0 - rng.random::<f64>()).powf(-xi) - 1.0) / xi).collect()
}

#[test]
fn qq_bands_cover_self_consistent_data() {
    let mut inside = 0.0;
    for rep in 0..50 {
        let mut rng = stream_rng(rep, 7);
        let scales: Vec<f64> = (0..150).map(|_| 0.5 + rng.random::<f64>()).collect();
        let unit = gpd_sample(150, 1.0, -0.3, 1000 + rep);
        let excess: Vec<f64> = unit.iter().zip(&scales).map(|(u, a)| u * a).collect();
        inside += qq_tail(&excess, &scales, -0.3, 400, 0.95, rep).unwrap().fraction_inside();
    }
    assert!(inside / 50.0 >= 0.9, "{}", inside / 50.0);
}

#[test]
fn qq_flags_a_wrong_shape_in_the_upper_tail() {
    let mut hits = 0;
    for rep in 0..20 {
        let excess = gpd_sample(200, 1.0, -0.3, 2000 + rep);
        let qq = qq_tail(&excess, &vec![1.0; 200], 0.3, 400, 0.95, rep).unwrap();
        let top = &qq.points[qq.points.len() * 9 / 10..];
        if top.iter().any(|p| p.empirical < p.lower) {
            hits += 1;
        }
    }
    assert!(hits >= 16, "{hits}");
}

#[test]
fn qq_rejects_degenerate_input() {
    assert!(qq_tail(&[1.0; 20], &[1.0; 20], -0.3, 100, 0.95, 0).is_err());
    assert!(qq_tail(&[1.0, 2.0], &[1.0, 1.0], -0.3, 100, 0.95, 0).is_err());
}

// ---------- extremogram ----------

#[test]
fn extremogram_of_independent_fields_is_flat() {
    let grid = Grid::regular(4, 3, 1.0);
    let mut rng = stream_rng(4, 0);
    let fields: Vec<Vec<f64>> = (0..2000).map(|_| (0..12).map(|_| rng.random::<f64>()).collect()).collect();
    let pairs = extremogram(&fields, &grid, 0.75).unwrap();
    assert_eq!(pairs.len(), 66);
    assert!(pairs.iter().all(|p| p.s1 < p.s2));
    for p in &pairs {
        let se = (0.25 * 0.75 / p.n_conditioning as f64).sqrt();
        assert!((p.estimate - 0.25).abs() < 4.0 * se, "{p:?}");
    }
    let mean = pairs.iter().map(|p| p.estimate).sum::<f64>() / 66.0;
    assert!((mean - 0.25).abs() < 3.0 * (0.25 * 0.75 / 500.0f64).sqrt());
}

#[test]
fn extremogram_validates_input() {
    let grid = Grid::regular(2, 1, 1.0);
    let fields = vec![vec![1.0, 2.0]; 30];
    assert!(extremogram(&fields, &grid, 1.0).is_err());
    assert!(extremogram(&fields[..5], &grid, 0.5).is_err());
}

fn pareto_fields(grid: &Grid, theta: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = grid.len();
    let spec = GrpSpec {
        grid: grid.clone(),
        params: SemivariogramParams::new(1.0, theta, 0.0).unwrap(),
        scale: vec![1.0; d],
        b: vec![1.0; d],
        xi: 1.0,
        risk: RiskFunctional::uniform(d),
        u: 1.0,
    };
    simulate_grp(&spec, n, seed).unwrap().fields
}

#[test]
fn stronger_extent_gives_a_higher_extremogram() {
    let grid = Grid::regular(5, 4, 1.0);
    let weak = extremogram(&pareto_fields(&grid, 0.05, 1000, 1), &grid, 0.75).unwrap();
    let strong = extremogram(&pareto_fields(&grid, 4.0, 1000, 2), &grid, 0.75).unwrap();
    let mut d: Vec<f64> = weak.iter().map(|p| p.distance).collect();
    d.sort_by(f64::total_cmp);
    let median = d[d.len() / 2];
    let edges: Vec<f64> = (0..=4).map(|i| 0.5 + i as f64 * (median - 0.5) / 4.0).collect();
    for (w, s) in bin_by_distance(&weak, &edges).iter().zip(bin_by_distance(&strong, &edges)) {
        if w.n_pairs > 0 {
            assert!(s.mean > w.mean, "{w:?} vs {s:?}");
        }
    }
}

// ---------- TreeSHAP ----------

fn cond_expectation(tree: &RegressionTree, i: usize, x: &[f64], mask: u32) -> f64 {
    match &tree.nodes[i] {
        Node::Leaf { weight, .. } => *weight,
        Node::Split { feature, threshold, left, right, default_left, cover, .. } => {
            if mask & (1 << feature) != 0 {
                let go_left = if x[*feature].is_nan() { *default_left } else { x[*feature] < *threshold };
                cond_expectation(tree, if go_left { *left } else { *right }, x, mask)
            } else {
                (tree.nodes[*left].cover() * cond_expectation(tree, *left, x, mask)
                    + tree.nodes[*right].cover() * cond_expectation(tree, *right, x, mask))
                    / cover
            }
        }
    }
}

fn exact_shapley(ens: &TreeEnsemble, x: &[f64]) -> (f64, Vec<f64>) {
    let p = x.len();
    let v = |mask: u32| {
        ens.base_score + ens.learning_rate * ens.trees.iter().map(|t| cond_expectation(t, 0, x, mask)).sum::<f64>()
    };
    let values: Vec<f64> = (0..(1u32 << p)).map(v).collect();
    let fact = |n: usize| (1..=n).map(|k| k as f64).product::<f64>();
    let mut phi = vec![0.0; p];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        for mask in 0..(1u32 << p) {
            if mask & (1 << i) != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let w = fact(s) * fact(p - s - 1) / fact(p);
            *phi_i += w * (values[(mask | (1 << i)) as usize] - values[mask as usize]);
        }
    }
    (values[0], phi)
}

fn random_ensemble(n: usize, p: usize, depth: usize, trees: usize, seed: u64) -> (FeatureMatrix, TreeEnsemble) {
    let mut rng = stream_rng(seed, 0);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..p).map(|_| if rng.random::<f64>() < 0.05 { f64::NAN } else { rng.random::<f64>() }).collect())
        .collect();
    let x = FeatureMatrix::from_rows((0..p).map(|i| format!("x{i}")).collect(), &rows).unwrap();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| {
            let g = |v: f64| if v.is_nan() { 0.3 } else { v };
            (3.0 * g(r[0])).sin() + g(r[1]) * g(r[2 % p]) + rng.random::<f64>() * 0.2
        })
        .collect();
    let loss = SquaredError { targets: y };
    let all: Vec<usize> = (0..n).collect();
    let cfg = TrainConfig {
        n_trees: trees,
        max_depth: depth,
        learning_rate: 0.3,
        min_child_hessian: 2.0,
        ..Default::default()
    };
    (x.clone(), boost(&loss, &x, &all, &cfg).unwrap())
}

#[test]
fn tree_shap_matches_exact_shapley_enumeration() {
    for (p, depth, seed) in [(3, 3, 1), (5, 6, 2), (8, 5, 3), (12, 6, 4)] {
        let (x, ens) = random_ensemble(300, p, depth, 15, seed);
        for r in (0..300).step_by(37) {
            let row = x.row(r);
            let shap = tree_shap(&ens, row).unwrap();
            let (base, exact) = exact_shapley(&ens, row);
            assert!((shap.base - base).abs() <= 1e-10);
            for (a, b) in shap.values.iter().zip(&exact) {
                assert!((a - b).abs() <= 1e-10, "p {p} row {r}: {a} vs {b}");
            }
            assert!((shap.total() - ens.predict(row).unwrap()).abs() <= 1e-9);
        }
    }
}

#[test]
fn single_split_attributes_everything_to_its_feature() {
    let tree = RegressionTree {
        nodes: vec![
            Node::Split { feature: 2, threshold: 0.5, left: 1, right: 2, default_left: false, gain: 1.0, cover: 10.0 },
            Node::Leaf { weight: -1.0, cover: 4.0 },
            Node::Leaf { weight: 2.0, cover: 6.0 },
        ],
    };
    let ens = TreeEnsemble {
        base_score: 0.3,
        learning_rate: 1.0,
        feature_names: vec!["a".into(), "b".into(), "c".into()],
        trees: vec![tree],
    };
    let x = [0.0, 0.0, 0.1];
    let s = tree_shap(&ens, &x).unwrap();
    assert_eq!(s.values[0], 0.0);
    assert_eq!(s.values[1], 0.0);
    assert!((s.values[2] - (ens.predict(&x).unwrap() - s.base)).abs() < 1e-12);
    assert!(tree_shap(&ens, &[0.0]).is_err());
}

#[test]
fn duplicated_features_used_symmetrically_share_credit() {
    let split = |f| RegressionTree {
        nodes: vec![
            Node::Split { feature: f, threshold: 0.5, left: 1, right: 2, default_left: false, gain: 1.0, cover: 100.0 },
            Node::Leaf { weight: -1.0, cover: 50.0 },
            Node::Leaf { weight: 1.0, cover: 50.0 },
        ],
    };
    let ens = TreeEnsemble {
        base_score: 0.0,
        learning_rate: 0.5,
        feature_names: vec!["a".into(), "b".into()],
        trees: vec![split(0), split(1)],
    };
    for v in [0.2, 0.8] {
        let s = tree_shap(&ens, &[v, v]).unwrap();
        assert_eq!(s.values[0], s.values[1]);
    }
}

#[test]
fn region_summary_examples() {
    let zero = vec![ShapAttribution { base: 0.0, values: vec![0.0; 3] }; 5];
    let map = [Some(0), Some(1), None];
    assert_eq!(region_shap_summary(&zero, &[1.0, 2.0, 3.0, 4.0, 5.0], &map, 2, 0.1).unwrap(), vec![0.0, 0.0]);
    let attrs: Vec<ShapAttribution> =
        (0..4).map(|i| ShapAttribution { base: 0.0, values: vec![i as f64, -1.0, 5.0] }).collect();
    let all = region_shap_summary(&attrs, &[0.0, 1.0, 2.0, 3.0], &map, 2, 1.0).unwrap();
    assert_eq!(all, vec![1.5, 1.0]);
}

#[test]
fn informative_column_dominates_the_shap_map() {
    let mut rng = stream_rng(9, 0);
    let n = 400;
    let p = 16;
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.random::<f64>()).collect()).collect();
    let y: Vec<f64> = rows.iter().map(|r| 4.0 * r[7] + 0.1 * rng.random::<f64>()).collect();
    let x = FeatureMatrix::from_rows((0..p).map(|i| format!("z{i}")).collect(), &rows).unwrap();
    let all: Vec<usize> = (0..n).collect();
    let ens = boost(
        &SquaredError { targets: y },
        &x,
        &all,
        &TrainConfig { n_trees: 50, learning_rate: 0.2, ..Default::default() },
    )
    .unwrap();
    let attrs: Vec<ShapAttribution> = all.iter().map(|&r| tree_shap(&ens, x.row(r)).unwrap()).collect();
    let preds: Vec<f64> = all.iter().map(|&r| ens.predict(x.row(r)).unwrap()).collect();
    let map: Vec<Option<usize>> = (0..p).map(Some).collect();
    let summary = region_shap_summary(&attrs, &preds, &map, p, 0.1).unwrap();
    let argmax = (0..p).max_by(|&a, &b| summary[a].total_cmp(&summary[b])).unwrap();
    assert_eq!(argmax, 7);
}

// ---------- recovery study ----------

#[test]
fn study_without_boosting_reports_the_initial_estimate() {
    let config = StudyConfig {
        n_reps: 1,
        n_days: 30,
        grid_nx: 4,
        grid_ny: 3,
        pred_nx: 6,
        pred_ny: 4,
        driver: grpboost::synth::ExtentDriver { col_a: 3, col_b: 10, lo: 0.2, hi: 3.0 },
        pairs: vec![(0, 2)],
        early_iteration: 0,
        late_iteration: 0,
        train: TrainConfig { n_trees: 0, ..Default::default() },
        ..StudyConfig::default()
    };
    let report = simulation_study(&config, 3).unwrap();
    let grid = Grid::regular(4, 3, 1.0);
    let theta = report.initial_estimates[0];
    let params = SemivariogramParams::new(1.0, theta, 0.0).unwrap();
    let pi = pairwise_limit_prob(semivariogram(grid.point(0), grid.point(2), &params)).unwrap();
    for c in &report.cells {
        assert!((c.late.median - pi).abs() < 1e-15 && (c.early.q25 - pi).abs() < 1e-15);
    }
}

#[test]
fn exports_render() {
    let roc = roc_auc(&[true, false, true], &[0.9, 0.1, 0.4]).unwrap();
    let csv = export::roc_table(&roc).to_csv().unwrap();
    assert!(csv.starts_with("threshold,fpr,tpr\ninf,0,0\n"));
    let svg = export::roc_plot(&roc).to_svg();
    assert!(svg.starts_with("<svg") && svg.contains("<metadata>") && svg.trim_end().ends_with("</svg>"));
}
