use gcnmf::data::{generate_synthetic, Dataset, SyntheticSpec};
use gcnmf::experiment::{result_rows, run_plan, summarize, ExperimentPlan, Method};
use gcnmf::graph::{build_aggregation, Graph};
use gcnmf::linalg::DenseMatrix;
use gcnmf::mask::{apply_mask, generate_mask, MaskSpec, MaskedFeatures, MissingPattern};
use gcnmf::model::{train, train_prepared, Mode, RunResult, Split, TrainConfig, TrainExtras};
use gcnmf::Error;

fn two_cliques(size: usize) -> Dataset {
    let n = 2 * size;
    let mut edges = Vec::new();
    for c in 0..2 {
        for i in 0..size {
            for j in i + 1..size {
                edges.push((c * size + i, c * size + j));
            }
        }
    }
    let labels: Vec<usize> = (0..n).map(|i| i / size).collect();
    let features = DenseMatrix::from_fn(n, 2, |i, j| if j == labels[i] { 1.0 } else { 0.0 });
    let pick = |range: std::ops::Range<usize>| -> Vec<usize> { (0..2).flat_map(|c| range.clone().map(move |i| c * size + i)).collect() };
    Dataset {
        name: "cliques".into(),
        graph: Graph::new(n, edges).unwrap(),
        features,
        labels,
        split: Split {
            train: pick(0..2),
            val: pick(2..4),
            test: pick(4..size),
        },
        class_count: 2,
    }
}

fn clustered(seed: u64) -> Dataset {
    generate_synthetic(&SyntheticSpec {
        nodes: 240,
        clusters: 3,
        feature_dim: 24,
        intra_p: 0.05,
        inter_p: 0.02,
        feature_noise: 0.6,
        seed,
        train_per_class: 10,
        val_per_class: 20,
    })
    .unwrap()
}

fn quick(mode: Mode, seed: u64) -> TrainConfig {
    TrainConfig {
        mode,
        seed,
        max_epochs: 200,
        patience: 50,
        ..TrainConfig::default()
    }
}

fn without_timing(mut r: RunResult) -> RunResult {
    r.wall_time_s = 0.0;
    r.em_time_s = 0.0;
    r.train_time_s = 0.0;
    r
}

#[test]
fn separable_cliques_reach_perfect_accuracy() {
    let ds = two_cliques(10);
    for mode in [Mode::PlainGcn, Mode::Joint] {
        let cfg = TrainConfig {
            k: 2,
            max_epochs: 200,
            patience: 200,
            ..quick(mode, 3)
        };
        let (_, r) = train(&ds.graph, &MaskedFeatures::complete(ds.features.clone()), &ds.labels, &ds.split, &cfg).unwrap();
        assert_eq!(r.test_accuracy, 1.0, "{mode:?}");
        assert!(r.epochs_run <= 200);
    }
}

#[test]
fn stops_patience_epochs_after_last_improvement() {
    let ds = clustered(1);
    let xf = MaskedFeatures::complete(ds.features.clone());
    for patience in [3, 10, 25] {
        let cfg = TrainConfig {
            patience,
            max_epochs: 400,
            ..quick(Mode::PlainGcn, 5)
        };
        let (_, r) = train(&ds.graph, &xf, &ds.labels, &ds.split, &cfg).unwrap();
        assert!(r.epochs_run < cfg.max_epochs);
        assert_eq!(r.epochs_run, r.epoch_of_best + patience);
        assert_eq!(r.loss_curve.len(), r.epochs_run);
        let best = r.val_acc_curve[r.epoch_of_best - 1];
        assert_eq!(best, r.best_val_accuracy);
        assert!(r.val_acc_curve[r.epoch_of_best..].iter().all(|&v| v <= best));
    }
}

#[test]
fn identical_inputs_give_identical_results() {
    let ds = clustered(2);
    let mask = generate_mask(
        &MaskSpec {
            pattern: MissingPattern::Uniform,
            mr: 0.3,
            seed: 4,
        },
        ds.num_nodes(),
        ds.features.cols(),
    )
    .unwrap();
    let xf = apply_mask(&ds.features, &mask).unwrap();
    let cfg = quick(Mode::Joint, 9);
    let (pa, a) = train(&ds.graph, &xf, &ds.labels, &ds.split, &cfg).unwrap();
    let (pb, b) = train(&ds.graph, &xf, &ds.labels, &ds.split, &cfg).unwrap();
    assert_eq!(pa, pb);
    assert_eq!(without_timing(a), without_timing(b));
}

#[test]
fn train_val_overlap_is_rejected() {
    let mut ds = two_cliques(6);
    ds.split.val.push(ds.split.train[0]);
    let err = train(&ds.graph, &MaskedFeatures::complete(ds.features.clone()), &ds.labels, &ds.split, &quick(Mode::PlainGcn, 0));
    assert!(matches!(err, Err(Error::SplitOverlap(_))));
}

#[test]
fn non_finite_loss_aborts() {
    let ds = two_cliques(6);
    // class scores overflow to ±inf on the first forward pass
    let huge = DenseMatrix::from_fn(ds.num_nodes(), 2, |_, _| f64::MAX);
    let err = train(&ds.graph, &MaskedFeatures::complete(huge), &ds.labels, &ds.split, &quick(Mode::PlainGcn, 0));
    assert!(matches!(err, Err(Error::NonFiniteLoss { epoch: 1 })), "{err:?}");
}

#[test]
fn plain_gcn_rejects_masked_features() {
    let ds = two_cliques(6);
    let mask = generate_mask(
        &MaskSpec {
            pattern: MissingPattern::Uniform,
            mr: 0.5,
            seed: 0,
        },
        ds.num_nodes(),
        2,
    )
    .unwrap();
    let xf = apply_mask(&ds.features, &mask).unwrap();
    assert!(train(&ds.graph, &xf, &ds.labels, &ds.split, &quick(Mode::PlainGcn, 0)).is_err());
}

#[test]
fn two_step_keeps_mixture_fixed() {
    let ds = clustered(3);
    let mask = generate_mask(
        &MaskSpec {
            pattern: MissingPattern::Uniform,
            mr: 0.5,
            seed: 1,
        },
        ds.num_nodes(),
        ds.features.cols(),
    )
    .unwrap();
    let xf = apply_mask(&ds.features, &mask).unwrap();
    let agg = build_aggregation(&ds.graph);
    let cfg = TrainConfig {
        max_epochs: 30,
        patience: 30,
        ..quick(Mode::TwoStep, 2)
    };
    let (two_step, _) = train_prepared(&agg, &xf, &ds.labels, &ds.split, &cfg, &TrainExtras::default()).unwrap();
    let joint_cfg = TrainConfig { mode: Mode::Joint, ..cfg.clone() };
    let (joint, _) = train_prepared(&agg, &xf, &ds.labels, &ds.split, &joint_cfg, &TrainExtras::default()).unwrap();
    let em = gcnmf::gmm::em_fit_with(
        &xf,
        &gcnmf::gmm::EmOptions {
            k: cfg.k,
            max_iter: cfg.em_max_iter,
            tol: cfg.em_tol,
            seed: gcnmf::rng::sub_seed(cfg.seed, "em"),
            init: cfg.em_init,
        },
    )
    .unwrap()
    .params;
    assert_eq!(two_step.gmm.as_ref().unwrap(), &em);
    assert_ne!(joint.gmm.as_ref().unwrap(), &em);
    for g in [two_step.gmm.unwrap(), joint.gmm.unwrap()] {
        let w = g.weights();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12 && w.iter().all(|&p| p > 0.0));
        assert!(g.variances().data().iter().all(|&v| v >= gcnmf::gmm::VAR_FLOOR));
    }
}

#[test]
#[ignore = "direction does not hold on this synthetic design (joint 0.603 vs two-step 0.617); see README"]
fn joint_at_least_two_step_structural_80() {
    let ds = clustered(7);
    let plan = ExperimentPlan {
        patterns: vec![MissingPattern::Structural],
        mrs: vec![0.8],
        methods: vec![Method::Gcnmf, Method::GcnmfTwoStep],
        mask_instances: 1,
        seeds_per_instance: 10,
        config: quick(Mode::Joint, 0),
        ..ExperimentPlan::default()
    };
    let outcomes = run_plan(&ds, &plan).unwrap();
    let s = summarize(&plan, &outcomes);
    let (joint, two) = (s[0].mean, s[1].mean);
    println!("joint {joint:.4} two-step {two:.4}");
    assert!(joint >= two, "joint {joint} < two-step {two}");
}

#[test]
#[ignore = "direction does not hold on this synthetic design (gcnmf 0.605 vs mean+gcn 0.647); see README"]
fn gcnmf_at_least_mean_gcn_structural_80() {
    let ds = clustered(11);
    let plan = ExperimentPlan {
        patterns: vec![MissingPattern::Structural],
        mrs: vec![0.3, 0.8],
        methods: vec![Method::Gcnmf, Method::MeanGcn],
        mask_instances: 1,
        seeds_per_instance: 10,
        config: quick(Mode::Joint, 0),
        ..ExperimentPlan::default()
    };
    let outcomes = run_plan(&ds, &plan).unwrap();
    let s = summarize(&plan, &outcomes);
    for c in &s {
        println!("{} {} {:.4} ± {:.4}", c.mr, c.method, c.mean, c.std);
    }
    let at = |method| s.iter().find(|c| c.mr == 0.8 && c.method == method).unwrap().mean;
    assert!(at(Method::Gcnmf) >= at(Method::MeanGcn));
}

#[test]
fn plan_cardinality_and_order() {
    let ds = clustered(4);
    let plan = ExperimentPlan {
        mrs: vec![0.5],
        methods: vec![Method::MeanGcn],
        mask_instances: 1,
        seeds_per_instance: 2,
        config: TrainConfig {
            max_epochs: 5,
            patience: 5,
            ..TrainConfig::default()
        },
        ..ExperimentPlan::default()
    };
    let outcomes = run_plan(&ds, &plan).unwrap();
    assert_eq!(outcomes.len(), 2);
    assert_eq!(result_rows(&ds.name, &outcomes).len(), 2);

    let bigger = ExperimentPlan {
        patterns: vec![MissingPattern::Uniform, MissingPattern::Biased],
        mrs: vec![0.2, 0.5],
        methods: vec![Method::Gcnmf, Method::KnnGcn, Method::GcnNoFeatures],
        seeds_per_instance: 2,
        mask_instances: 2,
        ..plan.clone()
    };
    let outcomes = run_plan(&ds, &bigger).unwrap();
    assert_eq!(outcomes.len(), bigger.num_runs());
    assert!(outcomes.iter().all(|o| o.result.is_ok()));
    // bit-for-bit reproducible, in the same order
    let again = run_plan(&ds, &bigger).unwrap();
    for (a, b) in outcomes.iter().zip(&again) {
        assert_eq!(a.spec, b.spec);
        assert_eq!(
            a.result.as_ref().unwrap().test_accuracy.to_bits(),
            b.result.as_ref().unwrap().test_accuracy.to_bits()
        );
    }
}

#[test]
fn failures_are_recorded_per_run() {
    let ds = clustered(4);
    let plan = ExperimentPlan {
        patterns: vec![MissingPattern::Structural],
        mrs: vec![1.0],
        methods: vec![Method::MeanGcn, Method::GcnFull],
        mask_instances: 1,
        seeds_per_instance: 1,
        config: TrainConfig {
            max_epochs: 3,
            patience: 3,
            ..TrainConfig::default()
        },
        ..ExperimentPlan::default()
    };
    let outcomes = run_plan(&ds, &plan).unwrap();
    assert!(outcomes[0].result.is_err(), "nothing observed to impute from");
    assert!(outcomes[1].result.is_ok());
}

#[test]
fn gcnmf_equals_gcn_full_without_missing_features() {
    let ds = clustered(5);
    let plan = ExperimentPlan {
        patterns: vec![MissingPattern::Uniform],
        mrs: vec![0.0],
        methods: vec![Method::Gcnmf, Method::GcnFull],
        mask_instances: 1,
        seeds_per_instance: 3,
        config: quick(Mode::Joint, 0),
        ..ExperimentPlan::default()
    };
    let outcomes = run_plan(&ds, &plan).unwrap();
    for pair in outcomes.chunks(2) {
        let a = pair[0].result.as_ref().unwrap();
        let b = pair[1].result.as_ref().unwrap();
        assert!((a.test_accuracy - b.test_accuracy).abs() <= 1e-12);
        assert_eq!(a.loss_curve, b.loss_curve);
    }
}
