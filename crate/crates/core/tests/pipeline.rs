use drobust::data::{apply_grouping, kfold_split, make_subcategory_task, synth_prior_shift, GroupGenerator};
use drobust::metrics::{evaluate, ordinary_risk};
use drobust::trainer::cross_validate;
use drobust::{train, Dataset, FDivergenceSpec, GroupingSpec, LossKind, Objective, TrainConfig};

fn shifted(seed: u64, n_train: usize) -> (Dataset, Dataset) {
    synth_prior_shift(
        seed,
        &[
            GroupGenerator::single(0, vec![-1.0, 0.5], 1.0),
            GroupGenerator::single(1, vec![1.0, -0.5], 1.0),
            GroupGenerator::single(2, vec![0.0, 1.5], 1.0),
        ],
        &[0.6, 0.3, 0.1],
        &[0.6, 0.3, 0.1],
        n_train,
        600,
    )
    .unwrap()
}

#[test]
fn risks_are_nested_for_every_objective() {
    let (train_set, test_set) = shifted(3, 300);
    for divergence in [FDivergenceSpec::kl(0.5).unwrap(), FDivergenceSpec::pearson(0.5).unwrap()] {
        for objective in [Objective::Erm, Objective::Aerm, Objective::StructuralAerm] {
            let cfg = TrainConfig::new(objective, divergence, LossKind::SoftmaxCrossEntropy, 0.01);
            let rep = train(&cfg, &train_set).unwrap();
            let r = evaluate(&rep.params, &test_set, &divergence, LossKind::SoftmaxCrossEntropy).unwrap();
            assert!(r.ordinary_risk <= r.structural_adv_risk_01 + 1e-12);
            assert!(r.structural_adv_risk_01 <= r.adversarial_01_risk + 1e-12);
            assert!(r.weights_certificate.max_violation(
                &drobust::GroupStats::new(r.group_counts.clone(), r.per_group_risks.clone()).unwrap(),
                &divergence
            ) <= 1e-9);
        }
    }
}

#[test]
fn structural_training_flattens_group_risks() {
    let (train_set, test_set) = shifted(11, 400);
    let spec = FDivergenceSpec::kl(0.5).unwrap();
    let erm = train(&TrainConfig::new(Objective::Erm, spec, LossKind::SoftmaxCrossEntropy, 0.001), &train_set).unwrap();
    let st = train(
        &TrainConfig::new(Objective::StructuralAerm, spec, LossKind::SoftmaxCrossEntropy, 0.001),
        &train_set,
    )
    .unwrap();
    let re = evaluate(&erm.params, &test_set, &spec, LossKind::SoftmaxCrossEntropy).unwrap();
    let rs = evaluate(&st.params, &test_set, &spec, LossKind::SoftmaxCrossEntropy).unwrap();
    assert!(rs.sensitivity < re.sensitivity);
    assert!(rs.structural_adv_risk_surrogate.unwrap() < re.structural_adv_risk_surrogate.unwrap());
}

#[test]
fn subcategory_pipeline_trains_binary_model() {
    let (train_set, _) = shifted(5, 300);
    let binary = make_subcategory_task(&train_set).unwrap();
    assert_eq!(binary.num_classes(), 2);
    assert_eq!(binary.num_groups(), 3);
    let regrouped = apply_grouping(&binary, &GroupingSpec::BySubcategoryLabels).unwrap();
    assert_eq!(regrouped.num_groups(), 3);
    let cfg = TrainConfig::new(
        Objective::StructuralAerm,
        FDivergenceSpec::pearson(0.3).unwrap(),
        LossKind::Logistic,
        0.01,
    );
    let rep = train(&cfg, &binary).unwrap();
    assert!(rep.params.is_margin());
    assert!(ordinary_risk(&rep.params, &binary).unwrap() < 0.5);
}

#[test]
fn cross_validation_covers_each_sample_once() {
    let (train_set, _) = shifted(9, 120);
    let folds = kfold_split(&train_set, 4, 2).unwrap();
    let mut seen = vec![0; train_set.len()];
    for (_, valid) in &folds {
        for &i in valid {
            seen[i] += 1;
        }
    }
    assert!(seen.iter().all(|&c| c == 1));

    let cfg = TrainConfig::new(
        Objective::StructuralAerm,
        FDivergenceSpec::kl(0.5).unwrap(),
        LossKind::SoftmaxCrossEntropy,
        0.0,
    );
    let grid = [0.1, 0.01];
    let a = cross_validate(&cfg, &train_set, &grid, 4, 2).unwrap();
    let b = cross_validate(&cfg, &train_set, &grid, 4, 2).unwrap();
    assert_eq!(a, b);
    assert!(grid.contains(&a.chosen_lambda));
    assert!(a.scores.iter().all(|s| s.fold_scores.len() == 4));
}

#[test]
fn zero_one_reduction_matches_direct_solve_on_random_classifiers() {
    use drobust::metrics::zero_one_losses;
    use drobust::{adversarial01_risk, per_sample_weights, KlOptions, ModelParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let (ds, _) = shifted(13, 200);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for t in 0..30 {
        let mut p = ModelParams::zeros(3, 2).unwrap();
        let flat: Vec<f64> = (0..p.to_flat().len()).map(|_| rng.random_range(-2.0..2.0)).collect();
        p = p.with_flat(&flat);
        let s = rng.random_range(1..=6);
        let grouped = ds.clone().with_groups((0..ds.len()).map(|i| i % s).collect()).unwrap();
        for spec in [FDivergenceSpec::kl(0.5).unwrap(), FDivergenceSpec::pearson(0.5).unwrap()] {
            let zo = zero_one_losses(&p, &grouped).unwrap();
            let direct = per_sample_weights(&zo, &spec, &KlOptions::default()).unwrap().objective;
            let p1 = zo.iter().sum::<f64>() / zo.len() as f64;
            let reduced = adversarial01_risk(p1, &spec).unwrap();
            assert!((direct - reduced).abs() <= 1e-6, "{t}: {direct} vs {reduced}");

            let r = evaluate(&p, &grouped, &spec, LossKind::SoftmaxCrossEntropy).unwrap();
            assert!(r.ordinary_risk <= r.structural_adv_risk_01 + 1e-12);
            assert!(r.structural_adv_risk_01 <= r.adversarial_01_risk + 1e-12);
            assert!(r.adversarial_01_risk <= 1.0);
        }
    }
}
