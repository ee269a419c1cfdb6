mod common;

use capforge_core::data::{build_windows, loocv_split};
use capforge_core::model::{Forecaster, ModelConfig};
use capforge_core::training::{
    ablation_cells, evaluate, run_ablation, run_loocv, summarize, sweep_k, train_model, KOverrides, NoClock, Study,
    TrainSettings, ABLATION_LABELS,
};
use capforge_core::Error;
use common::{synthetic_fleet, synthetic_series};

fn quick() -> TrainSettings {
    TrainSettings { epochs: 3, trials: 2, base_seed: 11, ..Default::default() }
}

fn small_config() -> ModelConfig {
    ModelConfig {
        window: 12,
        patch_sizes: vec![vec![6, 4, 3, 2], vec![4, 3, 2, 1]],
        intra_width: 16,
        inter_width: 16,
        ..Default::default()
    }
}

#[test]
fn training_is_bitwise_deterministic() {
    let fleet = synthetic_fleet(60);
    let split = loocv_split(&fleet, "B0005", 12).unwrap();
    let settings = quick();
    let a = train_model(&small_config(), &settings, &split.train, Some(&split.test), 5).unwrap();
    let b = train_model(&small_config(), &settings, &split.train, Some(&split.test), 5).unwrap();
    assert_eq!(a.model.checksum(), b.model.checksum());
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.trace.len(), settings.epochs);
    for e in &a.trace {
        assert!(e.train_loss.is_finite() && e.train_loss >= 0.0);
        assert!(e.test_loss.unwrap().is_finite());
    }

    let c = train_model(&small_config(), &settings, &split.train, None, 6).unwrap();
    assert_ne!(a.model.checksum(), c.model.checksum());
    assert!(c.trace.iter().all(|e| e.test_loss.is_none()));
}

#[test]
fn different_seeds_initialize_differently() {
    let a = Forecaster::new(ModelConfig { seed: 11, ..Default::default() }).unwrap();
    let b = Forecaster::new(ModelConfig { seed: 12, ..Default::default() }).unwrap();
    assert_ne!(a.checksum(), b.checksum());
}

#[test]
fn invalid_settings_and_empty_data_are_rejected() {
    let fleet = synthetic_fleet(40);
    let samples = build_windows(&fleet[0], 12).unwrap();
    let zero_epochs = TrainSettings { epochs: 0, ..quick() };
    assert!(matches!(
        train_model(&small_config(), &zero_epochs, &samples, None, 0),
        Err(Error::Config(_))
    ));
    assert!(matches!(train_model(&small_config(), &quick(), &[], None, 0), Err(Error::Empty(_))));
}

#[test]
fn divergence_reports_the_epoch() {
    let fleet = synthetic_fleet(40);
    let samples = build_windows(&fleet[0], 12).unwrap();
    let settings = TrainSettings {
        optimizer: capforge_core::nn::OptimizerSettings { learning_rate: 1e300, ..Default::default() },
        ..quick()
    };
    match train_model(&small_config(), &settings, &samples, None, 0) {
        Err(Error::Diverged { epoch, .. }) => assert!(epoch >= 1),
        Err(Error::NonFinite(what)) => assert!(what.contains("epoch")),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn training_reduces_loss_on_synthetic_fleet() {
    let fleet = synthetic_fleet(120);
    let split = loocv_split(&fleet, "B0006", 36).unwrap();
    let settings = TrainSettings { epochs: 30, ..Default::default() };
    let trained = train_model(&ModelConfig::default(), &settings, &split.train, Some(&split.test), 3).unwrap();
    let first = trained.trace[0].train_loss;
    let last = trained.trace.last().unwrap().train_loss;
    assert!(last < first, "loss went {first} -> {last}");
    let eval = evaluate(&trained.model, &split.test, &NoClock).unwrap();
    assert!(eval.mae <= eval.rmse);
    assert!(eval.mae < 0.05, "mae {}", eval.mae);
}

#[test]
fn evaluation_of_exact_and_offset_models() {
    let mut model = Forecaster::new(small_config()).unwrap();
    model.zero_parameters();
    let series = synthetic_series("B1", 30, 4);
    let mut samples = build_windows(&series, 12).unwrap();
    for s in &mut samples {
        s.target = s.window.iter().sum::<f64>() / 12.0;
    }
    let exact = evaluate(&model, &samples, &NoClock).unwrap();
    assert!(exact.mae < 1e-12 && exact.rmse < 1e-12);
    assert_eq!(exact.predicted.len(), 18);

    for s in &mut samples {
        s.target += 0.125;
    }
    let offset = evaluate(&model, &samples, &NoClock).unwrap();
    assert!((offset.mae - 0.125).abs() < 1e-12);
    assert!((offset.rmse - 0.125).abs() < 1e-12);

    let wide = build_windows(&series, 13).unwrap();
    assert!(matches!(evaluate(&model, &wide, &NoClock), Err(Error::Dimension { .. })));
}

#[test]
fn loocv_with_one_trial_matches_single_run() {
    let fleet: Vec<_> = synthetic_fleet(40).into_iter().take(2).collect();
    let settings = TrainSettings { trials: 1, ..quick() };
    let (results, summary) = run_loocv(&small_config(), &KOverrides::default(), &settings, &fleet, &NoClock).unwrap();
    assert_eq!(results.len(), 2);
    let split = loocv_split(&fleet, "B0005", 12).unwrap();
    let single = train_model(&small_config(), &settings, &split.train, Some(&split.test), settings.base_seed).unwrap();
    let eval = evaluate(&single.model, &split.test, &NoClock).unwrap();
    assert_eq!(results[0].report.mae, eval.mae);
    assert_eq!(results[0].report.rmse, eval.rmse);
    assert_eq!(results[0].report.mae_std, 0.0);
    assert_eq!(results[0].report.num_predictions, split.test.len());
    let avg = (results[0].report.mae + results[1].report.mae) / 2.0;
    assert_eq!(summary.average_mae, avg);
}

#[test]
fn loocv_honours_k_overrides_and_trial_statistics() {
    let fleet = synthetic_fleet(30);
    let settings = TrainSettings { epochs: 1, ..quick() };
    let (results, _) = run_loocv(&small_config(), &KOverrides::standard(), &settings, &fleet, &NoClock).unwrap();
    let ks: Vec<_> = results.iter().map(|r| (r.cell.test_id.as_str(), r.report.active_experts)).collect();
    assert_eq!(ks, [("B0005", 3), ("B0006", 3), ("B0007", 3), ("B0018", 1)]);
    for r in &results {
        assert_eq!(r.report.trials.len(), 2);
        assert_eq!(r.traces.len(), 2);
        let mean = r.report.trials.iter().map(|t| t.mae).sum::<f64>() / 2.0;
        assert!((mean - r.report.mae).abs() < 1e-15);
        assert!(r.report.trials.iter().all(|t| t.mae <= t.rmse));
        assert_eq!(r.report.trials[1].seed, 12);
    }
}

#[test]
fn parallel_style_collection_matches_sequential() {
    let fleet = synthetic_fleet(30);
    let settings = TrainSettings { epochs: 1, ..quick() };
    let cells = ablation_cells(&small_config(), &KOverrides::standard(), &fleet).unwrap();
    let study = Study::new(&fleet, settings, cells).unwrap();
    let mut runs: Vec<_> = study.jobs().into_iter().rev().map(|j| study.run_job(j, &NoClock).unwrap()).collect();
    runs.swap(0, 3);
    let shuffled = summarize(&study.collect(runs).unwrap());
    let sequential = summarize(&study.run(&NoClock).unwrap());
    assert_eq!(shuffled, sequential);
    assert_eq!(
        sequential.iter().map(|s| s.label.as_str()).collect::<Vec<_>>(),
        ABLATION_LABELS
    );
}

#[test]
fn sweep_k_contracts() {
    let fleet = synthetic_fleet(30);
    let settings = TrainSettings { epochs: 1, trials: 1, ..quick() };
    let one = sweep_k(&small_config(), &settings, &fleet, "B0006", &[1], &NoClock).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].label, "k=1");
    assert!(matches!(
        sweep_k(&small_config(), &settings, &fleet, "B0006", &[0], &NoClock),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        sweep_k(&small_config(), &settings, &fleet, "B0006", &[5], &NoClock),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        sweep_k(&small_config(), &settings, &fleet, "B9999", &[1], &NoClock),
        Err(Error::UnknownBattery { .. })
    ));
}

#[test]
fn ablation_rejects_double_disable_and_labels_variants() {
    let fleet = synthetic_fleet(30);
    let settings = TrainSettings { epochs: 1, trials: 1, ..quick() };
    let only_intra = ModelConfig { enable_inter: false, ..small_config() };
    assert!(run_ablation(&only_intra, &KOverrides::default(), &settings, &fleet, &NoClock).is_err());
    let summaries = run_ablation(&small_config(), &KOverrides::default(), &settings, &fleet, &NoClock).unwrap();
    assert_eq!(summaries.len(), 3);
    assert!(summaries.iter().all(|s| s.batteries.len() == 4));
}

#[test]
fn study_needs_two_batteries() {
    let fleet: Vec<_> = synthetic_fleet(30).into_iter().take(1).collect();
    assert!(run_loocv(&small_config(), &KOverrides::default(), &quick(), &fleet, &NoClock).is_err());
}
