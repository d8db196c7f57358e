//! End-to-end training behavior on the synthetic dataset.

use qre_core::arch::Architecture;
use qre_core::data::{generate_synthetic, split, SynthConfig};
use qre_core::distortion::LevelFamily;
use qre_core::ensemble::{predict_batch, top_k};
use qre_core::mixup::MixPolicy;
use qre_core::schedule::{make_cycle_plan, CycleFamily};
use qre_core::trainer::{train_baseline, train_gspecialist, TrainConfig};

fn train_accuracy(run: &qre_core::trainer::TrainRun, ds: &qre_core::data::Dataset) -> f64 {
    let preds = predict_batch(&run.ensemble, ds.images()).unwrap();
    let hits = preds
        .iter()
        .zip(ds.labels())
        .filter(|(p, &l)| top_k(p, 1).unwrap()[0] == l)
        .count();
    hits as f64 / ds.len() as f64
}

#[test]
fn default_synthetic_task_is_learnable_in_three_epochs() {
    let ds = generate_synthetic(&SynthConfig::default()).unwrap();
    let (train, _test) = split(&ds, 0.2, 7).unwrap();
    let cfg = TrainConfig {
        arch: Architecture::default_cnn(3, 32, 32, 4).unwrap(),
        batch_size: 32,
        momentum: 0.9,
        seed: 7,
        policy: MixPolicy::default(),
        plan: make_cycle_plan(vec![CycleFamily::Pristine], 3, 0.05).unwrap(),
    };
    let run = train_gspecialist(&train, &cfg).unwrap();
    let acc = train_accuracy(&run, &train);
    assert!(acc >= 0.70, "3-epoch pristine train accuracy {acc}");
}

#[test]
fn one_mixup_cycle_reduces_training_loss() {
    let ds = generate_synthetic(&SynthConfig::default()).unwrap();
    let (train, _test) = split(&ds, 0.2, 7).unwrap();
    let cfg = TrainConfig {
        arch: Architecture::default_cnn(3, 32, 32, 4).unwrap(),
        batch_size: 32,
        momentum: 0.9,
        seed: 7,
        policy: MixPolicy::default(),
        plan: make_cycle_plan(
            vec![CycleFamily::Distortion(LevelFamily::default_noise())],
            4,
            0.05,
        )
        .unwrap(),
    };
    let run = train_gspecialist(&train, &cfg).unwrap();
    let first = run.log.rows.first().unwrap().loss;
    let snapshot = &run.ensemble.snapshots()[0];
    assert!(
        snapshot.final_train_loss < first,
        "loss should drop over one cycle: {first} -> {}",
        snapshot.final_train_loss
    );
    assert!(snapshot.final_train_loss < 0.5 * first);
}

#[test]
fn gspecialist_and_baseline_have_identical_iteration_counts() {
    let ds = generate_synthetic(&SynthConfig {
        per_class: 30,
        size: 16,
        ..SynthConfig::default()
    })
    .unwrap();
    let cfg = TrainConfig {
        arch: Architecture::default_cnn(3, 16, 16, 4).unwrap(),
        batch_size: 16,
        momentum: 0.9,
        seed: 3,
        policy: MixPolicy::default(),
        plan: make_cycle_plan(
            vec![
                CycleFamily::Distortion(LevelFamily::default_noise()),
                CycleFamily::Distortion(LevelFamily::default_blur()),
            ],
            2,
            0.05,
        )
        .unwrap(),
    };
    let g = train_gspecialist(&ds, &cfg).unwrap();
    let b = train_baseline(&ds, &cfg).unwrap();
    assert_eq!(g.log.rows.len(), b.log.rows.len());
    // identical schedules, down to the logged learning rates
    for (x, y) in g.log.rows.iter().zip(b.log.rows.iter()) {
        assert_eq!(x.iteration, y.iteration);
        assert_eq!(x.lr, y.lr);
    }
}
