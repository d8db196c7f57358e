//! Training orchestration: one continuous run split into cosine-annealed
//! cycles, each mixing its own distortion family into the batches, with a
//! parameter snapshot captured at every cycle boundary.

use crate::arch::{Architecture, ModelParams};
use crate::autodiff::{backward, loss_softmax_ce_on_tape, model_forward};
use crate::data::Dataset;
use crate::distortion::DistortionFamily;
use crate::error::{Error, Result};
use crate::image::LabelDistribution;
use crate::mixup::{mix_batch, MixPolicy, Sample};
use crate::optim::{sgd_step, Velocity};
use crate::rng::{tags, RngStream};
use crate::schedule::{lr_at, Cycle, CycleFamily, CyclePlan, SchedulePlan};
use crate::tensor::Tensor;

/// What a snapshot was specialized on during its cycle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Specialty {
    Pristine,
    Noise,
    Blur,
}

impl Specialty {
    pub fn name(self) -> &'static str {
        match self {
            Specialty::Pristine => "pristine",
            Specialty::Noise => "noise",
            Specialty::Blur => "blur",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "pristine" => Ok(Specialty::Pristine),
            "noise" => Ok(Specialty::Noise),
            "blur" => Ok(Specialty::Blur),
            other => Err(Error::Parse(format!("unknown specialty {other:?}"))),
        }
    }

    fn of(family: &CycleFamily) -> Specialty {
        match family {
            CycleFamily::Pristine => Specialty::Pristine,
            CycleFamily::Distortion(f) => match f.family() {
                DistortionFamily::GaussianNoise => Specialty::Noise,
                DistortionFamily::GaussianBlur => Specialty::Blur,
            },
        }
    }
}

/// One trained expert: a full parameter copy plus its cycle metadata.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub params: ModelParams,
    pub specialty: Specialty,
    /// 1-based cycle number within the training run.
    pub cycle_index: usize,
    pub final_train_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
    pub policy: MixPolicy,
    pub plan: CyclePlan,
}

/// One logged optimizer step.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub iteration: usize,
    pub cycle: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    /// CSV with header `iteration,cycle,lr,loss`. Floats use Rust's shortest
    /// round-trip formatting so the logged rate re-parses to the exact bits
    /// the optimizer used.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,cycle,lr,loss\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.iteration, row.cycle, row.lr, row.loss
            ));
        }
        out
    }
}

/// A training run's outputs: the ensemble and the per-iteration log.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub ensemble: crate::ensemble::EnsembleModel,
    pub log: TrainLog,
}

/// Mutable state carried across cycles of one training run: parameters and
/// momentum are continuous from cycle to cycle, and iteration/epoch counters
/// key the derived shuffle and augmentation streams.
pub struct TrainState {
    params: ModelParams,
    velocity: Velocity,
    schedule: SchedulePlan,
    root: RngStream,
    completed_iters: usize,
    completed_epochs: usize,
    log: TrainLog,
}

impl TrainState {
    pub fn new(train: &Dataset, cfg: &TrainConfig) -> Result<Self> {
        validate(train, cfg)?;
        let n = train.len();
        let batches_per_epoch = n.div_ceil(cfg.batch_size);
        let epochs = cfg.plan.cycles[0].epochs;
        let total_iters = cfg.plan.num_cycles() * epochs * batches_per_epoch;
        let schedule = SchedulePlan::new(
            cfg.plan.cycles[0].alpha0,
            total_iters,
            cfg.plan.num_cycles(),
        )?;
        let root = RngStream::from_seed(cfg.seed);
        let params = ModelParams::init(&cfg.arch, &root)?;
        let velocity = Velocity::zeros_like(&params);
        Ok(TrainState {
            params,
            velocity,
            schedule,
            root,
            completed_iters: 0,
            completed_epochs: 0,
            log: TrainLog::default(),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn schedule(&self) -> &SchedulePlan {
        &self.schedule
    }

    /// Fine-tune through one cycle and capture its snapshot. Parameters are
    /// carried in, updated in place, and copied out at the cycle end.
    pub fn run_cycle(
        &mut self,
        cycle: &Cycle,
        cycle_index: usize,
        train: &Dataset,
        cfg: &TrainConfig,
    ) -> Result<Snapshot> {
        if train.is_empty() {
            return Err(Error::InvalidArgument("training set is empty".into()));
        }
        let n = train.len();
        let k = train.num_classes();
        let mut last_loss = f64::NAN;

        for _ in 0..cycle.epochs {
            let mut order: Vec<usize> = (0..n).collect();
            self.root
                .derive(tags::EPOCH_SHUFFLE, self.completed_epochs as u64)
                .shuffle(&mut order);
            self.completed_epochs += 1;

            for chunk in order.chunks(cfg.batch_size) {
                let samples: Vec<Sample> = chunk
                    .iter()
                    .map(|&i| {
                        Ok(Sample {
                            image: train.images()[i].clone(),
                            label: LabelDistribution::one_hot(train.labels()[i], k)?,
                        })
                    })
                    .collect::<Result<_>>()?;

                // Pristine cycles feed the raw batch straight through.
                let samples = match &cycle.family {
                    CycleFamily::Pristine => samples,
                    CycleFamily::Distortion(family) => {
                        let mut aug = self
                            .root
                            .derive(tags::BATCH_AUG, self.completed_iters as u64);
                        mix_batch(&samples, family, &cfg.policy, &mut aug)?
                    }
                };

                let (batch, targets) = to_tensors(&cfg.arch, &samples)?;
                let (logits, mut tape) = model_forward(&self.params, &batch)?;
                let loss = loss_softmax_ce_on_tape(&mut tape, &logits, &targets)?;
                let grads = backward(&mut tape, &self.params)?;

                let t = self.completed_iters + 1;
                let lr = lr_at(t, &self.schedule)?;
                sgd_step(&mut self.params, &grads, lr, cfg.momentum, &mut self.velocity)?;
                self.completed_iters = t;
                self.log.rows.push(LogRow {
                    iteration: t,
                    cycle: cycle_index,
                    lr,
                    loss,
                });
                last_loss = loss;
            }
        }

        Ok(Snapshot {
            params: self.params.clone(),
            specialty: Specialty::of(&cycle.family),
            cycle_index,
            final_train_loss: last_loss,
        })
    }
}

fn validate(train: &Dataset, cfg: &TrainConfig) -> Result<()> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&cfg.momentum) {
        return Err(Error::InvalidArgument(format!(
            "momentum must lie in [0, 1), got {}",
            cfg.momentum
        )));
    }
    cfg.policy.validate()?;
    cfg.arch.validate()?;
    let (h, w, c) = train.dims().expect("non-empty dataset has dims");
    if (cfg.arch.in_channels, cfg.arch.in_height, cfg.arch.in_width) != (c, h, w) {
        return Err(Error::shape(
            "training data",
            format!(
                "{}x{}x{}",
                cfg.arch.in_channels, cfg.arch.in_height, cfg.arch.in_width
            ),
            format!("{c}x{h}x{w}"),
        ));
    }
    if cfg.arch.num_classes() != train.num_classes() {
        return Err(Error::shape(
            "class count",
            format!("{}", cfg.arch.num_classes()),
            format!("{}", train.num_classes()),
        ));
    }
    if cfg.plan.cycles.is_empty() {
        return Err(Error::InvalidArgument("cycle plan is empty".into()));
    }
    let epochs = cfg.plan.cycles[0].epochs;
    let alpha0 = cfg.plan.cycles[0].alpha0;
    for cycle in &cfg.plan.cycles {
        if cycle.epochs != epochs {
            return Err(Error::InvalidArgument(
                "all cycles must share one epoch count so iterations divide evenly".into(),
            ));
        }
        if cycle.alpha0 != alpha0 {
            return Err(Error::InvalidArgument(
                "all cycles must share one base rate under the global schedule".into(),
            ));
        }
    }
    Ok(())
}

fn to_tensors(arch: &Architecture, samples: &[Sample]) -> Result<(Tensor, Tensor)> {
    let n = samples.len();
    let (c, h, w) = (arch.in_channels, arch.in_height, arch.in_width);
    let k = arch.num_classes();
    let plane = c * h * w;
    let mut batch = vec![0.0; n * plane];
    let mut targets = vec![0.0; n * k];
    for (i, sample) in samples.iter().enumerate() {
        sample.image.write_chw(&mut batch[i * plane..(i + 1) * plane]);
        targets[i * k..(i + 1) * k].copy_from_slice(sample.label.probs());
    }
    Ok((
        Tensor::new(vec![n, c, h, w], batch)?,
        Tensor::new(vec![n, k], targets)?,
    ))
}

/// Train the quality-resilient ensemble: one continuous run over the plan's
/// cycles, snapshotting after each one.
pub fn train_gspecialist(train: &Dataset, cfg: &TrainConfig) -> Result<TrainRun> {
    train_with_plan(train, cfg, &cfg.plan)
}

/// Train the comparison arm: the identical schedule and cycle count, but
/// every cycle runs on pristine batches, so both runs cost the same number
/// of optimizer iterations.
pub fn train_baseline(train: &Dataset, cfg: &TrainConfig) -> Result<TrainRun> {
    let pristine = CyclePlan {
        cycles: cfg
            .plan
            .cycles
            .iter()
            .map(|c| Cycle {
                family: CycleFamily::Pristine,
                epochs: c.epochs,
                alpha0: c.alpha0,
            })
            .collect(),
    };
    train_with_plan(train, cfg, &pristine)
}

fn train_with_plan(train: &Dataset, cfg: &TrainConfig, plan: &CyclePlan) -> Result<TrainRun> {
    let effective = TrainConfig {
        plan: plan.clone(),
        ..cfg.clone()
    };
    let mut state = TrainState::new(train, &effective)?;
    let mut snapshots = Vec::with_capacity(plan.num_cycles());
    for (i, cycle) in plan.cycles.iter().enumerate() {
        snapshots.push(state.run_cycle(cycle, i + 1, train, &effective)?);
    }
    Ok(TrainRun {
        ensemble: crate::ensemble::EnsembleModel::new(snapshots)?,
        log: state.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};
    use crate::distortion::LevelFamily;
    use crate::schedule::make_cycle_plan;
    use crate::weights::encode_params;

    fn tiny_dataset() -> Dataset {
        generate_synthetic(&SynthConfig {
            per_class: 8,
            size: 8,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn tiny_config(families: Vec<CycleFamily>, epochs: usize) -> TrainConfig {
        TrainConfig {
            arch: Architecture::default_cnn(3, 8, 8, 4).unwrap(),
            batch_size: 8,
            momentum: 0.9,
            seed: 7,
            policy: MixPolicy::default(),
            plan: make_cycle_plan(families, epochs, 0.05).unwrap(),
        }
    }

    fn default_families() -> Vec<CycleFamily> {
        vec![
            CycleFamily::Distortion(LevelFamily::default_noise()),
            CycleFamily::Distortion(LevelFamily::default_blur()),
        ]
    }

    #[test]
    fn gspecialist_snapshot_count_and_specialties() {
        let ds = tiny_dataset();
        let cfg = tiny_config(default_families(), 1);
        let run = train_gspecialist(&ds, &cfg).unwrap();
        assert_eq!(run.ensemble.num_members(), 2);
        let specs: Vec<Specialty> = run
            .ensemble
            .snapshots()
            .iter()
            .map(|s| s.specialty)
            .collect();
        assert_eq!(specs, vec![Specialty::Noise, Specialty::Blur]);
        assert_eq!(run.ensemble.snapshots()[0].cycle_index, 1);
        assert_eq!(run.ensemble.snapshots()[1].cycle_index, 2);
    }

    #[test]
    fn single_pristine_plan_degenerates() {
        let ds = tiny_dataset();
        let cfg = tiny_config(vec![CycleFamily::Pristine], 1);
        let run = train_gspecialist(&ds, &cfg).unwrap();
        assert_eq!(run.ensemble.num_members(), 1);
        assert_eq!(run.ensemble.snapshots()[0].specialty, Specialty::Pristine);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let ds = tiny_dataset();
        let cfg = tiny_config(default_families(), 1);
        let a = train_gspecialist(&ds, &cfg).unwrap();
        let b = train_gspecialist(&ds, &cfg).unwrap();
        for (x, y) in a.ensemble.snapshots().iter().zip(b.ensemble.snapshots()) {
            assert_eq!(encode_params(&x.params), encode_params(&y.params));
        }
        assert_eq!(a.log.rows, b.log.rows);
    }

    #[test]
    fn baseline_matches_cost_and_specialties() {
        let ds = tiny_dataset();
        let cfg = tiny_config(default_families(), 1);
        let g = train_gspecialist(&ds, &cfg).unwrap();
        let b = train_baseline(&ds, &cfg).unwrap();
        assert_eq!(g.log.rows.len(), b.log.rows.len(), "cost parity");
        assert_eq!(b.ensemble.num_members(), 2);
        assert!(b
            .ensemble
            .snapshots()
            .iter()
            .all(|s| s.specialty == Specialty::Pristine));
    }

    #[test]
    fn baseline_ignores_mix_policy() {
        // Pristine cycles bypass augmentation entirely, so any mix policy
        // produces bitwise-identical training.
        let ds = tiny_dataset();
        let mut cfg = tiny_config(default_families(), 1);
        let a = train_baseline(&ds, &cfg).unwrap();
        cfg.policy = MixPolicy {
            lambda_law: crate::mixup::LambdaLaw::Fixed(0.5),
            pairing: crate::mixup::Pairing::ShuffledWithinBatch,
            draw_scope: crate::mixup::DrawScope::PerSample,
        };
        let b = train_baseline(&ds, &cfg).unwrap();
        for (x, y) in a.ensemble.snapshots().iter().zip(b.ensemble.snapshots()) {
            assert!(x.params.bits_eq(&y.params));
        }
    }

    #[test]
    fn lr_trace_equals_schedule() {
        let ds = tiny_dataset();
        let cfg = tiny_config(default_families(), 2);
        let run = train_gspecialist(&ds, &cfg).unwrap();
        let n_batches = ds.len().div_ceil(cfg.batch_size);
        let plan = SchedulePlan::new(0.05, 2 * 2 * n_batches, 2).unwrap();
        assert_eq!(run.log.rows.len(), plan.total_iters);
        for row in &run.log.rows {
            assert_eq!(row.lr, lr_at(row.iteration, &plan).unwrap());
            assert!(row.loss.is_finite());
        }
        // iterations are contiguous and 1-based
        for (i, row) in run.log.rows.iter().enumerate() {
            assert_eq!(row.iteration, i + 1);
        }
    }

    #[test]
    fn params_are_continuous_across_cycles() {
        let ds = tiny_dataset();
        let cfg = tiny_config(default_families(), 1);
        let mut state = TrainState::new(&ds, &cfg).unwrap();
        let snap1 = state
            .run_cycle(&cfg.plan.cycles[0], 1, &ds, &cfg)
            .unwrap();
        // the state the next cycle starts from is exactly the snapshot
        assert!(state.params().bits_eq(&snap1.params));
    }

    #[test]
    fn empty_dataset_rejected() {
        let ds = tiny_dataset();
        let cfg = tiny_config(default_families(), 1);
        let empty = Dataset::new(vec![], vec![], ds.class_names().to_vec()).unwrap();
        assert!(train_gspecialist(&empty, &cfg).is_err());
    }

    #[test]
    fn mismatched_plan_rejected() {
        let ds = tiny_dataset();
        let mut cfg = tiny_config(default_families(), 1);
        cfg.plan.cycles[1].epochs = 2;
        assert!(train_gspecialist(&ds, &cfg).is_err());
        let mut cfg = tiny_config(default_families(), 1);
        cfg.plan.cycles[1].alpha0 = 0.1;
        assert!(train_gspecialist(&ds, &cfg).is_err());
        let mut cfg = tiny_config(default_families(), 1);
        cfg.arch = Architecture::default_cnn(3, 16, 16, 4).unwrap();
        assert!(train_gspecialist(&ds, &cfg).is_err());
    }

    #[test]
    fn log_csv_round_trips_rates() {
        let log = TrainLog {
            rows: vec![LogRow {
                iteration: 1,
                cycle: 1,
                lr: 0.05 * ((std::f64::consts::PI * 3.0 / 7.0).cos() + 1.0) / 2.0,
                loss: 1.2345678901234567,
            }],
        };
        let csv = log.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "iteration,cycle,lr,loss");
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields[0], "1");
        assert_eq!(fields[1], "1");
        assert_eq!(fields[2].parse::<f64>().unwrap(), log.rows[0].lr);
        assert_eq!(fields[3].parse::<f64>().unwrap(), log.rows[0].loss);
    }
}
