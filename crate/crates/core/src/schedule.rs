//! Cyclic cosine-annealed learning-rate schedule with snapshot points.
//!
//! Training is split into `M` equal cycles of `T/M` iterations. Within each
//! cycle the rate anneals from `alpha0` down along a shifted cosine:
//!
//! ```text
//! alpha(t) = alpha0/2 * (cos(pi * ((t-1) mod (T/M)) / (T/M)) + 1)
//! ```
//!
//! so every cycle starts at exactly `alpha0` and a snapshot is taken at each
//! cycle boundary.

use std::f64::consts::PI;

use crate::distortion::LevelFamily;
use crate::error::{Error, Result};

/// Global schedule: base rate, total iterations, and cycle count.
/// `total_iters` must divide evenly into `cycles`.
#[derive(Clone, Debug, PartialEq)]
pub struct SchedulePlan {
    pub alpha0: f64,
    pub total_iters: usize,
    pub cycles: usize,
}

impl SchedulePlan {
    pub fn new(alpha0: f64, total_iters: usize, cycles: usize) -> Result<Self> {
        if !(alpha0.is_finite() && alpha0 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha0 must be positive, got {alpha0}"
            )));
        }
        if cycles == 0 || total_iters < cycles {
            return Err(Error::InvalidArgument(format!(
                "need total iterations >= cycles >= 1, got T={total_iters}, M={cycles}"
            )));
        }
        if total_iters % cycles != 0 {
            return Err(Error::InvalidArgument(format!(
                "total iterations {total_iters} must be divisible by cycle count {cycles}"
            )));
        }
        Ok(SchedulePlan {
            alpha0,
            total_iters,
            cycles,
        })
    }

    pub fn period(&self) -> usize {
        self.total_iters / self.cycles
    }
}

/// Learning rate at 1-based iteration `t`.
pub fn lr_at(t: usize, plan: &SchedulePlan) -> Result<f64> {
    if t < 1 || t > plan.total_iters {
        return Err(Error::InvalidArgument(format!(
            "iteration {t} outside schedule range 1..={}",
            plan.total_iters
        )));
    }
    let period = plan.period();
    let phase = (t - 1) % period;
    Ok(plan.alpha0 / 2.0 * ((PI * phase as f64 / period as f64).cos() + 1.0))
}

/// Iterations after which a snapshot is captured: `{m * T/M : m = 1..M}`.
pub fn snapshot_points(plan: &SchedulePlan) -> Vec<usize> {
    let period = plan.period();
    (1..=plan.cycles).map(|m| m * period).collect()
}

/// One training cycle: the distortion family mixed into its batches (or
/// pristine pass-through), its epoch count, and its base rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Cycle {
    pub family: CycleFamily,
    pub epochs: usize,
    pub alpha0: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum CycleFamily {
    Pristine,
    Distortion(LevelFamily),
}

impl CycleFamily {
    pub fn name(&self) -> &'static str {
        match self {
            CycleFamily::Pristine => "pristine",
            CycleFamily::Distortion(f) => f.family().name(),
        }
    }
}

/// The full training protocol: an ordered list of cycles.
#[derive(Clone, Debug, PartialEq)]
pub struct CyclePlan {
    pub cycles: Vec<Cycle>,
}

impl CyclePlan {
    pub fn num_cycles(&self) -> usize {
        self.cycles.len()
    }
}

/// Build a plan with one cycle per family, all sharing the same epoch count
/// and base rate.
pub fn make_cycle_plan(
    families: Vec<CycleFamily>,
    epochs_per_cycle: usize,
    alpha0: f64,
) -> Result<CyclePlan> {
    if families.is_empty() {
        return Err(Error::InvalidArgument(
            "cycle plan requires at least one family".into(),
        ));
    }
    if epochs_per_cycle == 0 {
        return Err(Error::InvalidArgument(
            "epochs per cycle must be >= 1".into(),
        ));
    }
    if !(alpha0.is_finite() && alpha0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha0 must be positive, got {alpha0}"
        )));
    }
    Ok(CyclePlan {
        cycles: families
            .into_iter()
            .map(|family| Cycle {
                family,
                epochs: epochs_per_cycle,
                alpha0,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_validation() {
        assert!(SchedulePlan::new(0.1, 100, 2).is_ok());
        assert!(SchedulePlan::new(0.0, 100, 2).is_err());
        assert!(SchedulePlan::new(-0.1, 100, 2).is_err());
        assert!(SchedulePlan::new(0.1, 100, 0).is_err());
        assert!(SchedulePlan::new(0.1, 1, 2).is_err());
        // T not divisible by M is rejected rather than rounded
        assert!(SchedulePlan::new(0.1, 101, 2).is_err());
    }

    #[test]
    fn cycle_start_is_exactly_alpha0() {
        let plan = SchedulePlan::new(0.1, 100, 2).unwrap();
        assert_eq!(lr_at(1, &plan).unwrap(), 0.1);
        assert_eq!(lr_at(51, &plan).unwrap(), 0.1);
    }

    #[test]
    fn quarter_period_is_half_alpha0() {
        let plan = SchedulePlan::new(0.1, 100, 2).unwrap();
        // t=26: phase 25 of 50, cos(pi/2) = 0
        let lr = lr_at(26, &plan).unwrap();
        assert!((lr - 0.05).abs() < 1e-16, "lr {lr}");
    }

    #[test]
    fn cycle_end_matches_closed_form() {
        let plan = SchedulePlan::new(0.1, 100, 2).unwrap();
        // t=50: phase 49 of 50
        let lr = lr_at(50, &plan).unwrap();
        let expected = 0.05 * ((PI * 49.0 / 50.0).cos() + 1.0);
        assert_eq!(lr, expected);
        assert!((lr - 9.866_357_858e-5).abs() < 1e-12, "lr {lr}");
    }

    #[test]
    fn out_of_range_iteration_rejected() {
        let plan = SchedulePlan::new(0.1, 100, 2).unwrap();
        assert!(lr_at(0, &plan).is_err());
        assert!(lr_at(101, &plan).is_err());
    }

    #[test]
    fn rate_is_periodic_across_cycles_and_decreasing_within() {
        let plan = SchedulePlan::new(0.3, 120, 3).unwrap();
        let period = plan.period();
        for t in 1..=period {
            let base = lr_at(t, &plan).unwrap();
            for m in 1..plan.cycles {
                assert_eq!(lr_at(t + m * period, &plan).unwrap(), base);
            }
        }
        for t in 1..period {
            assert!(lr_at(t, &plan).unwrap() > lr_at(t + 1, &plan).unwrap());
        }
        // strictly positive everywhere
        for t in 1..=plan.total_iters {
            assert!(lr_at(t, &plan).unwrap() > 0.0);
        }
    }

    #[test]
    fn snapshot_points_are_cycle_boundaries() {
        assert_eq!(
            snapshot_points(&SchedulePlan::new(0.1, 100, 2).unwrap()),
            vec![50, 100]
        );
        assert_eq!(
            snapshot_points(&SchedulePlan::new(0.1, 64, 1).unwrap()),
            vec![64]
        );
        assert_eq!(
            snapshot_points(&SchedulePlan::new(0.1, 128, 4).unwrap()),
            vec![32, 64, 96, 128]
        );
    }

    #[test]
    fn snapshots_precede_rate_resets() {
        let plan = SchedulePlan::new(0.2, 90, 3).unwrap();
        for &p in &snapshot_points(&plan) {
            if p < plan.total_iters {
                assert_eq!(lr_at(p + 1, &plan).unwrap(), plan.alpha0);
            }
        }
    }

    #[test]
    fn make_cycle_plan_defaults() {
        let plan = make_cycle_plan(
            vec![
                CycleFamily::Distortion(LevelFamily::default_noise()),
                CycleFamily::Distortion(LevelFamily::default_blur()),
            ],
            32,
            0.05,
        )
        .unwrap();
        assert_eq!(plan.num_cycles(), 2);
        assert_eq!(plan.cycles[0].family.name(), "noise");
        assert_eq!(plan.cycles[1].family.name(), "blur");
        assert!(plan.cycles.iter().all(|c| c.epochs == 32));

        let single = make_cycle_plan(vec![CycleFamily::Pristine], 5, 0.1).unwrap();
        assert_eq!(single.num_cycles(), 1);
        let one_epoch = make_cycle_plan(
            vec![CycleFamily::Distortion(LevelFamily::default_blur())],
            1,
            0.1,
        )
        .unwrap();
        assert_eq!(one_epoch.cycles[0].epochs, 1);

        assert!(make_cycle_plan(vec![], 4, 0.1).is_err());
        assert!(make_cycle_plan(vec![CycleFamily::Pristine], 0, 0.1).is_err());
    }
}
