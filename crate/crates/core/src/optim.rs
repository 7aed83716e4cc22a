//! SGD with momentum and the plateau-triggered learning-rate schedule.

use crate::error::{Error, Result};
use crate::layers::Param;

#[derive(Debug, Clone, Copy)]
pub struct SgdConfig {
    pub base_lr: f64,
    pub momentum: f64,
}

impl SgdConfig {
    pub fn new(base_lr: f64, momentum: f64) -> Result<SgdConfig> {
        if base_lr <= 0.0 || !base_lr.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "base_lr must be positive, got {base_lr}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must be in [0,1), got {momentum}"
            )));
        }
        Ok(SgdConfig { base_lr, momentum })
    }
}

/// Heavy-ball update for every parameter:
/// `v <- mu*v - (lr * lr_scale)*g`, `w <- w + v`, then gradients are zeroed
/// so the next accumulation starts clean.
pub fn sgd_step(params: &mut [&mut Param], cfg: SgdConfig, current_lr: f64) {
    for p in params.iter_mut() {
        let step = current_lr * p.lr_scale;
        let mu = cfg.momentum;
        for ((v, &g), w) in p
            .momentum_buf
            .data_mut()
            .iter_mut()
            .zip(p.grad.data())
            .zip(p.value.data_mut().iter_mut())
        {
            // Split into two statements so the vectorizer keeps the exact
            // evaluation order mu*v - step*g.
            *v = mu * *v - step * g;
            *w += *v;
        }
        p.grad.fill(0.0);
    }
}

/// Steps the learning rate down by `factor` after `patience` consecutive
/// epochs without the validation accuracy improving by more than
/// `min_delta` over the best seen so far, up to `max_drops` times.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub patience: usize,
    pub min_delta: f64,
    pub factor: f64,
    pub max_drops: usize,
    pub best_metric: f64,
    pub epochs_since_improvement: usize,
    pub current_lr: f64,
    drops: usize,
}

impl PlateauScheduler {
    pub const DEFAULT_PATIENCE: usize = 5;
    pub const DEFAULT_MIN_DELTA: f64 = 0.001;
    pub const DEFAULT_FACTOR: f64 = 0.1;
    pub const DEFAULT_MAX_DROPS: usize = 2;

    pub fn new(base_lr: f64) -> PlateauScheduler {
        PlateauScheduler::with_rule(
            base_lr,
            Self::DEFAULT_PATIENCE,
            Self::DEFAULT_MIN_DELTA,
            Self::DEFAULT_FACTOR,
            Self::DEFAULT_MAX_DROPS,
        )
    }

    pub fn with_rule(
        base_lr: f64,
        patience: usize,
        min_delta: f64,
        factor: f64,
        max_drops: usize,
    ) -> PlateauScheduler {
        assert!(patience > 0 && min_delta >= 0.0 && (0.0..1.0).contains(&factor));
        PlateauScheduler {
            patience,
            min_delta,
            factor,
            max_drops,
            best_metric: f64::NEG_INFINITY,
            epochs_since_improvement: 0,
            current_lr: base_lr,
            drops: 0,
        }
    }

    /// Feed one epoch's validation accuracy; returns the learning rate to
    /// use from now on.
    pub fn update(&mut self, val_accuracy: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&val_accuracy) {
            return Err(Error::InvalidConfig(format!(
                "validation accuracy {val_accuracy} outside [0,1]"
            )));
        }
        if val_accuracy > self.best_metric + self.min_delta {
            self.best_metric = val_accuracy;
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
            if self.epochs_since_improvement >= self.patience && self.drops < self.max_drops {
                self.current_lr *= self.factor;
                self.drops += 1;
                self.epochs_since_improvement = 0;
            }
        }
        Ok(self.current_lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn param(value: Vec<f64>) -> Param {
        Param::new("p", Tensor::from_vec(&[value.len()], value))
    }

    #[test]
    fn vanilla_step_matches_worked_example() {
        // mu=0, lr=0.1, w=1, g=2 -> w=0.8
        let mut p = param(vec![1.0]);
        p.grad = Tensor::from_vec(&[1], vec![2.0]);
        let cfg = SgdConfig::new(0.1, 0.0).unwrap();
        sgd_step(&mut [&mut p], cfg, 0.1);
        assert!((p.value.data()[0] - 0.8).abs() < 1e-15);
        assert_eq!(p.grad.data()[0], 0.0);
    }

    #[test]
    fn momentum_accumulates_across_steps() {
        // mu=0.9, lr=0.1, g=1 twice: v=-0.1 then v=-0.19.
        let mut p = param(vec![0.0]);
        let cfg = SgdConfig::new(0.1, 0.9).unwrap();
        p.grad = Tensor::from_vec(&[1], vec![1.0]);
        sgd_step(&mut [&mut p], cfg, 0.1);
        assert!((p.momentum_buf.data()[0] - -0.1).abs() < 1e-15);
        assert!((p.value.data()[0] - -0.1).abs() < 1e-15);
        p.grad = Tensor::from_vec(&[1], vec![1.0]);
        sgd_step(&mut [&mut p], cfg, 0.1);
        assert!((p.momentum_buf.data()[0] - -0.19).abs() < 1e-15);
        assert!((p.value.data()[0] - -0.29).abs() < 1e-15);
    }

    #[test]
    fn lr_scale_is_exactly_linear_at_zero_momentum() {
        let cfg = SgdConfig::new(0.05, 0.0).unwrap();
        let mut a = param(vec![1.0]);
        a.grad = Tensor::from_vec(&[1], vec![0.3]);
        let mut b = a.clone();
        b.lr_scale = 4.0;
        sgd_step(&mut [&mut a], cfg, 0.05);
        sgd_step(&mut [&mut b], cfg, 0.05);
        let da = 1.0 - a.value.data()[0];
        let db = 1.0 - b.value.data()[0];
        assert_eq!((4.0 * da).to_bits(), db.to_bits());
    }

    #[test]
    fn quadratic_loss_descends_monotonically() {
        // L(w) = 0.5 w^2, g = w; lr below curvature bound 2.
        let cfg = SgdConfig::new(0.3, 0.0).unwrap();
        let mut p = param(vec![5.0]);
        let mut losses = vec![];
        for _ in 0..20 {
            let w = p.value.data()[0];
            losses.push(0.5 * w * w);
            p.grad = Tensor::from_vec(&[1], vec![w]);
            sgd_step(&mut [&mut p], cfg, 0.3);
        }
        for pair in losses.windows(2) {
            assert!(pair[1] < pair[0], "loss did not descend: {pair:?}");
        }
    }

    #[test]
    fn plateau_drops_after_patience_non_improving_epochs() {
        // patience=3, accs [0.5, 0.6, 0.6, 0.6, 0.6]: drop lands on the
        // third consecutive non-improving epoch (the fifth update).
        let mut s = PlateauScheduler::with_rule(1.0, 3, 0.001, 0.1, 2);
        assert_eq!(s.update(0.5).unwrap(), 1.0);
        assert_eq!(s.update(0.6).unwrap(), 1.0);
        assert_eq!(s.update(0.6).unwrap(), 1.0);
        assert_eq!(s.update(0.6).unwrap(), 1.0);
        let lr = s.update(0.6).unwrap();
        assert!((lr - 0.1).abs() < 1e-15);
    }

    #[test]
    fn improving_accuracy_never_drops_lr() {
        let mut s = PlateauScheduler::new(0.01);
        for i in 0..40 {
            let lr = s.update(0.01 * (i as f64 + 1.0)).unwrap();
            assert_eq!(lr, 0.01);
        }
    }

    #[test]
    fn two_drops_reach_one_hundredth_then_hold() {
        let mut s = PlateauScheduler::with_rule(1.0, 2, 0.001, 0.1, 2);
        let _ = s.update(0.9).unwrap();
        let mut last = 0.0;
        for _ in 0..20 {
            last = s.update(0.5).unwrap();
        }
        assert!((last - 0.01).abs() < 1e-15, "lr {last}");
    }

    #[test]
    fn lr_is_non_increasing_over_any_trace() {
        let mut s = PlateauScheduler::new(0.5);
        let mut rng = crate::rng::Rng::new(40);
        let mut prev = s.current_lr;
        for _ in 0..200 {
            let lr = s.update(rng.next_f64()).unwrap();
            assert!(lr <= prev);
            prev = lr;
        }
    }

    #[test]
    fn rejects_out_of_range_accuracy() {
        let mut s = PlateauScheduler::new(0.1);
        assert!(s.update(1.5).is_err());
        assert!(s.update(-0.1).is_err());
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(SgdConfig::new(0.0, 0.9).is_err());
        assert!(SgdConfig::new(0.1, 1.0).is_err());
        assert!(SgdConfig::new(0.1, 0.9).is_ok());
    }
}
