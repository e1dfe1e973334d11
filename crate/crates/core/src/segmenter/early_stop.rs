use serde::{Deserialize, Serialize};

/// Plateau rule: stop once the validation loss has failed to improve on the best
/// value by more than `min_delta` for `patience` consecutive epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub min_delta: f64,
    pub best: f64,
    /// 1-based epoch of the best loss.
    pub best_epoch: usize,
    pub bad_epochs: usize,
    pub epoch: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: f64::INFINITY,
            best_epoch: 0,
            bad_epochs: 0,
            epoch: 0,
        }
    }

    pub fn update(&mut self, val_loss: f64) -> StopDecision {
        self.epoch += 1;
        let improved = val_loss < self.best - self.min_delta;
        if improved {
            self.best = val_loss;
            self.best_epoch = self.epoch;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        StopDecision {
            improved,
            stop: self.patience > 0 && self.bad_epochs >= self.patience,
        }
    }
}

/// Replays a loss sequence; returns `(stop_epoch, best_epoch)` when the rule fires.
pub fn early_stop_epoch(
    val_losses: &[f64],
    patience: usize,
    min_delta: f64,
) -> Option<(usize, usize)> {
    let mut es = EarlyStopping::new(patience, min_delta);
    for &l in val_losses {
        if es.update(l).stop {
            return Some((es.epoch, es.best_epoch));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_trace() {
        let losses = [1.0, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9];
        assert_eq!(early_stop_epoch(&losses, 3, 1e-4), Some((5, 2)));
    }

    #[test]
    fn strictly_decreasing_never_stops() {
        let losses: Vec<f64> = (0..50).map(|i| 1.0 - i as f64 * 0.01).collect();
        assert_eq!(early_stop_epoch(&losses, 10, 1e-4), None);
    }

    #[test]
    fn tiny_improvements_count_as_plateau() {
        let losses = [1.0, 0.99995, 0.99992, 0.99991];
        assert_eq!(early_stop_epoch(&losses, 3, 1e-4), Some((4, 1)));
    }
}
