/// Patience-based stopping on a metric where larger is better. Only a
/// strict improvement resets the counter.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: None, stale: 0 }
    }

    /// Feeds the metric of `epoch` (1-based). NaN never counts as an
    /// improvement.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> Verdict {
        let improved = match self.best {
            None => !metric.is_nan(),
            Some((_, b)) => metric > b,
        };
        if improved {
            self.best = Some((epoch, metric));
            self.stale = 0;
            return Verdict::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Continue
        }
    }

    /// `(epoch, metric)` of the best observation so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}
