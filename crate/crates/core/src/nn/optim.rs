use super::NnError;

/// Bias-corrected Adam state for one flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub lr: f64,
}

impl AdamState {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { step: 0, m: vec![0.0; n], v: vec![0.0; n], beta1: 0.9, beta2: 0.999, eps: 1e-8, lr }
    }
}

/// One Adam update of `params` in place.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64]) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let mh = *m / c1;
        let vh = *v / c2;
        *p -= state.lr * mh / (vh.sqrt() + state.eps);
    }
}

/// Multi-step decay: the rate is multiplied by `factor` at each milestone reached.
#[derive(Clone, Debug, PartialEq)]
pub struct LrSchedule {
    pub base: f64,
    pub milestones: Vec<usize>,
    pub factor: f64,
}

impl LrSchedule {
    pub fn constant(base: f64) -> Self {
        Self { base, milestones: Vec::new(), factor: 0.1 }
    }

    pub fn rate(&self, epoch: usize) -> f64 {
        let hits = self.milestones.iter().filter(|&&m| epoch >= m).count();
        self.base * self.factor.powi(hits as i32)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub milestones: Vec<usize>,
    pub decay: f64,
    pub patience: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 20,
            lr: 1e-4,
            milestones: Vec::new(),
            decay: 0.1,
            patience: 500,
            alpha: 0.5,
            beta: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Weights must lie in `[0, 1]` and not both vanish.
    pub fn validate(&self) -> Result<(), NnError> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.alpha) || !unit(self.beta) || self.alpha + self.beta <= 0.0 {
            return Err(NnError::Config(format!("loss weights alpha={} beta={}", self.alpha, self.beta)));
        }
        if self.patience == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(NnError::Config("epochs, batch size and patience must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.decay > 0.0) {
            return Err(NnError::Config(format!("learning rate {} decay {}", self.lr, self.decay)));
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule { base: self.lr, milestones: self.milestones.clone(), factor: self.decay }
    }
}
