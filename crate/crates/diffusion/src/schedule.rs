//! Noise schedules: per-step β and the cumulative ᾱ products.

use ndarray::Array1;

use crate::DiffusionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Linear,
    Cosine,
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScheduleKind::Linear => write!(f, "linear"),
            ScheduleKind::Cosine => write!(f, "cosine"),
        }
    }
}

impl std::str::FromStr for ScheduleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear" => Ok(ScheduleKind::Linear),
            "cosine" => Ok(ScheduleKind::Cosine),
            other => Err(format!("unknown schedule kind {other:?} (expected linear or cosine)")),
        }
    }
}

/// β_t and ᾱ_t = ∏_{i≤t}(1−β_i) for t = 0..T−1, stored in `f64` regardless of
/// the model's element type so coefficient math never loses precision.
#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    beta: Array1<f64>,
    alpha_bar: Array1<f64>,
}

impl NoiseSchedule {
    /// Builds a schedule. Linear spaces β evenly from `beta1` to `beta2`;
    /// cosine ignores both and uses the squared-cosine ᾱ profile with β
    /// clipped at 0.999 (ᾱ is recomputed after clipping so its invariants
    /// hold exactly).
    pub fn make(
        kind: ScheduleKind,
        t_count: usize,
        beta1: f64,
        beta2: f64,
    ) -> Result<Self, DiffusionError> {
        if t_count == 0 {
            return Err(DiffusionError::BadParam("step count must be at least 1".into()));
        }
        let beta = match kind {
            ScheduleKind::Linear => {
                if !(0.0 < beta1 && beta1 <= beta2 && beta2 < 1.0) {
                    return Err(DiffusionError::BadParam(format!(
                        "linear schedule needs 0 < beta1 <= beta2 < 1, got ({beta1}, {beta2})"
                    )));
                }
                if t_count == 1 {
                    Array1::from_vec(vec![beta1])
                } else {
                    Array1::from_shape_fn(t_count, |i| {
                        beta1 + (beta2 - beta1) * i as f64 / (t_count - 1) as f64
                    })
                }
            }
            ScheduleKind::Cosine => {
                let s = 0.008;
                let f = |u: f64| ((u + s) / (1.0 + s) * std::f64::consts::FRAC_PI_2).cos().powi(2);
                let f0 = f(0.0);
                let mut beta = Array1::zeros(t_count);
                let mut prev = 1.0;
                for t in 0..t_count {
                    let cur = f((t + 1) as f64 / t_count as f64) / f0;
                    beta[t] = (1.0 - cur / prev).min(0.999);
                    prev = cur;
                }
                beta
            }
        };

        let mut alpha_bar = Array1::zeros(t_count);
        let mut prod = 1.0;
        for t in 0..t_count {
            prod *= 1.0 - beta[t];
            alpha_bar[t] = prod;
        }

        let sched = NoiseSchedule { kind, beta, alpha_bar };
        sched.check_invariants()?;
        Ok(sched)
    }

    fn check_invariants(&self) -> Result<(), DiffusionError> {
        let t_count = self.beta.len();
        for t in 0..t_count {
            if !(0.0 < self.beta[t] && self.beta[t] < 1.0) {
                return Err(DiffusionError::BadParam(format!(
                    "beta[{t}] = {} outside (0, 1)",
                    self.beta[t]
                )));
            }
            let prev = if t == 0 { 1.0 } else { self.alpha_bar[t - 1] };
            if !(self.alpha_bar[t] < prev) {
                return Err(DiffusionError::BadParam(format!(
                    "alpha_bar must be strictly decreasing at t = {t}"
                )));
            }
        }
        if !(self.alpha_bar[t_count - 1] > 0.0) {
            return Err(DiffusionError::BadParam("alpha_bar vanished at the last step".into()));
        }
        Ok(())
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn t_count(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &Array1<f64> {
        &self.beta
    }

    pub fn alpha_bar(&self) -> &Array1<f64> {
        &self.alpha_bar
    }

    /// ᾱ at step `t`, where the virtual step −1 (the clean image) is exactly 1.
    pub fn alpha_bar_at(&self, t: isize) -> Result<f64, DiffusionError> {
        if t == -1 {
            return Ok(1.0);
        }
        if t < 0 || t as usize >= self.t_count() {
            return Err(DiffusionError::BadTime { t, t_count: self.t_count() });
        }
        Ok(self.alpha_bar[t as usize])
    }
}
