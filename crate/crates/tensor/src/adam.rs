//! Adam with global gradient-norm clipping.

use ndarray::ArrayD;

use crate::nn::Params;
use crate::Scalar;

/// Adam optimiser state. Moment buffers are aligned with the parameter store
/// by index; parameters whose gradient is absent in a step keep their moments
/// untouched.
pub struct Adam<T: Scalar> {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    clip_norm: Option<f64>,
    step: u64,
    m: Vec<ArrayD<T>>,
    v: Vec<ArrayD<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &Params<T>, lr: f64, clip_norm: Option<f64>) -> Self {
        let m = params.iter().map(|(_, p)| ArrayD::zeros(p.raw_dim())).collect();
        let v = params.iter().map(|(_, p)| ArrayD::zeros(p.raw_dim())).collect();
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm, step: 0, m, v }
    }

    /// Applies one update. Returns the global gradient norm before clipping.
    pub fn step(&mut self, params: &mut Params<T>, grads: &[Option<ArrayD<T>>]) -> f64 {
        assert!(grads.len() == params.len(), "gradient list misaligned with parameter store");
        let mut sq_sum = 0.0f64;
        for g in grads.iter().flatten() {
            sq_sum += g.iter().map(|v| v.into_f64() * v.into_f64()).sum::<f64>();
        }
        let norm = sq_sum.sqrt();
        let scale = match self.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        let scale_t = T::of_f64(scale);

        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2) = (T::of_f64(self.beta1), T::of_f64(self.beta2));
        let (ob1, ob2) = (T::of_f64(1.0 - self.beta1), T::of_f64(1.0 - self.beta2));
        let lr_t = T::of_f64(self.lr / bc1);
        let vs = T::of_f64(1.0 / bc2);
        let eps = T::of_f64(self.eps);

        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let p = params.get_mut(crate::nn::param_id_from_index(i));
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|p, m, v, &g| {
                    let gc = g * scale_t;
                    *m = b1 * *m + ob1 * gc;
                    *v = b2 * *v + ob2 * gc * gc;
                    let vhat = (*v * vs).sqrt() + eps;
                    *p = *p - lr_t * *m / vhat;
                });
        }
        norm
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Moment buffers in parameter-store order, for checkpointing.
    pub fn moments(&self) -> (&[ArrayD<T>], &[ArrayD<T>]) {
        (&self.m, &self.v)
    }

    /// Rebuilds optimiser state saved by a checkpoint.
    pub fn from_state(
        params: &Params<T>,
        lr: f64,
        clip_norm: Option<f64>,
        step: u64,
        m: Vec<ArrayD<T>>,
        v: Vec<ArrayD<T>>,
    ) -> Self {
        assert!(
            m.len() == params.len() && v.len() == params.len(),
            "optimiser state misaligned with parameter store"
        );
        for ((mi, vi), (_, p)) in m.iter().zip(&v).zip(params.iter()) {
            assert!(
                mi.shape() == p.shape() && vi.shape() == p.shape(),
                "optimiser moment shape mismatch"
            );
        }
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm, step, m, v }
    }
}
