use crate::error::{Error, Result};
use crate::splat::{ParamGroup, SplatParams};

/// First and second moments for every parameter group, row-congruent with
/// the cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: SplatParams,
    pub v: SplatParams,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: SplatParams::zeros(n),
            v: SplatParams::zeros(n),
            step: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Appends rows with zero moments.
    pub fn push_zero_rows(&mut self, count: usize) {
        self.m.push_zero_rows(count);
        self.v.push_zero_rows(count);
    }

    pub fn retain_rows(&mut self, keep: &[bool]) {
        self.m.retain_rows(keep);
        self.v.retain_rows(keep);
    }

    /// One bias-corrected update of every group, `lr(group)` giving its rate.
    pub fn update(
        &mut self,
        params: &mut SplatParams,
        grads: &SplatParams,
        lr: impl Fn(ParamGroup) -> f64,
    ) -> Result<()> {
        if params.len() != self.len() || grads.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "optimizer has {} rows, parameters {}, gradients {}",
                self.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        for group in ParamGroup::ALL {
            adam_step(
                params.group_mut(group),
                grads.group(group),
                self.m.group_mut(group),
                self.v.group_mut(group),
                lr(group),
                self.step,
                self.beta1,
                self.beta2,
                self.eps,
            );
        }
        Ok(())
    }
}

/// Bias-corrected adaptive-moment update of one flat group. `step` is the
/// 1-based count including this update.
#[allow(clippy::too_many_arguments)]
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    assert!(params.len() == grads.len() && m.len() == params.len() && v.len() == params.len());
    let c1 = 1.0 - beta1.powf(step as f64);
    let c2 = 1.0 - beta2.powf(step as f64);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Log-linear interpolation from `lr_initial` to `lr_final` over
/// `max_steps`; `step` is clamped into range.
pub fn lr_schedule(step: usize, lr_initial: f64, lr_final: f64, max_steps: usize) -> f64 {
    if max_steps == 0 {
        return lr_final;
    }
    let t = (step.min(max_steps)) as f64 / max_steps as f64;
    lr_initial * (lr_final / lr_initial).powf(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![1.0, -2.0];
        let mut m = vec![0.5, 0.1];
        let mut v = vec![0.2, 0.3];
        adam_step(&mut p, &[0.0, 0.0], &mut m, &mut v, 0.1, 3, 0.9, 0.999, 1e-15);
        assert_eq!(m, vec![0.45, 0.09000000000000001]);
        assert!(v[0] < 0.2 && v[1] < 0.3);
        // moments are nonzero so parameters still move; from fresh state they do not
        let mut p2 = vec![1.0];
        let (mut m2, mut v2) = (vec![0.0], vec![0.0]);
        adam_step(&mut p2, &[0.0], &mut m2, &mut v2, 0.1, 1, 0.9, 0.999, 1e-15);
        assert_eq!(p2, vec![1.0]);
        let _ = p;
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        // m̂ = g, v̂ = g², so the update is −lr·g/(|g| + ε).
        for g in [3.0, -0.25, 1e-3] {
            let mut p = vec![0.0];
            let (mut m, mut v) = (vec![0.0], vec![0.0]);
            adam_step(&mut p, &[g], &mut m, &mut v, 0.01, 1, 0.9, 0.999, 1e-8);
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((p[0] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_gradient_approaches_lr() {
        let mut p = vec![0.0];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        let mut last = 0.0;
        for step in 1..=5000 {
            let before = p[0];
            adam_step(&mut p, &[0.7], &mut m, &mut v, 0.01, step, 0.9, 0.999, 1e-15);
            last = before - p[0];
        }
        assert!((last - 0.01).abs() < 1e-9);
    }

    #[test]
    fn schedule_end_points() {
        assert_eq!(lr_schedule(0, 1e-2, 1e-4, 100), 1e-2);
        assert!((lr_schedule(100, 1e-2, 1e-4, 100) - 1e-4).abs() < 1e-18);
        assert!((lr_schedule(50, 1e-2, 1e-4, 100) - 1e-3).abs() < 1e-15);
        assert!((lr_schedule(500, 1e-2, 1e-4, 100) - 1e-4).abs() < 1e-18);
    }
}
