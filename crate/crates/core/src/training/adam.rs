use crate::error::{Error, Result};

/// First and second moment estimates of Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// Optimizer hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("{name} = {b} must lie in (0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config(format!("eps {} must be positive", self.eps)));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update. A non-finite gradient aborts before any
/// parameter changes; `layer_of` names the offending parameter.
pub fn adam_step(
    params: &mut [f32],
    grads: &[f32],
    state: &mut AdamState,
    cfg: &AdamConfig,
    layer_of: impl Fn(usize) -> String,
) -> Result<()> {
    if params.len() != grads.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {}/{} moments",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient {
            layer: layer_of(index),
            index,
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        let g = g as f64;
        let mn = b1 * *m as f64 + (1.0 - b1) * g;
        let vn = b2 * *v as f64 + (1.0 - b2) * g * g;
        *m = mn as f32;
        *v = vn as f32;
        let update = cfg.lr * (mn / c1) / ((vn / c2).sqrt() + cfg.eps);
        *p = (*p as f64 - update) as f32;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn name(_: usize) -> String {
        "p".into()
    }

    #[test]
    fn first_step_moves_by_lr() {
        let cfg = AdamConfig::default();
        let mut p = [0.0f32];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, &cfg, name).unwrap();
        // m_hat = 1, v_hat = 1, step = lr / (1 + eps).
        let expect = -1e-4 / (1.0 + 1e-8);
        assert!((p[0] as f64 - expect).abs() < 1e-10);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_gradient_keeps_params() {
        let cfg = AdamConfig::default();
        let mut p = [0.5f32, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, &cfg, name).unwrap();
        assert_eq!(p, [0.5, -2.0]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn non_finite_gradient_names_layer() {
        let cfg = AdamConfig::default();
        let mut p = [1.0f32; 3];
        let mut s = AdamState::new(3);
        let err = adam_step(&mut p, &[0.0, f32::NAN, 1.0], &mut s, &cfg, |i| format!("layer{i}")).unwrap_err();
        match err {
            Error::NonFiniteGradient { layer, index } => {
                assert_eq!(layer, "layer1");
                assert_eq!(index, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p, [1.0; 3]);
        assert_eq!(s.step, 0);
    }

    #[test]
    fn config_validation() {
        assert!(AdamConfig { lr: 0.0, ..Default::default() }.validate().is_err());
        assert!(AdamConfig { beta1: 1.0, ..Default::default() }.validate().is_err());
        assert!(AdamConfig::default().validate().is_ok());
    }
}
