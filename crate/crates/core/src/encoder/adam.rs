use super::EncoderParams;
use crate::error::{IcsError, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig<T> {
    /// Initial learning rate.
    pub lr0: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    /// Decoupled weight decay coefficient (0 disables it).
    pub weight_decay: T,
}

impl<T: Scalar> Default for AdamConfig<T> {
    fn default() -> Self {
        AdamConfig {
            lr0: T::lit(1e-4),
            beta1: T::lit(0.9),
            beta2: T::lit(0.99),
            eps: T::lit(1e-8),
            weight_decay: T::zero(),
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: EncoderParams<T>,
    pub v: EncoderParams<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &EncoderParams<T>) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Scalar>(
    params: &mut EncoderParams<T>,
    state: &mut AdamState<T>,
    grads: &EncoderParams<T>,
    lr: T,
    cfg: &AdamConfig<T>,
) -> Result<()> {
    if params.n_params() != grads.n_params() || params.n_params() != state.m.n_params() {
        return Err(IcsError::Argument(
            "Adam moment and gradient shapes differ from parameters".into(),
        ));
    }
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let bc1 = T::one() - cfg.beta1.powi(t);
    let bc2 = T::one() - cfg.beta2.powi(t);
    let one = T::one();

    let moments = state.m.values_mut().zip(state.v.values_mut());
    for ((theta, (m, v)), &g) in params.values_mut().zip(moments).zip(grads.values()) {
        *m = cfg.beta1 * *m + (one - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (one - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        let decay = cfg.weight_decay * *theta;
        *theta = *theta - lr * (m_hat / (v_hat.sqrt() + cfg.eps) + decay);
    }
    Ok(())
}
