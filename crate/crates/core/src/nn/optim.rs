use super::Tensor;
use crate::error::{Error, Result};

/// Momentum update: `v <- momentum * v + g`, then `p <- p - lr * v`.
pub fn sgdm_step(
    params: &mut [&mut Tensor],
    velocities: &mut [Tensor],
    grads: &[Tensor],
    learning_rate: f64,
    momentum: f64,
) -> Result<()> {
    if params.len() != velocities.len() || params.len() != grads.len() {
        return Err(Error::invalid(format!(
            "{} parameters, {} velocities, {} gradients",
            params.len(),
            velocities.len(),
            grads.len()
        )));
    }
    for ((p, v), g) in params.iter().zip(velocities.iter()).zip(grads) {
        if p.shape() != v.shape() || p.shape() != g.shape() {
            return Err(Error::invalid(format!(
                "shape mismatch: parameter {:?}, velocity {:?}, gradient {:?}",
                p.shape(),
                v.shape(),
                g.shape()
            )));
        }
    }
    for ((p, v), g) in params.iter_mut().zip(velocities.iter_mut()).zip(grads) {
        for ((pv, vv), gv) in p.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            *vv = momentum * *vv + gv;
            *pv -= learning_rate * *vv;
        }
    }
    Ok(())
}
