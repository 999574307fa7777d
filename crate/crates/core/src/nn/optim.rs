use super::{Network, NnError, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// θ ← θ + step (critic maximizes its objective).
    Ascent,
    /// θ ← θ − step (generator minimizes its objective).
    Descent,
}

/// RMSProp state for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsProp {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
    accumulators: Vec<Tensor>,
}

impl RmsProp {
    pub fn new(net: &Network, learning_rate: f64, decay: f64, epsilon: f64) -> Self {
        Self {
            learning_rate,
            decay,
            epsilon,
            accumulators: net
                .params()
                .iter()
                .map(|p| Tensor::zeros(p.shape().to_vec()))
                .collect(),
        }
    }

    pub fn accumulators(&self) -> &[Tensor] {
        &self.accumulators
    }

    /// acc ← decay·acc + (1−decay)·g²;  θ ← θ ± lr·g / (√acc + ε).
    pub fn step(
        &mut self,
        net: &mut Network,
        grads: &[Tensor],
        direction: Direction,
    ) -> Result<(), NnError> {
        if grads.len() != net.params().len() || self.accumulators.len() != grads.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} gradients, {} accumulators for {} parameter tensors",
                grads.len(),
                self.accumulators.len(),
                net.params().len()
            )));
        }
        for ((p, g), a) in net.params().iter().zip(grads).zip(&self.accumulators) {
            if p.shape() != g.shape() || p.shape() != a.shape() {
                return Err(NnError::ShapeMismatch(format!(
                    "parameter {:?}, gradient {:?}, accumulator {:?}",
                    p.shape(),
                    g.shape(),
                    a.shape()
                )));
            }
        }
        let sign = match direction {
            Direction::Ascent => 1.0,
            Direction::Descent => -1.0,
        };
        let (lr, decay, eps) = (self.learning_rate, self.decay, self.epsilon);
        for ((p, g), a) in net
            .params_mut()
            .iter_mut()
            .zip(grads)
            .zip(&mut self.accumulators)
        {
            for ((theta, &gv), acc) in p.data_mut().iter_mut().zip(g.data()).zip(a.data_mut()) {
                let gv = gv as f64;
                let next = decay * *acc as f64 + (1.0 - decay) * gv * gv;
                *acc = next as f32;
                if lr != 0.0 {
                    *theta = (*theta as f64 + sign * lr * gv / (next.sqrt() + eps)) as f32;
                }
            }
        }
        Ok(())
    }
}

/// Free-function form of [`RmsProp::step`].
pub fn rmsprop_step(
    net: &mut Network,
    grads: &[Tensor],
    opt: &mut RmsProp,
    direction: Direction,
) -> Result<(), NnError> {
    opt.step(net, grads, direction)
}

/// Clamps every parameter into `[-c, c]`; values already inside are left
/// untouched.
pub fn clip_weights(net: &mut Network, c: f32) -> Result<(), NnError> {
    if !(c > 0.0) {
        return Err(NnError::NonpositiveClip(c));
    }
    for p in net.params_mut() {
        for v in p.data_mut() {
            if *v > c {
                *v = c;
            } else if *v < -c {
                *v = -c;
            }
        }
    }
    Ok(())
}
