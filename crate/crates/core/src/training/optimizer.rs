use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Network;

/// SGD with Nesterov momentum and L2 weight decay.
///
/// Per parameter: `g' = g + wd·p`, `v = μ·v + g'`, `p -= lr·(g' + μ·v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    /// One buffer per parameter tensor, in [`Network::params`] order.
    pub velocity: Vec<Vec<f32>>,
}

impl Sgd {
    pub fn new(net: &Network<f32>, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            momentum,
            weight_decay,
            velocity: net.params().iter().map(|(_, p)| vec![0.0; p.len()]).collect(),
        }
    }

    pub fn step(&mut self, net: &mut Network<f32>, grads: &Network<f32>, lr: f64) -> Result<()> {
        let grads = grads.params();
        let mut params = net.params_mut();
        if params.len() != grads.len() || params.len() != self.velocity.len() {
            return Err(Error::ShapeMismatch("optimizer state does not match the network".into()));
        }
        let (mu, wd, lr) = (self.momentum as f32, self.weight_decay as f32, lr as f32);
        for (((_, p), (_, g)), v) in params.iter_mut().zip(&grads).zip(&mut self.velocity) {
            for ((pi, &gi), vi) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
                let d = gi + wd * *pi;
                *vi = mu * *vi + d;
                *pi -= lr * (d + mu * *vi);
            }
        }
        Ok(())
    }
}

/// `dst += src`, parameter by parameter.
pub fn accumulate_grads(dst: &mut Network<f32>, src: &Network<f32>) {
    for ((_, d), (_, s)) in dst.params_mut().into_iter().zip(src.params()) {
        d.iter_mut().zip(s.iter()).for_each(|(a, b)| *a += b);
    }
}

pub fn scale_grads(g: &mut Network<f32>, f: f32) {
    for (_, p) in g.params_mut() {
        p.iter_mut().for_each(|v| *v *= f);
    }
}
