use serde::{Deserialize, Serialize};

use super::{LstmParams, OptimizerKind};
use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const RMS_DECAY: f64 = 0.9;
const EPS: f64 = 1e-8;

/// Moment buffers, laid out like [`LstmParams::blocks`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64, params: &LstmParams) -> Self {
        let n = params.n_params();
        let (m, v) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::RmsProp => (Vec::new(), vec![0.0; n]),
            OptimizerKind::Adam => (vec![0.0; n], vec![0.0; n]),
        };
        Self {
            kind,
            learning_rate,
            step: 0,
            m,
            v,
        }
    }
}

/// Applies one update in place.
pub fn optimizer_step(params: &mut LstmParams, grads: &LstmParams, state: &mut OptimizerState) -> Result<()> {
    let n = params.n_params();
    if grads.n_params() != n {
        return Err(Error::Shape {
            expected: n,
            got: grads.n_params(),
        });
    }
    state.step += 1;
    let lr = state.learning_rate;
    let t = state.step as i32;
    let (c1, c2) = (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t));
    let mut idx = 0;
    for (theta, g) in params.blocks_mut().into_iter().zip(grads.blocks()) {
        for (p, &gi) in theta.iter_mut().zip(g) {
            match state.kind {
                OptimizerKind::Sgd => *p -= lr * gi,
                OptimizerKind::RmsProp => {
                    let v = &mut state.v[idx];
                    *v = RMS_DECAY * *v + (1.0 - RMS_DECAY) * gi * gi;
                    *p -= lr * gi / (v.sqrt() + EPS);
                }
                OptimizerKind::Adam => {
                    let m = &mut state.m[idx];
                    let v = &mut state.v[idx];
                    *m = BETA1 * *m + (1.0 - BETA1) * gi;
                    *v = BETA2 * *v + (1.0 - BETA2) * gi * gi;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + EPS);
                }
            }
            idx += 1;
        }
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("parameters after optimizer step".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64) -> LstmParams {
        let mut p = LstmParams::zeros(1, 1, 1);
        p.head_b[0] = v;
        p
    }

    fn run(kind: OptimizerKind) -> f64 {
        let mut p = one_param(1.0);
        let mut g = p.zeros_like();
        g.head_b[0] = 2.0;
        let mut st = OptimizerState::new(kind, 0.1, &p);
        optimizer_step(&mut p, &g, &mut st).unwrap();
        p.head_b[0]
    }

    #[test]
    fn first_steps() {
        assert!((run(OptimizerKind::Sgd) - 0.8).abs() < 1e-12);
        // bias-corrected first step moves by lr·sign(g)
        assert!((run(OptimizerKind::Adam) - 0.9).abs() < 1e-7);
        // v = 0.1·4, step = 0.1·2/√0.4
        assert!((run(OptimizerKind::RmsProp) - (1.0 - 0.2 / 0.4f64.sqrt())).abs() < 1e-7);
    }

    #[test]
    fn minimizes_quadratic() {
        for kind in OptimizerKind::ALL {
            let mut p = one_param(3.0);
            let mut st = OptimizerState::new(kind, 0.05, &p);
            for _ in 0..2000 {
                let mut g = p.zeros_like();
                g.head_b[0] = 2.0 * (p.head_b[0] - 1.0);
                optimizer_step(&mut p, &g, &mut st).unwrap();
            }
            assert!((p.head_b[0] - 1.0).abs() < 0.05, "{kind}: {}", p.head_b[0]);
        }
    }
}
