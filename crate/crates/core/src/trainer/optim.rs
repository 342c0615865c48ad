use crate::error::{Error, Result};
use crate::numcore::{NumArray, Real};

use super::config::{OptimizerKind, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};

/// First and second moment estimates, one array per parameter array.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<NumArray<T>>,
    pub v: Vec<NumArray<T>>,
    pub t: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Optimizer<T> {
    Sgd { learning_rate: f64 },
    Adam { learning_rate: f64, state: AdamState<T> },
}

impl<T: Real> Optimizer<T> {
    /// Fresh optimizer for parameters shaped like `params`.
    pub fn new(kind: OptimizerKind, learning_rate: f64, params: &[&NumArray<T>]) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { learning_rate },
            OptimizerKind::Adam => {
                let zeros: Vec<NumArray<T>> = params.iter().map(|p| NumArray::zeros(p.shape().to_vec())).collect();
                Optimizer::Adam {
                    learning_rate,
                    state: AdamState {
                        m: zeros.clone(),
                        v: zeros,
                        t: 0,
                    },
                }
            }
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        match self {
            Optimizer::Sgd { .. } => OptimizerKind::Sgd,
            Optimizer::Adam { .. } => OptimizerKind::Adam,
        }
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        match self {
            Optimizer::Sgd { learning_rate } | Optimizer::Adam { learning_rate, .. } => *learning_rate = lr,
        }
    }

    /// Applies one update. `grads[i]` is `None` for arrays the loss did not
    /// touch; Adam still decays their moments.
    pub fn step(&mut self, params: &mut [&mut NumArray<T>], grads: &[Option<NumArray<T>>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(
                "Optimizer::step",
                format!("{} parameters, {} gradients", params.len(), grads.len()),
            ));
        }
        for (p, g) in params.iter().zip(grads) {
            if let Some(g) = g {
                if g.shape() != p.shape() {
                    return Err(Error::shape(
                        "Optimizer::step",
                        format!("gradient {:?} for parameter {:?}", g.shape(), p.shape()),
                    ));
                }
            }
        }
        match self {
            Optimizer::Sgd { learning_rate } => {
                let lr = T::of(*learning_rate);
                for (p, g) in params.iter_mut().zip(grads) {
                    if let Some(g) = g {
                        for (x, &d) in p.data_mut().iter_mut().zip(g.data()) {
                            *x -= lr * d;
                        }
                    }
                }
            }
            Optimizer::Adam { learning_rate, state } => {
                state.t += 1;
                let t = state.t as i32;
                let (b1, b2) = (T::of(ADAM_BETA1), T::of(ADAM_BETA2));
                let c1 = T::one() - T::of(ADAM_BETA1.powi(t));
                let c2 = T::one() - T::of(ADAM_BETA2.powi(t));
                let lr = T::of(*learning_rate);
                let eps = T::of(ADAM_EPSILON);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(state.m.iter_mut().zip(state.v.iter_mut()))
                {
                    let (m, v) = (m.data_mut(), v.data_mut());
                    match g {
                        Some(g) => {
                            for (((x, &d), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                                *mi = flush(b1 * *mi + (T::one() - b1) * d);
                                *vi = flush(b2 * *vi + (T::one() - b2) * d * d);
                                *x -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                            }
                        }
                        None => {
                            for ((x, mi), vi) in p.data_mut().iter_mut().zip(m).zip(v) {
                                *mi = flush(b1 * *mi);
                                *vi = flush(b2 * *vi);
                                *x -= lr * (*mi / c1) / ((*vi / c2).sqrt() + eps);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

// Decayed moments would otherwise sink into subnormals, which are slow.
fn flush<T: Real>(x: T) -> T {
    if x.abs() < T::min_positive_value() {
        T::zero()
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_moves_against_gradient() {
        let mut p = NumArray::from_vec(vec![1.0f64, 2.0]);
        let g = NumArray::from_vec(vec![0.5, -1.0]);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, &[&p]);
        opt.step(&mut [&mut p], &[Some(g)]).unwrap();
        assert_eq!(p.data(), &[0.95, 2.1]);
    }

    #[test]
    fn first_adam_step_is_learning_rate_sized() {
        // With bias correction the first step is lr * g / (|g| + eps).
        let mut p = NumArray::from_vec(vec![0.0f64, 0.0]);
        let g = NumArray::from_vec(vec![3.0, -0.02]);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 1e-3, &[&p]);
        opt.step(&mut [&mut p], &[Some(g)]).unwrap();
        assert!((p.data()[0] + 1e-3).abs() < 1e-10);
        assert!((p.data()[1] - 1e-3).abs() < 1e-8);
    }

    #[test]
    fn mismatched_gradient_is_rejected() {
        let mut p = NumArray::from_vec(vec![0.0f64; 2]);
        let g = NumArray::from_vec(vec![0.0; 3]);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, &[&p]);
        assert!(opt.step(&mut [&mut p], &[Some(g)]).is_err());
    }
}
