use alloc::vec::Vec;

use super::trajectory::{accuracy, test_loss, train_loss, ModelKind, StepRecord, Trajectory};
use super::TrainError;
use crate::nn::KernelMatrix;

/// Discretized frozen-kernel evolution:
/// `f_train <- f_train - lr K_tt (f_train - y)`, `f_test <- f_test - lr K_et (f_train - y)`.
#[allow(clippy::too_many_arguments)]
pub fn evolve_linear(
    k_train: &KernelMatrix,
    k_test_train: &KernelMatrix,
    f0_train: &[f64],
    f0_test: &[f64],
    y_train: &[f64],
    y_test: &[f64],
    lr: f64,
    steps: usize,
    record_stride: usize,
) -> Result<Trajectory, TrainError> {
    if k_train.n_rows() != k_train.n_cols() {
        return Err(TrainError::NotSquare);
    }
    let stride = record_stride.max(1);
    let mut traj = Trajectory::new(ModelKind::Linear);
    let mut f: Vec<f64> = f0_train.to_vec();
    let mut g: Vec<f64> = f0_test.to_vec();
    for step in 0..=steps {
        let loss = train_loss(&f, y_train);
        let diverged = !loss.is_finite() || loss > 1e6;
        if step % stride == 0 || step == steps || diverged {
            traj.records.push(StepRecord {
                step,
                train_loss: loss,
                train_accuracy: accuracy(&f, y_train),
                test_loss: test_loss(&g, y_test),
                test_accuracy: accuracy(&g, y_test),
            });
        }
        if diverged {
            traj.diverged = true;
            break;
        }
        if step == steps {
            break;
        }
        let r: Vec<f64> = f.iter().zip(y_train).map(|(a, b)| a - b).collect();
        let df = k_train.apply(&r);
        let dg = if g.is_empty() { Vec::new() } else { k_test_train.apply(&r) };
        f.iter_mut().zip(&df).for_each(|(a, d)| *a -= lr * d);
        g.iter_mut().zip(&dg).for_each(|(a, d)| *a -= lr * d);
    }
    Ok(traj)
}
