use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};

/// Row-major matrix of doubles. Vectors are stored as `1 × n` rows and
/// mini-batches as `batch × features`.
pub type Tensor = Array2<f64>;

pub fn row(values: &[f64]) -> Tensor {
    Array2::from_shape_vec((1, values.len()), values.to_vec()).expect("row shape")
}

pub fn zeros(rows: usize, cols: usize) -> Tensor {
    Array2::zeros((rows, cols))
}

pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
    if rows * cols != data.len() {
        return Err(Error::shape(format!(
            "{rows}x{cols} tensor needs {} values, got {}",
            rows * cols,
            data.len()
        )));
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("checked shape"))
}

/// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn uniform_init<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

pub fn all_finite(t: &Tensor) -> bool {
    t.iter().all(|v| v.is_finite())
}

pub fn ensure_finite(name: &str, t: &Tensor) -> Result<()> {
    if all_finite(t) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            param: name.to_string(),
        })
    }
}
