use serde::{Deserialize, Serialize};

use super::params::Bound;
use super::{NamedArray, ParamId, ParamStore, Tape, Tensor, TensorError, Var};

pub const BATCH_NORM_MOMENTUM: f64 = 0.1;
pub const BATCH_NORM_EPS: f64 = 1e-5;
const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    LayerNorm,
    BatchNorm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// LayerNorm or BatchNorm over the feature dimension of an `n x d` input.
///
/// Batch norm pools every row it is given, which for a merged graph batch
/// means all nodes (or edges) of all graphs.
#[derive(Clone, Debug)]
pub struct NormLayer {
    pub kind: NormKind,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    name: String,
}

impl NormLayer {
    pub fn new(kind: NormKind, name: &str, width: usize, store: &mut ParamStore) -> Self {
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(&[width], 1.0));
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(&[width]));
        let eps = match kind {
            NormKind::BatchNorm => BATCH_NORM_EPS,
            NormKind::LayerNorm => LAYER_NORM_EPS,
        };
        NormLayer {
            kind,
            gamma,
            beta,
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            momentum: BATCH_NORM_MOMENTUM,
            eps,
            name: name.to_string(),
        }
    }

    pub fn forward(&mut self, tape: &mut Tape, x: Var, params: &Bound, mode: Mode) -> Result<Var, TensorError> {
        let (n, d) = tape.value(x).dims2()?;
        if d != self.running_mean.len() {
            return Err(TensorError::Shape {
                op: "norm_forward",
                lhs: vec![n, d],
                rhs: vec![self.running_mean.len()],
            });
        }
        let normalized = match (self.kind, mode) {
            (NormKind::LayerNorm, _) => tape.normalize_rows(x, self.eps)?,
            (NormKind::BatchNorm, Mode::Train) => {
                if n < 2 {
                    return Err(TensorError::BatchNormSingleRow(n));
                }
                let (y, mean, var) = tape.normalize_cols(x, self.eps)?;
                // running variance tracks the unbiased estimate
                let unbias = n as f64 / (n as f64 - 1.0);
                for j in 0..d {
                    self.running_mean[j] = (1.0 - self.momentum) * self.running_mean[j] + self.momentum * mean[j];
                    self.running_var[j] =
                        (1.0 - self.momentum) * self.running_var[j] + self.momentum * var[j] * unbias;
                }
                y
            }
            (NormKind::BatchNorm, Mode::Eval) => {
                let shift = tape.constant(Tensor::vector(self.running_mean.iter().map(|m| -m).collect()));
                let scale = tape.constant(Tensor::vector(
                    self.running_var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect(),
                ));
                let centered = tape.add_row(x, shift)?;
                tape.mul_row(centered, scale)?
            }
        };
        let scaled = tape.mul_row(normalized, params.var(self.gamma))?;
        tape.add_row(scaled, params.var(self.beta))
    }

    pub fn buffers(&self) -> Vec<NamedArray> {
        match self.kind {
            NormKind::LayerNorm => vec![],
            NormKind::BatchNorm => vec![
                NamedArray::new(
                    &format!("{}.running_mean", self.name),
                    &Tensor::vector(self.running_mean.clone()),
                ),
                NamedArray::new(
                    &format!("{}.running_var", self.name),
                    &Tensor::vector(self.running_var.clone()),
                ),
            ],
        }
    }

    pub fn load_buffers(&mut self, buffers: &[NamedArray]) -> Result<(), TensorError> {
        if self.kind == NormKind::LayerNorm {
            return Ok(());
        }
        let width = self.running_mean.len();
        for (suffix, target) in [("running_mean", &mut self.running_mean), ("running_var", &mut self.running_var)] {
            let key = format!("{}.{suffix}", self.name);
            let arr = buffers
                .iter()
                .find(|a| a.name == key)
                .ok_or_else(|| TensorError::Invalid(format!("checkpoint is missing buffer {key}")))?;
            if arr.shape != [width] {
                return Err(TensorError::Invalid(format!("buffer {key}: shape {:?}, expected [{width}]", arr.shape)));
            }
            if suffix == "running_var" && arr.data.iter().any(|v| *v < 0.0) {
                return Err(TensorError::Invalid(format!("buffer {key} has negative variance")));
            }
            target.copy_from_slice(&arr.data);
        }
        Ok(())
    }
}
