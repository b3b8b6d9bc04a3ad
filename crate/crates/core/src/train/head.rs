use rand::Rng;

use crate::graph::GraphBatch;
use crate::model::{Linear, ModelError};
use crate::tensor::{Bound, ParamStore, Tape, Var};

/// Mean of final node representations per graph, `#graphs x d`.
pub fn graph_readout(tape: &mut Tape, h: Var, batch: &GraphBatch) -> Result<Var, ModelError> {
    Ok(tape.segment_mean(h, batch.graph_of_node(), batch.num_graphs())?)
}

/// Two-layer MLP `d -> d -> C` with a ReLU between and no output
/// nonlinearity.
#[derive(Clone, Debug)]
pub struct TaskHead {
    pub hidden: Linear,
    pub output: Linear,
    pub num_outputs: usize,
}

impl TaskHead {
    pub fn new<R: Rng + ?Sized>(d: usize, num_outputs: usize, store: &mut ParamStore, rng: &mut R) -> Self {
        assert!(num_outputs >= 1, "task head needs at least one output");
        TaskHead {
            hidden: Linear::new(store, "head.hidden", d, d, rng),
            output: Linear::new(store, "head.output", num_outputs, d, rng),
            num_outputs,
        }
    }

    pub fn forward(&self, tape: &mut Tape, params: &Bound, x: Var) -> Result<Var, ModelError> {
        let z = self.hidden.apply(tape, params, x)?;
        let a = tape.relu(z);
        self.output.apply(tape, params, a)
    }
}
