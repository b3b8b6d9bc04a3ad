use super::TrainError;
use crate::tensor::{Tape, Tensor, Var};

/// Mean absolute error between `pred` (`g x 1`) and `target`.
pub fn l1_loss(tape: &mut Tape, pred: Var, target: &[f64]) -> Result<Var, TrainError> {
    let p = tape.value(pred);
    if p.len() != target.len() {
        return Err(TrainError::Length {
            what: "l1_loss",
            expected: target.len(),
            got: p.len(),
        });
    }
    let t = tape.constant(Tensor::new(p.shape().to_vec(), target.to_vec())?);
    let diff = tape.sub(pred, t)?;
    let abs = tape.abs(diff);
    Ok(tape.mean(abs))
}

/// Per-class weights `n / (C * count_c)` from the labels of one batch;
/// absent classes get weight 0.
pub fn class_weights(labels: &[usize], num_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        counts[l] += 1;
    }
    let n = labels.len() as f64;
    counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { n / (num_classes as f64 * c as f64) })
        .collect()
}

/// Mean over rows of `w[label] * -log softmax(logits)[label]`, with class
/// weights taken from this batch's label histogram.
pub fn weighted_cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var, TrainError> {
    let (n, c) = tape.value(logits).dims2()?;
    if labels.len() != n {
        return Err(TrainError::Length {
            what: "weighted_cross_entropy",
            expected: labels.len(),
            got: n,
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(TrainError::Label { label: bad, classes: c });
    }
    let w = class_weights(labels, c);
    let per_row: Vec<f64> = labels.iter().map(|&l| -w[l]).collect();
    let log_p = tape.log_softmax_rows(logits)?;
    let picked = tape.pick_per_row(log_p, labels)?;
    let weights = tape.constant(Tensor::vector(per_row));
    let terms = tape.mul(picked, weights)?;
    Ok(tape.mean(terms))
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Fraction of rows whose arg-max logit equals the label.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = labels.iter().enumerate().filter(|&(i, &l)| argmax(logits.row(i)) == l).count();
    hits as f64 / labels.len() as f64
}

/// Mean over present classes of per-class accuracy.
pub fn weighted_accuracy(logits: &Tensor, labels: &[usize]) -> f64 {
    let c = logits.cols();
    let mut total = vec![0usize; c];
    let mut hits = vec![0usize; c];
    for (i, &l) in labels.iter().enumerate() {
        total[l] += 1;
        if argmax(logits.row(i)) == l {
            hits[l] += 1;
        }
    }
    let present: Vec<f64> = (0..c)
        .filter(|&k| total[k] > 0)
        .map(|k| hits[k] as f64 / total[k] as f64)
        .collect();
    if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    }
}

pub fn mean_absolute_error(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len());
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64
}
