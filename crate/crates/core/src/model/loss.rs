use super::ModelError;
use crate::linalg::Matrix;

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the logits, `e_o = (softmax(z) − onehot(y)) / b`.
pub fn softmax_ce(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix), ModelError> {
    let (b, o) = logits.shape();
    if b == 0 {
        return Err(ModelError::EmptyBatch);
    }
    if labels.len() != b {
        return Err(ModelError::Dims(format!("{b} logit rows for {} labels", labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&y| y >= o) {
        return Err(ModelError::Label { label, classes: o });
    }
    let mut e_o = softmax_rows(logits);
    let mut loss = 0.0;
    let inv_b = 1.0 / b as f64;
    for (i, &y) in labels.iter().enumerate() {
        let z = logits.row(i);
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - z[y];
        let row = e_o.row_mut(i);
        row[y] -= 1.0;
        row.iter_mut().for_each(|v| *v *= inv_b);
    }
    Ok((loss * inv_b, e_o))
}

/// Index of the largest entry per row (first on ties).
pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|i| {
            let row = m.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Fraction of rows whose argmax equals the label; `0` for no samples.
pub fn accuracy(logits: &Matrix, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = argmax_rows(logits).iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}
