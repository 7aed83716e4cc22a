//! Softmax and the fused softmax + cross-entropy loss head.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Row-wise softmax of `[N, K]` logits, stabilized by max subtraction.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    if logits.shape().len() != 2 {
        return Err(Error::shape(
            "softmax",
            format!("expected [N,K], got {:?}", logits.shape()),
        ));
    }
    let k = logits.shape()[1];
    let mut out = logits.clone();
    for row in out.data_mut().chunks_exact_mut(k) {
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    Ok(out)
}

/// Mean cross-entropy over the batch and its gradient with respect to the
/// logits: `loss = -(1/N) sum_n log softmax(x_n)[label_n]`,
/// `dlogits = (softmax(x) - onehot(labels)) / N`.
pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    if logits.shape().len() != 2 || logits.shape()[0] != labels.len() {
        return Err(Error::shape(
            "softmax_xent",
            format!("logits {:?} vs {} labels", logits.shape(), labels.len()),
        ));
    }
    let (n, k) = (logits.shape()[0], logits.shape()[1]);
    for &l in labels {
        if l >= k {
            return Err(Error::shape(
                "softmax_xent",
                format!("label {l} out of range for {k} classes"),
            ));
        }
    }
    let mut dlogits = softmax(logits)?;
    let mut loss = 0.0;
    let inv_n = 1.0 / n as f64;
    for (row, &label) in dlogits.data_mut().chunks_exact_mut(k).zip(labels) {
        loss -= row[label].ln();
        row[label] -= 1.0;
        for v in row.iter_mut() {
            *v *= inv_n;
        }
    }
    Ok((loss * inv_n, dlogits))
}
