use super::{AutodiffError, Result, Tensor};

/// out[i,j] = sum_k x[i,k] * w[k,j] + b[j]
pub fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if b.numel() != w.cols() {
        return Err(AutodiffError::ShapeMismatch {
            op: "linear_forward bias",
            lhs: w.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let mut out = x.matmul(w)?;
    let cols = out.cols();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        for j in 0..cols {
            row[j] += b.data()[j];
        }
    }
    Ok(out)
}

/// Gradients of `linear_forward` w.r.t. its three inputs.
///
/// grad_x = grad_out W^T, grad_w = x^T grad_out, grad_b = column sums.
pub fn linear_backward(
    grad_out: &Tensor,
    x: &Tensor,
    w: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let grad_x = grad_out.matmul_nt(w)?;
    let grad_w = x.matmul_tn(grad_out)?;
    let mut grad_b = vec![0.0; grad_out.cols()];
    for i in 0..grad_out.rows() {
        for (g, v) in grad_b.iter_mut().zip(grad_out.row(i)) {
            *g += v;
        }
    }
    Ok((grad_x, grad_w, Tensor::vector(grad_b)))
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// grad_out where x > 0, else 0.
pub fn relu_backward(grad_out: &Tensor, x: &Tensor) -> Result<Tensor> {
    if !grad_out.same_shape(x) {
        return Err(AutodiffError::ShapeMismatch {
            op: "relu_backward",
            lhs: grad_out.shape().to_vec(),
            rhs: x.shape().to_vec(),
        });
    }
    let mut out = grad_out.clone();
    for (g, &v) in out.data_mut().iter_mut().zip(x.data()) {
        if v <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(out)
}

/// Two-class softmax cross-entropy, mean-reduced over rows.
///
/// Returns the loss and the gradient w.r.t. the logits,
/// (softmax - onehot) / n. Stabilized by row-max subtraction.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let n = logits.rows();
    let c = logits.cols();
    if n != labels.len() || n == 0 {
        return Err(AutodiffError::ShapeMismatch {
            op: "softmax_cross_entropy",
            lhs: logits.shape().to_vec(),
            rhs: vec![labels.len()],
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(AutodiffError::BadLabel(bad));
    }
    let mut grad = Tensor::zeros(vec![n, c]);
    let mut loss = 0.0;
    for i in 0..n {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss -= (exps[labels[i]] / z).ln();
        for j in 0..c {
            let p = exps[j] / z;
            let onehot = if j == labels[i] { 1.0 } else { 0.0 };
            grad.set(i, j, (p - onehot) / n as f64);
        }
    }
    loss /= n as f64;
    if !loss.is_finite() {
        return Err(AutodiffError::NonFinite("softmax_cross_entropy"));
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_identity_weight() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0]]);
        let w = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let b = Tensor::vector(vec![0.0, 0.0]);
        let out = linear_forward(&x, &w, &b).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0]);
    }

    #[test]
    fn linear_hand_sum() {
        let x = Tensor::from_rows(&[vec![1.0, 1.0]]);
        let w = Tensor::from_rows(&[vec![2.0], vec![3.0]]);
        let b = Tensor::vector(vec![1.0]);
        let out = linear_forward(&x, &w, &b).unwrap();
        assert_eq!(out.data(), &[6.0]);
    }

    #[test]
    fn linear_backward_hand_chain_rule() {
        let grad_out = Tensor::from_rows(&[vec![1.0]]);
        let x = Tensor::from_rows(&[vec![1.0, 1.0]]);
        let w = Tensor::from_rows(&[vec![2.0], vec![3.0]]);
        let (gx, gw, gb) = linear_backward(&grad_out, &x, &w).unwrap();
        assert_eq!(gx.data(), &[2.0, 3.0]);
        assert_eq!(gw.data(), &[1.0, 1.0]);
        assert_eq!(gb.data(), &[1.0]);
    }

    #[test]
    fn linear_backward_zero_grad() {
        let grad_out = Tensor::zeros(vec![2, 3]);
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let w = Tensor::zeros(vec![2, 3]);
        let (gx, gw, gb) = linear_backward(&grad_out, &x, &w).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(gw.data().iter().all(|&v| v == 0.0));
        assert!(gb.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_clamps() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&Tensor::vector(vec![5.0, 5.0]), &Tensor::vector(vec![-1.0, 2.0]))
            .unwrap();
        assert_eq!(g.data(), &[0.0, 5.0]);
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let logits = Tensor::from_rows(&[vec![0.0, 0.0]]);
        let (loss, _) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_saturated_correct() {
        let logits = Tensor::from_rows(&[vec![100.0, 0.0]]);
        let (loss, grad) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(loss < 1e-12);
        assert!(grad.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let logits = Tensor::from_rows(&[vec![0.0, 0.0]]);
        assert_eq!(
            softmax_cross_entropy(&logits, &[2]).unwrap_err(),
            AutodiffError::BadLabel(2)
        );
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        // grad + onehot/n recovers softmax/n; rows of softmax sum to 1
        let logits = Tensor::from_rows(&[vec![0.3, -1.2], vec![4.0, 4.5]]);
        let labels = [1, 0];
        let (_, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
        for i in 0..2 {
            let n = 2.0;
            let sum: f64 = (0..2)
                .map(|j| grad.at(i, j) * n + if j == labels[i] { 1.0 } else { 0.0 })
                .sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
