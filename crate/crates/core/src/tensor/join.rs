use super::{Real, Result, Shape, Tensor, TensorError};

/// Concatenates along the channel axis in argument order.
pub fn concat_channels<T: Real>(xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = xs.first().ok_or_else(|| TensorError::Shape { op: "concat", detail: "no operands".into() })?.shape();
    for x in xs {
        let s = x.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(TensorError::Shape { op: "concat", detail: format!("{s} vs {first}") });
        }
    }
    let c: usize = xs.iter().map(|x| x.shape().c).sum();
    let out_shape = Shape::new(first.n, c, first.h, first.w);
    let mut data = Vec::with_capacity(out_shape.len());
    for n in 0..first.n {
        for x in xs {
            data.extend_from_slice(x.sample(n));
        }
    }
    Tensor::from_vec(out_shape, data)
}

/// Splits the output gradient back into one tensor per operand.
pub fn concat_channels_backward<T: Real>(channels: &[usize], grad_out: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
    let total: usize = channels.iter().sum();
    if total != grad_out.shape().c {
        return Err(TensorError::Shape {
            op: "concat_backward",
            detail: format!("operand channels sum to {total}, gradient has {}", grad_out.shape().c),
        });
    }
    let mut start = 0;
    channels
        .iter()
        .map(|&c| {
            let part = grad_out.slice_channels(start, c);
            start += c;
            part
        })
        .collect()
}

pub fn sum_elementwise<T: Real>(xs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = xs.first().ok_or_else(|| TensorError::Shape { op: "sum", detail: "no operands".into() })?;
    let mut out = (*first).clone();
    out.take_grad();
    for x in &xs[1..] {
        if x.shape() != out.shape() {
            return Err(TensorError::Shape { op: "sum", detail: format!("{} vs {}", x.shape(), out.shape()) });
        }
        for (a, &b) in out.data_mut().iter_mut().zip(x.data()) {
            *a += b;
        }
    }
    Ok(out)
}

/// Every operand of a sum receives the full output gradient.
pub fn sum_elementwise_backward<T: Real>(operands: usize, grad_out: &Tensor<T>) -> Vec<Tensor<T>> {
    (0..operands).map(|_| grad_out.clone()).collect()
}
