use super::{expect_shape, Real, Result, Shape, Tensor, TensorError};

/// Flat input offset (within the whole tensor) of each pooled maximum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolIndices {
    input_shape: Shape,
    argmax: Vec<usize>,
}

impl PoolIndices {
    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// 2×2 max pooling with stride 2. Ties resolve to the first element of the
/// window in row-major order, and the backward pass routes to that element.
pub fn maxpool2x2_forward<T: Real>(x: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let s = x.shape();
    if s.h % 2 != 0 || s.w % 2 != 0 {
        return Err(TensorError::Shape {
            op: "maxpool2x2",
            detail: format!("odd spatial size {}x{}", s.h, s.w),
        });
    }
    let out_shape = Shape::new(s.n, s.c, s.h / 2, s.w / 2);
    let mut out = Vec::with_capacity(out_shape.len());
    let mut argmax = Vec::with_capacity(out_shape.len());
    let data = x.data();
    for plane in 0..s.n * s.c {
        let base = plane * s.plane();
        for oy in 0..out_shape.h {
            for ox in 0..out_shape.w {
                let top = base + 2 * oy * s.w + 2 * ox;
                let window = [top, top + 1, top + s.w, top + s.w + 1];
                let mut best = window[0];
                for &i in &window[1..] {
                    if data[i] > data[best] {
                        best = i;
                    }
                }
                out.push(data[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::from_vec(out_shape, out)?, PoolIndices { input_shape: s, argmax }))
}

pub fn maxpool2x2_backward<T: Real>(indices: &PoolIndices, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let s = indices.input_shape;
    expect_shape("maxpool2x2_backward", grad_out.shape(), Shape::new(s.n, s.c, s.h / 2, s.w / 2))?;
    let mut gx = Tensor::zeros(s);
    let g = gx.data_mut();
    for (&i, &v) in indices.argmax.iter().zip(grad_out.data()) {
        g[i] += v;
    }
    Ok(gx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_halves() {
        let x = Tensor::<f32>::full(Shape::new(1, 2, 4, 6), 3.0);
        let (y, _) = maxpool2x2_forward(&x).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 2, 2, 3));
        assert!(y.data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn tiles_of_one_to_four() {
        let mut x = Tensor::<f32>::zeros(Shape::new(1, 1, 4, 4));
        for y in 0..4 {
            for xx in 0..4 {
                x.set(0, 0, y, xx, [[1.0, 2.0], [3.0, 4.0]][y % 2][xx % 2]);
            }
        }
        let (y, _) = maxpool2x2_forward(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn ties_route_to_first_index() {
        let x = Tensor::<f32>::full(Shape::new(1, 1, 2, 2), 1.0);
        let (_, idx) = maxpool2x2_forward(&x).unwrap();
        assert_eq!(idx.argmax(), &[0]);
        let g = maxpool2x2_backward(&idx, &Tensor::full(Shape::new(1, 1, 1, 1), 5.0)).unwrap();
        assert_eq!(g.data(), &[5.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn odd_dimension_is_error() {
        let x = Tensor::<f32>::zeros(Shape::new(1, 1, 3, 4));
        assert!(maxpool2x2_forward(&x).is_err());
    }
}
