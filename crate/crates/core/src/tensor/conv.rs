use super::{expect_shape, Real, Result, Shape, Tensor, TensorError};

/// Geometry of a 2-D convolution layer.
///
/// Weights are laid out `(out_channels, in_channels, kernel_h, kernel_w)`,
/// biases `(1, out_channels, 1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
}

impl ConvSpec {
    /// Stride-1 convolution padded to preserve spatial size. Both kernel
    /// dimensions must be odd: a 9×1 kernel gets padding (4, 0).
    pub fn same(in_channels: usize, out_channels: usize, kernel_h: usize, kernel_w: usize) -> Result<Self> {
        if kernel_h % 2 == 0 || kernel_w % 2 == 0 {
            return Err(TensorError::Spec(format!(
                "same padding needs odd kernels, got {kernel_h}x{kernel_w}"
            )));
        }
        let spec = Self {
            kernel_h,
            kernel_w,
            in_channels,
            out_channels,
            stride: 1,
            pad_h: (kernel_h - 1) / 2,
            pad_w: (kernel_w - 1) / 2,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_h == 0 || self.kernel_w == 0 || self.stride == 0 {
            return Err(TensorError::Spec(format!("degenerate conv {self:?}")));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(TensorError::Spec(format!("conv without channels {self:?}")));
        }
        Ok(())
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::new(1, self.out_channels, 1, 1)
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let hp = h + 2 * self.pad_h;
        let wp = w + 2 * self.pad_w;
        if hp < self.kernel_h || wp < self.kernel_w {
            return Err(TensorError::Shape {
                op: "conv2d",
                detail: format!("input {h}x{w} smaller than kernel {}x{}", self.kernel_h, self.kernel_w),
            });
        }
        Ok(((hp - self.kernel_h) / self.stride + 1, (wp - self.kernel_w) / self.stride + 1))
    }

    fn geom(&self) -> Geom {
        Geom {
            kh: self.kernel_h,
            kw: self.kernel_w,
            stride: self.stride,
            ph: self.pad_h,
            pw: self.pad_w,
        }
    }
}

/// Learned up-sampling by a transposed convolution.
///
/// Weights are laid out `(in_channels, out_channels, kernel, kernel)`,
/// biases `(1, out_channels, 1, 1)`. Output size is
/// `(in - 1) * stride - 2 * pad + kernel` per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpsampleSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl UpsampleSpec {
    /// Kernel 4, stride 2, pad 1: exactly doubles height and width.
    pub fn double(in_channels: usize, out_channels: usize) -> Self {
        Self { in_channels, out_channels, kernel: 4, stride: 2, pad: 1 }
    }

    /// Non-overlapping `scale×scale` kernel with stride `scale`. Scale 1 is a
    /// 1×1 convolution.
    pub fn by_scale(in_channels: usize, out_channels: usize, scale: usize) -> Self {
        Self { in_channels, out_channels, kernel: scale, stride: scale, pad: 0 }
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(self.in_channels, self.out_channels, self.kernel, self.kernel)
    }

    pub fn bias_shape(&self) -> Shape {
        Shape::new(1, self.out_channels, 1, 1)
    }

    /// Number of input taps feeding each output value.
    pub fn fan_in(&self) -> usize {
        let taps = (self.kernel / self.stride).max(1);
        self.in_channels * taps * taps
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let grow = |v: usize| (v as isize - 1) * self.stride as isize - 2 * self.pad as isize + self.kernel as isize;
        let (oh, ow) = (grow(h), grow(w));
        if h == 0 || w == 0 || oh <= 0 || ow <= 0 {
            return Err(TensorError::Shape {
                op: "conv_transpose2d",
                detail: format!("input {h}x{w} gives empty output for {self:?}"),
            });
        }
        Ok((oh as usize, ow as usize))
    }

    fn geom(&self) -> Geom {
        Geom { kh: self.kernel, kw: self.kernel, stride: self.stride, ph: self.pad, pw: self.pad }
    }

    fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.stride == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(TensorError::Spec(format!("degenerate up-sampling {self:?}")));
        }
        Ok(())
    }
}

/// Gradients of a convolution-like layer.
#[derive(Debug, Clone)]
pub struct ConvGrads<T = f32> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, Copy)]
struct Geom {
    kh: usize,
    kw: usize,
    stride: usize,
    ph: usize,
    pw: usize,
}

/// Range of output positions `o` for which `o * stride + k - pad` lands in `0..len`.
#[inline]
fn valid_range(out: usize, len: usize, k: usize, pad: usize, stride: usize) -> (usize, usize) {
    let off = k as isize - pad as isize;
    let lo = if off >= 0 { 0 } else { ((-off) as usize).div_ceil(stride) };
    let hi_excl = if (len as isize) - off <= 0 { 0 } else { ((len as isize - off - 1) as usize) / stride + 1 };
    let hi = hi_excl.min(out);
    (lo.min(hi), hi)
}

/// Unfolds one `(c, h, w)` image into a `(c*kh*kw, oh*ow)` matrix.
fn im2col<T: Real>(img: &[T], c: usize, h: usize, w: usize, g: Geom, oh: usize, ow: usize, col: &mut [T]) {
    let p = oh * ow;
    for ch in 0..c {
        let plane = &img[ch * h * w..(ch + 1) * h * w];
        for ky in 0..g.kh {
            let (y_lo, y_hi) = valid_range(oh, h, ky, g.ph, g.stride);
            for kx in 0..g.kw {
                let row = (ch * g.kh + ky) * g.kw + kx;
                let dst = &mut col[row * p..(row + 1) * p];
                let (x_lo, x_hi) = valid_range(ow, w, kx, g.pw, g.stride);
                for oy in 0..oh {
                    let out_row = &mut dst[oy * ow..(oy + 1) * ow];
                    if oy < y_lo || oy >= y_hi || x_lo >= x_hi {
                        out_row.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let iy = oy * g.stride + ky - g.ph;
                    let src = &plane[iy * w..(iy + 1) * w];
                    out_row[..x_lo].iter_mut().for_each(|v| *v = T::zero());
                    out_row[x_hi..].iter_mut().for_each(|v| *v = T::zero());
                    if g.stride == 1 {
                        let ix0 = x_lo + kx - g.pw;
                        out_row[x_lo..x_hi].copy_from_slice(&src[ix0..ix0 + (x_hi - x_lo)]);
                    } else {
                        for ox in x_lo..x_hi {
                            out_row[ox] = src[ox * g.stride + kx - g.pw];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds columns back into `(c, h, w)`.
fn col2im<T: Real>(col: &[T], c: usize, h: usize, w: usize, g: Geom, oh: usize, ow: usize, img: &mut [T]) {
    let p = oh * ow;
    for ch in 0..c {
        let plane = &mut img[ch * h * w..(ch + 1) * h * w];
        for ky in 0..g.kh {
            let (y_lo, y_hi) = valid_range(oh, h, ky, g.ph, g.stride);
            for kx in 0..g.kw {
                let row = (ch * g.kh + ky) * g.kw + kx;
                let srcm = &col[row * p..(row + 1) * p];
                let (x_lo, x_hi) = valid_range(ow, w, kx, g.pw, g.stride);
                if x_lo >= x_hi {
                    continue;
                }
                for oy in y_lo..y_hi {
                    let iy = oy * g.stride + ky - g.ph;
                    let dst = &mut plane[iy * w..(iy + 1) * w];
                    let src = &srcm[oy * ow..(oy + 1) * ow];
                    for ox in x_lo..x_hi {
                        dst[ox * g.stride + kx - g.pw] += src[ox];
                    }
                }
            }
        }
    }
}

fn is_pointwise(spec: &ConvSpec) -> bool {
    spec.kernel_h == 1 && spec.kernel_w == 1 && spec.stride == 1 && spec.pad_h == 0 && spec.pad_w == 0
}

fn check_bias<T: Real>(op: &'static str, b: &Tensor<T>, channels: usize) -> Result<()> {
    expect_shape(op, b.shape(), Shape::new(1, channels, 1, 1))
}

/// Cross-correlation `y = w ⋆ x + b`.
pub fn conv2d_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, spec: &ConvSpec) -> Result<Tensor<T>> {
    spec.validate()?;
    let xs = x.shape();
    if xs.c != spec.in_channels {
        return Err(TensorError::Shape {
            op: "conv2d",
            detail: format!("input has {} channels, layer expects {}", xs.c, spec.in_channels),
        });
    }
    expect_shape("conv2d weight", w.shape(), spec.weight_shape())?;
    check_bias("conv2d bias", b, spec.out_channels)?;
    let (oh, ow) = spec.output_hw(xs.h, xs.w)?;
    let out_shape = Shape::new(xs.n, spec.out_channels, oh, ow);
    let mut out = Tensor::zeros(out_shape);
    let k = spec.fan_in();
    let p = oh * ow;
    let pointwise = is_pointwise(spec);
    let mut col = if pointwise { Vec::new() } else { vec![T::zero(); k * p] };
    for n in 0..xs.n {
        let xn = x.sample(n);
        let cols: &[T] = if pointwise {
            xn
        } else {
            im2col(xn, xs.c, xs.h, xs.w, spec.geom(), oh, ow, &mut col);
            &col
        };
        let yn = out.sample_mut(n);
        for (co, plane) in yn.chunks_mut(p).enumerate() {
            let bias = b.data()[co];
            plane.iter_mut().for_each(|v| *v = bias);
        }
        T::gemm(spec.out_channels, k, p, T::one(), w.data(), (k as isize, 1), cols, (p as isize, 1), T::one(), yn, (p as isize, 1));
    }
    Ok(out)
}

/// Exact gradients of [`conv2d_forward`] given the output gradient.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    spec: &ConvSpec,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let xs = x.shape();
    expect_shape("conv2d weight", w.shape(), spec.weight_shape())?;
    let (oh, ow) = spec.output_hw(xs.h, xs.w)?;
    expect_shape("conv2d grad_out", grad_out.shape(), Shape::new(xs.n, spec.out_channels, oh, ow))?;
    let k = spec.fan_in();
    let p = oh * ow;
    let pointwise = is_pointwise(spec);
    let mut gx = Tensor::zeros(xs);
    let mut gw = Tensor::zeros(spec.weight_shape());
    let mut gb = Tensor::zeros(spec.bias_shape());
    let mut col = if pointwise { Vec::new() } else { vec![T::zero(); k * p] };
    let mut gcol = if pointwise { Vec::new() } else { vec![T::zero(); k * p] };
    for n in 0..xs.n {
        let xn = x.sample(n);
        let gy = grad_out.sample(n);
        for (co, plane) in gy.chunks(p).enumerate() {
            gb.data_mut()[co] += plane.iter().copied().sum();
        }
        let cols: &[T] = if pointwise {
            xn
        } else {
            im2col(xn, xs.c, xs.h, xs.w, spec.geom(), oh, ow, &mut col);
            &col
        };
        // gW += gY · colᵀ
        T::gemm(spec.out_channels, p, k, T::one(), gy, (p as isize, 1), cols, (1, p as isize), T::one(), gw.data_mut(), (k as isize, 1));
        // gcol = Wᵀ · gY
        if pointwise {
            T::gemm(k, spec.out_channels, p, T::one(), w.data(), (1, k as isize), gy, (p as isize, 1), T::zero(), gx.sample_mut(n), (p as isize, 1));
        } else {
            T::gemm(k, spec.out_channels, p, T::one(), w.data(), (1, k as isize), gy, (p as isize, 1), T::zero(), &mut gcol, (p as isize, 1));
            col2im(&gcol, xs.c, xs.h, xs.w, spec.geom(), oh, ow, gx.sample_mut(n));
        }
    }
    Ok(ConvGrads { input: gx, weight: gw, bias: gb })
}

/// Transposed convolution (the adjoint of a strided convolution) plus bias.
pub fn conv_transpose2d_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    spec: &UpsampleSpec,
) -> Result<Tensor<T>> {
    spec.validate()?;
    let xs = x.shape();
    if xs.c != spec.in_channels {
        return Err(TensorError::Shape {
            op: "conv_transpose2d",
            detail: format!("input has {} channels, layer expects {}", xs.c, spec.in_channels),
        });
    }
    expect_shape("conv_transpose2d weight", w.shape(), spec.weight_shape())?;
    check_bias("conv_transpose2d bias", b, spec.out_channels)?;
    let (oh, ow) = spec.output_hw(xs.h, xs.w)?;
    let out_shape = Shape::new(xs.n, spec.out_channels, oh, ow);
    let mut out = Tensor::zeros(out_shape);
    let m = spec.out_channels * spec.kernel * spec.kernel;
    let pin = xs.plane();
    let mut cols = vec![T::zero(); m * pin];
    let plane = oh * ow;
    for n in 0..xs.n {
        T::gemm(m, spec.in_channels, pin, T::one(), w.data(), (1, m as isize), x.sample(n), (pin as isize, 1), T::zero(), &mut cols, (pin as isize, 1));
        let yn = out.sample_mut(n);
        col2im(&cols, spec.out_channels, oh, ow, spec.geom(), xs.h, xs.w, yn);
        for (co, p) in yn.chunks_mut(plane).enumerate() {
            let bias = b.data()[co];
            p.iter_mut().for_each(|v| *v += bias);
        }
    }
    Ok(out)
}

pub fn conv_transpose2d_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    spec: &UpsampleSpec,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let xs = x.shape();
    expect_shape("conv_transpose2d weight", w.shape(), spec.weight_shape())?;
    let (oh, ow) = spec.output_hw(xs.h, xs.w)?;
    expect_shape("conv_transpose2d grad_out", grad_out.shape(), Shape::new(xs.n, spec.out_channels, oh, ow))?;
    let m = spec.out_channels * spec.kernel * spec.kernel;
    let pin = xs.plane();
    let plane = oh * ow;
    let mut gx = Tensor::zeros(xs);
    let mut gw = Tensor::zeros(spec.weight_shape());
    let mut gb = Tensor::zeros(spec.bias_shape());
    let mut colg = vec![T::zero(); m * pin];
    for n in 0..xs.n {
        let gy = grad_out.sample(n);
        for (co, p) in gy.chunks(plane).enumerate() {
            gb.data_mut()[co] += p.iter().copied().sum();
        }
        im2col(gy, spec.out_channels, oh, ow, spec.geom(), xs.h, xs.w, &mut colg);
        // gX = W · colg
        T::gemm(spec.in_channels, m, pin, T::one(), w.data(), (m as isize, 1), &colg, (pin as isize, 1), T::zero(), gx.sample_mut(n), (pin as isize, 1));
        // gW += X · colgᵀ
        T::gemm(spec.in_channels, pin, m, T::one(), x.sample(n), (pin as isize, 1), &colg, (1, pin as isize), T::one(), gw.data_mut(), (m as isize, 1));
    }
    Ok(ConvGrads { input: gx, weight: gw, bias: gb })
}

fn expect_double(spec: &UpsampleSpec) -> Result<()> {
    if spec.kernel != spec.stride + 2 * spec.pad || spec.stride != 2 {
        return Err(TensorError::Spec(format!("{spec:?} does not double spatial size")));
    }
    Ok(())
}

/// Learned 2× up-sampling; output is exactly twice the input in both axes.
pub fn upsample2x_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, spec: &UpsampleSpec) -> Result<Tensor<T>> {
    expect_double(spec)?;
    conv_transpose2d_forward(x, w, b, spec)
}

pub fn upsample2x_backward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, spec: &UpsampleSpec, grad_out: &Tensor<T>) -> Result<ConvGrads<T>> {
    expect_double(spec)?;
    conv_transpose2d_backward(x, w, spec, grad_out)
}

/// Integer power-of-two factor taking `from` to `to` in both axes.
pub fn upsample_scale(from: (usize, usize), to: (usize, usize)) -> Result<usize> {
    let bad = || TensorError::Shape {
        op: "upsample_to",
        detail: format!("{}x{} is not a power-of-two multiple of {}x{}", to.0, to.1, from.0, from.1),
    };
    if from.0 == 0 || from.1 == 0 || to.0 % from.0 != 0 || to.1 % from.1 != 0 {
        return Err(bad());
    }
    let (sy, sx) = (to.0 / from.0, to.1 / from.1);
    if sy != sx || !sy.is_power_of_two() {
        return Err(bad());
    }
    Ok(sy)
}

fn expect_scale(spec: &UpsampleSpec, from: (usize, usize), target: (usize, usize)) -> Result<()> {
    let s = upsample_scale(from, target)?;
    if spec.kernel != s || spec.stride != s || spec.pad != 0 {
        return Err(TensorError::Spec(format!("{spec:?} does not up-sample by {s}")));
    }
    Ok(())
}

/// One-step up-sampling to `target` (height, width) with a single
/// transposed convolution of stride equal to the scale factor.
pub fn upsample_to_forward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    spec: &UpsampleSpec,
    target: (usize, usize),
) -> Result<Tensor<T>> {
    let s = x.shape();
    expect_scale(spec, (s.h, s.w), target)?;
    conv_transpose2d_forward(x, w, b, spec)
}

pub fn upsample_to_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    spec: &UpsampleSpec,
    target: (usize, usize),
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let s = x.shape();
    expect_scale(spec, (s.h, s.w), target)?;
    conv_transpose2d_backward(x, w, spec, grad_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct nested-loop convolution used as an oracle.
    fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, s: &ConvSpec) -> Tensor<f64> {
        let xs = x.shape();
        let (oh, ow) = s.output_hw(xs.h, xs.w).unwrap();
        let mut y = Tensor::zeros(Shape::new(xs.n, s.out_channels, oh, ow));
        for n in 0..xs.n {
            for co in 0..s.out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b.data()[co];
                        for ci in 0..s.in_channels {
                            for ky in 0..s.kernel_h {
                                for kx in 0..s.kernel_w {
                                    let iy = (oy * s.stride + ky) as isize - s.pad_h as isize;
                                    let ix = (ox * s.stride + kx) as isize - s.pad_w as isize;
                                    if iy < 0 || ix < 0 || iy >= xs.h as isize || ix >= xs.w as isize {
                                        continue;
                                    }
                                    acc += w.get(co, ci, ky, kx) * x.get(n, ci, iy as usize, ix as usize);
                                }
                            }
                        }
                        y.set(n, co, oy, ox, acc);
                    }
                }
            }
        }
        y
    }

    fn naive_conv_transpose(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, s: &UpsampleSpec) -> Tensor<f64> {
        let xs = x.shape();
        let (oh, ow) = s.output_hw(xs.h, xs.w).unwrap();
        let mut y = Tensor::zeros(Shape::new(xs.n, s.out_channels, oh, ow));
        for n in 0..xs.n {
            for co in 0..s.out_channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        y.set(n, co, oy, ox, b.data()[co]);
                    }
                }
            }
            for ci in 0..s.in_channels {
                for iy in 0..xs.h {
                    for ix in 0..xs.w {
                        let v = x.get(n, ci, iy, ix);
                        for co in 0..s.out_channels {
                            for ky in 0..s.kernel {
                                for kx in 0..s.kernel {
                                    let oy = (iy * s.stride + ky) as isize - s.pad as isize;
                                    let ox = (ix * s.stride + kx) as isize - s.pad as isize;
                                    if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                        continue;
                                    }
                                    let i = y.index(n, co, oy as usize, ox as usize);
                                    y.data_mut()[i] += v * w.get(ci, co, ky, kx);
                                }
                            }
                        }
                    }
                }
            }
        }
        y
    }

    fn close(a: &Tensor<f64>, b: &Tensor<f64>) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn conv_matches_naive_for_all_kernel_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (kh, kw) in [(3, 3), (9, 1), (1, 9), (1, 1), (5, 3)] {
            let spec = ConvSpec::same(3, 4, kh, kw).unwrap();
            let x = Tensor::randn(Shape::new(2, 3, 7, 6), 1.0, &mut rng);
            let w = Tensor::randn(spec.weight_shape(), 1.0, &mut rng);
            let b = Tensor::randn(spec.bias_shape(), 1.0, &mut rng);
            close(&conv2d_forward(&x, &w, &b, &spec).unwrap(), &naive_conv(&x, &w, &b, &spec));
        }
    }

    #[test]
    fn strided_conv_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let spec = ConvSpec { kernel_h: 3, kernel_w: 2, in_channels: 2, out_channels: 3, stride: 2, pad_h: 1, pad_w: 0 };
        let x = Tensor::randn(Shape::new(1, 2, 9, 8), 1.0, &mut rng);
        let w = Tensor::randn(spec.weight_shape(), 1.0, &mut rng);
        let b = Tensor::randn(spec.bias_shape(), 1.0, &mut rng);
        close(&conv2d_forward(&x, &w, &b, &spec).unwrap(), &naive_conv(&x, &w, &b, &spec));
    }

    #[test]
    fn transpose_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for spec in [UpsampleSpec::double(3, 2), UpsampleSpec::by_scale(2, 3, 4), UpsampleSpec::by_scale(2, 2, 1)] {
            let x = Tensor::randn(Shape::new(2, spec.in_channels, 3, 4), 1.0, &mut rng);
            let w = Tensor::randn(spec.weight_shape(), 1.0, &mut rng);
            let b = Tensor::randn(spec.bias_shape(), 1.0, &mut rng);
            close(&conv_transpose2d_forward(&x, &w, &b, &spec).unwrap(), &naive_conv_transpose(&x, &w, &b, &spec));
        }
    }

    #[test]
    fn identity_kernel_is_identity() {
        let spec = ConvSpec::same(1, 1, 1, 1).unwrap();
        let x = Tensor::<f32>::from_vec(Shape::new(1, 1, 2, 3), vec![1.0, -2.0, 3.0, 4.5, 0.0, -1.0]).unwrap();
        let w = Tensor::full(spec.weight_shape(), 1.0);
        let b = Tensor::zeros(spec.bias_shape());
        assert_eq!(conv2d_forward(&x, &w, &b, &spec).unwrap().data(), x.data());
    }

    #[test]
    fn box_kernel_on_impulse() {
        let spec = ConvSpec::same(1, 1, 3, 3).unwrap();
        let mut x = Tensor::<f32>::zeros(Shape::new(1, 1, 7, 7));
        x.set(0, 0, 3, 3, 1.0);
        let w = Tensor::full(spec.weight_shape(), 1.0);
        let y = conv2d_forward(&x, &w, &Tensor::zeros(spec.bias_shape()), &spec).unwrap();
        for yy in 0..7 {
            for xx in 0..7 {
                let inside = (2..=4).contains(&yy) && (2..=4).contains(&xx);
                assert_eq!(y.get(0, 0, yy, xx), if inside { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn same_padding_preserves_size() {
        for k in [3, 5, 7, 9, 11] {
            for (kh, kw) in [(k, 1), (1, k), (3, 3)] {
                let spec = ConvSpec::same(2, 2, kh, kw).unwrap();
                assert_eq!(spec.output_hw(13, 10).unwrap(), (13, 10));
            }
        }
        assert!(ConvSpec::same(1, 1, 4, 1).is_err());
    }

    #[test]
    fn nine_by_one_padding() {
        let s = ConvSpec::same(4, 4, 9, 1).unwrap();
        assert_eq!((s.pad_h, s.pad_w), (4, 0));
        let s = ConvSpec::same(4, 4, 1, 9).unwrap();
        assert_eq!((s.pad_h, s.pad_w), (0, 4));
    }

    #[test]
    fn channel_mismatch_is_error() {
        let spec = ConvSpec::same(3, 2, 3, 3).unwrap();
        let x = Tensor::<f32>::zeros(Shape::new(1, 2, 4, 4));
        let w = Tensor::zeros(spec.weight_shape());
        let b = Tensor::zeros(spec.bias_shape());
        assert!(matches!(conv2d_forward(&x, &w, &b, &spec), Err(TensorError::Shape { .. })));
    }

    /// Duplication kernel: each input pixel becomes a 2×2 block.
    fn nearest_double(c: usize) -> (UpsampleSpec, Tensor<f64>, Tensor<f64>) {
        let spec = UpsampleSpec::double(c, c);
        let mut w = Tensor::zeros(spec.weight_shape());
        for ch in 0..c {
            for ky in 1..3 {
                for kx in 1..3 {
                    w.set(ch, ch, ky, kx, 1.0);
                }
            }
        }
        (spec, w, Tensor::zeros(spec.bias_shape()))
    }

    #[test]
    fn upsample2x_duplicates_with_nearest_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (spec, w, b) = nearest_double(2);
        let x = Tensor::randn(Shape::new(1, 2, 3, 5), 1.0, &mut rng);
        let y = upsample2x_forward(&x, &w, &b, &spec).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 2, 6, 10));
        for c in 0..2 {
            for yy in 0..6 {
                for xx in 0..10 {
                    assert_eq!(y.get(0, c, yy, xx), x.get(0, c, yy / 2, xx / 2));
                }
            }
        }
    }

    #[test]
    fn average_pool_inverts_nearest_upsample() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (spec, w, b) = nearest_double(3);
        let x = Tensor::randn(Shape::new(2, 3, 4, 4), 1.0, &mut rng);
        let y = upsample2x_forward(&x, &w, &b, &spec).unwrap();
        for n in 0..2 {
            for c in 0..3 {
                for yy in 0..4 {
                    for xx in 0..4 {
                        let avg = (y.get(n, c, 2 * yy, 2 * xx)
                            + y.get(n, c, 2 * yy + 1, 2 * xx)
                            + y.get(n, c, 2 * yy, 2 * xx + 1)
                            + y.get(n, c, 2 * yy + 1, 2 * xx + 1))
                            / 4.0;
                        assert!((avg - x.get(n, c, yy, xx)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn upsample_to_duplicates_blocks() {
        let spec = UpsampleSpec::by_scale(1, 1, 4);
        let w = Tensor::<f32>::full(spec.weight_shape(), 1.0);
        let b = Tensor::zeros(spec.bias_shape());
        let x = Tensor::from_vec(Shape::new(1, 1, 2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = upsample_to_forward(&x, &w, &b, &spec, (8, 8)).unwrap();
        for yy in 0..8 {
            for xx in 0..8 {
                assert_eq!(y.get(0, 0, yy, xx), x.get(0, 0, yy / 4, xx / 4));
            }
        }
    }

    #[test]
    fn upsample_scale_one_is_pointwise_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let up = UpsampleSpec::by_scale(3, 2, 1);
        let conv = ConvSpec::same(3, 2, 1, 1).unwrap();
        let x = Tensor::randn(Shape::new(1, 3, 5, 5), 1.0, &mut rng);
        let wt = Tensor::randn(up.weight_shape(), 1.0, &mut rng);
        let b = Tensor::randn(up.bias_shape(), 1.0, &mut rng);
        // (cin, cout) -> (cout, cin)
        let mut wc = Tensor::zeros(conv.weight_shape());
        for ci in 0..3 {
            for co in 0..2 {
                wc.set(co, ci, 0, 0, wt.get(ci, co, 0, 0));
            }
        }
        close(
            &upsample_to_forward(&x, &wt, &b, &up, (5, 5)).unwrap(),
            &conv2d_forward(&x, &wc, &b, &conv).unwrap(),
        );
    }

    #[test]
    fn upsample_scale_validation() {
        assert_eq!(upsample_scale((4, 4), (64, 64)).unwrap(), 16);
        assert_eq!(upsample_scale((4, 4), (4, 4)).unwrap(), 1);
        assert!(upsample_scale((4, 4), (12, 12)).is_err());
        assert!(upsample_scale((4, 4), (10, 10)).is_err());
        assert!(upsample_scale((4, 4), (8, 16)).is_err());
    }

    #[test]
    fn conv_is_linear_without_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spec = ConvSpec::same(2, 3, 9, 1).unwrap();
        let x = Tensor::<f32>::randn(Shape::new(1, 2, 8, 8), 1.0, &mut rng);
        let y = Tensor::<f32>::randn(Shape::new(1, 2, 8, 8), 1.0, &mut rng);
        let w = Tensor::randn(spec.weight_shape(), 0.5, &mut rng);
        let b = Tensor::zeros(spec.bias_shape());
        let (alpha, beta) = (0.7f32, -1.3f32);
        let lhs = conv2d_forward(&x.scale(alpha).add_scaled(&y, beta).unwrap(), &w, &b, &spec).unwrap();
        let rhs = conv2d_forward(&x, &w, &b, &spec)
            .unwrap()
            .scale(alpha)
            .add_scaled(&conv2d_forward(&y, &w, &b, &spec).unwrap(), beta)
            .unwrap();
        for (a, b) in lhs.data().iter().zip(rhs.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}
