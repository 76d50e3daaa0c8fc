use crate::error::{NnError, Result};
use crate::float::Float;
use crate::tape::Var;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvOptions {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl Default for ConvOptions {
    fn default() -> Self {
        ConvOptions {
            stride: 1,
            padding: 0,
            dilation: 1,
        }
    }
}

impl ConvOptions {
    /// Stride 1 with "same" padding for an odd kernel.
    pub fn same(kernel: usize, dilation: usize) -> Self {
        ConvOptions {
            stride: 1,
            padding: dilation * (kernel - 1) / 2,
            dilation,
        }
    }

    pub fn strided(kernel: usize, stride: usize) -> Self {
        ConvOptions {
            stride,
            padding: (kernel - 1) / 2,
            dilation: 1,
        }
    }
}

/// Sliding-window geometry of one image plane stack.
#[derive(Clone, Copy, Debug)]
struct Geometry {
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    dilation: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn new(
        op: &'static str,
        (channels, height, width): (usize, usize, usize),
        (kh, kw): (usize, usize),
        opts: ConvOptions,
    ) -> Result<Self> {
        if opts.stride == 0 || opts.dilation == 0 {
            return Err(NnError::InvalidArgument(format!(
                "{op}: stride and dilation must be positive"
            )));
        }
        let span_h = opts.dilation * (kh - 1) + 1;
        let span_w = opts.dilation * (kw - 1) + 1;
        if height + 2 * opts.padding < span_h || width + 2 * opts.padding < span_w {
            return Err(NnError::shape(
                op,
                format!("kernel {kh}x{kw} (dilation {}) larger than padded input {height}x{width}", opts.dilation),
            ));
        }
        Ok(Geometry {
            channels,
            height,
            width,
            kh,
            kw,
            stride: opts.stride,
            pad: opts.padding,
            dilation: opts.dilation,
            out_h: (height + 2 * opts.padding - span_h) / opts.stride + 1,
            out_w: (width + 2 * opts.padding - span_w) / opts.stride + 1,
        })
    }

    fn col_rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Valid output-column range for kernel column offset `off` (may be negative).
    fn valid_range(&self, off: isize, out_len: usize, in_len: usize) -> (usize, usize) {
        let s = self.stride as isize;
        // smallest o with o*s + off >= 0
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        // largest o with o*s + off <= in_len - 1, exclusive bound
        let hi_incl = (in_len as isize - 1 - off).div_euclid(s);
        let hi = (hi_incl + 1).clamp(0, out_len as isize);
        let lo = lo.min(hi);
        (lo as usize, hi as usize)
    }

    fn im2col<T: Float>(&self, image: &[T], col: &mut [T]) {
        let cols = self.col_cols();
        for c in 0..self.channels {
            let plane = &image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ki in 0..self.kh {
                let off_y = (ki * self.dilation) as isize - self.pad as isize;
                for kj in 0..self.kw {
                    let off_x = (kj * self.dilation) as isize - self.pad as isize;
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    let (x_lo, x_hi) = self.valid_range(off_x, self.out_w, self.width);
                    for oy in 0..self.out_h {
                        let out_row = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        let iy = (oy * self.stride) as isize + off_y;
                        if iy < 0 || iy >= self.height as isize {
                            out_row.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.width..(iy as usize + 1) * self.width];
                        out_row[..x_lo].fill(T::zero());
                        out_row[x_hi..].fill(T::zero());
                        if self.stride == 1 {
                            let start = (x_lo as isize + off_x) as usize;
                            out_row[x_lo..x_hi].copy_from_slice(&src[start..start + (x_hi - x_lo)]);
                        } else {
                            for ox in x_lo..x_hi {
                                out_row[ox] = src[((ox * self.stride) as isize + off_x) as usize];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Geometry::im2col`]: scatters columns back, accumulating.
    fn col2im<T: Float>(&self, col: &[T], image: &mut [T]) {
        let cols = self.col_cols();
        for c in 0..self.channels {
            let plane =
                &mut image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ki in 0..self.kh {
                let off_y = (ki * self.dilation) as isize - self.pad as isize;
                for kj in 0..self.kw {
                    let off_x = (kj * self.dilation) as isize - self.pad as isize;
                    let row = (c * self.kh + ki) * self.kw + kj;
                    let src = &col[row * cols..(row + 1) * cols];
                    let (x_lo, x_hi) = self.valid_range(off_x, self.out_w, self.width);
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride) as isize + off_y;
                        if iy < 0 || iy >= self.height as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.width..(iy as usize + 1) * self.width];
                        let in_row = &src[oy * self.out_w..(oy + 1) * self.out_w];
                        for ox in x_lo..x_hi {
                            dst[((ox * self.stride) as isize + off_x) as usize] += in_row[ox];
                        }
                    }
                }
            }
        }
    }
}

fn add_bias<T: Float>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        for v in chunk {
            *v += b;
        }
    }
}

fn bias_grad<T: Float>(g: &Tensor<T>, channels: usize) -> Tensor<T> {
    let (n, c, h, w) = g.dims4().expect("rank-4 gradient");
    debug_assert_eq!(c, channels);
    let plane = h * w;
    let mut db = vec![T::zero(); c];
    for sample in g.data().chunks(c * plane).take(n) {
        for (acc, chunk) in db.iter_mut().zip(sample.chunks(plane)) {
            *acc += chunk.iter().copied().sum::<T>();
        }
    }
    Tensor::new(&[c], db).expect("bias length")
}

fn check_bias<T: Float>(op: &'static str, bias: Option<&Var<'_, T>>, channels: usize) -> Result<()> {
    if let Some(b) = bias {
        let shape = b.shape();
        if shape != [channels] {
            return Err(NnError::shape(
                op,
                format!("bias shape {shape:?}, expected [{channels}]"),
            ));
        }
    }
    Ok(())
}

impl<'t, T: Float> Var<'t, T> {
    /// 2-D cross-correlation. `weight` is `(out, in, kh, kw)`, bias `(out)`.
    pub fn conv2d(
        self,
        weight: Var<'t, T>,
        bias: Option<Var<'t, T>>,
        opts: ConvOptions,
    ) -> Result<Var<'t, T>> {
        let x = self.value();
        let w = weight.value();
        let (n, c, h, wd) = x.dims4()?;
        let (o, wc, kh, kw) = w.dims4()?;
        if wc != c {
            return Err(NnError::shape(
                "conv2d",
                format!("input has {c} channels, weight expects {wc}"),
            ));
        }
        check_bias("conv2d", bias.as_ref(), o)?;
        let geom = Geometry::new("conv2d", (c, h, wd), (kh, kw), opts)?;
        let (k, p) = (geom.col_rows(), geom.col_cols());

        let mut out = Tensor::zeros(&[n, o, geom.out_h, geom.out_w]);
        let mut col = vec![T::zero(); k * p];
        for s in 0..n {
            geom.im2col(&x.data()[s * c * h * wd..(s + 1) * c * h * wd], &mut col);
            let y = &mut out.data_mut()[s * o * p..(s + 1) * o * p];
            T::gemm(o, k, p, T::one(), w.data(), (k as isize, 1), &col, (p as isize, 1), T::zero(), y, (p as isize, 1));
        }
        if let Some(b) = &bias {
            let b = b.value();
            for s in 0..n {
                add_bias(&mut out.data_mut()[s * o * p..(s + 1) * o * p], b.data(), p);
            }
        }

        let mut parents = vec![self, weight];
        parents.extend(bias);
        Ok(self.tape().record(out, &parents, move |g, needs| {
            let mut dx = needs[0].then(|| Tensor::zeros(x.shape()));
            let mut dw = needs[1].then(|| Tensor::zeros(w.shape()));
            let mut col = vec![T::zero(); k * p];
            for s in 0..n {
                let gy = &g.data()[s * o * p..(s + 1) * o * p];
                if let Some(dw) = dw.as_mut() {
                    geom.im2col(&x.data()[s * c * h * wd..(s + 1) * c * h * wd], &mut col);
                    T::gemm(o, p, k, T::one(), gy, (p as isize, 1), &col, (1, p as isize), T::one(), dw.data_mut(), (k as isize, 1));
                }
                if let Some(dx) = dx.as_mut() {
                    T::gemm(k, o, p, T::one(), w.data(), (1, k as isize), gy, (p as isize, 1), T::zero(), &mut col, (p as isize, 1));
                    geom.col2im(&col, &mut dx.data_mut()[s * c * h * wd..(s + 1) * c * h * wd]);
                }
            }
            let mut grads = vec![dx, dw];
            if needs.len() == 3 {
                grads.push(needs[2].then(|| bias_grad(g, o)));
            }
            grads
        }))
    }

    /// Transposed convolution (the adjoint of [`Var::conv2d`] w.r.t. its
    /// input). `weight` is `(in, out, kh, kw)`.
    pub fn conv_transpose2d(
        self,
        weight: Var<'t, T>,
        bias: Option<Var<'t, T>>,
        stride: usize,
        padding: usize,
    ) -> Result<Var<'t, T>> {
        let x = self.value();
        let w = weight.value();
        let (n, cin, h, wd) = x.dims4()?;
        let (wc, cout, kh, kw) = w.dims4()?;
        if wc != cin {
            return Err(NnError::shape(
                "conv_transpose2d",
                format!("input has {cin} channels, weight expects {wc}"),
            ));
        }
        check_bias("conv_transpose2d", bias.as_ref(), cout)?;
        if stride == 0 {
            return Err(NnError::InvalidArgument("conv_transpose2d: zero stride".into()));
        }
        let out_h = ((h - 1) * stride + kh)
            .checked_sub(2 * padding)
            .filter(|&v| v > 0)
            .ok_or_else(|| NnError::shape("conv_transpose2d", "padding too large"))?;
        let out_w = ((wd - 1) * stride + kw)
            .checked_sub(2 * padding)
            .filter(|&v| v > 0)
            .ok_or_else(|| NnError::shape("conv_transpose2d", "padding too large"))?;
        let geom = Geometry::new(
            "conv_transpose2d",
            (cout, out_h, out_w),
            (kh, kw),
            ConvOptions {
                stride,
                padding,
                dilation: 1,
            },
        )?;
        debug_assert_eq!((geom.out_h, geom.out_w), (h, wd));
        let (k, p) = (geom.col_rows(), geom.col_cols());
        let plane_out = out_h * out_w;

        let mut out = Tensor::zeros(&[n, cout, out_h, out_w]);
        let mut col = vec![T::zero(); k * p];
        for s in 0..n {
            let xs = &x.data()[s * cin * p..(s + 1) * cin * p];
            T::gemm(k, cin, p, T::one(), w.data(), (1, k as isize), xs, (p as isize, 1), T::zero(), &mut col, (p as isize, 1));
            geom.col2im(&col, &mut out.data_mut()[s * cout * plane_out..(s + 1) * cout * plane_out]);
        }
        if let Some(b) = &bias {
            let b = b.value();
            for s in 0..n {
                add_bias(
                    &mut out.data_mut()[s * cout * plane_out..(s + 1) * cout * plane_out],
                    b.data(),
                    plane_out,
                );
            }
        }

        let mut parents = vec![self, weight];
        parents.extend(bias);
        Ok(self.tape().record(out, &parents, move |g, needs| {
            let mut dx = needs[0].then(|| Tensor::zeros(x.shape()));
            let mut dw = needs[1].then(|| Tensor::zeros(w.shape()));
            let mut col = vec![T::zero(); k * p];
            for s in 0..n {
                geom.im2col(&g.data()[s * cout * plane_out..(s + 1) * cout * plane_out], &mut col);
                if let Some(dx) = dx.as_mut() {
                    let dxs = &mut dx.data_mut()[s * cin * p..(s + 1) * cin * p];
                    T::gemm(cin, k, p, T::one(), w.data(), (k as isize, 1), &col, (p as isize, 1), T::zero(), dxs, (p as isize, 1));
                }
                if let Some(dw) = dw.as_mut() {
                    let xs = &x.data()[s * cin * p..(s + 1) * cin * p];
                    T::gemm(cin, p, k, T::one(), xs, (p as isize, 1), &col, (1, p as isize), T::one(), dw.data_mut(), (k as isize, 1));
                }
            }
            let mut grads = vec![dx, dw];
            if needs.len() == 3 {
                grads.push(needs[2].then(|| bias_grad(g, cout)));
            }
            grads
        }))
    }
}
