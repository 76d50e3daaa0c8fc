use crate::error::{NnError, Result};
use crate::float::Float;
use crate::tape::Var;
use crate::tensor::Tensor;

/// Axis of a rank-4 tensor along which a 1-D filter runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

impl<'t, T: Float> Var<'t, T> {
    /// Non-overlapping max pooling with a square `size` window and stride.
    pub fn max_pool2d(self, size: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let (n, c, h, w) = x.dims4()?;
        if size == 0 || h % size != 0 || w % size != 0 {
            return Err(NnError::shape(
                "max_pool2d",
                format!("{h}x{w} not divisible by window {size}"),
            ));
        }
        let (oh, ow) = (h / size, w / size);
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        let mut argmax = vec![0usize; n * c * oh * ow];
        let src = x.data();
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * size * w + ox * size;
                    for dy in 0..size {
                        for dx in 0..size {
                            let idx = base + (oy * size + dy) * w + ox * size + dx;
                            // first maximum wins on ties
                            if src[idx] > src[best] {
                                best = idx;
                            }
                        }
                    }
                    let o = (plane * oh + oy) * ow + ox;
                    out.data_mut()[o] = src[best];
                    argmax[o] = best;
                }
            }
        }
        let in_shape = x.shape().to_vec();
        Ok(self.tape().record(out, &[self], move |g, _| {
            let mut dx = Tensor::zeros(&in_shape);
            let d = dx.data_mut();
            for (&src_idx, &gv) in argmax.iter().zip(g.data()) {
                d[src_idx] += gv;
            }
            vec![Some(dx)]
        }))
    }

    /// Nearest-neighbour up-sampling by an integer factor.
    pub fn upsample_nearest(self, factor: usize) -> Result<Var<'t, T>> {
        if factor == 0 {
            return Err(NnError::InvalidArgument("upsample factor 0".into()));
        }
        let x = self.value();
        let (n, c, h, w) = x.dims4()?;
        let (oh, ow) = (h * factor, w * factor);
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        {
            let src = x.data();
            let dst = out.data_mut();
            for plane in 0..n * c {
                for oy in 0..oh {
                    let row = &src[(plane * h + oy / factor) * w..(plane * h + oy / factor + 1) * w];
                    let out_row = &mut dst[(plane * oh + oy) * ow..(plane * oh + oy + 1) * ow];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        *v = row[ox / factor];
                    }
                }
            }
        }
        let in_shape = x.shape().to_vec();
        Ok(self.tape().record(out, &[self], move |g, _| {
            let mut dx = Tensor::zeros(&in_shape);
            let d = dx.data_mut();
            let gd = g.data();
            for plane in 0..n * c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        d[(plane * h + oy / factor) * w + ox / factor] += gd[(plane * oh + oy) * ow + ox];
                    }
                }
            }
            vec![Some(dx)]
        }))
    }

    /// Mean over the spatial axes, keeping them as size 1.
    pub fn global_avg_pool(self) -> Result<Var<'t, T>> {
        let x = self.value();
        let (n, c, h, w) = x.dims4()?;
        let plane = h * w;
        let inv = T::one() / T::from_f64(plane as f64);
        let data: Vec<T> = x
            .data()
            .chunks(plane)
            .map(|chunk| chunk.iter().copied().sum::<T>() * inv)
            .collect();
        let out = Tensor::new(&[n, c, 1, 1], data)?;
        let in_shape = x.shape().to_vec();
        Ok(self.tape().record(out, &[self], move |g, _| {
            let mut dx = Tensor::zeros(&in_shape);
            for (chunk, &gv) in dx.data_mut().chunks_mut(plane).zip(g.data()) {
                chunk.fill(gv * inv);
            }
            vec![Some(dx)]
        }))
    }

    /// Concatenates rank-4 tensors along the channel axis.
    pub fn concat_channels(parts: &[Var<'t, T>]) -> Result<Var<'t, T>> {
        let first = parts
            .first()
            .ok_or_else(|| NnError::InvalidArgument("concat of nothing".into()))?;
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let (n, _, h, w) = values[0].dims4()?;
        let mut channels = Vec::with_capacity(parts.len());
        for v in &values {
            let (vn, vc, vh, vw) = v.dims4()?;
            if (vn, vh, vw) != (n, h, w) {
                return Err(NnError::shape(
                    "concat_channels",
                    format!("{:?} vs {:?}", v.shape(), values[0].shape()),
                ));
            }
            channels.push(vc);
        }
        let total: usize = channels.iter().sum();
        let plane = h * w;
        let mut out = Tensor::zeros(&[n, total, h, w]);
        {
            let dst = out.data_mut();
            for s in 0..n {
                let mut offset = s * total * plane;
                for (v, &c) in values.iter().zip(&channels) {
                    let len = c * plane;
                    dst[offset..offset + len].copy_from_slice(&v.data()[s * len..(s + 1) * len]);
                    offset += len;
                }
            }
        }
        Ok(first.tape().record(out, parts, move |g, needs| {
            let gd = g.data();
            let mut start = 0;
            channels
                .iter()
                .zip(needs)
                .map(|(&c, &need)| {
                    let begin = start;
                    start += c;
                    need.then(|| {
                        let len = c * plane;
                        let mut d = Vec::with_capacity(n * len);
                        for s in 0..n {
                            let off = (s * total + begin) * plane;
                            d.extend_from_slice(&gd[off..off + len]);
                        }
                        Tensor::new(&[n, c, h, w], d).expect("slice shape")
                    })
                })
                .collect()
        }))
    }

    /// Channels `[start, start + len)` of a rank-4 tensor.
    pub fn narrow_channels(self, start: usize, len: usize) -> Result<Var<'t, T>> {
        let x = self.value();
        let (n, c, h, w) = x.dims4()?;
        if start + len > c || len == 0 {
            return Err(NnError::shape(
                "narrow_channels",
                format!("[{start}, {}) out of {c} channels", start + len),
            ));
        }
        let plane = h * w;
        let mut d = Vec::with_capacity(n * len * plane);
        for s in 0..n {
            let off = (s * c + start) * plane;
            d.extend_from_slice(&x.data()[off..off + len * plane]);
        }
        let out = Tensor::new(&[n, len, h, w], d)?;
        let in_shape = x.shape().to_vec();
        Ok(self.tape().record(out, &[self], move |g, _| {
            let mut dx = Tensor::zeros(&in_shape);
            for s in 0..n {
                let off = (s * c + start) * plane;
                dx.data_mut()[off..off + len * plane]
                    .copy_from_slice(&g.data()[s * len * plane..(s + 1) * len * plane]);
            }
            vec![Some(dx)]
        }))
    }

    /// Valid (unpadded) 1-D correlation of every plane with `kernel` along `axis`.
    pub fn filter_1d(self, kernel: &[T], axis: Axis) -> Result<Var<'t, T>> {
        let x = self.value();
        let (n, c, h, w) = x.dims4()?;
        let k = kernel.len();
        let (oh, ow) = match axis {
            Axis::Rows => (h.checked_sub(k - 1), Some(w)),
            Axis::Cols => (Some(h), w.checked_sub(k - 1)),
        };
        let (oh, ow) = match (oh, ow) {
            (Some(oh), Some(ow)) if k > 0 && oh > 0 && ow > 0 => (oh, ow),
            _ => {
                return Err(NnError::shape(
                    "filter_1d",
                    format!("kernel of {k} taps larger than {h}x{w}"),
                ))
            }
        };
        let step_in = match axis {
            Axis::Rows => w,
            Axis::Cols => 1,
        };
        let kernel = kernel.to_vec();
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        {
            let src = x.data();
            let dst = out.data_mut();
            for plane in 0..n * c {
                for y in 0..oh {
                    for xo in 0..ow {
                        let base = plane * h * w + y * w + xo;
                        let mut acc = T::zero();
                        for (t, &kv) in kernel.iter().enumerate() {
                            acc += kv * src[base + t * step_in];
                        }
                        dst[(plane * oh + y) * ow + xo] = acc;
                    }
                }
            }
        }
        let in_shape = x.shape().to_vec();
        Ok(self.tape().record(out, &[self], move |g, _| {
            let mut dx = Tensor::zeros(&in_shape);
            let d = dx.data_mut();
            let gd = g.data();
            for plane in 0..n * c {
                for y in 0..oh {
                    for xo in 0..ow {
                        let gv = gd[(plane * oh + y) * ow + xo];
                        let base = plane * h * w + y * w + xo;
                        for (t, &kv) in kernel.iter().enumerate() {
                            d[base + t * step_in] += kv * gv;
                        }
                    }
                }
            }
            vec![Some(dx)]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;

    #[test]
    fn max_pool_routes_gradient_to_argmax() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(
            Tensor::new(&[1, 1, 2, 4], vec![1.0, 5.0, 2.0, 2.0, 3.0, 4.0, 9.0, 0.0]).unwrap(),
        );
        let y = x.max_pool2d(2).unwrap();
        assert_eq!(y.value().data(), &[5.0, 9.0]);
        let grads = tape.backward(y.sum_all()).unwrap();
        assert_eq!(
            grads.get(x).unwrap().data(),
            &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]
        );
    }

    #[test]
    fn max_pool_rejects_odd_sizes() {
        let tape = Tape::<f32>::new();
        assert!(tape.constant(Tensor::zeros(&[1, 1, 3, 4])).max_pool2d(2).is_err());
    }

    #[test]
    fn upsample_then_gradient_sums_blocks() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::new(&[1, 1, 1, 2], vec![1.0, 2.0]).unwrap());
        let y = x.upsample_nearest(2).unwrap();
        assert_eq!(y.value().data(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
        let grads = tape.backward(y.sum_all()).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[4.0, 4.0]);
    }

    #[test]
    fn concat_then_narrow_is_identity() {
        let tape = Tape::<f64>::new();
        let a = tape.leaf(Tensor::from_fn(&[2, 1, 2, 2], |i| i as f64));
        let b = tape.leaf(Tensor::from_fn(&[2, 2, 2, 2], |i| 100.0 + i as f64));
        let cat = Var::concat_channels(&[a, b]).unwrap();
        assert_eq!(cat.shape(), vec![2, 3, 2, 2]);
        let back = cat.narrow_channels(1, 2).unwrap();
        assert_eq!(*back.value(), *b.value());
        let grads = tape.backward(back.sum_all()).unwrap();
        assert!(grads.get(a).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(grads.get(b).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn filter_1d_along_each_axis() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_fn(&[1, 1, 3, 3], |i| i as f64));
        let rows = x.filter_1d(&[1.0, 1.0], Axis::Rows).unwrap().value();
        assert_eq!(rows.shape(), &[1, 1, 2, 3]);
        assert_eq!(rows.data(), &[3.0, 5.0, 7.0, 9.0, 11.0, 13.0]);
        let cols = x.filter_1d(&[1.0, -1.0], Axis::Cols).unwrap().value();
        assert_eq!(cols.shape(), &[1, 1, 3, 2]);
        assert!(cols.data().iter().all(|&v| v == -1.0));
    }
}
