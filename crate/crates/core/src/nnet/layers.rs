//! Layer kernels with hand-written reverse-mode gradients.
//!
//! A [`Stack`] is a sequence of ops over flat `f64` buffers (`[c, h, w]`
//! row-major for feature maps). The forward pass caches what the backward
//! pass needs: every op's input and the winning index of each max-pool cell.

use crate::error::{Error, Result};

use super::Tensor;

#[derive(Debug, Clone)]
pub(crate) enum Op {
    Conv {
        weight: usize,
        bias: usize,
        in_c: usize,
        out_c: usize,
        k: usize,
        h: usize,
        w: usize,
    },
    Relu,
    MaxPool {
        size: usize,
        c: usize,
        h: usize,
        w: usize,
    },
    GlobalAvgPool {
        c: usize,
        hw: usize,
    },
    Dense {
        weight: usize,
        bias: usize,
        inp: usize,
        out: usize,
    },
}

#[derive(Debug, Clone)]
pub(crate) struct Stack {
    pub ops: Vec<Op>,
    /// Human-readable op names for error messages, e.g. `full.conv1`.
    pub labels: Vec<String>,
    pub out_len: usize,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct StackCache {
    inputs: Vec<Vec<f64>>,
    argmax: Vec<Vec<u32>>,
}

fn conv_forward(x: &[f64], weight: &[f64], bias: &[f64], in_c: usize, out_c: usize, k: usize, h: usize, w: usize) -> Vec<f64> {
    let p = (k / 2) as isize;
    let hw = h * w;
    let mut out = vec![0.0; out_c * hw];
    for oc in 0..out_c {
        let o = &mut out[oc * hw..(oc + 1) * hw];
        o.iter_mut().for_each(|v| *v = bias[oc]);
        for ic in 0..in_c {
            let xin = &x[ic * hw..(ic + 1) * hw];
            for ky in 0..k {
                let dy = ky as isize - p;
                let y0 = (-dy).max(0) as usize;
                let y1 = (h as isize - dy).min(h as isize) as usize;
                for kx in 0..k {
                    let dx = kx as isize - p;
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize) as usize;
                    let wv = weight[((oc * in_c + ic) * k + ky) * k + kx];
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let orow = &mut o[y * w + x0..y * w + x1];
                        let sx0 = (x0 as isize + dx) as usize;
                        let irow = &xin[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                        for (ov, iv) in orow.iter_mut().zip(irow) {
                            *ov += wv * iv;
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    dout: &[f64],
    weight: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    din: Option<&mut [f64]>,
    in_c: usize,
    out_c: usize,
    k: usize,
    h: usize,
    w: usize,
) {
    let p = (k / 2) as isize;
    let hw = h * w;
    let mut din = din;
    for oc in 0..out_c {
        let d = &dout[oc * hw..(oc + 1) * hw];
        gb[oc] += d.iter().sum::<f64>();
        for ic in 0..in_c {
            let xin = &x[ic * hw..(ic + 1) * hw];
            for ky in 0..k {
                let dy = ky as isize - p;
                let y0 = (-dy).max(0) as usize;
                let y1 = (h as isize - dy).min(h as isize) as usize;
                for kx in 0..k {
                    let dx = kx as isize - p;
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize) as usize;
                    let widx = ((oc * in_c + ic) * k + ky) * k + kx;
                    let wv = weight[widx];
                    let sx0 = (x0 as isize + dx) as usize;
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let drow = &d[y * w + x0..y * w + x1];
                        let irow = &xin[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                        for (dv, iv) in drow.iter().zip(irow) {
                            acc += dv * iv;
                        }
                        if let Some(din) = din.as_deref_mut() {
                            let grow = &mut din[ic * hw + sy * w + sx0..ic * hw + sy * w + sx0 + (x1 - x0)];
                            for (g, dv) in grow.iter_mut().zip(drow) {
                                *g += wv * dv;
                            }
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
}

fn maxpool_forward(x: &[f64], size: usize, c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<u32>) {
    let (oh, ow) = (h / size, w / size);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = 0usize;
                for dy in 0..size {
                    for dx in 0..size {
                        let i = ch * h * w + (oy * size + dy) * w + ox * size + dx;
                        if x[i] > best {
                            best = x[i];
                            best_i = i;
                        }
                    }
                }
                out.push(best);
                arg.push(best_i as u32);
            }
        }
    }
    (out, arg)
}

impl Op {
    fn forward(&self, params: &[Tensor], x: &[f64]) -> (Vec<f64>, Vec<u32>) {
        match *self {
            Op::Conv {
                weight,
                bias,
                in_c,
                out_c,
                k,
                h,
                w,
            } => (
                conv_forward(x, params[weight].data(), params[bias].data(), in_c, out_c, k, h, w),
                Vec::new(),
            ),
            Op::Relu => (x.iter().map(|&v| v.max(0.0)).collect(), Vec::new()),
            Op::MaxPool { size, c, h, w } => maxpool_forward(x, size, c, h, w),
            Op::GlobalAvgPool { c, hw } => (
                (0..c)
                    .map(|ch| x[ch * hw..(ch + 1) * hw].iter().sum::<f64>() / hw as f64)
                    .collect(),
                Vec::new(),
            ),
            Op::Dense {
                weight,
                bias,
                inp,
                out,
            } => {
                let wt = params[weight].data();
                let b = params[bias].data();
                (
                    (0..out)
                        .map(|o| {
                            let row = &wt[o * inp..(o + 1) * inp];
                            b[o] + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
                        })
                        .collect(),
                    Vec::new(),
                )
            }
        }
    }

    /// Accumulate parameter gradients; return the input gradient when asked.
    fn backward(
        &self,
        params: &[Tensor],
        grads: &mut [Tensor],
        x: &[f64],
        argmax: &[u32],
        dout: &[f64],
        need_input: bool,
    ) -> Option<Vec<f64>> {
        match *self {
            Op::Conv {
                weight,
                bias,
                in_c,
                out_c,
                k,
                h,
                w,
            } => {
                let mut din = need_input.then(|| vec![0.0; x.len()]);
                let (gw, gb) = two_mut(grads, weight, bias);
                conv_backward(
                    x,
                    dout,
                    params[weight].data(),
                    gw.data_mut(),
                    gb.data_mut(),
                    din.as_deref_mut(),
                    in_c,
                    out_c,
                    k,
                    h,
                    w,
                );
                din
            }
            Op::Relu => need_input.then(|| {
                x.iter()
                    .zip(dout)
                    .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
                    .collect()
            }),
            Op::MaxPool { .. } => need_input.then(|| {
                let mut din = vec![0.0; x.len()];
                for (&i, &d) in argmax.iter().zip(dout) {
                    din[i as usize] += d;
                }
                din
            }),
            Op::GlobalAvgPool { c, hw } => need_input.then(|| {
                let mut din = vec![0.0; c * hw];
                for ch in 0..c {
                    let g = dout[ch] / hw as f64;
                    din[ch * hw..(ch + 1) * hw].iter_mut().for_each(|v| *v = g);
                }
                din
            }),
            Op::Dense {
                weight,
                bias,
                inp,
                out,
            } => {
                let (gw, gb) = two_mut(grads, weight, bias);
                let gw = gw.data_mut();
                for o in 0..out {
                    let d = dout[o];
                    gb.data_mut()[o] += d;
                    if d != 0.0 {
                        for (g, v) in gw[o * inp..(o + 1) * inp].iter_mut().zip(x) {
                            *g += d * v;
                        }
                    }
                }
                need_input.then(|| {
                    let wt = params[weight].data();
                    let mut din = vec![0.0; inp];
                    for o in 0..out {
                        let d = dout[o];
                        if d != 0.0 {
                            for (g, a) in din.iter_mut().zip(&wt[o * inp..(o + 1) * inp]) {
                                *g += d * a;
                            }
                        }
                    }
                    din
                })
            }
        }
    }
}

fn two_mut(v: &mut [Tensor], a: usize, b: usize) -> (&mut Tensor, &mut Tensor) {
    assert!(a < b, "weight index precedes bias index");
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

impl Stack {
    pub fn forward(&self, params: &[Tensor], input: Vec<f64>) -> Result<(Vec<f64>, StackCache)> {
        let mut cache = StackCache {
            inputs: Vec::with_capacity(self.ops.len()),
            argmax: Vec::with_capacity(self.ops.len()),
        };
        let mut x = input;
        for (op, label) in self.ops.iter().zip(&self.labels) {
            let (y, arg) = op.forward(params, &x);
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    layer: label.clone(),
                });
            }
            cache.inputs.push(x);
            cache.argmax.push(arg);
            x = y;
        }
        Ok((x, cache))
    }

    /// Inference-only forward pass without caching.
    pub fn infer(&self, params: &[Tensor], input: Vec<f64>) -> Result<Vec<f64>> {
        let mut x = input;
        for (op, label) in self.ops.iter().zip(&self.labels) {
            x = op.forward(params, &x).0;
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    layer: label.clone(),
                });
            }
        }
        Ok(x)
    }

    pub fn backward(
        &self,
        params: &[Tensor],
        grads: &mut [Tensor],
        cache: &StackCache,
        dout: Vec<f64>,
        need_input: bool,
    ) -> Result<Option<Vec<f64>>> {
        let mut d = dout;
        for i in (0..self.ops.len()).rev() {
            let want = need_input || i > 0;
            match self.ops[i].backward(params, grads, &cache.inputs[i], &cache.argmax[i], &d, want) {
                Some(next) => {
                    if !next.iter().all(|v| v.is_finite()) {
                        return Err(Error::NonFinite {
                            layer: format!("{} (backward)", self.labels[i]),
                        });
                    }
                    d = next;
                }
                None => return Ok(None),
            }
        }
        Ok(Some(d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_identity_kernel() {
        let mut wt = vec![0.0; 9];
        wt[4] = 1.0;
        let x: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let y = conv_forward(&x, &wt, &[0.5], 1, 1, 3, 3, 4);
        assert_eq!(y, x.iter().map(|v| v + 0.5).collect::<Vec<_>>());
    }

    #[test]
    fn conv_same_padding_sums_neighbours() {
        let wt = vec![1.0; 9];
        let x = vec![1.0; 9];
        let y = conv_forward(&x, &wt, &[0.0], 1, 1, 3, 3, 3);
        assert_eq!(y, vec![4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn maxpool_picks_first_maximum() {
        let x = vec![1.0, 3.0, 3.0, 0.0];
        let (y, arg) = maxpool_forward(&x, 2, 1, 2, 2);
        assert_eq!(y, vec![3.0]);
        assert_eq!(arg, vec![1]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let op = Op::Relu;
        let d = op.backward(&[], &mut [], &[0.0, 1.0, -1.0], &[], &[5.0, 5.0, 5.0], true).unwrap();
        assert_eq!(d, vec![0.0, 5.0, 0.0]);
    }

    #[test]
    fn single_linear_unit_gradient() {
        // y = w·x + b, L = (y − t)², dL/dw = 2(y − t)·x
        let params = vec![
            Tensor::from_vec(vec![1, 1], vec![0.7]).unwrap(),
            Tensor::from_vec(vec![1], vec![0.1]).unwrap(),
        ];
        let mut grads = vec![Tensor::zeros(vec![1, 1]), Tensor::zeros(vec![1])];
        let stack = Stack {
            ops: vec![Op::Dense {
                weight: 0,
                bias: 1,
                inp: 1,
                out: 1,
            }],
            labels: vec!["unit".into()],
            out_len: 1,
        };
        let (x, t) = (2.0, 1.0);
        let (y, cache) = stack.forward(&params, vec![x]).unwrap();
        let dy = 2.0 * (y[0] - t);
        stack.backward(&params, &mut grads, &cache, vec![dy], false).unwrap();
        assert!((grads[0].data()[0] - 2.0 * (y[0] - t) * x).abs() < 1e-15);
        assert!((grads[1].data()[0] - 2.0 * (y[0] - t)).abs() < 1e-15);
    }
}
