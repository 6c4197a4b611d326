//! Spatio-temporal cross-correlation kernels shared by `conv2d` and `conv3d`.

use crate::error::{Error, Result};

#[cfg(test)]
use super::Tensor;

/// Zero padding applied around the input before correlating.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Pad so the output keeps the input extents. Requires odd kernels.
    Same,
    /// No padding.
    Valid,
    /// Explicit per-side padding for the time, height and width axes.
    Explicit { time: usize, height: usize, width: usize },
}

/// Resolved geometry of one correlation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub kt: usize,
    pub kh: usize,
    pub kw: usize,
    pub dilation: usize,
    pub pt: usize,
    pub ph: usize,
    pub pw: usize,
    pub ot: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    /// `x` is `[C_in, T, H, W]`, `w` is `[C_out, C_in, kt, kh, kw]`.
    pub fn resolve(
        op: &'static str,
        x: &[usize],
        w: &[usize],
        b: &[usize],
        dilation: usize,
        padding: Padding,
    ) -> Result<Self> {
        if dilation < 1 {
            return Err(Error::invalid(op, "temporal dilation must be at least 1"));
        }
        let [c_in, t, h, wd] = <[usize; 4]>::try_from(x)
            .map_err(|_| Error::shape(op, format!("input must be rank 4, got {x:?}")))?;
        let [c_out, wc_in, kt, kh, kw] = <[usize; 5]>::try_from(w)
            .map_err(|_| Error::shape(op, format!("weight must be rank 5, got {w:?}")))?;
        if wc_in != c_in {
            return Err(Error::shape(
                op,
                format!("input channels: input has {c_in}, weight expects {wc_in}"),
            ));
        }
        if b != [c_out] {
            return Err(Error::shape(
                op,
                format!("bias: expected [{c_out}] (output channels), got {b:?}"),
            ));
        }
        let (pt, ph, pw) = match padding {
            Padding::Valid => (0, 0, 0),
            Padding::Explicit {
                time,
                height,
                width,
            } => (time, height, width),
            Padding::Same => {
                for (name, k) in [("temporal kernel", kt), ("kernel height", kh), ("kernel width", kw)] {
                    if k % 2 == 0 {
                        return Err(Error::shape(
                            op,
                            format!("{name}: same padding needs an odd extent, got {k}"),
                        ));
                    }
                }
                (dilation * (kt - 1) / 2, (kh - 1) / 2, (kw - 1) / 2)
            }
        };
        let out = |name: &str, n: usize, pad: usize, span: usize| -> Result<usize> {
            (n + 2 * pad)
                .checked_sub(span)
                .map(|v| v + 1)
                .ok_or_else(|| {
                    Error::shape(
                        op,
                        format!("{name}: kernel span {span} exceeds padded extent {}", n + 2 * pad),
                    )
                })
        };
        let ot = out("time", t, pt, dilation * (kt - 1) + 1)?;
        let oh = out("height", h, ph, kh)?;
        let ow = out("width", wd, pw, kw)?;
        Ok(ConvGeom {
            c_in,
            c_out,
            t,
            h,
            w: wd,
            kt,
            kh,
            kw,
            dilation,
            pt,
            ph,
            pw,
            ot,
            oh,
            ow,
        })
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.c_out, self.ot, self.oh, self.ow]
    }
}

/// Output positions `o` in `[0, out_len)` whose input index `o + tap - pad`
/// lies inside `[0, in_len)`.
#[inline]
fn valid_range(out_len: usize, in_len: usize, pad: usize, tap: usize) -> (usize, usize) {
    let start = pad.saturating_sub(tap);
    let end = (in_len + pad).saturating_sub(tap).min(out_len);
    (start, end.max(start))
}

pub(crate) fn forward(g: &ConvGeom, x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let (in_plane, in_frame) = (g.h * g.w, g.t * g.h * g.w);
    let (out_plane, out_frame) = (g.oh * g.ow, g.ot * g.oh * g.ow);
    let mut y = vec![0.0; g.c_out * out_frame];
    for co in 0..g.c_out {
        let yc = &mut y[co * out_frame..(co + 1) * out_frame];
        yc.fill(b[co]);
        for ci in 0..g.c_in {
            let xc = &x[ci * in_frame..(ci + 1) * in_frame];
            for a in 0..g.kt {
                let (t0, t1) = valid_range(g.ot, g.t, g.pt, a * g.dilation);
                for p in 0..g.kh {
                    let (h0, h1) = valid_range(g.oh, g.h, g.ph, p);
                    for q in 0..g.kw {
                        let (w0, w1) = valid_range(g.ow, g.w, g.pw, q);
                        let wv = w[(((co * g.c_in + ci) * g.kt + a) * g.kh + p) * g.kw + q];
                        for ot in t0..t1 {
                            let it = ot + a * g.dilation - g.pt;
                            for oh in h0..h1 {
                                let ih = oh + p - g.ph;
                                let yrow = &mut yc[ot * out_plane + oh * g.ow..][w0..w1];
                                let xrow = &xc[it * in_plane + ih * g.w + w0 + q - g.pw..][..w1 - w0];
                                for (yv, xv) in yrow.iter_mut().zip(xrow) {
                                    *yv += wv * xv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Vector-Jacobian products for input, weight and bias.
pub(crate) fn backward(
    g: &ConvGeom,
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    need_x: bool,
    need_w: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>, Vec<f64>) {
    let (in_plane, in_frame) = (g.h * g.w, g.t * g.h * g.w);
    let (out_plane, out_frame) = (g.oh * g.ow, g.ot * g.oh * g.ow);
    let mut dx = need_x.then(|| vec![0.0; g.c_in * in_frame]);
    let mut dw = need_w.then(|| vec![0.0; w.len()]);
    let db: Vec<f64> = (0..g.c_out)
        .map(|co| dy[co * out_frame..(co + 1) * out_frame].iter().sum())
        .collect();
    for co in 0..g.c_out {
        let dyc = &dy[co * out_frame..(co + 1) * out_frame];
        for ci in 0..g.c_in {
            let base = ci * in_frame;
            for a in 0..g.kt {
                let (t0, t1) = valid_range(g.ot, g.t, g.pt, a * g.dilation);
                for p in 0..g.kh {
                    let (h0, h1) = valid_range(g.oh, g.h, g.ph, p);
                    for q in 0..g.kw {
                        let (w0, w1) = valid_range(g.ow, g.w, g.pw, q);
                        let widx = (((co * g.c_in + ci) * g.kt + a) * g.kh + p) * g.kw + q;
                        let wv = w[widx];
                        let mut acc = 0.0;
                        for ot in t0..t1 {
                            let it = ot + a * g.dilation - g.pt;
                            for oh in h0..h1 {
                                let ih = oh + p - g.ph;
                                let dyrow = &dyc[ot * out_plane + oh * g.ow..][w0..w1];
                                let xo = base + it * in_plane + ih * g.w + w0 + q - g.pw;
                                if need_w {
                                    let xrow = &x[xo..xo + (w1 - w0)];
                                    acc += dyrow.iter().zip(xrow).map(|(d, v)| d * v).sum::<f64>();
                                }
                                if let Some(dx) = dx.as_mut() {
                                    let dxrow = &mut dx[xo..xo + (w1 - w0)];
                                    for (dv, d) in dxrow.iter_mut().zip(dyrow) {
                                        *dv += wv * d;
                                    }
                                }
                            }
                        }
                        if let Some(dw) = dw.as_mut() {
                            dw[widx] += acc;
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

/// Reference correlation by direct summation over every tap; test oracle only.
#[cfg(test)]
pub(crate) fn naive_forward(g: &ConvGeom, x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let mut y = Tensor::zeros(&g.out_shape());
    for co in 0..g.c_out {
        for ot in 0..g.ot {
            for oh in 0..g.oh {
                for ow in 0..g.ow {
                    let mut s = b.data()[co];
                    for ci in 0..g.c_in {
                        for a in 0..g.kt {
                            for p in 0..g.kh {
                                for q in 0..g.kw {
                                    let it = (ot + a * g.dilation) as isize - g.pt as isize;
                                    let ih = (oh + p) as isize - g.ph as isize;
                                    let iw = (ow + q) as isize - g.pw as isize;
                                    if it < 0
                                        || ih < 0
                                        || iw < 0
                                        || it >= g.t as isize
                                        || ih >= g.h as isize
                                        || iw >= g.w as isize
                                    {
                                        continue;
                                    }
                                    s += w.at(&[co, ci, a, p, q])
                                        * x.at(&[ci, it as usize, ih as usize, iw as usize]);
                                }
                            }
                        }
                    }
                    y.set(&[co, ot, oh, ow], s);
                }
            }
        }
    }
    y
}
