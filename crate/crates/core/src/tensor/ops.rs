//! Raw convolution kernels (forward and backward) on NCHW tensors.
//!
//! Stride is fixed at 1. `pad` zero-pads both spatial borders symmetrically.

use super::{Tensor, TensorError};

/// Geometry shared by the kernels.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub b: usize,
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

pub(crate) fn conv_geom(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, pad: usize, depthwise: bool) -> Result<ConvGeom, TensorError> {
    let op = if depthwise { "depthwise_conv2d" } else { "conv2d" };
    let (b, cin, h, wd) = x.dims4()?;
    let (cout, wcin, kh, kw) = w.dims4().map_err(|_| TensorError::InvalidShape {
        op,
        reason: format!("weight must be rank 4, got {:?}", w.shape()),
    })?;
    let expected_wcin = if depthwise { 1 } else { cin };
    if wcin != expected_wcin || (depthwise && cout != cin) {
        return Err(TensorError::ShapeMismatch {
            op,
            left: x.shape().to_vec(),
            right: w.shape().to_vec(),
        });
    }
    if let Some(bias) = bias {
        if bias.shape() != [cout] {
            return Err(TensorError::ShapeMismatch {
                op,
                left: w.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
    }
    if h + 2 * pad < kh || wd + 2 * pad < kw {
        return Err(TensorError::InvalidShape {
            op,
            reason: format!("kernel {kh}x{kw} larger than padded input {h}x{wd} (pad {pad})"),
        });
    }
    Ok(ConvGeom {
        b,
        cin,
        cout,
        h,
        w: wd,
        kh,
        kw,
        pad,
        oh: h + 2 * pad - kh + 1,
        ow: wd + 2 * pad - kw + 1,
    })
}

/// Output columns `ox` for which input column `ox + dx - pad` is in range.
#[inline]
fn valid_range(dx: usize, pad: usize, width: usize, out: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(dx);
    let hi = (width + pad).saturating_sub(dx).min(out);
    (lo, hi.max(lo))
}

/// Accumulates `scale * x[ci] ⋆ k` into `out[co]` for one image.
#[inline]
fn correlate_plane(xp: &[f64], kernel: &[f64], out: &mut [f64], g: &ConvGeom) {
    for dy in 0..g.kh {
        let (y_lo, y_hi) = valid_range(dy, g.pad, g.h, g.oh);
        for dx in 0..g.kw {
            let wv = kernel[dy * g.kw + dx];
            if wv == 0.0 {
                continue;
            }
            let (x_lo, x_hi) = valid_range(dx, g.pad, g.w, g.ow);
            for oy in y_lo..y_hi {
                let iy = oy + dy - g.pad;
                let in_row = &xp[iy * g.w..(iy + 1) * g.w];
                let out_row = &mut out[oy * g.ow..(oy + 1) * g.ow];
                for ox in x_lo..x_hi {
                    out_row[ox] += wv * in_row[ox + dx - g.pad];
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, g: &ConvGeom, depthwise: bool) -> Tensor {
    let plane_in = g.h * g.w;
    let plane_out = g.oh * g.ow;
    let ksize = g.kh * g.kw;
    let mut out = vec![0.0; g.b * g.cout * plane_out];
    let (xd, wd) = (x.data(), w.data());
    for b in 0..g.b {
        for co in 0..g.cout {
            let o = &mut out[(b * g.cout + co) * plane_out..][..plane_out];
            if let Some(bias) = bias {
                o.iter_mut().for_each(|v| *v = bias.data()[co]);
            }
            let inputs = if depthwise { co..co + 1 } else { 0..g.cin };
            for ci in inputs {
                let xp = &xd[(b * g.cin + ci) * plane_in..][..plane_in];
                let k_index = if depthwise { co } else { co * g.cin + ci };
                correlate_plane(xp, &wd[k_index * ksize..][..ksize], o, g);
            }
        }
    }
    Tensor::new(vec![g.b, g.cout, g.oh, g.ow], out).expect("conv output shape")
}

pub(crate) struct ConvGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

pub(crate) fn conv2d_backward(x: &Tensor, w: &Tensor, dout: &Tensor, g: &ConvGeom, depthwise: bool) -> ConvGrads {
    let plane_in = g.h * g.w;
    let plane_out = g.oh * g.ow;
    let ksize = g.kh * g.kw;
    let mut dx = vec![0.0; x.numel()];
    let mut dw = vec![0.0; w.numel()];
    let mut db = vec![0.0; g.cout];
    let (xd, wd, god) = (x.data(), w.data(), dout.data());
    for b in 0..g.b {
        for co in 0..g.cout {
            let go = &god[(b * g.cout + co) * plane_out..][..plane_out];
            db[co] += go.iter().sum::<f64>();
            let inputs = if depthwise { co..co + 1 } else { 0..g.cin };
            for ci in inputs {
                let k_index = if depthwise { co } else { co * g.cin + ci };
                let xp = &xd[(b * g.cin + ci) * plane_in..][..plane_in];
                let dxp = &mut dx[(b * g.cin + ci) * plane_in..][..plane_in];
                for dy in 0..g.kh {
                    let (y_lo, y_hi) = valid_range(dy, g.pad, g.h, g.oh);
                    for dxk in 0..g.kw {
                        let (x_lo, x_hi) = valid_range(dxk, g.pad, g.w, g.ow);
                        let wv = wd[k_index * ksize + dy * g.kw + dxk];
                        let mut acc = 0.0;
                        for oy in y_lo..y_hi {
                            let iy = oy + dy - g.pad;
                            let (ix_lo, ix_hi) = (x_lo + dxk - g.pad, x_hi + dxk - g.pad);
                            let grow = &go[oy * g.ow + x_lo..oy * g.ow + x_hi];
                            let xrow = &xp[iy * g.w + ix_lo..iy * g.w + ix_hi];
                            let dxrow = &mut dxp[iy * g.w + ix_lo..iy * g.w + ix_hi];
                            for ((&gv, &xv), dxv) in grow.iter().zip(xrow).zip(dxrow) {
                                acc += gv * xv;
                                *dxv += wv * gv;
                            }
                        }
                        dw[k_index * ksize + dy * g.kw + dxk] += acc;
                    }
                }
            }
        }
    }
    ConvGrads {
        dx: Tensor::new(x.shape().to_vec(), dx).expect("dx shape"),
        dw: Tensor::new(w.shape().to_vec(), dw).expect("dw shape"),
        db: Tensor::new(vec![g.cout], db).expect("db shape"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_clips_borders() {
        // 3-wide kernel, pad 1, width 4: dx=0 skips the first column, dx=2 the last
        assert_eq!(valid_range(0, 1, 4, 4), (1, 4));
        assert_eq!(valid_range(1, 1, 4, 4), (0, 4));
        assert_eq!(valid_range(2, 1, 4, 4), (0, 3));
    }
}
