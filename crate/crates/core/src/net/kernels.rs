//! Forward and backward kernels for the supported layer types.
//!
//! All kernels are plain sequential loops over row-major buffers so that
//! results are bitwise reproducible for a given input order.

use crate::error::Result;
use crate::tensor::Tensor;

/// Zero-pad a [B,C,H,W] tensor spatially by `pad` on each side.
pub fn pad4(x: &Tensor, pad: usize) -> Result<Tensor> {
    if pad == 0 {
        return Ok(x.clone());
    }
    let (b, c, h, w) = x.dims4("pad4")?;
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0; b * c * ph * pw];
    let xv = x.values();
    for bi in 0..b {
        for ci in 0..c {
            for hi in 0..h {
                let src = ((bi * c + ci) * h + hi) * w;
                let dst = ((bi * c + ci) * ph + hi + pad) * pw + pad;
                out[dst..dst + w].copy_from_slice(&xv[src..src + w]);
            }
        }
    }
    Tensor::new(vec![b, c, ph, pw], out)
}

/// Remove spatial zero-padding added by [`pad4`].
pub fn crop4(x: &Tensor, pad: usize) -> Result<Tensor> {
    if pad == 0 {
        return Ok(x.clone());
    }
    let (b, c, ph, pw) = x.dims4("crop4")?;
    let (h, w) = (ph - 2 * pad, pw - 2 * pad);
    let mut out = vec![0.0; b * c * h * w];
    let xv = x.values();
    for bi in 0..b {
        for ci in 0..c {
            for hi in 0..h {
                let src = ((bi * c + ci) * ph + hi + pad) * pw + pad;
                let dst = ((bi * c + ci) * h + hi) * w;
                out[dst..dst + w].copy_from_slice(&xv[src..src + w]);
            }
        }
    }
    Tensor::new(vec![b, c, h, w], out)
}

pub fn conv_output_side(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding - kernel) / stride + 1
}

/// Convolution forward: x [B,IC,IH,IW] * w [OC,IC,K,K] + b [OC] -> [B,OC,OH,OW].
pub fn conv2d_forward(
    x: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let xp = pad4(x, padding)?;
    let (b, ic, ih, iw) = xp.dims4("conv2d_forward input")?;
    let k = weight.shape()[2];
    let oc = weight.shape()[0];
    let oh = (ih - k) / stride + 1;
    let ow = (iw - k) / stride + 1;

    let xv = xp.values();
    let wv = weight.values();
    let bv = bias.values();
    let mut out = vec![0.0; b * oc * oh * ow];

    for bi in 0..b {
        for o in 0..oc {
            let y_base = (bi * oc + o) * oh * ow;
            out[y_base..y_base + oh * ow].fill(bv[o]);
            for c in 0..ic {
                let x_base = (bi * ic + c) * ih * iw;
                for kh in 0..k {
                    for kw in 0..k {
                        let wv_scalar = wv[((o * ic + c) * k + kh) * k + kw];
                        if wv_scalar == 0.0 {
                            continue;
                        }
                        for yh in 0..oh {
                            let x_row = x_base + (yh * stride + kh) * iw + kw;
                            let y_row = y_base + yh * ow;
                            for yw in 0..ow {
                                out[y_row + yw] += xv[x_row + yw * stride] * wv_scalar;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![b, oc, oh, ow], out)
}

/// Convolution backward. Returns (d_input, d_weight, d_bias).
pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let xp = pad4(x, padding)?;
    let (b, ic, ih, iw) = xp.dims4("conv2d_backward input")?;
    let (gb, oc, oh, ow) = grad_out.dims4("conv2d_backward grad")?;
    debug_assert_eq!(b, gb);
    let k = weight.shape()[2];

    let xv = xp.values();
    let wv = weight.values();
    let gv = grad_out.values();
    let mut dx = vec![0.0; xv.len()];
    let mut dw = vec![0.0; wv.len()];
    let mut db = vec![0.0; oc];

    for bi in 0..b {
        for o in 0..oc {
            let g_base = (bi * oc + o) * oh * ow;
            for g in &gv[g_base..g_base + oh * ow] {
                db[o] += g;
            }
            for c in 0..ic {
                let x_base = (bi * ic + c) * ih * iw;
                for kh in 0..k {
                    for kw in 0..k {
                        let w_idx = ((o * ic + c) * k + kh) * k + kw;
                        let w_scalar = wv[w_idx];
                        let mut dw_acc = 0.0;
                        for yh in 0..oh {
                            let x_row = x_base + (yh * stride + kh) * iw + kw;
                            let g_row = g_base + yh * ow;
                            for yw in 0..ow {
                                let g = gv[g_row + yw];
                                dw_acc += g * xv[x_row + yw * stride];
                                dx[x_row + yw * stride] += g * w_scalar;
                            }
                        }
                        dw[w_idx] += dw_acc;
                    }
                }
            }
        }
    }

    let dx_padded = Tensor::new(vec![b, ic, ih, iw], dx)?;
    Ok((
        crop4(&dx_padded, padding)?,
        Tensor::new(weight.shape().to_vec(), dw)?,
        Tensor::new(vec![oc], db)?,
    ))
}

/// Non-overlapping max pooling. Returns the pooled tensor and, per output
/// element, the flat index of the winning input element (first max wins).
pub fn maxpool_forward(x: &Tensor, size: usize) -> Result<(Tensor, Vec<usize>)> {
    let (b, c, h, w) = x.dims4("maxpool_forward")?;
    let (oh, ow) = (h / size, w / size);
    let xv = x.values();
    let mut out = vec![0.0; b * c * oh * ow];
    let mut argmax = vec![0usize; out.len()];

    for bi in 0..b {
        for ci in 0..c {
            let x_base = (bi * c + ci) * h * w;
            let y_base = (bi * c + ci) * oh * ow;
            for yh in 0..oh {
                for yw in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for dh in 0..size {
                        let row = x_base + (yh * size + dh) * w + yw * size;
                        for dw in 0..size {
                            let v = xv[row + dw];
                            if v > best {
                                best = v;
                                best_idx = row + dw;
                            }
                        }
                    }
                    out[y_base + yh * ow + yw] = best;
                    argmax[y_base + yh * ow + yw] = best_idx;
                }
            }
        }
    }
    Ok((Tensor::new(vec![b, c, oh, ow], out)?, argmax))
}

/// Route pooled gradients back to the winning input positions.
pub fn maxpool_backward(
    grad_out: &Tensor,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor> {
    let mut dx = vec![0.0; input_shape.iter().product()];
    for (g, &idx) in grad_out.values().iter().zip(argmax) {
        dx[idx] += g;
    }
    Tensor::new(input_shape.to_vec(), dx)
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    let values = x.values().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), values).expect("shape preserved")
}

pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let values = x
        .values()
        .iter()
        .zip(grad_out.values())
        .map(|(&xi, &gi)| if xi > 0.0 { gi } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), values).expect("shape preserved")
}

/// Fully connected forward: x [B,IN] * w [OUT,IN]^T + b [OUT] -> [B,OUT].
pub fn linear_forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (b, n_in) = x.dims2("linear_forward input")?;
    let (n_out, _) = weight.dims2("linear_forward weight")?;
    let xv = x.values();
    let wv = weight.values();
    let bv = bias.values();
    let mut out = vec![0.0; b * n_out];
    for bi in 0..b {
        let x_row = &xv[bi * n_in..(bi + 1) * n_in];
        let y_row = &mut out[bi * n_out..(bi + 1) * n_out];
        for (o, y) in y_row.iter_mut().enumerate() {
            let w_row = &wv[o * n_in..(o + 1) * n_in];
            let mut acc = bv[o];
            for (xi, wi) in x_row.iter().zip(w_row) {
                acc += xi * wi;
            }
            *y = acc;
        }
    }
    Tensor::new(vec![b, n_out], out)
}

/// Fully connected backward. Returns (d_input, d_weight, d_bias).
pub fn linear_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (b, n_in) = x.dims2("linear_backward input")?;
    let (n_out, _) = weight.dims2("linear_backward weight")?;
    let xv = x.values();
    let wv = weight.values();
    let gv = grad_out.values();

    let mut dx = vec![0.0; b * n_in];
    let mut dw = vec![0.0; n_out * n_in];
    let mut db = vec![0.0; n_out];

    for bi in 0..b {
        let x_row = &xv[bi * n_in..(bi + 1) * n_in];
        let g_row = &gv[bi * n_out..(bi + 1) * n_out];
        let dx_row = &mut dx[bi * n_in..(bi + 1) * n_in];
        for (o, &g) in g_row.iter().enumerate() {
            db[o] += g;
            let w_row = &wv[o * n_in..(o + 1) * n_in];
            let dw_row = &mut dw[o * n_in..(o + 1) * n_in];
            for i in 0..n_in {
                dw_row[i] += g * x_row[i];
                dx_row[i] += g * w_row[i];
            }
        }
    }

    Ok((
        Tensor::new(vec![b, n_in], dx)?,
        Tensor::new(vec![n_out, n_in], dw)?,
        Tensor::new(vec![n_out], db)?,
    ))
}
