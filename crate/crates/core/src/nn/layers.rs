//! Raw layer kernels over flat buffers.
//!
//! Convolution kernels are laid out `[kh, kw, in_c, out_c]` and dense
//! kernels `[in, out]`, so the innermost loops run over contiguous output
//! channels.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub oh: usize,
    pub ow: usize,
    pub f: usize,
}

#[inline]
fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub(crate) fn conv_forward(g: &ConvGeom, input: &[f64], kernel: &[f64], bias: &[f64], out: &mut [f64]) {
    let f = g.f;
    let row_len = g.kw * g.c;
    for oy in 0..g.oh {
        for ox in 0..g.ow {
            let o = &mut out[(oy * g.ow + ox) * f..][..f];
            o.copy_from_slice(bias);
            for ky in 0..g.kh {
                let start = ((oy * g.sh + ky) * g.w + ox * g.sw) * g.c;
                let patch = &input[start..start + row_len];
                let wrow = &kernel[ky * row_len * f..][..row_len * f];
                for (k, &a) in patch.iter().enumerate() {
                    if a != 0.0 {
                        axpy(o, a, &wrow[k * f..][..f]);
                    }
                }
            }
        }
    }
}

/// Accumulates kernel/bias gradients and, if `grad_in` is given, the input gradient.
pub(crate) fn conv_backward(
    g: &ConvGeom,
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    grad_kernel: &mut [f64],
    grad_bias: &mut [f64],
    mut grad_in: Option<&mut [f64]>,
) {
    let f = g.f;
    let row_len = g.kw * g.c;
    for oy in 0..g.oh {
        for ox in 0..g.ow {
            let go = &grad_out[(oy * g.ow + ox) * f..][..f];
            if go.iter().all(|&v| v == 0.0) {
                continue;
            }
            axpy(grad_bias, 1.0, go);
            for ky in 0..g.kh {
                let start = ((oy * g.sh + ky) * g.w + ox * g.sw) * g.c;
                let wrow = &kernel[ky * row_len * f..][..row_len * f];
                let gwrow = &mut grad_kernel[ky * row_len * f..][..row_len * f];
                for k in 0..row_len {
                    let a = input[start + k];
                    if a != 0.0 {
                        axpy(&mut gwrow[k * f..][..f], a, go);
                    }
                    if let Some(gi) = grad_in.as_deref_mut() {
                        gi[start + k] += dot(&wrow[k * f..][..f], go);
                    }
                }
            }
        }
    }
}

pub(crate) fn dense_forward(input: &[f64], kernel: &[f64], bias: &[f64], out: &mut [f64]) {
    let n_out = bias.len();
    out.copy_from_slice(bias);
    for (i, &a) in input.iter().enumerate() {
        if a != 0.0 {
            axpy(out, a, &kernel[i * n_out..][..n_out]);
        }
    }
}

pub(crate) fn dense_backward(
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    grad_kernel: &mut [f64],
    grad_bias: &mut [f64],
    grad_in: Option<&mut [f64]>,
) {
    let n_out = grad_out.len();
    axpy(grad_bias, 1.0, grad_out);
    for (i, &a) in input.iter().enumerate() {
        if a != 0.0 {
            axpy(&mut grad_kernel[i * n_out..][..n_out], a, grad_out);
        }
    }
    if let Some(gi) = grad_in {
        for (i, g) in gi.iter_mut().enumerate() {
            *g = dot(&kernel[i * n_out..][..n_out], grad_out);
        }
    }
}
