//! Cross-correlation kernels shared by `conv2d` and `transposed_conv2d`.
//!
//! All three routines use one geometry: an input of `n×cin×h×w`, a kernel of
//! `cout×cin×kh×kw` and an output of `n×cout×oh×ow` with zero padding. The
//! transposed convolution is the input-gradient routine run forward, so the
//! adjoint relation between the two operators holds by construction.
//! Reduction order is fixed, so results are bit-identical run to run.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    /// Output extents follow `floor((h + 2p - kh) / s) + 1`. Caller checks
    /// that the padded input covers the kernel.
    pub fn new(
        [n, cin, h, w]: [usize; 4],
        [cout, kh, kw]: [usize; 3],
        stride: usize,
        pad: usize,
    ) -> Self {
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        Self {
            n,
            cin,
            h,
            w,
            cout,
            kh,
            kw,
            stride,
            pad,
            oh,
            ow,
        }
    }

    pub fn input_len(&self) -> usize {
        self.n * self.cin * self.h * self.w
    }

    pub fn output_len(&self) -> usize {
        self.n * self.cout * self.oh * self.ow
    }

    /// Output columns `[lo, hi)` whose tap `kx` lands inside the input row,
    /// paired with the input column of `lo`.
    fn col_range(&self, kx: usize) -> (usize, usize, usize) {
        valid_range(self.ow, self.w, self.stride, self.pad, kx)
    }

    fn row_range(&self, ky: usize) -> (usize, usize, usize) {
        valid_range(self.oh, self.h, self.stride, self.pad, ky)
    }
}

fn valid_range(out: usize, inp: usize, stride: usize, pad: usize, tap: usize) -> (usize, usize, usize) {
    // input index = o * stride + tap - pad, must lie in [0, inp)
    let lo = if tap >= pad { 0 } else { (pad - tap).div_ceil(stride) };
    let hi = if inp + pad <= tap {
        0
    } else {
        ((inp + pad - tap - 1) / stride + 1).min(out)
    };
    if lo >= hi {
        return (0, 0, 0);
    }
    (lo, hi, lo * stride + tap - pad)
}

/// `out[b,o,y,x] += Σ in[b,i,y·s+ky−p, x·s+kx−p] · k[o,i,ky,kx]`.
pub(crate) fn correlate<T: Scalar>(g: &ConvGeom, input: &[T], kernel: &[T], out: &mut [T]) {
    let (in_plane, out_plane) = (g.h * g.w, g.oh * g.ow);
    for b in 0..g.n {
        for o in 0..g.cout {
            let out_base = (b * g.cout + o) * out_plane;
            for i in 0..g.cin {
                let in_base = (b * g.cin + i) * in_plane;
                let k_base = (o * g.cin + i) * g.kh * g.kw;
                for ky in 0..g.kh {
                    let (ylo, yhi, iy0) = g.row_range(ky);
                    for kx in 0..g.kw {
                        let wgt = kernel[k_base + ky * g.kw + kx];
                        if wgt == T::zero() {
                            continue;
                        }
                        let (xlo, xhi, ix0) = g.col_range(kx);
                        let len = xhi - xlo;
                        for (dy, oy) in (ylo..yhi).enumerate() {
                            let iy = iy0 + dy * g.stride;
                            let orow = &mut out[out_base + oy * g.ow + xlo..][..len];
                            let irow = &input[in_base + iy * g.w..][..g.w];
                            if g.stride == 1 {
                                for (o, &v) in orow.iter_mut().zip(&irow[ix0..ix0 + len]) {
                                    *o += wgt * v;
                                }
                            } else {
                                for (j, o) in orow.iter_mut().enumerate() {
                                    *o += wgt * irow[ix0 + j * g.stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`correlate`] with respect to its input:
/// `gin[b,i,y·s+ky−p, x·s+kx−p] += k[o,i,ky,kx] · gout[b,o,y,x]`.
pub(crate) fn correlate_adjoint<T: Scalar>(g: &ConvGeom, gout: &[T], kernel: &[T], gin: &mut [T]) {
    let (in_plane, out_plane) = (g.h * g.w, g.oh * g.ow);
    for b in 0..g.n {
        for i in 0..g.cin {
            let in_base = (b * g.cin + i) * in_plane;
            for o in 0..g.cout {
                let out_base = (b * g.cout + o) * out_plane;
                let k_base = (o * g.cin + i) * g.kh * g.kw;
                for ky in 0..g.kh {
                    let (ylo, yhi, iy0) = g.row_range(ky);
                    for kx in 0..g.kw {
                        let wgt = kernel[k_base + ky * g.kw + kx];
                        if wgt == T::zero() {
                            continue;
                        }
                        let (xlo, xhi, ix0) = g.col_range(kx);
                        let len = xhi - xlo;
                        for (dy, oy) in (ylo..yhi).enumerate() {
                            let iy = iy0 + dy * g.stride;
                            let orow = &gout[out_base + oy * g.ow + xlo..][..len];
                            let irow = &mut gin[in_base + iy * g.w..][..g.w];
                            if g.stride == 1 {
                                for (d, &v) in irow[ix0..ix0 + len].iter_mut().zip(orow) {
                                    *d += wgt * v;
                                }
                            } else {
                                for (j, &v) in orow.iter().enumerate() {
                                    irow[ix0 + j * g.stride] += wgt * v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Gradient of [`correlate`] with respect to the kernel:
/// `gk[o,i,ky,kx] += Σ gout[b,o,y,x] · in[b,i,y·s+ky−p, x·s+kx−p]`.
pub(crate) fn correlate_kernel_grad<T: Scalar>(g: &ConvGeom, input: &[T], gout: &[T], gk: &mut [T]) {
    let (in_plane, out_plane) = (g.h * g.w, g.oh * g.ow);
    for b in 0..g.n {
        for o in 0..g.cout {
            let out_base = (b * g.cout + o) * out_plane;
            for i in 0..g.cin {
                let in_base = (b * g.cin + i) * in_plane;
                let k_base = (o * g.cin + i) * g.kh * g.kw;
                for ky in 0..g.kh {
                    let (ylo, yhi, iy0) = g.row_range(ky);
                    for kx in 0..g.kw {
                        let (xlo, xhi, ix0) = g.col_range(kx);
                        let len = xhi - xlo;
                        let mut acc = T::zero();
                        for (dy, oy) in (ylo..yhi).enumerate() {
                            let iy = iy0 + dy * g.stride;
                            let orow = &gout[out_base + oy * g.ow + xlo..][..len];
                            let irow = &input[in_base + iy * g.w..][..g.w];
                            if g.stride == 1 {
                                acc += orow
                                    .iter()
                                    .zip(&irow[ix0..ix0 + len])
                                    .fold(T::zero(), |s, (&a, &b)| s + a * b);
                            } else {
                                for (j, &v) in orow.iter().enumerate() {
                                    acc += v * irow[ix0 + j * g.stride];
                                }
                            }
                        }
                        gk[k_base + ky * g.kw + kx] += acc;
                    }
                }
            }
        }
    }
}
