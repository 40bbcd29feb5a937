//! im2col lowering for 2-D convolution.

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(
        channels: usize,
        height: usize,
        width: usize,
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        pad: usize,
    ) -> Option<Self> {
        if stride == 0 || height + 2 * pad < kernel_h || width + 2 * pad < kernel_w {
            return None;
        }
        Some(Self {
            channels,
            height,
            width,
            kernel_h,
            kernel_w,
            stride,
            pad,
            out_h: (height + 2 * pad - kernel_h) / stride + 1,
            out_w: (width + 2 * pad - kernel_w) / stride + 1,
        })
    }

    /// Rows of the lowered matrix: one per (channel, ky, kx).
    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel_h * self.kernel_w
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Range of output columns whose input column `ox * stride + kx - pad` is inside the image.
    fn valid_ox(&self, kx: usize) -> (usize, usize) {
        let mut lo = 0;
        while lo < self.out_w && (lo * self.stride + kx) < self.pad {
            lo += 1;
        }
        let mut hi = self.out_w;
        while hi > lo && ((hi - 1) * self.stride + kx) >= self.pad + self.width {
            hi -= 1;
        }
        (lo, hi)
    }

    fn input_row(&self, oy: usize, ky: usize) -> Option<usize> {
        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
        (iy >= 0 && (iy as usize) < self.height).then_some(iy as usize)
    }
}

/// Lowers one `C x H x W` image into a `(C*kh*kw) x (oh*ow)` matrix.
pub fn im2col<T: Scalar>(geo: &ConvGeometry, image: &[T], col: &mut [T]) {
    let plane = geo.height * geo.width;
    let ncols = geo.col_cols();
    for c in 0..geo.channels {
        let src = &image[c * plane..(c + 1) * plane];
        for ky in 0..geo.kernel_h {
            for kx in 0..geo.kernel_w {
                let row = (c * geo.kernel_h + ky) * geo.kernel_w + kx;
                let dst = &mut col[row * ncols..(row + 1) * ncols];
                let (lo, hi) = geo.valid_ox(kx);
                for oy in 0..geo.out_h {
                    let out = &mut dst[oy * geo.out_w..(oy + 1) * geo.out_w];
                    let Some(iy) = geo.input_row(oy, ky) else {
                        out.fill(T::zero());
                        continue;
                    };
                    out[..lo].fill(T::zero());
                    out[hi..].fill(T::zero());
                    let line = &src[iy * geo.width..(iy + 1) * geo.width];
                    if geo.stride == 1 {
                        let start = lo + kx - geo.pad;
                        out[lo..hi].copy_from_slice(&line[start..start + (hi - lo)]);
                    } else {
                        for (ox, o) in out.iter_mut().enumerate().take(hi).skip(lo) {
                            *o = line[ox * geo.stride + kx - geo.pad];
                        }
                    }
                }
            }
        }
    }
}

/// Scatters a lowered gradient back onto the image gradient (accumulating).
pub fn col2im<T: Scalar>(geo: &ConvGeometry, col: &[T], image: &mut [T]) {
    let plane = geo.height * geo.width;
    let ncols = geo.col_cols();
    for c in 0..geo.channels {
        let dst = &mut image[c * plane..(c + 1) * plane];
        for ky in 0..geo.kernel_h {
            for kx in 0..geo.kernel_w {
                let row = (c * geo.kernel_h + ky) * geo.kernel_w + kx;
                let src = &col[row * ncols..(row + 1) * ncols];
                let (lo, hi) = geo.valid_ox(kx);
                for oy in 0..geo.out_h {
                    let Some(iy) = geo.input_row(oy, ky) else {
                        continue;
                    };
                    let g = &src[oy * geo.out_w..(oy + 1) * geo.out_w];
                    let line = &mut dst[iy * geo.width..(iy + 1) * geo.width];
                    for ox in lo..hi {
                        line[ox * geo.stride + kx - geo.pad] += g[ox];
                    }
                }
            }
        }
    }
}
