//! Two-dimensional FFT helpers over row-major buffers.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// In-place 2-D DFT of a `w x h` row-major buffer. The inverse is unscaled,
/// as with `rustfft`; divide by `w * h` to undo a forward pass.
pub(crate) fn fft2(data: &mut [Complex64], w: usize, h: usize, inverse: bool) {
    debug_assert_eq!(data.len(), w * h);
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(w), planner.plan_fft_inverse(h))
    } else {
        (planner.plan_fft_forward(w), planner.plan_fft_forward(h))
    };
    row_fft.process(data);
    let mut col = vec![Complex64::default(); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = data[y * w + x];
        }
        col_fft.process(&mut col);
        for y in 0..h {
            data[y * w + x] = col[y];
        }
    }
}

pub(crate) fn to_complex(xs: &[f64]) -> Vec<Complex64> {
    xs.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}
