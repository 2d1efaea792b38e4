//! Separable N-dimensional complex FFT on cubic row-major arrays.
//!
//! Besides full transforms this supports the two pruned variants needed by
//! zero-padded convolution: a forward transform whose input is supported in
//! the low corner `[0, active)^N`, and an inverse transform whose output is
//! only needed on that corner. Lines that are identically zero (or whose
//! result is discarded) are skipped.

use std::sync::{Arc, LazyLock, Mutex};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

static PLANNER: LazyLock<Mutex<FftPlanner<f64>>> = LazyLock::new(|| Mutex::new(FftPlanner::new()));

/// Lines gathered per strided batch.
const BATCH: usize = 64;

#[derive(Clone)]
pub(crate) struct FftNd {
    dim: usize,
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd").field("dim", &self.dim).field("n", &self.n).finish()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

impl FftNd {
    pub(crate) fn new(dim: usize, n: usize) -> Self {
        let mut planner = PLANNER.lock().unwrap_or_else(|e| e.into_inner());
        Self {
            dim,
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, Direction::Forward, self.n);
    }

    /// Unnormalized inverse transform.
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, Direction::Inverse, self.n);
    }

    /// Forward transform of data supported in `[0, active)^N`.
    pub(crate) fn forward_pruned(&self, data: &mut [Complex64], active: usize) {
        self.transform(data, Direction::Forward, active);
    }

    /// Unnormalized inverse transform, exact only on `[0, active)^N`.
    pub(crate) fn inverse_pruned(&self, data: &mut [Complex64], active: usize) {
        self.transform(data, Direction::Inverse, active);
    }

    fn transform(&self, data: &mut [Complex64], direction: Direction, active: usize) {
        assert_eq!(data.len(), self.len());
        let fft = match direction {
            Direction::Forward => &self.forward,
            Direction::Inverse => &self.inverse,
        };
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        let mut buf = vec![Complex64::default(); BATCH * self.n];
        for step in 0..self.dim {
            // Forward: the first axis processed sees zeros outside the corner on
            // every other axis. Inverse: axes already processed only need the
            // corner.
            let axis = step;
            let limits: Vec<usize> = (0..self.dim)
                .map(|b| {
                    let restricted = match direction {
                        Direction::Forward => b > axis,
                        Direction::Inverse => b < axis,
                    };
                    if restricted {
                        active
                    } else {
                        self.n
                    }
                })
                .collect();
            self.transform_axis(data, axis, &limits, fft.as_ref(), &mut buf, &mut scratch);
        }
    }

    fn transform_axis(
        &self,
        data: &mut [Complex64],
        axis: usize,
        limits: &[usize],
        fft: &dyn Fft<f64>,
        buf: &mut [Complex64],
        scratch: &mut [Complex64],
    ) {
        let n = self.n;
        let stride = n.pow((self.dim - 1 - axis) as u32);
        let outer = offsets(&limits[..axis], n, stride * n);
        if stride == 1 {
            for &o in &outer {
                fft.process_with_scratch(&mut data[o..o + n], scratch);
            }
            return;
        }
        let inner = offsets(&limits[axis + 1..], n, 1);
        for &o in &outer {
            for chunk in inner.chunks(BATCH) {
                let lines = chunk.len();
                let block = &mut buf[..lines * n];
                for j in 0..n {
                    let row = o + j * stride;
                    for (l, &i) in chunk.iter().enumerate() {
                        block[l * n + j] = data[row + i];
                    }
                }
                fft.process_with_scratch(block, scratch);
                for j in 0..n {
                    let row = o + j * stride;
                    for (l, &i) in chunk.iter().enumerate() {
                        data[row + i] = block[l * n + j];
                    }
                }
            }
        }
    }
}

/// Linear offsets of the multi-indices `i_b < limits[b]` over consecutive
/// axes, where the last listed axis has stride `last_stride` and each earlier
/// axis is `n` times coarser.
fn offsets(limits: &[usize], n: usize, last_stride: usize) -> Vec<usize> {
    let mut out = vec![0usize];
    let mut stride = last_stride * n.pow(limits.len() as u32);
    for &lim in limits {
        stride /= n;
        out = out
            .iter()
            .flat_map(|&base| (0..lim).map(move |i| base + i * stride))
            .collect();
    }
    out
}
