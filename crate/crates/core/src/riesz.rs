//! Free-space convolution with the Riesz potential `I_α(x) = A_α / |x|^{N-α}`.
//!
//! The kernel is sampled on the doubled grid (offsets `-M..M` per axis) so
//! that an FFT of size `(2M)^N` yields the linear, non-periodic convolution
//! on the original box. The singular origin cell carries the kernel's mean
//! over a ball of the same volume as one cell.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, LazyLock, Mutex};

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::FftNd;
use crate::grid::{Field, Grid};

/// Largest grid accepted by [`convolve_direct`].
pub const DIRECT_LIMIT: usize = 1 << 16;

/// `A_α = Γ((N-α)/2) / (Γ(α/2) π^{N/2} 2^α)`.
pub fn riesz_constant(dim: usize, alpha: f64) -> f64 {
    let n = dim as f64;
    libm::tgamma((n - alpha) / 2.0) / (libm::tgamma(alpha / 2.0) * PI.powf(n / 2.0) * 2f64.powf(alpha))
}

/// Volume of the unit ball in `R^N`.
pub(crate) fn unit_ball_volume(dim: usize) -> f64 {
    let n = dim as f64;
    PI.powf(n / 2.0) / libm::tgamma(n / 2.0 + 1.0)
}

#[derive(Debug)]
pub struct RieszKernel {
    grid: Grid,
    alpha: f64,
    /// Kernel values on the doubled grid, offset `d` stored at `d mod 2M`.
    samples: Vec<f64>,
    origin_cell_value: f64,
    /// `h^N K̂ / (2M)^N`; real because the samples are even.
    spectrum: Vec<f64>,
    /// Flat index in the doubled grid of each original grid point.
    embed: Vec<usize>,
    fft: FftNd,
}

/// Samples `I_α` on the doubled grid of `grid`.
pub fn build_kernel(grid: Grid, alpha: f64) -> Result<RieszKernel> {
    let dim = grid.dim();
    if !(alpha > 0.0 && alpha < dim as f64) {
        return Err(Error::InvalidParams(format!("alpha = {alpha} outside (0, {dim})")));
    }
    let m = grid.points_per_axis();
    let big = 2 * m;
    let h = grid.spacing();
    let a = riesz_constant(dim, alpha);

    // Equal-volume ball: ω_N r^N = h^N, mean of A|x|^{α-N} over it is
    // A σ_{N-1} r^α / (α h^N) with σ_{N-1} = N ω_N.
    let omega = unit_ball_volume(dim);
    let r = h / omega.powf(1.0 / dim as f64);
    let origin_cell_value = a * dim as f64 * omega * r.powf(alpha) / (alpha * grid.cell_volume());

    let total = big.pow(dim as u32);
    let mut samples = Vec::with_capacity(total);
    for flat in 0..total {
        let mut rest = flat;
        let mut dist_sq = 0.0;
        for _ in 0..dim {
            let j = rest % big;
            rest /= big;
            let d = if j <= m { j } else { big - j } as f64;
            dist_sq += d * d;
        }
        samples.push(if dist_sq == 0.0 {
            origin_cell_value
        } else {
            a / (h * dist_sq.sqrt()).powf(dim as f64 - alpha)
        });
    }

    let fft = FftNd::new(dim, big);
    let mut spec: Vec<Complex64> = samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
    fft.forward(&mut spec);
    let scale = grid.cell_volume() / total as f64;
    let spectrum = spec.iter().map(|c| c.re * scale).collect();

    let embed = (0..grid.len())
        .map(|flat| {
            let idx = grid.multi_index(flat);
            idx[..dim].iter().fold(0, |acc, &i| acc * big + i)
        })
        .collect();

    Ok(RieszKernel { grid, alpha, samples, origin_cell_value, spectrum, embed, fft })
}

impl RieszKernel {
    /// Shared kernel for `(grid, α)`, built on first use.
    pub fn cached(grid: Grid, alpha: f64) -> Result<Arc<RieszKernel>> {
        type Key = (usize, usize, u64, u64);
        static CACHE: LazyLock<Mutex<HashMap<Key, Arc<RieszKernel>>>> =
            LazyLock::new(|| Mutex::new(HashMap::new()));
        let key = (grid.dim(), grid.points_per_axis(), grid.box_length().to_bits(), alpha.to_bits());
        if let Some(k) = CACHE.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(k.clone());
        }
        let kernel = Arc::new(build_kernel(grid, alpha)?);
        let mut cache = CACHE.lock().unwrap_or_else(|e| e.into_inner());
        Ok(cache.entry(key).or_insert(kernel).clone())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn origin_cell_value(&self) -> f64 {
        self.origin_cell_value
    }

    /// Kernel sample at an integer offset (in cells) per axis, `|d| ≤ M`.
    pub fn sample_at(&self, offset: &[isize]) -> f64 {
        let big = 2 * self.grid.points_per_axis() as isize;
        let flat = offset
            .iter()
            .fold(0, |acc, &d| acc * big as usize + d.rem_euclid(big) as usize);
        self.samples[flat]
    }

    /// Convolves two fields with one complex transform (real and imaginary
    /// lanes carry `a` and `b`).
    pub fn convolve_pair(&self, a: &Field, b: &Field) -> Result<(Field, Field)> {
        self.check(a)?;
        self.check(b)?;
        let m = self.grid.points_per_axis();
        let mut buf = vec![Complex64::default(); self.spectrum.len()];
        for ((&e, &x), &y) in self.embed.iter().zip(a.values()).zip(b.values()) {
            buf[e] = Complex64::new(x, y);
        }
        self.fft.forward_pruned(&mut buf, m);
        for (z, &k) in buf.iter_mut().zip(&self.spectrum) {
            *z *= k;
        }
        self.fft.inverse_pruned(&mut buf, m);
        let (re, im): (Vec<f64>, Vec<f64>) = self.embed.iter().map(|&e| (buf[e].re, buf[e].im)).unzip();
        Ok((Field::from_values(self.grid, re)?, Field::from_values(self.grid, im)?))
    }

    fn check(&self, v: &Field) -> Result<()> {
        if *v.grid() == self.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// `h^N Σ_y K(x - y) v(y)` on the original grid, via zero-padded FFTs.
pub fn convolve(kernel: &RieszKernel, v: &Field) -> Result<Field> {
    let zero = Field::zeros(*v.grid());
    Ok(kernel.convolve_pair(v, &zero)?.0)
}

/// The same sum by explicit double loop; test oracle for [`convolve`].
pub fn convolve_direct(kernel: &RieszKernel, v: &Field) -> Result<Field> {
    let grid = kernel.grid;
    if grid.len() > DIRECT_LIMIT {
        return Err(Error::GridTooLarge { points: grid.len(), limit: DIRECT_LIMIT });
    }
    let all: Vec<usize> = (0..grid.len()).collect();
    Field::from_values(grid, convolve_direct_at(kernel, v, &all)?)
}

/// Direct sum evaluated only at the given flat output indices, for spot
/// checks on grids too large for [`convolve_direct`].
pub fn convolve_direct_at(kernel: &RieszKernel, v: &Field, points: &[usize]) -> Result<Vec<f64>> {
    kernel.check(v)?;
    let grid = kernel.grid;
    if let Some(&bad) = points.iter().find(|&&i| i >= grid.len()) {
        return Err(Error::InvalidGrid(format!("output index {bad} outside a grid of {} points", grid.len())));
    }
    let dim = grid.dim();
    let cell = grid.cell_volume();
    let idx: Vec<[usize; 3]> = (0..grid.len()).map(|i| grid.multi_index(i)).collect();
    let mut offset = [0isize; 3];
    Ok(points
        .iter()
        .map(|&i| {
            let x = idx[i];
            let mut acc = 0.0;
            for (y, &vy) in idx.iter().zip(v.values()) {
                if vy == 0.0 {
                    continue;
                }
                for a in 0..dim {
                    offset[a] = x[a] as isize - y[a] as isize;
                }
                acc += kernel.sample_at(&offset[..dim]) * vy;
            }
            cell * acc
        })
        .collect())
}
