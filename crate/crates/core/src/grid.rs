//! Uniform periodic box discretization of `R^N` and grid functions.
//!
//! The box is `[-L/2, L/2)^N` split into `M^N` cells; samples sit at cell
//! centers, stored row-major with axis 0 slowest. Integrals use the rectangle
//! rule and derivatives are spectral, so everything that touches `∇` goes
//! through the FFT of the `M^N` array.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::FftNd;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    points_per_axis: usize,
    box_length: f64,
}

impl Grid {
    pub fn new(dim: usize, points_per_axis: usize, box_length: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in 1..=3")));
        }
        if points_per_axis < 8 || !points_per_axis.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "points per axis {points_per_axis} must be a power of two >= 8"
            )));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::InvalidGrid(format!("box length {box_length} must be positive")));
        }
        Ok(Self { dim, points_per_axis, box_length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    /// `h = L / M`.
    pub fn spacing(&self) -> f64 {
        self.box_length / self.points_per_axis as f64
    }

    /// `h^N`, the volume of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Total number of samples `M^N`.
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell-center coordinate of index `i` along one axis.
    pub fn coordinate(&self, i: usize) -> f64 {
        -0.5 * self.box_length + (i as f64 + 0.5) * self.spacing()
    }

    /// Per-axis indices of a flat index; unused axes are zero.
    pub fn multi_index(&self, mut flat: usize) -> [usize; 3] {
        let m = self.points_per_axis;
        let mut out = [0; 3];
        for a in (0..self.dim).rev() {
            out[a] = flat % m;
            flat /= m;
        }
        out
    }

    pub fn flat_index(&self, idx: [usize; 3]) -> usize {
        idx[..self.dim]
            .iter()
            .fold(0, |acc, &i| acc * self.points_per_axis + i)
    }

    /// Cell-center position of a flat index; unused axes are zero.
    pub fn position(&self, flat: usize) -> [f64; 3] {
        let idx = self.multi_index(flat);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.coordinate(idx[a]);
        }
        x
    }

    pub(crate) fn spectral(&self) -> Arc<Spectral> {
        static CACHE: LazyLock<Mutex<HashMap<(usize, usize, u64), Arc<Spectral>>>> =
            LazyLock::new(|| Mutex::new(HashMap::new()));
        let key = (self.dim, self.points_per_axis, self.box_length.to_bits());
        let mut cache = CACHE.lock().unwrap_or_else(|e| e.into_inner());
        cache
            .entry(key)
            .or_insert_with(|| Arc::new(Spectral::new(self)))
            .clone()
    }
}

/// FFT plan and wavenumber tables for one grid.
#[derive(Debug)]
pub(crate) struct Spectral {
    fft: FftNd,
    /// `|2πk/L|^2` per flat frequency index.
    k2: Vec<f64>,
    /// Flat index of `-k`.
    negated: Vec<usize>,
}

impl Spectral {
    fn new(grid: &Grid) -> Self {
        let m = grid.points_per_axis;
        let fft = FftNd::new(grid.dim, m);
        let step = 2.0 * std::f64::consts::PI / grid.box_length;
        let wave = |j: usize| {
            let k = if j <= m / 2 { j as f64 } else { j as f64 - m as f64 };
            k * step
        };
        let mut k2 = Vec::with_capacity(grid.len());
        let mut negated = Vec::with_capacity(grid.len());
        for flat in 0..grid.len() {
            let idx = grid.multi_index(flat);
            k2.push(idx[..grid.dim].iter().map(|&j| wave(j).powi(2)).sum());
            let mut neg = [0; 3];
            for a in 0..grid.dim {
                neg[a] = (m - idx[a]) % m;
            }
            negated.push(grid.flat_index(neg));
        }
        Self { fft, k2, negated }
    }

    fn transform_pair(&self, a: &[f64], b: &[f64]) -> Vec<Complex64> {
        let mut z: Vec<Complex64> = a.iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect();
        self.fft.forward(&mut z);
        z
    }

    /// `Σ_k w(k) Re(â_k conj(b̂_k))` for a real weight `w`, with one packed FFT.
    fn weighted_inner(&self, a: &[f64], b: &[f64], weight: impl Fn(f64) -> f64) -> f64 {
        let z = self.transform_pair(a, b);
        let mut acc = 0.0;
        for (k, zk) in z.iter().enumerate() {
            let zn = z[self.negated[k]].conj();
            let ak = (zk + zn) * 0.5;
            let bk = (zk - zn) * Complex64::new(0.0, -0.5);
            acc += weight(self.k2[k]) * (ak * bk.conj()).re;
        }
        acc
    }

    fn weighted_norm_sq(&self, a: &[f64], weight: impl Fn(f64) -> f64) -> f64 {
        let mut z: Vec<Complex64> = a.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft.forward(&mut z);
        z.iter()
            .zip(&self.k2)
            .map(|(zk, &k2)| weight(k2) * zk.norm_sqr())
            .sum()
    }

    /// Applies the real radial multiplier `m(|k|^2)` to two real arrays at once.
    fn multiply_pair(&self, a: &[f64], b: &[f64], multiplier: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
        let mut z = self.transform_pair(a, b);
        let scale = 1.0 / self.fft.len() as f64;
        for (zk, &k2) in z.iter_mut().zip(&self.k2) {
            *zk *= multiplier(k2) * scale;
        }
        self.fft.inverse(&mut z);
        z.into_iter().map(|c| (c.re, c.im)).unzip()
    }
}

/// A real function sampled at the cell centers of a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { grid, values })
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| f(&grid.position(i)[..grid.dim()]))
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, factor: f64) -> Field {
        self.map(|v| factor * v)
    }

    pub fn abs(&self) -> Field {
        self.map(f64::abs)
    }

    /// `self + factor * other`.
    pub fn add_scaled(&self, factor: f64, other: &Field) -> Result<Field> {
        self.check_same_grid(other)?;
        Ok(self.zip_with(other, |a, b| a + factor * b))
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.add_scaled(-1.0, other)
    }

    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.check_same_grid(other)?;
        Ok(self.zip_with(other, |a, b| a * b))
    }

    pub(crate) fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert_eq!(self.grid, other.grid);
        Field {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// The point reflection `u(x) -> u(-x)`; exact on the cell-centered grid.
    pub fn reflected(&self) -> Field {
        let m = self.grid.points_per_axis;
        let dim = self.grid.dim;
        let values = (0..self.grid.len())
            .map(|flat| {
                let mut idx = self.grid.multi_index(flat);
                for i in idx.iter_mut().take(dim) {
                    *i = m - 1 - *i;
                }
                self.values[self.grid.flat_index(idx)]
            })
            .collect();
        Field { grid: self.grid, values }
    }

    /// The reflection `x_axis -> -x_axis` of a single coordinate.
    pub fn reflected_axis(&self, axis: usize) -> Field {
        let m = self.grid.points_per_axis;
        let values = (0..self.grid.len())
            .map(|flat| {
                let mut idx = self.grid.multi_index(flat);
                idx[axis] = m - 1 - idx[axis];
                self.values[self.grid.flat_index(idx)]
            })
            .collect();
        Field { grid: self.grid, values }
    }

    /// Periodic translation by `cells` along `axis`: `out(x) = u(x - cells·h·e_axis)`.
    pub fn shifted(&self, axis: usize, cells: isize) -> Field {
        let m = self.grid.points_per_axis as isize;
        let values = (0..self.grid.len())
            .map(|flat| {
                let mut idx = self.grid.multi_index(flat);
                idx[axis] = (idx[axis] as isize - cells).rem_euclid(m) as usize;
                self.values[self.grid.flat_index(idx)]
            })
            .collect();
        Field { grid: self.grid, values }
    }

    pub(crate) fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Rectangle-rule integral `h^N Σ f(x_i)`.
pub fn integrate(f: &Field) -> f64 {
    f.grid.cell_volume() * f.values.iter().sum::<f64>()
}

/// `∫ u v`.
pub fn l2_inner(u: &Field, v: &Field) -> Result<f64> {
    u.check_same_grid(v)?;
    Ok(u.grid.cell_volume() * u.values.iter().zip(&v.values).map(|(a, b)| a * b).sum::<f64>())
}

/// `∫ ∇u·∇v + uv`, with the gradient taken spectrally.
pub fn h1_inner(u: &Field, v: &Field) -> Result<f64> {
    u.check_same_grid(v)?;
    let grid = u.grid;
    let scale = grid.cell_volume() / grid.len() as f64;
    Ok(scale * grid.spectral().weighted_inner(&u.values, &v.values, |k2| 1.0 + k2))
}

/// `∫ |∇u|^2 + u^2`.
pub fn h1_norm_sq(u: &Field) -> f64 {
    let grid = u.grid;
    let scale = grid.cell_volume() / grid.len() as f64;
    scale * grid.spectral().weighted_norm_sq(&u.values, |k2| 1.0 + k2)
}

/// `∫ |∇u|^2` alone.
pub fn dirichlet_energy(u: &Field) -> f64 {
    let grid = u.grid;
    let scale = grid.cell_volume() / grid.len() as f64;
    scale * grid.spectral().weighted_norm_sq(&u.values, |k2| k2)
}

/// `(-Δ + 1)` applied to two fields.
pub fn helmholtz_pair(u: &Field, v: &Field) -> Result<(Field, Field)> {
    u.check_same_grid(v)?;
    let (a, b) = u.grid.spectral().multiply_pair(&u.values, &v.values, |k2| 1.0 + k2);
    Ok((Field { grid: u.grid, values: a }, Field { grid: u.grid, values: b }))
}

pub fn helmholtz(u: &Field) -> Field {
    let (a, _) = u.grid.spectral().multiply_pair(&u.values, &vec![0.0; u.values.len()], |k2| 1.0 + k2);
    Field { grid: u.grid, values: a }
}

/// `(-Δ + 1)^{-1}` applied to two fields.
pub fn inverse_helmholtz_pair(u: &Field, v: &Field) -> Result<(Field, Field)> {
    u.check_same_grid(v)?;
    let (a, b) = u.grid.spectral().multiply_pair(&u.values, &v.values, |k2| 1.0 / (1.0 + k2));
    Ok((Field { grid: u.grid, values: a }, Field { grid: u.grid, values: b }))
}

pub fn inverse_helmholtz(u: &Field) -> Field {
    let (a, _) = u
        .grid
        .spectral()
        .multiply_pair(&u.values, &vec![0.0; u.values.len()], |k2| 1.0 / (1.0 + k2));
    Field { grid: u.grid, values: a }
}

/// Splits `u = u⁺ - u⁻` into its nonnegative parts.
pub fn split_signs(u: &Field) -> (Field, Field) {
    (u.map(|v| v.max(0.0)), u.map(|v| (-v).max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(grid: Grid, rng: &mut ChaCha8Rng) -> Field {
        let values = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Field::from_values(grid, values).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(0, 16, 1.0).is_err());
        assert!(Grid::new(4, 16, 1.0).is_err());
        assert!(Grid::new(1, 4, 1.0).is_err());
        assert!(Grid::new(1, 24, 1.0).is_err());
        assert!(Grid::new(1, 16, 0.0).is_err());
        assert!(Grid::new(1, 16, f64::NAN).is_err());
        let g = Grid::new(2, 16, 4.0).unwrap();
        assert_eq!(g.len(), 256);
        assert_eq!(g.spacing(), 0.25);
    }

    #[test]
    fn integrates_constants_and_zero() {
        let g = Grid::new(1, 64, 10.0).unwrap();
        assert!((integrate(&Field::from_fn(g, |_| 1.0)) - 10.0).abs() < 1e-12);
        assert_eq!(integrate(&Field::zeros(g)), 0.0);
    }

    #[test]
    fn integrates_gaussian() {
        // The rectangle rule is spectrally accurate here; the reference is the
        // closed-form value √π, which any high-precision quadrature reproduces.
        let g = Grid::new(1, 256, 40.0).unwrap();
        let u = Field::from_fn(g, |x| (-x[0] * x[0]).exp());
        assert!((integrate(&u) - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn h1_of_a_fourier_mode() {
        let l = 5.0;
        let g = Grid::new(1, 32, l).unwrap();
        let u = Field::from_fn(g, |x| (2.0 * std::f64::consts::PI * x[0] / l).sin());
        let k = 2.0 * std::f64::consts::PI / l;
        let expected = (1.0 + k * k) * l / 2.0;
        assert!((h1_norm_sq(&u) - expected).abs() < 1e-10 * expected);
        assert!((h1_inner(&u, &u).unwrap() - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn h1_dominates_l2() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = Grid::new(2, 16, 3.0).unwrap();
        for _ in 0..20 {
            let u = random_field(g, &mut rng);
            assert!(h1_inner(&u, &u).unwrap() >= l2_inner(&u, &u).unwrap());
        }
        assert_eq!(h1_inner(&Field::zeros(g), &Field::zeros(g)).unwrap(), 0.0);
    }

    #[test]
    fn h1_inner_matches_helmholtz_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = Grid::new(3, 8, 2.0).unwrap();
        let u = random_field(g, &mut rng);
        let v = random_field(g, &mut rng);
        let direct = l2_inner(&u, &helmholtz(&v)).unwrap();
        let packed = h1_inner(&u, &v).unwrap();
        assert!((direct - packed).abs() < 1e-11 * direct.abs().max(1.0));
        let back = inverse_helmholtz(&helmholtz(&u));
        for (a, b) in back.values().iter().zip(u.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let a = Field::zeros(Grid::new(1, 8, 1.0).unwrap());
        let b = Field::zeros(Grid::new(1, 16, 1.0).unwrap());
        assert!(matches!(h1_inner(&a, &b), Err(Error::GridMismatch)));
    }

    #[test]
    fn split_signs_cases() {
        let g = Grid::new(1, 16, 4.0).unwrap();
        let v = Field::from_fn(g, |x| x[0].sin());
        let pos = v.abs();
        let (p, m) = split_signs(&pos);
        assert_eq!(p, pos);
        assert!(m.is_zero());
        let (p, m) = split_signs(&pos.scaled(-1.0));
        assert!(p.is_zero());
        assert_eq!(m, pos);
    }

    #[test]
    fn reflection_and_shift() {
        let g = Grid::new(2, 8, 4.0).unwrap();
        let u = Field::from_fn(g, |x| x[0] + 10.0 * x[1]);
        let r = u.reflected();
        for (a, b) in r.values().iter().zip(u.values()) {
            assert!((a + b).abs() < 1e-12);
        }
        let s = u.shifted(0, 3).shifted(0, -3);
        assert_eq!(s, u);
        let s1 = u.shifted(1, 1);
        let idx = g.flat_index([2, 3, 0]);
        let src = g.flat_index([2, 2, 0]);
        assert_eq!(s1.values()[idx], u.values()[src]);
    }

    proptest! {
        #[test]
        fn split_signs_recombines(values in prop::collection::vec(-1e3f64..1e3, 8)) {
            let g = Grid::new(1, 8, 1.0).unwrap();
            let u = Field::from_values(g, values).unwrap();
            let (p, m) = split_signs(&u);
            for i in 0..8 {
                prop_assert!(p.values()[i] >= 0.0 && m.values()[i] >= 0.0);
                prop_assert_eq!(p.values()[i] * m.values()[i], 0.0);
                prop_assert_eq!(p.values()[i] - m.values()[i], u.values()[i]);
            }
        }

        #[test]
        fn integrate_is_linear(a in prop::collection::vec(-10f64..10.0, 8),
                               b in prop::collection::vec(-10f64..10.0, 8),
                               s in -5f64..5.0) {
            let g = Grid::new(1, 8, 2.0).unwrap();
            let u = Field::from_values(g, a).unwrap();
            let v = Field::from_values(g, b).unwrap();
            let lhs = integrate(&u.add_scaled(s, &v).unwrap());
            let rhs = integrate(&u) + s * integrate(&v);
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
            prop_assert!(integrate(&u.abs()) >= integrate(&u).abs());
        }

        #[test]
        fn h1_norm_vanishes_only_at_zero(values in prop::collection::vec(-1f64..1.0, 16)) {
            let g = Grid::new(1, 16, 3.0).unwrap();
            let u = Field::from_values(g, values).unwrap();
            let n = h1_norm_sq(&u);
            if u.is_zero() {
                prop_assert_eq!(n, 0.0);
            } else {
                prop_assert!(n > 0.0);
            }
        }
    }
}
