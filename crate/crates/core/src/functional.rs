//! The Choquard action `A_p(u) = ½‖u‖²_{H¹} - (1/2p) ∫ (I_α * |u|^p) |u|^p`,
//! its first variation and the derived Nehari quantities.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, h1_inner, h1_norm_sq, l2_inner, split_signs, Field, Grid};
use crate::params::Params;
use crate::riesz::RieszKernel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub h1_norm_sq: f64,
    pub interaction: f64,
    pub action: f64,
    pub nehari_residual: f64,
    pub nodal_residual_plus: f64,
    pub nodal_residual_minus: f64,
}

/// The functional for one `(grid, α, p)`; cheap to clone, the kernel is shared.
#[derive(Clone, Debug)]
pub struct Choquard {
    grid: Grid,
    params: Params,
    kernel: Arc<RieszKernel>,
}

/// `|u|^p` pointwise.
pub(crate) fn abs_pow(u: &Field, p: f64) -> Field {
    if p == 2.0 {
        u.map(|v| v * v)
    } else {
        u.map(|v| v.abs().powf(p))
    }
}

/// `|u|^{p-2} u`, zero where `u` is.
pub(crate) fn signed_pow(u: &Field, p: f64) -> Field {
    if p == 2.0 {
        u.clone()
    } else {
        u.map(|v| if v == 0.0 { 0.0 } else { v.signum() * v.abs().powf(p - 1.0) })
    }
}

impl Choquard {
    pub fn new(grid: Grid, params: Params) -> Result<Self> {
        params.validate()?;
        if params.dim != grid.dim() {
            return Err(Error::InvalidParams(format!(
                "parameters for N = {} on a {}-dimensional grid",
                params.dim,
                grid.dim()
            )));
        }
        let kernel = RieszKernel::cached(grid, params.alpha)?;
        Ok(Self { grid, params, kernel })
    }

    /// Same grid and kernel, different exponent.
    pub fn with_p(&self, p: f64) -> Result<Self> {
        Ok(Self { grid: self.grid, params: self.params.with_p(p)?, kernel: self.kernel.clone() })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn p(&self) -> f64 {
        self.params.p
    }

    pub fn kernel(&self) -> &RieszKernel {
        &self.kernel
    }

    fn check(&self, u: &Field) -> Result<()> {
        if *u.grid() == self.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `I_α * |u|^p`.
    pub fn potential(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        Ok(self.potential_pair(u, &Field::zeros(self.grid))?.0)
    }

    /// `(I_α * |f|^p, I_α * |g|^p)` with one transform.
    pub fn potential_pair(&self, f: &Field, g: &Field) -> Result<(Field, Field)> {
        let p = self.p();
        self.kernel.convolve_pair(&abs_pow(f, p), &abs_pow(g, p))
    }

    /// `D(u) = ∫ (I_α * |u|^p) |u|^p`.
    pub fn interaction(&self, u: &Field) -> Result<f64> {
        let v = self.potential(u)?;
        l2_inner(&v, &abs_pow(u, self.p()))
    }

    /// `D(f, g) = ∫ (I_α * |f|^p) |g|^p`.
    pub fn interaction_cross(&self, f: &Field, g: &Field) -> Result<f64> {
        self.check(f)?;
        self.check(g)?;
        let v = self.potential(f)?;
        l2_inner(&v, &abs_pow(g, self.p()))
    }

    pub fn action(&self, u: &Field) -> Result<f64> {
        self.check(u)?;
        let d = self.interaction(u)?;
        Ok(0.5 * h1_norm_sq(u) - d / (2.0 * self.p()))
    }

    pub fn energy(&self, u: &Field) -> Result<EnergyBreakdown> {
        let v = self.potential(u)?;
        self.energy_with_potential(u, &v)
    }

    /// [`Self::energy`] given `I_α * |u|^p` already.
    pub fn energy_with_potential(&self, u: &Field, potential: &Field) -> Result<EnergyBreakdown> {
        self.check(u)?;
        let p = self.p();
        let (plus, minus) = split_signs(u);
        let pot_plus = l2_inner(potential, &abs_pow(&plus, p))?;
        let pot_minus = l2_inner(potential, &abs_pow(&minus, p))?;
        let h1_sq = h1_norm_sq(u);
        let pair_plus = h1_inner(u, &plus)?;
        let pair_minus = h1_inner(u, &minus)?;
        let interaction = pot_plus + pot_minus;
        Ok(EnergyBreakdown {
            h1_norm_sq: h1_sq,
            interaction,
            action: 0.5 * h1_sq - interaction / (2.0 * p),
            nehari_residual: h1_sq - interaction,
            nodal_residual_plus: pair_plus - pot_plus,
            nodal_residual_minus: -pair_minus - pot_minus,
        })
    }

    /// `(I_α * |u|^p) |u|^{p-2} u`.
    fn nonlinearity(&self, u: &Field, potential: &Field) -> Field {
        potential.zip_with(&signed_pow(u, self.p()), |v, s| v * s)
    }

    /// `R(u) = (-Δ + 1) u - (I_α * |u|^p) |u|^{p-2} u`, so that
    /// `⟨A'(u), φ⟩ = ∫ R(u) φ`.
    pub fn gradient(&self, u: &Field) -> Result<Field> {
        let v = self.potential(u)?;
        grid::helmholtz(u).sub(&self.nonlinearity(u, &v))
    }

    /// `(-Δ + 1)^{-1} R(u)`, the `H¹` Riesz representative of `A'(u)`.
    pub fn sobolev_gradient(&self, u: &Field) -> Result<Field> {
        let v = self.potential(u)?;
        Ok(self.sobolev_gradient_with_potential(u, &v))
    }

    pub(crate) fn sobolev_gradient_with_potential(&self, u: &Field, potential: &Field) -> Field {
        let w = grid::inverse_helmholtz(&self.nonlinearity(u, potential));
        u.zip_with(&w, |a, b| a - b)
    }

    /// `(½ - 1/2p) ‖u‖^{2p/(p-1)} / D(u)^{1/(p-1)}`; invariant under `u -> λu`
    /// and equal to the action of the Nehari rescaling of `u`.
    pub fn groundstate_quotient(&self, u: &Field) -> Result<f64> {
        self.check(u)?;
        if u.is_zero() {
            return Err(Error::Degenerate("quotient of the zero field".into()));
        }
        let d = self.interaction(u)?;
        quotient_from_parts(self.p(), h1_norm_sq(u), d)
    }

    /// Linearization `R'(u)[φ]` given `I_α * |u|^p`.
    pub fn hessian_apply(&self, u: &Field, potential: &Field, phi: &Field) -> Result<Field> {
        self.check(phi)?;
        let p = self.p();
        let weight = if p == 2.0 { u.map(|_| 1.0) } else { u.map(|v| v.abs().powf(p - 2.0)) };
        let source = u.zip_with(&weight, |a, w| a * w).zip_with(phi, |a, f| p * a * f);
        let (conv, _) = self.kernel.convolve_pair(&source, &Field::zeros(self.grid))?;
        let signed = signed_pow(u, p);
        let local = potential.zip_with(&weight, |v, w| (p - 1.0) * v * w).zip_with(phi, |a, f| a * f);
        let nonlocal = conv.zip_with(&signed, |c, s| c * s);
        let h = grid::helmholtz(phi);
        Ok(h.zip_with(&local, |a, b| a - b).zip_with(&nonlocal, |a, b| a - b))
    }
}

pub(crate) fn quotient_from_parts(p: f64, h1_sq: f64, d: f64) -> Result<f64> {
    if !(d > 0.0) || !(h1_sq > 0.0) {
        return Err(Error::Degenerate(format!("quotient with ‖u‖² = {h1_sq:e}, D(u) = {d:e}")));
    }
    let e = 1.0 / (p - 1.0);
    Ok((0.5 - 0.5 / p) * (h1_sq.powf(p * e) / d.powf(e)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::integrate;
    use crate::riesz::convolve_direct;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn smooth_random(grid: Grid, rng: &mut ChaCha8Rng, bumps: usize) -> Field {
        let centers: Vec<(Vec<f64>, f64, f64)> = (0..bumps)
            .map(|_| {
                let c = (0..grid.dim()).map(|_| rng.gen_range(-1.5..1.5)).collect();
                (c, rng.gen_range(-1.0..1.0), rng.gen_range(0.6..1.4))
            })
            .collect();
        Field::from_fn(grid, |x| {
            centers
                .iter()
                .map(|(c, a, w)| {
                    let r2: f64 = x.iter().zip(c).map(|(xi, ci)| (xi - ci).powi(2)).sum();
                    a * (-r2 / (w * w)).exp()
                })
                .sum()
        })
    }

    fn model(dim: usize, m: usize, l: f64, alpha: f64, p: f64) -> Choquard {
        Choquard::new(Grid::new(dim, m, l).unwrap(), Params::new(dim, alpha, p).unwrap()).unwrap()
    }

    #[test]
    fn zero_field() {
        let f = model(2, 16, 8.0, 1.0, 2.0);
        let z = Field::zeros(*f.grid());
        assert_eq!(f.action(&z).unwrap(), 0.0);
        assert!(f.gradient(&z).unwrap().max_abs() == 0.0);
        assert!(f.sobolev_gradient(&z).unwrap().is_zero());
        assert!(f.groundstate_quotient(&z).is_err());
    }

    #[test]
    fn action_matches_direct_sum() {
        let f = model(3, 16, 8.0, 2.0, 2.0);
        let u = Field::from_fn(*f.grid(), |x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / 2.0).exp());
        let sq = u.map(|v| v * v);
        let d = l2_inner(&convolve_direct(f.kernel(), &sq).unwrap(), &sq).unwrap();
        let expected = 0.5 * h1_norm_sq(&u) - d / 4.0;
        let got = f.action(&u).unwrap();
        assert!((got - expected).abs() < 1e-12 * expected.abs());
    }

    #[test]
    fn breakdown_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = model(2, 32, 10.0, 1.0, 2.5);
        for _ in 0..5 {
            let u = smooth_random(*f.grid(), &mut rng, 4);
            let e = f.energy(&u).unwrap();
            let scale = e.h1_norm_sq.abs() + e.interaction.abs();
            assert!((e.action - (0.5 * e.h1_norm_sq - e.interaction / 5.0)).abs() < 1e-14 * scale);
            assert!((e.nehari_residual - (e.h1_norm_sq - e.interaction)).abs() < 1e-14 * scale);
            let sum = e.nodal_residual_plus + e.nodal_residual_minus;
            assert!((e.nehari_residual - sum).abs() < 1e-10 * scale);
            let r = f.gradient(&u).unwrap();
            assert!((integrate(&r.mul(&u).unwrap()) - e.nehari_residual).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn interaction_splits_over_signs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = model(2, 32, 10.0, 1.2, 2.3);
        let u = smooth_random(*f.grid(), &mut rng, 5);
        let (plus, minus) = split_signs(&u);
        let total = f.interaction(&u).unwrap();
        let parts = f.interaction(&plus).unwrap()
            + 2.0 * f.interaction_cross(&plus, &minus).unwrap()
            + f.interaction(&minus).unwrap();
        assert!((total - parts).abs() < 1e-10 * total);
    }

    #[test]
    fn cross_interaction_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = model(3, 16, 8.0, 2.0, 2.5);
        for _ in 0..5 {
            let a = smooth_random(*f.grid(), &mut rng, 2);
            let b = smooth_random(*f.grid(), &mut rng, 2);
            let ab = f.interaction_cross(&a, &b).unwrap();
            let ba = f.interaction_cross(&b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-10 * ab.abs());
            let aa = f.interaction_cross(&a, &a).unwrap();
            assert!((aa - f.interaction(&a).unwrap()).abs() < 1e-14 * aa);
        }
    }

    #[test]
    fn two_point_cross_interaction() {
        // Unit cells at distance d: D = h^{2N} / (4πd) with p = 2.
        let g = Grid::new(3, 16, 8.0).unwrap();
        let f = Choquard::new(g, Params::new(3, 2.0, 2.0).unwrap()).unwrap();
        let mut a = Field::zeros(g);
        let mut b = Field::zeros(g);
        a.values_mut()[g.flat_index([4, 5, 6])] = 1.0;
        b.values_mut()[g.flat_index([7, 9, 6])] = 1.0;
        let h = g.spacing();
        let d = 5.0 * h;
        let expected = g.cell_volume().powi(2) / (4.0 * std::f64::consts::PI * d);
        let got = f.interaction_cross(&a, &b).unwrap();
        assert!((got - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for p in [2.0, 2.5] {
            let f = model(2, 32, 10.0, 1.0, p);
            for _ in 0..5 {
                let u = smooth_random(*f.grid(), &mut rng, 3);
                let phi = smooth_random(*f.grid(), &mut rng, 2);
                let eps = 1e-5;
                let fd = (f.action(&u.add_scaled(eps, &phi).unwrap()).unwrap()
                    - f.action(&u.add_scaled(-eps, &phi).unwrap()).unwrap())
                    / (2.0 * eps);
                let an = integrate(&f.gradient(&u).unwrap().mul(&phi).unwrap());
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-3), "p={p}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn gradient_is_odd_for_odd_fields() {
        let f = model(2, 16, 8.0, 1.0, 2.0);
        let u = Field::from_fn(*f.grid(), |x| x[0] * (-(x[0] * x[0] + x[1] * x[1])).exp());
        let r = f.gradient(&u).unwrap();
        let rr = r.reflected();
        for (a, b) in r.values().iter().zip(rr.values()) {
            assert!((a + b).abs() < 1e-12 * r.max_abs());
        }
    }

    #[test]
    fn sobolev_gradient_represents_the_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = model(3, 16, 8.0, 2.0, 2.3);
        let u = smooth_random(*f.grid(), &mut rng, 3);
        let g = f.sobolev_gradient(&u).unwrap();
        let r = f.gradient(&u).unwrap();
        let lhs = h1_inner(&g, &u).unwrap();
        let rhs = integrate(&r.mul(&u).unwrap());
        assert!((lhs - rhs).abs() < 1e-10 * rhs.abs());
        let phi = smooth_random(*f.grid(), &mut rng, 2);
        let lhs = h1_inner(&g, &phi).unwrap();
        let rhs = integrate(&r.mul(&phi).unwrap());
        assert!((lhs - rhs).abs() < 1e-10 * rhs.abs().max(1e-8));
    }

    #[test]
    fn sobolev_gradient_of_pure_mode_without_nonlocal_term() {
        // With a vanishing potential R(u) = (-Δ+1)u, whose H¹ representative is u.
        let f = model(1, 32, 6.0, 0.5, 2.0);
        let u = Field::from_fn(*f.grid(), |x| (2.0 * std::f64::consts::PI * 3.0 * x[0] / 6.0).cos());
        let g = f.sobolev_gradient_with_potential(&u, &Field::zeros(*f.grid()));
        for (a, b) in g.values().iter().zip(u.values()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn quotient_is_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = model(2, 32, 10.0, 1.0, 2.5);
        let u = smooth_random(*f.grid(), &mut rng, 3);
        let q = f.groundstate_quotient(&u).unwrap();
        for l in [2.0, -3.0, 0.1] {
            let ql = f.groundstate_quotient(&u.scaled(l)).unwrap();
            assert!((q - ql).abs() < 1e-10 * q);
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for p in [2.0, 2.4] {
            let f = model(2, 32, 10.0, 1.0, p);
            let u = smooth_random(*f.grid(), &mut rng, 3);
            let phi = smooth_random(*f.grid(), &mut rng, 2);
            let v = f.potential(&u).unwrap();
            let hv = f.hessian_apply(&u, &v, &phi).unwrap();
            let eps = 1e-5;
            let gp = f.gradient(&u.add_scaled(eps, &phi).unwrap()).unwrap();
            let gm = f.gradient(&u.add_scaled(-eps, &phi).unwrap()).unwrap();
            let fd = gp.sub(&gm).unwrap().scaled(0.5 / eps);
            let err = fd.sub(&hv).unwrap().max_abs();
            assert!(err < 1e-5 * hv.max_abs(), "p={p}: {err}");
        }
    }
}
