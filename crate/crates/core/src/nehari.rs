//! Projections onto the Nehari manifold and the Nehari nodal set.
//!
//! The nodal projection maximizes the fibering map
//! `E(t+, t-) = A_p(t+^{1/p} w+ - t-^{1/p} w-)` over `(0, ∞)^2`. Everything
//! but the scalars `t±` is precomputed once, so each evaluation is O(1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{abs_pow, Choquard};
use crate::grid::{h1_inner, h1_norm_sq, l2_inner, split_signs, Field};

/// Rescales `u` onto the Nehari manifold: `t^{2p-2} = ‖u‖²_{H¹} / D(u)`.
pub fn scalar_project(model: &Choquard, u: &Field) -> Result<(f64, Field)> {
    let d = model.interaction(u)?;
    let t = scalar_factor(model.p(), h1_norm_sq(u), d)?;
    Ok((t, u.scaled(t)))
}

pub(crate) fn scalar_factor(p: f64, h1_sq: f64, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Degenerate(format!("interaction D(u) = {d:e} is not positive")));
    }
    if !(h1_sq > 0.0) {
        return Err(Error::Degenerate("zero field has no Nehari projection".into()));
    }
    Ok((h1_sq / d).powf(1.0 / (2.0 * p - 2.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberingPoint {
    pub t_plus: f64,
    pub t_minus: f64,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Scalar coefficients of the fibering map for a pair `w± ≥ 0` with disjoint
/// supports.
///
/// `h1_cross = ⟨w+, w-⟩_{H¹}` vanishes for disjoint supports in the
/// continuum; with spectral derivatives it is small but nonzero, and keeping
/// it makes `E(1, 1) = A_p(w+ - w-)` hold exactly on the grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fibering {
    pub p: f64,
    pub h1_plus: f64,
    pub h1_minus: f64,
    pub h1_cross: f64,
    pub d_plus: f64,
    pub d_minus: f64,
    pub d_cross: f64,
}

const NEWTON_TOL: f64 = 1e-12;
const ACCEPT_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 200;

impl Fibering {
    pub fn new(model: &Choquard, w_plus: &Field, w_minus: &Field) -> Result<Self> {
        Ok(Self::with_potentials(model, w_plus, w_minus)?.0)
    }

    /// Also returns `I_α * |w±|^p`, from which the potential of any
    /// recombination follows linearly.
    pub fn with_potentials(model: &Choquard, w_plus: &Field, w_minus: &Field) -> Result<(Self, Field, Field)> {
        w_plus.check_same_grid(w_minus)?;
        let negative = w_plus
            .values()
            .iter()
            .chain(w_minus.values())
            .filter(|&&v| v < 0.0)
            .count();
        if negative > 0 {
            return Err(Error::Degenerate(format!("{negative} negative entries in a sign part")));
        }
        let overlap = w_plus
            .values()
            .iter()
            .zip(w_minus.values())
            .filter(|(&a, &b)| a != 0.0 && b != 0.0)
            .count();
        if overlap > 0 {
            return Err(Error::OverlappingSupports(overlap));
        }
        let p = model.p();
        let (v_plus, v_minus) = model.potential_pair(w_plus, w_minus)?;
        let pow_plus = abs_pow(w_plus, p);
        let pow_minus = abs_pow(w_minus, p);
        let fib = Self {
            p,
            h1_plus: h1_norm_sq(w_plus),
            h1_minus: h1_norm_sq(w_minus),
            h1_cross: h1_inner(w_plus, w_minus)?,
            d_plus: l2_inner(&v_plus, &pow_plus)?,
            d_minus: l2_inner(&v_minus, &pow_minus)?,
            d_cross: 0.5 * (l2_inner(&v_plus, &pow_minus)? + l2_inner(&v_minus, &pow_plus)?),
        };
        Ok((fib, v_plus, v_minus))
    }

    pub fn energy(&self, t_plus: f64, t_minus: f64) -> f64 {
        let p = self.p;
        let (sp, sm) = (t_plus.powf(1.0 / p), t_minus.powf(1.0 / p));
        0.5 * sp * sp * self.h1_plus + 0.5 * sm * sm * self.h1_minus
            - sp * sm * self.h1_cross
            - (t_plus * t_plus * self.d_plus
                + 2.0 * t_plus * t_minus * self.d_cross
                + t_minus * t_minus * self.d_minus)
                / (2.0 * p)
    }

    pub fn gradient(&self, tp: f64, tm: f64) -> [f64; 2] {
        let p = self.p;
        let (q, r) = (2.0 / p, 1.0 / p);
        let c = self.h1_cross;
        [
            0.5 * self.h1_plus * q * tp.powf(q - 1.0) - c * r * tp.powf(r - 1.0) * tm.powf(r)
                - (self.d_plus * tp + self.d_cross * tm) / p,
            0.5 * self.h1_minus * q * tm.powf(q - 1.0) - c * r * tp.powf(r) * tm.powf(r - 1.0)
                - (self.d_cross * tp + self.d_minus * tm) / p,
        ]
    }

    pub fn hessian(&self, tp: f64, tm: f64) -> [[f64; 2]; 2] {
        let p = self.p;
        let (q, r) = (2.0 / p, 1.0 / p);
        let c = self.h1_cross;
        let pp = 0.5 * self.h1_plus * q * (q - 1.0) * tp.powf(q - 2.0)
            - c * r * (r - 1.0) * tp.powf(r - 2.0) * tm.powf(r)
            - self.d_plus / p;
        let mm = 0.5 * self.h1_minus * q * (q - 1.0) * tm.powf(q - 2.0)
            - c * r * (r - 1.0) * tp.powf(r) * tm.powf(r - 2.0)
            - self.d_minus / p;
        let pm = -c * r * r * tp.powf(r - 1.0) * tm.powf(r - 1.0) - self.d_cross / p;
        [[pp, pm], [pm, mm]]
    }

    /// Relative nodal residuals `⟨A'(u), ±u±⟩ / scale` of the recombined field.
    pub fn relative_residuals(&self, tp: f64, tm: f64) -> [f64; 2] {
        let r = 1.0 / self.p;
        let (sp, sm) = (tp.powf(r), tm.powf(r));
        let cross = sp * sm * self.h1_cross;
        let plus_pot = tp * (tp * self.d_plus + tm * self.d_cross);
        let minus_pot = tm * (tp * self.d_cross + tm * self.d_minus);
        let plus = sp * sp * self.h1_plus - cross - plus_pot;
        let minus = sm * sm * self.h1_minus - cross - minus_pot;
        [
            plus / (sp * sp * self.h1_plus + cross.abs() + plus_pot),
            minus / (sm * sm * self.h1_minus + cross.abs() + minus_pot),
        ]
    }

    fn residual_norm(&self, tp: f64, tm: f64) -> f64 {
        let [a, b] = self.relative_residuals(tp, tm);
        a.abs().max(b.abs())
    }

    /// Independent scalar projections of `w±`, ignoring the coupling.
    pub fn decoupled_start(&self) -> (f64, f64) {
        let e = self.p / (2.0 * self.p - 2.0);
        ((self.h1_plus / self.d_plus).powf(e), (self.h1_minus / self.d_minus).powf(e))
    }

    fn check_nondegenerate(&self) -> Result<()> {
        let ok = [self.h1_plus, self.h1_minus, self.d_plus, self.d_minus]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Degenerate("a sign part is zero".into()))
        }
    }

    /// Interior maximizer of the fibering map: damped Newton from the
    /// decoupled projections, with a log-grid search as fallback.
    pub fn maximize(&self) -> Result<FiberingPoint> {
        self.check_nondegenerate()?;
        let start = self.decoupled_start();
        // Newton only certifies a local maximum; the supremum may also sit on
        // an axis, or at a second interior peak, when the coupling is strong.
        let (sp, sm) = start;
        let edge = if self.energy(sp, 0.0) >= self.energy(0.0, sm) { (sp, 0.0) } else { (0.0, sm) };
        let edge_value = self.energy(edge.0, edge.1);
        let mut point = self.ascend(start)?;
        if !point.converged || point.value < edge_value {
            let restart = self.grid_search(start)?;
            let again = self.ascend(restart)?;
            let iterations = point.iterations + again.iterations;
            if !point.converged || (again.converged && again.value > point.value) {
                point = again;
            }
            point.iterations = iterations;
        }
        if !point.converged {
            return Err(Error::NotConverged {
                what: "fibering maximization",
                iterations: point.iterations,
                residual: self.residual_norm(point.t_plus, point.t_minus),
            });
        }
        if edge_value > point.value {
            return Err(Error::BoundaryMaximizer { t_plus: edge.0, t_minus: edge.1 });
        }
        Ok(point)
    }

    fn ascend(&self, start: (f64, f64)) -> Result<FiberingPoint> {
        let (mut tp, mut tm) = start;
        let (t0p, t0m) = start;
        let mut value = self.energy(tp, tm);
        let mut iterations = 0;
        let mut converged = false;
        while iterations < MAX_NEWTON {
            let res = self.residual_norm(tp, tm);
            if res <= NEWTON_TOL {
                converged = true;
                break;
            }
            iterations += 1;
            let g = self.gradient(tp, tm);
            let h = self.hessian(tp, tm);
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            let dir = if h[0][0] < 0.0 && det > 0.0 {
                [(-h[1][1] * g[0] + h[0][1] * g[1]) / det, (h[1][0] * g[0] - h[0][0] * g[1]) / det]
            } else {
                [g[0] * tp * tp / value.abs().max(f64::MIN_POSITIVE), g[1] * tm * tm / value.abs().max(f64::MIN_POSITIVE)]
            };
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                let (np, nm) = (tp + step * dir[0], tm + step * dir[1]);
                if np > 0.0 && nm > 0.0 {
                    let nv = self.energy(np, nm);
                    let noise = 64.0 * f64::EPSILON * value.abs();
                    if nv > value || (nv >= value - noise && self.residual_norm(np, nm) < res) {
                        tp = np;
                        tm = nm;
                        value = nv;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            if tp < 1e-12 * t0p || tm < 1e-12 * t0m {
                return Err(Error::BoundaryMaximizer { t_plus: tp, t_minus: tm });
            }
        }
        if !converged && self.residual_norm(tp, tm) <= ACCEPT_TOL {
            converged = true;
        }
        Ok(FiberingPoint { t_plus: tp, t_minus: tm, value, converged, iterations })
    }

    /// Best point of a log-spaced grid spanning eight decades around `center`.
    fn grid_search(&self, center: (f64, f64)) -> Result<(f64, f64)> {
        const N: usize = 81;
        let at = |c: f64, i: usize| c * 10f64.powf(-4.0 + 8.0 * i as f64 / (N - 1) as f64);
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for i in 0..N {
            for j in 0..N {
                let v = self.energy(at(center.0, i), at(center.1, j));
                if v > best.0 {
                    best = (v, i, j);
                }
            }
        }
        let (tp, tm) = (at(center.0, best.1), at(center.1, best.2));
        if best.1 == 0 || best.2 == 0 {
            return Err(Error::BoundaryMaximizer { t_plus: tp, t_minus: tm });
        }
        Ok((tp, tm))
    }

    /// Any critical point of the fibering map near `start`, by Newton on the
    /// residuals. Needed for `p < 2`, where the map is not concave and the
    /// relevant critical point need not be a maximum.
    pub fn stationary_point(&self, start: (f64, f64)) -> Result<FiberingPoint> {
        self.check_nondegenerate()?;
        let (mut tp, mut tm) = start;
        let mut iterations = 0;
        let mut res = self.residual_norm(tp, tm);
        while res > NEWTON_TOL && iterations < MAX_NEWTON {
            iterations += 1;
            let g = self.gradient(tp, tm);
            let h = self.hessian(tp, tm);
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            if det == 0.0 || !det.is_finite() {
                break;
            }
            let dir = [(-h[1][1] * g[0] + h[0][1] * g[1]) / det, (h[1][0] * g[0] - h[0][0] * g[1]) / det];
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                let (np, nm) = (tp + step * dir[0], tm + step * dir[1]);
                if np > 0.0 && nm > 0.0 {
                    let nr = self.residual_norm(np, nm);
                    if nr < res {
                        tp = np;
                        tm = nm;
                        res = nr;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let converged = res <= ACCEPT_TOL;
        let point = FiberingPoint { t_plus: tp, t_minus: tm, value: self.energy(tp, tm), converged, iterations };
        if converged {
            Ok(point)
        } else {
            Err(Error::NotConverged { what: "fibering critical point", iterations, residual: res })
        }
    }
}

/// `A_p(t+^{1/p} w+ - t-^{1/p} w-)` through the fibering coefficients.
pub fn fibering_energy(model: &Choquard, w_plus: &Field, w_minus: &Field, t_plus: f64, t_minus: f64) -> Result<f64> {
    Ok(Fibering::new(model, w_plus, w_minus)?.energy(t_plus, t_minus))
}

pub fn fibering_maximize(model: &Choquard, w_plus: &Field, w_minus: &Field) -> Result<FiberingPoint> {
    Fibering::new(model, w_plus, w_minus)?.maximize()
}

/// Result of projecting a sign-changing field onto the nodal set.
#[derive(Clone, Debug)]
pub struct NodalProjection {
    pub point: FiberingPoint,
    pub field: Field,
    /// `I_α * |field|^p`.
    pub potential: Field,
    /// `‖u+‖_{H¹}`, `‖u-‖_{H¹}` of the projected field.
    pub h1_plus: f64,
    pub h1_minus: f64,
}

/// Splits `u`, maximizes the fibering map of its sign parts and recombines.
pub fn nodal_project(model: &Choquard, u: &Field) -> Result<NodalProjection> {
    let (w_plus, w_minus) = split_signs(u);
    if w_plus.is_zero() || w_minus.is_zero() {
        return Err(Error::NodalCollapse { ratio: 0.0, tol: 0.0 });
    }
    let (fib, v_plus, v_minus) = Fibering::with_potentials(model, &w_plus, &w_minus)?;
    let point = fib.maximize()?;
    Ok(recombine(model.p(), &fib, point, &w_plus, &w_minus, &v_plus, &v_minus))
}

pub(crate) fn recombine(
    p: f64,
    fib: &Fibering,
    point: FiberingPoint,
    w_plus: &Field,
    w_minus: &Field,
    v_plus: &Field,
    v_minus: &Field,
) -> NodalProjection {
    let (sp, sm) = (point.t_plus.powf(1.0 / p), point.t_minus.powf(1.0 / p));
    let field = w_plus.zip_with(w_minus, |a, b| sp * a - sm * b);
    let potential = v_plus.zip_with(v_minus, |a, b| point.t_plus * a + point.t_minus * b);
    NodalProjection {
        point,
        field,
        potential,
        h1_plus: sp * fib.h1_plus.sqrt(),
        h1_minus: sm * fib.h1_minus.sqrt(),
    }
}
