//! Residual checks that tie computed fields back to the integral identities
//! and level inequalities they must satisfy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{abs_pow, Choquard};
use crate::grid::{dirichlet_energy, h1_norm_sq, integrate, l2_inner, split_signs, Field};
use crate::nehari::Fibering;
use crate::solver::Solution;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub pohozaev_residual: f64,
    pub hls_ratio: f64,
    pub sign_change: bool,
    /// `2 c₀ - c_nod`, when both levels are known.
    pub level_gap: Option<f64>,
    /// `c_nod - c₀`, when both levels are known.
    pub lower_gap: Option<f64>,
    /// `min(‖u+‖, ‖u-‖) / ‖u‖` in `H¹`.
    pub nodal_norm_floor: f64,
    /// `‖u + u∘σ‖ / ‖u‖` in `L²`, with `σ` the reflection of the first axis.
    pub antisymmetry_defect: f64,
}

impl DiagnosticsReport {
    /// `c₀ < c_nod < 2c₀`, if the levels were supplied.
    pub fn level_inequalities_hold(&self) -> Option<bool> {
        Some(self.level_gap? > 0.0 && self.lower_gap? > 0.0)
    }
}

/// Relative defect of the Pohozaev identity
/// `(N-2)/2 ∫|∇u|² + N/2 ∫u² = (N+α)/(2p) D(u)`.
pub fn pohozaev_residual(model: &Choquard, u: &Field) -> Result<f64> {
    if u.is_zero() {
        return Err(Error::Degenerate("Pohozaev residual of the zero field".into()));
    }
    let params = model.params();
    let n = params.dim as f64;
    let lhs = 0.5 * (n - 2.0) * dirichlet_energy(u) + 0.5 * n * l2_inner(u, u)?;
    let rhs = (n + params.alpha) / (2.0 * params.p) * model.interaction(u)?;
    Ok((lhs - rhs).abs() / lhs.abs().max(rhs.abs()))
}

/// `D(v) / (∫ |v|^{2Np/(N+α)})^{(N+α)/N}`, bounded by the
/// Hardy–Littlewood–Sobolev inequality.
pub fn hls_ratio(model: &Choquard, v: &Field) -> Result<f64> {
    let params = model.params();
    let n = params.dim as f64;
    let s = 2.0 * n * params.p / (n + params.alpha);
    let denom = integrate(&abs_pow(v, s)).powf((n + params.alpha) / n);
    if !(denom > 0.0) {
        return Err(Error::Degenerate("HLS ratio of the zero field".into()));
    }
    Ok(model.interaction(v)? / denom)
}

/// Field-level diagnostics; the level gaps are left empty.
pub fn diagnose(model: &Choquard, u: &Field, degenerate_tol: f64) -> Result<DiagnosticsReport> {
    let (plus, minus) = split_signs(u);
    let norm = h1_norm_sq(u).sqrt();
    let floor = h1_norm_sq(&plus).sqrt().min(h1_norm_sq(&minus).sqrt()) / norm;
    let mirrored = u.reflected_axis(0);
    let defect = (l2_inner(&u.add_scaled(1.0, &mirrored)?, &u.add_scaled(1.0, &mirrored)?)? / l2_inner(u, u)?).sqrt();
    Ok(DiagnosticsReport {
        pohozaev_residual: pohozaev_residual(model, u)?,
        hls_ratio: hls_ratio(model, u)?,
        sign_change: floor > degenerate_tol,
        level_gap: None,
        lower_gap: None,
        nodal_norm_floor: floor,
        antisymmetry_defect: defect,
    })
}

/// Diagnostics of a nodal solution together with the gaps
/// `2c₀ - c_nod` and `c_nod - c₀` against a groundstate at the same parameters.
pub fn verify_level_inequalities(
    model: &Choquard,
    groundstate: &Solution,
    nodal: &Solution,
    degenerate_tol: f64,
) -> Result<DiagnosticsReport> {
    let (g, n) = (&groundstate.report, &nodal.report);
    if g.p != n.p || g.alpha != n.alpha || groundstate.field.grid() != nodal.field.grid() {
        return Err(Error::InvalidParams(format!(
            "reports at different parameters: (α, p) = ({}, {}) vs ({}, {})",
            g.alpha, g.p, n.alpha, n.p
        )));
    }
    let mut report = diagnose(model, &nodal.field, degenerate_tol)?;
    report.level_gap = Some(2.0 * g.level - n.level);
    report.lower_gap = Some(n.level - g.level);
    Ok(report)
}

/// Outcome of the derivative-free nodal-level probe for `p < 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExploratoryReport {
    pub p: f64,
    /// Least quotient over the radial trial family, an upper bound for `c₀`.
    pub c0_estimate: f64,
    /// Least nodal-set level found, an upper bound for `c_nod`.
    pub nodal_upper_bound: f64,
    /// `(nodal_upper_bound - c0_estimate) / c0_estimate`.
    pub relative_excess: f64,
}

/// `exp(-b √(a² + |x|²))`: Gaussian core, exponential tail.
fn trial_profile(model: &Choquard, a: f64, b: f64, center: f64) -> Field {
    Field::from_fn(*model.grid(), |x| {
        let mut r2: f64 = x.iter().map(|v| v * v).sum();
        r2 += center * center - 2.0 * center * x[0];
        (-b * (a * a + r2).sqrt() + b * a).exp()
    })
}

/// Two-parameter Nelder–Mead on `(ln a, ln b)`.
fn nelder_mead(f: impl Fn(f64, f64) -> f64, start: (f64, f64), iters: usize) -> ((f64, f64), f64) {
    let mut simplex = [
        (start, f(start.0, start.1)),
        ((start.0 + 0.5, start.1), f(start.0 + 0.5, start.1)),
        ((start.0, start.1 + 0.5), f(start.0, start.1 + 0.5)),
    ];
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0], simplex[2]);
        let centroid = ((simplex[0].0 .0 + simplex[1].0 .0) / 2.0, (simplex[0].0 .1 + simplex[1].0 .1) / 2.0);
        let along = |t: f64| (centroid.0 + t * (worst.0 .0 - centroid.0), centroid.1 + t * (worst.0 .1 - centroid.1));
        let r = along(-1.0);
        let fr = f(r.0, r.1);
        if fr < best.1 {
            let e = along(-2.0);
            let fe = f(e.0, e.1);
            simplex[2] = if fe < fr { (e, fe) } else { (r, fr) };
        } else if fr < simplex[1].1 {
            simplex[2] = (r, fr);
        } else {
            let c = along(0.5);
            let fc = f(c.0, c.1);
            if fc < worst.1 {
                simplex[2] = (c, fc);
            } else {
                for k in 1..3 {
                    let x = ((simplex[k].0 .0 + best.0 .0) / 2.0, (simplex[k].0 .1 + best.0 .1) / 2.0);
                    simplex[k] = (x, f(x.0, x.1));
                }
            }
        }
        if (simplex[2].1 - simplex[0].1).abs() <= 1e-12 * simplex[0].1.abs() {
            break;
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

/// For `p < 2` the nodal infimum equals `c₀` and is not attained: a
/// groundstate-like positive part plus a small, remote negative part comes
/// arbitrarily close. This probes that picture using only quotients and the
/// fibering map.
pub fn exploratory_nodal_gap(model: &Choquard) -> Result<ExploratoryReport> {
    let p = model.p();
    let quotient = |la: f64, lb: f64| {
        model
            .groundstate_quotient(&trial_profile(model, la.exp(), lb.exp(), 0.0))
            .unwrap_or(f64::INFINITY)
    };
    let ((la, lb), c0) = nelder_mead(quotient, (0.0, 0.0), 120);
    let profile = trial_profile(model, la.exp(), lb.exp(), 0.0);

    let l = model.grid().box_length();
    let mut best = f64::INFINITY;
    for (center, width) in [(0.25, 1.0), (0.25, 2.0), (0.3, 1.5), (0.35, 1.0)] {
        let c = center * l;
        let cut = 0.5 * c;
        let w_plus = profile.zip_with(&Field::from_fn(*model.grid(), |x| x[0]), |u, x| if x < cut { u } else { 0.0 });
        let w_minus = Field::from_fn(*model.grid(), |x| {
            if x[0] < cut {
                return 0.0;
            }
            let r2: f64 = x.iter().enumerate().map(|(i, v)| if i == 0 { (v - c).powi(2) } else { v * v }).sum();
            (-r2 / (width * width)).exp()
        });
        let fib = Fibering::new(model, &w_plus, &w_minus)?;
        if let Some(start) = small_branch_start(&fib) {
            if let Ok(pt) = fib.stationary_point(start) {
                best = best.min(pt.value);
            }
        }
    }
    if !best.is_finite() {
        return Err(Error::NotConverged { what: "exploratory nodal probe", iterations: 0, residual: f64::NAN });
    }
    Ok(ExploratoryReport { p, c0_estimate: c0, nodal_upper_bound: best, relative_excess: (best - c0) / c0 })
}

/// With `t+` at its decoupled value, the smallest `t-` where `∂E/∂t-`
/// turns from negative to positive.
fn small_branch_start(fib: &Fibering) -> Option<(f64, f64)> {
    let (tp, tm0) = fib.decoupled_start();
    let g = |t: f64| fib.gradient(tp, t)[1];
    let grid: Vec<f64> = (0..=400).map(|i| tm0 * 10f64.powf(-20.0 + 20.0 * i as f64 / 400.0)).collect();
    let k = grid.windows(2).position(|w| g(w[0]) < 0.0 && g(w[1]) >= 0.0)?;
    let (mut lo, mut hi) = (grid[k], grid[k + 1]);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some((tp, hi))
}
