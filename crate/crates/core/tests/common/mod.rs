#![allow(dead_code)]

use choquard_core::nehari::Fibering;
use choquard_core::{Choquard, Field, Grid, Params};
use rand::Rng;

pub fn model(dim: usize, m: usize, l: f64, alpha: f64, p: f64) -> Choquard {
    Choquard::new(Grid::new(dim, m, l).unwrap(), Params::new(dim, alpha, p).unwrap()).unwrap()
}

/// Sum of `count` positive Gaussian bumps near the origin. With `mixed`
/// the sum is multiplied by `-tanh(2(x₀ - s))` with `s` at the mass-weighted
/// mean of the centres, so both sign parts carry comparable mass.
pub fn random_bumps(grid: Grid, rng: &mut impl Rng, count: usize, mixed: bool) -> Field {
    let dim = grid.dim();
    let reach = 0.15 * grid.box_length();
    let bumps: Vec<(Vec<f64>, f64, f64)> = (0..count)
        .map(|_| {
            let center: Vec<f64> = (0..dim).map(|_| rng.gen_range(-reach..reach)).collect();
            (center, rng.gen_range(0.3..2.0), rng.gen_range(0.6..1.6))
        })
        .collect();
    let mass = |(_, a, w): &(Vec<f64>, f64, f64)| a * w.powi(dim as i32);
    let shift = bumps.iter().map(|b| mass(b) * b.0[0]).sum::<f64>() / bumps.iter().map(mass).sum::<f64>();
    Field::from_fn(grid, |x| {
        let sum: f64 = bumps
            .iter()
            .map(|(c, a, w)| {
                let r2: f64 = x.iter().zip(c).map(|(u, v)| (u - v).powi(2)).sum();
                a * (-r2 / (w * w)).exp()
            })
            .sum();
        if mixed {
            -(2.0 * (x[0] - shift)).tanh() * sum
        } else {
            sum
        }
    })
}

/// Maximizer of the fibering map by brute force on 400×400 log-spaced
/// grids. The first window spans four decades either side of the decoupled
/// start and is re-centred while the best point sits on its edge; after
/// that the window shrinks around the best point until the cells are far
/// below the requested accuracy. `None` when the best point keeps escaping
/// towards the boundary, i.e. there is no interior maximum.
pub fn fibering_oracle(fib: &Fibering) -> Option<(f64, f64, f64)> {
    const N: usize = 400;
    const RECENTRES: usize = 6;
    let (sp, sm) = fib.decoupled_start();
    let mut centre = (sp.ln(), sm.ln());
    let mut half = 4.0 * std::f64::consts::LN_10;
    let mut best = (0.0, 0.0, f64::NEG_INFINITY);
    let mut recentres = 0;
    // Below ~1e-7 in log scale the energy differences drown in rounding.
    while half > 1e-7 {
        let step = 2.0 * half / (N - 1) as f64;
        best.2 = f64::NEG_INFINITY;
        let mut at = (0, 0);
        for i in 0..N {
            let lp = centre.0 - half + i as f64 * step;
            for j in 0..N {
                let lm = centre.1 - half + j as f64 * step;
                let e = fib.energy(lp.exp(), lm.exp());
                if e > best.2 {
                    best = (lp, lm, e);
                    at = (i, j);
                }
            }
        }
        centre = (best.0, best.1);
        let on_edge = [at.0, at.1].iter().any(|&k| k == 0 || k == N - 1);
        if on_edge {
            recentres += 1;
            if recentres > RECENTRES {
                return None;
            }
        } else {
            half = 4.0 * step;
        }
    }
    // The supremum over the closed quadrant may sit on an axis instead.
    let axis = |f: &dyn Fn(f64) -> f64, s: f64| {
        (0..100_001)
            .map(|k| f(s * 10f64.powf(-4.0 + 8.0 * k as f64 / 100_000.0)))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let edge = axis(&|t| fib.energy(t, 0.0), sp).max(axis(&|t| fib.energy(0.0, t), sm));
    (best.2 >= edge).then(|| (best.0.exp(), best.1.exp(), best.2))
}
