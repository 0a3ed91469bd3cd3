//! Reference solutions: exhaustive grid search and big-M model export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::step_norm;
use crate::problem::{NormOptInstance, Problem};

/// Largest grid [`grid_search`] accepts.
pub const MAX_GRID_POINTS: u64 = 10_000_000;

/// Big-M constant used when none is given.
pub const DEFAULT_BIG_M: f64 = 10_000.0;

/// A uniform tensor grid on the box `[lower, upper]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    lower: Vec<f64>,
    upper: Vec<f64>,
    points_per_dim: usize,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, points_per_dim: usize) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidDimensions(format!(
                "box bounds of lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if let Some(k) = (0..lower.len()).find(|&k| !(lower[k] < upper[k])) {
            return Err(Error::InvalidParameter(format!(
                "lower[{k}] = {} is not below upper[{k}] = {}",
                lower[k], upper[k]
            )));
        }
        if points_per_dim < 2 {
            return Err(Error::InvalidParameter(
                "need at least 2 points per dimension".into(),
            ));
        }
        let total = (points_per_dim as u64).checked_pow(lower.len() as u32);
        match total {
            Some(t) if t <= MAX_GRID_POINTS => {}
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "grid of {points_per_dim}^{} points exceeds the limit of {MAX_GRID_POINTS}",
                    lower.len()
                )))
            }
        }
        Ok(Self {
            lower,
            upper,
            points_per_dim,
        })
    }

    /// Same box in every coordinate.
    pub fn cube(dim: usize, lower: f64, upper: f64, points_per_dim: usize) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim], points_per_dim)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> u64 {
        (self.points_per_dim as u64).pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Grid point number `index`; the first coordinate varies fastest.
    pub fn point(&self, mut index: u64) -> DVector<f64> {
        let p = self.points_per_dim as u64;
        let last = (self.points_per_dim - 1) as f64;
        DVector::from_fn(self.dim(), |k, _| {
            let i = index % p;
            index /= p;
            let frac = i as f64 / last;
            self.lower[k] + frac * (self.upper[k] - self.lower[k])
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridResult {
    pub x: DVector<f64>,
    pub objective: f64,
    /// Grid points satisfying the step constraint.
    pub feasible_points: u64,
}

/// Minimises `f` over the grid points with `‖G(x)‖₀⁺ ≤ s`.
///
/// Ties are broken toward the lowest grid index, so the result does not
/// depend on how the work is split across threads.
pub fn grid_search<P: Problem + ?Sized>(
    problem: &P,
    s: usize,
    grid: &GridSpec,
) -> Result<GridResult> {
    if grid.dim() != problem.dims().k {
        return Err(Error::InvalidDimensions(format!(
            "grid has {} coordinates, problem has K = {}",
            grid.dim(),
            problem.dims().k
        )));
    }
    let (best, feasible) = (0..grid.len())
        .into_par_iter()
        .filter_map(|idx| {
            let x = grid.point(idx);
            (step_norm(&problem.constraints(&x)) <= s).then(|| (problem.objective(&x), idx))
        })
        .fold(
            || (None::<(f64, u64)>, 0u64),
            |(best, count), cand| (Some(better(best, cand)), count + 1),
        )
        .reduce(
            || (None, 0),
            |(a, ca), (b, cb)| {
                let best = match (a, b) {
                    (Some(a), Some(b)) => Some(better(Some(a), b)),
                    (a, b) => a.or(b),
                };
                (best, ca + cb)
            },
        );
    let (objective, idx) = best.ok_or(Error::EmptyFeasibleGrid)?;
    Ok(GridResult {
        x: grid.point(idx),
        objective,
        feasible_points: feasible,
    })
}

fn better(current: Option<(f64, u64)>, cand: (f64, u64)) -> (f64, u64) {
    match current {
        Some(cur) if (cur.0, cur.1) <= (cand.0, cand.1) || cand.0.is_nan() => cur,
        _ => cand,
    }
}

fn coef(v: f64) -> String {
    format!("{v:?}")
}

/// Writes the big-M binary reformulation in LP format.
///
/// The model is `max Σ x_k` (written as minimising `−Σ x_k`) over `x ≥ 0`
/// and binary `y`, with `Σ_k ξ²_{mk,n} x_k² − b ≤ (1 − y_n)·big_M` for every
/// `(m, n)` and `Σ_n y_n ≥ N − s`. Variables are numbered from 1.
pub fn export_bip(instance: &NormOptInstance, s: usize, big_m: f64) -> Result<String> {
    if !(big_m > 0.0 && big_m.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "big_M must be positive, got {big_m}"
        )));
    }
    let dims = instance.dims();
    let mut out = String::new();
    let w = &mut out;
    // Writing into a String cannot fail.
    let _ = writeln!(
        w,
        "\\ big-M binary reformulation of a norm-optimization instance"
    );
    let _ = writeln!(
        w,
        "\\ K = {}, M = {}, N = {}, s = {s}, b = {}",
        dims.k,
        dims.m,
        dims.n,
        coef(instance.b)
    );
    let _ = writeln!(w, "\\ big_M = {}", coef(big_m));
    let _ = writeln!(w, "Minimize");
    let obj: Vec<String> = (1..=dims.k).map(|k| format!("- x{k}")).collect();
    let _ = writeln!(w, " obj: {}", obj.join(" "));
    let _ = writeln!(w, "Subject To");
    for n in 0..dims.n {
        for m in 0..dims.m {
            let terms: Vec<String> = (0..dims.k)
                .map(|k| format!("{} x{} ^ 2", coef(instance.xi_sq(m, k, n)), k + 1))
                .collect();
            let _ = writeln!(
                w,
                " q{}_{}: [ {} ] + {} y{} <= {}",
                m + 1,
                n + 1,
                terms.join(" + "),
                coef(big_m),
                n + 1,
                coef(instance.b + big_m)
            );
        }
    }
    let ys: Vec<String> = (1..=dims.n).map(|n| format!("y{n}")).collect();
    let _ = writeln!(
        w,
        " card: {} >= {}",
        ys.join(" + "),
        dims.n.saturating_sub(s)
    );
    let _ = writeln!(w, "Bounds");
    for k in 1..=dims.k {
        let _ = writeln!(w, " x{k} >= 0");
    }
    let _ = writeln!(w, "Binaries");
    let _ = writeln!(w, " {}", ys.join(" "));
    let _ = writeln!(w, "End");
    Ok(out)
}

/// [`export_bip`] written to `path`.
pub fn write_bip_lp(instance: &NormOptInstance, s: usize, big_m: f64, path: &Path) -> Result<()> {
    let text = export_bip(instance, s, big_m)?;
    fs::write(path, text)?;
    Ok(())
}
