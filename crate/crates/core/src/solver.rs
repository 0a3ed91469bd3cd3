//! Smoothing Newton method for step-constrained problems.
//!
//! Each iteration forms `Λ = G(x) + τW`, picks the representative candidate
//! set `T` of `Λ`, takes `V = U_T` and drives `F(w; V)` to zero with a
//! Newton step on the smoothed Jacobian `∇F_μ`. The step length is the
//! largest `π^t` that keeps `‖G(x)‖₀⁺ ≤ (γ + 1)s`.
//!
//! The count in the step-size test ignores entries of `G` on the current
//! active set `V` within `ls_zero_rel · ‖F(w_ℓ; V)‖` of zero. Entries driven
//! to zero by the Newton step approach it from above when `G` is convex, so
//! an exact count never decreases for them and the step size collapses; at
//! the current accuracy such entries are indistinguishable from zero. Setting `ls_zero_rel = 0`
//! restores the exact count.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{representative_set, step_norm};
use crate::problem::{Dims, Problem};
use crate::stationarity::{
    active_set_of, check_tau_stationary, lagrangian_gradient, residual_with, theta, ActiveSet,
    PrimalDualPoint, StationarityReport,
};

/// Header of the CSV written by [`write_trace_csv`].
pub const TRACE_HEADER: &str = "iter,residual,objective,violations,step,mu,direction";

/// Slack on the line-search bound `(γ + 1)s`, absorbing rounding in the product.
const LINE_SEARCH_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub max_it: usize,
    /// The halting tolerance is `tol_scale · K · M · N`.
    pub tol_scale: f64,
    pub rho: f64,
    pub mu_bar: f64,
    pub nu: f64,
    pub pi: f64,
    pub gamma: f64,
    pub tau: f64,
    pub s: usize,
    pub t_max: u32,
    /// Relative pivot threshold below which the Newton system counts as singular.
    pub pivot_tol: f64,
    /// Line-search zero threshold, relative to the current residual norm.
    pub ls_zero_rel: f64,
}

impl SolverConfig {
    pub const DEFAULT_GAMMA: f64 = 0.25;

    pub fn new(s: usize) -> Self {
        Self {
            max_it: 2000,
            tol_scale: 1e-9,
            rho: 1e-2,
            mu_bar: 1e-2,
            nu: 0.999,
            pi: 0.85,
            gamma: Self::DEFAULT_GAMMA,
            tau: 0.75,
            s,
            t_max: 50,
            pivot_tol: 1e-12,
            ls_zero_rel: 1.0,
        }
    }

    /// Budget `s = ⌈αN⌉` with `γ = a/s`, where `a` is 2, 3 or 4 for risk
    /// levels up to 0.01, up to 0.05 and above.
    pub fn for_alpha(alpha: f64, n: usize) -> Result<Self> {
        let s = budget_for_alpha(alpha, n)?;
        let a = if alpha <= 0.01 {
            2.0
        } else if alpha <= 0.05 {
            3.0
        } else {
            4.0
        };
        let mut cfg = Self::new(s);
        cfg.gamma = a / s as f64;
        Ok(cfg)
    }

    pub fn tolerance(&self, dims: Dims) -> f64 {
        self.tol_scale * (dims.k * dims.m * dims.n) as f64
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{name} must lie in (0, 1), got {v}"
                )))
            }
        };
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        open_unit("nu", self.nu)?;
        open_unit("pi", self.pi)?;
        positive("tol_scale", self.tol_scale)?;
        positive("rho", self.rho)?;
        positive("mu_bar", self.mu_bar)?;
        positive("tau", self.tau)?;
        positive("pivot_tol", self.pivot_tol)?;
        if !(self.ls_zero_rel >= 0.0 && self.ls_zero_rel.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ls_zero_rel must be nonnegative, got {}",
                self.ls_zero_rel
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be nonnegative, got {}",
                self.gamma
            )));
        }
        if self.s == 0 {
            return Err(Error::InvalidParameter("s must be at least 1".into()));
        }
        if self.max_it == 0 || self.t_max == 0 {
            return Err(Error::InvalidParameter(
                "max_it and t_max must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `⌈αN⌉`, at least 1.
pub fn budget_for_alpha(alpha: f64, n: usize) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    // Round away representation noise so that e.g. 0.05·100 gives 5, not 6.
    let prod = alpha * n as f64;
    let s = (prod - 1e-9 * prod.max(1.0)).ceil() as usize;
    Ok(s.max(1))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DirectionKind {
    Newton,
    Fallback,
}

impl fmt::Display for DirectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Newton => "newton",
            Self::Fallback => "fallback",
        })
    }
}

/// One row of the solve trace.
///
/// Rows for steps taken carry `step` and `direction`; the final row records
/// the terminal iterate and leaves both empty.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// `‖F(w_ℓ; U_{T_ℓ})‖`.
    pub residual: f64,
    pub objective: f64,
    pub violations: usize,
    pub step: Option<f64>,
    pub mu: f64,
    pub direction: Option<DirectionKind>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    LineSearchStalled,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Converged => "converged",
            Self::MaxIterations => "max-iterations",
            Self::LineSearchStalled => "line-search-stalled",
        })
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub point: PrimalDualPoint,
    pub status: SolveStatus,
    pub trace: Vec<IterationRecord>,
    /// τ-stationarity check at the output, at ten times the halting tolerance.
    pub final_report: StationarityReport,
    /// Halting tolerance used.
    pub tol: f64,
}

impl SolveResult {
    /// Number of steps taken.
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }

    pub fn final_residual(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.residual)
    }
}

/// A search direction `d = (d_x, d_W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Direction {
    pub dx: DVector<f64>,
    pub dw: DMatrix<f64>,
}

impl Direction {
    /// Splits a vector in block order (`x`, `W_V`, `W_V̄`).
    pub fn from_block(v: &ActiveSet, block: &DVector<f64>, k: usize) -> Self {
        let (rows, cols) = v.shape();
        let mut dw = DMatrix::zeros(rows, cols);
        for (i, idx) in v.block_order().into_iter().enumerate() {
            dw[idx] = block[k + i];
        }
        Self {
            dx: block.rows(0, k).into_owned(),
            dw,
        }
    }

    /// Stacks into block order (`x`, `W_V`, `W_V̄`).
    pub fn to_block(&self, v: &ActiveSet) -> DVector<f64> {
        let k = self.dx.len();
        let mut out = DVector::zeros(k + self.dw.len());
        out.rows_mut(0, k).copy_from(&self.dx);
        for (i, idx) in v.block_order().into_iter().enumerate() {
            out[k + i] = self.dw[idx];
        }
        out
    }
}

/// The representative candidate set of `Λ`.
pub fn select_t(lambda: &DMatrix<f64>, s: usize) -> Vec<usize> {
    representative_set(lambda, s)
}

/// Solves `∇F_μ(w; V) d = −F(w; V)`.
///
/// The `W_V̄` block is read off directly; the remaining system of order
/// `K + |V|` is factorised by LU with partial pivoting. Returns `None` when
/// a pivot falls below `pivot_tol` times the largest matrix entry.
pub fn newton_direction<P: Problem + ?Sized>(
    problem: &P,
    point: &PrimalDualPoint,
    z: &DMatrix<f64>,
    v: &ActiveSet,
    mu: f64,
    pivot_tol: f64,
) -> Option<Direction> {
    let k = point.x.len();
    let nv = v.len();
    let jac = problem.constraint_jacobian(&point.x, v.pairs());
    let mut a = DMatrix::zeros(k + nv, k + nv);
    a.view_mut((0, 0), (k, k))
        .copy_from(&theta(problem, point, v));
    a.view_mut((0, k), (k, nv)).copy_from(&jac);
    a.view_mut((k, 0), (nv, k)).copy_from(&jac.transpose());
    for i in 0..nv {
        a[(k + i, k + i)] = -mu;
    }
    let mut rhs = DVector::zeros(k + nv);
    rhs.rows_mut(0, k)
        .copy_from(&-lagrangian_gradient(problem, &point.x, &point.w, v));
    for (i, &(m, n)) in v.pairs().iter().enumerate() {
        rhs[k + i] = -z[(m, n)];
    }

    let scale = a.amax();
    let lu = a.lu();
    let u = lu.u();
    if scale == 0.0 || u.diagonal().iter().any(|p| !(p.abs() >= pivot_tol * scale)) {
        return None;
    }
    let sol = lu.solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }

    let mut dw = -&point.w;
    for (i, &(m, n)) in v.pairs().iter().enumerate() {
        dw[(m, n)] = sol[k + i];
    }
    Some(Direction {
        dx: sol.rows(0, k).into_owned(),
        dw,
    })
}

/// `d = −F(w; V)`, unpacked into `(d_x, d_W)`.
pub fn fallback_direction<P: Problem + ?Sized>(
    problem: &P,
    point: &PrimalDualPoint,
    z: &DMatrix<f64>,
    v: &ActiveSet,
) -> Direction {
    let f = residual_with(problem, point, z, v);
    Direction::from_block(v, &(-f), point.x.len())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchOutcome {
    pub t: u32,
    pub alpha: f64,
    /// No `t ≤ t_max` met the bound; `alpha = π^{t_max}`.
    pub stalled: bool,
}

/// Smallest `t ≤ t_max` with `‖G(x + πᵗ d_x)‖₀⁺ ≤ (γ + 1)s`.
///
/// Entries of `G` on `targets` within `zero_tol` of zero are counted as
/// zero; pass `0` for the exact count.
pub fn line_search<P: Problem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    dx: &DVector<f64>,
    s: usize,
    gamma: f64,
    pi: f64,
    t_max: u32,
    zero_tol: f64,
    targets: &ActiveSet,
) -> LineSearchOutcome {
    let mask = targets.mask();
    let bound = (gamma + 1.0) * s as f64 + LINE_SEARCH_SLACK;
    let mut alpha = 1.0;
    for t in 0..=t_max {
        let trial = x + dx * alpha;
        let mut g = problem.constraints(&trial);
        for (i, v) in g.iter_mut().enumerate() {
            if mask[i] && v.abs() <= zero_tol {
                *v = 0.0;
            }
        }
        let count = step_norm(&g);
        if count as f64 <= bound {
            return LineSearchOutcome {
                t,
                alpha,
                stalled: false,
            };
        }
        alpha *= pi;
    }
    LineSearchOutcome {
        t: t_max,
        alpha: pi.powi(t_max as i32),
        stalled: true,
    }
}

struct IterateState {
    z: DMatrix<f64>,
    v: ActiveSet,
    residual: f64,
}

fn evaluate<P: Problem + ?Sized>(
    problem: &P,
    point: &PrimalDualPoint,
    cfg: &SolverConfig,
) -> Result<IterateState> {
    let z = problem.constraints(&point.x);
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("G(x) at the current iterate".into()));
    }
    let lambda = &z + &point.w * cfg.tau;
    let t = select_t(&lambda, cfg.s);
    let v = active_set_of(&lambda, &t);
    let residual = residual_with(problem, point, &z, &v).norm();
    if !residual.is_finite() {
        return Err(Error::NonFinite("stationarity residual".into()));
    }
    Ok(IterateState { z, v, residual })
}

/// Runs the smoothing Newton iteration from `w0`.
pub fn solve<P: Problem + ?Sized>(
    problem: &P,
    cfg: &SolverConfig,
    w0: PrimalDualPoint,
) -> Result<SolveResult> {
    cfg.validate()?;
    let dims = problem.dims();
    w0.check_dims(dims)?;
    let tol = cfg.tolerance(dims);

    let mut point = w0;
    let mut state = evaluate(problem, &point, cfg)?;
    let mut mu = cfg.mu_bar.min(cfg.rho * state.residual);
    let mut trace = Vec::new();
    let mut consecutive_stalls = 0;
    let mut iter = 0;

    let status = loop {
        let record = |step, direction, mu| IterationRecord {
            iter,
            residual: state.residual,
            objective: problem.objective(&point.x),
            violations: step_norm(&state.z),
            step,
            mu,
            direction,
        };
        if state.residual < tol {
            trace.push(record(None, None, mu));
            break SolveStatus::Converged;
        }
        if iter >= cfg.max_it {
            trace.push(record(None, None, mu));
            break SolveStatus::MaxIterations;
        }
        if consecutive_stalls >= 2 {
            trace.push(record(None, None, mu));
            break SolveStatus::LineSearchStalled;
        }

        let (dir, kind) =
            match newton_direction(problem, &point, &state.z, &state.v, mu, cfg.pivot_tol) {
                Some(d) => (d, DirectionKind::Newton),
                None => (
                    fallback_direction(problem, &point, &state.z, &state.v),
                    DirectionKind::Fallback,
                ),
            };
        let ls = line_search(
            problem,
            &point.x,
            &dir.dx,
            cfg.s,
            cfg.gamma,
            cfg.pi,
            cfg.t_max,
            cfg.ls_zero_rel * state.residual,
            &state.v,
        );
        consecutive_stalls = if ls.stalled {
            consecutive_stalls + 1
        } else {
            0
        };
        trace.push(record(Some(ls.alpha), Some(kind), mu));

        point.x.axpy(ls.alpha, &dir.dx, 1.0);
        point.w += dir.dw * ls.alpha;
        state = evaluate(problem, &point, cfg)?;
        mu = (cfg.nu * mu).min(cfg.rho * state.residual);
        iter += 1;
    };

    let final_report = check_tau_stationary(problem, &point, cfg.tau, cfg.s, 10.0 * tol);
    Ok(SolveResult {
        point,
        status,
        trace,
        final_report,
        tol,
    })
}

/// Ratios `r_{ℓ+1} / r_ℓ²` for consecutive positive residuals, keyed by `ℓ`.
pub fn rate_ratios(residuals: &[f64]) -> Vec<(usize, f64)> {
    residuals
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] > 0.0 && w[1] > 0.0)
        .map(|(i, w)| (i, w[1] / (w[0] * w[0])))
        .collect()
}

/// [`rate_ratios`] over the residual column of a trace.
pub fn rate_diagnostic(trace: &[IterationRecord]) -> Vec<(usize, f64)> {
    let residuals: Vec<f64> = trace.iter().map(|r| r.residual).collect();
    rate_ratios(&residuals)
        .into_iter()
        .map(|(i, ratio)| (trace[i].iter, ratio))
        .collect()
}

fn fmt_opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Writes the trace as CSV with header [`TRACE_HEADER`].
pub fn write_trace_csv<W: Write>(trace: &[IterationRecord], mut out: W) -> Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in trace {
        writeln!(
            out,
            "{},{:?},{:?},{},{},{:?},{}",
            r.iter,
            r.residual,
            r.objective,
            r.violations,
            r.step.map_or_else(String::new, |a| format!("{a:?}")),
            r.mu,
            fmt_opt(r.direction),
        )?;
    }
    Ok(())
}
