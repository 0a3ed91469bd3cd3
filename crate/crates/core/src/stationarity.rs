//! Stationarity residual, its smoothed Jacobian and the optimality checkers.
//!
//! A primal-dual point is `w = (x, W)` with `W ∈ R^{M×N}`. For an active set
//! `V` of index pairs the residual is
//!
//! ```text
//! F(w; V) = [ ∇f(x) + Σ_{(m,n)∈V} W_mn ∇G_mn(x) ;  vec(G(x)_V) ;  vec(W_V̄) ]
//! ```
//!
//! with `V` and its complement `V̄` listed column-major. The Jacobian
//! returned by [`newton_matrix`] uses the same block order for its columns:
//! `x`, then `W_V`, then `W_V̄`.
//!
//! The checkers classify entries of `G(x)` and `W` after snapping values
//! within `tol` of zero to exact zero, so that numerically converged
//! iterates are recognised. Residuals are always evaluated on the unsnapped
//! point.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{
    is_candidate_set, kth_largest_pos_norm, partition, snap_to_zero, zero_pairs,
};
use crate::nnls::{self, nnls};
use crate::problem::{Dims, Problem};

/// Relative pivot threshold used by [`tau_star`].
pub const TAU_STAR_PIVOT_TOL: f64 = 1e-10;

/// `w = (x, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalDualPoint {
    pub x: DVector<f64>,
    pub w: DMatrix<f64>,
}

impl PrimalDualPoint {
    pub fn new(x: DVector<f64>, w: DMatrix<f64>) -> Result<Self> {
        if x.iter().chain(w.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("primal-dual point".into()));
        }
        Ok(Self { x, w })
    }

    /// The origin `w = 0`.
    pub fn zeros(dims: Dims) -> Self {
        Self {
            x: DVector::zeros(dims.k),
            w: DMatrix::zeros(dims.m, dims.n),
        }
    }

    /// Primal point with zero multipliers.
    pub fn from_x(x: DVector<f64>, dims: Dims) -> Self {
        Self {
            x,
            w: DMatrix::zeros(dims.m, dims.n),
        }
    }

    pub fn check_dims(&self, dims: Dims) -> Result<()> {
        if self.x.len() != dims.k {
            return Err(Error::ShapeMismatch {
                expected: (dims.k, 1),
                found: (self.x.len(), 1),
            });
        }
        if self.w.shape() != (dims.m, dims.n) {
            return Err(Error::ShapeMismatch {
                expected: (dims.m, dims.n),
                found: self.w.shape(),
            });
        }
        Ok(())
    }
}

/// A set of `(m, n)` index pairs, kept in column-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActiveSet {
    pairs: Vec<(usize, usize)>,
    rows: usize,
    cols: usize,
}

impl ActiveSet {
    /// Validates, sorts column-major and rejects duplicates.
    pub fn new(mut pairs: Vec<(usize, usize)>, rows: usize, cols: usize) -> Result<Self> {
        if let Some(&(m, n)) = pairs.iter().find(|&&(m, n)| m >= rows || n >= cols) {
            return Err(Error::InvalidDimensions(format!(
                "pair ({m}, {n}) outside a {rows}×{cols} matrix"
            )));
        }
        pairs.sort_unstable_by_key(|&(m, n)| (n, m));
        if pairs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(
                "duplicate pair in active set".into(),
            ));
        }
        Ok(Self { pairs, rows, cols })
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            pairs: Vec::new(),
            rows,
            cols,
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Membership mask indexed like `DMatrix` storage (`n·M + m`).
    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.rows * self.cols];
        for &(m, n) in &self.pairs {
            mask[n * self.rows + m] = true;
        }
        mask
    }

    /// The pairs not in the set, column-major.
    pub fn complement(&self) -> Vec<(usize, usize)> {
        let mask = self.mask();
        (0..self.cols)
            .flat_map(|n| (0..self.rows).map(move |m| (m, n)))
            .filter(|&(m, n)| !mask[n * self.rows + m])
            .collect()
    }

    /// Linear storage index of every pair: `V` first, then `V̄`.
    pub fn block_order(&self) -> Vec<usize> {
        self.pairs
            .iter()
            .chain(self.complement().iter())
            .map(|&(m, n)| n * self.rows + m)
            .collect()
    }
}

impl fmt::Display for ActiveSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (m, n)) in self.pairs.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "({m}, {n})")?;
        }
        write!(f, "}}")
    }
}

/// `U_T = {(m, n) : Λ_mn ≥ 0, n ∈ T}` for a given `Λ`.
pub fn active_set_of(lambda: &DMatrix<f64>, t: &[usize]) -> ActiveSet {
    let mut cols = t.to_vec();
    cols.sort_unstable();
    cols.dedup();
    let pairs = cols
        .iter()
        .flat_map(|&n| {
            (0..lambda.nrows())
                .filter(move |&m| lambda[(m, n)] >= 0.0)
                .map(move |m| (m, n))
        })
        .collect();
    ActiveSet {
        pairs,
        rows: lambda.nrows(),
        cols: lambda.ncols(),
    }
}

/// `U_T` with `Λ = G(x) + τW`.
pub fn active_set<P: Problem + ?Sized>(
    problem: &P,
    point: &PrimalDualPoint,
    tau: f64,
    t: &[usize],
) -> ActiveSet {
    let lambda = problem.constraints(&point.x) + &point.w * tau;
    active_set_of(&lambda, t)
}

/// First block of `F`: `∇f(x) + Σ_V W_mn ∇G_mn(x)`.
pub fn lagrangian_gradient<P: Problem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    w: &DMatrix<f64>,
    v: &ActiveSet,
) -> DVector<f64> {
    let mut grad = problem.objective_gradient(x);
    for &(m, n) in v.pairs() {
        let weight = w[(m, n)];
        if weight != 0.0 {
            grad.axpy(weight, &problem.constraint_gradient(x, m, n), 1.0);
        }
    }
    grad
}

/// `F(w; V)` given a precomputed `Z = G(x)`.
pub fn residual_with<P: Problem + ?Sized>(
    problem: &P,
    point: &PrimalDualPoint,
    z: &DMatrix<f64>,
    v: &ActiveSet,
) -> DVector<f64> {
    let k = point.x.len();
    let mut out = DVector::zeros(k + z.len());
    out.rows_mut(0, k)
        .copy_from(&lagrangian_gradient(problem, &point.x, &point.w, v));
    let mut row = k;
    for &(m, n) in v.pairs() {
        out[row] = z[(m, n)];
        row += 1;
    }
    for (m, n) in v.complement() {
        out[row] = point.w[(m, n)];
        row += 1;
    }
    out
}

/// `F(w; V)`, of length `K + MN`.
pub fn residual_f<P: Problem + ?Sized>(
    problem: &P,
    point: &PrimalDualPoint,
    v: &ActiveSet,
) -> DVector<f64> {
    residual_with(problem, point, &problem.constraints(&point.x), v)
}

/// `Θ(w; V) = ∇²f(x) + Σ_V W_mn ∇²G_mn(x)`.
pub fn theta<P: Problem + ?Sized>(
    problem: &P,
    point: &PrimalDualPoint,
    v: &ActiveSet,
) -> DMatrix<f64> {
    let weights: Vec<f64> = v.pairs().iter().map(|&(m, n)| point.w[(m, n)]).collect();
    problem.objective_hessian(&point.x)
        + problem.weighted_constraint_hessian(&point.x, v.pairs(), &weights)
}

/// `∇F_μ(w; V)` in block order; at `μ = 0` this is the Jacobian of `F`.
pub fn newton_matrix<P: Problem + ?Sized>(
    problem: &P,
    point: &PrimalDualPoint,
    v: &ActiveSet,
    mu: f64,
) -> DMatrix<f64> {
    let k = point.x.len();
    let nv = v.len();
    let size = k + point.w.len();
    let mut a = DMatrix::zeros(size, size);
    a.view_mut((0, 0), (k, k))
        .copy_from(&theta(problem, point, v));
    let jac = problem.constraint_jacobian(&point.x, v.pairs());
    a.view_mut((0, k), (k, nv)).copy_from(&jac);
    a.view_mut((k, 0), (nv, k)).copy_from(&jac.transpose());
    for i in 0..nv {
        a[(k + i, k + i)] = -mu;
    }
    for i in k + nv..size {
        a[(i, i)] = 1.0;
    }
    a
}

/// Smallest eigenvalue of `Θ(w; V)`; positive means the second-order
/// sufficient condition holds on the whole space.
pub fn theta_min_eigenvalue<P: Problem + ?Sized>(
    problem: &P,
    point: &PrimalDualPoint,
    v: &ActiveSet,
) -> f64 {
    let th = theta(problem, point, v);
    let sym = (&th + th.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StationarityKind {
    Kkt,
    TauStationary,
    Bkkt,
}

impl fmt::Display for StationarityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Kkt => "KKT",
            Self::TauStationary => "tau-stationary",
            Self::Bkkt => "BKKT",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationarityReport {
    pub kind: StationarityKind,
    pub satisfied: bool,
    /// Norm of the stationarity residual; `+∞` at an infeasible point.
    pub residual: f64,
    pub witness_w: Option<DMatrix<f64>>,
    pub tau_star: Option<f64>,
    pub active_set: ActiveSet,
    /// Why the check failed, when it did.
    pub reason: Option<String>,
}

/// Checks the τ-stationary equations at `point`.
///
/// With `Z = G(x)`, `Λ = Z + τW` and `V_* = V_{Γ₀(Z)}`, the point is
/// τ-stationary when `Γ₀(Z) ∈ T(Λ; s)`, `U_{Γ₀}(Λ) = V_*` and
/// `‖F(w; V_*)‖ ≤ tol`. `residual` reports `‖F(w; V_*)‖` even when one of
/// the set conditions fails; `reason` then names the failing condition.
pub fn check_tau_stationary<P: Problem + ?Sized>(
    problem: &P,
    point: &PrimalDualPoint,
    tau: f64,
    s: usize,
    tol: f64,
) -> StationarityReport {
    let z_raw = problem.constraints(&point.x);
    let z = snap_to_zero(&z_raw, tol);
    let w = snap_to_zero(&point.w, tol);
    let part = partition(&z);
    let v_star = ActiveSet {
        pairs: zero_pairs(&z, &part.gamma_zero),
        rows: z.nrows(),
        cols: z.ncols(),
    };
    let residual = residual_with(problem, point, &z_raw, &v_star).norm();
    let lambda = &z + &w * tau;

    let reason = if part.gamma_plus.len() > s {
        Some(format!(
            "‖G(x)‖₀⁺ = {} exceeds s = {s}",
            part.gamma_plus.len()
        ))
    } else if !is_candidate_set(&lambda, s, &part.gamma_zero) {
        Some("Γ₀(G(x)) is not a candidate set of G(x) + τW".to_string())
    } else if active_set_of(&lambda, &part.gamma_zero) != v_star {
        Some("active set of G(x) + τW on Γ₀ differs from the zero set of G(x)".to_string())
    } else if !(residual <= tol) {
        Some(format!("residual {residual:e} exceeds tolerance {tol:e}"))
    } else {
        None
    };

    StationarityReport {
        kind: StationarityKind::TauStationary,
        satisfied: reason.is_none(),
        residual,
        witness_w: Some(point.w.clone()),
        tau_star: tau_star(problem, &point.x, s, tol).ok(),
        active_set: v_star,
        reason,
    }
}

fn nnls_report<P: Problem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    v: ActiveSet,
    tol: f64,
    kind: StationarityKind,
) -> Result<StationarityReport> {
    let grad = problem.objective_gradient(x);
    let dims = problem.dims();
    let jac = problem.constraint_jacobian(x, v.pairs());
    let cap = 100 * (dims.k + v.len());
    let sol = nnls(&jac, &(-&grad), nnls::DEFAULT_TOL, cap)?;
    let mut witness = DMatrix::zeros(dims.m, dims.n);
    for (&(m, n), &val) in v.pairs().iter().zip(sol.x.iter()) {
        witness[(m, n)] = val;
    }
    let satisfied = sol.residual_norm <= tol;
    Ok(StationarityReport {
        kind,
        satisfied,
        residual: sol.residual_norm,
        witness_w: Some(witness),
        tau_star: None,
        active_set: v,
        reason: (!satisfied)
            .then(|| format!("residual {:e} exceeds tolerance {tol:e}", sol.residual_norm)),
    })
}

/// KKT check: is `−∇f(x)` in `∇G(x)^* N̂_S(G(x))`?
///
/// Below the budget the normal cone is `{0}` and the test reduces to
/// `‖∇f(x)‖ ≤ tol`. At the budget the best multiplier on `V_{Γ₀}` is found
/// by nonnegative least squares.
pub fn check_kkt<P: Problem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    s: usize,
    tol: f64,
) -> Result<StationarityReport> {
    let dims = problem.dims();
    let z = snap_to_zero(&problem.constraints(x), tol);
    let part = partition(&z);
    let count = part.gamma_plus.len();
    if count > s {
        return Ok(StationarityReport {
            kind: StationarityKind::Kkt,
            satisfied: false,
            residual: f64::INFINITY,
            witness_w: None,
            tau_star: None,
            active_set: ActiveSet::empty(dims.m, dims.n),
            reason: Some(format!("infeasible: ‖G(x)‖₀⁺ = {count} exceeds s = {s}")),
        });
    }
    let v = if count < s {
        ActiveSet::empty(dims.m, dims.n)
    } else {
        ActiveSet {
            pairs: zero_pairs(&z, &part.gamma_zero),
            rows: dims.m,
            cols: dims.n,
        }
    };
    nnls_report(problem, x, v, tol, StationarityKind::Kkt)
}

/// Binary-KKT check for the big-M reformulation with indicator `y`.
///
/// `y_n = true` marks a column whose constraints are enforced. Requires
/// `Σ y ≥ N − s` and `G_:n(x) ≤ 0` (within `tol`) for every enforced column.
pub fn check_bkkt<P: Problem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    y: &[bool],
    s: usize,
    tol: f64,
) -> Result<StationarityReport> {
    let dims = problem.dims();
    if y.len() != dims.n {
        return Err(Error::ShapeMismatch {
            expected: (dims.n, 1),
            found: (y.len(), 1),
        });
    }
    let enforced = y.iter().filter(|&&b| b).count();
    if enforced + s < dims.n {
        return Err(Error::Infeasible(format!(
            "only {enforced} of {} columns enforced, need at least {}",
            dims.n,
            dims.n.saturating_sub(s)
        )));
    }
    let z = snap_to_zero(&problem.constraints(x), tol);
    let cols: Vec<usize> = (0..dims.n).filter(|&n| y[n]).collect();
    if let Some(&n) = cols.iter().find(|&&n| z.column(n).iter().any(|&v| v > 0.0)) {
        return Err(Error::Infeasible(format!(
            "column {n} is enforced but has a positive entry"
        )));
    }
    let v = ActiveSet {
        pairs: zero_pairs(&z, &cols),
        rows: dims.m,
        cols: dims.n,
    };
    nnls_report(problem, x, v, tol, StationarityKind::Bkkt)
}

/// Upper bound `τ*` on the admissible `τ` at a KKT point.
///
/// Returns `+∞` below the budget or when the multiplier vanishes on `Γ₀`.
/// At the budget the multiplier is recovered from
/// `Σ_{V_*} W_mn ∇G_mn(x) = −∇f(x)` by a column-pivoted QR solve, and
/// `τ* = Z_s↓ / max_{n∈Γ₀} ‖W_:n‖`. Entries of `G(x)` within `zero_tol` of
/// zero count as zero.
pub fn tau_star<P: Problem + ?Sized>(
    problem: &P,
    x: &DVector<f64>,
    s: usize,
    zero_tol: f64,
) -> Result<f64> {
    let z = snap_to_zero(&problem.constraints(x), zero_tol);
    let part = partition(&z);
    let count = part.gamma_plus.len();
    if count > s {
        return Err(Error::Infeasible(format!(
            "‖G(x)‖₀⁺ = {count} exceeds s = {s}"
        )));
    }
    if count < s {
        return Ok(f64::INFINITY);
    }
    let pairs = zero_pairs(&z, &part.gamma_zero);
    if pairs.is_empty() {
        return Ok(f64::INFINITY);
    }
    let jac = problem.constraint_jacobian(x, &pairs);
    let rhs = -problem.objective_gradient(x);
    let coef = full_rank_solve(&jac, &rhs, TAU_STAR_PIVOT_TOL)?;

    let mut col_norm_sq = vec![0.0; z.ncols()];
    for (&(_, n), &c) in pairs.iter().zip(coef.iter()) {
        col_norm_sq[n] += c * c;
    }
    let r_star = part
        .gamma_zero
        .iter()
        .map(|&n| col_norm_sq[n].sqrt())
        .fold(0.0, f64::max);
    if r_star == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(kth_largest_pos_norm(&z, s) / r_star)
}

/// Least-squares solve of `A c = b` for full-column-rank `A`.
fn full_rank_solve(a: &DMatrix<f64>, b: &DVector<f64>, pivot_tol: f64) -> Result<DVector<f64>> {
    let (rows, cols) = a.shape();
    if cols > rows {
        return Err(Error::RankDeficient {
            pivot: 0.0,
            threshold: pivot_tol,
        });
    }
    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    let largest = r[(0, 0)].abs();
    let threshold = pivot_tol * largest.max(f64::MIN_POSITIVE);
    for i in 0..cols {
        if r[(i, i)].abs() <= threshold {
            return Err(Error::RankDeficient {
                pivot: r[(i, i)].abs(),
                threshold,
            });
        }
    }
    let qtb = qr.q().transpose() * b;
    let mut c = r
        .view((0, 0), (cols, cols))
        .solve_upper_triangular(&qtb.rows(0, cols).into_owned())
        .expect("diagonal checked nonzero");
    qr.p().inv_permute_rows(&mut c);
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::make_counterexample;
    use approx::assert_abs_diff_eq;

    #[test]
    fn full_rank_solve_recovers_coefficients() {
        let a = DMatrix::from_row_slice(
            4,
            3,
            &[0.1, 3.0, 1.0, 2.0, -1.0, 0.0, 0.5, 0.5, 4.0, 1.0, 1.0, 1.0],
        );
        let c = DVector::from_vec(vec![1.5, -2.0, 0.25]);
        let got = full_rank_solve(&a, &(&a * &c), 1e-10).unwrap();
        assert_abs_diff_eq!(got, c, epsilon = 1e-12);
    }

    #[test]
    fn full_rank_solve_flags_dependent_columns() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            full_rank_solve(&a, &b, 1e-10),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn active_set_is_column_major() {
        let v = ActiveSet::new(vec![(1, 0), (0, 1), (0, 0)], 2, 2).unwrap();
        assert_eq!(v.pairs(), &[(0, 0), (1, 0), (0, 1)]);
        assert_eq!(v.complement(), vec![(1, 1)]);
        assert_eq!(v.block_order(), vec![0, 1, 2, 3]);
        assert!(ActiveSet::new(vec![(0, 0), (0, 0)], 2, 2).is_err());
        assert!(ActiveSet::new(vec![(2, 0)], 2, 2).is_err());
    }

    #[test]
    fn counterexample_active_set_and_residual() {
        let p = make_counterexample();
        let point = PrimalDualPoint::from_x(DVector::from_vec(vec![1.0, 1.0]), p.dims());
        let v = active_set(&p, &point, 0.75, &[0, 1]);
        assert_eq!(v.pairs(), &[(0, 0), (0, 1)]);
        let f = residual_f(&p, &point, &v);
        assert_eq!(f.as_slice(), &[-2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn counterexample_kkt_and_bkkt() {
        let p = make_counterexample();
        let x = DVector::from_vec(vec![1.0, 1.0]);
        let kkt = check_kkt(&p, &x, 1, 1e-9).unwrap();
        assert!(!kkt.satisfied);
        assert_abs_diff_eq!(kkt.residual, 2.0, epsilon = 1e-12);
        let bkkt = check_bkkt(&p, &x, &[true, true], 1, 1e-9).unwrap();
        assert!(bkkt.satisfied);
        let w = bkkt.witness_w.unwrap();
        assert_abs_diff_eq!(w[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[(0, 1)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bkkt_rejects_bad_indicator() {
        let p = make_counterexample();
        let x = DVector::from_vec(vec![2.0, 4.0]);
        assert!(matches!(
            check_bkkt(&p, &x, &[true, true], 1, 1e-9),
            Err(Error::Infeasible(_))
        ));
        assert!(matches!(
            check_bkkt(&p, &x, &[false, false], 1, 1e-9),
            Err(Error::Infeasible(_))
        ));
        assert!(check_bkkt(&p, &x, &[true, false], 1, 1e-9).is_ok());
    }

    #[test]
    fn newton_matrix_mu_shifts_middle_diagonal() {
        let p = make_counterexample();
        let point = PrimalDualPoint::new(
            DVector::from_vec(vec![0.3, -0.2]),
            DMatrix::from_row_slice(1, 2, &[0.5, 0.0]),
        )
        .unwrap();
        let v = ActiveSet::new(vec![(0, 0)], 1, 2).unwrap();
        let a0 = newton_matrix(&p, &point, &v, 0.0);
        let a1 = newton_matrix(&p, &point, &v, 0.25);
        let diff = a1 - a0;
        let mut expected = DMatrix::zeros(4, 4);
        expected[(2, 2)] = -0.25;
        assert_eq!(diff, expected);
    }

    #[test]
    fn tau_star_is_infinite_below_budget() {
        let p = make_counterexample();
        let x = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(tau_star(&p, &x, 1, 0.0).unwrap(), f64::INFINITY);
    }
}
