//! Set calculus for `S = {Z ∈ R^{M×N} : ‖Z‖₀⁺ ≤ s}`.
//!
//! Columns are split by the sign of their maximum entry into `Γ₊`, `Γ₀` and
//! `Γ₋`. The projection onto `S` keeps the `r = min(s, |Γ₊|)` positive
//! columns with the largest positive-part norm and clamps every other
//! non-negative-max column to its negative part. When the `r`-th largest
//! norm is tied the projection is set-valued; [`candidate_sets`] enumerates
//! every choice while [`representative_set`] picks one deterministically.
//!
//! Zero is compared exactly. Callers that need a tolerance should round
//! their input first (see [`snap_to_zero`]).

use std::cmp::Ordering;
use std::ops::Deref;

use itertools::Itertools;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default limit on the number of subsets [`tangent_cone_member`] may visit.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1 << 20;

/// A finite, non-empty `M × N` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix(DMatrix<f64>);

impl SampleMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() == 0 || entries.ncols() == 0 {
            return Err(Error::InvalidDimensions(format!(
                "sample matrix must be at least 1x1, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if let Some(pos) = entries.iter().position(|v| !v.is_finite()) {
            let (m, n) = (pos % entries.nrows(), pos / entries.nrows());
            return Err(Error::NonFinite(format!(
                "entry ({m}, {n}) of sample matrix"
            )));
        }
        Ok(Self(entries))
    }

    /// Builds a matrix from row slices.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidDimensions("ragged rows".into()));
        }
        Self::new(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

impl Deref for SampleMatrix {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Sign partition of the columns of a matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnPartition {
    /// Columns with a strictly positive maximum.
    pub gamma_plus: Vec<usize>,
    /// Columns whose maximum is exactly zero.
    pub gamma_zero: Vec<usize>,
    /// Columns with a strictly negative maximum.
    pub gamma_minus: Vec<usize>,
    pub col_max: Vec<f64>,
    /// `‖(Z_:n)⁺‖` for every column.
    pub pos_norms: Vec<f64>,
}

impl ColumnPartition {
    /// Positive-part norms of `Γ₊` sorted by (norm desc, index asc).
    fn ranked_positive(&self) -> Vec<usize> {
        let mut order = self.gamma_plus.clone();
        order.sort_by(|&a, &b| rank_cmp(&self.pos_norms, a, b));
        order
    }
}

fn rank_cmp(norms: &[f64], a: usize, b: usize) -> Ordering {
    norms[b]
        .partial_cmp(&norms[a])
        .unwrap_or(Ordering::Equal)
        .then(a.cmp(&b))
}

pub fn partition(z: &DMatrix<f64>) -> ColumnPartition {
    let n = z.ncols();
    let mut part = ColumnPartition {
        gamma_plus: Vec::new(),
        gamma_zero: Vec::new(),
        gamma_minus: Vec::new(),
        col_max: Vec::with_capacity(n),
        pos_norms: Vec::with_capacity(n),
    };
    for (j, col) in z.column_iter().enumerate() {
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pos = col.iter().map(|&v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
        part.col_max.push(max);
        part.pos_norms.push(pos);
        if max > 0.0 {
            part.gamma_plus.push(j);
        } else if max == 0.0 {
            part.gamma_zero.push(j);
        } else {
            part.gamma_minus.push(j);
        }
    }
    part
}

/// `‖Z‖₀⁺`: the number of columns whose maximum entry is strictly positive.
pub fn step_norm(z: &DMatrix<f64>) -> usize {
    z.column_iter()
        .filter(|col| col.iter().any(|&v| v > 0.0))
        .count()
}

/// `Z_k↓`, the `k`-th largest positive-part column norm.
///
/// Returns `0` when fewer than `k` columns are positive and `+∞` for `k = 0`.
pub fn kth_largest_pos_norm(z: &DMatrix<f64>, k: usize) -> f64 {
    if k == 0 {
        return f64::INFINITY;
    }
    let part = partition(z);
    let order = part.ranked_positive();
    order.get(k - 1).map_or(0.0, |&j| part.pos_norms[j])
}

/// `V_Γ`: the zero entries of `z` lying in the columns `cols`, column-major.
pub fn zero_pairs(z: &DMatrix<f64>, cols: &[usize]) -> Vec<(usize, usize)> {
    let mut cols = cols.to_vec();
    cols.sort_unstable();
    cols.iter()
        .flat_map(|&n| {
            (0..z.nrows())
                .filter(move |&m| z[(m, n)] == 0.0)
                .map(move |m| (m, n))
        })
        .collect()
}

/// Replaces every entry with magnitude at most `tol` by an exact zero.
pub fn snap_to_zero(z: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    z.map(|v| if v.abs() <= tol { 0.0 } else { v })
}

/// The family of index sets that define the projection onto `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSetFamily {
    /// Each member `T` lists, in increasing order, the columns that the
    /// projection clamps to their negative part.
    pub sets: Vec<Vec<usize>>,
    /// `min(s, |Γ₊|)`.
    pub r: usize,
}

pub fn candidate_sets(z: &DMatrix<f64>, s: usize) -> CandidateSetFamily {
    let part = partition(z);
    let r = s.min(part.gamma_plus.len());
    let order = part.ranked_positive();

    let kept_choices: Vec<Vec<usize>> = if r == 0 {
        vec![Vec::new()]
    } else {
        let threshold = part.pos_norms[order[r - 1]];
        let forced: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&j| part.pos_norms[j] > threshold)
            .collect();
        let tied: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&j| part.pos_norms[j] == threshold)
            .collect();
        tied.into_iter()
            .combinations(r - forced.len())
            .map(|extra| forced.iter().copied().chain(extra).collect())
            .collect()
    };

    let sets = kept_choices
        .into_iter()
        .map(|kept| clamped_columns(&part, &kept))
        .collect();
    CandidateSetFamily { sets, r }
}

/// `(Γ₊ \ kept) ∪ Γ₀`, sorted.
fn clamped_columns(part: &ColumnPartition, kept: &[usize]) -> Vec<usize> {
    let mut t: Vec<usize> = part
        .gamma_plus
        .iter()
        .copied()
        .filter(|j| !kept.contains(j))
        .chain(part.gamma_zero.iter().copied())
        .collect();
    t.sort_unstable();
    t
}

/// Deterministic member of [`candidate_sets`]: keeps the first `r` positive
/// columns ordered by (positive-part norm desc, index asc).
pub fn representative_set(z: &DMatrix<f64>, s: usize) -> Vec<usize> {
    let part = partition(z);
    let r = s.min(part.gamma_plus.len());
    let order = part.ranked_positive();
    clamped_columns(&part, &order[..r])
}

/// Membership test `t ∈ T(z; s)` without enumerating the family.
pub fn is_candidate_set(z: &DMatrix<f64>, s: usize, t: &[usize]) -> bool {
    let part = partition(z);
    let n = z.ncols();
    let mut in_t = vec![false; n];
    for &j in t {
        if j >= n || in_t[j] {
            return false;
        }
        in_t[j] = true;
    }
    if part.gamma_zero.iter().any(|&j| !in_t[j]) || part.gamma_minus.iter().any(|&j| in_t[j]) {
        return false;
    }
    let r = s.min(part.gamma_plus.len());
    let kept: Vec<usize> = part
        .gamma_plus
        .iter()
        .copied()
        .filter(|&j| !in_t[j])
        .collect();
    if kept.len() != r {
        return false;
    }
    if r == 0 {
        return true;
    }
    let order = part.ranked_positive();
    let threshold = part.pos_norms[order[r - 1]];
    kept.iter().all(|&j| part.pos_norms[j] >= threshold)
        && part
            .gamma_plus
            .iter()
            .filter(|&&j| in_t[j])
            .all(|&j| part.pos_norms[j] <= threshold)
}

/// `[(Z_:T)⁻  Z_:T̄]`: clamps the columns in `t` to their negative part.
pub fn clamp_columns(z: &DMatrix<f64>, t: &[usize]) -> DMatrix<f64> {
    let mut out = z.clone();
    for &j in t {
        out.column_mut(j).apply(|v| *v = v.min(0.0));
    }
    out
}

/// All Frobenius-nearest points of `S` to `z`.
pub fn project_step(z: &DMatrix<f64>, s: usize) -> Vec<DMatrix<f64>> {
    candidate_sets(z, s)
        .sets
        .iter()
        .map(|t| clamp_columns(z, t))
        .collect()
}

fn ensure_same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: a.shape(),
            found: b.shape(),
        });
    }
    Ok(())
}

/// Tests `Z ∈ Π_S(Z + τW)` through its closed-form characterisation.
///
/// With `‖Z‖₀⁺ < s` this requires `W = 0`. With `‖Z‖₀⁺ = s` it requires
/// `W` to vanish off `Γ₀`, `0 ≥ Z_:Γ₀ ⊥ W_:Γ₀ ≥ 0`, and
/// `τ‖W_:n‖ ≤ Z_s↓` on `Γ₀`. Every comparison allows slack `tol`.
pub fn fixed_point_check(
    z: &DMatrix<f64>,
    w: &DMatrix<f64>,
    tau: f64,
    s: usize,
    tol: f64,
) -> Result<bool> {
    ensure_same_shape(z, w)?;
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tau must be positive, got {tau}"
        )));
    }
    let part = partition(z);
    let count = part.gamma_plus.len();
    if count > s {
        return Ok(false);
    }
    if count < s {
        return Ok(w.norm() <= tol);
    }

    let mut in_zero = vec![false; z.ncols()];
    for &j in &part.gamma_zero {
        in_zero[j] = true;
    }
    let off_norm = (0..z.ncols())
        .filter(|&j| !in_zero[j])
        .map(|j| w.column(j).norm_squared())
        .sum::<f64>()
        .sqrt();
    if off_norm > tol {
        return Ok(false);
    }
    let z_s = kth_largest_pos_norm(z, s);
    for &j in &part.gamma_zero {
        for m in 0..z.nrows() {
            let (zv, wv) = (z[(m, j)], w[(m, j)]);
            if wv < -tol || (zv * wv).abs() > tol {
                return Ok(false);
            }
        }
        if tau * w.column(j).norm() > z_s + tol {
            return Ok(false);
        }
    }
    Ok(true)
}

fn ensure_in_step_set(z: &DMatrix<f64>, s: usize) -> Result<ColumnPartition> {
    let part = partition(z);
    if part.gamma_plus.len() > s {
        return Err(Error::NotInStepSet {
            violations: part.gamma_plus.len(),
            s,
        });
    }
    Ok(part)
}

/// Fréchet normal cone of `S` at `z`.
///
/// Below the budget the cone is `{0}`; at the budget it is the set of
/// matrices that are non-negative on `V_Γ₀` and zero elsewhere.
pub fn normal_cone_member(z: &DMatrix<f64>, w: &DMatrix<f64>, s: usize, tol: f64) -> Result<bool> {
    ensure_same_shape(z, w)?;
    let part = ensure_in_step_set(z, s)?;
    if part.gamma_plus.len() < s {
        return Ok(w.norm() <= tol);
    }
    let mut on_v = DMatrix::from_element(z.nrows(), z.ncols(), false);
    for (m, n) in zero_pairs(z, &part.gamma_zero) {
        on_v[(m, n)] = true;
    }
    Ok(w.iter()
        .zip(on_v.iter())
        .all(|(&v, &active)| if active { v >= -tol } else { v.abs() <= tol }))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Bouligand tangent cone of `S` at `z`.
///
/// `d` is tangent when some `Γ ⊆ Γ₀` with `|Γ| ≤ s − |Γ₊|` leaves
/// `d ≤ tol` on every zero entry of the remaining `Γ₀` columns. The subsets
/// are enumerated explicitly; `cap` bounds how many may be visited.
pub fn tangent_cone_member(
    z: &DMatrix<f64>,
    d: &DMatrix<f64>,
    s: usize,
    tol: f64,
    cap: u128,
) -> Result<bool> {
    ensure_same_shape(z, d)?;
    let part = ensure_in_step_set(z, s)?;
    let zeros = &part.gamma_zero;
    let budget = (s - part.gamma_plus.len()).min(zeros.len());
    let needed: u128 = (0..=budget).map(|k| binomial(zeros.len(), k)).sum();
    if needed > cap {
        return Err(Error::EnumerationCap { needed, cap });
    }

    // Columns of Γ₀ where d points out of the set on some zero entry.
    let blocked: Vec<bool> = zeros
        .iter()
        .map(|&n| (0..z.nrows()).any(|m| z[(m, n)] == 0.0 && d[(m, n)] > tol))
        .collect();
    for size in 0..=budget {
        for released in (0..zeros.len()).combinations(size) {
            let ok = blocked
                .iter()
                .enumerate()
                .all(|(i, &b)| !b || released.contains(&i));
            if ok {
                return Ok(true);
            }
        }
    }
    Ok(false)
}
