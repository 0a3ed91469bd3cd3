#![allow(dead_code)]

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use snscp::problem::{Dims, Problem};

/// `G(x) = reshape(x)` (column-major) and `f(x) = ½‖x − c‖²`, so `Z` can be
/// chosen freely and `∇G_mn` is a unit vector.
pub struct IdentityProblem {
    pub m: usize,
    pub n: usize,
    pub c: DVector<f64>,
}

impl Problem for IdentityProblem {
    fn dims(&self) -> Dims {
        Dims::new(self.m * self.n, self.m, self.n).unwrap()
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x - &self.c).norm_squared()
    }

    fn objective_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x - &self.c
    }

    fn objective_hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(x.len(), x.len())
    }

    fn constraints(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_column_slice(self.m, self.n, x.as_slice())
    }

    fn constraint_gradient(&self, x: &DVector<f64>, m: usize, n: usize) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        g[n * self.m + m] = 1.0;
        g
    }

    fn constraint_hessian(&self, x: &DVector<f64>, _m: usize, _n: usize) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }
}

/// `G ≡ −1` and `f(x) = ½‖x − c‖²`: every point is feasible.
pub struct AlwaysFeasible {
    pub c: DVector<f64>,
    pub m: usize,
    pub n: usize,
}

impl Problem for AlwaysFeasible {
    fn dims(&self) -> Dims {
        Dims::new(self.c.len(), self.m, self.n).unwrap()
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * (x - &self.c).norm_squared()
    }

    fn objective_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x - &self.c
    }

    fn objective_hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(x.len(), x.len())
    }

    fn constraints(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_element(self.m, self.n, -1.0)
    }

    fn constraint_gradient(&self, x: &DVector<f64>, _m: usize, _n: usize) -> DVector<f64> {
        DVector::zeros(x.len())
    }

    fn constraint_hessian(&self, x: &DVector<f64>, _m: usize, _n: usize) -> DMatrix<f64> {
        DMatrix::zeros(x.len(), x.len())
    }
}

/// Brute-force projection onto `{Z : ‖Z‖₀⁺ ≤ s}`: try every set of at most
/// `s` columns left untouched, clamp the rest, keep the nearest results.
///
/// Returns the minimal distance and the distinct minimisers.
pub fn brute_force_projection(z: &DMatrix<f64>, s: usize) -> (f64, Vec<DMatrix<f64>>) {
    let n = z.ncols();
    let mut best = f64::INFINITY;
    let mut argmin: Vec<DMatrix<f64>> = Vec::new();
    for size in 0..=s.min(n) {
        for kept in (0..n).combinations(size) {
            let mut p = z.map(|v| v.min(0.0));
            for &j in &kept {
                p.set_column(j, &z.column(j));
            }
            let d = (z - &p).norm();
            if d < best - 1e-12 {
                best = d;
                argmin.clear();
            }
            if (d - best).abs() <= 1e-12 && !argmin.contains(&p) {
                argmin.push(p);
            }
        }
    }
    (best, argmin)
}

/// Same elements, any order.
pub fn same_set(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> bool {
    a.len() == b.len() && a.iter().all(|x| b.contains(x))
}

/// Central-difference Jacobian of `f` at `v`.
pub fn fd_jacobian(
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    v: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let rows = f(v).len();
    let mut jac = DMatrix::zeros(rows, v.len());
    for j in 0..v.len() {
        let mut plus = v.clone();
        let mut minus = v.clone();
        plus[j] += h;
        minus[j] -= h;
        jac.set_column(j, &((f(&plus) - f(&minus)) / (2.0 * h)));
    }
    jac
}
