//! Problem abstraction and the bundled instances.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Problem sizes: `K` decision variables, `G(x) ∈ R^{M×N}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub k: usize,
    pub m: usize,
    pub n: usize,
}

impl Dims {
    pub fn new(k: usize, m: usize, n: usize) -> Result<Self> {
        if k == 0 || m == 0 || n == 0 {
            return Err(Error::InvalidDimensions(format!(
                "K, M and N must be positive, got K={k} M={m} N={n}"
            )));
        }
        Ok(Self { k, m, n })
    }

    pub fn entries(&self) -> usize {
        self.m * self.n
    }
}

/// Smooth data of `min f(x) s.t. ‖G(x)‖₀⁺ ≤ s`.
///
/// Indices `(m, n)` are zero-based. Implementations must be pure.
pub trait Problem: Sync {
    fn dims(&self) -> Dims;

    fn objective(&self, x: &DVector<f64>) -> f64;

    fn objective_gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    fn objective_hessian(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// `G(x)` as an `M × N` matrix.
    fn constraints(&self, x: &DVector<f64>) -> DMatrix<f64>;

    fn constraint_gradient(&self, x: &DVector<f64>, m: usize, n: usize) -> DVector<f64>;

    fn constraint_hessian(&self, x: &DVector<f64>, m: usize, n: usize) -> DMatrix<f64>;

    /// `∇_V G(x)`: one column `∇G_mn(x)` per listed pair.
    fn constraint_jacobian(&self, x: &DVector<f64>, pairs: &[(usize, usize)]) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.dims().k, pairs.len());
        for (col, &(m, n)) in pairs.iter().enumerate() {
            jac.set_column(col, &self.constraint_gradient(x, m, n));
        }
        jac
    }

    /// `Σ weights[i] ∇²G_{pairs[i]}(x)`.
    fn weighted_constraint_hessian(
        &self,
        x: &DVector<f64>,
        pairs: &[(usize, usize)],
        weights: &[f64],
    ) -> DMatrix<f64> {
        let k = self.dims().k;
        let mut acc = DMatrix::zeros(k, k);
        for (&(m, n), &w) in pairs.iter().zip(weights) {
            if w != 0.0 {
                acc += self.constraint_hessian(x, m, n) * w;
            }
        }
        acc
    }
}

/// Defaults for the norm-optimization benchmark.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormOptParams {
    pub k: usize,
    pub m: usize,
    pub n: usize,
    /// Right-hand side of `Σ_k ξ²_mk x_k² ≤ b`.
    pub b: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

impl NormOptParams {
    pub const DEFAULT_B: f64 = 100.0;
    pub const DEFAULT_LAMBDA: f64 = 0.5;

    pub fn new(k: usize, m: usize, n: usize) -> Self {
        Self {
            k,
            m,
            n,
            b: Self::DEFAULT_B,
            lambda1: Self::DEFAULT_LAMBDA,
            lambda2: Self::DEFAULT_LAMBDA,
        }
    }

    fn validate(&self) -> Result<Dims> {
        let dims = Dims::new(self.k, self.m, self.n)?;
        for (name, v) in [
            ("b", self.b),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(dims)
    }
}

/// Penalised norm-optimization instance.
///
/// ```text
/// f(x)    = λ₂‖x‖² + Σ_k (λ₁(−x_k)⁺ − x_k)
/// G_mn(x) = Σ_k ξ²_{mk,n} x_k² − b
/// ```
///
/// The kink of `(−x_k)⁺` at zero is handled with the subgradient `0`, and
/// its curvature is taken as zero, so `∇²f = 2λ₂ I` everywhere.
#[derive(Clone, Debug, PartialEq)]
pub struct NormOptInstance {
    dims: Dims,
    /// Raw samples; row `n·M + m`, column `k`.
    xi: DMatrix<f64>,
    xi_sq: DMatrix<f64>,
    pub b: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub seed: Option<u64>,
}

/// Draws `ξ_{mk,n}` i.i.d. standard normal from a seeded ChaCha8 stream.
///
/// Draw order is sample `n`, then row `m`, then coordinate `k`.
pub fn make_norm_opt(params: NormOptParams, seed: u64) -> Result<NormOptInstance> {
    let dims = params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = dims.entries();
    let mut xi = DMatrix::zeros(rows, dims.k);
    for r in 0..rows {
        for k in 0..dims.k {
            xi[(r, k)] = rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(NormOptInstance::from_raw(params, xi, Some(seed)))
}

impl NormOptInstance {
    fn from_raw(params: NormOptParams, xi: DMatrix<f64>, seed: Option<u64>) -> Self {
        let xi_sq = xi.map(|v| v * v);
        Self {
            dims: Dims {
                k: params.k,
                m: params.m,
                n: params.n,
            },
            xi,
            xi_sq,
            b: params.b,
            lambda1: params.lambda1,
            lambda2: params.lambda2,
            seed,
        }
    }

    /// Builds an instance from raw samples, one `M × K` block per sample.
    pub fn from_samples(
        samples: &[DMatrix<f64>],
        b: f64,
        lambda1: f64,
        lambda2: f64,
    ) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidDimensions("no samples".into()))?;
        let (m, k) = first.shape();
        if let Some(bad) = samples.iter().position(|s| s.shape() != (m, k)) {
            return Err(Error::InvalidDimensions(format!(
                "sample {bad} is {:?}, expected {:?}",
                samples[bad].shape(),
                (m, k)
            )));
        }
        let params = NormOptParams {
            k,
            m,
            n: samples.len(),
            b,
            lambda1,
            lambda2,
        };
        params.validate()?;
        let mut xi = DMatrix::zeros(m * samples.len(), k);
        for (n, sample) in samples.iter().enumerate() {
            if sample.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("sample {n}")));
            }
            xi.rows_mut(n * m, m).copy_from(sample);
        }
        Ok(Self::from_raw(params, xi, None))
    }

    /// Squared sample entry `ξ²_{mk,n}`.
    pub fn xi_sq(&self, m: usize, k: usize, n: usize) -> f64 {
        self.xi_sq[(n * self.dims.m + m, k)]
    }

    /// Raw sample `n` as an `M × K` matrix.
    pub fn sample(&self, n: usize) -> DMatrix<f64> {
        self.xi.rows(n * self.dims.m, self.dims.m).into_owned()
    }

    /// Writes the raw samples in the block CSV layout read by [`load_samples`].
    pub fn write_samples<W: Write>(&self, mut out: W) -> Result<()> {
        let Dims { k, m, n } = self.dims;
        writeln!(out, "# norm-opt samples: K={k} M={m} N={n}")?;
        for j in 0..n {
            if j > 0 {
                writeln!(out)?;
            }
            for i in 0..m {
                let row = self.xi.row(j * m + i);
                let mut line = String::new();
                for (c, v) in row.iter().enumerate() {
                    if c > 0 {
                        line.push(',');
                    }
                    write!(line, "{v:?}").expect("writing to a String cannot fail");
                }
                writeln!(out, "{line}")?;
            }
        }
        Ok(())
    }
}

impl Problem for NormOptInstance {
    fn dims(&self) -> Dims {
        self.dims
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        self.lambda2 * x.norm_squared()
            + x.iter()
                .map(|&v| self.lambda1 * (-v).max(0.0) - v)
                .sum::<f64>()
    }

    fn objective_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| 2.0 * self.lambda2 * v - 1.0 - if v < 0.0 { self.lambda1 } else { 0.0 })
    }

    fn objective_hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dims.k, self.dims.k) * (2.0 * self.lambda2)
    }

    fn constraints(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let sq = x.map(|v| v * v);
        let values = &self.xi_sq * sq;
        DMatrix::from_iterator(self.dims.m, self.dims.n, values.iter().map(|v| v - self.b))
    }

    fn constraint_gradient(&self, x: &DVector<f64>, m: usize, n: usize) -> DVector<f64> {
        let row = self.xi_sq.row(n * self.dims.m + m);
        DVector::from_iterator(
            self.dims.k,
            row.iter().zip(x.iter()).map(|(q, v)| 2.0 * q * v),
        )
    }

    fn constraint_hessian(&self, _x: &DVector<f64>, m: usize, n: usize) -> DMatrix<f64> {
        let row = self.xi_sq.row(n * self.dims.m + m);
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.dims.k,
            row.iter().map(|q| 2.0 * q),
        ))
    }

    fn weighted_constraint_hessian(
        &self,
        _x: &DVector<f64>,
        pairs: &[(usize, usize)],
        weights: &[f64],
    ) -> DMatrix<f64> {
        let mut diag = DVector::zeros(self.dims.k);
        for (&(m, n), &w) in pairs.iter().zip(weights) {
            diag.axpy(
                2.0 * w,
                &self.xi_sq.row(n * self.dims.m + m).transpose(),
                1.0,
            );
        }
        DMatrix::from_diagonal(&diag)
    }
}

/// Reads raw `ξ` samples from the block CSV layout.
///
/// Each sample is a block of `M` lines holding `K` comma-separated values;
/// blocks are separated by blank lines and lines starting with `#` are
/// ignored.
pub fn load_samples(path: &Path, b: f64, lambda1: f64, lambda2: f64) -> Result<NormOptInstance> {
    let text = fs::read_to_string(path)?;
    let samples = parse_samples(&text)?;
    NormOptInstance::from_samples(&samples, b, lambda1, lambda2)
}

pub fn parse_samples(text: &str) -> Result<Vec<DMatrix<f64>>> {
    let mut blocks: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut current: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = idx + 1;
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: lineno,
                    message: format!("{tok:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {w} values, found {}", row.len()),
                })
            }
            _ => {}
        }
        current.push(row);
    }
    if !current.is_empty() {
        blocks.push(current);
    }
    let first = blocks.first().ok_or(Error::Parse {
        line: 0,
        message: "no samples found".into(),
    })?;
    let rows = first.len();
    if let Some(bad) = blocks.iter().position(|b| b.len() != rows) {
        return Err(Error::InvalidDimensions(format!(
            "sample {bad} has {} rows, expected {rows}",
            blocks[bad].len()
        )));
    }
    Ok(blocks
        .iter()
        .map(|block| DMatrix::from_fn(rows, block[0].len(), |i, j| block[i][j]))
        .collect())
}

/// Two-variable instance whose binary-KKT point `(1, 1)` is not a KKT point.
///
/// `f(x) = (x₁ − 2)²`, `G(x) = (x₁² − x₂, x₂ − 1)` with `K = 2`, `M = 1`,
/// `N = 2`; intended for `s = 1`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Counterexample;

pub fn make_counterexample() -> Counterexample {
    Counterexample
}

impl Problem for Counterexample {
    fn dims(&self) -> Dims {
        Dims { k: 2, m: 1, n: 2 }
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        (x[0] - 2.0).powi(2)
    }

    fn objective_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![2.0 * (x[0] - 2.0), 0.0])
    }

    fn objective_hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]))
    }

    fn constraints(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[x[0] * x[0] - x[1], x[1] - 1.0])
    }

    fn constraint_gradient(&self, x: &DVector<f64>, _m: usize, n: usize) -> DVector<f64> {
        match n {
            0 => DVector::from_vec(vec![2.0 * x[0], -1.0]),
            _ => DVector::from_vec(vec![0.0, 1.0]),
        }
    }

    fn constraint_hessian(&self, _x: &DVector<f64>, _m: usize, n: usize) -> DMatrix<f64> {
        match n {
            0 => DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0])),
            _ => DMatrix::zeros(2, 2),
        }
    }
}
