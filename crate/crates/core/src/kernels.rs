//! ARD Gaussian kernels, ε-kernels, Gram matrices and the regularized solve
//! that every embedding in this crate is built on.
//!
//! The parameter kernel is the anisotropic Gaussian
//! `ℓ(a, b) = exp(-½ Σ_d ((a_d - b_d) / β_d)²)`. The ε-kernel on summaries
//! is the Gaussian density `N(y | x, diag(ε²))`, i.e. `c_ε · k_ε(y, x)` with
//! `c_ε = ∏_i (√(2π) ε_i)⁻¹`. On raw iid datasets a distributional variant
//! compares empirical mean embeddings instead and is left unnormalized.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Positive per-dimension length scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LengthScales(Vec<f64>);

impl LengthScales {
    pub fn new(scales: Vec<f64>) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::Empty("length scales"));
        }
        if let Some(&bad) = scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidScale(bad));
        }
        Ok(Self(scales))
    }

    pub fn isotropic(scale: f64, dim: usize) -> Result<Self> {
        Self::new(vec![scale; dim])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Every scale multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|s| s * factor).collect())
    }
}

impl TryFrom<Vec<f64>> for LengthScales {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LengthScales> for Vec<f64> {
    fn from(s: LengthScales) -> Self {
        s.0
    }
}

#[inline]
pub(crate) fn ard_unchecked(a: &[f64], b: &[f64], scales: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((x, y), s) in a.iter().zip(b).zip(scales) {
        let z = (x - y) / s;
        acc += z * z;
    }
    (-0.5 * acc).exp()
}

/// Anisotropic Gaussian kernel `exp(-½ Σ_d ((a_d - b_d)/scale_d)²)`.
pub fn ard_gaussian(a: &[f64], b: &[f64], scales: &LengthScales) -> Result<f64> {
    check_dim(scales.dim(), a.len())?;
    check_dim(scales.dim(), b.len())?;
    Ok(ard_unchecked(a, b, scales.as_slice()))
}

fn check_points(points: &[Vec<f64>], dim: usize) -> Result<()> {
    points.iter().try_for_each(|p| check_dim(dim, p.len()))
}

/// Cross-kernel matrix with entry `(i, j) = ℓ(a_i, b_j)`.
pub fn gram(a: &[Vec<f64>], b: &[Vec<f64>], scales: &LengthScales) -> Result<DMatrix<f64>> {
    check_points(a, scales.dim())?;
    check_points(b, scales.dim())?;
    let s = scales.as_slice();
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
        ard_unchecked(&a[i], &b[j], s)
    }))
}

/// Symmetric Gram matrix `L = {ℓ(θ_i, θ_j)}` of one point set.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    scales: LengthScales,
}

impl GramMatrix {
    pub fn new(points: &[Vec<f64>], scales: &LengthScales) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("gram points"));
        }
        check_points(points, scales.dim())?;
        let m = points.len();
        let s = scales.as_slice();
        let mut entries = DMatrix::zeros(m, m);
        for j in 0..m {
            entries[(j, j)] = 1.0;
            for i in (j + 1)..m {
                let k = ard_unchecked(&points[i], &points[j], s);
                entries[(i, j)] = k;
                entries[(j, i)] = k;
            }
        }
        Ok(Self {
            entries,
            scales: scales.clone(),
        })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn scales(&self) -> &LengthScales {
        &self.scales
    }

    pub fn size(&self) -> usize {
        self.entries.nrows()
    }
}

/// Which discrepancy the ε-kernel measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsKernelKind {
    /// Gaussian density on summary statistics.
    #[default]
    Pointwise,
    /// Gaussian on the RKHS distance between empirical embeddings of raw iid
    /// datasets. Each "summary" vector is a flattened dataset of
    /// `point_dim`-dimensional points; `alpha` is the inner kernel's scale.
    Distributional { alpha: f64, point_dim: usize },
}

/// A fully specified ε-kernel `κ_ε(y, x) = c_ε · k_ε(y, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsKernelSpec {
    pub eps: LengthScales,
    pub norm_const: f64,
    pub kind: EpsKernelKind,
}

impl EpsKernelSpec {
    pub fn pointwise(eps: LengthScales) -> Self {
        let norm_const = eps.as_slice().iter().map(|e| 1.0 / (SQRT_2PI * e)).product();
        Self {
            eps,
            norm_const,
            kind: EpsKernelKind::Pointwise,
        }
    }

    pub fn distributional(eps: f64, alpha: f64, point_dim: usize) -> Result<Self> {
        Self::new(LengthScales::new(vec![eps])?, EpsKernelKind::Distributional { alpha, point_dim })
    }

    pub fn new(eps: LengthScales, kind: EpsKernelKind) -> Result<Self> {
        match kind {
            EpsKernelKind::Pointwise => Ok(Self::pointwise(eps)),
            EpsKernelKind::Distributional { alpha, point_dim } => {
                if !(alpha.is_finite() && alpha > 0.0) {
                    return Err(Error::InvalidScale(alpha));
                }
                if point_dim == 0 {
                    return Err(Error::InvalidParameter("point_dim must be >= 1".into()));
                }
                check_dim(1, eps.dim())?;
                Ok(Self {
                    eps,
                    norm_const: 1.0,
                    kind,
                })
            }
        }
    }

    /// `κ_ε(y, x)` for a single pair.
    pub fn evaluate(&self, y: &[f64], x: &[f64]) -> Result<f64> {
        let table = Discrepancies::new(self.kind, y, std::slice::from_ref(&x.to_vec()))?;
        Ok(table.kernel_vector(&self.eps)?[0])
    }
}

/// `{κ_ε(y, x_j)}_j` for all simulations.
pub fn eps_kernel_vector(spec: &EpsKernelSpec, y: &[f64], xs: &[Vec<f64>]) -> Result<Vec<f64>> {
    Discrepancies::new(spec.kind, y, xs)?.kernel_vector(&spec.eps)
}

/// Biased (V-statistic) squared MMD between two flattened datasets under a
/// unit-height Gaussian inner kernel of scale `alpha`.
pub fn squared_mmd(a: &[f64], b: &[f64], point_dim: usize, alpha: f64) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("raw dataset"));
    }
    if a.len() % point_dim != 0 || b.len() % point_dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: point_dim,
            got: a.len() % point_dim + b.len() % point_dim,
        });
    }
    let scales = vec![alpha; point_dim];
    let mean_k = |u: &[f64], v: &[f64]| {
        let mut acc = 0.0;
        for p in u.chunks_exact(point_dim) {
            for q in v.chunks_exact(point_dim) {
                acc += ard_unchecked(p, q, &scales);
            }
        }
        acc / ((u.len() / point_dim) * (v.len() / point_dim)) as f64
    };
    Ok((mean_k(a, a) + mean_k(b, b) - 2.0 * mean_k(a, b)).max(0.0))
}

/// Squared discrepancies between the observation and every simulation,
/// independent of ε. Lets the ε-kernel vector be recomputed for any ε in
/// `O(m·n)`, which is what makes ε-search cheap.
#[derive(Debug, Clone)]
pub struct Discrepancies {
    kind: EpsKernelKind,
    width: usize,
    sq: Vec<f64>,
}

impl Discrepancies {
    pub fn new(kind: EpsKernelKind, y: &[f64], xs: &[Vec<f64>]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::Empty("simulated summaries"));
        }
        match kind {
            EpsKernelKind::Pointwise => {
                let n = y.len();
                let mut sq = Vec::with_capacity(n * xs.len());
                for x in xs {
                    check_dim(n, x.len())?;
                    sq.extend(y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)));
                }
                Ok(Self { kind, width: n, sq })
            }
            EpsKernelKind::Distributional { alpha, point_dim } => {
                let sq = xs
                    .iter()
                    .map(|x| {
                        check_dim(y.len(), x.len())?;
                        squared_mmd(y, x, point_dim, alpha)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Self { kind, width: 1, sq })
            }
        }
    }

    pub fn len(&self) -> usize {
        self.sq.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.sq.is_empty()
    }

    /// Number of ε entries this table expects.
    pub fn eps_dim(&self) -> usize {
        self.width
    }

    pub fn kind(&self) -> EpsKernelKind {
        self.kind
    }

    pub fn kernel_vector(&self, eps: &LengthScales) -> Result<Vec<f64>> {
        check_dim(self.width, eps.dim())?;
        let e = eps.as_slice();
        let c = match self.kind {
            EpsKernelKind::Pointwise => e.iter().map(|s| 1.0 / (SQRT_2PI * s)).product(),
            EpsKernelKind::Distributional { .. } => 1.0,
        };
        let inv2: Vec<f64> = e.iter().map(|s| 0.5 / (s * s)).collect();
        Ok(self
            .sq
            .chunks_exact(self.width)
            .map(|row| {
                let expo: f64 = row.iter().zip(&inv2).map(|(d, w)| d * w).sum();
                c * (-expo).exp()
            })
            .collect())
    }
}

/// Cholesky factor of `L + mλI`, computed once and reused for every
/// right-hand side.
#[derive(Debug, Clone)]
pub struct RegularizedSolver {
    system: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    lambda: f64,
}

impl RegularizedSolver {
    pub fn new(gram: &GramMatrix, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::Factorization);
        }
        let m = gram.size();
        let mut system = gram.entries().clone();
        let shift = m as f64 * lambda;
        for i in 0..m {
            system[(i, i)] += shift;
        }
        let chol = Cholesky::new(system.clone()).ok_or(Error::Factorization)?;
        Ok(Self {
            system,
            chol,
            lambda,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn size(&self) -> usize {
        self.system.nrows()
    }

    /// Solves `(L + mλI) v = rhs` with one step of iterative refinement.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.size(), rhs.len())?;
        let b = DVector::from_column_slice(rhs);
        let mut v = self.chol.solve(&b);
        let r = &b - &self.system * &v;
        v += self.chol.solve(&r);
        Ok(v.as_slice().to_vec())
    }

    /// `‖(L + mλI) v − rhs‖∞`.
    pub fn residual(&self, v: &[f64], rhs: &[f64]) -> f64 {
        let r = DVector::from_column_slice(rhs) - &self.system * DVector::from_column_slice(v);
        r.amax()
    }
}

/// One-shot `(L + mλI)⁻¹ rhs`.
pub fn regularized_solve(gram: &GramMatrix, lambda: f64, rhs: &[f64]) -> Result<Vec<f64>> {
    RegularizedSolver::new(gram, lambda)?.solve(rhs)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Per-dimension median of the non-zero pairwise absolute differences.
/// Dimensions where every point coincides fall back to 1.0.
pub fn median_heuristic(points: &[Vec<f64>]) -> Result<LengthScales> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter(
            "median heuristic needs at least two points".into(),
        ));
    }
    let dim = points[0].len();
    check_points(points, dim)?;
    let scales = (0..dim)
        .map(|d| {
            let mut diffs = Vec::new();
            for i in 0..points.len() {
                for j in (i + 1)..points.len() {
                    let a = (points[i][d] - points[j][d]).abs();
                    if a > 0.0 {
                        diffs.push(a);
                    }
                }
            }
            median(diffs).unwrap_or(1.0)
        })
        .collect();
    LengthScales::new(scales)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ls(v: &[f64]) -> LengthScales {
        LengthScales::new(v.to_vec()).unwrap()
    }

    #[test]
    fn ard_examples() {
        assert_eq!(ard_gaussian(&[0.3, -2.0], &[0.3, -2.0], &ls(&[0.1, 9.0])).unwrap(), 1.0);
        let beta = 1.7;
        assert_relative_eq!(
            ard_gaussian(&[0.0], &[beta], &ls(&[beta])).unwrap(),
            0.606_530_659_7,
            epsilon = 1e-10
        );
        assert_relative_eq!(
            ard_gaussian(&[0.0, 0.0], &[1.0, 2.0], &ls(&[1.0, 2.0])).unwrap(),
            (-1.0f64).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn ard_errors() {
        assert!(matches!(
            ard_gaussian(&[0.0], &[0.0, 1.0], &ls(&[1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(LengthScales::new(vec![1.0, 0.0]), Err(Error::InvalidScale(_))));
        assert!(matches!(LengthScales::new(vec![-1.0]), Err(Error::InvalidScale(_))));
        assert!(LengthScales::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn gram_small_cases() {
        let g = GramMatrix::new(&[vec![0.4, 1.0]], &ls(&[1.0, 1.0])).unwrap();
        assert_eq!(g.entries()[(0, 0)], 1.0);

        let pts = vec![vec![0.0], vec![0.5], vec![2.0]];
        let g = GramMatrix::new(&pts, &ls(&[0.7])).unwrap();
        for i in 0..3 {
            assert_eq!(g.entries()[(i, i)], 1.0);
            for j in 0..3 {
                assert_eq!(g.entries()[(i, j)], g.entries()[(j, i)]);
            }
        }
        let cross = gram(&pts, &pts, &ls(&[0.7])).unwrap();
        assert_eq!(&cross, g.entries());
    }

    #[test]
    fn gram_min_eigenvalue_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Vec<f64>> = (0..20)
            .map(|_| vec![rng.random::<f64>() * 3.0, rng.random::<f64>()])
            .collect();
        let g = GramMatrix::new(&pts, &ls(&[0.8, 0.5])).unwrap();
        let shifted = g.entries() + DMatrix::<f64>::identity(20, 20) * 1e-6;
        let eig = shifted.symmetric_eigenvalues();
        assert!(eig.min() > 0.0, "min eigenvalue {}", eig.min());
    }

    #[test]
    fn eps_kernel_pointwise_values() {
        let spec = EpsKernelSpec::pointwise(ls(&[1.0]));
        let v = eps_kernel_vector(&spec, &[0.3], &[vec![0.3]]).unwrap();
        assert_relative_eq!(v[0], 0.398_942_280_4, epsilon = 1e-9);

        // scalar multiple of the ARD kernel
        let eps = ls(&[0.4, 2.5]);
        let spec = EpsKernelSpec::pointwise(eps.clone());
        let y = [1.0, -1.0];
        let x = [0.2, 0.7];
        let expected = spec.norm_const * ard_gaussian(&y, &x, &eps).unwrap();
        assert_relative_eq!(spec.evaluate(&y, &x).unwrap(), expected, max_relative = 1e-14);
        assert_relative_eq!(
            spec.norm_const,
            1.0 / (2.0 * std::f64::consts::PI * 0.4 * 2.5),
            max_relative = 1e-14
        );
    }

    #[test]
    fn eps_kernel_errors() {
        let spec = EpsKernelSpec::pointwise(ls(&[1.0]));
        assert!(matches!(eps_kernel_vector(&spec, &[0.0], &[]), Err(Error::Empty(_))));
        assert!(matches!(
            eps_kernel_vector(&spec, &[0.0], &[vec![0.0, 1.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn distributional_identical_datasets_are_maximal() {
        let spec = EpsKernelSpec::distributional(0.5, 1.0, 1).unwrap();
        let y = vec![0.1, 0.9, 2.0, 0.4];
        let xs = vec![vec![3.0, 0.2, 0.1, 0.0], y.clone(), vec![0.4, 2.0, 0.9, 0.1]];
        let v = eps_kernel_vector(&spec, &y, &xs).unwrap();
        assert_relative_eq!(v[1], 1.0, epsilon = 1e-12);
        // a permutation of the same multiset has the same empirical embedding
        assert_relative_eq!(v[2], 1.0, epsilon = 1e-12);
        assert!(v[0] < v[1]);
        assert_eq!(spec.norm_const, 1.0);
    }

    #[test]
    fn solve_examples() {
        let g = GramMatrix::new(&[vec![0.0]], &ls(&[1.0])).unwrap();
        let v = regularized_solve(&g, 1.0, &[2.0]).unwrap();
        assert_relative_eq!(v[0], 1.0, epsilon = 1e-15);

        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 0.3]).collect();
        let g = GramMatrix::new(&pts, &ls(&[1.0])).unwrap();
        let v = regularized_solve(&g, 0.01, &[0.0; 5]).unwrap();
        assert!(v.iter().all(|x| *x == 0.0));

        assert_eq!(regularized_solve(&g, 0.0, &[1.0; 5]), Err(Error::Factorization));
        assert_eq!(regularized_solve(&g, -1.0, &[1.0; 5]), Err(Error::Factorization));
    }

    #[test]
    fn median_heuristic_examples() {
        assert_eq!(median_heuristic(&[vec![0.0], vec![1.0]]).unwrap().as_slice(), &[1.0]);
        assert_eq!(
            median_heuristic(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap().as_slice(),
            &[2.0]
        );
        assert_eq!(
            median_heuristic(&[vec![0.0], vec![0.0], vec![0.0]]).unwrap().as_slice(),
            &[1.0]
        );
        assert!(median_heuristic(&[vec![0.0]]).is_err());
    }
}
