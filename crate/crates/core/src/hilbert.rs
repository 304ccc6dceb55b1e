//! Finite-dimensional real Hilbert spaces with diagonal metrics.
//!
//! A [`Space`] is `R^n` equipped with the scalar product
//! `<x, y> = sum_i w_i x_i y_i`. Weighted product spaces (blocks `G_k`
//! carrying an extra factor `omega_k`) are spaces of this form as well, so
//! every construction in the crate reduces to dense matrices plus a pair of
//! diagonal metrics.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::random;

pub type Vector = DVector<f64>;

/// Seed of the starting vector used by the operator-norm power iteration.
pub const POWER_ITERATION_SEED: u64 = 0x0005_eed0_f1a7;
/// Relative change of the Rayleigh quotient at which power iteration stops.
pub const POWER_ITERATION_TOL: f64 = 1e-12;
pub const POWER_ITERATION_MAX: usize = 10_000;
/// Gram–Schmidt drops a spanning vector whose orthogonal remainder is below
/// this fraction of its original norm.
pub const GRAM_SCHMIDT_DROP_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Space {
    weights: Arc<[f64]>,
}

impl Space {
    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::weighted(vec![1.0; dim])
    }

    pub fn weighted(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidSpace("dimension must be positive".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidSpace(format!(
                "metric weights must be finite and strictly positive, found {w}"
            )));
        }
        Ok(Self {
            weights: weights.into(),
        })
    }

    /// Weighted product `G_1 x ... x G_p` with scalar product
    /// `sum_k omega_k <y_k, y'_k>_{G_k}`.
    pub fn product(blocks: &[Space], omega: &[f64]) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidArgument("empty product".into()));
        }
        if blocks.len() != omega.len() {
            return Err(Error::DimensionMismatch {
                expected: blocks.len(),
                got: omega.len(),
            });
        }
        check_weights(omega)?;
        let weights = blocks
            .iter()
            .zip(omega)
            .flat_map(|(s, &o)| s.weights.iter().map(move |w| o * w))
            .collect();
        Self::weighted(weights)
    }

    /// `m` unweighted copies of `self`.
    pub fn power(&self, m: usize) -> Result<Self> {
        Self::product(&vec![self.clone(); m], &vec![1.0; m])
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_euclidean(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    pub fn zeros(&self) -> Vector {
        Vector::zeros(self.dim())
    }

    /// Checks that `x` is a finite vector of this space.
    pub fn check(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(())
    }

    pub fn inner(&self, x: &Vector, y: &Vector) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.dot(x, y))
    }

    pub fn norm(&self, x: &Vector) -> Result<f64> {
        self.check(x)?;
        Ok(self.norm_of(x))
    }

    pub fn dist(&self, x: &Vector, y: &Vector) -> Result<f64> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.dist_of(x, y))
    }

    /// Unchecked scalar product. Callers guarantee matching lengths.
    pub fn dot(&self, x: &Vector, y: &Vector) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        debug_assert_eq!(y.len(), self.dim());
        self.weights
            .iter()
            .zip(x.iter().zip(y.iter()))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn norm_sq(&self, x: &Vector) -> f64 {
        self.dot(x, x)
    }

    pub fn norm_of(&self, x: &Vector) -> f64 {
        self.norm_sq(x).sqrt()
    }

    pub fn dist_of(&self, x: &Vector, y: &Vector) -> f64 {
        self.norm_of(&(x - y))
    }

    /// Canonical quadratic form `||x||^2 / 2`.
    pub fn half_sq_norm(&self, x: &Vector) -> f64 {
        0.5 * self.norm_sq(x)
    }

    pub(crate) fn scale_by_weights(&self, x: &Vector) -> Vector {
        Vector::from_iterator(x.len(), x.iter().zip(self.weights.iter()).map(|(a, w)| a * w))
    }

    pub(crate) fn unscale_by_weights(&self, x: &Vector) -> Vector {
        Vector::from_iterator(x.len(), x.iter().zip(self.weights.iter()).map(|(a, w)| a / w))
    }

    /// Same space up to identical dimension and weights.
    pub fn ensure_same(&self, other: &Space, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::SpaceMismatch(format!(
                "{what}: dim {} vs dim {} (or differing metric weights)",
                self.dim(),
                other.dim()
            )))
        }
    }
}

pub(crate) fn check_weights(omega: &[f64]) -> Result<()> {
    if omega.is_empty() {
        return Err(Error::InvalidArgument("empty weight list".into()));
    }
    match omega.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        Some(w) => Err(Error::InvalidArgument(format!(
            "weights must be finite and strictly positive, found {w}"
        ))),
        None => Ok(()),
    }
}

/// Bounded linear operator between two spaces, stored as a dense
/// `codomain.dim x domain.dim` matrix in coordinates.
///
/// The adjoint is taken with respect to both metrics:
/// `L* = W_H^{-1} L^T W_G`. The operator norm is estimated once at
/// construction by power iteration on `L* L` and cached.
#[derive(Clone, Debug)]
pub struct LinearMap {
    domain: Space,
    codomain: Space,
    matrix: DMatrix<f64>,
    norm_estimate: f64,
}

impl LinearMap {
    pub fn new(domain: Space, codomain: Space, matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != codomain.dim() {
            return Err(Error::DimensionMismatch {
                expected: codomain.dim(),
                got: matrix.nrows(),
            });
        }
        if matrix.ncols() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                got: matrix.ncols(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        let mut map = Self {
            domain,
            codomain,
            matrix,
            norm_estimate: 0.0,
        };
        map.norm_estimate = map.power_iteration();
        Ok(map)
    }

    pub fn identity(space: &Space) -> Self {
        Self::scaled_identity(space, 1.0)
    }

    pub fn scaled_identity(space: &Space, c: f64) -> Self {
        let n = space.dim();
        Self {
            domain: space.clone(),
            codomain: space.clone(),
            matrix: DMatrix::identity(n, n) * c,
            norm_estimate: c.abs(),
        }
    }

    pub fn zero(domain: &Space, codomain: &Space) -> Self {
        Self {
            domain: domain.clone(),
            codomain: codomain.clone(),
            matrix: DMatrix::zeros(codomain.dim(), domain.dim()),
            norm_estimate: 0.0,
        }
    }

    pub fn domain(&self) -> &Space {
        &self.domain
    }

    pub fn codomain(&self) -> &Space {
        &self.codomain
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Cached operator-norm estimate.
    pub fn op_norm(&self) -> f64 {
        self.norm_estimate
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        self.domain.check(x)?;
        Ok(self.apply_raw(x))
    }

    pub fn adjoint_apply(&self, y: &Vector) -> Result<Vector> {
        self.codomain.check(y)?;
        Ok(self.adjoint_raw(y))
    }

    pub(crate) fn apply_raw(&self, x: &Vector) -> Vector {
        &self.matrix * x
    }

    pub(crate) fn adjoint_raw(&self, y: &Vector) -> Vector {
        let weighted = self.codomain.scale_by_weights(y);
        self.domain.unscale_by_weights(&self.matrix.tr_mul(&weighted))
    }

    /// Matrix of `L*` in coordinates.
    pub fn adjoint_matrix(&self) -> DMatrix<f64> {
        let mut m = self.matrix.transpose();
        for (i, mut row) in m.row_iter_mut().enumerate() {
            row /= self.domain.weights()[i];
        }
        for (j, mut col) in m.column_iter_mut().enumerate() {
            col *= self.codomain.weights()[j];
        }
        m
    }

    pub fn adjoint(&self) -> LinearMap {
        Self {
            domain: self.codomain.clone(),
            codomain: self.domain.clone(),
            matrix: self.adjoint_matrix(),
            norm_estimate: self.norm_estimate,
        }
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &LinearMap) -> Result<LinearMap> {
        inner.codomain.ensure_same(&self.domain, "composition")?;
        LinearMap::new(
            inner.domain.clone(),
            self.codomain.clone(),
            &self.matrix * &inner.matrix,
        )
    }

    pub fn scaled(&self, c: f64) -> Result<LinearMap> {
        LinearMap::new(self.domain.clone(), self.codomain.clone(), &self.matrix * c)
    }

    /// Matrix of `L* L` in coordinates.
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        self.adjoint_matrix() * &self.matrix
    }

    /// Largest entry of `|L* L - Id|`; zero exactly when `L` is an isometry.
    pub fn isometry_defect(&self) -> f64 {
        let n = self.domain.dim();
        (self.gram_matrix() - DMatrix::<f64>::identity(n, n)).amax()
    }

    fn power_iteration(&self) -> f64 {
        if self.matrix.iter().all(|&v| v == 0.0) {
            return 0.0;
        }
        let mut rng = random::seeded(POWER_ITERATION_SEED);
        let mut v = random::gaussian_vector(&mut rng, self.domain.dim(), 1.0);
        let n0 = self.domain.norm_of(&v);
        v /= n0;
        let mut lambda = 0.0_f64;
        for _ in 0..POWER_ITERATION_MAX {
            let lv = self.apply_raw(&v);
            let rayleigh = self.codomain.norm_sq(&lv);
            let u = self.adjoint_raw(&lv);
            let nu = self.domain.norm_of(&u);
            let converged = (rayleigh - lambda).abs() <= POWER_ITERATION_TOL * rayleigh;
            lambda = lambda.max(rayleigh);
            if nu == 0.0 || converged {
                break;
            }
            v = u / nu;
        }
        lambda.sqrt()
    }
}

/// Stacks `L_k: H -> G_k` into `L: H -> G_1 x ... x G_p` where the product
/// carries weights `omega`. The adjoint is `y -> sum_k omega_k L_k* y_k`.
pub fn stack(maps: &[LinearMap], omega: &[f64]) -> Result<LinearMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot stack an empty list of maps".into()))?;
    if maps.len() != omega.len() {
        return Err(Error::DimensionMismatch {
            expected: maps.len(),
            got: omega.len(),
        });
    }
    check_weights(omega)?;
    let domain = first.domain.clone();
    for m in maps {
        m.domain.ensure_same(&domain, "stacked maps must share their domain")?;
    }
    let blocks: Vec<Space> = maps.iter().map(|m| m.codomain.clone()).collect();
    let codomain = Space::product(&blocks, omega)?;
    let rows = codomain.dim();
    let mut matrix = DMatrix::zeros(rows, domain.dim());
    let mut offset = 0;
    for m in maps {
        let r = m.matrix.nrows();
        matrix.rows_mut(offset, r).copy_from(&m.matrix);
        offset += r;
    }
    LinearMap::new(domain, codomain, matrix)
}

/// Metric-orthogonal projector onto the span of a set of vectors.
#[derive(Clone, Debug)]
pub struct SubspaceProjector {
    space: Space,
    basis: Vec<Vector>,
}

impl SubspaceProjector {
    /// Orthonormalizes `spanning` with respect to the metric, dropping
    /// dependent vectors.
    pub fn new(space: &Space, spanning: &[Vector]) -> Result<Self> {
        let mut basis: Vec<Vector> = Vec::new();
        for v in spanning {
            space.check(v)?;
            let original = space.norm_of(v);
            if original == 0.0 {
                continue;
            }
            let mut u = v.clone();
            // two passes of modified Gram–Schmidt
            for _ in 0..2 {
                for b in &basis {
                    let c = space.dot(&u, b);
                    u.axpy(-c, b, 1.0);
                }
            }
            let n = space.norm_of(&u);
            if n > GRAM_SCHMIDT_DROP_TOL * original {
                basis.push(u / n);
            }
            if basis.len() == space.dim() {
                break;
            }
        }
        Ok(Self {
            space: space.clone(),
            basis,
        })
    }

    pub fn full(space: &Space) -> Self {
        let basis = (0..space.dim())
            .map(|i| {
                let mut e = space.zeros();
                e[i] = 1.0 / space.weights()[i].sqrt();
                e
            })
            .collect();
        Self {
            space: space.clone(),
            basis,
        }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn basis(&self) -> &[Vector] {
        &self.basis
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn is_trivial(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.basis.len() == self.space.dim()
    }

    pub fn project(&self, x: &Vector) -> Result<Vector> {
        self.space.check(x)?;
        Ok(self.project_raw(x))
    }

    pub(crate) fn project_raw(&self, x: &Vector) -> Vector {
        if self.is_full() {
            return x.clone();
        }
        let mut out = self.space.zeros();
        for b in &self.basis {
            out.axpy(self.space.dot(x, b), b, 1.0);
        }
        out
    }

    /// Coordinates of `P x` in the orthonormal basis.
    pub fn coordinates(&self, x: &Vector) -> Result<Vector> {
        self.space.check(x)?;
        Ok(Vector::from_iterator(
            self.rank(),
            self.basis.iter().map(|b| self.space.dot(x, b)),
        ))
    }

    /// `sum_j c_j b_j`.
    pub fn embed(&self, coords: &Vector) -> Result<Vector> {
        if coords.len() != self.rank() {
            return Err(Error::DimensionMismatch {
                expected: self.rank(),
                got: coords.len(),
            });
        }
        let mut out = self.space.zeros();
        for (c, b) in coords.iter().zip(&self.basis) {
            out.axpy(*c, b, 1.0);
        }
        Ok(out)
    }

    /// `n x rank` matrix whose columns are the basis vectors.
    pub fn basis_matrix(&self) -> DMatrix<f64> {
        let n = self.space.dim();
        DMatrix::from_fn(n, self.rank(), |i, j| self.basis[j][i])
    }

    /// The projector as a self-adjoint map `H -> H`.
    pub fn to_linear_map(&self) -> LinearMap {
        let n = self.space.dim();
        let matrix = if self.is_full() {
            DMatrix::identity(n, n)
        } else {
            // P = U U^T W
            let u = self.basis_matrix();
            let mut m = &u * u.transpose();
            for (j, mut col) in m.column_iter_mut().enumerate() {
                col *= self.space.weights()[j];
            }
            m
        };
        let norm = if self.is_trivial() { 0.0 } else { 1.0 };
        LinearMap {
            domain: self.space.clone(),
            codomain: self.space.clone(),
            matrix,
            norm_estimate: norm,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn inner_examples() {
        let e = Space::euclidean(2).unwrap();
        assert_eq!(e.inner(&dvector![3.0, 4.0], &dvector![3.0, 4.0]).unwrap(), 25.0);
        let h = Space::weighted(vec![0.5, 0.5]).unwrap();
        assert_eq!(h.inner(&dvector![1.0, 1.0], &dvector![1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(h.inner(&dvector![7.0, -2.0], &dvector![0.0, 0.0]).unwrap(), 0.0);
        assert!(matches!(
            e.inner(&dvector![1.0], &dvector![1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(Space::weighted(vec![1.0, 0.0]).is_err());
        assert!(Space::weighted(vec![1.0, -2.0]).is_err());
        assert!(Space::weighted(vec![]).is_err());
        assert!(Space::weighted(vec![f64::NAN]).is_err());
    }

    #[test]
    fn adjoint_of_diagonal_stack() {
        let h = Space::euclidean(1).unwrap();
        let g = Space::weighted(vec![0.5, 0.5]).unwrap();
        let l = LinearMap::new(h, g, dmatrix![1.0; 1.0]).unwrap();
        let out = l.adjoint_apply(&dvector![2.0, 6.0]).unwrap();
        assert!(close(out[0], 4.0, 1e-15));
        assert!(close(l.op_norm(), 1.0, 1e-12));
    }

    #[test]
    fn adjoint_of_identity_and_shift() {
        let s = Space::weighted(vec![2.0, 3.0]).unwrap();
        let id = LinearMap::identity(&s);
        let y = dvector![1.5, -0.5];
        assert_eq!(id.adjoint_apply(&y).unwrap(), y);

        let e = Space::euclidean(2).unwrap();
        let shift = LinearMap::new(e.clone(), e, dmatrix![0.0, 1.0; 0.0, 0.0]).unwrap();
        assert_eq!(shift.adjoint_apply(&dvector![5.0, 7.0]).unwrap(), dvector![0.0, 5.0]);
    }

    #[test]
    fn op_norm_examples() {
        let e = Space::euclidean(2).unwrap();
        let d = LinearMap::new(e.clone(), e.clone(), dmatrix![0.6, 0.0; 0.0, 0.8]).unwrap();
        assert!(close(d.op_norm(), 0.8, 1e-12));
        let z = LinearMap::new(e.clone(), e.clone(), DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(z.op_norm(), 0.0);

        let one = Space::euclidean(1).unwrap();
        let id = LinearMap::identity(&one);
        let st = stack(&[id.clone(), id.clone(), id], &[0.2, 0.3, 0.5]).unwrap();
        assert!(close(st.op_norm(), 1.0, 1e-12));
    }

    #[test]
    fn stack_examples() {
        let one = Space::euclidean(1).unwrap();
        let id = LinearMap::identity(&one);
        let st = stack(&[id.clone(), id.clone()], &[0.5, 0.5]).unwrap();
        let out = st.adjoint_apply(&dvector![1.0, 3.0]).unwrap();
        assert!(close(out[0], 2.0, 1e-15));

        let single = stack(std::slice::from_ref(&id), &[1.0]).unwrap();
        assert_eq!(single.matrix(), id.matrix());
        assert_eq!(single.codomain(), id.codomain());

        let e = Space::euclidean(2).unwrap();
        let l1 = LinearMap::new(e.clone(), one.clone(), dmatrix![1.0, 0.0]).unwrap();
        let l2 = LinearMap::new(e.clone(), one.clone(), dmatrix![0.0, 1.0]).unwrap();
        let st = stack(&[l1, l2], &[0.5, 0.5]).unwrap();
        assert!(close(st.op_norm(), 0.5_f64.sqrt(), 1e-12));
    }

    #[test]
    fn stack_errors() {
        let one = Space::euclidean(1).unwrap();
        let id = LinearMap::identity(&one);
        assert!(stack(&[], &[]).is_err());
        assert!(stack(std::slice::from_ref(&id), &[0.0]).is_err());
        assert!(stack(std::slice::from_ref(&id), &[-1.0]).is_err());
        let two = Space::euclidean(2).unwrap();
        assert!(stack(&[id, LinearMap::identity(&two)], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn projector_examples() {
        let e = Space::euclidean(2).unwrap();
        let p = SubspaceProjector::new(&e, &[dvector![1.0, 1.0]]).unwrap();
        let px = p.project(&dvector![2.0, 0.0]).unwrap();
        assert!((px - dvector![1.0, 1.0]).amax() < 1e-15);
        let v = dvector![-3.0, -3.0];
        assert!((p.project(&v).unwrap() - &v).amax() < 1e-14);

        let full = SubspaceProjector::full(&e);
        assert_eq!(full.project(&dvector![0.3, -9.0]).unwrap(), dvector![0.3, -9.0]);
    }

    #[test]
    fn projector_drops_dependent_vectors() {
        let s = Space::weighted(vec![1.0, 2.0, 3.0]).unwrap();
        let p = SubspaceProjector::new(
            &s,
            &[dvector![1.0, 0.0, 1.0], dvector![2.0, 0.0, 2.0], dvector![0.0, 0.0, 0.0]],
        )
        .unwrap();
        assert_eq!(p.rank(), 1);
        let b = &p.basis()[0];
        assert!(close(s.norm_sq(b), 1.0, 1e-14));
    }

    #[test]
    fn projector_residual_is_metric_orthogonal() {
        let s = Space::weighted(vec![0.5, 2.0, 1.5]).unwrap();
        let p = SubspaceProjector::new(&s, &[dvector![1.0, 2.0, 0.0], dvector![0.0, 1.0, -1.0]])
            .unwrap();
        let x = dvector![0.7, -1.3, 2.2];
        let r = &x - p.project(&x).unwrap();
        for b in p.basis() {
            assert!(s.dot(&r, b).abs() < 1e-12);
        }
        let lm = p.to_linear_map();
        assert!((lm.apply(&x).unwrap() - p.project(&x).unwrap()).amax() < 1e-14);
    }
}
