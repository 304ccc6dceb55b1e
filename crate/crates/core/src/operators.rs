//! Maximally monotone operators, represented by their resolvent families
//! `gamma -> J_{gamma B} = (Id + gamma B)^{-1}`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::compositions::ComposedOperator;
use crate::error::{Error, Result};
use crate::hilbert::{Space, Vector};
use crate::proxfun::ProxFunction;
use crate::random;

/// Relative tolerance used when matching a requested scale against a
/// family pinned to one scale.
pub const SCALE_MATCH_TOL: f64 = 1e-12;
/// Number of deterministic pairs used to spot-check firm nonexpansiveness
/// of user-supplied maps.
pub const FNE_SPOT_CHECKS: usize = 100;
pub const FNE_SPOT_TOL: f64 = 1e-8;
const FNE_SPOT_SEED: u64 = 0xf1e_c4ec;
/// Slack used by set membership tests behind indicator values.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Closed convex sets with metric projections.
///
/// All geometric quantities (balls, half-space normals) are taken in the
/// metric of the ambient [`Space`]. `Affine` is `{x : A x = b}` with `A`
/// given by coordinate rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ConvexSet {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Halfspace { normal: Vec<f64>, offset: f64 },
    Affine { rows: Vec<Vec<f64>>, rhs: Vec<f64> },
    Singleton { point: Vec<f64> },
}

impl ConvexSet {
    pub fn interval(lower: f64, upper: f64) -> Self {
        ConvexSet::Box {
            lower: vec![lower],
            upper: vec![upper],
        }
    }

    pub fn singleton(point: &[f64]) -> Self {
        ConvexSet::Singleton {
            point: point.to_vec(),
        }
    }

    /// Checks the parameters against `space` and rejects empty sets.
    pub fn validate(&self, space: &Space) -> Result<()> {
        let n = space.dim();
        let dim = |len: usize| -> Result<()> {
            if len == n {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    expected: n,
                    got: len,
                })
            }
        };
        match self {
            ConvexSet::Box { lower, upper } => {
                dim(lower.len())?;
                dim(upper.len())?;
                if lower.iter().zip(upper).any(|(l, u)| l.is_nan() || u.is_nan() || l > u) {
                    return Err(Error::Validation("box with lower > upper".into()));
                }
            }
            ConvexSet::Ball { center, radius } => {
                dim(center.len())?;
                if !(radius.is_finite() && *radius >= 0.0) {
                    return Err(Error::Validation(format!("ball radius {radius}")));
                }
            }
            ConvexSet::Halfspace { normal, offset } => {
                dim(normal.len())?;
                if !offset.is_finite() || normal.iter().all(|v| *v == 0.0) {
                    return Err(Error::Validation("degenerate half-space".into()));
                }
            }
            ConvexSet::Affine { rows, rhs } => {
                if rows.is_empty() || rows.len() != rhs.len() {
                    return Err(Error::Validation("affine set needs one rhs per row".into()));
                }
                for r in rows {
                    dim(r.len())?;
                }
                let x0 = self.project(space, &space.zeros())?;
                let a = affine_matrix(rows, n);
                let resid = (&a * &x0 - Vector::from_column_slice(rhs)).amax();
                if resid > 1e-8 * (1.0 + rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs()))) {
                    return Err(Error::Validation("inconsistent affine constraints".into()));
                }
            }
            ConvexSet::Singleton { point } => dim(point.len())?,
        }
        if self.params().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("convex set parameters"));
        }
        Ok(())
    }

    fn params(&self) -> Box<dyn Iterator<Item = f64> + '_> {
        match self {
            ConvexSet::Box { lower, upper } => Box::new(lower.iter().chain(upper).copied()),
            ConvexSet::Ball { center, radius } => {
                Box::new(center.iter().copied().chain(std::iter::once(*radius)))
            }
            ConvexSet::Halfspace { normal, offset } => {
                Box::new(normal.iter().copied().chain(std::iter::once(*offset)))
            }
            ConvexSet::Affine { rows, rhs } => {
                Box::new(rows.iter().flatten().chain(rhs.iter()).copied())
            }
            ConvexSet::Singleton { point } => Box::new(point.iter().copied()),
        }
    }

    /// Metric projection onto the set.
    pub fn project(&self, space: &Space, x: &Vector) -> Result<Vector> {
        space.check(x)?;
        Ok(match self {
            ConvexSet::Box { lower, upper } => Vector::from_iterator(
                x.len(),
                x.iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(v, (l, u))| v.max(*l).min(*u)),
            ),
            ConvexSet::Ball { center, radius } => {
                let c = Vector::from_column_slice(center);
                let d = x - &c;
                let n = space.norm_of(&d);
                if n <= *radius {
                    x.clone()
                } else {
                    c + d * (radius / n)
                }
            }
            ConvexSet::Halfspace { normal, offset } => {
                let a = Vector::from_column_slice(normal);
                let excess = space.dot(&a, x) - offset;
                if excess <= 0.0 {
                    x.clone()
                } else {
                    x - a.clone() * (excess / space.norm_sq(&a))
                }
            }
            ConvexSet::Affine { rows, rhs } => {
                let a = affine_matrix(rows, space.dim());
                let b = Vector::from_column_slice(rhs);
                x - affine_correction(space, &a, &(&a * x - b))?
            }
            ConvexSet::Singleton { point } => Vector::from_column_slice(point),
        })
    }

    pub fn contains(&self, space: &Space, x: &Vector, tol: f64) -> Result<bool> {
        let p = self.project(space, x)?;
        Ok(space.dist_of(&p, x) <= tol * (1.0 + space.norm_of(x)))
    }

    pub fn distance(&self, space: &Space, x: &Vector) -> Result<f64> {
        let p = self.project(space, x)?;
        Ok(space.dist_of(&p, x))
    }

    /// Support function `sup_{c in C} <u, c>` in the metric of `space`.
    pub fn support(&self, space: &Space, u: &Vector) -> Result<f64> {
        space.check(u)?;
        Ok(match self {
            ConvexSet::Box { lower, upper } => {
                let mut total = 0.0;
                for i in 0..u.len() {
                    let s = space.weights()[i] * u[i];
                    if s > 0.0 {
                        total += s * upper[i];
                    } else if s < 0.0 {
                        total += s * lower[i];
                    }
                }
                total
            }
            ConvexSet::Ball { center, radius } => {
                space.dot(u, &Vector::from_column_slice(center)) + radius * space.norm_of(u)
            }
            ConvexSet::Singleton { point } => space.dot(u, &Vector::from_column_slice(point)),
            ConvexSet::Halfspace { normal, offset } => {
                let a = Vector::from_column_slice(normal);
                let t = space.dot(u, &a) / space.norm_sq(&a);
                let off_axis = space.norm_of(&(u - &a * t));
                if t >= -MEMBERSHIP_TOL && off_axis <= MEMBERSHIP_TOL * (1.0 + space.norm_of(u)) {
                    t.max(0.0) * offset
                } else {
                    f64::INFINITY
                }
            }
            ConvexSet::Affine { rows, .. } => {
                // finite only when u is orthogonal to ker A
                let a = affine_matrix(rows, space.dim());
                let kernel_part = u - affine_correction(space, &a, &(&a * u))?;
                if space.norm_of(&kernel_part) <= MEMBERSHIP_TOL * (1.0 + space.norm_of(u)) {
                    let x0 = self.project(space, &space.zeros())?;
                    space.dot(u, &x0)
                } else {
                    f64::INFINITY
                }
            }
        })
    }
}

fn affine_matrix(rows: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j])
}

/// `W^{-1} A^T (A W^{-1} A^T)^+ r`, the metric minimum-norm correction `d`
/// with `A d = r` (in the least-squares sense).
pub(crate) fn affine_correction(space: &Space, a: &DMatrix<f64>, r: &Vector) -> Result<Vector> {
    let mut a_winv = a.clone();
    for (j, mut col) in a_winv.column_iter_mut().enumerate() {
        col /= space.weights()[j];
    }
    let s = &a_winv * a.transpose();
    let eps = 1e-12 * (1.0 + s.amax());
    let lambda = s
        .svd(true, true)
        .solve(r, eps)
        .map_err(|e| Error::Singular(e.to_string()))?;
    Ok(a_winv.tr_mul(&lambda))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScaleDomain {
    /// Closed-form resolvents for every `gamma > 0`.
    All,
    /// Only `gamma = gamma0` is meaningful for this family.
    Fixed(f64),
}

impl ScaleDomain {
    pub fn check(&self, gamma: f64) -> Result<()> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {gamma}")));
        }
        match *self {
            ScaleDomain::All => Ok(()),
            ScaleDomain::Fixed(g0) if (gamma - g0).abs() <= SCALE_MATCH_TOL * g0 => Ok(()),
            ScaleDomain::Fixed(g0) => Err(Error::ScaleRestriction { gamma, fixed: g0 }),
        }
    }

    pub fn inverted(&self) -> ScaleDomain {
        match *self {
            ScaleDomain::All => ScaleDomain::All,
            ScaleDomain::Fixed(g0) => ScaleDomain::Fixed(1.0 / g0),
        }
    }

    /// The scale two families can both be evaluated at, if any.
    pub fn meet(&self, other: &ScaleDomain) -> Result<ScaleDomain> {
        match (*self, *other) {
            (ScaleDomain::All, d) | (d, ScaleDomain::All) => Ok(d),
            (ScaleDomain::Fixed(a), ScaleDomain::Fixed(b)) => {
                ScaleDomain::Fixed(a).check(b)?;
                Ok(ScaleDomain::Fixed(a))
            }
        }
    }

    pub fn contains(&self, gamma: f64) -> bool {
        self.check(gamma).is_ok()
    }
}

pub type MapFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;

/// Monotone linear operator `x -> M x` with pre-factored resolvents.
#[derive(Clone)]
pub struct LinearMonotone {
    matrix: DMatrix<f64>,
    factors: Vec<(f64, LU<f64, Dyn, Dyn>)>,
}

impl fmt::Debug for LinearMonotone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearMonotone")
            .field("matrix", &self.matrix)
            .field("factored_scales", &self.factors.iter().map(|(g, _)| *g).collect::<Vec<_>>())
            .finish()
    }
}

impl LinearMonotone {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    fn solve(&self, gamma: f64, y: &Vector) -> Result<Vector> {
        let n = self.matrix.nrows();
        let cached = self
            .factors
            .iter()
            .find(|(g, _)| (g - gamma).abs() <= SCALE_MATCH_TOL * g)
            .map(|(_, lu)| lu.solve(y));
        let solved = match cached {
            Some(s) => s,
            None => (DMatrix::identity(n, n) + &self.matrix * gamma).lu().solve(y),
        };
        solved.ok_or_else(|| Error::Singular("Id + gamma M".into()))
    }
}

/// Data of an operator `B = (Id - F + p)^{-1} - Id` built from a firmly
/// nonexpansive `F`, whose resolvent is `Id - F + p`.
#[derive(Clone)]
pub struct Wiener {
    map: MapFn,
    shift: Vector,
}

impl fmt::Debug for Wiener {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Wiener").field("shift", &self.shift).finish_non_exhaustive()
    }
}

impl Wiener {
    pub fn apply_map(&self, y: &Vector) -> Vector {
        (self.map)(y)
    }

    pub fn shift(&self) -> &Vector {
        &self.shift
    }
}

/// Block-diagonal operator on a weighted product space.
#[derive(Clone, Debug)]
pub struct ProductOperator {
    blocks: Vec<ResolventFamily>,
    offsets: Vec<usize>,
}

impl ProductOperator {
    pub fn blocks(&self) -> &[ResolventFamily] {
        &self.blocks
    }

    pub(crate) fn split<'a>(&'a self, y: &'a Vector) -> impl Iterator<Item = Vector> + 'a {
        self.blocks.iter().zip(&self.offsets).map(move |(b, &o)| {
            Vector::from_iterator(b.space.dim(), y.rows(o, b.space.dim()).iter().copied())
        })
    }
}

#[derive(Clone, Debug)]
pub enum OperatorKind {
    Zero,
    /// `c Id` with `c >= 0`.
    ScaledIdentity(f64),
    NormalCone(ConvexSet),
    Linear(LinearMonotone),
    Subdifferential(ProxFunction),
    Wiener(Wiener),
    Composed(ComposedOperator),
    Inverse(Arc<ResolventFamily>),
    Product(Arc<ProductOperator>),
}

/// A maximally monotone operator given by its resolvents.
#[derive(Clone, Debug)]
pub struct ResolventFamily {
    space: Space,
    kind: OperatorKind,
    scale: ScaleDomain,
}

/// A candidate pair `(x, x*)` of the graph of an operator.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphPoint {
    pub x: Vector,
    pub xstar: Vector,
}

impl ResolventFamily {
    pub fn zero(space: &Space) -> Self {
        Self::from_parts(space.clone(), OperatorKind::Zero, ScaleDomain::All)
    }

    pub fn identity(space: &Space) -> Self {
        Self::from_parts(space.clone(), OperatorKind::ScaledIdentity(1.0), ScaleDomain::All)
    }

    pub fn scaled_identity(space: &Space, c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::Validation(format!(
                "c Id is monotone only for c >= 0, got {c}"
            )));
        }
        Ok(Self::from_parts(space.clone(), OperatorKind::ScaledIdentity(c), ScaleDomain::All))
    }

    pub fn normal_cone(space: &Space, set: ConvexSet) -> Result<Self> {
        set.validate(space)?;
        Ok(Self::from_parts(space.clone(), OperatorKind::NormalCone(set), ScaleDomain::All))
    }

    /// `x -> M x` for a matrix `M` that is monotone in the metric of
    /// `space` (`W M + M^T W` positive semidefinite). Resolvents at the
    /// scales in `prefactor` are LU-factored here.
    pub fn linear(space: &Space, matrix: DMatrix<f64>, prefactor: &[f64]) -> Result<Self> {
        let n = space.dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: matrix.nrows().max(matrix.ncols()),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear operator"));
        }
        let mut wm = matrix.clone();
        for (i, mut row) in wm.row_iter_mut().enumerate() {
            row *= space.weights()[i];
        }
        let sym = (&wm + wm.transpose()) * 0.5;
        let min_eig = sym.symmetric_eigenvalues().min();
        if min_eig < -1e-10 * (1.0 + sym.amax()) {
            return Err(Error::Validation(format!(
                "linear operator is not monotone (min eigenvalue {min_eig:e})"
            )));
        }
        let mut factors = Vec::new();
        for &g in prefactor {
            ScaleDomain::All.check(g)?;
            factors.push((g, (DMatrix::identity(n, n) + &matrix * g).lu()));
        }
        Ok(Self::from_parts(
            space.clone(),
            OperatorKind::Linear(LinearMonotone { matrix, factors }),
            ScaleDomain::All,
        ))
    }

    pub fn subdifferential(g: &ProxFunction) -> Self {
        Self::from_parts(
            g.space().clone(),
            OperatorKind::Subdifferential(g.clone()),
            g.scale_domain(),
        )
    }

    /// Builds `B = (Id - F + p)^{-1} - Id`, pinned to scale 1, after
    /// spot-checking that `F` is firmly nonexpansive.
    pub fn make_wiener(space: &Space, map: MapFn, shift: Vector) -> Result<Self> {
        space.check(&shift)?;
        check_firmly_nonexpansive(space, &*map)?;
        Ok(Self::from_parts(
            space.clone(),
            OperatorKind::Wiener(Wiener { map, shift }),
            ScaleDomain::Fixed(1.0),
        ))
    }

    /// Block-diagonal `B(y) = B_1 y_1 x ... x B_p y_p` on the weighted
    /// product of the block spaces.
    pub fn product(blocks: Vec<ResolventFamily>, omega: &[f64]) -> Result<Self> {
        let spaces: Vec<Space> = blocks.iter().map(|b| b.space.clone()).collect();
        let space = Space::product(&spaces, omega)?;
        let mut scale = ScaleDomain::All;
        for b in &blocks {
            scale = scale.meet(&b.scale)?;
        }
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut o = 0;
        for s in &spaces {
            offsets.push(o);
            o += s.dim();
        }
        Ok(Self::from_parts(
            space,
            OperatorKind::Product(Arc::new(ProductOperator { blocks, offsets })),
            scale,
        ))
    }

    pub(crate) fn from_parts(space: Space, kind: OperatorKind, scale: ScaleDomain) -> Self {
        Self { space, kind, scale }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    pub fn scale_domain(&self) -> ScaleDomain {
        self.scale
    }

    /// A scale at which this family can be evaluated (1 when unrestricted).
    pub fn native_scale(&self) -> f64 {
        match self.scale {
            ScaleDomain::All => 1.0,
            ScaleDomain::Fixed(g) => g,
        }
    }

    /// The inverse operator `B^{-1}`, whose resolvents come from
    /// `J_{gamma B^{-1}} x = x - gamma J_{B/gamma}(x / gamma)`.
    pub fn inverse(&self) -> ResolventFamily {
        if let OperatorKind::Inverse(inner) = &self.kind {
            return (**inner).clone();
        }
        Self::from_parts(
            self.space.clone(),
            OperatorKind::Inverse(Arc::new(self.clone())),
            self.scale.inverted(),
        )
    }

    /// `J_{gamma B}(y)`.
    pub fn resolvent(&self, gamma: f64, y: &Vector) -> Result<Vector> {
        self.scale.check(gamma)?;
        self.space.check(y)?;
        self.resolvent_raw(gamma, y)
    }

    pub(crate) fn resolvent_raw(&self, gamma: f64, y: &Vector) -> Result<Vector> {
        match &self.kind {
            OperatorKind::Zero => Ok(y.clone()),
            OperatorKind::ScaledIdentity(c) => Ok(y / (1.0 + gamma * c)),
            OperatorKind::NormalCone(set) => set.project(&self.space, y),
            OperatorKind::Linear(m) => m.solve(gamma, y),
            OperatorKind::Subdifferential(g) => g.prox_raw(gamma, y),
            OperatorKind::Wiener(w) => Ok(y - w.apply_map(y) + &w.shift),
            OperatorKind::Composed(c) => c.resolvent_raw(y),
            OperatorKind::Inverse(b) => {
                let inner = b.resolvent_raw(1.0 / gamma, &(y / gamma))?;
                Ok(y - inner * gamma)
            }
            OperatorKind::Product(p) => {
                let mut out = Vec::with_capacity(y.len());
                for (b, yk) in p.blocks.iter().zip(p.split(y)) {
                    out.extend(b.resolvent_raw(gamma, &yk)?.iter().copied());
                }
                Ok(Vector::from_vec(out))
            }
        }
    }

    /// Yosida approximation `(x - J_{gamma B} x) / gamma`.
    pub fn yosida(&self, gamma: f64, x: &Vector) -> Result<Vector> {
        let j = self.resolvent(gamma, x)?;
        Ok((x - j) / gamma)
    }

    /// `J_{gamma B^{-1}}(x) = x - gamma J_{B/gamma}(x / gamma)`.
    pub fn inverse_resolvent(&self, gamma: f64, x: &Vector) -> Result<Vector> {
        self.inverse().resolvent(gamma, x)
    }

    /// Whether `x* in B x`, tested through `x = J_B(x + x*)`. Families
    /// pinned to a scale `gamma0` test the graph of `gamma0 B`.
    pub fn graph_contains(&self, point: &GraphPoint, tol: f64) -> Result<bool> {
        self.graph_contains_at(self.native_scale(), point, tol)
    }

    /// Membership in the graph of `gamma B`.
    pub fn graph_contains_at(&self, gamma: f64, point: &GraphPoint, tol: f64) -> Result<bool> {
        let z = &point.x + &point.xstar;
        let j = self.resolvent(gamma, &z)?;
        Ok(self.space.dist_of(&point.x, &j) <= tol)
    }

    /// Pairs `(J_B z, z - J_B z)` for Gaussian `z`; they always lie in the
    /// graph of `B` (of `gamma0 B` for families pinned to `gamma0`).
    pub fn sample_graph(&self, n: usize, seed: u64) -> Result<Vec<GraphPoint>> {
        self.sample_graph_at(self.native_scale(), n, seed, 3.0)
    }

    /// Graph samples of `gamma B` with `z` drawn at the given spread.
    pub fn sample_graph_at(
        &self,
        gamma: f64,
        n: usize,
        seed: u64,
        spread: f64,
    ) -> Result<Vec<GraphPoint>> {
        self.scale.check(gamma)?;
        let mut rng = random::seeded(seed);
        (0..n)
            .map(|_| {
                let z = random::gaussian_vector(&mut rng, self.space.dim(), spread);
                let x = self.resolvent_raw(gamma, &z)?;
                let xstar = &z - &x;
                Ok(GraphPoint { x, xstar })
            })
            .collect()
    }

    /// For a Wiener operator, `(F, p)`.
    pub fn wiener_parts(&self) -> Option<&Wiener> {
        match &self.kind {
            OperatorKind::Wiener(w) => Some(w),
            _ => None,
        }
    }
}

/// Largest violation of `||Tx-Ty||^2 + ||(x-Tx)-(y-Ty)||^2 <= ||x-y||^2`
/// (positive means violated).
pub fn firm_nonexpansiveness_defect(space: &Space, x: &Vector, y: &Vector, tx: &Vector, ty: &Vector) -> f64 {
    let d = x - y;
    let dt = tx - ty;
    let dr = &d - &dt;
    space.norm_sq(&dt) + space.norm_sq(&dr) - space.norm_sq(&d)
}

fn check_firmly_nonexpansive(space: &Space, map: &(dyn Fn(&Vector) -> Vector + Send + Sync)) -> Result<()> {
    let mut rng = random::seeded(FNE_SPOT_SEED);
    for i in 0..FNE_SPOT_CHECKS {
        let spread = if i % 2 == 0 { 1.0 } else { 10.0 };
        let x = random::gaussian_vector(&mut rng, space.dim(), spread);
        let y = random::gaussian_vector(&mut rng, space.dim(), spread);
        let (tx, ty) = (map(&x), map(&y));
        space.check(&tx)?;
        space.check(&ty)?;
        let defect = firm_nonexpansiveness_defect(space, &x, &y, &tx, &ty);
        if defect > FNE_SPOT_TOL * space.norm_sq(&(&x - &y)).max(1.0) {
            return Err(Error::Validation(format!(
                "map is not firmly nonexpansive (defect {defect:e} on sample {i})"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    fn r1() -> Space {
        Space::euclidean(1).unwrap()
    }

    #[test]
    fn resolvent_examples() {
        let s = r1();
        let id = ResolventFamily::identity(&s);
        assert_eq!(id.resolvent(1.0, &dvector![3.0]).unwrap(), dvector![1.5]);

        let cone = ResolventFamily::normal_cone(&s, ConvexSet::interval(0.0, 1.0)).unwrap();
        for g in [0.1, 1.0, 7.0] {
            assert_eq!(cone.resolvent(g, &dvector![2.5]).unwrap(), dvector![1.0]);
        }

        let half: MapFn = Arc::new(|y: &Vector| y * 0.5);
        let w = ResolventFamily::make_wiener(&s, half, dvector![0.0]).unwrap();
        assert_eq!(w.resolvent(1.0, &dvector![4.0]).unwrap(), dvector![2.0]);
    }

    #[test]
    fn scale_restriction() {
        let s = r1();
        let half: MapFn = Arc::new(|y: &Vector| y * 0.5);
        let w = ResolventFamily::make_wiener(&s, half, dvector![1.0]).unwrap();
        assert!(matches!(
            w.resolvent(2.0, &dvector![4.0]),
            Err(Error::ScaleRestriction { .. })
        ));
        assert_eq!(w.resolvent(1.0, &dvector![4.0]).unwrap(), dvector![3.0]);
        assert!(ResolventFamily::identity(&s).resolvent(0.0, &dvector![1.0]).is_err());
    }

    #[test]
    fn yosida_examples() {
        let s = Space::euclidean(2).unwrap();
        let id = ResolventFamily::identity(&s);
        let x = dvector![2.0, -4.0];
        assert_eq!(id.yosida(1.0, &x).unwrap(), dvector![1.0, -2.0]);
        let p = dvector![0.5, 1.0];
        let pt = ResolventFamily::normal_cone(&s, ConvexSet::singleton(&[0.5, 1.0])).unwrap();
        assert_eq!(pt.yosida(1.0, &x).unwrap(), &x - &p);

        let one = r1();
        let id1 = ResolventFamily::identity(&one);
        assert!((id1.yosida(2.0, &dvector![6.0]).unwrap()[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn inverse_resolvent_examples() {
        let s = r1();
        let id = ResolventFamily::identity(&s);
        assert_eq!(id.inverse_resolvent(1.0, &dvector![3.0]).unwrap(), dvector![1.5]);

        let three = ResolventFamily::scaled_identity(&s, 3.0).unwrap();
        let via_inverse = three.inverse_resolvent(2.0, &dvector![5.0]).unwrap();
        let closed = ResolventFamily::scaled_identity(&s, 1.0 / 3.0)
            .unwrap()
            .resolvent(2.0, &dvector![5.0])
            .unwrap();
        assert!((via_inverse[0] - 3.0).abs() < 1e-14);
        assert!((closed[0] - 3.0).abs() < 1e-14);

        let origin = ResolventFamily::normal_cone(&s, ConvexSet::singleton(&[0.0])).unwrap();
        assert_eq!(origin.inverse_resolvent(1.0, &dvector![-7.0]).unwrap(), dvector![-7.0]);
        assert!(matches!(origin.inverse().inverse().kind(), OperatorKind::NormalCone(_)));
    }

    #[test]
    fn graph_membership() {
        let s = r1();
        let id = ResolventFamily::identity(&s);
        let x = dvector![1.3];
        assert!(id.graph_contains(&GraphPoint { x: x.clone(), xstar: x.clone() }, 1e-12).unwrap());
        assert!(!id.graph_contains(&GraphPoint { x: x.clone(), xstar: &x * 2.0 }, 1e-12).unwrap());
        let cone = ResolventFamily::normal_cone(&s, ConvexSet::interval(0.0, 1.0)).unwrap();
        let p = GraphPoint {
            x: dvector![1.0],
            xstar: dvector![5.0],
        };
        assert!(cone.graph_contains(&p, 1e-12).unwrap());
    }

    #[test]
    fn sample_graph_examples() {
        let s = Space::weighted(vec![1.0, 2.0, 0.5]).unwrap();
        let id = ResolventFamily::identity(&s);
        for gp in id.sample_graph(20, 3).unwrap() {
            assert!((&gp.x - &gp.xstar).amax() < 1e-14);
        }
        let origin =
            ResolventFamily::normal_cone(&s, ConvexSet::singleton(&[0.0, 0.0, 0.0])).unwrap();
        for gp in origin.sample_graph(20, 4).unwrap() {
            assert_eq!(gp.x, s.zeros());
        }
        let ball = ResolventFamily::normal_cone(
            &s,
            ConvexSet::Ball {
                center: vec![1.0, 0.0, 0.0],
                radius: 0.5,
            },
        )
        .unwrap();
        for gp in ball.sample_graph(50, 5).unwrap() {
            assert!(ball.graph_contains(&gp, 1e-10).unwrap());
        }
    }

    #[test]
    fn wiener_examples() {
        let s = Space::euclidean(1).unwrap();
        let idmap: MapFn = Arc::new(|y: &Vector| y.clone());
        let w = ResolventFamily::make_wiener(&s, idmap, dvector![0.0]).unwrap();
        assert_eq!(w.resolvent(1.0, &dvector![9.0]).unwrap(), dvector![0.0]);

        let proj: MapFn = Arc::new(|y: &Vector| y.map(|v| v.clamp(0.0, 1.0)));
        let w = ResolventFamily::make_wiener(&s, proj, dvector![0.5]).unwrap();
        // the zero of B is the fixed point of J_B
        let z = dvector![0.5];
        assert!((w.resolvent(1.0, &z).unwrap() - &z).amax() < 1e-15);
        assert!((w.resolvent(1.0, &dvector![0.9]).unwrap() - dvector![0.9]).amax() > 0.1);
    }

    #[test]
    fn wiener_rejects_expansive_map() {
        let s = Space::euclidean(2).unwrap();
        let doubling: MapFn = Arc::new(|y: &Vector| y * 2.0);
        assert!(matches!(
            ResolventFamily::make_wiener(&s, doubling, dvector![0.0, 0.0]),
            Err(Error::Validation(_))
        ));
        // reflection is nonexpansive but not firmly so
        let reflect: MapFn = Arc::new(|y: &Vector| -y);
        assert!(ResolventFamily::make_wiener(&s, reflect, dvector![0.0, 0.0]).is_err());
    }

    #[test]
    fn linear_operator_resolvent() {
        let s = Space::euclidean(2).unwrap();
        // rotation generator: skew, monotone
        let m = dmatrix![1.0, -2.0; 2.0, 1.0];
        let b = ResolventFamily::linear(&s, m.clone(), &[1.0]).unwrap();
        let y = dvector![1.0, 2.0];
        for g in [1.0, 0.3] {
            let x = b.resolvent(g, &y).unwrap();
            let back = &x + &m * &x * g;
            assert!((back - &y).amax() < 1e-13);
        }
        assert!(ResolventFamily::linear(&s, dmatrix![-1.0, 0.0; 0.0, 1.0], &[]).is_err());
    }

    #[test]
    fn convex_set_projections() {
        let s = Space::weighted(vec![1.0, 4.0]).unwrap();
        let half = ConvexSet::Halfspace {
            normal: vec![1.0, 1.0],
            offset: 1.0,
        };
        let x = dvector![3.0, 3.0];
        let p = half.project(&s, &x).unwrap();
        assert!((s.dot(&dvector![1.0, 1.0], &p) - 1.0).abs() < 1e-13);
        // residual is metric-parallel to the normal
        let r = &x - &p;
        assert!((r[0] - r[1]).abs() < 1e-13);

        let aff = ConvexSet::Affine {
            rows: vec![vec![1.0, 1.0]],
            rhs: vec![2.0],
        };
        aff.validate(&s).unwrap();
        let p = aff.project(&s, &dvector![0.0, 0.0]).unwrap();
        assert!((p[0] + p[1] - 2.0).abs() < 1e-13);
        // metric-weighted: the heavier coordinate moves less
        assert!(p[0] > p[1]);

        let bad = ConvexSet::Affine {
            rows: vec![vec![1.0, 1.0], vec![2.0, 2.0]],
            rhs: vec![1.0, 3.0],
        };
        assert!(bad.validate(&s).is_err());
    }

    #[test]
    fn support_functions() {
        let s = Space::euclidean(2).unwrap();
        let b = ConvexSet::Box {
            lower: vec![-1.0, 0.0],
            upper: vec![1.0, 2.0],
        };
        assert_eq!(b.support(&s, &dvector![3.0, -1.0]).unwrap(), 3.0);
        let h = ConvexSet::Halfspace {
            normal: vec![0.0, 1.0],
            offset: 2.0,
        };
        assert_eq!(h.support(&s, &dvector![0.0, 3.0]).unwrap(), 6.0);
        assert_eq!(h.support(&s, &dvector![1.0, 3.0]).unwrap(), f64::INFINITY);
    }
}
