//! Proper lower semicontinuous convex functions, represented by their
//! proximity operators `prox_{gamma g}` and (when known) a value oracle.
//!
//! Function values are extended reals: `f64::INFINITY` encodes `+inf`
//! (indicators outside their set, conjugates outside their domain).
//!
//! Proximity operators are taken with respect to the metric of the
//! function's [`Space`], i.e.
//! `prox_{gamma g}(x) = argmin_z g(z) + ||x - z||_W^2 / (2 gamma)`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::compositions::{check_mixture_gate, check_norm_gate, NormPolicy};
use crate::error::{Error, Result};
use crate::hilbert::{LinearMap, Space, Vector};
use crate::operators::{affine_correction, ConvexSet, ScaleDomain, MEMBERSHIP_TOL};
use crate::solvers::{proximal_point, Relaxation, Schedule, Termination, TraceOptions};

/// `x -> 1/2 <Q x, x> - <b, x>` in the metric of the space; `Q` must be
/// self-adjoint and positive semidefinite in that metric.
#[derive(Clone, Debug)]
pub struct Quadratic {
    q: DMatrix<f64>,
    b: Vector,
}

impl Quadratic {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn linear_term(&self) -> &Vector {
        &self.b
    }
}

/// `y -> sum_k omega_k g_k(y_k)` on a weighted product space.
#[derive(Clone, Debug)]
pub struct SeparableSum {
    parts: Vec<ProxFunction>,
    omega: Vec<f64>,
    offsets: Vec<usize>,
}

impl SeparableSum {
    pub fn parts(&self) -> &[ProxFunction] {
        &self.parts
    }

    pub fn weights(&self) -> &[f64] {
        &self.omega
    }

    fn split<'a>(&'a self, y: &'a Vector) -> impl Iterator<Item = (&'a ProxFunction, Vector)> + 'a {
        self.parts.iter().zip(&self.offsets).map(move |(g, &o)| {
            let n = g.space.dim();
            (g, Vector::from_iterator(n, y.rows(o, n).iter().copied()))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProxVariant {
    Composition,
    Cocomposition,
}

/// Proximal composition `L ◑ g` or cocomposition `L ◐ g`, pinned to one
/// scale `gamma0` (its prox at `gamma0` is `L* prox_{gamma0 g} L`, resp.
/// `Id - L*L + L* prox_{gamma0 g} L`).
#[derive(Clone, Debug)]
pub struct ProxComposition {
    variant: ProxVariant,
    map: LinearMap,
    inner: ProxFunction,
    gamma: f64,
}

#[derive(Clone, Debug)]
pub enum FunctionKind {
    Indicator(ConvexSet),
    /// `c sum_i |x_i|`.
    AbsSum(f64),
    Quadratic(Quadratic),
    /// `||x - p||^2 / 2`.
    HalfSqDist(Vector),
    Conjugate(Arc<ProxFunction>),
    Separable(Arc<SeparableSum>),
    Composed(Arc<ProxComposition>),
}

#[derive(Clone, Debug)]
pub struct ProxFunction {
    space: Space,
    kind: FunctionKind,
    scale: ScaleDomain,
}

impl ProxFunction {
    pub fn indicator(space: &Space, set: ConvexSet) -> Result<Self> {
        set.validate(space)?;
        Ok(Self::unrestricted(space, FunctionKind::Indicator(set)))
    }

    pub fn abs_sum(space: &Space, coefficient: f64) -> Result<Self> {
        if !(coefficient.is_finite() && coefficient >= 0.0) {
            return Err(Error::Validation(format!(
                "l1 coefficient must be nonnegative, got {coefficient}"
            )));
        }
        Ok(Self::unrestricted(space, FunctionKind::AbsSum(coefficient)))
    }

    /// `1/2 <Q x, x> - <b, x>` with metric scalar products.
    pub fn quadratic(space: &Space, q: DMatrix<f64>, b: Vector) -> Result<Self> {
        let n = space.dim();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: q.nrows().max(q.ncols()),
            });
        }
        space.check(&b)?;
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("quadratic form"));
        }
        let mut wq = q.clone();
        for (i, mut row) in wq.row_iter_mut().enumerate() {
            row *= space.weights()[i];
        }
        let scale = 1.0 + wq.amax();
        if (&wq - wq.transpose()).amax() > 1e-10 * scale {
            return Err(Error::Validation("Q is not self-adjoint in the metric".into()));
        }
        let sym = (&wq + wq.transpose()) * 0.5;
        if sym.symmetric_eigenvalues().min() < -1e-10 * scale {
            return Err(Error::Validation("Q is not positive semidefinite".into()));
        }
        Ok(Self::unrestricted(space, FunctionKind::Quadratic(Quadratic { q, b })))
    }

    pub fn half_sq_dist(space: &Space, p: Vector) -> Result<Self> {
        space.check(&p)?;
        Ok(Self::unrestricted(space, FunctionKind::HalfSqDist(p)))
    }

    /// The canonical quadratic `||x||^2 / 2`.
    pub fn half_sq_norm(space: &Space) -> Self {
        Self::unrestricted(space, FunctionKind::HalfSqDist(space.zeros()))
    }

    /// The Fenchel conjugate `g*`.
    pub fn conjugate(&self) -> ProxFunction {
        if let FunctionKind::Conjugate(inner) = &self.kind {
            return (**inner).clone();
        }
        Self {
            space: self.space.clone(),
            kind: FunctionKind::Conjugate(Arc::new(self.clone())),
            scale: self.scale.inverted(),
        }
    }

    /// `y -> sum_k omega_k g_k(y_k)` on the product of the parts' spaces
    /// weighted by `omega`. Its prox acts blockwise.
    pub fn separable(parts: Vec<ProxFunction>, omega: &[f64]) -> Result<Self> {
        let spaces: Vec<Space> = parts.iter().map(|g| g.space.clone()).collect();
        let space = Space::product(&spaces, omega)?;
        let mut scale = ScaleDomain::All;
        for g in &parts {
            scale = scale.meet(&g.scale)?;
        }
        let mut offsets = Vec::with_capacity(parts.len());
        let mut o = 0;
        for s in &spaces {
            offsets.push(o);
            o += s.dim();
        }
        Ok(Self {
            space,
            kind: FunctionKind::Separable(Arc::new(SeparableSum {
                parts,
                omega: omega.to_vec(),
                offsets,
            })),
            scale,
        })
    }

    /// Proximal composition `L ◑ (gamma g)`, available at scale `gamma`.
    pub fn composition(map: &LinearMap, g: &ProxFunction, gamma: f64, policy: NormPolicy) -> Result<Self> {
        Self::composed(ProxVariant::Composition, map, g, gamma, policy)
    }

    /// Proximal cocomposition `L ◐ (gamma g)`, available at scale `gamma`.
    pub fn cocomposition(map: &LinearMap, g: &ProxFunction, gamma: f64, policy: NormPolicy) -> Result<Self> {
        Self::composed(ProxVariant::Cocomposition, map, g, gamma, policy)
    }

    fn composed(
        variant: ProxVariant,
        map: &LinearMap,
        g: &ProxFunction,
        gamma: f64,
        policy: NormPolicy,
    ) -> Result<Self> {
        map.codomain().ensure_same(&g.space, "proximal composition")?;
        check_norm_gate(map.op_norm(), policy)?;
        g.scale.check(gamma)?;
        Ok(Self {
            space: map.domain().clone(),
            kind: FunctionKind::Composed(Arc::new(ProxComposition {
                variant,
                map: map.clone(),
                inner: g.clone(),
                gamma,
            })),
            scale: ScaleDomain::Fixed(gamma),
        })
    }

    fn unrestricted(space: &Space, kind: FunctionKind) -> Self {
        Self {
            space: space.clone(),
            kind,
            scale: ScaleDomain::All,
        }
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn kind(&self) -> &FunctionKind {
        &self.kind
    }

    pub fn scale_domain(&self) -> ScaleDomain {
        self.scale
    }

    pub fn prox(&self, gamma: f64, x: &Vector) -> Result<Vector> {
        self.scale.check(gamma)?;
        self.space.check(x)?;
        self.prox_raw(gamma, x)
    }

    pub(crate) fn prox_raw(&self, gamma: f64, x: &Vector) -> Result<Vector> {
        match &self.kind {
            FunctionKind::Indicator(set) => set.project(&self.space, x),
            FunctionKind::AbsSum(c) => Ok(Vector::from_iterator(
                x.len(),
                x.iter().zip(self.space.weights()).map(|(v, w)| {
                    let t = gamma * c / w;
                    v.signum() * (v.abs() - t).max(0.0)
                }),
            )),
            FunctionKind::Quadratic(qf) => {
                let n = self.space.dim();
                let lhs = DMatrix::identity(n, n) + &qf.q * gamma;
                lhs.lu()
                    .solve(&(x + &qf.b * gamma))
                    .ok_or_else(|| Error::Singular("Id + gamma Q".into()))
            }
            FunctionKind::HalfSqDist(p) => Ok((x + p * gamma) / (1.0 + gamma)),
            FunctionKind::Conjugate(g) => {
                let inner = g.prox_raw(1.0 / gamma, &(x / gamma))?;
                Ok(x - inner * gamma)
            }
            FunctionKind::Separable(sum) => {
                let mut out = Vec::with_capacity(x.len());
                for (g, xk) in sum.split(x) {
                    out.extend(g.prox_raw(gamma, &xk)?.iter().copied());
                }
                Ok(Vector::from_vec(out))
            }
            FunctionKind::Composed(c) => {
                let lx = c.map.apply_raw(x);
                let p = c.inner.prox_raw(c.gamma, &lx)?;
                Ok(match c.variant {
                    ProxVariant::Composition => c.map.adjoint_raw(&p),
                    ProxVariant::Cocomposition => x - c.map.adjoint_raw(&(lx - p)),
                })
            }
        }
    }

    pub fn has_value_oracle(&self) -> bool {
        match &self.kind {
            FunctionKind::Composed(_) => false,
            FunctionKind::Conjugate(g) => g.has_conjugate_oracle(),
            FunctionKind::Separable(s) => s.parts.iter().all(|g| g.has_value_oracle()),
            _ => true,
        }
    }

    fn has_conjugate_oracle(&self) -> bool {
        match &self.kind {
            FunctionKind::Composed(_) => false,
            FunctionKind::Conjugate(g) => g.has_value_oracle(),
            FunctionKind::Separable(s) => s.parts.iter().all(|g| g.has_conjugate_oracle()),
            _ => true,
        }
    }

    /// `g(x)`, with `+inf` outside the domain.
    pub fn value(&self, x: &Vector) -> Result<f64> {
        self.space.check(x)?;
        let s = &self.space;
        match &self.kind {
            FunctionKind::Indicator(set) => Ok(if set.contains(s, x, MEMBERSHIP_TOL)? {
                0.0
            } else {
                f64::INFINITY
            }),
            FunctionKind::AbsSum(c) => Ok(c * x.iter().map(|v| v.abs()).sum::<f64>()),
            FunctionKind::Quadratic(qf) => Ok(0.5 * s.dot(&(&qf.q * x), x) - s.dot(&qf.b, x)),
            FunctionKind::HalfSqDist(p) => Ok(s.half_sq_norm(&(x - p))),
            FunctionKind::Conjugate(g) => g.conjugate_value(x),
            FunctionKind::Separable(sum) => {
                let mut total = 0.0;
                for ((g, xk), w) in sum.split(x).zip(&sum.omega) {
                    total += w * g.value(&xk)?;
                }
                Ok(total)
            }
            FunctionKind::Composed(_) => Err(Error::MissingValueOracle(
                "proximal composition (use proximal_composition_value)".into(),
            )),
        }
    }

    /// `g*(u) = sup_x <u, x> - g(x)` for catalog entries with known
    /// conjugates.
    pub fn conjugate_value(&self, u: &Vector) -> Result<f64> {
        self.space.check(u)?;
        let s = &self.space;
        match &self.kind {
            FunctionKind::Indicator(set) => set.support(s, u),
            FunctionKind::AbsSum(c) => {
                // g* is the indicator of the box |u_i| <= c / w_i
                let inside = u
                    .iter()
                    .zip(s.weights())
                    .all(|(v, w)| (w * v).abs() <= c + MEMBERSHIP_TOL * (1.0 + c));
                Ok(if inside { 0.0 } else { f64::INFINITY })
            }
            FunctionKind::Quadratic(qf) => {
                let rhs = u + &qf.b;
                let svd = qf.q.clone().svd(true, true);
                let x = svd
                    .solve(&rhs, 1e-12 * (1.0 + qf.q.amax()))
                    .map_err(|e| Error::Singular(e.to_string()))?;
                let resid = (&qf.q * &x - &rhs).amax();
                if resid > 1e-9 * (1.0 + rhs.amax()) {
                    Ok(f64::INFINITY)
                } else {
                    Ok(0.5 * s.dot(&rhs, &x))
                }
            }
            FunctionKind::HalfSqDist(p) => Ok(s.half_sq_norm(u) + s.dot(u, p)),
            FunctionKind::Conjugate(g) => g.value(u),
            FunctionKind::Separable(sum) => {
                // (sum_k omega_k g_k)* on the weighted product is
                // sum_k omega_k g_k*
                let mut total = 0.0;
                for ((g, uk), w) in sum.split(u).zip(&sum.omega) {
                    total += w * g.conjugate_value(&uk)?;
                }
                Ok(total)
            }
            FunctionKind::Composed(_) => Err(Error::MissingValueOracle(
                "conjugate of a proximal composition".into(),
            )),
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")))
    }
}

/// `prox_{gamma g}(x)`.
pub fn prox(g: &ProxFunction, gamma: f64, x: &Vector) -> Result<Vector> {
    check_gamma(gamma)?;
    g.prox(gamma, x)
}

/// `prox_{gamma g*}(x) = x - gamma prox_{g / gamma}(x / gamma)`.
pub fn conjugate_prox(g: &ProxFunction, gamma: f64, x: &Vector) -> Result<Vector> {
    check_gamma(gamma)?;
    g.conjugate().prox(gamma, x)
}

/// Moreau envelope `g(p) + ||x - p||^2 / (2 gamma)` at `p = prox_{gamma g} x`.
pub fn moreau_envelope(g: &ProxFunction, gamma: f64, x: &Vector) -> Result<f64> {
    check_gamma(gamma)?;
    if !g.has_value_oracle() {
        return Err(Error::MissingValueOracle(format!("{:?}", g.kind)));
    }
    let p = g.prox(gamma, x)?;
    let gp = g.value(&p)?;
    Ok(gp + g.space.norm_sq(&(x - &p)) / (2.0 * gamma))
}

/// Gradient of the Moreau envelope, `(x - prox_{gamma g} x) / gamma`.
pub fn moreau_envelope_gradient(g: &ProxFunction, gamma: f64, x: &Vector) -> Result<Vector> {
    check_gamma(gamma)?;
    let p = g.prox(gamma, x)?;
    Ok((x - p) / gamma)
}

fn check_prox_map(map: &LinearMap, g: &ProxFunction) -> Result<()> {
    map.codomain().ensure_same(g.space(), "map codomain vs function space")?;
    if map.op_norm() <= 0.0 {
        return Err(Error::ContractionCondition {
            value: 0.0,
            limit: 0.0,
        });
    }
    check_norm_gate(map.op_norm(), NormPolicy::Enforce)
}

/// `prox_{L ◑ g}(x) = L* prox_g(L x)`.
pub fn proximal_composition_prox(map: &LinearMap, g: &ProxFunction, x: &Vector) -> Result<Vector> {
    check_prox_map(map, g)?;
    let lx = map.apply(x)?;
    Ok(map.adjoint_raw(&g.prox(1.0, &lx)?))
}

/// `prox_{L ◐ g}(x) = x - L*L x + L* prox_g(L x)`.
pub fn proximal_cocomposition_prox(map: &LinearMap, g: &ProxFunction, x: &Vector) -> Result<Vector> {
    check_prox_map(map, g)?;
    let lx = map.apply(x)?;
    let p = g.prox(1.0, &lx)?;
    Ok(x - map.adjoint_raw(&(lx - p)))
}

/// `sum_k omega_k L_k* prox_{g_k}(L_k x)`, the prox of the proximal mixture.
pub fn proximal_mixture_prox(
    gs: &[ProxFunction],
    maps: &[LinearMap],
    omega: &[f64],
    x: &Vector,
) -> Result<Vector> {
    if gs.len() != maps.len() {
        return Err(Error::DimensionMismatch {
            expected: maps.len(),
            got: gs.len(),
        });
    }
    check_mixture_gate(maps, omega, NormPolicy::Enforce)?;
    let domain = maps[0].domain();
    domain.check(x)?;
    let mut out = domain.zeros();
    for ((g, l), w) in gs.iter().zip(maps).zip(omega) {
        l.codomain().ensure_same(g.space(), "mixture block")?;
        let p = g.prox(1.0, &l.apply_raw(x))?;
        out.axpy(*w, &l.adjoint_raw(&p), 1.0);
    }
    Ok(out)
}

/// Iteration cap of the inner solver behind [`proximal_composition_value`].
pub const COMPOSITION_VALUE_MAX_ITER: usize = 200_000;

/// Value of the proximal composition,
/// `(L ◑ g)(x) = min { g(y) + ||y||^2/2 : L* y = x } - ||x||^2/2`.
///
/// The constrained minimization runs Douglas–Rachford splitting between
/// `g + ||.||^2/2` and the affine set `{L* y = x}` (a proximal point
/// iteration on the Douglas–Rachford operator) until the fixed-point
/// residual drops below `inner_tol`. Returns `+inf` when `x` is not in the
/// range of `L*`.
pub fn proximal_composition_value(map: &LinearMap, g: &ProxFunction, x: &Vector, inner_tol: f64) -> Result<f64> {
    check_prox_map(map, g)?;
    if !g.has_value_oracle() {
        return Err(Error::MissingValueOracle(format!("{:?}", g.kind)));
    }
    if !(inner_tol.is_finite() && inner_tol > 0.0) {
        return Err(Error::InvalidArgument(format!("inner tolerance {inner_tol}")));
    }
    let h = map.domain();
    let gs = map.codomain();
    h.check(x)?;

    // constraint K y = x with K = L* in coordinates
    let k = map.adjoint_matrix();
    let project_affine = |y: &Vector| -> Result<Vector> {
        Ok(y - affine_correction(gs, &k, &(&k * y - x))?)
    };
    let y0 = project_affine(&gs.zeros())?;
    if h.norm_of(&(&k * &y0 - x)) > 1e-8 * (1.0 + h.norm_of(x)) {
        return Ok(f64::INFINITY);
    }

    // prox of tau (g + Q) at z is prox_{tau/(1+tau) g}(z / (1 + tau)), tau = 1
    let prox_f1 = |z: &Vector| g.prox_raw(0.5, &(z * 0.5));
    let dr = |z: &Vector| -> Result<Vector> {
        let y1 = prox_f1(z)?;
        let y2 = project_affine(&(&y1 * 2.0 - z))?;
        Ok(z + y2 - y1)
    };
    let schedule = Schedule {
        relaxation: Relaxation::Constant(1.0),
        max_iterations: COMPOSITION_VALUE_MAX_ITER,
        tol: inner_tol,
    };
    let start = project_affine(&map.apply_raw(x))?;
    let (z, trace) = proximal_point(dr, gs, &start, &schedule, None, &TraceOptions::quiet())?;
    if trace.termination != Termination::Converged {
        return Err(Error::NonConvergence {
            iterations: trace.iterations,
            residual: trace.final_residual(),
        });
    }
    let y1 = prox_f1(&z)?;
    let y2 = project_affine(&(&y1 * 2.0 - &z))?;
    let objective = |y: &Vector| -> Result<f64> { Ok(g.value(y)? + gs.half_sq_norm(y)) };
    // the affine point is exactly feasible; fall back to the prox point when
    // it leaves dom g
    let at_feasible = objective(&y2)?;
    let value = if at_feasible.is_finite() {
        at_feasible
    } else {
        objective(&y1)?
    };
    Ok(value - h.half_sq_norm(x))
}
