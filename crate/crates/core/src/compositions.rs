//! Resolvent compositions `L ◑ B`, cocompositions `L ◐ B` and resolvent
//! mixtures of monotone operators.
//!
//! A composed operator built at scale `gamma` is the operator whose
//! resolvent is `L* J_{gamma B} L` (resp. `Id - L*L + L* J_{gamma B} L`).
//! As a [`ResolventFamily`] it is pinned to that single scale: its
//! resolvent at `gamma` is the map above.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{check_weights, stack, LinearMap, Space, Vector};
use crate::operators::{GraphPoint, OperatorKind, ResolventFamily, ScaleDomain};
use crate::random;

/// Slack allowed on `||L|| <= 1` before a construction is rejected.
pub const NORM_GATE_SLACK: f64 = 1e-9;
pub const CHAIN_PROBES: usize = 100;
pub const CHAIN_TOL: f64 = 1e-12;
pub const CHAIN_SEED: u64 = 0xc4a1;

/// Whether constructors reject maps with `||L|| > 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NormPolicy {
    #[default]
    Enforce,
    /// Skip the norm gate. The result need not be monotone.
    Unchecked,
}

pub(crate) fn check_norm_gate(norm: f64, policy: NormPolicy) -> Result<()> {
    if policy == NormPolicy::Enforce && norm > 1.0 + NORM_GATE_SLACK {
        return Err(Error::ContractionCondition {
            value: norm,
            limit: 1.0,
        });
    }
    Ok(())
}

/// Checks `sum_k omega_k ||L_k||^2 <= 1` and returns its square root, a
/// bound on the norm of the stacked map.
pub(crate) fn check_mixture_gate(maps: &[LinearMap], omega: &[f64], policy: NormPolicy) -> Result<f64> {
    if maps.is_empty() {
        return Err(Error::InvalidArgument("mixture needs at least one block".into()));
    }
    if maps.len() != omega.len() {
        return Err(Error::DimensionMismatch {
            expected: maps.len(),
            got: omega.len(),
        });
    }
    check_weights(omega)?;
    let total: f64 = maps
        .iter()
        .zip(omega)
        .map(|(l, w)| w * l.op_norm().powi(2))
        .sum();
    if policy == NormPolicy::Enforce && total > 1.0 + NORM_GATE_SLACK {
        return Err(Error::ContractionCondition {
            value: total,
            limit: 1.0,
        });
    }
    Ok(total.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Composition,
    Cocomposition,
    Mixture,
    MultivariateMixture,
}

struct Construction {
    variant: Variant,
    /// For mixtures, the stacked (or block) map into the product space.
    map: LinearMap,
    /// For mixtures, the block-diagonal product operator.
    inner: ResolventFamily,
    gamma: f64,
    norm_certificate: f64,
}

#[derive(Clone)]
pub struct ComposedOperator(Arc<Construction>);

impl fmt::Debug for ComposedOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ComposedOperator")
            .field("variant", &self.0.variant)
            .field("gamma", &self.0.gamma)
            .field("norm_certificate", &self.0.norm_certificate)
            .field("domain_dim", &self.0.map.domain().dim())
            .field("inner_dim", &self.0.map.codomain().dim())
            .finish()
    }
}

impl ComposedOperator {
    fn build(variant: Variant, map: LinearMap, inner: ResolventFamily, gamma: f64, norm_certificate: f64) -> Result<Self> {
        map.codomain().ensure_same(inner.space(), "map codomain vs inner operator")?;
        inner.scale_domain().check(gamma)?;
        Ok(Self(Arc::new(Construction {
            variant,
            map,
            inner,
            gamma,
            norm_certificate,
        })))
    }

    pub fn variant(&self) -> Variant {
        self.0.variant
    }

    pub fn map(&self) -> &LinearMap {
        &self.0.map
    }

    pub fn inner(&self) -> &ResolventFamily {
        &self.0.inner
    }

    pub fn gamma(&self) -> f64 {
        self.0.gamma
    }

    /// Upper bound on `||L||` recorded at construction.
    pub fn norm_certificate(&self) -> f64 {
        self.0.norm_certificate
    }

    pub fn space(&self) -> &Space {
        self.0.map.domain()
    }

    /// Whether the construction guarantees a firmly nonexpansive resolvent.
    pub fn is_certified(&self) -> bool {
        self.0.norm_certificate <= 1.0 + NORM_GATE_SLACK
    }

    /// The resolvent `L* J_{gamma B} L` (or its cocomposition form).
    pub fn resolvent(&self, x: &Vector) -> Result<Vector> {
        self.space().check(x)?;
        self.resolvent_raw(x)
    }

    pub(crate) fn resolvent_raw(&self, x: &Vector) -> Result<Vector> {
        let c = &*self.0;
        let lx = c.map.apply_raw(x);
        let j = c.inner.resolvent_raw(c.gamma, &lx)?;
        Ok(match c.variant {
            Variant::Cocomposition => x - c.map.adjoint_raw(&(lx - j)),
            _ => c.map.adjoint_raw(&j),
        })
    }

    /// This operator as a resolvent family pinned to its construction scale.
    pub fn family(&self) -> ResolventFamily {
        ResolventFamily::from_parts(
            self.space().clone(),
            OperatorKind::Composed(self.clone()),
            ScaleDomain::Fixed(self.0.gamma),
        )
    }
}

/// `L ◑ (gamma B)`, with resolvent `x -> L* J_{gamma B}(L x)`.
pub fn resolvent_composition(map: &LinearMap, b: &ResolventFamily, gamma: f64, policy: NormPolicy) -> Result<ComposedOperator> {
    check_norm_gate(map.op_norm(), policy)?;
    ComposedOperator::build(Variant::Composition, map.clone(), b.clone(), gamma, map.op_norm())
}

/// `L ◐ (gamma B)`, with resolvent `x -> x - L*L x + L* J_{gamma B}(L x)`.
pub fn resolvent_cocomposition(map: &LinearMap, b: &ResolventFamily, gamma: f64, policy: NormPolicy) -> Result<ComposedOperator> {
    check_norm_gate(map.op_norm(), policy)?;
    ComposedOperator::build(Variant::Cocomposition, map.clone(), b.clone(), gamma, map.op_norm())
}

/// Resolvent mixture with resolvent `sum_k omega_k L_k* J_{gamma B_k} L_k`,
/// realized as the composition of the stacked map with the product
/// operator on the `omega`-weighted product space.
pub fn resolvent_mixture(
    bs: &[ResolventFamily],
    maps: &[LinearMap],
    omega: &[f64],
    gamma: f64,
    policy: NormPolicy,
) -> Result<ComposedOperator> {
    if bs.len() != maps.len() {
        return Err(Error::DimensionMismatch {
            expected: maps.len(),
            got: bs.len(),
        });
    }
    let certificate = check_mixture_gate(maps, omega, policy)?;
    let stacked = stack(maps, omega)?;
    let product = ResolventFamily::product(bs.to_vec(), omega)?;
    ComposedOperator::build(Variant::Mixture, stacked, product, gamma, certificate)
}

/// The map `x -> (sum_i L_{ki} x_i)_k` from the unweighted product of
/// `domains` into the `omega`-weighted product of the blocks' codomains.
/// `blocks[k][i]` maps `domains[i]` into the `k`-th factor.
pub fn block_map(domains: &[Space], blocks: &[Vec<LinearMap>], omega: &[f64]) -> Result<LinearMap> {
    if domains.is_empty() || blocks.is_empty() {
        return Err(Error::InvalidArgument("block map needs at least one block".into()));
    }
    let ones = vec![1.0; domains.len()];
    let domain = Space::product(domains, &ones)?;
    let mut codomains = Vec::with_capacity(blocks.len());
    for row in blocks {
        if row.len() != domains.len() {
            return Err(Error::DimensionMismatch {
                expected: domains.len(),
                got: row.len(),
            });
        }
        let g = row[0].codomain().clone();
        for (l, h) in row.iter().zip(domains) {
            l.domain().ensure_same(h, "block map domain")?;
            l.codomain().ensure_same(&g, "block map row codomain")?;
        }
        codomains.push(g);
    }
    let codomain = Space::product(&codomains, omega)?;
    let mut matrix = DMatrix::zeros(codomain.dim(), domain.dim());
    let mut r = 0;
    for row in blocks {
        let mut c = 0;
        for l in row {
            let m = l.matrix();
            matrix.view_mut((r, c), (m.nrows(), m.ncols())).copy_from(m);
            c += m.ncols();
        }
        r += row[0].codomain().dim();
    }
    LinearMap::new(domain, codomain, matrix)
}

/// Multivariate resolvent mixture: `L ◑ (gamma B)` with `L` the block map
/// of `blocks` and `B = B_1 x ... x B_p`.
pub fn resolvent_mixture_multivariate(
    bs: &[ResolventFamily],
    domains: &[Space],
    blocks: &[Vec<LinearMap>],
    omega: &[f64],
    gamma: f64,
    policy: NormPolicy,
) -> Result<ComposedOperator> {
    if bs.len() != blocks.len() {
        return Err(Error::DimensionMismatch {
            expected: blocks.len(),
            got: bs.len(),
        });
    }
    let map = block_map(domains, blocks, omega)?;
    check_norm_gate(map.op_norm(), policy)?;
    let product = ResolventFamily::product(bs.to_vec(), omega)?;
    let norm = map.op_norm();
    ComposedOperator::build(Variant::MultivariateMixture, map, product, gamma, norm)
}

/// Builds `(L o Q) ◑ B` and checks on fixed-seed probes that it agrees with
/// `Q ◑ (L ◑ B)`. Both are taken at the native scale of `B`.
pub fn compose_chain(q: &LinearMap, l: &LinearMap, b: &ResolventFamily) -> Result<ComposedOperator> {
    let gamma = b.native_scale();
    let inner = resolvent_composition(l, b, gamma, NormPolicy::Enforce)?;
    let nested = resolvent_composition(q, &inner.family(), gamma, NormPolicy::Enforce)?;
    let lq = l.compose(q)?;
    let direct = resolvent_composition(&lq, b, gamma, NormPolicy::Enforce)?;
    let space = q.domain();
    let mut rng = random::seeded(CHAIN_SEED);
    for _ in 0..CHAIN_PROBES {
        let x = random::gaussian_vector(&mut rng, space.dim(), 1.0);
        let a = nested.resolvent_raw(&x)?;
        let d = direct.resolvent_raw(&x)?;
        let gap = space.dist_of(&a, &d);
        if gap > CHAIN_TOL * (1.0 + space.norm_of(&x)) {
            return Err(Error::Consistency(format!(
                "chained compositions disagree by {gap:e}"
            )));
        }
    }
    Ok(direct)
}

/// Whether `(x, x*)` lies in the graph of the composed operator
/// `L ◑ (gamma B)` (resp. `L ◐ (gamma B)`).
pub fn graph_contains_composed(a: &ComposedOperator, point: &GraphPoint, tol: f64) -> Result<bool> {
    Ok(graph_defect_composed(a, point)? <= tol)
}

/// The residual tested by [`graph_contains_composed`]:
/// `||x - L* J(L(x + x*))||` for compositions and
/// `||L*L(x + x*) - x* - L* J(L(x + x*))||` for cocompositions.
pub fn graph_defect_composed(a: &ComposedOperator, point: &GraphPoint) -> Result<f64> {
    let space = a.space();
    space.check(&point.x)?;
    space.check(&point.xstar)?;
    let z = &point.x + &point.xstar;
    let lz = a.map().apply_raw(&z);
    let lstar_j = a.map().adjoint_raw(&a.inner().resolvent_raw(a.gamma(), &lz)?);
    Ok(match a.variant() {
        Variant::Cocomposition => space.norm_of(&(a.map().adjoint_raw(&lz) - &point.xstar - lstar_j)),
        _ => space.dist_of(&point.x, &lstar_j),
    })
}

/// Strong monotonicity modulus `beta = (alpha + 1) / ||L||^2 - 1` of
/// `L ◑ B` when `B` is `alpha`-strongly monotone.
pub fn strong_monotonicity_modulus(alpha: f64, norm_l: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be nonnegative, got {alpha}")));
    }
    if !(norm_l > 0.0 && norm_l <= 1.0 + NORM_GATE_SLACK) {
        return Err(Error::InvalidArgument(format!("||L|| must lie in (0, 1], got {norm_l}")));
    }
    if alpha == 0.0 && norm_l >= 1.0 {
        return Err(Error::NoGuarantee);
    }
    Ok((alpha + 1.0) / (norm_l * norm_l) - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::ConvexSet;
    use nalgebra::{dmatrix, dvector};

    fn r1() -> Space {
        Space::euclidean(1).unwrap()
    }

    #[test]
    fn half_identity_composition_is_seven_id() {
        let s = r1();
        let l = LinearMap::scaled_identity(&s, 0.5);
        let a = resolvent_composition(&l, &ResolventFamily::identity(&s), 1.0, NormPolicy::Enforce).unwrap();
        let j = a.resolvent(&dvector![8.0]).unwrap();
        assert!((j[0] - 1.0).abs() < 1e-15);
        let p = GraphPoint {
            x: dvector![1.0],
            xstar: dvector![7.0],
        };
        assert!(graph_contains_composed(&a, &p, 1e-12).unwrap());
        assert!(a.family().graph_contains(&p, 1e-12).unwrap());
    }

    #[test]
    fn identity_map_leaves_operator_unchanged() {
        let s = Space::euclidean(2).unwrap();
        let b = ResolventFamily::normal_cone(&s, ConvexSet::Ball {
            center: vec![1.0, 0.0],
            radius: 0.5,
        })
        .unwrap();
        let a = resolvent_composition(&LinearMap::identity(&s), &b, 1.0, NormPolicy::Enforce).unwrap();
        let x = dvector![3.0, -2.0];
        assert_eq!(a.resolvent(&x).unwrap(), b.resolvent(1.0, &x).unwrap());
    }

    #[test]
    fn surjective_isometry_conjugates() {
        let s = Space::euclidean(2).unwrap();
        let rot = LinearMap::new(s.clone(), s.clone(), dmatrix![0.0, -1.0; 1.0, 0.0]).unwrap();
        let b = ResolventFamily::linear(&s, dmatrix![2.0, 0.0; 0.0, 0.5], &[]).unwrap();
        let a = resolvent_composition(&rot, &b, 1.0, NormPolicy::Enforce).unwrap();
        let x = dvector![1.0, 2.0];
        let expected = rot.adjoint_apply(&b.resolvent(1.0, &rot.apply(&x).unwrap()).unwrap()).unwrap();
        assert!((a.resolvent(&x).unwrap() - expected).amax() < 1e-15);
    }

    #[test]
    fn norm_gate() {
        let s = r1();
        let l = LinearMap::scaled_identity(&s, 1.5);
        let b = ResolventFamily::identity(&s);
        assert!(matches!(
            resolvent_composition(&l, &b, 1.0, NormPolicy::Enforce),
            Err(Error::ContractionCondition { .. })
        ));
        let a = resolvent_composition(&l, &b, 1.0, NormPolicy::Unchecked).unwrap();
        assert!(!a.is_certified());
    }

    #[test]
    fn cocomposition_examples() {
        let s = Space::euclidean(2).unwrap();
        let p = LinearMap::new(s.clone(), s.clone(), dmatrix![1.0, 0.0; 0.0, 0.0]).unwrap();
        let origin = ResolventFamily::normal_cone(&s, ConvexSet::singleton(&[0.0, 0.0])).unwrap();
        let a = resolvent_cocomposition(&p, &origin, 1.0, NormPolicy::Enforce).unwrap();
        assert_eq!(a.resolvent(&dvector![3.0, 4.0]).unwrap(), dvector![0.0, 4.0]);

        let zero = ResolventFamily::zero(&s);
        let half = LinearMap::scaled_identity(&s, 0.5);
        let a = resolvent_cocomposition(&half, &zero, 1.0, NormPolicy::Enforce).unwrap();
        let x = dvector![-1.0, 2.5];
        assert!((a.resolvent(&x).unwrap() - &x).amax() < 1e-15);
    }

    #[test]
    fn mixture_of_identity_and_origin_cone() {
        let s = r1();
        let id = LinearMap::identity(&s);
        let bs = [
            ResolventFamily::zero(&s),
            ResolventFamily::normal_cone(&s, ConvexSet::singleton(&[0.0])).unwrap(),
        ];
        let a = resolvent_mixture(&bs, &[id.clone(), id], &[0.5, 0.5], 1.0, NormPolicy::Enforce).unwrap();
        assert_eq!(a.resolvent(&dvector![4.0]).unwrap(), dvector![2.0]);
        // J = Id/2, so the operator is Id
        let p = GraphPoint {
            x: dvector![3.0],
            xstar: dvector![3.0],
        };
        assert!(graph_contains_composed(&a, &p, 1e-12).unwrap());
    }

    #[test]
    fn single_block_mixture_is_composition() {
        let s = Space::euclidean(2).unwrap();
        let l = LinearMap::new(s.clone(), s.clone(), dmatrix![0.6, 0.0; 0.2, 0.5]).unwrap();
        let b = ResolventFamily::scaled_identity(&s, 3.0).unwrap();
        let m = resolvent_mixture(std::slice::from_ref(&b), std::slice::from_ref(&l), &[1.0], 1.0, NormPolicy::Enforce).unwrap();
        let c = resolvent_composition(&l, &b, 1.0, NormPolicy::Enforce).unwrap();
        let x = dvector![1.0, -4.0];
        assert!((m.resolvent(&x).unwrap() - c.resolvent(&x).unwrap()).amax() < 1e-14);
    }

    #[test]
    fn multivariate_mixture_matches_blockwise_formula() {
        let h1 = r1();
        let h2 = Space::euclidean(2).unwrap();
        let g = Space::euclidean(2).unwrap();
        let l11 = LinearMap::new(h1.clone(), g.clone(), dmatrix![0.3; 0.1]).unwrap();
        let l12 = LinearMap::new(h2.clone(), g.clone(), dmatrix![0.2, -0.1; 0.0, 0.4]).unwrap();
        let b = ResolventFamily::normal_cone(&g, ConvexSet::Box {
            lower: vec![-0.1, 0.0],
            upper: vec![0.1, 0.2],
        })
        .unwrap();
        let omega = [0.8];
        let a = resolvent_mixture_multivariate(
            std::slice::from_ref(&b),
            &[h1.clone(), h2.clone()],
            &[vec![l11.clone(), l12.clone()]],
            &omega,
            1.0,
            NormPolicy::Enforce,
        )
        .unwrap();
        let x1 = dvector![2.0];
        let x2 = dvector![1.0, -3.0];
        let y = l11.apply(&x1).unwrap() + l12.apply(&x2).unwrap();
        let j = b.resolvent(1.0, &y).unwrap();
        let out1 = l11.adjoint_apply(&j).unwrap() * omega[0];
        let out2 = l12.adjoint_apply(&j).unwrap() * omega[0];
        let got = a.resolvent(&dvector![2.0, 1.0, -3.0]).unwrap();
        assert!((got[0] - out1[0]).abs() < 1e-14);
        assert!((got.rows(1, 2) - out2).amax() < 1e-14);
    }

    #[test]
    fn chain_examples() {
        let s = r1();
        let half = LinearMap::scaled_identity(&s, 0.5);
        let a = compose_chain(&half, &half, &ResolventFamily::identity(&s)).unwrap();
        let j = a.resolvent(&dvector![32.0]).unwrap();
        assert!((j[0] - 1.0).abs() < 1e-15);

        let e2 = Space::euclidean(2).unwrap();
        let id = LinearMap::identity(&e2);
        let b = ResolventFamily::scaled_identity(&e2, 2.0).unwrap();
        let a = compose_chain(&id, &id, &b).unwrap();
        let x = dvector![3.0, 6.0];
        assert_eq!(a.resolvent(&x).unwrap(), b.resolvent(1.0, &x).unwrap());
    }

    #[test]
    fn scale_is_pinned() {
        let s = r1();
        let b = ResolventFamily::identity(&s);
        let a = resolvent_composition(&LinearMap::identity(&s), &b, 2.0, NormPolicy::Enforce).unwrap();
        let fam = a.family();
        assert!(fam.resolvent(2.0, &dvector![3.0]).is_ok());
        assert!(matches!(fam.resolvent(1.0, &dvector![3.0]), Err(Error::ScaleRestriction { .. })));
        // resolvent at the pinned scale is J_{2 Id} = Id/3
        assert!((fam.resolvent(2.0, &dvector![3.0]).unwrap()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn modulus_examples() {
        assert_eq!(strong_monotonicity_modulus(0.0, 0.5).unwrap(), 3.0);
        assert_eq!(strong_monotonicity_modulus(1.0, 1.0).unwrap(), 1.0);
        let b = strong_monotonicity_modulus(3.0, 1.0 / 2f64.sqrt()).unwrap();
        assert!((b - 7.0).abs() < 1e-12);
        assert_eq!(strong_monotonicity_modulus(0.0, 1.0), Err(Error::NoGuarantee));
        assert!(strong_monotonicity_modulus(1.0, 0.0).is_err());
        assert!(strong_monotonicity_modulus(1.0, 1.5).is_err());
    }
}
