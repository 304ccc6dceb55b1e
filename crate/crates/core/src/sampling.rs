//! Random spaces, maps, sets, operators and functions drawn from the
//! catalog, used by the property suites and by random instance generation.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::Result;
use crate::hilbert::{LinearMap, Space, Vector};
use crate::operators::{ConvexSet, ResolventFamily};
use crate::proxfun::ProxFunction;
use crate::random::{gaussian_matrix, gaussian_vector, positive_weights, random_orthogonal};

pub fn random_dim<R: Rng + ?Sized>(rng: &mut R) -> usize {
    rng.random_range(1..=4)
}

/// Euclidean half of the time, otherwise weights in `[0.5, 2]`.
pub fn random_space<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Space {
    if rng.random_bool(0.5) {
        Space::euclidean(dim).expect("positive dimension")
    } else {
        Space::weighted(positive_weights(rng, dim, 0.5, 2.0)).expect("positive weights")
    }
}

/// Gaussian map rescaled to have operator norm `norm`.
pub fn random_map<R: Rng + ?Sized>(rng: &mut R, h: &Space, g: &Space, norm: f64) -> Result<LinearMap> {
    loop {
        let l = LinearMap::new(h.clone(), g.clone(), gaussian_matrix(rng, g.dim(), h.dim()))?;
        if l.op_norm() > 1e-3 {
            return l.scaled(norm / l.op_norm());
        }
    }
}

/// Random map with norm drawn uniformly from `[0.2, 1]`.
pub fn random_contraction<R: Rng + ?Sized>(rng: &mut R, h: &Space, g: &Space) -> Result<LinearMap> {
    let norm = rng.random_range(0.2..=1.0);
    random_map(rng, h, g, norm)
}

/// A map with `L* L = Id` in the metrics of `h` and `g`
/// (`g.dim() >= h.dim()`).
pub fn random_isometry<R: Rng + ?Sized>(rng: &mut R, h: &Space, g: &Space) -> Result<LinearMap> {
    let q = random_orthogonal(rng, g.dim());
    let mut m = q.columns(0, h.dim()).into_owned();
    for (i, mut row) in m.row_iter_mut().enumerate() {
        row /= g.weights()[i].sqrt();
    }
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col *= h.weights()[j].sqrt();
    }
    LinearMap::new(h.clone(), g.clone(), m)
}

/// `L = W_G^{-1/2} U diag(s) V^T W_H^{1/2}` with metric singular values
/// `s` drawn from `[lo, hi]`; injective when `g.dim() >= h.dim()`.
pub fn random_conditioned_map<R: Rng + ?Sized>(rng: &mut R, h: &Space, g: &Space, lo: f64, hi: f64) -> Result<LinearMap> {
    let (n, m) = (h.dim(), g.dim());
    let k = n.min(m);
    let u = random_orthogonal(rng, m);
    let v = random_orthogonal(rng, n);
    let mut core = DMatrix::zeros(m, n);
    for i in 0..k {
        core[(i, i)] = rng.random_range(lo..=hi);
    }
    let mut a = u * core * v.transpose();
    for (i, mut row) in a.row_iter_mut().enumerate() {
        row /= g.weights()[i].sqrt();
    }
    for (j, mut col) in a.column_iter_mut().enumerate() {
        col *= h.weights()[j].sqrt();
    }
    LinearMap::new(h.clone(), g.clone(), a)
}

/// Convex weights drawn uniformly from `[0.2, 1]` and normalized.
pub fn random_simplex_weights<R: Rng + ?Sized>(rng: &mut R, p: usize) -> Vec<f64> {
    let w = positive_weights(rng, p, 0.2, 1.0);
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// A random catalog set that contains `point`.
pub fn random_set_containing<R: Rng + ?Sized>(rng: &mut R, space: &Space, point: &Vector) -> ConvexSet {
    let n = space.dim();
    let pt: Vec<f64> = point.iter().copied().collect();
    let v = |rng: &mut R| gaussian_vector(rng, n, 1.0);
    match rng.random_range(0..5) {
        0 => ConvexSet::Box {
            lower: pt.iter().map(|x| x - rng.random_range(0.0..1.0)).collect(),
            upper: pt.iter().map(|x| x + rng.random_range(0.0..1.0)).collect(),
        },
        1 => {
            let r = rng.random_range(0.1..2.0);
            let d = v(rng);
            let d = &d * (rng.random_range(0.0..r) / space.norm_of(&d).max(1e-12));
            ConvexSet::Ball {
                center: (point + d).iter().copied().collect(),
                radius: r,
            }
        }
        2 => {
            let a = v(rng);
            let offset = space.dot(&a, point) + rng.random_range(0.0..1.0);
            ConvexSet::Halfspace {
                normal: a.iter().copied().collect(),
                offset,
            }
        }
        3 => {
            let a = v(rng);
            ConvexSet::Affine {
                rhs: vec![a.dot(point)],
                rows: vec![a.iter().copied().collect()],
            }
        }
        _ => ConvexSet::Singleton { point: pt },
    }
}

pub fn random_set<R: Rng + ?Sized>(rng: &mut R, space: &Space) -> ConvexSet {
    let n = space.dim();
    let v = |rng: &mut R| gaussian_vector(rng, n, 1.0).iter().copied().collect::<Vec<_>>();
    match rng.random_range(0..5) {
        0 => {
            let a = v(rng);
            let b = v(rng);
            ConvexSet::Box {
                lower: a.iter().zip(&b).map(|(x, y)| x.min(*y)).collect(),
                upper: a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect(),
            }
        }
        1 => ConvexSet::Ball {
            center: v(rng),
            radius: rng.random_range(0.1..2.0),
        },
        2 => ConvexSet::Halfspace {
            normal: v(rng),
            offset: rng.random_range(-1.0..1.0),
        },
        3 => ConvexSet::Affine {
            rows: vec![v(rng)],
            rhs: vec![rng.random_range(-1.0..1.0)],
        },
        _ => ConvexSet::Singleton { point: v(rng) },
    }
}

/// `M = W^{-1}(S + K)` with `S` positive semidefinite and `K` skew, which
/// is monotone in the metric `W`. `S` is shifted by `floor Id`.
pub fn random_monotone_matrix<R: Rng + ?Sized>(rng: &mut R, space: &Space, floor: f64) -> DMatrix<f64> {
    let n = space.dim();
    let a = gaussian_matrix(rng, n, n);
    let k = gaussian_matrix(rng, n, n);
    let mut m = &a * a.transpose() * 0.5 + (&k - k.transpose()) * 0.5 + DMatrix::identity(n, n) * floor;
    for (i, mut row) in m.row_iter_mut().enumerate() {
        row /= space.weights()[i];
    }
    m
}

/// `Q = W^{-1} S` with `S` symmetric positive semidefinite plus `floor Id`.
pub fn random_quadratic_matrix<R: Rng + ?Sized>(rng: &mut R, space: &Space, floor: f64) -> DMatrix<f64> {
    let n = space.dim();
    let a = gaussian_matrix(rng, n, n);
    let mut q = &a * a.transpose() * 0.5 + DMatrix::identity(n, n) * floor;
    for (i, mut row) in q.row_iter_mut().enumerate() {
        row /= space.weights()[i];
    }
    q
}

pub fn random_function<R: Rng + ?Sized>(rng: &mut R, space: &Space) -> Result<ProxFunction> {
    let n = space.dim();
    match rng.random_range(0..4) {
        0 => ProxFunction::indicator(space, random_set(rng, space)),
        1 => ProxFunction::abs_sum(space, rng.random_range(0.1..2.0)),
        2 => {
            let q = random_quadratic_matrix(rng, space, 0.0);
            ProxFunction::quadratic(space, q, gaussian_vector(rng, n, 1.0))
        }
        _ => ProxFunction::half_sq_dist(space, gaussian_vector(rng, n, 1.0)),
    }
}

pub fn random_operator<R: Rng + ?Sized>(rng: &mut R, space: &Space) -> Result<ResolventFamily> {
    match rng.random_range(0..5) {
        0 => Ok(ResolventFamily::zero(space)),
        1 => ResolventFamily::scaled_identity(space, rng.random_range(0.0..3.0)),
        2 => ResolventFamily::normal_cone(space, random_set(rng, space)),
        3 => ResolventFamily::linear(space, random_monotone_matrix(rng, space, 0.0), &[]),
        _ => Ok(ResolventFamily::subdifferential(&random_function(rng, space)?)),
    }
}

/// Random point, scaled so that typical draws straddle the sets above.
pub fn random_point<R: Rng + ?Sized>(rng: &mut R, space: &Space) -> Vector {
    gaussian_vector(rng, space.dim(), 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::seeded;

    #[test]
    fn isometries_are_isometries() {
        let mut rng = seeded(3);
        for _ in 0..20 {
            let h = random_space(&mut rng, 2);
            let g = random_space(&mut rng, 3);
            let l = random_isometry(&mut rng, &h, &g).unwrap();
            assert!(l.isometry_defect() < 1e-12);
            assert!((l.op_norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn maps_have_requested_norm() {
        let mut rng = seeded(4);
        let h = random_space(&mut rng, 3);
        let g = random_space(&mut rng, 2);
        let l = random_map(&mut rng, &h, &g, 0.7).unwrap();
        assert!((l.op_norm() - 0.7).abs() < 1e-9);
    }

    #[test]
    fn conditioned_maps_have_bounded_spectrum() {
        let mut rng = seeded(6);
        for _ in 0..20 {
            let h = random_space(&mut rng, 3);
            let g = random_space(&mut rng, 4);
            let l = random_conditioned_map(&mut rng, &h, &g, 0.5, 0.9).unwrap();
            assert!(l.op_norm() <= 0.9 + 1e-9 && l.op_norm() >= 0.5 - 1e-9);
            let x = random_point(&mut rng, &h);
            let lx = l.apply(&x).unwrap();
            assert!(g.norm_of(&lx) >= 0.5 * h.norm_of(&x) - 1e-9);
        }
    }

    #[test]
    fn sets_contain_their_point() {
        let mut rng = seeded(7);
        for _ in 0..200 {
            let s = random_space(&mut rng, 3);
            let x = random_point(&mut rng, &s);
            let c = random_set_containing(&mut rng, &s, &x);
            assert!(c.contains(&s, &x, 1e-9).unwrap(), "{c:?}");
        }
    }

    #[test]
    fn catalog_draws_are_valid() {
        let mut rng = seeded(5);
        for _ in 0..200 {
            let n = random_dim(&mut rng);
            let s = random_space(&mut rng, n);
            random_operator(&mut rng, &s).unwrap();
            random_function(&mut rng, &s).unwrap();
        }
    }
}
