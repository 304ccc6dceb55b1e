use nalgebra::DMatrix;
use proptest::prelude::*;

use rescomp::bench::{planar_singleton_spec, InstanceSpec, LambdaSpec, ScheduleSpec};
use rescomp::compositions::{resolvent_cocomposition, resolvent_composition, NormPolicy};
use rescomp::operators::firm_nonexpansiveness_defect;
use rescomp::proxfun::{conjugate_prox, ProxFunction};
use rescomp::random::seeded;
use rescomp::sampling::{random_contraction, random_operator, random_point, random_set, random_space};
use rescomp::{ConvexSet, LinearMap, ResolventFamily, Space, SubspaceProjector, Vector};

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.25f64..4.0, n)
}

fn vec_of(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n)
}

/// Weights of H and G, the entries of L, and points of H and G.
type MapCase = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

fn map_case() -> impl Strategy<Value = MapCase> {
    (1usize..5, 1usize..5).prop_flat_map(|(n, m)| (weights(n), weights(m), vec_of(n * m), vec_of(n), vec_of(m)))
}

proptest! {
    #[test]
    fn adjoint_identity((wh, wg, entries, x, y) in map_case()) {
        let h = Space::weighted(wh).unwrap();
        let g = Space::weighted(wg).unwrap();
        let a = DMatrix::from_vec(g.dim(), h.dim(), entries);
        let l = LinearMap::new(h.clone(), g.clone(), a).unwrap();
        let (x, y) = (Vector::from_vec(x), Vector::from_vec(y));
        let lhs = g.inner(&l.apply(&x).unwrap(), &y).unwrap();
        let rhs = h.inner(&x, &l.adjoint_apply(&y).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
        let back = l.adjoint().adjoint();
        prop_assert!((back.matrix() - l.matrix()).amax() <= 1e-12 * (1.0 + l.matrix().amax()));
    }

    #[test]
    fn subspace_projection_is_an_orthogonal_projector(w in weights(3), a in vec_of(3), b in vec_of(3), x in vec_of(3), y in vec_of(3)) {
        let s = Space::weighted(w).unwrap();
        let v = SubspaceProjector::new(&s, &[Vector::from_vec(a), Vector::from_vec(b)]).unwrap();
        let (x, y) = (Vector::from_vec(x), Vector::from_vec(y));
        let px = v.project(&x).unwrap();
        prop_assert!(s.dist_of(&v.project(&px).unwrap(), &px) <= 1e-10 * (1.0 + s.norm_of(&x)));
        let py = v.project(&y).unwrap();
        let sym = s.dot(&px, &y) - s.dot(&x, &py);
        prop_assert!(sym.abs() <= 1e-10 * (1.0 + s.norm_of(&x) * s.norm_of(&y)));
    }

    #[test]
    fn box_projection_lands_in_the_box(w in weights(3), lo in vec_of(3), span in prop::collection::vec(0.0f64..3.0, 3), x in vec_of(3)) {
        let s = Space::weighted(w).unwrap();
        let upper: Vec<f64> = lo.iter().zip(&span).map(|(l, d)| l + d).collect();
        let set = ConvexSet::Box { lower: lo, upper };
        let p = set.project(&s, &Vector::from_vec(x)).unwrap();
        prop_assert!(set.contains(&s, &p, 1e-12).unwrap());
        prop_assert!(s.dist_of(&set.project(&s, &p).unwrap(), &p) == 0.0);
    }

    #[test]
    fn abs_sum_prox_decomposes(w in weights(4), c in 0.01f64..3.0, gamma in 0.05f64..20.0, x in vec_of(4)) {
        let s = Space::weighted(w).unwrap();
        let f = ProxFunction::abs_sum(&s, c).unwrap();
        let x = Vector::from_vec(x);
        let p = f.prox(gamma, &x).unwrap();
        let q = conjugate_prox(&f, 1.0 / gamma, &(&x / gamma)).unwrap();
        // prox_{gamma f} x + gamma prox_{f*/gamma}(x / gamma) = x
        prop_assert!(s.dist_of(&(p + q * gamma), &x) <= 1e-10 * (1.0 + s.norm_of(&x)));
    }

    #[test]
    fn scaled_identity_resolvent_is_firmly_nonexpansive(c in 0.0f64..50.0, gamma in 0.01f64..100.0, x in vec_of(3), y in vec_of(3)) {
        let s = Space::euclidean(3).unwrap();
        let b = ResolventFamily::scaled_identity(&s, c).unwrap();
        let (x, y) = (Vector::from_vec(x), Vector::from_vec(y));
        let (tx, ty) = (b.resolvent(gamma, &x).unwrap(), b.resolvent(gamma, &y).unwrap());
        prop_assert!(firm_nonexpansiveness_defect(&s, &x, &y, &tx, &ty) <= 1e-10);
    }

    #[test]
    fn composed_resolvents_are_firmly_nonexpansive(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let h = random_space(&mut rng, 3);
        let g = random_space(&mut rng, 2);
        let l = random_contraction(&mut rng, &h, &g).unwrap();
        let b = random_operator(&mut rng, &g).unwrap();
        for c in [
            resolvent_composition(&l, &b, 1.0, NormPolicy::Enforce).unwrap(),
            resolvent_cocomposition(&l, &b, 1.0, NormPolicy::Enforce).unwrap(),
        ] {
            let x = random_point(&mut rng, &h);
            let y = random_point(&mut rng, &h);
            let (tx, ty) = (c.resolvent(&x).unwrap(), c.resolvent(&y).unwrap());
            prop_assert!(firm_nonexpansiveness_defect(&h, &x, &y, &tx, &ty) <= 1e-10);
        }
    }

    #[test]
    fn normal_cone_resolvent_is_the_projection(seed in any::<u64>(), gamma in 0.01f64..100.0) {
        let mut rng = seeded(seed);
        let s = random_space(&mut rng, 3);
        let set = random_set(&mut rng, &s);
        let b = ResolventFamily::normal_cone(&s, set.clone()).unwrap();
        let x = random_point(&mut rng, &s);
        prop_assert_eq!(b.resolvent(gamma, &x).unwrap(), set.project(&s, &x).unwrap());
    }

    #[test]
    fn spec_round_trips(d1 in -10.0f64..10.0, d2 in -10.0f64..10.0, gamma in 0.01f64..10.0, w in 0.05f64..0.95,
                        lambdas in prop::collection::vec(0.01f64..1.99, 1..4), seed in any::<u64>()) {
        let mut spec = planar_singleton_spec(d1, d2);
        spec.gamma = gamma;
        spec.weights = Some(vec![w, 1.0 - w]);
        spec.seed = seed;
        spec.schedule = ScheduleSpec { lambda: LambdaSpec::Sequence(lambdas), ..ScheduleSpec::default() };
        let back = InstanceSpec::parse(&spec.to_json()).unwrap();
        prop_assert_eq!(back, spec);
    }
}

#[test]
fn non_finite_and_negative_fields_are_rejected() {
    let mut spec = planar_singleton_spec(1.0, 3.0);
    spec.weights = Some(vec![0.5, -0.5]);
    assert!(InstanceSpec::parse(&spec.to_json()).unwrap_err().to_string().contains("weights[1]"));
    let text = planar_singleton_spec(1.0, 3.0).to_json().replace("\"gamma\": 1.0", "\"gamma\": 0.0");
    assert!(InstanceSpec::parse(&text).unwrap_err().to_string().contains("gamma"));
}
