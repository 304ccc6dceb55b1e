//! Randomized property suites over every layer of the library. Each suite
//! reports the worst defect it saw; a defect is positive when the property
//! is violated, so a suite passes when its worst defect is at most the
//! threshold.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::bench::{least_squares_oracle, random_singleton_instance};
use crate::compositions::{
    block_map, compose_chain, graph_defect_composed, resolvent_cocomposition, resolvent_composition,
    resolvent_mixture, resolvent_mixture_multivariate, strong_monotonicity_modulus, NormPolicy,
};
use crate::error::{Error, Result};
use crate::hilbert::{stack, LinearMap, Space, SubspaceProjector, Vector};
use crate::operators::{firm_nonexpansiveness_defect, ConvexSet, GraphPoint, MapFn, ResolventFamily};
use crate::proxfun::{self, ProxFunction};
use crate::random::{self, SeededRng};
use crate::sampling::{
    random_conditioned_map, random_contraction, random_dim, random_function, random_isometry, random_map,
    random_monotone_matrix, random_operator, random_point, random_quadratic_matrix, random_set,
    random_set_containing, random_simplex_weights, random_space,
};
use crate::solvers::{
    build_relaxed, proximal_point, Block, BlockOperator, InstanceKind, RelaxedInstance, Schedule, Trace,
    TraceOptions,
};

pub const DEFAULT_SEED: u64 = 0x5eed;
pub const DEFAULT_TRIALS: usize = 1000;

const GAMMAS: [f64; 3] = [0.1, 1.0, 10.0];
const SOLVER_STEPS: usize = 60;

#[derive(Clone, Copy, Debug, Default)]
pub struct PropertyOptions {
    /// Negative control: the adjoint suite uses a slightly wrong adjoint.
    pub corrupt_adjoint: bool,
}

#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub name: &'static str,
    /// Random draws actually run.
    pub trials: usize,
    pub worst: f64,
    pub threshold: f64,
    pub error: Option<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.worst <= self.threshold
    }

    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        match &self.error {
            Some(e) => format!("{status} {:<28} error: {e}", self.name),
            None if self.trials == 0 => format!("{status} {:<28} vacuous (0 trials)", self.name),
            None => format!(
                "{status} {:<28} worst={:<10.3e} threshold={:.0e} trials={}",
                self.name, self.worst, self.threshold, self.trials
            ),
        }
    }
}

type SuiteFn = fn(&mut SeededRng, usize, &PropertyOptions) -> Result<f64>;

struct Suite {
    name: &'static str,
    threshold: f64,
    /// Runs one solver instance per hundred trials.
    solver: bool,
    run: SuiteFn,
}

const SUITES: &[Suite] = &[
    Suite { name: "adjoint", threshold: 1e-10, solver: false, run: adjoint },
    Suite { name: "subspace-fne", threshold: 1e-12, solver: false, run: subspace_fne },
    Suite { name: "stack-norm", threshold: 1e-9, solver: false, run: stack_norm },
    Suite { name: "monotonicity", threshold: 1e-10, solver: false, run: monotonicity },
    Suite { name: "moreau-resolvent-identity", threshold: 1e-10, solver: false, run: moreau_resolvent_identity },
    Suite { name: "zero-set", threshold: 1e-10, solver: false, run: zero_set },
    Suite { name: "yosida-cocoercivity", threshold: 1e-10, solver: false, run: yosida_cocoercivity },
    Suite { name: "resolvent-rule", threshold: 1e-10, solver: false, run: resolvent_rule },
    Suite { name: "inverse-duality", threshold: 1e-10, solver: false, run: inverse_duality },
    Suite { name: "isometry-collapse", threshold: 1e-12, solver: false, run: isometry_collapse },
    Suite { name: "chaining", threshold: 1e-10, solver: false, run: chaining },
    Suite { name: "resolvent-average", threshold: 1e-12, solver: false, run: resolvent_average },
    Suite { name: "prox-decomposition", threshold: 1e-10, solver: false, run: prox_decomposition },
    Suite { name: "moreau-envelope-sum", threshold: 1e-10, solver: false, run: moreau_envelope_sum },
    Suite { name: "prox-optimality", threshold: 1e-10, solver: false, run: prox_optimality },
    Suite { name: "firm-nonexpansiveness", threshold: 1e-10, solver: false, run: firm_nonexpansiveness },
    Suite { name: "strong-monotonicity", threshold: 1e-8, solver: false, run: strong_monotonicity },
    Suite { name: "zero-set-transport", threshold: 1e-10, solver: false, run: zero_set_transport },
    Suite { name: "cocomposition-gradient", threshold: 1e-12, solver: false, run: cocomposition_gradient },
    Suite { name: "argmin-transport", threshold: 1e-10, solver: false, run: argmin_transport },
    Suite { name: "composition-argmin-oracle", threshold: 1e-8, solver: false, run: composition_argmin_oracle },
    Suite { name: "engine-equivalence", threshold: 1e-12, solver: true, run: engine_equivalence },
    Suite { name: "block-stacked-equivalence", threshold: 1e-12, solver: true, run: block_stacked_equivalence },
    Suite { name: "fejer", threshold: 1e-9, solver: true, run: fejer },
    Suite { name: "oracle-agreement", threshold: 1e-6, solver: true, run: oracle_agreement },
    Suite { name: "output-characterizations", threshold: 1e-9, solver: true, run: output_characterizations },
];

pub fn suite_names() -> Vec<&'static str> {
    SUITES.iter().map(|s| s.name).collect()
}

fn suite_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a, so a suite's stream does not depend on its position
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn run(suite: &Suite, seed: u64, trials: usize, opts: &PropertyOptions) -> SuiteResult {
    let n = match (trials, suite.solver) {
        (0, _) => 0,
        (t, true) => (t / 100).max(1),
        (t, false) => t,
    };
    let mut rng = random::seeded(suite_seed(seed, suite.name));
    let (worst, error) = if n == 0 {
        (0.0, None)
    } else {
        match (suite.run)(&mut rng, n, opts) {
            Ok(w) => (w, None),
            Err(e) => (f64::INFINITY, Some(e.to_string())),
        }
    };
    SuiteResult {
        name: suite.name,
        trials: n,
        worst,
        threshold: suite.threshold,
        error,
    }
}

/// Runs one suite by name.
pub fn run_suite(name: &str, seed: u64, trials: usize, opts: &PropertyOptions) -> Result<SuiteResult> {
    let suite = SUITES
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown suite {name}")))?;
    Ok(run(suite, seed, trials, opts))
}

/// Runs every suite, one thread per suite, in declaration order.
pub fn run_all(seed: u64, trials: usize, opts: &PropertyOptions) -> Vec<SuiteResult> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = SUITES
            .iter()
            .map(|s| scope.spawn(move || run(s, seed, trials, opts)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("suite thread panicked")).collect()
    })
}

/// Runs every suite and prints one line per suite to `out`. Returns exit
/// code 0 when all pass and 2 otherwise.
pub fn run_properties(seed: u64, trials: usize, opts: &PropertyOptions, out: &mut dyn Write) -> i32 {
    if trials == 0 {
        let _ = writeln!(out, "warning: 0 trials requested; every suite passes vacuously");
    }
    let results = run_all(seed, trials, opts);
    for r in &results {
        let _ = writeln!(out, "{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    let _ = writeln!(
        out,
        "{} of {} suites passed (seed {seed}, {trials} trials)",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        0
    } else {
        2
    }
}

struct Worst(f64);

impl Worst {
    fn new() -> Self {
        Worst(f64::NEG_INFINITY)
    }

    fn push(&mut self, d: f64) {
        self.0 = if d.is_nan() { f64::INFINITY } else { self.0.max(d) };
    }

    /// Records a failed qualitative check.
    fn flag(&mut self, ok: bool) {
        if !ok {
            self.0 = f64::INFINITY;
        }
    }
}

fn any_space(rng: &mut SeededRng) -> Space {
    let n = random_dim(rng);
    random_space(rng, n)
}

fn gamma(rng: &mut SeededRng) -> f64 {
    GAMMAS[rng.random_range(0..GAMMAS.len())]
}

fn fne_pair(space: &Space, rng: &mut SeededRng, t: impl Fn(&Vector) -> Result<Vector>) -> Result<f64> {
    let x = random_point(rng, space);
    let y = random_point(rng, space);
    let (tx, ty) = (t(&x)?, t(&y)?);
    Ok(firm_nonexpansiveness_defect(space, &x, &y, &tx, &ty))
}

fn monotonicity_defect(space: &Space, a: &GraphPoint, b: &GraphPoint) -> f64 {
    -space.dot(&(&a.x - &b.x), &(&a.xstar - &b.xstar))
}

fn adjoint(rng: &mut SeededRng, n: usize, opts: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let h = any_space(rng);
        let g = any_space(rng);
        let norm = rng.random_range(0.1..3.0);
        let l = random_map(rng, &h, &g, norm)?;
        let x = random_point(rng, &h);
        let y = random_point(rng, &g);
        let mut lsy = l.adjoint_apply(&y)?;
        if opts.corrupt_adjoint {
            lsy *= 1.0 + 1e-6;
        }
        w.push((g.inner(&l.apply(&x)?, &y)? - h.inner(&x, &lsy)?).abs());
    }
    Ok(w.0)
}

fn subspace_fne(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let h = any_space(rng);
        let k = rng.random_range(1..=h.dim());
        let span: Vec<Vector> = (0..k).map(|_| random_point(rng, &h)).collect();
        let v = SubspaceProjector::new(&h, &span)?;
        w.push(fne_pair(&h, rng, |x| v.project(x))?);
    }
    Ok(w.0)
}

fn stack_norm(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let h = any_space(rng);
        let p = rng.random_range(1..=3);
        let omega = random::positive_weights(rng, p, 0.2, 2.0);
        let mut maps = Vec::with_capacity(p);
        for _ in 0..p {
            let g = any_space(rng);
            let norm = rng.random_range(0.1..2.0);
            maps.push(random_map(rng, &h, &g, norm)?);
        }
        let bound: f64 = maps.iter().zip(&omega).map(|(l, o)| o * l.op_norm().powi(2)).sum();
        w.push(stack(&maps, &omega)?.op_norm().powi(2) - bound);
    }
    Ok(w.0)
}

fn monotonicity(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let g = any_space(rng);
        let b = match rng.random_range(0..4) {
            0 | 1 => random_operator(rng, &g)?,
            2 => random_operator(rng, &g)?.inverse(),
            _ => {
                let h = any_space(rng);
                let l = random_contraction(rng, &h, &g)?;
                let b = random_operator(rng, &g)?;
                let c = if rng.random_bool(0.5) {
                    resolvent_composition(&l, &b, gamma(rng), NormPolicy::Enforce)?
                } else {
                    resolvent_cocomposition(&l, &b, gamma(rng), NormPolicy::Enforce)?
                };
                c.family()
            }
        };
        let pts = b.sample_graph(2, rng.random())?;
        w.push(monotonicity_defect(b.space(), &pts[0], &pts[1]));
    }
    Ok(w.0)
}

fn moreau_resolvent_identity(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let s = any_space(rng);
        let x = random_point(rng, &s);
        let b = random_operator(rng, &s)?;
        w.push(s.dist_of(&(b.resolvent(1.0, &x)? + b.inverse_resolvent(1.0, &x)?), &x));

        // inverses known in closed form
        let m = random_monotone_matrix(rng, &s, 0.5);
        let minv = m.clone().try_inverse().ok_or_else(|| Error::Singular("monotone sample".into()))?;
        let a = ResolventFamily::linear(&s, m, &[])?;
        let ainv = ResolventFamily::linear(&s, minv, &[])?;
        w.push(s.dist_of(&(a.resolvent(1.0, &x)? + ainv.resolvent(1.0, &x)?), &x));
        let gm = gamma(rng);
        w.push(s.dist_of(&a.inverse_resolvent(gm, &x)?, &ainv.resolvent(gm, &x)?));

        let c = rng.random_range(0.1..10.0);
        let si = ResolventFamily::scaled_identity(&s, c)?;
        let si_inv = ResolventFamily::scaled_identity(&s, 1.0 / c)?;
        w.push(s.dist_of(&(si.resolvent(1.0, &x)? + si_inv.resolvent(1.0, &x)?), &x));
    }
    Ok(w.0)
}

fn zero_set(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let s = any_space(rng);
        let (b, zero, other) = match rng.random_range(0..3) {
            0 => {
                let set = random_set(rng, &s);
                let z = set.project(&s, &random_point(rng, &s))?;
                let y = random_point(rng, &s);
                let outside = set.distance(&s, &y)? > 1e-3;
                (ResolventFamily::normal_cone(&s, set)?, z, outside.then_some(y))
            }
            1 => {
                let b = ResolventFamily::scaled_identity(&s, rng.random_range(0.5..3.0))?;
                let y = random_point(rng, &s);
                let away = s.norm_of(&y) > 1e-3;
                (b, s.zeros(), away.then_some(y))
            }
            _ => {
                let b = ResolventFamily::linear(&s, random_monotone_matrix(rng, &s, 0.5), &[])?;
                let y = random_point(rng, &s);
                let away = s.norm_of(&y) > 1e-3;
                (b, s.zeros(), away.then_some(y))
            }
        };
        for gm in GAMMAS {
            w.push(s.dist_of(&zero, &b.resolvent(gm, &zero)?));
            if let Some(y) = &other {
                w.flag(s.dist_of(y, &b.resolvent(gm, y)?) > 1e-10);
            }
        }
    }
    Ok(w.0)
}

fn yosida_cocoercivity(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let s = any_space(rng);
        let b = random_operator(rng, &s)?;
        let gm = gamma(rng);
        let x1 = random_point(rng, &s);
        let x2 = random_point(rng, &s);
        let dy = b.yosida(gm, &x1)? - b.yosida(gm, &x2)?;
        w.push(gm * s.norm_sq(&dy) - s.dot(&(x1 - x2), &dy));
    }
    Ok(w.0)
}

fn resolvent_rule(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let dh = random_dim(rng);
        let h = random_space(rng, dh);
        let dg = rng.random_range(dh..=4);
        let g = random_space(rng, dg);
        let l = random_conditioned_map(rng, &h, &g, 0.5, 0.95)?;
        let m = random_monotone_matrix(rng, &g, 0.0);
        let b = ResolventFamily::linear(&g, m.clone(), &[1.0])?;
        let composed = resolvent_composition(&l, &b, 1.0, NormPolicy::Enforce)?;

        // L ◑ B is the linear operator A with (Id + A)^{-1} = L* (Id + M)^{-1} L
        let jb = (DMatrix::identity(dg, dg) + m)
            .try_inverse()
            .ok_or_else(|| Error::Singular("Id + M".into()))?;
        let r = l.adjoint_matrix() * jb * l.matrix();
        let a = r.try_inverse().ok_or_else(|| Error::Singular("L* J L".into()))? - DMatrix::identity(dh, dh);
        let direct = ResolventFamily::linear(&h, a, &[])?;
        let x = random_point(rng, &h);
        w.push(h.dist_of(&composed.resolvent(&x)?, &direct.resolvent(1.0, &x)?));
    }
    Ok(w.0)
}

fn inverse_duality(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let h = any_space(rng);
        let g = any_space(rng);
        let l = random_contraction(rng, &h, &g)?;
        let b = random_operator(rng, &g)?;
        let a = resolvent_composition(&l, &b, 1.0, NormPolicy::Enforce)?;
        let dual = resolvent_cocomposition(&l, &b.inverse(), 1.0, NormPolicy::Enforce)?;
        let swap = |p: &GraphPoint| GraphPoint {
            x: p.xstar.clone(),
            xstar: p.x.clone(),
        };
        let p = &a.family().sample_graph(1, rng.random())?[0];
        w.push(graph_defect_composed(&dual, &swap(p))?);
        let q = &dual.family().sample_graph(1, rng.random())?[0];
        w.push(graph_defect_composed(&a, &swap(q))?);
    }
    Ok(w.0)
}

fn isometry_collapse(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let dh = random_dim(rng);
        let h = random_space(rng, dh);
        let dg = rng.random_range(dh..=4);
        let g = random_space(rng, dg);
        let l = random_isometry(rng, &h, &g)?;
        w.flag(l.isometry_defect() <= 1e-12);
        let b = random_operator(rng, &g)?;
        let gm = gamma(rng);
        let c = resolvent_composition(&l, &b, gm, NormPolicy::Enforce)?;
        let cc = resolvent_cocomposition(&l, &b, gm, NormPolicy::Enforce)?;
        let x = random_point(rng, &h);
        w.push(h.dist_of(&c.resolvent(&x)?, &cc.resolvent(&x)?));
    }
    Ok(w.0)
}

fn chaining(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let k = any_space(rng);
        let h = any_space(rng);
        let g = any_space(rng);
        let q = random_contraction(rng, &k, &h)?;
        let l = random_contraction(rng, &h, &g)?;
        let b = random_operator(rng, &g)?;
        let gm = gamma(rng);
        let inner = resolvent_composition(&l, &b, gm, NormPolicy::Enforce)?;
        let nested = resolvent_composition(&q, &inner.family(), gm, NormPolicy::Enforce)?;
        let direct = resolvent_composition(&l.compose(&q)?, &b, gm, NormPolicy::Enforce)?;
        let x = random_point(rng, &k);
        w.push(k.dist_of(&nested.resolvent(&x)?, &direct.resolvent(&x)?));

        let chained = compose_chain(&q, &l, &b)?;
        let direct1 = resolvent_composition(&l.compose(&q)?, &b, 1.0, NormPolicy::Enforce)?;
        w.push(k.dist_of(&chained.resolvent(&x)?, &direct1.resolvent(&x)?));
    }
    Ok(w.0)
}

fn resolvent_average(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let s = any_space(rng);
        let p = rng.random_range(1..=3);
        let omega = random_simplex_weights(rng, p);
        let bs = (0..p).map(|_| random_operator(rng, &s)).collect::<Result<Vec<_>>>()?;
        let ids = vec![LinearMap::identity(&s); p];
        let gm = gamma(rng);
        let mix = resolvent_mixture(&bs, &ids, &omega, gm, NormPolicy::Enforce)?;
        let x = random_point(rng, &s);
        let mut avg = s.zeros();
        for (b, o) in bs.iter().zip(&omega) {
            avg.axpy(*o, &b.resolvent(gm, &x)?, 1.0);
        }
        w.push(s.dist_of(&mix.resolvent(&x)?, &avg));
    }
    Ok(w.0)
}

/// A catalog function and its conjugate, built independently.
fn conjugate_pair(rng: &mut SeededRng, s: &Space) -> Result<(ProxFunction, ProxFunction)> {
    let n = s.dim();
    Ok(match rng.random_range(0..3) {
        0 => {
            let c = rng.random_range(0.1..2.0);
            let bound: Vec<f64> = s.weights().iter().map(|w| c / w).collect();
            let dual = ConvexSet::Box {
                lower: bound.iter().map(|b| -b).collect(),
                upper: bound,
            };
            (ProxFunction::abs_sum(s, c)?, ProxFunction::indicator(s, dual)?)
        }
        1 => {
            let p = random::gaussian_vector(rng, n, 1.0);
            (ProxFunction::half_sq_dist(s, p.clone())?, ProxFunction::half_sq_dist(s, -p)?)
        }
        _ => {
            // Q = W^{-1} S, so Q^{-1} = S^{-1} W
            let q = random_quadratic_matrix(rng, s, 0.3);
            let b = random::gaussian_vector(rng, n, 1.0);
            let mut wq = q.clone();
            for (i, mut row) in wq.row_iter_mut().enumerate() {
                row *= s.weights()[i];
            }
            let sinv = wq.try_inverse().ok_or_else(|| Error::Singular("quadratic".into()))?;
            let sinv = (&sinv + sinv.transpose()) * 0.5;
            let mut qinv = sinv;
            for (j, mut col) in qinv.column_iter_mut().enumerate() {
                col *= s.weights()[j];
            }
            let shift = -(&qinv * &b);
            (ProxFunction::quadratic(s, q, b)?, ProxFunction::quadratic(s, qinv, shift)?)
        }
    })
}

fn prox_decomposition(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let s = any_space(rng);
        let x = random_point(rng, &s);
        let f = random_function(rng, &s)?;
        w.push(s.dist_of(&(f.prox(1.0, &x)? + proxfun::conjugate_prox(&f, 1.0, &x)?), &x));
        let (f, fstar) = conjugate_pair(rng, &s)?;
        w.push(s.dist_of(&(f.prox(1.0, &x)? + fstar.prox(1.0, &x)?), &x));
    }
    Ok(w.0)
}

fn moreau_envelope_sum(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let s = any_space(rng);
        let x = random_point(rng, &s);
        let f = if rng.random_bool(0.5) {
            random_function(rng, &s)?
        } else {
            conjugate_pair(rng, &s)?.1
        };
        let fstar = f.conjugate();
        if !(f.has_value_oracle() && fstar.has_value_oracle()) {
            continue;
        }
        let sum = proxfun::moreau_envelope(&f, 1.0, &x)? + proxfun::moreau_envelope(&fstar, 1.0, &x)?;
        w.push((sum - s.half_sq_norm(&x)).abs());
    }
    Ok(w.0.max(0.0))
}

fn prox_optimality(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let s = any_space(rng);
        let f = random_function(rng, &s)?;
        let gm = gamma(rng);
        let x = random_point(rng, &s);
        let p = f.prox(gm, &x)?;
        // any point of dom f
        let y = f.prox(gamma(rng), &random_point(rng, &s))?;
        let u = (&x - &p) / gm;
        w.push(f.value(&p)? + s.dot(&u, &(&y - &p)) - f.value(&y)?);
    }
    Ok(w.0)
}

fn firm_nonexpansiveness(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let h = any_space(rng);
        let g = any_space(rng);
        let l = random_contraction(rng, &h, &g)?;
        let b = random_operator(rng, &g)?;
        let gm = gamma(rng);
        let c = resolvent_composition(&l, &b, gm, NormPolicy::Enforce)?;
        w.push(fne_pair(&h, rng, |x| c.resolvent(x))?);
        let cc = resolvent_cocomposition(&l, &b, gm, NormPolicy::Enforce)?;
        w.push(fne_pair(&h, rng, |x| cc.resolvent(x))?);

        let p = rng.random_range(1..=3);
        let omega = random_simplex_weights(rng, p);
        let mut maps = Vec::with_capacity(p);
        let mut bs = Vec::with_capacity(p);
        let mut gs = Vec::with_capacity(p);
        for _ in 0..p {
            let gk = any_space(rng);
            maps.push(random_contraction(rng, &h, &gk)?);
            bs.push(random_operator(rng, &gk)?);
            gs.push(random_function(rng, &gk)?);
        }
        let mix = resolvent_mixture(&bs, &maps, &omega, gm, NormPolicy::Enforce)?;
        w.push(fne_pair(&h, rng, |x| mix.resolvent(x))?);
        w.push(fne_pair(&h, rng, |x| proxfun::proximal_mixture_prox(&gs, &maps, &omega, x))?);

        let multi = random_multivariate(rng, gm)?;
        w.push(fne_pair(multi.space(), rng, |x| multi.resolvent(x))?);

        let f = random_function(rng, &g)?;
        w.push(fne_pair(&g, rng, |x| f.prox(gm, x))?);
        w.push(fne_pair(&g, rng, |x| proxfun::conjugate_prox(&f, gm, x))?);
        let f2 = random_function(rng, &h)?;
        let sep = ProxFunction::separable(vec![f.clone(), f2], &random_simplex_weights(rng, 2))?;
        w.push(fne_pair(sep.space(), rng, |x| sep.prox(gm, x))?);
        let pc = ProxFunction::composition(&l, &f, 1.0, NormPolicy::Enforce)?;
        w.push(fne_pair(&h, rng, |x| pc.prox(1.0, x))?);
        let pcc = ProxFunction::cocomposition(&l, &f, 1.0, NormPolicy::Enforce)?;
        w.push(fne_pair(&h, rng, |x| pcc.prox(1.0, x))?);

        let inst = random_generic_instance(rng)?;
        w.push(fne_pair(inst.space(), rng, |x| inst.relaxed_resolvent(x))?);
    }
    Ok(w.0)
}

/// Multivariate mixture with a random block map rescaled to norm at most 1.
fn random_multivariate(rng: &mut SeededRng, gm: f64) -> Result<crate::ComposedOperator> {
    let m = rng.random_range(1..=2);
    let p = rng.random_range(1..=3);
    let domains: Vec<Space> = (0..m).map(|_| any_space(rng)).collect();
    let codomains: Vec<Space> = (0..p).map(|_| any_space(rng)).collect();
    let omega = random_simplex_weights(rng, p);
    let mut blocks: Vec<Vec<LinearMap>> = codomains
        .iter()
        .map(|g| domains.iter().map(|h| random_map(rng, h, g, 1.0)).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let norm = block_map(&domains, &blocks, &omega)?.op_norm();
    let target = rng.random_range(0.2..=1.0);
    for row in &mut blocks {
        for l in row.iter_mut() {
            *l = l.scaled(target / norm)?;
        }
    }
    let bs = codomains.iter().map(|g| random_operator(rng, g)).collect::<Result<Vec<_>>>()?;
    resolvent_mixture_multivariate(&bs, &domains, &blocks, &omega, gm, NormPolicy::Enforce)
}

fn strong_monotonicity(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let h = any_space(rng);
        let g = any_space(rng);
        let alpha = rng.random_range(0.0..2.0);
        let m = random_monotone_matrix(rng, &g, 0.0) + DMatrix::identity(g.dim(), g.dim()) * alpha;
        let b = ResolventFamily::linear(&g, m, &[1.0])?;
        let norm = rng.random_range(0.3..0.95);
        let l = random_map(rng, &h, &g, norm)?;
        let beta = strong_monotonicity_modulus(alpha, l.op_norm())?;
        let a = resolvent_composition(&l, &b, 1.0, NormPolicy::Enforce)?.family();
        let pts = a.sample_graph(2, rng.random())?;
        w.push(strong_monotonicity_defect(&h, beta, &pts[0], &pts[1]));
    }
    Ok(w.0)
}

fn strong_monotonicity_defect(space: &Space, beta: f64, a: &GraphPoint, b: &GraphPoint) -> f64 {
    let dx = &a.x - &b.x;
    beta * space.norm_sq(&dx) - space.dot(&dx, &(&a.xstar - &b.xstar))
}

/// `B = 2 Id` on R^3 and `L = Q / sqrt(2)` for a random orthogonal `Q`, so
/// that `L ◑ B = 5 Id`. Returns the modulus and the worst defect of the
/// strong monotonicity inequality over `pairs` graph pairs.
pub fn scaled_orthogonal_modulus(seed: u64, pairs: usize) -> Result<(f64, f64)> {
    let mut rng = random::seeded(seed);
    let s = Space::euclidean(3)?;
    let q = random::random_orthogonal(&mut rng, 3);
    let l = LinearMap::new(s.clone(), s.clone(), q * std::f64::consts::FRAC_1_SQRT_2)?;
    let b = ResolventFamily::scaled_identity(&s, 2.0)?;
    let beta = strong_monotonicity_modulus(2.0, l.op_norm())?;
    let a = resolvent_composition(&l, &b, 1.0, NormPolicy::Enforce)?.family();
    let pts = a.sample_graph(2 * pairs, rng.random())?;
    let mut w = Worst::new();
    for pair in pts.chunks(2) {
        w.push(strong_monotonicity_defect(&s, beta, &pair[0], &pair[1]));
    }
    Ok((beta, w.0))
}

fn zero_set_transport(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let h = any_space(rng);
        let g = any_space(rng);
        let l = random_contraction(rng, &h, &g)?;
        let x = random_point(rng, &h);
        let y = l.apply(&x)?;
        let b = match rng.random_range(0..3) {
            0 => ResolventFamily::normal_cone(&g, random_set_containing(rng, &g, &y))?,
            1 => ResolventFamily::subdifferential(&ProxFunction::half_sq_dist(&g, y.clone())?),
            _ => ResolventFamily::zero(&g),
        };
        let cc = resolvent_cocomposition(&l, &b, gamma(rng), NormPolicy::Enforce)?;
        w.push(h.dist_of(&cc.resolvent(&x)?, &x));
    }
    Ok(w.0)
}

fn cocomposition_gradient(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let h = any_space(rng);
        let g = any_space(rng);
        let l = random_contraction(rng, &h, &g)?;
        let f = random_function(rng, &g)?;
        let x = random_point(rng, &h);
        let lx = l.matrix() * &x;
        let rhs = l.adjoint_matrix() * (&lx - f.prox(1.0, &lx)?);
        let cc = ProxFunction::cocomposition(&l, &f, 1.0, NormPolicy::Enforce)?;
        w.push(h.dist_of(&(&x - cc.prox(1.0, &x)?), &rhs));
        w.push(h.dist_of(&(&x - proxfun::proximal_cocomposition_prox(&l, &f, &x)?), &rhs));
    }
    Ok(w.0)
}

fn argmin_transport(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let h = any_space(rng);
        let g = any_space(rng);
        let l = random_contraction(rng, &h, &g)?;
        let x = random_point(rng, &h);
        let y = l.apply(&x)?;
        let f = match rng.random_range(0..3) {
            0 => ProxFunction::half_sq_dist(&g, y)?,
            1 => ProxFunction::indicator(&g, random_set_containing(rng, &g, &y))?,
            _ => {
                let q = random_quadratic_matrix(rng, &g, 0.3);
                let b = &q * &y;
                ProxFunction::quadratic(&g, q, b)?
            }
        };
        w.push(h.dist_of(&proxfun::proximal_cocomposition_prox(&l, &f, &x)?, &x));
        let cc = ProxFunction::cocomposition(&l, &f, 1.0, NormPolicy::Enforce)?;
        w.push(h.dist_of(&cc.prox(1.0, &x)?, &x));
    }
    Ok(w.0)
}

/// Minimizer of `L ◑ g` for `g = <Q., .>/2 - <b, .>`, from the linear
/// system `(Id - L*(Id + Q)^{-1} L) x = L*(Id + Q)^{-1} b`.
pub fn quadratic_composition_oracle(l: &LinearMap, q: &DMatrix<f64>, b: &Vector) -> Result<Vector> {
    let (n, m) = (l.domain().dim(), l.codomain().dim());
    let j = (DMatrix::identity(m, m) + q)
        .try_inverse()
        .ok_or_else(|| Error::Singular("Id + Q".into()))?;
    let lj = l.adjoint_matrix() * j;
    let a = DMatrix::identity(n, n) - &lj * l.matrix();
    a.lu().solve(&(lj * b)).ok_or_else(|| Error::Singular("Id - L* J L".into()))
}

fn composition_argmin_oracle(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let h = any_space(rng);
        let g = any_space(rng);
        let norm = rng.random_range(0.2..0.9);
        let l = random_map(rng, &h, &g, norm)?;
        let q = random_quadratic_matrix(rng, &g, 0.0);
        let b = random::gaussian_vector(rng, g.dim(), 1.0);
        let f = ProxFunction::quadratic(&g, q.clone(), b.clone())?;
        let xstar = quadratic_composition_oracle(&l, &q, &b)?;
        let j = |x: &Vector| proxfun::proximal_composition_prox(&l, &f, x);
        w.push(h.dist_of(&j(&xstar)?, &xstar));

        let schedule = Schedule {
            tol: 1e-13,
            ..Schedule::default()
        };
        let (x, _) = proximal_point(j, &h, &h.zeros(), &schedule, None, &TraceOptions::quiet())?;
        w.push(h.dist_of(&x, &xstar));

        // the residual does not vanish away from the minimizer
        let d = random_point(rng, &h);
        let off = &xstar + &d * (1e-3 / h.norm_of(&d).max(1e-300));
        w.flag(h.dist_of(&j(&off)?, &off) > 1e-8);
    }
    Ok(w.0)
}

/// A relaxed instance with a random subspace, contraction and catalog
/// operator.
pub fn random_generic_instance(rng: &mut SeededRng) -> Result<RelaxedInstance> {
    let h = any_space(rng);
    let g = any_space(rng);
    let k = rng.random_range(1..=h.dim());
    let span: Vec<Vector> = (0..k).map(|_| random_point(rng, &h)).collect();
    let v = SubspaceProjector::new(&h, &span)?;
    let l = random_contraction(rng, &h, &g)?;
    let b = random_operator(rng, &g)?;
    build_relaxed(&v, &l, &b, gamma(rng), NormPolicy::Enforce)
}

/// A mixture instance whose blocks mix resolvent, prox and Wiener steps.
pub fn random_mixture_instance(rng: &mut SeededRng) -> Result<RelaxedInstance> {
    let h = any_space(rng);
    let k = rng.random_range(1..=h.dim());
    let span: Vec<Vector> = (0..k).map(|_| random_point(rng, &h)).collect();
    let v = SubspaceProjector::new(&h, &span)?;
    let p = rng.random_range(2..=3);
    let omega = random_simplex_weights(rng, p);
    let mut blocks = Vec::with_capacity(p);
    let mut wiener = false;
    for _ in 0..p {
        let g = any_space(rng);
        let map = random_contraction(rng, &h, &g)?;
        let op = match rng.random_range(0..3) {
            0 => BlockOperator::Resolvent(random_operator(rng, &g)?),
            1 => BlockOperator::Prox(random_function(rng, &g)?),
            _ => {
                wiener = true;
                let f: MapFn = if rng.random_bool(0.5) {
                    let c = rng.random_range(0.0..=1.0);
                    Arc::new(move |y: &Vector| y * c)
                } else {
                    let set = random_set(rng, &g);
                    let space = g.clone();
                    Arc::new(move |y: &Vector| set.project(&space, y).expect("valid set"))
                };
                let shift = random::gaussian_vector(rng, g.dim(), 1.0);
                BlockOperator::Wiener(ResolventFamily::make_wiener(&g, f, shift)?)
            }
        };
        blocks.push(Block { map, op });
    }
    let gm = if wiener { 1.0 } else { gamma(rng) };
    RelaxedInstance::from_blocks(&v, blocks, &omega, gm, InstanceKind::Mixture, NormPolicy::Enforce)
}

/// Largest iterate distance over the common prefix of two traces. With a
/// zero tolerance one run may stop early on an exactly vanishing residual
/// that the other sees as roundoff.
fn iterate_gap(a: &Trace, b: &Trace, space: &Space) -> f64 {
    let mut w = Worst::new();
    for (ra, rb) in a.records.iter().zip(&b.records) {
        match (&ra.iterate, &rb.iterate) {
            (Some(xa), Some(xb)) => w.push(space.dist_of(xa, xb)),
            _ => w.push(f64::INFINITY),
        }
    }
    w.0
}

fn every_iterate() -> TraceOptions {
    TraceOptions {
        keep_iterates_every: 1,
        ..TraceOptions::default()
    }
}

fn fixed_steps(rng: &mut SeededRng) -> Schedule {
    Schedule {
        max_iterations: SOLVER_STEPS,
        tol: 0.0,
        ..Schedule::constant(rng.random_range(0.2..1.8))
    }
}

fn engine_equivalence(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let inst = random_generic_instance(rng)?;
        let s = inst.space();
        let x0 = inst.subspace().project(&random_point(rng, s))?;
        let schedule = fixed_steps(rng);
        let (_, a) = inst.solve_relaxed(&x0, &schedule, &every_iterate())?;
        let (_, b) = proximal_point(|x| inst.relaxed_resolvent(x), s, &x0, &schedule, None, &every_iterate())?;
        w.push(iterate_gap(&a, &b, s));
    }
    Ok(w.0)
}

fn block_stacked_equivalence(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let inst = random_mixture_instance(rng)?;
        let s = inst.space();
        let x0 = inst.subspace().project(&random_point(rng, s))?;
        let schedule = fixed_steps(rng);
        let (_, a) = inst.solve_blocks(&x0, &schedule, &every_iterate())?;
        let (_, b) = inst.solve_relaxed(&x0, &schedule, &every_iterate())?;
        w.push(iterate_gap(&a, &b, s));
    }
    Ok(w.0)
}

fn solve_singleton(rng: &mut SeededRng, lambda: f64) -> Result<(RelaxedInstance, Vector, Vector, Trace)> {
    let inst = random_singleton_instance(rng)?;
    let oracle = Vector::from_vec(least_squares_oracle(&inst)?.point);
    let x0 = random_point(rng, inst.space());
    let opts = TraceOptions {
        reference: Some(oracle.clone()),
        ..TraceOptions::default()
    };
    let (x, trace) = inst.solve_relaxed(&x0, &Schedule::constant(lambda), &opts)?;
    Ok((inst, oracle, x, trace))
}

fn fejer(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let lambda = rng.random_range(0.5..1.5);
        let (_, _, _, trace) = solve_singleton(rng, lambda)?;
        let dists: Vec<f64> = trace.records.iter().filter_map(|r| r.dist_ref).collect();
        for pair in dists.windows(2) {
            w.push(pair[1] - pair[0]);
        }
    }
    Ok(w.0)
}

fn oracle_agreement(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let (inst, oracle, x, trace) = solve_singleton(rng, 1.0)?;
        w.flag(trace.converged());
        w.push(inst.space().dist_of(&x, &oracle));
    }
    Ok(w.0)
}

fn output_characterizations(rng: &mut SeededRng, n: usize, _: &PropertyOptions) -> Result<f64> {
    let mut w = Worst::new();
    for _ in 0..n {
        let (inst, _, x, _) = solve_singleton(rng, 1.0)?;
        w.push(inst.fixed_point_residual(&x)?);
        w.push(inst.variational_residual(&x)?);
        let zero = GraphPoint {
            x: x.clone(),
            xstar: inst.space().zeros(),
        };
        w.push(graph_defect_composed(&inst.relaxed_operator()?, &zero)?);
    }
    Ok(w.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes_on_a_short_run() {
        for r in run_all(DEFAULT_SEED, 200, &PropertyOptions::default()) {
            assert!(r.passed(), "{}", r.line());
        }
    }

    #[test]
    fn corrupted_adjoint_fails() {
        let opts = PropertyOptions { corrupt_adjoint: true };
        let r = run_suite("adjoint", 1, 50, &opts).unwrap();
        assert!(!r.passed(), "{}", r.line());
        let mut out = Vec::new();
        assert_eq!(run_properties(1, 10, &opts, &mut out), 2);
    }

    #[test]
    fn zero_trials_is_vacuous() {
        let mut out = Vec::new();
        assert_eq!(run_properties(1, 0, &PropertyOptions::default(), &mut out), 0);
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("warning"));
    }

    #[test]
    fn scaled_orthogonal_modulus_is_five() {
        let (beta, worst) = scaled_orthogonal_modulus(3, 100).unwrap();
        assert!((beta - 5.0).abs() < 1e-9);
        assert!(worst <= 1e-8);
    }

    #[test]
    fn suite_seeds_depend_on_name() {
        assert_ne!(suite_seed(1, "adjoint"), suite_seed(1, "chaining"));
        assert_eq!(suite_seed(1, "adjoint"), suite_seed(1, "adjoint"));
    }
}
