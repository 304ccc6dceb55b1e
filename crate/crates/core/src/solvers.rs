//! Relaxed proximal point iterations.
//!
//! A [`RelaxedInstance`] holds a subspace `V`, a map `L` with `||L|| <= 1`,
//! an operator `B` and a scale `gamma`. The relaxed problem asks for a zero
//! of `N_V + L* o (gamma-Yosida of B) o L`; its solutions are the fixed
//! points of
//! `R = proj_V o (Id - L*L + L* J_{gamma B} L) o proj_V`,
//! and every solver here is the proximal point iteration on `R`.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::compositions::{
    check_mixture_gate, check_norm_gate, resolvent_cocomposition, resolvent_composition, ComposedOperator,
    NormPolicy,
};
use crate::error::{Error, Result};
use crate::hilbert::{stack, LinearMap, Space, SubspaceProjector, Vector};
use crate::operators::ResolventFamily;
use crate::proxfun::ProxFunction;

/// Distance of every relaxation parameter from the endpoints of `(0, 2)`.
pub const LAMBDA_MARGIN: f64 = 1e-3;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub enum Relaxation {
    Constant(f64),
    /// Per-iteration values; the last one is held once the list runs out.
    Sequence(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub relaxation: Relaxation,
    pub max_iterations: usize,
    pub tol: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            relaxation: Relaxation::Constant(1.0),
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tol: DEFAULT_TOL,
        }
    }
}

impl Schedule {
    pub fn constant(lambda: f64) -> Self {
        Self {
            relaxation: Relaxation::Constant(lambda),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |l: f64| (LAMBDA_MARGIN..=2.0 - LAMBDA_MARGIN).contains(&l);
        match &self.relaxation {
            Relaxation::Constant(l) if !ok(*l) => {
                return Err(Error::InvalidSchedule(format!(
                    "lambda = {l} outside [{LAMBDA_MARGIN}, {}]",
                    2.0 - LAMBDA_MARGIN
                )))
            }
            Relaxation::Sequence(ls) => {
                if ls.is_empty() {
                    return Err(Error::InvalidSchedule("empty lambda sequence".into()));
                }
                if let Some((i, l)) = ls.iter().enumerate().find(|(_, l)| !ok(**l)) {
                    return Err(Error::InvalidSchedule(format!(
                        "lambda[{i}] = {l} outside [{LAMBDA_MARGIN}, {}]",
                        2.0 - LAMBDA_MARGIN
                    )));
                }
            }
            _ => {}
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::InvalidSchedule(format!("tolerance {}", self.tol)));
        }
        Ok(())
    }

    pub fn lambda(&self, n: usize) -> f64 {
        match &self.relaxation {
            Relaxation::Constant(l) => *l,
            Relaxation::Sequence(ls) => ls[n.min(ls.len() - 1)],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub fp_residual: f64,
    pub var_residual: Option<f64>,
    pub dist_ref: Option<f64>,
    pub wall_ns: u64,
    pub iterate: Option<Vector>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub termination: Termination,
    /// Number of updates performed.
    pub iterations: usize,
    /// Set when the starting point was projected onto `V`.
    pub projected_start: bool,
    /// `sum_n lambda_n ||c_n||` over injected resolvent errors.
    pub perturbation_sum: f64,
    last_residual: f64,
}

impl Trace {
    pub fn final_residual(&self) -> f64 {
        self.last_residual
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidArgument(format!("trace csv: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "fp_residual", "var_residual", "dist_ref", "wall_ns"])
            .map_err(io)?;
        let opt = |v: Option<f64>| v.map(|v| format!("{v:e}")).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.iter.to_string(),
                format!("{:e}", r.fp_residual),
                opt(r.var_residual),
                opt(r.dist_ref),
                r.wall_ns.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidArgument(format!("trace csv: {e}")))?;
        Ok(())
    }

    /// Writes the CSV through a temporary file renamed into place.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        write_atomic(path, &buf)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |e: std::io::Error| Error::InvalidArgument(format!("{}: {e}", path.display()));
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = std::fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

#[derive(Clone, Debug, Default)]
pub struct TraceOptions {
    /// Skip per-iteration records entirely.
    pub quiet: bool,
    /// Reference point for the `dist_ref` column.
    pub reference: Option<Vector>,
    /// Keep every k-th iterate in the trace (0 keeps none).
    pub keep_iterates_every: usize,
}

impl TraceOptions {
    pub fn quiet() -> Self {
        Self {
            quiet: true,
            ..Self::default()
        }
    }
}

/// Resolvent error `c_n` injected at iteration `n` for the iterate `x_n`.
pub type Perturbation<'a> = &'a mut dyn FnMut(usize, &Vector) -> Vector;

struct Step {
    /// `T x - x` for the operator being iterated.
    displacement: Vector,
    var_residual: Option<f64>,
}

fn drive(
    space: &Space,
    x0: Vector,
    schedule: &Schedule,
    mut perturbation: Option<Perturbation<'_>>,
    opts: &TraceOptions,
    mut step: impl FnMut(&Vector) -> Result<Step>,
) -> Result<(Vector, Trace)> {
    schedule.validate()?;
    if let Some(r) = &opts.reference {
        space.check(r)?;
    }
    let start = Instant::now();
    let mut x = x0;
    let mut records = Vec::new();
    let mut perturbation_sum = 0.0;
    let mut n = 0;
    loop {
        let Step {
            mut displacement,
            var_residual,
        } = step(&x)?;
        let lambda = schedule.lambda(n);
        if let Some(p) = perturbation.as_mut() {
            let c = p(n, &x);
            space.check(&c)?;
            perturbation_sum += lambda * space.norm_of(&c);
            displacement += c;
        }
        let fp = space.norm_of(&displacement);
        if !fp.is_finite() {
            return Err(Error::NonFinite("fixed-point residual"));
        }
        if !opts.quiet {
            let keep = opts.keep_iterates_every;
            records.push(TraceRecord {
                iter: n,
                fp_residual: fp,
                var_residual,
                dist_ref: opts.reference.as_ref().map(|r| space.dist_of(&x, r)),
                wall_ns: start.elapsed().as_nanos() as u64,
                iterate: (keep > 0 && n % keep == 0).then(|| x.clone()),
            });
        }
        let termination = if fp <= schedule.tol {
            Some(Termination::Converged)
        } else if n >= schedule.max_iterations {
            Some(Termination::MaxIterations)
        } else {
            None
        };
        if let Some(termination) = termination {
            let trace = Trace {
                records,
                termination,
                iterations: n,
                projected_start: false,
                perturbation_sum,
                last_residual: fp,
            };
            return Ok((x, trace));
        }
        x.axpy(lambda, &displacement, 1.0);
        n += 1;
    }
}

/// `x_{n+1} = x_n + lambda_n (J x_n + c_n - x_n)` until
/// `||J x_n - x_n|| <= tol`. `J` must be firmly nonexpansive for the
/// iteration to converge; this is not checked.
pub fn proximal_point<F>(
    mut j: F,
    space: &Space,
    x0: &Vector,
    schedule: &Schedule,
    perturbation: Option<Perturbation<'_>>,
    opts: &TraceOptions,
) -> Result<(Vector, Trace)>
where
    F: FnMut(&Vector) -> Result<Vector>,
{
    space.check(x0)?;
    drive(space, x0.clone(), schedule, perturbation, opts, |x| {
        let jx = j(x)?;
        Ok(Step {
            displacement: jx - x,
            var_residual: None,
        })
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InstanceKind {
    Generic,
    Mixture,
    Wiener,
    ProxMixture,
    SplitFeasibility,
    CommonZero,
    FeasibilityProduct,
}

impl InstanceKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Generic => "generic",
            Self::Mixture => "mixture",
            Self::Wiener => "wiener",
            Self::ProxMixture => "prox-mixture",
            Self::SplitFeasibility => "split-feasibility",
            Self::CommonZero => "common-zero",
            Self::FeasibilityProduct => "feasibility-product",
        }
    }
}

/// How a block computes `q_k = J_{gamma B_k} y_k - y_k`.
#[derive(Clone, Debug)]
pub enum BlockOperator {
    Resolvent(ResolventFamily),
    /// `q = p - F y`; the family must come from `make_wiener`.
    Wiener(ResolventFamily),
    /// `q = prox_{gamma g} y - y`.
    Prox(ProxFunction),
}

impl BlockOperator {
    fn family(&self) -> ResolventFamily {
        match self {
            Self::Resolvent(b) | Self::Wiener(b) => b.clone(),
            Self::Prox(g) => ResolventFamily::subdifferential(g),
        }
    }

    fn space(&self) -> &Space {
        match self {
            Self::Resolvent(b) | Self::Wiener(b) => b.space(),
            Self::Prox(g) => g.space(),
        }
    }

    fn step(&self, gamma: f64, y: &Vector) -> Result<Vector> {
        match self {
            Self::Resolvent(b) => Ok(b.resolvent_raw(gamma, y)? - y),
            Self::Wiener(b) => {
                let w = b.wiener_parts().expect("checked at construction");
                Ok(w.shift() - w.apply_map(y))
            }
            Self::Prox(g) => Ok(g.prox_raw(gamma, y)? - y),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Block {
    pub map: LinearMap,
    pub op: BlockOperator,
}

#[derive(Clone, Debug)]
struct Blocks {
    blocks: Vec<Block>,
    omega: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RelaxedInstance {
    subspace: SubspaceProjector,
    map: LinearMap,
    operator: ResolventFamily,
    gamma: f64,
    kind: InstanceKind,
    blocks: Option<Blocks>,
}

/// Builds the relaxed instance for `(V, L, B, gamma)`.
pub fn build_relaxed(
    subspace: &SubspaceProjector,
    map: &LinearMap,
    operator: &ResolventFamily,
    gamma: f64,
    policy: NormPolicy,
) -> Result<RelaxedInstance> {
    RelaxedInstance::new(subspace, map, operator, gamma, InstanceKind::Generic, policy)
}

impl RelaxedInstance {
    pub fn new(
        subspace: &SubspaceProjector,
        map: &LinearMap,
        operator: &ResolventFamily,
        gamma: f64,
        kind: InstanceKind,
        policy: NormPolicy,
    ) -> Result<Self> {
        if subspace.is_trivial() {
            return Err(Error::InvalidArgument("subspace V is {0}".into()));
        }
        map.domain().ensure_same(subspace.space(), "map domain vs subspace")?;
        map.codomain().ensure_same(operator.space(), "map codomain vs operator")?;
        if map.op_norm() <= 0.0 {
            return Err(Error::ContractionCondition {
                value: 0.0,
                limit: 0.0,
            });
        }
        check_norm_gate(map.op_norm(), policy)?;
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
        }
        operator.scale_domain().check(gamma)?;
        Ok(Self {
            subspace: subspace.clone(),
            map: map.clone(),
            operator: operator.clone(),
            gamma,
            kind,
            blocks: None,
        })
    }

    /// Instance with `L = (L_1, ..., L_p)` stacked into the
    /// `omega`-weighted product and `B = B_1 x ... x B_p`.
    pub fn from_blocks(
        subspace: &SubspaceProjector,
        blocks: Vec<Block>,
        omega: &[f64],
        gamma: f64,
        kind: InstanceKind,
        policy: NormPolicy,
    ) -> Result<Self> {
        let maps: Vec<LinearMap> = blocks.iter().map(|b| b.map.clone()).collect();
        check_mixture_gate(&maps, omega, policy)?;
        for (k, b) in blocks.iter().enumerate() {
            b.map
                .codomain()
                .ensure_same(b.op.space(), &format!("block {k} map codomain vs operator"))?;
            if let BlockOperator::Wiener(f) = &b.op {
                if f.wiener_parts().is_none() {
                    return Err(Error::InvalidArgument(format!("block {k} is not a Wiener operator")));
                }
            }
        }
        let stacked = stack(&maps, omega)?;
        let product = ResolventFamily::product(blocks.iter().map(|b| b.op.family()).collect(), omega)?;
        let mut inst = Self::new(subspace, &stacked, &product, gamma, kind, policy)?;
        inst.blocks = Some(Blocks {
            blocks,
            omega: omega.to_vec(),
        });
        Ok(inst)
    }

    pub fn subspace(&self) -> &SubspaceProjector {
        &self.subspace
    }

    pub fn map(&self) -> &LinearMap {
        &self.map
    }

    pub fn operator(&self) -> &ResolventFamily {
        &self.operator
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn kind(&self) -> InstanceKind {
        self.kind
    }

    pub fn space(&self) -> &Space {
        self.map.domain()
    }

    pub fn block_count(&self) -> usize {
        self.blocks.as_ref().map_or(1, |b| b.blocks.len())
    }

    /// `z = L*(J_{gamma B}(L x) - L x)` on the stacked formulation.
    fn stacked_direction(&self, x: &Vector) -> Result<Vector> {
        let y = self.map.apply_raw(x);
        let q = self.operator.resolvent_raw(self.gamma, &y)? - y;
        Ok(self.map.adjoint_raw(&q))
    }

    /// `z = sum_k omega_k L_k* q_k` with blockwise `q_k`.
    fn blockwise_direction(&self, x: &Vector) -> Result<Vector> {
        let Some(b) = &self.blocks else {
            return self.stacked_direction(x);
        };
        let mut z = self.space().zeros();
        for (blk, w) in b.blocks.iter().zip(&b.omega) {
            let y = blk.map.apply_raw(x);
            let q = blk.op.step(self.gamma, &y)?;
            z.axpy(*w, &blk.map.adjoint_raw(&q), 1.0);
        }
        Ok(z)
    }

    /// `proj_V (Id - L*L + L* J_{gamma B} L) proj_V x`.
    pub fn relaxed_resolvent(&self, x: &Vector) -> Result<Vector> {
        self.space().check(x)?;
        let px = self.subspace.project_raw(x);
        let z = self.stacked_direction(&px)?;
        Ok(self.subspace.project_raw(&(px + z)))
    }

    /// `proj_V ◑ (L ◐ gamma B)` as a composed operator; its resolvent is
    /// [`Self::relaxed_resolvent`].
    pub fn relaxed_operator(&self) -> Result<ComposedOperator> {
        let inner = resolvent_cocomposition(&self.map, &self.operator, self.gamma, NormPolicy::Unchecked)?;
        resolvent_composition(
            &self.subspace.to_linear_map(),
            &inner.family(),
            self.gamma,
            NormPolicy::Unchecked,
        )
    }

    fn start(&self, x0: &Vector) -> Result<(Vector, bool)> {
        self.space().check(x0)?;
        let p = self.subspace.project_raw(x0);
        let moved = self.space().dist_of(&p, x0) > 1e-12 * (1.0 + self.space().norm_of(x0));
        Ok((if moved { p } else { x0.clone() }, moved))
    }

    fn iterate(
        &self,
        x0: &Vector,
        schedule: &Schedule,
        perturbation: Option<Perturbation<'_>>,
        opts: &TraceOptions,
        blockwise: bool,
    ) -> Result<(Vector, Trace)> {
        let (x0, projected) = self.start(x0)?;
        let space = self.space();
        let (x, mut trace) = drive(space, x0, schedule, perturbation, opts, |x| {
            let z = if blockwise {
                self.blockwise_direction(x)?
            } else {
                self.stacked_direction(x)?
            };
            let pz = self.subspace.project_raw(&z);
            let off = space.dist_of(x, &self.subspace.project_raw(x));
            let var = off + space.norm_of(&pz) / self.gamma;
            Ok(Step {
                displacement: pz,
                var_residual: Some(var),
            })
        })?;
        trace.projected_start = projected;
        Ok((x, trace))
    }

    /// The iteration `y = Lx, q = J_{gamma B} y - y, z = L* q,
    /// x += lambda proj_V z`. Starting points outside `V` are projected
    /// first and flagged in the trace.
    pub fn solve_relaxed(&self, x0: &Vector, schedule: &Schedule, opts: &TraceOptions) -> Result<(Vector, Trace)> {
        self.iterate(x0, schedule, None, opts, false)
    }

    /// [`Self::solve_relaxed`] with resolvent errors `c_n` added to
    /// `proj_V z_n`.
    pub fn solve_relaxed_perturbed(
        &self,
        x0: &Vector,
        schedule: &Schedule,
        perturbation: Perturbation<'_>,
        opts: &TraceOptions,
    ) -> Result<(Vector, Trace)> {
        self.iterate(x0, schedule, Some(perturbation), opts, false)
    }

    /// Same iteration evaluated block by block:
    /// `z = sum_k omega_k L_k* q_k` with `q_k = J_{gamma B_k} y_k - y_k`,
    /// `p_k - F_k y_k` for Wiener blocks and `prox_{gamma g_k} y_k - y_k`
    /// for prox blocks.
    pub fn solve_blocks(&self, x0: &Vector, schedule: &Schedule, opts: &TraceOptions) -> Result<(Vector, Trace)> {
        self.iterate(x0, schedule, None, opts, true)
    }

    /// `||x - proj_V x|| + ||proj_V L*(Yosida_gamma B (L x))||`.
    pub fn variational_residual(&self, x: &Vector) -> Result<f64> {
        self.space().check(x)?;
        let s = self.space();
        let off = s.dist_of(x, &self.subspace.project_raw(x));
        let z = self.stacked_direction(x)?;
        Ok(off + s.norm_of(&self.subspace.project_raw(&z)) / self.gamma)
    }

    /// `||L x - J_{gamma B}(L x)||`, zero exactly when `L x` is a zero of `B`.
    pub fn original_residual(&self, x: &Vector) -> Result<f64> {
        self.space().check(x)?;
        let y = self.map.apply_raw(x);
        let j = self.operator.resolvent_raw(self.gamma, &y)?;
        Ok(self.map.codomain().dist_of(&y, &j))
    }

    /// `||R x - x||` for the relaxed resolvent `R`.
    pub fn fixed_point_residual(&self, x: &Vector) -> Result<f64> {
        let r = self.relaxed_resolvent(x)?;
        Ok(self.space().dist_of(&r, x))
    }

    /// Residuals of `x` for both problems and the resulting verdict. When
    /// `certificate` is a known solution of the original problem, a relaxed
    /// solution with a nonzero original residual is reported as a violation
    /// of exactness.
    pub fn verify_exact_relaxation(&self, x: &Vector, tol: f64, certificate: Option<&Vector>) -> Result<ExactnessReport> {
        let relaxed_residual = self.fixed_point_residual(x)?;
        let variational_residual = self.variational_residual(x)?;
        let original_residual = self.original_residual(x)?;
        let off_subspace = self.space().dist_of(x, &self.subspace.project_raw(x));
        let certified = match certificate {
            Some(c) => {
                let off = self.space().dist_of(c, &self.subspace.project_raw(c));
                Some(off <= tol && self.original_residual(c)? <= tol)
            }
            None => None,
        };
        let relaxed_ok = relaxed_residual <= tol && off_subspace <= tol;
        let verdict = if !relaxed_ok {
            Verdict::NotASolution
        } else if original_residual <= tol {
            Verdict::OriginalAttained
        } else if certified == Some(true) {
            Verdict::ExactnessViolated
        } else {
            Verdict::RelaxedOnly
        };
        Ok(ExactnessReport {
            relaxed_residual,
            variational_residual,
            original_residual,
            off_subspace,
            certificate_valid: certified,
            verdict,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Solves the relaxed problem and the original one.
    OriginalAttained,
    /// Solves the relaxed problem only; the original one has no solution
    /// or none was supplied.
    RelaxedOnly,
    /// Solves the relaxed problem but not the original one although the
    /// original problem was certified solvable.
    ExactnessViolated,
    NotASolution,
}

impl Verdict {
    pub fn name(&self) -> &'static str {
        match self {
            Self::OriginalAttained => "original-attained",
            Self::RelaxedOnly => "relaxed-only",
            Self::ExactnessViolated => "exactness-violated",
            Self::NotASolution => "not-a-solution",
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ExactnessReport {
    pub relaxed_residual: f64,
    pub variational_residual: f64,
    pub original_residual: f64,
    pub off_subspace: f64,
    pub certificate_valid: Option<bool>,
    pub verdict: Verdict,
}
