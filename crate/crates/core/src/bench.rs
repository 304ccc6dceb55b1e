//! JSON-configured instances of the relaxed problem, a least-squares
//! reference solver, and the `solve` / `oracle` runners behind the CLI.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::compositions::NormPolicy;
use crate::error::{Error, Result};
use crate::hilbert::{LinearMap, Space, SubspaceProjector, Vector};
use crate::operators::{ConvexSet, MapFn, OperatorKind, ResolventFamily};
use crate::proxfun::ProxFunction;
use crate::random;
use crate::sampling;
use crate::solvers::{
    write_atomic, Block, BlockOperator, InstanceKind, RelaxedInstance, Relaxation, Schedule, Termination,
    TraceOptions, Verdict, DEFAULT_MAX_ITERATIONS, DEFAULT_TOL,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_STRUCTURAL: i32 = 1;
pub const EXIT_TOLERANCE: i32 = 2;
pub const SEED_ENV: &str = "RESCOMP_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    SplitFeasibility,
    CommonZero,
    FeasibilityProduct,
    Wiener,
    ProxMixture,
}

impl From<ProblemKind> for InstanceKind {
    fn from(k: ProblemKind) -> Self {
        match k {
            ProblemKind::SplitFeasibility => InstanceKind::SplitFeasibility,
            ProblemKind::CommonZero => InstanceKind::CommonZero,
            ProblemKind::FeasibilityProduct => InstanceKind::FeasibilityProduct,
            ProblemKind::Wiener => InstanceKind::Wiener,
            ProblemKind::ProxMixture => InstanceKind::ProxMixture,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl SpaceSpec {
    pub fn euclidean(dim: usize) -> Self {
        Self { dim, weights: None }
    }

    fn build(&self, field: &str) -> Result<Space> {
        let s = match &self.weights {
            None => Space::euclidean(self.dim),
            Some(w) if w.len() != self.dim => {
                return Err(field_err(field, format!("{} weights for dimension {}", w.len(), self.dim)))
            }
            Some(w) => Space::weighted(w.clone()),
        };
        s.map_err(|e| field_err(field, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpacesSpec {
    pub domain: SpaceSpec,
    /// Per-block spaces; inferred from matrix maps when omitted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub blocks: Vec<SpaceSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MapSpec {
    Matrix { rows: Vec<Vec<f64>> },
    Identity,
    ScaledIdentity { c: f64 },
    /// Gaussian map drawn from the instance seed, rescaled to `norm`.
    Random { norm: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SubspaceSpec {
    Span { vectors: Vec<Vec<f64>> },
    Full,
    /// `{(x, ..., x)}` in the product space of a feasibility-product instance.
    Diagonal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OperatorSpec {
    Zero,
    ScaledIdentity { c: f64 },
    NormalCone { set: ConvexSet },
    Linear { matrix: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FunctionSpec {
    Indicator { set: ConvexSet },
    AbsSum { coefficient: f64 },
    Quadratic { matrix: Vec<Vec<f64>>, linear: Vec<f64> },
    HalfSqDist { point: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WienerMapSpec {
    /// `F = c Id` with `c` in `[0, 1]`.
    Scaled { c: f64 },
    Linear { matrix: Vec<Vec<f64>> },
    Projection { set: ConvexSet },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WienerSpec {
    pub map: WienerMapSpec,
    pub shift: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Constant(f64),
    Sequence(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    #[serde(default = "default_lambda")]
    pub lambda: LambdaSpec,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_lambda() -> LambdaSpec {
    LambdaSpec::Constant(1.0)
}

fn default_max_iterations() -> usize {
    DEFAULT_MAX_ITERATIONS
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_gamma() -> f64 {
    1.0
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            lambda: default_lambda(),
            max_iterations: default_max_iterations(),
            tol: default_tol(),
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<Schedule> {
        let s = Schedule {
            relaxation: match &self.lambda {
                LambdaSpec::Constant(l) => Relaxation::Constant(*l),
                LambdaSpec::Sequence(ls) => Relaxation::Sequence(ls.clone()),
            },
            max_iterations: self.max_iterations,
            tol: self.tol,
        };
        s.validate().map_err(|e| field_err("schedule", e))?;
        Ok(s)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Residual threshold for the exactness verdict.
    #[serde(default = "default_verify_tol")]
    pub verify: f64,
    /// Allowed distance to the reference solution.
    #[serde(default = "default_oracle_tol")]
    pub oracle: f64,
}

fn default_verify_tol() -> f64 {
    1e-8
}

fn default_oracle_tol() -> f64 {
    1e-6
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            verify: default_verify_tol(),
            oracle: default_oracle_tol(),
        }
    }
}

/// A relaxed problem instance as read from a JSON configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub kind: ProblemKind,
    pub spaces: SpacesSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub maps: Vec<MapSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sets: Vec<ConvexSet>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub operators: Vec<OperatorSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub functions: Vec<FunctionSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wiener: Vec<WienerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub subspace: SubspaceSpec,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub schedule: ScheduleSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub unsafe_norm: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// A known solution of the original problem, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn field_err(field: &str, e: impl std::fmt::Display) -> Error {
    Error::InvalidArgument(format!("{field}: {e}"))
}

fn matrix_from_rows(rows: &[Vec<f64>], cols: usize, field: &str) -> Result<DMatrix<f64>> {
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(field_err(
            &format!("{field}.rows[{i}]"),
            format!("expected {cols} entries, got {}", r.len()),
        ));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(field_err(field, "non-finite entry"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn vector(v: &[f64], space: &Space, field: &str) -> Result<Vector> {
    let x = Vector::from_column_slice(v);
    space.check(&x).map_err(|e| field_err(field, e))?;
    Ok(x)
}

impl InstanceSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| {
            Error::InvalidArgument(format!("config line {} column {}: {e}", e.line(), e.column()))
        })?;
        spec.validate_numbers()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| field_err(&path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    fn validate_numbers(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(field_err("gamma", format!("must be positive, got {}", self.gamma)));
        }
        if let Some(w) = &self.weights {
            if let Some((i, v)) = w.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
                return Err(field_err(&format!("weights[{i}]"), format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn block_count(&self) -> usize {
        match self.kind {
            ProblemKind::SplitFeasibility | ProblemKind::FeasibilityProduct => self.sets.len(),
            ProblemKind::CommonZero => self.operators.len().max(self.sets.len()),
            ProblemKind::Wiener => self.wiener.len(),
            ProblemKind::ProxMixture => self.functions.len(),
        }
    }

    fn omega(&self, p: usize) -> Result<Vec<f64>> {
        match &self.weights {
            Some(w) if w.len() != p => Err(field_err("weights", format!("{} weights for {p} blocks", w.len()))),
            Some(w) => Ok(w.clone()),
            None => Ok(vec![1.0 / p as f64; p]),
        }
    }

    fn policy(&self, unsafe_norm: bool) -> NormPolicy {
        if self.unsafe_norm || unsafe_norm {
            NormPolicy::Unchecked
        } else {
            NormPolicy::Enforce
        }
    }

    /// Block codomains and maps, in block order.
    fn block_maps(&self, h: &Space, p: usize, identity_only: bool) -> Result<Vec<LinearMap>> {
        let mut rng = random::seeded(self.seed);
        let maps = if self.maps.is_empty() {
            vec![MapSpec::Identity; p]
        } else if self.maps.len() != p {
            return Err(field_err("maps", format!("{} maps for {p} blocks", self.maps.len())));
        } else {
            self.maps.clone()
        };
        let mut out = Vec::with_capacity(p);
        for (k, m) in maps.iter().enumerate() {
            let field = format!("maps[{k}]");
            let g = match self.spaces.blocks.get(k) {
                Some(s) => s.build(&format!("spaces.blocks[{k}]"))?,
                None if !self.spaces.blocks.is_empty() => {
                    return Err(field_err("spaces.blocks", format!("{} spaces for {p} blocks", self.spaces.blocks.len())))
                }
                None => match m {
                    MapSpec::Matrix { rows } => Space::euclidean(rows.len()).map_err(|e| field_err(&field, e))?,
                    _ => h.clone(),
                },
            };
            if identity_only && !matches!(m, MapSpec::Identity) {
                return Err(field_err(&field, "common-zero instances use identity maps"));
            }
            let l = match m {
                MapSpec::Matrix { rows } => {
                    let a = matrix_from_rows(rows, h.dim(), &field)?;
                    LinearMap::new(h.clone(), g, a)
                }
                MapSpec::Identity => {
                    g.ensure_same(h, "identity map").map(|_| LinearMap::identity(h))
                }
                MapSpec::ScaledIdentity { c } => {
                    g.ensure_same(h, "scaled identity").map(|_| LinearMap::scaled_identity(h, *c))
                }
                MapSpec::Random { norm } => {
                    if !(norm.is_finite() && *norm > 0.0) {
                        return Err(field_err(&field, format!("norm must be positive, got {norm}")));
                    }
                    sampling::random_map(&mut rng, h, &g, *norm)
                }
            }
            .map_err(|e| field_err(&field, e))?;
            out.push(l);
        }
        Ok(out)
    }

    fn subspace(&self, h: &Space) -> Result<SubspaceProjector> {
        match &self.subspace {
            SubspaceSpec::Full => Ok(SubspaceProjector::full(h)),
            SubspaceSpec::Span { vectors } => {
                let vs = vectors
                    .iter()
                    .enumerate()
                    .map(|(i, v)| vector(v, h, &format!("subspace.vectors[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                let v = SubspaceProjector::new(h, &vs).map_err(|e| field_err("subspace", e))?;
                if v.is_trivial() {
                    return Err(field_err("subspace", "spans {0}"));
                }
                Ok(v)
            }
            SubspaceSpec::Diagonal => Err(field_err("subspace", "diagonal is only valid for feasibility-product")),
        }
    }

    fn set_family(set: &ConvexSet, space: &Space, field: &str) -> Result<ResolventFamily> {
        ResolventFamily::normal_cone(space, set.clone()).map_err(|e| field_err(field, e))
    }
}

/// Builds the relaxed instance described by `spec`. Random maps are drawn
/// from `spec.seed`.
pub fn generate_instance(spec: &InstanceSpec) -> Result<RelaxedInstance> {
    generate_with(spec, false)
}

fn generate_with(spec: &InstanceSpec, unsafe_norm: bool) -> Result<RelaxedInstance> {
    let h = spec.spaces.domain.build("spaces.domain")?;
    let p = spec.block_count();
    if p == 0 {
        return Err(field_err(spec.kind_field(), "at least one block is required"));
    }
    let omega = spec.omega(p)?;
    let policy = spec.policy(unsafe_norm);
    let kind = InstanceKind::from(spec.kind);

    if spec.kind == ProblemKind::FeasibilityProduct {
        if !spec.maps.is_empty() {
            return Err(field_err("maps", "feasibility-product uses the identity on the product space"));
        }
        let factors = vec![h.clone(); p];
        let product = Space::product(&factors, &omega).map_err(|e| field_err("weights", e))?;
        let cones = spec
            .sets
            .iter()
            .enumerate()
            .map(|(i, s)| InstanceSpec::set_family(s, &h, &format!("sets[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let b = ResolventFamily::product(cones, &omega)?;
        let v = match spec.subspace {
            SubspaceSpec::Diagonal => {
                let n = h.dim();
                let span: Vec<Vector> = (0..n)
                    .map(|j| Vector::from_fn(n * p, |i, _| if i % n == j { 1.0 } else { 0.0 }))
                    .collect();
                SubspaceProjector::new(&product, &span)?
            }
            _ => return Err(field_err("subspace", "feasibility-product requires the diagonal subspace")),
        };
        return RelaxedInstance::new(&v, &LinearMap::identity(&product), &b, spec.gamma, kind, policy);
    }

    let v = spec.subspace(&h)?;
    let maps = spec.block_maps(&h, p, spec.kind == ProblemKind::CommonZero)?;
    let mut blocks = Vec::with_capacity(p);
    for (k, map) in maps.into_iter().enumerate() {
        let g = map.codomain().clone();
        let op = match spec.kind {
            ProblemKind::SplitFeasibility => {
                BlockOperator::Resolvent(InstanceSpec::set_family(&spec.sets[k], &g, &format!("sets[{k}]"))?)
            }
            ProblemKind::CommonZero => {
                let b = if spec.operators.is_empty() {
                    InstanceSpec::set_family(&spec.sets[k], &g, &format!("sets[{k}]"))?
                } else {
                    build_operator(&spec.operators[k], &g, &format!("operators[{k}]"))?
                };
                BlockOperator::Resolvent(b)
            }
            ProblemKind::Wiener => {
                BlockOperator::Wiener(build_wiener(&spec.wiener[k], &g, &format!("wiener[{k}]"))?)
            }
            ProblemKind::ProxMixture => {
                BlockOperator::Prox(build_function(&spec.functions[k], &g, &format!("functions[{k}]"))?)
            }
            ProblemKind::FeasibilityProduct => unreachable!(),
        };
        blocks.push(Block { map, op });
    }
    RelaxedInstance::from_blocks(&v, blocks, &omega, spec.gamma, kind, policy)
}

impl InstanceSpec {
    fn kind_field(&self) -> &'static str {
        match self.kind {
            ProblemKind::SplitFeasibility | ProblemKind::FeasibilityProduct => "sets",
            ProblemKind::CommonZero => "operators",
            ProblemKind::Wiener => "wiener",
            ProblemKind::ProxMixture => "functions",
        }
    }
}

fn build_operator(spec: &OperatorSpec, g: &Space, field: &str) -> Result<ResolventFamily> {
    match spec {
        OperatorSpec::Zero => Ok(ResolventFamily::zero(g)),
        OperatorSpec::ScaledIdentity { c } => ResolventFamily::scaled_identity(g, *c),
        OperatorSpec::NormalCone { set } => ResolventFamily::normal_cone(g, set.clone()),
        OperatorSpec::Linear { matrix } => {
            ResolventFamily::linear(g, matrix_from_rows(matrix, g.dim(), field)?, &[1.0])
        }
    }
    .map_err(|e| field_err(field, e))
}

fn build_function(spec: &FunctionSpec, g: &Space, field: &str) -> Result<ProxFunction> {
    match spec {
        FunctionSpec::Indicator { set } => ProxFunction::indicator(g, set.clone()),
        FunctionSpec::AbsSum { coefficient } => ProxFunction::abs_sum(g, *coefficient),
        FunctionSpec::Quadratic { matrix, linear } => ProxFunction::quadratic(
            g,
            matrix_from_rows(matrix, g.dim(), field)?,
            vector(linear, g, &format!("{field}.linear"))?,
        ),
        FunctionSpec::HalfSqDist { point } => ProxFunction::half_sq_dist(g, vector(point, g, &format!("{field}.point"))?),
    }
    .map_err(|e| field_err(field, e))
}

/// The matrix of an affine Wiener map, when it has one.
fn wiener_matrix(spec: &WienerMapSpec, g: &Space, field: &str) -> Result<Option<DMatrix<f64>>> {
    let n = g.dim();
    Ok(match spec {
        WienerMapSpec::Scaled { c } => Some(DMatrix::identity(n, n) * *c),
        WienerMapSpec::Linear { matrix } => Some(matrix_from_rows(matrix, n, field)?),
        WienerMapSpec::Projection { .. } => None,
    })
}

fn build_wiener(spec: &WienerSpec, g: &Space, field: &str) -> Result<ResolventFamily> {
    let shift = vector(&spec.shift, g, &format!("{field}.shift"))?;
    let map: MapFn = match &spec.map {
        WienerMapSpec::Scaled { c } => {
            if !(0.0..=1.0).contains(c) {
                return Err(field_err(field, format!("c Id is firmly nonexpansive only for c in [0, 1], got {c}")));
            }
            let c = *c;
            Arc::new(move |y: &Vector| y * c)
        }
        WienerMapSpec::Linear { .. } => {
            let m = wiener_matrix(&spec.map, g, field)?.expect("linear map");
            Arc::new(move |y: &Vector| &m * y)
        }
        WienerMapSpec::Projection { set } => {
            set.validate(g).map_err(|e| field_err(field, e))?;
            let (set, space) = (set.clone(), g.clone());
            Arc::new(move |y: &Vector| set.project(&space, y).expect("validated set"))
        }
    };
    ResolventFamily::make_wiener(g, map, shift).map_err(|e| field_err(field, e))
}

/// Reference solution of an affine relaxed problem.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleSolution {
    pub point: Vec<f64>,
    /// `sum_k omega_k ||L_k x - p_k||^2` for least-squares problems.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    /// The normal system was singular; `point` is its minimum-norm
    /// solution.
    pub rank_deficient: bool,
}

/// Solves `(L U)* (A L U c - p) = 0` for the coordinates `c` of `x = U c`
/// in an orthonormal basis `U` of `V`, with adjoints taken in the metric
/// of the codomain of `L`.
pub fn affine_oracle(v: &SubspaceProjector, map: &LinearMap, a: &DMatrix<f64>, p: &Vector) -> Result<(Vector, bool)> {
    let g = map.codomain();
    g.check(p)?;
    let u = v.basis_matrix();
    let lu = map.matrix() * &u;
    let mut wlu = lu.clone();
    for (i, mut row) in wlu.row_iter_mut().enumerate() {
        row *= g.weights()[i];
    }
    let normal = wlu.transpose() * a * &lu;
    let rhs = wlu.transpose() * p;
    let r = normal.nrows();
    let svd = normal.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let rank = svd.rank(eps);
    let c = if rank == r {
        normal.lu().solve(&rhs).ok_or_else(|| Error::Singular("normal equations".into()))?
    } else {
        svd.solve(&rhs, eps).map_err(|e| Error::Singular(e.to_string()))?
    };
    Ok((u * c, rank < r))
}

fn singleton_targets(b: &ResolventFamily) -> Option<Vec<f64>> {
    match b.kind() {
        OperatorKind::NormalCone(ConvexSet::Singleton { point }) => Some(point.clone()),
        OperatorKind::Product(p) => {
            let mut out = Vec::new();
            for blk in p.blocks() {
                out.extend(singleton_targets(blk)?);
            }
            Some(out)
        }
        _ => None,
    }
}

/// Minimizer over `x in V` of `sum_k omega_k ||L_k x - p_k||^2` for
/// instances whose operators are normal cones of singletons `{p_k}`,
/// computed from the normal equations (minimum-norm solution when they
/// are singular).
pub fn least_squares_oracle(inst: &RelaxedInstance) -> Result<OracleSolution> {
    let targets = singleton_targets(inst.operator())
        .ok_or_else(|| Error::InvalidArgument("least-squares oracle needs singleton sets".into()))?;
    let p = Vector::from_vec(targets);
    let g = inst.map().codomain();
    let a = DMatrix::identity(g.dim(), g.dim());
    let (x, rank_deficient) = affine_oracle(inst.subspace(), inst.map(), &a, &p)?;
    let objective = g.norm_sq(&(inst.map().apply(&x)? - &p));
    Ok(OracleSolution {
        point: x.iter().copied().collect(),
        objective: Some(objective),
        rank_deficient,
    })
}

/// Solution of the relaxed Wiener problem when every `F_k` is linear.
pub fn wiener_oracle(spec: &InstanceSpec, inst: &RelaxedInstance) -> Result<OracleSolution> {
    let g = inst.map().codomain();
    let mut a = DMatrix::zeros(g.dim(), g.dim());
    let mut shift = Vec::with_capacity(g.dim());
    let mut o = 0;
    for (k, w) in spec.wiener.iter().enumerate() {
        let n = w.shift.len();
        let gk = Space::euclidean(n)?;
        let m = wiener_matrix(&w.map, &gk, &format!("wiener[{k}]"))?
            .ok_or_else(|| Error::InvalidArgument(format!("wiener[{k}]: no closed form for a projection map")))?;
        a.view_mut((o, o), (n, n)).copy_from(&m);
        shift.extend_from_slice(&w.shift);
        o += n;
    }
    let (x, rank_deficient) = affine_oracle(inst.subspace(), inst.map(), &a, &Vector::from_vec(shift))?;
    Ok(OracleSolution {
        point: x.iter().copied().collect(),
        objective: None,
        rank_deficient,
    })
}

/// The reference solution for `spec`, when one is available.
pub fn oracle_for(spec: &InstanceSpec, inst: &RelaxedInstance) -> Option<Result<OracleSolution>> {
    match spec.kind {
        ProblemKind::Wiener => {
            let affine = spec.wiener.iter().all(|w| !matches!(w.map, WienerMapSpec::Projection { .. }));
            affine.then(|| wiener_oracle(spec, inst))
        }
        ProblemKind::ProxMixture => None,
        _ => singleton_targets(inst.operator()).map(|_| least_squares_oracle(inst)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleComparison {
    pub point: Vec<f64>,
    pub distance: f64,
    pub rank_deficient: bool,
    pub within_tolerance: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub kind: ProblemKind,
    pub seed: u64,
    pub gamma: f64,
    pub iterations: usize,
    pub converged: bool,
    pub projected_start: bool,
    pub final_iterate: Vec<f64>,
    pub fixed_point_residual: f64,
    pub variational_residual: f64,
    pub original_residual: f64,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<PathBuf>,
    pub wall_ns: u64,
}

impl RunReport {
    /// Whether every tolerance check passed.
    pub fn passed(&self) -> bool {
        self.converged
            && matches!(self.verdict, Verdict::OriginalAttained | Verdict::RelaxedOnly)
            && self.oracle.as_ref().is_none_or(|o| o.within_tolerance)
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub trace: Option<PathBuf>,
    pub unsafe_norm: bool,
    pub seed_override: Option<u64>,
}

impl RunOptions {
    /// Picks up the seed override from the environment.
    pub fn with_env_seed(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            let seed = v
                .trim()
                .parse()
                .map_err(|e| Error::InvalidArgument(format!("{SEED_ENV}={v}: {e}")))?;
            self.seed_override = Some(seed);
        }
        Ok(self)
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub code: i32,
    pub report: Option<RunReport>,
    pub error: Option<Error>,
}

/// Solves an already-parsed instance and writes the configured outputs.
pub fn run_spec(spec: &InstanceSpec, opts: &RunOptions) -> Result<RunReport> {
    let mut spec = spec.clone();
    if let Some(seed) = opts.seed_override {
        spec.seed = seed;
    }
    let inst = generate_with(&spec, opts.unsafe_norm)?;
    let schedule = spec.schedule.build()?;
    let space = inst.space();
    let x0 = match &spec.x0 {
        Some(v) => vector(v, space, "x0")?,
        None => space.zeros(),
    };
    let certificate = spec.certificate.as_ref().map(|c| vector(c, space, "certificate")).transpose()?;
    let oracle = oracle_for(&spec, &inst).transpose()?;
    let trace_opts = TraceOptions {
        reference: oracle.as_ref().map(|o| Vector::from_column_slice(&o.point)),
        ..TraceOptions::default()
    };
    let start = Instant::now();
    let (x, trace) = match inst.kind() {
        InstanceKind::Wiener | InstanceKind::ProxMixture | InstanceKind::Mixture => {
            inst.solve_blocks(&x0, &schedule, &trace_opts)?
        }
        _ => inst.solve_relaxed(&x0, &schedule, &trace_opts)?,
    };
    let wall_ns = start.elapsed().as_nanos() as u64;
    let check = inst.verify_exact_relaxation(&x, spec.tolerances.verify, certificate.as_ref())?;
    let oracle = oracle.map(|o| {
        let distance = space.dist_of(&x, &Vector::from_column_slice(&o.point));
        OracleComparison {
            within_tolerance: distance <= spec.tolerances.oracle,
            point: o.point,
            distance,
            rank_deficient: o.rank_deficient,
        }
    });
    let trace_path = opts.trace.clone().or_else(|| spec.output.trace.clone());
    if let Some(path) = &trace_path {
        trace.save_csv(path)?;
    }
    let report = RunReport {
        kind: spec.kind,
        seed: spec.seed,
        gamma: spec.gamma,
        iterations: trace.iterations,
        converged: trace.termination == Termination::Converged,
        projected_start: trace.projected_start,
        final_iterate: x.iter().copied().collect(),
        fixed_point_residual: check.relaxed_residual,
        variational_residual: check.variational_residual,
        original_residual: check.original_residual,
        verdict: check.verdict,
        oracle,
        trace_path,
        wall_ns,
    };
    if let Some(path) = &spec.output.report {
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        write_atomic(path, text.as_bytes())?;
    }
    Ok(report)
}

/// Parses, builds, solves and verifies the instance in `config`. Exit code
/// 0 on success, 1 on structural errors (I/O, parse, invalid instance,
/// norm gate), 2 when a tolerance check fails.
pub fn run(config: &Path, opts: &RunOptions) -> RunOutcome {
    let result = InstanceSpec::load(config).and_then(|spec| run_spec(&spec, opts));
    match result {
        Ok(report) => RunOutcome {
            code: if report.passed() { EXIT_OK } else { EXIT_TOLERANCE },
            report: Some(report),
            error: None,
        },
        Err(e) => RunOutcome {
            code: EXIT_STRUCTURAL,
            report: None,
            error: Some(e),
        },
    }
}

/// The reference solution for the instance in `config`.
pub fn oracle(config: &Path, opts: &RunOptions) -> Result<OracleSolution> {
    let mut spec = InstanceSpec::load(config)?;
    if let Some(seed) = opts.seed_override {
        spec.seed = seed;
    }
    let inst = generate_with(&spec, opts.unsafe_norm)?;
    oracle_for(&spec, &inst)
        .ok_or_else(|| Error::InvalidArgument(format!("no closed-form reference for {:?} instances", spec.kind)))?
}

/// The two-point instance in the plane: `V = span{(1, 1)}`, coordinate
/// maps, `omega = (1/2, 1/2)`, `D_1 = {d1}`, `D_2 = {d2}`, `gamma = 1`.
pub fn planar_singleton_spec(d1: f64, d2: f64) -> InstanceSpec {
    InstanceSpec {
        kind: ProblemKind::SplitFeasibility,
        spaces: SpacesSpec {
            domain: SpaceSpec::euclidean(2),
            blocks: vec![],
        },
        maps: vec![
            MapSpec::Matrix { rows: vec![vec![1.0, 0.0]] },
            MapSpec::Matrix { rows: vec![vec![0.0, 1.0]] },
        ],
        sets: vec![ConvexSet::singleton(&[d1]), ConvexSet::singleton(&[d2])],
        operators: vec![],
        functions: vec![],
        wiener: vec![],
        weights: Some(vec![0.5, 0.5]),
        subspace: SubspaceSpec::Span {
            vectors: vec![vec![1.0, 1.0]],
        },
        gamma: 1.0,
        schedule: ScheduleSpec::default(),
        seed: 0,
        output: OutputSpec::default(),
        unsafe_norm: false,
        x0: None,
        certificate: None,
        tolerances: Tolerances::default(),
    }
}

/// A random split-feasibility instance with singleton targets whose
/// relaxed solution is unique and well conditioned.
pub fn random_singleton_instance<R: Rng + ?Sized>(rng: &mut R) -> Result<RelaxedInstance> {
    loop {
        let n = rng.random_range(2..=4);
        let h = sampling::random_space(rng, n);
        let r = rng.random_range(1..=n);
        let span: Vec<Vector> = (0..r).map(|_| random::gaussian_vector(rng, n, 1.0)).collect();
        let v = SubspaceProjector::new(&h, &span)?;
        let p = rng.random_range(1..=3);
        let mut blocks = Vec::with_capacity(p);
        for _ in 0..p {
            let m = rng.random_range(1..=3);
            let g = sampling::random_space(rng, m);
            let map = sampling::random_contraction(rng, &h, &g)?;
            let target: Vec<f64> = random::gaussian_vector(rng, m, 1.0).iter().copied().collect();
            let op = BlockOperator::Resolvent(ResolventFamily::normal_cone(&g, ConvexSet::Singleton { point: target })?);
            blocks.push(Block { map, op });
        }
        let omega = vec![1.0 / p as f64; p];
        let inst = RelaxedInstance::from_blocks(&v, blocks, &omega, 1.0, InstanceKind::SplitFeasibility, NormPolicy::Enforce)?;
        // conditioning of U* L* L U decides the contraction rate
        let u = v.basis_matrix();
        let lu = inst.map().matrix() * &u;
        let mut wlu = lu.clone();
        for (i, mut row) in wlu.row_iter_mut().enumerate() {
            row *= inst.map().codomain().weights()[i];
        }
        let gram = wlu.transpose() * lu;
        if gram.symmetric_eigenvalues().min() > 0.02 {
            return Ok(inst);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn planar_instance_oracle() {
        let inst = generate_instance(&planar_singleton_spec(1.0, 3.0)).unwrap();
        let o = least_squares_oracle(&inst).unwrap();
        assert!((o.point[0] - 2.0).abs() < 1e-14 && (o.point[1] - 2.0).abs() < 1e-14);
        assert!(!o.rank_deficient);
        // (1/2)(2-1)^2 + (1/2)(2-3)^2
        assert!((o.objective.unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn oracle_trivial_cases() {
        let spec = planar_singleton_spec(1.0, 1.0);
        let inst = generate_instance(&spec).unwrap();
        let o = least_squares_oracle(&inst).unwrap();
        assert!(o.objective.unwrap() < 1e-28);

        let mut spec = planar_singleton_spec(0.0, 0.0);
        spec.kind = ProblemKind::CommonZero;
        spec.maps = vec![];
        spec.sets = vec![ConvexSet::singleton(&[1.0, -2.0])];
        spec.weights = None;
        spec.subspace = SubspaceSpec::Full;
        let inst = generate_instance(&spec).unwrap();
        let o = least_squares_oracle(&inst).unwrap();
        assert!((Vector::from_vec(o.point) - dvector![1.0, -2.0]).amax() < 1e-14);
    }

    #[test]
    fn rank_deficient_oracle_is_flagged() {
        let mut spec = planar_singleton_spec(1.0, 3.0);
        spec.maps = vec![
            MapSpec::Matrix { rows: vec![vec![1.0, 0.0]] },
            MapSpec::Matrix { rows: vec![vec![1.0, 0.0]] },
        ];
        spec.subspace = SubspaceSpec::Full;
        let inst = generate_instance(&spec).unwrap();
        let o = least_squares_oracle(&inst).unwrap();
        assert!(o.rank_deficient);
        assert!((o.point[0] - 2.0).abs() < 1e-12 && o.point[1].abs() < 1e-12);
    }

    #[test]
    fn spec_round_trip() {
        let spec = planar_singleton_spec(1.0, 3.0);
        let back = InstanceSpec::parse(&spec.to_json()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn parse_errors_name_the_field() {
        let bad = r#"{"kind": "split-feasibility", "spaces": {"domain": {"dim": 2}}, "subspace": {"type": "full"}, "gamma": -1}"#;
        let e = InstanceSpec::parse(bad).unwrap_err().to_string();
        assert!(e.contains("gamma"), "{e}");
        let bad = r#"{"kind": "nope", "spaces": {"domain": {"dim": 2}}, "subspace": {"type": "full"}}"#;
        let e = InstanceSpec::parse(bad).unwrap_err().to_string();
        assert!(e.contains("line 1"), "{e}");
        let mut spec = planar_singleton_spec(1.0, 3.0);
        spec.maps[1] = MapSpec::Matrix { rows: vec![vec![0.0, 1.0, 2.0]] };
        let e = generate_instance(&spec).unwrap_err().to_string();
        assert!(e.contains("maps[1]"), "{e}");
    }

    #[test]
    fn feasibility_product_overlapping_intervals() {
        let spec = InstanceSpec {
            kind: ProblemKind::FeasibilityProduct,
            sets: vec![ConvexSet::interval(0.0, 2.0), ConvexSet::interval(1.0, 3.0)],
            maps: vec![],
            weights: None,
            subspace: SubspaceSpec::Diagonal,
            spaces: SpacesSpec {
                domain: SpaceSpec::euclidean(1),
                blocks: vec![],
            },
            x0: Some(vec![5.0, 5.0]),
            ..planar_singleton_spec(0.0, 0.0)
        };
        let report = run_spec(&spec, &RunOptions::default()).unwrap();
        assert_eq!(report.verdict, Verdict::OriginalAttained);
        let x = report.final_iterate[0];
        assert!((1.0 - 1e-9..=2.0 + 1e-9).contains(&x));
        assert!((report.final_iterate[1] - x).abs() < 1e-12);
    }

    #[test]
    fn wiener_instance_matches_closed_form() {
        let spec = InstanceSpec {
            kind: ProblemKind::Wiener,
            maps: vec![MapSpec::Identity],
            sets: vec![],
            wiener: vec![WienerSpec {
                map: WienerMapSpec::Scaled { c: 0.5 },
                shift: vec![3.0, 1.0],
            }],
            weights: Some(vec![1.0]),
            subspace: SubspaceSpec::Span {
                vectors: vec![vec![1.0, 0.0]],
            },
            ..planar_singleton_spec(0.0, 0.0)
        };
        let report = run_spec(&spec, &RunOptions::default()).unwrap();
        let o = report.oracle.as_ref().unwrap();
        assert!((o.point[0] - 6.0).abs() < 1e-12 && o.point[1].abs() < 1e-12);
        assert!(report.passed());
    }

    #[test]
    fn norm_gate_is_structural() {
        let mut spec = planar_singleton_spec(1.0, 3.0);
        spec.maps[0] = MapSpec::Matrix { rows: vec![vec![2.0, 0.0]] };
        let e = run_spec(&spec, &RunOptions::default()).unwrap_err();
        assert!(matches!(e, Error::ContractionCondition { .. }), "{e}");
    }

    #[test]
    fn random_singleton_instances_are_well_posed() {
        let mut rng = random::seeded(11);
        for _ in 0..5 {
            let inst = random_singleton_instance(&mut rng).unwrap();
            assert!(least_squares_oracle(&inst).is_ok());
        }
    }
}
