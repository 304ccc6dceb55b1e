//! Resolvent and proximal compositions of monotone operators and convex
//! functions, with relaxed proximal point solvers for inconsistent
//! composite inclusions.

pub mod bench;
pub mod compositions;
pub mod error;
pub mod hilbert;
pub mod operators;
pub mod properties;
pub mod proxfun;
pub mod random;
pub mod sampling;
pub mod solvers;

pub use compositions::{ComposedOperator, NormPolicy};
pub use error::{Error, Result};
pub use hilbert::{stack, LinearMap, Space, SubspaceProjector, Vector};
pub use operators::{ConvexSet, GraphPoint, ResolventFamily, ScaleDomain};
pub use proxfun::ProxFunction;
pub use solvers::{RelaxedInstance, Schedule, Trace};
