//! Numerical laboratory for partial curvature invariants on the Grassmann
//! bundle, approximate constant-mean-curvature spheres and the asymptotic
//! expansions of their volume and energy.

pub mod ad;
pub mod curvature;
pub mod error;
pub mod expansion;
pub mod fit;
pub mod grassmann;
pub mod metric;
pub mod model;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod submanifold;

pub use error::{GeomError, Result};
