//! Continuum objects: special functions, limit oracles and quadrature.

pub mod quad;
pub mod special;
pub mod iterated;
pub mod oracle;
