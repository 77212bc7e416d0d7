pub mod elliptic;
pub mod extrapolate;
pub mod integrators;
pub mod quadrature;
