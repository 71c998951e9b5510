//! Small numerical kernels shared by the physics modules: a bracketed
//! root finder, adaptive Gauss-Kronrod quadrature and an adaptive
//! Dormand-Prince integrator for scalar ODEs.

pub mod ode;
pub mod quadrature;
pub mod roots;
