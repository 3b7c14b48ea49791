//! Scalar root finding, adaptive quadrature and an embedded Runge–Kutta solver.

pub mod ode;
pub mod quadrature;
pub mod roots;
