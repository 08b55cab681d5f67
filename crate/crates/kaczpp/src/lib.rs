//! Randomized block solvers for dense linear systems.
//!
//! The crate bundles:
//! - [`linalg`]: dense matrix/vector kernels (products, Cholesky, Jacobi SVD);
//! - [`transforms`]: fast Hadamard transforms, the symmetric two-sided
//!   variant, and randomized Hadamard / subsampled sketching operators;
//! - [`problems`]: synthetic and kernel test problem generators plus disk I/O;
//! - [`metering`]: FLOP accounting and convergence traces;
//! - [`baselines`]: CG, GMRES and LSQR reference solvers;
//! - [`kaczmarz`]: the accelerated block Kaczmarz solver for general systems;
//! - [`cdpp`]: the coordinate-descent specialization for positive definite
//!   systems;
//! - [`oracles`]: small-scale enumeration checks of the convergence theory.

pub mod baselines;
pub mod cdpp;
pub mod kaczmarz;
pub mod linalg;
pub mod metering;
pub mod oracles;
pub mod problems;
pub mod transforms;
