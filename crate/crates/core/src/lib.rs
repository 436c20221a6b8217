//! Spreading speeds, traveling waves, and entropy-based stability verification
//! for reaction systems with nonlocal (convolution) dispersal.
//!
//! The library is organized around the evolution law
//!
//! ```text
//! d/dt u_i = (J * u_i) - u_i + u_i f_i(u),    i = 1..n,
//! ```
//!
//! where `J` is a symmetric dispersal kernel shared by all components and
//! `f` collects the per-capita reaction rates. The pieces:
//!
//! * [`kernels`]: kernel shapes, their moment generating functions, spatial
//!   grids, and discrete convolution operators.
//! * [`spectral`]: the speed function `G(lambda) = (M(lambda) - 1 + R) / lambda`,
//!   minimal wave speeds, and exponential weight rates.
//! * [`models`]: the catalog of cooperative reaction systems in affine
//!   per-capita form, with their comparison weights `sigma`.
//! * [`simulate`]: method-of-lines time stepping in lab or moving frame.
//! * [`waves`]: traveling-wave profile computation by relaxation, and a
//!   high-order residual check for candidate profiles.
//! * [`entropy`]: weighted relative-entropy functionals, the decaying
//!   supremum diagnostic, and the subsolution residual.
//! * [`harness`]: experiment configs, run manifests, and trace output.

pub mod entropy;
pub mod harness;
pub mod kernels;
mod linalg;
pub mod models;
pub mod simulate;
pub mod spectral;
pub mod waves;
