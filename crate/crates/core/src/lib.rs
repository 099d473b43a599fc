//! Numerical Bergman kernels and metrics on strictly pseudoconvex domains.
//!
//! The crate models `L²_h(G)` by finite monomial bases whose Gram matrices are
//! assembled with seeded low-discrepancy quadrature, and uses that model to
//! measure how kernels and metrics of a domain compare with those of its
//! boundary caps `G ∩ B(ζ, R)`.
//!
//! Module map:
//! - [`domain`]: defining functions, Levi forms, boundary geometry, families.
//! - [`quadrature`]: deterministic interior sampling.
//! - [`basis`], [`linalg`]: monomial bases and the dense complex algebra behind them.
//! - [`bergman`]: Gram systems, the kernel `K`, the extremal quantity `M` and the metric `β`.
//! - [`peak`]: Levi-polynomial peak functions and their certification.
//! - [`extend`]: extension of `L²_h` functions from caps to the whole domain.
//! - [`localize`]: cap-versus-domain ratio sweeps and family uniformity.

pub mod basis;
pub mod bergman;
pub mod cache;
pub mod domain;
pub mod error;
pub mod extend;
pub mod linalg;
pub mod localize;
pub mod peak;
pub mod quadrature;

pub use num_complex::Complex64;

pub use error::{Error, ErrorClass, Result};

/// A point of `Cⁿ`, one complex number per coordinate.
pub type Point = Vec<Complex64>;

/// Hermitian norm `‖z‖` of a point or direction.
pub fn norm(z: &[Complex64]) -> f64 {
    z.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Euclidean distance between two points of `Cⁿ`.
pub fn dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}
