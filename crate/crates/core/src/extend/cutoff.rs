use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::Point;

/// `σ(x) = 6x⁵ − 15x⁴ + 10x³` on `[0, 1]`, clamped to 0 and 1 outside.
pub fn smoothstep(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * (x * (6.0 * x - 15.0) + 10.0)
    }
}

fn smoothstep_derivative(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        30.0 * x * x * (1.0 - x) * (1.0 - x)
    }
}

/// Radial cutoff `χ(z) = σ((9η₁/5 − ‖z − ζ‖)/(3η₁/5))`: equal to 1 on
/// `B(ζ, 6η₁/5)` and 0 outside `B(ζ, 9η₁/5)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub center: Point,
    pub eta1: f64,
}

pub fn cutoff_chi(center: &[Complex64], eta1: f64) -> Cutoff {
    Cutoff {
        center: center.to_vec(),
        eta1,
    }
}

impl Cutoff {
    pub fn inner_radius(&self) -> f64 {
        1.2 * self.eta1
    }

    pub fn outer_radius(&self) -> f64 {
        1.8 * self.eta1
    }

    fn arg(&self, r: f64) -> f64 {
        (9.0 * self.eta1 / 5.0 - r) / (3.0 * self.eta1 / 5.0)
    }

    pub fn value(&self, z: &[Complex64]) -> f64 {
        smoothstep(self.arg(crate::dist(z, &self.center)))
    }

    /// `∂χ/∂z̄_j = σ'(u)·(−5/(3η₁))·(z_j − ζ_j)/(2‖z − ζ‖)`.
    pub fn dbar(&self, z: &[Complex64]) -> Vec<Complex64> {
        let r = crate::dist(z, &self.center);
        let s = smoothstep_derivative(self.arg(r));
        if s == 0.0 || r == 0.0 {
            return vec![Complex64::new(0.0, 0.0); z.len()];
        }
        let factor = -s / (3.0 * self.eta1 / 5.0) / (2.0 * r);
        z.iter().zip(&self.center).map(|(a, b)| (a - b) * factor).collect()
    }
}
