//! Monomial bases `φ_α(z) = Π ((z_j − c_j)/s)^{α_j}` of total degree ≤ D.
//!
//! The affine frame `(c, s)` does not change the spanned space `Π_D`; it only
//! keeps Gram matrices of small regions well scaled.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::quadrature::QuadratureSet;
use crate::Point;

/// Affine frame of a monomial basis: center `c` and scale `s > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub center: Point,
    pub scale: f64,
}

impl Frame {
    pub fn origin(n: usize) -> Frame {
        Frame {
            center: vec![Complex64::new(0.0, 0.0); n],
            scale: 1.0,
        }
    }

    /// Center at the midpoint of the nodes' bounding box, scale equal to the
    /// largest node distance from that center.
    pub fn fit(q: &QuadratureSet) -> Frame {
        let n = q.n();
        let mut lo = vec![f64::INFINITY; 2 * n];
        let mut hi = vec![f64::NEG_INFINITY; 2 * n];
        for z in q.points() {
            for (j, c) in z.iter().enumerate() {
                lo[2 * j] = lo[2 * j].min(c.re);
                hi[2 * j] = hi[2 * j].max(c.re);
                lo[2 * j + 1] = lo[2 * j + 1].min(c.im);
                hi[2 * j + 1] = hi[2 * j + 1].max(c.im);
            }
        }
        let center: Point = (0..n)
            .map(|j| Complex64::new(0.5 * (lo[2 * j] + hi[2 * j]), 0.5 * (lo[2 * j + 1] + hi[2 * j + 1])))
            .collect();
        let scale = q
            .points()
            .map(|z| crate::dist(z, &center))
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        Frame { center, scale }
    }
}

/// Serializable identity of a basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub n: usize,
    pub degree: u32,
    pub frame: Frame,
}

/// Graded-lexicographic monomial basis.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialBasis {
    n: usize,
    degree: u32,
    frame: Frame,
    indices: Vec<Vec<u32>>,
    block_starts: Vec<usize>,
}

impl MonomialBasis {
    /// Plain monomials `z^α`.
    pub fn new(n: usize, degree: u32) -> MonomialBasis {
        MonomialBasis::with_frame(n, degree, Frame::origin(n))
    }

    pub fn with_frame(n: usize, degree: u32, frame: Frame) -> MonomialBasis {
        assert!(n >= 1 && frame.center.len() == n && frame.scale > 0.0);
        let mut indices = Vec::new();
        let mut block_starts = vec![0];
        for d in 0..=degree {
            let mut cur = vec![0u32; n];
            compositions(d, 0, &mut cur, &mut indices);
            block_starts.push(indices.len());
        }
        MonomialBasis {
            n,
            degree,
            frame,
            indices,
            block_starts,
        }
    }

    pub fn from_descriptor(d: &BasisDescriptor) -> MonomialBasis {
        MonomialBasis::with_frame(d.n, d.degree, d.frame.clone())
    }

    pub fn descriptor(&self) -> BasisDescriptor {
        BasisDescriptor {
            n: self.n,
            degree: self.degree,
            frame: self.frame.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[Vec<u32>] {
        &self.indices
    }

    /// Block boundaries by total degree: degree `d` occupies `[b_d, b_{d+1})`.
    pub fn block_starts(&self) -> &[usize] {
        &self.block_starts
    }

    /// Number of monomials of degree ≤ `d`.
    pub fn prefix_len(&self, d: u32) -> usize {
        self.block_starts[(d.min(self.degree) + 1) as usize]
    }

    /// Same frame, lower degree.
    pub fn truncated(&self, degree: u32) -> MonomialBasis {
        MonomialBasis::with_frame(self.n, degree.min(self.degree), self.frame.clone())
    }

    fn powers(&self, z: &[Complex64]) -> Vec<Vec<Complex64>> {
        let d = self.degree as usize;
        z.iter()
            .zip(&self.frame.center)
            .map(|(zj, cj)| {
                let w = (zj - cj) / self.frame.scale;
                let mut p = Vec::with_capacity(d + 1);
                p.push(Complex64::new(1.0, 0.0));
                for k in 0..d {
                    p.push(p[k] * w);
                }
                p
            })
            .collect()
    }

    /// Values `φ_α(z)` into `out`.
    pub fn eval_into(&self, z: &[Complex64], out: &mut [Complex64]) {
        let pw = self.powers(z);
        for (o, a) in out.iter_mut().zip(&self.indices) {
            let mut v = pw[0][a[0] as usize];
            for j in 1..self.n {
                v *= pw[j][a[j] as usize];
            }
            *o = v;
        }
    }

    pub fn eval(&self, z: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.len()];
        self.eval_into(z, &mut out);
        out
    }

    /// `Σ_j X_j ∂φ_α/∂z_j (z)` for every α.
    pub fn directional(&self, z: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
        let pw = self.powers(z);
        let s = self.frame.scale;
        self.indices
            .iter()
            .map(|a| {
                let mut total = Complex64::new(0.0, 0.0);
                for j in 0..self.n {
                    if a[j] == 0 || x[j] == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    let mut v = x[j] * (a[j] as f64 / s) * pw[j][a[j] as usize - 1];
                    for i in 0..self.n {
                        if i != j {
                            v *= pw[i][a[i] as usize];
                        }
                    }
                    total += v;
                }
                total
            })
            .collect()
    }

    /// `∂φ_α/∂z_j (z)` for every α and coordinate `j`, as `n` vectors.
    pub fn gradient(&self, z: &[Complex64]) -> Vec<Vec<Complex64>> {
        (0..self.n)
            .map(|j| {
                let mut e = vec![Complex64::new(0.0, 0.0); self.n];
                e[j] = Complex64::new(1.0, 0.0);
                self.directional(z, &e)
            })
            .collect()
    }
}

fn compositions(rest: u32, pos: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    let n = cur.len();
    if pos == n - 1 {
        cur[pos] = rest;
        out.push(cur.clone());
        return;
    }
    for k in (0..=rest).rev() {
        cur[pos] = k;
        compositions(rest - k, pos + 1, cur, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binom(n: usize, k: usize) -> usize {
        (1..=k).fold(1, |acc, i| acc * (n - k + i) / i)
    }

    #[test]
    fn ordering_is_graded_lex() {
        let b = MonomialBasis::new(2, 2);
        let want: Vec<Vec<u32>> = vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]];
        assert_eq!(b.indices(), &want[..]);
        assert_eq!(b.block_starts(), &[0, 1, 3, 6]);
        assert_eq!(b.prefix_len(1), 3);
    }

    #[test]
    fn sizes_match_binomials() {
        for n in 1..4 {
            for d in 0..8 {
                assert_eq!(MonomialBasis::new(n, d).len(), binom(n + d as usize, n));
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let frame = Frame {
            center: vec![Complex64::new(0.2, -0.1), Complex64::new(0.0, 0.3)],
            scale: 0.7,
        };
        let b = MonomialBasis::with_frame(2, 4, frame);
        let z = [Complex64::new(0.3, 0.2), Complex64::new(-0.4, 0.1)];
        let x = [Complex64::new(0.6, -0.2), Complex64::new(0.1, 0.9)];
        let d = b.directional(&z, &x);
        let h = 1e-6;
        // Holomorphic directional derivative along X equals the real derivative along X.
        let zp: Vec<Complex64> = z.iter().zip(&x).map(|(a, v)| a + v * h).collect();
        let zm: Vec<Complex64> = z.iter().zip(&x).map(|(a, v)| a - v * h).collect();
        let (fp, fm) = (b.eval(&zp), b.eval(&zm));
        for i in 0..b.len() {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            assert!((fd - d[i]).norm() < 1e-7 * (1.0 + d[i].norm()));
        }
    }

    proptest! {
        #[test]
        fn frame_is_affine(re in -1.0f64..1.0, im in -1.0f64..1.0, s in 0.1f64..3.0) {
            let c = Complex64::new(0.25, -0.5);
            let b = MonomialBasis::with_frame(1, 5, Frame { center: vec![c], scale: s });
            let z = Complex64::new(re, im);
            let v = b.eval(&[z]);
            let w = (z - c) / s;
            for (k, vk) in v.iter().enumerate() {
                prop_assert!((vk - w.powu(k as u32)).norm() <= 1e-12 * (1.0 + w.norm().powi(k as i32)));
            }
        }
    }
}
