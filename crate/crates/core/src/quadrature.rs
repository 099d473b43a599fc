//! Deterministic equal-weight quadrature on `{r < 0}`.
//!
//! Proposals are a randomly shifted rank-1 lattice: a Fibonacci lattice in
//! two real dimensions and a Kronecker sequence with generalized golden
//! ratio generators otherwise. The Cranley–Patterson shift comes from a
//! seeded ChaCha stream. Every accepted point carries the weight
//! `box volume / proposal count`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{DomainSpec, RealBox, Region};
use crate::{Error, Result};

const CHUNK: usize = 4096;

/// Accepted quadrature nodes of one region, stored coordinate-major per point.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSet {
    n: usize,
    coords: Vec<Complex64>,
    weight: f64,
    meta: QuadratureMeta,
}

/// Provenance of a quadrature set; enough to regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureMeta {
    pub requested: usize,
    pub proposals: usize,
    pub seed: u64,
    pub sampling_box: RealBox,
    pub region: Region,
}

impl QuadratureSet {
    pub fn from_parts(n: usize, coords: Vec<Complex64>, weight: f64, meta: QuadratureMeta) -> QuadratureSet {
        QuadratureSet { n, coords, weight, meta }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[Complex64] {
        &self.coords[i * self.n..(i + 1) * self.n]
    }

    pub fn points(&self) -> impl Iterator<Item = &[Complex64]> {
        self.coords.chunks(self.n)
    }

    pub fn coords(&self) -> &[Complex64] {
        &self.coords
    }

    /// Weight of every node.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn total_weight(&self) -> f64 {
        self.weight * self.len() as f64
    }

    pub fn meta(&self) -> &QuadratureMeta {
        &self.meta
    }

    pub fn region(&self) -> &Region {
        &self.meta.region
    }

    /// Typical node spacing `(box volume / proposals)^{1/(2n)}`.
    pub fn mesh_scale(&self) -> f64 {
        self.weight.powf(1.0 / (2 * self.n) as f64)
    }

    /// Subset of the nodes admitted by `region`; nesting with the parent is exact.
    pub fn restrict(&self, region: &Region) -> Result<QuadratureSet> {
        let coords: Vec<Complex64> = self
            .coords
            .par_chunks(self.n * CHUNK)
            .map(|block| {
                block
                    .chunks(self.n)
                    .filter(|z| region.admits(z))
                    .flatten()
                    .copied()
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
            .concat();
        if coords.is_empty() {
            return Err(Error::EmptyRegion);
        }
        let region = match (&self.meta.region, region) {
            (Region::Full, r) => r.clone(),
            (r, Region::Full) => r.clone(),
            (_, r) => r.clone(),
        };
        Ok(QuadratureSet {
            n: self.n,
            coords,
            weight: self.weight,
            meta: QuadratureMeta {
                region,
                ..self.meta.clone()
            },
        })
    }

    /// `Σ_q w·f(q)` with a fixed-order reduction.
    pub fn integrate<F>(&self, f: F) -> f64
    where
        F: Fn(&[Complex64]) -> f64 + Sync,
    {
        let partial: Vec<f64> = self
            .coords
            .par_chunks(self.n * CHUNK)
            .map(|block| block.chunks(self.n).map(&f).sum::<f64>())
            .collect();
        self.weight * partial.iter().sum::<f64>()
    }
}

/// Full-domain sample with `count` requested proposals.
pub fn sample_full(spec: &DomainSpec, count: usize, seed: u64) -> Result<QuadratureSet> {
    let n = spec.n();
    let sbox = spec.sampling_box().clone();
    let unit = lattice(2 * n, count, seed)?;
    let proposals = unit.len() / (2 * n);
    let weight = sbox.volume() / proposals as f64;
    let coords: Vec<Complex64> = unit
        .par_chunks(2 * n * CHUNK)
        .map(|block| {
            let mut out = Vec::new();
            let mut z = vec![Complex64::new(0.0, 0.0); n];
            for u in block.chunks(2 * n) {
                for j in 0..n {
                    let x = sbox.lo[2 * j] + (sbox.hi[2 * j] - sbox.lo[2 * j]) * u[2 * j];
                    let y = sbox.lo[2 * j + 1] + (sbox.hi[2 * j + 1] - sbox.lo[2 * j + 1]) * u[2 * j + 1];
                    z[j] = Complex64::new(x, y);
                }
                if spec.r(&z) < 0.0 {
                    out.extend_from_slice(&z);
                }
            }
            out
        })
        .collect::<Vec<_>>()
        .concat();
    if coords.is_empty() {
        return Err(Error::EmptyRegion);
    }
    Ok(QuadratureSet {
        n,
        coords,
        weight,
        meta: QuadratureMeta {
            requested: count,
            proposals,
            seed,
            sampling_box: sbox,
            region: Region::Full,
        },
    })
}

/// Shifted rank-1 lattice in `[0,1)^dim`, flattened point-major.
///
/// In two dimensions the size is the largest Fibonacci number not exceeding
/// `count`; otherwise it is exactly `count`.
pub fn lattice(dim: usize, count: usize, seed: u64) -> Result<Vec<f64>> {
    if dim == 0 || count < 2 {
        return Err(Error::InvalidInput(format!(
            "lattice needs dim ≥ 1 and count ≥ 2, got dim = {dim}, count = {count}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    if dim == 2 {
        let (size, gen) = fibonacci_pair(count);
        let mut out = vec![0.0; 2 * size];
        out.par_chunks_mut(2).enumerate().for_each(|(i, p)| {
            let a = i as f64 / size as f64;
            let b = ((i as u64 * gen as u64) % size as u64) as f64 / size as f64;
            p[0] = (a + shift[0]).fract();
            p[1] = (b + shift[1]).fract();
        });
        Ok(out)
    } else {
        let g = generalized_golden(dim);
        let alpha: Vec<f64> = (1..=dim).map(|j| g.powi(-(j as i32))).collect();
        let mut out = vec![0.0; dim * count];
        out.par_chunks_mut(dim).enumerate().for_each(|(i, p)| {
            for j in 0..dim {
                p[j] = (shift[j] + (i as f64 * alpha[j]).fract()).fract();
            }
        });
        Ok(out)
    }
}

/// Largest Fibonacci `F_k ≤ count` (at least 2) and `F_{k−1}`.
fn fibonacci_pair(count: usize) -> (usize, usize) {
    let (mut prev, mut cur) = (1usize, 2usize);
    while prev + cur <= count {
        let next = prev + cur;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// Positive root of `x^{d+1} = x + 1`.
fn generalized_golden(dim: usize) -> f64 {
    let mut x = 2.0f64;
    for _ in 0..200 {
        x = (1.0 + x).powf(1.0 / (dim as f64 + 1.0));
    }
    x
}
