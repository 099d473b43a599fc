//! Small dense complex linear algebra: a row-major matrix, a degree-graded
//! pivoted Cholesky factorization, triangular solves and Householder QR.

use num_complex::Complex64;

use crate::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Relative pivot floor of the graded Cholesky factorization.
pub const PIVOT_FLOOR: f64 = 1e-12;

/// Dense row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> CMatrix {
        CMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> CMatrix {
        assert_eq!(data.len(), rows * cols, "matrix data has wrong length");
        CMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [Complex64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Principal submatrix on the given index list (in that order).
    pub fn principal(&self, idx: &[usize]) -> CMatrix {
        let m = idx.len();
        let mut out = CMatrix::zeros(m, m);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                out.set(a, b, self.get(i, j));
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `x^H A x`, real part (exact for Hermitian `A` up to roundoff).
    pub fn quadratic_form(&self, x: &[Complex64]) -> f64 {
        let ax = self.mul_vec(x);
        x.iter().zip(&ax).map(|(a, b)| (a.conj() * b).re).sum()
    }
}

/// `Σ conj(a_i) b_i`.
pub fn dot_c(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum()
}

/// Cholesky factor `A_PP = L Lᴴ` computed block by block.
///
/// Pivoting happens only inside a block, on the Schur-complement diagonal
/// scaled by the original diagonal. When a block produces a scaled pivot
/// below [`PIVOT_FLOOR`], that block and all later ones are dropped, so the
/// leading rows of `L` are exactly the factor of every shorter prefix of
/// blocks.
#[derive(Debug, Clone)]
pub struct GradedCholesky {
    /// Original indices of the kept columns, in pivot order.
    pub perm: Vec<usize>,
    /// Lower-triangular factor, `perm.len()` square.
    pub l: CMatrix,
    /// Number of leading blocks kept.
    pub kept_blocks: usize,
    /// Kept size after each kept block (prefix sizes).
    pub block_ends: Vec<usize>,
    /// Smallest accepted scaled pivot.
    pub min_scaled_pivot: f64,
}

impl GradedCholesky {
    /// `blocks` holds block boundaries `0 = b₀ < b₁ < … < b_k = N`.
    pub fn factor(a: &CMatrix, blocks: &[usize]) -> GradedCholesky {
        let n = a.rows();
        assert_eq!(a.cols(), n);
        assert_eq!(blocks.first(), Some(&0));
        assert_eq!(blocks.last(), Some(&n));
        let diag: Vec<f64> = (0..n).map(|i| a.get(i, i).re).collect();
        // Working copy in original index space; the Schur complement lives on
        // the not-yet-pivoted indices.
        let mut s = a.clone();
        let mut perm = Vec::with_capacity(n);
        // Columns of L in original index space, one per pivot.
        let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(n);
        let mut kept_blocks = 0;
        let mut block_ends = Vec::new();
        let mut min_scaled = f64::INFINITY;
        'blocks: for w in blocks.windows(2) {
            let (start, end) = (w[0], w[1]);
            let mut remaining: Vec<usize> = (start..end).collect();
            let perm_mark = perm.len();
            let mut block_min = f64::INFINITY;
            while !remaining.is_empty() {
                let (pos, scaled) = remaining
                    .iter()
                    .enumerate()
                    .map(|(p, &i)| {
                        let sc = if diag[i] > 0.0 { s.get(i, i).re / diag[i] } else { 0.0 };
                        (p, sc)
                    })
                    .fold((0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
                if !(scaled >= PIVOT_FLOOR) {
                    perm.truncate(perm_mark);
                    cols.truncate(perm_mark);
                    break 'blocks;
                }
                block_min = block_min.min(scaled);
                let p = remaining.remove(pos);
                let piv = s.get(p, p).re.sqrt();
                let mut col = vec![ZERO; n];
                col[p] = Complex64::new(piv, 0.0);
                let rest: Vec<usize> = remaining.iter().copied().chain(end..n).collect();
                for &i in &rest {
                    col[i] = s.get(i, p) / piv;
                }
                for &i in &rest {
                    let ci = col[i];
                    for &j in &rest {
                        let v = s.get(i, j) - ci * col[j].conj();
                        s.set(i, j, v);
                    }
                }
                perm.push(p);
                cols.push(col);
            }
            kept_blocks += 1;
            block_ends.push(perm.len());
            min_scaled = min_scaled.min(block_min);
        }
        let m = perm.len();
        let mut l = CMatrix::zeros(m, m);
        for (c, col) in cols.iter().enumerate() {
            for (r, &pi) in perm.iter().enumerate().skip(c) {
                l.set(r, c, col[pi]);
            }
        }
        GradedCholesky {
            perm,
            l,
            kept_blocks,
            block_ends,
            min_scaled_pivot: min_scaled,
        }
    }

    pub fn size(&self) -> usize {
        self.perm.len()
    }

    /// Gathers `v[perm]`.
    pub fn gather(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.perm.iter().map(|&i| v[i]).collect()
    }

    /// Solves `L y = b` on the leading `m` rows.
    pub fn forward(&self, b: &[Complex64], m: usize) -> Vec<Complex64> {
        let mut y = b[..m].to_vec();
        for i in 0..m {
            let row = self.l.row(i);
            let mut acc = y[i];
            for k in 0..i {
                acc -= row[k] * y[k];
            }
            y[i] = acc / row[i].re;
        }
        y
    }

    /// Solves `Lᴴ x = y` on the leading `m` rows.
    pub fn backward(&self, y: &[Complex64], m: usize) -> Vec<Complex64> {
        let mut x = y[..m].to_vec();
        for i in (0..m).rev() {
            let mut acc = x[i];
            for k in i + 1..m {
                acc -= self.l.get(k, i).conj() * x[k];
            }
            x[i] = acc / self.l.get(i, i).re;
        }
        x
    }

    /// `(A_PP)⁻¹ b` for `b` already in pivot order, on the leading `m` rows.
    pub fn solve(&self, b: &[Complex64], m: usize) -> Vec<Complex64> {
        let y = self.forward(b, m);
        self.backward(&y, m)
    }

    /// `Lᴴ c` for `c` in pivot order.
    pub fn mul_lh(&self, c: &[Complex64]) -> Vec<Complex64> {
        let m = self.size();
        (0..m)
            .map(|i| (i..m).map(|k| self.l.get(k, i).conj() * c[k]).sum())
            .collect()
    }
}

/// Householder QR of a tall matrix, stored compactly.
#[derive(Debug, Clone)]
pub struct HouseholderQr {
    rows: usize,
    cols: usize,
    /// Reflector vectors `v_k` (length `rows`, zero above `k`) with `τ_k = 2/‖v_k‖²`.
    reflectors: Vec<(Vec<Complex64>, f64)>,
    /// Upper-triangular `R`, `cols × cols`.
    r: CMatrix,
}

impl HouseholderQr {
    pub fn new(a: &CMatrix) -> HouseholderQr {
        let (rows, cols) = (a.rows(), a.cols());
        assert!(rows >= cols, "QR needs rows ≥ cols");
        // Column-major working copy.
        let mut w: Vec<Vec<Complex64>> = (0..cols).map(|j| (0..rows).map(|i| a.get(i, j)).collect()).collect();
        let mut reflectors = Vec::with_capacity(cols);
        for k in 0..cols {
            let x = &w[k];
            let nx = x[k..].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let mut v = vec![ZERO; rows];
            if nx == 0.0 {
                reflectors.push((v, 0.0));
                continue;
            }
            let phase = if x[k].norm() > 0.0 { x[k] / x[k].norm() } else { Complex64::new(1.0, 0.0) };
            let alpha = -phase * nx;
            v[k..].copy_from_slice(&x[k..]);
            v[k] -= alpha;
            let vv: f64 = v[k..].iter().map(|c| c.norm_sqr()).sum();
            let tau = 2.0 / vv;
            for col in w.iter_mut().skip(k) {
                let s: Complex64 = v[k..].iter().zip(&col[k..]).map(|(a, b)| a.conj() * b).sum();
                let s = s * tau;
                for (ci, vi) in col[k..].iter_mut().zip(&v[k..]) {
                    *ci -= vi * s;
                }
            }
            reflectors.push((v, tau));
        }
        let mut r = CMatrix::zeros(cols, cols);
        for (j, col) in w.iter().enumerate() {
            for i in 0..=j {
                r.set(i, j, col[i]);
            }
        }
        HouseholderQr {
            rows,
            cols,
            reflectors,
            r,
        }
    }

    pub fn r(&self) -> &CMatrix {
        &self.r
    }

    /// `Qᴴ b`.
    pub fn apply_qh(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut x = b.to_vec();
        for (k, (v, tau)) in self.reflectors.iter().enumerate() {
            reflect(&mut x, v, *tau, k);
        }
        x
    }

    /// `Q b`.
    pub fn apply_q(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut x = b.to_vec();
        for (k, (v, tau)) in self.reflectors.iter().enumerate().rev() {
            reflect(&mut x, v, *tau, k);
        }
        x
    }

    /// Right-multiplies each row of `e` by `Q` in place.
    pub fn apply_q_right(&self, e: &mut CMatrix) {
        assert_eq!(e.cols(), self.rows);
        for i in 0..e.rows() {
            let row = e.row_mut(i);
            for (k, (v, tau)) in self.reflectors.iter().enumerate() {
                // row ← row·(I − τ v vᴴ)
                let s: Complex64 = row[k..].iter().zip(&v[k..]).map(|(a, b)| a * b).sum();
                let s = s * *tau;
                for (ri, vi) in row[k..].iter_mut().zip(&v[k..]) {
                    *ri -= s * vi.conj();
                }
            }
        }
    }

    /// Ratio of smallest to largest `|R_ii|`.
    pub fn diag_ratio(&self) -> f64 {
        let d: Vec<f64> = (0..self.cols).map(|i| self.r.get(i, i).norm()).collect();
        let max = d.iter().cloned().fold(0.0, f64::max);
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        if max > 0.0 {
            min / max
        } else {
            0.0
        }
    }

    /// Least-squares solution of `min ‖A x − b‖`.
    pub fn solve_lstsq(&self, b: &[Complex64]) -> Vec<Complex64> {
        let qb = self.apply_qh(b);
        back_substitute(&self.r, &qb[..self.cols])
    }
}

fn reflect(x: &mut [Complex64], v: &[Complex64], tau: f64, k: usize) {
    if tau == 0.0 {
        return;
    }
    let s: Complex64 = v[k..].iter().zip(&x[k..]).map(|(a, b)| a.conj() * b).sum();
    let s = s * tau;
    for (xi, vi) in x[k..].iter_mut().zip(&v[k..]) {
        *xi -= vi * s;
    }
}

/// Solves `R x = b` for upper-triangular `R`.
pub fn back_substitute(r: &CMatrix, b: &[Complex64]) -> Vec<Complex64> {
    let n = b.len();
    let mut x = b.to_vec();
    for i in (0..n).rev() {
        let mut acc = x[i];
        for k in i + 1..n {
            acc -= r.get(i, k) * x[k];
        }
        x[i] = acc / r.get(i, i);
    }
    x
}

/// Solves `min ‖E x − f‖` subject to `C x = d` by the null-space method.
///
/// `C` is `p × N` with full row rank; `E` is `m × N` and must have full
/// column rank on the null space of `C`.
pub fn constrained_lstsq(c: &CMatrix, d: &[Complex64], e: &CMatrix, f: &[Complex64]) -> Result<Vec<Complex64>> {
    let (p, n) = (c.rows(), c.cols());
    if p > n {
        return Err(Error::ConstraintFailure(format!("{p} constraints on {n} unknowns")));
    }
    let mut ch = CMatrix::zeros(n, p);
    for i in 0..p {
        for j in 0..n {
            ch.set(j, i, c.get(i, j).conj());
        }
    }
    let qr = HouseholderQr::new(&ch);
    if !(qr.diag_ratio() > 1e-13) {
        return Err(Error::ConstraintFailure(format!(
            "constraint matrix is rank deficient (diagonal ratio {:e})",
            qr.diag_ratio()
        )));
    }
    // Rᴴ y₁ = d, forward substitution.
    let r = qr.r();
    let mut y1 = d.to_vec();
    for i in 0..p {
        let mut acc = y1[i];
        for k in 0..i {
            acc -= r.get(k, i).conj() * y1[k];
        }
        y1[i] = acc / r.get(i, i).conj();
    }
    let mut eq = e.clone();
    qr.apply_q_right(&mut eq);
    let m = e.rows();
    let free = n - p;
    let mut g: Vec<Complex64> = f.to_vec();
    let mut b = CMatrix::zeros(m, free);
    for i in 0..m {
        let row = eq.row(i);
        let fixed: Complex64 = row[..p].iter().zip(&y1).map(|(a, b)| a * b).sum();
        g[i] -= fixed;
        b.row_mut(i).copy_from_slice(&row[p..]);
    }
    let y2 = if free > 0 {
        if m < free {
            return Err(Error::ConstraintFailure("too few objective rows".into()));
        }
        let qr2 = HouseholderQr::new(&b);
        if !(qr2.diag_ratio() > 1e-15) {
            return Err(Error::ConstraintFailure("objective is singular on the constraint null space".into()));
        }
        qr2.solve_lstsq(&g)
    } else {
        Vec::new()
    };
    let y: Vec<Complex64> = y1.into_iter().chain(y2).collect();
    let mut x = qr.apply_q(&y);
    // One step of refinement on the constraints: x += Q₁ R⁻ᴴ (d − Cx).
    let res: Vec<Complex64> = d.iter().zip(c.mul_vec(&x)).map(|(a, b)| a - b).collect();
    let mut corr = res;
    for i in 0..p {
        let mut acc = corr[i];
        for k in 0..i {
            acc -= r.get(k, i).conj() * corr[k];
        }
        corr[i] = acc / r.get(i, i).conj();
    }
    corr.resize(n, ZERO);
    for (xi, ci) in x.iter_mut().zip(qr.apply_q(&corr)) {
        *xi += ci;
    }
    Ok(x)
}

/// Eigenvalues of a real symmetric `d × d` matrix by cyclic Jacobi rotations.
pub fn symmetric_eigenvalues(a: &[f64], d: usize) -> Vec<f64> {
    let mut m = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..d)
            .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * d + j].powi(2))
            .sum();
        let scale: f64 = m.iter().map(|x| x * x).sum::<f64>();
        if off <= 1e-30 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = m[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * d + p];
                let aqq = m[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = m[k * d + p];
                    let akq = m[k * d + q];
                    m[k * d + p] = c * akp - s * akq;
                    m[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = m[p * d + k];
                    let aqk = m[q * d + k];
                    m[p * d + k] = c * apk - s * aqk;
                    m[q * d + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..d).map(|i| m[i * d + i]).collect()
}

/// Spectral norm of a real symmetric matrix.
pub fn symmetric_spectral_norm(a: &[f64], d: usize) -> f64 {
    symmetric_eigenvalues(a, d).iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_hpd(n: usize, seed: u64) -> CMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<Complex64> = (0..n * n).map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        let mut a = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let v: Complex64 = (0..n).map(|k| b[k * n + i].conj() * b[k * n + j]).sum();
                a.set(i, j, v + if i == j { c(0.1, 0.0) } else { c(0.0, 0.0) });
            }
        }
        a
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = random_hpd(7, 1);
        let f = GradedCholesky::factor(&a, &[0, 1, 3, 7]);
        assert_eq!(f.size(), 7);
        assert_eq!(f.kept_blocks, 3);
        let ap = a.principal(&f.perm);
        for i in 0..7 {
            for j in 0..7 {
                let v: Complex64 = (0..7).map(|k| f.l.get(i, k) * f.l.get(j, k).conj()).sum();
                assert!((v - ap.get(i, j)).norm() < 1e-12);
            }
        }
        // Pivoting never crosses block boundaries.
        assert_eq!(f.perm[0], 0);
        assert!(f.perm[1..3].iter().all(|&i| (1..3).contains(&i)));
    }

    #[test]
    fn leading_blocks_factor_prefixes() {
        let a = random_hpd(6, 2);
        let full = GradedCholesky::factor(&a, &[0, 2, 4, 6]);
        let prefix: Vec<usize> = (0..4).collect();
        let sub = GradedCholesky::factor(&a.principal(&prefix), &[0, 2, 4]);
        assert_eq!(&full.perm[..4], &sub.perm[..]);
        for i in 0..4 {
            for j in 0..4 {
                assert!((full.l.get(i, j) - sub.l.get(i, j)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn singular_block_is_truncated() {
        // Third column duplicates the second: block [2, 3) must be dropped.
        let vals = [2.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let a = CMatrix::from_vec(3, 3, vals.iter().map(|&v| c(v, 0.0)).collect());
        let f = GradedCholesky::factor(&a, &[0, 1, 2, 3]);
        assert_eq!(f.kept_blocks, 2);
        assert_eq!(f.size(), 2);
    }

    #[test]
    fn solve_matches_product() {
        let a = random_hpd(5, 3);
        let f = GradedCholesky::factor(&a, &[0, 5]);
        let x: Vec<Complex64> = (0..5).map(|i| c(i as f64, 1.0 - i as f64)).collect();
        let ap = a.principal(&f.perm);
        let b = ap.mul_vec(&x);
        let got = f.solve(&b, 5);
        for (g, w) in got.iter().zip(&x) {
            assert!((g - w).norm() < 1e-10);
        }
    }

    #[test]
    fn qr_least_squares() {
        let a = CMatrix::from_vec(
            4,
            2,
            vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0), c(1.0, 0.0), c(3.0, 0.0)],
        );
        let b = [c(6.0, 0.0), c(5.0, 0.0), c(7.0, 0.0), c(10.0, 0.0)];
        let x = HouseholderQr::new(&a).solve_lstsq(&b);
        assert!((x[0] - c(4.9, 0.0)).norm() < 1e-12);
        assert!((x[1] - c(1.4, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn constrained_solution_satisfies_constraints() {
        let a = random_hpd(6, 5);
        let cmat = CMatrix::from_vec(2, 6, a.data()[..12].to_vec());
        let d = [c(1.0, 2.0), c(-0.5, 0.0)];
        let e = random_hpd(6, 6);
        let f: Vec<Complex64> = (0..6).map(|i| c(1.0, i as f64)).collect();
        let x = constrained_lstsq(&cmat, &d, &e, &f).unwrap();
        let cx = cmat.mul_vec(&x);
        for (g, w) in cx.iter().zip(&d) {
            assert!((g - w).norm() < 1e-12);
        }
        let dup = CMatrix::from_vec(2, 6, [&a.data()[..6], &a.data()[..6]].concat());
        assert!(matches!(
            constrained_lstsq(&dup, &d, &e, &f),
            Err(Error::ConstraintFailure(_))
        ));
    }

    #[test]
    fn jacobi_eigenvalues() {
        let a = [2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, -5.0];
        let mut ev = symmetric_eigenvalues(&a, 3);
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 5.0).abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12 && (ev[2] - 3.0).abs() < 1e-12);
        assert!((symmetric_spectral_norm(&a, 3) - 5.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn constrained_lstsq_feasible(seed in 0u64..500) {
            let a = random_hpd(5, seed);
            let cmat = CMatrix::from_vec(2, 5, a.data()[..10].to_vec());
            let e = random_hpd(5, seed + 1000);
            let d = [c(0.3, -1.0), c(2.0, 0.5)];
            let f: Vec<Complex64> = (0..5).map(|i| c(i as f64, 0.0)).collect();
            let x = constrained_lstsq(&cmat, &d, &e, &f).unwrap();
            let cx = cmat.mul_vec(&x);
            prop_assert!((cx[0] - d[0]).norm() < 1e-9 && (cx[1] - d[1]).norm() < 1e-9);
        }
    }
}
