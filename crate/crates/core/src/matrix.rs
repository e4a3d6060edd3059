//! Dense complex linear algebra: the matrix type, the exponential, the
//! positive-diagonal QR factorization and Haar sampling on U(L).
//!
//! Everything here is sized for the desk-scale regime (matrices up to 32x32),
//! so the kernels are plain loops over a row-major buffer.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Dense complex matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scalar(n, ONE)
    }

    pub fn scalar(n: usize, c: C64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = c;
        }
        m
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Matrix from nested rows; all rows must have the same length.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.concat(),
        })
    }

    /// Matrix with the (i, j) entry set to one and zeros elsewhere.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n, n);
        m[(i, j)] = ONE;
        m
    }

    /// Assemble `[[a, b], [c, d]]` from four equally sized square blocks.
    pub fn from_blocks(
        a: &ComplexMatrix,
        b: &ComplexMatrix,
        c: &ComplexMatrix,
        d: &ComplexMatrix,
    ) -> Self {
        let n = a.rows;
        assert!(
            [a, b, c, d].iter().all(|m| m.rows == n && m.cols == n),
            "blocks must be square and of equal size"
        );
        let mut m = Self::zeros(2 * n, 2 * n);
        m.set_block(0, 0, a);
        m.set_block(0, n, b);
        m.set_block(n, 0, c);
        m.set_block(n, n, d);
        m
    }

    /// Stack `top` over `bottom`.
    pub fn vstack(top: &ComplexMatrix, bottom: &ComplexMatrix) -> Self {
        assert_eq!(top.cols, bottom.cols, "vstack column mismatch");
        let mut data = top.data.clone();
        data.extend_from_slice(&bottom.data);
        Self {
            rows: top.rows + bottom.rows,
            cols: top.cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Side length of a square matrix.
    pub fn dim(&self) -> usize {
        debug_assert!(self.is_square());
        self.rows
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> ComplexMatrix {
        assert!(r0 + nr <= self.rows && c0 + nc <= self.cols, "block out of range");
        Self::from_fn(nr, nc, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &ComplexMatrix) {
        assert!(r0 + b.rows <= self.rows && c0 + b.cols <= self.cols, "block out of range");
        for i in 0..b.rows {
            let dst = (r0 + i) * self.cols + c0;
            self.data[dst..dst + b.cols].copy_from_slice(&b.data[i * b.cols..(i + 1) * b.cols]);
        }
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn adjoint(&self) -> ComplexMatrix {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> ComplexMatrix {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> ComplexMatrix {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> ComplexMatrix {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn scale(&self, c: C64) -> ComplexMatrix {
        self.map(|z| z * c)
    }

    pub fn scale_real(&self, c: f64) -> ComplexMatrix {
        self.map(|z| z * c)
    }

    pub fn trace(&self) -> C64 {
        self.diagonal().into_iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Real inner product `Re Tr(self^* other)`.
    pub fn real_inner(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square() && (self - &self.adjoint()).max_abs() <= tol
    }

    /// `‖self^* self − 1‖_F`.
    pub fn unitarity_defect(&self) -> f64 {
        let g = self.adjoint().matmul(self);
        (&g - &Self::identity(self.cols)).frobenius_norm()
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch: {}x{} * {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.rows, other.cols);
        matmul_into(
            &self.data,
            &other.data,
            &mut out.data,
            self.rows,
            self.cols,
            other.cols,
        );
        out
    }

    /// `[self, other] = self·other − other·self`.
    pub fn commutator(&self, other: &ComplexMatrix) -> ComplexMatrix {
        &self.matmul(other) - &other.matmul(self)
    }

    /// Determinant via LU with partial pivoting.
    pub fn determinant(&self) -> Result<C64> {
        self.require_square("determinant")?;
        let lu = Lu::factor(self);
        Ok(lu.determinant())
    }

    pub fn inverse(&self) -> Result<ComplexMatrix> {
        self.require_square("inverse")?;
        Lu::factor(self).inverse()
    }

    fn require_square(&self, op: &str) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{op} needs a square matrix, got {}x{}",
                self.rows, self.cols
            )))
        }
    }
}

/// `out = a (m×k) · b (k×n)`, overwriting `out`.
pub(crate) fn matmul_into(a: &[C64], b: &[C64], out: &mut [C64], m: usize, k: usize, n: usize) {
    out.iter_mut().for_each(|z| *z = ZERO);
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == ZERO {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

macro_rules! elementwise {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&ComplexMatrix> for &ComplexMatrix {
            type Output = ComplexMatrix;
            fn $method(self, rhs: &ComplexMatrix) -> ComplexMatrix {
                assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
                ComplexMatrix {
                    rows: self.rows,
                    cols: self.cols,
                    data: self.data.iter().zip(&rhs.data).map(|(a, b)| a $op b).collect(),
                }
            }
        }
        impl $trait<ComplexMatrix> for ComplexMatrix {
            type Output = ComplexMatrix;
            fn $method(self, rhs: ComplexMatrix) -> ComplexMatrix {
                (&self).$method(&rhs)
            }
        }
    };
}

elementwise!(Add, add, +);
elementwise!(Sub, sub, -);

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&ComplexMatrix> for ComplexMatrix {
    fn sub_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

impl Mul<&ComplexMatrix> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

impl Mul<ComplexMatrix> for ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: ComplexMatrix) -> ComplexMatrix {
        self.matmul(&rhs)
    }
}

impl Mul<C64> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, c: C64) -> ComplexMatrix {
        self.scale(c)
    }
}

impl Mul<f64> for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, c: f64) -> ComplexMatrix {
        self.scale_real(c)
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.map(|z| -z)
    }
}

/// LU factorization with partial pivoting, `P A = L U`.
struct Lu {
    n: usize,
    lu: Vec<C64>,
    perm: Vec<usize>,
    sign: f64,
}

impl Lu {
    fn factor(a: &ComplexMatrix) -> Self {
        let n = a.rows;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| lu[x * n + k].norm().total_cmp(&lu[y * n + k].norm()))
                .unwrap_or(k);
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let pivot = lu[k * n + k];
            if pivot == ZERO {
                continue;
            }
            for i in k + 1..n {
                let f = lu[i * n + k] / pivot;
                lu[i * n + k] = f;
                for j in k + 1..n {
                    let u = lu[k * n + j];
                    lu[i * n + j] -= f * u;
                }
            }
        }
        Self { n, lu, perm, sign }
    }

    fn determinant(&self) -> C64 {
        (0..self.n).map(|i| self.lu[i * self.n + i]).product::<C64>() * self.sign
    }

    fn pivot_ratio(&self) -> f64 {
        let d: Vec<f64> = (0..self.n).map(|i| self.lu[i * self.n + i].norm()).collect();
        let max = d.iter().copied().fold(0.0, f64::max);
        let min = d.iter().copied().fold(f64::INFINITY, f64::min);
        if max == 0.0 {
            0.0
        } else {
            min / max
        }
    }

    fn inverse(&self) -> Result<ComplexMatrix> {
        let ratio = self.pivot_ratio();
        if ratio < 1e-14 {
            return Err(Error::Singular { ratio });
        }
        let n = self.n;
        let mut inv = ComplexMatrix::zeros(n, n);
        for col in 0..n {
            // Solve L y = P e_col, then U x = y.
            let mut x: Vec<C64> = (0..n)
                .map(|i| if self.perm[i] == col { ONE } else { ZERO })
                .collect();
            for i in 0..n {
                for j in 0..i {
                    let l = self.lu[i * n + j];
                    let xj = x[j];
                    x[i] -= l * xj;
                }
            }
            for i in (0..n).rev() {
                for j in i + 1..n {
                    let u = self.lu[i * n + j];
                    let xj = x[j];
                    x[i] -= u * xj;
                }
                x[i] /= self.lu[i * n + i];
            }
            for i in 0..n {
                inv[(i, col)] = x[i];
            }
        }
        Ok(inv)
    }
}

/// Taylor degree used on the scaled matrix. With `‖A/2^s‖₁ ≤ 1/2` the
/// remainder is below `0.5^15/15! < 3e-17`.
const EXPM_TAYLOR_DEGREE: usize = 14;

/// Matrix exponential by scaling and squaring with a truncated Taylor series.
pub fn expm(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.require_square("expm")?;
    if !a.is_finite() {
        return Err(Error::invalid("A", "matrix has non-finite entries"));
    }
    let n = a.rows;
    let norm = a.norm_one();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = a.scale_real(0.5f64.powi(squarings as i32));

    // Horner: I + B(I + B/2(I + B/3(...)))
    let id = ComplexMatrix::identity(n);
    let mut acc = id.clone();
    for k in (1..=EXPM_TAYLOR_DEGREE).rev() {
        acc = &id + &scaled.matmul(&acc).scale_real(1.0 / k as f64);
    }
    for _ in 0..squarings {
        acc = acc.matmul(&acc);
    }
    Ok(acc)
}

/// Pivot ratio below which `qr_positive` reports a singular input. This is
/// a proxy for a condition number above 1e12.
pub const QR_SINGULAR_RATIO: f64 = 1e-12;

/// Thin QR factorization `M = Q R` with `R` upper triangular and a strictly
/// positive real diagonal. `M` is `m×n` with `m ≥ n`; `Q` is `m×n` with
/// orthonormal columns.
pub fn qr_positive(m: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let (rows, cols) = (m.rows, m.cols);
    if rows < cols || cols == 0 {
        return Err(Error::Dimension(format!(
            "qr_positive needs rows >= cols >= 1, got {rows}x{cols}"
        )));
    }
    let mut a = m.data.clone();
    let mut q = vec![ZERO; rows * cols];
    let mut r = vec![ZERO; cols * cols];
    householder_qr(&mut a, &mut q, &mut r, rows, cols)?;
    Ok((
        ComplexMatrix {
            rows,
            cols,
            data: q,
        },
        ComplexMatrix {
            rows: cols,
            cols,
            data: r,
        },
    ))
}

/// Householder QR on a row-major `rows×cols` buffer. On return `q` holds the
/// thin unitary factor and `r` the positive-diagonal triangular factor; `a`
/// is clobbered.
pub(crate) fn householder_qr(
    a: &mut [C64],
    q: &mut [C64],
    r: &mut [C64],
    rows: usize,
    cols: usize,
) -> Result<()> {
    // Householder vectors, v_j stored at offset j*rows with length rows-j.
    let mut vbuf = vec![ZERO; rows * cols];
    let mut scale = 0.0f64;
    for j in 0..cols {
        let norm: f64 = (j..rows).map(|i| a[i * cols + j].norm_sqr()).sum::<f64>().sqrt();
        scale = scale.max(norm);
        let x0 = a[j * cols + j];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { ONE };
        let alpha = -phase * norm;
        let v = &mut vbuf[j * rows..j * rows + rows - j];
        for (t, vi) in v.iter_mut().enumerate() {
            *vi = a[(j + t) * cols + j];
        }
        v[0] -= alpha;
        let vnorm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if vnorm > 0.0 {
            v.iter_mut().for_each(|z| *z /= vnorm);
            // A[j.., j..] -= 2 v (v^* A[j.., j..])
            for c in j..cols {
                let mut dot = ZERO;
                for (t, vi) in v.iter().enumerate() {
                    dot += vi.conj() * a[(j + t) * cols + c];
                }
                let dot = dot * 2.0;
                for (t, vi) in v.iter().enumerate() {
                    a[(j + t) * cols + c] -= vi * dot;
                }
            }
        }
    }

    // Explicit thin Q: apply H_0 ... H_{n-1} to the first n columns of I.
    q.iter_mut().for_each(|z| *z = ZERO);
    for i in 0..cols {
        q[i * cols + i] = ONE;
    }
    for j in (0..cols).rev() {
        let v = &vbuf[j * rows..j * rows + rows - j];
        for c in 0..cols {
            let mut dot = ZERO;
            for (t, vi) in v.iter().enumerate() {
                dot += vi.conj() * q[(j + t) * cols + c];
            }
            let dot = dot * 2.0;
            for (t, vi) in v.iter().enumerate() {
                q[(j + t) * cols + c] -= vi * dot;
            }
        }
    }

    // Move the phases of diag(R) into Q.
    let mut min_diag = f64::INFINITY;
    for i in 0..cols {
        let d = a[i * cols + i];
        let dn = d.norm();
        min_diag = min_diag.min(dn);
        let phase = if dn > 0.0 { d / dn } else { ONE };
        for c in 0..cols {
            r[i * cols + c] = if c >= i { a[i * cols + c] * phase.conj() } else { ZERO };
        }
        for row in 0..rows {
            q[row * cols + i] *= phase;
        }
        r[i * cols + i] = C64::new(dn, 0.0);
    }
    let ratio = if scale > 0.0 { min_diag / scale } else { 0.0 };
    if ratio < QR_SINGULAR_RATIO {
        return Err(Error::Singular { ratio });
    }
    Ok(())
}

/// Standard complex Gaussian `(a + ib)/√2`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let a: f64 = rng.sample(StandardNormal);
    let b: f64 = rng.sample(StandardNormal);
    C64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
}

/// Haar-distributed unitary from the QR factorization of a Ginibre matrix.
pub fn haar_unitary<R: Rng + ?Sized>(l: usize, rng: &mut R) -> ComplexMatrix {
    assert!(l >= 1, "haar_unitary needs L >= 1");
    loop {
        let g = ComplexMatrix::from_fn(l, l, |_, _| complex_gaussian(rng));
        // Singular Ginibre draws have probability zero; redraw if one shows up.
        if let Ok((q, _)) = qr_positive(&g) {
            return q;
        }
    }
}

/// Random element of `u(L,L)`: `[[A, B], [B^*, D]]` with `A`, `D`
/// anti-Hermitian and all free entries standard complex Gaussian.
pub fn random_lorentz_generator<R: Rng + ?Sized>(l: usize, rng: &mut R) -> ComplexMatrix {
    let anti = |rng: &mut R| {
        let g = ComplexMatrix::from_fn(l, l, |_, _| complex_gaussian(rng));
        (&g - &g.adjoint()).scale_real(0.5)
    };
    let a = anti(rng);
    let d = anti(rng);
    let b = ComplexMatrix::from_fn(l, l, |_, _| complex_gaussian(rng));
    ComplexMatrix::from_blocks(&a, &b, &b.adjoint(), &d)
}

/// Lorentz form `G = diag(1_L, −1_L)`.
pub fn lorentz_form(l: usize) -> ComplexMatrix {
    let diag: Vec<C64> = (0..2 * l).map(|i| if i < l { ONE } else { -ONE }).collect();
    ComplexMatrix::from_diag(&diag)
}

/// Symplectic form `J = [[0, −1], [1, 0]]`.
pub fn symplectic_form(l: usize) -> ComplexMatrix {
    let z = ComplexMatrix::zeros(l, l);
    let id = ComplexMatrix::identity(l);
    ComplexMatrix::from_blocks(&z, &(-&id), &id, &z)
}

/// `‖T^* G T − G‖_F`: how far `T` is from U(L,L).
pub fn check_lorentz(t: &ComplexMatrix, l: usize) -> Result<f64> {
    if t.rows != 2 * l || t.cols != 2 * l {
        return Err(Error::Dimension(format!(
            "expected a {0}x{0} matrix, got {1}x{2}",
            2 * l,
            t.rows,
            t.cols
        )));
    }
    let g = lorentz_form(l);
    Ok((&t.adjoint().matmul(&g).matmul(t) - &g).frobenius_norm())
}

/// `‖T^* J T − J‖_F`: how far `T` is from the Hermitian symplectic group.
pub fn check_symplectic(t: &ComplexMatrix, l: usize) -> Result<f64> {
    if t.rows != 2 * l || t.cols != 2 * l {
        return Err(Error::Dimension(format!(
            "expected a {0}x{0} matrix, got {1}x{2}",
            2 * l,
            t.rows,
            t.cols
        )));
    }
    let j = symplectic_form(l);
    Ok((&t.adjoint().matmul(&j).matmul(t) - &j).frobenius_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_matrix(n: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        ComplexMatrix::from_fn(n, n, |_, _| complex_gaussian(rng))
    }

    fn random_anti_hermitian(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> ComplexMatrix {
        let g = random_matrix(n, rng);
        let a = &g - &g.adjoint();
        let norm = a.norm_one();
        a.scale_real(scale / norm)
    }

    /// Independent route for anti-Hermitian `A`: diagonalize the Hermitian
    /// `iA` and exponentiate the eigenvalues.
    fn expm_by_eigen(a: &ComplexMatrix) -> ComplexMatrix {
        let n = a.rows();
        let h = a.scale(-I);
        let m = nalgebra::DMatrix::from_fn(n, n, |i, j| h[(i, j)]);
        let eig = nalgebra::SymmetricEigen::new(m);
        let v = &eig.eigenvectors;
        let d = nalgebra::DMatrix::from_diagonal(&eig.eigenvalues.map(|x| (I * x).exp()));
        let e = v * d * v.adjoint();
        ComplexMatrix::from_fn(n, n, |i, j| e[(i, j)])
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let e = expm(&ComplexMatrix::zeros(3, 3)).unwrap();
        assert_eq!(e, ComplexMatrix::identity(3));
    }

    #[test]
    fn expm_of_diagonal_phase() {
        let a = ComplexMatrix::from_diag(&[I * PI, -I * PI]);
        let e = expm(&a).unwrap();
        let want = ComplexMatrix::from_diag(&[-ONE, -ONE]);
        assert!((&e - &want).max_abs() < 1e-12, "{e:?}");
    }

    #[test]
    fn expm_rejects_rectangular() {
        assert!(matches!(
            expm(&ComplexMatrix::zeros(2, 3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn expm_inverse_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..6 {
            let a = random_anti_hermitian(n, 1.0, &mut rng);
            let prod = expm(&a).unwrap().matmul(&expm(&-&a).unwrap());
            assert!((&prod - &ComplexMatrix::identity(n)).max_abs() <= 1e-12);
        }
    }

    #[test]
    fn expm_matches_eigen_route_up_to_norm_ten() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &scale in &[0.1, 1.0, 4.0, 10.0] {
            for n in [2, 4, 6] {
                let a = random_anti_hermitian(n, scale, &mut rng);
                let got = expm(&a).unwrap();
                let want = expm_by_eigen(&a);
                let rel = (&got - &want).frobenius_norm() / want.frobenius_norm();
                assert!(rel <= 1e-12, "scale {scale}, n {n}: rel {rel:e}");
            }
        }
    }

    #[test]
    fn expm_adjoint_commutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a = random_matrix(4, &mut rng).scale_real(0.7);
            let lhs = expm(&a).unwrap().adjoint();
            let rhs = expm(&a.adjoint()).unwrap();
            assert!((&lhs - &rhs).max_abs() <= 1e-12 * lhs.max_abs().max(1.0));
        }
    }

    #[test]
    fn qr_of_identity() {
        let (q, r) = qr_positive(&ComplexMatrix::identity(1)).unwrap();
        assert_eq!(q, ComplexMatrix::identity(1));
        assert_eq!(r, ComplexMatrix::identity(1));
    }

    #[test]
    fn qr_absorbs_sign_into_q() {
        let m = ComplexMatrix::from_diag(&[-ONE]);
        let (q, r) = qr_positive(&m).unwrap();
        assert!((q[(0, 0)] + ONE).norm() < 1e-15);
        assert!((r[(0, 0)] - ONE).norm() < 1e-15);
    }

    #[test]
    fn qr_reconstructs_with_positive_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let m = random_matrix(3, &mut rng);
            let (q, r) = qr_positive(&m).unwrap();
            assert!((&q.matmul(&r) - &m).max_abs() <= 1e-12);
            assert!(q.unitarity_defect() <= 1e-12);
            for i in 0..3 {
                assert!(r[(i, i)].re > 0.0 && r[(i, i)].im == 0.0);
                for j in 0..i {
                    assert_eq!(r[(i, j)], ZERO);
                }
            }
        }
    }

    #[test]
    fn qr_tall_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = ComplexMatrix::from_fn(6, 3, |_, _| complex_gaussian(&mut rng));
        let (q, r) = qr_positive(&m).unwrap();
        assert_eq!((q.rows(), q.cols()), (6, 3));
        assert!((&q.matmul(&r) - &m).max_abs() <= 1e-12);
        assert!(q.unitarity_defect() <= 1e-12);
    }

    #[test]
    fn qr_detects_singular_input() {
        let m = ComplexMatrix::from_rows(&[vec![ONE, ONE], vec![ONE, ONE]]).unwrap();
        assert!(matches!(qr_positive(&m), Err(Error::Singular { .. })));
    }

    #[test]
    fn qr_is_idempotent_on_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in 1..6 {
            let u = haar_unitary(n, &mut rng);
            let (q, r) = qr_positive(&u).unwrap();
            assert!((&q - &u).max_abs() <= 1e-12);
            assert!((&r - &ComplexMatrix::identity(n)).max_abs() <= 1e-12);
        }
    }

    #[test]
    fn haar_output_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in 1..=8 {
            for _ in 0..20 {
                assert!(haar_unitary(n, &mut rng).unitarity_defect() <= 1e-12);
            }
        }
    }

    #[test]
    fn haar_circle_phase_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 20_000;
        let mean: C64 = (0..n).map(|_| haar_unitary(1, &mut rng)[(0, 0)]).sum::<C64>() / n as f64;
        // |E e^{iθ}| has standard error 1/√(2N) per component.
        assert!(mean.norm() < 3.0 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn haar_moments() {
        // E|Tr Q|² = 1 and E|Q_11|² = 1/L for Haar Q.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 20_000;
        for l in [2usize, 3, 5] {
            let u0 = haar_unitary(l, &mut rng);
            let mut tr = crate::stats::RunningStats::new();
            let mut q11 = crate::stats::RunningStats::new();
            let mut tr_shift = crate::stats::RunningStats::new();
            for _ in 0..n {
                let q = haar_unitary(l, &mut rng);
                tr.push(q.trace().norm_sqr());
                q11.push(q[(0, 0)].norm_sqr());
                tr_shift.push(u0.matmul(&q).trace().norm_sqr());
            }
            assert!((tr.mean() - 1.0).abs() < 4.0 * tr.stderr(), "L={l}");
            assert!((q11.mean() - 1.0 / l as f64).abs() < 4.0 * q11.stderr(), "L={l}");
            // Left invariance: U0·Q has the same moment.
            assert!((tr_shift.mean() - 1.0).abs() < 4.0 * tr_shift.stderr(), "L={l}");
        }
    }

    #[test]
    fn lorentz_check_of_identity() {
        assert_eq!(check_lorentz(&ComplexMatrix::identity(4), 2).unwrap(), 0.0);
        assert!(check_lorentz(&ComplexMatrix::identity(3), 2).is_err());
    }

    #[test]
    fn determinant_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = random_matrix(4, &mut rng);
        let inv = m.inverse().unwrap();
        assert!((&m.matmul(&inv) - &ComplexMatrix::identity(4)).max_abs() < 1e-12);
        let d = m.determinant().unwrap() * inv.determinant().unwrap();
        assert!((d - ONE).norm() < 1e-12);
        let sing = ComplexMatrix::zeros(2, 2);
        assert!(sing.inverse().is_err());
    }
}
