//! Isotropic frames `Φ = 2^{-1/2}(U; V)` and the tangent geometry of the flag
//! manifold `M = (U(L) × U(L)) / T^L`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{haar_unitary, ComplexMatrix, C64, I};

/// Unitarity tolerance accepted by [`IsotropicFrame::new`].
pub const FRAME_TOLERANCE: f64 = 1e-10;

/// A point of the `T^L`-cover of the flag manifold: a pair of `L×L` unitaries.
#[derive(Clone, Debug, PartialEq)]
pub struct IsotropicFrame {
    u: ComplexMatrix,
    v: ComplexMatrix,
}

impl IsotropicFrame {
    pub fn new(u: ComplexMatrix, v: ComplexMatrix) -> Result<Self> {
        if !u.is_square() || u.rows() != v.rows() || !v.is_square() {
            return Err(Error::Dimension(format!(
                "frame blocks must be equal square matrices, got {}x{} and {}x{}",
                u.rows(),
                u.cols(),
                v.rows(),
                v.cols()
            )));
        }
        let frame = Self { u, v };
        let defect = frame.unitarity_defect();
        if defect > FRAME_TOLERANCE {
            return Err(Error::NotUnitary { defect });
        }
        Ok(frame)
    }

    pub(crate) fn from_parts(u: ComplexMatrix, v: ComplexMatrix) -> Self {
        Self { u, v }
    }

    pub fn identity(l: usize) -> Self {
        Self {
            u: ComplexMatrix::identity(l),
            v: ComplexMatrix::identity(l),
        }
    }

    /// Sample from the product Haar measure on `U(L) × U(L)`.
    pub fn haar<R: Rng + ?Sized>(l: usize, rng: &mut R) -> Self {
        let u = haar_unitary(l, rng);
        let v = haar_unitary(l, rng);
        Self { u, v }
    }

    pub fn l(&self) -> usize {
        self.u.rows()
    }

    pub fn u(&self) -> &ComplexMatrix {
        &self.u
    }

    pub fn v(&self) -> &ComplexMatrix {
        &self.v
    }

    pub fn into_parts(self) -> (ComplexMatrix, ComplexMatrix) {
        (self.u, self.v)
    }

    /// The `2L×L` frame `2^{-1/2}(U; V)`.
    pub fn phi(&self) -> ComplexMatrix {
        ComplexMatrix::vstack(&self.u, &self.v).scale_real(std::f64::consts::FRAC_1_SQRT_2)
    }

    /// `U^* V`, invariant under simultaneous right multiplication by a
    /// diagonal unitary up to conjugation by that diagonal.
    pub fn relative_phase(&self) -> ComplexMatrix {
        self.u.adjoint().matmul(&self.v)
    }

    pub fn unitarity_defect(&self) -> f64 {
        self.u.unitarity_defect().max(self.v.unitarity_defect())
    }

    /// `‖Φ^* G Φ‖_F`, zero for a valid isotropic frame.
    pub fn isotropy_defect(&self) -> f64 {
        let a = self.u.adjoint().matmul(&self.u);
        let b = self.v.adjoint().matmul(&self.v);
        (&a - &b).frobenius_norm() * 0.5
    }

    /// Right multiplication of both blocks by `diag(e^{i φ_j})`.
    pub fn with_gauge(&self, phases: &[f64]) -> Self {
        assert_eq!(phases.len(), self.l());
        let d: Vec<C64> = phases.iter().map(|&p| C64::from_polar(1.0, p)).collect();
        let d = ComplexMatrix::from_diag(&d);
        Self {
            u: self.u.matmul(&d),
            v: self.v.matmul(&d),
        }
    }

    /// Action of the rotation `R_θ = diag(e^{−iθ}1, e^{iθ}1)`.
    pub fn rotated(&self, theta: f64) -> Self {
        let z = C64::from_polar(1.0, theta);
        Self {
            u: self.u.scale(z.conj()),
            v: self.v.scale(z),
        }
    }

    /// Orthogonal projections onto the spans of the first `p` columns of `Φ`
    /// for `p = 1..=L`. These depend only on the flag, not on the gauge.
    pub fn flag_projections(&self) -> Vec<ComplexMatrix> {
        let phi = self.phi();
        let l = self.l();
        (1..=l)
            .map(|p| {
                let cols = phi.block(0, 0, 2 * l, p);
                cols.matmul(&cols.adjoint())
            })
            .collect()
    }

    /// Gauge-invariant distance between the flags of two frames.
    pub fn flag_distance(&self, other: &IsotropicFrame) -> f64 {
        self.flag_projections()
            .iter()
            .zip(other.flag_projections())
            .map(|(a, b)| (a - &b).frobenius_norm())
            .fold(0.0, f64::max)
    }
}

/// Orthonormal basis of the horizontal space `h^⊥ ⊂ u(L) × u(L)` under
/// `⟨(u,v),(ũ,ṽ)⟩ = Re Tr(u^*ũ + v^*ṽ)`. It has `2L² − L` elements, the
/// dimension of the flag manifold.
pub fn horizontal_basis(l: usize) -> Vec<(ComplexMatrix, ComplexMatrix)> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let zero = ComplexMatrix::zeros(l, l);
    let mut basis = Vec::with_capacity(2 * l * l - l);
    for j in 0..l {
        for k in j + 1..l {
            let ejk = ComplexMatrix::unit(l, j, k);
            let ekj = ComplexMatrix::unit(l, k, j);
            let anti = (&ejk - &ekj).scale_real(s);
            let sym = (&ejk + &ekj).scale(I * s);
            basis.push((anti.clone(), zero.clone()));
            basis.push((sym.clone(), zero.clone()));
            basis.push((zero.clone(), anti));
            basis.push((zero.clone(), sym));
        }
    }
    for j in 0..l {
        let e = ComplexMatrix::unit(l, j, j).scale(I * s);
        basis.push((e.clone(), -&e));
    }
    basis
}

/// Dimension of the flag manifold.
pub fn manifold_dim(l: usize) -> usize {
    2 * l * l - l
}

/// Left-invariant lift `(X_u, X_v) ∈ u(L) × u(L)` of the tangent vector
/// `d/dt|₀ exp(tP)·(U, V)`, in the gauge fixed by the positive-diagonal QR
/// convention of the flag action.
pub fn tangent_lift(p: &ComplexMatrix, frame: &IsotropicFrame) -> (ComplexMatrix, ComplexMatrix) {
    let l = frame.l();
    assert_eq!(p.rows(), 2 * l);
    let (u, v) = (frame.u(), frame.v());
    let a = p.block(0, 0, l, l);
    let b = p.block(0, l, l, l);
    let c = p.block(l, 0, l, l);
    let d = p.block(l, l, l, l);
    let k_u = u.adjoint().matmul(&(&a.matmul(u) + &b.matmul(v)));
    let k_v = v.adjoint().matmul(&(&c.matmul(u) + &d.matmul(v)));

    // Upper triangular S with real diagonal making K_u + S anti-Hermitian.
    let mut s = ComplexMatrix::zeros(l, l);
    for i in 0..l {
        s[(i, i)] = C64::new(-k_u[(i, i)].re, 0.0);
        for j in 0..i {
            s[(j, i)] = -k_u[(i, j)].conj() - k_u[(j, i)];
        }
    }
    (&k_u + &s, &k_v + &s)
}

/// Coordinates of a lifted tangent vector in the horizontal basis.
pub fn chart_coordinates(
    lift: &(ComplexMatrix, ComplexMatrix),
    basis: &[(ComplexMatrix, ComplexMatrix)],
) -> Vec<f64> {
    basis
        .iter()
        .map(|(bu, bv)| bu.real_inner(&lift.0) + bv.real_inner(&lift.1))
        .collect()
}

/// Tangent vector of the flow `exp(tP)` at `frame`, in chart coordinates.
pub fn tangent_vector(p: &ComplexMatrix, frame: &IsotropicFrame) -> Vec<f64> {
    let basis = horizontal_basis(frame.l());
    chart_coordinates(&tangent_lift(p, frame), &basis)
}

/// `diag(e^{−iθ}1, e^{iθ}1)`.
pub fn rotation_matrix(l: usize, theta: f64) -> ComplexMatrix {
    let z = C64::from_polar(1.0, theta);
    let diag: Vec<C64> = (0..2 * l).map(|i| if i < l { z.conj() } else { z }).collect();
    ComplexMatrix::from_diag(&diag)
}

/// Generator of the rotation torus: `diag(−i1, i1)`.
pub fn rotation_direction(l: usize) -> ComplexMatrix {
    let diag: Vec<C64> = (0..2 * l).map(|i| if i < l { -I } else { I }).collect();
    ComplexMatrix::from_diag(&diag)
}

/// Hermitian basis `{E_jj, (E_jk + E_kj)/√2, i(E_jk − E_kj)/√2}`, orthonormal
/// under `Re Tr(A^* B)`.
pub fn hermitian_basis(l: usize) -> Vec<ComplexMatrix> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::with_capacity(l * l);
    for j in 0..l {
        out.push(ComplexMatrix::unit(l, j, j));
    }
    for j in 0..l {
        for k in j + 1..l {
            let ejk = ComplexMatrix::unit(l, j, k);
            let ekj = ComplexMatrix::unit(l, k, j);
            out.push((&ejk + &ekj).scale_real(s));
            out.push((&ejk - &ekj).scale(I * s));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn horizontal_basis_is_orthonormal() {
        for l in 1..=4 {
            let b = horizontal_basis(l);
            assert_eq!(b.len(), manifold_dim(l));
            for (i, x) in b.iter().enumerate() {
                for (j, y) in b.iter().enumerate() {
                    let g = x.0.real_inner(&y.0) + x.1.real_inner(&y.1);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g - want).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn hermitian_basis_is_orthonormal() {
        let b = hermitian_basis(3);
        assert_eq!(b.len(), 9);
        for (i, x) in b.iter().enumerate() {
            assert!(x.is_hermitian(0.0));
            for (j, y) in b.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((x.real_inner(y) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn lift_is_anti_hermitian_for_lorentz_generators() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let l = 3;
        let g = crate::matrix::lorentz_form(l);
        for _ in 0..10 {
            // i·G·H lies in u(L,L) for Hermitian H.
            let h = ComplexMatrix::from_fn(2 * l, 2 * l, |_, _| {
                crate::matrix::complex_gaussian(&mut rng)
            });
            let h = &h + &h.adjoint();
            let p = g.matmul(&h).scale(I);
            assert!((&p.adjoint().matmul(&g) + &g.matmul(&p)).max_abs() < 1e-12);
            let frame = IsotropicFrame::haar(l, &mut rng);
            let (xu, xv) = tangent_lift(&p, &frame);
            assert!((&xu + &xu.adjoint()).max_abs() < 1e-12);
            assert!((&xv + &xv.adjoint()).max_abs() < 1e-12);
        }
    }

    #[test]
    fn flag_distance_ignores_gauge() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f = IsotropicFrame::haar(3, &mut rng);
        let g = f.with_gauge(&[0.3, -1.2, 2.0]);
        assert!(f.flag_distance(&g) < 1e-14);
        let h = IsotropicFrame::haar(3, &mut rng);
        assert!(f.flag_distance(&h) > 1e-3);
    }

    #[test]
    fn new_rejects_non_unitary() {
        let u = ComplexMatrix::scalar(2, C64::new(1.1, 0.0));
        let v = ComplexMatrix::identity(2);
        assert!(matches!(
            IsotropicFrame::new(u, v),
            Err(Error::NotUnitary { .. })
        ));
    }

    #[test]
    fn haar_frame_is_isotropic() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let f = IsotropicFrame::haar(4, &mut rng);
        let phi = f.phi();
        let g = crate::matrix::lorentz_form(4);
        assert!((&phi.adjoint().matmul(&phi) - &ComplexMatrix::identity(4)).max_abs() < 1e-12);
        assert!(phi.adjoint().matmul(&g).matmul(&phi).max_abs() < 1e-12);
        assert!(f.isotropy_defect() < 1e-12);
    }
}
