//! Real Lie algebras spanned by `2L×2L` complex matrices: bracket closure,
//! rank of the induced tangent map on the flag manifold, and the averaged
//! conjugate identity of the wires model.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{chart_coordinates, horizontal_basis, hermitian_basis, rotation_direction, rotation_matrix, tangent_lift, IsotropicFrame};
use crate::matrix::{lorentz_form, ComplexMatrix, C64, I};
use crate::wires::{p_of, WiresModel, DEFAULT_QUADRATURE_GRID};

/// Relative singular value cutoff used when extracting a span.
pub const CLOSURE_RANK_CUTOFF: f64 = 1e-9;
/// Relative singular value cutoff for [`tangent_rank`].
pub const TANGENT_RANK_CUTOFF: f64 = 1e-7;
pub const DEFAULT_MAX_R: usize = 20;

/// Orthonormal basis of a real subspace of `2L×2L` complex matrices under
/// `⟨P, Q⟩ = Re Tr(P^*Q)`. Membership in `u(L,L)` is checked by
/// [`LieBasis::lorentz_defect`], not enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct LieBasis {
    l: usize,
    basis: Vec<ComplexMatrix>,
}

fn vectorize(m: &ComplexMatrix) -> Vec<f64> {
    let s = m.as_slice();
    s.iter().map(|z| z.re).chain(s.iter().map(|z| z.im)).collect()
}

fn devectorize(v: &[f64], n: usize) -> ComplexMatrix {
    let half = n * n;
    ComplexMatrix::from_fn(n, n, |i, j| C64::new(v[i * n + j], v[half + i * n + j]))
}

/// Orthonormal basis of the real span, from the left singular vectors above
/// `cutoff · σ_max`.
fn orthonormal_span(mats: &[ComplexMatrix], n: usize, cutoff: f64) -> Vec<ComplexMatrix> {
    if mats.is_empty() {
        return Vec::new();
    }
    let rows = 2 * n * n;
    let cols: Vec<Vec<f64>> = mats.iter().map(vectorize).collect();
    let a = DMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i]);
    let svd = a.svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Vec::new();
    }
    svd.singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > cutoff * smax)
        .map(|(j, _)| {
            let col: Vec<f64> = u.column(j).iter().copied().collect();
            devectorize(&col, n)
        })
        .collect()
}

fn numerical_rank(rows: &[Vec<f64>], cutoff: f64) -> usize {
    if rows.is_empty() || rows[0].is_empty() {
        return 0;
    }
    let a = DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    let s = a.singular_values();
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > cutoff * smax).count()
}

impl LieBasis {
    /// Orthonormal basis of the real span of `mats` (each `2L×2L`).
    pub fn span(l: usize, mats: &[ComplexMatrix]) -> Result<Self> {
        for m in mats {
            if m.rows() != 2 * l || m.cols() != 2 * l {
                return Err(Error::Dimension(format!(
                    "expected {0}x{0} generators, got {1}x{2}",
                    2 * l,
                    m.rows(),
                    m.cols()
                )));
            }
        }
        Ok(Self {
            l,
            basis: orthonormal_span(mats, 2 * l, CLOSURE_RANK_CUTOFF),
        })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn elements(&self) -> &[ComplexMatrix] {
        &self.basis
    }

    /// `max |⟨B_i, B_j⟩ − δ_ij|`.
    pub fn gram_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.basis.iter().enumerate() {
            for (j, b) in self.basis.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((a.real_inner(b) - target).abs());
            }
        }
        worst
    }

    /// `max_i ‖B_i^* G + G B_i‖_F`; zero iff every element lies in `u(L,L)`.
    pub fn lorentz_defect(&self) -> f64 {
        let g = lorentz_form(self.l);
        self.basis
            .iter()
            .map(|b| (&b.adjoint().matmul(&g) + &g.matmul(b)).frobenius_norm())
            .fold(0.0, f64::max)
    }

    pub fn project(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(m.rows(), m.cols());
        for b in &self.basis {
            out += &b.scale_real(b.real_inner(m));
        }
        out
    }

    /// `‖m − proj(m)‖_F`.
    pub fn residual(&self, m: &ComplexMatrix) -> f64 {
        (m - &self.project(m)).frobenius_norm()
    }

    /// Largest residual of a basis bracket outside the span.
    pub fn bracket_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in self.basis.iter().enumerate() {
            for b in &self.basis[i + 1..] {
                worst = worst.max(self.residual(&a.commutator(b)));
            }
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Closure {
    pub basis: LieBasis,
    /// Smallest `r` with `v_r = v_{r+1}`.
    pub r: usize,
    /// `dim v_1, …, dim v_r`.
    pub dims: Vec<usize>,
}

/// Iterate `v_1 = span{P_i}`, `v_r = span(v_{r−1} ∪ [v_{r−1}, v_1])` until
/// the dimension stops growing.
pub fn bracket_closure(l: usize, generators: &[ComplexMatrix], max_r: usize) -> Result<Closure> {
    if generators.is_empty() || generators.iter().all(|g| g.max_abs() == 0.0) {
        return Err(Error::invalid("generators", "need at least one nonzero generator"));
    }
    if max_r == 0 {
        return Err(Error::invalid("max_r", "must be at least 1"));
    }
    let v1 = LieBasis::span(l, generators)?;
    let mut current = v1.clone();
    let mut dims = vec![current.dim()];
    for _ in 0..max_r {
        let mut mats = current.basis.clone();
        for a in &current.basis {
            for b in &v1.basis {
                mats.push(a.commutator(b));
            }
        }
        let next = LieBasis::span(l, &mats)?;
        if next.dim() == current.dim() {
            return Ok(Closure {
                basis: current,
                r: dims.len(),
                dims,
            });
        }
        dims.push(next.dim());
        current = next;
    }
    Err(Error::ClosureNotStable { max_r, dims })
}

/// Numerical rank of `P ↦ d/dt|₀ exp(tP)·x` over the basis, in the
/// orthonormal horizontal chart at `frame`.
pub fn tangent_rank(basis: &LieBasis, frame: &IsotropicFrame) -> usize {
    let chart = horizontal_basis(frame.l());
    let rows: Vec<Vec<f64>> = basis
        .basis
        .iter()
        .map(|p| chart_coordinates(&tangent_lift(p, frame), &chart))
        .collect();
    numerical_rank(&rows, TANGENT_RANK_CUTOFF)
}

/// A spanning set of `u(L,L)`: anti-Hermitian diagonal blocks and
/// off-diagonal blocks `(0, B; B^*, 0)`.
pub fn lorentz_algebra_generators(l: usize) -> Vec<ComplexMatrix> {
    let z = ComplexMatrix::zeros(l, l);
    let mut out = Vec::with_capacity(4 * l * l);
    for h in hermitian_basis(l) {
        let ih = h.scale(I);
        out.push(ComplexMatrix::from_blocks(&ih, &z, &z, &z));
        out.push(ComplexMatrix::from_blocks(&z, &z, &z, &ih));
        out.push(ComplexMatrix::from_blocks(&z, &h, &h, &z));
        out.push(ComplexMatrix::from_blocks(&z, &ih, &ih.adjoint(), &z));
    }
    out
}

/// Generators realizing the support of the wires couplings: `P(H)` for `H`
/// in the Hermitian basis, conjugated by every element of the closed group
/// generated by `R_k`. For a dense rotation group the rotation direction
/// itself is added.
pub fn wires_generators(model: &WiresModel) -> Vec<ComplexMatrix> {
    let l = model.l();
    let group = model.rotation_group();
    let angles = group.averaging_angles(DEFAULT_QUADRATURE_GRID);
    let mut out = Vec::new();
    for h in hermitian_basis(l) {
        let p = model.p_of(&h);
        for &t in &angles {
            let r = rotation_matrix(l, t);
            out.push(r.matmul(&p).matmul(&r.adjoint()));
        }
    }
    if !group.is_finite() {
        out.push(rotation_direction(l));
    }
    out
}

/// `‖−2cos(2k)P + R_k P R_k⁻¹ + R_k⁻¹ P R_k − ((1 − cos 2k)/sin k)(iW, 0; 0, −iW)‖_F`.
pub fn averaged_conjugate_identity(k: f64, w: &ComplexMatrix) -> f64 {
    let l = w.rows();
    let p = p_of(w, k);
    let r = rotation_matrix(l, k);
    let ri = r.adjoint();
    let lhs = &(&p.scale_real(-2.0 * (2.0 * k).cos()) + &r.matmul(&p).matmul(&ri)) + &ri.matmul(&p).matmul(&r);
    let iw = w.scale(I);
    let z = ComplexMatrix::zeros(l, l);
    let rhs = ComplexMatrix::from_blocks(&iw, &z, &z, &-&iw).scale_real((1.0 - (2.0 * k).cos()) / k.sin());
    (&lhs - &rhs).frobenius_norm()
}

/// Summary of the coupling hypothesis check for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingCertificate {
    pub l: usize,
    pub energy: f64,
    pub dims: Vec<usize>,
    pub r: usize,
    pub closure_dim: usize,
    pub tangent_ranks: Vec<usize>,
    pub manifold_dim: usize,
    pub closure_cutoff: f64,
    pub tangent_cutoff: f64,
}

impl CouplingCertificate {
    pub fn transitive(&self) -> bool {
        self.tangent_ranks.iter().all(|&r| r == self.manifold_dim)
    }
}

pub fn certify_coupling<R: rand::Rng + ?Sized>(model: &WiresModel, frames: usize, rng: &mut R) -> Result<CouplingCertificate> {
    let l = model.l();
    let closure = bracket_closure(l, &wires_generators(model), DEFAULT_MAX_R)?;
    let tangent_ranks = (0..frames)
        .map(|_| tangent_rank(&closure.basis, &IsotropicFrame::haar(l, rng)))
        .collect();
    Ok(CouplingCertificate {
        l,
        energy: model.energy(),
        closure_dim: closure.basis.dim(),
        dims: closure.dims,
        r: closure.r,
        tangent_ranks,
        manifold_dim: crate::frame::manifold_dim(l),
        closure_cutoff: CLOSURE_RANK_CUTOFF,
        tangent_cutoff: TANGENT_RANK_CUTOFF,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::{sample_w, Ensemble, WignerSpec};
    use crate::frame::manifold_dim;
    use crate::matrix::ONE;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn abelian_closure() {
        let d = ComplexMatrix::from_diag(&[I, -I * 2.0]);
        let c = bracket_closure(1, &[d], 5).unwrap();
        assert_eq!(c.basis.dim(), 1);
        assert_eq!(c.r, 1);
        assert_eq!(c.dims, vec![1]);
    }

    #[test]
    fn pauli_closure_is_su2() {
        let z = C64::new(0.0, 0.0);
        let x = ComplexMatrix::from_rows(&[vec![z, I], vec![I, z]]).unwrap();
        let y = ComplexMatrix::from_rows(&[vec![z, ONE], vec![-ONE, z]]).unwrap();
        let c = bracket_closure(1, &[x, y], 5).unwrap();
        assert_eq!(c.basis.dim(), 3);
        assert_eq!(c.dims, vec![2, 3]);
        assert!(c.basis.gram_defect() < 1e-10);
        assert!(c.basis.bracket_defect() < 1e-8);
    }

    #[test]
    fn lorentz_algebra_has_full_dimension() {
        for l in 1..4 {
            let b = LieBasis::span(l, &lorentz_algebra_generators(l)).unwrap();
            assert_eq!(b.dim(), 4 * l * l);
            assert!(b.lorentz_defect() < 1e-10);
            assert!(b.gram_defect() < 1e-10);
        }
    }

    #[test]
    fn full_algebra_acts_transitively() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for l in 1..4 {
            let b = LieBasis::span(l, &lorentz_algebra_generators(l)).unwrap();
            let x = IsotropicFrame::haar(l, &mut rng);
            assert_eq!(tangent_rank(&b, &x), manifold_dim(l));
        }
    }

    #[test]
    fn rotation_torus_is_not_transitive() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = LieBasis::span(2, &[rotation_direction(2)]).unwrap();
        assert_eq!(tangent_rank(&b, &IsotropicFrame::haar(2, &mut rng)), 1);
    }

    #[test]
    fn wires_closure_contains_block_algebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for l in [2, 3] {
            let model = WiresModel::new(l, 1.0, 0.1, Ensemble::Gaussian).unwrap();
            let cert = certify_coupling(&model, 20, &mut rng).unwrap();
            assert!(cert.closure_dim >= 2 * l * l - 1, "{cert:?}");
            assert!(cert.transitive(), "{cert:?}");
            assert!(cert.dims.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn wires_closure_is_closed_and_lorentz() {
        let model = WiresModel::new(2, 0.5, 0.1, Ensemble::Gaussian).unwrap();
        let c = bracket_closure(2, &wires_generators(&model), DEFAULT_MAX_R).unwrap();
        assert!(c.basis.bracket_defect() < 1e-8);
        assert!(c.basis.lorentz_defect() < 1e-10);
        assert!(c.basis.gram_defect() < 1e-10);
    }

    #[test]
    fn conjugate_identity() {
        assert_eq!(averaged_conjugate_identity(1.0, &ComplexMatrix::zeros(2, 2)), 0.0);
        let k = 2.0 * std::f64::consts::PI / 3.0;
        assert!(averaged_conjugate_identity(k, &ComplexMatrix::identity(1)) <= 1e-13);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let w = sample_w(&WignerSpec::gaussian(3), &mut rng);
            assert!(averaged_conjugate_identity(1.0, &w) <= 1e-12);
        }
    }

    #[test]
    fn block_diagonal_brackets_stay_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = WignerSpec::gaussian(3);
        for _ in 0..20 {
            let block = |v: &ComplexMatrix| {
                let iv = v.scale(I);
                ComplexMatrix::from_blocks(&iv, &ComplexMatrix::zeros(3, 3), &ComplexMatrix::zeros(3, 3), &-&iv)
            };
            let a = block(&sample_w(&spec, &mut rng));
            let b = block(&sample_w(&spec, &mut rng));
            let c = a.commutator(&b);
            assert!(c.block(0, 3, 3, 3).max_abs() < 1e-13);
            assert!(c.block(3, 0, 3, 3).max_abs() < 1e-13);
            assert!((&c.block(0, 0, 3, 3) - &c.block(3, 3, 3, 3)).max_abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_size_generators_rejected() {
        assert!(LieBasis::span(2, &[ComplexMatrix::identity(2)]).is_err());
        assert!(bracket_closure(1, &[ComplexMatrix::zeros(2, 2)], 3).is_err());
    }
}
