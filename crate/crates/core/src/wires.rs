//! The randomly coupled wires model: `L` discrete Laplacian chains coupled by
//! a random Hermitian hopping matrix `W` at each slice, its transfer matrices
//! and their normal form `R_k exp(λ P(W))` in the Lorentz group U(L,L).

use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ensembles::{sample_w, Ensemble, WignerSpec};
use crate::error::{Error, Result};
use crate::frame::rotation_matrix;
use crate::matrix::{expm, lorentz_form, symplectic_form, ComplexMatrix, C64, I, ONE};

/// Minimum `sin k` accepted before a parameter set is treated as a band edge.
pub const BAND_EDGE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct WiresModel {
    l: usize,
    energy: f64,
    k: f64,
    lambda: f64,
    spec: WignerSpec,
    // C·N and N⁻¹·C^*, fixed by (L, E).
    left: ComplexMatrix,
    right: ComplexMatrix,
    // C·N·T̂(λ = 0)·N⁻¹·C^*, equal to R_k up to rounding.
    base: ComplexMatrix,
    left_cols: ComplexMatrix,
    right_rows: ComplexMatrix,
}

impl WiresModel {
    pub fn new(l: usize, energy: f64, lambda: f64, kind: Ensemble) -> Result<Self> {
        if l == 0 {
            return Err(Error::invalid("L", "must be at least 1"));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid("lambda", "must be finite and non-negative"));
        }
        if !energy.is_finite() || energy.abs() >= 2.0 {
            return Err(Error::BandEdge { energy });
        }
        let k = energy_to_k(energy)?;
        let left = cayley(l).matmul(&normal_conjugator(l, k));
        let right = normal_conjugator_inverse(l, k).matmul(&cayley(l).adjoint());
        let t0 = transfer_hat_raw(l, energy, 0.0, &ComplexMatrix::zeros(l, l));
        let base = left.matmul(&t0).matmul(&right);
        let left_cols = left.block(0, 0, 2 * l, l);
        let right_rows = right.block(0, 0, l, 2 * l);
        Ok(Self {
            l,
            energy,
            k,
            lambda,
            spec: WignerSpec::new(l, kind),
            left,
            right,
            base,
            left_cols,
            right_rows,
        })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Quasi-momentum `k ∈ (0, π)` with `E = −2 cos k`.
    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn spec(&self) -> &WignerSpec {
        &self.spec
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.l, self.energy, lambda, self.spec.kind)
    }

    pub fn sample_w<R: Rng + ?Sized>(&self, rng: &mut R) -> ComplexMatrix {
        sample_w(&self.spec, rng)
    }

    pub fn cayley(&self) -> ComplexMatrix {
        cayley(self.l)
    }

    pub fn normal_conjugator(&self) -> ComplexMatrix {
        normal_conjugator(self.l, self.k)
    }

    pub fn lorentz_form(&self) -> ComplexMatrix {
        lorentz_form(self.l)
    }

    pub fn symplectic_form(&self) -> ComplexMatrix {
        symplectic_form(self.l)
    }

    /// `R_k = diag(e^{−ik}1, e^{ik}1)`.
    pub fn r_k(&self) -> ComplexMatrix {
        rotation_matrix(self.l, self.k)
    }

    /// `P(W) = (i / 2 sin k) [[W, W], [−W, −W]] ∈ u(L,L)`.
    pub fn p_of(&self, w: &ComplexMatrix) -> ComplexMatrix {
        p_of(w, self.k)
    }

    /// Transfer matrix `T̂ = [[λW − E1, −1], [1, 0]]`.
    pub fn transfer_hat(&self, w: &ComplexMatrix) -> ComplexMatrix {
        transfer_hat_raw(self.l, self.energy, self.lambda, w)
    }

    /// Normal form `T = C N T̂ N⁻¹ C^*`. Computed from the precomputed outer
    /// factors, using that `T̂` is affine in `W`.
    pub fn normal_form(&self, w: &ComplexMatrix) -> ComplexMatrix {
        let mut t = self.base.clone();
        if self.lambda != 0.0 {
            let pert = self.left_cols.matmul(w).matmul(&self.right_rows);
            for (a, b) in t.as_mut_slice().iter_mut().zip(pert.as_slice()) {
                *a += b * self.lambda;
            }
        }
        t
    }

    /// The conjugation `C N T̂ N⁻¹ C^*` evaluated as a literal product of
    /// four matrices.
    pub fn normal_form_literal(&self, w: &ComplexMatrix) -> ComplexMatrix {
        self.left.matmul(&self.transfer_hat(w)).matmul(&self.right)
    }

    /// Right-hand side of the normal form identity, `R_k exp(λ P(W))`.
    pub fn normal_form_exponential(&self, w: &ComplexMatrix) -> Result<ComplexMatrix> {
        let p = self.p_of(w).scale_real(self.lambda);
        Ok(self.r_k().matmul(&expm(&p)?))
    }

    pub fn rotation_group(&self) -> RotationGroup {
        rotation_group(self.k, ORDER_TOLERANCE)
    }
}

pub fn energy_to_k(energy: f64) -> Result<f64> {
    if !energy.is_finite() || energy.abs() >= 2.0 {
        return Err(Error::BandEdge { energy });
    }
    let k = (-energy / 2.0).acos();
    if k.sin() < BAND_EDGE_TOLERANCE {
        return Err(Error::BandEdge { energy });
    }
    Ok(k)
}

/// Cayley transformation `C = 2^{-1/2} [[1, −i1], [1, i1]]`.
pub fn cayley(l: usize) -> ComplexMatrix {
    let id = ComplexMatrix::identity(l);
    ComplexMatrix::from_blocks(&id, &id.scale(-I), &id, &id.scale(I)).scale_real(FRAC_1_SQRT_2)
}

/// `N = (sin k)^{-1/2} [[sin k·1, 0], [−cos k·1, 1]]`.
pub fn normal_conjugator(l: usize, k: f64) -> ComplexMatrix {
    let (s, c) = k.sin_cos();
    let id = ComplexMatrix::identity(l);
    let z = ComplexMatrix::zeros(l, l);
    ComplexMatrix::from_blocks(&id.scale_real(s), &z, &id.scale_real(-c), &id)
        .scale_real(1.0 / s.sqrt())
}

/// `N⁻¹ = (sin k)^{-1/2} [[1, 0], [cos k·1, sin k·1]]`.
pub fn normal_conjugator_inverse(l: usize, k: f64) -> ComplexMatrix {
    let (s, c) = k.sin_cos();
    let id = ComplexMatrix::identity(l);
    let z = ComplexMatrix::zeros(l, l);
    ComplexMatrix::from_blocks(&id, &z, &id.scale_real(c), &id.scale_real(s))
        .scale_real(1.0 / s.sqrt())
}

pub fn p_of(w: &ComplexMatrix, k: f64) -> ComplexMatrix {
    let c = I / (2.0 * k.sin());
    let a = w.scale(c);
    let na = -&a;
    ComplexMatrix::from_blocks(&a, &a, &na, &na)
}

fn transfer_hat_raw(l: usize, energy: f64, lambda: f64, w: &ComplexMatrix) -> ComplexMatrix {
    let id = ComplexMatrix::identity(l);
    let top_left = &w.scale_real(lambda) - &id.scale_real(energy);
    ComplexMatrix::from_blocks(&top_left, &(-&id), &id, &ComplexMatrix::zeros(l, l))
}

/// Tolerance used when deciding whether `e^{ik}` is a root of unity.
pub const ORDER_TOLERANCE: f64 = 1e-9;
/// Largest order searched before the rotation group is treated as dense.
pub const DEFAULT_MAX_ORDER: u64 = 1_000_000;
/// Finite groups up to this order are averaged over exactly; larger ones
/// (and the full circle) use the uniform quadrature grid.
pub const MAX_ENUMERATED_ORDER: u64 = 64;
/// Uniform grid used to average over the circle.
pub const DEFAULT_QUADRATURE_GRID: usize = 16;

/// Closed subgroup of the circle generated by `R_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationGroup {
    pub k: f64,
    /// Order `s` of `e^{ik}` as a root of unity; `None` for the full circle.
    pub order: Option<u64>,
}

/// Classify the rotation by `k`: the smallest `s ≤ 10⁶` with
/// `|e^{isk} − 1| < tol`, or the full circle if there is none.
pub fn rotation_group(k: f64, tol: f64) -> RotationGroup {
    rotation_group_with_limit(k, tol, DEFAULT_MAX_ORDER)
}

pub fn rotation_group_with_limit(k: f64, tol: f64, max_order: u64) -> RotationGroup {
    let order = (1..=max_order).find(|&s| {
        let phase = (s as f64 * k).rem_euclid(TAU);
        (C64::from_polar(1.0, phase) - ONE).norm() < tol
    });
    RotationGroup { k, order }
}

impl RotationGroup {
    pub fn is_finite(&self) -> bool {
        self.order.is_some()
    }

    /// Angles of all group elements, for finite groups.
    pub fn elements(&self) -> Option<Vec<f64>> {
        self.order
            .map(|s| (0..s).map(|j| TAU * j as f64 / s as f64).collect())
    }

    /// Exact Haar average of `θ ↦ e^{imθ}`.
    pub fn haar_average(&self, m: i64) -> C64 {
        let hit = match self.order {
            Some(s) => m.rem_euclid(s as i64) == 0,
            None => m == 0,
        };
        if hit {
            ONE
        } else {
            C64::new(0.0, 0.0)
        }
    }

    pub fn sample_angle<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.order {
            Some(s) => TAU * rng.random_range(0..s) as f64 / s as f64,
            None => rng.random::<f64>() * TAU,
        }
    }

    /// Nodes with equal weights that reproduce Haar averages of trigonometric
    /// polynomials of degree below `grid` (exactly, for enumerated finite
    /// groups).
    pub fn averaging_angles(&self, grid: usize) -> Vec<f64> {
        match self.order {
            Some(s) if s <= MAX_ENUMERATED_ORDER => self.elements().unwrap_or_default(),
            _ => (0..grid).map(|j| TAU * j as f64 / grid as f64).collect(),
        }
    }
}

/// `2π/3`, the quasi-momentum at `E = 1`.
pub const K_AT_E1: f64 = 2.0 * PI / 3.0;
