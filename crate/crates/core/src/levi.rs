//! Centralizers and Levi reductions of commuting semisimple families.
//!
//! For a commuting semisimple family with joint eigenspace dimensions
//! `m_1, …, m_r`, the centralizer in `gl(n)` is `⊕ gl(m_a)`, the Lie algebra
//! of the Levi subgroup `∏ GL(m_a)`. A reduction frame is an invertible `g`
//! with every `g⁻¹ T^i g` block-scalar in canonical order; it is unique up to
//! right multiplication by an element of that Levi subgroup.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    commutator, ensure_square, frobenius_norm, identity, inverse, nullspace, semisimplicity,
    ComplexMatrix, Tolerances,
};
use crate::model::{family_scale, io, linear_scale};
use crate::polystability::{commutation_residual, joint_eigenspaces, joint_spectrum, JointSpectrum, DEFAULT_SPLIT_SEED};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CentralizerResult {
    pub dim: usize,
    /// Multiplicities of the joint spectrum, descending; present when the
    /// family is commuting semisimple.
    pub levi_type: Option<Vec<usize>>,
    /// Whether `dim = Σ m_a²`; present together with `levi_type`.
    pub dimension_consistent: Option<bool>,
    /// Orthonormal for the trace form `⟨X, Y⟩ = tr(X† Y)`.
    #[serde(with = "io::matrices")]
    pub basis: Vec<ComplexMatrix>,
}

/// `vec(X) ↦ vec([X, T])` for column-major `vec`.
pub(crate) fn commutator_operator(t: &ComplexMatrix) -> ComplexMatrix {
    let n = t.nrows();
    let id = identity(n);
    t.transpose().kronecker(&id) - id.kronecker(t)
}

/// The stacked operator `vec(X) ↦ (vec [X, T^1], …, vec [X, T^d])`.
pub fn commutation_operator(family: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    let n = ensure_square(family.first().ok_or_else(|| Error::Shape("empty family".into()))?)?;
    if family.iter().any(|t| t.shape() != (n, n)) {
        return Err(Error::Shape("family members differ in size".into()));
    }
    let blocks: Vec<ComplexMatrix> = family.iter().map(commutator_operator).collect();
    let mut stacked = ComplexMatrix::zeros(n * n * family.len(), n * n);
    for (k, b) in blocks.iter().enumerate() {
        stacked.view_mut((k * n * n, 0), (n * n, n * n)).copy_from(b);
    }
    Ok(stacked)
}

/// Inverse of column-major `vec`.
pub fn unvec(v: &DVector<Complex64>, n: usize) -> ComplexMatrix {
    ComplexMatrix::from_column_slice(n, n, v.as_slice())
}

fn commuting_semisimple(family: &[ComplexMatrix], tol: &Tolerances) -> Result<bool> {
    if commutation_residual(family) > tol.tau_commute * family_scale(family) {
        return Ok(false);
    }
    for t in family {
        if !semisimplicity(t, tol)?.semisimple {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Solves `[X, T^i] = 0` for all `i` through the vectorized Kronecker system.
///
/// Works for any family of equal-size square matrices. When the family is
/// commuting semisimple the Levi type is attached and `dim = Σ m_a²` checked.
pub fn centralizer_basis(family: &[ComplexMatrix], tol: &Tolerances) -> Result<CentralizerResult> {
    let op = commutation_operator(family)?;
    let n = family[0].nrows();
    let kernel = nullspace(&op, tol)?;
    let basis: Vec<ComplexMatrix> = kernel.column_iter().map(|c| unvec(&c.into_owned(), n)).collect();
    let dim = basis.len();
    let (levi_type, dimension_consistent) = if commuting_semisimple(family, tol)? {
        let lt = levi_type(&joint_spectrum(family, tol, DEFAULT_SPLIT_SEED)?);
        let expected: usize = lt.iter().map(|m| m * m).sum();
        (Some(lt), Some(expected == dim))
    } else {
        (None, None)
    };
    Ok(CentralizerResult { dim, levi_type, dimension_consistent, basis })
}

/// Multiplicities of the joint spectrum, sorted descending.
pub fn levi_type(spectrum: &JointSpectrum) -> Vec<usize> {
    let mut m = spectrum.multiplicities();
    m.sort_unstable_by(|a, b| b.cmp(a));
    m
}

/// Relative distance from `x` to the span of a trace-orthonormal basis.
pub fn span_residual(basis: &[ComplexMatrix], x: &ComplexMatrix) -> f64 {
    let mut rest = x.clone();
    for b in basis {
        let coeff = b.dotc(x);
        rest -= b * coeff;
    }
    frobenius_norm(&rest) / frobenius_norm(x).max(f64::MIN_POSITIVE)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReductionFrame {
    /// Joint eigenbasis in canonical spectrum order, orthonormal within each group.
    #[serde(with = "io::matrix")]
    pub frame: ComplexMatrix,
    pub group_sizes: Vec<usize>,
    pub spectrum: JointSpectrum,
}

impl ReductionFrame {
    /// `maxᵢ ‖g⁻¹ T^i g − canonical^i‖`.
    pub fn residual(&self, family: &[ComplexMatrix]) -> Result<f64> {
        let inv = inverse(&self.frame)?;
        Ok(family
            .iter()
            .enumerate()
            .map(|(i, t)| frobenius_norm(&(&inv * t * &self.frame - self.spectrum.block_scalar(i))))
            .fold(0.0, f64::max))
    }

    /// True when `h` is block diagonal for this frame's group sizes.
    pub fn is_block_diagonal(&self, h: &ComplexMatrix, eps: f64) -> bool {
        let mut owner = Vec::with_capacity(h.nrows());
        for (a, &m) in self.group_sizes.iter().enumerate() {
            owner.extend(std::iter::repeat_n(a, m));
        }
        let off: f64 = (0..h.nrows())
            .flat_map(|i| (0..h.ncols()).map(move |j| (i, j)))
            .filter(|&(i, j)| owner[i] != owner[j])
            .map(|(i, j)| h[(i, j)].norm_sqr())
            .sum();
        off.sqrt() <= eps * frobenius_norm(h).max(1.0)
    }
}

/// Frame conjugating a commuting semisimple family to block-scalar canonical form.
pub fn conjugating_frame(family: &[ComplexMatrix], tol: &Tolerances, seed: u64) -> Result<ReductionFrame> {
    let dec = joint_eigenspaces(family, tol, seed)?;
    Ok(ReductionFrame { frame: dec.basis, group_sizes: dec.group_sizes, spectrum: dec.spectrum })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionStep {
    /// How many leading generators have been imposed.
    pub generators: usize,
    /// Dimension of their common centralizer.
    pub dim: usize,
    /// Levi type of the leading sub-family, when it is commuting semisimple.
    pub levi_type: Option<Vec<usize>>,
}

/// Imposes the generators one at a time: the centralizer of `T^1`, then the
/// part of it commuting with `T^2`, and so on.
pub fn inductive_reduction(family: &[ComplexMatrix], tol: &Tolerances) -> Result<Vec<ReductionStep>> {
    let n = ensure_square(family.first().ok_or_else(|| Error::Shape("empty family".into()))?)?;
    // Columns: a trace-orthonormal basis of the current centralizer, vectorized.
    let mut current = identity(n * n);
    let mut steps = Vec::with_capacity(family.len());
    for k in 0..family.len() {
        let restricted = commutator_operator(&family[k]) * &current;
        let kernel = nullspace(&restricted, tol)?;
        current = &current * kernel;
        let prefix = &family[..=k];
        let lt = if commuting_semisimple(prefix, tol)? {
            Some(levi_type(&joint_spectrum(prefix, tol, DEFAULT_SPLIT_SEED)?))
        } else {
            None
        };
        steps.push(ReductionStep { generators: k + 1, dim: current.ncols(), levi_type: lt });
    }
    Ok(steps)
}

/// Largest `‖[X, T^i]‖` over basis elements and family members, relative to
/// `max(1, maxᵢ ‖T^i‖)`.
pub fn centralizer_defect(basis: &[ComplexMatrix], family: &[ComplexMatrix]) -> f64 {
    let scale = linear_scale(family);
    basis
        .iter()
        .flat_map(|x| family.iter().map(move |t| frobenius_norm(&commutator(x, t))))
        .fold(0.0, f64::max)
        / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::real_matrix;
    use crate::model::gen_planted;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn distinct_eigenvalues_give_diagonal_centralizer() {
        let r = centralizer_basis(&[real_matrix(2, 2, &[1., 0., 0., 2.])], &tol()).unwrap();
        assert_eq!(r.dim, 2);
        assert_eq!(r.levi_type, Some(vec![1, 1]));
        for x in &r.basis {
            assert!(x[(0, 1)].norm() < 1e-14 && x[(1, 0)].norm() < 1e-14);
        }
    }

    #[test]
    fn identity_centralizer_is_everything() {
        let r = centralizer_basis(&[identity(3)], &tol()).unwrap();
        assert_eq!(r.dim, 9);
        assert_eq!(r.levi_type, Some(vec![3]));
        assert_eq!(r.dimension_consistent, Some(true));
    }

    #[test]
    fn repeated_eigenvalue_centralizer() {
        let r = centralizer_basis(&[real_matrix(3, 3, &[1., 0., 0., 0., 1., 0., 0., 0., 2.])], &tol()).unwrap();
        assert_eq!(r.dim, 5);
        assert_eq!(r.levi_type, Some(vec![2, 1]));
    }

    #[test]
    fn centralizer_of_jordan_block_has_no_levi_type() {
        let r = centralizer_basis(&[real_matrix(2, 2, &[0., 1., 0., 0.])], &tol()).unwrap();
        assert_eq!(r.dim, 2);
        assert_eq!(r.levi_type, None);
        assert!(centralizer_defect(&r.basis, &[real_matrix(2, 2, &[0., 1., 0., 0.])]) < 1e-12);
    }

    #[test]
    fn levi_type_sorted_descending() {
        let (_, truth) = gen_planted(2, &[6], None, 5).unwrap();
        let lt = levi_type(&truth.blocks[0].spectrum);
        assert!(lt.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(lt.iter().sum::<usize>(), 6);
    }

    #[test]
    fn frame_and_inductive_reduction_on_planted() {
        let (datum, _) = gen_planted(3, &[5], None, 8).unwrap();
        let fam = &datum.blocks[0].higgs;
        let frame = conjugating_frame(fam, &tol(), 1).unwrap();
        assert!(frame.residual(fam).unwrap() <= 1e-7 * datum.scale());
        let all = centralizer_basis(fam, &tol()).unwrap();
        let steps = inductive_reduction(fam, &tol()).unwrap();
        assert_eq!(steps.last().unwrap().dim, all.dim);
        assert_eq!(steps.last().unwrap().levi_type, all.levi_type);
        assert!(steps.windows(2).all(|w| w[0].dim >= w[1].dim));
    }

    #[test]
    fn span_residual_detects_membership() {
        let r = centralizer_basis(&[real_matrix(2, 2, &[1., 0., 0., 2.])], &tol()).unwrap();
        assert!(span_residual(&r.basis, &real_matrix(2, 2, &[5., 0., 0., -1.])) < 1e-14);
        assert!(span_residual(&r.basis, &real_matrix(2, 2, &[0., 1., 0., 0.])) > 0.99);
    }
}
