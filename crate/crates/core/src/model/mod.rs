//! Higgs data on a torus: per-block tuples of constant matrices.
//!
//! A polystable bundle splits as `⊕ E_j ⊗ ℂ^{n_j}` with pairwise
//! non-isomorphic stable `E_j` of a common slope, and every Higgs component
//! acts as `Id_{E_j} ⊗ T^i_j`. The summands themselves are opaque here: only
//! their label, rank and slope are carried, and all computation happens on the
//! multiplicity matrices `T^i_j`.

mod generate;
pub mod io;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, frobenius_norm, inverse, ComplexMatrix, Tolerances};

pub use generate::{
    gen_negative, gen_planted, gen_planted_with, random_invertible, random_unit_circle, random_unitary, rng_for,
    BlockTruth, Conjugation, NegativeKind, PlantedConfig, PlantedTruth, DEFAULT_CONJUGATOR_CONDITION,
};

/// One stable summand `E_j` together with its multiplicity matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub label: String,
    /// Rank of `E_j` (metadata).
    pub rank: usize,
    /// Slope of `E_j` (metadata).
    pub slope: f64,
    /// `n_j`, the size of every matrix in `higgs`.
    pub multiplicity: usize,
    /// `T^1_j, …, T^d_j`.
    #[serde(with = "io::matrices")]
    pub higgs: Vec<ComplexMatrix>,
}

impl BlockSpec {
    pub fn scale(&self) -> f64 {
        family_scale(&self.higgs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiggsDatum {
    /// Number of Higgs components, the rank of the trivialized cotangent bundle.
    pub dim: usize,
    pub blocks: Vec<BlockSpec>,
}

impl HiggsDatum {
    /// `max(1, max ‖T^i_j‖²)` over all blocks and components.
    pub fn scale(&self) -> f64 {
        self.blocks.iter().map(BlockSpec::scale).fold(1.0, f64::max)
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.multiplicity).collect()
    }

    pub fn validate(&self, tol: &Tolerances) -> ValidationReport {
        validate(self, tol)
    }
}

/// `max(1, maxᵢ ‖T^i‖_F²)`, the natural size of quadratic expressions in the family.
pub fn family_scale(family: &[ComplexMatrix]) -> f64 {
    family.iter().map(|t| frobenius_norm(t).powi(2)).fold(1.0, f64::max)
}

/// `max(1, maxᵢ ‖T^i‖_F)`.
pub fn linear_scale(family: &[ComplexMatrix]) -> f64 {
    family.iter().map(frobenius_norm).fold(1.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub(crate) fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { path: path.into(), message: message.into() });
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            Err(Error::Invalid(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{}: {}", v.path, v.message)?;
        }
        Ok(())
    }
}

/// Checks every structural invariant of a datum and reports all violations.
pub fn validate(datum: &HiggsDatum, tol: &Tolerances) -> ValidationReport {
    let mut report = ValidationReport::default();
    if datum.dim == 0 {
        report.push("dim", "dim must be positive");
    }
    if datum.blocks.is_empty() {
        report.push("blocks", "empty blocks list");
    }
    let mut seen = HashSet::new();
    for (j, block) in datum.blocks.iter().enumerate() {
        let path = format!("blocks[{j}]");
        if !seen.insert(block.label.as_str()) {
            report.push(format!("{path}.label"), "labels not distinct");
        }
        if block.rank == 0 {
            report.push(format!("{path}.rank"), "rank must be positive");
        }
        if block.multiplicity == 0 {
            report.push(format!("{path}.multiplicity"), "multiplicity must be positive");
        }
        if !block.slope.is_finite() {
            report.push(format!("{path}.slope"), "non-finite slope");
        }
        if block.higgs.len() != datum.dim {
            report.push(
                format!("{path}.higgs"),
                format!("higgs arity mismatch (expected {}, got {})", datum.dim, block.higgs.len()),
            );
        }
        let n = block.multiplicity;
        for (i, t) in block.higgs.iter().enumerate() {
            if t.shape() != (n, n) {
                report.push(
                    format!("{path}.higgs[{i}]"),
                    format!("expected {n}x{n} matrix, got {}x{}", t.nrows(), t.ncols()),
                );
            }
            if !all_finite(t) {
                report.push(format!("{path}.higgs[{i}]"), "non-finite entry");
            }
        }
    }
    if let Some(first) = datum.blocks.first() {
        let reference = first.slope;
        for (j, block) in datum.blocks.iter().enumerate().skip(1) {
            if (block.slope - reference).abs() > tol.tau_rank * reference.abs().max(1.0) {
                report.push(
                    format!("blocks[{j}].slope"),
                    "slopes differ: not a polystable decomposition input",
                );
            }
        }
    }
    report
}

/// An invertible `d × d` matrix re-expressing the Higgs components in a new
/// frame of the cotangent bundle.
#[derive(Clone, Debug, PartialEq)]
pub struct ChangeOfTrivialization {
    matrix: ComplexMatrix,
}

impl ChangeOfTrivialization {
    pub fn new(matrix: ComplexMatrix, tol: &Tolerances) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::NotSquare { rows: matrix.nrows(), cols: matrix.ncols() });
        }
        let det = matrix.determinant().norm();
        if !(det > tol.tau_rank) {
            return Err(Error::Singular(format!("trivialization change has |det| = {det:.3e}")));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn inverse(&self, tol: &Tolerances) -> Result<Self> {
        Self::new(inverse(&self.matrix)?, tol)
    }
}

/// Per-block invertible automorphisms `S_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeTransform {
    blocks: Vec<ComplexMatrix>,
}

impl GaugeTransform {
    pub fn new(blocks: Vec<ComplexMatrix>) -> Result<Self> {
        for (j, g) in blocks.iter().enumerate() {
            if !g.is_square() {
                return Err(Error::NotSquare { rows: g.nrows(), cols: g.ncols() });
            }
            inverse(g).map_err(|_| Error::Singular(format!("gauge block {j}")))?;
        }
        Ok(Self { blocks })
    }

    pub fn identity(sizes: &[usize]) -> Self {
        Self { blocks: sizes.iter().map(|&n| ComplexMatrix::identity(n, n)).collect() }
    }

    pub fn blocks(&self) -> &[ComplexMatrix] {
        &self.blocks
    }

    /// Blockwise product `self · other`.
    pub fn compose(&self, other: &GaugeTransform) -> Result<Self> {
        if self.blocks.len() != other.blocks.len() {
            return Err(Error::Shape("gauge block counts differ".into()));
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| {
                if a.shape() != b.shape() {
                    return Err(Error::Shape("gauge block sizes differ".into()));
                }
                Ok(a * b)
            })
            .collect::<Result<_>>()?;
        Ok(Self { blocks })
    }

    pub(crate) fn check_against(&self, sizes: &[usize]) -> Result<()> {
        if self.blocks.len() != sizes.len() {
            return Err(Error::Shape(format!(
                "gauge has {} blocks, target has {}",
                self.blocks.len(),
                sizes.len()
            )));
        }
        for (j, (g, &n)) in self.blocks.iter().zip(sizes).enumerate() {
            if g.shape() != (n, n) {
                return Err(Error::Shape(format!("gauge block {j} is {:?}, expected {n}x{n}", g.shape())));
            }
        }
        Ok(())
    }
}

/// Replaces each component by `T′^i = Σ_k A[i,k] · T^k`, block by block.
pub fn apply_trivialization_change(datum: &HiggsDatum, change: &ChangeOfTrivialization) -> Result<HiggsDatum> {
    let a = change.matrix();
    if a.nrows() != datum.dim {
        return Err(Error::Shape(format!("trivialization is {}x{}, datum has d = {}", a.nrows(), a.ncols(), datum.dim)));
    }
    let blocks = datum
        .blocks
        .iter()
        .map(|block| {
            let n = block.multiplicity;
            let higgs = (0..datum.dim)
                .map(|i| {
                    block.higgs.iter().enumerate().fold(ComplexMatrix::zeros(n, n), |acc, (k, t)| acc + t * a[(i, k)])
                })
                .collect();
            BlockSpec { higgs, ..block.clone() }
        })
        .collect();
    Ok(HiggsDatum { dim: datum.dim, blocks })
}

/// Replaces every `T^i_j` by `g_j⁻¹ T^i_j g_j`.
pub fn conjugate_datum(datum: &HiggsDatum, gauge: &GaugeTransform) -> Result<HiggsDatum> {
    gauge.check_against(&datum.multiplicities())?;
    let blocks = datum
        .blocks
        .iter()
        .zip(gauge.blocks())
        .map(|(block, g)| {
            let g_inv = inverse(g)?;
            let higgs = block.higgs.iter().map(|t| &g_inv * t * g).collect();
            Ok(BlockSpec { higgs, ..block.clone() })
        })
        .collect::<Result<_>>()?;
    Ok(HiggsDatum { dim: datum.dim, blocks })
}

/// Builds a one-block datum from a family of square matrices.
pub fn single_block(label: &str, family: Vec<ComplexMatrix>) -> HiggsDatum {
    let n = family.first().map_or(0, |t| t.nrows());
    HiggsDatum {
        dim: family.len(),
        blocks: vec![BlockSpec { label: label.to_string(), rank: 1, multiplicity: n, slope: 0.0, higgs: family }],
    }
}

/// Largest entrywise relative difference between two data of the same shape.
pub fn relative_distance(a: &HiggsDatum, b: &HiggsDatum) -> Option<f64> {
    if a.dim != b.dim || a.blocks.len() != b.blocks.len() {
        return None;
    }
    let mut worst: f64 = 0.0;
    for (x, y) in a.blocks.iter().zip(&b.blocks) {
        if x.higgs.len() != y.higgs.len() {
            return None;
        }
        for (s, t) in x.higgs.iter().zip(&y.higgs) {
            if s.shape() != t.shape() {
                return None;
            }
            let denom = frobenius_norm(s).max(1.0);
            worst = worst.max(frobenius_norm(&(s - t)) / denom);
        }
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, real_matrix};
    use num_complex::Complex64;

    fn one_block() -> HiggsDatum {
        single_block("E", vec![real_matrix(2, 2, &[1., 0., 0., 2.]), real_matrix(2, 2, &[3., 0., 0., 4.])])
    }

    #[test]
    fn well_formed_datum_validates() {
        assert!(validate(&one_block(), &Tolerances::default()).is_ok());
    }

    #[test]
    fn duplicate_labels_reported() {
        let mut d = one_block();
        d.blocks.push(d.blocks[0].clone());
        let report = validate(&d, &Tolerances::default());
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].message, "labels not distinct");
        assert_eq!(report.violations[0].path, "blocks[1].label");
    }

    #[test]
    fn arity_mismatch_reported() {
        let mut d = one_block();
        d.blocks[0].higgs.pop();
        let report = validate(&d, &Tolerances::default());
        assert!(report.violations[0].message.starts_with("higgs arity mismatch"));
        assert_eq!(report.violations[0].path, "blocks[0].higgs");
    }

    #[test]
    fn unequal_slopes_and_bad_shapes_reported() {
        let mut d = one_block();
        let mut other = d.blocks[0].clone();
        other.label = "F".into();
        other.slope = 0.5;
        other.higgs[1] = identity(3);
        d.blocks.push(other);
        let report = validate(&d, &Tolerances::default());
        let paths: Vec<&str> = report.violations.iter().map(|v| v.path.as_str()).collect();
        assert!(paths.contains(&"blocks[1].higgs[1]"));
        assert!(paths.contains(&"blocks[1].slope"));
    }

    #[test]
    fn empty_and_zero_dims_reported() {
        let d = HiggsDatum { dim: 0, blocks: vec![] };
        let report = validate(&d, &Tolerances::default());
        assert_eq!(report.violations.len(), 2);
    }

    #[test]
    fn trivialization_identity_and_permutation() {
        let tol = Tolerances::default();
        let d = one_block();
        let same = apply_trivialization_change(&d, &ChangeOfTrivialization::new(identity(2), &tol).unwrap()).unwrap();
        assert_eq!(same, d);
        let swap = ChangeOfTrivialization::new(real_matrix(2, 2, &[0., 1., 1., 0.]), &tol).unwrap();
        let swapped = apply_trivialization_change(&d, &swap).unwrap();
        assert_eq!(swapped.blocks[0].higgs[0], d.blocks[0].higgs[1]);
        assert_eq!(swapped.blocks[0].higgs[1], d.blocks[0].higgs[0]);
    }

    #[test]
    fn singular_trivialization_rejected() {
        let tol = Tolerances::default();
        assert!(ChangeOfTrivialization::new(real_matrix(2, 2, &[1., 1., 1., 1.]), &tol).is_err());
        let wrong = ChangeOfTrivialization::new(identity(3), &tol).unwrap();
        assert!(apply_trivialization_change(&one_block(), &wrong).is_err());
    }

    #[test]
    fn conjugation_by_identity_and_scalar() {
        let d = one_block();
        assert_eq!(conjugate_datum(&d, &GaugeTransform::identity(&[2])).unwrap(), d);
        let g = GaugeTransform::new(vec![identity(2) * Complex64::new(0.0, 3.0)]).unwrap();
        let conj = conjugate_datum(&d, &g).unwrap();
        assert!(relative_distance(&conj, &d).unwrap() < 1e-15);
    }

    #[test]
    fn gauge_shape_errors() {
        assert!(GaugeTransform::new(vec![real_matrix(2, 2, &[1., 2., 2., 4.])]).is_err());
        let g = GaugeTransform::identity(&[3]);
        assert!(conjugate_datum(&one_block(), &g).is_err());
    }
}
