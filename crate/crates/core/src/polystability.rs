//! The commuting-semisimple polystability test and the joint spectrum.
//!
//! A datum is polystable iff, in every block, the Higgs components pairwise
//! commute and each is diagonalizable. When both hold the family splits
//! ℂ^{n_j} into simultaneous eigenspaces, and the sorted list of eigenvalue
//! tuples with multiplicities is a complete invariant of the family under
//! simultaneous conjugation.
//!
//! Semisimplicity in floating point is only meaningful relative to
//! `(tau_cluster, tau_rank)`; verdicts are therefore tolerance-parameterized.

use std::cmp::Ordering;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    commutator, condition_number, ensure_square, frobenius_norm, identity, semisimplicity, spectral_clusters,
    ComplexMatrix, SemisimplicityCheck, Tolerances,
};
use crate::model::{family_scale, linear_scale, random_unit_circle, rng_for, HiggsDatum};

/// Recursion depth allowed when splitting eigenspaces of generic combinations.
pub const MAX_SPLIT_ROUNDS: usize = 5;

/// Seed used for generic combinations when the caller does not supply one.
pub const DEFAULT_SPLIT_SEED: u64 = 0x5eed_0f_1e7a;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    /// Simultaneous eigenvalues `(λ¹, …, λ^d)`.
    pub tuple: Vec<Complex64>,
    pub mult: usize,
}

/// Simultaneous eigenvalue tuples with multiplicities, in canonical order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointSpectrum {
    pub entries: Vec<SpectrumEntry>,
}

/// Lexicographic order on `(Re λ¹, Im λ¹, …, Re λ^d, Im λ^d)`, treating parts
/// within `eps` of each other as equal.
pub fn canonical_cmp(a: &[Complex64], b: &[Complex64], eps: f64) -> Ordering {
    let parts = |t: &[Complex64]| t.iter().flat_map(|z| [z.re, z.im]).collect::<Vec<_>>();
    for (x, y) in parts(a).into_iter().zip(parts(b)) {
        if (x - y).abs() > eps {
            return x.total_cmp(&y);
        }
    }
    a.len().cmp(&b.len())
}

fn tuple_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

impl JointSpectrum {
    /// Sorts entries canonically and merges tuples equal within `eps`.
    pub fn canonical(mut entries: Vec<SpectrumEntry>, eps: f64) -> Self {
        entries.sort_by(|a, b| canonical_cmp(&a.tuple, &b.tuple, eps));
        let mut merged: Vec<SpectrumEntry> = Vec::with_capacity(entries.len());
        for entry in entries {
            match merged.last_mut() {
                Some(last) if tuple_distance(&last.tuple, &entry.tuple) <= eps => last.mult += entry.mult,
                _ => merged.push(entry),
            }
        }
        Self { entries: merged }
    }

    pub fn total_multiplicity(&self) -> usize {
        self.entries.iter().map(|e| e.mult).sum()
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.mult).collect()
    }

    pub fn arity(&self) -> Option<usize> {
        self.entries.first().map(|e| e.tuple.len())
    }

    /// Largest tuple deviation against `other`, or `None` when the
    /// multiplicity structure differs.
    pub fn distance(&self, other: &JointSpectrum) -> Option<f64> {
        if self.multiplicities() != other.multiplicities() {
            return None;
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.entries.iter().zip(&other.entries) {
            if a.tuple.len() != b.tuple.len() {
                return None;
            }
            worst = worst.max(tuple_distance(&a.tuple, &b.tuple));
        }
        Some(worst)
    }

    /// The block-scalar matrix `diag(λ^i_1 Id_{m_1}, λ^i_2 Id_{m_2}, …)` for component `i`.
    pub fn block_scalar(&self, component: usize) -> ComplexMatrix {
        let diag: Vec<Complex64> = self
            .entries
            .iter()
            .flat_map(|e| std::iter::repeat_n(e.tuple[component], e.mult))
            .collect();
        ComplexMatrix::from_diagonal(&DVector::from_vec(diag))
    }
}

/// Largest pairwise commutator `max_{i<k} ‖T^i T^k − T^k T^i‖_F` (absolute).
pub fn commutation_residual(family: &[ComplexMatrix]) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..family.len() {
        for k in (i + 1)..family.len() {
            worst = worst.max(frobenius_norm(&commutator(&family[i], &family[k])));
        }
    }
    worst
}

/// Diagonalizability at tolerance: geometric equals algebraic multiplicity
/// on every eigenvalue cluster.
pub fn is_semisimple(a: &ComplexMatrix, tol: &Tolerances) -> Result<bool> {
    Ok(semisimplicity(a, tol)?.semisimple)
}

/// `Σᵢ coeffsᵢ · Tᵢ`.
pub fn combine(family: &[ComplexMatrix], coeffs: &[Complex64]) -> Result<ComplexMatrix> {
    let first = family.first().ok_or_else(|| Error::Shape("empty family".into()))?;
    if coeffs.len() != family.len() {
        return Err(Error::Shape(format!("{} coefficients for {} matrices", coeffs.len(), family.len())));
    }
    let shape = first.shape();
    let mut acc = ComplexMatrix::zeros(shape.0, shape.1);
    for (t, &c) in family.iter().zip(coeffs) {
        if t.shape() != shape {
            return Err(Error::Shape(format!("family mixes {:?} and {:?}", shape, t.shape())));
        }
        acc += t * c;
    }
    Ok(acc)
}

/// A basis adapted to the simultaneous eigenspaces of a commuting
/// semisimple family.
#[derive(Clone, Debug)]
pub struct JointEigenDecomposition {
    /// Columns grouped by eigenspace, in canonical spectrum order; each group
    /// is orthonormal.
    pub basis: ComplexMatrix,
    pub group_sizes: Vec<usize>,
    pub spectrum: JointSpectrum,
}

impl JointEigenDecomposition {
    /// Column ranges of each group inside `basis`.
    pub fn group_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.group_sizes
            .iter()
            .map(|&m| {
                let r = start..start + m;
                start += m;
                r
            })
            .collect()
    }

    /// `max_{i,a} ‖(B⁻¹ T^i B)|_a − λ^i_a Id‖` over diagonal blocks, plus the
    /// largest off-diagonal block.
    pub fn refinement_residual(&self, family: &[ComplexMatrix]) -> Result<f64> {
        let inv = crate::linalg::inverse(&self.basis)?;
        let mut worst: f64 = 0.0;
        for (i, t) in family.iter().enumerate() {
            let conj = &inv * t * &self.basis;
            let target = self.spectrum.block_scalar(i);
            worst = worst.max(frobenius_norm(&(conj - target)));
        }
        Ok(worst)
    }
}

fn check_commuting_semisimple(family: &[ComplexMatrix], tol: &Tolerances) -> Result<()> {
    let n = ensure_square(family.first().ok_or_else(|| Error::Shape("empty family".into()))?)?;
    if family.iter().any(|t| t.shape() != (n, n)) {
        return Err(Error::Shape("family members differ in size".into()));
    }
    let residual = commutation_residual(family);
    if residual > tol.tau_commute * family_scale(family) {
        return Err(Error::Precondition(format!("family does not commute (residual {residual:.3e})")));
    }
    for (i, t) in family.iter().enumerate() {
        if !is_semisimple(t, tol)? {
            return Err(Error::Precondition(format!("component {i} is not semisimple")));
        }
    }
    Ok(())
}

struct Group {
    basis: ComplexMatrix,
    tuple: Vec<Complex64>,
}

fn split<R: Rng>(
    family: &[ComplexMatrix],
    tol: &Tolerances,
    scalar_tol: f64,
    rng: &mut R,
    round: usize,
) -> Result<Vec<Group>> {
    let m = family[0].nrows();
    let coeffs: Vec<Complex64> = family.iter().map(|_| random_unit_circle(rng)).collect();
    let generic = combine(family, &coeffs)?;
    let clusters = spectral_clusters(&generic, tol)?;
    if clusters.iter().map(|c| c.geometric_multiplicity()).sum::<usize>() != m {
        return Err(Error::Precondition("generic combination is not semisimple".into()));
    }
    let mut groups = Vec::new();
    for cluster in clusters {
        let v = cluster.eigenspace;
        let restricted: Vec<ComplexMatrix> = family.iter().map(|t| v.adjoint() * t * &v).collect();
        let k = v.ncols();
        let tuple: Vec<Complex64> = restricted.iter().map(|r| r.trace() / k as f64).collect();
        let off = restricted
            .iter()
            .zip(&tuple)
            .map(|(r, &l)| frobenius_norm(&(r - identity(k) * l)))
            .fold(0.0, f64::max);
        if off <= scalar_tol {
            groups.push(Group { basis: v, tuple });
        } else if round + 1 >= MAX_SPLIT_ROUNDS {
            return Err(Error::InseparableClusters { rounds: MAX_SPLIT_ROUNDS, residual: off });
        } else {
            for sub in split(&restricted, tol, scalar_tol, rng, round + 1)? {
                groups.push(Group { basis: &v * sub.basis, tuple: sub.tuple });
            }
        }
    }
    Ok(groups)
}

/// Simultaneous eigenspace decomposition of a commuting semisimple family.
///
/// Forms a combination `Σ cᵢ Tᵢ` with random unit-modulus coefficients, whose
/// eigenspaces refine those of every member for generic `c`, splits by its
/// eigenvalue clusters, and recurses with fresh coefficients into any group on
/// which some member is not yet scalar (at most `MAX_SPLIT_ROUNDS` levels).
pub fn joint_eigenspaces(family: &[ComplexMatrix], tol: &Tolerances, seed: u64) -> Result<JointEigenDecomposition> {
    check_commuting_semisimple(family, tol)?;
    let n = family[0].nrows();
    let lin = linear_scale(family);
    let scalar_tol = 10.0 * tol.tau_cluster * lin;
    let mut rng = rng_for(seed, 0);
    let mut groups = split(family, tol, scalar_tol, &mut rng, 0)?;

    let eps = tol.tau_cluster * lin;
    groups.sort_by(|a, b| canonical_cmp(&a.tuple, &b.tuple, eps));
    let mut merged: Vec<Group> = Vec::with_capacity(groups.len());
    for g in groups {
        match merged.last_mut() {
            Some(last) if tuple_distance(&last.tuple, &g.tuple) <= eps => {
                let k0 = last.basis.ncols() as f64;
                let k1 = g.basis.ncols() as f64;
                for (l, x) in last.tuple.iter_mut().zip(&g.tuple) {
                    *l = (*l * k0 + x * k1) / (k0 + k1);
                }
                let cols: Vec<_> = last.basis.column_iter().chain(g.basis.column_iter()).map(|c| c.into_owned()).collect();
                // Re-orthonormalize the union.
                last.basis = ComplexMatrix::from_columns(&cols).qr().q();
            }
            _ => merged.push(g),
        }
    }

    let cols: Vec<_> = merged.iter().flat_map(|g| g.basis.column_iter().map(|c| c.into_owned())).collect();
    let basis = ComplexMatrix::from_columns(&cols);
    debug_assert_eq!(basis.ncols(), n);
    let condition = condition_number(&basis)?;
    if !(condition <= tol.kappa_max) {
        return Err(Error::Precondition(format!("joint eigenbasis is ill-conditioned ({condition:.3e})")));
    }
    let group_sizes = merged.iter().map(|g| g.basis.ncols()).collect();
    let spectrum = JointSpectrum {
        entries: merged.into_iter().map(|g| SpectrumEntry { mult: g.basis.ncols(), tuple: g.tuple }).collect(),
    };
    Ok(JointEigenDecomposition { basis, group_sizes, spectrum })
}

pub fn joint_spectrum(family: &[ComplexMatrix], tol: &Tolerances, seed: u64) -> Result<JointSpectrum> {
    Ok(joint_eigenspaces(family, tol, seed)?.spectrum)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Polystable,
    FailsCommutation,
    FailsSemisimplicity,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Polystable => "polystable",
            Verdict::FailsCommutation => "fails_commutation",
            Verdict::FailsSemisimplicity => "fails_semisimplicity",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolystabilityReport {
    /// Largest commutator norm over all blocks (absolute).
    pub commutation_residual: f64,
    /// `max(1, max ‖T^i_j‖²)`; the commutation threshold is `tau_commute · scale`.
    pub scale: f64,
    /// Per block, per component.
    pub semisimple_verdicts: Vec<Vec<bool>>,
    /// Per block, per component shortfall of geometric against algebraic
    /// multiplicity (diagnostic).
    pub multiplicity_deficits: Vec<Vec<usize>>,
    pub verdict: Verdict,
    /// Per block, present when the datum is polystable.
    pub spectrum: Option<Vec<JointSpectrum>>,
}

impl PolystabilityReport {
    /// Levi type of the whole structure group: all joint-spectrum
    /// multiplicities across blocks, sorted descending.
    pub fn levi_type(&self) -> Option<Vec<usize>> {
        let spectra = self.spectrum.as_ref()?;
        let mut all: Vec<usize> = spectra.iter().flat_map(JointSpectrum::multiplicities).collect();
        all.sort_unstable_by(|a, b| b.cmp(a));
        Some(all)
    }
}

pub fn check_polystable(datum: &HiggsDatum, tol: &Tolerances) -> Result<PolystabilityReport> {
    check_polystable_seeded(datum, tol, DEFAULT_SPLIT_SEED)
}

/// Evaluates both polystability conditions block by block.
///
/// Numerical failures (eigensolver breakdown, inseparable clusters) are
/// errors; a failed condition is a verdict.
pub fn check_polystable_seeded(datum: &HiggsDatum, tol: &Tolerances, seed: u64) -> Result<PolystabilityReport> {
    let scale = datum.scale();
    let commutation = datum.blocks.iter().map(|b| commutation_residual(&b.higgs)).fold(0.0, f64::max);
    let mut semisimple_verdicts = Vec::with_capacity(datum.blocks.len());
    let mut multiplicity_deficits = Vec::with_capacity(datum.blocks.len());
    for block in &datum.blocks {
        let checks: Vec<SemisimplicityCheck> =
            block.higgs.iter().map(|t| semisimplicity(t, tol)).collect::<Result<_>>()?;
        semisimple_verdicts.push(checks.iter().map(|c| c.semisimple).collect::<Vec<_>>());
        multiplicity_deficits.push(checks.iter().map(|c| c.deficit).collect());
    }
    let verdict = if commutation > tol.tau_commute * scale {
        Verdict::FailsCommutation
    } else if semisimple_verdicts.iter().flatten().any(|ok| !ok) {
        Verdict::FailsSemisimplicity
    } else {
        Verdict::Polystable
    };
    let spectrum = if verdict == Verdict::Polystable {
        Some(
            datum
                .blocks
                .iter()
                .enumerate()
                .map(|(j, b)| joint_spectrum(&b.higgs, tol, seed.wrapping_add(j as u64)))
                .collect::<Result<_>>()?,
        )
    } else {
        None
    };
    Ok(PolystabilityReport {
        commutation_residual: commutation,
        scale,
        semisimple_verdicts,
        multiplicity_deficits,
        verdict,
        spectrum,
    })
}
