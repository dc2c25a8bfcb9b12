//! Dense complex-matrix kernel.
//!
//! Storage and arithmetic use `nalgebra`; the non-Hermitian eigenvalue problem
//! and the SVD are delegated to `faer`, whose Schur iteration has exceptional
//! shifts and converges on the permutation-like inputs that stall simpler QR
//! codes. Every threshold in this module is relative to `max(1, ‖A‖)`.

use faer::{c64, Mat, MatRef};
use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

/// Machine epsilon for `f64`.
const EPS: f64 = f64::EPSILON;

/// Multiplier on `cond · ε` when widening a cluster by its perturbation radius.
const CLUSTER_GUARD: f64 = 100.0;

/// Cluster condition numbers above this are treated as this; it bounds how
/// far a defective cluster can reach when swallowing neighbours.
const CLUSTER_COND_CAP: f64 = 1e12;

/// Numerical thresholds shared by every analysis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative commutator threshold.
    pub tau_commute: f64,
    /// Relative singular-value cutoff.
    pub tau_rank: f64,
    /// Relative eigenvalue clustering radius.
    pub tau_cluster: f64,
    /// Ceiling on metric and eigenbasis condition numbers.
    pub kappa_max: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            tau_commute: 1e-9,
            tau_rank: 1e-10,
            tau_cluster: 1e-7,
            kappa_max: 1e8,
        }
    }
}

impl Tolerances {
    pub fn check(&self) -> Result<()> {
        let fields = [
            ("tau_commute", self.tau_commute),
            ("tau_rank", self.tau_rank),
            ("tau_cluster", self.tau_cluster),
            ("kappa_max", self.kappa_max),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Tolerances(format!("{name} must be finite and > 0, got {value}")));
            }
        }
        if self.kappa_max < 1.0 {
            return Err(Error::Tolerances(format!("kappa_max must be >= 1, got {}", self.kappa_max)));
        }
        Ok(())
    }
}

pub fn frobenius_norm(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a * b - b * a
}

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

pub fn all_finite(a: &ComplexMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Returns the side length of a square matrix.
pub fn ensure_square(a: &ComplexMatrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare { rows: a.nrows(), cols: a.ncols() });
    }
    Ok(a.nrows())
}

/// Builds a matrix from real entries given row by row.
pub fn real_matrix(rows: usize, cols: usize, entries: &[f64]) -> ComplexMatrix {
    assert_eq!(entries.len(), rows * cols, "entry count");
    ComplexMatrix::from_row_iterator(rows, cols, entries.iter().map(|&x| Complex64::new(x, 0.0)))
}

pub fn diagonal(values: &[Complex64]) -> ComplexMatrix {
    ComplexMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(values))
}

pub fn inverse(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    ensure_square(a)?;
    a.clone()
        .try_inverse()
        .filter(all_finite)
        .ok_or_else(|| Error::Singular("inverse".into()))
}

pub fn hermitize(h: &ComplexMatrix) -> ComplexMatrix {
    (h + h.adjoint()).scale(0.5)
}

pub fn hermitian_defect(h: &ComplexMatrix) -> f64 {
    frobenius_norm(&(h - h.adjoint()))
}

pub fn is_hermitian(h: &ComplexMatrix, tol: &Tolerances) -> bool {
    h.is_square() && hermitian_defect(h) <= tol.tau_rank * frobenius_norm(h).max(1.0)
}

fn to_faer(a: &ComplexMatrix) -> Mat<c64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(m: MatRef<'_, c64>) -> ComplexMatrix {
    ComplexMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn eigenvalues_2x2(a: &ComplexMatrix) -> Vec<Complex64> {
    let mean = (a[(0, 0)] + a[(1, 1)]) / 2.0;
    let half = (a[(0, 0)] - a[(1, 1)]) / 2.0;
    let root = (half * half + a[(0, 1)] * a[(1, 0)]).sqrt();
    vec![mean + root, mean - root]
}

/// Eigenvalues with multiplicity, via a complex Schur iteration on the
/// trace-shifted matrix.
pub fn eigenvalues(a: &ComplexMatrix) -> Result<Vec<Complex64>> {
    ensure_square(a)?;
    if !all_finite(a) {
        return Err(Error::Precondition("non-finite matrix entry".into()));
    }
    let n = a.nrows();
    match n {
        0 => return Ok(Vec::new()),
        1 => return Ok(vec![a[(0, 0)]]),
        2 => return Ok(eigenvalues_2x2(a)),
        _ => {}
    }
    let mean = a.trace() / n as f64;
    let values: Vec<Complex64> = to_faer(&(a - identity(n) * mean))
        .eigenvalues()
        .map_err(|_| Error::NoConvergence("eigenvalue iteration"))?
        .into_iter()
        .map(|z| z + mean)
        .collect();
    if values.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::NoConvergence("eigenvalue iteration"));
    }
    Ok(values)
}

/// A full singular value decomposition `A = U diag(s) V†` with `s` nonincreasing.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: ComplexMatrix,
    pub s: Vec<f64>,
    pub v: ComplexMatrix,
}

/// Full SVD of a square matrix.
pub fn svd(a: &ComplexMatrix) -> Result<Svd> {
    ensure_square(a)?;
    if a.nrows() == 0 {
        return Ok(Svd { u: a.clone(), s: Vec::new(), v: a.clone() });
    }
    let dec = to_faer(a).svd().map_err(|_| Error::NoConvergence("svd"))?;
    let s = dec.S().column_vector().iter().map(|z| z.re).collect();
    Ok(Svd { u: from_faer(dec.U()), s, v: from_faer(dec.V()) })
}

/// Singular values in nonincreasing order; length `min(rows, cols)`.
pub fn singular_values(a: &ComplexMatrix) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    to_faer(a).singular_values().map_err(|_| Error::NoConvergence("svd"))
}

/// `σ_max / σ_min`; infinite for singular input.
pub fn condition_number(a: &ComplexMatrix) -> Result<f64> {
    ensure_square(a)?;
    let s = singular_values(a)?;
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => Ok(hi / lo),
        (Some(_), Some(_)) => Ok(f64::INFINITY),
        _ => Ok(1.0),
    }
}

/// Right singular vectors of any-shape `a` (cols × cols) together with the
/// matching singular values, padded with zeros for wide input.
fn right_singular(a: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let (rows, cols) = a.shape();
    let padded;
    let tall = if rows < cols {
        padded = a.clone().resize_vertically(cols, Complex64::new(0.0, 0.0));
        &padded
    } else {
        a
    };
    let dec = to_faer(tall).thin_svd().map_err(|_| Error::NoConvergence("svd"))?;
    let s = dec.S().column_vector().iter().map(|z| z.re).collect();
    Ok((s, from_faer(dec.V())))
}

/// Orthonormal basis (as columns) of the numerical kernel of `a`.
///
/// A direction is in the kernel when its singular value is at most
/// `tau_rank · max(1, σ_max)`. The basis may be empty.
pub fn nullspace(a: &ComplexMatrix, tol: &Tolerances) -> Result<ComplexMatrix> {
    let cols = a.ncols();
    if cols == 0 {
        return Ok(ComplexMatrix::zeros(0, 0));
    }
    if a.nrows() == 0 {
        return Ok(identity(cols));
    }
    let (s, v) = right_singular(a)?;
    let cutoff = tol.tau_rank * s[0].max(1.0);
    let keep: Vec<usize> = (0..cols).filter(|&j| s[j] <= cutoff).collect();
    Ok(v.select_columns(&keep))
}

/// `H⁻¹ T† H`, the adjoint of `T` for the inner product `⟨u, v⟩ = u† H v`.
pub fn h_adjoint(t: &ComplexMatrix, h: &ComplexMatrix, tol: &Tolerances) -> Result<ComplexMatrix> {
    let n = ensure_square(t)?;
    if h.shape() != (n, n) {
        return Err(Error::Shape(format!("metric is {:?}, operator is {n}x{n}", h.shape())));
    }
    let defect = hermitian_defect(h);
    if defect > tol.tau_rank * frobenius_norm(h).max(1.0) {
        return Err(Error::NotHermitian { defect });
    }
    if !is_positive_definite(h, tol)? {
        return Err(Error::NotPositiveDefinite);
    }
    let chol = Cholesky::new(hermitize(h)).ok_or(Error::NotPositiveDefinite)?;
    Ok(h_adjoint_with(t, h, &chol))
}

/// Fast path for callers that already factored the metric.
pub(crate) fn h_adjoint_with(
    t: &ComplexMatrix,
    h: &ComplexMatrix,
    chol: &Cholesky<Complex64, Dyn>,
) -> ComplexMatrix {
    chol.solve(&(t.adjoint() * h))
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(h: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    ensure_square(h)?;
    let eig = SymmetricEigen::try_new(hermitize(h), EPS, 0)
        .ok_or(Error::NoConvergence("Hermitian eigensolver"))?;
    let mut order: Vec<usize> = (0..h.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    Ok((values, eig.eigenvectors.select_columns(&order)))
}

/// True iff `h` is Hermitian within `tau_rank` and every eigenvalue exceeds
/// `tau_rank · max(1, ‖H‖)`.
pub fn is_positive_definite(h: &ComplexMatrix, tol: &Tolerances) -> Result<bool> {
    ensure_square(h)?;
    if !is_hermitian(h, tol) {
        return Ok(false);
    }
    let floor = tol.tau_rank * frobenius_norm(h).max(1.0);
    let (values, _) = hermitian_eigen(h)?;
    Ok(values.iter().all(|&v| v > floor))
}

/// `H^p` for Hermitian positive definite `H`.
pub fn hermitian_power(h: &ComplexMatrix, p: f64) -> Result<ComplexMatrix> {
    let (values, vectors) = hermitian_eigen(h)?;
    if values.iter().any(|&v| v <= 0.0) {
        return Err(Error::NotPositiveDefinite);
    }
    let scaled: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v.powf(p), 0.0)).collect();
    Ok(&vectors * diagonal(&scaled) * vectors.adjoint())
}

/// Condition number of a Hermitian positive definite matrix.
pub fn hermitian_condition(h: &ComplexMatrix) -> Result<f64> {
    let (values, _) = hermitian_eigen(h)?;
    match (values.first(), values.last()) {
        (Some(&lo), Some(&hi)) if lo > 0.0 => Ok(hi / lo),
        (Some(_), Some(_)) => Ok(f64::INFINITY),
        _ => Ok(1.0),
    }
}

/// Single-linkage clustering: two values share a cluster when a chain of
/// pairwise distances `≤ radius` connects them. Clusters come back in
/// first-appearance order, members in input order.
pub fn single_linkage(values: &[Complex64], radius: f64) -> Vec<Vec<usize>> {
    let n = values.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (values[i] - values[j]).norm() <= radius {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[b.max(a)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(i);
    }
    groups
}

/// One group of numerically coincident eigenvalues.
#[derive(Clone, Debug)]
pub struct Cluster {
    /// Mean of the member eigenvalues.
    pub centroid: Complex64,
    /// Member eigenvalues as computed (algebraic multiplicity = `members.len()`).
    pub members: Vec<Complex64>,
    /// Orthonormal basis of the numerical kernel of `A − centroid·Id`, at most
    /// `members.len()` columns, smallest singular values last.
    pub eigenspace: ComplexMatrix,
    /// Norm of the spectral projector estimated from the cluster's left and
    /// right singular subspaces.
    pub condition: f64,
}

impl Cluster {
    pub fn multiplicity(&self) -> usize {
        self.members.len()
    }

    pub fn geometric_multiplicity(&self) -> usize {
        self.eigenspace.ncols()
    }

    pub fn is_semisimple(&self) -> bool {
        self.geometric_multiplicity() == self.multiplicity()
    }
}

struct ClusterProbe {
    centroid: Complex64,
    condition: f64,
    svd: Svd,
}

fn probe_cluster(a: &ComplexMatrix, members: &[Complex64]) -> Result<ClusterProbe> {
    let n = a.nrows();
    let m = members.len();
    let centroid = members.iter().sum::<Complex64>() / m as f64;
    let shifted = a - identity(n) * centroid;
    let svd = svd(&shifted)?;
    let left = svd.u.columns(n - m, m);
    let right = svd.v.columns(n - m, m);
    let overlap = left.adjoint() * right;
    let smallest = singular_values(&overlap)?.last().copied().unwrap_or(0.0);
    let condition = if smallest > 0.0 { (1.0 / smallest).min(CLUSTER_COND_CAP) } else { CLUSTER_COND_CAP };
    Ok(ClusterProbe { centroid, condition, svd })
}

/// Groups the spectrum of `a` into clusters and attaches the numerical
/// eigenspace of each.
///
/// Eigenvalues are first joined by single linkage at `tau_cluster · max(1, ‖A‖)`.
/// Clusters are then merged while their perturbation disks overlap, the
/// radius of a disk being `CLUSTER_GUARD · ε · cond · max(1, ‖A‖)`; this
/// reunites the eigenvalues of a Jordan block that roundoff has split further
/// apart than `tau_cluster`. Clusters are returned sorted by `(Re, Im)` of
/// their centroids.
pub fn spectral_clusters(a: &ComplexMatrix, tol: &Tolerances) -> Result<Vec<Cluster>> {
    let n = ensure_square(a)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let scale = frobenius_norm(a).max(1.0);
    let values = eigenvalues(a)?;
    let mut groups: Vec<Vec<Complex64>> = single_linkage(&values, tol.tau_cluster * scale)
        .into_iter()
        .map(|g| g.into_iter().map(|i| values[i]).collect())
        .collect();

    let mut probes: Vec<ClusterProbe> = groups.iter().map(|g| probe_cluster(a, g)).collect::<Result<_>>()?;
    loop {
        let radius = |p: &ClusterProbe| scale * (tol.tau_cluster + CLUSTER_GUARD * EPS * p.condition);
        let mut merge = None;
        'outer: for i in 0..groups.len() {
            for j in (i + 1)..groups.len() {
                let reach = radius(&probes[i]) + radius(&probes[j]);
                let close = groups[i]
                    .iter()
                    .any(|x| groups[j].iter().any(|y| (x - y).norm() <= reach));
                if close {
                    merge = Some((i, j));
                    break 'outer;
                }
            }
        }
        let Some((i, j)) = merge else { break };
        let absorbed = groups.remove(j);
        probes.remove(j);
        groups[i].extend(absorbed);
        probes[i] = probe_cluster(a, &groups[i])?;
    }

    let mut clusters: Vec<Cluster> = groups
        .into_iter()
        .zip(probes)
        .map(|(members, probe)| {
            let m = members.len();
            let cutoff = tol.tau_rank * probe.svd.s[0].max(1.0);
            let kernel = probe.svd.s.iter().filter(|&&s| s <= cutoff).count().min(m);
            let eigenspace = probe.svd.v.columns(n - kernel, kernel).into_owned();
            Cluster { centroid: probe.centroid, members, eigenspace, condition: probe.condition }
        })
        .collect();
    clusters.sort_by(|x, y| {
        x.centroid
            .re
            .total_cmp(&y.centroid.re)
            .then(x.centroid.im.total_cmp(&y.centroid.im))
    });
    Ok(clusters)
}

#[derive(Clone, Debug)]
pub struct Eigendecomposition {
    /// Eigenvalues with multiplicity; coincident values of a semisimple
    /// cluster are reported as the cluster centroid.
    pub values: Vec<Complex64>,
    /// Unit right eigenvectors, one column per value.
    pub vectors: ComplexMatrix,
}

/// Eigenvalues and unit right eigenvectors with `‖A v − λ v‖ ≤ tau_rank · max(1, ‖A‖)`.
///
/// For a semisimple cluster the vectors are an orthonormal eigenspace basis.
/// For a defective cluster there is no full eigenbasis; each computed member
/// eigenvalue gets its own best residual vector, so columns may be nearly
/// parallel.
pub fn eigendecompose(a: &ComplexMatrix, tol: &Tolerances) -> Result<Eigendecomposition> {
    let n = ensure_square(a)?;
    let mut values = Vec::with_capacity(n);
    let mut columns: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(n);
    for cluster in spectral_clusters(a, tol)? {
        if cluster.is_semisimple() {
            for col in cluster.eigenspace.column_iter() {
                values.push(cluster.centroid);
                columns.push(col.into_owned());
            }
        } else {
            for &lambda in &cluster.members {
                let s = svd(&(a - identity(n) * lambda))?;
                values.push(lambda);
                columns.push(s.v.column(n - 1).into_owned());
            }
        }
    }
    let vectors = if n == 0 { ComplexMatrix::zeros(0, 0) } else { ComplexMatrix::from_columns(&columns) };
    Ok(Eigendecomposition { values, vectors })
}

/// Outcome of a numerical diagonalizability test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemisimplicityCheck {
    pub semisimple: bool,
    /// Total shortfall of geometric against algebraic multiplicity.
    pub deficit: usize,
    /// Condition number of the assembled eigenbasis (infinite when deficient).
    pub eigenbasis_condition: f64,
}

/// Geometric-equals-algebraic multiplicity test on every cluster, plus a
/// `kappa_max` ceiling on the condition number of the assembled eigenbasis.
pub fn semisimplicity(a: &ComplexMatrix, tol: &Tolerances) -> Result<SemisimplicityCheck> {
    let n = ensure_square(a)?;
    let clusters = spectral_clusters(a, tol)?;
    let deficit: usize = clusters.iter().map(|c| c.multiplicity() - c.geometric_multiplicity()).sum();
    if deficit > 0 || n == 0 {
        return Ok(SemisimplicityCheck {
            semisimple: n == 0,
            deficit,
            eigenbasis_condition: if n == 0 { 1.0 } else { f64::INFINITY },
        });
    }
    let basis = ComplexMatrix::from_columns(
        &clusters.iter().flat_map(|c| c.eigenspace.column_iter().map(|v| v.into_owned())).collect::<Vec<_>>(),
    );
    let sv = singular_values(&basis)?;
    let condition = condition_number(&basis)?;
    let rank_floor = sv[0] / tol.kappa_max;
    let rank = sv.iter().filter(|&&s| s > rank_floor).count();
    Ok(SemisimplicityCheck {
        semisimple: condition <= tol.kappa_max,
        deficit: n - rank,
        eigenbasis_condition: condition,
    })
}
