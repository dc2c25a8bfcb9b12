//! Hermitian metrics on Higgs data: construction, residuals, gauge action and
//! the moment-map gradient flow.
//!
//! A metric is one Hermitian positive definite `H_j` per block, normalized to
//! `det H_j = 1`. The Yang–Mills operator of a block is
//! `M(H) = Σᵢ [T^i, (T^i)*_H]` with `T*_H = H⁻¹ T† H`.

use nalgebra::{Cholesky, Dyn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levi::{commutator_operator, conjugating_frame};
use crate::linalg::{
    ensure_square, frobenius_norm, h_adjoint_with, hermitian_condition, hermitian_eigen, hermitian_power,
    hermitize, identity, inverse, is_hermitian, is_positive_definite, ComplexMatrix, Tolerances,
};
use crate::model::{family_scale, io, GaugeTransform, HiggsDatum, ValidationReport};
use crate::polystability::{check_polystable_seeded, joint_eigenspaces, Verdict, DEFAULT_SPLIT_SEED};

/// Relative threshold for the Yang–Mills and Einstein–Hermitian verdicts.
pub const YM_THRESHOLD: f64 = 1e-6;

/// Relative residual a constructed metric must reach.
pub const CONSTRUCTION_THRESHOLD: f64 = 1e-8;

/// Largest allowed `|det H − 1|` in a stored metric.
pub const DET_TOLERANCE: f64 = 1e-10;

/// Largest Newton distance to a critical point (in units of `log H`) at
/// which a flow counts as converged.
pub const NEWTON_CERTIFICATE: f64 = 1e-3;

type Chol = Cholesky<Complex64, Dyn>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricDatum {
    #[serde(with = "io::matrices")]
    pub blocks: Vec<ComplexMatrix>,
}

fn cholesky(h: &ComplexMatrix) -> Result<Chol> {
    Cholesky::new(hermitize(h)).ok_or(Error::NotPositiveDefinite)
}

fn log_det(chol: &Chol) -> f64 {
    chol.l_dirty().diagonal().iter().map(|z| 2.0 * z.re.ln()).sum()
}

/// `H / det(H)^{1/n}` after symmetrization.
pub fn normalize_det(h: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = ensure_square(h)?;
    if n == 0 {
        return Ok(h.clone());
    }
    let h = hermitize(h);
    let ld = log_det(&cholesky(&h)?);
    Ok(h.scale((-ld / n as f64).exp()))
}

pub fn determinant(h: &ComplexMatrix) -> Result<f64> {
    Ok(log_det(&cholesky(h)?).exp())
}

impl MetricDatum {
    pub fn identity(sizes: &[usize]) -> Self {
        Self { blocks: sizes.iter().map(|&n| identity(n)).collect() }
    }

    /// Symmetrizes and det-normalizes every block.
    pub fn normalized(blocks: Vec<ComplexMatrix>) -> Result<Self> {
        Ok(Self { blocks: blocks.iter().map(normalize_det).collect::<Result<_>>()? })
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|h| h.nrows()).collect()
    }

    pub fn max_condition(&self) -> Result<f64> {
        self.blocks.iter().map(hermitian_condition).try_fold(1.0, |acc, c| Ok(f64::max(acc, c?)))
    }

    /// Checks every invariant and reports all violations.
    pub fn validate(&self, tol: &Tolerances) -> ValidationReport {
        let mut report = ValidationReport::default();
        if self.blocks.is_empty() {
            report.push("blocks", "empty blocks list");
        }
        for (j, h) in self.blocks.iter().enumerate() {
            let path = format!("blocks[{j}]");
            if !h.is_square() {
                report.push(&path, format!("expected a square matrix, got {}x{}", h.nrows(), h.ncols()));
                continue;
            }
            if !crate::linalg::all_finite(h) {
                report.push(&path, "non-finite entry");
                continue;
            }
            if !is_hermitian(h, tol) {
                report.push(&path, "not Hermitian");
                continue;
            }
            if !is_positive_definite(h, tol).unwrap_or(false) {
                report.push(&path, "not positive definite");
                continue;
            }
            match determinant(h) {
                Ok(det) if (det - 1.0).abs() <= DET_TOLERANCE => {}
                Ok(det) => report.push(&path, format!("determinant {det} is not 1")),
                Err(_) => report.push(&path, "not positive definite"),
            }
            match hermitian_condition(h) {
                Ok(c) if c <= tol.kappa_max => {}
                Ok(c) => report.push(&path, format!("condition number {c:.3e} exceeds kappa_max")),
                Err(e) => report.push(&path, e.to_string()),
            }
        }
        report
    }

    fn check_shapes(&self, datum: &HiggsDatum) -> Result<()> {
        if self.blocks.len() != datum.blocks.len() {
            return Err(Error::Shape(format!(
                "metric has {} blocks, datum has {}",
                self.blocks.len(),
                datum.blocks.len()
            )));
        }
        for (j, (h, b)) in self.blocks.iter().zip(&datum.blocks).enumerate() {
            let n = b.multiplicity;
            if h.shape() != (n, n) {
                return Err(Error::Shape(format!("metric block {j} is {:?}, expected {n}x{n}", h.shape())));
            }
        }
        Ok(())
    }
}

pub fn serialize_metric(metric: &MetricDatum) -> Vec<u8> {
    io::to_json(metric)
}

/// Parses and validates a metric file.
pub fn parse_metric(bytes: &[u8], tol: &Tolerances) -> Result<MetricDatum> {
    let metric: MetricDatum = io::from_json(bytes)?;
    metric.validate(tol).into_result()?;
    Ok(metric)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct YMReport {
    /// Largest `‖Σᵢ [T^i, (T^i)*_H]‖` over blocks.
    pub ym_residual: f64,
    /// Largest `‖[T^i, (T^k)*_H]‖` over blocks and pairs `(i, k)`.
    pub flatness_residual: f64,
    /// Largest `|tr M(H)| / n` over blocks.
    pub einstein_constant_theta: f64,
    pub scale: f64,
    /// `ym_residual ≤ YM_THRESHOLD · scale`.
    pub ym_verdict: bool,
    /// `flatness_residual ≤ YM_THRESHOLD · scale`.
    pub eh_verdict: bool,
}

fn block_operator(family: &[ComplexMatrix], h: &ComplexMatrix, chol: &Chol) -> ComplexMatrix {
    let n = h.nrows();
    let mut m = ComplexMatrix::zeros(n, n);
    for t in family {
        let adj = h_adjoint_with(t, h, chol);
        m += t * &adj - &adj * t;
    }
    m
}

fn checked_metric(h: &ComplexMatrix, tol: &Tolerances) -> Result<Chol> {
    if !is_hermitian(h, tol) {
        return Err(Error::NotHermitian { defect: crate::linalg::hermitian_defect(h) });
    }
    if !is_positive_definite(h, tol)? {
        return Err(Error::NotPositiveDefinite);
    }
    cholesky(h)
}

/// `Σᵢ [T^i, (T^i)*_H]` for one block.
pub fn ym_operator(family: &[ComplexMatrix], h: &ComplexMatrix, tol: &Tolerances) -> Result<ComplexMatrix> {
    let chol = checked_metric(h, tol)?;
    Ok(block_operator(family, h, &chol))
}

/// Evaluates the Yang–Mills and flatness residuals.
///
/// Accepts any Hermitian positive definite metric of matching shape; the
/// determinant is not required to be 1.
pub fn ym_residual(datum: &HiggsDatum, metric: &MetricDatum, tol: &Tolerances) -> Result<YMReport> {
    metric.check_shapes(datum)?;
    let scale = datum.scale();
    let mut ym: f64 = 0.0;
    let mut flat: f64 = 0.0;
    let mut theta: f64 = 0.0;
    for (block, h) in datum.blocks.iter().zip(&metric.blocks) {
        let chol = checked_metric(h, tol)?;
        let adjoints: Vec<ComplexMatrix> = block.higgs.iter().map(|t| h_adjoint_with(t, h, &chol)).collect();
        let n = h.nrows();
        let mut m = ComplexMatrix::zeros(n, n);
        for (i, t) in block.higgs.iter().enumerate() {
            for (k, adj) in adjoints.iter().enumerate() {
                let c = t * adj - adj * t;
                flat = flat.max(frobenius_norm(&c));
                if i == k {
                    m += c;
                }
            }
        }
        ym = ym.max(frobenius_norm(&m));
        if n > 0 {
            theta = theta.max(m.trace().norm() / n as f64);
        }
    }
    Ok(YMReport {
        ym_residual: ym,
        flatness_residual: flat,
        einstein_constant_theta: theta,
        scale,
        ym_verdict: ym <= YM_THRESHOLD * scale,
        eh_verdict: flat <= YM_THRESHOLD * scale,
    })
}

pub fn flatness_residual(datum: &HiggsDatum, metric: &MetricDatum, tol: &Tolerances) -> Result<f64> {
    Ok(ym_residual(datum, metric, tol)?.flatness_residual)
}

/// The Yang–Mills report of a metric known to be Yang–Mills.
pub fn eh_report(datum: &HiggsDatum, metric: &MetricDatum, tol: &Tolerances) -> Result<YMReport> {
    let report = ym_residual(datum, metric, tol)?;
    if !report.ym_verdict {
        return Err(Error::Precondition(format!(
            "metric is not Yang–Mills (residual {:.3e})",
            report.ym_residual
        )));
    }
    Ok(report)
}

/// `H′_j = g_j† H_j g_j`, renormalized to determinant 1.
pub fn apply_gauge(metric: &MetricDatum, gauge: &GaugeTransform) -> Result<MetricDatum> {
    gauge.check_against(&metric.sizes())?;
    MetricDatum::normalized(
        metric.blocks.iter().zip(gauge.blocks()).map(|(h, g)| g.adjoint() * h * g).collect(),
    )
}

/// Rescales each group of columns so that its best-conditioned square minor
/// has unit-modulus determinant. Groups must be orthonormal on entry.
fn pivot_scale(basis: &ComplexMatrix, group_sizes: &[usize]) -> ComplexMatrix {
    let mut out = basis.clone();
    let mut start = 0;
    for &m in group_sizes {
        let group = basis.columns(start, m).into_owned();
        // Greedy max-volume row selection: Gram–Schmidt on the rows of the group.
        let mut rows: Vec<nalgebra::RowDVector<Complex64>> = group.row_iter().map(|r| r.into_owned()).collect();
        let mut chosen = Vec::with_capacity(m);
        for _ in 0..m {
            let (best, norm) = rows
                .iter()
                .enumerate()
                .filter(|(i, _)| !chosen.contains(i))
                .map(|(i, r)| (i, r.norm()))
                .fold((usize::MAX, -1.0), |acc, (i, v)| if v > acc.1 * (1.0 + 1e-12) { (i, v) } else { acc });
            chosen.push(best);
            let q = rows[best].unscale(norm);
            for r in rows.iter_mut() {
                let proj = r.dotc(&q);
                // dotc conjugates the left operand: proj = Σ conj(r_k) q_k.
                *r -= &q * proj.conj();
            }
        }
        chosen.sort_unstable();
        let minor = group.select_rows(&chosen);
        let det = minor.determinant().norm();
        let c = det.powf(-1.0 / m as f64);
        out.columns_mut(start, m).scale_mut(c);
        start += m;
    }
    out
}

/// `H = B⁻† B⁻¹` for a frame `B`, det-normalized.
pub fn metric_from_frame(frame: &ComplexMatrix) -> Result<ComplexMatrix> {
    let inv = inverse(frame)?;
    normalize_det(&(inv.adjoint() * inv))
}

fn require_polystable(datum: &HiggsDatum, tol: &Tolerances, seed: u64) -> Result<()> {
    let report = check_polystable_seeded(datum, tol, seed)?;
    if report.verdict != Verdict::Polystable {
        return Err(Error::Precondition(format!("datum is not polystable: {}", report.verdict.as_str())));
    }
    Ok(())
}

fn finish_construction(datum: &HiggsDatum, metric: MetricDatum, tol: &Tolerances) -> Result<MetricDatum> {
    let cond = metric.max_condition()?;
    if !(cond <= tol.kappa_max) {
        return Err(Error::Precondition(format!("metric condition number {cond:.3e} exceeds kappa_max")));
    }
    let report = ym_residual(datum, &metric, tol)?;
    let bound = CONSTRUCTION_THRESHOLD * report.scale;
    if report.flatness_residual > bound || report.ym_residual > bound {
        return Err(Error::NoConvergence("metric construction residual above threshold"));
    }
    Ok(metric)
}

/// Declares the joint eigenvectors orthonormal: with `B` the joint eigenbasis
/// (columns grouped by eigenspace, orthonormal within groups, each group
/// scaled so its pivot minor has unit-modulus determinant), `H = B⁻† B⁻¹`.
pub fn construct_ym_metric(datum: &HiggsDatum, tol: &Tolerances) -> Result<MetricDatum> {
    construct_ym_metric_seeded(datum, tol, DEFAULT_SPLIT_SEED)
}

pub fn construct_ym_metric_seeded(datum: &HiggsDatum, tol: &Tolerances, seed: u64) -> Result<MetricDatum> {
    require_polystable(datum, tol, seed)?;
    let blocks = datum
        .blocks
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let dec = joint_eigenspaces(&b.higgs, tol, seed.wrapping_add(j as u64))?;
            metric_from_frame(&pivot_scale(&dec.basis, &dec.group_sizes))
        })
        .collect::<Result<_>>()?;
    finish_construction(datum, MetricDatum { blocks }, tol)
}

/// `H = g⁻† diag(h_1, …, h_r) g⁻¹` for a reduction frame `g` and metrics on
/// its groups.
pub fn assemble_levi_metric(frame: &ComplexMatrix, group_metrics: &[ComplexMatrix]) -> Result<ComplexMatrix> {
    let n = ensure_square(frame)?;
    let mut inner = ComplexMatrix::zeros(n, n);
    let mut start = 0;
    for h in group_metrics {
        let m = ensure_square(h)?;
        if start + m > n {
            return Err(Error::Shape("group metrics exceed the frame size".into()));
        }
        inner.view_mut((start, start), (m, m)).copy_from(h);
        start += m;
    }
    if start != n {
        return Err(Error::Shape("group metrics do not fill the frame".into()));
    }
    let inv = inverse(frame)?;
    normalize_det(&(inv.adjoint() * inner * inv))
}

/// Builds the metric through the Levi reduction: conjugate each block to
/// block-scalar form, put the identity metric on every group, and transport
/// back.
pub fn levi_route_metric(datum: &HiggsDatum, tol: &Tolerances, seed: u64) -> Result<MetricDatum> {
    require_polystable(datum, tol, seed)?;
    let blocks = datum
        .blocks
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let frame = conjugating_frame(&b.higgs, tol, seed.wrapping_add(j as u64))?;
            let groups: Vec<ComplexMatrix> = frame.group_sizes.iter().map(|&m| identity(m)).collect();
            assemble_levi_metric(&frame.frame, &groups)
        })
        .collect::<Result<_>>()?;
    finish_construction(datum, MetricDatum { blocks }, tol)
}

/// The positive `g` with `g† H₁ g = H₂`: `g = H₁^{-1/2} (H₁^{-1/2} H₂ H₁^{-1/2})^{1/2} H₁^{1/2}`.
pub fn metric_intertwiner(h1: &ComplexMatrix, h2: &ComplexMatrix) -> Result<ComplexMatrix> {
    let root = hermitian_power(h1, 0.5)?;
    let inv_root = hermitian_power(h1, -0.5)?;
    let middle = hermitian_power(&hermitize(&(&inv_root * h2 * &inv_root)), 0.5)?;
    Ok(inv_root * middle * root)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowVerdict {
    Converged,
    Degenerating,
    BudgetExhausted,
}

impl FlowVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            FlowVerdict::Converged => "converged",
            FlowVerdict::Degenerating => "degenerating",
            FlowVerdict::BudgetExhausted => "budget_exhausted",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowOptions {
    pub max_steps: usize,
    /// Initial step; defaults to `0.05 / scale²`.
    pub step_size: Option<f64>,
    pub tol: Tolerances,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { max_steps: 50_000, step_size: None, tol: Tolerances::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub metric: MetricDatum,
    pub steps: usize,
    /// Residual before the first step and after every step.
    pub residual_history: Vec<f64>,
    /// Largest metric condition number along the trajectory.
    pub max_condition: f64,
    pub verdict: FlowVerdict,
    pub final_residual: f64,
    /// Newton distance to a critical point at the last certification attempt.
    pub newton_distance: Option<f64>,
    pub scale: f64,
}

impl FlowResult {
    /// Copy whose history keeps every `stride`-th entry and the last one.
    pub fn thinned(&self, stride: usize) -> Self {
        let stride = stride.max(1);
        let len = self.residual_history.len();
        let residual_history = self
            .residual_history
            .iter()
            .enumerate()
            .filter(|(k, _)| k % stride == 0 || k + 1 == len)
            .map(|(_, &r)| r)
            .collect();
        Self { residual_history, ..self.clone() }
    }
}

/// Smallest step accepted before a block counts as stalled, relative to the
/// initial step.
const STALL_FACTOR: f64 = 1e-14;
const GROWTH: f64 = 1.5;

/// Hessian eigenvalues below this many ulps of the block scale are ignored.
const ROUNDOFF_FLOOR: f64 = 1e3;

/// `Σᵢ tr(H⁻¹ T^i† H T^i)`, the norm functional whose gradient is `M(H)`.
fn block_energy(family: &[ComplexMatrix], h: &ComplexMatrix, chol: &Chol) -> f64 {
    family.iter().map(|t| (h_adjoint_with(t, h, chol) * t).trace().re).sum()
}

struct BlockState {
    h: ComplexMatrix,
    chol: Chol,
    energy: f64,
    residual: f64,
    condition: f64,
    step: f64,
    stalled: bool,
}

impl BlockState {
    fn new(family: &[ComplexMatrix], h: ComplexMatrix, step: f64) -> Result<Self> {
        let chol = cholesky(&h)?;
        let residual = frobenius_norm(&block_operator(family, &h, &chol));
        let energy = block_energy(family, &h, &chol);
        let condition = hermitian_condition(&h)?;
        Ok(Self { h, chol, energy, residual, condition, step, stalled: false })
    }

    /// One backtracking Euler step; returns false when the step underflows.
    ///
    /// A step is accepted when it lowers the energy, or leaves it unchanged
    /// to roundoff without raising the residual.
    fn advance(&mut self, family: &[ComplexMatrix], floor: f64) -> bool {
        let slack = ROUNDOFF_FLOOR * f64::EPSILON * self.energy.abs();
        let m = block_operator(family, &self.h, &self.chol);
        let hm = &self.h * &m;
        while self.step >= floor {
            let trial = &self.h - hm.scale(self.step);
            if let Ok(candidate) = normalize_det(&trial) {
                if let Ok(chol) = cholesky(&candidate) {
                    let residual = frobenius_norm(&block_operator(family, &candidate, &chol));
                    let energy = block_energy(family, &candidate, &chol);
                    let descent = energy < self.energy - slack
                        || (energy <= self.energy + slack && residual <= self.residual);
                    if descent {
                        if let Ok(condition) = hermitian_condition(&candidate) {
                            self.h = candidate;
                            self.chol = chol;
                            self.energy = energy;
                            self.residual = residual;
                            self.condition = condition;
                            self.step *= GROWTH;
                            return true;
                        }
                    }
                }
            }
            self.step *= 0.5;
        }
        self.stalled = true;
        false
    }
}

/// Newton distance from `H` to the nearest critical point of the moment-map
/// norm along the orbit, computed in an `H`-unitary frame.
///
/// Near a genuine zero it shrinks with the residual; along a degenerating
/// orbit it stays of order one while the residual tends to zero.
pub fn newton_distance(family: &[ComplexMatrix], h: &ComplexMatrix) -> Result<f64> {
    let n = ensure_square(h)?;
    let chol = cholesky(h)?;
    let l = chol.l();
    let l_adj = l.adjoint();
    let l_adj_inv = inverse(&l_adj)?;
    let unitary: Vec<ComplexMatrix> = family.iter().map(|t| &l_adj * t * &l_adj_inv).collect();
    let mut gram = ComplexMatrix::zeros(n * n, n * n);
    let mut m = ComplexMatrix::zeros(n, n);
    for t in &unitary {
        let c = commutator_operator(t);
        let d = commutator_operator(&t.adjoint());
        gram += c.adjoint() * &c + d.adjoint() * &d;
        m += t * t.adjoint() - t.adjoint() * t;
    }
    let (values, vectors) = hermitian_eigen(&gram)?;
    let top = values.last().copied().unwrap_or(0.0);
    // Directions at roundoff level are stabilizer directions.
    let cutoff = ROUNDOFF_FLOOR * f64::EPSILON * top.max(family_scale(&unitary));
    let rhs = nalgebra::DVector::from_column_slice(m.as_slice());
    let coeffs = vectors.adjoint() * rhs;
    let mut dist = 0.0;
    for (k, &v) in values.iter().enumerate() {
        if v > cutoff && v > 0.0 {
            dist += (coeffs[k].norm() / v).powi(2);
        }
    }
    Ok(dist.sqrt())
}

/// Runs the moment-map flow `H ← H − ε H M(H)` with det renormalization,
/// backtracking on the norm functional.
///
/// Converged means the residual and the full flatness residual are within
/// `YM_THRESHOLD · scale` and the Newton distance to a critical point is within `NEWTON_CERTIFICATE`;
/// degenerating means some block's condition number passed `kappa_max`.
pub fn flow_solve(datum: &HiggsDatum, initial: Option<&MetricDatum>, opts: &FlowOptions) -> Result<FlowResult> {
    let tol = &opts.tol;
    tol.check()?;
    let scale = datum.scale();
    let start = match initial {
        Some(m) => {
            m.check_shapes(datum)?;
            MetricDatum::normalized(m.blocks.clone())?
        }
        None => MetricDatum::identity(&datum.multiplicities()),
    };
    let step0 = opts.step_size.unwrap_or(0.05 / (scale * scale));
    if !(step0.is_finite() && step0 > 0.0) {
        return Err(Error::Precondition(format!("step size must be finite and > 0, got {step0}")));
    }
    let floor = step0 * STALL_FACTOR;
    let mut states: Vec<BlockState> = datum
        .blocks
        .iter()
        .zip(start.blocks)
        .map(|(b, h)| BlockState::new(&b.higgs, h, step0))
        .collect::<Result<_>>()?;

    let target = YM_THRESHOLD * scale;
    let idle = 1e-3 * target;
    let residual_of = |s: &[BlockState]| s.iter().map(|b| b.residual).fold(0.0, f64::max);
    let condition_of = |s: &[BlockState]| s.iter().map(|b| b.condition).fold(1.0, f64::max);

    let mut residual = residual_of(&states);
    let mut history = vec![residual];
    let mut max_condition = condition_of(&states);
    let mut newton = None;
    let mut next_certificate = f64::INFINITY;
    let mut steps = 0;

    // Newton distance, or infinity while the full flatness residual is above target.
    let certify = |states: &[BlockState]| -> Result<f64> {
        let metric = MetricDatum { blocks: states.iter().map(|s| s.h.clone()).collect() };
        if ym_residual(datum, &metric, tol)?.flatness_residual > target {
            return Ok(f64::INFINITY);
        }
        datum
            .blocks
            .iter()
            .zip(states)
            .map(|(b, s)| newton_distance(&b.higgs, &s.h))
            .try_fold(0.0, |acc, d| Ok(f64::max(acc, d?)))
    };

    let verdict = loop {
        if max_condition > tol.kappa_max {
            break FlowVerdict::Degenerating;
        }
        if residual <= target && residual <= next_certificate {
            let d = certify(&states)?;
            newton = d.is_finite().then_some(d).or(newton);
            if d <= NEWTON_CERTIFICATE {
                break FlowVerdict::Converged;
            }
            next_certificate = residual * 0.1;
        }
        if steps >= opts.max_steps {
            break FlowVerdict::BudgetExhausted;
        }
        let mut moved = false;
        for (state, block) in states.iter_mut().zip(&datum.blocks) {
            if state.residual > idle && !state.stalled {
                moved |= state.advance(&block.higgs, floor);
            }
        }
        if !moved {
            // Nothing can move: either certify what we have or give up.
            if residual <= target {
                let d = certify(&states)?;
                newton = d.is_finite().then_some(d).or(newton);
                if d <= NEWTON_CERTIFICATE {
                    break FlowVerdict::Converged;
                }
            }
            break FlowVerdict::BudgetExhausted;
        }
        steps += 1;
        residual = residual_of(&states);
        max_condition = max_condition.max(condition_of(&states));
        history.push(residual);
    };

    Ok(FlowResult {
        metric: MetricDatum { blocks: states.into_iter().map(|s| s.h).collect() },
        steps,
        residual_history: history,
        max_condition,
        verdict,
        final_residual: residual,
        newton_distance: newton,
        scale,
    })
}

/// Largest relative defect `‖[g, T^i]‖ / (‖g‖ · max(1, ‖T^i‖))` over a family.
pub fn commuting_defect(g: &ComplexMatrix, family: &[ComplexMatrix]) -> f64 {
    let gn = frobenius_norm(g).max(f64::MIN_POSITIVE);
    family
        .iter()
        .map(|t| frobenius_norm(&(g * t - t * g)) / (gn * frobenius_norm(t).max(1.0)))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{h_adjoint, real_matrix};
    use crate::model::{gen_negative, gen_planted, single_block, NegativeKind};
    use approx::assert_abs_diff_eq;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn golden_two_by_two_metric() {
        let t = real_matrix(2, 2, &[1., 1., 0., 2.]);
        let datum = single_block("E", vec![t.clone()]);
        let metric = construct_ym_metric(&datum, &tol()).unwrap();
        let h = &metric.blocks[0];
        let expected = real_matrix(2, 2, &[1., -1., -1., 2.]);
        assert!(frobenius_norm(&(h - &expected)) <= 1e-12, "{h}");
        assert_abs_diff_eq!(determinant(h).unwrap(), 1.0, epsilon = 1e-12);
        let adj = h_adjoint(&t, h, &tol()).unwrap();
        assert!(frobenius_norm(&(adj - &t)) <= 1e-12);
        let report = ym_residual(&datum, &metric, &tol()).unwrap();
        assert!(report.ym_residual <= 1e-12 && report.flatness_residual <= 1e-12);
    }

    #[test]
    fn diagonal_family_gets_identity() {
        let datum = single_block("E", vec![real_matrix(2, 2, &[1., 0., 0., 3.]), real_matrix(2, 2, &[2., 0., 0., 2.])]);
        let metric = construct_ym_metric(&datum, &tol()).unwrap();
        assert!(frobenius_norm(&(&metric.blocks[0] - identity(2))) <= 1e-12);
    }

    #[test]
    fn nilpotent_residual_closed_form() {
        let datum = single_block("E", vec![real_matrix(2, 2, &[0., 1., 0., 0.])]);
        for (a, b) in [(1.0, 1.0), (0.5, 2.0), (0.125, 8.0)] {
            let metric = MetricDatum { blocks: vec![real_matrix(2, 2, &[a, 0., 0., b])] };
            let r = ym_residual(&datum, &metric, &tol()).unwrap();
            assert_abs_diff_eq!(r.ym_residual, 2f64.sqrt() * a / b, epsilon = 1e-14);
            assert_abs_diff_eq!(r.flatness_residual, 2f64.sqrt() * a / b, epsilon = 1e-14);
        }
    }

    #[test]
    fn hermitian_family_is_flat() {
        let datum = single_block("E", vec![real_matrix(2, 2, &[0., 1., 1., 0.])]);
        let r = ym_residual(&datum, &MetricDatum::identity(&[2]), &tol()).unwrap();
        assert_eq!(r.flatness_residual, 0.0);
        assert!(eh_report(&datum, &MetricDatum::identity(&[2]), &tol()).unwrap().eh_verdict);
    }

    #[test]
    fn eh_report_rejects_non_ym_metric() {
        let datum = single_block("E", vec![real_matrix(2, 2, &[0., 1., 0., 0.])]);
        let err = eh_report(&datum, &MetricDatum::identity(&[2]), &tol()).unwrap_err();
        assert!(err.to_string().contains("not Yang–Mills"));
    }

    #[test]
    fn construct_rejects_non_polystable() {
        let datum = gen_negative(NegativeKind::Nilpotent, 3, 2, 1).unwrap();
        assert!(matches!(construct_ym_metric(&datum, &tol()), Err(Error::Precondition(_))));
    }

    #[test]
    fn gauge_examples() {
        let (datum, _) = gen_planted(2, &[3, 2], None, 4).unwrap();
        let metric = construct_ym_metric(&datum, &tol()).unwrap();
        let same = apply_gauge(&metric, &GaugeTransform::identity(&[3, 2])).unwrap();
        for (a, b) in same.blocks.iter().zip(&metric.blocks) {
            assert!(frobenius_norm(&(a - b)) <= 1e-13);
        }
        let scalar = GaugeTransform::new(vec![identity(3).scale(3.0), identity(2).scale(0.5)]).unwrap();
        let scaled = apply_gauge(&metric, &scalar).unwrap();
        for (a, b) in scaled.blocks.iter().zip(&metric.blocks) {
            assert!(frobenius_norm(&(a - b)) <= 1e-12);
        }
    }

    #[test]
    fn planted_construction_and_flow_agree() {
        let (datum, _) = gen_planted(2, &[4, 3], None, 21).unwrap();
        let direct = construct_ym_metric(&datum, &tol()).unwrap();
        let report = eh_report(&datum, &direct, &tol()).unwrap();
        assert!(report.flatness_residual <= CONSTRUCTION_THRESHOLD * report.scale);

        let again = flow_solve(&datum, Some(&direct), &FlowOptions::default()).unwrap();
        assert_eq!(again.verdict, FlowVerdict::Converged);
        assert_eq!(again.steps, 0);

        let flowed = flow_solve(&datum, None, &FlowOptions::default()).unwrap();
        assert_eq!(flowed.verdict, FlowVerdict::Converged, "{:?}", flowed.residual_history.last());
        assert!(eh_report(&datum, &flowed.metric, &tol()).unwrap().eh_verdict);
        for (h1, h2) in direct.blocks.iter().zip(&flowed.metric.blocks) {
            let g = metric_intertwiner(h1, h2).unwrap();
            assert!(frobenius_norm(&(g.adjoint() * h1 * &g - h2)) <= 1e-8 * frobenius_norm(h2));
        }
    }

    #[test]
    fn nilpotent_flow_degenerates() {
        let datum = single_block("E", vec![real_matrix(2, 2, &[0., 1., 0., 0.])]);
        let result = flow_solve(&datum, None, &FlowOptions::default()).unwrap();
        assert_eq!(result.verdict, FlowVerdict::Degenerating);
        assert!(result.max_condition > tol().kappa_max);
        let h = &result.metric.blocks[0];
        assert!(h[(0, 1)].norm() <= 1e-12 * h[(1, 1)].norm());
        let expected = 2f64.sqrt() * h[(0, 0)].re / h[(1, 1)].re;
        assert_abs_diff_eq!(result.final_residual, expected, epsilon = 1e-6 * expected);
    }

    #[test]
    fn levi_route_agrees_up_to_commuting_gauge() {
        let (datum, _) = gen_planted(3, &[5], None, 13).unwrap();
        let direct = construct_ym_metric(&datum, &tol()).unwrap();
        let levi = levi_route_metric(&datum, &tol(), 99).unwrap();
        let g = metric_intertwiner(&direct.blocks[0], &levi.blocks[0]).unwrap();
        assert!(commuting_defect(&g, &datum.blocks[0].higgs) <= 1e-7);
    }

    #[test]
    fn metric_file_roundtrip_and_validation() {
        let (datum, _) = gen_planted(2, &[3], None, 2).unwrap();
        let metric = construct_ym_metric(&datum, &tol()).unwrap();
        assert_eq!(parse_metric(&serialize_metric(&metric), &tol()).unwrap(), metric);
        let bad = MetricDatum { blocks: vec![real_matrix(2, 2, &[2., 0., 0., 2.])] };
        assert!(bad.validate(&tol()).to_string().contains("determinant"));
    }
}
