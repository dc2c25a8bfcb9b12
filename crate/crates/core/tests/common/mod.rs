//! Shared helpers for the integration tests: exact rational oracles, integer
//! matrix generators and the CLI fixture corpus.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use higgs_torus::linalg::ComplexMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;

pub type IntMatrix = Vec<Vec<i64>>;

fn q(x: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

pub fn to_complex(a: &IntMatrix) -> ComplexMatrix {
    let n = a.len();
    ComplexMatrix::from_fn(n, n, |i, j| Complex64::new(a[i][j] as f64, 0.0))
}

pub fn int_mul(a: &IntMatrix, b: &IntMatrix) -> IntMatrix {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect()
}

pub fn int_identity(n: usize) -> IntMatrix {
    (0..n).map(|i| (0..n).map(|j| i64::from(i == j)).collect()).collect()
}

/// Rank of a rational matrix by Gaussian elimination.
pub fn exact_rank(mut rows: Vec<Vec<BigRational>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..rows.len()).find(|&r| !rows[r][c].is_zero()) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank][c].clone();
        for r in 0..rows.len() {
            if r != rank && !rows[r][c].is_zero() {
                let f = &rows[r][c] / &pivot;
                for k in c..cols {
                    let sub = &f * &rows[rank][k];
                    rows[r][k] -= sub;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Polynomial with rational coefficients, lowest degree first, no trailing zeros.
type Poly = Vec<BigRational>;

fn trim(mut p: Poly) -> Poly {
    while p.last().is_some_and(Zero::is_zero) {
        p.pop();
    }
    p
}

fn poly_rem(a: &Poly, b: &Poly) -> Poly {
    let mut r = a.clone();
    let lead = b.last().expect("nonzero divisor").clone();
    while r.len() >= b.len() && !r.is_empty() {
        let f = r.last().unwrap() / &lead;
        let shift = r.len() - b.len();
        for (k, c) in b.iter().enumerate() {
            let sub = &f * c;
            r[shift + k] -= sub;
        }
        r = trim(r);
    }
    r
}

fn poly_gcd(a: &Poly, b: &Poly) -> Poly {
    let (mut x, mut y) = (trim(a.clone()), trim(b.clone()));
    while !y.is_empty() {
        let r = poly_rem(&x, &y);
        x = y;
        y = r;
    }
    x
}

fn derivative(p: &Poly) -> Poly {
    trim(p.iter().enumerate().skip(1).map(|(k, c)| c * q(k as i64)).collect())
}

/// Minimal polynomial of an integer matrix: the first linear dependency
/// among `I, A, A², …`.
pub fn minimal_polynomial(a: &IntMatrix) -> Poly {
    let n = a.len();
    let mut powers: Vec<IntMatrix> = vec![int_identity(n)];
    loop {
        let k = powers.len();
        let next = int_mul(powers.last().unwrap(), a);
        // Solve Σ c_j vec(A^j) = -vec(A^k) for j < k, if possible.
        let rows: Vec<Vec<BigRational>> = (0..n * n)
            .map(|e| {
                let (i, j) = (e / n, e % n);
                let mut row: Vec<BigRational> = powers.iter().map(|p| q(p[i][j])).collect();
                row.push(q(-next[i][j]));
                row
            })
            .collect();
        let without: Vec<Vec<BigRational>> = rows.iter().map(|r| r[..k].to_vec()).collect();
        if exact_rank(without.clone()) == exact_rank(rows.clone()) {
            // Consistent: find coefficients by elimination on the augmented system.
            let coeffs = solve_consistent(rows, k);
            let mut poly: Poly = coeffs;
            poly.push(BigRational::one());
            return trim(poly);
        }
        powers.push(next);
    }
}

/// Solution of a consistent system with `k` unknowns and augmented last column,
/// given that the coefficient columns are linearly independent.
fn solve_consistent(mut rows: Vec<Vec<BigRational>>, k: usize) -> Vec<BigRational> {
    let mut pivots = Vec::new();
    let mut rank = 0;
    for c in 0..k {
        let Some(p) = (rank..rows.len()).find(|&r| !rows[r][c].is_zero()) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank][c].clone();
        for x in rows[rank].iter_mut() {
            *x /= &pivot;
        }
        for r in 0..rows.len() {
            if r != rank && !rows[r][c].is_zero() {
                let f = rows[r][c].clone();
                for j in 0..=k {
                    let sub = &f * &rows[rank][j];
                    rows[r][j] -= sub;
                }
            }
        }
        pivots.push(c);
        rank += 1;
    }
    let mut x = vec![BigRational::zero(); k];
    for (r, &c) in pivots.iter().enumerate() {
        x[c] = rows[r][k].clone();
    }
    x
}

/// Diagonalizable over ℂ iff the minimal polynomial is squarefree.
pub fn exact_is_semisimple(a: &IntMatrix) -> bool {
    let m = minimal_polynomial(a);
    poly_gcd(&m, &derivative(&m)).len() <= 1
}

/// `n² − rank` of the stacked exact commutation system.
pub fn exact_centralizer_dim(family: &[IntMatrix]) -> usize {
    let n = family[0].len();
    let mut rows = Vec::new();
    for t in family {
        // Row for entry (i, j) of XT − TX, unknowns X[p][r] at index p·n + r.
        for i in 0..n {
            for j in 0..n {
                let mut row = vec![BigRational::zero(); n * n];
                for k in 0..n {
                    row[i * n + k] += q(t[k][j]);
                    row[k * n + j] -= q(t[i][k]);
                }
                rows.push(row);
            }
        }
    }
    n * n - exact_rank(rows)
}

pub fn random_int_matrix<R: Rng>(rng: &mut R, n: usize, bound: i64) -> IntMatrix {
    (0..n).map(|_| (0..n).map(|_| rng.random_range(-bound..=bound)).collect()).collect()
}

/// Unimodular matrix and its inverse, from a few elementary row operations.
pub fn unimodular<R: Rng>(rng: &mut R, n: usize, ops: usize) -> (IntMatrix, IntMatrix) {
    let mut p = int_identity(n);
    let mut p_inv = int_identity(n);
    if n < 2 {
        return (p, p_inv);
    }
    for _ in 0..ops {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let c = [-2, -1, 1, 2][rng.random_range(0..4)];
        // P ← E P with E = I + c e_i e_jᵀ, P⁻¹ ← P⁻¹ E⁻¹.
        let mut e = int_identity(n);
        e[i][j] = c;
        let mut e_inv = int_identity(n);
        e_inv[i][j] = -c;
        p = int_mul(&e, &p);
        p_inv = int_mul(&p_inv, &e_inv);
    }
    (p, p_inv)
}

/// Jordan form with small integer eigenvalues and random block sizes.
pub fn random_jordan<R: Rng>(rng: &mut R, n: usize) -> IntMatrix {
    let mut m = vec![vec![0; n]; n];
    let mut start = 0;
    while start < n {
        let size = rng.random_range(1..=n - start);
        let lambda = rng.random_range(-2..=2);
        for k in start..start + size {
            m[k][k] = lambda;
            if k + 1 < start + size {
                m[k][k + 1] = 1;
            }
        }
        start += size;
    }
    m
}

pub fn conjugate_int(a: &IntMatrix, p: &IntMatrix, p_inv: &IntMatrix) -> IntMatrix {
    int_mul(&int_mul(p, a), p_inv)
}

/// The 500-matrix corpus: random integer matrices, conjugated Jordan forms
/// (defective and diagonal) and integer polynomials in them.
pub fn integer_corpus(seed: u64) -> Vec<IntMatrix> {
    let mut rng = higgs_torus::model::rng_for(seed, 0);
    let mut out = Vec::with_capacity(500);
    for k in 0..500 {
        let n = rng.random_range(1..=4);
        let m = match k % 4 {
            0 => random_int_matrix(&mut rng, n, 3),
            1 | 2 => {
                let j = random_jordan(&mut rng, n);
                let (p, p_inv) = unimodular(&mut rng, n, 3);
                conjugate_int(&j, &p, &p_inv)
            }
            _ => {
                let j = random_jordan(&mut rng, n);
                let (p, p_inv) = unimodular(&mut rng, n, 2);
                let a = conjugate_int(&j, &p, &p_inv);
                let c = rng.random_range(-1..=1);
                let mut poly = int_mul(&a, &a);
                for (row, arow) in poly.iter_mut().zip(&a) {
                    for (x, y) in row.iter_mut().zip(arow) {
                        *x += c * y;
                    }
                }
                poly
            }
        };
        out.push(m);
    }
    out
}

/// Families of integer matrices of size ≤ 3 for the centralizer oracle.
pub fn centralizer_corpus(seed: u64, count: usize) -> Vec<Vec<IntMatrix>> {
    let mut rng = higgs_torus::model::rng_for(seed, 1);
    (0..count)
        .map(|k| {
            let n = rng.random_range(1..=3);
            let d = rng.random_range(1..=3);
            match k % 3 {
                0 => (0..d).map(|_| random_int_matrix(&mut rng, n, 2)).collect(),
                1 => {
                    // Commuting: polynomials in one conjugated Jordan form.
                    let j = random_jordan(&mut rng, n);
                    let (p, p_inv) = unimodular(&mut rng, n, 2);
                    let a = conjugate_int(&j, &p, &p_inv);
                    let sq = int_mul(&a, &a);
                    (0..d)
                        .map(|_| {
                            let (c0, c1, c2) = (rng.random_range(-2..=2), rng.random_range(-2..=2), rng.random_range(-1..=1));
                            (0..n)
                                .map(|i| (0..n).map(|j| c0 * i64::from(i == j) + c1 * a[i][j] + c2 * sq[i][j]).collect())
                                .collect()
                        })
                        .collect()
                }
                _ => {
                    // Commuting diagonalizable with repeated eigenvalues.
                    let (p, p_inv) = unimodular(&mut rng, n, 2);
                    (0..d)
                        .map(|_| {
                            let mut dmat = vec![vec![0; n]; n];
                            for (i, row) in dmat.iter_mut().enumerate() {
                                row[i] = rng.random_range(-1..=1);
                            }
                            conjugate_int(&dmat, &p, &p_inv)
                        })
                        .collect()
                }
            }
        })
        .collect()
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

/// One CLI invocation of the golden corpus.
pub struct Golden {
    pub args: &'static [&'static str],
    pub exit_code: i32,
    /// Expected prefix of the stderr summary line, when pinned.
    pub summary: Option<&'static str>,
}

/// Paths in `args` are relative to the fixtures directory when they name a
/// fixture file.
pub const CORPUS: &[Golden] = &[
    Golden { args: &["check", "planted_levi_21.json"], exit_code: 0, summary: Some("polystable; blocks=2; levi=[2,1]") },
    Golden { args: &["check", "planted_seed7.json"], exit_code: 0, summary: Some("polystable; blocks=2; levi=") },
    Golden { args: &["check", "planted_seed7.json", "planted_levi_21.json", "--parallel", "2"], exit_code: 0, summary: Some("2/2 polystable") },
    Golden { args: &["check", "nilpotent.json"], exit_code: 1, summary: Some("fails_semisimplicity") },
    Golden { args: &["check", "noncommuting.json"], exit_code: 1, summary: Some("fails_commutation") },
    Golden { args: &["check", "nonsemisimple_mixed.json"], exit_code: 1, summary: Some("fails_semisimplicity") },
    Golden { args: &["check", "truncated.json"], exit_code: 2, summary: Some("error: parse error") },
    Golden { args: &["check", "nan_entry.json"], exit_code: 2, summary: Some("error: parse error: non-finite entry") },
    Golden { args: &["check", "wrong_schema.json"], exit_code: 2, summary: Some("error: parse error: unsupported schema") },
    Golden { args: &["check", "arity_mismatch.json"], exit_code: 2, summary: Some("error: invalid datum") },
    Golden { args: &["check", "planted_seed7.json", "nilpotent.json"], exit_code: 1, summary: Some("1/2 polystable") },
    Golden { args: &["check", "planted_seed7.json", "truncated.json"], exit_code: 2, summary: Some("1/2 polystable") },
    Golden { args: &["validate", "planted_seed7.json"], exit_code: 0, summary: Some("valid") },
    Golden { args: &["validate", "arity_mismatch.json"], exit_code: 2, summary: Some("invalid: blocks[0]") },
    Golden { args: &["validate", "truncated.json"], exit_code: 2, summary: None },
    Golden { args: &["spectrum", "planted_levi_21.json"], exit_code: 0, summary: Some("polystable; eigenspaces=[1,1]") },
    Golden { args: &["spectrum", "nilpotent.json"], exit_code: 1, summary: Some("fails_semisimplicity") },
    Golden { args: &["levi", "planted_levi_21.json"], exit_code: 0, summary: Some("levi=[2,1]; centralizer_dim=[4,1]") },
    Golden { args: &["levi", "nilpotent.json"], exit_code: 1, summary: Some("not commuting semisimple; centralizer_dim=[2]") },
    Golden { args: &["solve", "planted_seed7.json", "--direct"], exit_code: 0, summary: Some("constructed") },
    Golden { args: &["solve", "planted_seed7.json"], exit_code: 0, summary: Some("converged") },
    Golden { args: &["solve", "golden_2x2.json", "--direct"], exit_code: 0, summary: Some("constructed") },
    Golden { args: &["solve", "nilpotent.json"], exit_code: 1, summary: Some("degenerating") },
    Golden { args: &["solve", "nilpotent.json", "--direct"], exit_code: 1, summary: Some("error: precondition violated: datum is not polystable") },
    Golden { args: &["solve", "planted_seed7.json", "--steps", "1", "--lr", "1e-12"], exit_code: 3, summary: Some("budget_exhausted") },
    Golden { args: &["solve", "truncated.json"], exit_code: 2, summary: None },
    Golden { args: &["verify", "golden_2x2.json", "golden_2x2.metric.json"], exit_code: 0, summary: Some("einstein_hermitian") },
    Golden { args: &["verify", "golden_2x2.json", "identity2.metric.json"], exit_code: 1, summary: Some("not_yang_mills") },
    Golden { args: &["verify", "nilpotent.json", "identity2.metric.json"], exit_code: 1, summary: Some("not_yang_mills") },
    Golden { args: &["verify", "golden_2x2.json", "identity3.metric.json"], exit_code: 2, summary: Some("error: shape mismatch") },
    Golden { args: &["verify", "golden_2x2.json", "not_det_one.metric.json"], exit_code: 2, summary: Some("error: invalid datum") },
    Golden { args: &["gauge", "golden_2x2.json", "--gauge", "shear.gauge.json"], exit_code: 0, summary: Some("gauged; blocks=1") },
    Golden { args: &["gauge", "golden_2x2.json", "--gauge", "singular.gauge.json"], exit_code: 2, summary: Some("error: matrix is singular") },
    Golden { args: &["trivialize", "planted_levi_21.json", "--matrix", "swap.trivialization.json"], exit_code: 0, summary: Some("retrivialized; dim=2") },
    Golden { args: &["trivialize", "planted_levi_21.json", "--matrix", "singular.trivialization.json"], exit_code: 2, summary: None },
    Golden { args: &["check", "planted_seed7.json", "--tau-rank", "0"], exit_code: 2, summary: Some("error: invalid tolerances") },
    Golden { args: &["frobnicate"], exit_code: 2, summary: None },
];

pub fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_higgs-torus")
}

pub struct Run {
    pub code: i32,
    pub stdout: Vec<u8>,
    pub stderr: String,
}

/// Runs the binary inside the fixtures directory.
pub fn run_cli(args: &[&str]) -> Run {
    let out = Command::new(binary())
        .args(args)
        .current_dir(fixtures_dir())
        .env_remove("HIGGS_SEED")
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: out.stdout,
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Checks every corpus entry; returns the failures.
pub fn corpus_failures() -> Vec<String> {
    let mut failures = Vec::new();
    for g in CORPUS {
        let run = run_cli(g.args);
        let summary = run.stderr.lines().last().unwrap_or("").to_string();
        if run.code != g.exit_code {
            failures.push(format!("{:?}: exit {} (expected {}): {summary}", g.args, run.code, g.exit_code));
        } else if let Some(prefix) = g.summary {
            if !summary.starts_with(prefix) {
                failures.push(format!("{:?}: summary {summary:?} lacks prefix {prefix:?}", g.args));
            }
        }
    }
    failures
}
