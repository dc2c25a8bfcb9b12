//! Seeded instance generators.
//!
//! Every generator is a pure function of its parameters and a 64-bit seed.
//! Randomness comes from ChaCha8 with one stream per block, so blocks can be
//! drawn independently and reproducibly.

use std::str::FromStr;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{io, BlockSpec, HiggsDatum};
use crate::error::{Error, Result};
use crate::linalg::{commutator, frobenius_norm, identity, inverse, ComplexMatrix};
use crate::polystability::{JointSpectrum, SpectrumEntry};

/// Default ceiling on the condition number of planted conjugators.
pub const DEFAULT_CONJUGATOR_CONDITION: f64 = 10.0;

/// Half-width of the integer eigenvalue grid `{−5,…,5} + i{−5,…,5}`.
const GRID: i32 = 5;

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian<R: Rng>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_unit_circle<R: Rng>(rng: &mut R) -> Complex64 {
    Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
}

/// Haar-distributed unitary matrix.
pub fn random_unitary<R: Rng>(rng: &mut R, n: usize) -> ComplexMatrix {
    let z = ComplexMatrix::from_fn(n, n, |_, _| gaussian(rng));
    let qr = z.qr();
    let r = qr.r();
    let phases: Vec<Complex64> = (0..n)
        .map(|i| {
            let d = r[(i, i)];
            if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) }
        })
        .collect();
    qr.q() * ComplexMatrix::from_diagonal(&DVector::from_vec(phases))
}

/// `U · diag(σ) · V†` with `σ` log-uniform in `[1, max_condition]`, so the
/// condition number never exceeds `max_condition`.
pub fn random_invertible<R: Rng>(rng: &mut R, n: usize, max_condition: f64) -> ComplexMatrix {
    let u = random_unitary(rng, n);
    let v = random_unitary(rng, n);
    let span = max_condition.max(1.0).ln();
    let sigma: Vec<Complex64> = (0..n).map(|_| Complex64::new((rng.random::<f64>() * span).exp(), 0.0)).collect();
    u * ComplexMatrix::from_diagonal(&DVector::from_vec(sigma)) * v.adjoint()
}

fn grid_point<R: Rng>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.random_range(-GRID..=GRID) as f64, rng.random_range(-GRID..=GRID) as f64)
}

/// Random composition of `n` into `k` positive parts.
fn composition<R: Rng>(rng: &mut R, n: usize, k: usize) -> Vec<usize> {
    let mut cuts: Vec<usize> = (1..n).collect();
    cuts.shuffle(rng);
    let mut chosen: Vec<usize> = cuts.into_iter().take(k - 1).collect();
    chosen.sort_unstable();
    let mut parts = Vec::with_capacity(k);
    let mut prev = 0;
    for c in chosen.into_iter().chain(std::iter::once(n)) {
        parts.push(c - prev);
        prev = c;
    }
    parts
}

fn random_spectrum<R: Rng>(rng: &mut R, d: usize, n: usize) -> JointSpectrum {
    let k = rng.random_range(1..=n);
    let mults = composition(rng, n, k);
    let mut tuples: Vec<Vec<Complex64>> = Vec::with_capacity(k);
    while tuples.len() < k {
        let t: Vec<Complex64> = (0..d).map(|_| grid_point(rng)).collect();
        if !tuples.contains(&t) {
            tuples.push(t);
        }
    }
    let entries = tuples.into_iter().zip(mults).map(|(tuple, mult)| SpectrumEntry { tuple, mult }).collect();
    JointSpectrum::canonical(entries, 0.0)
}

/// How planted families are conjugated away from diagonal form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Conjugation {
    Identity,
    Random { max_condition: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantedConfig {
    pub dim: usize,
    pub sizes: Vec<usize>,
    /// One spectrum per block; drawn from the integer grid when absent.
    pub spectra: Option<Vec<JointSpectrum>>,
    pub conjugation: Conjugation,
    pub seed: u64,
}

impl PlantedConfig {
    pub fn new(dim: usize, sizes: &[usize], seed: u64) -> Self {
        Self {
            dim,
            sizes: sizes.to_vec(),
            spectra: None,
            conjugation: Conjugation::Random { max_condition: DEFAULT_CONJUGATOR_CONDITION },
            seed,
        }
    }
}

/// The exact structure a planted block was built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockTruth {
    pub label: String,
    pub spectrum: JointSpectrum,
    /// `S` with `T^i = S D^i S⁻¹`, columns ordered as the spectrum.
    #[serde(with = "io::matrix")]
    pub conjugator: ComplexMatrix,
    pub eigenspace_dims: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub blocks: Vec<BlockTruth>,
}

pub fn gen_planted(
    dim: usize,
    sizes: &[usize],
    spectra: Option<Vec<JointSpectrum>>,
    seed: u64,
) -> Result<(HiggsDatum, PlantedTruth)> {
    gen_planted_with(&PlantedConfig { spectra, ..PlantedConfig::new(dim, sizes, seed) })
}

/// Draws a polystable datum `T^i_j = S_j D^i_j S_j⁻¹` with diagonal `D^i_j`.
pub fn gen_planted_with(cfg: &PlantedConfig) -> Result<(HiggsDatum, PlantedTruth)> {
    if cfg.dim == 0 {
        return Err(Error::Generator("d must be positive".into()));
    }
    if cfg.sizes.is_empty() || cfg.sizes.contains(&0) {
        return Err(Error::Generator("block sizes must be nonempty and positive".into()));
    }
    if let Some(spectra) = &cfg.spectra {
        if spectra.len() != cfg.sizes.len() {
            return Err(Error::Generator(format!("{} spectra for {} blocks", spectra.len(), cfg.sizes.len())));
        }
        for (j, (s, &n)) in spectra.iter().zip(&cfg.sizes).enumerate() {
            if s.entries.iter().any(|e| e.tuple.len() != cfg.dim || e.mult == 0) {
                return Err(Error::Generator(format!("spectrum {j}: tuple arity must be {} and mults positive", cfg.dim)));
            }
            if s.total_multiplicity() != n {
                return Err(Error::Generator(format!("spectrum {j}: multiplicities sum to {}, block size is {n}", s.total_multiplicity())));
            }
        }
    }

    let mut blocks = Vec::with_capacity(cfg.sizes.len());
    let mut truths = Vec::with_capacity(cfg.sizes.len());
    for (j, &n) in cfg.sizes.iter().enumerate() {
        let mut rng = rng_for(cfg.seed, j as u64);
        let spectrum = match &cfg.spectra {
            Some(s) => s[j].clone(),
            None => random_spectrum(&mut rng, cfg.dim, n),
        };
        let s = match cfg.conjugation {
            Conjugation::Identity => identity(n),
            Conjugation::Random { max_condition } => random_invertible(&mut rng, n, max_condition),
        };
        let s_inv = inverse(&s)?;
        let higgs = (0..cfg.dim).map(|i| &s * spectrum.block_scalar(i) * &s_inv).collect();
        let label = format!("E{}", j + 1);
        blocks.push(BlockSpec { label: label.clone(), rank: rng.random_range(1..=3), slope: 0.0, multiplicity: n, higgs });
        truths.push(BlockTruth { label, eigenspace_dims: spectrum.multiplicities(), spectrum, conjugator: s });
    }
    Ok((HiggsDatum { dim: cfg.dim, blocks }, PlantedTruth { blocks: truths }))
}

/// Which polystability condition a negative fixture violates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeKind {
    /// A nilpotent Jordan matrix among commuting components.
    Nilpotent,
    /// Two diagonalizable components that do not commute.
    Noncommuting,
    /// A commuting family `{J, p(J), …}` with `J` not diagonalizable.
    NonsemisimpleMixed,
}

impl NegativeKind {
    pub const ALL: [NegativeKind; 3] = [NegativeKind::Nilpotent, NegativeKind::Noncommuting, NegativeKind::NonsemisimpleMixed];

    pub fn as_str(self) -> &'static str {
        match self {
            NegativeKind::Nilpotent => "nilpotent",
            NegativeKind::Noncommuting => "noncommuting",
            NegativeKind::NonsemisimpleMixed => "nonsemisimple_mixed",
        }
    }
}

impl FromStr for NegativeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NegativeKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Generator(format!("unknown negative kind {s:?}")))
    }
}

/// Nilpotent matrix in Jordan form whose block sizes form a random partition
/// of `n` with at least one block of size ≥ 2.
fn jordan_nilpotent<R: Rng>(rng: &mut R, n: usize) -> ComplexMatrix {
    let mut parts = vec![rng.random_range(2..=n)];
    let mut left = n - parts[0];
    while left > 0 {
        let p = rng.random_range(1..=left);
        parts.push(p);
        left -= p;
    }
    let mut m = ComplexMatrix::zeros(n, n);
    let mut start = 0;
    for p in parts {
        for k in start..start + p - 1 {
            m[(k, k + 1)] = Complex64::new(1.0, 0.0);
        }
        start += p;
    }
    m
}

fn small_int<R: Rng>(rng: &mut R, lo: i32, hi: i32) -> Complex64 {
    Complex64::new(rng.random_range(lo..=hi) as f64, 0.0)
}

/// A single-block datum that violates exactly the named condition.
pub fn gen_negative(kind: NegativeKind, size: usize, dim: usize, seed: u64) -> Result<HiggsDatum> {
    if size < 2 {
        return Err(Error::Generator("negative fixtures need size >= 2".into()));
    }
    if dim == 0 {
        return Err(Error::Generator("d must be positive".into()));
    }
    let mut rng = rng_for(seed, 0);
    let n = size;
    let higgs: Vec<ComplexMatrix> = match kind {
        NegativeKind::Nilpotent => {
            let j = jordan_nilpotent(&mut rng, n);
            let mut family = vec![j.clone()];
            for _ in 1..dim {
                let c = grid_point(&mut rng);
                let b = small_int(&mut rng, 1, 2);
                family.push(identity(n) * c + &j * b);
            }
            family
        }
        NegativeKind::Noncommuting => {
            if dim < 2 {
                return Err(Error::Generator("noncommuting fixtures need d >= 2".into()));
            }
            let diagonalizable = |rng: &mut ChaCha8Rng| {
                let s = random_invertible(rng, n, DEFAULT_CONJUGATOR_CONDITION);
                let mut values: Vec<Complex64> = Vec::with_capacity(n);
                while values.len() < n {
                    let z = grid_point(rng);
                    if !values.contains(&z) {
                        values.push(z);
                    }
                }
                let s_inv = inverse(&s).expect("well-conditioned by construction");
                &s * ComplexMatrix::from_diagonal(&DVector::from_vec(values)) * s_inv
            };
            let first = diagonalizable(&mut rng);
            let mut second = diagonalizable(&mut rng);
            let norm = frobenius_norm(&commutator(&first, &second));
            if norm < 1.0 {
                second *= Complex64::new(1.0 / norm.max(1e-3), 0.0);
            }
            let mut family = vec![first, second];
            for _ in 2..dim {
                family.push(identity(n) * grid_point(&mut rng));
            }
            family
        }
        NegativeKind::NonsemisimpleMixed => {
            let lambda = grid_point(&mut rng);
            let jordan = identity(n) * lambda + jordan_nilpotent(&mut rng, n);
            let q = random_unitary(&mut rng, n);
            let j = &q * jordan * q.adjoint();
            let mut family = vec![j.clone()];
            for _ in 1..dim {
                let (c0, c1, c2) = (small_int(&mut rng, -3, 3), small_int(&mut rng, 1, 3), small_int(&mut rng, -1, 1));
                family.push(identity(n) * c0 + &j * c1 + &j * &j * c2);
            }
            family
        }
    };
    Ok(HiggsDatum {
        dim,
        blocks: vec![BlockSpec { label: "E1".into(), rank: 1, slope: 0.0, multiplicity: n, higgs }],
    })
}
