//! Weighted dilations, signed powers and homogeneous norms for integrator chains.
//!
//! A chain of order `r` with homogeneity degree `kappa` carries the weights
//! `p_i = 1 + (i - 1) kappa`. The homogeneous norm
//! `Gamma_i(z) = (sum_{j <= i} |z_j|^{c / p_j})^{1/c}` scales linearly under the
//! dilation `z_j -> eps^{p_j} z_j`, which is what every sampling routine below relies on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnitudes below this are treated as exactly zero by the power helpers.
pub const TINY: f64 = 1e-300;

const KAPPA_SLACK: f64 = 1e-12;

/// Numeric sign with `sgn(0) = 0`.
#[inline]
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `|x|^a` for `a >= 0`, with `0^a = 0` when `a > 0` and `0^0 = 1`.
#[inline]
pub fn abs_power(x: f64, a: f64) -> f64 {
    let m = x.abs();
    if a == 0.0 {
        return 1.0;
    }
    if m < TINY {
        return 0.0;
    }
    (a * m.ln()).exp()
}

/// `|x|^a sgn(x)`, odd in `x`, with `signed_power(0, a) = 0` for every `a`.
#[inline]
pub fn signed_power(x: f64, a: f64) -> f64 {
    if a == 0.0 {
        return sgn(x);
    }
    let m = x.abs();
    if m < TINY {
        return 0.0;
    }
    let v = (a * m.ln()).exp();
    if x < 0.0 {
        -v
    } else {
        v
    }
}

/// Order, homogeneity degree, weights and norm exponent of a chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainSpec", into = "ChainSpec")]
pub struct ChainParams {
    r: usize,
    kappa: f64,
    p: Vec<f64>,
    c: f64,
}

/// Serialized form of [`ChainParams`]; weights are always re-derived.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChainSpec {
    order: usize,
    kappa: f64,
    c: f64,
}

impl TryFrom<ChainSpec> for ChainParams {
    type Error = Error;
    fn try_from(s: ChainSpec) -> Result<Self> {
        ChainParams::new(s.order, s.kappa, s.c)
    }
}

impl From<ChainParams> for ChainSpec {
    fn from(p: ChainParams) -> Self {
        ChainSpec {
            order: p.r,
            kappa: p.kappa,
            c: p.c,
        }
    }
}

/// Chain weights `p_i = 1 + (i - 1) kappa`.
pub fn chain_weights(r: usize, kappa: f64) -> Vec<f64> {
    (0..r).map(|i| 1.0 + i as f64 * kappa).collect()
}

/// Largest chain weight over the whole admissible range `kappa in [-1/r, 1/r]`.
pub fn max_weight_over_family(r: usize) -> f64 {
    1.0 + (r as f64 - 1.0) / r as f64
}

/// Checks `kappa in [-1/r, 1/r]` (with a rounding slack) and returns it
/// clamped exactly onto the interval.
pub fn check_kappa(r: usize, kappa: f64) -> Result<f64> {
    if r == 0 {
        return Err(Error::InvalidOrder(r));
    }
    let bound = 1.0 / r as f64;
    if !kappa.is_finite() || kappa < -bound - KAPPA_SLACK || kappa > bound + KAPPA_SLACK {
        return Err(Error::KappaOutOfRange {
            kappa,
            order: r,
            lo: -bound,
            hi: bound,
        });
    }
    Ok(kappa.clamp(-bound, bound))
}

impl ChainParams {
    pub fn new(r: usize, kappa: f64, c: f64) -> Result<Self> {
        let kappa = check_kappa(r, kappa)?;
        let p = chain_weights(r, kappa);
        let max_p = p.iter().cloned().fold(f64::MIN, f64::max);
        if !c.is_finite() || c < max_p {
            return Err(Error::ExponentTooSmall { c, max_p });
        }
        Ok(Self { r, kappa, p, c })
    }

    /// Uses `c = max_i p_i + 1`.
    pub fn with_default_c(r: usize, kappa: f64) -> Result<Self> {
        let kappa = check_kappa(r, kappa)?;
        let max_p = chain_weights(r, kappa)
            .into_iter()
            .fold(f64::MIN, f64::max);
        Self::new(r, kappa, max_p + 1.0)
    }

    /// Same order and exponent, different degree.
    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        Self::new(self.r, kappa, self.c)
    }

    /// The relay member of the family, `kappa = -1/r`.
    pub fn relay(&self) -> Self {
        let kappa = -1.0 / self.r as f64;
        Self {
            r: self.r,
            kappa,
            p: chain_weights(self.r, kappa),
            c: self.c,
        }
    }

    pub fn order(&self) -> usize {
        self.r
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn weights(&self) -> &[f64] {
        &self.p
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn check_state(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.r {
            return Err(Error::DimensionMismatch {
                expected: self.r,
                got: z.len(),
            });
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteState);
        }
        Ok(())
    }

    pub fn dilate(&self, z: &[f64], eps: f64) -> Result<Vec<f64>> {
        dilate_weighted(z, eps, &self.p[..z.len().min(self.r)])
    }

    /// `Gamma_i` of the length-`i` prefix given in `z`.
    pub fn hom_norm(&self, z: &[f64]) -> f64 {
        hom_norm_weighted(z, &self.p[..z.len()], self.c)
    }

    /// `sum_{j <= i} |z_j|^{c/p_j}`, i.e. `Gamma_i^c`.
    pub fn weighted_sum(&self, z: &[f64]) -> f64 {
        weighted_sum(z, &self.p[..z.len()], self.c)
    }
}

/// Applies `z_j -> eps^{p_j} z_j` with arbitrary positive weights.
pub fn dilate_weighted(z: &[f64], eps: f64, p: &[f64]) -> Result<Vec<f64>> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidDilation(eps));
    }
    if p.len() != z.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: z.len(),
        });
    }
    if p.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidWeights);
    }
    let ln_eps = eps.ln();
    Ok(z
        .iter()
        .zip(p)
        .map(|(zi, pi)| (pi * ln_eps).exp() * zi)
        .collect())
}

pub fn weighted_sum(z: &[f64], p: &[f64], c: f64) -> f64 {
    z.iter().zip(p).map(|(zj, pj)| abs_power(*zj, c / pj)).sum()
}

pub fn hom_norm_weighted(z: &[f64], p: &[f64], c: f64) -> f64 {
    let s = weighted_sum(z, p, c);
    if s == 0.0 {
        0.0
    } else {
        s.powf(1.0 / c)
    }
}

/// Radially projects `z` onto `Gamma_i = 1` along the dilation orbit.
///
/// Returns `None` for the zero vector, which has no orbit through the sphere.
pub fn project_to_sphere(z: &[f64], params: &ChainParams) -> Option<Vec<f64>> {
    let g = params.hom_norm(z);
    if !(g.is_finite() && g > 0.0) {
        return None;
    }
    let p = &params.weights()[..z.len()];
    dilate_weighted(z, 1.0 / g, p).ok()
}

const PRIMES: [u64; 16] = [3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59];

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut out = 0.0;
    while k > 0 {
        out += (k % base) as f64 * f;
        k /= base;
        f *= inv;
    }
    out
}

/// Randomly shifted Halton sequence in `[0, 1)^dim`.
#[derive(Debug, Clone)]
pub struct Halton {
    shift: Vec<f64>,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim <= PRIMES.len(), "Halton dimension limited to {}", PRIMES.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            shift: (0..dim).map(|_| rng.gen::<f64>()).collect(),
            index: 1,
        }
    }

    pub fn next_point(&mut self) -> Vec<f64> {
        let k = self.index;
        self.index += 1;
        self.shift
            .iter()
            .zip(PRIMES)
            .map(|(s, b)| (radical_inverse(k, b) + s).fract())
            .collect()
    }
}

/// `n` points on the homogeneous unit sphere `S_i` of `params`.
///
/// Point `k` lies in sign orthant `k mod 2^i`; magnitudes come from a shifted
/// Halton sequence in the coordinates `y_j = |z_j|^{1/p_j}`, where `S_i` is
/// the ordinary `l_c` sphere. Deterministic in `seed`.
pub fn sphere_sample(i: usize, n: usize, params: &ChainParams, seed: u64) -> Vec<Vec<f64>> {
    assert!(i >= 1 && i <= params.order(), "prefix length out of range");
    let mut halton = Halton::new(i, seed);
    let p = &params.weights()[..i];
    let orthants = 1usize << i.min(20);
    let mut out = Vec::with_capacity(n);
    let mut k = 0usize;
    while out.len() < n {
        let h = halton.next_point();
        let o = k % orthants;
        k += 1;
        let z: Vec<f64> = h
            .iter()
            .zip(p)
            .enumerate()
            .map(|(j, (hj, pj))| {
                let s = if (o >> j) & 1 == 1 { -1.0 } else { 1.0 };
                // keep magnitudes away from exact zero so every point has a well-defined orbit
                s * abs_power(hj.max(1e-9), *pj)
            })
            .collect();
        if let Some(x) = project_to_sphere(&z, params) {
            out.push(x);
        }
    }
    out
}

/// Log-uniform dilation factors in `[lo, hi]`, deterministic in `seed`.
pub fn random_dilations(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|_| (a + (b - a) * rng.gen::<f64>()).exp()).collect()
}
