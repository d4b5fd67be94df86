//! Sparsifying message compressors.
//!
//! A compressor Q maps a d-vector to a d-vector supported on at most k
//! coordinates, keeping the retained entries bit-exact. Both operators here
//! satisfy the contraction property E‖x − Q(x)‖² ≤ (1 − δ)‖x‖² with
//! δ = k/d: deterministically for top-k, in expectation (with equality) for
//! rand-k. rand-k deliberately does not rescale by 1/δ; the consensus step
//! size γ absorbs the bias.
//!
//! Payload accounting charges k floats per message. Sparse messages also
//! carry k coordinate indices; those are reported separately (one 32-bit
//! unit each) and excluded from the default budget.

use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompressorKind {
    /// Pass-through; Q(x) = x.
    Identity,
    /// Keep the k entries of largest magnitude (ties keep the lowest index).
    TopK,
    /// Keep a uniformly random k-subset of coordinates, unscaled.
    RandK,
}

/// A compressor bound to a concrete dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompressorSpec {
    kind: CompressorKind,
    k: usize,
    d: usize,
}

impl CompressorSpec {
    pub fn identity(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d", "dimension must be positive"));
        }
        Ok(CompressorSpec {
            kind: CompressorKind::Identity,
            k: d,
            d,
        })
    }

    pub fn top_k(k: usize, d: usize) -> Result<Self> {
        Self::sparsifier(CompressorKind::TopK, k, d)
    }

    pub fn rand_k(k: usize, d: usize) -> Result<Self> {
        Self::sparsifier(CompressorKind::RandK, k, d)
    }

    fn sparsifier(kind: CompressorKind, k: usize, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("d", "dimension must be positive"));
        }
        if k == 0 || k > d {
            return Err(Error::invalid(
                "k",
                format!("must satisfy 1 <= k <= d, got k={k}, d={d}"),
            ));
        }
        Ok(CompressorSpec { kind, k, d })
    }

    pub fn kind(&self) -> CompressorKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Contraction parameter δ = k/d (1 for identity).
    pub fn delta(&self) -> f64 {
        self.k as f64 / self.d as f64
    }

    /// Floats per message, values only.
    pub fn payload_floats(&self) -> usize {
        self.k
    }

    /// Floats per message counting coordinate indices as one 32-bit unit
    /// each; identity messages are dense and carry no indices.
    pub fn payload_floats_with_indices(&self) -> usize {
        match self.kind {
            CompressorKind::Identity => self.d,
            CompressorKind::TopK | CompressorKind::RandK => 2 * self.k,
        }
    }

    /// Apply Q to x. The stream is consumed only by rand-k.
    pub fn compress(&self, x: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
                context: "compressor input",
            });
        }
        match self.kind {
            CompressorKind::Identity => Ok(x.to_vec()),
            CompressorKind::TopK => {
                if self.k == self.d {
                    return Ok(x.to_vec());
                }
                let mut order: Vec<usize> = (0..self.d).collect();
                order.sort_unstable_by(|&a, &b| {
                    x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b))
                });
                let mut out = vec![0.0; self.d];
                for &i in &order[..self.k] {
                    out[i] = x[i];
                }
                Ok(out)
            }
            CompressorKind::RandK => {
                let mut out = vec![0.0; self.d];
                if self.k == self.d {
                    out.copy_from_slice(x);
                    return Ok(out);
                }
                for i in rand::seq::index::sample(rng, self.d, self.k) {
                    out[i] = x[i];
                }
                Ok(out)
            }
        }
    }

    /// Monte Carlo estimate of E‖x − Q(x)‖² / ‖x‖² over `trials`
    /// applications. Deterministic compressors return the exact ratio.
    pub fn empirical_contraction(
        &self,
        x: &[f64],
        trials: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        if trials == 0 {
            return Err(Error::invalid("trials", "need at least one trial"));
        }
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        if norm2 == 0.0 {
            return Err(Error::ZeroVector);
        }
        let mut acc = 0.0;
        for _ in 0..trials {
            let q = self.compress(x, rng)?;
            acc += x
                .iter()
                .zip(&q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        Ok(acc / (trials as f64 * norm2))
    }
}

/// A compressor selection that still needs a dimension, as parsed from a
/// config string:
///
/// - `identity`
/// - `top_k:R` / `rand_k:R` with ratio R in (0, 1]; k = round(R·d), min 1
/// - `top_k@K` / `rand_k@K` with absolute K
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompressorConfig {
    Identity,
    TopRatio(f64),
    TopAbsolute(usize),
    RandRatio(f64),
    RandAbsolute(usize),
}

impl CompressorConfig {
    pub fn parse(s: &str) -> Result<Self> {
        let bad = |reason: &str| Error::Parse {
            input: s.to_string(),
            what: "compressor",
            reason: reason.to_string(),
        };
        let s = s.trim();
        if s == "identity" {
            return Ok(CompressorConfig::Identity);
        }
        let (kind, rest) = s
            .split_once([':', '@'])
            .ok_or_else(|| bad("expected `identity`, `top_k:R`, `top_k@K`, `rand_k:R`, or `rand_k@K`"))?;
        let absolute = s.contains('@');
        match (kind, absolute) {
            ("top_k", false) | ("rand_k", false) => {
                let r: f64 = rest.parse().map_err(|_| bad("ratio is not a number"))?;
                if !(r > 0.0 && r <= 1.0) {
                    return Err(bad("ratio must be in (0, 1]"));
                }
                Ok(if kind == "top_k" {
                    CompressorConfig::TopRatio(r)
                } else {
                    CompressorConfig::RandRatio(r)
                })
            }
            ("top_k", true) | ("rand_k", true) => {
                let k: usize = rest.parse().map_err(|_| bad("k is not an integer"))?;
                Ok(if kind == "top_k" {
                    CompressorConfig::TopAbsolute(k)
                } else {
                    CompressorConfig::RandAbsolute(k)
                })
            }
            _ => Err(bad("unknown compressor kind")),
        }
    }

    /// Resolve against dimension d. Ratios round to the nearest k, clamped
    /// into [1, d].
    pub fn build(&self, d: usize) -> Result<CompressorSpec> {
        let from_ratio = |r: f64| ((r * d as f64).round() as usize).clamp(1, d.max(1));
        match *self {
            CompressorConfig::Identity => CompressorSpec::identity(d),
            CompressorConfig::TopRatio(r) => CompressorSpec::top_k(from_ratio(r), d),
            CompressorConfig::RandRatio(r) => CompressorSpec::rand_k(from_ratio(r), d),
            CompressorConfig::TopAbsolute(k) => CompressorSpec::top_k(k, d),
            CompressorConfig::RandAbsolute(k) => CompressorSpec::rand_k(k, d),
        }
    }
}

impl std::fmt::Display for CompressorConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CompressorConfig::Identity => write!(f, "identity"),
            CompressorConfig::TopRatio(r) => write!(f, "top_k:{r}"),
            CompressorConfig::TopAbsolute(k) => write!(f, "top_k@{k}"),
            CompressorConfig::RandRatio(r) => write!(f, "rand_k:{r}"),
            CompressorConfig::RandAbsolute(k) => write!(f, "rand_k@{k}"),
        }
    }
}
