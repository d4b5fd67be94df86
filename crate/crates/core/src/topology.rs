//! Mixing matrices and their spectral diagnostics.
//!
//! A gossip round averages neighbor values through a mixing matrix W that is
//! symmetric, doubly stochastic, and has strictly positive self-loops. Two
//! scalars govern everything downstream:
//!
//! - the spectral gap `rho = 1 − max|λ|` over the non-principal eigenvalues
//!   of W, which sets how fast W contracts disagreement: for any x,
//!   ‖Wx − x̄1‖ ≤ (1 − rho)‖x − x̄1‖;
//! - `omega_bar = max_λ |λ − 1| = ‖W − I‖`, the operator norm of the gossip
//!   increment, which bounds how hard a single round can move a value.
//!
//! Both are computed by a full symmetric eigendecomposition; an independent
//! power-iteration oracle cross-checks them in the test suite.

use nalgebra::DMatrix;

use crate::error::Error;
use crate::Result;

/// Row/column sums may deviate from 1 by at most this much before a matrix
/// is rejected as not doubly stochastic.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Tolerated asymmetry |W[i][j] − W[j][i]| in supplied matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// A validated gossip matrix together with its spectral quantities and
/// adjacency structure.
#[derive(Debug, Clone)]
pub struct MixingMatrix {
    n: usize,
    weights: Vec<f64>,
    rho: f64,
    omega_bar: f64,
    degenerate: bool,
    neighbors: Vec<Vec<usize>>,
}

impl MixingMatrix {
    /// Ring of n agents: each averages itself and its two neighbors with
    /// weight 1/3 (n = 2 collapses to the pair average, n = 1 to identity).
    pub fn ring(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "topology needs at least one agent"));
        }
        let mut w = vec![0.0; n * n];
        match n {
            1 => w[0] = 1.0,
            2 => w.copy_from_slice(&[0.5, 0.5, 0.5, 0.5]),
            _ => {
                for i in 0..n {
                    w[i * n + i] = 1.0 / 3.0;
                    w[i * n + (i + 1) % n] = 1.0 / 3.0;
                    w[i * n + (i + n - 1) % n] = 1.0 / 3.0;
                }
            }
        }
        Self::from_weights(n, w)
    }

    /// Complete graph: W = (1/n) 11ᵀ, one round reaches exact consensus.
    pub fn complete(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "topology needs at least one agent"));
        }
        Self::from_weights(n, vec![1.0 / n as f64; n * n])
    }

    /// Validate an arbitrary row-major matrix and compute its spectra.
    ///
    /// Rejects wrong sizes, negative entries, row/column sums off by more
    /// than [`STOCHASTIC_TOL`], asymmetry beyond [`SYMMETRY_TOL`], zero
    /// self-loops, and disconnected networks (no positive spectral gap).
    pub fn from_weights(n: usize, weights: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "topology needs at least one agent"));
        }
        if weights.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: weights.len(),
                context: "mixing matrix entries",
            });
        }
        for (idx, &v) in weights.iter().enumerate() {
            if !v.is_finite() || v < 0.0 || v > 1.0 + STOCHASTIC_TOL {
                return Err(Error::invalid(
                    "weights",
                    format!("entry [{}][{}] = {v} outside [0, 1]", idx / n, idx % n),
                ));
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let dev = (weights[i * n + j] - weights[j * n + i]).abs();
                if dev > SYMMETRY_TOL {
                    return Err(Error::NotSymmetric { i, j, dev });
                }
            }
        }
        for i in 0..n {
            let row: f64 = weights[i * n..(i + 1) * n].iter().sum();
            if (row - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotDoublyStochastic(format!(
                    "row {i} sums to {row}"
                )));
            }
            let col: f64 = (0..n).map(|r| weights[r * n + i]).sum();
            if (col - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::NotDoublyStochastic(format!(
                    "column {i} sums to {col}"
                )));
            }
            if weights[i * n + i] <= 0.0 {
                return Err(Error::invalid(
                    "weights",
                    format!("self-loop W[{i}][{i}] must be positive"),
                ));
            }
        }

        let (rho, omega_bar) = spectra_of_validated(n, &weights);
        if n > 1 && rho <= 1e-9 {
            return Err(Error::NotConnected);
        }
        let neighbors = (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && weights[i * n + j] > 0.0)
                    .collect()
            })
            .collect();
        Ok(MixingMatrix {
            n,
            weights,
            rho,
            omega_bar,
            degenerate: n == 1,
            neighbors,
        })
    }

    /// Parse a whitespace-separated matrix: one row per line, n columns.
    pub fn from_text(text: &str) -> Result<Self> {
        let rows: Vec<Vec<f64>> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|line| {
                line.split_whitespace()
                    .map(|tok| {
                        tok.parse::<f64>().map_err(|e| Error::Parse {
                            input: tok.to_string(),
                            what: "matrix entry",
                            reason: e.to_string(),
                        })
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("matrix", "no rows found"));
        }
        let mut weights = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                    context: if i == 0 { "matrix row" } else { "matrix row (vs row count)" },
                });
            }
            weights.extend_from_slice(row);
        }
        Self::from_weights(n, weights)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Entry W[i][j].
    pub fn w(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Spectral gap, in (0, 1]. A single agent has no non-principal
    /// eigenvalues; its gap is reported as 1.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// ‖W − I‖ = max |λ − 1|; zero only for the single-agent network.
    pub fn omega_bar(&self) -> f64 {
        self.omega_bar
    }

    /// True for the single-agent network, whose omega_bar is 0 and cannot
    /// feed the step-size formulas.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Neighbors of agent i, excluding i itself, ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Neighbors of agent i including i, ascending. This is the set of
    /// agents that hold replicas of i's compressed reference copies.
    pub fn closed_neighborhood(&self, i: usize) -> Vec<usize> {
        let mut hood = self.neighbors[i].clone();
        let pos = hood.partition_point(|&j| j < i);
        hood.insert(pos, i);
        hood
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Σ_i deg(i), the number of directed edges a broadcast round uses.
    pub fn sum_degrees(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }
}

/// Validate a row-major matrix and return (rho, omega_bar) without keeping
/// the adjacency structure.
pub fn spectral_quantities(n: usize, weights: &[f64]) -> Result<(f64, f64)> {
    let m = MixingMatrix::from_weights(n, weights.to_vec())?;
    Ok((m.rho, m.omega_bar))
}

/// Eigendecomposition of an already-validated matrix. The principal
/// eigenvalue of a connected doubly stochastic W is exactly 1 (eigenvector
/// 1/√n); rho excludes one occurrence of it, omega_bar ranges over all.
fn spectra_of_validated(n: usize, weights: &[f64]) -> (f64, f64) {
    if n == 1 {
        return (1.0, 0.0);
    }
    let m = DMatrix::from_row_slice(n, n, weights);
    let eig = m.symmetric_eigen();
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    // Largest value is the principal eigenvalue (≈ 1 up to roundoff).
    let principal = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let omega_bar = vals.iter().map(|&l| (l - 1.0).abs()).fold(0.0, f64::max);
    vals.swap_remove(principal);
    let second = vals.iter().map(|&l| l.abs()).fold(0.0, f64::max);
    let rho = (1.0 - second).clamp(0.0, 1.0);
    (rho, omega_bar)
}
