//! Observation processes: finite ergodic Markov chains and Gauss-Markov
//! AR(1) noise, plus the seeded streams that drive them.

pub mod gauss;
pub mod rng;

pub use gauss::{gm_step, GaussMarkovProcess};
pub use rng::RngStream;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{solve_linear, Matrix};

/// Row-sum slack accepted by `validate_chain`.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// TV values below this are treated as exactly mixed when fitting rho_hat.
const TV_FLOOR: f64 = 1e-13;

/// A validated ergodic chain: row-stochastic, irreducible, aperiodic.
/// The stationary distribution is computed once at validation.
///
/// Serializes as the bare transition matrix; deserialization re-validates,
/// so a chain loaded from an instance file carries the same guarantees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct FiniteMarkovChain {
    transition: Matrix,
    stationary: Vec<f64>,
}

impl TryFrom<Matrix> for FiniteMarkovChain {
    type Error = String;

    fn try_from(p: Matrix) -> std::result::Result<Self, String> {
        validate_chain(p).map_err(|e| e.to_string())
    }
}

impl From<FiniteMarkovChain> for Matrix {
    fn from(c: FiniteMarkovChain) -> Matrix {
        c.transition
    }
}

impl FiniteMarkovChain {
    pub fn num_states(&self) -> usize {
        self.transition.rows()
    }

    pub fn transition(&self) -> &Matrix {
        &self.transition
    }

    /// Stationary distribution pi with pi P = pi, entries > 0, sum 1.
    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }
}

/// Checks row-stochasticity, irreducibility (reachability closure), and
/// aperiodicity (some power of the adjacency pattern is strictly positive;
/// powers are checked by repeated squaring up to the Wielandt exponent
/// (S-1)^2 + 1, past which a primitive pattern must have turned positive).
///
/// Single-state chains are accepted as trivially ergodic; index chains over
/// one component arise in the finite-sum family.
pub fn validate_chain(p: Matrix) -> Result<FiniteMarkovChain> {
    if !p.is_square() {
        return Err(Error::dim(format!("transition matrix is {}x{}", p.rows(), p.cols())));
    }
    let s = p.rows();
    for r in 0..s {
        let mut sum = 0.0;
        for c in 0..s {
            let v = p[(r, c)];
            if v < 0.0 {
                return Err(Error::NotStochastic {
                    row: r,
                    reason: format!("negative entry {v:.3e} at column {c}"),
                });
            }
            sum += v;
        }
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::NotStochastic { row: r, reason: format!("sums to {sum:.17}") });
        }
    }

    let edge: Vec<Vec<bool>> =
        (0..s).map(|r| (0..s).map(|c| p[(r, c)] > 0.0).collect()).collect();

    // Warshall closure for mutual reachability.
    let mut reach = edge.clone();
    for k in 0..s {
        let via = reach[k].clone();
        for row in reach.iter_mut() {
            if row[k] {
                for (j, &through) in via.iter().enumerate() {
                    if through {
                        row[j] = true;
                    }
                }
            }
        }
    }
    for (i, row) in reach.iter().enumerate() {
        for (j, &ok) in row.iter().enumerate() {
            if i != j && !ok {
                return Err(Error::Reducible { from: i, to: j });
            }
        }
    }

    let wielandt = (s - 1) * (s - 1) + 1;
    let mut pattern = edge;
    let mut exponent = 1usize;
    loop {
        if pattern.iter().all(|row| row.iter().all(|&b| b)) {
            break;
        }
        if exponent >= wielandt {
            return Err(Error::Periodic { checked: exponent });
        }
        pattern = bool_matmul(&pattern, &pattern);
        exponent *= 2;
    }

    let stationary = solve_stationary(&p)?;
    Ok(FiniteMarkovChain { transition: p, stationary })
}

fn bool_matmul(a: &[Vec<bool>], b: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = a.len();
    let mut out = vec![vec![false; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] {
                for j in 0..n {
                    if b[k][j] {
                        out[i][j] = true;
                    }
                }
            }
        }
    }
    out
}

/// Solves (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
fn solve_stationary(p: &Matrix) -> Result<Vec<f64>> {
    let s = p.rows();
    let mut a = Matrix::from_fn(s, s, |r, c| {
        if r == s - 1 {
            1.0
        } else {
            p[(c, r)] - if r == c { 1.0 } else { 0.0 }
        }
    });
    let mut b = vec![0.0; s];
    b[s - 1] = 1.0;
    if s == 1 {
        a[(0, 0)] = 1.0;
    }
    let mut pi = solve_linear(&a, &b)?;
    for v in pi.iter_mut() {
        // Solver roundoff can leave -1e-17-scale entries on near-degenerate
        // chains; true negatives cannot occur for validated ergodic chains.
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    for v in pi.iter_mut() {
        *v /= total;
    }
    Ok(pi)
}

/// Convenience accessor matching the chain's construction-time computation.
pub fn stationary_distribution(chain: &FiniteMarkovChain) -> &[f64] {
    chain.stationary()
}

/// Total variation distance (1/2) sum |p_i - q_i|.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch { left: p.len(), right: q.len() });
    }
    debug_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9, "p must sum to 1");
    debug_assert!((q.iter().sum::<f64>() - 1.0).abs() <= 1e-9, "q must sum to 1");
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Worst-case TV mixing diagnostics for one chain at one epsilon.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MixingReport {
    pub epsilon: f64,
    /// Smallest t with max_s TV(P^t(s, .), pi) <= epsilon.
    pub tau: usize,
    /// Geometric decay rate fitted to the recorded TV curve.
    pub rho_hat: f64,
    /// (t, worst-case TV) from t = 0 until the curve hits the fit floor.
    pub worst_tv_by_step: Vec<(usize, f64)>,
}

/// Tracks the worst-case (over start states) TV distance of P^t rows to the
/// stationary distribution. Records the full decay curve down to 1e-13 (for
/// the rho_hat fit), capped at 10 S^2 steps.
pub fn mixing_time(chain: &FiniteMarkovChain, epsilon: f64) -> Result<MixingReport> {
    if !(0.0 < epsilon && epsilon < 1.0) {
        return Err(Error::InvalidParam(format!("mixing epsilon {epsilon} not in (0, 1)")));
    }
    let s = chain.num_states();
    let cap = 10 * s * s;
    let pi = chain.stationary();
    let mut power = Matrix::identity(s);
    let mut curve: Vec<(usize, f64)> = Vec::new();
    let mut tau: Option<usize> = None;
    for t in 0..=cap {
        let worst = (0..s)
            .map(|r| tv_distance(power.row(r), pi).expect("matching lengths"))
            .fold(0.0_f64, f64::max);
        curve.push((t, worst));
        if tau.is_none() && worst <= epsilon {
            tau = Some(t);
        }
        if worst < TV_FLOOR {
            break;
        }
        if t < cap {
            power = power.matmul(chain.transition());
        }
    }
    let tau = tau.ok_or(Error::DidNotMix { epsilon, max_steps: cap })?;
    Ok(MixingReport { epsilon, tau, rho_hat: fit_rho(&curve), worst_tv_by_step: curve })
}

/// Least-squares slope of log TV against t over the decaying range.
/// A chain that mixes exactly in one step leaves nothing to fit; the rate
/// is then reported as the smallest positive value (decay faster than any
/// geometric envelope).
fn fit_rho(curve: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .filter(|(_, v)| *v >= TV_FLOOR)
        .map(|(t, v)| (*t as f64, v.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::MIN_POSITIVE;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = pts.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    slope.exp().clamp(f64::MIN_POSITIVE, 1.0 - 1e-12)
}

/// One inverse-CDF draw from a probability vector; consumes exactly one
/// uniform. If u lands beyond the accumulated mass (roundoff in the row
/// sum), the last positive-mass index is taken.
pub fn sample_from(weights: &[f64], rng: &mut RngStream) -> usize {
    let u = rng.next_f64();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (j, &pj) in weights.iter().enumerate() {
        if pj > 0.0 {
            last_positive = j;
            acc += pj;
            if u < acc {
                return j;
            }
        }
    }
    last_positive
}

/// One inverse-CDF draw from row `state`; consumes exactly one uniform.
pub fn sample_next(chain: &FiniteMarkovChain, state: usize, rng: &mut RngStream) -> Result<usize> {
    let s = chain.num_states();
    if state >= s {
        return Err(Error::StateOutOfRange { state, num_states: s });
    }
    Ok(sample_from(chain.transition().row(state), rng))
}
