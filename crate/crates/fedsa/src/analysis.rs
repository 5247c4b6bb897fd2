//! Closed-form references and measurements: the heterogeneity-bias limit
//! of uncorrected two-step averaging, trailing-window error floors,
//! speedup slopes over fleet size, enumeration oracles, and the constants
//! entering the convergence bound.

use serde::{Deserialize, Serialize};

use crate::algorithms::{FederatedConfig, RunTrace};
use crate::error::{Error, Result};
use crate::markov::{mixing_time, FiniteMarkovChain};
use crate::numerics::{axpy, solve_linear, spectral_radius, vec_sub, Matrix};
use crate::operators::{measure_constants, Agent, ProblemFleet, SamplingMode};

/// The round map must be Schur-stable with at least this margin.
pub const SCHUR_TOL: f64 = 1e-9;

/// Trailing-window share used for floor estimates when the caller has no
/// preference; past the exponential-decay phase for the stock experiments.
pub const DEFAULT_FLOOR_WINDOW: f64 = 0.2;

/// Closed-form limit of uncorrected averaging with two local steps.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Prop1Report {
    /// Round map of the averaged error: I + 2 eta Abar + eta^2 Abar2.
    pub f: Matrix,
    pub schur_radius: f64,
    /// Bias direction: (1/M)(2 Abar + eta Abar2)^-1 sum_i L_i^2 (theta_i* - theta*).
    pub v: Vec<f64>,
    /// eta * v, where the averaged iterates settle relative to the root.
    pub predicted_limit_error: Vec<f64>,
    /// theta* + eta * v.
    pub predicted_limit_point: Vec<f64>,
}

/// Plateau height of d_t over the trailing window, averaged across seeds.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FloorEstimate {
    pub floor: f64,
    pub window_fraction: f64,
    pub n_seeds: usize,
    /// Across-seed standard error; 0 for a single seed.
    pub stderr: f64,
}

/// Every symbol in the convergence bound, measured on a concrete fleet.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TheoremIngredients {
    /// Effective round step H * eta * alpha_g.
    pub alpha: f64,
    /// Worst-agent mixing time at epsilon = alpha^2; 0 under iid or
    /// noiseless sampling (already stationary), and 0 when alpha^2 >= 1.
    pub tau_bar: usize,
    /// Worst-agent geometric mixing rate.
    pub rho_hat: f64,
    pub l_hat: f64,
    pub mu_hat: f64,
    pub sigma_hat: f64,
}

/// Ordinary least-squares line with its coefficient of determination.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Predicts where noiseless uncorrected averaging with H = 2 settles.
///
/// Every agent's mean operator is affine, G_i(theta) = L_i theta + c_i
/// with L_i Hurwitz (for quadratic agents L_i = -A_i) and local root
/// theta_i*. One round maps the averaged error e = theta_bar - theta*
/// through e <- F e + (eta^2/M) sum_i L_i^2 (theta* - theta_i*), so the
/// fixed point sits at eta*v instead of at the fleet root.
pub fn prop1_limit(fleet: &ProblemFleet, eta: f64) -> Result<Prop1Report> {
    if !eta.is_finite() || eta <= 0.0 {
        return Err(Error::InvalidParam(format!("eta {eta} must be positive")));
    }
    let m = fleet.num_agents();
    let d = fleet.dim;
    let theta_star = fleet.mean_affine().root()?;
    let mut a_bar = Matrix::zeros(d, d);
    let mut a_sq_bar = Matrix::zeros(d, d);
    let mut rhs = vec![0.0; d];
    for agent in &fleet.agents {
        let affine = agent.affine();
        let square = affine.linear.matmul(&affine.linear);
        let root = affine.root()?;
        a_bar.add_scaled(&affine.linear, 1.0);
        a_sq_bar.add_scaled(&square, 1.0);
        axpy(&mut rhs, 1.0, &square.matvec(&vec_sub(&root, &theta_star)));
    }
    let scale = 1.0 / m as f64;
    let a_bar = a_bar.scale(scale);
    let a_sq_bar = a_sq_bar.scale(scale);
    for x in &mut rhs {
        *x *= scale;
    }
    let mut f = Matrix::identity(d);
    f.add_scaled(&a_bar, 2.0 * eta);
    f.add_scaled(&a_sq_bar, eta * eta);
    let schur_radius = spectral_radius(&f);
    if schur_radius >= 1.0 - SCHUR_TOL {
        return Err(Error::NotSchurStable { radius: schur_radius });
    }
    let mut lhs = a_bar.scale(2.0);
    lhs.add_scaled(&a_sq_bar, eta);
    let v = solve_linear(&lhs, &rhs)?;
    let predicted_limit_error: Vec<f64> = v.iter().map(|x| eta * x).collect();
    let mut predicted_limit_point = theta_star;
    axpy(&mut predicted_limit_point, 1.0, &predicted_limit_error);
    Ok(Prop1Report { f, schur_radius, v, predicted_limit_error, predicted_limit_point })
}

/// Mean d_t over the trailing window of each trace, then mean and
/// standard error of those per-seed values.
pub fn error_floor(traces: &[RunTrace], window_fraction: f64) -> Result<FloorEstimate> {
    if traces.is_empty() {
        return Err(Error::EmptyInput("error_floor needs at least one trace".into()));
    }
    if !(window_fraction > 0.0 && window_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "window fraction {window_fraction} not in (0, 1]"
        )));
    }
    let len = traces[0].rows.len();
    if len == 0 {
        return Err(Error::EmptyInput("traces have no rows".into()));
    }
    if let Some(bad) = traces.iter().find(|t| t.rows.len() != len) {
        return Err(Error::InvalidInput(format!(
            "traces must share a length: {} vs {}",
            len,
            bad.rows.len()
        )));
    }
    let window = ((window_fraction * len as f64).ceil() as usize).clamp(1, len);
    let per_seed: Vec<f64> = traces
        .iter()
        .map(|t| t.rows[len - window..].iter().map(|r| r.d_t).sum::<f64>() / window as f64)
        .collect();
    let n = per_seed.len();
    let floor = per_seed.iter().sum::<f64>() / n as f64;
    let stderr = if n < 2 {
        0.0
    } else {
        let var = per_seed.iter().map(|x| (x - floor).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    Ok(FloorEstimate { floor, window_fraction, n_seeds: n, stderr })
}

/// Least-squares slope of log(floor) against log(M).
pub fn speedup_slope(floors: &[(usize, f64)]) -> Result<f64> {
    let mut sizes: Vec<usize> = floors.iter().map(|&(m, _)| m).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "speedup slope needs >= 3 distinct fleet sizes, got {}",
            sizes.len()
        )));
    }
    if let Some(&(m, floor)) = floors.iter().find(|&&(m, f)| m == 0 || !f.is_finite() || f <= 0.0) {
        return Err(Error::InvalidInput(format!(
            "floors must be positive: M = {m} has floor {floor}"
        )));
    }
    let xs: Vec<f64> = floors.iter().map(|&(m, _)| (m as f64).ln()).collect();
    let ys: Vec<f64> = floors.iter().map(|&(_, f)| f.ln()).collect();
    Ok(linear_fit(&xs, &ys)?.slope)
}

/// Ordinary least squares of ys against xs. Residual-free flat data gets
/// r2 = 1 (the fit explains everything there is to explain).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch { left: xs.len(), right: ys.len() });
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("line fit needs >= 2 points, got {n}")));
    }
    if xs.iter().chain(ys).any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("line fit needs finite inputs".into()));
    }
    let x_mean = xs.iter().sum::<f64>() / n as f64;
    let y_mean = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("line fit needs >= 2 distinct x values".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - (intercept + slope * x)).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - y_mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(LineFit { slope, intercept, r2 })
}

/// Exact probability-weighted mean update over the whole observation
/// space, for agents whose observation space is finite.
pub fn exact_expectation_oracle(agent: &Agent, theta: &[f64]) -> Result<Vec<f64>> {
    agent.enumerated_expectation(theta)
}

/// Measures every constant of the convergence bound on a concrete fleet
/// and configuration.
pub fn theorem_ingredients(fleet: &ProblemFleet, config: &FederatedConfig) -> Result<TheoremIngredients> {
    let constants = measure_constants(fleet)?;
    let alpha = config.effective_alpha()?;
    let epsilon = alpha * alpha;
    let (tau_bar, rho_hat) = match config.sampling_mode {
        SamplingMode::Noiseless | SamplingMode::Iid => (0, 0.0),
        SamplingMode::Markov => {
            let mut tau_bar = 0usize;
            let mut rho_hat = 0.0f64;
            for agent in &fleet.agents {
                let (tau, rho) = agent_mixing(agent, epsilon)?;
                tau_bar = tau_bar.max(tau);
                rho_hat = rho_hat.max(rho);
            }
            (tau_bar, rho_hat)
        }
    };
    Ok(TheoremIngredients {
        alpha,
        tau_bar,
        rho_hat,
        l_hat: constants.l_hat,
        mu_hat: constants.mu_hat,
        sigma_hat: constants.sigma_hat,
    })
}

/// Advisory step size mu / (10 tau L^2 H), reported alongside runs but
/// never enforced; tau counts as 1 when sampling is already stationary.
pub fn eta_suggest(ingredients: &TheoremIngredients, h: usize) -> f64 {
    let tau = ingredients.tau_bar.max(1) as f64;
    ingredients.mu_hat / (10.0 * tau * ingredients.l_hat * ingredients.l_hat * h.max(1) as f64)
}

/// Mixing time and rate of one agent's observation process at the given
/// TV target. Gauss-Markov noise has no finite state space, so its time
/// is model-derived from the rho_q^t envelope rather than TV-measured.
fn agent_mixing(agent: &Agent, epsilon: f64) -> Result<(usize, f64)> {
    match agent {
        Agent::Quadratic(q) => {
            let rho_q = spectral_radius(q.noise().q());
            if epsilon >= 1.0 || rho_q <= 0.0 {
                return Ok((0, rho_q));
            }
            let tau = (epsilon.ln() / rho_q.ln()).ceil().max(0.0) as usize;
            Ok((tau, rho_q))
        }
        Agent::Mrp(a) => chain_mixing(a.chain(), epsilon),
        Agent::FiniteSum(a) => chain_mixing(a.index_chain(), epsilon),
    }
}

fn chain_mixing(chain: &FiniteMarkovChain, epsilon: f64) -> Result<(usize, f64)> {
    if epsilon >= 1.0 {
        // Already within target at t = 0; measure the rate at a nominal
        // epsilon just to report it.
        let report = mixing_time(chain, 0.25)?;
        return Ok((0, report.rho_hat));
    }
    let report = mixing_time(chain, epsilon)?;
    Ok((report.tau, report.rho_hat))
}
