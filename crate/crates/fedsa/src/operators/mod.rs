//! Agent-local operators: the noisy/expected operator abstraction, the
//! three concrete problem families, fleet-level aggregation, measured
//! problem constants, and instance-file serialization.

pub mod finite_sum;
pub mod generate;
pub mod mrp;
pub mod quadratic;

pub use finite_sum::{Component, FiniteSumAgent};
pub use generate::{
    gen_finitesum_fleet, gen_mrp_fleet, gen_quadratic_fleet, FiniteSumParams, GeneratorParams,
    MrpParams, NoiseConfig, QuadraticParams,
};
pub use mrp::MrpAgent;
pub use quadratic::QuadraticAgent;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::RngStream;
use crate::numerics::{self, Matrix};

/// How `noisy` realizes its observation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// noisy(theta) = expected(theta) exactly; no draws consumed.
    Noiseless,
    /// Observation drawn fresh from the stationary law at every step.
    Iid,
    /// Observation process advanced one step per draw.
    #[default]
    Markov,
}

/// How an agent's observation state is initialized before a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitKind {
    /// z = 0 / state 0 / index 0: a worst-case deterministic start.
    Deterministic,
    /// Drawn from the stationary law of the observation process.
    Stationary,
}

/// Mean-path operator in affine form: G(theta) = linear * theta + offset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AffineOperator {
    pub linear: Matrix,
    pub offset: Vec<f64>,
}

impl AffineOperator {
    pub fn apply(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = self.linear.matvec(theta);
        numerics::axpy(&mut out, 1.0, &self.offset);
        out
    }

    /// The root: solves linear * theta = -offset.
    pub fn root(&self) -> Result<Vec<f64>> {
        numerics::solve_linear(&self.linear.scale(-1.0), &self.offset)
    }
}

/// Contract shared by all agent families.
///
/// `expected` is the mean-path operator (observation averaged out);
/// `noisy` evaluates at a new observation, advancing the observation
/// process exactly once (except in noiseless mode); `peek_noisy`
/// re-evaluates at the current observation without advancing anything.
pub trait AgentOperator {
    fn dim(&self) -> usize;
    fn expected(&self, theta: &[f64]) -> Result<Vec<f64>>;
    fn noisy(&mut self, theta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>>;
    fn peek_noisy(&self, theta: &[f64]) -> Result<Vec<f64>>;
}

/// One agent of any family. Serialized with a `family` tag inside instance
/// files; runtime-only state (sampling mode, draw counter) is not persisted.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Agent {
    Quadratic(QuadraticAgent),
    Mrp(MrpAgent),
    FiniteSum(FiniteSumAgent),
}

macro_rules! each_agent {
    ($self:expr, $inner:ident => $body:expr) => {
        match $self {
            Agent::Quadratic($inner) => $body,
            Agent::Mrp($inner) => $body,
            Agent::FiniteSum($inner) => $body,
        }
    };
}

impl Agent {
    pub fn family(&self) -> Family {
        match self {
            Agent::Quadratic(_) => Family::Quadratic,
            Agent::Mrp(_) => Family::Mrp,
            Agent::FiniteSum(_) => Family::FiniteSum,
        }
    }

    pub fn set_mode(&mut self, mode: SamplingMode) {
        each_agent!(self, a => a.set_mode(mode))
    }

    pub fn mode(&self) -> SamplingMode {
        each_agent!(self, a => a.mode())
    }

    /// Resets the observation state; `Stationary` draws from the process's
    /// stationary law using `rng`.
    pub fn init_state(&mut self, kind: InitKind, rng: &mut RngStream) -> Result<()> {
        each_agent!(self, a => a.init_state(kind, rng))
    }

    /// Observation-process advances performed so far (markov/iid draws).
    pub fn draw_count(&self) -> u64 {
        each_agent!(self, a => a.draw_count())
    }

    /// Exact affine form of the expected operator.
    pub fn affine(&self) -> AffineOperator {
        each_agent!(self, a => a.affine())
    }

    /// Root of this agent's own expected operator.
    pub fn local_root(&self) -> Result<Vec<f64>> {
        self.affine().root()
    }

    /// Largest Lipschitz constant of theta -> noisy(theta, o) over single
    /// observations o (for quadratic agents the noise is additive, so this
    /// is the norm of the mean linear part).
    pub fn per_observation_lipschitz(&self) -> Result<f64> {
        each_agent!(self, a => a.per_observation_lipschitz())
    }

    /// Probability-weighted sum of G(theta, o) over the whole observation
    /// space under the stationary law. Continuous observation spaces
    /// (quadratic family) report NotEnumerable.
    pub fn enumerated_expectation(&self, theta: &[f64]) -> Result<Vec<f64>> {
        each_agent!(self, a => a.enumerated_expectation(theta))
    }

    /// Largest |G(theta, o) - expected(theta)| over the observation space;
    /// NotEnumerable for continuous spaces.
    pub fn noise_radius_at(&self, theta: &[f64]) -> Result<f64> {
        each_agent!(self, a => a.noise_radius_at(theta))
    }
}

impl AgentOperator for Agent {
    fn dim(&self) -> usize {
        each_agent!(self, a => a.dim())
    }

    fn expected(&self, theta: &[f64]) -> Result<Vec<f64>> {
        each_agent!(self, a => a.expected(theta))
    }

    fn noisy(&mut self, theta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        each_agent!(self, a => a.noisy(theta, rng))
    }

    fn peek_noisy(&self, theta: &[f64]) -> Result<Vec<f64>> {
        each_agent!(self, a => a.peek_noisy(theta))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Quadratic,
    Mrp,
    FiniteSum,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Family::Quadratic => "quadratic",
            Family::Mrp => "mrp",
            Family::FiniteSum => "finite_sum",
        };
        f.write_str(name)
    }
}

/// M agents of one family over a shared parameter dimension.
#[derive(Clone, Debug)]
pub struct ProblemFleet {
    pub family: Family,
    pub dim: usize,
    pub agents: Vec<Agent>,
}

impl ProblemFleet {
    pub fn new(family: Family, agents: Vec<Agent>) -> Result<Self> {
        let first = agents.first().ok_or_else(|| Error::EmptyInput("fleet needs agents".into()))?;
        let dim = first.dim();
        if let Some(bad) = agents.iter().position(|a| a.dim() != dim) {
            return Err(Error::dim(format!(
                "agent {bad} has dimension {}, fleet has {dim}",
                agents[bad].dim()
            )));
        }
        Ok(ProblemFleet { family, dim, agents })
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn set_mode(&mut self, mode: SamplingMode) {
        for a in &mut self.agents {
            a.set_mode(mode);
        }
    }

    /// Mean linear part and offset across agents.
    pub fn mean_affine(&self) -> AffineOperator {
        let mut linear = Matrix::zeros(self.dim, self.dim);
        for a in &self.agents {
            linear.add_scaled(&a.affine().linear, 1.0);
        }
        let linear = linear.scale(1.0 / self.num_agents() as f64);
        let offsets: Vec<Vec<f64>> = self.agents.iter().map(|a| a.affine().offset).collect();
        AffineOperator { linear, offset: anchored_mean(&offsets) }
    }

    pub fn local_roots(&self) -> Result<Vec<Vec<f64>>> {
        self.agents.iter().map(|a| a.local_root()).collect()
    }

    pub fn to_instance(&self, seed: u64, noise: Option<NoiseConfig>, generator_params: serde_json::Value) -> InstanceFile {
        InstanceFile {
            family: self.family,
            d: self.dim,
            m: self.num_agents(),
            agents: self.agents.clone(),
            noise,
            seed,
            generator_params,
        }
    }
}

/// Average of the agents' expected operators, in fixed agent order.
pub fn fleet_expected(fleet: &ProblemFleet, theta: &[f64]) -> Result<Vec<f64>> {
    let values: Vec<Vec<f64>> =
        fleet.agents.iter().map(|a| a.expected(theta)).collect::<Result<_>>()?;
    Ok(anchored_mean(&values))
}

/// Mean of vectors anchored at the first one: v_0 + mean(v_i - v_0).
///
/// Identical to the arithmetic mean in exact arithmetic; in floating point
/// it additionally maps M identical inputs to that input bitwise, which the
/// homogeneous-collapse identity between the two algorithms relies on.
pub fn anchored_mean(vs: &[Vec<f64>]) -> Vec<f64> {
    assert!(!vs.is_empty(), "anchored_mean over empty list");
    let base = &vs[0];
    let scale = 1.0 / vs.len() as f64;
    let mut out = base.clone();
    for k in 0..base.len() {
        let mut acc = 0.0;
        for v in vs {
            acc += v[k] - base[k];
        }
        out[k] += scale * acc;
    }
    out
}

/// Computable counterparts of the regularity constants: the worst-case
/// per-observation Lipschitz constant, the strong-monotonicity modulus of
/// the mean operator, a noise scale at the root, and the root itself.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub l_hat: f64,
    pub mu_hat: f64,
    pub sigma_hat: f64,
    pub theta_star: Vec<f64>,
}

pub fn measure_constants(fleet: &ProblemFleet) -> Result<ProblemConstants> {
    let mean = fleet.mean_affine();
    let neg_sym = mean.linear.symmetric_part().scale(-1.0);
    let (mu_hat, _) = numerics::sym_eigen_range(&neg_sym)?;
    if mu_hat <= 0.0 {
        return Err(Error::NotStronglyMonotone { mu_hat });
    }
    let mut l_hat: f64 = 0.0;
    for a in &fleet.agents {
        l_hat = l_hat.max(a.per_observation_lipschitz()?);
    }
    let theta_star = mean.root()?;
    let mut sigma_hat: f64 = 0.0;
    for a in &fleet.agents {
        let s = match a {
            // Gaussian observations are unbounded; report the stationary
            // RMS norm of the additive noise instead of a sup.
            Agent::Quadratic(q) => q.stationary_noise_rms(),
            _ => a.noise_radius_at(&theta_star)?,
        };
        sigma_hat = sigma_hat.max(s);
    }
    Ok(ProblemConstants { l_hat, mu_hat, sigma_hat, theta_star })
}

/// On-disk problem instance. Round-trips bitwise: all numbers serialize
/// with enough decimal digits to reproduce the exact binary values.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceFile {
    pub family: Family,
    pub d: usize,
    pub m: usize,
    pub agents: Vec<Agent>,
    pub noise: Option<NoiseConfig>,
    pub seed: u64,
    pub generator_params: serde_json::Value,
}

impl InstanceFile {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config { path: path.display().to_string(), message: e.to_string() })?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let inst: InstanceFile = serde_json::from_str(&text)
            .map_err(|e| Error::Config { path: path.display().to_string(), message: e.to_string() })?;
        if inst.agents.len() != inst.m {
            return Err(Error::Config {
                path: path.display().to_string(),
                message: format!("m = {} but {} agents listed", inst.m, inst.agents.len()),
            });
        }
        if let Some(bad) = inst.agents.iter().position(|a| a.dim() != inst.d) {
            return Err(Error::Config {
                path: path.display().to_string(),
                message: format!("agent {bad} has dimension {}, header says {}", inst.agents[bad].dim(), inst.d),
            });
        }
        Ok(inst)
    }

    pub fn fleet(&self) -> Result<ProblemFleet> {
        ProblemFleet::new(self.family, self.agents.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchored_mean_matches_arithmetic_mean_and_is_exact_on_ties() {
        let vs = vec![vec![1.0, 2.0], vec![3.0, -2.0], vec![-1.0, 6.0]];
        let m = anchored_mean(&vs);
        assert!((m[0] - 1.0).abs() < 1e-15);
        assert!((m[1] - 2.0).abs() < 1e-15);

        // Identical inputs must average to the input bitwise, for any M.
        let x = vec![0.1 + 0.2, 3.337_837_373e-7, -1.0 / 3.0];
        let ties = vec![x.clone(); 7];
        assert_eq!(anchored_mean(&ties), x);
    }
}
