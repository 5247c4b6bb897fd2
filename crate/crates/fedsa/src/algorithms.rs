//! Iteration schemes: drift-corrected federated SA, uncorrected local SA
//! with averaging, and the single-agent baseline they both reduce to.
//!
//! Observation streams are keyed by (master seed, agent, "obs"), and both
//! algorithms consume exactly one observation per agent and local step at
//! the same stream positions: the corrected algorithm draws the first
//! observation of round t+1 during round t's closing exchange and reuses
//! it at local step zero, so a T-round run advances every observation
//! process exactly H*T times under either scheme.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::RngStream;
use crate::numerics::{self, dot, norm2, vec_sub};
use crate::operators::{
    anchored_mean, measure_constants, Agent, AgentOperator, InitKind, ProblemFleet, SamplingMode,
};

/// A global-parameter norm beyond this aborts the run as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    #[serde(rename = "fedhsa")]
    FedHsa,
    LocalSa,
}

impl std::fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AlgorithmKind::FedHsa => "fedhsa",
            AlgorithmKind::LocalSa => "local_sa",
        })
    }
}

/// Step-size schedule. The horizon-dependent choice is still constant
/// within a run; it is resolved to a number once at construction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Constant,
    Corollary1 { mu: f64 },
}

/// eta = 4 ln(MHT) / (mu H T), the horizon-tuned constant step size.
pub fn corollary1_eta(m: usize, h: usize, t: usize, mu: f64) -> Result<f64> {
    if m < 1 || h < 1 || t < 1 {
        return Err(Error::InvalidParam(format!("m, h, t must be >= 1, got {m}, {h}, {t}")));
    }
    let product = m as u128 * h as u128 * t as u128;
    if product < 3 {
        return Err(Error::InvalidParam(format!("need M*H*T >= 3, got {product}")));
    }
    if !mu.is_finite() || mu <= 0.0 {
        return Err(Error::InvalidParam(format!("mu {mu} must be positive")));
    }
    Ok(4.0 * (product as f64).ln() / (mu * h as f64 * t as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FederatedConfig {
    pub m: usize,
    pub h: usize,
    pub t: usize,
    pub eta: f64,
    pub alpha_g: f64,
    pub sampling_mode: SamplingMode,
    #[serde(default)]
    pub schedule: Schedule,
    pub master_seed: u64,
    /// Draw a separate anchor observation during the closing exchange
    /// instead of reusing it as the next round's first observation.
    #[serde(default)]
    pub fresh_anchor: bool,
    /// Start observation processes from deterministic worst-case states
    /// instead of stationary draws.
    #[serde(default)]
    pub worst_case_init: bool,
}

impl FederatedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m < 1 || self.h < 1 || self.t < 1 {
            return Err(Error::InvalidParam(format!(
                "m, h, t must be >= 1, got {}, {}, {}",
                self.m, self.h, self.t
            )));
        }
        if !self.eta.is_finite() || self.eta <= 0.0 {
            return Err(Error::InvalidParam(format!("eta {} must be positive", self.eta)));
        }
        if !self.alpha_g.is_finite() || self.alpha_g <= 0.0 {
            return Err(Error::InvalidParam(format!("alpha_g {} must be positive", self.alpha_g)));
        }
        self.resolved_eta()?;
        Ok(())
    }

    /// The local step size actually used: the configured eta, or the
    /// horizon formula when the schedule asks for it.
    pub fn resolved_eta(&self) -> Result<f64> {
        match self.schedule {
            Schedule::Constant => Ok(self.eta),
            Schedule::Corollary1 { mu } => corollary1_eta(self.m, self.h, self.t, mu),
        }
    }

    /// Effective per-round step alpha = H * eta * alpha_g.
    pub fn effective_alpha(&self) -> Result<f64> {
        Ok(self.h as f64 * self.resolved_eta()? * self.alpha_g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    /// Squared distance of the global parameter to the fleet root.
    pub d_t: f64,
    /// Largest local-iterate distance to the round-start global parameter
    /// over all agents and local steps of the round ending at t (0 at t=0).
    pub max_drift: f64,
    pub theta_bar_norm: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunTrace {
    pub algorithm: AlgorithmKind,
    pub config: FederatedConfig,
    pub resolved_eta: f64,
    pub theta_star: Vec<f64>,
    /// T+1 rows, t = 0..=T.
    pub rows: Vec<TraceRow>,
    pub final_theta: Vec<f64>,
    /// Observation-process advances per agent (equal across agents).
    pub samples_per_agent: u64,
    /// Wall time of the run; excluded from trace CSVs so output files stay
    /// bitwise reproducible.
    pub wall_time_secs: f64,
}

impl RunTrace {
    pub fn final_d(&self) -> f64 {
        self.rows.last().map(|r| r.d_t).unwrap_or(f64::NAN)
    }
}

/// Executes rounds of one algorithm over one fleet. Rounds can be driven
/// one at a time (`step`) for convergence studies or to the configured
/// horizon (`run`), which skips the final closing exchange so the sample
/// budget is exactly H*T per agent.
pub struct Runner {
    algorithm: AlgorithmKind,
    config: FederatedConfig,
    eta: f64,
    /// Aggregation weight: the configured alpha_g for the corrected
    /// algorithm, pinned to 1 for plain averaging.
    alpha_g: f64,
    fleet: ProblemFleet,
    theta_star: Vec<f64>,
    theta_bar: Vec<f64>,
    obs_rngs: Vec<RngStream>,
    /// Per-agent G_i(theta_bar, o_{i,0}) from the latest exchange.
    anchors: Vec<Vec<f64>>,
    /// Mean of `anchors` in fixed agent order.
    cached_global_op: Vec<f64>,
    rows: Vec<TraceRow>,
    round_index: usize,
    started: Instant,
}

impl Runner {
    pub fn new(mut fleet: ProblemFleet, config: FederatedConfig, algorithm: AlgorithmKind) -> Result<Self> {
        config.validate()?;
        if config.m != fleet.num_agents() {
            return Err(Error::InvalidParam(format!(
                "config says m = {}, fleet has {} agents",
                config.m,
                fleet.num_agents()
            )));
        }
        let eta = config.resolved_eta()?;
        let constants = measure_constants(&fleet)?;
        fleet.set_mode(config.sampling_mode);
        let init = if config.worst_case_init || config.sampling_mode == SamplingMode::Noiseless {
            InitKind::Deterministic
        } else {
            InitKind::Stationary
        };
        for (i, agent) in fleet.agents.iter_mut().enumerate() {
            let mut init_rng = RngStream::new(config.master_seed, i as u64, "obs-init");
            agent.init_state(init, &mut init_rng)?;
        }
        let obs_rngs = (0..fleet.num_agents())
            .map(|i| RngStream::new(config.master_seed, i as u64, "obs"))
            .collect();
        let alpha_g = match algorithm {
            AlgorithmKind::FedHsa => config.alpha_g,
            AlgorithmKind::LocalSa => 1.0,
        };
        let dim = fleet.dim;
        Ok(Runner {
            algorithm,
            config,
            eta,
            alpha_g,
            fleet,
            theta_star: constants.theta_star,
            theta_bar: vec![0.0; dim],
            obs_rngs,
            anchors: Vec::new(),
            cached_global_op: Vec::new(),
            rows: Vec::new(),
            round_index: 0,
            started: Instant::now(),
        })
    }

    /// Overrides the zero start; only valid before the first round.
    pub fn set_initial_theta(&mut self, theta: &[f64]) -> Result<()> {
        if self.round_index > 0 || !self.rows.is_empty() {
            return Err(Error::InvalidParam("initial point must be set before the first round".into()));
        }
        if theta.len() != self.fleet.dim {
            return Err(Error::dim(format!("theta has {} entries, fleet dimension is {}", theta.len(), self.fleet.dim)));
        }
        self.theta_bar = theta.to_vec();
        Ok(())
    }

    pub fn theta_bar(&self) -> &[f64] {
        &self.theta_bar
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn round_index(&self) -> usize {
        self.round_index
    }

    fn push_row(&mut self, max_drift: f64) {
        let diff = vec_sub(&self.theta_bar, &self.theta_star);
        self.rows.push(TraceRow {
            t: self.rows.len(),
            d_t: dot(&diff, &diff),
            max_drift,
            theta_bar_norm: norm2(&self.theta_bar),
        });
    }

    /// Records the t=0 row and, for the corrected algorithm, performs the
    /// initial exchange that seeds the anchors at theta_bar^(0).
    fn ensure_started(&mut self) -> Result<()> {
        if !self.rows.is_empty() {
            return Ok(());
        }
        self.push_row(0.0);
        if self.algorithm == AlgorithmKind::FedHsa {
            self.exchange()?;
        }
        Ok(())
    }

    /// Every agent draws its next first observation at the current global
    /// parameter; the server caches the fleet mean in fixed agent order.
    fn exchange(&mut self) -> Result<()> {
        let mut anchors = Vec::with_capacity(self.fleet.num_agents());
        for (i, agent) in self.fleet.agents.iter_mut().enumerate() {
            anchors.push(agent.noisy(&self.theta_bar, &mut self.obs_rngs[i])?);
        }
        self.cached_global_op = anchored_mean(&anchors);
        self.anchors = anchors;
        Ok(())
    }

    /// One round including the closing exchange (anchor stays warm for a
    /// possible next round; use `run` for an exact H*T sample budget).
    pub fn step(&mut self) -> Result<()> {
        self.round(true)
    }

    /// Runs to the configured horizon T. The closing exchange of the last
    /// round is skipped: its observation would belong to round T.
    pub fn run(&mut self) -> Result<()> {
        self.ensure_started()?;
        while self.round_index < self.config.t {
            let closing = self.round_index + 1 < self.config.t;
            self.round(closing)?;
        }
        Ok(())
    }

    fn round(&mut self, closing: bool) -> Result<()> {
        self.ensure_started()?;
        let max_drift = match self.algorithm {
            AlgorithmKind::FedHsa => self.fedhsa_round()?,
            AlgorithmKind::LocalSa => self.local_sa_round()?,
        };
        self.round_index += 1;
        self.push_row(max_drift);
        let norm = self.rows.last().map(|r| r.theta_bar_norm).unwrap_or(f64::NAN);
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Diverged { round: self.round_index, norm });
        }
        if closing && self.algorithm == AlgorithmKind::FedHsa {
            self.exchange()?;
        }
        Ok(())
    }

    /// Corrected local steps: theta += eta (G_i(theta, o) + c_i) with
    /// c_i = cached_global_op - G_i(theta_bar, o_{i,0}). Local step zero
    /// reuses the anchor observation, whose value at theta_bar is the
    /// anchor itself.
    fn fedhsa_round(&mut self) -> Result<f64> {
        let theta_round = self.theta_bar.clone();
        let h = self.config.h;
        let mut max_drift = 0.0_f64;
        let mut deltas = Vec::with_capacity(self.fleet.num_agents());
        for (i, agent) in self.fleet.agents.iter_mut().enumerate() {
            let correction = vec_sub(&self.cached_global_op, &self.anchors[i]);
            let mut theta = theta_round.clone();
            for l in 0..h {
                let value = if l == 0 && !self.config.fresh_anchor {
                    self.anchors[i].clone()
                } else {
                    agent.noisy(&theta, &mut self.obs_rngs[i])?
                };
                let mut update = value;
                numerics::axpy(&mut update, 1.0, &correction);
                numerics::axpy(&mut theta, self.eta, &update);
                max_drift = max_drift.max(norm2(&vec_sub(&theta, &theta_round)));
            }
            deltas.push(vec_sub(&theta, &theta_round));
        }
        let mean_delta = anchored_mean(&deltas);
        numerics::axpy(&mut self.theta_bar, self.alpha_g, &mean_delta);
        Ok(max_drift)
    }

    /// Uncorrected local steps with plain averaging (aggregation weight 1).
    fn local_sa_round(&mut self) -> Result<f64> {
        let theta_round = self.theta_bar.clone();
        let h = self.config.h;
        let mut max_drift = 0.0_f64;
        let mut deltas = Vec::with_capacity(self.fleet.num_agents());
        for (i, agent) in self.fleet.agents.iter_mut().enumerate() {
            let mut theta = theta_round.clone();
            for _ in 0..h {
                let value = agent.noisy(&theta, &mut self.obs_rngs[i])?;
                numerics::axpy(&mut theta, self.eta, &value);
                max_drift = max_drift.max(norm2(&vec_sub(&theta, &theta_round)));
            }
            deltas.push(vec_sub(&theta, &theta_round));
        }
        let mean_delta = anchored_mean(&deltas);
        numerics::axpy(&mut self.theta_bar, self.alpha_g, &mean_delta);
        Ok(max_drift)
    }

    pub fn finish(mut self) -> RunTrace {
        if self.rows.is_empty() {
            self.push_row(0.0);
        }
        let samples = self.fleet.agents.iter().map(|a| a.draw_count()).max().unwrap_or(0);
        RunTrace {
            algorithm: self.algorithm,
            resolved_eta: self.eta,
            theta_star: self.theta_star,
            rows: self.rows,
            final_theta: self.theta_bar,
            samples_per_agent: samples,
            wall_time_secs: self.started.elapsed().as_secs_f64(),
            config: self.config,
        }
    }
}

/// Builds a runner, executes T rounds, and packages the trace.
pub fn run(fleet: ProblemFleet, config: &FederatedConfig, algorithm: AlgorithmKind) -> Result<RunTrace> {
    let mut runner = Runner::new(fleet, config.clone(), algorithm)?;
    runner.run()?;
    Ok(runner.finish())
}

/// Plain SA on one operator: theta += eta G(theta, o) for `steps` steps,
/// realized as a single-agent fleet with one local step per round.
pub fn single_agent_sa(
    agent: Agent,
    theta0: &[f64],
    steps: usize,
    eta: f64,
    mode: SamplingMode,
    master_seed: u64,
) -> Result<RunTrace> {
    let fleet = ProblemFleet::new(agent.family(), vec![agent])?;
    let config = FederatedConfig {
        m: 1,
        h: 1,
        t: steps,
        eta,
        alpha_g: 1.0,
        sampling_mode: mode,
        schedule: Schedule::Constant,
        master_seed,
        fresh_anchor: false,
        worst_case_init: false,
    };
    let mut runner = Runner::new(fleet, config, AlgorithmKind::LocalSa)?;
    runner.set_initial_theta(theta0)?;
    runner.run()?;
    Ok(runner.finish())
}
