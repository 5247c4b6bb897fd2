//! Temporal-difference agents: linear value estimation on an ergodic
//! Markov reward process. The observation is one transition (s, s');
//! the update direction is the TD(0) residual times the feature of s.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{sample_from, sample_next, FiniteMarkovChain, RngStream};
use crate::numerics::{self, dot, Matrix};
use crate::operators::{AffineOperator, AgentOperator, InitKind, SamplingMode};

/// Features must span a d-dimensional space: smallest eigenvalue of the
/// Gram matrix Phi^T Phi has to clear this.
pub const FEATURE_RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "MrpRepr", into = "MrpRepr")]
pub struct MrpAgent {
    chain: FiniteMarkovChain,
    /// Reward collected on leaving state s, deterministic given s.
    reward: Vec<f64>,
    gamma: f64,
    /// S x d, row s is phi(s).
    phi: Matrix,
    /// Current observation is the transition prev_state -> current_state.
    prev_state: usize,
    current_state: usize,
    affine: AffineOperator,
    mode: SamplingMode,
    draws: u64,
}

#[derive(Serialize, Deserialize)]
struct MrpRepr {
    chain: FiniteMarkovChain,
    reward: Vec<f64>,
    gamma: f64,
    phi: Matrix,
    state: usize,
}

impl TryFrom<MrpRepr> for MrpAgent {
    type Error = crate::error::Error;

    fn try_from(r: MrpRepr) -> Result<Self> {
        let mut agent = MrpAgent::new(r.chain, r.reward, r.gamma, r.phi)?;
        if r.state >= agent.chain.num_states() {
            return Err(Error::StateOutOfRange { state: r.state, num_states: agent.chain.num_states() });
        }
        agent.prev_state = r.state;
        agent.current_state = r.state;
        Ok(agent)
    }
}

impl From<MrpAgent> for MrpRepr {
    fn from(a: MrpAgent) -> Self {
        MrpRepr { chain: a.chain, reward: a.reward, gamma: a.gamma, phi: a.phi, state: a.current_state }
    }
}

impl MrpAgent {
    pub fn new(chain: FiniteMarkovChain, reward: Vec<f64>, gamma: f64, phi: Matrix) -> Result<Self> {
        let s = chain.num_states();
        if reward.len() != s {
            return Err(Error::LengthMismatch { left: reward.len(), right: s });
        }
        if phi.rows() != s {
            return Err(Error::dim(format!("feature matrix has {} rows, chain has {s} states", phi.rows())));
        }
        if !gamma.is_finite() || !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParam(format!("discount {gamma} must lie in [0, 1)")));
        }
        let gram = phi.transpose().matmul(&phi);
        let (lo, _) = numerics::sym_eigen_range(&gram)?;
        if lo <= FEATURE_RANK_TOL {
            return Err(Error::InvalidParam(format!(
                "feature matrix is rank deficient: smallest Gram eigenvalue {lo:.3e}"
            )));
        }
        let affine = Self::build_affine(&chain, &reward, gamma, &phi);
        Ok(MrpAgent {
            chain,
            reward,
            gamma,
            phi,
            prev_state: 0,
            current_state: 0,
            affine,
            mode: SamplingMode::default(),
            draws: 0,
        })
    }

    /// Mean path over the stationary transition law: with D = diag(pi),
    /// linear = Phi^T D (gamma P - I) Phi and offset = Phi^T D r.
    fn build_affine(chain: &FiniteMarkovChain, reward: &[f64], gamma: f64, phi: &Matrix) -> AffineOperator {
        let s = chain.num_states();
        let pi = chain.stationary();
        let d_phi = Matrix::from_fn(s, phi.cols(), |r, c| pi[r] * phi[(r, c)]);
        let mut shifted = chain.transition().scale(gamma);
        for k in 0..s {
            shifted[(k, k)] -= 1.0;
        }
        let linear = d_phi.transpose().matmul(&shifted).matmul(phi);
        let weighted_r: Vec<f64> = (0..s).map(|k| pi[k] * reward[k]).collect();
        let offset = phi.transpose().matvec(&weighted_r);
        AffineOperator { linear, offset }
    }

    pub fn chain(&self) -> &FiniteMarkovChain {
        &self.chain
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn features(&self) -> &Matrix {
        &self.phi
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn set_mode(&mut self, mode: SamplingMode) {
        self.mode = mode;
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn draw_count(&self) -> u64 {
        self.draws
    }

    pub fn init_state(&mut self, kind: InitKind, rng: &mut RngStream) -> Result<()> {
        let s = match kind {
            InitKind::Deterministic => 0,
            InitKind::Stationary => sample_from(self.chain.stationary(), rng),
        };
        self.prev_state = s;
        self.current_state = s;
        Ok(())
    }

    pub fn affine(&self) -> AffineOperator {
        self.affine.clone()
    }

    /// Whether the mean linear part has strictly negative-definite
    /// symmetric part (always true for ergodic chains and full-rank
    /// features, checked numerically).
    pub fn is_dissipative(&self) -> Result<bool> {
        let (_, hi) = numerics::sym_eigen_range(&self.affine.linear.symmetric_part())?;
        Ok(hi < 0.0)
    }

    /// Worst single-transition slope: theta -> g(theta, (s, s')) is linear
    /// with the rank-one matrix phi(s) (gamma phi(s') - phi(s))^T, whose
    /// spectral norm is |phi(s)| * |gamma phi(s') - phi(s)|.
    pub fn per_observation_lipschitz(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for s in 0..self.chain.num_states() {
            let row = self.chain.transition().row(s);
            let phi_s = self.phi.row(s);
            let norm_s = numerics::norm2(phi_s);
            for (s2, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    let diff: Vec<f64> = self
                        .phi
                        .row(s2)
                        .iter()
                        .zip(phi_s)
                        .map(|(next, cur)| self.gamma * next - cur)
                        .collect();
                    worst = worst.max(norm_s * numerics::norm2(&diff));
                }
            }
        }
        Ok(worst)
    }

    pub fn enumerated_expectation(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(theta)?;
        let mut acc = vec![0.0; self.dim()];
        let pi = self.chain.stationary();
        for (s, &weight) in pi.iter().enumerate() {
            let row = self.chain.transition().row(s);
            for (s2, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    numerics::axpy(&mut acc, weight * p, &self.td_value(theta, s, s2));
                }
            }
        }
        Ok(acc)
    }

    pub fn noise_radius_at(&self, theta: &[f64]) -> Result<f64> {
        let mean = self.expected(theta)?;
        let mut worst: f64 = 0.0;
        for s in 0..self.chain.num_states() {
            let row = self.chain.transition().row(s);
            for (s2, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    let dev = numerics::vec_sub(&self.td_value(theta, s, s2), &mean);
                    worst = worst.max(numerics::norm2(&dev));
                }
            }
        }
        Ok(worst)
    }

    fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::dim(format!("theta has {} entries, agent dimension is {}", theta.len(), self.dim())));
        }
        Ok(())
    }

    /// g(theta, (s, s')) = (r(s) + gamma phi(s')^T theta - phi(s)^T theta) phi(s).
    fn td_value(&self, theta: &[f64], s: usize, s2: usize) -> Vec<f64> {
        let phi_s = self.phi.row(s);
        let coeff = self.reward[s] + self.gamma * dot(self.phi.row(s2), theta) - dot(phi_s, theta);
        phi_s.iter().map(|&v| coeff * v).collect()
    }
}

impl AgentOperator for MrpAgent {
    fn dim(&self) -> usize {
        self.phi.cols()
    }

    fn expected(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(theta)?;
        Ok(self.affine.apply(theta))
    }

    fn noisy(&mut self, theta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        self.check_dim(theta)?;
        match self.mode {
            SamplingMode::Noiseless => self.expected(theta),
            SamplingMode::Iid => {
                let s = sample_from(self.chain.stationary(), rng);
                let s2 = sample_next(&self.chain, s, rng)?;
                self.prev_state = s;
                self.current_state = s2;
                self.draws += 1;
                Ok(self.td_value(theta, s, s2))
            }
            SamplingMode::Markov => {
                let s = self.current_state;
                let s2 = sample_next(&self.chain, s, rng)?;
                self.prev_state = s;
                self.current_state = s2;
                self.draws += 1;
                Ok(self.td_value(theta, s, s2))
            }
        }
    }

    fn peek_noisy(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(theta)?;
        if self.mode == SamplingMode::Noiseless {
            return self.expected(theta);
        }
        Ok(self.td_value(theta, self.prev_state, self.current_state))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::validate_chain;

    fn symmetric_two_state() -> MrpAgent {
        let chain = validate_chain(Matrix::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]])).unwrap();
        MrpAgent::new(chain, vec![1.0, 1.0], 0.5, Matrix::identity(2)).unwrap()
    }

    #[test]
    fn tabular_root_is_the_value_function() {
        // Identity features make this tabular: theta* solves the Bellman
        // equation, V = r + gamma P V, here V(s) = 1 / (1 - 0.5) = 2.
        let agent = symmetric_two_state();
        let root = agent.affine().root().unwrap();
        assert!((root[0] - 2.0).abs() < 1e-12);
        assert!((root[1] - 2.0).abs() < 1e-12);
        let at_root = agent.expected(&root).unwrap();
        assert!(numerics::norm2(&at_root) < 1e-13);
    }

    #[test]
    fn expected_matches_transition_enumeration() {
        let chain = validate_chain(Matrix::from_rows(vec![
            vec![0.2, 0.5, 0.3],
            vec![0.4, 0.1, 0.5],
            vec![0.25, 0.25, 0.5],
        ]))
        .unwrap();
        let phi = Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.5, 1.0], vec![-0.5, 0.25]]);
        let agent = MrpAgent::new(chain, vec![0.3, -1.0, 2.0], 0.9, phi).unwrap();
        for theta in [vec![0.0, 0.0], vec![1.0, -2.0], vec![0.1, 0.7]] {
            let a = agent.expected(&theta).unwrap();
            let b = agent.enumerated_expectation(&theta).unwrap();
            for k in 0..2 {
                assert!((a[k] - b[k]).abs() <= 1e-12, "component {k}: {} vs {}", a[k], b[k]);
            }
        }
    }

    #[test]
    fn noisy_markov_follows_the_chain_and_counts_draws() {
        let chain = validate_chain(Matrix::from_rows(vec![vec![0.0, 1.0], vec![0.5, 0.5]])).unwrap();
        let mut agent =
            MrpAgent::new(chain, vec![2.0, -1.0], 0.5, Matrix::identity(2)).unwrap();
        let mut rng = RngStream::new(3, 0, "obs");
        // From state 0 the next state is always 1.
        let theta = vec![1.0, 3.0];
        let got = agent.noisy(&theta, &mut rng).unwrap();
        // coeff = r(0) + 0.5 * theta[1] - theta[0] = 2 + 1.5 - 1 = 2.5.
        assert_eq!(got, vec![2.5, 0.0]);
        assert_eq!(agent.peek_noisy(&theta).unwrap(), vec![2.5, 0.0]);
        assert_eq!(agent.draw_count(), 1);
        for _ in 0..20 {
            agent.noisy(&theta, &mut rng).unwrap();
        }
        assert_eq!(agent.draw_count(), 21);
    }

    #[test]
    fn noiseless_mode_is_exactly_expected() {
        let mut agent = symmetric_two_state();
        agent.set_mode(SamplingMode::Noiseless);
        let mut rng = RngStream::new(1, 0, "obs");
        let before = rng.clone();
        let theta = vec![0.25, -0.75];
        assert_eq!(agent.noisy(&theta, &mut rng).unwrap(), agent.expected(&theta).unwrap());
        assert_eq!(rng, before);
        assert_eq!(agent.draw_count(), 0);
    }

    #[test]
    fn lipschitz_and_noise_radius_hand_values() {
        let agent = symmetric_two_state();
        // Transitions cover all pairs; worst is s != s' with
        // |e_s| * |0.5 e_s' - e_s| = sqrt(1.25).
        assert!((agent.per_observation_lipschitz().unwrap() - 1.25f64.sqrt()).abs() < 1e-14);

        let chain = validate_chain(Matrix::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]])).unwrap();
        let uneven = MrpAgent::new(chain, vec![1.0, 0.0], 0.5, Matrix::identity(2)).unwrap();
        // At theta = 0: g((0, .)) = [1, 0], g((1, .)) = 0, mean = [0.5, 0].
        assert!((uneven.noise_radius_at(&[0.0, 0.0]).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn construction_rejects_bad_inputs() {
        let chain = || validate_chain(Matrix::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]])).unwrap();
        assert!(MrpAgent::new(chain(), vec![1.0], 0.5, Matrix::identity(2)).is_err());
        assert!(MrpAgent::new(chain(), vec![1.0, 1.0], 1.0, Matrix::identity(2)).is_err());
        assert!(MrpAgent::new(chain(), vec![1.0, 1.0], -0.1, Matrix::identity(2)).is_err());
        let flat = Matrix::from_rows(vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(MrpAgent::new(chain(), vec![1.0, 1.0], 0.5, flat).is_err());
        let tall = Matrix::from_rows(vec![vec![1.0], vec![1.0], vec![1.0]]);
        assert!(MrpAgent::new(chain(), vec![1.0, 1.0], 0.5, tall).is_err());
    }

    #[test]
    fn stationary_init_and_iid_sampling_hit_both_states() {
        let mut agent = symmetric_two_state();
        agent.set_mode(SamplingMode::Iid);
        let mut rng = RngStream::new(9, 4, "obs-init");
        let mut seen = [0u32; 2];
        for _ in 0..200 {
            agent.init_state(InitKind::Stationary, &mut rng).unwrap();
            seen[agent.current_state] += 1;
        }
        assert!(seen[0] > 50 && seen[1] > 50, "stationary init skewed: {seen:?}");
        agent.noisy(&[0.0, 0.0], &mut rng).unwrap();
        assert_eq!(agent.draw_count(), 1);
    }

    #[test]
    fn serde_round_trip_preserves_everything_relevant() {
        let mut agent = symmetric_two_state();
        let mut rng = RngStream::new(2, 0, "obs");
        agent.noisy(&[0.0, 0.0], &mut rng).unwrap();
        let text = serde_json::to_string(&agent).unwrap();
        let back: MrpAgent = serde_json::from_str(&text).unwrap();
        assert_eq!(back.current_state, agent.current_state);
        assert_eq!(back.rewards(), agent.rewards());
        assert_eq!(back.gamma(), agent.gamma());
        let theta = vec![0.4, -0.2];
        assert_eq!(back.expected(&theta).unwrap(), agent.expected(&theta).unwrap());
    }

    #[test]
    fn dissipativity_holds_for_ergodic_full_rank_instances() {
        let agent = symmetric_two_state();
        assert!(agent.is_dissipative().unwrap());
    }
}
