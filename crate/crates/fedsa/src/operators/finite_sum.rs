//! Finite-sum agents: the local cost is a sum of N quadratic components
//! and the observation is a component index driven by an ergodic chain on
//! {0, .., N-1} whose stationary law weights the components.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{sample_from, sample_next, FiniteMarkovChain, RngStream};
use crate::numerics::{self, Matrix};
use crate::operators::{AffineOperator, AgentOperator, InitKind, SamplingMode};

/// One summand: G_j(theta) = b_j - A_j theta with SPD A_j.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Component {
    pub a: Matrix,
    pub b: Vec<f64>,
    pub c: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "FiniteSumRepr", into = "FiniteSumRepr")]
pub struct FiniteSumAgent {
    components: Vec<Component>,
    index_chain: FiniteMarkovChain,
    current_index: usize,
    affine: AffineOperator,
    mode: SamplingMode,
    draws: u64,
}

#[derive(Serialize, Deserialize)]
struct FiniteSumRepr {
    components: Vec<Component>,
    index_chain: FiniteMarkovChain,
    index: usize,
}

impl TryFrom<FiniteSumRepr> for FiniteSumAgent {
    type Error = crate::error::Error;

    fn try_from(r: FiniteSumRepr) -> Result<Self> {
        let mut agent = FiniteSumAgent::new(r.components, r.index_chain)?;
        if r.index >= agent.num_components() {
            return Err(Error::StateOutOfRange { state: r.index, num_states: agent.num_components() });
        }
        agent.current_index = r.index;
        Ok(agent)
    }
}

impl From<FiniteSumAgent> for FiniteSumRepr {
    fn from(a: FiniteSumAgent) -> Self {
        FiniteSumRepr { components: a.components, index_chain: a.index_chain, index: a.current_index }
    }
}

impl FiniteSumAgent {
    pub fn new(components: Vec<Component>, index_chain: FiniteMarkovChain) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::EmptyInput("finite-sum agent needs components".into()));
        }
        if components.len() != index_chain.num_states() {
            return Err(Error::LengthMismatch {
                left: components.len(),
                right: index_chain.num_states(),
            });
        }
        let d = components[0].a.rows();
        for (j, comp) in components.iter().enumerate() {
            if !comp.a.is_square() || comp.a.rows() != d || comp.b.len() != d {
                return Err(Error::dim(format!("component {j} dimensions disagree with d = {d}")));
            }
            for r in 0..d {
                for c in (r + 1)..d {
                    let dev = (comp.a[(r, c)] - comp.a[(c, r)]).abs();
                    if dev > numerics::SYMMETRY_TOL * comp.a.max_abs().max(1.0) {
                        return Err(Error::NotSymmetric { row: r, col: c, deviation: dev });
                    }
                }
            }
            numerics::cholesky(&comp.a)
                .map_err(|_| Error::InvalidParam(format!("component {j} is not positive definite")))?;
        }
        let affine = Self::build_affine(&components, &index_chain);
        Ok(FiniteSumAgent {
            components,
            index_chain,
            current_index: 0,
            affine,
            mode: SamplingMode::default(),
            draws: 0,
        })
    }

    /// Stationary mean: linear = -sum_j pi_j A_j, offset = sum_j pi_j b_j.
    fn build_affine(components: &[Component], chain: &FiniteMarkovChain) -> AffineOperator {
        let d = components[0].a.rows();
        let pi = chain.stationary();
        let mut linear = Matrix::zeros(d, d);
        let mut offset = vec![0.0; d];
        for (j, comp) in components.iter().enumerate() {
            linear.add_scaled(&comp.a, -pi[j]);
            numerics::axpy(&mut offset, pi[j], &comp.b);
        }
        AffineOperator { linear, offset }
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn index_chain(&self) -> &FiniteMarkovChain {
        &self.index_chain
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
        self.current_index = match kind {
            InitKind::Deterministic => 0,
            InitKind::Stationary => sample_from(self.index_chain.stationary(), rng),
        };
        Ok(())
    }

    pub fn affine(&self) -> AffineOperator {
        self.affine.clone()
    }

    pub fn per_observation_lipschitz(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for comp in &self.components {
            let (_, hi) = numerics::sym_eigen_range(&comp.a)?;
            worst = worst.max(hi);
        }
        Ok(worst)
    }

    pub fn enumerated_expectation(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(theta)?;
        let pi = self.index_chain.stationary();
        let mut acc = vec![0.0; self.dim()];
        for (j, _) in self.components.iter().enumerate() {
            numerics::axpy(&mut acc, pi[j], &self.component_value(theta, j));
        }
        Ok(acc)
    }

    pub fn noise_radius_at(&self, theta: &[f64]) -> Result<f64> {
        let mean = self.expected(theta)?;
        let mut worst: f64 = 0.0;
        for j in 0..self.components.len() {
            let dev = numerics::vec_sub(&self.component_value(theta, j), &mean);
            worst = worst.max(numerics::norm2(&dev));
        }
        Ok(worst)
    }

    fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::dim(format!("theta has {} entries, agent dimension is {}", theta.len(), self.dim())));
        }
        Ok(())
    }

    fn component_value(&self, theta: &[f64], j: usize) -> Vec<f64> {
        let comp = &self.components[j];
        let mut out = comp.a.matvec(theta);
        for (k, o) in out.iter_mut().enumerate() {
            *o = comp.b[k] - *o;
        }
        out
    }
}

impl AgentOperator for FiniteSumAgent {
    fn dim(&self) -> usize {
        self.components[0].a.rows()
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
                self.current_index = sample_from(self.index_chain.stationary(), rng);
                self.draws += 1;
                Ok(self.component_value(theta, self.current_index))
            }
            SamplingMode::Markov => {
                self.current_index = sample_next(&self.index_chain, self.current_index, rng)?;
                self.draws += 1;
                Ok(self.component_value(theta, self.current_index))
            }
        }
    }

    fn peek_noisy(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(theta)?;
        if self.mode == SamplingMode::Noiseless {
            return self.expected(theta);
        }
        Ok(self.component_value(theta, self.current_index))
    }
}
