//! Quadratic-cost agents: G_i(theta, xi) = b_i - A_i theta + xi with SPD
//! A_i and Gauss-Markov additive noise xi.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::gauss::{gm_step, GaussMarkovProcess};
use crate::markov::RngStream;
use crate::numerics::{self, Matrix};
use crate::operators::{AffineOperator, AgentOperator, InitKind, SamplingMode};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "QuadraticRepr", into = "QuadraticRepr")]
pub struct QuadraticAgent {
    a: Matrix,
    b: Vec<f64>,
    /// Constant term of the underlying cost; carried for bookkeeping, the
    /// operator never reads it.
    c: f64,
    noise: GaussMarkovProcess,
    mode: SamplingMode,
    draws: u64,
}

#[derive(Serialize, Deserialize)]
struct QuadraticRepr {
    a: Matrix,
    b: Vec<f64>,
    c: f64,
    noise: GaussMarkovProcess,
}

impl TryFrom<QuadraticRepr> for QuadraticAgent {
    type Error = crate::error::Error;

    fn try_from(r: QuadraticRepr) -> Result<Self> {
        QuadraticAgent::new(r.a, r.b, r.c, r.noise)
    }
}

impl From<QuadraticAgent> for QuadraticRepr {
    fn from(agent: QuadraticAgent) -> Self {
        QuadraticRepr { a: agent.a, b: agent.b, c: agent.c, noise: agent.noise }
    }
}

impl QuadraticAgent {
    pub fn new(a: Matrix, b: Vec<f64>, c: f64, noise: GaussMarkovProcess) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::dim(format!("A is {}x{}", a.rows(), a.cols())));
        }
        let d = a.rows();
        if b.len() != d {
            return Err(Error::LengthMismatch { left: b.len(), right: d });
        }
        if noise.dim() != d {
            return Err(Error::dim(format!("noise dimension {} vs A dimension {d}", noise.dim())));
        }
        for r in 0..d {
            for col in (r + 1)..d {
                let dev = (a[(r, col)] - a[(col, r)]).abs();
                if dev > numerics::SYMMETRY_TOL * a.max_abs().max(1.0) {
                    return Err(Error::NotSymmetric { row: r, col, deviation: dev });
                }
            }
        }
        // Positive definiteness: a Cholesky factorization exists iff SPD.
        numerics::cholesky(&a)
            .map_err(|_| Error::InvalidParam("A is not positive definite".into()))?;
        Ok(QuadraticAgent { a, b, c, noise, mode: SamplingMode::default(), draws: 0 })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn cost_offset(&self) -> f64 {
        self.c
    }

    pub fn noise(&self) -> &GaussMarkovProcess {
        &self.noise
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
        match kind {
            InitKind::Deterministic => self.noise.reset_to_zero(),
            InitKind::Stationary => {
                self.noise.sample_stationary(rng);
            }
        }
        Ok(())
    }

    pub fn affine(&self) -> AffineOperator {
        AffineOperator { linear: self.a.scale(-1.0), offset: self.b.clone() }
    }

    /// Additive noise leaves the slope untouched: every single-observation
    /// map theta -> b - A theta + xi has Lipschitz constant |A|_2.
    pub fn per_observation_lipschitz(&self) -> Result<f64> {
        let (_, hi) = numerics::sym_eigen_range(&self.a)?;
        Ok(hi)
    }

    /// Root-mean-square norm of the stationary noise: sqrt(tr Sigma_inf).
    pub fn stationary_noise_rms(&self) -> f64 {
        let cov = self.noise.stationary_covariance();
        let mut tr = 0.0;
        for k in 0..cov.rows() {
            tr += cov[(k, k)];
        }
        tr.sqrt()
    }

    pub fn enumerated_expectation(&self, _theta: &[f64]) -> Result<Vec<f64>> {
        Err(Error::NotEnumerable { family: "quadratic".into() })
    }

    pub fn noise_radius_at(&self, _theta: &[f64]) -> Result<f64> {
        Err(Error::NotEnumerable { family: "quadratic".into() })
    }

    fn check_dim(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.a.rows() {
            return Err(Error::dim(format!("theta has {} entries, agent dimension is {}", theta.len(), self.a.rows())));
        }
        Ok(())
    }

    fn value_at_state(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = self.a.matvec(theta);
        let z = self.noise.state();
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.b[k] - *o + z[k];
        }
        out
    }
}

impl AgentOperator for QuadraticAgent {
    fn dim(&self) -> usize {
        self.a.rows()
    }

    fn expected(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(theta)?;
        let mut out = self.a.matvec(theta);
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.b[k] - *o;
        }
        Ok(out)
    }

    fn noisy(&mut self, theta: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
        self.check_dim(theta)?;
        match self.mode {
            SamplingMode::Noiseless => self.expected(theta),
            SamplingMode::Iid => {
                self.noise.sample_stationary(rng);
                self.draws += 1;
                Ok(self.value_at_state(theta))
            }
            SamplingMode::Markov => {
                gm_step(&mut self.noise, rng);
                self.draws += 1;
                Ok(self.value_at_state(theta))
            }
        }
    }

    fn peek_noisy(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(theta)?;
        if self.mode == SamplingMode::Noiseless {
            return self.expected(theta);
        }
        Ok(self.value_at_state(theta))
    }
}
