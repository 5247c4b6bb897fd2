//! Gauss-Markov (vector AR(1)) observation noise: z <- Q z + eps with
//! Schur-stable Q and eps ~ Normal(0, sigma_eps^2 I).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::rng::RngStream;
use crate::numerics::{cholesky, spectral_radius, Matrix};

/// Margin below 1 required of rho(Q); enforced at construction.
pub const SCHUR_MARGIN: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GaussMarkovRepr", into = "GaussMarkovRepr")]
pub struct GaussMarkovProcess {
    q: Matrix,
    sigma_eps: f64,
    z: Vec<f64>,
    /// Cholesky factor of the stationary covariance, built on first use.
    stationary_factor: Option<Matrix>,
}

#[derive(Serialize, Deserialize)]
struct GaussMarkovRepr {
    q: Matrix,
    sigma_eps: f64,
    z: Vec<f64>,
}

impl TryFrom<GaussMarkovRepr> for GaussMarkovProcess {
    type Error = String;

    fn try_from(r: GaussMarkovRepr) -> std::result::Result<Self, String> {
        let mut proc = GaussMarkovProcess::new(r.q, r.sigma_eps).map_err(|e| e.to_string())?;
        if r.z.len() != proc.dim() {
            return Err(format!("state has {} entries, Q is {}x{}", r.z.len(), proc.dim(), proc.dim()));
        }
        proc.z = r.z;
        Ok(proc)
    }
}

impl From<GaussMarkovProcess> for GaussMarkovRepr {
    fn from(p: GaussMarkovProcess) -> Self {
        GaussMarkovRepr { q: p.q, sigma_eps: p.sigma_eps, z: p.z }
    }
}

impl GaussMarkovProcess {
    /// Starts at z = 0. sigma_eps = 0 yields the degenerate noiseless
    /// process (useful as a limit case); negative values are rejected.
    pub fn new(q: Matrix, sigma_eps: f64) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::dim(format!("Q is {}x{}", q.rows(), q.cols())));
        }
        let radius = spectral_radius(&q);
        if radius >= 1.0 - SCHUR_MARGIN {
            return Err(Error::InvalidParam(format!(
                "Q not Schur-stable: spectral radius {radius:.9} >= {}",
                1.0 - SCHUR_MARGIN
            )));
        }
        if sigma_eps < 0.0 || !sigma_eps.is_finite() {
            return Err(Error::InvalidParam(format!("sigma_eps {sigma_eps} must be >= 0")));
        }
        let dim = q.rows();
        Ok(GaussMarkovProcess { q, sigma_eps, z: vec![0.0; dim], stationary_factor: None })
    }

    pub fn dim(&self) -> usize {
        self.q.rows()
    }

    pub fn sigma_eps(&self) -> f64 {
        self.sigma_eps
    }

    pub fn q(&self) -> &Matrix {
        &self.q
    }

    /// Current noise sample xi = z.
    pub fn state(&self) -> &[f64] {
        &self.z
    }

    pub fn reset_to_zero(&mut self) {
        self.z.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Stationary covariance sum_{k>=0} Q^k (sigma^2 I) (Q^k)^T, accumulated
    /// by doubling: S_{2n} = S_n + Q^n S_n (Q^n)^T. Converges for any
    /// Schur-stable Q in O(log) matrix products.
    pub fn stationary_covariance(&self) -> Matrix {
        let d = self.dim();
        let mut s = Matrix::identity(d).scale(self.sigma_eps * self.sigma_eps);
        if self.sigma_eps == 0.0 {
            return s;
        }
        let mut qk = self.q.clone();
        for _ in 0..128 {
            let term = qk.matmul(&s).matmul(&qk.transpose());
            if term.max_abs() <= 1e-16 * s.max_abs() {
                break;
            }
            s.add_scaled(&term, 1.0);
            qk = qk.matmul(&qk);
        }
        s.symmetric_part()
    }

    /// Draws z fresh from the stationary law Normal(0, stationary cov).
    /// Used for stationary initialization and i.i.d. sampling mode.
    pub fn sample_stationary(&mut self, rng: &mut RngStream) -> Vec<f64> {
        if self.sigma_eps == 0.0 {
            self.reset_to_zero();
            return self.z.clone();
        }
        if self.stationary_factor.is_none() {
            let cov = self.stationary_covariance();
            let factor = cholesky(&cov).expect("stationary covariance is SPD when sigma_eps > 0");
            self.stationary_factor = Some(factor);
        }
        let factor = self.stationary_factor.as_ref().expect("factor cached above");
        let g = rng.gaussians(self.dim());
        self.z = factor.matvec(&g);
        self.z.clone()
    }
}

/// Advances z <- Q z + eps and returns the new state. The innovation always
/// consumes gaussians(dim) from the stream, even at sigma_eps = 0, so runs
/// differing only in sigma stay draw-aligned.
pub fn gm_step(proc: &mut GaussMarkovProcess, rng: &mut RngStream) -> Vec<f64> {
    let mut next = proc.q.matvec(&proc.z);
    let eps = rng.gaussians(proc.dim());
    for (n, e) in next.iter_mut().zip(&eps) {
        *n += proc.sigma_eps * e;
    }
    proc.z = next;
    proc.z.clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn construction_enforces_schur_stability_and_sigma_sign() {
        assert!(GaussMarkovProcess::new(Matrix::identity(2), 1.0).is_err());
        let q = Matrix::from_rows(vec![vec![0.999_999_9, 0.0], vec![0.0, 0.0]]);
        assert!(GaussMarkovProcess::new(q, 1.0).is_err());
        let q = Matrix::from_rows(vec![vec![0.5]]);
        assert!(GaussMarkovProcess::new(q.clone(), -0.1).is_err());
        assert!(GaussMarkovProcess::new(q, 0.0).is_ok());
    }

    #[test]
    fn zero_noise_stays_at_zero_forever() {
        let q = Matrix::from_rows(vec![vec![0.5, 0.1], vec![0.0, 0.3]]);
        let mut proc = GaussMarkovProcess::new(q, 0.0).unwrap();
        let mut rng = RngStream::new(1, 0, "gm");
        for _ in 0..100 {
            let z = gm_step(&mut proc, &mut rng);
            assert!(z.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn q_zero_gives_iid_innovations_with_matching_covariance() {
        let sigma = 0.7;
        let mut proc = GaussMarkovProcess::new(Matrix::zeros(2, 2), sigma).unwrap();
        let mut rng = RngStream::new(2, 0, "gm-iid");
        let n = 100_000;
        let mut sums = [0.0_f64; 3]; // var0, var1, cov01
        for _ in 0..n {
            let z = gm_step(&mut proc, &mut rng);
            sums[0] += z[0] * z[0];
            sums[1] += z[1] * z[1];
            sums[2] += z[0] * z[1];
        }
        let target = sigma * sigma;
        assert!((sums[0] / n as f64 - target).abs() <= 0.05 * target);
        assert!((sums[1] / n as f64 - target).abs() <= 0.05 * target);
        assert!((sums[2] / n as f64).abs() <= 0.05 * target);
    }

    #[test]
    fn scalar_long_run_variance_matches_ar1_formula() {
        // Var = sigma^2 / (1 - q^2) = 4/3 for q = 0.5, sigma = 1.
        let mut proc = GaussMarkovProcess::new(Matrix::from_rows(vec![vec![0.5]]), 1.0).unwrap();
        let mut rng = RngStream::new(3, 0, "gm-ar1");
        let n = 1_000_000;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z = gm_step(&mut proc, &mut rng);
            sum_sq += z[0] * z[0];
        }
        let var = sum_sq / n as f64;
        assert!((var - 4.0 / 3.0).abs() <= 0.05 * (4.0 / 3.0), "variance {var}");
    }

    #[test]
    fn stationary_covariance_satisfies_lyapunov_equation() {
        let q = Matrix::from_rows(vec![
            vec![0.4, 0.2, -0.1],
            vec![0.0, 0.3, 0.2],
            vec![0.1, -0.2, 0.5],
        ]);
        let proc = GaussMarkovProcess::new(q.clone(), 0.8).unwrap();
        let s = proc.stationary_covariance();
        // Residual S - Q S Q^T - sigma^2 I must vanish.
        let mut residual = s.sub(&q.matmul(&s).matmul(&q.transpose()));
        let eye = Matrix::identity(3).scale(0.64);
        residual.add_scaled(&eye, -1.0);
        assert!(residual.max_abs() <= 1e-12 * s.max_abs());
        // Scalar closed form as an absolute anchor.
        let scalar = GaussMarkovProcess::new(Matrix::from_rows(vec![vec![0.5]]), 1.0).unwrap();
        assert_close(scalar.stationary_covariance()[(0, 0)], 4.0 / 3.0, 1e-12);
    }

    #[test]
    fn sample_stationary_has_stationary_variance() {
        let mut proc = GaussMarkovProcess::new(Matrix::from_rows(vec![vec![0.5]]), 1.0).unwrap();
        let mut rng = RngStream::new(4, 0, "gm-stat");
        let n = 200_000;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let z = proc.sample_stationary(&mut rng);
            sum_sq += z[0] * z[0];
        }
        let var = sum_sq / n as f64;
        assert!((var - 4.0 / 3.0).abs() <= 0.05 * (4.0 / 3.0), "variance {var}");
    }

    #[test]
    fn process_round_trips_through_json() {
        let q = Matrix::from_rows(vec![vec![0.5, 0.1], vec![0.0, 0.3]]);
        let mut proc = GaussMarkovProcess::new(q, 0.25).unwrap();
        let mut rng = RngStream::new(5, 0, "gm-serde");
        gm_step(&mut proc, &mut rng);
        let text = serde_json::to_string(&proc).unwrap();
        let back: GaussMarkovProcess = serde_json::from_str(&text).unwrap();
        assert_eq!(proc.state(), back.state());
        assert_eq!(proc.sigma_eps(), back.sigma_eps());
    }
}
