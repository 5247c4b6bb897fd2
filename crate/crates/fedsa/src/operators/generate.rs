//! Reproducible fleet generators.
//!
//! Heterogeneity enters every generated quantity as
//!     X_i = X_shared + hetero * perturbation_i
//! (clamped blend weights where the quantity must stay a probability or a
//! bounded range), so hetero = 0 collapses the fleet to bitwise-identical
//! agents. Randomness is split into purpose-keyed streams: shared draws,
//! one stream per agent, and one per agent pair for root directions, so a
//! fleet with more agents extends a smaller one without re-randomizing the
//! common prefix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::gauss::GaussMarkovProcess;
use crate::markov::{validate_chain, RngStream};
use crate::numerics::{self, Matrix};
use crate::operators::{
    Agent, Component, Family, FiniteSumAgent, InstanceFile, MrpAgent, ProblemFleet,
    QuadraticAgent,
};

/// Gauss-Markov noise parameters for the quadratic family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub q_spectral: f64,
    pub sigma_eps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticParams {
    pub m: usize,
    pub d: usize,
    pub hetero: f64,
    /// Condition number of every A_i: eigenvalues are log-uniformly spaced
    /// over [1/cond, 1], shared across the fleet.
    pub cond: f64,
    pub q_spectral: f64,
    pub sigma_eps: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MrpParams {
    pub m: usize,
    /// Number of environment states; must exceed d.
    pub s: usize,
    pub d: usize,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub hetero: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteSumParams {
    pub m: usize,
    /// Components per agent.
    pub n: usize,
    pub d: usize,
    pub hetero: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GeneratorParams {
    Quadratic(QuadraticParams),
    Mrp(MrpParams),
    FiniteSum(FiniteSumParams),
}

impl GeneratorParams {
    pub fn family(&self) -> Family {
        match self {
            GeneratorParams::Quadratic(_) => Family::Quadratic,
            GeneratorParams::Mrp(_) => Family::Mrp,
            GeneratorParams::FiniteSum(_) => Family::FiniteSum,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            GeneratorParams::Quadratic(p) => p.seed,
            GeneratorParams::Mrp(p) => p.seed,
            GeneratorParams::FiniteSum(p) => p.seed,
        }
    }

    pub fn num_agents(&self) -> usize {
        match self {
            GeneratorParams::Quadratic(p) => p.m,
            GeneratorParams::Mrp(p) => p.m,
            GeneratorParams::FiniteSum(p) => p.m,
        }
    }

    /// Same generator with a different fleet size; used by agent sweeps.
    pub fn with_num_agents(&self, m: usize) -> GeneratorParams {
        let mut out = self.clone();
        match &mut out {
            GeneratorParams::Quadratic(p) => p.m = m,
            GeneratorParams::Mrp(p) => p.m = m,
            GeneratorParams::FiniteSum(p) => p.m = m,
        }
        out
    }

    pub fn generate(&self) -> Result<ProblemFleet> {
        match self {
            GeneratorParams::Quadratic(p) => gen_quadratic_fleet(p),
            GeneratorParams::Mrp(p) => gen_mrp_fleet(p),
            GeneratorParams::FiniteSum(p) => gen_finitesum_fleet(p),
        }
    }

    pub fn instance(&self) -> Result<InstanceFile> {
        let fleet = self.generate()?;
        let noise = match self {
            GeneratorParams::Quadratic(p) => {
                Some(NoiseConfig { q_spectral: p.q_spectral, sigma_eps: p.sigma_eps })
            }
            _ => None,
        };
        let params = serde_json::to_value(self)
            .map_err(|e| Error::InvalidParam(format!("generator params not serializable: {e}")))?;
        Ok(fleet.to_instance(self.seed(), noise, params))
    }
}

/// Agent id reserved for fleet-shared draws.
const SHARED_ID: u64 = u64::MAX;

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    let g = rng.gaussians(rows * cols);
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = g[r * cols + c];
        }
    }
    m
}

/// Modified Gram-Schmidt on columns; input must have full column rank.
fn orthonormalize(m: &Matrix) -> Result<Matrix> {
    let (rows, cols) = (m.rows(), m.cols());
    if cols > rows {
        return Err(Error::dim(format!("cannot orthonormalize {cols} columns in {rows} rows")));
    }
    let mut cols_vec: Vec<Vec<f64>> = (0..cols).map(|c| (0..rows).map(|r| m[(r, c)]).collect()).collect();
    for k in 0..cols {
        for j in 0..k {
            let (head, tail) = cols_vec.split_at_mut(k);
            let proj = numerics::dot(&head[j], &tail[0]);
            numerics::axpy(&mut tail[0], -proj, &head[j]);
        }
        let norm = numerics::norm2(&cols_vec[k]);
        if norm < 1e-12 {
            return Err(Error::InvalidParam(format!("column {k} is linearly dependent")));
        }
        cols_vec[k].iter_mut().for_each(|v| *v /= norm);
    }
    Ok(Matrix::from_fn(rows, cols, |r, c| cols_vec[c][r]))
}

fn unit_vector(d: usize, rng: &mut RngStream) -> Vec<f64> {
    loop {
        let mut v = rng.gaussians(d);
        let norm = numerics::norm2(&v);
        if norm >= 1e-12 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

/// base + h * pert, except h = 0 returns base bitwise (avoids signed-zero
/// churn in the homogeneous-collapse identity).
fn blend_matrix(base: &Matrix, pert: &Matrix, h: f64) -> Matrix {
    if h == 0.0 {
        return base.clone();
    }
    let mut out = base.clone();
    out.add_scaled(pert, h);
    out
}

fn blend_vec(base: &[f64], pert: &[f64], h: f64) -> Vec<f64> {
    if h == 0.0 {
        return base.to_vec();
    }
    let mut out = base.to_vec();
    numerics::axpy(&mut out, h, pert);
    out
}

fn check_hetero(hetero: f64) -> Result<()> {
    if !hetero.is_finite() || hetero < 0.0 {
        return Err(Error::InvalidParam(format!("hetero {hetero} must be finite and >= 0")));
    }
    Ok(())
}

/// Quadratic fleet: shared log-spaced spectrum, per-agent rotations drifting
/// from a shared basis with hetero, local roots theta_base +- hetero * u on
/// antithetic direction pairs (so adjacent agents disagree by exactly
/// 2 * hetero in norm), and per-agent rotated Gauss-Markov noise.
pub fn gen_quadratic_fleet(p: &QuadraticParams) -> Result<ProblemFleet> {
    if p.m == 0 || p.d == 0 {
        return Err(Error::InvalidParam("m and d must be positive".into()));
    }
    check_hetero(p.hetero)?;
    if !p.cond.is_finite() || p.cond < 1.0 {
        return Err(Error::InvalidParam(format!("cond {} must be >= 1", p.cond)));
    }
    let mut shared = RngStream::new(p.seed, SHARED_ID, "quad-shared");
    let spectrum: Vec<f64> = (0..p.d)
        .map(|k| {
            let t = if p.d == 1 { 1.0 } else { k as f64 / (p.d - 1) as f64 };
            // log-uniform from 1/cond up to 1
            (-(1.0 - t) * p.cond.ln()).exp()
        })
        .collect();
    let lambda = Matrix::diag(&spectrum);
    let theta_base = shared.gaussians(p.d);
    let basis_base = gaussian_matrix(p.d, p.d, &mut shared);
    let noise_base = gaussian_matrix(p.d, p.d, &mut shared);
    let cost_base = shared.next_f64();

    let mut agents = Vec::with_capacity(p.m);
    for i in 0..p.m {
        let mut own = RngStream::new(p.seed, i as u64, "quad-agent");
        let basis_pert = gaussian_matrix(p.d, p.d, &mut own);
        let noise_pert = gaussian_matrix(p.d, p.d, &mut own);
        let cost_pert = 2.0 * own.next_f64() - 1.0;
        let cost_offset = if p.hetero == 0.0 { cost_base } else { cost_base + p.hetero * cost_pert };

        let rot = orthonormalize(&blend_matrix(&basis_base, &basis_pert, p.hetero))?;
        let a = rot.matmul(&lambda).matmul(&rot.transpose()).symmetric_part();

        let mut pair = RngStream::new(p.seed, (i / 2) as u64, "quad-rootdir");
        let dir = unit_vector(p.d, &mut pair);
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let scaled_dir: Vec<f64> = dir.iter().map(|v| sign * v).collect();
        let theta_star_i = blend_vec(&theta_base, &scaled_dir, p.hetero);
        let b = a.matvec(&theta_star_i);

        let q = orthonormalize(&blend_matrix(&noise_base, &noise_pert, p.hetero))?.scale(p.q_spectral);
        let noise = GaussMarkovProcess::new(q, p.sigma_eps)?;
        agents.push(Agent::Quadratic(QuadraticAgent::new(a, b, cost_offset, noise)?));
    }
    ProblemFleet::new(Family::Quadratic, agents)
}

/// Environment-state fleet: row-stochastic matrices blended toward a shared
/// base and smoothed with a 0.1-weight uniform kernel (keeps every chain
/// strictly positive, hence ergodic), shared-plus-perturbation rewards and
/// features, and discounts confined to [gamma_lo, gamma_hi].
pub fn gen_mrp_fleet(p: &MrpParams) -> Result<ProblemFleet> {
    if p.m == 0 || p.d == 0 {
        return Err(Error::InvalidParam("m and d must be positive".into()));
    }
    if p.s <= p.d {
        return Err(Error::InvalidParam(format!("need s > d, got s = {}, d = {}", p.s, p.d)));
    }
    check_hetero(p.hetero)?;
    if !(0.0..1.0).contains(&p.gamma_lo) || !(0.0..1.0).contains(&p.gamma_hi) || p.gamma_lo > p.gamma_hi {
        return Err(Error::InvalidParam(format!(
            "need 0 <= gamma_lo <= gamma_hi < 1, got [{}, {}]",
            p.gamma_lo, p.gamma_hi
        )));
    }
    let mut shared = RngStream::new(p.seed, SHARED_ID, "mrp-shared");
    let p_base = uniform_matrix(p.s, p.s, &mut shared);
    let r_base: Vec<f64> = (0..p.s).map(|_| shared.next_f64()).collect();
    let phi_base = gaussian_matrix(p.s, p.d, &mut shared);

    let w = p.hetero.min(1.0);
    let gamma_mid = 0.5 * (p.gamma_lo + p.gamma_hi);
    let gamma_half = 0.5 * (p.gamma_hi - p.gamma_lo);

    let mut agents = Vec::with_capacity(p.m);
    for i in 0..p.m {
        let mut accepted = None;
        for attempt in 0..100 {
            let mut own = RngStream::new(p.seed, i as u64, &format!("mrp-agent-a{attempt}"));
            let p_own = uniform_matrix(p.s, p.s, &mut own);
            let r_own: Vec<f64> = (0..p.s).map(|_| 2.0 * own.next_f64() - 1.0).collect();
            let phi_own = gaussian_matrix(p.s, p.d, &mut own);
            let gamma_u = 2.0 * own.next_f64() - 1.0;

            let raw = blend_convex(&p_base, &p_own, w);
            let Ok(chain) = validate_chain(smooth_rows(&raw, 0.1)) else { continue };
            let reward = blend_vec(&r_base, &r_own, p.hetero);
            let Ok(phi) = orthonormalize(&blend_matrix(&phi_base, &phi_own, p.hetero)) else {
                continue;
            };
            let gamma = if w == 0.0 { gamma_mid } else { gamma_mid + w * gamma_u * gamma_half };

            let Ok(agent) = MrpAgent::new(chain, reward, gamma, phi) else { continue };
            if agent.is_dissipative()? {
                accepted = Some(agent);
                break;
            }
        }
        let agent = accepted.ok_or_else(|| {
            Error::InvalidParam(format!("agent {i}: no dissipative draw in 100 attempts"))
        })?;
        agents.push(Agent::Mrp(agent));
    }
    ProblemFleet::new(Family::Mrp, agents)
}

/// Finite-sum fleet: component matrices 0.5 I + V^T V / d stay uniformly
/// positive definite at every hetero; index chains mix a rank-one uniform
/// part, laziness, and a random involution, all symmetric and doubly
/// stochastic, so the stationary law is exactly uniform.
pub fn gen_finitesum_fleet(p: &FiniteSumParams) -> Result<ProblemFleet> {
    if p.m == 0 || p.n == 0 || p.d == 0 {
        return Err(Error::InvalidParam("m, n, d must be positive".into()));
    }
    check_hetero(p.hetero)?;
    let mut shared = RngStream::new(p.seed, SHARED_ID, "fs-shared");
    let w_base: Vec<Matrix> = (0..p.n).map(|_| gaussian_matrix(p.d, p.d, &mut shared)).collect();
    let b_base: Vec<Vec<f64>> = (0..p.n).map(|_| shared.gaussians(p.d)).collect();
    let cost_base: Vec<f64> = (0..p.n).map(|_| shared.next_f64()).collect();
    let c_base = component_chain(p.n, &mut shared);

    let w = p.hetero.min(1.0);
    let mut agents = Vec::with_capacity(p.m);
    for i in 0..p.m {
        let mut own = RngStream::new(p.seed, i as u64, "fs-agent");
        let mut components = Vec::with_capacity(p.n);
        for j in 0..p.n {
            let w_own = gaussian_matrix(p.d, p.d, &mut own);
            let b_own = own.gaussians(p.d);
            let cost_pert = 2.0 * own.next_f64() - 1.0;
            let c = if p.hetero == 0.0 { cost_base[j] } else { cost_base[j] + p.hetero * cost_pert };
            let v = blend_matrix(&w_base[j], &w_own, p.hetero);
            let mut a = v.transpose().matmul(&v).scale(1.0 / p.d as f64);
            for k in 0..p.d {
                a[(k, k)] += 0.5;
            }
            components.push(Component { a, b: blend_vec(&b_base[j], &b_own, p.hetero), c });
        }
        let c_own = component_chain(p.n, &mut own);
        let chain = validate_chain(blend_convex(&c_base, &c_own, w))?;
        agents.push(Agent::FiniteSum(FiniteSumAgent::new(components, chain)?));
    }
    ProblemFleet::new(Family::FiniteSum, agents)
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.next_f64())
}

/// (1 - w) base + w own entrywise; w = 0 returns base bitwise.
fn blend_convex(base: &Matrix, own: &Matrix, w: f64) -> Matrix {
    if w == 0.0 {
        return base.clone();
    }
    let mut out = base.scale(1.0 - w);
    out.add_scaled(own, w);
    out
}

/// Row-normalizes `raw` and mixes in a uniform kernel with weight `delta`.
fn smooth_rows(raw: &Matrix, delta: f64) -> Matrix {
    let (rows, cols) = (raw.rows(), raw.cols());
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..rows {
        let sum: f64 = raw.row(r).iter().sum();
        for c in 0..cols {
            out[(r, c)] = (1.0 - delta) * raw[(r, c)] / sum + delta / cols as f64;
        }
    }
    out
}

/// Symmetric doubly stochastic index chain: a uniform part, a lazy part,
/// and a random involution. All three pieces are symmetric with row sums
/// one, so the blend is too and its stationary law is exactly uniform.
fn component_chain(n: usize, rng: &mut RngStream) -> Matrix {
    if n == 1 {
        return Matrix::from_rows(vec![vec![1.0]]);
    }
    let w_uniform = 0.2 + 0.3 * rng.next_f64();
    let w_lazy = (1.0 - w_uniform) * (0.3 + 0.4 * rng.next_f64());
    let w_swap = 1.0 - w_uniform - w_lazy;

    let mut order: Vec<usize> = (0..n).collect();
    for k in (1..n).rev() {
        let j = rng.next_below((k + 1) as u64) as usize;
        order.swap(k, j);
    }
    let mut partner: Vec<usize> = (0..n).collect();
    for pair in order.chunks_exact(2) {
        partner[pair[0]] = pair[1];
        partner[pair[1]] = pair[0];
    }

    Matrix::from_fn(n, n, |r, c| {
        let mut v = w_uniform / n as f64;
        if r == c {
            v += w_lazy;
        }
        if partner[r] == c {
            v += w_swap;
        }
        v
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{fleet_expected, measure_constants, AgentOperator};

    fn quad_params(m: usize, d: usize, hetero: f64) -> QuadraticParams {
        QuadraticParams { m, d, hetero, cond: 10.0, q_spectral: 0.5, sigma_eps: 0.2, seed: 42 }
    }

    #[test]
    fn quadratic_fleet_has_shared_spectrum_and_valid_constants() {
        let fleet = gen_quadratic_fleet(&quad_params(3, 4, 0.7)).unwrap();
        assert_eq!(fleet.num_agents(), 3);
        let constants = measure_constants(&fleet).unwrap();
        // Every A_i is a rotation of the same spectrum with extremes 1/cond and 1.
        assert!((constants.l_hat - 1.0).abs() < 1e-10, "l_hat = {}", constants.l_hat);
        assert!(constants.mu_hat >= 0.1 - 1e-10, "mu_hat = {}", constants.mu_hat);
        let at_root = fleet_expected(&fleet, &constants.theta_star).unwrap();
        assert!(numerics::norm2(&at_root) < 1e-10);
    }

    #[test]
    fn adjacent_agents_disagree_by_exactly_twice_hetero() {
        for (d, hetero) in [(1, 1.0), (5, 0.3)] {
            let fleet = gen_quadratic_fleet(&quad_params(2, d, hetero)).unwrap();
            let roots = fleet.local_roots().unwrap();
            let gap = numerics::norm2(&numerics::vec_sub(&roots[0], &roots[1]));
            assert!((gap - 2.0 * hetero).abs() < 1e-9, "gap {gap} at hetero {hetero}");
        }
    }

    #[test]
    fn zero_hetero_collapses_to_bitwise_identical_agents() {
        for params in [
            GeneratorParams::Quadratic(quad_params(4, 3, 0.0)),
            GeneratorParams::Mrp(MrpParams {
                m: 3,
                s: 5,
                d: 2,
                gamma_lo: 0.3,
                gamma_hi: 0.7,
                hetero: 0.0,
                seed: 9,
            }),
            GeneratorParams::FiniteSum(FiniteSumParams { m: 3, n: 2, d: 2, hetero: 0.0, seed: 9 }),
        ] {
            let fleet = params.generate().unwrap();
            let first = serde_json::to_string(&fleet.agents[0]).unwrap();
            for a in &fleet.agents[1..] {
                assert_eq!(serde_json::to_string(a).unwrap(), first, "family {}", fleet.family);
            }
        }
    }

    #[test]
    fn generation_is_deterministic_and_prefix_coupled() {
        let small = gen_quadratic_fleet(&quad_params(2, 3, 0.8)).unwrap();
        let large = gen_quadratic_fleet(&quad_params(6, 3, 0.8)).unwrap();
        for i in 0..2 {
            assert_eq!(
                serde_json::to_string(&small.agents[i]).unwrap(),
                serde_json::to_string(&large.agents[i]).unwrap(),
                "agent {i} changed when the fleet grew"
            );
        }
        let again = gen_quadratic_fleet(&quad_params(6, 3, 0.8)).unwrap();
        assert_eq!(
            serde_json::to_string(&large.agents).unwrap(),
            serde_json::to_string(&again.agents).unwrap()
        );
    }

    #[test]
    fn mrp_fleet_respects_ranges_and_mixes() {
        let params = MrpParams { m: 4, s: 8, d: 3, gamma_lo: 0.4, gamma_hi: 0.8, hetero: 0.9, seed: 3 };
        let fleet = gen_mrp_fleet(&params).unwrap();
        for a in &fleet.agents {
            let Agent::Mrp(m) = a else { panic!("family mismatch") };
            assert!(m.gamma() >= 0.4 && m.gamma() <= 0.8, "gamma {}", m.gamma());
            // Uniform smoothing keeps every transition probability positive.
            let t = m.chain().transition();
            for r in 0..8 {
                for c in 0..8 {
                    assert!(t[(r, c)] >= 0.1 / 8.0 - 1e-12);
                }
            }
            // Features stay column-orthonormal after blending.
            let gram = m.features().transpose().matmul(m.features());
            let dev = gram.sub(&Matrix::identity(3)).max_abs();
            assert!(dev < 1e-10, "gram deviation {dev}");
        }
        let constants = measure_constants(&fleet).unwrap();
        assert!(constants.mu_hat > 0.0);
    }

    #[test]
    fn finite_sum_chains_are_symmetric_with_uniform_stationary_law() {
        let params = FiniteSumParams { m: 5, n: 4, d: 3, hetero: 1.5, seed: 11 };
        let fleet = gen_finitesum_fleet(&params).unwrap();
        for a in &fleet.agents {
            let Agent::FiniteSum(fs) = a else { panic!("family mismatch") };
            let t = fs.index_chain().transition();
            assert!(t.sub(&t.transpose()).max_abs() < 1e-14, "chain not symmetric");
            for &pi in fs.index_chain().stationary() {
                assert!((pi - 0.25).abs() <= 1e-10, "stationary {pi} not uniform");
            }
        }
        let constants = measure_constants(&fleet).unwrap();
        assert!(constants.mu_hat >= 0.5 - 1e-9, "components carry a 0.5 I floor");
    }

    #[test]
    fn single_component_fleets_work() {
        let params = FiniteSumParams { m: 2, n: 1, d: 2, hetero: 0.5, seed: 1 };
        let fleet = gen_finitesum_fleet(&params).unwrap();
        assert_eq!(fleet.num_agents(), 2);
        let mut agent = fleet.agents[0].clone();
        let mut rng = RngStream::new(0, 0, "obs");
        agent.noisy(&[0.0, 0.0], &mut rng).unwrap();
    }

    #[test]
    fn noise_processes_have_the_requested_spectral_radius() {
        let fleet = gen_quadratic_fleet(&quad_params(2, 4, 0.5)).unwrap();
        for a in &fleet.agents {
            let Agent::Quadratic(q) = a else { panic!("family mismatch") };
            let rho = numerics::spectral_radius(q.noise().q());
            assert!((rho - 0.5).abs() < 1e-6, "rho {rho}");
        }
    }

    #[test]
    fn generators_reject_invalid_parameters() {
        assert!(gen_quadratic_fleet(&QuadraticParams { cond: 0.5, ..quad_params(2, 2, 0.1) }).is_err());
        assert!(gen_quadratic_fleet(&QuadraticParams { hetero: -1.0, ..quad_params(2, 2, 0.1) }).is_err());
        assert!(gen_quadratic_fleet(&quad_params(0, 2, 0.1)).is_err());
        let bad_mrp = MrpParams { m: 1, s: 3, d: 3, gamma_lo: 0.1, gamma_hi: 0.2, hetero: 0.0, seed: 0 };
        assert!(gen_mrp_fleet(&bad_mrp).is_err(), "s must exceed d");
        let bad_gamma = MrpParams { m: 1, s: 4, d: 2, gamma_lo: 0.5, gamma_hi: 0.2, hetero: 0.0, seed: 0 };
        assert!(gen_mrp_fleet(&bad_gamma).is_err());
        assert!(gen_finitesum_fleet(&FiniteSumParams { m: 0, n: 1, d: 1, hetero: 0.0, seed: 0 }).is_err());
    }

    #[test]
    fn instance_files_round_trip_bitwise() {
        let params = GeneratorParams::Quadratic(quad_params(3, 3, 0.6));
        let inst = params.instance().unwrap();
        let dir = std::env::temp_dir().join(format!("fedsa-gen-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("instance.json");
        inst.save(&path).unwrap();
        let loaded = InstanceFile::load(&path).unwrap();
        assert_eq!(
            serde_json::to_string(&loaded).unwrap(),
            serde_json::to_string(&inst).unwrap(),
            "reload must reproduce the exact instance"
        );
        let fleet = loaded.fleet().unwrap();
        assert_eq!(fleet.dim, 3);
        std::fs::remove_dir_all(&dir).ok();
    }
}
