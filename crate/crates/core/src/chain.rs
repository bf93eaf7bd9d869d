//! Markov-chain analysis: stationary distributions, mixing times, and the
//! spectral quantities entering the average-reward gap bound.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::mdp::{PolicyLike, TabularMdp};

const EIGEN_GAP_TOL: f64 = 1e-8;
const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;

/// Spectral and mixing summary of the chain induced by a policy.
#[derive(Debug, Clone)]
pub struct ChainAnalysis {
    /// Stationary distribution over states.
    pub stationary: Vec<f64>,
    /// Smallest `t` with worst-start TV distance to the stationary
    /// distribution at most 1/4.
    pub mixing_time: usize,
    /// Magnitude of the second-largest eigenvalue of the chain.
    pub lambda2: f64,
    /// Condition number of the right-eigenvector matrix.
    pub kappa: f64,
    /// `kappa * ||r||_2` with `r` the per-state reward under the policy.
    pub beta: f64,
    /// Minimum state-action stationary mass `rho(s) * pi(a|s)`. Zero for
    /// deterministic policies, positive only for covering policies.
    pub p_min: f64,
}

/// Half the L1 distance between two discrete distributions.
pub fn tv_distance(rho1: &[f64], rho2: &[f64]) -> Result<f64> {
    if rho1.len() != rho2.len() {
        return Err(Error::DimensionMismatch(format!(
            "distribution lengths {} and {}",
            rho1.len(),
            rho2.len()
        )));
    }
    Ok(0.5 * rho1.iter().zip(rho2).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Whether a stochastic matrix is irreducible and aperiodic, via boolean
/// powers up to the Wielandt bound.
pub fn is_ergodic(chain: &DMatrix<f64>) -> bool {
    let n = chain.nrows();
    if n == 1 {
        return true;
    }
    let reach = |m: &Vec<bool>| m.iter().all(|&x| x);
    let mut cur: Vec<bool> = chain.iter().map(|&x| x > 0.0).collect();
    // column-major storage; index (i, j) = i + j * n
    let base = cur.clone();
    let cap = n * n - 2 * n + 2;
    for _ in 0..cap {
        if reach(&cur) {
            return true;
        }
        let mut next = vec![false; n * n];
        for j in 0..n {
            for k in 0..n {
                if base[k + j * n] {
                    for i in 0..n {
                        if cur[i + k * n] {
                            next[i + j * n] = true;
                        }
                    }
                }
            }
        }
        if next == cur {
            return false;
        }
        cur = next;
    }
    reach(&cur)
}

/// Stationary distribution of an ergodic chain, by solving the linear
/// system `(P^T - I) rho = 0` with a normalisation row.
pub fn steady_state(chain: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = chain.nrows();
    if chain.ncols() != n {
        return Err(Error::DimensionMismatch("chain matrix must be square".into()));
    }
    if !is_ergodic(chain) {
        return Err(Error::NotErgodic(
            "chain is reducible or periodic; no unique mixing stationary distribution".into(),
        ));
    }
    let mut system = chain.transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        system[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let rho = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NotErgodic("singular stationarity system".into()))?;
    if rho.iter().any(|&p| p < -1e-12) {
        return Err(Error::NotErgodic("stationary solve produced negative mass".into()));
    }
    let rho: Vec<f64> = rho.iter().map(|&p| p.max(0.0)).collect();
    let residual = stationary_residual(chain, &rho);
    if residual > STATIONARY_RESIDUAL_TOL {
        return Err(Error::NotErgodic(format!(
            "stationarity residual {residual:.3e} too large"
        )));
    }
    Ok(rho)
}

fn stationary_residual(chain: &DMatrix<f64>, rho: &[f64]) -> f64 {
    let n = chain.nrows();
    (0..n)
        .map(|j| {
            let prod: f64 = (0..n).map(|i| rho[i] * chain[(i, j)]).sum();
            (prod - rho[j]).abs()
        })
        .fold(0.0, f64::max)
}

/// Smallest `t` with `max_s TV(e_s^T P^t, rho) <= 1/4`, by exact matrix
/// powers. Errors if `t` would exceed `cap`.
pub fn mixing_time(chain: &DMatrix<f64>, rho: &[f64], cap: usize) -> Result<usize> {
    let n = chain.nrows();
    let mut power = chain.clone();
    let mut last_tv = f64::INFINITY;
    for t in 1..=cap {
        let worst = (0..n)
            .map(|s| {
                let row: Vec<f64> = (0..n).map(|j| power[(s, j)]).collect();
                tv_distance(&row, rho).expect("same length")
            })
            .fold(0.0, f64::max);
        if worst <= 0.25 {
            return Ok(t);
        }
        last_tv = worst;
        power *= chain;
    }
    Err(Error::MixingTimeCapExceeded { cap, last_tv })
}

/// Long-run per-step expected reward of a policy on an ergodic chain.
pub fn average_reward<P: PolicyLike + ?Sized>(mdp: &TabularMdp, policy: &P) -> Result<f64> {
    let chain = mdp.induced_chain(policy);
    let rho = steady_state(&chain)?;
    let r_pi = mdp.induced_reward(policy);
    Ok(rho.iter().zip(&r_pi).map(|(p, r)| p * r).sum())
}

/// Eigenvalues of a real matrix ordered by decreasing magnitude.
fn eigenvalues_by_magnitude(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut eigs: Vec<Complex<f64>> = m.clone().complex_eigenvalues().iter().cloned().collect();
    eigs.sort_by(|a, b| b.norm().partial_cmp(&a.norm()).unwrap());
    eigs
}

/// Right eigenvector for a known eigenvalue, by shifted inverse iteration.
fn right_eigenvector(
    m: &DMatrix<Complex<f64>>,
    lambda: Complex<f64>,
) -> Result<DVector<Complex<f64>>> {
    let n = m.nrows();
    let shift = lambda + Complex::new(1e-10, 1e-10);
    let shifted = m - DMatrix::<Complex<f64>>::identity(n, n) * shift;
    let lu = shifted.lu();
    let mut v = DVector::<Complex<f64>>::from_element(n, Complex::new(1.0, 0.0));
    for _ in 0..8 {
        let next = lu
            .solve(&v)
            .ok_or_else(|| Error::Numeric("singular inverse-iteration system".into()))?;
        let norm = next.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Numeric("inverse iteration degenerated".into()));
        }
        v = next / Complex::new(norm, 0.0);
    }
    Ok(v)
}

/// Singular values of a complex matrix via the Hermitian Gram matrix,
/// embedded as a real symmetric matrix.
fn singular_value_range(m: &DMatrix<Complex<f64>>) -> (f64, f64) {
    let n = m.nrows();
    let gram = m.adjoint() * m;
    let mut embed = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = gram[(i, j)];
            embed[(i, j)] = z.re;
            embed[(i + n, j + n)] = z.re;
            embed[(i + n, j)] = z.im;
            embed[(i, j + n)] = -z.im;
        }
    }
    let eigs = embed.symmetric_eigen().eigenvalues;
    let max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    (max.max(0.0).sqrt(), min.max(0.0).sqrt())
}

/// Full chain analysis for the chain induced by `policy`.
///
/// Requires an ergodic induced chain and, for the condition number, `S`
/// distinct eigenvalues. The mixing-time search is capped at `mix_cap`.
pub fn chain_analysis<P: PolicyLike + ?Sized>(
    mdp: &TabularMdp,
    policy: &P,
    mix_cap: usize,
) -> Result<ChainAnalysis> {
    let chain = mdp.induced_chain(policy);
    let rho = steady_state(&chain)?;
    let t = mixing_time(&chain, &rho, mix_cap)?;

    let eigs = eigenvalues_by_magnitude(&chain);
    let n = eigs.len();
    let mut min_gap = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            min_gap = min_gap.min((eigs[i] - eigs[j]).norm());
        }
    }
    if n > 1 && min_gap < EIGEN_GAP_TOL {
        return Err(Error::RepeatedEigenvalues {
            gap: min_gap,
            tol: EIGEN_GAP_TOL,
        });
    }
    let lambda2 = if n > 1 { eigs[1].norm() } else { 0.0 };

    let chain_c: DMatrix<Complex<f64>> = chain.map(|x| Complex::new(x, 0.0));
    let mut sigma = DMatrix::<Complex<f64>>::zeros(n, n);
    for (k, &lambda) in eigs.iter().enumerate() {
        let v = right_eigenvector(&chain_c, lambda)?;
        sigma.set_column(k, &v);
    }
    let (smax, smin) = singular_value_range(&sigma);
    if smin <= 0.0 {
        return Err(Error::Numeric("singular eigenvector matrix".into()));
    }
    let kappa = smax / smin;

    let r_pi = mdp.induced_reward(policy);
    let r_norm: f64 = r_pi.iter().map(|r| r * r).sum::<f64>().sqrt();
    let beta = kappa * r_norm;

    let p_min = (0..mdp.num_states())
        .flat_map(|s| (0..mdp.num_actions()).map(move |a| (s, a)))
        .map(|(s, a)| rho[s] * policy.prob(s, a))
        .fold(f64::INFINITY, f64::min);

    Ok(ChainAnalysis {
        stationary: rho,
        mixing_time: t,
        lambda2,
        kappa,
        beta,
        p_min,
    })
}
