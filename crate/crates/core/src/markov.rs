//! Absorbing Markov chain of the accumulated number of successful UEs in a slot.
//!
//! State `i` in `0..=n` counts UEs that have already been acknowledged; state
//! `n` absorbs. One jump is one transmission round (`K_rep` repetitions plus
//! `K_F` feedback S-TTIs), and a slot allows at most `K` jumps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::access_prob;
use crate::outage::OutageTable;
use crate::phy::ln_gamma;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("a chain needs at least one initial contender")]
    EmptyChain,
    #[error("a slot needs at least one transmission round")]
    NoRounds,
    #[error("{count} successes out of {n_tx} transmitters")]
    CountExceedsTransmitters { count: usize, n_tx: usize },
    #[error("{n_tx} transmitters exceed the {n_antennas} entries of the outage table")]
    TransmittersExceedAntennas { n_tx: usize, n_antennas: usize },
}

/// Binomial pmf `C(n, k) p^k (1-p)^(n-k)`.
///
/// Evaluated in linear arithmetic; falls back to log-domain accumulation when
/// an intermediate power underflows below 1e-300.
pub fn binomial_pmf(n: usize, k: usize, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let k_small = k.min(n - k);
    let mut coef = 1.0f64;
    for i in 0..k_small {
        coef = coef * (n - i) as f64 / (i + 1) as f64;
    }
    let succ = p.powi(k as i32);
    let fail = (1.0 - p).powi((n - k) as i32);
    if succ < 1e-300 || fail < 1e-300 || !coef.is_finite() {
        let ln_coef = ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0);
        let ln = ln_coef + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p();
        return ln.exp();
    }
    coef * succ * fail
}

/// `p^SUCC(count | n_tx)`: exactly `count` of `n_tx` simultaneous transmitters get through.
pub fn trans_success(count: usize, n_tx: usize, table: &OutageTable) -> Result<f64, MarkovError> {
    if count > n_tx {
        return Err(MarkovError::CountExceedsTransmitters { count, n_tx });
    }
    if n_tx == 0 {
        return Ok(1.0);
    }
    let rho = table
        .get(n_tx)
        .ok_or(MarkovError::TransmittersExceedAntennas {
            n_tx,
            n_antennas: table.n_antennas(),
        })?;
    Ok(binomial_pmf(n_tx, count, 1.0 - rho))
}

/// `p^TX(n_tx | residual)`: exactly `n_tx` residual contenders transmit this round.
pub fn trans_attempt(n_tx: usize, residual: usize, n_antennas: usize) -> f64 {
    binomial_pmf(residual, n_tx, access_prob(residual, n_antennas))
}

/// Transition structure for one initial contention level, split into the
/// transient block `Q` and the column `y` into the absorbing state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorbingChain {
    n: usize,
    n_antennas: usize,
    k_max: usize,
    /// Row-major `n x n`.
    q: Vec<f64>,
    y: Vec<f64>,
}

impl AbsorbingChain {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    #[inline]
    pub fn q(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.n + j]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Transition probability between any two states of `0..=n`.
    pub fn transition(&self, from: usize, to: usize) -> f64 {
        match (from == self.n, to == self.n) {
            (true, true) => 1.0,
            (true, false) => 0.0,
            (false, true) => self.y[from],
            (false, false) => self.q(from, to),
        }
    }

    /// Full `(n+1) x (n+1)` matrix in canonical form.
    pub fn full_matrix(&self) -> Vec<Vec<f64>> {
        (0..=self.n)
            .map(|i| (0..=self.n).map(|j| self.transition(i, j)).collect())
            .collect()
    }

    /// Same chain with a different jump budget.
    pub fn with_k_max(&self, k_max: usize) -> Self {
        Self {
            k_max,
            ..self.clone()
        }
    }

    /// Highest column that can be nonzero in transient row `i`.
    #[inline]
    fn band_end(&self, i: usize) -> usize {
        (i + self.n_antennas).min(self.n - 1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("from");
        for j in 0..=self.n {
            out.push_str(&format!(",to_{j}"));
        }
        out.push('\n');
        for (i, row) in self.full_matrix().iter().enumerate() {
            out.push_str(&i.to_string());
            for v in row {
                out.push_str(&format!(",{v:e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Probability of moving from `i` to `j > i` successes, `j - i <= M`.
fn forward_transition(n: usize, i: usize, j: usize, n_antennas: usize, table: &OutageTable) -> f64 {
    let residual = n - i;
    let gained = j - i;
    if access_prob(residual, n_antennas) >= 1.0 {
        // residual < M here, so every contender transmits.
        return binomial_pmf(residual, gained, 1.0 - table.rho(residual));
    }
    let top = residual.min(n_antennas);
    (gained..=top)
        .map(|n_tx| {
            trans_attempt(n_tx, residual, n_antennas)
                * binomial_pmf(n_tx, gained, 1.0 - table.rho(n_tx))
        })
        .sum()
}

/// Builds the chain for `n` initial contenders with jump budget `k_max`.
pub fn build_chain(
    n: usize,
    k_max: usize,
    table: &OutageTable,
) -> Result<AbsorbingChain, MarkovError> {
    if n == 0 {
        return Err(MarkovError::EmptyChain);
    }
    if k_max == 0 {
        return Err(MarkovError::NoRounds);
    }
    let m = table.n_antennas();
    let mut q = vec![0.0; n * n];
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut moved = 0.0;
        for j in (i + 1)..=(i + m).min(n) {
            let p = forward_transition(n, i, j, m, table);
            moved += p;
            if j == n {
                y[i] = p;
            } else {
                q[i * n + j] = p;
            }
        }
        q[i * n + i] = (1.0 - moved).max(0.0);
    }
    Ok(AbsorbingChain {
        n,
        n_antennas: m,
        k_max,
        q,
        y,
    })
}

/// Absorption statistics of a chain started in state 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionStats {
    /// `P(T_n <= K)`.
    pub lambda_n: f64,
    /// `P(T_n > K)`, summed from the surviving transient mass rather than `1 - lambda_n`.
    pub failure_prob: f64,
    /// `absorb_by_jump[k] = P(T_n = k + 1) = [Q^k y]_1`.
    pub absorb_by_jump: Vec<f64>,
    /// `survival[k] = P(T_n > k)`, the transient mass after `k` jumps, `k = 0..=K`.
    pub survival: Vec<f64>,
    /// `[Q^K]_{1, i+1}`: probability of ending the slot with exactly `i` successes.
    pub residual_dist: Vec<f64>,
    /// Expected rounds the BS serves the slot (absorption time capped at `K`).
    pub expected_rounds: f64,
    /// Expected transmissions summed over rounds: `sum_k sum_i [Q^k]_{1,i+1} (n-i) f_p(n-i)`.
    pub expected_transmissions: f64,
}

/// Iterates the row vector `e_1 Q^k` for `k = 0..K`; no matrix inverse or power is formed.
pub fn absorption_stats(chain: &AbsorbingChain) -> AbsorptionStats {
    let n = chain.n;
    let k_max = chain.k_max;
    let mut dist = vec![0.0; n];
    dist[0] = 1.0;
    let mut next = vec![0.0; n];
    let mut absorb_by_jump = Vec::with_capacity(k_max);
    let mut survival = Vec::with_capacity(k_max + 1);
    let mut expected_transmissions = 0.0;
    let tx_weight: Vec<f64> = (0..n)
        .map(|i| {
            let residual = n - i;
            residual as f64 * access_prob(residual, chain.n_antennas)
        })
        .collect();

    for _ in 0..k_max {
        survival.push(dist.iter().sum());
        absorb_by_jump.push(dist.iter().zip(&chain.y).map(|(d, y)| d * y).sum());
        expected_transmissions += dist.iter().zip(&tx_weight).map(|(d, w)| d * w).sum::<f64>();
        next.iter_mut().for_each(|v| *v = 0.0);
        for (i, &d) in dist.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for j in i..=chain.band_end(i) {
                next[j] += d * chain.q(i, j);
            }
        }
        std::mem::swap(&mut dist, &mut next);
    }
    let failure_prob: f64 = dist.iter().sum();
    survival.push(failure_prob);
    let lambda_n: f64 = absorb_by_jump.iter().sum();
    let expected_rounds = absorb_by_jump
        .iter()
        .enumerate()
        .map(|(k, p)| (k + 1) as f64 * p)
        .sum::<f64>()
        + failure_prob * k_max as f64;

    AbsorptionStats {
        lambda_n,
        failure_prob,
        absorb_by_jump,
        survival,
        residual_dist: dist,
        expected_rounds,
        expected_transmissions,
    }
}
