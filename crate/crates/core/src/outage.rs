//! Conditional outage probability of a UE under ZF multi-user detection.
//!
//! With `N'` simultaneous transmitters, `1/[(H^H H)^-1]_{n,n}` of the estimated
//! channel is Gamma-distributed with shape `M - N' + 1` and scale `delta^2 + 1`.
//! Summing `K_rep` independent repetitions multiplies the shape by `K_rep`, and
//! outage is the event that the combined SNR stays below `2^Omega - 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, SystemConfig};
use crate::phy::{self, PhyError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OutageError {
    #[error("{n_tx} simultaneous transmitters is outside 1..={n_antennas}")]
    TransmittersOutOfRange { n_tx: usize, n_antennas: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error("outage value {0} is not a probability")]
    NotAProbability(f64),
}

/// Gamma shape `(M - N' + 1) * K_rep` of the combined inverse ZF diagonal.
pub fn gamma_shape(n_antennas: usize, n_tx: usize, k_rep: usize) -> f64 {
    ((n_antennas - n_tx + 1) * k_rep) as f64
}

/// Argument of the regularized gamma CDF:
/// `(N0 B + xi delta^2 N') (2^Omega - 1) / (xi (delta^2 + 1))`.
pub fn gamma_argument(config: &SystemConfig, n_tx: usize, snr_threshold: f64) -> f64 {
    let xi = config.etp_w();
    let d2 = config.est_error * config.est_error;
    (config.noise_power_w() + xi * d2 * n_tx as f64) * snr_threshold / (xi * (d2 + 1.0))
}

/// `rho(N')`: probability that one of `n_tx` simultaneous ZF-detected UEs misses the rate target.
pub fn outage_prob(config: &SystemConfig, n_tx: usize) -> Result<f64, OutageError> {
    let threshold = phy::snr_threshold(
        f64::from(config.packet_bits),
        config.channel_uses(),
        config.bler_target,
    )?;
    outage_with_threshold(config, n_tx, threshold)
}

fn outage_with_threshold(
    config: &SystemConfig,
    n_tx: usize,
    snr_threshold: f64,
) -> Result<f64, OutageError> {
    if n_tx == 0 || n_tx > config.n_antennas {
        return Err(OutageError::TransmittersOutOfRange {
            n_tx,
            n_antennas: config.n_antennas,
        });
    }
    let shape = gamma_shape(config.n_antennas, n_tx, config.k_rep);
    Ok(phy::reg_lower_gamma(shape, gamma_argument(config, n_tx, snr_threshold)))
}

/// `rho(N')` for every `N'` in `1..=M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageTable {
    rho: Vec<f64>,
    config_hash: u64,
}

impl OutageTable {
    /// Injects explicit outage values (index 0 holds `rho(1)`).
    pub fn from_values(rho: Vec<f64>) -> Result<Self, OutageError> {
        if let Some(&bad) = rho.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(OutageError::NotAProbability(bad));
        }
        Ok(Self { rho, config_hash: 0 })
    }

    /// Outage with `n_tx` simultaneous transmitters.
    ///
    /// Panics when `n_tx` is outside `1..=M`; chain construction never asks for that.
    #[inline]
    pub fn rho(&self, n_tx: usize) -> f64 {
        self.rho[n_tx - 1]
    }

    pub fn get(&self, n_tx: usize) -> Option<f64> {
        n_tx.checked_sub(1).and_then(|i| self.rho.get(i)).copied()
    }

    pub fn n_antennas(&self) -> usize {
        self.rho.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.rho
    }

    /// Hash of the generating config, 0 for injected tables.
    pub fn config_hash(&self) -> u64 {
        self.config_hash
    }

    /// `n_tx,rho` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n_tx,rho\n");
        for (i, r) in self.rho.iter().enumerate() {
            out.push_str(&format!("{},{:e}\n", i + 1, r));
        }
        out
    }
}

pub fn build_outage_table(config: &SystemConfig) -> Result<OutageTable, OutageError> {
    config.validate()?;
    let threshold = phy::snr_threshold(
        f64::from(config.packet_bits),
        config.channel_uses(),
        config.bler_target,
    )?;
    let rho = (1..=config.n_antennas)
        .map(|n_tx| outage_with_threshold(config, n_tx, threshold))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OutageTable {
        rho,
        config_hash: config.config_hash(),
    })
}
