//! System-level metrics assembled from the per-contention-level chains:
//! delay-constrained error probability, throughput, average power and
//! energy efficiency.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{pathloss_linear, ConfigError, SystemConfig, CONFIG_KEYS};
use crate::markov::{absorption_stats, binomial_pmf, build_chain, AbsorptionStats, MarkovError};
use crate::outage::{build_outage_table, OutageError, OutageTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Outage(#[from] OutageError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
    #[error("injected outage table covers {table} antennas but the config has {config}")]
    TableMismatch { table: usize, config: usize },
}

/// Binomial distribution of the number of packets arriving in a slot, index `0..=N`.
pub fn arrival_dist(n_ues: usize, arrival_prob: f64) -> Vec<f64> {
    (0..=n_ues)
        .map(|n| binomial_pmf(n_ues, n, arrival_prob))
        .collect()
}

/// Expected full-inversion transmit power of a UE placed uniformly in the
/// configured distance interval, or the explicit override when set.
pub fn mean_ue_power(config: &SystemConfig) -> Result<f64, ConfigError> {
    if let Some(p) = config.mean_ue_power_w {
        return Ok(p);
    }
    let (d1, d2) = config.ue_distance_range_m;
    if d2 < d1 {
        return Err(ConfigError::InvalidField {
            field: "ue_distance_range_m",
            reason: format!("max {d2} is below min {d1}"),
        });
    }
    let xi = config.etp_w();
    if d2 == d1 {
        return Ok(xi / pathloss_linear(d1, &config.pathloss)?);
    }
    // 1/alpha(d) = 10^(-intercept/10) d^e with e = slope/10; integrate over [d1, d2].
    let e = config.pathloss.slope_db / 10.0;
    let scale = 10f64.powf(-config.pathloss.intercept_db / 10.0);
    Ok(xi * scale * (d2.powf(e + 1.0) - d1.powf(e + 1.0)) / ((e + 1.0) * (d2 - d1)))
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: SystemConfig,
    /// Delay-constrained error probability.
    pub epsilon: f64,
    /// `lambda[n-1]` for `n = 1..=N`.
    pub lambda: Vec<f64>,
    /// Throughput in bits/s with the unconditional `1 - epsilon` inside each bracket.
    pub throughput_bps: f64,
    /// Throughput with `n * lambda_n` in place of `n * (1 - epsilon)`.
    pub throughput_cond_bps: f64,
    pub power_w: f64,
    pub ue_power_w: f64,
    pub bs_power_w: f64,
    /// `throughput / power` in bits per joule; `None` when no traffic arrives.
    pub efficiency_bpj: Option<f64>,
    pub efficiency_cond_bpj: Option<f64>,
    pub p_arrival: Vec<f64>,
    pub mean_ue_power_w: f64,
}

/// Columns appended after the config fields in [`MetricsReport::csv_row`].
pub const METRIC_COLUMNS: &[&str] = &[
    "epsilon",
    "throughput_bps",
    "power_w",
    "efficiency_bpj",
    "throughput_cond_bps",
    "efficiency_cond_bpj",
];

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

impl MetricsReport {
    pub fn csv_header() -> String {
        CONFIG_KEYS
            .iter()
            .chain(METRIC_COLUMNS)
            .copied()
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cells: Vec<String> = CONFIG_KEYS
            .iter()
            .map(|k| self.config.get(k).expect("canonical key"))
            .collect();
        cells.push(format!("{:e}", self.epsilon));
        cells.push(format!("{:e}", self.throughput_bps));
        cells.push(format!("{:e}", self.power_w));
        cells.push(opt_cell(self.efficiency_bpj));
        cells.push(format!("{:e}", self.throughput_cond_bps));
        cells.push(opt_cell(self.efficiency_cond_bpj));
        cells.join(",")
    }
}

/// Chains depend only on `(M, K, rho)`, so configs that differ in `N`, `mu`
/// or the power parameters share one cache.
#[derive(Debug)]
struct ChainCache {
    n_antennas: usize,
    k_max: usize,
    table: OutageTable,
    stats: Mutex<HashMap<usize, Arc<AbsorptionStats>>>,
}

impl ChainCache {
    fn get(&self, n: usize) -> Result<Arc<AbsorptionStats>, MarkovError> {
        if let Some(s) = self.stats.lock().expect("cache lock").get(&n) {
            return Ok(Arc::clone(s));
        }
        let stats = Arc::new(absorption_stats(&build_chain(n, self.k_max, &self.table)?));
        Ok(Arc::clone(
            self.stats
                .lock()
                .expect("cache lock")
                .entry(n)
                .or_insert(stats),
        ))
    }
}

/// Analytical engine for one configuration.
#[derive(Debug, Clone)]
pub struct Analyzer {
    config: SystemConfig,
    cache: Arc<ChainCache>,
}

impl Analyzer {
    pub fn new(config: SystemConfig) -> Result<Self, MetricsError> {
        let table = build_outage_table(&config)?;
        Self::with_outage_table(config, table)
    }

    /// Uses `table` instead of the closed-form outage values.
    pub fn with_outage_table(config: SystemConfig, table: OutageTable) -> Result<Self, MetricsError> {
        config.validate()?;
        if table.n_antennas() != config.n_antennas {
            return Err(MetricsError::TableMismatch {
                table: table.n_antennas(),
                config: config.n_antennas,
            });
        }
        let k_max = config.rounds()?;
        Ok(Self {
            cache: Arc::new(ChainCache {
                n_antennas: config.n_antennas,
                k_max,
                table,
                stats: Mutex::new(HashMap::new()),
            }),
            config,
        })
    }

    /// Engine for `config`, sharing cached chains when only `N`, `mu` or
    /// power-related fields differ from the current one.
    pub fn rebind(&self, config: SystemConfig) -> Result<Self, MetricsError> {
        config.validate()?;
        let same_chains = config.n_antennas == self.cache.n_antennas
            && config.rounds()? == self.cache.k_max
            && (self.cache.table.config_hash() == 0
                || build_outage_table(&config)?.values() == self.cache.table.values());
        if same_chains {
            Ok(Self {
                config,
                cache: Arc::clone(&self.cache),
            })
        } else {
            Self::new(config)
        }
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn outage_table(&self) -> &OutageTable {
        &self.cache.table
    }

    /// Absorption statistics for `n` initial contenders.
    pub fn stats(&self, n: usize) -> Result<Arc<AbsorptionStats>, MetricsError> {
        Ok(self.cache.get(n)?)
    }

    fn all_stats(&self) -> Result<Vec<Arc<AbsorptionStats>>, MetricsError> {
        (1..=self.config.n_ues)
            .into_par_iter()
            .map(|n| self.stats(n))
            .collect()
    }

    pub fn arrival_dist(&self) -> Vec<f64> {
        arrival_dist(self.config.n_ues, self.config.arrival_prob)
    }

    pub fn delay_constrained_error(&self) -> Result<f64, MetricsError> {
        let p = self.arrival_dist();
        let stats = self.all_stats()?;
        Ok(weighted_sum(&p, &stats, |_, s| s.failure_prob))
    }

    pub fn report(&self) -> Result<MetricsReport, MetricsError> {
        let cfg = &self.config;
        let p = self.arrival_dist();
        let stats = self.all_stats()?;
        let k = self.cache.k_max as f64;
        let round_trip = cfg.round_trip() as f64;

        let epsilon = weighted_sum(&p, &stats, |_, s| s.failure_prob);
        // sum_{i=1}^{n-1} i p^s_{i|n}
        let partial = |s: &AbsorptionStats| -> f64 {
            s.residual_dist
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, v)| i as f64 * v)
                .sum::<f64>()
        };
        let per_bit = f64::from(cfg.packet_bits) / (round_trip * k * cfg.stti_duration_s);
        let throughput_bps =
            weighted_sum(&p, &stats, |n, s| partial(s) + n as f64 * (1.0 - epsilon)) * per_bit;
        let throughput_cond_bps =
            weighted_sum(&p, &stats, |n, s| partial(s) + n as f64 * s.lambda_n) * per_bit;

        let mean_ue = mean_ue_power(cfg)?;
        let ue_power_w = mean_ue * cfg.k_rep as f64 / (k * round_trip)
            * weighted_sum(&p, &stats, |_, s| s.expected_transmissions);
        let bs_power_w = (cfg.p_bs_tx_w() / round_trip
            + cfg.n_antennas as f64 * cfg.p_circuit_antenna_w())
            * weighted_sum(&p, &stats, |_, s| s.expected_rounds);
        let power_w = ue_power_w + bs_power_w;
        let ratio = |num: f64| (power_w > 0.0).then(|| num / power_w);

        Ok(MetricsReport {
            config: cfg.clone(),
            epsilon,
            lambda: stats.iter().map(|s| s.lambda_n).collect(),
            throughput_bps,
            throughput_cond_bps,
            power_w,
            ue_power_w,
            bs_power_w,
            efficiency_bpj: ratio(throughput_bps),
            efficiency_cond_bpj: ratio(throughput_cond_bps),
            p_arrival: p,
            mean_ue_power_w: mean_ue,
        })
    }
}

/// `sum_{n>=1} p_n f(n, stats_n)`; the `n = 0` slot never contributes.
fn weighted_sum(
    p: &[f64],
    stats: &[Arc<AbsorptionStats>],
    f: impl Fn(usize, &AbsorptionStats) -> f64,
) -> f64 {
    stats
        .iter()
        .enumerate()
        .map(|(idx, s)| p[idx + 1] * f(idx + 1, s))
        .sum()
}

pub fn delay_constrained_error(config: &SystemConfig) -> Result<f64, MetricsError> {
    Analyzer::new(config.clone())?.delay_constrained_error()
}

pub fn throughput(config: &SystemConfig) -> Result<f64, MetricsError> {
    Ok(Analyzer::new(config.clone())?.report()?.throughput_bps)
}

pub fn system_power(config: &SystemConfig) -> Result<f64, MetricsError> {
    Ok(Analyzer::new(config.clone())?.report()?.power_w)
}

pub fn energy_efficiency(config: &SystemConfig) -> Result<MetricsReport, MetricsError> {
    Analyzer::new(config.clone())?.report()
}
