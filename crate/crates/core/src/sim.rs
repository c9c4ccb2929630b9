//! Slot-level Monte Carlo simulator of grant-free access with ZF detection.
//!
//! Every slot draws its randomness from substreams keyed by
//! `(seed, slot, round, purpose)`, and campaign statistics are accumulated as
//! integer moments, so estimates do not depend on how slots are split across
//! worker threads.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{access_prob, pathloss_linear, ConfigError, SystemConfig};
use crate::phy::{PhyError, RateModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error("placement has {placement} UEs but the config has {config}")]
    PlacementMismatch { placement: usize, config: usize },
    #[error("a campaign needs at least one slot")]
    NoSlots,
    #[error("cannot start worker pool: {0}")]
    Workers(String),
}

/// Fading coherence assumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    /// Channel and estimation error redrawn for every repetition.
    Iid,
    /// Channel and estimation error held fixed for a whole slot.
    Cor,
}

impl fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelMode::Iid => "iid",
            ChannelMode::Cor => "cor",
        })
    }
}

impl FromStr for ChannelMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "iid" => Ok(ChannelMode::Iid),
            "cor" | "correlated" => Ok(ChannelMode::Cor),
            _ => Err(format!("unknown channel mode `{s}` (expected iid or cor)")),
        }
    }
}

const PURPOSE_ARRIVAL: u64 = 0;
const PURPOSE_ACCESS: u64 = 1;
const PURPOSE_CHANNEL: u64 = 2;
const PURPOSE_PLACEMENT: u64 = 3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for one `(seed, slot, round, purpose)` tuple.
fn substream(seed: u64, slot: u64, round: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(slot)));
    rng.set_stream((round << 8) | purpose);
    rng
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// UE distances and the transmit powers that equalize received power to `xi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UePlacement {
    pub distances_m: Vec<f64>,
    pub pathloss_lin: Vec<f64>,
    pub tx_power_w: Vec<f64>,
}

impl UePlacement {
    pub fn from_distances(config: &SystemConfig, distances_m: Vec<f64>) -> Result<Self, SimError> {
        let xi = config.etp_w();
        let pathloss_lin = distances_m
            .iter()
            .map(|&d| pathloss_linear(d, &config.pathloss))
            .collect::<Result<Vec<_>, _>>()?;
        let tx_power_w = pathloss_lin.iter().map(|a| xi / a).collect();
        Ok(Self {
            distances_m,
            pathloss_lin,
            tx_power_w,
        })
    }

    pub fn len(&self) -> usize {
        self.distances_m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances_m.is_empty()
    }

    pub fn mean_tx_power_w(&self) -> f64 {
        if self.tx_power_w.is_empty() {
            return 0.0;
        }
        self.tx_power_w.iter().sum::<f64>() / self.tx_power_w.len() as f64
    }
}

/// Distances uniform on the configured interval, deterministic in `seed`.
pub fn place_ues(config: &SystemConfig, seed: u64) -> Result<UePlacement, SimError> {
    config.validate()?;
    let (d1, d2) = config.ue_distance_range_m;
    let mut rng = substream(seed, u64::MAX, 0, PURPOSE_PLACEMENT);
    let distances = (0..config.n_ues)
        .map(|_| if d1 == d2 { d1 } else { rng.random_range(d1..d2) })
        .collect();
    UePlacement::from_distances(config, distances)
}

/// Diagonal of `(H^H H)^-1` for an `m x n_tx` matrix stored column by column.
///
/// Returns `None` when the Gram matrix is numerically singular.
pub fn zf_inverse_diag(h: &[Complex64], m: usize, n_tx: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(h.len(), m * n_tx);
    let col = |j: usize| &h[j * m..(j + 1) * m];
    // Lower Cholesky factor of the Gram matrix, row-major.
    let mut l = vec![Complex64::new(0.0, 0.0); n_tx * n_tx];
    for i in 0..n_tx {
        for j in 0..=i {
            let mut g: Complex64 = col(i).iter().zip(col(j)).map(|(a, b)| a.conj() * b).sum();
            for k in 0..j {
                g -= l[i * n_tx + k] * l[j * n_tx + k].conj();
            }
            if i == j {
                let scale: f64 = col(i).iter().map(|z| z.norm_sqr()).sum();
                if !(g.re > 1e-12 * scale) {
                    return None;
                }
                l[i * n_tx + i] = Complex64::new(g.re.sqrt(), 0.0);
            } else {
                l[i * n_tx + j] = g / l[j * n_tx + j].re;
            }
        }
    }
    // diag(G^-1)_i = sum_k |(L^-1)_{k,i}|^2.
    let mut diag = vec![0.0; n_tx];
    let mut x = vec![Complex64::new(0.0, 0.0); n_tx];
    for (i, d) in diag.iter_mut().enumerate() {
        x[i] = Complex64::new(1.0 / l[i * n_tx + i].re, 0.0);
        let mut acc = x[i].norm_sqr();
        for k in i + 1..n_tx {
            let s: Complex64 = (i..k).map(|j| l[k * n_tx + j] * x[j]).sum();
            x[k] = -s / l[k * n_tx + k].re;
            acc += x[k].norm_sqr();
        }
        *d = acc;
    }
    Some(diag)
}

/// Source of channel realizations within one slot.
pub enum ChannelState {
    /// Fresh `H` and estimation error for every repetition.
    Iid { rng: ChaCha8Rng },
    /// One estimated channel per slot covering all UEs, column by column.
    Cor { h_hat: Vec<Complex64>, n_antennas: usize },
}

impl ChannelState {
    pub fn cor<R: Rng + ?Sized>(rng: &mut R, n_antennas: usize, n_ues: usize, est_error: f64) -> Self {
        let h_hat = estimated_channel(rng, n_antennas, n_ues, est_error);
        ChannelState::Cor { h_hat, n_antennas }
    }
}

/// `H + delta * Omega` with i.i.d. CN(0, 1) entries in both matrices.
fn estimated_channel<R: Rng + ?Sized>(rng: &mut R, m: usize, n: usize, delta: f64) -> Vec<Complex64> {
    (0..m * n)
        .map(|_| {
            let h = complex_normal(rng);
            let omega = complex_normal(rng);
            h + omega * delta
        })
        .collect()
}

/// MRC-combined ZF output SNR of each transmitter over `K_rep` repetitions.
///
/// With more transmitters than antennas every SNR is 0.
pub fn zf_round(transmitters: &[usize], config: &SystemConfig, channel: &mut ChannelState) -> Vec<f64> {
    let n_tx = transmitters.len();
    let m = config.n_antennas;
    if n_tx == 0 {
        return Vec::new();
    }
    if n_tx > m {
        return vec![0.0; n_tx];
    }
    let xi = config.etp_w();
    let delta = config.est_error;
    let denom = config.noise_power_w() + xi * delta * delta * n_tx as f64;
    let per_rep = |diag: Option<Vec<f64>>| -> Vec<f64> {
        match diag {
            Some(d) => d.into_iter().map(|v| xi / (denom * v)).collect(),
            None => vec![0.0; n_tx],
        }
    };
    match channel {
        ChannelState::Iid { rng } => {
            let mut total = vec![0.0; n_tx];
            for _ in 0..config.k_rep {
                let h_hat = estimated_channel(rng, m, n_tx, delta);
                for (t, s) in total.iter_mut().zip(per_rep(zf_inverse_diag(&h_hat, m, n_tx))) {
                    *t += s;
                }
            }
            total
        }
        ChannelState::Cor { h_hat, n_antennas } => {
            let mut sub = Vec::with_capacity(*n_antennas * n_tx);
            for &u in transmitters {
                sub.extend_from_slice(&h_hat[u * *n_antennas..(u + 1) * *n_antennas]);
            }
            per_rep(zf_inverse_diag(&sub, m, n_tx))
                .into_iter()
                .map(|s| s * config.k_rep as f64)
                .collect()
        }
    }
}

/// One transmission round of a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: usize,
    /// Contenders still waiting for an ACK at the start of the round.
    pub residual: Vec<usize>,
    pub access_prob: f64,
    pub transmitters: Vec<usize>,
    /// Combined SNR of each transmitter, aligned with `transmitters`.
    pub snr: Vec<f64>,
    pub successes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotTrace {
    pub slot: u64,
    pub n_arrivals: usize,
    pub arrivals: Vec<usize>,
    pub rounds: Vec<RoundRecord>,
    pub successes: usize,
    pub drops: usize,
    pub rounds_used: usize,
    /// Transmission count of every UE.
    pub transmissions: Vec<u32>,
    /// This slot's contribution to the system power.
    pub power_w: f64,
    /// `power_w` times the slot duration.
    pub energy_joules: f64,
}

/// Integer outcome of one slot; all campaign statistics derive from these.
#[derive(Debug, Clone, PartialEq)]
struct SlotOutcome {
    arrivals: usize,
    successes: usize,
    rounds_used: usize,
    transmissions: Vec<u32>,
}

/// Per-config constants of the slot simulation.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SystemConfig,
    placement: UePlacement,
    mode: ChannelMode,
    rate: RateModel,
    k_max: usize,
}

impl Simulator {
    pub fn new(config: SystemConfig, placement: UePlacement, mode: ChannelMode) -> Result<Self, SimError> {
        config.validate()?;
        if placement.len() != config.n_ues {
            return Err(SimError::PlacementMismatch {
                placement: placement.len(),
                config: config.n_ues,
            });
        }
        let rate = RateModel::new(config.bandwidth_hz, config.channel_uses(), config.bler_target)?;
        let k_max = config.rounds()?;
        Ok(Self {
            config,
            placement,
            mode,
            rate,
            k_max,
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn placement(&self) -> &UePlacement {
        &self.placement
    }

    pub fn mode(&self) -> ChannelMode {
        self.mode
    }

    pub fn rounds(&self) -> usize {
        self.k_max
    }

    /// Power coefficient of one UE transmission and of one BS round.
    fn power_weights(&self) -> (f64, f64) {
        let cfg = &self.config;
        let rt = cfg.round_trip() as f64;
        let ue = cfg.k_rep as f64 / (self.k_max as f64 * rt);
        let bs = cfg.p_bs_tx_w() / rt + cfg.n_antennas as f64 * cfg.p_circuit_antenna_w();
        (ue, bs)
    }

    /// Bits credited per delivered packet, per second of slot.
    fn throughput_weight(&self) -> f64 {
        let cfg = &self.config;
        f64::from(cfg.packet_bits) / (cfg.round_trip() as f64 * self.k_max as f64 * cfg.stti_duration_s)
    }

    fn simulate(&self, seed: u64, slot: u64, mut trace: Option<&mut Vec<RoundRecord>>) -> (Vec<usize>, SlotOutcome) {
        let cfg = &self.config;
        let n = cfg.n_ues;
        let mut arrival_rng = substream(seed, slot, 0, PURPOSE_ARRIVAL);
        let arrivals: Vec<usize> = (0..n)
            .filter(|_| arrival_rng.random::<f64>() < cfg.arrival_prob)
            .collect();
        let mut outcome = SlotOutcome {
            arrivals: arrivals.len(),
            successes: 0,
            rounds_used: 0,
            transmissions: vec![0; n],
        };
        if arrivals.is_empty() {
            return (arrivals, outcome);
        }

        let mut channel = match self.mode {
            ChannelMode::Cor => {
                let mut rng = substream(seed, slot, 0, PURPOSE_CHANNEL);
                Some(ChannelState::cor(&mut rng, cfg.n_antennas, n, cfg.est_error))
            }
            ChannelMode::Iid => None,
        };
        let bits = f64::from(cfg.packet_bits);
        let mut residual = arrivals.clone();
        for round in 1..=self.k_max {
            let p = access_prob(residual.len(), cfg.n_antennas);
            let mut access_rng = substream(seed, slot, round as u64, PURPOSE_ACCESS);
            let transmitters: Vec<usize> = residual
                .iter()
                .copied()
                .filter(|_| access_rng.random::<f64>() < p)
                .collect();
            let snr = match channel.as_mut() {
                Some(state) => zf_round(&transmitters, cfg, state),
                None => {
                    let mut state = ChannelState::Iid {
                        rng: substream(seed, slot, round as u64, PURPOSE_CHANNEL),
                    };
                    zf_round(&transmitters, cfg, &mut state)
                }
            };
            let successes: Vec<usize> = transmitters
                .iter()
                .zip(&snr)
                .filter(|(_, &s)| self.rate.supports(s, bits, cfg.stti_duration_s))
                .map(|(&u, _)| u)
                .collect();
            for &u in &transmitters {
                outcome.transmissions[u] += 1;
            }
            residual.retain(|u| !successes.contains(u));
            outcome.successes += successes.len();
            if let Some(records) = trace.as_deref_mut() {
                records.push(RoundRecord {
                    round,
                    residual: residual_before(&residual, &successes),
                    access_prob: p,
                    transmitters,
                    snr,
                    successes,
                });
            }
            if residual.is_empty() {
                outcome.rounds_used = round;
                return (arrivals, outcome);
            }
        }
        outcome.rounds_used = self.k_max;
        (arrivals, outcome)
    }

    fn slot_power(&self, outcome: &SlotOutcome) -> f64 {
        let (ue_w, bs_w) = self.power_weights();
        let ue: f64 = outcome
            .transmissions
            .iter()
            .zip(&self.placement.tx_power_w)
            .map(|(&c, p)| f64::from(c) * p)
            .sum();
        ue_w * ue + bs_w * outcome.rounds_used as f64
    }

    /// Full record of slot `slot` of the campaign seeded with `seed`.
    pub fn run_slot(&self, seed: u64, slot: u64) -> SlotTrace {
        let mut rounds = Vec::new();
        let (arrivals, outcome) = self.simulate(seed, slot, Some(&mut rounds));
        let power_w = self.slot_power(&outcome);
        let slot_s = self.config.sttis_per_slot as f64 * self.config.stti_duration_s;
        SlotTrace {
            slot,
            n_arrivals: outcome.arrivals,
            arrivals,
            rounds,
            successes: outcome.successes,
            drops: outcome.arrivals - outcome.successes,
            rounds_used: outcome.rounds_used,
            transmissions: outcome.transmissions,
            power_w,
            energy_joules: power_w * slot_s,
        }
    }

    fn moments(&self, seed: u64, slots: std::ops::Range<u64>) -> Moments {
        let mut acc = Moments::zero(self.config.n_ues);
        for slot in slots {
            let (_, outcome) = self.simulate(seed, slot, None);
            acc.push(&outcome);
        }
        acc
    }
}

// The record is pushed after successes leave, so put them back for the log.
fn residual_before(after: &[usize], successes: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = after.iter().chain(successes).copied().collect();
    v.sort_unstable();
    v
}

/// Integer sums over slots. Addition is exact, so merging is order-independent.
#[derive(Debug, Clone, PartialEq)]
struct Moments {
    slots: u64,
    drop_slots: u64,
    arrivals: u64,
    succ: u64,
    succ2: u64,
    rounds: u64,
    rounds2: u64,
    succ_rounds: u64,
    tx: Vec<u64>,
    tx_tx: Vec<u64>,
    succ_tx: Vec<u64>,
    rounds_tx: Vec<u64>,
}

impl Moments {
    fn zero(n: usize) -> Self {
        Self {
            slots: 0,
            drop_slots: 0,
            arrivals: 0,
            succ: 0,
            succ2: 0,
            rounds: 0,
            rounds2: 0,
            succ_rounds: 0,
            tx: vec![0; n],
            tx_tx: vec![0; n * n],
            succ_tx: vec![0; n],
            rounds_tx: vec![0; n],
        }
    }

    fn push(&mut self, o: &SlotOutcome) {
        let s = o.successes as u64;
        let r = o.rounds_used as u64;
        self.slots += 1;
        self.drop_slots += u64::from(o.successes < o.arrivals);
        self.arrivals += o.arrivals as u64;
        self.succ += s;
        self.succ2 += s * s;
        self.rounds += r;
        self.rounds2 += r * r;
        self.succ_rounds += s * r;
        let n = self.tx.len();
        for (u, &c) in o.transmissions.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = u64::from(c);
            self.tx[u] += c;
            self.succ_tx[u] += s * c;
            self.rounds_tx[u] += r * c;
            for (v, &c2) in o.transmissions.iter().enumerate() {
                self.tx_tx[u * n + v] += c * u64::from(c2);
            }
        }
    }

    fn merge(mut self, other: Self) -> Self {
        self.slots += other.slots;
        self.drop_slots += other.drop_slots;
        self.arrivals += other.arrivals;
        self.succ += other.succ;
        self.succ2 += other.succ2;
        self.rounds += other.rounds;
        self.rounds2 += other.rounds2;
        self.succ_rounds += other.succ_rounds;
        for (a, b) in [
            (&mut self.tx, &other.tx),
            (&mut self.tx_tx, &other.tx_tx),
            (&mut self.succ_tx, &other.succ_tx),
            (&mut self.rounds_tx, &other.rounds_tx),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignOptions {
    pub n_slots: u64,
    pub mode: ChannelMode,
    pub seed: u64,
    pub workers: usize,
    /// Fixed UE placement; drawn from `seed` when absent.
    pub placement: Option<UePlacement>,
}

impl CampaignOptions {
    pub fn new(n_slots: u64, mode: ChannelMode, seed: u64) -> Self {
        Self {
            n_slots,
            mode,
            seed,
            workers: 1,
            placement: None,
        }
    }
}

/// Campaign estimates with standard errors from the per-slot sample variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub epsilon_hat: f64,
    pub epsilon_se: f64,
    pub throughput_hat: f64,
    pub throughput_se: f64,
    pub power_hat: f64,
    pub power_se: f64,
    /// `None` when no power was spent.
    pub eta_hat: Option<f64>,
    pub eta_se: Option<f64>,
    pub n_slots: u64,
    pub seed: u64,
    pub channel_mode: ChannelMode,
    pub arrivals: u64,
    pub successes: u64,
    pub drops: u64,
    /// Average transmit power of the placement used.
    pub mean_ue_power_w: f64,
}

// Slots per work item; fixed so the partition does not depend on the worker count.
const CHUNK_SLOTS: u64 = 2048;

pub fn run_campaign(config: &SystemConfig, opts: &CampaignOptions) -> Result<McEstimate, SimError> {
    if opts.n_slots == 0 {
        return Err(SimError::NoSlots);
    }
    let placement = match &opts.placement {
        Some(p) => p.clone(),
        None => place_ues(config, opts.seed)?,
    };
    let sim = Simulator::new(config.clone(), placement, opts.mode)?;
    let chunks: Vec<std::ops::Range<u64>> = (0..opts.n_slots.div_ceil(CHUNK_SLOTS))
        .map(|c| c * CHUNK_SLOTS..((c + 1) * CHUNK_SLOTS).min(opts.n_slots))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| SimError::Workers(e.to_string()))?;
    let n = config.n_ues;
    let moments = pool.install(|| {
        chunks
            .into_par_iter()
            .map(|range| sim.moments(opts.seed, range))
            .reduce(|| Moments::zero(n), Moments::merge)
    });
    Ok(estimate(&sim, &moments, opts))
}

fn estimate(sim: &Simulator, m: &Moments, opts: &CampaignOptions) -> McEstimate {
    let n = m.slots as f64;
    let mean = |s: u64| s as f64 / n;
    // Unbiased covariance from raw sums; 0 with a single slot.
    let cov = |sxy: f64, sx: f64, sy: f64| {
        if m.slots < 2 {
            0.0
        } else {
            (sxy - sx * sy / n) / (n - 1.0)
        }
    };

    let eps = mean(m.drop_slots);
    let eps_se = if m.slots < 2 { 0.0 } else { (eps * (1.0 - eps) / (n - 1.0)).sqrt() };

    let w_phi = sim.throughput_weight();
    let (w_ue, w_bs) = sim.power_weights();
    let p = &sim.placement.tx_power_w;
    let nu = p.len();

    let phi = w_phi * mean(m.succ);
    let var_succ = cov(m.succ2 as f64, m.succ as f64, m.succ as f64);

    let ue_energy: f64 = (0..nu).map(|u| p[u] * m.tx[u] as f64).sum();
    let psi = w_ue * ue_energy / n + w_bs * mean(m.rounds);

    let mut var_ue = 0.0;
    for u in 0..nu {
        for v in 0..nu {
            var_ue += p[u] * p[v] * cov(m.tx_tx[u * nu + v] as f64, m.tx[u] as f64, m.tx[v] as f64);
        }
    }
    let cov_ue_rounds: f64 = (0..nu)
        .map(|u| p[u] * cov(m.rounds_tx[u] as f64, m.tx[u] as f64, m.rounds as f64))
        .sum();
    let var_rounds = cov(m.rounds2 as f64, m.rounds as f64, m.rounds as f64);
    let var_psi = w_ue * w_ue * var_ue + 2.0 * w_ue * w_bs * cov_ue_rounds + w_bs * w_bs * var_rounds;

    let cov_succ_ue: f64 = (0..nu)
        .map(|u| p[u] * cov(m.succ_tx[u] as f64, m.succ as f64, m.tx[u] as f64))
        .sum();
    let cov_succ_rounds = cov(m.succ_rounds as f64, m.succ as f64, m.rounds as f64);
    let cov_phi_psi = w_phi * (w_ue * cov_succ_ue + w_bs * cov_succ_rounds);
    let var_phi = w_phi * w_phi * var_succ;

    let (eta_hat, eta_se) = if psi > 0.0 {
        let eta = phi / psi;
        // Delta method for a ratio of means.
        let var = (var_phi - 2.0 * eta * cov_phi_psi + eta * eta * var_psi) / (psi * psi);
        (Some(eta), Some((var.max(0.0) / n).sqrt()))
    } else {
        (None, None)
    };

    McEstimate {
        epsilon_hat: eps,
        epsilon_se: eps_se,
        throughput_hat: phi,
        throughput_se: (var_phi.max(0.0) / n).sqrt(),
        power_hat: psi,
        power_se: (var_psi.max(0.0) / n).sqrt(),
        eta_hat,
        eta_se,
        n_slots: m.slots,
        seed: opts.seed,
        channel_mode: opts.mode,
        arrivals: m.arrivals,
        successes: m.succ,
        drops: m.arrivals - m.succ,
        mean_ue_power_w: sim.placement.mean_tx_power_w(),
    }
}

/// Traces of the first `limit` slots of a campaign, for JSON-lines dumps.
pub fn campaign_traces(
    config: &SystemConfig,
    opts: &CampaignOptions,
    limit: u64,
) -> Result<Vec<SlotTrace>, SimError> {
    let placement = match &opts.placement {
        Some(p) => p.clone(),
        None => place_ues(config, opts.seed)?,
    };
    let sim = Simulator::new(config.clone(), placement, opts.mode)?;
    Ok((0..limit.min(opts.n_slots)).map(|s| sim.run_slot(opts.seed, s)).collect())
}
