//! System parameters, derived protocol quantities and the access-probability law.
//!
//! Every power-like field is stored in the unit the key suffix names (dBm,
//! dBm/Hz). Formulas never touch those fields directly; they go through the
//! linear-watt accessors, which all share [`dbm_to_watts`].

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building or validating a [`SystemConfig`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("no transmission round fits in a slot: floor({sttis_per_slot} / ({k_rep} + {k_fb})) = 0")]
    NoTransmissionRound {
        sttis_per_slot: usize,
        k_rep: usize,
        k_fb: usize,
    },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("cannot parse `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("cannot read config file: {0}")]
    Io(String),
}

/// Converts a power level in dBm to watts.
///
/// This is the only dBm conversion in the crate; every module goes through it.
#[inline]
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Coefficients of the dB path-loss law `10 lg(alpha) = intercept - slope * lg(d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLoss {
    pub intercept_db: f64,
    pub slope_db: f64,
}

impl Default for PathLoss {
    fn default() -> Self {
        Self {
            intercept_db: -35.3,
            slope_db: 37.6,
        }
    }
}

/// Linear path-loss coefficient at `distance_m` meters.
pub fn pathloss_linear(distance_m: f64, pathloss: &PathLoss) -> Result<f64, ConfigError> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(ConfigError::InvalidField {
            field: "distance_m",
            reason: format!("distance must be positive and finite, got {distance_m}"),
        });
    }
    let db = pathloss.intercept_db - pathloss.slope_db * distance_m.log10();
    Ok(10f64.powf(db / 10.0))
}

/// Maximum number of transmission rounds in one slot, `floor(L / (K_rep + K_F))`.
pub fn derive_rounds(sttis_per_slot: usize, k_rep: usize, k_fb: usize) -> Result<usize, ConfigError> {
    let round_trip = k_rep + k_fb;
    let k = if round_trip == 0 { 0 } else { sttis_per_slot / round_trip };
    if k == 0 {
        return Err(ConfigError::NoTransmissionRound {
            sttis_per_slot,
            k_rep,
            k_fb,
        });
    }
    Ok(k)
}

/// Adaptive access probability `min(M / (residual + 1), 1)`.
#[inline]
pub fn access_prob(residual_contenders: usize, n_antennas: usize) -> f64 {
    (n_antennas as f64 / (residual_contenders as f64 + 1.0)).min(1.0)
}

/// All radio, traffic and protocol parameters of one deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_ues: usize,
    pub n_antennas: usize,
    pub arrival_prob: f64,
    pub etp_dbm: f64,
    pub est_error: f64,
    pub k_rep: usize,
    pub k_fb: usize,
    pub sttis_per_slot: usize,
    pub stti_duration_s: f64,
    pub bandwidth_hz: f64,
    pub packet_bits: u32,
    pub bler_target: f64,
    pub noise_psd_dbm_hz: f64,
    pub p_circuit_antenna_dbm: f64,
    pub p_bs_tx_dbm: f64,
    pub ue_distance_range_m: (f64, f64),
    pub pathloss: PathLoss,
    /// Reliability target used by the optimizers.
    pub eps_max: f64,
    /// Replaces the closed-form mean UE transmit power when set.
    pub mean_ue_power_w: Option<f64>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::reference()
    }
}

/// Config keys in their canonical (serialization and CSV) order.
pub const CONFIG_KEYS: &[&str] = &[
    "n_ues",
    "n_antennas",
    "arrival_prob",
    "etp_dbm",
    "est_error",
    "k_rep",
    "k_fb",
    "sttis_per_slot",
    "stti_duration_s",
    "bandwidth_hz",
    "packet_bits",
    "bler_target",
    "noise_psd_dbm_hz",
    "p_circuit_antenna_dbm",
    "p_bs_tx_dbm",
    "ue_distance_range_m",
    "pathloss",
    "eps_max",
    "mean_ue_power_w",
];

impl SystemConfig {
    /// Evaluation setup of the reference scenario: 1 ms delay bound split into
    /// fourteen 2-symbol S-TTIs at 30 kHz SCS, 30 subcarriers, 160-bit packets.
    pub fn reference() -> Self {
        Self {
            n_ues: 14,
            n_antennas: 4,
            arrival_prob: 0.5,
            etp_dbm: -92.4,
            est_error: 0.1,
            k_rep: 1,
            k_fb: 1,
            sttis_per_slot: 14,
            stti_duration_s: 1.0 / 14_000.0,
            bandwidth_hz: 900e3,
            packet_bits: 160,
            bler_target: 1e-5,
            noise_psd_dbm_hz: -174.0,
            p_circuit_antenna_dbm: 17.0,
            p_bs_tx_dbm: 30.0,
            ue_distance_range_m: (50.0, 150.0),
            pathloss: PathLoss::default(),
            eps_max: 1e-5,
            mean_ue_power_w: None,
        }
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name {
            "reference" => Ok(Self::reference()),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn bad(field: &'static str, reason: impl Into<String>) -> Result<(), ConfigError> {
            Err(ConfigError::InvalidField {
                field,
                reason: reason.into(),
            })
        }
        if self.n_ues < 1 {
            return bad("n_ues", "need at least one UE");
        }
        if self.n_antennas < 2 {
            return bad("n_antennas", "the BS needs at least two receive antennas");
        }
        if !(0.0..=1.0).contains(&self.arrival_prob) {
            return bad("arrival_prob", format!("{} is not in [0, 1]", self.arrival_prob));
        }
        if !self.etp_dbm.is_finite() {
            return bad("etp_dbm", "must be finite");
        }
        if !(self.est_error >= 0.0) || !self.est_error.is_finite() {
            return bad("est_error", format!("{} is negative or not finite", self.est_error));
        }
        if self.k_rep < 1 {
            return bad("k_rep", "need at least one repetition");
        }
        if self.k_fb < 1 {
            return bad("k_fb", "feedback wait must be at least one S-TTI");
        }
        if !(self.stti_duration_s > 0.0) || !self.stti_duration_s.is_finite() {
            return bad("stti_duration_s", "must be positive");
        }
        if !(self.bandwidth_hz > 0.0) || !self.bandwidth_hz.is_finite() {
            return bad("bandwidth_hz", "must be positive");
        }
        if self.packet_bits < 1 {
            return bad("packet_bits", "must be positive");
        }
        if !(self.bler_target > 0.0 && self.bler_target < 1.0) {
            return bad("bler_target", format!("{} is not in (0, 1)", self.bler_target));
        }
        for (field, v) in [
            ("noise_psd_dbm_hz", self.noise_psd_dbm_hz),
            ("p_circuit_antenna_dbm", self.p_circuit_antenna_dbm),
            ("p_bs_tx_dbm", self.p_bs_tx_dbm),
        ] {
            if !v.is_finite() {
                return bad(field, "must be finite");
            }
        }
        let (d1, d2) = self.ue_distance_range_m;
        if !(d1 > 0.0) || !(d2 >= d1) || !d2.is_finite() {
            return bad(
                "ue_distance_range_m",
                format!("need 0 < min <= max, got ({d1}, {d2})"),
            );
        }
        if !self.pathloss.intercept_db.is_finite() || !self.pathloss.slope_db.is_finite() {
            return bad("pathloss", "coefficients must be finite");
        }
        if !(self.eps_max > 0.0 && self.eps_max < 1.0) {
            return bad("eps_max", format!("{} is not in (0, 1)", self.eps_max));
        }
        if let Some(p) = self.mean_ue_power_w {
            if !(p >= 0.0) || !p.is_finite() {
                return bad("mean_ue_power_w", "must be a nonnegative number");
            }
        }
        derive_rounds(self.sttis_per_slot, self.k_rep, self.k_fb)?;
        Ok(())
    }

    /// Maximum transmissions per packet within a slot.
    pub fn rounds(&self) -> Result<usize, ConfigError> {
        derive_rounds(self.sttis_per_slot, self.k_rep, self.k_fb)
    }

    /// S-TTIs per transmission round (repetitions plus feedback wait).
    pub fn round_trip(&self) -> usize {
        self.k_rep + self.k_fb
    }

    /// Channel uses per S-TTI, `tau * B`.
    pub fn channel_uses(&self) -> f64 {
        self.stti_duration_s * self.bandwidth_hz
    }

    pub fn etp_w(&self) -> f64 {
        dbm_to_watts(self.etp_dbm)
    }

    /// Receiver noise power `N0 * B` in watts.
    pub fn noise_power_w(&self) -> f64 {
        dbm_to_watts(self.noise_psd_dbm_hz) * self.bandwidth_hz
    }

    pub fn p_circuit_antenna_w(&self) -> f64 {
        dbm_to_watts(self.p_circuit_antenna_dbm)
    }

    pub fn p_bs_tx_w(&self) -> f64 {
        dbm_to_watts(self.p_bs_tx_dbm)
    }

    /// Stable 64-bit identity of this configuration (FNV-1a over the canonical key=value text).
    pub fn config_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_kv_string().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }

    /// Value of one field rendered as it appears in config files and CSV.
    pub fn get(&self, key: &str) -> Result<String, ConfigError> {
        Ok(match key {
            "n_ues" => self.n_ues.to_string(),
            "n_antennas" => self.n_antennas.to_string(),
            "arrival_prob" => self.arrival_prob.to_string(),
            "etp_dbm" => self.etp_dbm.to_string(),
            "est_error" => self.est_error.to_string(),
            "k_rep" => self.k_rep.to_string(),
            "k_fb" => self.k_fb.to_string(),
            "sttis_per_slot" => self.sttis_per_slot.to_string(),
            "stti_duration_s" => self.stti_duration_s.to_string(),
            "bandwidth_hz" => self.bandwidth_hz.to_string(),
            "packet_bits" => self.packet_bits.to_string(),
            "bler_target" => self.bler_target.to_string(),
            "noise_psd_dbm_hz" => self.noise_psd_dbm_hz.to_string(),
            "p_circuit_antenna_dbm" => self.p_circuit_antenna_dbm.to_string(),
            "p_bs_tx_dbm" => self.p_bs_tx_dbm.to_string(),
            "ue_distance_range_m" => format!(
                "{}:{}",
                self.ue_distance_range_m.0, self.ue_distance_range_m.1
            ),
            "pathloss" => format!("{}:{}", self.pathloss.intercept_db, self.pathloss.slope_db),
            "eps_max" => self.eps_max.to_string(),
            "mean_ue_power_w" => self
                .mean_ue_power_w
                .map(|p| p.to_string())
                .unwrap_or_default(),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        })
    }

    /// Sets one field from its textual form. Does not re-validate the whole config.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let bad = || ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        let int = |v: &str| v.parse::<usize>().map_err(|_| bad());
        let real = |v: &str| v.parse::<f64>().map_err(|_| bad());
        let pair = |v: &str| -> Result<(f64, f64), ConfigError> {
            let (a, b) = v.split_once([':', ',']).ok_or_else(bad)?;
            Ok((real(a.trim())?, real(b.trim())?))
        };
        match key {
            "n_ues" => self.n_ues = int(value)?,
            "n_antennas" => self.n_antennas = int(value)?,
            "arrival_prob" => self.arrival_prob = real(value)?,
            "etp_dbm" => self.etp_dbm = real(value)?,
            "est_error" => self.est_error = real(value)?,
            "k_rep" => self.k_rep = int(value)?,
            "k_fb" => self.k_fb = int(value)?,
            "sttis_per_slot" => self.sttis_per_slot = int(value)?,
            "stti_duration_s" => self.stti_duration_s = real(value)?,
            "bandwidth_hz" => self.bandwidth_hz = real(value)?,
            "packet_bits" => self.packet_bits = value.parse().map_err(|_| bad())?,
            "bler_target" => self.bler_target = real(value)?,
            "noise_psd_dbm_hz" => self.noise_psd_dbm_hz = real(value)?,
            "p_circuit_antenna_dbm" => self.p_circuit_antenna_dbm = real(value)?,
            "p_bs_tx_dbm" => self.p_bs_tx_dbm = real(value)?,
            "ue_distance_range_m" => self.ue_distance_range_m = pair(value)?,
            "pathloss" => {
                let (intercept_db, slope_db) = pair(value)?;
                self.pathloss = PathLoss {
                    intercept_db,
                    slope_db,
                };
            }
            "eps_max" => self.eps_max = real(value)?,
            "mean_ue_power_w" => {
                self.mean_ue_power_w = if value.is_empty() || value == "none" {
                    None
                } else {
                    Some(real(value)?)
                }
            }
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Parses a `key = value` file body on top of `base`.
    ///
    /// Blank lines and `#` comments are ignored. A `preset = <name>` line
    /// replaces everything set so far with the named preset.
    pub fn parse_kv(text: &str, base: SystemConfig) -> Result<Self, ConfigError> {
        let mut cfg = base;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            if key == "preset" {
                cfg = Self::preset(value.trim())?;
                continue;
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::parse_kv(&text, Self::reference())
    }

    /// Canonical `key = value` text; [`SystemConfig::parse_kv`] reads it back.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let v = self.get(key).expect("canonical key");
            if *key == "mean_ue_power_w" && v.is_empty() {
                continue;
            }
            let _ = writeln!(out, "{key} = {v}");
        }
        out
    }
}

/// Number of transmission rounds for a validated config.
pub fn derive_k(config: &SystemConfig) -> Result<usize, ConfigError> {
    config.rounds()
}
