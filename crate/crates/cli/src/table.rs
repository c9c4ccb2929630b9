//! CSV layout shared by `analyze --format csv`, `sweep` and `validate`.

use urllc_core::config::{SystemConfig, CONFIG_KEYS};
use urllc_core::metrics::MetricsReport;
use urllc_core::sim::McEstimate;

const RESULT_COLUMNS: &[&str] = &[
    "engine",
    "mode",
    "seed",
    "n_slots",
    "epsilon",
    "epsilon_se",
    "throughput_bps",
    "throughput_cond_bps",
    "throughput_se",
    "power_w",
    "power_se",
    "efficiency_bpj",
    "efficiency_cond_bpj",
    "efficiency_se",
];

pub fn header() -> String {
    CONFIG_KEYS
        .iter()
        .chain(RESULT_COLUMNS)
        .copied()
        .collect::<Vec<_>>()
        .join(",")
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn config_cells(config: &SystemConfig) -> Vec<String> {
    CONFIG_KEYS
        .iter()
        .map(|k| config.get(k).expect("canonical key"))
        .collect()
}

pub fn analysis_row(report: &MetricsReport) -> String {
    let mut cells = config_cells(&report.config);
    cells.extend([
        "analysis".to_string(),
        String::new(),
        String::new(),
        String::new(),
        num(report.epsilon),
        String::new(),
        num(report.throughput_bps),
        num(report.throughput_cond_bps),
        String::new(),
        num(report.power_w),
        String::new(),
        opt(report.efficiency_bpj),
        opt(report.efficiency_cond_bpj),
        String::new(),
    ]);
    cells.join(",")
}

/// Simulated throughput estimates the conditional form, so it fills the
/// `_cond` columns and leaves the unconditional ones empty.
pub fn sim_row(config: &SystemConfig, est: &McEstimate) -> String {
    let mut cells = config_cells(config);
    cells.extend([
        "sim".to_string(),
        est.channel_mode.to_string(),
        est.seed.to_string(),
        est.n_slots.to_string(),
        num(est.epsilon_hat),
        num(est.epsilon_se),
        String::new(),
        num(est.throughput_hat),
        num(est.throughput_se),
        num(est.power_hat),
        num(est.power_se),
        String::new(),
        opt(est.eta_hat),
        opt(est.eta_se),
    ]);
    cells.join(",")
}

/// One line of the engine comparison.
pub struct Comparison {
    pub metric: &'static str,
    pub analytical: Option<f64>,
    pub simulated: Option<f64>,
    pub se: Option<f64>,
}

impl Comparison {
    /// `None` when both engines agree exactly with zero spread.
    pub fn z(&self) -> Option<f64> {
        let (a, s, se) = (self.analytical?, self.simulated?, self.se?);
        if se > 0.0 {
            Some((s - a) / se)
        } else if s == a {
            None
        } else {
            Some(f64::INFINITY.copysign(s - a))
        }
    }

    pub fn passes(&self) -> bool {
        match (self.analytical, self.simulated) {
            (None, None) => true,
            (Some(_), Some(_)) => self.z().is_none_or(|z| z.abs() <= 3.0),
            _ => false,
        }
    }
}

pub const COMPARISON_HEADER: &str = "metric,analytical,simulated,se,z,status";

pub fn comparison_row(c: &Comparison) -> String {
    [
        c.metric.to_string(),
        opt(c.analytical),
        opt(c.simulated),
        opt(c.se),
        opt(c.z()),
        if c.passes() { "ok" } else { "FLAG" }.to_string(),
    ]
    .join(",")
}
