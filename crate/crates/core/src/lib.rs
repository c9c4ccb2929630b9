//! Reliability and energy-efficiency analysis of grant-free URLLC uplinks with
//! zero-forcing multi-user detection, plus a slot-level simulator and
//! QoS-constrained optimizers.

pub mod config;
pub mod markov;
pub mod metrics;
pub mod optimize;
pub mod outage;
pub mod phy;
pub mod sim;

pub use config::{ConfigError, SystemConfig};
pub use markov::{absorption_stats, build_chain, AbsorbingChain, AbsorptionStats};
pub use metrics::{Analyzer, MetricsError, MetricsReport};
pub use optimize::{find_n_max, optimize_m, optimize_n, OptResult, OptimizeError};
pub use outage::{build_outage_table, outage_prob, OutageTable};
pub use sim::{run_campaign, CampaignOptions, ChannelMode, McEstimate, UePlacement};
