//! Finite-blocklength rate and the special functions both engines depend on.

use std::f64::consts::{LN_2, LOG2_E, PI, SQRT_2};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhyError {
    #[error("probability {0} is outside (0, 1)")]
    ProbabilityOutOfRange(f64),
}

/// Gaussian tail probability `Q(x) = P(Z > x)`.
#[inline]
pub fn q_func(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

// Rational approximation of the normal quantile (P. J. Acklam), ~1e-9 relative.
const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];

/// Lower-tail normal quantile for `p <= 0.5` (result is <= 0).
fn acklam_lower(p: f64) -> f64 {
    const P_LOW: f64 = 0.024_25;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        let [c0, c1, c2, c3, c4, c5] = ACKLAM_C;
        let [d0, d1, d2, d3] = ACKLAM_D;
        (((((c0 * q + c1) * q + c2) * q + c3) * q + c4) * q + c5)
            / ((((d0 * q + d1) * q + d2) * q + d3) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        let [a0, a1, a2, a3, a4, a5] = ACKLAM_A;
        let [b0, b1, b2, b3, b4] = ACKLAM_B;
        (((((a0 * r + a1) * r + a2) * r + a3) * r + a4) * r + a5) * q
            / (((((b0 * r + b1) * r + b2) * r + b3) * r + b4) * r + 1.0)
    }
}

/// Inverse of the Gaussian tail: returns `x` with `Q(x) = p`.
pub fn inv_q(p: f64) -> Result<f64, PhyError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(PhyError::ProbabilityOutOfRange(p));
    }
    if p > 0.5 {
        // 1 - p is exact for p in (0.5, 1).
        return inv_q(1.0 - p).map(|x| -x);
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let mut x = -acklam_lower(p);
    // Halley polish on Q(x) - p; the tail is evaluated through erfc so small p keeps its digits.
    for _ in 0..3 {
        let density = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
        let t = -(q_func(x) - p) / density;
        let step = t / (1.0 + 0.5 * x * t);
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    Ok(x)
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the Gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the Lanczos sum in its accurate range.
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

const GAMMA_MAX_ITER: usize = 10_000;
const GAMMA_EPS: f64 = 1e-17;

/// Regularized lower incomplete gamma `P(shape, x)`.
///
/// Series expansion below `x = shape + 1`, Lentz continued fraction for the
/// complement above it. Returns NaN outside `shape > 0, x >= 0`.
pub fn reg_lower_gamma(shape: f64, x: f64) -> f64 {
    gamma_pair(shape, x).0
}

/// Regularized upper incomplete gamma `Q(shape, x) = 1 - P(shape, x)`.
pub fn reg_upper_gamma(shape: f64, x: f64) -> f64 {
    gamma_pair(shape, x).1
}

fn gamma_pair(a: f64, x: f64) -> (f64, f64) {
    if !(a > 0.0) || !(x >= 0.0) {
        return (f64::NAN, f64::NAN);
    }
    if x == 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..GAMMA_MAX_ITER {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_EPS {
                break;
            }
        }
        let p = (sum.ln() + log_prefactor).exp().min(1.0);
        (p, 1.0 - p)
    } else {
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_EPS {
                break;
            }
        }
        let q = (h.ln() + log_prefactor).exp().min(1.0);
        (1.0 - q, q)
    }
}

/// Channel dispersion `V = 1 - 1/(1 + snr)^2`.
#[inline]
pub fn channel_dispersion(snr: f64) -> f64 {
    let r = 1.0 / (1.0 + snr);
    1.0 - r * r
}

/// Inputs of the normal-approximation rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateParams {
    pub snr: f64,
    /// Block length in channel uses, `tau * B`.
    pub channel_uses: f64,
    pub bler: f64,
    pub bandwidth_hz: f64,
}

/// Maximal achievable rate in bits/s at finite blocklength:
/// `B * {log2(1 + snr) - sqrt(V(snr) log2(e) / (tau B)) * Qinv(bler)}_+`.
pub fn achievable_rate(params: &RateParams) -> Result<f64, PhyError> {
    let model = RateModel::new(params.bandwidth_hz, params.channel_uses, params.bler)?;
    Ok(model.rate(params.snr))
}

/// Rate evaluator with the inverse-Q term precomputed, for hot loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateModel {
    bandwidth_hz: f64,
    /// `sqrt(log2(e) / (tau B)) * Qinv(bler)`.
    penalty: f64,
}

impl RateModel {
    pub fn new(bandwidth_hz: f64, channel_uses: f64, bler: f64) -> Result<Self, PhyError> {
        let q = inv_q(bler)?;
        Ok(Self {
            bandwidth_hz,
            penalty: (LOG2_E / channel_uses).sqrt() * q,
        })
    }

    pub fn rate(&self, snr: f64) -> f64 {
        let raw = (snr.ln_1p() / LN_2) - channel_dispersion(snr).sqrt() * self.penalty;
        self.bandwidth_hz * raw.max(0.0)
    }

    /// Rate under the high-SNR simplification `V = 1`, without the clamp.
    pub fn rate_unit_dispersion(&self, snr: f64) -> f64 {
        self.bandwidth_hz * ((snr.ln_1p() / LN_2) - self.penalty)
    }

    /// Whether a packet of `bits` fits in one S-TTI of `stti_s` seconds.
    #[inline]
    pub fn supports(&self, snr: f64, bits: f64, stti_s: f64) -> bool {
        self.rate(snr) >= bits / stti_s
    }
}

/// `Omega = sqrt(log2(e) / (tau B)) * Qinv(bler) + bits / (tau B)`; the SNR
/// threshold under `V = 1` is `2^Omega - 1`.
pub fn threshold_exponent(packet_bits: f64, channel_uses: f64, bler: f64) -> Result<f64, PhyError> {
    Ok((LOG2_E / channel_uses).sqrt() * inv_q(bler)? + packet_bits / channel_uses)
}

/// Post-processing SNR below which a transmission is in outage under `V = 1`.
pub fn snr_threshold(packet_bits: f64, channel_uses: f64, bler: f64) -> Result<f64, PhyError> {
    Ok(threshold_exponent(packet_bits, channel_uses, bler)?.exp2() - 1.0)
}
