//! Independent numerical oracles for the analytical engine.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use urllc_core::config::{access_prob, pathloss_linear, SystemConfig};
use urllc_core::markov::build_chain;
use urllc_core::metrics::{arrival_dist, mean_ue_power, Analyzer};
use urllc_core::optimize::{find_n_max, optimize_m, optimize_n};
use urllc_core::outage::{build_outage_table, outage_prob};
use urllc_core::phy::{achievable_rate, inv_q, reg_lower_gamma, snr_threshold, threshold_exponent, RateParams};

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn gaussian_tail(x: f64) -> f64 {
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    simpson(pdf, x, x + 40.0, 400_000)
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    // f(lo) and f(hi) have opposite signs.
    let flo = f(lo).signum();
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == flo {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * mid.abs() {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn inv_q_against_quadrature() {
    let q1 = gaussian_tail(1.0);
    assert!((q1 - 0.158_655_253_931_457_05).abs() < 1e-13);
    assert!((inv_q(q1).unwrap() - 1.0).abs() < 1e-12);

    let x = bisect(3.0, 6.0, |x| gaussian_tail(x) - 1e-5);
    let ours = inv_q(1e-5).unwrap();
    assert!((ours / x - 1.0).abs() < 1e-12, "{ours} vs {x}");
    assert!((ours - 4.264_890_793_922_824_6).abs() < 1e-12);
    assert_eq!(inv_q(0.5).unwrap(), 0.0);
}

#[test]
fn lower_gamma_against_quadrature() {
    // P(3, 3) = (1/2) * integral_0^3 t^2 e^-t dt.
    let q = 0.5 * simpson(|t| t * t * (-t).exp(), 0.0, 3.0, 20_000);
    assert!((q - 0.576_809_918_873_156_5).abs() < 1e-13);
    assert!((reg_lower_gamma(3.0, 3.0) - q).abs() < 1e-12);
    for t in [0.0, 0.3, 2.0, 17.0] {
        assert!((reg_lower_gamma(1.0, t) - (1.0 - (-t).exp())).abs() < 1e-15);
    }
}

#[test]
fn snr_threshold_inverts_unit_dispersion_rate() {
    let cfg = SystemConfig::reference();
    let (b, tau, beta) = (cfg.bandwidth_hz, cfg.stti_duration_s, 160.0);
    let penalty = (std::f64::consts::LOG2_E / (tau * b)).sqrt() * inv_q(1e-5).unwrap();
    let bits = |g: f64| b * tau * ((1.0 + g).log2() - penalty) - beta;
    let brute = bisect(0.0, 1e3, bits);
    let ours = snr_threshold(beta, cfg.channel_uses(), 1e-5).unwrap();
    assert!((ours / brute - 1.0).abs() < 1e-12, "{ours} vs {brute}");
    let omega = threshold_exponent(beta, cfg.channel_uses(), 1e-5).unwrap();
    assert!((omega - 3.127_796_332_276_723).abs() < 1e-12);
    assert!((ours - 7.740_987_845_516_815).abs() < 1e-10);
}

#[test]
fn rate_golden_value() {
    let r = achievable_rate(&RateParams {
        snr: 10.0,
        channel_uses: 900e3 / 14_000.0,
        bler: 1e-5,
        bandwidth_hz: 900e3,
    })
    .unwrap();
    assert!((r - 2_540_852.789_480_250).abs() < 1e-6);
    let shannon = achievable_rate(&RateParams {
        snr: 10.0,
        channel_uses: 64.0,
        bler: 0.5,
        bandwidth_hz: 900e3,
    })
    .unwrap();
    assert!((shannon - 900e3 * 11f64.log2()).abs() < 1e-6);
}

/// `1 / [(G^H G)^-1]_{0,0}` for an `m x 2` matrix via the explicit 2x2 inverse.
fn inverse_diag_two(h: &[Complex64], m: usize) -> f64 {
    let dot = |a: usize, b: usize| -> Complex64 { (0..m).map(|r| h[r * 2 + a].conj() * h[r * 2 + b]).sum() };
    let (g00, g01, g11) = (dot(0, 0).re, dot(0, 1), dot(1, 1).re);
    let det = g00 * g11 - g01.norm_sqr();
    det / g11
}

#[test]
fn outage_against_wishart_sampling() {
    let mut cfg = SystemConfig::reference();
    cfg.n_antennas = 4;
    cfg.est_error = 0.1;
    let n_tx = 2;
    let rho = outage_prob(&cfg, n_tx).unwrap();

    let thr = snr_threshold(160.0, cfg.channel_uses(), cfg.bler_target).unwrap();
    let xi = cfg.etp_w();
    let d2 = cfg.est_error * cfg.est_error;
    let denom = cfg.noise_power_w() + xi * d2 * n_tx as f64;
    // Entries of the estimate have variance 1 + delta^2, split over re and im.
    let sd = ((1.0 + d2) / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
    let samples = 10_000_000u64;
    let mut h = vec![Complex64::new(0.0, 0.0); 8];
    let mut fails = 0u64;
    for _ in 0..samples {
        for z in h.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *z = Complex64::new(re * sd, im * sd);
        }
        let snr = xi * inverse_diag_two(&h, 4) / denom;
        fails += u64::from(snr < thr);
    }
    let est = fails as f64 / samples as f64;
    let se = (rho * (1.0 - rho) / samples as f64).sqrt();
    assert!((est - rho).abs() <= 3.0 * se, "rho {rho:e} est {est:e} se {se:e}");
}

#[test]
fn arrival_dist_against_enumeration() {
    let (n, mu) = (14usize, 0.5);
    let mut by_count = vec![0.0; n + 1];
    for mask in 0u32..(1 << n) {
        let mut p = 1.0;
        for u in 0..n {
            p *= if mask >> u & 1 == 1 { mu } else { 1.0 - mu };
        }
        by_count[mask.count_ones() as usize] += p;
    }
    for (a, b) in arrival_dist(n, mu).iter().zip(&by_count) {
        assert!((a - b).abs() < 1e-15);
    }
    assert_eq!(arrival_dist(3, 0.0), vec![1.0, 0.0, 0.0, 0.0]);
    assert_eq!(arrival_dist(2, 0.5), vec![0.25, 0.5, 0.25]);
}

#[test]
fn chain_rows_against_single_round_sampling() {
    let mut cfg = SystemConfig::reference();
    cfg.n_antennas = 2;
    let table = build_outage_table(&cfg).unwrap();
    let n = 4;
    let chain = build_chain(n, 7, &table).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let rounds = 1_000_000u64;
    for i in 0..n {
        let residual = n - i;
        let p = access_prob(residual, cfg.n_antennas);
        let mut counts = vec![0u64; n + 1];
        for _ in 0..rounds {
            let tx = (0..residual).filter(|_| rng.random::<f64>() < p).count();
            let ok = if tx == 0 || tx > cfg.n_antennas {
                0
            } else {
                (0..tx).filter(|_| rng.random::<f64>() >= table.rho(tx)).count()
            };
            counts[i + ok] += 1;
        }
        let row: f64 = (0..=n).map(|j| chain.transition(i, j)).sum();
        assert!((row - 1.0).abs() < 1e-12);
        for j in 0..=n {
            let q = chain.transition(i, j);
            let est = counts[j] as f64 / rounds as f64;
            let se = (q * (1.0 - q) / rounds as f64).sqrt();
            assert!((est - q).abs() <= 3.0 * se + 1e-12, "row {i} col {j}: {q} vs {est}");
        }
    }
}

#[test]
fn mean_ue_power_against_sampling() {
    let cfg = SystemConfig::reference();
    let exact = mean_ue_power(&cfg).unwrap();
    let xi = cfg.etp_w();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10_000_000usize;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let d: f64 = rng.random_range(50.0..150.0);
        let p = xi / pathloss_linear(d, &cfg.pathloss).unwrap();
        s += p;
        s2 += p * p;
    }
    let mean = s / n as f64;
    let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - exact).abs() <= 3.0 * se, "{exact} vs {mean} (se {se})");

    let mut doubled = cfg.clone();
    doubled.etp_dbm += 10.0 * 2f64.log10();
    assert!((mean_ue_power(&doubled).unwrap() / exact - 2.0).abs() < 1e-12);
    let mut point = cfg.clone();
    point.ue_distance_range_m = (100.0, 100.0);
    let at = xi / pathloss_linear(100.0, &cfg.pathloss).unwrap();
    assert!((mean_ue_power(&point).unwrap() / at - 1.0).abs() < 1e-14);
    point.ue_distance_range_m = (100.0, 90.0);
    assert!(mean_ue_power(&point).is_err());
}

fn epsilon(cfg: &SystemConfig) -> f64 {
    Analyzer::new(cfg.clone()).unwrap().report().unwrap().epsilon
}

#[test]
fn error_orderings() {
    let base = SystemConfig::reference();
    // Population: more UEs, more contention.
    let mut prev = 0.0;
    for n in 1..=30 {
        let mut c = base.clone();
        c.n_ues = n;
        let e = epsilon(&c);
        assert!(e >= prev, "N={n}");
        prev = e;
    }
    // Estimation error.
    let mut prev = 0.0;
    for delta in [0.0, 0.05, 0.1, 0.2, 0.3] {
        let mut c = base.clone();
        c.est_error = delta;
        let e = epsilon(&c);
        assert!(e >= prev, "delta={delta}");
        prev = e;
    }
    // Antennas.
    let mut prev = 1.0;
    for m in 2..=8 {
        let mut c = base.clone();
        c.n_antennas = m;
        let e = epsilon(&c);
        assert!(e <= prev, "M={m}");
        prev = e;
    }
}

#[test]
fn efficiency_falls_beyond_full_load() {
    let mut cfg = SystemConfig::reference();
    cfg.n_antennas = 4;
    cfg.n_ues = 10;
    let mut prev = f64::INFINITY;
    for step in 4..=9 {
        cfg.arrival_prob = step as f64 / 10.0;
        let eta = Analyzer::new(cfg.clone()).unwrap().report().unwrap().efficiency_bpj.unwrap();
        assert!(eta <= prev, "mu={}", cfg.arrival_prob);
        prev = eta;
    }
}

#[test]
fn n_max_bisection_equals_linear_scan() {
    let mut cfg = SystemConfig::reference();
    cfg.n_antennas = 6;
    cfg.arrival_prob = 0.4;
    let upper = (2.0 * 6.0 / 0.4f64).ceil() as usize;
    let mut scan = 0;
    for n in 1..=upper {
        let mut c = cfg.clone();
        c.n_ues = n;
        if epsilon(&c) <= cfg.eps_max {
            scan = n;
        } else {
            break;
        }
    }
    assert_eq!(find_n_max(&cfg, cfg.eps_max).unwrap(), scan);

    let mut hopeless = cfg.clone();
    hopeless.etp_dbm = -120.0;
    assert_eq!(find_n_max(&hopeless, 1e-5).unwrap(), 0);
}

#[test]
fn optimize_n_equals_brute_force() {
    let mut cfg = SystemConfig::reference();
    cfg.etp_dbm = -90.0;
    cfg.est_error = 0.1;
    cfg.n_antennas = 4;
    cfg.arrival_prob = 0.3;
    let res = optimize_n(&cfg, cfg.eps_max).unwrap();
    let upper = (2.0 * 4.0 / 0.3f64).ceil() as usize;
    let mut best = (0, f64::NEG_INFINITY);
    for n in 1..=upper {
        let mut c = cfg.clone();
        c.n_ues = n;
        let r = Analyzer::new(c).unwrap().report().unwrap();
        if r.epsilon <= cfg.eps_max && r.efficiency_bpj.unwrap() > best.1 {
            best = (n, r.efficiency_bpj.unwrap());
        }
    }
    assert_eq!(res.best_value, best.0);
    assert_eq!(res.best_eta, best.1);
    let mut check = cfg.clone();
    check.n_ues = res.best_value;
    assert!(epsilon(&check) <= cfg.eps_max);
    let log = (upper as f64).log2().ceil() as usize;
    assert!(res.evaluations <= log + res.feasible_bound);
}

#[test]
fn optimize_m_equals_brute_force() {
    let mut cfg = SystemConfig::reference();
    cfg.n_ues = 20;
    cfg.arrival_prob = 0.5;
    let m_max = 40;
    let res = optimize_m(&cfg, cfg.eps_max, m_max).unwrap();
    let mut best = (0, f64::NEG_INFINITY);
    let mut m_min = None;
    for m in 2..=m_max {
        let mut c = cfg.clone();
        c.n_antennas = m;
        let r = Analyzer::new(c).unwrap().report().unwrap();
        if r.epsilon <= cfg.eps_max {
            m_min.get_or_insert(m);
            if r.efficiency_bpj.unwrap() > best.1 {
                best = (m, r.efficiency_bpj.unwrap());
            }
        }
    }
    assert_eq!(Some(res.feasible_bound), m_min);
    assert_eq!(res.best_value, best.0);
    assert_eq!(res.best_eta, best.1);
}
