//! Closed-form radio energy model for cascade versus watchdog monitoring.
//!
//! Per-packet radio cost is modeled as `a × size + b` µJ with mode-specific
//! constants for sending, receiving and overhearing (Lucent 2 Mbps
//! IEEE 802.11 card measurements). Watchdog monitoring overhears `n` data
//! packets per window; cascade monitoring pays a fixed two-hop feature
//! report per window plus the watchdog cost weighted by the first stage's
//! false positives rate.

use serde::{Deserialize, Serialize};

/// `a` µJ/byte, `b` µJ per packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeCost {
    pub a: f64,
    pub b: f64,
}

impl ModeCost {
    pub fn cost(&self, size_bytes: f64) -> f64 {
        self.a * size_bytes + self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub send: ModeCost,
    pub receive: ModeCost,
    pub overhear: ModeCost,
    /// Data packet size in bytes.
    pub size_data: f64,
    /// Feature report size in bytes (payload plus header).
    pub size_f2: f64,
    /// Time window length in seconds.
    pub window_size: f64,
    /// Data injection rate in packets per second.
    pub injection_rate: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            send: ModeCost { a: 1.9, b: 454.0 },
            receive: ModeCost { a: 0.5, b: 356.0 },
            overhear: ModeCost { a: 0.39, b: 140.0 },
            size_data: 1024.0,
            // 24 features, 2 bytes each, header-free piggybacked transport.
            size_f2: 48.0,
            window_size: 500.0,
            injection_rate: 0.5,
        }
    }
}

/// Watchdog cost: overhearing `n` data packets, in µJ.
pub fn xi_f0(n: f64, params: &EnergyParams) -> f64 {
    n * params.overhear.cost(params.size_data)
}

/// Cost of shipping one feature report over two hops (one send plus one
/// receive per hop), in µJ.
pub fn xi_f2(params: &EnergyParams) -> f64 {
    2.0 * (params.send.cost(params.size_f2) + params.receive.cost(params.size_f2))
}

/// Total per-window cascade cost in a misbehavior-free network, in µJ:
/// the report cost plus the watchdog cost incurred on first-stage false
/// positives.
pub fn xi_total(fp_rate: f64, n: f64, params: &EnergyParams) -> f64 {
    xi_f2(params) + fp_rate * xi_f0(n, params)
}

/// Energy trade-off for one window size: consumption adjusted to a
/// 500-second period (mJ) and relative saving versus always-on watchdog
/// monitoring of a 500-second window (percent).
pub fn trade_off(fp_rate: f64, n: f64, params: &EnergyParams) -> (f64, f64) {
    let xi = xi_total(fp_rate, n, params);
    let xi_prime = 500.0 / params.window_size * xi;
    let gamma = 1.0 - xi_prime / xi_f0(250.0, params);
    (xi_prime / 1000.0, gamma * 100.0)
}

/// Packet count at which the per-window report cost equals the watchdog
/// cost, and the equivalent window size in seconds at the configured
/// injection rate. Below the break-even the watchdog is cheaper.
pub fn breakeven_n(params: &EnergyParams) -> (f64, f64) {
    let n = xi_f2(params) / params.overhear.cost(params.size_data);
    (n, n / params.injection_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MonitorMode {
    Costim,
    Watchdog,
}

/// One step of the accumulated-energy curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyPoint {
    pub time: f64,
    pub cumulative_uj: f64,
}

/// Stepwise accumulated energy over `duration` seconds. Watchdog mode
/// overhears every data packet of every window; cascade mode pays the
/// per-window cascade cost with `n` fixed by a 50-second observation
/// period at the configured injection rate.
pub fn accumulate(
    duration: f64,
    mode: MonitorMode,
    fp_rate: f64,
    params: &EnergyParams,
) -> Vec<EnergyPoint> {
    let n_windows = (duration / params.window_size).floor() as usize;
    let per_window = match mode {
        MonitorMode::Watchdog => xi_f0(params.injection_rate * params.window_size, params),
        MonitorMode::Costim => {
            let n_f0 = params.injection_rate * 50.0;
            xi_total(fp_rate, n_f0, params)
        }
    };
    let mut points = Vec::with_capacity(n_windows);
    let mut acc = 0.0;
    for w in 1..=n_windows {
        acc += per_window;
        points.push(EnergyPoint {
            time: w as f64 * params.window_size,
            cumulative_uj: acc,
        });
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn watchdog_cost_zero_packets() {
        assert_eq!(xi_f0(0.0, &EnergyParams::default()), 0.0);
    }

    #[test]
    fn watchdog_cost_arithmetic() {
        let p = EnergyParams::default();
        // 25 × (0.39 × 1024 + 140) = 25 × 539.36
        assert_relative_eq!(xi_f0(25.0, &p), 13_484.0, max_relative = 1e-12);
        assert_relative_eq!(xi_f0(250.0, &p), 134_840.0, max_relative = 1e-12);
    }

    #[test]
    fn report_cost_constants_only_for_empty_payload() {
        let p = EnergyParams {
            size_f2: 0.0,
            ..EnergyParams::default()
        };
        // 2 × (454 + 356)
        assert_relative_eq!(xi_f2(&p), 1620.0, max_relative = 1e-12);
    }

    #[test]
    fn report_cost_arithmetic_and_linearity() {
        let p = EnergyParams::default();
        assert_relative_eq!(xi_f2(&p), 1850.4, max_relative = 1e-12);
        let doubled = EnergyParams {
            size_f2: 96.0,
            ..p
        };
        assert_relative_eq!(xi_f2(&doubled) - xi_f2(&p), 2.0 * 2.4 * 48.0, max_relative = 1e-9);
    }

    #[test]
    fn total_without_false_positives_is_report_cost() {
        let p = EnergyParams::default();
        assert_eq!(xi_total(0.0, 25.0, &p), xi_f2(&p));
    }

    #[test]
    fn breakeven_defaults() {
        let p = EnergyParams::default();
        let (n, window) = breakeven_n(&p);
        assert!((n - 3.431).abs() < 0.001, "n = {n}");
        assert!((window - 6.86).abs() < 0.01, "window = {window}");
    }

    #[test]
    fn breakeven_without_header_payload() {
        let p = EnergyParams {
            size_f2: 0.0,
            ..EnergyParams::default()
        };
        let (n, _) = breakeven_n(&p);
        assert!((n - 3.004).abs() < 0.001, "n = {n}");
    }

    #[test]
    fn breakeven_shrinks_with_data_size() {
        let small = EnergyParams::default();
        let big = EnergyParams {
            size_data: 1_000_000.0,
            ..small
        };
        let (n_small, _) = breakeven_n(&small);
        let (n_big, _) = breakeven_n(&big);
        assert!(n_big < n_small);
        assert!(n_big < 0.01);
    }

    #[test]
    fn accumulate_single_window_equals_one_step() {
        let p = EnergyParams {
            window_size: 500.0,
            ..EnergyParams::default()
        };
        let pts = accumulate(500.0, MonitorMode::Costim, 0.1509, &p);
        assert_eq!(pts.len(), 1);
        assert_relative_eq!(pts[0].cumulative_uj, xi_total(0.1509, 25.0, &p));
    }

    #[test]
    fn hour_ratio_for_1kb_packets() {
        let p = EnergyParams::default();
        let wd = accumulate(3600.0, MonitorMode::Watchdog, 0.0, &p);
        let cs = accumulate(3600.0, MonitorMode::Costim, 0.1509, &p);
        let ratio = wd.last().unwrap().cumulative_uj / cs.last().unwrap().cumulative_uj;
        // 134.84 mJ vs 3.89 mJ per window
        assert!((ratio - 34.7).abs() < 0.2, "ratio = {ratio}");
    }

    #[test]
    fn hour_ratio_for_64b_packets_above_one_order() {
        let p = EnergyParams {
            size_data: 64.0,
            ..EnergyParams::default()
        };
        let wd = accumulate(3600.0, MonitorMode::Watchdog, 0.0, &p);
        let cs = accumulate(3600.0, MonitorMode::Costim, 0.1509, &p);
        let ratio = wd.last().unwrap().cumulative_uj / cs.last().unwrap().cumulative_uj;
        assert!(ratio > 10.0, "ratio = {ratio}");
    }

    #[test]
    fn monotone_in_inputs() {
        let p = EnergyParams::default();
        assert!(xi_total(0.2, 25.0, &p) > xi_total(0.1, 25.0, &p));
        assert!(xi_total(0.1, 50.0, &p) > xi_total(0.1, 25.0, &p));
        let bigger = EnergyParams {
            size_data: 2048.0,
            ..p
        };
        assert!(xi_total(0.1, 25.0, &bigger) > xi_total(0.1, 25.0, &p));
    }
}
