//! Temporally correlated GNSS position error.
//!
//! Magnitude `μ` and angle `θ` follow the same first-order recursion
//!
//! ```text
//! a  = exp(−T / t_corr)
//! μ' = a·μ + √(1 − a²)·N_μ      N_μ ~ Gaussian(0, σ²)
//! θ' = a·θ + √(1 − a²)·N_θ      N_θ ~ Uniform(0, 2π)
//! ```
//!
//! where `T` is the time since the node's previous update. The fix is then
//! displaced by `μ` along bearing `θ` (east `μ·cos θ`, north `μ·sin θ`).
//! `μ` is signed; a negative magnitude points the other way. `θ` is kept
//! unwrapped inside the recursion and wrapped into `[0, 2π)` on output.

use std::collections::HashMap;
use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::substream;
use crate::scenario::{normalize_angle, GeoOrigin, GeoPoint, Position};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnssConfig {
    /// Standard deviation of the error magnitude, meters. The default is the
    /// measured distance RMS of 2.32 m, which equals the steady-state RMS
    /// radial error of this process.
    pub sigma: f64,
    /// Correlation time, seconds.
    pub t_corr: f64,
}

impl Default for GnssConfig {
    fn default() -> Self {
        GnssConfig { sigma: 2.32, t_corr: 10.0 }
    }
}

impl GnssConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(format!("gnss.sigma must be >= 0, got {}", self.sigma));
        }
        if !(self.t_corr > 0.0) {
            return Err(format!("gnss.t_corr must be > 0, got {}", self.t_corr));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GnssError {
    #[error("node `{node}`: clock went backwards ({now} < {last})")]
    ClockRegression { node: String, now: f64, last: f64 },
}

/// Error process of one node; the pure core of [`GnssErrorState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeError {
    pub mu: f64,
    /// Unwrapped angle as produced by the recursion.
    pub theta_raw: f64,
    pub last_time: f64,
}

impl NodeError {
    /// First observation: uncorrelated draw.
    pub fn fresh<R: Rng + ?Sized>(now: f64, config: &GnssConfig, rng: &mut R) -> Self {
        let (n_mu, n_theta) = draw(config, rng);
        NodeError { mu: n_mu, theta_raw: n_theta, last_time: now }
    }

    pub fn advance<R: Rng + ?Sized>(&self, now: f64, config: &GnssConfig, rng: &mut R) -> Result<NodeError, f64> {
        if now < self.last_time {
            return Err(self.last_time);
        }
        let a = (-(now - self.last_time) / config.t_corr).exp();
        let b = (1.0 - a * a).max(0.0).sqrt();
        let (n_mu, n_theta) = draw(config, rng);
        Ok(NodeError { mu: a * self.mu + b * n_mu, theta_raw: a * self.theta_raw + b * n_theta, last_time: now })
    }

    pub fn theta(&self) -> f64 {
        normalize_angle(self.theta_raw)
    }

    pub fn offset(&self) -> ErrorOffset {
        ErrorOffset { mu: self.mu, theta: self.theta() }
    }
}

fn draw<R: Rng + ?Sized>(config: &GnssConfig, rng: &mut R) -> (f64, f64) {
    let n: f64 = rng.sample(StandardNormal);
    let u: f64 = rng.random::<f64>() * TAU;
    (config.sigma * n, u)
}

/// Current error of one node: magnitude (meters, signed) and bearing in
/// `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorOffset {
    pub mu: f64,
    pub theta: f64,
}

/// Error processes of all tracked nodes, each with its own RNG stream
/// derived from `(seed, stream name, node id)`.
#[derive(Debug, Clone)]
pub struct GnssErrorState {
    seed: u64,
    stream: &'static str,
    config: GnssConfig,
    nodes: HashMap<String, (NodeError, ChaCha8Rng)>,
}

impl GnssErrorState {
    pub fn new(seed: u64, stream: &'static str, config: GnssConfig) -> Self {
        GnssErrorState { seed, stream, config, nodes: HashMap::new() }
    }

    pub fn config(&self) -> &GnssConfig {
        &self.config
    }

    pub fn node(&self, id: &str) -> Option<&NodeError> {
        self.nodes.get(id).map(|(n, _)| n)
    }

    /// Advance `node_id`'s error to `now`.
    pub fn update_error(&mut self, node_id: &str, now: f64) -> Result<ErrorOffset, GnssError> {
        match self.nodes.get_mut(node_id) {
            Some((state, rng)) => {
                let next = state.advance(now, &self.config, rng).map_err(|last| GnssError::ClockRegression {
                    node: node_id.to_owned(),
                    now,
                    last,
                })?;
                *state = next;
                Ok(next.offset())
            }
            None => {
                let mut rng = substream(self.seed, self.stream, node_id);
                let state = NodeError::fresh(now, &self.config, &mut rng);
                self.nodes.insert(node_id.to_owned(), (state, rng));
                Ok(state.offset())
            }
        }
    }
}

/// Displace a planar position by `mu` along bearing `theta`.
pub fn apply_error_planar(exact: Position, mu: f64, theta: f64) -> Position {
    Position::new(exact.x + mu * theta.cos(), exact.y + mu * theta.sin())
}

/// Displace a geodetic fix by `mu` meters along bearing `theta` (CCW from
/// east) through the scenario's planar frame.
pub fn apply_error(origin: &GeoOrigin, exact: GeoPoint, mu: f64, theta: f64) -> GeoPoint {
    if mu == 0.0 {
        return exact;
    }
    origin.to_geodetic(apply_error_planar(origin.to_planar(exact), mu, theta))
}

/// Radial error `|μ|` of a stationary node sampled every `step` seconds.
pub fn stationary_series(config: &GnssConfig, duration: f64, step: f64, seed: u64) -> Vec<f64> {
    let n = (duration / step).round() as usize;
    let mut rng = substream(seed, "gnss-diag", "");
    let mut state = NodeError::fresh(0.0, config, &mut rng);
    let mut out = Vec::with_capacity(n);
    out.push(state.mu.abs());
    for k in 1..n {
        state = state.advance(k as f64 * step, config, &mut rng).expect("time is increasing");
        out.push(state.mu.abs());
    }
    out
}

/// RMS radial error of a stationary node. The process is stationary with
/// `E[μ²] = σ²`, so long runs converge to `sigma`. Runs shorter than
/// `100·t_corr` are statistically unreliable.
pub fn stationary_rms(config: &GnssConfig, duration: f64, step: f64, seed: u64) -> f64 {
    if duration < 100.0 * config.t_corr {
        log::warn!("stationary_rms over {duration} s is shorter than 100 correlation times");
    }
    let series = stationary_series(config, duration, step, seed);
    if series.is_empty() {
        return 0.0;
    }
    (series.iter().map(|e| e * e).sum::<f64>() / series.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn zero_elapsed_time_keeps_state() {
        let cfg = GnssConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = NodeError::fresh(3.0, &cfg, &mut rng);
        let next = s.advance(3.0, &cfg, &mut rng).unwrap();
        assert_eq!((next.mu, next.theta_raw), (s.mu, s.theta_raw));
    }

    #[test]
    fn long_gap_is_fresh_draw() {
        let cfg = GnssConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = NodeError { mu: 50.0, theta_raw: 100.0, last_time: 0.0 };
        let next = s.advance(1e4 * cfg.t_corr, &cfg, &mut rng).unwrap();
        let mut again = ChaCha8Rng::seed_from_u64(1);
        let fresh = NodeError::fresh(0.0, &cfg, &mut again);
        assert!((next.mu - fresh.mu).abs() < 1e-12);
        assert!((next.theta_raw - fresh.theta_raw).abs() < 1e-12);
    }

    #[test]
    fn clock_regression() {
        let mut st = GnssErrorState::new(0, crate::rng::STREAM_GNSS, GnssConfig::default());
        st.update_error("a", 5.0).unwrap();
        let err = st.update_error("a", 4.0).unwrap_err();
        assert_eq!(err, GnssError::ClockRegression { node: "a".into(), now: 4.0, last: 5.0 });
    }

    #[test]
    fn theta_output_normalized() {
        let mut st = GnssErrorState::new(9, crate::rng::STREAM_GNSS, GnssConfig::default());
        for k in 0..500 {
            let o = st.update_error("n", k as f64).unwrap();
            assert!((0.0..TAU).contains(&o.theta));
        }
    }

    #[test]
    fn nodes_are_independent_of_each_other() {
        let cfg = GnssConfig::default();
        let mut alone = GnssErrorState::new(4, crate::rng::STREAM_GNSS, cfg.clone());
        let mut crowded = GnssErrorState::new(4, crate::rng::STREAM_GNSS, cfg);
        for k in 0..20 {
            let t = k as f64 * 0.5;
            crowded.update_error("other", t).unwrap();
            assert_eq!(alone.update_error("a", t).unwrap(), crowded.update_error("a", t).unwrap());
        }
    }

    #[test]
    fn apply_error_cases() {
        let origin = GeoOrigin::new(44.5, 11.3);
        let fix = origin.to_geodetic(Position::new(120.0, -40.0));
        assert_eq!(apply_error(&origin, fix, 0.0, 1.0), fix);
        let north = apply_error(&origin, fix, 5.0, FRAC_PI_2);
        let moved = origin.to_planar(north);
        assert!((moved.y - (-35.0)).abs() < 1e-6);
        assert!((moved.x - 120.0).abs() < 1e-6);
        assert!((north.lon - fix.lon).abs() < 1e-12);
    }

    #[test]
    fn planar_displacement_equals_mu() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let mu: f64 = rng.random_range(-20.0..20.0);
            let theta: f64 = rng.random_range(0.0..TAU);
            let p = Position::new(rng.random_range(-1e3..1e3), rng.random_range(-1e3..1e3));
            let q = apply_error_planar(p, mu, theta);
            assert!((p.distance(q) - mu.abs()).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_sigma_zero_rms() {
        let cfg = GnssConfig { sigma: 0.0, t_corr: 10.0 };
        assert_eq!(stationary_rms(&cfg, 2000.0, 1.0, 0), 0.0);
    }

    #[test]
    fn deterministic_series() {
        let cfg = GnssConfig::default();
        assert_eq!(stationary_series(&cfg, 100.0, 1.0, 3), stationary_series(&cfg, 100.0, 1.0, 3));
        assert_ne!(stationary_series(&cfg, 100.0, 1.0, 3), stationary_series(&cfg, 100.0, 1.0, 4));
    }
}
