//! ETSI urban path loss (LOS, NLOSb, NLOSv), correlated log-normal shadowing
//! and the reception decision.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::LinkCondition;
use crate::rng::{substream, STREAM_SHADOWING};
use crate::scenario::Position;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Diffraction parameter below which a blocking vehicle adds no loss.
pub const NU_THRESHOLD: f64 = 0.7;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("{quantity} must be > 0, got {value}")]
    Domain { quantity: &'static str, value: f64 },
    #[error("NLOSv link assessed without blocker geometry")]
    MissingBlocker,
}

fn positive(quantity: &'static str, value: f64) -> Result<f64, ChannelError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(ChannelError::Domain { quantity, value })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    /// dBm
    pub tx_power: f64,
    /// dBm; messages below it are lost.
    pub sensitivity: f64,
    /// GHz
    pub carrier_freq: f64,
    /// dB
    pub shadowing_std: f64,
    /// meters
    pub decorrelation_distance: f64,
    /// Seconds a link may go unobserved before its shadowing state is
    /// dropped and re-drawn.
    pub shadowing_eviction: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        RadioConfig {
            tx_power: 23.0,
            sensitivity: -82.0,
            carrier_freq: 5.9,
            shadowing_std: 3.0,
            decorrelation_distance: 10.0,
            shadowing_eviction: 5.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.carrier_freq > 0.0) {
            return Err(format!("radio.carrier_freq must be > 0, got {}", self.carrier_freq));
        }
        if !(self.shadowing_std >= 0.0) {
            return Err(format!("radio.shadowing_std must be >= 0, got {}", self.shadowing_std));
        }
        if !(self.decorrelation_distance > 0.0) {
            return Err(format!("radio.decorrelation_distance must be > 0, got {}", self.decorrelation_distance));
        }
        if !(self.shadowing_eviction >= 0.0) {
            return Err("radio.shadowing_eviction must be >= 0".into());
        }
        if !self.tx_power.is_finite() || !self.sensitivity.is_finite() {
            return Err("radio powers must be finite".into());
        }
        Ok(())
    }

    /// Wavelength in meters.
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / (self.carrier_freq * 1e9)
    }
}

/// Urban LOS path loss in dB; `d3d` in meters, `fc` in GHz.
pub fn path_loss_los(d3d: f64, fc: f64) -> Result<f64, ChannelError> {
    let d = positive("distance", d3d)?;
    let f = positive("carrier frequency", fc)?;
    Ok(38.77 + 16.7 * d.log10() + 18.2 * f.log10())
}

/// Urban NLOS path loss for building obstruction, dB.
pub fn path_loss_nlosb(d3d: f64, fc: f64) -> Result<f64, ChannelError> {
    let d = positive("distance", d3d)?;
    let f = positive("carrier frequency", fc)?;
    Ok(36.85 + 30.0 * d.log10() + 18.9 * f.log10())
}

/// First Fresnel zone radius at a point `d1`/`d2` meters from the link ends.
pub fn fresnel_radius(wavelength: f64, d1: f64, d2: f64) -> f64 {
    (wavelength * d1 * d2 / (d1 + d2)).sqrt()
}

/// Knife-edge loss of a blocking vehicle, dB, added on top of the LOS loss.
///
/// `h_obstacle − h_link_at_blocker` is the height by which the blocker
/// pierces the straight antenna-to-antenna line; `ν = √2·H / r_f`. Zero for
/// `ν ≤ 0.7`, otherwise `6.9 + 20·log10(√((ν−0.1)² + 1) + ν − 0.1)`. The
/// model jumps from 0 to about 11.84 dB at `ν = 0.7`.
pub fn nlosv_extra_loss(
    h_obstacle: f64,
    h_link_at_blocker: f64,
    d1: f64,
    d2: f64,
    fc: f64,
) -> Result<f64, ChannelError> {
    let d1 = positive("d1", d1)?;
    let d2 = positive("d2", d2)?;
    let fc = positive("carrier frequency", fc)?;
    let wavelength = SPEED_OF_LIGHT / (fc * 1e9);
    let h = h_obstacle - h_link_at_blocker;
    let nu = std::f64::consts::SQRT_2 * h / fresnel_radius(wavelength, d1, d2);
    Ok(knife_edge_loss(nu))
}

/// Diffraction loss as a function of `ν` alone.
pub fn knife_edge_loss(nu: f64) -> f64 {
    if nu > NU_THRESHOLD {
        let v = nu - 0.1;
        6.9 + 20.0 * ((v * v + 1.0).sqrt() + v).log10()
    } else {
        0.0
    }
}

/// Geometry of a vehicle-obstructed link. `d1` is measured from the ego
/// side, `d2` from the target side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockerGeometry {
    pub obstacle_height: f64,
    pub ego_antenna_height: f64,
    pub target_antenna_height: f64,
    pub d1: f64,
    pub d2: f64,
}

impl BlockerGeometry {
    /// Height of the straight antenna-to-antenna line above the blocker.
    pub fn link_height_at_blocker(&self) -> f64 {
        let f = self.d1 / (self.d1 + self.d2);
        self.ego_antenna_height + (self.target_antenna_height - self.ego_antenna_height) * f
    }
}

/// Antenna-to-antenna distance from the horizontal distance and the two
/// antenna heights.
pub fn distance_3d(distance_2d: f64, h_a: f64, h_b: f64) -> f64 {
    distance_2d.hypot(h_a - h_b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub path_loss: f64,
    pub shadowing: f64,
    pub rx_power: f64,
    pub delivered: bool,
}

/// Path loss for `condition`, shadowing, received power and the
/// `rx_power ≥ sensitivity` reception rule.
pub fn assess_link(
    condition: LinkCondition,
    distance_3d: f64,
    blocker: Option<&BlockerGeometry>,
    radio: &RadioConfig,
    shadow: f64,
) -> Result<LinkBudget, ChannelError> {
    let fc = radio.carrier_freq;
    let path_loss = match condition {
        LinkCondition::Los => path_loss_los(distance_3d, fc)?,
        LinkCondition::NlosBuilding => path_loss_nlosb(distance_3d, fc)?,
        LinkCondition::NlosVehicle => {
            let g = blocker.ok_or(ChannelError::MissingBlocker)?;
            let extra = nlosv_extra_loss(g.obstacle_height, g.link_height_at_blocker(), g.d1, g.d2, fc)?;
            extra + path_loss_los(distance_3d, fc)?
        }
    };
    let rx_power = radio.tx_power - path_loss - shadow;
    Ok(LinkBudget { path_loss, shadowing: shadow, rx_power, delivered: rx_power >= radio.sensitivity })
}

/// One step of a stationary Gauss-Markov process with correlation `rho` and
/// marginal standard deviation `std`.
pub fn ar1_update<R: Rng + ?Sized>(previous: f64, rho: f64, std: f64, rng: &mut R) -> f64 {
    let innovation: f64 = rng.sample(StandardNormal);
    rho * previous + (1.0 - rho * rho).max(0.0).sqrt() * std * innovation
}

#[derive(Debug, Clone)]
struct ShadowEntry {
    value: f64,
    ego: Position,
    target: Position,
    last_seen: f64,
    rng: ChaCha8Rng,
}

/// Per-link spatially correlated shadowing. Each link owns an RNG stream
/// derived from the global seed, the target id and its first-seen time, so
/// values do not depend on which other links exist.
#[derive(Debug, Clone)]
pub struct ShadowingState {
    seed: u64,
    std: f64,
    decorrelation_distance: f64,
    eviction: f64,
    links: HashMap<String, ShadowEntry>,
}

impl ShadowingState {
    pub fn new(seed: u64, radio: &RadioConfig) -> Self {
        ShadowingState {
            seed,
            std: radio.shadowing_std,
            decorrelation_distance: radio.decorrelation_distance,
            eviction: radio.shadowing_eviction,
            links: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Advance the shadowing of the link to `target_id`. The decorrelation
    /// distance is the sum of the ego and target displacements since the
    /// previous update; the first observation draws a fresh sample.
    pub fn update(&mut self, target_id: &str, ego: Position, target: Position, now: f64) -> f64 {
        let (std, dcorr) = (self.std, self.decorrelation_distance);
        if let Some(entry) = self.links.get_mut(target_id) {
            let moved = entry.ego.distance(ego) + entry.target.distance(target);
            entry.value = ar1_update(entry.value, (-moved / dcorr).exp(), std, &mut entry.rng);
            entry.ego = ego;
            entry.target = target;
            entry.last_seen = now;
            return entry.value;
        }
        let key = format!("{target_id}@{:016x}", now.to_bits());
        let mut rng = substream(self.seed, STREAM_SHADOWING, &key);
        let value = ar1_update(0.0, 0.0, std, &mut rng);
        self.links.insert(target_id.to_owned(), ShadowEntry { value, ego, target, last_seen: now, rng });
        value
    }

    /// Drop links not updated within the eviction horizon.
    pub fn evict_stale(&mut self, now: f64) {
        let horizon = self.eviction;
        self.links.retain(|_, e| now - e.last_seen <= horizon);
    }
}
