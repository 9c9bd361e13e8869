use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{field}: {reason}")]
pub struct ParamError {
    pub field: &'static str,
    pub reason: String,
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ParamError {
    ParamError {
        field,
        reason: reason.into(),
    }
}

/// Protocol constants shared by both device state machines. Times are whole
/// seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolParams {
    /// Unsafe distance `d` in meters.
    pub unsafe_distance: f64,
    /// Minimum risky contact duration `T`.
    pub min_contact: i64,
    /// Beacon period `δ`.
    pub beacon_period: i64,
    /// Retention horizon `Δ` in days.
    pub retention_days: u32,
    /// Redundancy length `σ` in bits.
    pub sigma: u32,
    /// Own-key rotation period, tied to MAC address changes.
    pub rotation_period: i64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            unsafe_distance: 2.0,
            min_contact: 600,
            beacon_period: 60,
            retention_days: 14,
            sigma: 16,
            rotation_period: 900,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.unsafe_distance.is_finite() && self.unsafe_distance > 0.0) {
            return Err(invalid("d", "must be a positive distance"));
        }
        if self.min_contact <= 0 {
            return Err(invalid("T", "must be positive"));
        }
        if self.beacon_period <= 0 {
            return Err(invalid("delta", "must be positive"));
        }
        if self.beacon_period >= self.min_contact {
            return Err(invalid("delta", "must be smaller than T"));
        }
        if self.retention_days < 1 {
            return Err(invalid("Delta", "must be at least one day"));
        }
        if self.sigma < 8 {
            return Err(invalid("sigma", "must be at least 8 bits"));
        }
        if self.rotation_period <= 0 {
            return Err(invalid("rho", "must be positive"));
        }
        Ok(())
    }

    /// `T + δ`: lifetime of pool entries and of retired private keys.
    pub fn key_lifetime(&self) -> i64 {
        self.min_contact + self.beacon_period
    }
}

/// Knobs that only the central-server protocol uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CsConfig {
    /// Accepted deviation between a beacon timestamp and the receiver clock.
    pub epsilon: i64,
    /// When off, beacons are accepted without signature or time checks.
    pub replay_protection: bool,
    /// Number of consecutive-epoch links a chain needs before it is reported.
    pub epoch_chain_min_links: u32,
}

impl Default for CsConfig {
    fn default() -> Self {
        CsConfig {
            epsilon: 5,
            replay_protection: true,
            epoch_chain_min_links: 1,
        }
    }
}

impl CsConfig {
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.epsilon < 0 {
            return Err(invalid("epsilon", "must be non-negative"));
        }
        if self.epoch_chain_min_links < 1 {
            return Err(invalid("epoch_chain_min_links", "must be at least 1"));
        }
        Ok(())
    }
}

pub const SECONDS_PER_DAY: i64 = 86_400;

pub fn day_of(t: i64) -> i64 {
    t.div_euclid(SECONDS_PER_DAY)
}
