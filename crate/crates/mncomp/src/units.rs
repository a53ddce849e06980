//! Unit conversions between logarithmic I/O values and the linear quantities
//! used internally. All internal arithmetic is in linear units (watts, power
//! ratios); dB/dBm appear only at configuration and reporting boundaries.

/// Convert a dBm value to watts: `x dBm = 10^((x - 30) / 10)` W.
#[inline]
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Convert watts to dBm.
#[inline]
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Convert a dB power ratio to linear.
#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Convert a linear power ratio to dB.
#[inline]
pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}
