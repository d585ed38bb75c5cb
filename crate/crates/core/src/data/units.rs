use super::{DataError, Result};

/// `0.3048^3`, exact.
const CUBIC_METRES_PER_CUBIC_FOOT: f64 = 0.028316846592;
const SECONDS_PER_DAY: f64 = 86400.0;
const MM_PER_M: f64 = 1000.0;
const M2_PER_KM2: f64 = 1e6;

/// Streamflow value marking a missing observation.
pub const MISSING_SENTINEL: f64 = -999.0;

/// Converts discharge in cubic feet per second to depth over the basin in mm/day.
pub fn cfs_to_mm_per_day(q_cfs: f64, area_km2: f64) -> Result<f64> {
    if !(area_km2 > 0.0) {
        return Err(DataError::Param(format!("basin area must be > 0 km², got {area_km2}")));
    }
    Ok(q_cfs * CUBIC_METRES_PER_CUBIC_FOOT * SECONDS_PER_DAY * MM_PER_M / (area_km2 * M2_PER_KM2))
}

pub fn mm_per_day_to_cfs(q_mm: f64, area_km2: f64) -> Result<f64> {
    if !(area_km2 > 0.0) {
        return Err(DataError::Param(format!("basin area must be > 0 km², got {area_km2}")));
    }
    Ok(q_mm * area_km2 * M2_PER_KM2 / (CUBIC_METRES_PER_CUBIC_FOOT * SECONDS_PER_DAY * MM_PER_M))
}
