//! SMPTE ST 2084 perceptual quantizer. Encoded values in `[0, 1]`, light in
//! cd/m² up to [`PEAK`]. Out-of-range inputs are clamped and counted.

use crate::clamp_counted;

pub const PEAK: f64 = 10000.0;

pub const M1: f64 = 2610.0 / 16384.0;
pub const M2: f64 = 2523.0 / 4096.0 * 128.0;
pub const C1: f64 = 3424.0 / 4096.0;
pub const C2: f64 = 2413.0 / 4096.0 * 32.0;
pub const C3: f64 = 2392.0 / 4096.0 * 32.0;

/// Code value to cd/m².
pub fn eotf(e: f64) -> f64 {
    let ep = clamp_counted(e, 0.0, 1.0).powf(1.0 / M2);
    let num = (ep - C1).max(0.0);
    PEAK * (num / (C2 - C3 * ep)).powf(1.0 / M1)
}

/// cd/m² to code value.
pub fn oetf(nits: f64) -> f64 {
    let y = (clamp_counted(nits, 0.0, PEAK) / PEAK).powf(M1);
    ((C1 + C2 * y) / (1.0 + C3 * y)).powf(M2)
}
