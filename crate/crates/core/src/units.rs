//! Physical constants and decibel helpers.

/// Planck constant, J·s (exact SI value).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Boltzmann constant, J/K (exact SI value).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Power ratio from decibels.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Decibels from a power ratio.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Mean photon number `k_B T / (h f)` equivalent to a noise temperature.
pub fn photons_from_temperature(temperature_k: f64, frequency_hz: f64) -> f64 {
    BOLTZMANN * temperature_k / (PLANCK * frequency_hz)
}

/// Inverse of [`photons_from_temperature`].
pub fn temperature_from_photons(photons: f64, frequency_hz: f64) -> f64 {
    photons * PLANCK * frequency_hz / BOLTZMANN
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn db_round_trip() {
        for db in [-3.1, 0.0, 15.3, 91.74] {
            assert!((linear_to_db(db_to_linear(db)) - db).abs() < 1e-12);
        }
    }

    #[test]
    fn photon_temperature_at_five_ghz() {
        // 350 mK at 5 GHz is about 1.46 photons.
        let n = photons_from_temperature(0.350, 5e9);
        assert!((n - 1.4585).abs() < 1e-3, "{n}");
        assert!((temperature_from_photons(n, 5e9) - 0.350).abs() < 1e-15);
    }
}
