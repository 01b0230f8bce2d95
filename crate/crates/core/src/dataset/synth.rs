//! Deterministic hourly weather/irradiance generator.
//!
//! For hour index `h` (row), `hod = h mod 24` and the year phase
//! `s = 2 pi h / 8760`:
//!
//! ```text
//! clearsky      = 1000 sin(pi (hod - 6) / 12)       if 6 < hod < 18, else 0
//! temperature   = 15 + 10 sin(pi (hod - 8) / 12) + 5 sin(s) + N1
//! humidity      = clamp(60 - 0.5 (temperature - 15) + 5 N3, 5, 100)
//! pressure      = 1013 + 3 N2
//! wind_speed    = |3 + 2 N4|
//! wind_direction= 360 U5
//! length_of_day = 12 + 2 sin(s)
//! irradiance    = max(0, clearsky (0.65 + 0.015 (temperature - 15)
//!                     - 0.004 (humidity - 60) + 0.1 cos(wind_direction deg))
//!                     + 20 N0)                       if clearsky > 0, else 0
//! ```
//!
//! `Nc` is `rng::normal_at(seed, [h, c])` and `U5` is
//! `rng::uniform_at(seed, [h, 5])`, where `c` is the column's position in
//! [`irradiance_schema`](super::irradiance_schema) (0 = irradiance).

use std::f64::consts::PI;

use super::{irradiance_schema, TabularDataset};
use crate::matrix::Matrix;
use crate::rng::{normal_at, uniform_at};

pub const SYNTH_FEATURES: [&str; 7] = [
    "temperature",
    "pressure",
    "humidity",
    "wind_speed",
    "wind_direction",
    "time_of_day",
    "length_of_day",
];

const COL_IRRADIANCE: u64 = 0;
const COL_TEMPERATURE: u64 = 1;
const COL_PRESSURE: u64 = 2;
const COL_HUMIDITY: u64 = 3;
const COL_WIND_SPEED: u64 = 4;
const COL_WIND_DIRECTION: u64 = 5;

/// Coefficients of the irradiance response. The defaults define the home
/// location; shifted copies stand in for other sites.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthCoefficients {
    pub base: f64,
    pub temperature: f64,
    pub humidity: f64,
    pub wind_direction: f64,
    pub noise_sd: f64,
}

impl Default for SynthCoefficients {
    fn default() -> Self {
        Self {
            base: 0.65,
            temperature: 0.015,
            humidity: -0.004,
            wind_direction: 0.1,
            noise_sd: 20.0,
        }
    }
}

pub fn synth_generate(n_hours: usize, seed: u64) -> TabularDataset {
    synth_generate_with(n_hours, seed, &SynthCoefficients::default())
}

pub fn synth_generate_with(n_hours: usize, seed: u64, coef: &SynthCoefficients) -> TabularDataset {
    let mut features = Matrix::zeros(n_hours, SYNTH_FEATURES.len());
    let mut target = Vec::with_capacity(n_hours);
    for h in 0..n_hours {
        let row = h as u64;
        let hod = (h % 24) as f64;
        let season = 2.0 * PI * h as f64 / 8760.0;
        let clearsky = if hod > 6.0 && hod < 18.0 {
            1000.0 * (PI * (hod - 6.0) / 12.0).sin()
        } else {
            0.0
        };
        let temperature = 15.0
            + 10.0 * (PI * (hod - 8.0) / 12.0).sin()
            + 5.0 * season.sin()
            + normal_at(seed, &[row, COL_TEMPERATURE]);
        let humidity = (60.0 - 0.5 * (temperature - 15.0)
            + 5.0 * normal_at(seed, &[row, COL_HUMIDITY]))
        .clamp(5.0, 100.0);
        let pressure = 1013.0 + 3.0 * normal_at(seed, &[row, COL_PRESSURE]);
        let wind_speed = (3.0 + 2.0 * normal_at(seed, &[row, COL_WIND_SPEED])).abs();
        let wind_direction = 360.0 * uniform_at(seed, &[row, COL_WIND_DIRECTION]);
        let length_of_day = 12.0 + 2.0 * season.sin();
        let irradiance = if clearsky > 0.0 {
            let response = coef.base
                + coef.temperature * (temperature - 15.0)
                + coef.humidity * (humidity - 60.0)
                + coef.wind_direction * wind_direction.to_radians().cos();
            (clearsky * response + coef.noise_sd * normal_at(seed, &[row, COL_IRRADIANCE])).max(0.0)
        } else {
            0.0
        };
        features.row_mut(h).copy_from_slice(&[
            temperature,
            pressure,
            humidity,
            wind_speed,
            wind_direction,
            hod,
            length_of_day,
        ]);
        target.push(irradiance);
    }
    TabularDataset::new(irradiance_schema(), features, target).expect("generator matches schema")
}
