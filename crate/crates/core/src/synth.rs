//! Deterministic synthetic signals: polynomial trend plus periodic terms plus
//! Gaussian noise.
//!
//! Recipes have a compact text form, `;`-separated:
//!
//! ```text
//! trend=1,0.01;sin=24:1:0;saw=7:0.5;noise=0.01
//! ```
//!
//! `trend` lists ascending polynomial coefficients in `t`; `sin` and `saw`
//! take `period:amplitude[:phase]` with the phase in radians; `noise` is the
//! standard deviation.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::Series;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Waveform {
    Sine,
    /// Rising ramp from `-amplitude` to `amplitude` each period.
    Sawtooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicTerm {
    pub waveform: Waveform,
    pub period: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl PeriodicTerm {
    pub fn sine(period: f64, amplitude: f64) -> Self {
        Self {
            waveform: Waveform::Sine,
            period,
            amplitude,
            phase: 0.0,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let angle = 2.0 * PI * t / self.period + self.phase;
        match self.waveform {
            Waveform::Sine => self.amplitude * angle.sin(),
            Waveform::Sawtooth => {
                let cycles = angle / (2.0 * PI);
                self.amplitude * (2.0 * (cycles - cycles.floor()) - 1.0)
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub trend: Vec<f64>,
    pub terms: Vec<PeriodicTerm>,
    pub noise_sigma: f64,
}

impl Recipe {
    pub fn with_trend(mut self, coefficients: &[f64]) -> Self {
        self.trend = coefficients.to_vec();
        self
    }

    pub fn with_term(mut self, term: PeriodicTerm) -> Self {
        self.terms.push(term);
        self
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    /// Noise-free value at sample `t`.
    pub fn clean_value(&self, t: f64) -> f64 {
        let trend = self.trend.iter().rev().fold(0.0, |acc, &c| acc * t + c);
        trend + self.terms.iter().map(|p| p.value(t)).sum::<f64>()
    }
}

/// Samples `recipe` at `t = 0..length`. The same seed yields the same series.
pub fn synth(recipe: &Recipe, length: usize, seed: u64) -> Result<Series> {
    if length == 0 {
        return Err(Error::InvalidInput("synthetic length must be positive".into()));
    }
    let noise = Normal::new(0.0, recipe.noise_sigma)
        .map_err(|e| Error::InvalidInput(format!("noise sigma {}: {e}", recipe.noise_sigma)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..length)
        .map(|t| {
            let clean = recipe.clean_value(t as f64);
            if recipe.noise_sigma > 0.0 {
                clean + noise.sample(&mut rng)
            } else {
                clean
            }
        })
        .collect();
    Series::new(values)
}

fn parse_f64(item: &str, text: &str) -> Result<f64> {
    text.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidInput(format!("bad number '{text}' in recipe item '{item}'")))
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut recipe = Recipe::default();
        for item in s.split(';').map(str::trim).filter(|i| !i.is_empty()) {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("recipe item '{item}' lacks '='")))?;
            match key.trim() {
                "trend" => {
                    recipe.trend = value.split(',').map(|c| parse_f64(item, c)).collect::<Result<_>>()?;
                }
                "noise" => {
                    recipe.noise_sigma = parse_f64(item, value)?;
                    if recipe.noise_sigma < 0.0 {
                        return Err(Error::InvalidInput("noise sigma must be nonnegative".into()));
                    }
                }
                kind @ ("sin" | "saw") => {
                    let parts: Vec<f64> = value.split(':').map(|c| parse_f64(item, c)).collect::<Result<_>>()?;
                    let (period, amplitude, phase) = match parts[..] {
                        [p, a] => (p, a, 0.0),
                        [p, a, ph] => (p, a, ph),
                        _ => {
                            return Err(Error::InvalidInput(format!(
                                "'{item}': expected period:amplitude[:phase]"
                            )))
                        }
                    };
                    if period <= 0.0 {
                        return Err(Error::InvalidInput(format!("'{item}': period must be positive")));
                    }
                    recipe.terms.push(PeriodicTerm {
                        waveform: if kind == "sin" {
                            Waveform::Sine
                        } else {
                            Waveform::Sawtooth
                        },
                        period,
                        amplitude,
                        phase,
                    });
                }
                other => return Err(Error::InvalidInput(format!("unknown recipe key '{other}'"))),
            }
        }
        Ok(recipe)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_sine() {
        let r = Recipe::default().with_term(PeriodicTerm::sine(24.0, 1.0));
        let s = synth(&r, 48, 0).unwrap();
        for (t, v) in s.values().iter().enumerate() {
            assert_eq!(*v, (2.0 * PI * t as f64 / 24.0).sin());
        }
    }

    #[test]
    fn line_only() {
        let s = synth(&Recipe::default().with_trend(&[1.0, 2.0]), 5, 3).unwrap();
        assert_eq!(s.values(), &[1.0, 3.0, 5.0, 7.0, 9.0]);
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let r = Recipe::default().with_noise(0.5);
        assert_eq!(synth(&r, 100, 7).unwrap(), synth(&r, 100, 7).unwrap());
        assert_ne!(synth(&r, 100, 7).unwrap(), synth(&r, 100, 8).unwrap());
    }

    #[test]
    fn sawtooth_shape() {
        let saw = PeriodicTerm {
            waveform: Waveform::Sawtooth,
            period: 4.0,
            amplitude: 1.0,
            phase: 0.0,
        };
        let v: Vec<f64> = (0..5).map(|t| saw.value(t as f64)).collect();
        assert_eq!(v, vec![-1.0, -0.5, 0.0, 0.5, -1.0]);
    }

    #[test]
    fn parse_recipe() {
        let r: Recipe = "trend=1,0.01; sin=24:1:0 ;saw=7:0.5;noise=0.01".parse().unwrap();
        assert_eq!(r.trend, vec![1.0, 0.01]);
        assert_eq!(r.terms.len(), 2);
        assert_eq!(r.terms[1].waveform, Waveform::Sawtooth);
        assert_eq!(r.noise_sigma, 0.01);
        assert!("sin=24".parse::<Recipe>().is_err());
        assert!("wobble=3".parse::<Recipe>().is_err());
        assert!("noise=-1".parse::<Recipe>().is_err());
    }

    #[test]
    fn zero_length_rejected() {
        assert!(synth(&Recipe::default(), 0, 0).is_err());
    }
}
