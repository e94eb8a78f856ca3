//! Distance to noisy copies of a field as the noise amplitude grows.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{add_uniform_noise, ScalarField};
use crate::metric::{mt_distance_with, Executor, Solver};
use crate::preprocess::MetricParams;
use crate::synth::field_bdt;
use crate::tree::TreeKind;

#[derive(Debug, Clone)]
pub struct StabilityConfig {
    pub field: ScalarField,
    pub kind: TreeKind,
    pub simplify: f64,
    /// Noise amplitudes as fractions of the field range.
    pub noise_levels: Vec<f64>,
    pub eps1_values: Vec<f64>,
    /// eps2, eps3 and normalization; eps1 is overridden per curve.
    pub params: MetricParams,
    pub solver: Solver,
    pub seed: u64,
    /// Largest noise level used by the linear fit.
    pub fit_limit: f64,
    /// Relative deviation from the fit that marks a transition.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityCurve {
    pub eps1: f64,
    pub noise: Vec<f64>,
    pub distance: Vec<f64>,
    /// Least-squares slope through the origin over `noise <= fit_limit`.
    pub slope: f64,
    /// `|d - slope·ε| / (slope·ε)` per level.
    pub deviation: Vec<f64>,
    /// First level whose deviation exceeds the tolerance.
    pub transition: Option<f64>,
}

impl StabilityCurve {
    /// Largest deviation over levels up to `limit`.
    pub fn max_deviation_until(&self, limit: f64) -> f64 {
        self.noise
            .iter()
            .zip(&self.deviation)
            .filter(|(e, _)| **e <= limit + 1e-12)
            .map(|(_, d)| *d)
            .fold(0.0, f64::max)
    }
}

/// 0.01, 0.02, ..., 0.30.
pub fn standard_noise_levels() -> Vec<f64> {
    (1..=30).map(|i| i as f64 / 100.0).collect()
}

/// One-dimensional profile with a small peak between two larger ones whose
/// two flanking saddles tie, so that the small peak hangs either from its
/// left or its right neighbour. A shoulder next to the global maximum gives
/// a wide gap between adjacent saddles, and every step between neighbours is
/// at least a quarter of the range so that noise below 10% creates no new
/// extrema.
pub fn standard_field() -> ScalarField {
    let values = vec![
        0.0, 3.0, 8.0, 5.0, 10.0, 7.0, 4.0, 1.5, 4.5, 7.0, 4.5, 1.5, 4.5, 9.0, 6.0, 3.0, 0.0,
    ];
    ScalarField::new(vec![values.len()], values).expect("fixed profile")
}

impl StabilityConfig {
    pub fn standard(seed: u64) -> Self {
        StabilityConfig {
            field: standard_field(),
            kind: TreeKind::Split,
            simplify: 0.0025,
            noise_levels: standard_noise_levels(),
            eps1_values: vec![0.0, 0.05, 0.1, 0.15, 1.0],
            params: MetricParams::default(),
            solver: Solver::Exact,
            seed,
            fit_limit: 0.10,
            tolerance: 0.10,
        }
    }
}

pub fn linear_fit(noise: &[f64], distance: &[f64], limit: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (&e, &d) in noise.iter().zip(distance) {
        if e <= limit + 1e-12 {
            num += e * d;
            den += e * e;
        }
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn stability_sweep(config: &StabilityConfig, exec: &Executor) -> Result<Vec<StabilityCurve>> {
    if config.noise_levels.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidParameter("noise levels must be positive".into()));
    }
    let clean = field_bdt(&config.field, config.kind, config.simplify)?;
    let range = config.field.range();
    let noisy = config
        .noise_levels
        .iter()
        .map(|&e| {
            let f = add_uniform_noise(&config.field, e * range, config.seed)?;
            field_bdt(&f, config.kind, config.simplify)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut curves = Vec::new();
    for &eps1 in &config.eps1_values {
        let params = MetricParams { eps1, ..config.params };
        params.validate()?;
        let distance = noisy
            .iter()
            .map(|t| mt_distance_with(&clean, t, &params, config.solver, exec).map(|m| m.distance))
            .collect::<Result<Vec<_>>>()?;
        let slope = linear_fit(&config.noise_levels, &distance, config.fit_limit);
        let deviation: Vec<f64> = config
            .noise_levels
            .iter()
            .zip(&distance)
            .map(|(&e, &d)| {
                let fit = slope * e;
                if fit > 0.0 {
                    (d - fit).abs() / fit
                } else if d == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let transition = config
            .noise_levels
            .iter()
            .zip(&deviation)
            .find(|(_, &d)| d > config.tolerance)
            .map(|(&e, _)| e);
        curves.push(StabilityCurve {
            eps1,
            noise: config.noise_levels.clone(),
            distance,
            slope,
            deviation,
            transition,
        });
    }
    Ok(curves)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_through_origin() {
        let e = [0.1, 0.2, 0.3];
        assert!((linear_fit(&e, &[0.2, 0.4, 0.6], 0.3) - 2.0).abs() < 1e-12);
        assert!((linear_fit(&e, &[0.2, 0.4, 9.0], 0.2) - 2.0).abs() < 1e-12);
        assert_eq!(linear_fit(&e, &[1.0, 1.0, 1.0], 0.0), 0.0);
    }

    #[test]
    fn small_sweep() {
        let mut c = StabilityConfig::standard(0);
        c.noise_levels = vec![0.01, 0.02, 0.04];
        c.eps1_values = vec![0.0, 0.05];
        let curves = stability_sweep(&c, &Executor::sequential()).unwrap();
        assert_eq!(curves.len(), 2);
        assert!(curves[1].max_deviation_until(0.10) <= 0.10);
        assert!(curves[0].distance[0] > curves[1].distance[0]);
        assert!(curves[0].max_deviation_until(0.05) > 0.10);
        c.noise_levels = vec![0.0];
        assert!(stability_sweep(&c, &Executor::sequential()).is_err());
    }
}
