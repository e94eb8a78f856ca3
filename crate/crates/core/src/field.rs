//! Regular-grid piecewise-linear scalar fields.

use std::cmp::Ordering;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// A scalar value per vertex of a 1D, 2D or 3D regular grid.
///
/// Values are stored with axis 0 varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    dims: Vec<usize>,
    values: Vec<f64>,
    spacing: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FieldJson {
    dims: Vec<usize>,
    values: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spacing: Option<Vec<f64>>,
}

impl ScalarField {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let spacing = vec![1.0; dims.len()];
        Self::with_spacing(dims, values, spacing)
    }

    pub fn with_spacing(dims: Vec<usize>, values: Vec<f64>, spacing: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(Error::InvalidParameter(format!(
                "grids have 1 to 3 axes, got {}",
                dims.len()
            )));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidParameter(format!(
                "grid extent {d} is smaller than 2"
            )));
        }
        if spacing.len() != dims.len() || spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidParameter(
                "spacing needs one positive entry per axis".into(),
            ));
        }
        let expected: usize = dims.iter().product();
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue(i));
        }
        Ok(ScalarField {
            dims,
            values,
            spacing,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, v: usize) -> f64 {
        self.values[v]
    }

    /// Difference between the largest and smallest value.
    pub fn range(&self) -> f64 {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        hi - lo
    }

    /// Simulation of simplicity: order by value, then by vertex index.
    pub fn compare(&self, a: usize, b: usize) -> Ordering {
        self.values[a]
            .total_cmp(&self.values[b])
            .then_with(|| a.cmp(&b))
    }

    /// Vertices sorted ascending under [`ScalarField::compare`].
    pub fn sorted_vertices(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.compare(a, b));
        order
    }

    pub fn coords(&self, v: usize) -> [usize; 3] {
        let mut c = [0usize; 3];
        let mut rest = v;
        for (axis, &d) in self.dims.iter().enumerate() {
            c[axis] = rest % d;
            rest /= d;
        }
        c
    }

    pub fn index(&self, c: [usize; 3]) -> usize {
        let mut idx = 0;
        for axis in (0..self.dims.len()).rev() {
            idx = idx * self.dims[axis] + c[axis];
        }
        idx
    }

    /// Neighbors under the Freudenthal triangulation of the grid.
    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        let d = self.dims.len();
        let c = self.coords(v);
        let mut out = Vec::with_capacity(14);
        for mask in 1u32..(1 << d) {
            for sign in [1i64, -1] {
                let mut n = [0usize; 3];
                let mut inside = true;
                for axis in 0..d {
                    let step = if mask & (1 << axis) != 0 { sign } else { 0 };
                    let x = c[axis] as i64 + step;
                    if x < 0 || x >= self.dims[axis] as i64 {
                        inside = false;
                        break;
                    }
                    n[axis] = x as usize;
                }
                if inside {
                    out.push(self.index(n));
                }
            }
        }
        out
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: FieldJson = serde_json::from_str(text)?;
        let mut values = Vec::with_capacity(raw.values.len());
        for (i, v) in raw.values.iter().enumerate() {
            let x = match v {
                Value::Number(n) => n
                    .as_f64()
                    .ok_or_else(|| Error::Parse(format!("value {i} is not a number")))?,
                Value::String(s) => s
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("value {i} is not a number: {s:?}")))?,
                _ => return Err(Error::Parse(format!("value {i} is not a number"))),
            };
            values.push(x);
        }
        let spacing = raw.spacing.unwrap_or_else(|| vec![1.0; raw.dims.len()]);
        ScalarField::with_spacing(raw.dims, values, spacing)
    }

    pub fn to_json_string(&self) -> String {
        let raw = FieldJson {
            dims: self.dims.clone(),
            values: self.values.iter().map(|&v| Value::from(v)).collect(),
            spacing: Some(self.spacing.clone()),
        };
        serde_json::to_string(&raw).expect("field serialization")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

pub fn load_field(path: impl AsRef<Path>) -> Result<ScalarField> {
    let text = std::fs::read_to_string(path)?;
    ScalarField::from_json_str(&text)
}

/// One isotropic Gaussian bump, positioned in grid index coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub center: Vec<f64>,
    pub amplitude: f64,
    pub width: f64,
}

impl GaussianBump {
    pub fn new(center: Vec<f64>, amplitude: f64, width: f64) -> Self {
        GaussianBump {
            center,
            amplitude,
            width,
        }
    }
}

/// Sum of Gaussian bumps sampled on the grid.
pub fn synth_gaussian_mixture(dims: &[usize], bumps: &[GaussianBump]) -> Result<ScalarField> {
    for b in bumps {
        if !(b.width > 0.0) || !(b.amplitude > 0.0) {
            return Err(Error::InvalidParameter(
                "bump width and amplitude must be positive".into(),
            ));
        }
        if b.center.len() != dims.len() {
            return Err(Error::InvalidParameter(format!(
                "bump center has {} coordinates for a {}-axis grid",
                b.center.len(),
                dims.len()
            )));
        }
    }
    let n: usize = dims.iter().product();
    let grid = ScalarField::new(dims.to_vec(), vec![0.0; n])?;
    let values = (0..n)
        .map(|v| {
            let c = grid.coords(v);
            bumps
                .iter()
                .map(|b| {
                    let r2: f64 = b
                        .center
                        .iter()
                        .enumerate()
                        .map(|(axis, &x)| (c[axis] as f64 - x).powi(2))
                        .sum();
                    b.amplitude * (-r2 / (2.0 * b.width * b.width)).exp()
                })
                .sum()
        })
        .collect();
    ScalarField::new(dims.to_vec(), values)
}

/// Bumps with centers, amplitudes and widths drawn from `seed`.
pub fn random_bumps(dims: &[usize], count: usize, seed: u64) -> Vec<GaussianBump> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = dims.iter().copied().min().unwrap_or(2) as f64;
    (0..count)
        .map(|_| {
            let center = dims
                .iter()
                .map(|&d| rng.gen_range(0.0..(d - 1) as f64))
                .collect();
            GaussianBump::new(
                center,
                rng.gen_range(0.5..1.5),
                rng.gen_range(0.05..0.15) * scale,
            )
        })
        .collect()
}

/// Adds i.i.d. uniform noise on `[-amplitude, amplitude]` to every vertex.
pub fn add_uniform_noise(field: &ScalarField, amplitude: f64, seed: u64) -> Result<ScalarField> {
    if !(amplitude >= 0.0) || !amplitude.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise amplitude must be non-negative, got {amplitude}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = field
        .values
        .iter()
        .map(|&v| {
            if amplitude == 0.0 {
                v
            } else {
                v + rng.gen_range(-amplitude..=amplitude)
            }
        })
        .collect();
    ScalarField::with_spacing(field.dims.clone(), values, field.spacing.clone())
}
