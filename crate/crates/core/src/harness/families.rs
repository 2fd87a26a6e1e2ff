//! Named initial-data and source families.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::potentials::PotentialKind;
use crate::source::{time_averages, TimeSource, AVERAGE_POINTS};

fn default_tanh_amplitude() -> f64 {
    0.9
}

fn default_random_amplitude() -> f64 {
    0.5
}

fn default_frequency() -> f64 {
    1.0
}

/// One scalar initial field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialFamily {
    Constant { value: f64 },
    /// `amplitude * prod_d cos(mode pi x_d / L_d)`.
    CosineBump { amplitude: f64, mode: usize },
    /// `amplitude * tanh((x - center) / width)` along the first axis.
    TanhInterface {
        center: f64,
        width: f64,
        #[serde(default = "default_tanh_amplitude")]
        amplitude: f64,
    },
    /// Random cosine series with modes up to `cutoff` per axis and
    /// coefficients damped by `1 / (1 + |k|^2)`, rescaled to `max |u| = amplitude`.
    RandomSmooth {
        seed: u64,
        cutoff: usize,
        #[serde(default = "default_random_amplitude")]
        amplitude: f64,
    },
}

impl InitialFamily {
    pub fn validate(&self, field: &str) -> Result<()> {
        let bad = |what: &str, reason: &str| Err(Error::param(format!("{field}.{what}"), reason));
        match *self {
            InitialFamily::Constant { value } if !value.is_finite() => bad("value", "must be finite"),
            InitialFamily::CosineBump { amplitude, .. } if !amplitude.is_finite() => bad("amplitude", "must be finite"),
            InitialFamily::TanhInterface { width, .. } if !(width > 0.0 && width.is_finite()) => {
                bad("width", "must be positive")
            }
            InitialFamily::TanhInterface { center, amplitude, .. } if !(center.is_finite() && amplitude.is_finite()) => {
                bad("center", "center and amplitude must be finite")
            }
            InitialFamily::RandomSmooth { amplitude, .. } if !amplitude.is_finite() => bad("amplitude", "must be finite"),
            _ => Ok(()),
        }
    }

    pub fn build(&self, grid: &Arc<Grid<f64>>) -> Field<f64> {
        let ext = grid.extents().to_vec();
        let dim = grid.dim();
        match *self {
            InitialFamily::Constant { value } => Field::constant(grid, value),
            InitialFamily::CosineBump { amplitude, mode } => Field::from_fn(grid, |x| {
                (0..dim).map(|d| (mode as f64 * PI * x[d] / ext[d]).cos()).product::<f64>() * amplitude
            }),
            InitialFamily::TanhInterface { center, width, amplitude } => {
                Field::from_fn(grid, |x| amplitude * ((x[0] - center) / width).tanh())
            }
            InitialFamily::RandomSmooth { seed, cutoff, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let ky_max = if dim == 2 { cutoff } else { 0 };
                let mut modes = Vec::new();
                for ky in 0..=ky_max {
                    for kx in 0..=cutoff {
                        let c: f64 = rng.gen_range(-1.0..=1.0);
                        modes.push((kx, ky, c / (1.0 + (kx * kx + ky * ky) as f64)));
                    }
                }
                let raw = Field::from_fn(grid, |x| {
                    modes
                        .iter()
                        .map(|&(kx, ky, c)| {
                            let cy = if dim == 2 { (ky as f64 * PI * x[1] / ext[1]).cos() } else { 1.0 };
                            c * (kx as f64 * PI * x[0] / ext[0]).cos() * cy
                        })
                        .sum()
                });
                let m = raw.max_abs();
                if m > 0.0 {
                    raw.scaled(amplitude / m)
                } else {
                    raw
                }
            }
        }
    }
}

/// Time regularity of a source.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeRegularity {
    L2Only,
    /// `W^{1,1}` in time; a time derivative is available.
    W11,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManufacturedProblem {
    /// `theta = phi = exp(-t) cos(pi x / L)` for the regular potential.
    RegularCosine,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    #[default]
    Zero,
    /// `sin(frequency t) * sum_j amplitudes[j] cos(j pi x / L)`.
    SeparableSinusoid {
        amplitudes: Vec<f64>,
        #[serde(default = "default_frequency")]
        frequency: f64,
    },
    /// `value` for `t < switch_time`, zero afterwards.
    SwitchedConstant { value: f64, switch_time: f64 },
    /// Residual of a known smooth solution; also forces the phase equation.
    ManufacturedResidual { problem: ManufacturedProblem },
}

impl SourceSpec {
    pub fn is_zero(&self) -> bool {
        matches!(self, SourceSpec::Zero)
    }

    pub fn is_manufactured(&self) -> bool {
        matches!(self, SourceSpec::ManufacturedResidual { .. })
    }

    pub fn regularity(&self) -> TimeRegularity {
        match self {
            SourceSpec::SwitchedConstant { .. } => TimeRegularity::L2Only,
            _ => TimeRegularity::W11,
        }
    }

    pub fn validate(&self, potential: &PotentialKind, _dim: usize) -> Result<()> {
        match self {
            SourceSpec::SeparableSinusoid { amplitudes, frequency } => {
                if amplitudes.is_empty() || amplitudes.iter().any(|a| !a.is_finite()) {
                    return Err(Error::param("source.amplitudes", "must be a non-empty list of finite numbers"));
                }
                if !frequency.is_finite() {
                    return Err(Error::param("source.frequency", "must be finite"));
                }
            }
            SourceSpec::SwitchedConstant { value, switch_time } => {
                if !value.is_finite() || !(*switch_time > 0.0) {
                    return Err(Error::param("source.switch_time", "needs a finite value and a positive switch time"));
                }
            }
            SourceSpec::ManufacturedResidual { .. } => {
                if !matches!(potential, PotentialKind::Regular) {
                    return Err(Error::param("source.problem", "the manufactured problem is defined for the regular potential"));
                }
            }
            SourceSpec::Zero => {}
        }
        Ok(())
    }

    /// Binds the latent-heat coefficient, which manufactured residuals depend on.
    pub fn bind(&self, ell: f64) -> BoundSource {
        BoundSource { spec: self.clone(), ell }
    }

    /// Exact `(theta, phi)` of a manufactured problem at time `t`.
    pub fn exact(&self, t: f64, grid: &Arc<Grid<f64>>) -> Option<(Field<f64>, Field<f64>)> {
        match self {
            SourceSpec::ManufacturedResidual { problem: ManufacturedProblem::RegularCosine } => {
                let k = PI / grid.extents()[0];
                let u = Field::from_fn(grid, |x| (-t).exp() * (k * x[0]).cos());
                Some((u.clone(), u))
            }
            _ => None,
        }
    }

    pub(crate) fn exact_initial(&self, grid: &Arc<Grid<f64>>, _ell: f64) -> Option<(Field<f64>, Field<f64>)> {
        self.exact(0.0, grid)
    }
}

/// A [`SourceSpec`] with the coefficient `ell` fixed.
#[derive(Clone, Debug)]
pub struct BoundSource {
    spec: SourceSpec,
    ell: f64,
}

fn cosine_series(amplitudes: &[f64], grid: &Arc<Grid<f64>>) -> Field<f64> {
    let l = grid.extents()[0];
    Field::from_fn(grid, |x| {
        amplitudes.iter().enumerate().map(|(j, a)| a * (j as f64 * PI * x[0] / l).cos()).sum()
    })
}

impl TimeSource<f64> for BoundSource {
    fn eval(&self, t: f64, grid: &Arc<Grid<f64>>) -> Field<f64> {
        match &self.spec {
            SourceSpec::Zero => Field::zeros(grid),
            SourceSpec::SeparableSinusoid { amplitudes, frequency } => {
                cosine_series(amplitudes, grid).scaled((frequency * t).sin())
            }
            SourceSpec::SwitchedConstant { value, switch_time } => {
                Field::constant(grid, if t < *switch_time { *value } else { 0.0 })
            }
            SourceSpec::ManufacturedResidual { problem: ManufacturedProblem::RegularCosine } => {
                let k = PI / grid.extents()[0];
                let c = (k * k - 1.0 - self.ell) * (-t).exp();
                Field::from_fn(grid, |x| c * (k * x[0]).cos())
            }
        }
    }

    fn eval_dt(&self, t: f64, grid: &Arc<Grid<f64>>) -> Option<Field<f64>> {
        match &self.spec {
            SourceSpec::Zero => Some(Field::zeros(grid)),
            SourceSpec::SeparableSinusoid { amplitudes, frequency } => {
                Some(cosine_series(amplitudes, grid).scaled(frequency * (frequency * t).cos()))
            }
            SourceSpec::SwitchedConstant { .. } => None,
            SourceSpec::ManufacturedResidual { .. } => Some(self.eval(t, grid).scaled(-1.0)),
        }
    }

    fn eval_phase(&self, t: f64, grid: &Arc<Grid<f64>>) -> Option<Field<f64>> {
        match &self.spec {
            SourceSpec::ManufacturedResidual { problem: ManufacturedProblem::RegularCosine } => {
                let k = PI / grid.extents()[0];
                let e = (-t).exp();
                let a = (k * k - 2.0 - self.ell) * e;
                Some(Field::from_fn(grid, |x| {
                    let c = (k * x[0]).cos();
                    a * c + (e * c).powi(3)
                }))
            }
            _ => None,
        }
    }

    fn is_zero(&self) -> bool {
        self.spec.is_zero()
    }
}

/// `f_1, ..., f_N`: step averages of the heat source by 5-point Gauss–Legendre.
pub fn average_source(src: &SourceSpec, ell: f64, grid: &Arc<Grid<f64>>, t_final: f64, n_steps: usize) -> Vec<Field<f64>> {
    time_averages(&src.bind(ell), grid, t_final, n_steps, AVERAGE_POINTS)
}
