//! Run configuration: defaults, `key=value` files and command-line overrides.

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use stochan_core::signals::FluxKind;
use stochan_core::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum KindName {
    Ramp,
    Sinusoid,
    SmoothedBrownian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum GeometryName {
    Straight,
    TwoOutlet,
}

/// Every tunable of the pipeline. Keys of the `key=value` format are the field names,
/// with `T`, `Kx`, `My` and `L` spelled as in the equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub kind: KindName,
    pub slope: f64,
    pub amplitude: f64,
    pub omega: f64,
    pub sigma: f64,
    pub width: f64,
    pub nu: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
    pub n_trunc: usize,
    /// Number of `y` intervals of the stored outlet-profile table.
    pub ny: usize,
    /// Outlet profile sampled at `dt / field_refine`.
    pub field_refine: usize,
    pub geometry: GeometryName,
    pub junction_start: f64,
    pub junction_end: f64,
    pub offset: f64,
    pub epsilon0: Option<f64>,
    #[serde(rename = "Kx")]
    pub kx: usize,
    #[serde(rename = "My")]
    pub my: usize,
    #[serde(rename = "L")]
    pub length: f64,
    pub sigma0: f64,
    pub noise_modes: usize,
    pub delta: f64,
    pub seed: u64,
    pub paths: usize,
    pub samples: usize,
    pub ball: f64,
    pub epsilon: f64,
}

/// `σ₀` giving `∫₀¹ Tr(g*g) e^{−t} dt = 0.1` for `σ_k = σ₀ k^{-3/2}`, `k ≤ 8`.
pub fn default_sigma0() -> f64 {
    let sum: f64 = (1..=8).map(|k| (k as f64).powi(-3)).sum();
    (0.1 / (sum * (1.0 - (-1.0f64).exp()))).sqrt()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kind: KindName::Ramp,
            slope: 1.0,
            amplitude: 1.0,
            omega: 2.0 * std::f64::consts::PI,
            sigma: 1.0,
            width: 0.05,
            nu: 1.0,
            t_end: 1.0,
            dt: 1e-3,
            n_trunc: 64,
            ny: 100,
            field_refine: 1,
            geometry: GeometryName::Straight,
            junction_start: 1.5,
            junction_end: 2.5,
            offset: 0.5,
            epsilon0: None,
            kx: 8,
            my: 8,
            length: 2.0,
            sigma0: default_sigma0(),
            noise_modes: 8,
            delta: 1.0,
            seed: 0,
            paths: 64,
            samples: 1000,
            ball: 1.0,
            epsilon: 1e-6,
        }
    }
}

fn bad(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value {value:?} for key {key}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, Error> {
    value.parse().map_err(|_| bad(key, value))
}

/// Parses `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, Error> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Error> {
        match key {
            "kind" => self.kind = KindName::from_str(value, true).map_err(|_| bad(key, value))?,
            "slope" => self.slope = num(key, value)?,
            "amplitude" => self.amplitude = num(key, value)?,
            "omega" => self.omega = num(key, value)?,
            "sigma" => self.sigma = num(key, value)?,
            "width" => self.width = num(key, value)?,
            "nu" => self.nu = num(key, value)?,
            "T" => self.t_end = num(key, value)?,
            "dt" => self.dt = num(key, value)?,
            "n_trunc" => self.n_trunc = num(key, value)?,
            "ny" => self.ny = num(key, value)?,
            "field_refine" => self.field_refine = num(key, value)?,
            "geometry" => {
                self.geometry = GeometryName::from_str(value, true).map_err(|_| bad(key, value))?
            }
            "junction_start" => self.junction_start = num(key, value)?,
            "junction_end" => self.junction_end = num(key, value)?,
            "offset" => self.offset = num(key, value)?,
            "epsilon0" => self.epsilon0 = Some(num(key, value)?),
            "Kx" => self.kx = num(key, value)?,
            "My" => self.my = num(key, value)?,
            "L" => self.length = num(key, value)?,
            "sigma0" => self.sigma0 = num(key, value)?,
            "noise_modes" => self.noise_modes = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "paths" => self.paths = num(key, value)?,
            "samples" => self.samples = num(key, value)?,
            "ball" => self.ball = num(key, value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    pub fn flux_kind(&self) -> FluxKind {
        match self.kind {
            KindName::Ramp => FluxKind::Ramp { slope: self.slope },
            KindName::Sinusoid => FluxKind::Sinusoid {
                amplitude: self.amplitude,
                omega: self.omega,
            },
            KindName::SmoothedBrownian => FluxKind::SmoothedBrownian {
                sigma: self.sigma,
                width: self.width,
            },
        }
    }
}

/// Command-line overrides; each flag matches its configuration key.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long, value_enum)]
    pub kind: Option<KindName>,
    #[arg(long)]
    pub slope: Option<f64>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    /// Horizon.
    #[arg(long = "T")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub n_trunc: Option<usize>,
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long)]
    pub field_refine: Option<usize>,
    #[arg(long, value_enum)]
    pub geometry: Option<GeometryName>,
    #[arg(long)]
    pub junction_start: Option<f64>,
    #[arg(long)]
    pub junction_end: Option<f64>,
    #[arg(long)]
    pub offset: Option<f64>,
    #[arg(long)]
    pub epsilon0: Option<f64>,
    #[arg(long = "Kx")]
    pub kx: Option<usize>,
    #[arg(long = "My")]
    pub my: Option<usize>,
    /// Period of the simulation channel.
    #[arg(long = "L")]
    pub length: Option<f64>,
    #[arg(long)]
    pub sigma0: Option<f64>,
    #[arg(long)]
    pub noise_modes: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// `L⁴` ball radius for the monotonicity check.
    #[arg(long)]
    pub ball: Option<f64>,
    /// Initial gap for the uniqueness check.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

impl Overrides {
    pub fn apply(&self, c: &mut RunConfig) {
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        take!(
            kind, slope, amplitude, omega, sigma, width, nu, t_end, dt, n_trunc, ny, field_refine,
            geometry, junction_start, junction_end, offset, kx, my, length, sigma0, noise_modes,
            delta, paths, samples, ball, epsilon
        );
        if self.epsilon0.is_some() {
            c.epsilon0 = self.epsilon0;
        }
    }
}
