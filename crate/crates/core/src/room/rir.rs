//! Shoebox room impulse responses by the image-source method.
//!
//! Every image is indexed by the signed number of wall reflections along each
//! axis; its amplitude is `β^(|nx|+|ny|+|nz|) / (4π d)` and it is rendered at
//! the exact fractional delay `d / c · fs` with a Hann-windowed sinc kernel.
//! All six walls share one reflection coefficient `β`.
//!
//! Sabine's formula gives the starting absorption `α` and decides whether a
//! T60 is feasible for the room at all. Image-source decays in a shoebox are
//! not diffuse, so `β = sqrt(1 − α)` alone misses the requested T60 by up to
//! a quarter in either direction; `β` is therefore refined by bisection until
//! the Schroeder T60 of a response between two fixed interior points matches
//! the request.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geometry::dist;
use crate::error::{Error, Result};

/// Half-width of the fractional delay kernel; the kernel has `2 * HALF + 1` taps.
pub const FRACTIONAL_DELAY_HALF_WIDTH: usize = 40;
pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;
pub const MAX_ORDER_CAP: usize = 30;

/// Source and receiver used to calibrate `β`, as fractions of the room dimensions.
const CALIBRATION_SOURCE: [f64; 3] = [0.31, 0.42, 0.47];
const CALIBRATION_RECEIVER: [f64; 3] = [0.68, 0.57, 0.53];
const CALIBRATION_STEPS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    pub dimensions: [f64; 3],
    pub t60: f64,
    #[serde(default = "default_c")]
    pub speed_of_sound: f64,
}

fn default_c() -> f64 {
    DEFAULT_SPEED_OF_SOUND
}

impl RoomSpec {
    pub fn new(dimensions: [f64; 3], t60: f64) -> Self {
        Self {
            dimensions,
            t60,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
        }
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dimensions;
        2.0 * (x * y + x * z + y * z)
    }

    /// Uniform wall absorption from Sabine's formula `T60 = 24 ln10 V / (c S α)`.
    pub fn sabine_absorption(&self) -> Result<f64> {
        if !(self.t60 > 0.0) {
            return Err(Error::Config(format!("T60 must be positive, got {}", self.t60)));
        }
        let alpha = 24.0 * std::f64::consts::LN_10 * self.volume()
            / (self.speed_of_sound * self.surface() * self.t60);
        if alpha > 1.0 {
            return Err(Error::InfeasibleT60 {
                t60: self.t60,
                absorption: alpha,
            });
        }
        Ok(alpha)
    }

    /// Reflection coefficient from Sabine's absorption alone.
    pub fn sabine_reflection_coefficient(&self) -> Result<f64> {
        Ok((1.0 - self.sabine_absorption()?).sqrt())
    }

    /// Wall reflection coefficient whose image-source response, at the given
    /// order and sample rate, has the requested Schroeder T60.
    pub fn reflection_coefficient(&self, max_order: usize, sample_rate: u32) -> Result<f64> {
        if max_order == 0 {
            return Ok(0.0);
        }
        let start = self.sabine_reflection_coefficient()?;
        let at = |f: [f64; 3]| -> [f64; 3] { std::array::from_fn(|i| f[i] * self.dimensions[i]) };
        let (source, mic) = (at(CALIBRATION_SOURCE), at(CALIBRATION_RECEIVER));
        let t60_of = |beta: f64| {
            let taps = render(&images(self, &source, &mic, max_order, beta, sample_rate));
            schroeder_t60(&taps, sample_rate).unwrap_or(0.0)
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut beta = start;
        for _ in 0..CALIBRATION_STEPS {
            if t60_of(beta) < self.t60 {
                lo = beta;
            } else {
                hi = beta;
            }
            beta = 0.5 * (lo + hi);
        }
        Ok(beta)
    }

    /// `ceil(T60 · c / min dimension)`, capped at [`MAX_ORDER_CAP`].
    pub fn default_max_order(&self) -> usize {
        let min_dim = self.dimensions.iter().cloned().fold(f64::INFINITY, f64::min);
        let order = (self.t60.max(0.0) * self.speed_of_sound / min_dim).ceil() as usize;
        order.min(MAX_ORDER_CAP)
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        p.iter()
            .zip(&self.dimensions)
            .all(|(&v, &d)| v > 0.0 && v < d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::Config(format!(
                "room dimensions must be positive, got {:?}",
                self.dimensions
            )));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(Error::Config("speed of sound must be positive".into()));
        }
        Ok(())
    }

    fn check_inside(&self, p: &[f64; 3]) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::OutsideRoom {
                position: *p,
                dimensions: self.dimensions,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
}

impl ImpulseResponse {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

/// Hann-windowed sinc evaluated at offset `x` from the kernel centre.
fn kernel(x: f64) -> f64 {
    let half = FRACTIONAL_DELAY_HALF_WIDTH as f64 + 1.0;
    if x.abs() >= half {
        return 0.0;
    }
    let window = 0.5 * (1.0 + (PI * x / half).cos());
    let sinc = if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    };
    window * sinc
}

/// Image position along one axis for signed reflection index `n`.
fn image_coordinate(n: i64, source: f64, length: f64) -> f64 {
    if n % 2 == 0 {
        n as f64 * length + source
    } else {
        (n + 1) as f64 * length - source
    }
}

/// `(delay in samples, amplitude)` for every image up to `max_order` reflections.
fn images(
    room: &RoomSpec,
    source: &[f64; 3],
    mic: &[f64; 3],
    max_order: usize,
    beta: f64,
    sample_rate: u32,
) -> Vec<(f64, f64)> {
    let n = max_order as i64;
    let fs = f64::from(sample_rate);
    let [lx, ly, lz] = room.dimensions;
    let mut out = Vec::new();
    for nx in -n..=n {
        let x = image_coordinate(nx, source[0], lx);
        let rest = n - nx.abs();
        for ny in -rest..=rest {
            let y = image_coordinate(ny, source[1], ly);
            let rest_z = rest - ny.abs();
            for nz in -rest_z..=rest_z {
                let z = image_coordinate(nz, source[2], lz);
                let d = dist(&[x, y, z], mic);
                let order = (nx.abs() + ny.abs() + nz.abs()) as i32;
                let amp = beta.powi(order) / (4.0 * PI * d);
                out.push((d / room.speed_of_sound * fs, amp));
            }
        }
    }
    out
}

fn render(images: &[(f64, f64)]) -> Vec<f64> {
    let hw = FRACTIONAL_DELAY_HALF_WIDTH as f64;
    let max_delay = images.iter().map(|&(t, _)| t).fold(0.0, f64::max);
    let len = (max_delay + hw).floor() as usize + 1;
    let mut taps = vec![0.0; len];
    for &(tau, amp) in images {
        let lo = (tau - hw).ceil().max(0.0) as usize;
        let hi = (tau + hw).floor() as usize;
        for (n, tap) in taps.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *tap += amp * kernel(n as f64 - tau);
        }
    }
    taps
}

/// Impulse response from `source` to `mic`. `max_order` defaults to
/// [`RoomSpec::default_max_order`].
pub fn simulate_rir(
    room: &RoomSpec,
    source: [f64; 3],
    mic: [f64; 3],
    max_order: Option<usize>,
    sample_rate: u32,
) -> Result<ImpulseResponse> {
    Ok(simulate_rirs(room, source, &[mic], max_order, sample_rate)?.remove(0))
}

/// Impulse responses from one source to several microphones, computed in
/// parallel with one shared reflection coefficient.
pub fn simulate_rirs(
    room: &RoomSpec,
    source: [f64; 3],
    mics: &[[f64; 3]],
    max_order: Option<usize>,
    sample_rate: u32,
) -> Result<Vec<ImpulseResponse>> {
    room.validate()?;
    room.check_inside(&source)?;
    for m in mics {
        room.check_inside(m)?;
    }
    let max_order = max_order.unwrap_or_else(|| room.default_max_order());
    let beta = room.reflection_coefficient(max_order, sample_rate)?;
    Ok(mics
        .par_iter()
        .map(|m| ImpulseResponse {
            taps: render(&images(room, &source, m, max_order, beta, sample_rate)),
            sample_rate,
        })
        .collect())
}

/// Reverberation time from Schroeder backward integration, extrapolated from
/// a least-squares line fitted to the energy decay curve between −5 and −25 dB.
pub fn schroeder_t60(taps: &[f64], sample_rate: u32) -> Option<f64> {
    let mut edc: Vec<f64> = taps.iter().map(|h| h * h).collect();
    for i in (0..edc.len().saturating_sub(1)).rev() {
        edc[i] += edc[i + 1];
    }
    let total = *edc.first()?;
    if total <= 0.0 {
        return None;
    }
    let fs = f64::from(sample_rate);
    let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (i, e) in edc.iter().enumerate() {
        let db = 10.0 * (e / total).log10();
        if db > -5.0 {
            continue;
        }
        if db < -25.0 {
            break;
        }
        let t = i as f64 / fs;
        sx += t;
        sy += db;
        sxx += t * t;
        sxy += t * db;
        n += 1.0;
    }
    if n < 2.0 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (slope < 0.0).then(|| -60.0 / slope)
}
