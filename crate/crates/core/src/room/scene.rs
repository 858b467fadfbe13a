use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{dist, ArrayGeometry};
use super::rir::{RoomSpec, DEFAULT_SPEED_OF_SOUND};
use crate::error::{Error, Result};

const MAX_ATTEMPTS: usize = 10_000;

/// Sampling ranges for [`sample_scene`]. Defaults follow the simulation
/// recipe: rooms from 4×4×2.5 to 10×8×6 m, T60 in 0.05–0.7 s, talkers
/// 1–5 m from the array, SIR drawn from {−6, 0, 6} dB and overlap ratio in
/// 0.6–1.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneRanges {
    pub room_min: [f64; 3],
    pub room_max: [f64; 3],
    pub t60: [f64; 2],
    pub distance: [f64; 2],
    pub sir_db_choices: Vec<f64>,
    pub overlap_ratio: [f64; 2],
    /// Minimum clearance between any wall and a talker or microphone.
    pub wall_margin: f64,
    pub array_height: [f64; 2],
    pub speed_of_sound: f64,
}

impl Default for SceneRanges {
    fn default() -> Self {
        Self {
            room_min: [4.0, 4.0, 2.5],
            room_max: [10.0, 8.0, 6.0],
            t60: [0.05, 0.7],
            distance: [1.0, 5.0],
            sir_db_choices: vec![-6.0, 0.0, 6.0],
            overlap_ratio: [0.6, 1.0],
            wall_margin: 0.5,
            array_height: [1.0, 1.5],
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
        }
    }
}

fn ordered(name: &str, lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Config(format!("{name}: invalid range [{lo}, {hi}]")));
    }
    Ok(())
}

impl SceneRanges {
    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            ordered("room dimensions", self.room_min[i], self.room_max[i])?;
            if self.room_min[i] <= 2.0 * self.wall_margin {
                return Err(Error::Config(format!(
                    "room dimension {i} minimum {} leaves no space inside the wall margin",
                    self.room_min[i]
                )));
            }
        }
        ordered("t60", self.t60[0], self.t60[1])?;
        if self.t60[0] <= 0.0 {
            return Err(Error::Config("t60 must be positive".into()));
        }
        ordered("distance", self.distance[0], self.distance[1])?;
        if self.distance[0] <= 0.0 {
            return Err(Error::Config("talker distance must be positive".into()));
        }
        ordered("overlap ratio", self.overlap_ratio[0], self.overlap_ratio[1])?;
        if self.overlap_ratio[0] < 0.0 || self.overlap_ratio[1] > 1.0 {
            return Err(Error::Config("overlap ratio must lie in [0, 1]".into()));
        }
        ordered("array height", self.array_height[0], self.array_height[1])?;
        if self.sir_db_choices.is_empty() || self.sir_db_choices.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("SIR choices must be a non-empty list of finite values".into()));
        }
        if !(self.wall_margin >= 0.0) || !(self.speed_of_sound > 0.0) {
            return Err(Error::Config("wall margin and speed of sound must be positive".into()));
        }
        Ok(())
    }
}

/// One randomised two-talker recording setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub room: RoomSpec,
    pub array_center: [f64; 3],
    /// Rotation of the array axis about the vertical, radians.
    pub array_orientation: f64,
    pub target_position: [f64; 3],
    pub interferer_position: [f64; 3],
    pub target_doa_deg: f64,
    pub interferer_doa_deg: f64,
    pub sir_db: f64,
    pub overlap_ratio: f64,
    /// Whether the interfering utterance starts before the target.
    pub interferer_first: bool,
    pub seed: u64,
}

impl SceneSpec {
    pub fn target_distance(&self) -> f64 {
        dist(&self.target_position, &self.array_center)
    }

    pub fn interferer_distance(&self) -> f64 {
        dist(&self.interferer_position, &self.array_center)
    }
}

fn inside_with_margin(p: &[f64; 3], dims: &[f64; 3], margin: f64) -> bool {
    p.iter().zip(dims).all(|(&v, &d)| v >= margin && v <= d - margin)
}

fn talker<R: Rng>(
    rng: &mut R,
    ranges: &SceneRanges,
    geometry: &ArrayGeometry,
    center: [f64; 3],
    orientation: f64,
    dims: &[f64; 3],
) -> Result<Option<([f64; 3], f64)>> {
    for _ in 0..64 {
        let d = rng.gen_range(ranges.distance[0]..=ranges.distance[1]);
        let doa = rng.gen_range(0.0..=180.0);
        let u = geometry.source_direction(doa, orientation)?;
        let p = [center[0] + d * u[0], center[1] + d * u[1], center[2] + d * u[2]];
        if inside_with_margin(&p, dims, ranges.wall_margin) {
            return Ok(Some((p, doa)));
        }
    }
    Ok(None)
}

/// Draws a scene deterministically from `seed`. Rooms whose T60 would need a
/// Sabine absorption above 1, and placements that do not fit inside the wall
/// margin, are rejected and redrawn.
pub fn sample_scene(seed: u64, ranges: &SceneRanges, geometry: &ArrayGeometry) -> Result<SceneSpec> {
    ranges.validate()?;
    geometry.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half_aperture = geometry.aperture() / 2.0;

    for _ in 0..MAX_ATTEMPTS {
        let mut dims = [0.0; 3];
        for (i, d) in dims.iter_mut().enumerate() {
            *d = rng.gen_range(ranges.room_min[i]..=ranges.room_max[i]);
        }
        let room = RoomSpec {
            dimensions: dims,
            t60: rng.gen_range(ranges.t60[0]..=ranges.t60[1]),
            speed_of_sound: ranges.speed_of_sound,
        };
        if room.sabine_absorption().is_err() {
            continue;
        }

        let reach = ranges.wall_margin + half_aperture;
        if dims[0] <= 2.0 * reach || dims[1] <= 2.0 * reach {
            continue;
        }
        let z_hi = ranges.array_height[1].min(dims[2] - ranges.wall_margin);
        let z_lo = ranges.array_height[0].max(ranges.wall_margin);
        if z_lo > z_hi {
            continue;
        }
        let center = [
            rng.gen_range(reach..=dims[0] - reach),
            rng.gen_range(reach..=dims[1] - reach),
            rng.gen_range(z_lo..=z_hi),
        ];
        let orientation = rng.gen_range(0.0..std::f64::consts::TAU);

        let Some((target_position, target_doa_deg)) =
            talker(&mut rng, ranges, geometry, center, orientation, &dims)?
        else {
            continue;
        };
        let Some((interferer_position, interferer_doa_deg)) =
            talker(&mut rng, ranges, geometry, center, orientation, &dims)?
        else {
            continue;
        };

        let sir_db = *ranges.sir_db_choices.choose(&mut rng).expect("validated non-empty");
        let overlap_ratio = rng.gen_range(ranges.overlap_ratio[0]..=ranges.overlap_ratio[1]);
        let interferer_first = rng.gen_bool(0.5);

        return Ok(SceneSpec {
            room,
            array_center: center,
            array_orientation: orientation,
            target_position,
            interferer_position,
            target_doa_deg,
            interferer_doa_deg,
            sir_db,
            overlap_ratio,
            interferer_first,
            seed,
        });
    }
    Err(Error::Config(format!(
        "no feasible scene found in {MAX_ATTEMPTS} attempts; widen the sampling ranges"
    )))
}
