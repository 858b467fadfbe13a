//! Room acoustics and mixture simulation.

mod geometry;
mod mixture;
mod rir;
mod scene;
pub mod voice;

use serde::{Deserialize, Serialize};

pub use geometry::{ArrayGeometry, DEFAULT_HALF_GAPS_CM};
pub use mixture::{convolve_many, synthesize_mixture, MixtureBundle};
pub use rir::{
    schroeder_t60, simulate_rir, simulate_rirs, ImpulseResponse, RoomSpec,
    DEFAULT_SPEED_OF_SOUND, FRACTIONAL_DELAY_HALF_WIDTH, MAX_ORDER_CAP,
};
pub use scene::{sample_scene, SceneRanges, SceneSpec};

/// Room used for the replayed-recording direction presets, metres.
pub const REPLAY_ROOM_DIMENSIONS: [f64; 3] = [10.0, 5.0, 3.0];

/// Target/interferer direction pair of a replayed-recording setup, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayPreset {
    pub target_doa_deg: f64,
    pub interferer_doa_deg: f64,
}

pub fn replay_presets() -> Vec<ReplayPreset> {
    [
        (15.0, 30.0),
        (45.0, 30.0),
        (75.0, 30.0),
        (105.0, 30.0),
        (30.0, 60.0),
        (90.0, 60.0),
        (120.0, 60.0),
        (150.0, 60.0),
    ]
    .into_iter()
    .map(|(t, i)| ReplayPreset {
        target_doa_deg: t,
        interferer_doa_deg: i,
    })
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_preset_file_matches() {
        let text = include_str!("../../../../docs/replay_presets.json");
        let file: serde_json::Value = serde_json::from_str(text).unwrap();
        let presets: Vec<ReplayPreset> =
            serde_json::from_value(file["presets"].clone()).unwrap();
        assert_eq!(presets, replay_presets());
        let dims: [f64; 3] = serde_json::from_value(file["room_dimensions"].clone()).unwrap();
        assert_eq!(dims, REPLAY_ROOM_DIMENSIONS);
    }
}
