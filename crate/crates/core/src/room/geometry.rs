use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inter-microphone gaps in centimetres for one half of the default array,
/// from the outer end towards the centre microphone.
pub const DEFAULT_HALF_GAPS_CM: [f64; 7] = [8.0, 8.0, 8.0, 4.0, 4.0, 2.0, 2.0];

const COLLINEAR_TOLERANCE: f64 = 1e-9;

/// Microphone positions relative to the array centre.
///
/// The array axis runs from microphone 0 towards the last microphone. A
/// source at direction of arrival θ lies along `cos θ · (−axis) + sin θ · normal`,
/// so θ = 0° is endfire on the microphone-0 side and the wavefront reaches
/// microphone `i` later than the reference by `d_i cos θ / c`, where `d_i` is
/// the signed distance along the axis from the reference microphone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    pub mic_positions: Vec<[f64; 3]>,
    #[serde(default)]
    pub reference_index: usize,
}

impl Default for ArrayGeometry {
    /// 15 microphones with gaps 8,8,8,4,4,2,2 | 2,2,4,4,8,8,8 cm.
    fn default() -> Self {
        let mut gaps: Vec<f64> = DEFAULT_HALF_GAPS_CM.to_vec();
        gaps.extend(DEFAULT_HALF_GAPS_CM.iter().rev());
        Self::from_gaps_cm(&gaps, 0)
    }
}

impl ArrayGeometry {
    /// Linear array along x, centred at the origin.
    pub fn from_gaps_cm(gaps_cm: &[f64], reference_index: usize) -> Self {
        // Accumulate in centimetres so integer gaps give exact offsets.
        let mut xs = vec![0.0];
        for g in gaps_cm {
            xs.push(xs.last().unwrap() + g);
        }
        let mid = (xs[0] + xs[xs.len() - 1]) / 2.0;
        Self {
            mic_positions: xs.into_iter().map(|x| [(x - mid) / 100.0, 0.0, 0.0]).collect(),
            reference_index,
        }
    }

    pub fn channels(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mic_positions.is_empty() {
            return Err(Error::Config("array has no microphones".into()));
        }
        if self.reference_index >= self.channels() {
            return Err(Error::Config(format!(
                "reference index {} out of range for {} microphones",
                self.reference_index,
                self.channels()
            )));
        }
        for (i, a) in self.mic_positions.iter().enumerate() {
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("microphone {i} has a non-finite position")));
            }
            for b in &self.mic_positions[i + 1..] {
                if dist(a, b) < 1e-9 {
                    return Err(Error::Config("microphone positions must be distinct".into()));
                }
            }
        }
        Ok(())
    }

    /// Unit vector from microphone 0 to the last microphone.
    pub fn axis(&self) -> Result<[f64; 3]> {
        let (first, last) = match self.mic_positions.as_slice() {
            [first, .., last] => (first, last),
            _ => return Ok([1.0, 0.0, 0.0]),
        };
        let len = dist(first, last);
        if len < 1e-12 {
            return Err(Error::Config("array end microphones coincide".into()));
        }
        Ok([
            (last[0] - first[0]) / len,
            (last[1] - first[1]) / len,
            (last[2] - first[2]) / len,
        ])
    }

    /// Signed distance of every microphone from the reference along the axis.
    /// Fails for arrays that are not collinear.
    pub fn axis_offsets(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let axis = self.axis()?;
        let origin = self.mic_positions[0];
        for p in &self.mic_positions {
            let rel = sub(p, &origin);
            let along = dot(&rel, &axis);
            let perp = (dot(&rel, &rel) - along * along).max(0.0).sqrt();
            if perp > COLLINEAR_TOLERANCE {
                return Err(Error::Config(
                    "microphones are not collinear; no array axis to project onto".into(),
                ));
            }
        }
        let reference = self.mic_positions[self.reference_index];
        Ok(self
            .mic_positions
            .iter()
            .map(|p| dot(&sub(p, &reference), &axis))
            .collect())
    }

    /// Checks `position(i) + position(R−1−i)` is the same for every `i`.
    pub fn is_symmetric(&self) -> bool {
        let n = self.channels();
        if n == 0 {
            return true;
        }
        let pair_sum = |i: usize| {
            let (a, b) = (self.mic_positions[i], self.mic_positions[n - 1 - i]);
            [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
        };
        let first = pair_sum(0);
        (1..n).all(|i| dist(&pair_sum(i), &first) < 1e-9)
    }

    pub fn aperture(&self) -> f64 {
        let mut max: f64 = 0.0;
        for a in &self.mic_positions {
            for b in &self.mic_positions {
                max = max.max(dist(a, b));
            }
        }
        max
    }

    /// World coordinates after rotating by `orientation` radians about the
    /// vertical axis and translating to `center`.
    pub fn place(&self, center: [f64; 3], orientation: f64) -> Vec<[f64; 3]> {
        let (s, c) = orientation.sin_cos();
        self.mic_positions
            .iter()
            .map(|p| {
                [
                    center[0] + c * p[0] - s * p[1],
                    center[1] + s * p[0] + c * p[1],
                    center[2] + p[2],
                ]
            })
            .collect()
    }

    /// Horizontal unit direction from the array centre towards a source at
    /// `doa_deg` when the array is rotated by `orientation`.
    pub fn source_direction(&self, doa_deg: f64, orientation: f64) -> Result<[f64; 3]> {
        let axis = self.axis()?;
        // The normal is the axis rotated a quarter turn in the horizontal plane.
        let normal = [-axis[1], axis[0], 0.0];
        let (st, ct) = doa_deg.to_radians().sin_cos();
        let local = [
            -ct * axis[0] + st * normal[0],
            -ct * axis[1] + st * normal[1],
            -ct * axis[2] + st * normal[2],
        ];
        let (s, c) = orientation.sin_cos();
        Ok([c * local[0] - s * local[1], s * local[0] + c * local[1], local[2]])
    }
}

pub(crate) fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = sub(a, b);
    dot(&d, &d).sqrt()
}
