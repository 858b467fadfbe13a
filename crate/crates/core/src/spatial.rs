//! Far-field steering vectors, inter-channel phase differences and the
//! location-guided angle feature.

use std::f64::consts::PI;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::room::ArrayGeometry;
use crate::signal::{ComplexSpectrogram, StftConfig};

/// Per-microphone, per-bin pure phase terms `G_i(f) = exp(−j 2π f d_i cos θ / c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    /// `[channels × bins]`
    pub values: Array2<Complex64>,
    pub doa_deg: f64,
}

impl SteeringVector {
    pub fn channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn bins(&self) -> usize {
        self.values.ncols()
    }

    /// Steering vector `G(f)` at one bin.
    pub fn at_bin(&self, bin: usize) -> Vec<Complex64> {
        self.values.column(bin).to_vec()
    }
}

pub fn steering_vector(
    geometry: &ArrayGeometry,
    doa_deg: f64,
    cfg: &StftConfig,
    sample_rate: u32,
    speed_of_sound: f64,
) -> Result<SteeringVector> {
    if !(0.0..=180.0).contains(&doa_deg) {
        return Err(Error::Config(format!("DOA {doa_deg}° outside [0, 180]")));
    }
    if !(speed_of_sound > 0.0) {
        return Err(Error::Config("speed of sound must be positive".into()));
    }
    let offsets = geometry.axis_offsets()?;
    let cos = doa_deg.to_radians().cos();
    let values = Array2::from_shape_fn((offsets.len(), cfg.bins()), |(i, k)| {
        let f = cfg.bin_frequency(k, sample_rate);
        Complex64::from_polar(1.0, -2.0 * PI * f * offsets[i] * cos / speed_of_sound)
    });
    Ok(SteeringVector { values, doa_deg })
}

/// Ordered microphone pairs `(i, j)`, zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairList(pub Vec<(usize, usize)>);

impl Default for PairList {
    /// Nine pairs sampling short, medium and long spacings of the 15-microphone array.
    fn default() -> Self {
        let one_based = [(1, 15), (2, 14), (3, 13), (1, 7), (12, 4), (11, 5), (12, 8), (7, 10), (8, 9)];
        PairList(one_based.iter().map(|&(i, j)| (i - 1, j - 1)).collect())
    }
}

impl PairList {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::Config("pair list is empty".into()));
        }
        for &(i, j) in &self.0 {
            if i == j {
                return Err(Error::Config(format!("pair ({i}, {j}) repeats a microphone")));
            }
            if i >= channels || j >= channels {
                return Err(Error::Config(format!(
                    "pair ({i}, {j}) out of range for {channels} channels"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// `[pairs × frames × bins]`, radians in (−π, π].
    Ipd,
    /// `[frames × bins]`, in [−1, 1].
    AngleFeature,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub kind: FeatureKind,
    pub values: ndarray::ArrayD<f64>,
}

impl FeatureMatrix {
    /// The `[frames × bins]` angle feature. Panics for IPD matrices.
    pub fn angle_feature(&self) -> ArrayView2<'_, f64> {
        assert_eq!(self.kind, FeatureKind::AngleFeature);
        self.values
            .view()
            .into_dimensionality()
            .expect("angle feature is two-dimensional")
    }
}

fn wrapped_phase(z: Complex64) -> f64 {
    if z.re == 0.0 && z.im == 0.0 {
        return 0.0;
    }
    let a = z.im.atan2(z.re);
    if a <= -PI {
        PI
    } else {
        a
    }
}

/// `IPD(i,j)(t,f) = ∠(X_i / X_j)`, computed as the phase of `X_i · conj(X_j)`
/// so that bins where `X_j` vanishes stay finite (0 when both vanish).
pub fn ipd(spec: &ComplexSpectrogram, pairs: &PairList) -> Result<FeatureMatrix> {
    pairs.validate(spec.channels())?;
    let mut values = Array3::zeros((pairs.len(), spec.frames(), spec.bins()));
    for (mut out, &(i, j)) in values.outer_iter_mut().zip(&pairs.0) {
        let (xi, xj) = (spec.channel(i), spec.channel(j));
        ndarray::Zip::from(&mut out)
            .and(&xi)
            .and(&xj)
            .for_each(|o, &a, &b| *o = wrapped_phase(a * b.conj()));
    }
    Ok(FeatureMatrix {
        kind: FeatureKind::Ipd,
        values: values.into_dyn(),
    })
}

/// Pair-averaged cosine similarity between the observed inter-channel ratio
/// `X_i / X_j` and the target steering ratio `G_i / G_j`, each treated as a
/// 2-D real vector. Equals 1 in bins dominated by a plane wave from the
/// steered direction.
pub fn angle_feature(
    spec: &ComplexSpectrogram,
    steering: &SteeringVector,
    pairs: &PairList,
) -> Result<FeatureMatrix> {
    pairs.validate(spec.channels())?;
    if steering.channels() != spec.channels() || steering.bins() != spec.bins() {
        return Err(Error::Shape(format!(
            "steering vector is {}×{}, spectrogram has {} channels and {} bins",
            steering.channels(),
            steering.bins(),
            spec.channels(),
            spec.bins()
        )));
    }
    let mut af = Array2::<f64>::zeros((spec.frames(), spec.bins()));
    for &(i, j) in &pairs.0 {
        let (xi, xj) = (spec.channel(i), spec.channel(j));
        for f in 0..spec.bins() {
            let g = steering.values[[i, f]] / steering.values[[j, f]];
            let g_norm = g.norm();
            for t in 0..spec.frames() {
                // X_i conj(X_j) has the phase of X_i / X_j.
                let p = xi[[t, f]] * xj[[t, f]].conj();
                let p_norm = p.norm();
                if p_norm > 0.0 && g_norm > 0.0 {
                    af[[t, f]] += (g.conj() * p).re / (g_norm * p_norm);
                }
            }
        }
    }
    af.mapv_inplace(|v| v / pairs.len() as f64);
    Ok(FeatureMatrix {
        kind: FeatureKind::AngleFeature,
        values: af.into_dyn(),
    })
}

/// Mean angle feature across frames at each bin; handy for inspection.
pub fn mean_over_frames(af: &FeatureMatrix) -> Vec<f64> {
    af.angle_feature()
        .mean_axis(Axis(0))
        .map(|m| m.to_vec())
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{stft, MultiChannelWaveform};
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_c(rng: &mut impl Rng) -> Complex64 {
        Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    }

    /// `X_r(t,f) = Σ_s G_s,r(f) S_s(t,f)` for plane waves built straight in the STFT domain.
    fn plane_wave_spec(sources: &[(&SteeringVector, &Array2<Complex64>)]) -> ComplexSpectrogram {
        let (g0, s0) = sources[0];
        let (frames, bins) = s0.dim();
        let data = Array3::from_shape_fn((g0.channels(), frames, bins), |(r, t, f)| {
            sources.iter().map(|(g, s)| g.values[[r, f]] * s[[t, f]]).sum()
        });
        ComplexSpectrogram::new(data, StftConfig::default(), 16000).unwrap()
    }

    fn sv(doa: f64) -> SteeringVector {
        steering_vector(&ArrayGeometry::default(), doa, &StftConfig::default(), 16000, 343.0).unwrap()
    }

    #[test]
    fn broadside_and_reference_are_unity() {
        let g = sv(90.0);
        assert!(g.values.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-12));
        let g = sv(37.0);
        assert!(g.values.row(0).iter().all(|v| *v == Complex64::new(1.0, 0.0)));
        assert!(g.values.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn steering_phase_known_value() {
        let geom = ArrayGeometry {
            mic_positions: vec![[0.0; 3], [0.1, 0.0, 0.0]],
            reference_index: 0,
        };
        // Bin 32 of a 512-point FFT at 16 kHz is exactly 1000 Hz.
        let g = steering_vector(&geom, 0.0, &StftConfig::default(), 16000, 343.0).unwrap();
        let phase = g.values[[1, 32]].arg();
        // −2π·1000·0.1/343, evaluated independently.
        assert!((phase - (-1.831_832_451_072_765_7)).abs() < 1e-12, "{phase}");
        assert!((-2.0 * PI * 1000.0 * 0.1 / 343.0 - (-1.831_832_451_072_765_7)).abs() < 1e-15);
    }

    #[test]
    fn steering_rejects_bad_input() {
        let cfg = StftConfig::default();
        assert!(steering_vector(&ArrayGeometry::default(), 181.0, &cfg, 16000, 343.0).is_err());
        let bent = ArrayGeometry {
            mic_positions: vec![[0.0; 3], [0.1, 0.0, 0.0], [0.2, 0.1, 0.0]],
            reference_index: 0,
        };
        assert!(steering_vector(&bent, 30.0, &cfg, 16000, 343.0).is_err());
    }

    #[test]
    fn default_pairs() {
        let p = PairList::default();
        assert_eq!(p.0[0], (0, 14));
        assert_eq!(p.0[8], (7, 8));
        assert_eq!(p.len(), 9);
        p.validate(15).unwrap();
        assert!(p.validate(14).is_err());
        assert!(PairList(vec![(2, 2)]).validate(4).is_err());
    }

    #[test]
    fn ipd_identical_and_rotated_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base = Array2::from_shape_fn((6, 257), |_| rand_c(&mut rng));
        let rot = Complex64::from_polar(1.0, 0.7);
        let data = Array3::from_shape_fn((3, 6, 257), |(c, t, f)| match c {
            0 => base[[t, f]],
            1 => base[[t, f]],
            _ => base[[t, f]] * rot,
        });
        let spec = ComplexSpectrogram::new(data, StftConfig::default(), 16000).unwrap();
        let f = ipd(&spec, &PairList(vec![(0, 1), (2, 0), (0, 2)])).unwrap();
        let v = f.values.into_dimensionality::<ndarray::Ix3>().unwrap();
        assert!(v.index_axis(Axis(0), 0).iter().all(|&x| x == 0.0));
        assert!(v.index_axis(Axis(0), 1).iter().all(|&x| (x - 0.7).abs() < 1e-12));
        // Antisymmetry.
        assert!(v.index_axis(Axis(0), 2).iter().all(|&x| (x + 0.7).abs() < 1e-12));
    }

    #[test]
    fn ipd_never_nan_on_silence() {
        let mut data = Array3::zeros((2, 3, 257));
        data[[0, 1, 4]] = Complex64::new(1.0, 1.0);
        let spec = ComplexSpectrogram::new(data, StftConfig::default(), 16000).unwrap();
        let f = ipd(&spec, &PairList(vec![(0, 1), (1, 0)])).unwrap();
        assert!(f.values.iter().all(|v| v.is_finite() && *v > -PI && *v <= PI));
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ipd_of_fractional_delay() {
        // Channel 1 is channel 0 delayed by τ samples through a long windowed-sinc delay line.
        let tau = 2.37;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 16000;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let half = 200i64;
        let taps: Vec<f64> = (-half..=half)
            .map(|k| {
                let u = k as f64 - tau;
                let w = 0.5 * (1.0 + (PI * u / (half as f64 + 3.0)).cos());
                if u.abs() < 1e-12 { 1.0 } else { w * (PI * u).sin() / (PI * u) }
            })
            .collect();
        let y: Vec<f64> = (0..n as i64)
            .map(|i| {
                taps.iter()
                    .enumerate()
                    .map(|(k, h)| {
                        let idx = i - (k as i64 - half);
                        if idx >= 0 && idx < n as i64 { h * x[idx as usize] } else { 0.0 }
                    })
                    .sum()
            })
            .collect();
        let w = MultiChannelWaveform::from_channels(&[y, x], 16000).unwrap();
        let spec = stft(&w, &StftConfig::default()).unwrap();
        let f = ipd(&spec, &PairList(vec![(0, 1)])).unwrap();
        let v = f.values.into_dimensionality::<ndarray::Ix3>().unwrap();
        // Average the phase over interior frames as a unit phasor, then compare per bin.
        for k in 5..240 {
            let expect = wrapped_phase(Complex64::from_polar(1.0, -2.0 * PI * k as f64 / 512.0 * tau));
            let mean: Complex64 = (4..spec.frames() - 4)
                .map(|t| Complex64::from_polar(1.0, v[[0, t, k]]))
                .sum();
            let err = wrapped_phase(mean * Complex64::from_polar(1.0, -expect));
            assert!(err.abs() < 0.05, "bin {k}: {err}");
        }
    }

    #[test]
    fn anechoic_single_source_af_is_one() {
        let g = sv(52.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = Array2::from_shape_fn((8, 257), |_| rand_c(&mut rng));
        let spec = plane_wave_spec(&[(&g, &s)]);
        let af = angle_feature(&spec, &g, &PairList::default()).unwrap();
        assert!(af.angle_feature().iter().all(|&v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn antipodal_ratio_gives_minus_one() {
        let g = sv(30.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = Array2::from_shape_fn((4, 257), |_| rand_c(&mut rng));
        // Two microphones whose ratio is the steering ratio rotated by π.
        let data = Array3::from_shape_fn((2, 4, 257), |(c, t, f)| {
            if c == 0 { g.values[[0, f]] * s[[t, f]] } else { -g.values[[1, f]] * s[[t, f]] }
        });
        let spec = ComplexSpectrogram::new(data, StftConfig::default(), 16000).unwrap();
        let two = SteeringVector {
            values: g.values.slice(ndarray::s![0..2, ..]).to_owned(),
            doa_deg: 30.0,
        };
        let af = angle_feature(&spec, &two, &PairList(vec![(0, 1), (1, 0)])).unwrap();
        assert!(af.angle_feature().iter().all(|&v| (v + 1.0).abs() < 1e-9));
    }

    #[test]
    fn zero_bins_contribute_nothing() {
        let g = sv(60.0);
        let spec = ComplexSpectrogram::new(Array3::zeros((15, 2, 257)), StftConfig::default(), 16000)
            .unwrap();
        let af = angle_feature(&spec, &g, &PairList::default()).unwrap();
        assert!(af.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn af_invariant_to_common_scaling() {
        let g = sv(70.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = Array3::from_shape_fn((15, 5, 257), |_| rand_c(&mut rng));
        let spec = ComplexSpectrogram::new(data.clone(), StftConfig::default(), 16000).unwrap();
        let base = angle_feature(&spec, &g, &PairList::default()).unwrap();
        let alpha = Array2::from_shape_fn((5, 257), |_| rng.gen_range(0.01..100.0));
        let rot = Complex64::from_polar(1.0, 1.234);
        let scaled = Array3::from_shape_fn((15, 5, 257), |(c, t, f)| data[[c, t, f]] * alpha[[t, f]] * rot);
        let spec2 = ComplexSpectrogram::new(scaled, StftConfig::default(), 16000).unwrap();
        let other = angle_feature(&spec2, &g, &PairList::default()).unwrap();
        for (a, b) in base.values.iter().zip(other.values.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(base.values.iter().all(|v| (-1.0 - 1e-12..=1.0 + 1e-12).contains(v)));
    }

    #[test]
    fn af_separates_target_from_interferer_bins() {
        let (g1, g2) = (sv(30.0), sv(120.0));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s1 = Array2::from_shape_fn((40, 257), |_| rand_c(&mut rng));
        let s2 = Array2::from_shape_fn((40, 257), |_| rand_c(&mut rng));
        let spec = plane_wave_spec(&[(&g1, &s1), (&g2, &s2)]);
        let af = angle_feature(&spec, &g1, &PairList::default()).unwrap();
        let af = af.angle_feature();
        let (mut tgt, mut nt, mut itf, mut ni) = (0.0, 0, 0.0, 0);
        for t in 0..40 {
            for f in 1..257 {
                let (a, b) = (s1[[t, f]].norm(), s2[[t, f]].norm());
                if a > 2.0 * b {
                    tgt += af[[t, f]];
                    nt += 1;
                } else if b > 2.0 * a {
                    itf += af[[t, f]];
                    ni += 1;
                }
            }
        }
        assert!(tgt / nt as f64 > itf / ni as f64);
    }
}
