use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Time-domain audio, `[channels × samples]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelWaveform {
    samples: Array2<f64>,
    sample_rate: u32,
}

impl MultiChannelWaveform {
    pub fn new(samples: Array2<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        let n = samples.len();
        let samples = Array2::from_shape_vec((1, n), samples)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(samples, sample_rate)
    }

    /// Stacks equal-length channels.
    pub fn from_channels(channels: &[Vec<f64>], sample_rate: u32) -> Result<Self> {
        let len = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Shape("channels have different lengths".into()));
        }
        let mut samples = Array2::zeros((channels.len(), len));
        for (mut row, ch) in samples.outer_iter_mut().zip(channels) {
            row.assign(&ArrayView1::from(ch.as_slice()));
        }
        Self::new(samples, sample_rate)
    }

    pub fn zeros(channels: usize, len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(Array2::zeros((channels, len)), sample_rate)
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut Array2<f64> {
        &mut self.samples
    }

    pub fn into_samples(self) -> Array2<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn channel(&self, index: usize) -> ArrayView1<'_, f64> {
        self.samples.row(index)
    }

    /// Single-channel copy of channel `index`.
    pub fn select_channel(&self, index: usize) -> Result<Self> {
        if index >= self.channels() {
            return Err(Error::Shape(format!(
                "channel {index} out of range for {} channels",
                self.channels()
            )));
        }
        let row: Array1<f64> = self.samples.row(index).to_owned();
        Self::new(row.insert_axis(Axis(0)), self.sample_rate)
    }

    pub fn duration_secs(&self) -> f64 {
        self.len() as f64 / f64::from(self.sample_rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_rate() {
        assert!(MultiChannelWaveform::zeros(1, 10, 0).is_err());
    }

    #[test]
    fn rejects_ragged_channels() {
        let r = MultiChannelWaveform::from_channels(&[vec![0.0; 3], vec![0.0; 4]], 16000);
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn channel_selection() {
        let w = MultiChannelWaveform::from_channels(&[vec![1.0, 2.0], vec![3.0, 4.0]], 8000)
            .unwrap();
        let c = w.select_channel(1).unwrap();
        assert_eq!(c.channels(), 1);
        assert_eq!(c.channel(0).to_vec(), vec![3.0, 4.0]);
        assert!(w.select_channel(2).is_err());
    }
}
