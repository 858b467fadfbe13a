//! Waveform containers, STFT/iSTFT and WAV I/O.

mod stft;
mod waveform;
mod wav;

pub use stft::{istft, stft, ComplexSpectrogram, StftConfig, WindowKind};
pub use waveform::MultiChannelWaveform;
pub use wav::{quantize_pcm16, read_wav, write_wav, WavEncoding};
