//! Mono waveforms and RIFF/WAVE I/O.
//!
//! Readers accept 16-bit PCM and 32-bit IEEE float, mono or stereo. Stereo is
//! downmixed by channel mean. Everything written is mono 16-bit PCM.

use std::fs::File;
use std::io::{BufReader, Cursor, Read, Seek, Write};
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

const PCM16_SCALE: f32 = 32768.0;

/// Mono audio with amplitudes clipped to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    /// Builds a waveform, clipping amplitudes into `[-1, 1]`.
    ///
    /// Non-finite samples and a zero sample rate are rejected.
    pub fn new(mut samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Invalid("sample rate must be positive".into()));
        }
        if let Some(pos) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::Invalid(format!("non-finite sample at index {pos}")));
        }
        for s in &mut samples {
            *s = s.clamp(-1.0, 1.0);
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Silent waveform of `len` samples.
    pub fn silence(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    /// Same sample rate, new samples (clipped).
    pub fn with_samples(&self, samples: Vec<f32>) -> Result<Self> {
        Self::new(samples, self.sample_rate)
    }
}

fn map_hound(err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::Io(e),
        hound::Error::FormatError(msg) => Error::Format(msg.to_string()),
        hound::Error::Unsupported => Error::Unsupported("WAV feature not supported".into()),
        hound::Error::InvalidSampleFormat => {
            Error::Unsupported("sample format does not match bit depth".into())
        }
        other => Error::Format(other.to_string()),
    }
}

fn read_waveform<R: Read>(reader: WavReader<R>) -> Result<Waveform> {
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 || channels > 2 {
        return Err(Error::Unsupported(format!("{channels} channels")));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / PCM16_SCALE).map_err(map_hound))
            .collect::<Result<_>>()?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map_err(map_hound))
            .collect::<Result<_>>()?,
        (fmt, bits) => {
            return Err(Error::Unsupported(format!("{fmt:?} with {bits} bits per sample")));
        }
    };
    if interleaved.iter().any(|s| !s.is_finite()) {
        return Err(Error::Format("non-finite sample in float WAV".into()));
    }
    let mono = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(2)
            .map(|frame| (frame[0] + frame[1]) / 2.0)
            .collect()
    };
    Waveform::new(mono, spec.sample_rate)
}

/// Reads a WAV file into a mono waveform.
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let file = File::open(path)?;
    let reader = WavReader::new(BufReader::new(file)).map_err(map_hound)?;
    read_waveform(reader)
}

/// Decodes a complete in-memory WAV file.
pub fn decode_wav_bytes(bytes: &[u8]) -> Result<Waveform> {
    let reader = WavReader::new(Cursor::new(bytes)).map_err(map_hound)?;
    read_waveform(reader)
}

fn quantize(sample: f32) -> i16 {
    (sample * PCM16_SCALE)
        .round()
        .clamp(i16::MIN as f32, i16::MAX as f32) as i16
}

fn write_waveform<W: Write + Seek>(w: &Waveform, sink: W) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::new(sink, spec).map_err(map_hound)?;
    {
        let mut samples = writer.get_i16_writer(w.samples.len() as u32);
        for &s in &w.samples {
            samples.write_sample(quantize(s));
        }
        samples.flush().map_err(map_hound)?;
    }
    writer.finalize().map_err(map_hound)
}

/// Writes a waveform as mono 16-bit PCM.
pub fn save_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path)?;
    write_waveform(w, std::io::BufWriter::new(file))
}

/// Encodes a waveform as a complete mono 16-bit PCM WAV file in memory.
pub fn wav_bytes(w: &Waveform) -> Result<Vec<u8>> {
    let mut cursor = Cursor::new(Vec::with_capacity(44 + 2 * w.len()));
    write_waveform(w, &mut cursor)?;
    Ok(cursor.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn write_raw(path: &Path, spec: WavSpec, f: impl FnOnce(&mut WavWriter<std::io::BufWriter<File>>)) {
        let mut writer = WavWriter::create(path, spec).unwrap();
        f(&mut writer);
        writer.finalize().unwrap();
    }

    fn pcm16(channels: u16, rate: u32) -> WavSpec {
        WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        }
    }

    #[test]
    fn loads_one_second_of_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zeros.wav");
        write_raw(&path, pcm16(1, 16000), |w| {
            for _ in 0..16000 {
                w.write_sample(0i16).unwrap();
            }
        });
        let wave = load_wav(&path).unwrap();
        assert_eq!(wave.len(), 16000);
        assert_eq!(wave.sample_rate(), 16000);
        assert!(wave.samples().iter().all(|&s| s == 0.0));
        assert_eq!(wave.duration_seconds(), 1.0);
    }

    #[test]
    fn most_negative_pcm_sample_maps_to_minus_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("min.wav");
        write_raw(&path, pcm16(1, 8000), |w| w.write_sample(i16::MIN).unwrap());
        assert_eq!(load_wav(&path).unwrap().samples(), &[-1.0]);
    }

    #[test]
    fn stereo_is_downmixed_by_mean() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        write_raw(&path, spec, |w| {
            for _ in 0..50 {
                w.write_sample(0.5f32).unwrap();
                w.write_sample(-0.5f32).unwrap();
            }
        });
        let wave = load_wav(&path).unwrap();
        assert_eq!(wave.len(), 50);
        assert!(wave.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn float_samples_are_clipped_on_ingest() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loud.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        write_raw(&path, spec, |w| {
            w.write_sample(1.5f32).unwrap();
            w.write_sample(-3.0f32).unwrap();
        });
        assert_eq!(load_wav(&path).unwrap().samples(), &[1.0, -1.0]);
    }

    #[test]
    fn garbage_header_is_a_format_error() {
        let err = decode_wav_bytes(b"definitely not a riff file at all").unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err:?}");
    }

    #[test]
    fn eight_bit_pcm_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u8.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 8,
            sample_format: SampleFormat::Int,
        };
        write_raw(&path, spec, |w| w.write_sample(3i8).unwrap());
        assert!(matches!(load_wav(&path), Err(Error::Unsupported(_))));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let w = Waveform::silence(10, 8000).unwrap();
        let err = save_wav(&w, "/nonexistent-dir/for/sure/out.wav").unwrap_err();
        assert!(matches!(err, Error::Io(_)));
    }

    #[test]
    fn zeros_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.wav");
        save_wav(&Waveform::silence(100, 8000).unwrap(), &path).unwrap();
        let back = load_wav(&path).unwrap();
        assert_eq!(back.samples(), &[0.0; 100][..]);
        assert_eq!(back.sample_rate(), 8000);
    }

    #[test]
    fn extremes_round_trip_within_one_lsb() {
        let w = Waveform::new(vec![1.0, -1.0], 16000).unwrap();
        let back = decode_wav_bytes(&wav_bytes(&w).unwrap()).unwrap();
        for (a, b) in w.samples().iter().zip(back.samples()) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn seeded_random_round_trip_error_below_one_lsb() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let samples: Vec<f32> = (0..1000).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let w = Waveform::new(samples, 16000).unwrap();
        let back = decode_wav_bytes(&wav_bytes(&w).unwrap()).unwrap();
        let max_err = w
            .samples()
            .iter()
            .zip(back.samples())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(max_err < 1.0 / 32768.0, "max error {max_err}");
    }

    #[test]
    fn rejects_non_finite_and_zero_rate() {
        assert!(Waveform::new(vec![f32::NAN], 8000).is_err());
        assert!(Waveform::new(vec![0.0], 0).is_err());
    }
}
