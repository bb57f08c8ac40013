//! Energy-based end-of-utterance detection.
//!
//! The first frame of a recording calibrates the silence threshold `tau_s`
//! (mean RMS of ten sub-frames). After that, frames of `window_shift` seconds
//! fill a sliding window of `window_length` seconds; the recording stops at
//! the first window boundary whose mean frame RMS is within `epsilon` of
//! `tau_s`, or at `max_duration`.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
const CALIBRATION_SUBFRAMES: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum EndpointError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("sample rate changed mid-stream: expected {expected} Hz, got {got} Hz")]
    SampleRateMismatch { expected: u32, got: u32 },
    #[error("audio format error: {0}")]
    Format(String),
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioChunk {
    pub samples: Vec<i16>,
    pub sample_rate: u32,
    /// Seconds since the start of the recording.
    pub start_time: f64,
}

impl AudioChunk {
    pub fn new(samples: Vec<i16>, sample_rate: u32, start_time: f64) -> Self {
        AudioChunk {
            samples,
            sample_rate,
            start_time,
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Little-endian PCM bytes, the form streamed to the recognizer.
    pub fn pcm_bytes(&self) -> Vec<u8> {
        samples_to_bytes(&self.samples)
    }
}

pub fn samples_to_bytes(samples: &[i16]) -> Vec<u8> {
    samples.iter().flat_map(|s| s.to_le_bytes()).collect()
}

/// Splits a sample buffer into consecutive chunks of `chunk_len` samples.
pub fn chunk_samples(samples: &[i16], sample_rate: u32, chunk_len: usize) -> Vec<AudioChunk> {
    samples
        .chunks(chunk_len.max(1))
        .enumerate()
        .map(|(i, c)| {
            AudioChunk::new(
                c.to_vec(),
                sample_rate,
                (i * chunk_len) as f64 / sample_rate as f64,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyFrame {
    pub rms: f64,
    pub duration: f64,
    pub index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SilenceThreshold {
    pub tau_s: f64,
    pub epsilon: f64,
}

impl SilenceThreshold {
    /// Level at or below which a window counts as silence.
    pub fn stop_level(&self) -> f64 {
        self.tau_s * (1.0 + self.epsilon)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub calibration_duration: f64,
    pub window_length: f64,
    pub window_shift: f64,
    pub epsilon: f64,
    pub max_duration: f64,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            calibration_duration: 0.2,
            window_length: 1.0,
            window_shift: 0.2,
            epsilon: 0.1,
            max_duration: 15.0,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), EndpointError> {
        if !(self.window_shift > 0.0) {
            return Err(EndpointError::Config("window_shift must be positive".into()));
        }
        let ratio = self.window_length / self.window_shift;
        if ratio < 1.0 || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(EndpointError::Config(format!(
                "window_length {} is not a multiple of window_shift {}",
                self.window_length, self.window_shift
            )));
        }
        if (self.calibration_duration - self.window_shift).abs() > 1e-12 {
            return Err(EndpointError::Config(
                "calibration_duration must equal window_shift".into(),
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(EndpointError::Config("epsilon must be positive".into()));
        }
        if !(self.max_duration > 0.0) {
            return Err(EndpointError::Config("max_duration must be positive".into()));
        }
        Ok(())
    }

    pub fn window_frames(&self) -> usize {
        (self.window_length / self.window_shift).round() as usize
    }

    pub fn frame_len(&self, sample_rate: u32) -> usize {
        (sample_rate as f64 * self.window_shift).round() as usize
    }
}

/// Root-mean-square amplitude of a PCM window.
pub fn frame_energy(samples: &[i16]) -> Result<f64, EndpointError> {
    if samples.is_empty() {
        return Err(EndpointError::InvalidInput("empty sample window".into()));
    }
    let sum_sq: f64 = samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
    Ok((sum_sq / samples.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Calibration {
    NeedsMoreData { have: usize, need: usize },
    Ready(SilenceThreshold),
}

/// Computes `tau_s` from the first calibration frame of `samples`.
pub fn calibrate(samples: &[i16], sample_rate: u32, config: &EndpointConfig) -> Calibration {
    let need = config.frame_len(sample_rate);
    if samples.len() < need || need < CALIBRATION_SUBFRAMES {
        return Calibration::NeedsMoreData {
            have: samples.len(),
            need: need.max(CALIBRATION_SUBFRAMES),
        };
    }
    Calibration::Ready(SilenceThreshold {
        tau_s: calibration_level(&samples[..need]),
        epsilon: config.epsilon,
    })
}

fn calibration_level(frame: &[i16]) -> f64 {
    let n = frame.len();
    let total: f64 = (0..CALIBRATION_SUBFRAMES)
        .map(|i| {
            let a = i * n / CALIBRATION_SUBFRAMES;
            let b = (i + 1) * n / CALIBRATION_SUBFRAMES;
            frame_energy(&frame[a..b]).expect("sub-frames are non-empty")
        })
        .sum();
    total / CALIBRATION_SUBFRAMES as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Continue,
    Stop { stop_time: f64 },
}

/// Streaming endpointer. Feed chunks in order; chunk boundaries never affect
/// the outcome.
#[derive(Debug, Clone)]
pub struct Endpointer {
    config: EndpointConfig,
    sample_rate: Option<u32>,
    frame_len: usize,
    pending: Vec<i16>,
    threshold: Option<SilenceThreshold>,
    window: VecDeque<f64>,
    frames: Vec<EnergyFrame>,
    samples_seen: u64,
    stop: Option<(u64, f64)>,
}

impl Endpointer {
    pub fn new(config: EndpointConfig) -> Result<Self, EndpointError> {
        config.validate()?;
        Ok(Endpointer {
            config,
            sample_rate: None,
            frame_len: 0,
            pending: Vec::new(),
            threshold: None,
            window: VecDeque::new(),
            frames: Vec::new(),
            samples_seen: 0,
            stop: None,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn threshold(&self) -> Option<SilenceThreshold> {
        self.threshold
    }

    /// Completed frames, calibration frame first.
    pub fn frames(&self) -> &[EnergyFrame] {
        &self.frames
    }

    pub fn stopped(&self) -> Option<f64> {
        self.stop.map(|(_, t)| t)
    }

    /// Sample index (exclusive) at which the recording stopped.
    pub fn stop_sample(&self) -> Option<u64> {
        self.stop.map(|(s, _)| s)
    }

    pub fn feed(&mut self, chunk: &AudioChunk) -> Result<Decision, EndpointError> {
        if let Some((_, t)) = self.stop {
            return Ok(Decision::Stop { stop_time: t });
        }
        if chunk.sample_rate == 0 {
            return Err(EndpointError::InvalidInput("sample rate must be positive".into()));
        }
        match self.sample_rate {
            None => {
                let frame_len = self.config.frame_len(chunk.sample_rate);
                if frame_len < CALIBRATION_SUBFRAMES {
                    return Err(EndpointError::InvalidInput(format!(
                        "sample rate {} Hz too low for {} s frames",
                        chunk.sample_rate, self.config.window_shift
                    )));
                }
                self.sample_rate = Some(chunk.sample_rate);
                self.frame_len = frame_len;
            }
            Some(r) if r != chunk.sample_rate => {
                return Err(EndpointError::SampleRateMismatch {
                    expected: r,
                    got: chunk.sample_rate,
                })
            }
            Some(_) => {}
        }
        let rate = chunk.sample_rate;
        let max_samples = (self.config.max_duration * rate as f64).round() as u64;

        let mut rest: &[i16] = &chunk.samples;
        while !rest.is_empty() {
            let want = self.frame_len - self.pending.len();
            let until_max = max_samples.saturating_sub(self.samples_seen);
            let take = want.min(rest.len()).min(until_max.max(1) as usize);
            self.pending.extend_from_slice(&rest[..take]);
            rest = &rest[take..];
            self.samples_seen += take as u64;

            if self.pending.len() == self.frame_len {
                if let Some(t) = self.complete_frame(rate) {
                    self.stop = Some((self.samples_seen, t));
                    return Ok(Decision::Stop { stop_time: t });
                }
            }
            if self.samples_seen >= max_samples {
                self.stop = Some((max_samples, self.config.max_duration));
                return Ok(Decision::Stop {
                    stop_time: self.config.max_duration,
                });
            }
        }
        Ok(Decision::Continue)
    }

    /// Closes the pending frame; returns a stop time if the window condition holds.
    fn complete_frame(&mut self, rate: u32) -> Option<f64> {
        let frame = std::mem::take(&mut self.pending);
        let index = self.frames.len() as u64;
        let rms = frame_energy(&frame).expect("full frame");
        self.frames.push(EnergyFrame {
            rms,
            duration: self.config.window_shift,
            index,
        });
        let Some(threshold) = self.threshold else {
            self.threshold = Some(SilenceThreshold {
                tau_s: calibration_level(&frame),
                epsilon: self.config.epsilon,
            });
            return None;
        };
        let n = self.config.window_frames();
        self.window.push_back(rms);
        if self.window.len() > n {
            self.window.pop_front();
        }
        if self.window.len() < n {
            return None;
        }
        let mean = self.window.iter().sum::<f64>() / n as f64;
        (mean <= threshold.stop_level()).then(|| self.samples_seen as f64 / rate as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointResult {
    pub stop_time: f64,
    pub sample_rate: u32,
    /// Samples in `[0, stop_time)`.
    pub samples: Vec<i16>,
    pub tau_s: Option<f64>,
}

/// Runs the streaming endpointer over a complete buffer.
pub fn endpoint_samples(
    samples: &[i16],
    sample_rate: u32,
    config: &EndpointConfig,
) -> Result<EndpointResult, EndpointError> {
    let mut ep = Endpointer::new(*config)?;
    ep.feed(&AudioChunk::new(samples.to_vec(), sample_rate, 0.0))?;
    let (stop_sample, stop_time) = match ep.stop {
        Some(s) => s,
        // Audio ended before any stop condition: the whole buffer is the utterance.
        None => (
            samples.len() as u64,
            samples.len() as f64 / sample_rate as f64,
        ),
    };
    Ok(EndpointResult {
        stop_time,
        sample_rate,
        samples: samples[..stop_sample as usize].to_vec(),
        tau_s: ep.threshold.map(|t| t.tau_s),
    })
}

pub fn read_wav(path: &Path) -> Result<(Vec<i16>, u32), EndpointError> {
    let reader = hound::WavReader::open(path)
        .map_err(|e| EndpointError::Format(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(EndpointError::Format(format!(
            "{}: expected 16-bit PCM, got {:?} {} bits",
            path.display(),
            spec.sample_format,
            spec.bits_per_sample
        )));
    }
    if spec.channels != 1 {
        return Err(EndpointError::Format(format!(
            "{}: expected mono, got {} channels",
            path.display(),
            spec.channels
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| EndpointError::Format(e.to_string()))?;
    Ok((samples, spec.sample_rate))
}

pub fn write_wav(path: &Path, samples: &[i16], sample_rate: u32) -> Result<(), EndpointError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)
        .map_err(|e| EndpointError::Format(format!("{}: {e}", path.display())))?;
    for &s in samples {
        w.write_sample(s)
            .map_err(|e| EndpointError::Format(e.to_string()))?;
    }
    w.finalize()
        .map_err(|e| EndpointError::Format(e.to_string()))
}

/// Endpoints a mono 16-bit PCM WAV file.
pub fn endpoint_file(path: &Path, config: &EndpointConfig) -> Result<EndpointResult, EndpointError> {
    let (samples, rate) = read_wav(path)?;
    if samples.is_empty() {
        return Err(EndpointError::InvalidInput(format!(
            "{}: no samples",
            path.display()
        )));
    }
    endpoint_samples(&samples, rate, config)
}

/// Square wave of amplitude `level`, whose RMS is exactly `level`.
pub fn square_frame(level: i16, len: usize) -> Vec<i16> {
    (0..len)
        .map(|i| if i % 2 == 0 { level } else { -level })
        .collect()
}

/// Concatenates constant-RMS frames, one per entry in `levels`.
pub fn synth_trace(levels: &[i16], frame_len: usize) -> Vec<i16> {
    levels
        .iter()
        .flat_map(|&l| square_frame(l, frame_len))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const RATE: u32 = 16_000;
    const FRAME: usize = 3200;

    /// Independent oracle: recompute every window from raw samples at every
    /// candidate boundary and return the first that satisfies the rule.
    fn window_scan_oracle(samples: &[i16], rate: u32, cfg: &EndpointConfig) -> f64 {
        let frame = (rate as f64 * cfg.window_shift).round() as usize;
        let sub = frame / 10;
        let rms = |s: &[i16]| {
            let mut acc = 0.0;
            for v in s {
                acc += (*v as f64).powi(2);
            }
            (acc / s.len() as f64).sqrt()
        };
        let mut tau = 0.0;
        for i in 0..10 {
            let a = i * frame / 10;
            let b = (i + 1) * frame / 10;
            assert!(b - a >= sub);
            tau += rms(&samples[a..b]);
        }
        tau /= 10.0;
        let n = cfg.window_frames();
        let max_samples = (cfg.max_duration * rate as f64).round() as usize;
        let mut k = 1 + n;
        while (k * frame) <= max_samples && k * frame <= samples.len() {
            let mut mean = 0.0;
            for j in (k - n)..k {
                mean += rms(&samples[j * frame..(j + 1) * frame]);
            }
            mean /= n as f64;
            if mean <= tau * (1.0 + cfg.epsilon) {
                return (k * frame) as f64 / rate as f64;
            }
            k += 1;
        }
        cfg.max_duration
    }

    fn stop_of(samples: &[i16], chunk: usize, cfg: &EndpointConfig) -> Option<f64> {
        let mut ep = Endpointer::new(*cfg).unwrap();
        for c in chunk_samples(samples, RATE, chunk) {
            if let Decision::Stop { stop_time } = ep.feed(&c).unwrap() {
                return Some(stop_time);
            }
        }
        None
    }

    #[test]
    fn energy_basics() {
        assert_eq!(frame_energy(&[0; 100]).unwrap(), 0.0);
        assert_eq!(frame_energy(&[100; 57]).unwrap(), 100.0);
        assert_eq!(frame_energy(&square_frame(-100, 10)).unwrap(), 100.0);
        assert!(matches!(
            frame_energy(&[]),
            Err(EndpointError::InvalidInput(_))
        ));
    }

    #[test]
    fn energy_matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(1..5000);
            let s: Vec<i16> = (0..n).map(|_| rng.random()).collect();
            let squares: Vec<f64> = s.iter().map(|&v| v as f64 * v as f64).collect();
            let mean = squares.iter().sum::<f64>() / n as f64;
            assert!((frame_energy(&s).unwrap() - mean.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn calibrate_constant_and_mixed() {
        let cfg = EndpointConfig::default();
        let Calibration::Ready(t) = calibrate(&[10; FRAME], RATE, &cfg) else {
            panic!()
        };
        assert_eq!(t.tau_s, 10.0);
        // five 20 ms sub-frames at 10 then five at 30
        let mut s = square_frame(10, FRAME / 2);
        s.extend(square_frame(30, FRAME / 2));
        let Calibration::Ready(t) = calibrate(&s, RATE, &cfg) else {
            panic!()
        };
        assert_eq!(t.tau_s, 20.0);
        assert_eq!(
            calibrate(&[0; 100], RATE, &cfg),
            Calibration::NeedsMoreData {
                have: 100,
                need: FRAME
            }
        );
        let Calibration::Ready(t) = calibrate(&[0; FRAME], RATE, &cfg) else {
            panic!()
        };
        assert_eq!(t.tau_s, 0.0);
    }

    #[test]
    fn speech_burst_trace_stops_at_3_2() {
        let cfg = EndpointConfig::default();
        let mut levels = vec![10i16];
        levels.extend([200; 10]);
        levels.extend([10; 20]);
        let s = synth_trace(&levels, FRAME);
        assert_eq!(window_scan_oracle(&s, RATE, &cfg), 3.2);
        assert_eq!(stop_of(&s, 4096, &cfg), Some(3.2));
        assert_eq!(stop_of(&s, 23, &cfg), Some(3.2));
        let scaled: Vec<i16> = s.iter().map(|v| v * 3).collect();
        assert_eq!(stop_of(&scaled, 1000, &cfg), Some(3.2));
    }

    #[test]
    fn silence_stops_after_first_window() {
        let cfg = EndpointConfig::default();
        assert_eq!(stop_of(&vec![0; RATE as usize * 3], 1600, &cfg), Some(1.2));
    }

    #[test]
    fn never_silent_hits_cap() {
        let cfg = EndpointConfig {
            max_duration: 3.0,
            ..Default::default()
        };
        let mut levels = vec![10i16];
        levels.extend([500; 40]);
        let s = synth_trace(&levels, FRAME);
        let mut ep = Endpointer::new(cfg).unwrap();
        let d = ep.feed(&AudioChunk::new(s.clone(), RATE, 0.0)).unwrap();
        assert_eq!(d, Decision::Stop { stop_time: 3.0 });
        assert_eq!(ep.stop_sample(), Some(48_000));
        assert_eq!(window_scan_oracle(&s, RATE, &cfg), 3.0);
    }

    #[test]
    fn rate_mismatch_rejected() {
        let mut ep = Endpointer::new(EndpointConfig::default()).unwrap();
        ep.feed(&AudioChunk::new(vec![0; 10], 16_000, 0.0)).unwrap();
        let err = ep.feed(&AudioChunk::new(vec![0; 10], 8_000, 0.0)).unwrap_err();
        assert!(matches!(
            err,
            EndpointError::SampleRateMismatch {
                expected: 16_000,
                got: 8_000
            }
        ));
    }

    #[test]
    fn bad_config_rejected() {
        let cfg = EndpointConfig {
            window_length: 0.9,
            ..Default::default()
        };
        assert!(Endpointer::new(cfg).is_err());
        let cfg = EndpointConfig {
            calibration_duration: 0.3,
            ..Default::default()
        };
        assert!(Endpointer::new(cfg).is_err());
    }

    #[test]
    fn other_sample_rates_rederive_frames() {
        let cfg = EndpointConfig::default();
        let frame = 1600; // 8 kHz
        let mut levels = vec![10i16];
        levels.extend([200; 3]);
        levels.extend([10; 10]);
        let s = synth_trace(&levels, frame);
        let mut ep = Endpointer::new(cfg).unwrap();
        let d = ep.feed(&AudioChunk::new(s.clone(), 8000, 0.0)).unwrap();
        assert_eq!(d, Decision::Stop { stop_time: window_scan_oracle(&s, 8000, &cfg) });
        assert_eq!(d, Decision::Stop { stop_time: 1.8 });
    }

    #[test]
    fn wav_round_trip_and_trim() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("burst.wav");
        let mut levels = vec![10i16];
        levels.extend([200; 10]);
        levels.extend([10; 20]);
        write_wav(&p, &synth_trace(&levels, FRAME), RATE).unwrap();
        let r = endpoint_file(&p, &EndpointConfig::default()).unwrap();
        assert_eq!(r.stop_time, 3.2);
        assert_eq!(r.samples.len(), 51_200);
        assert_eq!(r.tau_s, Some(10.0));

        let bad = dir.path().join("stereo.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: RATE,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&bad, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            endpoint_file(&bad, &EndpointConfig::default()),
            Err(EndpointError::Format(_))
        ));
        std::fs::write(dir.path().join("junk.wav"), b"not a wav").unwrap();
        assert!(matches!(
            endpoint_file(&dir.path().join("junk.wav"), &EndpointConfig::default()),
            Err(EndpointError::Format(_))
        ));
    }

    fn trace_strategy() -> impl Strategy<Value = Vec<i16>> {
        (
            1i16..60,
            prop::collection::vec(prop::sample::select(vec![0i16, 1, 5, 20, 40, 80, 300, 1000]), 5..60),
        )
            .prop_map(|(cal, mut rest)| {
                rest.insert(0, cal);
                rest
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn chunking_invariance(levels in trace_strategy(), chunk in 1usize..7000) {
            let cfg = EndpointConfig::default();
            let s = synth_trace(&levels, FRAME);
            prop_assert_eq!(stop_of(&s, chunk, &cfg), stop_of(&s, s.len(), &cfg));
        }

        #[test]
        fn matches_oracle_and_scale(levels in trace_strategy(), c in 2i16..10) {
            let cfg = EndpointConfig::default();
            let mut s = synth_trace(&levels, FRAME);
            s.extend(vec![0i16; RATE as usize * 16]);
            let stop = stop_of(&s, 1600, &cfg).unwrap();
            prop_assert_eq!(stop, window_scan_oracle(&s, RATE, &cfg));
            let scaled: Vec<i16> = s.iter().map(|v| v * c).collect();
            prop_assert_eq!(stop_of(&scaled, 1600, &cfg), Some(stop));
            // stop times sit on window boundaries or at the cap
            let k = (stop - 1.2) / 0.2;
            prop_assert!(stop == cfg.max_duration || (k >= -1e-9 && (k - k.round()).abs() < 1e-9));
        }

        #[test]
        fn larger_epsilon_never_later(levels in trace_strategy(), e1 in 0.01..1.0f64, de in 0.0..1.0f64) {
            let mut s = synth_trace(&levels, FRAME);
            s.extend(vec![0i16; RATE as usize * 16]);
            let a = EndpointConfig { epsilon: e1, ..Default::default() };
            let b = EndpointConfig { epsilon: e1 + de, ..Default::default() };
            prop_assert!(stop_of(&s, 3200, &b).unwrap() <= stop_of(&s, 3200, &a).unwrap());
        }
    }
}
