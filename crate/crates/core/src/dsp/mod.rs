//! STFT analysis/synthesis, phase-sensitive mask targets and masked
//! reconstruction.

mod fft;

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use num_complex::Complex64;

pub use fft::Fft;

use crate::error::{invalid, Result};
use crate::matrix::Matrix;
// Float math comes from libm here; test builds link std, which shadows it.
#[allow(unused_imports)]
use num_traits::Float;

/// Mixture magnitudes below this are treated as silence (mask target 0).
pub const SILENCE_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum WindowKind {
    /// Square root of a periodic Hann window, used for analysis and synthesis.
    #[default]
    SqrtHann,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct StftConfig {
    pub sample_rate: u32,
    pub window_ms: f64,
    pub shift_ms: f64,
    pub fft_size: usize,
    #[cfg_attr(feature = "serde", serde(default))]
    pub window_kind: WindowKind,
}

impl Default for StftConfig {
    /// 8 kHz, 32 ms window, 16 ms shift, 256-point FFT (129 bins).
    fn default() -> Self {
        Self { sample_rate: 8000, window_ms: 32.0, shift_ms: 16.0, fft_size: 256, window_kind: WindowKind::SqrtHann }
    }
}

impl StftConfig {
    /// 16 kHz, 32 ms / 16 ms framing with 257 frequency bins.
    pub fn wideband() -> Self {
        Self { sample_rate: 16000, fft_size: 512, ..Self::default() }
    }

    fn samples(&self, ms: f64) -> f64 {
        ms * self.sample_rate as f64 / 1000.0
    }

    pub fn window_len(&self) -> usize {
        self.samples(self.window_ms).round() as usize
    }

    pub fn hop(&self) -> usize {
        self.samples(self.shift_ms).round() as usize
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        let win = self.samples(self.window_ms);
        let hop = self.samples(self.shift_ms);
        if self.sample_rate == 0 || !(win >= 1.0) || !(hop >= 1.0) {
            return Err(invalid!("stft window and shift must span at least one sample"));
        }
        if (win - win.round()).abs() > 1e-9 || (hop - hop.round()).abs() > 1e-9 {
            return Err(invalid!("window {win} and shift {hop} must be whole sample counts"));
        }
        let (win, hop) = (self.window_len(), self.hop());
        if win % hop != 0 {
            return Err(invalid!("shift {hop} must divide window length {win}"));
        }
        if self.fft_size < win || !self.fft_size.is_power_of_two() {
            return Err(invalid!("fft_size {} must be a power of two >= window length {win}", self.fft_size));
        }
        Ok(())
    }

    /// Number of frames `stft` produces for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        let (win, hop) = (self.window_len(), self.hop());
        (len + win - hop).div_ceil(hop)
    }

    pub fn window(&self) -> Vec<f64> {
        let n = self.window_len();
        match self.window_kind {
            WindowKind::SqrtHann => (0..n)
                .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).sqrt())
                .collect(),
        }
    }
}

/// Complex time-frequency matrix, `frames x bins`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    frames: usize,
    bins: usize,
    values: Vec<Complex64>,
}

impl Spectrogram {
    pub fn zeros(frames: usize, bins: usize) -> Self {
        Self { frames, bins, values: vec![Complex64::new(0.0, 0.0); frames * bins] }
    }

    pub fn from_vec(frames: usize, bins: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != frames * bins {
            return Err(invalid!("spectrogram has {} cells, expected {frames}x{bins}", values.len()));
        }
        Ok(Self { frames, bins, values })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.bins)
    }

    #[inline]
    pub fn get(&self, t: usize, f: usize) -> Complex64 {
        self.values[t * self.bins + f]
    }

    #[inline]
    pub fn set(&mut self, t: usize, f: usize, v: Complex64) {
        self.values[t * self.bins + f] = v;
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        &self.values[t * self.bins..(t + 1) * self.bins]
    }

    pub fn magnitude(&self) -> Matrix {
        let data = self.values.iter().map(|v| v.norm()).collect();
        Matrix::from_vec(self.frames, self.bins, data).expect("shape is consistent")
    }

    /// Phase in `(-pi, pi]`.
    pub fn phase(&self, t: usize, f: usize) -> f64 {
        let p = self.get(t, f).arg();
        if p <= -PI {
            PI
        } else {
            p
        }
    }

    pub fn slice_frames(&self, range: Range<usize>) -> Spectrogram {
        Spectrogram {
            frames: range.len(),
            bins: self.bins,
            values: self.values[range.start * self.bins..range.end * self.bins].to_vec(),
        }
    }
}

/// One non-negative mask per output stream, all `frames x bins`.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSet {
    masks: Vec<Matrix>,
}

impl MaskSet {
    pub fn new(masks: Vec<Matrix>) -> Result<Self> {
        let first = masks.first().ok_or_else(|| invalid!("mask set needs at least one stream"))?;
        let shape = first.shape();
        if masks.iter().any(|m| m.shape() != shape) {
            return Err(invalid!("all masks in a set must share one shape"));
        }
        Ok(Self { masks })
    }

    pub fn streams(&self) -> usize {
        self.masks.len()
    }

    pub fn frames(&self) -> usize {
        self.masks[0].rows()
    }

    pub fn bins(&self) -> usize {
        self.masks[0].cols()
    }

    pub fn stream(&self, s: usize) -> &Matrix {
        &self.masks[s]
    }

    pub fn masks(&self) -> &[Matrix] {
        &self.masks
    }

    pub fn into_masks(self) -> Vec<Matrix> {
        self.masks
    }

    pub fn slice_frames(&self, range: Range<usize>) -> MaskSet {
        MaskSet { masks: self.masks.iter().map(|m| m.slice_rows(range.clone())).collect() }
    }

    /// Concatenates mask sets along the frame axis, stream by stream.
    pub fn concat(parts: &[MaskSet]) -> Result<MaskSet> {
        let streams = parts.first().ok_or_else(|| invalid!("nothing to concatenate"))?.streams();
        if parts.iter().any(|p| p.streams() != streams) {
            return Err(invalid!("stream counts differ between parts"));
        }
        let masks = (0..streams)
            .map(|s| {
                let col: Vec<Matrix> = parts.iter().map(|p| p.masks[s].clone()).collect();
                Matrix::concat_rows(&col)
            })
            .collect::<Result<Vec<_>>>()?;
        MaskSet::new(masks)
    }

    /// Masked magnitudes `mask_s * |Y|` for every stream.
    pub fn apply_to_magnitude(&self, mixture_mag: &Matrix) -> Result<Vec<Matrix>> {
        self.masks.iter().map(|m| m.hadamard(mixture_mag)).collect()
    }
}

/// Reusable analysis/synthesis plan for one configuration.
#[derive(Clone, Debug)]
pub struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    fft: Fft,
}

impl Stft {
    pub fn new(cfg: &StftConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg: cfg.clone(), window: cfg.window(), fft: Fft::new(cfg.fft_size) })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    /// Frame `t` covers samples `[t*hop - (win-hop), t*hop + hop)`, zero outside
    /// the signal, so every sample lies under `win/hop` frames.
    pub fn analyze(&self, signal: &[f64]) -> Result<Spectrogram> {
        if signal.is_empty() {
            return Err(invalid!("cannot analyze an empty signal"));
        }
        let (win, hop, n) = (self.window.len(), self.cfg.hop(), self.cfg.fft_size);
        let pad = win - hop;
        let frames = self.cfg.frame_count(signal.len());
        let bins = self.cfg.bins();
        let mut out = Spectrogram::zeros(frames, bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for t in 0..frames {
            buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            for (i, w) in self.window.iter().enumerate() {
                let pos = (t * hop + i) as isize - pad as isize;
                if pos >= 0 && (pos as usize) < signal.len() {
                    buf[i] = Complex64::new(signal[pos as usize] * w, 0.0);
                }
            }
            self.fft.forward(&mut buf);
            out.values[t * bins..(t + 1) * bins].copy_from_slice(&buf[..bins]);
        }
        Ok(out)
    }

    /// Weighted overlap-add synthesis, trimmed or zero-padded to `length`.
    pub fn synthesize(&self, spec: &Spectrogram, length: usize) -> Result<Vec<f64>> {
        let bins = self.cfg.bins();
        if spec.bins() != bins {
            return Err(invalid!("spectrogram has {} bins, config expects {bins}", spec.bins()));
        }
        let (win, hop, n) = (self.window.len(), self.cfg.hop(), self.cfg.fft_size);
        let pad = win - hop;
        let mut acc = vec![0.0; length];
        let mut norm = vec![0.0; length];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for t in 0..spec.frames() {
            let frame = spec.frame(t);
            buf[..bins].copy_from_slice(frame);
            for k in 1..n - bins + 1 {
                buf[n - k] = frame[k].conj();
            }
            self.fft.inverse(&mut buf);
            for (i, w) in self.window.iter().enumerate() {
                let pos = (t * hop + i) as isize - pad as isize;
                if pos >= 0 && (pos as usize) < length {
                    acc[pos as usize] += buf[i].re * w;
                    norm[pos as usize] += w * w;
                }
            }
        }
        for (a, w) in acc.iter_mut().zip(&norm) {
            *a = if *w > 1e-12 { *a / w } else { 0.0 };
        }
        Ok(acc)
    }
}

pub fn stft(signal: &[f64], cfg: &StftConfig) -> Result<Spectrogram> {
    Stft::new(cfg)?.analyze(signal)
}

pub fn istft(spec: &Spectrogram, cfg: &StftConfig, length: usize) -> Result<Vec<f64>> {
    Stft::new(cfg)?.synthesize(spec, length)
}

/// Phase-sensitive mask `|X|/|Y| cos(theta_Y - theta_X)`, clamped to `[0, 1]`.
/// Cells where `|Y| < SILENCE_EPS` get 0.
pub fn psm_target(source: &Spectrogram, mixture: &Spectrogram) -> Result<Matrix> {
    if source.shape() != mixture.shape() {
        return Err(invalid!("source {:?} and mixture {:?} differ in shape", source.shape(), mixture.shape()));
    }
    let data = source
        .values
        .iter()
        .zip(&mixture.values)
        .map(|(x, y)| {
            let my = y.norm();
            if my < SILENCE_EPS {
                0.0
            } else {
                // |X||Y|cos(dphi) = Re(X conj(Y))
                ((x * y.conj()).re / (my * my)).clamp(0.0, 1.0)
            }
        })
        .collect();
    Matrix::from_vec(mixture.frames, mixture.bins, data)
}

/// `mask * |Y| * e^{j theta_Y}`, i.e. the mixture scaled cellwise by the mask.
pub fn apply_mask(mask: &Matrix, mixture: &Spectrogram) -> Result<Spectrogram> {
    if mask.shape() != mixture.shape() {
        return Err(invalid!("mask {:?} and mixture {:?} differ in shape", mask.shape(), mixture.shape()));
    }
    if let Some(v) = mask.as_slice().iter().find(|v| !(**v >= 0.0)) {
        return Err(invalid!("mask values must be non-negative, found {v}"));
    }
    let values = mask.as_slice().iter().zip(&mixture.values).map(|(m, y)| y * *m).collect();
    Spectrogram::from_vec(mixture.frames, mixture.bins, values)
}
