//! Synthetic stand-ins for talkers and two-source mixing at a target SNR.
//!
//! Each source comes from one spectro-temporal family (steady tone, linear
//! chirp, amplitude-modulated tone or band-limited noise). Mixtures always
//! pair two different families, in random order, so the output-to-source
//! assignment is ambiguous and has to be resolved by permutation-invariant
//! training.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

// Float math comes from libm here; test builds link std, which shadows it.
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Result};
use crate::rng::{derive_seed, SeededRng};

/// Peak amplitude of every synthesized source.
pub const SOURCE_PEAK: f64 = 0.5;
/// Mixtures louder than this are scaled down together with their sources.
pub const MIXTURE_PEAK_LIMIT: f64 = 0.9;

const NOISE_PARTIALS: usize = 48;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SourceFamily {
    Tone,
    Chirp,
    BandNoise,
    AmTone,
}

impl SourceFamily {
    pub const ALL: [SourceFamily; 4] =
        [SourceFamily::Tone, SourceFamily::Chirp, SourceFamily::BandNoise, SourceFamily::AmTone];

    pub fn name(&self) -> &'static str {
        match self {
            SourceFamily::Tone => "tone",
            SourceFamily::Chirp => "chirp",
            SourceFamily::BandNoise => "band-noise",
            SourceFamily::AmTone => "am-tone",
        }
    }
}

/// Fully parameterized source generator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SourceKind {
    Tone { freq_hz: f64 },
    Chirp { start_hz: f64, end_hz: f64 },
    BandNoise { low_hz: f64, high_hz: f64 },
    AmTone { carrier_hz: f64, mod_hz: f64, depth: f64 },
}

impl SourceKind {
    pub fn family(&self) -> SourceFamily {
        match self {
            SourceKind::Tone { .. } => SourceFamily::Tone,
            SourceKind::Chirp { .. } => SourceFamily::Chirp,
            SourceKind::BandNoise { .. } => SourceFamily::BandNoise,
            SourceKind::AmTone { .. } => SourceFamily::AmTone,
        }
    }

    /// Draws parameters for `family`, kept below `0.45 * sample_rate`.
    pub fn sample(family: SourceFamily, sample_rate: u32, rng: &mut SeededRng) -> Self {
        let top = 0.45 * sample_rate as f64;
        let hz = |rng: &mut SeededRng, lo: f64, hi: f64| rng.uniform_in(lo, hi.min(top));
        match family {
            SourceFamily::Tone => SourceKind::Tone { freq_hz: hz(rng, 200.0, 1800.0) },
            SourceFamily::Chirp => SourceKind::Chirp { start_hz: hz(rng, 200.0, 3400.0), end_hz: hz(rng, 200.0, 3400.0) },
            SourceFamily::BandNoise => {
                let center = hz(rng, 600.0, 3000.0);
                let width = rng.uniform_in(300.0, 1200.0);
                SourceKind::BandNoise { low_hz: (center - width / 2.0).max(50.0), high_hz: (center + width / 2.0).min(top) }
            }
            SourceFamily::AmTone => SourceKind::AmTone {
                carrier_hz: hz(rng, 300.0, 2500.0),
                mod_hz: rng.uniform_in(2.0, 8.0),
                depth: rng.uniform_in(0.5, 0.9),
            },
        }
    }

    pub fn describe(&self) -> String {
        match self {
            SourceKind::Tone { freq_hz } => format!("tone({freq_hz:.1})"),
            SourceKind::Chirp { start_hz, end_hz } => format!("chirp({start_hz:.1}-{end_hz:.1})"),
            SourceKind::BandNoise { low_hz, high_hz } => format!("band-noise({low_hz:.1}-{high_hz:.1})"),
            SourceKind::AmTone { carrier_hz, mod_hz, depth } => format!("am-tone({carrier_hz:.1},{mod_hz:.2},{depth:.2})"),
        }
    }
}

/// Deterministic source of `duration_s` seconds, peak-normalized to
/// [`SOURCE_PEAK`]. `seed` drives the random phases of band noise and the
/// starting phase of modulation.
pub fn synth_source(kind: &SourceKind, duration_s: f64, sample_rate: u32, seed: u64) -> Result<Vec<f64>> {
    if !(duration_s > 0.0) || sample_rate == 0 {
        return Err(invalid!("duration {duration_s} s and sample rate {sample_rate} must be positive"));
    }
    let n = (duration_s * sample_rate as f64).round() as usize;
    if n == 0 {
        return Err(invalid!("duration {duration_s} s is shorter than one sample"));
    }
    let sr = sample_rate as f64;
    let mut rng = SeededRng::new(seed);
    let raw: Vec<f64> = match *kind {
        SourceKind::Tone { freq_hz } => (0..n).map(|i| (2.0 * PI * freq_hz * i as f64 / sr).sin()).collect(),
        SourceKind::Chirp { start_hz, end_hz } => {
            let rate = (end_hz - start_hz) / duration_s;
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    (2.0 * PI * (start_hz * t + 0.5 * rate * t * t)).sin()
                })
                .collect()
        }
        SourceKind::BandNoise { low_hz, high_hz } => {
            let partials: Vec<(f64, f64, f64)> = (0..NOISE_PARTIALS)
                .map(|_| (rng.uniform_in(low_hz, high_hz), rng.uniform_in(0.0, 2.0 * PI), rng.uniform_in(0.5, 1.0)))
                .collect();
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    partials.iter().map(|(f, p, a)| a * (2.0 * PI * f * t + p).sin()).sum()
                })
                .collect()
        }
        SourceKind::AmTone { carrier_hz, mod_hz, depth } => {
            let phase = rng.uniform_in(0.0, 2.0 * PI);
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    (1.0 + depth * (2.0 * PI * mod_hz * t + phase).sin()) * (2.0 * PI * carrier_hz * t).sin()
                })
                .collect()
        }
    };
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Ok(raw);
    }
    let k = SOURCE_PEAK / peak;
    Ok(raw.into_iter().map(|v| v * k).collect())
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// A mixture and the exact references it is the sum of.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixed {
    pub mixture: Vec<f64>,
    pub sources: Vec<Vec<f64>>,
}

/// Scales `b` so that `10 log10(|a|^2 / |b'|^2) = snr_db` and returns
/// `a + b'` together with `a` and `b'`.
pub fn mix(a: &[f64], b: &[f64], snr_db: f64) -> Result<Mixed> {
    if a.len() != b.len() {
        return Err(invalid!("sources differ in length: {} vs {}", a.len(), b.len()));
    }
    let (ea, eb) = (energy(a), energy(b));
    if !(ea > 0.0 && eb > 0.0) {
        return Err(invalid!("both sources need non-zero energy"));
    }
    let gain = (ea / (eb * 10f64.powf(snr_db / 10.0))).sqrt();
    let scaled: Vec<f64> = b.iter().map(|v| v * gain).collect();
    let mixture = a.iter().zip(&scaled).map(|(x, y)| x + y).collect();
    Ok(Mixed { mixture, sources: alloc::vec![a.to_vec(), scaled] })
}

/// Ranges for random mixture recipes.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SynthConfig {
    pub sample_rate: u32,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { sample_rate: 8000, min_duration_s: 1.5, max_duration_s: 2.5, snr_min_db: 0.0, snr_max_db: 5.0 }
    }
}

/// Everything needed to regenerate one mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureRecipe {
    pub seed: u64,
    pub kinds: [SourceKind; 2],
    pub snr_db: f64,
    pub duration_s: f64,
}

impl MixtureRecipe {
    /// Draws two distinct families (random order), their parameters, the SNR
    /// and the duration from `seed`.
    pub fn sample(seed: u64, cfg: &SynthConfig) -> Self {
        let mut rng = SeededRng::new(seed);
        let first = rng.below(4);
        let second = (first + 1 + rng.below(3)) % 4;
        let kinds = [
            SourceKind::sample(SourceFamily::ALL[first], cfg.sample_rate, &mut rng),
            SourceKind::sample(SourceFamily::ALL[second], cfg.sample_rate, &mut rng),
        ];
        let snr_db = rng.uniform_in(cfg.snr_min_db, cfg.snr_max_db);
        let duration_s = rng.uniform_in(cfg.min_duration_s, cfg.max_duration_s);
        Self { seed, kinds, snr_db, duration_s }
    }

    /// `"<family>+<family>"`, used as the evaluation condition.
    pub fn condition(&self) -> String {
        format!("{}+{}", self.kinds[0].family().name(), self.kinds[1].family().name())
    }

    /// Synthesizes, mixes at `snr_db`, and jointly rescales if the mixture
    /// peak exceeds [`MIXTURE_PEAK_LIMIT`].
    pub fn generate(&self, sample_rate: u32) -> Result<Mixed> {
        let a = synth_source(&self.kinds[0], self.duration_s, sample_rate, derive_seed(self.seed, &[1]))?;
        let b = synth_source(&self.kinds[1], self.duration_s, sample_rate, derive_seed(self.seed, &[2]))?;
        let mut mixed = mix(&a, &b, self.snr_db)?;
        let peak = mixed.mixture.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > MIXTURE_PEAK_LIMIT {
            let k = MIXTURE_PEAK_LIMIT / peak;
            for s in &mut mixed.sources {
                s.iter_mut().for_each(|v| *v *= k);
            }
            mixed.mixture = mixed.sources[0].iter().zip(&mixed.sources[1]).map(|(x, y)| x + y).collect();
        }
        Ok(mixed)
    }
}
