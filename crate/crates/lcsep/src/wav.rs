//! Mono RIFF/WAVE files, 16-bit integer PCM or 32-bit IEEE float.

use std::path::Path;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

impl SampleFormat {
    fn tag(self) -> u16 {
        match self {
            SampleFormat::Pcm16 => 1,
            SampleFormat::Float32 => 3,
        }
    }

    fn bytes(self) -> usize {
        match self {
            SampleFormat::Pcm16 => 2,
            SampleFormat::Float32 => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Wav {
    pub sample_rate: u32,
    pub format: SampleFormat,
    /// Samples in [-1, 1); PCM16 values are `k / 32768`.
    pub samples: Vec<f64>,
}

/// Parse failure: byte offset into the file and a description.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeError {
    pub offset: u64,
    pub message: String,
}

fn fail<T>(offset: usize, message: impl Into<String>) -> std::result::Result<T, DecodeError> {
    Err(DecodeError { offset: offset as u64, message: message.into() })
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Wav, DecodeError> {
    if bytes.len() < 12 {
        return fail(bytes.len(), "truncated RIFF header");
    }
    if &bytes[0..4] != b"RIFF" {
        return fail(0, "missing RIFF tag");
    }
    if &bytes[8..12] != b"WAVE" {
        return fail(8, "missing WAVE tag");
    }
    let mut fmt: Option<(SampleFormat, u32)> = None;
    let mut pos = 12;
    while pos < bytes.len() {
        if pos + 8 > bytes.len() {
            return fail(pos, "truncated chunk header");
        }
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        if body + size > bytes.len() {
            return fail(pos + 4, format!("chunk size {size} runs past end of file"));
        }
        match id {
            b"fmt " => {
                if size < 16 {
                    return fail(pos + 4, "fmt chunk shorter than 16 bytes");
                }
                let tag = u16_at(bytes, body);
                let channels = u16_at(bytes, body + 2);
                let rate = u32_at(bytes, body + 4);
                let bits = u16_at(bytes, body + 14);
                let format = match (tag, bits) {
                    (1, 16) => SampleFormat::Pcm16,
                    (3, 32) => SampleFormat::Float32,
                    (1 | 3, _) => return fail(body + 14, format!("unsupported bit depth {bits}")),
                    _ => return fail(body, format!("unsupported format tag {tag}")),
                };
                if channels != 1 {
                    return fail(body + 2, format!("expected mono, found {channels} channels"));
                }
                if rate == 0 {
                    return fail(body + 4, "zero sample rate");
                }
                let align = u16_at(bytes, body + 12) as usize;
                if align != format.bytes() {
                    return fail(body + 12, format!("block align {align} does not match sample size"));
                }
                fmt = Some((format, rate));
            }
            b"data" => {
                let Some((format, sample_rate)) = fmt else {
                    return fail(pos, "data chunk before fmt chunk");
                };
                let width = format.bytes();
                if size % width != 0 {
                    return fail(pos + 4, format!("data size {size} is not a multiple of {width}"));
                }
                let data = &bytes[body..body + size];
                let samples = match format {
                    SampleFormat::Pcm16 => data
                        .chunks_exact(2)
                        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                        .collect(),
                    SampleFormat::Float32 => data
                        .chunks_exact(4)
                        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                        .collect(),
                };
                return Ok(Wav { sample_rate, format, samples });
            }
            _ => {}
        }
        pos = body + size + (size & 1);
    }
    fail(bytes.len(), "no data chunk")
}

/// Converts one sample to 16-bit PCM with rounding and saturation.
pub fn to_pcm16(x: f64) -> i16 {
    (x * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn encode(wav: &Wav) -> Vec<u8> {
    let width = wav.format.bytes();
    let data_len = wav.samples.len() * width;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&wav.format.tag().to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&wav.sample_rate.to_le_bytes());
    out.extend_from_slice(&(wav.sample_rate * width as u32).to_le_bytes());
    out.extend_from_slice(&(width as u16).to_le_bytes());
    out.extend_from_slice(&(8 * width as u16).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &x in &wav.samples {
        match wav.format {
            SampleFormat::Pcm16 => out.extend_from_slice(&to_pcm16(x).to_le_bytes()),
            SampleFormat::Float32 => out.extend_from_slice(&(x as f32).to_le_bytes()),
        }
    }
    out
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Wav> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|e| CliError::format(path, e.offset, e.message))
}

pub fn write_wav(path: impl AsRef<Path>, wav: &Wav) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(wav)).map_err(|e| CliError::io(path, e))
}
