//! `.neeg` recording container.
//!
//! Layout (all multi-byte values little-endian):
//!
//! ```text
//! "NEEG"                      4-byte magic
//! header JSON                 UTF-8, keys sorted, no trailing newline
//! "\n\0"                      sentinel
//! samples                     n_samples * n_channels f32, time-major interleaved
//! markers                     JSON lines, one {"class_id"?, "label", "t"} per line
//! ```
//!
//! The header records `n_samples` so the sample section can be located and
//! checked for truncation without scanning.

use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::{validate_channels, ChannelInfo, Marker, SignalBlock};

pub const MAGIC: &[u8; 4] = b"NEEG";
pub const FORMAT_VERSION: u32 = 1;
pub const SENTINEL: &[u8; 2] = b"\n\0";
pub const UNIT: &str = "microvolt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingHeader {
    pub format_version: u32,
    pub fs: f64,
    pub channels: Vec<ChannelInfo>,
    pub unit: String,
    pub start_time: f64,
    #[serde(default)]
    pub subject_tag: String,
    #[serde(default)]
    pub n_samples: u64,
}

impl RecordingHeader {
    pub fn for_block(rec: &SignalBlock, subject_tag: impl Into<String>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            fs: rec.fs,
            channels: rec.channels.clone(),
            unit: UNIT.to_string(),
            start_time: rec.t0,
            subject_tag: subject_tag.into(),
            n_samples: rec.len() as u64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {}", self.format_version)));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(Error::Format(format!("fs must be > 0, got {}", self.fs)));
        }
        if self.channels.is_empty() {
            return Err(Error::Format("header lists no channels".into()));
        }
        if self.unit != UNIT {
            return Err(Error::Format(format!("unit must be '{UNIT}', got '{}'", self.unit)));
        }
        validate_channels(&self.channels).map_err(|e| Error::Format(e.to_string()))
    }

    /// Canonical JSON: keys sorted, compact.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("header serializes");
        serde_json::to_string(&value).expect("value serializes")
    }
}

/// A recording plus its markers and subject tag.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub block: SignalBlock,
    pub markers: Vec<Marker>,
    pub subject_tag: String,
}

pub fn marker_line(m: &Marker) -> String {
    let value = serde_json::to_value(m).expect("marker serializes");
    serde_json::to_string(&value).expect("value serializes")
}

pub fn encode_recording(rec: &SignalBlock, markers: &[Marker], subject_tag: &str) -> Result<Vec<u8>> {
    rec.validate()?;
    let header = RecordingHeader::for_block(rec, subject_tag);
    header.validate()?;
    let json = header.to_canonical_json();
    let mut out = Vec::with_capacity(json.len() + 8 + rec.len() * rec.n_channels() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(json.as_bytes());
    out.extend_from_slice(SENTINEL);
    for k in 0..rec.len() {
        for row in &rec.samples {
            out.extend_from_slice(&(row[k] as f32).to_le_bytes());
        }
    }
    for m in markers {
        if !m.t.is_finite() {
            return Err(Error::Format(format!("marker '{}' has non-finite time", m.label)));
        }
        out.extend_from_slice(marker_line(m).as_bytes());
        out.push(b'\n');
    }
    Ok(out)
}

pub fn decode_recording(bytes: &[u8]) -> Result<Recording> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic, not a .neeg file".into()));
    }
    let body = &bytes[4..];
    let end = body
        .windows(2)
        .position(|w| w == SENTINEL)
        .ok_or_else(|| Error::Corruption { offset: bytes.len() as u64, reason: "header sentinel not found".into() })?;
    let header: RecordingHeader = serde_json::from_slice(&body[..end])
        .map_err(|e| Error::Format(format!("header JSON: {e}")))?;
    header.validate()?;

    let data_start = 4 + end + 2;
    let c = header.channels.len();
    let n = header.n_samples as usize;
    let data_len = n
        .checked_mul(c)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::Format("sample section size overflows".into()))?;
    let data_end = data_start + data_len;
    if bytes.len() < data_end {
        let whole = (bytes.len() - data_start) / 4 * 4;
        return Err(Error::Corruption {
            offset: (data_start + whole) as u64,
            reason: format!("sample section truncated: expected {data_len} bytes, found {}", bytes.len() - data_start),
        });
    }
    let values: Vec<f64> = bytes[data_start..data_end]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let block = SignalBlock::from_interleaved(&values, header.fs, header.start_time, header.channels.clone())?;

    let mut markers = Vec::new();
    let mut offset = data_end;
    for line in bytes[data_end..].split(|&b| b == b'\n') {
        let line_len = line.len() + 1;
        if !line.is_empty() {
            let m: Marker = serde_json::from_slice(line).map_err(|e| Error::Corruption {
                offset: offset as u64,
                reason: format!("marker line: {e}"),
            })?;
            markers.push(m);
        }
        offset += line_len;
    }
    Ok(Recording { block, markers, subject_tag: header.subject_tag })
}

/// Writes via a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let mut builder = tempfile::Builder::new();
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        builder.permissions(std::fs::Permissions::from_mode(0o644));
    }
    let mut tmp = builder.tempfile_in(&dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

pub fn write_recording(rec: &SignalBlock, markers: &[Marker], subject_tag: &str, path: &Path) -> Result<()> {
    let bytes = encode_recording(rec, markers, subject_tag)?;
    write_atomic(path, &bytes)
}

pub fn read_recording(path: &Path) -> Result<Recording> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    decode_recording(&bytes)
}

/// Markers as JSON lines.
pub fn encode_markers_jsonl(markers: &[Marker]) -> String {
    markers.iter().map(|m| marker_line(m) + "\n").collect()
}

pub fn decode_markers_jsonl(text: &str) -> Result<Vec<Marker>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Format(format!("marker line {}: {e}", i + 1))))
        .collect()
}
