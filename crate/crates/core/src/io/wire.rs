//! Length-prefixed streaming wire protocol.
//!
//! Every frame is `len: u32 LE | kind: u8 | payload`, where `len` counts the
//! kind byte plus the payload. Kinds:
//!
//! | kind | name   | payload |
//! |------|--------|---------|
//! | 0    | header | canonical [`RecordingHeader`] JSON |
//! | 1    | data   | `t0: f64`, `n_channels: u32`, then `f32` samples, time-major interleaved |
//! | 2    | marker | `t: f64`, `has_class: u8`, `class_id: u32`, UTF-8 label |
//! | 3    | end    | empty |
//!
//! A stream is one header frame, then data and marker frames, then an end frame.

use super::recording::RecordingHeader;
use crate::error::{Error, Result};
use crate::signal::{Marker, SignalBlock};

pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;
pub const PREFIX_LEN: usize = 4;

const KIND_HEADER: u8 = 0;
const KIND_DATA: u8 = 1;
const KIND_MARKER: u8 = 2;
const KIND_END: u8 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct DataFrame {
    pub t0: f64,
    pub n_channels: u32,
    /// Time-major interleaved samples.
    pub samples: Vec<f32>,
}

impl DataFrame {
    pub fn n_samples(&self) -> usize {
        if self.n_channels == 0 {
            0
        } else {
            self.samples.len() / self.n_channels as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WireFrame {
    Header(RecordingHeader),
    Data(DataFrame),
    Marker(Marker),
    End,
}

impl WireFrame {
    pub fn kind_name(&self) -> &'static str {
        match self {
            WireFrame::Header(_) => "header",
            WireFrame::Data(_) => "data",
            WireFrame::Marker(_) => "marker",
            WireFrame::End => "end",
        }
    }
}

pub fn encode_frame(frame: &WireFrame) -> Result<Vec<u8>> {
    let mut body = Vec::new();
    match frame {
        WireFrame::Header(h) => {
            body.push(KIND_HEADER);
            body.extend_from_slice(h.to_canonical_json().as_bytes());
        }
        WireFrame::Data(d) => {
            if d.n_channels == 0 || d.samples.len() % d.n_channels as usize != 0 {
                return Err(Error::Protocol(format!(
                    "{} samples are not a whole number of {}-channel vectors",
                    d.samples.len(),
                    d.n_channels
                )));
            }
            body.push(KIND_DATA);
            body.extend_from_slice(&d.t0.to_le_bytes());
            body.extend_from_slice(&d.n_channels.to_le_bytes());
            for v in &d.samples {
                body.extend_from_slice(&v.to_le_bytes());
            }
        }
        WireFrame::Marker(m) => {
            body.push(KIND_MARKER);
            body.extend_from_slice(&m.t.to_le_bytes());
            body.push(m.class_id.is_some() as u8);
            body.extend_from_slice(&m.class_id.unwrap_or(0).to_le_bytes());
            body.extend_from_slice(m.label.as_bytes());
        }
        WireFrame::End => body.push(KIND_END),
    }
    if body.len() > MAX_FRAME_LEN {
        return Err(Error::Protocol(format!("frame of {} bytes exceeds 16 MiB", body.len())));
    }
    let mut out = Vec::with_capacity(PREFIX_LEN + body.len());
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Outcome of attempting to decode one frame from the front of a buffer.
#[derive(Debug, Clone, PartialEq)]
pub enum Decoded {
    Frame(WireFrame, usize),
    /// More bytes are needed; holds the total byte count required, if known.
    Incomplete(Option<usize>),
}

/// Decodes the frame at the start of `bytes`.
pub fn decode_frame_prefix(bytes: &[u8]) -> Result<Decoded> {
    if bytes.len() < PREFIX_LEN {
        return Ok(Decoded::Incomplete(None));
    }
    let len = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    if len > MAX_FRAME_LEN {
        return Err(Error::Protocol(format!("length prefix {len} exceeds 16 MiB")));
    }
    if len == 0 {
        return Err(Error::Protocol("zero-length frame".into()));
    }
    let total = PREFIX_LEN + len;
    if bytes.len() < total {
        return Ok(Decoded::Incomplete(Some(total)));
    }
    let frame = decode_body(bytes[PREFIX_LEN], &bytes[PREFIX_LEN + 1..total])?;
    Ok(Decoded::Frame(frame, total))
}

/// Decodes exactly one complete frame; trailing bytes are an error.
pub fn decode_frame(bytes: &[u8]) -> Result<WireFrame> {
    match decode_frame_prefix(bytes)? {
        Decoded::Frame(f, used) if used == bytes.len() => Ok(f),
        Decoded::Frame(_, used) => Err(Error::Protocol(format!("{} trailing bytes after frame", bytes.len() - used))),
        Decoded::Incomplete(_) => Err(Error::Protocol("truncated frame".into())),
    }
}

/// Splits a complete byte stream into frames.
pub fn decode_stream(mut bytes: &[u8]) -> Result<Vec<WireFrame>> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        match decode_frame_prefix(bytes)? {
            Decoded::Frame(f, used) => {
                out.push(f);
                bytes = &bytes[used..];
            }
            Decoded::Incomplete(_) => return Err(Error::Protocol("truncated frame at end of stream".into())),
        }
    }
    Ok(out)
}

fn decode_body(kind: u8, p: &[u8]) -> Result<WireFrame> {
    match kind {
        KIND_HEADER => {
            let h: RecordingHeader =
                serde_json::from_slice(p).map_err(|e| Error::Protocol(format!("header frame JSON: {e}")))?;
            Ok(WireFrame::Header(h))
        }
        KIND_DATA => {
            if p.len() < 12 {
                return Err(Error::Protocol("data frame shorter than its fixed fields".into()));
            }
            let t0 = f64::from_le_bytes(p[0..8].try_into().unwrap());
            let n_channels = u32::from_le_bytes(p[8..12].try_into().unwrap());
            let rest = &p[12..];
            if n_channels == 0 || rest.len() % (4 * n_channels as usize) != 0 {
                return Err(Error::Protocol(format!(
                    "data payload of {} bytes is not whole {n_channels}-channel vectors",
                    rest.len()
                )));
            }
            let samples = rest.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
            Ok(WireFrame::Data(DataFrame { t0, n_channels, samples }))
        }
        KIND_MARKER => {
            if p.len() < 13 {
                return Err(Error::Protocol("marker frame shorter than its fixed fields".into()));
            }
            let t = f64::from_le_bytes(p[0..8].try_into().unwrap());
            let has_class = match p[8] {
                0 => false,
                1 => true,
                b => return Err(Error::Protocol(format!("bad class flag {b}"))),
            };
            let class = u32::from_le_bytes(p[9..13].try_into().unwrap());
            let label = std::str::from_utf8(&p[13..])
                .map_err(|_| Error::Protocol("marker label is not UTF-8".into()))?
                .to_string();
            Ok(WireFrame::Marker(Marker { t, label, class_id: has_class.then_some(class) }))
        }
        KIND_END => {
            if !p.is_empty() {
                return Err(Error::Protocol("end frame carries a payload".into()));
            }
            Ok(WireFrame::End)
        }
        k => Err(Error::Protocol(format!("unknown frame kind {k}"))),
    }
}

/// Incremental decoder for byte streams arriving in arbitrary chunks.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete frame, if any.
    pub fn next_frame(&mut self) -> Result<Option<WireFrame>> {
        match decode_frame_prefix(&self.buf)? {
            Decoded::Frame(f, used) => {
                self.buf.drain(..used);
                Ok(Some(f))
            }
            Decoded::Incomplete(_) => Ok(None),
        }
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

/// Converts a recording into a frame stream: header, data frames of
/// `samples_per_frame`, markers placed after the first data frame whose end
/// time passes them, then end.
pub fn recording_to_frames(
    rec: &SignalBlock,
    markers: &[Marker],
    subject_tag: &str,
    samples_per_frame: usize,
) -> Vec<WireFrame> {
    let spf = samples_per_frame.max(1);
    let mut frames = vec![WireFrame::Header(RecordingHeader::for_block(rec, subject_tag))];
    let mut sorted = markers.to_vec();
    crate::signal::sort_markers(&mut sorted);
    let mut next_marker = 0;
    let c = rec.n_channels();
    let mut start = 0;
    while start < rec.len() {
        let end = (start + spf).min(rec.len());
        let mut samples = Vec::with_capacity((end - start) * c);
        for k in start..end {
            for row in &rec.samples {
                samples.push(row[k] as f32);
            }
        }
        frames.push(WireFrame::Data(DataFrame { t0: rec.time_of(start), n_channels: c as u32, samples }));
        let frame_end_t = rec.time_of(end);
        while next_marker < sorted.len() && sorted[next_marker].t < frame_end_t {
            frames.push(WireFrame::Marker(sorted[next_marker].clone()));
            next_marker += 1;
        }
        start = end;
    }
    frames.extend(sorted[next_marker..].iter().cloned().map(WireFrame::Marker));
    frames.push(WireFrame::End);
    frames
}
