//! Recording files, the streaming wire protocol, CSV import and the
//! synthetic EEG generator.

pub mod csv_import;
pub mod recording;
pub mod synth;
pub mod wire;

pub use recording::{
    decode_markers_jsonl, decode_recording, encode_markers_jsonl, encode_recording, read_recording, write_atomic,
    write_recording, Recording, RecordingHeader,
};
pub use synth::{synth_recording, BlinkSpec, ErpSource, NoiseSpec, SsvepSource, SynthSpec};
pub use wire::{decode_frame, decode_stream, encode_frame, recording_to_frames, DataFrame, FrameDecoder, WireFrame};
