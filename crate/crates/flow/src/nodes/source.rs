use std::path::Path;

use noetic_core::io::csv_import::read_csv_file;
use noetic_core::io::{read_recording, synth_recording, Recording, SynthSpec};

use super::{err, Ctx, Node, NodeResult, Params};
use crate::value::{StreamChunk, StreamInfo, Value};

/// Sources forward whatever the engine injects.
pub struct Passthrough;

impl Node for Passthrough {
    fn process(&mut self, _ctx: &mut Ctx<'_>, mut inputs: Vec<Value>) -> NodeResult<Option<Value>> {
        Ok(inputs.pop())
    }
}

/// Loads the recording a file or synthetic source produces.
pub fn load_source(kind: &str, params: &Params<'_>) -> NodeResult<Recording> {
    match kind {
        "source.replay" => {
            let path: String = params.need("path")?;
            if path.to_ascii_lowercase().ends_with(".csv") {
                let fs: f64 = params.parse("fs")?.ok_or("CSV replay needs param 'fs'")?;
                let block = read_csv_file(Path::new(&path), fs).map_err(err)?;
                Ok(Recording { block, markers: Vec::new(), subject_tag: String::new() })
            } else {
                read_recording(Path::new(&path)).map_err(err)
            }
        }
        "source.synth" => {
            let spec: SynthSpec = params.need("spec")?;
            let (block, markers) = synth_recording(&spec).map_err(err)?;
            Ok(Recording { block, markers, subject_tag: format!("synth-{}", spec.seed) })
        }
        "source.stream" => Err("source.stream has no file to load; supply a recording or live frames".into()),
        other => Err(format!("'{other}' is not a source")),
    }
}

/// The whole recording as one chunk.
pub fn recording_chunk(rec: &Recording) -> StreamChunk {
    StreamChunk {
        info: StreamInfo {
            fs: rec.block.fs,
            channels: rec.block.channels.clone(),
            start_time: rec.block.t0,
            subject_tag: rec.subject_tag.clone(),
        },
        start_index: 0,
        samples: rec.block.samples.clone(),
        markers: rec.markers.clone(),
    }
}
