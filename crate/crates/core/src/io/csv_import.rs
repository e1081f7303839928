//! CSV import: header row of channel names, one row of samples per tick.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::signal::{ChannelInfo, SignalBlock};

pub fn read_csv<R: Read>(reader: R, fs: f64) -> Result<SignalBlock> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Format(format!("csv header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let channels: Vec<ChannelInfo> = names.into_iter().enumerate().map(|(i, n)| ChannelInfo::eeg(n, i)).collect();
    let mut samples = vec![Vec::new(); channels.len()];
    for (line, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("csv row {}: {e}", line + 2)))?;
        if record.len() != channels.len() {
            return Err(Error::Format(format!(
                "csv row {} has {} fields, expected {}",
                line + 2,
                record.len(),
                channels.len()
            )));
        }
        for (row, field) in samples.iter_mut().zip(record.iter()) {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Format(format!("csv row {}: '{field}' is not a number", line + 2)))?;
            row.push(v);
        }
    }
    SignalBlock::new(samples, fs, 0.0, channels)
}

pub fn read_csv_file(path: &Path, fs: f64) -> Result<SignalBlock> {
    let f = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_csv(f, fs)
}
