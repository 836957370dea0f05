//! Normalized dataset file: JSONL, one conversation record per line, with a
//! version header line.
//!
//! Line 1 is the header `{"schema":"normalized-conversations","version":1}`;
//! every following line is one serialized [`DatasetEntry`].

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Dataset, DatasetEntry};

pub const NORMALIZED_SCHEMA_VERSION: u32 = 1;
const SCHEMA_NAME: &str = "normalized-conversations";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
}

/// Writes the dataset in normalized JSONL form.
pub fn write_normalized(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header = Header {
        schema: SCHEMA_NAME.into(),
        version: NORMALIZED_SCHEMA_VERSION,
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for entry in &dataset.entries {
        serde_json::to_writer(&mut out, entry)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a normalized JSONL dataset, checking the version header.
pub fn read_normalized(path: &Path) -> Result<Dataset> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Parse {
            context: path.display().to_string(),
            message: "empty file, missing header".into(),
        })??;
    let header: Header = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        message: format!("bad header: {e}"),
    })?;
    if header.schema != SCHEMA_NAME {
        return Err(Error::Parse {
            context: path.display().to_string(),
            message: format!("unexpected schema {:?}", header.schema),
        });
    }
    if header.version != NORMALIZED_SCHEMA_VERSION {
        return Err(Error::VersionMismatch {
            found: header.version,
            expected: NORMALIZED_SCHEMA_VERSION,
        });
    }
    let mut entries = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: DatasetEntry = serde_json::from_str(&line).map_err(|e| Error::Parse {
            context: format!("{} line {}", path.display(), n + 2),
            message: e.to_string(),
        })?;
        entries.push(entry);
    }
    let dataset = Dataset { entries };
    dataset.validate()?;
    Ok(dataset)
}
