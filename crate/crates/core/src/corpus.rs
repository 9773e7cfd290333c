//! Instruction datasets: loading, addressing and subset export.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{LcgError, Result};

/// One instruction/input/output triple. `id` is the record's position in the
/// source file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: usize,
    pub instruction: String,
    pub input: String,
    pub output: String,
}

impl InstructionRecord {
    /// The text that gets embedded and tokenized: instruction, a space, input.
    pub fn prompt_text(&self) -> String {
        format!("{} {}", self.instruction, self.input)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    JsonArray,
}

impl FromStr for Format {
    type Err = LcgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(Format::Jsonl),
            "json-array" | "json" => Ok(Format::JsonArray),
            other => Err(LcgError::param(
                "format",
                format!("unknown format {other:?} (expected jsonl or json-array)"),
            )),
        }
    }
}

/// A loaded dataset. Immutable after load.
#[derive(Debug, Clone)]
pub struct Dataset {
    records: Vec<InstructionRecord>,
    source_digest: [u8; 32],
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

impl Dataset {
    /// Builds a dataset from in-memory records. Ids are reassigned by position
    /// and the digest is computed over the JSONL serialization.
    pub fn from_records<I, S>(items: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, S, S)>,
        S: Into<String>,
    {
        let records: Vec<InstructionRecord> = items
            .into_iter()
            .enumerate()
            .map(|(id, (instruction, input, output))| InstructionRecord {
                id,
                instruction: instruction.into(),
                input: input.into(),
                output: output.into(),
            })
            .collect();
        if records.is_empty() {
            return Err(LcgError::Data("dataset is empty".into()));
        }
        for r in &records {
            if r.instruction.trim().is_empty() {
                return Err(LcgError::Data(format!("record {}: empty instruction", r.id)));
            }
        }
        let bytes = to_jsonl_bytes(records.iter());
        Ok(Dataset {
            records,
            source_digest: sha256(&bytes),
        })
    }

    pub fn records(&self) -> &[InstructionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&InstructionRecord> {
        self.records.get(id)
    }

    pub fn source_digest(&self) -> &[u8; 32] {
        &self.source_digest
    }
}

fn record_from_value(value: &Value, id: usize) -> std::result::Result<InstructionRecord, String> {
    let obj = value.as_object().ok_or("expected a JSON object")?;
    let field = |key: &str, required: bool| -> std::result::Result<String, String> {
        match obj.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Null) | None if !required => Ok(String::new()),
            None | Some(Value::Null) => Err(format!("missing \"{key}\" field")),
            Some(_) => Err(format!("\"{key}\" must be a string")),
        }
    };
    let instruction = field("instruction", true)?;
    if instruction.trim().is_empty() {
        return Err("\"instruction\" is empty".into());
    }
    Ok(InstructionRecord {
        id,
        instruction,
        input: field("input", false)?,
        output: field("output", false)?,
    })
}

/// Loads a dataset. JSONL errors cite 1-based line numbers; JSON-array errors
/// cite 0-based record indices. Whitespace-only JSONL lines are skipped.
pub fn load_dataset(path: impl AsRef<Path>, format: Format) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| LcgError::io(path, e))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| LcgError::Format {
        path: path.into(),
        reason: format!("not valid UTF-8: {e}"),
    })?;

    let mut records = Vec::new();
    match format {
        Format::Jsonl => {
            for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
                if line.trim().is_empty() {
                    continue;
                }
                let value: Value = serde_json::from_str(line).map_err(|e| LcgError::Parse {
                    path: path.into(),
                    line: lineno,
                    reason: e.to_string(),
                })?;
                let record =
                    record_from_value(&value, records.len()).map_err(|reason| LcgError::Parse {
                        path: path.into(),
                        line: lineno,
                        reason,
                    })?;
                records.push(record);
            }
        }
        Format::JsonArray => {
            let value: Value = serde_json::from_str(text).map_err(|e| LcgError::Parse {
                path: path.into(),
                line: e.line(),
                reason: e.to_string(),
            })?;
            let items = value.as_array().ok_or_else(|| LcgError::Format {
                path: path.into(),
                reason: "expected a top-level JSON array".into(),
            })?;
            for (index, item) in items.iter().enumerate() {
                let record = record_from_value(item, index).map_err(|reason| LcgError::Record {
                    path: path.into(),
                    index,
                    reason,
                })?;
                records.push(record);
            }
        }
    }

    if records.is_empty() {
        return Err(LcgError::Format {
            path: path.into(),
            reason: "dataset contains no records".into(),
        });
    }
    Ok(Dataset {
        records,
        source_digest: sha256(&bytes),
    })
}

#[derive(Serialize)]
struct SubsetLine<'a> {
    instruction: &'a str,
    input: &'a str,
    output: &'a str,
}

fn to_jsonl_bytes<'a>(records: impl Iterator<Item = &'a InstructionRecord>) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(
            &mut out,
            &SubsetLine {
                instruction: &r.instruction,
                input: &r.input,
                output: &r.output,
            },
        )
        .expect("serializing strings cannot fail");
        out.push(b'\n');
    }
    out
}

/// Writes the selected records as JSONL in ascending id order.
pub fn write_subset(dataset: &Dataset, ids: &BTreeSet<usize>, path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    if let Some(&bad) = ids.iter().find(|&&id| id >= dataset.len()) {
        return Err(LcgError::Data(format!(
            "unknown record id {bad} (dataset has {} records)",
            dataset.len()
        )));
    }
    let bytes = to_jsonl_bytes(ids.iter().map(|&id| &dataset.records[id]));
    let file = fs::File::create(path).map_err(|e| LcgError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| LcgError::io(path, e))?;
    Ok(ids.len())
}
