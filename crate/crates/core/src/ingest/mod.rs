//! Transaction stream ingestion.
//!
//! The canonical stream file is line-oriented ASCII:
//!
//! ```text
//! TANv1 <n>
//! <output_count>|<p1>,<p2>,...[|<raw_input_count>]
//! ```
//!
//! Line `i` after the header describes transaction `i`. Parents are ids of
//! earlier lines. Repeated parents are allowed on input (one entry per spent
//! UTXO); the canonical writer emits distinct parents in ascending order and
//! appends the raw input count only when it differs from the parent count.

mod convert;
mod synth;

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

use crate::tan::{TxId, TxRecord};

pub use convert::{convert_external, write_id_map, Converted};
pub use synth::{generate_synthetic, inject_double_spends, SynthConfig};

pub const STREAM_MAGIC: &str = "TANv1";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("bad stream header: {0}")]
    BadHeader(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: parent {parent} does not precede transaction {tx}")]
    ForwardReference { line: usize, tx: TxId, parent: TxId },
    #[error("header announces {expected} transactions, file holds {got}")]
    Truncated { expected: usize, got: usize },
    #[error("duplicate transaction hash `{0}`")]
    DuplicateHash(String),
    #[error("invalid synthetic config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// In-memory stream file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StreamFile {
    pub records: Vec<TxRecord>,
}

impl StreamFile {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write<W: Write>(&self, w: W) -> io::Result<()> {
        write_stream(w, &self.records)
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, IngestError> {
        Ok(StreamFile {
            records: StreamReader::new(r)?.collect::<Result<_, _>>()?,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IngestError> {
        Self::read(BufReader::new(File::open(path)?))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut w = io::BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()
    }
}

pub fn write_stream<W: Write>(mut w: W, records: &[TxRecord]) -> io::Result<()> {
    writeln!(w, "{STREAM_MAGIC} {}", records.len())?;
    let mut line = String::new();
    for r in records {
        line.clear();
        line.push_str(&r.output_count.to_string());
        line.push('|');
        for (i, p) in r.inputs.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&p.0.to_string());
        }
        if r.input_count_raw as usize != r.inputs.len() {
            line.push('|');
            line.push_str(&r.input_count_raw.to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Streaming parser over a canonical stream file.
pub struct StreamReader<R> {
    reader: R,
    expected: usize,
    next: usize,
    line: usize,
    buf: String,
    done: bool,
}

impl<R: BufRead> StreamReader<R> {
    pub fn new(mut reader: R) -> Result<Self, IngestError> {
        let mut header = String::new();
        reader.read_line(&mut header)?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(STREAM_MAGIC) {
            return Err(IngestError::BadHeader(format!(
                "expected `{STREAM_MAGIC} <n>`, got `{}`",
                header.trim_end()
            )));
        }
        let expected = parts
            .next()
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| IngestError::BadHeader("missing transaction count".into()))?;
        if parts.next().is_some() {
            return Err(IngestError::BadHeader("trailing header fields".into()));
        }
        Ok(StreamReader {
            reader,
            expected,
            next: 0,
            line: 1,
            buf: String::new(),
            done: false,
        })
    }

    /// Transaction count announced by the header.
    pub fn expected_len(&self) -> usize {
        self.expected
    }

    fn parse_line(&self, text: &str) -> Result<TxRecord, IngestError> {
        let line = self.line;
        let err = |msg: String| IngestError::Parse { line, msg };
        let tx = TxId::from_index(self.next);
        let mut fields = text.split('|');
        let outputs = fields.next().unwrap_or_default();
        let parents = fields
            .next()
            .ok_or_else(|| err("missing `|` separator".into()))?;
        let raw = fields.next();
        if fields.next().is_some() {
            return Err(err("too many `|` fields".into()));
        }
        let output_count: u32 = outputs
            .parse()
            .map_err(|_| err(format!("bad output count `{outputs}`")))?;
        let mut spent = Vec::new();
        if !parents.is_empty() {
            for p in parents.split(',') {
                let id: u32 = p.parse().map_err(|_| err(format!("bad parent id `{p}`")))?;
                let parent = TxId(id);
                if parent >= tx {
                    return Err(IngestError::ForwardReference { line, tx, parent });
                }
                spent.push(parent);
            }
        }
        let mut record = TxRecord::new(tx, spent, output_count);
        if let Some(raw) = raw {
            let raw: u32 = raw
                .parse()
                .map_err(|_| err(format!("bad raw input count `{raw}`")))?;
            if (raw as usize) < record.inputs.len() {
                return Err(err("raw input count below parent count".into()));
            }
            record.input_count_raw = raw;
        }
        Ok(record)
    }
}

impl<R: BufRead> Iterator for StreamReader<R> {
    type Item = Result<TxRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        self.buf.clear();
        match self.reader.read_line(&mut self.buf) {
            Err(e) => {
                self.done = true;
                Some(Err(e.into()))
            }
            Ok(0) => {
                self.done = true;
                (self.next != self.expected).then(|| {
                    Err(IngestError::Truncated {
                        expected: self.expected,
                        got: self.next,
                    })
                })
            }
            Ok(_) => {
                self.line += 1;
                let text = self.buf.trim_end_matches(['\n', '\r']).to_owned();
                if self.next >= self.expected {
                    self.done = true;
                    return Some(Err(IngestError::Truncated {
                        expected: self.expected,
                        got: self.next + 1,
                    }));
                }
                let result = self.parse_line(&text);
                match result {
                    Ok(r) => {
                        self.next += 1;
                        Some(Ok(r))
                    }
                    Err(e) => {
                        self.done = true;
                        Some(Err(e))
                    }
                }
            }
        }
    }
}

pub fn parse_stream(path: impl AsRef<Path>) -> Result<StreamReader<BufReader<File>>, IngestError> {
    StreamReader::new(BufReader::new(File::open(path)?))
}
