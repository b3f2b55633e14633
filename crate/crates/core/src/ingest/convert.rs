//! Importer for hash-keyed transaction dumps.
//!
//! Input CSV rows are `tx_hash,input_hashes,output_count`, where
//! `input_hashes` is a semicolon-joined list with one entry per spent UTXO.
//! A leading `tx_hash,...` header row is skipped. Inputs that do not resolve
//! to an earlier row keep the transaction but drop the edge.

use std::collections::HashMap;
use std::io::{Read, Write};

use super::{IngestError, StreamFile};
use crate::tan::{TxId, TxRecord};

#[derive(Debug, Clone, Default)]
pub struct Converted {
    pub stream: StreamFile,
    /// `hashes[i]` is the original hash of transaction `i`.
    pub hashes: Vec<String>,
    /// Inputs that referenced no earlier transaction.
    pub dangling_inputs: u64,
}

pub fn convert_external<R: Read>(reader: R) -> Result<Converted, IngestError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut ids: HashMap<String, TxId> = HashMap::new();
    let mut out = Converted::default();
    for (row, result) in csv.records().enumerate() {
        let rec = result?;
        let line = row + 1;
        let hash = rec.get(0).unwrap_or_default();
        if row == 0 && hash.eq_ignore_ascii_case("tx_hash") {
            continue;
        }
        if rec.len() != 3 {
            return Err(IngestError::Parse {
                line,
                msg: format!("expected 3 fields, got {}", rec.len()),
            });
        }
        let outputs: u32 = rec[2].parse().map_err(|_| IngestError::Parse {
            line,
            msg: format!("bad output count `{}`", &rec[2]),
        })?;
        let id = TxId::from_index(out.hashes.len());
        let mut spent = Vec::new();
        let mut raw = 0u32;
        for input in rec[1].split(';').map(str::trim).filter(|s| !s.is_empty()) {
            raw += 1;
            match ids.get(input) {
                Some(&parent) => spent.push(parent),
                None => out.dangling_inputs += 1,
            }
        }
        if ids.insert(hash.to_owned(), id).is_some() {
            return Err(IngestError::DuplicateHash(hash.to_owned()));
        }
        let mut record = TxRecord::new(id, spent, outputs);
        record.input_count_raw = raw;
        out.stream.records.push(record);
        out.hashes.push(hash.to_owned());
    }
    Ok(out)
}

/// Writes the `tx_hash,id` sidecar.
pub fn write_id_map<W: Write>(w: W, hashes: &[String]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["tx_hash", "id"])?;
    for (i, h) in hashes.iter().enumerate() {
        out.write_record([h.as_str(), &i.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::StreamReader;

    #[test]
    fn toy_dump() {
        let csv = "tx_hash,inputs,output_count\naa,,2\nbb,aa,1\ncc,aa;bb;aa,1\n";
        let c = convert_external(csv.as_bytes()).unwrap();
        assert_eq!(c.hashes, vec!["aa", "bb", "cc"]);
        let rs = &c.stream.records;
        assert!(rs[0].is_coinbase());
        assert_eq!(rs[1].inputs, vec![TxId(0)]);
        assert_eq!(rs[2].inputs, vec![TxId(0), TxId(1)]);
        assert_eq!(rs[2].input_count_raw, 3);
        assert_eq!(c.dangling_inputs, 0);
    }

    #[test]
    fn dangling_input_kept() {
        let c = convert_external("aa,,1\nbb,zz,1\n".as_bytes()).unwrap();
        assert_eq!(c.dangling_inputs, 1);
        assert_eq!(c.stream.len(), 2);
        assert!(c.stream.records[1].is_coinbase());
        assert_eq!(c.stream.records[1].input_count_raw, 1);
    }

    #[test]
    fn duplicate_hash() {
        assert!(matches!(
            convert_external("aa,,1\naa,,1\n".as_bytes()),
            Err(IngestError::DuplicateHash(_))
        ));
    }

    #[test]
    fn converted_output_parses() {
        let c = convert_external("aa,,2\nbb,aa,1\ncc,bb;aa,1\ndd,xx;cc,4\n".as_bytes()).unwrap();
        let mut buf = Vec::new();
        c.stream.write(&mut buf).unwrap();
        let back: Vec<_> = StreamReader::new(buf.as_slice())
            .unwrap()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(back, c.stream.records);

        let mut map = Vec::new();
        write_id_map(&mut map, &c.hashes).unwrap();
        assert!(String::from_utf8(map).unwrap().starts_with("tx_hash,id\naa,0\n"));
    }
}
