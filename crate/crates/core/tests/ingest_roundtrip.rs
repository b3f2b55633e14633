mod common;

use std::io::Cursor;

use optchain::ingest::{convert_external, write_stream, IngestError, StreamReader};
use optchain::StreamFile;
use proptest::prelude::*;

fn read_back(bytes: &[u8]) -> Result<StreamFile, IngestError> {
    StreamFile::read(Cursor::new(bytes))
}

proptest! {
    #[test]
    fn stream_round_trip(records in common::stream(200)) {
        let mut buf = Vec::new();
        write_stream(&mut buf, &records).unwrap();
        let back = read_back(&buf).unwrap();
        prop_assert_eq!(back.records, records);
    }

    #[test]
    fn csv_dump_matches_stream(records in common::stream(100)) {
        let mut csv = String::from("tx_hash,inputs,output_count\n");
        for r in &records {
            let parents: Vec<String> = r.inputs.iter().map(|p| format!("h{}", p.0)).collect();
            csv.push_str(&format!("h{},{},{}\n", r.id.0, parents.join(";"), r.output_count));
        }
        let conv = convert_external(csv.as_bytes()).unwrap();
        prop_assert_eq!(conv.dangling_inputs, 0);
        prop_assert_eq!(conv.hashes.len(), records.len());
        for (a, b) in conv.stream.records.iter().zip(&records) {
            prop_assert_eq!(&a.inputs, &b.inputs);
            prop_assert_eq!(a.output_count, b.output_count);
        }
    }
}

#[test]
fn raw_count_survives() {
    let text = "TANv1 3\n2|\n1|0|3\n1|0,1\n";
    let s = read_back(text.as_bytes()).unwrap();
    assert_eq!(s.records[1].input_count_raw, 3);
    assert_eq!(s.records[1].inputs.len(), 1);
    let mut buf = Vec::new();
    s.write(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), text);
}

#[test]
fn malformed_streams() {
    let cases: &[(&str, fn(&IngestError) -> bool)] = &[
        ("TANv2 1\n1|\n", |e| matches!(e, IngestError::BadHeader(_))),
        ("TANv1\n", |e| matches!(e, IngestError::BadHeader(_))),
        ("TANv1 2\n1|\n", |e| matches!(e, IngestError::Truncated { expected: 2, got: 1 })),
        ("TANv1 1\n1|\n1|0\n", |e| matches!(e, IngestError::Truncated { .. })),
        ("TANv1 2\n1|1\n1|\n", |e| matches!(e, IngestError::ForwardReference { line: 2, .. })),
        ("TANv1 1\nx|\n", |e| matches!(e, IngestError::Parse { line: 2, .. })),
        ("TANv1 1\n1\n", |e| matches!(e, IngestError::Parse { .. })),
        ("TANv1 2\n1|\n1|0|0\n", |e| matches!(e, IngestError::Parse { line: 3, .. })),
    ];
    for (text, check) in cases {
        let err = read_back(text.as_bytes()).unwrap_err();
        assert!(check(&err), "{text:?} gave {err:?}");
    }
}

#[test]
fn reader_streams_lazily() {
    // The second line is broken; the first record still comes through.
    let mut r = StreamReader::new(Cursor::new("TANv1 2\n1|\nbad\n")).unwrap();
    assert_eq!(r.expected_len(), 2);
    assert!(r.next().unwrap().is_ok());
    assert!(r.next().unwrap().is_err());
    assert!(r.next().is_none());
}

#[test]
fn converter_edge_cases() {
    let dup = "a,,1\na,,1\n";
    assert!(matches!(convert_external(dup.as_bytes()), Err(IngestError::DuplicateHash(_))));
    let dangling = "a,zz,1\nb,a;a;yy,2\n";
    let conv = convert_external(dangling.as_bytes()).unwrap();
    assert_eq!(conv.dangling_inputs, 2);
    assert!(conv.stream.records[0].is_coinbase());
    assert_eq!(conv.stream.records[1].input_count_raw, 3);
    assert_eq!(conv.stream.records[1].inputs.len(), 1);
    assert!(convert_external("a,,1,9\n".as_bytes()).is_err());
}
