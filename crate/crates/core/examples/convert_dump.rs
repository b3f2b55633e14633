//! Converts a `tx_hash,inputs,output_count` dump into the canonical stream
//! format and prints both.

use optchain::ingest::convert_external;

const DUMP: &str = "\
tx_hash,inputs,output_count
a1,,2
b2,,1
c3,a1;b2,2
d4,a1;c3;c3,1
e5,c3;ffff,1
";

fn main() -> Result<(), optchain::Error> {
    let converted = convert_external(DUMP.as_bytes())?;
    let mut out = Vec::new();
    converted.stream.write(&mut out)?;
    print!("{}", String::from_utf8_lossy(&out));
    println!("dangling inputs dropped: {}", converted.dangling_inputs);
    for (id, hash) in converted.hashes.iter().enumerate() {
        println!("  {hash} -> {id}");
    }
    Ok(())
}
