//! JSON-lines dataset files.
//!
//! The first line is a header `{"cpl_dataset": 1, "world": {...}, "seed": s, "n": n}`;
//! every following line is one [`PreferenceExample`]. Files without the header
//! are accepted as imported embeddings; their latents, if any, are ignored by
//! ground-truth checks.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetHeader, PreferenceExample, WorldConfig};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    cpl_dataset: u32,
    world: WorldConfig,
    seed: u64,
    n: usize,
}

pub fn write_jsonl<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    let header = HeaderLine {
        cpl_dataset: FORMAT_VERSION,
        world: dataset.header.world.clone(),
        seed: dataset.header.seed,
        n: dataset.len(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for ex in &dataset.examples {
        serde_json::to_writer(&mut out, ex)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Dataset> {
    let mut header: Option<DatasetHeader> = None;
    let mut declared_n = None;
    let mut examples = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if lineno == 0 {
            let value: serde_json::Value = serde_json::from_str(&line)
                .map_err(|e| Error::format("dataset", format!("line 1: {e}")))?;
            if value.get("cpl_dataset").is_some() {
                let h: HeaderLine = serde_json::from_value(value)
                    .map_err(|e| Error::format("dataset", format!("header: {e}")))?;
                if h.cpl_dataset != FORMAT_VERSION {
                    return Err(Error::format(
                        "dataset",
                        format!("unsupported format version {}", h.cpl_dataset),
                    ));
                }
                header = Some(DatasetHeader {
                    world: h.world,
                    seed: h.seed,
                });
                declared_n = Some(h.n);
                continue;
            }
        }
        let ex: PreferenceExample = serde_json::from_str(&line)
            .map_err(|e| Error::format("dataset", format!("line {}: {e}", lineno + 1)))?;
        examples.push(ex);
    }
    if let Some(n) = declared_n {
        if n != examples.len() {
            return Err(Error::format(
                "dataset",
                format!("header declares {n} examples, file has {}", examples.len()),
            ));
        }
    }
    let header = match header {
        Some(h) => h,
        None => {
            let dim = examples
                .first()
                .map(|e| e.e.len())
                .ok_or_else(|| Error::Empty("imported dataset has no records".into()))?;
            DatasetHeader {
                world: WorldConfig::Imported { dim },
                seed: 0,
            }
        }
    };
    let dataset = Dataset { header, examples };
    dataset.validate()?;
    Ok(dataset)
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    write_jsonl(dataset, file)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_jsonl(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worlds::sample_confounded_world;

    #[test]
    fn round_trip_is_exact() {
        let d = sample_confounded_world(20, 0.8, 5).unwrap();
        let mut buf = Vec::new();
        write_jsonl(&d, &mut buf).unwrap();
        let back = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn headerless_files_are_imports() {
        let text = "{\"id\":0,\"e\":[0.1,0.2],\"e_prime\":[0.3,0.4],\"c\":1,\"t\":0,\"ell\":1}\n\
                    {\"id\":1,\"e\":[0.5,0.6],\"e_prime\":[0.7,0.8],\"c\":0,\"t\":0,\"ell\":0}\n";
        let d = read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(d.header.world, WorldConfig::Imported { dim: 2 });
        assert!(!d.has_ground_truth());
        assert!(d.label_mismatches().is_none());
    }

    #[test]
    fn malformed_records_are_rejected() {
        let bad_width = "{\"id\":0,\"e\":[0.1,0.2],\"e_prime\":[0.3],\"c\":1,\"t\":0,\"ell\":1}\n";
        assert!(read_jsonl(bad_width.as_bytes()).is_err());
        let bad_label = "{\"id\":0,\"e\":[0.1],\"e_prime\":[0.3],\"c\":1,\"t\":0,\"ell\":2}\n";
        assert!(read_jsonl(bad_label.as_bytes()).is_err());
        assert!(read_jsonl("not json\n".as_bytes()).is_err());
    }
}
