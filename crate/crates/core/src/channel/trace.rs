//! Recorded estimate streams.
//!
//! CSV traces carry the header `true_sender,block_index,msg_index,g_0,...`
//! with senders encoded as `B`/`E`. JSONL traces hold one object per line
//! with the fields `true_sender`, `block_index`, `msg_index` and `gains`.
//! Floats are written in shortest round-trip form, so every digit of the
//! stored value survives a save/load cycle.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChannelEstimate, MessageRecord, Sender};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceFormat {
    Csv,
    Jsonl,
}

impl TraceFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(TraceFormat::Csv),
            "jsonl" | "ndjson" => Some(TraceFormat::Jsonl),
            _ => None,
        }
    }
}

impl std::str::FromStr for TraceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TraceFormat::Csv),
            "jsonl" => Ok(TraceFormat::Jsonl),
            other => Err(Error::config("format", format!("unknown trace format {other:?}"))),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    true_sender: Sender,
    block_index: usize,
    msg_index: usize,
    gains: Vec<f64>,
}

/// Tracks the per-file invariants while records stream in.
struct Checker {
    dim: Option<usize>,
    seen: HashSet<(usize, usize)>,
}

impl Checker {
    fn new() -> Self {
        Self {
            dim: None,
            seen: HashSet::new(),
        }
    }

    fn accept(
        &mut self,
        line: usize,
        sender: Sender,
        block_index: usize,
        msg_index: usize,
        gains: Vec<f64>,
    ) -> Result<MessageRecord> {
        match self.dim {
            Some(m) if m != gains.len() => {
                return Err(Error::Format(format!(
                    "line {line} has {} gains, earlier rows have {m}",
                    gains.len()
                )))
            }
            _ => self.dim = Some(gains.len()),
        }
        if !self.seen.insert((block_index, msg_index)) {
            return Err(Error::Parse {
                line,
                reason: format!("duplicate msg_index {msg_index} in block {block_index}"),
            });
        }
        let estimate = ChannelEstimate::from_gains(gains).map_err(|e| Error::Parse {
            line,
            reason: e.to_string(),
        })?;
        Ok(MessageRecord {
            estimate,
            true_sender: sender,
            block_index,
            msg_index,
        })
    }
}

fn parse_field<T: std::str::FromStr>(line: usize, name: &str, raw: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Parse {
        line,
        reason: format!("invalid {name} {raw:?}"),
    })
}

fn read_csv<R: Read>(reader: R) -> Result<Vec<MessageRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut rows = rdr.records();
    let header = match rows.next() {
        None => return Ok(Vec::new()),
        Some(h) => h.map_err(|e| csv_error(1, e))?,
    };
    let fixed = ["true_sender", "block_index", "msg_index"];
    if header.len() < fixed.len() || fixed.iter().zip(header.iter()).any(|(a, b)| *a != b.trim()) {
        return Err(Error::Parse {
            line: 1,
            reason: "header must start with true_sender,block_index,msg_index".into(),
        });
    }
    let dim = header.len() - fixed.len();
    for (l, name) in header.iter().skip(fixed.len()).enumerate() {
        if name.trim() != format!("g_{l}") {
            return Err(Error::Parse {
                line: 1,
                reason: format!("expected column g_{l}, found {name:?}"),
            });
        }
    }

    let mut checker = Checker::new();
    checker.dim = Some(dim);
    let mut out = Vec::new();
    for row in rows {
        let row = row.map_err(|e| csv_error(0, e))?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != header.len() {
            return Err(Error::Format(format!(
                "line {line} has {} fields, header declares {}",
                row.len(),
                header.len()
            )));
        }
        let sender = Sender::from_code(row[0].trim()).ok_or_else(|| Error::Parse {
            line,
            reason: format!("unknown sender {:?}", &row[0]),
        })?;
        let block = parse_field(line, "block_index", &row[1])?;
        let msg = parse_field(line, "msg_index", &row[2])?;
        let gains = row
            .iter()
            .skip(fixed.len())
            .map(|g| parse_field::<f64>(line, "gain", g))
            .collect::<Result<Vec<_>>>()?;
        out.push(checker.accept(line, sender, block, msg, gains)?);
    }
    Ok(out)
}

fn csv_error(fallback_line: usize, e: csv::Error) -> Error {
    let line = e.position().map_or(fallback_line, |p| p.line() as usize);
    Error::Parse {
        line,
        reason: e.to_string(),
    }
}

fn read_jsonl<R: Read>(reader: R) -> Result<Vec<MessageRecord>> {
    let mut checker = Checker::new();
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let lineno = i + 1;
        let text = line.map_err(|e| Error::Parse {
            line: lineno,
            reason: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: lineno,
            reason: e.to_string(),
        })?;
        out.push(checker.accept(lineno, rec.true_sender, rec.block_index, rec.msg_index, rec.gains)?);
    }
    Ok(out)
}

/// Parses a trace, validating every row.
pub fn read_trace<R: Read>(reader: R, format: TraceFormat) -> Result<Vec<MessageRecord>> {
    match format {
        TraceFormat::Csv => read_csv(reader),
        TraceFormat::Jsonl => read_jsonl(reader),
    }
}

pub fn load_trace(path: impl AsRef<Path>, format: TraceFormat) -> Result<Vec<MessageRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace(BufReader::new(file), format)
}

pub fn write_trace<W: Write>(writer: W, records: &[MessageRecord], format: TraceFormat) -> Result<()> {
    let mut w = BufWriter::new(writer);
    let io = |e: std::io::Error| Error::io("<trace>", e);
    match format {
        TraceFormat::Csv => {
            let dim = records.first().map_or(0, |r| r.estimate.dim());
            let mut header = String::from("true_sender,block_index,msg_index");
            for l in 0..dim {
                header.push_str(&format!(",g_{l}"));
            }
            writeln!(w, "{header}").map_err(io)?;
            for r in records {
                if r.estimate.dim() != dim {
                    return Err(Error::Format(format!(
                        "record {}/{} has dimension {}, trace has {dim}",
                        r.block_index,
                        r.msg_index,
                        r.estimate.dim()
                    )));
                }
                let mut line = format!("{},{},{}", r.true_sender.code(), r.block_index, r.msg_index);
                for g in r.estimate.gains() {
                    line.push(',');
                    line.push_str(&g.to_string());
                }
                writeln!(w, "{line}").map_err(io)?;
            }
        }
        TraceFormat::Jsonl => {
            for r in records {
                let rec = JsonRecord {
                    true_sender: r.true_sender,
                    block_index: r.block_index,
                    msg_index: r.msg_index,
                    gains: r.estimate.gains().to_vec(),
                };
                let text = serde_json::to_string(&rec).map_err(|e| Error::Format(e.to_string()))?;
                writeln!(w, "{text}").map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)
}

pub fn save_trace(path: impl AsRef<Path>, records: &[MessageRecord], format: TraceFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace(file, records, format).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(sender: Sender, block: usize, msg: usize, gains: Vec<f64>) -> MessageRecord {
        MessageRecord {
            estimate: ChannelEstimate::from_gains(gains).unwrap(),
            true_sender: sender,
            block_index: block,
            msg_index: msg,
        }
    }

    #[test]
    fn empty_input_is_empty_trace() {
        assert!(read_trace(&b""[..], TraceFormat::Csv).unwrap().is_empty());
        assert!(read_trace(&b""[..], TraceFormat::Jsonl).unwrap().is_empty());
        let header_only = b"true_sender,block_index,msg_index,g_0,g_1\n";
        assert!(read_trace(&header_only[..], TraceFormat::Csv).unwrap().is_empty());
    }

    #[test]
    fn negative_gain_is_parse_error() {
        let csv = b"true_sender,block_index,msg_index,g_0,g_1\nB,0,0,1.0,2.0\nE,0,1,-0.5,1.0\n";
        match read_trace(&csv[..], TraceFormat::Csv) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let jsonl = b"{\"true_sender\":\"B\",\"block_index\":0,\"msg_index\":0,\"gains\":[-1.0]}\n";
        assert!(matches!(
            read_trace(&jsonl[..], TraceFormat::Jsonl),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let bad_sender = b"true_sender,block_index,msg_index,g_0\nB,0,0,1\nX,0,1,1\n";
        assert!(matches!(
            read_trace(&bad_sender[..], TraceFormat::Csv),
            Err(Error::Parse { line: 3, .. })
        ));
        let bad_float = b"true_sender,block_index,msg_index,g_0\nB,0,0,abc\n";
        assert!(matches!(
            read_trace(&bad_float[..], TraceFormat::Csv),
            Err(Error::Parse { line: 2, .. })
        ));
        let bad_json = b"{\"true_sender\":\"B\",\"block_index\":0,\"msg_index\":0,\"gains\":[1.0]}\n{oops\n";
        assert!(matches!(
            read_trace(&bad_json[..], TraceFormat::Jsonl),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn inconsistent_dimension_is_format_error() {
        let csv = b"true_sender,block_index,msg_index,g_0,g_1\nB,0,0,1,2\nB,0,1,1\n";
        assert!(matches!(read_trace(&csv[..], TraceFormat::Csv), Err(Error::Format(_))));
        let jsonl = concat!(
            "{\"true_sender\":\"B\",\"block_index\":0,\"msg_index\":0,\"gains\":[1.0,2.0]}\n",
            "{\"true_sender\":\"E\",\"block_index\":0,\"msg_index\":1,\"gains\":[1.0]}\n"
        );
        assert!(matches!(
            read_trace(jsonl.as_bytes(), TraceFormat::Jsonl),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn duplicate_message_index_rejected() {
        let csv = b"true_sender,block_index,msg_index,g_0\nB,0,0,1\nE,0,0,1\n";
        assert!(matches!(
            read_trace(&csv[..], TraceFormat::Csv),
            Err(Error::Parse { line: 3, .. })
        ));
        let ok = b"true_sender,block_index,msg_index,g_0\nB,0,0,1\nE,1,0,1\n";
        assert_eq!(read_trace(&ok[..], TraceFormat::Csv).unwrap().len(), 2);
    }

    #[test]
    fn bad_header_rejected() {
        let csv = b"sender,block_index,msg_index,g_0\nB,0,0,1\n";
        assert!(matches!(
            read_trace(&csv[..], TraceFormat::Csv),
            Err(Error::Parse { line: 1, .. })
        ));
        let csv = b"true_sender,block_index,msg_index,g_1\nB,0,0,1\n";
        assert!(read_trace(&csv[..], TraceFormat::Csv).is_err());
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(TraceFormat::from_path(Path::new("a/b.csv")), Some(TraceFormat::Csv));
        assert_eq!(TraceFormat::from_path(Path::new("b.jsonl")), Some(TraceFormat::Jsonl));
        assert_eq!(TraceFormat::from_path(Path::new("b.txt")), None);
    }

    fn arb_records() -> impl Strategy<Value = Vec<MessageRecord>> {
        (1usize..6).prop_flat_map(|dim| {
            prop::collection::vec((any::<bool>(), prop::collection::vec(0.0f64..1e6, dim)), 0..20).prop_map(|rows| {
                rows.into_iter()
                    .enumerate()
                    .map(|(i, (eve, gains))| {
                        let sender = if eve { Sender::Eve } else { Sender::Bob };
                        rec(sender, i / 7, i % 7, gains)
                    })
                    .collect()
            })
        })
    }

    proptest! {
        #[test]
        fn save_then_load_reproduces_records(records in arb_records(), jsonl in any::<bool>()) {
            let format = if jsonl { TraceFormat::Jsonl } else { TraceFormat::Csv };
            let mut buf = Vec::new();
            write_trace(&mut buf, &records, format).unwrap();
            let back = read_trace(&buf[..], format).unwrap();
            prop_assert_eq!(back.len(), records.len());
            for (a, b) in records.iter().zip(&back) {
                prop_assert_eq!(a.true_sender, b.true_sender);
                prop_assert_eq!(a.block_index, b.block_index);
                prop_assert_eq!(a.msg_index, b.msg_index);
                for (x, y) in a.estimate.gains().iter().zip(b.estimate.gains()) {
                    let tol = 1e-12 * x.abs().max(f64::MIN_POSITIVE);
                    prop_assert!((x - y).abs() <= tol, "{} vs {}", x, y);
                }
            }
        }
    }
}
