//! Chain CSV files.
//!
//! ```text
//! # config_hash=<hex> seed=<u64>
//! iteration,k,s,theta,log_evidence,accepted,proposal_k,cumulative_seconds
//! 0,1,25,0.71;0.83,-310.2,1,1,0.004
//! ```
//!
//! Change-points and rates are `;`-joined; floats use the shortest
//! round-tripping representation.

use std::io::{BufRead, BufReader, Read, Write};

use crate::changepoint::ChangePointState;
use crate::error::{Error, Result};
use crate::pmmh::ChainRecord;
use crate::smc::join;

pub const COLUMNS: [&str; 8] = [
    "iteration",
    "k",
    "s",
    "theta",
    "log_evidence",
    "accepted",
    "proposal_k",
    "cumulative_seconds",
];

/// Provenance line at the top of every chain file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainHeader {
    pub config_hash: String,
    pub seed: u64,
}

impl ChainHeader {
    pub fn to_line(&self) -> String {
        format!("# config_hash={} seed={}", self.config_hash, self.seed)
    }

    pub fn parse_line(line: &str) -> Option<Self> {
        let body = line.strip_prefix('#')?.trim();
        let mut hash = None;
        let mut seed = None;
        for field in body.split_whitespace() {
            match field.split_once('=')? {
                ("config_hash", v) => hash = Some(v.to_string()),
                ("seed", v) => seed = v.parse().ok(),
                _ => {}
            }
        }
        Some(Self {
            config_hash: hash?,
            seed: seed?,
        })
    }
}

/// Streams records to CSV as a chain runs.
pub struct ChainWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> ChainWriter<W> {
    pub fn new(mut out: W, header: &ChainHeader) -> Result<Self> {
        writeln!(out, "{}", header.to_line())?;
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(COLUMNS).map_err(csv_io)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, r: &ChainRecord) -> Result<()> {
        self.inner
            .write_record([
                r.iteration.to_string(),
                r.k().to_string(),
                join(r.state.changepoints()),
                join(r.state.rates()),
                format!("{:?}", r.log_evidence),
                (r.accepted as u8).to_string(),
                r.proposal_k.to_string(),
                format!("{:?}", r.wall_time),
            ])
            .map_err(csv_io)?;
        self.inner.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> Result<W> {
        self.inner
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

pub fn write_chain<W: Write>(out: W, header: &ChainHeader, records: &[ChainRecord]) -> Result<()> {
    let mut w = ChainWriter::new(out, header)?;
    for r in records {
        w.write(r)?;
    }
    Ok(())
}

fn split<T: std::str::FromStr>(field: &str) -> Option<Vec<T>> {
    if field.is_empty() {
        return Some(Vec::new());
    }
    field.split(';').map(|v| v.parse().ok()).collect()
}

/// Reads a chain file; errors name the offending line.
pub fn read_chain<R: Read>(input: R) -> Result<(Option<ChainHeader>, Vec<ChainRecord>)> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let (header, offset, rest): (Option<ChainHeader>, usize, String) = if first.starts_with('#') {
        let h = ChainHeader::parse_line(first.trim_end()).ok_or_else(|| Error::ChainParse {
            line: 1,
            message: "malformed provenance line".into(),
        })?;
        (Some(h), 1, String::new())
    } else {
        (None, 0, first)
    };
    let mut body = rest;
    reader.read_to_string(&mut body)?;

    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(body.as_bytes());
    let columns = csv
        .headers()
        .map_err(|e| Error::ChainParse {
            line: offset + 1,
            message: e.to_string(),
        })?
        .clone();
    if columns.iter().ne(COLUMNS) {
        return Err(Error::ChainParse {
            line: offset + 1,
            message: format!("expected columns {}", COLUMNS.join(",")),
        });
    }

    let mut records = Vec::new();
    for row in csv.records() {
        let row = row.map_err(|e| Error::ChainParse {
            line: offset + e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = offset + row.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::ChainParse { line, message };
        if row.len() != COLUMNS.len() {
            return Err(bad(format!("expected {} fields, found {}", COLUMNS.len(), row.len())));
        }
        let int = |i: usize| -> Result<usize> {
            row[i].parse().map_err(|_| bad(format!("{} {:?} is not an integer", COLUMNS[i], &row[i])))
        };
        let float = |i: usize| -> Result<f64> {
            row[i].parse().map_err(|_| bad(format!("{} {:?} is not a number", COLUMNS[i], &row[i])))
        };
        let k = int(1)?;
        let s: Vec<usize> = split(&row[2]).ok_or_else(|| bad(format!("bad change-points {:?}", &row[2])))?;
        let theta: Vec<f64> = split(&row[3]).ok_or_else(|| bad(format!("bad rates {:?}", &row[3])))?;
        if s.len() != k {
            return Err(bad(format!("k = {k} but {} change-points", s.len())));
        }
        let state = ChangePointState::new(s, theta).map_err(|e| bad(e.to_string()))?;
        let accepted = match &row[5] {
            "0" => false,
            "1" => true,
            other => return Err(bad(format!("accepted {other:?} is not 0 or 1"))),
        };
        records.push(ChainRecord {
            iteration: int(0)?,
            state,
            log_evidence: float(4)?,
            accepted,
            proposal_k: int(6)?,
            wall_time: float(7)?,
        });
    }
    Ok((header, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records() -> Vec<ChainRecord> {
        vec![
            ChainRecord {
                iteration: 0,
                state: ChangePointState::constant(0.1 + 0.2).unwrap(),
                log_evidence: -301.25,
                accepted: true,
                proposal_k: 0,
                wall_time: 0.0,
            },
            ChainRecord {
                iteration: 1,
                state: ChangePointState::new(vec![7, 19], vec![0.5, 1.0 / 3.0, 2.0]).unwrap(),
                log_evidence: -299.0000001,
                accepted: false,
                proposal_k: 2,
                wall_time: 0.125,
            },
        ]
    }

    #[test]
    fn round_trip_is_exact() {
        let header = ChainHeader {
            config_hash: "abc123".into(),
            seed: 42,
        };
        let mut buf = Vec::new();
        write_chain(&mut buf, &header, &records()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# config_hash=abc123 seed=42\niteration,k,s,theta,"));
        assert!(text.contains("\n1,2,7;19,0.5;0.3333333333333333;2.0,"));
        let (h, back) = read_chain(buf.as_slice()).unwrap();
        assert_eq!(h, Some(header));
        assert_eq!(back, records());
    }

    #[test]
    fn header_is_optional() {
        let text = "iteration,k,s,theta,log_evidence,accepted,proposal_k,cumulative_seconds\n0,0,,0.8,-1.5,1,0,0.0\n";
        let (h, r) = read_chain(text.as_bytes()).unwrap();
        assert_eq!(h, None);
        assert_eq!(r[0].k(), 0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let head = "# config_hash=x seed=1\niteration,k,s,theta,log_evidence,accepted,proposal_k,cumulative_seconds\n";
        let cases = [
            ("0,0,,0.8,-1.5,1,0,0.0\n1,1,,0.8,-1.5,1,0,0.0\n", 4),
            ("0,0,,0.8,-1.5,1,0,0.0\n1,0,,0.8,abc,1,0,0.0\n", 4),
            ("0,0,,0.8,-1.5,2,0,0.0\n", 3),
            ("0,0,,0.8\n", 3),
            ("0,1,1,0.8;0.9,-1.5,1,0,0.0\n", 3),
        ];
        for (rows, line) in cases {
            let text = format!("{head}{rows}");
            match read_chain(text.as_bytes()) {
                Err(Error::ChainParse { line: l, .. }) => assert_eq!(l, line, "{rows}"),
                other => panic!("{rows}: {other:?}"),
            }
        }
        match read_chain("# seed=1\n".as_bytes()) {
            Err(Error::ChainParse { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        match read_chain("a,b\n".as_bytes()) {
            Err(Error::ChainParse { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
