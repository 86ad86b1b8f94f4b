use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::codec::parse_value;
use super::tag::{Millis, Quality, TagName, WireValue};
use super::HistorianError;

#[derive(Debug, Clone, PartialEq)]
pub struct HistorianRecord {
    pub tag: TagName,
    pub timestamp: Millis,
    pub value: WireValue,
    pub quality: Quality,
}

impl HistorianRecord {
    /// `<timestamp_ms> <tag> <value> <quality>`
    pub fn to_line(&self) -> String {
        format!("{} {} {} {}\n", self.timestamp, self.tag, self.value, self.quality)
    }

    pub fn parse_line(line: &str) -> Option<HistorianRecord> {
        let mut it = line.trim_end_matches(['\n', '\r']).split(' ');
        let timestamp = it.next()?.parse().ok()?;
        let tag = TagName::new(it.next()?).ok()?;
        let value = parse_value(it.next()?)?;
        let quality = it.next()?.parse().ok()?;
        if it.next().is_some() {
            return None;
        }
        Some(HistorianRecord {
            tag,
            timestamp,
            value,
            quality,
        })
    }
}

/// Append-only archive: in-memory per-tag index plus an optional
/// newline-delimited log file.
#[derive(Debug, Default)]
pub struct Historian {
    index: HashMap<TagName, Vec<HistorianRecord>>,
    len: usize,
    file: Option<(PathBuf, BufWriter<File>)>,
}

impl Historian {
    pub fn in_memory() -> Self {
        Historian::default()
    }

    /// Creates (truncating) the log file at `path`, creating parent dirs.
    pub fn create(path: impl AsRef<Path>) -> Result<Self, HistorianError> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let file = File::create(path)?;
        Ok(Historian {
            index: HashMap::new(),
            len: 0,
            file: Some((path.to_path_buf(), BufWriter::new(file))),
        })
    }

    /// Loads every record of an existing log into memory (no file attached).
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HistorianError> {
        let reader = BufReader::new(File::open(path.as_ref())?);
        let mut hist = Historian::in_memory();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let rec = HistorianRecord::parse_line(&line).ok_or(HistorianError::Parse { line: n + 1 })?;
            hist.append(rec)?;
        }
        Ok(hist)
    }

    pub fn path(&self) -> Option<&Path> {
        self.file.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn append(&mut self, rec: HistorianRecord) -> Result<(), HistorianError> {
        let series = self.index.entry(rec.tag.clone()).or_default();
        if let Some(last) = series.last() {
            if rec.timestamp < last.timestamp {
                return Err(HistorianError::OutOfOrder {
                    tag: rec.tag.to_string(),
                    last: last.timestamp,
                    got: rec.timestamp,
                });
            }
        }
        if let Some((_, w)) = self.file.as_mut() {
            w.write_all(rec.to_line().as_bytes())?;
        }
        series.push(rec);
        self.len += 1;
        Ok(())
    }

    /// Records of `tag` with `from <= timestamp < to`, in append order.
    /// Unknown tags give an empty slice.
    pub fn query(&self, tag: &TagName, from: Millis, to: Millis) -> Result<&[HistorianRecord], HistorianError> {
        if from > to {
            return Err(HistorianError::BadRange { from, to });
        }
        let Some(series) = self.index.get(tag) else {
            return Ok(&[]);
        };
        let lo = series.partition_point(|r| r.timestamp < from);
        let hi = series.partition_point(|r| r.timestamp < to);
        Ok(&series[lo..hi])
    }

    pub fn tags(&self) -> impl Iterator<Item = &TagName> {
        self.index.keys()
    }

    /// All records merged by timestamp (stable across tags by name).
    pub fn all_records(&self) -> Vec<&HistorianRecord> {
        let mut all: Vec<&HistorianRecord> = self.index.values().flatten().collect();
        all.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.tag.cmp(&b.tag)));
        all
    }

    pub fn flush(&mut self) -> Result<(), HistorianError> {
        if let Some((_, w)) = self.file.as_mut() {
            w.flush()?;
        }
        Ok(())
    }
}

impl Drop for Historian {
    fn drop(&mut self) {
        if let Err(e) = self.flush() {
            log::warn!("historian flush failed: {e}");
        }
    }
}
