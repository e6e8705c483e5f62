//! CSV ingestion, whole-file or in bounded chunks, and CSV output.
//!
//! Files are comma separated with a header row. Status must be `0` or `1`;
//! an empty cell or `NA` counts as missing and rejects the row. Row numbers
//! in errors are 1-based and do not count the header.

use std::cell::Cell;
use std::collections::VecDeque;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::{Dataset, Subject};

pub const DEFAULT_CHUNK_SIZE: usize = 65536;

/// Column roles. With no explicit covariates, every column not used as
/// time, status or entry is a covariate, and a column named `entry` is taken
/// as the entry time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub time_col: String,
    pub status_col: String,
    pub entry_col: Option<String>,
    pub covariate_cols: Option<Vec<String>>,
}

impl Default for ColumnSpec {
    fn default() -> Self {
        Self {
            time_col: "time".into(),
            status_col: "status".into(),
            entry_col: None,
            covariate_cols: None,
        }
    }
}

/// Header positions of each role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedColumns {
    pub time: usize,
    pub status: usize,
    pub entry: Option<usize>,
    pub covariates: Vec<usize>,
    pub covariate_names: Vec<String>,
    pub width: usize,
}

impl ColumnSpec {
    pub fn resolve(&self, header: &[String]) -> Result<ResolvedColumns> {
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Config(format!("column '{name}' not found in header {header:?}")))
        };
        let time = find(&self.time_col)?;
        let status = find(&self.status_col)?;
        let entry = match (&self.entry_col, &self.covariate_cols) {
            (Some(e), _) => Some(find(e)?),
            (None, None) => header.iter().position(|h| h == "entry"),
            (None, Some(_)) => None,
        };
        let covariates: Vec<usize> = match &self.covariate_cols {
            Some(cols) => cols.iter().map(|c| find(c)).collect::<Result<_>>()?,
            None => (0..header.len())
                .filter(|&k| k != time && k != status && Some(k) != entry)
                .collect(),
        };
        let mut roles = vec![time, status];
        roles.extend(entry);
        roles.extend(&covariates);
        let mut sorted = roles.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != roles.len() {
            return Err(Error::Config("a column is assigned to more than one role".into()));
        }
        if covariates.is_empty() {
            return Err(Error::Config("no covariate columns".into()));
        }
        Ok(ResolvedColumns {
            time,
            status,
            entry,
            covariate_names: covariates.iter().map(|&k| header[k].clone()).collect(),
            covariates,
            width: header.len(),
        })
    }
}

fn open_csv(path: &Path) -> Result<(csv::Reader<File>, Vec<String>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    Ok((rdr, header))
}

fn cell(record: &csv::StringRecord, k: usize, row: usize, name: &str) -> Result<f64> {
    let raw = record.get(k).unwrap_or("");
    if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
        return Err(Error::Validation {
            row,
            column: Some(name.to_string()),
            message: "missing value".into(),
        });
    }
    raw.parse::<f64>().map_err(|e| Error::Parse {
        row,
        column: name.to_string(),
        message: format!("'{raw}': {e}"),
    })
}

fn parse_row(record: &csv::StringRecord, cols: &ResolvedColumns, header: &[String], row: usize) -> Result<Subject> {
    if record.len() != cols.width {
        return Err(Error::Validation {
            row,
            column: None,
            message: format!("expected {} fields, found {}", cols.width, record.len()),
        });
    }
    let time = cell(record, cols.time, row, &header[cols.time])?;
    let status = cell(record, cols.status, row, &header[cols.status])?;
    let status = if status == 0.0 {
        false
    } else if status == 1.0 {
        true
    } else {
        return Err(Error::Validation {
            row,
            column: Some(header[cols.status].clone()),
            message: format!("status must be 0 or 1, got {status}"),
        });
    };
    let covariates = cols
        .covariates
        .iter()
        .map(|&k| cell(record, k, row, &header[k]))
        .collect::<Result<Vec<f64>>>()?;
    let mut subject = Subject::new(time, status, covariates);
    if let Some(k) = cols.entry {
        subject = subject.with_entry(cell(record, k, row, &header[k])?);
    }
    subject.validate(cols.covariates.len(), row)?;
    Ok(subject)
}

/// Reads a whole file into memory.
pub fn read_dataset(path: impl AsRef<Path>, spec: &ColumnSpec) -> Result<Dataset> {
    let reader = ChunkReader::new(path.as_ref(), spec.clone());
    let mut stream = reader.stream()?;
    let mut data = Dataset::with_names(stream.covariate_names().to_vec());
    for subject in &mut stream {
        data.push(subject?)?;
    }
    Ok(data)
}

/// Streams subjects from a file `chunk_size` rows at a time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkReader {
    pub path: PathBuf,
    pub chunk_size: usize,
    pub spec: ColumnSpec,
}

/// Chunk residency counters shared with a running stream.
#[derive(Debug, Clone, Default)]
pub struct ChunkStats {
    materialized: Rc<Cell<usize>>,
    live: Rc<Cell<usize>>,
    max_live: Rc<Cell<usize>>,
}

impl ChunkStats {
    /// Chunks read so far.
    pub fn materialized(&self) -> usize {
        self.materialized.get()
    }

    /// Largest number of chunks held at the same time.
    pub fn max_live(&self) -> usize {
        self.max_live.get()
    }
}

impl ChunkReader {
    pub fn new(path: impl Into<PathBuf>, spec: ColumnSpec) -> Self {
        Self {
            path: path.into(),
            chunk_size: DEFAULT_CHUNK_SIZE,
            spec,
        }
    }

    pub fn with_chunk_size(mut self, chunk_size: usize) -> Self {
        self.chunk_size = chunk_size;
        self
    }

    /// Opens the file and resolves the header. Subjects are read lazily.
    pub fn stream(&self) -> Result<SubjectStream> {
        if self.chunk_size < 1 {
            return Err(Error::Config("chunk size must be >= 1".into()));
        }
        let (reader, header) = open_csv(&self.path)?;
        let columns = self.spec.resolve(&header)?;
        Ok(SubjectStream {
            reader,
            header,
            columns,
            chunk_size: self.chunk_size,
            chunk: VecDeque::new(),
            pending_error: None,
            row: 0,
            done: false,
            record: csv::StringRecord::new(),
            stats: ChunkStats::default(),
        })
    }
}

pub fn stream_dataset(reader: &ChunkReader) -> Result<SubjectStream> {
    reader.stream()
}

/// Iterator over the subjects of a file in file order. A bad row ends the
/// stream with its error after the good rows of the same chunk.
pub struct SubjectStream {
    reader: csv::Reader<File>,
    header: Vec<String>,
    columns: ResolvedColumns,
    chunk_size: usize,
    chunk: VecDeque<Subject>,
    pending_error: Option<Error>,
    row: usize,
    done: bool,
    record: csv::StringRecord,
    stats: ChunkStats,
}

impl SubjectStream {
    pub fn covariate_names(&self) -> &[String] {
        &self.columns.covariate_names
    }

    pub fn columns(&self) -> &ResolvedColumns {
        &self.columns
    }

    pub fn stats(&self) -> ChunkStats {
        self.stats.clone()
    }

    fn fill(&mut self) {
        // the previous chunk is fully consumed before the next one is read
        self.stats.live.set(0);
        while self.chunk.len() < self.chunk_size {
            match self.reader.read_record(&mut self.record) {
                Ok(true) => {
                    self.row += 1;
                    match parse_row(&self.record, &self.columns, &self.header, self.row) {
                        Ok(s) => self.chunk.push_back(s),
                        Err(e) => {
                            self.pending_error = Some(e);
                            self.done = true;
                            break;
                        }
                    }
                }
                Ok(false) => {
                    self.done = true;
                    break;
                }
                Err(e) => {
                    self.pending_error = Some(Error::Parse {
                        row: self.row + 1,
                        column: String::new(),
                        message: e.to_string(),
                    });
                    self.done = true;
                    break;
                }
            }
        }
        if !self.chunk.is_empty() {
            self.stats.materialized.set(self.stats.materialized.get() + 1);
            self.stats.live.set(self.stats.live.get() + 1);
            self.stats.max_live.set(self.stats.max_live.get().max(self.stats.live.get()));
        }
    }
}

impl Iterator for SubjectStream {
    type Item = Result<Subject>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.chunk.is_empty() && !self.done {
            self.fill();
        }
        if let Some(s) = self.chunk.pop_front() {
            return Some(Ok(s));
        }
        self.pending_error.take().map(Err)
    }
}

/// Writes `time,status[,entry],<covariates>` with shortest round-trip floats.
pub fn write_dataset<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let entry = data.has_entry();
    let mut header = vec!["time".to_string(), "status".to_string()];
    if entry {
        header.push("entry".into());
    }
    header.extend(data.names().iter().cloned());
    w.write_record(&header)?;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for i in 0..data.len() {
        rec.clear();
        rec.push(data.time(i).to_string());
        rec.push(if data.is_event(i) { "1" } else { "0" }.into());
        if entry {
            rec.push(data.entry(i).to_string());
        }
        rec.extend(data.covariates(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes subjects from an iterator without materializing them.
pub fn write_subjects<W: Write>(
    names: &[String],
    subjects: impl IntoIterator<Item = Subject>,
    out: W,
) -> Result<usize> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time".to_string(), "status".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    let mut count = 0;
    let mut rec: Vec<String> = Vec::with_capacity(header.len());
    for s in subjects {
        rec.clear();
        rec.push(s.time.to_string());
        rec.push(if s.status { "1" } else { "0" }.into());
        rec.extend(s.covariates.iter().map(f64::to_string));
        w.write_record(&rec)?;
        count += 1;
    }
    w.flush()?;
    Ok(count)
}

pub fn write_dataset_file(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(data, std::io::BufWriter::new(File::create(path)?))
}
