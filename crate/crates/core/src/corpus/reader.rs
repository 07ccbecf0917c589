use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Lines, Write};
use std::path::{Path, PathBuf};

use super::{Document, DocumentRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Abort on the first bad record instead of skipping it.
    pub fail_fast: bool,
    /// Drop repeated ids instead of treating them as errors.
    pub dedupe: bool,
}

#[derive(Debug, Default)]
pub struct LoadStats {
    pub documents: usize,
    pub blank_lines: usize,
    pub duplicates_dropped: usize,
    /// Records skipped in non-fail-fast mode.
    pub errors: Vec<Error>,
}

/// Streaming JSONL corpus reader. Memory use is bounded by the id set kept
/// for duplicate detection, not by file size.
pub struct CorpusReader<R: BufRead> {
    lines: Lines<R>,
    source: String,
    options: LoadOptions,
    line_no: usize,
    seen: HashSet<String>,
    stats: LoadStats,
    done: bool,
    path: PathBuf,
}

/// Opens `path` for streaming. Each line must be a JSON object with `id`,
/// `text` and `month`.
pub fn load_corpus(
    path: impl AsRef<Path>,
    source: &str,
    options: LoadOptions,
) -> Result<CorpusReader<BufReader<File>>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(CorpusReader::new(BufReader::new(file), source, options).with_path(path))
}

/// Writes documents as JSONL in the same schema `load_corpus` reads.
pub fn write_corpus<'a, I>(path: impl AsRef<Path>, docs: I) -> Result<usize>
where
    I: IntoIterator<Item = &'a Document>,
{
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut n = 0;
    for doc in docs {
        let rec = DocumentRecord {
            id: doc.id.clone(),
            text: doc.text.clone(),
            month: doc.month.clone(),
        };
        serde_json::to_writer(&mut out, &rec)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        n += 1;
    }
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(n)
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R, source: &str, options: LoadOptions) -> Self {
        CorpusReader {
            lines: reader.lines(),
            source: source.to_string(),
            options,
            line_no: 0,
            seen: HashSet::new(),
            stats: LoadStats::default(),
            done: false,
            path: PathBuf::from("<reader>"),
        }
    }

    fn with_path(mut self, path: &Path) -> Self {
        self.path = path.to_path_buf();
        self
    }

    pub fn stats(&self) -> &LoadStats {
        &self.stats
    }

    pub fn into_stats(self) -> LoadStats {
        self.stats
    }

    fn parse_line(&mut self, line: &str) -> Result<Option<Document>> {
        let record: DocumentRecord = serde_json::from_str(line).map_err(|e| Error::Record {
            line: self.line_no,
            message: e.to_string(),
        })?;
        let doc = Document {
            id: record.id,
            text: record.text,
            month: record.month,
            source: self.source.clone(),
        };
        doc.validate().map_err(|e| Error::Record {
            line: self.line_no,
            message: e.to_string(),
        })?;
        if !self.seen.insert(doc.id.clone()) {
            if self.options.dedupe {
                self.stats.duplicates_dropped += 1;
                return Ok(None);
            }
            return Err(Error::DuplicateId {
                id: doc.id,
                line: self.line_no,
            });
        }
        Ok(Some(doc))
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<Document>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => {
                    self.done = true;
                    return Some(Err(Error::io(&self.path, e)));
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                self.stats.blank_lines += 1;
                continue;
            }
            match self.parse_line(&line) {
                Ok(Some(doc)) => {
                    self.stats.documents += 1;
                    return Some(Ok(doc));
                }
                Ok(None) => continue,
                Err(e) if self.options.fail_fast => {
                    self.done = true;
                    return Some(Err(e));
                }
                Err(e) => {
                    tracing::warn!("skipping record: {e}");
                    self.stats.errors.push(e);
                }
            }
        }
        None
    }
}
