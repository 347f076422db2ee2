//! Document-segmented bilingual corpora and token counting.
//!
//! Two on-disk formats are supported. TSV has no header and fixed columns
//! `doc_id, seg_index, lang_pair, source, target`; text fields may not contain
//! tabs or newlines. JSONL carries one object per line with those same keys.
//! Documents are ordered by `doc_id` and segments by `seg_index`, so loading
//! does not depend on input row order.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub doc_id: String,
    pub seg_index: usize,
    pub source_text: String,
    pub target_text: String,
    pub lang_pair: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub lang_pair: String,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub lang_pair: String,
    pub documents: Vec<Document>,
    pub provenance: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Tsv,
    Jsonl,
}

impl CorpusFormat {
    /// Guess from the file extension; `.jsonl`/`.json` map to JSONL, anything else to TSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => CorpusFormat::Jsonl,
            _ => CorpusFormat::Tsv,
        }
    }
}

/// One on-disk row. Field order is the TSV column order and the JSONL key order.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Record {
    doc_id: String,
    seg_index: usize,
    lang_pair: String,
    source: String,
    target: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, lang_pair: impl Into<String>, segments: Vec<Segment>) -> Result<Self> {
        let doc = Self {
            doc_id: doc_id.into(),
            lang_pair: lang_pair.into(),
            segments,
        };
        doc.validate()?;
        Ok(doc)
    }

    /// Build a document from (source, target) pairs, numbering segments from 0.
    pub fn from_pairs<S: Into<String>>(
        doc_id: &str,
        lang_pair: &str,
        pairs: impl IntoIterator<Item = (S, S)>,
    ) -> Result<Self> {
        let segments = pairs
            .into_iter()
            .enumerate()
            .map(|(i, (s, t))| Segment {
                doc_id: doc_id.to_string(),
                seg_index: i,
                source_text: s.into(),
                target_text: t.into(),
                lang_pair: lang_pair.to_string(),
            })
            .collect();
        Self::new(doc_id, lang_pair, segments)
    }

    fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidInput(format!("document {} has no segments", self.doc_id)));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.doc_id != self.doc_id || seg.lang_pair != self.lang_pair {
                return Err(Error::InvalidInput(format!(
                    "segment {i} of document {} does not share its doc_id/lang_pair",
                    self.doc_id
                )));
            }
            if seg.seg_index != i {
                return Err(Error::SegIndexGap {
                    doc_id: self.doc_id.clone(),
                    missing: i,
                });
            }
            if seg.source_text.trim().is_empty() || seg.target_text.trim().is_empty() {
                return Err(Error::InvalidInput(format!(
                    "document {} segment {i}: empty text after trimming",
                    self.doc_id
                )));
            }
        }
        Ok(())
    }
}

impl Corpus {
    pub fn new(lang_pair: impl Into<String>, documents: Vec<Document>, provenance: impl Into<String>) -> Result<Self> {
        let lang_pair = lang_pair.into();
        let mut seen = std::collections::BTreeSet::new();
        for doc in &documents {
            doc.validate()?;
            if doc.lang_pair != lang_pair {
                return Err(Error::MixedLangPair {
                    first: lang_pair,
                    other: doc.lang_pair.clone(),
                });
            }
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate doc_id {}", doc.doc_id)));
            }
        }
        Ok(Self {
            lang_pair,
            documents,
            provenance: provenance.into(),
        })
    }

    pub fn segment_count(&self) -> usize {
        self.documents.iter().map(|d| d.segments.len()).sum()
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let label = path.display().to_string();
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = match format {
            CorpusFormat::Tsv => parse_tsv_line(&line),
            CorpusFormat::Jsonl => serde_json::from_str::<Record>(&line).map_err(|e| e.to_string()),
        }
        .map_err(|msg| Error::MalformedRecord {
            path: label.clone(),
            line: line_no,
            msg,
        })?;
        if record.source.trim().is_empty() || record.target.trim().is_empty() {
            return Err(Error::MalformedRecord {
                path: label.clone(),
                line: line_no,
                msg: "empty source or target after trimming".into(),
            });
        }
        records.push(record);
    }
    assemble(records, label)
}

fn parse_tsv_line(line: &str) -> std::result::Result<Record, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 5 {
        return Err(format!("expected 5 tab-separated fields, found {}", fields.len()));
    }
    let seg_index = fields[1]
        .parse::<usize>()
        .map_err(|_| format!("seg_index {:?} is not a non-negative integer", fields[1]))?;
    Ok(Record {
        doc_id: fields[0].to_string(),
        seg_index,
        lang_pair: fields[2].to_string(),
        source: fields[3].to_string(),
        target: fields[4].to_string(),
    })
}

fn assemble(records: Vec<Record>, provenance: String) -> Result<Corpus> {
    let Some(first) = records.first() else {
        return Err(Error::NoRecords);
    };
    let lang_pair = first.lang_pair.clone();
    let mut docs: BTreeMap<String, BTreeMap<usize, Record>> = BTreeMap::new();
    for rec in records {
        if rec.lang_pair != lang_pair {
            return Err(Error::MixedLangPair {
                first: lang_pair,
                other: rec.lang_pair,
            });
        }
        match docs.entry(rec.doc_id.clone()).or_default().entry(rec.seg_index) {
            Entry::Occupied(_) => {
                return Err(Error::DuplicateSegment {
                    doc_id: rec.doc_id,
                    seg_index: rec.seg_index,
                })
            }
            Entry::Vacant(slot) => {
                slot.insert(rec);
            }
        }
    }
    let mut documents = Vec::with_capacity(docs.len());
    for (doc_id, segs) in docs {
        let mut segments = Vec::with_capacity(segs.len());
        for (expected, (idx, rec)) in segs.into_iter().enumerate() {
            if idx != expected {
                return Err(Error::SegIndexGap {
                    doc_id,
                    missing: expected,
                });
            }
            segments.push(Segment {
                doc_id: rec.doc_id,
                seg_index: rec.seg_index,
                source_text: rec.source,
                target_text: rec.target,
                lang_pair: rec.lang_pair,
            });
        }
        documents.push(Document {
            doc_id,
            lang_pair: lang_pair.clone(),
            segments,
        });
    }
    Ok(Corpus {
        lang_pair,
        documents,
        provenance,
    })
}

pub fn save_corpus(corpus: &Corpus, path: &Path, format: CorpusFormat) -> Result<()> {
    let mut out = String::new();
    for doc in &corpus.documents {
        for seg in &doc.segments {
            match format {
                CorpusFormat::Tsv => {
                    for text in [&seg.doc_id, &seg.lang_pair, &seg.source_text, &seg.target_text] {
                        if text.contains(['\t', '\n', '\r']) {
                            return Err(Error::InvalidInput(format!(
                                "document {} segment {}: tabs and newlines cannot be stored in TSV",
                                seg.doc_id, seg.seg_index
                            )));
                        }
                    }
                    out.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{}\n",
                        seg.doc_id, seg.seg_index, seg.lang_pair, seg.source_text, seg.target_text
                    ));
                }
                CorpusFormat::Jsonl => {
                    let rec = Record {
                        doc_id: seg.doc_id.clone(),
                        seg_index: seg.seg_index,
                        lang_pair: seg.lang_pair.clone(),
                        source: seg.source_text.clone(),
                        target: seg.target_text.clone(),
                    };
                    out.push_str(&serde_json::to_string(&rec)?);
                    out.push('\n');
                }
            }
        }
    }
    crate::io::write_atomic(path, out.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CounterScheme {
    #[default]
    Whitespace,
    Character,
    External,
}

/// Token counter. `external` runs `external_command` through `sh -c`, writes
/// one text per line and reads one decimal count per line.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenCounter {
    #[serde(default)]
    pub scheme: CounterScheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_command: Option<String>,
}

impl TokenCounter {
    pub fn whitespace() -> Self {
        Self::default()
    }

    pub fn character() -> Self {
        Self {
            scheme: CounterScheme::Character,
            external_command: None,
        }
    }

    pub fn external(command: impl Into<String>) -> Self {
        Self {
            scheme: CounterScheme::External,
            external_command: Some(command.into()),
        }
    }

    /// Short label used in report metadata.
    pub fn unit(&self) -> String {
        match self.scheme {
            CounterScheme::Whitespace => "whitespace tokens".into(),
            CounterScheme::Character => "non-whitespace characters".into(),
            CounterScheme::External => format!("external tokens ({})", self.external_command.as_deref().unwrap_or("?")),
        }
    }

    pub fn count(&self, text: &str) -> Result<usize> {
        match self.scheme {
            CounterScheme::Whitespace => Ok(text.split_whitespace().count()),
            CounterScheme::Character => Ok(text.chars().filter(|c| !c.is_whitespace()).count()),
            CounterScheme::External => Ok(self.count_many(&[text])?[0]),
        }
    }

    /// Count a batch of texts; for the external scheme this is one process run.
    pub fn count_many<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<usize>> {
        match self.scheme {
            CounterScheme::External => self.count_external(texts),
            _ => texts.iter().map(|t| self.count(t.as_ref())).collect(),
        }
    }

    fn count_external<S: AsRef<str>>(&self, texts: &[S]) -> Result<Vec<usize>> {
        let cmd = self
            .external_command
            .as_deref()
            .ok_or_else(|| Error::Counter("external scheme needs external_command".into()))?;
        // The empty string counts 0 without consulting the tokenizer.
        let pending: Vec<(usize, String)> = texts
            .iter()
            .enumerate()
            .filter(|(_, t)| !t.as_ref().is_empty())
            .map(|(i, t)| (i, t.as_ref().replace(['\r', '\n'], " ")))
            .collect();
        let mut counts = vec![0usize; texts.len()];
        if pending.is_empty() {
            return Ok(counts);
        }
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(cmd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| Error::Counter(format!("cannot spawn {cmd:?}: {e}")))?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let payload: String = pending.iter().map(|(_, t)| format!("{t}\n")).collect();
        let writer = std::thread::spawn(move || {
            let _ = stdin.write_all(payload.as_bytes());
        });
        let output = child
            .wait_with_output()
            .map_err(|e| Error::Counter(format!("{cmd:?}: {e}")))?;
        let _ = writer.join();
        if !output.status.success() {
            return Err(Error::Counter(format!("{cmd:?} exited with {}", output.status)));
        }
        let stdout =
            String::from_utf8(output.stdout).map_err(|_| Error::Counter("tokenizer output is not UTF-8".into()))?;
        let lines: Vec<&str> = stdout.lines().collect();
        if lines.len() != pending.len() {
            return Err(Error::Counter(format!(
                "expected {} counts, got {}",
                pending.len(),
                lines.len()
            )));
        }
        for ((idx, _), line) in pending.iter().zip(lines) {
            counts[*idx] = line
                .trim()
                .parse()
                .map_err(|_| Error::Counter(format!("bad count line {line:?}")))?;
        }
        Ok(counts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn two_doc_rows() -> String {
        let mut s = String::new();
        for d in ["d1", "d2"] {
            for i in 0..5 {
                s.push_str(&format!("{d}\t{i}\ten-de_DE\tsource {d} {i}\tZiel {d} {i}\n"));
            }
        }
        s
    }

    #[test]
    fn loads_two_documents_of_five() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.tsv", &two_doc_rows());
        let c = load_corpus(&p, CorpusFormat::Tsv).unwrap();
        assert_eq!(c.documents.len(), 2);
        assert!(c.documents.iter().all(|d| d.segments.len() == 5));
        assert_eq!(c.lang_pair, "en-de_DE");
        assert_eq!(c.documents[1].segments[3].target_text, "Ziel d2 3");
    }

    #[test]
    fn empty_file_has_no_records() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "e.tsv", "");
        assert_eq!(
            load_corpus(&p, CorpusFormat::Tsv).unwrap_err().to_string(),
            "no records"
        );
    }

    #[test]
    fn gap_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let body = "d\t0\ten-de\ta\tb\nd\t1\ten-de\ta\tb\nd\t3\ten-de\ta\tb\n";
        let p = write(dir.path(), "g.tsv", body);
        let err = load_corpus(&p, CorpusFormat::Tsv).unwrap_err();
        assert!(err.to_string().contains("gap in seg_index at 2"), "{err}");
    }

    #[test]
    fn duplicate_and_mixed_pairs_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "d.tsv", "d\t0\ten-de\ta\tb\nd\t0\ten-de\ta\tb\n");
        assert!(matches!(
            load_corpus(&p, CorpusFormat::Tsv),
            Err(Error::DuplicateSegment { .. })
        ));
        let p = write(dir.path(), "m.tsv", "d\t0\ten-de\ta\tb\ne\t0\ten-fr\ta\tb\n");
        assert!(matches!(
            load_corpus(&p, CorpusFormat::Tsv),
            Err(Error::MixedLangPair { .. })
        ));
    }

    #[test]
    fn malformed_line_number_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "bad.tsv", "d\t0\ten-de\ta\tb\nd\tx\ten-de\ta\tb\n");
        match load_corpus(&p, CorpusFormat::Tsv).unwrap_err() {
            Error::MalformedRecord { line, .. } => assert_eq!(line, 2),
            other => panic!("{other}"),
        }
        let p = write(dir.path(), "bad.jsonl", "{\"doc_id\":\"d\"}\n");
        assert!(matches!(
            load_corpus(&p, CorpusFormat::Jsonl),
            Err(Error::MalformedRecord { line: 1, .. })
        ));
    }

    #[test]
    fn whitespace_only_text_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "w.tsv", "d\t0\ten-de\t \u{3000}\tb\n");
        assert!(matches!(
            load_corpus(&p, CorpusFormat::Tsv),
            Err(Error::MalformedRecord { .. })
        ));
    }

    #[test]
    fn multiscript_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let doc = Document::from_pairs(
            "m1",
            "en-ar_EG",
            vec![
                ("The \"quoted\" one.", "الجملة الأولى."),
                ("第二句。", "日本語のテキスト"),
                ("emoji 🎉 here", "हिन्दी पाठ"),
            ],
        )
        .unwrap();
        let corpus = Corpus::new("en-ar_EG", vec![doc], "fixture").unwrap();
        for (fmt, name) in [(CorpusFormat::Tsv, "x.tsv"), (CorpusFormat::Jsonl, "x.jsonl")] {
            let p = dir.path().join(name);
            save_corpus(&corpus, &p, fmt).unwrap();
            let back = load_corpus(&p, fmt).unwrap();
            assert_eq!(back.documents, corpus.documents);
        }
    }

    #[test]
    fn tsv_refuses_tabs_in_text() {
        let dir = tempfile::tempdir().unwrap();
        let doc = Document::from_pairs("t", "en-de", vec![("a\tb", "c")]).unwrap();
        let corpus = Corpus::new("en-de", vec![doc], "x").unwrap();
        assert!(save_corpus(&corpus, &dir.path().join("t.tsv"), CorpusFormat::Tsv).is_err());
        save_corpus(&corpus, &dir.path().join("t.jsonl"), CorpusFormat::Jsonl).unwrap();
    }

    #[test]
    fn write_to_unwritable_path_is_io_error() {
        let doc = Document::from_pairs("t", "en-de", vec![("a", "b")]).unwrap();
        let corpus = Corpus::new("en-de", vec![doc], "x").unwrap();
        let err = save_corpus(&corpus, Path::new("/nonexistent-dir/sub/c.tsv"), CorpusFormat::Tsv).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn counting_examples() {
        assert_eq!(TokenCounter::whitespace().count("a b  c").unwrap(), 3);
        assert_eq!(TokenCounter::whitespace().count("").unwrap(), 0);
        assert_eq!(TokenCounter::character().count("").unwrap(), 0);
        // a, b, c
        assert_eq!(TokenCounter::character().count("ab c").unwrap(), 3);
        assert_eq!(TokenCounter::character().count("日本\u{3000}語").unwrap(), 3);
    }

    #[test]
    fn external_counter_line_protocol() {
        let counter = TokenCounter::external("awk '{print NF}'");
        assert_eq!(counter.count_many(&["a b", "", "x y z\nw"]).unwrap(), vec![2, 0, 4]);
        let broken = TokenCounter::external("exit 3");
        assert!(matches!(broken.count("a"), Err(Error::Counter(_))));
    }
}
