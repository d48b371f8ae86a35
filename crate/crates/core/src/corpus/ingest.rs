use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Collection, Document, Qrels, Query};
use crate::error::{Error, Result};

/// What ingestion found besides the collection itself.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub documents: usize,
    pub queries: usize,
    /// Qrels entries kept for evaluation.
    pub qrels_entries: usize,
    /// Judgments naming a query that is not in the query set. Kept here,
    /// dropped from evaluation.
    pub dangling_qrels: Vec<DanglingQrel>,
    /// Judgments naming an unknown document (they can never be retrieved).
    pub unknown_doc_refs: usize,
    /// Ids of corpus/query records whose text was blank; they are skipped.
    pub empty_texts: Vec<String>,
    /// Repeated (query, doc) judgment pairs; the last grade wins.
    pub repeated_judgments: usize,
}

impl IngestReport {
    pub fn warning_count(&self) -> usize {
        self.dangling_qrels.len() + self.empty_texts.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DanglingQrel {
    pub query_id: String,
    pub doc_id: String,
    pub line: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawId {
    Str(String),
    Int(i64),
}

#[derive(Deserialize)]
struct RawItem {
    #[serde(rename = "_id")]
    id: RawId,
    text: String,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    lang_tag: Option<String>,
}

/// A parsed JSON-Lines record before title folding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub id: String,
    pub text: String,
    pub title: Option<String>,
    pub lang_tag: Option<String>,
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Iterates `(line_number, byte_offset, line)` over LF-terminated lines,
/// tolerating a trailing CR.
fn lines_with_offsets(bytes: &[u8]) -> impl Iterator<Item = (usize, u64, &[u8])> {
    let mut offset = 0u64;
    bytes
        .split(|&b| b == b'\n')
        .enumerate()
        .map(move |(i, line)| {
            let start = offset;
            offset += line.len() as u64 + 1;
            let line = line.strip_suffix(b"\r").unwrap_or(line);
            (i + 1, start, line)
        })
}

/// Reads a BEIR-style JSON-Lines file (`_id`, `text`, optional `title`).
/// Blank lines are skipped. Duplicate ids are fatal.
pub fn read_items(path: &Path) -> Result<Vec<RawRecord>> {
    let bytes = read_bytes(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line_no, offset, line) in lines_with_offsets(&bytes) {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            offset,
            message,
        };
        let text = std::str::from_utf8(line).map_err(|e| parse_err(format!("invalid UTF-8: {e}")))?;
        if text.trim().is_empty() {
            continue;
        }
        let raw: RawItem = serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))?;
        let id = match raw.id {
            RawId::Str(s) => s,
            RawId::Int(n) => n.to_string(),
        };
        if id.is_empty() {
            return Err(parse_err("empty _id".into()));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId {
                id,
                path: path.to_path_buf(),
            });
        }
        out.push(RawRecord {
            id,
            text: raw.text,
            title: raw.title.filter(|t| !t.trim().is_empty()),
            lang_tag: raw.lang_tag,
        });
    }
    Ok(out)
}

/// A parsed qrels row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QrelRow {
    pub query_id: String,
    pub doc_id: String,
    pub grade: u32,
    pub line: usize,
}

/// Reads a tab-separated qrels file. A `query-id corpus-id score` header line
/// is detected and skipped. Grades must be non-negative integers.
pub fn read_qrels(path: &Path) -> Result<Vec<QrelRow>> {
    let bytes = read_bytes(path)?;
    let mut rows = Vec::new();
    for (line_no, offset, line) in lines_with_offsets(&bytes) {
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            offset,
            message,
        };
        let text = std::str::from_utf8(line).map_err(|e| parse_err(format!("invalid UTF-8: {e}")))?;
        if text.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(format!(
                "expected 3 tab-separated fields, found {}",
                fields.len()
            )));
        }
        if rows.is_empty() && line_no == 1 && fields[0] == "query-id" && fields[2] == "score" {
            continue;
        }
        let grade: u32 = fields[2].trim().parse().map_err(|_| {
            parse_err(format!(
                "relevance grade {:?} is not a non-negative integer",
                fields[2]
            ))
        })?;
        rows.push(QrelRow {
            query_id: fields[0].to_string(),
            doc_id: fields[1].to_string(),
            grade,
            line: line_no,
        });
    }
    Ok(rows)
}

/// Loads and validates a (corpus, queries, qrels) triple.
///
/// Titles are folded into document text once, here, as `title + "\n" + text`.
/// Records with blank text are skipped and listed in the report. Judgments for
/// unknown queries are reported and left out of `Collection::qrels`.
pub fn ingest_collection(corpus_path: &Path, queries_path: &Path, qrels_path: &Path) -> Result<Collection> {
    let mut report = IngestReport::default();

    let mut documents = Vec::new();
    for raw in read_items(corpus_path)? {
        if raw.text.trim().is_empty() {
            report.empty_texts.push(raw.id);
            continue;
        }
        let text = match &raw.title {
            Some(title) => format!("{title}\n{}", raw.text),
            None => raw.text,
        };
        documents.push(Document {
            id: raw.id,
            text,
            title: raw.title,
            lang_tag: raw.lang_tag,
        });
    }

    let mut queries = Vec::new();
    for raw in read_items(queries_path)? {
        if raw.text.trim().is_empty() {
            report.empty_texts.push(raw.id);
            continue;
        }
        queries.push(Query {
            id: raw.id,
            text: raw.text,
        });
    }

    let query_ids: HashSet<&str> = queries.iter().map(|q| q.id.as_str()).collect();
    let doc_ids: HashSet<&str> = documents.iter().map(|d| d.id.as_str()).collect();
    let mut qrels: Qrels = BTreeMap::new();
    for row in read_qrels(qrels_path)? {
        if !query_ids.contains(row.query_id.as_str()) {
            log::warn!(
                "{}:{}: qrels reference unknown query {:?}",
                qrels_path.display(),
                row.line,
                row.query_id
            );
            report.dangling_qrels.push(DanglingQrel {
                query_id: row.query_id,
                doc_id: row.doc_id,
                line: row.line,
            });
            continue;
        }
        if !doc_ids.contains(row.doc_id.as_str()) {
            report.unknown_doc_refs += 1;
        }
        let per_query = qrels.entry(row.query_id).or_default();
        if per_query.insert(row.doc_id, row.grade).is_some() {
            report.repeated_judgments += 1;
        }
    }

    report.documents = documents.len();
    report.queries = queries.len();
    report.qrels_entries = qrels.values().map(|m| m.len()).sum();
    Ok(Collection {
        documents,
        queries,
        qrels,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn minimal_collection() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(
            dir.path(),
            "corpus.jsonl",
            "{\"_id\":\"d1\",\"text\":\"fn a() {}\"}\n{\"_id\":\"d2\",\"text\":\"fn b() {}\",\"title\":\"B\"}\n",
        );
        let q = write(dir.path(), "queries.jsonl", "{\"_id\":\"q1\",\"text\":\"find a\"}\n");
        let r = write(dir.path(), "qrels.tsv", "query-id\tcorpus-id\tscore\nq1\td1\t1\n");
        let coll = ingest_collection(&c, &q, &r).unwrap();
        assert_eq!(
            (coll.documents.len(), coll.queries.len(), coll.report.qrels_entries),
            (2, 1, 1)
        );
        assert_eq!(coll.documents[1].text, "B\nfn b() {}");
        assert_eq!(coll.report.warning_count(), 0);
    }

    #[test]
    fn duplicate_id_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(
            dir.path(),
            "corpus.jsonl",
            "{\"_id\":\"d1\",\"text\":\"x\"}\n{\"_id\":\"d1\",\"text\":\"y\"}\n",
        );
        let q = write(dir.path(), "q.jsonl", "{\"_id\":\"q1\",\"text\":\"x\"}\n");
        let r = write(dir.path(), "r.tsv", "q1\td1\t1\n");
        match ingest_collection(&c, &q, &r) {
            Err(Error::DuplicateId { id, .. }) => assert_eq!(id, "d1"),
            other => panic!("expected duplicate id error, got {other:?}"),
        }
    }

    #[test]
    fn dangling_qrels_warn_and_drop() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "c.jsonl", "{\"_id\":\"d1\",\"text\":\"x\"}\n");
        let q = write(dir.path(), "q.jsonl", "{\"_id\":\"q1\",\"text\":\"x\"}\n");
        let r = write(dir.path(), "r.tsv", "q1\td1\t1\nqX\td1\t1\n");
        let coll = ingest_collection(&c, &q, &r).unwrap();
        assert_eq!(coll.report.dangling_qrels.len(), 1);
        assert_eq!(coll.report.dangling_qrels[0].query_id, "qX");
        assert_eq!(coll.report.dangling_qrels[0].line, 2);
        assert!(!coll.qrels.contains_key("qX"));
        assert_eq!(coll.evaluable_queries().len(), 1);
    }

    #[test]
    fn malformed_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let body = "{\"_id\":\"d1\",\"text\":\"x\"}\n{not json\n";
        let c = write(dir.path(), "c.jsonl", body);
        match read_items(&c) {
            Err(Error::Parse { line, offset, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(offset, body.find("{not").unwrap() as u64);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn real_valued_grades_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let r = write(dir.path(), "r.tsv", "q1\td1\t0.5\n");
        assert!(matches!(read_qrels(&r), Err(Error::Parse { line: 1, .. })));
        let r = write(dir.path(), "r2.tsv", "q1\td1\t-1\n");
        assert!(read_qrels(&r).is_err());
    }

    #[test]
    fn blank_texts_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(
            dir.path(),
            "c.jsonl",
            "{\"_id\":\"d1\",\"text\":\"  \"}\n{\"_id\":7,\"text\":\"ok\"}\n",
        );
        let q = write(dir.path(), "q.jsonl", "{\"_id\":\"q1\",\"text\":\"x\"}\n");
        let r = write(dir.path(), "r.tsv", "q1\t7\t2\n");
        let coll = ingest_collection(&c, &q, &r).unwrap();
        assert_eq!(coll.report.empty_texts, vec!["d1".to_string()]);
        assert_eq!(coll.documents[0].id, "7");
    }
}
