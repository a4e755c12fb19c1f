//! Documents, topics, tokenization and passage splitting.
//!
//! Collections and topics are JSON-lines files. Dates are normalized to
//! calendar dates at ingestion; month-only values map to the first day of
//! the month.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Default passage window length in tokens.
pub const DEFAULT_PASSAGE_LEN: usize = 180;
/// Default distance between consecutive passage starts.
pub const DEFAULT_PASSAGE_STRIDE: usize = 90;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub text: String,
    pub lang: String,
    /// Creation date when known, otherwise download date; `None` if neither.
    pub date: Option<NaiveDate>,
}

impl Document {
    /// Title and body joined by a newline, the text that gets tokenized.
    pub fn full_text(&self) -> String {
        if self.title.is_empty() {
            self.text.clone()
        } else {
            format!("{}\n{}", self.title, self.text)
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct DocumentRecord {
    id: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    text: String,
    lang: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    date: Option<String>,
}

/// Serializes a document to one JSON line in the collection format.
pub fn document_to_json(doc: &Document) -> String {
    let rec = DocumentRecord {
        id: doc.doc_id.clone(),
        title: doc.title.clone(),
        text: doc.text.clone(),
        lang: doc.lang.clone(),
        date: doc.date.map(|d| d.format("%Y-%m-%d").to_string()),
    };
    serde_json::to_string(&rec).expect("document record is always serializable")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topic {
    pub topic_id: String,
    pub title: String,
    pub description: String,
    pub start_date: Option<NaiveDate>,
    pub end_date: Option<NaiveDate>,
}

#[derive(Debug, Deserialize, Serialize)]
struct TopicRecord {
    topic_id: String,
    #[serde(default)]
    title: String,
    #[serde(default)]
    description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start_date: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end_date: Option<String>,
}

/// Serializes a topic to one JSON line in the topic format.
pub fn topic_to_json(topic: &Topic) -> String {
    let fmt = |d: Option<NaiveDate>| d.map(|d| d.format("%Y-%m-%d").to_string());
    let rec = TopicRecord {
        topic_id: topic.topic_id.clone(),
        title: topic.title.clone(),
        description: topic.description.clone(),
        start_date: fmt(topic.start_date),
        end_date: fmt(topic.end_date),
    };
    serde_json::to_string(&rec).expect("topic record is always serializable")
}

/// Parses a calendar date.
///
/// Accepts `YYYY-MM-DD` (optionally followed by a time part), `YYYY-MM`,
/// `M/D/YYYY` and `M/YYYY`. Month-only forms resolve to the first of the month.
pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    let s = raw.trim();
    let s = s.split(['T', ' ']).next().unwrap_or(s);
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d);
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%m/%d/%Y") {
        return Some(d);
    }
    let month_first = |y: &str, m: &str| -> Option<NaiveDate> {
        let y: i32 = y.parse().ok()?;
        let m: u32 = m.parse().ok()?;
        NaiveDate::from_ymd_opt(y, m, 1)
    };
    if let Some((y, m)) = s.split_once('-') {
        if y.len() == 4 && !m.contains('-') {
            return month_first(y, m);
        }
    }
    if let Some((m, y)) = s.split_once('/') {
        if y.len() == 4 && !y.contains('/') {
            return month_first(y, m);
        }
    }
    None
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

/// Reads a JSON-lines document collection, preserving file order.
pub fn ingest_collection(path: &Path) -> Result<Vec<Document>> {
    let mut seen = HashSet::new();
    let mut docs = Vec::new();
    for (line, rec) in read_jsonl::<DocumentRecord>(path)? {
        let date = match rec.date.as_deref() {
            None | Some("") => None,
            Some(raw) => Some(
                parse_date(raw)
                    .ok_or_else(|| Error::parse(path, line, format!("unparseable date `{raw}`")))?,
            ),
        };
        if !seen.insert(rec.id.clone()) {
            return Err(Error::DuplicateId(rec.id));
        }
        docs.push(Document {
            doc_id: rec.id,
            title: rec.title,
            text: rec.text,
            lang: rec.lang,
            date,
        });
    }
    Ok(docs)
}

/// Checks every document language against the declared collection languages.
pub fn validate_languages(docs: &[Document], languages: &[&str]) -> Result<()> {
    match docs.iter().find(|d| !languages.contains(&d.lang.as_str())) {
        Some(d) => Err(Error::Validation(format!(
            "document `{}` has undeclared language `{}`",
            d.doc_id, d.lang
        ))),
        None => Ok(()),
    }
}

/// Reads a JSON-lines topic file.
pub fn read_topics(path: &Path) -> Result<Vec<Topic>> {
    let mut seen = HashSet::new();
    let mut topics = Vec::new();
    for (line, rec) in read_jsonl::<TopicRecord>(path)? {
        let date = |raw: Option<String>| -> Result<Option<NaiveDate>> {
            match raw.as_deref() {
                None | Some("") => Ok(None),
                Some(r) => parse_date(r)
                    .map(Some)
                    .ok_or_else(|| Error::parse(path, line, format!("unparseable date `{r}`"))),
            }
        };
        let start_date = date(rec.start_date)?;
        let end_date = date(rec.end_date)?;
        if let (Some(s), Some(e)) = (start_date, end_date) {
            if s > e {
                return Err(Error::parse(path, line, "start_date after end_date"));
            }
        }
        if !seen.insert(rec.topic_id.clone()) {
            return Err(Error::DuplicateId(rec.topic_id));
        }
        topics.push(Topic {
            topic_id: rec.topic_id,
            title: rec.title,
            description: rec.description,
            start_date,
            end_date,
        });
    }
    Ok(topics)
}

/// Maps a token to its stem. The default is the identity.
pub trait Stemmer: Send + Sync {
    fn stem(&self, token: String) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityStemmer;

impl Stemmer for IdentityStemmer {
    fn stem(&self, token: String) -> String {
        token
    }
}

pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// NFKC-normalizes, lowercases and splits on anything that is not a letter
/// or digit, then applies the stemmer.
#[derive(Debug, Clone, Default)]
pub struct DefaultTokenizer<S = IdentityStemmer> {
    stemmer: S,
}

impl DefaultTokenizer {
    pub fn new() -> Self {
        Self::default()
    }
}

impl<S: Stemmer> DefaultTokenizer<S> {
    pub fn with_stemmer(stemmer: S) -> Self {
        Self { stemmer }
    }
}

impl<S: Stemmer> Tokenizer for DefaultTokenizer<S> {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let normalized: String = text.nfkc().collect::<String>().to_lowercase();
        normalized
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| self.stemmer.stem(t.to_string()))
            .collect()
    }
}

/// A window `[start, end)` over a document's token sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Passage {
    pub doc_id: String,
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

impl Passage {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    /// `"<doc_id>#<index>"`, the key used in embedding files.
    pub fn key(&self) -> String {
        passage_key(&self.doc_id, self.index)
    }
}

pub fn passage_key(doc_id: &str, index: usize) -> String {
    format!("{doc_id}#{index}")
}

/// Recovers the document id from a passage key. Keys without a `#<n>`
/// suffix are taken to be whole-document keys.
pub fn doc_id_of_passage(key: &str) -> &str {
    match key.rsplit_once('#') {
        Some((doc, idx)) if !idx.is_empty() && idx.bytes().all(|b| b.is_ascii_digit()) => doc,
        _ => key,
    }
}

/// Splits a document of `num_tokens` tokens into overlapping windows.
///
/// Windows start at `0, stride, 2*stride, ...` and stop after the first
/// window whose end reaches the document length.
pub fn split_passages(
    doc_id: &str,
    num_tokens: usize,
    max_len: usize,
    stride: usize,
) -> Result<Vec<Passage>> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("max_len must be positive".into()));
    }
    if stride == 0 || stride > max_len {
        return Err(Error::InvalidArgument(format!(
            "stride must be in 1..={max_len}, got {stride}"
        )));
    }
    let mut out = Vec::new();
    if num_tokens == 0 {
        return Ok(out);
    }
    let mut start = 0;
    loop {
        let end = (start + max_len).min(num_tokens);
        out.push(Passage {
            doc_id: doc_id.to_string(),
            index: out.len(),
            start,
            end,
        });
        if end >= num_tokens {
            break;
        }
        start += stride;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum QueryVariant {
    #[serde(rename = "T")]
    Title,
    #[serde(rename = "D")]
    Description,
    #[default]
    #[serde(rename = "TD")]
    TitleDescription,
}

impl FromStr for QueryVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "T" => Ok(QueryVariant::Title),
            "D" => Ok(QueryVariant::Description),
            "TD" => Ok(QueryVariant::TitleDescription),
            _ => Err(Error::InvalidArgument(format!(
                "unknown query variant `{s}` (expected T, D or TD)"
            ))),
        }
    }
}

impl fmt::Display for QueryVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryVariant::Title => "T",
            QueryVariant::Description => "D",
            QueryVariant::TitleDescription => "TD",
        })
    }
}

/// Builds the query string for a topic. Raw strings are concatenated before
/// any tokenization.
pub fn form_query(topic: &Topic, variant: QueryVariant) -> Result<String> {
    let need = |field: &str, name: &str| -> Result<()> {
        if field.trim().is_empty() {
            Err(Error::InvalidArgument(format!(
                "topic `{}` has an empty {name}",
                topic.topic_id
            )))
        } else {
            Ok(())
        }
    };
    match variant {
        QueryVariant::Title => {
            need(&topic.title, "title")?;
            Ok(topic.title.clone())
        }
        QueryVariant::Description => {
            need(&topic.description, "description")?;
            Ok(topic.description.clone())
        }
        QueryVariant::TitleDescription => {
            need(&topic.title, "title")?;
            need(&topic.description, "description")?;
            Ok(format!("{} {}", topic.title, topic.description))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn topic(title: &str, desc: &str) -> Topic {
        Topic {
            topic_id: "t".into(),
            title: title.into(),
            description: desc.into(),
            start_date: None,
            end_date: None,
        }
    }

    #[test]
    fn ingest_three_documents() {
        let f = write_tmp(concat!(
            r#"{"id":"d1","title":"a","text":"x","lang":"fas"}"#,
            "\n",
            r#"{"id":"d2","title":"b","text":"y","lang":"rus","date":"2021-03-25"}"#,
            "\n\n",
            r#"{"id":"d3","title":"c","text":"z","lang":"zho"}"#,
            "\n"
        ));
        let docs = ingest_collection(f.path()).unwrap();
        let ids: Vec<_> = docs.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids, ["d1", "d2", "d3"]);
        assert_eq!(docs[1].date, NaiveDate::from_ymd_opt(2021, 3, 25));
        assert_eq!(docs[0].date, None);
        validate_languages(&docs, &["fas", "rus", "zho"]).unwrap();
        assert!(validate_languages(&docs, &["fas", "rus"]).is_err());
    }

    #[test]
    fn duplicate_document_id_is_named() {
        let f = write_tmp(concat!(
            r#"{"id":"d1","text":"x","lang":"fas"}"#,
            "\n",
            r#"{"id":"d1","text":"y","lang":"fas"}"#,
            "\n"
        ));
        let err = ingest_collection(f.path()).unwrap_err();
        assert!(matches!(&err, Error::DuplicateId(id) if id == "d1"), "{err}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_tmp(concat!(r#"{"id":"d1","text":"x","lang":"fas"}"#, "\n", "{oops\n"));
        match ingest_collection(f.path()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn date_forms() {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day);
        assert_eq!(parse_date("2021-03-25"), d(2021, 3, 25));
        assert_eq!(parse_date("2021-03-25T12:00:00Z"), d(2021, 3, 25));
        assert_eq!(parse_date("3/23/2021"), d(2021, 3, 23));
        assert_eq!(parse_date("12/2018"), d(2018, 12, 1));
        assert_eq!(parse_date("2018-12"), d(2018, 12, 1));
        assert_eq!(parse_date("yesterday"), None);
        assert_eq!(parse_date("2021-13-01"), None);
    }

    #[test]
    fn topics_reject_inverted_range() {
        let f = write_tmp(concat!(
            r#"{"topic_id":"203","title":"a","description":"b","start_date":"2021-03-29","end_date":"2021-03-23"}"#,
            "\n"
        ));
        assert!(read_topics(f.path()).is_err());
        let f = write_tmp(concat!(
            r#"{"topic_id":"255","title":"a","description":"b","start_date":"12/2018"}"#,
            "\n"
        ));
        let t = read_topics(f.path()).unwrap();
        assert_eq!(t[0].start_date, NaiveDate::from_ymd_opt(2018, 12, 1));
        assert_eq!(t[0].end_date, None);
    }

    #[test]
    fn passages_short_doc() {
        let p = split_passages("d", 100, 180, 90).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].start, p[0].end), (0, 100));
    }

    #[test]
    fn passages_270_tokens() {
        let p = split_passages("d", 270, 180, 90).unwrap();
        let spans: Vec<_> = p.iter().map(|p| (p.start, p.end)).collect();
        assert_eq!(spans, [(0, 180), (90, 270)]);
    }

    #[test]
    fn passages_450_tokens() {
        let p = split_passages("d", 450, 180, 90).unwrap();
        let starts: Vec<_> = p.iter().map(|p| p.start).collect();
        assert_eq!(starts, [0, 90, 180, 270]);
        assert_eq!(p.last().unwrap().end, 450);
        assert_eq!(p[3].key(), "d#3");
    }

    #[test]
    fn passages_empty_doc_and_bad_args() {
        assert!(split_passages("d", 0, 180, 90).unwrap().is_empty());
        assert!(split_passages("d", 10, 0, 1).is_err());
        assert!(split_passages("d", 10, 5, 0).is_err());
        assert!(split_passages("d", 10, 5, 6).is_err());
    }

    #[test]
    fn passage_key_round_trip() {
        assert_eq!(doc_id_of_passage("doc#7"), "doc");
        assert_eq!(doc_id_of_passage("a#b#12"), "a#b");
        assert_eq!(doc_id_of_passage("plain"), "plain");
        assert_eq!(doc_id_of_passage("x#"), "x#");
    }

    #[test]
    fn query_variants() {
        let t = topic("a b", "c");
        assert_eq!(form_query(&t, QueryVariant::TitleDescription).unwrap(), "a b c");
        assert_eq!(form_query(&t, QueryVariant::Title).unwrap(), "a b");
        assert_eq!(form_query(&t, QueryVariant::Description).unwrap(), "c");
        assert!(form_query(&topic("", "c"), QueryVariant::Title).is_err());
        assert!(form_query(&topic("", "c"), QueryVariant::TitleDescription).is_err());
        assert_eq!("td".parse::<QueryVariant>().unwrap(), QueryVariant::TitleDescription);
        assert!("x".parse::<QueryVariant>().is_err());
    }

    #[test]
    fn tokenizer_normalizes() {
        let tok = DefaultTokenizer::new();
        assert_eq!(tok.tokenize("Hello, WORLD! ｆｕｌｌ-width 42"), ["hello", "world", "full", "width", "42"]);
        assert!(tok.tokenize("  ...  ").is_empty());
    }

    /// Window enumeration straight from the definition: every start that is a
    /// multiple of the stride, up to and including the first window that
    /// reaches the end.
    fn enumerate_windows(len: usize, max_len: usize, stride: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for start in (0..len).step_by(stride) {
            let end = usize::min(start + max_len, len);
            out.push((start, end));
            if end == len {
                break;
            }
        }
        out
    }

    proptest! {
        #[test]
        fn passage_count_and_cover(len in 0usize..2000, max_len in 1usize..300, stride_frac in 0.01f64..=1.0) {
            let stride = ((max_len as f64 * stride_frac).ceil() as usize).clamp(1, max_len);
            let p = split_passages("d", len, max_len, stride).unwrap();
            let spans: Vec<_> = p.iter().map(|p| (p.start, p.end)).collect();
            prop_assert_eq!(&spans, &enumerate_windows(len, max_len, stride));
            if len > max_len {
                prop_assert_eq!(p.len(), 1 + (len - max_len).div_ceil(stride));
            }
            let mut covered = vec![false; len];
            for w in &p {
                prop_assert!(w.len() <= max_len);
                prop_assert!(w.end <= len);
                covered[w.start..w.end].iter_mut().for_each(|c| *c = true);
            }
            prop_assert!(covered.into_iter().all(|c| c));
            for pair in p.windows(2) {
                prop_assert_eq!(pair[1].start - pair[0].start, stride);
            }
        }

        #[test]
        fn tokenizer_is_deterministic(s in "\\PC{0,64}") {
            let tok = DefaultTokenizer::new();
            prop_assert_eq!(tok.tokenize(&s), tok.tokenize(&s));
        }
    }
}
