//! QA examples: tokenization, the JSONL record schema, and validated loading.
//!
//! A record on disk looks like
//!
//! ```json
//! {"id": "x", "question": "...", "answer": "...", "candidates": ["..."],
//!  "paragraphs": [{"title": "...", "sentences": ["...", "..."]}],
//!  "entities": [["..."]], "gold_chain": [0, 3], "supporting_facts": [0, 3]}
//! ```
//!
//! Sentence indices in `gold_chain`, `supporting_facts`, `entities` and the
//! oracle fields are global: sentences are numbered in document order across
//! all paragraphs.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub surface: String,
    pub lower: String,
}

impl Token {
    pub fn new(surface: impl Into<String>) -> Self {
        let surface = surface.into();
        let lower = surface.to_lowercase();
        Token { surface, lower }
    }
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Splits `text` on whitespace, then splits each word at apostrophes and
/// peels off its leading and trailing punctuation runs. Interior characters
/// such as the periods in `U.S` stay attached.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut piece_start = 0;
        for (i, c) in word.char_indices() {
            if is_apostrophe(c) {
                split_affixes(&word[piece_start..i], &mut out);
                out.push(Token::new(c.to_string()));
                piece_start = i + c.len_utf8();
            }
        }
        split_affixes(&word[piece_start..], &mut out);
    }
    out
}

fn split_affixes(piece: &str, out: &mut Vec<Token>) {
    if piece.is_empty() {
        return;
    }
    let core_start = piece
        .char_indices()
        .find(|&(_, c)| !is_punct(c))
        .map(|(i, _)| i);
    let Some(core_start) = core_start else {
        out.push(Token::new(piece));
        return;
    };
    let core_end = piece
        .char_indices()
        .rev()
        .find(|&(_, c)| !is_punct(c))
        .map(|(i, c)| i + c.len_utf8())
        .unwrap_or(piece.len());
    if core_start > 0 {
        out.push(Token::new(&piece[..core_start]));
    }
    out.push(Token::new(&piece[core_start..core_end]));
    if core_end < piece.len() {
        out.push(Token::new(&piece[core_end..]));
    }
}

pub fn lowered(tokens: &[Token]) -> Vec<&str> {
    tokens.iter().map(|t| t.lower.as_str()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sentence {
    pub global_index: usize,
    pub paragraph_index: usize,
    pub index_in_paragraph: usize,
    pub text: String,
    pub tokens: Vec<Token>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Paragraph {
    pub title: Option<String>,
    /// Global indices of this paragraph's sentences.
    pub sentences: Range<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub text: String,
    pub tokens: Vec<Token>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleStatus {
    Ok,
    Unreachable,
}

/// Oracle fields carried by records written by the `oracle` subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleAnnotation {
    pub status: OracleStatus,
    pub chain: Option<Vec<usize>>,
    pub pruned: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub question: String,
    pub question_tokens: Vec<Token>,
    pub answer: String,
    pub answer_tokens: Vec<Token>,
    pub candidates: Option<Vec<Candidate>>,
    pub paragraphs: Vec<Paragraph>,
    pub sentences: Vec<Sentence>,
    pub entities: Option<Vec<Vec<String>>>,
    pub gold_chain: Option<Vec<usize>>,
    pub supporting_facts: Option<Vec<usize>>,
    pub oracle: Option<OracleAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParagraphRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub sentences: Vec<String>,
}

/// On-disk form of an [`Example`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub question: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<String>>,
    pub paragraphs: Vec<ParagraphRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_chain: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supporting_facts: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_chain: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_status: Option<OracleStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_pruned: Option<bool>,
}

impl Example {
    /// Validates a record and assigns global sentence indices. `line` is only
    /// used for error messages.
    pub fn from_record(record: Record, line: usize) -> Result<Example> {
        let schema = |field: &'static str, message: String| Error::Schema {
            line,
            field,
            message,
        };

        let question_tokens = tokenize(&record.question);
        if question_tokens.is_empty() {
            return Err(schema("question", "question has no tokens".into()));
        }
        let answer_tokens = tokenize(&record.answer);
        if answer_tokens.is_empty() {
            return Err(schema("answer", "answer has no tokens".into()));
        }

        let mut paragraphs = Vec::with_capacity(record.paragraphs.len());
        let mut sentences = Vec::new();
        for (p, para) in record.paragraphs.into_iter().enumerate() {
            let start = sentences.len();
            for (k, text) in para.sentences.into_iter().enumerate() {
                let tokens = tokenize(&text);
                if tokens.is_empty() {
                    return Err(schema(
                        "paragraphs",
                        format!("sentence {k} of paragraph {p} is empty"),
                    ));
                }
                sentences.push(Sentence {
                    global_index: sentences.len(),
                    paragraph_index: p,
                    index_in_paragraph: k,
                    text,
                    tokens,
                });
            }
            paragraphs.push(Paragraph {
                title: para.title,
                sentences: start..sentences.len(),
            });
        }
        let n = sentences.len();

        let check_indices = |field: &'static str, indices: &[usize], distinct: bool| {
            if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
                return Err(schema(
                    field,
                    format!("sentence index {bad} out of range ({n} sentences)"),
                ));
            }
            if distinct {
                let mut seen = HashSet::new();
                if let Some(&dup) = indices.iter().find(|&&i| !seen.insert(i)) {
                    return Err(schema(field, format!("sentence index {dup} repeated")));
                }
            }
            Ok(())
        };
        if let Some(chain) = &record.gold_chain {
            if chain.is_empty() {
                return Err(schema("gold_chain", "chain is empty".into()));
            }
            check_indices("gold_chain", chain, true)?;
        }
        if let Some(facts) = &record.supporting_facts {
            check_indices("supporting_facts", facts, false)?;
        }
        if let Some(chain) = &record.oracle_chain {
            if chain.is_empty() {
                return Err(schema("oracle_chain", "chain is empty".into()));
            }
            check_indices("oracle_chain", chain, true)?;
        }
        if let Some(entities) = &record.entities {
            if entities.len() != n {
                return Err(schema(
                    "entities",
                    format!("{} entries for {n} sentences", entities.len()),
                ));
            }
        }

        let candidates = match record.candidates {
            None => None,
            Some(texts) => {
                if texts.is_empty() {
                    return Err(schema("candidates", "candidate list is empty".into()));
                }
                if let Some(k) = texts.iter().position(|t| tokenize(t).is_empty()) {
                    return Err(schema("candidates", format!("candidate {k} is empty")));
                }
                let answer_key = lowered(&answer_tokens);
                let candidates: Vec<Candidate> = texts
                    .into_iter()
                    .map(|text| Candidate {
                        tokens: tokenize(&text),
                        text,
                    })
                    .collect();
                let matches = candidates
                    .iter()
                    .filter(|c| lowered(&c.tokens) == answer_key)
                    .count();
                if matches != 1 {
                    return Err(schema(
                        "candidates",
                        format!("answer matches {matches} candidates, expected exactly 1"),
                    ));
                }
                Some(candidates)
            }
        };

        let oracle = match (record.oracle_status, record.oracle_chain) {
            (None, None) => None,
            (Some(OracleStatus::Unreachable), Some(_)) => {
                return Err(schema(
                    "oracle_chain",
                    "present although oracle_status is \"unreachable\"".into(),
                ))
            }
            (Some(OracleStatus::Ok), None) => {
                return Err(schema(
                    "oracle_chain",
                    "missing although oracle_status is \"ok\"".into(),
                ))
            }
            (status, chain) => Some(OracleAnnotation {
                status: status.unwrap_or(OracleStatus::Ok),
                chain,
                pruned: record.oracle_pruned,
            }),
        };

        Ok(Example {
            id: record.id,
            question: record.question,
            question_tokens,
            answer: record.answer,
            answer_tokens,
            candidates,
            paragraphs,
            sentences,
            entities: record.entities,
            gold_chain: record.gold_chain,
            supporting_facts: record.supporting_facts,
            oracle,
        })
    }

    pub fn to_record(&self) -> Record {
        Record {
            id: self.id.clone(),
            question: self.question.clone(),
            answer: self.answer.clone(),
            candidates: self
                .candidates
                .as_ref()
                .map(|cs| cs.iter().map(|c| c.text.clone()).collect()),
            paragraphs: self
                .paragraphs
                .iter()
                .map(|p| ParagraphRecord {
                    title: p.title.clone(),
                    sentences: self.sentences[p.sentences.clone()]
                        .iter()
                        .map(|s| s.text.clone())
                        .collect(),
                })
                .collect(),
            entities: self.entities.clone(),
            gold_chain: self.gold_chain.clone(),
            supporting_facts: self.supporting_facts.clone(),
            oracle_chain: self.oracle.as_ref().and_then(|o| o.chain.clone()),
            oracle_status: self.oracle.as_ref().map(|o| o.status),
            oracle_pruned: self.oracle.as_ref().and_then(|o| o.pruned),
        }
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    pub fn oracle_chain(&self) -> Option<&[usize]> {
        self.oracle.as_ref().and_then(|o| o.chain.as_deref())
    }

    /// Index of the candidate that matches the answer, if candidates exist.
    pub fn answer_candidate(&self) -> Option<usize> {
        let key = lowered(&self.answer_tokens);
        self.candidates
            .as_ref()?
            .iter()
            .position(|c| lowered(&c.tokens) == key)
    }

    /// The reference set for supporting-fact scoring: supporting facts when
    /// present, else the gold chain.
    pub fn gold_evidence(&self) -> Option<&[usize]> {
        self.supporting_facts
            .as_deref()
            .or(self.gold_chain.as_deref())
    }
}

/// Parses one JSONL line into a record, reporting the failing field path.
pub fn parse_record(line_text: &str, line: usize) -> Result<Record> {
    let de = &mut serde_json::Deserializer::from_str(line_text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let path = err.path().to_string();
        Error::Malformed {
            line,
            message: if path == "." {
                err.inner().to_string()
            } else {
                format!("field `{path}`: {}", err.inner())
            },
        }
    })
}

pub fn load_examples(path: impl AsRef<Path>) -> Result<Vec<Example>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record(&line, i + 1)?;
        out.push(Example::from_record(record, i + 1)?);
    }
    Ok(out)
}

pub fn write_examples(path: impl AsRef<Path>, examples: &[Example]) -> Result<()> {
    let records: Vec<Record> = examples.iter().map(Example::to_record).collect();
    write_jsonl(path, &records)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let de = &mut serde_json::Deserializer::from_str(&line);
        let item = serde_path_to_error::deserialize(de).map_err(|err| Error::Malformed {
            line: i + 1,
            message: format!("field `{}`: {}", err.path(), err.inner()),
        })?;
        out.push(item);
    }
    Ok(out)
}
