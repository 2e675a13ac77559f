//! Heuristic entity mentions and the entity → sentences index.
//!
//! Mentions are maximal runs of capitalized tokens (optionally bridged by
//! lowercase connectors such as `of the`) plus four-digit numbers. Records
//! that carry an `entities` field bypass the heuristic for their sentences.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{Example, Token};

pub const DEFAULT_COMMON_ENTITY_THRESHOLD: usize = 5;

/// Lowercase tokens that may sit inside a mention when capitalized tokens
/// flank them on both sides.
pub const CONNECTORS: &[&str] = &["of", "the", "and", "de", "di", "van", "von"];

/// Function words ignored by the question-overlap fallback in the graph and
/// never allowed to open a mention.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "an", "and", "are", "as", "at", "be", "been", "but",
    "by", "did", "do", "does", "for", "from", "had", "has", "have", "he", "her", "his", "how",
    "in", "into", "is", "it", "its", "of", "on", "or", "she", "that", "the", "their", "them",
    "they", "this", "to", "was", "were", "what", "when", "where", "which", "who", "whom",
    "whose", "why", "with",
];

pub fn is_stopword(lower: &str) -> bool {
    STOPWORDS.binary_search(&lower).is_ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Site {
    Question,
    Sentence(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mention {
    pub normalized: String,
    pub site: Site,
}

fn is_capitalized(token: &Token) -> bool {
    token.surface.chars().next().is_some_and(char::is_uppercase)
}

fn is_year(token: &Token) -> bool {
    token.surface.len() == 4 && token.surface.bytes().all(|b| b.is_ascii_digit())
}

fn is_connector(token: &Token) -> bool {
    token.surface == token.lower && CONNECTORS.contains(&token.lower.as_str())
}

/// Lowercases, collapses whitespace and strips leading/trailing punctuation.
pub fn normalize_entity(text: &str) -> String {
    let joined = text.split_whitespace().collect::<Vec<_>>().join(" ");
    joined
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

pub fn extract_mentions(tokens: &[Token], site: Site) -> Vec<Mention> {
    let mut out = Vec::new();
    let mut push = |run: &[Token]| {
        // A run never opens with a capitalized function word ("The", "Which").
        let start = run
            .iter()
            .position(|t| !is_stopword(&t.lower))
            .unwrap_or(run.len());
        let run = &run[start..];
        if run.is_empty() {
            return;
        }
        let text: Vec<&str> = run.iter().map(|t| t.surface.as_str()).collect();
        let normalized = normalize_entity(&text.join(" "));
        if !normalized.is_empty() {
            out.push(Mention { normalized, site });
        }
    };

    let mut i = 0;
    while i < tokens.len() {
        if is_year(&tokens[i]) {
            push(&tokens[i..=i]);
            i += 1;
            continue;
        }
        if !is_capitalized(&tokens[i]) {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i + 1;
        loop {
            while end < tokens.len() && is_capitalized(&tokens[end]) {
                end += 1;
            }
            let mut bridge = end;
            while bridge < tokens.len() && is_connector(&tokens[bridge]) {
                bridge += 1;
            }
            if bridge > end && bridge < tokens.len() && is_capitalized(&tokens[bridge]) {
                end = bridge;
            } else {
                break;
            }
        }
        push(&tokens[start..end]);
        i = end;
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityIndex {
    pub sentences_by_entity: BTreeMap<String, BTreeSet<usize>>,
    pub question_entities: BTreeSet<String>,
}

impl EntityIndex {
    /// Global indices of sentences mentioning any of the question's entities.
    pub fn question_sentences(&self) -> BTreeSet<usize> {
        self.question_entities
            .iter()
            .filter_map(|e| self.sentences_by_entity.get(e))
            .flatten()
            .copied()
            .collect()
    }
}

/// Builds the index, dropping every entity that occurs in more than
/// `threshold` distinct sentences.
pub fn build_entity_index(example: &Example, threshold: usize) -> EntityIndex {
    let mut sentences_by_entity: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
    match &example.entities {
        Some(annotated) => {
            for (g, mentions) in annotated.iter().enumerate() {
                for m in mentions {
                    let normalized = normalize_entity(m);
                    if !normalized.is_empty() {
                        sentences_by_entity.entry(normalized).or_default().insert(g);
                    }
                }
            }
        }
        None => {
            for s in &example.sentences {
                for m in extract_mentions(&s.tokens, Site::Sentence(s.global_index)) {
                    sentences_by_entity
                        .entry(m.normalized)
                        .or_default()
                        .insert(s.global_index);
                }
            }
        }
    }
    sentences_by_entity.retain(|_, sents| sents.len() <= threshold);

    let question_entities = extract_mentions(&example.question_tokens, Site::Question)
        .into_iter()
        .map(|m| m.normalized)
        .collect();
    EntityIndex {
        sentences_by_entity,
        question_entities,
    }
}
