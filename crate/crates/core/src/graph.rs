//! Sentence graph and exhaustive chain enumeration.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::corpus::{lowered, Example};
use crate::entities::{is_stopword, EntityIndex};

pub const DEFAULT_MAX_CHAIN_LEN: usize = 4;

/// Why two nodes are adjacent. An edge may carry both kinds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Provenance {
    pub shared_entity: bool,
    pub same_paragraph: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentenceGraph {
    adjacency: Vec<BTreeMap<usize, Provenance>>,
    question_links: BTreeSet<usize>,
    answer_nodes: BTreeSet<usize>,
}

/// An ordered chain of global sentence indices, question node excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub sentences: Vec<usize>,
    pub score: Option<f64>,
}

impl Chain {
    pub fn new(sentences: Vec<usize>) -> Self {
        Chain {
            sentences,
            score: None,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSet {
    /// Distinct chains in lexicographic order of their index sequences.
    pub chains: Vec<Chain>,
    /// True when the length cap cut off at least one extendable path.
    pub pruned: bool,
}

#[derive(Debug, Serialize)]
pub struct GraphDump {
    pub edges: Vec<(i64, i64, &'static str)>,
    pub answers: Vec<usize>,
}

impl SentenceGraph {
    /// Builds a graph directly from its parts; edges are symmetrized.
    pub fn from_parts(
        num_sentences: usize,
        edges: impl IntoIterator<Item = (usize, usize, Provenance)>,
        question_links: impl IntoIterator<Item = usize>,
        answer_nodes: impl IntoIterator<Item = usize>,
    ) -> Self {
        let mut graph = SentenceGraph {
            adjacency: vec![BTreeMap::new(); num_sentences],
            question_links: question_links.into_iter().collect(),
            answer_nodes: answer_nodes.into_iter().collect(),
        };
        for (i, j, prov) in edges {
            if prov.shared_entity {
                graph.link(i, j, |p| p.shared_entity = true);
            }
            if prov.same_paragraph {
                graph.link(i, j, |p| p.same_paragraph = true);
            }
        }
        graph
    }

    fn link(&mut self, i: usize, j: usize, set: impl Fn(&mut Provenance)) {
        if i == j {
            return;
        }
        set(self.adjacency[i].entry(j).or_default());
        set(self.adjacency[j].entry(i).or_default());
    }

    pub fn num_sentences(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = (usize, Provenance)> + '_ {
        self.adjacency[node].iter().map(|(&n, &p)| (n, p))
    }

    pub fn edge(&self, i: usize, j: usize) -> Option<Provenance> {
        self.adjacency.get(i)?.get(&j).copied()
    }

    pub fn question_links(&self) -> &BTreeSet<usize> {
        &self.question_links
    }

    pub fn answer_nodes(&self) -> &BTreeSet<usize> {
        &self.answer_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(BTreeMap::len).sum::<usize>() / 2
    }

    /// Debug form with the question node written as `-1`.
    pub fn dump(&self) -> GraphDump {
        let mut edges = Vec::new();
        for &s in &self.question_links {
            edges.push((-1, s as i64, "question_link"));
        }
        for (i, adj) in self.adjacency.iter().enumerate() {
            for (&j, prov) in adj.range(i + 1..) {
                if prov.shared_entity {
                    edges.push((i as i64, j as i64, "shared_entity"));
                }
                if prov.same_paragraph {
                    edges.push((i as i64, j as i64, "same_paragraph"));
                }
            }
        }
        GraphDump {
            edges,
            answers: self.answer_nodes.iter().copied().collect(),
        }
    }
}

/// Sentences whose lowercased tokens contain the lowercased answer tokens as
/// a contiguous subsequence.
pub fn find_answer_sentences(example: &Example) -> BTreeSet<usize> {
    let answer = lowered(&example.answer_tokens);
    example
        .sentences
        .iter()
        .filter(|s| contains_run(&lowered(&s.tokens), &answer))
        .map(|s| s.global_index)
        .collect()
}

pub(crate) fn contains_run(haystack: &[&str], needle: &[&str]) -> bool {
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle)
}

fn content_words<'a>(tokens: impl Iterator<Item = &'a str>) -> BTreeSet<&'a str> {
    tokens
        .filter(|t| !is_stopword(t) && t.chars().any(char::is_alphanumeric))
        .collect()
}

pub fn build_graph(example: &Example, index: &EntityIndex) -> SentenceGraph {
    let n = example.num_sentences();
    let mut edges = Vec::new();
    for sents in index.sentences_by_entity.values() {
        let sents: Vec<usize> = sents.iter().copied().collect();
        for (a, &i) in sents.iter().enumerate() {
            for &j in &sents[a + 1..] {
                edges.push((
                    i,
                    j,
                    Provenance {
                        shared_entity: true,
                        same_paragraph: false,
                    },
                ));
            }
        }
    }
    for para in &example.paragraphs {
        for i in para.sentences.clone() {
            for j in i + 1..para.sentences.end {
                edges.push((
                    i,
                    j,
                    Provenance {
                        shared_entity: false,
                        same_paragraph: true,
                    },
                ));
            }
        }
    }

    let question_links = if index.question_entities.is_empty() {
        let question = content_words(example.question_tokens.iter().map(|t| t.lower.as_str()));
        example
            .sentences
            .iter()
            .filter(|s| {
                let words = content_words(s.tokens.iter().map(|t| t.lower.as_str()));
                !question.is_disjoint(&words)
            })
            .map(|s| s.global_index)
            .collect()
    } else {
        index.question_sentences()
    };

    SentenceGraph::from_parts(n, edges, question_links, find_answer_sentences(example))
}

/// All simple paths question → … → answer node with `1..=max_len` sentences.
pub fn enumerate_chains(graph: &SentenceGraph, max_len: usize) -> ChainSet {
    let mut chains = Vec::new();
    let mut pruned = false;
    let mut path = Vec::with_capacity(max_len);
    let mut on_path = vec![false; graph.num_sentences()];
    for &start in graph.question_links() {
        extend(graph, max_len, start, &mut path, &mut on_path, &mut chains, &mut pruned);
    }
    // DFS from ascending starts over ordered adjacency already yields
    // lexicographic order, and simple paths are never revisited.
    debug_assert!(chains.windows(2).all(|w: &[Vec<usize>]| w[0] < w[1]));
    ChainSet {
        chains: chains.into_iter().map(Chain::new).collect(),
        pruned,
    }
}

fn extend(
    graph: &SentenceGraph,
    max_len: usize,
    node: usize,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    out: &mut Vec<Vec<usize>>,
    pruned: &mut bool,
) {
    path.push(node);
    on_path[node] = true;
    if graph.answer_nodes().contains(&node) {
        out.push(path.clone());
    }
    if path.len() < max_len {
        for (next, _) in graph.neighbors(node) {
            if !on_path[next] {
                extend(graph, max_len, next, path, on_path, out, pruned);
            }
        }
    } else if graph.neighbors(node).any(|(next, _)| !on_path[next]) {
        *pruned = true;
    }
    on_path[node] = false;
    path.pop();
}
