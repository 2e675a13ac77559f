//! Synthetic multi-hop corpora with planted chains.
//!
//! Each example plants a bridge chain `e0 → e1 → … → eL`: sentence `k`
//! reads "e(k-1) rel(k) ek" between optional filler words, and the answer is
//! `eL`. The question asks "who is the rel(L) of … the rel(1) of e0 ?".
//! Planted sentences sit in distinct paragraphs; the rest are filler distractors,
//! some of which mention chain entities again. Those spurious mentions are
//! only placed where they cannot open a path to the answer that is as short
//! as the planted one, so the shortest oracle chain is the planted chain.
//!
//! Entities are pairs of capitalized pseudo-words; everything else is
//! lowercase, so the heuristic mention finder sees exactly the entities.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Example, ParagraphRecord, Record};
use crate::entities::{is_stopword, CONNECTORS, DEFAULT_COMMON_ENTITY_THRESHOLD};
use crate::error::{Error, Result};
use crate::graph::DEFAULT_MAX_CHAIN_LEN;
use crate::rng::stream;

const RELATIONS: &[&str] = &[
    "mentor", "rival", "founder", "partner", "student", "neighbor", "editor", "patron", "heir",
    "ally", "captain", "sponsor", "tutor", "deputy", "cousin", "author",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub num_examples: usize,
    pub num_paragraphs: usize,
    pub sentences_per_paragraph: usize,
    pub min_chain_len: usize,
    pub max_chain_len: usize,
    pub num_candidates: usize,
    pub entity_vocab: usize,
    pub filler_vocab: usize,
    /// Probability that a distractor sentence mentions a chain entity.
    pub distractor_entity_rate: f64,
    /// Plant a sentence that starts from the question entity, like the first
    /// chain sentence, but leads to a decoy candidate and no further.
    pub hard_decoy: bool,
    /// Emit per-sentence `entities` annotations.
    pub explicit_entities: bool,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            num_examples: 2000,
            num_paragraphs: 4,
            sentences_per_paragraph: 4,
            min_chain_len: 2,
            max_chain_len: 3,
            num_candidates: 8,
            entity_vocab: 120,
            filler_vocab: 200,
            distractor_entity_rate: 0.3,
            hard_decoy: false,
            explicit_entities: false,
            seed: 13,
        }
    }
}

impl GenConfig {
    pub fn hard() -> Self {
        GenConfig {
            distractor_entity_rate: 0.7,
            hard_decoy: true,
            ..GenConfig::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(GenConfig::default()),
            "hard" => Ok(GenConfig::hard()),
            other => Err(Error::Config(format!("unknown preset `{other}` (expected default|hard)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.min_chain_len == 0 || self.min_chain_len > self.max_chain_len {
            return bad(format!(
                "chain length range {}..={} is empty or starts at 0",
                self.min_chain_len, self.max_chain_len
            ));
        }
        if self.max_chain_len > DEFAULT_MAX_CHAIN_LEN {
            return bad(format!(
                "max_chain_len {} exceeds the oracle search depth {DEFAULT_MAX_CHAIN_LEN}",
                self.max_chain_len
            ));
        }
        if self.num_candidates < 2 {
            return bad("num_candidates must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.distractor_entity_rate) {
            return bad("distractor_entity_rate must lie in [0, 1]".into());
        }
        let total = self.num_paragraphs * self.sentences_per_paragraph;
        if self.max_chain_len > total || self.max_chain_len > self.num_paragraphs {
            return bad(format!(
                "infeasible: chains of {} sentences need as many paragraphs ({} paragraphs, {total} sentences)",
                self.max_chain_len, self.num_paragraphs
            ));
        }
        if self.hard_decoy && self.sentences_per_paragraph < 2 {
            return bad("infeasible: the hard decoy needs two sentences per paragraph".into());
        }
        // Chain, one entity per distractor sentence, the decoy and candidates.
        let needed = self.max_chain_len + 2 + total + self.num_candidates;
        if self.entity_vocab < needed {
            return bad(format!("entity_vocab must be at least {needed} for this layout"));
        }
        if self.filler_vocab == 0 {
            return bad("filler_vocab must be at least 1".into());
        }
        Ok(())
    }
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

/// Distinct pseudo-words, independent of the corpus seed so that entity and
/// filler identities carry over between corpora.
fn pseudo_words(syllables: usize, count: usize, salt: &str) -> Vec<String> {
    let mut pool: Vec<String> = vec![String::new()];
    for _ in 0..syllables {
        pool = pool
            .iter()
            .flat_map(|p| {
                ONSETS
                    .iter()
                    .flat_map(move |o| VOWELS.iter().map(move |v| format!("{p}{o}{v}")))
            })
            .collect();
    }
    pool.retain(|w| !is_stopword(w) && !CONNECTORS.contains(&w.as_str()) && !RELATIONS.contains(&w.as_str()));
    pool.shuffle(&mut stream(0, salt, 0));
    pool.truncate(count);
    pool
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

struct Lexicon {
    entities: Vec<String>,
    fillers: Vec<String>,
}

impl Lexicon {
    fn new(config: &GenConfig) -> Self {
        let words = pseudo_words(2, 2 * config.entity_vocab, "syngen-names");
        let entities = words
            .chunks(2)
            .map(|p| format!("{} {}", capitalize(&p[0]), capitalize(&p[1])))
            .collect();
        // Three-syllable fillers never collide with two-syllable name parts.
        let fillers = pseudo_words(3, config.filler_vocab, "syngen-fillers");
        Lexicon { entities, fillers }
    }
}

/// One sentence under construction: words plus the entities it mentions.
#[derive(Default)]
struct Draft {
    words: Vec<String>,
    entities: Vec<String>,
}

impl Draft {
    fn text(&self) -> String {
        let mut t = self.words.join(" ");
        t.push_str(" .");
        t
    }
}

struct Builder<'a> {
    rng: ChaCha8Rng,
    lex: &'a Lexicon,
}

impl Builder<'_> {
    fn fillers(&mut self, lo: usize, hi: usize) -> Vec<String> {
        let n = self.rng.gen_range(lo..=hi);
        (0..n)
            .map(|_| self.lex.fillers.choose(&mut self.rng).expect("fillers").clone())
            .collect()
    }

    /// `[filler] source relation target [filler] .` for a planted link,
    /// otherwise `[filler] target [relation] [filler] .`
    fn sentence(&mut self, source: Option<&str>, relation: Option<&str>, target: &str) -> Draft {
        let mut d = Draft {
            words: self.fillers(0, 1),
            entities: Vec::new(),
        };
        match (source, relation) {
            (Some(src), Some(r)) => {
                d.words.extend([src, r, target].map(String::from));
                d.entities = vec![src.to_string(), target.to_string()];
            }
            (None, Some(r)) => d.words.extend([target, r].map(String::from)),
            _ => d.words.push(target.to_string()),
        }
        if d.entities.is_empty() {
            d.entities.push(target.to_string());
        }
        let tail = self.fillers(0, 1);
        d.words.extend(tail);
        d
    }
}

pub fn generate_corpus(config: &GenConfig) -> Result<Vec<Example>> {
    config.validate()?;
    let lex = Lexicon::new(config);
    (0..config.num_examples)
        .into_par_iter()
        .map(|i| generate_example(config, &lex, i))
        .collect()
}

fn generate_example(config: &GenConfig, lex: &Lexicon, index: usize) -> Result<Example> {
    let mut b = Builder {
        rng: stream(config.seed, "syngen-example", index as u64),
        lex,
    };
    let len = b.rng.gen_range(config.min_chain_len..=config.max_chain_len);
    let mut entity_order: Vec<&String> = lex.entities.iter().collect();
    entity_order.shuffle(&mut b.rng);
    let mut fresh = entity_order.into_iter();
    let mut take = || fresh.next().expect("entity vocabulary validated").clone();

    let chain: Vec<String> = (0..=len).map(|_| take()).collect();
    let relations: Vec<&str> = RELATIONS.choose_multiple(&mut b.rng, len).copied().collect();

    let np = config.num_paragraphs;
    let sp = config.sentences_per_paragraph;
    let mut paragraph_order: Vec<usize> = (0..np).collect();
    paragraph_order.shuffle(&mut b.rng);
    // planted_para[k] holds planted sentence k + 1.
    let planted_para: Vec<usize> = paragraph_order[..len].to_vec();
    let planted_slot: Vec<usize> = (0..len).map(|_| b.rng.gen_range(0..sp)).collect();

    let mut grid: Vec<Vec<Option<Draft>>> = (0..np).map(|_| (0..sp).map(|_| None).collect()).collect();
    for k in 0..len {
        let d = b.sentence(Some(&chain[k]), Some(relations[k]), &chain[k + 1]);
        grid[planted_para[k]][planted_slot[k]] = Some(d);
    }

    // How many sentences mention each chain entity so far.
    let mut uses: BTreeMap<usize, usize> = (0..=len).map(|k| (k, if k == 0 || k == len { 1 } else { 2 })).collect();
    let cap = DEFAULT_COMMON_ENTITY_THRESHOLD;

    let mut decoys = Vec::new();
    if config.hard_decoy {
        let para = planted_para[0];
        let free: Vec<usize> = (0..sp).filter(|&s| grid[para][s].is_none()).collect();
        let slot = *free.choose(&mut b.rng).expect("validated");
        let other: Vec<&str> = RELATIONS.iter().copied().filter(|r| !relations.contains(r)).collect();
        let rel = *other.choose(&mut b.rng).expect("relations");
        let decoy = take();
        grid[para][slot] = Some(b.sentence(Some(&chain[0]), Some(rel), &decoy));
        *uses.get_mut(&0).expect("chain entity") += 1;
        decoys.push(decoy);
    }

    // Chain entity a paragraph may mention spuriously: planted paragraph of
    // sentence j admits e(j-1) and e(j); other paragraphs admit a single one.
    let mut paragraph_entity: Vec<Option<usize>> = vec![None; np];
    for p in 0..np {
        for s in 0..sp {
            if grid[p][s].is_some() {
                continue;
            }
            let mut mention = None;
            if b.rng.gen_bool(config.distractor_entity_rate) {
                let allowed: Vec<usize> = match planted_para.iter().position(|&q| q == p) {
                    Some(k) => vec![k, k + 1].into_iter().filter(|&e| e < len).collect(),
                    None => match paragraph_entity[p] {
                        Some(e) => vec![e],
                        None => (0..len).collect(),
                    },
                };
                let allowed: Vec<usize> = allowed.into_iter().filter(|e| uses[e] < cap).collect();
                if let Some(&e) = allowed.choose(&mut b.rng) {
                    *uses.get_mut(&e).expect("chain entity") += 1;
                    if !planted_para.contains(&p) {
                        paragraph_entity[p] = Some(e);
                    }
                    mention = Some(chain[e].clone());
                }
            }
            let relation = b.rng.gen_bool(0.5).then(|| *RELATIONS.choose(&mut b.rng).expect("relations"));
            let subject = match mention {
                Some(e) => e,
                None => {
                    let own = take();
                    decoys.push(own.clone());
                    own
                }
            };
            let draft = b.sentence(None, relation, &subject);
            grid[p][s] = Some(draft);
        }
    }

    let mut candidates = vec![chain[len].clone()];
    candidates.extend(chain[..len].iter().cloned());
    candidates.extend(decoys);
    candidates.truncate(config.num_candidates);
    while candidates.len() < config.num_candidates {
        candidates.push(take());
    }
    candidates.shuffle(&mut b.rng);

    let mut global = 0;
    let mut gold = vec![0; len];
    let mut paragraphs = Vec::with_capacity(np);
    let mut entities = Vec::new();
    for (p, row) in grid.into_iter().enumerate() {
        let mut sentences = Vec::with_capacity(sp);
        for (s, draft) in row.into_iter().enumerate() {
            let draft = draft.expect("every slot filled");
            if let Some(k) = (0..len).find(|&k| planted_para[k] == p && planted_slot[k] == s) {
                gold[k] = global;
            }
            sentences.push(draft.text());
            entities.push(draft.entities);
            global += 1;
        }
        paragraphs.push(ParagraphRecord { title: None, sentences });
    }

    let mut question = String::from("who is the");
    for (k, rel) in relations.iter().rev().enumerate() {
        if k > 0 {
            question.push_str(" of the");
        }
        question.push(' ');
        question.push_str(rel);
    }
    question.push_str(&format!(" of {} ?", chain[0]));

    let record = Record {
        id: format!("syn-{}-{index:05}", config.seed),
        question,
        answer: chain[len].clone(),
        candidates: Some(candidates),
        paragraphs,
        entities: config.explicit_entities.then_some(entities),
        gold_chain: Some(gold.clone()),
        supporting_facts: Some(gold),
        oracle_chain: None,
        oracle_status: None,
        oracle_pruned: None,
    };
    Example::from_record(record, index + 1)
}
