//! Dyadic dialogue corpora: ingestion, validation, filtering, statistics,
//! and human-annotation files.
//!
//! On-disk formats:
//! - Dialogue JSONL: one record per line,
//!   `{"id": "...", "turns": [{"speaker": "...", "text": "..."}]}`.
//! - Plain text: blank-line-separated dialogues; each line is
//!   `speaker<TAB>text` or `speaker: text`.
//! - Annotation JSON: an array of per-conversation objects with the same
//!   `id`/`turns` fields plus `dialog_ratings` (aspect -> number) and
//!   `turn_ratings` (array aligned to turns, each aspect -> number).
//!
//! Speaker tags are normalized on load: the first speaker to utter becomes
//! `A`, the second distinct speaker becomes `B`. Records that are not
//! dyadic (one speaker, or more than two) are skipped with a warning
//! rather than failing the whole load.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path} at record {record}: {message}")]
    Parse {
        path: String,
        record: usize,
        message: String,
    },

    #[error("invalid dialogue {id}: {message}")]
    InvalidDialogue { id: String, message: String },

    #[error("invalid turn range: min_turns={min_turns}, max_turns={max_turns}")]
    InvalidRange { min_turns: usize, max_turns: usize },
}

/// One of the two participants in a dyadic dialogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Speaker {
    A,
    B,
}

impl Speaker {
    pub fn other(self) -> Speaker {
        match self {
            Speaker::A => Speaker::B,
            Speaker::B => Speaker::A,
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Speaker::A => write!(f, "A"),
            Speaker::B => write!(f, "B"),
        }
    }
}

/// One speaker turn. `position` is 1-based within its dialogue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub position: usize,
    pub speaker: Speaker,
    pub text: String,
}

/// An ordered dyadic utterance sequence; the unit of scoring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dialogue {
    pub id: String,
    pub utterances: Vec<Utterance>,
}

impl Dialogue {
    /// Builds a dialogue and checks its invariants: positions contiguous
    /// from 1, texts non-empty after trimming, and both speakers present.
    pub fn new(id: impl Into<String>, utterances: Vec<Utterance>) -> Result<Self, CorpusError> {
        let id = id.into();
        let invalid = |message: String| CorpusError::InvalidDialogue {
            id: id.clone(),
            message,
        };
        if utterances.is_empty() {
            return Err(invalid("dialogue has no utterances".into()));
        }
        for (i, utt) in utterances.iter().enumerate() {
            if utt.position != i + 1 {
                return Err(invalid(format!(
                    "positions not contiguous: expected {} at index {i}, found {}",
                    i + 1,
                    utt.position
                )));
            }
            if utt.text.trim().is_empty() {
                return Err(invalid(format!("empty text at position {}", i + 1)));
            }
        }
        let has_a = utterances.iter().any(|u| u.speaker == Speaker::A);
        let has_b = utterances.iter().any(|u| u.speaker == Speaker::B);
        if !has_a || !has_b {
            return Err(invalid("not dyadic: only one speaker present".into()));
        }
        Ok(Dialogue { id, utterances })
    }

    /// Number of utterances.
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Speaker tag per position, in order.
    pub fn speakers(&self) -> Vec<Speaker> {
        self.utterances.iter().map(|u| u.speaker).collect()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.utterances.iter().map(|u| u.text.as_str())
    }

    /// The first `len` utterances, used for turn-level scoring. The result
    /// intentionally skips the dyadic check: a one-turn prefix has a single
    /// speaker and is still scoreable.
    pub fn prefix(&self, len: usize) -> Dialogue {
        Dialogue {
            id: format!("{}#1..{len}", self.id),
            utterances: self.utterances[..len.min(self.utterances.len())].to_vec(),
        }
    }
}

/// A dialogue plus its human quality ratings at dialogue and turn level.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedDialogue {
    pub dialogue: Dialogue,
    /// Aspect name -> rating for the whole dialogue.
    pub dialogue_ratings: BTreeMap<String, f64>,
    /// (1-based position, aspect name) -> rating for a single turn.
    pub turn_ratings: BTreeMap<(usize, String), f64>,
}

/// Summary counts over a dialogue list. Word counts use whitespace splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub dialogues: usize,
    pub utterances: usize,
    pub words: usize,
    pub avg_turns_per_dialogue: f64,
    pub avg_words_per_dialogue: f64,
}

/// Supported corpus file formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Plain,
}

// Wire form of a dialogue record; positions are implicit in turn order.
#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct DialogueRecord {
    pub id: String,
    pub turns: Vec<TurnRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct TurnRecord {
    pub speaker: String,
    pub text: String,
}

impl From<&Dialogue> for DialogueRecord {
    fn from(d: &Dialogue) -> Self {
        DialogueRecord {
            id: d.id.clone(),
            turns: d
                .utterances
                .iter()
                .map(|u| TurnRecord {
                    speaker: u.speaker.to_string(),
                    text: u.text.clone(),
                })
                .collect(),
        }
    }
}

impl DialogueRecord {
    /// Normalizes speaker labels (first to utter becomes A) and validates
    /// the dialogue invariants.
    pub(crate) fn into_dialogue(self) -> Result<Dialogue, CorpusError> {
        let mut order: Vec<String> = Vec::new();
        let mut utterances = Vec::with_capacity(self.turns.len());
        for (i, turn) in self.turns.into_iter().enumerate() {
            let speaker = match order.iter().position(|s| *s == turn.speaker) {
                Some(0) => Speaker::A,
                Some(1) => Speaker::B,
                Some(_) => unreachable!("at most two distinct speakers recorded"),
                None => {
                    order.push(turn.speaker.clone());
                    match order.len() {
                        1 => Speaker::A,
                        2 => Speaker::B,
                        _ => {
                            return Err(CorpusError::InvalidDialogue {
                                id: self.id,
                                message: format!(
                                    "more than two speakers (third: {:?} at turn {})",
                                    turn.speaker,
                                    i + 1
                                ),
                            })
                        }
                    }
                }
            };
            utterances.push(Utterance {
                position: i + 1,
                speaker,
                text: turn.text.trim().to_string(),
            });
        }
        Dialogue::new(self.id, utterances)
    }
}

fn read_file(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a dialogue corpus, normalizing speakers to A/B by order of first
/// appearance. Structurally malformed input is a hard error naming the
/// record; dialogues violating the dyadic invariants are skipped with a
/// warning.
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<Dialogue>, CorpusError> {
    let content = read_file(path)?;
    let records = match format {
        CorpusFormat::Jsonl => parse_jsonl(path, &content)?,
        CorpusFormat::Plain => parse_plain(path, &content)?,
    };
    let mut dialogues = Vec::with_capacity(records.len());
    for record in records {
        let id = record.id.clone();
        match record.into_dialogue() {
            Ok(d) => dialogues.push(d),
            Err(err) => log::warn!("skipping dialogue {id:?}: {err}"),
        }
    }
    Ok(dialogues)
}

fn parse_jsonl(path: &Path, content: &str) -> Result<Vec<DialogueRecord>, CorpusError> {
    let mut records = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: DialogueRecord =
            serde_json::from_str(line).map_err(|e| CorpusError::Parse {
                path: path.display().to_string(),
                record: lineno + 1,
                message: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

fn parse_plain(path: &Path, content: &str) -> Result<Vec<DialogueRecord>, CorpusError> {
    let mut records = Vec::new();
    let mut turns: Vec<TurnRecord> = Vec::new();
    let mut flush = |turns: &mut Vec<TurnRecord>, records: &mut Vec<DialogueRecord>| {
        if !turns.is_empty() {
            records.push(DialogueRecord {
                id: format!("d{:05}", records.len() + 1),
                turns: std::mem::take(turns),
            });
        }
    };
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            flush(&mut turns, &mut records);
            continue;
        }
        let (speaker, text) = if let Some((s, t)) = line.split_once('\t') {
            (s, t)
        } else if let Some((s, t)) = line.split_once(':') {
            (s, t)
        } else {
            return Err(CorpusError::Parse {
                path: path.display().to_string(),
                record: lineno + 1,
                message: "expected `speaker<TAB>text` or `speaker: text`".into(),
            });
        };
        turns.push(TurnRecord {
            speaker: speaker.trim().to_string(),
            text: text.trim().to_string(),
        });
    }
    flush(&mut turns, &mut records);
    Ok(records)
}

/// Writes dialogues as JSONL with normalized A/B speaker tags.
/// `load_corpus` of the written file reproduces the dialogues exactly.
pub fn save_corpus(path: &Path, dialogues: &[Dialogue]) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    for d in dialogues {
        let record = DialogueRecord::from(d);
        let line = serde_json::to_string(&record).expect("dialogue record serializes");
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Keeps exactly the dialogues with `min_turns <= n <= max_turns`
/// (both bounds inclusive), preserving order.
pub fn filter_corpus(
    dialogues: Vec<Dialogue>,
    min_turns: usize,
    max_turns: usize,
) -> Result<Vec<Dialogue>, CorpusError> {
    if min_turns < 1 || max_turns < min_turns {
        return Err(CorpusError::InvalidRange {
            min_turns,
            max_turns,
        });
    }
    Ok(dialogues
        .into_iter()
        .filter(|d| (min_turns..=max_turns).contains(&d.len()))
        .collect())
}

/// Default turn-count filter bounds used throughout the pipeline.
pub const DEFAULT_MIN_TURNS: usize = 4;
pub const DEFAULT_MAX_TURNS: usize = 30;

/// Counts dialogues, utterances, and whitespace-split words; empty input
/// yields all-zero stats.
pub fn corpus_stats(dialogues: &[Dialogue]) -> CorpusStats {
    let utterances: usize = dialogues.iter().map(Dialogue::len).sum();
    let words: usize = dialogues
        .iter()
        .flat_map(|d| d.texts())
        .map(|t| t.split_whitespace().count())
        .sum();
    let n = dialogues.len();
    CorpusStats {
        dialogues: n,
        utterances,
        words,
        avg_turns_per_dialogue: if n == 0 { 0.0 } else { utterances as f64 / n as f64 },
        avg_words_per_dialogue: if n == 0 { 0.0 } else { words as f64 / n as f64 },
    }
}

#[derive(Debug, Deserialize)]
struct AnnotationRecord {
    id: String,
    turns: Vec<TurnRecord>,
    #[serde(default)]
    dialog_ratings: BTreeMap<String, f64>,
    #[serde(default)]
    turn_ratings: Vec<BTreeMap<String, f64>>,
}

/// Loads an annotation file (JSON array of per-conversation objects).
/// Aspect names are preserved verbatim. A record whose `turn_ratings`
/// array is longer than its turn list references missing turns and is
/// rejected with a warning.
pub fn load_annotations(path: &Path) -> Result<Vec<AnnotatedDialogue>, CorpusError> {
    let content = read_file(path)?;
    let records: Vec<AnnotationRecord> =
        serde_json::from_str(&content).map_err(|e| CorpusError::Parse {
            path: path.display().to_string(),
            record: 0,
            message: e.to_string(),
        })?;
    let mut out = Vec::with_capacity(records.len());
    for record in records {
        let id = record.id.clone();
        match convert_annotation(record) {
            Ok(a) => out.push(a),
            Err(err) => log::warn!("skipping annotated dialogue {id:?}: {err}"),
        }
    }
    Ok(out)
}

fn convert_annotation(record: AnnotationRecord) -> Result<AnnotatedDialogue, CorpusError> {
    let n_turns = record.turns.len();
    if record.turn_ratings.len() > n_turns {
        return Err(CorpusError::InvalidDialogue {
            id: record.id,
            message: format!(
                "turn_ratings has {} entries but the dialogue has {} turns",
                record.turn_ratings.len(),
                n_turns
            ),
        });
    }
    let dialogue = DialogueRecord {
        id: record.id,
        turns: record.turns,
    }
    .into_dialogue()?;
    let mut turn_ratings = BTreeMap::new();
    for (idx, aspects) in record.turn_ratings.into_iter().enumerate() {
        for (aspect, rating) in aspects {
            turn_ratings.insert((idx + 1, aspect), rating);
        }
    }
    Ok(AnnotatedDialogue {
        dialogue,
        dialogue_ratings: record.dialog_ratings,
        turn_ratings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    pub(crate) fn dialogue(id: &str, turns: &[(Speaker, &str)]) -> Dialogue {
        Dialogue::new(
            id,
            turns
                .iter()
                .enumerate()
                .map(|(i, (speaker, text))| Utterance {
                    position: i + 1,
                    speaker: *speaker,
                    text: (*text).to_string(),
                })
                .collect(),
        )
        .unwrap()
    }

    fn write_temp(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn loads_single_dialogue_jsonl() {
        let (_dir, path) = write_temp(
            r#"{"id": "x", "turns": [{"speaker": "alice", "text": "hi"}, {"speaker": "bob", "text": "hey"}, {"speaker": "alice", "text": "how are you"}, {"speaker": "bob", "text": "fine"}]}"#,
        );
        let dialogues = load_corpus(&path, CorpusFormat::Jsonl).unwrap();
        assert_eq!(dialogues.len(), 1);
        assert_eq!(dialogues[0].len(), 4);
        // First speaker normalizes to A.
        assert_eq!(dialogues[0].utterances[0].speaker, Speaker::A);
        assert_eq!(dialogues[0].utterances[1].speaker, Speaker::B);
    }

    #[test]
    fn monologue_record_is_skipped_not_fatal() {
        let (_dir, path) = write_temp(concat!(
            r#"{"id": "mono", "turns": [{"speaker": "a", "text": "talking"}, {"speaker": "a", "text": "to myself"}]}"#,
            "\n",
            r#"{"id": "ok", "turns": [{"speaker": "a", "text": "hi"}, {"speaker": "b", "text": "hey"}]}"#,
        ));
        let dialogues = load_corpus(&path, CorpusFormat::Jsonl).unwrap();
        assert_eq!(dialogues.len(), 1);
        assert_eq!(dialogues[0].id, "ok");
    }

    #[test]
    fn three_speakers_rejected() {
        let (_dir, path) = write_temp(
            r#"{"id": "tri", "turns": [{"speaker": "a", "text": "x"}, {"speaker": "b", "text": "y"}, {"speaker": "c", "text": "z"}]}"#,
        );
        let dialogues = load_corpus(&path, CorpusFormat::Jsonl).unwrap();
        assert!(dialogues.is_empty());
    }

    #[test]
    fn malformed_json_is_fatal_and_names_the_record() {
        let (_dir, path) = write_temp("{\"id\": \"x\"\nnot json");
        let err = load_corpus(&path, CorpusFormat::Jsonl).unwrap_err();
        match err {
            CorpusError::Parse { record, .. } => assert_eq!(record, 1),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn plain_format_parses_blocks() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("corpus.txt");
        fs::write(&path, "u1: hello\nu2: hi there\n\nu9\tfirst\nu7\tsecond\n").unwrap();
        let dialogues = load_corpus(&path, CorpusFormat::Plain).unwrap();
        assert_eq!(dialogues.len(), 2);
        assert_eq!(dialogues[0].utterances[1].text, "hi there");
        assert_eq!(dialogues[1].utterances[0].speaker, Speaker::A);
    }

    #[test]
    fn filter_bounds_are_inclusive() {
        let mk = |n: usize| {
            let turns: Vec<(Speaker, String)> = (0..n)
                .map(|i| {
                    let s = if i % 2 == 0 { Speaker::A } else { Speaker::B };
                    (s, format!("turn {i}"))
                })
                .collect();
            let turns: Vec<(Speaker, &str)> =
                turns.iter().map(|(s, t)| (*s, t.as_str())).collect();
            dialogue(&format!("n{n}"), &turns)
        };
        let input = vec![mk(3), mk(4), mk(30), mk(31)];
        let kept = filter_corpus(input, 4, 30).unwrap();
        let ids: Vec<&str> = kept.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, vec!["n4", "n30"]);
    }

    #[test]
    fn filter_rejects_bad_range() {
        assert!(matches!(
            filter_corpus(Vec::new(), 0, 5),
            Err(CorpusError::InvalidRange { .. })
        ));
        assert!(matches!(
            filter_corpus(Vec::new(), 6, 5),
            Err(CorpusError::InvalidRange { .. })
        ));
    }

    #[test]
    fn stats_match_trivial_examples() {
        let d6 = dialogue(
            "a",
            &[
                (Speaker::A, "one two"),
                (Speaker::B, "three"),
                (Speaker::A, "x"),
                (Speaker::B, "y"),
                (Speaker::A, "z"),
                (Speaker::B, "w"),
            ],
        );
        let stats = corpus_stats(std::slice::from_ref(&d6));
        assert_eq!(stats.avg_turns_per_dialogue, 6.0);
        assert_eq!(stats.words, 7);

        let d4 = dialogue("b", &[(Speaker::A, "a"), (Speaker::B, "b"), (Speaker::A, "c"), (Speaker::B, "d")]);
        let d8 = dialogue(
            "c",
            &[
                (Speaker::A, "a"),
                (Speaker::B, "b"),
                (Speaker::A, "c"),
                (Speaker::B, "d"),
                (Speaker::A, "e"),
                (Speaker::B, "f"),
                (Speaker::A, "g"),
                (Speaker::B, "h"),
            ],
        );
        let stats = corpus_stats(&[d4, d8]);
        assert_eq!(stats.avg_turns_per_dialogue, 6.0);
    }

    #[test]
    fn stats_empty_is_all_zero() {
        let stats = corpus_stats(&[]);
        assert_eq!(stats.dialogues, 0);
        assert_eq!(stats.avg_turns_per_dialogue, 0.0);
        assert_eq!(stats.avg_words_per_dialogue, 0.0);
    }

    #[test]
    fn annotations_parse_and_reject_out_of_range_turn_ratings() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ann.json");
        fs::write(
            &path,
            r#"[
              {"id": "good", "turns": [{"speaker": "h", "text": "hi"}, {"speaker": "m", "text": "hello"}],
               "dialog_ratings": {"coherence": 3.0},
               "turn_ratings": [{}, {"relevance": 2.0}]},
              {"id": "bad", "turns": [{"speaker": "h", "text": "hi"}, {"speaker": "m", "text": "hello"}],
               "dialog_ratings": {},
               "turn_ratings": [{}, {}, {"relevance": 1.0}]}
            ]"#,
        )
        .unwrap();
        let annotated = load_annotations(&path).unwrap();
        assert_eq!(annotated.len(), 1);
        let a = &annotated[0];
        assert_eq!(a.dialogue_ratings["coherence"], 3.0);
        assert_eq!(a.turn_ratings[&(2, "relevance".to_string())], 2.0);
    }

    fn arb_dialogue() -> impl Strategy<Value = Dialogue> {
        // Valid dyadic dialogues: 2..12 turns, speakers alternate or repeat,
        // texts drawn from non-whitespace words.
        (2usize..12, "[a-z]{1,8}( [a-z]{1,8}){0,4}").prop_flat_map(|(n, _)| {
            (
                proptest::collection::vec("[a-z]{1,8}( [a-z]{1,8}){0,4}", n..=n),
                proptest::collection::vec(proptest::bool::ANY, n..=n),
                "[a-z]{1,12}",
            )
                .prop_filter_map("needs both speakers", |(texts, flips, id)| {
                    let mut utterances: Vec<Utterance> = texts
                        .iter()
                        .zip(&flips)
                        .enumerate()
                        .map(|(i, (text, flip))| Utterance {
                            position: i + 1,
                            speaker: if *flip { Speaker::B } else { Speaker::A },
                            text: text.clone(),
                        })
                        .collect();
                    // Force dyadic membership.
                    if utterances.len() >= 2 {
                        utterances[0].speaker = Speaker::A;
                        utterances[1].speaker = Speaker::B;
                    }
                    Dialogue::new(id, utterances).ok()
                })
        })
    }

    proptest! {
        #[test]
        fn save_load_round_trip(dialogues in proptest::collection::vec(arb_dialogue(), 0..8)) {
            let dir = tempdir().unwrap();
            let path = dir.path().join("round.jsonl");
            save_corpus(&path, &dialogues).unwrap();
            let loaded = load_corpus(&path, CorpusFormat::Jsonl).unwrap();
            prop_assert_eq!(loaded, dialogues);
        }

        #[test]
        fn filter_output_respects_bounds(ns in proptest::collection::vec(1usize..40, 0..20)) {
            let dialogues: Vec<Dialogue> = ns.iter().enumerate().map(|(i, &n)| {
                let utterances = (0..n.max(2)).map(|j| Utterance {
                    position: j + 1,
                    speaker: if j == 0 { Speaker::A } else if j == 1 { Speaker::B } else if j % 2 == 0 { Speaker::A } else { Speaker::B },
                    text: format!("t{j}"),
                }).collect();
                Dialogue::new(format!("d{i}"), utterances).unwrap()
            }).collect();
            let kept = filter_corpus(dialogues, 4, 30).unwrap();
            prop_assert!(kept.iter().all(|d| (4..=30).contains(&d.len())));
        }

        #[test]
        fn stats_match_naive_recount(dialogues in proptest::collection::vec(arb_dialogue(), 0..10)) {
            let stats = corpus_stats(&dialogues);
            // Independent naive pass.
            let mut utterances = 0usize;
            let mut words = 0usize;
            for d in &dialogues {
                for u in &d.utterances {
                    utterances += 1;
                    words += u.text.split_whitespace().count();
                }
            }
            prop_assert_eq!(stats.utterances, utterances);
            prop_assert_eq!(stats.words, words);
            if !dialogues.is_empty() {
                prop_assert_eq!(stats.avg_turns_per_dialogue, utterances as f64 / dialogues.len() as f64);
            }
        }
    }
}
