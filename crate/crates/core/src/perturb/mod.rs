//! The adversarial text-transformation battery, generic-response probes and
//! the sanity probes built from a dialogue triple.

mod rng;

pub use rng::{
    sample_randomness, seeded_permutation, seeded_repeat_indices, seeded_repeat_indices_with_replacement, RandomKind,
    Randomness, SplitMix64,
};

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{
    is_punctuation_token, read_file, tokenize, AnnotatedUtterance, DialogueTriple, NerTag, PosTag, TextError, Utterance,
};

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("transform `{0}` needs token annotations")]
    MissingAnnotation(TransformKind),
    #[error("annotation tokens do not match the utterance `{0}`")]
    MisalignedAnnotation(String),
    #[error("permutation of length {found} is not a bijection on {expected} positions")]
    BadPermutation { expected: usize, found: usize },
    #[error("repeat set must hold {expected} valid positions (utterance length {len}), got {found:?}")]
    BadRepeatSet {
        expected: usize,
        len: usize,
        found: Vec<usize>,
    },
    #[error("unknown transform `{0}`")]
    UnknownKind(String),
    #[error(transparent)]
    Text(#[from] TextError),
}

/// The eleven transforms, named on the command line by [`TransformKind::cli_name`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    RemovePunct,
    StopwordsFull,
    Stopwords25,
    KeepNpv,
    RemoveNe,
    Synonyms,
    Jumble,
    Reverse,
    KeepNouns,
    Repeat,
    Generic,
}

impl TransformKind {
    pub const ALL: [TransformKind; 11] = [
        TransformKind::RemovePunct,
        TransformKind::StopwordsFull,
        TransformKind::Stopwords25,
        TransformKind::KeepNpv,
        TransformKind::RemoveNe,
        TransformKind::Synonyms,
        TransformKind::Jumble,
        TransformKind::Reverse,
        TransformKind::KeepNouns,
        TransformKind::Repeat,
        TransformKind::Generic,
    ];

    pub fn cli_name(self) -> &'static str {
        match self {
            TransformKind::RemovePunct => "remove-punct",
            TransformKind::StopwordsFull => "stopwords-full",
            TransformKind::Stopwords25 => "stopwords-25",
            TransformKind::KeepNpv => "keep-npv",
            TransformKind::RemoveNe => "remove-ne",
            TransformKind::Synonyms => "synonyms",
            TransformKind::Jumble => "jumble",
            TransformKind::Reverse => "reverse",
            TransformKind::KeepNouns => "keep-nouns",
            TransformKind::Repeat => "repeat",
            TransformKind::Generic => "generic",
        }
    }

    /// Human-readable row label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            TransformKind::RemovePunct => "Punctuation removed",
            TransformKind::StopwordsFull => "Full stopword list removed",
            TransformKind::Stopwords25 => "25 common stopwords removed",
            TransformKind::KeepNpv => "[pro]nouns and verbs only",
            TransformKind::RemoveNe => "Named entities removed",
            TransformKind::Synonyms => "Replace words with synonyms",
            TransformKind::Jumble => "Jumble words in the sentence",
            TransformKind::Reverse => "Reverse the response",
            TransformKind::KeepNouns => "Retain only nouns",
            TransformKind::Repeat => "Repeat words in the response",
            TransformKind::Generic => "Generic response",
        }
    }

    /// Transforms that cannot run without POS/NER tags.
    pub fn requires_annotation(self) -> bool {
        matches!(
            self,
            TransformKind::KeepNpv | TransformKind::RemoveNe | TransformKind::KeepNouns
        )
    }

    /// Stable small integer used when deriving per-record seeds.
    pub fn code(self) -> u64 {
        Self::ALL.iter().position(|&k| k == self).expect("listed") as u64
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for TransformKind {
    type Err = PerturbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.cli_name() == s)
            .ok_or_else(|| PerturbError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopwordListId {
    Full,
    Top25,
}

/// Lowercase stopword set.
#[derive(Debug, Clone)]
pub struct StopwordList {
    id: StopwordListId,
    words: HashSet<String>,
}

const TOP25: [&str; 25] = [
    "a", "an", "and", "are", "as", "at", "be", "by", "for", "from", "has", "he", "in", "is", "it", "its", "of", "on",
    "that", "the", "to", "was", "were", "will", "with",
];

impl StopwordList {
    /// The bundled 179-word English list.
    pub fn full() -> &'static StopwordList {
        static FULL: OnceLock<StopwordList> = OnceLock::new();
        FULL.get_or_init(|| StopwordList::parse(StopwordListId::Full, include_str!("../../data/stopwords_full.txt")))
    }

    /// The 25 most common English stopwords.
    pub fn top25() -> &'static StopwordList {
        static TOP: OnceLock<StopwordList> = OnceLock::new();
        TOP.get_or_init(|| StopwordList {
            id: StopwordListId::Top25,
            words: TOP25.iter().map(|w| w.to_string()).collect(),
        })
    }

    /// One word per line; blank lines ignored.
    pub fn parse(id: StopwordListId, text: &str) -> StopwordList {
        StopwordList {
            id,
            words: text
                .lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        }
    }

    pub fn load(id: StopwordListId, path: &Path) -> Result<StopwordList, PerturbError> {
        Ok(Self::parse(id, &read_file(path)?))
    }

    pub fn id(&self) -> StopwordListId {
        self.id
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(&token.to_lowercase())
    }
}

/// Token → replacement map for synonym substitution.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    map: HashMap<String, String>,
}

#[derive(Deserialize)]
struct LexiconEntry {
    word: String,
    replacement: String,
}

impl Lexicon {
    pub fn insert(&mut self, word: impl Into<String>, replacement: impl Into<String>) {
        self.map.insert(word.into(), replacement.into());
    }

    pub fn get(&self, word: &str) -> Option<&str> {
        self.map.get(word).map(String::as_str)
    }

    /// JSON lines of `{"word": …, "replacement": …}`.
    pub fn parse(text: &str) -> Result<Lexicon, PerturbError> {
        let mut lex = Lexicon::default();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: LexiconEntry = serde_json::from_str(line).map_err(|e| TextError::Lexicon {
                line: idx + 1,
                message: e.to_string(),
            })?;
            lex.insert(entry.word.to_lowercase(), entry.replacement.to_lowercase());
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Lexicon, PerturbError> {
        Self::parse(&read_file(path)?)
    }
}

/// Which tokens a jumble permutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum JumbleScope {
    #[default]
    AllTokens,
    /// Punctuation-only tokens keep their positions; the permutation acts on
    /// the remaining word positions.
    WordsOnly,
}

/// A transform together with everything it needs besides the utterance.
#[derive(Debug, Clone)]
pub enum TransformSpec<'a> {
    RemovePunct,
    StopwordsFull,
    Stopwords25,
    KeepNounPronVerb,
    RemoveNamedEntities,
    SynonymReplace(&'a Lexicon),
    Jumble {
        permutation: Vec<usize>,
        scope: JumbleScope,
    },
    Reverse,
    KeepNounsOnly,
    RepeatWords {
        indices: Vec<usize>,
    },
    GenericResponse(&'a Utterance),
}

impl TransformSpec<'_> {
    pub fn kind(&self) -> TransformKind {
        match self {
            TransformSpec::RemovePunct => TransformKind::RemovePunct,
            TransformSpec::StopwordsFull => TransformKind::StopwordsFull,
            TransformSpec::Stopwords25 => TransformKind::Stopwords25,
            TransformSpec::KeepNounPronVerb => TransformKind::KeepNpv,
            TransformSpec::RemoveNamedEntities => TransformKind::RemoveNe,
            TransformSpec::SynonymReplace(_) => TransformKind::Synonyms,
            TransformSpec::Jumble { .. } => TransformKind::Jumble,
            TransformSpec::Reverse => TransformKind::Reverse,
            TransformSpec::KeepNounsOnly => TransformKind::KeepNouns,
            TransformSpec::RepeatWords { .. } => TransformKind::Repeat,
            TransformSpec::GenericResponse(_) => TransformKind::Generic,
        }
    }
}

fn annotation<'b>(
    kind: TransformKind,
    u: &Utterance,
    ann: Option<&'b AnnotatedUtterance>,
) -> Result<&'b AnnotatedUtterance, PerturbError> {
    let ann = ann.ok_or(PerturbError::MissingAnnotation(kind))?;
    if !ann.is_aligned_with(u) {
        return Err(PerturbError::MisalignedAnnotation(u.canonical()));
    }
    Ok(ann)
}

fn keep_by_pos(u: &Utterance, ann: &AnnotatedUtterance, keep: &[PosTag]) -> Utterance {
    Utterance::from_tokens(
        u.tokens()
            .iter()
            .zip(ann.pos_tags())
            .filter(|(_, p)| keep.contains(p))
            .map(|(t, _)| t.clone()),
    )
}

fn check_permutation(perm: &[usize], m: usize) -> Result<(), PerturbError> {
    let bad = PerturbError::BadPermutation {
        expected: m,
        found: perm.len(),
    };
    if perm.len() != m {
        return Err(bad);
    }
    let mut seen = vec![false; m];
    for &p in perm {
        if p >= m || std::mem::replace(&mut seen[p], true) {
            return Err(bad);
        }
    }
    Ok(())
}

/// Applies `spec` to `u`. `ann` must be present (and token-aligned with `u`)
/// for the POS/NER transforms; synonym replacement uses it, when given, to
/// leave named entities untouched.
pub fn apply_transform(
    u: &Utterance,
    spec: &TransformSpec<'_>,
    ann: Option<&AnnotatedUtterance>,
) -> Result<Utterance, PerturbError> {
    let tokens = u.tokens();
    let out = match spec {
        TransformSpec::RemovePunct => {
            Utterance::from_tokens(tokens.iter().filter(|t| !is_punctuation_token(t)).cloned())
        }
        TransformSpec::StopwordsFull | TransformSpec::Stopwords25 => {
            let list = if matches!(spec, TransformSpec::StopwordsFull) {
                StopwordList::full()
            } else {
                StopwordList::top25()
            };
            Utterance::from_tokens(tokens.iter().filter(|t| !list.contains(t)).cloned())
        }
        TransformSpec::KeepNounPronVerb => {
            let ann = annotation(spec.kind(), u, ann)?;
            keep_by_pos(u, ann, &[PosTag::Noun, PosTag::Propn, PosTag::Pron, PosTag::Verb])
        }
        TransformSpec::KeepNounsOnly => {
            let ann = annotation(spec.kind(), u, ann)?;
            keep_by_pos(u, ann, &[PosTag::Noun, PosTag::Propn])
        }
        TransformSpec::RemoveNamedEntities => {
            let ann = annotation(spec.kind(), u, ann)?;
            Utterance::from_tokens(
                tokens
                    .iter()
                    .zip(ann.ner_tags())
                    .filter(|(_, n)| **n == NerTag::O)
                    .map(|(t, _)| t.clone()),
            )
        }
        TransformSpec::SynonymReplace(lexicon) => {
            let ner = match ann {
                Some(a) => Some(annotation(spec.kind(), u, Some(a))?.ner_tags()),
                None => None,
            };
            let stop = StopwordList::full();
            Utterance::from_tokens(tokens.iter().enumerate().flat_map(|(i, t)| {
                let protected = stop.contains(t) || ner.is_some_and(|n| n[i] != NerTag::O);
                match lexicon.get(t) {
                    // multi-word replacements are re-tokenized
                    Some(rep) if !protected => tokenize(rep).tokens().to_vec(),
                    _ => vec![t.clone()],
                }
            }))
        }
        TransformSpec::Jumble { permutation, scope } => match scope {
            JumbleScope::AllTokens => {
                check_permutation(permutation, tokens.len())?;
                Utterance::from_tokens(permutation.iter().map(|&p| tokens[p].clone()))
            }
            JumbleScope::WordsOnly => {
                let slots: Vec<usize> = (0..tokens.len())
                    .filter(|&i| !is_punctuation_token(&tokens[i]))
                    .collect();
                check_permutation(permutation, slots.len())?;
                let mut out = tokens.to_vec();
                for (k, &slot) in slots.iter().enumerate() {
                    out[slot] = tokens[slots[permutation[k]]].clone();
                }
                Utterance::from_tokens(out)
            }
        },
        TransformSpec::Reverse => Utterance::from_tokens(tokens.iter().rev().cloned()),
        TransformSpec::RepeatWords { indices } => {
            let m = tokens.len();
            if indices.len() != m / 2 || indices.iter().any(|&i| i >= m) {
                return Err(PerturbError::BadRepeatSet {
                    expected: m / 2,
                    len: m,
                    found: indices.clone(),
                });
            }
            let mut copies = vec![0usize; m];
            for &i in indices {
                copies[i] += 1;
            }
            let mut out = Vec::with_capacity(m + m / 2);
            for (t, &c) in tokens.iter().zip(&copies) {
                out.extend(std::iter::repeat_n(t.clone(), c + 1));
            }
            Utterance::from_tokens(out)
        }
        TransformSpec::GenericResponse(generic) => (*generic).clone(),
    };
    Ok(out)
}

/// The three fixed generic replies, canonically tokenized.
pub fn builtin_generic_responses() -> Vec<Utterance> {
    ["i'm sorry, can you repeat?", "i will do", "fantastic! how are you?"]
        .into_iter()
        .map(tokenize)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeKind {
    GroundTruth,
    ContextAsResponse,
    MachineResponse,
    SwappedReference,
}

impl ProbeKind {
    pub fn label(self) -> &'static str {
        match self {
            ProbeKind::GroundTruth => "ground-truth response",
            ProbeKind::ContextAsResponse => "context repeated as response",
            ProbeKind::MachineResponse => "machine generated response",
            ProbeKind::SwappedReference => "swapping reference response and machine response",
        }
    }

    /// Score an ideal evaluator would give.
    pub fn ideal_score(self) -> f64 {
        match self {
            ProbeKind::GroundTruth | ProbeKind::SwappedReference => 5.0,
            ProbeKind::ContextAsResponse | ProbeKind::MachineResponse => 1.0,
        }
    }
}

/// Builds the probe triples for one dialogue. Machine-dependent probes are
/// only emitted when `machine` is given.
pub fn sanity_probe_set(triple: &DialogueTriple, machine: Option<&Utterance>) -> Vec<(ProbeKind, DialogueTriple)> {
    let with = |reference: &Utterance, candidate: Utterance| DialogueTriple {
        context: triple.context.clone(),
        reference: reference.clone(),
        candidate: Some(candidate),
        human_score: None,
        line: triple.line,
    };
    let mut probes = vec![
        (
            ProbeKind::GroundTruth,
            with(&triple.reference, triple.reference.clone()),
        ),
        (
            ProbeKind::ContextAsResponse,
            with(&triple.reference, triple.context_tokens()),
        ),
    ];
    if let Some(machine) = machine {
        probes.push((ProbeKind::MachineResponse, with(&triple.reference, machine.clone())));
        probes.push((ProbeKind::SwappedReference, with(machine, triple.reference.clone())));
    }
    probes
}
