//! Tokenization, dialogue-corpus ingestion and token annotations.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus line {line}, field `{field}`: {message}")]
    Corpus {
        line: usize,
        field: String,
        message: String,
    },
    #[error("annotation line {line}: {message}")]
    Annotation { line: usize, message: String },
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
}

pub(crate) fn read_file(path: &Path) -> Result<String, TextError> {
    fs::read_to_string(path).map_err(|source| TextError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Characters split off the edges of whitespace-delimited words.
pub const EDGE_PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '"', '\'', '(', ')'];

/// True for a token made only of punctuation characters.
pub fn is_punctuation_token(token: &str) -> bool {
    !token.is_empty()
        && token
            .chars()
            .all(|c| c.is_ascii_punctuation() || EDGE_PUNCTUATION.contains(&c))
}

/// A tokenized utterance together with the string it came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Utterance {
    tokens: Vec<String>,
    raw: String,
}

impl Utterance {
    pub fn empty() -> Self {
        Utterance {
            tokens: Vec::new(),
            raw: String::new(),
        }
    }

    /// Builds an utterance from already-split tokens. The surface string is
    /// the canonical space-joined form.
    pub fn from_tokens<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let raw = tokens.join(" ");
        Utterance { tokens, raw }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens joined by single spaces.
    pub fn canonical(&self) -> String {
        self.tokens.join(" ")
    }
}

impl fmt::Display for Utterance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

/// Lowercases, splits on whitespace and peels punctuation off word edges.
///
/// Each peeled character becomes its own token; interior punctuation
/// (`i'm`, `<first_speaker>`) is left alone.
pub fn tokenize(text: &str) -> Utterance {
    let lowered = text.to_lowercase();
    let mut tokens = Vec::new();
    for word in lowered.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && EDGE_PUNCTUATION.contains(&chars[start]) {
            tokens.push(chars[start].to_string());
            start += 1;
        }
        let mut trailing = Vec::new();
        while end > start && EDGE_PUNCTUATION.contains(&chars[end - 1]) {
            trailing.push(chars[end - 1].to_string());
            end -= 1;
        }
        if start < end {
            tokens.push(chars[start..end].iter().collect());
        }
        tokens.extend(trailing.into_iter().rev());
    }
    Utterance {
        tokens,
        raw: text.to_string(),
    }
}

/// One dialogue: context turns, the gold reply, an optional reply under
/// evaluation and an optional human rating.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogueTriple {
    pub context: Vec<Utterance>,
    pub reference: Utterance,
    pub candidate: Option<Utterance>,
    pub human_score: Option<f64>,
    /// 1-based source line, when loaded from a file.
    pub line: Option<usize>,
}

impl DialogueTriple {
    pub fn new(context: Vec<Utterance>, reference: Utterance) -> Self {
        DialogueTriple {
            context,
            reference,
            candidate: None,
            human_score: None,
            line: None,
        }
    }

    /// All context tokens in turn order.
    pub fn context_tokens(&self) -> Utterance {
        Utterance::from_tokens(self.context.iter().flat_map(|t| t.tokens().iter().cloned()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    /// One JSON object per line with `context`, `reference`, and optional
    /// `candidate` and `human_score`.
    #[default]
    JsonLines,
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Vec<DialogueTriple>, TextError> {
    let text = read_file(path)?;
    match format {
        CorpusFormat::JsonLines => parse_corpus(&text),
    }
}

/// Parses a JSON-lines corpus. Blank lines are skipped.
pub fn parse_corpus(text: &str) -> Result<Vec<DialogueTriple>, TextError> {
    let mut triples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        triples.push(parse_record(line, idx + 1)?);
    }
    Ok(triples)
}

fn parse_record(line: &str, lineno: usize) -> Result<DialogueTriple, TextError> {
    let err = |field: &str, message: String| TextError::Corpus {
        line: lineno,
        field: field.to_string(),
        message,
    };
    let value: Value = serde_json::from_str(line).map_err(|e| err("<record>", format!("invalid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| err("<record>", "expected a JSON object".into()))?;

    let context = match obj.get("context") {
        Some(Value::Array(turns)) => turns
            .iter()
            .map(|t| {
                t.as_str()
                    .map(tokenize)
                    .ok_or_else(|| err("context", "turns must be strings".into()))
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(err("context", "expected an array of strings".into())),
        None => return Err(err("context", "missing".into())),
    };
    if context.is_empty() {
        return Err(err("context", "needs at least one turn".into()));
    }

    let reference = match obj.get("reference") {
        Some(Value::String(s)) => tokenize(s),
        Some(_) => return Err(err("reference", "expected a string".into())),
        None => return Err(err("reference", "missing".into())),
    };
    if reference.is_empty() {
        return Err(err("reference", "must contain at least one token".into()));
    }

    let candidate = match obj.get("candidate") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(tokenize(s)),
        Some(_) => return Err(err("candidate", "expected a string".into())),
    };

    let human_score = match obj.get("human_score") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let s = v
                .as_f64()
                .ok_or_else(|| err("human_score", "expected a number".into()))?;
            if !(1.0..=5.0).contains(&s) {
                return Err(err("human_score", format!("{s} is outside [1, 5]")));
            }
            Some(s)
        }
    };

    Ok(DialogueTriple {
        context,
        reference,
        candidate,
        human_score,
        line: Some(lineno),
    })
}

/// Serializes triples back to JSON lines using each utterance's surface string.
pub fn write_corpus(triples: &[DialogueTriple]) -> String {
    let mut out = String::new();
    for t in triples {
        let mut obj = Map::new();
        obj.insert(
            "context".into(),
            Value::Array(t.context.iter().map(|u| Value::String(u.raw().into())).collect()),
        );
        obj.insert("reference".into(), Value::String(t.reference.raw().into()));
        if let Some(c) = &t.candidate {
            obj.insert("candidate".into(), Value::String(c.raw().into()));
        }
        if let Some(h) = t.human_score {
            obj.insert("human_score".into(), Value::from(h));
        }
        out.push_str(&Value::Object(obj).to_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Noun,
    Propn,
    Pron,
    Verb,
    Adj,
    Adv,
    Det,
    Adp,
    Punct,
    Other,
}

impl FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "NOUN" => PosTag::Noun,
            "PROPN" => PosTag::Propn,
            "PRON" => PosTag::Pron,
            "VERB" => PosTag::Verb,
            "ADJ" => PosTag::Adj,
            "ADV" => PosTag::Adv,
            "DET" => PosTag::Det,
            "ADP" => PosTag::Adp,
            "PUNCT" => PosTag::Punct,
            "OTHER" => PosTag::Other,
            _ => return Err(format!("unknown POS tag `{s}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum NerTag {
    Per,
    Loc,
    Org,
    Misc,
    O,
}

impl FromStr for NerTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "PER" => NerTag::Per,
            "LOC" => NerTag::Loc,
            "ORG" => NerTag::Org,
            "MISC" => NerTag::Misc,
            "O" => NerTag::O,
            _ => return Err(format!("unknown NER tag `{s}`")),
        })
    }
}

/// Tokens with aligned part-of-speech and named-entity tags.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedUtterance {
    tokens: Vec<String>,
    pos: Vec<PosTag>,
    ner: Vec<NerTag>,
}

impl AnnotatedUtterance {
    /// `None` when the three sequences differ in length.
    pub fn new(tokens: Vec<String>, pos: Vec<PosTag>, ner: Vec<NerTag>) -> Option<Self> {
        (tokens.len() == pos.len() && tokens.len() == ner.len()).then_some(AnnotatedUtterance { tokens, pos, ner })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pos_tags(&self) -> &[PosTag] {
        &self.pos
    }

    pub fn ner_tags(&self) -> &[NerTag] {
        &self.ner
    }

    pub fn is_aligned_with(&self, u: &Utterance) -> bool {
        self.tokens == u.tokens()
    }
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotatedUtterance>, TextError> {
    parse_annotations(&read_file(path)?)
}

/// Parses `token POS NER` lines (tab or space separated) grouped into
/// blank-line-separated blocks.
pub fn parse_annotations(text: &str) -> Result<Vec<AnnotatedUtterance>, TextError> {
    let mut out = Vec::new();
    let mut tokens = Vec::new();
    let mut pos = Vec::new();
    let mut ner = Vec::new();
    let mut flush = |tokens: &mut Vec<String>, pos: &mut Vec<PosTag>, ner: &mut Vec<NerTag>| {
        if !tokens.is_empty() {
            out.push(AnnotatedUtterance {
                tokens: std::mem::take(tokens),
                pos: std::mem::take(pos),
                ner: std::mem::take(ner),
            });
        }
    };
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            flush(&mut tokens, &mut pos, &mut ner);
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(TextError::Annotation {
                line: lineno,
                message: format!("expected 3 columns, found {}", fields.len()),
            });
        }
        let p = fields[1]
            .parse()
            .map_err(|message| TextError::Annotation { line: lineno, message })?;
        let n = fields[2]
            .parse()
            .map_err(|message| TextError::Annotation { line: lineno, message })?;
        tokens.push(fields[0].to_string());
        pos.push(p);
        ner.push(n);
    }
    flush(&mut tokens, &mut pos, &mut ner);
    Ok(out)
}

/// Exact-match word → tag lookup for corpora without sidecar annotations.
/// Unknown words get `OTHER` / `O`; punctuation-only tokens get `PUNCT`.
#[derive(Debug, Clone, Default)]
pub struct LexiconTagger {
    entries: HashMap<String, (PosTag, NerTag)>,
}

impl LexiconTagger {
    pub fn insert(&mut self, word: impl Into<String>, pos: PosTag, ner: NerTag) {
        self.entries.insert(word.into(), (pos, ner));
    }

    /// Reads `word POS [NER]` lines.
    pub fn parse(text: &str) -> Result<Self, TextError> {
        let mut tagger = LexiconTagger::default();
        for (idx, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let bad = |message: String| TextError::Annotation { line: idx + 1, message };
            if !(2..=3).contains(&fields.len()) {
                return Err(bad("expected `word POS [NER]`".into()));
            }
            let p = fields[1].parse().map_err(bad)?;
            let n = match fields.get(2) {
                Some(s) => s.parse().map_err(bad)?,
                None => NerTag::O,
            };
            tagger.insert(fields[0], p, n);
        }
        Ok(tagger)
    }

    pub fn tag(&self, u: &Utterance) -> AnnotatedUtterance {
        let (pos, ner) = u
            .tokens()
            .iter()
            .map(|t| match self.entries.get(t) {
                Some(&tags) => tags,
                None if is_punctuation_token(t) => (PosTag::Punct, NerTag::O),
                None => (PosTag::Other, NerTag::O),
            })
            .unzip();
        AnnotatedUtterance {
            tokens: u.tokens().to_vec(),
            pos,
            ner,
        }
    }
}
