//! End-to-end runs over a corpus: the perturbation battery, the sanity
//! probes and the attack campaign, with report rendering.

mod report;

pub use report::{emit_report, parse_battery_tsv, Report, ReportFormat};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{
    brute_force_attack_with, realize_attack, AttackError, RealizeConfig, ResponseDatabase, RpForestIndex,
};
use crate::embed::{encode, encode_context, EmbedError, EmbeddingTable, Pooling};
use crate::geometry::GeometryError;
use crate::par::{derive_seed, map_indexed, Execution};
use crate::perturb::{
    apply_transform, builtin_generic_responses, sanity_probe_set, seeded_permutation, seeded_repeat_indices,
    JumbleScope, Lexicon, PerturbError, TransformKind, TransformSpec,
};
use crate::scorer::{score, ScorerError, ScorerParams};
use crate::stats::{describe, mean, pct_better, pearson, permutation_p_value_with, spearman, Statistic, StatsError};
use crate::text::{is_punctuation_token, AnnotatedUtterance, DialogueTriple, TextError, Utterance};

/// Any failure in the library, classified for process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("report: {0}")]
    Json(#[from] serde_json::Error),
    #[error("report line {line}: {message}")]
    Report { line: usize, message: String },
    #[error("{0}")]
    Input(String),
}

impl Error {
    /// True for failures of the numerics (divergence, degenerate geometry)
    /// rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Scorer(e) | Error::Attack(AttackError::Scorer(e)) => matches!(
                e,
                ScorerError::Diverged { .. } | ScorerError::ZeroVariance | ScorerError::ZeroBeta
            ),
            Error::Attack(e) => matches!(e, AttackError::DegenerateAffine),
            Error::Geometry(e) => matches!(e, GeometryError::ZeroMean | GeometryError::ZeroVector(_)),
            Error::Stats(e) => matches!(e, StatsError::Constant),
            _ => false,
        }
    }

    /// `2` for numerical failures, `1` for everything else.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            2
        } else {
            1
        }
    }
}

/// Word-vector table plus pooling rule.
#[derive(Debug, Clone, Copy)]
pub struct Encoder<'a> {
    pub table: &'a EmbeddingTable,
    pub pooling: Pooling,
}

impl Encoder<'_> {
    pub fn utterance(&self, u: &Utterance) -> Vec<f64> {
        encode(u, self.table, self.pooling).into_vec()
    }

    pub fn context(&self, turns: &[Utterance]) -> Vec<f64> {
        encode_context(turns, self.table, self.pooling).into_vec()
    }
}

/// Provenance written into every report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub corpus: Option<String>,
    pub scorer_file: Option<String>,
    pub encoder: String,
    pub seed: u64,
    pub records: usize,
    /// Left empty unless the caller sets it, so reports are reproducible.
    pub timestamp: Option<String>,
}

/// Which utterance the battery perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantBase {
    #[default]
    Reference,
    Candidate,
}

#[derive(Debug, Clone)]
pub struct BatteryConfig<'a> {
    pub transforms: Vec<TransformKind>,
    pub seed: u64,
    pub base: VariantBase,
    pub permutation_iterations: usize,
    pub jumble_scope: JumbleScope,
    pub lexicon: Option<&'a Lexicon>,
    /// Replies substituted by the `generic` transform, one row each.
    pub generic_responses: Vec<Utterance>,
    pub metadata: ReportMetadata,
    pub exec: Execution,
}

impl BatteryConfig<'_> {
    pub fn new(transforms: Vec<TransformKind>, seed: u64) -> Self {
        BatteryConfig {
            transforms,
            seed,
            base: VariantBase::Reference,
            permutation_iterations: 999,
            jumble_scope: JumbleScope::AllTokens,
            lexicon: None,
            generic_responses: builtin_generic_responses(),
            metadata: ReportMetadata::default(),
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryRow {
    pub variant: String,
    pub mean: f64,
    pub sd: Option<f64>,
    pub pct_within_1sd: Option<f64>,
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    pub pct_better: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<BatteryRow>,
}

/// One battery column: a transform, or one fixed generic reply.
struct Variant<'a> {
    label: String,
    kind: TransformKind,
    generic: Option<&'a Utterance>,
}

fn variants<'a>(config: &'a BatteryConfig<'_>) -> Vec<Variant<'a>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for &kind in &config.transforms {
        if !seen.insert(kind) {
            continue;
        }
        if kind == TransformKind::Generic {
            out.extend(config.generic_responses.iter().map(|g| Variant {
                label: format!("{}: \"{}\"", kind.label(), g.raw()),
                kind,
                generic: Some(g),
            }));
        } else {
            out.push(Variant {
                label: kind.label().to_string(),
                kind,
                generic: None,
            });
        }
    }
    out
}

fn build_variant(
    base: &Utterance,
    variant: &Variant<'_>,
    config: &BatteryConfig<'_>,
    record: usize,
    ann: Option<&AnnotatedUtterance>,
) -> Result<Utterance, PerturbError> {
    let seed = derive_seed(config.seed, record as u64, variant.kind.code());
    let spec = match variant.kind {
        TransformKind::RemovePunct => TransformSpec::RemovePunct,
        TransformKind::StopwordsFull => TransformSpec::StopwordsFull,
        TransformKind::Stopwords25 => TransformSpec::Stopwords25,
        TransformKind::KeepNpv => TransformSpec::KeepNounPronVerb,
        TransformKind::RemoveNe => TransformSpec::RemoveNamedEntities,
        TransformKind::KeepNouns => TransformSpec::KeepNounsOnly,
        TransformKind::Reverse => TransformSpec::Reverse,
        TransformKind::Synonyms => TransformSpec::SynonymReplace(config.lexicon.expect("checked before scoring")),
        TransformKind::Jumble => {
            let m = match config.jumble_scope {
                JumbleScope::AllTokens => base.len(),
                JumbleScope::WordsOnly => base.tokens().iter().filter(|t| !is_punctuation_token(t)).count(),
            };
            TransformSpec::Jumble {
                permutation: seeded_permutation(m, seed),
                scope: config.jumble_scope,
            }
        }
        TransformKind::Repeat => TransformSpec::RepeatWords {
            indices: seeded_repeat_indices(base.len(), seed),
        },
        TransformKind::Generic => TransformSpec::GenericResponse(variant.generic.expect("generic rows carry a reply")),
    };
    apply_transform(base, &spec, ann)
}

fn require_corpus(corpus: &[DialogueTriple]) -> Result<(), Error> {
    if corpus.is_empty() {
        return Err(Error::Input("corpus is empty".into()));
    }
    Ok(())
}

fn record_label(t: &DialogueTriple, i: usize) -> String {
    match t.line {
        Some(line) => format!("line {line}"),
        None => format!("record {i}"),
    }
}

fn select_base(t: &DialogueTriple, base: VariantBase) -> Option<&Utterance> {
    match base {
        VariantBase::Reference => Some(&t.reference),
        VariantBase::Candidate => t.candidate.as_ref(),
    }
}

fn summary_row(label: String, scores: &[f64], original: &[f64], config: &BatteryConfig<'_>, column: u64) -> BatteryRow {
    let desc = describe(scores).ok();
    BatteryRow {
        variant: label,
        mean: mean(scores),
        sd: desc.map(|d| d.sd),
        pct_within_1sd: desc.map(|d| d.pct_within_1sd),
        pearson: pearson(scores, original).ok(),
        spearman: spearman(scores, original).ok(),
        pct_better: pct_better(scores, original).ok(),
        p_value: permutation_p_value_with(
            scores,
            original,
            Statistic::Pearson,
            config.permutation_iterations,
            derive_seed(config.seed, u64::MAX, column),
            config.exec,
        )
        .ok(),
    }
}

/// Scores every record's base utterance and each requested variant of it,
/// then summarizes each column against the original scores.
///
/// Statistics that are undefined for the data (too few records, constant
/// scores) are reported as `None`.
pub fn run_battery(
    corpus: &[DialogueTriple],
    annotations: Option<&[AnnotatedUtterance]>,
    params: &ScorerParams,
    encoder: Encoder<'_>,
    config: &BatteryConfig<'_>,
) -> Result<BatteryReport, Error> {
    require_corpus(corpus)?;
    if let Some(ann) = annotations {
        if ann.len() != corpus.len() {
            return Err(Error::Input(format!(
                "{} annotation blocks for {} corpus records",
                ann.len(),
                corpus.len()
            )));
        }
    }
    if let Some(&k) = config.transforms.iter().find(|k| k.requires_annotation()) {
        if annotations.is_none() {
            return Err(PerturbError::MissingAnnotation(k).into());
        }
    }
    if config.transforms.contains(&TransformKind::Synonyms) && config.lexicon.is_none() {
        return Err(Error::Input("the synonyms transform needs a lexicon".into()));
    }
    if let Some((i, t)) = corpus
        .iter()
        .enumerate()
        .find(|(_, t)| select_base(t, config.base).is_none())
    {
        return Err(Error::Input(format!(
            "{} has no candidate response",
            record_label(t, i)
        )));
    }

    let units = variants(config);
    let per_record: Vec<Result<Vec<f64>, Error>> = map_indexed(config.exec, corpus.len(), |i| {
        let t = &corpus[i];
        let base = select_base(t, config.base).expect("checked above");
        let c = encoder.context(&t.context);
        let r = encoder.utterance(&t.reference);
        let ann = annotations.map(|a| &a[i]);
        let mut scores = Vec::with_capacity(units.len() + 1);
        scores.push(score(&c, &r, &encoder.utterance(base), params)?);
        for v in &units {
            let u = build_variant(base, v, config, i, ann)?;
            scores.push(score(&c, &r, &encoder.utterance(&u), params)?);
        }
        Ok(scores)
    });
    let per_record = per_record.into_iter().collect::<Result<Vec<_>, _>>()?;
    let column = |j: usize| per_record.iter().map(|s| s[j]).collect::<Vec<f64>>();

    let mut metadata = config.metadata.clone();
    metadata.seed = config.seed;
    metadata.records = corpus.len();
    metadata.encoder = encoder.pooling.to_string();
    if units.is_empty() {
        return Ok(BatteryReport {
            metadata,
            rows: Vec::new(),
        });
    }
    let original = column(0);
    let desc = describe(&original).ok();
    let mut rows = vec![BatteryRow {
        variant: "Original reference response".into(),
        mean: mean(&original),
        sd: desc.map(|d| d.sd),
        pct_within_1sd: desc.map(|d| d.pct_within_1sd),
        pearson: Some(1.0),
        spearman: Some(1.0),
        pct_better: Some(0.0),
        p_value: None,
    }];
    if config.base == VariantBase::Candidate {
        rows[0].variant = "Original candidate response".into();
    }
    for (j, v) in units.iter().enumerate() {
        rows.push(summary_row(
            v.label.clone(),
            &column(j + 1),
            &original,
            config,
            j as u64,
        ));
    }
    Ok(BatteryReport { metadata, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub probe: String,
    pub ideal_score: f64,
    pub mean: f64,
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<ProbeRow>,
}

/// Mean and SD of each sanity probe over the corpus, beside its ideal score.
/// Machine-response probes appear only when `machine` is given, and then it
/// must hold one response per record.
pub fn run_sanity_probes(
    corpus: &[DialogueTriple],
    machine: Option<&[Utterance]>,
    params: &ScorerParams,
    encoder: Encoder<'_>,
    metadata: ReportMetadata,
    exec: Execution,
) -> Result<ProbeReport, Error> {
    require_corpus(corpus)?;
    if let Some(m) = machine {
        if m.len() != corpus.len() {
            return Err(Error::Input(format!(
                "{} machine responses for {} corpus records",
                m.len(),
                corpus.len()
            )));
        }
    }
    let per_record: Vec<Result<Vec<(crate::perturb::ProbeKind, f64)>, Error>> = map_indexed(exec, corpus.len(), |i| {
        sanity_probe_set(&corpus[i], machine.map(|m| &m[i]))
            .into_iter()
            .map(|(kind, t)| {
                let c = encoder.context(&t.context);
                let r = encoder.utterance(&t.reference);
                let cand = encoder.utterance(t.candidate.as_ref().expect("probes set a candidate"));
                Ok((kind, score(&c, &r, &cand, params)?))
            })
            .collect()
    });
    let per_record = per_record.into_iter().collect::<Result<Vec<_>, _>>()?;
    let rows = (0..per_record[0].len())
        .map(|j| {
            let kind = per_record[0][j].0;
            let scores: Vec<f64> = per_record.iter().map(|r| r[j].1).collect();
            ProbeRow {
                probe: kind.label().to_string(),
                ideal_score: kind.ideal_score(),
                mean: mean(&scores),
                sd: describe(&scores).ok().map(|d| d.sd),
            }
        })
        .collect();
    let mut metadata = metadata;
    metadata.records = corpus.len();
    metadata.encoder = encoder.pooling.to_string();
    Ok(ProbeReport { metadata, rows })
}

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub target_lo: f64,
    pub target_hi: f64,
    pub realize: RealizeConfig,
    pub metadata: ReportMetadata,
    pub exec: Execution,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            target_lo: 4.6,
            target_hi: 4.9,
            realize: RealizeConfig::default(),
            metadata: ReportMetadata::default(),
            exec: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRow {
    pub record: usize,
    pub original_score: f64,
    pub target_score: f64,
    pub ann_best_id: usize,
    pub ann_best_score: f64,
    pub ann_best_text: String,
    pub brute_best_id: usize,
    pub brute_best_score: f64,
    pub brute_best_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub mean: f64,
    pub sd: Option<f64>,
    pub max: f64,
    pub min: f64,
}

impl ColumnSummary {
    fn of(values: &[f64]) -> Self {
        ColumnSummary {
            mean: mean(values),
            sd: describe(values).ok().map(|d| d.sd),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackAggregate {
    pub original: ColumnSummary,
    pub ann: ColumnSummary,
    pub brute_force: ColumnSummary,
    /// `ann.mean − original.mean`
    pub ann_increment: f64,
    /// `brute_force.mean − original.mean`
    pub brute_force_increment: f64,
}

impl AttackAggregate {
    pub fn from_rows(rows: &[AttackRow]) -> Self {
        let col = |f: fn(&AttackRow) -> f64| ColumnSummary::of(&rows.iter().map(f).collect::<Vec<_>>());
        let (original, ann, brute_force) = (
            col(|r| r.original_score),
            col(|r| r.ann_best_score),
            col(|r| r.brute_best_score),
        );
        AttackAggregate {
            original,
            ann,
            brute_force,
            ann_increment: ann.mean - original.mean,
            brute_force_increment: brute_force.mean - original.mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub metadata: ReportMetadata,
    pub rows: Vec<AttackRow>,
    pub aggregate: AttackAggregate,
}

/// Attacks every record toward the midpoint of `[target_lo, target_hi]`.
/// The original score is that of the record's candidate, or of its
/// reference when it has none.
pub fn run_attack_campaign(
    corpus: &[DialogueTriple],
    db: &ResponseDatabase,
    index: &RpForestIndex,
    params: &ScorerParams,
    encoder: Encoder<'_>,
    config: &CampaignConfig,
) -> Result<AttackReport, Error> {
    require_corpus(corpus)?;
    if !config.target_lo.is_finite() || !config.target_hi.is_finite() || config.target_lo > config.target_hi {
        return Err(Error::Input(format!(
            "target band [{}, {}] is not a finite interval",
            config.target_lo, config.target_hi
        )));
    }
    let target = (config.target_lo + config.target_hi) / 2.0;
    let rows: Vec<Result<AttackRow, Error>> = map_indexed(config.exec, corpus.len(), |i| {
        let t = &corpus[i];
        let c = encoder.context(&t.context);
        let r = encoder.utterance(&t.reference);
        let original = encoder.utterance(t.candidate.as_ref().unwrap_or(&t.reference));
        let realized = realize_attack(&c, &r, params, db, index, target, &config.realize)?;
        let (brute_id, brute_score) = brute_force_attack_with(&c, &r, params, db, Execution::Sequential)?;
        Ok(AttackRow {
            record: i,
            original_score: score(&c, &r, &original, params)?,
            target_score: target,
            ann_best_id: realized.best_id,
            ann_best_score: realized.best_score,
            ann_best_text: db.response(realized.best_id).raw().to_string(),
            brute_best_id: brute_id,
            brute_best_score: brute_score,
            brute_best_text: db.response(brute_id).raw().to_string(),
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut metadata = config.metadata.clone();
    metadata.records = corpus.len();
    metadata.encoder = encoder.pooling.to_string();
    Ok(AttackReport {
        aggregate: AttackAggregate::from_rows(&rows),
        metadata,
        rows,
    })
}
