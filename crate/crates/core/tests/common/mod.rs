#![allow(dead_code)]

use dialeval::attack::ResponseDatabase;
use dialeval::embed::{encode, EmbeddingTable, Pooling};
use dialeval::perturb::{builtin_generic_responses, Lexicon};
use dialeval::scorer::{initial_params, stable_step_size, train, ScorerParams, TrainConfig, TrainSample};
use dialeval::text::{AnnotatedUtterance, DialogueTriple, LexiconTagger, NerTag, PosTag, Utterance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn gaussian_db(n: usize, dim: usize, seed: u64) -> ResponseDatabase {
    let mut rng = rng(seed);
    let data: Vec<f32> = (0..n * dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    let responses = (0..n).map(|i| Utterance::from_tokens([format!("item{i}")])).collect();
    ResponseDatabase::from_f32(responses, dim, data).unwrap()
}

pub const FUNCTION_WORDS: &[&str] = &[
    "the", "a", "i", "you", "is", "it", "to", "and", "of", "do", "will", "can", "are", "how",
];
pub const PUNCT: &[&str] = &["?", "!", ",", "."];

/// A small synthetic language: content words `w0…`, a few stopwords and
/// punctuation, all with Gaussian vectors.
pub struct World {
    pub dim: usize,
    pub table: EmbeddingTable,
    pub content: Vec<String>,
    pub tagger: LexiconTagger,
    pub lexicon: Lexicon,
}

impl World {
    pub fn new(dim: usize, vocab: usize, seed: u64) -> World {
        let mut rng = rng(seed);
        let content: Vec<String> = (0..vocab).map(|i| format!("w{i}")).collect();
        let mut table = EmbeddingTable::new(dim);
        let generic_words: Vec<String> = builtin_generic_responses()
            .iter()
            .flat_map(|u| u.tokens().to_vec())
            .collect();
        let all = content
            .iter()
            .cloned()
            .chain(FUNCTION_WORDS.iter().map(|s| s.to_string()))
            .chain(PUNCT.iter().map(|s| s.to_string()))
            .chain(generic_words);
        for w in all {
            if !table.contains(&w) {
                let v = gaussian_vec(&mut rng, dim);
                table.insert(w, v);
            }
        }
        let mut tagger = LexiconTagger::default();
        let mut lexicon = Lexicon::default();
        for (i, w) in content.iter().enumerate() {
            let (pos, ner) = match i % 5 {
                0 => (PosTag::Noun, NerTag::O),
                1 => (PosTag::Verb, NerTag::O),
                2 => (PosTag::Adj, NerTag::O),
                3 => (PosTag::Propn, NerTag::Per),
                _ => (PosTag::Pron, NerTag::O),
            };
            tagger.insert(w.clone(), pos, ner);
            lexicon.insert(w.clone(), content[(i + 1) % vocab].clone());
        }
        World {
            dim,
            table,
            content,
            tagger,
            lexicon,
        }
    }

    pub fn sentence(&self, rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> Utterance {
        let len = rng.random_range(lo..=hi);
        Utterance::from_tokens((0..len).map(|_| {
            let roll: f64 = rng.random();
            if roll < 0.2 {
                FUNCTION_WORDS[rng.random_range(0..FUNCTION_WORDS.len())].to_string()
            } else if roll < 0.3 {
                PUNCT[rng.random_range(0..PUNCT.len())].to_string()
            } else {
                self.content[rng.random_range(0..self.content.len())].clone()
            }
        }))
    }

    pub fn embed(&self, u: &Utterance) -> Vec<f64> {
        encode(u, &self.table, Pooling::Mean).into_vec()
    }

    /// Triples whose human score is a noisy increasing function of the
    /// cosine between candidate and reference.
    pub fn corpus(&self, n: usize, seed: u64) -> Vec<DialogueTriple> {
        let mut rng = rng(seed);
        (0..n)
            .map(|i| {
                let context = vec![self.sentence(&mut rng, 4, 10), self.sentence(&mut rng, 3, 8)];
                let reference = self.sentence(&mut rng, 3, 8);
                let keep: f64 = rng.random();
                let fresh = self.sentence(&mut rng, 3, 8);
                let candidate =
                    Utterance::from_tokens(reference.tokens().iter().zip(fresh.tokens().iter().cycle()).map(
                        |(r, f)| {
                            if rng.random::<f64>() < keep {
                                r.clone()
                            } else {
                                f.clone()
                            }
                        },
                    ));
                let cos = dialeval::linalg::cosine(&self.embed(&candidate), &self.embed(&reference)).unwrap_or(0.0);
                let noise: f64 = rng.sample::<f64, _>(StandardNormal) * 0.25;
                let human = (3.0 + 2.0 * cos + noise).clamp(1.0, 5.0);
                let mut t = DialogueTriple::new(context, reference);
                t.candidate = Some(candidate);
                t.human_score = Some(human);
                t.line = Some(i + 1);
                t
            })
            .collect()
    }

    pub fn database(&self, n: usize, seed: u64) -> ResponseDatabase {
        let mut rng = rng(seed);
        let responses: Vec<Utterance> = (0..n).map(|_| self.sentence(&mut rng, 2, 10)).collect();
        let embs: Vec<_> = responses
            .iter()
            .map(|u| encode(u, &self.table, Pooling::Mean))
            .collect();
        ResponseDatabase::new(responses, &embs).unwrap()
    }

    pub fn annotations(&self, corpus: &[DialogueTriple]) -> Vec<AnnotatedUtterance> {
        corpus.iter().map(|t| self.tagger.tag(&t.reference)).collect()
    }

    pub fn samples(&self, corpus: &[DialogueTriple]) -> Vec<TrainSample> {
        corpus
            .iter()
            .map(|t| TrainSample {
                context: dialeval::embed::encode_context(&t.context, &self.table, Pooling::Mean).into_vec(),
                reference: self.embed(&t.reference),
                candidate: self.embed(t.candidate.as_ref().unwrap()),
                human: t.human_score.unwrap(),
            })
            .collect()
    }

    /// Calibrated identity start, then descent with a provably stable step.
    pub fn trained_scorer(&self, corpus: &[DialogueTriple], epochs: usize) -> ScorerParams {
        let samples = self.samples(corpus);
        let init = initial_params(&samples).unwrap();
        let gamma = 0.01;
        let cfg = TrainConfig {
            gamma,
            step_size: stable_step_size(&samples, init.beta(), gamma).unwrap(),
            epochs,
            seed: 0,
        };
        train(&samples, &cfg, init).unwrap().params
    }
}
