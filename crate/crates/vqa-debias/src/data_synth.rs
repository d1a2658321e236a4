//! Synthetic VQA corpora with a controlled train/test answer-prior shift.
//!
//! Each instance pairs a templated question with a small scene of object
//! feature vectors. Scenes are built so the answer is recoverable from
//! (question, objects): "is there a <obj>" is yes iff the concept is present,
//! "how many <obj>" counts it, "what color the <obj>" reads the color
//! component planted in the queried object's feature vector. Answers are
//! drawn first, per question type, from a skewed prior; the test split uses a
//! prior peaked on a different answer, which forces a total-variation gap of
//! at least `prior_shift` between the splits while leaving the planted rule
//! intact. Quota sampling makes the empirical priors match the targets to
//! rounding, so the gap holds exactly, not just in expectation.

use std::fs;
use std::io::{Read, Write as IoWrite};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::hex_digest;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Template words shared by every generated vocabulary; index 0 is padding.
const TEMPLATE_WORDS: [&str; 9] = [
    "<pad>", "is", "there", "a", "how", "many", "what", "color", "the",
];

const COLOR_NAMES: [&str; 12] = [
    "red", "blue", "green", "amber", "ivory", "teal", "coral", "olive", "pearl", "slate", "umber",
    "jade",
];

const CHAR_UNIVERSE: &str = "abcdefghijklmnopqrstuvwxyz0123456789<>";

/// Feature noise around each (concept, color) mean.
const FEATURE_NOISE_STD: f64 = 0.1;
/// Probability a simulated annotator reports the planted answer (soft mode).
const ANNOTATOR_FIDELITY: f64 = 0.85;
const ANNOTATORS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    YesNo,
    Number,
    Other,
}

impl QuestionType {
    pub const ALL: [QuestionType; 3] = [QuestionType::YesNo, QuestionType::Number, QuestionType::Other];

    pub fn label(&self) -> &'static str {
        match self {
            QuestionType::YesNo => "yesno",
            QuestionType::Number => "number",
            QuestionType::Other => "other",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn label(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Parameters of one synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_train: usize,
    pub num_test: usize,
    pub answer_vocab_size: usize,
    pub word_vocab_size: usize,
    pub char_vocab_size: usize,
    pub max_question_len: usize,
    pub object_feature_dim: usize,
    pub max_objects: usize,
    /// Minimum total-variation distance between train and test answer priors
    /// per question type.
    pub prior_shift: f64,
    /// Fractions of {yesno, number, other} questions; sums to 1.
    pub type_mix: [f64; 3],
    pub seed: u64,
    /// Emit 10-annotator soft answer scores instead of one-hot labels.
    #[serde(default)]
    pub soft_scores: bool,
}

impl SyntheticSpec {
    /// The corpus used throughout the acceptance suite: 2,000 train / 1,000
    /// test instances with a 0.5 prior shift.
    pub fn reference() -> Self {
        SyntheticSpec {
            num_train: 2000,
            num_test: 1000,
            answer_vocab_size: 12,
            word_vocab_size: 24,
            char_vocab_size: 27,
            max_question_len: 6,
            object_feature_dim: 16,
            max_objects: 5,
            prior_shift: 0.5,
            type_mix: [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
            seed: 7,
            soft_scores: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_train == 0 {
            return Err(Error::Validation("num_train must be positive".into()));
        }
        if self.num_test == 0 {
            return Err(Error::Validation("num_test must be positive".into()));
        }
        if self.answer_vocab_size < 4 {
            return Err(Error::Validation(format!(
                "answer_vocab_size must be at least 4, got {}",
                self.answer_vocab_size
            )));
        }
        if self.word_vocab_size < TEMPLATE_WORDS.len() + 2 {
            return Err(Error::Validation(format!(
                "word_vocab_size must be at least {}, got {}",
                TEMPLATE_WORDS.len() + 2,
                self.word_vocab_size
            )));
        }
        if self.char_vocab_size < 2 {
            return Err(Error::Validation(format!(
                "char_vocab_size must be at least 2, got {}",
                self.char_vocab_size
            )));
        }
        if self.max_question_len < 4 {
            return Err(Error::Validation(format!(
                "max_question_len must be at least 4, got {}",
                self.max_question_len
            )));
        }
        if self.object_feature_dim < 2 {
            return Err(Error::Validation(format!(
                "object_feature_dim must be at least 2, got {}",
                self.object_feature_dim
            )));
        }
        if self.max_objects == 0 {
            return Err(Error::Validation("max_objects must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.prior_shift) {
            return Err(Error::Validation(format!(
                "prior_shift must be in [0, 1], got {}",
                self.prior_shift
            )));
        }
        let mix_sum: f64 = self.type_mix.iter().sum();
        if (mix_sum - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "type_mix must sum to 1, got {mix_sum}"
            )));
        }
        if self.type_mix.iter().any(|m| *m < 0.0) {
            return Err(Error::Validation("type_mix entries must be non-negative".into()));
        }
        // A positive shift needs at least two candidate answers per active type.
        let layout = AnswerLayout::of(self);
        if self.prior_shift > 0.0 {
            for (ty, mix) in QuestionType::ALL.iter().zip(self.type_mix.iter()) {
                if *mix > 0.0 && layout.answers_of(*ty).len() < 2 {
                    return Err(Error::Validation(format!(
                        "answer_vocab_size {} leaves fewer than two {} answers, \
                         cannot realize prior_shift {}",
                        self.answer_vocab_size,
                        ty.label(),
                        self.prior_shift
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        hex_digest(json.as_bytes())
    }
}

/// How the answer vocabulary splits across question types.
struct AnswerLayout {
    num_count: usize,
    other_count: usize,
}

impl AnswerLayout {
    fn of(spec: &SyntheticSpec) -> Self {
        let rest = spec.answer_vocab_size - 2;
        let num_count = (rest / 2).clamp(1, spec.max_objects + 1);
        let other_count = rest - num_count;
        AnswerLayout {
            num_count,
            other_count,
        }
    }

    /// Answer indices belonging to one question type. Yes/no come first,
    /// then counts, then colors.
    fn answers_of(&self, ty: QuestionType) -> std::ops::Range<usize> {
        match ty {
            QuestionType::YesNo => 0..2,
            QuestionType::Number => 2..2 + self.num_count,
            QuestionType::Other => 2 + self.num_count..2 + self.num_count + self.other_count,
        }
    }
}

/// Word-id sequence plus per-token character ids. Padding positions, when
/// present, are trailing and flagged in `pad_mask`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedQuestion {
    pub word_ids: Vec<u32>,
    /// One row per token, `max_chars` columns, char id 0 = padding.
    pub char_ids: Vec<Vec<u32>>,
    /// Number of real (non-padding) tokens.
    pub length: usize,
    pub pad_mask: Vec<bool>,
}

impl TokenizedQuestion {
    pub fn new(word_ids: Vec<u32>, char_ids: Vec<Vec<u32>>) -> Self {
        let length = word_ids.len();
        TokenizedQuestion {
            pad_mask: vec![false; length],
            word_ids,
            char_ids,
            length,
        }
    }

    /// Copy with `extra` trailing padding tokens appended.
    pub fn with_padding(&self, extra: usize) -> Self {
        let mut q = self.clone();
        let width = q.char_ids.first().map_or(0, Vec::len);
        for _ in 0..extra {
            q.word_ids.push(0);
            q.char_ids.push(vec![0; width]);
            q.pad_mask.push(true);
        }
        q
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::Validation("question has zero real tokens".into()));
        }
        if self.char_ids.len() != self.word_ids.len() {
            return Err(Error::Validation(format!(
                "char row count {} does not match word count {}",
                self.char_ids.len(),
                self.word_ids.len()
            )));
        }
        if self.pad_mask.len() != self.word_ids.len() {
            return Err(Error::Validation("pad_mask length mismatch".into()));
        }
        for (t, pad) in self.pad_mask.iter().enumerate() {
            if *pad != (t >= self.length) {
                return Err(Error::Validation(
                    "padding must be trailing and flagged in pad_mask".into(),
                ));
            }
        }
        let width = self.char_ids.first().map_or(0, Vec::len);
        if self.char_ids.iter().any(|row| row.len() != width) {
            return Err(Error::Validation("ragged char id matrix".into()));
        }
        Ok(())
    }
}

/// Per-object feature vectors plus one global vector of the same dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSet {
    pub objects: Vec<Vec<f32>>,
    pub global: Vec<f32>,
}

impl ObjectSet {
    pub fn n(&self) -> usize {
        self.objects.len()
    }

    pub fn dim(&self) -> usize {
        self.global.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() {
            return Err(Error::Validation("object set must contain at least one object".into()));
        }
        let dim = self.global.len();
        if self.objects.iter().any(|o| o.len() != dim) {
            return Err(Error::Validation(
                "object vectors and global vector must share one dimension".into(),
            ));
        }
        let finite = self
            .objects
            .iter()
            .flat_map(|o| o.iter())
            .chain(self.global.iter())
            .all(|x| x.is_finite());
        if !finite {
            return Err(Error::Validation("object features must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAInstance {
    pub question: TokenizedQuestion,
    pub objects: ObjectSet,
    /// Score in [0, 1] per answer-vocabulary entry.
    pub answer_scores: Vec<f32>,
    pub question_type: QuestionType,
    pub instance_id: String,
}

impl QAInstance {
    /// Index of the highest-scoring answer; ties break to the lowest index.
    pub fn target_answer(&self) -> usize {
        let mut best = 0usize;
        for (i, s) in self.answer_scores.iter().enumerate() {
            if *s > self.answer_scores[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub instances: Vec<QAInstance>,
    pub answer_vocab: Vec<String>,
    pub word_vocab: Vec<String>,
    pub char_vocab: Vec<String>,
    pub spec_fingerprint: String,
}

impl Dataset {
    /// Width of the per-token character-id rows.
    pub fn max_chars(&self) -> usize {
        self.instances
            .first()
            .and_then(|i| i.question.char_ids.first())
            .map_or(0, Vec::len)
    }

    pub fn object_feature_dim(&self) -> usize {
        self.instances.first().map_or(0, |i| i.objects.dim())
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for inst in &self.instances {
            inst.question.validate()?;
            inst.objects.validate()?;
            if !seen.insert(inst.instance_id.clone()) {
                return Err(Error::Validation(format!(
                    "duplicate instance_id {}",
                    inst.instance_id
                )));
            }
            if inst.answer_scores.len() != self.answer_vocab.len() {
                return Err(Error::Validation(format!(
                    "{}: answer_scores length {} vs vocab {}",
                    inst.instance_id,
                    inst.answer_scores.len(),
                    self.answer_vocab.len()
                )));
            }
            if !inst.answer_scores.iter().any(|s| *s > 0.0) {
                return Err(Error::Validation(format!(
                    "{}: no positive answer score",
                    inst.instance_id
                )));
            }
            if inst
                .question
                .word_ids
                .iter()
                .any(|id| *id as usize >= self.word_vocab.len())
            {
                return Err(Error::Validation(format!(
                    "{}: word id out of vocabulary",
                    inst.instance_id
                )));
            }
            if inst
                .question
                .char_ids
                .iter()
                .flatten()
                .any(|id| *id as usize >= self.char_vocab.len())
            {
                return Err(Error::Validation(format!(
                    "{}: char id out of vocabulary",
                    inst.instance_id
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Deterministic pseudo-word: consonant-vowel syllables keyed to `i`.
fn pseudo_word(i: usize) -> String {
    const CONS: [char; 12] = ['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't'];
    const VOWS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];
    let mut word = String::new();
    let mut n = i;
    for _ in 0..3 {
        word.push(CONS[n % CONS.len()]);
        n /= CONS.len();
        word.push(VOWS[n % VOWS.len()]);
        n /= VOWS.len();
        if n == 0 {
            break;
        }
    }
    word
}

fn char_to_id(c: char, char_vocab_size: usize) -> u32 {
    let idx = CHAR_UNIVERSE.find(c).unwrap_or(0);
    1 + (idx % (char_vocab_size - 1)) as u32
}

fn char_vocab(char_vocab_size: usize) -> Vec<String> {
    let universe: Vec<char> = CHAR_UNIVERSE.chars().collect();
    let mut vocab = vec!["<pad>".to_string()];
    for slot in 0..char_vocab_size - 1 {
        vocab.push(
            universe
                .get(slot)
                .map(|c| c.to_string())
                .unwrap_or_else(|| format!("c{slot}")),
        );
    }
    vocab
}

/// Integer counts proportional to `weights` summing to `total`
/// (largest-remainder rounding, ties to the lowest index).
fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let mut counts: Vec<usize> = Vec::with_capacity(weights.len());
    let mut fracs: Vec<(usize, f64)> = Vec::with_capacity(weights.len());
    let mut assigned = 0usize;
    for (i, w) in weights.iter().enumerate() {
        let exact = w / sum * total as f64;
        let floor = exact.floor() as usize;
        counts.push(floor);
        assigned += floor;
        fracs.push((i, exact - floor as f64));
    }
    fracs.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in fracs.into_iter().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Skewed categorical prior over `k` answers: uniform base plus `shift` mass
/// on `peak`. Two priors with different peaks are exactly `shift` apart in
/// total variation.
fn skewed_prior(k: usize, shift: f64, peak: usize) -> Vec<f64> {
    let mut p = vec![(1.0 - shift) / k as f64; k];
    p[peak] += shift;
    p
}

struct Generator<'a> {
    spec: &'a SyntheticSpec,
    layout: AnswerLayout,
    answer_vocab: Vec<String>,
    word_vocab: Vec<String>,
    concepts: Vec<usize>, // word ids of concept nouns
    concept_means: Vec<Vec<f64>>,
    color_means: Vec<Vec<f64>>,
    max_chars: usize,
    rng: ChaCha8Rng,
}

impl<'a> Generator<'a> {
    fn new(spec: &'a SyntheticSpec) -> Self {
        let layout = AnswerLayout::of(spec);
        let mut answer_vocab = vec!["yes".to_string(), "no".to_string()];
        for k in 0..layout.num_count {
            answer_vocab.push(k.to_string());
        }
        for k in 0..layout.other_count {
            answer_vocab.push(
                COLOR_NAMES
                    .get(k)
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| pseudo_word(1000 + k)),
            );
        }

        let mut word_vocab: Vec<String> =
            TEMPLATE_WORDS.iter().map(|s| s.to_string()).collect();
        let concept_count = spec.word_vocab_size - TEMPLATE_WORDS.len();
        let mut concepts = Vec::with_capacity(concept_count);
        for k in 0..concept_count {
            concepts.push(word_vocab.len());
            word_vocab.push(pseudo_word(k));
        }

        let max_chars = word_vocab.iter().map(|w| w.chars().count()).max().unwrap_or(1);

        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let dim = spec.object_feature_dim;
        let concept_means = (0..concept_count)
            .map(|_| (0..dim).map(|_| tapegrad::standard_normal(&mut rng)).collect())
            .collect();
        let color_means = (0..layout.other_count)
            .map(|_| (0..dim).map(|_| 0.7 * tapegrad::standard_normal(&mut rng)).collect())
            .collect();

        Generator {
            spec,
            layout,
            answer_vocab,
            word_vocab,
            concepts,
            concept_means,
            color_means,
            max_chars,
            rng,
        }
    }

    fn tokenize(&self, words: &[usize]) -> TokenizedQuestion {
        let word_ids: Vec<u32> = words.iter().map(|w| *w as u32).collect();
        let char_ids = words
            .iter()
            .map(|w| {
                let token = &self.word_vocab[*w];
                let mut row: Vec<u32> = token
                    .chars()
                    .map(|c| char_to_id(c, self.spec.char_vocab_size))
                    .collect();
                row.resize(self.max_chars, 0);
                row
            })
            .collect();
        TokenizedQuestion::new(word_ids, char_ids)
    }

    fn object_feature(&mut self, concept: usize, color: usize) -> Vec<f32> {
        let dim = self.spec.object_feature_dim;
        (0..dim)
            .map(|d| {
                let v = self.concept_means[concept][d]
                    + self.color_means[color % self.color_means.len().max(1)][d]
                    + FEATURE_NOISE_STD * tapegrad::standard_normal(&mut self.rng);
                v as f32
            })
            .collect()
    }

    fn random_color(&mut self) -> usize {
        if self.layout.other_count == 0 {
            0
        } else {
            self.rng.random_range(0..self.layout.other_count)
        }
    }

    fn other_concept(&mut self, avoid: usize) -> usize {
        loop {
            let c = self.rng.random_range(0..self.concepts.len());
            if c != avoid {
                return c;
            }
        }
    }

    fn scene(&mut self, specs: Vec<(usize, usize)>) -> ObjectSet {
        let objects: Vec<Vec<f32>> = specs
            .iter()
            .map(|(c, col)| self.object_feature(*c, *col))
            .collect();
        let dim = self.spec.object_feature_dim;
        let mut global = vec![0.0f64; dim];
        for o in &objects {
            for (g, x) in global.iter_mut().zip(o.iter()) {
                *g += *x as f64;
            }
        }
        let n = objects.len() as f64;
        let global = global.into_iter().map(|g| (g / n) as f32).collect();
        ObjectSet { objects, global }
    }

    /// Build one instance whose planted answer is `answer` (index within the
    /// full answer vocabulary).
    fn instance(&mut self, ty: QuestionType, answer: usize) -> (TokenizedQuestion, ObjectSet) {
        let max_objects = self.spec.max_objects;
        let concept = self.rng.random_range(0..self.concepts.len());
        let concept_word = self.concepts[concept];
        match ty {
            QuestionType::YesNo => {
                // template: is there a <obj>
                let question = self.tokenize(&[1, 2, 3, concept_word]);
                let n = self.rng.random_range(1..=max_objects);
                let mut specs = Vec::with_capacity(n);
                if answer == 0 {
                    let col = self.random_color();
                    specs.push((concept, col));
                    for _ in 1..n {
                        let c = self.rng.random_range(0..self.concepts.len());
                        let col = self.random_color();
                        specs.push((c, col));
                    }
                } else {
                    for _ in 0..n {
                        let c = self.other_concept(concept);
                        let col = self.random_color();
                        specs.push((c, col));
                    }
                }
                (question, self.scene(specs))
            }
            QuestionType::Number => {
                // template: how many <obj>
                let question = self.tokenize(&[4, 5, concept_word]);
                let count = answer - 2;
                let lo = usize::from(count == 0);
                let extra = self.rng.random_range(lo..=max_objects - count.max(lo));
                let mut specs = Vec::with_capacity(count + extra);
                for _ in 0..count {
                    let col = self.random_color();
                    specs.push((concept, col));
                }
                for _ in 0..extra {
                    let c = self.other_concept(concept);
                    let col = self.random_color();
                    specs.push((c, col));
                }
                let mut shuffled = specs;
                shuffled.shuffle(&mut self.rng);
                (question, self.scene(shuffled))
            }
            QuestionType::Other => {
                // template: what color the <obj>
                let question = self.tokenize(&[6, 7, 8, concept_word]);
                let color = answer - 2 - self.layout.num_count;
                let extra = self.rng.random_range(0..max_objects);
                let mut specs = vec![(concept, color)];
                for _ in 0..extra {
                    let c = self.other_concept(concept);
                    let col = self.random_color();
                    specs.push((c, col));
                }
                specs.shuffle(&mut self.rng);
                (question, self.scene(specs))
            }
        }
    }

    fn answer_scores(&mut self, ty: QuestionType, answer: usize) -> Vec<f32> {
        let mut scores = vec![0.0f32; self.spec.answer_vocab_size];
        if !self.spec.soft_scores {
            scores[answer] = 1.0;
            return scores;
        }
        // Simulated annotators: the first always reports the planted answer,
        // the rest defect uniformly within the question type's answer range.
        let range = self.layout.answers_of(ty);
        let mut counts = vec![0usize; self.spec.answer_vocab_size];
        counts[answer] += 1;
        for _ in 1..ANNOTATORS {
            if self.rng.random_range(0.0..1.0) < ANNOTATOR_FIDELITY || range.len() < 2 {
                counts[answer] += 1;
            } else {
                loop {
                    let a = self.rng.random_range(range.clone());
                    if a != answer {
                        counts[a] += 1;
                        break;
                    }
                }
            }
        }
        for (s, c) in scores.iter_mut().zip(counts.iter()) {
            *s = ((*c as f64 / 3.0).min(1.0)) as f32;
        }
        scores
    }

    fn split(&mut self, split: Split, total: usize) -> Vec<QAInstance> {
        let type_counts = largest_remainder(&self.spec.type_mix, total);
        let mut instances = Vec::with_capacity(total);
        for (ty, n_ty) in QuestionType::ALL.iter().zip(type_counts.iter()) {
            if *n_ty == 0 {
                continue;
            }
            let range = self.layout.answers_of(*ty);
            let k = range.len();
            // Train peaks on the first answer of the type, test on the second.
            let peak = match split {
                Split::Train => 0,
                Split::Test => 1 % k,
            };
            let prior = skewed_prior(k, self.spec.prior_shift, peak);
            let answer_counts = largest_remainder(&prior, *n_ty);
            for (slot, count) in answer_counts.iter().enumerate() {
                let answer = range.start + slot;
                for _ in 0..*count {
                    let (question, objects) = self.instance(*ty, answer);
                    let answer_scores = self.answer_scores(*ty, answer);
                    instances.push(QAInstance {
                        question,
                        objects,
                        answer_scores,
                        question_type: *ty,
                        instance_id: String::new(),
                    });
                }
            }
        }
        instances.shuffle(&mut self.rng);
        for (i, inst) in instances.iter_mut().enumerate() {
            inst.instance_id = format!("synth-{}-{:05}", split.label(), i);
        }
        instances
    }
}

/// Generate train and test splits. Deterministic in `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let fingerprint = spec.fingerprint();
    let mut g = Generator::new(spec);
    let train_instances = g.split(Split::Train, spec.num_train);
    let test_instances = g.split(Split::Test, spec.num_test);
    let char_vocab = char_vocab(spec.char_vocab_size);
    let train = Dataset {
        split: Split::Train,
        instances: train_instances,
        answer_vocab: g.answer_vocab.clone(),
        word_vocab: g.word_vocab.clone(),
        char_vocab: char_vocab.clone(),
        spec_fingerprint: fingerprint.clone(),
    };
    let test = Dataset {
        split: Split::Test,
        instances: test_instances,
        answer_vocab: g.answer_vocab,
        word_vocab: g.word_vocab,
        char_vocab,
        spec_fingerprint: fingerprint,
    };
    train.validate()?;
    test.validate()?;
    Ok((train, test))
}

// ---------------------------------------------------------------------------
// Serialization: meta.json + features.bin
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct InstanceRecord {
    id: String,
    question_type: QuestionType,
    word_ids: Vec<u32>,
    char_ids: Vec<Vec<u32>>,
    length: usize,
    answer_scores: Vec<f32>,
    num_objects: usize,
    /// Offset into features.bin, in f32 elements.
    feature_offset: u64,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    split: Split,
    spec_fingerprint: String,
    object_feature_dim: usize,
    features_sha256: String,
    answer_vocab: Vec<String>,
    word_vocab: Vec<String>,
    char_vocab: Vec<String>,
    instances: Vec<InstanceRecord>,
}

/// Write a dataset as `meta.json` plus `features.bin` (little-endian f32,
/// row-major, object rows then the global row per instance).
pub fn write(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let dim = dataset.object_feature_dim();
    let mut features: Vec<u8> = Vec::new();
    let mut records = Vec::with_capacity(dataset.instances.len());
    let mut offset = 0u64;
    for inst in &dataset.instances {
        records.push(InstanceRecord {
            id: inst.instance_id.clone(),
            question_type: inst.question_type,
            word_ids: inst.question.word_ids.clone(),
            char_ids: inst.question.char_ids.clone(),
            length: inst.question.length,
            answer_scores: inst.answer_scores.clone(),
            num_objects: inst.objects.n(),
            feature_offset: offset,
        });
        for row in inst.objects.objects.iter().chain(std::iter::once(&inst.objects.global)) {
            for x in row {
                features.extend_from_slice(&x.to_le_bytes());
            }
        }
        offset += ((inst.objects.n() + 1) * dim) as u64;
    }
    let meta = Meta {
        format_version: FORMAT_VERSION,
        split: dataset.split,
        spec_fingerprint: dataset.spec_fingerprint.clone(),
        object_feature_dim: dim,
        features_sha256: hex_digest(&features),
        answer_vocab: dataset.answer_vocab.clone(),
        word_vocab: dataset.word_vocab.clone(),
        char_vocab: dataset.char_vocab.clone(),
        instances: records,
    };
    let mut meta_file = fs::File::create(dir.join("meta.json"))?;
    serde_json::to_writer(&mut meta_file, &meta).map_err(|e| Error::Parse {
        context: "meta.json".into(),
        detail: e.to_string(),
    })?;
    meta_file.write_all(b"\n")?;
    fs::write(dir.join("features.bin"), &features)?;
    Ok(())
}

/// Read a dataset directory written by [`write`].
pub fn read(dir: &Path) -> Result<Dataset> {
    let meta_path = dir.join("meta.json");
    let mut meta_raw = String::new();
    fs::File::open(&meta_path)?.read_to_string(&mut meta_raw)?;
    let meta: Meta = serde_json::from_str(&meta_raw).map_err(|e| Error::Parse {
        context: meta_path.display().to_string(),
        detail: format!("line {} column {}: {e}", e.line(), e.column()),
    })?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::Incompatible(format!(
            "dataset format_version {} (supported: {FORMAT_VERSION})",
            meta.format_version
        )));
    }
    let features = fs::read(dir.join("features.bin"))?;
    if hex_digest(&features) != meta.features_sha256 {
        return Err(Error::Integrity(
            "features.bin checksum does not match meta.json".into(),
        ));
    }
    let dim = meta.object_feature_dim;
    let total_f32 = features.len() / 4;
    let mut instances = Vec::with_capacity(meta.instances.len());
    for rec in meta.instances {
        let need = (rec.num_objects + 1) * dim;
        let start = rec.feature_offset as usize;
        if start + need > total_f32 {
            return Err(Error::Integrity(format!(
                "features.bin truncated: instance {} needs {need} floats at offset {start}",
                rec.id
            )));
        }
        let mut rows = Vec::with_capacity(rec.num_objects + 1);
        for r in 0..rec.num_objects + 1 {
            let mut row = Vec::with_capacity(dim);
            for c in 0..dim {
                let at = (start + r * dim + c) * 4;
                let bytes: [u8; 4] = features[at..at + 4].try_into().expect("bounds checked");
                row.push(f32::from_le_bytes(bytes));
            }
            rows.push(row);
        }
        let global = rows.pop().expect("at least the global row");
        let mut question = TokenizedQuestion::new(rec.word_ids, rec.char_ids);
        if rec.length > question.word_ids.len() {
            return Err(Error::Integrity(format!(
                "instance {}: length {} exceeds {} tokens",
                rec.id,
                rec.length,
                question.word_ids.len()
            )));
        }
        question.length = rec.length;
        for (t, m) in question.pad_mask.iter_mut().enumerate() {
            *m = t >= rec.length;
        }
        instances.push(QAInstance {
            question,
            objects: ObjectSet {
                objects: rows,
                global,
            },
            answer_scores: rec.answer_scores,
            question_type: rec.question_type,
            instance_id: rec.id,
        });
    }
    let dataset = Dataset {
        split: meta.split,
        instances,
        answer_vocab: meta.answer_vocab,
        word_vocab: meta.word_vocab,
        char_vocab: meta.char_vocab,
        spec_fingerprint: meta.spec_fingerprint,
    };
    dataset.validate()?;
    Ok(dataset)
}

// ---------------------------------------------------------------------------
// Priors
// ---------------------------------------------------------------------------

/// Empirical answer prior of one question type, from argmax answer scores.
pub fn answer_prior(dataset: &Dataset, qtype: QuestionType) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; dataset.answer_vocab.len()];
    let mut total = 0usize;
    for inst in &dataset.instances {
        if inst.question_type == qtype {
            counts[inst.target_answer()] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput(format!(
            "no instances of question type {}",
            qtype.label()
        )));
    }
    Ok(counts.iter().map(|c| *c as f64 / total as f64).collect())
}

/// Total-variation distance between two categorical distributions.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p
        .iter()
        .zip(q.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
}
