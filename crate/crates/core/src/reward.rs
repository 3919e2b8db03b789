//! Reward modeling and aggregation.
//!
//! Agreement and coherence rewards come from linear Bradley-Terry reward
//! models fitted on best/worst pairs of SFT samples. Conciseness is the
//! negative edit ratio. The three are combined by a per-task weighted sum.

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, RequirementKind, RewriteInstance, TaskKind, Tone, SPURIOUS_TOKEN};
use crate::error::{Error, Result};
use crate::judge;
use crate::policy::{rollout, Decoding, EnvConfig, PolicyParams, SamplingConfig};
use crate::seed::{self, Rng};
use crate::textops;

pub const NUM_RESPONSE_FEATURES: usize = 8;
pub const RESPONSE_FEATURE_VERSION: u32 = 1;

pub type ResponseFeatures = [f64; NUM_RESPONSE_FEATURES];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Agreement,
    Coherence,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Agreement => "agreement",
            Objective::Coherence => "coherence",
        }
    }

    /// Oracle score of a revision under this objective.
    pub fn oracle(self, instance: &RewriteInstance, revised: &Document) -> f64 {
        match self {
            Objective::Agreement => judge::agreement(instance, revised),
            Objective::Coherence => f64::from(judge::coherence(revised)),
        }
    }
}

fn first_sentence_lower(doc: &Document) -> Vec<String> {
    doc.sentences()
        .first()
        .map(|&(s, e)| doc.tokens[s..e].iter().map(|t| t.to_lowercase()).collect())
        .unwrap_or_default()
}

fn lowercase_letters(doc: &Document) -> usize {
    doc.tokens
        .iter()
        .flat_map(|t| t.chars())
        .filter(char::is_ascii_lowercase)
        .count()
}

/// Whether the document changed at the site a requirement targets. A proxy
/// for the requirement's postcondition, not the postcondition itself.
fn site_changed(kind: &RequirementKind, initial: &Document, revised: &Document) -> bool {
    match kind {
        RequirementKind::ReplacePlaceholder { key, .. } => {
            let ph = crate::corpus::placeholder(key);
            let n = |d: &Document| d.tokens.iter().filter(|t| **t == ph).count();
            n(revised) < n(initial)
        }
        RequirementKind::AddSentence { tokens } => {
            revised.tokens.len() >= initial.tokens.len() + tokens.len()
        }
        RequirementKind::ChangeTone { .. } => revised.tone_tag != initial.tone_tag,
        RequirementKind::ReorderDefinitionFirst => {
            first_sentence_lower(revised) != first_sentence_lower(initial)
        }
        RequirementKind::Shorten => revised.tokens.len() < initial.tokens.len(),
        RequirementKind::Uppercase => lowercase_letters(revised) < lowercase_letters(initial),
    }
}

/// `[bias, fraction of target sites changed, spurious-edit count, edit
/// ratio, remaining placeholders, stale derived records, normalized length
/// delta, placeholders remaining after a tone change]`.
pub fn response_features(instance: &RewriteInstance, revised: &Document) -> ResponseFeatures {
    let initial = &instance.initial;
    let (changed, sites) = if instance.task == TaskKind::Factuality {
        let changed = instance
            .critiques
            .iter()
            .filter(|c| revised.facts.get(c.index).map(|f| f.value) != Some(initial.facts[c.index].value))
            .count();
        (changed, instance.critiques.len())
    } else {
        let changed = instance
            .requirements
            .iter()
            .filter(|r| site_changed(&r.kind, initial, revised))
            .count();
        (changed, instance.requirements.len())
    };
    let site_fraction = if sites == 0 {
        0.0
    } else {
        changed as f64 / sites as f64
    };
    let spurious = |d: &Document| {
        d.tokens
            .iter()
            .filter(|t| t.eq_ignore_ascii_case(SPURIOUS_TOKEN))
            .count() as f64
    };
    let n0 = initial.tokens.len().max(1) as f64;
    [
        1.0,
        site_fraction,
        (spurious(revised) - spurious(initial)).max(0.0),
        textops::edit_ratio(&initial.tokens, &revised.tokens).unwrap_or(0.0),
        revised.placeholder_count() as f64,
        revised.stale_derived().len() as f64,
        (revised.tokens.len() as f64 - initial.tokens.len() as f64) / n0,
        if revised.tone_tag == Tone::Plain {
            0.0
        } else {
            revised.placeholder_count() as f64
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    pub objective: Objective,
    pub feature_version: u32,
    pub phi: Vec<f64>,
}

impl RewardModel {
    pub fn new(objective: Objective) -> Self {
        RewardModel {
            objective,
            feature_version: RESPONSE_FEATURE_VERSION,
            phi: vec![0.0; NUM_RESPONSE_FEATURES],
        }
    }

    pub fn score_features(&self, x: &ResponseFeatures) -> f64 {
        self.phi.iter().zip(x).map(|(w, v)| w * v).sum()
    }

    pub fn score(&self, instance: &RewriteInstance, revised: &Document) -> f64 {
        self.score_features(&response_features(instance, revised))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::pipeline::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: RewardModel = crate::pipeline::read_json(path)?;
        if m.feature_version != RESPONSE_FEATURE_VERSION {
            return Err(Error::FeatureVersion {
                expected: RESPONSE_FEATURE_VERSION,
                found: m.feature_version,
            });
        }
        if m.phi.len() != NUM_RESPONSE_FEATURES || m.phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("malformed reward model in {}", path.display())));
        }
        Ok(m)
    }
}

fn sigmoid(d: f64) -> f64 {
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// `log(sigmoid(d))` without overflow for large `|d|`.
fn log_sigmoid(d: f64) -> f64 {
    -((-d).max(0.0) + (-d.abs()).exp().ln_1p())
}

/// Bradley-Terry preference probability `e^r+ / (e^r+ + e^r-)`, evaluated
/// as the sigmoid of the difference.
pub fn bt_probability(r_plus: f64, r_minus: f64) -> f64 {
    sigmoid(r_plus - r_minus)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub instance_id: String,
    pub task: TaskKind,
    pub objective: Objective,
    pub better: Document,
    pub worse: Document,
    pub score_gap: f64,
    pub better_features: ResponseFeatures,
    pub worse_features: ResponseFeatures,
}

/// Mean `-log sigmoid(r+ - r-)` over the batch plus, when `z_loss` is set,
/// `z_loss * mean((r+ + r-)^2)`; returns the loss and its gradient in `phi`.
pub fn bt_loss_and_grad(
    model: &RewardModel,
    batch: &[&PreferencePair],
    z_loss: Option<f64>,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Domain("empty preference batch".into()));
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; model.phi.len()];
    for p in batch {
        let rp = model.score_features(&p.better_features);
        let rm = model.score_features(&p.worse_features);
        let d = rp - rm;
        loss -= log_sigmoid(d);
        // d/dd of -log sigmoid(d) is -(1 - sigmoid(d)) = -sigmoid(-d).
        let coef = -sigmoid(-d);
        for (g, (a, b)) in grad.iter_mut().zip(p.better_features.iter().zip(&p.worse_features)) {
            *g += coef * (a - b);
        }
        if let Some(lambda) = z_loss {
            let s = rp + rm;
            loss += lambda * s * s;
            for (g, (a, b)) in grad.iter_mut().zip(p.better_features.iter().zip(&p.worse_features)) {
                *g += 2.0 * lambda * s * (a + b);
            }
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((loss / n, grad))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PairSets {
    pub agreement: Vec<PreferencePair>,
    pub coherence: Vec<PreferencePair>,
}

impl PairSets {
    pub fn get(&self, objective: Objective) -> &[PreferencePair] {
        match objective {
            Objective::Agreement => &self.agreement,
            Objective::Coherence => &self.coherence,
        }
    }
}

/// Index of the first maximum and first minimum.
fn extremes(scores: &[f64]) -> (usize, usize) {
    let mut hi = 0;
    let mut lo = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[hi] {
            hi = i;
        }
        if s < scores[lo] {
            lo = i;
        }
    }
    (hi, lo)
}

/// Samples `n` SFT rollouts per instance and keeps, per objective, the
/// highest- and lowest-scoring finals. Instances whose samples all score the
/// same under an objective yield no pair for it.
pub fn build_preference_pairs(
    sft: &PolicyParams,
    dataset: &[RewriteInstance],
    n: usize,
    env: &EnvConfig,
    decoding: &Decoding,
    root_seed: u64,
) -> Result<PairSets> {
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 samples per prompt, got {n}")));
    }
    let per_instance: Vec<[Option<PreferencePair>; 2]> = dataset
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let mut rng = seed::stream(root_seed, "pairs", i as u64);
            let finals: Vec<Document> = (0..n)
                .map(|_| rollout(sft, inst, env, decoding, &mut rng).final_doc)
                .collect();
            [Objective::Agreement, Objective::Coherence].map(|obj| {
                let scores: Vec<f64> = finals.iter().map(|d| obj.oracle(inst, d)).collect();
                let (hi, lo) = extremes(&scores);
                let gap = scores[hi] - scores[lo];
                (gap > 0.0).then(|| PreferencePair {
                    instance_id: inst.id.clone(),
                    task: inst.task,
                    objective: obj,
                    better_features: response_features(inst, &finals[hi]),
                    worse_features: response_features(inst, &finals[lo]),
                    better: finals[hi].clone(),
                    worse: finals[lo].clone(),
                    score_gap: gap,
                })
            })
        })
        .collect();
    let mut sets = PairSets::default();
    for [agr, coh] in per_instance {
        sets.agreement.extend(agr);
        sets.coherence.extend(coh);
    }
    Ok(sets)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Held-out accuracy is sampled every `eval_every` steps.
    pub eval_every: usize,
    /// Pairs per update; 0 means all pairs.
    pub batch_size: usize,
    /// Weight of the optional logit-magnitude penalty; `None` disables it.
    pub z_loss: Option<f64>,
    /// Best-of-n sample count for pair construction.
    pub samples_per_prompt: usize,
    /// Decoding used to draw the n samples.
    pub sampling: SamplingConfig,
}

impl Default for RmConfig {
    fn default() -> Self {
        RmConfig {
            steps: 5000,
            learning_rate: 0.5,
            eval_every: 250,
            batch_size: 0,
            z_loss: None,
            samples_per_prompt: 10,
            sampling: SamplingConfig::default(),
        }
    }
}

impl RmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eval_every == 0 {
            return Err(Error::Config("rm eval_every must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("rm learning_rate must be positive".into()));
        }
        if self.samples_per_prompt < 2 {
            return Err(Error::Config("rm samples_per_prompt must be at least 2".into()));
        }
        if self.z_loss.is_some_and(|z| !(z >= 0.0 && z.is_finite())) {
            return Err(Error::Config("rm z_loss must be non-negative".into()));
        }
        self.sampling.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub train_loss: f64,
    pub heldout_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmReport {
    pub objective: Objective,
    pub train_pairs: usize,
    pub heldout_pairs: usize,
    pub curve: Vec<CurvePoint>,
    pub final_accuracy: Option<f64>,
    /// Final held-out accuracy per task, for tasks with held-out pairs.
    pub per_task_accuracy: Vec<(TaskKind, f64)>,
}

/// Fraction of pairs the model ranks strictly in the oracle's order.
pub fn pairwise_accuracy(model: &RewardModel, pairs: &[PreferencePair]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let right = pairs
        .iter()
        .filter(|p| model.score_features(&p.better_features) > model.score_features(&p.worse_features))
        .count();
    Some(right as f64 / pairs.len() as f64)
}

pub fn per_task_accuracy(model: &RewardModel, pairs: &[PreferencePair]) -> Vec<(TaskKind, f64)> {
    TaskKind::ALL
        .into_iter()
        .filter_map(|task| {
            let subset: Vec<PreferencePair> = pairs.iter().filter(|p| p.task == task).cloned().collect();
            pairwise_accuracy(model, &subset).map(|a| (task, a))
        })
        .collect()
}

/// Gradient descent on the Bradley-Terry loss from zero weights.
pub fn train_reward_model(
    train: &[PreferencePair],
    heldout: &[PreferencePair],
    objective: Objective,
    cfg: &RmConfig,
    rng: &mut Rng,
) -> Result<(RewardModel, RmReport)> {
    cfg.validate()?;
    let train: Vec<&PreferencePair> = train.iter().filter(|p| p.objective == objective).collect();
    if train.is_empty() {
        return Err(Error::Domain(format!("no {} preference pairs to train on", objective.name())));
    }
    let heldout: Vec<PreferencePair> = heldout.iter().filter(|p| p.objective == objective).cloned().collect();
    let mut model = RewardModel::new(objective);
    let mut curve = Vec::with_capacity(cfg.steps / cfg.eval_every);
    let full = cfg.batch_size == 0 || cfg.batch_size >= train.len();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = train.len();
    for step in 1..=cfg.steps {
        let batch: Vec<&PreferencePair> = if full {
            train.clone()
        } else {
            if cursor + cfg.batch_size > order.len() {
                order.shuffle(rng);
                cursor = 0;
            }
            let b = order[cursor..cursor + cfg.batch_size].iter().map(|&i| train[i]).collect();
            cursor += cfg.batch_size;
            b
        };
        let (loss, grad) = bt_loss_and_grad(&model, &batch, cfg.z_loss)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                stage: "reward model training",
                detail: format!("loss {loss} at step {step}; lower the learning rate"),
            });
        }
        for (w, g) in model.phi.iter_mut().zip(&grad) {
            *w -= cfg.learning_rate * g;
        }
        if step % cfg.eval_every == 0 {
            curve.push(CurvePoint {
                step,
                train_loss: loss,
                heldout_accuracy: pairwise_accuracy(&model, &heldout).unwrap_or(f64::NAN),
            });
        }
    }
    if model.phi.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            stage: "reward model training",
            detail: "weights diverged".into(),
        });
    }
    let report = RmReport {
        objective,
        train_pairs: train.len(),
        heldout_pairs: heldout.len(),
        final_accuracy: pairwise_accuracy(&model, &heldout),
        per_task_accuracy: per_task_accuracy(&model, &heldout),
        curve,
    };
    Ok((model, report))
}

/// Rule-based conciseness reward: the negated edit ratio against the initial
/// document.
pub fn conciseness_reward(instance: &RewriteInstance, revised: &Document) -> f64 {
    -textops::edit_ratio(&instance.initial.tokens, &revised.tokens).unwrap_or(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightTriple {
    pub agreement: f64,
    pub coherence: f64,
    pub conciseness: f64,
}

impl WeightTriple {
    pub const fn new(agreement: f64, coherence: f64, conciseness: f64) -> Self {
        WeightTriple {
            agreement,
            coherence,
            conciseness,
        }
    }

    /// Scales non-negative raw weights onto the simplex.
    pub fn normalized(agreement: f64, coherence: f64, conciseness: f64) -> Result<Self> {
        let s = agreement + coherence + conciseness;
        if !(s > 0.0) || agreement < 0.0 || coherence < 0.0 || conciseness < 0.0 {
            return Err(Error::Config("weights must be non-negative with a positive sum".into()));
        }
        Ok(WeightTriple::new(agreement / s, coherence / s, conciseness / s))
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.agreement, self.coherence, self.conciseness];
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::Config(format!("negative or non-finite weight in {self:?}")));
        }
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("weights {self:?} do not sum to 1")));
        }
        Ok(())
    }
}

/// One row of the weights table as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightEntry {
    pub task: TaskKind,
    pub w_agreement: f64,
    pub w_coherence: f64,
    pub w_conciseness: f64,
}

/// Per-task weight triples over (agreement, coherence, conciseness).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<WeightEntry>", into = "Vec<WeightEntry>")]
pub struct RewardWeights {
    pub per_task: [WeightTriple; 3],
}

impl RewardWeights {
    /// Task-agnostic weighting (9/16, 2/16, 5/16).
    pub fn static_default() -> Self {
        Self::uniform(WeightTriple::new(9.0 / 16.0, 2.0 / 16.0, 5.0 / 16.0))
    }

    /// Factuality (8, 6, 2)/16, stylistic (3, 4, 2)/9, conversational (9, 5, 2)/16.
    pub fn task_specific_default() -> Self {
        RewardWeights {
            per_task: [
                WeightTriple::new(8.0 / 16.0, 6.0 / 16.0, 2.0 / 16.0),
                WeightTriple::new(3.0 / 9.0, 4.0 / 9.0, 2.0 / 9.0),
                WeightTriple::new(9.0 / 16.0, 5.0 / 16.0, 2.0 / 16.0),
            ],
        }
    }

    pub fn uniform(w: WeightTriple) -> Self {
        RewardWeights { per_task: [w; 3] }
    }

    pub fn get(&self, task: TaskKind) -> WeightTriple {
        self.per_task[task.index()]
    }

    pub fn validate(&self) -> Result<()> {
        self.per_task.iter().try_for_each(WeightTriple::validate)
    }
}

impl TryFrom<Vec<WeightEntry>> for RewardWeights {
    type Error = Error;

    fn try_from(entries: Vec<WeightEntry>) -> Result<Self> {
        let mut slots: [Option<WeightTriple>; 3] = [None; 3];
        for e in entries {
            let slot = &mut slots[e.task.index()];
            if slot.is_some() {
                return Err(Error::Config(format!("duplicate weights for task {}", e.task)));
            }
            *slot = Some(WeightTriple::new(e.w_agreement, e.w_coherence, e.w_conciseness));
        }
        let mut per_task = [WeightTriple::new(0.0, 0.0, 0.0); 3];
        for (task, slot) in TaskKind::ALL.into_iter().zip(slots) {
            per_task[task.index()] =
                slot.ok_or_else(|| Error::Config(format!("missing weights for task {task}")))?;
        }
        let w = RewardWeights { per_task };
        w.validate()?;
        Ok(w)
    }
}

impl From<RewardWeights> for Vec<WeightEntry> {
    fn from(w: RewardWeights) -> Self {
        TaskKind::ALL
            .into_iter()
            .map(|task| {
                let t = w.get(task);
                WeightEntry {
                    task,
                    w_agreement: t.agreement,
                    w_coherence: t.coherence,
                    w_conciseness: t.conciseness,
                }
            })
            .collect()
    }
}

/// Task-weighted sum of the three objective rewards.
pub fn aggregate_reward(weights: &RewardWeights, task: TaskKind, r_agr: f64, r_coh: f64, r_con: f64) -> f64 {
    let w = weights.get(task);
    w.agreement * r_agr + w.coherence * r_coh + w.conciseness * r_con
}

/// Population z-scores; all zeros when the standard deviation is below 1e-8.
pub fn standardize(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-8 {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|x| (x - mean) / std).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_factuality_instance, FactualityConfig, Span};

    #[test]
    fn bt_probability_basics() {
        assert_eq!(bt_probability(0.3, 0.3), 0.5);
        assert_eq!(bt_probability(1000.0, -1000.0), 1.0);
        assert_eq!(bt_probability(-1000.0, 1000.0), 0.0);
        let p = bt_probability(1.0, 0.0);
        let direct = 1f64.exp() / (1f64.exp() + 1.0);
        assert!((p - direct).abs() < 1e-15);
    }

    #[test]
    fn log_sigmoid_is_stable() {
        assert!((log_sigmoid(0.0) + 2f64.ln()).abs() < 1e-15);
        assert!(log_sigmoid(1000.0).abs() < 1e-300);
        assert!((log_sigmoid(-1000.0) + 1000.0).abs() < 1e-9);
    }

    fn pair(better: ResponseFeatures, worse: ResponseFeatures) -> PreferencePair {
        PreferencePair {
            instance_id: "x".into(),
            task: TaskKind::Factuality,
            objective: Objective::Agreement,
            better: Document::default(),
            worse: Document::default(),
            score_gap: 1.0,
            better_features: better,
            worse_features: worse,
        }
    }

    #[test]
    fn equal_scores_give_log_two() {
        let p = pair([1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], [1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let (loss, _) = bt_loss_and_grad(&RewardModel::new(Objective::Agreement), &[&p], None).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn loss_decreases_with_margin() {
        let mut prev = f64::INFINITY;
        for m in 0..=10 {
            let p = pair([1.0, m as f64, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
            let mut model = RewardModel::new(Objective::Agreement);
            model.phi[1] = 1.0;
            let (loss, _) = bt_loss_and_grad(&model, &[&p], None).unwrap();
            assert!(loss < prev);
            prev = loss;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn separable_toy_pairs_are_learned() {
        // One feature carries the oracle gap.
        let mk = |g: f64| pair([1.0, g, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let train: Vec<_> = (1..=20).map(|i| mk(i as f64 / 20.0)).collect();
        let held: Vec<_> = (1..=7).map(|i| mk(i as f64 / 7.0)).collect();
        let cfg = RmConfig {
            steps: 100,
            eval_every: 10,
            ..RmConfig::default()
        };
        let (model, report) =
            train_reward_model(&train, &held, Objective::Agreement, &cfg, &mut seed::stream(0, "rm", 0)).unwrap();
        assert_eq!(report.final_accuracy, Some(1.0));
        assert_eq!(report.curve.len(), 10);
        assert!(model.phi[1] > 0.0);
        assert_eq!(report.per_task_accuracy, vec![(TaskKind::Factuality, 1.0)]);
    }

    #[test]
    fn features_of_gold_and_initial() {
        let cfg = crate::corpus::GeneratorConfig::default();
        for task in TaskKind::ALL {
            for inst in crate::corpus::gen_split(task, 4, "feat", 20, &cfg).unwrap() {
                let x0 = response_features(&inst, &inst.initial);
                assert_eq!((x0[0], x0[1], x0[3], x0[6]), (1.0, 0.0, 0.0, 0.0));
                let xg = response_features(&inst, &inst.gold);
                assert_eq!(xg[1], 1.0);
                assert_eq!((xg[5], xg[7]), (0.0, 0.0));
                for doc in [&inst.initial, &inst.gold] {
                    let x = response_features(&inst, doc);
                    if x[7] > 0.0 {
                        assert_eq!(crate::judge::coherence(doc), 0);
                    }
                }
            }
        }
    }

    #[test]
    fn conciseness_examples() {
        let inst = gen_factuality_instance(
            1,
            &FactualityConfig {
                facts: Span::exactly(3),
                corrupted: Span::exactly(1),
                derived: Span::exactly(0),
            },
        )
        .unwrap();
        assert_eq!(conciseness_reward(&inst, &inst.initial), 0.0);
        // One value token changed out of 15.
        assert!((conciseness_reward(&inst, &inst.gold) + 1.0 / 15.0).abs() < 1e-12);

        let mut ten = inst.clone();
        ten.initial.tokens = (0..10).map(|i| format!("w{i}")).collect();
        let mut one = ten.initial.clone();
        one.tokens[4] = "changed".into();
        assert!((conciseness_reward(&ten, &one) + 0.1).abs() < 1e-12);
        let mut heavy = ten.initial.clone();
        heavy.tokens = (0..15).map(|i| format!("z{i}")).collect();
        assert!((conciseness_reward(&ten, &heavy) + 1.5).abs() < 1e-12);
    }

    #[test]
    fn default_weights_are_on_the_simplex() {
        RewardWeights::static_default().validate().unwrap();
        RewardWeights::task_specific_default().validate().unwrap();
        assert_eq!((9.0 + 2.0 + 5.0) / 16.0, 1.0);
        assert_eq!((8.0 + 6.0 + 2.0) / 16.0, 1.0);
        assert_eq!((3.0 + 4.0 + 2.0) / 9.0, 1.0);
        assert_eq!((9.0 + 5.0 + 2.0) / 16.0, 1.0);
    }

    #[test]
    fn aggregate_examples() {
        let s = RewardWeights::static_default();
        assert_eq!(aggregate_reward(&s, TaskKind::Stylistic, 1.0, 1.0, 0.0), 0.6875);
        let t = RewardWeights::task_specific_default();
        assert_eq!(aggregate_reward(&t, TaskKind::Factuality, 0.0, 0.0, 0.0), 0.0);
        let only = RewardWeights::uniform(WeightTriple::new(1.0, 0.0, 0.0));
        assert_eq!(aggregate_reward(&only, TaskKind::Conversational, 0.37, 5.0, -2.0), 0.37);
    }

    #[test]
    fn weights_table_round_trip_and_validation() {
        let w = RewardWeights::task_specific_default();
        let json = serde_json::to_string(&w).unwrap();
        assert!(json.contains("\"w_agreement\""));
        let back: RewardWeights = serde_json::from_str(&json).unwrap();
        assert_eq!(back, w);
        let bad = r#"[{"task":"factuality","w_agreement":0.5,"w_coherence":0.5,"w_conciseness":0.5}]"#;
        assert!(serde_json::from_str::<RewardWeights>(bad).is_err());
    }

    #[test]
    fn standardize_examples() {
        assert_eq!(standardize(&[0.0, 1.0]), vec![-1.0, 1.0]);
        assert_eq!(standardize(&[3.0, 3.0, 3.0]), vec![0.0; 3]);
    }
}
