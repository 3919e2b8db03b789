//! Behavior cloning of gold edit scripts over the task mixture.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    features_from_summary, gold_action_sequence, rollout, step_log_prob_grad, Decoding,
    EnvConfig, EpisodeState, FeatureVec, PolicyParams, SamplingConfig, StepRecord, Trajectory,
    FEATURE_VERSION,
};
use crate::corpus::RewriteInstance;
use crate::error::{Error, Result};
use crate::seed::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SftConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Instances per update; 0 means the full training set.
    pub batch_size: usize,
}

impl Default for SftConfig {
    fn default() -> Self {
        SftConfig {
            epochs: 3,
            learning_rate: 0.1,
            batch_size: 0,
        }
    }
}

impl SftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("sft learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftReport {
    /// Mean per-instance negative log-likelihood of the gold scripts, before
    /// each epoch and once after the last.
    pub loss_curve: Vec<f64>,
    /// Fraction of held-out instances whose greedy action sequence equals
    /// the gold script.
    pub heldout_exact_match: f64,
    /// Fraction of held-out instances whose greedy final document equals gold.
    pub heldout_gold_match: f64,
}

/// Teacher-forced trajectory of the gold edit script.
pub fn demonstration(instance: &RewriteInstance, env: &EnvConfig) -> Result<Trajectory> {
    let actions = gold_action_sequence(instance);
    let mut state = EpisodeState::new(
        instance,
        EnvConfig {
            max_steps: env.max_steps.max(actions.len()),
            ..*env
        },
    );
    let mut steps = Vec::with_capacity(actions.len());
    for &a in &actions {
        let candidates = state.valid_actions();
        let chosen = candidates.iter().position(|&c| c == a).ok_or_else(|| {
            Error::Domain(format!("gold action {a:?} not valid in {}", instance.id))
        })?;
        let summary = state.summary();
        let features: Vec<FeatureVec> = candidates
            .iter()
            .map(|&c| features_from_summary(&summary, c))
            .collect();
        steps.push(StepRecord {
            candidates,
            features,
            chosen,
            log_prob: 0.0,
        });
        state.apply(a)?;
    }
    Ok(Trajectory {
        feature_version: FEATURE_VERSION,
        instance_id: instance.id.clone(),
        sampling: SamplingConfig::UNTRUNCATED,
        steps,
        final_doc: state.current,
    })
}

/// Mean NLL and its gradient over `demos`.
fn nll_and_grad(params: &PolicyParams, demos: &[&Trajectory]) -> (f64, Vec<f64>) {
    let n = demos.len() as f64;
    let parts: Vec<(f64, Vec<f64>)> = demos
        .par_iter()
        .map(|t| {
            let mut g = vec![0.0; params.theta.len()];
            let lp: f64 = t
                .steps
                .iter()
                .map(|s| step_log_prob_grad(params, s, &SamplingConfig::UNTRUNCATED, 1.0, &mut g))
                .sum();
            (lp, g)
        })
        .collect();
    let mut grad = vec![0.0; params.theta.len()];
    let mut loss = 0.0;
    for (lp, g) in parts {
        loss -= lp;
        for (acc, x) in grad.iter_mut().zip(g) {
            *acc += x;
        }
    }
    // Gradient of the mean log-likelihood (ascent direction).
    grad.iter_mut().for_each(|x| *x /= n);
    (loss / n, grad)
}

fn check_finite(loss: f64, epoch: usize) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            stage: "sft",
            detail: format!("loss {loss} at epoch {epoch}; lower the learning rate"),
        });
    }
    Ok(())
}

/// Gradient ascent on the summed log-likelihood of gold scripts, starting
/// from zero weights.
pub fn sft_train(
    train: &[RewriteInstance],
    heldout: &[RewriteInstance],
    cfg: &SftConfig,
    env: &EnvConfig,
    rng: &mut Rng,
) -> Result<(PolicyParams, SftReport)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Domain("sft needs a non-empty dataset".into()));
    }
    let demos: Vec<Trajectory> = train
        .par_iter()
        .map(|inst| demonstration(inst, env))
        .collect::<Result<_>>()?;
    let all: Vec<&Trajectory> = demos.iter().collect();

    let mut params = PolicyParams::zeros();
    let mut loss_curve = Vec::with_capacity(cfg.epochs + 1);
    let full_batch = cfg.batch_size == 0 || cfg.batch_size >= demos.len();
    let mut order: Vec<usize> = (0..demos.len()).collect();
    for epoch in 0..cfg.epochs {
        if full_batch {
            let (loss, grad) = nll_and_grad(&params, &all);
            check_finite(loss, epoch)?;
            loss_curve.push(loss);
            step(&mut params, &grad, cfg.learning_rate);
        } else {
            let (loss, _) = nll_and_grad(&params, &all);
            check_finite(loss, epoch)?;
            loss_curve.push(loss);
            order.shuffle(rng);
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<&Trajectory> = chunk.iter().map(|&i| &demos[i]).collect();
                let (_, grad) = nll_and_grad(&params, &batch);
                step(&mut params, &grad, cfg.learning_rate);
            }
        }
        if !params.is_finite() {
            return Err(Error::NonFinite {
                stage: "sft",
                detail: format!("parameters diverged at epoch {epoch}; lower the learning rate"),
            });
        }
    }
    let (final_loss, _) = nll_and_grad(&params, &all);
    check_finite(final_loss, cfg.epochs)?;
    loss_curve.push(final_loss);

    let (exact, gold) = greedy_match_rates(&params, heldout, env);
    Ok((
        params,
        SftReport {
            loss_curve,
            heldout_exact_match: exact,
            heldout_gold_match: gold,
        },
    ))
}

fn step(params: &mut PolicyParams, grad: &[f64], lr: f64) {
    for (w, g) in params.theta.iter_mut().zip(grad) {
        *w += lr * g;
    }
}

/// `(exact script match, final document match)` rates under greedy decoding.
pub(crate) fn greedy_match_rates(
    params: &PolicyParams,
    instances: &[RewriteInstance],
    env: &EnvConfig,
) -> (f64, f64) {
    if instances.is_empty() {
        return (0.0, 0.0);
    }
    let hits: Vec<(bool, bool)> = instances
        .par_iter()
        .map(|inst| {
            let t = rollout(params, inst, env, &Decoding::Greedy, &mut crate::seed::stream(0, "greedy", 0));
            (t.actions() == gold_action_sequence(inst), t.final_doc == inst.gold)
        })
        .collect();
    let n = instances.len() as f64;
    (
        hits.iter().filter(|h| h.0).count() as f64 / n,
        hits.iter().filter(|h| h.1).count() as f64 / n,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_split, GeneratorConfig, TaskKind};
    use crate::seed;

    #[test]
    fn single_instance_is_memorized() {
        let cfg = GeneratorConfig::default();
        let inst = gen_split(TaskKind::Factuality, 3, "train", 1, &cfg).unwrap();
        let sft = SftConfig {
            epochs: 300,
            learning_rate: 1.0,
            batch_size: 0,
        };
        let (params, report) =
            sft_train(&inst, &inst, &sft, &EnvConfig::default(), &mut seed::stream(0, "sft", 0)).unwrap();
        assert_eq!(report.heldout_exact_match, 1.0);
        assert_eq!(report.heldout_gold_match, 1.0);
        let t = rollout(&params, &inst[0], &EnvConfig::default(), &Decoding::Greedy, &mut seed::stream(0, "x", 0));
        assert_eq!(t.final_doc, inst[0].gold);
    }

    #[test]
    fn empty_dataset_rejected() {
        let r = sft_train(&[], &[], &SftConfig::default(), &EnvConfig::default(), &mut seed::stream(0, "s", 0));
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn huge_learning_rate_aborts() {
        let cfg = GeneratorConfig::default();
        let mut data = Vec::new();
        for task in TaskKind::ALL {
            data.extend(gen_split(task, 3, "train", 20, &cfg).unwrap());
        }
        let sft = SftConfig {
            epochs: 50,
            learning_rate: f64::MAX,
            batch_size: 0,
        };
        let r = sft_train(&data, &data, &sft, &EnvConfig::default(), &mut seed::stream(0, "s", 0));
        assert!(matches!(r, Err(Error::NonFinite { .. })), "{r:?}");
    }
}
