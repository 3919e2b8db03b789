//! KL-regularized PPO against the aggregated decoupled reward.
//!
//! Each episode earns one terminal reward, the weighted sum of agreement,
//! coherence and conciseness, minus `beta` times the sampled log-ratio to the
//! frozen reference policy summed over the episode. Advantages are return minus a linear value
//! baseline, standardized over the batch. One clipped-surrogate step is taken
//! per batch.

use std::fmt::Write as _;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{RewriteInstance, TaskKind};
use crate::error::{Error, Result};
use crate::judge;
use crate::policy::{
    logits, rollout, softmax, step_log_prob_grad, Decoding, EnvConfig, PolicyParams,
    SamplingConfig, StepRecord, Trajectory,
};
use crate::reward::{self, RewardModel, RewardWeights, WeightTriple};
use crate::seed;

pub const NUM_VALUE_FEATURES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightsMode {
    /// One task-agnostic triple for every task.
    Static,
    TaskSpecific,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Batching {
    /// Each batch holds one task, cycling through the tasks.
    PerTask,
    /// Each episode draws an instance uniformly from the pooled tasks.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    pub beta: f64,
    pub clip_epsilon: f64,
    pub policy_step: f64,
    pub value_step: f64,
    pub warmup_steps: usize,
    pub max_steps: usize,
    pub batch_episodes: usize,
    pub batching: Batching,
    pub weights_mode: WeightsMode,
    pub static_weights: WeightTriple,
    pub weights: RewardWeights,
    /// Abort when the batch KL to the reference exceeds this.
    pub kl_ceiling: f64,
    pub sampling: SamplingConfig,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            beta: 0.05,
            clip_epsilon: 0.2,
            policy_step: 0.2,
            value_step: 0.1,
            warmup_steps: 50,
            max_steps: 600,
            batch_episodes: 32,
            batching: Batching::Mixed,
            weights_mode: WeightsMode::TaskSpecific,
            static_weights: RewardWeights::static_default().get(TaskKind::Factuality),
            weights: RewardWeights::task_specific_default(),
            kl_ceiling: 50.0,
            sampling: SamplingConfig::default(),
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("rl {m}")));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be non-negative");
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon <= 1.0) {
            return bad("clip_epsilon must lie in (0, 1]");
        }
        if !(self.policy_step >= 0.0 && self.policy_step.is_finite()) {
            return bad("policy_step must be non-negative");
        }
        if !(self.value_step >= 0.0 && self.value_step.is_finite()) {
            return bad("value_step must be non-negative");
        }
        if self.warmup_steps > self.max_steps {
            return bad("warmup_steps exceeds max_steps");
        }
        if self.batch_episodes == 0 {
            return bad("batch_episodes must be positive");
        }
        if !(self.kl_ceiling > 0.0) {
            return bad("kl_ceiling must be positive");
        }
        self.sampling.validate()?;
        self.static_weights.validate()?;
        self.weights.validate()
    }

    /// The per-task triples the current mode aggregates with.
    pub fn effective_weights(&self) -> RewardWeights {
        match self.weights_mode {
            WeightsMode::Static => RewardWeights::uniform(self.static_weights),
            WeightsMode::TaskSpecific => self.weights,
        }
    }
}

/// `[bias, task one-hot (3), target count / 8, initial coherence]`.
pub fn value_features(instance: &RewriteInstance) -> [f64; NUM_VALUE_FEATURES] {
    let mut x = [0.0; NUM_VALUE_FEATURES];
    x[0] = 1.0;
    x[1 + instance.task.index()] = 1.0;
    x[4] = instance.target_count() as f64 / 8.0;
    x[5] = f64::from(judge::coherence(&instance.initial));
    x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueParams {
    pub w: [f64; NUM_VALUE_FEATURES],
}

impl Default for ValueParams {
    fn default() -> Self {
        ValueParams {
            w: [0.0; NUM_VALUE_FEATURES],
        }
    }
}

impl ValueParams {
    pub fn predict(&self, x: &[f64; NUM_VALUE_FEATURES]) -> f64 {
        self.w.iter().zip(x).map(|(w, v)| w * v).sum()
    }

    /// Half mean squared error against `targets`.
    pub fn loss(&self, xs: &[[f64; NUM_VALUE_FEATURES]], targets: &[f64]) -> f64 {
        let n = xs.len().max(1) as f64;
        xs.iter()
            .zip(targets)
            .map(|(x, t)| 0.5 * (self.predict(x) - t).powi(2))
            .sum::<f64>()
            / n
    }

    fn gradient_step(&mut self, xs: &[[f64; NUM_VALUE_FEATURES]], targets: &[f64], step: f64) {
        let n = xs.len().max(1) as f64;
        let mut g = [0.0; NUM_VALUE_FEATURES];
        for (x, t) in xs.iter().zip(targets) {
            let r = self.predict(x) - t;
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi += r * xi / n;
            }
        }
        for (w, gi) in self.w.iter_mut().zip(g) {
            *w -= step * gi;
        }
    }
}

fn kl_div(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0)
}

/// Exact KL between the untruncated action distributions of two policies at
/// one recorded state.
pub fn state_kl(params: &PolicyParams, reference: &PolicyParams, step: &StepRecord, temperature: f64) -> f64 {
    let s = SamplingConfig {
        temperature,
        top_k: None,
    };
    let p = softmax(&logits(params, &step.candidates, &step.features), &s);
    let q = softmax(&logits(reference, &step.candidates, &step.features), &s);
    kl_div(&p, &q)
}

/// `log pi_theta(a|s) - log pi_ref(a|s)` for the recorded action, under the
/// untruncated distributions. Its expectation under `pi_theta` is the state KL.
pub fn state_log_ratio(params: &PolicyParams, reference: &PolicyParams, step: &StepRecord, temperature: f64) -> f64 {
    let s = SamplingConfig {
        temperature,
        top_k: None,
    };
    let p = softmax(&logits(params, &step.candidates, &step.features), &s);
    let q = softmax(&logits(reference, &step.candidates, &step.features), &s);
    (p[step.chosen] / q[step.chosen]).ln()
}

/// Mean over `states` of `KL(pi_theta || pi_ref)`, computed in closed form.
pub fn kl_estimate<'a>(
    params: &PolicyParams,
    reference: &PolicyParams,
    states: impl IntoIterator<Item = &'a StepRecord>,
    temperature: f64,
) -> Result<f64> {
    params.check_version(reference.feature_version)?;
    let (sum, n) = states
        .into_iter()
        .fold((0.0, 0usize), |(s, n), st| (s + state_kl(params, reference, st, temperature), n + 1));
    if n == 0 {
        return Err(Error::Domain("kl_estimate needs at least one state".into()));
    }
    Ok(sum / n as f64)
}

/// One scored rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub task: TaskKind,
    pub value_features: [f64; NUM_VALUE_FEATURES],
    pub trajectory: Trajectory,
    /// Raw `(agreement, coherence, conciseness)` from the reward source.
    pub rewards: [f64; 3],
    /// Sampled sequence KL: summed log-ratio of the chosen actions.
    pub kl: f64,
    /// Aggregated reward minus `beta * kl`.
    pub ret: f64,
}

/// Return minus baseline, standardized over the batch; all zeros when the
/// standard deviation is below 1e-8.
pub fn compute_advantages(value: &ValueParams, features: &[[f64; NUM_VALUE_FEATURES]], returns: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = features
        .iter()
        .zip(returns)
        .map(|(x, r)| r - value.predict(x))
        .collect();
    reward::standardize(&raw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub mean_rewards: [f64; 3],
    pub mean_return: f64,
    pub kl: f64,
    pub surrogate: f64,
    pub value_loss_before: f64,
    pub value_loss_after: f64,
    /// Fraction of steps whose clipped term was the active minimum.
    pub clip_fraction: f64,
}

/// One clipped-surrogate ascent step on `theta` and one least-squares step
/// on the value baseline. In warm-up `theta` is returned unchanged.
pub fn ppo_update(
    theta: &PolicyParams,
    reference: &PolicyParams,
    value: &ValueParams,
    batch: &[Episode],
    cfg: &RlConfig,
    warmup: bool,
) -> Result<(PolicyParams, ValueParams, UpdateStats)> {
    if batch.is_empty() {
        return Err(Error::Domain("empty rl batch".into()));
    }
    let xs: Vec<_> = batch.iter().map(|e| e.value_features).collect();
    let returns: Vec<f64> = batch.iter().map(|e| e.ret).collect();
    let adv = compute_advantages(value, &xs, &returns);

    let total_steps: usize = batch.iter().map(|e| e.trajectory.steps.len()).sum();
    let mut grad = vec![0.0; theta.theta.len()];
    let mut surrogate = 0.0;
    let mut clipped = 0usize;
    let (lo, hi) = (1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
    let norm = total_steps.max(1) as f64;
    for (ep, &a) in batch.iter().zip(&adv) {
        let sampling = ep.trajectory.sampling;
        for st in &ep.trajectory.steps {
            let z = logits(theta, &st.candidates, &st.features);
            let lp = softmax(&z, &sampling)[st.chosen].ln();
            let ratio = (lp - st.log_prob).exp();
            if !ratio.is_finite() {
                return Err(Error::NonFinite {
                    stage: "ppo update",
                    detail: format!(
                        "probability ratio {ratio} in {} (new log-prob {lp}, behavior {})",
                        ep.trajectory.instance_id, st.log_prob
                    ),
                });
            }
            let unclipped = ratio * a;
            let bounded = ratio.clamp(lo, hi) * a;
            surrogate += unclipped.min(bounded) / norm;
            if bounded < unclipped {
                clipped += 1;
            } else if a != 0.0 && !warmup {
                // d(ratio * A) = A * ratio * d log pi.
                step_log_prob_grad(theta, st, &sampling, a * ratio / norm, &mut grad);
            }
        }
    }

    let mut next = theta.clone();
    if !warmup {
        for (w, g) in next.theta.iter_mut().zip(&grad) {
            *w += cfg.policy_step * g;
        }
        if !next.is_finite() {
            return Err(Error::NonFinite {
                stage: "ppo update",
                detail: "policy parameters became non-finite; lower policy_step".into(),
            });
        }
    }

    let value_loss_before = value.loss(&xs, &returns);
    let mut next_value = value.clone();
    next_value.gradient_step(&xs, &returns, cfg.value_step);
    let value_loss_after = next_value.loss(&xs, &returns);

    let n = batch.len() as f64;
    let mut mean_rewards = [0.0; 3];
    for e in batch {
        for (m, r) in mean_rewards.iter_mut().zip(e.rewards) {
            *m += r / n;
        }
    }
    let kl = kl_estimate(
        theta,
        reference,
        batch.iter().flat_map(|e| &e.trajectory.steps),
        cfg.sampling.temperature,
    )
    .unwrap_or(0.0);
    Ok((
        next,
        next_value,
        UpdateStats {
            mean_rewards,
            mean_return: returns.iter().sum::<f64>() / n,
            kl,
            surrogate,
            value_loss_before,
            value_loss_after,
            clip_fraction: clipped as f64 / norm,
        },
    ))
}

/// Where the agreement and coherence rewards come from.
#[derive(Debug, Clone, Copy)]
pub enum RewardSource<'a> {
    /// Trained reward models. All three rewards are z-scored within each
    /// task's episodes of the batch before aggregation.
    Models {
        agreement: &'a RewardModel,
        coherence: &'a RewardModel,
    },
    /// The programmatic judges, used raw.
    Oracle,
}

/// Optional step-indexed override of the aggregation weights.
pub type WeightSchedule = dyn Fn(usize, TaskKind) -> WeightTriple + Sync;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub task: TaskKind,
    pub mean_r_agr: f64,
    pub mean_r_coh: f64,
    pub mean_r_con: f64,
    pub mean_aggregate: f64,
    pub kl: f64,
}

pub const LOG_HEADER: &str = "step,task,mean_r_agr,mean_r_coh,mean_r_con,mean_aggregate,kl";

/// Renders the training log as comma-separated text with a header row.
pub fn format_log(rows: &[LogRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(LOG_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.step, r.task, r.mean_r_agr, r.mean_r_coh, r.mean_r_con, r.mean_aggregate, r.kl
        );
    }
    out
}

fn sample_episodes(
    params: &PolicyParams,
    reference: &PolicyParams,
    instances: &[&RewriteInstance],
    env: &EnvConfig,
    cfg: &RlConfig,
    seed: u64,
    step: usize,
    source: RewardSource<'_>,
) -> Vec<Episode> {
    let decoding = Decoding::Sample(cfg.sampling);
    instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let mut rng = seed::stream(seed, "rl/episode", (step * cfg.batch_episodes + i) as u64);
            let t = rollout(params, inst, env, &decoding, &mut rng);
            let kl: f64 = t
                .steps
                .iter()
                .map(|s| state_log_ratio(params, reference, s, cfg.sampling.temperature))
                .sum();
            let con = reward::conciseness_reward(inst, &t.final_doc);
            let rewards = match source {
                RewardSource::Models { agreement, coherence } => [
                    agreement.score(inst, &t.final_doc),
                    coherence.score(inst, &t.final_doc),
                    con,
                ],
                RewardSource::Oracle => [
                    judge::agreement(inst, &t.final_doc),
                    f64::from(judge::coherence(&t.final_doc)),
                    con,
                ],
            };
            Episode {
                task: inst.task,
                value_features: value_features(inst),
                trajectory: t,
                rewards,
                kl,
                ret: 0.0,
            }
        })
        .collect()
}

/// Z-scores `values` separately within each task's episodes of the batch.
fn standardize_by_task(values: &[f64], batch: &[Episode]) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for task in TaskKind::ALL {
        let idx: Vec<usize> = (0..batch.len()).filter(|&i| batch[i].task == task).collect();
        let z = reward::standardize(&idx.iter().map(|&i| values[i]).collect::<Vec<_>>());
        for (&i, zi) in idx.iter().zip(z) {
            out[i] = zi;
        }
    }
    out
}

/// PPO fine-tuning from `sft`, which stays frozen as the reference. Each step
/// samples `batch_episodes` task-tagged instances with replacement and logs
/// one row per task present in the batch.
pub fn train_rl(
    sft: &PolicyParams,
    datasets: &[RewriteInstance],
    source: RewardSource<'_>,
    env: &EnvConfig,
    cfg: &RlConfig,
    seed: u64,
) -> Result<(PolicyParams, Vec<LogRow>)> {
    train_rl_with_schedule(sft, datasets, source, env, cfg, seed, None)
}

pub fn train_rl_with_schedule(
    sft: &PolicyParams,
    datasets: &[RewriteInstance],
    source: RewardSource<'_>,
    env: &EnvConfig,
    cfg: &RlConfig,
    seed: u64,
    schedule: Option<&WeightSchedule>,
) -> Result<(PolicyParams, Vec<LogRow>)> {
    cfg.validate()?;
    let by_task: Vec<Vec<&RewriteInstance>> = TaskKind::ALL
        .into_iter()
        .map(|t| datasets.iter().filter(|i| i.task == t).collect::<Vec<_>>())
        .filter(|v| !v.is_empty())
        .collect();
    if by_task.is_empty() {
        return Err(Error::Domain("rl needs a non-empty training set".into()));
    }
    let weights = cfg.effective_weights();
    let mut theta = sft.clone();
    let mut value = ValueParams::default();
    let mut log = Vec::with_capacity(cfg.max_steps * by_task.len());
    for step in 0..cfg.max_steps {
        let mut pick = seed::stream(seed, "rl/batch", step as u64);
        let instances: Vec<&RewriteInstance> = match cfg.batching {
            Batching::PerTask => {
                let pool = &by_task[step % by_task.len()];
                (0..cfg.batch_episodes)
                    .map(|_| pool[pick.gen_range(0..pool.len())])
                    .collect()
            }
            Batching::Mixed => (0..cfg.batch_episodes)
                .map(|_| &datasets[pick.gen_range(0..datasets.len())])
                .collect(),
        };
        let mut batch = sample_episodes(&theta, sft, &instances, env, cfg, seed, step, source);

        let column = |k: usize| -> Vec<f64> {
            let raw: Vec<f64> = batch.iter().map(|e| e.rewards[k]).collect();
            match source {
                RewardSource::Models { .. } => standardize_by_task(&raw, &batch),
                RewardSource::Oracle => raw,
            }
        };
        let (agr, coh, con) = (column(0), column(1), column(2));
        let mut aggregates = Vec::with_capacity(batch.len());
        for (i, e) in batch.iter_mut().enumerate() {
            let w = schedule.map_or_else(|| weights.get(e.task), |f| f(step, e.task));
            let agg = w.agreement * agr[i] + w.coherence * coh[i] + w.conciseness * con[i];
            aggregates.push(agg);
            e.ret = agg - cfg.beta * e.kl;
        }

        let warm = step < cfg.warmup_steps;
        let (next, next_value, stats) = ppo_update(&theta, sft, &value, &batch, cfg, warm)?;
        if stats.kl > cfg.kl_ceiling {
            return Err(Error::Diverged {
                step,
                kl: stats.kl,
                ceiling: cfg.kl_ceiling,
            });
        }
        for task in TaskKind::ALL {
            let idx: Vec<usize> = (0..batch.len()).filter(|&i| batch[i].task == task).collect();
            if idx.is_empty() {
                continue;
            }
            let n = idx.len() as f64;
            let mean = |f: &dyn Fn(usize) -> f64| idx.iter().map(|&i| f(i)).sum::<f64>() / n;
            let kl = kl_estimate(
                &theta,
                sft,
                idx.iter().flat_map(|&i| &batch[i].trajectory.steps),
                cfg.sampling.temperature,
            )
            .unwrap_or(0.0);
            log.push(LogRow {
                step,
                task,
                mean_r_agr: mean(&|i| batch[i].rewards[0]),
                mean_r_coh: mean(&|i| batch[i].rewards[1]),
                mean_r_con: mean(&|i| batch[i].rewards[2]),
                mean_aggregate: mean(&|i| aggregates[i]),
                kl,
            });
        }
        theta = next;
        value = next_value;
    }
    Ok((theta, log))
}

/// Mean exact KL to `reference` over the states `params` visits when rolled
/// out on `instances` with the given decoding.
pub fn policy_kl(
    params: &PolicyParams,
    reference: &PolicyParams,
    instances: &[RewriteInstance],
    env: &EnvConfig,
    decoding: &Decoding,
    seed: u64,
) -> Result<f64> {
    let temperature = match decoding {
        Decoding::Greedy => 1.0,
        Decoding::Sample(s) => s.temperature,
    };
    let trajectories: Vec<Trajectory> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| rollout(params, inst, env, decoding, &mut seed::stream(seed, "kl", i as u64)))
        .collect();
    kl_estimate(params, reference, trajectories.iter().flat_map(|t| &t.steps), temperature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{EditAction, NUM_FEATURES};

    fn two_action_step(log_prob: f64) -> StepRecord {
        let mut a = [0.0; NUM_FEATURES];
        a[0] = 1.0;
        a[1] = 1.0;
        let mut b = [0.0; NUM_FEATURES];
        b[0] = 1.0;
        b[5] = 1.0;
        StepRecord {
            candidates: vec![EditAction::ApplyCritique(0), EditAction::Stop],
            features: vec![a, b],
            chosen: 0,
            log_prob,
        }
    }

    #[test]
    fn two_action_kl_matches_hand_arithmetic() {
        let st = two_action_step(0.0);
        let mut p = PolicyParams::zeros();
        // theta[bias, ApplyCritique] = ln 3 makes (0.75, 0.25).
        p.theta[0] = 3f64.ln();
        let q = PolicyParams::zeros();
        let kl = kl_estimate(&p, &q, [&st], 1.0).unwrap();
        let direct: f64 = [0.75f64, 0.25].iter().zip([0.5f64, 0.5]).map(|(a, b)| a * (a / b).ln()).sum();
        assert!((kl - direct).abs() < 1e-12);
        assert!((kl - 0.1308).abs() < 1e-4);
        assert_eq!(kl_estimate(&p, &p, [&st], 1.0).unwrap(), 0.0);
        assert!(kl_estimate(&p, &q, [], 1.0).is_err());
    }

    #[test]
    fn log_ratio_averages_to_kl() {
        let mut p = PolicyParams::zeros();
        p.theta[0] = 3f64.ln();
        let q = PolicyParams::zeros();
        let mut st = two_action_step(0.0);
        let mut mean = 0.0;
        for (chosen, prob) in [(0, 0.75), (1, 0.25)] {
            st.chosen = chosen;
            mean += prob * state_log_ratio(&p, &q, &st, 1.0);
        }
        assert!((mean - state_kl(&p, &q, &st, 1.0)).abs() < 1e-12);
        st.chosen = 0;
        assert!((state_log_ratio(&p, &q, &st, 1.0) - 1.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn standardization_stays_within_tasks() {
        let theta = PolicyParams::zeros();
        let mut batch: Vec<Episode> = (0..4).map(|_| bandit_episode(0, 0.0, &theta)).collect();
        batch[2].task = TaskKind::Stylistic;
        batch[3].task = TaskKind::Stylistic;
        let z = standardize_by_task(&[0.0, 1.0, 10.0, 10.0], &batch);
        assert_eq!(z, vec![-1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn advantage_examples() {
        let x = [[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]; 2];
        let mut v = ValueParams::default();
        assert_eq!(compute_advantages(&v, &x, &[0.0, 1.0]), vec![-1.0, 1.0]);
        assert_eq!(compute_advantages(&v, &x, &[0.4, 0.4]), vec![0.0, 0.0]);
        v.w[0] = 0.4;
        assert_eq!(compute_advantages(&v, &x, &[0.4, 0.4]), vec![0.0, 0.0]);
    }

    fn bandit_episode(chosen: usize, reward: f64, params: &PolicyParams) -> Episode {
        let mut st = two_action_step(0.0);
        st.chosen = chosen;
        let s = SamplingConfig::UNTRUNCATED;
        st.log_prob = softmax(&logits(params, &st.candidates, &st.features), &s)[chosen].ln();
        Episode {
            task: TaskKind::Factuality,
            value_features: [1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            trajectory: Trajectory {
                feature_version: params.feature_version,
                instance_id: "bandit".into(),
                sampling: s,
                steps: vec![st],
                final_doc: Default::default(),
            },
            rewards: [reward, 0.0, 0.0],
            kl: 0.0,
            ret: reward,
        }
    }

    fn p0(params: &PolicyParams) -> f64 {
        let st = two_action_step(0.0);
        softmax(&logits(params, &st.candidates, &st.features), &SamplingConfig::UNTRUNCATED)[0]
    }

    #[test]
    fn bandit_update_prefers_rewarded_action() {
        let theta = PolicyParams::zeros();
        let batch = vec![bandit_episode(0, 1.0, &theta), bandit_episode(1, 0.0, &theta)];
        let cfg = RlConfig {
            beta: 0.0,
            ..RlConfig::default()
        };
        let (next, _, _) = ppo_update(&theta, &theta, &ValueParams::default(), &batch, &cfg, false).unwrap();
        assert!(p0(&next) > p0(&theta));
    }

    #[test]
    fn zero_advantage_and_warmup_leave_theta() {
        let theta = PolicyParams::zeros();
        let cfg = RlConfig::default();
        let flat = vec![bandit_episode(0, 0.5, &theta), bandit_episode(1, 0.5, &theta)];
        let (next, _, _) = ppo_update(&theta, &theta, &ValueParams::default(), &flat, &cfg, false).unwrap();
        assert_eq!(next, theta);

        let batch = vec![bandit_episode(0, 1.0, &theta), bandit_episode(1, 0.0, &theta)];
        let (next, value, stats) = ppo_update(&theta, &theta, &ValueParams::default(), &batch, &cfg, true).unwrap();
        assert_eq!(next, theta);
        assert!(stats.value_loss_after < stats.value_loss_before);
        assert_ne!(value, ValueParams::default());
    }

    #[test]
    fn clipped_steps_contribute_no_gradient() {
        let theta = PolicyParams::zeros();
        let cfg = RlConfig {
            policy_step: 1.0,
            ..RlConfig::default()
        };
        // Behavior log-prob far below the current one: ratio 2 > 1 + eps.
        let mut good = bandit_episode(0, 1.0, &theta);
        good.trajectory.steps[0].log_prob = 0.5f64.ln() - 2f64.ln();
        let mut bad = bandit_episode(1, 0.0, &theta);
        bad.trajectory.steps[0].log_prob = 0.5f64.ln() - 2f64.ln();
        // The low-return episode has A = -1 and ratio 2, so its unclipped
        // term is the minimum; the high-return one has A = +1 and is clipped.
        let (next, _, stats) = ppo_update(&theta, &theta, &ValueParams::default(), &[good, bad.clone()], &cfg, false).unwrap();
        assert_eq!(stats.clip_fraction, 0.5);
        let mut g = vec![0.0; theta.theta.len()];
        step_log_prob_grad(&theta, &bad.trajectory.steps[0], &SamplingConfig::UNTRUNCATED, -1.0, &mut g);
        for (w, gi) in next.theta.iter().zip(&g) {
            assert!((w - cfg.policy_step * gi).abs() < 1e-15);
        }
        // Surrogate bound: the clipped episode contributes exactly (1 + eps) * A.
        let expected = ((1.0 + cfg.clip_epsilon) - 2.0) / 2.0;
        assert!((stats.surrogate - expected).abs() < 1e-12);
    }

    #[test]
    fn static_and_task_specific_differ_only_in_triples() {
        let mut cfg = RlConfig {
            weights_mode: WeightsMode::Static,
            ..RlConfig::default()
        };
        for t in TaskKind::ALL {
            assert_eq!(cfg.effective_weights().get(t), cfg.static_weights);
        }
        cfg.weights_mode = WeightsMode::TaskSpecific;
        assert_eq!(cfg.effective_weights(), RewardWeights::task_specific_default());
    }

    #[test]
    fn log_has_header() {
        let rows = vec![LogRow {
            step: 0,
            task: TaskKind::Stylistic,
            mean_r_agr: 0.5,
            mean_r_coh: 1.0,
            mean_r_con: -0.25,
            mean_aggregate: 0.4,
            kl: 0.0,
        }];
        let text = format_log(&rows);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(LOG_HEADER));
        assert_eq!(lines.next(), Some("0,stylistic,0.500000,1.000000,-0.250000,0.400000,0.000000"));
    }
}
