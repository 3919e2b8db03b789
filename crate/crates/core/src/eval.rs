//! Metric rollups over evaluation sets and side-by-side comparison reports.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, RewriteInstance, TaskKind};
use crate::judge::{self, SxsChoice};
use crate::policy::{rollout, Decoding, EnvConfig, PolicyParams};
use crate::reward::{self, RewardWeights};
use crate::seed;
use crate::textops;

/// Scores how strongly `premise` entails `hypothesis`, in [0, 1]. No scorer
/// ships with the crate; registered scorers add NLI columns to reports.
pub trait EntailmentScorer: Sync {
    fn name(&self) -> &str;
    fn score(&self, premise: &[String], hypothesis: &[String]) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub policy: String,
    pub task: TaskKind,
    pub count: usize,
    pub length: f64,
    pub agreement: f64,
    pub coherence: f64,
    pub edit_ratio: f64,
    /// One entry per configured K; `None` outside the factuality task.
    pub f1_at_k: Vec<Option<f64>>,
    /// `(column, mean)` for each registered entailment scorer, forward then
    /// reverse direction.
    pub entailment: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ks: Vec<usize>,
    pub rows: Vec<TaskMetrics>,
}

fn median(sorted: &[usize]) -> usize {
    sorted[(sorted.len() - 1) / 2]
}

/// Median and maximum gold fact counts over the factuality instances of
/// `eval_set` (lower median for even counts), deduplicated.
pub fn default_ks(eval_set: &[RewriteInstance]) -> Vec<usize> {
    let mut counts: Vec<usize> = eval_set
        .iter()
        .filter(|i| i.task == TaskKind::Factuality)
        .map(|i| i.gold.facts.len())
        .collect();
    if counts.is_empty() {
        return vec![1];
    }
    counts.sort_unstable();
    let mut ks = vec![median(&counts).max(1), *counts.last().unwrap()];
    ks.dedup();
    ks
}

/// Final documents in instance order. Instance `i` samples from stream
/// `("eval", i)` of `seed`, so policies compared under one seed share their
/// random draws.
pub fn rollout_finals(
    params: &PolicyParams,
    instances: &[RewriteInstance],
    env: &EnvConfig,
    decoding: &Decoding,
    seed: u64,
) -> Vec<Document> {
    instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| rollout(params, inst, env, decoding, &mut seed::stream(seed, "eval", i as u64)).final_doc)
        .collect()
}

pub fn greedy_finals(params: &PolicyParams, instances: &[RewriteInstance], env: &EnvConfig) -> Vec<Document> {
    rollout_finals(params, instances, env, &Decoding::Greedy, 0)
}

/// Per-task means of the judge metrics over `finals`, which must align with
/// `instances`.
pub fn evaluate_finals(
    policy: &str,
    instances: &[RewriteInstance],
    finals: &[Document],
    ks: &[usize],
    scorers: &[&dyn EntailmentScorer],
) -> MetricsReport {
    assert_eq!(instances.len(), finals.len(), "one final per instance");
    let mut rows = Vec::new();
    for task in TaskKind::ALL {
        let pairs: Vec<(&RewriteInstance, &Document)> = instances
            .iter()
            .zip(finals)
            .filter(|(i, _)| i.task == task)
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let n = pairs.len() as f64;
        let mean = |f: &dyn Fn(&RewriteInstance, &Document) -> f64| pairs.iter().map(|(i, d)| f(i, d)).sum::<f64>() / n;
        let f1_at_k = ks
            .iter()
            .map(|&k| {
                (task == TaskKind::Factuality).then(|| {
                    mean(&|i, d| {
                        let (s, t) = judge::fact_support(&i.gold, d);
                        judge::f1_at_k(s, t, k).unwrap_or(0.0)
                    })
                })
            })
            .collect();
        let mut entailment = Vec::new();
        for s in scorers {
            entailment.push((s.name().to_owned(), mean(&|i, d| s.score(&i.initial.tokens, &d.tokens))));
            entailment.push((format!("Reverse {}", s.name()), mean(&|i, d| s.score(&d.tokens, &i.initial.tokens))));
        }
        rows.push(TaskMetrics {
            policy: policy.to_owned(),
            task,
            count: pairs.len(),
            length: mean(&|_, d| d.tokens.len() as f64),
            agreement: mean(&|i, d| judge::agreement(i, d)),
            coherence: mean(&|_, d| f64::from(judge::coherence(d))),
            edit_ratio: mean(&|i, d| textops::edit_ratio(&i.initial.tokens, &d.tokens).unwrap_or(0.0)),
            f1_at_k,
            entailment,
        });
    }
    MetricsReport { ks: ks.to_vec(), rows }
}

/// Greedy rollout of `params` on every instance, scored by the judges.
pub fn evaluate_policy(
    policy: &str,
    params: &PolicyParams,
    eval_set: &[RewriteInstance],
    env: &EnvConfig,
    ks: &[usize],
    scorers: &[&dyn EntailmentScorer],
) -> MetricsReport {
    let finals = greedy_finals(params, eval_set, env);
    evaluate_finals(policy, eval_set, &finals, ks, scorers)
}

/// Per-task mean of the judge-scored aggregated reward (agreement,
/// coherence, negative edit ratio) under `weights`.
pub fn mean_aggregated_reward(
    instances: &[RewriteInstance],
    finals: &[Document],
    weights: &RewardWeights,
) -> Vec<(TaskKind, f64)> {
    TaskKind::ALL
        .into_iter()
        .filter_map(|task| {
            let scores: Vec<f64> = instances
                .iter()
                .zip(finals)
                .filter(|(i, _)| i.task == task)
                .map(|(i, d)| {
                    reward::aggregate_reward(
                        weights,
                        task,
                        judge::agreement(i, d),
                        f64::from(judge::coherence(d)),
                        reward::conciseness_reward(i, d),
                    )
                })
                .collect();
            (!scores.is_empty()).then(|| (task, scores.iter().sum::<f64>() / scores.len() as f64))
        })
        .collect()
}

impl MetricsReport {
    pub fn merge(mut self, other: MetricsReport) -> MetricsReport {
        self.rows.extend(other.rows);
        self
    }

    /// Tab-separated table with a fixed column order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("Policy\tTask\tCount\tLength\tAgreement\tCoherence\tEditRatio");
        for k in &self.ks {
            let _ = write!(out, "\tF1@{k}");
        }
        if let Some(first) = self.rows.first() {
            for (name, _) in &first.entailment {
                let _ = write!(out, "\t{name}");
            }
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{}\t{}\t{}\t{:.2}\t{:.4}\t{:.4}\t{:.4}",
                r.policy, r.task, r.count, r.length, r.agreement, r.coherence, r.edit_ratio
            );
            for f in &r.f1_at_k {
                match f {
                    Some(v) => {
                        let _ = write!(out, "\t{v:.4}");
                    }
                    None => out.push_str("\t-"),
                }
            }
            for (_, v) in &r.entailment {
                let _ = write!(out, "\t{v:.4}");
            }
            out.push('\n');
        }
        out
    }
}

/// Side-by-side tallies. Scores are means of the judge's per-side score
/// tuples, not winner confidences.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SxsStats {
    pub count: usize,
    pub mean_score_a: f64,
    pub mean_score_b: f64,
    pub a: usize,
    pub b: usize,
    pub same: usize,
}

impl SxsStats {
    fn transposed(&self) -> SxsStats {
        SxsStats {
            count: self.count,
            mean_score_a: self.mean_score_b,
            mean_score_b: self.mean_score_a,
            a: self.b,
            b: self.a,
            same: self.same,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SxsReport {
    pub policy_a: String,
    pub policy_b: String,
    pub per_task: Vec<(TaskKind, SxsStats)>,
    pub overall: SxsStats,
}

impl SxsReport {
    pub fn transposed(&self) -> SxsReport {
        SxsReport {
            policy_a: self.policy_b.clone(),
            policy_b: self.policy_a.clone(),
            per_task: self.per_task.iter().map(|(t, s)| (*t, s.transposed())).collect(),
            overall: self.overall.transposed(),
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("PolicyA\tPolicyB\tTask\tCount\tScoreA\tScoreB\tA\tB\tSame\n");
        let rows = self
            .per_task
            .iter()
            .map(|(t, s)| (t.name(), s))
            .chain(std::iter::once(("all", &self.overall)));
        for (task, s) in rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{}\t{}\t{}",
                self.policy_a, self.policy_b, task, s.count, s.mean_score_a, s.mean_score_b, s.a, s.b, s.same
            );
        }
        out
    }
}

fn tally(verdicts: &[&judge::SxsVerdict]) -> SxsStats {
    let n = verdicts.len();
    // Scores are exact hundredths; summing integers keeps transposition exact.
    let sum = |f: fn(&judge::SxsVerdict) -> f64| verdicts.iter().map(|v| (f(v) * 100.0).round() as i64).sum::<i64>();
    let mean = |s: i64| if n == 0 { 0.0 } else { s as f64 / 100.0 / n as f64 };
    SxsStats {
        count: n,
        mean_score_a: mean(sum(|v| v.score_a)),
        mean_score_b: mean(sum(|v| v.score_b)),
        a: verdicts.iter().filter(|v| v.choice == SxsChoice::A).count(),
        b: verdicts.iter().filter(|v| v.choice == SxsChoice::B).count(),
        same: verdicts.iter().filter(|v| v.choice == SxsChoice::Same).count(),
    }
}

/// Side-by-side comparison of two sets of finals aligned with `instances`.
pub fn sxs_finals(
    names: (&str, &str),
    instances: &[RewriteInstance],
    finals_a: &[Document],
    finals_b: &[Document],
) -> SxsReport {
    let verdicts: Vec<judge::SxsVerdict> = instances
        .iter()
        .zip(finals_a.iter().zip(finals_b))
        .map(|(i, (a, b))| judge::sxs_compare(i, a, b))
        .collect();
    let per_task = TaskKind::ALL
        .into_iter()
        .filter_map(|task| {
            let sel: Vec<&judge::SxsVerdict> = instances
                .iter()
                .zip(&verdicts)
                .filter(|(i, _)| i.task == task)
                .map(|(_, v)| v)
                .collect();
            (!sel.is_empty()).then(|| (task, tally(&sel)))
        })
        .collect();
    SxsReport {
        policy_a: names.0.to_owned(),
        policy_b: names.1.to_owned(),
        per_task,
        overall: tally(&verdicts.iter().collect::<Vec<_>>()),
    }
}

/// Greedy finals of both policies compared instance by instance.
pub fn run_sxs(
    a: (&str, &PolicyParams),
    b: (&str, &PolicyParams),
    eval_set: &[RewriteInstance],
    env: &EnvConfig,
) -> SxsReport {
    let fa = greedy_finals(a.1, eval_set, env);
    let fb = greedy_finals(b.1, eval_set, env);
    sxs_finals((a.0, b.0), eval_set, &fa, &fb)
}
