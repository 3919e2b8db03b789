//! Stage runners and artifact plumbing.
//!
//! Every stage reads its upstream artifacts from the run directory, writes
//! its own, and records a manifest with the SHA-256 of each input and output
//! plus a hash of the experiment config. Manifests carry no timestamps so
//! reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::corpus::{self, Document, RewriteInstance, TaskKind};
use crate::error::{Error, Result};
use crate::eval::{self, MetricsReport, SxsReport};
use crate::policy::{self, Decoding, PolicyParams};
use crate::reward::{self, Objective, PairSets, RewardModel, RmReport};
use crate::rl::{self, RewardSource, WeightsMode};
use crate::seed;

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hash of the config with the output directory blanked, so moving a run
/// does not change it.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.out_dir = PathBuf::new();
    let json = serde_json::to_vec(&c).map_err(|e| Error::Serde(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&json)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub seed: u64,
    pub config_hash: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

/// What a stage produced, plus non-fatal diagnostics.
#[derive(Debug, Clone, Default)]
pub struct StageOutcome {
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

pub mod paths {
    use crate::corpus::TaskKind;

    pub fn dataset(task: TaskKind, split: &str) -> String {
        format!("data/{}.{split}.jsonl", task.name())
    }
    pub const SFT_POLICY: &str = "sft/policy.json";
    pub const SFT_REPORT: &str = "sft/report.json";
    pub const RM_PAIRS: &str = "rm/pairs.json";
    pub const RM_AGREEMENT: &str = "rm/agreement.json";
    pub const RM_COHERENCE: &str = "rm/coherence.json";
    pub const RM_REPORT: &str = "rm/report.json";
    pub const RL_STATIC: &str = "rl/static/policy.json";
    pub const RL_STATIC_LOG: &str = "rl/static/train_log.csv";
    pub const RL_TASK: &str = "rl/task_specific/policy.json";
    pub const RL_TASK_LOG: &str = "rl/task_specific/train_log.csv";
    pub const EVAL_TSV: &str = "eval/metrics.tsv";
    pub const EVAL_JSON: &str = "eval/metrics.json";
    pub const EVAL_AGGREGATE: &str = "eval/aggregate.tsv";
    pub const SXS_TSV: &str = "sxs/sxs.tsv";
    pub const SXS_JSON: &str = "sxs/sxs.json";

    pub fn manifest(stage: &str) -> String {
        let dir = match stage {
            "gen-data" => "data",
            "train-rm" => "rm",
            other => other,
        };
        format!("{dir}/manifest.json")
    }
}

/// The policies compared by `eval` and `sxs`, with their checkpoint paths.
pub const POLICIES: [(&str, &str); 3] = [
    ("sft", paths::SFT_POLICY),
    ("rl-static", paths::RL_STATIC),
    ("rl-task-specific", paths::RL_TASK),
];

struct Stage<'a> {
    name: &'static str,
    cfg: &'a ExperimentConfig,
    inputs: Vec<String>,
    outputs: Vec<String>,
    warnings: Vec<String>,
}

impl<'a> Stage<'a> {
    fn new(name: &'static str, cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Stage {
            name,
            cfg,
            inputs: Vec::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.cfg.out_dir.join(rel)
    }

    /// Registers an upstream artifact, failing with the producing stage's
    /// name if it is absent, and compares config hashes with that stage.
    fn require(&mut self, rel: &str, producer: &'static str) -> Result<PathBuf> {
        let p = self.path(rel);
        if !p.is_file() {
            return Err(Error::MissingArtifact {
                stage: producer,
                path: p,
            });
        }
        let manifest = self.path(&paths::manifest(producer));
        if !self.inputs.iter().any(|i| *i == rel) {
            self.inputs.push(rel.to_owned());
        }
        if let Ok(m) = read_json::<Manifest>(&manifest) {
            let mine = config_hash(self.cfg)?;
            let msg = format!("config differs from the one used by stage `{producer}`");
            if m.config_hash != mine && !self.warnings.contains(&msg) {
                self.warnings.push(msg);
            }
        }
        Ok(p)
    }

    fn write_json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<()> {
        write_json(&self.path(rel), value)?;
        self.outputs.push(rel.to_owned());
        Ok(())
    }

    fn write_text(&mut self, rel: &str, text: &str) -> Result<()> {
        write_text(&self.path(rel), text)?;
        self.outputs.push(rel.to_owned());
        Ok(())
    }

    fn finish(self) -> Result<StageOutcome> {
        let hash = |rels: &[String]| -> Result<Vec<FileHash>> {
            rels.iter()
                .map(|r| {
                    Ok(FileHash {
                        path: r.clone(),
                        sha256: sha256_file(&self.path(r))?,
                    })
                })
                .collect()
        };
        let manifest = Manifest {
            stage: self.name.to_owned(),
            seed: self.cfg.seed,
            config_hash: config_hash(self.cfg)?,
            inputs: hash(&self.inputs)?,
            outputs: hash(&self.outputs)?,
        };
        let mp = paths::manifest(self.name);
        write_json(&self.path(&mp), &manifest)?;
        let mut outputs: Vec<PathBuf> = self.outputs.iter().map(|r| self.path(r)).collect();
        outputs.push(self.path(&mp));
        Ok(StageOutcome {
            outputs,
            warnings: self.warnings,
        })
    }
}

/// Writes train and eval splits for every task.
pub fn gen_data(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    let mut st = Stage::new("gen-data", cfg)?;
    for task in TaskKind::ALL {
        for (split, n) in [("train", cfg.generator.train_per_task), ("eval", cfg.generator.eval_per_task)] {
            let data = corpus::gen_split(task, cfg.seed, split, n, &cfg.generator)?;
            let rel = paths::dataset(task, split);
            corpus::save_dataset(&data, &st.path(&rel))?;
            st.outputs.push(rel);
        }
    }
    st.finish()
}

fn load_split(st: &mut Stage<'_>, split: &str) -> Result<Vec<RewriteInstance>> {
    let mut all = Vec::new();
    for task in TaskKind::ALL {
        let p = st.require(&paths::dataset(task, split), "gen-data")?;
        all.extend(corpus::load_dataset(&p)?);
    }
    Ok(all)
}

/// Behavior cloning on the pooled training splits.
pub fn sft(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    let mut st = Stage::new("sft", cfg)?;
    let train = load_split(&mut st, "train")?;
    let heldout = load_split(&mut st, "eval")?;
    let mut rng = seed::stream(cfg.seed, "sft", 0);
    let (params, report) = policy::sft_train(&train, &heldout, &cfg.sft, &cfg.env, &mut rng)?;
    st.write_json(paths::SFT_POLICY, &params)?;
    st.write_json(paths::SFT_REPORT, &report)?;
    st.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmPairs {
    pub train: PairSets,
    pub heldout: PairSets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmStageReport {
    pub agreement: RmReport,
    pub coherence: RmReport,
}

/// Builds preference pairs from SFT samples and fits both reward models.
pub fn train_rm(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    let mut st = Stage::new("train-rm", cfg)?;
    let sft_path = st.require(paths::SFT_POLICY, "sft")?;
    let sft = PolicyParams::load(&sft_path)?;
    let train = load_split(&mut st, "train")?;
    let heldout = load_split(&mut st, "eval")?;
    let decoding = Decoding::Sample(cfg.rm.sampling);
    let n = cfg.rm.samples_per_prompt;
    let pairs = RmPairs {
        train: reward::build_preference_pairs(&sft, &train, n, &cfg.env, &decoding, seed::derive(cfg.seed, "rm/pairs", 0))?,
        heldout: reward::build_preference_pairs(&sft, &heldout, n, &cfg.env, &decoding, seed::derive(cfg.seed, "rm/pairs", 1))?,
    };
    let fit = |obj: Objective, idx: u64| {
        let mut rng = seed::stream(cfg.seed, "rm/train", idx);
        reward::train_reward_model(pairs.train.get(obj), pairs.heldout.get(obj), obj, &cfg.rm, &mut rng)
    };
    let (agr, agr_report) = fit(Objective::Agreement, 0)?;
    let (coh, coh_report) = fit(Objective::Coherence, 1)?;
    st.write_json(paths::RM_PAIRS, &pairs)?;
    st.write_json(paths::RM_AGREEMENT, &agr)?;
    st.write_json(paths::RM_COHERENCE, &coh)?;
    st.write_json(
        paths::RM_REPORT,
        &RmStageReport {
            agreement: agr_report,
            coherence: coh_report,
        },
    )?;
    st.finish()
}

/// PPO from the SFT checkpoint under both weighting modes. With `oracle`
/// the judges replace the reward models.
pub fn rl(cfg: &ExperimentConfig, oracle: bool) -> Result<StageOutcome> {
    let mut st = Stage::new("rl", cfg)?;
    let sft_path = st.require(paths::SFT_POLICY, "sft")?;
    let sft = PolicyParams::load(&sft_path)?;
    let models = if oracle {
        None
    } else {
        let a = st.require(paths::RM_AGREEMENT, "train-rm")?;
        let c = st.require(paths::RM_COHERENCE, "train-rm")?;
        Some((RewardModel::load(&a)?, RewardModel::load(&c)?))
    };
    let source = match &models {
        Some((a, c)) => RewardSource::Models {
            agreement: a,
            coherence: c,
        },
        None => RewardSource::Oracle,
    };
    let train = load_split(&mut st, "train")?;
    let rl_seed = seed::derive(cfg.seed, "rl", 0);
    for (mode, policy_rel, log_rel) in [
        (WeightsMode::Static, paths::RL_STATIC, paths::RL_STATIC_LOG),
        (WeightsMode::TaskSpecific, paths::RL_TASK, paths::RL_TASK_LOG),
    ] {
        let mut rl_cfg = cfg.rl.clone();
        rl_cfg.weights_mode = mode;
        let (params, log) = rl::train_rl(&sft, &train, source, &cfg.env, &rl_cfg, rl_seed)?;
        st.write_json(policy_rel, &params)?;
        st.write_text(log_rel, &rl::format_log(&log))?;
    }
    st.finish()
}

fn load_policies(st: &mut Stage<'_>) -> Result<Vec<(&'static str, PolicyParams)>> {
    POLICIES
        .iter()
        .map(|&(name, rel)| {
            let producer = if name == "sft" { "sft" } else { "rl" };
            let p = st.require(rel, producer)?;
            Ok((name, PolicyParams::load(&p)?))
        })
        .collect()
}

fn eval_finals(cfg: &ExperimentConfig, params: &PolicyParams, eval_set: &[RewriteInstance]) -> Vec<Document> {
    let seed = seed::derive(cfg.seed, "eval", 0);
    eval::rollout_finals(params, eval_set, &cfg.env, &cfg.eval.decoding, seed)
}

/// Evaluation of the SFT and both RL policies on the eval splits.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    let mut st = Stage::new("eval", cfg)?;
    let policies = load_policies(&mut st)?;
    let eval_set = load_split(&mut st, "eval")?;
    let ks = cfg.eval.ks.clone().unwrap_or_else(|| eval::default_ks(&eval_set));
    let mut report = MetricsReport {
        ks: ks.clone(),
        rows: Vec::new(),
    };
    let mut aggregate = String::from("Policy\tTask\tMeanAggregatedReward\n");
    for (name, params) in &policies {
        let finals = eval_finals(cfg, params, &eval_set);
        report = report.merge(eval::evaluate_finals(name, &eval_set, &finals, &ks, &[]));
        for (task, r) in eval::mean_aggregated_reward(&eval_set, &finals, &cfg.rl.weights) {
            aggregate.push_str(&format!("{name}\t{task}\t{r:.6}\n"));
        }
    }
    st.write_text(paths::EVAL_TSV, &report.to_tsv())?;
    st.write_json(paths::EVAL_JSON, &report)?;
    st.write_text(paths::EVAL_AGGREGATE, &aggregate)?;
    st.finish()
}

/// Side-by-side comparison of every ordered pair of evaluated policies.
pub fn sxs(cfg: &ExperimentConfig) -> Result<StageOutcome> {
    let mut st = Stage::new("sxs", cfg)?;
    let policies = load_policies(&mut st)?;
    let eval_set = load_split(&mut st, "eval")?;
    let finals: Vec<_> = policies
        .iter()
        .map(|(_, p)| eval_finals(cfg, p, &eval_set))
        .collect();
    let mut reports: Vec<SxsReport> = Vec::new();
    for i in 0..policies.len() {
        for j in 0..policies.len() {
            if i != j {
                reports.push(eval::sxs_finals((policies[i].0, policies[j].0), &eval_set, &finals[i], &finals[j]));
            }
        }
    }
    let mut tsv = String::new();
    for (k, r) in reports.iter().enumerate() {
        let t = r.to_tsv();
        tsv.push_str(if k == 0 { &t } else { t.split_once('\n').map_or("", |x| x.1) });
    }
    st.write_text(paths::SXS_TSV, &tsv)?;
    st.write_json(paths::SXS_JSON, &reports)?;
    st.finish()
}

/// Every stage in order.
pub fn run_all(cfg: &ExperimentConfig, oracle: bool) -> Result<Vec<String>> {
    let mut warnings = Vec::new();
    warnings.extend(gen_data(cfg)?.warnings);
    warnings.extend(sft(cfg)?.warnings);
    if !oracle {
        warnings.extend(train_rm(cfg)?.warnings);
    }
    warnings.extend(rl(cfg, oracle)?.warnings);
    warnings.extend(evaluate(cfg)?.warnings);
    warnings.extend(sxs(cfg)?.warnings);
    Ok(warnings)
}

/// Checks that every input recorded in a stage manifest still hashes to the
/// recorded value. Returns the mismatching paths.
pub fn verify_manifest(run_dir: &Path, stage: &str) -> Result<Vec<String>> {
    let m: Manifest = read_json(&run_dir.join(paths::manifest(stage)))?;
    let mut bad = Vec::new();
    for f in m.inputs.iter().chain(&m.outputs) {
        match sha256_file(&run_dir.join(&f.path)) {
            Ok(h) if h == f.sha256 => {}
            _ => bad.push(f.path.clone()),
        }
    }
    Ok(bad)
}
