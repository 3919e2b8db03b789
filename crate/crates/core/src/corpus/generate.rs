//! Seeded procedural generators for the three task families.
//!
//! Each generator is a pure function of `(seed, config)`. Gold revisions are
//! produced by applying every critique or requirement to the initial document,
//! so all judge outcomes on gold are known exactly.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::{
    placeholder, CritiqueSpan, Derived, Document, Fact, Requirement, RequirementKind,
    RequirementTag, RewriteInstance, TaskKind, Term, Tone,
};
use crate::error::{Error, Result};
use crate::seed;

/// Inclusive integer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub min: usize,
    pub max: usize,
}

impl Span {
    pub const fn new(min: usize, max: usize) -> Self {
        Span { min, max }
    }

    pub const fn exactly(n: usize) -> Self {
        Span { min: n, max: n }
    }

    fn within(&self, lo: usize, hi: usize) -> bool {
        self.min <= self.max && self.min >= lo && self.max <= hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactualityConfig {
    pub facts: Span,
    pub corrupted: Span,
    pub derived: Span,
}

impl Default for FactualityConfig {
    fn default() -> Self {
        FactualityConfig {
            facts: Span::new(3, 8),
            corrupted: Span::new(1, 3),
            derived: Span::new(0, 2),
        }
    }
}

impl FactualityConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.facts.within(3, 12) {
            return Err(Error::Config(format!(
                "fact count {:?} must lie within [3, 12]",
                self.facts
            )));
        }
        if self.corrupted.min == 0 || self.corrupted.min > self.corrupted.max {
            return Err(Error::Config(format!(
                "corrupted span count {:?} must be a non-empty range starting at 1 or more",
                self.corrupted
            )));
        }
        if self.corrupted.max > self.facts.max || self.corrupted.min > self.facts.min {
            return Err(Error::Config(format!(
                "corrupted span count {:?} exceeds fact count {:?}",
                self.corrupted, self.facts
            )));
        }
        if !self.derived.within(0, 3) {
            return Err(Error::Config(format!(
                "derived record count {:?} must lie within [0, 3]",
                self.derived
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StylisticConfig {
    pub requirements: Span,
    /// Fixed requirement kinds, in id order. Drawn at random when absent.
    pub kinds: Option<Vec<RequirementTag>>,
}

impl Default for StylisticConfig {
    fn default() -> Self {
        StylisticConfig {
            requirements: Span::new(1, 3),
            kinds: None,
        }
    }
}

const STYLISTIC_POOL: [RequirementTag; 4] = [
    RequirementTag::ReorderDefinitionFirst,
    RequirementTag::Shorten,
    RequirementTag::Uppercase,
    RequirementTag::ChangeTone,
];

impl StylisticConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.requirements.within(1, 3) {
            return Err(Error::Config(format!(
                "stylistic requirement count {:?} must lie within [1, 3]",
                self.requirements
            )));
        }
        if let Some(kinds) = &self.kinds {
            check_kinds(kinds, &STYLISTIC_POOL, 1, 3, "stylistic")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConversationalConfig {
    pub requirements: Span,
    pub kinds: Option<Vec<RequirementTag>>,
}

impl Default for ConversationalConfig {
    fn default() -> Self {
        ConversationalConfig {
            requirements: Span::new(2, 5),
            kinds: None,
        }
    }
}

const CONVERSATIONAL_POOL: [RequirementTag; 3] = [
    RequirementTag::ReplacePlaceholder,
    RequirementTag::AddSentence,
    RequirementTag::ChangeTone,
];

impl ConversationalConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.requirements.within(2, 5) {
            return Err(Error::Config(format!(
                "conversational requirement count {:?} must lie within [2, 5]",
                self.requirements
            )));
        }
        if let Some(kinds) = &self.kinds {
            check_kinds(kinds, &CONVERSATIONAL_POOL, 2, 5, "conversational")?;
            let placeholders = count(kinds, RequirementTag::ReplacePlaceholder);
            if placeholders == 0 || placeholders > PLACEHOLDER_SENTENCES.len() {
                return Err(Error::Config(format!(
                    "conversational requirements need 1..={} placeholder replacements",
                    PLACEHOLDER_SENTENCES.len()
                )));
            }
            if count(kinds, RequirementTag::AddSentence) + count(kinds, RequirementTag::ChangeTone)
                == 0
            {
                return Err(Error::Config(
                    "conversational requirements need an added sentence or a tone change".into(),
                ));
            }
        }
        Ok(())
    }
}

fn count(kinds: &[RequirementTag], tag: RequirementTag) -> usize {
    kinds.iter().filter(|&&k| k == tag).count()
}

fn check_kinds(
    kinds: &[RequirementTag],
    pool: &[RequirementTag],
    lo: usize,
    hi: usize,
    task: &str,
) -> Result<()> {
    if kinds.len() < lo || kinds.len() > hi {
        return Err(Error::Config(format!(
            "{task} instances take {lo}..={hi} requirements, got {}",
            kinds.len()
        )));
    }
    if kinds.contains(&RequirementTag::Shorten) && kinds.contains(&RequirementTag::AddSentence) {
        return Err(Error::Config(
            "Shorten and AddSentence are incompatible requirements".into(),
        ));
    }
    for k in kinds {
        if !pool.contains(k) {
            return Err(Error::Config(format!("{k:?} is not a {task} requirement")));
        }
        if *k != RequirementTag::ReplacePlaceholder && count(kinds, *k) > 1 {
            return Err(Error::Config(format!("{k:?} requested more than once")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub factuality: FactualityConfig,
    pub stylistic: StylisticConfig,
    pub conversational: ConversationalConfig,
    pub train_per_task: usize,
    pub eval_per_task: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            factuality: FactualityConfig::default(),
            stylistic: StylisticConfig::default(),
            conversational: ConversationalConfig::default(),
            train_per_task: 2000,
            eval_per_task: 250,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        self.factuality.validate()?;
        self.stylistic.validate()?;
        self.conversational.validate()?;
        if self.train_per_task == 0 || self.eval_per_task == 0 {
            return Err(Error::Config("split sizes must be positive".into()));
        }
        Ok(())
    }
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

fn instance_id(task: TaskKind, seed: u64) -> String {
    let prefix = match task {
        TaskKind::Factuality => "fact",
        TaskKind::Stylistic => "style",
        TaskKind::Conversational => "chat",
    };
    format!("{prefix}-{seed:016x}")
}

const SUBJECTS: [&str; 10] = [
    "Undertale", "Tesla", "Hamlet", "Everest", "Apollo", "Nile", "Bach", "Kyoto", "Voyager",
    "Tetris",
];

const FACT_KEYS: [&str; 16] = [
    "born", "founded", "released", "opened", "elected", "married", "retired", "debuted",
    "awarded", "renamed", "expanded", "closed", "launched", "restored", "discovered", "ported",
];

pub fn gen_factuality_instance(seed: u64, cfg: &FactualityConfig) -> Result<RewriteInstance> {
    cfg.validate()?;
    let mut rng = seed::Rng::seed_from_u64(seed);
    let n_facts = rng.gen_range(cfg.facts.min..=cfg.facts.max);
    let n_corrupt = rng.gen_range(cfg.corrupted.min..=cfg.corrupted.max.min(n_facts));
    let n_derived = rng.gen_range(cfg.derived.min..=cfg.derived.max);
    let subject = *SUBJECTS.choose(&mut rng).expect("non-empty");

    let keys: Vec<&str> = index::sample(&mut rng, FACT_KEYS.len(), n_facts)
        .into_iter()
        .map(|i| FACT_KEYS[i])
        .collect();
    let gold_values: Vec<i64> = (0..n_facts).map(|_| rng.gen_range(1800..=2020)).collect();

    let mut corrupted = index::sample(&mut rng, n_facts, n_corrupt).into_vec();
    corrupted.sort_unstable();
    // Distinct magnitudes keep every two-term formula over a corrupted fact
    // from cancelling out after correction.
    let offsets: Vec<i64> = index::sample(&mut rng, 30, n_corrupt)
        .into_iter()
        .map(|m| {
            let m = m as i64 + 1;
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();

    let mut formulas: Vec<(usize, usize, i8)> = Vec::with_capacity(n_derived);
    while formulas.len() < n_derived {
        let first = if formulas.is_empty() {
            corrupted[rng.gen_range(0..corrupted.len())]
        } else {
            rng.gen_range(0..n_facts)
        };
        let mut second = rng.gen_range(0..n_facts - 1);
        if second >= first {
            second += 1;
        }
        let sign: i8 = if rng.gen_bool(0.5) { 1 } else { -1 };
        if !formulas.contains(&(first, second, sign)) {
            formulas.push((first, second, sign));
        }
    }

    let mut gold = Document::default();
    for (key, &value) in keys.iter().zip(&gold_values) {
        let pos = gold.tokens.len() + 3;
        gold.tokens.extend(words(&format!("Its {key} is {value} .")));
        gold.facts.push(Fact {
            key: (*key).to_owned(),
            value,
            pos,
        });
    }
    for &(a, b, sign) in &formulas {
        let op = if sign > 0 { "plus" } else { "minus" };
        let key = format!("{}_{op}_{}", keys[a], keys[b]);
        let pos = gold.tokens.len() + 3;
        gold.tokens.extend(words(&format!("So {key} is 0 .")));
        gold.derived.push(Derived {
            key,
            formula: vec![
                Term {
                    key: keys[a].to_owned(),
                    sign: 1,
                },
                Term {
                    key: keys[b].to_owned(),
                    sign,
                },
            ],
            stated_value: 0,
            pos,
        });
    }
    for m in 0..gold.derived.len() {
        gold.fix_derived(m);
    }

    let mut initial = gold.clone();
    let mut critiques = Vec::with_capacity(n_corrupt);
    for (&i, &off) in corrupted.iter().zip(&offsets) {
        let wrong = gold_values[i] + off;
        initial.set_fact(i, wrong);
        critiques.push(CritiqueSpan {
            index: i,
            wrong_value: wrong,
            revision: gold_values[i],
            reason: format!("{subject}'s {} year is {}, not {wrong}", keys[i], gold_values[i]),
        });
    }
    // The initial response is self-consistent over its own (wrong) facts.
    for m in 0..initial.derived.len() {
        initial.fix_derived(m);
    }

    let instruction_text = format!(
        "Revise the response using the critiques: {}.",
        critiques
            .iter()
            .map(|c| c.reason.as_str())
            .collect::<Vec<_>>()
            .join("; ")
    );
    Ok(RewriteInstance {
        id: instance_id(TaskKind::Factuality, seed),
        task: TaskKind::Factuality,
        prompt: words(&format!("Tell me about {subject} .")),
        initial,
        critiques,
        requirements: Vec::new(),
        instruction_text,
        gold,
    })
}

const TOPICS: [(&str, &str, &str); 8] = [
    ("Photosynthesis", "biological", "process"),
    ("Entropy", "thermodynamic", "quantity"),
    ("Inflation", "economic", "trend"),
    ("Recursion", "programming", "technique"),
    ("Osmosis", "chemical", "process"),
    ("Democracy", "political", "system"),
    ("Erosion", "geological", "process"),
    ("Metabolism", "cellular", "activity"),
];

const STYLE_SENTENCES: [&str; 6] = [
    "It appears in many textbooks .",
    "Researchers study it closely .",
    "Its effects are widely observed .",
    "Students often learn about it early .",
    "It has a long history .",
    "Experts still debate its details .",
];

const SEED_FILLERS: [&str; 3] = ["basically", "actually", "quite"];

fn pick_tone(rng: &mut seed::Rng) -> Tone {
    if rng.gen_bool(0.5) {
        Tone::Formal
    } else {
        Tone::Enthusiastic
    }
}

fn finish(
    task: TaskKind,
    seed: u64,
    prompt: Vec<String>,
    initial: Document,
    requirements: Vec<Requirement>,
    instruction_text: String,
) -> RewriteInstance {
    let mut gold = initial.clone();
    for r in &requirements {
        r.apply(&mut gold);
    }
    RewriteInstance {
        id: instance_id(task, seed),
        task,
        prompt,
        initial,
        critiques: Vec::new(),
        requirements,
        instruction_text,
        gold,
    }
}

pub fn gen_stylistic_instance(seed: u64, cfg: &StylisticConfig) -> Result<RewriteInstance> {
    cfg.validate()?;
    let mut rng = seed::Rng::seed_from_u64(seed);
    let kinds: Vec<RequirementTag> = match &cfg.kinds {
        Some(k) => k.clone(),
        None => {
            let n = rng.gen_range(cfg.requirements.min..=cfg.requirements.max);
            index::sample(&mut rng, STYLISTIC_POOL.len(), n)
                .into_iter()
                .map(|i| STYLISTIC_POOL[i])
                .collect()
        }
    };
    let (topic, adj, noun) = *TOPICS.choose(&mut rng).expect("non-empty");
    let n_other = rng.gen_range(2..=4);
    let mut sentences: Vec<Vec<String>> = index::sample(&mut rng, STYLE_SENTENCES.len(), n_other)
        .into_iter()
        .map(|i| words(STYLE_SENTENCES[i]))
        .collect();

    let n_fillers = if kinds.contains(&RequirementTag::Shorten) {
        rng.gen_range(1..=2)
    } else {
        0
    };
    for _ in 0..n_fillers {
        let s = rng.gen_range(0..sentences.len());
        // Never in front of the sentence-final period.
        let at = rng.gen_range(1..sentences[s].len());
        let filler = *SEED_FILLERS.choose(&mut rng).expect("non-empty");
        sentences[s].insert(at, filler.to_owned());
    }

    let def_at = if kinds.contains(&RequirementTag::ReorderDefinitionFirst) {
        rng.gen_range(1..=sentences.len())
    } else {
        rng.gen_range(0..=sentences.len())
    };
    sentences.insert(def_at, words(&format!("{topic} is defined as a {adj} {noun} .")));

    let requirements: Vec<Requirement> = kinds
        .iter()
        .enumerate()
        .map(|(id, tag)| Requirement {
            id: id as u32,
            kind: match tag {
                RequirementTag::ReorderDefinitionFirst => RequirementKind::ReorderDefinitionFirst,
                RequirementTag::Shorten => RequirementKind::Shorten,
                RequirementTag::Uppercase => RequirementKind::Uppercase,
                RequirementTag::ChangeTone => RequirementKind::ChangeTone {
                    tone: pick_tone(&mut rng),
                },
                other => unreachable!("{other:?} rejected by validation"),
            },
        })
        .collect();

    let initial = Document {
        tokens: sentences.concat(),
        ..Document::default()
    };
    let instruction_text = format!(
        "Rewrite the text: {}.",
        requirements
            .iter()
            .map(Requirement::instruction)
            .collect::<Vec<_>>()
            .join("; ")
    );
    Ok(finish(
        TaskKind::Stylistic,
        seed,
        words(&format!("Rewrite this passage about {topic} .")),
        initial,
        requirements,
        instruction_text,
    ))
}

const PLACEHOLDER_SENTENCES: [(&str, &str, [&str; 3]); 5] = [
    ("NAME", "Please welcome [NAME] to the team .", ["Priya", "Marco", "Lena"]),
    ("PLATFORM", "We are now on [PLATFORM] .", ["TikTok", "Instagram", "Mastodon"]),
    ("EVENT", "Join us at the [EVENT] .", ["Expo", "Hackathon", "Summit"]),
    ("DATE", "The meetup is on [DATE] .", ["Friday", "Monday", "Saturday"]),
    ("PRODUCT", "Check out [PRODUCT] today .", ["Nimbus", "Atlas", "Beacon"]),
];

const PLAIN_SENTENCES: [&str; 3] = [
    "Thanks for your support .",
    "We have news to share .",
    "It has been a busy month .",
];

const EXTRA_SENTENCES: [&str; 3] = [
    "You can win prizes in our giveaways .",
    "Reply to save your spot .",
    "Bring a friend along .",
];

const SENDERS: [&str; 4] = ["Alex", "Sam", "Jordan", "Riley"];

const EMAIL_PROMPTS: [&str; 3] = [
    "Write an email with our latest news for the community .",
    "Draft an update email for our followers .",
    "Write a short email inviting the team .",
];

pub fn gen_conversational_instance(
    seed: u64,
    cfg: &ConversationalConfig,
) -> Result<RewriteInstance> {
    cfg.validate()?;
    let mut rng = seed::Rng::seed_from_u64(seed);
    let kinds: Vec<RequirementTag> = match &cfg.kinds {
        Some(k) => k.clone(),
        None => {
            let n = rng.gen_range(cfg.requirements.min..=cfg.requirements.max);
            let extras: &[RequirementTag] = match (n, rng.gen_range(0..3)) {
                (2, 0) | (3..=4, 0) => &[RequirementTag::AddSentence],
                (2, _) | (3..=4, 1) => &[RequirementTag::ChangeTone],
                _ => &[RequirementTag::AddSentence, RequirementTag::ChangeTone],
            };
            let mut kinds = vec![RequirementTag::ReplacePlaceholder; n - extras.len()];
            kinds.extend_from_slice(extras);
            kinds.shuffle(&mut rng);
            kinds
        }
    };
    let n_placeholders = count(&kinds, RequirementTag::ReplacePlaceholder);
    let slots = index::sample(&mut rng, PLACEHOLDER_SENTENCES.len(), n_placeholders).into_vec();

    let mut body: Vec<Vec<String>> = slots
        .iter()
        .map(|&i| words(PLACEHOLDER_SENTENCES[i].1))
        .collect();
    let n_plain = rng.gen_range(1..=2);
    body.extend(
        index::sample(&mut rng, PLAIN_SENTENCES.len(), n_plain)
            .into_iter()
            .map(|i| words(PLAIN_SENTENCES[i])),
    );
    body.shuffle(&mut rng);

    let sender = *SENDERS.choose(&mut rng).expect("non-empty");
    let mut tokens = words("Hi team ,");
    tokens.extend(body.concat());
    tokens.push(Tone::Plain.signoff().to_owned());
    tokens.push(sender.to_owned());

    let mut slot_iter = slots.iter();
    let requirements: Vec<Requirement> = kinds
        .iter()
        .enumerate()
        .map(|(id, tag)| Requirement {
            id: id as u32,
            kind: match tag {
                RequirementTag::ReplacePlaceholder => {
                    let (key, _, values) = PLACEHOLDER_SENTENCES[*slot_iter.next().expect("slot")];
                    RequirementKind::ReplacePlaceholder {
                        key: key.to_owned(),
                        value: (*values.choose(&mut rng).expect("non-empty")).to_owned(),
                    }
                }
                RequirementTag::AddSentence => RequirementKind::AddSentence {
                    tokens: words(EXTRA_SENTENCES.choose(&mut rng).expect("non-empty")),
                },
                RequirementTag::ChangeTone => RequirementKind::ChangeTone {
                    tone: pick_tone(&mut rng),
                },
                other => unreachable!("{other:?} rejected by validation"),
            },
        })
        .collect();
    debug_assert!(requirements.iter().all(|r| match &r.kind {
        RequirementKind::ReplacePlaceholder { key, .. } => tokens.contains(&placeholder(key)),
        _ => true,
    }));

    let prompt = words(EMAIL_PROMPTS.choose(&mut rng).expect("non-empty"));
    let instruction_text = format!(
        "Hey, could you {}?",
        requirements
            .iter()
            .map(Requirement::instruction)
            .collect::<Vec<_>>()
            .join(", and ")
    );
    let initial = Document {
        tokens,
        ..Document::default()
    };
    Ok(finish(
        TaskKind::Conversational,
        seed,
        prompt,
        initial,
        requirements,
        instruction_text,
    ))
}

pub fn gen_instance(task: TaskKind, seed: u64, cfg: &GeneratorConfig) -> Result<RewriteInstance> {
    match task {
        TaskKind::Factuality => gen_factuality_instance(seed, &cfg.factuality),
        TaskKind::Stylistic => gen_stylistic_instance(seed, &cfg.stylistic),
        TaskKind::Conversational => gen_conversational_instance(seed, &cfg.conversational),
    }
}

/// `count` instances of one task, seeded from the named stream
/// `corpus/<task>/<split>` under `root_seed`.
pub fn gen_split(
    task: TaskKind,
    root_seed: u64,
    split: &str,
    count: usize,
    cfg: &GeneratorConfig,
) -> Result<Vec<RewriteInstance>> {
    let stream = format!("corpus/{task}/{split}");
    (0..count as u64)
        .map(|i| gen_instance(task, seed::derive(root_seed, &stream, i), cfg))
        .collect()
}
