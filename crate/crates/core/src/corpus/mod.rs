//! Shared data model for the three rewrite tasks, plus deterministic
//! generators and the line-delimited dataset codec.
//!
//! A [`Document`] is a token list with structured annotations: integer
//! facts, derived records whose stated value is a signed sum over facts, and
//! a tone tag. Fact and derived values are rendered into the token list at a
//! tracked position so that every structural edit is also a textual edit.

mod codec;
mod generate;

use serde::{Deserialize, Serialize};

pub use codec::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use generate::{
    gen_conversational_instance, gen_factuality_instance, gen_instance, gen_split,
    gen_stylistic_instance, ConversationalConfig, FactualityConfig, GeneratorConfig, Span,
    StylisticConfig,
};

/// Token inserted by a spurious edit.
pub const SPURIOUS_TOKEN: &str = "really";

/// Words removed by the `Shorten` requirement (compared case-insensitively).
pub const FILLER_WORDS: [&str; 4] = ["basically", "actually", "quite", SPURIOUS_TOKEN];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Factuality,
    Stylistic,
    Conversational,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [
        TaskKind::Factuality,
        TaskKind::Stylistic,
        TaskKind::Conversational,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Factuality => "factuality",
            TaskKind::Stylistic => "stylistic",
            TaskKind::Conversational => "conversational",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| crate::Error::Config(format!("unknown task `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tone {
    #[default]
    Plain,
    Formal,
    Enthusiastic,
}

impl Tone {
    /// Closing token an email carries in this tone.
    pub fn signoff(self) -> &'static str {
        match self {
            Tone::Plain => "Regards,",
            Tone::Formal => "Sincerely,",
            Tone::Enthusiastic => "Cheers!",
        }
    }

    fn is_signoff(token: &str) -> bool {
        [Tone::Plain, Tone::Formal, Tone::Enthusiastic]
            .iter()
            .any(|t| t.signoff() == token)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub key: String,
    pub value: i64,
    /// Index of the token rendering `value`.
    pub pos: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Term {
    pub key: String,
    /// +1 or -1.
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Derived {
    pub key: String,
    pub formula: Vec<Term>,
    pub stated_value: i64,
    pub pos: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub tokens: Vec<String>,
    pub facts: Vec<Fact>,
    pub derived: Vec<Derived>,
    pub tone_tag: Tone,
}

impl Document {
    pub fn fact_value(&self, key: &str) -> Option<i64> {
        self.facts.iter().find(|f| f.key == key).map(|f| f.value)
    }

    /// Value of a derived formula over the current facts; `None` if a key is
    /// missing.
    pub fn evaluate(&self, formula: &[Term]) -> Option<i64> {
        formula.iter().try_fold(0i64, |acc, t| {
            self.fact_value(&t.key).map(|v| acc + i64::from(t.sign) * v)
        })
    }

    /// Indices of derived records whose stated value disagrees with the facts.
    pub fn stale_derived(&self) -> Vec<usize> {
        self.derived
            .iter()
            .enumerate()
            .filter(|(_, d)| self.evaluate(&d.formula) != Some(d.stated_value))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_internally_consistent(&self) -> bool {
        self.stale_derived().is_empty()
    }

    pub fn placeholder_count(&self) -> usize {
        self.tokens.iter().filter(|t| is_placeholder(t)).count()
    }

    pub fn set_fact(&mut self, index: usize, value: i64) {
        let fact = &mut self.facts[index];
        fact.value = value;
        self.tokens[fact.pos] = value.to_string();
    }

    /// Recomputes derived record `index` from the current facts.
    pub fn fix_derived(&mut self, index: usize) {
        if let Some(v) = self.evaluate(&self.derived[index].formula) {
            let d = &mut self.derived[index];
            d.stated_value = v;
            self.tokens[d.pos] = v.to_string();
        }
    }

    /// Inserts tokens before position `at`, keeping annotation positions in
    /// step with the text.
    pub fn insert_tokens(&mut self, at: usize, tokens: &[String]) {
        let at = at.min(self.tokens.len());
        let n = tokens.len();
        self.tokens.splice(at..at, tokens.iter().cloned());
        for p in self.annotation_positions_mut() {
            if *p >= at {
                *p += n;
            }
        }
    }

    /// Rebuilds the token list from `order`, a list of old token indices.
    /// Annotations whose token is dropped keep their old position clamped;
    /// callers never drop annotated tokens.
    fn rearrange(&mut self, order: &[usize]) {
        let mut new_pos = vec![usize::MAX; self.tokens.len()];
        for (new, &old) in order.iter().enumerate() {
            new_pos[old] = new;
        }
        self.tokens = order.iter().map(|&i| self.tokens[i].clone()).collect();
        let last = self.tokens.len().saturating_sub(1);
        for p in self.annotation_positions_mut() {
            *p = match new_pos[*p] {
                usize::MAX => (*p).min(last),
                n => n,
            };
        }
    }

    fn annotation_positions_mut(&mut self) -> impl Iterator<Item = &mut usize> {
        self.facts
            .iter_mut()
            .map(|f| &mut f.pos)
            .chain(self.derived.iter_mut().map(|d| &mut d.pos))
    }

    /// Sentence spans `[start, end)`; a sentence ends at a `.` token.
    pub fn sentences(&self) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        let mut start = 0;
        for (i, t) in self.tokens.iter().enumerate() {
            if t == "." {
                spans.push((start, i + 1));
                start = i + 1;
            }
        }
        if start < self.tokens.len() {
            spans.push((start, self.tokens.len()));
        }
        spans
    }

    fn signoff_index(&self) -> Option<usize> {
        self.tokens.iter().rposition(|t| Tone::is_signoff(t))
    }

    fn contains_run(&self, run: &[String]) -> bool {
        !run.is_empty() && self.tokens.windows(run.len()).any(|w| w == run)
    }
}

/// `[KEY]` with an upper-case/underscore key.
pub fn is_placeholder(token: &str) -> bool {
    token.len() > 2
        && token.starts_with('[')
        && token.ends_with(']')
        && token[1..token.len() - 1]
            .chars()
            .all(|c| c.is_ascii_uppercase() || c == '_')
}

pub fn placeholder(key: &str) -> String {
    format!("[{key}]")
}

fn is_filler(token: &str) -> bool {
    let lower = token.to_lowercase();
    FILLER_WORDS.contains(&lower.as_str())
}

fn is_definition_sentence(tokens: &[String]) -> bool {
    tokens.iter().any(|t| t.eq_ignore_ascii_case("defined"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CritiqueSpan {
    /// Position into `facts`.
    pub index: usize,
    pub wrong_value: i64,
    pub revision: i64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RequirementKind {
    ReplacePlaceholder { key: String, value: String },
    AddSentence { tokens: Vec<String> },
    ChangeTone { tone: Tone },
    ReorderDefinitionFirst,
    Shorten,
    Uppercase,
}

impl RequirementKind {
    pub fn tag(&self) -> RequirementTag {
        match self {
            RequirementKind::ReplacePlaceholder { .. } => RequirementTag::ReplacePlaceholder,
            RequirementKind::AddSentence { .. } => RequirementTag::AddSentence,
            RequirementKind::ChangeTone { .. } => RequirementTag::ChangeTone,
            RequirementKind::ReorderDefinitionFirst => RequirementTag::ReorderDefinitionFirst,
            RequirementKind::Shorten => RequirementTag::Shorten,
            RequirementKind::Uppercase => RequirementTag::Uppercase,
        }
    }
}

/// Payload-free requirement kind, used in generator configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequirementTag {
    ReplacePlaceholder,
    AddSentence,
    ChangeTone,
    ReorderDefinitionFirst,
    Shorten,
    Uppercase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: u32,
    #[serde(flatten)]
    pub kind: RequirementKind,
}

impl Requirement {
    /// Deterministic transform realizing the requirement.
    pub fn apply(&self, doc: &mut Document) {
        match &self.kind {
            RequirementKind::ReplacePlaceholder { key, value } => {
                let ph = placeholder(key);
                for t in doc.tokens.iter_mut().filter(|t| **t == ph) {
                    t.clone_from(value);
                }
            }
            RequirementKind::AddSentence { tokens } => {
                let at = doc.signoff_index().unwrap_or(doc.tokens.len());
                doc.insert_tokens(at, tokens);
            }
            RequirementKind::ChangeTone { tone } => {
                doc.tone_tag = *tone;
                if let Some(i) = doc.signoff_index() {
                    doc.tokens[i] = tone.signoff().to_owned();
                }
            }
            RequirementKind::ReorderDefinitionFirst => {
                let spans = doc.sentences();
                if let Some(k) = spans
                    .iter()
                    .position(|&(s, e)| is_definition_sentence(&doc.tokens[s..e]))
                {
                    let order: Vec<usize> = std::iter::once(spans[k])
                        .chain(spans.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, s)| *s))
                        .flat_map(|(s, e)| s..e)
                        .collect();
                    doc.rearrange(&order);
                }
            }
            RequirementKind::Shorten => {
                let order: Vec<usize> = (0..doc.tokens.len())
                    .filter(|&i| !is_filler(&doc.tokens[i]))
                    .collect();
                doc.rearrange(&order);
            }
            RequirementKind::Uppercase => {
                for t in &mut doc.tokens {
                    *t = t.to_uppercase();
                }
            }
        }
    }

    /// Decidable postcondition over a revised document.
    pub fn satisfied(&self, doc: &Document) -> bool {
        match &self.kind {
            RequirementKind::ReplacePlaceholder { key, value } => {
                let ph = placeholder(key);
                !doc.tokens.contains(&ph) && doc.tokens.iter().any(|t| t == value)
            }
            RequirementKind::AddSentence { tokens } => doc.contains_run(tokens),
            RequirementKind::ChangeTone { tone } => doc.tone_tag == *tone,
            RequirementKind::ReorderDefinitionFirst => doc
                .sentences()
                .first()
                .is_some_and(|&(s, e)| is_definition_sentence(&doc.tokens[s..e])),
            RequirementKind::Shorten => !doc.tokens.iter().any(|t| is_filler(t)),
            RequirementKind::Uppercase => doc.tokens.iter().all(|t| *t == t.to_uppercase()),
        }
    }

    /// Natural-language rendering used only for the instruction string.
    pub fn instruction(&self) -> String {
        match &self.kind {
            RequirementKind::ReplacePlaceholder { key, value } => match key.as_str() {
                "PLATFORM" => format!("say we're now on {value}"),
                "NAME" => format!("welcome {value} by name"),
                "EVENT" => format!("mention that the event is the {value}"),
                "DATE" => format!("set the date to {value}"),
                "PRODUCT" => format!("call the product {value}"),
                other => format!("fill in {} with {value}", other.to_lowercase()),
            },
            RequirementKind::AddSentence { tokens } => {
                format!("let them know: \"{}\"", tokens.join(" "))
            }
            RequirementKind::ChangeTone { tone } => match tone {
                Tone::Plain => "keep the tone plain".to_owned(),
                Tone::Formal => "make it sound formal".to_owned(),
                Tone::Enthusiastic => "make it sound enthusiastic".to_owned(),
            },
            RequirementKind::ReorderDefinitionFirst => "put the definition at the beginning".into(),
            RequirementKind::Shorten => "make it more concise".into(),
            RequirementKind::Uppercase => "write it in all caps".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteInstance {
    pub id: String,
    pub task: TaskKind,
    pub prompt: Vec<String>,
    pub initial: Document,
    pub critiques: Vec<CritiqueSpan>,
    pub requirements: Vec<Requirement>,
    pub instruction_text: String,
    pub gold: Document,
}

impl RewriteInstance {
    /// Number of critique spans plus requirements.
    pub fn target_count(&self) -> usize {
        self.critiques.len() + self.requirements.len()
    }

    pub fn apply_critique(&self, doc: &mut Document, i: usize) {
        let c = &self.critiques[i];
        doc.set_fact(c.index, c.revision);
    }
}
