//! Instruction-data curation and preference-pair construction.
//!
//! Covers the post-training data path: chat-format verification, per-language
//! dedup of conversations, the category taxonomy, percentile-based stage-2
//! selection with embedding diversity filtering, chosen/rejected pair
//! assembly, and distribution accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Document;
use crate::neardedup::{near_dedup, DuplicateCluster, NearDedupConfig};
use crate::text::contains_emoji;

#[derive(Debug, Error)]
pub enum PosttrainError {
    #[error("unknown subcategory `{0}`")]
    UnknownSubcategory(String),
    #[error("conversation `{0}` has no embedding")]
    MissingEmbedding(String),
    #[error("need at least 2 responses, have {0}")]
    TooFewResponses(usize),
    #[error(transparent)]
    Dedup(#[from] crate::neardedup::NearDedupError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: ChatRole,
    pub content: String,
}

impl ChatMessage {
    pub fn new(role: ChatRole, content: impl Into<String>) -> Self {
        ChatMessage {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub id: String,
    pub language: String,
    pub subcategory: String,
    pub messages: Vec<ChatMessage>,
}

impl Conversation {
    /// All message contents joined, the text near-dedup operates on.
    pub fn concatenated_text(&self) -> String {
        let parts: Vec<&str> = self.messages.iter().map(|m| m.content.as_str()).collect();
        parts.join("\n")
    }
}

/// The first format rule a transcript breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatViolation {
    SystemPosition,
    Alternation,
    EmptyContent,
    FinalNotAssistant,
}

impl std::fmt::Display for FormatViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let code = match self {
            FormatViolation::SystemPosition => "system_position",
            FormatViolation::Alternation => "alternation",
            FormatViolation::EmptyContent => "empty_content",
            FormatViolation::FinalNotAssistant => "final_not_assistant",
        };
        f.write_str(code)
    }
}

/// A transcript is well-formed iff its roles match `system? (user assistant)+`
/// and every content is non-empty. Violations are reported in scan order:
/// per message, system placement, then alternation, then emptiness; the
/// closing final-message rule last.
pub fn verify_format(messages: &[ChatMessage]) -> Result<(), FormatViolation> {
    let mut expect_user = true;
    for (i, m) in messages.iter().enumerate() {
        match m.role {
            ChatRole::System => {
                if i != 0 {
                    return Err(FormatViolation::SystemPosition);
                }
            }
            ChatRole::User => {
                if !expect_user {
                    return Err(FormatViolation::Alternation);
                }
                expect_user = false;
            }
            ChatRole::Assistant => {
                if expect_user {
                    return Err(FormatViolation::Alternation);
                }
                expect_user = true;
            }
        }
        if m.content.is_empty() {
            return Err(FormatViolation::EmptyContent);
        }
    }
    match messages.last() {
        Some(m) if m.role == ChatRole::Assistant => Ok(()),
        _ => Err(FormatViolation::FinalNotAssistant),
    }
}

pub const SUBCATEGORIES: [&str; 11] = [
    "Coding & Debugging",
    "Information Seeking",
    "Advice Seeking",
    "Math",
    "Data Analysis",
    "Reasoning",
    "Planning",
    "Creative Writing",
    "Editing",
    "Brainstorming",
    "Role Playing",
];

pub const MAIN_CATEGORIES: [&str; 5] = [
    "Coding & Debugging",
    "Info Seeking",
    "Math & Data",
    "Reasoning & Planning",
    "Creative Tasks",
];

/// Main category of one of the 11 subcategory labels.
pub fn rollup_category(subcategory: &str) -> Result<&'static str, PosttrainError> {
    match subcategory {
        "Coding & Debugging" => Ok("Coding & Debugging"),
        "Information Seeking" | "Advice Seeking" => Ok("Info Seeking"),
        "Math" | "Data Analysis" => Ok("Math & Data"),
        "Reasoning" | "Planning" => Ok("Reasoning & Planning"),
        "Creative Writing" | "Editing" | "Brainstorming" | "Role Playing" => Ok("Creative Tasks"),
        other => Err(PosttrainError::UnknownSubcategory(other.to_string())),
    }
}

/// Near-dedup conversations within each language partition. Conversations in
/// different languages are never compared, so identical text in two languages
/// survives twice.
pub fn dedup_sft(
    dataset: &[Conversation],
    config: &NearDedupConfig,
) -> Result<(Vec<Conversation>, Vec<DuplicateCluster>), PosttrainError> {
    let mut by_language: BTreeMap<&str, Vec<&Conversation>> = BTreeMap::new();
    for conv in dataset {
        by_language.entry(conv.language.as_str()).or_default().push(conv);
    }
    let mut surviving_ids = std::collections::HashSet::new();
    let mut clusters = Vec::new();
    for group in by_language.values() {
        let docs: Vec<Document> = group
            .iter()
            .map(|c| Document::new(c.id.clone(), c.language.clone(), c.concatenated_text()))
            .collect();
        let outcome = near_dedup(&docs, config)?;
        surviving_ids.extend(outcome.survivors.into_iter().map(|d| d.id));
        clusters.extend(outcome.clusters);
    }
    clusters.sort_by(|a, b| a.members[0].cmp(&b.members[0]));
    let survivors = dataset
        .iter()
        .filter(|c| surviving_ids.contains(&c.id))
        .cloned()
        .collect();
    Ok((survivors, clusters))
}

/// An instruction annotated with upstream model scores. Percentiles and the
/// selection score are absent until `percentile_normalize` fills them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredInstruction {
    pub conversation: Conversation,
    pub reward: f64,
    pub perplexity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppl_pct: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

/// Which label the (language, category) normalization groups use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CategoryGrouping {
    #[default]
    Main,
    Subcategory,
}

fn group_key(item: &ScoredInstruction, grouping: CategoryGrouping) -> Result<(String, String), PosttrainError> {
    let category = match grouping {
        CategoryGrouping::Main => rollup_category(&item.conversation.subcategory)?.to_string(),
        CategoryGrouping::Subcategory => item.conversation.subcategory.clone(),
    };
    Ok((item.conversation.language.clone(), category))
}

/// Percentile of `v` in a sorted group: the fraction of values ≤ v, so ties
/// share the higher rank and results lie in (0, 1].
fn percentile_of(sorted: &[f64], v: f64) -> f64 {
    let upper = sorted.partition_point(|&x| x <= v);
    upper as f64 / sorted.len() as f64
}

/// Fill reward_pct, ppl_pct, and selection_score, normalizing within each
/// (language, category) group independently.
pub fn percentile_normalize(
    items: &mut [ScoredInstruction],
    grouping: CategoryGrouping,
) -> Result<(), PosttrainError> {
    let mut groups: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        groups.entry(group_key(item, grouping)?).or_default().push(i);
    }
    for indices in groups.values() {
        let mut rewards: Vec<f64> = indices.iter().map(|&i| items[i].reward).collect();
        let mut ppls: Vec<f64> = indices.iter().map(|&i| items[i].perplexity).collect();
        rewards.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
        ppls.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
        for &i in indices {
            let r = percentile_of(&rewards, items[i].reward);
            let p = percentile_of(&ppls, items[i].perplexity);
            items[i].reward_pct = Some(r);
            items[i].ppl_pct = Some(p);
            items[i].selection_score = Some(selection_score(r, p));
        }
    }
    Ok(())
}

/// The stage-2 ranking key: r·p/(r+p), defined as 0 at r = p = 0.
pub fn selection_score(reward_pct: f64, ppl_pct: f64) -> f64 {
    let sum = reward_pct + ppl_pct;
    if sum == 0.0 {
        0.0
    } else {
        reward_pct * ppl_pct / sum
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

pub const DEFAULT_COS_THRESHOLD: f64 = 0.6;

/// Greedy diverse selection within each (language, category) group: walk the
/// ranking (selection_score descending, id ascending), admit an item iff its
/// cosine similarity with every already-admitted item in the group stays at
/// or below the threshold, stop at the group's quota. Groups missing from
/// `quotas` select nothing.
pub fn select_stage2(
    items: &[ScoredInstruction],
    quotas: &BTreeMap<(String, String), usize>,
    cos_threshold: f64,
    grouping: CategoryGrouping,
) -> Result<Vec<ScoredInstruction>, PosttrainError> {
    let mut groups: BTreeMap<(String, String), Vec<&ScoredInstruction>> = BTreeMap::new();
    for item in items {
        if item.embedding.is_none() {
            return Err(PosttrainError::MissingEmbedding(item.conversation.id.clone()));
        }
        groups.entry(group_key(item, grouping)?).or_default().push(item);
    }
    let mut selected = Vec::new();
    for (key, mut group) in groups {
        let quota = quotas.get(&key).copied().unwrap_or(0);
        if quota == 0 {
            continue;
        }
        group.sort_by(|a, b| {
            let sa = a.selection_score.unwrap_or(0.0);
            let sb = b.selection_score.unwrap_or(0.0);
            sb.partial_cmp(&sa)
                .expect("scores are finite")
                .then_with(|| a.conversation.id.cmp(&b.conversation.id))
        });
        let mut admitted: Vec<&ScoredInstruction> = Vec::new();
        for item in group {
            if admitted.len() >= quota {
                break;
            }
            let emb = item.embedding.as_ref().expect("checked above");
            let diverse = admitted.iter().all(|other| {
                cosine(emb, other.embedding.as_ref().expect("checked above")) <= cos_threshold
            });
            if diverse {
                admitted.push(item);
            }
        }
        selected.extend(admitted.into_iter().cloned());
    }
    Ok(selected)
}

/// One sampled model response with its reward and language-consistency
/// verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResponse {
    pub text: String,
    pub reward: f64,
    pub language_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: String,
    pub chosen: CandidateResponse,
    pub rejected: CandidateResponse,
    /// Which rule produced the pair: reward_comparison, single_consistent, or
    /// translation_waiver.
    pub rule: String,
}

/// Loser choice when exactly one response is language-consistent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoserPolicy {
    /// Lowest-reward inconsistent response, mirroring the on-policy rule.
    #[default]
    LowestReward,
    /// Highest-reward inconsistent response, a harder negative.
    HighestReward,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PairOutcome {
    Pair(PreferencePair),
    /// No response was language-consistent.
    Discarded { reason: String },
}

fn argmax_reward(indices: &[usize], responses: &[CandidateResponse]) -> usize {
    *indices
        .iter()
        .max_by(|&&a, &&b| {
            responses[a]
                .reward
                .partial_cmp(&responses[b].reward)
                .expect("rewards are finite")
                .then_with(|| b.cmp(&a)) // tie: smaller index wins the max
        })
        .expect("non-empty index set")
}

fn argmin_reward(indices: &[usize], responses: &[CandidateResponse]) -> usize {
    *indices
        .iter()
        .min_by(|&&a, &&b| {
            responses[a]
                .reward
                .partial_cmp(&responses[b].reward)
                .expect("rewards are finite")
                .then_with(|| a.cmp(&b)) // tie: smaller index wins the min
        })
        .expect("non-empty index set")
}

/// Assemble a chosen/rejected pair from sampled responses. Translation tasks
/// waive the consistency requirement entirely. With two or more consistent
/// responses, highest reward wins and lowest loses; with exactly one, it wins
/// and the loser comes from the inconsistent side per `policy`; with none,
/// the prompt is discarded. Reward ties always break to the earlier response.
pub fn build_pair(
    prompt: &str,
    responses: &[CandidateResponse],
    is_translation_task: bool,
    policy: LoserPolicy,
) -> Result<PairOutcome, PosttrainError> {
    if responses.len() < 2 {
        return Err(PosttrainError::TooFewResponses(responses.len()));
    }
    let consistent: Vec<usize> = (0..responses.len())
        .filter(|&i| is_translation_task || responses[i].language_consistent)
        .collect();
    let (chosen, rejected, rule) = match consistent.len() {
        0 => {
            return Ok(PairOutcome::Discarded {
                reason: "no_consistent_response".to_string(),
            })
        }
        1 => {
            let chosen = consistent[0];
            let others: Vec<usize> = (0..responses.len()).filter(|&i| i != chosen).collect();
            let rejected = match policy {
                LoserPolicy::LowestReward => argmin_reward(&others, responses),
                LoserPolicy::HighestReward => argmax_reward(&others, responses),
            };
            (chosen, rejected, "single_consistent")
        }
        _ => {
            let chosen = argmax_reward(&consistent, responses);
            let rest: Vec<usize> = consistent.into_iter().filter(|&i| i != chosen).collect();
            let rejected = argmin_reward(&rest, responses);
            let rule = if is_translation_task {
                "translation_waiver"
            } else {
                "reward_comparison"
            };
            (chosen, rejected, rule)
        }
    };
    Ok(PairOutcome::Pair(PreferencePair {
        prompt: prompt.to_string(),
        chosen: responses[chosen].clone(),
        rejected: responses[rejected].clone(),
        rule: rule.to_string(),
    }))
}

/// Per-language, per-split conversation counts with a totals row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub splits: Vec<String>,
    /// language -> count per split, in `splits` order.
    pub rows: BTreeMap<String, Vec<u64>>,
}

impl DistributionReport {
    pub fn new<S: Into<String>, I: IntoIterator<Item = S>>(splits: I) -> Self {
        DistributionReport {
            splits: splits.into_iter().map(Into::into).collect(),
            rows: BTreeMap::new(),
        }
    }

    pub fn add_count(&mut self, language: &str, split: &str, count: u64) {
        let col = self
            .splits
            .iter()
            .position(|s| s == split)
            .expect("split was declared at construction");
        let row = self
            .rows
            .entry(language.to_string())
            .or_insert_with(|| vec![0; self.splits.len()]);
        row[col] += count;
    }

    pub fn add(&mut self, conversation: &Conversation, split: &str) {
        self.add_count(&conversation.language, split, 1);
    }

    pub fn from_datasets(datasets: &BTreeMap<String, Vec<Conversation>>) -> Self {
        let mut report = DistributionReport::new(datasets.keys().cloned());
        for (split, convs) in datasets {
            for conv in convs {
                report.add(conv, split);
            }
        }
        report
    }

    /// Column sums, the totals row.
    pub fn column_totals(&self) -> Vec<u64> {
        let mut totals = vec![0u64; self.splits.len()];
        for row in self.rows.values() {
            for (t, v) in totals.iter_mut().zip(row) {
                *t += v;
            }
        }
        totals
    }

    pub fn grand_total(&self) -> u64 {
        self.column_totals().iter().sum()
    }
}

/// Diagnostic filter over conversations: which ones a named predicate flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probe: String,
    pub flagged: Vec<String>,
    pub total: usize,
}

impl ProbeReport {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.flagged.len() as f64 / self.total as f64
        }
    }
}

pub fn probe_report<F>(conversations: &[Conversation], probe: &str, predicate: F) -> ProbeReport
where
    F: Fn(&Conversation) -> bool,
{
    ProbeReport {
        probe: probe.to_string(),
        flagged: conversations
            .iter()
            .filter(|c| predicate(c))
            .map(|c| c.id.clone())
            .collect(),
        total: conversations.len(),
    }
}

/// The stock probe: does any assistant message contain an emoji?
pub fn assistant_uses_emoji(conversation: &Conversation) -> bool {
    conversation
        .messages
        .iter()
        .filter(|m| m.role == ChatRole::Assistant)
        .any(|m| contains_emoji(&m.content))
}
