//! Ranked workflow discovery.
//!
//! A workflow scores, for each distinct query token, 3 if the token occurs in
//! its name, 2 if in its tags and 1 if in its description or use cases.
//! Results sort by descending score, then ascending workflow id.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::schema::{Version, WorkflowDefinition};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub workflow_id: String,
    pub version: Version,
    pub name: String,
    pub score: u32,
}

pub const NAME_WEIGHT: u32 = 3;
pub const TAG_WEIGHT: u32 = 2;
pub const TEXT_WEIGHT: u32 = 1;

/// Lower-cased alphanumeric runs.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn score(query: &BTreeSet<String>, wf: &WorkflowDefinition) -> u32 {
    let name = tokenize(&wf.name);
    let tags: BTreeSet<String> = wf.metadata.tags.iter().flat_map(|t| tokenize(t)).collect();
    let mut text = tokenize(&wf.description);
    for use_case in &wf.metadata.use_cases {
        text.extend(tokenize(use_case));
    }
    query
        .iter()
        .map(|t| {
            NAME_WEIGHT * u32::from(name.contains(t))
                + TAG_WEIGHT * u32::from(tags.contains(t))
                + TEXT_WEIGHT * u32::from(text.contains(t))
        })
        .sum()
}

/// Ranks `candidates` (one per workflow id). A non-empty tag filter keeps
/// only workflows carrying every listed tag. An empty query matches every
/// candidate with score 0; otherwise zero-score workflows are dropped.
pub fn rank<'a>(
    query: &str,
    tags: &[String],
    candidates: impl IntoIterator<Item = &'a WorkflowDefinition>,
) -> Vec<SearchHit> {
    let tokens = tokenize(query);
    let wanted: Vec<String> = tags.iter().map(|t| t.to_lowercase()).collect();
    let mut hits: Vec<SearchHit> = candidates
        .into_iter()
        .filter(|wf| {
            wanted.iter().all(|w| wf.metadata.tags.iter().any(|t| t.to_lowercase() == *w))
        })
        .map(|wf| SearchHit {
            workflow_id: wf.workflow_id.clone(),
            version: wf.version,
            name: wf.name.clone(),
            score: score(&tokens, wf),
        })
        .filter(|hit| tokens.is_empty() || hit.score > 0)
        .collect();
    hits.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.workflow_id.cmp(&b.workflow_id)));
    hits
}
