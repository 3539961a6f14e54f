//! Researcher-agent front half: literature fetching and the tree-structured
//! propose–review–refine search over candidate ideas.
//!
//! The search keeps a forest of idea nodes. Roots are proposed directly from
//! the goal, literature digest, and retrieved memory context; every deeper
//! node is refined from its parent's review critique. Expansion is
//! breadth-first and stops at the candidate budget.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, ModelGateway, RetryPolicy};
use crate::memory::RetrievedContext;
use crate::text::{first_sections, first_words};
use crate::workers::run_ordered;

/// The research query driving one pipeline run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserGoal {
    pub id: String,
    pub text: String,
}

impl UserGoal {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::Validation("goal text must be non-empty".into()));
        }
        Ok(Self { id: id.into(), text })
    }
}

/// One retrieved paper: enough metadata to ground idea generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiteratureDoc {
    pub title: String,
    #[serde(rename = "abstract")]
    pub summary: String,
    pub year: i32,
    pub source_id: String,
}

/// Where literature comes from: a canned fixture or a remote search API.
pub trait LiteratureProvider: Send + Sync {
    fn fetch(&self, goal: &UserGoal, limit: usize) -> Result<Vec<LiteratureDoc>>;
}

/// Deterministic provider backed by an in-memory list, optionally loaded from
/// a JSON fixture file (a plain array of docs).
pub struct FixtureLibrary {
    docs: Vec<LiteratureDoc>,
}

impl FixtureLibrary {
    pub fn new(docs: Vec<LiteratureDoc>) -> Self {
        Self { docs }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let docs: Vec<LiteratureDoc> = serde_json::from_str(&raw).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        Ok(Self { docs })
    }
}

impl LiteratureProvider for FixtureLibrary {
    fn fetch(&self, _goal: &UserGoal, limit: usize) -> Result<Vec<LiteratureDoc>> {
        Ok(self.docs.iter().take(limit).cloned().collect())
    }
}

/// Remote paper-search provider (Semantic-Scholar-style JSON API).
pub struct RemoteLibrary {
    url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct WirePaper {
    #[serde(rename = "paperId")]
    paper_id: Option<String>,
    title: Option<String>,
    #[serde(rename = "abstract")]
    summary: Option<String>,
    year: Option<i32>,
}

#[derive(Deserialize)]
struct WireSearchResponse {
    #[serde(default)]
    data: Vec<WirePaper>,
}

impl RemoteLibrary {
    pub fn new(url: impl Into<String>, api_key: Option<String>) -> Result<Self> {
        Ok(Self {
            url: url.into(),
            api_key,
            retry: RetryPolicy::default(),
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(30))
                .build()
                .map_err(|e| Error::Configuration(format!("http client: {e}")))?,
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn fetch_once(&self, goal: &UserGoal, limit: usize) -> Result<Vec<LiteratureDoc>> {
        let mut req = self.client.get(&self.url).query(&[
            ("query", goal.text.as_str()),
            ("limit", &limit.to_string()),
            ("fields", "title,abstract,year"),
        ]);
        if let Some(key) = &self.api_key {
            req = req.header("x-api-key", key);
        }
        let resp = req.send().map_err(|e| Error::Retryable {
            attempts: 1,
            message: format!("GET {}: {e}", self.url),
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::Retryable {
                attempts: 1,
                message: format!("GET {}: HTTP {status}", self.url),
            });
        }
        let wire: WireSearchResponse = resp
            .json()
            .map_err(|e| Error::Protocol(format!("malformed search payload: {e}")))?;
        Ok(wire
            .data
            .into_iter()
            .filter_map(|p| {
                let title = p.title?;
                if title.is_empty() {
                    return None;
                }
                Some(LiteratureDoc {
                    title,
                    summary: p.summary.unwrap_or_default(),
                    year: p.year.unwrap_or(0),
                    source_id: p.paper_id.unwrap_or_default(),
                })
            })
            .take(limit)
            .collect())
    }
}

impl LiteratureProvider for RemoteLibrary {
    fn fetch(&self, goal: &UserGoal, limit: usize) -> Result<Vec<LiteratureDoc>> {
        self.retry.run(|| self.fetch_once(goal, limit))
    }
}

/// Fetch up to `limit` documents; zero results are an empty list, not an
/// error.
pub fn fetch_literature(
    provider: &dyn LiteratureProvider,
    goal: &UserGoal,
    limit: usize,
) -> Result<Vec<LiteratureDoc>> {
    if limit == 0 {
        return Err(Error::Validation("literature limit must be >= 1".into()));
    }
    provider.fetch(goal, limit)
}

/// A candidate research idea: a method description plus an experimental plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Idea {
    pub id: String,
    pub method_description: String,
    pub experimental_plan: String,
    pub depth: u32,
}

/// Structured critique of one idea across the four quality dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewFeedback {
    pub idea_id: String,
    pub critique: String,
    pub dimension_notes: BTreeMap<String, String>,
}

pub const REVIEW_DIMENSIONS: [&str; 4] = ["novelty", "feasibility", "relevance", "clarity"];

/// One node of the search forest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdeaNode {
    pub idea: Idea,
    pub review: Option<ReviewFeedback>,
    pub parent_id: Option<String>,
    pub child_ids: Vec<String>,
}

/// Search shape and limits. The budget caps how many (idea, review) pairs the
/// search may produce; roots × branching × depth defaults fill a budget of 21
/// exactly (3 + 9 + 9).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdeaSearchConfig {
    pub budget: usize,
    pub roots: usize,
    pub branching: usize,
    pub max_depth: u32,
    pub workers: usize,
    /// How many docs go into the prompt digest.
    pub digest_docs: usize,
    /// Goal text beyond this many characters is truncated with a warning.
    pub max_goal_chars: usize,
}

impl Default for IdeaSearchConfig {
    fn default() -> Self {
        Self {
            budget: 21,
            roots: 3,
            branching: 3,
            max_depth: 2,
            workers: 3,
            digest_docs: 10,
            max_goal_chars: 4000,
        }
    }
}

/// Everything the search produced: the scored pairs plus the full forest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdeaSearchOutcome {
    pub pairs: Vec<(Idea, ReviewFeedback)>,
    pub nodes: Vec<IdeaNode>,
}

/// "title — first 50 abstract words" per document, capped at `digest_docs`.
pub fn literature_digest(docs: &[LiteratureDoc], digest_docs: usize) -> String {
    if docs.is_empty() {
        return "(no literature available)".to_string();
    }
    docs.iter()
        .take(digest_docs)
        .map(|d| format!("- {} — {}", d.title, first_words(&d.summary, 50)))
        .collect::<Vec<_>>()
        .join("\n")
}

fn context_block(ctx: &RetrievedContext) -> String {
    if ctx.is_empty() {
        return "(no prior strategies on record)".to_string();
    }
    ctx.texts().map(|t| format!("- {t}")).collect::<Vec<_>>().join("\n")
}

fn goal_text(goal: &UserGoal, cfg: &IdeaSearchConfig) -> String {
    if goal.text.chars().count() > cfg.max_goal_chars {
        log::warn!(
            "goal {} exceeds {} chars; truncating for prompts",
            goal.id,
            cfg.max_goal_chars
        );
        goal.text.chars().take(cfg.max_goal_chars).collect()
    } else {
        goal.text.clone()
    }
}

const RESEARCHER_SYSTEM: &str = "You are a researcher agent generating candidate research ideas. \
Always answer with a METHOD: section and a PLAN: section.";

fn propose_root_prompt(
    goal: &str,
    ordinal: usize,
    total: usize,
    digest: &str,
    ctx: &str,
) -> ChatRequest {
    ChatRequest::system(RESEARCHER_SYSTEM).with_user(format!(
        "PROPOSE ROOT IDEA {ordinal} of {total}\n\
         GOAL: {goal}\n\
         LITERATURE:\n{digest}\n\
         CONTEXT:\n{ctx}\n\
         Propose one distinct research idea. Respond with:\n\
         METHOD: <method description>\n\
         PLAN: <experimental plan>"
    ))
}

fn refine_prompt(
    goal: &str,
    parent: &IdeaNode,
    child_ordinal: usize,
    branching: usize,
    digest: &str,
    ctx: &str,
) -> ChatRequest {
    let critique = parent
        .review
        .as_ref()
        .map(|r| r.critique.as_str())
        .unwrap_or("(no critique)");
    ChatRequest::system(RESEARCHER_SYSTEM).with_user(format!(
        "REFINE IDEA {parent_id} (CHILD {child_ordinal} of {branching})\n\
         GOAL: {goal}\n\
         PARENT METHOD: {method}\n\
         PARENT PLAN: {plan}\n\
         PARENT CRITIQUE: {critique}\n\
         LITERATURE:\n{digest}\n\
         CONTEXT:\n{ctx}\n\
         Address the critique with a refined idea. Respond with:\n\
         METHOD: <method description>\n\
         PLAN: <experimental plan>",
        parent_id = parent.idea.id,
        method = parent.idea.method_description,
        plan = parent.idea.experimental_plan,
    ))
}

fn review_prompt(idea: &Idea) -> ChatRequest {
    ChatRequest::system(
        "You are a reviewer scoring research ideas on novelty, feasibility, relevance, and clarity.",
    )
    .with_user(format!(
        "REVIEW IDEA {id}\n\
         METHOD: {method}\n\
         PLAN: {plan}\n\
         Respond with:\n\
         CRITIQUE: <overall critique>\n\
         NOVELTY: <note>\nFEASIBILITY: <note>\nRELEVANCE: <note>\nCLARITY: <note>",
        id = idea.id,
        method = idea.method_description,
        plan = idea.experimental_plan,
    ))
}

/// Parse a propose/refine response into an idea. `None` means the model
/// declined (no usable METHOD section).
fn parse_idea(id: String, depth: u32, response: &str) -> Option<Idea> {
    let sections = first_sections(response, &["METHOD", "PLAN"]);
    let method = sections.get("METHOD").filter(|s| !s.is_empty())?.clone();
    let plan = sections
        .get("PLAN")
        .filter(|s| !s.is_empty())
        .cloned()
        .unwrap_or_else(|| method.clone());
    Some(Idea {
        id,
        method_description: method,
        experimental_plan: plan,
        depth,
    })
}

fn parse_review(idea_id: &str, response: &str) -> Option<ReviewFeedback> {
    if response.trim().is_empty() {
        return None;
    }
    let mut markers = vec!["CRITIQUE"];
    markers.extend(REVIEW_DIMENSIONS.iter().map(|d| match *d {
        "novelty" => "NOVELTY",
        "feasibility" => "FEASIBILITY",
        "relevance" => "RELEVANCE",
        _ => "CLARITY",
    }));
    let sections = first_sections(response, &markers);
    let critique = sections
        .get("CRITIQUE")
        .filter(|s| !s.is_empty())
        .cloned()
        .unwrap_or_else(|| response.trim().to_string());
    let mut notes = BTreeMap::new();
    for dim in REVIEW_DIMENSIONS {
        let marker = dim.to_uppercase();
        notes.insert(dim.to_string(), sections.get(marker.as_str()).cloned().unwrap_or_default());
    }
    Some(ReviewFeedback {
        idea_id: idea_id.to_string(),
        critique,
        dimension_notes: notes,
    })
}

/// A propose/refine slot scheduled for one expansion wave.
struct Candidate {
    id: String,
    depth: u32,
    parent_id: Option<String>,
    request: ChatRequest,
}

/// Run the propose–review–refine search.
///
/// Returns between 1 and `cfg.budget` (idea, review) pairs. Zero usable
/// candidates is a search error; refusals short of that simply shrink the
/// result. A candidate only counts against the budget once its review pair
/// exists.
pub fn idea_tree_search(
    gateway: &ModelGateway,
    goal: &UserGoal,
    literature: &[LiteratureDoc],
    ctx: &RetrievedContext,
    cfg: &IdeaSearchConfig,
) -> Result<IdeaSearchOutcome> {
    if cfg.budget == 0 {
        return Err(Error::Validation("idea budget must be >= 1".into()));
    }
    let goal_text = goal_text(goal, cfg);
    let digest = literature_digest(literature, cfg.digest_docs);
    let ctx_block = context_block(ctx);

    let mut nodes: BTreeMap<String, IdeaNode> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new(); // insertion order = (depth, parent, sibling)
    let mut pairs: Vec<(Idea, ReviewFeedback)> = Vec::new();
    let mut generation_errors = 0usize;

    // Frontier of reviewed nodes still eligible for expansion.
    let mut frontier: Vec<String> = Vec::new();

    let mut depth = 0u32;
    while pairs.len() < cfg.budget {
        let candidates: Vec<Candidate> = if depth == 0 {
            (1..=cfg.roots)
                .map(|ordinal| Candidate {
                    id: format!("i{ordinal}"),
                    depth: 0,
                    parent_id: None,
                    request: propose_root_prompt(&goal_text, ordinal, cfg.roots, &digest, &ctx_block),
                })
                .collect()
        } else {
            if depth > cfg.max_depth || frontier.is_empty() {
                break;
            }
            let mut out = Vec::new();
            for parent_id in &frontier {
                let parent = &nodes[parent_id];
                for child in 1..=cfg.branching {
                    out.push(Candidate {
                        id: format!("{parent_id}.{child}"),
                        depth,
                        parent_id: Some(parent_id.clone()),
                        request: refine_prompt(
                            &goal_text,
                            parent,
                            child,
                            cfg.branching,
                            &digest,
                            &ctx_block,
                        ),
                    });
                }
            }
            out
        };
        // Budget is a hard cap on pairs: only schedule what can still fit.
        let remaining = cfg.budget - pairs.len();
        let candidates: Vec<Candidate> = candidates.into_iter().take(remaining).collect();
        if candidates.is_empty() {
            break;
        }

        let proposed = run_ordered(candidates, cfg.workers, |_, cand| {
            let response = gateway.generate("ideation", &cand.request);
            (cand.id.clone(), cand.depth, cand.parent_id.clone(), response)
        });

        let mut accepted: Vec<Idea> = Vec::new();
        let mut parent_of: BTreeMap<String, Option<String>> = BTreeMap::new();
        for (id, node_depth, parent_id, response) in proposed {
            match response {
                Ok(resp) => {
                    if let Some(idea) = parse_idea(id.clone(), node_depth, &resp.text) {
                        parent_of.insert(idea.id.clone(), parent_id);
                        accepted.push(idea);
                    }
                }
                Err(err) => {
                    log::warn!("idea generation for {id} failed: {err}");
                    generation_errors += 1;
                }
            }
        }

        let reviews = run_ordered(accepted.clone(), cfg.workers, |_, idea| {
            gateway.generate("review", &review_prompt(idea))
        });

        let mut next_frontier: Vec<String> = Vec::new();
        for (idea, review_resp) in accepted.into_iter().zip(reviews) {
            let review = match review_resp {
                Ok(resp) => parse_review(&idea.id, &resp.text),
                Err(err) => {
                    log::warn!("review for {} failed: {err}; dropping candidate", idea.id);
                    generation_errors += 1;
                    None
                }
            };
            let Some(review) = review else { continue };
            let parent_id = parent_of.remove(&idea.id).flatten();
            if let Some(pid) = &parent_id {
                if let Some(parent) = nodes.get_mut(pid) {
                    parent.child_ids.push(idea.id.clone());
                }
            }
            nodes.insert(
                idea.id.clone(),
                IdeaNode {
                    idea: idea.clone(),
                    review: Some(review.clone()),
                    parent_id,
                    child_ids: Vec::new(),
                },
            );
            order.push(idea.id.clone());
            next_frontier.push(idea.id.clone());
            pairs.push((idea, review));
        }

        frontier = next_frontier;
        depth += 1;
    }

    if pairs.is_empty() {
        return Err(Error::Search {
            message: format!(
                "no candidate ideas produced ({generation_errors} generation failure(s))"
            ),
        });
    }

    let nodes = order.into_iter().map(|id| nodes[&id].clone()).collect();
    Ok(IdeaSearchOutcome { pairs, nodes })
}
