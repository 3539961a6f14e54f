//! Elo tournament over pairwise judgments, top-k retention, and extension of
//! the winner into a full research proposal.
//!
//! Every scheduled pair is judged twice with positions swapped to cancel
//! positional bias: two agreeing verdicts decide the match, disagreement is a
//! tie. Ratings update sequentially in schedule order with the classic
//! logistic expected-score rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, ModelGateway};
use crate::ideation::{Idea, LiteratureDoc, ReviewFeedback, UserGoal};
use crate::text::first_sections;

pub const INITIAL_RATING: f64 = 1500.0;
pub const K_FACTOR: f64 = 32.0;

/// Post-tournament rating for one idea.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloRating {
    pub idea_id: String,
    pub rating: f64,
    pub games_played: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchOutcome {
    AWins,
    BWins,
    Tie,
}

/// One decided match, with both raw swapped verdict texts retained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub idea_a: String,
    pub idea_b: String,
    pub outcome: MatchOutcome,
    pub swapped_verdicts: (String, String),
}

/// A match dropped because the judge failed; the tournament continues.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedMatch {
    pub idea_a: String,
    pub idea_b: String,
    pub reason: String,
}

/// Full tournament artifact: final ratings plus every match record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentResult {
    pub ratings: Vec<EloRating>,
    pub matches: Vec<MatchRecord>,
    pub skipped: Vec<SkippedMatch>,
}

/// The five-section research proposal extended from the winning idea.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub goal_id: String,
    pub background: String,
    pub related_work: String,
    pub method: String,
    pub experimental_plan: String,
    pub expected_results: String,
    pub source_idea_id: String,
}

/// Logistic expected score of `a` against `b`.
pub fn expected_score(rating_a: f64, rating_b: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf((rating_b - rating_a) / 400.0))
}

/// Positional verdict from one judge call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PositionVerdict {
    First,
    Second,
    Tie,
}

fn judge_prompt(first: &str, second: &str) -> ChatRequest {
    ChatRequest::system(
        "You are an impartial judge comparing two research ideas on novelty, \
         feasibility, relevance, and clarity. Weigh all four dimensions, then \
         give one overall verdict.",
    )
    .with_user(format!(
        "JUDGE PAIR\n\
         IDEA A:\n{first}\n\
         IDEA B:\n{second}\n\
         Respond with exactly one line:\n\
         WINNER: A | WINNER: B | WINNER: TIE"
    ))
}

fn parse_verdict(text: &str) -> Option<PositionVerdict> {
    let sections = first_sections(text, &["WINNER"]);
    let raw = sections.get("WINNER")?.to_uppercase();
    let token = raw.split_whitespace().next()?;
    match token {
        "A" => Some(PositionVerdict::First),
        "B" => Some(PositionVerdict::Second),
        "TIE" => Some(PositionVerdict::Tie),
        _ => None,
    }
}

/// Render an idea for the judge.
fn idea_text(idea: &Idea, review: Option<&ReviewFeedback>) -> String {
    let mut out = format!(
        "METHOD: {}\nPLAN: {}",
        idea.method_description, idea.experimental_plan
    );
    if let Some(rev) = review {
        out.push_str(&format!("\nPRIOR REVIEW: {}", rev.critique));
    }
    out
}

/// Judge one pair of texts twice with swapped positions and aggregate.
///
/// Returns the outcome relative to `(a, b)` and both raw verdict texts. This
/// is the same protocol the tournament uses, exposed for ad-hoc comparisons.
pub fn judge_pair(
    gateway: &ModelGateway,
    text_a: &str,
    text_b: &str,
) -> Result<(MatchOutcome, (String, String))> {
    let forward = gateway.generate("judge", &judge_prompt(text_a, text_b))?;
    let swapped = gateway.generate("judge", &judge_prompt(text_b, text_a))?;

    let v1 = parse_verdict(&forward.text)
        .ok_or_else(|| Error::Format(format!("unparseable judge verdict: {:?}", forward.text)))?;
    let v2 = parse_verdict(&swapped.text)
        .ok_or_else(|| Error::Format(format!("unparseable judge verdict: {:?}", swapped.text)))?;

    // Map positional verdicts back to candidate identity: in the swapped
    // call, "A" is candidate b.
    let first = match v1 {
        PositionVerdict::First => MatchOutcome::AWins,
        PositionVerdict::Second => MatchOutcome::BWins,
        PositionVerdict::Tie => MatchOutcome::Tie,
    };
    let second = match v2 {
        PositionVerdict::First => MatchOutcome::BWins,
        PositionVerdict::Second => MatchOutcome::AWins,
        PositionVerdict::Tie => MatchOutcome::Tie,
    };
    let outcome = if first == second { first } else { MatchOutcome::Tie };
    Ok((outcome, (forward.text, swapped.text)))
}

/// Round-robin schedule: every unordered pair exactly once, in index order.
pub fn round_robin(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push((i, j));
        }
    }
    out
}

/// Run a full single round-robin tournament over the candidate ideas.
pub fn run_tournament(
    gateway: &ModelGateway,
    ideas: &[(Idea, ReviewFeedback)],
) -> Result<TournamentResult> {
    if ideas.len() < 2 {
        return Err(Error::Validation(format!(
            "a tournament needs at least 2 ideas, got {}",
            ideas.len()
        )));
    }

    let mut ratings: Vec<EloRating> = ideas
        .iter()
        .map(|(idea, _)| EloRating {
            idea_id: idea.id.clone(),
            rating: INITIAL_RATING,
            games_played: 0,
        })
        .collect();
    let mut matches = Vec::new();
    let mut skipped = Vec::new();

    for (i, j) in round_robin(ideas.len()) {
        let (idea_a, rev_a) = &ideas[i];
        let (idea_b, rev_b) = &ideas[j];
        let verdict = judge_pair(
            gateway,
            &idea_text(idea_a, Some(rev_a)),
            &idea_text(idea_b, Some(rev_b)),
        );
        let (outcome, raw) = match verdict {
            Ok(v) => v,
            Err(err) => {
                log::warn!("match {} vs {} skipped: {err}", idea_a.id, idea_b.id);
                skipped.push(SkippedMatch {
                    idea_a: idea_a.id.clone(),
                    idea_b: idea_b.id.clone(),
                    reason: err.to_string(),
                });
                continue;
            }
        };

        let score_a = match outcome {
            MatchOutcome::AWins => 1.0,
            MatchOutcome::BWins => 0.0,
            MatchOutcome::Tie => 0.5,
        };
        let expected_a = expected_score(ratings[i].rating, ratings[j].rating);
        let delta = K_FACTOR * (score_a - expected_a);
        ratings[i].rating += delta;
        ratings[j].rating -= delta;
        ratings[i].games_played += 1;
        ratings[j].games_played += 1;

        matches.push(MatchRecord {
            idea_a: idea_a.id.clone(),
            idea_b: idea_b.id.clone(),
            outcome,
            swapped_verdicts: raw,
        });
    }

    Ok(TournamentResult {
        ratings,
        matches,
        skipped,
    })
}

/// Top-k idea ids by rating, descending. Ties break by fewer games played,
/// then lexicographic id.
pub fn select_top(ratings: &[EloRating], k: usize) -> Result<Vec<String>> {
    if k > ratings.len() {
        return Err(Error::Validation(format!(
            "cannot select top {k} from {} rating(s)",
            ratings.len()
        )));
    }
    let mut sorted: Vec<&EloRating> = ratings.iter().collect();
    sorted.sort_by(|a, b| {
        b.rating
            .total_cmp(&a.rating)
            .then_with(|| a.games_played.cmp(&b.games_played))
            .then_with(|| a.idea_id.cmp(&b.idea_id))
    });
    Ok(sorted.into_iter().take(k).map(|r| r.idea_id.clone()).collect())
}

const PROPOSAL_MARKERS: [&str; 5] = [
    "BACKGROUND",
    "RELATED WORK",
    "METHOD",
    "EXPERIMENTAL PLAN",
    "EXPECTED RESULTS",
];

fn extend_prompt(goal: &UserGoal, idea: &Idea, digest: &str, missing: Option<&[String]>) -> ChatRequest {
    let repair = match missing {
        Some(missing) => format!(
            "\nYour previous answer was missing or left empty: {}. \
             Produce the complete five-section proposal.",
            missing.join(", ")
        ),
        None => String::new(),
    };
    ChatRequest::system(
        "You are a researcher agent extending a winning idea into a full research proposal.",
    )
    .with_user(format!(
        "EXTEND TO PROPOSAL\n\
         GOAL: {goal}\n\
         WINNING IDEA {id}\n\
         METHOD: {method}\n\
         PLAN: {plan}\n\
         LITERATURE:\n{digest}\n\
         Respond with all five sections:\n\
         BACKGROUND: <...>\nRELATED WORK: <...>\nMETHOD: <...>\n\
         EXPERIMENTAL PLAN: <...>\nEXPECTED RESULTS: <...>{repair}",
        goal = goal.text,
        id = idea.id,
        method = idea.method_description,
        plan = idea.experimental_plan,
    ))
}

fn parse_proposal(goal: &UserGoal, idea: &Idea, text: &str) -> std::result::Result<Proposal, Vec<String>> {
    let sections = first_sections(text, &PROPOSAL_MARKERS);
    let missing: Vec<String> = PROPOSAL_MARKERS
        .iter()
        .filter(|m| sections.get(**m).map(|s| s.is_empty()).unwrap_or(true))
        .map(|m| m.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(missing);
    }
    Ok(Proposal {
        goal_id: goal.id.clone(),
        background: sections["BACKGROUND"].clone(),
        related_work: sections["RELATED WORK"].clone(),
        method: sections["METHOD"].clone(),
        experimental_plan: sections["EXPERIMENTAL PLAN"].clone(),
        expected_results: sections["EXPECTED RESULTS"].clone(),
        source_idea_id: idea.id.clone(),
    })
}

/// Extend the top-ranked idea into a five-section proposal. A malformed
/// response gets exactly one structured-repair regeneration before the call
/// fails with a format error.
pub fn extend_to_proposal(
    gateway: &ModelGateway,
    goal: &UserGoal,
    top_idea: &Idea,
    literature: &[LiteratureDoc],
) -> Result<Proposal> {
    let digest = crate::ideation::literature_digest(literature, 10);
    let first = gateway.generate("ideation", &extend_prompt(goal, top_idea, &digest, None))?;
    let missing = match parse_proposal(goal, top_idea, &first.text) {
        Ok(p) => return Ok(p),
        Err(missing) => missing,
    };
    log::warn!(
        "proposal for idea {} missing sections {:?}; attempting one repair",
        top_idea.id,
        missing
    );
    let second = gateway.generate(
        "ideation",
        &extend_prompt(goal, top_idea, &digest, Some(&missing)),
    )?;
    parse_proposal(goal, top_idea, &second.text).map_err(|still_missing| {
        Error::Format(format!(
            "proposal still missing sections after repair: {}",
            still_missing.join(", ")
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{HashEmbedder, ModelGateway, ScriptedMockProgram};
    use std::sync::Arc;

    fn idea(id: &str, text: &str) -> (Idea, ReviewFeedback) {
        (
            Idea {
                id: id.to_string(),
                method_description: text.to_string(),
                experimental_plan: format!("plan for {text}"),
                depth: 0,
            },
            ReviewFeedback {
                idea_id: id.to_string(),
                critique: format!("critique of {id}"),
                dimension_notes: Default::default(),
            },
        )
    }

    fn gateway(mock: ScriptedMockProgram) -> ModelGateway {
        ModelGateway::new(Arc::new(mock), Arc::new(HashEmbedder::new(8)))
    }

    #[test]
    fn consistent_sweep_gives_1516_1484() {
        // Judge always prefers the idea whose text carries the winner marker,
        // whichever position it is shown in.
        let mock = ScriptedMockProgram::new("WINNER: TIE")
            .pattern_rule(r"IDEA A:\nMETHOD: strong-idea(.|\n)*", "WINNER: A")
            .pattern_rule(r"IDEA B:\nMETHOD: strong-idea(.|\n)*", "WINNER: B");
        let gw = gateway(mock);
        let ideas = vec![idea("w", "strong-idea"), idea("l", "weak-idea")];
        let result = run_tournament(&gw, &ideas).unwrap();
        let winner = result.ratings.iter().find(|r| r.idea_id == "w").unwrap();
        let loser = result.ratings.iter().find(|r| r.idea_id == "l").unwrap();
        assert!((winner.rating - 1516.0).abs() < 1e-9);
        assert!((loser.rating - 1484.0).abs() < 1e-9);
        assert_eq!(winner.games_played, 1);
        assert_eq!(result.matches.len(), 1);
    }

    #[test]
    fn disagreeing_swapped_verdicts_are_a_tie() {
        // Position-biased judge: always picks whatever sits in slot A.
        let mock = ScriptedMockProgram::new("WINNER: A");
        let gw = gateway(mock);
        let ideas = vec![idea("x", "one"), idea("y", "two")];
        let result = run_tournament(&gw, &ideas).unwrap();
        assert_eq!(result.matches[0].outcome, MatchOutcome::Tie);
        for r in &result.ratings {
            assert!((r.rating - 1500.0).abs() < 1e-12);
        }
    }

    #[test]
    fn both_ties_are_a_tie() {
        let gw = gateway(ScriptedMockProgram::new("WINNER: TIE"));
        let ideas = vec![idea("x", "one"), idea("y", "two")];
        let result = run_tournament(&gw, &ideas).unwrap();
        assert_eq!(result.matches[0].outcome, MatchOutcome::Tie);
    }

    #[test]
    fn fewer_than_two_ideas_rejected() {
        let gw = gateway(ScriptedMockProgram::new("WINNER: TIE"));
        assert!(matches!(
            run_tournament(&gw, &[idea("only", "one")]),
            Err(Error::Validation(_))
        ));
    }

    /// A mock whose verdicts encode a strict total order by a rank marker in
    /// the idea text: lower rank number beats higher.
    fn total_order_mock(n: usize) -> ScriptedMockProgram {
        let mut mock = ScriptedMockProgram::new("WINNER: TIE");
        // For each ordered pair (better, worse), match both layouts.
        for better in 0..n {
            for worse in (better + 1)..n {
                mock = mock
                    .pattern_rule(
                        format!(r"IDEA A:\nMETHOD: rank-{better}\b(.|\n)*rank-{worse}\b(.|\n)*"),
                        "WINNER: A",
                    )
                    .pattern_rule(
                        format!(r"IDEA A:\nMETHOD: rank-{worse}\b(.|\n)*rank-{better}\b(.|\n)*"),
                        "WINNER: B",
                    );
            }
        }
        mock
    }

    #[test]
    fn total_order_judge_recovers_the_order() {
        for n in 3..=10usize {
            let gw = gateway(total_order_mock(n));
            let ideas: Vec<_> = (0..n).map(|r| idea(&format!("id{r:02}"), &format!("rank-{r}"))).collect();
            let result = run_tournament(&gw, &ideas).unwrap();
            assert!(result.skipped.is_empty());
            let ranked = select_top(&result.ratings, n).unwrap();
            let want: Vec<String> = (0..n).map(|r| format!("id{r:02}")).collect();
            assert_eq!(ranked, want, "n={n}");
        }
    }

    #[test]
    fn rating_sum_is_conserved() {
        let n = 8;
        let gw = gateway(total_order_mock(n));
        let ideas: Vec<_> = (0..n).map(|r| idea(&format!("id{r}"), &format!("rank-{r}"))).collect();
        let result = run_tournament(&gw, &ideas).unwrap();
        let sum: f64 = result.ratings.iter().map(|r| r.rating).sum();
        assert!((sum - 1500.0 * n as f64).abs() < 1e-6);
    }

    #[test]
    fn failed_judge_skips_match_and_continues() {
        // Unparseable verdict for exactly one pairing.
        let mock = ScriptedMockProgram::new("WINNER: TIE")
            .pattern_rule(r"rank-0(.|\n)*rank-1", "garbled")
            .pattern_rule(r"rank-1(.|\n)*rank-0", "garbled");
        let gw = gateway(mock);
        let ideas: Vec<_> = (0..3).map(|r| idea(&format!("id{r}"), &format!("rank-{r}"))).collect();
        let result = run_tournament(&gw, &ideas).unwrap();
        assert_eq!(result.skipped.len(), 1);
        assert_eq!(result.matches.len(), 2);
        let skipped_pair = &result.skipped[0];
        assert_eq!(
            (skipped_pair.idea_a.as_str(), skipped_pair.idea_b.as_str()),
            ("id0", "id1")
        );
        // Skipped matches leave games_played untouched.
        let games: u32 = result.ratings.iter().map(|r| r.games_played).sum();
        assert_eq!(games, 4);
    }

    #[test]
    fn round_robin_covers_every_unordered_pair_once() {
        let n = 21;
        let schedule = round_robin(n);
        assert_eq!(schedule.len(), n * (n - 1) / 2);
        let mut seen = std::collections::BTreeSet::new();
        for (i, j) in schedule {
            assert!(i < j);
            assert!(seen.insert((i, j)));
        }
    }

    #[test]
    fn select_top_sorts_and_breaks_ties() {
        let ratings = vec![
            EloRating { idea_id: "b".into(), rating: 1500.0, games_played: 2 },
            EloRating { idea_id: "a".into(), rating: 1516.0, games_played: 2 },
            EloRating { idea_id: "c".into(), rating: 1484.0, games_played: 2 },
        ];
        assert_eq!(select_top(&ratings, 3).unwrap(), vec!["a", "b", "c"]);
        assert_eq!(select_top(&ratings, 1).unwrap(), vec!["a"]);
        assert!(select_top(&ratings, 4).is_err());

        let tied = vec![
            EloRating { idea_id: "z".into(), rating: 1500.0, games_played: 1 },
            EloRating { idea_id: "y".into(), rating: 1500.0, games_played: 1 },
        ];
        assert_eq!(select_top(&tied, 2).unwrap(), vec!["y", "z"]);

        let tied_games = vec![
            EloRating { idea_id: "m".into(), rating: 1500.0, games_played: 3 },
            EloRating { idea_id: "n".into(), rating: 1500.0, games_played: 1 },
        ];
        // Fewer games ranks first at equal rating.
        assert_eq!(select_top(&tied_games, 2).unwrap(), vec!["n", "m"]);
    }

    #[test]
    fn select_top_invariant_under_affine_transform() {
        let ratings = vec![
            EloRating { idea_id: "a".into(), rating: 1520.0, games_played: 5 },
            EloRating { idea_id: "b".into(), rating: 1490.0, games_played: 5 },
            EloRating { idea_id: "c".into(), rating: 1505.0, games_played: 5 },
        ];
        let transformed: Vec<EloRating> = ratings
            .iter()
            .map(|r| EloRating {
                idea_id: r.idea_id.clone(),
                rating: 3.5 * r.rating + 200.0,
                games_played: r.games_played,
            })
            .collect();
        assert_eq!(
            select_top(&ratings, 3).unwrap(),
            select_top(&transformed, 3).unwrap()
        );
    }

    /// Presenting each pair in reversed positions must not change the final
    /// ranking when the judge is content-consistent.
    #[test]
    fn swap_symmetric_judging_is_position_independent() {
        let n = 5;
        let ideas: Vec<_> = (0..n).map(|r| idea(&format!("id{r}"), &format!("rank-{r}"))).collect();
        let forward = {
            let gw = gateway(total_order_mock(n));
            run_tournament(&gw, &ideas).unwrap()
        };
        let reversed = {
            let gw = gateway(total_order_mock(n));
            let flipped: Vec<_> = ideas.iter().cloned().rev().collect();
            run_tournament(&gw, &flipped).unwrap()
        };
        assert_eq!(
            select_top(&forward.ratings, n).unwrap(),
            select_top(&reversed.ratings, n).unwrap()
        );
    }

    #[test]
    fn proposal_parses_in_one_call() {
        let mock = ScriptedMockProgram::new(
            "BACKGROUND: b\nRELATED WORK: r\nMETHOD: m\nEXPERIMENTAL PLAN: p\nEXPECTED RESULTS: e",
        );
        let gw = gateway(mock);
        let goal = UserGoal::new("g", "the goal").unwrap();
        let (top, _) = idea("i1", "winning");
        let prop = extend_to_proposal(&gw, &goal, &top, &[]).unwrap();
        assert_eq!(prop.background, "b");
        assert_eq!(prop.expected_results, "e");
        assert_eq!(prop.source_idea_id, "i1");
        assert_eq!(gw.transcript().chat_entries("ideation").len(), 1);
    }

    #[test]
    fn missing_section_triggers_exactly_one_repair() {
        let mock = ScriptedMockProgram::new(
            "BACKGROUND: b\nRELATED WORK: r\nMETHOD: m\nEXPERIMENTAL PLAN: p",
        )
        .rule(
            "missing or left empty: EXPECTED RESULTS",
            "BACKGROUND: b\nRELATED WORK: r\nMETHOD: m\nEXPERIMENTAL PLAN: p\nEXPECTED RESULTS: e",
        );
        let gw = gateway(mock);
        let goal = UserGoal::new("g", "the goal").unwrap();
        let (top, _) = idea("i1", "winning");
        let prop = extend_to_proposal(&gw, &goal, &top, &[]).unwrap();
        assert_eq!(prop.expected_results, "e");
        assert_eq!(gw.transcript().chat_entries("ideation").len(), 2);
    }

    #[test]
    fn persistent_malformed_proposal_is_format_error() {
        let mock = ScriptedMockProgram::new("BACKGROUND: only this");
        let gw = gateway(mock);
        let goal = UserGoal::new("g", "the goal").unwrap();
        let (top, _) = idea("i1", "winning");
        assert!(matches!(
            extend_to_proposal(&gw, &goal, &top, &[]),
            Err(Error::Format(_))
        ));
        assert_eq!(gw.transcript().chat_entries("ideation").len(), 2);
    }
}
