use std::fmt;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::gateway::{ChatBackend, ChatExchange};
use crate::prompts;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Proactiveness,
    Accuracy,
    Practicality,
    Overall,
}

impl Dimension {
    pub const ALL: [Dimension; 4] =
        [Dimension::Proactiveness, Dimension::Accuracy, Dimension::Practicality, Dimension::Overall];
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dimension::Proactiveness => "proactiveness",
            Dimension::Accuracy => "accuracy",
            Dimension::Practicality => "practicality",
            Dimension::Overall => "overall",
        })
    }
}

/// Outcome for the first output of the pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Win,
    Loss,
    Tie,
}

impl Verdict {
    pub fn inverted(self) -> Self {
        match self {
            Verdict::Win => Verdict::Loss,
            Verdict::Loss => Verdict::Win,
            Verdict::Tie => Verdict::Tie,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseOutcome {
    pub case_id: String,
    pub dimension: Dimension,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pick {
    First,
    Second,
    Tie,
}

fn parse_pick(reply: &str) -> Option<Pick> {
    let token = reply.trim().trim_matches(|c: char| !c.is_alphanumeric()).to_uppercase();
    match token.as_str() {
        "A" | "OUTPUT A" => Some(Pick::First),
        "B" | "OUTPUT B" => Some(Pick::Second),
        "TIE" => Some(Pick::Tie),
        _ => None,
    }
}

fn ask(first: &str, second: &str, dimension: Dimension, judge: &dyn ChatBackend) -> Result<Pick, EvalError> {
    let exchange = ChatExchange::new(prompts::judge_system(&dimension.to_string()), prompts::judge_user(first, second));
    let mut last = String::new();
    for _ in 0..2 {
        let reply = judge.chat(exchange.clone())?;
        if let Some(pick) = parse_pick(reply.response_text()) {
            return Ok(pick);
        }
        last = reply.response_text().to_string();
    }
    Err(EvalError::UnparseableVerdict(last))
}

/// Judges `(a, b)` and `(b, a)`; `a` wins only if both orders prefer it,
/// otherwise a split decision is a tie.
pub fn pairwise_judge(
    case_id: &str,
    output_a: &str,
    output_b: &str,
    dimension: Dimension,
    judge: &dyn ChatBackend,
) -> Result<PairwiseOutcome, EvalError> {
    let forward = ask(output_a, output_b, dimension, judge)?;
    let backward = ask(output_b, output_a, dimension, judge)?;
    let verdict = match (forward, backward) {
        (Pick::First, Pick::Second) => Verdict::Win,
        (Pick::Second, Pick::First) => Verdict::Loss,
        _ => Verdict::Tie,
    };
    Ok(PairwiseOutcome { case_id: case_id.to_string(), dimension, verdict })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WinTieLoss {
    pub win: usize,
    pub tie: usize,
    pub loss: usize,
}

impl WinTieLoss {
    pub fn tally<'a>(outcomes: impl IntoIterator<Item = &'a PairwiseOutcome>) -> Self {
        let mut t = Self::default();
        for o in outcomes {
            match o.verdict {
                Verdict::Win => t.win += 1,
                Verdict::Tie => t.tie += 1,
                Verdict::Loss => t.loss += 1,
            }
        }
        t
    }
}
