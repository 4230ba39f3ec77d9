use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orchestrator::TriggerPattern;

pub const DEFAULT_EPSILON: f64 = 0.05;

/// Optimal-pattern label for a cell or a recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PatternLabel {
    One(TriggerPattern),
    /// Two patterns within epsilon of each other, ahead of the third.
    Pair(TriggerPattern, TriggerPattern),
    Similar,
}

impl PatternLabel {
    /// Grid-cell rule: every pattern within `epsilon` (relative) of the
    /// fastest shares the label; all of three sharing it is "similar".
    pub fn for_cell(means: &[(TriggerPattern, f64)], epsilon: f64) -> Result<Self> {
        let min = means
            .iter()
            .map(|m| m.1)
            .min_by(f64::total_cmp)
            .ok_or(Error::Empty("pattern means"))?;
        let mut close: Vec<TriggerPattern> = means
            .iter()
            .filter(|m| m.1 <= min * (1.0 + epsilon))
            .map(|m| m.0)
            .collect();
        close.sort();
        Ok(match close.as_slice() {
            [one] => PatternLabel::One(*one),
            [a, b] => PatternLabel::Pair(*a, *b),
            _ => PatternLabel::Similar,
        })
    }

    pub fn contains(&self, p: TriggerPattern) -> bool {
        match *self {
            PatternLabel::One(x) => x == p,
            PatternLabel::Pair(a, b) => a == p || b == p,
            PatternLabel::Similar => true,
        }
    }
}

impl fmt::Display for PatternLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternLabel::One(p) => write!(f, "{p}"),
            PatternLabel::Pair(a, b) => write!(f, "{a}/{b}"),
            PatternLabel::Similar => f.write_str("similar"),
        }
    }
}

impl FromStr for PatternLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "similar" {
            return Ok(PatternLabel::Similar);
        }
        match s.split_once('/') {
            Some((a, b)) => Ok(PatternLabel::Pair(a.parse()?, b.parse()?)),
            None => Ok(PatternLabel::One(s.parse()?)),
        }
    }
}

/// Patterns ranked by makespan with the recommendation label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    /// Fastest first.
    pub ranking: Vec<(TriggerPattern, f64)>,
    /// "similar" when the relative spread is below epsilon, else the fastest.
    pub label: PatternLabel,
    pub spread: f64,
}

/// Ranks patterns by makespan (or any smaller-is-better score).
pub fn rank(scores: &[(TriggerPattern, f64)], epsilon: f64) -> Result<Recommendation> {
    let mut ranking = scores.to_vec();
    ranking.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let (best, worst) = match (ranking.first(), ranking.last()) {
        (Some(b), Some(w)) => (*b, *w),
        _ => return Err(Error::Empty("pattern scores")),
    };
    let spread = if best.1 > 0.0 { (worst.1 - best.1) / best.1 } else { 0.0 };
    let label = if ranking.len() > 1 && spread < epsilon {
        PatternLabel::Similar
    } else {
        PatternLabel::One(best.0)
    };
    Ok(Recommendation { ranking, label, spread })
}

#[cfg(test)]
mod tests {
    use super::*;
    use TriggerPattern::*;

    #[test]
    fn cell_labels() {
        assert_eq!(PatternLabel::for_cell(&[(P, 10.0), (C, 14.0), (M, 18.0)], 0.05).unwrap(), PatternLabel::One(P));
        assert_eq!(PatternLabel::for_cell(&[(P, 10.0), (C, 10.2)], 0.05).unwrap(), PatternLabel::Pair(P, C));
        assert_eq!(PatternLabel::for_cell(&[(M, 10.0), (C, 10.4), (P, 10.1)], 0.05).unwrap(), PatternLabel::Similar);
        assert_eq!(PatternLabel::for_cell(&[(M, 10.0), (C, 10.4), (P, 19.0)], 0.05).unwrap(), PatternLabel::Pair(C, M));
        assert!(PatternLabel::for_cell(&[], 0.05).is_err());
    }

    #[test]
    fn label_text_round_trip() {
        for l in [PatternLabel::One(M), PatternLabel::Pair(P, C), PatternLabel::Similar] {
            assert_eq!(l.to_string().parse::<PatternLabel>().unwrap(), l);
        }
        assert_eq!(PatternLabel::Pair(P, C).to_string(), "P/C");
    }

    #[test]
    fn ranking_and_similarity() {
        let r = rank(&[(C, 12.0), (P, 10.0), (M, 20.0)], 0.05).unwrap();
        assert_eq!(r.ranking[0].0, P);
        assert_eq!(r.label, PatternLabel::One(P));
        let r = rank(&[(C, 10.3), (P, 10.0), (M, 10.4)], 0.05).unwrap();
        assert_eq!(r.label, PatternLabel::Similar);
    }
}
