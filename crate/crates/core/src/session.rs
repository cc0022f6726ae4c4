//! Interactive rule discovery: an ordered action log over a rule builder,
//! with undo, content digests and headless replay.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boxes::{
    best_of, grid_search, join_rules, prune, Candidate, GridParams, Membership, PruneMode,
    PruneReport, Rect, RefusePolicy, RuleBuilder, RuleSet, SearchContext,
};
use crate::dataset::{ClassId, Dataset};
use crate::error::{Error, Result};
use crate::projection::{project_dataset, Polyline2D, ProjectionSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Accept {
        rect: Rect,
        #[serde(default)]
        class: Option<ClassId>,
    },
    /// Accept the best grid candidate, optionally restricted to one class.
    AcceptTop {
        #[serde(default)]
        class: Option<ClassId>,
    },
    Undo,
    Prune {
        min_cases: usize,
        mode: PruneMode,
    },
    Join,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Idle,
    CandidatesReady,
    Complete,
}

/// Everything needed to rebuild a session from its action log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub dataset: Dataset,
    pub spec: ProjectionSpec,
    pub grid: GridParams,
    pub membership: Membership,
    pub refuse_policy: RefusePolicy,
}

impl SessionConfig {
    pub fn new(dataset: Dataset, spec: ProjectionSpec, grid: GridParams) -> Self {
        SessionConfig {
            dataset,
            spec,
            membership: grid.membership,
            grid,
            refuse_policy: RefusePolicy::Refuse,
        }
    }
}

/// What a mutation produced, besides the new state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Outcome {
    Accepted { rule: String, covered: usize },
    Undone,
    Pruned(PruneReport),
    Joined { rules: usize },
}

#[derive(Debug, Clone)]
pub struct Session {
    pub config: SessionConfig,
    pub polylines: Vec<Polyline2D>,
    pub builder: RuleBuilder,
    pub undo: Vec<RuleBuilder>,
    pub log: Vec<Action>,
    pub status: Status,
}

impl Session {
    pub fn new(config: SessionConfig) -> Result<Session> {
        config.grid.check()?;
        let polylines = project_dataset(&config.dataset, &config.spec)?;
        let class_names = config
            .dataset
            .classes
            .iter()
            .map(|c| c.name.clone())
            .collect();
        let mut ruleset = RuleSet::empty(config.spec.clone(), class_names);
        ruleset.refuse_policy = config.refuse_policy;
        let builder = RuleBuilder::new(ruleset, polylines.len(), config.membership);
        let status = if builder.is_complete() {
            Status::Complete
        } else {
            Status::Idle
        };
        Ok(Session {
            config,
            polylines,
            builder,
            undo: Vec::new(),
            log: Vec::new(),
            status,
        })
    }

    pub fn ruleset(&self) -> &RuleSet {
        &self.builder.ruleset
    }

    pub fn remaining(&self) -> &[usize] {
        &self.builder.remaining
    }

    /// Remaining cases per class.
    pub fn remaining_per_class(&self) -> Vec<usize> {
        let mut out = vec![0; self.config.dataset.class_count()];
        for &i in &self.builder.remaining {
            out[self.config.dataset.cases[i].label] += 1;
        }
        out
    }

    /// SHA-256 over the rule set, the remaining cases and the undo depth.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.builder).expect("builder serializes"));
        h.update((self.undo.len() as u64).to_le_bytes());
        hex::encode(h.finalize())
    }

    /// Ranked grid candidates per class over the remaining cases.
    pub fn candidates(&mut self) -> Result<Vec<Vec<Candidate>>> {
        let ctx = SearchContext::new(&self.polylines, self.config.dataset.class_count());
        let ranked = grid_search(&ctx, &self.config.grid, &self.builder.remaining)?;
        if self.status == Status::Idle {
            self.status = Status::CandidatesReady;
        }
        Ok(ranked)
    }

    /// Applies `action` if `expected_digest` (when given) matches the current state.
    pub fn apply_checked(
        &mut self,
        action: Action,
        expected_digest: Option<&str>,
    ) -> Result<Outcome> {
        if let Some(expected) = expected_digest {
            let actual = self.digest();
            if expected != actual {
                return Err(Error::StaleDigest {
                    expected: expected.to_string(),
                    actual,
                });
            }
        }
        self.apply(action)
    }

    pub fn apply(&mut self, action: Action) -> Result<Outcome> {
        let before = self.builder.clone();
        let outcome = match &action {
            Action::Accept { rect, class } => self.accept(*rect, *class)?,
            Action::AcceptTop { class } => {
                let ctx = SearchContext::new(&self.polylines, self.config.dataset.class_count());
                let ranked = grid_search(&ctx, &self.config.grid, &self.builder.remaining)?;
                let best = match class {
                    Some(c) => ranked.get(*c).and_then(|r| r.first()).cloned(),
                    None => best_of(&ranked),
                }
                .ok_or_else(|| Error::Session("no candidate qualifies".into()))?;
                self.accept(best.rect, Some(best.class))?
            }
            Action::Undo => {
                let prev = self
                    .undo
                    .pop()
                    .ok_or_else(|| Error::Session("nothing to undo".into()))?;
                self.builder = prev;
                self.log.push(action);
                self.refresh_status();
                return Ok(Outcome::Undone);
            }
            Action::Prune { min_cases, mode } => {
                let (rs, report) =
                    prune(&self.builder.ruleset, *min_cases, *mode, &self.polylines)?;
                self.builder.ruleset = rs;
                Outcome::Pruned(report)
            }
            Action::Join => {
                self.builder.ruleset = join_rules(&self.builder.ruleset, &self.polylines);
                Outcome::Joined {
                    rules: self.builder.ruleset.rules.len(),
                }
            }
        };
        self.undo.push(before);
        self.log.push(action);
        self.refresh_status();
        Ok(outcome)
    }

    fn accept(&mut self, rect: Rect, class: Option<ClassId>) -> Result<Outcome> {
        let before = self.builder.remaining.len();
        let rule = self.builder.accept(rect, class, &self.polylines)?;
        Ok(Outcome::Accepted {
            rule: rule.name.clone(),
            covered: before - self.builder.remaining.len(),
        })
    }

    fn refresh_status(&mut self) {
        self.status = if self.builder.is_complete() {
            Status::Complete
        } else {
            Status::Idle
        };
    }

    /// Rebuilds a session by applying `actions` in order.
    pub fn replay(config: SessionConfig, actions: &[Action]) -> Result<Session> {
        let mut s = Session::new(config)?;
        for a in actions {
            s.apply(a.clone())?;
        }
        Ok(s)
    }

    /// The action log as JSON lines.
    pub fn log_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for a in &self.log {
            out.push_str(&serde_json::to_string(a)?);
            out.push('\n');
        }
        Ok(out)
    }
}

pub fn parse_log(text: &str) -> Result<Vec<Action>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{parse_csv, CsvSchema, MissingPolicy};

    fn toy() -> SessionConfig {
        let text = "1,1,a\n1,2,a\n2,1,a\n5,5,b\n5,6,b\n6,5,b\n3,3,a\n";
        let ds = parse_csv("toy", text, &CsvSchema::default(), MissingPolicy::Error).unwrap();
        let spec = ProjectionSpec::partial_dynamic(2).unwrap();
        SessionConfig::new(ds, spec, GridParams::new(1.0))
    }

    #[test]
    fn accept_undo_restores_state() {
        let mut s = Session::new(toy()).unwrap();
        let d0 = s.digest();
        let out = s.apply(Action::AcceptTop { class: None }).unwrap();
        assert!(matches!(out, Outcome::Accepted { covered, .. } if covered > 0));
        assert_ne!(s.digest(), d0);
        s.apply(Action::Undo).unwrap();
        assert_eq!(s.digest(), d0);
        assert_eq!(s.remaining().len(), 7);
        assert_eq!(s.log.len(), 2);
    }

    #[test]
    fn stale_digest_rejected() {
        let mut s = Session::new(toy()).unwrap();
        let err = s.apply_checked(Action::Join, Some("deadbeef")).unwrap_err();
        assert!(matches!(err, Error::StaleDigest { .. }));
        let d = s.digest();
        s.apply_checked(Action::Join, Some(&d)).unwrap();
    }

    #[test]
    fn log_round_trip() {
        let mut s = Session::new(toy()).unwrap();
        s.apply(Action::AcceptTop { class: Some(1) }).unwrap();
        s.apply(Action::Prune {
            min_cases: 1,
            mode: PruneMode::Refuse,
        })
        .unwrap();
        let text = s.log_jsonl().unwrap();
        let actions = parse_log(&text).unwrap();
        assert_eq!(actions, s.log);
        let r = Session::replay(toy(), &actions).unwrap();
        assert_eq!(
            r.ruleset().to_json().unwrap(),
            s.ruleset().to_json().unwrap()
        );
    }

    #[test]
    fn undo_on_empty_errors() {
        let mut s = Session::new(toy()).unwrap();
        assert!(matches!(s.apply(Action::Undo), Err(Error::Session(_))));
    }
}
