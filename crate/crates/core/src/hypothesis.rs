//! Tri-state ledger of the hypotheses behind an estimate.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Verified,
    Asserted,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HypothesisLog(pub Vec<Entry>);

impl HypothesisLog {
    pub fn new() -> Self {
        HypothesisLog(Vec::new())
    }

    pub fn push(&mut self, name: &str, status: Status, detail: impl Into<String>) {
        self.0.push(Entry {
            name: name.to_string(),
            status,
            detail: detail.into(),
        });
    }

    pub fn verified(&mut self, name: &str, detail: impl Into<String>) {
        self.push(name, Status::Verified, detail);
    }

    pub fn asserted(&mut self, name: &str, detail: impl Into<String>) {
        self.push(name, Status::Asserted, detail);
    }

    pub fn failed(&mut self, name: &str, detail: impl Into<String>) {
        self.push(name, Status::Failed, detail);
    }

    /// Records `Verified` or `Failed` and returns the condition.
    pub fn check(&mut self, name: &str, ok: bool, detail: impl Into<String>) -> bool {
        self.push(name, if ok { Status::Verified } else { Status::Failed }, detail);
        ok
    }

    pub fn extend(&mut self, other: &HypothesisLog) {
        self.0.extend(other.0.iter().cloned());
    }

    pub fn status_of(&self, name: &str) -> Option<Status> {
        self.0.iter().rev().find(|e| e.name == name).map(|e| e.status)
    }

    pub fn any_failed(&self) -> bool {
        self.0.iter().any(|e| e.status == Status::Failed)
    }

    pub fn failures(&self) -> Vec<&Entry> {
        self.0.iter().filter(|e| e.status == Status::Failed).collect()
    }
}
