//! JSON documents describing an MDP.
//!
//! ```json
//! {
//!   "states": ["s1", "s2"],
//!   "actions": ["a1"],
//!   "available": {"s1": ["a1"], "s2": ["a1"]},
//!   "transitions": [{"s": "s1", "a": "a1", "sp": "s2", "p": 1.0}],
//!   "rewards": [{"s": "s1", "a": "a1", "sp": "s2", "r": 3.0}],
//!   "initial": {"s1": 1.0},
//!   "horizon": 1
//! }
//! ```
//!
//! States and actions are indexed in lexicographic order of their ids.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{Mdp, MdpError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DocumentError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("parse error in '{field}': unknown {kind} '{name}'")]
    UnknownName {
        field: String,
        kind: &'static str,
        name: String,
    },
    #[error("parse error in '{field}': duplicate entry ({s}, {a}, {sp})")]
    Duplicate {
        field: &'static str,
        s: String,
        a: String,
        sp: String,
    },
    #[error("parse error in '{field}': duplicate id '{name}'")]
    DuplicateId { field: &'static str, name: String },
    #[error("validation error: {0}")]
    Validation(#[from] MdpError),
}

impl DocumentError {
    pub fn is_validation(&self) -> bool {
        matches!(self, DocumentError::Validation(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub s: String,
    pub a: String,
    pub sp: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardEntry {
    pub s: String,
    pub a: String,
    pub sp: String,
    pub r: f64,
}

fn default_horizon() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpDocument {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub available: Option<BTreeMap<String, Vec<String>>>,
    pub transitions: Vec<TransitionEntry>,
    pub rewards: Vec<RewardEntry>,
    pub initial: BTreeMap<String, f64>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

fn sorted_ids(field: &'static str, ids: &[String]) -> Result<Vec<String>, DocumentError> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id.clone()) {
            return Err(DocumentError::DuplicateId {
                field,
                name: id.clone(),
            });
        }
    }
    Ok(seen.into_iter().collect())
}

struct Names {
    states: BTreeSet<String>,
    actions: BTreeSet<String>,
}

impl Names {
    fn state(&self, field: &str, name: &str) -> Result<(), DocumentError> {
        if self.states.contains(name) {
            Ok(())
        } else {
            Err(DocumentError::UnknownName {
                field: field.to_string(),
                kind: "state",
                name: name.to_string(),
            })
        }
    }

    fn action(&self, field: &str, name: &str) -> Result<(), DocumentError> {
        if self.actions.contains(name) {
            Ok(())
        } else {
            Err(DocumentError::UnknownName {
                field: field.to_string(),
                kind: "action",
                name: name.to_string(),
            })
        }
    }

    fn triple(&self, field: &str, s: &str, a: &str, sp: &str) -> Result<(), DocumentError> {
        self.state(field, s)?;
        self.action(field, a)?;
        self.state(field, sp)
    }
}

impl MdpDocument {
    pub fn parse(text: &str) -> Result<Self, DocumentError> {
        serde_json::from_str(text).map_err(|e| DocumentError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_mdp(&self) -> Result<Mdp, DocumentError> {
        let states = sorted_ids("states", &self.states)?;
        let actions = sorted_ids("actions", &self.actions)?;
        let names = Names {
            states: states.iter().cloned().collect(),
            actions: actions.iter().cloned().collect(),
        };
        let mut b = Mdp::builder().horizon(self.horizon);
        for s in &states {
            b = b.state(s);
        }
        for a in &actions {
            b = b.action(a);
        }
        if let Some(available) = &self.available {
            for (s, acts) in available {
                names.state("available", s)?;
                for a in acts {
                    names.action("available", a)?;
                }
                let refs: Vec<&str> = acts.iter().map(String::as_str).collect();
                b = b.available(s, &refs);
            }
        }
        let mut seen = BTreeSet::new();
        for t in &self.transitions {
            names.triple("transitions", &t.s, &t.a, &t.sp)?;
            if !seen.insert((&t.s, &t.a, &t.sp)) {
                return Err(DocumentError::Duplicate {
                    field: "transitions",
                    s: t.s.clone(),
                    a: t.a.clone(),
                    sp: t.sp.clone(),
                });
            }
            b = b.probability(&t.s, &t.a, &t.sp, t.p);
        }
        let mut seen = BTreeSet::new();
        for r in &self.rewards {
            names.triple("rewards", &r.s, &r.a, &r.sp)?;
            if !seen.insert((&r.s, &r.a, &r.sp)) {
                return Err(DocumentError::Duplicate {
                    field: "rewards",
                    s: r.s.clone(),
                    a: r.a.clone(),
                    sp: r.sp.clone(),
                });
            }
            b = b.reward(&r.s, &r.a, &r.sp, r.r);
        }
        for (s, &p) in &self.initial {
            names.state("initial", s)?;
            b = b.initial(s, p);
        }
        Ok(b.build()?)
    }

    /// Document listing every positive-probability transition and every
    /// stored reward of `m`.
    pub fn from_mdp(m: &Mdp) -> Self {
        let mut transitions = Vec::new();
        let mut rewards = Vec::new();
        let mut available = BTreeMap::new();
        for s in 0..m.num_states() {
            let sn = m.state_name(s).to_string();
            available.insert(
                sn.clone(),
                m.available(s)
                    .iter()
                    .map(|&a| m.action_name(a).to_string())
                    .collect(),
            );
            for &a in m.available(s) {
                let an = m.action_name(a).to_string();
                for (sp, &p) in m.transition(s, a).iter().enumerate() {
                    let spn = m.state_name(sp).to_string();
                    if p > 0.0 {
                        transitions.push(TransitionEntry {
                            s: sn.clone(),
                            a: an.clone(),
                            sp: spn.clone(),
                            p,
                        });
                    }
                    if let Some(r) = m.reward(s, a, sp) {
                        rewards.push(RewardEntry {
                            s: sn.clone(),
                            a: an.clone(),
                            sp: spn,
                            r,
                        });
                    }
                }
            }
        }
        let initial = (0..m.num_states())
            .filter(|&s| m.initial()[s] > 0.0)
            .map(|s| (m.state_name(s).to_string(), m.initial()[s]))
            .collect();
        MdpDocument {
            states: m.states().to_vec(),
            actions: m.actions().to_vec(),
            available: Some(available),
            transitions,
            rewards,
            initial,
            horizon: m.horizon(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents always serialize")
    }
}

pub fn parse_mdp(text: &str) -> Result<Mdp, DocumentError> {
    MdpDocument::parse(text)?.to_mdp()
}

pub fn serialize_mdp(m: &Mdp) -> String {
    MdpDocument::from_mdp(m).to_json()
}

/// Reference MDPs shipped with the crate, by file name.
pub const BUNDLED: [(&str, &str); 3] = [
    ("mc.json", include_str!("../data/mc.json")),
    ("me.json", include_str!("../data/me.json")),
    ("m3.json", include_str!("../data/m3.json")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    let file = if name.ends_with(".json") {
        name.to_string()
    } else {
        format!("{name}.json")
    };
    BUNDLED.iter().find(|(n, _)| *n == file).map(|(_, text)| *text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::counterexamples::{build, CounterexampleSpec};

    #[test]
    fn bundled_files_match_the_builders() {
        let specs = [
            CounterexampleSpec::Mc,
            CounterexampleSpec::Me,
            CounterexampleSpec::m3(600.0, 0.5).unwrap(),
        ];
        for ((name, text), spec) in BUNDLED.iter().zip(specs) {
            let m = parse_mdp(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(m.validate().is_empty());
            assert_eq!(m, build(spec).unwrap(), "{name}");
        }
    }

    #[test]
    fn round_trip() {
        for (_, text) in BUNDLED {
            let m = parse_mdp(text).unwrap();
            assert_eq!(parse_mdp(&serialize_mdp(&m)).unwrap(), m);
        }
    }

    #[test]
    fn missing_row_is_a_validation_error() {
        let text = r#"{"states":["s"],"actions":["a","b"],"transitions":[{"s":"s","a":"a","sp":"s","p":1}],
            "rewards":[{"s":"s","a":"a","sp":"s","r":0}],"initial":{"s":1}}"#;
        let e = parse_mdp(text).unwrap_err();
        assert!(e.is_validation(), "{e}");
    }

    #[test]
    fn duplicates_and_unknown_keys_are_parse_errors() {
        let dup = r#"{"states":["s"],"actions":["a"],"transitions":[{"s":"s","a":"a","sp":"s","p":0.5},
            {"s":"s","a":"a","sp":"s","p":0.5}],"rewards":[{"s":"s","a":"a","sp":"s","r":0}],"initial":{"s":1}}"#;
        assert!(matches!(parse_mdp(dup), Err(DocumentError::Duplicate { .. })));
        let extra =
            r#"{"states":["s"],"actions":["a"],"transitions":[],"rewards":[],"initial":{},"gamma":1}"#;
        assert!(matches!(parse_mdp(extra), Err(DocumentError::Syntax { .. })));
        let unknown = r#"{"states":["s"],"actions":["a"],"transitions":[{"s":"s","a":"a","sp":"t","p":1}],
            "rewards":[],"initial":{"s":1}}"#;
        assert!(matches!(
            parse_mdp(unknown),
            Err(DocumentError::UnknownName { .. })
        ));
    }

    #[test]
    fn ids_are_sorted() {
        let text = r#"{"states":["z","b"],"actions":["a"],"transitions":[{"s":"z","a":"a","sp":"b","p":1},
            {"s":"b","a":"a","sp":"b","p":1}],"rewards":[{"s":"z","a":"a","sp":"b","r":1},
            {"s":"b","a":"a","sp":"b","r":2}],"initial":{"z":0.25,"b":0.75}}"#;
        let m = parse_mdp(text).unwrap();
        assert_eq!(m.states(), &["b".to_string(), "z".to_string()]);
        assert_eq!(m.initial(), &[0.75, 0.25]);
    }
}
