//! Keyword spotting over transcripts.
//!
//! A rule fires when every one of its keywords appears as a whole token
//! (case-insensitive). Among firing rules the one with the most keywords wins;
//! ties go to the rule listed first.

use serde::{Deserialize, Serialize};

use super::Transcript;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntentKind {
    Hug,
    Enroll,
    GoTo { place: String },
    Move { direction: String },
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intent {
    pub kind: IntentKind,
    pub matched_keywords: Vec<String>,
}

impl Intent {
    pub fn unknown() -> Self {
        Intent {
            kind: IntentKind::Unknown,
            matched_keywords: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleIntent {
    Hug,
    Enroll,
    GoTo,
    Move,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentRule {
    pub keywords: Vec<String>,
    pub intent: RuleIntent,
    /// Keyword after which the remaining tokens form the slot value
    /// (place name or direction). Rules with a slot need a non-empty value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot_after: Option<String>,
}

impl IntentRule {
    pub fn new(keywords: &[&str], intent: RuleIntent) -> Self {
        IntentRule {
            keywords: keywords.iter().map(|k| k.to_lowercase()).collect(),
            intent,
            slot_after: None,
        }
    }

    pub fn with_slot(mut self, after: &str) -> Self {
        self.slot_after = Some(after.to_lowercase());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentTable {
    pub rules: Vec<IntentRule>,
}

impl Default for IntentTable {
    fn default() -> Self {
        IntentTable {
            rules: vec![
                IntentRule::new(&["hug"], RuleIntent::Hug),
                IntentRule::new(&["add", "person"], RuleIntent::Enroll),
                IntentRule::new(&["enroll"], RuleIntent::Enroll),
                IntentRule::new(&["go", "to"], RuleIntent::GoTo).with_slot("to"),
                IntentRule::new(&["move"], RuleIntent::Move).with_slot("move"),
            ],
        }
    }
}

const FILLER: &[&str] = &["the", "a", "an", "my", "please"];

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn slot_value(tokens: &[String], after: &str) -> Option<String> {
    let pos = tokens.iter().position(|t| t == after)?;
    let rest: Vec<&str> = tokens[pos + 1..]
        .iter()
        .map(String::as_str)
        .skip_while(|t| FILLER.contains(t))
        .filter(|t| *t != "please")
        .collect();
    (!rest.is_empty()).then(|| rest.join(" "))
}

pub fn match_intent(t: &Transcript, table: &IntentTable) -> Intent {
    let tokens = tokenize(&t.text);
    let mut best: Option<(usize, Intent)> = None;
    for rule in &table.rules {
        if rule.keywords.is_empty()
            || !rule
                .keywords
                .iter()
                .all(|k| tokens.iter().any(|t| t == &k.to_lowercase()))
        {
            continue;
        }
        let slot = match &rule.slot_after {
            Some(after) => match slot_value(&tokens, after) {
                Some(v) => Some(v),
                None => continue,
            },
            None => None,
        };
        let kind = match rule.intent {
            RuleIntent::Hug => IntentKind::Hug,
            RuleIntent::Enroll => IntentKind::Enroll,
            RuleIntent::GoTo => IntentKind::GoTo {
                place: slot.unwrap_or_default(),
            },
            RuleIntent::Move => IntentKind::Move {
                direction: slot.unwrap_or_default(),
            },
        };
        let n = rule.keywords.len();
        if best.as_ref().is_none_or(|(m, _)| n > *m) {
            best = Some((
                n,
                Intent {
                    kind,
                    matched_keywords: rule.keywords.clone(),
                },
            ));
        }
    }
    best.map(|(_, i)| i).unwrap_or_else(Intent::unknown)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(text: &str) -> Intent {
        match_intent(&Transcript::from_text(text, 0.9), &IntentTable::default())
    }

    #[test]
    fn hug() {
        let i = m("give me a hug");
        assert_eq!(i.kind, IntentKind::Hug);
        assert_eq!(i.matched_keywords, vec!["hug"]);
        assert_eq!(m("Give me a HUG!").kind, IntentKind::Hug);
    }

    #[test]
    fn enroll() {
        let i = m("please add a new person");
        assert_eq!(i.kind, IntentKind::Enroll);
        assert_eq!(i.matched_keywords, vec!["add", "person"]);
    }

    #[test]
    fn unknown_and_partial_tokens() {
        assert_eq!(m("blorp"), Intent::unknown());
        assert_eq!(m("hugging is nice").kind, IntentKind::Unknown);
        assert_eq!(m("").kind, IntentKind::Unknown);
    }

    #[test]
    fn goto_captures_place() {
        assert_eq!(
            m("go to the kitchen").kind,
            IntentKind::GoTo {
                place: "kitchen".into()
            }
        );
        assert_eq!(m("go to").kind, IntentKind::Unknown);
        assert_eq!(
            m("move forward please").kind,
            IntentKind::Move {
                direction: "forward".into()
            }
        );
    }

    #[test]
    fn most_specific_then_table_order() {
        let table = IntentTable {
            rules: vec![
                IntentRule::new(&["person"], RuleIntent::Hug),
                IntentRule::new(&["add", "person"], RuleIntent::Enroll),
                IntentRule::new(&["add", "person"], RuleIntent::Hug),
            ],
        };
        let i = match_intent(&Transcript::from_text("add this person", 1.0), &table);
        assert_eq!(i.kind, IntentKind::Enroll);
    }

    #[test]
    fn known_intents_carry_keywords() {
        for text in ["hug me", "go to the lab", "enroll", "move left", "nothing here"] {
            let i = m(text);
            assert!(i.kind == IntentKind::Unknown || !i.matched_keywords.is_empty());
        }
    }
}
