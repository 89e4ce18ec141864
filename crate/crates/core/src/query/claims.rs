use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_NEGATION_PREFIX: &str = "It is not the case that";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClaimError {
    #[error("template variable ⟨{0}⟩ has no binding")]
    UnboundVariable(String),
    #[error("unterminated variable in template {0:?}")]
    Unterminated(String),
    #[error("invalid claim template JSON: {0}")]
    Json(String),
}

/// Claim patterns with `⟨v⟩` placeholders and the values each variable
/// ranges over. Every pattern expands to the cross product of its
/// variables' bindings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimTemplate {
    pub patterns: Vec<String>,
    #[serde(default)]
    pub bindings: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negation_prefix: Option<String>,
}

impl ClaimTemplate {
    pub fn from_json(text: &str) -> Result<Self, ClaimError> {
        serde_json::from_str(text).map_err(|e| ClaimError::Json(e.to_string()))
    }

    pub fn negation_prefix(&self) -> &str {
        self.negation_prefix.as_deref().unwrap_or(DEFAULT_NEGATION_PREFIX)
    }
}

enum Segment<'a> {
    Text(&'a str),
    Var(&'a str),
}

fn parse_pattern(pattern: &str) -> Result<Vec<Segment<'_>>, ClaimError> {
    let mut segments = Vec::new();
    let mut rest = pattern;
    while let Some(open) = rest.find('⟨') {
        if open > 0 {
            segments.push(Segment::Text(&rest[..open]));
        }
        let after = &rest[open + '⟨'.len_utf8()..];
        let close = after
            .find('⟩')
            .ok_or_else(|| ClaimError::Unterminated(pattern.to_string()))?;
        segments.push(Segment::Var(&after[..close]));
        rest = &after[close + '⟩'.len_utf8()..];
    }
    if !rest.is_empty() {
        segments.push(Segment::Text(rest));
    }
    Ok(segments)
}

/// Lowercases the first letter so the claim reads naturally after the
/// negation prefix. Acronyms ("COVID is ...") are left alone.
fn decapitalize(claim: &str) -> String {
    let first_word = claim.split_whitespace().next().unwrap_or("");
    let letters: Vec<char> = first_word.chars().filter(|c| c.is_alphabetic()).collect();
    let acronym = letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase());
    let mut chars = claim.chars();
    match chars.next() {
        Some(c) if !acronym => c.to_lowercase().chain(chars).collect(),
        _ => claim.to_string(),
    }
}

/// Odometer step with the last position fastest; false once it wraps.
fn advance(choice: &mut [usize], values: &[&Vec<String>]) -> bool {
    for k in (0..choice.len()).rev() {
        choice[k] += 1;
        if choice[k] < values[k].len() {
            return true;
        }
        choice[k] = 0;
    }
    false
}

/// Expands every pattern in order. Within a pattern, variables are taken
/// in order of first appearance and the last one varies fastest.
pub fn expand_claims(template: &ClaimTemplate, negate: bool) -> Result<Vec<String>, ClaimError> {
    let mut claims = Vec::new();
    for pattern in &template.patterns {
        let segments = parse_pattern(pattern)?;
        let mut vars: Vec<&str> = Vec::new();
        for s in &segments {
            if let Segment::Var(v) = s {
                if !vars.contains(v) {
                    vars.push(v);
                }
            }
        }
        let values: Vec<&Vec<String>> = vars
            .iter()
            .map(|v| {
                template
                    .bindings
                    .get(*v)
                    .ok_or_else(|| ClaimError::UnboundVariable(v.to_string()))
            })
            .collect::<Result<_, _>>()?;
        if values.iter().any(|v| v.is_empty()) {
            continue;
        }

        let mut choice = vec![0usize; vars.len()];
        loop {
            let claim: String = segments
                .iter()
                .map(|s| match s {
                    Segment::Text(t) => *t,
                    Segment::Var(v) => {
                        let k = vars.iter().position(|x| x == v).expect("collected above");
                        values[k][choice[k]].as_str()
                    }
                })
                .collect();
            claims.push(if negate {
                format!("{} {}", template.negation_prefix(), decapitalize(&claim))
            } else {
                claim
            });

            if !advance(&mut choice, &values) {
                break;
            }
        }
    }
    Ok(claims)
}
