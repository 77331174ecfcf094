//! Component rule files: `{"rules": [{"label": .., "pattern": ..}, ...]}`.
//! Each masked tensor belongs to the first rule whose glob matches its name.

use std::path::Path;

use glob::Pattern;
use serde::Deserialize;
use sparsity_core::{ComponentRule, NameMatcher};

use crate::error::{Error, Result};
use crate::filter::compile;

/// Query, key, value, attention output, feed-forward in and out, and a
/// catch-all, for BERT-style tensor names.
pub const DEFAULT_TRANSFORMER_RULES: &str = include_str!("../rules/transformer.json");

#[derive(Debug, Clone)]
pub struct GlobMatcher(Pattern);

impl NameMatcher for GlobMatcher {
    fn matches(&self, name: &str) -> bool {
        self.0.matches(name)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RulesJson {
    rules: Vec<RuleJson>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleJson {
    label: String,
    pattern: String,
}

pub fn parse_rules(text: &str) -> Result<Vec<ComponentRule<GlobMatcher>>> {
    let doc: RulesJson = serde_json::from_str(text).map_err(|e| Error::Rules(e.to_string()))?;
    if doc.rules.is_empty() {
        return Err(Error::Rules("no rules".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    doc.rules
        .into_iter()
        .map(|r| {
            if !seen.insert(r.label.clone()) {
                return Err(Error::Rules(format!("duplicate label '{}'", r.label)));
            }
            Ok(ComponentRule {
                matcher: GlobMatcher(compile(&r.pattern)?),
                label: r.label,
            })
        })
        .collect()
}

pub fn read_rules(path: &Path) -> Result<Vec<ComponentRule<GlobMatcher>>> {
    let text = std::fs::read_to_string(path).map_err(Error::file(path))?;
    parse_rules(&text)
}

pub fn default_rules() -> Vec<ComponentRule<GlobMatcher>> {
    parse_rules(DEFAULT_TRANSFORMER_RULES).expect("bundled rules parse")
}
