//! Scripted replies for offline runs.
//!
//! A script is TOML with ordered `[[rule]]` tables. Each rule has a regex
//! `pattern`, tested against the system message, a newline and the user
//! message, and either a fixed `reply` or `echo = "LABEL:"`, which returns the
//! fenced block that follows `LABEL:` in the user message. First match wins.

use std::path::Path;

use ctm_core::llm::{fenced_section, LlmError, Prompt};
use regex::Regex;
use serde::Deserialize;

#[derive(Deserialize)]
struct RawScript {
    #[serde(default)]
    rule: Vec<RawRule>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    pattern: String,
    reply: Option<String>,
    echo: Option<String>,
}

#[derive(Debug, Clone)]
enum Reply {
    Fixed(String),
    Echo(String),
}

#[derive(Debug, Clone)]
struct Rule {
    pattern: Regex,
    reply: Reply,
}

#[derive(Debug, Clone)]
pub struct MockScript {
    rules: Vec<Rule>,
}

impl MockScript {
    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let raw: RawScript = toml::from_str(text).map_err(|e| LlmError::Config(format!("mock script: {e}")))?;
        let rules = raw
            .rule
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                let pattern = Regex::new(&r.pattern)
                    .map_err(|e| LlmError::Config(format!("mock rule {}: {e}", i + 1)))?;
                let reply = match (r.reply, r.echo) {
                    (Some(text), None) => Reply::Fixed(text),
                    (None, Some(label)) => Reply::Echo(label),
                    _ => {
                        return Err(LlmError::Config(format!(
                            "mock rule {} needs exactly one of `reply` or `echo`",
                            i + 1
                        )))
                    }
                };
                Ok(Rule { pattern, reply })
            })
            .collect::<Result<_, _>>()?;
        Ok(MockScript { rules })
    }

    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Config(format!("mock script {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn reply(&self, prompt: &Prompt) -> Result<String, LlmError> {
        let haystack = format!("{}\n{}", prompt.system, prompt.user);
        let rule = self
            .rules
            .iter()
            .find(|r| r.pattern.is_match(&haystack))
            .ok_or_else(|| LlmError::NoMockMatch(first_line(&prompt.user)))?;
        match &rule.reply {
            Reply::Fixed(t) => Ok(t.clone()),
            Reply::Echo(label) => fenced_section(&prompt.user, label)
                .map(str::to_string)
                .ok_or_else(|| LlmError::Malformed(format!("no `{label}` block to echo"))),
        }
    }
}

fn first_line(s: &str) -> String {
    s.lines().next().unwrap_or_default().chars().take(80).collect()
}
