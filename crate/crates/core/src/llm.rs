//! Language-model abstraction used by the judge metric and the LLM perturbation
//! engine. Network access lives in the gateway crate; this module only knows
//! prompts and replies.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum LlmError {
    #[error("language model not configured: {0}")]
    Config(String),
    #[error("no mock rule matches prompt: {0}")]
    NoMockMatch(String),
    #[error("malformed endpoint reply: {0}")]
    Malformed(String),
    #[error("request failed after {attempts} attempt(s): {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("request rejected: {0}")]
    Rejected(String),
}

/// A system + user message pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

/// Anything that turns a prompt into a reply. Implementations must be
/// deterministic for a fixed prompt when used for reproducible runs.
pub trait LanguageModel: Send + Sync {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError>;
}

/// A versioned prompt asset: `### system` and `### user` sections with
/// `{name}` placeholders. Leading `#` lines are header comments.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub name: &'static str,
    pub version: u32,
    system: String,
    user: String,
}

impl PromptTemplate {
    pub fn parse(name: &'static str, version: u32, source: &str) -> Self {
        let body = source
            .lines()
            .skip_while(|l| l.starts_with('#') && !l.starts_with("###"))
            .collect::<Vec<_>>()
            .join("\n");
        let (system, user) = body
            .split_once("### user")
            .expect("prompt asset has a user section");
        let system = system
            .trim_start()
            .strip_prefix("### system")
            .expect("prompt asset starts with a system section");
        PromptTemplate {
            name,
            version,
            system: system.trim().to_string(),
            user: user.trim_start_matches('\n').to_string(),
        }
    }

    pub fn render(&self, vars: &[(&str, &str)]) -> Prompt {
        let mut user = self.user.clone();
        for (key, value) in vars {
            user = user.replace(&format!("{{{key}}}"), value);
        }
        Prompt {
            system: self.system.clone(),
            user,
        }
    }
}

pub fn green_judge_template() -> PromptTemplate {
    PromptTemplate::parse("green_judge", 1, include_str!("../prompts/green_judge.v1.txt"))
}

pub fn rephrase_template() -> PromptTemplate {
    PromptTemplate::parse("rephrase", 1, include_str!("../prompts/rephrase.v1.txt"))
}

pub fn rephrase_retry_template() -> PromptTemplate {
    PromptTemplate::parse(
        "rephrase_retry",
        1,
        include_str!("../prompts/rephrase_retry.v1.txt"),
    )
}

pub fn inject_template() -> PromptTemplate {
    PromptTemplate::parse("inject", 1, include_str!("../prompts/inject.v1.txt"))
}

/// Pulls the text between the `<<<`/`>>>` fence that follows `label` in a
/// rendered prompt.
pub fn fenced_section<'a>(user: &'a str, label: &str) -> Option<&'a str> {
    let after = &user[user.find(label)? + label.len()..];
    let open = after.find("<<<\n")? + 4;
    let close = after[open..].find("\n>>>")?;
    Some(&after[open..open + close])
}
