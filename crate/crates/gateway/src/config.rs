use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use ctm_core::llm::LlmError;

pub const ENV_BASE_URL: &str = "CTM_LLM_BASE_URL";
pub const ENV_API_KEY: &str = "CTM_LLM_API_KEY";
pub const ENV_MODEL: &str = "CTM_LLM_MODEL";
pub const ENV_CACHE_DIR: &str = "CTM_CACHE_DIR";
pub const ENV_MODE: &str = "CTM_LLM_MODE";
pub const ENV_MOCK_SCRIPT: &str = "CTM_LLM_MOCK_SCRIPT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Live,
    Mock,
}

impl FromStr for Mode {
    type Err = LlmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "live" => Ok(Mode::Live),
            "mock" => Ok(Mode::Mock),
            other => Err(LlmError::Config(format!("unknown mode `{other}` (expected live or mock)"))),
        }
    }
}

#[derive(Clone)]
pub struct GatewayConfig {
    pub base_url: Option<String>,
    pub api_key: Option<String>,
    pub model_name: String,
    pub max_concurrent: usize,
    pub max_retries: u32,
    pub timeout: Duration,
    pub temperature: f64,
    pub cache_dir: Option<PathBuf>,
    pub mode: Mode,
    pub mock_script: Option<PathBuf>,
    /// First retry delay; doubles on every further attempt.
    pub backoff_base: Duration,
}

impl std::fmt::Debug for GatewayConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GatewayConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("model_name", &self.model_name)
            .field("max_concurrent", &self.max_concurrent)
            .field("max_retries", &self.max_retries)
            .field("timeout", &self.timeout)
            .field("temperature", &self.temperature)
            .field("cache_dir", &self.cache_dir)
            .field("mode", &self.mode)
            .field("mock_script", &self.mock_script)
            .finish()
    }
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            base_url: None,
            api_key: None,
            model_name: "llama-3.1-8b-instruct".to_string(),
            max_concurrent: 4,
            max_retries: 3,
            timeout: Duration::from_secs(60),
            temperature: 0.0,
            cache_dir: None,
            mode: Mode::Live,
            mock_script: None,
            backoff_base: Duration::from_secs(1),
        }
    }
}

impl GatewayConfig {
    pub fn live(base_url: impl Into<String>) -> Self {
        GatewayConfig {
            base_url: Some(base_url.into()),
            ..Default::default()
        }
    }

    pub fn mock(script: impl Into<PathBuf>) -> Self {
        GatewayConfig {
            mode: Mode::Mock,
            mock_script: Some(script.into()),
            ..Default::default()
        }
    }

    /// Reads the `CTM_LLM_*` and `CTM_CACHE_DIR` variables. Returns `None`
    /// when neither a mode nor a base URL is set.
    pub fn from_env() -> Result<Option<Self>, LlmError> {
        Self::from_lookup(|k| std::env::var(k).ok().filter(|v| !v.trim().is_empty()))
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Option<Self>, LlmError> {
        let mode = get(ENV_MODE).map(|m| m.parse()).transpose()?;
        let base_url = get(ENV_BASE_URL);
        if mode.is_none() && base_url.is_none() {
            return Ok(None);
        }
        let mut c = GatewayConfig {
            base_url,
            api_key: get(ENV_API_KEY),
            cache_dir: get(ENV_CACHE_DIR).map(PathBuf::from),
            mode: mode.unwrap_or(Mode::Live),
            mock_script: get(ENV_MOCK_SCRIPT).map(PathBuf::from),
            ..Default::default()
        };
        if let Some(m) = get(ENV_MODEL) {
            c.model_name = m;
        }
        c.validate()?;
        Ok(Some(c))
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        match self.mode {
            Mode::Mock if self.mock_script.is_none() => {
                Err(LlmError::Config(format!("mock mode needs {ENV_MOCK_SCRIPT}")))
            }
            Mode::Live if self.base_url.is_none() => Err(LlmError::Config(format!("live mode needs {ENV_BASE_URL}"))),
            _ if self.max_concurrent == 0 => Err(LlmError::Config("max_concurrent must be positive".into())),
            _ if self.model_name.trim().is_empty() => Err(LlmError::Config("model name is empty".into())),
            _ => Ok(()),
        }
    }
}
