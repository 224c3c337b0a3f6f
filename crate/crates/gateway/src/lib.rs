//! Single egress point for language-model calls: request shaping, a bound on
//! in-flight requests, retry with exponential backoff, a content-addressed
//! reply cache, and a scripted mock mode.

pub mod cache;
pub mod config;
pub mod mock;
pub mod transport;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use ctm_core::llm::{LanguageModel, LlmError, Prompt};
use rand::Rng;

pub use cache::{cache_key, CacheEntry, ReplyCache};
pub use config::{GatewayConfig, Mode};
pub use mock::MockScript;
pub use transport::{ChatRequest, HttpTransport, SendError, Transport};

/// Counting semaphore over a mutex and condvar.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Limiter {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("limiter");
        while *free == 0 {
            free = self.cv.wait(free).expect("limiter");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("limiter") += 1;
        self.0.cv.notify_one();
    }
}

/// Delay before retry `attempt` (1-based): base * 2^(attempt-1), stretched by
/// up to 25% jitter.
pub fn backoff_delay(base: Duration, attempt: u32, jitter: f64) -> Duration {
    let factor = 2f64.powi(attempt.saturating_sub(1) as i32);
    base.mul_f64(factor * (1.0 + 0.25 * jitter.clamp(0.0, 1.0)))
}

enum Backend {
    Live {
        transport: Box<dyn Transport>,
        cache: ReplyCache,
        limiter: Limiter,
    },
    Mock(MockScript),
}

pub struct Gateway {
    config: GatewayConfig,
    backend: Backend,
    requests: AtomicU64,
    cache_hits: AtomicU64,
}

impl Gateway {
    pub fn new(config: GatewayConfig) -> Result<Self, LlmError> {
        config.validate()?;
        match config.mode {
            Mode::Mock => {
                let script = MockScript::load(config.mock_script.as_deref().expect("validated"))?;
                Ok(Self::with_backend(config, Backend::Mock(script)))
            }
            Mode::Live => {
                let t = HttpTransport::new(
                    config.base_url.as_deref().expect("validated"),
                    config.api_key.clone(),
                    config.timeout,
                );
                Self::with_transport(config, Box::new(t))
            }
        }
    }

    /// Live gateway over any transport; used with fake endpoints in tests.
    pub fn with_transport(config: GatewayConfig, transport: Box<dyn Transport>) -> Result<Self, LlmError> {
        let cache = match &config.cache_dir {
            Some(d) => ReplyCache::on_disk(d).map_err(|e| LlmError::Config(format!("cache dir {}: {e}", d.display())))?,
            None => ReplyCache::in_memory(),
        };
        let limiter = Limiter::new(config.max_concurrent.max(1));
        Ok(Self::with_backend(
            config,
            Backend::Live {
                transport,
                cache,
                limiter,
            },
        ))
    }

    pub fn mock(script: MockScript) -> Self {
        Self::with_backend(
            GatewayConfig {
                mode: Mode::Mock,
                ..Default::default()
            },
            Backend::Mock(script),
        )
    }

    fn with_backend(config: GatewayConfig, backend: Backend) -> Self {
        Gateway {
            config,
            backend,
            requests: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    /// Network requests issued so far, retries included.
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::SeqCst)
    }

    fn send_with_retry(&self, transport: &dyn Transport, limiter: &Limiter, req: &ChatRequest) -> Result<String, LlmError> {
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            if attempt > 1 {
                let jitter = rand::rng().random::<f64>();
                std::thread::sleep(backoff_delay(self.config.backoff_base, attempt - 1, jitter));
            }
            let outcome = {
                let _permit = limiter.acquire();
                self.requests.fetch_add(1, Ordering::SeqCst);
                transport.send(req)
            };
            match outcome {
                Ok(reply) => return Ok(reply),
                Err(SendError::Transient(m)) => last = m,
                Err(SendError::Fatal(m)) => return Err(LlmError::Rejected(m)),
                Err(SendError::Malformed(m)) => return Err(LlmError::Malformed(m)),
            }
        }
        Err(LlmError::Exhausted { attempts, last })
    }
}

impl LanguageModel for Gateway {
    fn complete(&self, prompt: &Prompt) -> Result<String, LlmError> {
        match &self.backend {
            Backend::Mock(script) => script.reply(prompt),
            Backend::Live {
                transport,
                cache,
                limiter,
            } => {
                let key = cache_key(&self.config.model_name, prompt, self.config.temperature);
                if let Some(hit) = cache.get(&key) {
                    self.cache_hits.fetch_add(1, Ordering::SeqCst);
                    return Ok(hit);
                }
                let req = ChatRequest::new(&self.config.model_name, prompt, self.config.temperature);
                let reply = self.send_with_retry(transport.as_ref(), limiter, &req)?;
                cache
                    .put(&key, &reply)
                    .map_err(|e| LlmError::Config(format!("cache write: {e}")))
            }
        }
    }
}
