//! Chat-completion transport with retry and an optional transcript.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::LlmError;

#[derive(Debug, Clone, PartialEq)]
pub struct LlmConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the api key.
    pub api_key_env: String,
    pub max_retries: u32,
    pub timeout: Duration,
    pub temperature: f64,
    /// Upper bound on in-flight requests per client.
    pub parallelism: usize,
    /// First retry delay; doubles on each further attempt.
    pub backoff_base: Duration,
    /// Append every prompt/response pair here as JSON lines.
    pub transcript: Option<PathBuf>,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            base_url: "https://api.openai.com/v1".to_string(),
            model: "gpt-4o".to_string(),
            api_key_env: "LLM_API_KEY".to_string(),
            max_retries: 3,
            timeout: Duration::from_secs(60),
            temperature: 0.0,
            parallelism: 4,
            backoff_base: Duration::from_millis(500),
            transcript: None,
        }
    }
}

impl LlmConfig {
    /// Defaults overridden by `LLM_BASE_URL` and `LLM_MODEL` when set.
    pub fn from_env() -> Self {
        let mut cfg = LlmConfig::default();
        if let Ok(url) = std::env::var("LLM_BASE_URL") {
            cfg.base_url = url;
        }
        if let Ok(model) = std::env::var("LLM_MODEL") {
            cfg.model = model;
        }
        cfg
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

/// Outcome of one HTTP exchange.
#[derive(Debug, Clone, PartialEq)]
pub enum TransportOutcome {
    Response { status: u16, body: String },
    Timeout,
    Failed(String),
}

/// One POST of a JSON body with a bearer token.
pub trait ChatTransport: Send + Sync {
    fn post(&self, url: &str, bearer: &str, body: &str, timeout: Duration) -> TransportOutcome;
}

#[derive(Debug, Default)]
pub struct UreqTransport;

impl ChatTransport for UreqTransport {
    fn post(&self, url: &str, bearer: &str, body: &str, timeout: Duration) -> TransportOutcome {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let result = agent
            .post(url)
            .header("Content-Type", "application/json")
            .header("Authorization", &format!("Bearer {bearer}"))
            .send(body);
        match result {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                match resp.body_mut().read_to_string() {
                    Ok(body) => TransportOutcome::Response { status, body },
                    Err(ureq::Error::Timeout(_)) => TransportOutcome::Timeout,
                    Err(e) => TransportOutcome::Failed(e.to_string()),
                }
            }
            Err(ureq::Error::Timeout(_)) => TransportOutcome::Timeout,
            Err(e) => TransportOutcome::Failed(e.to_string()),
        }
    }
}

/// Counting gate bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.free.lock().expect("gate lock");
            while *free == 0 {
                free = self.cv.wait(free).expect("gate lock");
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().expect("gate lock") += 1;
        self.cv.notify_one();
        out
    }
}

pub struct LlmClient {
    cfg: LlmConfig,
    transport: Box<dyn ChatTransport>,
    gate: Gate,
    transcript: Option<Mutex<File>>,
}

impl LlmClient {
    pub fn new(cfg: LlmConfig) -> Result<Self, LlmError> {
        Self::with_transport(cfg, Box::new(UreqTransport))
    }

    pub fn with_transport(
        cfg: LlmConfig,
        transport: Box<dyn ChatTransport>,
    ) -> Result<Self, LlmError> {
        let transcript = match &cfg.transcript {
            Some(path) => Some(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| {
                        LlmError::Transport(format!("transcript {}: {e}", path.display()))
                    })?,
            )),
            None => None,
        };
        Ok(LlmClient {
            gate: Gate::new(cfg.parallelism),
            cfg,
            transport,
            transcript,
        })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.cfg
    }

    fn journal(&self, prompt: &str, response: &str) {
        if let Some(file) = &self.transcript {
            let line = json!({"model": self.cfg.model, "prompt": prompt, "response": response});
            let mut f = file.lock().expect("transcript lock");
            if let Err(e) = writeln!(f, "{line}") {
                log::warn!("transcript write failed: {e}");
            }
        }
    }

    /// Send one user message and return the reply text.
    pub fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let key = std::env::var(&self.cfg.api_key_env).map_err(|_| {
            LlmError::Auth(format!(
                "environment variable {} is not set",
                self.cfg.api_key_env
            ))
        })?;
        let body = json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": [{"role": "user", "content": prompt}],
        })
        .to_string();
        let url = self.cfg.endpoint();

        let mut last = LlmError::Transport("no attempt made".into());
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                let delay = self.cfg.backoff_base * 2u32.saturating_pow(attempt - 1);
                log::info!(
                    "retrying in {delay:?} (attempt {} of {})",
                    attempt + 1,
                    self.cfg.max_retries + 1
                );
                std::thread::sleep(delay);
            }
            log::debug!(
                "POST {url} model={} attempt {}",
                self.cfg.model,
                attempt + 1
            );
            let outcome = self
                .gate
                .run(|| self.transport.post(&url, &key, &body, self.cfg.timeout));
            last = match outcome {
                TransportOutcome::Response {
                    status: 200..=299,
                    body,
                } => {
                    let text = extract_content(&body)?;
                    self.journal(prompt, &text);
                    return Ok(text);
                }
                TransportOutcome::Response {
                    status: 401 | 403, ..
                } => {
                    return Err(LlmError::Auth("endpoint rejected the api key".into()));
                }
                TransportOutcome::Response { status: 429, .. } => LlmError::RateLimited {
                    attempts: attempt + 1,
                },
                TransportOutcome::Response { status, body } if status >= 500 => LlmError::Http {
                    status,
                    body: snippet(&body),
                },
                TransportOutcome::Response { status, body } => {
                    return Err(LlmError::Http {
                        status,
                        body: snippet(&body),
                    });
                }
                TransportOutcome::Timeout => LlmError::Timeout,
                TransportOutcome::Failed(msg) => LlmError::Transport(msg),
            };
            log::warn!("attempt {} failed: {last}", attempt + 1);
        }
        Err(last)
    }
}

fn snippet(body: &str) -> String {
    body.chars().take(200).collect()
}

fn extract_content(body: &str) -> Result<String, LlmError> {
    let v: Value =
        serde_json::from_str(body).map_err(|e| LlmError::BadResponse(format!("not JSON: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| LlmError::BadResponse("missing choices[0].message.content".into()))
}

/// One-shot completion over the default transport.
pub fn complete(prompt: &str, cfg: &LlmConfig) -> Result<String, LlmError> {
    LlmClient::new(cfg.clone())?.complete(prompt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct Scripted {
        replies: Vec<TransportOutcome>,
        calls: Arc<AtomicUsize>,
    }

    impl ChatTransport for Scripted {
        fn post(&self, _: &str, _: &str, _: &str, _: Duration) -> TransportOutcome {
            let i = self.calls.fetch_add(1, Ordering::SeqCst);
            self.replies[i.min(self.replies.len() - 1)].clone()
        }
    }

    fn ok(text: &str) -> TransportOutcome {
        TransportOutcome::Response {
            status: 200,
            body: json!({"choices": [{"message": {"role": "assistant", "content": text}}]})
                .to_string(),
        }
    }

    fn status(s: u16) -> TransportOutcome {
        TransportOutcome::Response {
            status: s,
            body: "{}".into(),
        }
    }

    fn client(env: &str, replies: Vec<TransportOutcome>) -> (LlmClient, Arc<AtomicUsize>) {
        let calls = Arc::new(AtomicUsize::new(0));
        let cfg = LlmConfig {
            api_key_env: env.to_string(),
            backoff_base: Duration::from_millis(1),
            ..LlmConfig::default()
        };
        let c = LlmClient::with_transport(
            cfg,
            Box::new(Scripted {
                replies,
                calls: calls.clone(),
            }),
        )
        .unwrap();
        (c, calls)
    }

    #[test]
    fn missing_key_fails_before_any_call() {
        let (c, calls) = client("BIMQA_TEST_UNSET_KEY_1", vec![ok("x")]);
        assert!(matches!(c.complete("p"), Err(LlmError::Auth(_))));
        assert_eq!(calls.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn retries_rate_limits_then_succeeds() {
        std::env::set_var("BIMQA_TEST_KEY_2", "k");
        let (c, calls) = client(
            "BIMQA_TEST_KEY_2",
            vec![status(429), status(429), ok("done")],
        );
        assert_eq!(c.complete("p").unwrap(), "done");
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        std::env::set_var("BIMQA_TEST_KEY_3", "k");
        let (c, calls) = client("BIMQA_TEST_KEY_3", vec![status(400), ok("x")]);
        assert!(matches!(
            c.complete("p"),
            Err(LlmError::Http { status: 400, .. })
        ));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        let (c, calls) = client("BIMQA_TEST_KEY_3", vec![status(401), ok("x")]);
        assert!(matches!(c.complete("p"), Err(LlmError::Auth(_))));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn exhausted_retries() {
        std::env::set_var("BIMQA_TEST_KEY_4", "k");
        let (c, calls) = client("BIMQA_TEST_KEY_4", vec![status(429)]);
        assert_eq!(c.complete("p"), Err(LlmError::RateLimited { attempts: 4 }));
        assert_eq!(calls.load(Ordering::SeqCst), 4);
        let (c, _) = client("BIMQA_TEST_KEY_4", vec![TransportOutcome::Timeout]);
        assert_eq!(c.complete("p"), Err(LlmError::Timeout));
    }
}
