//! OpenAI-compatible chat completions over HTTP.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CompletionRequest, LlmProvider, ProviderError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HttpProviderConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}
fn default_timeout() -> u64 {
    60
}
fn default_in_flight() -> usize {
    8
}
fn default_attempts() -> usize {
    3
}
fn default_backoff() -> u64 {
    500
}

impl HttpProviderConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        HttpProviderConfig {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: default_key_env(),
            timeout_s: default_timeout(),
            max_in_flight: default_in_flight(),
            max_attempts: default_attempts(),
            backoff_ms: default_backoff(),
        }
    }
}

struct Permits {
    free: Mutex<usize>,
    released: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().expect("permit lock poisoned");
        while *free == 0 {
            free = self.released.wait(free).expect("permit lock poisoned");
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit lock poisoned") += 1;
        self.0.released.notify_one();
    }
}

pub struct HttpChatProvider {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
    max_attempts: usize,
    backoff: Duration,
    permits: Permits,
}

impl HttpChatProvider {
    pub fn new(config: &HttpProviderConfig) -> Result<Self, ProviderError> {
        if config.max_in_flight == 0 || config.max_attempts == 0 {
            return Err(ProviderError::Config("max_in_flight and max_attempts must be positive".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_s))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(HttpChatProvider {
            client,
            url: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            model: config.model.clone(),
            api_key: std::env::var(&config.api_key_env).ok(),
            max_attempts: config.max_attempts,
            backoff: Duration::from_millis(config.backoff_ms),
            permits: Permits { free: Mutex::new(config.max_in_flight), released: Condvar::new() },
        })
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": request.prompt }],
            "temperature": request.temperature,
            "seed": request.seed,
        });
        let mut call = self.client.post(&self.url).json(&body);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let response = call.send().map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Status { status: status.as_u16(), body: text });
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| ProviderError::Malformed("no choices[0].message.content".into()))
    }
}

impl LlmProvider for HttpChatProvider {
    fn name(&self) -> &str {
        &self.model
    }

    fn complete(&self, request: &CompletionRequest) -> Result<String, ProviderError> {
        let _permit = self.permits.acquire();
        let mut delay = self.backoff;
        let mut attempt = 1;
        loop {
            match self.attempt(request) {
                Err(e) if e.is_transient() && attempt < self.max_attempts => {
                    log::warn!("attempt {attempt} for sample {} failed: {e}; retrying", request.sample_index);
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}


#[cfg(test)]
mod tests {
    use super::test_server::serve;
    use super::*;

    fn request() -> CompletionRequest {
        CompletionRequest {
            query_hash: "h".into(),
            symptom_set_id: "s".into(),
            prompt: "rank these".into(),
            sample_index: 4,
            temperature: 1.0,
            time_token: 9,
            seed: 1234,
        }
    }

    fn config(url: &str) -> HttpProviderConfig {
        HttpProviderConfig { backoff_ms: 1, api_key_env: "PBW_TEST_NO_SUCH_KEY".into(), ..HttpProviderConfig::new(url, "m1") }
    }

    fn ok_body(content: &str) -> String {
        json!({ "choices": [{ "message": { "role": "assistant", "content": content } }] }).to_string()
    }

    #[test]
    fn sends_prompt_and_reads_content() {
        let (url, seen) = serve(vec![(200, ok_body("1. gout"))]);
        let provider = HttpChatProvider::new(&config(&url)).unwrap();
        assert_eq!(provider.complete(&request()).unwrap(), "1. gout");
        let sent: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
        assert_eq!(sent["model"], "m1");
        assert_eq!(sent["messages"][0]["content"], "rank these");
        assert_eq!(sent["seed"], 1234);
        assert_eq!(sent["temperature"], 1.0);
    }

    #[test]
    fn retries_server_errors() {
        let (url, seen) = serve(vec![(500, "{}".into()), (200, ok_body("1. bursitis"))]);
        let provider = HttpChatProvider::new(&config(&url)).unwrap();
        assert_eq!(provider.complete(&request()).unwrap(), "1. bursitis");
        assert_eq!(seen.lock().unwrap().len(), 2);
    }

    #[test]
    fn gives_up_after_max_attempts_and_on_client_errors() {
        let (url, _) = serve(vec![(503, "a".into()), (503, "b".into()), (503, "c".into())]);
        let provider = HttpChatProvider::new(&config(&url)).unwrap();
        assert!(matches!(provider.complete(&request()), Err(ProviderError::Status { status: 503, .. })));

        let (url, seen) = serve(vec![(400, "bad".into()), (200, ok_body("x"))]);
        let provider = HttpChatProvider::new(&config(&url)).unwrap();
        assert!(matches!(provider.complete(&request()), Err(ProviderError::Status { status: 400, .. })));
        assert_eq!(seen.lock().unwrap().len(), 1);
    }

    #[test]
    fn malformed_body() {
        let (url, _) = serve(vec![(200, "{\"choices\": []}".into())]);
        let provider = HttpChatProvider::new(&config(&url)).unwrap();
        assert!(matches!(provider.complete(&request()), Err(ProviderError::Malformed(_))));
    }

    #[test]
    fn rejects_zero_limits() {
        let c = HttpProviderConfig { max_in_flight: 0, ..config("http://x") };
        assert!(HttpChatProvider::new(&c).is_err());
    }
}
