//! Provider-agnostic chat-completion access with retries, rate limiting,
//! and a scriptable mock provider for offline tests.
//!
//! One wire protocol (POST {base_url}/chat/completions with model/messages/
//! temperature, reading choices[0].message.content) covers both hosted APIs
//! and local model servers. API keys come only from environment variables
//! named in the provider config.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport error after {attempts} attempts: {message}")]
    Transport {
        attempts: u32,
        message: String,
        status: Option<u16>,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("mock script exhausted (test configuration error)")]
    ScriptExhausted,
}

pub type Result<T> = std::result::Result<T, GatewayError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub name: String,
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the API key; empty for keyless local
    /// endpoints.
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_max_concurrent")]
    pub max_concurrent: usize,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
}

fn default_max_concurrent() -> usize {
    4
}
fn default_rpm() -> u32 {
    60
}
fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_concurrent < 1 {
            return Err(GatewayError::Config("max_concurrent must be >= 1".into()));
        }
        if self.timeout_secs <= 0.0 {
            return Err(GatewayError::Config("timeout must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub latency_secs: f64,
    pub attempts: u32,
    pub provider: String,
    pub model: String,
}

/// One chat call; implementations handle their own retry and throttling.
pub trait ChatProvider: Send + Sync {
    fn chat(&self, system: &str, user: &str, temperature: f64) -> Result<Completion>;
    fn name(&self) -> &str;
}

/// A single request/response exchange with no retry logic.
pub trait ChatTransport: Send + Sync {
    fn send_once(&self, system: &str, user: &str, temperature: f64)
        -> std::result::Result<String, TransportFailure>;
}

#[derive(Debug, Clone)]
pub struct TransportFailure {
    pub message: String,
    pub status: Option<u16>,
    pub retryable: bool,
    /// Non-retryable and fatal to the whole call (mock script exhausted).
    pub script_exhausted: bool,
}

impl TransportFailure {
    pub fn retryable(message: impl Into<String>, status: Option<u16>) -> Self {
        TransportFailure {
            message: message.into(),
            status,
            retryable: true,
            script_exhausted: false,
        }
    }

    pub fn fatal(message: impl Into<String>, status: Option<u16>) -> Self {
        TransportFailure {
            message: message.into(),
            status,
            retryable: false,
            script_exhausted: false,
        }
    }
}

/// Monotonic time source; virtualized in tests so throttling and backoff
/// are checkable without real waiting.
pub trait Clock: Send + Sync {
    fn now_secs(&self) -> f64;
    fn sleep(&self, d: Duration);
}

pub struct RealClock {
    start: std::time::Instant,
}

impl RealClock {
    pub fn new() -> Self {
        RealClock {
            start: std::time::Instant::now(),
        }
    }
}

impl Default for RealClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for RealClock {
    fn now_secs(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Clock whose sleeps advance a counter instantly.
#[derive(Default)]
pub struct VirtualClock {
    now: Mutex<f64>,
    slept: Mutex<Vec<f64>>,
}

impl VirtualClock {
    pub fn new() -> Self {
        Self::default()
    }

    /// Durations passed to `sleep`, in order.
    pub fn sleeps(&self) -> Vec<f64> {
        self.slept.lock().unwrap().clone()
    }
}

impl Clock for VirtualClock {
    fn now_secs(&self) -> f64 {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        let secs = d.as_secs_f64();
        *self.now.lock().unwrap() += secs;
        self.slept.lock().unwrap().push(secs);
    }
}

/// Sliding-window limiter: at most `requests_per_minute` acquisitions in
/// any 60-second window, and at most `max_concurrent` holders at once.
struct Throttle {
    rpm: u32,
    max_concurrent: usize,
    state: Mutex<ThrottleState>,
    freed: Condvar,
}

#[derive(Default)]
struct ThrottleState {
    issue_times: Vec<f64>,
    in_flight: usize,
}

struct ThrottleGuard<'a> {
    throttle: &'a Throttle,
}

impl Drop for ThrottleGuard<'_> {
    fn drop(&mut self) {
        let mut st = self.throttle.state.lock().unwrap();
        st.in_flight -= 1;
        drop(st);
        self.throttle.freed.notify_one();
    }
}

impl Throttle {
    fn new(rpm: u32, max_concurrent: usize) -> Self {
        Throttle {
            rpm,
            max_concurrent,
            state: Mutex::new(ThrottleState::default()),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self, clock: &dyn Clock) -> ThrottleGuard<'_> {
        loop {
            let wait: Option<Duration> = {
                let mut st = self.state.lock().unwrap();
                while st.in_flight >= self.max_concurrent {
                    st = self.freed.wait(st).unwrap();
                }
                let now = clock.now_secs();
                st.issue_times.retain(|&t| now - t < 60.0);
                if st.issue_times.len() < self.rpm as usize {
                    st.issue_times.push(now);
                    st.in_flight += 1;
                    None
                } else {
                    let oldest = st.issue_times[0];
                    Some(Duration::from_secs_f64((oldest + 60.0 - now).max(0.001)))
                }
            };
            match wait {
                None => return ThrottleGuard { throttle: self },
                Some(d) => clock.sleep(d),
            }
        }
    }
}

/// Exponential backoff: base 1s, factor 2, jitter +/-20%.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_secs: f64,
    pub factor: f64,
    pub jitter_frac: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay_secs: 1.0,
            factor: 2.0,
            jitter_frac: 0.2,
        }
    }
}

/// Transport wrapped with retry, backoff, and throttling.
pub struct Provider<T: ChatTransport> {
    name: String,
    model: String,
    transport: T,
    policy: RetryPolicy,
    throttle: Throttle,
    clock: Arc<dyn Clock>,
    jitter_rng: Mutex<ChaCha8Rng>,
}

impl<T: ChatTransport> Provider<T> {
    pub fn new(
        name: impl Into<String>,
        model: impl Into<String>,
        transport: T,
        policy: RetryPolicy,
        rpm: u32,
        max_concurrent: usize,
        clock: Arc<dyn Clock>,
    ) -> Self {
        let name = name.into();
        let seed = name.bytes().fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
        Provider {
            name,
            model: model.into(),
            transport,
            policy,
            throttle: Throttle::new(rpm, max_concurrent),
            clock,
            jitter_rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }
}

impl<T: ChatTransport> ChatProvider for Provider<T> {
    fn chat(&self, system: &str, user: &str, temperature: f64) -> Result<Completion> {
        let start = self.clock.now_secs();
        let mut attempts = 0u32;
        let mut last_failure: Option<TransportFailure> = None;
        while attempts <= self.policy.max_retries {
            if attempts > 0 {
                let exp = self.policy.base_delay_secs * self.policy.factor.powi(attempts as i32 - 1);
                let jitter = {
                    let mut rng = self.jitter_rng.lock().unwrap();
                    1.0 + self.policy.jitter_frac * (2.0 * rng.gen::<f64>() - 1.0)
                };
                self.clock.sleep(Duration::from_secs_f64(exp * jitter));
            }
            attempts += 1;
            let guard = self.throttle.acquire(self.clock.as_ref());
            let outcome = self.transport.send_once(system, user, temperature);
            drop(guard);
            match outcome {
                Ok(text) => {
                    return Ok(Completion {
                        text,
                        latency_secs: self.clock.now_secs() - start,
                        attempts,
                        provider: self.name.clone(),
                        model: self.model.clone(),
                    })
                }
                Err(f) if f.script_exhausted => return Err(GatewayError::ScriptExhausted),
                Err(f) if !f.retryable => {
                    return Err(GatewayError::Transport {
                        attempts,
                        message: f.message,
                        status: f.status,
                    })
                }
                Err(f) => last_failure = Some(f),
            }
        }
        let f = last_failure.expect("loop ran at least once");
        Err(GatewayError::Transport {
            attempts,
            message: f.message,
            status: f.status,
        })
    }

    fn name(&self) -> &str {
        &self.name
    }
}

// ---------------------------------------------------------------------------
// HTTP transport (chat-completion wire format)
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    content: String,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

pub struct HttpTransport {
    base_url: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn from_config(config: &ProviderConfig) -> Result<Self> {
        config.validate()?;
        let api_key = if config.api_key_env.is_empty() {
            None
        } else {
            Some(std::env::var(&config.api_key_env).map_err(|_| {
                GatewayError::Config(format!(
                    "environment variable {} not set for provider {}",
                    config.api_key_env, config.name
                ))
            })?)
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(HttpTransport {
            base_url: config.base_url.trim_end_matches('/').to_string(),
            model: config.model.clone(),
            api_key,
            client,
        })
    }
}

impl ChatTransport for HttpTransport {
    fn send_once(
        &self,
        system: &str,
        user: &str,
        temperature: f64,
    ) -> std::result::Result<String, TransportFailure> {
        let body = WireRequest {
            model: &self.model,
            messages: vec![
                WireMessage {
                    role: "system",
                    content: system,
                },
                WireMessage {
                    role: "user",
                    content: user,
                },
            ],
            temperature,
        };
        let mut req = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| TransportFailure::retryable(e.to_string(), None))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(TransportFailure::retryable(
                format!("HTTP {status}"),
                Some(status.as_u16()),
            ));
        }
        if !status.is_success() {
            return Err(TransportFailure::fatal(
                format!("HTTP {status}"),
                Some(status.as_u16()),
            ));
        }
        let text = resp
            .text()
            .map_err(|e| TransportFailure::retryable(e.to_string(), None))?;
        let parsed: WireResponse = serde_json::from_str(&text).map_err(|e| TransportFailure {
            message: format!("non-conforming response body: {e}"),
            status: Some(status.as_u16()),
            retryable: false,
            script_exhausted: false,
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| TransportFailure::fatal("response has no choices", Some(status.as_u16())))
    }
}

/// An HTTP-backed provider built from config with the default retry policy.
pub fn http_provider(config: &ProviderConfig) -> Result<Provider<HttpTransport>> {
    let transport = HttpTransport::from_config(config)?;
    Ok(Provider::new(
        config.name.clone(),
        config.model.clone(),
        transport,
        RetryPolicy {
            max_retries: config.max_retries,
            ..RetryPolicy::default()
        },
        config.requests_per_minute,
        config.max_concurrent,
        Arc::new(RealClock::new()),
    ))
}

// ---------------------------------------------------------------------------
// Scriptable mock
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum MatchRule {
    /// Substring of either the system or the user text.
    Contains(String),
    Any,
}

impl MatchRule {
    fn matches(&self, system: &str, user: &str) -> bool {
        match self {
            MatchRule::Contains(s) => system.contains(s.as_str()) || user.contains(s.as_str()),
            MatchRule::Any => true,
        }
    }
}

#[derive(Debug, Clone)]
pub enum MockOutcome {
    Reply(String),
    /// A retryable failure (transport error / 5xx).
    Fail(String),
}

/// Consumes its script one entry per request: the first rule whose match
/// applies produces the response or failure; every request is recorded for
/// assertions. An empty script is a test-configuration error.
pub struct MockTransport {
    script: Mutex<Vec<(MatchRule, MockOutcome)>>,
    requests: Mutex<Vec<(String, String)>>,
    /// Sticky rules are matched without being consumed.
    sticky: bool,
}

impl MockTransport {
    pub fn new(script: Vec<(MatchRule, MockOutcome)>) -> Self {
        MockTransport {
            script: Mutex::new(script),
            requests: Mutex::new(Vec::new()),
            sticky: false,
        }
    }

    /// Rules answer any number of requests instead of being consumed.
    pub fn sticky(script: Vec<(MatchRule, MockOutcome)>) -> Self {
        MockTransport {
            script: Mutex::new(script),
            requests: Mutex::new(Vec::new()),
            sticky: true,
        }
    }

    pub fn requests(&self) -> Vec<(String, String)> {
        self.requests.lock().unwrap().clone()
    }
}

impl ChatTransport for MockTransport {
    fn send_once(
        &self,
        system: &str,
        user: &str,
        _temperature: f64,
    ) -> std::result::Result<String, TransportFailure> {
        self.requests
            .lock()
            .unwrap()
            .push((system.to_string(), user.to_string()));
        let mut script = self.script.lock().unwrap();
        let pos = script.iter().position(|(rule, _)| rule.matches(system, user));
        let outcome = match pos {
            Some(i) if self.sticky => script[i].1.clone(),
            Some(i) => script.remove(i).1,
            None => {
                return Err(TransportFailure {
                    message: "mock script exhausted".into(),
                    status: None,
                    retryable: false,
                    script_exhausted: true,
                })
            }
        };
        match outcome {
            MockOutcome::Reply(text) => Ok(text),
            MockOutcome::Fail(msg) => Err(TransportFailure::retryable(msg, Some(503))),
        }
    }
}

/// Mock provider with a virtual clock, so retry backoff costs no real time.
pub fn make_mock(script: Vec<(MatchRule, MockOutcome)>) -> Provider<MockTransport> {
    mock_with_retries(script, 3)
}

pub fn mock_with_retries(
    script: Vec<(MatchRule, MockOutcome)>,
    max_retries: u32,
) -> Provider<MockTransport> {
    Provider::new(
        "mock",
        "mock-model",
        MockTransport::new(script),
        RetryPolicy {
            max_retries,
            ..RetryPolicy::default()
        },
        u32::MAX,
        usize::MAX >> 1,
        Arc::new(VirtualClock::new()),
    )
}

/// Mock provider whose rules are not consumed (for benchmark-style use
/// where every request should get an answer).
pub fn make_sticky_mock(script: Vec<(MatchRule, MockOutcome)>) -> Provider<MockTransport> {
    Provider::new(
        "mock",
        "mock-model",
        MockTransport::sticky(script),
        RetryPolicy::default(),
        u32::MAX,
        usize::MAX >> 1,
        Arc::new(VirtualClock::new()),
    )
}

/// A provider backed by an arbitrary closure; handy in tests that need
/// request-dependent answers.
pub struct FnProvider<F: Fn(&str, &str) -> Result<String> + Send + Sync> {
    name: String,
    f: F,
}

impl<F: Fn(&str, &str) -> Result<String> + Send + Sync> FnProvider<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        FnProvider {
            name: name.into(),
            f,
        }
    }
}

impl<F: Fn(&str, &str) -> Result<String> + Send + Sync> ChatProvider for FnProvider<F> {
    fn chat(&self, system: &str, user: &str, _temperature: f64) -> Result<Completion> {
        Ok(Completion {
            text: (self.f)(system, user)?,
            latency_secs: 0.0,
            attempts: 1,
            provider: self.name.clone(),
            model: self.name.clone(),
        })
    }

    fn name(&self) -> &str {
        &self.name
    }
}
