//! Polite fetch contract: robots enforcement, randomized inter-request
//! delay, bounded retries. One client instance is driven strictly
//! sequentially by the harvester; never share an instance across concurrent
//! fetch loops.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use url::Url;

use crate::robots::{is_allowed, parse_robots, RobotsPolicy};

/// Uniform delay source over `[min_s, max_s]`, optionally floored by a
/// crawl-delay taken from the site policy.
#[derive(Debug, Clone)]
pub struct DelaySampler {
    min_s: f64,
    max_s: f64,
    floor_s: Option<f64>,
    rng: ChaCha8Rng,
}

impl DelaySampler {
    /// `seed` makes the sequence reproducible; `None` seeds from the OS.
    pub fn new(min_s: f64, max_s: f64, seed: Option<u64>) -> Self {
        assert!(min_s >= 0.0 && min_s <= max_s, "delay bounds out of order");
        let rng = match seed {
            Some(s) => ChaCha8Rng::seed_from_u64(s),
            None => ChaCha8Rng::from_entropy(),
        };
        Self {
            min_s,
            max_s,
            floor_s: None,
            rng,
        }
    }

    /// Installs a crawl-delay floor; samples never fall below it.
    pub fn set_floor(&mut self, floor_s: Option<f64>) {
        self.floor_s = floor_s.filter(|f| f.is_finite() && *f > 0.0);
    }

    /// Effective lower bound of emitted samples.
    pub fn effective_min_s(&self) -> f64 {
        self.floor_s.map_or(self.min_s, |f| f.max(self.min_s))
    }

    /// Next inter-request delay in seconds.
    pub fn next_delay(&mut self) -> f64 {
        let lo = self.effective_min_s();
        let hi = self.max_s.max(lo);
        if hi > lo {
            self.rng.gen_range(lo..=hi)
        } else {
            lo
        }
    }
}

/// Terminal status of one fetch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FetchStatus {
    Ok {
        bytes: Vec<u8>,
        content_type: Option<String>,
    },
    /// Transient failure (timeout, 5xx, connection reset) that persisted
    /// through all retries.
    RetryableError(String),
    /// Non-retryable failure (4xx, bad URL).
    PermanentError(String),
    /// Blocked by robots policy; no request was issued.
    Disallowed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchOutcome {
    pub url: String,
    pub status: FetchStatus,
}

impl FetchOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self.status, FetchStatus::Ok { .. })
    }
}

/// Sequential HTTP GET client honoring robots policy and the delay sampler.
pub struct PoliteClient {
    http: reqwest::blocking::Client,
    policy: RobotsPolicy,
    sampler: DelaySampler,
    user_agent: String,
    max_retries: u32,
}

impl PoliteClient {
    /// Creates a client and fetches `<origin>/robots.txt` once (itself after
    /// an initial sampler delay). An unreachable or non-200 robots file
    /// degrades to a permissive policy.
    pub fn connect(
        origin_url: &str,
        user_agent: &str,
        mut sampler: DelaySampler,
        max_retries: u32,
        timeout: Duration,
    ) -> Result<Self, url::ParseError> {
        let origin = Url::parse(origin_url)?;
        let robots_url = {
            let mut u = origin.clone();
            u.set_path("/robots.txt");
            u.set_query(None);
            u.set_fragment(None);
            u
        };
        let http = reqwest::blocking::Client::builder()
            .user_agent(user_agent.to_string())
            .timeout(timeout)
            .build()
            .expect("client construction cannot fail with static options");

        sleep_secs(sampler.next_delay());
        let policy = match http.get(robots_url).send() {
            Ok(resp) if resp.status().is_success() => {
                let text = resp.text().unwrap_or_default();
                parse_robots(&text)
            }
            _ => RobotsPolicy::default(),
        };
        sampler.set_floor(policy.crawl_delay_s);

        Ok(Self {
            http,
            policy,
            sampler,
            user_agent: user_agent.to_string(),
            max_retries,
        })
    }

    /// Builds a client around an already-known policy (no robots request).
    pub fn with_policy(
        policy: RobotsPolicy,
        user_agent: &str,
        mut sampler: DelaySampler,
        max_retries: u32,
        timeout: Duration,
    ) -> Self {
        let http = reqwest::blocking::Client::builder()
            .user_agent(user_agent.to_string())
            .timeout(timeout)
            .build()
            .expect("client construction cannot fail with static options");
        sampler.set_floor(policy.crawl_delay_s);
        Self {
            http,
            policy,
            sampler,
            user_agent: user_agent.to_string(),
            max_retries,
        }
    }

    pub fn policy(&self) -> &RobotsPolicy {
        &self.policy
    }

    /// Checks a URL against the cached policy without issuing any request.
    pub fn url_allowed(&self, url: &str) -> bool {
        match Url::parse(url) {
            Ok(u) => is_allowed(&self.policy, &self.user_agent, &policy_path(&u)),
            Err(_) => false,
        }
    }

    /// GET with politeness: the sampler delay runs *before* every attempt,
    /// transient failures retry up to `max_retries` times, and a policy
    /// violation returns `Disallowed` without touching the network.
    pub fn fetch(&mut self, url: &str) -> FetchOutcome {
        let parsed = match Url::parse(url) {
            Ok(u) => u,
            Err(e) => {
                return FetchOutcome {
                    url: url.to_string(),
                    status: FetchStatus::PermanentError(format!("bad url: {e}")),
                }
            }
        };
        if !is_allowed(&self.policy, &self.user_agent, &policy_path(&parsed)) {
            return FetchOutcome {
                url: url.to_string(),
                status: FetchStatus::Disallowed,
            };
        }

        let mut last_error = String::new();
        for _attempt in 0..=self.max_retries {
            sleep_secs(self.sampler.next_delay());
            match self.http.get(parsed.clone()).send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let content_type = resp
                            .headers()
                            .get(reqwest::header::CONTENT_TYPE)
                            .and_then(|v| v.to_str().ok())
                            .map(str::to_string);
                        return match resp.bytes() {
                            Ok(bytes) => FetchOutcome {
                                url: url.to_string(),
                                status: FetchStatus::Ok {
                                    bytes: bytes.to_vec(),
                                    content_type,
                                },
                            },
                            Err(e) => FetchOutcome {
                                url: url.to_string(),
                                status: FetchStatus::RetryableError(format!(
                                    "body read failed: {e}"
                                )),
                            },
                        };
                    }
                    if status.is_server_error() {
                        last_error = format!("server error {status}");
                        continue;
                    }
                    return FetchOutcome {
                        url: url.to_string(),
                        status: FetchStatus::PermanentError(format!("http status {status}")),
                    };
                }
                Err(e) => {
                    last_error = format!("transport error: {e}");
                    continue;
                }
            }
        }
        FetchOutcome {
            url: url.to_string(),
            status: FetchStatus::RetryableError(format!(
                "gave up after {} attempts: {last_error}",
                self.max_retries + 1
            )),
        }
    }
}

/// Path-plus-query string robots patterns are matched against.
fn policy_path(url: &Url) -> String {
    match url.query() {
        Some(q) => format!("{}?{}", url.path(), q),
        None => url.path().to_string(),
    }
}

fn sleep_secs(secs: f64) {
    if secs > 0.0 {
        std::thread::sleep(Duration::from_secs_f64(secs));
    }
}
