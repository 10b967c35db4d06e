//! HTTP retrieval with per-host politeness, retries, manual redirect
//! handling, robots exclusion and a shared visited set.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use texting_robots::Robot;
use thiserror::Error;
use url::Url;

use crate::filler::SubmissionRequest;
use crate::form::{canonicalize_url, Method, WebPage};

/// Environment variable overriding the request timeout, in milliseconds.
pub const TIMEOUT_ENV: &str = "SEMCRAWL_TIMEOUT_MS";

const MAX_BODY_BYTES: u64 = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchPolicy {
    /// Minimum gap between the end of one request to a host and the start
    /// of the next. A host is scheme, name and port.
    #[serde(with = "millis")]
    pub per_host_delay: Duration,
    pub max_retries: u32,
    #[serde(with = "millis")]
    pub timeout: Duration,
    pub max_redirects: u32,
    pub user_agent: String,
    pub respect_robots: bool,
}

impl Default for FetchPolicy {
    fn default() -> Self {
        Self {
            per_host_delay: Duration::from_secs(1),
            max_retries: 2,
            timeout: Duration::from_secs(10),
            max_redirects: 5,
            user_agent: format!("semcrawl/{}", env!("CARGO_PKG_VERSION")),
            respect_robots: true,
        }
    }
}

impl FetchPolicy {
    /// Applies [`TIMEOUT_ENV`] if it is set to a positive integer.
    pub fn with_env_overrides(mut self) -> Self {
        if let Some(ms) = std::env::var(TIMEOUT_ENV).ok().and_then(|v| v.trim().parse::<u64>().ok()) {
            if ms > 0 {
                self.timeout = Duration::from_millis(ms);
            }
        }
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.per_host_delay.is_zero() {
            return Err("per-host delay must be positive".into());
        }
        if self.timeout.is_zero() {
            return Err("timeout must be positive".into());
        }
        if self.user_agent.trim().is_empty() {
            return Err("user agent must not be empty".into());
        }
        Ok(())
    }

    fn robots_token(&self) -> &str {
        self.user_agent.split(['/', ' ']).next().unwrap_or(&self.user_agent)
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_millis)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq, Serialize, Deserialize)]
pub enum FetchError {
    #[error("{url}: network error after {attempts} attempt(s): {message}")]
    Network { url: String, attempts: u32, message: String },
    #[error("{url}: more than {limit} redirects")]
    TooManyRedirects { url: String, limit: u32 },
    #[error("{url}: timed out after {attempts} attempt(s)")]
    Timeout { url: String, attempts: u32 },
    #[error("{url}: disallowed by robots.txt")]
    Disallowed { url: String },
    #[error("{url}: not an absolute http(s) URL")]
    InvalidUrl { url: String },
}

/// Canonical URLs and submission fingerprints already processed.
#[derive(Debug, Default)]
pub struct VisitedSet {
    inner: Mutex<Visited>,
}

#[derive(Debug, Default)]
struct Visited {
    urls: HashSet<String>,
    fingerprints: HashSet<String>,
}

impl VisitedSet {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> MutexGuard<'_, Visited> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Marks a URL as visited; false if it already was.
    pub fn insert_url(&self, url: &str) -> bool {
        let key = canonical_key(url);
        self.lock().urls.insert(key)
    }

    pub fn contains_url(&self, url: &str) -> bool {
        self.lock().urls.contains(&canonical_key(url))
    }

    /// Marks a submission as sent; false if it already was.
    pub fn insert_fingerprint(&self, fingerprint: &str) -> bool {
        self.lock().fingerprints.insert(fingerprint.to_owned())
    }

    pub fn contains_fingerprint(&self, fingerprint: &str) -> bool {
        self.lock().fingerprints.contains(fingerprint)
    }

    pub fn url_count(&self) -> usize {
        self.lock().urls.len()
    }

    pub fn fingerprint_count(&self) -> usize {
        self.lock().fingerprints.len()
    }
}

fn canonical_key(url: &str) -> String {
    canonicalize_url(url).map(String::from).unwrap_or_else(|_| url.trim().to_owned())
}

fn host_key(url: &Url) -> String {
    format!("{}://{}", url.scheme(), url.authority())
}

/// Serializes requests per host and spaces them by the policy delay.
#[derive(Debug, Default)]
pub struct PolitenessGate {
    hosts: Mutex<HashMap<String, HostState>>,
    released: Condvar,
}

#[derive(Debug, Default)]
struct HostState {
    busy: bool,
    last_end: Option<Instant>,
}

impl PolitenessGate {
    pub fn new() -> Self {
        Self::default()
    }

    /// Blocks until `host` is free and `delay` has passed since its last
    /// request ended. The host stays reserved until the permit drops, and
    /// the drop time becomes its last contact.
    pub fn acquire(&self, host: &str, delay: Duration) -> HostPermit<'_> {
        let mut hosts = self.hosts.lock().unwrap_or_else(|e| e.into_inner());
        while hosts.get(host).is_some_and(|h| h.busy) {
            hosts = self.released.wait(hosts).unwrap_or_else(|e| e.into_inner());
        }
        let state = hosts.entry(host.to_owned()).or_default();
        state.busy = true;
        let ready = state.last_end.map(|t| t + delay);
        drop(hosts);
        if let Some(ready) = ready {
            let now = Instant::now();
            if ready > now {
                thread::sleep(ready - now);
            }
        }
        HostPermit { gate: self, host: host.to_owned() }
    }
}

/// Exclusive use of one host; see [`PolitenessGate::acquire`].
pub struct HostPermit<'g> {
    gate: &'g PolitenessGate,
    host: String,
}

impl Drop for HostPermit<'_> {
    fn drop(&mut self) {
        let mut hosts = self.gate.hosts.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(state) = hosts.get_mut(&self.host) {
            state.busy = false;
            state.last_end = Some(Instant::now());
        }
        drop(hosts);
        self.gate.released.notify_all();
    }
}

/// A page together with how it was obtained.
#[derive(Debug, Clone)]
pub struct FetchedPage {
    pub page: WebPage,
    pub redirects: u32,
    /// HTTP requests sent for this page, retries and redirects included.
    pub requests: u32,
}

struct RawResponse {
    status: u16,
    location: Option<String>,
    content_type: Option<String>,
    body: Vec<u8>,
}

/// The HTTP client used by the crawl. Share one per crawl so that the
/// politeness gate, the robots cache and the visited set are global.
pub struct Fetcher {
    policy: FetchPolicy,
    agent: ureq::Agent,
    gate: PolitenessGate,
    visited: VisitedSet,
    robots: Mutex<HashMap<String, Option<Robot>>>,
    requests: AtomicU64,
}

impl Fetcher {
    pub fn new(policy: FetchPolicy) -> Self {
        let config = ureq::Agent::config_builder()
            .max_redirects(0)
            .http_status_as_error(false)
            .timeout_global(Some(policy.timeout))
            .user_agent(policy.user_agent.as_str())
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
            policy,
            gate: PolitenessGate::new(),
            visited: VisitedSet::new(),
            robots: Mutex::new(HashMap::new()),
            requests: AtomicU64::new(0),
        }
    }

    pub fn policy(&self) -> &FetchPolicy {
        &self.policy
    }

    pub fn visited(&self) -> &VisitedSet {
        &self.visited
    }

    /// HTTP requests sent so far, robots.txt included.
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    /// Downloads a page, following redirects. The final status is returned
    /// as-is; only transport failures are errors.
    pub fn fetch_page(&self, url: &str) -> Result<FetchedPage, FetchError> {
        self.request(Method::Get, url, None)
    }

    /// Sends a form submission and records its fingerprint.
    pub fn submit_form(&self, req: &SubmissionRequest) -> Result<FetchedPage, FetchError> {
        self.visited.insert_fingerprint(&req.fingerprint());
        match req.method {
            Method::Get => self.request(Method::Get, &req.url, None),
            Method::Post => self.request(Method::Post, &req.url, Some(req.body())),
        }
    }

    fn request(&self, method: Method, url: &str, body: Option<String>) -> Result<FetchedPage, FetchError> {
        let mut current = parse_http_url(url)?;
        let mut method = method;
        let mut body = body;
        let mut requests = 0;
        let mut redirects = 0;
        loop {
            if self.policy.respect_robots && !self.robots_allow(&current) {
                return Err(FetchError::Disallowed { url: current.to_string() });
            }
            self.visited.insert_url(current.as_str());
            let (raw, sent) = self.send_with_retries(method, &current, body.as_deref())?;
            requests += sent;
            let redirect_target = match (raw.status, &raw.location) {
                (301 | 302 | 303 | 307 | 308, Some(loc)) => current.join(loc).ok(),
                _ => None,
            };
            let Some(mut next) = redirect_target else {
                let ct = raw.content_type.as_deref();
                let page = WebPage::from_bytes(current.as_str(), &raw.body, ct, raw.status);
                return Ok(FetchedPage { page, redirects, requests });
            };
            if redirects >= self.policy.max_redirects {
                return Err(FetchError::TooManyRedirects { url: url.to_owned(), limit: self.policy.max_redirects });
            }
            redirects += 1;
            if raw.status == 303 || (matches!(raw.status, 301 | 302) && method == Method::Post) {
                method = Method::Get;
                body = None;
            }
            next.set_fragment(None);
            current = next;
        }
    }

    fn send_with_retries(&self, method: Method, url: &Url, body: Option<&str>) -> Result<(RawResponse, u32), FetchError> {
        let host = host_key(url);
        let mut attempts = 0;
        loop {
            attempts += 1;
            let result = {
                let _permit = self.gate.acquire(&host, self.policy.per_host_delay);
                self.send_once(method, url, body)
            };
            let retry_left = attempts <= self.policy.max_retries;
            match result {
                Ok(raw) if raw.status >= 500 && retry_left => continue,
                Ok(raw) => return Ok((raw, attempts)),
                Err(_) if retry_left => continue,
                Err(SendError::Timeout) => return Err(FetchError::Timeout { url: url.to_string(), attempts }),
                Err(SendError::Other(message)) => {
                    return Err(FetchError::Network { url: url.to_string(), attempts, message })
                }
            }
        }
    }

    fn send_once(&self, method: Method, url: &Url, body: Option<&str>) -> Result<RawResponse, SendError> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let response = match method {
            Method::Get => self.agent.get(url.as_str()).call(),
            Method::Post => self
                .agent
                .post(url.as_str())
                .header("Content-Type", SubmissionRequest::CONTENT_TYPE)
                .send(body.unwrap_or("")),
        }
        .map_err(SendError::from)?;
        let header = |name: &str| response.headers().get(name).and_then(|v| v.to_str().ok()).map(str::to_owned);
        let status = response.status().as_u16();
        let location = header("location");
        let content_type = header("content-type");
        let body = response
            .into_body()
            .into_with_config()
            .limit(MAX_BODY_BYTES)
            .read_to_vec()
            .map_err(SendError::from)?;
        Ok(RawResponse { status, location, content_type, body })
    }

    fn robots_allow(&self, url: &Url) -> bool {
        let host = host_key(url);
        {
            let cache = self.robots.lock().unwrap_or_else(|e| e.into_inner());
            if let Some(entry) = cache.get(&host) {
                return entry.as_ref().is_none_or(|r| r.allowed(url.as_str()));
            }
        }
        let robot = url
            .join("/robots.txt")
            .ok()
            .and_then(|robots_url| self.send_with_retries(Method::Get, &robots_url, None).ok())
            .filter(|(raw, _)| raw.status == 200)
            .and_then(|(raw, _)| Robot::new(self.policy.robots_token(), &raw.body).ok());
        let allowed = robot.as_ref().is_none_or(|r| r.allowed(url.as_str()));
        self.robots.lock().unwrap_or_else(|e| e.into_inner()).insert(host, robot);
        allowed
    }
}

enum SendError {
    Timeout,
    Other(String),
}

impl From<ureq::Error> for SendError {
    fn from(e: ureq::Error) -> Self {
        match e {
            ureq::Error::Timeout(_) => SendError::Timeout,
            ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => SendError::Timeout,
            other => SendError::Other(other.to_string()),
        }
    }
}

fn parse_http_url(raw: &str) -> Result<Url, FetchError> {
    match canonicalize_url(raw) {
        Ok(u) if matches!(u.scheme(), "http" | "https") && u.has_host() => Ok(u),
        _ => Err(FetchError::InvalidUrl { url: raw.to_owned() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Write};
    use std::net::TcpListener;

    #[test]
    fn visited_set_is_canonical() {
        let v = VisitedSet::new();
        assert!(v.insert_url("HTTP://Books.TEST:80/a#frag"));
        assert!(!v.insert_url("http://books.test/a"));
        assert!(v.contains_url("http://books.test/a#x"));
        assert!(v.insert_fingerprint("GET http://books.test/s?q=a "));
        assert!(!v.insert_fingerprint("GET http://books.test/s?q=a "));
    }

    #[test]
    fn gate_spaces_requests_per_host() {
        let gate = PolitenessGate::new();
        let delay = Duration::from_millis(30);
        let mut ends = Vec::new();
        let mut starts = Vec::new();
        for _ in 0..3 {
            let p = gate.acquire("http://a.test", delay);
            starts.push(Instant::now());
            drop(p);
            ends.push(Instant::now());
        }
        for i in 1..3 {
            assert!(starts[i] - ends[i - 1] >= delay);
        }
        let t = Instant::now();
        drop(gate.acquire("http://b.test", delay));
        assert!(t.elapsed() < delay);
    }

    #[test]
    fn policy_validation_and_env() {
        assert!(FetchPolicy::default().validate().is_ok());
        let p = FetchPolicy { timeout: Duration::ZERO, ..FetchPolicy::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn rejects_non_http_urls() {
        let f = Fetcher::new(FetchPolicy::default());
        assert!(matches!(f.fetch_page("ftp://x.test/"), Err(FetchError::InvalidUrl { .. })));
        assert!(matches!(f.fetch_page("/relative"), Err(FetchError::InvalidUrl { .. })));
    }

    /// Serves canned responses in order, one per connection.
    fn canned_server(responses: Vec<String>) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        thread::spawn(move || {
            for (stream, resp) in listener.incoming().zip(responses) {
                let mut stream = stream.unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                while reader.read_line(&mut line).is_ok_and(|n| n > 0) && line != "\r\n" {
                    line.clear();
                }
                stream.write_all(resp.as_bytes()).unwrap();
            }
        });
        format!("http://{addr}")
    }

    fn resp(status: &str, extra: &str, body: &str) -> String {
        format!("HTTP/1.1 {status}\r\nContent-Length: {}\r\nConnection: close\r\n{extra}\r\n{body}", body.len())
    }

    fn fast_policy() -> FetchPolicy {
        FetchPolicy { per_host_delay: Duration::from_millis(1), respect_robots: false, ..FetchPolicy::default() }
    }

    #[test]
    fn retries_transient_failures() {
        let base = canned_server(vec![
            resp("503 Unavailable", "", "busy"),
            resp("503 Unavailable", "", "busy"),
            resp("200 OK", "Content-Type: text/html\r\n", "<p>ok</p>"),
        ]);
        let got = Fetcher::new(fast_policy()).fetch_page(&format!("{base}/home")).unwrap();
        assert_eq!(got.page.status, 200);
        assert_eq!(got.requests, 3);
        assert_eq!(got.page.body, "<p>ok</p>");
    }

    #[test]
    fn follows_redirect() {
        let base = canned_server(vec![
            resp("302 Found", "Location: /home\r\n", ""),
            resp("200 OK", "", "landing"),
        ]);
        let f = Fetcher::new(fast_policy());
        let got = f.fetch_page(&format!("{base}/")).unwrap();
        assert_eq!(got.redirects, 1);
        assert_eq!(got.page.body, "landing");
        assert!(got.page.url.ends_with("/home"));
        assert!(f.visited().contains_url(&format!("{base}/home")));
    }

    #[test]
    fn redirect_limit() {
        let base = canned_server((0..3).map(|i| resp("302 Found", &format!("Location: /r{i}\r\n"), "")).collect());
        let f = Fetcher::new(FetchPolicy { max_redirects: 2, ..fast_policy() });
        assert!(matches!(f.fetch_page(&format!("{base}/")), Err(FetchError::TooManyRedirects { limit: 2, .. })));
    }

    #[test]
    fn robots_disallow_is_honored() {
        let base = canned_server(vec![resp("200 OK", "", "User-agent: *\nDisallow: /private\n")]);
        let f = Fetcher::new(FetchPolicy { respect_robots: true, ..fast_policy() });
        assert!(matches!(f.fetch_page(&format!("{base}/private/x")), Err(FetchError::Disallowed { .. })));
    }

    #[test]
    fn connection_refused_is_network_error() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let f = Fetcher::new(FetchPolicy { max_retries: 1, ..fast_policy() });
        match f.fetch_page(&format!("http://127.0.0.1:{port}/")) {
            Err(FetchError::Network { attempts, .. }) => assert_eq!(attempts, 2),
            other => panic!("{other:?}"),
        }
    }
}
