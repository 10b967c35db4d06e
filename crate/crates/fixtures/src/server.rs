//! Loopback HTTP server for a manifest: one listener per site.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant, SystemTime};

use serde::Serialize;
use thiserror::Error;
use tiny_http::{Header, Request, Response, Server};
use url::form_urlencoded;

use crate::manifest::{Catalog, Manifest, Site};
use crate::render;

pub const ROBOTS_TXT: &str = "User-agent: *\nDisallow: /private\n";

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot listen on 127.0.0.1:{port}: {message}")]
    Bind { port: u16, message: String },
}

/// One request as the server saw it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogEntry {
    pub site: String,
    /// Arrival time, measured from server start.
    pub offset: Duration,
    pub received_at: SystemTime,
    pub method: String,
    pub path: String,
    pub params: Vec<(String, String)>,
    pub status: u16,
    pub user_agent: Option<String>,
}

impl LogEntry {
    /// Method, path and parameters: what a client fingerprint covers.
    pub fn fingerprint(&self) -> String {
        let mut s = form_urlencoded::Serializer::new(String::new());
        for (k, v) in &self.params {
            s.append_pair(k, v);
        }
        format!("{} {} {}", self.method, self.path, s.finish())
    }
}

#[derive(Clone)]
enum Target {
    Site(Arc<Site>),
    Catalog(Arc<Catalog>),
}

impl Target {
    fn name(&self) -> &str {
        match self {
            Target::Site(s) => &s.spec.name,
            Target::Catalog(c) => &c.spec.name,
        }
    }
}

struct Shared {
    started: Instant,
    log: Mutex<Vec<LogEntry>>,
    /// Remaining forced failures per (site, path).
    failures: Mutex<HashMap<(String, String), u32>>,
}

struct Listener {
    name: String,
    addr: SocketAddr,
    server: Arc<Server>,
    worker: Option<JoinHandle<()>>,
}

/// Running fixture sites. Dropping it stops every listener.
pub struct FixtureServer {
    manifest: Manifest,
    listeners: Vec<Listener>,
    shared: Arc<Shared>,
}

impl FixtureServer {
    /// Starts every site on the port its manifest entry names, or an
    /// ephemeral port when it names none.
    pub fn start(manifest: Manifest) -> Result<Self, ServeError> {
        Self::start_with_base_port(manifest, None)
    }

    /// Like [`Self::start`], but sites without a fixed port listen on
    /// consecutive ports from `base_port` in manifest order, catalog last.
    pub fn start_with_base_port(manifest: Manifest, base_port: Option<u16>) -> Result<Self, ServeError> {
        let mut failures = HashMap::new();
        for site in &manifest.sites {
            for f in &site.spec.transient_failures {
                failures.insert((site.spec.name.clone(), f.path.clone()), f.count);
            }
        }
        let shared = Arc::new(Shared { started: Instant::now(), log: Mutex::new(Vec::new()), failures: Mutex::new(failures) });
        let mut targets: Vec<(u16, Target)> =
            manifest.sites.iter().map(|s| (s.spec.port, Target::Site(Arc::new(s.clone())))).collect();
        if let Some(c) = &manifest.catalog {
            targets.push((c.spec.port, Target::Catalog(Arc::new(c.clone()))));
        }
        let mut listeners = Vec::new();
        for (i, (fixed, target)) in targets.into_iter().enumerate() {
            let port = match (fixed, base_port) {
                (0, Some(base)) => base.saturating_add(i as u16),
                (p, _) => p,
            };
            let server = Server::http(("127.0.0.1", port))
                .map_err(|e| ServeError::Bind { port, message: e.to_string() })?;
            let addr = server
                .server_addr()
                .to_ip()
                .ok_or_else(|| ServeError::Bind { port, message: "not an IP listener".into() })?;
            let server = Arc::new(server);
            let worker = {
                let server = Arc::clone(&server);
                let shared = Arc::clone(&shared);
                let target = target.clone();
                thread::spawn(move || {
                    while let Ok(request) = server.recv() {
                        handle(&shared, &target, request);
                    }
                })
            };
            listeners.push(Listener { name: target.name().to_owned(), addr, server, worker: Some(worker) });
        }
        Ok(Self { manifest, listeners, shared })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn base_url(&self, name: &str) -> Option<String> {
        self.listeners.iter().find(|l| l.name == name).map(|l| format!("http://{}", l.addr))
    }

    /// Seed URL of a site: its root path.
    pub fn site_url(&self, name: &str) -> Option<String> {
        self.manifest.site(name)?;
        self.base_url(name).map(|b| format!("{b}/"))
    }

    /// Seed URLs of all sites, in manifest order.
    pub fn seeds(&self) -> Vec<String> {
        self.manifest.sites.iter().filter_map(|s| self.site_url(&s.spec.name)).collect()
    }

    pub fn catalog_url(&self) -> Option<String> {
        let c = self.manifest.catalog.as_ref()?;
        self.base_url(&c.spec.name).map(|b| format!("{b}{}", c.spec.path))
    }

    /// The site listening at the host and port of `url`.
    pub fn site_for_url(&self, url: &str) -> Option<&Site> {
        let parsed = url::Url::parse(url).ok()?;
        let port = parsed.port_or_known_default()?;
        let listener = self.listeners.iter().find(|l| l.addr.port() == port)?;
        self.manifest.site(&listener.name)
    }

    /// Snapshot of the request log in arrival order.
    pub fn log(&self) -> Vec<LogEntry> {
        self.shared.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn clear_log(&self) {
        self.shared.log.lock().unwrap_or_else(|e| e.into_inner()).clear();
    }

    /// Stops all listeners and waits for their threads.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        for l in &self.listeners {
            l.server.unblock();
        }
        for l in &mut self.listeners {
            if let Some(w) = l.worker.take() {
                let _ = w.join();
            }
        }
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn html_header() -> Header {
    Header::from_bytes("Content-Type", "text/html; charset=utf-8").expect("static header")
}

fn handle(shared: &Shared, target: &Target, mut request: Request) {
    let offset = shared.started.elapsed();
    let received_at = SystemTime::now();
    let method = request.method().as_str().to_ascii_uppercase();
    let (path, query) = match request.url().split_once('?') {
        Some((p, q)) => (p.to_owned(), q.to_owned()),
        None => (request.url().to_owned(), String::new()),
    };
    let mut body = String::new();
    if method == "POST" {
        let _ = request.as_reader().read_to_string(&mut body);
    }
    let params: Vec<(String, String)> = form_urlencoded::parse(query.as_bytes())
        .chain(form_urlencoded::parse(body.as_bytes()))
        .map(|(k, v)| (k.into_owned(), v.into_owned()))
        .collect();
    let user_agent = request
        .headers()
        .iter()
        .find(|h| h.field.equiv("User-Agent"))
        .map(|h| h.value.as_str().to_owned());

    let (status, content, location, content_type) = route(shared, target, &path, &params);
    shared.log.lock().unwrap_or_else(|e| e.into_inner()).push(LogEntry {
        site: target.name().to_owned(),
        offset,
        received_at,
        method,
        path,
        params,
        status,
        user_agent,
    });
    let mut response = Response::from_string(content).with_status_code(status);
    response.add_header(
        content_type
            .map(|ct| Header::from_bytes("Content-Type", ct).expect("static header"))
            .unwrap_or_else(html_header),
    );
    if let Some(loc) = location {
        response.add_header(Header::from_bytes("Location", loc.as_bytes()).expect("ascii location"));
    }
    let _ = request.respond(response);
}

type Routed = (u16, String, Option<String>, Option<&'static str>);

fn route(shared: &Shared, target: &Target, path: &str, params: &[(String, String)]) -> Routed {
    if path == "/robots.txt" {
        return (200, ROBOTS_TXT.to_owned(), None, Some("text/plain; charset=utf-8"));
    }
    if path == "/echo" {
        let pairs: Vec<[&str; 2]> = params.iter().map(|(k, v)| [k.as_str(), v.as_str()]).collect();
        let json = serde_json::to_string(&pairs).expect("string pairs serialize");
        return (200, json, None, Some("application/json"));
    }
    match target {
        Target::Catalog(c) => {
            if path == c.spec.path {
                (200, render::catalog(c), None, None)
            } else {
                (404, render::not_found(), None, None)
            }
        }
        Target::Site(site) => {
            let key = (site.spec.name.clone(), path.to_owned());
            {
                let mut failures = shared.failures.lock().unwrap_or_else(|e| e.into_inner());
                if let Some(left) = failures.get_mut(&key).filter(|n| **n > 0) {
                    *left -= 1;
                    return (503, render::unavailable(), None, None);
                }
            }
            if let Some(r) = site.spec.redirects.iter().find(|r| r.from == path) {
                return (302, String::new(), Some(r.to.clone()), None);
            }
            if path == site.spec.landing {
                return (200, render::landing(site), None, None);
            }
            if path == site.spec.form.action || site.spec.error_routes.iter().any(|r| r == path) {
                let rows = site.answer(path, params);
                let html = if rows.is_empty() { render::no_results(site) } else { render::results(site, &rows) };
                return (200, html, None, None);
            }
            (404, render::not_found(), None, None)
        }
    }
}
