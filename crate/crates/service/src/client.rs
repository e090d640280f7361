//! Blocking HTTP client for the API, used by `labctl` and the tests.

use std::time::{Duration, Instant};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::lab::SessionInfo;
use crate::model::{RunRecord, RunStatus};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot reach {url}: {reason}")]
    Transport { url: String, reason: String },
    #[error("{method} {path} returned {status}: {body}")]
    Api {
        method: &'static str,
        path: String,
        status: u16,
        body: Value,
    },
    #[error("{path}: unexpected response: {reason}")]
    Decode { path: String, reason: String },
    #[error("run {0} did not finish in time")]
    Timeout(String),
}

impl ClientError {
    /// HTTP status of an API error.
    pub fn status(&self) -> Option<u16> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }
}

pub type ClientResult<T> = Result<T, ClientError>;

/// A raw response: status and body text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone)]
pub struct Client {
    agent: ureq::Agent,
    base: String,
    token: Option<String>,
}

impl Client {
    /// `base` is the API root, e.g. `http://127.0.0.1:8080/api/v1`.
    pub fn new(base: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Client {
            agent,
            base: base.into().trim_end_matches('/').to_string(),
            token: None,
        }
    }

    /// Client for `host:port`, with the `/api/v1` prefix added.
    pub fn for_addr(addr: &str) -> Self {
        let addr = addr.trim_end_matches('/');
        let addr = addr.strip_suffix(crate::api::PREFIX).unwrap_or(addr);
        if addr.starts_with("http://") || addr.starts_with("https://") {
            Client::new(format!("{addr}{}", crate::api::PREFIX))
        } else {
            Client::new(format!("http://{addr}{}", crate::api::PREFIX))
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    /// Sends one request and returns the status and body whatever they are.
    pub fn request(
        &self,
        method: &'static str,
        path: &str,
        body: Option<&Value>,
    ) -> ClientResult<Reply> {
        let url = format!("{}{path}", self.base);
        let transport = |e: ureq::Error| ClientError::Transport {
            url: url.clone(),
            reason: e.to_string(),
        };
        let auth = self.token.as_ref().map(|t| format!("Bearer {t}"));
        let response = match method {
            "GET" | "DELETE" => {
                let mut req = if method == "GET" {
                    self.agent.get(&url)
                } else {
                    self.agent.delete(&url)
                };
                if let Some(a) = &auth {
                    req = req.header("Authorization", a);
                }
                req.call()
            }
            _ => {
                let mut req = match method {
                    "PUT" => self.agent.put(&url),
                    "PATCH" => self.agent.patch(&url),
                    _ => self.agent.post(&url),
                };
                if let Some(a) = &auth {
                    req = req.header("Authorization", a);
                }
                match body {
                    Some(b) => req.send_json(b),
                    None => req.send_empty(),
                }
            }
        }
        .map_err(transport)?;
        let status = response.status().as_u16();
        let body = response.into_body().read_to_string().map_err(transport)?;
        Ok(Reply { status, body })
    }

    fn call<T: DeserializeOwned>(
        &self,
        method: &'static str,
        path: &str,
        body: Option<&Value>,
    ) -> ClientResult<T> {
        let reply = self.request(method, path, body)?;
        if !(200..300).contains(&reply.status) {
            return Err(ClientError::Api {
                method,
                path: path.into(),
                status: reply.status,
                body: serde_json::from_str(&reply.body).unwrap_or(Value::String(reply.body)),
            });
        }
        serde_json::from_str(&reply.body).map_err(|e| ClientError::Decode {
            path: path.into(),
            reason: e.to_string(),
        })
    }

    pub fn get<T: DeserializeOwned>(&self, path: &str) -> ClientResult<T> {
        self.call("GET", path, None)
    }

    pub fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> ClientResult<T> {
        let body = serde_json::to_value(body).map_err(|e| ClientError::Decode {
            path: path.into(),
            reason: e.to_string(),
        })?;
        self.call("POST", path, Some(&body))
    }

    /// GET returning the body as text.
    pub fn get_text(&self, path: &str) -> ClientResult<String> {
        let reply = self.request("GET", path, None)?;
        if reply.status != 200 {
            return Err(ClientError::Api {
                method: "GET",
                path: path.into(),
                status: reply.status,
                body: serde_json::from_str(&reply.body).unwrap_or(Value::String(reply.body)),
            });
        }
        Ok(reply.body)
    }

    pub fn health(&self) -> ClientResult<Value> {
        self.get("/health")
    }

    /// Authenticates and keeps the token for later calls.
    pub fn login(&mut self, login: &str, password: &str) -> ClientResult<SessionInfo> {
        let session: SessionInfo = self.post(
            "/session",
            &serde_json::json!({ "login": login, "password": password }),
        )?;
        self.token = Some(session.token.clone());
        Ok(session)
    }

    /// Polls a run until it is Done or Failed.
    pub fn wait_run(&self, run_id: &str, timeout: Duration) -> ClientResult<RunRecord> {
        let deadline = Instant::now() + timeout;
        let mut pause = Duration::from_millis(5);
        loop {
            let run: RunRecord = self.get(&format!("/runs/{run_id}"))?;
            if matches!(run.status, RunStatus::Done | RunStatus::Failed) {
                return Ok(run);
            }
            if Instant::now() > deadline {
                return Err(ClientError::Timeout(run_id.into()));
            }
            std::thread::sleep(pause);
            pause = (pause * 2).min(Duration::from_millis(200));
        }
    }
}
