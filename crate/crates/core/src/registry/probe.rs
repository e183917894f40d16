//! Service-availability probes used during tool admission.

use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use url::Url;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeMode {
    /// Local tools with nothing to reach; always passes.
    DeclaredStub,
    /// A TCP connection to the endpoint must open within the timeout.
    EndpointPing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HealthProbe {
    pub tool_id: String,
    pub mode: ProbeMode,
    pub endpoint: Option<Url>,
    /// Milliseconds.
    pub timeout: u64,
}

pub const DEFAULT_PROBE_TIMEOUT_MS: u64 = 2_000;

impl HealthProbe {
    pub fn declared_stub(tool_id: impl Into<String>) -> Self {
        Self { tool_id: tool_id.into(), mode: ProbeMode::DeclaredStub, endpoint: None, timeout: DEFAULT_PROBE_TIMEOUT_MS }
    }

    pub fn endpoint_ping(tool_id: impl Into<String>, endpoint: Url, timeout_ms: u64) -> Self {
        Self { tool_id: tool_id.into(), mode: ProbeMode::EndpointPing, endpoint: Some(endpoint), timeout: timeout_ms }
    }

    /// Runs the probe. `Err` carries a human-readable reason.
    pub fn check(&self) -> Result<(), String> {
        match (self.mode, &self.endpoint) {
            (ProbeMode::DeclaredStub, None) => Ok(()),
            (ProbeMode::DeclaredStub, Some(_)) => Err("a declared-stub probe must not name an endpoint".into()),
            (ProbeMode::EndpointPing, None) => Err("an endpoint-ping probe needs an endpoint".into()),
            (ProbeMode::EndpointPing, Some(url)) => ping(url, Duration::from_millis(self.timeout)),
        }
    }
}

fn ping(url: &Url, timeout: Duration) -> Result<(), String> {
    let host = url.host_str().ok_or_else(|| format!("{url} has no host"))?;
    let port = url.port_or_known_default().ok_or_else(|| format!("{url} has no port"))?;
    let addrs: Vec<_> = (host, port)
        .to_socket_addrs()
        .map_err(|e| format!("cannot resolve {host}:{port}: {e}"))?
        .collect();
    let mut last = format!("{host}:{port} resolved to no address");
    for addr in addrs {
        match TcpStream::connect_timeout(&addr, timeout) {
            Ok(_) => return Ok(()),
            Err(e) => last = format!("{addr} unreachable within {} ms: {e}", timeout.as_millis()),
        }
    }
    Err(last)
}
