//! Record/replay of provider traffic as JSON Lines cassettes.
//!
//! Each line is `{request_hash, request, response, status}`. `request_hash`
//! is the SHA-256 of the request's canonical JSON (sorted keys, compact), so
//! a replay matches on content, not on call order. Identical requests replay
//! their recorded responses in order.

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::http::{Transport, WireRequest, WireResponse};
use super::ProviderError;
use crate::blob::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub request_hash: String,
    pub request: WireRequest,
    /// Raw response body, or the serialized [`ProviderError`] when the
    /// transport itself failed (status 0).
    pub response: String,
    pub status: u16,
}

pub fn request_hash(req: &WireRequest) -> String {
    // serde_json's default map is ordered, so this is canonical
    let canonical = serde_json::to_vec(req).expect("request serializes");
    sha256_hex(&canonical)
}

/// Forwards to `inner` and appends every exchange to the cassette.
pub struct RecordingTransport {
    inner: Arc<dyn Transport>,
    out: Mutex<Box<dyn Write + Send>>,
}

impl RecordingTransport {
    pub fn to_file(inner: Arc<dyn Transport>, path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self::to_writer(inner, Box::new(file)))
    }

    pub fn to_writer(inner: Arc<dyn Transport>, out: Box<dyn Write + Send>) -> Self {
        Self {
            inner,
            out: Mutex::new(out),
        }
    }
}

impl Transport for RecordingTransport {
    fn send(&self, req: &WireRequest) -> Result<WireResponse, ProviderError> {
        let result = self.inner.send(req);
        let (response, status) = match &result {
            Ok(r) => (r.body.clone(), r.status),
            Err(e) => (serde_json::to_string(e).expect("error serializes"), 0),
        };
        let entry = CassetteEntry {
            request_hash: request_hash(req),
            request: req.clone(),
            response,
            status,
        };
        let mut out = self.out.lock();
        let line = serde_json::to_string(&entry).expect("entry serializes");
        if let Err(e) = writeln!(out, "{line}").and_then(|_| out.flush()) {
            log::warn!("cassette write failed: {e}");
        }
        result
    }
}

/// Serves responses from a cassette; never touches the network.
pub struct ReplayTransport {
    entries: Mutex<HashMap<String, VecDeque<CassetteEntry>>>,
}

impl ReplayTransport {
    pub fn from_entries(entries: impl IntoIterator<Item = CassetteEntry>) -> Self {
        let mut map: HashMap<String, VecDeque<CassetteEntry>> = HashMap::new();
        for e in entries {
            map.entry(e.request_hash.clone()).or_default().push_back(e);
        }
        Self {
            entries: Mutex::new(map),
        }
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: CassetteEntry = serde_json::from_str(&line).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("cassette line {}: {e}", i + 1),
                )
            })?;
            entries.push(e);
        }
        Ok(Self::from_entries(entries))
    }

    pub fn remaining(&self) -> usize {
        self.entries.lock().values().map(VecDeque::len).sum()
    }
}

impl Transport for ReplayTransport {
    fn send(&self, req: &WireRequest) -> Result<WireResponse, ProviderError> {
        let hash = request_hash(req);
        let entry = self
            .entries
            .lock()
            .get_mut(&hash)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| {
                ProviderError::transport(false, format!("no cassette entry for request {hash}"))
            })?;
        if entry.status == 0 {
            let err: ProviderError = serde_json::from_str(&entry.response)
                .map_err(|e| ProviderError::transport(false, format!("bad cassette error: {e}")))?;
            return Err(err);
        }
        Ok(WireResponse {
            status: entry.status,
            body: entry.response,
        })
    }
}
