//! Long generations run on the blocking pool. A handler waits up to the
//! configured time; past that the caller gets a job handle to poll.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use axum::http::StatusCode;
use cocreate_core::ids::{IdGenerator, JobId};
use parking_lot::Mutex;
use serde::Serialize;
use serde_json::Value;

/// A finished handler result: status plus JSON body.
pub type Outcome = (StatusCode, Value);

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum JobState {
    Pending,
    Succeeded { http_status: u16, result: Value },
    Failed { http_status: u16, error: Value },
}

impl JobState {
    fn from_outcome((status, body): Outcome) -> Self {
        if status.is_success() {
            JobState::Succeeded {
                http_status: status.as_u16(),
                result: body,
            }
        } else {
            JobState::Failed {
                http_status: status.as_u16(),
                error: body,
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct JobView {
    pub job_id: JobId,
    #[serde(flatten)]
    pub state: JobState,
}

pub enum Started {
    Done(Outcome),
    Pending(JobId),
}

pub struct JobRegistry {
    jobs: Mutex<HashMap<JobId, JobState>>,
    ids: Arc<IdGenerator>,
    wait: Duration,
}

impl JobRegistry {
    pub fn new(ids: Arc<IdGenerator>, wait: Duration) -> Self {
        Self {
            jobs: Mutex::new(HashMap::new()),
            ids,
            wait,
        }
    }

    /// Run `work` on the blocking pool; return its outcome if it finishes
    /// within the wait budget, otherwise a job id.
    pub async fn start(
        self: &Arc<Self>,
        work: impl FnOnce() -> Outcome + Send + 'static,
    ) -> Started {
        let mut handle = tokio::task::spawn_blocking(work);
        match tokio::time::timeout(self.wait, &mut handle).await {
            Ok(joined) => Started::Done(flatten(joined)),
            Err(_) => {
                let job_id = self.ids.job();
                self.jobs.lock().insert(job_id.clone(), JobState::Pending);
                let me = self.clone();
                let id = job_id.clone();
                tokio::spawn(async move {
                    let outcome = flatten(handle.await);
                    log::info!("job {id} finished with {}", outcome.0);
                    me.jobs.lock().insert(id, JobState::from_outcome(outcome));
                });
                Started::Pending(job_id)
            }
        }
    }

    pub fn get(&self, id: &JobId) -> Option<JobView> {
        self.jobs.lock().get(id).map(|state| JobView {
            job_id: id.clone(),
            state: state.clone(),
        })
    }
}

fn flatten(joined: Result<Outcome, tokio::task::JoinError>) -> Outcome {
    joined.unwrap_or_else(|e| {
        log::error!("generation task panicked: {e}");
        (
            StatusCode::INTERNAL_SERVER_ERROR,
            serde_json::json!({"code": "internal", "detail": "generation task failed"}),
        )
    })
}
