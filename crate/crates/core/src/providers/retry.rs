use std::sync::Arc;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use rand::Rng;

use super::{
    EmbedInput, Embedder, ImageProvider, ImageRequest, ProviderError, TextCapabilities,
    TextProvider, TextRequest,
};

/// Exponential backoff with jitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base: Duration,
    pub cap: Duration,
}

impl RetryPolicy {
    /// 500 ms base, 8 s cap.
    pub fn standard(max_retries: u32) -> Self {
        Self {
            max_retries,
            base: Duration::from_millis(500),
            cap: Duration::from_secs(8),
        }
    }

    /// Delay before retry number `retry` (0-based), with `jitter` in [0, 1).
    /// The result lies in [d/2, d) where d = min(cap, base·2^retry).
    pub fn delay(&self, retry: u32, jitter: f64) -> Duration {
        let exp = self
            .base
            .checked_mul(1u32.checked_shl(retry.min(31)).unwrap_or(u32::MAX))
            .unwrap_or(self.cap)
            .min(self.cap);
        exp.mul_f64(0.5 + 0.5 * jitter.clamp(0.0, 1.0))
    }

    /// Run `op` until it succeeds, fails with a non-retryable error, or the
    /// retry budget is spent. `op` receives the attempt number.
    pub fn run<T>(
        &self,
        sleeper: &dyn Sleeper,
        mut op: impl FnMut(u32) -> Result<T, ProviderError>,
    ) -> Result<T, ProviderError> {
        let mut attempt = 0;
        loop {
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if e.retryable && attempt < self.max_retries => {
                    let jitter = rand::thread_rng().gen::<f64>();
                    log::debug!("retrying after {e} (attempt {attempt})");
                    sleeper.sleep(self.delay(attempt, jitter));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Counting semaphore bounding concurrent provider calls.
pub struct InFlightLimit {
    permits: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a InFlightLimit);

impl InFlightLimit {
    pub fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock();
        while *n == 0 {
            self.freed.wait(&mut n);
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock() += 1;
        self.0.freed.notify_one();
    }
}

/// Wraps a provider with retries and an in-flight cap.
pub struct Resilient<P: ?Sized> {
    inner: Arc<P>,
    policy: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
    limit: InFlightLimit,
}

impl<P: ?Sized> Resilient<P> {
    pub fn new(inner: Arc<P>, policy: RetryPolicy, sleeper: Arc<dyn Sleeper>, in_flight: usize) -> Self {
        Self {
            inner,
            policy,
            sleeper,
            limit: InFlightLimit::new(in_flight),
        }
    }

    fn call<T>(&self, op: impl Fn(&P) -> Result<T, ProviderError>) -> Result<T, ProviderError> {
        self.policy.run(self.sleeper.as_ref(), |_| {
            let _permit = self.limit.acquire();
            op(&self.inner)
        })
    }
}

impl<P: TextProvider + ?Sized> TextProvider for Resilient<P> {
    fn capabilities(&self) -> TextCapabilities {
        self.inner.capabilities()
    }

    fn generate(&self, req: &TextRequest) -> Result<String, ProviderError> {
        self.call(|p| p.generate(req))
    }
}

impl<P: ImageProvider + ?Sized> ImageProvider for Resilient<P> {
    fn generate(&self, req: &ImageRequest) -> Result<Vec<u8>, ProviderError> {
        self.call(|p| p.generate(req))
    }

    fn edit(&self, base: &[u8], req: &ImageRequest) -> Result<Vec<u8>, ProviderError> {
        self.call(|p| p.edit(base, req))
    }
}

impl<P: Embedder + ?Sized> Embedder for Resilient<P> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed(&self, inputs: &[EmbedInput]) -> Result<Vec<Vec<f64>>, ProviderError> {
        self.call(|p| p.embed(inputs))
    }
}
