//! Retry policy and in-flight limiting shared by the remote HTTP clients.

use std::thread;
use std::time::Duration;

use self::sync::Semaphore;

/// Exponential backoff: attempt `n` (1-based) that fails waits
/// `base_delay * 2^(n-1)` before the next attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn delay_after(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(1))
    }

    /// Runs `op` until it succeeds, returns a non-retryable error, or the
    /// attempt budget is spent. Returns the last error together with the
    /// number of attempts made.
    pub fn run<T, E>(
        &self,
        mut op: impl FnMut(u32) -> Result<T, E>,
        is_retryable: impl Fn(&E) -> bool,
    ) -> Result<T, (E, u32)> {
        let attempts = self.max_attempts.max(1);
        let mut attempt = 1;
        loop {
            match op(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if attempt < attempts && is_retryable(&e) => {
                    log::warn!("attempt {attempt}/{attempts} failed, retrying");
                    thread::sleep(self.delay_after(attempt));
                    attempt += 1;
                }
                Err(e) => return Err((e, attempt)),
            }
        }
    }
}

mod sync {
    use std::sync::{Condvar, Mutex};

    /// Counting semaphore for capping concurrent blocking requests.
    #[derive(Debug)]
    pub struct Semaphore {
        permits: Mutex<usize>,
        available: Condvar,
    }

    pub struct Permit<'a> {
        sem: &'a Semaphore,
    }

    impl Semaphore {
        pub fn new(permits: usize) -> Self {
            Self {
                permits: Mutex::new(permits.max(1)),
                available: Condvar::new(),
            }
        }

        pub fn acquire(&self) -> Permit<'_> {
            let mut free = self.permits.lock().unwrap_or_else(|e| e.into_inner());
            while *free == 0 {
                free = self.available.wait(free).unwrap_or_else(|e| e.into_inner());
            }
            *free -= 1;
            Permit { sem: self }
        }
    }

    impl Drop for Permit<'_> {
        fn drop(&mut self) {
            let mut free = self.sem.permits.lock().unwrap_or_else(|e| e.into_inner());
            *free += 1;
            self.sem.available.notify_one();
        }
    }
}

/// Caps the number of requests in flight at once.
#[derive(Debug)]
pub struct InFlightLimit {
    sem: Semaphore,
    cap: usize,
}

impl InFlightLimit {
    pub fn new(cap: usize) -> Self {
        Self {
            sem: Semaphore::new(cap),
            cap: cap.max(1),
        }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        let _permit = self.sem.acquire();
        f()
    }
}
