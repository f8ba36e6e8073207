use std::time::{SystemTime, UNIX_EPOCH};

use tokio::time::Instant;

/// Source of message timestamps in milliseconds.
///
/// `Virtual` counts from a fixed epoch using tokio's clock, so under a paused
/// runtime every timestamp depends only on the schedule of events.
#[derive(Debug, Clone, Copy)]
pub enum Clock {
    System,
    Virtual { origin: Instant, epoch_ms: u64 },
}

impl Clock {
    /// Must be called inside a tokio runtime.
    pub fn virtual_at(epoch_ms: u64) -> Self {
        Clock::Virtual {
            origin: Instant::now(),
            epoch_ms,
        }
    }

    pub fn now_ms(&self) -> u64 {
        match self {
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis() as u64),
            Clock::Virtual { origin, epoch_ms } => epoch_ms + origin.elapsed().as_millis() as u64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    #[tokio::test(start_paused = true)]
    async fn virtual_clock_follows_tokio_time() {
        let clock = Clock::virtual_at(1_000);
        assert_eq!(clock.now_ms(), 1_000);
        tokio::time::sleep(Duration::from_secs(90)).await;
        assert_eq!(clock.now_ms(), 91_000);
    }
}
