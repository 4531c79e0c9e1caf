//! Bandwidth throttling with a token bucket, one bucket per response.

use std::convert::Infallible;
use std::time::Duration;

use bytes::Bytes;
use futures::Stream;
use tokio::time::Instant;

use crate::log::PendingEntry;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThrottleConfig {
    /// Bytes per second, 0 for unlimited.
    pub rate: u64,
    /// Refill interval of the bucket.
    pub tick: Duration,
}

impl ThrottleConfig {
    pub const DEFAULT_TICK: Duration = Duration::from_millis(10);

    pub fn new(rate: u64, tick: Duration) -> Self {
        Self { rate, tick }
    }

    pub fn unlimited() -> Self {
        Self::new(0, Self::DEFAULT_TICK)
    }

    pub fn per_second(rate: u64) -> Self {
        Self::new(rate, Self::DEFAULT_TICK)
    }

    pub fn is_unlimited(&self) -> bool {
        self.rate == 0
    }

    /// Bytes added to the bucket per tick.
    pub fn chunk(&self) -> f64 {
        self.rate as f64 * self.tick.as_secs_f64()
    }

    /// Time to send `bytes` at this rate, ignoring tick granularity.
    pub fn transfer_time(&self, bytes: u64) -> Duration {
        if self.is_unlimited() {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(bytes as f64 / self.rate as f64)
        }
    }
}

impl Default for ThrottleConfig {
    fn default() -> Self {
        Self::unlimited()
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid rate {0:?}: expected bytes per second such as 250000, 500KB/s or 1MB/s")]
pub struct RateError(pub String);

/// Parses a rate such as `1MB/s`, `0.1MB/s`, `500KB/s`, `2MiB/s` or a plain
/// byte count. Decimal units are powers of 1000.
pub fn parse_rate(text: &str) -> Result<u64, RateError> {
    let err = || RateError(text.to_string());
    let t = text.trim();
    let t = t
        .strip_suffix("/s")
        .or_else(|| t.strip_suffix("ps"))
        .unwrap_or(t)
        .trim();
    let split = t.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(t.len());
    let (number, unit) = t.split_at(split);
    let scale: f64 = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1.0,
        "kb" | "k" => 1e3,
        "mb" | "m" => 1e6,
        "gb" | "g" => 1e9,
        "kib" => 1024.0,
        "mib" => 1024.0 * 1024.0,
        "gib" => 1024.0 * 1024.0 * 1024.0,
        _ => return Err(err()),
    };
    let value: f64 = number.parse().map_err(|_| err())?;
    let rate = (value * scale).round();
    if !rate.is_finite() || rate < 0.0 || rate > u64::MAX as f64 {
        return Err(err());
    }
    Ok(rate as u64)
}

const MIN_BURST: Duration = Duration::from_millis(20);

/// Classic token bucket measured in bytes.
#[derive(Debug, Clone)]
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    /// Starts empty so a transfer cannot open with a burst. Holds two ticks
    /// of tokens, but at least `MIN_BURST` worth, so late timer wakeups do
    /// not lose bandwidth.
    pub fn new(config: ThrottleConfig, now: Instant) -> Self {
        let burst = config.tick.max(MIN_BURST / 2).as_secs_f64() * 2.0;
        Self {
            rate: config.rate as f64,
            capacity: (config.rate as f64 * burst).max(1.0),
            tokens: 0.0,
            last: now,
        }
    }

    pub fn refill(&mut self, now: Instant) {
        let dt = now.saturating_duration_since(self.last).as_secs_f64();
        self.tokens = (self.tokens + self.rate * dt).min(self.capacity);
        self.last = now;
    }

    /// Takes up to `want` whole tokens.
    pub fn take(&mut self, want: usize) -> usize {
        let n = (self.tokens.floor() as usize).min(want);
        self.tokens -= n as f64;
        n
    }

    pub fn tokens(&self) -> f64 {
        self.tokens
    }
}

struct Transfer {
    data: Bytes,
    offset: usize,
    config: ThrottleConfig,
    bucket: TokenBucket,
    next: Instant,
    entry: PendingEntry,
}

/// Streams `data` at the configured rate. `entry` is logged when the stream
/// finishes or is dropped by a closed connection.
pub fn throttled(
    data: Bytes,
    config: ThrottleConfig,
    entry: PendingEntry,
) -> impl Stream<Item = Result<Bytes, Infallible>> + Send {
    let now = Instant::now();
    let state = Transfer {
        data,
        offset: 0,
        config,
        bucket: TokenBucket::new(config, now),
        next: now + config.tick,
        entry,
    };
    futures::stream::unfold(state, |mut st| async move {
        let remaining = st.data.len() - st.offset;
        if remaining == 0 {
            st.entry.finish();
            return None;
        }
        let n = if st.config.is_unlimited() {
            remaining
        } else {
            loop {
                tokio::time::sleep_until(st.next).await;
                let now = Instant::now();
                st.next += st.config.tick;
                if st.next < now {
                    st.next = now + st.config.tick;
                }
                st.bucket.refill(now);
                let n = st.bucket.take(remaining);
                if n > 0 {
                    break n;
                }
            }
        };
        let chunk = st.data.slice(st.offset..st.offset + n);
        st.offset += n;
        st.entry.add(n);
        // the connection may never poll past a body of known length
        if st.offset == st.data.len() {
            st.entry.finish();
        }
        Some((Ok(chunk), st))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates() {
        assert_eq!(parse_rate("1MB/s"), Ok(1_000_000));
        assert_eq!(parse_rate("0.1MB/s"), Ok(100_000));
        assert_eq!(parse_rate("500KB/s"), Ok(500_000));
        assert_eq!(parse_rate("2MiB/s"), Ok(2 * 1024 * 1024));
        assert_eq!(parse_rate("250000"), Ok(250_000));
        assert_eq!(parse_rate("0"), Ok(0));
        assert_eq!(parse_rate(" 3 mb/s "), Ok(3_000_000));
        assert!(parse_rate("fast").is_err());
        assert!(parse_rate("1TB/s").is_err());
        assert!(parse_rate("-1MB/s").is_err());
        assert!(parse_rate("").is_err());
    }

    #[test]
    fn bucket_caps_and_takes_whole_tokens() {
        let t0 = Instant::now();
        let cfg = ThrottleConfig::new(1000, Duration::from_millis(10));
        let mut b = TokenBucket::new(cfg, t0);
        assert_eq!(b.take(100), 0);
        b.refill(t0 + Duration::from_millis(5));
        assert_eq!(b.take(100), 5);
        b.refill(t0 + Duration::from_secs(10));
        assert_eq!(b.tokens(), 20.0);
        assert_eq!(b.take(7), 7);
        assert_eq!(b.take(100), 13);

        // short ticks still allow 20 ms of burst
        let cfg = ThrottleConfig::new(1000, Duration::from_millis(1));
        let mut b = TokenBucket::new(cfg, t0);
        b.refill(t0 + Duration::from_secs(1));
        assert_eq!(b.tokens(), 20.0);
    }

    #[test]
    fn transfer_time() {
        assert_eq!(
            ThrottleConfig::per_second(500_000).transfer_time(1_000_000),
            Duration::from_secs(2)
        );
        assert_eq!(ThrottleConfig::unlimited().transfer_time(10), Duration::ZERO);
    }
}
