//! One-way network link with constant latency and i.i.d. Bernoulli loss.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Slack when comparing a delivery deadline with the poll clock, so that
/// `k·Ts + delay` and `(k + d)·Ts` computed separately compare equal.
const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Packet<T> {
    pub seq: u64,
    pub send_time: T,
    pub payload: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// One-way latency (s).
    pub delay: f64,
    pub loss_prob: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ChannelConfig {
    pub fn ideal() -> Self {
        Self { delay: 0.0, loss_prob: 0.0, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delay >= 0.0 && self.delay.is_finite()) {
            return Err(Error::Domain(format!("channel delay must be >= 0, got {}", self.delay)));
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(Error::Domain(format!("loss probability must be in [0, 1], got {}", self.loss_prob)));
        }
        Ok(())
    }
}

/// Fate of one sent packet.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry<T> {
    pub seq: u64,
    pub send_time: T,
    pub dropped: bool,
    /// Set once the packet has been handed to the receiver.
    pub delivery_time: Option<T>,
}

#[derive(Debug, Clone)]
pub struct Channel<T> {
    delay: T,
    loss_prob: f64,
    rng: ChaCha8Rng,
    next_seq: u64,
    last_send: Option<T>,
    last_poll: Option<T>,
    in_flight: VecDeque<(T, Packet<T>)>,
    last_delivered: Option<Packet<T>>,
    log: Vec<LogEntry<T>>,
    delivered: u64,
    dropped: u64,
}

impl<T: Scalar> Channel<T> {
    pub fn new(config: ChannelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            delay: T::lit(config.delay),
            loss_prob: config.loss_prob,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            next_seq: 0,
            last_send: None,
            last_poll: None,
            in_flight: VecDeque::new(),
            last_delivered: None,
            log: Vec::new(),
            delivered: 0,
            dropped: 0,
        })
    }

    /// Hands a payload to the link at time `now`. The packet is either
    /// queued for delivery at `now + delay` or dropped; its sequence number
    /// is returned in both cases.
    pub fn send(&mut self, payload: Vec<T>, now: T) -> Result<u64> {
        if let Some(prev) = self.last_send {
            if now < prev {
                return Err(Error::Domain(format!("send time went backwards: {now} < {prev}")));
            }
        }
        if !now.is_finite() {
            return Err(Error::Domain("send time must be finite".into()));
        }
        self.last_send = Some(now);
        let seq = self.next_seq;
        self.next_seq += 1;
        // one draw per packet, whatever the probability, keeps the loss
        // pattern a function of the seed and the packet index only
        let lost = self.rng.random::<f64>() < self.loss_prob;
        self.log.push(LogEntry { seq, send_time: now, dropped: lost, delivery_time: None });
        if lost {
            self.dropped += 1;
        } else {
            self.in_flight.push_back((now + self.delay, Packet { seq, send_time: now, payload }));
        }
        Ok(seq)
    }

    /// Packets whose delivery time is at or before `now`, in sequence order.
    pub fn poll(&mut self, now: T) -> Vec<Packet<T>> {
        if let Some(prev) = self.last_poll {
            if now < prev {
                return Vec::new();
            }
        }
        self.last_poll = Some(now);
        let deadline = now + T::lit(TIME_EPS);
        let mut out = Vec::new();
        while self.in_flight.front().is_some_and(|(at, _)| *at <= deadline) {
            let (at, pkt) = self.in_flight.pop_front().expect("front checked above");
            self.log[pkt.seq as usize].delivery_time = Some(at);
            self.delivered += 1;
            out.push(pkt);
        }
        if let Some(last) = out.last() {
            self.last_delivered = Some(last.clone());
        }
        out
    }

    /// Most recently delivered packet, for holding the last value across losses.
    pub fn last_delivered(&self) -> Option<&Packet<T>> {
        self.last_delivered.as_ref()
    }

    pub fn sent(&self) -> u64 {
        self.next_seq
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    pub fn log(&self) -> &[LogEntry<T>] {
        &self.log
    }

    /// Columns: seq, send_time, delivered_flag, delivery_time (empty when
    /// the packet was dropped or is still in flight).
    pub fn log_csv(&self) -> String {
        let mut s = String::from("seq,send_time,delivered_flag,delivery_time\n");
        for e in &self.log {
            let flag = u8::from(e.delivery_time.is_some());
            let at = e.delivery_time.map(|t| t.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{}", e.seq, e.send_time, flag, at);
        }
        s
    }
}
