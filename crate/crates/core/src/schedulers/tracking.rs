use crate::error::{Error, Result};

/// How the observation probability of a tracked round is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quantifier {
    /// `p_s` was computable at admission (clairvoyant or fixed).
    Known(f64),
    /// Pareto scale `c_s`; `p_s = min{1, c_s/(d_s+1)}` once `d_s` is revealed.
    ProxyScale(f64),
}

/// A tracked round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entry {
    pub round: usize,
    /// `s + d_s`, the round its feedback is revealed.
    pub arrival: usize,
    /// `s + d̃_s` for preemptive policies.
    pub proxy_end: Option<usize>,
    pub quantifier: Quantifier,
}

impl Entry {
    /// Round after which the entry is no longer in the set.
    fn leaves_at(&self) -> usize {
        match self.proxy_end {
            Some(end) => end.min(self.arrival),
            None => self.arrival,
        }
    }
}

/// Bounded set of tracked rounds. Capacity is a hard limit: inserting into a
/// full set is an invariant violation, not a silent drop.
#[derive(Debug, Clone)]
pub struct TrackingSet {
    capacity: usize,
    entries: Vec<Entry>,
    next_event: usize,
    last_admitted: usize,
    max_occupancy: usize,
}

impl TrackingSet {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: Vec::with_capacity(capacity.min(1024)),
            next_event: usize::MAX,
            last_admitted: 0,
            max_occupancy: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn max_occupancy(&self) -> usize {
        self.max_occupancy
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn contains(&self, round: usize) -> bool {
        self.entries.iter().any(|e| e.round == round)
    }

    pub fn insert(&mut self, entry: Entry) -> Result<()> {
        if self.is_full() {
            return Err(Error::Invariant(format!(
                "round {} admitted into a full tracking set (capacity {})",
                entry.round, self.capacity
            )));
        }
        // Rounds are admitted in increasing order, so a removed round can
        // never come back.
        if entry.round <= self.last_admitted {
            return Err(Error::Invariant(format!(
                "round {} admitted after round {}",
                entry.round, self.last_admitted
            )));
        }
        if entry.arrival < entry.round {
            return Err(Error::Invariant(format!(
                "round {} arrives in the past",
                entry.round
            )));
        }
        self.last_admitted = entry.round;
        self.next_event = self.next_event.min(entry.leaves_at());
        self.entries.push(entry);
        self.max_occupancy = self.max_occupancy.max(self.entries.len());
        Ok(())
    }

    /// Removes and returns, in round order, the entries whose feedback is
    /// revealed at `t`. A proxy expiry at the same round does not prevent
    /// delivery.
    pub fn take_arrivals(&mut self, t: usize, out: &mut Vec<Entry>) {
        if t < self.next_event {
            return;
        }
        let start = out.len();
        let mut i = 0;
        while i < self.entries.len() {
            if self.entries[i].arrival == t {
                out.push(self.entries.swap_remove(i));
            } else {
                i += 1;
            }
        }
        out[start..].sort_unstable_by_key(|e| e.round);
        self.refresh_next_event();
    }

    /// Removes entries whose proxy delay expires at `t` (preemption) and
    /// returns their rounds in increasing order.
    pub fn take_preempted(&mut self, t: usize, out: &mut Vec<usize>) {
        if t < self.next_event {
            return;
        }
        let start = out.len();
        let mut i = 0;
        while i < self.entries.len() {
            if self.entries[i].proxy_end == Some(t) {
                out.push(self.entries.swap_remove(i).round);
            } else {
                i += 1;
            }
        }
        out[start..].sort_unstable();
        self.refresh_next_event();
    }

    /// Checks that nothing in the set should already have left by the end of
    /// round `t`.
    pub fn check_no_stale(&self, t: usize) -> Result<()> {
        match self.entries.iter().find(|e| e.leaves_at() <= t) {
            Some(e) => Err(Error::Invariant(format!(
                "round {} still tracked after it left at round {}",
                e.round,
                e.leaves_at()
            ))),
            None => Ok(()),
        }
    }

    fn refresh_next_event(&mut self) {
        self.next_event = self
            .entries
            .iter()
            .map(Entry::leaves_at)
            .min()
            .unwrap_or(usize::MAX);
    }
}
