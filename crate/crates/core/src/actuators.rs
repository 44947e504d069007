//! Electromagnetic lock and siren.
//!
//! The lock is fail-secure: energized (door bonded) except while a grant
//! pulse is running. A pulse started at tick `t` with duration `d` keeps the
//! door passable for ticks `t..t + d` and the lock re-energizes at `t + d`.
//! The siren latches on until explicitly silenced.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ActuatorError {
    #[error("grant requested at tick {now} while a pulse runs until {until}")]
    PulseActive { now: u64, until: u64 },
    #[error("grant pulse duration must be at least 1 ms")]
    ZeroDuration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimedPulse {
    pub started_at: u64,
    pub duration_ms: u64,
}

impl TimedPulse {
    pub fn ends_at(&self) -> u64 {
        self.started_at + self.duration_ms
    }

    pub fn is_active(&self, tick: u64) -> bool {
        (self.started_at..self.ends_at()).contains(&tick)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lock {
    energized: bool,
    pulse: Option<TimedPulse>,
}

impl Default for Lock {
    fn default() -> Self {
        Lock {
            energized: true,
            pulse: None,
        }
    }
}

impl Lock {
    pub fn new() -> Self {
        Self::default()
    }

    /// True while the door is bonded.
    pub fn is_energized(&self) -> bool {
        self.energized
    }

    pub fn pulse(&self) -> Option<TimedPulse> {
        self.pulse
    }

    /// De-energizes the coil now and schedules re-locking.
    pub fn grant_pulse(&mut self, now: u64, duration_ms: u64) -> Result<TimedPulse, ActuatorError> {
        if duration_ms == 0 {
            return Err(ActuatorError::ZeroDuration);
        }
        if let Some(p) = self.pulse.filter(|p| p.is_active(now)) {
            return Err(ActuatorError::PulseActive {
                now,
                until: p.ends_at(),
            });
        }
        let pulse = TimedPulse {
            started_at: now,
            duration_ms,
        };
        self.energized = false;
        self.pulse = Some(pulse);
        Ok(pulse)
    }

    /// Re-energizes once the running pulse has ended. Returns true when the
    /// lock state changed.
    pub fn expire_pulse(&mut self, now: u64) -> bool {
        match self.pulse {
            Some(p) if now >= p.ends_at() => {
                self.pulse = None;
                self.energized = true;
                true
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Alarm {
    sounding: bool,
}

impl Alarm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_sounding(&self) -> bool {
        self.sounding
    }

    pub fn alarm_on(&mut self) {
        self.sounding = true;
    }

    pub fn alarm_off(&mut self) {
        self.sounding = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Steps the lock tick by tick and returns the ticks it was open.
    fn open_ticks(grants: &[(u64, u64)], horizon: u64) -> Vec<u64> {
        let mut lock = Lock::new();
        let mut open = Vec::new();
        for t in 0..horizon {
            lock.expire_pulse(t);
            if let Some(&(_, d)) = grants.iter().find(|(at, _)| *at == t) {
                lock.grant_pulse(t, d).unwrap();
            }
            if !lock.is_energized() {
                open.push(t);
            }
        }
        open
    }

    #[test]
    fn five_second_grant() {
        let open = open_ticks(&[(100, 5000)], 6000);
        assert_eq!(open.first(), Some(&100));
        assert_eq!(open.last(), Some(&5099));
        assert_eq!(open.len(), 5000);
    }

    #[test]
    fn one_ms_pulse_opens_one_tick() {
        assert_eq!(open_ticks(&[(7, 1)], 20), vec![7]);
    }

    #[test]
    fn overlapping_grant_is_rejected() {
        let mut lock = Lock::new();
        lock.grant_pulse(10, 100).unwrap();
        assert_eq!(
            lock.grant_pulse(50, 100),
            Err(ActuatorError::PulseActive {
                now: 50,
                until: 110
            })
        );
        assert!(!lock.is_energized());
        assert!(lock.expire_pulse(110));
        assert!(lock.is_energized());
        assert!(lock.grant_pulse(110, 100).is_ok());
    }

    #[test]
    fn zero_duration_rejected() {
        assert_eq!(
            Lock::new().grant_pulse(0, 0),
            Err(ActuatorError::ZeroDuration)
        );
    }

    #[test]
    fn expiry_before_end_is_a_no_op() {
        let mut lock = Lock::new();
        lock.grant_pulse(0, 10).unwrap();
        assert!(!lock.expire_pulse(9));
        assert!(!lock.is_energized());
    }

    #[test]
    fn alarm_latches_until_off() {
        let mut alarm = Alarm::new();
        alarm.alarm_on();
        alarm.alarm_on();
        assert!(alarm.is_sounding());
        alarm.alarm_off();
        assert!(!alarm.is_sounding());
    }

    proptest! {
        #[test]
        fn open_ticks_equal_union_of_pulses(
            starts in proptest::collection::btree_set(0u64..2000, 1..6),
            durations in proptest::collection::vec(1u64..400, 6),
        ) {
            // drop grants that would overlap the previous pulse
            let mut grants = Vec::new();
            let mut free_at = 0;
            for (start, d) in starts.into_iter().zip(durations) {
                if start >= free_at {
                    grants.push((start, d));
                    free_at = start + d;
                }
            }
            let open = open_ticks(&grants, 3000);
            let expected: Vec<u64> = grants.iter().flat_map(|&(s, d)| s..s + d).collect();
            prop_assert_eq!(open, expected);
        }
    }
}
