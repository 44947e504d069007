//! Panel controller: the passcode entry state machine.
//!
//! [`PanelState::step`] consumes one [`Event`] and returns the [`Effect`]s the
//! peripherals must carry out. The transition function is deterministic and
//! does no I/O; the harness owns the clock, the keypad and the outputs.
//!
//! ```text
//!   IDLE --digit--> COLLECT --4th digit--> GRANTED  (fresh valid code)
//!                      |                   DENY_MSG (used code, or wrong < limit)
//!                      |                   LOCKDOWN (wrong == limit)
//!                      +--'*'--> IDLE
//!   GRANTED/DENY_MSG --deadline--> IDLE
//!   any --admin reset--> IDLE
//! ```

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::credential::{encode_passcode, Database, Digit, Passcode, CODE_LEN};
use crate::keypad::{Key, KeyEvent};
use crate::lcd::LCD_COLS;

pub const MSG_IDLE: &str = "Enter Password";
pub const MSG_GRANTED: &str = "Access Granted";
pub const MSG_WRONG: &str = "Wrong Password";
pub const MSG_REPLAY: &str = "Code Used";
pub const MSG_LOCKED: &str = "System Locked";

pub const DEFAULT_ATTEMPT_LIMIT: u32 = 3;
pub const DEFAULT_UNLOCK_MS: u64 = 5000;
pub const DEFAULT_DENY_MS: u64 = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Idle,
    Collect,
    Granted,
    DenyMsg,
    Lockdown,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Idle => "IDLE",
            Mode::Collect => "COLLECT",
            Mode::Granted => "GRANTED",
            Mode::DenyMsg => "DENY_MSG",
            Mode::Lockdown => "LOCKDOWN",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Mode::Idle,
            Mode::Collect,
            Mode::Granted,
            Mode::DenyMsg,
            Mode::Lockdown,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LogKind {
    Grant,
    DenyWrong,
    DenyReplay,
    Lockdown,
    Reset,
}

impl LogKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LogKind::Grant => "GRANT",
            LogKind::DenyWrong => "DENY_WRONG",
            LogKind::DenyReplay => "DENY_REPLAY",
            LogKind::Lockdown => "LOCKDOWN",
            LogKind::Reset => "RESET",
        }
    }
}

impl fmt::Display for LogKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LogKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            LogKind::Grant,
            LogKind::DenyWrong,
            LogKind::DenyReplay,
            LogKind::Lockdown,
            LogKind::Reset,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| format!("unknown log kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Key(KeyEvent),
    Tick(u64),
    AdminReset,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    LcdWrite { row: usize, text: String },
    LockGrant { duration_ms: u64 },
    AlarmOn,
    AlarmOff,
    LogEntry { kind: LogKind, detail: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ControllerError {
    #[error("event {index}: tick {got} does not advance past {last}")]
    NonMonotonicTick { index: usize, got: u64, last: u64 },
    #[error("invalid controller config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControllerConfig {
    pub attempt_limit: u32,
    pub unlock_ms: u64,
    pub deny_ms: u64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            attempt_limit: DEFAULT_ATTEMPT_LIMIT,
            unlock_ms: DEFAULT_UNLOCK_MS,
            deny_ms: DEFAULT_DENY_MS,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        if self.attempt_limit == 0 {
            return Err(ControllerError::InvalidConfig("attempt_limit must be >= 1"));
        }
        if self.unlock_ms == 0 || self.deny_ms == 0 {
            return Err(ControllerError::InvalidConfig("durations must be >= 1 ms"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PanelState {
    config: ControllerConfig,
    mode: Mode,
    buffer: [Digit; CODE_LEN],
    buffered: usize,
    wrong_count: u32,
    timer_deadline: Option<u64>,
    // latest time seen on any event, and on the last Tick event
    now: u64,
    last_tick: Option<u64>,
    db: Arc<Database>,
}

/// Fresh panel in IDLE plus the effects that paint the idle screen.
pub fn initial_state(db: Database, config: ControllerConfig) -> (PanelState, Vec<Effect>) {
    let state = PanelState {
        config,
        mode: Mode::Idle,
        buffer: [Digit::new(0).unwrap(); CODE_LEN],
        buffered: 0,
        wrong_count: 0,
        timer_deadline: None,
        now: 0,
        last_tick: None,
        db: Arc::new(db),
    };
    (state, idle_screen())
}

fn lcd(row: usize, text: &str) -> Effect {
    Effect::LcdWrite {
        row,
        text: text.to_string(),
    }
}

fn log(kind: LogKind, detail: impl Into<String>) -> Effect {
    Effect::LogEntry {
        kind,
        detail: detail.into(),
    }
}

fn idle_screen() -> Vec<Effect> {
    vec![lcd(0, MSG_IDLE), lcd(1, "")]
}

impl PanelState {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn buffer(&self) -> &[Digit] {
        &self.buffer[..self.buffered]
    }

    pub fn wrong_count(&self) -> u32 {
        self.wrong_count
    }

    pub fn timer_deadline(&self) -> Option<u64> {
        self.timer_deadline
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn database(&self) -> &Database {
        &self.db
    }

    pub fn into_database(self) -> Database {
        Arc::unwrap_or_clone(self.db)
    }

    /// Rejects events whose time runs backwards. Key events may share a
    /// tick with the preceding Tick; Tick events must strictly increase.
    pub fn check_event(&self, event: &Event) -> Result<(), (u64, u64)> {
        match *event {
            Event::Key(KeyEvent { at_tick, .. }) if at_tick < self.now => Err((at_tick, self.now)),
            Event::Tick(t) if t < self.now || self.last_tick.is_some_and(|last| t <= last) => {
                Err((t, self.now.max(self.last_tick.unwrap_or(0))))
            }
            _ => Ok(()),
        }
    }

    pub fn step(&mut self, event: &Event) -> Vec<Effect> {
        match *event {
            Event::Tick(now) => {
                self.now = self.now.max(now);
                self.last_tick = Some(now);
                self.on_tick(now)
            }
            Event::Key(KeyEvent { key, at_tick }) => {
                self.now = self.now.max(at_tick);
                self.on_key(key, at_tick)
            }
            Event::AdminReset => self.on_admin_reset(),
        }
    }

    fn on_tick(&mut self, now: u64) -> Vec<Effect> {
        match (self.mode, self.timer_deadline) {
            (Mode::Granted | Mode::DenyMsg, Some(deadline)) if now >= deadline => {
                self.mode = Mode::Idle;
                self.timer_deadline = None;
                idle_screen()
            }
            _ => Vec::new(),
        }
    }

    fn on_key(&mut self, key: Key, now: u64) -> Vec<Effect> {
        match (self.mode, key) {
            (Mode::Idle | Mode::Collect, Key::Digit(d)) => {
                self.buffer[self.buffered] = d;
                self.buffered += 1;
                self.mode = Mode::Collect;
                if self.buffered == CODE_LEN {
                    self.validate(now)
                } else {
                    vec![lcd(1, &"*".repeat(self.buffered))]
                }
            }
            (Mode::Collect, Key::Star) => {
                self.buffered = 0;
                self.mode = Mode::Idle;
                vec![lcd(1, "")]
            }
            _ => Vec::new(),
        }
    }

    fn validate(&mut self, now: u64) -> Vec<Effect> {
        let code = encode_passcode(&Passcode::new(self.buffer));
        self.buffered = 0;
        match self.db.lookup(code) {
            Some(user) if !user.is_used() => {
                let name = user.name().to_string();
                Arc::make_mut(&mut self.db)
                    .mark_used(code)
                    .expect("code was just found");
                self.mode = Mode::Granted;
                self.wrong_count = 0;
                self.timer_deadline = Some(now + self.config.unlock_ms);
                let shown: String = name.chars().take(LCD_COLS).collect();
                vec![
                    Effect::LockGrant {
                        duration_ms: self.config.unlock_ms,
                    },
                    lcd(0, MSG_GRANTED),
                    lcd(1, &shown),
                    log(LogKind::Grant, name),
                ]
            }
            Some(user) => {
                let detail = user.name().to_string();
                self.mode = Mode::DenyMsg;
                self.timer_deadline = Some(now + self.config.deny_ms);
                vec![
                    lcd(0, MSG_REPLAY),
                    lcd(1, ""),
                    log(LogKind::DenyReplay, detail),
                ]
            }
            None => {
                self.wrong_count += 1;
                let limit = self.config.attempt_limit;
                let attempt = log(
                    LogKind::DenyWrong,
                    format!("attempt {}/{}", self.wrong_count, limit),
                );
                if self.wrong_count >= limit {
                    self.mode = Mode::Lockdown;
                    self.timer_deadline = None;
                    vec![
                        Effect::AlarmOn,
                        lcd(0, MSG_LOCKED),
                        lcd(1, ""),
                        attempt,
                        log(
                            LogKind::Lockdown,
                            format!("{limit} consecutive wrong codes"),
                        ),
                    ]
                } else {
                    self.mode = Mode::DenyMsg;
                    self.timer_deadline = Some(now + self.config.deny_ms);
                    vec![lcd(0, MSG_WRONG), lcd(1, ""), attempt]
                }
            }
        }
    }

    fn on_admin_reset(&mut self) -> Vec<Effect> {
        let was_locked = self.mode == Mode::Lockdown;
        self.mode = Mode::Idle;
        self.buffered = 0;
        self.wrong_count = 0;
        self.timer_deadline = None;
        let mut effects = Vec::with_capacity(4);
        if was_locked {
            effects.push(Effect::AlarmOff);
        }
        effects.extend(idle_screen());
        effects.push(log(LogKind::Reset, "admin reset"));
        effects
    }
}

/// Functional form of [`PanelState::step`].
pub fn step(mut state: PanelState, event: &Event) -> (PanelState, Vec<Effect>) {
    let effects = state.step(event);
    (state, effects)
}

/// Folds `events` over `s0`, recording the state and effects after each.
pub fn run_trace(
    s0: PanelState,
    events: &[Event],
) -> Result<Vec<(PanelState, Vec<Effect>)>, ControllerError> {
    let mut state = s0;
    let mut out = Vec::with_capacity(events.len());
    for (index, event) in events.iter().enumerate() {
        state
            .check_event(event)
            .map_err(|(got, last)| ControllerError::NonMonotonicTick { index, got, last })?;
        let effects = state.step(event);
        out.push((state.clone(), effects));
    }
    Ok(out)
}
