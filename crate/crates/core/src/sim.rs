//! Deterministic simulation loom.
//!
//! One tick is one millisecond of simulated time. Each tick, in order:
//!
//! 1. the lock re-energizes if its grant pulse has ended,
//! 2. the controller sees `Tick(now)`,
//! 3. every `scan_row_ms` one keypad row is strobed; a completed scan goes
//!    through the debouncer and any key event is handed to the controller,
//! 4. the observable snapshot is recorded if it changed.
//!
//! Scripted key presses close matrix switches, so every digit that reaches
//! the controller went through the scan and debounce path.

use std::fmt;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actuators::{ActuatorError, Alarm, Lock, TimedPulse};
use crate::audit::{AuditEntry, AuditLog};
use crate::config::{Config, ConfigError};
use crate::controller::{initial_state, Effect, Event, LogKind, Mode, PanelState};
use crate::credential::Database;
use crate::keypad::{Debouncer, Key, MatrixScanner, SwitchSet};
use crate::lcd::{LcdBuffer, LcdCommand, LcdError};
use crate::scenario::{Assertion, Scenario, Step};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("audit log: {0}")]
    Audit(#[source] io::Error),
    #[error("control socket: {0}")]
    Socket(#[source] io::Error),
    #[error(transparent)]
    Lcd(#[from] LcdError),
    #[error(transparent)]
    Actuator(#[from] ActuatorError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Everything an observer can see on the panel at one tick.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub lcd: [String; 2],
    /// True while the door is bonded.
    pub lock: bool,
    pub alarm: bool,
    pub mode: Mode,
    pub wrong: u32,
}

impl Snapshot {
    fn same_view(&self, other: &Snapshot) -> bool {
        self.lcd == other.lcd
            && self.lock == other.lock
            && self.alarm == other.alarm
            && self.mode == other.mode
            && self.wrong == other.wrong
    }
}

/// One trace line: the snapshot at the tick where it changed.
pub type TraceRecord = Snapshot;

pub struct Simulator {
    scan_row_ms: u64,
    now: u64,
    closed: SwitchSet,
    scanner: MatrixScanner,
    debouncer: Debouncer,
    panel: PanelState,
    lcd: LcdBuffer,
    lock: Lock,
    alarm: Alarm,
    audit: Vec<AuditEntry>,
    audit_log: Option<AuditLog>,
    grants: Vec<TimedPulse>,
    trace: Vec<TraceRecord>,
    dirty: bool,
}

impl fmt::Debug for Simulator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Simulator")
            .field("now", &self.now)
            .field("mode", &self.panel.mode())
            .finish_non_exhaustive()
    }
}

impl Simulator {
    /// Powers up the panel at tick 0. Opens `cfg.log_path` for appending
    /// when set.
    pub fn new(cfg: &Config, db: Database) -> Result<Simulator, SimError> {
        cfg.validate()?;
        let audit_log = match &cfg.log_path {
            Some(path) => Some(AuditLog::open(path).map_err(SimError::Audit)?),
            None => None,
        };
        let (panel, effects) = initial_state(db, cfg.controller());
        let mut lcd = LcdBuffer::new();
        lcd.apply(LcdCommand::Clear)?;
        lcd.apply(LcdCommand::DisplayOnOff(true))?;
        let mut sim = Simulator {
            scan_row_ms: cfg.scan_row_ms,
            now: 0,
            closed: SwitchSet::EMPTY,
            scanner: MatrixScanner::new(),
            debouncer: Debouncer::new(cfg.debounce_ms),
            panel,
            lcd,
            lock: Lock::new(),
            alarm: Alarm::new(),
            audit: Vec::new(),
            audit_log,
            grants: Vec::new(),
            trace: Vec::new(),
            dirty: false,
        };
        sim.apply(effects)?;
        let first = sim.snapshot();
        sim.trace.push(first);
        sim.dirty = false;
        Ok(sim)
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn press(&mut self, key: Key) {
        self.closed.insert(key.position());
    }

    pub fn release(&mut self, key: Key) {
        self.closed.remove(key.position());
    }

    pub fn closed(&self) -> SwitchSet {
        self.closed
    }

    pub fn admin_reset(&mut self) -> Result<(), SimError> {
        let effects = self.panel.step(&Event::AdminReset);
        self.apply(effects)?;
        self.record();
        Ok(())
    }

    pub fn advance(&mut self, ms: u64) -> Result<(), SimError> {
        for _ in 0..ms {
            self.tick()?;
        }
        Ok(())
    }

    /// Advances until `now() == tick`; a tick in the past is a no-op.
    pub fn advance_to(&mut self, tick: u64) -> Result<(), SimError> {
        self.advance(tick.saturating_sub(self.now))
    }

    fn tick(&mut self) -> Result<(), SimError> {
        self.now += 1;
        let now = self.now;
        if self.lock.expire_pulse(now) {
            self.dirty = true;
        }
        let effects = self.panel.step(&Event::Tick(now));
        self.apply(effects)?;
        if now.is_multiple_of(self.scan_row_ms) {
            if let Some(scan) = self.scanner.strobe(self.closed) {
                if let Some(key_event) = self.debouncer.debounce_step(&scan, now) {
                    let effects = self.panel.step(&Event::Key(key_event));
                    self.apply(effects)?;
                }
            }
        }
        self.record();
        Ok(())
    }

    fn apply(&mut self, effects: Vec<Effect>) -> Result<(), SimError> {
        if effects.is_empty() {
            return Ok(());
        }
        self.dirty = true;
        for effect in effects {
            match effect {
                Effect::LcdWrite { row, text } => self.lcd.write_line(row, &text)?,
                Effect::LockGrant { duration_ms } => {
                    let pulse = self.lock.grant_pulse(self.now, duration_ms)?;
                    self.grants.push(pulse);
                }
                Effect::AlarmOn => self.alarm.alarm_on(),
                Effect::AlarmOff => self.alarm.alarm_off(),
                Effect::LogEntry { kind, detail } => {
                    let entry = AuditEntry {
                        tick: self.now,
                        kind,
                        detail,
                    };
                    if let Some(log) = &mut self.audit_log {
                        log.append(&entry).map_err(SimError::Audit)?;
                    }
                    self.audit.push(entry);
                }
            }
        }
        Ok(())
    }

    fn record(&mut self) {
        if !self.dirty {
            return;
        }
        self.dirty = false;
        let snap = self.snapshot();
        if self.trace.last().is_none_or(|last| !last.same_view(&snap)) {
            self.trace.push(snap);
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            tick: self.now,
            lcd: self.lcd.render_lines(),
            lock: self.lock.is_energized(),
            alarm: self.alarm.is_sounding(),
            mode: self.panel.mode(),
            wrong: self.panel.wrong_count(),
        }
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    /// Grant pulses issued so far, in order.
    pub fn grants(&self) -> &[TimedPulse] {
        &self.grants
    }

    pub fn panel(&self) -> &PanelState {
        &self.panel
    }

    pub fn database(&self) -> &Database {
        self.panel.database()
    }

    pub fn lcd(&self) -> &LcdBuffer {
        &self.lcd
    }

    /// Evaluates an assertion against the current state. Returns whether it
    /// held and a rendering of what was actually observed.
    pub fn check(&self, assertion: &Assertion) -> (bool, String) {
        match assertion {
            Assertion::LcdLine { row, text } => {
                let actual = &self.lcd.render_lines()[*row];
                (actual == text, format!("lcd {row} {actual:?}"))
            }
            Assertion::Lock(want) => {
                let got = self.lock.is_energized();
                (got == *want, format!("lock {}", u8::from(got)))
            }
            Assertion::Alarm(want) => {
                let got = self.alarm.is_sounding();
                (got == *want, format!("alarm {}", u8::from(got)))
            }
            Assertion::Mode(want) => {
                let got = self.panel.mode();
                (got == *want, format!("mode {got}"))
            }
            Assertion::LogContains(kind) => {
                let found = self.audit.iter().any(|e| e.kind == *kind);
                let kinds: Vec<&str> = self.audit.iter().map(|e| e.kind.as_str()).collect();
                (found, format!("log [{}]", kinds.join(",")))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssertionOutcome {
    pub line: usize,
    pub tick: u64,
    pub assertion: Assertion,
    pub passed: bool,
    pub actual: String,
}

impl fmt::Display for AssertionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed {
            write!(
                f,
                "ok   line {} tick {}: expect {}",
                self.line, self.tick, self.assertion
            )
        } else {
            write!(
                f,
                "FAIL line {} tick {}: expected {}, actual {}",
                self.line, self.tick, self.assertion, self.actual
            )
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub trace: Vec<TraceRecord>,
    pub outcomes: Vec<AssertionOutcome>,
    pub audit: Vec<AuditEntry>,
    pub grants: Vec<TimedPulse>,
    pub database: Database,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssertionOutcome> {
        self.outcomes.iter().filter(|o| !o.passed)
    }

    /// Trace as JSON lines, one snapshot per line.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for record in &self.trace {
            out.push_str(&serde_json::to_string(record).expect("snapshot serializes"));
            out.push('\n');
        }
        out
    }

    /// Audit entries in log-file format.
    pub fn audit_text(&self) -> String {
        self.audit.iter().map(|e| format!("{e}\n")).collect()
    }

    pub fn count(&self, kind: LogKind) -> usize {
        self.audit.iter().filter(|e| e.kind == kind).count()
    }
}

/// Runs a parsed scenario from power-up. Assertion failures are reported in
/// the result; only I/O or wiring errors abort the run.
pub fn run_scenario(
    cfg: &Config,
    db: Database,
    scenario: &Scenario,
) -> Result<ScenarioReport, SimError> {
    let mut sim = Simulator::new(cfg, db)?;
    let mut outcomes = Vec::new();
    for step in &scenario.steps {
        match &step.step {
            Step::Press(key) => sim.press(*key),
            Step::Release(key) => sim.release(*key),
            Step::Wait(ms) => sim.advance(*ms)?,
            Step::AdminReset => sim.admin_reset()?,
            Step::Expect(assertion) => {
                let (passed, actual) = sim.check(assertion);
                outcomes.push(AssertionOutcome {
                    line: step.line,
                    tick: sim.now(),
                    assertion: assertion.clone(),
                    passed,
                    actual,
                });
            }
        }
    }
    Ok(ScenarioReport {
        trace: sim.trace.clone(),
        outcomes,
        audit: sim.audit.clone(),
        grants: sim.grants.clone(),
        database: sim.database().clone(),
    })
}
