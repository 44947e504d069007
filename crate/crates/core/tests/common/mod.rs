//! Test-only oracles: a brute-force reference panel written from the
//! transition table without touching the library's controller, plus an
//! exhaustive explorer that runs both side by side.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use oacs_core::controller::{initial_state, ControllerConfig, Effect, Event, Mode, PanelState};
use oacs_core::credential::{Database, UserRecord};
use oacs_core::keypad::{Key, KeyEvent};

/// Users as plain `(code, name)` strings.
pub type UserTable = Vec<(String, String)>;

pub fn user_table(rows: &[(&str, &str)]) -> UserTable {
    rows.iter()
        .map(|(c, n)| (c.to_string(), n.to_string()))
        .collect()
}

pub fn database_from(users: &UserTable) -> Database {
    Database::from_records(
        users
            .iter()
            .map(|(code, name)| UserRecord::new(name.clone(), code.parse().unwrap()).unwrap()),
    )
    .unwrap()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Phase {
    Ready,
    Typing,
    Open { until: u64 },
    Notice { until: u64 },
    Alarmed,
}

/// What one event did, in a form both machines can be reduced to.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Observation {
    pub mode: &'static str,
    pub wrong: u32,
    pub typed: usize,
    pub grant_ms: Option<u64>,
    pub alarm_on: bool,
    pub alarm_off: bool,
    pub screen: Vec<(usize, String)>,
    pub logs: Vec<&'static str>,
}

/// Reference panel. Keeps typed digits as text and checks codes by string
/// comparison against the user table.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RefPanel {
    users: Vec<(String, String)>,
    used: Vec<String>,
    typed: String,
    fails: u32,
    phase: Phase,
    limit: u32,
    open_ms: u64,
    notice_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefEvent {
    Press(char, u64),
    Clock(u64),
    Reset,
}

impl RefPanel {
    pub fn new(users: &UserTable, limit: u32, open_ms: u64, notice_ms: u64) -> RefPanel {
        RefPanel {
            users: users.clone(),
            used: Vec::new(),
            typed: String::new(),
            fails: 0,
            phase: Phase::Ready,
            limit,
            open_ms,
            notice_ms,
        }
    }

    pub fn mode_name(&self) -> &'static str {
        match self.phase {
            Phase::Ready => "IDLE",
            Phase::Typing => "COLLECT",
            Phase::Open { .. } => "GRANTED",
            Phase::Notice { .. } => "DENY_MSG",
            Phase::Alarmed => "LOCKDOWN",
        }
    }

    /// Code validated by the most recent event, if any.
    pub fn feed(&mut self, ev: RefEvent) -> (Observation, Option<String>) {
        let mut obs = Observation::default();
        let mut validated = None;
        match ev {
            RefEvent::Reset => {
                if self.phase == Phase::Alarmed {
                    obs.alarm_off = true;
                }
                self.phase = Phase::Ready;
                self.typed.clear();
                self.fails = 0;
                obs.screen.push((0, "Enter Password".into()));
                obs.screen.push((1, String::new()));
                obs.logs.push("RESET");
            }
            RefEvent::Clock(t) => match self.phase {
                Phase::Open { until } | Phase::Notice { until } if t >= until => {
                    self.phase = Phase::Ready;
                    obs.screen.push((0, "Enter Password".into()));
                    obs.screen.push((1, String::new()));
                }
                _ => {}
            },
            RefEvent::Press(c, t) => {
                let accepting = matches!(self.phase, Phase::Ready | Phase::Typing);
                if accepting && c.is_ascii_digit() {
                    self.typed.push(c);
                    self.phase = Phase::Typing;
                    if self.typed.len() < 4 {
                        obs.screen.push((1, "*".repeat(self.typed.len())));
                    } else {
                        let code = std::mem::take(&mut self.typed);
                        self.judge(&code, t, &mut obs);
                        validated = Some(code);
                    }
                } else if c == '*' && self.phase == Phase::Typing {
                    self.typed.clear();
                    self.phase = Phase::Ready;
                    obs.screen.push((1, String::new()));
                }
            }
        }
        obs.mode = self.mode_name();
        obs.wrong = self.fails;
        obs.typed = self.typed.len();
        (obs, validated)
    }

    fn judge(&mut self, code: &str, t: u64, obs: &mut Observation) {
        let owner = self
            .users
            .iter()
            .find(|(c, _)| c == code)
            .map(|(_, n)| n.clone());
        match owner {
            Some(name) if !self.used.iter().any(|u| u == code) => {
                self.used.push(code.to_string());
                self.fails = 0;
                self.phase = Phase::Open {
                    until: t + self.open_ms,
                };
                obs.grant_ms = Some(self.open_ms);
                obs.screen.push((0, "Access Granted".into()));
                obs.screen.push((1, name.chars().take(16).collect()));
                obs.logs.push("GRANT");
            }
            Some(_) => {
                self.phase = Phase::Notice {
                    until: t + self.notice_ms,
                };
                obs.screen.push((0, "Code Used".into()));
                obs.screen.push((1, String::new()));
                obs.logs.push("DENY_REPLAY");
            }
            None => {
                self.fails += 1;
                obs.logs.push("DENY_WRONG");
                if self.fails == self.limit {
                    self.phase = Phase::Alarmed;
                    obs.alarm_on = true;
                    obs.screen.push((0, "System Locked".into()));
                    obs.screen.push((1, String::new()));
                    obs.logs.push("LOCKDOWN");
                } else {
                    self.phase = Phase::Notice {
                        until: t + self.notice_ms,
                    };
                    obs.screen.push((0, "Wrong Password".into()));
                    obs.screen.push((1, String::new()));
                }
            }
        }
    }

    /// State with absolute time replaced by time remaining.
    fn normalized(&self, now: u64) -> (u8, u64, u32, String, Vec<String>) {
        let (tag, left) = match self.phase {
            Phase::Ready => (0, 0),
            Phase::Typing => (1, 0),
            Phase::Open { until } => (2, until.saturating_sub(now)),
            Phase::Notice { until } => (3, until.saturating_sub(now)),
            Phase::Alarmed => (4, 0),
        };
        let mut used = self.used.clone();
        used.sort();
        (tag, left, self.fails, self.typed.clone(), used)
    }
}

/// Reduces the library's effects and post-state to an [`Observation`].
pub fn observe(state: &PanelState, effects: &[Effect]) -> Observation {
    let mut obs = Observation {
        mode: state.mode().as_str(),
        wrong: state.wrong_count(),
        typed: state.buffer().len(),
        ..Observation::default()
    };
    for e in effects {
        match e {
            Effect::LcdWrite { row, text } => obs.screen.push((*row, text.clone())),
            Effect::LockGrant { duration_ms } => {
                assert!(obs.grant_ms.is_none(), "two grants in one step");
                obs.grant_ms = Some(*duration_ms);
            }
            Effect::AlarmOn => obs.alarm_on = true,
            Effect::AlarmOff => obs.alarm_off = true,
            Effect::LogEntry { kind, .. } => obs.logs.push(kind.as_str()),
        }
    }
    obs
}

/// Model-checking alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    CodeDigit,
    WrongDigit,
    Star,
    Tick,
}

pub const ALPHABET: [Symbol; 4] = [
    Symbol::CodeDigit,
    Symbol::WrongDigit,
    Symbol::Star,
    Symbol::Tick,
];

#[derive(Debug, Clone, Copy)]
pub struct CheckSetup {
    pub code_digit: char,
    pub wrong_digit: char,
    /// Simulated ms added by each Tick symbol.
    pub tick_step: u64,
    pub config: ControllerConfig,
    /// Settings the reference panel runs with; normally equal to `config`.
    pub reference: ControllerConfig,
}

impl Default for CheckSetup {
    fn default() -> Self {
        CheckSetup {
            code_digit: '1',
            wrong_digit: '9',
            tick_step: 2500,
            config: ControllerConfig::default(),
            reference: ControllerConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    imp: PanelState,
    reference: RefPanel,
    now: u64,
    /// codes granted along this path
    granted: BTreeSet<String>,
    /// failed lookups since the last grant or reset
    strikes: u32,
    alarm: bool,
}

#[derive(Debug, Default)]
pub struct CheckReport {
    pub max_depth: usize,
    pub steps_checked: u64,
    pub distinct_states: usize,
    pub grants_seen: u64,
    pub lockdowns_seen: u64,
    pub replays_seen: u64,
    pub violation: Option<String>,
}

pub struct ModelChecker<'a> {
    setup: CheckSetup,
    users: &'a UserTable,
    memo: Option<HashMap<NodeKey, usize>>,
    report: CheckReport,
    path: Vec<Symbol>,
}

type NodeKey = (
    (Mode, Vec<u8>, u32, u64, Vec<u16>),
    (u8, u64, u32, String, Vec<String>),
    BTreeSet<String>,
    u32,
    bool,
);

impl<'a> ModelChecker<'a> {
    /// `memoize` prunes a subtree when the same joint state was already
    /// explored with at least as many steps remaining. Every machine and
    /// checker variable is in the key, so pruning loses no sequence.
    pub fn new(users: &'a UserTable, setup: CheckSetup, memoize: bool) -> Self {
        ModelChecker {
            setup,
            users,
            memo: memoize.then(HashMap::new),
            report: CheckReport::default(),
            path: Vec::new(),
        }
    }

    pub fn run(mut self, max_depth: usize) -> CheckReport {
        let (imp, _) = initial_state(database_from(self.users), self.setup.config);
        let cfg = self.setup.reference;
        let root = Node {
            imp,
            reference: RefPanel::new(self.users, cfg.attempt_limit, cfg.unlock_ms, cfg.deny_ms),
            now: 0,
            granted: BTreeSet::new(),
            strikes: 0,
            alarm: false,
        };
        self.report.max_depth = max_depth;
        self.explore(&root, max_depth);
        if let Some(memo) = &self.memo {
            self.report.distinct_states = memo.len();
        }
        self.report
    }

    fn key(&self, node: &Node) -> NodeKey {
        let imp = &node.imp;
        let left = imp
            .timer_deadline()
            .map_or(0, |d| d.saturating_sub(node.now));
        let used: Vec<u16> = imp
            .database()
            .iter()
            .filter(|r| r.is_used())
            .map(|r| r.code_value().value())
            .collect();
        let buffer = imp.buffer().iter().map(|d| d.value()).collect();
        (
            (imp.mode(), buffer, imp.wrong_count(), left, used),
            node.reference.normalized(node.now),
            node.granted.clone(),
            node.strikes,
            node.alarm,
        )
    }

    fn explore(&mut self, node: &Node, depth_left: usize) {
        if self.report.violation.is_some() || depth_left == 0 {
            return;
        }
        let key = self.memo.is_some().then(|| self.key(node));
        if let (Some(key), Some(memo)) = (key, self.memo.as_mut()) {
            match memo.get(&key) {
                Some(&seen) if seen >= depth_left => return,
                _ => {
                    memo.insert(key, depth_left);
                }
            }
        }
        for symbol in ALPHABET {
            let mut child = node.clone();
            self.path.push(symbol);
            if let Err(msg) = self.advance(&mut child, symbol) {
                self.report.violation = Some(format!("{msg}\n  after {}", self.render_path()));
            } else {
                self.explore(&child, depth_left - 1);
            }
            self.path.pop();
            if self.report.violation.is_some() {
                return;
            }
        }
    }

    fn render_path(&self) -> String {
        let mut out = String::new();
        for s in &self.path {
            let c = match s {
                Symbol::CodeDigit => self.setup.code_digit,
                Symbol::WrongDigit => self.setup.wrong_digit,
                Symbol::Star => '*',
                Symbol::Tick => 'T',
            };
            let _ = write!(out, "{c}");
        }
        out
    }

    fn advance(&mut self, node: &mut Node, symbol: Symbol) -> Result<(), String> {
        self.report.steps_checked += 1;
        let (event, ref_event) = match symbol {
            Symbol::Tick => {
                node.now += self.setup.tick_step;
                (Event::Tick(node.now), RefEvent::Clock(node.now))
            }
            other => {
                let c = match other {
                    Symbol::CodeDigit => self.setup.code_digit,
                    Symbol::WrongDigit => self.setup.wrong_digit,
                    _ => '*',
                };
                let key = Key::from_symbol(c).unwrap();
                (
                    Event::Key(KeyEvent {
                        key,
                        at_tick: node.now,
                    }),
                    RefEvent::Press(c, node.now),
                )
            }
        };
        let before_typed = node.imp.buffer().len();
        let before_wrong = node.imp.wrong_count();
        let before_mode = node.imp.mode();
        let effects = node.imp.step(&event);
        let got = observe(&node.imp, &effects);
        let (want, validated) = node.reference.feed(ref_event);
        if got != want {
            return Err(format!(
                "divergence:\n  library   {got:?}\n  reference {want:?}"
            ));
        }

        // safety: a grant only on a fresh code that is in the user table
        if got.grant_ms.is_some() {
            self.report.grants_seen += 1;
            let code = validated.as_ref().ok_or("grant without a validation")?;
            if !self.users.iter().any(|(c, _)| c == code) {
                return Err(format!("lock opened for unknown code {code}"));
            }
            if !node.granted.insert(code.clone()) {
                return Err(format!("lock opened twice for code {code}"));
            }
        }
        if got.logs.contains(&"DENY_REPLAY") {
            self.report.replays_seen += 1;
        }

        // three strikes: alarm exactly when the third consecutive failure lands
        let mut third_strike = false;
        if let Some(code) = &validated {
            if self.users.iter().any(|(c, _)| c == code) {
                if got.grant_ms.is_some() {
                    node.strikes = 0;
                }
            } else {
                node.strikes += 1;
                third_strike = node.strikes == self.setup.config.attempt_limit;
            }
        }
        if got.alarm_on != third_strike {
            return Err(format!(
                "alarm_on={} but strike count is {}",
                got.alarm_on, node.strikes
            ));
        }
        if got.alarm_on {
            self.report.lockdowns_seen += 1;
            node.alarm = true;
        }
        if node.alarm && got.grant_ms.is_some() {
            return Err("lock opened while the alarm sounds".into());
        }

        // counter only climbs by one or drops to zero on a grant
        let after = node.imp.wrong_count();
        let ok_counter = after == before_wrong
            || after == before_wrong + 1
            || (after == 0 && got.grant_ms.is_some());
        if !ok_counter || after > self.setup.config.attempt_limit {
            return Err(format!("wrong count went {before_wrong} -> {after}"));
        }
        if (after == self.setup.config.attempt_limit) != (node.imp.mode() == Mode::Lockdown) {
            return Err("wrong count and LOCKDOWN disagree".into());
        }

        // validation happens exactly on the fourth buffered digit
        let was_digit = matches!(symbol, Symbol::CodeDigit | Symbol::WrongDigit);
        let expect_validation = was_digit && before_typed == 3 && before_mode == Mode::Collect;
        if validated.is_some() != expect_validation || node.imp.buffer().len() > 3 {
            return Err("validation did not coincide with the fourth digit".into());
        }
        Ok(())
    }
}
