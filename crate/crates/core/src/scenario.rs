//! Plain-text scenario scripts.
//!
//! One step per line:
//!
//! ```text
//! # Staff member opens the door
//! press 1
//! wait 60
//! release 1
//! wait 60
//! expect lcd 0 "Enter Password  "
//! expect lock 1
//! expect alarm 0
//! expect mode IDLE
//! expect log GRANT
//! admin_reset
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Every pressed key
//! must be released before it is pressed again and before the script ends.

use std::fmt;

use thiserror::Error;

use crate::controller::{LogKind, Mode};
use crate::keypad::{Key, SwitchSet};
use crate::lcd::{LCD_COLS, LCD_ROWS};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("script line {line}: {reason}")]
pub struct ScenarioError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Assertion {
    LcdLine { row: usize, text: String },
    Lock(bool),
    Alarm(bool),
    Mode(Mode),
    LogContains(LogKind),
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assertion::LcdLine { row, text } => write!(f, "lcd {row} {text:?}"),
            Assertion::Lock(b) => write!(f, "lock {}", u8::from(*b)),
            Assertion::Alarm(b) => write!(f, "alarm {}", u8::from(*b)),
            Assertion::Mode(m) => write!(f, "mode {m}"),
            Assertion::LogContains(k) => write!(f, "log {k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    Press(Key),
    Release(Key),
    Wait(u64),
    AdminReset,
    Expect(Assertion),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScriptStep {
    /// 1-based line in the source text.
    pub line: usize,
    pub step: Step,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scenario {
    pub steps: Vec<ScriptStep>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let mut steps = Vec::new();
        let mut held = SwitchSet::EMPTY;
        let mut held_since: Vec<(Key, usize)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let step = parse_step(trimmed).map_err(|reason| ScenarioError { line, reason })?;
            match step {
                Step::Press(key) => {
                    if held.contains(key.position()) {
                        return Err(ScenarioError {
                            line,
                            reason: format!("key {key} pressed while already held"),
                        });
                    }
                    held.insert(key.position());
                    held_since.push((key, line));
                }
                Step::Release(key) => {
                    if !held.contains(key.position()) {
                        return Err(ScenarioError {
                            line,
                            reason: format!("key {key} released without a press"),
                        });
                    }
                    held.remove(key.position());
                    held_since.retain(|(k, _)| *k != key);
                }
                _ => {}
            }
            steps.push(ScriptStep { line, step });
        }
        if let Some((key, line)) = held_since.first() {
            return Err(ScenarioError {
                line: *line,
                reason: format!("key {key} is never released"),
            });
        }
        Ok(Scenario { steps })
    }
}

fn parse_key(arg: Option<&str>) -> Result<Key, String> {
    let arg = arg.ok_or("missing key symbol")?;
    let mut chars = arg.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Key::from_symbol(c).ok_or_else(|| format!("unknown key {arg:?}")),
        _ => Err(format!("unknown key {arg:?}")),
    }
}

fn parse_bool(arg: Option<&str>) -> Result<bool, String> {
    match arg {
        Some("1" | "true") => Ok(true),
        Some("0" | "false") => Ok(false),
        other => Err(format!("expected 0 or 1, got {other:?}")),
    }
}

fn parse_step(line: &str) -> Result<Step, String> {
    let (verb, rest) = line
        .split_once(char::is_whitespace)
        .map_or((line, ""), |(v, r)| (v, r.trim()));
    let mut args = rest.split_whitespace();
    let step = match verb {
        "press" => Step::Press(parse_key(args.next())?),
        "release" => Step::Release(parse_key(args.next())?),
        "wait" => {
            let arg = args.next().ok_or("missing wait duration")?;
            match arg.parse::<u64>() {
                Ok(ms) if ms >= 1 => Step::Wait(ms),
                _ => return Err(format!("wait needs a duration >= 1 ms, got {arg:?}")),
            }
        }
        "admin_reset" => Step::AdminReset,
        "expect" => return parse_expect(rest).map(Step::Expect),
        other => return Err(format!("unknown step {other:?}")),
    };
    match args.next() {
        Some(extra) => Err(format!("unexpected argument {extra:?}")),
        None => Ok(step),
    }
}

fn parse_expect(rest: &str) -> Result<Assertion, String> {
    let (what, args) = rest
        .split_once(char::is_whitespace)
        .map_or((rest, ""), |(w, a)| (w, a.trim()));
    let single = |args: &str| -> Result<String, String> {
        let mut it = args.split_whitespace();
        match (it.next(), it.next()) {
            (Some(a), None) => Ok(a.to_string()),
            _ => Err(format!(
                "expect {what}: expected one argument, got {args:?}"
            )),
        }
    };
    match what {
        "lcd" => {
            let (row, text) = args
                .split_once(char::is_whitespace)
                .ok_or("expect lcd: expected a row and a quoted line")?;
            let row: usize = row
                .parse()
                .ok()
                .filter(|r| *r < LCD_ROWS)
                .ok_or_else(|| format!("expect lcd: row {row:?} is not 0 or 1"))?;
            let text = text.trim();
            let inner = text
                .strip_prefix('"')
                .and_then(|t| t.strip_suffix('"'))
                .ok_or("expect lcd: line text must be double-quoted")?;
            if inner.chars().count() != LCD_COLS {
                return Err(format!(
                    "expect lcd: line must be exactly {LCD_COLS} characters, got {}",
                    inner.chars().count()
                ));
            }
            Ok(Assertion::LcdLine {
                row,
                text: inner.to_string(),
            })
        }
        "lock" => parse_bool(Some(&single(args)?)).map(Assertion::Lock),
        "alarm" => parse_bool(Some(&single(args)?)).map(Assertion::Alarm),
        "mode" => single(args)?.parse().map(Assertion::Mode),
        "log" => single(args)?.parse().map(Assertion::LogContains),
        other => Err(format!("unknown assertion {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_step_kind() {
        let text = "# header\n\
            press 1\n\
            wait 50\n\
            release 1\n\
            press #\n\
            release #\n\
            admin_reset\n\
            expect lcd 1 \"Enter Password  \"\n\
            expect lock 1\n\
            expect alarm false\n\
            expect mode DENY_MSG\n\
            expect log DENY_REPLAY\n";
        let s = Scenario::parse(text).unwrap();
        assert_eq!(s.steps.len(), 11);
        assert_eq!(s.steps[0].line, 2);
        assert_eq!(s.steps[1].step, Step::Wait(50));
        assert_eq!(s.steps[3].step, Step::Press(Key::Hash));
        assert_eq!(
            s.steps[6].step,
            Step::Expect(Assertion::LcdLine {
                row: 1,
                text: "Enter Password  ".into()
            })
        );
        assert_eq!(
            s.steps[10].step,
            Step::Expect(Assertion::LogContains(LogKind::DenyReplay))
        );
    }

    #[test]
    fn empty_script() {
        assert!(Scenario::parse("").unwrap().steps.is_empty());
        assert!(Scenario::parse("\n# nothing\n\n").unwrap().steps.is_empty());
    }

    fn err_line(text: &str) -> usize {
        Scenario::parse(text).unwrap_err().line
    }

    #[test]
    fn errors_point_at_the_line() {
        assert_eq!(err_line("wait 5\nwait 0\n"), 2);
        assert_eq!(err_line("wait 5\njump 3\n"), 2);
        assert_eq!(err_line("press 1\nwait 5\npress 1\n"), 3);
        assert_eq!(err_line("wait 5\nrelease 2\n"), 2);
        assert_eq!(err_line("press x\n"), 1);
        assert_eq!(err_line("press 12\n"), 1);
        assert_eq!(err_line("expect lcd 0 \"short\"\n"), 1);
        assert_eq!(err_line("expect lcd 2 \"                \"\n"), 1);
        assert_eq!(err_line("expect mode OPEN\n"), 1);
        assert_eq!(err_line("expect lock 2\n"), 1);
        assert_eq!(err_line("wait 5 6\n"), 1);
    }

    #[test]
    fn unreleased_key_is_reported_at_its_press() {
        assert_eq!(err_line("press 1\nrelease 1\n\npress 5\nwait 10\n"), 4);
    }
}
