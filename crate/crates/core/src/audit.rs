//! Append-only audit log.
//!
//! One line per controller log entry:
//! `tick=<n> kind=<GRANT|DENY_WRONG|DENY_REPLAY|LOCKDOWN|RESET> detail=<text>`.
//! Lines carry simulated ticks only, so identical runs produce identical logs.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;

use crate::controller::LogKind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub tick: u64,
    pub kind: LogKind,
    pub detail: String,
}

impl fmt::Display for AuditEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // details are single-line; fold any stray line breaks so one entry stays one line
        let detail = self.detail.replace(['\n', '\r'], " ");
        write!(f, "tick={} kind={} detail={}", self.tick, self.kind, detail)
    }
}

/// Opens `log_path` for appending and writes one entry.
pub fn append_audit(log_path: impl AsRef<Path>, entry: &AuditEntry) -> io::Result<()> {
    AuditLog::open(log_path)?.append(entry)
}

/// Audit file held open across appends.
#[derive(Debug)]
pub struct AuditLog {
    file: File,
}

impl AuditLog {
    pub fn open(path: impl AsRef<Path>) -> io::Result<AuditLog> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(AuditLog { file })
    }

    pub fn append(&mut self, entry: &AuditEntry) -> io::Result<()> {
        let line = format!("{entry}\n");
        self.file.write_all(line.as_bytes())?;
        self.file.flush()
    }
}
