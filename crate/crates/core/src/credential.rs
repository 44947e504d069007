//! User database: passcode encoding, lookup, replay flags and CSV persistence.
//!
//! A passcode is four keypad digits `(A, B, C, D)`. It is stored under its
//! positional decimal value `A*1000 + B*100 + C*10 + D`, which maps the 10^4
//! possible passcodes one-to-one onto `0..=9999`. Codes are always written
//! zero-padded (`0042`) so leading zeros survive a save/load cycle.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

/// Number of digits in a passcode.
pub const CODE_LEN: usize = 4;
/// Largest encodable code value.
pub const MAX_CODE: u16 = 9999;
/// Database capacity: one record per possible code value.
pub const MAX_USERS: usize = 10_000;
/// Longest accepted user name, in characters.
pub const MAX_NAME_LEN: usize = 64;

const CSV_HEADER: [&str; 3] = ["name", "code", "used"];

#[derive(Debug, Error)]
pub enum CredentialError {
    #[error("digit {0} is outside 0..=9")]
    DigitOutOfRange(u32),
    #[error("code value {0} is outside 0..=9999")]
    CodeOutOfRange(u32),
    #[error("invalid passcode {0:?}: expected exactly 4 ASCII digits")]
    InvalidCode(String),
    #[error("invalid user name {name:?}: {reason}")]
    InvalidName { name: String, reason: &'static str },
    #[error("duplicate code {code}: assigned to both {first:?} and {second:?}")]
    DuplicateCode {
        code: CodeValue,
        first: String,
        second: String,
    },
    #[error("database is full ({MAX_USERS} records)")]
    CapacityExceeded,
    #[error("no user holds code {0}")]
    UnknownCode(CodeValue),
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A single keypad digit in `0..=9`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digit(u8);

impl Digit {
    pub fn new(value: u8) -> Result<Self, CredentialError> {
        if value <= 9 {
            Ok(Digit(value))
        } else {
            Err(CredentialError::DigitOutOfRange(value.into()))
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        c.to_digit(10).map(|d| Digit(d as u8))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn to_char(self) -> char {
        char::from(b'0' + self.0)
    }
}

/// Four digits in entry order: thousands, hundreds, tens, ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Passcode([Digit; CODE_LEN]);

impl Passcode {
    pub fn new(digits: [Digit; CODE_LEN]) -> Self {
        Passcode(digits)
    }

    pub fn from_values(values: [u8; CODE_LEN]) -> Result<Self, CredentialError> {
        let mut digits = [Digit(0); CODE_LEN];
        for (slot, v) in digits.iter_mut().zip(values) {
            *slot = Digit::new(v)?;
        }
        Ok(Passcode(digits))
    }

    pub fn digits(&self) -> [Digit; CODE_LEN] {
        self.0
    }
}

impl FromStr for Passcode {
    type Err = CredentialError;

    /// Parses exactly four ASCII digits, e.g. `"0042"`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || CredentialError::InvalidCode(s.to_string());
        if s.len() != CODE_LEN {
            return Err(invalid());
        }
        let mut digits = [Digit(0); CODE_LEN];
        for (slot, c) in digits.iter_mut().zip(s.chars()) {
            if !c.is_ascii_digit() {
                return Err(invalid());
            }
            *slot = Digit::from_char(c).ok_or_else(invalid)?;
        }
        Ok(Passcode(digits))
    }
}

impl fmt::Display for Passcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.0 {
            write!(f, "{}", d.to_char())?;
        }
        Ok(())
    }
}

/// Encoded passcode in `0..=9999`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CodeValue(u16);

impl CodeValue {
    pub fn new(value: u32) -> Result<Self, CredentialError> {
        if value <= u32::from(MAX_CODE) {
            Ok(CodeValue(value as u16))
        } else {
            Err(CredentialError::CodeOutOfRange(value))
        }
    }

    pub fn value(self) -> u16 {
        self.0
    }

    pub fn passcode(self) -> Passcode {
        let v = self.0;
        Passcode([
            Digit((v / 1000) as u8),
            Digit((v / 100 % 10) as u8),
            Digit((v / 10 % 10) as u8),
            Digit((v % 10) as u8),
        ])
    }
}

impl fmt::Display for CodeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}", self.0)
    }
}

/// `A*1000 + B*100 + C*10 + D*1`.
pub fn encode_passcode(p: &Passcode) -> CodeValue {
    let [a, b, c, d] = p.0.map(|digit| u16::from(digit.0));
    CodeValue(a * 1000 + b * 100 + c * 10 + d)
}

/// Inverse of [`encode_passcode`]; rejects values above 9999.
pub fn decode_codevalue(value: u32) -> Result<Passcode, CredentialError> {
    CodeValue::new(value).map(CodeValue::passcode)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserRecord {
    name: String,
    code: Passcode,
    used: bool,
}

impl UserRecord {
    pub fn new(name: impl Into<String>, code: Passcode) -> Result<Self, CredentialError> {
        let name = name.into();
        validate_name(&name)?;
        Ok(UserRecord {
            name,
            code,
            used: false,
        })
    }

    pub fn with_used(mut self, used: bool) -> Self {
        self.used = used;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn code(&self) -> Passcode {
        self.code
    }

    pub fn code_value(&self) -> CodeValue {
        encode_passcode(&self.code)
    }

    pub fn is_used(&self) -> bool {
        self.used
    }
}

fn validate_name(name: &str) -> Result<(), CredentialError> {
    let reason = if name.is_empty() {
        "name is empty"
    } else if name.contains(['\n', '\r']) {
        "name contains a line break"
    } else if name.chars().count() > MAX_NAME_LEN {
        "name is longer than 64 characters"
    } else {
        return Ok(());
    };
    Err(CredentialError::InvalidName {
        name: name.to_string(),
        reason,
    })
}

/// Records keyed by their encoded code value. Codes are unique and the
/// record count never exceeds [`MAX_USERS`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Database {
    records: BTreeMap<CodeValue, UserRecord>,
}

impl Database {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(
        records: impl IntoIterator<Item = UserRecord>,
    ) -> Result<Self, CredentialError> {
        let mut db = Database::new();
        for record in records {
            db.insert(record)?;
        }
        Ok(db)
    }

    pub fn insert(&mut self, record: UserRecord) -> Result<(), CredentialError> {
        let key = record.code_value();
        if let Some(existing) = self.records.get(&key) {
            return Err(CredentialError::DuplicateCode {
                code: key,
                first: existing.name.clone(),
                second: record.name,
            });
        }
        if self.records.len() >= MAX_USERS {
            return Err(CredentialError::CapacityExceeded);
        }
        self.records.insert(key, record);
        Ok(())
    }

    pub fn lookup(&self, code: CodeValue) -> Option<&UserRecord> {
        self.records.get(&code)
    }

    pub fn mark_used(&mut self, code: CodeValue) -> Result<(), CredentialError> {
        match self.records.get_mut(&code) {
            Some(record) => {
                record.used = true;
                Ok(())
            }
            None => Err(CredentialError::UnknownCode(code)),
        }
    }

    pub fn reset_all_used(&mut self) {
        for record in self.records.values_mut() {
            record.used = false;
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn used_count(&self) -> usize {
        self.records.values().filter(|r| r.used).count()
    }

    /// Records in ascending code order.
    pub fn iter(&self) -> impl Iterator<Item = &UserRecord> {
        self.records.values()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, CredentialError> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut db = Database::new();
        let mut saw_header = false;
        let mut record = csv::StringRecord::new();
        loop {
            match csv.read_record(&mut record) {
                Ok(true) => {}
                Ok(false) => break,
                Err(err) => {
                    let line = err.position().map_or(0, |p| p.line());
                    return Err(CredentialError::Malformed {
                        line,
                        reason: err.to_string(),
                    });
                }
            }
            let line = record.position().map_or(0, |p| p.line());
            if !saw_header {
                if record.iter().ne(CSV_HEADER) {
                    return Err(malformed(line, "expected header `name,code,used`"));
                }
                saw_header = true;
                continue;
            }
            let user = parse_row(&record, line)?;
            db.insert(user).map_err(|err| match err {
                CredentialError::Malformed { .. } | CredentialError::DuplicateCode { .. } => err,
                other => malformed(line, &other.to_string()),
            })?;
        }
        if !saw_header {
            return Err(malformed(1, "missing header `name,code,used`"));
        }
        Ok(db)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CredentialError> {
        let mut csv = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(writer);
        let map_err = |err: csv::Error| match err.into_kind() {
            csv::ErrorKind::Io(io) => CredentialError::Io(io),
            other => CredentialError::Io(io::Error::other(format!("{other:?}"))),
        };
        csv.write_record(CSV_HEADER).map_err(map_err)?;
        for r in self.records.values() {
            let code = r.code.to_string();
            let used = if r.used { "1" } else { "0" };
            csv.write_record([r.name.as_str(), code.as_str(), used])
                .map_err(map_err)?;
        }
        csv.flush()?;
        Ok(())
    }
}

fn malformed(line: u64, reason: &str) -> CredentialError {
    CredentialError::Malformed {
        line,
        reason: reason.to_string(),
    }
}

fn parse_row(record: &csv::StringRecord, line: u64) -> Result<UserRecord, CredentialError> {
    if record.len() != 3 {
        return Err(malformed(
            line,
            &format!("expected 3 fields, found {}", record.len()),
        ));
    }
    let code: Passcode = record[1]
        .parse()
        .map_err(|_| malformed(line, &format!("code {:?} is not 4 digits", &record[1])))?;
    let used = match &record[2] {
        "0" => false,
        "1" => true,
        other => {
            return Err(malformed(
                line,
                &format!("used flag {other:?} is not 0 or 1"),
            ))
        }
    };
    UserRecord::new(&record[0], code)
        .map(|r| r.with_used(used))
        .map_err(|err| malformed(line, &err.to_string()))
}

pub fn load_users(path: impl AsRef<Path>) -> Result<Database, CredentialError> {
    Database::read_csv(io::BufReader::new(File::open(path)?))
}

pub fn save_users(db: &Database, path: impl AsRef<Path>) -> Result<(), CredentialError> {
    let mut out = io::BufWriter::new(File::create(path)?);
    db.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}
