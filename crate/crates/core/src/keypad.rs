//! 4x3 switch matrix: row strobing, column sensing, ghosting and debounce.
//!
//! The matrix has no isolation diodes. Strobing a row low pulls every column
//! low that is electrically reachable from that row through closed switches,
//! possibly via other rows and columns. Three closed switches forming an "L"
//! therefore make the fourth corner read as closed (a phantom key).

use std::fmt;

use crate::credential::Digit;

pub const ROWS: usize = 4;
pub const COLS: usize = 3;

/// Telephone layout, top row first.
const LAYOUT: [[char; COLS]; ROWS] = [
    ['1', '2', '3'],
    ['4', '5', '6'],
    ['7', '8', '9'],
    ['*', '0', '#'],
];

/// One switch of the matrix, addressed by logical row and column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SwitchClosure {
    row: u8,
    col: u8,
}

impl SwitchClosure {
    pub fn new(row: usize, col: usize) -> Option<Self> {
        (row < ROWS && col < COLS).then_some(SwitchClosure {
            row: row as u8,
            col: col as u8,
        })
    }

    pub fn row(self) -> usize {
        self.row as usize
    }

    pub fn col(self) -> usize {
        self.col as usize
    }

    fn bit(self) -> u16 {
        1 << (self.row() * COLS + self.col())
    }

    /// All twelve switches in row-major order.
    pub fn all() -> impl Iterator<Item = SwitchClosure> {
        (0..ROWS).flat_map(|r| (0..COLS).map(move |c| SwitchClosure::new(r, c).unwrap()))
    }
}

/// Set of switches, packed one bit per matrix position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct SwitchSet(u16);

impl SwitchSet {
    pub const EMPTY: SwitchSet = SwitchSet(0);

    pub fn insert(&mut self, sc: SwitchClosure) {
        self.0 |= sc.bit();
    }

    pub fn remove(&mut self, sc: SwitchClosure) {
        self.0 &= !sc.bit();
    }

    pub fn contains(self, sc: SwitchClosure) -> bool {
        self.0 & sc.bit() != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = SwitchClosure> {
        SwitchClosure::all().filter(move |sc| self.contains(*sc))
    }

    /// Column bitmask of closed switches in `row`.
    fn row_mask(self, row: usize) -> u8 {
        ((self.0 >> (row * COLS)) & ((1 << COLS) - 1)) as u8
    }
}

impl FromIterator<SwitchClosure> for SwitchSet {
    fn from_iter<I: IntoIterator<Item = SwitchClosure>>(iter: I) -> Self {
        let mut set = SwitchSet::EMPTY;
        for sc in iter {
            set.insert(sc);
        }
        set
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Key {
    Digit(Digit),
    Star,
    Hash,
}

impl Key {
    pub fn from_symbol(symbol: char) -> Option<Key> {
        match symbol {
            '*' => Some(Key::Star),
            '#' => Some(Key::Hash),
            c => Digit::from_char(c).map(Key::Digit),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Key::Digit(d) => d.to_char(),
            Key::Star => '*',
            Key::Hash => '#',
        }
    }

    /// Matrix position of this key in the layout table.
    pub fn position(self) -> SwitchClosure {
        let symbol = self.symbol();
        SwitchClosure::all()
            .find(|sc| LAYOUT[sc.row()][sc.col()] == symbol)
            .expect("every key symbol is in the layout")
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

pub fn decode(sc: SwitchClosure) -> Key {
    Key::from_symbol(LAYOUT[sc.row()][sc.col()]).expect("layout holds only key symbols")
}

/// Columns that read low while `row` is strobed, as a bitmask.
///
/// Walks the bipartite row/column graph whose edges are the closed switches
/// until no new node is reached.
pub fn read_row(closed: SwitchSet, row: usize) -> u8 {
    let mut rows: u8 = 1 << row;
    let mut cols: u8 = 0;
    loop {
        let mut next_cols = cols;
        for r in (0..ROWS).filter(|r| rows & (1 << r) != 0) {
            next_cols |= closed.row_mask(r);
        }
        let mut next_rows = rows;
        for r in 0..ROWS {
            if closed.row_mask(r) & next_cols != 0 {
                next_rows |= 1 << r;
            }
        }
        if next_cols == cols && next_rows == rows {
            return cols;
        }
        cols = next_cols;
        rows = next_rows;
    }
}

/// Everything one full scan cycle saw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScanResult {
    pub detected: SwitchSet,
    /// Some detected switch was not physically closed when its row was read.
    pub ghosted: bool,
}

/// Strobes all four rows against a fixed set of closures.
pub fn scan_cycle(closed: SwitchSet) -> ScanResult {
    let mut scanner = MatrixScanner::new();
    loop {
        if let Some(result) = scanner.strobe(closed) {
            return result;
        }
    }
}

/// Row-at-a-time scanner. Each call to [`strobe`](Self::strobe) reads one
/// row; the closure set may change between calls, as it does when a key is
/// pressed mid-cycle.
#[derive(Debug, Clone, Default)]
pub struct MatrixScanner {
    next_row: usize,
    detected: SwitchSet,
    ghosted: bool,
}

impl MatrixScanner {
    pub fn new() -> Self {
        Self::default()
    }

    /// Reads the next row. Returns the completed result after the last row.
    pub fn strobe(&mut self, closed: SwitchSet) -> Option<ScanResult> {
        let row = self.next_row;
        let cols = read_row(closed, row);
        for col in (0..COLS).filter(|c| cols & (1 << c) != 0) {
            self.detected.insert(SwitchClosure::new(row, col).unwrap());
        }
        if cols != closed.row_mask(row) {
            self.ghosted = true;
        }
        self.next_row += 1;
        if self.next_row < ROWS {
            return None;
        }
        let result = ScanResult {
            detected: self.detected,
            ghosted: self.ghosted,
        };
        *self = MatrixScanner::new();
        Some(result)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyEvent {
    pub key: Key,
    pub at_tick: u64,
}

pub const DEFAULT_DEBOUNCE_MS: u64 = 20;

/// Turns raw scan results into key events.
///
/// A key fires once it has been the only detected switch for at least
/// `debounce_ms`. It cannot fire again until it stops being detected, so
/// holding a key never repeats.
#[derive(Debug, Clone)]
pub struct Debouncer {
    debounce_ms: u64,
    candidate: Option<(SwitchClosure, u64)>,
    latched: Option<SwitchClosure>,
}

impl Debouncer {
    pub fn new(debounce_ms: u64) -> Self {
        Debouncer {
            debounce_ms,
            candidate: None,
            latched: None,
        }
    }

    pub fn debounce_step(&mut self, raw: &ScanResult, now_tick: u64) -> Option<KeyEvent> {
        if let Some(latched) = self.latched {
            if !raw.detected.contains(latched) {
                self.latched = None;
            }
        }
        if raw.ghosted || raw.detected.len() != 1 {
            self.candidate = None;
            return None;
        }
        let sc = raw.detected.iter().next().unwrap();
        if self.latched == Some(sc) {
            return None;
        }
        let since = match self.candidate {
            Some((held, since)) if held == sc => since,
            _ => {
                self.candidate = Some((sc, now_tick));
                now_tick
            }
        };
        if now_tick.saturating_sub(since) >= self.debounce_ms {
            self.candidate = None;
            self.latched = Some(sc);
            return Some(KeyEvent {
                key: decode(sc),
                at_tick: now_tick,
            });
        }
        None
    }
}

impl Default for Debouncer {
    fn default() -> Self {
        Debouncer::new(DEFAULT_DEBOUNCE_MS)
    }
}
