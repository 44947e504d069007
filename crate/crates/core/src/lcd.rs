//! 16x2 character LCD at the command level.
//!
//! Only the command subset the panel needs is modelled: clear, home, display
//! on/off, DDRAM address set and character write. Row 0 starts at DDRAM
//! address 0x00 and row 1 at 0x40. Writing past column 15 overwrites column
//! 15 instead of wrapping.

use thiserror::Error;

pub const LCD_ROWS: usize = 2;
pub const LCD_COLS: usize = 16;

/// DDRAM address of the first cell of row 1.
pub const ROW1_ADDR: u8 = 0x40;

const BLANK: u8 = b' ';

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LcdError {
    #[error("DDRAM address {0:#04x} is not on the display")]
    InvalidAddress(u8),
    #[error("character {0:?} is not printable")]
    Unprintable(char),
    #[error("unsupported instruction byte {0:#04x}")]
    UnsupportedInstruction(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LcdCommand {
    Clear,
    Home,
    DisplayOnOff(bool),
    SetAddress(u8),
    WriteChar(char),
}

impl LcdCommand {
    /// Decodes one bus transfer. `rs` selects the data register.
    pub fn from_bus(rs: bool, byte: u8) -> Result<LcdCommand, LcdError> {
        if rs {
            return Ok(LcdCommand::WriteChar(char::from(byte)));
        }
        match byte {
            0x01 => Ok(LcdCommand::Clear),
            0x02 | 0x03 => Ok(LcdCommand::Home),
            0x08..=0x0f => Ok(LcdCommand::DisplayOnOff(byte & 0x04 != 0)),
            b if b & 0x80 != 0 => Ok(LcdCommand::SetAddress(b & 0x7f)),
            other => Err(LcdError::UnsupportedInstruction(other)),
        }
    }

    /// Inverse of [`from_bus`](Self::from_bus): `(rs, byte)`.
    pub fn to_bus(self) -> (bool, u8) {
        match self {
            LcdCommand::Clear => (false, 0x01),
            LcdCommand::Home => (false, 0x02),
            LcdCommand::DisplayOnOff(on) => (false, 0x08 | if on { 0x04 } else { 0 }),
            LcdCommand::SetAddress(addr) => (false, 0x80 | addr),
            LcdCommand::WriteChar(c) => (true, c as u8),
        }
    }
}

fn printable(c: char) -> bool {
    (' '..='~').contains(&c)
}

/// Maps any character onto something the display can show.
pub fn to_display_char(c: char) -> char {
    if printable(c) {
        c
    } else {
        '?'
    }
}

fn address_to_cursor(addr: u8) -> Option<(usize, usize)> {
    let cols = LCD_COLS as u8;
    match addr {
        a if a < cols => Some((0, a as usize)),
        a if (ROW1_ADDR..ROW1_ADDR + cols).contains(&a) => Some((1, (a - ROW1_ADDR) as usize)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LcdBuffer {
    cells: [[u8; LCD_COLS]; LCD_ROWS],
    cursor_row: usize,
    cursor_col: usize,
    display_on: bool,
}

impl Default for LcdBuffer {
    fn default() -> Self {
        LcdBuffer {
            cells: [[BLANK; LCD_COLS]; LCD_ROWS],
            cursor_row: 0,
            cursor_col: 0,
            display_on: false,
        }
    }
}

impl LcdBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn cursor(&self) -> (usize, usize) {
        (self.cursor_row, self.cursor_col)
    }

    pub fn display_on(&self) -> bool {
        self.display_on
    }

    /// Applies one command. On error the buffer is left untouched.
    pub fn apply(&mut self, cmd: LcdCommand) -> Result<(), LcdError> {
        match cmd {
            LcdCommand::Clear => {
                self.cells = [[BLANK; LCD_COLS]; LCD_ROWS];
                self.cursor_row = 0;
                self.cursor_col = 0;
            }
            LcdCommand::Home => {
                self.cursor_row = 0;
                self.cursor_col = 0;
            }
            LcdCommand::DisplayOnOff(on) => self.display_on = on,
            LcdCommand::SetAddress(addr) => {
                let (row, col) = address_to_cursor(addr).ok_or(LcdError::InvalidAddress(addr))?;
                self.cursor_row = row;
                self.cursor_col = col;
            }
            LcdCommand::WriteChar(c) => {
                if !printable(c) {
                    return Err(LcdError::Unprintable(c));
                }
                self.cells[self.cursor_row][self.cursor_col] = c as u8;
                self.cursor_col = (self.cursor_col + 1).min(LCD_COLS - 1);
            }
        }
        Ok(())
    }

    /// Moves to the start of `row` and writes `text` padded with blanks to
    /// the full width.
    pub fn write_line(&mut self, row: usize, text: &str) -> Result<(), LcdError> {
        let base = if row == 0 { 0 } else { ROW1_ADDR };
        self.apply(LcdCommand::SetAddress(base))?;
        let padded = text
            .chars()
            .map(to_display_char)
            .chain(std::iter::repeat(' '))
            .take(LCD_COLS);
        for c in padded {
            self.apply(LcdCommand::WriteChar(c))?;
        }
        Ok(())
    }

    pub fn render_lines(&self) -> [String; LCD_ROWS] {
        self.cells
            .map(|row| row.iter().map(|&b| char::from(b)).collect::<String>())
    }

    pub fn line_matches(&self, row: usize, text: &str) -> bool {
        self.cells[row]
            .iter()
            .map(|&b| char::from(b))
            .eq(text.chars())
    }
}
