//! Office access control panel.
//!
//! A keypad-driven door controller and the simulated hardware around it:
//!
//! - [`credential`]: user database, passcode encoding and replay flags
//! - [`keypad`]: 4x3 switch matrix scanning, ghosting and debounce
//! - [`lcd`]: 16x2 character display
//! - [`actuators`]: electromagnetic lock and siren
//! - [`controller`]: the passcode entry state machine
//! - [`sim`], [`scenario`], [`audit`], [`config`], [`control`]: the
//!   deterministic harness, script runner, audit log and control protocol

pub mod actuators;
pub mod audit;
pub mod config;
pub mod control;
pub mod controller;
pub mod credential;
pub mod keypad;
pub mod lcd;
pub mod scenario;
pub mod sim;

pub use config::Config;
pub use controller::{Effect, Event, Mode, PanelState};
pub use credential::{load_users, save_users, Database, Passcode, UserRecord};
pub use scenario::Scenario;
pub use sim::{run_scenario, ScenarioReport, Simulator, Snapshot};
