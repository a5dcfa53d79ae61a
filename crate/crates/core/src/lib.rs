//! Flipper: an interactive, naturalizing task language for a grid-world robot.
//!
//! Utterances are chart-parsed against a grammar that starts as the core language and
//! grows as users define new phrasings. Programs are planned and executed on a
//! simulated grid world.

pub mod lang;
pub mod semparse;
pub mod world;
pub mod planner;
pub mod exec;
pub mod induct;
pub mod genz;
pub mod store;
pub mod session;
