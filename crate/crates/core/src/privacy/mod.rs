//! Records and analysis of what each party learns.

pub mod attack;
pub mod coalition;
pub mod scan;
pub mod transcript;
pub mod view;
