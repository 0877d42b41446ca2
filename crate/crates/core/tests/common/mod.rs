#![allow(dead_code)]
pub mod crystal_checks;
pub mod solver_checks;
pub mod oracle;
