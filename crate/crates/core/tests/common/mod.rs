#![allow(dead_code)]

pub mod auc;
pub mod budget;
pub mod filters;
pub mod merge;
pub mod runs;
pub mod synthetic;
