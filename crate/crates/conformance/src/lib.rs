//! End-to-end conformance checks for the codeshift workbench.
//!
//! `criteria` holds one function per acceptance criterion; the `acceptance`
//! test target runs them all and prints a PASS/FAIL line for each.

pub mod criteria;
pub mod support;
