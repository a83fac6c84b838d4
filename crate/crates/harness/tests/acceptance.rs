//! Runs every acceptance criterion and prints one verdict line per criterion.

use std::process::ExitCode;

use sohb_harness::acceptance::run_suite;

fn main() -> ExitCode {
    sohb_harness::init_threads().expect("thread pool");
    let results = run_suite(&[], |r| println!("{}", r.line()));
    let passed = results.iter().filter(|r| r.passed).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
