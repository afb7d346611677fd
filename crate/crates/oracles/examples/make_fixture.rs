//! Write a synthetic death-count CSV.
//!
//! ```text
//! cargo run -p funcqr-oracles --example make_fixture -- SEED N M OUT.csv
//! ```

use std::env;
use std::fs;
use std::process::ExitCode;

fn main() -> ExitCode {
    let args: Vec<String> = env::args().skip(1).collect();
    let [seed, n, m, out] = args.as_slice() else {
        eprintln!("usage: make_fixture SEED N M OUT.csv");
        return ExitCode::from(1);
    };
    let (Ok(seed), Ok(n), Ok(m)) = (seed.parse(), n.parse(), m.parse()) else {
        eprintln!("SEED, N and M must be integers");
        return ExitCode::from(1);
    };
    if !(1..=27).contains(&n) || m < 3 {
        eprintln!("need 1 <= N <= 27 and M >= 3");
        return ExitCode::from(1);
    }
    if let Err(e) = fs::write(out, funcqr_oracles::fixture_csv(seed, n, m)) {
        eprintln!("{out}: {e}");
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}
