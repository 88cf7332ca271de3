//! Runs the tiny benchmark suites and prints their summaries.

use sepnmf::harness::{run_suite, BenchConfig, Scale, Suite};
use sepnmf::mvee::DEFAULT_EPS;
use sepnmf::select::DEFAULT_BOUNDARY_TOL;

fn main() -> sepnmf::Result<()> {
    let bench = BenchConfig {
        scale: Scale::Tiny,
        seed: 0,
        jobs: 1,
        eps: DEFAULT_EPS,
        boundary_tol: DEFAULT_BOUNDARY_TOL,
        instances: None,
    };
    for suite in Suite::All.expand() {
        let out = run_suite(suite, &bench)?;
        print!("{}", out.summary());
    }
    Ok(())
}
