//! Runs every column selector on one noisy instance and reports recovery.

use sepnmf::harness::calibrated_instance;
use sepnmf::metrics::recovery_rate;
use sepnmf::select::{run_selector, Method, SelectOptions};

fn main() -> sepnmf::Result<()> {
    let inst = calibrated_instance(50, 1000, 10, 1.0, 42)?;
    let opts = SelectOptions { q: Some(5), ..SelectOptions::default() };
    for m in Method::ALL {
        let r = run_selector(m, &inst.a, 10, &opts)?;
        let rate = recovery_rate(&r.indices, &inst.true_indices)?;
        println!("{:10} recovery {rate:.2}", m.name());
    }
    Ok(())
}
