//! Unmixes a synthetic cube: selects endmembers, estimates abundances and
//! scores them by spectral angle against the true basis.

use sepnmf::metrics::{estimate_abundances, spectral_angle_distance};
use sepnmf::select::pspa_select;
use sepnmf::synth::generate_instance;

fn main() -> sepnmf::Result<()> {
    let inst = generate_instance(40, 900, 4, 0.01, 9, None)?;
    let sel = pspa_select(&inst.a, 4, 1e-6)?;
    let f_hat = sel.indices.extract(&inst.a);
    for j in 0..4 {
        let best = (0..4)
            .map(|i| spectral_angle_distance(inst.f.col(i), f_hat.col(j)))
            .collect::<sepnmf::Result<Vec<f64>>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        println!("endmember {}: closest true spectrum at {best:.3e} rad", j + 1);
    }
    let ab = estimate_abundances(&f_hat, &inst.a)?;
    let worst = ab.residuals.iter().copied().fold(0.0, f64::max);
    println!("abundances {}x{}, worst pixel residual {worst:.3e}", ab.w.rows(), ab.w.cols());
    Ok(())
}
