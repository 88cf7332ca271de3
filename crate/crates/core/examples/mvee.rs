//! Solves the origin-centered minimum-volume enclosing ellipsoid for a
//! random point cloud and checks the certificate.

use sepnmf::mvee::{ellipsoid_support, solve_mvee};
use sepnmf::rng::Stream;

fn main() -> sepnmf::Result<()> {
    let p = Stream::new(5).gaussian_matrix(4, 200);
    let e = solve_mvee(&p, 1e-6)?;
    let forms = ellipsoid_support(&e, &p)?;
    let max = forms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("log det L = {:.6}", e.log_det());
    println!("max p'Lp = {max:.9}, violation {:.2e}", e.max_violation);
    println!("support {:?} after {} iterations", e.support.to_one_based(), e.iterations);
    Ok(())
}
