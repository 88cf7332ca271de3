//! Compares SPA-seeded, randomized and truncated-SVD rank-k approximations
//! and prints the error bound report for the SPA-seeded one.

use sepnmf::harness::svd_rank_approx;
use sepnmf::lowrank::{bound_report, rand_subspace_approx, spa_rank_approx};
use sepnmf::metrics::approximation_error;
use sepnmf::synth::generate_instance;

fn main() -> sepnmf::Result<()> {
    let base = generate_instance(50, 2000, 10, 0.0, 3, None)?;
    let inst = generate_instance(50, 2000, 10, 0.5 * base.noise_threshold(), 3, None)?;
    let a = &inst.a;
    for q in [1, 2, 5, 10] {
        let spa = spa_rank_approx(a, 10, q)?;
        let rand = rand_subspace_approx(a, 10, q, 0, 7)?;
        let (_, es) = approximation_error(a, &spa.b)?;
        let (_, er) = approximation_error(a, &rand.b)?;
        println!("q {q:2}: spa rel {es:.6e}  rand rel {er:.6e}");
    }
    let (svd, _) = svd_rank_approx(a, 10)?;
    println!("svd rel {:.6e}", approximation_error(a, &svd)?.1);

    let spa = spa_rank_approx(a, 10, 10)?;
    let r = bound_report(a, &spa)?;
    println!(
        "achieved {:.6e} <= bound {:.6e} (sigma_k+1 {:.6e})",
        r.achieved_error, r.theorem4_bound, r.sigma_k1
    );
    Ok(())
}
