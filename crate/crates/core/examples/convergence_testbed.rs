//! DP FedAvg on strongly convex quadratics: geometric decay of the squared
//! distance to the optimum, then a noise floor.

use fedgraph::eval::{fit_geometric_ratio, quadratic_testbed, ConvergenceBoundParams};
use fedgraph::Result;

fn main() -> Result<()> {
    let base = ConvergenceBoundParams {
        dim: 4,
        sampled: 5,
        clip: 10.0,
        eta: 0.1,
        ..ConvergenceBoundParams::default()
    };
    let noiseless = quadratic_testbed(&base, 10, 100, 4, 1)?;
    let ratio = fit_geometric_ratio(&noiseless.mean, 0.0, 0.0).unwrap_or(f64::NAN);
    println!(
        "noiseless per-round ratio {ratio:.4} (1 - eta*mu)^2 = {:.4}",
        (1.0 - base.eta * base.mu).powi(2)
    );

    let noisy = ConvergenceBoundParams {
        sigma: 0.05,
        ..base
    };
    let t = quadratic_testbed(&noisy, 10, 300, 20, 1)?;
    println!("plateau {:.3e}, bound {:.3e}", t.plateau(200), t.floor);
    for round in [0, 10, 50, 100, 300] {
        println!(
            "round {round:>3}: mean {:.3e}  p10 {:.3e}  p90 {:.3e}",
            t.mean[round], t.p10[round], t.p90[round]
        );
    }
    Ok(())
}
