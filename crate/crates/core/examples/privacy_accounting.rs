//! Rényi-DP accounting for the subsampled Gaussian mechanism: per-order
//! cost, composition over rounds, and conversion to (epsilon, delta).

use fedgraph::privacy::{rdp_subsampled_gaussian, AccountantState};
use fedgraph::Result;

fn main() -> Result<()> {
    let (q, sigma, delta) = (0.2, 1.2, 1e-5);
    for order in [2, 8, 32] {
        println!(
            "order {order:>2}: rdp per release {:.5}",
            rdp_subsampled_gaussian(q, sigma, order)?
        );
    }

    let mut acc = AccountantState::default();
    for round in 1..=5u64 {
        acc.compose(q, sigma, 20)?;
        let (eps, order) = acc.epsilon(delta)?;
        println!(
            "after {:>3} releases: epsilon {eps:.4} (order {order})",
            round * 20
        );
    }
    Ok(())
}
