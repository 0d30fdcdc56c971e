//! Smallest noise multiplier that meets a privacy budget, across sampling
//! rates, budgets and training lengths.

use fedgraph::privacy::{calibrate_sigma, compose_and_convert, AccountantState};
use fedgraph::Result;

fn main() -> Result<()> {
    let delta = 1e-5;
    println!("q      epsilon  steps  sigma    spent");
    for q in [0.01, 0.1] {
        for epsilon in [0.5, 1.0, 2.0] {
            for steps in [50, 1000] {
                let sigma = calibrate_sigma(epsilon, delta, q, steps)?;
                let state = AccountantState::for_mechanism(q, sigma)?;
                let spent = compose_and_convert(&state, steps, delta)?;
                println!("{q:<6} {epsilon:<8} {steps:<6} {sigma:<8.4} {spent:.4}");
            }
        }
    }
    // Full participation gets no amplification from subsampling.
    match calibrate_sigma(0.5, delta, 1.0, 200) {
        Ok(sigma) => println!("q = 1 over 200 steps: sigma {sigma:.4}"),
        Err(e) => println!("q = 1 over 200 steps: {e}"),
    }
    Ok(())
}
