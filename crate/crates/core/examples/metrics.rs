//! Accuracy, F1 averages, the confusion matrix and utility loss.

use fedgraph::eval::{accuracy, confusion, f1_score, utility_loss, F1Average};
use fedgraph::Result;

fn main() -> Result<()> {
    let truth = [0, 0, 0, 0, 1, 1, 2, 2, 2, 2];
    let pred = [0, 0, 1, 0, 1, 2, 2, 2, 0, 2];
    println!("accuracy {:.3}", accuracy(&pred, &truth)?);
    for avg in [F1Average::Macro, F1Average::Micro, F1Average::Weighted] {
        println!(
            "{:<8} f1 {:.4}",
            avg.name(),
            f1_score(&pred, &truth, 3, avg)?
        );
    }
    print!("{}", confusion(&pred, &truth, 3)?.to_csv());
    println!(
        "utility loss 0.95 -> 0.80: {:.4}",
        utility_loss(0.80, 0.95)?
    );
    Ok(())
}
