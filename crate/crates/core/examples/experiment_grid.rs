//! Runs a small config with a sweep, the same path the CLI `run` takes, and
//! prints the summary table and the files each cell wrote.

use std::path::Path;

use fedgraph::experiment::{run_experiment, RawConfig, SUMMARY_HEADER};
use fedgraph::Result;

fn main() -> Result<()> {
    let out = std::env::temp_dir().join("fedgraph_grid");
    let _ = std::fs::remove_dir_all(&out);
    let text = format!(
        "# two models, with and without privacy
mode = federated
modalities = act,dc
seed = 3
replicates = 2
output.dir = {}
training.rounds = 15
training.local_epochs = 1
training.hidden = 16
synthetic.clients = 3
synthetic.classes = 3
synthetic.windows_per_client = 30
synthetic.dim = 8
sweep.model = gcn, ffn
sweep.privacy.epsilon = none, 2.0
",
        out.display()
    );
    let raw = RawConfig::parse(&text, Path::new("inline.cfg"))?;
    let cells = run_experiment(&raw)?;
    println!("{SUMMARY_HEADER}");
    for c in &cells {
        println!("{}", c.summary.csv_row());
    }
    let mut files: Vec<String> = std::fs::read_dir(&cells[0].dir)
        .map_err(|source| fedgraph::Error::Io {
            path: cells[0].dir.clone(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect();
    files.sort();
    println!("{}: {}", cells[0].dir.display(), files.join(", "));
    Ok(())
}
