//! Writes a synthetic dataset in the MEx directory layout, loads it back and
//! runs the full preprocessing pipeline.

use fedgraph::dataio::{
    load_mex_layout, prepare_mex, write_synthetic_mex, AutoencoderConfig, Modality, PipelineConfig,
    SyntheticSpec,
};
use fedgraph::Result;

fn main() -> Result<()> {
    let root = std::env::temp_dir().join("fedgraph_synthetic_mex");
    let _ = std::fs::remove_dir_all(&root);
    let spec = SyntheticSpec {
        clients: 3,
        classes: 4,
        windows_per_client: 24,
        modalities: Modality::ALL
            .iter()
            .map(|&m| (m, m.feature_dim(), 3.0))
            .collect(),
        seed: 8,
        ..SyntheticSpec::default()
    };

    let cfg = PipelineConfig {
        autoencoder: AutoencoderConfig {
            hidden: 32,
            latent: 8,
            ..AutoencoderConfig::default()
        },
        autoencoder_epochs: 3,
        ..PipelineConfig::default()
    };
    // Cut windows exactly as the recordings were written.
    write_synthetic_mex(&spec, &root, cfg.window_secs, cfg.stride_secs)?;
    let recordings = load_mex_layout(&root)?;
    println!("{} recordings under {}", recordings.len(), root.display());
    for client in prepare_mex(&recordings, &cfg)? {
        let dims: Vec<String> = client
            .windows
            .modalities
            .iter()
            .zip(&client.windows.features)
            .map(|(m, f)| format!("{}:{}", m.name(), f.cols()))
            .collect();
        println!(
            "{}: {} windows ({} train / {} test), features {}",
            client.windows.client,
            client.windows.len(),
            client.train.len(),
            client.test.len(),
            dims.join(" ")
        );
    }
    Ok(())
}
