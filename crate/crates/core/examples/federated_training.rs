//! Federated training of the GCN and the feedforward baseline on synthetic
//! clients, without privacy and with a calibrated noise multiplier.

use fedgraph::dataio::{generate_synthetic, Modality, PreparedClient, SyntheticSpec};
use fedgraph::eval::F1Average;
use fedgraph::federated::{run_federated, ClientState, FederatedConfig, GraphOptions, LocalConfig};
use fedgraph::models::{ModelKind, ModelSpec};
use fedgraph::numerics::OptimizerKind;
use fedgraph::privacy::{calibrate_sigma, PrivacySpec};
use fedgraph::Result;

fn main() -> Result<()> {
    let data = SyntheticSpec {
        clients: 4,
        classes: 3,
        windows_per_client: 48,
        modalities: vec![(Modality::Act, 12, 3.0), (Modality::Dc, 8, 3.0)],
        seed: 2,
        ..SyntheticSpec::default()
    };
    let clients = generate_synthetic(&data)?
        .into_iter()
        .enumerate()
        .map(|(i, ws)| {
            ClientState::new(
                &PreparedClient::split(ws, 0.7, i as u64)?,
                &GraphOptions::default(),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let cfg = FederatedConfig {
        local: LocalConfig {
            optimizer: OptimizerKind::Adam,
            lr: 0.01,
            epochs: 2,
            batch_size: 16,
            noise_every_local_step: false,
        },
        rounds: 30,
        ..FederatedConfig::default()
    };
    let delta = 1e-5;
    let sigma = calibrate_sigma(8.0, delta, cfg.client_fraction, cfg.rounds as u64)?;
    let private = PrivacySpec {
        epsilon: Some(8.0),
        delta,
        sigma,
        clip: 1.0,
        sample_rate: cfg.client_fraction,
        steps: cfg.rounds as u64,
    };

    for kind in [ModelKind::Gcn, ModelKind::Ffn] {
        let spec = ModelSpec {
            kind,
            input_dims: vec![12, 8],
            hidden: 16,
            classes: 3,
            layers: 1,
            dropout: 0.1,
        };
        for (label, privacy) in [
            ("no dp", PrivacySpec::non_private()),
            ("eps 8", private.clone()),
        ] {
            let run = run_federated(&clients, &spec, &cfg, &privacy, F1Average::Macro, 0)?;
            let last = run.reports.last().expect("at least one round");
            println!(
                "{kind} {label}: accuracy {:.3}, f1 {:.3}, epsilon spent {}",
                last.test_accuracy,
                last.test_f1,
                last.epsilon.map_or("-".into(), |e| format!("{e:.3}"))
            );
        }
    }
    println!("sigma for epsilon 8 over {} rounds: {sigma:.4}", cfg.rounds);
    Ok(())
}
