//! With one client, full participation, one local epoch and a single batch,
//! a federated round is one centralized step.

use fedgraph::dataio::{generate_synthetic, Modality, PreparedClient, SyntheticSpec};
use fedgraph::eval::F1Average;
use fedgraph::federated::{
    run_centralized, run_federated, ClientState, FederatedConfig, GraphOptions, LocalConfig,
};
use fedgraph::models::{ModelKind, ModelSpec};
use fedgraph::numerics::OptimizerKind;
use fedgraph::privacy::PrivacySpec;
use fedgraph::Result;

fn main() -> Result<()> {
    let data = SyntheticSpec {
        clients: 1,
        classes: 3,
        windows_per_client: 40,
        modalities: vec![(Modality::Act, 6, 3.0), (Modality::Pm, 6, 3.0)],
        seed: 4,
        ..SyntheticSpec::default()
    };
    let ws = generate_synthetic(&data)?.remove(0);
    let client = ClientState::new(
        &PreparedClient::split(ws, 0.75, 0)?,
        &GraphOptions::default(),
    )?;
    let clients = [client];

    let spec = ModelSpec {
        kind: ModelKind::Gcn,
        input_dims: vec![6, 6],
        hidden: 8,
        classes: 3,
        layers: 1,
        dropout: 0.0,
    };
    let local = LocalConfig {
        optimizer: OptimizerKind::Sgd,
        lr: 0.1,
        epochs: 1,
        batch_size: 1000,
        noise_every_local_step: false,
    };
    let fed = FederatedConfig {
        local: local.clone(),
        rounds: 1,
        ..FederatedConfig::default()
    };
    let privacy = PrivacySpec::non_private();
    let a = run_federated(&clients, &spec, &fed, &privacy, F1Average::Macro, 9)?;
    let b = run_centralized(&clients, &spec, &local, &privacy, F1Average::Macro, 9, 0)?;

    let diff = a
        .params
        .flatten()
        .iter()
        .zip(b.params.flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    println!("max parameter difference after one step: {diff:.3e}");
    Ok(())
}
