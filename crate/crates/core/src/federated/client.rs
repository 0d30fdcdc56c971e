use std::sync::Arc;

use crate::dataio::PreparedClient;
use crate::error::{Error, Result};
use crate::graph::{build_window_graphs, DEFAULT_PERCENTILE};
use crate::models::{ModelInput, ModelSpec};
use crate::numerics::Tensor2;

/// How client graphs are built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphOptions {
    pub percentile: f64,
    /// One graph over concatenated features instead of one per modality.
    pub shared: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            percentile: DEFAULT_PERCENTILE,
            shared: false,
        }
    }
}

/// Everything one client trains and evaluates on. Graphs span train and
/// test windows; `train` and `test` select the labelled and held-out nodes.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: String,
    pub input: ModelInput,
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl ClientState {
    pub fn new(prepared: &PreparedClient, graph: &GraphOptions) -> Result<Self> {
        let ws = &prepared.windows;
        ws.validate()?;
        let n = ws.len();
        if prepared.train.iter().chain(&prepared.test).any(|&i| i >= n) {
            return Err(Error::Index(format!(
                "{}: split index outside {n} windows",
                ws.client
            )));
        }
        let graphs = if ws.is_empty() {
            Vec::new()
        } else {
            build_window_graphs(ws, &prepared.train, graph.percentile, graph.shared)?
        };
        Ok(Self {
            id: ws.client.clone(),
            input: ModelInput {
                features: ws.features.clone(),
                adjacency: graphs.into_iter().map(|g| Arc::new(g.adjacency)).collect(),
            },
            labels: ws.labels.clone(),
            train: prepared.train.clone(),
            test: prepared.test.clone(),
        })
    }

    pub fn nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn check(&self, spec: &ModelSpec) -> Result<()> {
        if self.input.features.len() != spec.modalities() {
            return Err(Error::param(format!(
                "{}: modality count differs from the model",
                self.id
            )));
        }
        for (f, &d) in self.input.features.iter().zip(&spec.input_dims) {
            if f.cols() != d {
                return Err(Error::shape("client features", (f.rows(), d), f.shape()));
            }
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= spec.classes) {
            return Err(Error::Index(format!(
                "{}: label {bad} outside {} classes",
                self.id, spec.classes
            )));
        }
        Ok(())
    }

    /// Concatenates clients into one disconnected graph (block-diagonal
    /// adjacency), as used for centralized training.
    pub fn pooled(clients: &[ClientState]) -> Result<ClientState> {
        let first = clients
            .first()
            .ok_or_else(|| Error::param("nothing to pool"))?;
        let n: usize = clients.iter().map(ClientState::nodes).sum();
        let modalities = first.input.features.len();
        let graphs = first.input.adjacency.len();
        let mut features = Vec::new();
        for m in 0..modalities {
            let width = first.input.features[m].cols();
            let mut out = Tensor2::zeros(n, width);
            let mut row = 0;
            for c in clients {
                let f = c
                    .input
                    .features
                    .get(m)
                    .ok_or_else(|| Error::param("clients disagree on modalities"))?;
                if f.cols() != width {
                    return Err(Error::shape("pooled features", (n, width), f.shape()));
                }
                for i in 0..f.rows() {
                    out.row_mut(row + i).copy_from_slice(f.row(i));
                }
                row += f.rows();
            }
            features.push(out);
        }
        let mut adjacency = Vec::new();
        for g in 0..graphs {
            let mut out = Tensor2::zeros(n, n);
            let mut offset = 0;
            for c in clients {
                let a = c
                    .input
                    .adjacency
                    .get(g)
                    .ok_or_else(|| Error::param("clients disagree on graphs"))?;
                for i in 0..a.rows() {
                    out.row_mut(offset + i)[offset..offset + a.cols()].copy_from_slice(a.row(i));
                }
                offset += c.nodes();
            }
            adjacency.push(Arc::new(out));
        }
        let (mut labels, mut train, mut test) = (Vec::new(), Vec::new(), Vec::new());
        let mut offset = 0;
        for c in clients {
            labels.extend_from_slice(&c.labels);
            train.extend(c.train.iter().map(|i| i + offset));
            test.extend(c.test.iter().map(|i| i + offset));
            offset += c.nodes();
        }
        Ok(ClientState {
            id: "pooled".into(),
            input: ModelInput {
                features,
                adjacency,
            },
            labels,
            train,
            test,
        })
    }
}
