use rand::Rng as _;

use super::*;
use crate::graph::{build_graph, normalize_adjacency};
use crate::numerics::{OptimizerState, Tensor2};
use crate::rng::seeded;

fn random(rows: usize, cols: usize, rng: &mut Rng) -> Tensor2 {
    Tensor2::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect(),
    )
    .unwrap()
}

fn spec(
    kind: ModelKind,
    dims: Vec<usize>,
    hidden: usize,
    classes: usize,
    layers: usize,
) -> ModelSpec {
    ModelSpec {
        kind,
        input_dims: dims,
        hidden,
        classes,
        layers,
        dropout: 0.0,
    }
}

fn random_graph(n: usize, rng: &mut Rng) -> Arc<Tensor2> {
    let mut a = Tensor2::identity(n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.5) {
                a.set(i, j, 1.0);
                a.set(j, i, 1.0);
            }
        }
    }
    Arc::new(normalize_adjacency(&a).unwrap())
}

fn perturb(params: &mut ModelParams, rng: &mut Rng) {
    let flat: Vec<f64> = params
        .flatten()
        .iter()
        .map(|v| v + rng.random_range(-0.5..0.5))
        .collect();
    params.assign_flat(&flat).unwrap();
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let mut rng = seeded(31);
    for kind in [ModelKind::Gcn, ModelKind::Ffn] {
        let mut worst = 0.0f64;
        for inst in 0..100 {
            let n = rng.random_range(2..=6);
            let dims = vec![rng.random_range(1..=4), rng.random_range(1..=4)];
            let s = ModelSpec {
                layers: 1 + inst % 2,
                ..spec(kind, dims.clone(), 8, 3, 1)
            };
            let mut params = init_params(&s, inst as u64).unwrap();
            perturb(&mut params, &mut rng);
            let input = ModelInput {
                features: dims.iter().map(|&d| random(n, d, &mut rng)).collect(),
                adjacency: vec![random_graph(n, &mut rng), random_graph(n, &mut rng)],
            };
            let nodes: Vec<usize> = (0..n).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let r = gradient_check(&s, &params, &input, &nodes, &labels, 1e-5).unwrap();
            assert!(r.checked > 0);
            worst = worst.max(r.max_relative_error);
        }
        assert!(worst < 1e-3, "{kind}: worst relative error {worst}");
    }
}

#[test]
fn identity_adjacency_gcn_bit_equals_ffn() {
    let mut rng = seeded(2);
    let s = ModelSpec {
        dropout: 0.5,
        ..spec(ModelKind::Gcn, vec![5, 3, 4], 6, 4, 2)
    };
    let params = init_params(&s, 7).unwrap();
    let input = ModelInput {
        features: s
            .input_dims
            .iter()
            .map(|&d| random(9, d, &mut rng))
            .collect(),
        adjacency: vec![Arc::new(Tensor2::identity(9))],
    };
    for training in [false, true] {
        let a = gcn_forward(&s, &params, &input, training, &mut seeded(4)).unwrap();
        let b = ffn_forward(&s, &params, &input, training, &mut seeded(4)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn attention_rows_are_simplex() {
    let mut rng = seeded(3);
    let s = spec(ModelKind::Gcn, vec![3, 2, 5], 4, 2, 1);
    let mut params = init_params(&s, 1).unwrap();
    perturb(&mut params, &mut rng);
    let input = ModelInput {
        features: s
            .input_dims
            .iter()
            .map(|&d| random(7, d, &mut rng))
            .collect(),
        adjacency: vec![random_graph(7, &mut rng)],
    };
    let p = forward(&s, &params, &input, false, &mut rng).unwrap();
    for r in 0..7 {
        let row = p.attention.row(r);
        assert!(row.iter().all(|&v| v >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn single_modality_attention_is_one() {
    let mut rng = seeded(5);
    let s = spec(ModelKind::Gcn, vec![4], 5, 3, 1);
    let params = init_params(&s, 2).unwrap();
    let input = ModelInput {
        features: vec![random(6, 4, &mut rng)],
        adjacency: vec![random_graph(6, &mut rng)],
    };
    let p = forward(&s, &params, &input, false, &mut rng).unwrap();
    assert!(p.attention.data().iter().all(|&v| v == 1.0));
    // fused embedding is the modality embedding: logits = Z·W + b
    let logits = p.embedding.matmul(params.get("cls.w").unwrap()).unwrap();
    assert!(logits.max_abs_diff(&p.logits) < 1e-12);
}

#[test]
fn symmetric_modalities_get_equal_attention() {
    let mut rng = seeded(6);
    let s = spec(ModelKind::Ffn, vec![3, 3], 4, 2, 1);
    let mut params = init_params(&s, 3).unwrap();
    for suffix in ["l0.w", "l0.b_self", "att_a"] {
        let t = params.get(&format!("m0.{suffix}")).unwrap().clone();
        *params.get_mut(&format!("m1.{suffix}")).unwrap() = t;
    }
    let x = random(5, 3, &mut rng);
    let input = ModelInput {
        features: vec![x.clone(), x],
        adjacency: vec![],
    };
    let p = forward(&s, &params, &input, false, &mut rng).unwrap();
    assert!(p.attention.data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
}

/// Step-by-step scalar recomputation of a one-layer two-modality GCN.
fn manual_forward(
    params: &ModelParams,
    adj: &[Tensor2],
    xs: &[Tensor2],
    hidden: usize,
    classes: usize,
) -> Vec<Vec<f64>> {
    let n = xs[0].rows();
    let mut z = Vec::new();
    let mut score = Vec::new();
    for (m, x) in xs.iter().enumerate() {
        let w = params.get(&format!("m{m}.l0.w")).unwrap();
        let b = params.get(&format!("m{m}.l0.b_self")).unwrap();
        let g = params.get(&format!("m{m}.l0.ln_gain")).unwrap();
        let beta = params.get(&format!("m{m}.l0.ln_bias")).unwrap();
        let mut zm = vec![vec![0.0; hidden]; n];
        let mut sm = vec![0.0; n];
        for i in 0..n {
            let mut pre = vec![0.0; hidden];
            for (c, p) in pre.iter_mut().enumerate() {
                for k in 0..n {
                    let mut xw = 0.0;
                    for d in 0..x.cols() {
                        xw += x.get(k, d) * w.get(d, c);
                    }
                    *p += adj[m].get(i, k) * xw;
                }
                for d in 0..x.cols() {
                    *p += x.get(i, d) * b.get(d, c);
                }
            }
            let mean = pre.iter().sum::<f64>() / hidden as f64;
            let var = pre.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / hidden as f64;
            for c in 0..hidden {
                let y = (pre[c] - mean) / (var + 1e-5).sqrt() * g.get(0, c) + beta.get(0, c);
                zm[i][c] = y.max(0.0);
            }
            let a = params.get(&format!("m{m}.att_a")).unwrap();
            sm[i] = (0..hidden).map(|c| zm[i][c] * a.get(c, 0)).sum::<f64>()
                + params.get(&format!("m{m}.att_b")).unwrap().item();
        }
        z.push(zm);
        score.push(sm);
    }
    let cw = params.get("cls.w").unwrap();
    let cb = params.get("cls.b").unwrap();
    (0..n)
        .map(|i| {
            let mx = score[0][i].max(score[1][i]);
            let e: Vec<f64> = (0..2).map(|m| (score[m][i] - mx).exp()).collect();
            let tot: f64 = e.iter().sum();
            let fused: Vec<f64> = (0..hidden)
                .map(|c| (0..2).map(|m| e[m] / tot * z[m][i][c]).sum())
                .collect();
            (0..classes)
                .map(|k| cb.get(0, k) + (0..hidden).map(|c| fused[c] * cw.get(c, k)).sum::<f64>())
                .collect()
        })
        .collect()
}

#[test]
fn four_node_forward_matches_manual_oracle() {
    let mut rng = seeded(8);
    for kind in [ModelKind::Gcn, ModelKind::Ffn] {
        let s = spec(kind, vec![3, 2], 5, 3, 1);
        let mut params = init_params(&s, 11).unwrap();
        perturb(&mut params, &mut rng);
        let adj = vec![random_graph(4, &mut rng), random_graph(4, &mut rng)];
        let xs = vec![random(4, 3, &mut rng), random(4, 2, &mut rng)];
        let input = ModelInput {
            features: xs.clone(),
            adjacency: adj.clone(),
        };
        let p = forward(&s, &params, &input, false, &mut rng).unwrap();
        let used: Vec<Tensor2> = match kind {
            ModelKind::Gcn => adj.iter().map(|a| (**a).clone()).collect(),
            ModelKind::Ffn => vec![Tensor2::identity(4); 2],
        };
        let oracle = manual_forward(&params, &used, &xs, 5, 3);
        for (i, row) in oracle.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                assert!((p.logits.get(i, k) - v).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn node_permutation_permutes_logits() {
    let mut rng = seeded(13);
    let s = spec(ModelKind::Gcn, vec![3, 4], 6, 3, 2);
    let mut params = init_params(&s, 5).unwrap();
    perturb(&mut params, &mut rng);
    let n = 8;
    let xs: Vec<Tensor2> = vec![random(n, 3, &mut rng), random(n, 4, &mut rng)];
    let adj = vec![random_graph(n, &mut rng), random_graph(n, &mut rng)];
    let perm = [3, 0, 7, 1, 6, 2, 5, 4];
    let permute_adj = |a: &Tensor2| {
        let mut out = Tensor2::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, a.get(perm[i], perm[j]));
            }
        }
        Arc::new(out)
    };
    let base = forward(
        &s,
        &params,
        &ModelInput {
            features: xs.clone(),
            adjacency: adj.clone(),
        },
        false,
        &mut rng,
    )
    .unwrap();
    let permuted = ModelInput {
        features: xs.iter().map(|x| x.gather_rows(&perm).unwrap()).collect(),
        adjacency: adj.iter().map(|a| permute_adj(a)).collect(),
    };
    let p = forward(&s, &params, &permuted, false, &mut rng).unwrap();
    assert!(
        p.logits
            .max_abs_diff(&base.logits.gather_rows(&perm).unwrap())
            < 1e-10
    );
}

#[test]
fn overfits_small_separable_graph() {
    let mut rng = seeded(17);
    let n = 20;
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let xs: Vec<Tensor2> = [4usize, 3]
        .iter()
        .map(|&d| {
            let mut x = random(n, d, &mut rng).scale(0.3);
            for (i, &l) in labels.iter().enumerate() {
                x.set(i, 0, x.get(i, 0) + if l == 0 { 1.0 } else { -1.0 });
            }
            x
        })
        .collect();
    let runs = [0..10, 10..20];
    let adj: Vec<Arc<Tensor2>> = xs
        .iter()
        .map(|x| Arc::new(build_graph(x, &runs, 10.0, None).unwrap().adjacency))
        .collect();
    for kind in [ModelKind::Gcn, ModelKind::Ffn] {
        let s = spec(kind, vec![4, 3], 16, 2, 2);
        let mut params = init_params(&s, 1).unwrap();
        let input = ModelInput {
            features: xs.clone(),
            adjacency: adj.clone(),
        };
        let mut opt = OptimizerState::adam(0.01);
        let nodes: Vec<usize> = (0..n).collect();
        let mut tensors = params.tensors().to_vec();
        for _ in 0..200 {
            params.set_tensors(tensors.clone()).unwrap();
            let (_, g) =
                loss_and_gradients(&s, &params, &input, &nodes, &labels, false, &mut rng).unwrap();
            opt.apply(&mut tensors, &g).unwrap();
        }
        params.set_tensors(tensors).unwrap();
        let p = forward(&s, &params, &input, false, &mut rng).unwrap();
        assert_eq!(predict_labels(&p.logits), labels, "{kind}");
    }
}

#[test]
fn init_is_deterministic_with_glorot_variance() {
    let s = spec(ModelKind::Gcn, vec![64], 64, 3, 2);
    let a = init_params(&s, 9).unwrap();
    assert_eq!(a, init_params(&s, 9).unwrap());
    assert_ne!(a, init_params(&s, 10).unwrap());
    for (name, t) in a.iter() {
        if name.ends_with("ln_bias") || name.ends_with("att_b") || name == "cls.b" {
            assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
        }
        if name.ends_with("ln_gain") {
            assert!(t.data().iter().all(|&v| v == 1.0));
        }
    }
    let w = a.get("m0.l1.w").unwrap();
    let mean = w.sum() / w.len() as f64;
    let var = w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64;
    let target = 2.0 / 128.0;
    assert!((var / target - 1.0).abs() < 0.1, "{var} vs {target}");
}

#[test]
fn argmax_rules() {
    let l = Tensor2::from_rows(&[[0.1, 0.9], [0.5, 0.5], [3.0, -1.0]]).unwrap();
    assert_eq!(predict_labels(&l), vec![1, 0, 0]);
    let shifted = l.map(|v| v + 17.0);
    assert_eq!(predict_labels(&shifted), predict_labels(&l));
}

#[test]
fn flatten_and_bytes_round_trip() {
    let s = spec(ModelKind::Gcn, vec![3, 2], 4, 3, 2);
    let p = init_params(&s, 4).unwrap();
    let flat = p.flatten();
    assert_eq!(flat.len(), p.num_scalars());
    assert_eq!(p.unflatten(&flat).unwrap(), p);
    assert!(p.unflatten(&flat[1..]).is_err());
    let back = ModelParams::from_bytes(&p.to_bytes()).unwrap();
    assert_eq!(back, p);
    let bytes = p.to_bytes();
    assert!(ModelParams::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    p.save(&path).unwrap();
    assert_eq!(ModelParams::load(&path).unwrap(), p);
}

#[test]
fn mismatched_inputs_rejected() {
    let mut rng = seeded(1);
    let s = spec(ModelKind::Gcn, vec![3, 2], 4, 3, 1);
    let params = init_params(&s, 4).unwrap();
    let bad_rows = ModelInput {
        features: vec![random(4, 3, &mut rng), random(5, 2, &mut rng)],
        adjacency: vec![Arc::new(Tensor2::identity(4))],
    };
    assert!(forward(&s, &params, &bad_rows, false, &mut rng).is_err());
    let no_graph = ModelInput {
        features: vec![random(4, 3, &mut rng), random(4, 2, &mut rng)],
        adjacency: vec![],
    };
    assert!(gcn_forward(&s, &params, &no_graph, false, &mut rng).is_err());
    assert!(ffn_forward(&s, &params, &no_graph, false, &mut rng).is_ok());
}
