use super::*;
use crate::rng::seeded;
use rand::Rng as _;

fn random(rows: usize, cols: usize, seed: u64) -> Tensor2 {
    let mut rng = seeded(seed);
    Tensor2::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect(),
    )
    .unwrap()
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues(m: &Tensor2) -> Vec<f64> {
    let n = m.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| m.row(i).to_vec()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

#[test]
fn single_node() {
    let g = build_graph(
        &Tensor2::from_rows(&[[1.0, 2.0]]).unwrap(),
        &[0..1],
        10.0,
        None,
    )
    .unwrap();
    assert_eq!(g.adjacency, Tensor2::identity(1));
    assert!(build_graph(&Tensor2::zeros(0, 2), &[], 10.0, None).is_err());
}

#[test]
fn identical_rows_are_linked() {
    let f = Tensor2::from_rows(&[[1.0, 1.0], [5.0, 0.0], [1.0, 1.0], [9.0, 9.0]]).unwrap();
    for p in [1.0, 10.0, 50.0] {
        let g = build_graph(&f, &[], p, None).unwrap();
        assert!(g.edges.contains(&(0, 2)));
    }
}

#[test]
fn path_graph_normalisation() {
    let mut a = Tensor2::identity(3);
    for (i, j) in [(0, 1), (1, 2)] {
        a.set(i, j, 1.0);
        a.set(j, i, 1.0);
    }
    let h = normalize_adjacency(&a).unwrap();
    assert!((h.get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-12);
    assert!((h.get(0, 1) - 0.40825).abs() < 1e-5);
    for (i, d) in [0.5, 1.0 / 3.0, 0.5].iter().enumerate() {
        assert!((h.get(i, i) - d).abs() < 1e-12);
    }
    assert_eq!(h.get(0, 2), 0.0);
    // same graph through build_graph: one recording, far-apart features
    let f = Tensor2::from_rows(&[[0.0], [100.0], [250.0]]).unwrap();
    let g = build_graph(&f, &[0..3], 1.0, None).unwrap();
    assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
    assert!(g.adjacency.max_abs_diff(&h) < 1e-15);
}

#[test]
fn identity_and_complete_graphs() {
    assert_eq!(
        normalize_adjacency(&Tensor2::identity(4)).unwrap(),
        Tensor2::identity(4)
    );
    for n in 2..=5 {
        let h = normalize_adjacency(&Tensor2::filled(n, n, 1.0)).unwrap();
        assert!(h.data().iter().all(|v| (v - 1.0 / n as f64).abs() < 1e-15));
        let x = Tensor2::from_vec(n, 2, (0..n).flat_map(|_| [3.0, -1.0]).collect()).unwrap();
        let p = propagate(&h, &x).unwrap();
        assert!(p.max_abs_diff(&x) < 1e-12);
    }
}

#[test]
fn per_entry_oracle_on_random_graph() {
    let mut rng = seeded(5);
    let mut a = Tensor2::identity(6);
    for i in 0..6 {
        for j in i + 1..6 {
            if rng.random_bool(0.4) {
                a.set(i, j, 1.0);
                a.set(j, i, 1.0);
            }
        }
    }
    let h = normalize_adjacency(&a).unwrap();
    let deg: Vec<f64> = (0..6).map(|i| (0..6).map(|j| a.get(i, j)).sum()).collect();
    for i in 0..6 {
        for j in 0..6 {
            assert!((h.get(i, j) - a.get(i, j) / (deg[i] * deg[j]).sqrt()).abs() < 1e-12);
        }
    }
}

#[test]
fn asymmetric_input_rejected() {
    let mut a = Tensor2::identity(3);
    a.set(0, 1, 1.0);
    assert!(normalize_adjacency(&a).is_err());
}

#[test]
fn invariants_on_random_graphs() {
    for seed in 0..10 {
        let f = random(20, 5, seed);
        let runs = [0..7, 7..12, 12..20];
        let g = build_graph(&f, &runs, 20.0, None).unwrap();
        let a = &g.adjacency;
        assert_eq!(a.max_abs_diff(&a.transpose()), 0.0);
        for run in &runs {
            for i in run.start..run.end - 1 {
                assert!(g.edges.contains(&(i, i + 1)));
            }
        }
        assert!(a.data().iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!((0..20).all(|i| a.get(i, i) > 0.0));
        for ev in jacobi_eigenvalues(a) {
            assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&ev), "eigenvalue {ev}");
        }
    }
}

#[test]
fn edges_grow_with_percentile() {
    let f = random(25, 4, 3);
    let mut prev: Vec<(usize, usize)> = Vec::new();
    for p in [1.0, 5.0, 10.0, 25.0, 50.0, 90.0] {
        let g = build_graph(&f, &[], p, None).unwrap();
        assert!(prev.iter().all(|e| g.edges.contains(e)));
        prev = g.edges;
    }
}

#[test]
fn threshold_from_reference_rows() {
    let f = Tensor2::from_rows(&[[0.0], [1.0], [2.0], [50.0]]).unwrap();
    let g = build_graph(&f, &[], 50.0, Some(&[0, 1, 2])).unwrap();
    // reference distances 1, 1, 2 -> median 1
    assert_eq!(g.threshold, 1.0);
    assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
}

#[test]
fn percentile_interpolates() {
    assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 50.0).unwrap(), 2.5);
    assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 10.0).unwrap(), 1.4);
}

#[test]
fn propagate_is_linear_and_matches_loops() {
    let f = random(8, 3, 9);
    let a = build_graph(&f, &[0..8], 30.0, None).unwrap().adjacency;
    let x = random(8, 4, 10);
    let y = random(8, 4, 11);
    let (s, t) = (0.7, -1.3);
    let lhs = propagate(&a, &x.scale(s).add(&y.scale(t)).unwrap()).unwrap();
    let rhs = propagate(&a, &x)
        .unwrap()
        .scale(s)
        .add(&propagate(&a, &y).unwrap().scale(t))
        .unwrap();
    assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    let p = propagate(&a, &x).unwrap();
    for i in 0..8 {
        for j in 0..4 {
            let v: f64 = (0..8).map(|k| a.get(i, k) * x.get(k, j)).sum();
            assert!((p.get(i, j) - v).abs() < 1e-12);
        }
    }
    assert_eq!(propagate(&Tensor2::identity(8), &x).unwrap(), x);
    assert!(propagate(&a, &random(7, 2, 1)).is_err());
}

#[test]
fn edge_csv_written() {
    let dir = tempfile::tempdir().unwrap();
    let f = Tensor2::from_rows(&[[0.0], [3.0]]).unwrap();
    let g = build_graph(&f, &[0..2], 10.0, None).unwrap();
    let path = dir.path().join("edges.csv");
    g.write_edge_csv(&f, &path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "0,1,3.0000000000000000e0");
}

#[test]
fn window_graphs_per_modality_and_shared() {
    let ws = WindowSet {
        client: "c".into(),
        modalities: vec![Modality::Act, Modality::Dc],
        features: vec![random(6, 3, 1), random(6, 2, 2)],
        labels: vec![0, 0, 0, 1, 1, 1],
        recording: vec![0, 0, 0, 1, 1, 1],
        window_index: vec![0, 1, 2, 0, 1, 2],
    };
    let per = build_window_graphs(&ws, &[0, 1, 3, 4], 10.0, false).unwrap();
    assert_eq!(per.len(), 2);
    assert_eq!(per[1].modality, Some(Modality::Dc));
    for g in &per {
        for e in [(0, 1), (1, 2), (3, 4), (4, 5)] {
            assert!(g.edges.contains(&e));
        }
    }
    let shared = build_window_graphs(&ws, &[0, 1, 3, 4], 10.0, true).unwrap();
    assert_eq!(shared.len(), 1);
    assert_eq!(shared[0].modality, None);
}
