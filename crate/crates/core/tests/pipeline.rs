use corrsync_core::baselines::{default_epsilon, direct_propagate, mst_propagate, shortest_path_propagate, EdgeCost, TreeStructure};
use corrsync_core::benchmark::{corrupt_maps, synth_collection, SynthConfig};
use corrsync_core::collection::io::{load_collection, save_collection, save_collection_annotated, LoadOptions};
use corrsync_core::flow::PathOptions;
use corrsync_core::soft::{mle, propagate_soft, QuerySet};
use corrsync_core::{CorrespondenceMap, Point, Shape, ShapeCollection, SyncGraph};
use proptest::prelude::*;

fn small_synth(seed: u64) -> ShapeCollection {
    let cfg = SynthConfig { n_shapes: 5, n_points: 80, landmarks: 5, seed, ..Default::default() };
    corrupt_maps(&synth_collection(&cfg).unwrap(), 0.3, 0.5, seed).unwrap().0
}

fn assert_same(a: &ShapeCollection, b: &ShapeCollection) {
    assert_eq!(a.shapes(), b.shapes());
    for i in 0..a.len() {
        for j in 0..a.len() {
            assert_eq!(a.graph().d(i, j), b.graph().d(i, j));
            if i != j {
                assert_eq!(a.map(i, j).unwrap(), b.map(i, j).unwrap());
            }
        }
    }
}

#[test]
fn save_and_load_round_trip() {
    let c = small_synth(3);
    let dir = tempfile::tempdir().unwrap();
    let manifest = save_collection(&c, dir.path()).unwrap();
    assert_same(&c, &load_collection(&manifest, &LoadOptions::default()).unwrap());

    let annotated = dir.path().join("annotated");
    let header = vec!["generated for a test".to_string()];
    let manifest = save_collection_annotated(&c, &annotated, &header, Some(serde_json::json!({"seed": 3}))).unwrap();
    let dist = std::fs::read_to_string(annotated.join("distances.csv")).unwrap();
    assert!(dist.starts_with("# generated for a test\n"));
    assert_same(&c, &load_collection(&manifest, &LoadOptions::default()).unwrap());
}

#[test]
fn baselines_agree_on_adjacent_pairs() {
    let c = small_synth(4);
    let tree = TreeStructure::kruskal(c.graph());
    let eps = default_epsilon(c.graph());
    for i in 0..c.len() {
        for j in 0..c.len() {
            if i == j {
                continue;
            }
            let direct = direct_propagate(&c, i, j).unwrap();
            assert_eq!(&direct, c.map(i, j).unwrap());
            let (mst, path) = mst_propagate(&c, &tree, i, j).unwrap();
            assert_eq!((path[0], *path.last().unwrap()), (i, j));
            if path.len() == 2 {
                assert_eq!(mst, direct);
            }
            let (_, sp) = shortest_path_propagate(&c, i, j, eps, EdgeCost::Squared).unwrap();
            assert_eq!((sp[0], *sp.last().unwrap()), (i, j));
            assert!(sp.windows(2).all(|w| c.graph().d(w[0], w[1]) <= eps));
        }
    }
}

fn line_collection(xs: &[f64], images: &[Vec<usize>]) -> ShapeCollection {
    let pts = 4;
    let shapes: Vec<Shape> =
        (0..xs.len()).map(|k| Shape::new(format!("s{k}"), (0..pts).map(|p| Point::new(p as f64, 0.0, 0.0)).collect())).collect();
    let graph = SyncGraph::from_coordinates(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>(), 1.0).unwrap();
    let mut maps = Vec::new();
    let mut next = images.iter().cycle();
    for a in 0..xs.len() {
        for b in 0..xs.len() {
            if a != b {
                maps.push(CorrespondenceMap::discrete(format!("s{a}"), format!("s{b}"), pts, next.next().unwrap().clone()).unwrap());
            }
        }
    }
    ShapeCollection::new(shapes, graph, maps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn soft_rows_are_probability_distributions(
        offsets in prop::collection::vec(0.1f64..2.0, 3..6),
        images in prop::collection::vec(prop::collection::vec(0usize..4, 4), 1..8),
        lambda in 0.0f64..1.0,
    ) {
        let xs: Vec<f64> = offsets.iter().scan(0.0, |acc, d| { *acc += d; Some(*acc) }).collect();
        let c = line_collection(&xs, &images);
        let last = xs.len() - 1;
        let q = QuerySet::All.vertices(&c, 0);
        let soft = propagate_soft(&c, 0, last, &PathOptions::with_lambda(lambda), &q).unwrap();
        prop_assert!(soft.path_count >= 1);
        for (_, row) in &soft.rows {
            prop_assert!((row.total() - 1.0).abs() < 1e-9);
            prop_assert!(row.support().all(|v| v < 4));
        }
        let hard = mle(&soft).unwrap();
        for (v, row) in &soft.rows {
            let w = hard.get(*v).unwrap();
            prop_assert!(row.entries().iter().all(|&(_, m)| m <= row.mass_at(w) + 1e-15));
        }
    }
}
