//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Reference values come from independent oracles written here: brute-force
//! geometry, naive substring scans, exhaustive partition search, dense linear
//! algebra and random placement baselines.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use gvdb_core::abstraction::{
    build_hierarchy, degree_scores, hits, pagerank, scores, AbstractionCriterion, CriterionKind, HitsConfig, Layer,
    PageRankConfig,
};
use gvdb_core::layout::{layout_partitions, LayoutAlgorithm, LocalLayout};
use gvdb_core::organize::{arrange, crossing_edges, ArrangeConfig, CrossingEdge};
use gvdb_core::partition::{edge_cut, partition, PartitionConfig};
use gvdb_core::store::{build_store, Store, StoreInfo};
use gvdb_core::{Execution, Graph, NodeId, Point, Rect};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)+) => {
        if !$cond {
            return Err(format!($($arg)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("spatial oracle equivalence", spatial_oracle),
        ("keyword oracle equivalence", keyword_oracle),
        ("partition quality", partition_quality),
        ("organizer invariants", organizer_invariants),
        ("ranking correctness", ranking_correctness),
        ("layer invariants", layer_invariants),
        ("window scaling shape", window_scaling_shape),
        ("end-to-end preprocess and serve", end_to_end),
        ("persistence round-trip", persistence),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}  [{secs:.1}s]  {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}  [{secs:.1}s]  {detail}");
            }
        }
        std::io::stdout().flush().ok();
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- helpers

fn random_graph(rng: &mut ChaCha8Rng, n: u64, m: usize, directed: bool, labels: &[&str]) -> Graph {
    let mut g = Graph::new(directed);
    for i in 0..n {
        g.add_node(NodeId(i), format!("node{i}"));
    }
    for _ in 0..m {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        g.add_edge(NodeId(a), NodeId(b), *labels.choose(rng).unwrap()).unwrap();
    }
    g
}

fn random_layout(rng: &mut ChaCha8Rng, g: &Graph, side: i32) -> HashMap<NodeId, Point> {
    g.nodes()
        .iter()
        .map(|n| {
            // integer coordinates make touching and collinear cases common
            let p = Point::new(rng.gen_range(0..side) as f64, rng.gen_range(0..side) as f64);
            (n.id, p)
        })
        .collect()
}

fn single_layer_store(g: Graph, layout: HashMap<NodeId, Point>) -> Store {
    build_store(&[Layer::base(g, layout)], StoreInfo::default(), Execution::Parallel).unwrap()
}

/// Segment against closed rectangle by Liang-Barsky parametric clipping.
fn segment_hits_rect(a: Point, b: Point, w: &Rect) -> bool {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [(-dx, a.x - w.min_x), (dx, w.max_x - a.x), (-dy, a.y - w.min_y), (dy, w.max_y - a.y)] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                t0 = t0.max(r);
            } else {
                t1 = t1.min(r);
            }
            if t0 > t1 {
                return false;
            }
        }
    }
    true
}

type RowKey = (NodeId, Option<NodeId>, String);

// ---------------------------------------------------------------- criteria

fn spatial_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let started = Instant::now();
    let mut total_rows = 0usize;
    for case in 0..1000 {
        let n = rng.gen_range(1..=1200u64);
        let m = rng.gen_range(0..=5000usize);
        let side = rng.gen_range(10..400);
        let g = random_graph(&mut rng, n, m, true, &["a", "b", "c"]);
        let layout = random_layout(&mut rng, &g, side);
        let x0 = rng.gen_range(-20..side) as f64;
        let y0 = rng.gen_range(-20..side) as f64;
        let w = Rect::new(x0, y0, x0 + rng.gen_range(0..side) as f64, y0 + rng.gen_range(0..side) as f64);

        let mut expected: Vec<RowKey> = Vec::new();
        let mut touched = HashSet::new();
        for e in g.edges() {
            touched.insert(e.source);
            touched.insert(e.target);
            if segment_hits_rect(layout[&e.source], layout[&e.target], &w) {
                expected.push((e.source, Some(e.target), e.label.clone()));
            }
        }
        for node in g.nodes() {
            if !touched.contains(&node.id) && segment_hits_rect(layout[&node.id], layout[&node.id], &w) {
                expected.push((node.id, None, String::new()));
            }
        }
        expected.sort();

        let store = single_layer_store(g, layout);
        let mut got: Vec<RowKey> = store
            .window_query(0, &w, None)
            .unwrap()
            .into_iter()
            .map(|r| (r.node1_id, r.node2_id, r.edge_label))
            .collect();
        got.sort();
        ensure!(got == expected, "case {case}: {} rows returned, oracle has {}", got.len(), expected.len());
        total_rows += got.len();
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s, limit 60s");
    Ok(format!("1000 cases, {total_rows} rows matched, {secs:.1}s < 60s"))
}

fn keyword_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let alphabet: Vec<char> = "abcABCxyzÄäÉéßΣσ -_0".chars().collect();
    let started = Instant::now();
    let mut queries = 0;
    for set in 0..500 {
        let n = rng.gen_range(1..300u64);
        let labels: Vec<(NodeId, String)> = (0..n)
            .map(|i| {
                let len = rng.gen_range(0..24);
                (NodeId(i), (0..len).map(|_| *alphabet.choose(&mut rng).unwrap()).collect())
            })
            .collect();
        let mut g = Graph::new(true);
        for (id, l) in &labels {
            g.add_node(*id, l.clone());
        }
        let layout = g.nodes().iter().map(|n| (n.id, Point::ORIGIN)).collect();
        let store = single_layer_store(g, layout);

        for _ in 0..20 {
            let kw: String = if rng.gen_bool(0.7) {
                let (_, l) = labels.choose(&mut rng).unwrap();
                let chars: Vec<char> = l.chars().collect();
                if chars.is_empty() {
                    "a".to_string()
                } else {
                    let s = rng.gen_range(0..chars.len());
                    let e = rng.gen_range(s + 1..=chars.len());
                    let piece: String = chars[s..e].iter().collect();
                    if rng.gen_bool(0.5) {
                        piece.to_uppercase()
                    } else {
                        piece
                    }
                }
            } else {
                (0..rng.gen_range(1..12)).map(|_| *alphabet.choose(&mut rng).unwrap()).collect()
            };
            let needle = kw.to_lowercase();
            let mut expected: Vec<(NodeId, String)> =
                labels.iter().filter(|(_, l)| l.to_lowercase().contains(&needle)).cloned().collect();
            expected.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
            let got = store.keyword_search(0, &kw, usize::MAX).unwrap();
            ensure!(got == expected, "set {set}, keyword {kw:?}: {} hits, oracle {}", got.len(), expected.len());
            queries += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure!(secs < 30.0, "took {secs:.1}s, limit 30s");
    Ok(format!("500 label sets, {queries} keywords, {secs:.1}s < 30s"))
}

fn brute_force_cut(g: &Graph, max_part: usize) -> usize {
    let n = g.node_count();
    let idx: HashMap<NodeId, usize> = g.nodes().iter().enumerate().map(|(i, n)| (n.id, i)).collect();
    let mut best = usize::MAX;
    for mask in 1u32..(1 << n) - 1 {
        let ones = mask.count_ones() as usize;
        if ones > max_part || n - ones > max_part {
            continue;
        }
        let cut = g
            .edges()
            .iter()
            .filter(|e| (mask >> idx[&e.source] & 1) != (mask >> idx[&e.target] & 1))
            .count();
        best = best.min(cut);
    }
    best
}

fn partition_quality() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for case in 0..50 {
        let mut g = Graph::new(false);
        for i in 0..8u64 {
            g.add_node(NodeId(i), format!("v{i}"));
        }
        for a in 0..8u64 {
            for b in a + 1..8 {
                if rng.gen_bool(0.4) {
                    g.add_edge(NodeId(a), NodeId(b), "e").unwrap();
                }
            }
        }
        let cfg = PartitionConfig { k: 2, seed: case, ..PartitionConfig::default() };
        let a = partition(&g, &cfg).unwrap();
        let sizes = a.sizes();
        let max_part = cfg.max_part_size(8);
        ensure!(sizes.iter().all(|&s| s >= 1 && s <= max_part), "case {case}: unbalanced sizes {sizes:?}");
        let cut = edge_cut(&g, &a).unwrap();
        let opt = brute_force_cut(&g, max_part);
        ensure!(cut <= 2 * opt, "case {case}: cut {cut} > 2 x optimum {opt}");
        if opt > 0 {
            worst = worst.max(cut as f64 / opt as f64);
        }
    }

    let mut bridge = Graph::new(false);
    for i in 0..6u64 {
        bridge.add_node(NodeId(i), format!("v{i}"));
    }
    for (a, b) in [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3), (2, 3)] {
        bridge.add_edge(NodeId(a), NodeId(b), "e").unwrap();
    }
    let a = partition(&bridge, &PartitionConfig::new(2)).unwrap();
    let cut = edge_cut(&bridge, &a).unwrap();
    ensure!(cut == 1, "two-triangle bridge cut {cut}, expected 1");
    Ok(format!("50 graphs, worst cut/optimum {worst:.2} <= 2; bridge cut = 1"))
}

fn crossing_length(crossings: &[CrossingEdge], locals: &[LocalLayout], offsets: &[(f64, f64)]) -> f64 {
    crossings
        .iter()
        .map(|c| {
            let at = |(p, id): (usize, NodeId)| {
                let q = locals[p].positions[&id];
                Point::new(q.x + offsets[p].0, q.y + offsets[p].1)
            };
            at(c.source).distance(at(c.target))
        })
        .sum()
}

/// Boxes dropped into shuffled cells of a square grid sized for the largest box.
fn random_offsets(rng: &mut ChaCha8Rng, locals: &[LocalLayout], gap: f64) -> Vec<(f64, f64)> {
    let k = locals.len();
    let cols = (k as f64).sqrt().ceil() as usize;
    let cw = locals.iter().map(|l| l.bbox.width()).fold(0.0, f64::max) + gap;
    let ch = locals.iter().map(|l| l.bbox.height()).fold(0.0, f64::max) + gap;
    let mut cells: Vec<usize> = (0..cols * cols).collect();
    cells.shuffle(rng);
    locals
        .iter()
        .zip(cells)
        .map(|(l, c)| ((c % cols) as f64 * cw - l.bbox.min_x, (c / cols) as f64 * ch - l.bbox.min_y))
        .collect()
}

fn organizer_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = ArrangeConfig::default();
    for case in 0..1000 {
        let k = rng.gen_range(1..25usize);
        let mut next_id = 0u64;
        let locals: Vec<LocalLayout> = (0..k)
            .map(|_| {
                let (w, h) = (rng.gen_range(1.0..400.0), rng.gen_range(1.0..400.0));
                let (x, y) = (rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0));
                let positions: BTreeMap<NodeId, Point> = (0..rng.gen_range(1..6))
                    .map(|_| {
                        next_id += 1;
                        (NodeId(next_id), Point::new(x + rng.gen_range(0.0..w), y + rng.gen_range(0.0..h)))
                    })
                    .collect();
                LocalLayout { positions, bbox: Rect::new(x, y, x + w, y + h) }
            })
            .collect();
        let members: Vec<Vec<NodeId>> = locals.iter().map(|l| l.positions.keys().copied().collect()).collect();
        let crossings: Vec<CrossingEdge> = (0..rng.gen_range(0..3 * k))
            .filter_map(|_| {
                let (p, q) = (rng.gen_range(0..k), rng.gen_range(0..k));
                (p != q).then(|| CrossingEdge {
                    source: (p, *members[p].choose(&mut rng).unwrap()),
                    target: (q, *members[q].choose(&mut rng).unwrap()),
                    label: String::new(),
                })
            })
            .collect();
        let global = arrange(&locals, &crossings, &cfg).map_err(|e| format!("case {case}: {e}"))?;
        ensure!(global.boxes.len() == k, "case {case}: {} boxes placed of {k}", global.boxes.len());
        let boxes: Vec<Rect> = global.boxes.values().copied().collect();
        for i in 0..k {
            ensure!(
                (boxes[i].width() - locals[i].bbox.width()).abs() < 1e-6,
                "case {case}: box {i} changed size"
            );
            for j in i + 1..k {
                let (a, b) = (boxes[i], boxes[j]);
                let disjoint = a.max_x < b.min_x || b.max_x < a.min_x || a.max_y < b.min_y || b.max_y < a.min_y;
                ensure!(disjoint, "case {case}: boxes {i} and {j} intersect: {a:?} {b:?}");
            }
        }
    }

    let mut wins = 0;
    let mut ratio_sum = 0.0;
    for case in 0..50u64 {
        let communities = rng.gen_range(4..12u64);
        let size = rng.gen_range(15..40u64);
        let n = communities * size;
        let mut g = Graph::new(false);
        for i in 0..n {
            g.add_node(NodeId(i), format!("v{i}"));
        }
        for i in 0..n {
            for _ in 0..3 {
                let c = i / size;
                let j = if rng.gen_bool(0.9) {
                    c * size + rng.gen_range(0..size)
                } else {
                    rng.gen_range(0..n)
                };
                if i != j {
                    g.add_edge(NodeId(i), NodeId(j), "e").unwrap();
                }
            }
        }
        let pcfg = PartitionConfig { k: communities as usize, seed: case, ..PartitionConfig::default() };
        let assignment = partition(&g, &pcfg).unwrap();
        let alg = LayoutAlgorithm { iterations: 100, ..LayoutAlgorithm::default() };
        let locals = layout_partitions(&g, &assignment, &alg, case, Execution::Parallel).unwrap();
        let crossings = crossing_edges(&g, &assignment).unwrap();
        let global = arrange(&locals, &crossings, &cfg).unwrap();
        let greedy_offsets: Vec<(f64, f64)> = (0..locals.len()).map(|p| global.offsets[&p]).collect();
        let greedy = crossing_length(&crossings, &locals, &greedy_offsets);
        let random_mean: f64 = (0..20)
            .map(|_| crossing_length(&crossings, &locals, &random_offsets(&mut rng, &locals, cfg.gap)))
            .sum::<f64>()
            / 20.0;
        ensure!(greedy <= random_mean, "instance {case}: greedy {greedy:.0} > random mean {random_mean:.0}");
        if random_mean > 0.0 {
            ratio_sum += greedy / random_mean;
            wins += 1;
        }
    }
    Ok(format!(
        "1000 arrangements disjoint; greedy/random crossing length {:.2} on average over 50 instances",
        ratio_sum / wins.max(1) as f64
    ))
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Dense PageRank: solves `(I - d M) x = (1 - d) / n`, with `M` the column
/// stochastic transition matrix whose dangling columns are uniform.
fn dense_pagerank(g: &Graph, d: f64) -> Vec<f64> {
    let n = g.node_count();
    let idx: HashMap<NodeId, usize> = g.nodes().iter().enumerate().map(|(i, n)| (n.id, i)).collect();
    let mut adj = vec![vec![0.0; n]; n];
    for e in g.edges() {
        let (u, v) = (idx[&e.source], idx[&e.target]);
        adj[u][v] += 1.0;
        if !g.is_directed() && u != v {
            adj[v][u] += 1.0;
        }
    }
    let mut m = vec![vec![0.0; n]; n];
    for u in 0..n {
        let out: f64 = adj[u].iter().sum();
        for v in 0..n {
            m[v][u] = if out == 0.0 { 1.0 / n as f64 } else { adj[u][v] / out };
        }
    }
    let a: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 } - d * m[i][j]).collect()).collect();
    solve(a, vec![(1.0 - d) / n as f64; n])
}

/// Dense HITS: from uniform hubs, alternate `a = A^T h` and `h = A a`,
/// normalizing each, for many more rounds than the implementation uses.
fn dense_hits(g: &Graph) -> (Vec<f64>, Vec<f64>) {
    let n = g.node_count();
    let idx: HashMap<NodeId, usize> = g.nodes().iter().enumerate().map(|(i, n)| (n.id, i)).collect();
    let mut a = vec![vec![0.0; n]; n];
    for e in g.edges() {
        a[idx[&e.source]][idx[&e.target]] += 1.0;
    }
    let norm = |v: &mut Vec<f64>| {
        let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= s);
    };
    let mut hub = vec![1.0; n];
    norm(&mut hub);
    let mut auth = vec![0.0; n];
    for _ in 0..20_000 {
        auth = (0..n).map(|v| (0..n).map(|u| a[u][v] * hub[u]).sum()).collect();
        norm(&mut auth);
        hub = (0..n).map(|u| (0..n).map(|v| a[u][v] * auth[v]).sum()).collect();
        norm(&mut hub);
    }
    (hub, auth)
}

fn ranking_correctness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_pr = 0.0f64;
    let mut worst_hits = 0.0f64;
    for case in 0..20 {
        let m = rng.gen_range(8..30);
        let g = random_graph(&mut rng, 10, m, true, &["e"]);
        let pr = pagerank(&g, &PageRankConfig::default(), Execution::Parallel).unwrap();
        let sum: f64 = pr.scores.iter().sum();
        ensure!((sum - 1.0).abs() <= 1e-9, "case {case}: PageRank sums to {sum}");
        let oracle = dense_pagerank(&g, 0.85);
        let err = pr.scores.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure!(err <= 1e-8, "case {case}: PageRank off the dense solution by {err:e}");
        worst_pr = worst_pr.max(err);

        let h = hits(&g, &HitsConfig::default(), Execution::Parallel).unwrap();
        for (name, v) in [("hub", &h.hubs), ("authority", &h.authorities)] {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            ensure!((norm - 1.0).abs() <= 1e-9, "case {case}: {name} norm {norm}");
        }
        let (hub_o, auth_o) = dense_hits(&g);
        let err = h
            .authorities
            .iter()
            .zip(&auth_o)
            .chain(h.hubs.iter().zip(&hub_o))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        ensure!(err <= 1e-8, "case {case}: HITS off the dense iteration by {err:e}");
        worst_hits = worst_hits.max(err);
    }

    let mut cycle = Graph::new(true);
    for i in 0..3u64 {
        cycle.add_node(NodeId(i), format!("c{i}"));
    }
    for (a, b) in [(0, 1), (1, 2), (2, 0)] {
        cycle.add_edge(NodeId(a), NodeId(b), "e").unwrap();
    }
    let pr = pagerank(&cycle, &PageRankConfig::default(), Execution::Sequential).unwrap();
    for s in &pr.scores {
        ensure!((s - 1.0 / 3.0).abs() <= 1e-9, "3-cycle PageRank {s}");
    }
    Ok(format!("20 graphs; max PageRank error {worst_pr:.1e}, max HITS error {worst_hits:.1e}; 3-cycle = 1/3"))
}

fn layer_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let kinds = [CriterionKind::Degree, CriterionKind::Pagerank, CriterionKind::HitsAuthority];
    for case in 0..20 {
        let n = rng.gen_range(100..400u64);
        let m = rng.gen_range(n as usize..4 * n as usize);
        let g = random_graph(&mut rng, n, m, true, &["p", "q"]);
        let layout: HashMap<NodeId, Point> = g
            .nodes()
            .iter()
            .map(|n| (n.id, Point::new(rng.gen_range(-1e3..1e3), rng.gen_range(-1e3..1e3))))
            .collect();
        let kind = kinds[case % 3];
        let crit = AbstractionCriterion::keep_fraction(kind, 0.5);
        let h = build_hierarchy(Layer::base(g, layout.clone()), &crit, 5, Execution::Parallel).unwrap();
        ensure!(h.layers.len() == 5, "case {case}: {} layers built", h.layers.len());
        for w in h.layers.windows(2) {
            let (lower, upper) = (&w[0], &w[1]);
            let lower_nodes: BTreeSet<NodeId> = lower.graph.nodes().iter().map(|n| n.id).collect();
            let upper_nodes: BTreeSet<NodeId> = upper.graph.nodes().iter().map(|n| n.id).collect();
            ensure!(
                upper_nodes.is_subset(&lower_nodes) && upper_nodes.len() < lower_nodes.len(),
                "case {case}: layer {} nodes not a strict subset of layer {}",
                upper.index,
                lower.index
            );
            let induced: Vec<(NodeId, NodeId, &str)> = lower
                .graph
                .edges()
                .iter()
                .filter(|e| upper_nodes.contains(&e.source) && upper_nodes.contains(&e.target))
                .map(|e| (e.source, e.target, e.label.as_str()))
                .collect();
            let upper_edges: Vec<(NodeId, NodeId, &str)> =
                upper.graph.edges().iter().map(|e| (e.source, e.target, e.label.as_str())).collect();
            ensure!(
                induced == upper_edges,
                "case {case}: layer {} edges are not the induced edges of layer {}",
                upper.index,
                lower.index
            );
            for id in &upper_nodes {
                let (p, q) = (upper.layout[id], layout[id]);
                ensure!(
                    p.x.to_bits() == q.x.to_bits() && p.y.to_bits() == q.y.to_bits(),
                    "case {case}: node {id} moved between layers"
                );
            }
            let ranked = match kind {
                CriterionKind::Degree => degree_scores(&lower.graph),
                _ => scores(&lower.graph, kind, Execution::Sequential).unwrap(),
            };
            if kind == CriterionKind::Degree {
                // independent degree count: endpoints per node, a self-loop counting twice
                let mut deg: HashMap<NodeId, f64> = HashMap::new();
                for e in lower.graph.edges() {
                    *deg.entry(e.source).or_default() += 1.0;
                    *deg.entry(e.target).or_default() += 1.0;
                }
                for (i, node) in lower.graph.nodes().iter().enumerate() {
                    let d = deg.get(&node.id).copied().unwrap_or(0.0);
                    ensure!(ranked[i] == d, "case {case}: degree of {} is {} not {d}", node.id, ranked[i]);
                }
            }
            let mut min_kept = f64::INFINITY;
            let mut max_dropped = f64::NEG_INFINITY;
            for (i, node) in lower.graph.nodes().iter().enumerate() {
                if upper_nodes.contains(&node.id) {
                    min_kept = min_kept.min(ranked[i]);
                } else {
                    max_dropped = max_dropped.max(ranked[i]);
                }
            }
            ensure!(
                max_dropped <= min_kept,
                "case {case}: layer {} drops a node scoring {max_dropped} but keeps one scoring {min_kept}",
                upper.index
            );
        }
    }
    Ok("20 hierarchies of 5 layers: strictly nested, induced edges, identical positions, rank-respecting".into())
}

// ------------------------------------------------------- service helpers

struct Server {
    child: Child,
    base: String,
}

impl Server {
    fn start(store: &Path, chunk_size: usize) -> Server {
        let mut child = Command::new(env!("CARGO_BIN_EXE_gvdb"))
            .args(["serve", "--bind", "127.0.0.1:0", "--chunk-size", &chunk_size.to_string(), "--store"])
            .arg(store)
            .env("RUST_LOG", "warn")
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("spawn gvdb serve");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).expect("read listen line");
        let base = line.trim().strip_prefix("listening on ").expect("listen line").to_string();
        Server { child, base }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder().timeout(Duration::from_secs(120)).build().unwrap()
}

/// Client-side raster: Bresenham lines into a fixed-size canvas.
struct Canvas {
    w: usize,
    h: usize,
    px: Vec<u8>,
}

impl Canvas {
    fn new(w: usize, h: usize) -> Canvas {
        Canvas { w, h, px: vec![0; w * h] }
    }

    fn to_px(&self, win: &Rect, p: (f64, f64)) -> (i64, i64) {
        let x = (p.0 - win.min_x) / win.width().max(1e-9) * (self.w - 1) as f64;
        let y = (p.1 - win.min_y) / win.height().max(1e-9) * (self.h - 1) as f64;
        (x.round() as i64, y.round() as i64)
    }

    fn plot(&mut self, x: i64, y: i64) {
        if x >= 0 && y >= 0 && (x as usize) < self.w && (y as usize) < self.h {
            self.px[y as usize * self.w + x as usize] = 255;
        }
    }

    fn line(&mut self, (mut x0, mut y0): (i64, i64), (x1, y1): (i64, i64)) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let mut err = dx + dy;
        loop {
            self.plot(x0, y0);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }
}

struct WindowFetch {
    objects: usize,
    rows: usize,
    query_ms: f64,
    serialize_ms: f64,
    transfer_render_ms: f64,
}

fn fetch_window(http: &reqwest::blocking::Client, base: &str, layer: usize, w: &Rect) -> WindowFetch {
    let started = Instant::now();
    let url = format!(
        "{base}/api/window?layer={layer}&x1={}&y1={}&x2={}&y2={}&timings=true",
        w.min_x, w.min_y, w.max_x, w.max_y
    );
    let resp = http.get(url).send().expect("window request");
    assert_eq!(resp.status(), 200);
    let mut canvas = Canvas::new(1000, 1000);
    let mut nodes: HashSet<u64> = HashSet::new();
    let mut rows = 0;
    let mut edges = 0;
    let mut timings = (0.0, 0.0);
    for line in BufReader::new(resp).lines() {
        let v: Value = serde_json::from_str(&line.expect("body line")).expect("json line");
        if let Some(summary) = v.get("summary") {
            assert_eq!(summary["total_rows"].as_u64().unwrap() as usize, rows);
            timings = (summary["timings"]["query_ms"].as_f64().unwrap(), summary["timings"]["serialize_ms"].as_f64().unwrap());
            break;
        }
        for r in v["rows"].as_array().unwrap() {
            rows += 1;
            let g = &r["geometry"];
            let from = (g["from"]["x"].as_f64().unwrap(), g["from"]["y"].as_f64().unwrap());
            let to = (g["to"]["x"].as_f64().unwrap(), g["to"]["y"].as_f64().unwrap());
            let (a, b) = (canvas.to_px(w, from), canvas.to_px(w, to));
            canvas.line(a, b);
            nodes.insert(r["node1_id"].as_u64().unwrap());
            if let Some(n2) = r["node2_id"].as_u64() {
                nodes.insert(n2);
                edges += 1;
            }
        }
    }
    let total_ms = started.elapsed().as_secs_f64() * 1e3;
    WindowFetch {
        objects: nodes.len() + edges,
        rows,
        query_ms: timings.0,
        serialize_ms: timings.1,
        transfer_render_ms: (total_ms - timings.0 - timings.1).max(0.0),
    }
}

/// Jittered square lattice with right and down neighbours: roughly uniform
/// density of nodes and short edges over the plane.
fn lattice(side: u64, spacing: f64, extra: usize, rng: &mut ChaCha8Rng) -> (Graph, HashMap<NodeId, Point>) {
    let mut g = Graph::new(true);
    let mut layout = HashMap::new();
    let id = |r: u64, c: u64| NodeId(r * side + c);
    for r in 0..side {
        for c in 0..side {
            g.add_node(id(r, c), format!("cell {r}-{c}"));
            let jitter = (rng.gen_range(-0.25..0.25) * spacing, rng.gen_range(-0.25..0.25) * spacing);
            layout.insert(id(r, c), Point::new(c as f64 * spacing + jitter.0, r as f64 * spacing + jitter.1));
        }
    }
    for r in 0..side {
        for c in 0..side {
            if c + 1 < side {
                g.add_edge(id(r, c), id(r, c + 1), "row").unwrap();
            }
            if r + 1 < side {
                g.add_edge(id(r, c), id(r + 1, c), "col").unwrap();
            }
        }
    }
    for _ in 0..extra {
        let (r, c) = (rng.gen_range(0..side - 1), rng.gen_range(0..side - 1));
        g.add_edge(id(r, c), id(r + 1, c + 1), "diag").unwrap();
    }
    (g, layout)
}

fn window_scaling_shape() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let side = 224u64;
    let spacing = 20.0;
    let base_edges = 2 * side as usize * (side as usize - 1);
    let (g, layout) = lattice(side, spacing, 100_000 - base_edges, &mut rng);
    ensure!(g.edge_count() == 100_000, "fixture has {} edges", g.edge_count());
    let store = single_layer_store(g, layout);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("lattice.gvdb");
    store.save(&path).unwrap();
    let server = Server::start(&path, 500);
    let http = client();
    let extent = (side - 1) as f64 * spacing;

    let sizes = [200.0, 1000.0, 2000.0, 3000.0];
    let mut means = Vec::new();
    // warm-up connection and caches
    for _ in 0..5 {
        fetch_window(&http, &server.base, 0, &Rect::new(0.0, 0.0, 500.0, 500.0));
    }
    for &s in &sizes {
        let (mut objects, mut q, mut ser, mut tr) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..100 {
            let (x, y) = (rng.gen_range(0.0..extent - s), rng.gen_range(0.0..extent - s));
            let w = Rect::new(x, y, x + s, y + s);
            let f = fetch_window(&http, &server.base, 0, &w);
            if i % 25 == 0 {
                let direct = store.window_query(0, &w, None).unwrap().len();
                ensure!(f.rows == direct, "streamed {} rows, store returns {direct}", f.rows);
            }
            objects += f.objects as f64;
            q += f.query_ms;
            ser += f.serialize_ms;
            tr += f.transfer_render_ms;
        }
        means.push((s, objects / 100.0, q / 100.0, ser / 100.0, tr / 100.0));
    }

    let table: Vec<String> = means
        .iter()
        .map(|(s, o, q, ser, tr)| format!("{s}^2: {o:.0} objects, query {q:.2} / json {ser:.2} / transfer+render {tr:.2} ms"))
        .collect();
    let detail = table.join("; ");
    for w in means.windows(2) {
        ensure!(w[1].1 > w[0].1, "object count not increasing: {detail}");
    }
    let density_largest = means[3].1 / (sizes[3] * sizes[3]);
    for &(s, o, ..) in &means {
        let dev = (o / (s * s) / density_largest - 1.0).abs();
        ensure!(dev <= 0.25, "{s}^2 windows deviate {:.0}% from linear in area: {detail}", dev * 100.0);
    }
    for &(s, _, q, ser, tr) in &means {
        ensure!(q < ser && q < tr, "{s}^2: query time is not the smallest component: {detail}");
    }
    Ok(detail)
}

// ------------------------------------------------------------ end to end

/// Planted communities: 90% of edges stay inside a community of 500 nodes.
fn community_edge_list(nodes: u64, edges: usize, rng: &mut ChaCha8Rng) -> String {
    let community = 500;
    let kinds = ["cites", "authored", "mentions"];
    let mut out = String::with_capacity(edges * 40);
    for _ in 0..edges {
        let a = rng.gen_range(0..nodes);
        let b = if rng.gen_bool(0.9) {
            (a / community) * community + rng.gen_range(0..community)
        } else {
            rng.gen_range(0..nodes)
        }
        .min(nodes - 1);
        let kind = kinds.choose(rng).unwrap();
        out.push_str(&format!("{a}\tentity {a}\t{kind}\t{b}\tentity {b}\n"));
    }
    out
}

fn end_to_end() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("communities.tsv");
    std::fs::write(&input, community_edge_list(50_000, 100_000, &mut rng)).unwrap();
    let store_path = dir.path().join("communities.gvdb");
    let report_path = dir.path().join("report.json");

    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_gvdb"))
        .args(["preprocess", "--format", "edgelist", "--input"])
        .arg(&input)
        .arg("--output")
        .arg(&store_path)
        .arg("--report-json")
        .arg(&report_path)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run gvdb preprocess");
    let wall = started.elapsed().as_secs_f64();
    ensure!(out.status.success(), "preprocess failed: {}", String::from_utf8_lossy(&out.stderr));
    ensure!(wall < 600.0, "preprocess took {wall:.0}s, limit 600s");
    let stdout = String::from_utf8_lossy(&out.stdout);
    for step in 1..=5 {
        ensure!(stdout.contains(&format!("Step {step}")), "report lacks Step {step}:\n{stdout}");
    }
    let report: Value = serde_json::from_slice(&std::fs::read(&report_path).unwrap()).unwrap();
    let steps: Vec<f64> = report["steps"].as_array().unwrap().iter().map(|s| s["seconds"].as_f64().unwrap()).collect();
    let total = report["total_seconds"].as_f64().unwrap();
    ensure!(steps.len() == 5 && steps.iter().all(|&s| s > 0.0), "step timings {steps:?}");
    let sum: f64 = steps.iter().sum();
    ensure!((sum - total).abs() <= 0.05 * total, "steps sum to {sum:.3}s, total {total:.3}s");

    let server = Server::start(&store_path, 500);
    let http = client();
    let manifest: Value =
        serde_json::from_slice(&http.get(format!("{}/api/manifest", server.base)).send().unwrap().bytes().unwrap())
            .unwrap();
    let layers = manifest["layers"].as_array().unwrap();
    ensure!(layers.len() == 5, "store has {} layers", layers.len());
    let bounds: Vec<Rect> = layers.iter().map(|l| serde_json::from_value(l["bounds"].clone()).unwrap()).collect();
    let store = Store::load(&store_path).unwrap();
    let ids: Vec<Vec<NodeId>> = store.layers().iter().map(|t| t.rows().iter().map(|r| r.node1_id).collect()).collect();

    let mut requests = Vec::with_capacity(1000);
    for _ in 0..1000 {
        let layer = rng.gen_range(0..layers.len());
        let b = bounds[layer];
        let path = match rng.gen_range(0..10) {
            0..=4 => {
                let s = rng.gen_range(50.0..3000.0);
                let (x, y) = (rng.gen_range(b.min_x - s..b.max_x), rng.gen_range(b.min_y - s..b.max_y));
                let labels = if rng.gen_bool(0.2) { "&labels=cites,mentions" } else { "" };
                format!("/api/window?layer={layer}&x1={x}&y1={y}&x2={}&y2={}{labels}", x + s, y + s)
            }
            5 | 6 => format!("/api/search?layer={layer}&q=entity%20{}&limit=50", rng.gen_range(0..500)),
            7 => format!("/api/node?layer={layer}&id={}&width=800&height=600", ids[layer].choose(&mut rng).unwrap()),
            8 => format!("/api/stats?layer={layer}"),
            _ => format!("/api/birdview?layer={layer}&max_points=500"),
        };
        requests.push(path);
    }

    let fetch = |path: &str| -> Result<Vec<u8>, String> {
        let resp = http.get(format!("{}{path}", server.base)).send().map_err(|e| e.to_string())?;
        let status = resp.status();
        let body = resp.bytes().map_err(|e| e.to_string())?.to_vec();
        if status != 200 {
            return Err(format!("{path}: HTTP {status}"));
        }
        Ok(body)
    };
    let first: Vec<Vec<u8>> = requests.iter().map(|p| fetch(p)).collect::<Result<_, _>>()?;
    let replay: Vec<Vec<u8>> = requests.iter().map(|p| fetch(p)).collect::<Result<_, _>>()?;
    let diverged = first.iter().zip(&replay).filter(|(a, b)| a != b).count();
    ensure!(diverged == 0, "{diverged} of 1000 replayed responses differ");

    // the same requests again from 8 concurrent clients
    let concurrent: Vec<(usize, Vec<u8>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..8)
            .map(|t| {
                let requests = &requests;
                let fetch = &fetch;
                scope.spawn(move || {
                    (t..requests.len()).step_by(8).map(|i| (i, fetch(&requests[i]))).collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).map(|(i, r)| (i, r.unwrap())).collect()
    });
    let diverged = concurrent.iter().filter(|(i, body)| &first[*i] != body).count();
    ensure!(diverged == 0, "{diverged} concurrent responses differ from serial ones");
    let bytes: usize = first.iter().map(Vec::len).sum();
    Ok(format!(
        "preprocess {wall:.1}s (steps {}), 3 x 1000 requests, 0 errors, identical replays, {:.1} MB per pass",
        steps.iter().map(|s| format!("{s:.2}")).collect::<Vec<_>>().join("/"),
        bytes as f64 / 1e6
    ))
}

fn persistence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let g = random_graph(&mut rng, 3000, 8000, true, &["a", "b", "c"]);
    let cfg = gvdb_core::pipeline::PipelineConfig { partitions: Some(6), seed: 9, ..Default::default() };
    let dir = tempfile::tempdir().unwrap();
    let path: PathBuf = dir.path().join("p.gvdb");
    let (store, _) = gvdb_core::pipeline::preprocess(&g, &cfg, Some(&path)).unwrap();
    let loaded = Store::load(&path).unwrap();
    ensure!(loaded.manifest() == store.manifest(), "manifest changed");
    for probe in 0..100 {
        let layer = rng.gen_range(0..store.layer_count());
        let b = store.manifest().layers[layer].bounds.unwrap();
        match probe % 4 {
            0 => {
                let (x, y) = (rng.gen_range(b.min_x..=b.max_x), rng.gen_range(b.min_y..=b.max_y));
                let w = Rect::new(x, y, x + rng.gen_range(0.0..2000.0), y + rng.gen_range(0.0..2000.0));
                let only: HashSet<String> = ["a".to_string()].into();
                let filter = if probe % 8 == 0 { Some(&only) } else { None };
                ensure!(
                    store.window_query(layer, &w, filter).unwrap() == loaded.window_query(layer, &w, filter).unwrap(),
                    "probe {probe}: window answers differ"
                );
            }
            1 => {
                let q = format!("node{}", rng.gen_range(0..300));
                ensure!(
                    store.keyword_search(layer, &q, 100).unwrap() == loaded.keyword_search(layer, &q, 100).unwrap(),
                    "probe {probe}: search answers differ"
                );
            }
            2 => {
                let id = NodeId(rng.gen_range(0..3000));
                let (a, b) = (store.node_lookup(layer, id), loaded.node_lookup(layer, id));
                ensure!(format!("{a:?}") == format!("{b:?}"), "probe {probe}: node answers differ");
            }
            _ => {
                ensure!(store.stats(layer).unwrap() == loaded.stats(layer).unwrap(), "probe {probe}: stats differ");
                ensure!(
                    store.birdview(layer, 200).unwrap() == loaded.birdview(layer, 200).unwrap(),
                    "probe {probe}: birdview differs"
                );
            }
        }
    }
    Ok(format!("{} layers, 100 probes identical after save/load", store.layer_count()))
}
