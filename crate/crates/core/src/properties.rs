//! Property tests over the public API.

use std::collections::BTreeMap;

use ilc2d::boxes::{
    bc_fit, grid_search, join_rules, BoxStats, Candidate, GridParams, GridSource, Membership, Rect,
    SearchContext, StopConfig,
};
use ilc2d::dataset::{
    normalize, parse_csv, stratified_split, CsvSchema, Dataset, MissingPolicy, Normalization,
    SplitPlan,
};
use ilc2d::eval::weighted_precision_of;
use ilc2d::explain::{boxes_to_tree_form, TreeChain};
use ilc2d::guide::{refine_box, RefineParams};
use ilc2d::projection::{
    invert, project_values, AxisAssignment, Point, Polyline2D, ProjectionMode, ProjectionSpec,
};
use proptest::prelude::*;

#[path = "../tests/common/mod.rs"]
mod common;
use common::{brute_force_best, labeled};

fn spec_for(mode: ProjectionMode, n: usize, weights: &[f64]) -> ProjectionSpec {
    let spec = ProjectionSpec::new(mode, n, AxisAssignment::consecutive(n).unwrap()).unwrap();
    match mode {
        ProjectionMode::Ilc2WeightedDynamic => spec.with_weights(weights.to_vec()).unwrap(),
        ProjectionMode::Ilc2Static => {
            let slots = spec.assignment.horizontal.len();
            spec.with_offsets((0..slots).map(|k| 25.0 * k as f64).collect())
                .unwrap()
        }
        _ => spec,
    }
}

fn dataset_from(rows: &[(Vec<f64>, usize)]) -> Dataset {
    let mut text = String::new();
    for (v, l) in rows {
        let cells: Vec<String> = v.iter().map(|x| x.to_string()).collect();
        text.push_str(&format!("{},c{l}\n", cells.join(",")));
    }
    parse_csv(
        "generated",
        &text,
        &CsvSchema::default(),
        MissingPolicy::Error,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_mode_round_trips(
        n in 2usize..12,
        seed in prop::collection::vec(-50.0f64..50.0, 12),
        w in prop::collection::vec(0.25f64..4.0, 12),
    ) {
        let values = &seed[..n];
        for mode in ProjectionMode::ALL {
            let spec = spec_for(mode, n, &w[..n]);
            let p = project_values(values, &spec).unwrap();
            let back = invert(&p, &spec).unwrap();
            for (a, b) in values.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{mode:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn dynamic_nodes_are_prefix_sums(values in prop::collection::vec(0.0f64..10.0, 2..12)) {
        let n = values.len();
        let full = ProjectionSpec::fully_dynamic(n).unwrap();
        let partial = ProjectionSpec::partial_dynamic(n).unwrap();
        let pf = project_values(&values, &full).unwrap();
        let pp = project_values(&values, &partial).unwrap();
        let (mut sx, mut sy) = (0.0, 0.0);
        for k in 0..pf.nodes.len() {
            let h = 2 * k;
            let v = (2 * k + 1).min(n - 1);
            sx += values[h];
            sy += values[v];
            prop_assert!((pf.nodes[k].x - sx).abs() < 1e-9);
            prop_assert!((pf.nodes[k].y - sy).abs() < 1e-9);
            prop_assert!((pp.nodes[k].x - sx).abs() < 1e-9);
            prop_assert!((pp.nodes[k].y - values[v]).abs() < 1e-9);
        }
        // Non-negative increments keep fully dynamic nodes monotone.
        for w in pf.nodes.windows(2) {
            prop_assert!(w[1].x >= w[0].x && w[1].y >= w[0].y);
        }
    }

    #[test]
    fn folds_are_stratified(
        counts in prop::collection::vec(10usize..60, 2..4),
        k in 2usize..6,
        seed in any::<u64>(),
    ) {
        let rows: Vec<(Vec<f64>, usize)> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &m)| (0..m).map(move |i| (vec![i as f64, c as f64], c)))
            .collect();
        let ds = dataset_from(&rows);
        let parts = stratified_split(&ds, &SplitPlan::kfold(k, 0.0, seed)).unwrap();
        prop_assert_eq!(parts.len(), k);
        let mut seen = vec![0usize; ds.len()];
        for p in &parts {
            for &i in &p.test {
                seen[i] += 1;
            }
            let mut all: Vec<usize> = p.train.iter().chain(&p.validation).chain(&p.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
            for (c, info) in ds.classes.iter().enumerate() {
                let in_fold = p.test.iter().filter(|&&i| ds.cases[i].label == c).count() as f64;
                prop_assert!((in_fold - info.count as f64 / k as f64).abs() <= 1.0);
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        let again = stratified_split(&ds, &SplitPlan::kfold(k, 0.0, seed)).unwrap();
        prop_assert_eq!(parts, again);
    }

    #[test]
    fn normalization_inverts(rows in prop::collection::vec((prop::collection::vec(-100.0f64..100.0, 3), 0usize..2), 4..30)) {
        let ds = dataset_from(&rows);
        let unit = normalize(&ds, Normalization::MinMaxUnit);
        for c in &unit.cases {
            prop_assert!(c.values.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let back = unit.denormalize();
        for (a, b) in ds.cases.iter().zip(&back.cases) {
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn join_keeps_every_decision(
        pts in prop::collection::vec((0.0f64..6.0, 0.0f64..6.0, 0usize..2), 6..40),
        cell in 0.5f64..2.0,
    ) {
        let polylines: Vec<Polyline2D> = pts.iter().map(|&(x, y, l)| labeled(vec![Point::new(x, y)], l)).collect();
        let spec = ProjectionSpec::new(ProjectionMode::Ilc2Static, 2, AxisAssignment::zip(vec![0], vec![1]).unwrap()).unwrap();
        let mut params = GridParams::new(cell);
        params.coverage_fraction = 0.0;
        let rs = bc_fit(&polylines, &spec, vec!["a".into(), "b".into()], &mut GridSource(params), Membership::NodeIn, &StopConfig::default()).unwrap();
        let joined = join_rules(&rs, &polylines);
        for p in &polylines {
            prop_assert_eq!(rs.classify_polyline(p), joined.classify_polyline(p));
        }
        prop_assert!(joined.rules.len() <= rs.rules.len());
    }

    #[test]
    fn weighted_precision_is_bounded(pairs in prop::collection::vec((0.0f64..=1.0, 1usize..500), 1..10)) {
        let p = weighted_precision_of(&pairs).unwrap();
        let lo = pairs.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
        let hi = pairs.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(p >= lo - 1e-12 && p <= hi + 1e-12);
    }

    #[test]
    fn refinement_never_loses_rank(
        pts in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0, 0usize..2), 5..25),
        seed in (0.0f64..8.0, 0.0f64..8.0, 0.5f64..3.0, 0.5f64..3.0),
    ) {
        let polylines: Vec<Polyline2D> = pts.iter().map(|&(x, y, l)| labeled(vec![Point::new(x, y)], l)).collect();
        let ctx = SearchContext::new(&polylines, 2);
        let remaining: Vec<usize> = (0..polylines.len()).collect();
        let rect = Rect::new(seed.0, seed.0 + seed.2, seed.1, seed.1 + seed.3).unwrap();
        let before = as_candidate(&ctx, rect, &remaining);
        for budget in [0, usize::MAX] {
            let mut p = RefineParams::new(0.5, 0.5);
            p.radius = 2;
            p.exhaustive_budget = budget;
            let after = refine_box(rect, &ctx, &remaining, &p);
            prop_assert!(after.rank_cmp(&before) != std::cmp::Ordering::Greater);
        }
    }

    #[test]
    fn chains_match_node_membership(
        pts in prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 1..30),
        b in (0.0f64..8.0, 0.0f64..8.0, 0.0f64..3.0, 0.0f64..3.0),
    ) {
        let rect = Rect::new(b.0, b.0 + b.2, b.1, b.1 + b.3).unwrap();
        let chain = TreeChain::from_rect(1, &rect, vec![]);
        for &(x, y) in &pts {
            let p = Point::new(x, y);
            prop_assert_eq!(chain.holds(p), rect.contains(p));
        }
    }
}

fn as_candidate(ctx: &SearchContext, rect: Rect, remaining: &[usize]) -> Candidate {
    let s = ctx.stats(&rect, Membership::NodeIn, remaining);
    Candidate {
        rect,
        class: s.dominant.unwrap_or(0),
        counts: s.counts.clone(),
        purity: s.purity_fraction.unwrap_or(-1.0),
        coverage: s.total,
    }
}

/// Exhaustive lattice search agrees with brute force on small instances.
#[test]
fn exhaustive_refinement_matches_brute_force() {
    let pts = [
        (1.0, 1.0, 0),
        (1.5, 2.0, 0),
        (2.0, 1.5, 0),
        (3.0, 3.0, 1),
        (3.5, 2.5, 1),
        (2.5, 2.5, 0),
        (4.0, 1.0, 1),
    ];
    let polylines: Vec<Polyline2D> = pts
        .iter()
        .map(|&(x, y, l)| labeled(vec![Point::new(x, y)], l))
        .collect();
    let ctx = SearchContext::new(&polylines, 2);
    let remaining: Vec<usize> = (0..polylines.len()).collect();
    let seed = Rect::new(1.0, 2.0, 1.0, 2.0).unwrap();
    let mut p = RefineParams::new(0.5, 0.5);
    p.radius = 2;
    let got = refine_box(seed, &ctx, &remaining, &p);
    let mut best = as_candidate(&ctx, seed, &remaining);
    for a in -2i32..=2 {
        for b in -2i32..=2 {
            for c in -2i32..=2 {
                for d in -2i32..=2 {
                    let r = Rect {
                        x1: 1.0 + 0.5 * a as f64,
                        x2: 2.0 + 0.5 * b as f64,
                        y1: 1.0 + 0.5 * c as f64,
                        y2: 2.0 + 0.5 * d as f64,
                    };
                    if r.x1 > r.x2 || r.y1 > r.y2 {
                        continue;
                    }
                    let cand = as_candidate(&ctx, r, &remaining);
                    if cand.rank_cmp(&best) == std::cmp::Ordering::Less {
                        best = cand;
                    }
                }
            }
        }
    }
    assert_eq!(got, best);
    // The seed misses (2.5, 2.5); refinement reaches it.
    assert_eq!(got.coverage, 4);
    assert_eq!(got.purity, 1.0);
}

#[test]
fn truncated_side_is_extended() {
    let mut pts: Vec<Polyline2D> = (0..5)
        .map(|k| labeled(vec![Point::new(1.0 + 0.2 * k as f64, 1.0)], 0))
        .collect();
    pts.push(labeled(vec![Point::new(5.0, 1.0)], 1));
    let ctx = SearchContext::new(&pts, 2);
    let remaining: Vec<usize> = (0..pts.len()).collect();
    let seed = Rect::new(0.9, 1.3, 0.5, 1.5).unwrap();
    let mut p = RefineParams::new(0.2, 0.2);
    p.exhaustive_budget = 0;
    let got = refine_box(seed, &ctx, &remaining, &p);
    assert_eq!(got.coverage, 5);
    assert_eq!(got.purity, 1.0);
    assert!(got.rect.x2 >= 1.8 - 1e-9 && got.rect.x2 < 5.0);
}

#[test]
fn static_tree_form_gives_one_chain_per_box() {
    let pts: Vec<Polyline2D> = vec![
        labeled(vec![Point::new(1.0, 1.0)], 0),
        labeled(vec![Point::new(1.2, 1.1)], 0),
        labeled(vec![Point::new(4.0, 4.0)], 1),
        labeled(vec![Point::new(7.0, 1.0)], 0),
    ];
    let spec = ProjectionSpec::new(
        ProjectionMode::Ilc2Static,
        2,
        AxisAssignment::zip(vec![0], vec![1]).unwrap(),
    )
    .unwrap();
    let boxes = vec![
        (Rect::new(0.5, 1.5, 0.5, 1.5).unwrap(), Some(0)),
        (Rect::new(3.5, 4.5, 3.5, 4.5).unwrap(), Some(1)),
        (Rect::new(6.5, 7.5, 0.5, 1.5).unwrap(), Some(0)),
    ];
    let mut src = ilc2d::boxes::InjectedSource::new(boxes);
    let rs = bc_fit(
        &pts,
        &spec,
        vec!["a".into(), "b".into()],
        &mut src,
        Membership::NodeIn,
        &StopConfig::default(),
    )
    .unwrap();
    let joined = join_rules(&rs, &pts);
    let union = joined
        .rules
        .iter()
        .find(|r| r.positive.len() == 2)
        .expect("boxes 1 and 3 join");
    let chains = boxes_to_tree_form(&joined, union).unwrap();
    assert_eq!(chains.len(), 2);
    let dynamic = {
        let mut j = joined.clone();
        j.projection = ProjectionSpec::fully_dynamic(2).unwrap();
        j
    };
    assert!(boxes_to_tree_form(&dynamic, union).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn grid_search_matches_brute_force(
        pts in prop::collection::vec((prop::collection::vec((0.0f64..6.0, 0.0f64..6.0), 1..4), 0usize..3), 1..30),
        purity in prop::sample::select(vec![0.6, 0.8, 1.0]),
        coverage in prop::sample::select(vec![0.0, 0.1, 0.3]),
        span in 1usize..7,
    ) {
        let polylines: Vec<Polyline2D> = pts
            .iter()
            .map(|(nodes, l)| labeled(nodes.iter().map(|&(x, y)| Point::new(x, y)).collect(), *l))
            .collect();
        let mut params = GridParams::new(1.0);
        params.purity_threshold = purity;
        params.coverage_fraction = coverage;
        params.max_span_w = span;
        params.max_span_h = span;
        let remaining: Vec<usize> = (0..polylines.len()).collect();
        let ctx = SearchContext::new(&polylines, 3);
        let ranked = grid_search(&ctx, &params, &remaining).unwrap();
        let got = ilc2d::boxes::best_of(&ranked).map(|c| (c.rect, c.class, c.purity, c.coverage));
        let want = brute_force_best(&polylines, 3, &params, &remaining);
        prop_assert_eq!(got, want);
    }
}

#[test]
fn box_stats_match_direct_count() {
    let counts = BTreeMap::from([(0usize, 7usize), (1, 3)]);
    let s = BoxStats::from_counts(counts.values().copied().collect());
    assert_eq!(s.total, 10);
    assert_eq!(s.dominant, Some(0));
    assert!((s.purity_fraction.unwrap() - 0.7).abs() < 1e-12);
}
