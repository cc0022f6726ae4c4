//! Oracles shared by the test suites.

use ilc2d::boxes::{CoverageBasis, GridParams, Rect};
use ilc2d::projection::{CaseRef, Point, Polyline2D};

pub fn labeled(nodes: Vec<Point>, label: usize) -> Polyline2D {
    Polyline2D {
        nodes,
        case_ref: Some(CaseRef {
            source_row: 0,
            label,
        }),
        node_provenance: Vec::new(),
    }
}

/// Independent brute force over every grid rectangle under the ranking key.
pub fn brute_force_best(
    polylines: &[Polyline2D],
    n_classes: usize,
    params: &GridParams,
    remaining: &[usize],
) -> Option<(Rect, usize, f64, usize)> {
    let nodes = polylines.iter().flat_map(|p| p.nodes.iter());
    let (mut lx, mut ly, mut hx, mut hy) = (
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    );
    for n in nodes {
        lx = lx.min(n.x);
        ly = ly.min(n.y);
        hx = hx.max(n.x);
        hy = hy.max(n.y);
    }
    let ox = (lx / params.cell_width).floor() * params.cell_width;
    let oy = (ly / params.cell_height).floor() * params.cell_height;
    let cols = ((hx - ox) / params.cell_width).floor() as usize + 1;
    let rows = ((hy - oy) / params.cell_height).floor() as usize + 1;
    let mut per_class = vec![0usize; n_classes];
    for &i in remaining {
        per_class[polylines[i].label().unwrap()] += 1;
    }
    let mut best: Option<(Rect, usize, f64, usize)> = None;
    for i in 0..cols {
        for j in 0..rows {
            for w in 1..=(cols - i).min(params.max_span_w) {
                for h in 1..=(rows - j).min(params.max_span_h) {
                    let r = Rect {
                        x1: ox + i as f64 * params.cell_width,
                        x2: ox + (i + w) as f64 * params.cell_width,
                        y1: oy + j as f64 * params.cell_height,
                        y2: oy + (j + h) as f64 * params.cell_height,
                    };
                    let mut counts = vec![0usize; n_classes];
                    for &k in remaining {
                        let inside = polylines[k]
                            .nodes
                            .iter()
                            .any(|p| r.x1 <= p.x && p.x <= r.x2 && r.y1 <= p.y && p.y <= r.y2);
                        if inside {
                            counts[polylines[k].label().unwrap()] += 1;
                        }
                    }
                    let total: usize = counts.iter().sum();
                    if total == 0 {
                        continue;
                    }
                    let mut class = 0;
                    for c in 1..n_classes {
                        if counts[c] > counts[class] {
                            class = c;
                        }
                    }
                    let purity = counts[class] as f64 / total as f64;
                    let basis = match params.coverage_basis {
                        CoverageBasis::Remaining => remaining.len(),
                        CoverageBasis::RemainingOfClass => per_class[class],
                    };
                    if purity < params.purity_threshold
                        || (total as f64) < params.coverage_fraction * basis as f64
                    {
                        continue;
                    }
                    let better = match &best {
                        None => true,
                        Some((br, bc, bp, bt)) => {
                            let key = (purity, total, r.area());
                            let bkey = (*bp, *bt, br.area());
                            if key.0 != bkey.0 {
                                key.0 > bkey.0
                            } else if key.1 != bkey.1 {
                                key.1 > bkey.1
                            } else if key.2 != bkey.2 {
                                key.2 < bkey.2
                            } else {
                                (r.x1, r.x2, r.y1, r.y2, class) < (br.x1, br.x2, br.y1, br.y2, *bc)
                            }
                        }
                    };
                    if better {
                        best = Some((r, class, purity, total));
                    }
                }
            }
        }
    }
    best
}
