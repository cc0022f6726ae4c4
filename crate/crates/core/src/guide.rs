//! Decision-tree guided box search and divide-and-conquer class hierarchies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boxes::{
    bc_fit, best_of, grid_search, BoxStats, Candidate, CandidateSource, Decision, GridParams,
    GridSource, Membership, Rect, RefusePolicy, RuleSet, SearchContext, StopConfig,
};
use crate::dataset::{ClassId, ClassInfo, Dataset};
use crate::error::{Error, Result};
use crate::projection::{
    project_dataset, project_values, AxisAssignment, ProjectionMode, ProjectionSpec,
};
use crate::tree::{induce_tree_from, select_branches, Branch, TreeConfig};

/// Per-attribute `(min, max)` over the dataset's cases.
pub fn attribute_bounds(dataset: &Dataset) -> Vec<(f64, f64)> {
    dataset
        .attributes
        .iter()
        .map(|a| (a.observed_min, a.observed_max))
        .collect()
}

/// A projection-space box derived from the branch conditions on one node's
/// attribute pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedBox {
    pub node: usize,
    pub attributes: (usize, usize),
    pub h_interval: (f64, f64),
    pub v_interval: (f64, f64),
    pub rect: Rect,
    /// Position of the first branch condition touching this node's attributes.
    pub depth: usize,
}

fn interval_sum(acc: (f64, f64), iv: (f64, f64), w: f64) -> (f64, f64) {
    let a = w * iv.0;
    let b = w * iv.1;
    (acc.0 + a.min(b), acc.1 + a.max(b))
}

/// Turns a branch into seed boxes, one per projection node whose attributes
/// the branch constrains, ordered by closeness of the constraint to the root.
/// Unconstrained sides are clamped to `bounds`.
pub fn branch_to_boxes(
    branch: &Branch,
    spec: &ProjectionSpec,
    bounds: &[(f64, f64)],
) -> Result<Vec<SeedBox>> {
    if bounds.len() != spec.dimension {
        return Err(Error::Dimension {
            expected: spec.dimension,
            actual: bounds.len(),
        });
    }
    let used: Vec<usize> = if spec.mode.is_single_line() {
        (0..spec.dimension).collect()
    } else {
        spec.assignment
            .horizontal
            .iter()
            .chain(&spec.assignment.vertical)
            .copied()
            .collect()
    };
    for c in &branch.conditions {
        if !used.contains(&c.attribute) {
            return Err(Error::Projection(format!(
                "branch condition on attribute {} which the projection does not place",
                c.attribute
            )));
        }
    }
    let iv = branch.intervals(bounds);
    let first_use = |attrs: &[usize]| {
        branch
            .conditions
            .iter()
            .position(|c| attrs.contains(&c.attribute))
    };
    let w = |a: usize| {
        if spec.mode == ProjectionMode::Ilc2WeightedDynamic {
            spec.weights[a]
        } else {
            1.0
        }
    };

    let mut out = Vec::new();
    if spec.mode.is_single_line() {
        for (a, &range) in iv.iter().enumerate().take(spec.dimension) {
            if let Some(depth) = first_use(&[a]) {
                let o = spec.coordinate_offsets[a];
                out.push(SeedBox {
                    node: a,
                    attributes: (a, a),
                    h_interval: range,
                    v_interval: range,
                    rect: Rect::normalized(o + range.0, o + range.1, 0.0, 0.0),
                    depth,
                });
            }
        }
    } else {
        let asg = &spec.assignment;
        let mut hx = (0.0, 0.0);
        let mut vy = (0.0, 0.0);
        let mut last_h = usize::MAX;
        for (k, &(hs, vs)) in asg.pairing.iter().enumerate() {
            let h = asg.horizontal[hs];
            let v = asg.vertical[vs];
            if hs != last_h {
                hx = interval_sum(hx, iv[h], w(h));
                last_h = hs;
            }
            vy = interval_sum(vy, iv[v], w(v));
            let (xr, yr) = match spec.mode {
                ProjectionMode::Ilc2Static => {
                    let o = spec.coordinate_offsets[hs];
                    ((o + iv[h].0, o + iv[h].1), iv[v])
                }
                ProjectionMode::Ilc2PartialDynamic => (hx, iv[v]),
                _ => (hx, vy),
            };
            if let Some(depth) = first_use(&[h, v]) {
                out.push(SeedBox {
                    node: k,
                    attributes: (h, v),
                    h_interval: iv[h],
                    v_interval: iv[v],
                    rect: Rect::normalized(xr.0, xr.1, yr.0, yr.1),
                    depth,
                });
            }
        }
    }
    out.sort_by_key(|s| s.depth);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineParams {
    pub step_x: f64,
    pub step_y: f64,
    pub radius: usize,
    pub membership: Membership,
    /// Perturbed boxes are intersected with this rectangle.
    pub clamp: Option<Rect>,
    /// Exhaustive lattice search when `lattice size * cases` stays below this.
    pub exhaustive_budget: usize,
}

impl RefineParams {
    pub fn new(step_x: f64, step_y: f64) -> Self {
        RefineParams {
            step_x,
            step_y,
            radius: 5,
            membership: Membership::NodeIn,
            clamp: None,
            exhaustive_budget: 3_000_000,
        }
    }
}

fn as_candidate(rect: Rect, stats: &BoxStats) -> Candidate {
    Candidate {
        rect,
        class: stats.dominant.unwrap_or(0),
        counts: stats.counts.clone(),
        purity: stats.purity_fraction.unwrap_or(-1.0),
        coverage: stats.total,
    }
}

fn clamp(r: Rect, c: Option<Rect>) -> Option<Rect> {
    match c {
        None => Some(r),
        Some(c) => {
            let out = Rect {
                x1: r.x1.max(c.x1),
                x2: r.x2.min(c.x2),
                y1: r.y1.max(c.y1),
                y2: r.y2.min(c.y2),
            };
            (out.x1 <= out.x2 && out.y1 <= out.y2).then_some(out)
        }
    }
}

/// Strictly better purity, or equal purity and more coverage.
fn gains(a: &Candidate, b: &Candidate) -> bool {
    a.purity > b.purity || (a.purity == b.purity && a.coverage > b.coverage)
}

/// Local search around `seed` over side offsets `k * step`, `|k| <= radius`.
/// Small instances are searched exhaustively under the full ranking key;
/// larger ones by hill climbing on single-side moves that raise purity or
/// coverage. The result never ranks below the seed.
pub fn refine_box(
    seed: Rect,
    ctx: &SearchContext,
    remaining: &[usize],
    params: &RefineParams,
) -> Candidate {
    let eval = |r: Rect| as_candidate(r, &ctx.stats(&r, params.membership, remaining));
    let seed_c = eval(clamp(seed, params.clamp).unwrap_or(seed));
    if !(params.step_x > 0.0 && params.step_y > 0.0) || params.radius == 0 {
        return seed_c;
    }
    let r = params.radius as i64;
    let offsets: Vec<i64> = (-r..=r).collect();
    let side = 2 * params.radius + 1;
    let lattice = side.pow(4);
    let perturb = |base: Rect, d: [i64; 4]| {
        let rect = Rect {
            x1: base.x1 + d[0] as f64 * params.step_x,
            x2: base.x2 + d[1] as f64 * params.step_x,
            y1: base.y1 + d[2] as f64 * params.step_y,
            y2: base.y2 + d[3] as f64 * params.step_y,
        };
        if rect.x1 > rect.x2 || rect.y1 > rect.y2 {
            return None;
        }
        clamp(rect, params.clamp)
    };

    if lattice.saturating_mul(remaining.len().max(1)) <= params.exhaustive_budget {
        let mut moves: Vec<[i64; 4]> = Vec::with_capacity(lattice);
        for &a in &offsets {
            for &b in &offsets {
                for &c in &offsets {
                    for &d in &offsets {
                        moves.push([a, b, c, d]);
                    }
                }
            }
        }
        return moves
            .par_iter()
            .filter_map(|&d| perturb(seed, d).map(eval))
            .chain(rayon::iter::once(seed_c.clone()))
            .min_by(|a, b| a.rank_cmp(b))
            .unwrap_or(seed_c);
    }

    let mut best = seed_c;
    for _ in 0..200 {
        let mut moves = Vec::new();
        for s in 0..4 {
            for &k in &offsets {
                if k != 0 {
                    let mut d = [0; 4];
                    d[s] = k;
                    moves.push(d);
                }
            }
        }
        let base = best.rect;
        let step = moves
            .par_iter()
            .filter_map(|&d| perturb(base, d).map(eval))
            .min_by(|a, b| a.rank_cmp(b));
        match step {
            Some(c) if gains(&c, &best) => best = c,
            _ => break,
        }
    }
    best
}

pub fn refine_boxes(
    seeds: &[Rect],
    ctx: &SearchContext,
    remaining: &[usize],
    params: &RefineParams,
) -> Vec<Candidate> {
    seeds
        .iter()
        .map(|s| refine_box(*s, ctx, remaining, params))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtgConfig {
    pub tree: TreeConfig,
    /// Minimum leaf purity for a branch to seed boxes.
    pub branch_purity: f64,
    /// Acceptance thresholds (purity, coverage) for refined boxes.
    pub grid: GridParams,
    pub radius: usize,
    /// Refinement step as a fraction of each attribute's range; `None` uses
    /// the attribute's smallest gap between distinct values.
    pub step_fraction: Option<f64>,
    pub max_branches: usize,
    pub seeds_per_branch: usize,
    /// When no box reaches the coverage fraction, accept the best box that
    /// still meets the purity threshold.
    #[serde(default)]
    pub mini_boxes: bool,
    /// When the tree yields nothing, grid-search the remaining cases with
    /// this many cells across the widest attribute range.
    #[serde(default)]
    pub fallback_cells: Option<usize>,
}

impl Default for DtgConfig {
    fn default() -> Self {
        let mut grid = GridParams::new(1.0);
        grid.purity_threshold = 0.9;
        grid.coverage_fraction = 0.1;
        grid.coverage_basis = crate::boxes::CoverageBasis::RemainingOfClass;
        DtgConfig {
            tree: TreeConfig::default(),
            branch_purity: 0.9,
            grid,
            radius: 5,
            step_fraction: None,
            max_branches: 32,
            seeds_per_branch: 5,
            mini_boxes: true,
            fallback_cells: Some(10),
        }
    }
}

/// Candidate source that grows a tree on the remaining cases, seeds boxes
/// from its purest branches and refines them.
pub struct DtgSource {
    pub values: Vec<Vec<f64>>,
    pub spec: ProjectionSpec,
    pub bounds: Vec<(f64, f64)>,
    pub steps: Vec<f64>,
    pub config: DtgConfig,
    /// Rendered branches of the first tree, for audit.
    pub summary: Vec<String>,
}

impl DtgSource {
    pub fn new(dataset: &Dataset, spec: ProjectionSpec, config: DtgConfig) -> Self {
        let bounds = attribute_bounds(dataset);
        let steps = (0..dataset.dimension())
            .map(|i| match config.step_fraction {
                Some(f) => {
                    let (lo, hi) = bounds[i];
                    let s = (hi - lo) * f;
                    if s > 0.0 {
                        s
                    } else {
                        1.0
                    }
                }
                None => dataset.quantum(i),
            })
            .collect();
        DtgSource {
            values: dataset.cases.iter().map(|c| c.values.clone()).collect(),
            spec,
            bounds,
            steps,
            config,
            summary: Vec::new(),
        }
    }

    fn node_extent(&self, seed: &SeedBox) -> Option<Rect> {
        if self.spec.mode != ProjectionMode::Ilc2Static {
            return None;
        }
        let o = self.spec.coordinate_offsets[self.spec.assignment.pairing[seed.node].0];
        let (h, v) = seed.attributes;
        Some(Rect::normalized(
            o + self.bounds[h].0,
            o + self.bounds[h].1,
            self.bounds[v].0,
            self.bounds[v].1,
        ))
    }

    fn steps_for(&self, seed: &SeedBox) -> (f64, f64) {
        let (h, v) = seed.attributes;
        match self.spec.mode {
            ProjectionMode::Ilc2Static | ProjectionMode::Ilc2PartialDynamic => {
                (self.steps[h], self.steps[v])
            }
            _ => {
                let s = self.steps[h].min(self.steps[v]);
                (s, s)
            }
        }
    }
}

impl CandidateSource for DtgSource {
    fn next(
        &mut self,
        ctx: &SearchContext,
        remaining: &[usize],
    ) -> Result<Option<(Rect, Option<ClassId>)>> {
        if remaining.is_empty() {
            return Ok(None);
        }
        let rows: Vec<&[f64]> = remaining
            .iter()
            .map(|&i| self.values[i].as_slice())
            .collect();
        let labels: Vec<ClassId> = remaining.iter().map(|&i| ctx.labels[i]).collect();
        let tree = induce_tree_from(&rows, &labels, ctx.n_classes, self.config.tree);
        let branches = select_branches(&tree, self.config.branch_purity);
        if self.summary.is_empty() {
            let names: Vec<String> = (0..self.spec.dimension).map(|i| format!("X{i}")).collect();
            self.summary = branches.iter().map(|b| b.render(&names)).collect();
        }
        let per_class = ctx.per_class(remaining);
        let mut best: Option<Candidate> = None;
        let mut fallback: Option<Candidate> = None;
        for branch in branches.iter().take(self.config.max_branches) {
            let seeds = branch_to_boxes(branch, &self.spec, &self.bounds)?;
            for seed in seeds.iter().take(self.config.seeds_per_branch) {
                let (sx, sy) = self.steps_for(seed);
                let mut p = RefineParams::new(sx, sy);
                p.radius = self.config.radius;
                p.membership = self.config.grid.membership;
                p.clamp = self.node_extent(seed);
                let c = refine_box(seed.rect, ctx, remaining, &p);
                let stats = BoxStats::from_counts(c.counts.clone());
                if let Some(q) = ctx.qualify(c.rect, &stats, &per_class, &self.config.grid) {
                    if best
                        .as_ref()
                        .is_none_or(|b| q.rank_cmp(b) == std::cmp::Ordering::Less)
                    {
                        best = Some(q);
                    }
                } else if self.config.mini_boxes
                    && c.purity >= self.config.grid.purity_threshold
                    && c.coverage > 0
                    && fallback
                        .as_ref()
                        .is_none_or(|b| c.rank_cmp(b) == std::cmp::Ordering::Less)
                {
                    fallback = Some(c);
                }
            }
        }
        if best.is_none() {
            if let Some(cells) = self.config.fallback_cells.filter(|&c| c > 0) {
                let span = self
                    .bounds
                    .iter()
                    .map(|b| b.1 - b.0)
                    .fold(0.0_f64, f64::max);
                let mut g = self.config.grid;
                g.cell_width = if span > 0.0 { span / cells as f64 } else { 1.0 };
                g.cell_height = g.cell_width;
                if !self.config.mini_boxes {
                    return Ok(
                        best_of(&grid_search(ctx, &g, remaining)?).map(|c| (c.rect, Some(c.class)))
                    );
                }
                g.coverage_fraction = 0.0;
                if let Some(c) = best_of(&grid_search(ctx, &g, remaining)?) {
                    if fallback
                        .as_ref()
                        .is_none_or(|b| c.rank_cmp(b) == std::cmp::Ordering::Less)
                    {
                        fallback = Some(c);
                    }
                }
            }
        }
        Ok(best.or(fallback).map(|c| (c.rect, Some(c.class))))
    }
}

/// Static ILC2 layout pairing attributes in the order a tree first uses them.
pub fn tree_ordered_spec(
    dataset: &Dataset,
    tree_config: TreeConfig,
    mode: ProjectionMode,
) -> Result<ProjectionSpec> {
    let rows: Vec<&[f64]> = dataset.cases.iter().map(|c| c.values.as_slice()).collect();
    let labels: Vec<ClassId> = dataset.cases.iter().map(|c| c.label).collect();
    let tree = induce_tree_from(&rows, &labels, dataset.class_count(), tree_config);
    let mut order = tree.attribute_order();
    for a in 0..dataset.dimension() {
        if !order.contains(&a) {
            order.push(a);
        }
    }
    let mut h = Vec::new();
    let mut v = Vec::new();
    for pair in order.chunks(2) {
        h.push(pair[0]);
        v.push(*pair.get(1).unwrap_or(&pair[0]));
    }
    let assignment = AxisAssignment::zip(h, v)?;
    let spec = ProjectionSpec::new(mode, dataset.dimension(), assignment)?;
    if mode == ProjectionMode::Ilc2Static {
        let range = dataset
            .attributes
            .iter()
            .map(|a| a.observed_max.max(0.0) - a.observed_min.min(0.0))
            .fold(0.0_f64, f64::max);
        let spacing = if range > 0.0 { 2.0 * range } else { 1.0 };
        let offsets = (0..spec.assignment.horizontal.len())
            .map(|k| k as f64 * spacing)
            .collect();
        return spec.with_offsets(offsets);
    }
    Ok(spec)
}

/// One divide-and-conquer step: separates the listed class groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyNode {
    pub groups: Vec<Vec<ClassId>>,
}

impl HierarchyNode {
    pub fn classes(&self) -> Vec<ClassId> {
        let mut c: Vec<ClassId> = self.groups.iter().flatten().copied().collect();
        c.sort_unstable();
        c
    }
}

/// Node 0 is the root; a multi-class group is refined by the node whose
/// class set equals it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassHierarchy {
    pub nodes: Vec<HierarchyNode>,
}

impl ClassHierarchy {
    /// Single node separating every class.
    pub fn flat(n_classes: usize) -> Self {
        ClassHierarchy {
            nodes: vec![HierarchyNode {
                groups: (0..n_classes).map(|c| vec![c]).collect(),
            }],
        }
    }

    /// `{C1 | C2345}`, `{C2 | C345}`, then C4, C5, C3.
    pub fn pbc_default() -> Self {
        ClassHierarchy {
            nodes: vec![
                HierarchyNode {
                    groups: vec![vec![0], vec![1, 2, 3, 4]],
                },
                HierarchyNode {
                    groups: vec![vec![1], vec![2, 3, 4]],
                },
                HierarchyNode {
                    groups: vec![vec![3], vec![4], vec![2]],
                },
            ],
        }
    }

    pub fn validate(&self, n_classes: usize) -> Result<()> {
        let root = self
            .nodes
            .first()
            .ok_or_else(|| Error::Hierarchy("no nodes".into()))?;
        if root.classes() != (0..n_classes).collect::<Vec<_>>() {
            return Err(Error::Hierarchy(
                "root must cover every class exactly once".into(),
            ));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.groups.len() < 2 || n.groups.iter().any(|g| g.is_empty()) {
                return Err(Error::Hierarchy(format!(
                    "node {i} needs at least two non-empty groups"
                )));
            }
            let c = n.classes();
            if c.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Hierarchy(format!("node {i} repeats a class")));
            }
            for g in &n.groups {
                if g.len() > 1 && self.child(g).is_none() {
                    return Err(Error::Hierarchy(format!(
                        "group {g:?} of node {i} has no refining node"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn child(&self, group: &[ClassId]) -> Option<usize> {
        let mut g = group.to_vec();
        g.sort_unstable();
        self.nodes.iter().position(|n| n.classes() == g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Guide {
    Grid(GridParams),
    Dtg(DtgConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProjectionChoice {
    Fixed(ProjectionSpec),
    /// Pair attributes in tree-usage order under the given mode.
    TreeOrdered {
        mode: ProjectionMode,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub projection: ProjectionChoice,
    pub guide: Guide,
    pub refuse_policy: RefusePolicy,
    pub stop: StopConfig,
}

impl NodeConfig {
    pub fn dtg_default() -> Self {
        NodeConfig {
            projection: ProjectionChoice::TreeOrdered {
                mode: ProjectionMode::Ilc2Static,
            },
            guide: Guide::Dtg(DtgConfig::default()),
            refuse_policy: RefusePolicy::Refuse,
            stop: StopConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeModel {
    pub groups: Vec<Vec<ClassId>>,
    pub ruleset: RuleSet,
    pub train_cases: usize,
    pub guide_summary: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcModel {
    pub hierarchy: ClassHierarchy,
    pub nodes: Vec<NodeModel>,
    pub class_names: Vec<String>,
}

/// Where a case's decision came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub node: usize,
    /// Top-level rule index within the node's rule set; `None` when no rule fired.
    pub rule: Option<usize>,
    pub decision: Decision,
    /// The decision names a single original class (or refuses).
    pub terminal: bool,
}

impl DcModel {
    /// Steps taken down the hierarchy; the last one is terminal.
    pub fn trace(&self, values: &[f64]) -> Result<Vec<TraceStep>> {
        let mut out = Vec::new();
        let mut node = 0;
        loop {
            let m = &self.nodes[node];
            let p = project_values(values, &m.ruleset.projection)?;
            let fired = m.ruleset.firing_rule(&p);
            let decision = m.ruleset.classify_polyline(&p);
            match decision {
                Decision::Refuse => {
                    out.push(TraceStep {
                        node,
                        rule: fired.map(|f| f.0),
                        decision,
                        terminal: true,
                    });
                    return Ok(out);
                }
                Decision::Class(g) => {
                    let group = &m.groups[g];
                    if group.len() == 1 {
                        out.push(TraceStep {
                            node,
                            rule: fired.map(|f| f.0),
                            decision: Decision::Class(group[0]),
                            terminal: true,
                        });
                        return Ok(out);
                    }
                    out.push(TraceStep {
                        node,
                        rule: fired.map(|f| f.0),
                        decision,
                        terminal: false,
                    });
                    node = self
                        .hierarchy
                        .child(group)
                        .ok_or_else(|| Error::Hierarchy(format!("no node for group {group:?}")))?;
                }
            }
        }
    }

    pub fn classify(&self, values: &[f64]) -> Result<Decision> {
        Ok(self
            .trace(values)?
            .last()
            .map(|s| s.decision)
            .unwrap_or(Decision::Refuse))
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let groups: Vec<String> = n
                .groups
                .iter()
                .map(|g| g.iter().map(|c| format!("C{}", c + 1)).collect::<String>())
                .collect();
            out.push_str(&format!(
                "node {i}: {{{}}} ({} cases)\n",
                groups.join(" | "),
                n.train_cases
            ));
            out.push_str(&n.ruleset.render_text());
        }
        out
    }
}

/// Dataset restricted to `classes`, relabeled to group indices.
pub fn group_subset(dataset: &Dataset, groups: &[Vec<ClassId>]) -> Dataset {
    let idx: Vec<usize> = dataset
        .cases
        .iter()
        .enumerate()
        .filter(|(_, c)| groups.iter().any(|g| g.contains(&c.label)))
        .map(|(i, _)| i)
        .collect();
    let mut ds = dataset.subset(&idx);
    for c in &mut ds.cases {
        c.label = groups
            .iter()
            .position(|g| g.contains(&c.label))
            .expect("filtered above");
    }
    ds.classes = groups
        .iter()
        .map(|g| ClassInfo {
            label: g
                .iter()
                .map(|c| dataset.classes[*c].label.clone())
                .collect::<Vec<_>>()
                .join("+"),
            name: g
                .iter()
                .map(|c| dataset.classes[*c].name.clone())
                .collect::<Vec<_>>()
                .join("+"),
            count: 0,
        })
        .collect();
    ds.refresh_stats();
    ds
}

/// Fits one rule set per hierarchy node on that node's cases.
pub fn dc_fit(
    dataset: &Dataset,
    hierarchy: &ClassHierarchy,
    configs: &[NodeConfig],
) -> Result<DcModel> {
    hierarchy.validate(dataset.class_count())?;
    if configs.is_empty() {
        return Err(Error::Hierarchy("no node configuration".into()));
    }
    let nodes = hierarchy
        .nodes
        .par_iter()
        .enumerate()
        .map(|(i, node)| {
            let cfg = &configs[i.min(configs.len() - 1)];
            let ds = group_subset(dataset, &node.groups);
            if let Some(g) = ds.classes.iter().position(|c| c.count == 0) {
                return Err(Error::Hierarchy(format!(
                    "node {i}: group {:?} has no training cases",
                    node.groups[g]
                )));
            }
            let spec = match &cfg.projection {
                ProjectionChoice::Fixed(s) => s.clone(),
                ProjectionChoice::TreeOrdered { mode } => {
                    let tree = match &cfg.guide {
                        Guide::Dtg(d) => d.tree,
                        Guide::Grid(_) => TreeConfig::default(),
                    };
                    tree_ordered_spec(&ds, tree, *mode)?
                }
            };
            let polylines = project_dataset(&ds, &spec)?;
            let names: Vec<String> = ds.classes.iter().map(|c| c.name.clone()).collect();
            let (mut ruleset, summary) = match &cfg.guide {
                Guide::Grid(g) => {
                    let mut src = GridSource(*g);
                    (
                        bc_fit(&polylines, &spec, names, &mut src, g.membership, &cfg.stop)?,
                        Vec::new(),
                    )
                }
                Guide::Dtg(d) => {
                    let mut src = DtgSource::new(&ds, spec.clone(), *d);
                    let rs = bc_fit(
                        &polylines,
                        &spec,
                        names,
                        &mut src,
                        d.grid.membership,
                        &cfg.stop,
                    )?;
                    (rs, src.summary)
                }
            };
            ruleset.refuse_policy = cfg.refuse_policy;
            Ok(NodeModel {
                groups: node.groups.clone(),
                ruleset,
                train_cases: ds.len(),
                guide_summary: summary,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DcModel {
        hierarchy: hierarchy.clone(),
        nodes,
        class_names: dataset.classes.iter().map(|c| c.name.clone()).collect(),
    })
}
