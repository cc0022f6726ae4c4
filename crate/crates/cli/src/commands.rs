//! Batch subcommands. Each writes its artifacts and a `config.json`
//! snapshot of the resolved options into the output directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use ilc2d::boxes::{bc_fit, join_rules, prune, GridSource, PruneMode, RuleSet, StopConfig};
use ilc2d::dataset::{Dataset, SplitPlan};
use ilc2d::eval::{cross_validate, evaluate, Pipeline, Predictor, PruneStep, SplitName};
use ilc2d::explain::{explain_local, explanation_svg, render_svg, ExplanationRequest};
use ilc2d::guide::{ClassHierarchy, DtgConfig, DtgSource, Guide, NodeConfig, ProjectionChoice};
use ilc2d::projection::project_dataset;
use ilc2d::reproduce::{self, Target, DEFAULT_SEED};
use ilc2d::session::{parse_log, Session};
use ilc2d::tree::{induce_tree, TreeConfig};

use crate::config::{parse_list, DataArgs, GridArgs, ProjectionArgs, SessionArgs};

#[derive(Debug, Parser)]
#[command(
    name = "ilc2d",
    version,
    about = "Lossless 2-D projections, box rules and local explanations"
)]
pub struct Cli {
    /// Directory for artifacts and the config snapshot
    #[arg(long, global = true, default_value = "ilc2d-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Read a dataset and write its snapshot
    Ingest(DataArgs),
    /// Project a dataset to polylines and an SVG plot
    Project(ProjectArgs),
    /// Induce box rules
    Fit(FitArgs),
    /// Prune rules that cover few cases
    Prune(PruneArgs),
    /// Join same-class rules
    Join(RulesArgs),
    /// Evaluate a rule file on a dataset
    Eval(RulesArgs),
    /// Stratified k-fold cross-validation
    Cv(CvArgs),
    /// Explain the classification of one point
    Explain(ExplainArgs),
    /// Check a reproduction target
    Reproduce(ReproduceArgs),
    /// Run the HTTP session service
    Serve(ServeArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct ProjectArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub projection: ProjectionArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitGuide {
    Grid,
    Dt,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub session: SessionArgs,
    /// How candidate boxes are found
    #[arg(long, value_enum, default_value = "grid")]
    pub guide: FitGuide,
    /// Replay a session action log instead of searching
    #[arg(long)]
    pub actions: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub max_rules: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct RulesArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Rule file
    #[arg(long)]
    pub rules: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneModeArg {
    Refuse,
    Associate,
}

#[derive(Debug, Args, Serialize)]
pub struct PruneArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub rules: RulesArgs,
    /// Rules covering fewer cases are pruned
    #[arg(long)]
    pub min_cases: usize,
    #[arg(long, value_enum, default_value = "refuse")]
    pub mode: PruneModeArg,
    /// Rule index to associate pruned boxes with
    #[arg(long)]
    pub target: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CvGuide {
    Dt,
    Grid,
    Tree,
    Majority,
}

#[derive(Debug, Args, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub projection: ProjectionArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    /// Fraction of each training part held out for validation
    #[arg(long, default_value_t = 0.1)]
    pub validation: f64,
    #[arg(long, value_enum, default_value = "dt")]
    pub guide: CvGuide,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ExplainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub projection: ProjectionArgs,
    /// Rule file used as the classifier; a decision tree is induced when absent
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Comma separated attribute values
    #[arg(long)]
    pub point: String,
    #[arg(long, default_value_t = 1.0)]
    pub purity: f64,
    /// Starting grid cell size
    #[arg(long, default_value_t = 4.0)]
    pub resolution: f64,
    #[arg(long, default_value_t = 0.5)]
    pub decrement: f64,
    /// Smallest grid cell size tried
    #[arg(long)]
    pub floor: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReproduceArgs {
    /// wbc-table2, wbc-table4, pbc-table12 or pbc-table14
    pub target: Target,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    /// Overrides ILC2D_BIND
    #[arg(long)]
    pub bind: Option<String>,
}

#[derive(Serialize)]
struct Snapshot<'a> {
    version: &'static str,
    #[serde(flatten)]
    command: &'a Command,
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<PathBuf> {
    write(dir, name, serde_json::to_string_pretty(value)?)
}

fn read_rules(path: &Path) -> Result<RuleSet> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(RuleSet::from_json(&text)?)
}

/// Runs one subcommand; returns the text printed on success and whether the
/// run passed.
pub fn run(cli: &Cli) -> Result<(String, bool)> {
    if let Command::Serve(args) = &cli.command {
        crate::api::serve_blocking(args.bind.clone())?;
        return Ok((String::new(), true));
    }
    let out = &cli.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_json(
        out,
        "config.json",
        &Snapshot {
            version: env!("CARGO_PKG_VERSION"),
            command: &cli.command,
        },
    )?;
    match &cli.command {
        Command::Ingest(a) => ingest(a, out).map(|s| (s, true)),
        Command::Project(a) => project(a, out).map(|s| (s, true)),
        Command::Fit(a) => fit(a, out).map(|s| (s, true)),
        Command::Prune(a) => prune_cmd(a, out).map(|s| (s, true)),
        Command::Join(a) => join(a, out).map(|s| (s, true)),
        Command::Eval(a) => eval(a, out).map(|s| (s, true)),
        Command::Cv(a) => cv(a, out).map(|s| (s, true)),
        Command::Explain(a) => explain(a, out).map(|s| (s, true)),
        Command::Reproduce(a) => reproduce_cmd(a, out),
        Command::Serve(_) => unreachable!(),
    }
}

fn ingest(a: &DataArgs, out: &Path) -> Result<String> {
    let ds = a.load()?;
    let path = write(out, "dataset.json", ds.to_json()?)?;
    let counts: Vec<String> = ds
        .classes
        .iter()
        .map(|c| format!("{} {}", c.name, c.count))
        .collect();
    Ok(format!(
        "{}: {} cases, {} attributes ({})\nwrote {}\n",
        ds.name,
        ds.len(),
        ds.dimension(),
        counts.join(", "),
        path.display()
    ))
}

fn project(a: &ProjectArgs, out: &Path) -> Result<String> {
    let ds = a.data.load()?;
    let spec = a.projection.spec(ds.dimension())?;
    let polylines = project_dataset(&ds, &spec)?;
    write_json(out, "polylines.json", &polylines)?;
    write(
        out,
        "projection.svg",
        render_svg(&polylines, &[], &[], 800.0, 600.0),
    )?;
    Ok(format!(
        "{} polylines written to {}\n",
        polylines.len(),
        out.display()
    ))
}

/// Fits a rule set as `fit` does, without writing anything.
pub fn fit_rules(a: &FitArgs) -> Result<(RuleSet, Dataset)> {
    let config = a.session.session_config()?;
    if let Some(path) = &a.actions {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let session = Session::replay(config.clone(), &parse_log(&text)?)?;
        return Ok((session.ruleset().clone(), config.dataset));
    }
    let ds = config.dataset;
    let polylines = project_dataset(&ds, &config.spec)?;
    let names: Vec<String> = ds.classes.iter().map(|c| c.name.clone()).collect();
    let stop = StopConfig {
        max_rules: a.max_rules,
        min_remaining: 0,
    };
    let rs = match a.guide {
        FitGuide::Grid => bc_fit(
            &polylines,
            &config.spec,
            names,
            &mut GridSource(config.grid),
            config.membership,
            &stop,
        )?,
        FitGuide::Dt => {
            let mut dtg = DtgConfig::default();
            dtg.grid.purity_threshold = config.grid.purity_threshold;
            dtg.grid.coverage_fraction = config.grid.coverage_fraction;
            let mut source = DtgSource::new(&ds, config.spec.clone(), dtg);
            bc_fit(
                &polylines,
                &config.spec,
                names,
                &mut source,
                config.membership,
                &stop,
            )?
        }
    };
    Ok((rs, ds))
}

fn fit(a: &FitArgs, out: &Path) -> Result<String> {
    let (rs, ds) = fit_rules(a)?;
    write(out, "rules.json", rs.to_json()?)?;
    let report = evaluate(&rs, &ds, SplitName::Train, None)?;
    write_json(out, "report.json", &report)?;
    Ok(format!(
        "{}\n{}{}",
        rs.render_text(),
        report.render_rules(),
        report.render_classes()
    ))
}

fn rules_and_polylines(
    a: &RulesArgs,
) -> Result<(RuleSet, Dataset, Vec<ilc2d::projection::Polyline2D>)> {
    let rs = read_rules(&a.rules)?;
    let ds = a.data.load()?;
    let polylines = project_dataset(&ds, &rs.projection)?;
    Ok((rs, ds, polylines))
}

fn prune_cmd(a: &PruneArgs, out: &Path) -> Result<String> {
    let (rs, _, polylines) = rules_and_polylines(&a.rules)?;
    let mode = match a.mode {
        PruneModeArg::Refuse => PruneMode::Refuse,
        PruneModeArg::Associate => PruneMode::Associate { target: a.target },
    };
    let (pruned, report) = prune(&rs, a.min_cases, mode, &polylines)?;
    write(out, "rules.json", pruned.to_json()?)?;
    write_json(out, "prune.json", &report)?;
    Ok(pruned.render_text())
}

fn join(a: &RulesArgs, out: &Path) -> Result<String> {
    let (rs, _, polylines) = rules_and_polylines(a)?;
    let joined = join_rules(&rs, &polylines);
    write(out, "rules.json", joined.to_json()?)?;
    Ok(joined.render_text())
}

fn eval(a: &RulesArgs, out: &Path) -> Result<String> {
    let (rs, ds, _) = rules_and_polylines(a)?;
    let report = evaluate(&rs, &ds, SplitName::Test, None)?;
    write_json(out, "report.json", &report)?;
    Ok(format!(
        "{}{}",
        report.render_rules(),
        report.render_classes()
    ))
}

fn cv_pipeline(a: &CvArgs) -> Pipeline {
    let normalization = a.data.default_normalization();
    match a.guide {
        CvGuide::Majority => Pipeline::Majority,
        CvGuide::Tree => Pipeline::Tree {
            normalization,
            config: TreeConfig::default(),
        },
        CvGuide::Dt if a.data.dataset == "pbc" => reproduce::pbc_pipeline(),
        CvGuide::Dt | CvGuide::Grid => {
            let mut node = NodeConfig::dtg_default();
            if a.guide == CvGuide::Grid {
                node.guide = Guide::Grid(a.grid.params());
                node.projection = ProjectionChoice::TreeOrdered {
                    mode: a.projection.mode,
                };
            }
            Pipeline::Boxes {
                normalization,
                hierarchy: None::<ClassHierarchy>,
                nodes: vec![node],
                prune: None::<PruneStep>,
                join: false,
            }
        }
    }
}

fn cv(a: &CvArgs, out: &Path) -> Result<String> {
    let ds = a.data.load_raw()?;
    let report = cross_validate(
        &ds,
        &cv_pipeline(a),
        &SplitPlan::kfold(a.folds, a.validation, a.seed),
    )?;
    write_json(out, "cv.json", &report)?;
    Ok(report.render())
}

fn explain(a: &ExplainArgs, out: &Path) -> Result<String> {
    let ds = a.data.load()?;
    let point = parse_list(&a.point)?;
    if point.len() != ds.dimension() {
        bail!(
            "point has {} values, dataset has {} attributes",
            point.len(),
            ds.dimension()
        );
    }
    let spec = a.projection.spec(ds.dimension())?;
    let rules;
    let tree;
    let predictor: &dyn Predictor = match &a.rules {
        Some(p) => {
            rules = read_rules(p)?;
            &rules
        }
        None => {
            tree = induce_tree(&ds, TreeConfig::default());
            &tree
        }
    };
    let mut req = ExplanationRequest::new(point, a.purity, a.resolution, a.decrement);
    req.floor = a.floor;
    let e = explain_local(&req, predictor, &ds, &spec)?;
    write_json(out, "explanation.json", &e)?;
    write(
        out,
        "explanation.svg",
        explanation_svg(&e, &project_dataset(&ds, &spec)?),
    )?;
    Ok(format!(
        "{:?}: predicted {:?}, {} boxes at resolution {:?}\n",
        e.verdict,
        e.predicted.map(|c| ds.class_name(c).to_string()),
        e.boxes.len(),
        e.resolution
    ))
}

fn reproduce_cmd(a: &ReproduceArgs, out: &Path) -> Result<(String, bool)> {
    let r = reproduce::reproduce(a.target, a.seed)?;
    write_json(out, "reproduction.json", &r)?;
    Ok((r.render(), r.pass()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SessionArgs;

    #[test]
    fn flag_defaults_match_serde_defaults() {
        let cli = Cli::parse_from(["ilc2d", "fit"]);
        let Command::Fit(f) = cli.command else {
            panic!()
        };
        assert_eq!(f.session, SessionArgs::default());
    }

    #[test]
    fn targets_parse() {
        let cli = Cli::parse_from(["ilc2d", "reproduce", "wbc-table4"]);
        let Command::Reproduce(r) = cli.command else {
            panic!()
        };
        assert_eq!(r.target, Target::WbcTable4);
    }
}
