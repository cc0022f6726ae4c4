//! Option groups shared by the command line and the HTTP service, and their
//! resolution into core types.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use ilc2d::boxes::{GridParams, Membership};
use ilc2d::dataset::{
    ingest_csv, normalize, CsvSchema, Dataset, Delimiter, MissingPolicy, Normalization,
};
use ilc2d::projection::{AxisAssignment, ProjectionMode, ProjectionSpec};
use ilc2d::reproduce::{load_pbc, load_wbc, wbc_layouts};
use ilc2d::session::SessionConfig;

/// Parses a kebab-case name into a snake_case serde enum.
pub fn parse_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|e| e.to_string())
}

pub fn parse_mode(s: &str) -> std::result::Result<ProjectionMode, String> {
    parse_enum(s)
}

pub fn parse_membership(s: &str) -> std::result::Result<Membership, String> {
    parse_enum(s)
}

pub fn parse_normalization(s: &str) -> std::result::Result<Normalization, String> {
    parse_enum(s)
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("bad number {v:?}"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct DataArgs {
    /// `wbc`, `pbc`, a CSV file or a dataset snapshot (`.json`)
    #[arg(long, default_value = "wbc")]
    pub dataset: String,
    /// Columns to ignore in a CSV file
    #[arg(long, value_delimiter = ',')]
    pub skip_columns: Vec<usize>,
    /// Label column of a CSV file; defaults to the last
    #[arg(long)]
    pub label_column: Option<usize>,
    /// CSV file has a header row
    #[arg(long)]
    pub header: bool,
    /// CSV fields are separated by whitespace
    #[arg(long)]
    pub whitespace: bool,
    /// `raw` or `min-max-unit`; defaults to min-max for pbc, raw otherwise
    #[arg(long, value_parser = parse_normalization)]
    pub normalization: Option<Normalization>,
}

impl Default for DataArgs {
    fn default() -> Self {
        DataArgs {
            dataset: "wbc".into(),
            skip_columns: Vec::new(),
            label_column: None,
            header: false,
            whitespace: false,
            normalization: None,
        }
    }
}

impl DataArgs {
    pub fn default_normalization(&self) -> Normalization {
        self.normalization.unwrap_or(if self.dataset == "pbc" {
            Normalization::MinMaxUnit
        } else {
            Normalization::Raw
        })
    }

    /// The dataset as read, before normalization.
    pub fn load_raw(&self) -> Result<Dataset> {
        match self.dataset.as_str() {
            "wbc" => Ok(load_wbc()?),
            "pbc" => Ok(load_pbc()?),
            path if path.ends_with(".json") => {
                let text =
                    std::fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
                Ok(Dataset::from_json(&text)?)
            }
            path => {
                let schema = CsvSchema {
                    label_column: self.label_column,
                    skip_columns: self.skip_columns.clone(),
                    has_header: self.header,
                    delimiter: if self.whitespace {
                        Delimiter::Whitespace
                    } else {
                        Delimiter::Comma
                    },
                    ..CsvSchema::default()
                };
                Ok(ingest_csv(
                    PathBuf::from(path),
                    &schema,
                    MissingPolicy::DropRow,
                )?)
            }
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        Ok(normalize(&self.load_raw()?, self.default_normalization()))
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionArgs {
    /// Projection mode, e.g. `ilc2-partial-dynamic`, `ilc2-static`
    #[arg(long, value_parser = parse_mode, default_value = "ilc2-partial-dynamic")]
    pub mode: ProjectionMode,
    /// Named WBC layout such as `side[1,3,5]/Ilc2Static`; overrides `--mode`
    #[arg(long)]
    pub layout: Option<String>,
    /// Horizontal offset between static slots
    #[arg(long)]
    pub offset_step: Option<f64>,
    /// Comma separated attribute weights for the weighted mode
    #[arg(long)]
    pub weights: Option<String>,
}

impl Default for ProjectionArgs {
    fn default() -> Self {
        ProjectionArgs {
            mode: ProjectionMode::Ilc2PartialDynamic,
            layout: None,
            offset_step: None,
            weights: None,
        }
    }
}

impl ProjectionArgs {
    pub fn spec(&self, dimension: usize) -> Result<ProjectionSpec> {
        if let Some(name) = &self.layout {
            if dimension != 9 {
                bail!("named layouts need nine attributes, got {dimension}");
            }
            return wbc_layouts()?
                .into_iter()
                .find(|(n, _)| n == name)
                .map(|(_, s)| s)
                .ok_or_else(|| anyhow!("unknown layout {name:?}"));
        }
        let mut spec = ProjectionSpec::new(
            self.mode,
            dimension,
            AxisAssignment::consecutive(dimension)?,
        )?;
        if let Some(step) = self.offset_step {
            let n = spec.coordinate_offsets.len();
            spec = spec.with_offsets((0..n).map(|k| step * k as f64).collect())?;
        }
        if let Some(w) = &self.weights {
            spec = spec.with_weights(parse_list(w)?)?;
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct GridArgs {
    /// Grid cell size
    #[arg(long, default_value_t = 0.5)]
    pub grid: f64,
    /// Minimum box purity
    #[arg(long, default_value_t = 1.0)]
    pub purity: f64,
    /// Minimum fraction of the remaining cases a box must cover
    #[arg(long, default_value_t = 0.1)]
    pub coverage: f64,
    /// `node-in` or `edge-cross`
    #[arg(long, value_parser = parse_membership, default_value = "node-in")]
    pub membership: Membership,
    /// Candidates kept per class
    #[arg(long, default_value_t = 10)]
    pub top_k: usize,
}

impl Default for GridArgs {
    fn default() -> Self {
        GridArgs {
            grid: 0.5,
            purity: 1.0,
            coverage: 0.1,
            membership: Membership::NodeIn,
            top_k: 10,
        }
    }
}

impl GridArgs {
    pub fn params(&self) -> GridParams {
        let mut g = GridParams::new(self.grid);
        g.purity_threshold = self.purity;
        g.coverage_fraction = self.coverage;
        g.membership = self.membership;
        g.top_k = self.top_k;
        g
    }
}

/// Everything that defines an interactive session.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub projection: ProjectionArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}

impl SessionArgs {
    pub fn session_config(&self) -> Result<SessionConfig> {
        let ds = self.data.load()?;
        let spec = self.projection.spec(ds.dimension())?;
        let params = self.grid.params();
        params.check()?;
        Ok(SessionConfig::new(ds, spec, params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kebab_names_parse() {
        assert_eq!(
            parse_mode("ilc2-fully-dynamic").unwrap(),
            ProjectionMode::Ilc2FullyDynamic
        );
        assert_eq!(
            parse_membership("edge-cross").unwrap(),
            Membership::EdgeCross
        );
        assert_eq!(
            parse_normalization("min-max-unit").unwrap(),
            Normalization::MinMaxUnit
        );
        assert!(parse_mode("sideways").is_err());
    }

    #[test]
    fn serde_defaults_match_flags() {
        let a: SessionArgs = serde_json::from_str("{}").unwrap();
        assert_eq!(a, SessionArgs::default());
        assert_eq!(a.grid.params(), {
            let mut g = GridParams::new(0.5);
            g.top_k = 10;
            g
        });
    }

    #[test]
    fn offsets_follow_step() {
        let p = ProjectionArgs {
            mode: ProjectionMode::Ilc2Static,
            offset_step: Some(10.0),
            ..ProjectionArgs::default()
        };
        assert_eq!(p.spec(4).unwrap().coordinate_offsets, vec![0.0, 10.0]);
    }
}
