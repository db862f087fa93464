//! File formats: series/state/feature CSVs, calibration tables, and the
//! JSON experiment configuration.
//!
//! Every CSV carries a header row. Series files use columns `t,x` with
//! optional truth columns `z` (states) and `P` (orders). The JSON model
//! document stores the transition matrix row-major under the
//! column-conditional convention (`p_mat[i][j] = P(Z_n=i+1 | Z_{n-1}=j+1)`,
//! columns summing to one); matrices quoted row-conditionally elsewhere must
//! be transposed when building a config by hand.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::{DpSearch, ImpactSearch};
use crate::error::{Error, Result};
use crate::model::{
    CountSeries, EnvChainSpec, EnvSequence, ModelParams, OrderRule, OrderSequence, Phi, Variant,
};
use crate::preestimate::{PreEstimates, RenesConfig};
use crate::sampling::SimOutput;

/// A parsed series file: counts plus whatever truth columns were present.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesData {
    pub x: CountSeries,
    pub z: Option<EnvSequence>,
    pub pn: Option<OrderSequence>,
}

fn parse_field<T: std::str::FromStr>(
    field: &str,
    column: &'static str,
    line: usize,
) -> Result<T> {
    field.trim().parse().map_err(|_| Error::CsvParse {
        line,
        msg: format!("cannot parse `{field}` in column `{column}`"),
    })
}

/// Reads a `t,x[,z[,P]]` series CSV.
pub fn read_series_csv(path: &Path) -> Result<SeriesData> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let x_col = col("x").ok_or(Error::MissingColumn("x"))?;
    let z_col = col("z");
    let p_col = col("P");
    if col("t").is_none() {
        return Err(Error::MissingColumn("t"));
    }

    let mut x = Vec::new();
    let mut z = Vec::new();
    let mut pn = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        x.push(parse_field::<u64>(&record[x_col], "x", line)?);
        if let Some(c) = z_col {
            z.push(parse_field::<usize>(&record[c], "z", line)?);
        }
        if let Some(c) = p_col {
            pn.push(parse_field::<usize>(&record[c], "P", line)?);
        }
    }
    if x.is_empty() {
        return Err(Error::Empty("series file"));
    }
    Ok(SeriesData {
        x: CountSeries::new(x),
        z: z_col.map(|_| EnvSequence::new(z)),
        pn: p_col.map(|_| OrderSequence { pn }),
    })
}

/// Writes a simulated trajectory as `t,x,z,P,lag`.
pub fn write_sim_csv(path: &Path, sim: &SimOutput) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,x,z,P,lag")?;
    for i in 0..sim.x.len() {
        writeln!(
            out,
            "{},{},{},{},{}",
            i + 1,
            sim.x.x[i],
            sim.z.z[i],
            sim.pn.pn[i],
            sim.chosen_lag[i]
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Writes estimated states as `t,z_hat`.
pub fn write_states_csv(path: &Path, states: &EnvSequence) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,z_hat")?;
    for (i, &s) in states.z.iter().enumerate() {
        writeln!(out, "{},{}", i + 1, s)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a `t,z_hat` states CSV.
pub fn read_states_csv(path: &Path) -> Result<EnvSequence> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let z_col = headers
        .iter()
        .position(|h| h.trim() == "z_hat" || h.trim() == "z")
        .ok_or(Error::MissingColumn("z_hat"))?;
    let mut z = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        z.push(parse_field::<usize>(&record[z_col], "z_hat", line)?);
    }
    if z.is_empty() {
        return Err(Error::Empty("states file"));
    }
    Ok(EnvSequence::new(z))
}

/// Writes the pre-estimate sequences and feature rows as
/// `t,mu_t,alpha_t,p_t,f1,f2,f3` (the data behind the usual diagnostic plots).
pub fn write_features_csv(path: &Path, pre: &PreEstimates) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,mu_t,alpha_t,p_t,f1,f2,f3")?;
    for i in 0..pre.mu_t.len() {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            i + 1,
            pre.mu_t[i],
            pre.alpha_t[i],
            pre.p_t[i],
            pre.features[i][0],
            pre.features[i][1],
            pre.features[i][2]
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the half-width calibration table as `d_p,delta_p`.
pub fn write_dp_table_csv(path: &Path, search: &DpSearch) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "d_p,delta_p")?;
    for &(d, v) in &search.table {
        writeln!(out, "{d},{v}")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the impact-grid calibration winners as `C_m,C_a,C_p,matches`.
pub fn write_impact_table_csv(path: &Path, search: &ImpactSearch) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "C_m,C_a,C_p,matches")?;
    for &(triple, matches) in &search.top {
        writeln!(out, "{},{},{},{matches}", triple[0], triple[1], triple[2])?;
    }
    out.flush()?;
    Ok(())
}

/// The JSON model-parameter document: model parameters and environment chain
/// in one object.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: Variant,
    pub r: usize,
    #[serde(rename = "M")]
    pub m: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "P")]
    pub p: Vec<usize>,
    pub phi: Vec<Phi>,
    pub p_vec: Vec<f64>,
    pub p_mat: Vec<Vec<f64>>,
}

impl ModelConfig {
    pub fn from_parts(params: &ModelParams, env: &EnvChainSpec) -> Self {
        Self {
            variant: params.variant,
            r: params.r,
            m: params.m.clone(),
            a: params.a.clone(),
            p: params.p.clone(),
            phi: params.phi.clone(),
            p_vec: env.p_vec.clone(),
            p_mat: env.p_mat.clone(),
        }
    }

    pub fn params(&self) -> ModelParams {
        ModelParams {
            variant: self.variant,
            r: self.r,
            m: self.m.clone(),
            a: self.a.clone(),
            p: self.p.clone(),
            phi: self.phi.clone(),
        }
    }

    pub fn env(&self) -> EnvChainSpec {
        EnvChainSpec {
            r: self.r,
            p_vec: self.p_vec.clone(),
            p_mat: self.p_mat.clone(),
        }
    }

    /// Switches the document to the other variant, reshaping `phi` the way
    /// the two variants are related: the `1` variant uses the full-order row
    /// of each `max` matrix.
    pub fn with_variant(&self, variant: Variant) -> Result<Self> {
        if variant == self.variant {
            return Ok(self.clone());
        }
        let phi = match variant {
            Variant::One => self
                .phi
                .iter()
                .map(|phi| match phi {
                    Phi::Matrix(rows) => {
                        let last = rows.last().expect("validated phi");
                        Ok(Phi::Vector(last[..rows.len()].to_vec()))
                    }
                    Phi::Vector(_) => Err(Error::Domain(
                        "config already holds `1`-variant vectors".into(),
                    )),
                })
                .collect::<Result<_>>()?,
            Variant::Max => {
                return Err(Error::Domain(
                    "cannot derive max-variant mixing matrices from `1`-variant vectors".into(),
                ))
            }
        };
        Ok(Self {
            variant,
            phi,
            ..self.clone()
        })
    }
}

fn default_series_len() -> usize {
    500
}

fn default_impact_grid() -> (u32, u32) {
    (1, 10)
}

fn default_dp_range() -> (usize, usize) {
    (5, 20)
}

/// Output locations for batch runs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub out_dir: Option<PathBuf>,
}

/// One experiment: a model, method parameters, seeds and mode flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub renes: RenesConfig,
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_series_len")]
    pub n: usize,
    #[serde(default)]
    pub order_rule: OrderRule,
    /// When set, each pipeline seed calibrates the impact constants on a
    /// held-out replication before estimating states on the scored one.
    #[serde(default)]
    pub calibrate_impacts: bool,
    #[serde(default = "default_impact_grid")]
    pub impact_grid: (u32, u32),
    #[serde(default = "default_dp_range")]
    pub dp_range: (usize, usize),
    #[serde(default)]
    pub paths: Paths,
}

impl ExperimentConfig {
    pub fn new(params: &ModelParams, env: &EnvChainSpec, renes: RenesConfig) -> Self {
        Self {
            model: ModelConfig::from_parts(params, env),
            renes,
            seeds: Vec::new(),
            n: default_series_len(),
            order_rule: OrderRule::default(),
            calibrate_impacts: false,
            impact_grid: default_impact_grid(),
            dp_range: default_dp_range(),
            paths: Paths::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let violations = crate::model::validate_model(&self.model.params(), &self.model.env());
        if !violations.is_empty() {
            return Err(Error::InvalidModel(violations.join("; ")));
        }
        let params = self.model.params();
        self.renes.validate(params.max_order())?;
        if self.n == 0 {
            return Err(Error::Empty("series length"));
        }
        if self.impact_grid.0 == 0 || self.impact_grid.0 > self.impact_grid.1 {
            return Err(Error::Domain(format!("bad impact grid {:?}", self.impact_grid)));
        }
        if self.dp_range.0 == 0 || self.dp_range.0 > self.dp_range.1 {
            return Err(Error::Domain(format!("bad d_p range {:?}", self.dp_range)));
        }
        Ok(())
    }
}

/// Serializes any value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{OrderRule, Variant};
    use crate::presets;
    use crate::sampling::{simulate, EnvSource};

    #[test]
    fn series_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sim.csv");
        let (params, env) = presets::r2_close_means(Variant::Max);
        let sim = simulate(&params, EnvSource::Chain(&env), 40, OrderRule::Min, 5).unwrap();
        write_sim_csv(&path, &sim).unwrap();
        let parsed = read_series_csv(&path).unwrap();
        assert_eq!(parsed.x, sim.x);
        assert_eq!(parsed.z.unwrap(), sim.z);
        assert_eq!(parsed.pn.unwrap(), sim.pn);
    }

    #[test]
    fn series_csv_missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t,value\n1,3\n").unwrap();
        match read_series_csv(&path) {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "x"),
            other => panic!("expected missing column, got {other:?}"),
        }
    }

    #[test]
    fn series_csv_parse_error_carries_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "t,x\n1,3\n2,oops\n").unwrap();
        match read_series_csv(&path) {
            Err(Error::CsvParse { line, msg }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("oops"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn config_json_round_trip_with_defaults() {
        let (params, env) = presets::r2_close_means(Variant::Max);
        let cfg = ExperimentConfig::new(&params, &env, presets::renes_r2_close_means(Variant::Max));
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&json).unwrap();
        assert_eq!(back.n, 500);
        assert_eq!(back.model.m, params.m);
        assert_eq!(back.order_rule, OrderRule::Min);

        // Defaults kick in when optional keys are absent.
        let minimal = serde_json::json!({
            "model": serde_json::to_value(&cfg.model).unwrap(),
            "renes": serde_json::to_value(&cfg.renes).unwrap(),
        });
        let parsed = ExperimentConfig::from_json(&minimal.to_string()).unwrap();
        assert_eq!(parsed.n, 500);
        assert_eq!(parsed.impact_grid, (1, 10));
        assert_eq!(parsed.dp_range, (5, 20));
    }

    #[test]
    fn config_rejects_invalid_model() {
        let (params, env) = presets::r2_close_means(Variant::Max);
        let mut cfg =
            ExperimentConfig::new(&params, &env, presets::renes_r2_close_means(Variant::Max));
        cfg.model.a[1] = 0.9;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn variant_reshaping() {
        let (params, env) = presets::r2_close_means(Variant::Max);
        let cfg = ModelConfig::from_parts(&params, &env);
        let one = cfg.with_variant(Variant::One).unwrap();
        let (expect, _) = presets::r2_close_means(Variant::One);
        assert_eq!(one.params().phi, expect.phi);
        assert!(one.with_variant(Variant::Max).is_err());
    }
}
