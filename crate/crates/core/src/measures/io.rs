//! CSV and JSON formats for measures and grid densities.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DiscreteMeasure, DomainBox, GridDensity, GridGeometry, Measure};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureFormat {
    /// One row per atom: coordinates then weight.
    Csv { header: bool },
    Json,
}

impl MeasureFormat {
    /// Guess from the file extension; CSV headers are detected from the first row.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("json") => Ok(MeasureFormat::Json),
            Some("csv") => Ok(MeasureFormat::Csv { header: csv_has_header(path)? }),
            _ => Err(Error::Parse(format!("cannot infer format of {}", path.display()))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DiscreteSchema {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<[f64; 2]>>,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSchema {
    pub dim: usize,
    pub origin: Vec<f64>,
    pub cell_size: Vec<f64>,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AnySchema {
    Discrete(DiscreteSchema),
    Grid(GridSchema),
}

impl DiscreteSchema {
    pub fn into_measure(self) -> Result<DiscreteMeasure> {
        if let Some(p) = self.points.iter().find(|p| p.len() != self.dim) {
            return Err(Error::Parse(format!("point {p:?} does not have {} coordinates", self.dim)));
        }
        let flat: Vec<f64> = self.points.concat();
        let domain = match self.domain {
            Some(iv) => {
                if iv.len() != self.dim {
                    return Err(Error::Parse("domain length does not match dim".into()));
                }
                DomainBox::from_intervals(&iv)?
            }
            None => DomainBox::bounding(&flat, self.dim)?,
        };
        DiscreteMeasure::new(domain, flat, self.weights)
    }

    pub fn from_measure(m: &DiscreteMeasure) -> Self {
        Self {
            dim: m.dim(),
            domain: Some(m.domain().intervals()),
            points: m.point_rows(),
            weights: m.weights().to_vec(),
        }
    }
}

impl GridSchema {
    pub fn into_density(self) -> Result<GridDensity> {
        if self.origin.len() != self.dim {
            return Err(Error::Parse("origin length does not match dim".into()));
        }
        GridDensity::new(GridGeometry::new(self.origin, self.cell_size, self.shape)?, self.values)
    }

    pub fn from_density(g: &GridDensity) -> Self {
        let geom = g.geometry();
        Self {
            dim: g.dim(),
            origin: geom.origin().to_vec(),
            cell_size: geom.cell_size().to_vec(),
            shape: geom.shape().to_vec(),
            values: g.values().to_vec(),
        }
    }
}

pub fn load_measure(path: &Path, format: MeasureFormat) -> Result<Measure> {
    let text = fs::read_to_string(path)?;
    match format {
        MeasureFormat::Json => parse_json(&text),
        MeasureFormat::Csv { header } => parse_csv(&text, header).map(Measure::Discrete),
    }
}

/// Load with the format inferred from the extension.
pub fn load_measure_auto(path: &Path) -> Result<Measure> {
    load_measure(path, MeasureFormat::from_path(path)?)
}

pub fn parse_json(text: &str) -> Result<Measure> {
    let any: AnySchema = serde_json::from_str(text)?;
    match any {
        AnySchema::Discrete(s) => s.into_measure().map(Measure::Discrete),
        AnySchema::Grid(s) => s.into_density().map(Measure::Grid),
    }
}

/// Parse CSV rows `x_1,...,x_d,w`. The domain is the bounding box of the atoms.
pub fn parse_csv(text: &str, header: bool) -> Result<DiscreteMeasure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut dim = None;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Parse(format!("row {}: need coordinates and a weight", line + 1)));
        }
        let d = rec.len() - 1;
        if *dim.get_or_insert(d) != d {
            return Err(Error::Parse(format!("row {}: inconsistent column count", line + 1)));
        }
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: `{field}` is not a number", line + 1)))?;
            if k < d {
                points.push(v);
            } else {
                weights.push(v);
            }
        }
    }
    let dim = dim.ok_or_else(|| Error::Parse("empty CSV".into()))?;
    let domain = DomainBox::bounding(&points, dim)?;
    DiscreteMeasure::new(domain, points, weights)
}

fn csv_has_header(path: &Path) -> Result<bool> {
    let text = fs::read_to_string(path)?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    Ok(first.split(',').any(|f| f.trim().parse::<f64>().is_err()))
}

pub fn measure_to_json(m: &DiscreteMeasure) -> String {
    serde_json::to_string_pretty(&DiscreteSchema::from_measure(m)).expect("serializable")
}

pub fn grid_to_json(g: &GridDensity) -> String {
    serde_json::to_string_pretty(&GridSchema::from_density(g)).expect("serializable")
}

pub fn measure_to_csv(m: &DiscreteMeasure, header: bool) -> String {
    let mut out = String::new();
    if header {
        let cols: Vec<String> = (0..m.dim()).map(|k| format!("x{k}")).chain(["weight".into()]).collect();
        out.push_str(&cols.join(","));
        out.push('\n');
    }
    for (p, w) in m.iter() {
        let row: Vec<String> = p.iter().chain(std::iter::once(&w)).map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn save_measure(m: &Measure, path: &Path, format: MeasureFormat) -> Result<()> {
    let text = match (m, format) {
        (Measure::Discrete(d), MeasureFormat::Json) => measure_to_json(d),
        (Measure::Grid(g), MeasureFormat::Json) => grid_to_json(g),
        (Measure::Discrete(d), MeasureFormat::Csv { header }) => measure_to_csv(d, header),
        (Measure::Grid(g), MeasureFormat::Csv { header }) => measure_to_csv(&g.cell_center_measure()?, header),
    };
    fs::write(path, text)?;
    Ok(())
}
