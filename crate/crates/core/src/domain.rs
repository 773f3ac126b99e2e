//! Input boxes, datasets, coordinate transforms and CSV ingestion.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("box must have at least one dimension")]
    EmptyBox,
    #[error("box field lengths disagree: {0}")]
    BoxShape(String),
    #[error("box dimension {dim} ({name}) has lower {lower} not below upper {upper}")]
    BoxOrder {
        dim: usize,
        name: String,
        lower: f64,
        upper: f64,
    },
    #[error("sqrt transform requires non-negative lower bounds, dimension {dim} has {lower}")]
    NegativeSqrtDomain { dim: usize, lower: f64 },
    #[error("point {point:?} lies outside the input box")]
    OutsideBox { point: Vec<f64> },
    #[error("{path}: cannot read file: {reason}")]
    Io { path: String, reason: String },
    #[error("{path}: file contains no observations")]
    EmptyFile { path: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{cell}` as a number")]
    NonNumeric {
        row: usize,
        column: String,
        cell: String,
    },
    #[error("row {row} outside box: column `{column}` = {value} not in [{lower}, {upper}]")]
    RowOutsideBox {
        row: usize,
        column: String,
        value: f64,
        lower: f64,
        upper: f64,
    },
    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error("no box bounds for column `{0}` (add a `# box:` header line or pass a box file)")]
    MissingBounds(String),
    #[error("malformed box header line `{0}`")]
    BadHeader(String),
    #[error("dataset shape mismatch: {0}")]
    Shape(String),
    #[error("CSV error: {0}")]
    Csv(String),
}

/// Rectangular input domain, in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct InputBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
    names: Vec<String>,
    units: Vec<String>,
}

#[derive(Deserialize)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
    names: Vec<String>,
    units: Vec<String>,
}

impl TryFrom<RawBox> for InputBox {
    type Error = DataError;
    fn try_from(r: RawBox) -> Result<Self, DataError> {
        InputBox::new(r.lower, r.upper, r.names, r.units)
    }
}

impl InputBox {
    pub fn new(
        lower: Vec<f64>,
        upper: Vec<f64>,
        names: Vec<String>,
        units: Vec<String>,
    ) -> Result<Self, DataError> {
        let d = lower.len();
        if d == 0 {
            return Err(DataError::EmptyBox);
        }
        if upper.len() != d || names.len() != d || units.len() != d {
            return Err(DataError::BoxShape(format!(
                "lower {}, upper {}, names {}, units {}",
                d,
                upper.len(),
                names.len(),
                units.len()
            )));
        }
        for i in 0..d {
            if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] < upper[i]) {
                return Err(DataError::BoxOrder {
                    dim: i,
                    name: names[i].clone(),
                    lower: lower[i],
                    upper: upper[i],
                });
            }
        }
        Ok(InputBox {
            lower,
            upper,
            names,
            units,
        })
    }

    /// Unnamed box, dimensions called `x0, x1, ...`.
    pub fn unnamed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, DataError> {
        let d = lower.len();
        InputBox::new(
            lower,
            upper,
            (0..d).map(|i| format!("x{i}")).collect(),
            vec![String::new(); d],
        )
    }

    /// The unit hypercube `[0, 1]^d`.
    pub fn unit(d: usize) -> Self {
        InputBox::unnamed(vec![0.0; d], vec![1.0; d]).expect("unit box is valid")
    }

    /// Process parameter ranges of the brushing study: `dia, t_c, n_b, n_w, a_e`.
    pub fn brushing() -> Self {
        InputBox::new(
            vec![400.0, 15.0, 1000.0, 100.0, 0.25],
            vec![800.0, 480.0, 2500.0, 1000.0, 1.0],
            ["dia", "t_c", "n_b", "n_w", "a_e"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            ["-", "s", "1/min", "1/min", "mm"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
        .expect("brushing box is valid")
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| 0.5 * (a + b))
            .collect()
    }

    /// Sub-box on the named dimensions, in the order given.
    pub fn select(&self, names: &[&str]) -> Result<InputBox, DataError> {
        let idx = names
            .iter()
            .map(|n| self.index_of(n).ok_or_else(|| DataError::MissingColumn(n.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        InputBox::new(
            idx.iter().map(|&i| self.lower[i]).collect(),
            idx.iter().map(|&i| self.upper[i]).collect(),
            idx.iter().map(|&i| self.names[i].clone()).collect(),
            idx.iter().map(|&i| self.units[i].clone()).collect(),
        )
    }
}

/// Observations `(x^j, y^j)` inside a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
    input_box: InputBox,
    output_name: String,
}

impl Dataset {
    pub fn new(
        inputs: Vec<Vec<f64>>,
        outputs: Vec<f64>,
        input_box: InputBox,
        output_name: impl Into<String>,
    ) -> Result<Self, DataError> {
        if inputs.len() != outputs.len() {
            return Err(DataError::Shape(format!(
                "{} input rows but {} outputs",
                inputs.len(),
                outputs.len()
            )));
        }
        if inputs.is_empty() {
            return Err(DataError::Shape("dataset has no rows".into()));
        }
        for (row, (x, y)) in inputs.iter().zip(&outputs).enumerate() {
            if x.len() != input_box.dim() {
                return Err(DataError::Shape(format!(
                    "row {row} has {} inputs, box has {}",
                    x.len(),
                    input_box.dim()
                )));
            }
            if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(DataError::NonFinite { row });
            }
            if !input_box.contains(x) {
                return Err(DataError::OutsideBox { point: x.clone() });
            }
        }
        Ok(Dataset {
            inputs,
            outputs,
            input_box,
            output_name: output_name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.input_box.dim()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn input_box(&self) -> &InputBox {
        &self.input_box
    }

    pub fn output_name(&self) -> &str {
        &self.output_name
    }

    /// Rows at the given indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            outputs: indices.iter().map(|&i| self.outputs[i]).collect(),
            input_box: self.input_box.clone(),
            output_name: self.output_name.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    /// `z_i = (sqrt(x_i) - sqrt(a_i)) / (sqrt(b_i) - sqrt(a_i))`
    #[default]
    SqrtThenUnitScale,
}

/// Map from original units onto the unit hypercube.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputTransform {
    kind: TransformKind,
    #[serde(rename = "box")]
    input_box: InputBox,
}

impl InputTransform {
    pub fn new(kind: TransformKind, input_box: InputBox) -> Result<Self, DataError> {
        if kind == TransformKind::SqrtThenUnitScale {
            if let Some((dim, &lower)) = input_box.lower().iter().enumerate().find(|(_, &a)| a < 0.0) {
                return Err(DataError::NegativeSqrtDomain { dim, lower });
            }
        }
        Ok(InputTransform { kind, input_box })
    }

    pub fn identity(input_box: InputBox) -> Self {
        InputTransform {
            kind: TransformKind::Identity,
            input_box,
        }
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn input_box(&self) -> &InputBox {
        &self.input_box
    }

    pub fn dim(&self) -> usize {
        self.input_box.dim()
    }

    fn forward_coord(&self, i: usize, x: f64) -> f64 {
        let (a, b) = (self.input_box.lower[i], self.input_box.upper[i]);
        match self.kind {
            TransformKind::Identity => (x - a) / (b - a),
            TransformKind::SqrtThenUnitScale => {
                let (sa, sb) = (a.sqrt(), b.sqrt());
                (x.max(0.0).sqrt() - sa) / (sb - sa)
            }
        }
    }

    fn inverse_coord(&self, i: usize, z: f64) -> f64 {
        let (a, b) = (self.input_box.lower[i], self.input_box.upper[i]);
        match self.kind {
            TransformKind::Identity => a + z * (b - a),
            TransformKind::SqrtThenUnitScale => {
                let (sa, sb) = (a.sqrt(), b.sqrt());
                let s = sa + z * (sb - sa);
                let x = s * s;
                // pin the end points so the round trip is exact at the corners
                if z == 0.0 {
                    a
                } else if z == 1.0 {
                    b
                } else {
                    x
                }
            }
        }
    }

    /// Forward map without a box check; points outside the box map outside `[0,1]^d`.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| self.forward_coord(i, v))
            .collect()
    }

    pub fn forward_strict(&self, x: &[f64]) -> Result<Vec<f64>, DataError> {
        if !self.input_box.contains(x) {
            return Err(DataError::OutsideBox { point: x.to_vec() });
        }
        Ok(self.forward(x))
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, &v)| self.inverse_coord(i, v))
            .collect()
    }

    pub fn forward_all(&self, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        xs.iter().map(|x| self.forward(x)).collect()
    }
}

/// Which CSV columns hold inputs and output, plus an optional explicit box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub inputs: Vec<String>,
    pub output: String,
    #[serde(default, rename = "box")]
    pub input_box: Option<InputBox>,
}

impl ColumnSchema {
    pub fn new(inputs: &[&str], output: &str) -> Self {
        ColumnSchema {
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            output: output.to_string(),
            input_box: None,
        }
    }

    /// `dia, t_c, n_b, n_w, a_e -> R_a`.
    pub fn brushing() -> Self {
        ColumnSchema::new(&["dia", "t_c", "n_b", "n_w", "a_e"], "R_a")
    }

    pub fn with_box(mut self, input_box: InputBox) -> Self {
        self.input_box = Some(input_box);
        self
    }
}

const BOX_PREFIX: &str = "# box:";

/// Parses `# box: name, lower, upper[, unit]` lines.
fn parse_box_header(lines: &[&str]) -> Result<Vec<(String, f64, f64, String)>, DataError> {
    let mut out = Vec::new();
    for line in lines {
        let Some(rest) = line.trim().strip_prefix(BOX_PREFIX) else {
            continue;
        };
        let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
        if parts.len() < 3 || parts.len() > 4 {
            return Err(DataError::BadHeader(line.to_string()));
        }
        let lo = parts[1]
            .parse::<f64>()
            .map_err(|_| DataError::BadHeader(line.to_string()))?;
        let hi = parts[2]
            .parse::<f64>()
            .map_err(|_| DataError::BadHeader(line.to_string()))?;
        let unit = parts.get(3).map(|s| s.to_string()).unwrap_or_default();
        out.push((parts[0].to_string(), lo, hi, unit));
    }
    Ok(out)
}

/// Reads a dataset from CSV text. Leading `#` lines form the header block.
pub fn parse_dataset(text: &str, schema: &ColumnSchema, origin: &str) -> Result<Dataset, DataError> {
    let mut header_lines = Vec::new();
    let mut body_start = 0;
    for raw in text.split_inclusive('\n') {
        let line = raw.trim_end_matches(['\n', '\r']);
        if line.trim_start().starts_with('#') {
            header_lines.push(line);
            body_start += raw.len();
        } else if line.trim().is_empty() {
            body_start += raw.len();
        } else {
            break;
        }
    }
    let body = text.get(body_start.min(text.len())..).unwrap_or("");

    let input_box = match &schema.input_box {
        Some(b) => {
            if b.names() != schema.inputs.as_slice() {
                return Err(DataError::BoxShape(format!(
                    "box dimensions {:?} do not match input columns {:?}",
                    b.names(),
                    schema.inputs
                )));
            }
            b.clone()
        }
        None => {
            let bounds = parse_box_header(&header_lines)?;
            let mut lower = Vec::new();
            let mut upper = Vec::new();
            let mut units = Vec::new();
            for name in &schema.inputs {
                let (_, lo, hi, unit) = bounds
                    .iter()
                    .find(|(n, ..)| n == name)
                    .ok_or_else(|| DataError::MissingBounds(name.clone()))?;
                lower.push(*lo);
                upper.push(*hi);
                units.push(unit.clone());
            }
            InputBox::new(lower, upper, schema.inputs.clone(), units)?
        }
    };

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| DataError::Csv(e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(DataError::EmptyFile {
            path: origin.to_string(),
        });
    }
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let in_cols = schema
        .inputs
        .iter()
        .map(|n| column(n))
        .collect::<Result<Vec<_>, _>>()?;
    let out_col = column(&schema.output)?;

    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        let row = r + 1;
        let cell = |c: usize, name: &str| -> Result<f64, DataError> {
            let raw = record.get(c).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DataError::NonNumeric {
                    row,
                    column: name.to_string(),
                    cell: raw.to_string(),
                })
        };
        let mut x = Vec::with_capacity(in_cols.len());
        for (i, (&c, name)) in in_cols.iter().zip(&schema.inputs).enumerate() {
            let v = cell(c, name)?;
            if v < input_box.lower()[i] || v > input_box.upper()[i] {
                return Err(DataError::RowOutsideBox {
                    row,
                    column: name.clone(),
                    value: v,
                    lower: input_box.lower()[i],
                    upper: input_box.upper()[i],
                });
            }
            x.push(v);
        }
        outputs.push(cell(out_col, &schema.output)?);
        inputs.push(x);
    }
    if inputs.is_empty() {
        return Err(DataError::EmptyFile {
            path: origin.to_string(),
        });
    }
    Dataset::new(inputs, outputs, input_box, schema.output.clone())
}

/// Column schema read off the CSV itself: every column except `output`
/// (default: the last one) is an input. Without a `# box:` block, inputs
/// that are all brushing parameters get the brushing ranges.
pub fn infer_schema(text: &str, output: Option<&str>) -> Result<ColumnSchema, DataError> {
    let mut has_box = false;
    let mut header = None;
    for line in text.lines() {
        let t = line.trim();
        if t.starts_with(BOX_PREFIX) {
            has_box = true;
        } else if !t.is_empty() && !t.starts_with('#') {
            header = Some(t);
            break;
        }
    }
    let header = header.ok_or_else(|| DataError::Csv("no header row".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let out = match output {
        Some(o) => o,
        None => cols.last().copied().unwrap_or(""),
    };
    if !cols.contains(&out) {
        return Err(DataError::MissingColumn(out.to_string()));
    }
    let inputs: Vec<&str> = cols.iter().copied().filter(|c| *c != out).collect();
    if inputs.is_empty() {
        return Err(DataError::Csv("no input columns".into()));
    }
    let schema = ColumnSchema::new(&inputs, out);
    if !has_box {
        if let Ok(b) = InputBox::brushing().select(&inputs) {
            return Ok(schema.with_box(b));
        }
    }
    Ok(schema)
}

pub fn load_dataset(path: &Path, schema: &ColumnSchema) -> Result<Dataset, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    if text.trim().is_empty() {
        return Err(DataError::EmptyFile {
            path: path.display().to_string(),
        });
    }
    parse_dataset(&text, schema, &path.display().to_string())
}

/// CSV text with a `# box:` header block, readable by [`parse_dataset`].
pub fn dataset_to_csv(data: &Dataset) -> String {
    let b = data.input_box();
    let mut s = String::new();
    for i in 0..b.dim() {
        let _ = writeln!(
            s,
            "{BOX_PREFIX} {}, {}, {}, {}",
            b.names()[i],
            b.lower()[i],
            b.upper()[i],
            b.units()[i]
        );
    }
    let _ = writeln!(s, "{},{}", b.names().join(","), data.output_name());
    for (x, y) in data.inputs().iter().zip(data.outputs()) {
        let cells: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{},{:?}", cells.join(","), y);
    }
    s
}

impl Dataset {
    /// Column schema matching this dataset's names, box included.
    pub fn schema(&self) -> ColumnSchema {
        ColumnSchema {
            inputs: self.input_box.names().to_vec(),
            output: self.output_name.clone(),
            input_box: Some(self.input_box.clone()),
        }
    }
}
