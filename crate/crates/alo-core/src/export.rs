//! Constraint-system exports: MPS and a JSON mirror of the rows.
//!
//! The MPS writer emits a minimization problem with one `N` objective row,
//! `L` constraint rows, one coefficient pair per line in column-major order,
//! an explicit RHS entry for every row, and a `BV` bound per variable.
//! Numeric fields carry 12 significant digits; parsing such a field and
//! printing it again reproduces the same 12 digits, so write, read, write
//! yields byte-identical output. Foreign spacing is canonicalized on the
//! first rewrite.

use serde::{Deserialize, Serialize};

use crate::model::{ConstraintSystem, Row, RowTag};
use crate::{Error, Result};

/// Largest ordinal that fits the fixed-width name fields.
const MAX_ORDINAL: usize = 99_999;

fn format_value(x: f64) -> String {
    format!("{x:.11e}")
}

/// MPS row name of a tag. Placement rows carry the payload index, bin and
/// shear rows their 1-based bin.
pub fn row_name(tag: &RowTag) -> String {
    match tag {
        RowTag::Placement { container } => format!("P{container:05}"),
        RowTag::Bin { bin } => format!("B{bin:05}"),
        RowTag::Weight => "WT".into(),
        RowTag::CgUpper => "CGU".into(),
        RowTag::CgLower => "CGL".into(),
        RowTag::ShearLeft { bin } => format!("SL{bin:05}"),
        RowTag::ShearRight { bin } => format!("SR{bin:05}"),
        RowTag::MassFloor => "MF".into(),
        RowTag::CgWindow { upper: true } => "CWU".into(),
        RowTag::CgWindow { upper: false } => "CWL".into(),
    }
}

/// Inverse of [`row_name`].
pub fn tag_from_row_name(name: &str) -> Option<RowTag> {
    match name {
        "WT" => return Some(RowTag::Weight),
        "CGU" => return Some(RowTag::CgUpper),
        "CGL" => return Some(RowTag::CgLower),
        "MF" => return Some(RowTag::MassFloor),
        "CWU" => return Some(RowTag::CgWindow { upper: true }),
        "CWL" => return Some(RowTag::CgWindow { upper: false }),
        _ => {}
    }
    let ordinal = |prefix: &str| name.strip_prefix(prefix)?.parse::<usize>().ok();
    if let Some(k) = ordinal("P") {
        return Some(RowTag::Placement { container: k });
    }
    if let Some(bin) = ordinal("SL") {
        return Some(RowTag::ShearLeft { bin });
    }
    if let Some(bin) = ordinal("SR") {
        return Some(RowTag::ShearRight { bin });
    }
    if let Some(bin) = ordinal("B") {
        return Some(RowTag::Bin { bin });
    }
    None
}

fn column_name(flat: usize) -> String {
    format!("X{flat:05}")
}

/// One MPS column: optional objective entry plus `(row name, value)` pairs in
/// emission order.
#[derive(Debug, Clone, PartialEq)]
pub struct MpsColumn {
    pub name: String,
    pub objective: Option<f64>,
    pub entries: Vec<(String, f64)>,
}

/// Parsed or generated MPS content; [`MpsDocument::render`] is the canonical
/// text form.
#[derive(Debug, Clone, PartialEq)]
pub struct MpsDocument {
    pub name: String,
    /// Name of the single `N` row.
    pub objective: String,
    /// Constraint row names in declaration order; every row has sense `L`.
    pub rows: Vec<String>,
    pub columns: Vec<MpsColumn>,
    /// `(row name, value)` in emission order.
    pub rhs: Vec<(String, f64)>,
    /// Column names bounded `BV`, in emission order.
    pub binary: Vec<String>,
}

impl MpsDocument {
    /// Lay out a constraint system as an MPS document.
    pub fn from_system(system: &ConstraintSystem) -> Result<Self> {
        let variables = system.variables();
        if variables.is_empty() {
            return Err(Error::Export(
                "system has zero binary columns; an MPS export would carry no variables".into(),
            ));
        }
        if variables.len() > MAX_ORDINAL + 1 {
            return Err(Error::Export(format!(
                "{} variables exceed the X00000..X{MAX_ORDINAL} name space",
                variables.len()
            )));
        }
        let mut row_names = Vec::with_capacity(system.rows().len());
        let mut seen = std::collections::BTreeSet::new();
        for row in system.rows() {
            let name = row_name(&row.tag);
            if !seen.insert(name.clone()) {
                return Err(Error::Export(format!("duplicate MPS row name {name} (tag {})", row.tag)));
            }
            row_names.push(name);
        }
        let mut columns: Vec<MpsColumn> = (0..variables.len())
            .map(|v| MpsColumn {
                name: column_name(v),
                objective: (system.objective()[v] != 0.0).then(|| system.objective()[v]),
                entries: Vec::new(),
            })
            .collect();
        for (row, name) in system.rows().iter().zip(&row_names) {
            for &(v, c) in &row.coefficients {
                columns[v].entries.push((name.clone(), c));
            }
        }
        if let Some(empty) = columns.iter().find(|c| c.objective.is_none() && c.entries.is_empty()) {
            return Err(Error::Export(format!(
                "column {} appears in no row and would be undeclared",
                empty.name
            )));
        }
        let rhs = system
            .rows()
            .iter()
            .zip(&row_names)
            .map(|(row, name)| (name.clone(), row.rhs))
            .collect();
        Ok(MpsDocument {
            name: "ALO".into(),
            objective: "COST".into(),
            rows: row_names,
            columns,
            rhs,
            binary: (0..variables.len()).map(column_name).collect(),
        })
    }

    /// Canonical text form.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("NAME          {}\n", self.name));
        out.push_str("ROWS\n");
        out.push_str(&format!(" N  {}\n", self.objective));
        for name in &self.rows {
            out.push_str(&format!(" L  {name}\n"));
        }
        out.push_str("COLUMNS\n");
        for column in &self.columns {
            if let Some(value) = column.objective {
                out.push_str(&entry_line(&column.name, &self.objective, value));
            }
            for (row, value) in &column.entries {
                out.push_str(&entry_line(&column.name, row, *value));
            }
        }
        out.push_str("RHS\n");
        for (row, value) in &self.rhs {
            out.push_str(&entry_line("RHS", row, *value));
        }
        out.push_str("BOUNDS\n");
        for name in &self.binary {
            out.push_str(&format!(" BV {:<8}  {name}\n", "BND"));
        }
        out.push_str("ENDATA\n");
        out
    }
}

fn entry_line(field1: &str, field2: &str, value: f64) -> String {
    format!("    {field1:<8}  {field2:<8}  {}\n", format_value(value))
}

/// Render a constraint system as MPS text.
pub fn write_mps(system: &ConstraintSystem) -> Result<String> {
    Ok(MpsDocument::from_system(system)?.render())
}

/// Parse MPS text produced by [`write_mps`] (or an equivalent subset: single
/// `N` row, `L` rows, `BV` bounds).
pub fn parse_mps(text: &str) -> Result<MpsDocument> {
    enum Section {
        Start,
        Rows,
        Columns,
        Rhs,
        Bounds,
        Done,
    }
    let fail = |line_no: usize, message: String| Error::Parse {
        path: format!("line {line_no}"),
        message,
    };
    let mut section = Section::Start;
    let mut name = None;
    let mut objective: Option<String> = None;
    let mut rows: Vec<String> = Vec::new();
    let mut row_set = std::collections::BTreeSet::new();
    let mut columns: Vec<MpsColumn> = Vec::new();
    let mut rhs: Vec<(String, f64)> = Vec::new();
    let mut rhs_seen = std::collections::BTreeSet::new();
    let mut binary: Vec<String> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        if matches!(section, Section::Done) {
            return Err(fail(line_no, "content after ENDATA".into()));
        }
        let starts_at_margin = !raw_line.starts_with(' ');
        let tokens: Vec<&str> = raw_line.split_whitespace().collect();
        if starts_at_margin {
            match tokens[0] {
                "NAME" => {
                    name = Some(tokens.get(1).unwrap_or(&"").to_string());
                    continue;
                }
                "ROWS" => {
                    section = Section::Rows;
                    continue;
                }
                "COLUMNS" => {
                    section = Section::Columns;
                    continue;
                }
                "RHS" => {
                    section = Section::Rhs;
                    continue;
                }
                "BOUNDS" => {
                    section = Section::Bounds;
                    continue;
                }
                "RANGES" => {
                    return Err(fail(line_no, "RANGES sections are not supported".into()));
                }
                "ENDATA" => {
                    section = Section::Done;
                    continue;
                }
                other => return Err(fail(line_no, format!("unknown section {other}"))),
            }
        }
        match section {
            Section::Rows => {
                let [sense, row] = tokens[..] else {
                    return Err(fail(line_no, "expected sense and row name".into()));
                };
                match sense {
                    "N" => {
                        if objective.replace(row.to_string()).is_some() {
                            return Err(fail(line_no, "second N row".into()));
                        }
                    }
                    "L" => {
                        if !row_set.insert(row.to_string()) {
                            return Err(fail(line_no, format!("duplicate row {row}")));
                        }
                        rows.push(row.to_string());
                    }
                    other => return Err(fail(line_no, format!("unsupported row sense {other}"))),
                }
            }
            Section::Columns => {
                let objective_name = objective
                    .as_deref()
                    .ok_or_else(|| fail(line_no, "COLUMNS before an N row".into()))?;
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(fail(line_no, "expected column, row, value".into()));
                }
                let column = tokens[0];
                if columns.last().map(|c| c.name.as_str()) != Some(column) {
                    if columns.iter().any(|c| c.name == column) {
                        return Err(fail(line_no, format!("column {column} is not contiguous")));
                    }
                    columns.push(MpsColumn {
                        name: column.to_string(),
                        objective: None,
                        entries: Vec::new(),
                    });
                }
                let current = columns.last_mut().expect("just ensured");
                for pair in tokens[1..].chunks(2) {
                    let [row, value] = pair else {
                        return Err(fail(line_no, "dangling value".into()));
                    };
                    let value: f64 = value
                        .parse()
                        .map_err(|e| fail(line_no, format!("bad value {value}: {e}")))?;
                    if *row == objective_name {
                        if current.objective.replace(value).is_some() {
                            return Err(fail(line_no, format!("duplicate objective entry for {column}")));
                        }
                    } else if row_set.contains(*row) {
                        if current.entries.iter().any(|(r, _)| r == row) {
                            return Err(fail(line_no, format!("duplicate entry {column}/{row}")));
                        }
                        current.entries.push((row.to_string(), value));
                    } else {
                        return Err(fail(line_no, format!("unknown row {row}")));
                    }
                }
            }
            Section::Rhs => {
                let [_set, row, value] = tokens[..] else {
                    return Err(fail(line_no, "expected set, row, value".into()));
                };
                if !row_set.contains(row) {
                    return Err(fail(line_no, format!("unknown row {row}")));
                }
                if !rhs_seen.insert(row.to_string()) {
                    return Err(fail(line_no, format!("duplicate rhs for {row}")));
                }
                let value: f64 = value
                    .parse()
                    .map_err(|e| fail(line_no, format!("bad value {value}: {e}")))?;
                rhs.push((row.to_string(), value));
            }
            Section::Bounds => {
                let [kind, _set, column] = tokens[..] else {
                    return Err(fail(line_no, "expected kind, set, column".into()));
                };
                if kind != "BV" {
                    return Err(fail(line_no, format!("unsupported bound kind {kind}")));
                }
                if !columns.iter().any(|c| c.name == column) {
                    return Err(fail(line_no, format!("bound on undeclared column {column}")));
                }
                binary.push(column.to_string());
            }
            Section::Start => return Err(fail(line_no, "data before any section header".into())),
            Section::Done => unreachable!(),
        }
    }
    if !matches!(section, Section::Done) {
        return Err(Error::Parse {
            path: "end of input".into(),
            message: "missing ENDATA".into(),
        });
    }
    Ok(MpsDocument {
        name: name.unwrap_or_default(),
        objective: objective.ok_or_else(|| Error::Parse {
            path: "ROWS".into(),
            message: "no N row".into(),
        })?,
        rows,
        columns,
        rhs,
        binary,
    })
}

/// Schema version of the JSON system document.
pub const SYSTEM_SCHEMA_VERSION: u32 = 1;

/// JSON mirror of a constraint system: flat variable directory, tagged rows,
/// dense objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDocument {
    pub version: u32,
    pub bin_count: usize,
    /// `variables[flat] = (container index, bin)`.
    pub variables: Vec<(usize, usize)>,
    pub rows: Vec<Row>,
    pub objective: Vec<f64>,
}

impl SystemDocument {
    pub fn from_system(system: &ConstraintSystem) -> Self {
        let variables = system.variables();
        SystemDocument {
            version: SYSTEM_SCHEMA_VERSION,
            bin_count: variables.bin_count(),
            variables: (0..variables.len()).map(|v| variables.container_bin(v)).collect(),
            rows: system.rows().to_vec(),
            objective: system.objective().to_vec(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("system serialization cannot fail");
        out.push('\n');
        out
    }
}

/// Render the JSON form of a system.
pub fn write_system_json(system: &ConstraintSystem) -> String {
    SystemDocument::from_system(system).render()
}

/// Parse a JSON system document.
pub fn parse_system_json(text: &str) -> Result<SystemDocument> {
    let deserializer = &mut serde_json::Deserializer::from_str(text);
    let document: SystemDocument = serde_path_to_error::deserialize(deserializer).map_err(|e| Error::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    if document.version != SYSTEM_SCHEMA_VERSION {
        return Err(Error::Parse {
            path: "version".into(),
            message: format!("unsupported schema version {} (expected {SYSTEM_SCHEMA_VERSION})", document.version),
        });
    }
    if document.objective.len() != document.variables.len() {
        return Err(Error::Parse {
            path: "objective".into(),
            message: format!(
                "{} objective entries for {} variables",
                document.objective.len(),
                document.variables.len()
            ),
        });
    }
    Ok(document)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::airbus_reference_instance;
    use crate::model::{build_constraints, AircraftSpec, Container, ContainerSize, Payload, ShearLimit};

    fn tiny_system() -> ConstraintSystem {
        let spec = AircraftSpec::new(
            4,
            10,
            128,
            0.0,
            -0.25,
            0.25,
            0.0,
            ShearLimit::linear_symmetric(8.0).unwrap(),
        )
        .unwrap();
        let payload = Payload::new(vec![
            Container::new(1, ContainerSize::One, 5).unwrap(),
            Container::new(2, ContainerSize::Two, 3).unwrap(),
        ])
        .unwrap();
        build_constraints(&spec, &payload)
    }

    #[test]
    fn row_names_invert() {
        let tags = [
            RowTag::Placement { container: 12 },
            RowTag::Bin { bin: 3 },
            RowTag::Weight,
            RowTag::CgUpper,
            RowTag::CgLower,
            RowTag::ShearLeft { bin: 7 },
            RowTag::ShearRight { bin: 10 },
            RowTag::MassFloor,
            RowTag::CgWindow { upper: true },
            RowTag::CgWindow { upper: false },
        ];
        for tag in tags {
            assert_eq!(tag_from_row_name(&row_name(&tag)), Some(tag));
        }
        assert_eq!(tag_from_row_name("NOPE"), None);
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        for system in [tiny_system(), {
            let i = airbus_reference_instance();
            build_constraints(&i.spec, &i.payload)
        }] {
            let first = write_mps(&system).unwrap();
            let parsed = parse_mps(&first).unwrap();
            let second = parsed.render();
            assert_eq!(first, second);
        }
    }

    #[test]
    fn reference_system_layout() {
        let instance = airbus_reference_instance();
        let system = build_constraints(&instance.spec, &instance.payload);
        let doc = MpsDocument::from_system(&system).unwrap();
        assert_eq!(doc.rows.len(), 73);
        assert_eq!(doc.columns.len(), 600);
        assert_eq!(doc.binary.len(), 600);
        assert_eq!(doc.rhs.len(), 73);
        // Every column carries its placement entry and a negated-mass
        // objective term.
        assert!(doc.columns.iter().all(|c| c.objective.is_some()));
        let text = doc.render();
        assert!(text.starts_with("NAME          ALO\nROWS\n N  COST\n L  P00000\n"));
        assert!(text.contains("    X00000    COST      -2.13400000000e3\n"));
        assert!(text.contains("    RHS       WT        4.00000000000e4\n"));
        assert!(text.contains("    RHS       SL00010   2.20000000000e4\n"));
        assert!(text.contains(" BV BND       X00599\n"));
        assert!(text.ends_with("ENDATA\n"));
    }

    #[test]
    fn values_are_quantized_to_12_digits_stably() {
        let mut system = tiny_system();
        system
            .push_row(crate::model::Row {
                tag: RowTag::MassFloor,
                coefficients: vec![(0, 1.0 / 3.0)],
                rhs: 2.0 / 3.0,
            })
            .unwrap();
        let first = write_mps(&system).unwrap();
        assert!(first.contains("3.33333333333e-1"));
        assert!(first.contains("6.66666666667e-1"));
        let second = parse_mps(&first).unwrap().render();
        assert_eq!(first, second);
        // Parsing quantizes: the value differs from 1/3 by less than 1e-12
        // relative.
        let parsed = parse_mps(&first).unwrap();
        let mf = parsed.columns[0].entries.iter().find(|(r, _)| r == "MF").unwrap();
        assert!((mf.1 - 1.0 / 3.0).abs() < 1e-12);
        assert_ne!(mf.1, 1.0 / 3.0);
    }

    #[test]
    fn exact_values_survive_parsing_exactly() {
        // Integral and dyadic data fit 12 significant digits, so reparsing
        // reproduces the system's numbers bit for bit.
        let system = tiny_system();
        let text = write_mps(&system).unwrap();
        let doc = parse_mps(&text).unwrap();
        for (row, name) in system.rows().iter().zip(&doc.rows) {
            assert_eq!(tag_from_row_name(name), Some(row.tag));
            let rhs = doc.rhs.iter().find(|(r, _)| r == name).unwrap().1;
            assert_eq!(rhs, row.rhs, "rhs of {name}");
            for &(v, c) in &row.coefficients {
                let column = &doc.columns[v];
                let entry = column.entries.iter().find(|(r, _)| r == name).unwrap();
                assert_eq!(entry.1, c, "coefficient {name}/{}", column.name);
            }
        }
    }

    #[test]
    fn empty_system_is_rejected() {
        let spec = AircraftSpec::new(
            4,
            10,
            128,
            0.0,
            -0.25,
            0.25,
            0.0,
            ShearLimit::linear_symmetric(8.0).unwrap(),
        )
        .unwrap();
        let system = build_constraints(&spec, &Payload::empty());
        match write_mps(&system) {
            Err(Error::Export(message)) => assert!(message.contains("zero binary columns")),
            other => panic!("expected export error, got {other:?}"),
        }
    }

    #[test]
    fn parser_rejects_malformed_input() {
        let good = write_mps(&tiny_system()).unwrap();
        assert!(parse_mps(&good.replace("ENDATA\n", "")).is_err());
        assert!(parse_mps(&good.replace(" L  B00001", " G  B00001")).is_err());
        assert!(parse_mps(&good.replace("    RHS       WT", "    RHS       ZZ")).is_err());
        assert!(parse_mps(&(good.clone() + "stray\n")).is_err());
        assert!(parse_mps(&good.replace(" BV ", " UP ")).is_err());
    }

    #[test]
    fn system_json_round_trips() {
        let system = tiny_system();
        let first = write_system_json(&system);
        let doc = parse_system_json(&first).unwrap();
        assert_eq!(doc.render(), first);
        assert_eq!(doc.rows.len(), system.rows().len());
        assert_eq!(doc.variables.len(), system.variables().len());
        assert_eq!(doc.variables[0], (0, 1));
        assert_eq!(doc.objective, system.objective());
        let broken = first.replace("\"version\": 1", "\"version\": 9");
        assert!(parse_system_json(&broken).is_err());
    }
}
