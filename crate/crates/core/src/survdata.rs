//! Trial data model: typed baseline covariates, subject records, CSV
//! ingestion with strict validation, and the blinded view used by the
//! covariate-filtering and stratification steps.
//!
//! The blinding contract is enforced by the type system: [`BlindedDataset`]
//! is constructed by stripping treatment arms and exposes no accessor that
//! can recover them.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Kind of a baseline covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateKind {
    Continuous,
    /// Ordered categorical; `levels` gives the total order, lowest first.
    Ordinal { levels: Vec<String> },
    /// Unordered categorical with a declared level set.
    Nominal { levels: Vec<String> },
    Binary,
}

impl CovariateKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, CovariateKind::Ordinal { .. } | CovariateKind::Nominal { .. })
    }

    pub fn levels(&self) -> Option<&[String]> {
        match self {
            CovariateKind::Ordinal { levels } | CovariateKind::Nominal { levels } => Some(levels),
            _ => None,
        }
    }
}

/// Declaration of one baseline covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: CovariateKind,
}

impl CovariateSpec {
    pub fn continuous(name: &str) -> Self {
        Self { name: name.into(), kind: CovariateKind::Continuous }
    }

    pub fn binary(name: &str) -> Self {
        Self { name: name.into(), kind: CovariateKind::Binary }
    }

    pub fn ordinal(name: &str, levels: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Ordinal { levels: levels.iter().map(|s| s.to_string()).collect() },
        }
    }

    pub fn nominal(name: &str, levels: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Nominal { levels: levels.iter().map(|s| s.to_string()).collect() },
        }
    }
}

/// Treatment arm; `Test` is the arm whose benefit the one-tailed tests target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arm {
    Test,
    Control,
}

/// One covariate value, stored according to its spec's kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovValue {
    Continuous(f64),
    /// Index into the declared level list (ordinal or nominal).
    Level(usize),
    Binary(bool),
}

impl CovValue {
    /// Numeric encoding: continuous value, level index, or 0/1.
    pub fn as_f64(&self) -> f64 {
        match self {
            CovValue::Continuous(x) => *x,
            CovValue::Level(l) => *l as f64,
            CovValue::Binary(b) => {
                if *b {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// One subject with arm label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub time: f64,
    pub event: bool,
    pub arm: Arm,
    pub covariates: Vec<CovValue>,
}

/// Fully validated two-arm dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    specs: Vec<CovariateSpec>,
    records: Vec<SubjectRecord>,
    arm_labels: (String, String),
}

impl TrialDataset {
    /// Validating constructor. Arm labels are (test, control) display names.
    pub fn new(
        specs: Vec<CovariateSpec>,
        records: Vec<SubjectRecord>,
        arm_labels: (String, String),
    ) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for s in &specs {
            if !seen.insert(s.name.clone()) {
                return Err(Error::InvalidInput(format!("duplicate covariate name `{}`", s.name)));
            }
            if let Some(levels) = s.kind.levels() {
                if levels.is_empty() {
                    return Err(Error::InvalidInput(format!(
                        "covariate `{}` declares an empty level set",
                        s.name
                    )));
                }
                let mut lv = std::collections::BTreeSet::new();
                for l in levels {
                    if !lv.insert(l) {
                        return Err(Error::InvalidInput(format!(
                            "covariate `{}` has duplicate level `{l}`",
                            s.name
                        )));
                    }
                }
            }
        }
        for (i, r) in records.iter().enumerate() {
            if !r.time.is_finite() || r.time < 0.0 {
                return Err(Error::NegativeTime { row: i + 1, value: r.time });
            }
            if r.covariates.len() != specs.len() {
                return Err(Error::InvalidInput(format!(
                    "record `{}` carries {} covariates, expected {}",
                    r.id,
                    r.covariates.len(),
                    specs.len()
                )));
            }
            for (v, s) in r.covariates.iter().zip(&specs) {
                let ok = match (&s.kind, v) {
                    (CovariateKind::Continuous, CovValue::Continuous(x)) => x.is_finite(),
                    (CovariateKind::Binary, CovValue::Binary(_)) => true,
                    (CovariateKind::Ordinal { levels }, CovValue::Level(l))
                    | (CovariateKind::Nominal { levels }, CovValue::Level(l)) => *l < levels.len(),
                    _ => false,
                };
                if !ok {
                    return Err(Error::InvalidInput(format!(
                        "record `{}`: value for covariate `{}` does not conform to its kind",
                        r.id, s.name
                    )));
                }
            }
        }
        if !records.iter().any(|r| r.event) {
            return Err(Error::InvalidInput("dataset contains no events".into()));
        }
        Ok(Self { specs, records, arm_labels })
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn specs(&self) -> &[CovariateSpec] {
        &self.specs
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn arm_labels(&self) -> (&str, &str) {
        (&self.arm_labels.0, &self.arm_labels.1)
    }

    pub fn arm_label(&self, arm: Arm) -> &str {
        match arm {
            Arm::Test => &self.arm_labels.0,
            Arm::Control => &self.arm_labels.1,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }

    /// 1.0 for the test arm, 0.0 for control, in record order.
    pub fn arm_indicator(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| if r.arm == Arm::Test { 1.0 } else { 0.0 })
            .collect()
    }

    /// Arm of the record with the given id, if present.
    pub fn arm_of(&self, id: &str) -> Option<Arm> {
        self.records.iter().find(|r| r.id == id).map(|r| r.arm)
    }
}

/// Subject record with the arm label removed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlindedRecord {
    pub id: String,
    pub time: f64,
    pub event: bool,
    pub covariates: Vec<CovValue>,
}

/// Arm-stripped view of a trial dataset. Record order and ids are preserved
/// so downstream results can be re-joined to arms exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct BlindedDataset {
    specs: Vec<CovariateSpec>,
    records: Vec<BlindedRecord>,
}

impl BlindedDataset {
    /// Assemble a blinded dataset directly (no arm labels ever supplied).
    pub fn from_parts(specs: Vec<CovariateSpec>, records: Vec<BlindedRecord>) -> Self {
        Self { specs, records }
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn specs(&self) -> &[CovariateSpec] {
        &self.specs
    }

    pub fn records(&self) -> &[BlindedRecord] {
        &self.records
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }

    /// Numeric encoding of covariate `j` for every subject.
    pub fn covariate_column(&self, j: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.covariates[j].as_f64()).collect()
    }
}

/// Remove arm labels. Subjects, ordering, and ids are untouched.
pub fn blind(data: &TrialDataset) -> BlindedDataset {
    BlindedDataset {
        specs: data.specs.clone(),
        records: data
            .records
            .iter()
            .map(|r| BlindedRecord {
                id: r.id.clone(),
                time: r.time,
                event: r.event,
                covariates: r.covariates.clone(),
            })
            .collect(),
    }
}

/// Column mapping and arm labels for CSV ingestion.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub id: String,
    pub time: String,
    pub event: String,
    pub arm: String,
    /// (test label, control label) as they appear in the arm column.
    pub arm_values: (String, String),
    /// Optional spec-name → CSV-column renames; identity when absent.
    pub columns: BTreeMap<String, String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            id: "id".into(),
            time: "time".into(),
            event: "event".into(),
            arm: "arm".into(),
            arm_values: ("A".into(), "B".into()),
            columns: BTreeMap::new(),
        }
    }
}

impl ColumnMap {
    fn covariate_column<'a>(&'a self, spec_name: &'a str) -> &'a str {
        self.columns.get(spec_name).map(String::as_str).unwrap_or(spec_name)
    }
}

/// Load and fully validate a trial dataset from CSV.
///
/// The file needs a header row with id/time/event/arm columns and one column
/// per declared covariate. The event column accepts `0`/`1` with 1 = event
/// observed. Missing covariate values are rejected, never imputed.
pub fn load_csv(path: &Path, schema: &[CovariateSpec], map: &ColumnMap) -> Result<TrialDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };

    let id_i = col_index(&map.id)?;
    let time_i = col_index(&map.time)?;
    let event_i = col_index(&map.event)?;
    let arm_i = col_index(&map.arm)?;
    let cov_i: Vec<usize> = schema
        .iter()
        .map(|s| col_index(map.covariate_column(&s.name)))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    for (row_idx, rec) in reader.records().enumerate() {
        let row = row_idx + 1;
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").to_string();

        let time_raw = field(time_i);
        let time: f64 = time_raw.parse().map_err(|_| Error::Unparseable {
            row,
            column: map.time.clone(),
            value: time_raw.clone(),
        })?;
        if time < 0.0 {
            return Err(Error::NegativeTime { row, value: time });
        }

        let event_raw = field(event_i);
        let event = match event_raw.as_str() {
            "1" => true,
            "0" => false,
            _ => {
                return Err(Error::Unparseable {
                    row,
                    column: map.event.clone(),
                    value: event_raw,
                })
            }
        };

        let arm_raw = field(arm_i);
        let arm = if arm_raw == map.arm_values.0 {
            Arm::Test
        } else if arm_raw == map.arm_values.1 {
            Arm::Control
        } else {
            return Err(Error::Unparseable { row, column: map.arm.clone(), value: arm_raw });
        };

        let mut covariates = Vec::with_capacity(schema.len());
        for (s, &ci) in schema.iter().zip(&cov_i) {
            let column = map.covariate_column(&s.name).to_string();
            let raw = field(ci);
            if raw.is_empty() {
                return Err(Error::MissingValue { row, column });
            }
            let value = match &s.kind {
                CovariateKind::Continuous => {
                    let x: f64 = raw.parse().map_err(|_| Error::Unparseable {
                        row,
                        column: column.clone(),
                        value: raw.clone(),
                    })?;
                    CovValue::Continuous(x)
                }
                CovariateKind::Binary => match raw.as_str() {
                    "1" => CovValue::Binary(true),
                    "0" => CovValue::Binary(false),
                    _ => {
                        return Err(Error::Unparseable { row, column, value: raw });
                    }
                },
                CovariateKind::Ordinal { levels } | CovariateKind::Nominal { levels } => {
                    match levels.iter().position(|l| *l == raw) {
                        Some(ix) => CovValue::Level(ix),
                        None => {
                            return Err(Error::UnknownLevel { row, column, value: raw });
                        }
                    }
                }
            };
            covariates.push(value);
        }

        records.push(SubjectRecord { id: field(id_i), time, event, arm, covariates });
    }

    TrialDataset::new(schema.to_vec(), records, map.arm_values.clone())
}

/// Per-covariate summary in a validation report.
#[derive(Debug, Clone, Serialize)]
pub struct CovariateSummary {
    pub name: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level_counts: Option<Vec<(String, usize)>>,
}

/// Report-only diagnostics; never fails.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub n: usize,
    pub n_test: usize,
    pub n_control: usize,
    pub events_test: usize,
    pub events_control: usize,
    pub events_total: usize,
    pub duplicate_ids: Vec<String>,
    pub covariates: Vec<CovariateSummary>,
    pub warnings: Vec<String>,
}

/// Summarize a dataset: arm and event counts, covariate summaries, duplicate
/// ids, and degeneracy warnings for downstream fits.
pub fn validate(data: &TrialDataset) -> ValidationReport {
    let n_test = data.records.iter().filter(|r| r.arm == Arm::Test).count();
    let n_control = data.n() - n_test;
    let events_test = data.records.iter().filter(|r| r.arm == Arm::Test && r.event).count();
    let events_control = data.records.iter().filter(|r| r.arm == Arm::Control && r.event).count();

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &data.records {
        *counts.entry(r.id.as_str()).or_insert(0) += 1;
    }
    let duplicate_ids: Vec<String> = counts
        .iter()
        .filter(|(_, &c)| c > 1)
        .map(|(id, _)| id.to_string())
        .collect();

    let covariates = data
        .specs
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let kind = match &s.kind {
                CovariateKind::Continuous => "continuous",
                CovariateKind::Ordinal { .. } => "ordinal",
                CovariateKind::Nominal { .. } => "nominal",
                CovariateKind::Binary => "binary",
            }
            .to_string();
            match &s.kind {
                CovariateKind::Continuous => {
                    let xs: Vec<f64> =
                        data.records.iter().map(|r| r.covariates[j].as_f64()).collect();
                    CovariateSummary {
                        name: s.name.clone(),
                        kind,
                        mean: Some(crate::numeric::mean(&xs)),
                        sd: Some(crate::numeric::variance(&xs).sqrt()),
                        min: xs.iter().cloned().reduce(f64::min),
                        max: xs.iter().cloned().reduce(f64::max),
                        level_counts: None,
                    }
                }
                CovariateKind::Binary => {
                    let ones =
                        data.records.iter().filter(|r| r.covariates[j].as_f64() == 1.0).count();
                    CovariateSummary {
                        name: s.name.clone(),
                        kind,
                        mean: Some(ones as f64 / data.n().max(1) as f64),
                        sd: None,
                        min: None,
                        max: None,
                        level_counts: Some(vec![
                            ("0".into(), data.n() - ones),
                            ("1".into(), ones),
                        ]),
                    }
                }
                CovariateKind::Ordinal { levels } | CovariateKind::Nominal { levels } => {
                    let mut lc: Vec<(String, usize)> =
                        levels.iter().map(|l| (l.clone(), 0)).collect();
                    for r in &data.records {
                        if let CovValue::Level(ix) = r.covariates[j] {
                            lc[ix].1 += 1;
                        }
                    }
                    CovariateSummary {
                        name: s.name.clone(),
                        kind,
                        mean: None,
                        sd: None,
                        min: None,
                        max: None,
                        level_counts: Some(lc),
                    }
                }
            }
        })
        .collect();

    let mut warnings = Vec::new();
    if events_test == 0 && n_test > 0 {
        warnings.push("no events in the test arm; downstream fits may degenerate".to_string());
    }
    if events_control == 0 && n_control > 0 {
        warnings.push("no events in the control arm; downstream fits may degenerate".to_string());
    }
    if n_test == 0 || n_control == 0 {
        warnings.push("only one arm is present".to_string());
    }
    if !duplicate_ids.is_empty() {
        warnings.push(format!("duplicate subject ids: {}", duplicate_ids.join(", ")));
    }

    ValidationReport {
        n: data.n(),
        n_test,
        n_control,
        events_test,
        events_control,
        events_total: events_test + events_control,
        duplicate_ids,
        covariates,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn demo_schema() -> Vec<CovariateSpec> {
        vec![
            CovariateSpec::continuous("age"),
            CovariateSpec::nominal("site", &["north", "south"]),
        ]
    }

    #[test]
    fn load_three_row_file() {
        let f = write_csv(
            "id,time,event,arm,age,site\n\
             p1,1,1,A,50,north\n\
             p2,2,1,B,61,south\n\
             p3,3,0,A,47,north\n",
        );
        let data = load_csv(f.path(), &demo_schema(), &ColumnMap::default()).unwrap();
        assert_eq!(data.n(), 3);
        assert_eq!(data.events().iter().filter(|&&e| e).count(), 2);
        assert_eq!(data.times(), vec![1.0, 2.0, 3.0]);
        assert_eq!(data.records()[0].arm, Arm::Test);
        assert_eq!(data.records()[1].arm, Arm::Control);
    }

    #[test]
    fn negative_time_rejected() {
        let f = write_csv("id,time,event,arm,age,site\np1,-1,1,A,50,north\np2,2,1,B,61,south\n");
        let err = load_csv(f.path(), &demo_schema(), &ColumnMap::default()).unwrap_err();
        assert!(err.to_string().contains("negative time"), "{err}");
    }

    #[test]
    fn unknown_nominal_level_names_row_and_column() {
        let f = write_csv("id,time,event,arm,age,site\np1,1,1,A,50,north\np2,2,1,B,61,east\n");
        let err = load_csv(f.path(), &demo_schema(), &ColumnMap::default()).unwrap_err();
        match err {
            Error::UnknownLevel { row, ref column, ref value } => {
                assert_eq!(row, 2);
                assert_eq!(column, "site");
                assert_eq!(value, "east");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn missing_column_and_missing_value_rejected() {
        let f = write_csv("id,time,event,arm,age\np1,1,1,A,50\n");
        let err = load_csv(f.path(), &demo_schema(), &ColumnMap::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "site"));

        let f = write_csv("id,time,event,arm,age,site\np1,1,1,A,,north\np2,2,1,B,61,south\n");
        let err = load_csv(f.path(), &demo_schema(), &ColumnMap::default()).unwrap_err();
        assert!(matches!(err, Error::MissingValue { row: 1, ref column } if column == "age"));
    }

    #[test]
    fn blind_preserves_everything_but_arms() {
        let f = write_csv(
            "id,time,event,arm,age,site\n\
             p1,1,1,A,50,north\n\
             p2,2,1,B,61,south\n\
             p3,3,0,A,47,north\n",
        );
        let data = load_csv(f.path(), &demo_schema(), &ColumnMap::default()).unwrap();
        let blinded = blind(&data);
        assert_eq!(blinded.n(), 3);
        assert_eq!(blinded.times(), data.times());
        assert_eq!(blinded.events(), data.events());
        // Multiset of (time, event) pairs preserved exactly.
        let mut a: Vec<_> = data.records().iter().map(|r| (r.time.to_bits(), r.event)).collect();
        let mut b: Vec<_> =
            blinded.records().iter().map(|r| (r.time.to_bits(), r.event)).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);

        // Re-joining by id recovers the original arms: a bijection.
        for r in blinded.records() {
            assert!(data.arm_of(&r.id).is_some());
        }
        assert_eq!(data.arm_of("p1"), Some(Arm::Test));
        assert_eq!(data.arm_of("p2"), Some(Arm::Control));

        // No accessor (including serialization) exposes an arm field.
        let json = serde_json::to_string(blinded.records()).unwrap();
        assert!(!json.contains("arm"));
    }

    #[test]
    fn loading_is_deterministic() {
        let content = "id,time,event,arm,age,site\np1,1,1,A,50,north\np2,2,0,B,61,south\n";
        let f = write_csv(content);
        let d1 = load_csv(f.path(), &demo_schema(), &ColumnMap::default()).unwrap();
        let d2 = load_csv(f.path(), &demo_schema(), &ColumnMap::default()).unwrap();
        assert_eq!(d1, d2);
    }

    #[test]
    fn validate_reports_counts_duplicates_and_degeneracy() {
        let specs = vec![CovariateSpec::binary("x")];
        let mk = |id: &str, t: f64, e: bool, arm: Arm| SubjectRecord {
            id: id.into(),
            time: t,
            event: e,
            arm,
            covariates: vec![CovValue::Binary(false)],
        };
        let data = TrialDataset::new(
            specs,
            vec![
                mk("a", 1.0, true, Arm::Test),
                mk("a", 2.0, true, Arm::Test),
                mk("b", 3.0, false, Arm::Control),
            ],
            ("A".into(), "B".into()),
        )
        .unwrap();
        let rep = validate(&data);
        assert_eq!(rep.n_test, 2);
        assert_eq!(rep.n_control, 1);
        assert_eq!(rep.duplicate_ids, vec!["a".to_string()]);
        assert!(rep.warnings.iter().any(|w| w.contains("control arm")));
    }

    #[test]
    fn zero_events_dataset_rejected() {
        let specs = vec![];
        let rec = SubjectRecord {
            id: "a".into(),
            time: 1.0,
            event: false,
            arm: Arm::Test,
            covariates: vec![],
        };
        let err = TrialDataset::new(specs, vec![rec], ("A".into(), "B".into())).unwrap_err();
        assert!(err.to_string().contains("no events"));
    }
}
