//! CSV ingestion for the seven raw extract tables.
//!
//! Structural problems (missing file, missing column) are fatal. Per-row
//! problems (bad enum token, non-finite value, broken referential integrity)
//! become entries in a rejects report so that no row is ever silently
//! dropped: for every table, retained rows + rejected rows = input rows.

use std::collections::{HashMap, HashSet};
use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Days, NaiveDate, NaiveDateTime};
use csv::StringRecord;

use crate::error::CoreError;
use crate::types::*;

pub const TABLE_DEMOGRAPHIC: &str = "DEMOGRAPHIC";
pub const TABLE_ENCOUNTER: &str = "ENCOUNTER";
pub const TABLE_PROCEDURES: &str = "PROCEDURES";
pub const TABLE_DIAGNOSIS: &str = "DIAGNOSIS";
pub const TABLE_LAB: &str = "LAB_RESULT_CM";
pub const TABLE_DISPENSING: &str = "DISPENSING";
pub const TABLE_DEATH: &str = "DEATH";

/// How far before its encounter's admission a procedure/diagnosis row may be
/// dated (problem-list backdating); anything earlier is a data error.
const CODE_ROW_LOOKBACK_DAYS: u64 = 400;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectRow {
    pub table: &'static str,
    /// Physical line number in the source file (header is line 1).
    pub line_no: u64,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct RawTables {
    pub demographics: Vec<DemographicRow>,
    pub encounters: Vec<EncounterRow>,
    pub procedures: Vec<ProcedureRow>,
    pub diagnoses: Vec<DiagnosisRow>,
    pub labs: Vec<LabRow>,
    pub meds: Vec<MedRow>,
    pub deaths: Vec<DeathRow>,
    pub rejects: Vec<RejectRow>,
    /// Data rows read per table (excluding the header), before any rejection.
    pub input_counts: BTreeMap<&'static str, u64>,
}

impl RawTables {
    pub fn retained_count(&self, table: &str) -> u64 {
        match table {
            TABLE_DEMOGRAPHIC => self.demographics.len() as u64,
            TABLE_ENCOUNTER => self.encounters.len() as u64,
            TABLE_PROCEDURES => self.procedures.len() as u64,
            TABLE_DIAGNOSIS => self.diagnoses.len() as u64,
            TABLE_LAB => self.labs.len() as u64,
            TABLE_DISPENSING => self.meds.len() as u64,
            TABLE_DEATH => self.deaths.len() as u64,
            _ => 0,
        }
    }

    pub fn reject_count(&self, table: &str) -> u64 {
        self.rejects.iter().filter(|r| r.table == table).count() as u64
    }

    /// Serialize the rejects report with a fixed `(table, line_no, reason)` header.
    pub fn write_rejects_csv<W: std::io::Write>(&self, w: W) -> Result<(), CoreError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["table", "line_no", "reason"])?;
        for r in &self.rejects {
            wtr.write_record([r.table, &r.line_no.to_string(), &r.reason])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Field-level parsing helpers (all return a reject reason on failure)
// ---------------------------------------------------------------------------

fn parse_date(s: &str, field: &str) -> Result<NaiveDate, String> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| format!("unparseable date in {field}: '{s}'"))
}

fn parse_datetime(s: &str, field: &str) -> Result<NaiveDateTime, String> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .map_err(|_| format!("unparseable datetime in {field}: '{s}'"))
}

fn nonempty(s: &str, field: &str) -> Result<String, String> {
    if s.is_empty() {
        Err(format!("missing {field}"))
    } else {
        Ok(s.to_string())
    }
}

fn optional(s: &str) -> Option<String> {
    if s.is_empty() {
        None
    } else {
        Some(s.to_string())
    }
}

/// Header lookup for one table; built once, validated up front.
struct Cols {
    idx: HashMap<String, usize>,
}

impl Cols {
    fn new(headers: &StringRecord, required: &[&str], table: &'static str) -> Result<Self, CoreError> {
        let idx: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        for col in required {
            if !idx.contains_key(*col) {
                return Err(CoreError::MalformedTable {
                    table,
                    message: format!("missing column {col}"),
                });
            }
        }
        Ok(Cols { idx })
    }

    fn has(&self, name: &str) -> bool {
        self.idx.contains_key(name)
    }

    fn get<'r>(&self, rec: &'r StringRecord, name: &str) -> &'r str {
        self.idx
            .get(name)
            .and_then(|&i| rec.get(i))
            .map(str::trim)
            .unwrap_or("")
    }
}

/// Read one table, applying `parse` per record; parse failures become rejects.
fn read_table<T>(
    path: &Path,
    table: &'static str,
    required: &[&str],
    rejects: &mut Vec<RejectRow>,
    input_counts: &mut BTreeMap<&'static str, u64>,
    mut parse: impl FnMut(&Cols, &StringRecord) -> Result<T, String>,
) -> Result<Vec<T>, CoreError> {
    if !path.is_file() {
        return Err(CoreError::MissingTable(table));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| CoreError::MalformedTable { table, message: e.to_string() })?;
    let headers = rdr
        .headers()
        .map_err(|e| CoreError::MalformedTable { table, message: format!("unparseable header: {e}") })?
        .clone();
    let cols = Cols::new(&headers, required, table)?;

    let mut out = Vec::new();
    let mut count = 0u64;
    for rec in rdr.records() {
        count += 1;
        match rec {
            Ok(record) => {
                let line_no = record.position().map(|p| p.line()).unwrap_or(0);
                match parse(&cols, &record) {
                    Ok(row) => out.push(row),
                    Err(reason) => rejects.push(RejectRow { table, line_no, reason }),
                }
            }
            Err(e) => {
                let line_no = e.position().map(|p| p.line()).unwrap_or(0);
                rejects.push(RejectRow {
                    table,
                    line_no,
                    reason: format!("malformed row: {e}"),
                });
            }
        }
    }
    input_counts.insert(table, count);
    Ok(out)
}

fn parse_code_row(cols: &Cols, rec: &StringRecord) -> Result<ProcedureRow, String> {
    let code = nonempty(cols.get(rec, "code"), "code").map_err(|_| "empty code".to_string())?;
    let code_system = CodeSystem::parse(cols.get(rec, "code_system"))
        .ok_or_else(|| format!("unknown code_system '{}'", cols.get(rec, "code_system")))?;
    Ok(ProcedureRow {
        encounter_id: nonempty(cols.get(rec, "encounter_id"), "encounter_id")?,
        code,
        code_system,
        event_date: parse_date(cols.get(rec, "event_date"), "event_date")?,
        provider_specialty: optional(cols.get(rec, "provider_specialty")),
        provider_id: optional(cols.get(rec, "provider_id")),
    })
}

/// Load the seven raw tables from `dir`, collecting per-row problems into the
/// rejects report. Referential checks that need a second table (procedure →
/// encounter, lab → patient) run here too, so `RawTables` is internally
/// consistent; encounter → patient links are checked later by cohort assembly.
pub fn load_tables(dir: &Path) -> Result<RawTables, CoreError> {
    let mut t = RawTables::default();
    let mut rejects = Vec::new();
    let mut counts = BTreeMap::new();

    // DEMOGRAPHIC
    let demo_rows = read_table(
        &dir.join("DEMOGRAPHIC.csv"),
        TABLE_DEMOGRAPHIC,
        &["patient_id", "birth_date", "sex", "race", "ethnicity", "primary_language"],
        &mut rejects,
        &mut counts,
        |c, r| {
            Ok(DemographicRow {
                patient_id: nonempty(c.get(r, "patient_id"), "patient_id")?,
                birth_date: parse_date(c.get(r, "birth_date"), "birth_date")?,
                sex: Sex::parse(c.get(r, "sex"))
                    .ok_or_else(|| format!("unknown sex '{}'", c.get(r, "sex")))?,
                race: Race::parse(c.get(r, "race"))
                    .ok_or_else(|| format!("unknown race '{}'", c.get(r, "race")))?,
                ethnicity: Ethnicity::parse(c.get(r, "ethnicity"))
                    .ok_or_else(|| format!("unknown ethnicity '{}'", c.get(r, "ethnicity")))?,
                primary_language: Language::parse(c.get(r, "primary_language"))
                    .ok_or_else(|| format!("unknown primary_language '{}'", c.get(r, "primary_language")))?,
            })
        },
    )?;
    // Enforce patient_id uniqueness; later duplicates are rejected. Line
    // numbers for these post-parse rejects are reconstructed by position:
    // data row i lives on physical line i+2 (header is line 1).
    let mut seen = HashSet::new();
    for (i, row) in demo_rows.into_iter().enumerate() {
        if seen.insert(row.patient_id.clone()) {
            t.demographics.push(row);
        } else {
            rejects.push(RejectRow {
                table: TABLE_DEMOGRAPHIC,
                line_no: i as u64 + 2,
                reason: format!("duplicate patient_id '{}'", row.patient_id),
            });
        }
    }
    let patient_ids: HashSet<&str> = t.demographics.iter().map(|d| d.patient_id.as_str()).collect();

    // ENCOUNTER
    let enc_rows = read_table(
        &dir.join("ENCOUNTER.csv"),
        TABLE_ENCOUNTER,
        &[
            "encounter_id",
            "patient_id",
            "admit_datetime",
            "discharge_datetime",
            "encounter_type",
            "payer",
            "admission_source",
        ],
        &mut rejects,
        &mut counts,
        |c, r| {
            let admit = parse_datetime(c.get(r, "admit_datetime"), "admit_datetime")?;
            let discharge = parse_datetime(c.get(r, "discharge_datetime"), "discharge_datetime")?;
            if admit > discharge {
                return Err("admit after discharge".to_string());
            }
            // admit_at_night is derivable; an explicit column, when present,
            // takes precedence over the [19:00, 07:00) rule.
            let night = if c.has("admit_at_night") {
                match c.get(r, "admit_at_night") {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    "" => is_night(admit),
                    other => return Err(format!("unparseable admit_at_night '{other}'")),
                }
            } else {
                is_night(admit)
            };
            Ok(EncounterRow {
                encounter_id: nonempty(c.get(r, "encounter_id"), "encounter_id")?,
                patient_id: nonempty(c.get(r, "patient_id"), "patient_id")?,
                admit_datetime: admit,
                discharge_datetime: discharge,
                encounter_type: EncounterType::parse(c.get(r, "encounter_type"))
                    .ok_or_else(|| format!("unknown encounter_type '{}'", c.get(r, "encounter_type")))?,
                payer: Payer::parse(c.get(r, "payer"))
                    .ok_or_else(|| format!("unknown payer '{}'", c.get(r, "payer")))?,
                admission_source: AdmissionSource::parse(c.get(r, "admission_source"))
                    .ok_or_else(|| format!("unknown admission_source '{}'", c.get(r, "admission_source")))?,
                admit_at_night: night,
            })
        },
    )?;
    let mut seen = HashSet::new();
    for (i, row) in enc_rows.into_iter().enumerate() {
        if seen.insert(row.encounter_id.clone()) {
            t.encounters.push(row);
        } else {
            rejects.push(RejectRow {
                table: TABLE_ENCOUNTER,
                line_no: i as u64 + 2,
                reason: format!("duplicate encounter_id '{}'", row.encounter_id),
            });
        }
    }
    let encounter_window: HashMap<&str, (NaiveDate, NaiveDate)> = t
        .encounters
        .iter()
        .map(|e| {
            (
                e.encounter_id.as_str(),
                (e.admit_datetime.date(), e.discharge_datetime.date()),
            )
        })
        .collect();

    let check_code_row = |row: &ProcedureRow| -> Result<(), String> {
        let (admit, discharge) = encounter_window
            .get(row.encounter_id.as_str())
            .ok_or_else(|| format!("unknown encounter '{}'", row.encounter_id))?;
        let earliest = admit
            .checked_sub_days(Days::new(CODE_ROW_LOOKBACK_DAYS))
            .unwrap_or(NaiveDate::MIN);
        if row.event_date < earliest || row.event_date > *discharge {
            return Err("event date outside encounter window".to_string());
        }
        Ok(())
    };

    // PROCEDURES
    let proc_rows = read_table(
        &dir.join("PROCEDURES.csv"),
        TABLE_PROCEDURES,
        &["encounter_id", "code", "code_system", "event_date"],
        &mut rejects,
        &mut counts,
        parse_code_row,
    )?;
    for (i, row) in proc_rows.into_iter().enumerate() {
        match check_code_row(&row) {
            Ok(()) => t.procedures.push(row),
            Err(reason) => rejects.push(RejectRow { table: TABLE_PROCEDURES, line_no: i as u64 + 2, reason }),
        }
    }

    // DIAGNOSIS
    let dx_rows = read_table(
        &dir.join("DIAGNOSIS.csv"),
        TABLE_DIAGNOSIS,
        &["encounter_id", "code", "code_system", "event_date"],
        &mut rejects,
        &mut counts,
        parse_code_row,
    )?;
    for (i, row) in dx_rows.into_iter().enumerate() {
        match check_code_row(&row) {
            Ok(()) => t.diagnoses.push(DiagnosisRow {
                encounter_id: row.encounter_id,
                code: row.code,
                code_system: row.code_system,
                event_date: row.event_date,
                provider_specialty: row.provider_specialty,
                provider_id: row.provider_id,
            }),
            Err(reason) => rejects.push(RejectRow { table: TABLE_DIAGNOSIS, line_no: i as u64 + 2, reason }),
        }
    }

    // LAB_RESULT_CM
    let lab_rows = read_table(
        &dir.join("LAB_RESULT_CM.csv"),
        TABLE_LAB,
        &["patient_id", "analyte", "value", "taken_datetime"],
        &mut rejects,
        &mut counts,
        |c, r| {
            let raw = c.get(r, "value");
            let value: f64 = raw
                .parse()
                .map_err(|_| format!("unparseable number in value: '{raw}'"))?;
            if !value.is_finite() {
                return Err("non-finite value".to_string());
            }
            Ok(LabRow {
                patient_id: nonempty(c.get(r, "patient_id"), "patient_id")?,
                analyte: Analyte::parse(c.get(r, "analyte"))
                    .ok_or_else(|| format!("unknown analyte '{}'", c.get(r, "analyte")))?,
                value,
                taken_datetime: parse_datetime(c.get(r, "taken_datetime"), "taken_datetime")?,
            })
        },
    )?;
    for (i, row) in lab_rows.into_iter().enumerate() {
        if patient_ids.contains(row.patient_id.as_str()) {
            t.labs.push(row);
        } else {
            rejects.push(RejectRow {
                table: TABLE_LAB,
                line_no: i as u64 + 2,
                reason: format!("unknown patient '{}'", row.patient_id),
            });
        }
    }

    // DISPENSING
    let med_rows = read_table(
        &dir.join("DISPENSING.csv"),
        TABLE_DISPENSING,
        &["patient_id", "med_class", "dispense_date"],
        &mut rejects,
        &mut counts,
        |c, r| {
            Ok(MedRow {
                patient_id: nonempty(c.get(r, "patient_id"), "patient_id")?,
                med_class: MedClass::parse(c.get(r, "med_class"))
                    .ok_or_else(|| format!("unknown med_class '{}'", c.get(r, "med_class")))?,
                dispense_date: parse_date(c.get(r, "dispense_date"), "dispense_date")?,
            })
        },
    )?;
    for (i, row) in med_rows.into_iter().enumerate() {
        if patient_ids.contains(row.patient_id.as_str()) {
            t.meds.push(row);
        } else {
            rejects.push(RejectRow {
                table: TABLE_DISPENSING,
                line_no: i as u64 + 2,
                reason: format!("unknown patient '{}'", row.patient_id),
            });
        }
    }

    // DEATH
    let death_rows = read_table(
        &dir.join("DEATH.csv"),
        TABLE_DEATH,
        &["patient_id", "death_date"],
        &mut rejects,
        &mut counts,
        |c, r| {
            Ok(DeathRow {
                patient_id: nonempty(c.get(r, "patient_id"), "patient_id")?,
                death_date: parse_date(c.get(r, "death_date"), "death_date")?,
            })
        },
    )?;
    let mut seen = HashSet::new();
    for (i, row) in death_rows.into_iter().enumerate() {
        let line_no = i as u64 + 2;
        if !patient_ids.contains(row.patient_id.as_str()) {
            rejects.push(RejectRow {
                table: TABLE_DEATH,
                line_no,
                reason: format!("unknown patient '{}'", row.patient_id),
            });
        } else if !seen.insert(row.patient_id.clone()) {
            rejects.push(RejectRow {
                table: TABLE_DEATH,
                line_no,
                reason: format!("duplicate death record for patient '{}'", row.patient_id),
            });
        } else {
            t.deaths.push(row);
        }
    }

    t.rejects = rejects;
    t.input_counts = counts;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use tempfile::TempDir;

    fn write_fixture(dir: &Path, overrides: &[(&str, &str)]) {
        let mut files: BTreeMap<&str, String> = BTreeMap::new();
        files.insert(
            "DEMOGRAPHIC.csv",
            "patient_id,birth_date,sex,race,ethnicity,primary_language\n\
             p1,1960-04-02,female,white,non_hispanic,english\n\
             p2,1980-11-20,male,african_american,missing,other\n"
                .to_string(),
        );
        files.insert(
            "ENCOUNTER.csv",
            "encounter_id,patient_id,admit_datetime,discharge_datetime,encounter_type,payer,admission_source\n\
             e1,p1,2019-03-01T14:00:00,2019-03-10T11:00:00,IP,private,non_transfer\n\
             e2,p2,2019-06-05T22:30:00,2019-06-09T10:00:00,EI,medicare,transfer\n"
                .to_string(),
        );
        files.insert(
            "PROCEDURES.csv",
            "encounter_id,code,code_system,event_date,provider_specialty,provider_id\n\
             e1,27130,CPT,2019-03-02,orthopedics,doc9\n"
                .to_string(),
        );
        files.insert(
            "DIAGNOSIS.csv",
            "encounter_id,code,code_system,event_date,provider_specialty,provider_id\n\
             e1,I21.4,ICD10,2019-03-01,,\n"
                .to_string(),
        );
        files.insert(
            "LAB_RESULT_CM.csv",
            "patient_id,analyte,value,taken_datetime\n\
             p1,creatinine,1.1,2019-03-01T06:00:00\n"
                .to_string(),
        );
        files.insert(
            "DISPENSING.csv",
            "patient_id,med_class,dispense_date\np1,statin,2018-09-14\n".to_string(),
        );
        files.insert("DEATH.csv", "patient_id,death_date\n".to_string());
        for (name, content) in overrides {
            files.insert(name, content.to_string());
        }
        for (name, content) in &files {
            fs::write(dir.join(name), content).unwrap();
        }
    }

    #[test]
    fn empty_directory_reports_missing_demographic_first() {
        let dir = TempDir::new().unwrap();
        let err = load_tables(dir.path()).unwrap_err();
        assert_eq!(err.to_string(), "missing table DEMOGRAPHIC");
    }

    #[test]
    fn happy_path_parses_all_tables_with_zero_rejects() {
        let dir = TempDir::new().unwrap();
        write_fixture(dir.path(), &[]);
        let t = load_tables(dir.path()).unwrap();
        assert_eq!(t.demographics.len(), 2);
        assert_eq!(t.encounters.len(), 2);
        assert_eq!(t.procedures.len(), 1);
        assert_eq!(t.diagnoses.len(), 1);
        assert_eq!(t.labs.len(), 1);
        assert_eq!(t.meds.len(), 1);
        assert_eq!(t.deaths.len(), 0);
        assert!(t.rejects.is_empty());
        // e2 admits at 22:30 → night; e1 at 14:00 → day
        assert!(!t.encounters[0].admit_at_night);
        assert!(t.encounters[1].admit_at_night);
    }

    #[test]
    fn header_only_tables_parse_to_empty_vectors() {
        let dir = TempDir::new().unwrap();
        write_fixture(
            dir.path(),
            &[
                ("DEMOGRAPHIC.csv", "patient_id,birth_date,sex,race,ethnicity,primary_language\n"),
                (
                    "ENCOUNTER.csv",
                    "encounter_id,patient_id,admit_datetime,discharge_datetime,encounter_type,payer,admission_source\n",
                ),
                ("PROCEDURES.csv", "encounter_id,code,code_system,event_date\n"),
                ("DIAGNOSIS.csv", "encounter_id,code,code_system,event_date\n"),
                ("LAB_RESULT_CM.csv", "patient_id,analyte,value,taken_datetime\n"),
                ("DISPENSING.csv", "patient_id,med_class,dispense_date\n"),
            ],
        );
        let t = load_tables(dir.path()).unwrap();
        assert!(t.demographics.is_empty());
        assert!(t.rejects.is_empty());
        assert_eq!(t.input_counts[TABLE_DEMOGRAPHIC], 0);
    }

    #[test]
    fn nan_lab_value_rejected_with_exact_reason() {
        let dir = TempDir::new().unwrap();
        write_fixture(
            dir.path(),
            &[(
                "LAB_RESULT_CM.csv",
                "patient_id,analyte,value,taken_datetime\n\
                 p1,creatinine,NaN,2019-03-01T06:00:00\n\
                 p1,glucose,101.0,2019-03-01T06:00:00\n",
            )],
        );
        let t = load_tables(dir.path()).unwrap();
        assert_eq!(t.labs.len(), 1);
        let reject = t.rejects.iter().find(|r| r.table == TABLE_LAB).unwrap();
        assert_eq!(reject.reason, "non-finite value");
        assert_eq!(reject.line_no, 2);
    }

    #[test]
    fn missing_column_is_fatal() {
        let dir = TempDir::new().unwrap();
        write_fixture(
            dir.path(),
            &[("LAB_RESULT_CM.csv", "patient_id,analyte,taken_datetime\n")],
        );
        let err = load_tables(dir.path()).unwrap_err();
        assert!(err.to_string().contains("missing column value"), "{err}");
    }

    #[test]
    fn referential_and_invariant_rejects_are_accounted() {
        let dir = TempDir::new().unwrap();
        write_fixture(
            dir.path(),
            &[
                (
                    "PROCEDURES.csv",
                    "encounter_id,code,code_system,event_date,provider_specialty,provider_id\n\
                     e1,27130,CPT,2019-03-02,ortho,doc9\n\
                     ghost,99291,CPT,2019-03-02,,\n\
                     e1,44140,CPT,2017-01-01,,\n",
                ),
                (
                    "ENCOUNTER.csv",
                    "encounter_id,patient_id,admit_datetime,discharge_datetime,encounter_type,payer,admission_source\n\
                     e1,p1,2019-03-01T14:00:00,2019-03-10T11:00:00,IP,private,non_transfer\n\
                     e1,p1,2019-03-01T14:00:00,2019-03-10T11:00:00,IP,private,non_transfer\n\
                     e3,p2,2019-06-05T22:30:00,2019-06-01T10:00:00,EI,medicare,transfer\n",
                ),
                (
                    "DEATH.csv",
                    "patient_id,death_date\np1,2019-03-09\np1,2019-03-09\npx,2020-01-01\n",
                ),
            ],
        );
        let t = load_tables(dir.path()).unwrap();

        // duplicate encounter + admit-after-discharge
        assert_eq!(t.encounters.len(), 1);
        assert_eq!(t.reject_count(TABLE_ENCOUNTER), 2);
        assert!(t.rejects.iter().any(|r| r.reason == "admit after discharge"));

        // unknown encounter + out-of-window procedure
        assert_eq!(t.procedures.len(), 1);
        assert!(t.rejects.iter().any(|r| r.reason == "unknown encounter 'ghost'"));
        assert!(t.rejects.iter().any(|r| r.reason == "event date outside encounter window"));

        // duplicate death + unknown patient
        assert_eq!(t.deaths.len(), 1);
        assert_eq!(t.reject_count(TABLE_DEATH), 2);

        // no silent loss on any table
        for table in [
            TABLE_DEMOGRAPHIC,
            TABLE_ENCOUNTER,
            TABLE_PROCEDURES,
            TABLE_DIAGNOSIS,
            TABLE_LAB,
            TABLE_DISPENSING,
            TABLE_DEATH,
        ] {
            assert_eq!(
                t.retained_count(table) + t.reject_count(table),
                t.input_counts[table],
                "count mismatch for {table}"
            );
        }
    }

    #[test]
    fn explicit_admit_at_night_column_takes_precedence() {
        let dir = TempDir::new().unwrap();
        write_fixture(
            dir.path(),
            &[(
                "ENCOUNTER.csv",
                "encounter_id,patient_id,admit_datetime,discharge_datetime,encounter_type,payer,admission_source,admit_at_night\n\
                 e1,p1,2019-03-01T14:00:00,2019-03-10T11:00:00,IP,private,non_transfer,true\n",
            )],
        );
        let t = load_tables(dir.path()).unwrap();
        assert!(t.encounters[0].admit_at_night, "explicit column overrides the derived value");
    }

    #[test]
    fn rejects_csv_has_fixed_header() {
        let t = RawTables {
            rejects: vec![RejectRow { table: TABLE_LAB, line_no: 7, reason: "non-finite value".into() }],
            ..Default::default()
        };
        let mut buf = Vec::new();
        t.write_rejects_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "table,line_no,reason\nLAB_RESULT_CM,7,non-finite value\n");
    }
}
