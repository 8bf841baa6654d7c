//! Major-surgery classification from an RVU fee-schedule table and selection
//! of each encounter's single index surgery.
//!
//! A CPT code is major surgery when its fee-schedule row has an
//! intraoperative percentage greater than zero and a global period of "090".
//! Among an encounter's major-surgery codes, the index surgery is the one
//! with the maximum intraoperative work units (work RVU × intraoperative
//! percentage).

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::error::CoreError;
use crate::types::{CodeSystem, IndexSurgery, ProcedureRow};

pub const TABLE_RVU: &str = "RVU";

#[derive(Debug, Clone, PartialEq)]
pub struct RvuEntry {
    pub cpt: String,
    pub work_rvu: f64,
    /// Stored canonically as a fraction in [0, 1]; percent-style inputs
    /// (e.g. 70) are divided by 100 at load.
    pub intraop_pct: f64,
    pub global_period: String,
}

#[derive(Debug, Default)]
pub struct RvuTable {
    entries: HashMap<String, RvuEntry>,
}

impl RvuTable {
    pub fn from_entries(entries: Vec<RvuEntry>) -> Result<Self, CoreError> {
        let mut map = HashMap::with_capacity(entries.len());
        for mut e in entries {
            if e.intraop_pct > 1.0 {
                e.intraop_pct /= 100.0;
            }
            if !(0.0..=1.0).contains(&e.intraop_pct) {
                return Err(CoreError::MalformedTable {
                    table: TABLE_RVU,
                    message: format!("intraop_pct out of range for cpt '{}'", e.cpt),
                });
            }
            if !e.work_rvu.is_finite() || e.work_rvu < 0.0 {
                return Err(CoreError::MalformedTable {
                    table: TABLE_RVU,
                    message: format!("work_rvu must be non-negative for cpt '{}'", e.cpt),
                });
            }
            if map.contains_key(&e.cpt) {
                return Err(CoreError::MalformedTable {
                    table: TABLE_RVU,
                    message: format!("duplicate cpt '{}'", e.cpt),
                });
            }
            map.insert(e.cpt.clone(), e);
        }
        Ok(RvuTable { entries: map })
    }

    pub fn load_csv(path: &Path) -> Result<Self, CoreError> {
        if !path.is_file() {
            return Err(CoreError::MissingTable(TABLE_RVU));
        }
        let file = std::fs::File::open(path)?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self, CoreError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| CoreError::MalformedTable { table: TABLE_RVU, message: e.to_string() })?
            .clone();
        let col = |name: &str| -> Result<usize, CoreError> {
            headers.iter().position(|h| h == name).ok_or(CoreError::MalformedTable {
                table: TABLE_RVU,
                message: format!("missing column {name}"),
            })
        };
        let (ci, wi, ii, gi) = (col("cpt")?, col("work_rvu")?, col("intraop_pct")?, col("global_period")?);
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| CoreError::MalformedTable { table: TABLE_RVU, message: e.to_string() })?;
            let field = |i: usize| rec.get(i).unwrap_or("").to_string();
            let parse_num = |i: usize, name: &str| -> Result<f64, CoreError> {
                rec.get(i)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| CoreError::MalformedTable {
                        table: TABLE_RVU,
                        message: format!("unparseable {name}: '{}'", rec.get(i).unwrap_or("")),
                    })
            };
            entries.push(RvuEntry {
                cpt: field(ci),
                work_rvu: parse_num(wi, "work_rvu")?,
                intraop_pct: parse_num(ii, "intraop_pct")?,
                global_period: field(gi),
            });
        }
        Self::from_entries(entries)
    }

    pub fn get(&self, cpt: &str) -> Option<&RvuEntry> {
        self.entries.get(cpt)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn is_major_surgery(entry: &RvuEntry) -> bool {
    entry.intraop_pct > 0.0 && entry.global_period == "090"
}

/// Index-surgery selection outcome. `unknown_cpt_rows` counts CPT procedure
/// rows with no fee-schedule entry (the coverage diagnostic); such rows are
/// treated as non-major, never as errors.
#[derive(Debug, Clone, PartialEq)]
pub struct SurgerySelection {
    pub index: Option<IndexSurgery>,
    pub unknown_cpt_rows: u64,
}

/// Pick the major-surgery CPT with maximum work RVU × intraoperative
/// percentage. Exact ties break to the lexicographically smallest CPT, then
/// the earliest event date, then (for fully duplicated rows differing only in
/// provider fields) the smallest specialty/provider strings, making the
/// result independent of input row order.
pub fn select_index_surgery(procedures: &[ProcedureRow], rvu: &RvuTable) -> SurgerySelection {
    let mut unknown = 0u64;
    let mut best: Option<(f64, &ProcedureRow)> = None;
    for row in procedures {
        if row.code_system != CodeSystem::Cpt {
            continue;
        }
        let Some(entry) = rvu.get(&row.code) else {
            unknown += 1;
            continue;
        };
        if !is_major_surgery(entry) {
            continue;
        }
        let score = entry.work_rvu * entry.intraop_pct;
        let better = match best {
            None => true,
            Some((best_score, best_row)) => {
                if score != best_score {
                    score > best_score
                } else {
                    let a = (&row.code, row.event_date, &row.provider_specialty, &row.provider_id);
                    let b = (
                        &best_row.code,
                        best_row.event_date,
                        &best_row.provider_specialty,
                        &best_row.provider_id,
                    );
                    a < b
                }
            }
        };
        if better {
            best = Some((score, row));
        }
    }
    let index = best.map(|(score, row)| IndexSurgery {
        encounter_id: row.encounter_id.clone(),
        cpt: row.code.clone(),
        surgery_date: row.event_date,
        intraop_work_units: score,
        provider_specialty: row.provider_specialty.clone(),
        provider_id: row.provider_id.clone(),
    });
    SurgerySelection { index, unknown_cpt_rows: unknown }
}
