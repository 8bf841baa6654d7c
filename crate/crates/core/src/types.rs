//! Domain types for the raw EHR extracts and the assembled cohort.
//!
//! All calendar fields are timezone-naive: the source extracts carry local
//! timestamps without offsets, and every windowing rule in the pipeline is
//! defined on dates or local datetimes.

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Male,
    Female,
    Unknown,
}

impl Sex {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "male" => Some(Sex::Male),
            "female" => Some(Sex::Female),
            "unknown" | "" => Some(Sex::Unknown),
            _ => None,
        }
    }
    pub fn as_str(&self) -> &'static str {
        match self {
            Sex::Male => "male",
            Sex::Female => "female",
            Sex::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Race {
    White,
    AfricanAmerican,
    Other,
    Missing,
}

impl Race {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "white" => Some(Race::White),
            "african_american" => Some(Race::AfricanAmerican),
            "other" => Some(Race::Other),
            "missing" | "" => Some(Race::Missing),
            _ => None,
        }
    }
    pub fn as_str(&self) -> &'static str {
        match self {
            Race::White => "white",
            Race::AfricanAmerican => "african_american",
            Race::Other => "other",
            Race::Missing => "missing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ethnicity {
    Hispanic,
    NonHispanic,
    Missing,
}

impl Ethnicity {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hispanic" => Some(Ethnicity::Hispanic),
            "non_hispanic" => Some(Ethnicity::NonHispanic),
            "missing" | "" => Some(Ethnicity::Missing),
            _ => None,
        }
    }
    pub fn as_str(&self) -> &'static str {
        match self {
            Ethnicity::Hispanic => "hispanic",
            Ethnicity::NonHispanic => "non_hispanic",
            Ethnicity::Missing => "missing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Language {
    English,
    Other,
    Missing,
}

impl Language {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "english" => Some(Language::English),
            "other" => Some(Language::Other),
            "missing" | "" => Some(Language::Missing),
            _ => None,
        }
    }
    pub fn as_str(&self) -> &'static str {
        match self {
            Language::English => "english",
            Language::Other => "other",
            Language::Missing => "missing",
        }
    }
}

/// PCORnet-style encounter types. `EI` (emergency-to-inpatient), `IP`
/// (inpatient) and `OS` (observation stay) admissions are cohort-eligible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncounterType {
    Ei,
    Ip,
    Os,
    Outpatient,
    Other,
}

impl EncounterType {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "EI" => Some(EncounterType::Ei),
            "IP" => Some(EncounterType::Ip),
            "OS" => Some(EncounterType::Os),
            "outpatient" => Some(EncounterType::Outpatient),
            "other" => Some(EncounterType::Other),
            _ => None,
        }
    }
    pub fn as_str(&self) -> &'static str {
        match self {
            EncounterType::Ei => "EI",
            EncounterType::Ip => "IP",
            EncounterType::Os => "OS",
            EncounterType::Outpatient => "outpatient",
            EncounterType::Other => "other",
        }
    }
    /// Inpatient-like types retained by cohort assembly.
    pub fn is_cohort_eligible(&self) -> bool {
        matches!(self, EncounterType::Ei | EncounterType::Ip | EncounterType::Os)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payer {
    Private,
    Medicare,
    Medicaid,
    Uninsured,
    Missing,
}

impl Payer {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "private" => Some(Payer::Private),
            "medicare" => Some(Payer::Medicare),
            "medicaid" => Some(Payer::Medicaid),
            "uninsured" => Some(Payer::Uninsured),
            "missing" | "" => Some(Payer::Missing),
            _ => None,
        }
    }
    pub fn as_str(&self) -> &'static str {
        match self {
            Payer::Private => "private",
            Payer::Medicare => "medicare",
            Payer::Medicaid => "medicaid",
            Payer::Uninsured => "uninsured",
            Payer::Missing => "missing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdmissionSource {
    Transfer,
    NonTransfer,
    Missing,
}

impl AdmissionSource {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "transfer" => Some(AdmissionSource::Transfer),
            "non_transfer" => Some(AdmissionSource::NonTransfer),
            "missing" | "" => Some(AdmissionSource::Missing),
            _ => None,
        }
    }
    pub fn as_str(&self) -> &'static str {
        match self {
            AdmissionSource::Transfer => "transfer",
            AdmissionSource::NonTransfer => "non_transfer",
            AdmissionSource::Missing => "missing",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeSystem {
    Cpt,
    Icd9,
    Icd10,
    Other,
}

impl CodeSystem {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "CPT" => Some(CodeSystem::Cpt),
            "ICD9" => Some(CodeSystem::Icd9),
            "ICD10" => Some(CodeSystem::Icd10),
            "OTHER" | "" => Some(CodeSystem::Other),
            _ => None,
        }
    }
    pub fn as_str(&self) -> &'static str {
        match self {
            CodeSystem::Cpt => "CPT",
            CodeSystem::Icd9 => "ICD9",
            CodeSystem::Icd10 => "ICD10",
            CodeSystem::Other => "OTHER",
        }
    }
}

/// The lab panel used by the feature windows, plus `Height`/`Weight` rows
/// which exist solely to compute BMI and never enter the panel statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analyte {
    Hemoglobin,
    Calcium,
    AnionGap,
    Wbc,
    Hematocrit,
    Rbc,
    Mchc,
    Glucose,
    Co2,
    UreaNitrogen,
    Sodium,
    Potassium,
    Rdw,
    Platelets,
    Creatinine,
    Chloride,
    Height,
    Weight,
}

impl Analyte {
    pub const ALL: [Analyte; 18] = [
        Analyte::Hemoglobin,
        Analyte::Calcium,
        Analyte::AnionGap,
        Analyte::Wbc,
        Analyte::Hematocrit,
        Analyte::Rbc,
        Analyte::Mchc,
        Analyte::Glucose,
        Analyte::Co2,
        Analyte::UreaNitrogen,
        Analyte::Sodium,
        Analyte::Potassium,
        Analyte::Rdw,
        Analyte::Platelets,
        Analyte::Creatinine,
        Analyte::Chloride,
        Analyte::Height,
        Analyte::Weight,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "hemoglobin" => Some(Analyte::Hemoglobin),
            "calcium" => Some(Analyte::Calcium),
            "anion_gap" => Some(Analyte::AnionGap),
            "wbc" => Some(Analyte::Wbc),
            "hematocrit" => Some(Analyte::Hematocrit),
            "rbc" => Some(Analyte::Rbc),
            "mchc" => Some(Analyte::Mchc),
            "glucose" => Some(Analyte::Glucose),
            "co2" => Some(Analyte::Co2),
            "urea_nitrogen" => Some(Analyte::UreaNitrogen),
            "sodium" => Some(Analyte::Sodium),
            "potassium" => Some(Analyte::Potassium),
            "rdw" => Some(Analyte::Rdw),
            "platelets" => Some(Analyte::Platelets),
            "creatinine" => Some(Analyte::Creatinine),
            "chloride" => Some(Analyte::Chloride),
            "height" => Some(Analyte::Height),
            "weight" => Some(Analyte::Weight),
            _ => None,
        }
    }
    pub fn as_str(&self) -> &'static str {
        match self {
            Analyte::Hemoglobin => "hemoglobin",
            Analyte::Calcium => "calcium",
            Analyte::AnionGap => "anion_gap",
            Analyte::Wbc => "wbc",
            Analyte::Hematocrit => "hematocrit",
            Analyte::Rbc => "rbc",
            Analyte::Mchc => "mchc",
            Analyte::Glucose => "glucose",
            Analyte::Co2 => "co2",
            Analyte::UreaNitrogen => "urea_nitrogen",
            Analyte::Sodium => "sodium",
            Analyte::Potassium => "potassium",
            Analyte::Rdw => "rdw",
            Analyte::Platelets => "platelets",
            Analyte::Creatinine => "creatinine",
            Analyte::Chloride => "chloride",
            Analyte::Height => "height",
            Analyte::Weight => "weight",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MedClass {
    Betablocker,
    Diuretic,
    Statin,
    Aspirin,
    AceInhibitor,
    VasopressorInotrope,
    Bicarbonate,
    Antiemetic,
    Aminoglycoside,
    Vancomycin,
    Nephrotoxic,
}

impl MedClass {
    pub const ALL: [MedClass; 11] = [
        MedClass::Betablocker,
        MedClass::Diuretic,
        MedClass::Statin,
        MedClass::Aspirin,
        MedClass::AceInhibitor,
        MedClass::VasopressorInotrope,
        MedClass::Bicarbonate,
        MedClass::Antiemetic,
        MedClass::Aminoglycoside,
        MedClass::Vancomycin,
        MedClass::Nephrotoxic,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "betablocker" => Some(MedClass::Betablocker),
            "diuretic" => Some(MedClass::Diuretic),
            "statin" => Some(MedClass::Statin),
            "aspirin" => Some(MedClass::Aspirin),
            "ace_inhibitor" => Some(MedClass::AceInhibitor),
            "vasopressor_inotrope" => Some(MedClass::VasopressorInotrope),
            "bicarbonate" => Some(MedClass::Bicarbonate),
            "antiemetic" => Some(MedClass::Antiemetic),
            "aminoglycoside" => Some(MedClass::Aminoglycoside),
            "vancomycin" => Some(MedClass::Vancomycin),
            "nephrotoxic" => Some(MedClass::Nephrotoxic),
            _ => None,
        }
    }
    pub fn as_str(&self) -> &'static str {
        match self {
            MedClass::Betablocker => "betablocker",
            MedClass::Diuretic => "diuretic",
            MedClass::Statin => "statin",
            MedClass::Aspirin => "aspirin",
            MedClass::AceInhibitor => "ace_inhibitor",
            MedClass::VasopressorInotrope => "vasopressor_inotrope",
            MedClass::Bicarbonate => "bicarbonate",
            MedClass::Antiemetic => "antiemetic",
            MedClass::Aminoglycoside => "aminoglycoside",
            MedClass::Vancomycin => "vancomycin",
            MedClass::Nephrotoxic => "nephrotoxic",
        }
    }
}

// ---------------------------------------------------------------------------
// Raw table rows
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicRow {
    pub patient_id: String,
    pub birth_date: NaiveDate,
    pub sex: Sex,
    pub race: Race,
    pub ethnicity: Ethnicity,
    pub primary_language: Language,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterRow {
    pub encounter_id: String,
    pub patient_id: String,
    pub admit_datetime: NaiveDateTime,
    pub discharge_datetime: NaiveDateTime,
    pub encounter_type: EncounterType,
    pub payer: Payer,
    pub admission_source: AdmissionSource,
    pub admit_at_night: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureRow {
    pub encounter_id: String,
    pub code: String,
    pub code_system: CodeSystem,
    pub event_date: NaiveDate,
    pub provider_specialty: Option<String>,
    pub provider_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisRow {
    pub encounter_id: String,
    pub code: String,
    pub code_system: CodeSystem,
    pub event_date: NaiveDate,
    pub provider_specialty: Option<String>,
    pub provider_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabRow {
    pub patient_id: String,
    pub analyte: Analyte,
    pub value: f64,
    pub taken_datetime: NaiveDateTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedRow {
    pub patient_id: String,
    pub med_class: MedClass,
    pub dispense_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeathRow {
    pub patient_id: String,
    pub death_date: NaiveDate,
}

// ---------------------------------------------------------------------------
// Assembled cohort
// ---------------------------------------------------------------------------

/// The single surgery chosen for an encounter: the major-surgery CPT with the
/// maximum intraoperative work units. Specialty and provider come from the
/// winning procedure row; the feature builder consumes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexSurgery {
    pub encounter_id: String,
    pub cpt: String,
    pub surgery_date: NaiveDate,
    pub intraop_work_units: f64,
    pub provider_specialty: Option<String>,
    pub provider_id: Option<String>,
}

/// One retained encounter with everything downstream stages need, assembled
/// once and treated as read-only shared data afterwards.
///
/// `dx_history` holds every diagnosis row of the patient across all their
/// encounters (the comorbidity lookback spans prior admissions); `diagnoses`
/// and `procedures` hold only this encounter's rows (the outcome windows).
/// `labs` and `meds` are patient-level and unfiltered; window rules are
/// applied at use sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterBundle {
    pub encounter: EncounterRow,
    pub demographics: DemographicRow,
    pub procedures: Vec<ProcedureRow>,
    pub diagnoses: Vec<DiagnosisRow>,
    pub dx_history: Vec<DiagnosisRow>,
    pub labs: Vec<LabRow>,
    pub meds: Vec<MedRow>,
    pub death_date: Option<NaiveDate>,
    pub index_surgery: IndexSurgery,
}

impl EncounterBundle {
    pub fn encounter_id(&self) -> &str {
        &self.encounter.encounter_id
    }
    pub fn surgery_date(&self) -> NaiveDate {
        self.index_surgery.surgery_date
    }
    pub fn discharge_date(&self) -> NaiveDate {
        self.encounter.discharge_datetime.date()
    }
    pub fn admit_date(&self) -> NaiveDate {
        self.encounter.admit_datetime.date()
    }
}

/// The four outcome labels for one index surgery. `aki` is absent for
/// ESRD-excluded encounters and for encounters where no baseline creatinine
/// or no postoperative creatinine exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeLabels {
    pub icu_need: bool,
    pub mv_need: bool,
    pub aki: Option<bool>,
    pub mortality: bool,
}

/// Chronological train/validation split over encounter ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSplit {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub split_instant: NaiveDateTime,
}

// ---------------------------------------------------------------------------
// Small shared helpers
// ---------------------------------------------------------------------------

/// Whole-year age by calendar arithmetic: the age increments on the birthday,
/// with Feb 29 birthdays incrementing on Mar 1 of non-leap years.
pub fn age_at(birth: NaiveDate, as_of: NaiveDate) -> i32 {
    let mut age = as_of.year() - birth.year();
    if (as_of.month(), as_of.day()) < (birth.month(), birth.day()) {
        age -= 1;
    }
    age
}

/// Night admission window: admit time in [19:00, 07:00).
pub fn is_night(dt: NaiveDateTime) -> bool {
    let h = dt.hour();
    h >= 19 || h < 7
}
