//! Static catalogs the generator draws from: the surgical CPT menu with its
//! fee-schedule fixture, diagnosis codes with their hand-derived condition
//! implications, lab value profiles, providers, and noise codes.

use periop_core::types::Analyte;

/// A major operation: CPT, work RVU, intraoperative fraction, specialty,
/// planted logit offset (the "procedure class" signal), and draw weight.
pub struct MajorCpt {
    pub cpt: &'static str,
    pub work_rvu: f64,
    pub intraop_pct: f64,
    pub specialty: &'static str,
    pub logit_offset: f64,
    pub weight: f64,
}

pub const MAJOR_CPTS: [MajorCpt; 10] = [
    MajorCpt { cpt: "27130", work_rvu: 20.72, intraop_pct: 0.75, specialty: "orthopedics", logit_offset: -0.8, weight: 0.20 },
    MajorCpt { cpt: "27447", work_rvu: 20.72, intraop_pct: 0.74, specialty: "orthopedics", logit_offset: -0.6, weight: 0.15 },
    MajorCpt { cpt: "44140", work_rvu: 22.59, intraop_pct: 0.78, specialty: "general_surgery", logit_offset: 0.5, weight: 0.12 },
    MajorCpt { cpt: "44204", work_rvu: 26.42, intraop_pct: 0.80, specialty: "general_surgery", logit_offset: 0.3, weight: 0.08 },
    MajorCpt { cpt: "33533", work_rvu: 33.75, intraop_pct: 0.83, specialty: "cardiothoracic", logit_offset: 1.5, weight: 0.07 },
    MajorCpt { cpt: "35301", work_rvu: 22.73, intraop_pct: 0.80, specialty: "vascular", logit_offset: 0.9, weight: 0.07 },
    MajorCpt { cpt: "60240", work_rvu: 14.05, intraop_pct: 0.75, specialty: "general_surgery", logit_offset: -0.4, weight: 0.08 },
    MajorCpt { cpt: "55866", work_rvu: 26.80, intraop_pct: 0.80, specialty: "urology", logit_offset: -0.2, weight: 0.08 },
    MajorCpt { cpt: "58150", work_rvu: 17.31, intraop_pct: 0.76, specialty: "gynecology", logit_offset: -0.5, weight: 0.08 },
    MajorCpt { cpt: "22612", work_rvu: 23.53, intraop_pct: 0.79, specialty: "neurosurgery", logit_offset: 0.7, weight: 0.07 },
];

/// Procedures kept in the fee schedule that never qualify as major surgery
/// (wrong global period or zero intraoperative share).
pub const MINOR_CPTS: [(&str, f64, f64, &str); 4] = [
    ("99213", 0.97, 0.00, "000"),
    ("12001", 1.06, 0.30, "000"),
    ("36556", 2.50, 0.40, "010"),
    ("43235", 3.80, 0.55, "000"),
];

/// A CPT deliberately absent from the fee schedule, for coverage counting.
pub const UNKNOWN_CPT: &str = "99999";

/// High-risk procedure classes for the 3-way interaction knob.
pub fn is_high_risk_cpt(cpt: &str) -> bool {
    matches!(cpt, "33533" | "35301" | "22612")
}

/// The fee-schedule fixture shipped next to the synthetic tables.
pub fn rvu_csv() -> String {
    let mut out = String::from("cpt,work_rvu,intraop_pct,global_period\n");
    for m in &MAJOR_CPTS {
        out.push_str(&format!("{},{},{},090\n", m.cpt, m.work_rvu, m.intraop_pct));
    }
    for (cpt, rvu, pct, global) in MINOR_CPTS {
        out.push_str(&format!("{cpt},{rvu},{pct},{global}\n"));
    }
    out
}

/// A plantable diagnosis: code, its conditions under the production prefix
/// maps (hand-derived, verified by test against the real matcher), and the
/// probability a patient carries it.
pub struct DxEntry {
    pub code: &'static str,
    pub conditions: &'static [&'static str],
    pub rate: f64,
}

/// All codes are ICD-10; rates are independent per-patient Bernoulli draws.
pub const CONDITION_MENU: [DxEntry; 28] = [
    DxEntry { code: "I21.4", conditions: &["mi"], rate: 0.07 },
    DxEntry { code: "I50.9", conditions: &["chf"], rate: 0.09 },
    DxEntry { code: "I73.9", conditions: &["pvd"], rate: 0.05 },
    DxEntry { code: "I63.50", conditions: &["cvd"], rate: 0.06 },
    DxEntry { code: "F03.90", conditions: &["dementia"], rate: 0.03 },
    DxEntry { code: "J44.1", conditions: &["chronic_pulmonary"], rate: 0.12 },
    DxEntry { code: "M05.79", conditions: &["rheumatic"], rate: 0.02 },
    DxEntry { code: "K25.9", conditions: &["pud"], rate: 0.02 },
    DxEntry { code: "B18.2", conditions: &["liver_mild"], rate: 0.03 },
    DxEntry { code: "K72.90", conditions: &["liver_severe"], rate: 0.01 },
    DxEntry { code: "E11.9", conditions: &["diabetes_uncomplicated"], rate: 0.14 },
    DxEntry { code: "E11.22", conditions: &["diabetes_complicated"], rate: 0.06 },
    DxEntry { code: "G81.90", conditions: &["hemiplegia"], rate: 0.015 },
    DxEntry { code: "C34.90", conditions: &["malignancy"], rate: 0.05 },
    DxEntry { code: "C78.7", conditions: &["metastatic"], rate: 0.02 },
    DxEntry { code: "B20", conditions: &["aids"], rate: 0.005 },
    DxEntry { code: "I35.0", conditions: &["valvular"], rate: 0.04 },
    DxEntry { code: "D68.9", conditions: &["coagulopathy"], rate: 0.02 },
    DxEntry { code: "R63.4", conditions: &["weight_loss"], rate: 0.02 },
    DxEntry { code: "F10.20", conditions: &["alcohol_abuse"], rate: 0.03 },
    DxEntry { code: "F11.20", conditions: &["drug_abuse"], rate: 0.015 },
    DxEntry { code: "E87.6", conditions: &["fluid_electrolyte"], rate: 0.06 },
    DxEntry { code: "D50.9", conditions: &["anemia_deficiency"], rate: 0.06 },
    DxEntry { code: "D50.0", conditions: &["anemia_blood_loss"], rate: 0.015 },
    DxEntry { code: "I10", conditions: &["hypertension_uncomplicated"], rate: 0.35 },
    DxEntry { code: "I15.0", conditions: &["hypertension_complicated"], rate: 0.06 },
    DxEntry { code: "E66.9", conditions: &["obesity"], rate: 0.12 },
    DxEntry { code: "F32.9", conditions: &["depression"], rate: 0.10 },
];

/// CKD staging codes (also ICD-10), one of which may be drawn per patient.
/// Each implies the Charlson "renal" condition and the unspecified catch-all
/// prefix alongside its explicit stage.
pub const CKD_MENU: [DxEntry; 4] = [
    DxEntry { code: "N18.2", conditions: &["ckd_stage_1_2", "ckd_unspecified", "renal"], rate: 0.03 },
    DxEntry { code: "N18.3", conditions: &["ckd_stage_3", "ckd_unspecified", "renal"], rate: 0.08 },
    DxEntry { code: "N18.4", conditions: &["ckd_stage_4", "ckd_unspecified", "renal"], rate: 0.03 },
    // stage 5 / ESRD is drawn from the configured esrd rate, not this table
    DxEntry { code: "N18.6", conditions: &["ckd_stage_5", "ckd_unspecified", "renal"], rate: 0.0 },
];

/// Diagnoses mapped to no condition, planted as noise.
pub const NOISE_DX: [&str; 4] = ["R51", "M54.5", "Z76.89", "H52.4"];

/// Per-analyte normal profiles (mean, sd, clip_low, clip_high), all inside
/// the plausibility ranges so the generator never creates accidental
/// removals.
pub const LAB_PROFILES: [(Analyte, f64, f64, f64, f64); 16] = [
    (Analyte::Hemoglobin, 12.8, 1.8, 5.0, 20.0),
    (Analyte::Calcium, 2.35, 0.20, 1.50, 3.20),
    (Analyte::AnionGap, 10.0, 3.0, -2.0, 28.0),
    (Analyte::Wbc, 8.5, 3.0, 1.5, 30.0),
    (Analyte::Hematocrit, 38.5, 5.0, 15.0, 60.0),
    (Analyte::Rbc, 4.6, 0.6, 2.0, 8.0),
    (Analyte::Mchc, 33.5, 1.5, 25.0, 42.0),
    (Analyte::Glucose, 118.0, 35.0, 50.0, 400.0),
    (Analyte::Co2, 24.0, 3.0, 10.0, 40.0),
    (Analyte::UreaNitrogen, 18.0, 7.0, 3.0, 80.0),
    (Analyte::Sodium, 139.0, 3.5, 120.0, 160.0),
    (Analyte::Potassium, 4.1, 0.5, 2.5, 7.0),
    (Analyte::Rdw, 14.0, 1.8, 10.0, 25.0),
    (Analyte::Platelets, 240.0, 60.0, 40.0, 800.0),
    (Analyte::Creatinine, 0.95, 0.20, 0.40, 2.20),
    (Analyte::Chloride, 103.0, 4.0, 85.0, 125.0),
];

/// Medication classes with their exposure probabilities.
pub const MED_RATES: [(periop_core::types::MedClass, f64); 11] = [
    (periop_core::types::MedClass::Betablocker, 0.22),
    (periop_core::types::MedClass::Diuretic, 0.18),
    (periop_core::types::MedClass::Statin, 0.30),
    (periop_core::types::MedClass::Aspirin, 0.25),
    (periop_core::types::MedClass::AceInhibitor, 0.20),
    (periop_core::types::MedClass::VasopressorInotrope, 0.02),
    (periop_core::types::MedClass::Bicarbonate, 0.03),
    (periop_core::types::MedClass::Antiemetic, 0.12),
    (periop_core::types::MedClass::Aminoglycoside, 0.03),
    (periop_core::types::MedClass::Vancomycin, 0.05),
    (periop_core::types::MedClass::Nephrotoxic, 0.08),
];

pub const N_PROVIDERS: usize = 40;

pub fn provider_id(index: usize) -> String {
    format!("d{:03}", index % N_PROVIDERS)
}
