//! Generator configuration: cohort size, planted logistic outcome models,
//! prevalence targets, and injection rates for malformed/implausible data.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::SynthError;

/// Per-outcome logistic coefficients over the planted risk quantities. The
/// linear score is
/// `intercept + cpt_scale·cpt_offset + age_per_decade·(age−60)/10 +
///  baseline_creatinine·(scr−1.0) + provider_offset`
/// with the intercept calibrated by bisection to hit the prevalence target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogitCoeffs {
    pub cpt_scale: f64,
    pub age_per_decade: f64,
    pub baseline_creatinine: f64,
    /// Standard deviation of per-provider random offsets (0 disables them).
    pub provider_sigma: f64,
    /// Multiplier applied to the non-intercept score for male patients;
    /// values < 1 plant a weaker signal in men than in women.
    pub male_signal_scale: f64,
    /// Extra logit mass for encounters that are simultaneously older than
    /// 65, male, and carrying a high-risk procedure (a 3-way interaction).
    pub interaction_boost: f64,
}

impl Default for LogitCoeffs {
    fn default() -> Self {
        LogitCoeffs {
            cpt_scale: 1.0,
            age_per_decade: 0.45,
            baseline_creatinine: 1.2,
            provider_sigma: 0.0,
            male_signal_scale: 1.0,
            interaction_boost: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrevalenceTargets {
    pub icu: f64,
    pub mv: f64,
    pub aki: f64,
    pub mortality: f64,
}

impl Default for PrevalenceTargets {
    fn default() -> Self {
        PrevalenceTargets { icu: 0.09, mv: 0.045, aki: 0.07, mortality: 0.01 }
    }
}

/// Probabilities of the structural arms each patient/encounter can fall
/// into. All are independent per-entity draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmRates {
    /// Encounter is outpatient/other → excluded as non-inpatient.
    pub non_inpatient: f64,
    /// Patient is a minor → excluded as under 18.
    pub under_18: f64,
    /// Encounter carries only minor procedures → excluded, no major surgery.
    pub no_major_surgery: f64,
    /// Patient carries an ESRD diagnosis before surgery → AKI unlabeled.
    pub esrd: f64,
    /// No creatinine anywhere → AKI unlabeled.
    pub no_creatinine: f64,
    /// Creatinine only in the historical window → baseline from the mean.
    pub hist_only_baseline: f64,
    /// No pre-surgical creatinine at all → baseline back-calculated at the
    /// reference eGFR (postoperative values still exist).
    pub imputed_baseline: f64,
    pub unknown_sex: f64,
    pub missing_race: f64,
    pub missing_language: f64,
    pub missing_payer: f64,
    pub missing_vitals: f64,
    pub transfer_admission: f64,
    /// Extra procedure row with a CPT absent from the fee schedule.
    pub unknown_cpt_row: f64,
}

impl Default for ArmRates {
    fn default() -> Self {
        ArmRates {
            non_inpatient: 0.05,
            under_18: 0.03,
            no_major_surgery: 0.05,
            esrd: 0.05,
            no_creatinine: 0.02,
            hist_only_baseline: 0.05,
            imputed_baseline: 0.03,
            unknown_sex: 0.01,
            missing_race: 0.06,
            missing_language: 0.05,
            missing_payer: 0.03,
            missing_vitals: 0.04,
            transfer_admission: 0.12,
            unknown_cpt_row: 0.02,
        }
    }
}

/// Deliberate data-quality injections, counted exactly in the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Injections {
    /// Lab rows with an unparseable value ("NaN" or garbage); rejected at
    /// ingestion.
    pub malformed_lab_rows: u32,
    /// Finite but physiologically impossible lab values; they parse but are
    /// removed by plausibility cleaning.
    pub implausible_lab_values: u32,
}

impl Default for Injections {
    fn default() -> Self {
        Injections { malformed_lab_rows: 5, implausible_lab_values: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Total patients. The first `n_encounters` patients each get exactly one
    /// index-candidate encounter; the remainder exist only in DEMOGRAPHIC.
    pub n_patients: usize,
    pub n_encounters: usize,
    pub seed: u64,
    pub date_start: NaiveDate,
    pub date_end: NaiveDate,
    pub prevalence: PrevalenceTargets,
    pub coeffs_icu: LogitCoeffs,
    pub coeffs_mv: LogitCoeffs,
    pub coeffs_aki: LogitCoeffs,
    pub coeffs_mortality: LogitCoeffs,
    pub rates: ArmRates,
    pub injections: Injections,
    /// Additive intercept drift applied to encounters admitted in the last
    /// 30% of the date range (0 disables).
    pub temporal_drift: f64,
    /// How many cohort encounters get a stored expected feature vector
    /// (`None` = all of them).
    pub expected_feature_sample: Option<usize>,
    /// Monte-Carlo pairs for the stored Bayes AUROC estimate.
    pub bayes_mc_pairs: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 2_050,
            n_encounters: 2_000,
            seed: 42,
            date_start: NaiveDate::from_ymd_opt(2012, 1, 1).unwrap(),
            date_end: NaiveDate::from_ymd_opt(2023, 6, 30).unwrap(),
            prevalence: PrevalenceTargets::default(),
            coeffs_icu: LogitCoeffs { cpt_scale: 1.0, ..LogitCoeffs::default() },
            coeffs_mv: LogitCoeffs { cpt_scale: 1.1, ..LogitCoeffs::default() },
            coeffs_aki: LogitCoeffs {
                cpt_scale: 0.8,
                baseline_creatinine: 1.6,
                ..LogitCoeffs::default()
            },
            coeffs_mortality: LogitCoeffs { cpt_scale: 1.2, ..LogitCoeffs::default() },
            rates: ArmRates::default(),
            injections: Injections::default(),
            temporal_drift: 0.0,
            expected_feature_sample: None,
            bayes_mc_pairs: 1_000_000,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_encounters == 0 {
            return Err(SynthError::Config("n_encounters must be positive".into()));
        }
        if self.n_patients < self.n_encounters {
            return Err(SynthError::Config(format!(
                "n_patients ({}) must be at least n_encounters ({}): one index encounter per patient",
                self.n_patients, self.n_encounters
            )));
        }
        if self.date_start >= self.date_end {
            return Err(SynthError::Config("date_start must precede date_end".into()));
        }
        for (name, p) in [
            ("icu", self.prevalence.icu),
            ("mv", self.prevalence.mv),
            ("aki", self.prevalence.aki),
            ("mortality", self.prevalence.mortality),
        ] {
            if !(p > 0.0 && p < 1.0) {
                return Err(SynthError::Config(format!(
                    "prevalence target for {name} must be in (0, 1), got {p}"
                )));
            }
        }
        let rates = [
            self.rates.non_inpatient,
            self.rates.under_18,
            self.rates.no_major_surgery,
            self.rates.esrd,
            self.rates.no_creatinine,
            self.rates.hist_only_baseline,
            self.rates.imputed_baseline,
            self.rates.unknown_sex,
            self.rates.missing_race,
            self.rates.missing_language,
            self.rates.missing_payer,
            self.rates.missing_vitals,
            self.rates.transfer_admission,
            self.rates.unknown_cpt_row,
        ];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(SynthError::Config("all arm rates must lie in [0, 1]".into()));
        }
        if self.bayes_mc_pairs == 0 {
            return Err(SynthError::Config("bayes_mc_pairs must be positive".into()));
        }
        Ok(())
    }

    pub fn coeffs_for(&self, outcome: Outcome) -> &LogitCoeffs {
        match outcome {
            Outcome::Icu => &self.coeffs_icu,
            Outcome::Mv => &self.coeffs_mv,
            Outcome::Aki => &self.coeffs_aki,
            Outcome::Mortality => &self.coeffs_mortality,
        }
    }

    pub fn prevalence_for(&self, outcome: Outcome) -> f64 {
        match outcome {
            Outcome::Icu => self.prevalence.icu,
            Outcome::Mv => self.prevalence.mv,
            Outcome::Aki => self.prevalence.aki,
            Outcome::Mortality => self.prevalence.mortality,
        }
    }
}

/// The four modeled outcomes, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Icu,
    Mv,
    Aki,
    Mortality,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [Outcome::Icu, Outcome::Mv, Outcome::Aki, Outcome::Mortality];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Icu => "icu",
            Outcome::Mv => "mv",
            Outcome::Aki => "aki",
            Outcome::Mortality => "mortality",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "icu" => Some(Outcome::Icu),
            "mv" => Some(Outcome::Mv),
            "aki" => Some(Outcome::Aki),
            "mortality" => Some(Outcome::Mortality),
            _ => None,
        }
    }
}
