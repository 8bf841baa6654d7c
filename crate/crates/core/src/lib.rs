//! Clinical pipeline core: PCORnet-style CSV ingestion, cohort assembly,
//! index-surgery selection against an RVU fee schedule, postoperative
//! outcome phenotyping (ICU, mechanical ventilation, KDIGO AKI, mortality),
//! comorbidity profiling, the fixed 99-feature engineering layer, and the
//! smoothed log-odds target encoder.
//!
//! All per-encounter stages are data-parallel through `periop_par` when the
//! `parallel` feature (default) is enabled, with bit-identical results in
//! sequential builds.

pub mod cohort;
pub mod comorbidity;
pub mod encoder;
pub mod error;
pub mod features;
pub mod ingest;
pub mod phenotype;
pub mod rvu;
pub mod types;

pub use cohort::{build_cohort, temporal_split, CohortBuild};
pub use encoder::{encode, encode_matrix, fit_encoder, EncoderModel};
pub use error::CoreError;
pub use features::{
    build_raw_features, featurize_cohort, FeatureContext, FeatureSpecList, FeatureValue,
    FeatureVector, PlausibilityRanges,
};
pub use ingest::{load_tables, RawTables};
pub use phenotype::{label_cohort, KdigoConfig, OutcomeWindow, PhenotypeCodes};
pub use rvu::{is_major_surgery, select_index_surgery, RvuTable};
pub use types::{EncounterBundle, IndexSurgery, OutcomeLabels};

/// Embedded default configuration. Each artifact is plain CSV/JSON compiled
/// into the binary; deployments can override any of them with a file of the
/// same layout.
pub mod data {
    use crate::comorbidity::ComorbidityMaps;
    use crate::features::{FeatureSpecList, PlausibilityRanges};
    use crate::phenotype::PhenotypeCodes;

    pub const FEATURE_SPEC_CSV: &str = include_str!("../data/feature_spec.csv");
    pub const PLAUSIBILITY_RANGES_CSV: &str = include_str!("../data/plausibility_ranges.csv");
    pub const COMORBIDITY_MAPS_CSV: &str = include_str!("../data/comorbidity_maps.csv");
    pub const PHENOTYPE_CODES_JSON: &str = include_str!("../data/phenotype_codes.json");

    pub fn default_feature_spec() -> FeatureSpecList {
        FeatureSpecList::from_csv_str(FEATURE_SPEC_CSV).expect("embedded feature spec is valid")
    }

    pub fn default_plausibility_ranges() -> PlausibilityRanges {
        PlausibilityRanges::from_csv_str(PLAUSIBILITY_RANGES_CSV)
            .expect("embedded plausibility ranges are valid")
    }

    pub fn default_comorbidity_maps() -> ComorbidityMaps {
        ComorbidityMaps::from_csv_str(COMORBIDITY_MAPS_CSV)
            .expect("embedded comorbidity maps are valid")
    }

    pub fn default_phenotype_codes() -> PhenotypeCodes {
        PhenotypeCodes::from_json_str(PHENOTYPE_CODES_JSON)
            .expect("embedded phenotype codes are valid")
    }

}
