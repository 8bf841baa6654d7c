//! End-to-end agreement between the generator's ground truth and the
//! production pipeline: every tally, label, and feature value the pipeline
//! derives from the emitted CSVs must match what the generator recorded.

use std::collections::BTreeMap;

use periop_core::cohort::build_cohort;
use periop_core::data::{
    default_comorbidity_maps, default_feature_spec, default_phenotype_codes,
    default_plausibility_ranges,
};
use periop_core::features::{featurize_cohort, FeatureContext, FeatureValue};
use periop_core::ingest::{
    load_tables, TABLE_DEATH, TABLE_DEMOGRAPHIC, TABLE_DIAGNOSIS, TABLE_DISPENSING,
    TABLE_ENCOUNTER, TABLE_LAB, TABLE_PROCEDURES,
};
use periop_core::phenotype::{label_cohort, KdigoConfig};
use periop_core::rvu::RvuTable;
use periop_synth::{generate, SynthConfig};

fn small_config() -> SynthConfig {
    let mut cfg = SynthConfig::default();
    cfg.n_encounters = 600;
    cfg.n_patients = 650;
    cfg.bayes_mc_pairs = 200_000;
    cfg
}

#[test]
fn generation_is_deterministic_byte_for_byte() {
    let mut cfg = small_config();
    cfg.n_encounters = 120;
    cfg.n_patients = 130;
    cfg.bayes_mc_pairs = 20_000;

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    generate(&cfg, dir_a.path()).unwrap();
    generate(&cfg, dir_b.path()).unwrap();

    let mut names: Vec<String> = std::fs::read_dir(dir_a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 9, "seven tables + RVU.csv + ground_truth.json");
    for name in names {
        let a = std::fs::read(dir_a.path().join(&name)).unwrap();
        let b = std::fs::read(dir_b.path().join(&name)).unwrap();
        assert_eq!(a, b, "{name} differs between two runs of the same config");
    }
}

#[test]
fn clean_config_produces_no_rejects_and_full_cohort() {
    let mut cfg = small_config();
    cfg.n_encounters = 150;
    cfg.n_patients = 150;
    cfg.bayes_mc_pairs = 20_000;
    cfg.rates.non_inpatient = 0.0;
    cfg.rates.under_18 = 0.0;
    cfg.rates.no_major_surgery = 0.0;
    cfg.rates.unknown_cpt_row = 0.0;
    cfg.injections.malformed_lab_rows = 0;
    cfg.injections.implausible_lab_values = 0;

    let dir = tempfile::tempdir().unwrap();
    let truth = generate(&cfg, dir.path()).unwrap();
    assert_eq!(truth.cohort_size, 150);
    assert_eq!(truth.counts.orphan_encounters, 0);

    let raw = load_tables(dir.path()).unwrap();
    assert!(raw.rejects.is_empty(), "unexpected rejects: {:?}", raw.rejects);

    let rvu = RvuTable::load_csv(&dir.path().join("RVU.csv")).unwrap();
    let build = build_cohort(&raw, &rvu);
    assert!(build.rejects.is_empty(), "unexpected cohort rejects: {:?}", build.rejects);
    assert_eq!(build.bundles.len(), 150);
    // the 150 planted outpatient history visits are the only exclusions
    assert_eq!(build.exclusions.non_inpatient, 150);
    assert_eq!(build.exclusions.under_18, 0);
    assert_eq!(build.exclusions.no_major_surgery, 0);
    assert_eq!(build.unknown_cpt_rows, 0);
}

#[test]
fn production_pipeline_reproduces_ground_truth() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let truth = generate(&cfg, dir.path()).unwrap();

    // ---- ingest: only the injected malformed rows reject ------------------
    let raw = load_tables(dir.path()).unwrap();
    for table in [
        TABLE_DEMOGRAPHIC,
        TABLE_ENCOUNTER,
        TABLE_PROCEDURES,
        TABLE_DIAGNOSIS,
        TABLE_DISPENSING,
        TABLE_DEATH,
    ] {
        assert_eq!(raw.reject_count(table), 0, "unexpected rejects in {table}");
    }
    assert_eq!(raw.reject_count(TABLE_LAB), truth.counts.malformed_lab_rows);
    assert!(raw
        .rejects
        .iter()
        .all(|r| r.reason.contains("unparseable number") || r.reason == "non-finite value"));

    // ---- plausibility cleaning matches the injected counts ----------------
    let ranges = default_plausibility_ranges();
    let (_, removed) = ranges.clean_labs(&raw.labs);
    let removed_by_name: BTreeMap<String, u64> =
        removed.iter().map(|(a, n)| (a.as_str().to_string(), *n)).collect();
    assert_eq!(removed_by_name, truth.counts.implausible_lab_values);

    // ---- cohort assembly matches the planted structure --------------------
    let rvu = RvuTable::load_csv(&dir.path().join("RVU.csv")).unwrap();
    let build = build_cohort(&raw, &rvu);
    assert_eq!(build.exclusions.non_inpatient, truth.counts.excluded_non_inpatient);
    assert_eq!(build.exclusions.under_18, truth.counts.excluded_under_18);
    assert_eq!(build.exclusions.no_major_surgery, truth.counts.excluded_no_major_surgery);
    assert_eq!(build.unknown_cpt_rows, truth.counts.unknown_cpt_rows);
    assert_eq!(build.rejects.len() as u64, truth.counts.orphan_encounters);
    assert_eq!(build.bundles.len(), truth.cohort_size);
    for bundle in &build.bundles {
        let t = truth.truth_for(&bundle.encounter.encounter_id).expect("bundle is in the truth");
        assert!(t.in_cohort, "{} retained but truth excludes it", bundle.encounter.encounter_id);
    }

    // ---- phenotyping matches the oracle-verified labels -------------------
    let codes = default_phenotype_codes();
    let kdigo = KdigoConfig::default();
    let labels = label_cohort(&build.bundles, &codes, &kdigo, &ranges);
    let mut esrd_in_cohort = 0usize;
    for (bundle, got) in build.bundles.iter().zip(&labels) {
        let t = truth.truth_for(&bundle.encounter.encounter_id).unwrap();
        let want = t.labels.expect("retained encounters carry truth labels");
        assert_eq!(*got, want, "labels diverge on {}", bundle.encounter.encounter_id);
        if t.esrd {
            esrd_in_cohort += 1;
            assert_eq!(got.aki, None, "ESRD must stay unlabeled for AKI");
        }
    }
    assert!(esrd_in_cohort > 0, "config should plant ESRD patients in the cohort");

    // ---- realized prevalence sits near its calibration target -------------
    for (name, target) in
        [("icu", cfg.prevalence.icu), ("mv", cfg.prevalence.mv), ("aki", cfg.prevalence.aki), ("mortality", cfg.prevalence.mortality)]
    {
        let n = truth.labeled[name] as f64;
        let realized = truth.realized_prevalence[name];
        let sd = (target * (1.0 - target) / n).sqrt();
        assert!(
            (realized - target).abs() <= 3.0 * sd,
            "{name}: realized {realized:.4} vs target {target:.4} (3sd {:.4})",
            3.0 * sd
        );
    }

    // ---- Bayes AUROC: informative, and MC agrees with the exact value -----
    for name in ["icu", "mv", "aki", "mortality"] {
        let exact = truth.bayes_auroc_exact[name];
        let mc = truth.bayes_auroc_mc[name];
        assert!((0.55..0.99).contains(&exact), "{name}: Bayes AUROC {exact:.3}");
        assert!((exact - mc).abs() < 0.01, "{name}: exact {exact:.4} vs MC {mc:.4}");
    }

    // ---- feature vectors match the independently computed expectation -----
    let spec = default_feature_spec();
    let maps = default_comorbidity_maps();
    let ctx = FeatureContext { spec: &spec, maps: &maps, ranges: &ranges, kdigo: &kdigo };
    let vectors = featurize_cohort(&build.bundles, &ctx);
    let mut compared = 0usize;
    for v in &vectors {
        let t = truth.truth_for(&v.encounter_id).unwrap();
        let want = t.expected_features.as_ref().expect("all retained rows carry expectations");
        assert_eq!(
            v.values.keys().collect::<Vec<_>>(),
            want.keys().collect::<Vec<_>>(),
            "feature name set diverges on {}",
            v.encounter_id
        );
        for (name, expected) in want {
            let got = &v.values[name];
            let ok = match (expected, got) {
                (FeatureValue::Numeric(a), FeatureValue::Numeric(b)) => {
                    a.to_bits() == b.to_bits() || (a - b).abs() < 1e-9
                }
                (a, b) => a == b,
            };
            assert!(ok, "{}::{name}: expected {expected:?}, got {got:?}", v.encounter_id);
            compared += 1;
        }
    }
    assert_eq!(compared, truth.cohort_size * 99, "99 features compared per retained encounter");
}
