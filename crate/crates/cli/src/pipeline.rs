//! Stage implementations. Each stage reads its inputs (from in-memory cache
//! when chained by `run-all`, otherwise from the artifacts on disk), writes
//! its artifacts atomically, and prints a short summary to stdout.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use periop_core::data::{
    default_comorbidity_maps, default_feature_spec, default_phenotype_codes,
    default_plausibility_ranges,
};
use periop_core::features::FeatureVector;
use periop_core::ingest::{
    load_tables, TABLE_DEATH, TABLE_DEMOGRAPHIC, TABLE_DIAGNOSIS, TABLE_DISPENSING,
    TABLE_ENCOUNTER, TABLE_LAB, TABLE_PROCEDURES,
};
use periop_core::phenotype::label_cohort;
use periop_core::rvu::RvuTable;
use periop_core::types::{age_at, OutcomeLabels, Race, Sex};
use periop_core::{
    build_cohort, encode_matrix, fit_encoder, temporal_split, EncoderModel, FeatureContext,
    FeatureSpecList, FeatureValue, KdigoConfig,
};
use periop_eval::{
    compare_models, metric_bundle, subgroup_eval, youden_threshold, EvaluatedModel, MetricsReport,
    SensitivityReport, SubgroupRow, SubgroupsReport, ThresholdChoice,
};
use periop_gbdt::{
    grid_search_cv, mean_abs_shap, stratified_folds, train, BoostedEnsemble, FeatureMatrix,
    TrainParams,
};
use sha2::{Digest, Sha256};

use crate::artifacts::*;
use crate::config::{outcome_title, PipelineConfig, ThresholdPolicy, TrainMode};
use crate::error::CliError;
use crate::table1;

/// Map one outcome name onto its label. `None` means the label is undefined
/// for this encounter (AKI under ESRD or missing creatinine).
pub fn label_of(labels: &OutcomeLabels, outcome: &str) -> Option<bool> {
    match outcome {
        "icu" => Some(labels.icu_need),
        "mv" => Some(labels.mv_need),
        "aki" => labels.aki,
        "mortality" => Some(labels.mortality),
        _ => None,
    }
}

/// Driver for all stages. Artifacts loaded or produced once are cached so
/// `run-all` never re-reads what it just wrote.
pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub sha: String,
    cohort: Option<CohortArtifact>,
    labels: Option<Vec<(String, OutcomeLabels)>>,
    features: Option<FeaturesArtifact>,
    split: Option<SplitArtifact>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        let sha = cfg.sha256();
        Pipeline { cfg, sha, cohort: None, labels: None, features: None, split: None }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.paths.output_dir.join(name)
    }

    fn prov(&self, stage: &str) -> periop_eval::Provenance {
        provenance(&self.sha, self.cfg.seed, stage)
    }

    // -----------------------------------------------------------------------
    // synth
    // -----------------------------------------------------------------------

    pub fn run_synth(&mut self) -> Result<(), CliError> {
        let mut sc = self.cfg.synth.clone().ok_or_else(|| {
            CliError::Config(
                "config has no [synth] section; add one to generate synthetic data".into(),
            )
        })?;
        sc.seed = self.cfg.seed;
        std::fs::create_dir_all(&self.cfg.paths.data_dir)?;
        let truth = periop_synth::generate(&sc, &self.cfg.paths.data_dir)?;
        println!(
            "synth: wrote {} encounters ({} patients) to {}",
            truth.n_encounters,
            truth.n_patients,
            self.cfg.paths.data_dir.display()
        );
        println!("synth: designed cohort size {}", truth.cohort_size);
        for (o, p) in &truth.realized_prevalence {
            let bayes = truth.bayes_auroc_exact.get(o).copied().unwrap_or(f64::NAN);
            println!("synth: {o}: prevalence {p:.4}, attainable AUROC {bayes:.4}");
        }
        Ok(())
    }

    // -----------------------------------------------------------------------
    // ingest
    // -----------------------------------------------------------------------

    pub fn run_ingest(&mut self) -> Result<(), CliError> {
        let raw = load_tables(&self.cfg.paths.data_dir)?;
        let rvu = RvuTable::load_csv(&self.cfg.paths.rvu_path())?;
        let build = build_cohort(&raw, &rvu);
        if build.bundles.is_empty() {
            return Err(CliError::Data(
                "cohort is empty after exclusions; nothing to model".into(),
            ));
        }

        let exclusions = ExclusionCounts {
            non_inpatient: build.exclusions.non_inpatient,
            under_18: build.exclusions.under_18,
            no_major_surgery: build.exclusions.no_major_surgery,
        };
        let rejects: Vec<CohortRejectOut> = build
            .rejects
            .iter()
            .map(|r| CohortRejectOut {
                encounter_id: r.encounter_id.clone(),
                reason: r.reason.clone(),
            })
            .collect();

        let tables = [
            TABLE_DEMOGRAPHIC,
            TABLE_ENCOUNTER,
            TABLE_PROCEDURES,
            TABLE_DIAGNOSIS,
            TABLE_LAB,
            TABLE_DISPENSING,
            TABLE_DEATH,
        ];
        let mut input_rows = BTreeMap::new();
        let mut retained_rows = BTreeMap::new();
        let mut rejected_rows = BTreeMap::new();
        for t in tables {
            input_rows.insert(t.to_string(), raw.input_counts.get(t).copied().unwrap_or(0));
            retained_rows.insert(t.to_string(), raw.retained_count(t));
            rejected_rows.insert(t.to_string(), raw.reject_count(t));
        }

        let report = IngestReport {
            provenance: self.prov("ingest"),
            input_rows,
            retained_rows,
            rejected_rows,
            exclusions,
            unknown_cpt_rows: build.unknown_cpt_rows,
            cohort_rejects: rejects.len() as u64,
            cohort_size: build.bundles.len(),
        };

        let artifact = CohortArtifact {
            provenance: self.prov("ingest"),
            exclusions,
            unknown_cpt_rows: build.unknown_cpt_rows,
            rejects,
            bundles: build.bundles,
        };

        save_json_compact(&self.out(COHORT_JSON), &artifact)?;
        save_json_pretty(&self.out(INGEST_REPORT_JSON), &report)?;

        let mut buf = Vec::new();
        raw.write_rejects_csv(&mut buf)?;
        let mut text = csv_stamp(&self.sha, self.cfg.seed);
        text.push_str(&String::from_utf8(buf).expect("rejects CSV is UTF-8"));
        write_atomic(&self.out(REJECTS_CSV), text.as_bytes())?;

        println!(
            "ingest: {} encounters retained ({} row rejects, {} cohort rejects)",
            artifact.bundles.len(),
            raw.rejects.len(),
            artifact.rejects.len()
        );
        println!(
            "ingest: excluded {} non-inpatient, {} under-18, {} without major surgery",
            artifact.exclusions.non_inpatient,
            artifact.exclusions.under_18,
            artifact.exclusions.no_major_surgery
        );
        self.cohort = Some(artifact);
        Ok(())
    }

    fn ensure_cohort(&mut self) -> Result<(), CliError> {
        if self.cohort.is_none() {
            let path = self.out(COHORT_JSON);
            let art: CohortArtifact = load_json(&path, "ingest")?;
            check_stamp(&art.provenance, &self.sha, self.cfg.seed, &path)?;
            self.cohort = Some(art);
        }
        Ok(())
    }

    // -----------------------------------------------------------------------
    // label
    // -----------------------------------------------------------------------

    pub fn run_label(&mut self) -> Result<(), CliError> {
        self.ensure_cohort()?;
        let cohort = self.cohort.as_ref().unwrap();

        let codes = default_phenotype_codes();
        let kdigo = KdigoConfig::default();
        let ranges = default_plausibility_ranges();
        let labels = label_cohort(&cohort.bundles, &codes, &kdigo, &ranges);

        let mut text = csv_stamp(&self.sha, self.cfg.seed);
        text.push_str("encounter_id,icu,mv,aki,mortality\n");
        let b01 = |b: bool| if b { "1" } else { "0" };
        let mut pairs = Vec::with_capacity(labels.len());
        for (bundle, l) in cohort.bundles.iter().zip(&labels) {
            let aki = l.aki.map(b01).unwrap_or("");
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                bundle.encounter_id(),
                b01(l.icu_need),
                b01(l.mv_need),
                aki,
                b01(l.mortality)
            ));
            pairs.push((bundle.encounter_id().to_string(), *l));
        }
        write_atomic(&self.out(LABELS_CSV), text.as_bytes())?;

        let mut labeled = BTreeMap::new();
        let mut positives = BTreeMap::new();
        let mut prevalence = BTreeMap::new();
        for o in crate::config::ALL_OUTCOMES {
            let defined = labels.iter().filter(|l| label_of(l, o).is_some()).count();
            let pos = labels.iter().filter(|l| label_of(l, o) == Some(true)).count();
            labeled.insert(o.to_string(), defined);
            positives.insert(o.to_string(), pos);
            let p = if defined > 0 { pos as f64 / defined as f64 } else { 0.0 };
            prevalence.insert(o.to_string(), p);
        }
        let report = LabelReport {
            provenance: self.prov("label"),
            n: labels.len(),
            labeled,
            positives,
            prevalence,
        };
        save_json_pretty(&self.out(LABEL_REPORT_JSON), &report)?;

        for o in crate::config::ALL_OUTCOMES {
            println!(
                "label: {o}: {}/{} positive (prevalence {:.4})",
                report.positives[o], report.labeled[o], report.prevalence[o]
            );
        }
        self.labels = Some(pairs);
        Ok(())
    }

    fn ensure_labels(&mut self) -> Result<(), CliError> {
        if self.labels.is_none() {
            let path = self.out(LABELS_CSV);
            let body = read_stamped_csv(&path, &self.sha, self.cfg.seed, "label")?;
            let mut rdr = csv::Reader::from_reader(body.as_bytes());
            let mut pairs = Vec::new();
            for record in rdr.records() {
                let rec = record?;
                if rec.len() != 5 {
                    return Err(CliError::Data(format!(
                        "{}: expected 5 columns, got {}",
                        path.display(),
                        rec.len()
                    )));
                }
                let parse_bool = |s: &str| match s {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(CliError::Data(format!(
                        "{}: bad label value '{other}'",
                        path.display()
                    ))),
                };
                let aki = match &rec[3] {
                    "" => None,
                    s => Some(parse_bool(s)?),
                };
                pairs.push((
                    rec[0].to_string(),
                    OutcomeLabels {
                        icu_need: parse_bool(&rec[1])?,
                        mv_need: parse_bool(&rec[2])?,
                        aki,
                        mortality: parse_bool(&rec[4])?,
                    },
                ));
            }
            self.labels = Some(pairs);
        }
        Ok(())
    }

    // -----------------------------------------------------------------------
    // featurize
    // -----------------------------------------------------------------------

    pub fn run_featurize(&mut self) -> Result<(), CliError> {
        self.ensure_cohort()?;
        let cohort = self.cohort.as_ref().unwrap();

        // Vectors always carry the doctor-id column; the training stage
        // decides per model variant whether to use it.
        let spec = default_feature_spec().with_doctor_id();
        let maps = default_comorbidity_maps();
        let ranges = default_plausibility_ranges();
        let kdigo = KdigoConfig::default();
        let ctx = FeatureContext { spec: &spec, maps: &maps, ranges: &ranges, kdigo: &kdigo };
        let vectors = periop_core::featurize_cohort(&cohort.bundles, &ctx);

        let feature_names: Vec<String> = spec.names().into_iter().map(String::from).collect();
        let mut missing_counts: BTreeMap<String, u64> =
            feature_names.iter().map(|n| (n.clone(), 0u64)).collect();
        for v in &vectors {
            for name in &feature_names {
                if matches!(v.values.get(name), None | Some(FeatureValue::Missing)) {
                    *missing_counts.get_mut(name).unwrap() += 1;
                }
            }
        }

        let artifact = FeaturesArtifact {
            provenance: self.prov("featurize"),
            feature_names: feature_names.clone(),
            vectors,
        };
        let report = FeaturizeReport {
            provenance: self.prov("featurize"),
            n_vectors: artifact.vectors.len(),
            n_features: feature_names.len(),
            missing_counts,
        };
        save_json_compact(&self.out(FEATURES_JSON), &artifact)?;
        save_json_pretty(&self.out(FEATURIZE_REPORT_JSON), &report)?;
        println!(
            "featurize: {} vectors x {} features",
            report.n_vectors, report.n_features
        );
        self.features = Some(artifact);
        Ok(())
    }

    fn ensure_features(&mut self) -> Result<(), CliError> {
        if self.features.is_none() {
            let path = self.out(FEATURES_JSON);
            let art: FeaturesArtifact = load_json(&path, "featurize")?;
            check_stamp(&art.provenance, &self.sha, self.cfg.seed, &path)?;
            self.features = Some(art);
        }
        Ok(())
    }

    fn ensure_split(&mut self) -> Result<(), CliError> {
        if self.split.is_none() {
            let path = self.out(SPLIT_JSON);
            let art: SplitArtifact = load_json(&path, "train")?;
            check_stamp(&art.provenance, &self.sha, self.cfg.seed, &path)?;
            self.split = Some(art);
        }
        Ok(())
    }

    // -----------------------------------------------------------------------
    // train
    // -----------------------------------------------------------------------

    pub fn run_train(&mut self) -> Result<(), CliError> {
        self.ensure_cohort()?;
        self.ensure_labels()?;
        self.ensure_features()?;
        let cohort = self.cohort.as_ref().unwrap();
        let labels = self.labels.as_ref().unwrap();
        let features = self.features.as_ref().unwrap();

        let split = temporal_split(&cohort.bundles, self.cfg.cohort.train_fraction)?;
        if split.valid.is_empty() {
            return Err(CliError::Data(
                "temporal split left the validation set empty; lower train_fraction".into(),
            ));
        }
        let split_art = SplitArtifact {
            provenance: self.prov("train"),
            train_fraction: self.cfg.cohort.train_fraction,
            split,
        };
        save_json_pretty(&self.out(SPLIT_JSON), &split_art)?;

        let label_by_id: HashMap<&str, &OutcomeLabels> =
            labels.iter().map(|(id, l)| (id.as_str(), l)).collect();
        let vec_by_id: HashMap<&str, &FeatureVector> =
            features.vectors.iter().map(|v| (v.encounter_id.as_str(), v)).collect();

        let spec_plain = default_feature_spec();
        let spec_doc = spec_plain.clone().with_doctor_id();
        let base_params = self.cfg.resolved_params();
        let alpha = self.cfg.train.smoothing_alpha;

        let mut outcome_summaries = BTreeMap::new();
        for outcome in self.cfg.outcomes.clone() {
            let mut train_vectors: Vec<FeatureVector> = Vec::new();
            let mut y: Vec<bool> = Vec::new();
            let mut dropped = 0usize;
            for id in &split_art.split.train {
                let l = label_by_id.get(id.as_str()).ok_or_else(|| {
                    CliError::Data(format!("labels.csv has no row for encounter {id}"))
                })?;
                match label_of(l, &outcome) {
                    Some(lab) => {
                        let v = vec_by_id.get(id.as_str()).ok_or_else(|| {
                            CliError::Data(format!("features.json has no row for encounter {id}"))
                        })?;
                        train_vectors.push((*v).clone());
                        y.push(lab);
                    }
                    None => dropped += 1,
                }
            }
            let n_pos = y.iter().filter(|&&b| b).count();
            if y.is_empty() || n_pos == 0 || n_pos == y.len() {
                return Err(CliError::Data(format!(
                    "outcome '{outcome}': training labels are single-class \
                     ({n_pos}/{} positive); cannot train",
                    y.len()
                )));
            }

            let mut reported_params = base_params.clone();
            let mut grid_points = None;
            for (with_doc, spec) in [(false, &spec_plain), (true, &spec_doc)] {
                let (params, ens, encoder) = self.fit_variant(
                    &outcome,
                    with_doc,
                    spec,
                    &train_vectors,
                    &y,
                    &base_params,
                    alpha,
                    &mut grid_points,
                )?;
                if with_doc == self.cfg.include_doctor_id {
                    reported_params = params;
                }
                let enc_art = EncoderArtifact {
                    provenance: self.prov("train"),
                    outcome: outcome.clone(),
                    with_doctor_id: with_doc,
                    model: encoder,
                };
                let model_art = ModelArtifact {
                    provenance: self.prov("train"),
                    outcome: outcome.clone(),
                    with_doctor_id: with_doc,
                    model: ens,
                };
                save_json_pretty(&self.out(&encoder_file(&outcome, with_doc)), &enc_art)?;
                save_json_compact(&self.out(&model_file(&outcome, with_doc)), &model_art)?;
            }

            println!(
                "train: {outcome}: {} rows ({} positive, {} unlabeled dropped), \
                 {} trees, depth {}",
                y.len(),
                n_pos,
                dropped,
                reported_params.n_estimators,
                reported_params.max_depth
            );
            outcome_summaries.insert(
                outcome.clone(),
                OutcomeTrainSummary {
                    n_train: y.len(),
                    n_pos,
                    n_dropped_unlabeled: dropped,
                    params: reported_params,
                    grid_points,
                },
            );
        }

        let report = TrainReport {
            provenance: self.prov("train"),
            mode: match self.cfg.train.mode {
                TrainMode::Fixed => "fixed".into(),
                TrainMode::Grid => "grid".into(),
            },
            train_fraction: self.cfg.cohort.train_fraction,
            split_instant: split_art.split.split_instant.to_string(),
            smoothing_alpha: alpha,
            outcomes: outcome_summaries,
        };
        save_json_pretty(&self.out(TRAIN_REPORT_JSON), &report)?;
        self.split = Some(split_art);
        Ok(())
    }

    /// Fit the encoder and ensemble for one (outcome, variant) pair,
    /// grid-searching first when configured.
    #[allow(clippy::too_many_arguments)]
    fn fit_variant(
        &self,
        outcome: &str,
        with_doc: bool,
        spec: &FeatureSpecList,
        train_vectors: &[FeatureVector],
        y: &[bool],
        base_params: &TrainParams,
        alpha: f64,
        grid_points: &mut Option<usize>,
    ) -> Result<(TrainParams, BoostedEnsemble, EncoderModel), CliError> {
        let encoder = fit_encoder(train_vectors, y, spec, alpha)?;
        let rows = encode_matrix(train_vectors, &encoder, spec);
        let names: Vec<String> = spec.names().into_iter().map(String::from).collect();
        let x = FeatureMatrix::from_rows(names, &rows)?;

        let params = match self.cfg.train.mode {
            TrainMode::Fixed => base_params.clone(),
            TrainMode::Grid => {
                let (best, cv_report) = grid_search_cv(
                    &x,
                    y,
                    &self.cfg.train.grid.to_grid_spec(),
                    base_params,
                    self.cfg.train.cv_folds,
                    self.cfg.seed,
                )?;
                *grid_points = Some(cv_report.points.len());
                let cv_art = CvArtifact {
                    provenance: self.prov("train"),
                    outcome: outcome.to_string(),
                    with_doctor_id: with_doc,
                    report: cv_report,
                };
                save_json_pretty(&self.out(&cv_file(outcome, with_doc)), &cv_art)?;
                best
            }
        };
        let ens = train(&x, y, &params)?;
        Ok((params, ens, encoder))
    }

    fn load_model(
        &self,
        outcome: &str,
        with_doc: bool,
    ) -> Result<(EncoderModel, BoostedEnsemble), CliError> {
        let enc_path = self.out(&encoder_file(outcome, with_doc));
        let enc: EncoderArtifact = load_json(&enc_path, "train")?;
        check_stamp(&enc.provenance, &self.sha, self.cfg.seed, &enc_path)?;
        let model_path = self.out(&model_file(outcome, with_doc));
        let model: ModelArtifact = load_json(&model_path, "train")?;
        check_stamp(&model.provenance, &self.sha, self.cfg.seed, &model_path)?;
        Ok((enc.model, model.model))
    }

    // -----------------------------------------------------------------------
    // evaluate
    // -----------------------------------------------------------------------

    pub fn run_evaluate(&mut self) -> Result<(), CliError> {
        self.ensure_cohort()?;
        self.ensure_labels()?;
        self.ensure_features()?;
        self.ensure_split()?;
        let cohort = self.cohort.as_ref().unwrap();
        let labels = self.labels.as_ref().unwrap();
        let features = self.features.as_ref().unwrap();
        let split = &self.split.as_ref().unwrap().split;

        let label_by_id: HashMap<&str, &OutcomeLabels> =
            labels.iter().map(|(id, l)| (id.as_str(), l)).collect();
        let vec_by_id: HashMap<&str, &FeatureVector> =
            features.vectors.iter().map(|v| (v.encounter_id.as_str(), v)).collect();
        let bundle_by_id: HashMap<&str, &periop_core::types::EncounterBundle> =
            cohort.bundles.iter().map(|b| (b.encounter_id(), b)).collect();

        let spec_plain = default_feature_spec();
        let spec_doc = spec_plain.clone().with_doctor_id();
        let primary_doc = self.cfg.include_doctor_id;
        let policy = self.cfg.evaluate.threshold_policy;
        let b = self.cfg.evaluate.bootstrap_resamples;

        let mut metric_outcomes = BTreeMap::new();
        let mut subgroup_outcomes = BTreeMap::new();
        let mut variant_outcomes = BTreeMap::new();

        for outcome in self.cfg.outcomes.clone() {
            // Validation rows with a defined label, in temporal order.
            let mut ids: Vec<&str> = Vec::new();
            let mut y: Vec<bool> = Vec::new();
            let mut valid_vectors: Vec<FeatureVector> = Vec::new();
            for id in &split.valid {
                let l = label_by_id.get(id.as_str()).ok_or_else(|| {
                    CliError::Data(format!("labels.csv has no row for encounter {id}"))
                })?;
                if let Some(lab) = label_of(l, &outcome) {
                    let v = vec_by_id.get(id.as_str()).ok_or_else(|| {
                        CliError::Data(format!("features.json has no row for encounter {id}"))
                    })?;
                    ids.push(id.as_str());
                    y.push(lab);
                    valid_vectors.push((*v).clone());
                }
            }
            let n_pos = y.iter().filter(|&&b| b).count();
            if y.is_empty() || n_pos == 0 || n_pos == y.len() {
                return Err(CliError::Data(format!(
                    "outcome '{outcome}': validation labels are single-class \
                     ({n_pos}/{} positive); discrimination metrics are undefined",
                    y.len()
                )));
            }

            // Scores for both variants on the identical rows.
            let mut scores_by_variant: BTreeMap<bool, Vec<f64>> = BTreeMap::new();
            for (with_doc, spec) in [(false, &spec_plain), (true, &spec_doc)] {
                let (encoder, ens) = self.load_model(&outcome, with_doc)?;
                let rows = encode_matrix(&valid_vectors, &encoder, spec);
                let names: Vec<String> = spec.names().into_iter().map(String::from).collect();
                let x = FeatureMatrix::from_rows(names, &rows)?;
                scores_by_variant.insert(with_doc, ens.predict_proba(&x)?);
            }
            let scores = &scores_by_variant[&primary_doc];

            let choice = match policy {
                ThresholdPolicy::Validation => ThresholdChoice::Optimize,
                ThresholdPolicy::TrainOof => ThresholdChoice::Fixed(self.train_oof_threshold(
                    &outcome,
                    primary_doc,
                    if primary_doc { &spec_doc } else { &spec_plain },
                )?),
            };

            let bundle = metric_bundle(scores, &y, choice, b, self.cfg.seed)?;

            let rows: Vec<SubgroupRow> = ids
                .iter()
                .map(|id| {
                    let bd = bundle_by_id[id];
                    SubgroupRow {
                        female: bd.demographics.sex == Sex::Female,
                        african_american: bd.demographics.race == Race::AfricanAmerican,
                        age_years: age_at(bd.demographics.birth_date, bd.surgery_date()) as i64,
                    }
                })
                .collect();
            let subgroups = subgroup_eval(
                scores,
                &y,
                &rows,
                self.cfg.evaluate.per_subgroup_threshold,
                bundle.threshold,
                b,
                self.cfg.seed,
            )?;

            // Doctor-id sensitivity pair: both variants, same rows, same
            // threshold policy (train-OOF thresholds inherit the primary's).
            let fp = eval_fingerprint(&outcome, &ids, &y);
            let variant_choice = |with_doc: bool| match policy {
                ThresholdPolicy::Validation => ThresholdChoice::Optimize,
                ThresholdPolicy::TrainOof => {
                    let _ = with_doc;
                    match choice {
                        ThresholdChoice::Fixed(t) => ThresholdChoice::Fixed(t),
                        ThresholdChoice::Optimize => ThresholdChoice::Optimize,
                    }
                }
            };
            let mut evaluated = BTreeMap::new();
            for with_doc in [false, true] {
                let mb = metric_bundle(
                    &scores_by_variant[&with_doc],
                    &y,
                    variant_choice(with_doc),
                    b,
                    self.cfg.seed,
                )?;
                evaluated.insert(
                    with_doc,
                    EvaluatedModel { eval_fingerprint: fp.clone(), metrics: mb },
                );
            }
            let pair = VariantPair {
                without_doctor_id: evaluated[&false].clone(),
                with_doctor_id: evaluated[&true].clone(),
            };

            println!(
                "evaluate: {outcome}: AUROC {:.4} [{:.4}, {:.4}], AUPRC {:.4} \
                 (n={}, positives={})",
                bundle.auroc.point,
                bundle.auroc.lo,
                bundle.auroc.hi,
                bundle.auprc.point,
                bundle.n,
                bundle.n_pos
            );
            metric_outcomes.insert(outcome.clone(), bundle);
            subgroup_outcomes.insert(outcome.clone(), subgroups);
            variant_outcomes.insert(outcome.clone(), pair);
        }

        let metrics_report = MetricsReport {
            provenance: self.prov("evaluate"),
            threshold_policy: policy.as_str().to_string(),
            bootstrap_resamples: b,
            outcomes: metric_outcomes,
        };
        let subgroups_report = SubgroupsReport {
            provenance: self.prov("evaluate"),
            per_subgroup_threshold: self.cfg.evaluate.per_subgroup_threshold,
            outcomes: subgroup_outcomes,
        };
        let variant_metrics = VariantMetricsArtifact {
            provenance: self.prov("evaluate"),
            threshold_policy: policy.as_str().to_string(),
            outcomes: variant_outcomes,
        };
        save_json_pretty(&self.out(METRICS_REPORT_JSON), &metrics_report)?;
        save_json_pretty(&self.out(SUBGROUPS_REPORT_JSON), &subgroups_report)?;
        save_json_pretty(&self.out(VARIANT_METRICS_JSON), &variant_metrics)?;

        // Table 1 analog over the whole cohort, compared by composite outcome.
        let rows = table1::build_rows(&cohort.bundles, labels, &self.cfg.outcomes)?;
        let mut text = csv_stamp(&self.sha, self.cfg.seed);
        text.push_str(&format!(
            "# outcome: any of [{}]\n",
            self.cfg.outcomes.join(", ")
        ));
        text.push_str(&periop_eval::cohort_table_csv(&rows)?);
        write_atomic(&self.out(COHORT_TABLE_CSV), text.as_bytes())?;
        Ok(())
    }

    /// Threshold from out-of-fold predictions on the training split.
    fn train_oof_threshold(
        &self,
        outcome: &str,
        with_doc: bool,
        spec: &FeatureSpecList,
    ) -> Result<f64, CliError> {
        let labels = self.labels.as_ref().unwrap();
        let features = self.features.as_ref().unwrap();
        let split = &self.split.as_ref().unwrap().split;
        let label_by_id: HashMap<&str, &OutcomeLabels> =
            labels.iter().map(|(id, l)| (id.as_str(), l)).collect();
        let vec_by_id: HashMap<&str, &FeatureVector> =
            features.vectors.iter().map(|v| (v.encounter_id.as_str(), v)).collect();

        let mut train_vectors: Vec<FeatureVector> = Vec::new();
        let mut y: Vec<bool> = Vec::new();
        for id in &split.train {
            if let Some(l) = label_by_id.get(id.as_str()) {
                if let Some(lab) = label_of(l, outcome) {
                    train_vectors.push(vec_by_id[id.as_str()].clone());
                    y.push(lab);
                }
            }
        }

        let (_, ens) = self.load_model(outcome, with_doc)?;
        let params = ens.params.clone();
        let folds = stratified_folds(&y, self.cfg.train.cv_folds, self.cfg.seed)?;
        let alpha = self.cfg.train.smoothing_alpha;
        let names: Vec<String> = spec.names().into_iter().map(String::from).collect();

        let mut oof = vec![f64::NAN; y.len()];
        for fold in 0..self.cfg.train.cv_folds as u32 {
            let tr_idx: Vec<usize> =
                (0..y.len()).filter(|&i| folds[i] != fold).collect();
            let te_idx: Vec<usize> =
                (0..y.len()).filter(|&i| folds[i] == fold).collect();
            if tr_idx.is_empty() || te_idx.is_empty() {
                continue;
            }
            let tr_vecs: Vec<FeatureVector> =
                tr_idx.iter().map(|&i| train_vectors[i].clone()).collect();
            let tr_y: Vec<bool> = tr_idx.iter().map(|&i| y[i]).collect();
            let te_vecs: Vec<FeatureVector> =
                te_idx.iter().map(|&i| train_vectors[i].clone()).collect();

            let encoder = fit_encoder(&tr_vecs, &tr_y, spec, alpha)?;
            let x_tr = FeatureMatrix::from_rows(
                names.clone(),
                &encode_matrix(&tr_vecs, &encoder, spec),
            )?;
            let x_te = FeatureMatrix::from_rows(
                names.clone(),
                &encode_matrix(&te_vecs, &encoder, spec),
            )?;
            let fold_ens = train(&x_tr, &tr_y, &params)?;
            let preds = fold_ens.predict_proba(&x_te)?;
            for (k, &i) in te_idx.iter().enumerate() {
                oof[i] = preds[k];
            }
        }
        if oof.iter().any(|p| p.is_nan()) {
            return Err(CliError::Modeling(format!(
                "outcome '{outcome}': out-of-fold predictions are incomplete"
            )));
        }
        Ok(youden_threshold(&oof, &y)?)
    }

    // -----------------------------------------------------------------------
    // explain
    // -----------------------------------------------------------------------

    pub fn run_explain(&mut self) -> Result<(), CliError> {
        self.ensure_labels()?;
        self.ensure_features()?;
        self.ensure_split()?;
        let labels = self.labels.as_ref().unwrap();
        let features = self.features.as_ref().unwrap();
        let split = &self.split.as_ref().unwrap().split;

        let label_by_id: HashMap<&str, &OutcomeLabels> =
            labels.iter().map(|(id, l)| (id.as_str(), l)).collect();
        let vec_by_id: HashMap<&str, &FeatureVector> =
            features.vectors.iter().map(|v| (v.encounter_id.as_str(), v)).collect();

        let spec_plain = default_feature_spec();
        let spec_doc = spec_plain.clone().with_doctor_id();
        let with_doc = self.cfg.include_doctor_id;
        let spec = if with_doc { &spec_doc } else { &spec_plain };
        let cap = self.cfg.explain.shap_rows;

        let mut outcome_reports = BTreeMap::new();
        for outcome in self.cfg.outcomes.clone() {
            let mut chosen: Vec<FeatureVector> = Vec::new();
            for id in &split.valid {
                if cap != 0 && chosen.len() >= cap {
                    break;
                }
                if let Some(l) = label_by_id.get(id.as_str()) {
                    if label_of(l, &outcome).is_some() {
                        if let Some(v) = vec_by_id.get(id.as_str()) {
                            chosen.push((*v).clone());
                        }
                    }
                }
            }
            if chosen.is_empty() {
                return Err(CliError::Data(format!(
                    "outcome '{outcome}': no labeled validation rows to explain"
                )));
            }
            let n = chosen.len();

            let (encoder, ens) = self.load_model(&outcome, with_doc)?;
            let rows = encode_matrix(&chosen, &encoder, spec);
            let names: Vec<String> = spec.names().into_iter().map(String::from).collect();
            let x = FeatureMatrix::from_rows(names, &rows)?;
            let evaluated_on = format!("validation:{outcome}:first_{n}_labeled_rows");
            let report = mean_abs_shap(&ens, &x, &evaluated_on)?;

            let mut csv_text = csv_stamp(&self.sha, self.cfg.seed);
            csv_text.push_str(&report.to_csv());
            write_atomic(&self.out(&shap_csv_file(&outcome)), csv_text.as_bytes())?;

            let title = format!(
                "Mean |SHAP| — {}{}",
                outcome_title(&outcome),
                if with_doc { " (with doctor id)" } else { "" }
            );
            let svg = format!(
                "<!-- config_sha256={} seed={} -->\n{}",
                self.sha,
                self.cfg.seed,
                report.to_svg(10, &title)
            );
            write_atomic(&self.out(&shap_svg_file(&outcome)), svg.as_bytes())?;

            let top = report
                .entries
                .first()
                .map(|e| format!("{} ({:.4})", e.feature, e.mean_abs_shap))
                .unwrap_or_default();
            println!("explain: {outcome}: top feature by mean |SHAP|: {top} over {n} rows");
            outcome_reports.insert(outcome.clone(), report);
        }

        let artifact = ImportanceArtifact {
            provenance: self.prov("explain"),
            with_doctor_id: with_doc,
            outcomes: outcome_reports,
        };
        save_json_pretty(&self.out(IMPORTANCE_REPORT_JSON), &artifact)?;
        Ok(())
    }

    // -----------------------------------------------------------------------
    // report
    // -----------------------------------------------------------------------

    pub fn run_report(&mut self) -> Result<(), CliError> {
        let metrics_path = self.out(METRICS_REPORT_JSON);
        let metrics: MetricsReport = load_json(&metrics_path, "evaluate")?;
        check_stamp(&metrics.provenance, &self.sha, self.cfg.seed, &metrics_path)?;

        let subs_path = self.out(SUBGROUPS_REPORT_JSON);
        let subgroups: SubgroupsReport = load_json(&subs_path, "evaluate")?;
        check_stamp(&subgroups.provenance, &self.sha, self.cfg.seed, &subs_path)?;

        let vm_path = self.out(VARIANT_METRICS_JSON);
        let variants: VariantMetricsArtifact = load_json(&vm_path, "evaluate")?;
        check_stamp(&variants.provenance, &self.sha, self.cfg.seed, &vm_path)?;

        let imp_path = self.out(IMPORTANCE_REPORT_JSON);
        let importance: Option<ImportanceArtifact> = if imp_path.exists() {
            let art: ImportanceArtifact = load_json(&imp_path, "explain")?;
            check_stamp(&art.provenance, &self.sha, self.cfg.seed, &imp_path)?;
            Some(art)
        } else {
            None
        };

        let mut sens_outcomes = BTreeMap::new();
        for (outcome, pair) in &variants.outcomes {
            let rows = compare_models(&pair.without_doctor_id, &pair.with_doctor_id)?;
            sens_outcomes.insert(outcome.clone(), rows);
        }
        let sensitivity = SensitivityReport {
            provenance: self.prov("report"),
            outcomes: sens_outcomes,
        };
        save_json_pretty(&self.out(SENSITIVITY_REPORT_JSON), &sensitivity)?;

        let text = render_summary(
            &self.cfg,
            &self.sha,
            &metrics,
            &subgroups,
            &sensitivity,
            importance.as_ref(),
        );
        write_atomic(&self.out(SUMMARY_TXT), text.as_bytes())?;
        print!("{text}");
        Ok(())
    }

    // -----------------------------------------------------------------------
    // run-all
    // -----------------------------------------------------------------------

    pub fn run_all(&mut self) -> Result<(), CliError> {
        if self.cfg.synth.is_some() {
            self.run_synth()?;
        }
        self.run_ingest()?;
        self.run_label()?;
        self.run_featurize()?;
        self.run_train()?;
        self.run_evaluate()?;
        self.run_explain()?;
        self.run_report()?;
        Ok(())
    }
}

/// Hash of (outcome, validation row ids, labels): two models may only be
/// compared when these match exactly.
fn eval_fingerprint(outcome: &str, ids: &[&str], y: &[bool]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(outcome.as_bytes());
    for (id, &lab) in ids.iter().zip(y) {
        hasher.update(id.as_bytes());
        hasher.update(if lab { b"+" } else { b"-" });
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

fn fmt_ci(ci: &periop_eval::CiValue) -> String {
    format!("{:.3} [{:.3}, {:.3}]", ci.point, ci.lo, ci.hi)
}

fn fmt_opt_ci(ci: &Option<periop_eval::CiValue>) -> String {
    match ci {
        Some(c) => fmt_ci(c),
        None => "—".into(),
    }
}

/// Human-readable run summary, also written to `summary.txt`.
fn render_summary(
    cfg: &PipelineConfig,
    sha: &str,
    metrics: &MetricsReport,
    subgroups: &SubgroupsReport,
    sensitivity: &SensitivityReport,
    importance: Option<&ImportanceArtifact>,
) -> String {
    let mut s = String::new();
    s.push_str("Perioperative risk pipeline — run summary\n");
    s.push_str(&format!("config {}…, seed {}\n", &sha[..12], cfg.seed));
    s.push_str(&format!(
        "threshold policy: {}, bootstrap resamples: {}\n",
        metrics.threshold_policy, metrics.bootstrap_resamples
    ));
    s.push_str(&format!(
        "primary model: {} doctor-id feature\n\n",
        if cfg.include_doctor_id { "with" } else { "without" }
    ));

    s.push_str("Validation performance\n");
    for (outcome, mb) in &metrics.outcomes {
        s.push_str(&format!(
            "  {} — n={}, positives={}\n",
            outcome_title(outcome),
            mb.n,
            mb.n_pos
        ));
        s.push_str(&format!(
            "    AUROC {}  AUPRC {}\n",
            fmt_ci(&mb.auroc),
            fmt_ci(&mb.auprc)
        ));
        s.push_str(&format!(
            "    threshold {:.4}: sens {}  spec {}  ppv {}  npv {}\n",
            mb.threshold,
            fmt_opt_ci(&mb.sensitivity),
            fmt_opt_ci(&mb.specificity),
            fmt_opt_ci(&mb.ppv),
            fmt_opt_ci(&mb.npv)
        ));
    }

    s.push_str("\nSubgroup AUROC\n");
    for (outcome, sub) in &subgroups.outcomes {
        s.push_str(&format!("  {}\n", outcome_title(outcome)));
        for group in sub.sex.iter().chain(&sub.race).chain(&sub.age) {
            let value = match (&group.metrics, &group.unevaluable_reason) {
                (Some(mb), _) => fmt_ci(&mb.auroc),
                (None, Some(reason)) => format!("unevaluable: {reason}"),
                (None, None) => "—".into(),
            };
            s.push_str(&format!("    {:<24} {}\n", group.group, value));
        }
    }

    s.push_str("\nDoctor-id sensitivity (AUPRC without vs with)\n");
    for (outcome, rows) in &sensitivity.outcomes {
        let mut parts = Vec::new();
        for row in rows {
            parts.push(format!(
                "{}: {}",
                row.with_doctor_id,
                fmt_ci(&row.metrics.auprc)
            ));
        }
        s.push_str(&format!(
            "  {:<32} {}\n",
            outcome_title(outcome),
            parts.join("   ")
        ));
    }

    if let Some(imp) = importance {
        s.push_str("\nTop features by mean |SHAP|\n");
        for (outcome, rep) in &imp.outcomes {
            s.push_str(&format!("  {}\n", outcome_title(outcome)));
            for e in rep.top_k(5) {
                s.push_str(&format!("    {:<28} {:.5}\n", e.feature, e.mean_abs_shap));
            }
        }
    }
    s
}
