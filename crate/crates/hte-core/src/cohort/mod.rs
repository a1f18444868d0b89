//! Claim-style cohort pipeline: eligibility filtering at baseline,
//! treatment/outcome labeling, covariate construction, and weighted
//! subsampling. The stage types enforce the fixed order — eligibility,
//! then labels, then covariates, then sampling — because each stage only
//! accepts the previous stage's output.

mod generate;

pub use generate::{generate_claims, ClaimsConfig, EffectModel};

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{GroundTruth, ObservationalDataset};
use crate::error::{Error, Result};
use crate::seed::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodeSystem {
    Diagnosis,
    Medication,
}

/// One coded event at a day offset from the data start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub patient_id: u64,
    pub day: u32,
    pub code: String,
    pub system: CodeSystem,
}

/// Embedded generator truth carried through the pipeline so the final
/// matrix supports ground-truth evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientTruth {
    /// Outcome probability under the standard-of-care arm.
    pub p0: f64,
    /// Outcome probability under the study arm.
    pub p1: f64,
    /// Probability of the study arm among treated patients.
    pub assignment_prob: f64,
}

/// Day-ordered event history for one patient. Events with equal days keep
/// their insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientTimeline {
    pub patient_id: u64,
    pub birth_year: i32,
    pub sex: u8,
    pub race: u8,
    pub events: Vec<EventRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PatientTruth>,
}

impl PatientTimeline {
    /// Validate event invariants (non-empty codes, day ordering).
    pub fn check(&self) -> Result<()> {
        for pair in self.events.windows(2) {
            if pair[1].day < pair[0].day {
                return Err(Error::Structural(format!(
                    "patient {}: events out of day order",
                    self.patient_id
                )));
            }
        }
        if self.events.iter().any(|e| e.code.is_empty()) {
            return Err(Error::Structural(format!(
                "patient {}: empty code",
                self.patient_id
            )));
        }
        Ok(())
    }

    fn last_event_day(&self) -> u32 {
        self.events.last().map_or(0, |e| e.day)
    }

    fn first_event_day(&self) -> u32 {
        self.events.first().map_or(0, |e| e.day)
    }
}

/// Drug class name -> drug code set; classes are pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, BTreeSet<String>>")]
#[serde(into = "BTreeMap<String, BTreeSet<String>>")]
pub struct DrugClassMap {
    classes: BTreeMap<String, BTreeSet<String>>,
}

impl TryFrom<BTreeMap<String, BTreeSet<String>>> for DrugClassMap {
    type Error = Error;

    fn try_from(classes: BTreeMap<String, BTreeSet<String>>) -> Result<Self> {
        DrugClassMap::new(classes)
    }
}

impl From<DrugClassMap> for BTreeMap<String, BTreeSet<String>> {
    fn from(m: DrugClassMap) -> Self {
        m.classes
    }
}

impl DrugClassMap {
    pub fn new(classes: BTreeMap<String, BTreeSet<String>>) -> Result<Self> {
        let mut seen: BTreeMap<&String, &String> = BTreeMap::new();
        for (class, codes) in &classes {
            for code in codes {
                if let Some(other) = seen.insert(code, class) {
                    return Err(Error::Config(format!(
                        "drug code {code} appears in classes {other} and {class}"
                    )));
                }
            }
        }
        Ok(DrugClassMap { classes })
    }

    /// The five anti-asthma drug classes keyed by DrugBank identifiers.
    pub fn anti_asthma() -> Self {
        let table: [(&str, &[&str]); 5] = [
            (
                "beta2-agonist",
                &[
                    "DB01001", "DB13139", "DB09082", "DB01274", "DB15784", "DB05039", "DB00816",
                    "DB12846", "DB00938", "DB00871", "DB00983",
                ],
            ),
            ("anticholinergic", &["DB09076", "DB00332"]),
            ("xanthine", &["DB00277", "DB01303", "DB01223"]),
            (
                "corticosteroid",
                &[
                    "DB13867", "DB01222", "DB00764", "DB00394", "DB00180", "DB01410",
                ],
            ),
            (
                "leukotriene-antagonist",
                &["DB00471", "DB00744", "DB00549", "DB01411"],
            ),
        ];
        let classes = table
            .iter()
            .map(|(name, codes)| {
                (
                    name.to_string(),
                    codes.iter().map(|c| c.to_string()).collect(),
                )
            })
            .collect();
        DrugClassMap::new(classes).expect("built-in classes are disjoint")
    }

    pub fn class_of(&self, code: &str) -> Option<&str> {
        self.classes
            .iter()
            .find(|(_, codes)| codes.contains(code))
            .map(|(name, _)| name.as_str())
    }

    pub fn class_names(&self) -> impl Iterator<Item = &str> {
        self.classes.keys().map(String::as_str)
    }

    pub fn codes_of(&self, class: &str) -> Option<&BTreeSet<String>> {
        self.classes.get(class)
    }

    pub fn contains_class(&self, class: &str) -> bool {
        self.classes.contains_key(class)
    }
}

/// A named diagnosis code set excluded at baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeSet {
    pub name: String,
    pub codes: BTreeSet<String>,
}

/// A named code set excluded when any occurrence falls within
/// `window_days` before baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookbackRule {
    pub name: String,
    pub codes: BTreeSet<String>,
    pub window_days: u32,
}

/// Cohort entry criteria evaluated at each patient's follow-up start (the
/// first anti-asthma medication event, falling back to the first event).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EligibilitySpec {
    /// Eligible iff birth_year < cutoff.
    pub birth_year_cutoff: i32,
    /// No occurrence at or before baseline, checked in order.
    pub baseline_exclusions: Vec<CodeSet>,
    /// No occurrence within the window before baseline.
    pub lookback_exclusions: Vec<LookbackRule>,
    /// Outcome onset codes; occurrences after baseline define the outcome,
    /// occurrences at or before baseline exclude the patient.
    pub outcome_codes: BTreeSet<String>,
    pub class_map: DrugClassMap,
    pub study_class: String,
    /// Calendar year of day offset zero; used for age computation.
    pub data_start_year: i32,
}

fn code_set(name: &str, codes: &[&str]) -> CodeSet {
    CodeSet {
        name: name.into(),
        codes: codes.iter().map(|c| c.to_string()).collect(),
    }
}

impl Default for EligibilitySpec {
    fn default() -> Self {
        EligibilitySpec {
            birth_year_cutoff: 1942,
            baseline_exclusions: vec![
                code_set("depression", &["DEP"]),
                code_set("schizophrenia", &["SCZ"]),
                code_set("parkinsons", &["PRK"]),
                code_set("multiple-sclerosis", &["MS"]),
                code_set("intracranial-pressure", &["ICP"]),
            ],
            lookback_exclusions: vec![LookbackRule {
                name: "stroke-3y".into(),
                codes: ["STK".to_string()].into_iter().collect(),
                window_days: 3 * 365,
            }],
            outcome_codes: ["AD".to_string()].into_iter().collect(),
            class_map: DrugClassMap::anti_asthma(),
            study_class: "leukotriene-antagonist".into(),
            data_start_year: 2007,
        }
    }
}

impl EligibilitySpec {
    pub fn validate(&self) -> Result<()> {
        if !self.class_map.contains_class(&self.study_class) {
            return Err(Error::Config(format!(
                "study class {} not in class map",
                self.study_class
            )));
        }
        if self.outcome_codes.is_empty() {
            return Err(Error::Config("outcome code set is empty".into()));
        }
        for set in &self.baseline_exclusions {
            if set.codes.is_empty() {
                return Err(Error::Config(format!(
                    "baseline exclusion {} has no codes",
                    set.name
                )));
            }
        }
        for rule in &self.lookback_exclusions {
            if rule.codes.is_empty() {
                return Err(Error::Config(format!(
                    "lookback rule {} has no codes",
                    rule.name
                )));
            }
            if rule.window_days == 0 {
                return Err(Error::Config(format!(
                    "lookback rule {} has zero window",
                    rule.name
                )));
            }
        }
        Ok(())
    }

    /// Follow-up start: day of the first medication event in any mapped
    /// class; patients with none fall back to their first event day.
    pub fn followup_start(&self, timeline: &PatientTimeline) -> u32 {
        timeline
            .events
            .iter()
            .find(|e| {
                e.system == CodeSystem::Medication && self.class_map.class_of(&e.code).is_some()
            })
            .map(|e| e.day)
            .unwrap_or_else(|| timeline.first_event_day())
    }
}

/// Per-criterion removal counts in evaluation order; each excluded patient
/// is attributed to the first criterion that failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionTally {
    pub input: usize,
    pub removed: Vec<(String, usize)>,
    pub output: usize,
}

impl ExclusionTally {
    pub fn total_removed(&self) -> usize {
        self.removed.iter().map(|(_, n)| n).sum()
    }
}

/// A patient that passed eligibility, with the baseline day pinned.
#[derive(Debug, Clone)]
pub struct EligiblePatient {
    pub timeline: PatientTimeline,
    pub followup_start: u32,
}

/// Stage output of [`apply_eligibility`]; input to [`label_treatment`].
#[derive(Debug, Clone)]
pub struct EligibleCohort {
    pub patients: Vec<EligiblePatient>,
}

/// Keep each patient iff every criterion holds at their follow-up start.
pub fn apply_eligibility(
    timelines: Vec<PatientTimeline>,
    spec: &EligibilitySpec,
) -> Result<(EligibleCohort, ExclusionTally)> {
    spec.validate()?;
    let mut criteria: Vec<String> = vec!["birth-year".into(), "prior-outcome".into()];
    criteria.extend(spec.baseline_exclusions.iter().map(|s| s.name.clone()));
    criteria.extend(spec.lookback_exclusions.iter().map(|r| r.name.clone()));
    let mut removed: BTreeMap<&str, usize> = BTreeMap::new();

    let input = timelines.len();
    let mut patients = Vec::with_capacity(input);
    'patient: for timeline in timelines {
        timeline.check()?;
        let baseline = spec.followup_start(&timeline);
        // Criterion order is fixed: birth year, prior outcome, baseline
        // code sets in listed order, lookback windows in listed order.
        if timeline.birth_year >= spec.birth_year_cutoff {
            *removed.entry("birth-year").or_default() += 1;
            continue;
        }
        let has_code_in = |codes: &BTreeSet<String>, range: std::ops::RangeInclusive<u32>| {
            timeline.events.iter().any(|e| {
                e.system == CodeSystem::Diagnosis
                    && range.contains(&e.day)
                    && codes.contains(&e.code)
            })
        };
        if has_code_in(&spec.outcome_codes, 0..=baseline) {
            *removed.entry("prior-outcome").or_default() += 1;
            continue;
        }
        for set in &spec.baseline_exclusions {
            if has_code_in(&set.codes, 0..=baseline) {
                *removed.entry(set.name.as_str()).or_default() += 1;
                continue 'patient;
            }
        }
        for rule in &spec.lookback_exclusions {
            let from = baseline.saturating_sub(rule.window_days);
            if has_code_in(&rule.codes, from..=baseline) {
                *removed.entry(rule.name.as_str()).or_default() += 1;
                continue 'patient;
            }
        }
        patients.push(EligiblePatient {
            timeline,
            followup_start: baseline,
        });
    }

    let tally = ExclusionTally {
        input,
        removed: criteria
            .iter()
            .map(|name| {
                (
                    name.clone(),
                    removed.get(name.as_str()).copied().unwrap_or(0),
                )
            })
            .collect(),
        output: patients.len(),
    };
    Ok((EligibleCohort { patients }, tally))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreatmentLabel {
    Study,
    StandardOfCare,
    ExcludedMulticlass,
    ExcludedUntreated,
}

impl TreatmentLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            TreatmentLabel::Study => "study",
            TreatmentLabel::StandardOfCare => "standard-of-care",
            TreatmentLabel::ExcludedMulticlass => "excluded-multiclass",
            TreatmentLabel::ExcludedUntreated => "excluded-untreated",
        }
    }
}

/// A labeled, retained patient (study or standard-of-care).
#[derive(Debug, Clone)]
pub struct LabeledPatient {
    pub timeline: PatientTimeline,
    pub followup_start: u32,
    pub treated: bool,
    /// Mapped medication event count; basis for sampling weights.
    pub med_event_count: usize,
}

/// Stage output of [`label_treatment`]; input to [`build_covariates`].
#[derive(Debug)]
pub struct LabeledCohort {
    pub patients: Vec<LabeledPatient>,
    pub label_counts: BTreeMap<String, usize>,
}

/// Classify each patient by the distinct drug classes they used: exactly
/// the study class -> study; exactly one other class -> standard of care;
/// two or more distinct classes -> excluded; no mapped drug -> excluded.
/// Returns the retained cohort plus every patient's label.
pub fn label_treatment(
    cohort: EligibleCohort,
    class_map: &DrugClassMap,
    study_class: &str,
) -> Result<(LabeledCohort, Vec<(u64, TreatmentLabel)>)> {
    if !class_map.contains_class(study_class) {
        return Err(Error::Config(format!(
            "study class {study_class} not in class map"
        )));
    }
    let mut patients = Vec::new();
    let mut labels = Vec::with_capacity(cohort.patients.len());
    let mut label_counts: BTreeMap<String, usize> = BTreeMap::new();
    for patient in cohort.patients {
        let mut classes: BTreeSet<&str> = BTreeSet::new();
        let mut med_event_count = 0usize;
        for event in &patient.timeline.events {
            if event.system == CodeSystem::Medication {
                if let Some(class) = class_map.class_of(&event.code) {
                    classes.insert(class);
                    med_event_count += 1;
                }
            }
        }
        let label = match classes.len() {
            0 => TreatmentLabel::ExcludedUntreated,
            1 if classes.contains(study_class) => TreatmentLabel::Study,
            1 => TreatmentLabel::StandardOfCare,
            _ => TreatmentLabel::ExcludedMulticlass,
        };
        labels.push((patient.timeline.patient_id, label));
        *label_counts.entry(label.as_str().to_string()).or_default() += 1;
        match label {
            TreatmentLabel::Study | TreatmentLabel::StandardOfCare => {
                patients.push(LabeledPatient {
                    treated: label == TreatmentLabel::Study,
                    timeline: patient.timeline,
                    followup_start: patient.followup_start,
                    med_event_count,
                })
            }
            _ => {}
        }
    }
    Ok((
        LabeledCohort {
            patients,
            label_counts,
        },
        labels,
    ))
}

/// Final per-patient design matrix with labels and threaded ground truth.
#[derive(Debug, Clone)]
pub struct CohortMatrix {
    pub feature_names: Vec<String>,
    pub covariates: Array2<f64>,
    pub treatment: Array1<f64>,
    pub outcome: Array1<f64>,
    pub patient_ids: Vec<u64>,
    /// log2(1 + mapped medication events); the weighted-sampling weights.
    pub med_log_counts: Vec<f64>,
    pub truth: Option<GroundTruth>,
}

impl CohortMatrix {
    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn arm_counts(&self) -> (usize, usize) {
        let t = self.treatment.iter().filter(|&&v| v == 1.0).count();
        (t, self.n() - t)
    }

    /// View the matrix as a core dataset so the estimation stack consumes
    /// it unchanged.
    pub fn to_dataset(&self) -> Result<ObservationalDataset> {
        ObservationalDataset::new(
            self.covariates.clone(),
            self.treatment.clone(),
            self.outcome.clone(),
            self.feature_names.clone(),
            self.truth.clone(),
        )
    }
}

/// Count diagnosis codes inside each patient's observation window, apply
/// log2(1+count), drop columns by prevalence then log-count variance, and
/// append demographics (age at follow-up start, sex, race one-hots).
/// Outcome codes never become features.
pub fn build_covariates(
    cohort: &LabeledCohort,
    spec: &EligibilitySpec,
    prevalence_min: f64,
    variance_min: f64,
) -> Result<CohortMatrix> {
    let n = cohort.patients.len();
    if n == 0 {
        return Err(Error::Pipeline("no labeled patients".into()));
    }
    // Observation window: first event to outcome or last event.
    let mut outcomes = Array1::<f64>::zeros(n);
    let mut counts: Vec<BTreeMap<&str, u32>> = Vec::with_capacity(n);
    for (i, patient) in cohort.patients.iter().enumerate() {
        let timeline = &patient.timeline;
        let outcome_day = timeline
            .events
            .iter()
            .find(|e| {
                e.system == CodeSystem::Diagnosis
                    && e.day > patient.followup_start
                    && spec.outcome_codes.contains(&e.code)
            })
            .map(|e| e.day);
        outcomes[i] = f64::from(outcome_day.is_some());
        let window_end = outcome_day.unwrap_or_else(|| timeline.last_event_day());
        let window_start = timeline.first_event_day();
        let mut patient_counts: BTreeMap<&str, u32> = BTreeMap::new();
        for event in &timeline.events {
            if event.system == CodeSystem::Diagnosis
                && event.day >= window_start
                && event.day <= window_end
                && !spec.outcome_codes.contains(&event.code)
            {
                *patient_counts.entry(event.code.as_str()).or_default() += 1;
            }
        }
        counts.push(patient_counts);
    }

    // Candidate codes in deterministic (sorted) order.
    let mut all_codes: BTreeSet<&str> = BTreeSet::new();
    for patient_counts in &counts {
        all_codes.extend(patient_counts.keys());
    }

    // Prevalence filter, then variance filter on the log-counts.
    let nf = n as f64;
    let mut retained: Vec<(&str, Vec<f64>)> = Vec::new();
    for code in all_codes {
        let col: Vec<f64> = counts
            .iter()
            .map(|pc| f64::from(1 + pc.get(code).copied().unwrap_or(0)).log2())
            .collect();
        let prevalence = col.iter().filter(|&&v| v > 0.0).count() as f64 / nf;
        if prevalence <= prevalence_min {
            continue;
        }
        let mean = col.iter().sum::<f64>() / nf;
        let variance = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / nf;
        if variance <= variance_min {
            continue;
        }
        retained.push((code, col));
    }
    if retained.is_empty() {
        return Err(Error::Pipeline(
            "no covariate column passed the prevalence and variance filters".into(),
        ));
    }

    // Demographics appended after the filters (always kept).
    let races: BTreeSet<u8> = cohort.patients.iter().map(|p| p.timeline.race).collect();
    let mut feature_names: Vec<String> = retained.iter().map(|(c, _)| c.to_string()).collect();
    feature_names.push("age".into());
    feature_names.push("sex".into());
    for race in &races {
        feature_names.push(format!("race_{race}"));
    }

    let d = feature_names.len();
    let mut covariates = Array2::<f64>::zeros((n, d));
    for (j, (_, col)) in retained.iter().enumerate() {
        for i in 0..n {
            covariates[[i, j]] = col[i];
        }
    }
    let base = retained.len();
    for (i, patient) in cohort.patients.iter().enumerate() {
        let followup_year =
            spec.data_start_year + (f64::from(patient.followup_start) / 365.25) as i32;
        covariates[[i, base]] = f64::from(followup_year - patient.timeline.birth_year);
        covariates[[i, base + 1]] = f64::from(patient.timeline.sex);
        for (k, race) in races.iter().enumerate() {
            covariates[[i, base + 2 + k]] = f64::from(patient.timeline.race == *race);
        }
    }

    let treatment = Array1::from_iter(cohort.patients.iter().map(|p| f64::from(p.treated)));
    let truth = if cohort.patients.iter().all(|p| p.timeline.truth.is_some()) {
        let y0 = Array1::from_iter(
            cohort
                .patients
                .iter()
                .map(|p| p.timeline.truth.as_ref().unwrap().p0),
        );
        let y1 = Array1::from_iter(
            cohort
                .patients
                .iter()
                .map(|p| p.timeline.truth.as_ref().unwrap().p1),
        );
        let e = Array1::from_iter(
            cohort
                .patients
                .iter()
                .map(|p| p.timeline.truth.as_ref().unwrap().assignment_prob),
        );
        Some(GroundTruth::new(y0, y1, Some(e)))
    } else {
        None
    };
    Ok(CohortMatrix {
        feature_names,
        covariates,
        treatment,
        outcome: outcomes,
        patient_ids: cohort
            .patients
            .iter()
            .map(|p| p.timeline.patient_id)
            .collect(),
        med_log_counts: cohort
            .patients
            .iter()
            .map(|p| f64::from(1 + p.med_event_count as u32).log2())
            .collect(),
        truth,
    })
}

/// Shrink the majority arm toward the geometric mean of the arm sizes by
/// weighted sampling without replacement (weights proportional to the
/// log medication counts). The minority arm is kept whole. Deterministic
/// under the seed.
pub fn weighted_sample(matrix: &CohortMatrix, seed: RngSeed) -> Result<CohortMatrix> {
    let (n_treated, n_control) = matrix.arm_counts();
    if n_treated == 0 || n_control == 0 {
        return Err(Error::Positivity(
            "weighted sampling needs both treatment labels".into(),
        ));
    }
    let treated_is_majority = n_treated >= n_control;
    let (n_major, n_minor) = if treated_is_majority {
        (n_treated, n_control)
    } else {
        (n_control, n_treated)
    };
    let target = (((n_major * n_minor) as f64).sqrt().round() as usize).clamp(n_minor, n_major);
    if target == 0 {
        return Err(Error::Sampling(
            "weighted sampling would empty an arm".into(),
        ));
    }

    let majority_flag = f64::from(treated_is_majority);
    let mut rng = seed.rng();
    // Weighted reservoir keys: u^(1/w) ranks a without-replacement sample.
    let mut keyed: Vec<(f64, usize)> = Vec::with_capacity(n_major);
    let mut selected: Vec<usize> = Vec::with_capacity(target + n_minor);
    for i in 0..matrix.n() {
        if matrix.treatment[i] == majority_flag {
            let w = matrix.med_log_counts[i].max(1e-9);
            let u: f64 = rng.gen::<f64>();
            keyed.push((u.powf(1.0 / w), i));
        } else {
            selected.push(i);
        }
    }
    keyed.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    selected.extend(keyed.iter().take(target).map(|&(_, i)| i));
    selected.sort_unstable();

    let rows: Vec<usize> = selected;
    let sub = |v: &Array1<f64>| Array1::from_iter(rows.iter().map(|&i| v[i]));
    Ok(CohortMatrix {
        feature_names: matrix.feature_names.clone(),
        covariates: matrix.covariates.select(ndarray::Axis(0), &rows),
        treatment: sub(&matrix.treatment),
        outcome: sub(&matrix.outcome),
        patient_ids: rows.iter().map(|&i| matrix.patient_ids[i]).collect(),
        med_log_counts: rows.iter().map(|&i| matrix.med_log_counts[i]).collect(),
        truth: matrix.truth.as_ref().map(|t| GroundTruth {
            y0: sub(&t.y0),
            y1: sub(&t.y1),
            tau: sub(&t.tau),
            true_propensity: t.true_propensity.as_ref().map(&sub),
        }),
    })
}

/// Whole-pipeline configuration: eligibility plus covariate thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortSpec {
    pub eligibility: EligibilitySpec,
    pub prevalence_min: f64,
    pub variance_min: f64,
    pub weighted_sampling: bool,
}

impl Default for CohortSpec {
    fn default() -> Self {
        CohortSpec {
            eligibility: EligibilitySpec::default(),
            prevalence_min: 0.05,
            variance_min: 0.2,
            weighted_sampling: true,
        }
    }
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub matrix: CohortMatrix,
    pub tally: ExclusionTally,
    pub label_counts: BTreeMap<String, usize>,
}

/// Run the fixed stage order on raw timelines.
pub fn run_pipeline(
    timelines: Vec<PatientTimeline>,
    spec: &CohortSpec,
    seed: RngSeed,
) -> Result<PipelineOutput> {
    let (eligible, tally) = apply_eligibility(timelines, &spec.eligibility)?;
    let (labeled, _) = label_treatment(
        eligible,
        &spec.eligibility.class_map,
        &spec.eligibility.study_class,
    )?;
    let label_counts = labeled.label_counts.clone();
    let matrix = build_covariates(
        &labeled,
        &spec.eligibility,
        spec.prevalence_min,
        spec.variance_min,
    )?;
    let matrix = if spec.weighted_sampling {
        weighted_sample(&matrix, seed)?
    } else {
        matrix
    };
    Ok(PipelineOutput {
        matrix,
        tally,
        label_counts,
    })
}

/// Newline-delimited JSON: one patient per line.
pub fn write_timelines_ndjson(timelines: &[PatientTimeline], path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    for t in timelines {
        serde_json::to_writer(&mut bytes, t)?;
        bytes.push(b'\n');
    }
    crate::io::atomic_write(path, &bytes)
}

pub fn read_timelines_ndjson(path: &Path) -> Result<Vec<PatientTimeline>> {
    let content = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let t: PatientTimeline = serde_json::from_str(line)
            .map_err(|e| Error::Structural(format!("timeline line {}: {e}", lineno + 1)))?;
        out.push(t);
    }
    Ok(out)
}

pub fn write_tally_json(tally: &ExclusionTally, path: &Path) -> Result<()> {
    crate::io::atomic_write(path, &serde_json::to_vec_pretty(tally)?)
}
