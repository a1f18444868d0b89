//! Synthetic claim-stream generator. Produces seeded, deterministic
//! timelines whose induced cohort matrix carries a known per-patient effect,
//! so the whole pipeline supports ground-truth evaluation.
//!
//! Designed-in structure: one diagnosis code drives both study-drug choice
//! and baseline risk (a confounder), a second one modulates the effect;
//! some patients violate eligibility or treatment rules so every funnel
//! stage removes someone; a rare code and a constant code exercise the
//! prevalence and variance filters.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CodeSystem, DrugClassMap, EventRecord, PatientTimeline, PatientTruth};
use crate::error::{Error, Result};
use crate::seed::RngSeed;

/// True effect surface over two designated diagnosis codes:
/// τ(x) = tau_base + tau_a·1{code_a present} + tau_b·1{code_b present},
/// applied on the outcome-probability scale and clipped with the base risk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectModel {
    pub code_a: String,
    pub code_b: String,
    pub tau_base: f64,
    pub tau_a: f64,
    pub tau_b: f64,
    /// Baseline outcome probability intercept.
    pub outcome_base: f64,
    /// Log-odds shift of choosing the study class when code_a is present.
    pub confounding: f64,
}

impl Default for EffectModel {
    fn default() -> Self {
        EffectModel {
            code_a: "dx000".into(),
            code_b: "dx001".into(),
            tau_base: 0.0,
            tau_a: 0.0,
            tau_b: 0.0,
            outcome_base: 0.25,
            confounding: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClaimsConfig {
    pub n_patients: usize,
    /// Diagnosis vocabulary size (codes `dx000..`), at least 10.
    pub n_dx_codes: usize,
    pub effect: EffectModel,
    pub data_start_year: i32,
    pub horizon_days: u32,
    /// Fraction of patients on no mapped anti-asthma drug.
    pub untreated_rate: f64,
    /// Fraction of patients on two distinct drug classes.
    pub multiclass_rate: f64,
    /// Fraction born at or after the default eligibility cutoff.
    pub ineligible_birth_rate: f64,
    /// Per-code probability of each baseline exclusion diagnosis.
    pub exclusion_dx_rate: f64,
}

impl Default for ClaimsConfig {
    fn default() -> Self {
        ClaimsConfig {
            n_patients: 2000,
            n_dx_codes: 30,
            effect: EffectModel::default(),
            data_start_year: 2007,
            horizon_days: 4000,
            untreated_rate: 0.05,
            multiclass_rate: 0.05,
            ineligible_birth_rate: 0.05,
            exclusion_dx_rate: 0.02,
        }
    }
}

impl ClaimsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::Config("claims: n_patients must be >= 1".into()));
        }
        if self.n_dx_codes < 10 {
            return Err(Error::Config(
                "claims: vocabulary needs >= 10 diagnosis codes".into(),
            ));
        }
        let vocab_ok = |code: &str| -> bool {
            code.strip_prefix("dx")
                .and_then(|s| s.parse::<usize>().ok())
                .is_some_and(|i| i < self.n_dx_codes)
        };
        if !vocab_ok(&self.effect.code_a) || !vocab_ok(&self.effect.code_b) {
            return Err(Error::Config(format!(
                "effect model references codes outside the vocabulary of {} (got {}, {})",
                self.n_dx_codes, self.effect.code_a, self.effect.code_b
            )));
        }
        for (name, rate) in [
            ("untreated_rate", self.untreated_rate),
            ("multiclass_rate", self.multiclass_rate),
            ("ineligible_birth_rate", self.ineligible_birth_rate),
            ("exclusion_dx_rate", self.exclusion_dx_rate),
        ] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("claims: {name} must be in [0,1)")));
            }
        }
        if self.horizon_days < 400 {
            return Err(Error::Config("claims: horizon_days must be >= 400".into()));
        }
        Ok(())
    }
}

const EXCLUSION_CODES: [&str; 5] = ["DEP", "SCZ", "PRK", "MS", "ICP"];
const STROKE_CODE: &str = "STK";
const OUTCOME_CODE: &str = "AD";

/// Generate seeded patient timelines. Per-patient randomness derives from
/// `seed` and the patient id, so output is byte-identical across runs.
pub fn generate_claims(config: &ClaimsConfig, seed: RngSeed) -> Result<Vec<PatientTimeline>> {
    config.validate()?;
    let classes = DrugClassMap::anti_asthma();
    let class_names: Vec<String> = classes.class_names().map(str::to_string).collect();
    let study_class = "leukotriene-antagonist".to_string();
    let soc_classes: Vec<&String> = class_names.iter().filter(|c| **c != study_class).collect();

    let code_a_idx: usize = config.effect.code_a[2..].parse().unwrap();
    let code_b_idx: usize = config.effect.code_b[2..].parse().unwrap();
    let rare_idx = config.n_dx_codes - 2;
    let flat_idx = config.n_dx_codes - 1;

    let mut timelines = Vec::with_capacity(config.n_patients);
    for pid in 0..config.n_patients as u64 {
        let mut rng = seed.derive(pid).rng();
        let birth_year = if rng.gen::<f64>() < config.ineligible_birth_rate {
            1943 + rng.gen_range(0..15)
        } else {
            1941 - rng.gen_range(0..30)
        };
        let sex = u8::from(rng.gen_bool(0.5));
        let race = rng.gen_range(0..4u8);
        let severity: f64 = rng.sample(StandardNormal);

        let horizon = config.horizon_days;
        let mut events: Vec<EventRecord> = Vec::new();
        let push = |day: u32, code: &str, system: CodeSystem, events: &mut Vec<EventRecord>| {
            events.push(EventRecord {
                patient_id: pid,
                day,
                code: code.to_string(),
                system,
            });
        };

        // Treatment initiation day is drawn first: the designed confounder
        // and effect-modifier codes are baseline comorbidities, emitted
        // before it so the observation window always contains them.
        let treat_day = rng.gen_range(horizon / 8..horizon / 2);

        // Diagnosis counts per code; a few columns are designed to fail
        // the prevalence or variance filters downstream.
        let mut has_a = false;
        let mut has_b = false;
        for j in 0..config.n_dx_codes {
            let count: u32 = if j == code_a_idx {
                if rng.gen::<f64>() < 0.4 {
                    1 + poisson(&mut rng, 0.8)
                } else {
                    0
                }
            } else if j == code_b_idx {
                if rng.gen::<f64>() < 0.3 {
                    1 + poisson(&mut rng, 0.6)
                } else {
                    0
                }
            } else if j == rare_idx {
                u32::from(rng.gen::<f64>() < 0.02)
            } else if j == flat_idx {
                1
            } else {
                let base = 0.3 + 1.5 * ((j * 37) % 97) as f64 / 97.0;
                poisson(&mut rng, base * (0.4 * severity).exp())
            };
            if count > 0 {
                if j == code_a_idx {
                    has_a = true;
                }
                if j == code_b_idx {
                    has_b = true;
                }
                let code = format!("dx{j:03}");
                let day_cap = if j == code_a_idx || j == code_b_idx {
                    treat_day
                } else {
                    horizon * 3 / 4
                };
                for _ in 0..count {
                    let day = rng.gen_range(0..day_cap.max(1));
                    push(day, &code, CodeSystem::Diagnosis, &mut events);
                }
            }
        }

        // Treatment choice: confounded by code A.
        let a = f64::from(has_a);
        let b = f64::from(has_b);
        let assignment_prob = crate::learners::sigmoid(config.effect.confounding * (2.0 * a - 1.0));
        let arm_draw = rng.gen::<f64>();
        let study_draw = rng.gen::<f64>();
        let chosen: Vec<&String> = if arm_draw < config.untreated_rate {
            vec![]
        } else if arm_draw < config.untreated_rate + config.multiclass_rate {
            let c1 = &class_names[rng.gen_range(0..class_names.len())];
            let mut c2 = &class_names[rng.gen_range(0..class_names.len())];
            while c2 == c1 {
                c2 = &class_names[rng.gen_range(0..class_names.len())];
            }
            vec![c1, c2]
        } else if study_draw < assignment_prob {
            vec![&study_class]
        } else {
            vec![soc_classes[rng.gen_range(0..soc_classes.len())]]
        };
        let is_study = chosen.len() == 1 && *chosen[0] == study_class;
        let n_med = 1 + poisson(&mut rng, 3.0);
        for k in 0..n_med {
            let class = if chosen.is_empty() {
                None
            } else {
                Some(chosen[k as usize % chosen.len()])
            };
            if let Some(class) = class {
                let codes: Vec<&String> = classes.codes_of(class).unwrap().iter().collect();
                let code = codes[rng.gen_range(0..codes.len())];
                let day = treat_day + rng.gen_range(0..(horizon / 3));
                push(
                    day.min(horizon - 1),
                    code,
                    CodeSystem::Medication,
                    &mut events,
                );
            }
        }

        // Exclusion diagnoses exercise the funnel.
        for code in EXCLUSION_CODES {
            if rng.gen::<f64>() < config.exclusion_dx_rate {
                push(
                    rng.gen_range(0..treat_day.max(1)),
                    code,
                    CodeSystem::Diagnosis,
                    &mut events,
                );
            }
        }
        if rng.gen::<f64>() < config.exclusion_dx_rate {
            // Stroke somewhere in the six years before baseline: inside or
            // outside the default three-year window.
            let offset = rng.gen_range(0..(6 * 365));
            push(
                treat_day.saturating_sub(offset),
                STROKE_CODE,
                CodeSystem::Diagnosis,
                &mut events,
            );
        }
        if rng.gen::<f64>() < 0.02 {
            // Prior onset before baseline.
            push(
                rng.gen_range(0..treat_day.max(1)),
                OUTCOME_CODE,
                CodeSystem::Diagnosis,
                &mut events,
            );
        }

        // Outcome: base risk is confounded with code A; the study arm
        // shifts the probability by the designed effect.
        let p0 = (config.effect.outcome_base + 0.15 * a + 0.05 * b).clamp(0.02, 0.9);
        let tau = config.effect.tau_base + config.effect.tau_a * a + config.effect.tau_b * b;
        let p1 = (p0 + tau).clamp(0.01, 0.99);
        let p_assigned = if is_study { p1 } else { p0 };
        if rng.gen::<f64>() < p_assigned {
            let onset = rng.gen_range(treat_day + 30..horizon);
            push(onset, OUTCOME_CODE, CodeSystem::Diagnosis, &mut events);
        }

        events.sort_by_key(|e| e.day);
        timelines.push(PatientTimeline {
            patient_id: pid,
            birth_year,
            sex,
            race,
            events,
            truth: Some(PatientTruth {
                p0,
                p1,
                assignment_prob,
            }),
        });
    }
    Ok(timelines)
}

fn poisson(rng: &mut impl Rng, lambda: f64) -> u32 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda)
        .map(|d| d.sample(rng) as u32)
        .unwrap_or(0)
}
