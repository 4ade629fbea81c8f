//! Synthetic claims populations with a planted logistic risk model.
//!
//! Risk is defined over the engineered feature space (demographics,
//! chronicity level, diagnosis counts) and the claims are then written so
//! that featurization reproduces those feature values exactly.

use std::collections::BTreeSet;
use std::io::Write;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::claims::{EligibilityRecord, Gender, Icd9Code, MedicalClaim, PatientId, PharmacyClaim, StudyPeriod};
use crate::cohort::{Outcome, OutcomeCodeSet};
use crate::error::{Error, Result};
use crate::featurize::{dx_feature_name, AgeBucket, ChronicityLevel, Icd9Descriptions, MALE, PDC_HORIZON_DAYS};

const STREAM_LATENT: u64 = 1;
const STREAM_LABEL: u64 = 2;
const STREAM_CLAIMS: u64 = 3;

const OPIOID_NDCS: [&str; 6] = [
    "00406-0123-01",
    "00406-0512-01",
    "00591-0385-01",
    "59011-0410-10",
    "00054-0235-25",
    "63481-0623-70",
];
const OTHER_NDCS: [&str; 5] = [
    "00093-7146-56",
    "00378-0208-01",
    "00781-1506-10",
    "68180-0513-01",
    "16729-0020-01",
];
const FILL_SUPPLIES: [u32; 8] = [7, 10, 14, 30, 30, 30, 60, 90];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedEffect {
    pub feature: String,
    pub log_odds: f64,
}

impl PlantedEffect {
    pub fn odds_ratio(feature: &str, or: f64) -> Self {
        PlantedEffect {
            feature: feature.to_string(),
            log_odds: or.ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionEffect {
    pub features: [String; 2],
    pub log_odds: f64,
}

/// A latent diagnosis-history feature. Present with probability
/// `prevalence`; a present feature is recorded `1 + Poisson(extra_count_mean)`
/// times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DxFeatureSpec {
    pub code: Icd9Code,
    pub prevalence: f64,
    #[serde(default)]
    pub extra_count_mean: f64,
}

impl DxFeatureSpec {
    fn new(code: &str, prevalence: f64, extra_count_mean: f64) -> Self {
        DxFeatureSpec {
            code: code.parse().expect("valid code"),
            prevalence,
            extra_count_mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_patients: usize,
    pub seed: u64,
    pub target_oud_prevalence: f64,
    pub male_fraction: f64,
    pub unknown_gender_fraction: f64,
    pub missing_age_fraction: f64,
    /// Shares for under 18, 18-25, 26-35, 36-55, 56-64, 65+.
    pub age_distribution: [f64; 6],
    /// Shares for non, less, moderate and highly chronic use.
    pub chronicity_distribution: [f64; 4],
    pub dx_features: Vec<DxFeatureSpec>,
    pub planted_effects: Vec<PlantedEffect>,
    pub interaction_effects: Vec<InteractionEffect>,
    /// Mean number of unrelated diagnosis claims per patient.
    pub noise_claims_mean: f64,
    pub non_opioid_fills_mean: f64,
    pub study_period: StudyPeriod,
    /// Fixed intercept; calibrated to the target prevalence when absent.
    pub intercept: Option<f64>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let effects = [
            (MALE, 1.81),
            ("age_18_25", 7.47),
            ("age_26_35", 11.27),
            ("age_36_55", 4.13),
            ("age_56_64", 1.60),
            ("chronicity_less", 4.14),
            ("chronicity_moderate", 13.66),
            ("chronicity_high", 12.25),
            ("dx_965.01", 12.79),
            ("dx_965.00", 4.32),
            ("dx_965.09", 5.63),
            ("dx_304.00", 30.0),
            ("dx_304.01", 30.0),
            ("dx_305.50", 25.0),
            ("dx_304.71", 25.0),
            ("dx_292.0", 4.0),
            ("dx_300.02", 2.5),
            ("dx_311", 2.0),
            ("dx_303.90", 3.0),
        ];
        GeneratorConfig {
            n_patients: 20_000,
            seed: 42,
            target_oud_prevalence: 0.01,
            male_fraction: 0.4451,
            unknown_gender_fraction: 0.0002,
            missing_age_fraction: 0.0072,
            age_distribution: [0.0694, 0.1175, 0.1528, 0.3561, 0.1821, 0.1220],
            chronicity_distribution: [0.70, 0.15, 0.09, 0.06],
            dx_features: vec![
                DxFeatureSpec::new("965.01", 0.04, 0.0),
                DxFeatureSpec::new("965.00", 0.04, 0.0),
                DxFeatureSpec::new("965.09", 0.04, 0.0),
                DxFeatureSpec::new("304.00", 0.05, 0.0),
                DxFeatureSpec::new("304.01", 0.04, 0.0),
                DxFeatureSpec::new("305.50", 0.05, 0.0),
                DxFeatureSpec::new("304.71", 0.04, 0.0),
                DxFeatureSpec::new("292.0", 0.05, 0.0),
                DxFeatureSpec::new("300.02", 0.08, 0.0),
                DxFeatureSpec::new("311", 0.10, 0.0),
                DxFeatureSpec::new("303.90", 0.05, 0.0),
                DxFeatureSpec::new("070.54", 0.15, 0.0),
                DxFeatureSpec::new("305.1", 0.30, 0.0),
                DxFeatureSpec::new("724.2", 0.25, 1.5),
                DxFeatureSpec::new("338.29", 0.12, 1.0),
                DxFeatureSpec::new("401.9", 0.20, 1.0),
                DxFeatureSpec::new("272.4", 0.15, 0.5),
            ],
            planted_effects: effects.iter().map(|&(f, or)| PlantedEffect::odds_ratio(f, or)).collect(),
            // A synergy the main effects cannot express, and sub-additive
            // dependency codes: a second code adds little once one is seen.
            interaction_effects: [
                ("dx_070.54", "dx_305.1", 30.0),
                ("dx_304.00", "dx_305.50", 0.02),
                ("dx_304.00", "dx_304.01", 0.02),
                ("dx_304.01", "dx_305.50", 0.02),
                ("dx_304.71", "dx_304.00", 0.02),
            ]
            .iter()
            .map(|&(a, b, or)| InteractionEffect {
                features: [a.into(), b.into()],
                log_odds: f64::ln(or),
            })
            .collect(),
            noise_claims_mean: 2.0,
            non_opioid_fills_mean: 1.5,
            study_period: StudyPeriod {
                start: NaiveDate::from_ymd_opt(2011, 1, 1).expect("valid date"),
                end: NaiveDate::from_ymd_opt(2015, 12, 31).expect("valid date"),
            },
            intercept: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Term {
    Male,
    Age(AgeBucket),
    Chronicity(ChronicityLevel),
    Dx(usize),
}

fn check_fraction(field: &str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::config(field, format!("{value} is not in [0, 1]")));
    }
    Ok(())
}

fn check_distribution(field: &str, shares: &[f64]) -> Result<()> {
    for &s in shares {
        check_fraction(field, s)?;
    }
    let sum: f64 = shares.iter().sum();
    if (sum - 1.0).abs() > 1e-3 {
        return Err(Error::config(field, format!("shares sum to {sum}, expected 1")));
    }
    Ok(())
}

impl GeneratorConfig {
    pub fn without_effects(mut self) -> Self {
        self.planted_effects.clear();
        self.interaction_effects.clear();
        self
    }

    fn resolve(&self, feature: &str) -> Option<Term> {
        if feature == MALE {
            return Some(Term::Male);
        }
        if let Some(b) = AgeBucket::ALL.into_iter().find(|b| b.feature_name() == feature) {
            return Some(Term::Age(b));
        }
        if let Some(c) = ChronicityLevel::ALL.into_iter().find(|c| c.feature_name() == feature) {
            return Some(Term::Chronicity(c));
        }
        self.dx_features
            .iter()
            .position(|d| dx_feature_name(&d.code) == feature)
            .map(Term::Dx)
    }

    fn risk_model(&self) -> Result<RiskModel> {
        let field = |i, name| format!("{name}[{i}]");
        let mut main = Vec::new();
        for (i, e) in self.planted_effects.iter().enumerate() {
            let term = self
                .resolve(&e.feature)
                .ok_or_else(|| Error::config(field(i, "planted_effects"), format!("unknown feature `{}`", e.feature)))?;
            if !e.log_odds.is_finite() {
                return Err(Error::config(field(i, "planted_effects"), "log-odds must be finite"));
            }
            main.push((term, e.log_odds));
        }
        let mut pairs = Vec::new();
        for (i, e) in self.interaction_effects.iter().enumerate() {
            let resolve = |f: &String| {
                self.resolve(f)
                    .ok_or_else(|| Error::config(field(i, "interaction_effects"), format!("unknown feature `{f}`")))
            };
            if !e.log_odds.is_finite() {
                return Err(Error::config(field(i, "interaction_effects"), "log-odds must be finite"));
            }
            pairs.push((resolve(&e.features[0])?, resolve(&e.features[1])?, e.log_odds));
        }
        Ok(RiskModel { main, pairs })
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.target_oud_prevalence;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::config("target_oud_prevalence", format!("{p} is not in (0, 1)")));
        }
        check_fraction("male_fraction", self.male_fraction)?;
        check_fraction("unknown_gender_fraction", self.unknown_gender_fraction)?;
        check_fraction("missing_age_fraction", self.missing_age_fraction)?;
        check_distribution("age_distribution", &self.age_distribution)?;
        check_distribution("chronicity_distribution", &self.chronicity_distribution)?;
        let mut seen = BTreeSet::new();
        for (i, d) in self.dx_features.iter().enumerate() {
            let field = format!("dx_features[{i}]");
            check_fraction(&field, d.prevalence)?;
            if !(d.extra_count_mean >= 0.0 && d.extra_count_mean.is_finite()) {
                return Err(Error::config(field, "extra_count_mean must be >= 0"));
            }
            if !seen.insert(&d.code) {
                return Err(Error::config(field, format!("duplicate code {}", d.code)));
            }
        }
        if !(self.noise_claims_mean >= 0.0 && self.non_opioid_fills_mean >= 0.0) {
            return Err(Error::config("noise_claims_mean", "means must be >= 0"));
        }
        let span = (self.study_period.end - self.study_period.start).num_days();
        if span < 2 * PDC_HORIZON_DAYS {
            return Err(Error::config("study_period", "must span at least two years"));
        }
        if let Some(b) = self.intercept {
            if !b.is_finite() {
                return Err(Error::config("intercept", "must be finite"));
            }
        }
        self.risk_model().map(|_| ())
    }
}

struct RiskModel {
    main: Vec<(Term, f64)>,
    pairs: Vec<(Term, Term, f64)>,
}

impl RiskModel {
    fn score(&self, p: &Latent) -> f64 {
        let main: f64 = self.main.iter().map(|&(t, b)| b * p.value(t)).sum();
        let pairs: f64 = self.pairs.iter().map(|&(a, c, b)| b * p.value(a) * p.value(c)).sum();
        main + pairs
    }
}

/// Engineered-feature values of one synthetic patient.
#[derive(Debug, Clone)]
struct Latent {
    gender: Gender,
    age: u32,
    age_recorded: bool,
    covered_days: u32,
    dx_counts: Vec<u32>,
    index_date: NaiveDate,
}

impl Latent {
    fn age_bucket(&self) -> AgeBucket {
        AgeBucket::from_age(self.age)
    }

    fn chronicity(&self) -> ChronicityLevel {
        ChronicityLevel::from_pdc(self.covered_days as f64 / PDC_HORIZON_DAYS as f64)
    }

    fn value(&self, term: Term) -> f64 {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        match term {
            Term::Male => flag(self.gender == Gender::Male),
            Term::Age(b) => flag(self.age_bucket() == b),
            Term::Chronicity(c) => flag(self.chronicity() == c),
            Term::Dx(i) => self.dx_counts[i] as f64,
        }
    }
}

fn rng_for(seed: u64, purpose: u64, patient: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(patient as u64);
    rng
}

fn pick_share(rng: &mut ChaCha8Rng, shares: &[f64]) -> usize {
    let total: f64 = shares.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &s) in shares.iter().enumerate() {
        if u < s {
            return i;
        }
        u -= s;
    }
    shares.iter().rposition(|&s| s > 0.0).unwrap_or(0)
}

/// Inclusive covered-day range realizing each chronicity level.
fn covered_day_range(level: ChronicityLevel) -> (u32, u32) {
    match level {
        ChronicityLevel::NonChronic => (1, 72),
        ChronicityLevel::LessChronic => (73, 182),
        ChronicityLevel::ModerateChronic => (183, 291),
        ChronicityLevel::HighChronic => (292, 365),
    }
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u32
}

fn sample_latent(config: &GeneratorConfig, i: usize) -> Latent {
    let mut rng = rng_for(config.seed, STREAM_LATENT, i);
    let gender = if rng.random_bool(config.unknown_gender_fraction) {
        Gender::Unknown
    } else if rng.random_bool(config.male_fraction) {
        Gender::Male
    } else {
        Gender::Female
    };
    let (lo, hi) = AgeBucket::ALL[pick_share(&mut rng, &config.age_distribution)].range();
    let age = rng.random_range(lo..=hi);
    let age_recorded = !rng.random_bool(config.missing_age_fraction);
    let level = ChronicityLevel::ALL[pick_share(&mut rng, &config.chronicity_distribution)];
    let (lo, hi) = covered_day_range(level);
    let covered_days = rng.random_range(lo..=hi);
    let dx_counts = config
        .dx_features
        .iter()
        .map(|d| {
            if rng.random_bool(d.prevalence) {
                1 + poisson(&mut rng, d.extra_count_mean)
            } else {
                0
            }
        })
        .collect();
    let first = config.study_period.start + Duration::days(PDC_HORIZON_DAYS);
    let last = config.study_period.end - Duration::days(PDC_HORIZON_DAYS);
    let index_date = first + Duration::days(rng.random_range(0..=(last - first).num_days()));
    Latent {
        gender,
        age,
        age_recorded,
        covered_days,
        dx_counts,
        index_date,
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn mean_probability(scores: &[f64], intercept: f64) -> f64 {
    scores.iter().map(|&s| sigmoid(intercept + s)).sum::<f64>() / scores.len() as f64
}

const INTERCEPT_BOUND: f64 = 50.0;

/// Bisection for the intercept whose mean probability over `scores` equals
/// `target`.
pub fn calibrate_on_scores(scores: &[f64], target: f64) -> Result<f64> {
    if scores.is_empty() {
        return Ok((target / (1.0 - target)).ln());
    }
    let (mut lo, mut hi) = (-INTERCEPT_BOUND, INTERCEPT_BOUND);
    let (p_lo, p_hi) = (mean_probability(scores, lo), mean_probability(scores, hi));
    if !(p_lo <= target && target <= p_hi) {
        return Err(Error::UnattainablePrevalence {
            target,
            low: p_lo,
            high: p_hi,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if mean_probability(scores, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn latent_scores(config: &GeneratorConfig) -> Result<(Vec<Latent>, Vec<f64>)> {
    config.validate()?;
    let model = config.risk_model()?;
    let latents: Vec<Latent> = (0..config.n_patients)
        .into_par_iter()
        .map(|i| sample_latent(config, i))
        .collect();
    let scores = latents.iter().map(|p| model.score(p)).collect();
    Ok((latents, scores))
}

/// Intercept making the mean planted probability over the realized latent
/// population equal the target prevalence.
pub fn calibrate_intercept(config: &GeneratorConfig) -> Result<f64> {
    let (_, scores) = latent_scores(config)?;
    calibrate_on_scores(&scores, config.target_oud_prevalence)
}

/// Mean planted probability at a given intercept, before label sampling.
pub fn expected_prevalence(config: &GeneratorConfig, intercept: f64) -> Result<f64> {
    let (_, scores) = latent_scores(config)?;
    if scores.is_empty() {
        return Ok(sigmoid(intercept));
    }
    Ok(mean_probability(&scores, intercept))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub patient: PatientId,
    pub true_probability: f64,
    pub label: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedModel {
    pub intercept: f64,
    pub target_prevalence: f64,
    pub expected_prevalence: f64,
    pub realized_prevalence: f64,
    pub effects: Vec<PlantedEffect>,
    pub interaction_effects: Vec<InteractionEffect>,
}

impl PlantedModel {
    /// Names of features carrying planted signal, main or interaction.
    pub fn signal_features(&self) -> BTreeSet<String> {
        self.effects
            .iter()
            .filter(|e| e.log_odds != 0.0)
            .map(|e| e.feature.clone())
            .chain(
                self.interaction_effects
                    .iter()
                    .filter(|e| e.log_odds != 0.0)
                    .flat_map(|e| e.features.iter().cloned()),
            )
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub rows: Vec<GroundTruthRow>,
    pub model: PlantedModel,
}

#[derive(Debug, Clone)]
pub struct SyntheticPopulation {
    pub pharmacy: Vec<PharmacyClaim>,
    pub medical: Vec<MedicalClaim>,
    pub eligibility: Vec<EligibilityRecord>,
    pub ground_truth: GroundTruth,
}

struct PatientClaims {
    pharmacy: Vec<PharmacyClaim>,
    medical: Vec<MedicalClaim>,
    eligibility: EligibilityRecord,
}

fn uniform_date(rng: &mut ChaCha8Rng, from: NaiveDate, to: NaiveDate) -> NaiveDate {
    from + Duration::days(rng.random_range(0..=(to - from).num_days()))
}

/// Non-overlapping fills starting at the index date and covering exactly
/// `covered` of the 365 post-index days.
fn opioid_fills(rng: &mut ChaCha8Rng, index: NaiveDate, covered: u32) -> Vec<(NaiveDate, u32)> {
    let mut supplies = Vec::new();
    let mut left = covered;
    while left > 0 {
        let s = FILL_SUPPLIES[rng.random_range(0..FILL_SUPPLIES.len())].min(left);
        supplies.push(s);
        left -= s;
    }
    let slack = PDC_HORIZON_DAYS as u32 - covered;
    let mut cuts: Vec<u32> = (1..supplies.len()).map(|_| rng.random_range(0..=slack)).collect();
    cuts.sort_unstable();
    cuts.insert(0, 0);
    let mut day = 0;
    let mut fills = Vec::with_capacity(supplies.len());
    for (k, &s) in supplies.iter().enumerate() {
        if k > 0 {
            day += cuts[k] - cuts[k - 1];
        }
        fills.push((index + Duration::days(day as i64), s));
        day += s;
    }
    fills
}

fn emit_claims(
    config: &GeneratorConfig,
    i: usize,
    patient: &PatientId,
    latent: &Latent,
    label: Outcome,
    outcome_codes: &[Icd9Code],
    outcome_set: &OutcomeCodeSet,
    noise_codes: &[Icd9Code],
) -> PatientClaims {
    let mut rng = rng_for(config.seed, STREAM_CLAIMS, i);
    let t0 = latent.index_date;
    let days = Duration::days;

    let mut pharmacy: Vec<PharmacyClaim> = opioid_fills(&mut rng, t0, latent.covered_days)
        .into_iter()
        .map(|(date, supply)| PharmacyClaim {
            patient: patient.clone(),
            fill_date: date,
            drug_code: OPIOID_NDCS[rng.random_range(0..OPIOID_NDCS.len())].to_string(),
            days_supply: supply,
            is_opioid: true,
        })
        .collect();
    for _ in 0..poisson(&mut rng, config.non_opioid_fills_mean) {
        pharmacy.push(PharmacyClaim {
            patient: patient.clone(),
            fill_date: uniform_date(&mut rng, t0 - days(PDC_HORIZON_DAYS), t0 + days(PDC_HORIZON_DAYS)),
            drug_code: OTHER_NDCS[rng.random_range(0..OTHER_NDCS.len())].to_string(),
            days_supply: [30, 90][rng.random_range(0..2)],
            is_opioid: false,
        });
    }

    let mut medical = Vec::new();
    let mut push = |date, code: &Icd9Code| {
        medical.push(MedicalClaim {
            patient: patient.clone(),
            service_date: date,
            diagnosis: code.clone(),
        })
    };
    let history_start = t0 - days(365);
    for (spec, &count) in config.dx_features.iter().zip(&latent.dx_counts) {
        // Outcome codes stay strictly before the index date so they read as
        // history rather than an early outcome.
        let end = if outcome_set.contains(&spec.code) {
            t0 - days(1)
        } else {
            t0 + days(183)
        };
        for _ in 0..count {
            push(uniform_date(&mut rng, history_start, end), &spec.code);
        }
    }
    if !noise_codes.is_empty() {
        for _ in 0..poisson(&mut rng, config.noise_claims_mean) {
            let code = &noise_codes[rng.random_range(0..noise_codes.len())];
            push(uniform_date(&mut rng, history_start - days(90), t0 + days(365)), code);
        }
    }
    if label.is_oud() {
        for _ in 0..rng.random_range(1..=2) {
            let code = &outcome_codes[rng.random_range(0..outcome_codes.len())];
            push(uniform_date(&mut rng, t0 + days(184), t0 + days(365)), code);
        }
    }

    pharmacy.sort_by(|a, b| (a.fill_date, &a.drug_code).cmp(&(b.fill_date, &b.drug_code)));
    medical.sort_by(|a, b| (a.service_date, &a.diagnosis).cmp(&(b.service_date, &b.diagnosis)));
    let eligibility = EligibilityRecord {
        patient: patient.clone(),
        age: latent.age_recorded.then_some(latent.age),
        gender: latent.gender,
        zip: format!("0{:04}", rng.random_range(1001..=2791)),
    };
    PatientClaims {
        pharmacy,
        medical,
        eligibility,
    }
}

pub fn patient_id(i: usize) -> PatientId {
    PatientId::new(format!("P{i:07}")).expect("valid id")
}

/// Generates a population. Deterministic in `config.seed` and independent of
/// thread count: every patient draws from its own streams.
pub fn generate(config: &GeneratorConfig) -> Result<SyntheticPopulation> {
    let (latents, scores) = latent_scores(config)?;
    let intercept = match config.intercept {
        Some(b) => b,
        None => calibrate_on_scores(&scores, config.target_oud_prevalence)?,
    };
    let outcome_set = OutcomeCodeSet::default();
    let outcome_codes: Vec<Icd9Code> = outcome_set.iter().cloned().collect();
    let planted: BTreeSet<&Icd9Code> = config.dx_features.iter().map(|d| &d.code).collect();
    let noise_codes: Vec<Icd9Code> = Icd9Descriptions::bundled()
        .codes()
        .into_iter()
        .filter(|c| !outcome_set.contains(c) && !planted.contains(c))
        .collect();

    let per_patient: Vec<(GroundTruthRow, PatientClaims)> = latents
        .par_iter()
        .zip(scores.par_iter())
        .enumerate()
        .map(|(i, (latent, &score))| {
            let p = sigmoid(intercept + score);
            let mut label_rng = rng_for(config.seed, STREAM_LABEL, i);
            let label = if label_rng.random::<f64>() < p {
                Outcome::Oud
            } else {
                Outcome::Noud
            };
            let patient = patient_id(i);
            let claims = emit_claims(config, i, &patient, latent, label, &outcome_codes, &outcome_set, &noise_codes);
            let row = GroundTruthRow {
                patient,
                true_probability: p,
                label,
            };
            (row, claims)
        })
        .collect();

    let n = per_patient.len();
    let mut pop = SyntheticPopulation {
        pharmacy: Vec::new(),
        medical: Vec::new(),
        eligibility: Vec::with_capacity(n),
        ground_truth: GroundTruth {
            rows: Vec::with_capacity(n),
            model: PlantedModel {
                intercept,
                target_prevalence: config.target_oud_prevalence,
                expected_prevalence: if n == 0 { 0.0 } else { mean_probability(&scores, intercept) },
                realized_prevalence: 0.0,
                effects: config.planted_effects.clone(),
                interaction_effects: config.interaction_effects.clone(),
            },
        },
    };
    for (row, claims) in per_patient {
        pop.ground_truth.rows.push(row);
        pop.pharmacy.extend(claims.pharmacy);
        pop.medical.extend(claims.medical);
        pop.eligibility.push(claims.eligibility);
    }
    if n > 0 {
        let oud = pop.ground_truth.rows.iter().filter(|r| r.label.is_oud()).count();
        pop.ground_truth.model.realized_prevalence = oud as f64 / n as f64;
    }
    Ok(pop)
}

/// `patient_id,true_probability,label` with OUD encoded 0 and NOUD 1.
pub fn write_ground_truth<W: Write>(w: W, rows: &[GroundTruthRow]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["patient_id", "true_probability", "label"])?;
    for r in rows {
        wtr.write_record([
            r.patient.as_str(),
            &format!("{:.12}", r.true_probability),
            &r.label.code().to_string(),
        ])?;
    }
    wtr.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::OpioidNdcTable;
    use crate::cohort::{select_index_date, StudyWindows};
    use crate::featurize::compute_pdc;

    fn small(n: usize, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            n_patients: n,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn default_config_is_valid() {
        GeneratorConfig::default().validate().unwrap();
        let json = serde_json::to_string(&GeneratorConfig::default()).unwrap();
        let back: GeneratorConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, GeneratorConfig::default());
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = small(10, 1);
        c.target_oud_prevalence = 1.0;
        assert!(c.validate().is_err());
        let mut c = small(10, 1);
        c.age_distribution[0] += 0.1;
        assert!(c.validate().is_err());
        let mut c = small(10, 1);
        c.planted_effects.push(PlantedEffect::odds_ratio("dx_999.9", 2.0));
        assert!(matches!(c.validate(), Err(Error::InvalidConfig { .. })));
    }

    #[test]
    fn zero_patients_gives_empty_outputs() {
        let pop = generate(&small(0, 1)).unwrap();
        assert!(pop.pharmacy.is_empty() && pop.medical.is_empty() && pop.eligibility.is_empty());
        assert!(pop.ground_truth.rows.is_empty());
    }

    #[test]
    fn intercept_closed_forms() {
        let mut c = small(500, 3).without_effects();
        c.target_oud_prevalence = 0.5;
        assert!(calibrate_intercept(&c).unwrap().abs() < 1e-9);
        c.target_oud_prevalence = 0.01;
        let expected = (0.01f64 / 0.99).ln();
        assert!((calibrate_intercept(&c).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn calibrated_intercept_hits_target() {
        let c = small(5000, 9);
        let b = calibrate_intercept(&c).unwrap();
        // Re-simulate the planted probabilities directly from the latents.
        let model = c.risk_model().unwrap();
        let mean = (0..c.n_patients)
            .map(|i| sigmoid(b + model.score(&sample_latent(&c, i))))
            .sum::<f64>()
            / c.n_patients as f64;
        assert!((mean - c.target_oud_prevalence).abs() < 1e-3);
    }

    #[test]
    fn saturated_effects_are_unattainable() {
        assert!(matches!(
            calibrate_on_scores(&[200.0, 200.0], 0.01),
            Err(Error::UnattainablePrevalence { .. })
        ));
    }

    #[test]
    fn drug_codes_classify_as_emitted() {
        let table = OpioidNdcTable::bundled();
        assert!(OPIOID_NDCS.iter().all(|c| table.classify(c)));
        assert!(OTHER_NDCS.iter().all(|c| !table.classify(c)));
    }

    #[test]
    fn fills_realize_exact_coverage() {
        let index = NaiveDate::from_ymd_opt(2013, 5, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for covered in [1, 72, 73, 182, 183, 291, 292, 364, 365] {
            let fills = opioid_fills(&mut rng, index, covered);
            assert_eq!(fills[0].0, index);
            assert_eq!(compute_pdc(&fills, index), covered as f64 / 365.0);
        }
    }

    #[test]
    fn every_patient_is_naive_at_generated_index() {
        let c = small(300, 5);
        let pop = generate(&c).unwrap();
        let windows = StudyWindows::default();
        for (i, row) in pop.ground_truth.rows.iter().enumerate() {
            let fills: Vec<NaiveDate> = pop
                .pharmacy
                .iter()
                .filter(|f| f.patient == row.patient && f.is_opioid)
                .map(|f| f.fill_date)
                .collect();
            assert!(!fills.is_empty());
            let latent = sample_latent(&c, i);
            let idx = select_index_date(&fills, &windows, Default::default(), Some(&c.study_period));
            assert_eq!(idx, Some(latent.index_date));
        }
    }

    #[test]
    fn same_seed_same_output() {
        let a = generate(&small(200, 11)).unwrap();
        let b = generate(&small(200, 11)).unwrap();
        assert_eq!(a.ground_truth, b.ground_truth);
        assert_eq!(a.medical, b.medical);
        assert_eq!(a.pharmacy, b.pharmacy);
        let c = generate(&small(200, 12)).unwrap();
        assert_ne!(a.ground_truth.rows, c.ground_truth.rows);
    }

    #[test]
    fn oud_patients_get_follow_up_outcome_claim() {
        let mut c = small(2000, 2);
        c.target_oud_prevalence = 0.1;
        let pop = generate(&c).unwrap();
        let set = OutcomeCodeSet::default();
        for (i, row) in pop.ground_truth.rows.iter().enumerate() {
            let t0 = sample_latent(&c, i).index_date;
            let follow = pop.medical.iter().any(|m| {
                m.patient == row.patient
                    && set.contains(&m.diagnosis)
                    && m.service_date > t0 + Duration::days(183)
                    && m.service_date <= t0 + Duration::days(365)
            });
            assert_eq!(follow, row.label.is_oud(), "{}", row.patient);
        }
    }
}
