//! Study design: opioid-naive identification, index dates, follow-up
//! labeling and censoring.
//!
//! Day arithmetic, relative to the index date `t0`:
//!
//! * opioid lookback (naivety): fills in `[t0 - lookback, t0)`
//! * prior diagnoses: claims on or before `t0`
//! * early window: `(t0, t0 + follow_up_start]`, the usage-observation period
//! * follow-up: `(t0 + follow_up_start, t0 + follow_up_end]`

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::claims::{Gender, Icd9Code, MedicalClaim, ParsedClaims, PatientId, PharmacyClaim, StudyPeriod};
use crate::error::{Error, Result};

/// Diagnosis codes that define opioid use disorder.
pub const OUTCOME_CODES: [&str; 20] = [
    "304.00", "304.01", "304.02", "304.03", "304.70", "304.71", "304.72", "304.73", "305.50", "305.51",
    "305.52", "305.53", "965.00", "965.01", "965.02", "965.09", "E850.0", "E850.2", "E935.0", "E935.2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyWindows {
    pub lookback_days: i64,
    pub usage_days: i64,
    pub follow_up_start_days: i64,
    pub follow_up_end_days: i64,
}

impl Default for StudyWindows {
    fn default() -> Self {
        StudyWindows {
            lookback_days: 365,
            usage_days: 183,
            follow_up_start_days: 183,
            follow_up_end_days: 365,
        }
    }
}

impl StudyWindows {
    pub fn validate(&self) -> Result<()> {
        if self.lookback_days <= 0 {
            return Err(Error::config("windows.lookback_days", "must be > 0"));
        }
        if self.usage_days < 0 || self.follow_up_start_days < 0 {
            return Err(Error::config("windows", "offsets must be >= 0"));
        }
        if self.usage_days > self.follow_up_end_days {
            return Err(Error::config("windows.usage_days", "must not exceed follow_up_end_days"));
        }
        if self.follow_up_start_days > self.follow_up_end_days {
            return Err(Error::config(
                "windows.follow_up_start_days",
                "must not exceed follow_up_end_days",
            ));
        }
        Ok(())
    }
}

/// Which opioid fill anchors a patient's index date.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexRule {
    /// Earliest fill preceded by a clean lookback.
    #[default]
    FirstQualifying,
    /// Latest fill preceded by a clean lookback.
    MostRecentQualifying,
}

/// Treatment of outcome-code diagnoses dated on or before the index date.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorOutcomePolicy {
    /// Keep the patient; the diagnoses become history features.
    #[default]
    RetainAsHistory,
    /// Drop the patient from the cohort.
    Exclude,
}

/// Treatment of outcome-code diagnoses in the early (usage) window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyOutcomePolicy {
    #[default]
    Exclude,
    /// Label OUD, censoring at the early claim.
    Label,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeCodeSet(BTreeSet<Icd9Code>);

impl Default for OutcomeCodeSet {
    fn default() -> Self {
        OutcomeCodeSet(OUTCOME_CODES.iter().map(|c| c.parse().expect("valid outcome code")).collect())
    }
}

impl OutcomeCodeSet {
    pub fn new(codes: impl IntoIterator<Item = Icd9Code>) -> Self {
        OutcomeCodeSet(codes.into_iter().collect())
    }

    pub fn contains(&self, code: &Icd9Code) -> bool {
        self.0.contains(code)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Icd9Code> {
        self.0.iter()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub windows: StudyWindows,
    pub index_rule: IndexRule,
    pub prior_outcome: PriorOutcomePolicy,
    pub early_outcome: EarlyOutcomePolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "OUD")]
    Oud,
    #[serde(rename = "NOUD")]
    Noud,
}

impl Outcome {
    pub fn is_oud(self) -> bool {
        self == Outcome::Oud
    }

    /// Serialized class encoding: OUD is 0, NOUD is 1.
    pub fn code(self) -> u8 {
        match self {
            Outcome::Oud => 0,
            Outcome::Noud => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Outcome> {
        match code {
            0 => Some(Outcome::Oud),
            1 => Some(Outcome::Noud),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Oud => "OUD",
            Outcome::Noud => "NOUD",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CohortMember {
    pub patient: PatientId,
    pub index_date: NaiveDate,
    pub label: Outcome,
    /// First qualifying outcome claim; present iff `label` is OUD.
    pub censor_date: Option<NaiveDate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExclusionReason {
    NoOpioidFill,
    NoCleanLookback,
    NoEligibility,
    UnknownGender,
    InsufficientFollowUp,
    PriorOutcome,
    EarlyOutcome,
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExclusionReason::NoOpioidFill => "no opioid fill",
            ExclusionReason::NoCleanLookback => "no clean lookback",
            ExclusionReason::NoEligibility => "no eligibility record",
            ExclusionReason::UnknownGender => "unknown gender",
            ExclusionReason::InsufficientFollowUp => "insufficient follow-up",
            ExclusionReason::PriorOutcome => "outcome diagnosis before index",
            ExclusionReason::EarlyOutcome => "outcome diagnosis in usage window",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionTally {
    pub patients_seen: usize,
    pub included: usize,
    pub oud: usize,
    pub noud: usize,
    pub excluded: BTreeMap<String, usize>,
}

impl ExclusionTally {
    fn exclude(&mut self, reason: ExclusionReason) {
        *self.excluded.entry(reason.to_string()).or_default() += 1;
    }

    pub fn count(&self, reason: ExclusionReason) -> usize {
        self.excluded.get(&reason.to_string()).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Cohort {
    /// Sorted by patient id.
    pub members: Vec<CohortMember>,
    pub tally: ExclusionTally,
}

fn days(n: i64) -> Duration {
    Duration::days(n)
}

/// Picks the index fill from one patient's opioid fill dates (any order).
///
/// A fill at `d` qualifies when no other opioid fill falls in
/// `[d - lookback, d)` and, given a study period, the whole lookback lies
/// inside it.
pub fn select_index_date(
    fill_dates: &[NaiveDate],
    windows: &StudyWindows,
    rule: IndexRule,
    period: Option<&StudyPeriod>,
) -> Option<NaiveDate> {
    let mut dates = fill_dates.to_vec();
    dates.sort_unstable();
    dates.dedup();
    let lookback = days(windows.lookback_days);
    // `dates` is deduplicated, so the nearest earlier fill is the previous entry.
    let qualifying = dates.iter().enumerate().filter_map(|(i, &d)| {
        let clean = i == 0 || dates[i - 1] < d - lookback;
        let observable = period.is_none_or(|p| d - lookback >= p.start);
        (clean && observable).then_some(d)
    });
    match rule {
        IndexRule::FirstQualifying => qualifying.into_iter().next(),
        IndexRule::MostRecentQualifying => qualifying.last(),
    }
}

/// Opioid-naive patients and their index dates, sorted by patient.
pub fn identify_naive(
    pharmacy: &[PharmacyClaim],
    windows: &StudyWindows,
    rule: IndexRule,
    period: Option<&StudyPeriod>,
) -> Vec<(PatientId, NaiveDate)> {
    let mut fills: BTreeMap<&PatientId, Vec<NaiveDate>> = BTreeMap::new();
    for claim in pharmacy.iter().filter(|c| c.is_opioid) {
        fills.entry(&claim.patient).or_default().push(claim.fill_date);
    }
    fills
        .into_iter()
        .filter_map(|(patient, dates)| {
            select_index_date(&dates, windows, rule, period).map(|d| (patient.clone(), d))
        })
        .collect()
}

/// Labels one naive patient from their medical claims.
///
/// Returns the exclusion reason when the patient has an outcome diagnosis in
/// a window the policy treats as disqualifying.
pub fn label_outcome<'a>(
    patient: &PatientId,
    index_date: NaiveDate,
    medical: impl IntoIterator<Item = &'a MedicalClaim>,
    config: &CohortConfig,
    codes: &OutcomeCodeSet,
) -> std::result::Result<CohortMember, ExclusionReason> {
    let w = &config.windows;
    let early_end = index_date + days(w.follow_up_start_days);
    let follow_end = index_date + days(w.follow_up_end_days);
    let mut first_early: Option<NaiveDate> = None;
    let mut first_follow: Option<NaiveDate> = None;
    let mut prior = false;
    for claim in medical {
        if !codes.contains(&claim.diagnosis) {
            continue;
        }
        let d = claim.service_date;
        if d <= index_date {
            prior = true;
        } else if d <= early_end {
            first_early = Some(first_early.map_or(d, |e| e.min(d)));
        } else if d <= follow_end {
            first_follow = Some(first_follow.map_or(d, |e| e.min(d)));
        }
    }
    if prior && config.prior_outcome == PriorOutcomePolicy::Exclude {
        return Err(ExclusionReason::PriorOutcome);
    }
    let censor = match (first_early, config.early_outcome) {
        (Some(_), EarlyOutcomePolicy::Exclude) => return Err(ExclusionReason::EarlyOutcome),
        (Some(d), EarlyOutcomePolicy::Label) => Some(d),
        (None, _) => first_follow,
    };
    Ok(CohortMember {
        patient: patient.clone(),
        index_date,
        label: if censor.is_some() { Outcome::Oud } else { Outcome::Noud },
        censor_date: censor,
    })
}

/// Applies naive identification, eligibility and gender filters, follow-up
/// observability and outcome labeling. Output is independent of row order.
pub fn build_cohort(
    claims: &ParsedClaims,
    config: &CohortConfig,
    codes: &OutcomeCodeSet,
    period: Option<&StudyPeriod>,
) -> Result<Cohort> {
    config.windows.validate()?;
    let mut universe: BTreeSet<&PatientId> = BTreeSet::new();
    universe.extend(claims.pharmacy.iter().map(|c| &c.patient));
    universe.extend(claims.medical.iter().map(|c| &c.patient));
    universe.extend(claims.eligibility.iter().map(|r| &r.patient));

    let mut opioid_fills: BTreeMap<&PatientId, Vec<NaiveDate>> = BTreeMap::new();
    for claim in claims.pharmacy.iter().filter(|c| c.is_opioid) {
        opioid_fills.entry(&claim.patient).or_default().push(claim.fill_date);
    }
    let mut medical: BTreeMap<&PatientId, Vec<&MedicalClaim>> = BTreeMap::new();
    for claim in &claims.medical {
        medical.entry(&claim.patient).or_default().push(claim);
    }
    let eligibility: BTreeMap<&PatientId, _> = claims.eligibility.iter().map(|r| (&r.patient, r)).collect();

    let mut cohort = Cohort::default();
    cohort.tally.patients_seen = universe.len();
    for patient in universe {
        let Some(fills) = opioid_fills.get(patient) else {
            cohort.tally.exclude(ExclusionReason::NoOpioidFill);
            continue;
        };
        let Some(index_date) = select_index_date(fills, &config.windows, config.index_rule, period) else {
            cohort.tally.exclude(ExclusionReason::NoCleanLookback);
            continue;
        };
        let Some(record) = eligibility.get(patient) else {
            cohort.tally.exclude(ExclusionReason::NoEligibility);
            continue;
        };
        if matches!(record.gender, Gender::Unknown | Gender::Missing) {
            cohort.tally.exclude(ExclusionReason::UnknownGender);
            continue;
        }
        if let Some(p) = period {
            if index_date + days(config.windows.follow_up_end_days) > p.end {
                cohort.tally.exclude(ExclusionReason::InsufficientFollowUp);
                continue;
            }
        }
        let claims_for = medical.get(patient).map(Vec::as_slice).unwrap_or(&[]);
        match label_outcome(patient, index_date, claims_for.iter().copied(), config, codes) {
            Ok(member) => {
                match member.label {
                    Outcome::Oud => cohort.tally.oud += 1,
                    Outcome::Noud => cohort.tally.noud += 1,
                }
                cohort.members.push(member);
            }
            Err(reason) => cohort.tally.exclude(reason),
        }
    }
    cohort.tally.included = cohort.members.len();
    Ok(cohort)
}

const COHORT_HEADER: [&str; 4] = ["patient_id", "index_date", "label", "censor_date"];

pub fn write_cohort<W: Write>(w: W, members: &[CohortMember]) -> std::io::Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(COHORT_HEADER).map_err(std::io::Error::other)?;
    for m in members {
        let censor = m.censor_date.map(|d| d.to_string()).unwrap_or_default();
        wtr.write_record([m.patient.as_str(), &m.index_date.to_string(), m.label.as_str(), &censor])
            .map_err(std::io::Error::other)?;
    }
    wtr.flush()
}

pub fn read_cohort<R: Read>(r: R) -> Result<Vec<CohortMember>> {
    let bad = |msg: String| Error::InvalidInput(format!("cohort.csv: {msg}"));
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let mut members = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        if row.len() != COHORT_HEADER.len() {
            return Err(bad(format!("expected {} fields", COHORT_HEADER.len())));
        }
        let patient = PatientId::new(&row[0])?;
        let index_date: NaiveDate = row[1].parse().map_err(|_| bad(format!("bad date `{}`", &row[1])))?;
        let label = match &row[2] {
            "OUD" => Outcome::Oud,
            "NOUD" => Outcome::Noud,
            other => return Err(bad(format!("bad label `{other}`"))),
        };
        let censor_date = if row[3].is_empty() {
            None
        } else {
            Some(row[3].parse().map_err(|_| bad(format!("bad date `{}`", &row[3])))?)
        };
        if censor_date.is_some() != label.is_oud() {
            return Err(bad(format!("{patient}: censor_date must be present iff label is OUD")));
        }
        members.push(CohortMember {
            patient,
            index_date,
            label,
            censor_date,
        });
    }
    Ok(members)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::EligibilityRecord;

    fn d0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2013, 1, 1).unwrap()
    }

    fn pid(s: &str) -> PatientId {
        PatientId::new(s).unwrap()
    }

    fn fill(p: &str, day: i64) -> PharmacyClaim {
        PharmacyClaim {
            patient: pid(p),
            fill_date: d0() + days(day),
            drug_code: "x".into(),
            days_supply: 30,
            is_opioid: true,
        }
    }

    fn dx(p: &str, day: i64, code: &str) -> MedicalClaim {
        MedicalClaim {
            patient: pid(p),
            service_date: d0() + days(day),
            diagnosis: code.parse().unwrap(),
        }
    }

    fn elig(p: &str, gender: Gender) -> EligibilityRecord {
        EligibilityRecord {
            patient: pid(p),
            age: Some(40),
            gender,
            zip: String::new(),
        }
    }

    #[test]
    fn outcome_code_set_is_the_twenty_codes() {
        let set = OutcomeCodeSet::default();
        assert_eq!(set.len(), 20);
        assert!(set.contains(&"304.01".parse().unwrap()));
        assert!(set.contains(&"E935.2".parse().unwrap()));
        assert!(!set.contains(&"304.60".parse().unwrap()));
    }

    #[test]
    fn single_episode_is_naive_at_first_fill() {
        let claims = vec![fill("A", 0), fill("A", 100)];
        let naive = identify_naive(&claims, &StudyWindows::default(), IndexRule::FirstQualifying, None);
        assert_eq!(naive, vec![(pid("A"), d0())]);
    }

    #[test]
    fn no_clean_lookback_is_excluded() {
        let period = StudyPeriod {
            start: d0() - days(365),
            end: d0() + days(1000),
        };
        // Day -300 is unobservable (lookback starts before the period), and
        // days 0 and 200 each have a fill within the preceding year.
        let claims = vec![fill("A", -300), fill("A", 0), fill("A", 200)];
        let naive = identify_naive(&claims, &StudyWindows::default(), IndexRule::FirstQualifying, Some(&period));
        assert!(naive.is_empty());
    }

    #[test]
    fn index_rule_switch() {
        let fills = [d0(), d0() + days(100), d0() + days(600), d0() + days(700)];
        let w = StudyWindows::default();
        assert_eq!(select_index_date(&fills, &w, IndexRule::FirstQualifying, None), Some(d0()));
        assert_eq!(
            select_index_date(&fills, &w, IndexRule::MostRecentQualifying, None),
            Some(d0() + days(600))
        );
    }

    #[test]
    fn exact_lookback_boundary() {
        let w = StudyWindows::default();
        // A fill exactly 365 days earlier is inside [d - 365, d).
        let fills = [d0(), d0() + days(365)];
        assert_eq!(select_index_date(&fills, &w, IndexRule::MostRecentQualifying, None), Some(d0()));
        let fills = [d0(), d0() + days(366)];
        assert_eq!(
            select_index_date(&fills, &w, IndexRule::MostRecentQualifying, None),
            Some(d0() + days(366))
        );
    }

    #[test]
    fn follow_up_claim_labels_oud_with_censor() {
        let cfg = CohortConfig::default();
        let codes = OutcomeCodeSet::default();
        let claims = [dx("A", 200, "304.01")];
        let m = label_outcome(&pid("A"), d0(), &claims, &cfg, &codes).unwrap();
        assert_eq!(m.label, Outcome::Oud);
        assert_eq!(m.censor_date, Some(d0() + days(200)));
    }

    #[test]
    fn no_post_index_claims_is_noud() {
        let cfg = CohortConfig::default();
        let m = label_outcome(&pid("A"), d0(), [], &cfg, &OutcomeCodeSet::default()).unwrap();
        assert_eq!(m.label, Outcome::Noud);
        assert_eq!(m.censor_date, None);
    }

    #[test]
    fn censor_at_earliest_outcome() {
        let cfg = CohortConfig::default();
        let claims = [dx("A", 300, "305.50"), dx("A", 250, "965.01"), dx("A", 400, "304.00")];
        let m = label_outcome(&pid("A"), d0(), &claims, &cfg, &OutcomeCodeSet::default()).unwrap();
        assert_eq!(m.censor_date, Some(d0() + days(250)));
    }

    #[test]
    fn window_policies() {
        let codes = OutcomeCodeSet::default();
        let early = [dx("A", 50, "304.01")];
        let prior = [dx("A", -10, "304.01")];
        let default = CohortConfig::default();
        assert_eq!(
            label_outcome(&pid("A"), d0(), &early, &default, &codes).unwrap_err(),
            ExclusionReason::EarlyOutcome
        );
        let labeled = CohortConfig {
            early_outcome: EarlyOutcomePolicy::Label,
            ..default
        };
        let m = label_outcome(&pid("A"), d0(), &early, &labeled, &codes).unwrap();
        assert_eq!(m.censor_date, Some(d0() + days(50)));

        let m = label_outcome(&pid("A"), d0(), &prior, &default, &codes).unwrap();
        assert_eq!(m.label, Outcome::Noud);
        let strict = CohortConfig {
            prior_outcome: PriorOutcomePolicy::Exclude,
            ..default
        };
        assert_eq!(
            label_outcome(&pid("A"), d0(), &prior, &strict, &codes).unwrap_err(),
            ExclusionReason::PriorOutcome
        );
        // Beyond follow-up end and non-outcome codes are ignored.
        let late = [dx("A", 366, "304.01"), dx("A", 200, "300.02")];
        let m = label_outcome(&pid("A"), d0(), &late, &default, &codes).unwrap();
        assert_eq!(m.label, Outcome::Noud);
    }

    #[test]
    fn build_cohort_tallies_exclusions() {
        let claims = ParsedClaims {
            pharmacy: vec![fill("A", 0), fill("B", 0), fill("C", 0), fill("D", 0), fill("D", -100)],
            medical: vec![dx("A", 200, "304.01"), dx("E", 1, "300.02")],
            eligibility: vec![
                elig("A", Gender::Male),
                elig("B", Gender::Unknown),
                elig("D", Gender::Female),
                elig("E", Gender::Female),
            ],
            ..Default::default()
        };
        let period = StudyPeriod {
            start: d0() - days(500),
            end: d0() + days(400),
        };
        let cohort = build_cohort(&claims, &CohortConfig::default(), &OutcomeCodeSet::default(), Some(&period)).unwrap();
        assert_eq!(cohort.members.len(), 2);
        assert_eq!(cohort.members[0].patient, pid("A"));
        assert_eq!(cohort.members[0].label, Outcome::Oud);
        assert_eq!(cohort.members[1].patient, pid("D"));
        assert_eq!(cohort.members[1].index_date, d0() - days(100));
        let t = &cohort.tally;
        assert_eq!(t.patients_seen, 5);
        assert_eq!(t.count(ExclusionReason::UnknownGender), 1);
        assert_eq!(t.count(ExclusionReason::NoEligibility), 1);
        assert_eq!(t.count(ExclusionReason::NoOpioidFill), 1);
        assert_eq!((t.oud, t.noud), (1, 1));
    }

    #[test]
    fn insufficient_follow_up_is_excluded() {
        let claims = ParsedClaims {
            pharmacy: vec![fill("A", 0)],
            eligibility: vec![elig("A", Gender::Male)],
            ..Default::default()
        };
        let period = StudyPeriod {
            start: d0() - days(400),
            end: d0() + days(300),
        };
        let cohort = build_cohort(&claims, &CohortConfig::default(), &OutcomeCodeSet::default(), Some(&period)).unwrap();
        assert!(cohort.members.is_empty());
        assert_eq!(cohort.tally.count(ExclusionReason::InsufficientFollowUp), 1);
    }

    #[test]
    fn all_non_naive_gives_empty_cohort() {
        let period = StudyPeriod {
            start: d0(),
            end: d0() + days(2000),
        };
        let claims = ParsedClaims {
            pharmacy: vec![fill("A", 10), fill("B", 20)],
            eligibility: vec![elig("A", Gender::Male), elig("B", Gender::Male)],
            ..Default::default()
        };
        let cohort = build_cohort(&claims, &CohortConfig::default(), &OutcomeCodeSet::default(), Some(&period)).unwrap();
        assert!(cohort.members.is_empty());
        assert_eq!(cohort.tally.count(ExclusionReason::NoCleanLookback), 2);
    }

    #[test]
    fn cohort_csv_round_trip() {
        let members = vec![
            CohortMember {
                patient: pid("A"),
                index_date: d0(),
                label: Outcome::Oud,
                censor_date: Some(d0() + days(200)),
            },
            CohortMember {
                patient: pid("B"),
                index_date: d0(),
                label: Outcome::Noud,
                censor_date: None,
            },
        ];
        let mut buf = Vec::new();
        write_cohort(&mut buf, &members).unwrap();
        assert_eq!(read_cohort(buf.as_slice()).unwrap(), members);
    }
}
