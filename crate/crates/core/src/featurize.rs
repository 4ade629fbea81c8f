//! Patient-level features: demographics, PDC-based chronicity and ICD-9
//! diagnosis counts over the history and usage windows.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::claims::{EligibilityRecord, Gender, Icd9Code, MedicalClaim, ParsedClaims, PatientId, PharmacyClaim};
use crate::cohort::{CohortMember, Outcome, OutcomeCodeSet, StudyWindows};
use crate::error::{Error, Result};
use crate::matrix::{FeatureInfo, FeatureKind, FeatureMatrix};

const BUNDLED_DESCRIPTIONS: &str = include_str!("../data/icd9_descriptions.csv");
const BUNDLED_ABLATION_KEYWORDS: &str = include_str!("../data/dependency_keywords.txt");

/// Days of coverage the PDC denominator spans.
pub const PDC_HORIZON_DAYS: i64 = 365;

pub const MALE: &str = "male";
pub const DX_PREFIX: &str = "dx_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeBucket {
    Under18,
    A18To25,
    A26To35,
    A36To55,
    A56To64,
    A65Plus,
}

impl AgeBucket {
    pub const ALL: [AgeBucket; 6] = [
        AgeBucket::Under18,
        AgeBucket::A18To25,
        AgeBucket::A26To35,
        AgeBucket::A36To55,
        AgeBucket::A56To64,
        AgeBucket::A65Plus,
    ];

    pub fn from_age(age: u32) -> AgeBucket {
        match age {
            0..=17 => AgeBucket::Under18,
            18..=25 => AgeBucket::A18To25,
            26..=35 => AgeBucket::A26To35,
            36..=55 => AgeBucket::A36To55,
            56..=64 => AgeBucket::A56To64,
            _ => AgeBucket::A65Plus,
        }
    }

    /// Inclusive age range; the open top bucket is capped at 90.
    pub fn range(self) -> (u32, u32) {
        match self {
            AgeBucket::Under18 => (0, 17),
            AgeBucket::A18To25 => (18, 25),
            AgeBucket::A26To35 => (26, 35),
            AgeBucket::A36To55 => (36, 55),
            AgeBucket::A56To64 => (56, 64),
            AgeBucket::A65Plus => (65, 90),
        }
    }

    pub fn feature_name(self) -> &'static str {
        match self {
            AgeBucket::Under18 => "age_under_18",
            AgeBucket::A18To25 => "age_18_25",
            AgeBucket::A26To35 => "age_26_35",
            AgeBucket::A36To55 => "age_36_55",
            AgeBucket::A56To64 => "age_56_64",
            AgeBucket::A65Plus => "age_65_plus",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChronicityLevel {
    NonChronic,
    LessChronic,
    ModerateChronic,
    HighChronic,
}

impl ChronicityLevel {
    pub const ALL: [ChronicityLevel; 4] = [
        ChronicityLevel::NonChronic,
        ChronicityLevel::LessChronic,
        ChronicityLevel::ModerateChronic,
        ChronicityLevel::HighChronic,
    ];

    /// Half-open bands: [0, .2), [.2, .5), [.5, .8), [.8, 1].
    pub fn from_pdc(pdc: f64) -> ChronicityLevel {
        if pdc >= 0.80 {
            ChronicityLevel::HighChronic
        } else if pdc >= 0.50 {
            ChronicityLevel::ModerateChronic
        } else if pdc >= 0.20 {
            ChronicityLevel::LessChronic
        } else {
            ChronicityLevel::NonChronic
        }
    }

    pub fn feature_name(self) -> &'static str {
        match self {
            ChronicityLevel::NonChronic => "chronicity_non",
            ChronicityLevel::LessChronic => "chronicity_less",
            ChronicityLevel::ModerateChronic => "chronicity_moderate",
            ChronicityLevel::HighChronic => "chronicity_high",
        }
    }
}

pub fn dx_feature_name(code: &Icd9Code) -> String {
    format!("{DX_PREFIX}{code}")
}

/// Proportion of days covered over `[index, index + 365)`.
///
/// Each fill covers `[fill_date, fill_date + days_supply)`; overlapping
/// coverage counts once and coverage past the horizon is truncated. Fills
/// outside the horizon are ignored.
pub fn compute_pdc(fills: &[(NaiveDate, u32)], index_date: NaiveDate) -> f64 {
    let horizon = PDC_HORIZON_DAYS;
    let mut intervals: Vec<(i64, i64)> = fills
        .iter()
        .filter_map(|&(date, supply)| {
            let start = (date - index_date).num_days();
            if !(0..horizon).contains(&start) {
                return None;
            }
            let end = (start + supply as i64).min(horizon);
            (end > start).then_some((start, end))
        })
        .collect();
    intervals.sort_unstable();
    let mut covered = 0;
    let mut cursor = 0;
    for (start, end) in intervals {
        let start = start.max(cursor);
        if end > start {
            covered += end - start;
            cursor = end;
        }
    }
    covered as f64 / horizon as f64
}

/// Buckets an age, imputing missing ages with the rounded NOUD mean age.
pub fn bucket_age(age: Option<i64>, noud_mean_age: Option<f64>) -> Result<AgeBucket> {
    let age = match age {
        Some(a) if a < 0 => return Err(Error::InvalidInput(format!("negative age {a}"))),
        Some(a) => a as u32,
        None => {
            let mean = noud_mean_age
                .ok_or_else(|| Error::InvalidInput("missing age and no NOUD mean age to impute".into()))?;
            mean.round().max(0.0) as u32
        }
    };
    Ok(AgeBucket::from_age(age))
}

/// Mean age of NOUD members with a recorded age.
pub fn mean_noud_age<'a>(
    members: impl IntoIterator<Item = &'a CohortMember>,
    eligibility: &[EligibilityRecord],
) -> Option<f64> {
    let ages: HashMap<&PatientId, Option<u32>> = eligibility.iter().map(|r| (&r.patient, r.age)).collect();
    let (sum, n) = members
        .into_iter()
        .filter(|m| m.label == Outcome::Noud)
        .filter_map(|m| ages.get(&m.patient).copied().flatten())
        .fold((0.0, 0usize), |(s, n), a| (s + a as f64, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Diagnosis counts for one member within
/// `[index - lookback, index + usage]`, dropping claims on or after the
/// censor date.
pub fn dx_count_features<'a>(
    claims: impl IntoIterator<Item = &'a MedicalClaim>,
    member: &CohortMember,
    windows: &StudyWindows,
    excluded_codes: Option<&OutcomeCodeSet>,
) -> BTreeMap<Icd9Code, u32> {
    let from = member.index_date - Duration::days(windows.lookback_days);
    let to = member.index_date + Duration::days(windows.usage_days);
    let mut counts = BTreeMap::new();
    for claim in claims {
        let d = claim.service_date;
        if d < from || d > to {
            continue;
        }
        if member.censor_date.is_some_and(|c| d >= c) {
            continue;
        }
        if excluded_codes.is_some_and(|set| set.contains(&claim.diagnosis)) {
            continue;
        }
        *counts.entry(claim.diagnosis.clone()).or_insert(0) += 1;
    }
    counts
}

/// ICD-9 code descriptions used for naming and ablation matching.
#[derive(Debug, Clone, Default)]
pub struct Icd9Descriptions(HashMap<Icd9Code, String>);

impl Icd9Descriptions {
    /// CSV with header `code,description`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut map = HashMap::new();
        for row in rdr.records() {
            let row = row.map_err(|e| Error::InvalidInput(format!("icd9 descriptions: {e}")))?;
            map.insert(row[0].parse()?, row[1].trim().to_string());
        }
        Ok(Icd9Descriptions(map))
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_DESCRIPTIONS).expect("bundled descriptions parse")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, code: &Icd9Code) -> Option<&str> {
        self.0.get(code).map(String::as_str)
    }

    pub fn describe(&self, code: &Icd9Code) -> String {
        self.get(code)
            .map(str::to_string)
            .unwrap_or_else(|| format!("ICD-9 {code}"))
    }

    pub fn codes(&self) -> BTreeSet<Icd9Code> {
        self.0.keys().cloned().collect()
    }
}

/// Case-insensitive description substrings identifying opioid
/// dependence/abuse history features.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AblationKeywords(Vec<String>);

impl AblationKeywords {
    pub fn parse(text: &str) -> Self {
        AblationKeywords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_ABLATION_KEYWORDS)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn matches(&self, description: &str) -> bool {
        let d = description.to_lowercase();
        self.0.iter().any(|k| d.contains(k.as_str()))
    }
}

#[derive(Debug, Clone)]
pub struct FeaturizeOptions {
    pub windows: StudyWindows,
    /// Outcome codes to leave out of the diagnosis features, if any.
    pub excluded_codes: Option<OutcomeCodeSet>,
    pub ablate_dependency_history: bool,
    pub ablation_keywords: AblationKeywords,
    pub descriptions: Icd9Descriptions,
    /// Imputation value for missing ages (mean NOUD age).
    pub noud_mean_age: Option<f64>,
}

impl Default for FeaturizeOptions {
    fn default() -> Self {
        FeaturizeOptions {
            windows: StudyWindows::default(),
            excluded_codes: None,
            ablate_dependency_history: false,
            ablation_keywords: AblationKeywords::bundled(),
            descriptions: Icd9Descriptions::bundled(),
            noud_mean_age: None,
        }
    }
}

fn fixed_catalog() -> Vec<FeatureInfo> {
    let mut out = vec![FeatureInfo {
        name: MALE.into(),
        kind: FeatureKind::Demographic,
        description: "Male (reference: female)".into(),
        reference: false,
    }];
    for b in AgeBucket::ALL {
        let (lo, hi) = b.range();
        out.push(FeatureInfo {
            name: b.feature_name().into(),
            kind: FeatureKind::Demographic,
            description: if b == AgeBucket::A65Plus {
                "Age 65 and above".into()
            } else {
                format!("Age {lo} to {hi}")
            },
            reference: b == AgeBucket::A65Plus,
        });
    }
    for c in ChronicityLevel::ALL {
        out.push(FeatureInfo {
            name: c.feature_name().into(),
            kind: FeatureKind::Chronicity,
            description: match c {
                ChronicityLevel::NonChronic => "Non-chronic opioid use (PDC < 20%)",
                ChronicityLevel::LessChronic => "Less chronic opioid use (PDC 20-49%)",
                ChronicityLevel::ModerateChronic => "Moderately chronic opioid use (PDC 50-79%)",
                ChronicityLevel::HighChronic => "Highly chronic opioid use (PDC >= 80%)",
            }
            .into(),
            reference: c == ChronicityLevel::NonChronic,
        });
    }
    out
}

/// Per-member values before column assembly.
struct Row {
    male: bool,
    age: AgeBucket,
    chronicity: ChronicityLevel,
    dx: BTreeMap<Icd9Code, u32>,
}

/// Assembles the patient-by-feature matrix for `cohort`, one row per member
/// in cohort order, columns sorted by name.
pub fn build_matrix(cohort: &[CohortMember], claims: &ParsedClaims, opts: &FeaturizeOptions) -> Result<FeatureMatrix> {
    if cohort.is_empty() {
        return Err(Error::InvalidInput("cohort is empty".into()));
    }
    let eligibility: HashMap<&PatientId, &EligibilityRecord> =
        claims.eligibility.iter().map(|r| (&r.patient, r)).collect();
    let mut fills: HashMap<&PatientId, Vec<&PharmacyClaim>> = HashMap::new();
    for c in claims.pharmacy.iter().filter(|c| c.is_opioid) {
        fills.entry(&c.patient).or_default().push(c);
    }
    let mut medical: HashMap<&PatientId, Vec<&MedicalClaim>> = HashMap::new();
    for c in &claims.medical {
        medical.entry(&c.patient).or_default().push(c);
    }

    let rows = cohort
        .iter()
        .map(|m| {
            let record = eligibility
                .get(&m.patient)
                .ok_or_else(|| Error::InvalidInput(format!("{}: no eligibility record", m.patient)))?;
            let age = bucket_age(record.age.map(i64::from), opts.noud_mean_age)?;
            let patient_fills: Vec<(NaiveDate, u32)> = fills
                .get(&m.patient)
                .map(|v| v.iter().map(|c| (c.fill_date, c.days_supply)).collect())
                .unwrap_or_default();
            let pdc = compute_pdc(&patient_fills, m.index_date);
            let dx = dx_count_features(
                medical.get(&m.patient).into_iter().flatten().copied(),
                m,
                &opts.windows,
                opts.excluded_codes.as_ref(),
            );
            Ok(Row {
                male: record.gender == Gender::Male,
                age,
                chronicity: ChronicityLevel::from_pdc(pdc),
                dx,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut catalog = fixed_catalog();
    let observed: BTreeSet<&Icd9Code> = rows.iter().flat_map(|r| r.dx.keys()).collect();
    for code in observed {
        let description = opts.descriptions.describe(code);
        if opts.ablate_dependency_history && opts.ablation_keywords.matches(&description) {
            continue;
        }
        catalog.push(FeatureInfo {
            name: dx_feature_name(code),
            kind: FeatureKind::DxCount,
            description,
            reference: false,
        });
    }
    catalog.sort_by(|a, b| a.name.cmp(&b.name));
    if catalog.is_empty() {
        return Err(Error::NoFeatures);
    }
    let col_of: HashMap<&str, usize> = catalog.iter().enumerate().map(|(j, f)| (f.name.as_str(), j)).collect();
    let dx_col: BTreeMap<&Icd9Code, usize> = rows
        .iter()
        .flat_map(|r| r.dx.keys())
        .filter_map(|code| col_of.get(dx_feature_name(code).as_str()).map(|&j| (code, j)))
        .collect();

    let mut columns: Vec<Vec<(u32, f64)>> = vec![Vec::new(); catalog.len()];
    for (i, row) in rows.iter().enumerate() {
        let i = i as u32;
        if row.male {
            columns[col_of[MALE]].push((i, 1.0));
        }
        columns[col_of[row.age.feature_name()]].push((i, 1.0));
        columns[col_of[row.chronicity.feature_name()]].push((i, 1.0));
        for (code, &count) in &row.dx {
            if let Some(&j) = dx_col.get(code) {
                columns[j].push((i, count as f64));
            }
        }
    }
    FeatureMatrix::new(
        cohort.iter().map(|m| m.patient.clone()).collect(),
        cohort.iter().map(|m| m.label).collect(),
        catalog,
        columns,
    )
}
