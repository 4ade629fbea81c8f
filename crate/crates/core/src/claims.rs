//! Claim-level schema for the three claims files (pharmacy, medical,
//! eligibility) and their CSV parsing.
//!
//! Parsing is total: every data row either becomes a record or lands in the
//! rejects report with its 1-based file line number (the header is line 1).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DAYS_SUPPLY: u32 = 365;
const MAX_AGE: u32 = 130;
const DATE_FORMAT: &str = "%Y-%m-%d";

pub const PHARMACY_HEADER: [&str; 4] = ["patient_id", "fill_date", "ndc", "days_supply"];
pub const MEDICAL_HEADER: [&str; 3] = ["patient_id", "service_date", "icd9"];
pub const ELIGIBILITY_HEADER: [&str; 4] = ["patient_id", "age", "gender", "zip"];

const DEFAULT_OPIOID_NDC: &str = include_str!("../data/opioid_ndc.txt");

/// Opaque patient token linking rows across the three files.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PatientId(String);

impl PatientId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let trimmed = id.trim();
        if trimmed.is_empty() {
            return Err(Error::InvalidInput("empty patient id".into()));
        }
        if trimmed.contains(',') {
            return Err(Error::InvalidInput(format!("patient id `{trimmed}` contains a comma")));
        }
        Ok(PatientId(trimmed.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for PatientId {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        PatientId::new(value)
    }
}

impl From<PatientId> for String {
    fn from(value: PatientId) -> Self {
        value.0
    }
}

impl fmt::Display for PatientId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// ICD-9-CM diagnosis code, stored without the decimal point ("96501") and
/// displayed with it ("965.01").
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Icd9Code(String);

impl Icd9Code {
    /// Normalized form without the decimal point.
    pub fn normalized(&self) -> &str {
        &self.0
    }

    fn category_len(&self) -> usize {
        match self.0.as_bytes()[0] {
            b'E' => 4,
            b'V' => 3,
            _ => 3,
        }
    }
}

impl FromStr for Icd9Code {
    type Err = Error;

    fn from_str(raw: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("`{raw}` is not an ICD-9 code"));
        let s = raw.trim().to_ascii_uppercase();
        let (prefix, body) = match s.as_bytes().first() {
            Some(b'E') => ("E", &s[1..]),
            Some(b'V') => ("V", &s[1..]),
            Some(_) => ("", &s[..]),
            None => return Err(bad()),
        };
        let (category_digits, max_decimals) = match prefix {
            "E" => (3, 1),
            "V" => (2, 2),
            _ => (3, 2),
        };
        let (head, tail) = match body.split_once('.') {
            Some((head, tail)) => {
                if head.len() != category_digits || tail.is_empty() {
                    return Err(bad());
                }
                (head, tail)
            }
            None => {
                if body.len() < category_digits {
                    return Err(bad());
                }
                body.split_at(category_digits)
            }
        };
        if head.len() != category_digits
            || tail.len() > max_decimals
            || !head.bytes().all(|b| b.is_ascii_digit())
            || !tail.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(bad());
        }
        Ok(Icd9Code(format!("{prefix}{head}{tail}")))
    }
}

impl TryFrom<String> for Icd9Code {
    type Error = Error;
    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<Icd9Code> for String {
    fn from(value: Icd9Code) -> Self {
        value.to_string()
    }
}

impl fmt::Display for Icd9Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let split = self.category_len();
        if self.0.len() > split {
            write!(f, "{}.{}", &self.0[..split], &self.0[split..])
        } else {
            f.write_str(&self.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
    Unknown,
    Missing,
}

impl Gender {
    fn parse(field: &str) -> Option<Gender> {
        match field.trim() {
            "M" | "m" => Some(Gender::Male),
            "F" | "f" => Some(Gender::Female),
            "U" | "u" => Some(Gender::Unknown),
            "" => Some(Gender::Missing),
            _ => None,
        }
    }

    fn code(self) -> &'static str {
        match self {
            Gender::Male => "M",
            Gender::Female => "F",
            Gender::Unknown => "U",
            Gender::Missing => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PharmacyClaim {
    pub patient: PatientId,
    pub fill_date: NaiveDate,
    pub drug_code: String,
    pub days_supply: u32,
    pub is_opioid: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MedicalClaim {
    pub patient: PatientId,
    pub service_date: NaiveDate,
    pub diagnosis: Icd9Code,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EligibilityRecord {
    pub patient: PatientId,
    /// `None` when the age field is blank.
    pub age: Option<u32>,
    pub gender: Gender,
    pub zip: String,
}

/// Inclusive calendar range claims must fall in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyPeriod {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl StudyPeriod {
    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start && date <= self.end
    }
}

/// Set of national drug codes that identify opioid products.
#[derive(Debug, Clone, Default)]
pub struct OpioidNdcTable {
    codes: HashSet<String>,
}

fn normalize_ndc(code: &str) -> String {
    code.trim().chars().filter(|c| *c != '-').collect()
}

impl OpioidNdcTable {
    /// One code per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        let codes = text
            .lines()
            .map(str::trim)
            .filter(|line| !line.is_empty() && !line.starts_with('#'))
            .map(normalize_ndc)
            .collect();
        OpioidNdcTable { codes }
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    /// The example opioid code list bundled with the crate.
    pub fn bundled() -> Self {
        Self::parse(DEFAULT_OPIOID_NDC)
    }

    pub fn classify(&self, drug_code: &str) -> bool {
        self.codes.contains(&normalize_ndc(drug_code))
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Codes in sorted order.
    pub fn codes(&self) -> Vec<&str> {
        let mut codes: Vec<&str> = self.codes.iter().map(String::as_str).collect();
        codes.sort_unstable();
        codes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimFile {
    Pharmacy,
    Medical,
    Eligibility,
}

impl ClaimFile {
    pub fn name(self) -> &'static str {
        match self {
            ClaimFile::Pharmacy => "pharmacy.csv",
            ClaimFile::Medical => "medical.csv",
            ClaimFile::Eligibility => "eligibility.csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub file: ClaimFile,
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileCounts {
    pub rows: usize,
    pub accepted: usize,
    pub rejected: usize,
    /// Eligibility rows superseded by a later row for the same patient.
    pub superseded: usize,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedClaims {
    pub pharmacy: Vec<PharmacyClaim>,
    pub medical: Vec<MedicalClaim>,
    pub eligibility: Vec<EligibilityRecord>,
    pub rejects: Vec<Reject>,
    pub counts: BTreeMap<ClaimFile, FileCounts>,
}

/// Locations of the three input files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimFiles {
    pub pharmacy: PathBuf,
    pub medical: PathBuf,
    pub eligibility: PathBuf,
}

impl ClaimFiles {
    pub fn in_dir(dir: &Path) -> Self {
        ClaimFiles {
            pharmacy: dir.join(ClaimFile::Pharmacy.name()),
            medical: dir.join(ClaimFile::Medical.name()),
            eligibility: dir.join(ClaimFile::Eligibility.name()),
        }
    }
}

pub struct FileParse<T> {
    pub records: Vec<T>,
    pub rejects: Vec<Reject>,
    pub counts: FileCounts,
}

fn parse_rows<R: Read, T>(
    reader: R,
    file: ClaimFile,
    header: &[&str],
    mut parse_row: impl FnMut(&csv::StringRecord) -> std::result::Result<T, String>,
) -> Result<FileParse<T>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut out = FileParse {
        records: Vec::new(),
        rejects: Vec::new(),
        counts: FileCounts::default(),
    };
    let mut record = csv::StringRecord::new();
    let mut saw_header = false;
    loop {
        let line = rdr.position().line();
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map(|p| p.line()).unwrap_or(line);
                if !saw_header {
                    saw_header = true;
                    let got: Vec<&str> = record.iter().map(str::trim).collect();
                    if got != header {
                        return Err(Error::InvalidInput(format!(
                            "{}: expected header `{}`, found `{}`",
                            file.name(),
                            header.join(","),
                            got.join(",")
                        )));
                    }
                    continue;
                }
                out.counts.rows += 1;
                let parsed = if record.len() != header.len() {
                    Err(format!("expected {} fields, found {}", header.len(), record.len()))
                } else {
                    parse_row(&record)
                };
                match parsed {
                    Ok(value) => {
                        out.counts.accepted += 1;
                        out.records.push(value);
                    }
                    Err(reason) => {
                        out.counts.rejected += 1;
                        out.rejects.push(Reject { file, line, reason });
                    }
                }
            }
            Err(err) => {
                if !saw_header {
                    return Err(Error::InvalidInput(format!("{}: unreadable header: {err}", file.name())));
                }
                let line = err.position().map(|p| p.line()).unwrap_or(line);
                out.counts.rows += 1;
                out.counts.rejected += 1;
                out.rejects.push(Reject {
                    file,
                    line,
                    reason: format!("malformed row: {err}"),
                });
            }
        }
    }
    Ok(out)
}

fn parse_patient(field: &str) -> std::result::Result<PatientId, String> {
    PatientId::new(field).map_err(|e| e.to_string())
}

fn parse_date(field: &str, name: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(field.trim(), DATE_FORMAT)
        .map_err(|_| format!("{name} `{}` is not a YYYY-MM-DD date", field.trim()))
}

pub fn parse_pharmacy<R: Read>(
    reader: R,
    opioids: &OpioidNdcTable,
    period: Option<&StudyPeriod>,
) -> Result<FileParse<PharmacyClaim>> {
    parse_rows(reader, ClaimFile::Pharmacy, &PHARMACY_HEADER, |rec| {
        let patient = parse_patient(&rec[0])?;
        let fill_date = parse_date(&rec[1], "fill_date")?;
        if let Some(period) = period {
            if !period.contains(fill_date) {
                return Err(format!("fill_date {fill_date} outside study period"));
            }
        }
        let drug_code = rec[2].trim();
        if drug_code.is_empty() {
            return Err("empty ndc".into());
        }
        let days_supply: i64 = rec[3]
            .trim()
            .parse()
            .map_err(|_| format!("days_supply `{}` is not an integer", rec[3].trim()))?;
        if days_supply < 0 {
            return Err(format!("days_supply {days_supply} is negative (must be >= 0)"));
        }
        if days_supply > MAX_DAYS_SUPPLY as i64 {
            return Err(format!("days_supply {days_supply} exceeds {MAX_DAYS_SUPPLY}"));
        }
        Ok(PharmacyClaim {
            patient,
            fill_date,
            drug_code: drug_code.to_string(),
            days_supply: days_supply as u32,
            is_opioid: opioids.classify(drug_code),
        })
    })
}

pub fn parse_medical<R: Read>(reader: R) -> Result<FileParse<MedicalClaim>> {
    parse_rows(reader, ClaimFile::Medical, &MEDICAL_HEADER, |rec| {
        let patient = parse_patient(&rec[0])?;
        let service_date = parse_date(&rec[1], "service_date")?;
        let diagnosis = rec[2].parse::<Icd9Code>().map_err(|e| e.to_string())?;
        Ok(MedicalClaim {
            patient,
            service_date,
            diagnosis,
        })
    })
}

/// Parses eligibility rows; a later row for the same patient supersedes an
/// earlier one (the file order is taken as recency order).
pub fn parse_eligibility<R: Read>(reader: R) -> Result<FileParse<EligibilityRecord>> {
    let mut parsed = parse_rows(reader, ClaimFile::Eligibility, &ELIGIBILITY_HEADER, |rec| {
        let patient = parse_patient(&rec[0])?;
        let age_field = rec[1].trim();
        let age = if age_field.is_empty() {
            None
        } else {
            let age: i64 = age_field
                .parse()
                .map_err(|_| format!("age `{age_field}` is not an integer"))?;
            if age < 0 {
                return Err(format!("negative age {age}"));
            }
            if age > MAX_AGE as i64 {
                return Err(format!("age {age} exceeds {MAX_AGE}"));
            }
            Some(age as u32)
        };
        let gender = Gender::parse(&rec[2])
            .ok_or_else(|| format!("gender `{}` is not one of M, F, U or blank", rec[2].trim()))?;
        Ok(EligibilityRecord {
            patient,
            age,
            gender,
            zip: rec[3].trim().to_string(),
        })
    })?;
    let mut latest: BTreeMap<PatientId, usize> = BTreeMap::new();
    for (i, rec) in parsed.records.iter().enumerate() {
        latest.insert(rec.patient.clone(), i);
    }
    let keep: HashSet<usize> = latest.into_values().collect();
    parsed.counts.superseded = parsed.records.len() - keep.len();
    parsed.records = parsed
        .records
        .into_iter()
        .enumerate()
        .filter_map(|(i, rec)| keep.contains(&i).then_some(rec))
        .collect();
    Ok(parsed)
}

fn open(path: &Path) -> Result<std::fs::File> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

/// Parses all three files. A missing file is fatal; malformed rows are
/// collected into `rejects`.
pub fn parse_claims(
    files: &ClaimFiles,
    opioids: &OpioidNdcTable,
    period: Option<&StudyPeriod>,
) -> Result<ParsedClaims> {
    let pharmacy = parse_pharmacy(open(&files.pharmacy)?, opioids, period)?;
    let medical = parse_medical(open(&files.medical)?)?;
    let eligibility = parse_eligibility(open(&files.eligibility)?)?;

    let mut out = ParsedClaims::default();
    out.counts.insert(ClaimFile::Pharmacy, pharmacy.counts);
    out.counts.insert(ClaimFile::Medical, medical.counts);
    out.counts.insert(ClaimFile::Eligibility, eligibility.counts);
    out.rejects.extend(pharmacy.rejects);
    out.rejects.extend(medical.rejects);
    out.rejects.extend(eligibility.rejects);
    out.pharmacy = pharmacy.records;
    out.medical = medical.records;
    out.eligibility = eligibility.records;
    Ok(out)
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(w)
}

fn finish<W: Write>(mut wtr: csv::Writer<W>) -> std::io::Result<()> {
    wtr.flush()
}

fn io_err(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

pub fn write_pharmacy<W: Write>(w: W, claims: &[PharmacyClaim]) -> std::io::Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(PHARMACY_HEADER).map_err(io_err)?;
    for c in claims {
        wtr.write_record([
            c.patient.as_str(),
            &c.fill_date.format(DATE_FORMAT).to_string(),
            &c.drug_code,
            &c.days_supply.to_string(),
        ])
        .map_err(io_err)?;
    }
    finish(wtr)
}

pub fn write_medical<W: Write>(w: W, claims: &[MedicalClaim]) -> std::io::Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(MEDICAL_HEADER).map_err(io_err)?;
    for c in claims {
        wtr.write_record([
            c.patient.as_str(),
            &c.service_date.format(DATE_FORMAT).to_string(),
            &c.diagnosis.to_string(),
        ])
        .map_err(io_err)?;
    }
    finish(wtr)
}

pub fn write_eligibility<W: Write>(w: W, records: &[EligibilityRecord]) -> std::io::Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(ELIGIBILITY_HEADER).map_err(io_err)?;
    for r in records {
        let age = r.age.map(|a| a.to_string()).unwrap_or_default();
        wtr.write_record([r.patient.as_str(), &age, r.gender.code(), &r.zip])
            .map_err(io_err)?;
    }
    finish(wtr)
}

pub fn write_rejects<W: Write>(w: W, rejects: &[Reject]) -> std::io::Result<()> {
    let mut wtr = csv_writer(w);
    wtr.write_record(["file", "line", "reason"]).map_err(io_err)?;
    for r in rejects {
        wtr.write_record([r.file.name(), &r.line.to_string(), &r.reason])
            .map_err(io_err)?;
    }
    finish(wtr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, DATE_FORMAT).unwrap()
    }

    #[test]
    fn icd9_normalizes_and_displays() {
        let code: Icd9Code = "965.01".parse().unwrap();
        assert_eq!(code.normalized(), "96501");
        assert_eq!(code.to_string(), "965.01");
        assert_eq!("96501".parse::<Icd9Code>().unwrap(), code);

        let e: Icd9Code = "E850.0".parse().unwrap();
        assert_eq!(e.normalized(), "E8500");
        assert_eq!(e.to_string(), "E850.0");

        let v: Icd9Code = "v58.69".parse().unwrap();
        assert_eq!(v.normalized(), "V5869");
        assert_eq!(v.to_string(), "V58.69");

        let bare: Icd9Code = "311".parse().unwrap();
        assert_eq!(bare.to_string(), "311");
    }

    #[test]
    fn icd9_rejects_bad_codes() {
        for bad in ["", "96", "965.", "965.012", "96.501", "X12.3", "E85.0", "E850.01", "abc"] {
            assert!(bad.parse::<Icd9Code>().is_err(), "{bad} should be rejected");
        }
    }

    #[test]
    fn empty_file_gives_empty_list() {
        let parsed = parse_medical("".as_bytes()).unwrap();
        assert!(parsed.records.is_empty());
        assert!(parsed.rejects.is_empty());
        let parsed = parse_medical("patient_id,service_date,icd9\n".as_bytes()).unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.counts.rows, 0);
    }

    #[test]
    fn heroin_poisoning_code_parses() {
        let text = "patient_id,service_date,icd9\nP1,2013-04-02,965.01\n";
        let parsed = parse_medical(text.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.records[0].diagnosis.to_string(), "965.01");
        assert_eq!(parsed.records[0].service_date, date("2013-04-02"));
    }

    #[test]
    fn negative_days_supply_is_rejected_with_line() {
        let text = "patient_id,fill_date,ndc,days_supply\nP1,2013-01-01,00406-0123-01,30\nP2,2013-01-01,00406-0123-01,-3\n";
        let parsed = parse_pharmacy(text.as_bytes(), &OpioidNdcTable::bundled(), None).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert!(parsed.records[0].is_opioid);
        assert_eq!(parsed.rejects.len(), 1);
        assert_eq!(parsed.rejects[0].line, 3);
        assert!(parsed.rejects[0].reason.contains(">= 0"), "{}", parsed.rejects[0].reason);
    }

    #[test]
    fn fill_outside_period_is_rejected() {
        let period = StudyPeriod {
            start: date("2011-01-01"),
            end: date("2015-12-31"),
        };
        let text = "patient_id,fill_date,ndc,days_supply\nP1,2010-12-31,1,30\nP1,2011-01-01,1,30\n";
        let parsed = parse_pharmacy(text.as_bytes(), &OpioidNdcTable::default(), Some(&period)).unwrap();
        assert_eq!(parsed.counts.accepted, 1);
        assert_eq!(parsed.rejects[0].line, 2);
    }

    #[test]
    fn wrong_field_count_and_bad_header() {
        let text = "patient_id,service_date,icd9\nP1,2013-01-01\nP1,2013-01-01,300.02\n";
        let parsed = parse_medical(text.as_bytes()).unwrap();
        assert_eq!(parsed.counts.rows, 2);
        assert_eq!(parsed.counts.rejected, 1);
        assert!(parse_medical("a,b,c\n".as_bytes()).is_err());
    }

    #[test]
    fn eligibility_dedup_keeps_last_row() {
        let text = "patient_id,age,gender,zip\nP1,40,M,02115\nP2,,U,\nP1,41,F,02116\nP3,-2,F,0\nP4,30,X,0\n";
        let parsed = parse_eligibility(text.as_bytes()).unwrap();
        assert_eq!(parsed.counts.rows, 5);
        assert_eq!(parsed.counts.accepted, 3);
        assert_eq!(parsed.counts.rejected, 2);
        assert_eq!(parsed.counts.superseded, 1);
        assert_eq!(parsed.records.len(), 2);
        let p1 = parsed.records.iter().find(|r| r.patient.as_str() == "P1").unwrap();
        assert_eq!(p1.age, Some(41));
        assert_eq!(p1.gender, Gender::Female);
        let p2 = parsed.records.iter().find(|r| r.patient.as_str() == "P2").unwrap();
        assert_eq!(p2.age, None);
        assert_eq!(p2.gender, Gender::Unknown);
        assert!(parsed.rejects.iter().any(|r| r.reason.contains("negative age")));
    }

    #[test]
    fn opioid_table_membership() {
        let table = OpioidNdcTable::parse("# comment\n00406-0123-01\n\n12345678901\n");
        assert_eq!(table.len(), 2);
        assert!(table.classify("00406012301"));
        assert!(table.classify("1234-5678-901"));
        assert!(!table.classify("99999999999"));
        let empty = OpioidNdcTable::parse("");
        assert!(!empty.classify("00406-0123-01"));
    }

    #[test]
    fn missing_file_is_fatal() {
        let files = ClaimFiles::in_dir(Path::new("/nonexistent/claims"));
        let err = parse_claims(&files, &OpioidNdcTable::default(), None).unwrap_err();
        assert!(matches!(err, Error::MissingFile(_)));
    }
}
