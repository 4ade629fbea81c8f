//! Sparse patient-by-feature matrix and the dense view models train on.

use std::collections::HashMap;
use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::claims::PatientId;
use crate::cohort::Outcome;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Demographic,
    Chronicity,
    DxCount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureInfo {
    pub name: String,
    pub kind: FeatureKind,
    pub description: String,
    /// Reference level of a one-hot group; left out of logistic designs.
    #[serde(default)]
    pub reference: bool,
}

/// Column-compressed sparse matrix with one row per patient.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    patients: Vec<PatientId>,
    labels: Vec<Outcome>,
    catalog: Vec<FeatureInfo>,
    /// Per column, `(row, value)` pairs with strictly increasing rows and
    /// nonzero values.
    columns: Vec<Vec<(u32, f64)>>,
}

impl FeatureMatrix {
    pub fn new(
        patients: Vec<PatientId>,
        labels: Vec<Outcome>,
        catalog: Vec<FeatureInfo>,
        columns: Vec<Vec<(u32, f64)>>,
    ) -> Result<Self> {
        if patients.len() != labels.len() {
            return Err(Error::InvalidInput("patients and labels differ in length".into()));
        }
        if catalog.len() != columns.len() {
            return Err(Error::InvalidInput("catalog and columns differ in length".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for info in &catalog {
            if !seen.insert(info.name.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate feature `{}`", info.name)));
            }
        }
        let n = patients.len() as u32;
        for (info, col) in catalog.iter().zip(&columns) {
            for (i, &(row, value)) in col.iter().enumerate() {
                if row >= n || (i > 0 && col[i - 1].0 >= row) {
                    return Err(Error::InvalidInput(format!("feature `{}`: bad row order", info.name)));
                }
                if !value.is_finite() || value < 0.0 {
                    return Err(Error::NonFinite {
                        feature: info.name.clone(),
                        row: row as usize,
                    });
                }
            }
        }
        let columns = columns
            .into_iter()
            .map(|c| c.into_iter().filter(|&(_, v)| v != 0.0).collect())
            .collect();
        Ok(FeatureMatrix {
            patients,
            labels,
            catalog,
            columns,
        })
    }

    /// Builds a matrix from dense values; feature kinds default to counts.
    pub fn from_dense(names: &[String], x: &Array2<f64>, labels: Vec<Outcome>) -> Result<Self> {
        if x.ncols() != names.len() {
            return Err(Error::InvalidInput("names and columns differ in length".into()));
        }
        let patients = (0..x.nrows())
            .map(|i| PatientId::new(format!("R{i:06}")))
            .collect::<Result<Vec<_>>>()?;
        let catalog = names
            .iter()
            .map(|n| FeatureInfo {
                name: n.clone(),
                kind: FeatureKind::DxCount,
                description: n.clone(),
                reference: false,
            })
            .collect();
        let columns = x
            .columns()
            .into_iter()
            .map(|col| {
                col.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, v)| (i as u32, *v))
                    .collect()
            })
            .collect();
        Self::new(patients, labels, catalog, columns)
    }

    pub fn n_rows(&self) -> usize {
        self.patients.len()
    }

    pub fn n_cols(&self) -> usize {
        self.catalog.len()
    }

    pub fn patients(&self) -> &[PatientId] {
        &self.patients
    }

    pub fn labels(&self) -> &[Outcome] {
        &self.labels
    }

    pub fn is_oud(&self) -> Vec<bool> {
        self.labels.iter().map(|l| l.is_oud()).collect()
    }

    pub fn catalog(&self) -> &[FeatureInfo] {
        &self.catalog
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.catalog.iter().map(|f| f.name.clone()).collect()
    }

    pub fn column(&self, j: usize) -> &[(u32, f64)] {
        &self.columns[j]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.catalog.iter().position(|f| f.name == name)
    }

    pub fn info(&self, name: &str) -> Option<&FeatureInfo> {
        self.catalog.iter().find(|f| f.name == name)
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        let c = &self.columns[col];
        match c.binary_search_by_key(&(row as u32), |&(r, _)| r) {
            Ok(i) => c[i].1,
            Err(_) => 0.0,
        }
    }

    /// Dense view over `rows` and the named `features`, in the given orders.
    pub fn dense(&self, rows: &[usize], features: &[String]) -> Result<Dataset> {
        let index: HashMap<&str, usize> = self
            .catalog
            .iter()
            .enumerate()
            .map(|(j, f)| (f.name.as_str(), j))
            .collect();
        let cols = features
            .iter()
            .map(|name| {
                index
                    .get(name.as_str())
                    .copied()
                    .ok_or_else(|| Error::CatalogMismatch(format!("unknown feature `{name}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut position = vec![usize::MAX; self.n_rows()];
        for (i, &r) in rows.iter().enumerate() {
            position[r] = i;
        }
        let mut x = Array2::zeros((rows.len(), cols.len()));
        for (k, &j) in cols.iter().enumerate() {
            for &(r, v) in &self.columns[j] {
                let i = position[r as usize];
                if i != usize::MAX {
                    x[[i, k]] = v;
                }
            }
        }
        let y = rows.iter().map(|&r| self.labels[r].is_oud()).collect();
        Dataset::new(x, y, features.to_vec())
    }

    /// Same rows, only the named columns (catalog order preserved).
    pub fn select_columns(&self, keep: &[String]) -> FeatureMatrix {
        let keep: std::collections::HashSet<&str> = keep.iter().map(String::as_str).collect();
        let (catalog, columns) = self
            .catalog
            .iter()
            .zip(&self.columns)
            .filter(|(f, _)| keep.contains(f.name.as_str()))
            .map(|(f, c)| (f.clone(), c.clone()))
            .unzip();
        FeatureMatrix {
            patients: self.patients.clone(),
            labels: self.labels.clone(),
            catalog,
            columns,
        }
    }

    /// `patient_id,feature_name,value` rows for nonzero entries, ordered by
    /// row then catalog position.
    pub fn write_triplets<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut entries: Vec<(u32, usize, f64)> = Vec::new();
        for (j, col) in self.columns.iter().enumerate() {
            entries.extend(col.iter().map(|&(r, v)| (r, j, v)));
        }
        entries.sort_unstable_by_key(|&(r, j, _)| (r, j));
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["patient_id", "feature_name", "value"])
            .map_err(std::io::Error::other)?;
        for (r, j, v) in entries {
            wtr.write_record([
                self.patients[r as usize].as_str(),
                &self.catalog[j].name,
                &v.to_string(),
            ])
            .map_err(std::io::Error::other)?;
        }
        wtr.flush()
    }

    /// `patient_id,label` with OUD encoded as 0 and NOUD as 1.
    pub fn write_labels<W: Write>(&self, w: W) -> std::io::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["patient_id", "label"]).map_err(std::io::Error::other)?;
        for (p, l) in self.patients.iter().zip(&self.labels) {
            wtr.write_record([p.as_str(), &l.code().to_string()])
                .map_err(std::io::Error::other)?;
        }
        wtr.flush()
    }

    /// Reassembles a matrix from the three serialized parts.
    pub fn read<R1: Read, R2: Read>(triplets: R1, labels: R2, catalog: Vec<FeatureInfo>) -> Result<Self> {
        let bad = |m: String| Error::InvalidInput(m);
        let mut patients = Vec::new();
        let mut outcomes = Vec::new();
        let mut rdr = csv::Reader::from_reader(labels);
        for row in rdr.records() {
            let row = row.map_err(|e| bad(format!("labels.csv: {e}")))?;
            patients.push(PatientId::new(&row[0])?);
            let code: u8 = row[1].parse().map_err(|_| bad(format!("labels.csv: bad label `{}`", &row[1])))?;
            outcomes.push(Outcome::from_code(code).ok_or_else(|| bad(format!("labels.csv: bad label {code}")))?);
        }
        let row_of: HashMap<&str, u32> = patients
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), i as u32))
            .collect();
        let col_of: HashMap<&str, usize> = catalog
            .iter()
            .enumerate()
            .map(|(j, f)| (f.name.as_str(), j))
            .collect();
        let mut columns: Vec<Vec<(u32, f64)>> = vec![Vec::new(); catalog.len()];
        let mut rdr = csv::Reader::from_reader(triplets);
        for row in rdr.records() {
            let row = row.map_err(|e| bad(format!("features.csv: {e}")))?;
            let r = *row_of
                .get(&row[0])
                .ok_or_else(|| bad(format!("features.csv: unknown patient `{}`", &row[0])))?;
            let j = *col_of
                .get(&row[1])
                .ok_or_else(|| bad(format!("features.csv: unknown feature `{}`", &row[1])))?;
            let v: f64 = row[2].parse().map_err(|_| bad(format!("features.csv: bad value `{}`", &row[2])))?;
            columns[j].push((r, v));
        }
        for col in &mut columns {
            col.sort_unstable_by_key(|&(r, _)| r);
        }
        Self::new(patients, outcomes, catalog, columns)
    }
}

/// Dense design matrix with boolean OUD labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    /// `true` for OUD, the positive class for scoring.
    pub y: Vec<bool>,
    pub features: Vec<String>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<bool>, features: Vec<String>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::InvalidInput(format!(
                "{} rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if x.ncols() != features.len() {
            return Err(Error::InvalidInput(format!(
                "{} columns but {} feature names",
                x.ncols(),
                features.len()
            )));
        }
        Ok(Dataset { x, y, features })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_positive(&self) -> usize {
        self.y.iter().filter(|&&v| v).count()
    }

    pub fn rows(&self, idx: &[usize]) -> Dataset {
        let x = self.x.select(ndarray::Axis(0), idx);
        let y = idx.iter().map(|&i| self.y[i]).collect();
        Dataset {
            x,
            y,
            features: self.features.clone(),
        }
    }

    pub fn columns(&self, names: &[String]) -> Result<Dataset> {
        let idx = names
            .iter()
            .map(|n| {
                self.features
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::CatalogMismatch(format!("unknown feature `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            x: self.x.select(ndarray::Axis(1), &idx),
            y: self.y.clone(),
            features: names.to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn names(n: &[&str]) -> Vec<String> {
        n.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn dense_round_trip_and_triplets() {
        let x = array![[1.0, 0.0, 2.5], [0.0, 0.0, 1.0], [3.0, 0.0, 0.0]];
        let labels = vec![Outcome::Oud, Outcome::Noud, Outcome::Noud];
        let m = FeatureMatrix::from_dense(&names(&["a", "b", "c"]), &x, labels).unwrap();
        assert_eq!(m.value(0, 2), 2.5);
        assert_eq!(m.value(1, 0), 0.0);
        let d = m.dense(&[2, 0], &names(&["c", "a"])).unwrap();
        assert_eq!(d.x, array![[0.0, 3.0], [2.5, 1.0]]);
        assert_eq!(d.y, vec![false, true]);

        let mut t = Vec::new();
        let mut l = Vec::new();
        m.write_triplets(&mut t).unwrap();
        m.write_labels(&mut l).unwrap();
        let text = String::from_utf8(t.clone()).unwrap();
        assert_eq!(
            text,
            "patient_id,feature_name,value\nR000000,a,1\nR000000,c,2.5\nR000001,c,1\nR000002,a,3\n"
        );
        assert!(String::from_utf8(l.clone()).unwrap().contains("R000000,0\n"));
        let back = FeatureMatrix::read(t.as_slice(), l.as_slice(), m.catalog().to_vec()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_negative_values() {
        let x = array![[-1.0]];
        assert!(FeatureMatrix::from_dense(&names(&["a"]), &x, vec![Outcome::Oud]).is_err());
    }

    #[test]
    fn unknown_feature_is_catalog_mismatch() {
        let x = array![[1.0]];
        let m = FeatureMatrix::from_dense(&names(&["a"]), &x, vec![Outcome::Oud]).unwrap();
        assert!(matches!(m.dense(&[0], &names(&["zzz"])), Err(Error::CatalogMismatch(_))));
    }
}
