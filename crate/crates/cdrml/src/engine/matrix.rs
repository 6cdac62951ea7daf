//! Dense subscriber-by-descriptor matrix and its CSV form.
//!
//! Rows follow roster order, columns follow the canonical descriptor
//! enumeration. Besides the feature values every row carries the
//! subscriber's money-usage class and the three demographic attributes, so
//! one file is enough to rebuild any experiment. The CSV layout is
//!
//! ```text
//! subscriber_id,<descriptor names...>,label,stratum_gender,stratum_district,stratum_wealth
//! ```
//!
//! with the class written as `VOICE`/`REG`/`P2P` and the demographic columns
//! using the roster vocabulary (`M`/`F`/`U` etc.). Values are written with
//! the shortest round-tripping float representation, so a write/read cycle
//! is lossless.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::{DistrictKind, DistrictWealth, Gender, Stratum, StratumAxis, UserClass};
use crate::error::{Error, Result};
use crate::grammar::{category_of, parse_name, FeatureCategory};

#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub subscriber_ids: Vec<String>,
    pub descriptor_names: Vec<String>,
    pub categories: Vec<FeatureCategory>,
    values: Vec<f64>,
    pub classes: Vec<UserClass>,
    pub gender: Vec<Gender>,
    pub district: Vec<DistrictKind>,
    pub wealth: Vec<DistrictWealth>,
}

impl FeatureMatrix {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        subscriber_ids: Vec<String>,
        descriptor_names: Vec<String>,
        categories: Vec<FeatureCategory>,
        values: Vec<f64>,
        classes: Vec<UserClass>,
        gender: Vec<Gender>,
        district: Vec<DistrictKind>,
        wealth: Vec<DistrictWealth>,
    ) -> Result<Self> {
        let n = subscriber_ids.len();
        let width = descriptor_names.len();
        if categories.len() != width {
            return Err(Error::Data("category list width mismatch".into()));
        }
        if values.len() != n * width {
            return Err(Error::Data(format!(
                "value buffer holds {} cells, expected {n} x {width}",
                values.len()
            )));
        }
        if classes.len() != n || gender.len() != n || district.len() != n || wealth.len() != n {
            return Err(Error::Data("per-row column length mismatch".into()));
        }
        Ok(FeatureMatrix {
            subscriber_ids,
            descriptor_names,
            categories,
            values,
            classes,
            gender,
            district,
            wealth,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.subscriber_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.descriptor_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.n_cols();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The row's stratum on one axis, if known.
    pub fn stratum(&self, row: usize, axis: StratumAxis) -> Option<Stratum> {
        match axis {
            StratumAxis::Gender => match self.gender[row] {
                Gender::Male => Some(Stratum::Male),
                Gender::Female => Some(Stratum::Female),
                Gender::Unknown => None,
            },
            StratumAxis::DistrictKind => match self.district[row] {
                DistrictKind::Urban => Some(Stratum::Urban),
                DistrictKind::Rural => Some(Stratum::Rural),
                DistrictKind::Unknown => None,
            },
            StratumAxis::DistrictWealth => match self.wealth[row] {
                DistrictWealth::Rich => Some(Stratum::Rich),
                DistrictWealth::Poor => Some(Stratum::Poor),
                DistrictWealth::Unknown => None,
            },
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        let mut header = String::from("subscriber_id");
        for name in &self.descriptor_names {
            header.push(',');
            header.push_str(name);
        }
        header.push_str(",label,stratum_gender,stratum_district,stratum_wealth\n");
        w.write_all(header.as_bytes())?;
        let mut line = String::new();
        for i in 0..self.n_rows() {
            line.clear();
            line.push_str(&self.subscriber_ids[i]);
            for v in self.row(i) {
                let _ = write!(line, ",{v}");
            }
            let _ = writeln!(
                line,
                ",{},{},{},{}",
                self.classes[i].as_csv(),
                self.gender[i].as_csv(),
                self.district[i].as_csv(),
                self.wealth[i].as_csv()
            );
            w.write_all(line.as_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            msg: format!("cannot open: {e}"),
        })?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(file);
        let header = reader.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        if cols.len() < 5
            || cols.first() != Some(&"subscriber_id")
            || cols[cols.len() - 4..]
                != [
                    "label",
                    "stratum_gender",
                    "stratum_district",
                    "stratum_wealth",
                ]
        {
            return Err(Error::Schema {
                path: path.to_path_buf(),
                msg: "not a feature matrix file".into(),
            });
        }
        let descriptor_names: Vec<String> = cols[1..cols.len() - 4]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let categories: Vec<FeatureCategory> = descriptor_names
            .iter()
            .map(|n| parse_name(n).map(|d| category_of(&d)))
            .collect::<Result<_>>()?;

        let width = descriptor_names.len();
        let mut subscriber_ids = Vec::new();
        let mut values = Vec::new();
        let mut classes = Vec::new();
        let mut gender = Vec::new();
        let mut district = Vec::new();
        let mut wealth = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            if rec.len() != width + 5 {
                return Err(Error::Schema {
                    path: path.to_path_buf(),
                    msg: format!("row with {} fields, expected {}", rec.len(), width + 5),
                });
            }
            subscriber_ids.push(rec[0].to_string());
            for j in 0..width {
                let txt = &rec[j + 1];
                let v: f64 = txt
                    .parse()
                    .map_err(|_| Error::Data(format!("bad value {txt:?}")))?;
                values.push(v);
            }
            classes.push(UserClass::from_csv(&rec[width + 1])?);
            gender.push(Gender::from_csv(&rec[width + 2])?);
            district.push(DistrictKind::from_csv(&rec[width + 3])?);
            wealth.push(DistrictWealth::from_csv(&rec[width + 4])?);
        }
        FeatureMatrix::new(
            subscriber_ids,
            descriptor_names,
            categories,
            values,
            classes,
            gender,
            district,
            wealth,
        )
    }
}
