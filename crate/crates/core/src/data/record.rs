use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{DataError, Result};

/// Daily forcing variables of one product, row-major `[n_days, n_vars]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForcingBlock {
    pub product: String,
    pub variables: Vec<String>,
    pub values: Vec<f64>,
}

impl ForcingBlock {
    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn row(&self, day: usize) -> &[f64] {
        let n = self.n_vars();
        &self.values[day * n..(day + 1) * n]
    }

    pub fn column(&self, var: usize) -> impl Iterator<Item = f64> + Clone + '_ {
        self.values.iter().skip(var).step_by(self.n_vars()).copied()
    }
}

/// One basin over a contiguous daily range. Discharge is in mm/day with
/// `NaN` for missing days; every forcing block covers the same days.
#[derive(Clone, Debug, PartialEq)]
pub struct BasinRecord {
    pub basin_id: String,
    pub area_km2: f64,
    pub attribute_names: Vec<String>,
    pub attributes: Vec<f64>,
    pub start: NaiveDate,
    pub discharge: Vec<f64>,
    pub forcings: Vec<ForcingBlock>,
}

impl BasinRecord {
    pub fn n_days(&self) -> usize {
        self.discharge.len()
    }

    pub fn end(&self) -> NaiveDate {
        self.date(self.n_days().saturating_sub(1))
    }

    pub fn date(&self, day: usize) -> NaiveDate {
        self.start + Days::new(day as u64)
    }

    /// Day index of `date`, if inside the record.
    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start).num_days();
        (offset >= 0 && (offset as usize) < self.n_days()).then_some(offset as usize)
    }

    /// Clamped index range `[first, last]` of the days within `[from, to]`.
    pub fn span(&self, from: NaiveDate, to: NaiveDate) -> Option<(usize, usize)> {
        if self.n_days() == 0 || to < from || to < self.start || from > self.end() {
            return None;
        }
        let first = (from - self.start).num_days().max(0) as usize;
        let last = ((to - self.start).num_days() as usize).min(self.n_days() - 1);
        Some((first, last))
    }

    pub fn forcing(&self, product: &str) -> Option<&ForcingBlock> {
        self.forcings.iter().find(|b| b.product == product)
    }

    /// Number of dynamic forcing columns across all products.
    pub fn n_forcing_vars(&self) -> usize {
        self.forcings.iter().map(ForcingBlock::n_vars).sum()
    }

    /// Model input width: forcing columns followed by static attributes.
    pub fn input_dim(&self) -> usize {
        self.n_forcing_vars() + self.attributes.len()
    }

    /// Names of the input columns, `product:variable` then attribute names.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .forcings
            .iter()
            .flat_map(|b| b.variables.iter().map(move |v| format!("{}:{v}", b.product)))
            .collect();
        names.extend(self.attribute_names.iter().cloned());
        names
    }

    /// Keeps days `[first, last]` only.
    pub fn restrict(&mut self, first: usize, last: usize) {
        self.start = self.date(first);
        self.discharge = self.discharge[first..=last].to_vec();
        for b in &mut self.forcings {
            let n = b.n_vars();
            b.values = b.values[first * n..(last + 1) * n].to_vec();
        }
    }

    /// Adds a forcing block that starts on `start`, trimming the record and
    /// the block to their common date range.
    pub fn add_forcing(&mut self, mut block: ForcingBlock, start: NaiveDate) -> Result<()> {
        let n = block.n_vars();
        if n == 0 || block.values.len() % n != 0 {
            return Err(DataError::Fusion(format!(
                "{} block for basin {} is not a [days, {n}] matrix",
                block.product, self.basin_id
            )));
        }
        if self.forcing(&block.product).is_some() {
            return Err(DataError::Fusion(format!(
                "basin {} already has product {}",
                self.basin_id, block.product
            )));
        }
        let block_days = block.values.len() / n;
        let block_end = start + Days::new(block_days.saturating_sub(1) as u64);
        let (first, last) = match self.span(start, block_end) {
            Some(s) if block_days > 0 => s,
            _ => {
                return Err(DataError::Fusion(format!(
                    "basin {}: product {} shares no dates with the record",
                    self.basin_id, block.product
                )))
            }
        };
        self.restrict(first, last);
        let offset = (self.start - start).num_days() as usize;
        block.values = block.values[offset * n..(offset + self.n_days()) * n].to_vec();
        self.forcings.push(block);
        Ok(())
    }
}

/// Inclusive training and test date windows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_start: NaiveDate,
    pub train_end: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
}

impl Default for SplitSpec {
    /// Train on water years 2000-2008, test on 1990-1999.
    fn default() -> Self {
        let d = |y, m, day| NaiveDate::from_ymd_opt(y, m, day).expect("valid date");
        SplitSpec {
            train_start: d(1999, 10, 1),
            train_end: d(2008, 9, 30),
            test_start: d(1989, 10, 1),
            test_end: d(1999, 9, 30),
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_end < self.train_start || self.test_end < self.test_start {
            return Err(DataError::Param(format!("empty split window: {self:?}")));
        }
        if self.train_start <= self.test_end && self.test_start <= self.train_end {
            return Err(DataError::Param(format!(
                "training window {}..{} overlaps test window {}..{}",
                self.train_start, self.train_end, self.test_start, self.test_end
            )));
        }
        Ok(())
    }
}
