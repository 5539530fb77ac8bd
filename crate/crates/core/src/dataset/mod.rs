//! Birth-record schema, CSV ingest, the temporal split, and the synthetic
//! population generator.

mod io;
mod synthetic;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_records, read_records, write_records, LoadReport, CSV_HEADER};
pub use synthetic::{generate_synthetic, DivisionProfile, EffectSizes, SyntheticConfig};

/// Survey waves, in collection order.
pub const SURVEY_YEARS: [i32; 4] = [2011, 2014, 2017, 2022];
pub const TRAIN_YEARS: [i32; 2] = [2011, 2014];
pub const VALIDATION_YEAR: i32 = 2017;
pub const TEST_YEAR: i32 = 2022;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Division {
    Barisal,
    Chittagong,
    Dhaka,
    Khulna,
    Mymensingh,
    Rajshahi,
    Rangpur,
    Sylhet,
}

impl Division {
    pub const ALL: [Division; 8] = [
        Division::Barisal,
        Division::Chittagong,
        Division::Dhaka,
        Division::Khulna,
        Division::Mymensingh,
        Division::Rajshahi,
        Division::Rangpur,
        Division::Sylhet,
    ];

    /// 1-based administrative id, as in the survey's division codes.
    pub fn id(self) -> u8 {
        self as u8 + 1
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_id(id: u8) -> Option<Division> {
        Self::ALL.get((id as usize).wrapping_sub(1)).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Division::Barisal => "Barisal",
            Division::Chittagong => "Chittagong",
            Division::Dhaka => "Dhaka",
            Division::Khulna => "Khulna",
            Division::Mymensingh => "Mymensingh",
            Division::Rajshahi => "Rajshahi",
            Division::Rangpur => "Rangpur",
            Division::Sylhet => "Sylhet",
        }
    }
}

impl fmt::Display for Division {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Division {
    type Err = String;

    /// Accepts either the division name (case-insensitive) or its 1–8 id.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        if let Ok(id) = s.parse::<u8>() {
            return Division::from_id(id).ok_or_else(|| format!("division id {id} out of 1..=8"));
        }
        Division::ALL
            .iter()
            .copied()
            .find(|d| d.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown division `{s}`"))
    }
}

/// One child's survey row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirthRecord {
    pub survey_year: i32,
    pub division: Division,
    pub urban: bool,
    pub wealth_quintile: u8,
    pub wealth_score: f64,
    pub maternal_age_at_birth: u8,
    pub maternal_education: u8,
    pub parity: u32,
    pub birth_order: u32,
    pub preceding_interval_months: Option<u32>,
    pub anc_visits: Option<u32>,
    pub facility_delivery: Option<bool>,
    pub skilled_attendant: Option<bool>,
    pub perceived_birth_size: Option<u8>,
    pub died_under5: bool,
    pub psu_id: i64,
    pub stratum_id: i64,
    pub sampling_weight: f64,
}

impl BirthRecord {
    /// Checks the per-record schema invariants. The message names the
    /// violated invariant.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !SURVEY_YEARS.contains(&self.survey_year) {
            return Err(format!("survey_year {} not in {:?}", self.survey_year, SURVEY_YEARS));
        }
        if !(1..=5).contains(&self.wealth_quintile) {
            return Err(format!("wealth_quintile {} not in 1..=5", self.wealth_quintile));
        }
        if !self.wealth_score.is_finite() {
            return Err("wealth_score is not finite".into());
        }
        if !(10..=49).contains(&self.maternal_age_at_birth) {
            return Err(format!(
                "maternal_age_at_birth {} not in 10..=49",
                self.maternal_age_at_birth
            ));
        }
        if self.maternal_education > 3 {
            return Err(format!("maternal_education {} not in 0..=3", self.maternal_education));
        }
        if self.parity < 1 || self.birth_order < 1 {
            return Err("parity and birth_order must be >= 1".into());
        }
        if self.birth_order > self.parity {
            return Err(format!(
                "birth_order {} exceeds parity {}",
                self.birth_order, self.parity
            ));
        }
        match (self.birth_order == 1, self.preceding_interval_months.is_some()) {
            (true, true) => {
                return Err("preceding_interval_months present for a first birth".into())
            }
            (false, false) => {
                return Err("preceding_interval_months missing for a non-first birth".into())
            }
            _ => {}
        }
        if let Some(s) = self.perceived_birth_size {
            if !(1..=5).contains(&s) {
                return Err(format!("perceived_birth_size {s} not in 1..=5"));
            }
        }
        if !(self.sampling_weight.is_finite() && self.sampling_weight > 0.0) {
            return Err(format!("sampling_weight {} must be positive", self.sampling_weight));
        }
        Ok(())
    }

    /// True when every optional healthcare/size field is observed.
    pub fn is_complete_case(&self) -> bool {
        self.anc_visits.is_some()
            && self.facility_delivery.is_some()
            && self.skilled_attendant.is_some()
            && self.perceived_birth_size.is_some()
    }
}

/// Checks that each PSU maps to exactly one stratum within a survey year.
pub fn check_psu_nesting(records: &[BirthRecord]) -> Result<()> {
    let mut seen: HashMap<(i32, i64), i64> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        let prev = *seen.entry((r.survey_year, r.psu_id)).or_insert(r.stratum_id);
        if prev != r.stratum_id {
            return Err(Error::Row {
                row: i + 1,
                message: format!(
                    "psu {} appears in strata {prev} and {} in year {}",
                    r.psu_id, r.stratum_id, r.survey_year
                ),
            });
        }
    }
    Ok(())
}

/// Train (2011 + 2014), validation (2017) and test (2022) partitions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitSet {
    pub train: Vec<BirthRecord>,
    pub validation: Vec<BirthRecord>,
    pub test: Vec<BirthRecord>,
}

impl SplitSet {
    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Partitions records by survey wave. Input order is kept within each split.
pub fn temporal_split(records: &[BirthRecord]) -> Result<SplitSet> {
    let mut split = SplitSet::default();
    for r in records {
        match r.survey_year {
            y if TRAIN_YEARS.contains(&y) => split.train.push(r.clone()),
            VALIDATION_YEAR => split.validation.push(r.clone()),
            TEST_YEAR => split.test.push(r.clone()),
            y => return Err(Error::UnknownYear(y)),
        }
    }
    Ok(split)
}

#[cfg(test)]
pub(crate) fn sample_record() -> BirthRecord {
    BirthRecord {
        survey_year: 2014,
        division: Division::Dhaka,
        urban: true,
        wealth_quintile: 4,
        wealth_score: 35_518.0,
        maternal_age_at_birth: 25,
        maternal_education: 2,
        parity: 2,
        birth_order: 2,
        preceding_interval_months: Some(30),
        anc_visits: Some(4),
        facility_delivery: Some(true),
        skilled_attendant: Some(true),
        perceived_birth_size: Some(3),
        died_under5: false,
        psu_id: 10,
        stratum_id: 1,
        sampling_weight: 1.2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_year(year: i32) -> BirthRecord {
        BirthRecord {
            survey_year: year,
            ..sample_record()
        }
    }

    #[test]
    fn one_record_per_year() {
        let recs: Vec<_> = SURVEY_YEARS.iter().map(|&y| with_year(y)).collect();
        let s = temporal_split(&recs).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (2, 1, 1));
    }

    #[test]
    fn all_test_year_leaves_train_and_validation_empty() {
        let recs = vec![with_year(2022); 5];
        let s = temporal_split(&recs).unwrap();
        assert!(s.train.is_empty() && s.validation.is_empty());
        assert_eq!(s.test.len(), 5);
    }

    #[test]
    fn wave_sizes_reproduce_the_published_split() {
        let mut recs = Vec::new();
        for (year, n) in [(2011, 7_601), (2014, 6_779), (2017, 8_044), (2022, 11_538)] {
            recs.extend(std::iter::repeat_n(with_year(year), n));
        }
        let s = temporal_split(&recs).unwrap();
        assert_eq!(s.train.len(), 14_380);
        assert_eq!(s.validation.len(), 8_044);
        assert_eq!(s.test.len(), 11_538);
        assert_eq!(s.len(), 33_962);
    }

    #[test]
    fn unknown_year_is_rejected() {
        let err = temporal_split(&[with_year(2019)]).unwrap_err();
        assert!(matches!(err, Error::UnknownYear(2019)));
    }

    #[test]
    fn split_keeps_input_order() {
        let recs: Vec<_> = (0..6)
            .map(|i| BirthRecord {
                psu_id: i,
                survey_year: if i % 2 == 0 { 2011 } else { 2014 },
                ..sample_record()
            })
            .collect();
        let s = temporal_split(&recs).unwrap();
        let ids: Vec<_> = s.train.iter().map(|r| r.psu_id).collect();
        assert_eq!(ids, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn invariant_checks() {
        let mut r = sample_record();
        assert!(r.validate().is_ok());
        r.birth_order = 4;
        r.parity = 2;
        assert!(r.validate().unwrap_err().contains("exceeds parity"));

        let mut r = sample_record();
        r.birth_order = 1;
        assert!(r.validate().unwrap_err().contains("first birth"));
        r.preceding_interval_months = None;
        assert!(r.validate().is_ok());

        let mut r = sample_record();
        r.sampling_weight = 0.0;
        assert!(r.validate().is_err());
    }

    #[test]
    fn division_parsing() {
        assert_eq!("sylhet".parse::<Division>().unwrap(), Division::Sylhet);
        assert_eq!("3".parse::<Division>().unwrap(), Division::Dhaka);
        assert!("9".parse::<Division>().is_err());
        assert!(Division::ALL.iter().all(|d| Division::from_id(d.id()) == Some(*d)));
    }

    #[test]
    fn psu_nesting_violation() {
        let a = sample_record();
        let b = BirthRecord {
            stratum_id: 2,
            ..sample_record()
        };
        assert!(check_psu_nesting(&[a.clone(), a.clone()]).is_ok());
        assert!(check_psu_nesting(&[a, b]).is_err());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn split_is_a_partition(years in proptest::collection::vec(0usize..4, 0..200)) {
            let recs: Vec<_> = years
                .iter()
                .enumerate()
                .map(|(i, &y)| BirthRecord { survey_year: SURVEY_YEARS[y], psu_id: i as i64, ..sample_record() })
                .collect();
            let s = temporal_split(&recs).unwrap();
            prop_assert_eq!(s.len(), recs.len());
            let mut ids: Vec<i64> = s.train.iter().chain(&s.validation).chain(&s.test).map(|r| r.psu_id).collect();
            ids.sort_unstable();
            prop_assert_eq!(ids, (0..recs.len() as i64).collect::<Vec<_>>());
        }
    }
}
