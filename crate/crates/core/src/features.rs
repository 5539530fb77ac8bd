//! Domain feature engineering: risk bands, the fixed 31-column layout, and
//! an encoder whose statistics come from the training split only.
//!
//! The layout is documented column by column in `FEATURES.md` at the
//! repository root; [`FEATURE_NAMES`] is the authoritative order.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{BirthRecord, Division};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const FEATURE_COUNT: usize = 31;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "age_adolescent",
    "age_advanced",
    "edu_primary",
    "edu_secondary",
    "edu_higher",
    "wealth_q2",
    "wealth_q3",
    "wealth_q4",
    "wealth_q5",
    "div_chittagong",
    "div_dhaka",
    "div_khulna",
    "div_mymensingh",
    "div_rajshahi",
    "div_rangpur",
    "div_sylhet",
    "interval_high_risk",
    "interval_moderate",
    "size_small",
    "size_large",
    "urban",
    "facility_delivery",
    "skilled_attendant",
    "anc_adequate",
    "first_birth",
    "anc_missing",
    "delivery_care_missing",
    "size_missing",
    "birth_order",
    "parity",
    "high_risk_count",
];

/// A named block of columns. One-hot families are blocks; every other
/// feature is a block of one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FeatureGroup {
    pub name: &'static str,
    pub columns: Range<usize>,
}

pub fn feature_groups() -> Vec<FeatureGroup> {
    let mut g = vec![
        FeatureGroup { name: "maternal_age", columns: 0..2 },
        FeatureGroup { name: "maternal_education", columns: 2..5 },
        FeatureGroup { name: "wealth_quintile", columns: 5..9 },
        FeatureGroup { name: "division", columns: 9..16 },
        FeatureGroup { name: "birth_interval", columns: 16..18 },
        FeatureGroup { name: "birth_size", columns: 18..20 },
    ];
    g.extend((20..FEATURE_COUNT).map(|c| FeatureGroup {
        name: FEATURE_NAMES[c],
        columns: c..c + 1,
    }));
    g
}

/// SHA-256 over the ordered feature names; model files carry it so that a
/// model is never applied to a different layout.
pub fn feature_order_hash() -> String {
    let mut h = Sha256::new();
    for n in FEATURE_NAMES {
        h.update(n.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaternalAgeBand {
    Adolescent,
    Optimal,
    Advanced,
}

/// `<19` adolescent, `19..=35` optimal, `>35` advanced.
pub fn categorize_maternal_age(years: u8) -> Result<MaternalAgeBand> {
    match years {
        10..=18 => Ok(MaternalAgeBand::Adolescent),
        19..=35 => Ok(MaternalAgeBand::Optimal),
        36..=49 => Ok(MaternalAgeBand::Advanced),
        _ => Err(Error::InvalidRecord(format!("maternal age {years} outside 10..=49"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BirthInterval {
    HighRisk,
    Moderate,
    LowRisk,
    FirstBirth,
}

/// `<18` months high risk, `18..=36` moderate, `>36` low risk; no preceding
/// birth means first birth.
pub fn categorize_birth_interval(months: Option<u32>) -> Result<BirthInterval> {
    Ok(match months {
        None => BirthInterval::FirstBirth,
        Some(m) if m < 18 => BirthInterval::HighRisk,
        Some(m) if m <= 36 => BirthInterval::Moderate,
        Some(_) => BirthInterval::LowRisk,
    })
}

/// Signed variant for callers holding raw, possibly negative, survey values.
pub fn categorize_birth_interval_signed(months: Option<i64>) -> Result<BirthInterval> {
    match months {
        Some(m) if m < 0 => Err(Error::InvalidRecord(format!("negative birth interval {m}"))),
        Some(m) => categorize_birth_interval(Some(m as u32)),
        None => categorize_birth_interval(None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AncStatus {
    Adequate,
    Inadequate,
    Missing,
}

/// Four or more antenatal visits is adequate.
pub fn anc_adequate(visits: Option<u32>) -> AncStatus {
    match visits {
        Some(v) if v >= 4 => AncStatus::Adequate,
        Some(_) => AncStatus::Inadequate,
        None => AncStatus::Missing,
    }
}

/// Number of concurrent high-risk conditions: adolescent mother, preceding
/// interval under two years, parity above four.
pub fn high_risk_count(r: &BirthRecord) -> u8 {
    (r.maternal_age_at_birth < 19) as u8
        + r.preceding_interval_months.is_some_and(|m| m < 24) as u8
        + (r.parity > 4) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub sd: f64,
}

impl Standardizer {
    fn fit(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self { mean, sd }
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.sd
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformKind {
    OneHotLevel,
    BinaryFlag,
    MissingIndicator,
    StandardizedOrdinal,
    DerivedCount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDef {
    pub name: String,
    pub source: String,
    pub kind: TransformKind,
}

fn feature_defs() -> Vec<FeatureDef> {
    use TransformKind::*;
    FEATURE_NAMES
        .iter()
        .enumerate()
        .map(|(i, &name)| {
            let (source, kind) = match i {
                0..=1 => ("maternal_age_at_birth", OneHotLevel),
                2..=4 => ("maternal_education", OneHotLevel),
                5..=8 => ("wealth_quintile", OneHotLevel),
                9..=15 => ("division", OneHotLevel),
                16..=17 => ("preceding_interval_months", OneHotLevel),
                18..=19 => ("perceived_birth_size", OneHotLevel),
                20 => ("urban", BinaryFlag),
                21 => ("facility_delivery", BinaryFlag),
                22 => ("skilled_attendant", BinaryFlag),
                23 => ("anc_visits", BinaryFlag),
                24 => ("birth_order", BinaryFlag),
                25 => ("anc_visits", MissingIndicator),
                26 => ("facility_delivery|skilled_attendant", MissingIndicator),
                27 => ("perceived_birth_size", MissingIndicator),
                28 => ("birth_order", StandardizedOrdinal),
                29 => ("parity", StandardizedOrdinal),
                _ => ("maternal_age_at_birth|preceding_interval_months|parity", DerivedCount),
            };
            FeatureDef {
                name: name.to_string(),
                source: source.to_string(),
                kind,
            }
        })
        .collect()
}

/// Fitted feature encoder. Immutable after [`fit_encoder`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub features: Vec<FeatureDef>,
    /// Training counts of each observed level, for the audit trail.
    pub education_levels: [usize; 4],
    pub quintile_levels: [usize; 5],
    pub division_levels: [usize; 8],
    pub anc_observed: usize,
    pub size_levels: [usize; 5],
    pub birth_order: Standardizer,
    pub parity: Standardizer,
    pub high_risk: Standardizer,
    pub feature_order_hash: String,
}

pub fn fit_encoder(train: &[BirthRecord]) -> Result<Encoder> {
    if train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    let mut education_levels = [0; 4];
    let mut quintile_levels = [0; 5];
    let mut division_levels = [0; 8];
    let mut size_levels = [0; 5];
    let mut anc_observed = 0;
    for r in train {
        r.validate().map_err(Error::InvalidRecord)?;
        education_levels[r.maternal_education as usize] += 1;
        quintile_levels[r.wealth_quintile as usize - 1] += 1;
        division_levels[r.division.index()] += 1;
        if let Some(s) = r.perceived_birth_size {
            size_levels[s as usize - 1] += 1;
        }
        anc_observed += r.anc_visits.is_some() as usize;
    }
    if anc_observed == 0 {
        return Err(Error::NoObservedLevels("anc_visits"));
    }
    if size_levels.iter().all(|&c| c == 0) {
        return Err(Error::NoObservedLevels("perceived_birth_size"));
    }
    Ok(Encoder {
        features: feature_defs(),
        education_levels,
        quintile_levels,
        division_levels,
        anc_observed,
        size_levels,
        birth_order: Standardizer::fit(train.iter().map(|r| r.birth_order as f64)),
        parity: Standardizer::fit(train.iter().map(|r| r.parity as f64)),
        high_risk: Standardizer::fit(train.iter().map(|r| high_risk_count(r) as f64)),
        feature_order_hash: feature_order_hash(),
    })
}

/// Per-record metadata carried alongside the features for auditing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub division: Division,
    pub urban: bool,
    pub wealth_score: f64,
    pub psu_id: i64,
    pub stratum_id: i64,
    pub sampling_weight: f64,
}

impl From<&BirthRecord> for RecordMeta {
    fn from(r: &BirthRecord) -> Self {
        Self {
            division: r.division,
            urban: r.urban,
            wealth_score: r.wealth_score,
            psu_id: r.psu_id,
            stratum_id: r.stratum_id,
            sampling_weight: r.sampling_weight,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_COUNT],
    pub label: u8,
    pub meta: RecordMeta,
}

impl Encoder {
    pub fn featurize(&self, r: &BirthRecord) -> Result<FeatureVector> {
        r.validate().map_err(Error::InvalidRecord)?;
        let mut v = [0.0; FEATURE_COUNT];
        match categorize_maternal_age(r.maternal_age_at_birth)? {
            MaternalAgeBand::Adolescent => v[0] = 1.0,
            MaternalAgeBand::Advanced => v[1] = 1.0,
            MaternalAgeBand::Optimal => {}
        }
        if r.maternal_education > 0 {
            v[1 + r.maternal_education as usize] = 1.0;
        }
        if r.wealth_quintile > 1 {
            v[3 + r.wealth_quintile as usize] = 1.0;
        }
        if r.division != Division::Barisal {
            v[8 + r.division.index()] = 1.0;
        }
        let interval = categorize_birth_interval(r.preceding_interval_months)?;
        match interval {
            BirthInterval::HighRisk => v[16] = 1.0,
            BirthInterval::Moderate => v[17] = 1.0,
            BirthInterval::LowRisk | BirthInterval::FirstBirth => {}
        }
        match r.perceived_birth_size {
            Some(1 | 2) => v[18] = 1.0,
            Some(4 | 5) => v[19] = 1.0,
            Some(_) => {}
            None => v[27] = 1.0,
        }
        v[20] = r.urban as u8 as f64;
        v[21] = r.facility_delivery.unwrap_or(false) as u8 as f64;
        v[22] = r.skilled_attendant.unwrap_or(false) as u8 as f64;
        v[26] = (r.facility_delivery.is_none() || r.skilled_attendant.is_none()) as u8 as f64;
        match anc_adequate(r.anc_visits) {
            AncStatus::Adequate => v[23] = 1.0,
            AncStatus::Inadequate => {}
            AncStatus::Missing => v[25] = 1.0,
        }
        v[24] = (interval == BirthInterval::FirstBirth) as u8 as f64;
        v[28] = self.birth_order.apply(r.birth_order as f64);
        v[29] = self.parity.apply(r.parity as f64);
        v[30] = self.high_risk.apply(high_risk_count(r) as f64);
        Ok(FeatureVector {
            values: v,
            label: r.died_under5 as u8,
            meta: RecordMeta::from(r),
        })
    }

    pub fn featurize_all(&self, records: &[BirthRecord]) -> Result<FeatureSet> {
        let mut x = Vec::with_capacity(records.len() * FEATURE_COUNT);
        let mut labels = Vec::with_capacity(records.len());
        let mut meta = Vec::with_capacity(records.len());
        for r in records {
            let fv = self.featurize(r)?;
            x.extend_from_slice(&fv.values);
            labels.push(fv.label);
            meta.push(fv.meta);
        }
        Ok(FeatureSet {
            x: Matrix::from_vec(records.len(), FEATURE_COUNT, x)?,
            labels,
            meta,
        })
    }
}

/// A featurized split: design matrix, labels and audit metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub x: Matrix,
    pub labels: Vec<u8>,
    pub meta: Vec<RecordMeta>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    /// Builds a feature set from a bare matrix, with placeholder metadata.
    pub fn from_matrix(x: Matrix, labels: Vec<u8>) -> Result<Self> {
        if x.rows() != labels.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} labels",
                x.rows(),
                labels.len()
            )));
        }
        let meta = (0..labels.len())
            .map(|i| RecordMeta {
                division: Division::Barisal,
                urban: false,
                wealth_score: 0.0,
                psu_id: i as i64,
                stratum_id: 0,
                sampling_weight: 1.0,
            })
            .collect();
        Ok(Self { x, labels, meta })
    }

    pub fn subset(&self, idx: &[usize]) -> FeatureSet {
        FeatureSet {
            x: self.x.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            meta: idx.iter().map(|&i| self.meta[i].clone()).collect(),
        }
    }

    /// SHA-256 over the matrix bits and labels, used to show that every
    /// model family saw identical inputs.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in self.x.as_slice() {
            h.update(v.to_le_bytes());
        }
        h.update(&self.labels);
        hex::encode(h.finalize())
    }
}
