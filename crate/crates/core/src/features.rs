//! Feature matrices for each input configuration and model base.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    AgeBracket, Catalog, DemographicProfile, IncomeBracket, MaritalStatus, ParentalStatus, ProductId, Sex,
    SurveyResponse, UserId,
};
use crate::exposure::{cell_index, ExposureMatrix, TimeSlot, CELLS, WEEKDAYS, WEEKDAY_NAMES};
use crate::matrix::DenseMatrix;
use crate::targets::{label_vector, Behavior};

/// Width of the one-hot demographic block: 5 + 2 + 3 + 2 + 13.
pub const DEMOGRAPHIC_DIMS: usize = 25;

const GROUP_SIZES: [usize; 5] = [5, 2, 3, 2, 13];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("unknown base id `{0}`")]
    UnknownBase(String),
    #[error("the purchase-intention feature cannot be used while predicting purchase intention")]
    PiFeatureForPiTarget,
    #[error("the purchase-intention feature requires a demographic input configuration")]
    PiFeatureWithoutDemographics,
    #[error("no survey response for user `{0}` and product `{1}`")]
    MissingResponse(UserId, ProductId),
}

/// Which feature blocks a model sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InputVariant {
    ViewWeekdaySlot,
    ViewWeekday,
    Demographics,
    ViewWeekdaySlotPlusDemo,
    ViewWeekdayPlusDemo,
}

impl InputVariant {
    /// Report column order.
    pub const ALL: [InputVariant; 5] = [
        InputVariant::ViewWeekdaySlot,
        InputVariant::ViewWeekday,
        InputVariant::Demographics,
        InputVariant::ViewWeekdaySlotPlusDemo,
        InputVariant::ViewWeekdayPlusDemo,
    ];

    pub fn code(self) -> &'static str {
        match self {
            InputVariant::ViewWeekdaySlot => "weekday_slot",
            InputVariant::ViewWeekday => "weekday",
            InputVariant::Demographics => "demographics",
            InputVariant::ViewWeekdaySlotPlusDemo => "weekday_slot_demo",
            InputVariant::ViewWeekdayPlusDemo => "weekday_demo",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            InputVariant::ViewWeekdaySlot => "Advert Viewing Weekday Time Slots",
            InputVariant::ViewWeekday => "Advert Viewing Weekday Only",
            InputVariant::Demographics => "Demographics",
            InputVariant::ViewWeekdaySlotPlusDemo => "Advert Viewing Weekday Time Slots and Demographics",
            InputVariant::ViewWeekdayPlusDemo => "Advert Viewing Weekday Only and Demographics",
        }
    }

    pub fn has_demographics(self) -> bool {
        matches!(
            self,
            InputVariant::Demographics | InputVariant::ViewWeekdaySlotPlusDemo | InputVariant::ViewWeekdayPlusDemo
        )
    }

    pub fn has_slots(self) -> bool {
        matches!(self, InputVariant::ViewWeekdaySlot | InputVariant::ViewWeekdaySlotPlusDemo)
    }

    pub fn has_viewing(self) -> bool {
        self != InputVariant::Demographics
    }

    pub fn exposure_dims(self) -> usize {
        if !self.has_viewing() {
            0
        } else if self.has_slots() {
            CELLS
        } else {
            WEEKDAYS
        }
    }

    /// Feature count without the optional purchase-intention column.
    pub fn dims(self) -> usize {
        self.exposure_dims() + if self.has_demographics() { DEMOGRAPHIC_DIMS } else { 0 }
    }
}

impl fmt::Display for InputVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for InputVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        InputVariant::ALL
            .into_iter()
            .find(|v| v.code() == s)
            .ok_or_else(|| format!("unknown input configuration `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InputConfig {
    pub variant: InputVariant,
    pub include_pi_feature: bool,
}

impl InputConfig {
    pub fn new(variant: InputVariant, include_pi_feature: bool) -> Result<Self, FeatureError> {
        if include_pi_feature && !variant.has_demographics() {
            return Err(FeatureError::PiFeatureWithoutDemographics);
        }
        Ok(Self {
            variant,
            include_pi_feature,
        })
    }

    pub fn plain(variant: InputVariant) -> Self {
        Self {
            variant,
            include_pi_feature: false,
        }
    }

    pub fn dims(self) -> usize {
        self.variant.dims() + usize::from(self.include_pi_feature)
    }
}

impl fmt::Display for InputConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.variant.code())?;
        if self.include_pi_feature {
            f.write_str("+pi")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BaseKind {
    Product,
    User,
}

impl BaseKind {
    pub const ALL: [BaseKind; 2] = [BaseKind::Product, BaseKind::User];

    pub fn code(self) -> &'static str {
        match self {
            BaseKind::Product => "product",
            BaseKind::User => "user",
        }
    }
}

impl fmt::Display for BaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for BaseKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "product" => Ok(BaseKind::Product),
            "user" => Ok(BaseKind::User),
            _ => Err(format!("unknown base kind `{s}`")),
        }
    }
}

/// The axis a dataset is assembled along.
///
/// A product base has one row per panel user for a fixed product; a user
/// base has one row per advert-matched product for a fixed user.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelBase {
    ProductBased(ProductId),
    UserBased(UserId),
}

impl ModelBase {
    pub fn kind(&self) -> BaseKind {
        match self {
            ModelBase::ProductBased(_) => BaseKind::Product,
            ModelBase::UserBased(_) => BaseKind::User,
        }
    }

    pub fn id(&self) -> &str {
        match self {
            ModelBase::ProductBased(p) => p.as_str(),
            ModelBase::UserBased(u) => u.as_str(),
        }
    }

    pub fn from_parts(kind: BaseKind, id: &str) -> Self {
        match kind {
            BaseKind::Product => ModelBase::ProductBased(ProductId::new(id)),
            BaseKind::User => ModelBase::UserBased(UserId::new(id)),
        }
    }
}

impl fmt::Display for ModelBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind(), self.id())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub values: DenseMatrix,
    /// (user, product) behind each row, sorted.
    pub row_keys: Vec<(UserId, ProductId)>,
    pub feature_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn dims(&self) -> usize {
        self.values.cols()
    }

    /// Audit dump with `user_id product_id` followed by one column per feature.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("user_id\tproduct_id");
        for name in &self.feature_names {
            out.push('\t');
            out.push_str(name);
        }
        out.push('\n');
        for (i, (u, p)) in self.row_keys.iter().enumerate() {
            let _ = write!(out, "{u}\t{p}");
            for v in self.values.row(i) {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// One-hot blocks for age, sex, marital status, parental status, income, in that order.
pub fn encode_demographics(profile: &DemographicProfile) -> [f64; DEMOGRAPHIC_DIMS] {
    let mut v = [0.0; DEMOGRAPHIC_DIMS];
    let hot = [
        profile.age.index(),
        profile.sex.index(),
        profile.marital_status.index(),
        profile.parental_status.index(),
        profile.income.index(),
    ];
    let mut offset = 0;
    for (size, idx) in GROUP_SIZES.iter().zip(hot) {
        v[offset + idx] = 1.0;
        offset += size;
    }
    v
}

pub fn demographic_feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(DEMOGRAPHIC_DIMS);
    names.extend(AgeBracket::ALL.iter().map(|a| format!("age={a}")));
    names.extend(Sex::ALL.iter().map(|a| format!("sex={a}")));
    names.extend(MaritalStatus::ALL.iter().map(|a| format!("marital={a}")));
    names.extend(ParentalStatus::ALL.iter().map(|a| format!("parental={a}")));
    names.extend(IncomeBracket::ALL.iter().map(|a| format!("income={a}")));
    names
}

pub fn feature_names(config: InputConfig) -> Vec<String> {
    let mut names = Vec::with_capacity(config.dims());
    let variant = config.variant;
    if variant.has_viewing() {
        for day in WEEKDAY_NAMES {
            if variant.has_slots() {
                for slot in TimeSlot::ALL {
                    names.push(format!("{day} {}", slot.label()));
                }
            } else {
                names.push(day.to_string());
            }
        }
    }
    if variant.has_demographics() {
        names.extend(demographic_feature_names());
    }
    if config.include_pi_feature {
        names.push("January Purchase Intention".to_string());
    }
    names
}

/// The (user, product) pairs making up a base's rows, sorted.
pub fn base_rows(catalog: &Catalog, base: &ModelBase) -> Result<Vec<(UserId, ProductId)>, FeatureError> {
    match base {
        ModelBase::ProductBased(p) => {
            if !catalog.has_product(p) {
                return Err(FeatureError::UnknownBase(p.to_string()));
            }
            Ok(catalog
                .users()
                .iter()
                .map(|u| (u.user_id.clone(), p.clone()))
                .collect())
        }
        ModelBase::UserBased(u) => {
            if catalog.user(u).is_none() {
                return Err(FeatureError::UnknownBase(u.to_string()));
            }
            Ok(catalog
                .advert_matched()
                .iter()
                .map(|p| (u.clone(), p.clone()))
                .collect())
        }
    }
}

pub fn build_matrix(
    catalog: &Catalog,
    exposure: &ExposureMatrix,
    base: &ModelBase,
    config: InputConfig,
    target: Behavior,
) -> Result<FeatureMatrix, FeatureError> {
    if config.include_pi_feature && target == Behavior::PurchaseIntention {
        return Err(FeatureError::PiFeatureForPiTarget);
    }
    if config.include_pi_feature && !config.variant.has_demographics() {
        return Err(FeatureError::PiFeatureWithoutDemographics);
    }
    let row_keys = base_rows(catalog, base)?;
    let dims = config.dims();
    let variant = config.variant;
    let mut values = DenseMatrix::zeros(row_keys.len(), dims);
    for (i, (u, p)) in row_keys.iter().enumerate() {
        let row = values.row_mut(i);
        let mut col = 0;
        if variant.has_viewing() {
            let cells = exposure.row(u, p);
            for w in 0..WEEKDAYS {
                if variant.has_slots() {
                    for slot in TimeSlot::ALL {
                        row[col] = cells[cell_index(w, slot)] as f64;
                        col += 1;
                    }
                } else {
                    row[col] = TimeSlot::ALL.iter().map(|s| cells[cell_index(w, *s)]).sum::<u64>() as f64;
                    col += 1;
                }
            }
        }
        if variant.has_demographics() {
            let profile = catalog.user(u).ok_or_else(|| FeatureError::UnknownBase(u.to_string()))?;
            row[col..col + DEMOGRAPHIC_DIMS].copy_from_slice(&encode_demographics(profile));
            col += DEMOGRAPHIC_DIMS;
        }
        if config.include_pi_feature {
            let r = catalog
                .response(u, p)
                .ok_or_else(|| FeatureError::MissingResponse(u.clone(), p.clone()))?;
            row[col] = if r.pi_jan { 1.0 } else { 0.0 };
            col += 1;
        }
        debug_assert_eq!(col, dims);
    }
    Ok(FeatureMatrix {
        values,
        row_keys,
        feature_names: feature_names(config),
    })
}

/// Survey responses behind the given rows, in row order.
pub fn row_responses<'a>(
    catalog: &'a Catalog,
    row_keys: &[(UserId, ProductId)],
) -> Result<Vec<&'a SurveyResponse>, FeatureError> {
    row_keys
        .iter()
        .map(|(u, p)| {
            catalog
                .response(u, p)
                .ok_or_else(|| FeatureError::MissingResponse(u.clone(), p.clone()))
        })
        .collect()
}

/// One-vs-rest labels for the rows of a matrix.
pub fn build_labels(
    catalog: &Catalog,
    row_keys: &[(UserId, ProductId)],
    behavior: Behavior,
    category: u8,
) -> Result<Vec<bool>, FeatureError> {
    let responses = row_responses(catalog, row_keys)?;
    Ok(label_vector(responses, behavior, category))
}

/// Per-column z-scoring fitted on training rows. Zero-variance columns are
/// centered but not scaled.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &DenseMatrix) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        let denom = n.max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= denom);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / denom).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform(&self, x: &DenseMatrix) -> DenseMatrix {
        let mut out = x.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }
}
