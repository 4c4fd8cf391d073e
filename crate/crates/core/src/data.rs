//! Domain records and the tab-separated file formats used to exchange them.
//!
//! A catalog is five tables, one file each, all UTF-8 with a header row and
//! `\n` line endings:
//!
//! | file             | columns                                                                  |
//! |------------------|--------------------------------------------------------------------------|
//! | `users.tsv`      | `user_id age sex marital_status parental_status income`                  |
//! | `products.tsv`   | `product_id`                                                             |
//! | `survey.tsv`     | `user_id product_id pi_jan pi_mar ap_jan ap_mar` (`Yes` / `No`)          |
//! | `viewing.tsv`    | `user_id start duration_s channel`                                       |
//! | `broadcasts.tsv` | `product_id start duration_s channel`                                    |
//!
//! Timestamps are local wall-clock time at minute resolution, `YYYY-MM-DDTHH:MM`.
//! Demographic answers are spelled exactly as listed in [`AgeBracket`],
//! [`Sex`], [`MaritalStatus`], [`ParentalStatus`] and [`IncomeBracket`].
//! Tabs and newlines are not allowed inside identifiers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }
    };
}

id_type!(
    /// Opaque panel member identifier.
    UserId
);
id_type!(
    /// Opaque surveyed-product identifier.
    ProductId
);

macro_rules! answer_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            /// Every answer in survey listing order.
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }

            pub fn from_label(s: &str) -> Option<Self> {
                match s {
                    $($label => Some($name::$variant),)+
                    _ => None,
                }
            }

            /// Position in listing order, used for one-hot encoding.
            pub fn index(self) -> usize {
                self as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }
    };
}

answer_enum!(AgeBracket {
    From18To25 => "18 to 25 years old",
    From26To35 => "26 to 35 years old",
    From36To45 => "36 to 45 years old",
    From46To55 => "46 to 55 years old",
    From56 => "56 or older",
});

answer_enum!(Sex {
    Male => "Male",
    Female => "Female",
});

answer_enum!(MaritalStatus {
    Single => "Single",
    Married => "Married",
    DivorcedOrWidowed => "Divorced or Widowed",
});

answer_enum!(ParentalStatus {
    Parent => "Parent",
    NotParent => "Not a Parent",
});

answer_enum!(IncomeBracket {
    NotDisclosed => "Not disclosed",
    NoIncome => "No Income",
    Under1M => "Under 1,000,000 yen",
    From1MTo2M => "From 1,000,000 yen to 2,000,000 yen",
    From2MTo3M => "From 2,000,000 yen to 3,000,000 yen",
    From3MTo4M => "From 3,000,000 yen to 4,000,000 yen",
    From4MTo5M => "From 4,000,000 yen to 5,000,000 yen",
    From5MTo6M => "From 5,000,000 yen to 6,000,000 yen",
    From6MTo7M => "From 6,000,000 yen to 7,000,000 yen",
    From7MTo10M => "From 7,000,000 yen to 10,000,000 yen",
    From10MTo15M => "From 10,000,000 yen to 15,000,000 yen",
    From15MTo20M => "From 15,000,000 yen to 20,000,000 yen",
    Over20M => "Over 20,000,000 yen",
});

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicProfile {
    pub user_id: UserId,
    pub age: AgeBracket,
    pub sex: Sex,
    pub marital_status: MaritalStatus,
    pub parental_status: ParentalStatus,
    pub income: IncomeBracket,
}

/// Two-wave survey answers of one user about one product.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub user_id: UserId,
    pub product_id: ProductId,
    pub pi_jan: bool,
    pub pi_mar: bool,
    pub ap_jan: bool,
    pub ap_mar: bool,
}

/// A span during which a user's television was on a given channel.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewingRecord {
    pub user_id: UserId,
    pub start: NaiveDateTime,
    pub duration_s: u32,
    pub channel: String,
}

impl ViewingRecord {
    pub fn end(&self) -> NaiveDateTime {
        self.start + chrono::Duration::seconds(i64::from(self.duration_s))
    }
}

/// One airing of a product's advert.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdBroadcast {
    pub product_id: ProductId,
    pub start: NaiveDateTime,
    pub duration_s: u32,
    pub channel: String,
}

impl AdBroadcast {
    pub fn end(&self) -> NaiveDateTime {
        self.start + chrono::Duration::seconds(i64::from(self.duration_s))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Table {
    Users,
    Products,
    Survey,
    Viewing,
    Broadcasts,
}

impl Table {
    pub const ALL: [Table; 5] = [
        Table::Users,
        Table::Products,
        Table::Survey,
        Table::Viewing,
        Table::Broadcasts,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            Table::Users => "users.tsv",
            Table::Products => "products.tsv",
            Table::Survey => "survey.tsv",
            Table::Viewing => "viewing.tsv",
            Table::Broadcasts => "broadcasts.tsv",
        }
    }

    pub fn header(self) -> &'static str {
        match self {
            Table::Users => "user_id\tage\tsex\tmarital_status\tparental_status\tincome",
            Table::Products => "product_id",
            Table::Survey => "user_id\tproduct_id\tpi_jan\tpi_mar\tap_jan\tap_mar",
            Table::Viewing => "user_id\tstart\tduration_s\tchannel",
            Table::Broadcasts => "product_id\tstart\tduration_s\tchannel",
        }
    }

    fn columns(self) -> usize {
        self.header().split('\t').count()
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_name())
    }
}

/// Where a record came from. In-memory records have no line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Position {
    pub table: Table,
    pub line: Option<usize>,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}", self.table, line),
            None => write!(f, "{}", self.table),
        }
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{at}: malformed row: {message}")]
    Malformed { at: Position, message: String },
    #[error("{at}: unknown {kind} `{key}`")]
    DanglingKey {
        at: Position,
        kind: &'static str,
        key: String,
    },
    #[error("{at}: duplicate {kind} `{key}`")]
    Duplicate {
        at: Position,
        kind: &'static str,
        key: String,
    },
    #[error("{at}: viewing interval of user `{user}` overlaps the previous one")]
    OverlappingViewing { at: Position, user: UserId },
    #[error("survey.tsv: no response for user `{user}` and product `{product}`")]
    MissingSurvey { user: UserId, product: ProductId },
}

/// File locations of the five catalog tables.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CatalogPaths {
    pub users: PathBuf,
    pub products: PathBuf,
    pub survey: PathBuf,
    pub viewing: PathBuf,
    pub broadcasts: PathBuf,
}

impl CatalogPaths {
    /// Standard file names inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            users: dir.join(Table::Users.file_name()),
            products: dir.join(Table::Products.file_name()),
            survey: dir.join(Table::Survey.file_name()),
            viewing: dir.join(Table::Viewing.file_name()),
            broadcasts: dir.join(Table::Broadcasts.file_name()),
        }
    }

    pub fn get(&self, table: Table) -> &Path {
        match table {
            Table::Users => &self.users,
            Table::Products => &self.products,
            Table::Survey => &self.survey,
            Table::Viewing => &self.viewing,
            Table::Broadcasts => &self.broadcasts,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RowCounts {
    pub users: usize,
    pub products: usize,
    pub responses: usize,
    pub viewing: usize,
    pub broadcasts: usize,
    pub advert_matched: usize,
}

/// A validated, immutable panel: demographics, survey answers, viewing
/// history and advert schedule. Every table is held sorted by its primary
/// key, so two catalogs with the same content compare equal.
#[derive(Clone, Debug, PartialEq)]
pub struct Catalog {
    users: Vec<DemographicProfile>,
    products: Vec<ProductId>,
    responses: Vec<SurveyResponse>,
    viewing: Vec<ViewingRecord>,
    broadcasts: Vec<AdBroadcast>,
    advert_matched: BTreeSet<ProductId>,
}

struct Tagged<T> {
    line: Option<usize>,
    rec: T,
}

fn untagged<T>(v: Vec<T>) -> Vec<Tagged<T>> {
    v.into_iter().map(|rec| Tagged { line: None, rec }).collect()
}

impl Catalog {
    /// Validate in-memory tables and build a catalog.
    pub fn new(
        users: Vec<DemographicProfile>,
        products: Vec<ProductId>,
        responses: Vec<SurveyResponse>,
        viewing: Vec<ViewingRecord>,
        broadcasts: Vec<AdBroadcast>,
    ) -> Result<Self, DataError> {
        Self::validate(
            untagged(users),
            untagged(products),
            untagged(responses),
            untagged(viewing),
            untagged(broadcasts),
        )
    }

    pub fn empty() -> Self {
        Self {
            users: Vec::new(),
            products: Vec::new(),
            responses: Vec::new(),
            viewing: Vec::new(),
            broadcasts: Vec::new(),
            advert_matched: BTreeSet::new(),
        }
    }

    fn validate(
        mut users: Vec<Tagged<DemographicProfile>>,
        mut products: Vec<Tagged<ProductId>>,
        mut responses: Vec<Tagged<SurveyResponse>>,
        mut viewing: Vec<Tagged<ViewingRecord>>,
        mut broadcasts: Vec<Tagged<AdBroadcast>>,
    ) -> Result<Self, DataError> {
        let pos = |table, line| Position { table, line };

        for u in &users {
            check_id(u.rec.user_id.as_str(), pos(Table::Users, u.line))?;
        }
        for p in &products {
            check_id(p.rec.as_str(), pos(Table::Products, p.line))?;
        }
        for v in &viewing {
            check_minute(v.rec.start, pos(Table::Viewing, v.line))?;
            check_id(&v.rec.channel, pos(Table::Viewing, v.line))?;
        }
        for b in &broadcasts {
            let at = pos(Table::Broadcasts, b.line);
            check_minute(b.rec.start, at)?;
            check_id(&b.rec.channel, at)?;
            if b.rec.duration_s == 0 {
                return Err(DataError::Malformed {
                    at,
                    message: "broadcast duration must be positive".into(),
                });
            }
        }

        users.sort_by(|a, b| a.rec.user_id.cmp(&b.rec.user_id).then(a.line.cmp(&b.line)));
        for w in users.windows(2) {
            if w[0].rec.user_id == w[1].rec.user_id {
                return Err(DataError::Duplicate {
                    at: pos(Table::Users, w[1].line),
                    kind: "user",
                    key: w[1].rec.user_id.to_string(),
                });
            }
        }
        products.sort_by(|a, b| a.rec.cmp(&b.rec).then(a.line.cmp(&b.line)));
        for w in products.windows(2) {
            if w[0].rec == w[1].rec {
                return Err(DataError::Duplicate {
                    at: pos(Table::Products, w[1].line),
                    kind: "product",
                    key: w[1].rec.to_string(),
                });
            }
        }
        let user_set: BTreeSet<&UserId> = users.iter().map(|u| &u.rec.user_id).collect();
        let product_set: BTreeSet<&ProductId> = products.iter().map(|p| &p.rec).collect();

        responses.sort_by_key(|r| r.line);
        for r in &responses {
            let at = pos(Table::Survey, r.line);
            if !user_set.contains(&r.rec.user_id) {
                return Err(dangling(at, "user", r.rec.user_id.as_str()));
            }
            if !product_set.contains(&r.rec.product_id) {
                return Err(dangling(at, "product", r.rec.product_id.as_str()));
            }
        }
        responses.sort_by(|a, b| {
            (&a.rec.user_id, &a.rec.product_id, a.line).cmp(&(&b.rec.user_id, &b.rec.product_id, b.line))
        });
        for w in responses.windows(2) {
            if w[0].rec.user_id == w[1].rec.user_id && w[0].rec.product_id == w[1].rec.product_id {
                return Err(DataError::Duplicate {
                    at: pos(Table::Survey, w[1].line),
                    kind: "survey response",
                    key: format!("{}/{}", w[1].rec.user_id, w[1].rec.product_id),
                });
            }
        }
        if responses.len() != users.len() * products.len() {
            // Sorted and duplicate-free, so the first gap is found by a merge walk.
            let mut it = responses.iter().peekable();
            for u in &users {
                for p in &products {
                    match it.peek() {
                        Some(r) if r.rec.user_id == u.rec.user_id && r.rec.product_id == p.rec => {
                            it.next();
                        }
                        _ => {
                            return Err(DataError::MissingSurvey {
                                user: u.rec.user_id.clone(),
                                product: p.rec.clone(),
                            })
                        }
                    }
                }
            }
        }

        viewing.sort_by_key(|v| v.line);
        for v in &viewing {
            if !user_set.contains(&v.rec.user_id) {
                return Err(dangling(pos(Table::Viewing, v.line), "user", v.rec.user_id.as_str()));
            }
        }
        viewing.sort_by(|a, b| {
            (&a.rec.user_id, a.rec.start, a.rec.duration_s, &a.rec.channel, a.line).cmp(&(
                &b.rec.user_id,
                b.rec.start,
                b.rec.duration_s,
                &b.rec.channel,
                b.line,
            ))
        });
        for w in viewing.windows(2) {
            if w[0].rec.user_id == w[1].rec.user_id && w[1].rec.start < w[0].rec.end() {
                return Err(DataError::OverlappingViewing {
                    at: pos(Table::Viewing, w[1].line),
                    user: w[1].rec.user_id.clone(),
                });
            }
        }

        broadcasts.sort_by_key(|b| b.line);
        for b in &broadcasts {
            if !product_set.contains(&b.rec.product_id) {
                return Err(dangling(
                    pos(Table::Broadcasts, b.line),
                    "product",
                    b.rec.product_id.as_str(),
                ));
            }
        }
        broadcasts.sort_by(|a, b| broadcast_key(&a.rec).cmp(&broadcast_key(&b.rec)));

        let advert_matched = broadcasts.iter().map(|b| b.rec.product_id.clone()).collect();
        Ok(Self {
            users: users.into_iter().map(|t| t.rec).collect(),
            products: products.into_iter().map(|t| t.rec).collect(),
            responses: responses.into_iter().map(|t| t.rec).collect(),
            viewing: viewing.into_iter().map(|t| t.rec).collect(),
            broadcasts: broadcasts.into_iter().map(|t| t.rec).collect(),
            advert_matched,
        })
    }

    pub fn users(&self) -> &[DemographicProfile] {
        &self.users
    }

    pub fn products(&self) -> &[ProductId] {
        &self.products
    }

    /// Survey responses sorted by (user, product).
    pub fn responses(&self) -> &[SurveyResponse] {
        &self.responses
    }

    pub fn viewing(&self) -> &[ViewingRecord] {
        &self.viewing
    }

    pub fn broadcasts(&self) -> &[AdBroadcast] {
        &self.broadcasts
    }

    /// Products with at least one advert broadcast.
    pub fn advert_matched(&self) -> &BTreeSet<ProductId> {
        &self.advert_matched
    }

    pub fn user(&self, id: &UserId) -> Option<&DemographicProfile> {
        self.users
            .binary_search_by(|u| u.user_id.cmp(id))
            .ok()
            .map(|i| &self.users[i])
    }

    pub fn has_product(&self, id: &ProductId) -> bool {
        self.products.binary_search(id).is_ok()
    }

    pub fn response(&self, user: &UserId, product: &ProductId) -> Option<&SurveyResponse> {
        self.responses
            .binary_search_by(|r| (&r.user_id, &r.product_id).cmp(&(user, product)))
            .ok()
            .map(|i| &self.responses[i])
    }

    pub fn row_counts(&self) -> RowCounts {
        RowCounts {
            users: self.users.len(),
            products: self.products.len(),
            responses: self.responses.len(),
            viewing: self.viewing.len(),
            broadcasts: self.broadcasts.len(),
            advert_matched: self.advert_matched.len(),
        }
    }

    /// Serialized bytes of one table, exactly as [`write_catalog`] writes it.
    pub fn table_bytes(&self, table: Table) -> Vec<u8> {
        let mut out = String::new();
        out.push_str(table.header());
        out.push('\n');
        let mut row = |fields: &[&str]| {
            out.push_str(&fields.join("\t"));
            out.push('\n');
        };
        match table {
            Table::Users => {
                for u in &self.users {
                    row(&[
                        u.user_id.as_str(),
                        u.age.label(),
                        u.sex.label(),
                        u.marital_status.label(),
                        u.parental_status.label(),
                        u.income.label(),
                    ]);
                }
            }
            Table::Products => {
                for p in &self.products {
                    row(&[p.as_str()]);
                }
            }
            Table::Survey => {
                for r in &self.responses {
                    row(&[
                        r.user_id.as_str(),
                        r.product_id.as_str(),
                        yes_no(r.pi_jan),
                        yes_no(r.pi_mar),
                        yes_no(r.ap_jan),
                        yes_no(r.ap_mar),
                    ]);
                }
            }
            Table::Viewing => {
                for v in &self.viewing {
                    let start = v.start.format(TIMESTAMP_FORMAT).to_string();
                    let dur = v.duration_s.to_string();
                    row(&[v.user_id.as_str(), &start, &dur, &v.channel]);
                }
            }
            Table::Broadcasts => {
                for b in &self.broadcasts {
                    let start = b.start.format(TIMESTAMP_FORMAT).to_string();
                    let dur = b.duration_s.to_string();
                    row(&[b.product_id.as_str(), &start, &dur, &b.channel]);
                }
            }
        }
        out.into_bytes()
    }

    /// SHA-256 over the serialized tables, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for table in Table::ALL {
            hasher.update(table.file_name().as_bytes());
            hasher.update([0u8]);
            hasher.update(self.table_bytes(table));
        }
        hex::encode(hasher.finalize())
    }
}

fn broadcast_key(b: &AdBroadcast) -> (NaiveDateTime, &str, &ProductId, u32) {
    (b.start, b.channel.as_str(), &b.product_id, b.duration_s)
}

fn dangling(at: Position, kind: &'static str, key: &str) -> DataError {
    DataError::DanglingKey {
        at,
        kind,
        key: key.to_owned(),
    }
}

fn check_id(id: &str, at: Position) -> Result<(), DataError> {
    if id.is_empty() || id.contains(['\t', '\n', '\r']) {
        return Err(DataError::Malformed {
            at,
            message: format!("invalid identifier {id:?}"),
        });
    }
    Ok(())
}

fn check_minute(t: NaiveDateTime, at: Position) -> Result<(), DataError> {
    if t.second() != 0 || t.nanosecond() != 0 {
        return Err(DataError::Malformed {
            at,
            message: format!("timestamp {t} is not minute aligned"),
        });
    }
    Ok(())
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "Yes"
    } else {
        "No"
    }
}

fn parse_yes_no(s: &str) -> Option<bool> {
    match s {
        "Yes" => Some(true),
        "No" => Some(false),
        _ => None,
    }
}

/// Split a table into data rows, checking the header. Yields (line number, fields).
fn rows(table: Table, text: &str) -> Result<Vec<(usize, Vec<&str>)>, DataError> {
    let mut lines = text.split('\n');
    let header = lines.next().unwrap_or("").trim_end_matches('\r');
    if header != table.header() {
        return Err(DataError::Malformed {
            at: Position {
                table,
                line: Some(1),
            },
            message: format!("expected header {:?}", table.header()),
        });
    }
    let body: Vec<&str> = lines.collect();
    let mut out = Vec::with_capacity(body.len());
    for (i, raw) in body.iter().enumerate() {
        let line = i + 2;
        let raw = raw.trim_end_matches('\r');
        if raw.is_empty() && i + 1 == body.len() {
            break;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != table.columns() {
            return Err(DataError::Malformed {
                at: Position {
                    table,
                    line: Some(line),
                },
                message: format!("expected {} fields, found {}", table.columns(), fields.len()),
            });
        }
        out.push((line, fields));
    }
    Ok(out)
}

fn field<T>(value: Option<T>, table: Table, line: usize, what: &str, raw: &str) -> Result<T, DataError> {
    value.ok_or_else(|| DataError::Malformed {
        at: Position {
            table,
            line: Some(line),
        },
        message: format!("invalid {what} {raw:?}"),
    })
}

fn parse_time(raw: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(raw, TIMESTAMP_FORMAT).ok()
}

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_owned(),
        source,
    })
}

/// Parse the five tables from in-memory text, in [`Table::ALL`] order.
pub fn parse_tables(texts: [&str; 5]) -> Result<Catalog, DataError> {
    let [users_txt, products_txt, survey_txt, viewing_txt, broadcasts_txt] = texts;

    let t = Table::Users;
    let mut users = Vec::new();
    for (line, f) in rows(t, users_txt)? {
        users.push(Tagged {
            line: Some(line),
            rec: DemographicProfile {
                user_id: UserId::new(f[0]),
                age: field(AgeBracket::from_label(f[1]), t, line, "age", f[1])?,
                sex: field(Sex::from_label(f[2]), t, line, "sex", f[2])?,
                marital_status: field(MaritalStatus::from_label(f[3]), t, line, "marital status", f[3])?,
                parental_status: field(ParentalStatus::from_label(f[4]), t, line, "parental status", f[4])?,
                income: field(IncomeBracket::from_label(f[5]), t, line, "income", f[5])?,
            },
        });
    }

    let products = rows(Table::Products, products_txt)?
        .into_iter()
        .map(|(line, f)| Tagged {
            line: Some(line),
            rec: ProductId::new(f[0]),
        })
        .collect();

    let t = Table::Survey;
    let mut responses = Vec::new();
    for (line, f) in rows(t, survey_txt)? {
        let answer = |i: usize| field(parse_yes_no(f[i]), t, line, "answer", f[i]);
        responses.push(Tagged {
            line: Some(line),
            rec: SurveyResponse {
                user_id: UserId::new(f[0]),
                product_id: ProductId::new(f[1]),
                pi_jan: answer(2)?,
                pi_mar: answer(3)?,
                ap_jan: answer(4)?,
                ap_mar: answer(5)?,
            },
        });
    }

    let t = Table::Viewing;
    let mut viewing = Vec::new();
    for (line, f) in rows(t, viewing_txt)? {
        viewing.push(Tagged {
            line: Some(line),
            rec: ViewingRecord {
                user_id: UserId::new(f[0]),
                start: field(parse_time(f[1]), t, line, "timestamp", f[1])?,
                duration_s: field(f[2].parse().ok(), t, line, "duration", f[2])?,
                channel: f[3].to_owned(),
            },
        });
    }

    let t = Table::Broadcasts;
    let mut broadcasts = Vec::new();
    for (line, f) in rows(t, broadcasts_txt)? {
        broadcasts.push(Tagged {
            line: Some(line),
            rec: AdBroadcast {
                product_id: ProductId::new(f[0]),
                start: field(parse_time(f[1]), t, line, "timestamp", f[1])?,
                duration_s: field(f[2].parse().ok(), t, line, "duration", f[2])?,
                channel: f[3].to_owned(),
            },
        });
    }

    Catalog::validate(users, products, responses, viewing, broadcasts)
}

/// Read and validate a catalog from its five files.
pub fn parse_catalog(paths: &CatalogPaths) -> Result<Catalog, DataError> {
    let texts = Table::ALL.map(|t| read(paths.get(t)));
    let [a, b, c, d, e] = texts;
    parse_tables([&a?, &b?, &c?, &d?, &e?])
}

/// Write all five tables, sorted by primary key. Parent directories are created.
pub fn write_catalog(catalog: &Catalog, paths: &CatalogPaths) -> Result<(), DataError> {
    for table in Table::ALL {
        let path = paths.get(table);
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|source| DataError::Io {
                    path: parent.to_owned(),
                    source,
                })?;
            }
        }
        fs::write(path, catalog.table_bytes(table)).map_err(|source| DataError::Io {
            path: path.to_owned(),
            source,
        })?;
    }
    Ok(())
}

/// Index of survey responses by (user, product), for callers that look up many pairs.
pub fn response_index(catalog: &Catalog) -> BTreeMap<(&UserId, &ProductId), &SurveyResponse> {
    catalog
        .responses()
        .iter()
        .map(|r| ((&r.user_id, &r.product_id), r))
        .collect()
}
