//! Synthetic panels with planted exposure and demographic effects.
//!
//! Wave-1 answers follow `P(yes) = σ(α₁ + β_demo·d + β_exp·e/100)`, where `d`
//! is the one-hot demographic vector and `e` the user's total exposure
//! seconds to the product. A wave-2 answer repeats wave 1 with probability
//! `wave_persistence`, and is otherwise a fresh draw from
//! `σ(α₂[wave 1] + β_demo·d + β_exp·e/100)`. The intercepts are calibrated
//! on the advert-matched pairs so the expected category distribution equals
//! the configured rates.
//!
//! Draw order on the single ChaCha8 stream:
//! 1. demographics, per user in id order (age, sex, marital, parental, income);
//! 2. broadcasts, per advert-matched product in id order (spot count, then
//!    day, channel, slot, minute and length per spot);
//! 3. viewing sessions, per user in id order, day by day;
//! 4. survey answers, per (user, product) in id order: AP wave 1, AP
//!    persistence coin, AP fresh draw, then the same three for PI.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    AdBroadcast, AgeBracket, Catalog, DataError, DemographicProfile, IncomeBracket, MaritalStatus, ParentalStatus,
    ProductId, Sex, SurveyResponse, UserId, ViewingRecord,
};
use crate::exposure::compute_exposure;
use crate::features::{encode_demographics, DEMOGRAPHIC_DIMS};
use crate::learners::sigmoid;
use crate::runner::BaseUniverse;

const CHANNELS: [&str; 3] = ["ch1", "ch2", "ch3"];
const DAYS: i64 = 56;
const BISECTION_STEPS: usize = 100;
/// Calibrated expected rates must land this close to the target.
const CALIBRATION_TOLERANCE: f64 = 0.005;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {0}")]
    InvalidConfig(String),
    #[error("infeasible marginals: {0}")]
    Infeasible(String),
    #[error("intercept calibration failed: target rate {target}, reached {reached}")]
    Calibration { target: f64, reached: f64 },
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub n_users: usize,
    pub n_products: usize,
    /// The first `n_advert_matched` products receive broadcasts.
    pub n_advert_matched: usize,
    /// Log-odds per 100 seconds of exposure.
    pub beta_exposure: f64,
    /// One weight per demographic one-hot column; empty means all zero.
    pub beta_demo: Vec<f64>,
    /// Target shares of categories 0–3 for Actual Purchase.
    pub ap_rates: [f64; 4],
    /// Target shares of categories 0–3 for Purchase Intention.
    pub pi_rates: [f64; 4],
    pub wave_persistence: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            n_users: 200,
            n_products: 6,
            n_advert_matched: 6,
            beta_exposure: 0.0,
            beta_demo: Vec::new(),
            ap_rates: [0.06, 0.76, 0.07, 0.10],
            pi_rates: [0.08, 0.58, 0.08, 0.26],
            wave_persistence: 0.5,
            seed: 1,
        }
    }
}

impl GenConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("generator config always serializes")
    }

    fn beta_demo(&self) -> [f64; DEMOGRAPHIC_DIMS] {
        let mut out = [0.0; DEMOGRAPHIC_DIMS];
        out[..self.beta_demo.len()].copy_from_slice(&self.beta_demo);
        out
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_users == 0 || self.n_products == 0 {
            return bad("n_users and n_products must be positive".into());
        }
        if self.n_advert_matched == 0 || self.n_advert_matched > self.n_products {
            return bad(format!(
                "n_advert_matched must be in 1..={}, got {}",
                self.n_products, self.n_advert_matched
            ));
        }
        if !self.beta_demo.is_empty() && self.beta_demo.len() != DEMOGRAPHIC_DIMS {
            return bad(format!(
                "beta_demo needs {DEMOGRAPHIC_DIMS} entries, got {}",
                self.beta_demo.len()
            ));
        }
        if !self.beta_exposure.is_finite() || self.beta_demo.iter().any(|b| !b.is_finite()) {
            return bad("coefficients must be finite".into());
        }
        if !(0.0..1.0).contains(&self.wave_persistence) {
            return bad(format!("wave_persistence must be in [0, 1), got {}", self.wave_persistence));
        }
        Ok(())
    }
}

/// Conditional targets derived from category shares.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveTargets {
    /// P(wave 1 = yes).
    pub first: f64,
    /// P(fresh wave-2 draw = yes | wave 1 = yes).
    pub fresh_after_yes: f64,
    /// P(fresh wave-2 draw = yes | wave 1 = no).
    pub fresh_after_no: f64,
}

/// Turns category 0–3 shares into wave targets, given the persistence.
pub fn wave_targets(rates: [f64; 4], persistence: f64) -> Result<WaveTargets, SynthError> {
    if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(SynthError::Infeasible(format!("rates {rates:?} must lie in [0, 1]")));
    }
    let sum: f64 = rates.iter().sum();
    if (sum - 1.0).abs() > 0.05 {
        return Err(SynthError::Infeasible(format!("category 0-3 rates sum to {sum}, not 1")));
    }
    let r = rates.map(|v| v / sum);
    let first = r[0] + r[3];
    let mar_given_yes = r[3] / first;
    let mar_given_no = r[2] / (r[1] + r[2]);
    let fresh_after_yes = (mar_given_yes - persistence) / (1.0 - persistence);
    let fresh_after_no = mar_given_no / (1.0 - persistence);
    let open = |v: f64| v > 0.0 && v < 1.0;
    if !open(first) {
        return Err(SynthError::Infeasible(format!("wave-1 yes rate {first} is not in (0, 1)")));
    }
    if !open(fresh_after_yes) || !open(fresh_after_no) {
        return Err(SynthError::Infeasible(format!(
            "persistence {persistence} cannot produce P(wave 2 yes | wave 1 yes) = {mar_given_yes:.4} \
             and P(wave 2 yes | wave 1 no) = {mar_given_no:.4}"
        )));
    }
    Ok(WaveTargets {
        first,
        fresh_after_yes,
        fresh_after_no,
    })
}

/// Weighted mean of `σ(α + sᵢ)`.
fn expected_rate(alpha: f64, scores: &[f64], weights: Option<&[f64]>) -> f64 {
    match weights {
        None => scores.iter().map(|s| sigmoid(alpha + s)).sum::<f64>() / scores.len() as f64,
        Some(w) => {
            let total: f64 = w.iter().sum();
            scores.iter().zip(w).map(|(s, w)| w * sigmoid(alpha + s)).sum::<f64>() / total
        }
    }
}

/// Bisection for α with mean `σ(α + sᵢ)` equal to `target`.
pub fn calibrate_intercept(scores: &[f64], target: f64) -> Result<f64, SynthError> {
    calibrate_weighted(scores, None, target)
}

fn calibrate_weighted(scores: &[f64], weights: Option<&[f64]>, target: f64) -> Result<f64, SynthError> {
    if !(target > 0.0 && target < 1.0) {
        return Err(SynthError::Infeasible(format!("target rate {target} is not in (0, 1)")));
    }
    if scores.is_empty() {
        return Err(SynthError::InvalidConfig("no pairs to calibrate on".into()));
    }
    let (mut lo, mut hi) = (-60.0f64, 60.0f64);
    let mut mid = 0.0;
    for _ in 0..BISECTION_STEPS {
        mid = 0.5 * (lo + hi);
        if expected_rate(mid, scores, weights) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let reached = expected_rate(mid, scores, weights);
    if (reached - target).abs() > CALIBRATION_TOLERANCE {
        return Err(SynthError::Calibration { target, reached });
    }
    Ok(mid)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intercepts {
    pub first: f64,
    pub after_yes: f64,
    pub after_no: f64,
}

/// Wave intercepts for one behavior, calibrated on the given scores.
pub fn calibrate_waves(scores: &[f64], targets: WaveTargets) -> Result<Intercepts, SynthError> {
    let first = calibrate_intercept(scores, targets.first)?;
    let p_yes: Vec<f64> = scores.iter().map(|s| sigmoid(first + s)).collect();
    let p_no: Vec<f64> = p_yes.iter().map(|p| 1.0 - p).collect();
    Ok(Intercepts {
        first,
        after_yes: calibrate_weighted(scores, Some(&p_yes), targets.fresh_after_yes)?,
        after_no: calibrate_weighted(scores, Some(&p_no), targets.fresh_after_no)?,
    })
}

fn width(n: usize) -> usize {
    n.max(1).to_string().len().max(3)
}

fn user_ids(n: usize) -> Vec<UserId> {
    let w = width(n);
    (1..=n).map(|i| UserId::new(format!("u{i:0w$}"))).collect()
}

fn product_ids(n: usize) -> Vec<ProductId> {
    let w = width(n);
    (1..=n).map(|i| ProductId::new(format!("p{i:0w$}"))).collect()
}

/// Base ids a generated panel would have, without generating it.
pub fn id_universe(config: &GenConfig) -> BaseUniverse {
    BaseUniverse {
        users: user_ids(config.n_users),
        products: product_ids(config.n_products)
            .into_iter()
            .take(config.n_advert_matched)
            .collect(),
    }
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, values: &[T]) -> T {
    values[rng.random_range(0..values.len())]
}

fn origin() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2017, 1, 16)
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .expect("valid start date")
}

fn at(day: i64, minute_of_day: i64) -> NaiveDateTime {
    origin() + Duration::days(day) + Duration::minutes(minute_of_day)
}

fn gen_broadcasts(rng: &mut ChaCha8Rng, products: &[ProductId]) -> Vec<AdBroadcast> {
    let mut out = Vec::new();
    for p in products {
        let spots = rng.random_range(250..=1000);
        for _ in 0..spots {
            let day = rng.random_range(0..DAYS);
            let channel = pick(rng, &CHANNELS);
            let minute = if rng.random_bool(0.6) {
                rng.random_range(19 * 60..23 * 60)
            } else {
                rng.random_range(6 * 60..19 * 60)
            };
            let duration_s = pick(rng, &[15, 15, 30, 30, 30, 60]);
            out.push(AdBroadcast {
                product_id: p.clone(),
                start: at(day, minute),
                duration_s,
                channel: channel.to_string(),
            });
        }
    }
    out
}

fn gen_viewing(rng: &mut ChaCha8Rng, users: &[UserId]) -> Vec<ViewingRecord> {
    let propensity = Beta::new(2.0, 3.0).expect("valid beta parameters");
    let mut out = Vec::new();
    for u in users {
        let p = propensity.sample(rng);
        for day in 0..DAYS {
            if rng.random_bool(p * 0.5) {
                let start = rng.random_range(6 * 60..17 * 60);
                let len = rng.random_range(15..=120);
                out.push(ViewingRecord {
                    user_id: u.clone(),
                    start: at(day, start),
                    duration_s: len as u32 * 60,
                    channel: pick(rng, &CHANNELS).to_string(),
                });
            }
            if rng.random_bool(p) {
                let start = rng.random_range(19 * 60..21 * 60);
                let len = rng.random_range(30i64..=240).min(24 * 60 - start);
                out.push(ViewingRecord {
                    user_id: u.clone(),
                    start: at(day, start),
                    duration_s: len as u32 * 60,
                    channel: pick(rng, &CHANNELS).to_string(),
                });
            }
        }
    }
    out
}

fn draw_waves(rng: &mut ChaCha8Rng, score: f64, c: &Intercepts, persistence: f64) -> (bool, bool) {
    let jan = rng.random_bool(sigmoid(c.first + score));
    let persist = rng.random_bool(persistence);
    let fresh_alpha = if jan { c.after_yes } else { c.after_no };
    let fresh = rng.random_bool(sigmoid(fresh_alpha + score));
    (jan, if persist { jan } else { fresh })
}

/// Generated panel plus the calibrated intercepts.
#[derive(Clone, Debug)]
pub struct Panel {
    pub catalog: Catalog,
    pub ap: Intercepts,
    pub pi: Intercepts,
}

pub fn generate_panel(config: &GenConfig) -> Result<Catalog, SynthError> {
    generate(config).map(|p| p.catalog)
}

pub fn generate(config: &GenConfig) -> Result<Panel, SynthError> {
    config.validate()?;
    let ap_targets = wave_targets(config.ap_rates, config.wave_persistence)?;
    let pi_targets = wave_targets(config.pi_rates, config.wave_persistence)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let users = user_ids(config.n_users);
    let products = product_ids(config.n_products);

    let profiles: Vec<DemographicProfile> = users
        .iter()
        .map(|u| DemographicProfile {
            user_id: u.clone(),
            age: pick(&mut rng, AgeBracket::ALL),
            sex: pick(&mut rng, Sex::ALL),
            marital_status: pick(&mut rng, MaritalStatus::ALL),
            parental_status: pick(&mut rng, ParentalStatus::ALL),
            income: pick(&mut rng, IncomeBracket::ALL),
        })
        .collect();
    let matched = &products[..config.n_advert_matched];
    let broadcasts = gen_broadcasts(&mut rng, matched);
    let viewing = gen_viewing(&mut rng, &users);
    let exposure = compute_exposure(&viewing, &broadcasts);

    let beta = config.beta_demo();
    let demo_scores: Vec<f64> = profiles
        .iter()
        .map(|p| encode_demographics(p).iter().zip(&beta).map(|(x, b)| x * b).sum())
        .collect();
    let score = |ui: usize, p: &ProductId| {
        demo_scores[ui] + config.beta_exposure * exposure.pair_total(&users[ui], p) as f64 / 100.0
    };
    let calibration_scores: Vec<f64> = (0..users.len())
        .flat_map(|ui| matched.iter().map(move |p| (ui, p)))
        .map(|(ui, p)| score(ui, p))
        .collect();
    let ap = calibrate_waves(&calibration_scores, ap_targets)?;
    let pi = calibrate_waves(&calibration_scores, pi_targets)?;

    let mut responses = Vec::with_capacity(users.len() * products.len());
    for (ui, u) in users.iter().enumerate() {
        for p in &products {
            let s = score(ui, p);
            let (ap_jan, ap_mar) = draw_waves(&mut rng, s, &ap, config.wave_persistence);
            let (pi_jan, pi_mar) = draw_waves(&mut rng, s, &pi, config.wave_persistence);
            responses.push(SurveyResponse {
                user_id: u.clone(),
                product_id: p.clone(),
                pi_jan,
                pi_mar,
                ap_jan,
                ap_mar,
            });
        }
    }
    let catalog = Catalog::new(profiles, products, responses, viewing, broadcasts)?;
    Ok(Panel { catalog, ap, pi })
}
