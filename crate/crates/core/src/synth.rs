//! Seeded synthetic market with an analytically known signal.
//!
//! Returns are a sum of three parts: a per-industry common factor, an
//! exponentially decaying drift planted by trading events, and idiosyncratic
//! noise. Because the drift recursion is known, the generator also emits the
//! exact conditional-mean forecast per stock and day plus its realized mean
//! information coefficient — the ceiling any model can reach on this data.
//!
//! Industries split into two blocks that differ in volatility, event
//! frequency, and who holds them: institutions hold the calm block, while
//! speculative capital and retail hold the eventful one.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::mat::Mat;
use crate::metrics::daily_ic;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSpec {
    pub n_stocks: usize,
    pub n_industries: usize,
    pub n_days: usize,
    /// Idiosyncratic daily return noise (standard deviation).
    pub noise: f64,
    /// Baseline event probability per stock-day.
    pub event_rate: f64,
    /// Day-zero drift magnitude planted by one event.
    pub event_amplitude: f64,
    /// Per-day exponential decay rate of planted drift.
    pub event_decay: f64,
    /// Standard deviation of the per-industry common factor.
    pub industry_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_stocks: 60,
            n_industries: 6,
            n_days: 600,
            noise: 0.01,
            event_rate: 0.02,
            event_amplitude: 0.01,
            event_decay: 0.1,
            industry_scale: 0.005,
            seed: 7,
        }
    }
}

#[derive(Debug, PartialEq)]
pub enum SynthError {
    BadSpec(String),
    DayOutOfRange { day: usize, max: usize },
}

impl core::fmt::Display for SynthError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SynthError::BadSpec(msg) => write!(f, "invalid synthetic spec: {msg}"),
            SynthError::DayOutOfRange { day, max } => {
                write!(f, "anchor day {day} out of range (max {max})")
            }
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_industries == 0 {
            return Err(SynthError::BadSpec("need at least one industry".into()));
        }
        if self.n_stocks < self.n_industries {
            return Err(SynthError::BadSpec(format!(
                "{} stocks cannot cover {} industries",
                self.n_stocks, self.n_industries
            )));
        }
        if self.n_days < 2 {
            return Err(SynthError::BadSpec("need at least two days".into()));
        }
        if !(0.0..=1.0).contains(&self.event_rate) {
            return Err(SynthError::BadSpec(format!(
                "event rate {} outside [0, 1]",
                self.event_rate
            )));
        }
        for (name, v) in [
            ("noise", self.noise),
            ("event_amplitude", self.event_amplitude),
            ("industry_scale", self.industry_scale),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(SynthError::BadSpec(format!("{name} {v} must be >= 0")));
            }
        }
        if !self.event_decay.is_finite() || self.event_decay <= 0.0 {
            return Err(SynthError::BadSpec(format!(
                "event_decay {} must be > 0",
                self.event_decay
            )));
        }
        Ok(())
    }
}

/// Exact per-anchor conditional means and the generator's achievable IC.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct OracleBundle {
    pub spec: SyntheticSpec,
    pub stocks: Vec<String>,
    pub dates: Vec<String>,
    /// n_stocks x (n_days - 1): expected next-day return at each anchor day.
    pub mu: Mat,
    /// Mean daily IC of mu against realized labels; None when every day is
    /// degenerate (no cross-sectional variance).
    pub mean_ic: Option<f64>,
    pub days_used: usize,
}

/// Everything the pipeline consumes, in its external file formats.
#[derive(Clone, Debug)]
pub struct SyntheticMarket {
    pub panel_csv: String,
    pub industry_csv: String,
    pub holdings_csv: String,
    pub events_csv: String,
    pub bundle: OracleBundle,
}

/// The exact conditional mean for one anchor day across stocks.
pub fn oracle_predict(bundle: &OracleBundle, anchor: usize) -> Result<Vec<f64>, SynthError> {
    if anchor >= bundle.mu.cols() {
        return Err(SynthError::DayOutOfRange {
            day: anchor,
            max: bundle.mu.cols().saturating_sub(1),
        });
    }
    Ok((0..bundle.mu.rows()).map(|i| bundle.mu.at(i, anchor)).collect())
}

// --- Gregorian helpers (trading days = weekdays) ---

fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = (y - era * 400) as i64;
    let mp = if m > 2 { m - 3 } else { m + 9 } as i64;
    let doy = (153 * mp + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146097 + doe - 719468
}

fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719468;
    let era = if z >= 0 { z } else { z - 146096 } / 146097;
    let doe = z - era * 146097;
    let yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

fn is_weekday(day_number: i64) -> bool {
    // 1970-01-01 was a Thursday; encode Sun=0 .. Sat=6.
    let dow = (day_number + 4).rem_euclid(7);
    dow != 0 && dow != 6
}

/// `n` consecutive weekdays starting at the first weekday on or after the
/// given date, formatted YYYY-MM-DD (lexicographic = chronological).
pub fn trading_dates(start: (i64, u32, u32), n: usize) -> Vec<String> {
    let mut day = days_from_civil(start.0, start.1, start.2);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if is_weekday(day) {
            let (y, m, d) = civil_from_days(day);
            out.push(format!("{y:04}-{m:02}-{d:02}"));
        }
        day += 1;
    }
    out
}

const START_DATE: (i64, u32, u32) = (2020, 1, 2);
const BASE_PRICE: f64 = 100.0;
/// (volatility multiplier, event-rate multiplier) per block.
const LOW_BLOCK: (f64, f64) = (0.7, 0.5);
const HIGH_BLOCK: (f64, f64) = (1.3, 1.5);
const INS_WEIGHT: f64 = 0.8;
const HOT_WEIGHT: f64 = 0.8;
const RET_WEIGHT: f64 = 0.6;

fn fmt_row(values: &[f64]) -> String {
    let mut out = String::new();
    for v in values {
        out.push(',');
        out.push_str(&format!("{v}"));
    }
    out
}

/// Industry of stock `i`: round-robin so block sizes stay balanced.
fn industry_of(i: usize, k: usize) -> usize {
    i % k
}

/// Calm institutional block = first half of industries (rounded down).
fn is_low_block(industry: usize, k: usize) -> bool {
    industry < k / 2
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticMarket, SynthError> {
    spec.validate()?;
    let n = spec.n_stocks;
    let k = spec.n_industries;
    let t_days = spec.n_days;

    let stocks: Vec<String> = (1..=n).map(|i| format!("S{i:03}")).collect();
    let industries: Vec<String> = (1..=k).map(|j| format!("IND{j}")).collect();
    let dates = trading_dates(START_DATE, t_days);

    // Independent deterministic streams so a change in one consumer never
    // shifts the draws of another.
    let mut factor_rng = Rng::stream(spec.seed, 0);
    let mut noise_rng = Rng::stream(spec.seed, 1);
    let mut event_rng = Rng::stream(spec.seed, 2);
    let mut micro_rng = Rng::stream(spec.seed, 3);

    // Event placement: (day, stock) -> action triple, drawn uniformly over
    // the 27 joint actions.
    let mut event_triples: Vec<Vec<Option<[i8; 3]>>> = vec![vec![None; n]; t_days];
    for day in event_triples.iter_mut() {
        for (i, slot) in day.iter_mut().enumerate() {
            let (_, rate_mult) = if is_low_block(industry_of(i, k), k) {
                LOW_BLOCK
            } else {
                HIGH_BLOCK
            };
            let p = (spec.event_rate * rate_mult).min(1.0);
            if event_rng.bernoulli(p) {
                let code = event_rng.below(27) as i8;
                *slot = Some([code / 9 - 1, (code / 3) % 3 - 1, code % 3 - 1]);
            }
        }
    }

    // Per-industry factors.
    let mut factors = Mat::zeros(k, t_days);
    for t in 0..t_days {
        for j in 0..k {
            let (vol_mult, _) = if is_low_block(j, k) { LOW_BLOCK } else { HIGH_BLOCK };
            factors.set(j, t, factor_rng.normal() * spec.industry_scale * vol_mult);
        }
    }

    // Returns r = factor + drift state + noise, with the state recursion
    // state(t) = decay * state(t-1) + A * sign(triple) on event days.
    let decay = libm::exp(-spec.event_decay);
    let mut state = Mat::zeros(n, t_days);
    let mut returns = Mat::zeros(n, t_days);
    let mut prev = vec![0.0; n];
    for t in 0..t_days {
        let noise_row: Vec<f64> = (0..n).map(|_| noise_rng.normal() * spec.noise).collect();
        for i in 0..n {
            let mut s = decay * prev[i];
            if let Some(triple) = event_triples[t][i] {
                let signed: i32 = triple.iter().map(|&a| a as i32).sum();
                let sign = if signed < 0 { -1.0 } else { 1.0 };
                s += spec.event_amplitude * sign;
            }
            state.set(i, t, s);
            prev[i] = s;
            let r = factors.at(industry_of(i, k), t) + s + noise_row[i];
            returns.set(i, t, r);
        }
    }

    // Prices and their trailing moving averages.
    let mut closes = Mat::zeros(n, t_days);
    for i in 0..n {
        let mut price = BASE_PRICE;
        for t in 0..t_days {
            price *= 1.0 + returns.at(i, t);
            closes.set(i, t, price);
        }
    }
    let ma = |i: usize, t: usize, w: usize| -> f64 {
        let lo = (t + 1).saturating_sub(w);
        let mut sum = 0.0;
        for s in lo..=t {
            sum += closes.at(i, s);
        }
        sum / (t + 1 - lo) as f64
    };

    // Panel CSV, date-major.
    let mut panel_csv = String::from(crate::panel::PANEL_HEADER);
    panel_csv.push('\n');
    for t in 0..t_days {
        for i in 0..n {
            let close = closes.at(i, t);
            let prev_close = if t == 0 { BASE_PRICE } else { closes.at(i, t - 1) };
            let spread = libm::fabs(micro_rng.normal()) * 0.002;
            let volume = 1.0e6 * libm::exp(0.3 * micro_rng.normal());
            let open = prev_close;
            let high = open.max(close) * (1.0 + spread);
            let low = open.min(close) * (1.0 - spread);
            panel_csv.push_str(&dates[t]);
            panel_csv.push(',');
            panel_csv.push_str(&stocks[i]);
            panel_csv.push_str(&fmt_row(&[
                open,
                high,
                low,
                close,
                volume,
                ma(i, t, 5),
                ma(i, t, 10),
                ma(i, t, 20),
                ma(i, t, 30),
            ]));
            panel_csv.push('\n');
        }
    }

    // Industry and holdings files.
    let mut industry_csv = String::from("stock_id,industry_id\n");
    for (i, stock) in stocks.iter().enumerate() {
        industry_csv.push_str(&format!("{stock},{}\n", industries[industry_of(i, k)]));
    }
    let mut holdings_csv = String::from("investor_type,stock_id,weight\n");
    for (i, stock) in stocks.iter().enumerate() {
        if is_low_block(industry_of(i, k), k) {
            holdings_csv.push_str(&format!("ins,{stock},{INS_WEIGHT}\n"));
        } else {
            holdings_csv.push_str(&format!("hot,{stock},{HOT_WEIGHT}\n"));
            holdings_csv.push_str(&format!("ret,{stock},{RET_WEIGHT}\n"));
        }
    }

    // Events with the realized event-day return.
    let mut events_csv = String::from(crate::game::EVENTS_HEADER);
    events_csv.push('\n');
    for t in 0..t_days {
        for i in 0..n {
            if let Some(triple) = event_triples[t][i] {
                events_csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    dates[t],
                    stocks[i],
                    triple[0],
                    triple[1],
                    triple[2],
                    returns.at(i, t)
                ));
            }
        }
    }

    // The exact conditional mean of the next-day return's cross-sectionally
    // varying part: factors and future events are mean-free across stocks,
    // leaving the decayed drift state.
    let mut mu = Mat::zeros(n, t_days - 1);
    for i in 0..n {
        for t in 0..t_days - 1 {
            mu.set(i, t, decay * state.at(i, t));
        }
    }
    let mut ics = Vec::new();
    for t in 0..t_days - 1 {
        let pred: Vec<f64> = (0..n).map(|i| mu.at(i, t)).collect();
        let actual: Vec<f64> = (0..n).map(|i| returns.at(i, t + 1)).collect();
        if let Some(ic) = daily_ic(&pred, &actual) {
            ics.push(ic);
        }
    }
    let mean_ic = if ics.is_empty() {
        None
    } else {
        Some(ics.iter().sum::<f64>() / ics.len() as f64)
    };

    Ok(SyntheticMarket {
        panel_csv,
        industry_csv,
        holdings_csv,
        events_csv,
        bundle: OracleBundle {
            spec: spec.clone(),
            stocks,
            dates,
            mu,
            mean_ic,
            days_used: ics.len(),
        },
    })
}
