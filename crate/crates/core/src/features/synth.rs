//! Synthetic desk-scale OHLCV generation with drift regimes.
//!
//! Each stock follows a geometric random walk whose drift switches between
//! an up regime and a down regime in seeded blocks. Within a regime the
//! daily movement is drift + noise, so next-day labels mostly track the
//! regime and windows carry a learnable signal.

use chrono::{Datelike, NaiveDate, Weekday};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::ohlcv::OhlcvFrame;
use crate::rng::{stream, streams};

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeParams {
    /// Mean daily log-return in the up regime.
    pub drift_up: f64,
    /// Mean daily log-return in the down regime (normally negative).
    pub drift_down: f64,
    /// AR(1) coefficient on the previous day's return in the up regime;
    /// positive values give momentum, negative mean reversion. Regimes with
    /// zero drift but opposite couplings make the class a global property
    /// of the window rather than of its most recent days.
    pub coupling_up: f64,
    /// AR(1) coefficient in the down regime.
    pub coupling_down: f64,
    /// Lag (in trading days) at which the coupling echoes past returns;
    /// 1 is classic AR(1), larger lags bury the predictive return deeper
    /// in the window.
    pub coupling_lag: usize,
    /// Std-dev of the daily log-return noise.
    pub noise: f64,
    /// Regime block length is drawn uniformly from `regime_min..=regime_max`.
    pub regime_min: usize,
    pub regime_max: usize,
    pub base_price: f64,
    /// Std-dev of open/high/low jitter around the close path.
    pub intraday_noise: f64,
    pub volume_base: f64,
}

impl Default for RegimeParams {
    fn default() -> Self {
        RegimeParams {
            drift_up: 0.012,
            drift_down: -0.012,
            coupling_up: 0.0,
            coupling_down: 0.0,
            coupling_lag: 1,
            noise: 0.004,
            regime_min: 40,
            regime_max: 90,
            base_price: 100.0,
            intraday_noise: 0.002,
            volume_base: 1.0e6,
        }
    }
}

/// Standard normal via Box-Muller on the stream's uniforms; kept local so
/// synthetic data stays bit-identical across platforms and rand upgrades.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn next_weekday(mut d: NaiveDate) -> NaiveDate {
    loop {
        d = d.succ_opt().expect("date overflow");
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            return d;
        }
    }
}

/// Generate `n_stocks` frames of `n_days` trading days each, deterministic
/// per `(seed, stock index)`.
pub fn synth_generate(
    seed: u64,
    n_stocks: usize,
    n_days: usize,
    params: &RegimeParams,
) -> Result<Vec<OhlcvFrame>> {
    if n_days <= 100 {
        return Err(Error::Config(format!("synth needs n_days > 100, got {n_days}")));
    }
    if n_stocks == 0 {
        return Err(Error::Config("synth needs at least one stock".into()));
    }
    if params.regime_min == 0 || params.regime_max < params.regime_min {
        return Err(Error::Config("regime lengths must satisfy 0 < min <= max".into()));
    }
    if params.coupling_up.abs() >= 1.0 || params.coupling_down.abs() >= 1.0 {
        return Err(Error::Config("AR couplings must stay in (-1, 1)".into()));
    }
    if params.coupling_lag == 0 {
        return Err(Error::Config("coupling lag must be >= 1".into()));
    }
    let start = NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date");
    let mut frames = Vec::with_capacity(n_stocks);
    for s in 0..n_stocks {
        let mut rng = stream(seed, &[streams::SYNTH, s as u64]);
        let ticker = format!("S{s:02}");

        // Regime schedule: alternate up/down blocks of seeded length.
        let mut regimes: Vec<(f64, f64)> = Vec::with_capacity(n_days); // (drift, coupling)
        let mut up = rng.gen_bool(0.5);
        while regimes.len() < n_days {
            let len = rng.gen_range(params.regime_min..=params.regime_max);
            let r = if up {
                (params.drift_up, params.coupling_up)
            } else {
                (params.drift_down, params.coupling_down)
            };
            for _ in 0..len {
                regimes.push(r);
                if regimes.len() == n_days {
                    break;
                }
            }
            up = !up;
        }

        let mut dates = Vec::with_capacity(n_days);
        let mut date = start;
        if matches!(date.weekday(), Weekday::Sat | Weekday::Sun) {
            date = next_weekday(date);
        }
        let mut close = Vec::with_capacity(n_days);
        let mut open = Vec::with_capacity(n_days);
        let mut high = Vec::with_capacity(n_days);
        let mut low = Vec::with_capacity(n_days);
        let mut volume = Vec::with_capacity(n_days);

        let mut prev_close = params.base_price;
        let mut returns: Vec<f64> = Vec::with_capacity(n_days);
        for t in 0..n_days {
            dates.push(date);
            date = next_weekday(date);

            let (drift, coupling) = regimes[t];
            let lagged = if t >= params.coupling_lag { returns[t - params.coupling_lag] } else { 0.0 };
            let r = drift + coupling * lagged + params.noise * normal(&mut rng);
            let c = if t == 0 { params.base_price } else { prev_close * r.exp() };
            // day 0 has no realized return into it
            returns.push(if t == 0 { 0.0 } else { r });
            let o = if params.intraday_noise > 0.0 {
                prev_close * (params.intraday_noise * normal(&mut rng)).exp()
            } else {
                prev_close
            };
            let span_hi = if params.intraday_noise > 0.0 {
                (params.intraday_noise * normal(&mut rng)).abs()
            } else {
                0.0
            };
            let span_lo = if params.intraday_noise > 0.0 {
                (params.intraday_noise * normal(&mut rng)).abs()
            } else {
                0.0
            };
            let h = o.max(c) * span_hi.exp();
            let l = o.min(c) * (-span_lo).exp();
            let v = params.volume_base * (0.1 * normal(&mut rng)).exp();

            open.push(o);
            high.push(h);
            low.push(l);
            close.push(c);
            volume.push(v);
            prev_close = c;
        }

        let frame = OhlcvFrame {
            ticker,
            dates,
            adj_close: close.clone(),
            open,
            high,
            low,
            close,
            volume,
        };
        frame.validate()?;
        frames.push(frame);
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::labels::label_movement;

    #[test]
    fn same_seed_is_bit_identical() {
        let p = RegimeParams::default();
        let a = synth_generate(11, 2, 150, &p).unwrap();
        let b = synth_generate(11, 2, 150, &p).unwrap();
        for (fa, fb) in a.iter().zip(&b) {
            assert_eq!(fa.dates, fb.dates);
            assert!(fa.close.iter().zip(&fb.close).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert!(fa.open.iter().zip(&fb.open).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn positive_drift_regime_produces_mostly_up_labels() {
        let p = RegimeParams {
            drift_up: 0.01,
            drift_down: 0.01, // single permanent up regime
            noise: 0.002,
            ..RegimeParams::default()
        };
        let frames = synth_generate(5, 1, 200, &p).unwrap();
        let labels = label_movement(&frames[0], 0.0055, -0.005).unwrap();
        let ups = labels.iter().filter(|(_, l)| *l == Some(1)).count();
        let downs = labels.iter().filter(|(_, l)| *l == Some(0)).count();
        assert!(ups > 10 * downs.max(1), "ups={ups} downs={downs}");
    }

    #[test]
    fn zero_drift_zero_noise_degenerates_to_constant_price() {
        let p = RegimeParams {
            drift_up: 0.0,
            drift_down: 0.0,
            noise: 0.0,
            intraday_noise: 0.0,
            ..RegimeParams::default()
        };
        let frames = synth_generate(1, 1, 120, &p).unwrap();
        assert!(frames[0].close.iter().all(|&c| c == 100.0));
        // every movement percent is 0: all labels dropped by the thresholds
        let labels = label_movement(&frames[0], 0.0055, -0.005).unwrap();
        assert!(labels.iter().all(|(_, l)| l.is_none()));
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(
            synth_generate(1, 1, 100, &RegimeParams::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn dates_are_weekdays_only() {
        let frames = synth_generate(3, 1, 150, &RegimeParams::default()).unwrap();
        for d in &frames[0].dates {
            assert!(!matches!(d.weekday(), Weekday::Sat | Weekday::Sun));
        }
    }
}
