//! Next-day movement labels.

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::features::ohlcv::OhlcvFrame;

/// Label each date by the next day's movement percent
/// p_t = adj_close_{t+1} / adj_close_t - 1:
/// 1 if p >= `up_thresh`, 0 if p <= `down_thresh`, otherwise `None`
/// (borderline samples are dropped). The final date has no next day and is
/// always `None`.
pub fn label_movement(
    frame: &OhlcvFrame,
    up_thresh: f64,
    down_thresh: f64,
) -> Result<Vec<(NaiveDate, Option<u8>)>> {
    if up_thresh <= down_thresh {
        return Err(Error::Config(format!(
            "label thresholds must satisfy up > down, got up={up_thresh} down={down_thresh}"
        )));
    }
    let n = frame.len();
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let label = if t + 1 < n {
            let p = frame.adj_close[t + 1] / frame.adj_close[t] - 1.0;
            if p >= up_thresh {
                Some(1)
            } else if p <= down_thresh {
                Some(0)
            } else {
                None
            }
        } else {
            None
        };
        out.push((frame.dates[t], label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_day_frame(move_pct: f64) -> OhlcvFrame {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let d1 = NaiveDate::from_ymd_opt(2020, 1, 2).unwrap();
        let c0 = 100.0;
        let c1 = c0 * (1.0 + move_pct);
        OhlcvFrame {
            ticker: "T".into(),
            dates: vec![d0, d1],
            open: vec![c0, c1],
            high: vec![c0, c1],
            low: vec![c0, c1],
            close: vec![c0, c1],
            adj_close: vec![c0, c1],
            volume: vec![1.0, 1.0],
        }
    }

    const UP: f64 = 0.0055;
    const DOWN: f64 = -0.005;

    #[test]
    fn up_move_labeled_one() {
        let labels = label_movement(&two_day_frame(0.006), UP, DOWN).unwrap();
        assert_eq!(labels[0].1, Some(1));
    }

    #[test]
    fn down_move_labeled_zero() {
        let labels = label_movement(&two_day_frame(-0.007), UP, DOWN).unwrap();
        assert_eq!(labels[0].1, Some(0));
    }

    #[test]
    fn borderline_move_dropped() {
        let labels = label_movement(&two_day_frame(0.001), UP, DOWN).unwrap();
        assert_eq!(labels[0].1, None);
    }

    #[test]
    fn last_date_never_labeled() {
        let labels = label_movement(&two_day_frame(0.1), UP, DOWN).unwrap();
        assert_eq!(labels[1].1, None);
    }

    #[test]
    fn dead_zone_is_exhaustive() {
        // nothing strictly between the thresholds gets a label
        for pct in [-0.0049, -0.001, 0.0, 0.002, 0.0054] {
            let labels = label_movement(&two_day_frame(pct), UP, DOWN).unwrap();
            assert_eq!(labels[0].1, None, "pct {pct} should be dropped");
        }
        // and just past the boundaries gets a label (>= / <=; a margin keeps
        // the reconstructed movement percent clear of f64 rounding)
        assert_eq!(label_movement(&two_day_frame(UP + 1e-9), UP, DOWN).unwrap()[0].1, Some(1));
        assert_eq!(label_movement(&two_day_frame(DOWN - 1e-9), UP, DOWN).unwrap()[0].1, Some(0));
    }
}
