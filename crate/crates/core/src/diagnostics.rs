//! Pre-analysis checks: the sufficient-follow-up interval criterion and
//! plateau summaries, optionally within a stratum.

use std::fmt;

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};

/// Interval criterion for sufficient follow-up: with `y_max` the largest
/// observed time and `last_event` the largest event time, the criterion
/// fails when `2 (y_max - last_event) >= y_max`. The associated p-value
/// requires an external estimator and is reported as unavailable.
#[derive(Debug, Clone, PartialEq)]
pub struct FollowupCheck {
    pub y_max: f64,
    pub last_event: f64,
    pub statistic: f64,
    pub reject: bool,
    pub stratum: Option<(String, f64)>,
    pub n: usize,
    pub events: usize,
}

impl fmt::Display for FollowupCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some((col, level)) = &self.stratum {
            write!(f, "stratum {col}={level}: ")?;
        }
        write!(
            f,
            "n={}, events={}, y_max={}, last_event={}, statistic 2(y_max-last_event)={}, {} (p-value unavailable)",
            self.n,
            self.events,
            self.y_max,
            self.last_event,
            self.statistic,
            if self.reject {
                "criterion FAILS: follow-up may be insufficient"
            } else {
                "criterion passes: follow-up looks sufficient"
            }
        )
    }
}

/// Run the interval check, optionally restricted to rows where `column`
/// equals `level`.
pub fn followup_interval_check(
    ds: &SurvivalDataset,
    stratum: Option<(&str, f64)>,
) -> Result<FollowupCheck> {
    let rows: Vec<usize> = match stratum {
        None => (0..ds.n()).collect(),
        Some((col, level)) => {
            let j = ds
                .column_index(col)
                .ok_or_else(|| Error::SpecColumnUnknown { name: col.into() })?;
            (0..ds.n())
                .filter(|&i| !ds.missing[(i, j)] && ds.data[(i, j)] == level)
                .collect()
        }
    };

    let mut y_max = f64::NEG_INFINITY;
    let mut last_event = f64::NEG_INFINITY;
    let mut events = 0;
    for &i in &rows {
        y_max = y_max.max(ds.y[i]);
        if ds.delta[i] {
            last_event = last_event.max(ds.y[i]);
            events += 1;
        }
    }
    if events == 0 {
        return Err(Error::NoEvents);
    }

    let statistic = 2.0 * (y_max - last_event);
    Ok(FollowupCheck {
        y_max,
        last_event,
        statistic,
        reject: statistic >= y_max,
        stratum: stratum.map(|(c, l)| (c.to_string(), l)),
        n: rows.len(),
        events,
    })
}
