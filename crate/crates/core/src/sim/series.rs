//! Uniformly sampled process curves.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::SimError;

/// Sampled channels over a shared, strictly increasing abscissa.
///
/// The abscissa is time for the dynamic labs and path length for the
/// beam-transport lab; it is always exported under the `t` column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeries", into = "RawSeries")]
pub struct TimeSeries {
    times: Vec<f64>,
    channels: IndexMap<String, Vec<f64>>,
    units: IndexMap<String, String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSeries {
    times: Vec<f64>,
    channels: IndexMap<String, Vec<f64>>,
    units: IndexMap<String, String>,
}

impl TryFrom<RawSeries> for TimeSeries {
    type Error = SimError;

    fn try_from(raw: RawSeries) -> Result<Self, Self::Error> {
        let mut series = TimeSeries::new(raw.times)?;
        for (label, values) in raw.channels {
            let unit = raw
                .units
                .get(&label)
                .ok_or_else(|| SimError::InvalidSeries(format!("channel `{label}` has no unit")))?
                .clone();
            series.push_channel(label, unit, values)?;
        }
        if series.units.len() != raw.units.len() {
            return Err(SimError::InvalidSeries(
                "unit entry without a channel".into(),
            ));
        }
        Ok(series)
    }
}

impl From<TimeSeries> for RawSeries {
    fn from(series: TimeSeries) -> Self {
        RawSeries {
            times: series.times,
            channels: series.channels,
            units: series.units,
        }
    }
}

impl TimeSeries {
    /// Creates an empty series over `times`, which must be finite and strictly increasing.
    pub fn new(times: Vec<f64>) -> Result<Self, SimError> {
        if times.is_empty() {
            return Err(SimError::InvalidSeries("no sample times".into()));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(SimError::InvalidSeries("non-finite sample time".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SimError::InvalidSeries(
                "sample times not strictly increasing".into(),
            ));
        }
        Ok(TimeSeries {
            times,
            channels: IndexMap::new(),
            units: IndexMap::new(),
        })
    }

    pub fn push_channel(
        &mut self,
        label: impl Into<String>,
        unit: impl Into<String>,
        values: Vec<f64>,
    ) -> Result<(), SimError> {
        let label = label.into();
        if values.len() != self.times.len() {
            return Err(SimError::InvalidSeries(format!(
                "channel `{label}` has {} values for {} sample times",
                values.len(),
                self.times.len()
            )));
        }
        if self.channels.contains_key(&label) {
            return Err(SimError::InvalidSeries(format!(
                "duplicate channel `{label}`"
            )));
        }
        self.units.insert(label.clone(), unit.into());
        self.channels.insert(label, values);
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn channel(&self, label: &str) -> Option<&[f64]> {
        self.channels.get(label).map(Vec::as_slice)
    }

    pub fn unit(&self, label: &str) -> Option<&str> {
        self.units.get(label).map(String::as_str)
    }

    /// Channel labels in insertion order.
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.channels.keys().map(String::as_str)
    }

    pub fn channels(&self) -> impl Iterator<Item = (&str, &str, &[f64])> {
        self.channels.iter().map(|(label, values)| {
            (
                label.as_str(),
                self.units[label].as_str(),
                values.as_slice(),
            )
        })
    }

    /// Keeps only `labels`, in the given order.
    pub fn select(&self, labels: &[&str]) -> Result<TimeSeries, SimError> {
        let mut out = TimeSeries::new(self.times.clone())?;
        for &label in labels {
            let values = self
                .channel(label)
                .ok_or_else(|| SimError::UnknownChannel(label.to_string()))?;
            out.push_channel(label, self.units[label].clone(), values.to_vec())?;
        }
        Ok(out)
    }

    /// Linear interpolation of `channel` at abscissa `t`; exact at sample points.
    pub fn sample_at(&self, channel: &str, t: f64) -> Result<f64, SimError> {
        let values = self
            .channel(channel)
            .ok_or_else(|| SimError::UnknownChannel(channel.to_string()))?;
        let first = self.times[0];
        let last = *self.times.last().unwrap();
        if !(first..=last).contains(&t) {
            return Err(SimError::OutOfRange { t, first, last });
        }
        // index of the first sample strictly after t
        let hi = self.times.partition_point(|&x| x <= t);
        if hi == 0 {
            return Ok(values[0]);
        }
        let lo = hi - 1;
        if self.times[lo] == t || hi == self.times.len() {
            return Ok(values[lo]);
        }
        let (t0, t1) = (self.times[lo], self.times[hi]);
        let w = (t - t0) / (t1 - t0);
        Ok(values[lo] + w * (values[hi] - values[lo]))
    }

    /// CSV export: header `t,<label>[unit],...`, `\n` line endings and
    /// shortest round-trip float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for (label, unit, _) in self.channels() {
            let _ = write!(out, ",{label}[{unit}]");
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&format_float(*t));
            for values in self.channels.values() {
                out.push(',');
                out.push_str(&format_float(values[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}

/// Free-function form of [`TimeSeries::sample_at`].
pub fn sample_at(series: &TimeSeries, channel: &str, t: f64) -> Result<f64, SimError> {
    series.sample_at(channel, t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> TimeSeries {
        let mut s = TimeSeries::new(vec![0.0, 1.0]).unwrap();
        s.push_channel("x", "V", vec![0.0, 10.0]).unwrap();
        s
    }

    #[test]
    fn interpolates_between_samples() {
        assert_eq!(ramp().sample_at("x", 0.25).unwrap(), 2.5);
    }

    #[test]
    fn exact_at_nodes() {
        let mut s = TimeSeries::new(vec![0.0, 0.1, 0.3, 0.7]).unwrap();
        s.push_channel("p", "Pa", vec![9.0, 7.0, 3.0, 1.0]).unwrap();
        for (t, v) in [(0.0, 9.0), (0.1, 7.0), (0.3, 3.0), (0.7, 1.0)] {
            assert_eq!(s.sample_at("p", t).unwrap(), v);
        }
    }

    #[test]
    fn rejects_unknown_channel_and_out_of_range() {
        let s = ramp();
        assert!(matches!(
            s.sample_at("y", 0.5),
            Err(SimError::UnknownChannel(_))
        ));
        assert!(matches!(
            s.sample_at("x", 1.5),
            Err(SimError::OutOfRange { .. })
        ));
        assert!(matches!(
            s.sample_at("x", -1e-9),
            Err(SimError::OutOfRange { .. })
        ));
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(TimeSeries::new(vec![0.0, 0.0]).is_err());
        assert!(TimeSeries::new(vec![]).is_err());
        let mut s = ramp();
        assert!(s.push_channel("x", "V", vec![1.0, 2.0]).is_err());
        assert!(s.push_channel("y", "V", vec![1.0]).is_err());
    }

    #[test]
    fn csv_layout() {
        let mut s = TimeSeries::new(vec![0.0, 0.5]).unwrap();
        s.push_channel("p_main", "Pa", vec![1000.0, 0.1]).unwrap();
        s.push_channel("p_fore", "Pa", vec![1e-7, 2.5]).unwrap();
        assert_eq!(
            s.to_csv(),
            "t,p_main[Pa],p_fore[Pa]\n0.0,1000.0,1e-7\n0.5,0.1,2.5\n"
        );
    }

    #[test]
    fn json_rejects_ragged_channels() {
        let bad = r#"{"times":[0.0,1.0],"channels":{"x":[1.0]},"units":{"x":"V"}}"#;
        assert!(serde_json::from_str::<TimeSeries>(bad).is_err());
        let good = serde_json::to_string(&ramp()).unwrap();
        assert_eq!(serde_json::from_str::<TimeSeries>(&good).unwrap(), ramp());
    }
}
