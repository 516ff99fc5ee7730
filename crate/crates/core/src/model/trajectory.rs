use std::io::{self, Write};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("trajectory must start at time 0")]
    NotAtOrigin,
    #[error("times must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("last time {last} exceeds the horizon {horizon}")]
    BeyondHorizon { last: f64, horizon: f64 },
    #[error("row {row} has {found} values, expected {expected}")]
    RowWidth { row: usize, found: usize, expected: usize },
    #[error("non-finite value at row {0}")]
    NonFinite(usize),
    #[error("empty trajectory")]
    Empty,
}

/// Piecewise-constant path: `values[i]` holds on `[times[i], times[i+1])`,
/// the last row is held up to `horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    names: Vec<String>,
    times: Vec<f64>,
    /// Row-major, `times.len() * names.len()` entries.
    values: Vec<f64>,
    horizon: f64,
}

impl Trajectory {
    pub fn new(names: Vec<String>, times: Vec<f64>, rows: Vec<Vec<f64>>, horizon: f64) -> Result<Self, TrajectoryError> {
        let width = names.len();
        let mut values = Vec::with_capacity(rows.len() * width);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != width {
                return Err(TrajectoryError::RowWidth { row: i, found: r.len(), expected: width });
            }
            values.extend_from_slice(r);
        }
        if times.len() != rows.len() {
            return Err(TrajectoryError::RowWidth { row: times.len().min(rows.len()), found: rows.len(), expected: times.len() });
        }
        Self::from_flat(names, times, values, horizon)
    }

    pub(crate) fn from_flat(names: Vec<String>, times: Vec<f64>, values: Vec<f64>, horizon: f64) -> Result<Self, TrajectoryError> {
        let Some(&first) = times.first() else {
            return Err(TrajectoryError::Empty);
        };
        if first != 0.0 {
            return Err(TrajectoryError::NotAtOrigin);
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(TrajectoryError::NotIncreasing(i + 1));
        }
        let last = *times.last().unwrap();
        if last > horizon {
            return Err(TrajectoryError::BeyondHorizon { last, horizon });
        }
        let width = names.len();
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(TrajectoryError::NonFinite(p / width.max(1)));
        }
        Ok(Trajectory { names, times, values, horizon })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    /// Start and (exclusive) end time of segment `i`.
    pub fn segment(&self, i: usize) -> (f64, f64) {
        let end = self.times.get(i + 1).copied().unwrap_or(self.horizon);
        (self.times[i], end)
    }

    /// State at time `t` (right-continuous lookup).
    pub fn state_at(&self, t: f64) -> &[f64] {
        let i = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        self.row(i)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some((0..self.len()).map(|i| self.row(i)[j]).collect())
    }

    /// CSV with header `t,<names...>`, one row per segment start.
    pub fn write_csv(&self, mut out: impl Write) -> io::Result<()> {
        write!(out, "t")?;
        for n in &self.names {
            write!(out, ",{n}")?;
        }
        writeln!(out)?;
        for i in 0..self.len() {
            write!(out, "{}", self.times[i])?;
            for v in self.row(i) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_shape() {
        let n = vec!["X".to_string()];
        assert_eq!(Trajectory::new(n.clone(), vec![0.5], vec![vec![1.0]], 1.0), Err(TrajectoryError::NotAtOrigin));
        assert_eq!(
            Trajectory::new(n.clone(), vec![0.0, 1.0, 1.0], vec![vec![1.0]; 3], 2.0),
            Err(TrajectoryError::NotIncreasing(2))
        );
        assert!(matches!(
            Trajectory::new(n.clone(), vec![0.0, 3.0], vec![vec![1.0]; 2], 2.0),
            Err(TrajectoryError::BeyondHorizon { .. })
        ));
        assert!(Trajectory::new(n, vec![0.0, 2.0], vec![vec![1.0]; 2], 2.0).is_ok());
    }

    #[test]
    fn lookup_and_csv() {
        let t = Trajectory::new(
            vec!["X".into(), "Y".into()],
            vec![0.0, 0.5],
            vec![vec![0.0, 1.0], vec![4.0, 2.0]],
            2.0,
        )
        .unwrap();
        assert_eq!(t.state_at(0.49), &[0.0, 1.0]);
        assert_eq!(t.state_at(0.5), &[4.0, 2.0]);
        assert_eq!(t.segment(1), (0.5, 2.0));
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,X,Y\n0,0,1\n0.5,4,2\n");
    }
}
