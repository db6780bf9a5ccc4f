use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

/// Absolute tolerance used for every clock comparison.
pub const TIME_EPSILON: f64 = 1e-12;

/// Simulation clock value in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn from_secs(seconds: f64) -> Self {
        debug_assert!(seconds.is_finite(), "non-finite time {seconds}");
        SimTime(seconds)
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    /// True when `self` is earlier than `other` by more than the clock epsilon.
    pub fn before(self, other: SimTime) -> bool {
        self.0 < other.0 - TIME_EPSILON
    }

    pub fn approx_eq(self, other: SimTime) -> bool {
        (self.0 - other.0).abs() <= TIME_EPSILON
    }

    pub fn max(self, other: SimTime) -> SimTime {
        if other.0 > self.0 {
            other
        } else {
            self
        }
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add<f64> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: f64) -> SimTime {
        SimTime(self.0 + rhs)
    }
}

impl Sub for SimTime {
    type Output = f64;
    fn sub(self, rhs: SimTime) -> f64 {
        self.0 - rhs.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}", self.0)
    }
}
