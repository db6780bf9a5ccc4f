//! Range-free localization from anchor beacons, Monte-Carlo error estimation and
//! error injection.

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::{rng, Area, Location, NodeId};
use crate::stats;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LocalizationError {
    #[error("no anchors heard")]
    NoAnchors,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorBeacon {
    pub anchor: NodeId,
    pub location: Location,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "kind")]
pub enum EstimateMethod {
    Truth,
    Centroid,
    AreaRefined,
    InjectedError { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocationEstimate {
    pub position: Location,
    pub heard_anchors: Vec<NodeId>,
    pub method: EstimateMethod,
}

pub fn centroid_estimate(beacons: &[AnchorBeacon]) -> Result<LocationEstimate, LocalizationError> {
    if beacons.is_empty() {
        return Err(LocalizationError::NoAnchors);
    }
    let n = beacons.len() as f64;
    let x = beacons.iter().map(|b| b.location.x).sum::<f64>() / n;
    let y = beacons.iter().map(|b| b.location.y).sum::<f64>() / n;
    Ok(LocationEstimate {
        position: Location::new(x, y),
        heard_anchors: beacons.iter().map(|b| b.anchor).collect(),
        method: EstimateMethod::Centroid,
    })
}

/// Monotone signal-strength proxy from a node to each anchor it heard; smaller means
/// closer. Only comparisons between proxies are ever used.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityReport {
    pub proximity: Vec<(NodeId, f64)>,
}

impl ProximityReport {
    fn get(&self, anchor: NodeId) -> Option<f64> {
        self.proximity.iter().find(|(a, _)| *a == anchor).map(|(_, p)| *p)
    }
}

fn in_triangle(p: &Location, a: &Location, b: &Location, c: &Location) -> bool {
    let cross = |o: &Location, u: &Location, v: &Location| (u.x - o.x) * (v.y - o.y) - (u.y - o.y) * (v.x - o.x);
    let d1 = cross(a, b, p);
    let d2 = cross(b, c, p);
    let d3 = cross(c, a, p);
    let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(neg && pos)
}

/// Point-in-triangle test for one anchor triple: outside if some neighbor is closer to
/// all three anchors or farther from all three.
fn judged_inside(own: &ProximityReport, neighbors: &[ProximityReport], tri: [NodeId; 3]) -> bool {
    let mine: Vec<f64> = tri.iter().map(|a| own.get(*a).expect("own report covers heard anchors")).collect();
    for n in neighbors {
        let Some(theirs) = tri.iter().map(|a| n.get(*a)).collect::<Option<Vec<f64>>>() else {
            continue;
        };
        let closer = (0..3).all(|i| theirs[i] < mine[i]);
        let farther = (0..3).all(|i| theirs[i] > mine[i]);
        if closer || farther {
            return false;
        }
    }
    true
}

/// Area-test refinement over a grid of candidate cells. Falls back to the centroid with
/// fewer than three anchors or when no cell agrees with every triangle decision.
pub fn area_refine(
    beacons: &[AnchorBeacon],
    own: &ProximityReport,
    neighbors: &[ProximityReport],
    range: f64,
    area: &Area,
    grid: f64,
) -> Result<LocationEstimate, LocalizationError> {
    let fallback = centroid_estimate(beacons)?;
    if beacons.len() < 3 {
        return Ok(fallback);
    }
    let mut triangles = Vec::new();
    for i in 0..beacons.len() {
        for j in i + 1..beacons.len() {
            for k in j + 1..beacons.len() {
                let tri = [beacons[i], beacons[j], beacons[k]];
                let inside = judged_inside(own, neighbors, [tri[0].anchor, tri[1].anchor, tri[2].anchor]);
                triangles.push((tri, inside));
            }
        }
    }
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    let nx = (area.width / grid).ceil() as usize;
    let ny = (area.height / grid).ceil() as usize;
    for ix in 0..nx {
        for iy in 0..ny {
            let p = Location::new((ix as f64 + 0.5) * grid, (iy as f64 + 0.5) * grid);
            if !area.contains(&p) || beacons.iter().any(|b| b.location.distance(&p) > range) {
                continue;
            }
            let consistent = triangles
                .iter()
                .all(|(t, inside)| in_triangle(&p, &t[0].location, &t[1].location, &t[2].location) == *inside);
            if consistent {
                sx += p.x;
                sy += p.y;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Ok(fallback);
    }
    Ok(LocationEstimate {
        position: Location::new(sx / n as f64, sy / n as f64),
        heard_anchors: fallback.heard_anchors,
        method: EstimateMethod::AreaRefined,
    })
}

/// Truth plus isotropic Gaussian noise, clamped to the deployment area.
pub fn inject_error<R: Rng + ?Sized>(truth: Location, sigma: f64, area: &Area, rng: &mut R) -> Location {
    if sigma <= 0.0 {
        return truth;
    }
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    area.clamp(Location::new(truth.x + n.sample(rng), truth.y + n.sample(rng)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorBound {
    pub mean_error: f64,
    pub mean_std_error: f64,
    pub p95_error: f64,
    /// Bootstrap-free approximation: standard error of the 95th percentile from the
    /// binomial order-statistic interval width.
    pub p95_std_error: f64,
    /// Trials with at least one anchor heard.
    pub localized_trials: usize,
    pub trials: usize,
    /// Expected anchors heard is below one.
    pub sparse: bool,
}

/// Monte-Carlo centroid error for a node at the center of a field with Poisson anchors
/// of `density` per m². Trials that hear no anchor are excluded from the statistics.
pub fn error_bound_estimate(density: f64, range: f64, trials: usize, seed: u64) -> ErrorBound {
    let side = 4.0 * range;
    let node = Location::new(side / 2.0, side / 2.0);
    let expected = density * side * side;
    let mut r = rng::stream(seed, "localization-mc", 0);
    let mut errors = Vec::with_capacity(trials);
    for _ in 0..trials {
        let count = if expected > 0.0 { Poisson::new(expected).unwrap().sample(&mut r) as usize } else { 0 };
        let beacons: Vec<AnchorBeacon> = (0..count)
            .map(|i| AnchorBeacon {
                anchor: NodeId(i as u32),
                location: Location::new(r.random::<f64>() * side, r.random::<f64>() * side),
            })
            .filter(|b| b.location.distance(&node) <= range)
            .collect();
        if let Ok(est) = centroid_estimate(&beacons) {
            errors.push(est.position.distance(&node));
        }
    }
    let n = errors.len();
    let p95 = stats::percentile(&errors, 0.95).unwrap_or(f64::NAN);
    let p95_se = if n > 1 {
        let half = 1.96 * (0.95 * 0.05 / n as f64).sqrt();
        let lo = stats::percentile(&errors, (0.95 - half).max(0.0)).unwrap();
        let hi = stats::percentile(&errors, (0.95 + half).min(1.0)).unwrap();
        (hi - lo) / (2.0 * 1.96)
    } else {
        0.0
    };
    ErrorBound {
        mean_error: stats::mean(&errors).unwrap_or(f64::NAN),
        mean_std_error: stats::std_error(&errors),
        p95_error: p95,
        p95_std_error: p95_se,
        localized_trials: n,
        trials,
        sparse: density * std::f64::consts::PI * range * range < 1.0,
    }
}
