//! State-free forwarding: the relay is chosen at transmission time by receiver-side
//! contention inside a sector pointing at the destination.

use crate::kernel::Location;

/// True when `candidate` lies within `half_angle_deg` of the axis `origin → target`.
pub fn in_sector(origin: &Location, target: &Location, candidate: &Location, half_angle_deg: f64) -> bool {
    let (ax, ay) = (target.x - origin.x, target.y - origin.y);
    let (cx, cy) = (candidate.x - origin.x, candidate.y - origin.y);
    let na = (ax * ax + ay * ay).sqrt();
    let nc = (cx * cx + cy * cy).sqrt();
    if na == 0.0 || nc == 0.0 {
        return false;
    }
    let cos = ((ax * cx + ay * cy) / (na * nc)).clamp(-1.0, 1.0);
    cos >= half_angle_deg.to_radians().cos() - 1e-12
}

/// Progress a responder at `me` would make, if it qualifies to answer a probe.
pub fn response_progress(origin: &Location, target: &Location, me: &Location, half_angle_deg: f64) -> Option<f64> {
    let progress = origin.distance(target) - me.distance(target);
    (progress > 0.0 && in_sector(origin, target, me, half_angle_deg)).then_some(progress)
}

/// Response backoff: larger progress answers sooner.
pub fn response_delay(progress: f64, range: f64, cts_window: f64) -> f64 {
    (cts_window * (1.0 - progress / range)).clamp(0.0, cts_window)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sector_membership() {
        let o = Location::new(0.0, 0.0);
        let t = Location::new(100.0, 0.0);
        assert!(in_sector(&o, &t, &Location::new(10.0, 0.0), 60.0));
        assert!(in_sector(&o, &t, &Location::new(10.0, 17.0), 60.0));
        assert!(!in_sector(&o, &t, &Location::new(10.0, 18.0), 60.0));
        assert!(!in_sector(&o, &t, &Location::new(-1.0, 0.0), 90.0));
        assert!(in_sector(&o, &t, &Location::new(0.0, 5.0), 90.0));
    }

    #[test]
    fn larger_progress_answers_first() {
        let d30 = response_delay(30.0, 40.0, 0.01);
        let d10 = response_delay(10.0, 40.0, 0.01);
        assert!(d30 < d10);
        assert!((d30 - 0.0025).abs() < 1e-12);
        assert_eq!(response_delay(50.0, 40.0, 0.01), 0.0);
    }

    #[test]
    fn backward_nodes_never_respond() {
        let o = Location::new(50.0, 50.0);
        let t = Location::new(100.0, 50.0);
        assert!(response_progress(&o, &t, &Location::new(40.0, 50.0), 90.0).is_none());
        assert_eq!(response_progress(&o, &t, &Location::new(70.0, 50.0), 60.0), Some(20.0));
    }
}
