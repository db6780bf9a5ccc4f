use rand::Rng;

use super::geom::{Area, Location};
use super::ids::NodeId;
use super::rng::RngStream;

/// Uniform i.i.d. placement of `count` nodes inside `area`. Node ids are `0..count`.
pub fn generate_topology(count: usize, area: Area, rng: &mut RngStream) -> Vec<(NodeId, Location)> {
    assert!(count >= 1, "topology needs at least one node");
    assert!(!area.is_degenerate(), "degenerate deployment area");
    (0..count)
        .map(|i| {
            let x = rng.random::<f64>() * area.width;
            let y = rng.random::<f64>() * area.height;
            (NodeId(i as u32), Location::new(x, y))
        })
        .collect()
}

/// Mean distance from each point to its nearest other point (brute force).
pub fn mean_nearest_neighbor(points: &[Location]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let total: f64 = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| p.distance(q))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    total / points.len() as f64
}
