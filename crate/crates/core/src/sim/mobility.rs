use super::scenario::Waypoint;

/// Position at `t`, interpolated linearly between waypoints and clamped to
/// the first and last one outside their range.
pub fn position_at(waypoints: &[Waypoint], t: i64) -> (f64, f64) {
    let first = waypoints[0];
    if t <= first.t {
        return (first.x, first.y);
    }
    let next = waypoints.partition_point(|w| w.t <= t);
    if next == waypoints.len() {
        let last = waypoints[waypoints.len() - 1];
        return (last.x, last.y);
    }
    let (a, b) = (waypoints[next - 1], waypoints[next]);
    let f = (t - a.t) as f64 / (b.t - a.t) as f64;
    (a.x + f * (b.x - a.x), a.y + f * (b.y - a.y))
}

pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}
