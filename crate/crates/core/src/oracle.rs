//! Geometric ground truth. Decides from positions and parameters alone which
//! partners of an infected device must, must not, or may appear in its
//! tracing report. Uses its own trajectory sampling and never touches
//! protocol state.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::sim::scenario::{Protocol, Scenario, Waypoint};

const DAY: i64 = 86_400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Band {
    Must,
    MustNot,
    Grey,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ContactBand {
    pub band: Band,
    /// Longest qualifying co-proximity run inside the retention window, in seconds.
    pub longest_run: i64,
    /// First to last co-proximate instant up to the infection, if any.
    pub span: Option<(i64, i64)>,
    pub reason: &'static str,
}

fn sample(wps: &[Waypoint], t: i64) -> (f64, f64) {
    let mut prev = &wps[0];
    if t <= prev.t {
        return (prev.x, prev.y);
    }
    for w in &wps[1..] {
        if t <= w.t {
            let f = (t - prev.t) as f64 / (w.t - prev.t) as f64;
            return (prev.x + (w.x - prev.x) * f, prev.y + (w.y - prev.y) * f);
        }
        prev = w;
    }
    (prev.x, prev.y)
}

/// Instants in `[0, until]` at which the two trajectories are within `d`.
pub fn co_proximate(a: &[Waypoint], b: &[Waypoint], d: f64, until: i64) -> Vec<i64> {
    (0..=until)
        .filter(|&t| {
            let (p, q) = (sample(a, t), sample(b, t));
            ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt() <= d
        })
        .collect()
}

/// Maximal runs of consecutive instants, as inclusive `(start, end)` pairs.
pub fn runs(instants: &[i64]) -> Vec<(i64, i64)> {
    let mut out: Vec<(i64, i64)> = Vec::new();
    for &t in instants {
        match out.last_mut() {
            Some((_, end)) if *end + 1 == t => *end = t,
            _ => out.push((t, t)),
        }
    }
    out
}

fn split_at_midnight(runs: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    for (mut s, e) in runs {
        while s.div_euclid(DAY) < e.div_euclid(DAY) {
            let next = (s.div_euclid(DAY) + 1) * DAY;
            out.push((s, next - 1));
            s = next;
        }
        out.push((s, e));
    }
    out
}

/// Bands for every partner of `infected`, who discloses at `t_inf`.
pub fn classify(scenario: &Scenario, infected: &str, t_inf: i64) -> BTreeMap<String, ContactBand> {
    let p = &scenario.params;
    let t_min = p.t_min;
    let delta = p.beacon_period();
    let window_start = ((t_inf.div_euclid(DAY) - i64::from(p.retention_days)) * DAY).max(0);
    let me = scenario
        .devices
        .iter()
        .find(|d| d.name == infected)
        .expect("infected device exists");
    let my_turn = scenario
        .infections
        .iter()
        .position(|i| i.device == infected)
        .expect("infection listed");
    let earlier: BTreeSet<&str> = scenario
        .infections
        .iter()
        .enumerate()
        .filter(|(k, i)| i.t < t_inf || (i.t == t_inf && *k < my_turn))
        .map(|(_, i)| i.device.as_str())
        .collect();

    let mut bands = BTreeMap::new();
    for other in scenario.devices.iter().filter(|d| d.name != infected) {
        let instants = co_proximate(&me.waypoints, &other.waypoints, p.d, t_inf);
        let span = instants.first().map(|&f| (f, *instants.last().expect("non-empty")));
        let in_window: Vec<i64> = instants.iter().copied().filter(|&t| t >= window_start).collect();
        let mut candidate = runs(&in_window);
        if p.protocol == Protocol::Cs {
            candidate = split_at_midnight(candidate);
        }
        let longest_run = candidate.iter().map(|(s, e)| e - s).max().unwrap_or(0);

        let must = longest_run >= t_min + 2 * delta;
        let must_not = match p.protocol {
            Protocol::P2p => span.is_none_or(|(f, l)| l - f < t_min),
            Protocol::Cs => {
                let epochs: BTreeSet<i64> = instants
                    .iter()
                    .map(|t| (t + other.clock_skew).div_euclid(t_min))
                    .collect();
                epochs.len() <= 1
            }
        };
        let skewed = p.protocol == Protocol::Cs
            && p.replay_protection
            && (me.clock_skew - other.clock_skew).abs() > p.epsilon;

        let (band, reason) = if earlier.contains(other.name.as_str()) {
            (Band::Grey, "partner already reported as infected")
        } else if must && p.p_drop > 0.0 {
            (Band::Grey, "lossy radio voids the completeness guarantee")
        } else if must && skewed {
            (Band::Grey, "clock skew beyond the freshness tolerance")
        } else if must {
            (Band::Must, "sustained co-proximity")
        } else if must_not {
            (Band::MustNot, match p.protocol {
                Protocol::P2p => "co-proximity spans less than the minimum contact",
                Protocol::Cs => "all co-proximity inside one epoch",
            })
        } else {
            (Band::Grey, "imprecise region")
        };
        bands.insert(
            other.name.clone(),
            ContactBand {
                band,
                longest_run,
                span,
                reason,
            },
        );
    }
    bands
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub infected: String,
    pub pass: bool,
    /// MUST partners missing from the report.
    pub completeness_violations: Vec<String>,
    /// MUST_NOT partners present in the report.
    pub soundness_violations: Vec<String>,
}

pub fn check(contacts: &BTreeSet<String>, bands: &BTreeMap<String, ContactBand>, infected: &str) -> Verdict {
    let completeness_violations: Vec<String> = bands
        .iter()
        .filter(|(name, b)| b.band == Band::Must && !contacts.contains(*name))
        .map(|(name, _)| name.clone())
        .collect();
    let soundness_violations: Vec<String> = contacts
        .iter()
        .filter(|name| bands.get(*name).is_none_or(|b| b.band == Band::MustNot))
        .cloned()
        .collect();
    Verdict {
        infected: infected.to_string(),
        pass: completeness_violations.is_empty() && soundness_violations.is_empty(),
        completeness_violations,
        soundness_violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scenario::{DeviceSpec, Infection, SimParams};
    use proptest::prelude::*;

    fn wp(t: i64, x: f64) -> Waypoint {
        Waypoint { t, x, y: 0.0 }
    }

    fn scenario(protocol: Protocol, a: Vec<Waypoint>, b: Vec<Waypoint>, t_inf: i64) -> Scenario {
        Scenario {
            params: SimParams {
                protocol,
                ..SimParams::default()
            },
            duration: t_inf,
            seed: 0,
            devices: vec![
                DeviceSpec { name: "a".into(), clock_skew: 0, waypoints: a },
                DeviceSpec { name: "b".into(), clock_skew: 0, waypoints: b },
            ],
            adversaries: vec![],
            infections: vec![Infection { device: "a".into(), t: t_inf }],
            expect_false_positive: false,
        }
    }

    fn band_of(s: &Scenario) -> Band {
        classify(s, "a", s.duration)["b"].band
    }

    #[test]
    fn sustained_contact_is_must() {
        for proto in [Protocol::P2p, Protocol::Cs] {
            let s = scenario(proto, vec![wp(0, 0.0)], vec![wp(0, 1.0)], 720);
            assert_eq!(band_of(&s), Band::Must);
            let s = scenario(proto, vec![wp(0, 0.0)], vec![wp(0, 1.0)], 719);
            assert_ne!(band_of(&s), Band::Must);
        }
    }

    #[test]
    fn never_close_is_must_not() {
        for proto in [Protocol::P2p, Protocol::Cs] {
            let s = scenario(proto, vec![wp(0, 0.0)], vec![wp(0, 100.0)], 5000);
            assert_eq!(band_of(&s), Band::MustNot);
        }
    }

    #[test]
    fn two_brief_meetings_t_apart_are_grey_for_p2p() {
        // b passes a at t=100 and again at t=700.
        let b = vec![wp(0, 50.0), wp(100, 0.5), wp(150, 50.0), wp(650, 50.0), wp(700, 0.5), wp(750, 50.0)];
        let s = scenario(Protocol::P2p, vec![wp(0, 0.0)], b, 2000);
        assert_eq!(band_of(&s), Band::Grey);
    }

    #[test]
    fn cs_single_epoch_is_must_not() {
        let b = vec![wp(0, 50.0), wp(599, 50.0), wp(600, 1.0), wp(1199, 1.0), wp(1200, 50.0)];
        let s = scenario(Protocol::Cs, vec![wp(0, 0.0)], b.clone(), 2000);
        assert_eq!(band_of(&s), Band::MustNot);
        // Shifting b's clock by a second moves the last instant into the next epoch.
        let mut s = scenario(Protocol::Cs, vec![wp(0, 0.0)], b, 2000);
        s.devices[1].clock_skew = 1;
        assert_eq!(band_of(&s), Band::Grey);
    }

    #[test]
    fn retention_window_excludes_old_contact() {
        let b = vec![wp(0, 1.0), wp(1000, 1.0), wp(1001, 90.0)];
        let mut s = scenario(Protocol::P2p, vec![wp(0, 0.0)], b, 16 * DAY);
        s.params.retention_days = 14;
        assert_eq!(band_of(&s), Band::Grey);
    }

    #[test]
    fn downgrades() {
        let mut s = scenario(Protocol::Cs, vec![wp(0, 0.0)], vec![wp(0, 1.0)], 2000);
        s.devices[1].clock_skew = 6;
        assert_eq!(band_of(&s), Band::Grey);
        s.devices[1].clock_skew = 5;
        assert_eq!(band_of(&s), Band::Must);
        s.params.p_drop = 0.1;
        assert_eq!(band_of(&s), Band::Grey);
    }

    #[test]
    fn check_verdicts() {
        let s = scenario(Protocol::P2p, vec![wp(0, 0.0)], vec![wp(0, 1.0)], 720);
        let bands = classify(&s, "a", 720);
        let set = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<BTreeSet<_>>();
        assert!(check(&set(&["b"]), &bands, "a").pass);
        assert_eq!(check(&set(&[]), &bands, "a").completeness_violations, vec!["b"]);
        let far = scenario(Protocol::P2p, vec![wp(0, 0.0)], vec![wp(0, 10.0)], 720);
        let v = check(&set(&["b"]), &classify(&far, "a", 720), "a");
        assert_eq!(v.soundness_violations, vec!["b"]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn co_proximity_is_symmetric(xs in proptest::collection::vec(-5.0f64..5.0, 2..6), ys in proptest::collection::vec(-5.0f64..5.0, 2..6)) {
            let a: Vec<Waypoint> = xs.iter().enumerate().map(|(i, x)| wp(i as i64 * 300, *x)).collect();
            let b: Vec<Waypoint> = ys.iter().enumerate().map(|(i, x)| wp(i as i64 * 300, *x)).collect();
            prop_assert_eq!(co_proximate(&a, &b, 2.0, 1500), co_proximate(&b, &a, 2.0, 1500));
        }

        #[test]
        fn longer_contact_never_leaves_must(extra in 0i64..2000, start in 0i64..500) {
            let b = |until: i64| vec![wp(0, 50.0), wp(start, 50.0), wp(start + 1, 1.0), wp(until, 1.0), wp(until + 1, 50.0)];
            let base = scenario(Protocol::P2p, vec![wp(0, 0.0)], b(start + 721), 5000);
            prop_assert_eq!(band_of(&base), Band::Must);
            let longer = scenario(Protocol::P2p, vec![wp(0, 0.0)], b(start + 721 + extra), 5000);
            prop_assert_eq!(band_of(&longer), Band::Must);
        }
    }
}
