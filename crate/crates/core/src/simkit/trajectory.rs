use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::geometry::{Pose, Vec3};

/// Allowed circling radius, metres.
pub const RADIUS_RANGE: (f64, f64) = (0.5, 10.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Walk sideways past the target, perpendicular to the viewing direction.
    Parallel,
    /// Walk straight toward the target along the viewing direction.
    AwayClose,
    /// Walk around the target while facing it.
    Circling,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::Parallel, Scenario::AwayClose, Scenario::Circling];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Parallel => "parallel",
            Scenario::AwayClose => "away_close",
            Scenario::Circling => "circling",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| SimError::Config(format!("unknown scenario {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    pub scenario: Scenario,
    /// Walking speed, m/s.
    pub speed: f64,
    /// Path length, metres. Circling walks an arc of this length.
    pub range: f64,
    /// Circling radius, metres (horizontal distance to the target).
    pub radius: f64,
    pub fps: f64,
    pub target: [f64; 3],
    /// Horizontal distance from the target to the middle of the Parallel and
    /// AwayClose paths.
    pub standoff: f64,
    /// Camera height above the world origin.
    pub eye_height: f64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            scenario: Scenario::Parallel,
            speed: 1.0,
            range: 2.0,
            radius: 1.5,
            fps: 30.0,
            target: [0.0, 0.0, 0.3],
            standoff: 2.0,
            eye_height: 1.5,
        }
    }
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SimError::Config(format!("{what} must be positive, got {v}")))
            }
        };
        positive(self.speed, "speed")?;
        positive(self.range, "range")?;
        positive(self.fps, "fps")?;
        positive(self.standoff, "standoff")?;
        if self.scenario == Scenario::Circling && !(RADIUS_RANGE.0..=RADIUS_RANGE.1).contains(&self.radius) {
            return Err(SimError::Config(format!(
                "circling radius {} outside [{}, {}] m",
                self.radius, RADIUS_RANGE.0, RADIUS_RANGE.1
            )));
        }
        if self.scenario == Scenario::Circling && self.speed / self.fps > 2.0 * self.radius {
            return Err(SimError::Config("per-frame step longer than the circle diameter".into()));
        }
        if self.scenario == Scenario::AwayClose && self.range / 2.0 >= self.standoff {
            return Err(SimError::Config("away/close path would pass through the target".into()));
        }
        if !self.target.iter().chain([&self.eye_height]).all(|v| v.is_finite()) {
            return Err(SimError::Config("target and eye height must be finite".into()));
        }
        Ok(())
    }

    pub fn target(&self) -> Vec3 {
        Vec3::from(self.target)
    }

    pub fn duration(&self) -> f64 {
        self.range / self.speed
    }
}

/// Time-stamped camera poses at a fixed frame rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub fps: f64,
    pub samples: Vec<(f64, Pose)>,
}

impl Trajectory {
    pub fn stationary(pose: Pose, duration: f64, fps: f64) -> Result<Self, SimError> {
        if !(fps > 0.0 && duration >= 0.0) {
            return Err(SimError::Config("stationary trajectory needs fps > 0 and duration >= 0".into()));
        }
        let n = sample_count(duration, fps);
        Ok(Self { fps, samples: (0..n).map(|i| (i as f64 / fps, pose)).collect() })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.0)
    }

    pub fn time(&self, i: usize) -> f64 {
        self.samples[i].0
    }

    pub fn pose(&self, i: usize) -> &Pose {
        &self.samples[i].1
    }
}

fn sample_count(duration: f64, fps: f64) -> usize {
    (duration * fps + 1e-9).floor() as usize + 1
}

/// Generates the camera path for `spec`.
///
/// All poses share one pitch (looking down toward the target), so every pose
/// delta is a yaw plus a translation. Parallel and AwayClose keep a fixed
/// heading toward the middle of the path; Circling turns to face the target.
pub fn make_trajectory(spec: &TrajectorySpec) -> Result<Trajectory, SimError> {
    spec.validate()?;
    let n = sample_count(spec.duration(), spec.fps);
    let target = spec.target();
    let drop = spec.eye_height - target.z;
    let step = spec.speed / spec.fps;
    let mut samples = Vec::with_capacity(n);
    match spec.scenario {
        Scenario::Parallel | Scenario::AwayClose => {
            let pitch = drop.atan2(spec.standoff);
            // heading +x: the camera faces the target from the -x side
            let (start, dir) = if spec.scenario == Scenario::Parallel {
                (Vec3::new(target.x - spec.standoff, target.y - spec.range / 2.0, spec.eye_height), Vec3::y())
            } else {
                (Vec3::new(target.x - spec.standoff - spec.range / 2.0, target.y, spec.eye_height), Vec3::x())
            };
            for i in 0..n {
                let pos = start + dir * (step * i as f64);
                samples.push((i as f64 / spec.fps, Pose::gravity_aligned(pos, 0.0, pitch)));
            }
        }
        Scenario::Circling => {
            let pitch = drop.atan2(spec.radius);
            // equal chords of length `step` between consecutive samples
            let dtheta = 2.0 * (step / (2.0 * spec.radius)).asin();
            let theta0 = std::f64::consts::PI - 0.5 * dtheta * (n - 1) as f64;
            for i in 0..n {
                let th = theta0 + dtheta * i as f64;
                let pos =
                    Vec3::new(target.x + spec.radius * th.cos(), target.y + spec.radius * th.sin(), spec.eye_height);
                let heading = (target.y - pos.y).atan2(target.x - pos.x);
                samples.push((i as f64 / spec.fps, Pose::gravity_aligned(pos, heading, pitch)));
            }
        }
    }
    Ok(Trajectory { fps: spec.fps, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(scenario: Scenario, speed: f64) -> TrajectorySpec {
        TrajectorySpec { scenario, speed, ..Default::default() }
    }

    #[test]
    fn parallel_sample_count() {
        let t = make_trajectory(&spec(Scenario::Parallel, 1.0)).unwrap();
        assert_eq!(t.len(), 61);
        assert!((t.duration() - 2.0).abs() < 1e-12);
        let moved = (t.pose(60).translation - t.pose(0).translation).norm();
        assert!((moved - 2.0).abs() < 1e-9);
    }

    #[test]
    fn away_close_endpoints() {
        let s = TrajectorySpec { standoff: 2.0, ..spec(Scenario::AwayClose, 1.0) };
        let t = make_trajectory(&s).unwrap();
        let horiz = |p: &Pose| {
            let d = p.translation - s.target();
            (d.x * d.x + d.y * d.y).sqrt()
        };
        assert!((horiz(t.pose(0)) - 3.0).abs() < 1e-9);
        assert!((horiz(t.pose(t.len() - 1)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn circling_radius_and_facing() {
        let s = spec(Scenario::Circling, 2.0);
        let t = make_trajectory(&s).unwrap();
        for (_, p) in &t.samples {
            let d = p.translation - s.target();
            assert!(((d.x * d.x + d.y * d.y).sqrt() - 1.5).abs() < 1e-9);
            // target projects onto the vertical centre line
            let c = p.inverse_transform_point(&s.target());
            assert!(c.x.abs() < 1e-9 && c.z > 0.0);
        }
        assert!(make_trajectory(&TrajectorySpec { radius: 0.2, ..s }).is_err());
        assert!(make_trajectory(&TrajectorySpec { radius: 11.0, ..s }).is_err());
    }

    #[test]
    fn constant_step_length() {
        for scenario in Scenario::ALL {
            for speed in [0.5, 1.0, 2.0] {
                let t = make_trajectory(&spec(scenario, speed)).unwrap();
                for w in t.samples.windows(2) {
                    let d = (w[1].1.translation - w[0].1.translation).norm();
                    assert!((d - speed / 30.0).abs() < 1e-9, "{scenario} {speed}: {d}");
                    assert!((w[1].0 - w[0].0 - 1.0 / 30.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn deltas_preserve_up() {
        for scenario in Scenario::ALL {
            let t = make_trajectory(&spec(scenario, 1.0)).unwrap();
            let p0 = t.pose(0);
            for (_, p) in &t.samples {
                assert!(p.compose(&p0.inverse()).preserves_up(1e-9));
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(make_trajectory(&spec(Scenario::Parallel, 0.0)).is_err());
        assert!(make_trajectory(&TrajectorySpec { fps: 0.0, ..Default::default() }).is_err());
        assert!(make_trajectory(&TrajectorySpec { range: -1.0, ..Default::default() }).is_err());
        assert_eq!("circling".parse::<Scenario>().unwrap(), Scenario::Circling);
        assert!("sideways".parse::<Scenario>().is_err());
    }

    #[test]
    fn stationary_run() {
        let t = Trajectory::stationary(Pose::identity(), 1.0, 30.0).unwrap();
        assert_eq!(t.len(), 31);
        assert!(t.samples.iter().all(|(_, p)| *p == Pose::identity()));
    }
}
