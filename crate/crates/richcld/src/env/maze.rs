//! Point-mass mazes on the unit square with thin axis-aligned walls.

use serde::{Deserialize, Serialize};

use crate::cover::{point, MetricBox};
use crate::env::{Dynamics, Emission, Initial, RewardSpec, RichCldMdp};
use crate::error::{invalid_param, Error, Result};

/// Distance kept between a stopped point and the wall it hit.
const WALL_GAP: f64 = 1e-9;
const MAX_BOUNCES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Hallway,
    Spiral,
    Room,
}

impl std::str::FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hallway" => Ok(Layout::Hallway),
            "spiral" => Ok(Layout::Spiral),
            "room" => Ok(Layout::Room),
            _ => Err(Error::UnknownLayout(s.to_string())),
        }
    }
}

/// Axis-aligned wall segment from `(x0, y0)` to `(x1, y1)`, endpoints ordered.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Wall {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Wall {
    fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0: x0.min(x1), y0: y0.min(y1), x1: x0.max(x1), y1: y0.max(y1) }
    }

    pub fn is_vertical(&self) -> bool {
        self.x0 == self.x1
    }

    /// First contact parameter `t` in `[0, 1]` of the motion `p + t d`, if any.
    fn hit(&self, p: [f64; 2], d: [f64; 2]) -> Option<f64> {
        let (axis, c, lo, hi) = if self.is_vertical() {
            (0, self.x0, self.y0, self.y1)
        } else {
            (1, self.y0, self.x0, self.x1)
        };
        let other = 1 - axis;
        if d[axis] == 0.0 || p[axis] == c {
            return None;
        }
        let t = (c - p[axis]) / d[axis];
        if !(0.0..=1.0).contains(&t) {
            return None;
        }
        let along = p[other] + t * d[other];
        (lo..=hi).contains(&along).then_some(t)
    }

    /// Whether the closed segment `p -> q` touches this wall.
    pub fn crosses(&self, p: [f64; 2], q: [f64; 2]) -> bool {
        let d = [q[0] - p[0], q[1] - p[1]];
        self.hit(p, d).is_some()
    }
}

#[derive(Clone, Debug)]
pub struct Maze {
    pub layout: Layout,
    pub walls: Vec<Wall>,
    pub noise: f64,
}

impl Maze {
    pub fn new(layout: Layout, noise: f64) -> Self {
        let w = Wall::new;
        let walls = match layout {
            Layout::Hallway => vec![
                w(0.25, 0.25, 0.75, 0.25),
                w(0.75, 0.25, 0.75, 0.75),
                w(0.25, 0.75, 0.75, 0.75),
                w(0.25, 0.25, 0.25, 0.75),
            ],
            Layout::Spiral => vec![
                w(0.2, 0.0, 0.2, 0.8),
                w(0.2, 0.8, 0.8, 0.8),
                w(0.8, 0.2, 0.8, 0.8),
                w(0.4, 0.2, 0.8, 0.2),
                w(0.4, 0.2, 0.4, 0.6),
            ],
            Layout::Room => vec![
                w(0.5, 0.0, 0.5, 0.2),
                w(0.5, 0.3, 0.5, 0.7),
                w(0.5, 0.8, 0.5, 1.0),
                w(0.0, 0.5, 0.2, 0.5),
                w(0.3, 0.5, 0.7, 0.5),
                w(0.8, 0.5, 1.0, 0.5),
            ],
        };
        Self { layout, walls, noise }
    }

    /// Interior walls plus the four sides of the unit square.
    fn all_walls(&self) -> impl Iterator<Item = Wall> + '_ {
        let sides = [
            Wall::new(0.0, 0.0, 1.0, 0.0),
            Wall::new(0.0, 1.0, 1.0, 1.0),
            Wall::new(0.0, 0.0, 0.0, 1.0),
            Wall::new(1.0, 0.0, 1.0, 1.0),
        ];
        self.walls.iter().copied().chain(sides)
    }

    /// Waypoints of the motion from `from` toward `to`: the segment is cut at the
    /// first wall contact, the normal component is dropped and the tangential
    /// remainder continues (sliding).
    pub fn motion_path(&self, from: [f64; 2], to: [f64; 2]) -> Vec<[f64; 2]> {
        let mut pos = from;
        let mut disp = [to[0] - from[0], to[1] - from[1]];
        let mut path = vec![pos];
        for _ in 0..MAX_BOUNCES {
            if disp == [0.0, 0.0] {
                break;
            }
            let first = self
                .all_walls()
                .filter_map(|w| w.hit(pos, disp).map(|t| (t, w)))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            match first {
                None => {
                    pos = [pos[0] + disp[0], pos[1] + disp[1]];
                    path.push(pos);
                    break;
                }
                Some((t, wall)) => {
                    let axis = if wall.is_vertical() { 0 } else { 1 };
                    let c = if axis == 0 { wall.x0 } else { wall.y0 };
                    let mut contact = [pos[0] + t * disp[0], pos[1] + t * disp[1]];
                    contact[axis] = c - disp[axis].signum() * WALL_GAP;
                    let mut rest = [(1.0 - t) * disp[0], (1.0 - t) * disp[1]];
                    rest[axis] = 0.0;
                    pos = contact;
                    disp = rest;
                    path.push(pos);
                }
            }
        }
        path
    }

    /// The wall projection `w` applied to the motion `from -> to`.
    pub fn project_motion(&self, from: [f64; 2], to: [f64; 2]) -> [f64; 2] {
        let end = *self.motion_path(from, to).last().expect("path starts at origin");
        [end[0].clamp(0.0, 1.0), end[1].clamp(0.0, 1.0)]
    }

    /// Whether the straight segment between two positions touches an interior wall.
    pub fn separated(&self, p: [f64; 2], q: [f64; 2]) -> bool {
        self.walls.iter().any(|w| w.crosses(p, q))
    }

    /// Spiral only: (arc length along the corridor centerline in [0, 1], signed
    /// lateral offset in [-1, 1]).
    pub fn corridor_coordinates(&self, p: [f64; 2]) -> Option<(f64, f64)> {
        if self.layout != Layout::Spiral {
            return None;
        }
        let [x, y] = p;
        // Centerline legs: (start progress, coordinate along, lateral offset).
        let (progress, lateral) = if y >= 0.8 {
            (0.9 + (x - 0.1).clamp(0.0, 0.8), (y - 0.9) / 0.1)
        } else if x < 0.2 {
            (y.clamp(0.0, 0.9), (x - 0.1) / 0.1)
        } else if x >= 0.8 {
            (1.7 + (0.9 - y.clamp(0.1, 0.9)), (x - 0.9) / 0.1)
        } else if y < 0.2 {
            (2.5 + (0.9 - x.clamp(0.3, 0.9)), (y - 0.1) / 0.1)
        } else if x < 0.4 {
            (3.1 + (y.clamp(0.1, 0.7) - 0.1), (x - 0.3) / 0.1)
        } else if y >= 0.6 {
            (3.7 + (x.clamp(0.3, 0.6) - 0.3), (y - 0.7) / 0.1)
        } else {
            (4.0 + (0.7 - y.clamp(0.3, 0.7)), (x - 0.6) / 0.2)
        };
        Some((progress / SPIRAL_LENGTH, lateral.clamp(-1.0, 1.0)))
    }
}

pub const SPIRAL_LENGTH: f64 = 4.4;

/// Maze MDP with S = [0,1]², A = [-0.2,0.2]² and uniform noise on [0, noise]².
pub fn make_maze(layout: Layout, obs_width: u32, horizon: usize, reward: RewardSpec) -> Result<RichCldMdp> {
    if obs_width < 10 {
        return Err(invalid_param(format!("observation width must be at least 10, got {obs_width}")));
    }
    if horizon == 0 {
        return Err(invalid_param("horizon must be positive"));
    }
    let mdp = RichCldMdp {
        label: format!("maze-{layout:?}").to_lowercase(),
        horizon,
        state_box: MetricBox::unit(2),
        action_box: MetricBox::symmetric(2, 0.2)?,
        dynamics: Dynamics::Maze(Maze::new(layout, 0.01)),
        reward,
        emission: Emission::Pixel { width: obs_width },
        initial: Initial::Fixed(point(&default_start(layout))),
    };
    mdp.check_reward_budget()?;
    Ok(mdp)
}

pub fn default_start(layout: Layout) -> [f64; 2] {
    match layout {
        Layout::Hallway => [0.1, 0.1],
        Layout::Spiral => [0.1, 0.1],
        Layout::Room => [0.25, 0.25],
    }
}

/// Goal-region indicator at the last layer, placed away from the start.
pub fn default_goal(layout: Layout, horizon: usize) -> RewardSpec {
    let center = match layout {
        Layout::Hallway => vec![0.9, 0.9],
        Layout::Spiral => vec![0.6, 0.4],
        Layout::Room => vec![0.75, 0.75],
    };
    RewardSpec::GoalRegion { center, radius: 0.1, layer: horizon, scale: 1.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_space_fixed_point() {
        let m = Maze::new(Layout::Spiral, 0.01);
        assert_eq!(m.project_motion([0.5, 0.5], [0.5, 0.5]), [0.5, 0.5]);
        assert_eq!(m.project_motion([0.5, 0.7], [0.55, 0.75]), [0.55, 0.75]);
    }

    #[test]
    fn stops_at_outer_wall() {
        let m = Maze::new(Layout::Hallway, 0.01);
        let p = m.project_motion([0.95, 0.5], [1.15, 0.5]);
        assert!((p[0] - 1.0).abs() < 1e-8 && p[0] <= 1.0);
        assert_eq!(p[1], 0.5);
    }

    #[test]
    fn slides_along_interior_wall() {
        let m = Maze::new(Layout::Spiral, 0.01);
        // Wall x = 0.2 blocks the x motion; the y motion continues.
        let p = m.project_motion([0.15, 0.3], [0.3, 0.4]);
        assert!(p[0] < 0.2 && (0.2 - p[0]) < 1e-8);
        assert!((p[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn corridor_progress_increases_along_the_spiral() {
        let m = Maze::new(Layout::Spiral, 0.01);
        let route = [[0.1, 0.05], [0.1, 0.5], [0.5, 0.9], [0.9, 0.5], [0.5, 0.1], [0.3, 0.5], [0.5, 0.7], [0.6, 0.35]];
        let progress: Vec<f64> = route.iter().map(|&p| m.corridor_coordinates(p).unwrap().0).collect();
        assert!(progress.windows(2).all(|w| w[0] < w[1]), "{progress:?}");
        assert!(progress.iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(Maze::new(Layout::Room, 0.01).corridor_coordinates([0.5, 0.5]).is_none());
    }

    #[test]
    fn unknown_layout_is_rejected() {
        assert!("spiral".parse::<Layout>().is_ok());
        assert!(matches!("labyrinth".parse::<Layout>(), Err(Error::UnknownLayout(_))));
        assert!(make_maze(Layout::Spiral, 9, 5, RewardSpec::Zero).is_err());
    }
}
