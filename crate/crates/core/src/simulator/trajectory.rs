use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::Vector3;

use crate::geometry::{wrap_angle, Pose};

/// Planar ground-truth motion of the IMU frame; body x points forward.
#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    Stationary {
        start: PlanarStart,
    },
    /// Constant forward speed (m/s) and yaw rate (rad/s): a line, a circle
    /// or a spin in place.
    Twist {
        start: PlanarStart,
        speed: f64,
        yaw_rate: f64,
    },
    /// Counter-clockwise rounded rectangle, entered from rest: `rest`
    /// seconds still, a linear speed ramp over `ramp` seconds, then cruise.
    /// Each corner eases in and out over `transition` meters of linearly
    /// varying curvature (zero gives plain circular arcs).
    Loop {
        start: PlanarStart,
        width: f64,
        height: f64,
        radius: f64,
        transition: f64,
        speed: f64,
        rest: f64,
        ramp: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanarStart {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

/// Pose and world-frame velocity at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionState {
    pub pose: Pose,
    pub velocity: Vector3<f64>,
}

impl Trajectory {
    pub fn state(&self, t: f64) -> MotionState {
        match *self {
            Trajectory::Stationary { start } => planar_state(start, 0.0, 0.0, start.yaw, 0.0),
            Trajectory::Twist { start, speed, yaw_rate } => {
                let yaw = start.yaw + yaw_rate * t;
                let (dx, dy) = if yaw_rate.abs() < 1e-12 {
                    (speed * t * start.yaw.cos(), speed * t * start.yaw.sin())
                } else {
                    let k = speed / yaw_rate;
                    (k * (yaw.sin() - start.yaw.sin()), -k * (yaw.cos() - start.yaw.cos()))
                };
                planar_state(start, dx, dy, yaw, speed)
            }
            Trajectory::Loop {
                start,
                width,
                height,
                radius,
                transition,
                speed,
                rest,
                ramp,
            } => {
                let (s, v) = loop_progress(t, speed, rest, ramp);
                let (x, y, heading) = Corner::new(radius, transition).loop_point(s, width, height);
                let (c, sn) = (start.yaw.cos(), start.yaw.sin());
                planar_state(start, c * x - sn * y, sn * x + c * y, start.yaw + heading, v)
            }
        }
    }

    pub fn pose(&self, t: f64) -> Pose {
        self.state(t).pose
    }

    /// Arc length covered by time `t`, for loops and twists.
    pub fn distance(&self, t: f64) -> f64 {
        match *self {
            Trajectory::Stationary { .. } => 0.0,
            Trajectory::Twist { speed, .. } => speed.abs() * t,
            Trajectory::Loop { speed, rest, ramp, .. } => loop_progress(t, speed, rest, ramp).0,
        }
    }
}

fn planar_state(start: PlanarStart, dx: f64, dy: f64, yaw: f64, speed: f64) -> MotionState {
    MotionState {
        pose: Pose::planar(start.x + dx, start.y + dy, wrap_angle(yaw)),
        velocity: Vector3::new(speed * yaw.cos(), speed * yaw.sin(), 0.0),
    }
}

/// Distance travelled and current speed under the rest/ramp/cruise profile.
fn loop_progress(t: f64, speed: f64, rest: f64, ramp: f64) -> (f64, f64) {
    let tau = t - rest;
    if tau <= 0.0 {
        (0.0, 0.0)
    } else if tau < ramp {
        (0.5 * speed * tau * tau / ramp, speed * tau / ramp)
    } else {
        (0.5 * speed * ramp + speed * (tau - ramp), speed)
    }
}

/// A 90° left turn: an entry clothoid of length `l`, a circular arc of
/// radius `r`, and the mirrored exit clothoid.
#[derive(Debug, Clone, Copy)]
struct Corner {
    r: f64,
    l: f64,
    /// Distance from either end to the intersection of the end tangents.
    tangent: f64,
}

/// 8-point Gauss–Legendre nodes and weights on [-1, 1].
const GL8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_2, 0.101_228_536_290_376_26),
];

impl Corner {
    fn new(r: f64, l: f64) -> Self {
        let mut c = Self { r, l, tangent: r };
        if l > 0.0 {
            // The corner is symmetric about the line x + y = tangent, on
            // which its midpoint lies.
            let (x, y, _) = c.point(c.length() / 2.0);
            c.tangent = x + y;
        }
        c
    }

    fn length(&self) -> f64 {
        self.l + FRAC_PI_2 * self.r
    }

    /// Heading along the entry clothoid.
    fn clothoid_heading(&self, u: f64) -> f64 {
        u * u / (2.0 * self.l * self.r)
    }

    fn clothoid(&self, u: f64) -> (f64, f64) {
        let (mut x, mut y) = (0.0, 0.0);
        // Two panels keep the quadrature exact to rounding for any
        // admissible heading change (at most π/4).
        for panel in 0..2 {
            let (a, b) = (u * panel as f64 / 2.0, u * (panel + 1) as f64 / 2.0);
            let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
            for (node, w) in GL8 {
                let h = self.clothoid_heading(mid + half * node);
                x += w * half * h.cos();
                y += w * half * h.sin();
            }
        }
        (x, y)
    }

    /// Position and heading `u` meters into the corner, entered at the
    /// origin heading +x.
    fn point(&self, u: f64) -> (f64, f64, f64) {
        let arc_end = self.l + (FRAC_PI_2 - self.l / self.r) * self.r;
        if u <= self.l {
            let (x, y) = self.clothoid(u);
            (x, y, self.clothoid_heading(u))
        } else if u <= arc_end || self.l == 0.0 {
            let (x0, y0) = if self.l > 0.0 { self.clothoid(self.l) } else { (0.0, 0.0) };
            let h0 = self.l / (2.0 * self.r);
            let (cx, cy) = (x0 - self.r * h0.sin(), y0 + self.r * h0.cos());
            let h = h0 + (u - self.l) / self.r;
            (cx + self.r * h.sin(), cy - self.r * h.cos(), h)
        } else {
            // Mirror image of the entry clothoid.
            let w = self.length() - u;
            let (x, y) = self.clothoid(w);
            (self.tangent - y, self.tangent - x, FRAC_PI_2 - self.clothoid_heading(w))
        }
    }

    /// Point at arc length `s` along a counter-clockwise loop that starts at
    /// the origin heading +x; returns `(x, y, unwrapped heading)`.
    fn loop_point(&self, s: f64, width: f64, height: f64) -> (f64, f64, f64) {
        let (lx, ly) = (width - 2.0 * self.tangent, height - 2.0 * self.tangent);
        let perimeter = 2.0 * (lx + ly) + 4.0 * self.length();
        let laps = (s / perimeter).floor();
        let mut rem = s - laps * perimeter;
        let base_heading = laps * TAU;
        // Walk the eight pieces: straight, corner, straight, corner, ...
        let (mut x, mut y, mut heading) = (0.0, 0.0, 0.0f64);
        for side in 0..4 {
            let len = if side % 2 == 0 { lx } else { ly };
            let step = rem.min(len);
            x += step * heading.cos();
            y += step * heading.sin();
            rem -= step;
            if rem <= 0.0 {
                return (x, y, base_heading + heading);
            }
            let u = rem.min(self.length());
            let (cx, cy, ch) = self.point(u);
            let (c, sn) = (heading.cos(), heading.sin());
            x += c * cx - sn * cy;
            y += sn * cx + c * cy;
            heading += ch;
            rem -= u;
            if rem <= 0.0 {
                return (x, y, base_heading + heading);
            }
        }
        (x, y, base_heading + heading)
    }
}

/// Perimeter of a rounded rectangle whose corners ease in and out over
/// `transition` meters.
pub fn loop_perimeter(width: f64, height: f64, radius: f64, transition: f64) -> f64 {
    let c = Corner::new(radius, transition);
    2.0 * (width + height - 4.0 * c.tangent) + 4.0 * c.length()
}

/// Distance from a corner's ends to the intersection of its end tangents;
/// each side of the loop must be at least twice this long.
pub fn corner_tangent(radius: f64, transition: f64) -> f64 {
    Corner::new(radius, transition).tangent
}

/// Largest admissible corner transition for a radius.
pub fn max_transition(radius: f64) -> f64 {
    FRAC_PI_2 * radius
}
