//! Scene descriptions for the synthetic video generator: simple rigid shapes
//! with per-frame velocity and optional rotation over a textured background.

use rand::Rng;

use crate::error::{Result, SynthError};

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeKind {
    Disk { radius: f32 },
    Rectangle { half_w: f32, half_h: f32 },
    /// Convex polygon; vertices relative to the object center, in order.
    Polygon { points: Vec<(f32, f32)> },
}

impl ShapeKind {
    /// Radius of the bounding circle around the object center.
    pub fn bounding_radius(&self) -> f32 {
        match self {
            ShapeKind::Disk { radius } => *radius,
            ShapeKind::Rectangle { half_w, half_h } => (half_w * half_w + half_h * half_h).sqrt(),
            ShapeKind::Polygon { points } => points
                .iter()
                .map(|&(x, y)| (x * x + y * y).sqrt())
                .fold(0.0, f32::max),
        }
    }

    /// Point-inside test in the object's local (unrotated) frame.
    pub fn contains_local(&self, x: f32, y: f32) -> bool {
        match self {
            ShapeKind::Disk { radius } => x * x + y * y <= radius * radius,
            ShapeKind::Rectangle { half_w, half_h } => x.abs() <= *half_w && y.abs() <= *half_h,
            ShapeKind::Polygon { points } => {
                // convex: the point must be on the same side of every edge
                let n = points.len();
                let mut sign = 0i8;
                for i in 0..n {
                    let (x1, y1) = points[i];
                    let (x2, y2) = points[(i + 1) % n];
                    let cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1);
                    if cross.abs() < 1e-12 {
                        continue;
                    }
                    let s = if cross > 0.0 { 1 } else { -1 };
                    if sign == 0 {
                        sign = s;
                    } else if sign != s {
                        return false;
                    }
                }
                true
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSpec {
    pub shape: ShapeKind,
    /// Center position at frame 0, in pixels.
    pub center: (f32, f32),
    /// Initial rotation, radians.
    pub angle: f32,
    /// Pixels per frame.
    pub velocity: (f32, f32),
    /// Radians per frame.
    pub rotation_rate: f32,
    /// Solid fill color, RGB in [0, 1].
    pub color: [f32; 3],
}

impl ObjectSpec {
    pub fn center_at(&self, frame: usize) -> (f32, f32) {
        (
            self.center.0 + self.velocity.0 * frame as f32,
            self.center.1 + self.velocity.1 * frame as f32,
        )
    }

    pub fn angle_at(&self, frame: usize) -> f32 {
        self.angle + self.rotation_rate * frame as f32
    }

    /// Is the canvas point (x, y) inside the object at `frame`?
    pub fn contains(&self, frame: usize, x: f32, y: f32) -> bool {
        let (cx, cy) = self.center_at(frame);
        let theta = self.angle_at(frame);
        let (dx, dy) = (x - cx, y - cy);
        let (s, c) = theta.sin_cos();
        // rotate into the local frame
        let lx = c * dx + s * dy;
        let ly = -s * dx + c * dy;
        self.shape.contains_local(lx, ly)
    }

    /// Exact motion of the object point currently at canvas position (x, y):
    /// translation plus the rotation-induced displacement over one frame.
    pub fn flow_at(&self, frame: usize, x: f32, y: f32) -> (f32, f32) {
        if self.rotation_rate == 0.0 {
            return self.velocity;
        }
        let (cx, cy) = self.center_at(frame);
        let (dx, dy) = (x - cx, y - cy);
        let (s, c) = self.rotation_rate.sin_cos();
        let rx = c * dx - s * dy;
        let ry = s * dx + c * dy;
        (self.velocity.0 + rx - dx, self.velocity.1 + ry - dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowFailure {
    /// Exact analytic flow.
    None,
    /// Flow channel wiped to zero; frames and masks untouched.
    Zeroed,
    /// Gaussian noise of the given sigma added to both flow components.
    Noisy(f32),
}

impl FlowFailure {
    pub fn parse(s: &str) -> Option<FlowFailure> {
        match s {
            "none" => Some(FlowFailure::None),
            "zeroed" => Some(FlowFailure::Zeroed),
            other => other
                .strip_prefix("noisy:")
                .and_then(|v| v.parse::<f32>().ok())
                .map(FlowFailure::Noisy),
        }
    }
}

impl std::fmt::Display for FlowFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FlowFailure::None => write!(f, "none"),
            FlowFailure::Zeroed => write!(f, "zeroed"),
            FlowFailure::Noisy(s) => write!(f, "noisy:{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub objects: Vec<ObjectSpec>,
    pub background_seed: u64,
    /// Uniform +-noise added to the rendered frames (not to flow or masks).
    pub noise: f32,
    pub flow_failure: FlowFailure,
}

impl SceneSpec {
    /// Objects must keep at least one pixel of margin inside the canvas in
    /// every frame, and a video needs at least two frames.
    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(SynthError::Spec(format!(
                "frame count must be >= 2, got {}",
                self.frames
            )));
        }
        if self.width < 8 || self.height < 8 {
            return Err(SynthError::Spec(format!(
                "canvas {}x{} too small",
                self.width, self.height
            )));
        }
        for (oi, obj) in self.objects.iter().enumerate() {
            let r = obj.shape.bounding_radius();
            for t in 0..self.frames {
                let (cx, cy) = obj.center_at(t);
                if cx - r < 1.0
                    || cy - r < 1.0
                    || cx + r > (self.width - 2) as f32
                    || cy + r > (self.height - 2) as f32
                {
                    return Err(SynthError::Spec(format!(
                        "object {oi} leaves the canvas margin at frame {t}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Knobs for the random scene sampler used by dataset generation.
#[derive(Debug, Clone)]
pub struct SceneParams {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Integer speeds are drawn from [1, max_speed] per axis (signs random);
    /// integer translation keeps rasterized mask area exactly conserved.
    pub max_speed: usize,
    pub noise: f32,
    pub flow_failure: FlowFailure,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            width: 64,
            height: 64,
            frames: 24,
            min_objects: 1,
            max_objects: 2,
            max_speed: 3,
            noise: 0.02,
            flow_failure: FlowFailure::None,
        }
    }
}

/// Draw a random scene: shapes sized and routed so they stay inside the
/// canvas for the whole clip. Per-axis speeds are capped by the runway the
/// clip length leaves, since velocity is constant across frames. Object
/// colors come from the same range as the background texture, so appearance
/// alone does not trivially give the mask away.
pub fn sample_scene(params: &SceneParams, rng: &mut impl Rng) -> Result<SceneSpec> {
    let frames = params.frames.max(2);
    let count = rng.gen_range(params.min_objects..=params.max_objects.max(params.min_objects));
    let mut objects = Vec::with_capacity(count);
    for _ in 0..count {
        let size = rng.gen_range(4.0..7.0f32);
        let shape = match rng.gen_range(0..3) {
            0 => ShapeKind::Disk { radius: size },
            1 => ShapeKind::Rectangle {
                half_w: size,
                half_h: rng.gen_range(3.0..6.0),
            },
            _ => {
                let sides = rng.gen_range(3..6);
                let points = (0..sides)
                    .map(|i| {
                        let a = i as f32 / sides as f32 * std::f32::consts::TAU;
                        (size * a.cos(), size * a.sin())
                    })
                    .collect();
                ShapeKind::Polygon { points }
            }
        };
        let r = shape.bounding_radius();
        let mut speed = |dim: usize| -> f32 {
            let cap = ((dim as f32 - 2.0 * r - 6.0) / (frames - 1) as f32).floor() as isize;
            let cap = cap.clamp(0, params.max_speed.max(1) as isize) as usize;
            if cap == 0 {
                return 0.0;
            }
            let mag = rng.gen_range(1..=cap) as f32;
            if rng.gen_bool(0.5) {
                mag
            } else {
                -mag
            }
        };
        let (vx, vy) = (speed(params.width), speed(params.height));
        // start so that center + t*v stays inside [r+2, dim-r-3] throughout
        let span = |v: f32, dim: usize| -> (f32, f32) {
            let travel = v * (frames - 1) as f32;
            let lo = (r + 2.0) + (-travel).max(0.0);
            let hi = (dim as f32 - r - 3.0) - travel.max(0.0);
            (lo, hi)
        };
        let (lo_x, hi_x) = span(vx, params.width);
        let (lo_y, hi_y) = span(vy, params.height);
        if lo_x >= hi_x || lo_y >= hi_y {
            return Err(SynthError::Spec(format!(
                "canvas {}x{} too small for speed {vx},{vy} over {frames} frames",
                params.width, params.height
            )));
        }
        let center = (rng.gen_range(lo_x..hi_x), rng.gen_range(lo_y..hi_y));
        objects.push(ObjectSpec {
            shape,
            center,
            angle: 0.0,
            velocity: (vx, vy),
            rotation_rate: 0.0,
            color: [
                rng.gen_range(0.15..0.85),
                rng.gen_range(0.15..0.85),
                rng.gen_range(0.15..0.85),
            ],
        });
    }
    let spec = SceneSpec {
        width: params.width,
        height: params.height,
        frames,
        objects,
        background_seed: rng.gen(),
        noise: params.noise,
        flow_failure: params.flow_failure,
    };
    spec.validate()?;
    Ok(spec)
}
