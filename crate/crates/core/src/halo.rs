use serde::{Deserialize, Serialize};

/// Per-side padding a stencil (or fused group) needs around its output box.
///
/// Totals `δx = x_lo + x_hi` (and likewise for `y`, `t`) are what the
/// utilization and traffic formulas consume; the per-side split is what the
/// executors and code generator need to place data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Halo {
    pub x_lo: u32,
    pub x_hi: u32,
    pub y_lo: u32,
    pub y_hi: u32,
    pub t_lo: u32,
    pub t_hi: u32,
}

/// How the halos of a fused group's members are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HaloMode {
    /// Component-wise maximum over members (the max-update input-box rule).
    PaperMax,
    /// Component-wise sum: the exact footprint of the composed stencils.
    Cumulative,
}

impl HaloMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            HaloMode::PaperMax => "paper-max",
            HaloMode::Cumulative => "cumulative",
        }
    }
}

impl Halo {
    pub const ZERO: Halo = Halo {
        x_lo: 0,
        x_hi: 0,
        y_lo: 0,
        y_hi: 0,
        t_lo: 0,
        t_hi: 0,
    };

    pub const fn new(x_lo: u32, x_hi: u32, y_lo: u32, y_hi: u32, t_lo: u32, t_hi: u32) -> Self {
        Halo {
            x_lo,
            x_hi,
            y_lo,
            y_hi,
            t_lo,
            t_hi,
        }
    }

    /// Symmetric spatial stencil of radius `rx` × `ry`, single frame.
    pub const fn spatial(rx: u32, ry: u32) -> Self {
        Halo::new(rx, rx, ry, ry, 0, 0)
    }

    /// Splits totals evenly, putting the odd element on the low side.
    pub fn from_totals(dx: u32, dy: u32, dt: u32) -> Self {
        let split = |d: u32| (d - d / 2, d / 2);
        let (x_lo, x_hi) = split(dx);
        let (y_lo, y_hi) = split(dy);
        let (t_lo, t_hi) = split(dt);
        Halo::new(x_lo, x_hi, y_lo, y_hi, t_lo, t_hi)
    }

    pub fn dx(&self) -> u32 {
        self.x_lo + self.x_hi
    }

    pub fn dy(&self) -> u32 {
        self.y_lo + self.y_hi
    }

    pub fn dt(&self) -> u32 {
        self.t_lo + self.t_hi
    }

    pub fn totals(&self) -> [u32; 3] {
        [self.dx(), self.dy(), self.dt()]
    }

    pub fn lo(&self) -> [u32; 3] {
        [self.x_lo, self.y_lo, self.t_lo]
    }

    pub fn hi(&self) -> [u32; 3] {
        [self.x_hi, self.y_hi, self.t_hi]
    }

    pub fn from_lo_hi(lo: [u32; 3], hi: [u32; 3]) -> Self {
        Halo::new(lo[0], hi[0], lo[1], hi[1], lo[2], hi[2])
    }

    pub fn is_zero(&self) -> bool {
        *self == Halo::ZERO
    }

    pub fn is_spatial_zero(&self) -> bool {
        self.dx() == 0 && self.dy() == 0
    }

    fn zip(self, other: Halo, f: impl Fn(u32, u32) -> u32) -> Halo {
        Halo::new(
            f(self.x_lo, other.x_lo),
            f(self.x_hi, other.x_hi),
            f(self.y_lo, other.y_lo),
            f(self.y_hi, other.y_hi),
            f(self.t_lo, other.t_lo),
            f(self.t_hi, other.t_hi),
        )
    }

    pub fn max(self, other: Halo) -> Halo {
        self.zip(other, u32::max)
    }

    pub fn sum(self, other: Halo) -> Halo {
        self.zip(other, u32::saturating_add)
    }

    pub fn saturating_sub(self, other: Halo) -> Halo {
        self.zip(other, u32::saturating_sub)
    }

    /// True when every side of `self` is at least the matching side of `other`.
    pub fn covers(&self, other: &Halo) -> bool {
        self.x_lo >= other.x_lo
            && self.x_hi >= other.x_hi
            && self.y_lo >= other.y_lo
            && self.y_hi >= other.y_hi
            && self.t_lo >= other.t_lo
            && self.t_hi >= other.t_hi
    }
}
