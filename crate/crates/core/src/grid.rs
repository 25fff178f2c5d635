//! Square grids over the plane: box coordinates, the two box-adjacency
//! notions used by the protocols, octants of a box neighborhood, and
//! dilution classes for spaced transmission schedules.
//!
//! A grid of cell size `c` tiles the plane with half-open boxes
//! `[c*i, c*(i+1)) x [c*j, c*(j+1))`, so `(0,0)` is a grid point and every
//! point belongs to exactly one box.

use std::f64::consts::SQRT_2;

use thiserror::Error;

use crate::sinr::{Point, Station};

#[derive(Error, Debug)]
pub enum GridError {
    #[error("grid cell size must be positive, got {0}")]
    NonPositiveCell(f64),
    #[error("octant undefined for a box relative to itself")]
    OctantOfSelf,
}

/// A square grid with a fixed cell side, in range units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    cell: f64,
}

impl Grid {
    pub fn new(cell: f64) -> Result<Self, GridError> {
        if !(cell > 0.0) {
            return Err(GridError::NonPositiveCell(cell));
        }
        Ok(Grid { cell })
    }

    pub fn cell(&self) -> f64 {
        self.cell
    }

    /// Cell side used by the density-aware broadcast schedule: `eps / (2*sqrt(2))`.
    pub fn known_density_cell(eps: f64) -> f64 {
        eps / (2.0 * SQRT_2)
    }

    /// Cell side used by the density-oblivious broadcast schedule: `eps / (6*sqrt(2))`.
    pub fn unknown_density_cell(eps: f64) -> f64 {
        eps / (6.0 * SQRT_2)
    }

    /// Largest cell side for which any two stations in one box are connected
    /// in the communication graph: `(1 - eps) / sqrt(2)`.
    pub fn pivotal_cell(eps: f64) -> f64 {
        (1.0 - eps) / SQRT_2
    }

    /// Center of a box, used as its reference point for octant assignment.
    pub fn center(&self, b: BoxCoord) -> Point {
        Point::new(
            (b.i as f64 + 0.5) * self.cell,
            (b.j as f64 + 0.5) * self.cell,
        )
    }
}

/// Integer coordinates of one grid box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BoxCoord {
    pub i: i64,
    pub j: i64,
}

impl BoxCoord {
    pub fn new(i: i64, j: i64) -> Self {
        BoxCoord { i, j }
    }
}

/// The box containing a point: `(floor(x/c), floor(y/c))`.
pub fn box_of(p: Point, grid: &Grid) -> BoxCoord {
    BoxCoord {
        i: (p.x / grid.cell()).floor() as i64,
        j: (p.y / grid.cell()).floor() as i64,
    }
}

/// Standard adjacency: coordinates differ by at most 1 in each axis.
/// A box is adjacent to itself under this notion.
pub fn standard_adjacent(a: BoxCoord, b: BoxCoord) -> bool {
    (a.i - b.i).abs() <= 1 && (a.j - b.j).abs() <= 1
}

/// Maximum Euclidean distance between any two points of the closed boxes;
/// 0 for a box and itself. The maximum of a convex distance function over
/// two rectangles is attained at corners, which gives a closed form.
pub fn box_distance(a: BoxCoord, b: BoxCoord, grid: &Grid) -> f64 {
    if a == b {
        return 0.0;
    }
    let c = grid.cell();
    let di = ((a.i - b.i).abs() + 1) as f64;
    let dj = ((a.j - b.j).abs() + 1) as f64;
    c * (di * di + dj * dj).sqrt()
}

/// Whether `b` falls in the 5x5 window `a + [-2,2]^2` of boxes considered
/// too close to be adjacent under the modified notion.
pub fn near_window(a: BoxCoord, b: BoxCoord) -> bool {
    (a.i - b.i).abs() <= 2 && (a.j - b.j).abs() <= 2
}

/// Modified adjacency for the fine grid (`cell = eps / (6*sqrt(2))`).
///
/// Base rule: boxes are adjacent when their distance is at most `1 - eps/2`
/// but not within the `[-2,2]^2` near window of each other. Override: given
/// a communication-graph edge with one endpoint `v` in box `a` and the other
/// `u` in some box `U`, box `a` is additionally adjacent to every box of
/// `U + [-2,2]^2` that is not also in `a`'s own near window.
pub fn modified_adjacent(
    a: BoxCoord,
    b: BoxCoord,
    grid: &Grid,
    eps: f64,
    edge_witness: Option<(&Station, &Station)>,
) -> bool {
    if near_window(a, b) {
        return false;
    }
    if box_distance(a, b, grid) <= 1.0 - eps / 2.0 + 1e-12 {
        return true;
    }
    if let Some((v, u)) = edge_witness {
        if box_of(v.pos, grid) == a && near_window(box_of(u.pos, grid), b) {
            return true;
        }
    }
    false
}

/// The 45-degree sector (0..8, counterclockwise from the positive x axis)
/// in which the center of `other` lies, seen from the center of `center`.
/// Each boundary ray belongs to the sector it opens, so the sectors are
/// disjoint and cover every direction.
///
/// Box centers differ by integer multiples of the cell side, so the sector
/// is decided by exact integer comparisons on the coordinate deltas.
pub fn octant_of(center: BoxCoord, other: BoxCoord) -> Result<u8, GridError> {
    let di = other.i - center.i;
    let dj = other.j - center.j;
    if di == 0 && dj == 0 {
        return Err(GridError::OctantOfSelf);
    }
    let o = if di > 0 && dj >= 0 && dj < di {
        0
    } else if dj > 0 && di > 0 && di <= dj {
        1
    } else if dj > 0 && di <= 0 && -di < dj {
        2
    } else if di < 0 && dj > 0 && dj <= -di {
        3
    } else if di < 0 && dj <= 0 && -dj < -di {
        4
    } else if dj < 0 && di < 0 && -di <= -dj {
        5
    } else if dj < 0 && di >= 0 && di < -dj {
        6
    } else {
        debug_assert!(di > 0 && dj < 0 && -dj <= di);
        7
    };
    Ok(o)
}

/// Dilution class of a box: coordinates reduced mod `d` with the
/// nonnegative remainder.
pub fn dilution_class(b: BoxCoord, d: u32) -> (u32, u32) {
    debug_assert!(d >= 1);
    let d = d as i64;
    (b.i.rem_euclid(d) as u32, b.j.rem_euclid(d) as u32)
}
