//! Uniform-grid spatial hash for nearest-vertex queries.

use std::collections::HashMap;

use crate::vec3::{dist2, V3};

type Cell = (i64, i64, i64);

pub struct GridHash {
    cell: f64,
    points: Vec<V3>,
    cells: HashMap<Cell, Vec<usize>>,
    lo: Cell,
    hi: Cell,
}

impl GridHash {
    /// `cell` must be positive; a mesh's mean edge length is a good choice.
    pub fn new(points: &[V3], cell: f64) -> Self {
        assert!(cell > 0.0 && cell.is_finite(), "grid cell must be positive");
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        let mut lo = (i64::MAX, i64::MAX, i64::MAX);
        let mut hi = (i64::MIN, i64::MIN, i64::MIN);
        for (i, &p) in points.iter().enumerate() {
            let c = Self::key(cell, p);
            lo = (lo.0.min(c.0), lo.1.min(c.1), lo.2.min(c.2));
            hi = (hi.0.max(c.0), hi.1.max(c.1), hi.2.max(c.2));
            cells.entry(c).or_default().push(i);
        }
        Self { cell, points: points.to_vec(), cells, lo, hi }
    }

    fn key(cell: f64, p: V3) -> Cell {
        ((p[0] / cell).floor() as i64, (p[1] / cell).floor() as i64, (p[2] / cell).floor() as i64)
    }

    /// Nearest point accepted by `keep` as `(index, squared distance)`; ties go to the lower index.
    pub fn nearest_where(&self, q: V3, keep: impl Fn(usize) -> bool) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let c = Self::key(self.cell, q);
        // Rings beyond this radius cover no occupied cell.
        let reach = [c.0 - self.lo.0, self.hi.0 - c.0, c.1 - self.lo.1, self.hi.1 - c.1, c.2 - self.lo.2, self.hi.2 - c.2]
            .into_iter()
            .map(i64::abs)
            .max()
            .unwrap_or(0);
        let mut best: Option<(usize, f64)> = None;
        for r in 0..=reach {
            for dx in -r..=r {
                for dy in -r..=r {
                    for dz in -r..=r {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                            continue;
                        }
                        let Some(ids) = self.cells.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) else { continue };
                        for &i in ids {
                            if !keep(i) {
                                continue;
                            }
                            let d = dist2(self.points[i], q);
                            if best.is_none_or(|(bi, bd)| d < bd || (d == bd && i < bi)) {
                                best = Some((i, d));
                            }
                        }
                    }
                }
            }
            // Anything in ring r + 1 is at least r cell widths away.
            if let Some((_, bd)) = best {
                let bound = r as f64 * self.cell;
                if bd < bound * bound {
                    break;
                }
            }
        }
        best
    }

    pub fn nearest(&self, q: V3) -> Option<(usize, f64)> {
        self.nearest_where(q, |_| true)
    }
}
