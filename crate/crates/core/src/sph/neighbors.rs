//! Uniform cell grid for fixed-radius neighbour queries.
//!
//! Particles are bucketed with a counting sort, so the iteration order over a
//! query (cells in z, y, x order, particle index ascending inside a cell) is a
//! pure function of the input positions.

use crate::case::Vec3;

#[derive(Debug, Clone)]
pub struct NeighborGrid {
    origin: Vec3,
    cell_size: f64,
    dims: [usize; 3],
    cell_start: Vec<u32>,
    sorted: Vec<u32>,
}

impl NeighborGrid {
    /// Bucket `positions` into cubic cells of edge `cell_size` (normally the
    /// kernel support radius 2h).
    pub fn build(positions: &[Vec3], cell_size: f64) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for p in positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        if positions.is_empty() {
            lo = Vec3::zeros();
            hi = Vec3::zeros();
        }
        let mut dims = [1usize; 3];
        for a in 0..3 {
            dims[a] = ((hi[a] - lo[a]) / cell_size).floor() as usize + 1;
        }
        let ncell = dims[0] * dims[1] * dims[2];
        let mut grid = Self {
            origin: lo,
            cell_size,
            dims,
            cell_start: vec![0; ncell + 1],
            sorted: vec![0; positions.len()],
        };
        let keys: Vec<usize> = positions.iter().map(|p| grid.cell_index(p)).collect();
        for &k in &keys {
            grid.cell_start[k + 1] += 1;
        }
        for c in 0..ncell {
            grid.cell_start[c + 1] += grid.cell_start[c];
        }
        let mut fill = grid.cell_start.clone();
        for (i, &k) in keys.iter().enumerate() {
            grid.sorted[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        grid
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    fn coords(&self, p: &Vec3) -> [i64; 3] {
        let mut c = [0i64; 3];
        for a in 0..3 {
            c[a] = ((p[a] - self.origin[a]) / self.cell_size).floor() as i64;
        }
        c
    }

    fn cell_index(&self, p: &Vec3) -> usize {
        let c = self.coords(p);
        let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
        let (x, y, z) = (clamp(c[0], self.dims[0]), clamp(c[1], self.dims[1]), clamp(c[2], self.dims[2]));
        (z * self.dims[1] + y) * self.dims[0] + x
    }

    /// Visit every particle in the 3×3×3 block of cells around `p`. Points may
    /// lie outside the indexed box.
    pub fn for_each_candidate(&self, p: &Vec3, mut f: impl FnMut(usize)) {
        let c = self.coords(p);
        for dz in -1..=1 {
            let z = c[2] + dz;
            if z < 0 || z >= self.dims[2] as i64 {
                continue;
            }
            for dy in -1..=1 {
                let y = c[1] + dy;
                if y < 0 || y >= self.dims[1] as i64 {
                    continue;
                }
                for dx in -1..=1 {
                    let x = c[0] + dx;
                    if x < 0 || x >= self.dims[0] as i64 {
                        continue;
                    }
                    let cell = (z as usize * self.dims[1] + y as usize) * self.dims[0] + x as usize;
                    let (s, e) = (self.cell_start[cell] as usize, self.cell_start[cell + 1] as usize);
                    for &j in &self.sorted[s..e] {
                        f(j as usize);
                    }
                }
            }
        }
    }

    /// Visit each indexed particle `j` with `|p − x_j| < radius`, passing
    /// `(j, p − x_j, |p − x_j|)`. `radius` must not exceed the cell size.
    pub fn for_each_within(
        &self,
        positions: &[Vec3],
        p: &Vec3,
        radius: f64,
        mut f: impl FnMut(usize, Vec3, f64),
    ) {
        debug_assert!(radius <= self.cell_size * (1.0 + 1e-12));
        let r2 = radius * radius;
        self.for_each_candidate(p, |j| {
            let d = p - positions[j];
            let d2 = d.norm_squared();
            if d2 < r2 {
                f(j, d, d2.sqrt());
            }
        });
    }

    /// Neighbour indices of particle `i` (excluding `i`), sorted ascending.
    pub fn neighbors_of(&self, positions: &[Vec3], i: usize, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(positions, &positions[i], radius, |j, _, _| {
            if j != i {
                out.push(j);
            }
        });
        out.sort_unstable();
        out
    }

    /// Distance from `p` to the nearest indexed particle within the cell
    /// size, if any.
    pub fn nearest_within(&self, positions: &[Vec3], p: &Vec3) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        self.for_each_within(positions, p, self.cell_size, |j, _, r| {
            if best.is_none_or(|(_, b)| r < b) {
                best = Some((j, r));
            }
        });
        best
    }
}

/// O(N²) reference neighbour search; only meant for testing.
pub fn brute_force_neighbors(positions: &[Vec3], radius: f64) -> Vec<Vec<usize>> {
    let r2 = radius * radius;
    positions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            positions
                .iter()
                .enumerate()
                .filter(|&(j, q)| j != i && (p - q).norm_squared() < r2)
                .map(|(j, _)| j)
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_grid_has_no_neighbours() {
        let grid = NeighborGrid::build(&[], 1.0);
        let mut hits = 0;
        grid.for_each_candidate(&Vec3::zeros(), |_| hits += 1);
        assert_eq!(hits, 0);
    }

    #[test]
    fn query_outside_the_box_is_fine() {
        let pts = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(0.5, 0.0, 0.0)];
        let grid = NeighborGrid::build(&pts, 1.0);
        assert_eq!(grid.nearest_within(&pts, &Vec3::new(-0.9, 0.0, 0.0)).map(|x| x.0), Some(0));
        assert!(grid.nearest_within(&pts, &Vec3::new(-5.0, 0.0, 0.0)).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn grid_matches_brute_force(
            pts in prop::collection::vec((0.0f64..2.0, 0.0f64..1.0, 0.0f64..1.5), 1..300),
            radius in 0.05f64..0.5,
            flat in any::<bool>(),
        ) {
            let positions: Vec<Vec3> = pts.iter().map(|&(x, y, z)| Vec3::new(x, if flat { 0.0 } else { y }, z)).collect();
            let grid = NeighborGrid::build(&positions, radius);
            let brute = brute_force_neighbors(&positions, radius);
            for i in 0..positions.len() {
                prop_assert_eq!(&grid.neighbors_of(&positions, i, radius), &brute[i]);
            }
        }
    }
}
