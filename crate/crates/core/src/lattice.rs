//! Regular-lattice geometry.
//!
//! Sites are numbered in row-major order. Row index grows southwards and
//! column index grows eastwards, so the offset `(0, 1)` is the eastern
//! neighbour and `(1, 1)` the south-eastern one.

use crate::error::{Error, Result};

/// A rectangular grid of `nrows * ncols` sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Lattice {
    nrows: usize,
    ncols: usize,
}

impl Lattice {
    pub fn new(nrows: usize, ncols: usize) -> Result<Self> {
        if nrows == 0 || ncols == 0 {
            return Err(Error::invalid(format!(
                "lattice dimensions must be positive, got {nrows}x{ncols}"
            )));
        }
        Ok(Lattice { nrows, ncols })
    }

    /// Square lattice with `n` sites; `n` must be a perfect square.
    pub fn square(n: usize) -> Result<Self> {
        let side = exact_sqrt(n)
            .ok_or_else(|| Error::invalid(format!("n = {n} is not a perfect square")))?;
        Lattice::new(side, side)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Number of sites.
    pub fn n(&self) -> usize {
        self.nrows * self.ncols
    }

    pub fn coords(&self, site: usize) -> (usize, usize) {
        debug_assert!(site < self.n());
        (site / self.ncols, site % self.ncols)
    }

    pub fn site(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.nrows && col < self.ncols);
        row * self.ncols + col
    }

    /// Site reached from `site` by `offset`, or `None` when it falls off the grid.
    pub fn shift(&self, site: usize, offset: Offset) -> Option<usize> {
        let (row, col) = self.coords(site);
        let r = row as isize + offset.drow;
        let c = col as isize + offset.dcol;
        if r < 0 || c < 0 || r >= self.nrows as isize || c >= self.ncols as isize {
            None
        } else {
            Some(self.site(r as usize, c as usize))
        }
    }

    /// Distance from `site` to the nearest border, in Chebyshev steps.
    pub fn border_distance(&self, site: usize) -> usize {
        let (row, col) = self.coords(site);
        row.min(col)
            .min(self.nrows - 1 - row)
            .min(self.ncols - 1 - col)
    }
}

pub fn build_lattice(nrows: usize, ncols: usize) -> Result<Lattice> {
    Lattice::new(nrows, ncols)
}

/// Relative position of a neighbour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Offset {
    pub drow: isize,
    pub dcol: isize,
}

impl Offset {
    pub const fn new(drow: isize, dcol: isize) -> Self {
        Offset { drow, dcol }
    }

    pub fn squared_distance(&self) -> isize {
        self.drow * self.drow + self.dcol * self.dcol
    }

    /// Chebyshev radius of the offset.
    pub fn ring(&self) -> usize {
        self.drow.unsigned_abs().max(self.dcol.unsigned_abs())
    }
}

/// Ordered set of the `m` nearest relative positions around a site.
///
/// Offsets are sorted by Euclidean distance, then `drow`, then `dcol`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NeighborhoodTemplate {
    offsets: Vec<Offset>,
    ring: usize,
}

impl NeighborhoodTemplate {
    /// Full `(2R+1) x (2R+1)` window minus its centre; `m + 1` must be an odd square.
    pub fn new(m: usize) -> Result<Self> {
        let side = exact_sqrt(m + 1).filter(|s| *s >= 3 && s % 2 == 1).ok_or_else(|| {
            Error::invalid(format!(
                "unsupported template size m = {m}; supported values are 8, 24, 48, 80, ... \
                 (m + 1 an odd perfect square)"
            ))
        })?;
        let ring = (side / 2) as isize;
        let mut offsets: Vec<Offset> = (-ring..=ring)
            .flat_map(|dr| (-ring..=ring).map(move |dc| Offset::new(dr, dc)))
            .filter(|o| *o != Offset::new(0, 0))
            .collect();
        offsets.sort_by_key(|o| (o.squared_distance(), o.drow, o.dcol));
        Ok(NeighborhoodTemplate {
            offsets,
            ring: ring as usize,
        })
    }

    pub fn m(&self) -> usize {
        self.offsets.len()
    }

    pub fn ring(&self) -> usize {
        self.ring
    }

    pub fn offsets(&self) -> &[Offset] {
        &self.offsets
    }

    pub fn position(&self, offset: Offset) -> Option<usize> {
        self.offsets.iter().position(|o| *o == offset)
    }
}

pub fn neighbor_template(m: usize) -> Result<NeighborhoodTemplate> {
    NeighborhoodTemplate::new(m)
}

/// Sites whose full ring-`ring` window lies inside the grid, in index order.
pub fn interior_sites(lattice: &Lattice, ring: usize) -> Result<Vec<usize>> {
    if 2 * ring >= lattice.nrows().min(lattice.ncols()) {
        return Err(Error::invalid(format!(
            "ring {ring} leaves no interior on a {}x{} lattice",
            lattice.nrows(),
            lattice.ncols()
        )));
    }
    let mut sites = Vec::with_capacity((lattice.nrows() - 2 * ring) * (lattice.ncols() - 2 * ring));
    for row in ring..lattice.nrows() - ring {
        for col in ring..lattice.ncols() - ring {
            sites.push(lattice.site(row, col));
        }
    }
    Ok(sites)
}

/// Absolute indices of the template neighbours of `site`, in template order.
pub fn window_indices(
    lattice: &Lattice,
    site: usize,
    template: &NeighborhoodTemplate,
) -> Result<Vec<usize>> {
    if site >= lattice.n() {
        return Err(Error::invalid(format!(
            "site {site} outside lattice with {} sites",
            lattice.n()
        )));
    }
    if lattice.border_distance(site) < template.ring() {
        let (row, col) = lattice.coords(site);
        return Err(Error::OutOfBounds { site, row, col });
    }
    Ok(template
        .offsets()
        .iter()
        .map(|o| lattice.shift(site, *o).expect("window checked against border"))
        .collect())
}

pub(crate) fn exact_sqrt(n: usize) -> Option<usize> {
    let s = (n as f64).sqrt().round() as usize;
    (s * s == n).then_some(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_dimensions() {
        assert_eq!(build_lattice(25, 25).unwrap().n(), 625);
        assert_eq!(build_lattice(1, 1).unwrap().n(), 1);
        assert!(build_lattice(0, 3).is_err());
        let l = build_lattice(2, 3).unwrap();
        assert_eq!(l.coords(4), (1, 1));
        assert_eq!(l.site(1, 1), 4);
    }

    // Oracle: enumerate the window independently and sort by the canonical key.
    fn enumerate_sorted(side: isize) -> Vec<(isize, isize)> {
        let h = side / 2;
        let mut v = Vec::new();
        for dr in -h..=h {
            for dc in -h..=h {
                if dr != 0 || dc != 0 {
                    v.push((dr, dc));
                }
            }
        }
        v.sort_by(|a, b| {
            let da = ((a.0 * a.0 + a.1 * a.1) as f64).sqrt();
            let db = ((b.0 * b.0 + b.1 * b.1) as f64).sqrt();
            da.partial_cmp(&db).unwrap().then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1))
        });
        v
    }

    #[test]
    fn template_sizes_and_order() {
        let t8 = neighbor_template(8).unwrap();
        assert_eq!(t8.m(), 8);
        assert_eq!(t8.ring(), 1);
        assert_eq!(t8.offsets()[0], Offset::new(-1, 0));

        let t24 = neighbor_template(24).unwrap();
        assert_eq!(t24.ring(), 2);
        let expected = enumerate_sorted(5);
        let got: Vec<_> = t24.offsets().iter().map(|o| (o.drow, o.dcol)).collect();
        assert_eq!(got, expected);

        assert_eq!(neighbor_template(48).unwrap().ring(), 3);
        assert_eq!(neighbor_template(48).unwrap(), neighbor_template(48).unwrap());
    }

    #[test]
    fn unsupported_template_sizes() {
        for m in [0, 3, 7, 15, 25, 35] {
            let err = neighbor_template(m).unwrap_err();
            assert!(err.to_string().contains("8, 24, 48"), "{err}");
        }
    }

    #[test]
    fn interior_counts() {
        let l = build_lattice(25, 25).unwrap();
        assert_eq!(interior_sites(&l, 2).unwrap().len(), 441);
        assert_eq!(interior_sites(&l, 3).unwrap().len(), 361);
        let small = build_lattice(3, 3).unwrap();
        assert_eq!(interior_sites(&small, 1).unwrap(), vec![4]);
        assert!(interior_sites(&small, 2).is_err());
    }

    #[test]
    fn interior_sets_are_nested() {
        let l = build_lattice(11, 14).unwrap();
        for r in 0..5 {
            let outer = interior_sites(&l, r).unwrap();
            let inner = interior_sites(&l, r + 1).unwrap();
            assert!(inner.iter().all(|s| outer.contains(s)));
        }
    }

    #[test]
    fn window_of_small_grid() {
        let l = build_lattice(3, 3).unwrap();
        let t = neighbor_template(8).unwrap();
        assert_eq!(window_indices(&l, 4, &t).unwrap(), vec![1, 3, 5, 7, 0, 2, 6, 8]);
    }

    #[test]
    fn window_on_large_grid() {
        let l = build_lattice(25, 25).unwrap();
        let t = neighbor_template(24).unwrap();
        let site = l.site(2, 2);
        let mut w = window_indices(&l, site, &t).unwrap();
        assert_eq!(w.len(), 24);
        assert!(!w.contains(&site));
        w.sort();
        w.dedup();
        assert_eq!(w.len(), 24);

        let err = window_indices(&l, l.site(0, 0), &t).unwrap_err();
        assert!(matches!(err, Error::OutOfBounds { .. }));
    }
}
