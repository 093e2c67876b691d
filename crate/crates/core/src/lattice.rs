//! Dense fields on integer rectangles of `Z²`.
//!
//! A [`Grid`] stores values on an inclusive box; everything outside the box is
//! zero. Storage is row-major with `x` as the row index.

use serde::{Deserialize, Serialize};

use crate::numeric::CompensatedSum;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeBox {
    pub x_min: i32,
    pub x_max: i32,
    pub y_min: i32,
    pub y_max: i32,
}

impl LatticeBox {
    /// Box with the given inclusive bounds; `x_min <= x_max`, `y_min <= y_max`.
    pub fn new(x_min: i32, x_max: i32, y_min: i32, y_max: i32) -> Self {
        assert!(x_min <= x_max && y_min <= y_max, "empty lattice box");
        Self { x_min, x_max, y_min, y_max }
    }

    pub fn point(p: [i32; 2]) -> Self {
        Self::new(p[0], p[0], p[1], p[1])
    }

    /// Square box `[-r, r]²`.
    pub fn centered(r: i32) -> Self {
        Self::new(-r, r, -r, r)
    }

    pub fn width(&self) -> usize {
        (self.x_max - self.x_min + 1) as usize
    }

    pub fn height(&self) -> usize {
        (self.y_max - self.y_min + 1) as usize
    }

    pub fn len(&self) -> usize {
        self.width() * self.height()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, p: [i32; 2]) -> bool {
        (self.x_min..=self.x_max).contains(&p[0]) && (self.y_min..=self.y_max).contains(&p[1])
    }

    pub fn contains_box(&self, other: &LatticeBox) -> bool {
        self.x_min <= other.x_min
            && self.x_max >= other.x_max
            && self.y_min <= other.y_min
            && self.y_max >= other.y_max
    }

    pub fn dilate(&self, r: i32) -> Self {
        Self::new(self.x_min - r, self.x_max + r, self.y_min - r, self.y_max + r)
    }

    pub fn union(&self, other: &LatticeBox) -> Self {
        Self::new(
            self.x_min.min(other.x_min),
            self.x_max.max(other.x_max),
            self.y_min.min(other.y_min),
            self.y_max.max(other.y_max),
        )
    }

    pub fn points(&self) -> impl Iterator<Item = [i32; 2]> + '_ {
        (self.x_min..=self.x_max).flat_map(move |x| (self.y_min..=self.y_max).map(move |y| [x, y]))
    }

    #[inline]
    fn index(&self, p: [i32; 2]) -> usize {
        (p[0] - self.x_min) as usize * self.height() + (p[1] - self.y_min) as usize
    }
}

/// Real values on a [`LatticeBox`], zero outside.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    bbox: LatticeBox,
    data: Vec<f64>,
}

impl Grid {
    pub fn zeros(bbox: LatticeBox) -> Self {
        Self { bbox, data: vec![0.0; bbox.len()] }
    }

    pub fn from_fn(bbox: LatticeBox, mut f: impl FnMut([i32; 2]) -> f64) -> Self {
        let data = bbox.points().map(&mut f).collect();
        Self { bbox, data }
    }

    pub fn point_mass(p: [i32; 2]) -> Self {
        Self { bbox: LatticeBox::point(p), data: vec![1.0] }
    }

    pub fn bbox(&self) -> LatticeBox {
        self.bbox
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, p: [i32; 2]) -> f64 {
        if self.bbox.contains(p) {
            self.data[self.bbox.index(p)]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, p: [i32; 2], v: f64) {
        let i = self.bbox.index(p);
        self.data[i] = v;
    }

    /// Row `x` of the box as a slice over `y_min..=y_max`.
    pub fn row(&self, x: i32) -> &[f64] {
        let h = self.bbox.height();
        let start = (x - self.bbox.x_min) as usize * h;
        &self.data[start..start + h]
    }

    pub fn iter(&self) -> impl Iterator<Item = ([i32; 2], f64)> + '_ {
        self.bbox.points().zip(self.data.iter().copied())
    }

    pub fn sum(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        acc.extend(self.data.iter().copied());
        acc.value()
    }

    pub fn sum_sq(&self) -> f64 {
        let mut acc = CompensatedSum::new();
        acc.extend(self.data.iter().map(|v| v * v));
        acc.value()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// One transition of a step law: `out(y) = Σ_s p(s) in(y − s)`.
    ///
    /// `reach` must bound `|dx|` and `|dy|` of every step; the output box is the
    /// input box dilated by `reach`.
    pub fn transfer(&self, steps: &[(i32, i32, f64)], reach: i32) -> Grid {
        let out_box = self.bbox.dilate(reach);
        let mut out = Grid::zeros(out_box);
        let h_in = self.bbox.height();
        let h_out = out_box.height();
        for (i, row) in self.data.chunks_exact(h_in).enumerate() {
            for &(dx, dy, p) in steps {
                let r = i as i32 + reach + dx;
                let c = (reach + dy) as usize;
                let start = r as usize * h_out + c;
                let dst = &mut out.data[start..start + h_in];
                for (d, s) in dst.iter_mut().zip(row) {
                    *d += p * s;
                }
            }
        }
        out
    }

    /// Smallest sub-box holding every entry with `|v| >= threshold`, or `None`
    /// if no entry reaches the threshold.
    pub fn core_box(&self, threshold: f64) -> Option<LatticeBox> {
        let h = self.bbox.height();
        let mut rows = None::<(usize, usize)>;
        let mut cols = None::<(usize, usize)>;
        for (i, row) in self.data.chunks_exact(h).enumerate() {
            let first = row.iter().position(|v| v.abs() >= threshold);
            if let Some(f) = first {
                let l = row.iter().rposition(|v| v.abs() >= threshold).unwrap_or(f);
                rows = Some(rows.map_or((i, i), |(a, _)| (a, i)));
                cols = Some(cols.map_or((f, l), |(a, b)| (a.min(f), b.max(l))));
            }
        }
        let ((r0, r1), (c0, c1)) = (rows?, cols?);
        Some(LatticeBox::new(
            self.bbox.x_min + r0 as i32,
            self.bbox.x_min + r1 as i32,
            self.bbox.y_min + c0 as i32,
            self.bbox.y_min + c1 as i32,
        ))
    }

    /// Restriction to a sub-box of the current box.
    pub fn crop(&self, sub: LatticeBox) -> Grid {
        debug_assert!(self.bbox.contains_box(&sub));
        if sub == self.bbox {
            return self.clone();
        }
        let h = sub.height();
        let mut data = Vec::with_capacity(sub.len());
        for x in sub.x_min..=sub.x_max {
            let row = self.row(x);
            let c0 = (sub.y_min - self.bbox.y_min) as usize;
            data.extend_from_slice(&row[c0..c0 + h]);
        }
        Grid { bbox: sub, data }
    }
}


/// How far a growing field is allowed to shed negligible boundary mass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Keep the full reachable box.
    #[default]
    Exact,
    /// After each step, drop boundary rows and columns whose entries are all
    /// below `tau` times the field maximum.
    Relative(f64),
}

impl Truncation {
    /// Box to keep for `grid`; the whole box when exact.
    pub fn keep_box(&self, grid: &Grid) -> LatticeBox {
        match *self {
            Truncation::Exact => grid.bbox(),
            Truncation::Relative(tau) => {
                let thr = tau * grid.max_abs();
                if thr > 0.0 {
                    grid.core_box(thr).unwrap_or(grid.bbox())
                } else {
                    grid.bbox()
                }
            }
        }
    }
}
