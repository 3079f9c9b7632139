//! Dense internal form of a [`ConicProgram`] shared by the bundled solvers.

use nalgebra::{DMatrix, DVector};

use super::program::{Cone, ConicProgram, Var};
use super::BlockValue;

#[derive(Clone, Copy, Debug)]
pub(crate) enum Loc {
    Free(usize),
    Nonneg(usize),
    Psd(usize),
}

/// A point of the product space `R^nf × R^nl × S^{n1} × …`.
#[derive(Clone, Debug)]
pub(crate) struct Point {
    pub f: DVector<f64>,
    pub l: DVector<f64>,
    pub p: Vec<DMatrix<f64>>,
}

impl Point {
    pub fn zeros(nf: usize, nl: usize, sides: &[usize]) -> Self {
        Point {
            f: DVector::zeros(nf),
            l: DVector::zeros(nl),
            p: sides.iter().map(|&n| DMatrix::zeros(n, n)).collect(),
        }
    }

    /// Cone identity: zero on free coordinates, ones and identities elsewhere.
    pub fn unit(nf: usize, nl: usize, sides: &[usize]) -> Self {
        Point {
            f: DVector::zeros(nf),
            l: DVector::from_element(nl, 1.0),
            p: sides.iter().map(|&n| DMatrix::identity(n, n)).collect(),
        }
    }

    pub fn dot(&self, o: &Point) -> f64 {
        self.f.dot(&o.f)
            + self.l.dot(&o.l)
            + self
                .p
                .iter()
                .zip(&o.p)
                .map(|(a, b)| a.dot(b))
                .sum::<f64>()
    }

    /// Inner product restricted to the cone (non-free) coordinates.
    pub fn dot_cone(&self, o: &Point) -> f64 {
        self.l.dot(&o.l)
            + self
                .p
                .iter()
                .zip(&o.p)
                .map(|(a, b)| a.dot(b))
                .sum::<f64>()
    }

    pub fn axpy(&mut self, a: f64, x: &Point) {
        self.f.axpy(a, &x.f, 1.0);
        self.l.axpy(a, &x.l, 1.0);
        for (m, xm) in self.p.iter_mut().zip(&x.p) {
            *m += xm * a;
        }
    }

    pub fn scaled(&self, a: f64) -> Point {
        Point {
            f: &self.f * a,
            l: &self.l * a,
            p: self.p.iter().map(|m| m * a).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

pub(crate) struct Data {
    pub nf: usize,
    pub nl: usize,
    pub sides: Vec<usize>,
    pub locs: Vec<Loc>,
    pub m: usize,
    pub rows_f: Vec<Vec<(usize, f64)>>,
    pub rows_l: Vec<Vec<(usize, f64)>>,
    /// Column view of `rows_l`: `(row, value)` per nonnegative coordinate.
    pub cols_l: Vec<Vec<(usize, f64)>>,
    /// Per PSD block: `(row, full symmetric entries)` for every row touching it.
    pub rows_p: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>>,
    pub c: Point,
    pub b: DVector<f64>,
    /// Row `i` of the internal problem is row `i` of the program times `row_scale[i]`.
    pub row_scale: DVector<f64>,
    /// The internal cost is the program cost divided by `cost_scale`.
    pub cost_scale: f64,
}

fn sym_entries(i: usize, j: usize, c: f64) -> impl Iterator<Item = (usize, usize, f64)> {
    let pair = if i == j {
        [(i, i, c), (0, 0, 0.0)]
    } else {
        [(i, j, 0.5 * c), (j, i, 0.5 * c)]
    };
    pair.into_iter().filter(|(_, _, v)| *v != 0.0)
}

impl Data {
    pub fn from_program(prog: &ConicProgram, scale: bool) -> Data {
        let mut nf = 0;
        let mut nl = 0;
        let mut sides = Vec::new();
        let locs: Vec<Loc> = prog
            .blocks()
            .iter()
            .map(|b| match b.cone {
                Cone::Free => {
                    nf += b.size;
                    Loc::Free(nf - b.size)
                }
                Cone::Nonneg => {
                    nl += b.size;
                    Loc::Nonneg(nl - b.size)
                }
                Cone::Psd => {
                    sides.push(b.size);
                    Loc::Psd(sides.len() - 1)
                }
            })
            .collect();
        let m = prog.num_rows();
        let mut rows_f = vec![Vec::new(); m];
        let mut rows_l = vec![Vec::new(); m];
        let mut per_block: Vec<Vec<Vec<(usize, usize, f64)>>> =
            sides.iter().map(|_| vec![Vec::new(); m]).collect();

        let place = |v: &Var| -> (Loc, usize, usize) {
            match locs[v.block.0] {
                Loc::Free(off) => (Loc::Free(off + v.i), 0, 0),
                Loc::Nonneg(off) => (Loc::Nonneg(off + v.i), 0, 0),
                Loc::Psd(k) => (Loc::Psd(k), v.i, v.j),
            }
        };

        for (r, eq) in prog.equalities().iter().enumerate() {
            for (v, c) in &eq.terms {
                match place(v) {
                    (Loc::Free(i), _, _) => rows_f[r].push((i, *c)),
                    (Loc::Nonneg(i), _, _) => rows_l[r].push((i, *c)),
                    (Loc::Psd(k), i, j) => per_block[k][r].extend(sym_entries(i, j, *c)),
                }
            }
        }
        let mut c = Point::zeros(nf, nl, &sides);
        for (v, coef) in prog.objective() {
            match place(v) {
                (Loc::Free(i), _, _) => c.f[i] += coef,
                (Loc::Nonneg(i), _, _) => c.l[i] += coef,
                (Loc::Psd(k), i, j) => {
                    for (a, bb, val) in sym_entries(i, j, *coef) {
                        c.p[k][(a, bb)] += val;
                    }
                }
            }
        }
        let b = DVector::from_iterator(m, prog.equalities().iter().map(|e| e.rhs));

        let mut row_scale = DVector::from_element(m, 1.0);
        let mut cost_scale = 1.0;
        if scale {
            for r in 0..m {
                let mut sq: f64 = rows_f[r].iter().map(|(_, v)| v * v).sum();
                sq += rows_l[r].iter().map(|(_, v)| v * v).sum::<f64>();
                for blk in &per_block {
                    sq += blk[r].iter().map(|(_, _, v)| v * v).sum::<f64>();
                }
                if sq > 0.0 {
                    row_scale[r] = 1.0 / sq.sqrt();
                }
            }
            let cmax = c
                .f
                .amax()
                .max(c.l.amax())
                .max(c.p.iter().map(|m| m.amax()).fold(0.0, f64::max));
            if cmax > 0.0 {
                cost_scale = cmax.max(1e-3);
            }
        }

        let mut data = Data {
            nf,
            nl,
            sides,
            locs,
            m,
            rows_f,
            rows_l,
            cols_l: vec![Vec::new(); nl],
            rows_p: Vec::new(),
            c: c.scaled(1.0 / cost_scale),
            b: b.component_mul(&row_scale),
            row_scale: row_scale.clone(),
            cost_scale,
        };
        for r in 0..m {
            let s = row_scale[r];
            data.rows_f[r].iter_mut().for_each(|(_, v)| *v *= s);
            data.rows_l[r].iter_mut().for_each(|(_, v)| *v *= s);
            for &(i, v) in &data.rows_l[r] {
                data.cols_l[i].push((r, v));
            }
        }
        data.rows_p = per_block
            .into_iter()
            .map(|rows| {
                rows.into_iter()
                    .enumerate()
                    .filter(|(_, e)| !e.is_empty())
                    .map(|(r, mut e)| {
                        e.iter_mut().for_each(|(_, _, v)| *v *= row_scale[r]);
                        (r, e)
                    })
                    .collect()
            })
            .collect();
        data
    }

    pub fn zero_point(&self) -> Point {
        Point::zeros(self.nf, self.nl, &self.sides)
    }

    pub fn unit_point(&self) -> Point {
        Point::unit(self.nf, self.nl, &self.sides)
    }

    /// Barrier parameter `ν`: nonneg count plus PSD sides.
    pub fn degree(&self) -> usize {
        self.nl + self.sides.iter().sum::<usize>()
    }

    pub fn a_mul(&self, x: &Point) -> DVector<f64> {
        let mut out = DVector::zeros(self.m);
        for r in 0..self.m {
            let mut v = 0.0;
            for (i, c) in &self.rows_f[r] {
                v += c * x.f[*i];
            }
            for (i, c) in &self.rows_l[r] {
                v += c * x.l[*i];
            }
            out[r] = v;
        }
        for (k, rows) in self.rows_p.iter().enumerate() {
            let xm = &x.p[k];
            for (r, ents) in rows {
                out[*r] += ents.iter().map(|(a, b, c)| c * xm[(*a, *b)]).sum::<f64>();
            }
        }
        out
    }

    pub fn at_mul(&self, y: &DVector<f64>) -> Point {
        let mut out = self.zero_point();
        for r in 0..self.m {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            for (i, c) in &self.rows_f[r] {
                out.f[*i] += c * yr;
            }
            for (i, c) in &self.rows_l[r] {
                out.l[*i] += c * yr;
            }
        }
        for (k, rows) in self.rows_p.iter().enumerate() {
            let om = &mut out.p[k];
            for (r, ents) in rows {
                let yr = y[*r];
                for (a, b, c) in ents {
                    om[(*a, *b)] += c * yr;
                }
            }
        }
        out
    }

    /// Undo the internal scaling of a primal point: blocks in program order.
    pub fn export_primal(&self, x: &Point) -> Vec<BlockValue> {
        self.export(x, 1.0)
    }

    /// Undo the internal scaling of a dual slack.
    pub fn export_slack(&self, s: &Point) -> Vec<BlockValue> {
        self.export(s, self.cost_scale)
    }

    fn export(&self, x: &Point, factor: f64) -> Vec<BlockValue> {
        self.locs
            .iter()
            .enumerate()
            .map(|(blk, loc)| match loc {
                Loc::Free(off) => {
                    let size = self.block_size(blk);
                    BlockValue::Vector(
                        x.f.rows(*off, size).iter().map(|v| v * factor).collect(),
                    )
                }
                Loc::Nonneg(off) => {
                    let size = self.block_size(blk);
                    BlockValue::Vector(
                        x.l.rows(*off, size).iter().map(|v| v * factor).collect(),
                    )
                }
                Loc::Psd(k) => BlockValue::Matrix(&x.p[*k] * factor),
            })
            .collect()
    }

    fn block_size(&self, blk: usize) -> usize {
        // size = next offset of the same kind minus this offset
        let (this, next) = match self.locs[blk] {
            Loc::Free(off) => {
                let next = self.locs[blk + 1..]
                    .iter()
                    .find_map(|l| if let Loc::Free(o) = l { Some(*o) } else { None })
                    .unwrap_or(self.nf);
                (off, next)
            }
            Loc::Nonneg(off) => {
                let next = self.locs[blk + 1..]
                    .iter()
                    .find_map(|l| if let Loc::Nonneg(o) = l { Some(*o) } else { None })
                    .unwrap_or(self.nl);
                (off, next)
            }
            Loc::Psd(k) => (0, self.sides[k]),
        };
        next - this
    }

    /// Dual multipliers of the program rows from internal ones.
    pub fn export_dual_rows(&self, y: &DVector<f64>) -> Vec<f64> {
        y.iter()
            .zip(self.row_scale.iter())
            .map(|(v, s)| v * s * self.cost_scale)
            .collect()
    }
}
