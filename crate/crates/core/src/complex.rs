//! Oriented cubical complexes over Z_N: spatial tori, spacetime suspensions and
//! half-shifted duals, plus the chain/cochain arrays living on them.
//!
//! Cells are identified geometrically by a base vertex and an axis bitmask.
//! Incidence numbers are accumulated, so a direction of length one makes the
//! two opposite faces of a cell cancel.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the total number of cells of a complex.
pub const DEFAULT_MAX_CELLS: usize = 200_000;

/// A cubical cell: base vertex coordinates plus the set of spanned axes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub base: Vec<usize>,
    pub axes: u32,
}

impl Cell {
    pub fn degree(&self) -> usize {
        self.axes.count_ones() as usize
    }

    pub fn axis_list(&self) -> Vec<usize> {
        (0..32).filter(|k| self.axes >> k & 1 == 1).collect()
    }
}

/// Position of a suspension cell: the spatial cell it comes from, its time
/// index and whether it is vertical (`a × [i, i+1]`) or horizontal (`b(i)`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SliceTag {
    pub spatial: usize,
    pub time: usize,
    pub vertical: bool,
}

#[derive(Clone, Debug)]
pub struct SuspensionData {
    pub spatial: Arc<CellComplex>,
    pub m: usize,
}

/// Finite oriented cell complex with accumulated incidence numbers.
#[derive(Clone, Debug)]
pub struct CellComplex {
    dim: usize,
    lengths: Vec<usize>,
    cells: Vec<Vec<Cell>>,
    lookup: Vec<HashMap<Cell, u32>>,
    faces: Vec<Vec<Vec<(u32, i32)>>>,
    cofaces: Vec<Vec<Vec<(u32, i32)>>>,
    /// Sign of each cell relative to the reference orientation: the standard
    /// cubical one for tori, the product formula over `spatial` for suspensions.
    orientation: Vec<Vec<i8>>,
    suspension: Option<SuspensionData>,
}

fn binom(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r: usize = 1;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// Axis masks of size `p` in lexicographic order of their sorted axis lists.
pub fn masks_of_size(n: usize, p: usize) -> Vec<u32> {
    let mut out: Vec<u32> = (0u32..(1u32 << n))
        .filter(|m| m.count_ones() as usize == p)
        .collect();
    out.sort_by_key(|m| {
        (0..n)
            .filter(|k| m >> k & 1 == 1)
            .collect::<Vec<usize>>()
    });
    out
}

fn vertex_coords(lengths: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = lengths.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut x = vec![0usize; lengths.len()];
    for _ in 0..total {
        out.push(x.clone());
        for k in (0..lengths.len()).rev() {
            x[k] += 1;
            if x[k] < lengths[k] {
                break;
            }
            x[k] = 0;
        }
    }
    out
}

impl CellComplex {
    fn finish(
        dim: usize,
        lengths: Vec<usize>,
        cells: Vec<Vec<Cell>>,
        raw_faces: Vec<Vec<Vec<(u32, i32)>>>,
        orientation: Vec<Vec<i8>>,
        suspension: Option<SuspensionData>,
    ) -> Self {
        let lookup = cells
            .iter()
            .map(|cs| {
                cs.iter()
                    .enumerate()
                    .map(|(i, c)| (c.clone(), i as u32))
                    .collect()
            })
            .collect();
        let mut faces: Vec<Vec<Vec<(u32, i32)>>> = Vec::with_capacity(dim + 1);
        for per_cell in raw_faces {
            faces.push(
                per_cell
                    .into_iter()
                    .map(|list| {
                        let mut acc: Vec<(u32, i32)> = Vec::new();
                        for (f, e) in list {
                            match acc.iter_mut().find(|(g, _)| *g == f) {
                                Some(slot) => slot.1 += e,
                                None => acc.push((f, e)),
                            }
                        }
                        acc.retain(|&(_, e)| e != 0);
                        acc.sort_unstable();
                        acc
                    })
                    .collect(),
            );
        }
        let mut cofaces: Vec<Vec<Vec<(u32, i32)>>> =
            cells.iter().map(|cs| vec![Vec::new(); cs.len()]).collect();
        for p in 1..=dim {
            for (c, list) in faces[p].iter().enumerate() {
                for &(b, e) in list {
                    cofaces[p - 1][b as usize].push((c as u32, e));
                }
            }
        }
        CellComplex {
            dim,
            lengths,
            cells,
            lookup,
            faces,
            cofaces,
            orientation,
            suspension,
        }
    }

    fn guard(count: usize, max_cells: usize) -> Result<()> {
        if count > max_cells {
            return Err(Error::SizeGuard {
                what: "cell complex",
                requested: count as u128,
                cap: max_cells as u128,
            });
        }
        Ok(())
    }

    /// Cubical torus with the given side lengths (a length of 1 is allowed and
    /// produces cancelling incidences).
    pub fn cubical_torus(lengths: &[usize], max_cells: usize) -> Result<Self> {
        let n = lengths.len();
        if n == 0 || n > 8 || lengths.iter().any(|&l| l == 0) {
            return Err(Error::InvalidParameter(format!(
                "torus lengths {lengths:?}"
            )));
        }
        let nv: usize = lengths.iter().product();
        let total: usize = (0..=n).map(|p| binom(n, p) * nv).sum();
        Self::guard(total, max_cells)?;
        let verts = vertex_coords(lengths);
        let masks: Vec<Vec<u32>> = (0..=n).map(|p| masks_of_size(n, p)).collect();
        let mut cells: Vec<Vec<Cell>> = vec![Vec::new(); n + 1];
        for p in 0..=n {
            for x in &verts {
                for &m in &masks[p] {
                    cells[p].push(Cell {
                        base: x.clone(),
                        axes: m,
                    });
                }
            }
        }
        let index = |x: &[usize], m: u32, p: usize| -> u32 {
            let mut lin = 0usize;
            for k in 0..n {
                lin = lin * lengths[k] + x[k];
            }
            let r = masks[p].iter().position(|&q| q == m).unwrap();
            (lin * masks[p].len() + r) as u32
        };
        let mut raw_faces: Vec<Vec<Vec<(u32, i32)>>> = vec![Vec::new(); n + 1];
        raw_faces[0] = vec![Vec::new(); cells[0].len()];
        for p in 1..=n {
            for c in &cells[p] {
                let mut list = Vec::with_capacity(2 * p);
                for (k, ax) in c.axis_list().into_iter().enumerate() {
                    let sign = if k % 2 == 0 { 1 } else { -1 };
                    let m = c.axes & !(1 << ax);
                    let mut up = c.base.clone();
                    up[ax] = (up[ax] + 1) % lengths[ax];
                    list.push((index(&up, m, p - 1), sign));
                    list.push((index(&c.base, m, p - 1), -sign));
                }
                raw_faces[p].push(list);
            }
        }
        let orientation = cells.iter().map(|cs| vec![1i8; cs.len()]).collect();
        Ok(Self::finish(
            n,
            lengths.to_vec(),
            cells,
            raw_faces,
            orientation,
            None,
        ))
    }

    /// Spatial torus `T_L^d`.
    pub fn build_torus(d: usize, l: usize) -> Result<Self> {
        Self::build_torus_capped(d, l, DEFAULT_MAX_CELLS)
    }

    pub fn build_torus_capped(d: usize, l: usize, max_cells: usize) -> Result<Self> {
        if !(1..=6).contains(&d) || l < 2 {
            return Err(Error::InvalidParameter(format!(
                "torus needs 1 <= d <= 6 and L >= 2 (got d={d}, L={l})"
            )));
        }
        Self::cubical_torus(&vec![l; d], max_cells)
    }

    /// Spacetime suspension `X × S¹_M`: horizontal cells `b(i)` then vertical
    /// cells `a × [i, i+1]`, each block ordered by time then spatial index.
    pub fn suspend(spatial: &Arc<CellComplex>, m: usize) -> Result<Self> {
        Self::suspend_capped(spatial, m, DEFAULT_MAX_CELLS)
    }

    pub fn suspend_capped(spatial: &Arc<CellComplex>, m: usize, max_cells: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("Trotter number M must be >= 1".into()));
        }
        if spatial.suspension.is_some() {
            return Err(Error::InvalidParameter("cannot suspend a suspension".into()));
        }
        let d = spatial.dim;
        let n = d + 1;
        let counts: Vec<usize> = (0..=n)
            .map(|p| {
                let h = if p <= d { spatial.count(p) } else { 0 };
                let v = if p >= 1 { spatial.count(p - 1) } else { 0 };
                m * (h + v)
            })
            .collect();
        Self::guard(counts.iter().sum(), max_cells)?;
        let tbit = 1u32 << d;
        let mut cells: Vec<Vec<Cell>> = vec![Vec::new(); n + 1];
        let mut orientation: Vec<Vec<i8>> = vec![Vec::new(); n + 1];
        let mut raw_faces: Vec<Vec<Vec<(u32, i32)>>> = vec![Vec::new(); n + 1];
        for p in 0..=n {
            let nh = if p <= d { spatial.count(p) } else { 0 };
            for i in 0..m {
                for b in 0..nh {
                    let sc = &spatial.cells[p][b];
                    let mut base = sc.base.clone();
                    base.push(i);
                    cells[p].push(Cell { base, axes: sc.axes });
                    orientation[p].push(1);
                    let list = if p == 0 {
                        Vec::new()
                    } else {
                        let nh_lo = spatial.count(p - 1);
                        spatial.faces[p][b]
                            .iter()
                            .map(|&(a, e)| ((i * nh_lo + a as usize) as u32, e))
                            .collect()
                    };
                    raw_faces[p].push(list);
                }
            }
            if p >= 1 {
                let q = p - 1;
                let nv = spatial.count(q);
                let nh_lo = if q <= d { spatial.count(q) } else { 0 };
                for i in 0..m {
                    for a in 0..nv {
                        let sc = &spatial.cells[q][a];
                        let mut base = sc.base.clone();
                        base.push(i);
                        cells[p].push(Cell {
                            base,
                            axes: sc.axes | tbit,
                        });
                        orientation[p].push(1);
                        let mut list: Vec<(u32, i32)> = Vec::new();
                        if q >= 1 {
                            // vertical (p-1)-cells start after the m·|C_q| horizontal ones
                            let base_v = m * nh_lo + i * spatial.count(q - 1);
                            for &(f, e) in &spatial.faces[q][a] {
                                list.push(((base_v + f as usize) as u32, e));
                            }
                        }
                        let sgn = if q % 2 == 0 { 1 } else { -1 };
                        let next = (i + 1) % m;
                        list.push(((next * nh_lo + a) as u32, sgn));
                        list.push(((i * nh_lo + a) as u32, -sgn));
                        raw_faces[p].push(list);
                    }
                }
            }
        }
        let mut lengths = spatial.lengths.clone();
        lengths.push(m);
        Ok(Self::finish(
            n,
            lengths,
            cells,
            raw_faces,
            orientation,
            Some(SuspensionData {
                spatial: spatial.clone(),
                m,
            }),
        ))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn count(&self, p: usize) -> usize {
        self.cells.get(p).map_or(0, |c| c.len())
    }

    pub fn total_cells(&self) -> usize {
        self.cells.iter().map(|c| c.len()).sum()
    }

    pub fn cells(&self, p: usize) -> &[Cell] {
        &self.cells[p]
    }

    pub fn index_of(&self, p: usize, cell: &Cell) -> Option<usize> {
        self.lookup.get(p)?.get(cell).map(|&i| i as usize)
    }

    /// Nonzero incidences `(face, ε(cell, face))` of a p-cell.
    pub fn faces(&self, p: usize, cell: usize) -> &[(u32, i32)] {
        &self.faces[p][cell]
    }

    /// Nonzero incidences `(coface, ε(coface, cell))` of a p-cell.
    pub fn cofaces(&self, p: usize, cell: usize) -> &[(u32, i32)] {
        &self.cofaces[p][cell]
    }

    pub fn incidence(&self, p: usize, cell: usize, face: usize) -> i32 {
        self.faces[p][cell]
            .iter()
            .find(|&&(f, _)| f as usize == face)
            .map_or(0, |&(_, e)| e)
    }

    pub fn orientation(&self, p: usize) -> &[i8] {
        &self.orientation[p]
    }

    pub fn suspension(&self) -> Option<&SuspensionData> {
        self.suspension.as_ref()
    }

    /// Horizontal p-cell `b(i)` of a suspension.
    pub fn horizontal(&self, p: usize, b: usize, i: usize) -> usize {
        let s = &self.suspension.as_ref().expect("not a suspension").spatial;
        i * s.count(p) + b
    }

    /// Vertical p-cell `a × [i, i+1]` built from the spatial (p-1)-cell `a`.
    pub fn vertical(&self, p: usize, a: usize, i: usize) -> usize {
        let sd = self.suspension.as_ref().expect("not a suspension");
        let s = &sd.spatial;
        let nh = if p <= s.dim { s.count(p) } else { 0 };
        sd.m * nh + i * s.count(p - 1) + a
    }

    pub fn slice_tag(&self, p: usize, idx: usize) -> Option<SliceTag> {
        let sd = self.suspension.as_ref()?;
        let s = &sd.spatial;
        let nh = if p <= s.dim { s.count(p) } else { 0 };
        if idx < sd.m * nh {
            Some(SliceTag {
                spatial: idx % nh,
                time: idx / nh,
                vertical: false,
            })
        } else {
            let nv = s.count(p - 1);
            let r = idx - sd.m * nh;
            Some(SliceTag {
                spatial: r % nv,
                time: r / nv,
                vertical: true,
            })
        }
    }

    /// Same cells with every incidence rescaled by the given cell signs.
    pub fn twisted(&self, signs: &[Vec<i8>]) -> Result<Self> {
        for p in 0..=self.dim {
            if signs[p].len() != self.count(p) {
                return Err(Error::LengthMismatch {
                    what: "orientation signs",
                    expected: self.count(p),
                    got: signs[p].len(),
                });
            }
        }
        let mut raw_faces: Vec<Vec<Vec<(u32, i32)>>> = vec![Vec::new(); self.dim + 1];
        raw_faces[0] = vec![Vec::new(); self.count(0)];
        for p in 1..=self.dim {
            raw_faces[p] = self.faces[p]
                .iter()
                .enumerate()
                .map(|(c, list)| {
                    list.iter()
                        .map(|&(b, e)| {
                            let s = signs[p][c] as i32 * signs[p - 1][b as usize] as i32;
                            (b, e * s)
                        })
                        .collect()
                })
                .collect();
        }
        let orientation = (0..=self.dim)
            .map(|p| {
                self.orientation[p]
                    .iter()
                    .zip(&signs[p])
                    .map(|(a, b)| a * b)
                    .collect()
            })
            .collect();
        Ok(Self::finish(
            self.dim,
            self.lengths.clone(),
            self.cells.clone(),
            raw_faces,
            orientation,
            self.suspension.clone(),
        ))
    }

    /// Exhaustive check of `Σ_b ε(c,b) ε(b,a) = 0`.
    pub fn check_boundary_squared(&self) -> bool {
        for p in 2..=self.dim {
            for c in 0..self.count(p) {
                let mut acc: HashMap<u32, i64> = HashMap::new();
                for &(b, e1) in &self.faces[p][c] {
                    for &(a, e2) in &self.faces[p - 1][b as usize] {
                        *acc.entry(a).or_insert(0) += (e1 * e2) as i64;
                    }
                }
                if acc.values().any(|&v| v != 0) {
                    return false;
                }
            }
        }
        true
    }

    /// Boundary of a chain: `(∂x)_a = Σ_b ε(b,a) x_b`.
    pub fn boundary(&self, x: &FieldChain) -> Result<FieldChain> {
        self.check_len(x)?;
        if x.degree == 0 {
            return Ok(FieldChain::zeros(x.modulus, 0, self.count(0)));
        }
        let n = x.modulus as i64;
        let mut out = vec![0i64; self.count(x.degree - 1)];
        for (b, &v) in x.coeffs.iter().enumerate() {
            if v == 0 {
                continue;
            }
            for &(a, e) in &self.faces[x.degree][b] {
                out[a as usize] += e as i64 * v as i64;
            }
        }
        Ok(FieldChain::from_i64(x.modulus, x.degree - 1, out.iter().map(|v| v.rem_euclid(n))))
    }

    /// Coboundary of a cochain: `(df)_c = Σ_b ε(c,b) f_b`.
    pub fn coboundary(&self, f: &FieldCochain) -> Result<FieldCochain> {
        self.check_len(f)?;
        if f.degree == self.dim {
            return Ok(FieldChain::zeros(f.modulus, self.dim, self.count(self.dim)));
        }
        let n = f.modulus as i64;
        let out: Vec<i64> = (0..self.count(f.degree + 1))
            .map(|c| {
                self.faces[f.degree + 1][c]
                    .iter()
                    .map(|&(b, e)| e as i64 * f.coeffs[b as usize] as i64)
                    .sum::<i64>()
                    .rem_euclid(n)
            })
            .collect();
        Ok(FieldChain::from_i64(f.modulus, f.degree + 1, out.into_iter()))
    }

    /// `d` (forward) or `dᵀ` (transpose) on cochains.
    pub fn apply_d(&self, f: &FieldCochain, transpose: bool) -> Result<FieldCochain> {
        if transpose {
            self.boundary(f)
        } else {
            self.coboundary(f)
        }
    }

    fn check_len(&self, x: &FieldChain) -> Result<()> {
        if x.degree > self.dim {
            return Err(Error::DegreeMismatch {
                expected: self.dim,
                got: x.degree,
            });
        }
        if x.coeffs.len() != self.count(x.degree) {
            return Err(Error::LengthMismatch {
                what: "chain",
                expected: self.count(x.degree),
                got: x.coeffs.len(),
            });
        }
        Ok(())
    }

    /// Debug description as JSON (not a stable format).
    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct CellOut {
            base: Vec<usize>,
            axes: Vec<usize>,
            tag: Option<SliceTag>,
            orientation: i8,
        }
        let cells: Vec<Vec<CellOut>> = (0..=self.dim)
            .map(|p| {
                self.cells[p]
                    .iter()
                    .enumerate()
                    .map(|(i, c)| CellOut {
                        base: c.base.clone(),
                        axes: c.axis_list(),
                        tag: self.slice_tag(p, i),
                        orientation: self.orientation[p][i],
                    })
                    .collect()
            })
            .collect();
        let mut incidences = Vec::new();
        for p in 1..=self.dim {
            for (c, list) in self.faces[p].iter().enumerate() {
                for &(b, e) in list {
                    incidences.push((p, c, b, e));
                }
            }
        }
        serde_json::json!({
            "dimension": self.dim,
            "lengths": self.lengths,
            "trotter_number": self.suspension.as_ref().map(|s| s.m),
            "cells": cells,
            "incidences": incidences,
        })
    }
}

/// Coefficient array over Z_N on the p-cells of a complex.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldChain {
    pub modulus: u32,
    pub degree: usize,
    pub coeffs: Vec<u32>,
}

/// Cochains share the chain representation (cells are identified with their
/// indicator cochains).
pub type FieldCochain = FieldChain;

impl FieldChain {
    pub fn zeros(modulus: u32, degree: usize, len: usize) -> Self {
        FieldChain {
            modulus,
            degree,
            coeffs: vec![0; len],
        }
    }

    pub fn from_i64(modulus: u32, degree: usize, it: impl Iterator<Item = i64>) -> Self {
        let n = modulus as i64;
        FieldChain {
            modulus,
            degree,
            coeffs: it.map(|v| v.rem_euclid(n) as u32).collect(),
        }
    }

    pub fn unit(modulus: u32, degree: usize, len: usize, cell: usize) -> Self {
        let mut z = Self::zeros(modulus, degree, len);
        z.coeffs[cell] = 1 % modulus;
        z
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0)
    }

    pub fn support(&self) -> Vec<usize> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, &c)| c != 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn add(&self, o: &FieldChain) -> FieldChain {
        self.combine(o, 1)
    }

    pub fn sub(&self, o: &FieldChain) -> FieldChain {
        self.combine(o, self.modulus - 1)
    }

    /// `self + k·o`.
    pub fn combine(&self, o: &FieldChain, k: u32) -> FieldChain {
        assert_eq!(self.coeffs.len(), o.coeffs.len());
        let n = self.modulus as u64;
        FieldChain {
            modulus: self.modulus,
            degree: self.degree,
            coeffs: self
                .coeffs
                .iter()
                .zip(&o.coeffs)
                .map(|(&a, &b)| ((a as u64 + k as u64 * b as u64) % n) as u32)
                .collect(),
        }
    }

    pub fn scale(&self, k: u32) -> FieldChain {
        let n = self.modulus as u64;
        FieldChain {
            modulus: self.modulus,
            degree: self.degree,
            coeffs: self
                .coeffs
                .iter()
                .map(|&a| (a as u64 * k as u64 % n) as u32)
                .collect(),
        }
    }

    pub fn neg(&self) -> FieldChain {
        self.scale(self.modulus - 1)
    }

    /// Coefficientwise pairing `Σ x_i y_i mod N`.
    pub fn dot(&self, o: &FieldChain) -> u32 {
        let n = self.modulus as u64;
        (self
            .coeffs
            .iter()
            .zip(&o.coeffs)
            .map(|(&a, &b)| a as u64 * b as u64 % n)
            .sum::<u64>()
            % n) as u32
    }
}

/// Primal/dual pair with the transverse bijection `θ: C_r(X∨) → C_{n−r}(X)`.
#[derive(Clone, Debug)]
pub struct DualCorrespondence {
    pub primal: Arc<CellComplex>,
    pub dual: Arc<CellComplex>,
    theta: Vec<Vec<u32>>,
    theta_inv: Vec<Vec<u32>>,
}

/// Sign pattern `ρ` with `ρ(x)ρ(y)·ref(x,y) = target(x,y)` for all incident
/// pairs, where `pairs` lists `(deg of x, x, y, target/ref)`; solved by BFS.
fn solve_signs(counts: &[usize], pairs: &[(usize, usize, usize, i8)]) -> Result<Vec<Vec<i8>>> {
    let offsets: Vec<usize> = counts
        .iter()
        .scan(0usize, |acc, &c| {
            let o = *acc;
            *acc += c;
            Some(o)
        })
        .collect();
    let total: usize = counts.iter().sum();
    let mut adj: Vec<Vec<(usize, i8)>> = vec![Vec::new(); total];
    for &(p, x, y, s) in pairs {
        let gx = offsets[p] + x;
        let gy = offsets[p - 1] + y;
        adj[gx].push((gy, s));
        adj[gy].push((gx, s));
    }
    let mut sign = vec![0i8; total];
    for start in 0..total {
        if sign[start] != 0 {
            continue;
        }
        sign[start] = 1;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &(v, s) in &adj[u] {
                let want = sign[u] * s;
                if sign[v] == 0 {
                    sign[v] = want;
                    queue.push_back(v);
                } else if sign[v] != want {
                    return Err(Error::Orientation);
                }
            }
        }
    }
    Ok(counts
        .iter()
        .zip(&offsets)
        .map(|(&c, &o)| sign[o..o + c].to_vec())
        .collect())
}

/// Relative orientation between two complexes on the same cell list: signs
/// `ρ` with `ε_a(x,y) = ρ(x)ρ(y) ε_b(x,y)`.
pub fn relative_orientation(a: &CellComplex, b: &CellComplex) -> Result<Vec<Vec<i8>>> {
    if a.dim != b.dim || (0..=a.dim).any(|p| a.cells[p] != b.cells[p]) {
        return Err(Error::InvalidParameter("complexes have different cells".into()));
    }
    let mut pairs = Vec::new();
    for p in 1..=a.dim {
        for c in 0..a.count(p) {
            let fa = &a.faces[p][c];
            let fb = &b.faces[p][c];
            if fa.len() != fb.len() {
                return Err(Error::Orientation);
            }
            for (&(x, ea), &(y, eb)) in fa.iter().zip(fb) {
                if x != y || ea.abs() != eb.abs() {
                    return Err(Error::Orientation);
                }
                pairs.push((p, c, x as usize, (ea / eb) as i8));
            }
        }
    }
    let counts: Vec<usize> = (0..=a.dim).map(|p| a.count(p)).collect();
    solve_signs(&counts, &pairs)
}

/// Dual complex of a cubical torus or of a suspension of one.
///
/// The dual is the half-shifted cubical torus: dual vertex `y` sits at
/// `y + ½`, and `θ(y, T) = (y + 1_T, Tᶜ)`. Dual orientations are solved so
/// that `ε_X(c,b) = ε_{X∨}(θ⁻¹b, θ⁻¹c)` holds exactly.
pub fn dualize(x: &Arc<CellComplex>) -> Result<DualCorrespondence> {
    let n = x.dim;
    let lengths = x.lengths.clone();
    let reference: CellComplex = match &x.suspension {
        Some(sd) => {
            let sp_len = &lengths[..n - 1];
            let sp = Arc::new(CellComplex::cubical_torus(sp_len, usize::MAX)?);
            CellComplex::suspend_capped(&sp, sd.m, usize::MAX)?
        }
        None => CellComplex::cubical_torus(&lengths, usize::MAX)?,
    };
    let full = (1u32 << n) - 1;
    let mut theta: Vec<Vec<u32>> = Vec::with_capacity(n + 1);
    let mut theta_inv: Vec<Vec<u32>> = (0..=n).map(|q| vec![u32::MAX; x.count(q)]).collect();
    for r in 0..=n {
        let mut row = Vec::with_capacity(reference.count(r));
        for (i, c) in reference.cells[r].iter().enumerate() {
            let mut base = c.base.clone();
            for k in 0..n {
                if c.axes >> k & 1 == 1 {
                    base[k] = (base[k] + 1) % lengths[k];
                }
            }
            let target = Cell {
                base,
                axes: full & !c.axes,
            };
            let j = x.index_of(n - r, &target).ok_or(Error::Orientation)?;
            row.push(j as u32);
            theta_inv[n - r][j] = i as u32;
        }
        theta.push(row);
    }
    if theta_inv.iter().flatten().any(|&v| v == u32::MAX) {
        return Err(Error::Orientation);
    }
    let mut pairs = Vec::new();
    for k in 1..=n {
        for c in 0..x.count(k) {
            let yc = theta_inv[k][c] as usize;
            for &(b, e) in &x.faces[k][c] {
                let xb = theta_inv[k - 1][b as usize] as usize;
                let e_ref = reference.incidence(n - k + 1, xb, yc);
                if e_ref.abs() != e.abs() {
                    return Err(Error::Orientation);
                }
                pairs.push((n - k + 1, xb, yc, (e / e_ref) as i8));
            }
        }
    }
    let nnz_ref: usize = (1..=n)
        .map(|p| reference.faces[p].iter().map(|l| l.len()).sum::<usize>())
        .sum();
    if nnz_ref != pairs.len() {
        return Err(Error::Orientation);
    }
    let counts: Vec<usize> = (0..=n).map(|p| reference.count(p)).collect();
    let signs = solve_signs(&counts, &pairs)?;
    let dual = reference.twisted(&signs)?;
    Ok(DualCorrespondence {
        primal: x.clone(),
        dual: Arc::new(dual),
        theta,
        theta_inv,
    })
}

impl DualCorrespondence {
    pub fn dim(&self) -> usize {
        self.primal.dim
    }

    /// `θ` on a dual r-cell: the primal (n−r)-cell it crosses.
    pub fn theta(&self, r: usize, dual_cell: usize) -> usize {
        self.theta[r][dual_cell] as usize
    }

    /// `θ⁻¹` on a primal q-cell: the dual (n−q)-cell crossing it.
    pub fn theta_inv(&self, q: usize, primal_cell: usize) -> usize {
        self.theta_inv[q][primal_cell] as usize
    }

    /// The same correspondence read from the dual side.
    pub fn swapped(&self) -> DualCorrespondence {
        DualCorrespondence {
            primal: self.dual.clone(),
            dual: self.primal.clone(),
            theta: self.theta_inv.clone(),
            theta_inv: self.theta.clone(),
        }
    }

    /// Exhaustive check of the dual-incidence identity.
    pub fn check_dual_incidence(&self) -> bool {
        let n = self.dim();
        for k in 1..=n {
            for c in 0..self.primal.count(k) {
                for b in 0..self.primal.count(k - 1) {
                    let e = self.primal.incidence(k, c, b);
                    let e_dual = self.dual.incidence(
                        n - k + 1,
                        self.theta_inv(k - 1, b),
                        self.theta_inv(k, c),
                    );
                    if e != e_dual {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// `ϑ`: dual (n−r)-chain to primal r-cochain, `(ϑΞ)_b = Ξ_{θ⁻¹ b}`.
    pub fn vartheta(&self, xi: &FieldChain) -> Result<FieldCochain> {
        let n = self.dim();
        if xi.degree > n || xi.coeffs.len() != self.dual.count(xi.degree) {
            return Err(Error::DegreeMismatch {
                expected: xi.degree,
                got: xi.coeffs.len(),
            });
        }
        let r = n - xi.degree;
        Ok(FieldChain {
            modulus: xi.modulus,
            degree: r,
            coeffs: (0..self.primal.count(r))
                .map(|b| xi.coeffs[self.theta_inv(r, b)])
                .collect(),
        })
    }

    /// Inverse of `ϑ`: primal r-cochain to dual (n−r)-chain.
    pub fn vartheta_inv(&self, f: &FieldCochain) -> Result<FieldChain> {
        let n = self.dim();
        if f.degree > n || f.coeffs.len() != self.primal.count(f.degree) {
            return Err(Error::DegreeMismatch {
                expected: f.degree,
                got: f.coeffs.len(),
            });
        }
        let q = n - f.degree;
        Ok(FieldChain {
            modulus: f.modulus,
            degree: q,
            coeffs: (0..self.dual.count(q))
                .map(|c| f.coeffs[self.theta(q, c)])
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_counts() {
        let t = CellComplex::build_torus(2, 2).unwrap();
        assert_eq!((t.count(0), t.count(1), t.count(2)), (4, 8, 4));
        let t = CellComplex::build_torus(3, 2).unwrap();
        assert_eq!(t.count(1), 24);
        let t = CellComplex::build_torus(4, 3).unwrap();
        assert_eq!(t.count(2), 486);
        assert!(t.check_boundary_squared());
    }

    #[test]
    fn suspension_counts_and_squares() {
        let t = Arc::new(CellComplex::build_torus(2, 2).unwrap());
        let s = CellComplex::suspend(&t, 1).unwrap();
        assert_eq!(s.count(1), 12);
        for m in 1..=3 {
            let s = CellComplex::suspend(&t, m).unwrap();
            assert!(s.check_boundary_squared());
            for p in 0..=3 {
                let h = if p <= 2 { t.count(p) } else { 0 };
                let v = if p >= 1 { t.count(p - 1) } else { 0 };
                assert_eq!(s.count(p), m * (h + v));
            }
        }
    }

    #[test]
    fn suspension_is_product_torus() {
        for (l, m) in [(2, 1), (3, 2), (2, 3)] {
            let t = Arc::new(CellComplex::build_torus(2, l).unwrap());
            let s = CellComplex::suspend(&t, m).unwrap();
            let c = CellComplex::cubical_torus(&[l, l, m], usize::MAX).unwrap();
            for p in 0..=3 {
                for (i, cell) in s.cells(p).iter().enumerate() {
                    let j = c.index_of(p, cell).unwrap();
                    if p > 0 {
                        let mut a: Vec<(Cell, i32)> = s
                            .faces(p, i)
                            .iter()
                            .map(|&(f, e)| (s.cells(p - 1)[f as usize].clone(), e))
                            .collect();
                        let mut b: Vec<(Cell, i32)> = c
                            .faces(p, j)
                            .iter()
                            .map(|&(f, e)| (c.cells(p - 1)[f as usize].clone(), e))
                            .collect();
                        a.sort_by(|x, y| format!("{x:?}").cmp(&format!("{y:?}")));
                        b.sort_by(|x, y| format!("{x:?}").cmp(&format!("{y:?}")));
                        assert_eq!(a, b);
                    }
                }
            }
        }
    }

    #[test]
    fn dual_of_small_complexes() {
        let t = Arc::new(CellComplex::build_torus(2, 2).unwrap());
        let dc = dualize(&t).unwrap();
        assert_eq!(dc.dual.count(0), 4);
        assert!(dc.check_dual_incidence());
        let t3 = Arc::new(CellComplex::build_torus(3, 3).unwrap());
        assert!(dualize(&t3).unwrap().check_dual_incidence());
        for m in 1..=3 {
            let s = Arc::new(CellComplex::suspend(&t, m).unwrap());
            let dc = dualize(&s).unwrap();
            assert!(dc.check_dual_incidence());
            assert!(dc.dual.check_boundary_squared());
            for r in 0..=3 {
                for c in 0..dc.dual.count(r) {
                    assert_eq!(dc.theta_inv(3 - r, dc.theta(r, c)), c);
                }
            }
            assert!(dc.swapped().check_dual_incidence());
        }
    }
}
