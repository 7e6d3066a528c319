//! Z_N arithmetic, the symmetric discrete Fourier transform, linear algebra over
//! prime fields, homology data with sections and filling operators, and the
//! intersection and generalized linking pairings.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use crate::complex::{masks_of_size, CellComplex, DualCorrespondence, FieldChain};
use crate::error::{Error, Result};
use crate::C64;

pub fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let mut k = 2;
    while k * k <= n {
        if n % k == 0 {
            return false;
        }
        k += 1;
    }
    true
}

pub fn require_prime(n: u32) -> Result<()> {
    if is_prime(n) {
        Ok(())
    } else {
        Err(Error::CompositeModulus(n))
    }
}

/// Residue modulo N.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Zn {
    value: u32,
    modulus: u32,
}

impl Zn {
    pub fn new(value: i64, modulus: u32) -> Self {
        Zn {
            value: value.rem_euclid(modulus as i64) as u32,
            modulus,
        }
    }

    pub fn value(self) -> u32 {
        self.value
    }

    pub fn modulus(self) -> u32 {
        self.modulus
    }

    pub fn pow(self, mut e: u64) -> Self {
        let n = self.modulus as u64;
        let mut base = self.value as u64;
        let mut acc = 1 % n;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base % n;
            }
            base = base * base % n;
            e >>= 1;
        }
        Zn {
            value: acc as u32,
            modulus: self.modulus,
        }
    }

    /// Multiplicative inverse; `None` for non-units.
    pub fn inv(self) -> Option<Self> {
        let (mut a, mut b) = (self.value as i64, self.modulus as i64);
        let (mut x0, mut x1) = (1i64, 0i64);
        while b != 0 {
            let q = a / b;
            (a, b) = (b, a - q * b);
            (x0, x1) = (x1, x0 - q * x1);
        }
        (a == 1).then(|| Zn::new(x0, self.modulus))
    }

    /// `ω^value`.
    pub fn character(self) -> C64 {
        root_of_unity(self.modulus, self.value as i64)
    }
}

impl fmt::Display for Zn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.modulus)
    }
}

impl Add for Zn {
    type Output = Zn;
    fn add(self, o: Zn) -> Zn {
        Zn::new(self.value as i64 + o.value as i64, self.modulus)
    }
}

impl Sub for Zn {
    type Output = Zn;
    fn sub(self, o: Zn) -> Zn {
        Zn::new(self.value as i64 - o.value as i64, self.modulus)
    }
}

impl Mul for Zn {
    type Output = Zn;
    fn mul(self, o: Zn) -> Zn {
        Zn::new(self.value as i64 * o.value as i64, self.modulus)
    }
}

impl Neg for Zn {
    type Output = Zn;
    fn neg(self) -> Zn {
        Zn::new(-(self.value as i64), self.modulus)
    }
}

/// `ω^k` with `ω = e^{2πi/N}`.
pub fn root_of_unity(n: u32, k: i64) -> C64 {
    let r = k.rem_euclid(n as i64) as f64;
    C64::from_polar(1.0, 2.0 * PI * r / n as f64)
}

/// Table `ω^0, …, ω^{N−1}`.
pub fn roots(n: u32) -> Vec<C64> {
    (0..n as i64).map(|k| root_of_unity(n, k)).collect()
}

pub fn delta_n(x: i64, n: u32) -> f64 {
    if x.rem_euclid(n as i64) == 0 {
        1.0
    } else {
        0.0
    }
}

/// `f̂(k) = N^{−1/2} Σ_x f(x) ω^{−kx}`.
pub fn dft(f: &[C64]) -> Vec<C64> {
    let n = f.len();
    let w = roots(n as u32);
    let s = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|k| {
            (0..n)
                .map(|x| f[x] * w[(n - (k * x) % n) % n])
                .sum::<C64>()
                * s
        })
        .collect()
}

/// `f(x) = N^{−1/2} Σ_k f̂(k) ω^{kx}`.
pub fn idft(fh: &[C64]) -> Vec<C64> {
    let n = fh.len();
    let w = roots(n as u32);
    let s = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|x| (0..n).map(|k| fh[k] * w[(k * x) % n]).sum::<C64>() * s)
        .collect()
}

/// Unnormalized transform over Z_N^k in place: `g(y) = Σ_x f(x) ω^{sign·x·y}`.
/// The data is indexed in mixed radix with axis 0 most significant.
pub fn dft_nd(data: &mut [C64], n: usize, k: usize, sign: i64) {
    dft_axes(data, n, k, 0..k, sign);
}

/// Same transform restricted to the axes in `axes`.
pub fn dft_axes(data: &mut [C64], n: usize, k: usize, axes: std::ops::Range<usize>, sign: i64) {
    assert_eq!(data.len(), n.pow(k as u32));
    let w = roots(n as u32);
    let mat: Vec<C64> = (0..n * n)
        .map(|i| w[(sign * ((i / n) * (i % n)) as i64).rem_euclid(n as i64) as usize])
        .collect();
    // Im ω^{sign} for the radix-3 butterfly
    let w3 = if n == 3 { mat[4].im } else { 0.0 };
    let mut line = vec![C64::new(0.0, 0.0); n];
    for axis in axes {
        let stride = n.pow((k - 1 - axis) as u32);
        let block = stride * n;
        for start in (0..data.len()).step_by(block) {
            for off in 0..stride {
                let base = start + off;
                if n == 2 {
                    let (a, b) = (data[base], data[base + stride]);
                    data[base] = a + b;
                    data[base + stride] = a - b;
                    continue;
                }
                if n == 3 {
                    let (a, b, c) = (data[base], data[base + stride], data[base + 2 * stride]);
                    let (t1, t2) = (b + c, b - c);
                    let h = a - t1 * 0.5;
                    let r = C64::new(-t2.im * w3, t2.re * w3);
                    data[base] = a + t1;
                    data[base + stride] = h + r;
                    data[base + 2 * stride] = h - r;
                    continue;
                }
                for (x, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + x * stride];
                }
                for y in 0..n {
                    let row = &mat[y * n..(y + 1) * n];
                    let mut acc = C64::new(0.0, 0.0);
                    for (v, t) in line.iter().zip(row) {
                        acc += v * t;
                    }
                    data[base + y * stride] = acc;
                }
            }
        }
    }
}

/// Digitwise difference `t − s` of mixed-radix indices over `Z_n^k`, from two
/// half-width lookup tables.
pub struct DigitSub {
    low: usize,
    lo_table: Vec<u32>,
    hi_table: Vec<u32>,
    lo_size: usize,
    hi_size: usize,
}

impl DigitSub {
    pub fn new(n: usize, k: usize) -> Self {
        let kl = k / 2;
        let lo_size = n.pow(kl as u32);
        let hi_size = n.pow((k - kl) as u32);
        let table = |digits: usize, size: usize| -> Vec<u32> {
            let dig = |mut v: usize| -> Vec<usize> {
                let mut d = vec![0; digits];
                for x in d.iter_mut().rev() {
                    *x = v % n;
                    v /= n;
                }
                d
            };
            let mut out = vec![0u32; size * size];
            for t in 0..size {
                let dt = dig(t);
                for s in 0..size {
                    let ds = dig(s);
                    out[t * size + s] = dt.iter().zip(&ds).fold(0, |acc, (&a, &b)| acc * n + (a + n - b) % n) as u32;
                }
            }
            out
        };
        DigitSub {
            low: lo_size,
            lo_table: table(kl, lo_size),
            hi_table: table(k - kl, hi_size),
            lo_size,
            hi_size,
        }
    }

    #[inline]
    pub fn sub(&self, t: usize, s: usize) -> usize {
        let (th, tl) = (t / self.low, t % self.low);
        let (sh, sl) = (s / self.low, s % self.low);
        debug_assert!(th < self.hi_size);
        self.hi_table[th * self.hi_size + sh] as usize * self.low + self.lo_table[tl * self.lo_size + sl] as usize
    }
}

/// `|ker A|` for an integer matrix acting on `Z_N^cols`, any `N ≥ 2`.
///
/// Diagonalizes `A mod N` with unimodular Euclid row and column steps; a
/// diagonal entry `d` contributes `gcd(d, N)` solutions and each column
/// without a pivot contributes `N`.
pub fn kernel_count_mod(a: &[Vec<i64>], cols: usize, modulus: u32) -> f64 {
    let n = modulus as i64;
    let mut m: Vec<Vec<i64>> = a
        .iter()
        .map(|r| r.iter().map(|&x| x.rem_euclid(n)).collect())
        .collect();
    let rows = m.len();
    let gcd = |mut x: i64, mut y: i64| {
        while y != 0 {
            (x, y) = (y, x % y);
        }
        x.abs()
    };
    // (g, u, v) with u x + v y = g
    // plain subtraction when x | y, so a cleared line stays cleared
    fn ext(x: i64, y: i64) -> (i64, i64, i64) {
        fn go(x: i64, y: i64) -> (i64, i64, i64) {
            if y == 0 {
                (x, 1, 0)
            } else {
                let (g, u, v) = go(y, x % y);
                (g, v, u - (x / y) * v)
            }
        }
        if y % x == 0 {
            (x, 1, 0)
        } else {
            go(x, y)
        }
    }
    let mut count = 1.0f64;
    let mut k = 0;
    let mut used_cols = 0;
    while k < rows && k < cols {
        // pivot: any nonzero entry in the trailing block
        let Some((pi, pj)) = (k..rows)
            .flat_map(|i| (k..cols).map(move |j| (i, j)))
            .find(|&(i, j)| m[i][j] != 0)
        else {
            break;
        };
        m.swap(k, pi);
        for row in m.iter_mut() {
            row.swap(k, pj);
        }
        loop {
            let mut dirty = false;
            for i in k + 1..rows {
                if m[i][k] == 0 {
                    continue;
                }
                let (a0, b0) = (m[k][k], m[i][k]);
                let (g, u, v) = ext(a0, b0);
                let (p, q) = (a0 / g, b0 / g);
                for j in k..cols {
                    let (x, y) = (m[k][j], m[i][j]);
                    m[k][j] = (u * x + v * y).rem_euclid(n);
                    m[i][j] = (p * y - q * x).rem_euclid(n);
                }
            }
            for j in k + 1..cols {
                if m[k][j] == 0 {
                    continue;
                }
                let (a0, b0) = (m[k][k], m[k][j]);
                let (g, u, v) = ext(a0, b0);
                let (p, q) = (a0 / g, b0 / g);
                for row in m.iter_mut().skip(k) {
                    let (x, y) = (row[k], row[j]);
                    row[k] = (u * x + v * y).rem_euclid(n);
                    row[j] = (p * y - q * x).rem_euclid(n);
                }
                dirty = true;
            }
            if !dirty || (k + 1..rows).all(|i| m[i][k] == 0) {
                break;
            }
        }
        count *= gcd(m[k][k], n) as f64;
        used_cols += 1;
        k += 1;
    }
    count * (modulus as f64).powi((cols - used_cols) as i32)
}

/// Dense matrix over F_N.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FpMatrix {
    rows: usize,
    cols: usize,
    modulus: u32,
    data: Vec<u32>,
}

/// Reduced row echelon form with the accumulated row transform (`E·A = R`).
#[derive(Clone, Debug)]
pub struct Echelon {
    pub rank: usize,
    pub pivot_cols: Vec<usize>,
    pub reduced: FpMatrix,
    pub transform: FpMatrix,
}

impl FpMatrix {
    pub fn zeros(rows: usize, cols: usize, modulus: u32) -> Self {
        FpMatrix {
            rows,
            cols,
            modulus,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize, modulus: u32) -> Self {
        let mut m = Self::zeros(n, n, modulus);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<u32>], modulus: u32) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        let mut m = Self::zeros(r, c, modulus);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), c);
            for (j, &v) in row.iter().enumerate() {
                m.set(i, j, v % modulus);
            }
        }
        m
    }

    pub fn from_columns(cols: &[Vec<u32>], rows: usize, modulus: u32) -> Self {
        let mut m = Self::zeros(rows, cols.len(), modulus);
        for (j, col) in cols.iter().enumerate() {
            assert_eq!(col.len(), rows);
            for (i, &v) in col.iter().enumerate() {
                m.set(i, j, v % modulus);
            }
        }
        m
    }

    /// Matrix of `∂_p: C_p → C_{p−1}` (rows are (p−1)-cells).
    pub fn boundary(x: &CellComplex, p: usize, modulus: u32) -> Self {
        let rows = if p == 0 { 0 } else { x.count(p - 1) };
        let mut m = Self::zeros(rows, x.count(p), modulus);
        if p > 0 {
            for c in 0..x.count(p) {
                for &(b, e) in x.faces(p, c) {
                    m.set(b as usize, c, (e as i64).rem_euclid(modulus as i64) as u32);
                }
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: u32) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<u32> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows, self.modulus);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &[u32]) -> Vec<u32> {
        assert_eq!(v.len(), self.cols);
        let n = self.modulus as u64;
        (0..self.rows)
            .map(|i| {
                (self
                    .row(i)
                    .iter()
                    .zip(v)
                    .map(|(&a, &b)| a as u64 * b as u64)
                    .sum::<u64>()
                    % n) as u32
            })
            .collect()
    }

    pub fn mul(&self, o: &FpMatrix) -> FpMatrix {
        assert_eq!(self.cols, o.rows);
        let n = self.modulus as u64;
        let mut out = Self::zeros(self.rows, o.cols, self.modulus);
        for i in 0..self.rows {
            let mut acc = vec![0u64; o.cols];
            for k in 0..self.cols {
                let a = self.get(i, k) as u64;
                if a == 0 {
                    continue;
                }
                for (j, slot) in acc.iter_mut().enumerate() {
                    *slot += a * o.get(k, j) as u64;
                }
            }
            for (j, v) in acc.into_iter().enumerate() {
                out.set(i, j, (v % n) as u32);
            }
        }
        out
    }

    /// Columns reordered as `perm[new] = old`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        let mut m = Self::zeros(self.rows, perm.len(), self.modulus);
        for i in 0..self.rows {
            for (j, &old) in perm.iter().enumerate() {
                m.set(i, j, self.get(i, old));
            }
        }
        m
    }

    fn row_axpy(&mut self, dst: usize, src: usize, f: u32) {
        let n = self.modulus as u64;
        let c = self.cols;
        let (a, b) = if dst < src {
            let (lo, hi) = self.data.split_at_mut(src * c);
            (&mut lo[dst * c..(dst + 1) * c], &hi[..c])
        } else {
            let (lo, hi) = self.data.split_at_mut(dst * c);
            (&mut hi[..c], &lo[src * c..(src + 1) * c])
        };
        for (x, &y) in a.iter_mut().zip(b) {
            if y != 0 {
                *x = ((*x as u64 + f as u64 * y as u64) % n) as u32;
            }
        }
    }

    fn row_scale(&mut self, r: usize, f: u32) {
        let n = self.modulus as u64;
        for x in &mut self.data[r * self.cols..(r + 1) * self.cols] {
            *x = (*x as u64 * f as u64 % n) as u32;
        }
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    /// Gauss-Jordan elimination with pivots taken in column order.
    pub fn echelon(&self) -> Result<Echelon> {
        require_prime(self.modulus)?;
        let n = self.modulus;
        let mut r = self.clone();
        let mut e = FpMatrix::identity(self.rows, n);
        let mut rank = 0;
        let mut pivot_cols = Vec::new();
        for col in 0..self.cols {
            if rank == self.rows {
                break;
            }
            let Some(piv) = (rank..self.rows).find(|&i| r.get(i, col) != 0) else {
                continue;
            };
            r.swap_rows(rank, piv);
            e.swap_rows(rank, piv);
            let inv = Zn::new(r.get(rank, col) as i64, n).inv().unwrap().value();
            r.row_scale(rank, inv);
            e.row_scale(rank, inv);
            for i in 0..self.rows {
                let v = r.get(i, col);
                if i != rank && v != 0 {
                    r.row_axpy(i, rank, n - v);
                    e.row_axpy(i, rank, n - v);
                }
            }
            pivot_cols.push(col);
            rank += 1;
        }
        Ok(Echelon {
            rank,
            pivot_cols,
            reduced: r,
            transform: e,
        })
    }

    /// Rank without tracking the transform.
    pub fn rank(&self) -> Result<usize> {
        require_prime(self.modulus)?;
        let n = self.modulus;
        let mut r = self.clone();
        let mut rank = 0;
        for col in 0..self.cols {
            if rank == self.rows {
                break;
            }
            let Some(piv) = (rank..self.rows).find(|&i| r.get(i, col) != 0) else {
                continue;
            };
            r.swap_rows(rank, piv);
            let inv = Zn::new(r.get(rank, col) as i64, n).inv().unwrap().value();
            r.row_scale(rank, inv);
            for i in rank + 1..self.rows {
                let v = r.get(i, col);
                if v != 0 {
                    r.row_axpy(i, rank, n - v);
                }
            }
            rank += 1;
        }
        Ok(rank)
    }

    /// Basis of the null space, one vector per free column.
    pub fn kernel(&self) -> Result<Vec<Vec<u32>>> {
        let ech = self.echelon()?;
        Ok(ech.kernel_basis())
    }

    /// Some `x` with `A·x = b` (free variables set to zero).
    pub fn solve(&self, b: &[u32]) -> Result<Vec<u32>> {
        self.echelon()?.solve(b)
    }
}

impl Echelon {
    pub fn kernel_basis(&self) -> Vec<Vec<u32>> {
        let r = &self.reduced;
        let n = r.modulus;
        let mut is_pivot = vec![false; r.cols];
        for &c in &self.pivot_cols {
            is_pivot[c] = true;
        }
        (0..r.cols)
            .filter(|&f| !is_pivot[f])
            .map(|f| {
                let mut v = vec![0u32; r.cols];
                v[f] = 1;
                for (i, &pc) in self.pivot_cols.iter().enumerate() {
                    let a = r.get(i, f);
                    v[pc] = (n - a) % n;
                }
                v
            })
            .collect()
    }

    pub fn solve(&self, b: &[u32]) -> Result<Vec<u32>> {
        let c = self.transform.mul_vec(b);
        if c[self.rank..].iter().any(|&v| v != 0) {
            return Err(Error::NoSolution);
        }
        let mut x = vec![0u32; self.reduced.cols];
        for (i, &pc) in self.pivot_cols.iter().enumerate() {
            x[pc] = c[i];
        }
        Ok(x)
    }
}

/// Choice of homology representatives and filling pivots.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Convention {
    /// Straight coordinate subtori as representatives; fillings pivot in cell order.
    #[default]
    Standard,
    /// Representatives and fillings from elimination in reversed cell order.
    Alternate,
}

/// Cycles, boundaries, a homology section and a linear filling operator in one degree.
#[derive(Clone, Debug)]
pub struct HomologyData {
    complex: Arc<CellComplex>,
    modulus: u32,
    degree: usize,
    convention: Convention,
    boundary_basis: Vec<FieldChain>,
    cycle_dim: usize,
    representatives: Vec<FieldChain>,
    fill: Option<(Echelon, Vec<usize>)>,
    coords: Echelon,
}

/// Orientation of a cell relative to the standard cubical one.
fn standard_sign(x: &CellComplex, p: usize, idx: usize) -> i8 {
    let own = x.orientation(p)[idx];
    match (x.suspension(), x.slice_tag(p, idx)) {
        (Some(sd), Some(tag)) => {
            let q = if tag.vertical { p - 1 } else { p };
            own * sd.spatial.orientation(q)[tag.spatial]
        }
        _ => own,
    }
}

/// Straight coordinate p-subtori through the origin, one per axis subset.
pub fn toric_cycles(x: &CellComplex, p: usize, modulus: u32) -> Vec<FieldChain> {
    let n = x.dim();
    masks_of_size(n, p)
        .into_iter()
        .map(|mask| {
            let mut z = FieldChain::zeros(modulus, p, x.count(p));
            for (i, c) in x.cells(p).iter().enumerate() {
                if c.axes == mask && (0..n).all(|k| mask >> k & 1 == 1 || c.base[k] == 0) {
                    z.coeffs[i] = (standard_sign(x, p, i) as i64).rem_euclid(modulus as i64) as u32;
                }
            }
            z
        })
        .collect()
}

impl HomologyData {
    pub fn new(x: &Arc<CellComplex>, p: usize, modulus: u32) -> Result<Self> {
        Self::with_convention(x, p, modulus, Convention::Standard)
    }

    pub fn with_convention(
        x: &Arc<CellComplex>,
        p: usize,
        modulus: u32,
        convention: Convention,
    ) -> Result<Self> {
        require_prime(modulus)?;
        if p > x.dim() {
            return Err(Error::DegreeMismatch {
                expected: x.dim(),
                got: p,
            });
        }
        let np = x.count(p);
        let rev = convention == Convention::Alternate;
        let order = |len: usize| -> Vec<usize> {
            if rev {
                (0..len).rev().collect()
            } else {
                (0..len).collect()
            }
        };
        // filling operator from ∂_{p+1}
        let (boundary_basis, fill) = if p < x.dim() {
            let perm = order(x.count(p + 1));
            let d = FpMatrix::boundary(x, p + 1, modulus).permute_columns(&perm);
            let ech = d.echelon()?;
            let basis = ech
                .pivot_cols
                .iter()
                .map(|&c| FieldChain {
                    modulus,
                    degree: p,
                    coeffs: d.column(c),
                })
                .collect();
            (basis, Some((ech, perm)))
        } else {
            (Vec::new(), None)
        };
        let dp = FpMatrix::boundary(x, p, modulus);
        let rank_dp = if p == 0 { 0 } else { dp.rank()? };
        let cycle_dim = np - rank_dp;
        let betti = cycle_dim - boundary_basis.len();
        let representatives = match convention {
            Convention::Standard => toric_cycles(x, p, modulus),
            Convention::Alternate => {
                let perm = order(np);
                let ker: Vec<Vec<u32>> = if p == 0 {
                    (0..np).map(|i| FieldChain::unit(modulus, 0, np, i).coeffs).collect()
                } else {
                    dp.permute_columns(&perm)
                        .kernel()?
                        .into_iter()
                        .map(|v| {
                            let mut w = vec![0u32; np];
                            for (j, &old) in perm.iter().enumerate() {
                                w[old] = v[j];
                            }
                            w
                        })
                        .collect()
                };
                let mut cols: Vec<Vec<u32>> =
                    boundary_basis.iter().map(|b| b.coeffs.clone()).collect();
                let nb = cols.len();
                cols.extend(ker.iter().cloned());
                let ech = FpMatrix::from_columns(&cols, np, modulus).echelon()?;
                ech.pivot_cols
                    .iter()
                    .filter(|&&c| c >= nb)
                    .map(|&c| FieldChain {
                        modulus,
                        degree: p,
                        coeffs: ker[c - nb].clone(),
                    })
                    .collect()
            }
        };
        if representatives.len() != betti {
            return Err(Error::InvalidParameter(format!(
                "section has {} representatives, Betti number is {betti}",
                representatives.len()
            )));
        }
        let mut cols: Vec<Vec<u32>> = boundary_basis.iter().map(|b| b.coeffs.clone()).collect();
        cols.extend(representatives.iter().map(|r| r.coeffs.clone()));
        let coords = FpMatrix::from_columns(&cols, np, modulus).echelon()?;
        if coords.rank != cols.len() {
            return Err(Error::InvalidParameter(
                "homology representatives are not independent modulo boundaries".into(),
            ));
        }
        Ok(HomologyData {
            complex: x.clone(),
            modulus,
            degree: p,
            convention,
            boundary_basis,
            cycle_dim,
            representatives,
            fill,
            coords,
        })
    }

    pub fn complex(&self) -> &Arc<CellComplex> {
        &self.complex
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn betti(&self) -> usize {
        self.representatives.len()
    }

    pub fn cycle_dim(&self) -> usize {
        self.cycle_dim
    }

    pub fn boundary_dim(&self) -> usize {
        self.boundary_basis.len()
    }

    pub fn boundary_basis(&self) -> &[FieldChain] {
        &self.boundary_basis
    }

    pub fn representatives(&self) -> &[FieldChain] {
        &self.representatives
    }

    /// Basis of `Z_p`: the boundary basis followed by the representatives.
    pub fn cycle_basis(&self) -> Vec<FieldChain> {
        let mut v = self.boundary_basis.clone();
        v.extend(self.representatives.iter().cloned());
        v
    }

    fn check(&self, z: &FieldChain) -> Result<()> {
        if z.degree != self.degree || z.coeffs.len() != self.complex.count(self.degree) {
            return Err(Error::DegreeMismatch {
                expected: self.degree,
                got: z.degree,
            });
        }
        Ok(())
    }

    /// `s_p`: class coordinates to the representative cycle.
    pub fn section(&self, h: &[u32]) -> FieldChain {
        let mut z = FieldChain::zeros(self.modulus, self.degree, self.complex.count(self.degree));
        for (r, &k) in self.representatives.iter().zip(h) {
            if k != 0 {
                z = z.combine(r, k);
            }
        }
        z
    }

    /// Coordinates of a cycle in the basis `(boundaries, representatives)`.
    pub fn coordinates(&self, z: &FieldChain) -> Result<Vec<u32>> {
        self.check(z)?;
        if !self.complex.boundary(z)?.is_zero() {
            return Err(Error::NotACycle("homology class"));
        }
        self.coords.solve(&z.coeffs).map_err(|_| Error::NotACycle("homology class"))
    }

    pub fn class(&self, z: &FieldChain) -> Result<Vec<u32>> {
        let c = self.coordinates(z)?;
        Ok(c[self.boundary_basis.len()..].to_vec())
    }

    /// `(class, exact part)` with `z = s(class) + exact`.
    pub fn split(&self, z: &FieldChain) -> Result<(Vec<u32>, FieldChain)> {
        let h = self.class(z)?;
        let ex = z.sub(&self.section(&h));
        Ok((h, ex))
    }

    pub fn is_boundary(&self, z: &FieldChain) -> Result<bool> {
        Ok(self.class(z)?.iter().all(|&v| v == 0))
    }

    /// `K_p`: a (p+1)-chain with `∂K_p(b) = b`, linear in `b`.
    pub fn fill(&self, b: &FieldChain) -> Result<FieldChain> {
        self.check(b)?;
        let Some((ech, perm)) = &self.fill else {
            if b.is_zero() {
                return Ok(FieldChain::zeros(self.modulus, self.degree + 1, 0));
            }
            return Err(Error::NoSolution);
        };
        let y = ech.solve(&b.coeffs)?;
        let mut x = vec![0u32; perm.len()];
        for (j, &old) in perm.iter().enumerate() {
            x[old] = y[j];
        }
        Ok(FieldChain {
            modulus: self.modulus,
            degree: self.degree + 1,
            coeffs: x,
        })
    }
}

/// `I(Ξ∨, Σ) = ∫_Σ ϑ(Ξ∨)` for `Ξ∨ ∈ C_{n−r}(X∨)`, `Σ ∈ C_r(X)`.
pub fn intersection(dc: &DualCorrespondence, xi: &FieldChain, sigma: &FieldChain) -> Result<u32> {
    let f = dc.vartheta(xi)?;
    if f.degree != sigma.degree || f.coeffs.len() != sigma.coeffs.len() {
        return Err(Error::DegreeMismatch {
            expected: f.degree,
            got: sigma.degree,
        });
    }
    Ok(f.dot(sigma))
}

/// Generalized linking pairing `Z_{n−p−1}(X∨) × Z_p(X) → F_N`.
#[derive(Clone, Debug)]
pub struct LinkingPairing {
    pub dc: DualCorrespondence,
    pub primal: HomologyData,
    pub dual: HomologyData,
    /// `B_H`, rows indexed by dual classes and columns by primal classes.
    pub correction: FpMatrix,
}

impl LinkingPairing {
    /// Pairing for primal degree `p`, with `B_H = 0`.
    pub fn new(dc: &DualCorrespondence, p: usize, modulus: u32, convention: Convention) -> Result<Self> {
        let n = dc.dim();
        if p + 1 > n {
            return Err(Error::DegreeMismatch {
                expected: n - 1,
                got: p,
            });
        }
        let primal = HomologyData::with_convention(&dc.primal, p, modulus, convention)?;
        let dual = HomologyData::with_convention(&dc.dual, n - p - 1, modulus, convention)?;
        let correction = FpMatrix::zeros(dual.betti(), primal.betti(), modulus);
        Ok(LinkingPairing {
            dc: dc.clone(),
            primal,
            dual,
            correction,
        })
    }

    pub fn with_correction(mut self, b_h: FpMatrix) -> Result<Self> {
        if b_h.rows() != self.dual.betti() || b_h.cols() != self.primal.betti() {
            return Err(Error::LengthMismatch {
                what: "correction pairing",
                expected: self.dual.betti() * self.primal.betti(),
                got: b_h.rows() * b_h.cols(),
            });
        }
        self.correction = b_h;
        Ok(self)
    }

    pub fn modulus(&self) -> u32 {
        self.primal.modulus()
    }

    /// `Lk(μ∨, ν) = I(μ∨, K ν_ex) + I(K∨ μ∨_ex, ν_h) + B_H([μ∨], [ν])`.
    pub fn lk(&self, mu: &FieldChain, nu: &FieldChain) -> Result<u32> {
        let n = self.modulus() as u64;
        let (h_nu, nu_ex) = self.primal.split(nu)?;
        let (h_mu, mu_ex) = self.dual.split(mu)?;
        let t1 = intersection(&self.dc, mu, &self.primal.fill(&nu_ex)?)? as u64;
        let nu_h = self.primal.section(&h_nu);
        let t2 = intersection(&self.dc, &self.dual.fill(&mu_ex)?, &nu_h)? as u64;
        let corr = FieldChain {
            modulus: self.modulus(),
            degree: 0,
            coeffs: self.correction.mul_vec(&h_nu),
        };
        let t3 = corr.dot(&FieldChain {
            modulus: self.modulus(),
            degree: 0,
            coeffs: h_mu,
        }) as u64;
        Ok(((t1 + t2 + t3) % n) as u32)
    }

    /// Both filling formulas for a pair of boundaries: `(I(μ∨, Kν), I(K∨μ∨, ν))`.
    pub fn boundary_link_both(&self, mu: &FieldChain, nu: &FieldChain) -> Result<(u32, u32)> {
        let a = intersection(&self.dc, mu, &self.primal.fill(nu)?)?;
        let b = intersection(&self.dc, &self.dual.fill(mu)?, nu)?;
        Ok((a, b))
    }
}

/// Linking of `μ∨` with a boundary given an explicit filling `∂Σ = ν`; valid for any N.
pub fn boundary_linking(dc: &DualCorrespondence, mu: &FieldChain, filling: &FieldChain) -> Result<u32> {
    intersection(dc, mu, filling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::dualize;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn dft_examples() {
        for n in [2usize, 3, 5, 7] {
            let mut delta = vec![c(0.0, 0.0); n];
            delta[0] = c(1.0, 0.0);
            for v in dft(&delta) {
                assert!((v - c(1.0 / (n as f64).sqrt(), 0.0)).norm() < 1e-12);
            }
            let chi1: Vec<C64> = (0..n as i64).map(|x| root_of_unity(n as u32, x)).collect();
            let f = dft(&chi1);
            for (k, v) in f.iter().enumerate() {
                let want = if k == 1 { (n as f64).sqrt() } else { 0.0 };
                assert!((v - c(want, 0.0)).norm() < 1e-12);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f: Vec<C64> = (0..5).map(|_| c(rng.gen(), rng.gen())).collect();
        let back = idft(&dft(&f));
        let err = f.iter().zip(&back).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
        let e1: f64 = f.iter().map(|v| v.norm_sqr()).sum();
        let e2: f64 = dft(&f).iter().map(|v| v.norm_sqr()).sum();
        assert!((e1 - e2).abs() < 1e-12);
    }

    #[test]
    fn dft_nd_matches_direct() {
        let (n, k) = (3usize, 2usize);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f: Vec<C64> = (0..9).map(|_| c(rng.gen(), rng.gen())).collect();
        let mut g = f.clone();
        dft_nd(&mut g, n, k, -1);
        for y in 0..9 {
            let (y0, y1) = (y / 3, y % 3);
            let want: C64 = (0..9)
                .map(|x| f[x] * root_of_unity(3, -((x / 3 * y0 + x % 3 * y1) as i64)))
                .sum();
            assert!((g[y] - want).norm() < 1e-12);
        }
    }

    #[test]
    fn zn_arithmetic() {
        let a = Zn::new(4, 7);
        assert_eq!((a * a.inv().unwrap()).value(), 1);
        assert_eq!((a + Zn::new(5, 7)).value(), 2);
        assert_eq!((-a).value(), 3);
        assert_eq!(a.pow(3).value(), 1);
        assert!(Zn::new(2, 4).inv().is_none());
    }

    #[test]
    fn solve_identity_and_composite_error() {
        let id = FpMatrix::identity(3, 5);
        assert_eq!(id.solve(&[1, 2, 3]).unwrap(), vec![1, 2, 3]);
        assert_eq!(FpMatrix::identity(2, 4).solve(&[1, 1]), Err(Error::CompositeModulus(4)));
    }

    #[test]
    fn solve_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2u32, 3] {
            for _ in 0..200 {
                let r = rng.gen_range(1..=4);
                let k = rng.gen_range(1..=4);
                let rows: Vec<Vec<u32>> = (0..r).map(|_| (0..k).map(|_| rng.gen_range(0..n)).collect()).collect();
                let a = FpMatrix::from_rows(&rows, n);
                let b: Vec<u32> = (0..r).map(|_| rng.gen_range(0..n)).collect();
                let total = (n as usize).pow(k as u32);
                let exists = (0..total).any(|mut code| {
                    let x: Vec<u32> = (0..k)
                        .map(|_| {
                            let d = code % n as usize;
                            code /= n as usize;
                            d as u32
                        })
                        .collect();
                    a.mul_vec(&x) == b
                });
                match a.solve(&b) {
                    Ok(x) => {
                        assert!(exists);
                        assert_eq!(a.mul_vec(&x), b);
                    }
                    Err(Error::NoSolution) => assert!(!exists),
                    Err(e) => panic!("{e}"),
                }
                let ker = a.kernel().unwrap();
                assert_eq!(ker.len(), k - a.rank().unwrap());
                for v in &ker {
                    assert!(a.mul_vec(v).iter().all(|&x| x == 0));
                }
            }
        }
    }

    #[test]
    fn boundary_preimage() {
        let t = CellComplex::build_torus(2, 3).unwrap();
        let d1 = FpMatrix::boundary(&t, 1, 3);
        let b = d1.column(4);
        let x = d1.solve(&b).unwrap();
        assert_eq!(d1.mul_vec(&x), b);
        // dim Z^1 = dim B^1 + 2 for cochains on T_3^2
        let d_on_1 = FpMatrix::boundary(&t, 2, 3).transpose();
        let z1 = t.count(1) - d_on_1.rank().unwrap();
        let b1 = FpMatrix::boundary(&t, 1, 3).transpose().rank().unwrap();
        assert_eq!(z1, b1 + 2);
    }

    #[test]
    fn radix3_and_digit_sub() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let k = 3;
        let data: Vec<C64> = (0..27).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        for sign in [-1i64, 1] {
            let mut fast = data.clone();
            dft_nd(&mut fast, 3, k, sign);
            let w = roots(3);
            for y in 0..27 {
                let yd = [y / 9, y / 3 % 3, y % 3];
                let direct: C64 = (0..27)
                    .map(|x| {
                        let xd = [x / 9, x / 3 % 3, x % 3];
                        let e: i64 = (0..3).map(|i| (xd[i] * yd[i]) as i64).sum();
                        data[x] * w[(sign * e).rem_euclid(3) as usize]
                    })
                    .sum();
                assert!((fast[y] - direct).norm() < 1e-12);
            }
        }
        for (n, k) in [(3usize, 5usize), (2, 4), (4, 1)] {
            let t = DigitSub::new(n, k);
            let dim = n.pow(k as u32);
            for a in (0..dim).step_by(7) {
                for b in (0..dim).step_by(5) {
                    let mut want = 0;
                    let (mut x, mut y, mut st) = (a, b, 1);
                    for _ in 0..k {
                        want += ((x % n + n - y % n) % n) * st;
                        x /= n;
                        y /= n;
                        st *= n;
                    }
                    assert_eq!(t.sub(a, b), want);
                }
            }
        }
    }

    #[test]
    fn torus_and_suspension_betti() {
        let t = Arc::new(CellComplex::build_torus(2, 3).unwrap());
        let b: Vec<usize> = (0..=2).map(|p| HomologyData::new(&t, p, 3).unwrap().betti()).collect();
        assert_eq!(b, vec![1, 2, 1]);
        let s = Arc::new(CellComplex::suspend(&t, 2).unwrap());
        assert_eq!(HomologyData::new(&s, 1, 3).unwrap().betti(), 3);
        assert_eq!(
            HomologyData::with_convention(&s, 1, 3, Convention::Alternate).unwrap().betti(),
            3
        );
    }

    #[test]
    fn filling_on_boundary_basis() {
        let t = Arc::new(CellComplex::build_torus(3, 3).unwrap());
        for conv in [Convention::Standard, Convention::Alternate] {
            let hd = HomologyData::with_convention(&t, 1, 3, conv).unwrap();
            for b in hd.boundary_basis() {
                let k = hd.fill(b).unwrap();
                assert_eq!(&t.boundary(&k).unwrap(), b);
            }
            for (i, r) in hd.representatives().iter().enumerate() {
                let mut e = vec![0; hd.betti()];
                e[i] = 1;
                assert_eq!(hd.class(r).unwrap(), e);
            }
        }
    }

    #[test]
    fn straight_loop_class() {
        let t = Arc::new(CellComplex::build_torus(2, 3).unwrap());
        let hd = HomologyData::new(&t, 1, 3).unwrap();
        let mut z = FieldChain::zeros(3, 1, t.count(1));
        for x0 in 0..3 {
            let cell = crate::complex::Cell { base: vec![x0, 1], axes: 1 };
            z.coeffs[t.index_of(1, &cell).unwrap()] = 1;
        }
        assert_eq!(hd.class(&z).unwrap(), vec![1, 0]);
        let sq = FieldChain::unit(3, 2, t.count(2), 5);
        assert_eq!(hd.class(&t.boundary(&sq).unwrap()).unwrap(), vec![0, 0]);
    }

    #[test]
    fn not_a_cycle_is_reported() {
        let t = Arc::new(CellComplex::build_torus(2, 3).unwrap());
        let hd = HomologyData::new(&t, 1, 3).unwrap();
        let e = FieldChain::unit(3, 1, t.count(1), 0);
        assert_eq!(hd.class(&e), Err(Error::NotACycle("homology class")));
    }

    #[test]
    fn intersection_basis_and_stokes() {
        let t = Arc::new(CellComplex::build_torus(3, 3).unwrap());
        let dc = dualize(&t).unwrap();
        let b = 7;
        let cv = dc.theta_inv(1, b);
        let xi = FieldChain::unit(3, 2, dc.dual.count(2), cv);
        assert_eq!(intersection(&dc, &xi, &FieldChain::unit(3, 1, t.count(1), b)).unwrap(), 1);
        assert_eq!(intersection(&dc, &xi, &FieldChain::unit(3, 1, t.count(1), b + 1)).unwrap(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let xi = FieldChain::from_i64(3, 2, (0..dc.dual.count(2)).map(|_| rng.gen_range(0..3)));
            let sigma = FieldChain::from_i64(3, 2, (0..t.count(2)).map(|_| rng.gen_range(0..3)));
            let lhs = intersection(&dc, &dc.dual.boundary(&xi).unwrap(), &sigma).unwrap();
            let rhs = intersection(&dc, &xi, &t.boundary(&sigma).unwrap()).unwrap();
            assert_eq!(lhs, rhs);
        }
    }
}
