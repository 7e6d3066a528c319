//! Reference evaluation of the decorated Trotterized trace on the qudit Hilbert
//! space `⊗_{b ∈ C_P(Λ)} C^N`.
//!
//! States are dense arrays indexed in mixed radix, P-cell 0 being the most
//! significant digit. Every X-type factor (stabilizer exponentials, sources,
//! electric twists, 't Hooft shifts) is a linear combination of shift
//! permutations, so the product of X-type factors acting on a basis vector is
//! a translate of one kernel. The fast trace uses that to replace one operator
//! application per column by a convolution; the dense trace applies every
//! factor to every basis vector.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use rand::Rng;

use crate::complex::{CellComplex, DualCorrespondence, FieldChain};
use crate::error::{Error, Result};
use crate::falgebra::{dft_nd, intersection, root_of_unity, DigitSub};
use crate::C64;

/// Cap on Hilbert-space dimension for the fast trace.
pub const DEFAULT_MAX_DIM: usize = 1 << 20;
/// Cap on Hilbert-space dimension for the dense (column-by-column) trace.
pub const DEFAULT_DENSE_MAX_DIM: usize = 1 << 12;

/// Couplings of the source-deformed code Hamiltonian and the Trotter data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrotterParams {
    pub modulus: u32,
    pub form_degree: usize,
    pub beta: f64,
    pub trotter_number: usize,
    /// `J_a` per (P−1)-cell.
    pub j: Vec<f64>,
    /// `K_c` per (P+1)-cell.
    pub k: Vec<f64>,
    /// `g_b^{(n)}` per P-cell, indexed `[b][n]`.
    pub g: Vec<Vec<C64>>,
    /// `h_b^{(n)}` per P-cell, indexed `[b][n]`.
    pub h: Vec<Vec<C64>>,
}

impl TrotterParams {
    /// Uniform couplings and vanishing sources.
    pub fn uniform(
        lambda: &CellComplex,
        p: usize,
        modulus: u32,
        beta: f64,
        m: usize,
        j: f64,
        k: f64,
    ) -> Self {
        let nb = lambda.count(p);
        TrotterParams {
            modulus,
            form_degree: p,
            beta,
            trotter_number: m,
            j: vec![j; lambda.count(p - 1)],
            k: vec![k; lambda.count(p + 1)],
            g: vec![vec![C64::new(0.0, 0.0); modulus as usize]; nb],
            h: vec![vec![C64::new(0.0, 0.0); modulus as usize]; nb],
        }
    }

    /// Random positive couplings in `[0.2, 1.2)` and complex sources of modulus below `0.3`.
    pub fn random<R: Rng>(
        lambda: &CellComplex,
        p: usize,
        modulus: u32,
        beta: f64,
        m: usize,
        rng: &mut R,
    ) -> Self {
        let n = modulus as usize;
        let mut src = |count: usize| -> Vec<Vec<C64>> {
            (0..count)
                .map(|_| {
                    (0..n)
                        .map(|_| C64::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)))
                        .collect()
                })
                .collect()
        };
        let g = src(lambda.count(p));
        let h = src(lambda.count(p));
        TrotterParams {
            modulus,
            form_degree: p,
            beta,
            trotter_number: m,
            j: (0..lambda.count(p - 1)).map(|_| rng.gen_range(0.2..1.2)).collect(),
            k: (0..lambda.count(p + 1)).map(|_| rng.gen_range(0.2..1.2)).collect(),
            g,
            h,
        }
    }

    pub fn validate(&self, lambda: &CellComplex) -> Result<()> {
        let p = self.form_degree;
        if self.modulus < 2 {
            return Err(Error::InvalidParameter("N must be at least 2".into()));
        }
        if p == 0 || p >= lambda.dim() {
            return Err(Error::InvalidParameter(format!(
                "form degree P={p} must satisfy 1 <= P <= d-1"
            )));
        }
        if !(self.beta > 0.0) || self.trotter_number == 0 {
            return Err(Error::InvalidParameter("need beta > 0 and M >= 1".into()));
        }
        let checks = [
            ("J", self.j.len(), lambda.count(p - 1)),
            ("K", self.k.len(), lambda.count(p + 1)),
            ("g", self.g.len(), lambda.count(p)),
            ("h", self.h.len(), lambda.count(p)),
        ];
        for (what, got, expected) in checks {
            if got != expected {
                return Err(Error::LengthMismatch {
                    what: match what {
                        "J" => "J couplings",
                        "K" => "K couplings",
                        "g" => "g sources",
                        _ => "h sources",
                    },
                    expected,
                    got,
                });
            }
        }
        if self.j.iter().chain(&self.k).any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter("J and K must be positive".into()));
        }
        let n = self.modulus as usize;
        if self.g.iter().chain(&self.h).any(|row| row.len() != n) {
            return Err(Error::InvalidParameter("source arrays must have length N".into()));
        }
        Ok(())
    }

    /// `g^{(n)} = conj g^{(−n)}` and `h^{(n)} = conj h^{(−n)}` within `tol`.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.modulus as usize;
        self.g.iter().chain(&self.h).all(|row| {
            (0..n).all(|k| (row[k] - row[(n - k) % n].conj()).norm() <= tol)
        })
    }

    /// Symmetrize the sources so that the Hamiltonian is Hermitian.
    pub fn hermitize(&mut self) {
        let n = self.modulus as usize;
        for row in self.g.iter_mut().chain(self.h.iter_mut()) {
            let old = row.clone();
            for k in 0..n {
                row[k] = (old[k] + old[(n - k) % n].conj()) * 0.5;
            }
        }
    }
}

/// Spatial insertions: Wilson cycle `ν`, 't Hooft dual cycle `μ∨`, electric
/// twist `α` and magnetic twist `β∨`.
#[derive(Clone, Debug, PartialEq)]
pub struct InsertionData {
    pub nu: FieldChain,
    pub mu: FieldChain,
    pub alpha: FieldChain,
    pub beta_dual: FieldChain,
}

impl InsertionData {
    pub fn zero(dc: &DualCorrespondence, p: usize, modulus: u32) -> Self {
        let d = dc.dim();
        InsertionData {
            nu: FieldChain::zeros(modulus, p, dc.primal.count(p)),
            mu: FieldChain::zeros(modulus, d - p, dc.dual.count(d - p)),
            alpha: FieldChain::zeros(modulus, p - 1, dc.primal.count(p - 1)),
            beta_dual: FieldChain::zeros(modulus, d - p - 1, dc.dual.count(d - p - 1)),
        }
    }

    pub fn validate(&self, dc: &DualCorrespondence, p: usize) -> Result<()> {
        let d = dc.dim();
        let shape = [
            (&self.nu, p, dc.primal.count(p), &dc.primal),
            (&self.mu, d - p, dc.dual.count(d - p), &dc.dual),
            (&self.alpha, p - 1, dc.primal.count(p - 1), &dc.primal),
            (&self.beta_dual, d - p - 1, dc.dual.count(d - p - 1), &dc.dual),
        ];
        for (chain, deg, len, x) in shape {
            if chain.degree != deg || chain.coeffs.len() != len {
                return Err(Error::DegreeMismatch {
                    expected: deg,
                    got: chain.degree,
                });
            }
            if !x.boundary(chain)?.is_zero() {
                return Err(Error::NotACycle("insertion"));
            }
        }
        Ok(())
    }
}

/// Indexing and elementary Weyl operators on `⊗_b C^N`.
#[derive(Clone, Debug)]
pub struct WeylSystem {
    pub modulus: u32,
    pub form_degree: usize,
    pub cells: usize,
    pub dim: usize,
    strides: Vec<usize>,
    /// For each (P−1)-cell, the exponent of `X_b` in `A_a`.
    a_exponents: Vec<Vec<(usize, u32)>>,
    /// For each (P+1)-cell, the exponent of `Z_b` in `B_c`.
    b_exponents: Vec<Vec<(usize, u32)>>,
    roots: Vec<C64>,
}

impl WeylSystem {
    pub fn new(lambda: &CellComplex, p: usize, modulus: u32, max_dim: usize) -> Result<Self> {
        let cells = lambda.count(p);
        let dim = (modulus as u128).pow(cells as u32);
        if dim > max_dim as u128 {
            return Err(Error::CapExceeded {
                what: "Hilbert space dimension",
                requested: dim,
                cap: max_dim as u128,
                hint: "use a smaller lattice or modulus",
            });
        }
        let dim = dim as usize;
        let nn = modulus as i64;
        let strides = (0..cells)
            .map(|b| (modulus as usize).pow((cells - 1 - b) as u32))
            .collect();
        let sign = if p % 2 == 0 { 1 } else { -1 };
        let a_exponents = (0..lambda.count(p - 1))
            .map(|a| {
                lambda
                    .cofaces(p - 1, a)
                    .iter()
                    .map(|&(b, e)| (b as usize, ((sign * e) as i64).rem_euclid(nn) as u32))
                    .collect()
            })
            .collect();
        let b_exponents = if p < lambda.dim() {
            (0..lambda.count(p + 1))
                .map(|c| {
                    lambda
                        .faces(p + 1, c)
                        .iter()
                        .map(|&(b, e)| (b as usize, (e as i64).rem_euclid(nn) as u32))
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(WeylSystem {
            modulus,
            form_degree: p,
            cells,
            dim,
            strides,
            a_exponents,
            b_exponents,
            roots: (0..modulus as i64).map(|k| root_of_unity(modulus, k)).collect(),
        })
    }

    pub fn digits(&self, mut idx: usize) -> Vec<u32> {
        let n = self.modulus as usize;
        let mut s = vec![0u32; self.cells];
        for b in (0..self.cells).rev() {
            s[b] = (idx % n) as u32;
            idx /= n;
        }
        s
    }

    pub fn index(&self, s: &[u32]) -> usize {
        s.iter().zip(&self.strides).map(|(&x, &st)| x as usize * st).sum()
    }

    fn omega(&self, k: u64) -> C64 {
        self.roots[(k % self.modulus as u64) as usize]
    }

    /// `Π_b X_b^{v_b}`: `|s⟩ ↦ |s + v⟩`.
    pub fn shift(&self, state: &[C64], v: &[u32]) -> Vec<C64> {
        let n = self.modulus;
        let mut out = vec![C64::new(0.0, 0.0); self.dim];
        let mut s = vec![0u32; self.cells];
        for &amp in state.iter() {
            let t: usize = s
                .iter()
                .zip(v)
                .zip(&self.strides)
                .map(|((&a, &b), &st)| ((a + b) % n) as usize * st)
                .sum();
            out[t] = amp;
            for b in (0..self.cells).rev() {
                s[b] += 1;
                if s[b] < n {
                    break;
                }
                s[b] = 0;
            }
        }
        out
    }

    /// `Π_b Z_b^{v_b}`: `|s⟩ ↦ ω^{v·s}|s⟩`.
    pub fn clock(&self, state: &[C64], v: &[u32]) -> Vec<C64> {
        state
            .iter()
            .enumerate()
            .map(|(i, &amp)| {
                let s = self.digits(i);
                let k: u64 = s.iter().zip(v).map(|(&a, &b)| a as u64 * b as u64).sum();
                amp * self.omega(k)
            })
            .collect()
    }

    pub fn x(&self, state: &[C64], b: usize, m: u32) -> Vec<C64> {
        let mut v = vec![0u32; self.cells];
        v[b] = m % self.modulus;
        self.shift(state, &v)
    }

    pub fn z(&self, state: &[C64], b: usize, m: u32) -> Vec<C64> {
        let mut v = vec![0u32; self.cells];
        v[b] = m % self.modulus;
        self.clock(state, &v)
    }

    /// Shift vector of `A_a^m`.
    pub fn a_vector(&self, a: usize, m: u32) -> Vec<u32> {
        let mut v = vec![0u32; self.cells];
        for &(b, e) in &self.a_exponents[a] {
            v[b] = ((v[b] as u64 + e as u64 * m as u64) % self.modulus as u64) as u32;
        }
        v
    }

    /// Clock vector of `B_c^m`.
    pub fn b_vector(&self, c: usize, m: u32) -> Vec<u32> {
        let mut v = vec![0u32; self.cells];
        for &(b, e) in &self.b_exponents[c] {
            v[b] = ((v[b] as u64 + e as u64 * m as u64) % self.modulus as u64) as u32;
        }
        v
    }

    pub fn a_op(&self, state: &[C64], a: usize, m: u32) -> Vec<C64> {
        self.shift(state, &self.a_vector(a, m))
    }

    pub fn b_op(&self, state: &[C64], c: usize, m: u32) -> Vec<C64> {
        self.clock(state, &self.b_vector(c, m))
    }

    /// `Σ_m coeff[m] · (shift by m·v)`.
    pub fn shift_series(&self, state: &[C64], v: &[u32], coeff: &[C64]) -> Vec<C64> {
        let n = self.modulus;
        let mut out = vec![C64::new(0.0, 0.0); self.dim];
        for (m, &c) in coeff.iter().enumerate() {
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            let vm: Vec<u32> = v.iter().map(|&x| (x * m as u32) % n).collect();
            for (o, s) in out.iter_mut().zip(self.shift(state, &vm)) {
                *o += c * s;
            }
        }
        out
    }

    /// `𝒜_a = N^{−1} Σ_m A_a^m`.
    pub fn a_projector(&self, state: &[C64], a: usize) -> Vec<C64> {
        let n = self.modulus as usize;
        let coeff = vec![C64::new(1.0 / n as f64, 0.0); n];
        self.shift_series(state, &self.a_vector(a, 1), &coeff)
    }

    /// `ℬ_c = N^{−1} Σ_m B_c^m`.
    pub fn b_projector(&self, state: &[C64], c: usize) -> Vec<C64> {
        let n = self.modulus as usize;
        let mut out = vec![C64::new(0.0, 0.0); self.dim];
        for m in 0..n {
            for (o, s) in out.iter_mut().zip(self.b_op(state, c, m as u32)) {
                *o += s / n as f64;
            }
        }
        out
    }

    pub fn random_state<R: Rng>(&self, rng: &mut R) -> Vec<C64> {
        (0..self.dim)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }
}

/// Coefficients `u_m` with `Σ_j f(j) Π_j = Σ_m u_m O^m` for `Π_j = N^{−1}Σ_m ω^{−jm} O^m`.
fn spectral_to_powers(f: &[C64], modulus: u32) -> Vec<C64> {
    let n = modulus as usize;
    (0..n)
        .map(|m| {
            (0..n)
                .map(|j| f[j] * root_of_unity(modulus, -((j * m) as i64)))
                .sum::<C64>()
                / n as f64
        })
        .collect()
}

/// Decorated-trace evaluator for one spatial lattice, parameters and insertions.
pub struct TraceOracle<'a> {
    pub weyl: WeylSystem,
    dc: &'a DualCorrespondence,
    params: &'a TrotterParams,
    ins: &'a InsertionData,
}

impl<'a> TraceOracle<'a> {
    pub fn new(
        dc: &'a DualCorrespondence,
        params: &'a TrotterParams,
        ins: &'a InsertionData,
        max_dim: usize,
    ) -> Result<Self> {
        let lambda = &dc.primal;
        params.validate(lambda)?;
        ins.validate(dc, params.form_degree)?;
        let weyl = WeylSystem::new(lambda, params.form_degree, params.modulus, max_dim)?;
        Ok(TraceOracle {
            weyl,
            dc,
            params,
            ins,
        })
    }

    fn n(&self) -> u32 {
        self.params.modulus
    }

    fn step(&self) -> f64 {
        self.params.beta / self.params.trotter_number as f64
    }

    /// 't Hooft shift vector `(−1)^P I(μ∨, b)`.
    pub fn thooft_vector(&self) -> Result<Vec<u32>> {
        let p = self.params.form_degree;
        let n = self.n();
        let lambda = &self.dc.primal;
        (0..lambda.count(p))
            .map(|b| {
                let i = intersection(
                    self.dc,
                    &self.ins.mu,
                    &FieldChain::unit(n, p, lambda.count(p), b),
                )? as i64;
                let s = if p % 2 == 0 { i } else { -i };
                Ok(s.rem_euclid(n as i64) as u32)
            })
            .collect()
    }

    /// Applies `[𝒯_{μ∨}] U_e(α) e^{−βH_x/M}` factor by factor.
    pub fn apply_x_part(&self, state: &[C64], with_thooft: bool) -> Result<Vec<C64>> {
        let n = self.n();
        let nn = n as usize;
        let x = self.step();
        let mut v = state.to_vec();
        // source factors exp((β/M) Σ_n g^{(n)} X^n) = Σ_j e^{G(j)} Π_j^{(X)}
        for b in 0..self.weyl.cells {
            let spec: Vec<C64> = (0..nn)
                .map(|j| {
                    let gsum: C64 = (0..nn)
                        .map(|k| self.params.g[b][k] * root_of_unity(n, (k * j) as i64))
                        .sum();
                    (gsum * x).exp()
                })
                .collect();
            let mut unit = vec![0u32; self.weyl.cells];
            unit[b] = 1;
            v = self.weyl.shift_series(&v, &unit, &spectral_to_powers(&spec, n));
        }
        // stabilizer factors exp((βJ_a/M) 𝒜_a) = 1 + (e^{βJ/M} − 1) 𝒜_a
        for a in 0..self.params.j.len() {
            let e = (x * self.params.j[a]).exp() - 1.0;
            let proj = self.weyl.a_projector(&v, a);
            for (o, pr) in v.iter_mut().zip(proj) {
                *o += pr * e;
            }
        }
        // electric twist Σ_j (λ_{j+α}/λ_j) Π_j^{(A)}
        for a in 0..self.params.j.len() {
            let al = self.ins.alpha.coeffs[a] as usize;
            if al == 0 {
                continue;
            }
            let lam = |j: usize| -> f64 {
                if j % nn == 0 {
                    (x * self.params.j[a]).exp()
                } else {
                    1.0
                }
            };
            let spec: Vec<C64> = (0..nn).map(|j| C64::new(lam(j + al) / lam(j), 0.0)).collect();
            v = self
                .weyl
                .shift_series(&v, &self.weyl.a_vector(a, 1), &spectral_to_powers(&spec, n));
        }
        if with_thooft {
            v = self.weyl.shift(&v, &self.thooft_vector()?);
        }
        Ok(v)
    }

    /// Diagonal of `[𝒲_ν] U_m(β∨) e^{−βH_z/M}` in the Z-basis.
    pub fn z_diagonal(&self, with_wilson: bool) -> Result<Vec<C64>> {
        let n = self.n();
        let nn = n as i64;
        let p = self.params.form_degree;
        let lambda = &self.dc.primal;
        let x = self.step();
        let beta_c = self.dc.vartheta(&self.ins.beta_dual)?;
        let faces: Vec<Vec<(u32, i32)>> = (0..lambda.count(p + 1))
            .map(|c| lambda.faces(p + 1, c).to_vec())
            .collect();
        Ok((0..self.weyl.dim)
            .into_par_iter()
            .map(|idx| {
                let s = self.weyl.digits(idx);
                let mut hz = C64::new(0.0, 0.0);
                let mut twist = 1.0;
                for (c, list) in faces.iter().enumerate() {
                    let ds = list
                        .iter()
                        .map(|&(b, e)| e as i64 * s[b as usize] as i64)
                        .sum::<i64>()
                        .rem_euclid(nn);
                    let k = self.params.k[c];
                    if ds == 0 {
                        hz -= k;
                    }
                    let rho = |j: i64| if j.rem_euclid(nn) == 0 { (x * k).exp() } else { 1.0 };
                    twist *= rho(ds + beta_c.coeffs[c] as i64) / rho(ds);
                }
                for (b, &sb) in s.iter().enumerate() {
                    for k in 0..n as usize {
                        hz -= self.params.h[b][k] * root_of_unity(n, k as i64 * sb as i64);
                    }
                }
                let mut val = (-hz * x).exp() * twist;
                if with_wilson {
                    let w: i64 = s
                        .iter()
                        .zip(&self.ins.nu.coeffs)
                        .map(|(&a, &b)| a as i64 * b as i64)
                        .sum();
                    val *= root_of_unity(n, w);
                }
                val
            })
            .collect())
    }

    /// Column-by-column evaluation with explicit factor applications.
    pub fn trace_dense(&self) -> Result<C64> {
        if self.weyl.dim > DEFAULT_DENSE_MAX_DIM {
            return Err(Error::CapExceeded {
                what: "dense trace dimension",
                requested: self.weyl.dim as u128,
                cap: DEFAULT_DENSE_MAX_DIM as u128,
                hint: "use the convolution trace",
            });
        }
        let m = self.params.trotter_number;
        let d0 = self.z_diagonal(true)?;
        let d = self.z_diagonal(false)?;
        let parts: Vec<Result<C64>> = (0..self.weyl.dim)
            .into_par_iter()
            .map(|s0| {
                let mut v = vec![C64::new(0.0, 0.0); self.weyl.dim];
                v[s0] = C64::new(1.0, 0.0);
                for _ in 1..m {
                    v = self.apply_x_part(&v, false)?;
                    for (a, b) in v.iter_mut().zip(&d) {
                        *a *= b;
                    }
                }
                v = self.apply_x_part(&v, true)?;
                Ok(v[s0] * d0[s0])
            })
            .collect();
        let mut acc = C64::new(0.0, 0.0);
        for p in parts {
            acc += p?;
        }
        Ok(acc)
    }

    /// Trace using translation invariance of the X-type factors.
    pub fn trace(&self) -> Result<C64> {
        let m = self.params.trotter_number;
        let dim = self.weyl.dim;
        let n = self.n() as usize;
        let cells = self.weyl.cells;
        let mut e0 = vec![C64::new(0.0, 0.0); dim];
        e0[0] = C64::new(1.0, 0.0);
        let k0 = self.apply_x_part(&e0, true)?;
        let d0 = self.z_diagonal(true)?;
        if m == 1 {
            return Ok(k0[0] * d0.iter().sum::<C64>());
        }
        let k = self.apply_x_part(&e0, false)?;
        let d = self.z_diagonal(false)?;
        let mut k_hat = k.clone();
        dft_nd(&mut k_hat, n, cells, -1);
        let table = DigitSub::new(n, cells);
        let sub_fast = |t: usize, s: usize| table.sub(t, s);
        let parts: Vec<C64> = (0..dim)
            .into_par_iter()
            .map(|s0| {
                let mut v: Vec<C64> = (0..dim).map(|t| k[sub_fast(t, s0)] * d[t]).collect();
                for _ in 2..m {
                    dft_nd(&mut v, n, cells, -1);
                    for (a, b) in v.iter_mut().zip(&k_hat) {
                        *a *= b;
                    }
                    dft_nd(&mut v, n, cells, 1);
                    for (a, b) in v.iter_mut().zip(&d) {
                        *a *= b / dim as f64;
                    }
                }
                let acc: C64 = (0..dim).map(|t| k0[sub_fast(s0, t)] * v[t]).sum();
                acc * d0[s0]
            })
            .collect();
        Ok(parts.into_iter().sum())
    }
}

/// Decorated Trotterized trace (convolution method).
pub fn decorated_trace(
    dc: &DualCorrespondence,
    params: &TrotterParams,
    ins: &InsertionData,
) -> Result<C64> {
    TraceOracle::new(dc, params, ins, DEFAULT_MAX_DIM)?.trace()
}

/// Decorated Trotterized trace by explicit column-by-column operator products.
pub fn decorated_trace_dense(
    dc: &DualCorrespondence,
    params: &TrotterParams,
    ins: &InsertionData,
) -> Result<C64> {
    TraceOracle::new(dc, params, ins, DEFAULT_DENSE_MAX_DIM)?.trace_dense()
}

/// Element `ω^phase X^x Z^z` of the Weyl group on `⊗_b C^N`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeylWord {
    pub modulus: u32,
    pub phase: u32,
    pub x: Vec<u32>,
    pub z: Vec<u32>,
}

impl WeylWord {
    pub fn identity(modulus: u32, cells: usize) -> Self {
        WeylWord {
            modulus,
            phase: 0,
            x: vec![0; cells],
            z: vec![0; cells],
        }
    }

    pub fn shift(modulus: u32, x: Vec<u32>) -> Self {
        let z = vec![0; x.len()];
        WeylWord {
            modulus,
            phase: 0,
            x,
            z,
        }
    }

    pub fn clock(modulus: u32, z: Vec<u32>) -> Self {
        let x = vec![0; z.len()];
        WeylWord {
            modulus,
            phase: 0,
            x,
            z,
        }
    }

    fn dot(&self, a: &[u32], b: &[u32]) -> u64 {
        let n = self.modulus as u64;
        a.iter().zip(b).map(|(&u, &v)| u as u64 * v as u64 % n).sum::<u64>() % n
    }

    /// Product `self · o`, using `Z^b X^c = ω^{b·c} X^c Z^b`.
    pub fn mul(&self, o: &WeylWord) -> WeylWord {
        let n = self.modulus;
        let add = |a: &[u32], b: &[u32]| a.iter().zip(b).map(|(&u, &v)| (u + v) % n).collect();
        let ph = (self.phase as u64 + o.phase as u64 + self.dot(&self.z, &o.x)) % n as u64;
        WeylWord {
            modulus: n,
            phase: ph as u32,
            x: add(&self.x, &o.x),
            z: add(&self.z, &o.z),
        }
    }

    pub fn pow(&self, k: u32) -> WeylWord {
        let mut acc = WeylWord::identity(self.modulus, self.x.len());
        for _ in 0..k {
            acc = acc.mul(self);
        }
        acc
    }

    /// `k` with `self · o = ω^k o · self`.
    pub fn commutator_phase(&self, o: &WeylWord) -> u32 {
        let n = self.modulus as u64;
        ((self.dot(&self.z, &o.x) + n - self.dot(&o.z, &self.x)) % n) as u32
    }

    /// Action on a dense state.
    pub fn apply(&self, w: &WeylSystem, state: &[C64]) -> Vec<C64> {
        let ph = root_of_unity(self.modulus, self.phase as i64);
        w.shift(&w.clock(state, &self.z), &self.x)
            .into_iter()
            .map(|v| v * ph)
            .collect()
    }
}

/// Outcome of the stabilizer / Wilson / 't Hooft algebra checks. The exact
/// checks run in the Weyl-group representation; the `*_err` fields repeat them
/// on random dense states when the Hilbert space is small enough.
#[derive(Clone, Debug, Serialize)]
pub struct WtAlgebraReport {
    pub stabilizers_commute: bool,
    pub wilson_is_stabilizer_product: bool,
    pub thooft_is_stabilizer_product: bool,
    pub commutator_phase: u32,
    pub expected_phase: u32,
    pub intersection: u32,
    pub weyl_relation_err: Option<f64>,
    pub state_commutator_err: Option<f64>,
    pub projector_idempotence_err: Option<f64>,
    pub state_relation_err: Option<f64>,
    pub passed: bool,
}

fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Dimension below which the algebra check is repeated on dense random states.
pub const ALGEBRA_STATE_DIM: usize = 1 << 14;

/// Checks that stabilizers commute, that `𝒲_{∂C}` and `𝒯_{∂Ξ∨}` are
/// stabilizer products, and the mixed commutator phase `ω^{−(−1)^P I(μ∨,ν)}`.
#[allow(clippy::too_many_arguments)]
pub fn wt_algebra_check<R: Rng>(
    dc: &DualCorrespondence,
    p: usize,
    modulus: u32,
    big_c: &FieldChain,
    big_xi: &FieldChain,
    mu: &FieldChain,
    nu: &FieldChain,
    rng: &mut R,
) -> Result<WtAlgebraReport> {
    let lambda = &dc.primal;
    let d = dc.dim();
    let n = modulus;
    if big_c.degree != p + 1 || big_xi.degree != d - p + 1 || mu.degree != d - p || nu.degree != p {
        return Err(Error::DegreeMismatch {
            expected: p,
            got: nu.degree,
        });
    }
    let cells = lambda.count(p);
    let sign = |i: u32| -> u32 {
        if p % 2 == 0 {
            i
        } else {
            (n - i) % n
        }
    };
    let sign_e = if p % 2 == 0 { 1i64 } else { -1 };
    let a_word = |a: usize| {
        let mut x = vec![0u32; cells];
        for &(b, e) in lambda.cofaces(p - 1, a) {
            x[b as usize] = ((x[b as usize] as i64 + sign_e * e as i64).rem_euclid(n as i64)) as u32;
        }
        WeylWord::shift(n, x)
    };
    let b_word = |c: usize| {
        let mut z = vec![0u32; cells];
        for &(b, e) in lambda.faces(p + 1, c) {
            z[b as usize] = ((z[b as usize] as i64 + e as i64).rem_euclid(n as i64)) as u32;
        }
        WeylWord::clock(n, z)
    };
    let a_words: Vec<WeylWord> = (0..lambda.count(p - 1)).map(a_word).collect();
    let b_words: Vec<WeylWord> = (0..lambda.count(p + 1)).map(b_word).collect();
    let stabilizers_commute = a_words
        .iter()
        .all(|a| b_words.iter().all(|b| a.commutator_phase(b) == 0));
    // 𝒲_{∂C} against Π_c B_c^{C_c}
    let wilson = WeylWord::clock(n, lambda.boundary(big_c)?.coeffs);
    let mut prod = WeylWord::identity(n, cells);
    for (c, &k) in big_c.coeffs.iter().enumerate() {
        prod = prod.mul(&b_words[c].pow(k));
    }
    let wilson_ok = wilson == prod;
    // 𝒯_{∂Ξ∨} against Π_a A_a^{Ξ∨_{θ⁻¹a}}
    let thooft_vec = |m: &FieldChain| -> Result<Vec<u32>> {
        (0..cells)
            .map(|b| Ok(sign(intersection(dc, m, &FieldChain::unit(n, p, cells, b))?)))
            .collect()
    };
    let thooft = WeylWord::shift(n, thooft_vec(&dc.dual.boundary(big_xi)?)?);
    let mut prod = WeylWord::identity(n, cells);
    for (a, w) in a_words.iter().enumerate() {
        prod = prod.mul(&w.pow(big_xi.coeffs[dc.theta_inv(p - 1, a)]));
    }
    let thooft_ok = thooft == prod;
    // mixed commutator 𝒯 𝒲 = ω^{−(−1)^P I} 𝒲 𝒯
    let t = WeylWord::shift(n, thooft_vec(mu)?);
    let w = WeylWord::clock(n, nu.coeffs.clone());
    let i_mn = intersection(dc, mu, nu)?;
    let phase = t.commutator_phase(&w);
    let expected = (n - sign(i_mn)) % n;
    let mut report = WtAlgebraReport {
        stabilizers_commute,
        wilson_is_stabilizer_product: wilson_ok,
        thooft_is_stabilizer_product: thooft_ok,
        commutator_phase: phase,
        expected_phase: expected,
        intersection: i_mn,
        weyl_relation_err: None,
        state_commutator_err: None,
        projector_idempotence_err: None,
        state_relation_err: None,
        passed: false,
    };
    let tol = 1e-12;
    let mut state_ok = true;
    if let Ok(ws) = WeylSystem::new(lambda, p, n, ALGEBRA_STATE_DIM) {
        let psi = ws.random_state(rng);
        let mut weyl_err: f64 = 0.0;
        for b in 0..cells.min(3) {
            for (r, s) in [(1, 1), (2 % n, 1), (1, n - 1)] {
                let lhs = ws.z(&ws.x(&psi, b, s), b, r);
                let ph = root_of_unity(n, (r * s) as i64);
                let rhs: Vec<C64> = ws.x(&ws.z(&psi, b, r), b, s).into_iter().map(|v| v * ph).collect();
                weyl_err = weyl_err.max(max_diff(&lhs, &rhs));
            }
        }
        let mut comm_err: f64 = 0.0;
        for a in 0..a_words.len() {
            for c in 0..b_words.len() {
                let ab = ws.a_op(&ws.b_op(&psi, c, 1), a, 1);
                let ba = ws.b_op(&ws.a_op(&psi, a, 1), c, 1);
                comm_err = comm_err.max(max_diff(&ab, &ba));
            }
        }
        let mut idem_err: f64 = 0.0;
        for a in 0..a_words.len() {
            let once = ws.a_projector(&psi, a);
            idem_err = idem_err.max(max_diff(&once, &ws.a_projector(&once, a)));
        }
        for c in 0..b_words.len() {
            let once = ws.b_projector(&psi, c);
            idem_err = idem_err.max(max_diff(&once, &ws.b_projector(&once, c)));
        }
        let tw = t.apply(&ws, &w.apply(&ws, &psi));
        let ph = root_of_unity(n, expected as i64);
        let wt: Vec<C64> = w.apply(&ws, &t.apply(&ws, &psi)).into_iter().map(|v| v * ph).collect();
        let rel_err = max_diff(&tw, &wt);
        state_ok = [weyl_err, comm_err, idem_err, rel_err].iter().all(|&e| e < tol);
        report.weyl_relation_err = Some(weyl_err);
        report.state_commutator_err = Some(comm_err);
        report.projector_idempotence_err = Some(idem_err);
        report.state_relation_err = Some(rel_err);
    }
    report.passed = stabilizers_commute && wilson_ok && thooft_ok && phase == expected && state_ok;
    Ok(report)
}
