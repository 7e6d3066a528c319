//! Classical fixed-background partition functions on the suspension lattice.
//!
//! A configuration is a P-cochain `φ` on `X̄`. Its weight is
//! `χ(∫_{q_e} φ) Π_c W_c((Dφ + ϑq_m)_c) Π_u V_u(φ_u)`.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::{CellComplex, DualCorrespondence, FieldChain, FieldCochain};
use crate::error::{Error, Result};
use crate::falgebra::{dft_nd, is_prime, kernel_count_mod, roots, DigitSub, FpMatrix};
use crate::quantum_oracle::{InsertionData, TrotterParams};
use crate::C64;

/// Default cap on `N^{|C_P(X̄)|}` for exhaustive enumeration.
pub const DEFAULT_ENUM_CAP: u128 = 1 << 26;
/// Default cap on the slice dimension `N^{|C_P(Λ)|}` of the sliced evaluator.
pub const DEFAULT_SLICE_CAP: u128 = 1 << 20;

/// Local weight functions, one length-N array per (P+1)-cell (`w`) and per
/// P-cell (`v`).
#[derive(Clone, Debug, PartialEq)]
pub struct LocalWeights {
    pub modulus: u32,
    pub form_degree: usize,
    pub w: Vec<Vec<C64>>,
    pub v: Vec<Vec<C64>>,
}

#[derive(Serialize, Deserialize)]
struct WeightsJson {
    modulus: u32,
    form_degree: usize,
    #[serde(rename = "W")]
    w: BTreeMap<usize, Vec<[f64; 2]>>,
    #[serde(rename = "V")]
    v: BTreeMap<usize, Vec<[f64; 2]>>,
}

impl LocalWeights {
    pub fn constant(x: &CellComplex, p: usize, modulus: u32, value: C64) -> Self {
        let n = modulus as usize;
        LocalWeights {
            modulus,
            form_degree: p,
            w: vec![vec![value; n]; x.count(p + 1)],
            v: vec![vec![value; n]; x.count(p)],
        }
    }

    pub fn ones(x: &CellComplex, p: usize, modulus: u32) -> Self {
        Self::constant(x, p, modulus, C64::new(1.0, 0.0))
    }

    /// Random complex weights with a dominant zero mode.
    pub fn random<R: Rng>(x: &CellComplex, p: usize, modulus: u32, rng: &mut R) -> Self {
        let n = modulus as usize;
        let mut table = |count: usize| -> Vec<Vec<C64>> {
            (0..count)
                .map(|_| {
                    (0..n)
                        .map(|k| {
                            let re = rng.gen_range(0.1..0.6) + if k == 0 { 1.0 } else { 0.0 };
                            C64::new(re, rng.gen_range(-0.3..0.3))
                        })
                        .collect()
                })
                .collect()
        };
        let w = table(x.count(p + 1));
        let v = table(x.count(p));
        LocalWeights {
            modulus,
            form_degree: p,
            w,
            v,
        }
    }

    pub fn validate(&self, x: &CellComplex) -> Result<()> {
        let n = self.modulus as usize;
        let p = self.form_degree;
        if self.w.len() != x.count(p + 1) {
            return Err(Error::LengthMismatch {
                what: "W table",
                expected: x.count(p + 1),
                got: self.w.len(),
            });
        }
        if self.v.len() != x.count(p) {
            return Err(Error::LengthMismatch {
                what: "V table",
                expected: x.count(p),
                got: self.v.len(),
            });
        }
        for arr in self.w.iter().chain(&self.v) {
            if arr.len() != n {
                return Err(Error::LengthMismatch {
                    what: "weight array",
                    expected: n,
                    got: arr.len(),
                });
            }
        }
        Ok(())
    }

    /// Weights seen from a complex whose cells are flipped by `sw` (on
    /// (P+1)-cells) and `sv` (on P-cells): `W_c(x) → W_c(σ_c x)`.
    pub fn reoriented(&self, sw: &[i8], sv: &[i8]) -> Self {
        let n = self.modulus as i64;
        let flip = |arr: &Vec<C64>, s: i8| -> Vec<C64> {
            (0..n)
                .map(|x| arr[(s as i64 * x).rem_euclid(n) as usize])
                .collect()
        };
        LocalWeights {
            modulus: self.modulus,
            form_degree: self.form_degree,
            w: self.w.iter().zip(sw).map(|(a, &s)| flip(a, s)).collect(),
            v: self.v.iter().zip(sv).map(|(a, &s)| flip(a, s)).collect(),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let pack = |t: &Vec<Vec<C64>>| -> BTreeMap<usize, Vec<[f64; 2]>> {
            t.iter()
                .enumerate()
                .map(|(i, a)| (i, a.iter().map(|z| [z.re, z.im]).collect()))
                .collect()
        };
        serde_json::to_value(WeightsJson {
            modulus: self.modulus,
            form_degree: self.form_degree,
            w: pack(&self.w),
            v: pack(&self.v),
        })
        .expect("weight tables serialize")
    }

    pub fn from_json(value: &serde_json::Value, x: &CellComplex) -> Result<Self> {
        let raw: WeightsJson = serde_json::from_value(value.clone())
            .map_err(|e| Error::InvalidParameter(format!("weight table: {e}")))?;
        let unpack = |t: &BTreeMap<usize, Vec<[f64; 2]>>, count: usize| -> Result<Vec<Vec<C64>>> {
            (0..count)
                .map(|i| {
                    t.get(&i)
                        .map(|a| a.iter().map(|&[re, im]| C64::new(re, im)).collect())
                        .ok_or_else(|| Error::InvalidParameter(format!("weight table lacks cell {i}")))
                })
                .collect()
        };
        let out = LocalWeights {
            modulus: raw.modulus,
            form_degree: raw.form_degree,
            w: unpack(&raw.w, x.count(raw.form_degree + 1))?,
            v: unpack(&raw.v, x.count(raw.form_degree))?,
        };
        out.validate(x)?;
        Ok(out)
    }
}

/// Spacetime background: magnetic dual cycle `q_m` (degree d−P on `X̄∨`) and
/// electric cycle `q_e` (degree P on `X̄`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundCharge {
    pub q_m: FieldChain,
    pub q_e: FieldChain,
}

impl BackgroundCharge {
    pub fn zero(bar: &DualCorrespondence, p: usize, modulus: u32) -> Self {
        let q = bar.dim() - p - 1;
        BackgroundCharge {
            q_m: FieldChain::zeros(modulus, q, bar.dual.count(q)),
            q_e: FieldChain::zeros(modulus, p, bar.primal.count(p)),
        }
    }

    pub fn validate(&self, bar: &DualCorrespondence, p: usize) -> Result<()> {
        let q = bar.dim() - p - 1;
        if self.q_e.degree != p || self.q_e.len() != bar.primal.count(p) {
            return Err(Error::DegreeMismatch {
                expected: p,
                got: self.q_e.degree,
            });
        }
        if self.q_m.degree != q || self.q_m.len() != bar.dual.count(q) {
            return Err(Error::DegreeMismatch {
                expected: q,
                got: self.q_m.degree,
            });
        }
        if !bar.primal.boundary(&self.q_e)?.is_zero() {
            return Err(Error::NotACycle("q_e"));
        }
        if !bar.dual.boundary(&self.q_m)?.is_zero() {
            return Err(Error::NotACycle("q_m"));
        }
        Ok(())
    }

    /// Magnetic shift cochain `ϑ(q_m)` of degree P+1 on `X̄`.
    pub fn shift(&self, bar: &DualCorrespondence) -> Result<FieldCochain> {
        bar.vartheta(&self.q_m)
    }
}

fn suspension_parts(xbar: &CellComplex) -> Result<(&CellComplex, usize)> {
    let sd = xbar
        .suspension()
        .ok_or_else(|| Error::InvalidParameter("complex is not a suspension".into()))?;
    Ok((&sd.spatial, sd.m))
}

/// Trotter weights of the neutral spacetime model.
pub fn trotter_weights(xbar: &CellComplex, params: &TrotterParams) -> Result<LocalWeights> {
    let (lambda, m) = suspension_parts(xbar)?;
    params.validate(lambda)?;
    if m != params.trotter_number {
        return Err(Error::InvalidParameter(format!(
            "suspension has M={m} but params have M={}",
            params.trotter_number
        )));
    }
    let p = params.form_degree;
    let n = params.modulus;
    let nn = n as usize;
    let x = params.beta / m as f64;
    let w_roots = roots(n);
    let sgn: i64 = if p % 2 == 0 { 1 } else { -1 };
    let mut out = LocalWeights::ones(xbar, p, n);

    for c in 0..lambda.count(p + 1) {
        let big = (x * params.k[c]).exp() - 1.0;
        for i in 0..m {
            let arr = &mut out.w[xbar.horizontal(p + 1, c, i)];
            arr[0] = C64::new(1.0 + big, 0.0);
        }
    }
    for b in 0..lambda.count(p) {
        let vpar: Vec<C64> = (0..nn)
            .map(|s| {
                let e: C64 = (0..nn).map(|k| params.h[b][k] * w_roots[k * s % nn]).sum();
                (e * x).exp()
            })
            .collect();
        let spec: Vec<C64> = (0..nn)
            .map(|j| {
                let e: C64 = (0..nn).map(|k| params.g[b][k] * w_roots[k * j % nn]).sum();
                (e * x).exp()
            })
            .collect();
        let wperp: Vec<C64> = (0..nn as i64)
            .map(|y| {
                (0..nn as i64)
                    .map(|j| spec[j as usize] * w_roots[(sgn * j * y).rem_euclid(nn as i64) as usize])
                    .sum::<C64>()
                    / nn as f64
            })
            .collect();
        for i in 0..m {
            out.v[xbar.horizontal(p, b, i)] = vpar.clone();
            out.w[xbar.vertical(p + 1, b, i)] = wperp.clone();
        }
    }
    if p >= 1 {
        for a in 0..lambda.count(p - 1) {
            let e = ((x * params.j[a]).exp() - 1.0) / nn as f64;
            let vperp: Vec<C64> = (0..nn)
                .map(|y| C64::new(if y == 0 { 1.0 + e } else { e }, 0.0))
                .collect();
            for i in 0..m {
                out.v[xbar.vertical(p, a, i)] = vperp.clone();
            }
        }
    }
    // weights are given in the product orientation
    let sw = xbar.orientation(p + 1).to_vec();
    let sv = xbar.orientation(p).to_vec();
    Ok(out.reoriented(&sw, &sv))
}

/// Lifts spatial insertions to the spacetime background:
/// `q_e = ν(0) + Sus(α)` and `ϑ(q_m) = ϑ(μ∨) on the first slab + ϑ(β∨) on every slice`.
pub fn lift_background(
    spatial: &DualCorrespondence,
    bar: &DualCorrespondence,
    ins: &InsertionData,
    p: usize,
) -> Result<BackgroundCharge> {
    ins.validate(spatial, p)?;
    let xbar = &bar.primal;
    let (lambda, m) = suspension_parts(xbar)?;
    if lambda.count(p) != spatial.primal.count(p) || lambda.lengths() != spatial.primal.lengths() {
        return Err(Error::InvalidParameter(
            "suspension is not built on the given spatial complex".into(),
        ));
    }
    let n = ins.nu.modulus;
    let mut qe = FieldChain::zeros(n, p, xbar.count(p));
    let op = xbar.orientation(p);
    let put = |chain: &mut FieldChain, idx: usize, val: u32, s: i8| {
        let v = if s < 0 { (n - val % n) % n } else { val % n };
        chain.coeffs[idx] = (chain.coeffs[idx] + v) % n;
    };
    for b in 0..lambda.count(p) {
        let idx = xbar.horizontal(p, b, 0);
        put(&mut qe, idx, ins.nu.coeffs[b], op[idx]);
    }
    for a in 0..lambda.count(p - 1) {
        for i in 0..m {
            let idx = xbar.vertical(p, a, i);
            put(&mut qe, idx, ins.alpha.coeffs[a], op[idx]);
        }
    }
    let mu_c = spatial.vartheta(&ins.mu)?;
    let beta_c = spatial.vartheta(&ins.beta_dual)?;
    let mut eta = FieldChain::zeros(n, p + 1, xbar.count(p + 1));
    let oq = xbar.orientation(p + 1);
    for b in 0..lambda.count(p) {
        let idx = xbar.vertical(p + 1, b, 0);
        put(&mut eta, idx, mu_c.coeffs[b], oq[idx]);
    }
    for c in 0..lambda.count(p + 1) {
        for i in 0..m {
            let idx = xbar.horizontal(p + 1, c, i);
            put(&mut eta, idx, beta_c.coeffs[c], oq[idx]);
        }
    }
    let bg = BackgroundCharge {
        q_m: bar.vartheta_inv(&eta)?,
        q_e: qe,
    };
    bg.validate(bar, p)?;
    Ok(bg)
}

/// Depth-first enumeration state shared by all workers.
struct Enumerator<'a> {
    n: usize,
    levels: usize,
    /// `(coface, incidence mod N)` per P-cell
    cofaces: Vec<Vec<(usize, usize)>>,
    /// (P+1)-cells whose last face is the given P-cell
    closing: Vec<Vec<usize>>,
    /// `V_u(x) χ(q_e,u x)` per P-cell
    vx: Vec<Vec<C64>>,
    w: &'a [Vec<C64>],
}

impl Enumerator<'_> {
    fn dfs(&self, level: usize, prod: C64, acc: &mut [usize]) -> C64 {
        if level == self.levels {
            return prod;
        }
        let n = self.n;
        let mut sum = C64::new(0.0, 0.0);
        for x in 0..n {
            if x > 0 {
                for &(c, e) in &self.cofaces[level] {
                    acc[c] = (acc[c] + e) % n;
                }
            }
            let mut f = prod * self.vx[level][x];
            for &c in &self.closing[level] {
                f *= self.w[c][acc[c]];
            }
            if f != C64::new(0.0, 0.0) {
                sum += self.dfs(level + 1, f, acc);
            }
        }
        for &(c, e) in &self.cofaces[level] {
            acc[c] = (acc[c] + e) % n;
        }
        sum
    }
}

/// Exhaustive sum with explicit electric coefficients `qe` and shift `eta`.
pub fn enumerate_raw(
    x: &CellComplex,
    w: &LocalWeights,
    qe: &[u32],
    eta: &[u32],
    cap: u128,
) -> Result<C64> {
    w.validate(x)?;
    let p = w.form_degree;
    let n = w.modulus as usize;
    let levels = x.count(p);
    let configs = (n as u128).checked_pow(levels as u32).unwrap_or(u128::MAX);
    if configs > cap {
        return Err(Error::CapExceeded {
            what: "partition_exact",
            requested: configs,
            cap,
            hint: "use the sliced evaluator or the closed-defect/sector route",
        });
    }
    let chi = roots(w.modulus);
    let ncells = x.count(p + 1);
    let mut closing = vec![Vec::new(); levels];
    let mut constant = C64::new(1.0, 0.0);
    for c in 0..ncells {
        match x.faces(p + 1, c).iter().map(|&(f, _)| f as usize).max() {
            Some(last) => closing[last].push(c),
            None => constant *= w.w[c][eta[c] as usize % n],
        }
    }
    let cofaces: Vec<Vec<(usize, usize)>> = (0..levels)
        .map(|u| {
            x.cofaces(p, u)
                .iter()
                .map(|&(c, e)| (c as usize, (e as i64).rem_euclid(n as i64) as usize))
                .collect()
        })
        .collect();
    let vx: Vec<Vec<C64>> = (0..levels)
        .map(|u| {
            (0..n)
                .map(|s| w.v[u][s] * chi[(qe[u] as usize * s) % n])
                .collect()
        })
        .collect();
    let en = Enumerator {
        n,
        levels,
        cofaces,
        closing,
        vx,
        w: &w.w,
    };
    let acc0: Vec<usize> = eta.iter().map(|&e| e as usize % n).collect();
    // split the leading digits across workers
    let mut split = 0;
    while split < levels && n.pow(split as u32) < 256 {
        split += 1;
    }
    let parts: Vec<C64> = (0..n.pow(split as u32))
        .into_par_iter()
        .map(|prefix| {
            let mut acc = acc0.clone();
            let mut prod = constant;
            let mut digits = vec![0usize; split];
            let mut r = prefix;
            for k in (0..split).rev() {
                digits[k] = r % n;
                r /= n;
            }
            for (level, &xv) in digits.iter().enumerate() {
                for &(c, e) in &en.cofaces[level] {
                    acc[c] = (acc[c] + e * xv) % n;
                }
                prod *= en.vx[level][xv];
                for &c in &en.closing[level] {
                    prod *= en.w[c][acc[c]];
                }
            }
            if prod == C64::new(0.0, 0.0) {
                return prod;
            }
            en.dfs(split, prod, &mut acc)
        })
        .collect();
    Ok(parts.into_iter().sum())
}

/// `Z(q_m, q_e)` by exhaustive enumeration of P-cochains.
pub fn partition_exact(bar: &DualCorrespondence, w: &LocalWeights, bg: &BackgroundCharge) -> Result<C64> {
    partition_exact_capped(bar, w, bg, DEFAULT_ENUM_CAP)
}

pub fn partition_exact_capped(
    bar: &DualCorrespondence,
    w: &LocalWeights,
    bg: &BackgroundCharge,
    cap: u128,
) -> Result<C64> {
    bg.validate(bar, w.form_degree)?;
    let eta = bg.shift(bar)?;
    enumerate_raw(&bar.primal, w, &bg.q_e.coeffs, &eta.coeffs, cap)
}

/// `Z(q_m, q_e)` on a suspension, summing the vertical variables slab by slab
/// in closed form and the horizontal slices by a column-wise trace.
pub fn partition_sliced(bar: &DualCorrespondence, w: &LocalWeights, bg: &BackgroundCharge) -> Result<C64> {
    partition_sliced_capped(bar, w, bg, DEFAULT_SLICE_CAP)
}

pub fn partition_sliced_capped(
    bar: &DualCorrespondence,
    w: &LocalWeights,
    bg: &BackgroundCharge,
    cap: u128,
) -> Result<C64> {
    let xbar = &bar.primal;
    let p = w.form_degree;
    w.validate(xbar)?;
    bg.validate(bar, p)?;
    let (lambda, m) = suspension_parts(xbar)?;
    let n = w.modulus as usize;
    let ni = n as i64;
    let nb = lambda.count(p);
    let dim128 = (n as u128).checked_pow(nb as u32).unwrap_or(u128::MAX);
    if dim128 > cap {
        return Err(Error::CapExceeded {
            what: "partition_sliced slice dimension",
            requested: dim128,
            cap,
            hint: "use the closed-defect/sector route",
        });
    }
    let dim = dim128 as usize;
    // pass to the product orientation
    let sw = xbar.orientation(p + 1);
    let sv = xbar.orientation(p);
    let wt = w.reoriented(sw, sv);
    let eta_raw = bg.shift(bar)?;
    let eta: Vec<i64> = eta_raw
        .coeffs
        .iter()
        .zip(sw)
        .map(|(&e, &s)| (s as i64 * e as i64).rem_euclid(ni))
        .collect();
    let qe: Vec<i64> = bg
        .q_e
        .coeffs
        .iter()
        .zip(sv)
        .map(|(&e, &s)| (s as i64 * e as i64).rem_euclid(ni))
        .collect();
    let chi = roots(w.modulus);
    let ph = |k: i64| chi[k.rem_euclid(ni) as usize];
    let sgn: i64 = if p % 2 == 0 { 1 } else { -1 };
    let na = if p >= 1 { lambda.count(p - 1) } else { 0 };
    let nc = if p < lambda.dim() { lambda.count(p + 1) } else { 0 };

    let mut strides = vec![1usize; nb];
    for b in (0..nb.saturating_sub(1)).rev() {
        strides[b] = strides[b + 1] * n;
    }
    let digits: Vec<u8> = (0..dim)
        .flat_map(|idx| {
            let st = &strides;
            (0..nb).map(move |b| ((idx / st[b]) % n) as u8)
        })
        .collect();
    let dig = |idx: usize| &digits[idx * nb..(idx + 1) * nb];

    // slice weights A_i(s)
    let slice_weight = |i: usize| -> Vec<C64> {
        (0..dim)
            .into_par_iter()
            .map(|idx| {
                let s = dig(idx);
                let mut val = C64::new(1.0, 0.0);
                for c in 0..nc {
                    let cell = xbar.horizontal(p + 1, c, i);
                    let ds: i64 = lambda
                        .faces(p + 1, c)
                        .iter()
                        .map(|&(b, e)| e as i64 * s[b as usize] as i64)
                        .sum();
                    val *= wt.w[cell][(ds + eta[cell]).rem_euclid(ni) as usize];
                }
                for (b, &sb) in s.iter().enumerate() {
                    let cell = xbar.horizontal(p, b, i);
                    val *= wt.v[cell][sb as usize] * ph(qe[cell] * sb as i64);
                }
                val
            })
            .collect()
    };
    // slab kernels in Fourier space, K̂_i(k) = Σ_y K_i(y) ω^{−k·y}
    let slab_kernel_hat = |i: usize| -> Vec<C64> {
        let u_hat: Vec<Vec<C64>> = (0..nb)
            .map(|b| {
                let cell = xbar.vertical(p + 1, b, i);
                (0..ni)
                    .map(|q| {
                        (0..ni)
                            .map(|z| wt.w[cell][(z + eta[cell]).rem_euclid(ni) as usize] * ph(-q * z))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let v_hat: Vec<Vec<C64>> = (0..na)
            .map(|a| {
                let cell = xbar.vertical(p, a, i);
                (0..ni)
                    .map(|q| {
                        (0..ni)
                            .map(|x| wt.v[cell][x as usize] * ph(qe[cell] * x - q * x))
                            .sum()
                    })
                    .collect()
            })
            .collect();
        (0..dim)
            .into_par_iter()
            .map(|idx| {
                let k = dig(idx);
                let mut val = C64::new(1.0, 0.0);
                let mut dk = vec![0i64; na];
                for (b, &kb) in k.iter().enumerate() {
                    val *= u_hat[b][(sgn * kb as i64).rem_euclid(ni) as usize];
                    if p >= 1 {
                        for &(a, e) in lambda.faces(p, b) {
                            dk[a as usize] += e as i64 * kb as i64;
                        }
                    }
                }
                for (a, &v) in dk.iter().enumerate() {
                    val *= v_hat[a][(-sgn * v).rem_euclid(ni) as usize];
                }
                val
            })
            .collect()
    };
    let to_real_space = |mut hat: Vec<C64>| -> Vec<C64> {
        dft_nd(&mut hat, n, nb, 1);
        for z in hat.iter_mut() {
            *z /= dim as f64;
        }
        hat
    };
    let table = DigitSub::new(n, nb);
    let sub = |t: usize, s: usize| table.sub(t, s);

    let a: Vec<Vec<C64>> = (0..m).map(slice_weight).collect();
    let k_hat: Vec<Vec<C64>> = (0..m).map(slab_kernel_hat).collect();
    let k_real: Vec<Vec<C64>> = k_hat.iter().map(|h| to_real_space(h.clone())).collect();

    if m == 1 {
        return Ok(k_real[0][0] * a[0].iter().sum::<C64>());
    }
    let parts: Vec<C64> = (0..dim)
        .into_par_iter()
        .map(|s0| {
            // row vector e_{s0} T_0, then multiplied by T_1 … T_{M−1}
            let mut r: Vec<C64> = (0..dim).map(|t| a[0][s0] * k_real[0][sub(t, s0)]).collect();
            for i in 1..m - 1 {
                for (x, y) in r.iter_mut().zip(&a[i]) {
                    *x *= y;
                }
                dft_nd(&mut r, n, nb, -1);
                for (x, y) in r.iter_mut().zip(&k_hat[i]) {
                    *x *= y / dim as f64;
                }
                dft_nd(&mut r, n, nb, 1);
            }
            (0..dim)
                .map(|t| r[t] * a[m - 1][t] * k_real[m - 1][sub(s0, t)])
                .sum()
        })
        .collect();
    Ok(parts.into_iter().sum())
}

/// Number of P-cocycles `|Z^P(X)|`: kernel dimension for prime N, Euclid
/// diagonalization of the coboundary over `Z_N` otherwise.
pub fn cocycle_count(x: &CellComplex, p: usize, modulus: u32) -> Result<f64> {
    if is_prime(modulus) {
        let rank = if p < x.dim() {
            FpMatrix::boundary(x, p + 1, modulus).rank()?
        } else {
            0
        };
        return Ok((modulus as f64).powi((x.count(p) - rank) as i32));
    }
    if p >= x.dim() {
        return Ok((modulus as f64).powi(x.count(p) as i32));
    }
    let rows: Vec<Vec<i64>> = (0..x.count(p + 1))
        .map(|c| {
            let mut r = vec![0i64; x.count(p)];
            for &(f, e) in x.faces(p + 1, c) {
                r[f as usize] += e as i64;
            }
            r
        })
        .collect();
    Ok(kernel_count_mod(&rows, x.count(p), modulus))
}

/// `|Z^P(X)|` by enumerating P-cochains with `δ`-weights, under `cap`.
pub fn cocycle_count_enumerated(x: &CellComplex, p: usize, modulus: u32, cap: u128) -> Result<f64> {
    let n = modulus as usize;
    let mut w = LocalWeights::ones(x, p, modulus);
    for arr in w.w.iter_mut() {
        for (k, z) in arr.iter_mut().enumerate() {
            *z = C64::new(if k == 0 { 1.0 } else { 0.0 }, 0.0);
        }
        debug_assert_eq!(arr.len(), n);
    }
    let zeros_e = vec![0u32; x.count(p)];
    let zeros_m = vec![0u32; x.count(p + 1)];
    Ok(enumerate_raw(x, &w, &zeros_e, &zeros_m, cap)?.re.round())
}

/// `𝒩_M = Π_c W_c(0) · Π_u V̂_u(0)/√N`; the last factor is the mean of `V_u`.
pub fn normalization(w: &LocalWeights) -> Result<C64> {
    let mut out = C64::new(1.0, 0.0);
    for (c, arr) in w.w.iter().enumerate() {
        if arr[0] == C64::new(0.0, 0.0) {
            return Err(Error::VanishingZeroMode { kind: "W", cell: c });
        }
        out *= arr[0];
    }
    for (u, arr) in w.v.iter().enumerate() {
        let mean = arr.iter().sum::<C64>() / arr.len() as f64;
        if mean == C64::new(0.0, 0.0) {
            return Err(Error::VanishingZeroMode { kind: "V", cell: u });
        }
        out *= mean;
    }
    Ok(out)
}

/// `𝒵 = Z / (𝒩_M |Z^P(X̄)|)`, using the sliced evaluator when the full
/// enumeration is over the cap.
pub fn normalized_amplitude(bar: &DualCorrespondence, w: &LocalWeights, bg: &BackgroundCharge) -> Result<C64> {
    let z = match partition_exact(bar, w, bg) {
        Err(Error::CapExceeded { .. }) if bar.primal.suspension().is_some() => partition_sliced(bar, w, bg)?,
        other => other?,
    };
    let count = cocycle_count(&bar.primal, w.form_degree, w.modulus)?;
    Ok(z / (normalization(w)? * count))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::dualize;
    use crate::quantum_oracle::decorated_trace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn setup(l: usize, m: usize) -> (DualCorrespondence, DualCorrespondence) {
        let lambda = Arc::new(CellComplex::build_torus(2, l).unwrap());
        let spatial = dualize(&lambda).unwrap();
        let bar = dualize(&Arc::new(CellComplex::suspend(&lambda, m).unwrap())).unwrap();
        (spatial, bar)
    }

    fn toric_ins(spatial: &DualCorrespondence, n: u32) -> InsertionData {
        let p = 1;
        let mut ins = InsertionData::zero(spatial, p, n);
        let prim = crate::falgebra::toric_cycles(&spatial.primal, 1, n);
        let dual = crate::falgebra::toric_cycles(&spatial.dual, 1, n);
        ins.nu = prim[0].clone();
        ins.mu = dual[0].clone();
        ins.beta_dual = crate::falgebra::toric_cycles(&spatial.dual, 0, n)[0].clone();
        ins.alpha = crate::falgebra::toric_cycles(&spatial.primal, 0, n)[0].scale(n - 1);
        ins
    }

    #[test]
    fn trivial_weights_count_configurations() {
        let (_, bar) = setup(2, 1);
        let w = LocalWeights::ones(&bar.primal, 1, 2);
        let bg = BackgroundCharge::zero(&bar, 1, 2);
        let z = partition_exact(&bar, &w, &bg).unwrap();
        assert!((z.re - 2f64.powi(bar.primal.count(1) as i32)).abs() < 1e-6);
        let zs = partition_sliced(&bar, &w, &bg).unwrap();
        assert!((zs - z).norm() < 1e-6 * z.norm());
    }

    #[test]
    fn vperp_closed_form() {
        let lambda = Arc::new(CellComplex::build_torus(2, 2).unwrap());
        let xbar = CellComplex::suspend(&lambda, 1).unwrap();
        let params = TrotterParams::uniform(&lambda, 1, 3, 1.0, 1, 1.0, 1e-300);
        let w = trotter_weights(&xbar, &params).unwrap();
        let e = 1f64.exp();
        let v = &w.v[xbar.vertical(1, 0, 0)];
        assert!((v[0].re - (1.0 + (e - 1.0) / 3.0)).abs() < 1e-14);
        assert!((v[1].re - (e - 1.0) / 3.0).abs() < 1e-14);
        // K → 0 and g = 0
        assert!(w.w[xbar.horizontal(2, 0, 0)].iter().all(|z| (z - 1.0).norm() < 1e-14));
        let wp = &w.w[xbar.vertical(2, 0, 0)];
        assert!((wp[0] - 1.0).norm() < 1e-14 && wp[1].norm() < 1e-14 && wp[2].norm() < 1e-14);
    }

    #[test]
    fn lifted_alpha_is_vertical_tube() {
        let (spatial, bar) = setup(2, 3);
        let mut ins = InsertionData::zero(&spatial, 1, 3);
        ins.alpha = crate::falgebra::toric_cycles(&spatial.primal, 0, 3)[0].clone();
        let bg = lift_background(&spatial, &bar, &ins, 1).unwrap();
        let x = &bar.primal;
        let supp = bg.q_e.support();
        assert_eq!(supp.len(), 3);
        assert!(supp.iter().all(|&i| x.slice_tag(1, i).unwrap().vertical));
        assert!(bg.q_m.is_zero());
    }

    #[test]
    fn classical_matches_quantum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (n, m) in [(2u32, 1usize), (2, 2), (2, 3), (3, 1), (3, 2)] {
            let (spatial, bar) = setup(2, m);
            let params = TrotterParams::random(&spatial.primal, 1, n, 0.9, m, &mut rng);
            let w = trotter_weights(&bar.primal, &params).unwrap();
            for with_ins in [false, true] {
                let ins = if with_ins {
                    toric_ins(&spatial, n)
                } else {
                    InsertionData::zero(&spatial, 1, n)
                };
                let q = decorated_trace(&spatial, &params, &ins).unwrap();
                let bg = lift_background(&spatial, &bar, &ins, 1).unwrap();
                let c = partition_sliced(&bar, &w, &bg).unwrap();
                assert!((q - c).norm() < 1e-9 * q.norm(), "N={n} M={m} ins={with_ins}: {q} vs {c}");
                if (n as f64).powi(bar.primal.count(1) as i32) <= (1u64 << 24) as f64 {
                    let e = partition_exact(&bar, &w, &bg).unwrap();
                    assert!((e - c).norm() < 1e-9 * e.norm(), "exact {e} vs sliced {c}");
                }
            }
        }
    }

    #[test]
    fn code_limit_normalizes_to_one() {
        let (spatial, bar) = setup(2, 1);
        let beta = 1.0;
        let params = TrotterParams::uniform(&spatial.primal, 1, 2, beta, 1, 40.0, 40.0);
        let w = trotter_weights(&bar.primal, &params).unwrap();
        let bg = BackgroundCharge::zero(&bar, 1, 2);
        let z = normalized_amplitude(&bar, &w, &bg).unwrap();
        assert!((z - 1.0).norm() < 1e-6, "{z}");
    }

    #[test]
    fn json_roundtrip() {
        let (_, bar) = setup(2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = LocalWeights::random(&bar.primal, 1, 3, &mut rng);
        let back = LocalWeights::from_json(&w.to_json(), &bar.primal).unwrap();
        assert_eq!(w, back);
    }

    #[test]
    fn composite_cocycle_count() {
        let x = CellComplex::build_torus(2, 2).unwrap();
        // Z^1(T², Z_4): 4^{|C_0|-1} exact cocycles times 4^2 classes
        let c = cocycle_count(&x, 1, 4).unwrap();
        assert_eq!(c, 4f64.powi(3 + 2));
        assert_eq!(cocycle_count_enumerated(&x, 1, 4, 1 << 20).unwrap(), c);
        let c2 = cocycle_count(&x, 1, 2).unwrap();
        assert_eq!(c2, 2f64.powi(3 + 2));
        let spatial = Arc::new(CellComplex::build_torus(2, 2).unwrap());
        let xb = CellComplex::suspend(&spatial, 1).unwrap();
        for (n, degrees) in [(4, 0..3), (6, 0..1), (9, 0..1)] {
            for p in degrees {
                let direct = cocycle_count(&xb, p, n).unwrap();
                let enumerated = cocycle_count_enumerated(&xb, p, n, 1 << 26).unwrap();
                assert_eq!(direct, enumerated, "N={n} P={p}");
            }
        }
    }
}
