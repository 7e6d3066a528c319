//! Potts lattice gauge theory, its Edwards-Sokal coupling to the plaquette
//! random-cluster model (PRCM), the plaquette Swendsen-Wang sampler and the
//! Wilson / homology observables.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::{masks_of_size, CellComplex, FieldChain};
use crate::error::{Error, Result};
use crate::falgebra::{require_prime, roots, FpMatrix, Zn};
use crate::quantum_oracle::TrotterParams;
use crate::spacetime::LocalWeights;
use crate::C64;

/// Cap on `N^{|C_P|}` for exhaustive gauge-field sums.
pub const DEFAULT_FIELD_CAP: u128 = 1 << 22;
/// Cap on the number of (P+1)-cells for exhaustive occupation sums.
pub const MAX_OCCUPATION_CELLS: usize = 22;

/// `p = 1 − e^{−β_g}`.
pub fn prcm_probability(beta_g: f64) -> f64 {
    -(-beta_g).exp_m1()
}

/// `β_g = −log(1 − p)`.
pub fn gauge_coupling(p: f64) -> f64 {
    -(-p).ln_1p()
}

fn check_probability(p: f64, allow_one: bool) -> Result<()> {
    let ok = p >= 0.0 && (p < 1.0 || (allow_one && p == 1.0));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("PRCM probability {p} out of range")))
    }
}

/// Gauge weights: `V ≡ 1`, `W(x) = 1 + (e^{β_g} − 1) δ_N(x)`.
pub fn gauge_weights(x: &CellComplex, p: usize, n: u32, beta_g: f64) -> Result<LocalWeights> {
    gauge_weights_anisotropic(x, p, n, &vec![beta_g; x.count(p + 1)])
}

/// Gauge weights with one coupling per (P+1)-cell.
pub fn gauge_weights_anisotropic(x: &CellComplex, p: usize, n: u32, betas: &[f64]) -> Result<LocalWeights> {
    if p >= x.dim() {
        return Err(Error::DegreeMismatch {
            expected: x.dim() - 1,
            got: p,
        });
    }
    if betas.len() != x.count(p + 1) {
        return Err(Error::LengthMismatch {
            what: "gauge couplings",
            expected: x.count(p + 1),
            got: betas.len(),
        });
    }
    if let Some(b) = betas.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
        return Err(Error::InvalidParameter(format!("gauge coupling {b}")));
    }
    let mut w = LocalWeights::ones(x, p, n);
    for (arr, &b) in w.w.iter_mut().zip(betas) {
        arr[0] = C64::new(b.exp(), 0.0);
    }
    Ok(w)
}

/// Trotter couplings realizing prescribed horizontal couplings `β∥_c` (per
/// spatial (P+1)-cell) and vertical couplings `β⊥_b` (per spatial P-cell):
/// `h = 0`, `K_c = (M/β) β∥_c`, and `g_b` the scaled Fourier transform of the
/// centred log-spectrum `Γ_b(j) = log F_b(j) − mean log F_b`,
/// `F_b(j) = (e^{β⊥_b} − 1) + N δ_N(j)`.
#[allow(clippy::too_many_arguments)]
pub fn gauge_from_trotter(
    lambda: &CellComplex,
    p: usize,
    n: u32,
    beta: f64,
    m: usize,
    j: f64,
    beta_par: &[f64],
    beta_perp: &[f64],
) -> Result<TrotterParams> {
    if beta_par.len() != lambda.count(p + 1) || beta_perp.len() != lambda.count(p) {
        return Err(Error::LengthMismatch {
            what: "gauge targets",
            expected: lambda.count(p + 1) + lambda.count(p),
            got: beta_par.len() + beta_perp.len(),
        });
    }
    if !(beta > 0.0) || m == 0 {
        return Err(Error::InvalidParameter("need beta > 0 and M >= 1".into()));
    }
    if let Some(b) = beta_par.iter().find(|b| !(**b > 0.0)) {
        return Err(Error::InvalidParameter(format!("horizontal gauge coupling {b} must be positive")));
    }
    if let Some(b) = beta_perp.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "vertical gauge coupling {b} must be positive and finite"
        )));
    }
    let nn = n as usize;
    let scale = m as f64 / beta;
    let w = roots(n);
    let mut params = TrotterParams::uniform(lambda, p, n, beta, m, j, 1.0);
    params.k = beta_par.iter().map(|b| scale * b).collect();
    params.g = beta_perp
        .iter()
        .map(|&b| {
            let logf: Vec<f64> = (0..nn)
                .map(|k| (b.exp_m1() + if k == 0 { nn as f64 } else { 0.0 }).ln())
                .collect();
            let mean = logf.iter().sum::<f64>() / nn as f64;
            (0..nn)
                .map(|q| {
                    (0..nn)
                        .map(|k| w[(nn - q * k % nn) % nn] * (logf[k] - mean))
                        .sum::<C64>()
                        * (scale / nn as f64)
                })
                .collect()
        })
        .collect();
    params.validate(lambda)?;
    Ok(params)
}

/// Coboundary rows: per (P+1)-cell, `(P-cell, ε mod N)`.
fn coboundary_rows(x: &CellComplex, p: usize, n: u32) -> Vec<Vec<(u32, u32)>> {
    (0..x.count(p + 1))
        .map(|c| {
            x.faces(p + 1, c)
                .iter()
                .map(|&(b, e)| (b, (e as i64).rem_euclid(n as i64) as u32))
                .collect()
        })
        .collect()
}

/// Flatness bitmask of every P-cochain (mixed radix, cell 0 least significant).
fn flat_masks(x: &CellComplex, p: usize, n: u32) -> Result<Vec<u64>> {
    let cells = x.count(p);
    let nc = x.count(p + 1);
    if nc > 63 {
        return Err(Error::SizeGuard {
            what: "(P+1)-cells for exhaustive gauge sums",
            requested: nc as u128,
            cap: 63,
        });
    }
    let total = (n as u128).checked_pow(cells as u32).unwrap_or(u128::MAX);
    if total > DEFAULT_FIELD_CAP {
        return Err(Error::CapExceeded {
            what: "gauge field configurations",
            requested: total,
            cap: DEFAULT_FIELD_CAP,
            hint: "use a smaller torus or modulus",
        });
    }
    let rows = coboundary_rows(x, p, n);
    let mut phi = vec![0u32; cells];
    let mut out = Vec::with_capacity(total as usize);
    for _ in 0..total {
        let mut mask = 0u64;
        for (c, row) in rows.iter().enumerate() {
            let s: u32 = row.iter().map(|&(b, e)| e * phi[b as usize]).sum();
            if s % n == 0 {
                mask |= 1 << c;
            }
        }
        out.push(mask);
        for v in phi.iter_mut() {
            *v += 1;
            if *v < n {
                break;
            }
            *v = 0;
        }
    }
    Ok(out)
}

/// `Σ_φ exp(β_g Σ_c δ_N((dφ)_c))` by enumerating gauge fields.
pub fn gauge_partition_exact(x: &CellComplex, p: usize, n: u32, beta_g: f64) -> Result<f64> {
    let masks = flat_masks(x, p, n)?;
    Ok(masks.iter().map(|m| (beta_g * m.count_ones() as f64).exp()).sum())
}

fn occupied_columns(x: &CellComplex, p: usize, n: u32, occupied: &[bool]) -> FpMatrix {
    let full = FpMatrix::boundary(x, p + 1, n);
    let cols: Vec<Vec<u32>> = (0..x.count(p + 1))
        .filter(|&c| occupied[c])
        .map(|c| full.column(c))
        .collect();
    if cols.is_empty() {
        FpMatrix::zeros(x.count(p), 0, n)
    } else {
        FpMatrix::from_columns(&cols, x.count(p), n)
    }
}

/// `dim_{F_N} Z^P(Y)` for `Y` = P-skeleton plus the occupied (P+1)-cells.
pub fn cocycle_dimension(x: &CellComplex, p: usize, n: u32, occupied: &[bool]) -> Result<usize> {
    require_prime(n)?;
    Ok(x.count(p) - occupied_columns(x, p, n, occupied).rank()?)
}

/// Random-cluster form `Σ_ω (e^{β_g} − 1)^{|ω|} |Z^P(Y_ω)|` of the gauge partition function.
pub fn gauge_partition_fk(x: &CellComplex, p: usize, n: u32, beta_g: f64) -> Result<f64> {
    require_prime(n)?;
    let nc = x.count(p + 1);
    if nc > MAX_OCCUPATION_CELLS {
        return Err(Error::SizeGuard {
            what: "occupation configurations",
            requested: 1u128 << nc.min(127),
            cap: 1 << MAX_OCCUPATION_CELLS,
        });
    }
    let r = beta_g.exp_m1();
    let mut total = 0.0;
    for bits in 0u64..1 << nc {
        let occ: Vec<bool> = (0..nc).map(|c| bits >> c & 1 == 1).collect();
        let dim = cocycle_dimension(x, p, n, &occ)?;
        total += r.powi(bits.count_ones() as i32) * (n as f64).powi(dim as i32);
    }
    Ok(total)
}

/// `b_P(Y) = |C_P| − rank ∂_P − rank ∂_{P+1}|_Y`.
pub fn betti_p(x: &CellComplex, p: usize, n: u32, occupied: &[bool]) -> Result<usize> {
    let bd = if p == 0 { 0 } else { FpMatrix::boundary(x, p, n).rank()? };
    Ok(x.count(p) - bd - occupied_columns(x, p, n, occupied).rank()?)
}

fn relative_variance(ratios: &[f64]) -> (f64, f64) {
    let k = ratios.len().max(1) as f64;
    let mean = ratios.iter().sum::<f64>() / k;
    let var = ratios.iter().map(|r| (r / mean - 1.0).powi(2)).sum::<f64>() / k;
    (mean, var)
}

#[derive(Clone, Debug, Serialize)]
pub struct MarginalReport {
    pub probability: f64,
    /// `Σ_ω κ(φ, ω) / exp(β_g #flat(φ))`, its mean and relative variance over φ.
    pub gauge_ratio_mean: f64,
    pub gauge_ratio_variance: f64,
    /// `Σ_φ κ(φ, ω) / (p^{|ω|} (1−p)^{|C|−|ω|} N^{b_P(Y)})` over ω.
    pub prcm_ratio_mean: f64,
    pub prcm_ratio_variance: f64,
    /// Occupations where exactly one of marginal and prediction vanishes.
    pub support_mismatches: usize,
    pub field_states: usize,
    pub occupation_states: usize,
}

/// Both marginals of the joint measure, by exhaustive `(φ, ω)` enumeration,
/// compared with the gauge weight and with the PRCM weight built from `b_P(Y)`.
pub fn joint_marginals_check(x: &CellComplex, p: usize, n: u32, prob: f64) -> Result<MarginalReport> {
    require_prime(n)?;
    check_probability(prob, false)?;
    let nc = x.count(p + 1);
    if nc > MAX_OCCUPATION_CELLS {
        return Err(Error::SizeGuard {
            what: "occupation configurations",
            requested: 1u128 << nc.min(127),
            cap: 1 << MAX_OCCUPATION_CELLS,
        });
    }
    let masks = flat_masks(x, p, n)?;
    let omegas = 1u64 << nc;
    let kappa = |mask: u64, om: u64| -> f64 {
        let mut v = 1.0;
        for c in 0..nc {
            v *= if om >> c & 1 == 1 {
                if mask >> c & 1 == 1 {
                    prob
                } else {
                    0.0
                }
            } else {
                1.0 - prob
            };
        }
        v
    };
    let beta_g = gauge_coupling(prob);
    let mut om_marg = vec![0.0; omegas as usize];
    let mut gauge_ratios = Vec::with_capacity(masks.len());
    for &mask in &masks {
        let mut s = 0.0;
        for om in 0..omegas {
            let k = kappa(mask, om);
            s += k;
            om_marg[om as usize] += k;
        }
        gauge_ratios.push(s / (beta_g * mask.count_ones() as f64).exp());
    }
    let mut prcm_ratios = Vec::new();
    let mut mismatches = 0;
    for om in 0..omegas {
        let occ: Vec<bool> = (0..nc).map(|c| om >> c & 1 == 1).collect();
        let k = om.count_ones() as i32;
        let pred = prob.powi(k) * (1.0 - prob).powi(nc as i32 - k) * (n as f64).powi(betti_p(x, p, n, &occ)? as i32);
        let got = om_marg[om as usize];
        match (pred == 0.0, got == 0.0) {
            (true, true) => {}
            (false, false) => prcm_ratios.push(got / pred),
            _ => mismatches += 1,
        }
    }
    let (gm, gv) = relative_variance(&gauge_ratios);
    let (pm, pv) = relative_variance(&prcm_ratios);
    Ok(MarginalReport {
        probability: prob,
        gauge_ratio_mean: gm,
        gauge_ratio_variance: gv,
        prcm_ratio_mean: pm,
        prcm_ratio_variance: pv,
        support_mismatches: mismatches,
        field_states: masks.len(),
        occupation_states: omegas as usize,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct StationarityReport {
    pub probability: f64,
    /// Total variation between `κ` and `κ` pushed through one exact SW step.
    pub total_variation: f64,
    pub states: usize,
}

/// Exact one-step stationarity of the joint measure under the plaquette
/// Swendsen-Wang kernel `K((φ,ω) → (φ',ω')) = κ(ω'|φ) κ(φ'|ω')`.
pub fn sw_stationarity_check(x: &CellComplex, p: usize, n: u32, prob: f64) -> Result<StationarityReport> {
    require_prime(n)?;
    check_probability(prob, false)?;
    let nc = x.count(p + 1);
    if nc > MAX_OCCUPATION_CELLS {
        return Err(Error::SizeGuard {
            what: "occupation configurations",
            requested: 1u128 << nc.min(127),
            cap: 1 << MAX_OCCUPATION_CELLS,
        });
    }
    let masks = flat_masks(x, p, n)?;
    let omegas = 1usize << nc;
    // joint κ, normalized
    let mut kappa = vec![0.0; masks.len() * omegas];
    for (f, &mask) in masks.iter().enumerate() {
        for om in 0..omegas {
            let om = om as u64;
            if om & !mask != 0 {
                continue;
            }
            let k = om.count_ones() as i32;
            kappa[f * omegas + om as usize] = prob.powi(k) * (1.0 - prob).powi(nc as i32 - k);
        }
    }
    let z: f64 = kappa.iter().sum();
    kappa.iter_mut().for_each(|v| *v /= z);
    // |Z^P(Y_ω)| by counting
    let mut zcount = vec![0usize; omegas];
    for &mask in &masks {
        for (om, cnt) in zcount.iter_mut().enumerate() {
            if (om as u64) & !mask == 0 {
                *cnt += 1;
            }
        }
    }
    // mass arriving at each ω' after step 1
    let mut arrive = vec![0.0; omegas];
    for (f, &mask) in masks.iter().enumerate() {
        let pi_f: f64 = kappa[f * omegas..(f + 1) * omegas].iter().sum();
        for (om, a) in arrive.iter_mut().enumerate() {
            let mut cond = 1.0;
            for c in 0..nc {
                let q = if mask >> c & 1 == 1 { prob } else { 0.0 };
                cond *= if om >> c & 1 == 1 { q } else { 1.0 - q };
            }
            *a += pi_f * cond;
        }
    }
    let mut tv = 0.0;
    for (f, &mask) in masks.iter().enumerate() {
        for om in 0..omegas {
            let next = if (om as u64) & !mask == 0 {
                arrive[om] / zcount[om] as f64
            } else {
                0.0
            };
            tv += (next - kappa[f * omegas + om]).abs();
        }
    }
    Ok(StationarityReport {
        probability: prob,
        total_variation: tv / 2.0,
        states: kappa.len(),
    })
}

/// Toric (P+1)-cocycles `h_T`: cells with axes `T` and base coordinates `x_t = 0`
/// for `t ∈ T`, one per axis subset. They pair to the identity with the
/// straight toric cycles.
pub fn toric_cocycles(x: &CellComplex, q: usize, n: u32) -> Vec<Vec<u32>> {
    let d = x.dim();
    masks_of_size(d, q)
        .into_iter()
        .map(|mask| {
            x.cells(q)
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if c.axes == mask && (0..d).all(|k| mask >> k & 1 == 0 || c.base[k] == 0) {
                        (x.orientation(q)[i] as i64).rem_euclid(n as i64) as u32
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct HomologyObservables {
    /// Rank of `ι_*: H_{P+1}(Y) → H_{P+1}(X)`.
    pub pushforward_rank: usize,
    /// Event `A_L`: `ι_*` nonzero.
    pub nonzero: bool,
    /// Event `S_L`: `ι_*` surjective.
    pub surjective: bool,
    pub b_p: usize,
    pub b_p1: usize,
}

/// Homology of `Y` by linear algebra over F_N on the chain side: a basis of
/// `Z_{P+1}(Y)` is paired with the toric cocycles of `X`.
pub fn homological_observables(x: &CellComplex, p: usize, n: u32, occupied: &[bool]) -> Result<HomologyObservables> {
    require_prime(n)?;
    let occ_cells: Vec<usize> = (0..x.count(p + 1)).filter(|&c| occupied[c]).collect();
    let a = occupied_columns(x, p, n, occupied);
    let kernel = if occ_cells.is_empty() { Vec::new() } else { a.kernel()? };
    let h = toric_cocycles(x, p + 1, n);
    let pairing: Vec<Vec<u32>> = kernel
        .iter()
        .map(|z| {
            h.iter()
                .map(|hk| {
                    (z.iter()
                        .zip(&occ_cells)
                        .map(|(&zi, &c)| zi as u64 * hk[c] as u64)
                        .sum::<u64>()
                        % n as u64) as u32
                })
                .collect()
        })
        .collect();
    let rank = if pairing.is_empty() || h.is_empty() {
        0
    } else {
        FpMatrix::from_rows(&pairing, n).rank()?
    };
    Ok(HomologyObservables {
        pushforward_rank: rank,
        nonzero: rank >= 1,
        surjective: rank == h.len(),
        b_p: betti_p(x, p, n, occupied)?,
        b_p1: kernel.len(),
    })
}

/// Whether the P-cycle `γ` bounds in `Y`.
pub fn is_null_in(x: &CellComplex, p: usize, occupied: &[bool], gamma: &FieldChain) -> Result<bool> {
    let n = gamma.modulus;
    require_prime(n)?;
    if gamma.degree != p || gamma.len() != x.count(p) {
        return Err(Error::DegreeMismatch {
            expected: p,
            got: gamma.degree,
        });
    }
    if !x.boundary(gamma)?.is_zero() {
        return Err(Error::NotACycle("gamma"));
    }
    if gamma.is_zero() {
        return Ok(true);
    }
    if !occupied.iter().any(|&o| o) {
        return Ok(false);
    }
    match occupied_columns(x, p, n, occupied).solve(&gamma.coeffs) {
        Ok(_) => Ok(true),
        Err(Error::NoSolution) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Joint state of the coupled measure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointState {
    pub phi: Vec<u32>,
    pub occupied: Vec<bool>,
}

impl JointState {
    /// Zero field with every (P+1)-cell occupied.
    pub fn ordered(x: &CellComplex, p: usize) -> Self {
        JointState {
            phi: vec![0; x.count(p)],
            occupied: vec![true; x.count(p + 1)],
        }
    }
}

/// Per-step output of the cocycle stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepInfo {
    pub rank: usize,
    pub homology: HomologyObservables,
}

const NONE: u32 = u32::MAX;

/// Plaquette Swendsen-Wang sampler.
///
/// The occupied flatness system is solved in a gauge where φ vanishes on a
/// set `T` of P-cells with `B^P ≅ F_N^T`; the remaining columns keep the
/// cubical cell order, which keeps the elimination banded. Appending the toric
/// cocycles as extra columns gives `rank ι^* = rank ι_*` from the same pass.
pub struct SwSampler {
    n: u32,
    prob: f64,
    np: usize,
    nc: usize,
    rows: Vec<Vec<(u32, u32)>>,
    faces_down: Vec<Vec<(u32, u32)>>,
    n_down: usize,
    col_of: Vec<u32>,
    cell_of_col: Vec<u32>,
    gauge_rank: usize,
    h_of_cell: Vec<Vec<(u8, u8)>>,
    nh: usize,
    // workspace
    nf: usize,
    buf: Vec<u8>,
    hbuf: Vec<u8>,
    lo: Vec<u32>,
    hi: Vec<u32>,
    buckets: Vec<Vec<u32>>,
    neg: Vec<u8>,
    neg_h: Vec<u8>,
    dirty: Vec<u32>,
    pivots: Vec<(u32, u32)>,
    inv: Vec<u8>,
}

impl SwSampler {
    pub fn new(x: &CellComplex, p: usize, n: u32, prob: f64) -> Result<Self> {
        require_prime(n)?;
        if n > 127 {
            return Err(Error::InvalidParameter("sampler supports N <= 127".into()));
        }
        check_probability(prob, true)?;
        if p >= x.dim() {
            return Err(Error::DegreeMismatch {
                expected: x.dim() - 1,
                got: p,
            });
        }
        let np = x.count(p);
        let nc = x.count(p + 1);
        let rows = coboundary_rows(x, p, n);
        let (faces_down, n_down, gauge_cells) = if p == 0 {
            (vec![Vec::new(); np], 0, Vec::new())
        } else {
            let fd: Vec<Vec<(u32, u32)>> = (0..np)
                .map(|b| {
                    x.faces(p, b)
                        .iter()
                        .map(|&(a, e)| (a, (e as i64).rem_euclid(n as i64) as u32))
                        .collect()
                })
                .collect();
            let ech = FpMatrix::boundary(x, p, n).echelon()?;
            (fd, x.count(p - 1), ech.pivot_cols)
        };
        let mut col_of = vec![0u32; np];
        for &b in &gauge_cells {
            col_of[b] = NONE;
        }
        let mut cell_of_col = Vec::new();
        for b in 0..np {
            if col_of[b] != NONE {
                col_of[b] = cell_of_col.len() as u32;
                cell_of_col.push(b as u32);
            }
        }
        let h = toric_cocycles(x, p + 1, n);
        let nh = h.len();
        let h_of_cell = (0..nc)
            .map(|c| {
                h.iter()
                    .enumerate()
                    .filter(|(_, hk)| hk[c] != 0)
                    .map(|(k, hk)| (k as u8, hk[c] as u8))
                    .collect()
            })
            .collect();
        let nf = cell_of_col.len();
        let inv = (0..n)
            .map(|v| if v == 0 { 0 } else { Zn::new(v as i64, n).inv().unwrap().value() as u8 })
            .collect();
        Ok(SwSampler {
            n,
            prob,
            np,
            nc,
            rows,
            faces_down,
            n_down,
            col_of,
            cell_of_col,
            gauge_rank: gauge_cells.len(),
            h_of_cell,
            nh,
            nf,
            buf: vec![0; nc * nf],
            hbuf: vec![0; nc * nh],
            lo: vec![0; nc],
            hi: vec![0; nc],
            buckets: vec![Vec::new(); nf + 1],
            neg: vec![0; n as usize * nf],
            neg_h: vec![0; n as usize * nh],
            dirty: Vec::new(),
            pivots: Vec::new(),
            inv,
        })
    }

    pub fn probability(&self) -> f64 {
        self.prob
    }

    pub fn set_probability(&mut self, prob: f64) -> Result<()> {
        check_probability(prob, true)?;
        self.prob = prob;
        Ok(())
    }

    /// Whether `(dφ)_c = 0`.
    pub fn is_flat(&self, phi: &[u32], c: usize) -> bool {
        self.rows[c].iter().map(|&(b, e)| e * phi[b as usize]).sum::<u32>() % self.n == 0
    }

    /// Step 1: `ω(c) = 1` independently with probability `p·[(dφ)_c = 0]`.
    pub fn occupation_step<R: Rng>(&self, phi: &[u32], rng: &mut R) -> Vec<bool> {
        (0..self.nc)
            .map(|c| {
                let u: f64 = rng.gen();
                self.is_flat(phi, c) && u < self.prob
            })
            .collect()
    }

    fn reset(&mut self) {
        for &r in &self.dirty {
            let r = r as usize;
            let (lo, hi) = (self.lo[r] as usize, self.hi[r] as usize);
            if lo < hi {
                self.buf[r * self.nf + lo..r * self.nf + hi].fill(0);
            }
            self.hbuf[r * self.nh..(r + 1) * self.nh].fill(0);
        }
        self.dirty.clear();
        self.pivots.clear();
        for b in self.buckets.iter_mut() {
            b.clear();
        }
    }

    /// Forward elimination of the occupied flatness system; returns
    /// `(rank of the flatness rows, rank ι^*)`.
    fn eliminate(&mut self, occupied: &[bool]) -> (usize, usize) {
        self.reset();
        let n = self.n as u8;
        let (nf, nh) = (self.nf, self.nh);
        let mut h_rows: Vec<u32> = Vec::new();
        for c in 0..self.nc {
            if !occupied[c] {
                continue;
            }
            self.dirty.push(c as u32);
            let row = &mut self.buf[c * nf..(c + 1) * nf];
            let (mut lo, mut hi) = (nf, 0);
            for &(b, e) in &self.rows[c] {
                let col = self.col_of[b as usize];
                if col == NONE {
                    continue;
                }
                let col = col as usize;
                row[col] = ((row[col] as u32 + e) % self.n) as u8;
                lo = lo.min(col);
                hi = hi.max(col + 1);
            }
            while lo < hi && row[lo] == 0 {
                lo += 1;
            }
            for &(k, v) in &self.h_of_cell[c] {
                self.hbuf[c * nh + k as usize] = v;
            }
            self.lo[c] = lo as u32;
            self.hi[c] = hi.max(lo) as u32;
            if lo >= hi {
                self.lo[c] = 0;
                self.hi[c] = 0;
                h_rows.push(c as u32);
            } else {
                self.buckets[lo].push(c as u32);
            }
        }
        for col in 0..nf {
            if self.buckets[col].is_empty() {
                continue;
            }
            let bucket = std::mem::take(&mut self.buckets[col]);
            let &piv = bucket.iter().min_by_key(|&&r| self.hi[r as usize]).unwrap();
            let pr = piv as usize;
            let phi_end = self.hi[pr] as usize;
            // normalize the pivot row
            let lead = self.buf[pr * nf + col];
            let s = self.inv[lead as usize] as u32;
            if s != 1 {
                for v in &mut self.buf[pr * nf + col..pr * nf + phi_end] {
                    *v = ((*v as u32 * s) % self.n) as u8;
                }
                for v in &mut self.hbuf[pr * nh..(pr + 1) * nh] {
                    *v = ((*v as u32 * s) % self.n) as u8;
                }
            }
            self.pivots.push((col as u32, piv));
            if bucket.len() > 1 {
                let width = phi_end - col;
                for e in 1..n as usize {
                    for j in 0..width {
                        let v = self.buf[pr * nf + col + j] as usize * e % n as usize;
                        self.neg[e * nf + j] = ((n as usize - v) % n as usize) as u8;
                    }
                    for k in 0..nh {
                        let v = self.hbuf[pr * nh + k] as usize * e % n as usize;
                        self.neg_h[e * nh + k] = ((n as usize - v) % n as usize) as u8;
                    }
                }
                for &r in &bucket {
                    if r == piv {
                        continue;
                    }
                    let ru = r as usize;
                    let e = self.buf[ru * nf + col] as usize;
                    let target = &mut self.buf[ru * nf + col..ru * nf + phi_end];
                    let src = &self.neg[e * nf..e * nf + width];
                    for (t, &s) in target.iter_mut().zip(src) {
                        let v = *t + s;
                        *t = v.min(v.wrapping_sub(n));
                    }
                    let ht = &mut self.hbuf[ru * nh..(ru + 1) * nh];
                    for (t, &s) in ht.iter_mut().zip(&self.neg_h[e * nh..(e + 1) * nh]) {
                        let v = *t + s;
                        *t = v.min(v.wrapping_sub(n));
                    }
                    let hi = (self.hi[ru] as usize).max(phi_end);
                    let mut lo = col + 1;
                    while lo < hi && self.buf[ru * nf + lo] == 0 {
                        lo += 1;
                    }
                    self.hi[ru] = hi as u32;
                    if lo >= hi {
                        // keep lo/hi spanning the dirty range for the reset
                        self.lo[ru] = col as u32;
                        h_rows.push(r);
                    } else {
                        self.lo[ru] = lo as u32;
                        self.buckets[lo].push(r);
                    }
                }
            }
            // the pivot row keeps lo = col for back substitution
            self.lo[pr] = col as u32;
        }
        // rank of the toric part among rows with vanishing flatness part
        let mut hm: Vec<Vec<u8>> = h_rows
            .iter()
            .map(|&r| self.hbuf[r as usize * nh..(r as usize + 1) * nh].to_vec())
            .filter(|v| v.iter().any(|&x| x != 0))
            .collect();
        let mut rank_h = 0;
        for k in 0..nh {
            let Some(i) = (rank_h..hm.len()).find(|&i| hm[i][k] != 0) else {
                continue;
            };
            hm.swap(rank_h, i);
            let s = self.inv[hm[rank_h][k] as usize] as u32;
            for v in hm[rank_h].iter_mut() {
                *v = ((*v as u32 * s) % self.n) as u8;
            }
            for i in rank_h + 1..hm.len() {
                let e = hm[i][k] as u32;
                if e != 0 {
                    for j in 0..nh {
                        let sub = e * hm[rank_h][j] as u32 % self.n;
                        hm[i][j] = ((hm[i][j] as u32 + self.n - sub) % self.n) as u8;
                    }
                }
            }
            rank_h += 1;
        }
        (self.pivots.len(), rank_h)
    }

    fn observables(&self, occupied: &[bool], rank: usize, rank_h: usize) -> HomologyObservables {
        let occ = occupied.iter().filter(|&&o| o).count();
        HomologyObservables {
            pushforward_rank: rank_h,
            nonzero: rank_h >= 1,
            surjective: rank_h == self.nh,
            b_p: self.np - self.gauge_rank - rank,
            b_p1: occ - rank,
        }
    }

    /// Homology observables of `Y` from the cochain-side elimination.
    pub fn homology(&mut self, occupied: &[bool]) -> HomologyObservables {
        let (rank, rank_h) = self.eliminate(occupied);
        self.observables(occupied, rank, rank_h)
    }

    /// Step 2: a uniform element of `Z^P(Y)`.
    pub fn cocycle_step<R: Rng>(&mut self, occupied: &[bool], rng: &mut R) -> (Vec<u32>, StepInfo) {
        let (rank, rank_h) = self.eliminate(occupied);
        let n = self.n;
        let nf = self.nf;
        let mut xs = vec![0u32; nf];
        let mut is_piv = vec![false; nf];
        for &(c, _) in &self.pivots {
            is_piv[c as usize] = true;
        }
        for (j, v) in xs.iter_mut().enumerate() {
            if !is_piv[j] {
                *v = rng.gen_range(0..n);
            }
        }
        for &(c, r) in self.pivots.iter().rev() {
            let (c, r) = (c as usize, r as usize);
            let hi = self.hi[r] as usize;
            let row = &self.buf[r * nf..r * nf + hi];
            let s: u32 = (c + 1..hi).map(|j| row[j] as u32 * xs[j]).sum();
            xs[c] = (n - s % n) % n;
        }
        let mut phi = vec![0u32; self.np];
        for (j, &b) in self.cell_of_col.iter().enumerate() {
            phi[b as usize] = xs[j];
        }
        if self.n_down > 0 {
            let psi: Vec<u32> = (0..self.n_down).map(|_| rng.gen_range(0..n)).collect();
            for (b, v) in phi.iter_mut().enumerate() {
                let s: u32 = self.faces_down[b].iter().map(|&(a, e)| e * psi[a as usize]).sum();
                *v = (*v + s) % n;
            }
        }
        let info = StepInfo {
            rank,
            homology: self.observables(occupied, rank, rank_h),
        };
        (phi, info)
    }

    /// One full sweep: occupations given φ, then a uniform cocycle given `Y`.
    pub fn step<R: Rng>(&mut self, state: &mut JointState, rng: &mut R) -> StepInfo {
        state.occupied = self.occupation_step(&state.phi, rng);
        let (phi, info) = self.cocycle_step(&state.occupied, rng);
        state.phi = phi;
        info
    }
}

/// `∫_γ φ` in Z_N.
pub fn holonomy(gamma: &FieldChain, phi: &[u32]) -> u32 {
    let n = gamma.modulus as u64;
    (gamma
        .coeffs
        .iter()
        .zip(phi)
        .map(|(&a, &b)| a as u64 * b as u64)
        .sum::<u64>()
        % n) as u32
}

/// Axis-aligned straight toric P-cycles and the separated pairs entering the
/// locking event `ℰ_L`.
#[derive(Clone, Debug)]
pub struct LockingFamily {
    pub cycles: Vec<FieldChain>,
    pub pairs: Vec<(u32, u32)>,
    pub threshold: f64,
    /// A single parallel pair at maximal separation, used as a diagnostic.
    pub reference_pair: (u32, u32),
}

impl LockingFamily {
    /// All straight coordinate P-subtori (every axis set, every offset), with
    /// pairs at 1-skeleton distance at least `L/2 − 1`, `L` the smallest side.
    pub fn axis_aligned(x: &CellComplex, p: usize, n: u32) -> Self {
        let d = x.dim();
        let lengths = x.lengths().to_vec();
        let l = *lengths.iter().min().unwrap();
        let mut cycles = Vec::new();
        let mut tags: Vec<(u32, Vec<usize>)> = Vec::new();
        for mask in masks_of_size(d, p) {
            let mut index = std::collections::BTreeMap::new();
            for (i, c) in x.cells(p).iter().enumerate() {
                if c.axes != mask {
                    continue;
                }
                let key: Vec<usize> = (0..d).map(|k| if mask >> k & 1 == 1 { 0 } else { c.base[k] }).collect();
                let z = index.entry(key).or_insert_with(|| FieldChain::zeros(n, p, x.count(p)));
                z.coeffs[i] = (x.orientation(p)[i] as i64).rem_euclid(n as i64) as u32;
            }
            for (key, z) in index {
                cycles.push(z);
                tags.push((mask, key));
            }
        }
        let threshold = l as f64 / 2.0 - 1.0;
        let cyc = |a: usize, b: usize, len: usize| -> usize {
            let t = a.abs_diff(b);
            t.min(len - t)
        };
        let mut pairs = Vec::new();
        let mut reference = (0u32, 0u32, 0usize);
        for i in 0..cycles.len() {
            for j in i + 1..cycles.len() {
                let (m1, a) = &tags[i];
                let (m2, b) = &tags[j];
                let dist: usize = (0..d)
                    .filter(|&k| (m1 | m2) >> k & 1 == 0)
                    .map(|k| cyc(a[k], b[k], lengths[k]))
                    .sum();
                if dist as f64 >= threshold {
                    pairs.push((i as u32, j as u32));
                }
                if m1 == m2 && dist > reference.2 {
                    reference = (i as u32, j as u32, dist);
                }
            }
        }
        LockingFamily {
            cycles,
            pairs,
            threshold,
            reference_pair: (reference.0, reference.1),
        }
    }

    /// Whether some admissible pair carries equal Wilson values.
    pub fn event(&self, phi: &[u32]) -> bool {
        let hol: Vec<u32> = self.cycles.iter().map(|g| holonomy(g, phi)).collect();
        self.pairs.iter().any(|&(i, j)| hol[i as usize] == hol[j as usize])
    }

    /// Whether the reference pair carries equal Wilson values.
    pub fn reference_event(&self, phi: &[u32]) -> bool {
        let (i, j) = self.reference_pair;
        holonomy(&self.cycles[i as usize], phi) == holonomy(&self.cycles[j as usize], phi)
    }
}

/// Mean and batch-means standard error. Each series is cut into `batches`
/// contiguous batches and the batch means of all series are pooled.
pub fn batch_means(series: &[Vec<f64>], batches: usize) -> (f64, f64) {
    let mut means = Vec::new();
    for s in series {
        let b = batches.clamp(1, s.len().max(1));
        let len = s.len() / b;
        if len == 0 {
            continue;
        }
        for k in 0..b {
            means.push(s[k * len..(k + 1) * len].iter().sum::<f64>() / len as f64);
        }
    }
    let k = means.len() as f64;
    if k == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = means.iter().sum::<f64>() / k;
    if k < 2.0 {
        return (mean, 0.0);
    }
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Wilson observable: a one-point loop `W_γ` or a two-point product `W_{γ₁} W_{−γ₂}`.
#[derive(Clone, Debug)]
pub enum WilsonObservable {
    OnePoint(FieldChain),
    TwoPoint(FieldChain, FieldChain),
}

impl WilsonObservable {
    fn chain(&self) -> FieldChain {
        match self {
            WilsonObservable::OnePoint(g) => g.clone(),
            WilsonObservable::TwoPoint(a, b) => a.sub(b),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WilsonEstimate {
    /// Phase average of `χ(∫φ)`.
    pub phase_mean: C64,
    pub phase_err: f64,
    pub phase_imag_err: f64,
    /// Average of the null-homology indicator in `Y`.
    pub indicator_mean: f64,
    pub indicator_err: f64,
    /// Largest indicator value seen over all samples.
    pub indicator_max: f64,
    /// `|Re phase − indicator| / combined stderr`.
    pub z_score: f64,
    pub samples: usize,
}

/// Runs one SW chain and evaluates both estimators for every observable on the
/// same samples. The indicator is computed from `Y` by solving `∂_{P+1} x = γ`
/// on the occupied cells.
#[allow(clippy::too_many_arguments)]
pub fn wilson_estimators(
    x: &CellComplex,
    p: usize,
    n: u32,
    prob: f64,
    observables: &[WilsonObservable],
    sweeps: usize,
    burn_in: usize,
    batches: usize,
    seed: u64,
) -> Result<Vec<WilsonEstimate>> {
    let chains: Vec<FieldChain> = observables.iter().map(|o| o.chain()).collect();
    for g in &chains {
        if !x.boundary(g)?.is_zero() {
            return Err(Error::NotACycle("Wilson loop"));
        }
    }
    let mut sampler = SwSampler::new(x, p, n, prob)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = JointState::ordered(x, p);
    for _ in 0..burn_in {
        sampler.step(&mut state, &mut rng);
    }
    let k = observables.len();
    let mut re = vec![Vec::with_capacity(sweeps); k];
    let mut im = vec![Vec::with_capacity(sweeps); k];
    let mut ind = vec![Vec::with_capacity(sweeps); k];
    let w = roots(n);
    for _ in 0..sweeps {
        sampler.step(&mut state, &mut rng);
        for (i, g) in chains.iter().enumerate() {
            let z = w[holonomy(g, &state.phi) as usize];
            re[i].push(z.re);
            im[i].push(z.im);
            ind[i].push(if is_null_in(x, p, &state.occupied, g)? { 1.0 } else { 0.0 });
        }
    }
    Ok((0..k)
        .map(|i| {
            let (mr, er) = batch_means(std::slice::from_ref(&re[i]), batches);
            let (mi, ei) = batch_means(std::slice::from_ref(&im[i]), batches);
            let (mb, eb) = batch_means(std::slice::from_ref(&ind[i]), batches);
            let comb = (er * er + eb * eb).sqrt();
            WilsonEstimate {
                phase_mean: C64::new(mr, mi),
                phase_err: er,
                phase_imag_err: ei,
                indicator_mean: mb,
                indicator_err: eb,
                indicator_max: ind[i].iter().cloned().fold(0.0, f64::max),
                z_score: if comb > 0.0 { (mr - mb).abs() / comb } else { (mr - mb).abs() / f64::EPSILON },
                samples: sweeps,
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CriticalConstants {
    /// `p_sd = √N / (1 + √N)`
    pub p_sd: f64,
    /// `β_sd = log(1 + √N)`
    pub beta_sd: f64,
    /// `1 − N^{−C(2(P+1), P+1)}`
    pub nonlocal_probability: f64,
}

pub fn critical_constants(n: u32, p: usize) -> Result<CriticalConstants> {
    if n < 2 {
        return Err(Error::InvalidParameter("N must be at least 2".into()));
    }
    let s = (n as f64).sqrt();
    let b = binomial(2 * (p + 1), p + 1) as f64;
    Ok(CriticalConstants {
        p_sd: s / (1.0 + s),
        beta_sd: s.ln_1p(),
        nonlocal_probability: -(-b * (n as f64).ln()).exp_m1(),
    })
}

fn binomial(n: usize, k: usize) -> u64 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Monte Carlo scan over `T_L^{2(P+1)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub modulus: u32,
    pub form_degree: usize,
    pub lengths: Vec<usize>,
    pub probabilities: Vec<f64>,
    pub sweeps: usize,
    /// Defaults to `10 L`.
    #[serde(default)]
    pub burn_in: Option<usize>,
    pub chains: usize,
    #[serde(default = "default_batches")]
    pub batches: usize,
    pub seed: u64,
}

fn default_batches() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    #[serde(rename = "N")]
    pub modulus: u32,
    #[serde(rename = "P")]
    pub form_degree: usize,
    #[serde(rename = "L")]
    pub length: usize,
    pub p: f64,
    pub sweeps: usize,
    pub seed: u64,
    #[serde(rename = "muA")]
    pub mu_a: f64,
    #[serde(rename = "muA_err")]
    pub mu_a_err: f64,
    #[serde(rename = "muS")]
    pub mu_s: f64,
    #[serde(rename = "muS_err")]
    pub mu_s_err: f64,
    #[serde(rename = "lockE")]
    pub lock_e: f64,
    #[serde(rename = "lockE_err")]
    pub lock_e_err: f64,
    #[serde(rename = "bP_mean")]
    pub b_p_mean: f64,
    /// Locking frequency of the reference pair alone; not part of the CSV.
    #[serde(skip)]
    pub pair_lock: f64,
    #[serde(skip)]
    pub pair_lock_err: f64,
}

struct ChainSeries {
    a: Vec<f64>,
    s: Vec<f64>,
    e: Vec<f64>,
    b: Vec<f64>,
    r: Vec<f64>,
}

fn run_chain(
    x: &CellComplex,
    cfg: &ScanConfig,
    prob: f64,
    family: &LockingFamily,
    burn_in: usize,
    chain: usize,
) -> Result<ChainSeries> {
    let mut sampler = SwSampler::new(x, cfg.form_degree, cfg.modulus, prob)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ chain as u64);
    let mut state = JointState::ordered(x, cfg.form_degree);
    for _ in 0..burn_in {
        sampler.step(&mut state, &mut rng);
    }
    let mut out = ChainSeries {
        a: Vec::with_capacity(cfg.sweeps),
        s: Vec::with_capacity(cfg.sweeps),
        e: Vec::with_capacity(cfg.sweeps),
        b: Vec::with_capacity(cfg.sweeps),
        r: Vec::with_capacity(cfg.sweeps),
    };
    let ind = |v: bool| if v { 1.0 } else { 0.0 };
    for _ in 0..cfg.sweeps {
        let info = sampler.step(&mut state, &mut rng);
        out.a.push(ind(info.homology.nonzero));
        out.s.push(ind(info.homology.surjective));
        out.e.push(ind(family.event(&state.phi)));
        out.b.push(info.homology.b_p as f64);
        out.r.push(ind(family.reference_event(&state.phi)));
    }
    Ok(out)
}

/// Independent SW chains per `(L, p)`; chain `k` uses the stream `seed ⊕ k`.
pub fn transition_scan(cfg: &ScanConfig) -> Result<Vec<ScanRow>> {
    require_prime(cfg.modulus)?;
    if cfg.chains == 0 || cfg.sweeps == 0 {
        return Err(Error::InvalidParameter("need at least one chain and one sweep".into()));
    }
    let d = 2 * (cfg.form_degree + 1);
    let mut rows = Vec::new();
    for &l in &cfg.lengths {
        let x = CellComplex::build_torus(d, l)?;
        let family = LockingFamily::axis_aligned(&x, cfg.form_degree, cfg.modulus);
        let burn_in = cfg.burn_in.unwrap_or(10 * l);
        for &prob in &cfg.probabilities {
            check_probability(prob, true)?;
            let series: Vec<ChainSeries> = (0..cfg.chains)
                .into_par_iter()
                .map(|k| run_chain(&x, cfg, prob, &family, burn_in, k))
                .collect::<Result<_>>()?;
            let pick = |f: fn(&ChainSeries) -> &Vec<f64>| -> (f64, f64) {
                let v: Vec<Vec<f64>> = series.iter().map(|s| f(s).clone()).collect();
                batch_means(&v, cfg.batches)
            };
            let (mu_a, mu_a_err) = pick(|s| &s.a);
            let (mu_s, mu_s_err) = pick(|s| &s.s);
            let (lock_e, lock_e_err) = pick(|s| &s.e);
            let (b_p_mean, _) = pick(|s| &s.b);
            let (pair_lock, pair_lock_err) = pick(|s| &s.r);
            rows.push(ScanRow {
                modulus: cfg.modulus,
                form_degree: cfg.form_degree,
                length: l,
                p: prob,
                sweeps: cfg.sweeps,
                seed: cfg.seed,
                mu_a,
                mu_a_err,
                mu_s,
                mu_s_err,
                lock_e,
                lock_e_err,
                b_p_mean,
                pair_lock,
                pair_lock_err,
            });
        }
    }
    Ok(rows)
}

pub fn write_scan_csv<W: Write>(rows: &[ScanRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    Ok(())
}
