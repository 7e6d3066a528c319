//! Closed-defect gas, two-species polymer gas and sector Fourier resolution of
//! the normalized fixed-background amplitude.
//!
//! Magnetic defects are closed dual (d−P)-chains `𝔪∨` with local amplitude
//! `ϖ_c(m) = W_c(m)/W_c(0)` on the crossed (P+1)-cell; electric defects are
//! closed P-chains `𝔢` with `υ_u(e) = V̂_u(−e)/V̂_u(0)`.
//!
//! All chain spaces are enumerated as affine families `base + Σ x_k basis_k`.
//! The bilinear linking phase between the two species is rank-factorized,
//! so each side is reduced to a histogram over `F_N^r`.

use std::collections::HashSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::{DualCorrespondence, FieldChain};
use crate::error::{Error, Result};
use crate::falgebra::{dft_axes, intersection, is_prime, roots, Convention, FpMatrix, HomologyData, LinkingPairing};
use crate::spacetime::{BackgroundCharge, LocalWeights};
use crate::C64;

/// Cap on the number of points of one affine family.
pub const DEFAULT_FAMILY_CAP: u128 = 1 << 26;
/// Cap on histogram size `N^{betti + r}`.
pub const DEFAULT_HISTOGRAM_CAP: u128 = 1 << 23;
/// Cap on compatible polymer families per species.
pub const DEFAULT_GAS_CAP: u64 = 1 << 24;

#[derive(Clone, Debug, PartialEq)]
pub struct DefectAmplitudes {
    pub modulus: u32,
    pub form_degree: usize,
    /// `ϖ_c(m)` per (P+1)-cell of `X̄`.
    pub magnetic: Vec<Vec<C64>>,
    /// `υ_u(e)` per P-cell of `X̄`.
    pub electric: Vec<Vec<C64>>,
}

pub fn defect_amplitudes(w: &LocalWeights) -> Result<DefectAmplitudes> {
    let n = w.modulus;
    let nn = n as usize;
    let om = roots(n);
    let magnetic = w
        .w
        .iter()
        .enumerate()
        .map(|(c, arr)| {
            if arr[0] == C64::new(0.0, 0.0) {
                return Err(Error::VanishingZeroMode { kind: "W", cell: c });
            }
            Ok(arr.iter().map(|z| z / arr[0]).collect())
        })
        .collect::<Result<Vec<Vec<C64>>>>()?;
    let electric = w
        .v
        .iter()
        .enumerate()
        .map(|(u, arr)| {
            let zero: C64 = arr.iter().sum();
            if zero == C64::new(0.0, 0.0) {
                return Err(Error::VanishingZeroMode { kind: "V", cell: u });
            }
            // V̂(−e) ∝ Σ_x V(x) ω^{ex}
            Ok((0..nn)
                .map(|e| {
                    arr.iter()
                        .enumerate()
                        .map(|(x, v)| v * om[e * x % nn])
                        .sum::<C64>()
                        / zero
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<C64>>>>()?;
    Ok(DefectAmplitudes {
        modulus: n,
        form_degree: w.form_degree,
        magnetic,
        electric,
    })
}

impl DefectAmplitudes {
    /// Largest deviation of `W_c(0)Σ_m ϖ_c(m)δ(x−m)` and
    /// `(V̂_u(0)/√N)Σ_e υ_u(e)χ_e(−x)` from the original weights.
    pub fn reconstruction_error(&self, w: &LocalWeights) -> f64 {
        let nn = self.modulus as usize;
        let om = roots(self.modulus);
        let mut err: f64 = 0.0;
        for (arr, amp) in w.w.iter().zip(&self.magnetic) {
            for x in 0..nn {
                err = err.max((arr[0] * amp[x] - arr[x]).norm());
            }
        }
        for (arr, amp) in w.v.iter().zip(&self.electric) {
            let mean = arr.iter().sum::<C64>() / nn as f64;
            for x in 0..nn {
                let s: C64 = (0..nn).map(|e| amp[e] * om[(nn - e * x % nn) % nn]).sum();
                err = err.max((mean * s - arr[x]).norm());
            }
        }
        err
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Species {
    Magnetic,
    Electric,
}

/// Which shared cells make two carrier cells adjacent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adjacency {
    Faces,
    Cofaces,
    #[default]
    Both,
}

/// Same-species exclusion rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HardCore {
    /// Carriers must be disjoint.
    Overlap,
    /// Carriers must be disjoint and non-adjacent; this is the rule under
    /// which closed chains decompose uniquely into polymers.
    #[default]
    Touching,
}

/// Carrier cells and their adjacency for both species. Needs no field
/// structure, so it is available for composite moduli.
#[derive(Clone, Debug)]
pub struct CarrierGraph {
    pub bar: DualCorrespondence,
    pub p: usize,
    pub modulus: u32,
    pub adjacency: Adjacency,
    neighbors_m: Vec<Vec<u32>>,
    neighbors_e: Vec<Vec<u32>>,
}

fn neighbor_lists(
    x: &crate::complex::CellComplex,
    q: usize,
    adjacency: Adjacency,
) -> Vec<Vec<u32>> {
    (0..x.count(q))
        .map(|c| {
            let mut out: Vec<u32> = Vec::new();
            if matches!(adjacency, Adjacency::Faces | Adjacency::Both) && q >= 1 {
                for &(f, _) in x.faces(q, c) {
                    out.extend(x.cofaces(q - 1, f as usize).iter().map(|&(o, _)| o));
                }
            }
            if matches!(adjacency, Adjacency::Cofaces | Adjacency::Both) && q < x.dim() {
                for &(f, _) in x.cofaces(q, c) {
                    out.extend(x.faces(q + 1, f as usize).iter().map(|&(o, _)| o));
                }
            }
            out.sort_unstable();
            out.dedup();
            out.retain(|&o| o as usize != c);
            out
        })
        .collect()
}

impl CarrierGraph {
    pub fn new(bar: &DualCorrespondence, p: usize, modulus: u32, adjacency: Adjacency) -> Result<Self> {
        if modulus < 2 {
            return Err(Error::InvalidParameter(format!("modulus {modulus} < 2")));
        }
        if p >= bar.dim() {
            return Err(Error::InvalidParameter(format!("form degree {p} out of range")));
        }
        Ok(CarrierGraph {
            bar: bar.clone(),
            p,
            modulus,
            adjacency,
            neighbors_m: neighbor_lists(&bar.primal, p + 1, adjacency),
            neighbors_e: neighbor_lists(&bar.primal, p, adjacency),
        })
    }

    pub fn magnetic_degree(&self) -> usize {
        self.bar.dim() - self.p - 1
    }

    /// Carrier cells (primal) adjacent to `cell`.
    pub fn neighbors(&self, species: Species, cell: usize) -> &[u32] {
        match species {
            Species::Magnetic => &self.neighbors_m[cell],
            Species::Electric => &self.neighbors_e[cell],
        }
    }

    /// Largest number of neighbours of a carrier cell.
    pub fn max_degree(&self, species: Species) -> usize {
        let lists = match species {
            Species::Magnetic => &self.neighbors_m,
            Species::Electric => &self.neighbors_e,
        };
        lists.iter().map(|l| l.len()).max().unwrap_or(0)
    }

    pub fn carrier_count(&self, species: Species) -> usize {
        match species {
            Species::Magnetic => self.bar.primal.count(self.p + 1),
            Species::Electric => self.bar.primal.count(self.p),
        }
    }

    /// Chain coordinate sitting on a carrier cell.
    pub fn coordinate_of_carrier(&self, species: Species, cell: usize) -> usize {
        match species {
            Species::Magnetic => self.bar.theta_inv(self.p + 1, cell),
            Species::Electric => cell,
        }
    }

    pub fn carrier_of_coordinate(&self, species: Species, coord: usize) -> usize {
        match species {
            Species::Magnetic => self.bar.theta(self.magnetic_degree(), coord),
            Species::Electric => coord,
        }
    }

    /// `(degree, length)` of the chain space of a species.
    fn chain_shape(&self, species: Species) -> (usize, usize) {
        match species {
            Species::Magnetic => (self.magnetic_degree(), self.bar.dual.count(self.magnetic_degree())),
            Species::Electric => (self.p, self.bar.primal.count(self.p)),
        }
    }

    fn tables<'a>(&self, species: Species, amp: &'a DefectAmplitudes) -> Vec<&'a [C64]> {
        match species {
            Species::Magnetic => (0..self.bar.dual.count(self.magnetic_degree()))
                .map(|i| amp.magnetic[self.carrier_of_coordinate(species, i)].as_slice())
                .collect(),
            Species::Electric => amp.electric.iter().map(|a| a.as_slice()).collect(),
        }
    }

    pub fn check_amplitudes(&self, amp: &DefectAmplitudes) -> Result<()> {
        if amp.modulus != self.modulus || amp.form_degree != self.p {
            return Err(Error::InvalidParameter("amplitudes do not match the context".into()));
        }
        if amp.magnetic.len() != self.bar.primal.count(self.p + 1) {
            return Err(Error::LengthMismatch {
                what: "magnetic amplitudes",
                expected: self.bar.primal.count(self.p + 1),
                got: amp.magnetic.len(),
            });
        }
        if amp.electric.len() != self.bar.primal.count(self.p) {
            return Err(Error::LengthMismatch {
                what: "electric amplitudes",
                expected: self.bar.primal.count(self.p),
                got: amp.electric.len(),
            });
        }
        Ok(())
    }
}

/// Homology, linking and carrier data for one suspension and form degree.
#[derive(Clone, Debug)]
pub struct DefectContext {
    pub bar: DualCorrespondence,
    pub p: usize,
    pub modulus: u32,
    pub pairing: LinkingPairing,
    pub graph: CarrierGraph,
}

impl DefectContext {
    pub fn new(bar: &DualCorrespondence, p: usize, modulus: u32, convention: Convention) -> Result<Self> {
        Self::with_adjacency(bar, p, modulus, convention, Adjacency::Both)
    }

    pub fn with_adjacency(
        bar: &DualCorrespondence,
        p: usize,
        modulus: u32,
        convention: Convention,
        adjacency: Adjacency,
    ) -> Result<Self> {
        let pairing = LinkingPairing::new(bar, p, modulus, convention)?;
        Ok(DefectContext {
            bar: bar.clone(),
            p,
            modulus,
            pairing,
            graph: CarrierGraph::new(bar, p, modulus, adjacency)?,
        })
    }

    /// Homology of `X̄∨` in degree d−P.
    pub fn magnetic(&self) -> &HomologyData {
        &self.pairing.dual
    }

    /// Homology of `X̄` in degree P.
    pub fn electric(&self) -> &HomologyData {
        &self.pairing.primal
    }

    pub fn magnetic_degree(&self) -> usize {
        self.graph.magnetic_degree()
    }

    /// `(|Ĥ_m|, |Ĥ_e|)`.
    pub fn sector_counts(&self) -> (usize, usize) {
        let n = self.modulus as usize;
        (
            n.pow(self.magnetic().betti() as u32),
            n.pow(self.electric().betti() as u32),
        )
    }

    pub fn neighbors(&self, species: Species, cell: usize) -> &[u32] {
        self.graph.neighbors(species, cell)
    }

    pub fn carrier_count(&self, species: Species) -> usize {
        self.graph.carrier_count(species)
    }

    pub fn coordinate_of_carrier(&self, species: Species, cell: usize) -> usize {
        self.graph.coordinate_of_carrier(species, cell)
    }

    pub fn carrier_of_coordinate(&self, species: Species, coord: usize) -> usize {
        self.graph.carrier_of_coordinate(species, coord)
    }

    pub fn homology(&self, species: Species) -> &HomologyData {
        match species {
            Species::Magnetic => self.magnetic(),
            Species::Electric => self.electric(),
        }
    }

    fn tables<'a>(&self, species: Species, amp: &'a DefectAmplitudes) -> Vec<&'a [C64]> {
        self.graph.tables(species, amp)
    }

    fn check_amplitudes(&self, amp: &DefectAmplitudes) -> Result<()> {
        self.graph.check_amplitudes(amp)
    }
}

/// `wt_m(𝔪∨) = Π_c ϖ_c((ϑ𝔪∨)_c)`.
pub fn magnetic_weight(ctx: &DefectContext, amp: &DefectAmplitudes, chain: &FieldChain) -> C64 {
    ctx.tables(Species::Magnetic, amp)
        .iter()
        .zip(&chain.coeffs)
        .map(|(t, &c)| t[c as usize])
        .product()
}

/// `wt_e(𝔢) = Π_u υ_u(𝔢_u)`.
pub fn electric_weight(amp: &DefectAmplitudes, chain: &FieldChain) -> C64 {
    amp.electric
        .iter()
        .zip(&chain.coeffs)
        .map(|(t, &c)| t[c as usize])
        .product()
}

/// Affine family `base + Σ x_k basis_k` with per-coordinate weight tables,
/// a linear phase `ω^{lin·x}` and output digits `Σ x_k digits_k`.
struct Family<'a> {
    n: usize,
    base: Vec<u32>,
    basis: Vec<Vec<(usize, u32)>>,
    tables: Vec<&'a [C64]>,
    lin: Vec<u32>,
    digits: Vec<Vec<u32>>,
    out_digits: usize,
    closing: Vec<Vec<usize>>,
    constant: C64,
    om: Vec<C64>,
}

impl<'a> Family<'a> {
    fn new(
        n: u32,
        base: &[u32],
        basis: &[FieldChain],
        tables: Vec<&'a [C64]>,
        lin: Vec<u32>,
        digits: Vec<Vec<u32>>,
        out_digits: usize,
    ) -> Self {
        let nn = n as usize;
        let sparse: Vec<Vec<(usize, u32)>> = basis
            .iter()
            .map(|b| {
                b.coeffs
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c != 0)
                    .map(|(i, &c)| (i, c))
                    .collect()
            })
            .collect();
        let mut last = vec![usize::MAX; base.len()];
        for (k, b) in sparse.iter().enumerate() {
            for &(i, _) in b {
                last[i] = k;
            }
        }
        let mut closing = vec![Vec::new(); sparse.len()];
        let mut constant = C64::new(1.0, 0.0);
        for (i, &l) in last.iter().enumerate() {
            if l == usize::MAX {
                constant *= tables[i][base[i] as usize % nn];
            } else {
                closing[l].push(i);
            }
        }
        Family {
            n: nn,
            base: base.to_vec(),
            basis: sparse,
            tables,
            lin,
            digits,
            out_digits,
            closing,
            constant,
            om: roots(n),
        }
    }

    fn size(&self) -> u128 {
        (self.n as u128)
            .checked_pow(self.basis.len() as u32)
            .unwrap_or(u128::MAX)
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &self,
        level: usize,
        prod: C64,
        phase: usize,
        acc: &mut [u32],
        dig: &mut [u32],
        hist: &mut [C64],
    ) {
        let n = self.n;
        if level == self.basis.len() {
            let idx = dig.iter().fold(0usize, |a, &d| a * n + d as usize);
            hist[idx] += prod * self.om[phase];
            return;
        }
        let mut phase = phase;
        for x in 0..n {
            if x > 0 {
                self.step(level, acc, dig, &mut phase);
            }
            let mut f = prod;
            for &i in &self.closing[level] {
                f *= self.tables[i][acc[i] as usize];
            }
            if f != C64::new(0.0, 0.0) {
                self.dfs(level + 1, f, phase, acc, dig, hist);
            }
        }
        self.step(level, acc, dig, &mut phase);
    }

    fn step(&self, level: usize, acc: &mut [u32], dig: &mut [u32], phase: &mut usize) {
        let n = self.n as u32;
        for &(i, c) in &self.basis[level] {
            acc[i] = (acc[i] + c) % n;
        }
        for (d, &c) in dig.iter_mut().zip(&self.digits[level]) {
            *d = (*d + c) % n;
        }
        *phase = (*phase + self.lin[level] as usize) % self.n;
    }

    fn histogram(&self, cap: u128, hist_cap: u128) -> Result<Vec<C64>> {
        let n = self.n;
        if self.size() > cap {
            return Err(Error::CapExceeded {
                what: "closed-chain family",
                requested: self.size(),
                cap,
                hint: "use the truncated polymer gas",
            });
        }
        let hsize = (n as u128).checked_pow(self.out_digits as u32).unwrap_or(u128::MAX);
        if hsize > hist_cap {
            return Err(Error::CapExceeded {
                what: "sector histogram",
                requested: hsize,
                cap: hist_cap,
                hint: "reduce the lattice or the modulus",
            });
        }
        let hsize = hsize as usize;
        let levels = self.basis.len();
        let mut split = 0;
        while split < levels && n.pow(split as u32) < 64 {
            split += 1;
        }
        let prefixes = n.pow(split as u32);
        let groups = prefixes.min(8);
        let per = prefixes.div_ceil(groups);
        let parts: Vec<Vec<C64>> = (0..groups)
            .into_par_iter()
            .map(|g| {
                let mut hist = vec![C64::new(0.0, 0.0); hsize];
                for prefix in g * per..((g + 1) * per).min(prefixes) {
                    let mut acc = self.base.iter().map(|&b| b % n as u32).collect::<Vec<_>>();
                    let mut dig = vec![0u32; self.out_digits];
                    let mut phase = 0usize;
                    let mut prod = self.constant;
                    let mut r = prefix;
                    let mut xs = vec![0usize; split];
                    for k in (0..split).rev() {
                        xs[k] = r % n;
                        r /= n;
                    }
                    for (level, &x) in xs.iter().enumerate() {
                        for _ in 0..x {
                            self.step(level, &mut acc, &mut dig, &mut phase);
                        }
                        for &i in &self.closing[level] {
                            prod *= self.tables[i][acc[i] as usize];
                        }
                    }
                    if prod != C64::new(0.0, 0.0) {
                        self.dfs(split, prod, phase, &mut acc, &mut dig, &mut hist);
                    }
                }
                hist
            })
            .collect();
        let mut out = vec![C64::new(0.0, 0.0); hsize];
        for part in parts {
            for (o, v) in out.iter_mut().zip(part) {
                *o += v;
            }
        }
        Ok(out)
    }
}

/// Rank factorization `L = A·B` over F_N; returns `(Aᵀ rows per row of L, B)`.
fn rank_factor(l: &FpMatrix) -> Result<(Vec<Vec<u32>>, FpMatrix)> {
    let ech = l.echelon()?;
    let r = ech.rank;
    let a_rows: Vec<Vec<u32>> = (0..l.rows())
        .map(|k| ech.pivot_cols.iter().map(|&c| l.get(k, c)).collect())
        .collect();
    let mut b = FpMatrix::zeros(r, l.cols(), l.modulus());
    for i in 0..r {
        for j in 0..l.cols() {
            b.set(i, j, ech.reduced.get(i, j));
        }
    }
    Ok((a_rows, b))
}

/// `Σ_{u} G_m[ℓ_m, u] Σ_v G_e[ℓ_e, v] ω^{−u·v}` for all `(ℓ_m, ℓ_e)`, from
/// histograms laid out as `[class digits][key digits]`.
fn combine(n: u32, hm: Vec<C64>, bm: usize, he: Vec<C64>, be: usize, r: usize) -> Vec<C64> {
    let nn = n as usize;
    let mut gm = hm;
    dft_axes(&mut gm, nn, bm + r, 0..bm, 1);
    let mut ge = he;
    dft_axes(&mut ge, nn, be + r, 0..be, 1);
    dft_axes(&mut ge, nn, be + r, be..be + r, -1);
    let keys = nn.pow(r as u32);
    let (sm, se) = (nn.pow(bm as u32), nn.pow(be as u32));
    (0..sm * se)
        .into_par_iter()
        .map(|idx| {
            let (lm, le) = (idx / se, idx % se);
            let a = &gm[lm * keys..(lm + 1) * keys];
            let b = &ge[le * keys..(le + 1) * keys];
            a.iter().zip(b).map(|(x, y)| x * y).sum()
        })
        .collect()
}


/// Closed-defect sum at fixed background:
/// `Σ_{[𝔪∨]=[q_m]} Σ_{[𝔢]=[q_e]} wt_m wt_e ω^{−Lk(𝔪∨−q_m, 𝔢−q_e)}`.
pub fn closed_defect_sum(ctx: &DefectContext, amp: &DefectAmplitudes, bg: &BackgroundCharge) -> Result<C64> {
    closed_defect_sum_capped(ctx, amp, bg, DEFAULT_FAMILY_CAP)
}

pub fn closed_defect_sum_capped(
    ctx: &DefectContext,
    amp: &DefectAmplitudes,
    bg: &BackgroundCharge,
    cap: u128,
) -> Result<C64> {
    ctx.check_amplitudes(amp)?;
    bg.validate(&ctx.bar, ctx.p)?;
    let n = ctx.modulus;
    let bmag = ctx.magnetic().boundary_basis();
    let bel = ctx.electric().boundary_basis();
    // Λ_kl = Lk(∂-basis∨_k, ∂-basis_l), canonical on boundaries
    let fills: Vec<FieldChain> = bel
        .iter()
        .map(|b| ctx.electric().fill(b))
        .collect::<Result<_>>()?;
    let mut lam = FpMatrix::zeros(bmag.len(), bel.len(), n);
    for (k, bm) in bmag.iter().enumerate() {
        for (l, f) in fills.iter().enumerate() {
            lam.set(k, l, intersection(&ctx.bar, bm, f)?);
        }
    }
    let (a_rows, b) = rank_factor(&lam)?;
    let r = b.rows();
    let b_cols: Vec<Vec<u32>> = (0..bel.len()).map(|l| b.column(l)).collect();
    let fam_m = Family::new(
        n,
        &bg.q_m.coeffs,
        bmag,
        ctx.tables(Species::Magnetic, amp),
        vec![0; bmag.len()],
        a_rows,
        r,
    );
    let fam_e = Family::new(
        n,
        &bg.q_e.coeffs,
        bel,
        ctx.tables(Species::Electric, amp),
        vec![0; bel.len()],
        b_cols,
        r,
    );
    let hm = fam_m.histogram(cap, DEFAULT_HISTOGRAM_CAP)?;
    let he = fam_e.histogram(cap, DEFAULT_HISTOGRAM_CAP)?;
    Ok(combine(n, hm, 0, he, 0, r)[0])
}

/// Same sum as a double loop over explicit chains, filling each electric
/// difference `𝔢 − q_e` separately.
pub fn closed_defect_sum_direct(
    ctx: &DefectContext,
    amp: &DefectAmplitudes,
    bg: &BackgroundCharge,
    max_pairs: u128,
) -> Result<C64> {
    ctx.check_amplitudes(amp)?;
    bg.validate(&ctx.bar, ctx.p)?;
    let n = ctx.modulus;
    let span = |basis: &[FieldChain]| -> Result<Vec<FieldChain>> {
        let k = basis.len() as u32;
        let count = (n as u128).pow(k);
        if count > max_pairs {
            return Err(Error::CapExceeded {
                what: "closed_defect_sum_direct",
                requested: count,
                cap: max_pairs,
                hint: "use closed_defect_sum",
            });
        }
        Ok((0..count as usize)
            .map(|mut idx| {
                let mut z = FieldChain::zeros(n, basis[0].degree, basis[0].len());
                for b in basis {
                    let x = (idx % n as usize) as u32;
                    idx /= n as usize;
                    if x != 0 {
                        z = z.combine(b, x);
                    }
                }
                z
            })
            .collect())
    };
    let dm = if ctx.magnetic().boundary_basis().is_empty() {
        vec![FieldChain::zeros(n, bg.q_m.degree, bg.q_m.len())]
    } else {
        span(ctx.magnetic().boundary_basis())?
    };
    let de = if ctx.electric().boundary_basis().is_empty() {
        vec![FieldChain::zeros(n, bg.q_e.degree, bg.q_e.len())]
    } else {
        span(ctx.electric().boundary_basis())?
    };
    if (dm.len() as u128) * (de.len() as u128) > max_pairs {
        return Err(Error::CapExceeded {
            what: "closed_defect_sum_direct",
            requested: dm.len() as u128 * de.len() as u128,
            cap: max_pairs,
            hint: "use closed_defect_sum",
        });
    }
    let om = roots(n);
    let elec: Vec<(C64, FieldChain)> = de
        .iter()
        .map(|d| Ok((electric_weight(amp, &bg.q_e.add(d)), ctx.electric().fill(d)?)))
        .collect::<Result<_>>()?;
    let parts: Vec<Result<C64>> = dm
        .par_iter()
        .map(|d| {
            let wm = magnetic_weight(ctx, amp, &bg.q_m.add(d));
            let mut acc = C64::new(0.0, 0.0);
            for (we, sigma) in &elec {
                let lk = intersection(&ctx.bar, d, sigma)? as usize;
                acc += wm * we * om[(n as usize - lk) % n as usize];
            }
            Ok(acc)
        })
        .collect();
    parts.into_iter().sum()
}

/// Topological sector label `(ℓ_m, ℓ_e)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SectorLabel {
    pub lm: Vec<u32>,
    pub le: Vec<u32>,
}

impl SectorLabel {
    pub fn trivial(ctx: &DefectContext) -> Self {
        SectorLabel {
            lm: vec![0; ctx.magnetic().betti()],
            le: vec![0; ctx.electric().betti()],
        }
    }

    /// Position in the row-major sector list (magnetic digits first).
    pub fn index(&self, n: u32) -> usize {
        self.lm
            .iter()
            .chain(&self.le)
            .fold(0usize, |a, &d| a * n as usize + d as usize)
    }

    pub fn from_index(ctx: &DefectContext, mut idx: usize) -> Self {
        let n = ctx.modulus as usize;
        let (bm, be) = (ctx.magnetic().betti(), ctx.electric().betti());
        let mut digits = vec![0u32; bm + be];
        for d in digits.iter_mut().rev() {
            *d = (idx % n) as u32;
            idx /= n;
        }
        SectorLabel {
            lm: digits[..bm].to_vec(),
            le: digits[bm..].to_vec(),
        }
    }

    fn check(&self, ctx: &DefectContext) -> Result<()> {
        if self.lm.len() != ctx.magnetic().betti() || self.le.len() != ctx.electric().betti() {
            return Err(Error::LengthMismatch {
                what: "sector label",
                expected: ctx.magnetic().betti() + ctx.electric().betti(),
                got: self.lm.len() + self.le.len(),
            });
        }
        Ok(())
    }
}

/// Linear data shared by the exact and gas sector evaluators.
struct SectorSetup {
    /// `Aᵀ` rows for magnetic cycle-basis vectors
    a_rows: Vec<Vec<u32>>,
    /// `B` columns for electric cycle-basis vectors
    b_cols: Vec<Vec<u32>>,
    r: usize,
    lin_m: Vec<u32>,
    lin_e: Vec<u32>,
    base_phase: u32,
}

fn sector_setup(ctx: &DefectContext, bg: &BackgroundCharge) -> Result<SectorSetup> {
    let n = ctx.modulus;
    let zm = ctx.magnetic().cycle_basis();
    let ze = ctx.electric().cycle_basis();
    let lk = &ctx.pairing;
    let mut l = FpMatrix::zeros(zm.len(), ze.len(), n);
    for (k, a) in zm.iter().enumerate() {
        for (j, b) in ze.iter().enumerate() {
            l.set(k, j, lk.lk(a, b)?);
        }
    }
    let (a_rows, b) = rank_factor(&l)?;
    let lin_m = zm.iter().map(|a| lk.lk(a, &bg.q_e)).collect::<Result<_>>()?;
    let lin_e = ze.iter().map(|b| lk.lk(&bg.q_m, b)).collect::<Result<_>>()?;
    Ok(SectorSetup {
        a_rows,
        b_cols: (0..ze.len()).map(|j| b.column(j)).collect(),
        r: b.rows(),
        lin_m,
        lin_e,
        base_phase: lk.lk(&bg.q_m, &bg.q_e)?,
    })
}

/// Output digits `(class, key)` for cycle-basis vector `k` of one side.
fn side_digits(keys: &[Vec<u32>], bd: usize, betti: usize, r: usize) -> Vec<Vec<u32>> {
    keys.iter()
        .enumerate()
        .map(|(k, key)| {
            let mut d = vec![0u32; betti + r];
            if k >= bd {
                d[k - bd] = 1;
            }
            d[betti..].copy_from_slice(key);
            d
        })
        .collect()
}

fn finish_sectors(n: u32, base_phase: u32, sums: Vec<C64>) -> Vec<C64> {
    let ph = roots(n)[(n as usize - base_phase as usize) % n as usize];
    sums.into_iter().map(|z| z * ph).collect()
}

/// All sector amplitudes `Ẑ(ℓ_m, ℓ_e)` by exhaustive enumeration of closed chains,
/// indexed as in [`SectorLabel::index`].
pub fn sector_amplitudes_exact(
    ctx: &DefectContext,
    amp: &DefectAmplitudes,
    bg: &BackgroundCharge,
) -> Result<Vec<C64>> {
    ctx.check_amplitudes(amp)?;
    bg.validate(&ctx.bar, ctx.p)?;
    let n = ctx.modulus;
    let s = sector_setup(ctx, bg)?;
    let (hm_data, he_data) = (ctx.magnetic(), ctx.electric());
    let zm = hm_data.cycle_basis();
    let ze = he_data.cycle_basis();
    let (bm, be) = (hm_data.betti(), he_data.betti());
    let fam_m = Family::new(
        n,
        &vec![0; bg.q_m.len()],
        &zm,
        ctx.tables(Species::Magnetic, amp),
        s.lin_m.clone(),
        side_digits(&s.a_rows, hm_data.boundary_dim(), bm, s.r),
        bm + s.r,
    );
    let fam_e = Family::new(
        n,
        &vec![0; bg.q_e.len()],
        &ze,
        ctx.tables(Species::Electric, amp),
        s.lin_e.clone(),
        side_digits(&s.b_cols, he_data.boundary_dim(), be, s.r),
        be + s.r,
    );
    let hm = fam_m.histogram(DEFAULT_FAMILY_CAP, DEFAULT_HISTOGRAM_CAP)?;
    let he = fam_e.histogram(DEFAULT_FAMILY_CAP, DEFAULT_HISTOGRAM_CAP)?;
    Ok(finish_sectors(n, s.base_phase, combine(n, hm, bm, he, be, s.r)))
}

pub fn sector_amplitude_exact(
    ctx: &DefectContext,
    amp: &DefectAmplitudes,
    bg: &BackgroundCharge,
    sector: &SectorLabel,
) -> Result<C64> {
    sector.check(ctx)?;
    Ok(sector_amplitudes_exact(ctx, amp, bg)?[sector.index(ctx.modulus)])
}

/// `𝒵(q_m,q_e) = (1/|Ĥ_m||Ĥ_e|) Σ_ℓ ω^{−ℓ_m([q_m])−ℓ_e([q_e])} Ẑ(ℓ)`.
pub fn reconstruct_from_sectors(ctx: &DefectContext, amps: &[C64], bg: &BackgroundCharge) -> Result<C64> {
    let (sm, se) = ctx.sector_counts();
    if amps.len() != sm * se {
        return Err(Error::MissingSector(amps.len()));
    }
    let n = ctx.modulus;
    let hm = ctx.magnetic().class(&bg.q_m)?;
    let he = ctx.electric().class(&bg.q_e)?;
    let om = roots(n);
    let mut acc = C64::new(0.0, 0.0);
    for (idx, z) in amps.iter().enumerate() {
        let l = SectorLabel::from_index(ctx, idx);
        let e: u64 = l.lm.iter().zip(&hm).chain(l.le.iter().zip(&he)).map(|(&a, &b)| a as u64 * b as u64).sum();
        acc += z * om[(n as usize - (e % n as u64) as usize) % n as usize];
    }
    Ok(acc / (sm * se) as f64)
}

/// Support-connected closed chain of one species.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polymer {
    pub species: Species,
    /// Dual (d−P)-chain for magnetic polymers, primal P-chain for electric ones.
    pub chain: FieldChain,
    /// Sorted primal carrier cells.
    pub carrier: Vec<usize>,
    pub size: usize,
    /// Homology class coordinates.
    pub class: Vec<u32>,
}

/// Constraint rows (faces of the chain cell) for a carrier cell.
fn constraint_rows(g: &CarrierGraph, species: Species, cell: usize) -> Vec<(u32, i32)> {
    match species {
        Species::Electric => {
            if g.p == 0 {
                Vec::new()
            } else {
                g.bar.primal.faces(g.p, cell).to_vec()
            }
        }
        Species::Magnetic => {
            let q = g.magnetic_degree();
            if q == 0 {
                Vec::new()
            } else {
                let dual_cell = g.coordinate_of_carrier(species, cell);
                g.bar.dual.faces(q, dual_cell).to_vec()
            }
        }
    }
}

/// All closed chains whose support is exactly `set`.
fn closed_on_support(g: &CarrierGraph, species: Species, set: &[usize]) -> Result<Vec<Vec<u32>>> {
    let n = g.modulus;
    let mut rows: Vec<u32> = Vec::new();
    let lists: Vec<Vec<(u32, i32)>> = set.iter().map(|&c| constraint_rows(g, species, c)).collect();
    for l in &lists {
        rows.extend(l.iter().map(|&(r, _)| r));
    }
    rows.sort_unstable();
    let mut counts: Vec<(u32, usize)> = Vec::new();
    for r in rows {
        match counts.last_mut() {
            Some((last, k)) if *last == r => *k += 1,
            _ => counts.push((r, 1)),
        }
    }
    if counts.iter().any(|&(_, k)| k < 2) {
        return Ok(Vec::new());
    }
    let row_of = |r: u32| counts.binary_search_by_key(&r, |&(x, _)| x).unwrap();
    if !is_prime(n) {
        return Ok(closed_on_support_search(n, counts.len(), &lists, &row_of));
    }
    let mut m = FpMatrix::zeros(counts.len(), set.len(), n);
    for (j, l) in lists.iter().enumerate() {
        for &(r, e) in l {
            let i = row_of(r);
            let v = (m.get(i, j) as i64 + e as i64).rem_euclid(n as i64) as u32;
            m.set(i, j, v);
        }
    }
    let ker = m.kernel()?;
    if ker.len() > 12 {
        return Err(Error::CapExceeded {
            what: "closed chains on one support",
            requested: (n as u128).pow(ker.len() as u32),
            cap: (n as u128).pow(12),
            hint: "lower max_size",
        });
    }
    if ker.is_empty() {
        return Ok(Vec::new());
    }
    let total = (n as usize).pow(ker.len() as u32);
    let mut out = Vec::new();
    for mut idx in 1..total {
        let mut v = vec![0u32; set.len()];
        for b in &ker {
            let x = (idx % n as usize) as u32;
            idx /= n as usize;
            for (o, &c) in v.iter_mut().zip(b) {
                *o = (*o + x * c) % n;
            }
        }
        if v.iter().all(|&c| c != 0) {
            out.push(v);
        }
    }
    Ok(out)
}

/// Nowhere-zero solutions over `Z_N` by depth-first assignment, checking
/// each constraint row once its last cell is fixed.
fn closed_on_support_search(
    n: u32,
    nrows: usize,
    lists: &[Vec<(u32, i32)>],
    row_of: &dyn Fn(u32) -> usize,
) -> Vec<Vec<u32>> {
    let cols: Vec<Vec<(usize, i64)>> = lists
        .iter()
        .map(|l| l.iter().map(|&(r, e)| (row_of(r), e as i64)).collect())
        .collect();
    let mut last = vec![0usize; nrows];
    for (j, l) in cols.iter().enumerate() {
        for &(i, _) in l {
            last[i] = last[i].max(j);
        }
    }
    let closing: Vec<Vec<usize>> = (0..cols.len())
        .map(|j| (0..nrows).filter(|&i| last[i] == j).collect())
        .collect();
    fn go(
        j: usize,
        n: u32,
        cols: &[Vec<(usize, i64)>],
        closing: &[Vec<usize>],
        acc: &mut [i64],
        v: &mut Vec<u32>,
        out: &mut Vec<Vec<u32>>,
    ) {
        if j == cols.len() {
            out.push(v.clone());
            return;
        }
        for x in 1..n {
            for &(i, e) in &cols[j] {
                acc[i] += e * x as i64;
            }
            if closing[j].iter().all(|&i| acc[i].rem_euclid(n as i64) == 0) {
                v.push(x);
                go(j + 1, n, cols, closing, acc, v, out);
                v.pop();
            }
            for &(i, e) in &cols[j] {
                acc[i] -= e * x as i64;
            }
        }
    }
    let mut out = Vec::new();
    let mut acc = vec![0i64; nrows];
    go(0, n, &cols, &closing, &mut acc, &mut Vec::new(), &mut out);
    out
}

/// Connected carrier sets with minimum `root`, size at most `max_size`
/// (each set produced once).
fn connected_sets(g: &CarrierGraph, species: Species, root: usize, max_size: usize, out: &mut Vec<Vec<usize>>) {
    #[allow(clippy::too_many_arguments)]
    fn extend(
        g: &CarrierGraph,
        species: Species,
        root: usize,
        max_size: usize,
        sub: &mut Vec<usize>,
        ext: Vec<usize>,
        excluded: &mut HashSet<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        let mut s = sub.clone();
        s.sort_unstable();
        out.push(s);
        if sub.len() == max_size {
            return;
        }
        let mut ext = ext;
        while let Some(w) = ext.pop() {
            let mut added = Vec::new();
            let mut next = ext.clone();
            for &u in g.neighbors(species, w) {
                let u = u as usize;
                if u > root && !excluded.contains(&u) {
                    next.push(u);
                    excluded.insert(u);
                    added.push(u);
                }
            }
            sub.push(w);
            extend(g, species, root, max_size, sub, next, excluded, out);
            sub.pop();
            for u in added {
                excluded.remove(&u);
            }
        }
    }
    if max_size == 0 {
        return;
    }
    let mut excluded: HashSet<usize> = HashSet::new();
    excluded.insert(root);
    let mut ext = Vec::new();
    for &u in g.neighbors(species, root) {
        let u = u as usize;
        if u > root {
            ext.push(u);
            excluded.insert(u);
        }
    }
    let mut sub = vec![root];
    extend(g, species, root, max_size, &mut sub, ext, &mut excluded, out);
}

/// Support-connected closed chains without homology classes (`class` is
/// left empty). Works for any modulus.
pub fn enumerate_polymers_unclassified(
    g: &CarrierGraph,
    species: Species,
    max_size: usize,
) -> Result<Vec<Polymer>> {
    let n = g.modulus;
    let ncar = g.carrier_count(species);
    let (degree, len) = g.chain_shape(species);
    let per_root: Vec<Result<Vec<Polymer>>> = (0..ncar)
        .into_par_iter()
        .map(|root| {
            let mut sets = Vec::new();
            connected_sets(g, species, root, max_size, &mut sets);
            let mut out = Vec::new();
            for set in sets {
                for coeffs in closed_on_support(g, species, &set)? {
                    let mut chain = FieldChain::zeros(n, degree, len);
                    for (&c, &v) in set.iter().zip(&coeffs) {
                        chain.coeffs[g.coordinate_of_carrier(species, c)] = v;
                    }
                    out.push(Polymer {
                        species,
                        chain,
                        size: set.len(),
                        carrier: set.clone(),
                        class: Vec::new(),
                    });
                }
            }
            out.sort_by(|a, b| (a.size, &a.carrier, &a.chain.coeffs).cmp(&(b.size, &b.carrier, &b.chain.coeffs)));
            Ok(out)
        })
        .collect();
    let mut all = Vec::new();
    for r in per_root {
        all.extend(r?);
    }
    Ok(all)
}

/// Complete, duplicate-free list of support-connected closed chains of one
/// species with carrier size at most `max_size`.
pub fn enumerate_polymers(ctx: &DefectContext, species: Species, max_size: usize) -> Result<Vec<Polymer>> {
    let mut all = enumerate_polymers_unclassified(&ctx.graph, species, max_size)?;
    let hd = ctx.homology(species);
    for p in &mut all {
        p.class = hd.class(&p.chain)?;
    }
    Ok(all)
}

/// `ρ_m(M) = Π_c ϖ_c((ϑM)_c)` or `ρ_e(E) = Π_u υ_u(E_u)`.
pub fn bare_activity(g: &CarrierGraph, poly: &Polymer, amp: &DefectAmplitudes) -> C64 {
    let tables = g.tables(poly.species, amp);
    poly.carrier
        .iter()
        .map(|&c| {
            let i = g.coordinate_of_carrier(poly.species, c);
            tables[i][poly.chain.coeffs[i] as usize]
        })
        .product()
}

/// Background- and sector-dressed activity:
/// `ρ_m(M) ω^{ℓ_m([M]) + Lk(M, q_e)}`, `ρ_e(E) ω^{ℓ_e([E]) + Lk(q_m, E)}`.
pub fn polymer_activity(
    ctx: &DefectContext,
    poly: &Polymer,
    amp: &DefectAmplitudes,
    bg: &BackgroundCharge,
    sector: &SectorLabel,
) -> Result<C64> {
    sector.check(ctx)?;
    let n = ctx.modulus as u64;
    let (ell, lk) = match poly.species {
        Species::Magnetic => (&sector.lm, ctx.pairing.lk(&poly.chain, &bg.q_e)?),
        Species::Electric => (&sector.le, ctx.pairing.lk(&bg.q_m, &poly.chain)?),
    };
    let e: u64 = ell.iter().zip(&poly.class).map(|(&a, &b)| a as u64 * b as u64).sum::<u64>() + lk as u64;
    Ok(bare_activity(&ctx.graph, poly, amp) * roots(ctx.modulus)[(e % n) as usize])
}

/// Whether two same-species polymers may coexist.
pub fn compatible(g: &CarrierGraph, a: &Polymer, b: &Polymer, rule: HardCore) -> bool {
    debug_assert_eq!(a.species, b.species);
    let inb = |c: usize| b.carrier.binary_search(&c).is_ok();
    for &c in &a.carrier {
        if inb(c) {
            return false;
        }
        if rule == HardCore::Touching
            && g
                .neighbors(a.species, c)
                .iter()
                .any(|&u| inb(u as usize))
        {
            return false;
        }
    }
    true
}

/// Histogram over `(class, key)` digits of all compatible families of one
/// species, each weighted by its product of bare activities and `ω^{lin·x}`.
#[allow(clippy::too_many_arguments)]
fn gas_histogram(
    ctx: &DefectContext,
    polymers: &[Polymer],
    acts: &[C64],
    rule: HardCore,
    lin: &[u32],
    digits: &[Vec<u32>],
    out_digits: usize,
    forced: Option<usize>,
    cap: u64,
) -> Result<Vec<C64>> {
    let n = ctx.modulus;
    let nn = n as usize;
    let hd = ctx.homology(polymers.first().map(|p| p.species).unwrap_or(Species::Electric));
    let coords: Vec<Vec<u32>> = polymers
        .iter()
        .map(|p| hd.coordinates(&p.chain))
        .collect::<Result<_>>()?;
    // per-polymer digit vector and linear phase
    let pd: Vec<(Vec<u32>, u32)> = coords
        .iter()
        .map(|x| {
            let mut d = vec![0u32; out_digits];
            let mut ph = 0u64;
            for (k, &xk) in x.iter().enumerate() {
                if xk == 0 {
                    continue;
                }
                for (o, &c) in d.iter_mut().zip(&digits[k]) {
                    *o = (*o + xk * c) % n;
                }
                ph += xk as u64 * lin[k] as u64;
            }
            (d, (ph % n as u64) as u32)
        })
        .collect();
    let ncar = polymers
        .first()
        .map(|p| ctx.carrier_count(p.species))
        .unwrap_or(0);
    let blocks: Vec<Vec<usize>> = polymers
        .iter()
        .map(|p| {
            let mut b: Vec<usize> = p.carrier.clone();
            if rule == HardCore::Touching {
                for &c in &p.carrier {
                    b.extend(ctx.neighbors(p.species, c).iter().map(|&u| u as usize));
                }
            }
            b.sort_unstable();
            b.dedup();
            b
        })
        .collect();
    let hsize = nn.pow(out_digits as u32);
    let mut hist = vec![C64::new(0.0, 0.0); hsize];
    let om = roots(n);
    struct Walk<'a> {
        polymers: &'a [Polymer],
        blocks: &'a [Vec<usize>],
        acts: &'a [C64],
        pd: &'a [(Vec<u32>, u32)],
        n: u32,
        om: &'a [C64],
        cap: u64,
    }
    fn walk(
        w: &Walk,
        start: usize,
        blocked: &mut [u32],
        dig: &mut Vec<u32>,
        phase: u32,
        prod: C64,
        hist: &mut [C64],
        count: &mut u64,
    ) -> Result<()> {
        *count += 1;
        if *count > w.cap {
            return Err(Error::CapExceeded {
                what: "polymer families",
                requested: *count as u128,
                cap: w.cap as u128,
                hint: "lower max_size",
            });
        }
        let idx = dig.iter().fold(0usize, |a, &d| a * w.n as usize + d as usize);
        hist[idx] += prod * w.om[phase as usize];
        for j in start..w.polymers.len() {
            if w.polymers[j].carrier.iter().any(|&c| blocked[c] > 0) {
                continue;
            }
            for &c in &w.blocks[j] {
                blocked[c] += 1;
            }
            let saved = dig.clone();
            for (o, &c) in dig.iter_mut().zip(&w.pd[j].0) {
                *o = (*o + c) % w.n;
            }
            let ph = (phase + w.pd[j].1) % w.n;
            walk(w, j + 1, blocked, dig, ph, prod * w.acts[j], hist, count)?;
            *dig = saved;
            for &c in &w.blocks[j] {
                blocked[c] -= 1;
            }
        }
        Ok(())
    }
    let w = Walk {
        polymers,
        blocks: &blocks,
        acts,
        pd: &pd,
        n,
        om: &om,
        cap,
    };
    let mut blocked = vec![0u32; ncar];
    let mut dig = vec![0u32; out_digits];
    let mut count = 0u64;
    let (phase, prod) = match forced {
        Some(j) => {
            for &c in &blocks[j] {
                blocked[c] += 1;
            }
            dig.clone_from(&pd[j].0);
            (pd[j].1, acts[j])
        }
        None => (0, C64::new(1.0, 0.0)),
    };
    walk(&w, 0, &mut blocked, &mut dig, phase, prod, &mut hist, &mut count)?;
    Ok(hist)
}

/// Options for the polymer-gas sector sums.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GasOptions {
    pub rule: HardCore,
    /// Keep only families containing this catalog entry (marked sum).
    pub marked: Option<(Species, usize)>,
    /// Multiply the activity of one catalog entry by a factor.
    pub scale: Option<(Species, usize, f64)>,
}

/// All sector amplitudes of the two-species polymer gas built from the given
/// catalogs: `ω^{−Lk(q_m,q_e)} Σ Π ρ Π (1+ζ)` with same-species exclusion
/// `rule` and cross-species factors `1+ζ(M,E) = ω^{−Lk(M,E)}`.
pub fn sector_amplitudes_gas(
    ctx: &DefectContext,
    magnetic: &[Polymer],
    electric: &[Polymer],
    amp: &DefectAmplitudes,
    bg: &BackgroundCharge,
    rule: HardCore,
) -> Result<Vec<C64>> {
    let opts = GasOptions {
        rule,
        ..Default::default()
    };
    sector_amplitudes_gas_with(ctx, magnetic, electric, amp, bg, &opts)
}

pub fn sector_amplitudes_gas_with(
    ctx: &DefectContext,
    magnetic: &[Polymer],
    electric: &[Polymer],
    amp: &DefectAmplitudes,
    bg: &BackgroundCharge,
    opts: &GasOptions,
) -> Result<Vec<C64>> {
    ctx.check_amplitudes(amp)?;
    bg.validate(&ctx.bar, ctx.p)?;
    if magnetic.iter().any(|p| p.species != Species::Magnetic)
        || electric.iter().any(|p| p.species != Species::Electric)
    {
        return Err(Error::InvalidParameter("catalog species mismatch".into()));
    }
    let catalog_len = |s: Species| match s {
        Species::Magnetic => magnetic.len(),
        Species::Electric => electric.len(),
    };
    if let Some((s, j)) = opts.marked {
        if j >= catalog_len(s) {
            return Err(Error::UnknownPolymer);
        }
    }
    if let Some((s, j, _)) = opts.scale {
        if j >= catalog_len(s) {
            return Err(Error::UnknownPolymer);
        }
    }
    let n = ctx.modulus;
    let s = sector_setup(ctx, bg)?;
    let (hm_data, he_data) = (ctx.magnetic(), ctx.electric());
    let (bm, be) = (hm_data.betti(), he_data.betti());
    let dm = side_digits(&s.a_rows, hm_data.boundary_dim(), bm, s.r);
    let de = side_digits(&s.b_cols, he_data.boundary_dim(), be, s.r);
    let hist_size = (n as u128).pow((bm.max(be) + s.r) as u32);
    if hist_size > DEFAULT_HISTOGRAM_CAP {
        return Err(Error::CapExceeded {
            what: "sector histogram",
            requested: hist_size,
            cap: DEFAULT_HISTOGRAM_CAP,
            hint: "reduce the lattice or the modulus",
        });
    }
    let side = |species: Species, polymers: &[Polymer], lin: &[u32], digits: &[Vec<u32>], width: usize| {
        let mut acts: Vec<C64> = polymers.iter().map(|p| bare_activity(&ctx.graph, p, amp)).collect();
        if let Some((sp, j, f)) = opts.scale {
            if sp == species {
                acts[j] *= f;
            }
        }
        let forced = opts.marked.filter(|&(sp, _)| sp == species).map(|(_, j)| j);
        if polymers.is_empty() {
            let mut h = vec![C64::new(0.0, 0.0); (n as usize).pow(width as u32)];
            h[0] = C64::new(1.0, 0.0);
            return Ok(h);
        }
        gas_histogram(ctx, polymers, &acts, opts.rule, lin, digits, width, forced, DEFAULT_GAS_CAP)
    };
    let hm = side(Species::Magnetic, magnetic, &s.lin_m, &dm, bm + s.r)?;
    let he = side(Species::Electric, electric, &s.lin_e, &de, be + s.r)?;
    Ok(finish_sectors(n, s.base_phase, combine(n, hm, bm, he, be, s.r)))
}

pub fn sector_amplitude_gas(
    ctx: &DefectContext,
    magnetic: &[Polymer],
    electric: &[Polymer],
    amp: &DefectAmplitudes,
    bg: &BackgroundCharge,
    rule: HardCore,
    sector: &SectorLabel,
) -> Result<C64> {
    sector.check(ctx)?;
    Ok(sector_amplitudes_gas(ctx, magnetic, electric, amp, bg, rule)?[sector.index(ctx.modulus)])
}

#[derive(Serialize)]
struct CatalogLine<'a> {
    species: Species,
    support: Vec<usize>,
    coefficients: Vec<u32>,
    size: usize,
    class: &'a [u32],
    abs_activity: f64,
}

/// Writes one JSON object per polymer.
pub fn write_catalog<W: Write>(
    ctx: &DefectContext,
    polymers: &[Polymer],
    amp: &DefectAmplitudes,
    mut out: W,
) -> std::io::Result<()> {
    for p in polymers {
        let coefficients = p
            .carrier
            .iter()
            .map(|&c| p.chain.coeffs[ctx.coordinate_of_carrier(p.species, c)])
            .collect();
        let line = CatalogLine {
            species: p.species,
            support: p.carrier.clone(),
            coefficients,
            size: p.size,
            class: &p.class,
            abs_activity: bare_activity(&ctx.graph, p, amp).norm(),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
