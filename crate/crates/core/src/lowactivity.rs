//! Low-activity control of the defect gas: activity and counting constants,
//! the region test, positive majorant gases, marked occupation sums, tail and
//! systole bounds, and the Fernández–Procacci neighbourhood inequalities.
//!
//! Majorant and FP families use support-disjointness as compatibility.

use std::f64::consts::LN_2;
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::DualCorrespondence;
use crate::defects::{
    bare_activity, defect_amplitudes, enumerate_polymers_unclassified, reconstruct_from_sectors,
    sector_amplitudes_gas_with, Adjacency, CarrierGraph, DefectAmplitudes, DefectContext, GasOptions, HardCore,
    Polymer, Species, DEFAULT_GAS_CAP,
};
use crate::error::{Error, Result};
use crate::spacetime::{normalized_amplitude, BackgroundCharge, LocalWeights};
use crate::C64;

/// Default FP parameter, optimal for the region test.
pub const DEFAULT_A: f64 = LN_2;

/// Best possible region threshold, `sup_a e^{−a}(1−e^{−a})`.
pub const OPTIMAL_THRESHOLD: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountingMode {
    Crude,
    Sharp,
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingConstant {
    pub mode: CountingMode,
    pub value: f64,
    pub delta: usize,
    /// Largest polymer size covered (empirical mode only).
    pub max_n: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityBounds {
    pub t_m: f64,
    pub t_e: f64,
    pub c_m: f64,
    pub c_e: f64,
    pub delta_m: usize,
    pub delta_e: usize,
    pub a_m: f64,
    pub a_e: f64,
}

impl ActivityBounds {
    pub fn new(amp: &DefectAmplitudes, cm: &CountingConstant, ce: &CountingConstant, a_m: f64, a_e: f64) -> Result<Self> {
        let (t_m, t_e) = uniform_amplitudes(amp);
        let b = ActivityBounds {
            t_m,
            t_e,
            c_m: cm.value,
            c_e: ce.value,
            delta_m: cm.delta,
            delta_e: ce.delta,
            a_m,
            a_e,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.t_m >= 0.0
            && self.t_e >= 0.0
            && self.c_m >= 1.0
            && self.c_e >= 1.0
            && self.a_m > 0.0
            && self.a_e > 0.0
            && [self.t_m, self.t_e, self.c_m, self.c_e, self.a_m, self.a_e]
                .iter()
                .all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("activity bounds out of range: {self:?}")))
        }
    }

    pub fn t(&self, s: Species) -> f64 {
        match s {
            Species::Magnetic => self.t_m,
            Species::Electric => self.t_e,
        }
    }

    pub fn c(&self, s: Species) -> f64 {
        match s {
            Species::Magnetic => self.c_m,
            Species::Electric => self.c_e,
        }
    }

    pub fn a(&self, s: Species) -> f64 {
        match s {
            Species::Magnetic => self.a_m,
            Species::Electric => self.a_e,
        }
    }

    /// `C_s t_s e^{a_s}`.
    pub fn growth(&self, s: Species) -> f64 {
        self.c(s) * self.t(s) * self.a(s).exp()
    }

    pub fn region(&self, s: Species) -> Result<RegionReport> {
        region_check(self.t(s), self.c(s), self.a(s))
    }
}

/// `(t_m, t_e)`: largest modulus of a nontrivial local amplitude.
pub fn uniform_amplitudes(amp: &DefectAmplitudes) -> (f64, f64) {
    let t = |tables: &[Vec<C64>]| {
        tables
            .iter()
            .flat_map(|a| a.iter().skip(1))
            .map(|z| z.norm())
            .fold(0.0f64, f64::max)
    };
    (t(&amp.magnetic), t(&amp.electric))
}

/// Largest `|ρ(A)| − t^{|A|}` over a catalog, clamped at zero.
pub fn activity_bound_violation(g: &CarrierGraph, catalog: &[Polymer], amp: &DefectAmplitudes, t: f64) -> f64 {
    catalog
        .iter()
        .map(|p| bare_activity(g, p, amp).norm() - t.powi(p.size as i32))
        .fold(0.0f64, f64::max)
}

/// `(N−1) max{1, Δ²}`.
pub fn crude_constant(modulus: u32, delta: usize) -> f64 {
    (modulus - 1) as f64 * ((delta * delta).max(1)) as f64
}

/// `(N−1) e (Δ−1)`, defined for `Δ ≥ 2`.
pub fn sharp_constant(modulus: u32, delta: usize) -> Option<f64> {
    (delta >= 2).then(|| (modulus - 1) as f64 * std::f64::consts::E * (delta - 1) as f64)
}

/// Rooted polymer counts `𝒩_s(u;n)` for `n = 1..=max_n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub species: Species,
    pub max_n: usize,
    /// `counts[u][n−1]`.
    pub counts: Vec<Vec<u64>>,
}

#[derive(Serialize)]
struct CensusRow {
    species: Species,
    cell: usize,
    n: usize,
    count: u64,
}

impl Census {
    pub fn new(g: &CarrierGraph, catalog: &[Polymer], species: Species, max_n: usize) -> Result<Self> {
        let mut counts = vec![vec![0u64; max_n]; g.carrier_count(species)];
        for p in catalog {
            if p.species != species {
                return Err(Error::InvalidParameter("catalog species mismatch".into()));
            }
            if p.size == 0 || p.size > max_n {
                continue;
            }
            for &u in &p.carrier {
                counts[u][p.size - 1] += 1;
            }
        }
        Ok(Census { species, max_n, counts })
    }

    /// `max_u 𝒩_s(u;n)`.
    pub fn max_count(&self, n: usize) -> u64 {
        self.counts.iter().map(|c| c[n - 1]).max().unwrap_or(0)
    }

    /// Smallest `C ≥ 1` with `𝒩_s(u;n) ≤ C^n` over the covered range.
    pub fn empirical_constant(&self) -> f64 {
        (1..=self.max_n)
            .map(|n| (self.max_count(n) as f64).powf(1.0 / n as f64))
            .fold(1.0, f64::max)
    }

    /// Number of `(u, n)` with `𝒩_s(u;n) > C^n`.
    pub fn violations(&self, c: f64) -> usize {
        self.counts
            .iter()
            .flat_map(|row| row.iter().enumerate())
            .filter(|&(k, &cnt)| cnt as f64 > c.powi(k as i32 + 1) * (1.0 + 1e-12))
            .count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (cell, row) in self.counts.iter().enumerate() {
            for (k, &count) in row.iter().enumerate() {
                w.serialize(CensusRow {
                    species: self.species,
                    cell,
                    n: k + 1,
                    count,
                })
                .map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
            }
        }
        w.flush().map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
        Ok(())
    }
}

/// Counting constant of one species. Sharp mode needs `Δ ≥ 2` and falls
/// back to the crude value otherwise. Empirical mode needs a census.
pub fn counting_constant(
    g: &CarrierGraph,
    species: Species,
    mode: CountingMode,
    census: Option<&Census>,
) -> Result<CountingConstant> {
    let delta = g.max_degree(species);
    let n = g.modulus;
    let (value, max_n) = match mode {
        CountingMode::Crude => (crude_constant(n, delta), None),
        CountingMode::Sharp => (sharp_constant(n, delta).unwrap_or_else(|| crude_constant(n, delta)), None),
        CountingMode::Empirical => {
            let c = census.ok_or_else(|| Error::InvalidParameter("empirical counting needs a census".into()))?;
            if c.species != species {
                return Err(Error::InvalidParameter("census species mismatch".into()));
            }
            (c.empirical_constant(), Some(c.max_n))
        }
    };
    Ok(CountingConstant {
        mode,
        value,
        delta,
        max_n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionReport {
    pub t: f64,
    pub c: f64,
    pub a: f64,
    /// `e^{−a}(1−e^{−a})`.
    pub threshold: f64,
    pub holds: bool,
    /// `threshold − C t`.
    pub margin: f64,
    pub holds_optimal: bool,
    /// `1/4 − C t`.
    pub optimal_margin: f64,
}

/// `C t ≤ e^{−a}(1−e^{−a})`, plus the `a = log 2` threshold `C t ≤ 1/4`.
pub fn region_check(t: f64, c: f64, a: f64) -> Result<RegionReport> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::InvalidParameter(format!("FP parameter a = {a} must be positive")));
    }
    let ct = c * t;
    let e = (-a).exp();
    let threshold = e * (1.0 - e);
    Ok(RegionReport {
        t,
        c,
        a,
        threshold,
        holds: ct <= threshold,
        margin: threshold - ct,
        holds_optimal: ct <= OPTIMAL_THRESHOLD,
        optimal_margin: OPTIMAL_THRESHOLD - ct,
    })
}

/// Region test over a grid of `a`.
pub fn region_scan(t: f64, c: f64, grid: &[f64]) -> Result<Vec<RegionReport>> {
    grid.iter().map(|&a| region_check(t, c, a)).collect()
}

pub fn write_region_csv<W: Write>(reports: &[RegionReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(r).map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::InvalidParameter(format!("csv: {e}")))?;
    Ok(())
}

fn check_catalog(catalog: &[Polymer]) -> Result<Option<Species>> {
    let s = catalog.first().map(|p| p.species);
    if catalog.iter().any(|p| Some(p.species) != s) {
        return Err(Error::InvalidParameter("catalog mixes species".into()));
    }
    Ok(s)
}

/// Blocked carrier cells of each polymer under a hard-core rule.
fn blocks(g: &CarrierGraph, catalog: &[Polymer], rule: HardCore) -> Vec<Vec<usize>> {
    catalog
        .iter()
        .map(|p| {
            let mut b = p.carrier.clone();
            if rule == HardCore::Touching {
                for &c in &p.carrier {
                    b.extend(g.neighbors(p.species, c).iter().map(|&u| u as usize));
                }
            }
            b.sort_unstable();
            b.dedup();
            b
        })
        .collect()
}

/// `Σ_F Π_{A∈F} w(A)` over compatible families, optionally only those
/// containing `forced`. Parallel over the first free polymer.
pub fn family_sum(
    g: &CarrierGraph,
    catalog: &[Polymer],
    weights: &[f64],
    rule: HardCore,
    forced: Option<usize>,
) -> Result<f64> {
    let species = match check_catalog(catalog)? {
        Some(s) => s,
        None => return Ok(if forced.is_some() { 0.0 } else { 1.0 }),
    };
    if weights.len() != catalog.len() {
        return Err(Error::LengthMismatch {
            what: "family weights",
            expected: catalog.len(),
            got: weights.len(),
        });
    }
    if forced.is_some_and(|j| j >= catalog.len()) {
        return Err(Error::UnknownPolymer);
    }
    let blk = blocks(g, catalog, rule);
    let count = AtomicU64::new(0);
    struct Ctx<'a> {
        catalog: &'a [Polymer],
        blk: &'a [Vec<usize>],
        weights: &'a [f64],
        count: &'a AtomicU64,
    }
    fn walk(c: &Ctx, start: usize, blocked: &mut [u32]) -> Result<f64> {
        if c.count.fetch_add(1, Ordering::Relaxed) >= DEFAULT_GAS_CAP {
            return Err(Error::CapExceeded {
                what: "polymer families",
                requested: DEFAULT_GAS_CAP as u128 + 1,
                cap: DEFAULT_GAS_CAP as u128,
                hint: "lower max_size",
            });
        }
        let mut total = 1.0;
        for j in start..c.catalog.len() {
            if c.catalog[j].carrier.iter().any(|&u| blocked[u] > 0) {
                continue;
            }
            for &u in &c.blk[j] {
                blocked[u] += 1;
            }
            let sub = walk(c, j + 1, blocked);
            for &u in &c.blk[j] {
                blocked[u] -= 1;
            }
            total += c.weights[j] * sub?;
        }
        Ok(total)
    }
    let ctx = Ctx {
        catalog,
        blk: &blk,
        weights,
        count: &count,
    };
    let mut base = vec![0u32; g.carrier_count(species)];
    let mut prefactor = 1.0;
    if let Some(j) = forced {
        for &u in &blk[j] {
            base[u] += 1;
        }
        prefactor = weights[j];
    }
    let branches: Vec<Result<f64>> = (0..catalog.len())
        .into_par_iter()
        .map(|j| {
            if catalog[j].carrier.iter().any(|&u| base[u] > 0) {
                return Ok(0.0);
            }
            let mut blocked = base.clone();
            for &u in &blk[j] {
                blocked[u] += 1;
            }
            Ok(weights[j] * walk(&ctx, j + 1, &mut blocked)?)
        })
        .collect();
    let mut total = 1.0;
    for b in branches {
        total += b?;
    }
    Ok(prefactor * total)
}

fn abs_activities(g: &CarrierGraph, catalog: &[Polymer], amp: &DefectAmplitudes) -> Vec<f64> {
    catalog.iter().map(|p| bare_activity(g, p, amp).norm()).collect()
}

/// `Z^maj = Σ` over support-disjoint families of `Π|ρ|`.
pub fn majorant_partition(g: &CarrierGraph, catalog: &[Polymer], amp: &DefectAmplitudes) -> Result<f64> {
    g.check_amplitudes(amp)?;
    family_sum(g, catalog, &abs_activities(g, catalog, amp), HardCore::Overlap, None)
}

/// `|ρ(A)| Π^maj(A)`: weight of the majorant families containing `A`
/// divided by `Z^maj`.
pub fn pinned_majorant(g: &CarrierGraph, catalog: &[Polymer], amp: &DefectAmplitudes, index: usize) -> Result<f64> {
    g.check_amplitudes(amp)?;
    let w = abs_activities(g, catalog, amp);
    let z = family_sum(g, catalog, &w, HardCore::Overlap, None)?;
    Ok(family_sum(g, catalog, &w, HardCore::Overlap, Some(index))? / z)
}

/// Which occupation expectation to evaluate.
#[derive(Clone, Debug, PartialEq)]
pub enum OccupationMode {
    /// Sector label index (see `SectorLabel::index`).
    Sector(usize),
    Background,
}

fn catalog_entry<'a>(
    magnetic: &'a [Polymer],
    electric: &'a [Polymer],
    species: Species,
    index: usize,
) -> Result<&'a Polymer> {
    match species {
        Species::Magnetic => magnetic.get(index),
        Species::Electric => electric.get(index),
    }
    .ok_or(Error::UnknownPolymer)
}

/// `⟨1_A⟩` in every sector: the marked gas sum over families containing `A`.
pub fn occupation_sectors(
    ctx: &DefectContext,
    magnetic: &[Polymer],
    electric: &[Polymer],
    amp: &DefectAmplitudes,
    bg: &BackgroundCharge,
    rule: HardCore,
    species: Species,
    index: usize,
) -> Result<Vec<C64>> {
    catalog_entry(magnetic, electric, species, index)?;
    let opts = GasOptions {
        rule,
        marked: Some((species, index)),
        scale: None,
    };
    sector_amplitudes_gas_with(ctx, magnetic, electric, amp, bg, &opts)
}

#[allow(clippy::too_many_arguments)]
pub fn occupation_expectation(
    ctx: &DefectContext,
    magnetic: &[Polymer],
    electric: &[Polymer],
    amp: &DefectAmplitudes,
    bg: &BackgroundCharge,
    rule: HardCore,
    species: Species,
    index: usize,
    mode: &OccupationMode,
) -> Result<C64> {
    let sectors = occupation_sectors(ctx, magnetic, electric, amp, bg, rule, species, index)?;
    match mode {
        OccupationMode::Sector(i) => sectors.get(*i).copied().ok_or(Error::MissingSector(*i)),
        OccupationMode::Background => reconstruct_from_sectors(ctx, &sectors, bg),
    }
}

/// Central difference `(Ẑ(ρ(1+h)) − Ẑ(ρ(1−h)))/2h` in every sector. The gas
/// is affine in each activity, so this equals `ρ ∂Ẑ/∂ρ` up to rounding.
#[allow(clippy::too_many_arguments)]
pub fn occupation_finite_difference(
    ctx: &DefectContext,
    magnetic: &[Polymer],
    electric: &[Polymer],
    amp: &DefectAmplitudes,
    bg: &BackgroundCharge,
    rule: HardCore,
    species: Species,
    index: usize,
    h: f64,
) -> Result<Vec<C64>> {
    catalog_entry(magnetic, electric, species, index)?;
    let eval = |f: f64| {
        let opts = GasOptions {
            rule,
            marked: None,
            scale: Some((species, index, f)),
        };
        sector_amplitudes_gas_with(ctx, magnetic, electric, amp, bg, &opts)
    };
    let plus = eval(1.0 + h)?;
    let minus = eval(1.0 - h)?;
    Ok(plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect())
}

/// `|⟨1_A⟩|` for every catalog entry of one species; `[entry][sector]`,
/// with one extra trailing column for the fixed-background value.
#[allow(clippy::too_many_arguments)]
pub fn occupation_table(
    ctx: &DefectContext,
    magnetic: &[Polymer],
    electric: &[Polymer],
    amp: &DefectAmplitudes,
    bg: &BackgroundCharge,
    rule: HardCore,
    species: Species,
) -> Result<Vec<Vec<f64>>> {
    let len = match species {
        Species::Magnetic => magnetic.len(),
        Species::Electric => electric.len(),
    };
    (0..len)
        .into_par_iter()
        .map(|j| {
            let s = occupation_sectors(ctx, magnetic, electric, amp, bg, rule, species, j)?;
            let fixed = reconstruct_from_sectors(ctx, &s, bg)?;
            let mut row: Vec<f64> = s.iter().map(|z| z.norm()).collect();
            row.push(fixed.norm());
            Ok(row)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystoleReport {
    /// Smallest nontrivial polymer in the catalog.
    pub systole: Option<usize>,
    pub max_size: usize,
    /// The catalog is complete to `max_size`, so a found value is exact.
    pub certified: bool,
}

/// `min |A|` over class-nontrivial catalog entries.
pub fn systole(catalog: &[Polymer], max_size: usize) -> SystoleReport {
    let s = catalog
        .iter()
        .filter(|p| p.size <= max_size && p.class.iter().any(|&c| c != 0))
        .map(|p| p.size)
        .min();
    SystoleReport {
        systole: s,
        max_size,
        certified: s.is_some(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailLine {
    pub l: usize,
    /// `max_u Σ_{A∋u, |A|≥L} |⟨1_A⟩|`.
    pub lhs: f64,
    /// `C^la (C t e^a)^L / (1 − C t e^a)`.
    pub rhs: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub species: Species,
    pub c_la: f64,
    pub growth: f64,
    pub systole: SystoleReport,
    pub tails: Vec<TailLine>,
    /// `Σ_{[A]≠0} |⟨1_A⟩|`.
    pub bad_lhs: f64,
    /// `C^la |𝔠_s| (C t e^a)^{sys} / (1 − C t e^a)`.
    pub bad_rhs: f64,
    pub bad_holds: bool,
}

/// Tail and homological bad-weight bounds against the given occupation
/// moduli (one per catalog entry). `c_la` is `Z_m^maj Z_e^maj`.
#[allow(clippy::too_many_arguments)]
pub fn tail_and_systole(
    g: &CarrierGraph,
    catalog: &[Polymer],
    occupation: &[f64],
    bounds: &ActivityBounds,
    species: Species,
    l_values: &[usize],
    c_la: f64,
    max_size: usize,
) -> Result<TailReport> {
    bounds.validate()?;
    if check_catalog(catalog)?.is_some_and(|s| s != species) {
        return Err(Error::InvalidParameter("catalog species mismatch".into()));
    }
    if occupation.len() != catalog.len() {
        return Err(Error::LengthMismatch {
            what: "occupation moduli",
            expected: catalog.len(),
            got: occupation.len(),
        });
    }
    let growth = bounds.growth(species);
    if growth >= 1.0 {
        return Err(Error::Divergent(growth));
    }
    let tol = |x: f64| x * (1.0 + 1e-12) + 1e-300;
    let ncar = g.carrier_count(species);
    let tails = l_values
        .iter()
        .map(|&l| {
            if l == 0 {
                return Err(Error::InvalidParameter("tail length must be at least 1".into()));
            }
            let mut per_cell = vec![0.0f64; ncar];
            for (p, &o) in catalog.iter().zip(occupation) {
                if p.size >= l {
                    for &u in &p.carrier {
                        per_cell[u] += o;
                    }
                }
            }
            let lhs = per_cell.iter().copied().fold(0.0, f64::max);
            let rhs = c_la * growth.powi(l as i32) / (1.0 - growth);
            Ok(TailLine {
                l,
                lhs,
                rhs,
                holds: lhs <= tol(rhs),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sys = systole(catalog, max_size);
    let bad_lhs: f64 = catalog
        .iter()
        .zip(occupation)
        .filter(|(p, _)| p.class.iter().any(|&c| c != 0))
        .map(|(_, &o)| o)
        .sum();
    let bad_rhs = match sys.systole {
        Some(s) => c_la * ncar as f64 * growth.powi(s as i32) / (1.0 - growth),
        None => 0.0,
    };
    Ok(TailReport {
        species,
        c_la,
        growth,
        systole: sys,
        tails,
        bad_lhs,
        bad_rhs,
        bad_holds: bad_lhs <= tol(bad_rhs),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpLine {
    pub index: usize,
    pub size: usize,
    /// `N*_A(μ)`.
    pub n_star: f64,
    /// `Π_{u∈car A} (1 + Σ_{B∋u} μ(B))`.
    pub site_product: f64,
    /// `(1+S(a))^{|A|}`.
    pub power_bound: f64,
    /// `e^{a|A|}`.
    pub exp_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FpReport {
    pub a: f64,
    /// `S(a) = sup_u Σ_{A∋u} μ(A)`.
    pub s: f64,
    /// `S(a) ≤ e^a − 1`.
    pub sitewise: bool,
    pub lines: Vec<FpLine>,
    /// Entries where the chain `N* ≤ site product ≤ power bound` fails, or
    /// `power bound ≤ e^{a|A|}` fails while the sitewise criterion holds.
    pub violations: usize,
}

/// FP neighbourhood inequalities with `μ(A) = |ρ(A)| e^{a|A|}` and
/// support-disjointness as compatibility.
pub fn fp_neighborhood_check(
    g: &CarrierGraph,
    catalog: &[Polymer],
    amp: &DefectAmplitudes,
    a: f64,
) -> Result<FpReport> {
    g.check_amplitudes(amp)?;
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("FP parameter a = {a} must be positive")));
    }
    let species = match check_catalog(catalog)? {
        Some(s) => s,
        None => {
            return Ok(FpReport {
                a,
                s: 0.0,
                sitewise: true,
                lines: Vec::new(),
                violations: 0,
            })
        }
    };
    let mu: Vec<f64> = catalog
        .iter()
        .map(|p| bare_activity(g, p, amp).norm() * (a * p.size as f64).exp())
        .collect();
    let mut site = vec![0.0f64; g.carrier_count(species)];
    for (p, &m) in catalog.iter().zip(&mu) {
        for &u in &p.carrier {
            site[u] += m;
        }
    }
    let s = site.iter().copied().fold(0.0, f64::max);
    let sitewise = s <= a.exp() - 1.0;
    let lines = (0..catalog.len())
        .into_par_iter()
        .map(|i| {
            let car = &catalog[i].carrier;
            let (nb, w): (Vec<Polymer>, Vec<f64>) = catalog
                .iter()
                .zip(&mu)
                .filter(|(b, _)| b.carrier.iter().any(|u| car.binary_search(u).is_ok()))
                .map(|(b, &m)| (b.clone(), m))
                .unzip();
            let n_star = family_sum(g, &nb, &w, HardCore::Overlap, None)?;
            let size = catalog[i].size;
            Ok(FpLine {
                index: i,
                size,
                n_star,
                site_product: car.iter().map(|&u| 1.0 + site[u]).product(),
                power_bound: (1.0 + s).powi(size as i32),
                exp_bound: (a * size as f64).exp(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let tol = |x: f64| x * (1.0 + 1e-12);
    let violations = lines
        .iter()
        .filter(|l| {
            l.n_star > tol(l.site_product)
                || l.site_product > tol(l.power_bound)
                || (sitewise && l.power_bound > tol(l.exp_bound))
        })
        .count();
    Ok(FpReport {
        a,
        s,
        sitewise,
        lines,
        violations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MajorizationReport {
    pub z_maj_m: f64,
    pub z_maj_e: f64,
    /// `|𝒵(q_m,q_e)|` per background.
    pub amplitudes: Vec<f64>,
    pub violations: usize,
}

/// `|𝒵(q_m,q_e)| ≤ Z_m^maj Z_e^maj` computed directly from the spacetime
/// partition function, without sectors. Works for composite moduli;
/// catalogs are enumerated to the full carrier count.
pub fn direct_majorization(
    bar: &DualCorrespondence,
    w: &LocalWeights,
    backgrounds: &[BackgroundCharge],
    adjacency: Adjacency,
) -> Result<MajorizationReport> {
    let g = CarrierGraph::new(bar, w.form_degree, w.modulus, adjacency)?;
    let amp = defect_amplitudes(w)?;
    let zs = [Species::Magnetic, Species::Electric]
        .iter()
        .map(|&s| {
            let cat = enumerate_polymers_unclassified(&g, s, g.carrier_count(s))?;
            majorant_partition(&g, &cat, &amp)
        })
        .collect::<Result<Vec<f64>>>()?;
    let bound = zs[0] * zs[1];
    let amplitudes = backgrounds
        .iter()
        .map(|bg| Ok(normalized_amplitude(bar, w, bg)?.norm()))
        .collect::<Result<Vec<f64>>>()?;
    let violations = amplitudes.iter().filter(|&&z| z > bound * (1.0 + 1e-12)).count();
    Ok(MajorizationReport {
        z_maj_m: zs[0],
        z_maj_e: zs[1],
        amplitudes,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{dualize, CellComplex};
    use crate::defects::{enumerate_polymers, sector_amplitudes_exact};
    use crate::falgebra::Convention;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn bar(l: usize, m: usize) -> DualCorrespondence {
        let spatial = Arc::new(CellComplex::build_torus(2, l).unwrap());
        dualize(&Arc::new(CellComplex::suspend(&spatial, m).unwrap())).unwrap()
    }

    /// Amplitudes with nontrivial moduli at most `t` and random phases.
    fn small_amplitudes(ctx: &DefectContext, t: f64, seed: u64) -> DefectAmplitudes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = ctx.modulus as usize;
        let mut table = |count: usize| -> Vec<Vec<C64>> {
            (0..count)
                .map(|_| {
                    (0..n)
                        .map(|k| {
                            if k == 0 {
                                C64::new(1.0, 0.0)
                            } else {
                                C64::from_polar(t * rng.gen_range(0.2..1.0), rng.gen_range(0.0..std::f64::consts::TAU))
                            }
                        })
                        .collect()
                })
                .collect()
        };
        let magnetic = table(ctx.carrier_count(Species::Magnetic));
        let electric = table(ctx.carrier_count(Species::Electric));
        DefectAmplitudes {
            modulus: ctx.modulus,
            form_degree: ctx.p,
            magnetic,
            electric,
        }
    }

    #[test]
    fn region_examples() {
        let r = region_check(0.25, 1.0, LN_2).unwrap();
        assert!(r.holds && r.holds_optimal);
        assert!(r.margin.abs() < 1e-15);
        for a in [0.1, LN_2, 1.0, 3.0] {
            let r = region_check(0.3, 1.0, a).unwrap();
            assert!(!r.holds && !r.holds_optimal);
        }
        let r = region_check(0.1, 1.0, 1.0).unwrap();
        assert!(r.holds);
        assert!((r.threshold - 0.232_544_157_934_830_6).abs() < 1e-12);
        assert!(region_check(0.1, 1.0, 0.0).is_err());
    }

    #[test]
    fn counting_formulas() {
        assert!((sharp_constant(2, 2).unwrap() - std::f64::consts::E).abs() < 1e-15);
        assert!((sharp_constant(3, 2).unwrap() - 2.0 * std::f64::consts::E).abs() < 1e-15);
        assert_eq!(crude_constant(2, 4), 16.0);
        assert_eq!(crude_constant(3, 0), 2.0);
        assert_eq!(sharp_constant(2, 1), None);
    }

    #[test]
    fn majorant_small_cases() {
        let b = bar(2, 1);
        let ctx = DefectContext::new(&b, 1, 2, Convention::Standard).unwrap();
        let g = &ctx.graph;
        let amp = small_amplitudes(&ctx, 0.01, 1);
        assert_eq!(majorant_partition(g, &[], &amp).unwrap(), 1.0);
        let cat = enumerate_polymers(&ctx, Species::Electric, 1).unwrap();
        let one = &cat[..1];
        let t = bare_activity(g, &one[0], &amp).norm();
        let z = majorant_partition(g, one, &amp).unwrap();
        assert!((z - (1.0 + t)).abs() < 1e-15);
        let pin = pinned_majorant(g, one, &amp, 0).unwrap();
        assert!((pin - t / (1.0 + t)).abs() < 1e-15);
        // pairwise-disjoint singles: product formula
        let w: Vec<f64> = cat.iter().map(|p| bare_activity(g, p, &amp).norm()).collect();
        let z = majorant_partition(g, &cat, &amp).unwrap();
        let prod: f64 = w.iter().map(|x| 1.0 + x).product();
        assert!((z - prod).abs() < 1e-13 * prod);
    }

    #[test]
    fn fp_trivial_neighbourhoods() {
        let b = bar(2, 1);
        let ctx = DefectContext::new(&b, 1, 2, Convention::Standard).unwrap();
        let amp = small_amplitudes(&ctx, 0.01, 2);
        let cat = enumerate_polymers(&ctx, Species::Electric, 1).unwrap();
        // size-1 polymers are disjoint: the only incompatible polymer is A itself
        let rep = fp_neighborhood_check(&ctx.graph, &cat, &amp, LN_2).unwrap();
        for (l, p) in rep.lines.iter().zip(&cat) {
            let mu = bare_activity(&ctx.graph, p, &amp).norm() * LN_2.exp();
            assert!((l.n_star - (1.0 + mu)).abs() < 1e-14);
        }
        assert_eq!(rep.violations, 0);
    }

    #[test]
    fn occupation_marked_sum_matches_finite_difference() {
        let b = bar(2, 1);
        let ctx = DefectContext::new(&b, 1, 3, Convention::Standard).unwrap();
        let amp = small_amplitudes(&ctx, 0.3, 3);
        let mag = enumerate_polymers(&ctx, Species::Magnetic, 3).unwrap();
        let ele = enumerate_polymers(&ctx, Species::Electric, 3).unwrap();
        let bg = BackgroundCharge::zero(&b, 1, 3);
        for (species, len) in [(Species::Magnetic, mag.len()), (Species::Electric, ele.len())] {
            for j in (0..len).step_by(len / 5 + 1) {
                let marked =
                    occupation_sectors(&ctx, &mag, &ele, &amp, &bg, HardCore::Touching, species, j).unwrap();
                let fd = occupation_finite_difference(
                    &ctx,
                    &mag,
                    &ele,
                    &amp,
                    &bg,
                    HardCore::Touching,
                    species,
                    j,
                    1e-3,
                )
                .unwrap();
                for (x, y) in marked.iter().zip(&fd) {
                    assert!((x - y).norm() <= 1e-6 * x.norm().max(1e-300) + 1e-15);
                }
            }
        }
    }

    #[test]
    fn majorization_and_occupancy_on_tiny_instance() {
        let b = bar(2, 1);
        let ctx = DefectContext::with_adjacency(&b, 1, 2, Convention::Standard, Adjacency::Both).unwrap();
        let g = &ctx.graph;
        let full = g.carrier_count(Species::Magnetic).max(g.carrier_count(Species::Electric));
        let mag = enumerate_polymers(&ctx, Species::Magnetic, full).unwrap();
        let ele = enumerate_polymers(&ctx, Species::Electric, full).unwrap();
        let amp = small_amplitudes(&ctx, 0.005, 4);
        let zm = majorant_partition(g, &mag, &amp).unwrap();
        let ze = majorant_partition(g, &ele, &amp).unwrap();
        let c_la = zm * ze;
        let bg = BackgroundCharge::zero(&b, 1, 2);
        for z in sector_amplitudes_exact(&ctx, &amp, &bg).unwrap() {
            assert!(z.norm() <= c_la);
        }
        let cm = counting_constant(g, Species::Magnetic, CountingMode::Sharp, None).unwrap();
        let ce = counting_constant(g, Species::Electric, CountingMode::Sharp, None).unwrap();
        let bounds = ActivityBounds::new(&amp, &cm, &ce, LN_2, LN_2).unwrap();
        assert!(bounds.region(Species::Magnetic).unwrap().holds);
        assert!(bounds.region(Species::Electric).unwrap().holds);
        for (species, cat) in [(Species::Magnetic, &mag), (Species::Electric, &ele)] {
            assert_eq!(activity_bound_violation(g, cat, &amp, bounds.t(species)), 0.0);
            let table = occupation_table(&ctx, &mag, &ele, &amp, &bg, HardCore::Touching, species).unwrap();
            let te = bounds.t(species) * LN_2.exp();
            for (p, row) in cat.iter().zip(&table) {
                for &o in row {
                    assert!(o <= c_la * te.powi(p.size as i32));
                }
            }
            let occ: Vec<f64> = table.iter().map(|r| *r.last().unwrap()).collect();
            let rep = tail_and_systole(g, cat, &occ, &bounds, species, &[1, 2, 100], c_la, full).unwrap();
            assert!(rep.tails.iter().all(|t| t.holds), "{rep:?}");
            assert_eq!(rep.tails[2].lhs, 0.0);
            assert!(rep.bad_holds);
        }
    }

    #[test]
    fn electric_systole() {
        for (m, expect) in [(1, 1), (3, 3)] {
            let b = bar(3, m);
            let ctx = DefectContext::new(&b, 1, 2, Convention::Standard).unwrap();
            let cat = enumerate_polymers(&ctx, Species::Electric, 3).unwrap();
            let s = systole(&cat, 3);
            assert_eq!(s.systole, Some(expect));
            assert!(s.certified);
        }
    }

    #[test]
    fn census_and_empirical_constant() {
        let b = bar(2, 1);
        let ctx = DefectContext::new(&b, 1, 2, Convention::Standard).unwrap();
        let g = &ctx.graph;
        let cat = enumerate_polymers(&ctx, Species::Electric, 4).unwrap();
        let census = Census::new(g, &cat, Species::Electric, 4).unwrap();
        let c = counting_constant(g, Species::Electric, CountingMode::Empirical, Some(&census)).unwrap();
        assert_eq!(census.violations(c.value), 0);
        assert_eq!(c.max_n, Some(4));
        let sum: u64 = census.counts.iter().flatten().sum();
        assert_eq!(sum as usize, cat.iter().map(|p| p.size).sum::<usize>());
        let mut buf = Vec::new();
        census.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("species,cell,n,count\n"));
    }

    #[test]
    fn composite_direct_majorization() {
        let b = bar(2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut w = LocalWeights::random(&b.primal, 1, 4, &mut rng);
        // push toward the code limit so the bound is informative
        for arr in w.w.iter_mut().chain(w.v.iter_mut()) {
            let z0 = arr[0];
            for z in arr.iter_mut().skip(1) {
                *z *= 0.02;
            }
            arr[0] = z0 + 1.0;
        }
        let g = CarrierGraph::new(&b, 1, 4, Adjacency::Both).unwrap();
        let mag = enumerate_polymers_unclassified(&g, Species::Magnetic, 2).unwrap();
        let ele = enumerate_polymers_unclassified(&g, Species::Electric, 2).unwrap();
        let mut bgs = vec![BackgroundCharge::zero(&b, 1, 4)];
        for (m, e) in mag.iter().take(3).zip(ele.iter().rev().take(3)) {
            bgs.push(BackgroundCharge {
                q_m: m.chain.clone(),
                q_e: e.chain.clone(),
            });
        }
        let rep = direct_majorization(&b, &w, &bgs, Adjacency::Both).unwrap();
        assert_eq!(rep.violations, 0, "{rep:?}");
        assert!(rep.amplitudes[0] > 0.5);
    }
}
