//! Kramers-Wannier duality: dual local weights on the dual complex, the
//! fixed-background partition-function identity, the Trotter coupling map and
//! its quantum trace counterpart.
//!
//! The dual theory is always instantiated on a concrete complex. Weights are
//! transported by `θ`, and orientation differences between the canonical dual
//! suspension and `X̄∨` are carried by explicit relative signs.

use std::sync::Arc;

use serde::Serialize;

use crate::complex::{dualize, relative_orientation, CellComplex, DualCorrespondence};
use crate::error::{Error, Result};
use crate::falgebra::dft;
use crate::quantum_oracle::{decorated_trace, InsertionData, TrotterParams};
use crate::spacetime::{
    cocycle_count, normalization, partition_exact, partition_sliced, trotter_weights, BackgroundCharge,
    LocalWeights,
};
use crate::C64;

/// Degree of the dual field on `X̄∨` for a P-form theory on an n-complex: `n − 1 − P`.
pub fn dual_degree(bar: &DualCorrespondence, p: usize) -> Result<usize> {
    let n = bar.dim();
    if p + 1 > n {
        return Err(Error::DegreeMismatch {
            expected: n - 1,
            got: p,
        });
    }
    Ok(n - 1 - p)
}

fn negate_arg(f: &[C64]) -> Vec<C64> {
    let n = f.len();
    (0..n).map(|m| f[(n - m) % n]).collect()
}

/// Dual weights on `bar.dual`: `W̌_{u∨}(m) = V̂_{θ(u∨)}(−m)` on (P̌+1)-cells and
/// `V̌_{c∨}(x) = Ŵ_{θ(c∨)}(x)` on P̌-cells.
pub fn dual_weights(bar: &DualCorrespondence, w: &LocalWeights) -> Result<LocalWeights> {
    w.validate(&bar.primal)?;
    let p = w.form_degree;
    let q = dual_degree(bar, p)?;
    let dual = &bar.dual;
    let v_hat: Vec<Vec<C64>> = w.v.iter().map(|f| dft(f)).collect();
    let w_hat: Vec<Vec<C64>> = w.w.iter().map(|f| dft(f)).collect();
    let out = LocalWeights {
        modulus: w.modulus,
        form_degree: q,
        w: (0..dual.count(q + 1))
            .map(|u| negate_arg(&v_hat[bar.theta(q + 1, u)]))
            .collect(),
        v: (0..dual.count(q))
            .map(|c| w_hat[bar.theta(q, c)].clone())
            .collect(),
    };
    out.validate(dual)?;
    Ok(out)
}

/// Background on the dual side: the roles of `q_m` and `q_e` are exchanged.
pub fn dual_background(bg: &BackgroundCharge) -> BackgroundCharge {
    BackgroundCharge {
        q_m: bg.q_e.clone(),
        q_e: bg.q_m.clone(),
    }
}

fn partition(bar: &DualCorrespondence, w: &LocalWeights, bg: &BackgroundCharge) -> Result<C64> {
    match partition_exact(bar, w, bg) {
        Err(Error::CapExceeded { .. }) if bar.primal.suspension().is_some() => partition_sliced(bar, w, bg),
        other => other,
    }
}

/// Relative difference `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_residual(a: C64, b: C64) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KwIdentity {
    /// `Z(q_m, q_e; W, V) / N^{|C_P(X̄)|/2}`
    pub lhs: C64,
    /// `Z∨(q_e, q_m; W̌, V̌) / N^{|C_P̌(X̄∨)|/2}`
    pub rhs: C64,
    pub residual: f64,
    /// `(|Z^P| / N^{|C_P|}) 𝒵` on both sides.
    pub normalized_lhs: C64,
    pub normalized_rhs: C64,
    pub normalized_residual: f64,
}

/// Both sides of the raw and normalized duality identities, each by
/// independent exhaustive evaluation.
pub fn kw_identity_check(bar: &DualCorrespondence, w: &LocalWeights, bg: &BackgroundCharge) -> Result<KwIdentity> {
    let p = w.form_degree;
    let q = dual_degree(bar, p)?;
    let n = w.modulus as f64;
    let wd = dual_weights(bar, w)?;
    let bgd = dual_background(bg);
    let swapped = bar.swapped();
    let z = partition(bar, w, bg)?;
    let zd = partition(&swapped, &wd, &bgd)?;
    let cp = bar.primal.count(p) as f64;
    let cq = bar.dual.count(q) as f64;
    let lhs = z / n.powf(cp / 2.0);
    let rhs = zd / n.powf(cq / 2.0);

    let amp = |z: C64, w: &LocalWeights, x: &CellComplex, deg: usize| -> Result<C64> {
        let count = cocycle_count(x, deg, w.modulus)?;
        let a = z / (normalization(w)? * count);
        Ok(a * count / n.powf(x.count(deg) as f64))
    };
    let normalized_lhs = amp(z, w, &bar.primal, p)?;
    let normalized_rhs = amp(zd, &wd, &bar.dual, q)?;
    Ok(KwIdentity {
        lhs,
        rhs,
        residual: relative_residual(lhs, rhs),
        normalized_lhs,
        normalized_rhs,
        normalized_residual: relative_residual(normalized_lhs, normalized_rhs),
    })
}

/// Dual couplings on `spatial.dual` at degree `d − P`:
/// `Ǩ_{c∨} = J_{θ(c∨)}`, `J̌_{a∨} = K_{θ(a∨)}`,
/// `ǧ^{(n)} = h^{((−1)^{d−P} n)}`, `ȟ^{(n)} = g^{((−1)^P n)}`.
pub fn dual_couplings(spatial: &DualCorrespondence, params: &TrotterParams) -> Result<TrotterParams> {
    params.validate(&spatial.primal)?;
    let d = spatial.dim();
    let p = params.form_degree;
    let q = d - p;
    let nn = params.modulus as usize;
    let reindex = |f: &[C64], odd: bool| -> Vec<C64> {
        if odd {
            negate_arg(f)
        } else {
            f.to_vec()
        }
    };
    let dual = &spatial.dual;
    let out = TrotterParams {
        modulus: params.modulus,
        form_degree: q,
        beta: params.beta,
        trotter_number: params.trotter_number,
        j: (0..dual.count(q - 1))
            .map(|a| params.k[spatial.theta(q - 1, a)])
            .collect(),
        k: (0..dual.count(q + 1))
            .map(|c| params.j[spatial.theta(q + 1, c)])
            .collect(),
        g: (0..dual.count(q))
            .map(|u| reindex(&params.h[spatial.theta(q, u)], (d - p) % 2 == 1))
            .collect(),
        h: (0..dual.count(q))
            .map(|u| reindex(&params.g[spatial.theta(q, u)], p % 2 == 1))
            .collect(),
    };
    debug_assert!(out.g.iter().all(|f| f.len() == nn));
    out.validate(dual)?;
    Ok(out)
}

/// Trotter weights of the dual model transported onto `bar.dual`.
///
/// They are built on the canonical suspension `Sus(Λ∨)` and carried over with
/// the relative orientation between that complex and `X̄∨`.
pub fn dual_trotter_weights(
    spatial: &DualCorrespondence,
    bar: &DualCorrespondence,
    dual_params: &TrotterParams,
) -> Result<LocalWeights> {
    let canon = CellComplex::suspend_capped(&spatial.dual, dual_params.trotter_number, usize::MAX)?;
    let w = trotter_weights(&canon, dual_params)?;
    let rho = relative_orientation(&canon, &bar.dual)?;
    let q = dual_params.form_degree;
    Ok(w.reoriented(&rho[q + 1], &rho[q]))
}

/// Scalar relating the Fourier dual weights to the dual Trotter weights on a
/// dual cell of either degree: `N^{−1/2}` horizontal, `N^{1/2}` vertical.
fn local_factor(n: f64, vertical: bool) -> f64 {
    if vertical {
        n.sqrt()
    } else {
        1.0 / n.sqrt()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrotterDuality {
    pub z: C64,
    pub z_dual: C64,
    pub residual: f64,
    /// `log_N 𝔉` from the per-cell factors.
    pub log_factor: f64,
    /// `(|C_P̌(X̄∨)| − |C_P(X̄)|) / 2`.
    pub log_factor_expected: f64,
    /// Largest per-cell deviation between `Ŵ`, `V̂⁻` and the factor times the
    /// explicit dual Trotter weights.
    pub explicit_residual: f64,
}

/// Normalization-free Trotter duality
/// `Z_{P,M}(q_m,q_e; J,K,g,h) = Z∨_{P̌,M}(q_e,q_m; J̌,Ǩ,ǧ,ȟ)`.
pub fn kw_trotter_check(
    spatial: &DualCorrespondence,
    bar: &DualCorrespondence,
    params: &TrotterParams,
    bg: &BackgroundCharge,
) -> Result<TrotterDuality> {
    let w = trotter_weights(&bar.primal, params)?;
    let dp = dual_couplings(spatial, params)?;
    let wt = dual_trotter_weights(spatial, bar, &dp)?;
    let wf = dual_weights(bar, &w)?;
    let q = wf.form_degree;
    let n = params.modulus as f64;
    let dual = &bar.dual;

    let mut log_factor = 0.0;
    let mut explicit_residual: f64 = 0.0;
    for (deg, fourier, trot) in [(q + 1, &wf.w, &wt.w), (q, &wf.v, &wt.v)] {
        for (cell, (a, b)) in fourier.iter().zip(trot).enumerate() {
            let tag = dual.slice_tag(deg, cell).ok_or(Error::InvalidParameter(
                "dual complex is not a suspension".into(),
            ))?;
            let f = local_factor(n, tag.vertical);
            log_factor += if f > 1.0 { 0.5 } else { -0.5 };
            for (x, y) in a.iter().zip(b) {
                explicit_residual = explicit_residual.max((x - y * f).norm());
            }
        }
    }
    let z = partition(bar, &w, bg)?;
    let z_dual = partition(&bar.swapped(), &wt, &dual_background(bg))?;
    Ok(TrotterDuality {
        z,
        z_dual,
        residual: relative_residual(z, z_dual),
        log_factor,
        log_factor_expected: (dual.count(q) as f64 - bar.primal.count(params.form_degree) as f64) / 2.0,
        explicit_residual,
    })
}

/// Insertions for the dual quantum model on `spatial.swapped()`: the Wilson
/// and 't Hooft cycles trade places, as do the two twists.
pub fn dual_insertions(ins: &InsertionData) -> InsertionData {
    InsertionData {
        nu: ins.mu.clone(),
        mu: ins.nu.clone(),
        alpha: ins.beta_dual.clone(),
        beta_dual: ins.alpha.clone(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QuantumDuality {
    pub trace: C64,
    pub dual_trace: C64,
    pub residual: f64,
}

/// Decorated trace of the code on `Λ` against the dual code on `Λ∨` with dual
/// couplings and exchanged insertions.
pub fn quantum_duality_check(
    spatial: &DualCorrespondence,
    params: &TrotterParams,
    ins: &InsertionData,
) -> Result<QuantumDuality> {
    let trace = decorated_trace(spatial, params, ins)?;
    let dp = dual_couplings(spatial, params)?;
    let dual_trace = decorated_trace(&spatial.swapped(), &dp, &dual_insertions(ins))?;
    Ok(QuantumDuality {
        trace,
        dual_trace,
        residual: relative_residual(trace, dual_trace),
    })
}

/// Spatial correspondence and suspension correspondence for `T_L^d × S¹_M`.
pub fn trotter_setup(d: usize, l: usize, m: usize) -> Result<(DualCorrespondence, DualCorrespondence)> {
    let lambda = Arc::new(CellComplex::build_torus(d, l)?);
    let spatial = dualize(&lambda)?;
    let bar = dualize(&Arc::new(CellComplex::suspend(&lambda, m)?))?;
    Ok((spatial, bar))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::FieldChain;
    use crate::falgebra::{idft, toric_cycles};
    use crate::spacetime::lift_background;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn constant_v_gives_delta() {
        let (_, bar) = trotter_setup(2, 2, 1).unwrap();
        for n in [2u32, 3, 5] {
            let w = LocalWeights::ones(&bar.primal, 1, n);
            let wd = dual_weights(&bar, &w).unwrap();
            assert_eq!(wd.form_degree, 1);
            for arr in &wd.w {
                assert!((arr[0] - c((n as f64).sqrt())).norm() < 1e-12);
                assert!(arr[1..].iter().all(|z| z.norm() < 1e-12));
            }
        }
    }

    #[test]
    fn gauge_weight_dual_is_explicit() {
        let (_, bar) = trotter_setup(2, 2, 1).unwrap();
        let n = 3u32;
        let bg_coupling: f64 = 0.7;
        let mut w = LocalWeights::ones(&bar.primal, 1, n);
        for arr in w.w.iter_mut() {
            for (x, z) in arr.iter_mut().enumerate() {
                *z = c(if x == 0 { bg_coupling.exp() } else { 1.0 });
            }
        }
        let wd = dual_weights(&bar, &w).unwrap();
        let nf = n as f64;
        for arr in &wd.v {
            for (x, z) in arr.iter().enumerate() {
                let want = nf.sqrt() * (if x == 0 { 1.0 } else { 0.0 } + (bg_coupling.exp() - 1.0) / nf);
                assert!((z - c(want)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn double_dual_returns_weights() {
        let (_, bar) = trotter_setup(2, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [2u32, 3, 4] {
            let w = LocalWeights::random(&bar.primal, 1, n, &mut rng);
            let wd = dual_weights(&bar, &w).unwrap();
            let wdd = dual_weights(&bar.swapped(), &wd).unwrap();
            // the second DFT reverses the argument, which the index reversal undoes
            for (a, b) in w.v.iter().zip(&wdd.v).chain(w.w.iter().zip(&wdd.w)) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).norm() < 1e-12);
                }
            }
            let back = idft(&dft(&w.v[0]));
            assert!((back[1] - w.v[0][1]).norm() < 1e-12);
        }
    }

    fn toric_ins(spatial: &DualCorrespondence, n: u32) -> InsertionData {
        let mut ins = InsertionData::zero(spatial, 1, n);
        ins.nu = toric_cycles(&spatial.primal, 1, n)[0].clone();
        ins.mu = toric_cycles(&spatial.dual, 1, n)[1].clone();
        ins.alpha = toric_cycles(&spatial.primal, 0, n)[0].scale(n - 1);
        ins.beta_dual = toric_cycles(&spatial.dual, 0, n)[0].clone();
        ins
    }

    fn random_cycle_bg(bar: &DualCorrespondence, p: usize, n: u32, rng: &mut ChaCha8Rng) -> BackgroundCharge {
        // random boundaries plus a homologically nontrivial cycle on each side
        let q = bar.dim() - p - 1;
        let up = FieldChain::from_i64(n, p + 1, (0..bar.primal.count(p + 1)).map(|_| rng.gen_range(0..n as i64)));
        let qe = bar.primal.boundary(&up).unwrap().add(&toric_cycles(&bar.primal, p, n)[0]);
        let upm = FieldChain::from_i64(n, q + 1, (0..bar.dual.count(q + 1)).map(|_| rng.gen_range(0..n as i64)));
        let qm = bar.dual.boundary(&upm).unwrap().add(&toric_cycles(&bar.dual, q, n)[1]);
        BackgroundCharge { q_m: qm, q_e: qe }
    }

    #[test]
    fn raw_identity_random_weights() {
        let (spatial, bar) = trotter_setup(2, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [2u32, 3, 4] {
            let w = LocalWeights::random(&bar.primal, 1, n, &mut rng);
            let mut bgs = vec![BackgroundCharge::zero(&bar, 1, n), random_cycle_bg(&bar, 1, n, &mut rng)];
            bgs.push(lift_background(&spatial, &bar, &toric_ins(&spatial, n), 1).unwrap());
            for bg in &bgs {
                let r = kw_identity_check(&bar, &w, bg).unwrap();
                assert!(r.residual < 1e-9, "N={n}: {r:?}");
                assert!(r.normalized_residual < 1e-9, "N={n}: {r:?}");
            }
        }
    }

    #[test]
    fn code_limit_counts_flat_sectors() {
        let (_, bar) = trotter_setup(2, 2, 1).unwrap();
        for n in [2u32, 3, 4] {
            let mut w = LocalWeights::ones(&bar.primal, 1, n);
            for arr in w.w.iter_mut() {
                for (x, z) in arr.iter_mut().enumerate() {
                    *z = c(if x == 0 { 1.0 } else { 0.0 });
                }
            }
            let bg = BackgroundCharge::zero(&bar, 1, n);
            let r = kw_identity_check(&bar, &w, &bg).unwrap();
            let nf = n as f64;
            let zp = cocycle_count(&bar.primal, 1, n).unwrap();
            let zq = cocycle_count(&bar.dual, 1, n).unwrap();
            let cp = bar.primal.count(1) as f64;
            let cq = bar.dual.count(1) as f64;
            assert!((r.lhs.re - zp / nf.powf(cp / 2.0)).abs() < 1e-9 * r.lhs.norm());
            // V̌ is the constant N^{−1/2}, W̌ is √N δ on every dual plaquette
            let scale = nf.powf(-cq / 2.0) * nf.powf(bar.dual.count(2) as f64 / 2.0);
            assert!((r.rhs.re - zq * scale / nf.powf(cq / 2.0)).abs() < 1e-9 * r.rhs.norm());
            assert!(r.residual < 1e-9);
        }
    }

    #[test]
    fn self_dual_uniform_couplings_are_fixed() {
        let (spatial, _) = trotter_setup(2, 3, 1).unwrap();
        let mut params = TrotterParams::uniform(&spatial.primal, 1, 3, 1.0, 1, 0.5, 0.5);
        for b in 0..spatial.primal.count(1) {
            params.g[b] = vec![c(0.0), c(0.2), c(0.2)];
            params.h[b] = params.g[b].clone();
        }
        let dp = dual_couplings(&spatial, &params).unwrap();
        assert!(dp.j.iter().chain(&dp.k).all(|&x| x == 0.5));
        assert!(dp.g.iter().chain(&dp.h).all(|f| *f == params.g[0]));
    }

    #[test]
    fn coupling_map_involution_and_signs() {
        let (spatial, _) = trotter_setup(2, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = TrotterParams::random(&spatial.primal, 1, 3, 0.8, 2, &mut rng);
        let dp = dual_couplings(&spatial, &params).unwrap();
        assert_eq!(dp.form_degree, 1);
        let back = dual_couplings(&spatial.swapped(), &dp).unwrap();
        assert_eq!(back, params);
        // P = 1 odd: ȟ^{(n)} = g^{(−n)}
        for u in 0..spatial.dual.count(1) {
            let b = spatial.theta(1, u);
            assert_eq!(dp.h[u][1], params.g[b][2]);
            assert_eq!(dp.h[u][2], params.g[b][1]);
            assert_eq!(dp.g[u][1], params.h[b][2]);
        }
    }

    #[test]
    fn trotter_duality_normalization_free() {
        let (spatial, bar) = trotter_setup(2, 2, 2).unwrap();
        let n = 2u32;
        let params = TrotterParams::uniform(&spatial.primal, 1, n, 1.0, 2, 0.6, 0.6);
        let bg = BackgroundCharge::zero(&bar, 1, n);
        let r = kw_trotter_check(&spatial, &bar, &params, &bg).unwrap();
        assert!(r.residual < 1e-9, "{r:?}");
        assert!(r.explicit_residual < 1e-12, "{r:?}");
        assert_eq!(r.log_factor, r.log_factor_expected);
    }

    #[test]
    fn trotter_duality_random_sources() {
        let (spatial, bar) = trotter_setup(2, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for n in [2u32, 3] {
            let params = TrotterParams::random(&spatial.primal, 1, n, 0.9, 1, &mut rng);
            let bg = random_cycle_bg(&bar, 1, n, &mut rng);
            let r = kw_trotter_check(&spatial, &bar, &params, &bg).unwrap();
            assert!(r.residual < 1e-9, "N={n}: {r:?}");
            assert!(r.explicit_residual < 1e-12, "N={n}: {r:?}");
            assert_eq!(r.log_factor, r.log_factor_expected);
        }
    }

    #[test]
    fn quantum_traces_agree() {
        let (spatial, _) = trotter_setup(2, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for (n, m) in [(2u32, 1usize), (2, 2), (3, 1)] {
            let params = TrotterParams::random(&spatial.primal, 1, n, 0.7, m, &mut rng);
            let full = toric_ins(&spatial, n);
            let mut only_nu = InsertionData::zero(&spatial, 1, n);
            only_nu.nu = full.nu.clone();
            let mut only_mu = InsertionData::zero(&spatial, 1, n);
            only_mu.mu = full.mu.clone();
            let mut twists = InsertionData::zero(&spatial, 1, n);
            twists.alpha = full.alpha.clone();
            twists.beta_dual = full.beta_dual.clone();
            for (name, ins) in [("zero", InsertionData::zero(&spatial, 1, n)), ("nu", only_nu), ("mu", only_mu), ("twists", twists), ("full", full)] {
                let r = quantum_duality_check(&spatial, &params, &ins).unwrap();
                assert!(r.residual < 1e-9, "N={n} M={m} {name}: {r:?}");
            }
        }
    }
}
