//! Experiment configuration: JSON schema and chain references.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use zncode::complex::{Cell, CellComplex, FieldChain};
use zncode::falgebra::toric_cycles;
use zncode::gauge_prcm::prcm_probability;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    OracleVsClassical,
    DefectIdentities,
    LowActivityReport,
    KwDuality,
    GaugePrcmMarginals,
    SwScan,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(rename = "N")]
    pub modulus: u32,
    #[serde(default)]
    pub geometry: Option<Geometry>,
    #[serde(default)]
    pub couplings: Couplings,
    #[serde(default)]
    pub background: Background,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub low_activity: Option<LowActivityBlock>,
    #[serde(default)]
    pub gauge: Option<GaugeBlock>,
    #[serde(default)]
    pub scan: Option<ScanBlock>,
    /// Output directory; the `--out` flag takes precedence.
    #[serde(default)]
    pub output: Option<String>,
}

/// Spatial torus `T_L^d`, Trotter number `M`, form degree `P`. For the gauge
/// kinds `d` is the dimension of the torus carrying the gauge field.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    #[serde(default = "two")]
    pub d: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "M", default = "one")]
    pub m: usize,
    #[serde(rename = "P", default = "one")]
    pub p: usize,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

fn one_u32() -> u32 {
    1
}

fn one_i64() -> i64 {
    1
}

fn default_beta() -> f64 {
    1.0
}

/// Trotter couplings. Uniform when `J` and `K` are given (with optional
/// spectral sources `g`, `h` as `[re, im]` pairs applied to every cell),
/// seeded random otherwise. `weights` holds raw weight tables. `beta_g`
/// gives gauge couplings for the gauge kinds, as an alternative to
/// PRCM probabilities.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Couplings {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(rename = "J", default)]
    pub j: Option<f64>,
    #[serde(rename = "K", default)]
    pub k: Option<f64>,
    #[serde(default)]
    pub g: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub h: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub weights: Option<serde_json::Value>,
    #[serde(default)]
    pub beta_g: Option<Vec<f64>>,
}

impl Default for Couplings {
    fn default() -> Self {
        Couplings {
            beta: default_beta(),
            j: None,
            k: None,
            g: None,
            h: None,
            weights: None,
            beta_g: None,
        }
    }
}

/// Insertions on the spatial lattice (`nu`, `alpha` primal; `mu`, `beta_dual`
/// on the dual torus) or spacetime charges `q_m` (dual) and `q_e` (primal).
/// `all_classes` sweeps one representative per pair of homology classes.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Background {
    #[serde(default)]
    pub nu: Option<ChainSpec>,
    #[serde(default)]
    pub mu: Option<ChainSpec>,
    #[serde(default)]
    pub alpha: Option<ChainSpec>,
    #[serde(default)]
    pub beta_dual: Option<ChainSpec>,
    #[serde(default)]
    pub q_m: Option<ChainSpec>,
    #[serde(default)]
    pub q_e: Option<ChainSpec>,
    #[serde(default)]
    pub all_classes: bool,
}

/// Either a straight toric cycle (by index, optionally scaled) or a list of
/// cells with coefficients.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChainSpec {
    Toric {
        toric: usize,
        #[serde(default = "one_u32")]
        scale: u32,
    },
    Cells(Vec<CellRef>),
}

/// A cell by base vertex coordinates and spanned axes.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellRef {
    pub base: Vec<usize>,
    pub axes: Vec<usize>,
    #[serde(default = "one_i64")]
    pub coeff: i64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "tol_identity")]
    pub identity: f64,
    #[serde(default = "tol_explicit")]
    pub explicit: f64,
    #[serde(default = "tol_variance")]
    pub variance: f64,
    #[serde(default = "tol_tv")]
    pub tv: f64,
}

fn tol_identity() -> f64 {
    1e-9
}

fn tol_explicit() -> f64 {
    1e-12
}

fn tol_variance() -> f64 {
    1e-20
}

fn tol_tv() -> f64 {
    1e-10
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: tol_identity(),
            explicit: tol_explicit(),
            variance: tol_variance(),
            tv: tol_tv(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowActivityBlock {
    /// Largest modulus of the nontrivial defect amplitudes (random phases).
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    /// Polymer catalog size limit; defaults to all carriers.
    #[serde(default)]
    pub max_size: Option<usize>,
    #[serde(default = "default_census")]
    pub census_max_n: usize,
    #[serde(default = "default_a")]
    pub a: f64,
}

fn default_amplitude() -> f64 {
    0.005
}

fn default_census() -> usize {
    6
}

fn default_a() -> f64 {
    std::f64::consts::LN_2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeBlock {
    #[serde(default)]
    pub probabilities: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    pub lengths: Vec<usize>,
    /// Defaults to `p_sd ± 0.07`.
    #[serde(default)]
    pub probabilities: Option<Vec<f64>>,
    pub sweeps: usize,
    pub chains: usize,
    #[serde(default)]
    pub burn_in: Option<usize>,
    #[serde(default = "default_batches")]
    pub batches: usize,
}

fn default_batches() -> usize {
    20
}

/// Parses a config, reporting the JSON path of the offending field.
pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            anyhow!("config parse error: {inner}")
        } else {
            anyhow!("config parse error at `{path}`: {inner}")
        }
    })
}

impl ExperimentConfig {
    /// PRCM probabilities from `probabilities` followed by `p = 1 − e^{−β_g}`
    /// for each entry of `couplings.beta_g`.
    pub fn probabilities(&self, listed: &[f64]) -> Vec<f64> {
        let from_beta = self.couplings.beta_g.iter().flatten().map(|&b| prcm_probability(b));
        listed.iter().copied().chain(from_beta).collect()
    }

    pub fn geometry(&self) -> Result<&Geometry> {
        self.geometry
            .as_ref()
            .ok_or_else(|| anyhow!("config: missing field `geometry` (required for this kind)"))
    }
}

/// Builds a chain of degree `p` on `x` from a spec, and checks that it is a cycle.
pub fn build_chain(x: &CellComplex, p: usize, n: u32, spec: &ChainSpec, what: &str) -> Result<FieldChain> {
    let chain = match spec {
        ChainSpec::Toric { toric, scale } => {
            let all = toric_cycles(x, p, n);
            all.get(*toric)
                .ok_or_else(|| anyhow!("{what}: toric index {toric} out of range ({} cycles)", all.len()))?
                .scale(*scale)
        }
        ChainSpec::Cells(cells) => {
            let mut z = FieldChain::zeros(n, p, x.count(p));
            for c in cells {
                if c.axes.len() != p || c.base.len() != x.dim() {
                    bail!("{what}: cell {:?}/{:?} is not a {p}-cell of a {}-dimensional torus", c.base, c.axes, x.dim());
                }
                let mask = c.axes.iter().fold(0u32, |m, &a| m | 1 << a);
                let idx = x
                    .index_of(p, &Cell { base: c.base.clone(), axes: mask })
                    .ok_or_else(|| anyhow!("{what}: no cell with base {:?} and axes {:?}", c.base, c.axes))?;
                let v = c.coeff.rem_euclid(n as i64) as u32;
                z.coeffs[idx] = (z.coeffs[idx] + v) % n;
            }
            z
        }
    };
    if p > 0 && !x.boundary(&chain).context("boundary")?.is_zero() {
        bail!("{what} is not a cycle");
    }
    Ok(chain)
}
