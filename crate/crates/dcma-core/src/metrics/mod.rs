//! Pairwise error probability formulas and codebook distance metrics.
//!
//! The unconditional PEP over a Nakagami-m channel factors per resource
//! element as `0.3 * Π_k (1 + 3|δ_k|²/(10 m N0))^{-m}`, which makes
//! `m * Σ_k ln(1 + 3|δ_k|²/(10 m N0))` — the logarithmic sum distance — the
//! quantity to maximize over codeword pairs. Its minimum over pairs (MLSD)
//! is the design metric; the minimum squared Euclidean distance and minimum
//! product distance fall out as the large-m and Rayleigh special cases.
//!
//! The Q-function fit `Q(x) ≈ 0.3 exp(-3x²/5)` behind these formulas is a
//! high-SNR curve fit (stated region `x ≥ 1.5`); no regime guard is applied
//! here, matching how the formulas are used upstream.

pub mod alphabet;
pub mod enumeration;
pub mod spectrum;

pub use alphabet::Alphabet;
pub use enumeration::{
    enumerate_differences, policy_class_count, policy_vector_count, DiffVisitor, EnumPolicy,
    EnumerationError, VisitCtx, ENUMERATION_GUARD,
};
pub use spectrum::{symbol_difference_spectrum, DifferenceEntry, DifferenceSpectrum};

use crate::codebook::Codebook;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Components with magnitude at or below this threshold count as zero for
/// the product distance (print-precision noise in published vectors).
pub const ZERO_COMPONENT_EPS: f64 = 1e-12;

/// Channel-side knobs of the PEP formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricContext {
    /// Nakagami fading parameter, `m > 0`.
    pub m: f64,
    /// Noise spectral density, `N0 > 0`.
    pub n0: f64,
    /// Average channel power; fixed at 1.
    pub omega: f64,
}

impl MetricContext {
    pub fn new(m: f64, n0: f64) -> Self {
        assert!(m > 0.0 && m.is_finite(), "fading parameter m must be positive");
        assert!(n0 > 0.0 && n0.is_finite(), "noise level N0 must be positive");
        Self { m, n0, omega: 1.0 }
    }

    /// Attenuation coefficient `3 / (10 m N0)` of the tight PEP.
    #[inline]
    pub fn beta_tight(&self) -> f64 {
        3.0 / (10.0 * self.m * self.n0)
    }

    /// Attenuation coefficient `1 / (4 m N0)` of the Chernoff-based PEP.
    #[inline]
    pub fn beta_loose(&self) -> f64 {
        1.0 / (4.0 * self.m * self.n0)
    }
}

/// An element-wise distance `δ = D (α - α̂)` between two superimposed
/// codewords, with the number of users whose symbols differ.
#[derive(Debug, Clone, PartialEq)]
pub struct PairDistance {
    pub delta: Vec<Complex64>,
    pub weight: u32,
}

/// Gaussian tail probability `Q(x)`.
pub fn q_exact(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

/// Curve-fit approximation `Q(x) ≈ (3/10) exp(-3x²/5)`, accurate in the
/// high-SNR region `x ≥ 1.5`.
pub fn q_approx(x: f64) -> f64 {
    0.3 * (-0.6 * x * x).exp()
}

/// PEP conditioned on the channel vector `h`.
pub fn pep_conditional(delta: &[Complex64], h: &[Complex64], n0: f64) -> f64 {
    assert_eq!(delta.len(), h.len());
    assert!(n0 > 0.0);
    let s: f64 = delta
        .iter()
        .zip(h)
        .map(|(d, g)| g.norm_sqr() * d.norm_sqr())
        .sum();
    q_exact((s / (2.0 * n0)).sqrt())
}

/// Channel-averaged PEP over Nakagami-m fading:
/// `0.3 * Π_k (1 + 3|δ_k|²/(10 m N0))^{-m}`.
pub fn pep_nakagami(delta: &[Complex64], ctx: &MetricContext) -> f64 {
    let beta = ctx.beta_tight();
    let bracket: f64 = delta.iter().map(|d| 1.0 + beta * d.norm_sqr()).product();
    0.3 * bracket.powf(-ctx.m)
}

/// Chernoff-based PEP bound from `Q(x) ≤ exp(-x²/2)`:
/// `Π_k (1 + |δ_k|²/(4 m N0))^{-m}`. Always exceeds [`pep_nakagami`].
pub fn pep_loose(delta: &[Complex64], ctx: &MetricContext) -> f64 {
    let beta = ctx.beta_loose();
    let bracket: f64 = delta.iter().map(|d| 1.0 + beta * d.norm_sqr()).product();
    bracket.powf(-ctx.m)
}

/// Logarithmic sum distance `m Σ_k ln(1 + 3|δ_k|²/(10 m N0))` (natural
/// logarithm; `pep_nakagami = 0.3 exp(-lsd)` exactly).
pub fn lsd(delta: &[Complex64], ctx: &MetricContext) -> f64 {
    let beta = ctx.beta_tight();
    ctx.m
        * delta
            .iter()
            .map(|d| (beta * d.norm_sqr()).ln_1p())
            .sum::<f64>()
}

/// One-pass minimum tracker over all sign classes: squared Euclidean
/// distance, PEP bracket (for the MLSD), and full-diversity product
/// distance with a count of diversity-deficient classes.
struct CombinedVisitor {
    beta: f64,
    med_sq: f64,
    med_digits: Vec<u8>,
    bracket: f64,
    ml_digits: Vec<u8>,
    prod2: f64,
    prod_digits: Vec<u8>,
    zero_classes: u64,
}

impl CombinedVisitor {
    fn new(j_users: usize, beta: f64) -> Self {
        Self {
            beta,
            med_sq: f64::INFINITY,
            med_digits: vec![0; j_users],
            bracket: f64::INFINITY,
            ml_digits: vec![0; j_users],
            prod2: f64::INFINITY,
            prod_digits: vec![0; j_users],
            zero_classes: 0,
        }
    }

    fn merge(mut self, other: Self) -> Self {
        if other.med_sq < self.med_sq {
            self.med_sq = other.med_sq;
            self.med_digits = other.med_digits;
        }
        if other.bracket < self.bracket {
            self.bracket = other.bracket;
            self.ml_digits = other.ml_digits;
        }
        if other.prod2 < self.prod2 {
            self.prod2 = other.prod2;
            self.prod_digits = other.prod_digits;
        }
        self.zero_classes += other.zero_classes;
        self
    }
}

impl DiffVisitor for CombinedVisitor {
    #[inline]
    fn visit(&mut self, ctx: &VisitCtx<'_>) {
        let mut sum = 0.0;
        let mut bracket = 1.0;
        let mut prod2 = 1.0;
        let mut any_zero = false;
        for d in ctx.delta {
            let n = d.norm_sqr();
            sum += n;
            bracket *= 1.0 + self.beta * n;
            prod2 *= n;
            any_zero |= n <= ZERO_COMPONENT_EPS * ZERO_COMPONENT_EPS;
        }
        if sum < self.med_sq {
            self.med_sq = sum;
            self.med_digits.copy_from_slice(ctx.digits);
        }
        if bracket < self.bracket {
            self.bracket = bracket;
            self.ml_digits.copy_from_slice(ctx.digits);
        }
        if any_zero {
            self.zero_classes += 1;
        } else if prod2 < self.prod2 {
            self.prod2 = prod2;
            self.prod_digits.copy_from_slice(ctx.digits);
        }
    }
}

fn digits_to_delta(cb: &Codebook, spec: &DifferenceSpectrum, digits: &[u8]) -> PairDistance {
    let k = cb.k_resources();
    let mut delta = vec![Complex64::ZERO; k];
    let mut weight = 0;
    for (j, &dig) in digits.iter().enumerate() {
        if dig != 0 {
            weight += 1;
        }
        let val = spec.value(dig as usize);
        for (kk, d) in delta.iter_mut().enumerate() {
            *d += cb.entry(kk, j) * val;
        }
    }
    PairDistance { delta, weight }
}

fn run_combined(
    cb: &Codebook,
    a: &Alphabet,
    beta: f64,
    policy: EnumPolicy,
    force: bool,
) -> Result<(CombinedVisitor, DifferenceSpectrum), EnumerationError> {
    let spec = symbol_difference_spectrum(a);
    let cols = cb.columns();
    let j = cb.j_users();
    let parts = enumerate_differences(&cols, &spec, policy, force, || {
        CombinedVisitor::new(j, beta)
    })?;
    let merged = parts
        .into_iter()
        .reduce(CombinedVisitor::merge)
        .expect("at least one stratum");
    Ok((merged, spec))
}

/// Minimum squared Euclidean distance between distinct superimposed
/// codewords: `min_{Δα ≠ 0} Σ_k |δ_k|²`.
pub fn med(
    cb: &Codebook,
    a: &Alphabet,
    policy: EnumPolicy,
    force: bool,
) -> Result<f64, EnumerationError> {
    let (v, _) = run_combined(cb, a, 1.0, policy, force)?;
    Ok(v.med_sq)
}

/// Minimum product distance `min Π_k |δ_k|` over full-diversity classes,
/// plus the number of sign classes with at least one zero component.
pub fn min_product_distance(
    cb: &Codebook,
    a: &Alphabet,
    policy: EnumPolicy,
    force: bool,
) -> Result<(f64, u64), EnumerationError> {
    let (v, _) = run_combined(cb, a, 1.0, policy, force)?;
    Ok((v.prod2.sqrt(), v.zero_classes))
}

/// Minimum logarithmic sum distance over the policy's sign classes.
pub fn mlsd(
    cb: &Codebook,
    a: &Alphabet,
    ctx: &MetricContext,
    policy: EnumPolicy,
    force: bool,
) -> Result<f64, EnumerationError> {
    let (v, spec) = run_combined(cb, a, ctx.beta_tight(), policy, force)?;
    // Recompute in the log domain from the argmin for precision at large m.
    let arg = digits_to_delta(cb, &spec, &v.ml_digits);
    Ok(lsd(&arg.delta, ctx))
}

/// Union-bound accumulator: `Σ n_E(w, ŵ) · PEP` over ordered pairs, via
/// difference classes (both signs of each class).
struct UnionVisitor {
    m: f64,
    beta_tight: f64,
    beta_loose: f64,
    tight: f64,
    loose: f64,
}

impl DiffVisitor for UnionVisitor {
    #[inline]
    fn visit(&mut self, ctx: &VisitCtx<'_>) {
        let mut bt = 1.0;
        let mut bl = 1.0;
        for d in ctx.delta {
            let n = d.norm_sqr();
            bt *= 1.0 + self.beta_tight * n;
            bl *= 1.0 + self.beta_loose * n;
        }
        // Total erroneous bits over the ordered pairs in this class; the
        // factor 2 covers the negated class, whose PEP is identical.
        let bits = ctx.pair_mult as f64 * ctx.bit_err_rate_sum;
        self.tight += 2.0 * bits * 0.3 * bt.powf(-self.m);
        self.loose += 2.0 * bits * bl.powf(-self.m);
    }
}

/// Union bounds on BER: `(tight, loose)` where tight uses the fitted PEP
/// and loose the Chernoff PEP.
pub fn union_bounds(
    cb: &Codebook,
    a: &Alphabet,
    ctx: &MetricContext,
    policy: EnumPolicy,
    force: bool,
) -> Result<(f64, f64), EnumerationError> {
    let spec = symbol_difference_spectrum(a);
    let cols = cb.columns();
    let parts = enumerate_differences(&cols, &spec, policy, force, || UnionVisitor {
        m: ctx.m,
        beta_tight: ctx.beta_tight(),
        beta_loose: ctx.beta_loose(),
        tight: 0.0,
        loose: 0.0,
    })?;
    // Fixed-order reduction keeps float sums identical across worker counts.
    let (sum_t, sum_l) = parts
        .iter()
        .fold((0.0, 0.0), |(t, l), v| (t + v.tight, l + v.loose));
    let m_sym = a.m() as f64;
    let j = cb.j_users() as f64;
    let norm = m_sym.powi(cb.j_users() as i32) * j * (a.bits_per_symbol() as f64);
    Ok((sum_t / norm, sum_l / norm))
}

/// Tight union bound on BER.
pub fn union_bound_ber(
    cb: &Codebook,
    a: &Alphabet,
    ctx: &MetricContext,
    policy: EnumPolicy,
    force: bool,
) -> Result<f64, EnumerationError> {
    union_bounds(cb, a, ctx, policy, force).map(|(t, _)| t)
}

/// Union-bound accumulator for the non-fading (`m -> ∞`) channel, where the
/// per-pair PEP reduces to `0.3 exp(-3 Σ|δ_k|²/(10 N0))` and the Chernoff
/// version to `exp(-Σ|δ_k|²/(4 N0))`.
struct GaussianUnionVisitor {
    inv_n0: f64,
    tight: f64,
    loose: f64,
}

impl DiffVisitor for GaussianUnionVisitor {
    #[inline]
    fn visit(&mut self, ctx: &VisitCtx<'_>) {
        let sum: f64 = ctx.delta.iter().map(|d| d.norm_sqr()).sum();
        let bits = ctx.pair_mult as f64 * ctx.bit_err_rate_sum;
        self.tight += 2.0 * bits * 0.3 * (-0.3 * sum * self.inv_n0).exp();
        self.loose += 2.0 * bits * (-0.25 * sum * self.inv_n0).exp();
    }
}

/// `(tight, loose)` union bounds over the Gaussian (unit-gain) channel.
pub fn union_bounds_gaussian(
    cb: &Codebook,
    a: &Alphabet,
    n0: f64,
    policy: EnumPolicy,
    force: bool,
) -> Result<(f64, f64), EnumerationError> {
    assert!(n0 > 0.0);
    let spec = symbol_difference_spectrum(a);
    let cols = cb.columns();
    let parts = enumerate_differences(&cols, &spec, policy, force, || GaussianUnionVisitor {
        inv_n0: 1.0 / n0,
        tight: 0.0,
        loose: 0.0,
    })?;
    let (sum_t, sum_l) = parts
        .iter()
        .fold((0.0, 0.0), |(t, l), v| (t + v.tight, l + v.loose));
    let m_sym = a.m() as f64;
    let j = cb.j_users() as f64;
    let norm = m_sym.powi(cb.j_users() as i32) * j * (a.bits_per_symbol() as f64);
    Ok((sum_t / norm, sum_l / norm))
}

/// Everything the `metrics` CLI reports for one codebook, from a single
/// enumeration pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub codebook_id: String,
    pub m_symbols: usize,
    pub m: f64,
    pub n0: f64,
    pub policy: String,
    /// Minimum Euclidean distance (root; the convention of published
    /// codebook tables).
    pub med: f64,
    /// Minimum squared Euclidean distance.
    pub med_squared: f64,
    pub min_product: f64,
    pub zero_component_classes: u64,
    pub mlsd: f64,
    /// The difference vector attaining the MLSD, as `[re, im]` pairs.
    pub mlsd_argmin: Vec<[f64; 2]>,
    pub wall_ms: f64,
}

pub fn metric_report(
    cb: &Codebook,
    a: &Alphabet,
    ctx: &MetricContext,
    policy: EnumPolicy,
    force: bool,
    codebook_id: &str,
) -> Result<MetricReport, EnumerationError> {
    let start = std::time::Instant::now();
    let (v, spec) = run_combined(cb, a, ctx.beta_tight(), policy, force)?;
    let arg = digits_to_delta(cb, &spec, &v.ml_digits);
    let mlsd_val = lsd(&arg.delta, ctx);
    Ok(MetricReport {
        codebook_id: codebook_id.to_string(),
        m_symbols: a.m(),
        m: ctx.m,
        n0: ctx.n0,
        policy: policy.to_string(),
        med: v.med_sq.sqrt(),
        med_squared: v.med_sq,
        min_product: v.prod2.sqrt(),
        zero_component_classes: v.zero_classes,
        mlsd: mlsd_val,
        mlsd_argmin: arg.delta.iter().map(|d| [d.re, d.im]).collect(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Default enumeration policy: exact up to 6 users, weight-3 truncation
/// beyond (minimum-distance pairs are dominated by low weights at high SNR,
/// and the truncated bound is reported as such).
pub fn default_policy(j_users: usize) -> EnumPolicy {
    if j_users <= 6 {
        EnumPolicy::Exact
    } else {
        EnumPolicy::MaxWeight(3)
    }
}
