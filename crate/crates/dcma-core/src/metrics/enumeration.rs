//! Difference-vector enumeration engine.
//!
//! Visits every nonzero difference vector `Δα` in `(difference values)^J`
//! exactly once *up to global sign*: a vector and its negation form one
//! sign class, and all metrics here are sign-invariant (sum-type visitors
//! double the class weight themselves).
//!
//! Sign classes are canonicalized by forcing the first nonzero entry to a
//! fixed half of the value set. The remaining entries run in reflected
//! mixed-radix Gray order, so each step changes one user's difference by
//! one table slot and the superimposed distance `δ = D·Δα` updates in `O(K)`.
//!
//! Work splits into strata keyed by the canonical prefix. Strata run in
//! parallel and their results merge in a fixed order, so aggregates are
//! identical for any worker count.

use super::spectrum::DifferenceSpectrum;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

/// How much of the difference space to cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnumPolicy {
    /// Every sign class: `(B^J - 1) / 2` visits for `B` difference values.
    Exact,
    /// Only sign classes with at most this many nonzero entries.
    MaxWeight(usize),
}

impl std::fmt::Display for EnumPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EnumPolicy::Exact => write!(f, "exact"),
            EnumPolicy::MaxWeight(w) => write!(f, "max_weight_{w}"),
        }
    }
}

impl std::str::FromStr for EnumPolicy {
    type Err = String;

    /// Accepts `exact`, `w<k>`, or `max_weight_<k>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "exact" {
            return Ok(EnumPolicy::Exact);
        }
        let digits = s
            .strip_prefix("max_weight_")
            .or_else(|| s.strip_prefix('w'))
            .ok_or_else(|| format!("unknown policy {s:?} (expected \"exact\" or \"w<k>\")"))?;
        let w: usize = digits
            .parse()
            .map_err(|_| format!("bad weight in policy {s:?}"))?;
        if w == 0 {
            return Err("max weight must be at least 1".into());
        }
        Ok(EnumPolicy::MaxWeight(w))
    }
}

/// Exact enumeration refuses to start above this many raw vectors unless
/// forced.
pub const ENUMERATION_GUARD: u128 = 1 << 36;

#[derive(Debug, Error)]
pub enum EnumerationError {
    #[error("enumeration of {vectors} difference vectors exceeds guard of {guard}; pass force to override")]
    TooLarge { vectors: u128, guard: u128 },
}

/// Snapshot handed to the visitor at each sign class.
pub struct VisitCtx<'a> {
    /// `δ = D·Δα`, length `K`.
    pub delta: &'a [Complex64],
    /// Value index per user (index into the spectrum), length `J`.
    pub digits: &'a [u8],
    /// Ordered codeword pairs in this difference vector: `Π_j mult(d_j)`.
    pub pair_mult: u64,
    /// `Σ_j bit_err_total(d_j) / mult(d_j)`; total differing bits for the
    /// class equal `pair_mult * bit_err_rate_sum`.
    pub bit_err_rate_sum: f64,
    /// Number of users with a nonzero difference.
    pub weight: u32,
}

/// Fold over visited sign classes. One instance per stratum; results are
/// merged by the caller in stratum order.
pub trait DiffVisitor: Send {
    fn visit(&mut self, ctx: &VisitCtx<'_>);
}

/// Raw vector count covered by a policy (both signs, excluding zero).
pub fn policy_vector_count(b: usize, j: usize, policy: EnumPolicy) -> u128 {
    let b = b as u128;
    match policy {
        EnumPolicy::Exact => b.pow(j as u32).saturating_sub(1),
        EnumPolicy::MaxWeight(w) => {
            let nz = b - 1;
            let mut total: u128 = 0;
            for weight in 1..=w.min(j) {
                total += binomial(j as u128, weight as u128) * nz.pow(weight as u32);
            }
            total
        }
    }
}

/// Sign classes visited by a policy.
pub fn policy_class_count(b: usize, j: usize, policy: EnumPolicy) -> u128 {
    policy_vector_count(b, j, policy) / 2
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Per-user tables: products of each codebook column with each difference
/// value, plus steps between adjacent table slots for Gray updates.
struct Tables {
    k: usize,
    b: usize,
    /// `prod[(j*B + v)*K + k] = cols[j][k] * value[v]`
    prod: Vec<Complex64>,
    /// `step[(j*(B-1) + v)*K + k] = prod[j][v+1][k] - prod[j][v][k]`
    step: Vec<Complex64>,
}

impl Tables {
    fn new(cols: &[Vec<Complex64>], spectrum: &DifferenceSpectrum) -> Self {
        let j_users = cols.len();
        let k = cols[0].len();
        let b = spectrum.len();
        let mut prod = Vec::with_capacity(j_users * b * k);
        for col in cols {
            for v in 0..b {
                let val = spectrum.value(v);
                for &g in col {
                    prod.push(g * val);
                }
            }
        }
        let mut step = Vec::with_capacity(j_users * (b - 1) * k);
        for j in 0..j_users {
            for v in 0..b - 1 {
                for kk in 0..k {
                    step.push(
                        prod[(j * b + v + 1) * k + kk] - prod[(j * b + v) * k + kk],
                    );
                }
            }
        }
        Self { k, b, prod, step }
    }

    #[inline]
    fn prod_slice(&self, j: usize, v: usize) -> &[Complex64] {
        let base = (j * self.b + v) * self.k;
        &self.prod[base..base + self.k]
    }

    /// Step from slot `v` to `v + 1` for user `j`.
    #[inline]
    fn step_slice(&self, j: usize, v: usize) -> &[Complex64] {
        let base = (j * (self.b - 1) + v) * self.k;
        &self.step[base..base + self.k]
    }
}

/// One independent chunk of the enumeration.
enum Stratum {
    /// Exact mode: users `< p` are zero, user `p` holds a canonical
    /// representative, user `p+1` (if any) holds a fixed value, and users
    /// `p+2..` run over the full value set.
    Prefix { p: usize, rep: u8, second: Option<u8> },
    /// Max-weight mode: a fixed support, the first support user holding a
    /// canonical representative, the rest running over nonzero values.
    Support { support: Vec<usize>, rep: u8 },
}

fn build_strata(j_users: usize, spectrum: &DifferenceSpectrum, policy: EnumPolicy) -> Vec<Stratum> {
    let b = spectrum.len();
    let mut strata = Vec::new();
    match policy {
        EnumPolicy::Exact => {
            for p in 0..j_users {
                for &rep in spectrum.positive_reps() {
                    if p + 1 < j_users {
                        for v in 0..b {
                            strata.push(Stratum::Prefix {
                                p,
                                rep: rep as u8,
                                second: Some(v as u8),
                            });
                        }
                    } else {
                        strata.push(Stratum::Prefix { p, rep: rep as u8, second: None });
                    }
                }
            }
        }
        EnumPolicy::MaxWeight(wmax) => {
            for w in 1..=wmax.min(j_users) {
                let mut support: Vec<usize> = (0..w).collect();
                loop {
                    for &rep in spectrum.positive_reps() {
                        strata.push(Stratum::Support {
                            support: support.clone(),
                            rep: rep as u8,
                        });
                    }
                    if !next_combination(&mut support, j_users) {
                        break;
                    }
                }
            }
        }
    }
    strata
}

/// Advance a 0-based strictly increasing combination; false when exhausted.
fn next_combination(subset: &mut [usize], n: usize) -> bool {
    let d = subset.len();
    let mut i = d;
    while i > 0 {
        i -= 1;
        if subset[i] < n - (d - i) {
            subset[i] += 1;
            for j in i + 1..d {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Run the enumeration, producing one visitor per stratum in a fixed order.
///
/// `cols` are the codebook columns (user signatures). The caller merges the
/// returned visitors; merging in the returned order keeps results identical
/// for any rayon worker count.
pub fn enumerate_differences<V, F>(
    cols: &[Vec<Complex64>],
    spectrum: &DifferenceSpectrum,
    policy: EnumPolicy,
    force: bool,
    make: F,
) -> Result<Vec<V>, EnumerationError>
where
    V: DiffVisitor,
    F: Fn() -> V + Sync,
{
    let j_users = cols.len();
    assert!(j_users >= 1);
    let vectors = policy_vector_count(spectrum.len(), j_users, policy);
    if vectors > ENUMERATION_GUARD && !force {
        return Err(EnumerationError::TooLarge { vectors, guard: ENUMERATION_GUARD });
    }

    let tables = Tables::new(cols, spectrum);
    let strata = build_strata(j_users, spectrum, policy);

    let visitors: Vec<V> = strata
        .par_iter()
        .map(|stratum| {
            let mut visitor = make();
            run_stratum(stratum, &tables, spectrum, j_users, &mut visitor);
            visitor
        })
        .collect();
    Ok(visitors)
}

struct GrayState {
    /// Current digit per tail slot.
    a: Vec<u8>,
    /// Direction per tail slot.
    o: Vec<i8>,
    /// Focus pointers (loopless reflected Gray generation).
    f: Vec<u8>,
    radix: u8,
}

impl GrayState {
    fn new(len: usize, radix: u8) -> Self {
        Self {
            a: vec![0; len],
            o: vec![1; len],
            f: (0..=len as u8).collect(),
            radix,
        }
    }

    /// Advance one step; returns `(slot, old, new)` or `None` when done.
    #[inline]
    fn step(&mut self) -> Option<(usize, u8, u8)> {
        let j = self.f[0] as usize;
        self.f[0] = 0;
        if j == self.a.len() {
            return None;
        }
        let old = self.a[j];
        let new = (old as i16 + self.o[j] as i16) as u8;
        self.a[j] = new;
        if new == 0 || new == self.radix - 1 {
            self.o[j] = -self.o[j];
            self.f[j] = self.f[j + 1];
            self.f[j + 1] = j as u8 + 1;
        }
        Some((j, old, new))
    }
}

fn run_stratum<V: DiffVisitor>(
    stratum: &Stratum,
    tables: &Tables,
    spectrum: &DifferenceSpectrum,
    j_users: usize,
    visitor: &mut V,
) {
    let k = tables.k;
    let b = tables.b;
    let mut digits = vec![0u8; j_users];
    let mut delta = vec![Complex64::ZERO; k];
    // Zero difference has mult M and zero bits; start from the all-zero
    // baseline and fold in the fixed prefix.
    let m_sym = spectrum.mult(0);
    let mut pair_mult: u64 = m_sym.pow(j_users as u32);
    let mut rate_sum: f64 = 0.0;
    let mut weight: u32 = 0;

    let set_digit = |user: usize,
                         v: u8,
                         digits: &mut [u8],
                         delta: &mut [Complex64],
                         pair_mult: &mut u64,
                         rate_sum: &mut f64,
                         weight: &mut u32| {
        let old = digits[user] as usize;
        let new = v as usize;
        digits[user] = v;
        for (d, (pn, po)) in delta.iter_mut().zip(
            tables
                .prod_slice(user, new)
                .iter()
                .zip(tables.prod_slice(user, old)),
        ) {
            *d += pn - po;
        }
        *pair_mult = *pair_mult / spectrum.mult(old) * spectrum.mult(new);
        *rate_sum += spectrum.bit_err_rate(new) - spectrum.bit_err_rate(old);
        *weight += (new != 0) as u32;
        *weight -= (old != 0) as u32;
    };

    match stratum {
        Stratum::Prefix { p, rep, second } => {
            set_digit(*p, *rep, &mut digits, &mut delta, &mut pair_mult, &mut rate_sum, &mut weight);
            if let Some(v) = second {
                set_digit(
                    *p + 1,
                    *v,
                    &mut digits,
                    &mut delta,
                    &mut pair_mult,
                    &mut rate_sum,
                    &mut weight,
                );
            }
            let base = p + 2;
            let tail = j_users.saturating_sub(base);
            visitor.visit(&VisitCtx {
                delta: &delta,
                digits: &digits,
                pair_mult,
                bit_err_rate_sum: rate_sum,
                weight,
            });
            if second.is_none() || tail == 0 {
                return;
            }
            let mut gray = GrayState::new(tail, b as u8);
            while let Some((slot, old, new)) = gray.step() {
                let user = base + slot;
                digits[user] = new;
                // Adjacent Gray transition: one table step, sign by direction.
                let (lo, up) = if new > old { (old, true) } else { (new, false) };
                let step = tables.step_slice(user, lo as usize);
                if up {
                    for (d, s) in delta.iter_mut().zip(step) {
                        *d += s;
                    }
                } else {
                    for (d, s) in delta.iter_mut().zip(step) {
                        *d -= s;
                    }
                }
                let (o, n) = (old as usize, new as usize);
                pair_mult = pair_mult / spectrum.mult(o) * spectrum.mult(n);
                rate_sum += spectrum.bit_err_rate(n) - spectrum.bit_err_rate(o);
                weight += (n != 0) as u32;
                weight -= (o != 0) as u32;
                visitor.visit(&VisitCtx {
                    delta: &delta,
                    digits: &digits,
                    pair_mult,
                    bit_err_rate_sum: rate_sum,
                    weight,
                });
            }
        }
        Stratum::Support { support, rep } => {
            set_digit(
                support[0],
                *rep,
                &mut digits,
                &mut delta,
                &mut pair_mult,
                &mut rate_sum,
                &mut weight,
            );
            // Remaining support users start at the first nonzero value.
            for &user in &support[1..] {
                set_digit(user, 1, &mut digits, &mut delta, &mut pair_mult, &mut rate_sum, &mut weight);
            }
            visitor.visit(&VisitCtx {
                delta: &delta,
                digits: &digits,
                pair_mult,
                bit_err_rate_sum: rate_sum,
                weight,
            });
            if support.len() == 1 {
                return;
            }
            // Tail digits run over the B-1 nonzero slots (value index g+1).
            let mut gray = GrayState::new(support.len() - 1, (b - 1) as u8);
            while let Some((slot, old, new)) = gray.step() {
                let user = support[slot + 1];
                let (o, n) = (old as usize + 1, new as usize + 1);
                digits[user] = n as u8;
                let (lo, up) = if n > o { (o, true) } else { (n, false) };
                let step = tables.step_slice(user, lo);
                if up {
                    for (d, s) in delta.iter_mut().zip(step) {
                        *d += s;
                    }
                } else {
                    for (d, s) in delta.iter_mut().zip(step) {
                        *d -= s;
                    }
                }
                pair_mult = pair_mult / spectrum.mult(o) * spectrum.mult(n);
                rate_sum += spectrum.bit_err_rate(n) - spectrum.bit_err_rate(o);
                visitor.visit(&VisitCtx {
                    delta: &delta,
                    digits: &digits,
                    pair_mult,
                    bit_err_rate_sum: rate_sum,
                    weight,
                });
            }
        }
    }
}
