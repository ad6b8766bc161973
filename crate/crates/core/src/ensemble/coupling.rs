use std::collections::HashMap;
use std::str::FromStr;

use bigdecimal::{BigDecimal, One, ToPrimitive, Zero};
use num_traits::Signed;
use twofloat::consts;
use serde::Serialize;

use crate::error::{Error, Result};

/// Coupling schedule and per-coupling constants. Index `i` holds coupling
/// `k = i + 1`; `t` and `s` carry one extra entry so that
/// `u_k = t_{k+1} − s_{k+1} − t_k` is defined for the last coupling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingParams {
    pub zeta: Vec<f64>,
    pub c: Vec<f64>,
    pub lambda: f64,
    pub t: Vec<u64>,
    pub s: Vec<u64>,
    /// Recovery times `r_k`, checked against `u_k` when given.
    pub r: Option<Vec<u64>>,
}

/// Smallest admissible spacing between coupling times:
/// `⌈log(½ζ̃(1−ζ̃)/C_max) / log λ⌉ + s_max + n_p`.
pub fn delta_zero(zeta_min: f64, c_max: f64, lambda: f64, s_max: u64, n_p: u64) -> Result<u64> {
    check_domain(zeta_min, c_max, lambda)?;
    let x = (0.5 * zeta_min * (1.0 - zeta_min) / c_max).ln() / lambda.ln();
    Ok(x.ceil().max(0.0) as u64 + s_max + n_p)
}

fn check_domain(zeta: f64, c: f64, lambda: f64) -> Result<()> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::ParameterDomain(format!("zeta {zeta} outside (0, 1)")));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::ParameterDomain(format!("lambda {lambda} outside (0, 1)")));
    }
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::ParameterDomain(format!("C {c} must be finite and >= 1")));
    }
    Ok(())
}

impl CouplingParams {
    /// Constant `ζ`, `C`, `s`, `r` and coupling times `t_k = k·spacing`.
    pub fn uniform(zeta: f64, c: f64, lambda: f64, s: u64, r: u64, spacing: u64, k_max: usize) -> Result<Self> {
        let p = Self {
            zeta: vec![zeta; k_max],
            c: vec![c; k_max],
            lambda,
            t: (1..=k_max as u64 + 1).map(|k| k * spacing).collect(),
            s: vec![s; k_max + 1],
            r: Some(vec![r; k_max]),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn k_max(&self) -> usize {
        self.zeta.len()
    }

    /// `u_k` for `1 <= k <= k_max`.
    pub fn gaps(&self) -> Vec<u64> {
        (0..self.k_max()).map(|i| self.t[i + 1] - self.s[i + 1] - self.t[i]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k_max();
        if k == 0 || self.c.len() != k || self.t.len() != k + 1 || self.s.len() != k + 1 {
            return Err(Error::ParameterDomain(format!(
                "need k_max >= 1 entries of zeta and C and k_max + 1 of t and s, got {}, {}, {}, {}",
                k,
                self.c.len(),
                self.t.len(),
                self.s.len()
            )));
        }
        for (z, c) in self.zeta.iter().zip(&self.c) {
            check_domain(*z, *c, self.lambda)?;
        }
        for i in 0..k {
            if self.t[i + 1] <= self.t[i] {
                return Err(Error::ParameterDomain(format!("t not strictly increasing at k = {}", i + 1)));
            }
            if self.t[i + 1] < self.t[i] + self.s[i + 1] {
                return Err(Error::ParameterDomain(format!("negative gap u_{}", i + 1)));
            }
        }
        if let Some(r) = &self.r {
            if r.len() != k {
                return Err(Error::ParameterDomain("r must have k_max entries".into()));
            }
            for (i, (u, r)) in self.gaps().iter().zip(r).enumerate() {
                if u < r {
                    return Err(Error::ParameterDomain(format!("u_{} = {u} < r_{} = {r}", i + 1, i + 1)));
                }
            }
        }
        Ok(())
    }

    /// `max_q C · λ^{t_{k+1} − t_k − s_max} <= ½ζ̃(1−ζ̃)` for every spacing, exactly.
    fn spacing_condition(&self, pow: &mut Powers) -> bool {
        let zeta = dec(self.zeta.iter().copied().fold(1.0, f64::min));
        let c_max = dec(self.c.iter().copied().fold(0.0, f64::max));
        let s_max = *self.s.iter().max().unwrap_or(&0);
        let rhs = BigDecimal::from_str("0.5").unwrap() * &zeta * (BigDecimal::one() - &zeta);
        self.t.windows(2).all(|w| {
            let e = (w[1] - w[0]).saturating_sub(s_max);
            &c_max * pow.get(e) <= rhs
        })
    }
}

/// Exact decimal of the shortest representation of `x`.
fn dec(x: f64) -> BigDecimal {
    BigDecimal::from_str(&format!("{x}")).expect("finite float")
}

/// Cached powers `λ^m`.
struct Powers {
    base: BigDecimal,
    cache: HashMap<u64, BigDecimal>,
}

impl Powers {
    fn get(&mut self, m: u64) -> BigDecimal {
        if let Some(v) = self.cache.get(&m) {
            return v.clone();
        }
        let (mut acc, mut b, mut e) = (BigDecimal::one(), self.base.clone(), m);
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &b;
            }
            b = &b * &b;
            e >>= 1;
        }
        self.cache.insert(m, acc.clone());
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingReport {
    pub k: Vec<usize>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// `(1 − ½ζ̃)^k`.
    pub bound: Vec<f64>,
    /// `P_k <= (1 − ½ζ̃)^k`, decided exactly.
    pub within_bound: Vec<bool>,
    /// `P_k <= (1 − ½ζ̃)^{k−1}`, decided exactly.
    pub within_shifted_bound: Vec<bool>,
    /// `P_k <= Q_k` for every `k`, decided exactly.
    pub q_majorizes: bool,
    /// Uncoupled mass `μ_{t_k}(M)` right after coupling `k`.
    pub remainder: Vec<f64>,
    /// Coupled mass `ζ_k P_k` at time `t_k`.
    pub coupled: Vec<f64>,
    /// Largest spacing between coupling times, including `t_1`.
    pub delta: u64,
    /// Coupled and uncoupled mass within the exponential bounds in `n = t_k`.
    pub mass_bounds_ok: Vec<bool>,
    /// Spacings satisfy the hypothesis of the exponential bound.
    pub spacing_condition: bool,
    pub zeta_min: f64,
}

/// Iterates the proper-mass recursion and its majorant in exact decimal
/// arithmetic. With `G_k = Σ_{j<k} C_j λ^{t_{k−1}−t_j} P_j` both are linear
/// per step:
/// `P_{k+1} = (1 − ζ_k − C_k λ^{u_k}) P_k + λ^{u_{k−1}} (1 − λ^{u_k+s_k}) G_k`,
/// `G_{k+1} = λ^{t_k − t_{k−1}} G_k + C_k P_k`.
pub fn coupling_recursion(params: &CouplingParams) -> Result<CouplingReport> {
    params.validate()?;
    let k_max = params.k_max();
    let mut pow = Powers {
        base: dec(params.lambda),
        cache: HashMap::new(),
    };
    let zeta_min_f = params.zeta.iter().copied().fold(1.0, f64::min);
    let zeta_min = dec(zeta_min_f);
    let rate = BigDecimal::one() - BigDecimal::from_str("0.5").unwrap() * &zeta_min;
    let gaps = params.gaps();
    // the eligible mass left uncoupled must stay nonnegative
    for (i, &u) in gaps.iter().enumerate() {
        if dec(params.zeta[i]) + dec(params.c[i]) * pow.get(u) > BigDecimal::one() {
            return Err(Error::ParameterDomain(format!(
                "zeta_{k} + C_{k} lambda^u_{k} exceeds 1 at k = {k} (gap {u})",
                k = i + 1
            )));
        }
    }
    let delta = params
        .t
        .windows(2)
        .map(|w| w[1] - w[0])
        .chain([params.t[0]])
        .max()
        .unwrap_or(0);

    let (mut p, mut q) = (BigDecimal::one(), BigDecimal::one());
    let (mut g, mut h) = (BigDecimal::zero(), BigDecimal::zero());
    let mut shifted = BigDecimal::one();
    let mut report = CouplingReport {
        k: Vec::with_capacity(k_max),
        p: Vec::with_capacity(k_max),
        q: Vec::with_capacity(k_max),
        bound: Vec::with_capacity(k_max),
        within_bound: Vec::with_capacity(k_max),
        within_shifted_bound: Vec::with_capacity(k_max),
        q_majorizes: true,
        remainder: Vec::with_capacity(k_max),
        coupled: Vec::with_capacity(k_max),
        delta,
        mass_bounds_ok: Vec::with_capacity(k_max),
        spacing_condition: params.spacing_condition(&mut pow),
        zeta_min: zeta_min_f,
    };
    for i in 0..k_max {
        let bound = &shifted * &rate;
        let (zeta, c) = (dec(params.zeta[i]), dec(params.c[i]));
        // λ^{u_{k−1}} G_k, zero for k = 1
        let carried_p = if i == 0 { BigDecimal::zero() } else { pow.get(gaps[i - 1]) * &g };
        let carried_q = if i == 0 { BigDecimal::zero() } else { pow.get(gaps[i - 1]) * &h };
        let remainder = (BigDecimal::one() - &zeta) * &p + &carried_p;

        report.k.push(i + 1);
        report.p.push(to_f64(&p));
        report.q.push(to_f64(&q));
        report.bound.push(to_f64(&bound));
        report.within_bound.push(p <= bound);
        report.within_shifted_bound.push(p <= shifted);
        report.q_majorizes &= p <= q;
        let coupled = to_f64(&zeta) * to_f64(&p);
        let rem = to_f64(&remainder);
        let n = params.t[i] as f64 / delta as f64;
        let base = 1.0 - 0.5 * zeta_min_f;
        let slack = 1.0 + 1e-12;
        report
            .mass_bounds_ok
            .push(coupled <= zeta_min_f * base.powf(n) * slack && rem <= base.powf(n - 1.0) * slack);
        report.remainder.push(rem);
        report.coupled.push(coupled);

        let u = gaps[i];
        let lu = pow.get(u);
        let recovered = BigDecimal::one() - pow.get(u + params.s[i]);
        let p_next = (BigDecimal::one() - &zeta - &c * &lu) * &p + &recovered * &carried_p;
        let q_next = (BigDecimal::one() - &zeta_min) * &q + &carried_q;
        let step = if i == 0 { 0 } else { params.t[i] - params.t[i - 1] };
        g = pow.get(step) * &g + &c * &p;
        h = pow.get(step) * &h + &c * &q;
        p = p_next;
        q = q_next;
        shifted = bound;
    }
    Ok(report)
}

/// Nearest-ish `f64` of a long decimal, through its logarithm; the library
/// conversion goes through a decimal string and is quadratic in the length.
fn to_f64(x: &BigDecimal) -> f64 {
    let (m, scale) = x.as_bigint_and_exponent();
    if m.bits() < 1024 {
        return x.to_f64().unwrap_or(f64::NAN);
    }
    let shift = m.bits().saturating_sub(64);
    let top = (m.magnitude() >> shift).to_u64().expect("64 bits") as f64;
    let log = consts::LN_2 * shift as f64 - consts::LN_10 * scale as f64 + top.ln();
    let v = log.hi().exp() * (1.0 + log.lo());
    if m.is_negative() {
        -v
    } else {
        v
    }
}
