//! Exact post-selected CHSH bounds for deterministic local strategies with
//! selective non-detection.
//!
//! Each station commits, per trial, to a rule mapping its two settings to
//! `+`, `-`, or silence. A run is then a probability mixture over the 81
//! joint rules, constrained to look like independent detector loss from the
//! outside: every setting registers singles at rate `eta` and every setting
//! pair registers coincidences at rate `eta^2`. The largest
//! coincidence-normalized CHSH combination such a mixture can fake is a small
//! linear program. It is solved here in exact rational arithmetic, so the
//! returned bounds carry no solver noise: the unit-efficiency bound is
//! exactly 2 and the bound is genuinely non-increasing in `eta`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::bell::CHSH_SIGNS;
use crate::error::{Error, Result};

type Rat = BigRational;

/// Distinct deterministic rules of one station.
pub const SIDE_STRATEGIES: usize = 9;
/// Distinct joint rules of both stations.
pub const JOINT_STRATEGIES: usize = SIDE_STRATEGIES * SIDE_STRATEGIES;

/// Setting pairs in the order `(a,b), (a,b'), (a',b), (a',b')`, matching the
/// sign convention of [`CHSH_SIGNS`].
const SETTING_PAIRS: [(usize, usize); 4] = [(0, 0), (0, 1), (1, 0), (1, 1)];

fn side_rule(idx: usize) -> [i8; 2] {
    let dec = |d: usize| -> i8 {
        match d {
            0 => 1,
            1 => -1,
            _ => 0,
        }
    };
    [dec(idx / 3), dec(idx % 3)]
}

/// One deterministic joint rule. Entries are `+1`, `-1`, or `0` for silence,
/// indexed by setting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalStrategy {
    pub a: [i8; 2],
    pub b: [i8; 2],
}

impl LocalStrategy {
    pub fn from_index(k: usize) -> Self {
        debug_assert!(k < JOINT_STRATEGIES);
        Self {
            a: side_rule(k / SIDE_STRATEGIES),
            b: side_rule(k % SIDE_STRATEGIES),
        }
    }

    pub fn index(&self) -> usize {
        let enc = |v: i8| -> usize {
            match v {
                1 => 0,
                -1 => 1,
                _ => 2,
            }
        };
        (enc(self.a[0]) * 3 + enc(self.a[1])) * SIDE_STRATEGIES + enc(self.b[0]) * 3 + enc(self.b[1])
    }

    pub fn declares_a(&self, setting: usize) -> bool {
        self.a[setting] != 0
    }

    pub fn declares_b(&self, setting: usize) -> bool {
        self.b[setting] != 0
    }

    /// Signed sum of this rule's CHSH contributions over the setting pairs
    /// where both sides declare.
    pub fn chsh_weight(&self) -> i32 {
        let mut w = 0;
        for (p, &(x, y)) in SETTING_PAIRS.iter().enumerate() {
            if self.declares_a(x) && self.declares_b(y) {
                w += CHSH_SIGNS[p] as i32 * self.a[x] as i32 * self.b[y] as i32;
            }
        }
        w
    }
}

/// Optional pinning of the four post-selected correlators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CorrelatorTargets {
    /// Maximize over all correlators the mixture can produce.
    Free,
    /// Require the post-selected correlators to equal these values, in pair
    /// order `(a,b), (a,b'), (a',b), (a',b')`.
    Fixed([f64; 4]),
}

/// One strategy of the optimal mixture with its probability weight.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StrategyWeight {
    pub strategy: LocalStrategy,
    pub weight: f64,
}

/// Result of the strategy optimization at one efficiency.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LhvBound {
    pub eta: f64,
    /// Largest post-selected `|S|` any local mixture can produce.
    pub max_s: f64,
    /// Mixture attaining the bound, heaviest strategies first.
    pub mixture: Vec<StrategyWeight>,
}

/// Largest post-selected CHSH value reachable by local strategy mixtures
/// whose declare rates mimic detection efficiency `eta`.
pub fn lhv_max_postselected_s(eta: f64, targets: &CorrelatorTargets) -> Result<LhvBound> {
    if !eta.is_finite() || !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Domain(format!("efficiency {eta} outside (0, 1]")));
    }
    let eta_r = Rat::from_float(eta)
        .ok_or_else(|| Error::Domain("efficiency is not a finite number".into()))?;
    let eta_sq = &eta_r * &eta_r;

    let strategies: Vec<LocalStrategy> =
        (0..JOINT_STRATEGIES).map(LocalStrategy::from_index).collect();

    let mut rows: Vec<Vec<Rat>> = Vec::new();
    let mut rhs: Vec<Rat> = Vec::new();

    rows.push(vec![Rat::one(); JOINT_STRATEGIES]);
    rhs.push(Rat::one());
    for setting in 0..2 {
        rows.push(strategies.iter().map(|s| indicator(s.declares_a(setting))).collect());
        rhs.push(eta_r.clone());
    }
    for setting in 0..2 {
        rows.push(strategies.iter().map(|s| indicator(s.declares_b(setting))).collect());
        rhs.push(eta_r.clone());
    }
    for &(x, y) in &SETTING_PAIRS {
        rows.push(
            strategies
                .iter()
                .map(|s| indicator(s.declares_a(x) && s.declares_b(y)))
                .collect(),
        );
        rhs.push(eta_sq.clone());
    }
    if let CorrelatorTargets::Fixed(values) = targets {
        for (p, &(x, y)) in SETTING_PAIRS.iter().enumerate() {
            let value = values[p];
            if !value.is_finite() || !(-1.0..=1.0).contains(&value) {
                return Err(Error::Domain(format!(
                    "correlator target {value} outside [-1, 1]"
                )));
            }
            let target = Rat::from_float(value)
                .ok_or_else(|| Error::Domain("correlator target is not finite".into()))?;
            rows.push(
                strategies
                    .iter()
                    .map(|s| {
                        if s.declares_a(x) && s.declares_b(y) {
                            Rat::from_integer(BigInt::from(s.a[x] as i32 * s.b[y] as i32))
                        } else {
                            Rat::zero()
                        }
                    })
                    .collect(),
            );
            rhs.push(&target * &eta_sq);
        }
    }

    let objective: Vec<Rat> = strategies
        .iter()
        .map(|s| Rat::from_integer(BigInt::from(s.chsh_weight())))
        .collect();

    let Some(solution) = simplex_max(rows, rhs, objective)? else {
        return Err(Error::Domain(format!(
            "no local strategy mixture matches the requested rates at efficiency {eta}"
        )));
    };

    let max_s = (&solution.objective / &eta_sq)
        .to_f64()
        .ok_or_else(|| Error::Domain("bound does not fit in a float".into()))?;
    let mut mixture: Vec<StrategyWeight> = solution
        .basic
        .iter()
        .filter(|(_, weight)| weight.is_positive())
        .map(|(k, weight)| StrategyWeight {
            strategy: strategies[*k],
            weight: weight.to_f64().unwrap_or(0.0),
        })
        .collect();
    mixture.sort_by(|l, r| {
        r.weight
            .partial_cmp(&l.weight)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then_with(|| l.strategy.index().cmp(&r.strategy.index()))
    });
    Ok(LhvBound { eta, max_s, mixture })
}

/// Outcome of the critical-efficiency search for a target `S`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CriticalEta {
    /// The target is within reach of local mixtures at every efficiency, so
    /// observing it never certifies a violation.
    NeverViolated,
    /// Efficiency above which the target exceeds every local mixture.
    Critical(f64),
    /// The target exceeds the algebraic maximum of the game.
    Unreachable,
}

/// Efficiency at which the local bound crosses `target_s`, resolved to 1e-6
/// by bisection on exact bound evaluations.
pub fn critical_eta_oracle(target_s: f64) -> Result<CriticalEta> {
    if !target_s.is_finite() {
        return Err(Error::Domain("target S must be finite".into()));
    }
    if target_s <= 2.0 {
        return Ok(CriticalEta::NeverViolated);
    }
    if target_s > 4.0 {
        return Ok(CriticalEta::Unreachable);
    }
    // The bound is 4 at 1/2 and 2 at 1, so a target in (2, 4] crosses inside.
    let mut lo = 0.5;
    let mut hi = 1.0;
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        let bound = lhv_max_postselected_s(mid, &CorrelatorTargets::Free)?;
        if bound.max_s >= target_s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CriticalEta::Critical(0.5 * (lo + hi)))
}

fn indicator(flag: bool) -> Rat {
    if flag {
        Rat::one()
    } else {
        Rat::zero()
    }
}

struct Solution {
    objective: Rat,
    basic: Vec<(usize, Rat)>,
}

const MAX_PIVOTS: usize = 20_000;

/// Maximizes `c . q` over `A q = b`, `q >= 0` in exact arithmetic via the
/// two-phase tableau simplex with Bland's rule. Returns `None` when the
/// constraints are infeasible.
fn simplex_max(a: Vec<Vec<Rat>>, b: Vec<Rat>, c: Vec<Rat>) -> Result<Option<Solution>> {
    let n = c.len();
    let m = a.len();
    debug_assert!(a.iter().all(|row| row.len() == n));
    debug_assert_eq!(b.len(), m);

    // Phase 1: append one artificial column per row and shrink their mass.
    let mut rows: Vec<Vec<Rat>> = Vec::with_capacity(m);
    let mut rhs: Vec<Rat> = Vec::with_capacity(m);
    for (i, (mut row, mut bi)) in a.into_iter().zip(b.into_iter()).enumerate() {
        if bi.is_negative() {
            for v in &mut row {
                *v = -&*v;
            }
            bi = -bi;
        }
        row.extend((0..m).map(|j| if j == i { Rat::one() } else { Rat::zero() }));
        rows.push(row);
        rhs.push(bi);
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut red = vec![Rat::zero(); n + m];
    let mut neg_infeasibility = Rat::zero();
    for i in 0..m {
        for j in 0..n {
            if !rows[i][j].is_zero() {
                red[j] += &rows[i][j];
            }
        }
        neg_infeasibility -= &rhs[i];
    }
    run_bland(&mut rows, &mut rhs, &mut red, &mut neg_infeasibility, &mut basis)?;
    if neg_infeasibility.is_negative() {
        return Ok(None);
    }

    // Pivot lingering zero-value artificials out of the basis; rows that
    // offer no pivot are redundant and dropped.
    let mut i = 0;
    while i < rows.len() {
        if basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| !rows[i][j].is_zero()) {
                pivot(&mut rows, &mut rhs, &mut red, &mut neg_infeasibility, &mut basis, i, j);
            } else {
                rows.remove(i);
                rhs.remove(i);
                basis.remove(i);
                continue;
            }
        }
        i += 1;
    }

    // Phase 2 on the original columns with the real objective.
    for row in &mut rows {
        row.truncate(n);
    }
    let cost = c;
    let mut red = cost.clone();
    let mut objective = Rat::zero();
    for i in 0..rows.len() {
        let cb = cost[basis[i]].clone();
        if cb.is_zero() {
            continue;
        }
        objective += &cb * &rhs[i];
        for j in 0..n {
            if !rows[i][j].is_zero() {
                red[j] -= &cb * &rows[i][j];
            }
        }
    }
    run_bland(&mut rows, &mut rhs, &mut red, &mut objective, &mut basis)?;

    let basic = basis.into_iter().zip(rhs.into_iter()).collect();
    Ok(Some(Solution { objective, basic }))
}

fn run_bland(
    rows: &mut Vec<Vec<Rat>>,
    rhs: &mut Vec<Rat>,
    red: &mut Vec<Rat>,
    objective: &mut Rat,
    basis: &mut Vec<usize>,
) -> Result<()> {
    let width = red.len();
    for _ in 0..MAX_PIVOTS {
        let Some(enter) = (0..width).find(|&j| red[j].is_positive()) else {
            return Ok(());
        };
        let mut leave: Option<usize> = None;
        let mut best: Option<Rat> = None;
        for i in 0..rows.len() {
            if !rows[i][enter].is_positive() {
                continue;
            }
            let ratio = &rhs[i] / &rows[i][enter];
            let better = match (&best, leave) {
                (None, _) => true,
                (Some(b), Some(l)) => ratio < *b || (ratio == *b && basis[i] < basis[l]),
                (Some(_), None) => unreachable!(),
            };
            if better {
                best = Some(ratio);
                leave = Some(i);
            }
        }
        let Some(leave) = leave else {
            return Err(Error::Domain("strategy polytope is unbounded".into()));
        };
        pivot(rows, rhs, red, objective, basis, leave, enter);
    }
    Err(Error::Domain("strategy search failed to converge".into()))
}

fn pivot(
    rows: &mut [Vec<Rat>],
    rhs: &mut [Rat],
    red: &mut [Rat],
    objective: &mut Rat,
    basis: &mut [usize],
    r: usize,
    s: usize,
) {
    let piv = rows[r][s].clone();
    if !piv.is_one() {
        for v in rows[r].iter_mut() {
            if !v.is_zero() {
                *v /= &piv;
            }
        }
        if !rhs[r].is_zero() {
            rhs[r] /= &piv;
        }
    }
    let prow = rows[r].clone();
    let prhs = rhs[r].clone();
    for i in 0..rows.len() {
        if i == r {
            continue;
        }
        let factor = rows[i][s].clone();
        if factor.is_zero() {
            continue;
        }
        for (v, p) in rows[i].iter_mut().zip(prow.iter()) {
            if !p.is_zero() {
                *v -= &factor * p;
            }
        }
        if !prhs.is_zero() {
            rhs[i] -= &factor * &prhs;
        }
    }
    let factor = red[s].clone();
    if !factor.is_zero() {
        for (v, p) in red.iter_mut().zip(prow.iter()) {
            if !p.is_zero() {
                *v -= &factor * p;
            }
        }
        if !prhs.is_zero() {
            *objective += &factor * &prhs;
        }
    }
    basis[r] = s;
}
