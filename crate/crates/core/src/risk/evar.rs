//! Entropic value at risk.
//!
//! The primal `sup_{β>0} -(1/β) log(E[exp(-β x)] / α)` is maximized by
//! golden-section search over `log β`. In `t = 1/β` the objective is the
//! negative of a perspective function, hence concave, so it is unimodal in
//! `log β` as well.
//!
//! Outcomes are shifted by their minimum before exponentiation. With
//! `y = x - min x >= 0` every exponent is non-positive and the shifted
//! moment generating function is bounded below by the mass of the minimum
//! atom, so neither overflow nor `log 0` can occur.
//!
//! The optional dual check solves `min { ξᵀx : KL(ξ || q) <= -log α }` over
//! the exponentially tilted family `ξ ∝ q exp(-β x)` by bisecting on the
//! divergence constraint, which is a different computation from the primal
//! maximization.

use serde::{Deserialize, Serialize};

use super::{ExtendedValue, FiniteDistribution, RiskError, RiskLevel};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvarOptions {
    /// Initial lower β bound, in units of `1 / range(x)`.
    pub beta_lower: f64,
    /// Initial upper β bound, in units of `1 / range(x)`.
    pub beta_upper: f64,
    /// Width of the final bracket on `log β`.
    pub beta_tolerance: f64,
    /// Number of times the bracket may be doubled outward.
    pub max_expansions: usize,
    /// Compute `dual_value` as well.
    pub dual_check: bool,
}

impl Default for EvarOptions {
    fn default() -> Self {
        Self {
            beta_lower: 1e-8,
            beta_upper: 1e4,
            beta_tolerance: 1e-10,
            max_expansions: 256,
            dual_check: false,
        }
    }
}

impl EvarOptions {
    pub fn with_dual_check(mut self) -> Self {
        self.dual_check = true;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvarResult {
    pub value: ExtendedValue,
    /// Maximizing β of the primal; absent at the closed-form endpoints and
    /// when the supremum is approached only as β grows without bound.
    pub beta_star: Option<f64>,
    pub dual_value: Option<f64>,
}

/// Shifted atoms `(y, p)` with `y = x - min x`.
struct Shifted {
    base: f64,
    atoms: Vec<(f64, f64)>,
    range: f64,
}

impl Shifted {
    fn new(d: &FiniteDistribution) -> Self {
        let base = d.min_outcome();
        Self {
            base,
            atoms: d.atoms().map(|(x, p)| (x - base, p)).collect(),
            range: d.range(),
        }
    }

    /// `log E[exp(-β y)]`.
    fn log_mgf(&self, beta: f64) -> f64 {
        self.atoms
            .iter()
            .map(|(y, p)| p * (-beta * y).exp())
            .sum::<f64>()
            .ln()
    }

    /// Primal objective at `β = exp(u)`, in the original units.
    fn primal(&self, u: f64, log_alpha: f64) -> f64 {
        let beta = u.exp();
        self.base - (self.log_mgf(beta) - log_alpha) / beta
    }

    /// Tilted distribution `ξ_β` as `(KL(ξ_β || q), E_ξ[y])`.
    fn tilted(&self, beta: f64) -> (f64, f64) {
        let weights: Vec<f64> = self.atoms.iter().map(|(y, p)| p * (-beta * y).exp()).collect();
        let z: f64 = weights.iter().sum();
        let mut mean = 0.0;
        let mut kl = 0.0;
        for ((y, p), w) in self.atoms.iter().zip(&weights) {
            let xi = w / z;
            if xi > 0.0 {
                mean += xi * y;
                kl += xi * (xi / p).ln();
            }
        }
        (kl.max(0.0), mean)
    }
}

/// Entropic value at risk with the default options.
pub fn evar(d: &FiniteDistribution, alpha: RiskLevel) -> Result<ExtendedValue, RiskError> {
    Ok(evar_with(d, alpha, &EvarOptions::default())?.value)
}

pub fn evar_with(
    d: &FiniteDistribution,
    alpha: RiskLevel,
    opts: &EvarOptions,
) -> Result<EvarResult, RiskError> {
    let d = d.normalized();
    let a = alpha.get();
    let closed = |v: f64| EvarResult {
        value: ExtendedValue::Finite(v),
        beta_star: None,
        dual_value: opts.dual_check.then_some(v),
    };
    if d.len() == 1 {
        return Ok(closed(d.outcomes()[0]));
    }
    if a >= 1.0 {
        return Ok(closed(d.mean()));
    }
    if a <= 0.0 {
        return Ok(closed(d.min_outcome()));
    }
    // If the minimum atom alone carries at least α of the mass, the KL ball
    // contains the point mass at the minimum.
    let p_min = d.probabilities()[0];
    if p_min >= a {
        return Ok(closed(d.min_outcome()));
    }

    let shifted = Shifted::new(&d);
    let log_alpha = a.ln();
    let f = |u: f64| shifted.primal(u, log_alpha);

    let mut lo = (opts.beta_lower / shifted.range).ln();
    let mut hi = (opts.beta_upper / shifted.range).ln();
    let step = std::f64::consts::LN_2;
    let mut expansions = 0;
    while f(hi) > f(hi - step) {
        hi += step;
        expansions += 1;
        if expansions > opts.max_expansions {
            return Err(RiskError::BracketFailure { beta: hi.exp() });
        }
    }
    while f(lo) > f(lo + step) {
        lo -= step;
        expansions += 1;
        if expansions > opts.max_expansions {
            return Err(RiskError::BracketFailure { beta: lo.exp() });
        }
    }

    let (u_star, value) = golden_section_max(&f, lo, hi, opts.beta_tolerance);
    let dual_value = if opts.dual_check {
        Some(kl_ball_dual(&shifted, -log_alpha, p_min))
    } else {
        None
    };
    Ok(EvarResult {
        value: ExtendedValue::Finite(value),
        beta_star: Some(u_star.exp()),
        dual_value,
    })
}

/// Maximizes a unimodal `f` on `[lo, hi]`; returns `(argmax, max)`.
pub(crate) fn golden_section_max<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let candidates = [(a, f(a)), (c, fc), (d, fd), (b, f(b))];
    candidates.into_iter().fold(
        (a, f64::NEG_INFINITY),
        |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        },
    )
}

/// `min ξᵀx` over the KL ball of the given radius, via the tilted family.
/// Requires `p_min < exp(-radius)` so that the constraint binds.
fn kl_ball_dual(shifted: &Shifted, radius: f64, p_min: f64) -> f64 {
    debug_assert!(-p_min.ln() > radius);
    // KL(ξ_β) increases from 0 to -log p_min as β goes from 0 to infinity.
    let mut lo = (1e-12 / shifted.range).ln();
    let mut hi = (1.0 / shifted.range).ln();
    while shifted.tilted(hi.exp()).0 < radius {
        hi += 1.0;
        if hi > 700.0 {
            break;
        }
    }
    while shifted.tilted(lo.exp()).0 > radius && lo > -700.0 {
        lo -= 1.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if shifted.tilted(mid.exp()).0 < radius {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    let (_, mean) = shifted.tilted((0.5 * (lo + hi)).exp());
    shifted.base + mean
}
