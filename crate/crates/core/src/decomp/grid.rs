//! Lattice search over allocation sets with optional pattern-search polish.

use serde::{Deserialize, Serialize};

use super::{AllocationSet, DecompError, RiskAllocation};
use crate::risk::ExtendedValue;

/// Largest lattice enumerated before giving up.
pub const LATTICE_POINT_LIMIT: u128 = 20_000_000;

/// Pattern search stops once its step falls below this.
pub const REFINE_FLOOR: f64 = 1e-9;

const REFINE_EVALUATION_LIMIT: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Minimize,
    Maximize,
}

impl Direction {
    fn better(self, a: ExtendedValue, b: ExtendedValue) -> bool {
        match self {
            Direction::Minimize => a < b,
            Direction::Maximize => a > b,
        }
    }
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

pub(crate) fn divisions(step: f64) -> Result<usize, DecompError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(DecompError::InvalidStep(step));
    }
    Ok(((1.0 / step).round() as usize).max(1))
}

struct Incumbent<F> {
    objective: F,
    direction: Direction,
    best: Option<(ExtendedValue, Vec<f64>)>,
}

impl<F> Incumbent<F>
where
    F: FnMut(&[f64]) -> Result<ExtendedValue, DecompError>,
{
    /// Evaluates a feasible point and keeps it if strictly better, or equal
    /// and lexicographically smaller.
    fn offer(&mut self, w: &[f64]) -> Result<(), DecompError> {
        let v = (self.objective)(w)?;
        let replace = match &self.best {
            None => true,
            Some((bv, bw)) => self.direction.better(v, *bv) || (v == *bv && lex_less(w, bw)),
        };
        if replace {
            self.best = Some((v, w.to_vec()));
        }
        Ok(())
    }
}

/// Optimizes `objective` over the lattice `{k / n}` of the allocation set,
/// where `n = round(1 / step)`, then optionally polishes the incumbent by
/// pattern search down to [`REFINE_FLOOR`].
///
/// Ties on the lattice go to the lexicographically smallest allocation. The
/// seed point of the set (`p̂` on the simplex) is always tried, so sets that
/// contain no lattice point, such as the capped simplex at `α = 1`, still
/// return a feasible allocation.
pub fn simplex_grid_optimize<F>(
    objective: F,
    set: &AllocationSet,
    step: f64,
    direction: Direction,
    refine: bool,
) -> Result<(ExtendedValue, RiskAllocation), DecompError>
where
    F: FnMut(&[f64]) -> Result<ExtendedValue, DecompError>,
{
    let n = divisions(step)?;
    let dim = set.dim();
    if dim == 0 {
        return Err(DecompError::EmptyFeasibleSet);
    }
    let points = if set.on_simplex() {
        binomial((n + dim - 1) as u128, (dim - 1) as u128)
    } else {
        ((n + 1) as u128).saturating_pow(dim as u32)
    };
    if points > LATTICE_POINT_LIMIT {
        return Err(DecompError::LatticeTooLarge {
            divisions: n,
            points,
            limit: LATTICE_POINT_LIMIT,
        });
    }

    let mut inc = Incumbent {
        objective,
        direction,
        best: None,
    };
    let seed = set.seed();
    if set.contains(&seed) {
        inc.offer(&seed)?;
    }
    let mut k = vec![0usize; dim];
    let mut w = vec![0.0; dim];
    let nf = n as f64;
    if set.on_simplex() {
        // odometer over the first dim - 1 coordinates, last one takes the rest
        loop {
            let used: usize = k[..dim - 1].iter().sum();
            if used <= n {
                for i in 0..dim - 1 {
                    w[i] = k[i] as f64 / nf;
                }
                w[dim - 1] = (n - used) as f64 / nf;
                if set.contains(&w) {
                    inc.offer(&w)?;
                }
            }
            if !advance(&mut k[..dim - 1], n, true) {
                break;
            }
        }
    } else {
        loop {
            for i in 0..dim {
                w[i] = k[i] as f64 / nf;
            }
            if set.contains(&w) {
                inc.offer(&w)?;
            }
            if !advance(&mut k, n, false) {
                break;
            }
        }
    }

    let (mut value, mut best) = inc.best.take().ok_or(DecompError::EmptyFeasibleSet)?;
    if refine {
        (value, best) = pattern_search(&mut inc.objective, set, best, value, 1.0 / nf, direction)?;
    }
    Ok((
        value,
        RiskAllocation {
            weights: best,
            mode: set.mode.clone(),
        },
    ))
}

/// Increments `k` in lexicographic order with digits in `0..=n`; with
/// `bounded_sum` the digits also sum to at most `n`. Returns false after the
/// last point.
fn advance(k: &mut [usize], n: usize, bounded_sum: bool) -> bool {
    let mut i = k.len();
    while i > 0 {
        i -= 1;
        let room = if bounded_sum {
            k[..=i].iter().sum::<usize>() < n
        } else {
            k[i] < n
        };
        if room {
            k[i] += 1;
            for x in &mut k[i + 1..] {
                *x = 0;
            }
            return true;
        }
    }
    false
}

/// Coordinate pattern search from a feasible start. On the simplex a move
/// transfers mass between two coordinates, clipped to the caps; in the box
/// a move shifts one coordinate, clipped to `[0, 1]`. The step halves when
/// no move improves.
pub(crate) fn pattern_search<F>(
    objective: &mut F,
    set: &AllocationSet,
    start: Vec<f64>,
    start_value: ExtendedValue,
    initial_step: f64,
    direction: Direction,
) -> Result<(ExtendedValue, Vec<f64>), DecompError>
where
    F: FnMut(&[f64]) -> Result<ExtendedValue, DecompError>,
{
    let dim = set.dim();
    let (mut w, mut value) = (start, start_value);
    let mut step = initial_step;
    let mut evaluations = 0usize;
    while step >= REFINE_FLOOR && evaluations < REFINE_EVALUATION_LIMIT {
        let mut improved = false;
        let moves: Vec<(usize, Option<usize>, f64)> = if set.on_simplex() {
            (0..dim)
                .flat_map(|i| (0..dim).filter(move |&j| j != i).map(move |j| (i, Some(j), step)))
                .collect()
        } else {
            (0..dim)
                .flat_map(|i| [(i, None, step), (i, None, -step)])
                .collect()
        };
        for (i, j, delta) in moves {
            let Some(candidate) = moved(set, &w, i, j, delta) else {
                continue;
            };
            if !set.contains(&candidate) {
                continue;
            }
            evaluations += 1;
            let v = objective(&candidate)?;
            if direction.better(v, value) {
                w = candidate;
                value = v;
                improved = true;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok((value, w))
}

fn moved(set: &AllocationSet, w: &[f64], i: usize, j: Option<usize>, delta: f64) -> Option<Vec<f64>> {
    let mut out = w.to_vec();
    match j {
        Some(j) => {
            if delta <= 0.0 {
                return None;
            }
            // move mass from j to i
            let amount = delta.min(w[j]).min(set.cap(i) - w[i]);
            if amount <= 0.0 {
                return None;
            }
            out[i] += amount;
            out[j] = if amount == w[j] { 0.0 } else { w[j] - amount };
        }
        None => {
            let target = (w[i] + delta).clamp(0.0, 1.0);
            if target == w[i] {
                return None;
            }
            out[i] = target;
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::AllocationMode;
    use crate::risk::RiskLevel;

    fn lvl(a: f64) -> RiskLevel {
        RiskLevel::new(a).unwrap()
    }

    fn theta_pi1(w: &[f64]) -> Result<ExtendedValue, DecompError> {
        Ok(ExtendedValue::Finite(
            (10.0 - 60.0 * w[0]).max(90.0 * w[0] - 50.0),
        ))
    }

    #[test]
    fn finds_kink_of_piecewise_linear_objective() {
        let set = AllocationSet::new(AllocationMode::SimplexCapped, lvl(0.5), vec![0.5, 0.5]);
        let (v, alloc) = simplex_grid_optimize(theta_pi1, &set, 1e-3, Direction::Minimize, false).unwrap();
        assert!((v.finite().unwrap() + 14.0).abs() < 1e-6);
        assert!((alloc.weights[0] - 0.4).abs() < 1e-9);
    }

    #[test]
    fn refinement_reaches_off_lattice_kink() {
        let set = AllocationSet::new(AllocationMode::SimplexCapped, lvl(0.5), vec![0.5, 0.5]);
        let f = |w: &[f64]| Ok(ExtendedValue::Finite((w[0] - 0.123_456_789).abs()));
        let (v, alloc) = simplex_grid_optimize(f, &set, 0.1, Direction::Minimize, true).unwrap();
        assert!(v.finite().unwrap() < 2e-9);
        assert!((alloc.weights[0] - 0.123_456_789).abs() < 2e-9);
    }

    #[test]
    fn constant_objective_keeps_lexicographically_smallest_point() {
        let set = AllocationSet::new(AllocationMode::SimplexCapped, lvl(0.5), vec![0.3, 0.3, 0.4]);
        let (v, alloc) = simplex_grid_optimize(
            |_: &[f64]| Ok(ExtendedValue::Finite(7.0)),
            &set,
            0.1,
            Direction::Minimize,
            false,
        )
        .unwrap();
        assert_eq!(v, ExtendedValue::Finite(7.0));
        assert!(set.contains(&alloc.weights));
        // caps are 0.6, 0.6, 0.8 so the first coordinate is at least 0
        // only if the other two can absorb the rest
        assert_eq!(alloc.weights[0], 0.0);
        assert!((alloc.weights[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn empty_strict_box_is_reported() {
        let set = AllocationSet::new(AllocationMode::Box01StrictSum, lvl(0.0), vec![0.5, 0.5]);
        let err = simplex_grid_optimize(
            |_: &[f64]| Ok(ExtendedValue::Finite(0.0)),
            &set,
            0.1,
            Direction::Maximize,
            false,
        )
        .unwrap_err();
        assert_eq!(err, DecompError::EmptyFeasibleSet);
    }

    #[test]
    fn box_maximization_with_refinement() {
        let set = AllocationSet::new(AllocationMode::Box01StrictSum, lvl(0.5), vec![0.5, 0.5]);
        // maximize the sum subject to 0.5 (w0 + w1) < 0.5
        let f = |w: &[f64]| Ok(ExtendedValue::Finite(w[0] + w[1]));
        let (v, alloc) = simplex_grid_optimize(f, &set, 0.1, Direction::Maximize, true).unwrap();
        assert!(set.contains(&alloc.weights));
        assert!(v.finite().unwrap() > 1.0 - 1e-8);
    }

    #[test]
    fn anchor_used_when_lattice_misses_the_set() {
        let set = AllocationSet::new(AllocationMode::SimplexCapped, lvl(1.0), vec![0.3141, 0.6859]);
        let (_, alloc) = simplex_grid_optimize(
            |w: &[f64]| Ok(ExtendedValue::Finite(w[0])),
            &set,
            0.01,
            Direction::Minimize,
            false,
        )
        .unwrap();
        assert_eq!(alloc.weights, vec![0.3141, 0.6859]);
    }

    #[test]
    fn oversized_lattice_is_refused() {
        let set = AllocationSet::simplex(6);
        let err = simplex_grid_optimize(
            |_: &[f64]| Ok(ExtendedValue::Finite(0.0)),
            &set,
            1e-3,
            Direction::Minimize,
            false,
        )
        .unwrap_err();
        assert!(matches!(err, DecompError::LatticeTooLarge { .. }));
    }
}
