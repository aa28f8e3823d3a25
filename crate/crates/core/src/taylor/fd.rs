//! Central finite differences for evaluators that only accept `f64`.
//!
//! Steps scale with the total derivative order `m` of the requested partial:
//! `h = ε^(1/(m+2)) · max(1, |v|)`.

use super::{DiffError, Jet, MAX_ORDER};

fn step(order: usize, v: f64) -> f64 {
    f64::EPSILON.powf(1.0 / (order as f64 + 2.0)) * v.abs().max(1.0)
}

/// Stencil offsets (in units of h) and weights for a one-dimensional central
/// difference of the given derivative count, already divided by the
/// denominator's numeric factor.
fn stencil(count: usize) -> &'static [(f64, f64)] {
    match count {
        0 => &[(0.0, 1.0)],
        1 => &[(1.0, 0.5), (-1.0, -0.5)],
        2 => &[(1.0, 1.0), (0.0, -2.0), (-1.0, 1.0)],
        3 => &[(2.0, 0.5), (1.0, -1.0), (-1.0, 1.0), (-2.0, -0.5)],
        _ => unreachable!("derivative count above 3"),
    }
}

/// Mixed partial of `f` at `point` by a tensor-product central stencil.
pub fn fd_partial<F>(f: &F, point: &[f64], multi_index: &[usize]) -> Result<f64, DiffError>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    let n = point.len();
    if multi_index.len() > MAX_ORDER || multi_index.iter().any(|&i| i >= n) {
        return Err(DiffError::InvalidIndex {
            index: multi_index.to_vec(),
            nvars: n,
        });
    }
    let order = multi_index.len();
    if order == 0 {
        let v = f(point);
        return if v.is_finite() {
            Ok(v)
        } else {
            Err(DiffError::NonFinite { point: point.to_vec() })
        };
    }
    let mut counts = vec![0usize; n];
    for &i in multi_index {
        counts[i] += 1;
    }
    let active: Vec<usize> = (0..n).filter(|&i| counts[i] > 0).collect();
    let steps: Vec<f64> = (0..n).map(|i| step(order, point[i])).collect();

    // Walk the tensor product of the per-variable stencils.
    let mut total = 0.0;
    let mut cursor = vec![0usize; active.len()];
    let mut probe = point.to_vec();
    loop {
        let mut weight = 1.0;
        probe.copy_from_slice(point);
        for (slot, &var) in active.iter().enumerate() {
            let (offset, w) = stencil(counts[var])[cursor[slot]];
            probe[var] = point[var] + offset * steps[var];
            weight *= w;
        }
        let v = f(&probe);
        if !v.is_finite() {
            return Err(DiffError::NonFinite { point: probe });
        }
        total += weight * v;

        let mut slot = 0;
        loop {
            if slot == active.len() {
                let denom: f64 = active
                    .iter()
                    .map(|&var| steps[var].powi(counts[var] as i32))
                    .product();
                return Ok(total / denom);
            }
            cursor[slot] += 1;
            if cursor[slot] < stencil(counts[active[slot]]).len() {
                break;
            }
            cursor[slot] = 0;
            slot += 1;
        }
    }
}

/// Finite-difference counterpart of [`super::evaluate_jet`].
pub fn fd_jet<F>(f: &F, point: &[f64], order: usize) -> Result<Jet, DiffError>
where
    F: Fn(&[f64]) -> f64 + ?Sized,
{
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(DiffError::InvalidOrder(order));
    }
    let n = point.len();
    let mut jet = Jet::zeros(fd_partial(f, point, &[])?, n, order);
    for i in 0..n {
        jet.first[i] = fd_partial(f, point, &[i])?;
    }
    if order >= 2 {
        for i in 0..n {
            for j in i..n {
                jet.set_second(i, j, fd_partial(f, point, &[i, j])?);
            }
        }
    }
    if order >= 3 {
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    jet.set_third(i, j, k, fd_partial(f, point, &[i, j, k])?);
                }
            }
        }
    }
    Ok(jet)
}
