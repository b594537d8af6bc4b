//! Central finite-difference gradient checking.

use crate::rng::rng_from_seed;

/// Outcome of comparing analytic gradients to finite differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

/// Denominator floor for the relative error; below it the comparison is
/// effectively absolute.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, REL_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Checks `analytic[i]` against `(f(x + h e_i) - f(x - h e_i)) / 2h` for each
/// `i` in `indices`.
pub fn check<F>(mut f: F, x: &[f64], analytic: &[f64], indices: &[usize], h: f64) -> GradCheckReport
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: 0,
    };
    for &i in indices {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || report.checked == 0 {
            report.max_rel_error = err;
            report.worst_index = i;
        }
        report.checked += 1;
    }
    report
}

/// Up to `per_block` distinct coordinates from every block of a flat
/// parameter vector laid out as consecutive `block_sizes`, sorted.
pub fn sample_indices(block_sizes: &[usize], per_block: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::new();
    let mut offset = 0;
    for &size in block_sizes {
        if size <= per_block {
            out.extend(offset..offset + size);
        } else {
            let mut picked = rand::seq::index::sample(&mut rng, size, per_block).into_vec();
            picked.sort_unstable();
            out.extend(picked.into_iter().map(|i| offset + i));
        }
        offset += size;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_gradient_of_a_cubic() {
        let x = [0.5, -1.2, 2.0];
        let f = |v: &[f64]| v.iter().map(|a| a * a * a).sum::<f64>();
        let g: Vec<f64> = x.iter().map(|a| 3.0 * a * a).collect();
        let r = check(f, &x, &g, &[0, 1, 2], 1e-5);
        assert_eq!(r.checked, 3);
        assert!(r.max_rel_error < 1e-8);
    }

    #[test]
    fn sampled_indices_stay_in_their_blocks() {
        let idx = sample_indices(&[3, 100, 5], 4, 1);
        assert_eq!(&idx[..3], &[0, 1, 2]);
        assert_eq!(idx.len(), 3 + 4 + 4);
        assert!(idx[3..7].iter().all(|&i| (3..103).contains(&i)));
        assert!(idx[7..].iter().all(|&i| (103..108).contains(&i)));
    }

    #[test]
    fn detects_wrong_gradient() {
        let x = [1.0];
        let r = check(|v| v[0] * v[0], &x, &[3.0], &[0], 1e-5);
        assert!(r.max_rel_error > 0.3);
    }
}
