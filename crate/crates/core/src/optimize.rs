//! One-dimensional maximisation on a closed interval.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a maximum of `f` on `[lo, hi]`, stopping once the
/// bracket is narrower than `tol`. Ties move the bracket right, so plateaus
/// resolve toward the larger argument.
pub fn golden_section_max<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    if hi <= lo {
        return (lo, f(lo));
    }
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
        if x1 >= x2 {
            break;
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Scans `n_scan + 1` equally spaced points of `[lo, hi]`, then refines the
/// best one by golden-section search on its neighbouring cells. Returns
/// `(argmax, max)`, preferring the larger argument on ties.
pub fn scan_then_golden_max<F>(mut f: F, lo: f64, hi: f64, n_scan: usize, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    if hi <= lo {
        return (lo, f(lo));
    }
    let n = n_scan.max(1);
    let step = (hi - lo) / n as f64;
    let node = |k: usize| if k == n { hi } else { lo + k as f64 * step };
    let mut best_k = 0;
    let mut best = f(lo);
    for k in 1..=n {
        let v = f(node(k));
        if v >= best {
            best = v;
            best_k = k;
        }
    }
    let a = node(best_k.saturating_sub(1));
    let b = node((best_k + 1).min(n));
    let (y, v) = golden_section_max(&mut f, a, b, tol);
    if v > best || (v == best && y > node(best_k)) {
        (y, v)
    } else {
        (node(best_k), best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_peak() {
        let (y, v) = golden_section_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-10);
        assert!((y - 0.3).abs() < 1e-7);
        assert!(v <= 0.0 && v > -1e-14);
    }

    #[test]
    fn monotone_function_reaches_right_end() {
        let (y, _) = scan_then_golden_max(|x| x, 0.0, 2.0, 8, 1e-12);
        assert_eq!(y, 2.0);
    }

    #[test]
    fn plateau_resolves_right() {
        let (y, v) = scan_then_golden_max(|_| 1.0, 0.0, 1.0, 10, 1e-9);
        assert_eq!(y, 1.0);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn scan_avoids_local_trap() {
        // Local peak at 0.2 (value 1), global peak at 0.8 (value 2).
        let f =
            |x: f64| (-(x - 0.2).powi(2) * 400.0).exp() + 2.0 * (-(x - 0.8).powi(2) * 400.0).exp();
        let (y, v) = scan_then_golden_max(f, 0.0, 1.0, 50, 1e-10);
        assert!((y - 0.8).abs() < 1e-6);
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_interval() {
        assert_eq!(
            scan_then_golden_max(|x| x + 1.0, 0.5, 0.5, 10, 1e-9),
            (0.5, 1.5)
        );
    }
}
