//! One-dimensional minimization used by best-response providers without a
//! closed form.

const MAX_BISECTIONS: usize = 400;
const MAX_EXPANSIONS: usize = 200;

/// Root of a nondecreasing `df` on `[lo, hi]` with `df(lo) <= 0 <= df(hi)`,
/// bisected until the bracket stops shrinking.
pub fn bisect_root(df: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = df(mid);
        if v == 0.0 {
            return mid;
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // pick the endpoint with the smaller derivative magnitude
    if df(lo).abs() <= df(hi).abs() {
        lo
    } else {
        hi
    }
}

/// Minimizer of a strictly convex function given its derivative, searched
/// outward from `center`.
pub fn minimize_convex(df: impl Fn(f64) -> f64, center: f64) -> f64 {
    let d0 = df(center);
    if d0 == 0.0 {
        return center;
    }
    let mut step = 1.0f64.max(center.abs() * 1e-3);
    let (mut lo, mut hi) = if d0 < 0.0 { (center, center + step) } else { (center - step, center) };
    for _ in 0..MAX_EXPANSIONS {
        if df(lo) <= 0.0 && df(hi) >= 0.0 {
            break;
        }
        step *= 2.0;
        if d0 < 0.0 {
            lo = hi;
            hi = center + step;
        } else {
            hi = lo;
            lo = center - step;
        }
    }
    bisect_root(df, lo, hi)
}

/// Golden-section search for a unimodal `f` on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
        if c >= d {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Global minimizer of `f` on `[center - half_width, center + half_width]`:
/// a grid scan followed by derivative bisection (or golden section) in the
/// best grid cell. The grid has at most 2000 cells, so very wide windows
/// are scanned coarsely.
pub fn global_minimize(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    center: f64,
    half_width: f64,
    max_spacing: f64,
) -> f64 {
    let cells = ((2.0 * half_width / max_spacing).ceil() as usize).clamp(2, 2_000);
    let h = 2.0 * half_width / cells as f64;
    let lo0 = center - half_width;
    let (mut best_k, mut best_v) = (0, f64::INFINITY);
    for k in 0..=cells {
        let v = f(lo0 + h * k as f64);
        if v < best_v {
            best_v = v;
            best_k = k;
        }
    }
    let a = lo0 + h * best_k.saturating_sub(1) as f64;
    let b = lo0 + h * (best_k + 1).min(cells) as f64;
    let candidate = if df(a) <= 0.0 && df(b) >= 0.0 {
        bisect_root(&df, a, b)
    } else {
        golden_section(&f, a, b, 1e-14 * (1.0 + center.abs()))
    };
    let grid_best = lo0 + h * best_k as f64;
    if f(candidate) <= best_v {
        candidate
    } else {
        grid_best
    }
}
