//! Step grids shared by the fixed-step integrators.

use crate::{Error, Result};

/// Breakpoints closer than this fraction of a step are merged.
const MERGE_FRACTION: f64 = 1e-6;

/// Breakpoints `s = t₀ < … < t_K = r` made of the uniform points `s + k·dt`
/// and every sync time inside `(s, r)`. Sync times win over uniform points
/// that fall within `1e-6·dt` of them, so partition times are hit exactly.
pub fn step_grid(s: f64, r: f64, dt: f64, sync: &[f64]) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Argument(format!(
            "time step must be positive, got {dt}"
        )));
    }
    if !(r > s) {
        return Err(Error::Argument(format!("empty time interval [{s}, {r}]")));
    }
    let merge = MERGE_FRACTION * dt;
    let mut pts: Vec<(f64, bool)> = Vec::new();
    let steps = ((r - s) / dt).ceil() as usize;
    for k in 0..=steps {
        let t = s + k as f64 * dt;
        if t < r - merge {
            pts.push((t, false));
        }
    }
    pts.push((r, true));
    pts[0].1 = true;
    for &t in sync {
        if t > s + merge && t < r - merge {
            pts.push((t, true));
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, bool)> = Vec::with_capacity(pts.len());
    for p in pts {
        match out.last_mut() {
            Some(last) if p.0 - last.0 <= merge => {
                if p.1 && !last.1 {
                    *last = p;
                }
            }
            _ => out.push(p),
        }
    }
    Ok(out.into_iter().map(|p| p.0).collect())
}

/// Index of a time in a sorted sample list, up to a relative tolerance.
pub fn find_time(times: &[f64], t: f64) -> Option<usize> {
    let tol = 1e-9 * (1.0 + t.abs());
    let k = times.partition_point(|&x| x < t - tol);
    (k < times.len() && (times[k] - t).abs() <= tol).then_some(k)
}

/// `n + 1` equally spaced points on `[s, r]`, endpoints exact.
pub fn uniform_points(s: f64, r: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..=n)
        .map(|k| {
            if k == n {
                r
            } else {
                s + (r - s) * k as f64 / n as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hits_sync_points_exactly() {
        let g = step_grid(0.0, 1.0, 0.3, &[0.5, 0.6]).unwrap();
        assert_eq!(g, vec![0.0, 0.3, 0.5, 0.6, 0.8999999999999999, 1.0]);
        let g = step_grid(0.0, 1.0, 0.1, &[0.30000000000000004]).unwrap();
        assert_eq!(g.len(), 11);
        assert!(g.contains(&0.30000000000000004));
        assert_eq!(*g.last().unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_steps() {
        assert!(step_grid(0.0, 1.0, 0.0, &[]).is_err());
        assert!(step_grid(1.0, 1.0, 0.1, &[]).is_err());
    }

    #[test]
    fn time_lookup() {
        let g = [0.0, 0.25, 0.5];
        assert_eq!(find_time(&g, 0.25 + 1e-14), Some(1));
        assert_eq!(find_time(&g, 0.3), None);
    }
}
