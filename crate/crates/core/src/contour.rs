//! Energy and momentum conservation for the decay of one quasiparticle into
//! two, `omega_k = omega_q + omega_{k-q}`, traced in the `(k, q)` plane.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bogoliubov::Dispersion;
use crate::grid::wrap;

/// Largest admissible `|mismatch|` at a stored contour point.
pub const CONTOUR_TOL: f64 = 1e-8;

/// `omega_k - omega_q - omega_{k-q}`.
#[inline]
pub fn mismatch(disp: &Dispersion, k: f64, q: f64) -> f64 {
    disp.omega(wrap(k)) - disp.omega(wrap(q)) - disp.omega(wrap(k - q))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extremal {
    pub q_min: f64,
    pub k_min: f64,
    pub q_max: f64,
    pub k_max: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResonanceContour {
    /// Connected pieces of the zero set, each an ordered chain of `(k, q)`.
    pub polylines: Vec<Vec<(f64, f64)>>,
    pub extremal: Option<Extremal>,
}

impl ResonanceContour {
    pub fn is_empty(&self) -> bool {
        self.polylines.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.polylines.iter().flatten().copied()
    }

    pub fn len(&self) -> usize {
        self.polylines.iter().map(Vec::len).sum()
    }

    /// Coarse extrema of the stored points, unrefined.
    fn point_extrema(&self) -> Option<Extremal> {
        let mut it = self.points();
        let (k0, q0) = it.next()?;
        let mut e = Extremal {
            q_min: q0,
            k_min: k0,
            q_max: q0,
            k_max: k0,
        };
        for (k, q) in it {
            e.q_min = e.q_min.min(q);
            e.q_max = e.q_max.max(q);
            e.k_min = e.k_min.min(k);
            e.k_max = e.k_max.max(k);
        }
        Some(e)
    }
}

/// Root of `f` on `[a, b]` with `f(a)`, `f(b)` of opposite sign, refined
/// until `|f| < tol` or the bracket collapses.
fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let mut best = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a.min(b) || m >= a.max(b) {
            break;
        }
        let fm = f(m);
        if fm.abs() < best.1.abs() {
            best = (m, fm);
        }
        if fm.abs() < tol {
            break;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    best.0
}

/// Maximum of `f` on `[a, b]` by a dense scan followed by golden-section
/// refinement around the best sample.
fn maximize(f: impl Fn(f64) -> f64, a: f64, b: f64, samples: usize) -> (f64, f64) {
    let h = (b - a) / samples as f64;
    let (mut xb, mut fb) = (a, f(a));
    for i in 1..=samples {
        let x = a + i as f64 * h;
        let fx = f(x);
        if fx > fb {
            xb = x;
            fb = fx;
        }
    }
    let (mut lo, mut hi) = ((xb - h).max(a), (xb + h).min(b));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-12 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
    }
    let xm = 0.5 * (lo + hi);
    let fm = f(xm);
    [(xb, fb), (xm, fm)]
        .into_iter()
        .fold((xb, fb), |acc, c| if c.1 > acc.1 { c } else { acc })
}

type EdgeKey = (usize, usize, u8);

/// Zero set of [`mismatch`] on `(0, pi]^2` by marching squares on a
/// `grid_n x grid_n` lattice with bisection along every crossed edge.
pub fn resonance_contours(disp: &Dispersion, grid_n: usize) -> ResonanceContour {
    let n = grid_n.max(2);
    let mut contour = ResonanceContour {
        polylines: trace_zero_set(disp, n, 0.0, PI),
        extremal: None,
    };
    contour.extremal = refine_extremal(disp, &contour, PI / n as f64);
    contour
}

/// Zero set over the whole zone `[-pi, pi]^2`, including the pieces related
/// to the positive quadrant by reflection and lattice periodicity.
pub fn resonance_contours_full_zone(disp: &Dispersion, grid_n: usize) -> Vec<Vec<(f64, f64)>> {
    trace_zero_set(disp, grid_n.max(2), -PI, PI)
}

/// Marching squares over the square `[lo, hi]^2` with `n` cells per side.
fn trace_zero_set(disp: &Dispersion, n: usize, lo: f64, hi: f64) -> Vec<Vec<(f64, f64)>> {
    let h = (hi - lo) / n as f64;
    let x = |i: usize| lo + i as f64 * h;
    let values: Vec<Vec<f64>> = (0..=n)
        .into_par_iter()
        .map(|i| (0..=n).map(|j| mismatch(disp, x(i), x(j))).collect())
        .collect();
    let sign = |i: usize, j: usize| values[i][j] > 0.0;

    let mut crossings: HashMap<EdgeKey, (f64, f64)> = HashMap::new();
    let mut crossing = |key: EdgeKey| -> (f64, f64) {
        *crossings.entry(key).or_insert_with(|| {
            let (i, j, dir) = key;
            if dir == 0 {
                let q = x(j);
                (bisect(|k| mismatch(disp, k, q), x(i), x(i + 1), 0.1 * CONTOUR_TOL), q)
            } else {
                let k = x(i);
                (k, bisect(|q| mismatch(disp, k, q), x(j), x(j + 1), 0.1 * CONTOUR_TOL))
            }
        })
    };

    // Edges of cell (i, j): bottom (i,j,0), top (i,j+1,0), left (i,j,1), right (i+1,j,1).
    let mut segments: Vec<(EdgeKey, EdgeKey)> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let corners = [sign(i, j), sign(i + 1, j), sign(i + 1, j + 1), sign(i, j + 1)];
            if corners.iter().all(|&s| s == corners[0]) {
                continue;
            }
            let edges: [EdgeKey; 4] = [(i, j, 0), (i + 1, j, 1), (i, j + 1, 0), (i, j, 1)];
            let crossed: Vec<EdgeKey> = (0..4)
                .filter(|&e| corners[e] != corners[(e + 1) % 4])
                .map(|e| edges[e])
                .collect();
            match crossed.len() {
                2 => segments.push((crossed[0], crossed[1])),
                4 => {
                    let centre = mismatch(disp, x(i) + 0.5 * h, x(j) + 0.5 * h) > 0.0;
                    // Pair each crossing with its neighbour so the corner
                    // sharing the centre's sign stays connected.
                    if centre == corners[0] {
                        segments.push((crossed[0], crossed[1]));
                        segments.push((crossed[2], crossed[3]));
                    } else {
                        segments.push((crossed[3], crossed[0]));
                        segments.push((crossed[1], crossed[2]));
                    }
                }
                _ => {}
            }
        }
    }

    chain_segments(&segments)
        .into_iter()
        .map(|chain| chain.into_iter().map(&mut crossing).collect())
        .collect()
}

/// Join segments sharing an edge into maximal chains, deterministically.
fn chain_segments(segments: &[(EdgeKey, EdgeKey)]) -> Vec<Vec<EdgeKey>> {
    let mut adj: HashMap<EdgeKey, Vec<usize>> = HashMap::new();
    for (s, &(a, b)) in segments.iter().enumerate() {
        adj.entry(a).or_default().push(s);
        adj.entry(b).or_default().push(s);
    }
    let mut used = vec![false; segments.len()];
    let mut chains = Vec::new();
    let walk = |start: EdgeKey, first: usize, used: &mut Vec<bool>| {
        let mut chain = vec![start];
        let (mut at, mut seg) = (start, first);
        loop {
            used[seg] = true;
            let (a, b) = segments[seg];
            let next = if a == at { b } else { a };
            chain.push(next);
            match adj[&next].iter().find(|&&s| !used[s]) {
                Some(&s) => {
                    at = next;
                    seg = s;
                }
                None => break,
            }
        }
        chain
    };
    // Open chains start at an end point, closed loops anywhere.
    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.sort_by_key(|&s| {
        let (a, b) = segments[s];
        let open = adj[&a].len() == 1 || adj[&b].len() == 1;
        (!open, s)
    });
    for s in order {
        if used[s] {
            continue;
        }
        let (a, b) = segments[s];
        let start = if adj[&b].len() == 1 && adj[&a].len() != 1 { b } else { a };
        chains.push(walk(start, s, &mut used));
    }
    chains
}

/// `max_q mismatch(k, q)`: the contour reaches `k` iff this is non-negative.
fn best_over_q(disp: &Dispersion, k: f64) -> f64 {
    // symmetric about q = k/2
    maximize(|q| mismatch(disp, k, q), 0.0, 0.5 * k, 64).1
}

/// `max_k mismatch(k, q)` over `k` in `[q, pi]`.
fn best_over_k(disp: &Dispersion, q: f64) -> f64 {
    maximize(|k| mismatch(disp, k, q), q, PI, 128).1
}

fn refine_extremal(disp: &Dispersion, contour: &ResonanceContour, h: f64) -> Option<Extremal> {
    let coarse = contour.point_extrema()?;
    // The coarse extremum lies within a cell of the true one: step outward
    // until the profile turns negative, then bisect its sign change.
    let edge = |profile: &dyn Fn(f64) -> f64, guess: f64, outward: f64| -> f64 {
        let mut inside = guess;
        if profile(inside) < 0.0 {
            inside = (guess - outward * h).clamp(0.0, PI);
        }
        let mut out = guess;
        for _ in 0..16 {
            out = (out + outward * h).clamp(0.0, PI);
            if profile(out) < 0.0 {
                return bisect(profile, inside, out, 0.0);
            }
            if out == PI || out == 0.0 {
                return out;
            }
            inside = out;
        }
        out
    };
    let g = |k: f64| best_over_q(disp, k);
    let hq = |q: f64| best_over_k(disp, q);
    Some(Extremal {
        k_min: edge(&g, coarse.k_min, -1.0),
        k_max: edge(&g, coarse.k_max, 1.0),
        q_min: edge(&hq, coarse.q_min, -1.0),
        q_max: edge(&hq, coarse.q_max, 1.0),
    })
}

/// Extremal momenta of the resonance contour, or `None` when no decay
/// channel is open.
pub fn extremal_momenta(disp: &Dispersion) -> Option<Extremal> {
    resonance_contours(disp, 512).extremal
}

/// Largest mismatch over the whole zone; positive iff a channel is open.
pub fn max_mismatch(disp: &Dispersion) -> f64 {
    maximize(|k| best_over_q(disp, k), 0.0, PI, 256).1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub extremal: Option<Extremal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetuningSweep {
    pub rows: Vec<SweepRow>,
    /// Detuning at which the last channel closes.
    pub delta0: Option<f64>,
}

/// Detuning below which no decay channel exists at the given `J` and
/// `U n0`, to `tol`. `None` if channels stay open down to `floor`.
pub fn critical_detuning(j: f64, un0: f64, floor: f64, tol: f64) -> Option<f64> {
    let open = |delta: f64| max_mismatch(&Dispersion::new(delta, j, un0)) > 0.0;
    let mut hi = -1e-9;
    if !open(hi) {
        return Some(0.0);
    }
    let mut lo = -1.0;
    while open(lo) {
        lo *= 2.0;
        if lo < floor {
            return None;
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if open(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Extremal momenta at `steps` detunings spread evenly over `range`
/// (inclusive), together with the critical detuning.
pub fn sweep_detuning(j: f64, un0: f64, range: (f64, f64), steps: usize) -> DetuningSweep {
    let (a, b) = range;
    let rows = (0..steps)
        .into_par_iter()
        .map(|s| {
            let t = if steps > 1 { s as f64 / (steps - 1) as f64 } else { 0.0 };
            let delta = a + t * (b - a);
            SweepRow {
                delta,
                extremal: extremal_momenta(&Dispersion::new(delta, j, un0)),
            }
        })
        .collect();
    DetuningSweep {
        rows,
        delta0: critical_detuning(j, un0, -1e6, 1e-4),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn standard() -> Dispersion {
        Dispersion::new(-10.0, 30.0, 10.0)
    }

    #[test]
    fn mismatch_edges_and_symmetry() {
        let d = standard();
        let gap = d.omega(0.0);
        for &k in &[0.3, 1.0, 2.5, PI] {
            assert!((mismatch(&d, k, 0.0) + gap).abs() < 1e-12);
            assert!((mismatch(&d, k, k) + gap).abs() < 1e-12);
            for &q in &[0.1, 0.7, 1.9] {
                assert!((mismatch(&d, k, q) - mismatch(&d, k, k - q)).abs() < 1e-12);
                assert!((mismatch(&d, -k, -q) - mismatch(&d, k, q)).abs() < 1e-12);
            }
        }
    }

    /// Brute-force oracle: extrema of every sign change of the mismatch
    /// along grid rows and columns of a fine lattice.
    fn scan_extrema(d: &Dispersion, n: usize) -> Option<Extremal> {
        let h = PI / n as f64;
        let rows: Vec<Vec<f64>> = (0..=n)
            .into_par_iter()
            .map(|i| (0..=n).map(|j| mismatch(d, i as f64 * h, j as f64 * h)).collect())
            .collect();
        let mut e: Option<Extremal> = None;
        let mut add = |k: f64, q: f64| {
            let x = e.get_or_insert(Extremal {
                q_min: q,
                k_min: k,
                q_max: q,
                k_max: k,
            });
            x.q_min = x.q_min.min(q);
            x.q_max = x.q_max.max(q);
            x.k_min = x.k_min.min(k);
            x.k_max = x.k_max.max(k);
        };
        for i in 0..=n {
            for j in 0..=n {
                let v = rows[i][j];
                if i < n && (v > 0.0) != (rows[i + 1][j] > 0.0) {
                    add((i as f64 + 0.5) * h, j as f64 * h);
                }
                if j < n && (v > 0.0) != (rows[i][j + 1] > 0.0) {
                    add(i as f64 * h, (j as f64 + 0.5) * h);
                }
            }
        }
        e
    }

    #[test]
    fn standard_contour_matches_scan_oracle() {
        let d = standard();
        let c = resonance_contours(&d, 256);
        assert!(!c.is_empty());
        for (k, q) in c.points() {
            assert!(mismatch(&d, k, q).abs() < CONTOUR_TOL, "{k} {q}");
            assert!(k > 0.0 && k <= PI && q > 0.0 && q <= PI);
        }
        let e = c.extremal.unwrap();
        let oracle = scan_extrema(&d, 4096).unwrap();
        let tol = 2.0 * PI / 4096.0;
        for (a, b) in [
            (e.q_min, oracle.q_min),
            (e.k_min, oracle.k_min),
            (e.q_max, oracle.q_max),
            (e.k_max, oracle.k_max),
        ] {
            assert!((a - b).abs() < tol, "{a} vs {b}");
        }
        assert!(e.q_min <= e.k_min && e.k_min <= e.q_max && e.q_max <= e.k_max, "{e:?}");
        assert!(e.q_min > 0.0 && e.k_max <= PI);
    }

    #[test]
    fn extremal_refinement_is_grid_independent() {
        let d = standard();
        let a = resonance_contours(&d, 256).extremal.unwrap();
        let b = resonance_contours(&d, 700).extremal.unwrap();
        for (x, y) in [(a.q_min, b.q_min), (a.k_min, b.k_min), (a.q_max, b.q_max), (a.k_max, b.k_max)] {
            assert!((x - y).abs() < 1e-6, "{x} vs {y}");
        }
    }

    #[test]
    fn exchange_partner_is_on_contour() {
        let d = standard();
        let c = resonance_contours(&d, 256);
        let pts: Vec<(f64, f64)> = c.points().collect();
        let h = PI / 256.0;
        for &(k, q) in pts.iter().step_by(7) {
            let partner = (k, k - q);
            let nearest = pts
                .iter()
                .map(|&(a, b)| ((a - partner.0).powi(2) + (b - partner.1).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest < h, "{k} {q} -> {nearest}");
        }
    }

    #[test]
    fn narrow_band_has_no_channel() {
        let d = Dispersion::new(-10.0, 10.0, 10.0);
        let c = resonance_contours(&d, 256);
        assert!(c.is_empty());
        assert!(c.extremal.is_none());
        assert!(extremal_momenta(&d).is_none());
        assert!(max_mismatch(&d) < 0.0);
        assert!(scan_extrema(&d, 1024).is_none());
    }

    #[test]
    fn contour_shrinks_with_detuning() {
        let mut last = usize::MAX;
        for delta in [-1.0, -5.0, -10.0, -20.0, -40.0] {
            let n = resonance_contours(&Dispersion::new(delta, 30.0, 10.0), 256).len();
            assert!(n <= last, "{delta}: {n} > {last}");
            last = n;
        }
    }

    #[test]
    fn critical_detuning_separates_open_and_closed() {
        let d0 = critical_detuning(30.0, 10.0, -1e6, 1e-4).unwrap();
        assert!(d0 < -10.0);
        assert!(max_mismatch(&Dispersion::new(d0 + 1e-3, 30.0, 10.0)) > 0.0);
        assert!(max_mismatch(&Dispersion::new(d0 - 1e-3, 30.0, 10.0)) < 0.0);
        assert!(resonance_contours(&Dispersion::new(d0 - 1e-2, 30.0, 10.0), 256).is_empty());
        let narrow = critical_detuning(10.0, 10.0, -1e6, 1e-4).unwrap();
        assert!(narrow > -10.0, "{narrow}");
    }

    #[test]
    fn sweep_rows_follow_the_channel() {
        let s = sweep_detuning(30.0, 10.0, (-30.0, -1.0), 5);
        assert_eq!(s.rows.len(), 5);
        let d0 = s.delta0.unwrap();
        for r in &s.rows {
            assert_eq!(r.extremal.is_some(), r.delta > d0, "{r:?}");
        }
    }
}
