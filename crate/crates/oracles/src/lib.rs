//! Slow reference implementations used as test oracles.
//!
//! Everything here is written as directly as possible — nested loops over
//! plain slices, no shared code with the crates under test — so that an
//! agreement between the two is meaningful.

/// Direct five-nested-loop 3D convolution with zero padding.
///
/// `x` is `(ci, t, h, w)`, `w` is `(co, ci, kt, kh, kw)`. Returns the output and
/// its shape.
pub fn conv3d(
    x: &[f64],
    xs: [usize; 4],
    w: &[f64],
    ws: [usize; 5],
    b: &[f64],
    stride: [usize; 3],
    pad: [usize; 3],
) -> (Vec<f64>, [usize; 4]) {
    tdc(x, xs, w, ws, b, stride, pad, None)
}

/// Deformable 3D convolution evaluated literally: every sample is a sum of
/// `max(0, 1-|q-p|)` weights over *all* integer grid points `q` of the frame.
///
/// `off` is `(2N, t', h', w')` with channel `2n` the range (row) offset and
/// `2n+1` the azimuth (column) offset of tap `n`.
#[allow(clippy::too_many_arguments)]
pub fn tdc(
    x: &[f64],
    xs: [usize; 4],
    w: &[f64],
    ws: [usize; 5],
    b: &[f64],
    stride: [usize; 3],
    pad: [usize; 3],
    off: Option<&[f64]>,
) -> (Vec<f64>, [usize; 4]) {
    let [ci, t, h, wd] = xs;
    let [co, wci, kt, kh, kw] = ws;
    assert_eq!(ci, wci);
    let out_t = (t + 2 * pad[0] - kt) / stride[0] + 1;
    let out_h = (h + 2 * pad[1] - kh) / stride[1] + 1;
    let out_w = (wd + 2 * pad[2] - kw) / stride[2] + 1;
    let xv = |c: usize, tt: usize, r: usize, q: usize| x[((c * t + tt) * h + r) * wd + q];
    let mut y = vec![0.0; co * out_t * out_h * out_w];
    for o in 0..co {
        for ot in 0..out_t {
            for oh in 0..out_h {
                for ow in 0..out_w {
                    let mut acc = b[o];
                    for c in 0..ci {
                        for a in 0..kt {
                            for i in 0..kh {
                                for j in 0..kw {
                                    let tt = (ot * stride[0] + a) as isize - pad[0] as isize;
                                    if tt < 0 || tt >= t as isize {
                                        continue;
                                    }
                                    let n = (a * kh + i) * kw + j;
                                    let (dr, dc) = match off {
                                        Some(off) => {
                                            let at = |ch: usize| off[((ch * out_t + ot) * out_h + oh) * out_w + ow];
                                            (at(2 * n), at(2 * n + 1))
                                        }
                                        None => (0.0, 0.0),
                                    };
                                    let pr = (oh * stride[1] + i) as f64 - pad[1] as f64 + dr;
                                    let pc = (ow * stride[2] + j) as f64 - pad[2] as f64 + dc;
                                    let mut v = 0.0;
                                    for r in 0..h {
                                        for q in 0..wd {
                                            let g = (1.0 - (r as f64 - pr).abs()).max(0.0)
                                                * (1.0 - (q as f64 - pc).abs()).max(0.0);
                                            if g > 0.0 {
                                                v += g * xv(c, tt as usize, r, q);
                                            }
                                        }
                                    }
                                    let wi = (((o * ci + c) * kt + a) * kh + i) * kw + j;
                                    acc += w[wi] * v;
                                }
                            }
                        }
                    }
                    y[((o * out_t + ot) * out_h + oh) * out_w + ow] = acc;
                }
            }
        }
    }
    (y, [co, out_t, out_h, out_w])
}

/// Central differences `(f(x+h e_i) - f(x-h e_i)) / 2h` for the listed
/// coordinates (all of them when `indices` is `None`).
pub fn central_diff(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    h: f64,
    indices: Option<&[usize]>,
) -> Vec<f64> {
    let all: Vec<usize>;
    let idx = match indices {
        Some(i) => i,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };
    let mut p = x.to_vec();
    idx.iter()
        .map(|&i| {
            let x0 = p[i];
            p[i] = x0 + h;
            let fp = f(&p);
            p[i] = x0 - h;
            let fm = f(&p);
            p[i] = x0;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a-b| / max(|a|, |b|, floor)` over paired entries. The floor keeps
/// entries that are zero up to rounding from dominating the ratio.
pub fn max_rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// `true` when cell `(r, c)` beats every in-grid neighbour in its 3×3 window:
/// strictly larger, or equal with a larger linear index on the neighbour.
pub fn is_local_max(v: &[f64], h: usize, w: usize, r: usize, c: usize) -> bool {
    let me = v[r * w + c];
    for dr in -1i64..=1 {
        for dc in -1i64..=1 {
            if dr == 0 && dc == 0 {
                continue;
            }
            let (rr, cc) = (r as i64 + dr, c as i64 + dc);
            if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                continue;
            }
            let j = rr as usize * w + cc as usize;
            let other = v[j];
            if other > me || (other == me && j < r * w + c) {
                return false;
            }
        }
    }
    true
}

/// Per-cell cell-averaging CFAR followed by 3×3 local-maximum reduction.
/// Training cells are the in-grid cells of the `(2(g+t)+1)²` window outside
/// the `(2g+1)²` guard box.
pub fn ca_cfar(
    mag: &[f64],
    h: usize,
    w: usize,
    guard: (usize, usize),
    train: (usize, usize),
    alpha: f64,
) -> Vec<(usize, usize)> {
    let (gr, ga) = (guard.0 as i64, guard.1 as i64);
    let (or, oa) = (gr + train.0 as i64, ga + train.1 as i64);
    let mut flagged = vec![false; h * w];
    for r in 0..h as i64 {
        for c in 0..w as i64 {
            let mut sum = 0.0;
            let mut n = 0usize;
            for rr in r - or..=r + or {
                for cc in c - oa..=c + oa {
                    if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                        continue;
                    }
                    if (rr - r).abs() <= gr && (cc - c).abs() <= ga {
                        continue;
                    }
                    sum += mag[rr as usize * w + cc as usize];
                    n += 1;
                }
            }
            if n > 0 && mag[r as usize * w + c as usize] > alpha * (sum / n as f64) {
                flagged[r as usize * w + c as usize] = true;
            }
        }
    }
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if flagged[r * w + c] && is_local_max(mag, h, w, r, c) {
                out.push((r, c));
            }
        }
    }
    out
}

/// Peak location `(class, row, col)` on a `(classes, h, w)` map.
pub type Cell = (usize, usize, usize);

/// Exhaustive location-based NMS: collect 8-neighbour peaks at or above
/// `floor`, then repeatedly re-sort the survivors, emit the best and drop
/// every remaining peak whose similarity to it exceeds `threshold`.
/// Equal confidences are ordered by `(class, row, col)`.
pub fn lnms(
    maps: &[f64],
    classes: usize,
    h: usize,
    w: usize,
    floor: f64,
    threshold: f64,
    similarity: impl Fn(Cell, Cell) -> f64,
) -> Vec<Cell> {
    let mut pool: Vec<(f64, Cell)> = Vec::new();
    for k in 0..classes {
        let plane = &maps[k * h * w..(k + 1) * h * w];
        for r in 0..h {
            for c in 0..w {
                if plane[r * w + c] >= floor && is_local_max(plane, h, w, r, c) {
                    pool.push((plane[r * w + c], (k, r, c)));
                }
            }
        }
    }
    let mut out = Vec::new();
    while !pool.is_empty() {
        pool.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let (_, best) = pool.remove(0);
        out.push(best);
        pool.retain(|&(_, p)| similarity(best, p) <= threshold);
    }
    out
}

/// Size of the largest one-to-one matching in which detection `i` may pair
/// with ground truth `j` only when `allowed(i, j)`; found by trying every
/// assignment.
pub fn max_matching(dets: usize, gts: usize, allowed: impl Fn(usize, usize) -> bool) -> usize {
    fn go(i: usize, dets: usize, gts: usize, used: &mut Vec<bool>, allowed: &dyn Fn(usize, usize) -> bool) -> usize {
        if i == dets {
            return 0;
        }
        let mut best = go(i + 1, dets, gts, used, allowed);
        for j in 0..gts {
            if !used[j] && allowed(i, j) {
                used[j] = true;
                best = best.max(1 + go(i + 1, dets, gts, used, allowed));
                used[j] = false;
            }
        }
        best
    }
    go(0, dets, gts, &mut vec![false; gts], &allowed)
}

/// Assignment chosen by exhaustive search: among all one-to-one pairings
/// (pairs restricted to `score(i, j) = Some(_)`), the one whose vector of
/// per-detection scores, read in detection order with unmatched as −∞, is
/// lexicographically largest. Detections must be given in priority order.
pub fn lexicographic_assignment(
    dets: usize,
    gts: usize,
    score: impl Fn(usize, usize) -> Option<f64>,
) -> Vec<Option<usize>> {
    fn go(
        i: usize,
        dets: usize,
        gts: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<Option<usize>>,
        best: &mut Option<(Vec<f64>, Vec<Option<usize>>)>,
        score: &dyn Fn(usize, usize) -> Option<f64>,
    ) {
        if i == dets {
            let key: Vec<f64> = cur
                .iter()
                .enumerate()
                .map(|(d, g)| g.map_or(f64::NEG_INFINITY, |g| score(d, g).unwrap()))
                .collect();
            let better = match best {
                None => true,
                Some((k, _)) => key.partial_cmp(k) == Some(std::cmp::Ordering::Greater),
            };
            if better {
                *best = Some((key, cur.clone()));
            }
            return;
        }
        cur.push(None);
        go(i + 1, dets, gts, used, cur, best, score);
        cur.pop();
        for j in 0..gts {
            if !used[j] && score(i, j).is_some() {
                used[j] = true;
                cur.push(Some(j));
                go(i + 1, dets, gts, used, cur, best, score);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut best = None;
    go(0, dets, gts, &mut vec![false; gts], &mut Vec::new(), &mut best, &score);
    best.map(|(_, a)| a).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_identity() {
        let x: Vec<f64> = (0..18).map(f64::from).collect();
        let (y, s) = conv3d(&x, [1, 2, 3, 3], &[1.0], [1, 1, 1, 1, 1], &[0.5], [1, 1, 1], [0, 0, 0]);
        assert_eq!(s, [1, 2, 3, 3]);
        assert!(y.iter().zip(&x).all(|(a, b)| *a == b + 0.5));
    }

    #[test]
    fn central_diff_of_square() {
        let g = central_diff(|p| p[0] * p[0] + 3.0 * p[1], &[2.0, 1.0], 1e-4, None);
        assert!((g[0] - 4.0).abs() < 1e-8 && (g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn matching_counts() {
        assert_eq!(max_matching(2, 2, |i, j| i == 0 || j == 0), 2);
        assert_eq!(max_matching(3, 1, |_, _| true), 1);
    }

    #[test]
    fn lexicographic_prefers_first_detection() {
        let s = |i: usize, j: usize| Some([[0.9, 0.8], [0.95, 0.1]][i][j]);
        assert_eq!(lexicographic_assignment(2, 2, s), vec![Some(0), Some(1)]);
        assert_eq!(lexicographic_assignment(2, 1, |_, _| Some(0.5)), vec![Some(0), None]);
    }
}
