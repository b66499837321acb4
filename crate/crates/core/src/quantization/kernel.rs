//! Per-point softmax kernel: for diagonal weights the Fubini-Study data at a
//! point `u` of the open orbit are the moments of the probability vector
//! `p_alpha(u) ∝ exp(2<alpha,u> - logw_alpha)`.

use crate::polytope::LatticePointSet;

/// Scratch buffers reused across evaluations at many points.
#[derive(Clone, Debug)]
pub struct Scratch {
    pub p: Vec<f64>,
    pub moment: Vec<f64>,
    /// Row-major `m x m` covariance of `alpha` under `p`.
    pub cov: Vec<f64>,
}

impl Scratch {
    pub fn new(n: usize, m: usize) -> Self {
        Scratch {
            p: vec![0.0; n],
            moment: vec![0.0; m],
            cov: vec![0.0; m * m],
        }
    }
}

/// `log sum_alpha exp(2<alpha,u> - logw_alpha)`; fills `p` with the softmax.
#[inline]
pub fn softmax(points: &LatticePointSet, logw: &[f64], u: &[f64], p: &mut [f64]) -> f64 {
    let m = points.dim();
    let flat = points.flat();
    let mut max = f64::NEG_INFINITY;
    for (i, z) in p.iter_mut().enumerate() {
        let a = &flat[i * m..(i + 1) * m];
        let mut s = -logw[i];
        for j in 0..m {
            s += 2.0 * a[j] * u[j];
        }
        *z = s;
        if s > max {
            max = s;
        }
    }
    let mut sum = 0.0;
    for z in p.iter_mut() {
        *z = (*z - max).exp();
        sum += *z;
    }
    let inv = 1.0 / sum;
    for z in p.iter_mut() {
        *z *= inv;
    }
    max + sum.ln()
}

/// Softmax plus centered first and second moments. Returns `log B`.
#[inline]
pub fn moments(points: &LatticePointSet, logw: &[f64], u: &[f64], s: &mut Scratch) -> f64 {
    let log_b = softmax(points, logw, u, &mut s.p);
    moments_of(points, &s.p, &mut s.moment, &mut s.cov);
    log_b
}

/// Softmax along a row of nodes `u_0 + t h e_m`, `t = 0..count`, updating the
/// unnormalized weights multiplicatively and refreshing them exactly often
/// enough that no weight changes by more than `e^30` between refreshes.
pub struct RowSweep<'a> {
    points: &'a LatticePointSet,
    logw: &'a [f64],
    /// Lattice coordinates by axis.
    axes: Vec<Vec<f64>>,
    ratio: Vec<f64>,
    refresh: usize,
    q: Vec<f64>,
    u: Vec<f64>,
}

/// Unnormalized weights at one node with their sum and `log B`.
pub struct RowNode<'s> {
    pub q: &'s [f64],
    pub sum: f64,
    pub log_b: f64,
}

impl<'a> RowSweep<'a> {
    pub fn new(points: &'a LatticePointSet, logw: &'a [f64], h: f64) -> Self {
        let m = points.dim();
        let flat = points.flat();
        let axes: Vec<Vec<f64>> = (0..m)
            .map(|j| (0..points.len()).map(|i| flat[i * m + j]).collect())
            .collect();
        let last = &axes[m - 1];
        let span = last.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
        let refresh = ((15.0 / (span * h)) as usize).clamp(1, 32);
        RowSweep {
            points,
            logw,
            ratio: last.iter().map(|a| (2.0 * a * h).exp()).collect(),
            axes,
            refresh,
            q: vec![0.0; points.len()],
            u: vec![0.0; m],
        }
    }

    pub fn run(&mut self, u0: &[f64], h: f64, count: usize, mut visit: impl FnMut(usize, RowNode<'_>, &[Vec<f64>])) {
        let m = self.u.len();
        self.u.copy_from_slice(u0);
        let mut offset = 0.0;
        for t in 0..count {
            if t % self.refresh == 0 {
                self.u[m - 1] = u0[m - 1] + t as f64 * h;
                offset = softmax(self.points, self.logw, &self.u, &mut self.q);
            } else {
                for (q, r) in self.q.iter_mut().zip(&self.ratio) {
                    *q *= r;
                }
            }
            let sum = lane_sum(&self.q);
            let node = RowNode {
                q: &self.q,
                sum,
                log_b: offset + sum.ln(),
            };
            visit(t, node, &self.axes);
        }
    }
}

#[inline]
fn lane_sum(a: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let chunks = a.chunks_exact(4);
    let rest: f64 = chunks.remainder().iter().sum();
    for c in chunks {
        for l in 0..4 {
            acc[l] += c[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + rest
}

#[inline]
fn lane_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let rest: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + rest
}

/// Mean and centered covariance of the lattice coordinates under the
/// weights `q / sum`, from per-axis coordinate arrays.
#[inline]
pub fn weighted_stats(q: &[f64], sum: f64, axes: &[Vec<f64>], moment: &mut [f64], cov: &mut [f64]) {
    let m = axes.len();
    let inv = 1.0 / sum;
    for j in 0..m {
        moment[j] = lane_dot(q, &axes[j]) * inv;
    }
    match m {
        1 => {
            let (a, mu) = (&axes[0], moment[0]);
            let mut acc = [0.0; 4];
            let (cq, ca) = (q.chunks_exact(4), a.chunks_exact(4));
            let rest: f64 = cq.remainder().iter().zip(ca.remainder()).map(|(w, x)| w * (x - mu) * (x - mu)).sum();
            for (w, x) in cq.zip(ca) {
                for l in 0..4 {
                    let d = x[l] - mu;
                    acc[l] += w[l] * d * d;
                }
            }
            cov[0] = ((acc[0] + acc[1]) + (acc[2] + acc[3]) + rest) * inv;
        }
        2 => {
            let (a, b) = (&axes[0], &axes[1]);
            let (ma, mb) = (moment[0], moment[1]);
            let (mut s11, mut s12, mut s22) = ([0.0; 4], [0.0; 4], [0.0; 4]);
            let n4 = q.len() / 4 * 4;
            for i in (0..n4).step_by(4) {
                for l in 0..4 {
                    let w = q[i + l];
                    let (da, db) = (a[i + l] - ma, b[i + l] - mb);
                    s11[l] += w * da * da;
                    s12[l] += w * da * db;
                    s22[l] += w * db * db;
                }
            }
            let fold = |s: [f64; 4]| (s[0] + s[1]) + (s[2] + s[3]);
            let (mut c11, mut c12, mut c22) = (fold(s11), fold(s12), fold(s22));
            for i in n4..q.len() {
                let (da, db) = (a[i] - ma, b[i] - mb);
                c11 += q[i] * da * da;
                c12 += q[i] * da * db;
                c22 += q[i] * db * db;
            }
            cov[0] = c11 * inv;
            cov[1] = c12 * inv;
            cov[2] = c12 * inv;
            cov[3] = c22 * inv;
        }
        _ => {
            for x in cov.iter_mut() {
                *x = 0.0;
            }
            for (i, &w) in q.iter().enumerate() {
                for r in 0..m {
                    let dr = axes[r][i] - moment[r];
                    for c in r..m {
                        cov[r * m + c] += w * dr * (axes[c][i] - moment[c]);
                    }
                }
            }
            for r in 0..m {
                for c in r..m {
                    cov[r * m + c] *= inv;
                }
                for c in 0..r {
                    cov[r * m + c] = cov[c * m + r];
                }
            }
        }
    }
}

/// Row kernel for the mass integrals with the lattice coordinates as `M`
/// compile-time axes. Per node it does one sweep over the sections that
/// flushes the previous node's contribution `acc += c q`, advances
/// `q *= ratio` and accumulates the raw moments of the new `q` about a
/// fixed shift.
pub struct FusedRow<'a, const M: usize> {
    axes: [Vec<f64>; M],
    ratio: Vec<f64>,
    q: Vec<f64>,
    u: Vec<f64>,
    shift: [f64; M],
    /// Mean at the previous node; sums are centered there so the covariance
    /// does not cancel where it is small.
    center: [f64; M],
    points: &'a LatticePointSet,
    logw: &'a [f64],
    refresh: usize,
}

/// `[s0, s_j, s_jl]` with `s_j = sum q a_j`, `s_jl = sum q a_j a_l` (row-major).
type Sums<const M: usize> = ([f64; M], [[f64; M]; M], f64);

impl<'a, const M: usize> FusedRow<'a, M> {
    pub fn new(points: &'a LatticePointSet, logw: &'a [f64], h: f64) -> Self {
        assert_eq!(points.dim(), M);
        let bar = points.barycenter_f64();
        let shift: [f64; M] = std::array::from_fn(|j| bar[j].round());
        let axes: [Vec<f64>; M] =
            std::array::from_fn(|j| (0..points.len()).map(|i| points.point(i)[j] - shift[j]).collect());
        // Weights are renormalized by the previous sum at every node, so
        // nothing overflows. A section whose relative weight is above
        // e^{-40} at some node of a stretch between refreshes was above
        // e^{-40 - 2 width h t} at the refresh; keeping that exponent above
        // -700 keeps every section that will matter in normal range.
        let last = &axes[M - 1];
        let lo = last.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = last.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let width = (hi - lo).max(1.0);
        let refresh = ((320.0 / (width * h)) as usize).max(1);
        FusedRow {
            ratio: (0..points.len()).map(|i| (2.0 * points.point(i)[M - 1] * h).exp()).collect(),
            axes,
            q: vec![0.0; points.len()],
            u: vec![0.0; M],
            shift,
            center: [0.0; M],
            points,
            logw,
            refresh,
        }
    }

    /// Adds `sum_t w_t det(2 Cov_t) p_t` over the row starting at `u0` into
    /// `acc[..N]` and `sum_t w_t det(2 Cov_t)` into `acc[N]`.
    pub fn run(&mut self, u0: &[f64], h: f64, w: &[f64], acc: &mut [f64]) {
        let n = self.q.len();
        let scale = 2f64.powi(M as i32);
        self.u.copy_from_slice(u0);
        let (mut c, mut g) = (0.0, 1.0);
        for (t, &wt) in w.iter().enumerate() {
            let sums = if t % self.refresh == 0 {
                if t > 0 {
                    for (a, q) in acc[..n].iter_mut().zip(&self.q) {
                        *a += c * q;
                    }
                }
                self.u[M - 1] = u0[M - 1] + t as f64 * h;
                softmax(self.points, self.logw, &self.u, &mut self.q);
                for r in 0..M {
                    self.center[r] = lane_dot(&self.q, &self.axes[r]);
                }
                self.sweep(None, 0.0, 1.0)
            } else {
                self.sweep(Some(&mut acc[..n]), c, g)
            };
            let (s1, s2, s0) = sums;
            let inv = 1.0 / s0;
            let mut cov = [0.0; 4];
            for r in 0..M {
                for l in 0..M {
                    cov[r * M + l] = s2[r][l] * inv - s1[r] * inv * s1[l] * inv;
                }
            }
            for r in 0..M {
                self.center[r] += s1[r] * inv;
            }
            let wd = wt * scale * det(M, &cov[..M * M]);
            acc[n] += wd;
            c = wd * inv;
            g = inv;
        }
        for (a, q) in acc[..n].iter_mut().zip(&self.q) {
            *a += c * q;
        }
    }

    /// One pass over the sections. With `acc`, first adds `c q` and advances
    /// `q` by one node, rescaled by `g`; then returns the raw moments of `q`.
    #[inline]
    fn sweep(&mut self, acc: Option<&mut [f64]>, c: f64, g: f64) -> Sums<M> {
        const L: usize = 4;
        if let Some(acc) = acc {
            for ((a, q), r) in acc.iter_mut().zip(self.q.iter_mut()).zip(&self.ratio) {
                *a += c * *q;
                *q *= r * g;
            }
        }
        let c0 = self.center;
        let mut s0 = [0.0; L];
        let mut s1 = [[0.0; L]; M];
        let mut s2 = [[[0.0; L]; M]; M];
        let q4 = self.q.chunks_exact(L);
        let tail = q4.remainder();
        let n4 = self.q.len() - tail.len();
        for (blk, q) in q4.enumerate() {
            let i = blk * L;
            let x: [[f64; L]; M] = std::array::from_fn(|j| std::array::from_fn(|lane| self.axes[j][i + lane] - c0[j]));
            for lane in 0..L {
                s0[lane] += q[lane];
            }
            for r in 0..M {
                let qx: [f64; L] = std::array::from_fn(|lane| q[lane] * x[r][lane]);
                for lane in 0..L {
                    s1[r][lane] += qx[lane];
                }
                for l in r..M {
                    for lane in 0..L {
                        s2[r][l][lane] += qx[lane] * x[l][lane];
                    }
                }
            }
        }
        for (off, &q) in tail.iter().enumerate() {
            let i = n4 + off;
            s0[0] += q;
            for r in 0..M {
                let qx = q * (self.axes[r][i] - c0[r]);
                s1[r][0] += qx;
                for l in r..M {
                    s2[r][l][0] += qx * (self.axes[l][i] - c0[l]);
                }
            }
        }
        let fold = |a: &[f64; L]| (a[0] + a[1]) + (a[2] + a[3]);
        let mut raw2 = [[0.0; M]; M];
        for r in 0..M {
            for l in r..M {
                raw2[r][l] = fold(&s2[r][l]);
                raw2[l][r] = raw2[r][l];
            }
        }
        (std::array::from_fn(|r| fold(&s1[r])), raw2, fold(&s0))
    }

    pub fn shift(&self) -> &[f64; M] {
        &self.shift
    }
}

/// First and centered second moments of `alpha` under a normalized `p`.
#[inline]
pub fn moments_of(points: &LatticePointSet, p: &[f64], moment: &mut [f64], cov: &mut [f64]) {
    let m = points.dim();
    let flat = points.flat();
    moment.iter_mut().for_each(|x| *x = 0.0);
    for (i, &pi) in p.iter().enumerate() {
        for j in 0..m {
            moment[j] += pi * flat[i * m + j];
        }
    }
    cov.iter_mut().for_each(|x| *x = 0.0);
    let mut d = [0.0f64; 8];
    for (i, &pi) in p.iter().enumerate() {
        for j in 0..m {
            d[j] = flat[i * m + j] - moment[j];
        }
        for a in 0..m {
            for b in a..m {
                cov[a * m + b] += pi * d[a] * d[b];
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            cov[a * m + b] = cov[b * m + a];
        }
    }
}

/// Determinant of a small row-major symmetric matrix.
pub fn det(m: usize, a: &[f64]) -> f64 {
    match m {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        _ => nalgebra::DMatrix::from_row_slice(m, m, a).determinant(),
    }
}

/// Inverse of a small row-major matrix; `None` if singular.
pub fn inverse(m: usize, a: &[f64]) -> Option<Vec<f64>> {
    match m {
        1 => (a[0] != 0.0).then(|| vec![1.0 / a[0]]),
        2 => {
            let d = det(2, a);
            (d != 0.0).then(|| vec![a[3] / d, -a[1] / d, -a[2] / d, a[0] / d])
        }
        _ => nalgebra::DMatrix::from_row_slice(m, m, a)
            .try_inverse()
            .map(|inv| inv.transpose().as_slice().to_vec()),
    }
}

/// Smallest eigenvalue of a small symmetric row-major matrix.
pub fn min_eigenvalue(m: usize, a: &[f64]) -> f64 {
    match m {
        1 => a[0],
        2 => {
            let tr = a[0] + a[3];
            let disc = ((a[0] - a[3]).powi(2) + 4.0 * a[1] * a[2]).max(0.0).sqrt();
            0.5 * (tr - disc)
        }
        _ => nalgebra::DMatrix::from_row_slice(m, m, a)
            .symmetric_eigenvalues()
            .min(),
    }
}
