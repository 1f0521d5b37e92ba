//! Dense symmetric eigensolver for graph Laplacians.
//!
//! The matrix is reduced to tridiagonal form by Householder reflections
//! (lower triangle only). The full spectrum is then obtained with implicit
//! QL iterations on the accumulated basis; a partial spectrum (the `k`
//! smallest pairs) uses Sturm-sequence bisection for the eigenvalues and
//! inverse iteration for the eigenvectors, followed by the back
//! transformation through the stored reflectors. Both paths are sequential
//! and therefore bitwise reproducible.

use crate::error::{Error, Result};
use crate::graph::Laplacian;
use crate::tensor::Tensor;

/// Eigenvalues below this magnitude are treated as exact zeros.
pub const ZERO_EIGENVALUE_TOL: f64 = 1e-8;

const SIGN_TOL: f64 = 1e-10;
const EPS: f64 = f64::EPSILON;

/// The `k` smallest eigenpairs of a symmetric operator, ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    /// `n × k`; column `i` pairs with `eigenvalues[i]`.
    eigenvectors: Tensor,
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Tensor {
        &self.eigenvectors
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Dimension of the underlying operator.
    pub fn dimension(&self) -> usize {
        self.eigenvectors.rows()
    }

    pub fn is_complete(&self) -> bool {
        self.len() == self.dimension()
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i)
    }

    pub fn zero_count(&self) -> usize {
        self.eigenvalues.iter().filter(|l| l.abs() < ZERO_EIGENVALUE_TOL).count()
    }
}

/// Computes the `k` smallest eigenpairs of `l`.
///
/// Eigenvalues within `ZERO_EIGENVALUE_TOL` of zero are reported as exactly `0.0`.
/// Eigenvectors are normalized and sign-fixed so that their first component
/// with magnitude above `1e-10` is positive.
pub fn eigendecompose(l: &Laplacian, k: usize) -> Result<Spectrum> {
    let n = l.size();
    if k == 0 || k > n {
        return Err(Error::argument(format!("requested {k} eigenpairs of a {n}x{n} operator")));
    }
    let mut reduced = Reduction::from_laplacian(l);
    let (mut values, mut vectors) = if k == n {
        let mut z = reduced.accumulate_basis();
        let mut d = reduced.d.clone();
        let mut e = reduced.e.clone();
        tql(&mut d, &mut e, Some(&mut z))?;
        sort_pairs(d, z, n)
    } else {
        partial_pairs(&mut reduced, k)?
    };
    values.truncate(k);
    vectors.truncate(k * n);

    for v in values.iter_mut() {
        if v.abs() < ZERO_EIGENVALUE_TOL {
            *v = 0.0;
        }
    }
    // `vectors` holds one eigenvector per row; fix signs, then transpose to n×k.
    for row in vectors.chunks_exact_mut(n) {
        if let Some(first) = row.iter().find(|x| x.abs() > SIGN_TOL) {
            if *first < 0.0 {
                row.iter_mut().for_each(|x| *x = -*x);
            }
        }
    }
    let rows = Tensor::new(vec![k, n], vectors)?;
    Ok(Spectrum { eigenvalues: values, eigenvectors: rows.transpose() })
}

/// All eigenvalues, ascending, without eigenvectors.
pub fn eigenvalues(l: &Laplacian) -> Result<Vec<f64>> {
    let n = l.size();
    if n == 0 {
        return Ok(Vec::new());
    }
    let reduced = Reduction::from_laplacian(l);
    let mut d = reduced.d.clone();
    let mut e = reduced.e.clone();
    tql(&mut d, &mut e, None)?;
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// Largest eigenvalue, computed exactly from the tridiagonal form.
pub fn lambda_max(l: &Laplacian) -> Result<f64> {
    let n = l.size();
    if n == 0 {
        return Err(Error::argument("empty operator has no spectrum"));
    }
    let reduced = Reduction::from_laplacian(l);
    Ok(bisect_kth(&reduced.d, &reduced.e, n - 1))
}

/// Householder reduction `A = Q T Qᵀ` with the reflectors kept for back transformation.
struct Reduction {
    n: usize,
    d: Vec<f64>,
    /// `e[i]` couples rows `i` and `i + 1`; `e[n - 1] = 0`.
    e: Vec<f64>,
    /// Reflector `i` acts on indices `i + 1..n`; `v[0] = 1`.
    reflectors: Vec<(f64, Vec<f64>)>,
}

impl Reduction {
    fn from_laplacian(l: &Laplacian) -> Self {
        let n = l.size();
        let mut packed = vec![0.0; n * (n + 1) / 2];
        for &(r, c, v) in l.matrix().entries() {
            if c <= r {
                packed[r * (r + 1) / 2 + c] = v;
            }
        }
        Self::new(packed, n)
    }

    /// Reduces a packed lower triangle (row `r` holds columns `0..=r`).
    ///
    /// The rank-2 update of step `i` and the symmetric product `A₂₂ v` of step
    /// `i + 1` share one sweep over the trailing block.
    fn new(mut a: Vec<f64>, n: usize) -> Self {
        let idx = |r: usize, c: usize| r * (r + 1) / 2 + c;
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n];
        let mut reflectors = Vec::with_capacity(n.saturating_sub(1));
        if n == 0 {
            return Self { n, d, e, reflectors };
        }
        d[0] = a[0];
        if n == 1 {
            return Self { n, d, e, reflectors };
        }

        let mut v: Vec<f64> = (1..n).map(|r| a[idx(r, 0)]).collect();
        let (mut beta, mut tau) = householder(&mut v);
        let mut p = vec![0.0; n - 1];
        for r in 0..n - 1 {
            let row = &a[idx(1 + r, 1)..=idx(1 + r, 1 + r)];
            let vr = v[r];
            let acc = symv_row(&row[..r], &v[..r], &mut p[..r], vr);
            p[r] += acc + row[r] * vr;
        }
        p.iter_mut().for_each(|x| *x *= tau);

        for i in 0..n - 1 {
            let m = n - i - 1;
            let off = i + 1;
            e[i] = beta;
            let alpha = -0.5 * tau * dot(&p, &v);
            let w: Vec<f64> = p.iter().zip(&v).map(|(&pj, &vj)| pj + alpha * vj).collect();

            // Column `off` of the trailing block first: it defines the next reflector.
            for r in 0..m {
                a[idx(off + r, off)] -= v[r] * w[0] + w[r] * v[0];
            }
            d[off] = a[idx(off, off)];
            if m == 1 {
                reflectors.push((tau, v));
                break;
            }
            let mut vn: Vec<f64> = (1..m).map(|r| a[idx(off + r, off)]).collect();
            let (beta_n, tau_n) = householder(&mut vn);
            let mut pn = vec![0.0; m - 1];
            for r in 1..m {
                let start = idx(off + r, off + 1);
                let row = &mut a[start..start + r];
                let (vr, wr, vnr) = (v[r], w[r], vn[r - 1]);
                let (body, diag) = row.split_at_mut(r - 1);
                let acc = update_row_and_symv(body, &w[1..r], &v[1..r], &vn[..r - 1], &mut pn[..r - 1], vr, wr, vnr);
                let val = diag[0] - (vr * w[r] + wr * v[r]);
                diag[0] = val;
                pn[r - 1] += acc + val * vnr;
            }
            pn.iter_mut().for_each(|x| *x *= tau_n);
            reflectors.push((tau, std::mem::replace(&mut v, vn)));
            tau = tau_n;
            beta = beta_n;
            p = pn;
        }
        e[n - 1] = 0.0;
        Self { n, d, e, reflectors }
    }

    /// `x ← Q x`.
    fn apply_q(&self, x: &mut [f64]) {
        for (i, (tau, v)) in self.reflectors.iter().enumerate().rev() {
            if *tau == 0.0 {
                continue;
            }
            let tail = &mut x[i + 1..];
            let s = tau * dot(v, tail);
            for (t, &vj) in tail.iter_mut().zip(v) {
                *t -= s * vj;
            }
        }
    }

    /// `Qᵀ` as a row-major matrix: row `j` is column `j` of `Q`.
    fn accumulate_basis(&self) -> Vec<f64> {
        let n = self.n;
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            q[i * n + i] = 1.0;
        }
        // Q = H_0 · … · H_{n-2}; build from the right so each step only touches the trailing block.
        for (i, (tau, v)) in self.reflectors.iter().enumerate().rev() {
            if *tau == 0.0 {
                continue;
            }
            let off = i + 1;
            // Trailing block rows/cols off..n. Row-major Q: apply H to each column c → use u = vᵀ Q.
            let mut u = vec![0.0; n - off];
            for (r, &vr) in v.iter().enumerate() {
                let row = &q[(off + r) * n + off..(off + r + 1) * n];
                for (uc, &qc) in u.iter_mut().zip(row) {
                    *uc += vr * qc;
                }
            }
            for (r, &vr) in v.iter().enumerate() {
                let row = &mut q[(off + r) * n + off..(off + r + 1) * n];
                let s = tau * vr;
                for (qc, &uc) in row.iter_mut().zip(&u) {
                    *qc -= s * uc;
                }
            }
        }
        transpose_square(&q, n)
    }
}

const LANES: usize = 8;

/// `x ← x − (vr·w + wr·v)` elementwise, then returns `x·vn` while adding `vnr·x` to `pn`.
/// Independent accumulator lanes keep the reduction off the critical path.
#[allow(clippy::too_many_arguments)]
#[inline]
fn update_row_and_symv(x: &mut [f64], w: &[f64], v: &[f64], vn: &[f64], pn: &mut [f64], vr: f64, wr: f64, vnr: f64) -> f64 {
    let len = x.len();
    let split = len - len % LANES;
    let mut acc = [0.0; LANES];
    let (xh, xt) = x.split_at_mut(split);
    let (ph, pt) = pn.split_at_mut(split);
    for ((((xc, wc), vc), vnc), pc) in xh
        .chunks_exact_mut(LANES)
        .zip(w[..split].chunks_exact(LANES))
        .zip(v[..split].chunks_exact(LANES))
        .zip(vn[..split].chunks_exact(LANES))
        .zip(ph.chunks_exact_mut(LANES))
    {
        for l in 0..LANES {
            let val = xc[l] - (vr * wc[l] + wr * vc[l]);
            xc[l] = val;
            acc[l] += val * vnc[l];
            pc[l] += val * vnr;
        }
    }
    let mut total: f64 = acc.iter().sum();
    for (c, xv) in xt.iter_mut().enumerate() {
        let j = split + c;
        let val = *xv - (vr * w[j] + wr * v[j]);
        *xv = val;
        total += val * vn[j];
        pt[c] += val * vnr;
    }
    total
}

/// Returns `row·v` while adding `vr·row` to `p`.
#[inline]
fn symv_row(row: &[f64], v: &[f64], p: &mut [f64], vr: f64) -> f64 {
    let len = row.len();
    let split = len - len % LANES;
    let mut acc = [0.0; LANES];
    for ((rc, vc), pc) in row[..split]
        .chunks_exact(LANES)
        .zip(v[..split].chunks_exact(LANES))
        .zip(p[..split].chunks_exact_mut(LANES))
    {
        for l in 0..LANES {
            acc[l] += rc[l] * vc[l];
            pc[l] += rc[l] * vr;
        }
    }
    let mut total: f64 = acc.iter().sum();
    for j in split..len {
        total += row[j] * v[j];
        p[j] += row[j] * vr;
    }
    total
}

/// Overwrites `x` with the reflector `v` (`v[0] = 1`) such that
/// `(I − τ v vᵀ) x = β e₁`; returns `(β, τ)`.
fn householder(x: &mut [f64]) -> (f64, f64) {
    let alpha = x[0];
    let xnorm = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    if xnorm == 0.0 {
        x[0] = 1.0;
        return (alpha, 0.0);
    }
    let beta = -alpha.signum() * alpha.hypot(xnorm);
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    x[1..].iter_mut().for_each(|v| *v *= scale);
    x[0] = 1.0;
    (beta, tau)
}

/// Implicit QL on a symmetric tridiagonal matrix. When `z` is given it holds
/// basis vectors as rows and receives the eigenvector rotations.
fn tql(d: &mut [f64], e: &mut [f64], mut z: Option<&mut Vec<f64>>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    let max_iter = 30 * n.max(1);
    let mut total_iter = 0usize;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > EPS * tst1 {
            m += 1;
        }
        if m > l {
            loop {
                total_iter += 1;
                if total_iter > max_iter {
                    return Err(Error::Numerical {
                        message: "QL iteration did not converge".into(),
                        iterations: total_iter,
                    });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(z) = z.as_deref_mut() {
                        let (head, tail) = z.split_at_mut((i + 1) * n);
                        let zi = &mut head[i * n..];
                        let zi1 = &mut tail[..n];
                        for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                            let h = *b;
                            *b = s * *a + c * h;
                            *a = c * *a - s * h;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= EPS * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

/// Sorts eigenvalues ascending and permutes the basis rows alongside.
fn sort_pairs(d: Vec<f64>, z: Vec<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Vec::with_capacity(z.len());
    for &i in &order {
        vectors.extend_from_slice(&z[i * n..(i + 1) * n]);
    }
    (values, vectors)
}

/// Number of eigenvalues of the tridiagonal block strictly below `x`.
fn sturm_count(d: &[f64], e: &[f64], x: f64, pivmin: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q.abs() < pivmin {
        q = -pivmin;
    }
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        q = d[i] - x - e[i - 1] * e[i - 1] / q;
        if q.abs() < pivmin {
            q = -pivmin;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn gershgorin(d: &[f64], e: &[f64]) -> (f64, f64) {
    let n = d.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let left = if i > 0 { e[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < n { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - left - right);
        hi = hi.max(d[i] + left + right);
    }
    (lo, hi)
}

/// The `j`-th smallest (0-based) eigenvalue of a tridiagonal block.
fn bisect_kth(d: &[f64], e: &[f64], j: usize) -> f64 {
    let (mut lo, mut hi) = gershgorin(d, e);
    let tnorm = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    lo -= 2.0 * EPS * tnorm;
    hi += 2.0 * EPS * tnorm;
    let pivmin = f64::MIN_POSITIVE.max(EPS * EPS * tnorm * tnorm);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= 2.0 * EPS * lo.abs().max(hi.abs()) + pivmin || mid == lo || mid == hi {
            break;
        }
        if sturm_count(d, e, mid, pivmin) > j {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The `k` smallest eigenpairs via bisection + inverse iteration, per unreduced block.
fn partial_pairs(red: &mut Reduction, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = red.n;
    let tnorm = red
        .d
        .iter()
        .zip(&red.e)
        .map(|(d, e)| d.abs() + 2.0 * e.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    // Split at negligible couplings so repeated eigenvalues of disconnected
    // parts land in separate blocks.
    let split_tol = 4.0 * EPS * tnorm;
    let mut blocks = Vec::new();
    let mut start = 0;
    for i in 0..n {
        if i == n - 1 || red.e[i].abs() <= split_tol {
            blocks.push((start, i + 1));
            start = i + 1;
        }
    }

    // (eigenvalue, block index, rank within block)
    let mut candidates = Vec::new();
    for (b, &(s, t)) in blocks.iter().enumerate() {
        let d = &red.d[s..t];
        let e = &red.e[s..t];
        let e = &e[..e.len().saturating_sub(1)];
        for j in 0..k.min(t - s) {
            let lambda = if t - s == 1 { d[0] } else { bisect_kth(d, e, j) };
            candidates.push((lambda, b, j));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    candidates.truncate(k);
    // Within each block, compute vectors in ascending order so cluster orthogonalization is stable.
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&c| (candidates[c].1, candidates[c].2));

    let mut vectors = vec![0.0; k * n];
    let mut done: Vec<(usize, f64, f64, Vec<f64>)> = Vec::new(); // (block, lambda, shift, local vector)
    for &c in &order {
        let (lambda, b, j) = candidates[c];
        let (s, t) = blocks[b];
        let nb = t - s;
        let local = if nb == 1 {
            vec![1.0]
        } else {
            let d = &red.d[s..t];
            let e = &red.e[s..t - 1];
            let ortol = 1e-3 * tnorm;
            let cluster: Vec<&Vec<f64>> = done
                .iter()
                .filter(|(bb, l, _, _)| *bb == b && (lambda - l).abs() <= ortol)
                .map(|(_, _, _, v)| v)
                .collect();
            let mut shift = lambda;
            if let Some(prev) = done
                .iter()
                .filter(|(bb, _, _, _)| *bb == b)
                .map(|(_, _, sh, _)| *sh)
                .last()
            {
                let min_gap = 10.0 * EPS * tnorm;
                if shift - prev < min_gap {
                    shift = prev + min_gap;
                }
            }
            let v = inverse_iteration(d, e, shift, &cluster, j, tnorm)?;
            done.push((b, lambda, shift, v.clone()));
            v
        };
        if nb == 1 {
            done.push((b, lambda, lambda, local.clone()));
        }
        let mut full = vec![0.0; n];
        full[s..t].copy_from_slice(&local);
        red.apply_q(&mut full);
        let norm = dot(&full, &full).sqrt();
        full.iter_mut().for_each(|x| *x /= norm);
        vectors[c * n..(c + 1) * n].copy_from_slice(&full);
    }
    let values = candidates.iter().map(|c| c.0).collect();
    Ok((values, vectors))
}

fn inverse_iteration(
    d: &[f64],
    e: &[f64],
    shift: f64,
    cluster: &[&Vec<f64>],
    seed: usize,
    tnorm: f64,
) -> Result<Vec<f64>> {
    let nb = d.len();
    let lu = TridiagLu::factor(d, e, shift, tnorm);
    let mut x: Vec<f64> = (0..nb).map(|i| start_value(seed, i)).collect();
    normalize(&mut x);
    for _ in 0..4 {
        lu.solve(&mut x);
        for v in cluster {
            let proj = dot(&x, v);
            for (xi, vi) in x.iter_mut().zip(v.iter()) {
                *xi -= proj * vi;
            }
        }
        if !normalize(&mut x) {
            return Err(Error::Numerical {
                message: "inverse iteration collapsed to a zero vector".into(),
                iterations: 4,
            });
        }
    }
    Ok(x)
}

/// Deterministic pseudo-random start vector entries in (−1, 1).
fn start_value(seed: usize, i: usize) -> f64 {
    let mut h = (seed as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (i as u64).wrapping_add(0xD1B5_4A32_D192_ED03);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    h = h.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0 + 1e-3
}

/// LU with partial pivoting of `T − σI` for a symmetric tridiagonal `T`.
struct TridiagLu {
    dl: Vec<f64>,
    dd: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn factor(d: &[f64], e: &[f64], shift: f64, tnorm: f64) -> Self {
        let n = d.len();
        let mut dd: Vec<f64> = d.iter().map(|x| x - shift).collect();
        let mut dl = e.to_vec();
        let mut du = e.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        let tiny = EPS * tnorm;
        for i in 0..n - 1 {
            if dd[i].abs() >= dl[i].abs() {
                if dd[i] == 0.0 {
                    dd[i] = tiny;
                }
                let fact = dl[i] / dd[i];
                dl[i] = fact;
                dd[i + 1] -= fact * du[i];
            } else {
                let fact = dd[i] / dl[i];
                dd[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = dd[i + 1];
                dd[i + 1] = temp - fact * dd[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if dd[n - 1] == 0.0 {
            dd[n - 1] = tiny;
        }
        Self { dl, dd, du, du2, swapped }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.dd.len();
        for i in 0..n - 1 {
            if self.swapped[i] {
                let temp = b[i] - self.dl[i] * b[i + 1];
                b[i] = b[i + 1];
                b[i + 1] = temp;
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.dd[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.dd[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.dd[i];
        }
        // Guard against overflow on an exactly singular shift.
        let big = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !big.is_finite() {
            b.iter_mut().for_each(|x| {
                if !x.is_finite() {
                    *x = x.signum();
                } else {
                    *x = 0.0;
                }
            });
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(x: &mut [f64]) -> bool {
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return false;
    }
    x.iter_mut().for_each(|v| *v /= scale);
    let norm = dot(x, x).sqrt();
    x.iter_mut().for_each(|v| *v /= norm);
    true
}

fn transpose_square(a: &[f64], n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            t[j * n + i] = a[i * n + j];
        }
    }
    t
}
