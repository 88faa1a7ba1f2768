//! Real/complex embedding and the measurement/Gram operators.
//!
//! Complex vectors are mapped to real ones by stacking `[Re; Im]`, and a
//! complex matrix `Mc` maps to the block matrix `[[Re, -Im], [Im, Re]]`. Under
//! this convention complex matrix algebra commutes with the embedding, which
//! lets the Kronecker-structured measurement operator `(G^{1/2} D)^T (x) U_R`
//! be applied without ever materializing the full real matrix.

use ndarray::{s, Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative tolerance of the power iteration used for spectral bounds.
pub const POWER_ITER_TOL: f64 = 1e-8;
/// Iteration cap of the power iteration.
pub const POWER_ITER_MAX: usize = 1000;
/// Inflation applied to the power-iteration estimate so that `J*I` majorizes.
pub const SPECTRAL_INFLATION: f64 = 1e-6;

/// Stack a complex vector as `[Re; Im]`.
pub fn complex_to_real(v: &[Complex64]) -> Array1<f64> {
    let n = v.len();
    let mut out = Array1::zeros(2 * n);
    for (i, z) in v.iter().enumerate() {
        out[i] = z.re;
        out[n + i] = z.im;
    }
    out
}

/// Inverse of [`complex_to_real`]; `x.len()` must be even.
pub fn real_to_complex(x: &Array1<f64>) -> Vec<Complex64> {
    let n = x.len() / 2;
    assert_eq!(2 * n, x.len(), "real embedding length must be even");
    (0..n).map(|i| Complex64::new(x[i], x[n + i])).collect()
}

/// Column-major vectorization of a complex matrix.
pub fn vec_mat(m: &Array2<Complex64>) -> Vec<Complex64> {
    let (rows, cols) = m.dim();
    let mut out = Vec::with_capacity(rows * cols);
    for c in 0..cols {
        for r in 0..rows {
            out.push(m[[r, c]]);
        }
    }
    out
}

/// Inverse of [`vec_mat`] for a known row count.
pub fn unvec_mat(v: &[Complex64], rows: usize) -> Array2<Complex64> {
    assert_eq!(v.len() % rows, 0);
    let cols = v.len() / rows;
    let mut out = Array2::zeros((rows, cols));
    for c in 0..cols {
        for r in 0..rows {
            out[[r, c]] = v[c * rows + r];
        }
    }
    out
}

/// `[[Re, -Im], [Im, Re]]` block embedding of a complex matrix.
pub fn embed_matrix(m: &Array2<Complex64>) -> Array2<f64> {
    let (rows, cols) = m.dim();
    let mut out = Array2::zeros((2 * rows, 2 * cols));
    for r in 0..rows {
        for c in 0..cols {
            let z = m[[r, c]];
            out[[r, c]] = z.re;
            out[[r, cols + c]] = -z.im;
            out[[rows + r, c]] = z.im;
            out[[rows + r, cols + c]] = z.re;
        }
    }
    out
}

/// The real-valued measurement operator `Phi`, either as an explicit matrix or
/// in the factored form `(G^{1/2} D)^T (x) U_R` that exploits the Kronecker
/// structure of the pilot model.
#[derive(Debug, Clone)]
pub enum MeasurementOp {
    Dense(Array2<f64>),
    Kronecker {
        /// Array response matrix, M x M_tilde.
        u_r: Array2<Complex64>,
        /// Gain-weighted pilot matrix `G^{1/2} D`, N x T.
        bmat: Array2<Complex64>,
    },
}

impl MeasurementOp {
    /// (rows, cols) of the real operator: (2MT, 2 M_tilde N).
    pub fn shape(&self) -> (usize, usize) {
        match self {
            MeasurementOp::Dense(a) => a.dim(),
            MeasurementOp::Kronecker { u_r, bmat } => {
                let (m, m_tilde) = u_r.dim();
                let (n, t) = bmat.dim();
                (2 * m * t, 2 * m_tilde * n)
            }
        }
    }

    /// `Phi * x`.
    pub fn apply(&self, x: &Array1<f64>) -> Array1<f64> {
        match self {
            MeasurementOp::Dense(a) => a.dot(x),
            MeasurementOp::Kronecker { u_r, bmat } => {
                let m_tilde = u_r.ncols();
                let xc = unvec_mat(&real_to_complex(x), m_tilde);
                // (B^T (x) U_R) vec(X) = vec(U_R X B)
                let yc = u_r.dot(&xc).dot(bmat);
                complex_to_real(&vec_mat(&yc))
            }
        }
    }

    /// `Phi^T * y`.
    pub fn apply_transpose(&self, y: &Array1<f64>) -> Array1<f64> {
        match self {
            MeasurementOp::Dense(a) => a.t().dot(y),
            MeasurementOp::Kronecker { u_r, bmat } => {
                let m = u_r.nrows();
                let zc = unvec_mat(&real_to_complex(y), m);
                // (B^T (x) U_R)^H vec(Z) = vec(U_R^H Z conj(B)^T)
                let uh = u_r.t().mapv(|z| z.conj());
                let bt_conj = bmat.mapv(|z| z.conj());
                let out = uh.dot(&zc).dot(&bt_conj.t());
                complex_to_real(&vec_mat(&out))
            }
        }
    }

    /// Row-wise sums of squares of the real operator (2MT entries).
    pub fn row_sq_norms(&self) -> Array1<f64> {
        match self {
            MeasurementOp::Dense(a) => a.mapv(|v| v * v).sum_axis(ndarray::Axis(1)),
            MeasurementOp::Kronecker { u_r, bmat } => {
                let (m, _) = u_r.dim();
                let (_, t) = bmat.dim();
                // |Phi_c|^2 row (m, t): sum_n |B_{n,t}|^2 * sum_mt |U_R[m, mt]|^2
                let u_row: Vec<f64> = (0..m)
                    .map(|r| u_r.row(r).iter().map(|z| z.norm_sqr()).sum())
                    .collect();
                let b_col: Vec<f64> = (0..t)
                    .map(|c| bmat.column(c).iter().map(|z| z.norm_sqr()).sum())
                    .collect();
                let mut out = Array1::zeros(2 * m * t);
                for tt in 0..t {
                    for mm in 0..m {
                        let v = u_row[mm] * b_col[tt];
                        out[tt * m + mm] = v;
                        out[m * t + tt * m + mm] = v;
                    }
                }
                out
            }
        }
    }

    /// Column sums of `w_i * Phi_{i,j}^2` (the diagonal of `Phi^T diag(w) Phi`).
    pub fn weighted_col_sq_norms(&self, w: &Array1<f64>) -> Array1<f64> {
        match self {
            MeasurementOp::Dense(a) => {
                let (_, cols) = a.dim();
                let mut out = Array1::zeros(cols);
                for (i, row) in a.rows().into_iter().enumerate() {
                    let wi = w[i];
                    for j in 0..cols {
                        out[j] += wi * row[j] * row[j];
                    }
                }
                out
            }
            MeasurementOp::Kronecker { u_r, bmat } => {
                let (m, m_tilde) = u_r.dim();
                let (n, t) = bmat.dim();
                let mt = m * t;
                // Complex-component weights; Re and Im rows carry equal
                // weights under any symmetric calibration, average them.
                // C[mt_idx, t] = sum_m w_(m,t) |U_R[m, mt_idx]|^2
                let mut c = Array2::<f64>::zeros((m_tilde, t));
                for tt in 0..t {
                    for mm in 0..m {
                        let wi = 0.5 * (w[tt * m + mm] + w[mt + tt * m + mm]);
                        for j in 0..m_tilde {
                            c[[j, tt]] += wi * u_r[[mm, j]].norm_sqr();
                        }
                    }
                }
                let mut out = Array1::zeros(2 * m_tilde * n);
                for nn in 0..n {
                    for j in 0..m_tilde {
                        let mut v = 0.0;
                        for tt in 0..t {
                            v += bmat[[nn, tt]].norm_sqr() * c[[j, tt]];
                        }
                        out[nn * m_tilde + j] = v;
                        out[m_tilde * n + nn * m_tilde + j] = v;
                    }
                }
                out
            }
        }
    }

    /// Materialize the dense real matrix. Intended for small instances and
    /// cross-checks; the Kronecker form at full scale does not fit in memory.
    pub fn to_dense(&self) -> Array2<f64> {
        match self {
            MeasurementOp::Dense(a) => a.clone(),
            MeasurementOp::Kronecker { u_r, bmat } => {
                let (m, m_tilde) = u_r.dim();
                let (n, t) = bmat.dim();
                let mut phi_c = Array2::<Complex64>::zeros((m * t, m_tilde * n));
                for tt in 0..t {
                    for mm in 0..m {
                        let row = tt * m + mm;
                        for nn in 0..n {
                            for j in 0..m_tilde {
                                phi_c[[row, nn * m_tilde + j]] = bmat[[nn, tt]] * u_r[[mm, j]];
                            }
                        }
                    }
                }
                embed_matrix(&phi_c)
            }
        }
    }

    /// Build `Phi^T diag(w) Phi` in the requested representation.
    ///
    /// `prefer_dense` materializes the full matrix; otherwise the exact
    /// factored form is used when the weights allow it, falling back to dense
    /// (small problems) or the diagonal approximation (large ones).
    pub fn weighted_gram(&self, w: &Array1<f64>, mode: GramMode) -> Omega2 {
        match mode {
            GramMode::Diagonal => Omega2::Diagonal(self.weighted_col_sq_norms(w)),
            GramMode::Dense => Omega2::Dense(self.dense_gram(w)),
            GramMode::Auto => {
                if let MeasurementOp::Kronecker { u_r, bmat } = self {
                    // The factored Gram drops the antenna factor U_R^H U_R
                    // and is exact only when that factor is the identity.
                    if has_orthonormal_columns(u_r) {
                        if let Some(w_t) =
                            per_pilot_uniform_weights(w, u_r.nrows(), bmat.ncols())
                        {
                            return Omega2::Kronecker {
                                gram: kron_gram(bmat, &w_t),
                                m_tilde: u_r.ncols(),
                            };
                        }
                    }
                }
                let (_, cols) = self.shape();
                if cols <= 4096 {
                    Omega2::Dense(self.dense_gram(w))
                } else {
                    Omega2::Diagonal(self.weighted_col_sq_norms(w))
                }
            }
        }
    }

    fn dense_gram(&self, w: &Array1<f64>) -> Array2<f64> {
        let a = self.to_dense();
        let wa = {
            let mut wa = a.clone();
            for (i, mut row) in wa.rows_mut().into_iter().enumerate() {
                row.mapv_inplace(|v| v * w[i]);
            }
            wa
        };
        a.t().dot(&wa)
    }
}

/// Requested Gram representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramMode {
    Auto,
    Dense,
    Diagonal,
}

/// `U^H U = I` within a small absolute tolerance.
fn has_orthonormal_columns(u: &Array2<Complex64>) -> bool {
    let cols = u.ncols();
    for i in 0..cols {
        for j in i..cols {
            let dot: Complex64 = u
                .column(i)
                .iter()
                .zip(u.column(j).iter())
                .map(|(a, b)| a.conj() * b)
                .sum();
            let expect = if i == j { 1.0 } else { 0.0 };
            if (dot - Complex64::new(expect, 0.0)).norm() > 1e-9 {
                return false;
            }
        }
    }
    true
}

/// If the weights are constant over antennas and over the Re/Im split within
/// each pilot symbol, return the per-symbol weights; otherwise `None`.
fn per_pilot_uniform_weights(w: &Array1<f64>, m: usize, t: usize) -> Option<Array1<f64>> {
    let mt = m * t;
    if w.len() != 2 * mt {
        return None;
    }
    let mut w_t = Array1::zeros(t);
    for tt in 0..t {
        let w0 = w[tt * m];
        for mm in 0..m {
            let rel = |v: f64| (v - w0).abs() <= 1e-9 * w0.abs().max(1e-300);
            if !rel(w[tt * m + mm]) || !rel(w[mt + tt * m + mm]) {
                return None;
            }
        }
        w_t[tt] = w0;
    }
    Some(w_t)
}

/// `conj(B) diag(w_t) B^T`, the N x N Hermitian Kronecker factor of the Gram.
fn kron_gram(bmat: &Array2<Complex64>, w_t: &Array1<f64>) -> Array2<Complex64> {
    let (n, t) = bmat.dim();
    let mut g = Array2::<Complex64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for tt in 0..t {
                acc += bmat[[i, tt]].conj() * bmat[[j, tt]] * w_t[tt];
            }
            g[[i, j]] = acc;
        }
    }
    g
}

/// The quadratic coefficient matrix `Omega_2 = A^T Sigma^-1 A` in one of three
/// exact-or-approximate representations.
#[derive(Debug, Clone)]
pub enum Omega2 {
    Dense(Array2<f64>),
    /// `gram (x) I_{m_tilde}` in the complex domain; exact whenever the
    /// per-component calibration is uniform.
    Kronecker {
        gram: Array2<Complex64>,
        m_tilde: usize,
    },
    Diagonal(Array1<f64>),
}

impl Omega2 {
    pub fn dim(&self) -> usize {
        match self {
            Omega2::Dense(a) => a.nrows(),
            Omega2::Kronecker { gram, m_tilde } => 2 * gram.nrows() * m_tilde,
            Omega2::Diagonal(d) => d.len(),
        }
    }

    pub fn matvec(&self, x: &Array1<f64>) -> Array1<f64> {
        match self {
            Omega2::Dense(a) => a.dot(x),
            Omega2::Kronecker { gram, m_tilde } => {
                let xc = unvec_mat(&real_to_complex(x), *m_tilde);
                // (G (x) I) vec(X) = vec(X G^T)
                let out = xc.dot(&gram.t());
                complex_to_real(&vec_mat(&out))
            }
            Omega2::Diagonal(d) => x * d,
        }
    }

    pub fn diag(&self) -> Array1<f64> {
        match self {
            Omega2::Dense(a) => a.diag().to_owned(),
            Omega2::Kronecker { gram, m_tilde } => {
                let n = gram.nrows();
                let mut out = Array1::zeros(2 * n * m_tilde);
                for nn in 0..n {
                    let v = gram[[nn, nn]].re;
                    for j in 0..*m_tilde {
                        out[nn * m_tilde + j] = v;
                        out[n * m_tilde + nn * m_tilde + j] = v;
                    }
                }
                out
            }
            Omega2::Diagonal(d) => d.clone(),
        }
    }

    pub fn quad_form(&self, x: &Array1<f64>) -> f64 {
        x.dot(&self.matvec(x))
    }

    /// Upper bound on the largest eigenvalue: power iteration inflated by
    /// `1 + 1e-6`, with a Gershgorin fallback when the iteration stalls.
    pub fn spectral_bound(&self) -> f64 {
        match self {
            Omega2::Diagonal(d) => {
                (1.0 + SPECTRAL_INFLATION) * d.iter().cloned().fold(0.0_f64, f64::max)
            }
            Omega2::Dense(a) => match power_iteration_real(a) {
                Some(l) => (1.0 + SPECTRAL_INFLATION) * l,
                None => gershgorin_real(a),
            },
            Omega2::Kronecker { gram, .. } => match power_iteration_hermitian(gram) {
                Some(l) => (1.0 + SPECTRAL_INFLATION) * l,
                None => gershgorin_hermitian(gram),
            },
        }
    }
}

fn power_iteration_real(a: &Array2<f64>) -> Option<f64> {
    let n = a.nrows();
    if n == 0 {
        return Some(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b97f4a7c15);
    let mut v: Array1<f64> = Array1::from_iter((0..n).map(|_| rng.gen_range(-1.0..1.0)));
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm);
    let mut lambda = 0.0;
    for _ in 0..POWER_ITER_MAX {
        let w = a.dot(&v);
        let l = v.dot(&w);
        let wn = w.dot(&w).sqrt();
        if wn == 0.0 {
            return Some(0.0);
        }
        v = w / wn;
        if (l - lambda).abs() <= POWER_ITER_TOL * l.abs().max(f64::MIN_POSITIVE) {
            return Some(l.max(wn));
        }
        lambda = l;
    }
    None
}

fn power_iteration_hermitian(g: &Array2<Complex64>) -> Option<f64> {
    let n = g.nrows();
    if n == 0 {
        return Some(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b97f4a7c15);
    let mut v: Array1<Complex64> = Array1::from_iter(
        (0..n).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))),
    );
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.mapv_inplace(|z| z / norm);
    let mut lambda = 0.0;
    for _ in 0..POWER_ITER_MAX {
        let w = g.dot(&v);
        let l: f64 = v
            .iter()
            .zip(w.iter())
            .map(|(a, b)| (a.conj() * b).re)
            .sum();
        let wn = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if wn == 0.0 {
            return Some(0.0);
        }
        v = w.mapv(|z| z / wn);
        if (l - lambda).abs() <= POWER_ITER_TOL * l.abs().max(f64::MIN_POSITIVE) {
            return Some(l.max(wn));
        }
        lambda = l;
    }
    None
}

fn gershgorin_real(a: &Array2<f64>) -> f64 {
    a.rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum())
        .fold(0.0_f64, f64::max)
}

fn gershgorin_hermitian(g: &Array2<Complex64>) -> f64 {
    g.rows()
        .into_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum())
        .fold(0.0_f64, f64::max)
}

/// First/second halves of a real-embedded vector as complex pairs are used all
/// over the prior; this returns the per-pair squared magnitudes.
pub fn pair_sq_magnitudes(x: &Array1<f64>) -> Array1<f64> {
    let n = x.len() / 2;
    let mut out = Array1::zeros(n);
    let (re, im) = (x.slice(s![..n]), x.slice(s![n..]));
    for i in 0..n {
        out[i] = re[i] * re[i] + im[i] * im[i];
    }
    out
}
