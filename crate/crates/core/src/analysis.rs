//! Tracking metrics, stability checks and the ultimate-bound certificate.

use std::fmt::{self, Write as _};

use nalgebra::{DMatrix, DVector, Vector2};
use thiserror::Error;

use crate::linalg;

/// Real parts must be below `-HURWITZ_MARGIN`.
pub const HURWITZ_MARGIN: f64 = 1e-9;
/// Relative Frobenius residual accepted from [`lyapunov_solve`].
pub const LYAPUNOV_TOL: f64 = 1e-8;
/// Fraction of the horizon used as "steady state".
pub const STEADY_FRACTION: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("A_c is not Hurwitz (largest real part {max_re:.3e}); no positive-definite solution")]
    NotHurwitz { max_re: f64 },
    #[error("Q must be symmetric positive definite")]
    NotSpd,
    #[error("Lyapunov residual {residual:.3e} exceeds {limit:.3e}")]
    Residual { residual: f64, limit: f64 },
    #[error("Schur block system is singular")]
    SingularBlock,
    #[error("attack bound is zero; ρ_d is undefined")]
    ZeroBound,
    #[error("need at least three uniformly spaced samples")]
    TooFewSamples,
}

pub fn is_hurwitz(a: &DMatrix<f64>) -> bool {
    a.is_square() && linalg::eigenvalues(a).iter().all(|e| e.re < -HURWITZ_MARGIN)
}

fn max_real_part(a: &DMatrix<f64>) -> f64 {
    linalg::eigenvalues(a).iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max)
}

/// `‖A^⊤P + PA + Q‖_F`
pub fn lyapunov_residual(a: &DMatrix<f64>, p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    (a.transpose() * p + p * a + q).norm()
}

/// Diagonal blocks of a real quasi-triangular matrix, as `(start, size)`.
/// Consecutive nonzero subdiagonal entries are merged into one block.
fn schur_blocks(t: &DMatrix<f64>) -> Vec<(usize, usize)> {
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && t[(end, end - 1)] != 0.0 {
            end += 1;
        }
        blocks.push((start, end - start));
        start = end;
    }
    blocks
}

/// Solves `A^⊤P + PA = −Q` by Bartels–Stewart on the real Schur form of `A`.
///
/// With `A = U T U^⊤`, `X = U^⊤ P U` satisfies `T^⊤X + XT = −U^⊤QU`, which is
/// solved one diagonal block-column of `T` at a time.
pub fn lyapunov_solve(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>, AnalysisError> {
    if !a.is_square() {
        return Err(AnalysisError::NotSquare(a.nrows(), a.ncols()));
    }
    let n = a.nrows();
    if q.shape() != (n, n) {
        return Err(AnalysisError::Dimension(format!("A is {n}x{n}, Q is {}x{}", q.nrows(), q.ncols())));
    }
    if (q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0) || linalg::min_symmetric_eigenvalue(q) <= 0.0 {
        return Err(AnalysisError::NotSpd);
    }
    let max_re = max_real_part(a);
    if !(max_re < -HURWITZ_MARGIN) {
        return Err(AnalysisError::NotHurwitz { max_re });
    }

    let (u, t) = a.clone().schur().unpack();
    let c = u.transpose() * q * &u;
    let tt = t.transpose();
    let mut x = DMatrix::<f64>::zeros(n, n);
    for (start, size) in schur_blocks(&t) {
        let mut r = -c.columns(start, size).clone_owned();
        if start > 0 {
            r -= x.columns(0, start) * t.view((0, start), (start, size));
        }
        // (I_b ⊗ T^⊤ + T_JJ^⊤ ⊗ I_n) vec(X_J) = vec(R)
        let nb = n * size;
        let mut sys = DMatrix::<f64>::zeros(nb, nb);
        for col in 0..size {
            sys.view_mut((col * n, col * n), (n, n)).copy_from(&tt);
            for row in 0..size {
                let v = t[(start + col, start + row)];
                if v != 0.0 {
                    for k in 0..n {
                        sys[(row * n + k, col * n + k)] += v;
                    }
                }
            }
        }
        let rhs = DVector::from_column_slice(r.as_slice());
        let sol = sys.lu().solve(&rhs).ok_or(AnalysisError::SingularBlock)?;
        x.columns_mut(start, size).copy_from_slice(sol.as_slice());
    }

    let p = &u * x * u.transpose();
    let p = (&p + p.transpose()) * 0.5;
    let residual = lyapunov_residual(a, &p, q);
    let limit = LYAPUNOV_TOL * q.norm();
    if !(residual <= limit) {
        return Err(AnalysisError::Residual { residual, limit });
    }
    Ok(p)
}

/// `S ∈ ℝ^{2m×6m}` selecting `ε̄` out of `η̄`.
pub fn selection_matrix(m: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(2 * m, 6 * m);
    for i in 0..m {
        s[(2 * i, 6 * i)] = 1.0;
        s[(2 * i + 1, 6 * i + 1)] = 1.0;
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessCertificate {
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub rho_d: f64,
    pub abar: f64,
    pub c_eps: f64,
    /// `‖P𝐁‖₂`
    pub pb_norm: f64,
    pub lambda_min_q: f64,
    pub lambda_min_p: f64,
    pub residual: f64,
    /// `2‖P𝐁‖₂ ρ_d ā / λ_min(Q)`
    pub eta_bound: f64,
    /// `c_ε ‖S‖₂ eta_bound`
    pub delta: f64,
}

/// Builds the certificate for `η̇ = A_c η + 𝐁 ρ̄`, `‖ρ̄‖ ≤ ρ_d ā`.
pub fn ultimate_bound(
    a_c: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    rho_d: f64,
    abar: f64,
    s: &DMatrix<f64>,
    c_eps: f64,
) -> Result<RobustnessCertificate, AnalysisError> {
    if b.nrows() != a_c.nrows() || s.ncols() != a_c.nrows() {
        return Err(AnalysisError::Dimension("B or S does not match A_c".into()));
    }
    let p = lyapunov_solve(a_c, q)?;
    let pb_norm = linalg::spectral_norm(&(&p * b));
    let lambda_min_q = linalg::min_symmetric_eigenvalue(q);
    let eta_bound = 2.0 * pb_norm * rho_d * abar / lambda_min_q;
    let delta = c_eps * linalg::spectral_norm(s) * eta_bound;
    Ok(RobustnessCertificate {
        residual: lyapunov_residual(a_c, &p, q),
        lambda_min_p: linalg::min_symmetric_eigenvalue(&p),
        p,
        q: q.clone(),
        rho_d,
        abar,
        c_eps,
        pb_norm,
        lambda_min_q,
        eta_bound,
        delta,
    })
}

fn uniform_step(t: &[f64]) -> Result<f64, AnalysisError> {
    if t.len() < 3 {
        return Err(AnalysisError::TooFewSamples);
    }
    Ok((t[t.len() - 1] - t[0]) / (t.len() - 1) as f64)
}

/// `‖ρ̄(t_k)‖` with `ρ̄ = 𝐁^⊤[η̇ − A_c η]` and `η̇` by central differences.
/// Endpoints are omitted.
pub fn disturbance_residuals(t: &[f64], eta: &[DVector<f64>], a_c: &DMatrix<f64>) -> Result<Vec<f64>, AnalysisError> {
    if eta.len() != t.len() {
        return Err(AnalysisError::Dimension(format!("{} times, {} states", t.len(), eta.len())));
    }
    let dt = uniform_step(t)?;
    let m = a_c.nrows() / 6;
    Ok((1..t.len() - 1)
        .map(|k| {
            let r = (&eta[k + 1] - &eta[k - 1]) / (2.0 * dt) - a_c * &eta[k];
            (0..m).map(|i| r[6 * i + 4].powi(2) + r[6 * i + 5].powi(2)).sum::<f64>().sqrt()
        })
        .collect())
}

/// `max_t ‖ρ̄(t)‖ / ā`
pub fn estimate_rho_d(residuals: &[f64], abar: f64) -> Result<f64, AnalysisError> {
    if !(abar > 0.0) {
        return Err(AnalysisError::ZeroBound);
    }
    Ok(residuals.iter().copied().fold(0.0, f64::max) / abar)
}

/// Index of the first sample in the final `fraction` of the horizon.
pub fn steady_start(t: &[f64], fraction: f64) -> usize {
    match (t.first(), t.last()) {
        (Some(&t0), Some(&t1)) => {
            let cut = t1 - fraction * (t1 - t0);
            t.iter().position(|&s| s >= cut - 1e-12).unwrap_or(t.len())
        }
        _ => 0,
    }
}

/// Max over the final `fraction` of the horizon (the limsup surrogate).
pub fn steady_max(t: &[f64], y: &[f64], fraction: f64) -> f64 {
    y[steady_start(t, fraction)..].iter().copied().fold(0.0, f64::max)
}

/// Least-squares exponential rate of `y` after `t_start`, using only samples above
/// `floor_rel · max y` so the roundoff plateau is ignored. Returns `−slope` of `ln y`.
pub fn fit_decay_rate(t: &[f64], y: &[f64], t_start: f64, floor_rel: f64) -> Option<f64> {
    let peak = y.iter().copied().fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|&(&s, &v)| s >= t_start && v > floor_rel * peak && v > 0.0)
        .map(|(&s, &v)| (s, v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |(a, b), &(s, v)| (a + s / n, b + v / n));
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |(a, b), &(s, v)| (a + (s - mt) * (v - my), b + (s - mt).powi(2)));
    (sxx > 0.0).then(|| -sxy / sxx)
}

/// Averaged tracking errors over a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsSeries {
    pub t: Vec<f64>,
    /// `(1/m) Σ ‖y_i − y_0‖`
    pub e_tilde: Vec<f64>,
    /// `(1/m) Σ ‖y_i − z_i‖`
    pub eps_tilde: Vec<f64>,
    pub eta_norm: Vec<f64>,
    /// `‖y_i − y_0‖`, indexed `[sample][vehicle]`.
    pub output_errors: Vec<Vec<f64>>,
    /// `‖y_i − z_i‖`, indexed `[sample][vehicle]`.
    pub local_errors: Vec<Vec<f64>>,
}

/// `outputs[k][i]` and `refs[k][i]` are `y_i` and `z_i` at sample `k`.
pub fn compute_metrics(
    t: &[f64],
    outputs: &[Vec<Vector2<f64>>],
    nav: &[Vector2<f64>],
    refs: &[Vec<Vector2<f64>>],
    eta_norm: &[f64],
) -> MetricsSeries {
    let mut ms = MetricsSeries { t: t.to_vec(), eta_norm: eta_norm.to_vec(), ..Default::default() };
    for k in 0..t.len() {
        let out: Vec<f64> = outputs[k].iter().map(|y| (y - nav[k]).norm()).collect();
        let loc: Vec<f64> = outputs[k].iter().zip(&refs[k]).map(|(y, z)| (y - z).norm()).collect();
        let m = out.len().max(1) as f64;
        ms.e_tilde.push(out.iter().sum::<f64>() / m);
        ms.eps_tilde.push(loc.iter().sum::<f64>() / m);
        ms.output_errors.push(out);
        ms.local_errors.push(loc);
    }
    ms
}

/// Certificate together with what was observed in the run.
#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub label: String,
    pub certificate: RobustnessCertificate,
    pub worst_case: bool,
    pub limsup_eta: Option<f64>,
    pub limsup_output: Option<f64>,
}

impl CertificateReport {
    pub fn eta_within_bound(&self) -> Option<bool> {
        self.limsup_eta.map(|v| v <= self.certificate.eta_bound)
    }

    pub fn output_within_bound(&self) -> Option<bool> {
        self.limsup_output.map(|v| v <= self.certificate.delta)
    }
}

impl fmt::Display for CertificateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.certificate;
        let mut s = String::new();
        writeln!(s, "certificate: {}", self.label)?;
        writeln!(s, "mode: {}", if self.worst_case { "worst-case" } else { "guarded" })?;
        writeln!(s, "dimension: {}", c.p.nrows())?;
        writeln!(s, "lyapunov_residual: {:.6e}", c.residual)?;
        writeln!(s, "lambda_min_P: {:.6e}", c.lambda_min_p)?;
        writeln!(s, "lambda_min_Q: {:.6e}", c.lambda_min_q)?;
        writeln!(s, "norm_PB: {:.6e}", c.pb_norm)?;
        writeln!(s, "rho_d: {:.6e} (empirical)", c.rho_d)?;
        writeln!(s, "abar: {:.6e}", c.abar)?;
        writeln!(s, "c_eps: {:.6e}", c.c_eps)?;
        writeln!(s, "eta_bound: {:.6e}", c.eta_bound)?;
        writeln!(s, "delta: {:.6e}", c.delta)?;
        if let Some(v) = self.limsup_eta {
            writeln!(s, "limsup_eta: {v:.6e} ({})", if v <= c.eta_bound { "within bound" } else { "EXCEEDS bound" })?;
        }
        if let Some(v) = self.limsup_output {
            writeln!(s, "limsup_output_error: {v:.6e} ({})", if v <= c.delta { "within delta" } else { "EXCEEDS delta" })?;
        }
        f.write_str(&s)
    }
}
