//! Dense linear algebra and probability-simplex primitives shared by every
//! other module.
//!
//! Matrices and vectors are plain `nalgebra` dynamic types. The only domain
//! newtype here is [`Distribution`], which carries the simplex invariant.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Absolute tolerance on `|sum(p) - 1|` accepted by [`Distribution::new`].
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Largest condition estimate accepted by [`solve_linear`].
pub const MAX_CONDITION: f64 = 1e12;

/// A probability vector over a finite set.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Dimension("distribution over an empty set".into()));
        }
        if let Some(x) = p.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::Domain(format!("invalid probability entry {x}")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Domain(format!(
                "probabilities sum to {total:.15}, not 1"
            )));
        }
        Ok(Self(p))
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution over an empty set");
        Self(vec![1.0 / n as f64; n])
    }

    /// Point mass on `index`.
    pub fn point(n: usize, index: usize) -> Self {
        assert!(index < n);
        let mut p = vec![0.0; n];
        p[index] = 1.0;
        Self(p)
    }

    /// Softmax of unnormalized log-weights, computed with a max shift.
    pub fn from_log_weights(w: &[f64]) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::Dimension("softmax of an empty vector".into()));
        }
        if w.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(Error::Domain("non-finite log-weight".into()));
        }
        Ok(Self(softmax(w)))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn to_vector(&self) -> Vector {
        Vector::from_column_slice(&self.0)
    }

    pub fn min_prob(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.0.iter().all(|p| *p > 0.0)
    }

    /// Natural-log probabilities; zero entries map to `-inf`.
    pub fn log_probs(&self) -> Vec<f64> {
        self.0.iter().map(|p| p.ln()).collect()
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        assert_eq!(self.len(), v.len());
        self.0.iter().zip(v).map(|(p, x)| p * x).sum()
    }
}

impl std::ops::Index<usize> for Distribution {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Checks the simplex invariant on a raw slice without constructing a value.
pub fn is_distribution(p: &[f64]) -> bool {
    !p.is_empty()
        && p.iter().all(|x| x.is_finite() && *x >= 0.0)
        && (p.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

/// Numerically stable `log(sum(exp(x)))`.
pub fn logsumexp(x: &[f64]) -> f64 {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Max-shifted softmax. `-inf` entries receive probability zero.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

/// Shifts log-weights in place so that they are normalized log-probabilities.
pub fn normalize_log_weights(w: &mut [f64]) {
    let lse = logsumexp(w);
    w.iter_mut().for_each(|v| *v -= lse);
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_to_simplex(v: &[f64]) -> Result<Distribution> {
    if v.is_empty() {
        return Err(Error::Dimension("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("non-finite entry in projection input".into()));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        cumsum += x;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    let mut p: Vec<f64> = v.iter().map(|x| (x - theta).max(0.0)).collect();
    // remove the rounding residue so the simplex tolerance holds exactly
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= total);
    Distribution::new(p)
}

/// Shannon entropy with the `0 log 0 = 0` convention.
pub fn entropy(p: &Distribution) -> f64 {
    -p.as_slice()
        .iter()
        .filter(|x| **x > 0.0)
        .map(|x| x * x.ln())
        .sum::<f64>()
}

/// `KL(p || q)`; requires `supp(p) ⊆ supp(q)`.
pub fn kl_divergence(p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!(
            "KL between distributions of sizes {} and {}",
            p.len(),
            q.len()
        )));
    }
    let mut kl = 0.0;
    for (pi, qi) in p.as_slice().iter().zip(q.as_slice()) {
        if *pi == 0.0 {
            continue;
        }
        if *qi == 0.0 {
            return Err(Error::Domain("support of p is not contained in support of q".into()));
        }
        kl += pi * (pi / qi).ln();
    }
    Ok(kl.max(0.0))
}

/// Total variation distance `0.5 * ||p - q||_1`.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

pub fn sup_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

fn one_norm(m: &Mat) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `A x = b` by LU with partial pivoting.
///
/// Rejects systems whose 1-norm condition number exceeds [`MAX_CONDITION`].
pub fn solve_linear(a: &Mat, b: &Vector) -> Result<Vector> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Dimension(format!(
            "system {}x{} with right-hand side of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if n == 0 {
        return Ok(Vector::zeros(0));
    }
    let lu = a.clone().lu();
    let inv = lu.try_inverse().ok_or(Error::IllConditioned {
        condition: f64::INFINITY,
    })?;
    let condition = one_norm(a) * one_norm(&inv);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    let mut x = lu
        .solve(b)
        .ok_or(Error::IllConditioned { condition })?;
    // one step of iterative refinement
    let r = b - a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    let residual = sup_norm(&(a * &x - b));
    let scale = 1.0 + sup_norm(b);
    if residual > 1e-10 * scale {
        return Err(Error::Numeric(format!(
            "linear solve residual {residual:.3e} exceeds tolerance"
        )));
    }
    Ok(x)
}

fn require_square(m: &Mat, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Mat) -> Result<f64> {
    require_square(m, "spectral radius argument")?;
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    Ok(m
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Largest singular value.
pub fn spectral_norm(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Smallest singular value.
pub fn sigma_min(m: &Mat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyapunovMode {
    /// `X = Mᵀ X M + W` (closed-loop cost matrix).
    TransposeOnLeft,
    /// `X = M X Mᵀ + W` (state correlation matrix).
    TransposeOnRight,
}

/// Solves the discrete Lyapunov equation by squaring-and-doubling of the
/// series `sum_t (Mᵀ)^t W M^t` (or its right-handed counterpart).
pub fn solve_discrete_lyapunov(m: &Mat, w: &Mat, mode: LyapunovMode) -> Result<Mat> {
    require_square(m, "Lyapunov iteration matrix")?;
    let d = m.nrows();
    if w.nrows() != d || w.ncols() != d {
        return Err(Error::Dimension(format!(
            "Lyapunov right-hand side is {}x{}, expected {d}x{d}",
            w.nrows(),
            w.ncols()
        )));
    }
    let radius = spectral_radius(m)?;
    if radius >= 1.0 {
        return Err(Error::Unstable { radius });
    }
    let mut x = w.clone();
    let mut power = m.clone();
    for _ in 0..128 {
        let increment = match mode {
            LyapunovMode::TransposeOnLeft => power.transpose() * &x * &power,
            LyapunovMode::TransposeOnRight => &power * &x * power.transpose(),
        };
        x += &increment;
        power = &power * &power;
        if max_abs(&increment) <= f64::EPSILON * 1e-2 * max_abs(&x) || max_abs(&power) == 0.0 {
            break;
        }
    }
    let x = (&x + x.transpose()) * 0.5;
    let image = match mode {
        LyapunovMode::TransposeOnLeft => m.transpose() * &x * m,
        LyapunovMode::TransposeOnRight => m * &x * m.transpose(),
    };
    let residual = max_abs(&(&x - image - w));
    if residual > 1e-10 * max_abs(w).max(f64::MIN_POSITIVE) {
        return Err(Error::Numeric(format!(
            "Lyapunov residual {residual:.3e} (spectral radius {radius:.6})"
        )));
    }
    Ok(x)
}

/// Cholesky succeeds on the symmetric part and the matrix is symmetric to
/// `1e-10` relative.
pub fn is_symmetric_positive_definite(m: &Mat) -> bool {
    if m.nrows() != m.ncols() || m.is_empty() {
        return false;
    }
    let asym = max_abs(&(m - m.transpose()));
    asym <= 1e-10 * max_abs(m).max(1.0) && m.clone().cholesky().is_some()
}
