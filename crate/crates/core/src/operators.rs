//! One-dimensional summation-by-parts operators on the reference element [-1, 1].
//!
//! Nodal Lagrange bases on Legendre-Gauss-Lobatto (LGL) or Legendre-Gauss nodes.
//! Every operator satisfies `M D + Dᵀ M = Rᵀ B N R` with `B = diag(1, 1)` and
//! `N = diag(-1, +1)`. Multidimensional operators are never materialized; the
//! tensor-product structure lives in the loop nests of `discretization`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Largest supported polynomial degree.
pub const MAX_DEGREE: usize = 15;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeFamily {
    Lgl,
    Gauss,
}

impl std::fmt::Display for NodeFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeFamily::Lgl => f.write_str("lgl"),
            NodeFamily::Gauss => f.write_str("gauss"),
        }
    }
}

/// Reference-element operator set of one node family and degree.
#[derive(Debug, Clone)]
pub struct SbpOperator1D {
    pub family: NodeFamily,
    pub degree: usize,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `(p+1) × (p+1)` differentiation matrix.
    pub derivative: DMatrix<f64>,
    /// `2 × (p+1)`, rows evaluate at -1 and +1.
    pub boundary_interp: DMatrix<f64>,
}

impl SbpOperator1D {
    pub fn n_nodes(&self) -> usize {
        self.degree + 1
    }

    pub fn mass(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.weights))
    }

    /// `Rᵀ B N R`.
    pub fn boundary_operator(&self) -> DMatrix<f64> {
        boundary_operator(&self.boundary_interp)
    }

    /// Entrywise maximum of `M D + Dᵀ M - Rᵀ B N R`.
    pub fn sbp_residual(&self) -> f64 {
        let m = self.mass();
        let md = &m * &self.derivative;
        let res = &md + md.transpose() - self.boundary_operator();
        res.amax()
    }

    /// Row-major copy of the derivative matrix.
    pub fn derivative_row_major(&self) -> Vec<f64> {
        row_major(&self.derivative)
    }

    /// Interpolation to arbitrary points in [-1, 1].
    pub fn interpolation_to(&self, points: &[f64]) -> DMatrix<f64> {
        lagrange_interpolation_matrix(&self.nodes, points)
    }
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for k in 0..m.ncols() {
            out.push(m[(i, k)]);
        }
    }
    out
}

fn boundary_operator(r: &DMatrix<f64>) -> DMatrix<f64> {
    let n = r.ncols();
    let mut e = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            e[(i, k)] = r[(1, i)] * r[(1, k)] - r[(0, i)] * r[(0, k)];
        }
    }
    e
}

fn check_degree(p: usize) -> Result<()> {
    if p < 1 || p > MAX_DEGREE {
        return Err(Error::Parameter {
            name: "degree",
            reason: format!("polynomial degree must be in 1..={MAX_DEGREE}, got {p}"),
        });
    }
    Ok(())
}

/// Legendre polynomial `P_n(x)` and its derivative.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    let (mut dp_prev, mut dp) = (0.0, 1.0);
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        let dp_next = dp_prev + (2.0 * kf + 1.0) * p;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
    }
    (p, dp)
}

/// LGL nodes and weights for degree `p` (`p + 1` nodes).
pub fn lgl_nodes_weights(p: usize) -> (Vec<f64>, Vec<f64>) {
    let n = p + 1;
    let mut x = vec![0.0; n];
    x[0] = -1.0;
    x[p] = 1.0;
    let pf = p as f64;
    // interior nodes are roots of P'_p; only the left half is iterated
    for i in 1..(n / 2) {
        let mut xi = -(std::f64::consts::PI * i as f64 / pf).cos();
        for _ in 0..NEWTON_MAX_ITER {
            let (lp, dlp) = legendre(p, xi);
            let d2lp = (2.0 * xi * dlp - pf * (pf + 1.0) * lp) / (1.0 - xi * xi);
            let dx = dlp / d2lp;
            xi -= dx;
            if dx.abs() <= NEWTON_TOL * xi.abs().max(1.0) {
                break;
            }
        }
        x[i] = xi;
        x[p - i] = -xi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    let w = x
        .iter()
        .map(|&xi| {
            let (lp, _) = legendre(p, xi);
            2.0 / (pf * (pf + 1.0) * lp * lp)
        })
        .collect();
    (x, w)
}

/// Gauss-Legendre nodes and weights with `p + 1` nodes.
pub fn gauss_nodes_weights(p: usize) -> (Vec<f64>, Vec<f64>) {
    let n = p + 1;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut xi = -(std::f64::consts::PI * (2.0 * i as f64 + 1.0) / (2.0 * nf)).cos();
        if n % 2 == 1 && i == n / 2 {
            xi = 0.0;
        } else {
            for _ in 0..NEWTON_MAX_ITER {
                let (lp, dlp) = legendre(n, xi);
                let dx = lp / dlp;
                xi -= dx;
                if dx.abs() <= NEWTON_TOL * xi.abs().max(1.0) {
                    break;
                }
            }
        }
        let (_, dlp) = legendre(n, xi);
        let wi = 2.0 / ((1.0 - xi * xi) * dlp * dlp);
        x[i] = xi;
        x[n - 1 - i] = -xi;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn barycentric_weights(x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let prod: f64 = (0..x.len())
                .filter(|&k| k != i)
                .map(|k| x[i] - x[k])
                .product();
            1.0 / prod
        })
        .collect()
}

/// Matrix evaluating the Lagrange interpolant through `nodes` at `points`.
pub fn lagrange_interpolation_matrix(nodes: &[f64], points: &[f64]) -> DMatrix<f64> {
    let lambda = barycentric_weights(nodes);
    let mut m = DMatrix::zeros(points.len(), nodes.len());
    for (r, &xr) in points.iter().enumerate() {
        if let Some(k) = nodes.iter().position(|&xk| xk == xr) {
            m[(r, k)] = 1.0;
            continue;
        }
        let terms: Vec<f64> = nodes
            .iter()
            .zip(&lambda)
            .map(|(&xk, &lk)| lk / (xr - xk))
            .collect();
        let denom: f64 = terms.iter().sum();
        for k in 0..nodes.len() {
            m[(r, k)] = terms[k] / denom;
        }
    }
    m
}

/// Lagrange differentiation matrix via barycentric weights; the diagonal uses
/// the negative-sum trick so that `D 1 = 0`.
fn lagrange_derivative_matrix(x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let lambda = barycentric_weights(x);
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let mut diag = 0.0;
        for k in 0..n {
            if k != i {
                let v = (lambda[k] / lambda[i]) / (x[i] - x[k]);
                d[(i, k)] = v;
                diag -= v;
            }
        }
        d[(i, i)] = diag;
    }
    d
}

fn build(family: NodeFamily, p: usize, x: Vec<f64>, w: Vec<f64>) -> SbpOperator1D {
    let n = p + 1;
    let raw = lagrange_derivative_matrix(&x);
    let boundary_interp = match family {
        NodeFamily::Lgl => {
            let mut r = DMatrix::zeros(2, n);
            r[(0, 0)] = 1.0;
            r[(1, p)] = 1.0;
            r
        }
        NodeFamily::Gauss => lagrange_interpolation_matrix(&x, &[-1.0, 1.0]),
    };
    // Q = M D is split into its skew part plus half the boundary operator,
    // which removes rounding from the SBP identity and fixes the diagonal.
    let e = boundary_operator(&boundary_interp);
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            let q_ik = w[i] * raw[(i, k)];
            let q_ki = w[k] * raw[(k, i)];
            let qs = if i == k {
                0.5 * e[(i, i)]
            } else {
                0.5 * (q_ik - q_ki) + 0.5 * e[(i, k)]
            };
            d[(i, k)] = qs / w[i];
        }
    }
    SbpOperator1D {
        family,
        degree: p,
        nodes: x,
        weights: w,
        derivative: d,
        boundary_interp,
    }
}

pub fn lgl_operator(p: usize) -> Result<SbpOperator1D> {
    check_degree(p)?;
    let (x, w) = lgl_nodes_weights(p);
    Ok(build(NodeFamily::Lgl, p, x, w))
}

pub fn gauss_operator(p: usize) -> Result<SbpOperator1D> {
    check_degree(p)?;
    let (x, w) = gauss_nodes_weights(p);
    Ok(build(NodeFamily::Gauss, p, x, w))
}

pub fn sbp_operator(family: NodeFamily, p: usize) -> Result<SbpOperator1D> {
    match family {
        NodeFamily::Lgl => lgl_operator(p),
        NodeFamily::Gauss => gauss_operator(p),
    }
}

/// Flux-differencing operator `2D - M⁻¹ Rᵀ B N R`, skew-symmetric with respect to `M`.
#[derive(Debug, Clone)]
pub struct FluxDiffOperator1D {
    pub degree: usize,
    pub dsplit: DMatrix<f64>,
    /// Row-major copy of `dsplit` for kernels.
    pub dsplit_flat: Vec<f64>,
    pub weights: Vec<f64>,
}

impl FluxDiffOperator1D {
    #[inline(always)]
    pub fn entry(&self, i: usize, k: usize) -> f64 {
        self.dsplit_flat[i * (self.degree + 1) + k]
    }

    /// Maximum entry of `M Dsplit + (M Dsplit)ᵀ`.
    pub fn skew_residual(&self) -> f64 {
        let n = self.degree + 1;
        let mut r = 0.0_f64;
        for i in 0..n {
            for k in 0..n {
                let s = self.weights[i] * self.dsplit[(i, k)] + self.weights[k] * self.dsplit[(k, i)];
                r = r.max(s.abs());
            }
        }
        r
    }
}

pub fn build_dsplit(op: &SbpOperator1D) -> Result<FluxDiffOperator1D> {
    if op.family != NodeFamily::Lgl {
        return Err(Error::UnsupportedOperator(format!(
            "the flux-differencing operator needs a diagonal boundary operator, got {} nodes",
            op.family
        )));
    }
    let n = op.n_nodes();
    let mut dsplit = &op.derivative * 2.0;
    dsplit[(0, 0)] += 1.0 / op.weights[0];
    dsplit[(n - 1, n - 1)] -= 1.0 / op.weights[n - 1];
    Ok(FluxDiffOperator1D {
        degree: op.degree,
        dsplit_flat: row_major(&dsplit),
        dsplit,
        weights: op.weights.clone(),
    })
}

/// Hybridized operators over the stacked node set `[volume nodes; face -1; face +1]`.
#[derive(Debug, Clone)]
pub struct HybridizedOperators1D {
    pub degree: usize,
    /// `½ [[MD - (MD)ᵀ, RᵀBN], [-BNR, 0]]`.
    pub q_h: DMatrix<f64>,
    /// `[[0, RᵀBN], [-BNR, 0]]`.
    pub b_h: DMatrix<f64>,
    /// `M⁻¹ (MD - (MD)ᵀ)`, the volume-volume block lifted by the mass matrix.
    pub volume_skew: FluxDiffOperator1D,
    pub weights: Vec<f64>,
    /// Row-major `2 × (p+1)` boundary interpolation.
    pub boundary_interp: Vec<f64>,
}

impl HybridizedOperators1D {
    pub fn n_total(&self) -> usize {
        self.degree + 3
    }

    #[inline(always)]
    pub fn r(&self, side: usize, i: usize) -> f64 {
        self.boundary_interp[side * (self.degree + 1) + i]
    }
}

pub fn build_hybridized(op: &SbpOperator1D) -> HybridizedOperators1D {
    let n = op.n_nodes();
    let nt = n + 2;
    let m = op.mass();
    let md = &m * &op.derivative;
    let skew = &md - md.transpose();
    let bn = [-1.0, 1.0];
    let mut q_h = DMatrix::zeros(nt, nt);
    let mut b_h = DMatrix::zeros(nt, nt);
    for i in 0..n {
        for k in 0..n {
            q_h[(i, k)] = 0.5 * skew[(i, k)];
        }
        for side in 0..2 {
            let rt_bn = op.boundary_interp[(side, i)] * bn[side];
            b_h[(i, n + side)] = rt_bn;
            b_h[(n + side, i)] = -rt_bn;
            q_h[(i, n + side)] = 0.5 * rt_bn;
            q_h[(n + side, i)] = -0.5 * rt_bn;
        }
    }
    let mut lifted = DMatrix::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            lifted[(i, k)] = skew[(i, k)] / op.weights[i];
        }
    }
    HybridizedOperators1D {
        degree: op.degree,
        q_h,
        b_h,
        volume_skew: FluxDiffOperator1D {
            degree: op.degree,
            dsplit_flat: row_major(&lifted),
            dsplit: lifted,
            weights: op.weights.clone(),
        },
        weights: op.weights.clone(),
        boundary_interp: row_major(&op.boundary_interp),
    }
}

/// Interpolation to a degree-`q` node set and the L2 projection back.
#[derive(Debug, Clone)]
pub struct TransferMatrices {
    pub p: usize,
    pub q: usize,
    /// `(q+1) × (p+1)`.
    pub interp: DMatrix<f64>,
    /// `(p+1) × (q+1)`, `M̂⁻¹ interpᵀ M_q` with the exact mass matrix `M̂ = interpᵀ M_q interp`.
    pub project: DMatrix<f64>,
    /// `M̂⁻¹ M_p`, converts lumped-mass lifting into exact-mass lifting.
    pub mass_correction: DMatrix<f64>,
}

pub fn transfer_matrices(p: usize, q: usize, family: NodeFamily) -> Result<TransferMatrices> {
    if q < p {
        return Err(Error::Parameter {
            name: "overintegration degree",
            reason: format!("target degree {q} must not be below {p}"),
        });
    }
    let op_p = sbp_operator(family, p)?;
    let op_q = sbp_operator(family, q)?;
    if p == q {
        let id = DMatrix::identity(p + 1, p + 1);
        return Ok(TransferMatrices {
            p,
            q,
            interp: id.clone(),
            project: id.clone(),
            mass_correction: id,
        });
    }
    let interp = lagrange_interpolation_matrix(&op_p.nodes, &op_q.nodes);
    let mq = op_q.mass();
    let exact_mass = interp.transpose() * &mq * &interp;
    let inv = exact_mass
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::UnsupportedOperator("singular exact mass matrix".into()))?;
    let project = &inv * interp.transpose() * &mq;
    let mass_correction = &inv * op_p.mass();
    Ok(TransferMatrices {
        p,
        q,
        interp,
        project,
        mass_correction,
    })
}
