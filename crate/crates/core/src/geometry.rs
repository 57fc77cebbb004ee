//! Structured periodic meshes, metric terms and averaged metric directions.
//!
//! Element geometry is always built isoparametrically on the LGL nodes of the
//! solution degree, with node coordinates evaluated from global reference
//! coordinates so that shared faces see identical inputs. Gauss node sets
//! receive the interpolated LGL quantities.

use crate::error::{Error, Result};
use crate::operators::{lgl_operator, row_major, NodeFamily, SbpOperator1D};
use crate::tensor;

/// Element-wise coordinate map of the whole mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshMapping {
    Cartesian,
    /// `x_j = ξ_j + a Π_m sin(π ξ_m / L)` with `L` half the domain length.
    Curved { amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredMesh<const D: usize> {
    pub cells: [usize; D],
    pub lower: [f64; D],
    pub upper: [f64; D],
    pub mapping: MeshMapping,
    pub periodic: [bool; D],
}

impl<const D: usize> StructuredMesh<D> {
    /// Periodic mesh of `[-5, 5]^d`.
    pub fn new(cells: [usize; D], mapping: MeshMapping) -> Result<Self> {
        Self::with_domain(cells, [-5.0; D], [5.0; D], mapping)
    }

    pub fn with_domain(
        cells: [usize; D],
        lower: [f64; D],
        upper: [f64; D],
        mapping: MeshMapping,
    ) -> Result<Self> {
        if !(2..=3).contains(&D) {
            return Err(Error::Parameter {
                name: "dimension",
                reason: format!("meshes are 2D or 3D, got {D}"),
            });
        }
        if cells.iter().any(|&c| c == 0) {
            return Err(Error::config("elements", "need at least one element per direction"));
        }
        if (0..D).any(|j| !(upper[j] > lower[j])) {
            return Err(Error::Geometry(format!("empty domain {lower:?} .. {upper:?}")));
        }
        if let MeshMapping::Curved { amplitude } = mapping {
            if !amplitude.is_finite() || amplitude < 0.0 {
                return Err(Error::config("amplitude", format!("must be finite and nonnegative, got {amplitude}")));
            }
        }
        Ok(Self {
            cells,
            lower,
            upper,
            mapping,
            periodic: [true; D],
        })
    }

    pub fn n_elements(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_cartesian(&self) -> bool {
        matches!(self.mapping, MeshMapping::Cartesian)
            || matches!(self.mapping, MeshMapping::Curved { amplitude } if amplitude == 0.0)
    }

    /// Element size in reference (unmapped) coordinates.
    pub fn spacing(&self, dir: usize) -> f64 {
        (self.upper[dir] - self.lower[dir]) / self.cells[dir] as f64
    }

    pub fn cell_of(&self, e: usize) -> [usize; D] {
        let mut c = [0; D];
        let mut rest = e;
        for dir in 0..D {
            c[dir] = rest % self.cells[dir];
            rest /= self.cells[dir];
        }
        c
    }

    pub fn element_of(&self, cell: [usize; D]) -> usize {
        let mut e = 0;
        for dir in (0..D).rev() {
            e = e * self.cells[dir] + cell[dir];
        }
        e
    }

    /// Periodic neighbor across side `side` (0: -1 face, 1: +1 face) in direction `dir`.
    pub fn neighbor(&self, e: usize, dir: usize, side: usize) -> usize {
        let mut c = self.cell_of(e);
        let n = self.cells[dir];
        c[dir] = if side == 1 { (c[dir] + 1) % n } else { (c[dir] + n - 1) % n };
        self.element_of(c)
    }

    /// The coordinate map applied to global reference coordinates.
    pub fn map(&self, xi: &[f64; D]) -> [f64; D] {
        match self.mapping {
            MeshMapping::Cartesian => *xi,
            MeshMapping::Curved { amplitude } => {
                let mut bump = amplitude;
                for j in 0..D {
                    let half = 0.5 * (self.upper[j] - self.lower[j]);
                    let center = 0.5 * (self.upper[j] + self.lower[j]);
                    bump *= (std::f64::consts::PI * (xi[j] - center) / half).sin();
                }
                xi.map(|x| x + bump)
            }
        }
    }

    /// Physical coordinates of an element's tensor-product nodes given the 1D reference nodes.
    pub fn node_coordinates(&self, e: usize, nodes: &[f64]) -> Vec<[f64; D]> {
        let n = nodes.len();
        let cell = self.cell_of(e);
        (0..n.pow(D as u32))
            .map(|l| {
                let idx = tensor::multi::<D>(l, n);
                let mut xi = [0.0; D];
                for j in 0..D {
                    let s = cell[j] as f64 + 0.5 * (nodes[idx[j]] + 1.0);
                    xi[j] = self.lower[j] + s * self.spacing(j);
                }
                self.map(&xi)
            })
            .collect()
    }
}

/// Scaled contravariant vectors and Jacobian per node.
///
/// `ja[l][n][j]` is the `j`-th Cartesian component of the `n`-th contravariant
/// vector at node `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTerms<const D: usize> {
    pub ja: Vec<[[f64; D]; D]>,
    pub jac: Vec<f64>,
}

pub type AveragedDirection<const D: usize> = [f64; D];

/// `α^{·,n}_{ik} = ½(Ja^n_i + Ja^n_k)`.
#[inline(always)]
pub fn averaged_direction<const D: usize>(metrics: &MetricTerms<D>, i: usize, k: usize, n: usize) -> AveragedDirection<D> {
    average(&metrics.ja[i][n], &metrics.ja[k][n])
}

#[inline(always)]
pub(crate) fn average<const D: usize>(a: &[f64; D], b: &[f64; D]) -> [f64; D] {
    let mut out = [0.0; D];
    for j in 0..D {
        out[j] = 0.5 * (a[j] + b[j]);
    }
    out
}

fn component<const D: usize>(x: &[[f64; D]], j: usize) -> Vec<f64> {
    x.iter().map(|p| p[j]).collect()
}

/// Double-double number, used so the metric identity and the agreement of
/// shared faces do not depend on the magnitude of the coordinates.
#[derive(Debug, Clone, Copy, Default)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    #[inline]
    fn renorm(s: f64, e: f64) -> Self {
        let hi = s + e;
        Dd { hi, lo: e - (hi - s) }
    }

    #[inline]
    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn f64(self) -> f64 {
        self.hi + self.lo
    }
}

impl std::ops::Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, o: Dd) -> Dd {
        let (s, e) = Dd::two_sum(self.hi, o.hi);
        let (t, f) = Dd::two_sum(self.lo, o.lo);
        let r = Dd::renorm(s, e + t);
        Dd::renorm(r.hi, r.lo + f)
    }
}

impl std::ops::Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + Dd { hi: -o.hi, lo: -o.lo }
    }
}

impl std::ops::Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, o: Dd) -> Dd {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p) + (self.hi * o.lo + self.lo * o.hi);
        Dd::renorm(p, e)
    }
}

impl std::ops::Mul<f64> for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, a: f64) -> Dd {
        self * Dd::new(a)
    }
}

/// Metric terms of the polynomial interpolant of nodal coordinates `x`.
///
/// 2D uses the cross-derivative formulas, 3D the conservative curl form, so
/// the discrete metric identity holds for every polynomial mapping. All
/// products and derivatives are formed in double-double precision and
/// rounded once.
pub fn metrics_from_coordinates<const D: usize>(x: &[[f64; D]], op: &SbpOperator1D) -> Result<MetricTerms<D>> {
    let n = op.n_nodes();
    let n_nodes = n.pow(D as u32);
    if x.len() != n_nodes {
        return Err(Error::Geometry(format!("expected {n_nodes} node coordinates, got {}", x.len())));
    }
    let d = op.derivative_row_major();
    let dims = [n; D];
    let deriv = |f: &[Dd], k: usize| tensor::apply_along(f, &dims, k, &d, n);
    let xs: Vec<Vec<Dd>> = (0..D).map(|j| x.iter().map(|p| Dd::new(p[j])).collect()).collect();
    // dx[j][k] = ∂x_j/∂ξ_k
    let dx: Vec<Vec<Vec<Dd>>> = xs.iter().map(|xj| (0..D).map(|k| deriv(xj, k)).collect()).collect();
    let mut ja = vec![[[0.0; D]; D]; n_nodes];
    let mut jac = vec![0.0; n_nodes];
    match D {
        2 => {
            for l in 0..n_nodes {
                let m = &mut ja[l];
                m[0][0] = dx[1][1][l].f64();
                m[0][1] = -dx[0][1][l].f64();
                m[1][0] = -dx[1][0][l].f64();
                m[1][1] = dx[0][0][l].f64();
                jac[l] = (dx[0][0][l] * dx[1][1][l] - dx[0][1][l] * dx[1][0][l]).f64();
            }
        }
        3 => {
            for j in 0..3 {
                let m = (j + 1) % 3;
                let lc = (j + 2) % 3;
                // v_k = X_m ∂_k X_l, then Ja^i_j = (∇ × v)_i
                let v: Vec<Vec<Dd>> = (0..3).map(|k| (0..n_nodes).map(|l| xs[m][l] * dx[lc][k][l]).collect()).collect();
                for i in 0..3 {
                    let (k1, k2) = ((i + 1) % 3, (i + 2) % 3);
                    let a = deriv(&v[k2], k1);
                    let b = deriv(&v[k1], k2);
                    for l in 0..n_nodes {
                        ja[l][i][j] = (a[l] - b[l]).f64();
                    }
                }
            }
            for l in 0..n_nodes {
                let g = |j: usize, k: usize| dx[j][k][l];
                let det = g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
                    + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0));
                jac[l] = det.f64();
            }
        }
        _ => unreachable!("dimension checked by the mesh"),
    }
    Ok(MetricTerms { ja, jac })
}

fn cartesian_metrics<const D: usize>(mesh: &StructuredMesh<D>, n_nodes: usize) -> MetricTerms<D> {
    let half: [f64; D] = std::array::from_fn(|j| 0.5 * mesh.spacing(j));
    let jac: f64 = half.iter().product();
    let mut m = [[0.0; D]; D];
    for n in 0..D {
        m[n][n] = (0..D).filter(|&k| k != n).map(|k| half[k]).product();
    }
    MetricTerms {
        ja: vec![m; n_nodes],
        jac: vec![jac; n_nodes],
    }
}

fn check_jacobian<const D: usize>(metrics: &MetricTerms<D>, element: usize) -> Result<()> {
    for (node, &j) in metrics.jac.iter().enumerate() {
        if !(j > 0.0) || !j.is_finite() {
            return Err(Error::Mesh { element, node, jacobian: j });
        }
    }
    Ok(())
}

/// Metrics of element `e` on the LGL nodes of `op`.
pub fn compute_metrics<const D: usize>(mesh: &StructuredMesh<D>, op: &SbpOperator1D, e: usize) -> Result<MetricTerms<D>> {
    if op.family != NodeFamily::Lgl {
        return Err(Error::UnsupportedOperator(
            "metric terms are evaluated on LGL nodes; interpolate to other node sets".into(),
        ));
    }
    if e >= mesh.n_elements() {
        return Err(Error::Parameter {
            name: "element",
            reason: format!("index {e} out of range for {} elements", mesh.n_elements()),
        });
    }
    let metrics = if mesh.is_cartesian() {
        cartesian_metrics(mesh, op.n_nodes().pow(D as u32))
    } else {
metrics_from_coordinates(&mesh.node_coordinates(e, &op.nodes), op)?
    };
    check_jacobian(&metrics, e)?;
    Ok(metrics)
}

pub fn compute_metrics_2d(mesh: &StructuredMesh<2>, op: &SbpOperator1D, e: usize) -> Result<MetricTerms<2>> {
    compute_metrics(mesh, op, e)
}

pub fn compute_metrics_3d(mesh: &StructuredMesh<3>, op: &SbpOperator1D, e: usize) -> Result<MetricTerms<3>> {
    compute_metrics(mesh, op, e)
}

/// Largest `|Σ_n D_n Ja^n_j|` over nodes and components.
pub fn metric_identity_residual<const D: usize>(metrics: &MetricTerms<D>, op: &SbpOperator1D) -> f64 {
    let n = op.n_nodes();
    let d = op.derivative_row_major();
    let dims = [n; D];
    let mut worst = 0.0_f64;
    for j in 0..D {
        let mut sum = vec![0.0; metrics.ja.len()];
        for dir in 0..D {
            let f: Vec<f64> = metrics.ja.iter().map(|m| m[dir][j]).collect();
            for (s, v) in sum.iter_mut().zip(tensor::apply_along(&f, &dims, dir, &d, n)) {
                *s += v;
            }
        }
        worst = sum.iter().fold(worst, |w, v| w.max(v.abs()));
    }
    worst
}

/// Geometry of one element on the solution nodes.
#[derive(Debug, Clone)]
pub struct ElementGeometry<const D: usize> {
    pub coords: Vec<[f64; D]>,
    pub metrics: MetricTerms<D>,
}

/// Per-element geometry of a whole mesh on the solution node set.
#[derive(Debug, Clone)]
pub struct MeshGeometry<const D: usize> {
    pub degree: usize,
    pub family: NodeFamily,
    pub cartesian: bool,
    pub elements: Vec<ElementGeometry<D>>,
}

impl<const D: usize> MeshGeometry<D> {
    /// Builds geometry on the nodes of `op`; Gauss nodes get interpolated LGL metrics.
    pub fn new(mesh: &StructuredMesh<D>, op: &SbpOperator1D) -> Result<Self> {
        let lgl = if op.family == NodeFamily::Lgl { op.clone() } else { lgl_operator(op.degree)? };
        let n = op.n_nodes();
        let n_nodes = n.pow(D as u32);
        let to_target = match op.family {
            NodeFamily::Lgl => None,
            NodeFamily::Gauss => Some(row_major(&lgl.interpolation_to(&op.nodes))),
        };
        let mut elements = Vec::with_capacity(mesh.n_elements());
        for e in 0..mesh.n_elements() {
            let lgl_metrics = compute_metrics(mesh, &lgl, e)?;
            let lgl_coords = mesh.node_coordinates(e, &lgl.nodes);
            let geo = match &to_target {
                None => ElementGeometry { coords: lgl_coords, metrics: lgl_metrics },
                Some(interp) => {
                    let coords = interpolate_points(&lgl_coords, interp, n);
                    let metrics = if mesh.is_cartesian() {
                        cartesian_metrics(mesh, n_nodes)
                    } else {
                        let mut ja = vec![[[0.0; D]; D]; n_nodes];
                        for dir in 0..D {
                            for j in 0..D {
                                let f: Vec<f64> = lgl_metrics.ja.iter().map(|m| m[dir][j]).collect();
                                let g = tensor::apply_all(&f, D, n, interp, n);
                                for l in 0..n_nodes {
                                    ja[l][dir][j] = g[l];
                                }
                            }
                        }
                        let jac = if D == 2 {
                            ja.iter().map(|m| m[1][1] * m[0][0] - m[0][1] * m[1][0]).collect()
                        } else {
                            metrics_from_coordinates(&coords, op)?.jac
                        };
                        MetricTerms { ja, jac }
                    };
                    check_jacobian(&metrics, e)?;
                    ElementGeometry { coords, metrics }
                }
            };
            elements.push(geo);
        }
        Ok(Self {
            degree: op.degree,
            family: op.family,
            cartesian: mesh.is_cartesian(),
            elements,
        })
    }

    pub fn nodes_per_element(&self) -> usize {
        (self.degree + 1).pow(D as u32)
    }

    /// Smallest `J^{1/d}` over all nodes, a local length scale.
    pub fn min_length_scale(&self) -> f64 {
        self.elements
            .iter()
            .flat_map(|g| g.metrics.jac.iter())
            .fold(f64::INFINITY, |m, &j| m.min(j.powf(1.0 / D as f64)))
    }
}

fn interpolate_points<const D: usize>(x: &[[f64; D]], interp: &[f64], n: usize) -> Vec<[f64; D]> {
    let comps: Vec<Vec<f64>> = (0..D).map(|j| tensor::apply_all(&component(x, j), D, n, interp, n)).collect();
    (0..comps[0].len()).map(|l| std::array::from_fn(|j| comps[j][l])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::gauss_operator;

    fn coords_of<const D: usize>(op: &SbpOperator1D, f: impl Fn([f64; D]) -> [f64; D]) -> Vec<[f64; D]> {
        let n = op.n_nodes();
        (0..n.pow(D as u32))
            .map(|l| {
                let idx = tensor::multi::<D>(l, n);
                f(std::array::from_fn(|j| op.nodes[idx[j]]))
            })
            .collect()
    }

    #[test]
    fn identity_map_gives_identity_metrics() {
        for p in 1..=6 {
            let op = lgl_operator(p).unwrap();
            let m2 = metrics_from_coordinates(&coords_of::<2>(&op, |x| x), &op).unwrap();
            let m3 = metrics_from_coordinates(&coords_of::<3>(&op, |x| x), &op).unwrap();
            for l in 0..m2.jac.len() {
                assert!((m2.jac[l] - 1.0).abs() < 1e-13);
                for n in 0..2 {
                    for j in 0..2 {
                        assert!((m2.ja[l][n][j] - (n == j) as u8 as f64).abs() < 1e-13);
                    }
                }
            }
            for l in 0..m3.jac.len() {
                assert!((m3.jac[l] - 1.0).abs() < 1e-12);
                for n in 0..3 {
                    for j in 0..3 {
                        assert!((m3.ja[l][n][j] - (n == j) as u8 as f64).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn affine_map_2d_matches_closed_form() {
        let a = [[1.3, 0.4], [-0.2, 0.9]];
        let b = [0.7, -2.0];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let op = lgl_operator(4).unwrap();
        let x = coords_of::<2>(&op, |xi| {
            std::array::from_fn(|j| a[j][0] * xi[0] + a[j][1] * xi[1] + b[j])
        });
        let m = metrics_from_coordinates(&x, &op).unwrap();
        // Ja = J A⁻ᵀ, row n of the contravariant matrix is the n-th row of J A⁻¹ transposed
        let inv = [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]];
        for l in 0..m.jac.len() {
            assert!((m.jac[l] - det).abs() < 1e-13);
            for n in 0..2 {
                for j in 0..2 {
                    assert!((m.ja[l][n][j] - det * inv[n][j]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn rotation_map_3d() {
        let (s, c) = 0.7_f64.sin_cos();
        let rot = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        let op = lgl_operator(3).unwrap();
        let x = coords_of::<3>(&op, |xi| std::array::from_fn(|j| (0..3).map(|k| rot[j][k] * xi[k]).sum()));
        let m = metrics_from_coordinates(&x, &op).unwrap();
        for l in 0..m.jac.len() {
            assert!((m.jac[l] - 1.0).abs() < 1e-13);
            for n in 0..3 {
                for j in 0..3 {
                    // J A⁻ᵀ = A for rotations: Ja^n_j = A_{jn}
                    assert!((m.ja[l][n][j] - rot[j][n]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn metric_identity_for_polynomial_maps() {
        for p in 2..=6 {
            let op = lgl_operator(p).unwrap();
            let x2 = coords_of::<2>(&op, |xi| {
                [xi[0] + 0.1 * xi[1] * xi[1] * xi[0], xi[1] - 0.15 * xi[0].powi(2) + 0.05 * xi[0] * xi[1]]
            });
            let m2 = metrics_from_coordinates(&x2, &op).unwrap();
            assert!(metric_identity_residual(&m2, &op) < 1e-12);
            let x3 = coords_of::<3>(&op, |xi| {
                [
                    xi[0] + 0.1 * xi[1] * xi[2],
                    xi[1] + 0.05 * xi[0] * xi[0] * xi[2],
                    xi[2] - 0.1 * xi[0] * xi[1] * xi[1],
                ]
            });
            let m3 = metrics_from_coordinates(&x3, &op).unwrap();
            assert!(metric_identity_residual(&m3, &op) < 1e-12, "{}", metric_identity_residual(&m3, &op));
        }
    }

    #[test]
    fn curved_meshes_satisfy_identity_and_determinant() {
        for p in [3, 4] {
            let op = lgl_operator(p).unwrap();
            let mesh = StructuredMesh::new([4, 4], MeshMapping::Curved { amplitude: 0.25 }).unwrap();
            for e in 0..mesh.n_elements() {
                let m = compute_metrics(&mesh, &op, e).unwrap();
                assert!(metric_identity_residual(&m, &op) < 1e-12);
                for (l, ja) in m.ja.iter().enumerate() {
                    let det = ja[0][0] * ja[1][1] - ja[0][1] * ja[1][0];
                    assert!((det - m.jac[l]).abs() < 1e-13);
                }
            }
            let mesh = StructuredMesh::new([4, 4, 4], MeshMapping::Curved { amplitude: 0.25 }).unwrap();
            for e in 0..mesh.n_elements() {
                let m = compute_metrics(&mesh, &op, e).unwrap();
                assert!(metric_identity_residual(&m, &op) < 1e-12);
            }
        }
    }

    #[test]
    fn gauss_metrics_satisfy_identity_with_gauss_derivative() {
        let op = gauss_operator(3).unwrap();
        let mesh = StructuredMesh::new([3, 3, 3], MeshMapping::Curved { amplitude: 0.3 }).unwrap();
        let geo = MeshGeometry::new(&mesh, &op).unwrap();
        for g in &geo.elements {
            assert!(metric_identity_residual(&g.metrics, &op) < 1e-12);
            assert!(g.metrics.jac.iter().all(|&j| j > 0.0));
        }
    }

    #[test]
    fn cartesian_metrics_are_scaled_identity() {
        let op = lgl_operator(3).unwrap();
        let mesh = StructuredMesh::new([4, 5], MeshMapping::Cartesian).unwrap();
        let m = compute_metrics(&mesh, &op, 3).unwrap();
        let (hx, hy) = (10.0 / 4.0, 10.0 / 5.0);
        assert_eq!(m.ja[0], [[hy / 2.0, 0.0], [0.0, hx / 2.0]]);
        assert_eq!(m.jac[0], hx * hy / 4.0);
        let a = averaged_direction(&m, 2, 7, 1);
        assert_eq!(a, [0.0, hx / 2.0]);
    }

    #[test]
    fn averaged_direction_is_symmetric() {
        let op = lgl_operator(4).unwrap();
        let mesh = StructuredMesh::new([2, 2, 2], MeshMapping::Curved { amplitude: 0.4 }).unwrap();
        let m = compute_metrics(&mesh, &op, 5).unwrap();
        for i in 0..m.ja.len() {
            assert_eq!(averaged_direction(&m, i, i, 2), m.ja[i][2]);
            for k in 0..m.ja.len() {
                for n in 0..3 {
                    assert_eq!(averaged_direction(&m, i, k, n), averaged_direction(&m, k, i, n));
                }
            }
        }
    }

    fn check_watertight<const D: usize>(cells: [usize; D]) {
        let op = lgl_operator(4).unwrap();
        let mesh = StructuredMesh::new(cells, MeshMapping::Curved { amplitude: 0.2 }).unwrap();
        let n = op.n_nodes();
        for e in 0..mesh.n_elements() {
            let xe = mesh.node_coordinates(e, &op.nodes);
            for dir in 0..D {
                let nb = mesh.neighbor(e, dir, 1);
                let xn = mesh.node_coordinates(nb, &op.nodes);
                let wraps = mesh.cell_of(e)[dir] + 1 == cells[dir];
                for (a, b) in tensor::face_nodes::<D>(dir, 1, n).into_iter().zip(tensor::face_nodes::<D>(dir, 0, n)) {
                    for j in 0..D {
                        let mut diff = xe[a][j] - xn[b][j];
                        if wraps && j == dir {
                            diff -= mesh.upper[j] - mesh.lower[j];
                        }
                        assert!(diff.abs() < 1e-13, "element {e} dir {dir}: {diff:e}");
                    }
                }
            }
        }
    }

    #[test]
    fn shared_faces_are_watertight() {
        check_watertight([4, 3]);
        check_watertight([3, 2, 4]);
    }

    #[test]
    fn contravariant_vectors_agree_on_shared_faces() {
        let op = lgl_operator(3).unwrap();
        let mesh = StructuredMesh::new([3, 3, 3], MeshMapping::Curved { amplitude: 0.3 }).unwrap();
        let geo = MeshGeometry::new(&mesh, &op).unwrap();
        for e in 0..mesh.n_elements() {
            for dir in 0..3 {
                let nb = mesh.neighbor(e, dir, 1);
                for (a, b) in tensor::face_nodes::<3>(dir, 1, 4).into_iter().zip(tensor::face_nodes::<3>(dir, 0, 4)) {
                    let (ja, jb) = (geo.elements[e].metrics.ja[a][dir], geo.elements[nb].metrics.ja[b][dir]);
                    for j in 0..3 {
                        assert!((ja[j] - jb[j]).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn inverted_elements_are_reported() {
        let op = lgl_operator(3).unwrap();
        let mesh = StructuredMesh::new([4, 4], MeshMapping::Curved { amplitude: 3.0 }).unwrap();
        let err = (0..16).find_map(|e| compute_metrics(&mesh, &op, e).err()).unwrap();
        assert!(matches!(err, Error::Mesh { .. }), "{err}");
        assert!(compute_metrics(&mesh, &op, 16).is_err());
        assert!(StructuredMesh::new([0, 2], MeshMapping::Cartesian).is_err());
    }

    #[test]
    fn neighbors_wrap_periodically() {
        let mesh = StructuredMesh::new([3, 2], MeshMapping::Cartesian).unwrap();
        assert_eq!(mesh.neighbor(2, 0, 1), 0);
        assert_eq!(mesh.neighbor(0, 0, 0), 2);
        assert_eq!(mesh.neighbor(1, 1, 1), 4);
        assert_eq!(mesh.neighbor(4, 1, 1), 1);
        for e in 0..6 {
            for dir in 0..2 {
                assert_eq!(mesh.neighbor(mesh.neighbor(e, dir, 1), dir, 0), e);
            }
        }
    }
}
