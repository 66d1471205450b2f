//! Weighted tensor-product grid on the upper half box [-R,R]^n x [0,Y].
//!
//! Nodes are the tensor product of uniform x axes and a graded y axis
//! y_j = Y (j/(ny-1))^p, which concentrates resolution at the thin set
//! {y = 0} where the obstacle lives.  Each node owns the cell between face
//! midpoints.  Cell masses integrate the weight |y|^a in closed form,
//! int y^a dy = y^{1+a}/(1+a), and the vertical two-point transmissibility
//!
//!   T_{j,j+1} = (1-a) / (y_{j+1}^{1-a} - y_j^{1-a})    (per unit thin area)
//!
//! reproduces the profile y^{1-a}, the nontrivial kernel element of the
//! one-dimensional weighted operator, without discretization error.  That
//! profile controls the weighted normal trace lim_{y->0} y^a u_y, so
//! exactness there matters more than formal order.
//!
//! `apply_weighted_operator` returns the weighted density form
//! (1/m_P) sum_F T_F (u_nb - u_P) ~ |y|^{-a} div(|y|^a grad u), which is
//! self-adjoint in the weighted inner product `weighted_dot`.

use std::sync::Arc;

use crate::{Error, Result};

/// Grid description; the serializable part of every run configuration.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    /// Thin-space dimension, 1 or 2.
    pub n: usize,
    /// Weight exponent, in (-1, 1).
    pub a: f64,
    /// Half width R of the box in each x direction.
    pub half_width: f64,
    /// Extension height Y.
    pub height: f64,
    /// Nodes per x axis.
    pub nx: usize,
    /// Nodes on the y axis.
    pub ny: usize,
    /// Grading exponent p of the y axis (p = 1 is uniform).
    pub grading: f64,
    /// Wrap the x axes instead of imposing lateral Dirichlet values.
    pub periodic_x: bool,
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, message: String| {
            Err(Error::Config {
                field: format!("grid.{field}"),
                message,
            })
        };
        if self.n != 1 && self.n != 2 {
            return fail("n", format!("thin dimension must be 1 or 2, got {}", self.n));
        }
        if !(self.a > -1.0 && self.a < 1.0) || !self.a.is_finite() {
            return fail("a", format!("weight exponent must lie in (-1, 1), got {}", self.a));
        }
        if !(self.half_width > 0.0) {
            return fail("half_width", format!("must be positive, got {}", self.half_width));
        }
        if !(self.height > 0.0) {
            return fail("height", format!("must be positive, got {}", self.height));
        }
        if self.nx < 3 {
            return fail("nx", format!("need at least 3 nodes per x axis, got {}", self.nx));
        }
        if self.ny < 3 {
            return fail("ny", format!("need at least 3 nodes on the y axis, got {}", self.ny));
        }
        if !(self.grading >= 1.0) || !self.grading.is_finite() {
            return fail("grading", format!("grading exponent must be >= 1, got {}", self.grading));
        }
        if self.periodic_x && self.n != 1 {
            return fail("periodic_x", "periodic x axes are only supported for n = 1".into());
        }
        Ok(())
    }
}

/// Role of a node in the discrete system.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    /// y = 0, inside the box: carries the unilateral constraint.
    Thin,
    /// 0 < y < Y, inside the box: unconstrained unknown.
    Interior,
    /// Top or lateral face: Dirichlet data.
    Boundary,
}

/// Grid with precomputed weighted cell masses and face transmissibilities.
pub struct WeightedGrid {
    pub spec: GridSpec,
    /// x nodes (shared by every x axis).
    pub xs: Vec<f64>,
    /// y nodes, graded toward 0.
    pub ys: Vec<f64>,
    /// Cell widths along an x axis (half cells at non-periodic ends).
    pub xw: Vec<f64>,
    /// int |y|^a over the y extent of each node's cell.
    pub yw: Vec<f64>,
    /// y cell edges, ny+1 entries with edges[0] = 0 and edges[ny] = Y.
    pub y_edges: Vec<f64>,
    /// Per-unit-area transmissibility across the face between y_j and y_{j+1}.
    pub ty: Vec<f64>,
    /// Uniform x spacing.
    pub dx: f64,
}

impl WeightedGrid {
    pub fn build(spec: GridSpec) -> Result<Arc<Self>> {
        spec.validate()?;
        let (n, nx, ny) = (spec.n, spec.nx, spec.ny);
        let (r, y_top, a, p) = (spec.half_width, spec.height, spec.a, spec.grading);

        let dx = if spec.periodic_x {
            2.0 * r / nx as f64
        } else {
            2.0 * r / (nx - 1) as f64
        };
        let xs: Vec<f64> = (0..nx).map(|i| -r + i as f64 * dx).collect();
        let mut xw = vec![dx; nx];
        if !spec.periodic_x {
            xw[0] = 0.5 * dx;
            xw[nx - 1] = 0.5 * dx;
        }

        let ys: Vec<f64> = (0..ny)
            .map(|j| y_top * (j as f64 / (ny - 1) as f64).powf(p))
            .collect();
        let mut y_edges = Vec::with_capacity(ny + 1);
        y_edges.push(0.0);
        for j in 0..ny - 1 {
            y_edges.push(0.5 * (ys[j] + ys[j + 1]));
        }
        y_edges.push(y_top);

        // int_{e0}^{e1} y^a dy, exact.
        let wint = |e0: f64, e1: f64| (e1.powf(1.0 + a) - e0.powf(1.0 + a)) / (1.0 + a);
        let yw: Vec<f64> = (0..ny).map(|j| wint(y_edges[j], y_edges[j + 1])).collect();
        let ty: Vec<f64> = (0..ny - 1)
            .map(|j| (1.0 - a) / (ys[j + 1].powf(1.0 - a) - ys[j].powf(1.0 - a)))
            .collect();

        debug_assert!(yw.iter().all(|w| *w > 0.0));
        debug_assert!(ty.iter().all(|t| *t > 0.0));
        let _ = n;
        Ok(Arc::new(WeightedGrid {
            spec,
            xs,
            ys,
            xw,
            yw,
            y_edges,
            ty,
            dx,
        }))
    }

    pub fn a(&self) -> f64 {
        self.spec.a
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn nx(&self) -> usize {
        self.spec.nx
    }

    pub fn ny(&self) -> usize {
        self.spec.ny
    }

    /// Number of thin-plane positions (nx^n).
    pub fn num_thin(&self) -> usize {
        self.spec.nx.pow(self.spec.n as u32)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_thin() * self.spec.ny
    }

    /// Flat index of the thin position with per-axis indices `ix`.
    #[inline]
    pub fn flat_x(&self, ix: &[usize]) -> usize {
        match self.spec.n {
            1 => ix[0],
            _ => ix[0] * self.spec.nx + ix[1],
        }
    }

    /// Inverse of `flat_x`.
    #[inline]
    pub fn decode_x(&self, fx: usize) -> [usize; 2] {
        match self.spec.n {
            1 => [fx, 0],
            _ => [fx / self.spec.nx, fx % self.spec.nx],
        }
    }

    /// Node index from thin position and y level; y is the fastest axis.
    #[inline]
    pub fn idx(&self, fx: usize, iy: usize) -> usize {
        debug_assert!(fx < self.num_thin() && iy < self.spec.ny);
        fx * self.spec.ny + iy
    }

    #[inline]
    pub fn split_idx(&self, node: usize) -> (usize, usize) {
        (node / self.spec.ny, node % self.spec.ny)
    }

    /// Spatial position of a node: x coordinates (second entry 0 for n = 1)
    /// and height y.
    pub fn node_pos(&self, node: usize) -> ([f64; 2], f64) {
        let (fx, iy) = self.split_idx(node);
        (self.thin_pos(fx), self.ys[iy])
    }

    /// Thin-plane coordinates of a flat thin index.
    pub fn thin_pos(&self, fx: usize) -> [f64; 2] {
        let ix = self.decode_x(fx);
        match self.spec.n {
            1 => [self.xs[ix[0]], 0.0],
            _ => [self.xs[ix[0]], self.xs[ix[1]]],
        }
    }

    /// True when the thin position is strictly inside the box (or always,
    /// on periodic axes).
    pub fn x_inside(&self, ix: &[usize]) -> bool {
        if self.spec.periodic_x {
            return true;
        }
        (0..self.spec.n).all(|k| ix[k] > 0 && ix[k] < self.spec.nx - 1)
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        let (fx, iy) = self.split_idx(node);
        if iy == self.spec.ny - 1 || !self.x_inside(&self.decode_x(fx)) {
            NodeKind::Boundary
        } else if iy == 0 {
            NodeKind::Thin
        } else {
            NodeKind::Interior
        }
    }

    /// Unweighted thin-face area of a node's cell (product of x widths).
    pub fn thin_area(&self, fx: usize) -> f64 {
        let ix = self.decode_x(fx);
        (0..self.spec.n).map(|k| self.xw[ix[k]]).product()
    }

    /// Weighted cell mass int_cell |y|^a.
    pub fn cell_weight(&self, node: usize) -> f64 {
        let (fx, iy) = self.split_idx(node);
        self.thin_area(fx) * self.yw[iy]
    }

    /// Total weighted volume of the box; equals (2R)^n Y^{1+a}/(1+a).
    pub fn weighted_volume(&self) -> f64 {
        let xtot: f64 = self.xw.iter().sum();
        let ytot: f64 = self.yw.iter().sum();
        xtot.powi(self.spec.n as i32) * ytot
    }

    /// Neighbor of `fx` one step along `axis`; wraps on periodic grids and
    /// returns None past a non-periodic edge.
    #[inline]
    pub fn x_neighbor(&self, fx: usize, axis: usize, step: isize) -> Option<usize> {
        let mut ix = self.decode_x(fx);
        let i = ix[axis] as isize + step;
        let nx = self.spec.nx as isize;
        let i = if self.spec.periodic_x {
            (i + nx) % nx
        } else if i < 0 || i >= nx {
            return None;
        } else {
            i
        };
        ix[axis] = i as usize;
        Some(self.flat_x(&ix))
    }

    /// Transmissibility of the x face between `fx` and its neighbor along
    /// `axis` at level `iy` (transverse cell widths times yw / dx).
    #[inline]
    pub fn tx_face(&self, fx: usize, axis: usize, iy: usize) -> f64 {
        let ix = self.decode_x(fx);
        let mut transverse = 1.0;
        for k in 0..self.spec.n {
            if k != axis {
                transverse *= self.xw[ix[k]];
            }
        }
        self.yw[iy] * transverse / self.dx
    }

    /// Transmissibility of the y face above level `iy` for the column `fx`.
    #[inline]
    pub fn ty_face(&self, fx: usize, iy: usize) -> f64 {
        self.ty[iy] * self.thin_area(fx)
    }
}

/// Scalar field over all grid nodes.
#[derive(Clone)]
pub struct Field {
    pub grid: Arc<WeightedGrid>,
    pub values: Vec<f64>,
    pub time: Option<f64>,
}

impl Field {
    pub fn zeros(grid: &Arc<WeightedGrid>) -> Self {
        Field {
            grid: grid.clone(),
            values: vec![0.0; grid.num_nodes()],
            time: None,
        }
    }

    /// Sample a closure of (x coordinates, y).
    pub fn from_fn(grid: &Arc<WeightedGrid>, f: impl Fn(&[f64; 2], f64) -> f64) -> Self {
        let mut field = Field::zeros(grid);
        for node in 0..grid.num_nodes() {
            let (x, y) = grid.node_pos(node);
            field.values[node] = f(&x, y);
        }
        field
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Interpolated value at an arbitrary point of the closed box.
    ///
    /// Multilinear in the x axes.  In y the first cell [0, y_1] uses the
    /// basis (y/y_1)^{1-a} so that near-axis profiles u0 + c y^{1-a} are
    /// reproduced exactly; all other cells are linear.
    pub fn interpolate(&self, x: &[f64; 2], y: f64) -> f64 {
        self.interp_impl(x, y, true)
    }

    /// Interpolation that stays linear in the first y cell; appropriate for
    /// fields already smooth up to the thin set, such as the weighted
    /// vertical flux y^a u_y.
    pub fn interpolate_plain(&self, x: &[f64; 2], y: f64) -> f64 {
        self.interp_impl(x, y, false)
    }

    fn interp_impl(&self, x: &[f64; 2], y: f64, weighted_first_cell: bool) -> f64 {
        let g = &self.grid;
        let n = g.spec.n;
        let nx = g.spec.nx;
        let ny = g.spec.ny;

        // x cells and barycentric weights per axis
        let mut i0 = [0usize; 2];
        let mut i1 = [0usize; 2];
        let mut tx = [0.0f64; 2];
        for k in 0..n {
            if g.spec.periodic_x {
                let mut s = (x[k] - g.xs[0]) / g.dx;
                s -= (s / nx as f64).floor() * nx as f64;
                let i = (s.floor() as usize).min(nx - 1);
                i0[k] = i;
                i1[k] = (i + 1) % nx;
                tx[k] = s - s.floor();
            } else {
                let s = ((x[k] - g.xs[0]) / g.dx).clamp(0.0, (nx - 1) as f64);
                let i = (s.floor() as usize).min(nx - 2);
                i0[k] = i;
                i1[k] = i + 1;
                tx[k] = (s - i as f64).clamp(0.0, 1.0);
            }
        }

        // y cell and its blending weight
        let yc = y.clamp(0.0, g.spec.height);
        let j = match g.ys.binary_search_by(|p| p.partial_cmp(&yc).unwrap()) {
            Ok(j) => j.min(ny - 2),
            Err(j) => j.saturating_sub(1).min(ny - 2),
        };
        let (ylo, yhi) = (g.ys[j], g.ys[j + 1]);
        let s = if j == 0 && weighted_first_cell {
            let e = 1.0 - g.spec.a;
            (yc / yhi).powf(e)
        } else {
            ((yc - ylo) / (yhi - ylo)).clamp(0.0, 1.0)
        };

        let mut acc = 0.0;
        let corners = 1usize << n;
        for c in 0..corners {
            let mut ix = [0usize; 2];
            let mut wx = 1.0;
            for k in 0..n {
                if c >> k & 1 == 1 {
                    ix[k] = i1[k];
                    wx *= tx[k];
                } else {
                    ix[k] = i0[k];
                    wx *= 1.0 - tx[k];
                }
            }
            let fx = g.flat_x(&ix);
            let lo = self.values[g.idx(fx, j)];
            let hi = self.values[g.idx(fx, j + 1)];
            acc += wx * (lo + s * (hi - lo));
        }
        acc
    }
}

/// Values on the thin plane {y = 0}, indexed like the flat thin index.
#[derive(Clone)]
pub struct ThinField {
    pub grid: Arc<WeightedGrid>,
    pub values: Vec<f64>,
}

impl ThinField {
    pub fn zeros(grid: &Arc<WeightedGrid>) -> Self {
        ThinField {
            grid: grid.clone(),
            values: vec![0.0; grid.num_thin()],
        }
    }

    pub fn from_fn(grid: &Arc<WeightedGrid>, f: impl Fn(&[f64; 2]) -> f64) -> Self {
        let mut tf = ThinField::zeros(grid);
        for fx in 0..grid.num_thin() {
            tf.values[fx] = f(&grid.thin_pos(fx));
        }
        tf
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Restriction of a field to the thin plane.
pub fn trace(u: &Field) -> ThinField {
    let g = &u.grid;
    let mut tf = ThinField::zeros(g);
    for fx in 0..g.num_thin() {
        tf.values[fx] = u.values[g.idx(fx, 0)];
    }
    tf
}

/// Discrete weighted normal trace lim_{y->0} y^a u_y at every thin
/// position:
///
///   (1-a) (u(x, y_1) - u(x, 0)) / y_1^{1-a},
///
/// exact whenever u = u(x,0) + c(x) y^{1-a} near the thin set, the local
/// form of solutions of the weighted equation.
pub fn weighted_normal_derivative(u: &Field) -> ThinField {
    let g = &u.grid;
    let mut tf = ThinField::zeros(g);
    for fx in 0..g.num_thin() {
        tf.values[fx] = g.ty[0] * (u.values[g.idx(fx, 1)] - u.values[g.idx(fx, 0)]);
    }
    tf
}

/// Weighted inner product sum_P u_P v_P m_P over all nodes, with
/// m_P = int_cell |y|^a.
pub fn weighted_dot(u: &Field, v: &Field) -> f64 {
    let g = &u.grid;
    assert_eq!(u.values.len(), v.values.len());
    let mut acc = 0.0;
    for fx in 0..g.num_thin() {
        let area = g.thin_area(fx);
        for iy in 0..g.ny() {
            let p = g.idx(fx, iy);
            acc += u.values[p] * v.values[p] * area * g.yw[iy];
        }
    }
    acc
}

/// Weighted density form of the operator, (1/m_P) sum_F T_F (u_nb - u_P),
/// approximating |y|^{-a} div(|y|^a grad u).  Interior rows only; thin and
/// outer-boundary rows are zero.
pub fn apply_weighted_operator(u: &Field) -> Field {
    let g = &u.grid;
    let mut out = Field::zeros(&u.grid);
    let ny = g.ny();
    for fx in 0..g.num_thin() {
        let ix = g.decode_x(fx);
        if !g.x_inside(&ix) {
            continue;
        }
        let area = g.thin_area(fx);
        for iy in 1..ny - 1 {
            let p = g.idx(fx, iy);
            let mut acc = g.ty[iy] * area * (u.values[g.idx(fx, iy + 1)] - u.values[p])
                + g.ty[iy - 1] * area * (u.values[g.idx(fx, iy - 1)] - u.values[p]);
            for axis in 0..g.n() {
                let t = g.tx_face(fx, axis, iy);
                for step in [-1isize, 1] {
                    if let Some(nb) = g.x_neighbor(fx, axis, step) {
                        acc += t * (u.values[g.idx(nb, iy)] - u.values[p]);
                    }
                }
            }
            out.values[p] = acc / (area * g.yw[iy]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn spec(n: usize, a: f64, nx: usize, ny: usize, p: f64) -> GridSpec {
        GridSpec {
            n,
            a,
            half_width: 1.0,
            height: 1.0,
            nx,
            ny,
            grading: p,
            periodic_x: false,
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let cases = [
            (spec(3, 0.0, 9, 9, 2.0), "grid.n"),
            (spec(1, 1.5, 9, 9, 2.0), "grid.a"),
            (spec(1, -1.0, 9, 9, 2.0), "grid.a"),
            (spec(1, 0.0, 2, 9, 2.0), "grid.nx"),
            (spec(1, 0.0, 9, 2, 2.0), "grid.ny"),
            (spec(1, 0.0, 9, 9, 0.5), "grid.grading"),
        ];
        for (s, field) in cases {
            match WeightedGrid::build(s) {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected config error at {field}, got {other:?}", other = other.map(|_| ())),
            }
        }
    }

    #[test]
    fn graded_nodes_match_closed_form() {
        let g = WeightedGrid::build(spec(1, 0.0, 5, 5, 2.0)).unwrap();
        let expect = [0.0, 0.0625, 0.25, 0.5625, 1.0];
        for (y, e) in g.ys.iter().zip(expect) {
            assert!((y - e).abs() < 1e-15, "node {y} vs {e}");
        }
    }

    #[test]
    fn vertical_transmissibility_closed_forms() {
        // p = 2 grading makes y^{1/2} linear in the index, so at a = 1/2
        // every per-area transmissibility is (1-a)/(1/4) = 2 exactly.
        let g = WeightedGrid::build(spec(1, 0.5, 5, 5, 2.0)).unwrap();
        for t in &g.ty {
            assert!((t - 2.0).abs() < 1e-13, "ty {t}");
        }
        // a = -1/2: y^{3/2} = (j/4)^3, differences (3j^2+3j+1)/64.
        let g = WeightedGrid::build(spec(1, -0.5, 5, 5, 2.0)).unwrap();
        let expect = [96.0, 96.0 / 7.0, 96.0 / 19.0, 96.0 / 37.0];
        for (t, e) in g.ty.iter().zip(expect) {
            assert!((t - e).abs() < 1e-11 * e, "ty {t} vs {e}");
        }
    }

    #[test]
    fn cell_weights_closed_forms() {
        let g = WeightedGrid::build(spec(1, 0.5, 5, 5, 2.0)).unwrap();
        let expect = [
            0.003682847818679935,
            0.03749264254809583,
            0.1314475660829799,
            0.2877329208852362,
            0.2063106893316748,
        ];
        for (w, e) in g.yw.iter().zip(expect) {
            assert!((w - e).abs() < 1e-15, "yw {w} vs {e}");
        }
        let total: f64 = g.yw.iter().sum();
        assert!((total - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn weighted_volume_is_exact() {
        for (n, a) in [(1, -0.7), (1, 0.3), (2, 0.5), (2, -0.25)] {
            let g = WeightedGrid::build(spec(n, a, 7, 9, 2.0)).unwrap();
            let exact = 2.0f64.powi(n as i32) * 1.0 / (1.0 + a);
            assert!(
                (g.weighted_volume() - exact).abs() < 1e-13 * exact,
                "n={n} a={a}: {} vs {exact}",
                g.weighted_volume()
            );
        }
    }

    #[test]
    fn fine_transmissibilities_compose_in_series() {
        // 1/T is additive over stacked cells, so the coarse face value must
        // be the harmonic series combination of the two fine faces.
        let coarse = WeightedGrid::build(spec(1, -0.4, 5, 5, 2.0)).unwrap();
        let fine = WeightedGrid::build(spec(1, -0.4, 5, 9, 2.0)).unwrap();
        for j in 0..coarse.ny() - 1 {
            let series = 1.0 / (1.0 / fine.ty[2 * j] + 1.0 / fine.ty[2 * j + 1]);
            assert!(
                (series - coarse.ty[j]).abs() < 1e-12 * coarse.ty[j],
                "face {j}: {series} vs {}",
                coarse.ty[j]
            );
        }
        let vc = coarse.weighted_volume();
        let vf = fine.weighted_volume();
        assert!((vc - vf).abs() < 1e-13 * vc);
    }

    #[test]
    fn operator_annihilates_weighted_kernel() {
        // u = x1 and u = y^{1-a} both lie in the kernel of the scheme.
        for a in [-0.5, 0.0, 0.5, 0.8] {
            let g = WeightedGrid::build(spec(1, a, 9, 9, 2.0)).unwrap();
            let u = Field::from_fn(&g, |_, y| 3.0 + 2.0 * y.powf(1.0 - a));
            let lu = apply_weighted_operator(&u);
            let v = Field::from_fn(&g, |x, _| 1.0 - 0.5 * x[0]);
            let lv = apply_weighted_operator(&v);
            for node in 0..g.num_nodes() {
                assert!(lu.values[node].abs() < 1e-9, "a={a}: kernel y-profile residual {}", lu.values[node]);
                assert!(lv.values[node].abs() < 1e-9, "a={a}: kernel x-profile residual {}", lv.values[node]);
            }
        }
    }

    #[test]
    fn operator_on_quadratic_thin_profile() {
        // div(y^a grad x1^2) = 2 y^a; the density form returns exactly 2 at
        // interior nodes because the x part of the stencil is exact.
        for n in [1, 2] {
            let g = WeightedGrid::build(spec(n, 0.3, 7, 7, 2.0)).unwrap();
            let u = Field::from_fn(&g, |x, _| x[0] * x[0]);
            let lu = apply_weighted_operator(&u);
            for node in 0..g.num_nodes() {
                if g.kind(node) == NodeKind::Interior {
                    assert!(
                        (lu.values[node] - 2.0).abs() < 1e-10,
                        "n={n}: {}",
                        lu.values[node]
                    );
                }
            }
        }
    }

    #[test]
    fn operator_is_self_adjoint_in_weighted_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1, 2] {
            let g = WeightedGrid::build(spec(n, -0.3, 6, 7, 1.5)).unwrap();
            let mut u = Field::zeros(&g);
            let mut v = Field::zeros(&g);
            for node in 0..g.num_nodes() {
                if g.kind(node) == NodeKind::Interior {
                    u.values[node] = rng.gen_range(-1.0..1.0);
                    v.values[node] = rng.gen_range(-1.0..1.0);
                }
            }
            let lu = apply_weighted_operator(&u);
            let lv = apply_weighted_operator(&v);
            let a = weighted_dot(&lu, &v);
            let b = weighted_dot(&u, &lv);
            assert!((a - b).abs() < 1e-12 * (a.abs() + b.abs() + 1.0), "n={n}: {a} vs {b}");
        }
    }

    #[test]
    fn normal_derivative_exact_on_local_profile() {
        for a in [-0.6, 0.0, 0.4] {
            let g = WeightedGrid::build(spec(1, a, 9, 17, 2.0)).unwrap();
            let u = Field::from_fn(&g, |x, y| x[0] + 1.5 * y.powf(1.0 - a));
            let d = weighted_normal_derivative(&u);
            for val in &d.values {
                let expect = 1.5 * (1.0 - a);
                assert!((val - expect).abs() < 1e-10, "a={a}: {val} vs {expect}");
            }
        }
    }

    #[test]
    fn trace_and_indexing_round_trip() {
        let g = WeightedGrid::build(spec(2, 0.0, 5, 4, 1.0)).unwrap();
        let u = Field::from_fn(&g, |x, y| x[0] + 10.0 * x[1] + 100.0 * y);
        let t = trace(&u);
        for fx in 0..g.num_thin() {
            let pos = g.thin_pos(fx);
            assert_eq!(t.values[fx], pos[0] + 10.0 * pos[1]);
        }
        for node in 0..g.num_nodes() {
            let (fx, iy) = g.split_idx(node);
            assert_eq!(g.idx(fx, iy), node);
        }
    }

    #[test]
    fn interpolation_reproduces_nodes_and_first_cell_profile() {
        let a = 0.5;
        let g = WeightedGrid::build(spec(1, a, 9, 9, 2.0)).unwrap();
        let u = Field::from_fn(&g, |x, y| 0.3 * x[0] + 2.0 * y.powf(1.0 - a));
        for node in 0..g.num_nodes() {
            let (x, y) = g.node_pos(node);
            let got = u.interpolate(&x, y);
            assert!((got - u.values[node]).abs() < 1e-12, "node value {got}");
        }
        // inside the first y cell the weighted basis is exact for y^{1-a}
        let y1 = g.ys[1];
        for frac in [0.1, 0.5, 0.9] {
            let y = frac * y1;
            let x = [0.25, 0.0];
            let exact = 0.3 * 0.25 + 2.0 * y.powf(1.0 - a);
            let got = u.interpolate(&x, y);
            assert!((got - exact).abs() < 1e-12, "first cell: {got} vs {exact}");
        }
    }

    #[test]
    fn periodic_neighbors_wrap() {
        let mut s = spec(1, 0.0, 8, 5, 2.0);
        s.periodic_x = true;
        let g = WeightedGrid::build(s).unwrap();
        assert_eq!(g.x_neighbor(0, 0, -1), Some(7));
        assert_eq!(g.x_neighbor(7, 0, 1), Some(0));
        assert!(g.x_inside(&[0, 0]));
        // every node except the top row is an unknown
        for fx in 0..g.num_thin() {
            assert_eq!(g.kind(g.idx(fx, 0)), NodeKind::Thin);
            assert_eq!(g.kind(g.idx(fx, g.ny() - 1)), NodeKind::Boundary);
        }
    }
}
