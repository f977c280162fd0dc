//! Staggered-grid Stokes–Brinkman solver for the periodic channel.
//!
//! Layout: pressure at cell centres, `u` on vertical faces, `w` on horizontal
//! faces. The channel is periodic in `z`, has a Dirichlet inflow at `x = 0`
//! and a zero-gradient outflow with fixed pressure at `x = Lx`. The solid is
//! imposed by a Brinkman drag `K chi u` where `chi` is the cell-face solid
//! fraction.
//!
//! Unknowns are grouped per grid column `i` as `[w(i, .), p(i, .), u(i+1, .)]`,
//! which makes the operator block tridiagonal in `x`. The system is solved by
//! block elimination with dense LU on each column followed by iterative
//! refinement against the sparse operator.

use super::dense::DenseLu;
use super::{ChannelConfig, FlowField};
use crate::error::{Error, Result};
use crate::geometry::AirfoilShape;

const SUBSAMPLES: usize = 4;

/// Sparse row storage, one row per global unknown.
struct Operator {
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
}

impl Operator {
    fn residual(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, b)| b - row.iter().map(|&(c, v)| v * x[c]).sum::<f64>())
            .collect()
    }

    fn inf_norm(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.iter().map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

struct Layout {
    nz: usize,
}

impl Layout {
    fn m(&self) -> usize {
        3 * self.nz
    }
    fn w(&self, i: usize, j: usize) -> usize {
        i * self.m() + j
    }
    fn p(&self, i: usize, j: usize) -> usize {
        i * self.m() + self.nz + j
    }
    /// Face `i` in `1..=nx`; face 0 is the inflow boundary.
    fn u(&self, i: usize, j: usize) -> usize {
        (i - 1) * self.m() + 2 * self.nz + j
    }
    fn up(&self, j: usize) -> usize {
        (j + 1) % self.nz
    }
    fn down(&self, j: usize) -> usize {
        (j + self.nz - 1) % self.nz
    }
}

/// Fraction of the control volume centred at `(x, z)` covered by the profile.
pub(crate) fn solid_fraction(
    shape: &AirfoilShape,
    config: &ChannelConfig,
    x: f64,
    z: f64,
    dx: f64,
    dz: f64,
) -> f64 {
    let chord = shape.spec.chord;
    let mut covered = 0.0;
    for s in 0..SUBSAMPLES {
        let xs = x + ((s as f64 + 0.5) / SUBSAMPLES as f64 - 0.5) * dx;
        let xi = (xs - config.leading_edge_x) / chord;
        if let Some((lo, up)) = shape.surfaces_at(xi) {
            let z_lo = config.leading_edge_z + chord * lo;
            let z_up = config.leading_edge_z + chord * up;
            let overlap = (z + 0.5 * dz).min(z_up) - (z - 0.5 * dz).max(z_lo);
            if overlap > 0.0 {
                covered += overlap / dz;
            }
        }
    }
    covered / SUBSAMPLES as f64
}

fn check_fits(shape: Option<&AirfoilShape>, config: &ChannelConfig) -> Result<()> {
    let Some(shape) = shape else { return Ok(()) };
    let chord = shape.spec.chord;
    let (lo, hi) = shape.z_range();
    let half = 0.5 * config.height_z;
    let z_lo = config.leading_edge_z + chord * lo;
    let z_hi = config.leading_edge_z + chord * hi;
    if z_lo <= -half || z_hi >= half {
        return Err(Error::InvalidGeometry(format!(
            "profile spans z in [{z_lo:.4}, {z_hi:.4}], outside the channel (-{half}, {half})"
        )));
    }
    let x_te = config.leading_edge_x + chord;
    if config.leading_edge_x <= 0.0 || x_te >= config.length_x {
        return Err(Error::InvalidGeometry(format!(
            "profile spans x in [{}, {x_te}], outside the channel (0, {})",
            config.leading_edge_x, config.length_x
        )));
    }
    Ok(())
}

fn assemble(shape: Option<&AirfoilShape>, config: &ChannelConfig) -> Operator {
    let (nx, nz) = (config.nx, config.nz);
    let lay = Layout { nz };
    let dx = config.length_x / nx as f64;
    let dz = config.height_z / nz as f64;
    let z0 = -0.5 * config.height_z;
    let [u_in, w_in] = config.inflow;
    let k = config.penalization;
    let n = nx * lay.m();
    let mut rows = vec![Vec::new(); n];
    let mut rhs = vec![0.0; n];

    // momentum rows scaled by the inverse Laplacian diagonal, continuity by h
    let sm = 1.0 / (2.0 / (dx * dx) + 2.0 / (dz * dz));
    let sc = dx.min(dz);
    let (ax, az) = (sm / (dx * dx), sm / (dz * dz));
    let chi = |x: f64, z: f64| shape.map_or(0.0, |s| solid_fraction(s, config, x, z, dx, dz));

    for i in 0..nx {
        let xc = (i as f64 + 0.5) * dx;
        for j in 0..nz {
            // w momentum at (x_c(i), face j)
            let r = lay.w(i, j);
            let zf = z0 + j as f64 * dz;
            let mut diag = 2.0 * az + k * sm * chi(xc, zf);
            let row = &mut rows[r];
            row.push((lay.w(i, lay.up(j)), -az));
            row.push((lay.w(i, lay.down(j)), -az));
            if i == 0 {
                // ghost w(-1) = 2 w_in - w(0)
                diag += 3.0 * ax;
                rhs[r] += 2.0 * ax * w_in;
            } else {
                diag += 2.0 * ax;
                row.push((lay.w(i - 1, j), -ax));
            }
            if i + 1 < nx {
                row.push((lay.w(i + 1, j), -ax));
            } else {
                // zero-gradient ghost w(nx) = w(nx - 1)
                diag -= ax;
            }
            row.push((r, diag));
            row.push((lay.p(i, j), sm / dz));
            row.push((lay.p(i, lay.down(j)), -sm / dz));

            // continuity in cell (i, j)
            let r = lay.p(i, j);
            let row = &mut rows[r];
            row.push((lay.u(i + 1, j), sc / dx));
            if i == 0 {
                rhs[r] += sc * u_in / dx;
            } else {
                row.push((lay.u(i, j), -sc / dx));
            }
            row.push((lay.w(i, lay.up(j)), sc / dz));
            row.push((lay.w(i, j), -sc / dz));

            // u momentum at (face i + 1, z_c(j))
            let face = i + 1;
            let r = lay.u(face, j);
            let zc = z0 + (j as f64 + 0.5) * dz;
            let mut diag = 2.0 * az + k * sm * chi(face as f64 * dx, zc);
            let row = &mut rows[r];
            row.push((lay.u(face, lay.up(j)), -az));
            row.push((lay.u(face, lay.down(j)), -az));
            if face == 1 {
                rhs[r] += ax * u_in;
            } else {
                row.push((lay.u(face - 1, j), -ax));
            }
            if face < nx {
                diag += 2.0 * ax;
                row.push((lay.u(face + 1, j), -ax));
                row.push((lay.p(face, j), sm / dx));
                row.push((lay.p(face - 1, j), -sm / dx));
            } else {
                // outflow face: u(nx + 1) = u(nx), pressure pinned to zero half a cell out
                diag += ax;
                row.push((lay.p(face - 1, j), -2.0 * sm / dx));
            }
            row.push((r, diag));
        }
    }
    Operator { rows, rhs }
}

/// Block-tridiagonal factorization of the assembled operator.
struct BlockFactors {
    m: usize,
    nz: usize,
    columns: Vec<DenseLu>,
    /// `(row in block i, col in block i - 1, value)`
    lower: Vec<Vec<(usize, usize, f64)>>,
    /// `(row in block i, col in block i + 1, value)`
    upper: Vec<Vec<(usize, usize, f64)>>,
}

impl BlockFactors {
    /// Position of a coupling unknown (`w` or `u` slot) inside the reduced set.
    fn coupling_pos(&self, local: usize) -> usize {
        if local < self.nz {
            local
        } else {
            debug_assert!(local >= 2 * self.nz);
            local - self.nz
        }
    }

    fn factor(op: &Operator, nx: usize, nz: usize) -> Result<Self> {
        let m = 3 * nz;
        let nr = 2 * nz;
        let mut lower = vec![Vec::new(); nx];
        let mut upper = vec![Vec::new(); nx];
        let mut dense_blocks = Vec::with_capacity(nx);
        for i in 0..nx {
            let mut d = vec![0.0; m * m];
            for a in 0..m {
                for &(c, v) in &op.rows[i * m + a] {
                    let (bc, lc) = (c / m, c % m);
                    if bc == i {
                        d[a * m + lc] += v;
                    } else if bc + 1 == i {
                        lower[i].push((a, lc, v));
                    } else if bc == i + 1 {
                        upper[i].push((a, lc, v));
                    } else {
                        unreachable!("operator is block tridiagonal");
                    }
                }
            }
            dense_blocks.push(d);
        }
        let mut this = Self {
            m,
            nz,
            columns: Vec::with_capacity(nx),
            lower,
            upper,
        };
        for (i, mut d) in dense_blocks.into_iter().enumerate() {
            if i > 0 {
                // G = (D~_{i-1})^{-1} restricted to the coupling unknowns
                let prev = &this.columns[i - 1];
                let mut unit = vec![0.0; m * nr];
                for q in 0..nr {
                    let local = if q < nz { q } else { q + nz };
                    unit[local * nr + q] = 1.0;
                }
                let inv_cols = prev.solve_many(&unit, nr);
                for &(a, r, l) in &this.lower[i] {
                    for &(r2, c, u) in &this.upper[i - 1] {
                        let g = inv_cols[r * nr + this.coupling_pos(r2)];
                        d[a * m + c] -= l * g * u;
                    }
                }
            }
            let lu = DenseLu::factor(m, d).ok_or_else(|| {
                Error::Solver(format!("singular column block {i} during elimination"))
            })?;
            this.columns.push(lu);
        }
        Ok(this)
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = self.m;
        let nx = self.columns.len();
        let mut y: Vec<Vec<f64>> = Vec::with_capacity(nx);
        for i in 0..nx {
            let mut g = b[i * m..(i + 1) * m].to_vec();
            if i > 0 {
                let prev = &y[i - 1];
                for &(a, c, l) in &self.lower[i] {
                    g[a] -= l * prev[c];
                }
            }
            y.push(self.columns[i].solve(&g));
        }
        let mut x = vec![0.0; nx * m];
        for i in (0..nx).rev() {
            let mut xi = y[i].clone();
            if i + 1 < nx {
                let mut coupling = vec![0.0; m];
                let next = &x[(i + 1) * m..(i + 2) * m];
                for &(a, c, u) in &self.upper[i] {
                    coupling[a] += u * next[c];
                }
                let corr = self.columns[i].solve(&coupling);
                xi.iter_mut().zip(corr).for_each(|(v, c)| *v -= c);
            }
            x[i * m..(i + 1) * m].copy_from_slice(&xi);
        }
        x
    }
}

/// Solves the channel problem; `shape = None` gives the empty channel.
pub fn solve_channel(shape: Option<&AirfoilShape>, config: &ChannelConfig) -> Result<FlowField> {
    config.validate()?;
    check_fits(shape, config)?;
    let (nx, nz) = (config.nx, config.nz);
    let op = assemble(shape, config);
    let factors = BlockFactors::factor(&op, nx, nz)?;
    let mut x = factors.solve(&op.rhs);

    let a_norm = op.inf_norm();
    let b_norm = op.rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let backward_error = |x: &[f64], r: &[f64]| {
        let r_norm = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let x_norm = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let denom = a_norm * x_norm + b_norm;
        if denom > 0.0 {
            r_norm / denom
        } else {
            r_norm
        }
    };
    let mut r = op.residual(&x);
    let mut residual = backward_error(&x, &r);
    let mut refinements = 0;
    while residual > config.solver_tol && refinements < config.max_iters {
        let dx = factors.solve(&r);
        x.iter_mut().zip(dx).for_each(|(v, d)| *v += d);
        r = op.residual(&x);
        residual = backward_error(&x, &r);
        refinements += 1;
    }
    let lay = Layout { nz };
    let mut u = vec![0.0; (nx + 1) * nz];
    let mut w = vec![0.0; nx * nz];
    let mut p = vec![0.0; nx * nz];
    for j in 0..nz {
        u[j] = config.inflow[0];
    }
    for i in 0..nx {
        for j in 0..nz {
            w[i * nz + j] = x[lay.w(i, j)];
            p[i * nz + j] = x[lay.p(i, j)];
            u[(i + 1) * nz + j] = x[lay.u(i + 1, j)];
        }
    }
    Ok(FlowField {
        nx,
        nz,
        length_x: config.length_x,
        height_z: config.height_z,
        u1: u,
        u2: w,
        p,
        converged: residual <= config.solver_tol,
        residual,
        refinements,
    })
}
