//! Gridded channel fields: the `BLFIELD1` binary layout, a CSV twin, and interpolation.
//!
//! Binary layout, all little endian:
//!
//! | bytes | content |
//! |---|---|
//! | 8 | magic `BLFIELD1` |
//! | 4 × u32 | nx, ny, nz, nt |
//! | 4 × f64 | T, Lx, H, Lz |
//! | nt·nz·ny·nx·3 × f64 | (u_x, u_y, u_z) per node |
//!
//! Nodes are ordered time-major, then z, then y, then x (x fastest). Times are
//! t_i = i·T/(nt − 1); x and z are periodic with spacing Lx/nx and Lz/nz and no
//! duplicated endpoint; y runs over [0, H] with spacing H/(ny − 1), walls included.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{FieldError, FieldSource, Mat3, SourceKind};
use crate::geometry::Vec3;

pub const GRID_MAGIC: &[u8; 8] = b"BLFIELD1";
const HEADER_LEN: usize = 8 + 16 + 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridLayout {
    Binary,
    /// First line `nx,ny,nz,nt,T,Lx,H,Lz`; then one `ux,uy,uz` line per node in binary order.
    Csv,
}

impl GridLayout {
    pub fn from_path(p: &Path) -> Self {
        match p.extension().and_then(|e| e.to_str()) {
            Some("csv") => GridLayout::Csv,
            _ => GridLayout::Binary,
        }
    }
}

/// Trilinear-in-space, linear-in-time interpolant of nodal data.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub dims: [usize; 4],
    pub t_max: f64,
    pub lx: f64,
    pub height: f64,
    pub lz: f64,
    data: Vec<f64>,
    grad: Vec<f64>,
}

impl GridField {
    pub fn new(dims: [usize; 4], t_max: f64, lx: f64, height: f64, lz: f64, data: Vec<f64>) -> Result<Self, FieldError> {
        let [nx, ny, nz, nt] = dims;
        let need = nx * ny * nz * nt * 3;
        let bad = |index, message: String| Err(FieldError::Ingestion { index, message });
        if nx == 0 || ny < 2 || nz == 0 || nt < 2 {
            return bad(0, format!("dims {dims:?}: need nx, nz ≥ 1 and ny, nt ≥ 2"));
        }
        if !(t_max > 0.0 && lx > 0.0 && height > 0.0 && lz > 0.0) {
            return bad(0, "T and lengths must be positive".into());
        }
        if data.len() != need {
            return bad(data.len(), format!("expected {need} values, found {}", data.len()));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return bad(i, "non-finite entry".into());
        }
        let mut g = GridField { dims, t_max, lx, height, lz, data, grad: Vec::new() };
        g.grad = g.nodal_gradients();
        Ok(g)
    }

    /// Samples a field on the grid nodes.
    pub fn sample(
        src: &dyn FieldSource,
        dims: [usize; 4],
        t_max: f64,
        lx: f64,
        height: f64,
        lz: f64,
    ) -> Result<Self, FieldError> {
        let [nx, ny, nz, nt] = dims;
        let mut data = Vec::with_capacity(nx * ny * nz * nt * 3);
        for it in 0..nt {
            let t = t_max * it as f64 / (nt - 1) as f64;
            for iz in 0..nz {
                for iy in 0..ny {
                    for ix in 0..nx {
                        let x = Vec3::new(
                            lx * ix as f64 / nx as f64,
                            height * iy as f64 / (ny - 1) as f64,
                            lz * iz as f64 / nz as f64,
                        );
                        data.extend(src.value(t, &x).iter());
                    }
                }
            }
        }
        GridField::new(dims, t_max, lx, height, lz, data)
    }

    fn idx(&self, it: usize, iz: usize, iy: usize, ix: usize) -> usize {
        let [nx, ny, nz, _] = self.dims;
        (((it * nz + iz) * ny + iy) * nx + ix) * 3
    }

    fn node(&self, it: usize, iz: usize, iy: usize, ix: usize) -> Vec3 {
        let i = self.idx(it, iz, iy, ix);
        Vec3::new(self.data[i], self.data[i + 1], self.data[i + 2])
    }

    // Nine entries per node: ∂_j u_i, row-major.
    fn nodal_gradients(&self) -> Vec<f64> {
        let [nx, ny, nz, nt] = self.dims;
        let hx = self.lx / nx as f64;
        let hy = self.height / (ny - 1) as f64;
        let hz = self.lz / nz as f64;
        let mut out = vec![0.0; nx * ny * nz * nt * 9];
        for it in 0..nt {
            for iz in 0..nz {
                for iy in 0..ny {
                    for ix in 0..nx {
                        let dx = if nx > 1 {
                            (self.node(it, iz, iy, (ix + 1) % nx) - self.node(it, iz, iy, (ix + nx - 1) % nx)) / (2.0 * hx)
                        } else {
                            Vec3::zeros()
                        };
                        let dz = if nz > 1 {
                            (self.node(it, (iz + 1) % nz, iy, ix) - self.node(it, (iz + nz - 1) % nz, iy, ix)) / (2.0 * hz)
                        } else {
                            Vec3::zeros()
                        };
                        let f = |j: usize| self.node(it, iz, j, ix);
                        let dy = if ny == 2 {
                            (f(1) - f(0)) / hy
                        } else if iy == 0 {
                            (-3.0 * f(0) + 4.0 * f(1) - f(2)) / (2.0 * hy)
                        } else if iy == ny - 1 {
                            (3.0 * f(ny - 1) - 4.0 * f(ny - 2) + f(ny - 3)) / (2.0 * hy)
                        } else {
                            (f(iy + 1) - f(iy - 1)) / (2.0 * hy)
                        };
                        let base = self.idx(it, iz, iy, ix) * 3;
                        for i in 0..3 {
                            out[base + 3 * i] = dx[i];
                            out[base + 3 * i + 1] = dy[i];
                            out[base + 3 * i + 2] = dz[i];
                        }
                    }
                }
            }
        }
        out
    }

    // Corner indices and weights of the space-time cell containing (t, x).
    fn stencil(&self, t: f64, x: &Vec3) -> [(usize, usize, usize, usize, f64); 16] {
        let [nx, ny, nz, nt] = self.dims;
        let locate_periodic = |v: f64, len: f64, n: usize| {
            let s = (v / len).rem_euclid(1.0) * n as f64;
            let i = (s.floor() as usize).min(n - 1);
            (i, (i + 1) % n, s - i as f64)
        };
        let locate_clamped = |v: f64, len: f64, n: usize| {
            let s = (v / len).clamp(0.0, 1.0) * (n - 1) as f64;
            let i = (s.floor() as usize).min(n - 2);
            (i, i + 1, s - i as f64)
        };
        let (x0, x1, fx) = locate_periodic(x.x, self.lx, nx);
        let (z0, z1, fz) = locate_periodic(x.z, self.lz, nz);
        let (y0, y1, fy) = locate_clamped(x.y, self.height, ny);
        let (t0, t1, ft) = locate_clamped(t, self.t_max, nt);
        let mut out = [(0, 0, 0, 0, 0.0); 16];
        let mut k = 0;
        for (it, wt) in [(t0, 1.0 - ft), (t1, ft)] {
            for (iz, wz) in [(z0, 1.0 - fz), (z1, fz)] {
                for (iy, wy) in [(y0, 1.0 - fy), (y1, fy)] {
                    for (ix, wx) in [(x0, 1.0 - fx), (x1, fx)] {
                        out[k] = (it, iz, iy, ix, wt * wz * wy * wx);
                        k += 1;
                    }
                }
            }
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(HEADER_LEN + 8 * self.data.len());
        b.extend_from_slice(GRID_MAGIC);
        for d in self.dims {
            b.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in [self.t_max, self.lx, self.height, self.lz] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            b.extend_from_slice(&v.to_le_bytes());
        }
        b
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, FieldError> {
        let bad = |index, message: &str| FieldError::Ingestion { index, message: message.into() };
        if b.len() < HEADER_LEN {
            return Err(bad(b.len(), "file shorter than header"));
        }
        if &b[..8] != GRID_MAGIC {
            return Err(bad(0, "bad magic"));
        }
        let u = |i: usize| u32::from_le_bytes(b[8 + 4 * i..12 + 4 * i].try_into().unwrap()) as usize;
        let f = |off: usize| f64::from_le_bytes(b[off..off + 8].try_into().unwrap());
        let dims = [u(0), u(1), u(2), u(3)];
        let (t, lx, h, lz) = (f(24), f(32), f(40), f(48));
        let need = dims.iter().product::<usize>() * 3;
        let body = &b[HEADER_LEN..];
        if body.len() != 8 * need {
            return Err(bad(body.len() / 8, &format!("expected {need} values, found {} bytes of data", body.len())));
        }
        let data = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        GridField::new(dims, t, lx, h, lz, data)
    }

    pub fn to_csv(&self) -> String {
        let [nx, ny, nz, nt] = self.dims;
        let mut s = format!("{nx},{ny},{nz},{nt},{:e},{:e},{:e},{:e}\n", self.t_max, self.lx, self.height, self.lz);
        for c in self.data.chunks_exact(3) {
            s.push_str(&format!("{:e},{:e},{:e}\n", c[0], c[1], c[2]));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, FieldError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
        let mut rows = rdr.records();
        let bad = |index, message: String| FieldError::Ingestion { index, message };
        let head = rows
            .next()
            .ok_or_else(|| bad(0, "empty file".into()))?
            .map_err(|e| bad(0, e.to_string()))?;
        if head.len() != 8 {
            return Err(bad(0, format!("header needs 8 fields, found {}", head.len())));
        }
        let int = |i: usize| head[i].trim().parse::<usize>().map_err(|e| bad(0, format!("field {i}: {e}")));
        let flt = |i: usize| head[i].trim().parse::<f64>().map_err(|e| bad(0, format!("field {i}: {e}")));
        let dims = [int(0)?, int(1)?, int(2)?, int(3)?];
        let mut data = Vec::new();
        for (row, rec) in rows.enumerate() {
            let rec = rec.map_err(|e| bad(row, e.to_string()))?;
            if rec.len() != 3 {
                return Err(bad(row, format!("row needs 3 values, found {}", rec.len())));
            }
            for v in rec.iter() {
                data.push(v.trim().parse::<f64>().map_err(|e| bad(row, e.to_string()))?);
            }
        }
        GridField::new(dims, flt(4)?, flt(5)?, flt(6)?, flt(7)?, data)
    }
}

impl FieldSource for GridField {
    fn value(&self, t: f64, x: &Vec3) -> Vec3 {
        self.stencil(t, x)
            .iter()
            .fold(Vec3::zeros(), |a, &(it, iz, iy, ix, w)| a + w * self.node(it, iz, iy, ix))
    }

    fn gradient(&self, t: f64, x: &Vec3) -> Mat3 {
        let mut g = Mat3::zeros();
        for &(it, iz, iy, ix, w) in self.stencil(t, x).iter() {
            let base = self.idx(it, iz, iy, ix) * 3;
            g += w * Mat3::from_row_slice(&self.grad[base..base + 9]);
        }
        g
    }

    fn time_range(&self) -> (f64, f64) {
        (0.0, self.t_max)
    }

    fn kind(&self) -> SourceKind {
        SourceKind::Gridded
    }

    fn gradient_support(&self) -> Result<(), String> {
        if self.dims[1] < 3 {
            Err(format!("wall-normal gradients need ny ≥ 3 for one-sided stencils, have {}", self.dims[1]))
        } else {
            Ok(())
        }
    }
}

/// Reads a gridded field in the given layout.
pub fn ingest_grid(path: &Path, layout: GridLayout) -> Result<GridField, FieldError> {
    let io = |e: std::io::Error| FieldError::Ingestion { index: 0, message: format!("{}: {e}", path.display()) };
    match layout {
        GridLayout::Binary => GridField::from_bytes(&fs::read(path).map_err(io)?),
        GridLayout::Csv => GridField::from_csv(&fs::read_to_string(path).map_err(io)?),
    }
}

pub fn write_grid(field: &GridField, path: &Path, layout: GridLayout) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    match layout {
        GridLayout::Binary => f.write_all(&field.to_bytes()),
        GridLayout::Csv => f.write_all(field.to_csv().as_bytes()),
    }
}
