//! Grid geometry, halo-padded field storage and deterministic field generation.
//!
//! Indexing follows the Fortran layout `u(k, j, i)`: interior cells are
//! `i in 1..=nx`, `j in 1..=ny`, `k in 1..=nz`, with a one-cell halo at
//! `i = 0, nx + 1` and `j = 0, ny + 1`. There is no halo in Z. Storage is
//! k-fastest, so every vertical column is a contiguous slice.

use std::fmt;
use std::hash::Hasher;
use std::io::{Read, Write};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Halo width in X and Y.
pub const HALO: usize = 1;

/// Size in bytes of the field serialization header (nx, ny, nz as u64 LE).
pub const FIELD_HEADER_BYTES: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridDims {
    nx: usize,
    ny: usize,
    nz: usize,
}

impl GridDims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self> {
        let reject = |reason| Err(Error::InvalidGrid { nx, ny, nz, reason });
        if nx == 0 || ny == 0 || nz == 0 {
            return reject("extents must be non-zero");
        }
        if nz < 2 {
            return reject("the stencil starts at the second level, nz must be >= 2");
        }
        if nx
            .checked_add(2)
            .and_then(|x| x.checked_mul(ny + 2))
            .and_then(|x| x.checked_mul(nz))
            .is_none()
        {
            return reject("padded size overflows");
        }
        Ok(Self { nx, ny, nz })
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn nz(&self) -> usize {
        self.nz
    }

    #[inline]
    pub fn halo(&self) -> usize {
        HALO
    }

    /// Number of interior cells, `nx * ny * nz`.
    pub fn interior_cells(&self) -> u64 {
        self.nx as u64 * self.ny as u64 * self.nz as u64
    }

    /// Padded extent in Y, the stride (in columns) between consecutive X planes.
    #[inline]
    pub fn padded_ny(&self) -> usize {
        self.ny + 2 * HALO
    }

    /// Total number of stored values including halos.
    pub fn padded_len(&self) -> usize {
        (self.nx + 2 * HALO) * self.padded_ny() * self.nz
    }

    /// Number of values in one padded X plane.
    #[inline]
    pub fn plane_len(&self) -> usize {
        self.padded_ny() * self.nz
    }

    /// Offset of `(i, j, k)`; `i`, `j` include the halo, `k` is 1-based.
    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i <= self.nx + 1, "i={i} outside 0..={}", self.nx + 1);
        debug_assert!(j <= self.ny + 1, "j={j} outside 0..={}", self.ny + 1);
        debug_assert!(k >= 1 && k <= self.nz, "k={k} outside 1..={}", self.nz);
        (i * self.padded_ny() + j) * self.nz + (k - 1)
    }

    /// Offset of the first value (k = 1) of column `(i, j)`.
    #[inline]
    pub fn column_offset(&self, i: usize, j: usize) -> usize {
        self.linear_index(i, j, 1)
    }
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.nx, self.ny, self.nz)
    }
}

/// Validating constructor mirroring the `make_grid` operation.
pub fn make_grid(nx: usize, ny: usize, nz: usize) -> Result<GridDims> {
    GridDims::new(nx, ny, nz)
}

/// A halo-padded double precision field stored k-fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Field3D {
    dims: GridDims,
    data: Vec<f64>,
}

impl Field3D {
    pub fn zeros(dims: GridDims) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.padded_len()],
        }
    }

    pub fn from_vec(dims: GridDims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.padded_len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values supplied for a {dims} grid holding {}",
                data.len(),
                dims.padded_len()
            )));
        }
        Ok(Self { dims, data })
    }

    #[inline]
    pub fn dims(&self) -> GridDims {
        self.dims
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.dims.linear_index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, value: f64) {
        let idx = self.dims.linear_index(i, j, k);
        self.data[idx] = value;
    }

    /// The contiguous column at `(i, j)`, levels `1..=nz`.
    #[inline]
    pub fn column(&self, i: usize, j: usize) -> &[f64] {
        let start = self.dims.column_offset(i, j);
        &self.data[start..start + self.dims.nz]
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Overwrites the X and Y halos with the periodic wrap of the interior.
    pub fn wrap_halos(&mut self) {
        let GridDims { nx, ny, .. } = self.dims;
        for i in 0..=nx + 1 {
            let si = wrap(i, nx);
            for j in 0..=ny + 1 {
                let sj = wrap(j, ny);
                if (si, sj) == (i, j) {
                    continue;
                }
                let src = self.dims.column_offset(si, sj);
                let dst = self.dims.column_offset(i, j);
                self.data.copy_within(src..src + self.dims.nz, dst);
            }
        }
    }

    /// Interior values in index order (i, then j, then k fastest).
    pub fn interior(&self) -> impl Iterator<Item = f64> + '_ {
        let GridDims { nx, ny, .. } = self.dims;
        (1..=nx).flat_map(move |i| (1..=ny).flat_map(move |j| self.column(i, j).iter().copied()))
    }

    /// Writes the 24-byte header (nx, ny, nz as u64 LE) followed by every
    /// padded value as a little-endian f64 in index order.
    pub fn write_le<W: Write>(&self, mut w: W) -> Result<()> {
        for extent in [self.dims.nx, self.dims.ny, self.dims.nz] {
            w.write_all(&(extent as u64).to_le_bytes())?;
        }
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_le<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; FIELD_HEADER_BYTES];
        r.read_exact(&mut header)?;
        let extent = |n: usize| {
            let raw = u64::from_le_bytes(header[n * 8..n * 8 + 8].try_into().unwrap());
            usize::try_from(raw).map_err(|_| {
                Error::DimensionMismatch(format!("header extent {raw} does not fit in usize"))
            })
        };
        let dims = GridDims::new(extent(0)?, extent(1)?, extent(2)?)?;
        let mut data = Vec::with_capacity(dims.padded_len());
        let mut buf = [0u8; 8];
        for _ in 0..dims.padded_len() {
            r.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        Ok(Self { dims, data })
    }
}

#[inline]
fn wrap(idx: usize, n: usize) -> usize {
    if idx == 0 {
        n
    } else if idx == n + 1 {
        1
    } else {
        idx
    }
}

/// The three prognostic wind fields.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSet {
    pub u: Field3D,
    pub v: Field3D,
    pub w: Field3D,
}

impl FieldSet {
    pub fn new(u: Field3D, v: Field3D, w: Field3D) -> Result<Self> {
        if u.dims != v.dims || u.dims != w.dims {
            return Err(Error::DimensionMismatch(format!(
                "wind fields disagree: u {}, v {}, w {}",
                u.dims, v.dims, w.dims
            )));
        }
        Ok(Self { u, v, w })
    }

    #[inline]
    pub fn dims(&self) -> GridDims {
        self.u.dims
    }

    pub fn digest(&self) -> Digest {
        digest_fields([&self.u, &self.v, &self.w])
    }
}

/// Advection source terms, one per wind component.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceSet {
    pub su: Field3D,
    pub sv: Field3D,
    pub sw: Field3D,
}

impl SourceSet {
    pub fn zeros(dims: GridDims) -> Self {
        Self {
            su: Field3D::zeros(dims),
            sv: Field3D::zeros(dims),
            sw: Field3D::zeros(dims),
        }
    }

    #[inline]
    pub fn dims(&self) -> GridDims {
        self.su.dims
    }

    pub fn fields(&self) -> [&Field3D; 3] {
        [&self.su, &self.sv, &self.sw]
    }

    /// Combined digest over su, sv then sw.
    pub fn digest(&self) -> Digest {
        digest_fields(self.fields())
    }
}

/// How [`fill_fields`] populates the wind fields.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// Every u cell is `u`, every v cell `v`, every w cell `w`.
    Uniform { u: f64, v: f64, w: f64 },
    /// Smooth periodic sine/cosine pattern.
    Trig,
    /// Uniform values in [-1, 1) from [`Lcg64`], filling u then v then w
    /// interiors in index order.
    Random { seed: u64 },
}

/// Knuth's MMIX 64-bit linear congruential generator.
///
/// `state <- state * 6364136223846793005 + 1442695040888963407 (mod 2^64)`,
/// and each draw uses the top 53 bits of the new state.
#[derive(Clone, Debug)]
pub struct Lcg64 {
    state: u64,
}

impl Lcg64 {
    pub const MULTIPLIER: u64 = 6364136223846793005;
    pub const INCREMENT: u64 = 1442695040888963407;

    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(Self::MULTIPLIER)
            .wrapping_add(Self::INCREMENT);
        self.state
    }

    /// Uniform in [0, 1) with 53 bits of resolution.
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [-1, 1).
    #[inline]
    pub fn next_signed(&mut self) -> f64 {
        2.0 * self.next_unit() - 1.0
    }
}

/// Builds u, v, w for `dims` and wraps their halos periodically.
///
/// Uniform and random modes are bit-reproducible everywhere. Trig mode goes
/// through the platform `sin`/`cos`, so it is only reproducible per libm.
pub fn fill_fields(dims: GridDims, spec: GeneratorSpec) -> FieldSet {
    let mut u = Field3D::zeros(dims);
    let mut v = Field3D::zeros(dims);
    let mut w = Field3D::zeros(dims);

    match spec {
        GeneratorSpec::Uniform { u: a, v: b, w: c } => {
            u.data.fill(a);
            v.data.fill(b);
            w.data.fill(c);
        }
        GeneratorSpec::Trig => {
            use std::f64::consts::TAU;
            let GridDims { nx, ny, nz } = dims;
            for i in 1..=nx {
                let x = TAU * (i - 1) as f64 / nx as f64;
                for j in 1..=ny {
                    let y = TAU * (j - 1) as f64 / ny as f64;
                    for k in 1..=nz {
                        let z = k as f64 / nz as f64;
                        u.set(i, j, k, x.sin() * y.cos() + 0.1 * z);
                        v.set(i, j, k, -x.cos() * y.sin() + 0.05 * z);
                        w.set(i, j, k, 0.5 * (x + y).sin() * z);
                    }
                }
            }
        }
        GeneratorSpec::Random { seed } => {
            let mut rng = Lcg64::new(seed);
            let GridDims { nx, ny, nz } = dims;
            for field in [&mut u, &mut v, &mut w] {
                for i in 1..=nx {
                    for j in 1..=ny {
                        for k in 1..=nz {
                            field.set(i, j, k, rng.next_signed());
                        }
                    }
                }
            }
        }
    }

    for field in [&mut u, &mut v, &mut w] {
        field.wrap_halos();
    }
    FieldSet { u, v, w }
}

/// 64-bit FNV-1a digest of field contents.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Digest(pub u64);

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// FNV-1a over the little-endian bytes of every interior cell in index order.
pub fn checksum(field: &Field3D) -> Digest {
    digest_fields([field])
}

fn digest_fields<'a>(fields: impl IntoIterator<Item = &'a Field3D>) -> Digest {
    let mut hasher = FnvHasher::default();
    for field in fields {
        for v in field.interior() {
            hasher.write(&v.to_bits().to_le_bytes());
        }
    }
    Digest(hasher.finish())
}
