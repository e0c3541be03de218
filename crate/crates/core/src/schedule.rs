//! Execution schedules: the same stencil, with different data movement.
//!
//! Every variant evaluates the shared kernel expressions in the same order
//! per point, so all of them produce bit-identical [`SourceSet`]s. They
//! differ only in where operands come from:
//!
//! * `Reference` loads every operand straight from the full arrays.
//! * `ColumnBuffered` stages the 17 stencil columns of one `(i, j)` into
//!   local scratch before computing that column.
//! * `YBatched` stages the same 17 column arrays for `y_batch` columns at once.
//! * `XReordered` walks X inside each Y batch. Planes for `i - 1` and `i` are
//!   shifted locally from the previous step and only plane `i + 1` is fetched
//!   from the full arrays.
//!
//! Outputs are stored straight into the full source arrays in all variants.
//! Each engine owns a contiguous X slab and writes only that slab.

use std::fmt;
use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldSet, GridDims, SourceSet};
use crate::kernel::{
    point_sources, stencil_column_slot, AdvectionCoefficients, Wind, STENCIL_COLUMNS,
};

pub const DEFAULT_Y_BATCH: usize = 64;

/// Column arrays of scratch budgeted per engine and batch column.
pub const SCRATCH_ARRAYS_BUDGET: usize = 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Reference,
    ColumnBuffered,
    YBatched,
    XReordered,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Reference,
        Variant::ColumnBuffered,
        Variant::YBatched,
        Variant::XReordered,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Reference => "reference",
            Variant::ColumnBuffered => "columnbuffered",
            Variant::YBatched => "ybatched",
            Variant::XReordered => "xreordered",
        }
    }

    fn is_batched(self) -> bool {
        matches!(self, Variant::YBatched | Variant::XReordered)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_'))
            .flat_map(char::to_lowercase)
            .collect();
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| Error::InvalidSchedule(format!("unknown schedule `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub variant: Variant,
    /// Columns per Y batch; ignored by `Reference` and `ColumnBuffered`.
    pub y_batch: usize,
    pub engines: usize,
}

impl ScheduleSpec {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            y_batch: DEFAULT_Y_BATCH,
            engines: 1,
        }
    }

    pub fn with_y_batch(mut self, y_batch: usize) -> Self {
        self.y_batch = y_batch;
        self
    }

    pub fn with_engines(mut self, engines: usize) -> Self {
        self.engines = engines;
        self
    }

    pub fn validate(&self, dims: GridDims) -> Result<()> {
        if self.y_batch == 0 {
            return Err(Error::InvalidSchedule("y_batch must be at least 1".into()));
        }
        if self.engines == 0 || self.engines > dims.nx() {
            return Err(Error::InvalidSchedule(format!(
                "{} engines cannot split nx={}",
                self.engines,
                dims.nx()
            )));
        }
        if self.variant.is_batched() && self.y_batch > dims.ny() {
            return Err(Error::InvalidSchedule(format!(
                "y_batch {} exceeds ny={}",
                self.y_batch,
                dims.ny()
            )));
        }
        Ok(())
    }

    /// Columns staged together by this spec's variant.
    fn batch_columns(&self) -> usize {
        if self.variant.is_batched() {
            self.y_batch
        } else {
            1
        }
    }
}

/// Loads and stores performed by one schedule run.
///
/// `external_*` count f64 accesses to the full halo-padded arrays, `local_*`
/// accesses to scratch. `scratch_bytes_peak` is the largest scratch footprint
/// held by any single engine.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficReport {
    pub external_reads: u64,
    pub external_writes: u64,
    pub local_reads: u64,
    pub local_writes: u64,
    pub scratch_bytes_peak: u64,
}

impl TrafficReport {
    fn merge(&mut self, other: &TrafficReport) {
        self.external_reads += other.external_reads;
        self.external_writes += other.external_writes;
        self.local_reads += other.local_reads;
        self.local_writes += other.local_writes;
        self.scratch_bytes_peak = self.scratch_bytes_peak.max(other.scratch_bytes_peak);
    }
}

/// Interior X range `[x_begin, x_end)` owned by one engine, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slab {
    pub x_begin: usize,
    pub x_end: usize,
}

impl Slab {
    pub fn len(&self) -> usize {
        self.x_end - self.x_begin
    }

    pub fn is_empty(&self) -> bool {
        self.x_end == self.x_begin
    }
}

/// Balanced split of `1..=nx`; the first `nx % engines` slabs get one extra plane.
pub fn partition_domain(dims: GridDims, engines: usize) -> Result<Vec<Slab>> {
    partition_extent(dims.nx(), engines)
}

pub(crate) fn partition_extent(nx: usize, engines: usize) -> Result<Vec<Slab>> {
    if engines == 0 || engines > nx {
        return Err(Error::InvalidSchedule(format!(
            "{engines} engines cannot split nx={nx}"
        )));
    }
    let base = nx / engines;
    let extra = nx % engines;
    let mut slabs = Vec::with_capacity(engines);
    let mut x = 1;
    for e in 0..engines {
        let len = base + usize::from(e < extra);
        slabs.push(Slab {
            x_begin: x,
            x_end: x + len,
        });
        x += len;
    }
    Ok(slabs)
}

#[derive(Clone, Debug)]
pub struct ScheduleRun {
    pub sources: SourceSet,
    pub traffic: TrafficReport,
    pub wall_time: Duration,
}

pub fn run_schedule(
    fields: &FieldSet,
    coeffs: &AdvectionCoefficients,
    spec: &ScheduleSpec,
) -> Result<ScheduleRun> {
    let dims = fields.dims();
    coeffs.validate()?;
    coeffs.check_dims(dims)?;
    spec.validate(dims)?;
    let slabs = partition_domain(dims, spec.engines)?;

    let start = Instant::now();
    let mut sources = SourceSet::zeros(dims);
    let outputs = split_slabs(&mut sources, &slabs);
    let ctx = Ctx {
        fields,
        coeffs,
        dims,
    };

    let traffic = if outputs.len() == 1 {
        let out = outputs.into_iter().next().unwrap();
        run_engine(&ctx, spec, out)
    } else {
        thread::scope(|scope| {
            let handles: Vec<_> = outputs
                .into_iter()
                .map(|out| {
                    let ctx = &ctx;
                    scope.spawn(move || run_engine(ctx, spec, out))
                })
                .collect();
            let mut total = TrafficReport::default();
            for h in handles {
                total.merge(&h.join().expect("schedule worker panicked"));
            }
            total
        })
    };
    let wall_time = start.elapsed();

    Ok(ScheduleRun {
        sources,
        traffic,
        wall_time,
    })
}

struct Ctx<'a> {
    fields: &'a FieldSet,
    coeffs: &'a AdvectionCoefficients,
    dims: GridDims,
}

impl Ctx<'_> {
    #[inline]
    fn array(&self, wind: Wind) -> &[f64] {
        match wind {
            Wind::U => self.fields.u.as_slice(),
            Wind::V => self.fields.v.as_slice(),
            Wind::W => self.fields.w.as_slice(),
        }
    }

    #[inline]
    fn column(&self, wind: Wind, i: usize, j: usize) -> &[f64] {
        let start = self.dims.column_offset(i, j);
        &self.array(wind)[start..start + self.dims.nz()]
    }
}

/// The part of su/sv/sw an engine may write: X planes `[slab.x_begin, slab.x_end)`.
struct SlabOut<'a> {
    slab: Slab,
    base: usize,
    su: &'a mut [f64],
    sv: &'a mut [f64],
    sw: &'a mut [f64],
}

impl SlabOut<'_> {
    #[inline]
    fn store(&mut self, dims: &GridDims, i: usize, j: usize, k: usize, vals: [f64; 3]) {
        let idx = dims.linear_index(i, j, k) - self.base;
        self.su[idx] = vals[0];
        self.sv[idx] = vals[1];
        self.sw[idx] = vals[2];
    }
}

fn split_slabs<'a>(sources: &'a mut SourceSet, slabs: &[Slab]) -> Vec<SlabOut<'a>> {
    let dims = sources.dims();
    let plane = dims.plane_len();
    let SourceSet { su, sv, sw } = sources;
    let mut rest = [su.as_mut_slice(), sv.as_mut_slice(), sw.as_mut_slice()];
    let mut consumed = 0;
    let mut outs = Vec::with_capacity(slabs.len());
    for &slab in slabs {
        let begin = slab.x_begin * plane;
        let end = slab.x_end * plane;
        let mut parts = rest.map(|r| {
            let (_, tail) = r.split_at_mut(begin - consumed);
            tail.split_at_mut(end - begin)
        });
        // Rebuild `rest` from the tails and keep the heads for this slab.
        let heads: [&mut [f64]; 3] = std::array::from_fn(|n| std::mem::take(&mut parts[n].0));
        rest = parts.map(|(_, tail)| tail);
        consumed = end;
        let [su, sv, sw] = heads;
        outs.push(SlabOut {
            slab,
            base: begin,
            su,
            sv,
            sw,
        });
    }
    outs
}

fn run_engine(ctx: &Ctx<'_>, spec: &ScheduleSpec, mut out: SlabOut<'_>) -> TrafficReport {
    match spec.variant {
        Variant::Reference => run_direct(ctx, &mut out),
        Variant::ColumnBuffered | Variant::YBatched => {
            run_column_batches(ctx, spec.batch_columns(), &mut out)
        }
        Variant::XReordered => run_plane_pipeline(ctx, spec.batch_columns(), &mut out),
    }
}

fn run_direct(ctx: &Ctx<'_>, out: &mut SlabOut<'_>) -> TrafficReport {
    let dims = ctx.dims;
    let nz = dims.nz();
    let arrays = [ctx.array(Wind::U), ctx.array(Wind::V), ctx.array(Wind::W)];
    let mut t = TrafficReport::default();
    for i in out.slab.x_begin..out.slab.x_end {
        for j in 1..=dims.ny() {
            for k in 2..=nz {
                let mut at = |w: Wind, di: i32, dj: i32, dk: i32| {
                    t.external_reads += 1;
                    let idx = dims.linear_index(offset(i, di), offset(j, dj), offset(k, dk));
                    arrays[w.index()][idx]
                };
                let vals = point_sources(&mut at, &ctx.coeffs.level(k), k == nz);
                out.store(&dims, i, j, k, vals);
                t.external_writes += 3;
            }
        }
    }
    t
}

/// Stages all 17 stencil columns for `batch` Y columns, then computes them.
/// With `batch == 1` this is the one-column-at-a-time schedule.
fn run_column_batches(ctx: &Ctx<'_>, batch: usize, out: &mut SlabOut<'_>) -> TrafficReport {
    let dims = ctx.dims;
    let nz = dims.nz();
    let ny = dims.ny();
    let mut scratch = vec![0.0f64; STENCIL_COLUMNS.len() * batch * nz];
    let mut t = TrafficReport {
        scratch_bytes_peak: (scratch.len() * 8) as u64,
        ..Default::default()
    };

    for i in out.slab.x_begin..out.slab.x_end {
        for j0 in (1..=ny).step_by(batch) {
            let cols = batch.min(ny - j0 + 1);
            for (slot, &(w, di, dj)) in STENCIL_COLUMNS.iter().enumerate() {
                for jr in 0..cols {
                    let src = ctx.column(w, offset(i, di), offset(j0 + jr, dj));
                    let dst = (slot * batch + jr) * nz;
                    scratch[dst..dst + nz].copy_from_slice(src);
                }
                t.external_reads += (cols * nz) as u64;
                t.local_writes += (cols * nz) as u64;
            }

            for jr in 0..cols {
                for k in 2..=nz {
                    let scratch = &scratch;
                    let mut at = |w: Wind, di: i32, dj: i32, dk: i32| {
                        t.local_reads += 1;
                        let slot = stencil_column_slot(w, di, dj);
                        scratch[(slot * batch + jr) * nz + offset(k - 1, dk)]
                    };
                    let vals = point_sources(&mut at, &ctx.coeffs.level(k), k == nz);
                    out.store(&dims, i, j0 + jr, k, vals);
                    t.external_writes += 3;
                }
            }
        }
    }
    t
}

/// Inclusive `dj` range of the columns of `wind` read at X offset `di`.
pub(crate) fn role_columns(wind: Wind, di: i32) -> (i32, i32) {
    STENCIL_COLUMNS
        .iter()
        .filter(|&&(w, d, _)| w == wind && d == di)
        .fold((i32::MAX, i32::MIN), |(lo, hi), &(_, _, dj)| {
            (lo.min(dj), hi.max(dj))
        })
}

/// The `dj` range a plane must hold to serve every X role.
const FULL_PLANE: (i32, i32) = (-1, 1);

/// One X plane of one wind field, restricted to a Y batch. Column `c` of the
/// batch (relative to its first column, may be negative) lives at position
/// `c - lo`.
struct PlaneSlot {
    lo: i32,
    data: Vec<f64>,
}

impl PlaneSlot {
    fn new(range: (i32, i32), batch: usize, nz: usize) -> Self {
        let width = batch + (range.1 - range.0) as usize;
        Self {
            lo: range.0,
            data: vec![0.0; width * nz],
        }
    }

    #[inline]
    fn column_start(&self, c: i32, nz: usize) -> usize {
        (c - self.lo) as usize * nz
    }
}

fn run_plane_pipeline(ctx: &Ctx<'_>, batch: usize, out: &mut SlabOut<'_>) -> TrafficReport {
    let dims = ctx.dims;
    let nz = dims.nz();
    let ny = dims.ny();
    let slab = out.slab;

    // slots[wind][di + 1]
    let mut slots: [[PlaneSlot; 3]; 3] = std::array::from_fn(|w| {
        let wind = Wind::ALL[w];
        [
            PlaneSlot::new(role_columns(wind, -1), batch, nz),
            PlaneSlot::new(FULL_PLANE, batch, nz),
            PlaneSlot::new(FULL_PLANE, batch, nz),
        ]
    });
    let scratch_values: usize = slots.iter().flatten().map(|s| s.data.len()).sum();
    let mut t = TrafficReport {
        scratch_bytes_peak: (scratch_values * 8) as u64,
        ..Default::default()
    };

    for j0 in (1..=ny).step_by(batch) {
        let cols = batch.min(ny - j0 + 1);

        let fetch = |slot: &mut PlaneSlot,
                     wind: Wind,
                     x: usize,
                     range: (i32, i32),
                     t: &mut TrafficReport| {
            for c in range.0..cols as i32 + range.1 {
                let src = ctx.column(wind, x, offset(j0, c));
                let dst = slot.column_start(c, nz);
                slot.data[dst..dst + nz].copy_from_slice(src);
            }
            let moved = ((cols as i32 + range.1 - range.0) as usize * nz) as u64;
            t.external_reads += moved;
            t.local_writes += moved;
        };

        for (w, wind) in Wind::ALL.into_iter().enumerate() {
            let [minus, zero, _] = &mut slots[w];
            fetch(
                minus,
                wind,
                slab.x_begin - 1,
                role_columns(wind, -1),
                &mut t,
            );
            fetch(zero, wind, slab.x_begin, FULL_PLANE, &mut t);
        }

        for i in slab.x_begin..slab.x_end {
            let last = i + 1 == slab.x_end;
            for (w, wind) in Wind::ALL.into_iter().enumerate() {
                let range = if last {
                    role_columns(wind, 1)
                } else {
                    FULL_PLANE
                };
                fetch(&mut slots[w][2], wind, i + 1, range, &mut t);
            }

            for jr in 0..cols {
                for k in 2..=nz {
                    let slots = &slots;
                    let mut at = |w: Wind, di: i32, dj: i32, dk: i32| {
                        t.local_reads += 1;
                        let slot = &slots[w.index()][(di + 1) as usize];
                        slot.data[slot.column_start(jr as i32 + dj, nz) + offset(k - 1, dk)]
                    };
                    let vals = point_sources(&mut at, &ctx.coeffs.level(k), k == nz);
                    out.store(&dims, i, j0 + jr, k, vals);
                    t.external_writes += 3;
                }
            }

            if !last {
                for (w, wind) in Wind::ALL.into_iter().enumerate() {
                    let [minus, zero, plus] = &mut slots[w];
                    shift(zero, minus, role_columns(wind, -1), cols, nz, &mut t);
                    shift(plus, zero, FULL_PLANE, cols, nz, &mut t);
                }
            }
        }
    }
    t
}

/// Local scratch copy of the batch columns in `range` from `src` to `dst`.
fn shift(
    src: &PlaneSlot,
    dst: &mut PlaneSlot,
    range: (i32, i32),
    cols: usize,
    nz: usize,
    t: &mut TrafficReport,
) {
    let first = range.0;
    let last = cols as i32 - 1 + range.1;
    let n = (last - first + 1) as usize * nz;
    let s = src.column_start(first, nz);
    let d = dst.column_start(first, nz);
    dst.data[d..d + n].copy_from_slice(&src.data[s..s + n]);
    t.local_reads += n as u64;
    t.local_writes += n as u64;
}

#[inline(always)]
fn offset(base: usize, delta: i32) -> usize {
    (base as isize + delta as isize) as usize
}

/// Element-wise agreement of two source sets over their interiors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub bitwise_equal: bool,
    pub max_abs_diff: f64,
    pub max_ulp_diff: u64,
}

pub fn compare_outputs(a: &SourceSet, b: &SourceSet) -> Result<Comparison> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!(
            "cannot compare {} with {}",
            a.dims(),
            b.dims()
        )));
    }
    let mut max_abs_diff = 0.0f64;
    let mut max_ulp_diff = 0u64;
    for (fa, fb) in a.fields().into_iter().zip(b.fields()) {
        for (x, y) in fa.interior().zip(fb.interior()) {
            max_ulp_diff = max_ulp_diff.max(ulp_distance(x, y));
            let d = (x - y).abs();
            if d > max_abs_diff || d.is_nan() {
                max_abs_diff = d;
            }
        }
    }
    Ok(Comparison {
        bitwise_equal: max_ulp_diff == 0,
        max_abs_diff,
        max_ulp_diff,
    })
}

/// Distance between two doubles in units of representable values. Distinct
/// bit patterns are always at least 1 apart, so `+0.0` and `-0.0` differ by 1.
pub fn ulp_distance(a: f64, b: f64) -> u64 {
    fn key(x: f64) -> i128 {
        let bits = x.to_bits();
        let magnitude = (bits & !(1 << 63)) as i128;
        if bits >> 63 == 1 {
            -1 - magnitude
        } else {
            magnitude
        }
    }
    (key(a) - key(b)).unsigned_abs() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{fill_fields, make_grid, GeneratorSpec};
    use crate::kernel::run_reference;

    fn random(nx: usize, ny: usize, nz: usize, seed: u64) -> FieldSet {
        fill_fields(
            make_grid(nx, ny, nz).unwrap(),
            GeneratorSpec::Random { seed },
        )
    }

    fn run(fields: &FieldSet, spec: ScheduleSpec) -> ScheduleRun {
        let coeffs = AdvectionCoefficients::uniform(fields.dims().nz(), 0.25);
        run_schedule(fields, &coeffs, &spec).unwrap()
    }

    #[test]
    fn partition_examples() {
        let d = make_grid(512, 4, 4).unwrap();
        assert_eq!(
            partition_domain(d, 1).unwrap(),
            vec![Slab {
                x_begin: 1,
                x_end: 513
            }]
        );
        let four = partition_domain(d, 4).unwrap();
        assert!(four.iter().all(|s| s.len() == 128));
        let d = make_grid(10, 4, 4).unwrap();
        let sizes: Vec<_> = partition_domain(d, 3)
            .unwrap()
            .iter()
            .map(Slab::len)
            .collect();
        assert_eq!(sizes, vec![4, 3, 3]);
        assert!(partition_domain(d, 11).is_err());
        assert!(partition_domain(d, 0).is_err());
    }

    #[test]
    fn partition_is_a_cover() {
        for nx in 1..40 {
            for engines in 1..=nx {
                let slabs = partition_extent(nx, engines).unwrap();
                assert_eq!(slabs[0].x_begin, 1);
                assert_eq!(slabs.last().unwrap().x_end, nx + 1);
                for w in slabs.windows(2) {
                    assert_eq!(w[0].x_end, w[1].x_begin);
                }
                let min = slabs.iter().map(Slab::len).min().unwrap();
                let max = slabs.iter().map(Slab::len).max().unwrap();
                assert!(max - min <= 1);
            }
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!(
            "X-Reordered".parse::<Variant>().unwrap(),
            Variant::XReordered
        );
        assert_eq!(
            "column_buffered".parse::<Variant>().unwrap(),
            Variant::ColumnBuffered
        );
        assert!("tiled".parse::<Variant>().is_err());
    }

    #[test]
    fn spec_validation() {
        let d = make_grid(4, 8, 4).unwrap();
        assert!(ScheduleSpec::new(Variant::YBatched)
            .with_y_batch(9)
            .validate(d)
            .is_err());
        assert!(ScheduleSpec::new(Variant::YBatched)
            .with_y_batch(8)
            .validate(d)
            .is_ok());
        assert!(ScheduleSpec::new(Variant::Reference)
            .with_y_batch(64)
            .validate(d)
            .is_ok());
        assert!(ScheduleSpec::new(Variant::Reference)
            .with_y_batch(0)
            .validate(d)
            .is_err());
        assert!(ScheduleSpec::new(Variant::Reference)
            .with_engines(5)
            .validate(d)
            .is_err());
        assert!(ScheduleSpec::new(Variant::Reference)
            .with_engines(0)
            .validate(d)
            .is_err());
    }

    #[test]
    fn every_variant_matches_reference() {
        let f = random(16, 16, 16, 42);
        let expected = run_reference(&f, &AdvectionCoefficients::uniform(16, 0.25)).unwrap();
        for variant in Variant::ALL {
            for engines in [1, 2, 3, 8] {
                for y_batch in [1, 5, 16] {
                    let spec = ScheduleSpec {
                        variant,
                        y_batch,
                        engines,
                    };
                    let r = run(&f, spec);
                    assert_eq!(r.sources.digest(), expected.digest(), "{spec:?}");
                }
            }
        }
    }

    #[test]
    fn reference_traffic_is_per_operand() {
        let f = random(3, 4, 5, 1);
        let t = run(&f, ScheduleSpec::new(Variant::Reference)).traffic;
        let columns = 3 * 4;
        assert_eq!(t.external_reads, columns * (3 * 54 + 45));
        assert_eq!(t.external_writes, 3 * columns * 4);
        assert_eq!(t.local_reads + t.local_writes + t.scratch_bytes_peak, 0);
    }

    #[test]
    fn column_buffered_traffic() {
        let (nx, ny, nz) = (3u64, 4u64, 5u64);
        let f = random(3, 4, 5, 1);
        let t = run(&f, ScheduleSpec::new(Variant::ColumnBuffered)).traffic;
        assert_eq!(t.external_reads, nx * ny * 17 * nz);
        assert_eq!(t.local_writes, nx * ny * 17 * nz);
        assert_eq!(t.local_reads, nx * ny * (3 * 54 + 45));
        assert_eq!(t.external_writes, 3 * nx * ny * (nz - 1));
        assert_eq!(t.scratch_bytes_peak, 17 * nz * 8);
    }

    #[test]
    fn ybatched_full_batch_matches_column_buffered_reads() {
        let f = random(5, 8, 6, 2);
        let yb = run(&f, ScheduleSpec::new(Variant::YBatched).with_y_batch(8)).traffic;
        let cb = run(&f, ScheduleSpec::new(Variant::ColumnBuffered)).traffic;
        assert_eq!(yb.external_reads, cb.external_reads);
        assert_eq!(yb.external_writes, cb.external_writes);
        assert_eq!(yb.local_reads, cb.local_reads);
    }

    #[test]
    fn xreordered_read_formula() {
        // Each batch of b columns over a slab of width s fetches s full planes
        // of (b + 2) columns per field plus two edge planes of 3b + 1 columns.
        let (nx, ny, nz) = (6usize, 8usize, 4usize);
        let f = random(nx, ny, nz, 3);
        for b in [1usize, 3, 8] {
            let t = run(&f, ScheduleSpec::new(Variant::XReordered).with_y_batch(b)).traffic;
            let mut expected = 0;
            for j0 in (1..=ny).step_by(b) {
                let cols = b.min(ny - j0 + 1);
                expected += (2 * (3 * cols + 1) + 3 * nx * (cols + 2)) * nz;
            }
            assert_eq!(t.external_reads, expected as u64, "b={b}");
            assert_eq!(t.scratch_bytes_peak, ((9 * b + 13) * nz * 8) as u64);
        }
    }

    #[test]
    fn xreordered_reads_less_than_ybatched() {
        for (nx, ny, nz) in [(2, 1, 2), (2, 3, 4), (7, 5, 3), (16, 16, 8)] {
            let f = random(nx, ny, nz, 4);
            for b in 1..=ny {
                let xr = run(&f, ScheduleSpec::new(Variant::XReordered).with_y_batch(b)).traffic;
                let yb = run(&f, ScheduleSpec::new(Variant::YBatched).with_y_batch(b)).traffic;
                assert!(
                    xr.external_reads < yb.external_reads,
                    "{nx}x{ny}x{nz} b={b}"
                );
            }
        }
    }

    #[test]
    fn scratch_within_budget() {
        let f = random(4, 12, 7, 5);
        let nz = 7u64;
        let budget = SCRATCH_ARRAYS_BUDGET as u64 * nz * 8;
        let cb = run(&f, ScheduleSpec::new(Variant::ColumnBuffered)).traffic;
        assert!(cb.scratch_bytes_peak <= budget);
        for b in 1..=12u64 {
            for v in [Variant::YBatched, Variant::XReordered] {
                let t = run(&f, ScheduleSpec::new(v).with_y_batch(b as usize)).traffic;
                assert!(t.scratch_bytes_peak <= budget * b, "{v} b={b}");
            }
        }
    }

    #[test]
    fn traffic_independent_of_threads_where_slab_agnostic() {
        let f = random(8, 6, 5, 6);
        for v in [
            Variant::Reference,
            Variant::ColumnBuffered,
            Variant::YBatched,
        ] {
            let one = run(&f, ScheduleSpec::new(v).with_y_batch(4)).traffic;
            for e in [2, 4, 8] {
                let many = run(&f, ScheduleSpec::new(v).with_y_batch(4).with_engines(e)).traffic;
                assert_eq!(one, many, "{v} engines={e}");
            }
        }
    }

    #[test]
    fn compare_identical_and_perturbed() {
        let f = random(3, 3, 3, 7);
        let a = run_reference(&f, &AdvectionCoefficients::uniform(3, 0.25)).unwrap();
        let c = compare_outputs(&a, &a).unwrap();
        assert!(c.bitwise_equal);
        assert_eq!(c.max_ulp_diff, 0);
        assert_eq!(c.max_abs_diff, 0.0);

        let mut b = a.clone();
        let x = b.sv.get(2, 2, 3);
        b.sv.set(2, 2, 3, f64::from_bits(x.to_bits() + 1));
        let c = compare_outputs(&a, &b).unwrap();
        assert!(!c.bitwise_equal);
        assert_eq!(c.max_ulp_diff, 1);
        assert!(c.max_abs_diff > 0.0);

        let other = SourceSet::zeros(make_grid(3, 3, 4).unwrap());
        assert!(compare_outputs(&a, &other).is_err());
    }

    #[test]
    fn ulp_distance_edges() {
        assert_eq!(ulp_distance(1.0, 1.0), 0);
        assert_eq!(ulp_distance(0.0, -0.0), 1);
        assert_eq!(ulp_distance(f64::from_bits(1), -f64::from_bits(1)), 3);
        assert_eq!(ulp_distance(1.0, f64::from_bits(1.0f64.to_bits() + 5)), 5);
    }

    #[test]
    fn role_columns_table() {
        assert_eq!(role_columns(Wind::U, -1), (0, 1));
        assert_eq!(role_columns(Wind::V, -1), (0, 0));
        assert_eq!(role_columns(Wind::W, -1), (0, 0));
        assert_eq!(role_columns(Wind::U, 1), (0, 0));
        assert_eq!(role_columns(Wind::V, 1), (-1, 0));
        assert_eq!(role_columns(Wind::W, 1), (0, 0));
        for w in Wind::ALL {
            assert_eq!(role_columns(w, 0), FULL_PLANE);
        }
    }
}
