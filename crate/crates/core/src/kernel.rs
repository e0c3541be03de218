//! The Piacsek-Williams advection stencil.
//!
//! Each source term is written once, as an expression generic over [`Arith`]
//! and over an operand loader `at(wind, di, dj, dk)` that returns the value
//! of `wind` at `(i + di, j + dj, k + dk)`. Every execution schedule calls
//! these same expressions with `f64` and a loader of its own, which is what
//! makes all schedules bit-identical. Instantiating them with [`OpCount`]
//! instead walks the expression tree and counts operators.
//!
//! The u expression is the classic three-term form. The v and w expressions
//! are its staggered-grid analogs; they are written out in
//! `docs/model-notes.md`. Evaluation order is always the X term, then `+` the
//! Y term, then `+` the Z term, with inner parenthesisation as written.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FieldSet, GridDims, SourceSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Wind {
    U,
    V,
    W,
}

impl Wind {
    pub const ALL: [Wind; 3] = [Wind::U, Wind::V, Wind::W];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Scalar arithmetic the stencil expressions are generic over.
pub trait Arith: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {}

impl<T> Arith for T where T: Copy + Add<Output = T> + Sub<Output = T> + Mul<Output = T> {}

/// Coefficients in effect at one level `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelCoeffs<T> {
    pub tcx: T,
    pub tcy: T,
    pub tzc1: T,
    pub tzc2: T,
}

pub fn su_expr<T: Arith>(
    at: &mut impl FnMut(Wind, i32, i32, i32) -> T,
    c: &LevelCoeffs<T>,
    top: bool,
) -> T {
    use Wind::*;
    let mut s = c.tcx
        * (at(U, -1, 0, 0) * (at(U, 0, 0, 0) + at(U, -1, 0, 0))
            - at(U, 1, 0, 0) * (at(U, 0, 0, 0) + at(U, 1, 0, 0)));
    s = s + c.tcy
        * (at(U, 0, -1, 0) * (at(V, 0, -1, 0) + at(V, 1, -1, 0))
            - at(U, 0, 1, 0) * (at(V, 0, 0, 0) + at(V, 1, 0, 0)));
    if !top {
        s = s + c.tzc1 * at(U, 0, 0, -1) * (at(W, 0, 0, -1) + at(W, 1, 0, -1))
            - c.tzc2 * at(U, 0, 0, 1) * (at(W, 0, 0, 0) + at(W, 1, 0, 0));
    } else {
        s = s + c.tzc1 * at(U, 0, 0, -1) * (at(W, 0, 0, -1) + at(W, 1, 0, -1));
    }
    s
}

pub fn sv_expr<T: Arith>(
    at: &mut impl FnMut(Wind, i32, i32, i32) -> T,
    c: &LevelCoeffs<T>,
    top: bool,
) -> T {
    use Wind::*;
    let mut s = c.tcx
        * (at(V, -1, 0, 0) * (at(U, -1, 0, 0) + at(U, -1, 1, 0))
            - at(V, 1, 0, 0) * (at(U, 0, 0, 0) + at(U, 0, 1, 0)));
    s = s + c.tcy
        * (at(V, 0, -1, 0) * (at(V, 0, 0, 0) + at(V, 0, -1, 0))
            - at(V, 0, 1, 0) * (at(V, 0, 0, 0) + at(V, 0, 1, 0)));
    if !top {
        s = s + c.tzc1 * at(V, 0, 0, -1) * (at(W, 0, 0, -1) + at(W, 0, 1, -1))
            - c.tzc2 * at(V, 0, 0, 1) * (at(W, 0, 0, 0) + at(W, 0, 1, 0));
    } else {
        s = s + c.tzc1 * at(V, 0, 0, -1) * (at(W, 0, 0, -1) + at(W, 0, 1, -1));
    }
    s
}

/// w is staggered vertically, so its cross terms pair level `k` with `k + 1`.
/// At the top level there is no `k + 1` and the pair collapses onto `k`.
pub fn sw_expr<T: Arith>(
    at: &mut impl FnMut(Wind, i32, i32, i32) -> T,
    c: &LevelCoeffs<T>,
    top: bool,
) -> T {
    use Wind::*;
    let up = if top { 0 } else { 1 };
    let mut s = c.tcx
        * (at(W, -1, 0, 0) * (at(U, -1, 0, 0) + at(U, -1, 0, up))
            - at(W, 1, 0, 0) * (at(U, 0, 0, 0) + at(U, 0, 0, up)));
    s = s + c.tcy
        * (at(W, 0, -1, 0) * (at(V, 0, -1, 0) + at(V, 0, -1, up))
            - at(W, 0, 1, 0) * (at(V, 0, 0, 0) + at(V, 0, 0, up)));
    if !top {
        s = s + c.tzc1 * at(W, 0, 0, -1) * (at(W, 0, 0, 0) + at(W, 0, 0, -1))
            - c.tzc2 * at(W, 0, 0, 1) * (at(W, 0, 0, 0) + at(W, 0, 0, 1));
    } else {
        s = s + c.tzc1 * at(W, 0, 0, -1) * (at(W, 0, 0, 0) + at(W, 0, 0, -1));
    }
    s
}

/// Evaluates all three source terms for one point, su then sv then sw.
#[inline]
pub fn point_sources<T: Arith>(
    at: &mut impl FnMut(Wind, i32, i32, i32) -> T,
    c: &LevelCoeffs<T>,
    top: bool,
) -> [T; 3] {
    [
        su_expr(at, c, top),
        sv_expr(at, c, top),
        sw_expr(at, c, top),
    ]
}

/// Every `(wind, di, dj)` column the three expressions touch, in a fixed
/// order. Column-buffered schedules stage exactly these.
pub const STENCIL_COLUMNS: [(Wind, i32, i32); 17] = [
    (Wind::U, -1, 0),
    (Wind::U, -1, 1),
    (Wind::U, 0, -1),
    (Wind::U, 0, 0),
    (Wind::U, 0, 1),
    (Wind::U, 1, 0),
    (Wind::V, -1, 0),
    (Wind::V, 0, -1),
    (Wind::V, 0, 0),
    (Wind::V, 0, 1),
    (Wind::V, 1, -1),
    (Wind::V, 1, 0),
    (Wind::W, -1, 0),
    (Wind::W, 0, -1),
    (Wind::W, 0, 0),
    (Wind::W, 0, 1),
    (Wind::W, 1, 0),
];

/// Position of `(wind, di, dj)` in [`STENCIL_COLUMNS`].
#[inline]
pub fn stencil_column_slot(wind: Wind, di: i32, dj: i32) -> usize {
    // [wind][di + 1][dj + 1]
    const NONE: u8 = u8::MAX;
    const TABLE: [[[u8; 3]; 3]; 3] = [
        [[NONE, 0, 1], [2, 3, 4], [NONE, 5, NONE]],
        [[NONE, 6, NONE], [7, 8, 9], [10, 11, NONE]],
        [[NONE, 12, NONE], [13, 14, 15], [NONE, 16, NONE]],
    ];
    let slot = TABLE[wind.index()][(di + 1) as usize][(dj + 1) as usize];
    debug_assert!(
        slot != NONE,
        "({wind:?}, {di}, {dj}) is not a stencil column"
    );
    slot as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdvectionCoefficients {
    pub tcx: f64,
    pub tcy: f64,
    /// Per level, index 0 is level `k = 1`.
    pub tzc1: Vec<f64>,
    pub tzc2: Vec<f64>,
}

impl AdvectionCoefficients {
    pub fn new(tcx: f64, tcy: f64, tzc1: Vec<f64>, tzc2: Vec<f64>) -> Result<Self> {
        let c = Self {
            tcx,
            tcy,
            tzc1,
            tzc2,
        };
        c.validate()?;
        Ok(c)
    }

    /// Every coefficient set to `value` (0.25 is the test default).
    pub fn uniform(nz: usize, value: f64) -> Self {
        Self {
            tcx: value,
            tcy: value,
            tzc1: vec![value; nz],
            tzc2: vec![value; nz],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tzc1.len() != self.tzc2.len() {
            return Err(Error::DimensionMismatch(format!(
                "tzc1 has {} levels but tzc2 has {}",
                self.tzc1.len(),
                self.tzc2.len()
            )));
        }
        let all = [self.tcx, self.tcy]
            .into_iter()
            .chain(self.tzc1.iter().copied())
            .chain(self.tzc2.iter().copied());
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter(
                "advection coefficients must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        self.tzc1.len()
    }

    pub fn check_dims(&self, dims: GridDims) -> Result<()> {
        if self.levels() != dims.nz() {
            return Err(Error::DimensionMismatch(format!(
                "coefficients cover {} levels but the grid {dims} has {}",
                self.levels(),
                dims.nz()
            )));
        }
        Ok(())
    }

    /// Coefficients at 1-based level `k`.
    #[inline]
    pub fn level(&self, k: usize) -> LevelCoeffs<f64> {
        LevelCoeffs {
            tcx: self.tcx,
            tcy: self.tcy,
            tzc1: self.tzc1[k - 1],
            tzc2: self.tzc2[k - 1],
        }
    }
}

/// Nominal floating point cost per cell used for GFLOP/s accounting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlopProfile {
    pub adds_per_cell: u64,
    pub muls_per_cell: u64,
}

impl FlopProfile {
    pub const fn new(adds_per_cell: u64, muls_per_cell: u64) -> Self {
        Self {
            adds_per_cell,
            muls_per_cell,
        }
    }

    #[inline]
    pub const fn total_per_cell(&self) -> u64 {
        self.adds_per_cell + self.muls_per_cell
    }
}

impl Default for FlopProfile {
    /// 21 additions/subtractions and 32 multiplications, 53 in total.
    fn default() -> Self {
        Self::new(21, 32)
    }
}

/// Nominal operation count over all `nx * ny * nz` cells.
pub fn flops(dims: GridDims, profile: FlopProfile) -> u64 {
    flops_for_cells(dims.interior_cells(), profile)
}

pub fn flops_for_cells(cells: u64, profile: FlopProfile) -> u64 {
    cells * profile.total_per_cell()
}

/// Operator tally produced by evaluating an expression over [`OpCount`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCount {
    pub adds: u64,
    pub muls: u64,
}

impl OpCount {
    pub const LEAF: OpCount = OpCount { adds: 0, muls: 0 };

    pub fn total(&self) -> u64 {
        self.adds + self.muls
    }
}

impl Add for OpCount {
    type Output = OpCount;
    fn add(self, rhs: OpCount) -> OpCount {
        OpCount {
            adds: self.adds + rhs.adds + 1,
            muls: self.muls + rhs.muls,
        }
    }
}

// Subtractions are tallied with additions.
impl Sub for OpCount {
    type Output = OpCount;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn sub(self, rhs: OpCount) -> OpCount {
        self + rhs
    }
}

impl Mul for OpCount {
    type Output = OpCount;
    fn mul(self, rhs: OpCount) -> OpCount {
        OpCount {
            adds: self.adds + rhs.adds,
            muls: self.muls + rhs.muls + 1,
        }
    }
}

/// Census of the u expression below the top level, as implemented.
pub const SU_INTERIOR_CENSUS: OpCount = OpCount { adds: 11, muls: 10 };

/// Operator counts per source term `[su, sv, sw]`.
pub fn expression_census(top: bool) -> [OpCount; 3] {
    let c = LevelCoeffs {
        tcx: OpCount::LEAF,
        tcy: OpCount::LEAF,
        tzc1: OpCount::LEAF,
        tzc2: OpCount::LEAF,
    };
    point_sources(&mut |_, _, _, _| OpCount::LEAF, &c, top)
}

/// Operand loads performed by one evaluation of each expression, `[su, sv, sw]`.
pub fn expression_loads(top: bool) -> [u64; 3] {
    let c = LevelCoeffs {
        tcx: 0.0,
        tcy: 0.0,
        tzc1: 0.0,
        tzc2: 0.0,
    };
    let mut out = [0u64; 3];
    for (n, slot) in out.iter_mut().enumerate() {
        let mut loads = 0u64;
        let mut at = |_, _, _, _| {
            loads += 1;
            0.0f64
        };
        match n {
            0 => su_expr(&mut at, &c, top),
            1 => sv_expr(&mut at, &c, top),
            _ => sw_expr(&mut at, &c, top),
        };
        *slot = loads;
    }
    out
}

/// Loader reading straight from the full halo-padded arrays.
#[inline]
fn direct_loader<'a>(
    fields: &'a FieldSet,
    i: usize,
    j: usize,
    k: usize,
) -> impl FnMut(Wind, i32, i32, i32) -> f64 + 'a {
    let dims = fields.dims();
    let arrays = [
        fields.u.as_slice(),
        fields.v.as_slice(),
        fields.w.as_slice(),
    ];
    move |wind, di, dj, dk| {
        let idx = dims.linear_index(
            (i as i64 + di as i64) as usize,
            (j as i64 + dj as i64) as usize,
            (k as i64 + dk as i64) as usize,
        );
        arrays[wind.index()][idx]
    }
}

fn check_point(dims: GridDims, i: usize, j: usize, k: usize) {
    debug_assert!((1..=dims.nx()).contains(&i), "i={i} outside the interior");
    debug_assert!((1..=dims.ny()).contains(&j), "j={j} outside the interior");
    debug_assert!((2..=dims.nz()).contains(&k), "k={k} outside 2..=nz");
}

/// su contribution at interior point `(i, j, k)`, `k >= 2`.
pub fn advect_point_u(
    fields: &FieldSet,
    coeffs: &AdvectionCoefficients,
    i: usize,
    j: usize,
    k: usize,
) -> f64 {
    let dims = fields.dims();
    check_point(dims, i, j, k);
    su_expr(
        &mut direct_loader(fields, i, j, k),
        &coeffs.level(k),
        k == dims.nz(),
    )
}

pub fn advect_point_v(
    fields: &FieldSet,
    coeffs: &AdvectionCoefficients,
    i: usize,
    j: usize,
    k: usize,
) -> f64 {
    let dims = fields.dims();
    check_point(dims, i, j, k);
    sv_expr(
        &mut direct_loader(fields, i, j, k),
        &coeffs.level(k),
        k == dims.nz(),
    )
}

pub fn advect_point_w(
    fields: &FieldSet,
    coeffs: &AdvectionCoefficients,
    i: usize,
    j: usize,
    k: usize,
) -> f64 {
    let dims = fields.dims();
    check_point(dims, i, j, k);
    sw_expr(
        &mut direct_loader(fields, i, j, k),
        &coeffs.level(k),
        k == dims.nz(),
    )
}

/// Whole-grid sweep, `i` outermost and `k = 2..=nz` innermost. Level 1 and
/// the halos of the result stay zero.
pub fn run_reference(fields: &FieldSet, coeffs: &AdvectionCoefficients) -> Result<SourceSet> {
    let dims = fields.dims();
    coeffs.validate()?;
    coeffs.check_dims(dims)?;
    let mut out = SourceSet::zeros(dims);
    for i in 1..=dims.nx() {
        for j in 1..=dims.ny() {
            for k in 2..=dims.nz() {
                let [su, sv, sw] = point_sources(
                    &mut direct_loader(fields, i, j, k),
                    &coeffs.level(k),
                    k == dims.nz(),
                );
                out.su.set(i, j, k, su);
                out.sv.set(i, j, k, sv);
                out.sw.set(i, j, k, sw);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::grid::{fill_fields, make_grid, GeneratorSpec};

    fn uniform(nx: usize, ny: usize, nz: usize, a: f64, b: f64, c: f64) -> FieldSet {
        fill_fields(
            make_grid(nx, ny, nz).unwrap(),
            GeneratorSpec::Uniform { u: a, v: b, w: c },
        )
    }

    #[test]
    fn su_census_matches_operator_count() {
        let [su, sv, sw] = expression_census(false);
        assert_eq!(su, SU_INTERIOR_CENSUS);
        assert_eq!(su, OpCount { adds: 11, muls: 10 });
        assert_eq!(sv, su);
        assert_eq!(sw, su);
        let [su_top, _, _] = expression_census(true);
        assert_eq!(su_top, OpCount { adds: 9, muls: 8 });
    }

    #[test]
    fn load_counts() {
        assert_eq!(expression_loads(false), [18, 18, 18]);
        assert_eq!(expression_loads(true), [15, 15, 15]);
    }

    #[test]
    fn stencil_columns_match_expressions() {
        let mut touched = BTreeSet::new();
        let c = LevelCoeffs {
            tcx: 1.0,
            tcy: 1.0,
            tzc1: 1.0,
            tzc2: 1.0,
        };
        for top in [false, true] {
            point_sources(
                &mut |w, di, dj, _| {
                    touched.insert((w, di, dj));
                    0.0
                },
                &c,
                top,
            );
        }
        let table: BTreeSet<_> = STENCIL_COLUMNS.iter().copied().collect();
        assert_eq!(touched, table);
        for (slot, &(w, di, dj)) in STENCIL_COLUMNS.iter().enumerate() {
            assert_eq!(stencil_column_slot(w, di, dj), slot);
        }
    }

    #[test]
    fn vertical_offsets_stay_in_column() {
        let c = LevelCoeffs {
            tcx: 1.0,
            tcy: 1.0,
            tzc1: 1.0,
            tzc2: 1.0,
        };
        point_sources(
            &mut |_, _, _, dk| {
                assert!((-1..=1).contains(&dk));
                0.0
            },
            &c,
            false,
        );
        point_sources(
            &mut |_, _, _, dk| {
                assert!(dk <= 0, "top level must not read above the column");
                0.0
            },
            &c,
            true,
        );
    }

    #[test]
    fn zero_fields_give_zero() {
        let f = uniform(3, 3, 4, 0.0, 0.0, 0.0);
        let c = AdvectionCoefficients::uniform(4, 0.25);
        for k in 2..=4 {
            assert_eq!(advect_point_u(&f, &c, 2, 2, k), 0.0);
            assert_eq!(advect_point_v(&f, &c, 2, 2, k), 0.0);
            assert_eq!(advect_point_w(&f, &c, 2, 2, k), 0.0);
        }
    }

    #[test]
    fn uniform_fields_cancel_below_top() {
        let f = uniform(3, 4, 5, 1.3, -0.7, 2.1);
        let c = AdvectionCoefficients::uniform(5, 0.25);
        for k in 2..5 {
            assert_eq!(advect_point_u(&f, &c, 1, 1, k), 0.0);
            assert_eq!(advect_point_v(&f, &c, 3, 2, k), 0.0);
            assert_eq!(advect_point_w(&f, &c, 2, 4, k), 0.0);
        }
    }

    #[test]
    fn top_level_unit_fields() {
        let nz = 4;
        let f = uniform(2, 2, nz, 1.0, 1.0, 1.0);
        let mut c = AdvectionCoefficients::uniform(nz, 0.25);
        c.tzc1[nz - 1] = 0.25;
        assert_eq!(advect_point_u(&f, &c, 1, 1, nz), 0.5);
        assert_eq!(advect_point_v(&f, &c, 1, 1, nz), 0.5);
        assert_eq!(advect_point_w(&f, &c, 1, 1, nz), 0.5);
    }

    #[test]
    fn reference_bottom_level_is_zero() {
        let f = fill_fields(
            make_grid(4, 3, 5).unwrap(),
            GeneratorSpec::Random { seed: 3 },
        );
        let out = run_reference(&f, &AdvectionCoefficients::uniform(5, 0.25)).unwrap();
        for s in out.fields() {
            for i in 1..=4 {
                for j in 1..=3 {
                    assert_eq!(s.get(i, j, 1).to_bits(), 0);
                }
            }
        }
    }

    #[test]
    fn reference_uniform_nonzero_only_at_top() {
        let nz = 6;
        let f = uniform(3, 3, nz, 0.5, 0.75, -1.25);
        let out = run_reference(&f, &AdvectionCoefficients::uniform(nz, 0.25)).unwrap();
        for i in 1..=3 {
            for j in 1..=3 {
                for k in 1..nz {
                    assert_eq!(out.su.get(i, j, k), 0.0);
                    assert_eq!(out.sv.get(i, j, k), 0.0);
                    assert_eq!(out.sw.get(i, j, k), 0.0);
                }
                assert_ne!(out.su.get(i, j, nz), 0.0);
            }
        }
    }

    #[test]
    fn reference_rejects_coefficient_mismatch() {
        let f = uniform(2, 2, 4, 0.0, 0.0, 0.0);
        assert!(run_reference(&f, &AdvectionCoefficients::uniform(5, 0.25)).is_err());
        let bad = AdvectionCoefficients {
            tcx: 0.1,
            tcy: 0.1,
            tzc1: vec![0.0; 4],
            tzc2: vec![0.0; 3],
        };
        assert!(run_reference(&f, &bad).is_err());
    }

    #[test]
    fn non_finite_coefficients_rejected() {
        assert!(AdvectionCoefficients::new(f64::NAN, 0.0, vec![0.0; 2], vec![0.0; 2]).is_err());
    }

    #[test]
    fn flop_accounting() {
        assert_eq!(
            flops(make_grid(1, 1, 2).unwrap(), FlopProfile::default()) / 2,
            53
        );
        assert_eq!(flops_for_cells(1, FlopProfile::default()), 53);
        assert_eq!(flops_for_cells(1_000, FlopProfile::new(0, 0)), 0);
        let f = flops_for_cells(268_300_000, FlopProfile::default()) as f64;
        assert!((f - 1.422e10).abs() / 1.422e10 < 1e-3);
        let p = FlopProfile::default();
        assert_eq!(p.total_per_cell(), p.adds_per_cell + p.muls_per_cell);
    }
}
