use proptest::prelude::*;

use pwflow_core::model::engine_shares;
use pwflow_core::{
    calibrate, compare_outputs, fill_fields, kernel_time, make_grid, run_reference, run_schedule,
    AdvectionCoefficients, Extent, Field3D, FieldSet, GeneratorSpec, KernelLayout, MemoryModel,
    Observation, PipelineSpec, ScheduleSpec, SourceSet, Variant,
};

fn grid() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..=32, 1usize..=32, 2usize..=32)
}

fn coeffs(nz: usize, seed: u64) -> AdvectionCoefficients {
    let f = (seed % 1000) as f64 / 1000.0;
    AdvectionCoefficients::new(
        0.25 + f,
        0.5 - f / 2.0,
        (0..nz).map(|k| 0.2 + 0.03 * k as f64 + f).collect(),
        (0..nz).map(|k| 0.4 - 0.01 * k as f64).collect(),
    )
    .unwrap()
}

/// Copy of `f` with interior values moved by `(di, dj)` cells, periodically.
fn shifted(f: &Field3D, di: usize, dj: usize) -> Field3D {
    let d = f.dims();
    let mut out = Field3D::zeros(d);
    for i in 1..=d.nx() {
        for j in 1..=d.ny() {
            for k in 1..=d.nz() {
                let ti = (i - 1 + di) % d.nx() + 1;
                let tj = (j - 1 + dj) % d.ny() + 1;
                out.set(ti, tj, k, f.get(i, j, k));
            }
        }
    }
    out.wrap_halos();
    out
}

fn interior_bits(s: &SourceSet) -> Vec<u64> {
    s.fields()
        .into_iter()
        .flat_map(|f| f.interior().map(f64::to_bits))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

    #[test]
    fn every_schedule_matches_reference((nx, ny, nz) in grid(), seed in any::<u64>(), yb in 1usize..=32) {
        let d = make_grid(nx, ny, nz).unwrap();
        let fields = fill_fields(d, GeneratorSpec::Random { seed });
        let c = coeffs(nz, seed);
        let reference = run_reference(&fields, &c).unwrap();
        let y_batch = yb.min(ny);
        for variant in Variant::ALL {
            for engines in [1usize, 2, 4, 8].into_iter().filter(|&e| e <= nx) {
                let spec = ScheduleSpec::new(variant).with_y_batch(y_batch).with_engines(engines);
                let run = run_schedule(&fields, &c, &spec).unwrap();
                let cmp = compare_outputs(&run.sources, &reference).unwrap();
                prop_assert!(cmp.bitwise_equal, "{variant} x{engines} yb={y_batch} on {d}: {cmp:?}");
                prop_assert_eq!(run.sources.digest(), reference.digest());
            }
        }
    }

    #[test]
    fn bottom_level_is_zero((nx, ny, nz) in grid(), seed in any::<u64>()) {
        let d = make_grid(nx, ny, nz).unwrap();
        let fields = fill_fields(d, GeneratorSpec::Random { seed });
        let out = run_reference(&fields, &coeffs(nz, seed)).unwrap();
        for f in out.fields() {
            for i in 1..=nx {
                for j in 1..=ny {
                    prop_assert_eq!(f.get(i, j, 1).to_bits(), 0u64);
                }
            }
        }
    }

    #[test]
    fn periodic_shift_equivariance((nx, ny, nz) in grid(), seed in any::<u64>(), di in 0usize..32, dj in 0usize..32) {
        let d = make_grid(nx, ny, nz).unwrap();
        let fields = fill_fields(d, GeneratorSpec::Random { seed });
        let c = coeffs(nz, seed);
        let out = run_reference(&fields, &c).unwrap();
        let (di, dj) = (di % nx, dj % ny);
        let moved = FieldSet::new(
            shifted(&fields.u, di, dj),
            shifted(&fields.v, di, dj),
            shifted(&fields.w, di, dj),
        ).unwrap();
        let moved_out = run_reference(&moved, &c).unwrap();
        let expect = SourceSet {
            su: shifted(&out.su, di, dj),
            sv: shifted(&out.sv, di, dj),
            sw: shifted(&out.sw, di, dj),
        };
        prop_assert_eq!(interior_bits(&moved_out), interior_bits(&expect));
    }

    #[test]
    fn uniform_fields_cancel_below_top(
        (nx, ny, nz) in grid(),
        a in -10.0f64..10.0, b in -10.0f64..10.0, cw in -10.0f64..10.0,
        tz in prop::collection::vec(0.01f64..2.0, 32),
        tcx in -1.0f64..1.0, tcy in -1.0f64..1.0,
    ) {
        let d = make_grid(nx, ny, nz).unwrap();
        let fields = fill_fields(d, GeneratorSpec::Uniform { u: a, v: b, w: cw });
        let levels = tz[..nz].to_vec();
        let c = AdvectionCoefficients::new(tcx, tcy, levels.clone(), levels).unwrap();
        let out = run_reference(&fields, &c).unwrap();
        let t = c.tzc1[nz - 1];
        let closed = [2.0 * t * a * cw, 2.0 * t * b * cw, 2.0 * t * cw * cw];
        for i in 1..=nx {
            for j in 1..=ny {
                for k in 2..nz {
                    for f in out.fields() {
                        prop_assert_eq!(f.get(i, j, k), 0.0);
                    }
                }
                for (f, want) in out.fields().into_iter().zip(closed) {
                    let got = f.get(i, j, nz);
                    prop_assert!(
                        pwflow_core::schedule::ulp_distance(got, want) <= 2,
                        "top level {got:e} vs closed form {want:e}"
                    );
                }
            }
        }
    }

    #[test]
    fn xreordered_reads_less_than_ybatched((nx, ny, nz) in (2usize..=32, 1usize..=32, 2usize..=32), yb in 1usize..=32, engines in 1usize..=8) {
        let d = make_grid(nx, ny, nz).unwrap();
        let fields = fill_fields(d, GeneratorSpec::Random { seed: 1 });
        let c = coeffs(nz, 1);
        let engines = engines.min(nx / 2).max(1);
        let spec = |v| ScheduleSpec::new(v).with_y_batch(yb.min(ny)).with_engines(engines);
        let x = run_schedule(&fields, &c, &spec(Variant::XReordered)).unwrap().traffic;
        let y = run_schedule(&fields, &c, &spec(Variant::YBatched)).unwrap().traffic;
        prop_assert!(x.external_reads < y.external_reads, "{x:?} vs {y:?}");
    }

    #[test]
    fn traffic_is_deterministic((nx, ny, nz) in grid(), seed in any::<u64>(), yb in 1usize..=32) {
        let d = make_grid(nx, ny, nz).unwrap();
        let fields = fill_fields(d, GeneratorSpec::Random { seed });
        let other = fill_fields(d, GeneratorSpec::Random { seed: seed ^ 0xffff });
        let c = coeffs(nz, seed);
        for variant in Variant::ALL {
            for engines in [1usize, 2, 4, 8].into_iter().filter(|&e| e <= nx) {
                let spec = ScheduleSpec::new(variant).with_y_batch(yb.min(ny)).with_engines(engines);
                let first = run_schedule(&fields, &c, &spec).unwrap().traffic;
                for _ in 0..2 {
                    prop_assert_eq!(run_schedule(&fields, &c, &spec).unwrap().traffic, first);
                }
                prop_assert_eq!(run_schedule(&other, &c, &spec).unwrap().traffic, first);
                prop_assert!(first.external_writes >= 3 * (nx * ny * (nz - 1)) as u64);
            }
        }
    }

    #[test]
    fn calibration_round_trip(
        bw1 in 1e8f64..1e11,
        contention in 0.5f64..=1.0,
        e1 in 1u64..=2, e2 in 3u64..=16, e3 in 1u64..=16,
        nx in 64u64..=2048, ny in 64u64..=2048, nz in prop::sample::select(vec![16u64, 32, 64]),
    ) {
        let spec = PipelineSpec::default();
        let layout = KernelLayout::default();
        let truth = MemoryModel { eff_bandwidth_1: bw1, contention, ..MemoryModel::default() };
        let extent = Extent::new(nx, ny, nz);
        let obs: Vec<Observation> = [e1, e2, e3]
            .iter()
            .map(|&engines| Observation {
                extent,
                engines,
                seconds: kernel_time(&extent, &spec, &truth, &layout, engines).unwrap(),
            })
            .collect();
        let fit = calibrate(&obs, &spec, &MemoryModel::default(), &layout).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        prop_assert!(rel(fit.memory.eff_bandwidth_1, bw1) < 1e-6, "{} vs {bw1}", fit.memory.eff_bandwidth_1);
        prop_assert!(rel(fit.memory.contention, contention) < 1e-6, "{} vs {contention}", fit.memory.contention);
        prop_assert!(fit.relative_residuals.iter().all(|r| r.abs() < 1e-9));
    }

    #[test]
    fn kernel_time_monotone_in_cells(nx in 12u64..=1024, ny in 1u64..=1024, engines in 1u64..=12, grow in 1u64..=64) {
        let spec = PipelineSpec::default();
        let mem = MemoryModel::default();
        let layout = KernelLayout::default();
        let small = kernel_time(&Extent::new(nx, ny, 64), &spec, &mem, &layout, engines).unwrap();
        let wider = kernel_time(&Extent::new(nx + grow, ny, 64), &spec, &mem, &layout, engines).unwrap();
        let deeper = kernel_time(&Extent::new(nx, ny, 64 + grow), &spec, &mem, &layout, engines).unwrap();
        prop_assert!(wider >= small && deeper >= small);
    }
}

fn engine_times(extent: &Extent, mem: &MemoryModel) -> Vec<f64> {
    (1..=12)
        .map(|e| {
            kernel_time(
                extent,
                &PipelineSpec::default(),
                mem,
                &KernelLayout::default(),
                e,
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn kernel_time_non_increasing_in_engines_without_contention() {
    let mem = MemoryModel {
        contention: 1.0,
        ..MemoryModel::default()
    };
    for nx in [12, 13, 100, 512, 1012, 2047] {
        let times = engine_times(&Extent::new(nx, 256, 64), &mem);
        assert!(times.windows(2).all(|w| w[1] <= w[0]), "nx={nx}: {times:?}");
    }
}

#[test]
fn kernel_time_non_increasing_in_engines_on_published_grids() {
    let mem = MemoryModel::default();
    for extent in [
        Extent::new(512, 512, 64),
        Extent::new(1012, 1024, 64),
        Extent::from_cells(268_300_000),
    ] {
        let times = engine_times(&extent, &mem);
        assert!(
            times.windows(2).all(|w| w[1] <= w[0]),
            "{extent}: {times:?}"
        );
    }
}

/// Going from 10 to 11 engines on nx = 100 leaves the largest slab at 10
/// planes but puts a sixth engine on the busiest controller.
#[test]
fn contention_can_outweigh_a_slab_that_does_not_shrink() {
    let times = engine_times(&Extent::new(100, 100, 64), &MemoryModel::default());
    assert!(times[10] > times[9]);
}

#[test]
fn engine_zero_is_critical() {
    let e = Extent::new(1013, 1024, 64);
    for engines in 1..=12 {
        let shares = engine_shares(&e, engines, 2).unwrap();
        let first = shares[0];
        assert!(shares.iter().all(|s| s.extent.nx <= first.extent.nx
            && s.engines_on_controller <= first.engines_on_controller));
    }
}
