use std::collections::BTreeMap;

use proptest::prelude::*;

use gridfdi_core::grid_model::{load_case, BusId, NetworkModel};
use gridfdi_core::ingest::{
    impute_curve_fit, map_series, read_hourly_csv, resample_consecutive, round_robin_mapping, synth_load, synth_shape,
    table_from_series, LoadSeries, SampleFlag,
};

fn desk3() -> NetworkModel {
    load_case(concat!(env!("CARGO_MANIFEST_DIR"), "/cases/desk3.json")).unwrap()
}

fn series(values: Vec<f64>, missing: &[usize]) -> LoadSeries {
    let mut s = LoadSeries {
        bus: BusId(1),
        timestamps: (0..values.len() as i64).map(|i| i * 3600).collect(),
        flags: vec![SampleFlag::Measured; values.len()],
        values,
    };
    for &i in missing {
        s.values[i] = f64::NAN;
        s.flags[i] = SampleFlag::Missing;
    }
    s
}

proptest! {
    #[test]
    fn cubic_gaps_are_filled_exactly(
        c in prop::array::uniform4(-1.0f64..1.0),
        len in 12usize..40,
        gap_start in 4usize..8,
        gap_len in 1usize..4,
    ) {
        // Scale so the cubic stays well above zero on the sample range.
        let f = |i: usize| {
            let x = i as f64 / len as f64;
            5.0 + c[0] + c[1] * x + c[2] * x * x + c[3] * x * x * x
        };
        let missing: Vec<usize> = (gap_start..gap_start + gap_len).collect();
        let s = series((0..len).map(f).collect(), &missing);
        let filled = impute_curve_fit(&s).unwrap();
        for &i in &missing {
            prop_assert!((filled.values[i] - f(i)).abs() <= 1e-6, "{} vs {}", filled.values[i], f(i));
            prop_assert_eq!(filled.flags[i], SampleFlag::Imputed);
        }
    }

    #[test]
    fn observed_samples_are_never_touched(
        values in prop::collection::vec(0.1f64..3.0, 16..60),
        holes in prop::collection::btree_set(4usize..12, 0..4),
    ) {
        let missing: Vec<usize> = holes.into_iter().collect();
        let s = series(values.clone(), &missing);
        let filled = impute_curve_fit(&s).unwrap();
        prop_assert!(!filled.has_gaps());
        for (i, v) in values.iter().enumerate() {
            if !missing.contains(&i) {
                prop_assert_eq!(filled.values[i], *v);
                prop_assert_eq!(filled.flags[i], SampleFlag::Measured);
            } else {
                prop_assert!(filled.values[i] >= 0.0);
            }
        }
    }

    #[test]
    fn resampling_conserves_energy(values in prop::collection::vec(0.0f64..3.0, 1..50), p in 1usize..120) {
        let s = series(values.clone(), &[]);
        let out = resample_consecutive(&s, 60, p);
        prop_assert_eq!(out.len(), values.len() * p);
        let total: f64 = out.iter().sum::<f64>() / p as f64;
        let want: f64 = values.iter().sum();
        prop_assert!((total - want).abs() <= 1e-9 * want.max(1.0));
    }

    #[test]
    fn synthetic_noise_has_requested_spread(sigma in 0.001f64..0.05, seed in any::<u64>()) {
        let n = 4000;
        let s = synth_load(2.0, 0.2, sigma, n, seed);
        let resid: Vec<f64> = (0..n).map(|i| s.values[i] - synth_shape(2.0, 0.2, i)).collect();
        let mean = resid.iter().sum::<f64>() / n as f64;
        let sd = (resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        // Standard error of the sample sd is about sigma / sqrt(2n) ~ 1.1%.
        prop_assert!((sd / sigma - 1.0).abs() < 0.06, "sd {} sigma {}", sd, sigma);
        prop_assert!(mean.abs() < 5.0 * sigma / (n as f64).sqrt());
        prop_assert_eq!(s, synth_load(2.0, 0.2, sigma, n, seed));
    }
}

#[test]
fn hourly_csv_converts_to_per_unit_and_marks_gaps() {
    let net = desk3();
    let text = "timestamp,bus_id,load_mw\n\
        2014-01-01T00:00:00Z,2,50\n\
        2014-01-01T01:00:00Z,2,60\n\
        2014-01-01T03:00:00Z,2,80\n\
        2014-01-01T00:00:00Z,3,10\n";
    let got = read_hourly_csv(text.as_bytes(), &net).unwrap();
    let s = &got[&BusId(2)];
    assert_eq!(s.len(), 4);
    assert_eq!(s.flags[2], SampleFlag::Missing);
    assert!((s.values[1] - 60.0 / net.base_mva).abs() < 1e-15);
    assert_eq!(s.timestamps[3] - s.timestamps[0], 3 * 3600);
    assert_eq!(got[&BusId(3)].len(), 1);
}

#[test]
fn mapping_rescales_to_target_base_load() {
    let net = desk3();
    let src = series(vec![1.0, 2.0, 3.0], &[]);
    let sources = BTreeMap::from([(BusId(1), src)]);
    let mapping = round_robin_mapping(&net, &[BusId(1)]);
    let loaded: Vec<BusId> = net.buses().iter().filter(|b| b.p_load_base > 0.0).map(|b| b.id).collect();
    assert_eq!(mapping.keys().copied().collect::<Vec<_>>(), loaded);
    let mapped = map_series(&net, &sources, &mapping, true);
    for (bus, s) in &mapped {
        let mean = s.values.iter().sum::<f64>() / 3.0;
        assert!((mean - net.buses()[bus.index()].p_load_base).abs() < 1e-12);
        // Shape is kept.
        assert!((s.values[2] / s.values[0] - 3.0).abs() < 1e-12);
    }
    let table = table_from_series(&net, &mapped, 60);
    assert_eq!(table.n_timeslots(), 180);
    for bus in net.bus_ids() {
        if !mapped.contains_key(&bus) {
            assert!(table.bus_series(bus).iter().all(|&v| v == 0.0));
        }
    }
}
