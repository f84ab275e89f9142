use lesson_core::population::{sample_population, Placement, PopulationConfig};
use lesson_core::radio::{
    achievable_rate, total_latency, upload_latency, ChannelParams, ClientId, ClientParams,
    ClientProfile, PathlossModel, RadioError,
};
use proptest::prelude::*;

fn params(distance_km: f64, tx_power_w: f64) -> ClientParams {
    ClientParams {
        id: ClientId(0),
        distance_km,
        tx_power_w,
        cpu_freq_hz: 2e9,
        cycles_per_sample: 4e5,
        num_samples: 1000,
        local_iter_factor: 1.0,
        target_accuracy: 0.05,
    }
}

fn profile(distance_km: f64, tx_power_w: f64) -> ClientProfile {
    ClientProfile::new(params(distance_km, tx_power_w)).unwrap()
}

#[test]
fn worked_example_totals() {
    // PL = 133.7 dB  ⇔  d = 10^(5.6 / 37.6) km.
    let d = 10f64.powf(5.6 / 37.6);
    let lat = total_latency(&profile(d, 1.0), &ChannelParams::default()).unwrap();
    assert!((lat.compute_s - 0.8644).abs() < 5e-5, "{lat:?}");
    assert!((lat.upload_s - 22.70).abs() < 5e-3, "{lat:?}");
    // The worked figure 23.57 s sums already-rounded parts; 10 ms covers it.
    assert!((lat.total_s - 23.57).abs() < 1e-2, "{lat:?}");
    assert_eq!(lat.total_s, lat.compute_s + lat.upload_s);
}

#[test]
fn unit_rate_gives_unit_upload() {
    // Pick p so that b·log2(1 + p·g/N0) = s exactly: SNR = 2^(s/b) − 1.
    let chan =
        ChannelParams::with_noise_dbm(25e3, -94.0, 100e3, PathlossModel::Log10Distance).unwrap();
    let g = 10f64.powf(-128.1 / 10.0);
    let p = (2f64.powf(4.0) - 1.0) * chan.noise_power_w() / g;
    let t = upload_latency(&profile(1.0, p), &chan).unwrap();
    assert!((t - 1.0).abs() < 1e-12, "{t}");
}

#[test]
fn silent_client_is_unreachable() {
    let chan = ChannelParams::default();
    assert_eq!(achievable_rate(&profile(1.0, 0.0), &chan).unwrap(), 0.0);
    assert!(matches!(
        total_latency(&profile(1.0, 0.0), &chan),
        Err(RadioError::Unreachable { .. })
    ));
    // Verbatim pathloss at 100 km (3888 dB) underflows the gain to zero.
    let verbatim =
        ChannelParams::with_noise_dbm(30e3, -94.0, 100e3, PathlossModel::VerbatimLinear).unwrap();
    assert!(matches!(
        upload_latency(&profile(100.0, 1.0), &verbatim),
        Err(RadioError::Unreachable { .. })
    ));
}

#[test]
fn invalid_profiles_are_rejected() {
    for bad in [
        ClientParams {
            distance_km: 0.0,
            ..params(1.0, 1.0)
        },
        ClientParams {
            cpu_freq_hz: 0.0,
            ..params(1.0, 1.0)
        },
        ClientParams {
            cycles_per_sample: f64::NAN,
            ..params(1.0, 1.0)
        },
        ClientParams {
            num_samples: 0,
            ..params(1.0, 1.0)
        },
        ClientParams {
            target_accuracy: 1.0,
            ..params(1.0, 1.0)
        },
        ClientParams {
            tx_power_w: -1.0,
            ..params(1.0, 1.0)
        },
    ] {
        assert!(ClientProfile::new(bad).is_err(), "{bad:?}");
    }
}

/// Latencies of 20,000 clients drawn with the default population settings.
#[test]
fn population_latency_is_unimodal_around_ten_seconds() {
    let cfg = PopulationConfig {
        num_clients: 20_000,
        ..PopulationConfig::default()
    };
    let pop = sample_population(&cfg, &ChannelParams::default(), 99).unwrap();
    let median = pop.median_latency();
    assert!((5.0..=20.0).contains(&median), "median {median}");

    // 2 s bins up to 60 s; allow 4 binomial standard deviations of wiggle
    // against the single-peak shape.
    let mut hist = vec![0f64; 30];
    for (_, t) in pop.latencies() {
        if let Some(bin) = hist.get_mut((t / 2.0) as usize) {
            *bin += 1.0;
        }
    }
    let peak = (0..hist.len())
        .max_by(|&a, &b| hist[a].total_cmp(&hist[b]))
        .unwrap();
    let slack = |a: f64, b: f64| 4.0 * a.max(b).sqrt();
    for i in 1..=peak {
        assert!(
            hist[i] + slack(hist[i], hist[i - 1]) >= hist[i - 1],
            "rising side bin {i}: {hist:?}"
        );
    }
    for i in peak + 1..hist.len() {
        assert!(
            hist[i] <= hist[i - 1] + slack(hist[i], hist[i - 1]),
            "falling side bin {i}: {hist:?}"
        );
    }
}

#[test]
fn square_cell_is_available() {
    let cfg = PopulationConfig {
        placement: Placement::SquareArea { side_km: 2.0 },
        ..PopulationConfig::default()
    };
    let pop = sample_population(&cfg, &ChannelParams::default(), 3).unwrap();
    assert_eq!(pop.len(), 50);
    assert!(pop
        .clients()
        .iter()
        .all(|c| c.profile.distance_km() <= 2f64.sqrt() + 1e-12));
}

proptest! {
    #[test]
    fn rate_grows_with_power(d in 0.05f64..3.0, p in 0.01f64..5.0, extra in 0.01f64..5.0) {
        let chan = ChannelParams::default();
        prop_assert!(achievable_rate(&profile(d, p + extra), &chan).unwrap() > achievable_rate(&profile(d, p), &chan).unwrap());
    }

    #[test]
    fn closer_clients_upload_faster(d in 0.05f64..3.0, shrink in 0.1f64..0.99) {
        let chan = ChannelParams::default();
        prop_assert!(upload_latency(&profile(d * shrink, 1.0), &chan).unwrap() < upload_latency(&profile(d, 1.0), &chan).unwrap());
    }

    #[test]
    fn latency_is_pure_and_additive(d in 0.05f64..3.0, f in 0.8e9f64..3e9, c in 3e5f64..5e5) {
        let p = ClientProfile::new(ClientParams { cpu_freq_hz: f, cycles_per_sample: c, ..params(d, 1.0) }).unwrap();
        let chan = ChannelParams::default();
        let a = total_latency(&p, &chan).unwrap();
        prop_assert_eq!(a, total_latency(&p, &chan).unwrap());
        prop_assert_eq!(a.total_s, a.compute_s + a.upload_s);
    }
}
