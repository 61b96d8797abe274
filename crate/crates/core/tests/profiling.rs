use mess::profiler::{profile, profile_to_string, read_samples, Bucket, ProfileSample, StressWeights};
use mess::synth::{platform, platform_family};

fn hpcg_like() -> Vec<ProfileSample> {
    // Ramp-up, then a long stretch near the all-but-write-free peak.
    let mut v = vec![
        ProfileSample::new(0.0, 5.0, 95.0),
        ProfileSample::new(10_000.0, 40.0, 92.0),
        ProfileSample::new(20_000.0, 75.0, 90.0),
    ];
    for (i, bw) in [106.49, 106.5, 106.51, 106.5, 106.48].iter().enumerate() {
        v.push(ProfileSample::new(30_000.0 + 10_000.0 * i as f64, *bw, 90.0));
    }
    v
}

#[test]
fn hpcg_peaks_are_red() {
    let fam = platform_family(platform("cascadelake").unwrap(), false).unwrap();
    let out = profile(&fam, &hpcg_like(), StressWeights::default());
    let peak = out.iter().map(|p| p.latency_ns).fold(0.0, f64::max);
    assert!((260.0..=290.0).contains(&peak), "peak {peak}");
    for p in out.iter().filter(|p| p.sample.total_bw > 100.0) {
        assert_eq!(p.bucket, Bucket::Red, "{p:?}");
        assert!((260.0..=290.0).contains(&p.latency_ns));
    }
    assert_eq!(out[0].bucket, Bucket::Green);
}

#[test]
fn idle_sample_is_unloaded_and_green() {
    let fam = platform_family(platform("skylake").unwrap(), false).unwrap();
    let out = profile(&fam, &[ProfileSample::new(0.0, 0.0, 100.0)], StressWeights::default());
    assert_eq!(out[0].latency_ns, 89.0);
    assert_eq!(out[0].stress_score, 0.0);
    assert_eq!(out[0].bucket, Bucket::Green);
}

#[test]
fn csv_round_trip_keeps_order_and_columns() {
    let fam = platform_family(platform("skylake").unwrap(), false).unwrap();
    let text = "timestamp_us,total_bw_gbps,read_ratio_pct\n0,10,100\n10000,120,70\n20000,50,55.5\n";
    let samples = read_samples(text.as_bytes()).unwrap();
    let a = profile_to_string(&profile(&fam, &samples, StressWeights::default()));
    let b = profile_to_string(&profile(&fam, &samples, StressWeights::default()));
    assert_eq!(a, b);
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(
        lines[0],
        "timestamp_us,total_bw_gbps,read_ratio_pct,latency_ns,stress_score,bucket,saturated"
    );
    assert!(lines[1].starts_with("0,10,100,"));
    assert!(lines[2].starts_with("10000,120,70,") && lines[2].ends_with(",red,true"));
    assert!(lines[3].starts_with("20000,50,55.5,"));
}
