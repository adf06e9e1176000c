use intercell::cache::{typical_set_cached, Cache};
use intercell::closed_form::HypoExp;
use intercell::geometry::ReusePattern;
use intercell::mcp::{run_mcp, McpConfig};
use intercell::propagation::Scenario;

#[test]
fn cached_sets_drive_a_converging_fr3_run() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::new(dir.path()).unwrap();
    let config = McpConfig {
        iterations: 300,
        ..McpConfig::default()
    };
    let built = typical_set_cached(Some(&cache), 6.0, config.partition).unwrap();
    let loaded = typical_set_cached(Some(&cache), 6.0, config.partition).unwrap();
    assert_eq!(built, loaded);

    let scenario = Scenario::standard(ReusePattern::FR3, 6.0).unwrap();
    let result = run_mcp(&scenario, &loaded, &config).unwrap();
    result.check().unwrap();
    assert!((result.histogram.total_mass() - 1.0).abs() < 1e-9);
    assert_eq!(result.panel.len(), 25 * 25 * 900);
}

#[test]
fn unshadowed_fr3_histogram_tracks_closed_form() {
    let config = McpConfig {
        iterations: 300,
        ..McpConfig::default()
    };
    let set = intercell::typical_set::build_typical_set(0.0, config.partition).unwrap();
    let scenario = Scenario::standard(ReusePattern::FR3, 0.0).unwrap();
    let result = run_mcp(&scenario, &set, &config).unwrap();
    let law = HypoExp::new(&scenario.lambdas()).unwrap();
    let d = result.histogram.sup_distance(|x| law.cdf(x).unwrap());
    assert!(d < 0.03, "sup distance {d}");
    assert!(result.deviation().abs() < 0.02, "{}", result.deviation());
}
