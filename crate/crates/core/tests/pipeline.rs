use coxian::estimation::{FitConfig, PhaseRange};
use coxian::pipeline::{
    derive_stations, ingest_str, run_workflow, DestinationMap, StationDataset, StationStatus,
    WorkflowConfig, STATION_COUNT,
};
use coxian::simulate::{to_csv, ChainSpec, Simulator, StationSpec};

fn dataset(sim: &Simulator, patients: usize, seed: u64) -> StationDataset {
    let csv = to_csv(&sim.simulate(patients, seed));
    let ingested = ingest_str(&csv).unwrap();
    assert!(ingested.rejects.is_empty());
    derive_stations(&ingested.records, &DestinationMap::default())
}

fn quick(range: (usize, usize), covariates: bool) -> WorkflowConfig {
    WorkflowConfig {
        fit: FitConfig {
            n_starts: 6,
            phase_range: PhaseRange::new(range.0, range.1).unwrap(),
            std_errors: covariates,
            seed: 3,
            ..FitConfig::default()
        },
        covariates,
        ..WorkflowConfig::default()
    }
}

#[test]
fn simulated_csv_ingests_without_rejects() {
    let sim = Simulator::new(ChainSpec::default()).unwrap();
    let csv = to_csv(&sim.simulate(1000, 1));
    let ingested = ingest_str(&csv).unwrap();
    assert_eq!(ingested.records.len(), 1000);
    assert!(ingested.rejects.is_empty());
    let ds = derive_stations(&ingested.records, &DestinationMap::default());
    assert!(ds.rejects.is_empty());
    assert_eq!(ds.patients(), 1000);
}

#[test]
fn same_seed_same_bytes() {
    let sim = Simulator::new(ChainSpec::default()).unwrap();
    assert_eq!(to_csv(&sim.simulate(500, 7)), to_csv(&sim.simulate(500, 7)));
    assert_ne!(to_csv(&sim.simulate(500, 7)), to_csv(&sim.simulate(500, 8)));
}

#[test]
fn no_onward_route_from_registration() {
    let mut spec = ChainSpec::default();
    spec.stations[0] = StationSpec {
        theta: vec![0.5, 0.08],
        pi1: vec![0.6, 0.4],
        pi2: vec![0.0, 0.0],
        beta: vec![0.0; 6],
    };
    let sim = Simulator::new(spec).unwrap();
    let csv = to_csv(&sim.simulate(300, 2));
    let ingested = ingest_str(&csv).unwrap();
    assert!(ingested.records.iter().all(|r| r.triage_time.is_none() && r.examination_time.is_none()));
    let ds = derive_stations(&ingested.records, &DestinationMap::default());
    assert_eq!(ds.exit_counts(), [300, 0, 0]);
}

#[test]
fn station_counts_are_conserved() {
    let sim = Simulator::new(ChainSpec::default()).unwrap();
    let ds = dataset(&sim, 5000, 4);
    let exits = ds.exit_counts();
    assert_eq!(exits.iter().sum::<usize>(), 5000);
    for m in 0..STATION_COUNT {
        let reached: usize = exits[m..].iter().sum();
        assert_eq!(ds.stations[m].len(), reached);
        if m > 0 {
            assert!(ds.stations[m].len() <= ds.stations[m - 1].len());
            assert_eq!(ds.stations[m].prev_t.as_ref().unwrap().len(), reached);
        }
    }
    assert!(ds.stations[STATION_COUNT - 1].exited.iter().all(|e| *e));
}

#[test]
fn requested_exit_split_is_reproduced() {
    let sim = Simulator::new(ChainSpec::default()).unwrap();
    let patients = sim.simulate_with_exits(&[7, 90, 903], 5).unwrap();
    let ingested = ingest_str(&to_csv(&patients)).unwrap();
    let ds = derive_stations(&ingested.records, &DestinationMap::default());
    assert_eq!(ds.exit_counts(), [7, 90, 903]);
}

#[test]
fn everyone_reaching_treatment_uses_the_single_exit_fallback() {
    let mut spec = ChainSpec::default();
    spec.stations[0].pi1 = vec![0.0, 0.0];
    spec.stations[0].pi2 = vec![0.6, 0.4];
    spec.stations[1].pi1 = vec![0.0, 0.0];
    spec.stations[1].pi2 = vec![0.6, 0.4];
    let sim = Simulator::new(spec).unwrap();
    let ds = dataset(&sim, 1500, 6);
    assert_eq!(ds.exit_counts(), [0, 0, 1500]);
    let out = run_workflow(&ds, &quick((1, 2), false));
    assert!(!out.failed());
    for s in &out.stations[..2] {
        assert_eq!(s.status, StationStatus::Fitted);
        let fit = s.selected.as_ref().unwrap();
        assert!(fit.pi.iter().all(|&p| p == 0.0));
        assert!(fit.warnings.iter().any(|w| w.contains("all records take exit 2")));
    }
}

#[test]
fn constant_covariates_are_dropped_with_a_warning() {
    let mut spec = ChainSpec::default();
    spec.covariates.female = 0.0;
    spec.covariates.ambulance = 1.0;
    let sim = Simulator::new(spec).unwrap();
    let ds = dataset(&sim, 1500, 7);
    let out = run_workflow(&ds, &quick((1, 2), true));
    assert!(!out.failed());
    for s in &out.stations {
        assert!(s.dropped_covariates.contains(&"female".to_string()));
        assert!(s.dropped_covariates.contains(&"ambulance".to_string()));
        assert!(s.warnings.iter().any(|w| w.contains("female")));
        let fit = s.covariate_selected().expect("covariate fit on the remaining columns");
        let names = &fit.covariates.as_ref().unwrap().names;
        assert_eq!(names.len(), 4);
        assert!(!names.iter().any(|n| n == "female" || n == "ambulance"));
    }
}

#[test]
fn two_phase_stations_are_recovered_end_to_end() {
    let mut spec = ChainSpec::default();
    for s in &mut spec.stations {
        s.beta = vec![0.0; 6];
    }
    let sim = Simulator::new(spec).unwrap();
    let started = std::time::Instant::now();
    let mut hits = 0;
    for seed in 0..10 {
        let ds = dataset(&sim, 30_000, 100 + seed);
        let mut config = quick((1, 4), false);
        config.fit.seed = seed;
        let out = run_workflow(&ds, &config);
        let chosen: Vec<usize> = out
            .stations
            .iter()
            .map(|s| s.selected.as_ref().map_or(0, |f| f.phases))
            .collect();
        if chosen == [2, 2, 2] {
            hits += 1;
        }
        eprintln!("seed {seed}: selected {chosen:?}");
    }
    eprintln!("{hits}/10 in {:.1} s", started.elapsed().as_secs_f64());
    assert!(hits >= 8, "{hits}/10");
}
