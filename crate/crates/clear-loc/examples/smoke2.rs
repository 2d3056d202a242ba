use clear_loc::*;

fn main() {
    let s3 = preset("scenario3").unwrap();
    let records = run_trials(&s3, &[EstimatorKind::Clear, EstimatorKind::HoXu]).unwrap();
    for kind in [EstimatorKind::Clear, EstimatorKind::HoXu] {
        let recs: Vec<&TrialRecord> = records.iter().filter(|r| r.estimator == kind).collect();
        let cdf = empirical_cdf(&recs, ErrorField::Position).unwrap();
        println!("{kind}: p95 = {:.3}", cdf.p95);
    }
    for name in ["scenario1", "scenario2", "scenario4", "scenario5"] {
        let mut s = preset(name).unwrap();
        s.trials = 1000;
        s.noise_grid = vec![1e-4, 1e-2, 1.0, 1e2];
        let sensors = s.fixed_sensors().unwrap();
        let source = s.fixed_source().unwrap();
        let records = run_trials(&s, &[EstimatorKind::Clear]).unwrap();
        print!("{name}: ");
        for (cell, &sigma2) in s.noise_grid.clone().iter().enumerate() {
            let recs: Vec<&TrialRecord> = records.iter().filter(|r| r.cell == cell).collect();
            let pos = rmse(&recs, ErrorField::Position).unwrap();
            let q = build_covariance(sensors.measurement_count(), &NoiseSpec::uniform(sigma2).unwrap());
            let rep = crlb_report(&source, &sensors, &q).unwrap();
            print!("{:.3} ", pos.rmse / rep.position_rmse_bound);
        }
        println!();
    }
}
