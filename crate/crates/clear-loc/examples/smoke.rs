use clear_loc::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let s = preset("scenario1").unwrap();
    let sensors = s.fixed_sensors().unwrap();
    let source = s.fixed_source().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let meas = sample_measurements(&mut rng, &source, &sensors, &NoiseSpec::uniform(0.0).unwrap()).unwrap();
    let r = clear_estimate(&meas, &sensors, &EstimateOptions::default()).unwrap();
    println!("stage1:  {:?} {:?}", r.stage1_estimate.position.as_slice(), r.stage1_estimate.velocity.as_slice());
    println!("refined: {:?} {:?}", r.refined_estimate.position.as_slice(), r.refined_estimate.velocity.as_slice());
    println!("candidates: {}", r.candidates.len());
    for c in &r.candidates {
        println!("  v={} vdot={} cost={}", c.nuisance.v, c.nuisance.vdot, c.ml_cost);
    }

    let meas = sample_measurements(&mut rng, &source, &sensors, &NoiseSpec::uniform(1.0).unwrap()).unwrap();
    let r = clear_estimate(&meas, &sensors, &EstimateOptions::default()).unwrap();
    println!("noisy pos err: {}  vel err: {}", r.refined_estimate.position_error(&source), r.refined_estimate.velocity_error(&source));

    let s4 = preset("scenario4").unwrap();
    let sensors4 = s4.fixed_sensors().unwrap();
    let source4 = s4.fixed_source().unwrap();
    let meas4 = sample_measurements(&mut rng, &source4, &sensors4, &NoiseSpec::uniform(0.0).unwrap()).unwrap();
    let r4 = clear_estimate(&meas4, &sensors4, &EstimateOptions::default()).unwrap();
    println!("3D pos err: {}  vel err: {}", r4.refined_estimate.position_error(&source4), r4.refined_estimate.velocity_error(&source4));

    let s2 = preset("scenario2").unwrap();
    let sensors2 = s2.fixed_sensors().unwrap();
    let meas2 = sample_measurements(&mut rng, &source, &sensors2, &NoiseSpec::uniform(0.0).unwrap()).unwrap();
    let hx = ho_xu_tswls(&meas2, &sensors2).unwrap();
    println!("hoxu pos err: {} reason={:?}", hx.estimate.position_error(&source), hx.failure_reason);
    let r2 = clear_estimate(&meas2, &sensors2, &EstimateOptions::default()).unwrap();
    println!("clear M=3 pos err: {}", r2.refined_estimate.position_error(&source));

    let gn = gauss_newton_ml(&meas2, &sensors2, &source, 50, 1e-9).unwrap();
    println!("gn from truth: converged={} iters={}", gn.converged, gn.iterations);
}
