// Scratch timing probe for the shipped problems (not part of the build).
use kolmofix::fixedpoint::picard_solve;
use kolmofix::problem::presets::load_preset;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    for spec in &args {
        let (name, backend) = match spec.split_once(':') {
            Some((n, b)) => (n, Some(b)),
            None => (spec.as_str(), None),
        };
        let mut p = load_preset(name).expect("preset");
        if let Some(b) = backend {
            p.solver.backend = kolmofix::problem::BackendKind::parse_name(b).expect("backend");
        }
        let mu0 = p.initial_measure().expect("mu0");
        let cfg = p.picard_config().expect("cfg");
        let t0 = Instant::now();
        match picard_solve(&p.field, &mu0, &cfg) {
            Ok(rep) => {
                let mu = &rep.final_measure;
                let d = mu.dim();
                let mean: Vec<f64> = (0..d)
                    .map(|i| mu.integrate(|x| x[i]) / mu.mass())
                    .collect();
                let m2: Vec<f64> = (0..d)
                    .map(|i| mu.integrate(|x| x[i] * x[i]) / mu.mass())
                    .collect();
                let cross = if d == 2 {
                    mu.integrate(|x| x[0] * x[1]) / mu.mass()
                } else {
                    f64::NAN
                };
                let absm = mu.integrate(|x| x.iter().map(|v| v.abs()).sum::<f64>()) / mu.mass();
                println!(
                    "{name}: {:?} in {:.1}s, inner={}, iters={}, mean={mean:?}, m2={m2:?}, cross={cross:.4}, absm={absm:.4}, atoms={}, damping={}, note={:?}",
                    rep.status,
                    t0.elapsed().as_secs_f64(),
                    rep.inner_solves,
                    rep.iterates.len(),
                    mu.support_size(),
                    rep.damping_final,
                    rep.note
                );
                for (k, it) in rep.iterates.iter().enumerate() {
                    println!(
                        "  it{k}: dist={:.3e} vmom={:.4} resid={:.3e}",
                        it.distance, it.v_moment, it.residual
                    );
                }
            }
            Err(e) => println!("{name}: ERROR after {:.1}s: {e}", t0.elapsed().as_secs_f64()),
        }
    }
}
