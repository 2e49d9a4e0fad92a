use tpf_core::cfm::{train_v, CfmTrainConfig};
use tpf_core::flow::{synthesize_bundle, InducedUField, NetField, OdeConfig, VelocityField};
use tpf_core::gaussian::{sample_dataset, GaussianPath};
use tpf_core::interpolant::Schedule;
use tpf_core::linalg::SeededRng;
use tpf_core::metrics::{compatibility_residual, Probe};
use tpf_core::nn::net_forward;
use tpf_core::regression::{train_u, RegressionConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let v_epochs: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(120);
    let u_epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(150);
    let v_batch: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(512);
    let v_wd: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.0);
    let v_lr: f64 = std::env::var("INTRO_LR").ok().and_then(|v| v.parse().ok()).unwrap_or(1e-3);
    let skip_u: bool = args.get(5).map(|s| s == "skip-u").unwrap_or(false);
    let start = Instant::now();

    let path = GaussianPath::IsotropicLinear { dim: 1, sigma: 1.0 };
    let times: Vec<f64> = (0..11).map(|k| k as f64 / 10.0).collect();
    let mut rng = SeededRng::from_seed(1000);
    let n_samples: usize = std::env::var("INTRO_N").ok().and_then(|v| v.parse().ok()).unwrap_or(2000);
    let ds = sample_dataset(&path, &times, n_samples, &mut rng).unwrap();

    let v_ck = std::path::Path::new("/tmp/intro_v.ckpt");
    let v_params = {
        let v_spec = tpf_core::nn::MlpSpec::new(1, 1, 48, 3).with_time_embed(16);
        let v_cfg = CfmTrainConfig { epochs: v_epochs, batch_size: v_batch, lr: v_lr, weight_decay: v_wd, seed: 1001, schedule: Schedule::Trig, threads: 2, tail_average: 0.25 };
        let (p, trace) = train_v(std::slice::from_ref(&ds), &v_cfg, &v_spec).unwrap();
        println!("v trained in {:.0}s, loss {:.4} -> {:.4}", start.elapsed().as_secs_f64(), trace[0].1, trace.last().unwrap().1);
        tpf_core::io::save_checkpoint(v_ck, &p).unwrap();
        p
    };

    // Diagnostic: marginal match of v-flow at each t (sample var of pushed noise vs 1+t)
    let field = NetField::new(&v_params, None).unwrap();
    let mut vr = SeededRng::from_seed(5000);
    for &t in &[0.0, 0.25, 0.5, 0.75, 1.0] {
        let mut var = 0.0;
        let n = 2000;
        for _ in 0..n {
            let a = [vr.normal()];
            let x = tpf_core::flow::flow_forward(&field, &a, t, &OdeConfig::rk4(60)).unwrap();
            var += x[0] * x[0];
        }
        var /= n as f64;
        println!("t={t:.2}: pushforward var {var:.4} vs true {:.4}", 1.0 + t);
    }

    // dv/dt scale of the sampling-time field
    let mut rng3 = SeededRng::from_seed(33);
    let mut dscale = 0.0;
    for _ in 0..20 {
        let x = [2.0 * rng3.normal()];
        let dv = field.dt(&x, 0.15 + 0.7 * rng3.uniform(), 0.15 + 0.7 * rng3.uniform());
        dscale += dv[0].abs();
    }
    println!("mean |dv/dt| at probes: {:.3}", dscale / 20.0);
    if skip_u { println!("total {:.0}s", start.elapsed().as_secs_f64()); return; }
    let t_synth = Instant::now();
    let synth_times: Vec<f64> = (0..31).map(|k| k as f64 / 30.0).collect();
    let mut synth_rng = SeededRng::from_seed(1002);
    let bundle = synthesize_bundle(&field, &mut synth_rng, 1024, &synth_times, &OdeConfig::rk4(60), None, 2).unwrap();
    println!("synthesis: {:.0}s", t_synth.elapsed().as_secs_f64());

    // bundle variance profile and its fd slopes (the u-stage's true input)
    {
        let k1 = bundle.times().len();
        let m = bundle.n_trajectories();
        let vars: Vec<f64> = (0..k1).map(|k| {
            (0..m).map(|i| bundle.state(i, k)[0].powi(2)).sum::<f64>() / m as f64
        }).collect();
        let slopes: Vec<String> = (0..k1 - 1).map(|k| {
            let dt = bundle.times()[k + 1] - bundle.times()[k];
            format!("{:.2}", (vars[k + 1] - vars[k]) / dt)
        }).collect();
        println!("bundle var slopes (true 1.0): {:?}", slopes);
    }
    let t_u = Instant::now();
    let mut best: Option<(f64, tpf_core::nn::NetParams, String)> = None;
    for (uw, ue) in [(16usize, 30usize), (16, 60), (32, 30), (32, u_epochs)] {
        let u_spec = tpf_core::nn::MlpSpec::new(1, 1, uw, 2).with_time_embed(8);
        let u_cfg = RegressionConfig { epochs: ue, batch_size: 1024, lr: 3e-3, seed: 1003, threads: 2, fd: tpf_core::regression::FdKind::Midpoint, tail_average: 0.25 };
        let (u_params, trace) = train_u(std::slice::from_ref(&bundle), &u_cfg, &u_spec).unwrap();
        let mut abs_sum = 0.0;
        let mut true_sum = 0.0;
        for ix in -8i32..=8 {
            if ix == 0 { continue; }
            let x = ix as f64 * 0.25;
            for it in 0..=10 {
                let t = it as f64 / 10.0;
                let got = net_forward(&u_params, &[x], t, 1.0, None).unwrap()[0];
                let want = x / (2.0 * (1.0 + t));
                abs_sum += (got - want).abs();
                true_sum += want.abs();
            }
        }
        let agg = abs_sum / true_sum;
        println!("u(width {uw}, epochs {ue}): final loss {:.6}, aggregate L1 rel {:.4}", trace.last().unwrap().1, agg);
        if best.as_ref().map(|b| agg < b.0).unwrap_or(true) {
            best = Some((agg, u_params, format!("width {uw} epochs {ue}")));
        }
    }
    let (_, u_params, tag) = best.unwrap();
    println!("best u config: {tag}; u stage took {:.0}s", t_u.elapsed().as_secs_f64());

    // field error map
    let mut sum = 0.0;
    let mut abs_sum = 0.0;
    let mut true_sum = 0.0;
    let mut count = 0;
    let mut worst: (f64, f64, f64) = (0.0, 0.0, 0.0);
    for ix in -8i32..=8 {
        if ix == 0 { continue; }
        let x = ix as f64 * 0.25;
        for it in 0..=10 {
            let t = it as f64 / 10.0;
            let got = net_forward(&u_params, &[x], t, 1.0, None).unwrap()[0];
            let want = x / (2.0 * (1.0 + t));
            let rel = (got - want).abs() / want.abs();
            sum += rel; abs_sum += (got - want).abs(); true_sum += want.abs(); count += 1;
            if rel > worst.0 { worst = (rel, x, t); }
        }
    }
    println!("criterion2: mean pointwise rel {:.4}, aggregate L1 rel {:.4}, worst {:.3} at x={} t={}",
             sum / count as f64, abs_sum / true_sum, worst.0, worst.1, worst.2);
    for &x in &[0.25f64, 0.5, 1.0, 2.0] {
        let mut line = format!("  x={x}: ");
        for it in [0, 5, 10] {
            let t = it as f64 / 10.0;
            let got = net_forward(&u_params, &[x], t, 1.0, None).unwrap()[0];
            let want = x / (2.0 * (1.0 + t));
            line.push_str(&format!("t={t}: {got:.4} vs {want:.4}; "));
        }
        println!("{line}");
    }

    // criterion 3 learned-pair numbers
    let v_net = NetField::new(&v_params, None).unwrap();
    let induced = InducedUField { v: &v_net, ode: OdeConfig::rk4(60) };
    let mut rng3 = SeededRng::from_seed(33);
    let probes: Vec<Probe> = (0..20).map(|_| Probe { x: vec![2.0 * rng3.normal()], t: 0.15 + 0.7 * rng3.uniform(), s: 0.15 + 0.7 * rng3.uniform() }).collect();
    let rep = compatibility_residual(&v_net, &induced, &probes).unwrap();
    let mut scale = 0.0;
    for p in &probes { let dv = v_net.dt(&p.x, p.t, p.s); scale += dv.iter().map(|c| c*c).sum::<f64>().sqrt(); }
    scale /= probes.len() as f64;
    // u slope profile vs truth
    for it in 0..=10 {
        let t = it as f64 / 10.0;
        let (mut num, mut den) = (0.0, 0.0);
        for ix in -8i32..=8 {
            if ix == 0 { continue; }
            let x = ix as f64 * 0.25;
            let got = net_forward(&u_params, &[x], t, 1.0, None).unwrap()[0];
            num += got * x;
            den += x * x;
        }
        if it % 2 == 0 {
            println!("  u slope at t={t:.1}: {:.4} vs {:.4}", num / den, 0.5 / (1.0 + t));
        }
    }
    println!("criterion3: mean residual {:.4e} vs 0.1x dv/dt scale {:.4e} (ratio {:.3})", rep.mean, 0.1 * scale, rep.mean / (0.1 * scale));
    println!("total {:.0}s", start.elapsed().as_secs_f64());
}
