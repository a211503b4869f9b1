use std::time::Instant;
use sg_glow::renorm::{cross_term_fast, cross_term_smeared, u_ren_shifted, u_ren_shifted_fast, ShiftedKernelGrid};
use sg_glow::smearing::SmearingFunction;
use sg_glow::Vec2;

fn main() {
    let f = SmearingFunction::gaussian(1.0, Vec2(0.0, 0.0), 1.0);
    // Accuracy of the fast paths vs adaptive at 1e-8.
    let mut worst_u = 0.0f64;
    let mut worst_c = 0.0f64;
    for i in 0..25 {
        let x = Vec2(5.8 * (i as f64 / 25.0) - 2.9, 4.0 * ((i * 7 % 25) as f64 / 25.0) - 2.0);
        let y = Vec2(-1.8 + 0.3 * i as f64 / 2.0, 1.1 - 0.2 * (i % 5) as f64);
        let ua = u_ren_shifted(x, &f, 1.0, 1e-8).unwrap();
        let uf = u_ren_shifted_fast(x, &f, 1.0);
        let scale = ua.max_abs().max(0.1);
        worst_u = worst_u.max(ua.sub_t(uf).max_abs() / scale);
        let ca = cross_term_smeared(&f, x, y, 1e-8).unwrap();
        let cf = cross_term_fast(&f, x, y);
        let scale = ca.max_abs().max(0.1);
        worst_c = worst_c.max(ca.sub_t(cf).max_abs() / scale);
    }
    println!("worst rel err: u_fast {worst_u:.2e}  cross_fast {worst_c:.2e}");

    let t0 = Instant::now();
    let n = 2000;
    let mut acc = 0.0;
    for i in 0..n {
        let x = Vec2(5.8 * (i as f64 / n as f64) - 2.9, 2.0 * ((i * 7 % n) as f64 / n as f64));
        acc += u_ren_shifted_fast(x, &f, 1.0).trace();
    }
    println!("u_fast: {:.1} us/call ({acc:.2})", t0.elapsed().as_secs_f64() / n as f64 * 1e6);
    let t0 = Instant::now();
    let mut acc = 0.0;
    for i in 0..n {
        let x = Vec2(5.8 * (i as f64 / n as f64) - 2.9, 0.3);
        let y = Vec2(-0.4, 4.0 * ((i * 7 % n) as f64 / n as f64) - 2.0);
        acc += cross_term_fast(&f, x, y).trace();
    }
    println!("cross_fast: {:.1} us/call ({acc:.2})", t0.elapsed().as_secs_f64() / n as f64 * 1e6);

    let t0 = Instant::now();
    let grid = ShiftedKernelGrid::build(&f, 1.0, 6.3, 0.08);
    println!("grid build: {:.2} s", t0.elapsed().as_secs_f64());
    let mut worst_g = 0.0f64;
    for i in 0..25 {
        let x = Vec2(5.8 * (i as f64 / 25.0) - 2.9, 4.0 * ((i * 7 % 25) as f64 / 25.0) - 2.0);
        let ua = u_ren_shifted(x, &f, 1.0, 1e-8).unwrap();
        let ug = grid.eval(x);
        worst_g = worst_g.max(ua.sub_t(ug).max_abs() / ua.max_abs().max(0.1));
    }
    let t0 = Instant::now();
    let mut acc = 0.0;
    for i in 0..200_000 {
        let x = Vec2(5.9 * ((i % 500) as f64 / 500.0) - 2.9, 3.0 * ((i * 13 % 777) as f64 / 777.0));
        acc += grid.eval(x).trace();
    }
    println!("grid eval: {:.3} us/call ({acc:.2}), worst rel err {worst_g:.2e}", t0.elapsed().as_secs_f64() / 200_000.0 * 1e6);
}
