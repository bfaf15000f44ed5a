// debug: full loop with event location AND per-step dE tracking
use cartan_sf::vertical::Casimirs;

fn field(h: &[f64; 3], cas: &Casimirs) -> [f64; 3] {
    let s1 = if h[0] >= 0.0 { 1.0 } else { -1.0 };
    let s2 = if h[1] >= 0.0 { 1.0 } else { -1.0 };
    [-s2 * h[2], s1 * h[2], s1 * cas.h4 + s2 * cas.h5]
}
fn rk4(h: &mut [f64; 3], cas: &Casimirs, dt: f64) {
    let k1 = field(h, cas);
    let mut p = [0.0; 3];
    for i in 0..3 { p[i] = h[i] + 0.5 * dt * k1[i]; }
    let k2 = field(&p, cas);
    for i in 0..3 { p[i] = h[i] + 0.5 * dt * k2[i]; }
    let k3 = field(&p, cas);
    for i in 0..3 { p[i] = h[i] + dt * k3[i]; }
    let k4 = field(&p, cas);
    for i in 0..3 { h[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]); }
}
fn energy(h: &[f64; 3], cas: &Casimirs) -> f64 { 0.5*h[2]*h[2] + h[0]*cas.h5 - h[1]*cas.h4 }

fn main() {
    let cas = Casimirs::new(2.0, 1.0);
    let mut h = [3.7e-33f64, 1.0, 1.0];
    let e0 = h[0].abs() + h[1].abs();
    let dt = 1e-4;
    let mut t = 0.0;
    let mut last = e0;
    let mut k = 0u64;
    while t < 4.0 {
        let before = h;
        let mut trial = h;
        rk4(&mut trial, &cas, dt);
        let crossed = |a: &[f64;3], b: &[f64;3], c: usize| (a[c] >= 0.0) != (b[c] >= 0.0);
        let mut ev: Option<(f64, usize)> = None;
        for c in 0..2 {
            if crossed(&before, &trial, c) {
                let (mut lo, mut hi) = (0.0f64, dt);
                for _ in 0..60 {
                    let mid = 0.5*(lo+hi);
                    let mut probe = before;
                    rk4(&mut probe, &cas, mid);
                    if crossed(&before, &probe, c) { hi = mid; } else { lo = mid; }
                    if hi - lo <= 1e-14*dt { break; }
                }
                if ev.map_or(true, |(w,_)| hi < w) { ev = Some((hi, c)); }
            }
        }
        match ev {
            Some((w, c)) => { rk4(&mut h, &cas, w); t += w; println!("k={k} EVENT c={c} w={w:e} t={t:.9}"); }
            None => { h = trial; t += dt; }
        }
        let e = h[0].abs() + h[1].abs();
        if (e - last).abs() > 1e-10 {
            println!("k={k} t={t:.7} dH={:e} h=[{:e},{:e},{:e}]", e-last, h[0], h[1], h[2]);
        }
        last = e;
        k += 1;
    }
    println!("total H drift {:e}", h[0].abs() + h[1].abs() - e0);
}
