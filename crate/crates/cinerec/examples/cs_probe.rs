// Probe which ingredient breaks criterion-5 CS quality on the desk phantom.
use cinerec::admm::{admm_recon, CsConfig};
use cinerec::fft::ifft2c;
use cinerec::metrics::psnr;
use cinerec::phantom::{generate_cine, generate_coil_maps, simulate_acquisition, PhantomConfig};
use cinerec::sampling::generate_lh_mask;
use cinerec::sense::estimate_sensitivities;
use cinerec::tensor::{rss_combine, ComplexCine, CoilSensitivities, DomainTag};
use num_complex::Complex64;

// variant: maps from the temporal average, low-passed with a Hamming window
// of `width` columns about the k-space center (width = 0: no window)
fn estimate_full_avg(
    k_us: &ComplexCine,
    m: &cinerec::sampling::SamplingMask,
    width: usize,
    window_rows: bool,
) -> CoilSensitivities {
    let (t, c, h, w) = k_us.dims();
    let mut counts = vec![0usize; w];
    for ti in 0..t {
        for wi in 0..w {
            if m.get(ti, wi) {
                counts[wi] += 1;
            }
        }
    }
    let mut low = ComplexCine::zeros((1, c, h, w), DomainTag::Kspace).unwrap();
    for ti in 0..t {
        for ci in 0..c {
            let s = k_us.slice(ti, ci);
            let dst = low.slice_mut(0, ci);
            for hi in 0..h {
                for wi in 0..w {
                    if m.get(ti, wi) {
                        dst[hi * w + wi] += s[hi * w + wi] / counts[wi] as f64;
                    }
                }
            }
        }
    }
    if width > 0 {
        let ham = |j: f64, n: f64| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * j / n).cos();
        let colwin: Vec<f64> = (0..w)
            .map(|wi| {
                let d = wi as f64 - (w / 2) as f64 + (width as f64 - 1.0) / 2.0;
                if d < 0.0 || d > width as f64 - 1.0 { 0.0 } else { ham(d, width as f64 - 1.0) }
            })
            .collect();
        let rowwin: Vec<f64> = (0..h)
            .map(|hi| {
                if !window_rows {
                    return 1.0;
                }
                let d = hi as f64 - (h / 2) as f64 + (width as f64 - 1.0) / 2.0;
                if d < 0.0 || d > width as f64 - 1.0 { 0.0 } else { ham(d, width as f64 - 1.0) }
            })
            .collect();
        for ci in 0..c {
            let dst = low.slice_mut(0, ci);
            for hi in 0..h {
                for wi in 0..w {
                    dst[hi * w + wi] *= colwin[wi] * rowwin[hi];
                }
            }
        }
    }
    let g = ifft2c(&low).unwrap();
    let mut data = vec![Complex64::new(0.0, 0.0); c * h * w];
    let mut rss = vec![0.0f64; h * w];
    for ci in 0..c {
        let gc = g.slice(0, ci);
        for i in 0..h * w {
            rss[i] += gc[i].norm_sqr();
        }
    }
    for v in &mut rss {
        *v = v.sqrt();
    }
    let rss_max = rss.iter().cloned().fold(0.0, f64::max);
    let floor = 1e-6 * rss_max;
    for ci in 0..c {
        let gc = g.slice(0, ci);
        for i in 0..h * w {
            data[ci * h * w + i] =
                if rss[i] < floor { Complex64::new(0.0, 0.0) } else { gc[i] / rss[i] };
        }
    }
    CoilSensitivities::new(data, (c, h, w)).unwrap()
}

fn main() {
    let p = PhantomConfig::default();
    let gt = generate_cine(&p).unwrap();
    let sens = generate_coil_maps(p.h, p.w, p.n_coils, 7).unwrap();
    let m = generate_lh_mask(p.w, p.t, 12.0, 4, 2.0, 7).unwrap();
    let (_, k_us) = simulate_acquisition(&gt, &sens, &m, p.noise_sigma, 7).unwrap();
    let reference = rss_combine(&gt);
    let zf = rss_combine(&ifft2c(&k_us).unwrap());
    println!("psnr zf  = {:.2}", psnr(&zf, &reference, None).unwrap());

    let sens_est = estimate_sensitivities(&k_us, &m, 4).unwrap();
    let sens_avg = estimate_full_avg(&k_us, &m);

    let variants: [(&str, &CoilSensitivities, CsConfig); 8] = [
        ("avg sens,  default cfg", &sens_avg, CsConfig::default()),
        ("avg sens,  weak reg 10x", &sens_avg, CsConfig { lambda_t: 0.002, lambda_w: 0.0005, ..Default::default() }),
        ("true sens, default cfg", &sens, CsConfig::default()),
        ("est sens,  default cfg", &sens_est, CsConfig::default()),
        ("true sens, no reg", &sens, CsConfig { lambda_t: 0.0, lambda_w: 0.0, ..Default::default() }),
        ("est sens,  no reg", &sens_est, CsConfig { lambda_t: 0.0, lambda_w: 0.0, ..Default::default() }),
        ("true sens, weak reg 10x", &sens, CsConfig { lambda_t: 0.002, lambda_w: 0.0005, ..Default::default() }),
        ("est sens,  weak reg 10x", &sens_est, CsConfig { lambda_t: 0.002, lambda_w: 0.0005, ..Default::default() }),
    ];
    for (name, s, cfg) in variants {
        let cfg = CsConfig { max_admm_iters: 30, ..cfg };
        let (x, tr) = admm_recon(&k_us, &m, s, &cfg).unwrap();
        println!(
            "{name}: psnr {:.2}, obj {:.4e} -> {:.4e}",
            psnr(&rss_combine(&x), &reference, None).unwrap(),
            tr.objective[0],
            tr.objective[tr.objective.len() - 1]
        );
    }
}
