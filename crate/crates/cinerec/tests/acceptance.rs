// Acceptance suite: one line per criterion, nonzero exit if any fails.
// Criterion 6 trains the frozen desk model, so the full suite takes on the
// order of half an hour on one CPU core.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cinerec::admm::{admm_recon, CsConfig};
use cinerec::autodiff::{RTensor, Tape};
use cinerec::checkpoint::{load_checkpoint, save_checkpoint};
use cinerec::crnn::{
    bcrnn_layer_on_tape, complex_to_channels, crnn_block_on_tape, forward, forward_on_tape,
    loss_on_tape, recon_crnn, ArchConfig, LossConfig, ModelParams,
};
use cinerec::dataset::{generate_instance, per_coil_samples, write_dataset, DatasetConfig};
use cinerec::fft::{fft2c, ifft2c};
use cinerec::metrics::{psnr, ssim};
use cinerec::montage::write_montages;
use cinerec::phantom::{generate_cine, generate_coil_maps, simulate_acquisition, PhantomConfig};
use cinerec::sampling::{effective_acceleration, generate_lh_mask, stratify, SamplingMask};
use cinerec::sense::{estimate_sensitivities, sense_adjoint, sense_forward};
use cinerec::tensor::{rss_combine, CoilSensitivities, ComplexCine, DomainTag, RealImageSequence};
use cinerec::train::{train, TrainConfig, TrainSample};
use cinerec::transforms::{haar_dwt2, haar_idwt2, temporal_diff, temporal_diff_adjoint};

type Check = fn() -> Result<String, String>;

fn main() {
    let checks: [(&str, Check); 8] = [
        ("1 operator adjoints", criterion_1),
        ("2 gradient integrity", criterion_2),
        ("3 data-consistency invariant", criterion_3),
        ("4 mask contract", criterion_4),
        ("5 cs solver", criterion_5),
        ("6 network training", criterion_6),
        ("7 inference speed vs cs", criterion_7),
        ("8 bitwise reproducibility", criterion_8),
    ];
    let mut failures = 0;
    for (name, check) in checks {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let dt = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({dt:.1}s) {detail}"),
            Err(msg) => {
                failures += 1;
                println!("criterion {name}: FAIL ({dt:.1}s) {msg}");
            }
        }
    }
    if failures > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- helpers

fn random_cine(
    rng: &mut ChaCha8Rng,
    dims: (usize, usize, usize, usize),
    domain: DomainTag,
) -> ComplexCine {
    let n = dims.0 * dims.1 * dims.2 * dims.3;
    let data = (0..n)
        .map(|_| Complex64::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0))
        .collect();
    ComplexCine::new(data, dims, domain).expect("test dims are valid")
}

/// Random tensor with the same shape and domain as `like` (so operator
/// outputs can be paired with a matching-codomain vector).
fn random_like(rng: &mut ChaCha8Rng, like: &ComplexCine) -> ComplexCine {
    let mut y = like.clone();
    for z in &mut y.data {
        *z = Complex64::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0);
    }
    y
}

fn inner(a: &ComplexCine, b: &ComplexCine) -> Complex64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x.conj() * y).sum()
}

fn rel_mismatch(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

fn magnitude_err(msg: &str, got: f64, limit: f64) -> Result<(), String> {
    if got <= limit {
        Ok(())
    } else {
        Err(format!("{msg}: {got:.3e} > {limit:.1e}"))
    }
}

// ------------------------------------------------------- criterion 1

/// Adjoint identities <A x, y> = <x, A^H y> for F, E, D_t and
/// orthonormality/roundtrip for the Haar transform, 100 random trials each
/// at 1e-10 relative.
fn criterion_1() -> Result<String, String> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let tol = 1e-10;
    let mut worst = 0.0f64;

    for trial in 0..100u64 {
        let t = 1 + (trial % 4) as usize;
        let c = 1 + (trial % 3) as usize;
        let (h, w) = [(4, 6), (8, 8), (6, 16), (16, 4)][(trial % 4) as usize];

        // F: centered orthonormal FFT, adjoint = inverse
        let x = random_cine(&mut rng, (t, c, h, w), DomainTag::Image);
        let y = random_cine(&mut rng, (t, c, h, w), DomainTag::Kspace);
        let fx = fft2c(&x).map_err(|e| e.to_string())?;
        let fhy = ifft2c(&y).map_err(|e| e.to_string())?;
        let err = rel_mismatch(inner(&fx, &y), inner(&x, &fhy));
        worst = worst.max(err);
        magnitude_err(&format!("F adjoint, trial {trial}"), err, tol)?;

        // E = M F S with random maps and a generated mask
        let n_coils = 2 + (trial % 3) as usize;
        let sens_data = (0..n_coils * h * w)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        let sens =
            CoilSensitivities::new(sens_data, (n_coils, h, w)).map_err(|e| e.to_string())?;
        let m = generate_lh_mask(w, t, 2.0, 1, 2.0, trial).map_err(|e| e.to_string())?;
        let xe = random_cine(&mut rng, (t, 1, h, w), DomainTag::Image);
        let ye = random_cine(&mut rng, (t, n_coils, h, w), DomainTag::Kspace);
        let ex = sense_forward(&xe, &sens, &m).map_err(|e| e.to_string())?;
        let ehy = sense_adjoint(&ye, &sens, &m).map_err(|e| e.to_string())?;
        let err = rel_mismatch(inner(&ex, &ye), inner(&xe, &ehy));
        worst = worst.max(err);
        magnitude_err(&format!("E adjoint, trial {trial}"), err, tol)?;

        // D_t: forward temporal difference
        let td = 2 + (trial % 4) as usize;
        let xd = random_cine(&mut rng, (td, 1, h, w), DomainTag::Image);
        let dx = temporal_diff(&xd).map_err(|e| e.to_string())?;
        let yd = random_like(&mut rng, &dx);
        let dhy = temporal_diff_adjoint(&yd).map_err(|e| e.to_string())?;
        let err = rel_mismatch(inner(&dx, &yd), inner(&xd, &dhy));
        worst = worst.max(err);
        magnitude_err(&format!("D_t adjoint, trial {trial}"), err, tol)?;

        // Haar: orthonormal, so Parseval + exact roundtrip + adjoint=inverse
        let levels = 1 + (trial % 2) as usize;
        let (hh, hw) = (8usize, 16usize);
        let xh = random_cine(&mut rng, (t, 1, hh, hw), DomainTag::Image);
        let cx = haar_dwt2(&xh, levels).map_err(|e| e.to_string())?;
        let back = haar_idwt2(&cx, levels).map_err(|e| e.to_string())?;
        let norm_err = (cx.norm2() - xh.norm2()).abs() / xh.norm2();
        worst = worst.max(norm_err);
        magnitude_err(&format!("Haar Parseval, trial {trial}"), norm_err, tol)?;
        let rt_err = xh
            .data
            .iter()
            .zip(&back.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
            / xh.norm2();
        worst = worst.max(rt_err);
        magnitude_err(&format!("Haar roundtrip, trial {trial}"), rt_err, tol)?;
        let yh = random_like(&mut rng, &cx);
        let ihy = haar_idwt2(&yh, levels).map_err(|e| e.to_string())?;
        let err = rel_mismatch(inner(&cx, &yh), inner(&xh, &ihy));
        worst = worst.max(err);
        magnitude_err(&format!("Haar adjoint, trial {trial}"), err, tol)?;
    }

    let dt = t0.elapsed().as_secs_f64();
    if dt >= 10.0 {
        return Err(format!("runtime {dt:.1}s >= 10s budget"));
    }
    Ok(format!("100 trials/operator, worst relative error {worst:.2e}"))
}

// ------------------------------------------------------- criterion 2

struct GradCase {
    name: String,
    params: Vec<RTensor<f64>>,
    /// Which params get finite-difference coverage (all get analytic grads).
    check: Vec<bool>,
    build: Box<dyn Fn(&mut Tape<f64>, &[usize]) -> usize>,
    h: f64,
    tol: f64,
}

fn scalarize(tape: &mut Tape<f64>, out: usize) -> usize {
    if tape.value(out).numel() == 1 {
        out
    } else {
        tape.mean_all(out).expect("mean of a non-empty tensor")
    }
}

fn eval_case(case: &GradCase, params: &[RTensor<f64>]) -> f64 {
    let mut tape = Tape::new();
    let ids: Vec<usize> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = (case.build)(&mut tape, &ids);
    let loss = scalarize(&mut tape, out);
    tape.value(loss).data[0]
}

fn run_grad_case(case: &GradCase, rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let mut tape = Tape::new();
    let ids: Vec<usize> = case.params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = (case.build)(&mut tape, &ids);
    let loss = scalarize(&mut tape, out);
    tape.backward(loss).map_err(|e| format!("{}: backward: {e}", case.name))?;
    let grads: Vec<RTensor<f64>> = ids.iter().map(|&id| tape.grad(id).clone()).collect();

    let mut checked = 0;
    for (pi, p) in case.params.iter().enumerate() {
        if !case.check[pi] {
            continue;
        }
        for _ in 0..4.min(p.numel()) {
            let ci = rng.gen_range(0..p.numel());
            let mut plus = case.params.clone();
            plus[pi].data[ci] += case.h;
            let mut minus = case.params.clone();
            minus[pi].data[ci] -= case.h;
            let fd = (eval_case(case, &plus) - eval_case(case, &minus)) / (2.0 * case.h);
            let an = grads[pi].data[ci];
            let err = (an - fd).abs();
            if err > case.tol * an.abs().max(fd.abs()).max(1.0) {
                return Err(format!(
                    "{}: param {pi} coord {ci}: analytic {an:.6e} vs fd {fd:.6e}",
                    case.name
                ));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

fn rt_random(rng: &mut ChaCha8Rng, shape: &[usize]) -> RTensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    RTensor::new(data, shape.to_vec()).expect("test shapes are consistent")
}

/// Like rt_random but keeps values away from 0 so finite differences never
/// cross a ReLU kink.
fn rt_random_off_kink(rng: &mut ChaCha8Rng, shape: &[usize]) -> RTensor<f64> {
    let mut t = rt_random(rng, shape);
    for v in &mut t.data {
        if v.abs() < 0.05 {
            *v = 0.05 * if *v >= 0.0 { 1.0 } else { -1.0 };
        }
    }
    t
}

/// Finite-difference gradient checks in f64 over 20 random configurations:
/// conv2d, relu, bcrnn_layer, crnn_block, the training loss, and a miniature
/// end-to-end model.
fn criterion_2() -> Result<String, String> {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut cases: Vec<GradCase> = Vec::new();

    // 6 conv2d configs
    for i in 0..6u64 {
        let mut r = ChaCha8Rng::seed_from_u64(1000 + i);
        let (c_in, c_out) = (1 + i as usize % 3, 1 + (i as usize + 1) % 3);
        let (h, w) = (4 + i as usize % 3, 5);
        let with_bias = i % 2 == 0;
        let x = rt_random(&mut r, &[c_in, h, w]);
        let k = rt_random(&mut r, &[c_out, c_in, 3, 3]);
        let b = rt_random(&mut r, &[c_out]);
        let params = if with_bias { vec![x, k, b] } else { vec![x, k] };
        cases.push(GradCase {
            name: format!("conv2d[{i}]"),
            check: vec![true; params.len()],
            params,
            build: Box::new(move |tape, ids| {
                let bias = if with_bias { Some(ids[2]) } else { None };
                tape.conv2d(ids[0], ids[1], bias).expect("conv2d shapes are valid")
            }),
            h: 1e-5,
            tol: 1e-4,
        });
    }

    // 4 relu configs (inputs kept off the kink)
    for i in 0..4u64 {
        let mut r = ChaCha8Rng::seed_from_u64(2000 + i);
        let x = rt_random_off_kink(&mut r, &[2, 1 + i as usize % 3, 4, 4]);
        cases.push(GradCase {
            name: format!("relu[{i}]"),
            params: vec![x],
            check: vec![true],
            build: Box::new(|tape, ids| tape.relu(ids[0]).expect("relu accepts any shape")),
            h: 1e-5,
            tol: 1e-4,
        });
    }

    // 4 bcrnn_layer configs: input + the layer-0 parameter group
    for i in 0..4u64 {
        let mut r = ChaCha8Rng::seed_from_u64(3000 + i);
        let arch = ArchConfig {
            n_iters: 1,
            n_bcrnn_layers: 1,
            feat_channels: 2 + i as usize % 2,
            hidden_channels: 2,
            ..ArchConfig::default()
        };
        let model = ModelParams::<f64>::init(&arch, 30 + i).map_err(|e| e.to_string())?;
        let t = 2 + i as usize % 3;
        let x = rt_random(&mut r, &[t, 2, 4, 4]);
        let mut params = vec![x];
        params.extend(model.tensors.iter().cloned());
        let arch_c = arch.clone();
        cases.push(GradCase {
            name: format!("bcrnn_layer[{i}]"),
            check: params.iter().map(|p| p.numel() <= 200).collect(),
            params,
            build: Box::new(move |tape, ids| {
                bcrnn_layer_on_tape(tape, ids[0], &arch_c, &ids[1..], 0, 0)
                    .expect("bcrnn shapes are valid")
            }),
            h: 1e-5,
            tol: 1e-4,
        });
    }

    // 3 crnn_block configs (2 BCRNN layers + projection + identity skip)
    for i in 0..3u64 {
        let mut r = ChaCha8Rng::seed_from_u64(4000 + i);
        let arch = ArchConfig {
            n_iters: 1,
            n_bcrnn_layers: 2,
            feat_channels: 2,
            hidden_channels: 2,
            ..ArchConfig::default()
        };
        let mut model = ModelParams::<f64>::init(&arch, 40 + i).map_err(|e| e.to_string())?;
        // the projection conv is zero-initialized; randomize it so its
        // gradient path is actually exercised
        for tensor in &mut model.tensors {
            for v in &mut tensor.data {
                if *v == 0.0 {
                    *v = r.gen::<f64>() * 0.2 - 0.1;
                }
            }
        }
        let x = rt_random(&mut r, &[2, 2, 4, 4]);
        let mut params = vec![x];
        params.extend(model.tensors.iter().cloned());
        let arch_c = arch.clone();
        cases.push(GradCase {
            name: format!("crnn_block[{i}]"),
            check: params.iter().map(|p| p.numel() <= 200).collect(),
            params,
            build: Box::new(move |tape, ids| {
                crnn_block_on_tape(tape, ids[0], &arch_c, &ids[1..], 0)
                    .expect("crnn_block shapes are valid")
            }),
            h: 1e-5,
            tol: 1e-4,
        });
    }

    // 2 loss configs (MSE + SSIM term)
    for i in 0..2u64 {
        let mut r = ChaCha8Rng::seed_from_u64(5000 + i);
        let pred = rt_random(&mut r, &[2, 2, 8, 8]);
        let target = rt_random(&mut r, &[2, 2, 8, 8]);
        let cfg = LossConfig { ssim_weight: 0.1, window: 3, ..LossConfig::default() };
        cases.push(GradCase {
            name: format!("loss[{i}]"),
            params: vec![pred],
            check: vec![true],
            build: Box::new(move |tape, ids| {
                loss_on_tape(tape, ids[0], &target, &cfg).expect("loss shapes match")
            }),
            h: 1e-5,
            tol: 1e-4,
        });
    }

    // 1 miniature end-to-end model: forward + loss, gradients w.r.t. weights
    {
        let mut r = ChaCha8Rng::seed_from_u64(6000);
        let arch = ArchConfig {
            n_iters: 2,
            n_bcrnn_layers: 2,
            feat_channels: 2,
            hidden_channels: 2,
            ..ArchConfig::default()
        };
        let mut model = ModelParams::<f64>::init(&arch, 60).map_err(|e| e.to_string())?;
        for tensor in &mut model.tensors {
            for v in &mut tensor.data {
                if *v == 0.0 {
                    *v = r.gen::<f64>() * 0.2 - 0.1;
                }
            }
        }
        let m = generate_lh_mask(8, 3, 2.0, 2, 2.0, 11).map_err(|e| e.to_string())?;
        let gt = random_cine(&mut r, (3, 1, 8, 8), DomainTag::Image);
        let k_full = fft2c(&gt).map_err(|e| e.to_string())?;
        let k_us = cinerec::sampling::undersample(&k_full, &m).map_err(|e| e.to_string())?;
        let k_in = complex_to_channels::<f64>(&k_us).map_err(|e| e.to_string())?;
        let target = complex_to_channels::<f64>(&gt).map_err(|e| e.to_string())?;
        let cfg = LossConfig { ssim_weight: 0.1, window: 3, ..LossConfig::default() };
        let arch_c = arch.clone();
        cases.push(GradCase {
            name: "end_to_end".into(),
            check: model.tensors.iter().map(|p| p.numel() <= 200).collect(),
            params: model.tensors.clone(),
            build: Box::new(move |tape, ids| {
                let (img, _) = forward_on_tape(tape, &arch_c, ids, &k_in, &m)
                    .expect("forward shapes are valid");
                loss_on_tape(tape, img, &target, &cfg).expect("loss shapes match")
            }),
            // smaller step: at 1e-5 some perturbations cross ReLU kinks
            h: 1e-7,
            tol: 1e-3,
        });
    }

    let n_cases = cases.len();
    let mut coords = 0;
    for case in &cases {
        coords += run_grad_case(case, &mut rng)?;
    }
    let dt = t0.elapsed().as_secs_f64();
    if dt >= 60.0 {
        return Err(format!("runtime {dt:.1}s >= 60s budget"));
    }
    Ok(format!("{n_cases} configs, {coords} coordinates checked"))
}

// ------------------------------------------------------- criterion 3

/// For any model (here: fully randomized weights) and any mask, the terminal
/// k-space of the forward pass equals k_acq bitwise at sampled locations,
/// and fft2c of the image output agrees there at 1e-12 relative (the
/// floating-point ceiling of the recomputed form).
fn criterion_3() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for trial in 0..10u64 {
        let t = 2 + (trial % 3) as usize;
        let (h, w) = [(8, 8), (8, 16), (16, 8)][(trial % 3) as usize];
        let arch = ArchConfig {
            n_iters: 1 + trial as usize % 3,
            n_bcrnn_layers: 2,
            feat_channels: 3,
            hidden_channels: 2,
            ..ArchConfig::default()
        };
        let mut model = ModelParams::<f64>::init(&arch, trial).map_err(|e| e.to_string())?;
        for tensor in &mut model.tensors {
            for v in &mut tensor.data {
                *v = rng.gen::<f64>() - 0.5; // stand-in for arbitrary trained weights
            }
        }
        let m = generate_lh_mask(w, t, 2.0 + (trial % 3) as f64, 1, 2.0, 70 + trial)
            .map_err(|e| e.to_string())?;
        let k_acq = random_cine(&mut rng, (t, 1, h, w), DomainTag::Kspace);
        let (img, k_dc) = forward(&model, &k_acq, &m).map_err(|e| e.to_string())?;
        let k_re = fft2c(&img).map_err(|e| e.to_string())?;
        for f in 0..t {
            let acq = k_acq.slice(f, 0);
            let dc = k_dc.slice(f, 0);
            let re = k_re.slice(f, 0);
            for hi in 0..h {
                for wi in 0..w {
                    if !m.get(f, wi) {
                        continue;
                    }
                    let i = hi * w + wi;
                    if acq[i].re.to_bits() != dc[i].re.to_bits()
                        || acq[i].im.to_bits() != dc[i].im.to_bits()
                    {
                        return Err(format!(
                            "trial {trial}: terminal k-space differs bitwise at (t={f},h={hi},w={wi})"
                        ));
                    }
                    let err = (re[i] - acq[i]).norm() / acq[i].norm().max(1e-300);
                    if err > 1e-12 {
                        return Err(format!(
                            "trial {trial}: recomputed fft2c off by {err:.2e} at (t={f},h={hi},w={wi})"
                        ));
                    }
                }
            }
        }
    }
    Ok("10 random instances, terminal k-space bitwise, recomputed fft2c <= 1e-12".into())
}

// ------------------------------------------------------- criterion 4

/// 180-line, 12x, 4-ACS masks: exactly 15 lines/frame, effective
/// acceleration exactly 12.0, ACS always sampled, and within each stratum any
/// window of min(len, T) consecutive frames covers distinct lines.
fn criterion_4() -> Result<String, String> {
    let (w_pe, r, n_acs) = (180usize, 12.0f64, 4usize);
    let (acs, strata) = stratify(w_pe, r, n_acs, 2.0).map_err(|e| e.to_string())?;
    if acs.len() != n_acs {
        return Err(format!("ACS block has {} lines, expected {n_acs}", acs.len()));
    }
    let mut windows_checked = 0usize;
    for seed in 0..20u64 {
        for t in [12usize, 30] {
            let m = generate_lh_mask(w_pe, t, r, n_acs, 2.0, seed).map_err(|e| e.to_string())?;
            for f in 0..t {
                let lines = m.lines_in_frame(f);
                if lines != 15 {
                    return Err(format!("seed {seed}, frame {f}: {lines} lines, expected 15"));
                }
                for k in acs.clone() {
                    if !m.get(f, k) {
                        return Err(format!("seed {seed}, frame {f}: ACS line {k} unsampled"));
                    }
                }
            }
            let eff = effective_acceleration(&m).map_err(|e| e.to_string())?;
            if eff != 12.0 {
                return Err(format!("seed {seed}: effective acceleration {eff} != 12.0"));
            }
            // Latin coverage: exactly one line per stratum per frame, and any
            // min(len, t) consecutive frames pick distinct lines
            for (si, stratum) in strata.iter().enumerate() {
                let picks: Vec<usize> = (0..t)
                    .map(|f| {
                        let hits: Vec<usize> =
                            stratum.iter().copied().filter(|&k| m.get(f, k)).collect();
                        if hits.len() == 1 { Ok(hits[0]) } else {
                            Err(format!(
                                "seed {seed}, frame {f}, stratum {si}: {} lines sampled",
                                hits.len()
                            ))
                        }
                    })
                    .collect::<Result<_, _>>()?;
                let win = stratum.len().min(t);
                for start in 0..=(t - win) {
                    let mut seen = picks[start..start + win].to_vec();
                    seen.sort_unstable();
                    seen.dedup();
                    if seen.len() != win {
                        return Err(format!(
                            "seed {seed}, stratum {si}: window at {start} repeats a line"
                        ));
                    }
                    windows_checked += 1;
                }
            }
        }
    }
    Ok(format!(
        "20 seeds x (T=12, T=30): 15 lines/frame, acceleration 12.0, {} Latin windows",
        windows_checked
    ))
}

// -------------------------------------------------- frozen desk instance

/// The frozen desk phantom of criteria 5 and 7: default 64x64, T=12,
/// 8 coils, 12x, noise 0.01, everything seeded with 7.
fn desk_instance() -> Result<(ComplexCine, SamplingMask, ComplexCine), String> {
    let p = PhantomConfig::default();
    let gt = generate_cine(&p).map_err(|e| e.to_string())?;
    let sens = generate_coil_maps(p.h, p.w, p.n_coils, 7).map_err(|e| e.to_string())?;
    let m = generate_lh_mask(p.w, p.t, 12.0, 4, 2.0, 7).map_err(|e| e.to_string())?;
    let (_, k_us) =
        simulate_acquisition(&gt, &sens, &m, p.noise_sigma, 7).map_err(|e| e.to_string())?;
    Ok((gt, m, k_us))
}

// ------------------------------------------------------- criterion 5

/// ADMM on the frozen desk phantom: the objective decreases from iteration 1
/// to 100 and CS beats zero-filled by >= 3 dB PSNR.
fn criterion_5() -> Result<String, String> {
    let t0 = Instant::now();
    let (gt, m, k_us) = desk_instance()?;
    let reference = rss_combine(&gt);
    let zf = rss_combine(&ifft2c(&k_us).map_err(|e| e.to_string())?);
    let sens_est = estimate_sensitivities(&k_us, &m, 4).map_err(|e| e.to_string())?;
    let cfg = CsConfig { max_admm_iters: 100, ..CsConfig::default() };
    let (cs, trace) = admm_recon(&k_us, &m, &sens_est, &cfg).map_err(|e| e.to_string())?;
    if trace.objective.len() != 100 {
        return Err(format!("expected 100 objective entries, got {}", trace.objective.len()));
    }
    let (first, last) = (trace.objective[0], trace.objective[99]);
    if !(last < first) {
        return Err(format!("objective did not decrease: iter 1 = {first:.6e}, iter 100 = {last:.6e}"));
    }
    let p_zf = psnr(&zf, &reference, None).map_err(|e| e.to_string())?;
    let p_cs = psnr(&rss_combine(&cs), &reference, None).map_err(|e| e.to_string())?;
    if p_cs < p_zf + 3.0 {
        return Err(format!("PSNR(cs) {p_cs:.2} < PSNR(zf) {p_zf:.2} + 3 dB"));
    }
    let dt = t0.elapsed().as_secs_f64();
    if dt >= 300.0 {
        return Err(format!("runtime {dt:.1}s >= 5 min budget"));
    }
    Ok(format!(
        "objective {first:.4e} -> {last:.4e}, PSNR zf {p_zf:.2} dB vs cs {p_cs:.2} dB"
    ))
}

// ------------------------------------------------------- criterion 6

/// Frozen desk training recipe shared by the acceptance run and the
/// determinism probe: k=16, n_iters=3, 10 epochs, seed 7.
fn frozen_train_config() -> (DatasetConfig, ArchConfig, TrainConfig) {
    let data = DatasetConfig { n_train: 8, n_test: 2, ..DatasetConfig::default() };
    let arch = ArchConfig::desk();
    let mut tc = TrainConfig { epochs: 10, lr: 3e-3, seed: 7, ..TrainConfig::default() };
    tc.loss.ssim_weight = 0.0; // pure-MSE training converges fastest here
    (data, arch, tc)
}

fn criterion_6() -> Result<String, String> {
    let t0 = Instant::now();
    let (data_cfg, arch, tc) = frozen_train_config();

    let mut samples: Vec<TrainSample> = Vec::new();
    for i in 0..data_cfg.n_train {
        let inst = generate_instance(&data_cfg, i).map_err(|e| e.to_string())?;
        samples.extend(per_coil_samples(&inst).map_err(|e| e.to_string())?);
    }
    let (model, losses) = train(&samples, &arch, &tc).map_err(|e| e.to_string())?;
    let train_s = t0.elapsed().as_secs_f64();

    // determinism: one epoch on the first instance's samples, twice
    let short = TrainConfig { epochs: 1, ..tc.clone() };
    let (m1, _) = train(&samples[..8], &arch, &short).map_err(|e| e.to_string())?;
    let (m2, _) = train(&samples[..8], &arch, &short).map_err(|e| e.to_string())?;
    for (a, b) in m1.tensors.iter().zip(&m2.tensors) {
        for (x, y) in a.data.iter().zip(&b.data) {
            if x.to_bits() != y.to_bits() {
                return Err("repeated training run is not bitwise identical".into());
            }
        }
    }

    // held-out quality vs zero-filled
    let (mut d_psnr, mut d_ssim) = (0.0, 0.0);
    let n_test = data_cfg.n_test;
    for i in data_cfg.n_train..data_cfg.n_train + n_test {
        let inst = generate_instance(&data_cfg, i).map_err(|e| e.to_string())?;
        let reference = rss_combine(&inst.gt);
        let zf = rss_combine(&ifft2c(&inst.k_us).map_err(|e| e.to_string())?);
        let (crnn, _) = recon_crnn(&inst.k_us, &inst.mask, &model).map_err(|e| e.to_string())?;
        d_psnr += psnr(&crnn, &reference, None).map_err(|e| e.to_string())?
            - psnr(&zf, &reference, None).map_err(|e| e.to_string())?;
        d_ssim += ssim(&crnn, &reference, None).map_err(|e| e.to_string())?.1
            - ssim(&zf, &reference, None).map_err(|e| e.to_string())?.1;
    }
    d_psnr /= n_test as f64;
    d_ssim /= n_test as f64;

    if train_s >= 1800.0 {
        return Err(format!("training took {train_s:.0}s >= 30 min budget"));
    }
    let detail = format!(
        "{} steps in {train_s:.0}s, loss {:.5} -> {:.5}, held-out dPSNR {d_psnr:+.2} dB, dSSIM {d_ssim:+.3}",
        losses.len(),
        losses.first().unwrap_or(&f64::NAN),
        losses.last().unwrap_or(&f64::NAN),
    );
    if d_psnr < 5.0 {
        return Err(format!("{detail}; dPSNR below +5 dB"));
    }
    if d_ssim <= 0.1 {
        return Err(format!("{detail}; dSSIM not above +0.1"));
    }
    Ok(detail)
}

// ------------------------------------------------------- criterion 7

/// Network inference at least 2x faster than 100-iteration ADMM on the same
/// desk data. The comparison is weight-independent, so an initialized model
/// stands in for a trained one.
fn criterion_7() -> Result<String, String> {
    let (_, m, k_us) = desk_instance()?;
    let model = ModelParams::<f32>::init(&ArchConfig::desk(), 7).map_err(|e| e.to_string())?;
    let sens_est = estimate_sensitivities(&k_us, &m, 4).map_err(|e| e.to_string())?;
    let cfg = CsConfig { max_admm_iters: 100, ..CsConfig::default() };

    let t0 = Instant::now();
    let _ = recon_crnn(&k_us, &m, &model).map_err(|e| e.to_string())?;
    let t_crnn = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let _ = admm_recon(&k_us, &m, &sens_est, &cfg).map_err(|e| e.to_string())?;
    let t_cs = t1.elapsed().as_secs_f64();

    if t_cs < 2.0 * t_crnn {
        return Err(format!("cs {t_cs:.2}s is not 2x slower than crnn {t_crnn:.2}s"));
    }
    Ok(format!("crnn {t_crnn:.2}s vs cs {t_cs:.2}s ({:.1}x)", t_cs / t_crnn))
}

// ------------------------------------------------------- criterion 8

fn cine_bits(x: &ComplexCine) -> Vec<u64> {
    x.data.iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]).collect()
}

fn dir_bytes(dir: &std::path::Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut entries: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let e = e.map_err(|e| e.to_string())?;
            let bytes = std::fs::read(e.path()).map_err(|e| e.to_string())?;
            Ok((e.file_name().to_string_lossy().into_owned(), bytes))
        })
        .collect::<Result<_, String>>()?;
    entries.sort();
    Ok(entries)
}

/// Every pipeline stage re-run with the same config and seed produces
/// bitwise-identical output.
fn criterion_8() -> Result<String, String> {
    let mut stages: Vec<&str> = Vec::new();

    // phantom, coil maps, acquisition, mask
    let p = PhantomConfig { h: 16, w: 16, t: 4, n_coils: 2, ..PhantomConfig::default() };
    let gt = generate_cine(&p).map_err(|e| e.to_string())?;
    if cine_bits(&gt) != cine_bits(&generate_cine(&p).map_err(|e| e.to_string())?) {
        return Err("generate_cine differs across runs".into());
    }
    stages.push("phantom");
    let sens = generate_coil_maps(16, 16, 2, 5).map_err(|e| e.to_string())?;
    let sens2 = generate_coil_maps(16, 16, 2, 5).map_err(|e| e.to_string())?;
    if sens.data.iter().zip(&sens2.data).any(|(a, b)| {
        a.re.to_bits() != b.re.to_bits() || a.im.to_bits() != b.im.to_bits()
    }) {
        return Err("generate_coil_maps differs across runs".into());
    }
    stages.push("coil maps");
    let m = generate_lh_mask(16, 4, 4.0, 2, 2.0, 5).map_err(|e| e.to_string())?;
    let m2 = generate_lh_mask(16, 4, 4.0, 2, 2.0, 5).map_err(|e| e.to_string())?;
    if m != m2 {
        return Err("generate_lh_mask differs across runs".into());
    }
    stages.push("mask");
    let (_, k_us) = simulate_acquisition(&gt, &sens, &m, 0.01, 5).map_err(|e| e.to_string())?;
    let (_, k_us2) = simulate_acquisition(&gt, &sens, &m, 0.01, 5).map_err(|e| e.to_string())?;
    if cine_bits(&k_us) != cine_bits(&k_us2) {
        return Err("simulate_acquisition differs across runs".into());
    }
    stages.push("acquisition");

    // dataset directory layout
    let data_cfg = DatasetConfig {
        phantom: p.clone(),
        n_train: 1,
        n_test: 1,
        accel: 4.0,
        n_acs: 2,
        ..DatasetConfig::default()
    };
    let d1 = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d2 = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_dataset(d1.path(), &data_cfg).map_err(|e| e.to_string())?;
    write_dataset(d2.path(), &data_cfg).map_err(|e| e.to_string())?;
    if dir_bytes(d1.path())? != dir_bytes(d2.path())? {
        return Err("dataset files differ across runs".into());
    }
    stages.push("dataset");

    // CS reconstruction
    let sens_est = estimate_sensitivities(&k_us, &m, 2).map_err(|e| e.to_string())?;
    let cfg = CsConfig { max_admm_iters: 5, ..CsConfig::default() };
    let (cs1, _) = admm_recon(&k_us, &m, &sens_est, &cfg).map_err(|e| e.to_string())?;
    let (cs2, _) = admm_recon(&k_us, &m, &sens_est, &cfg).map_err(|e| e.to_string())?;
    if cine_bits(&cs1) != cine_bits(&cs2) {
        return Err("admm_recon differs across runs".into());
    }
    stages.push("cs recon");

    // training + checkpoint files
    let arch = ArchConfig { n_iters: 1, feat_channels: 4, ..ArchConfig::default() };
    let inst = generate_instance(&data_cfg, 0).map_err(|e| e.to_string())?;
    let samples = per_coil_samples(&inst).map_err(|e| e.to_string())?;
    let tc = TrainConfig { epochs: 1, ..TrainConfig::default() };
    let (w1, l1) = train(&samples, &arch, &tc).map_err(|e| e.to_string())?;
    let (w2, l2) = train(&samples, &arch, &tc).map_err(|e| e.to_string())?;
    if l1 != l2
        || w1.tensors.iter().zip(&w2.tensors).any(|(a, b)| {
            a.data.iter().zip(&b.data).any(|(x, y)| x.to_bits() != y.to_bits())
        })
    {
        return Err("training differs across runs".into());
    }
    let c1 = tempfile::tempdir().map_err(|e| e.to_string())?;
    let c2 = tempfile::tempdir().map_err(|e| e.to_string())?;
    save_checkpoint(c1.path().join("model"), &w1).map_err(|e| e.to_string())?;
    save_checkpoint(c2.path().join("model"), &w2).map_err(|e| e.to_string())?;
    if dir_bytes(c1.path())? != dir_bytes(c2.path())? {
        return Err("checkpoint files differ across runs".into());
    }
    let reloaded = load_checkpoint(c1.path().join("model")).map_err(|e| e.to_string())?;
    if reloaded.param_count() != w1.param_count() {
        return Err("checkpoint roundtrip changed the parameter count".into());
    }
    stages.push("training+checkpoint");

    // network recon and metrics
    let (r1, _) = recon_crnn(&k_us, &m, &w1).map_err(|e| e.to_string())?;
    let (r2, _) = recon_crnn(&k_us, &m, &w1).map_err(|e| e.to_string())?;
    let bits = |x: &RealImageSequence| -> Vec<u64> {
        (0..x.dims().0).flat_map(|f| x.frame(f).iter().map(|v| v.to_bits())).collect::<Vec<_>>()
    };
    if bits(&r1) != bits(&r2) {
        return Err("recon_crnn differs across runs".into());
    }
    let reference = rss_combine(&inst.gt);
    let pa = psnr(&r1, &reference, None).map_err(|e| e.to_string())?;
    let pb = psnr(&r2, &reference, None).map_err(|e| e.to_string())?;
    if pa.to_bits() != pb.to_bits() {
        return Err("psnr differs across runs".into());
    }
    stages.push("crnn recon+metrics");

    // montages
    let g1 = tempfile::tempdir().map_err(|e| e.to_string())?;
    let g2 = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_montages(g1.path(), &[&r1, &reference]).map_err(|e| e.to_string())?;
    write_montages(g2.path(), &[&r1, &reference]).map_err(|e| e.to_string())?;
    if dir_bytes(g1.path())? != dir_bytes(g2.path())? {
        return Err("montage files differ across runs".into());
    }
    stages.push("montage");

    Ok(format!("stages bitwise-identical: {}", stages.join(", ")))
}
