//! Acceptance suite: every criterion runs in order inside one test so the
//! timing checks never share the CPU with each other, and each prints one
//! PASS/FAIL line.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use fwin_core::attention::{full_self_attention, window_cross_attention, window_self_attention, AttentionConfig, ProjectionSet};
use fwin_core::data::synthetic::{lagged_driver_frame, sd_like_frame, DriverTask};
use fwin_core::data::{normalize, prepare, split_6_2_2, NormScope, WindowShape};
use fwin_core::fft::fourier_mix;
use fwin_core::gradcheck::{grad_check, param_grad_check};
use fwin_core::layers::Linear;
use fwin_core::model::{FWin, FWinConfig, Task};
use fwin_core::training::{evaluate, evaluate_detailed, lr_schedule, metrics, multi_run, train_with, LrMode, TrainPlan};
use fwin_core::{ParamStore, Result as CoreResult, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = std::result::Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl Into<String>) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

// ---------------------------------------------------------------- 1

const GRAD_EPS: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-5;

/// Contracts `y` with fixed random weights so every output coordinate
/// contributes a distinct amount to the scalar loss.
fn contract(t: &mut Tape<'static>, y: Var, seed: u64) -> CoreResult<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = t.constant(random(&mut rng, t.shape(y)));
    let p = t.mul(y, w)?;
    Ok(t.sum_all(p))
}

type Primitive = Box<dyn Fn(&mut Tape<'static>, Var) -> CoreResult<Var>>;

fn primitive_suite() -> Vec<(&'static str, Tensor, Primitive)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = random(&mut rng, &[4, 5]);
    let b = random(&mut rng, &[5, 3]);
    let c = random(&mut rng, &[4, 5]);
    let bias = random(&mut rng, &[5]);
    let gamma = random(&mut rng, &[5]);
    let beta = random(&mut rng, &[5]);
    let seq = random(&mut rng, &[7, 5]);
    let scores = random(&mut rng, &[4, 5]).scale(3.0);

    let konst = |t: &Tensor| {
        let t = t.clone();
        move |tape: &mut Tape<'static>| tape.constant(t.clone())
    };
    let (kb, kc, kbias, kgamma, kbeta, ka) = (konst(&b), konst(&c), konst(&bias), konst(&gamma), konst(&beta), konst(&a));
    let (ka2, ka3, ka4, kc2, kc3) = (konst(&a), konst(&a), konst(&a), konst(&c), konst(&c));
    let (kgamma2, kbeta2) = (konst(&gamma), konst(&beta));
    let (kbeta3, kgamma3) = (konst(&beta), konst(&gamma));

    vec![
        ("matmul/lhs", a.clone(), Box::new(move |t, x| { let k = kb(t); let y = t.matmul(x, k)?; contract(t, y, 1) })),
        ("matmul/rhs", b.clone(), Box::new(move |t, x| { let k = ka(t); let y = t.matmul(k, x)?; contract(t, y, 2) })),
        ("add", a.clone(), Box::new(move |t, x| { let k = kc(t); let y = t.add(x, k)?; contract(t, y, 3) })),
        ("sub/lhs", a.clone(), Box::new(move |t, x| { let k = kc2(t); let y = t.sub(x, k)?; contract(t, y, 4) })),
        ("sub/rhs", c.clone(), Box::new(move |t, x| { let k = ka2(t); let y = t.sub(k, x)?; contract(t, y, 5) })),
        ("mul", a.clone(), Box::new(move |t, x| { let k = kc3(t); let y = t.mul(x, k)?; contract(t, y, 6) })),
        ("mul/self", a.clone(), Box::new(|t, x| { let y = t.mul(x, x)?; contract(t, y, 7) })),
        ("scale", a.clone(), Box::new(|t, x| { let y = t.scale(x, -2.5); contract(t, y, 8) })),
        ("add_row/x", a.clone(), Box::new(move |t, x| { let k = kbias(t); let y = t.add_row(x, k)?; contract(t, y, 9) })),
        ("add_row/bias", bias.clone(), Box::new(move |t, x| { let k = ka3(t); let y = t.add_row(k, x)?; contract(t, y, 10) })),
        ("elu", a.scale(2.0), Box::new(|t, x| { let y = t.elu(x); contract(t, y, 11) })),
        ("gelu", a.scale(3.0), Box::new(|t, x| { let y = t.gelu(x); contract(t, y, 12) })),
        ("relu", a.clone(), Box::new(|t, x| { let y = t.relu(x); contract(t, y, 13) })),
        ("softmax_rows", scores, Box::new(|t, x| { let y = t.softmax_rows(x)?; contract(t, y, 14) })),
        ("sum/axis0", a.clone(), Box::new(|t, x| { let y = t.sum(x, 0, false)?; contract(t, y, 15) })),
        ("sum/axis1", a.clone(), Box::new(|t, x| { let y = t.sum(x, 1, true)?; contract(t, y, 16) })),
        ("mean/axis1", a.clone(), Box::new(|t, x| { let y = t.mean(x, 1, false)?; contract(t, y, 17) })),
        ("max/axis0", a.clone(), Box::new(|t, x| { let y = t.max(x, 0, false)?; contract(t, y, 18) })),
        ("sum_all", a.clone(), Box::new(|t, x| { let y = t.sum_all(x); let z = t.mul(y, y)?; Ok(z) })),
        ("mean_all", a.clone(), Box::new(|t, x| { let y = t.mean_all(x); let z = t.mul(y, y)?; Ok(z) })),
        ("transpose", a.clone(), Box::new(|t, x| { let y = t.transpose(x); contract(t, y, 19) })),
        ("slice_rows", a.clone(), Box::new(|t, x| { let y = t.slice_rows(x, 1, 3)?; contract(t, y, 20) })),
        ("slice_cols", a.clone(), Box::new(|t, x| { let y = t.slice_cols(x, 2, 5)?; contract(t, y, 21) })),
        ("concat_rows", a.clone(), Box::new(move |t, x| { let k = ka4(t); let y = t.concat_rows(&[k, x, x])?; contract(t, y, 22) })),
        ("concat_cols", a.clone(), Box::new(|t, x| { let h = t.slice_cols(x, 0, 2)?; let y = t.concat_cols(&[x, h])?; contract(t, y, 23) })),
        ("pad_rows", a.clone(), Box::new(|t, x| { let y = t.pad_rows(x, 2, 1)?; contract(t, y, 24) })),
        ("layer_norm/x", seq.clone(), Box::new(move |t, x| { let (g, b) = (kgamma(t), kbeta(t)); let y = t.layer_norm(x, g, b)?; contract(t, y, 25) })),
        ("layer_norm/gamma", gamma.clone(), Box::new({ let s = seq.clone(); move |t, g| { let x = t.constant(s.clone()); let b = kbeta2(t); let y = t.layer_norm(x, g, b)?; contract(t, y, 26) } })),
        ("layer_norm/beta", beta.clone(), Box::new({ let s = seq.clone(); move |t, b| { let x = t.constant(s.clone()); let g = kgamma2(t); let y = t.layer_norm(x, g, b)?; contract(t, y, 27) } })),
        ("layer_norm/chain", seq.clone(), Box::new(move |t, x| { let (g, b) = (kgamma3(t), kbeta3(t)); let y = t.layer_norm(x, g, b)?; let y = t.mul(y, y)?; contract(t, y, 28) })),
        ("fourier_mix", seq.clone(), Box::new(|t, x| { let y = t.fourier_mix(x)?; contract(t, y, 29) })),
        ("fourier_mix/chain", seq.clone(), Box::new(|t, x| { let y = t.fourier_mix(x)?; let y = t.gelu(y); contract(t, y, 30) })),
        ("max_pool_time", seq, Box::new(|t, x| { let y = t.max_pool_time(x)?; contract(t, y, 31) })),
    ]
}

// Dropout in training mode is linear in its input once the mask is fixed by
// the tape seed; checked with its own central difference.
fn dropout_check(x: &Tensor) -> f64 {
    let f = |x: &Tensor| -> (f64, Tensor) {
        let mut t = Tape::new().training(99);
        let v = t.input(x.clone());
        let y = t.dropout(v, 0.3).unwrap();
        let loss = contract(&mut t, y, 32).unwrap();
        let g = t.backward(loss).unwrap().wrt(v).cloned().unwrap();
        (t.value(loss).item(), g)
    };
    let (_, analytic) = f(x);
    let mut worst = 0.0f64;
    for i in 0..x.numel() {
        let mut p = x.data().to_vec();
        let mut m = p.clone();
        p[i] += GRAD_EPS;
        m[i] -= GRAD_EPS;
        let fp = f(&Tensor::new(x.shape(), p).unwrap()).0;
        let fm = f(&Tensor::new(x.shape(), m).unwrap()).0;
        let numeric = (fp - fm) / (2.0 * GRAD_EPS);
        worst = worst.max((analytic.data()[i] - numeric).abs() / analytic.data()[i].abs().max(1.0));
    }
    worst
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut worst = (0.0f64, String::new());
    let mut note = |name: &str, err: f64| {
        if err >= worst.0 {
            worst = (err, name.to_string());
        }
    };
    let suite = primitive_suite();
    let count = suite.len() + 1;
    for (name, x, f) in suite {
        note(name, grad_check(f, &x, GRAD_EPS).map_err(|e| format!("{name}: {e}"))?);
    }
    note("dropout", dropout_check(&random(&mut ChaCha8Rng::seed_from_u64(12), &[4, 6])));

    // full shrunken model, both tasks, on a real sample
    let frame = sd_like_frame(200, 3).map_err(|e| e.to_string())?;
    let mut coords = 0;
    for task in [Task::Ms, Task::Mm] {
        let cfg = FWinConfig { task, ..FWinConfig::shrunken() };
        let shape = WindowShape { seq_len: cfg.seq_len, horizon: cfg.horizon, label_len: cfg.label_len };
        let p = prepare(&frame, NormScope::Full, task, shape).map_err(|e| e.to_string())?;
        let model = FWin::new(cfg, 5).map_err(|e| e.to_string())?;
        let sample = &p.samples.train[17];
        let report = param_grad_check(model.params(), |t| model.loss(t, sample), GRAD_EPS).map_err(|e| e.to_string())?;
        coords += report.coordinates;
        note(&format!("model[{task}]:{}", report.worst_param), report.max_rel_error);
    }
    let elapsed = start.elapsed();
    let msg = format!(
        "{count} primitives + {coords} model coordinates, worst {:.2e} at {}, {:.1}s",
        worst.0,
        worst.1,
        elapsed.as_secs_f64()
    );
    ensure(worst.0 <= GRAD_TOL, msg.clone())?;
    ensure(elapsed < Duration::from_secs(60), msg.clone())?;
    Ok(msg)
}

// ---------------------------------------------------------------- 2

// Plain-tensor multi-head attention over whole sequences, sharing only the
// projection weights with the library.
fn reference_attention(store: &ParamStore, proj: &ProjectionSet, xq: &Tensor, xkv: &Tensor, heads: usize, causal: bool) -> Tensor {
    let lin = |l: &Linear, x: &Tensor| x.matmul(store.value(l.weight)).unwrap().add_row(store.value(l.bias)).unwrap();
    let (q, k, v) = (lin(&proj.query, xq), lin(&proj.key, xkv), lin(&proj.value, xkv));
    let dh = q.cols() / heads;
    let mut outs = Vec::new();
    for h in 0..heads {
        let (qh, kh, vh) = (
            q.slice_cols(h * dh, (h + 1) * dh).unwrap(),
            k.slice_cols(h * dh, (h + 1) * dh).unwrap(),
            v.slice_cols(h * dh, (h + 1) * dh).unwrap(),
        );
        let mut s = qh.matmul(&kh.transpose()).unwrap().scale(1.0 / (dh as f64).sqrt()).into_data();
        if causal {
            let n = kh.rows();
            for (idx, val) in s.iter_mut().enumerate() {
                if idx % n > idx / n {
                    *val = f64::NEG_INFINITY;
                }
            }
        }
        let s = Tensor::new(&[qh.rows(), kh.rows()], s).unwrap();
        outs.push(s.softmax_rows().unwrap().matmul(&vh).unwrap());
    }
    let refs: Vec<&Tensor> = outs.iter().collect();
    lin(&proj.output, &Tensor::concat_cols(&refs).unwrap())
}

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut store = ParamStore::new();
    let d = 16;
    let proj = ProjectionSet::new(&mut store, "attn", d, &mut rng).unwrap();
    for p in store.iter_mut() {
        if p.name.ends_with("bias") {
            p.value = random(&mut rng, p.value.shape()).scale(0.1);
        }
    }
    let mut worst = 0.0f64;
    for len in [4, 12, 36] {
        let x = random(&mut rng, &[len, d]);
        let enc = random(&mut rng, &[len, d]);
        for causal in [false, true] {
            let cfg = AttentionConfig { d_model: d, n_heads: 4, window: len, causal, cross_windows: 1, dropout: 0.0 };
            let mut tape = Tape::with_params(&store);
            let (xv, ev) = (tape.input(x.clone()), tape.input(enc.clone()));
            let w = window_self_attention(&mut tape, &proj, xv, &cfg).unwrap();
            worst = worst.max(tape.value(w).max_abs_diff(&reference_attention(&store, &proj, &x, &x, 4, causal)));
            let c = window_cross_attention(&mut tape, &proj, xv, ev, &cfg).unwrap();
            worst = worst.max(tape.value(c).max_abs_diff(&reference_attention(&store, &proj, &x, &enc, 4, false)));
        }
    }
    let msg = format!("self and cross, L in {{4,12,36}}, max diff {worst:.2e}");
    ensure(worst <= 1e-10, msg.clone())?;
    Ok(msg)
}

// ---------------------------------------------------------------- 3

// O(N^2) DFT with a twiddle table indexed by (k t) mod n.
fn naive_dft(re: &[f64], im: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = re.len();
    let (cos, sin): (Vec<f64>, Vec<f64>) = (0..n)
        .map(|j| {
            let a = -2.0 * PI * j as f64 / n as f64;
            (a.cos(), a.sin())
        })
        .unzip();
    let mut out = (vec![0.0; n], vec![0.0; n]);
    for k in 0..n {
        let (mut sr, mut si) = (0.0, 0.0);
        for t in 0..n {
            let j = (k * t) % n;
            sr += re[t] * cos[j] - im[t] * sin[j];
            si += re[t] * sin[j] + im[t] * cos[j];
        }
        out.0[k] = sr;
        out.1[k] = si;
    }
    out
}

fn mix_oracle(x: &Tensor) -> Tensor {
    let (l, d) = (x.rows(), x.cols());
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..l).map(|i| naive_dft(x.row(i), &vec![0.0; d])).collect();
    let mut out = vec![0.0; l * d];
    for j in 0..d {
        let re: Vec<f64> = rows.iter().map(|r| r.0[j]).collect();
        let im: Vec<f64> = rows.iter().map(|r| r.1[j]).collect();
        for (i, v) in naive_dft(&re, &im).0.into_iter().enumerate() {
            out[i * d + j] = v;
        }
    }
    Tensor::new(&[l, d], out).unwrap()
}

fn criterion_3() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let lengths = [1, 2, 9, 12, 18, 36, 42, 48, 512];
    let mut worst = 0.0f64;
    for &n in &lengths {
        for shape in [[n, 12], [12, n], [n, n]] {
            let x = random(&mut rng, &shape);
            worst = worst.max(fourier_mix(&x).unwrap().max_abs_diff(&mix_oracle(&x)));
        }
    }
    let mut adjoint = 0.0f64;
    for shape in [[36, 512], [42, 512], [18, 16], [9, 48], [1, 2]] {
        let x = random(&mut rng, &shape);
        let y = random(&mut rng, &shape);
        let lhs = fourier_mix(&x).unwrap().dot(&y).unwrap();
        let rhs = x.dot(&fourier_mix(&y).unwrap()).unwrap();
        adjoint = adjoint.max((lhs - rhs).abs());
    }
    let msg = format!("{} lengths, oracle diff {worst:.2e}, adjoint gap {adjoint:.2e} on 5 pairs", lengths.len());
    ensure(worst <= 1e-9 && adjoint <= 1e-9, msg.clone())?;
    Ok(msg)
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Check {
    let frame = sd_like_frame(1000, 4).map_err(|e| e.to_string())?;
    let mut seen = Vec::new();
    for n in [24, 36, 48, 60] {
        let cfg = FWinConfig { horizon: n, ..FWinConfig::default() };
        ensure(
            (cfg.d_model, cfg.n_heads, cfg.enc_layers, cfg.dec_layers, cfg.window, cfg.cross_windows, cfg.seq_len)
                == (512, 8, 2, 1, 12, 3, 36),
            "default hyperparameters drifted",
        )?;
        let shape = WindowShape { seq_len: cfg.seq_len, horizon: n, label_len: cfg.label_len };
        let p = prepare(&frame, NormScope::Full, Task::Ms, shape).map_err(|e| e.to_string())?;
        let model = FWin::new(cfg.clone(), 0).map_err(|e| e.to_string())?;
        let mut tape = Tape::with_params(model.params());
        let tr = model.forward_trace(&mut tape, &p.samples.train[0]).map_err(|e| e.to_string())?;
        let (enc, dec, out) = (tape.shape(tr.encoder_map).to_vec(), tape.shape(tr.decoder_input).to_vec(), tape.shape(tr.forecast).to_vec());
        ensure(enc == [18, 512], format!("n={n}: encoder map {enc:?}"))?;
        ensure(dec == [cfg.label_len + n, 512], format!("n={n}: decoder input {dec:?}"))?;
        ensure(out == [n, 1], format!("n={n}: output {out:?}"))?;
        if n == 24 {
            ensure(dec == [42, 512], format!("decoder input {dec:?}"))?;
        }
        seen.push(format!("n={n}:{out:?}"));
    }
    Ok(format!("encoder [18, 512], decoder input [18+n, 512], outputs {}", seen.join(" ")))
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut store = ParamStore::new();
    let proj = ProjectionSet::new(&mut store, "attn", 32, &mut rng).unwrap();
    let cfg = AttentionConfig { d_model: 32, n_heads: 4, window: 12, causal: true, cross_windows: 3, dropout: 0.0 };
    let run = |x: &Tensor| {
        let mut tape = Tape::with_params(&store);
        let v = tape.input(x.clone());
        let y = window_self_attention(&mut tape, &proj, v, &cfg).unwrap();
        tape.value(y).clone()
    };
    let len = 42;
    let x = random(&mut rng, &[len, 32]);
    let base = run(&x);
    let mut probes = Vec::new();
    for _ in 0..10 {
        let t = rng.gen_range(0..len - 1);
        let mut moved = x.clone().into_data();
        for v in moved.iter_mut().skip((t + 1) * 32) {
            *v += rng.gen_range(-5.0..5.0);
        }
        let out = run(&Tensor::new(&[len, 32], moved).unwrap());
        let past_same = base.data()[..(t + 1) * 32]
            .iter()
            .zip(&out.data()[..(t + 1) * 32])
            .all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(past_same, format!("rows 0..={t} changed after perturbing the future"))?;
        // the probe has teeth: the perturbed row itself must move
        ensure(out.row(t + 1) != base.row(t + 1), format!("row {} did not react", t + 1))?;
        probes.push(t);
    }
    Ok(format!("10 future perturbations at t={probes:?}, past outputs bit-identical"))
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Check {
    let raw = sd_like_frame(1000, 0).map_err(|e| e.to_string())?;
    ensure(raw.weeks() == 1000 && raw.features() == 13, format!("frame {}x{}", raw.weeks(), raw.features()))?;
    let splits = split_6_2_2(raw.weeks()).map_err(|e| e.to_string())?;
    let sizes = (splits.train.len(), splits.val.len(), splits.test.len());
    ensure(sizes == (600, 200, 200), format!("split {sizes:?}"))?;

    let (z, _) = normalize(&raw, NormScope::Full).map_err(|e| e.to_string())?;
    let (mut mean_err, mut var_err) = (0.0f64, 0.0f64);
    for j in 0..z.features() {
        let col = z.column(j);
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        mean_err = mean_err.max(mean.abs());
        var_err = var_err.max((var - 1.0).abs());
    }
    ensure(mean_err <= 1e-9 && var_err <= 1e-9, format!("mean {mean_err:.2e} var {var_err:.2e}"))?;

    let shape = WindowShape { seq_len: 36, horizon: 24, label_len: 18 };
    let r = z.response_index();
    let mut counts = Vec::new();
    for task in [Task::Ms, Task::Mm] {
        let p = prepare(&raw, NormScope::Full, task, shape).map_err(|e| e.to_string())?;
        for (rows, samples) in [(&splits.train, &p.samples.train), (&splits.val, &p.samples.val), (&splits.test, &p.samples.test)] {
            let expect = rows.len() - (36 + 24) + 1;
            ensure(samples.len() == expect, format!("{task}: {} samples, expected {expect}", samples.len()))?;
            counts.push(samples.len());
        }
        for s in p.samples.train.iter().chain(&p.samples.test) {
            let dec = &s.decoder_placeholder;
            for h in 0..24 {
                let row = dec.row(18 + h);
                let truth = z.row(s.origin_index + h);
                ensure(row[r] == 0.0, format!("{task}: horizon response {}", row[r]))?;
                for (j, (&got, &want)) in row.iter().zip(truth).enumerate() {
                    if j == r {
                        continue;
                    }
                    let expect = if task == Task::Mm { want } else { 0.0 };
                    ensure(got == expect, format!("{task}: covariate {j} at horizon {h} is {got}, expected {expect}"))?;
                }
            }
        }
    }
    Ok(format!(
        "1000x13 frame, split 600/200/200, |mean| {mean_err:.1e}, |var-1| {var_err:.1e}, counts MS {:?} MM {:?}, MM horizon response 0",
        &counts[..3],
        &counts[3..]
    ))
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Check {
    let plan = TrainPlan::default();
    let lrs: Vec<f64> = (0..plan.epochs).map(|e| lr_schedule(&plan, e)).collect();
    let expect = [1e-4, 5e-5, 2.5e-5, 1.25e-5, 6.25e-6, 3.125e-6];
    ensure(lrs == expect, format!("lr sequence {lrs:?}"))?;

    let frame = lagged_driver_frame(DriverTask { weeks: 220, ..Default::default() }).map_err(|e| e.to_string())?;
    let cfg = FWinConfig { horizon: 4, in_features: 4, ..FWinConfig::shrunken() };
    let shape = WindowShape { seq_len: cfg.seq_len, horizon: cfg.horizon, label_len: cfg.label_len };
    let p = prepare(&frame, NormScope::Full, Task::Ms, shape).map_err(|e| e.to_string())?;
    let plan = TrainPlan { epochs: 10, patience: 3, batch_size: 32, ..Default::default() };

    // frozen weights: epoch 0 is best, epochs 1..=3 fail to improve
    let frozen = train_with(FWin::new(cfg.clone(), 1).unwrap(), &p.samples.train, &p.samples.val, &plan, |s, _, _| {
        s.zero_grad();
        Ok(())
    })
    .map_err(|e| e.to_string())?;
    let last = frozen.history.last().unwrap().epoch;
    ensure(frozen.stopped_early && frozen.best_epoch == 0 && last == 3, format!("frozen: best {} last {last}", frozen.best_epoch))?;

    // real updates for two epochs, then frozen: stop exactly 3 epochs after the best
    let steps = p.samples.train.len().div_ceil(plan.batch_size);
    let mut calls = 0;
    let partial = train_with(FWin::new(cfg.clone(), 1).unwrap(), &p.samples.train, &p.samples.val, &plan, |s, st, _| {
        calls += 1;
        if calls <= 2 * steps {
            fwin_core::training::adam_step(s, st, 1e-3)
        } else {
            s.zero_grad();
            Ok(())
        }
    })
    .map_err(|e| e.to_string())?;
    let best = partial.best_epoch;
    let last = partial.history.last().unwrap().epoch;
    ensure(partial.stopped_early && last == best + 3, format!("partial: best {best} last {last}"))?;
    ensure(partial.history[best + 1..].iter().all(|r| r.val_mse >= partial.best_val), "a later epoch improved")?;

    // metrics against a scalar oracle over the model's own forecasts
    let model = FWin::new(cfg, 2).unwrap();
    let (overall, steps_report) = evaluate_detailed(&model, &p.samples.test).map_err(|e| e.to_string())?;
    let plain = evaluate(&model, &p.samples.test).map_err(|e| e.to_string())?;
    let mut errs: Vec<Vec<f64>> = vec![Vec::new(); 4];
    for s in &p.samples.test {
        let f = model.predict(s).map_err(|e| e.to_string())?;
        for (h, e) in errs.iter_mut().enumerate() {
            e.push(f.data()[h] - s.target.data()[h]);
        }
    }
    let all: Vec<f64> = errs.concat();
    let oracle = |e: &[f64]| {
        let n = e.len() as f64;
        (
            e.iter().map(|v| v * v).sum::<f64>() / n,
            e.iter().map(|v| v.abs()).sum::<f64>() / n,
            e.iter().map(|v| v.abs()).fold(0.0, f64::max),
        )
    };
    let mut gap = 0.0f64;
    let mut compare = |r: &fwin_core::training::MetricReport, e: &[f64]| {
        let (mse, mae, max_ae) = oracle(e);
        gap = gap.max((r.mse - mse).abs()).max((r.mae - mae).abs()).max((r.max_ae - max_ae).abs());
    };
    compare(&overall, &all);
    compare(&plain, &all);
    for (r, e) in steps_report.iter().zip(&errs) {
        compare(r, e);
    }
    let direct = metrics(&[0.5, -1.0, 2.0], &[0.0, 0.0, 0.0]).map_err(|e| e.to_string())?;
    compare(&direct, &[0.5, -1.0, 2.0]);
    ensure(gap <= 1e-12, format!("metric gap {gap:.2e}"))?;
    Ok(format!(
        "lr {lrs:?}; frozen stops at epoch 3 (best 0); trained stops at {last} (best {best}); metric gap {gap:.1e}"
    ))
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Check {
    let start = Instant::now();
    let frame = lagged_driver_frame(DriverTask::default()).map_err(|e| e.to_string())?;
    let plan = TrainPlan {
        epochs: 50,
        patience: 12,
        batch_size: 16,
        initial_lr: 1e-2,
        lr_mode: LrMode::Constant,
        runs: 5,
        seed: 100,
        ..Default::default()
    };
    let mut per_task = Vec::new();
    for task in [Task::Mm, Task::Ms] {
        let cfg = FWinConfig { horizon: 24, in_features: 4, task, ..FWinConfig::shrunken() };
        let shape = WindowShape { seq_len: cfg.seq_len, horizon: cfg.horizon, label_len: cfg.label_len };
        let p = prepare(&frame, NormScope::Full, task, shape).map_err(|e| e.to_string())?;
        let report = multi_run(&cfg, &p.samples, &plan, None).map_err(|e| e.to_string())?;
        per_task.push((report.aggregate.mean.mse, report.runs.iter().map(|r| r.test.mse).collect::<Vec<f64>>()));
    }
    let elapsed = start.elapsed();
    let (mm_mean, mm) = &per_task[0];
    let (ms_mean, ms) = &per_task[1];
    let wins = mm.iter().zip(ms).filter(|(a, b)| a <= b).count();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(",");
    let msg = format!(
        "MM test MSE mean {mm_mean:.3} [{}], MS mean {ms_mean:.3} [{}], MM<=MS on {wins}/5 seeds, {:.0}s",
        fmt(mm),
        fmt(ms),
        elapsed.as_secs_f64()
    );
    ensure(*mm_mean <= 0.25 && mm.iter().all(|&m| m <= 0.25), msg.clone())?;
    ensure(wins >= 4, msg.clone())?;
    ensure(elapsed < Duration::from_secs(15 * 60), msg.clone())?;
    Ok(msg)
}

// ---------------------------------------------------------------- 9

fn best_time(reps: usize, mut f: impl FnMut()) -> f64 {
    f();
    (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn criterion_9() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    let mut store = ParamStore::new();
    let d = 64;
    let proj = ProjectionSet::new(&mut store, "attn", d, &mut rng).unwrap();
    let cfg = AttentionConfig { d_model: d, n_heads: 8, window: 12, causal: false, cross_windows: 3, dropout: 0.0 };
    let xs: Vec<Tensor> = [256, 1024].iter().map(|&l| random(&mut rng, &[l, d])).collect();
    let time = |full: bool, x: &Tensor| {
        best_time(7, || {
            let mut tape = Tape::with_params(&store);
            let v = tape.input(x.clone());
            let y = if full {
                full_self_attention(&mut tape, &proj, v, &cfg).unwrap()
            } else {
                window_self_attention(&mut tape, &proj, v, &cfg).unwrap()
            };
            std::hint::black_box(tape.value(y));
        })
    };
    let w = [time(false, &xs[0]), time(false, &xs[1])];
    let f = [time(true, &xs[0]), time(true, &xs[1])];
    let (wr, fr) = (w[1] / w[0], f[1] / f[0]);
    let msg = format!(
        "window {:.2}ms -> {:.2}ms (x{wr:.2}), full {:.2}ms -> {:.2}ms (x{fr:.2})",
        w[0] * 1e3,
        w[1] * 1e3,
        f[0] * 1e3,
        f[1] * 1e3
    );
    ensure(wr < 8.0 && fr > 10.0, msg.clone())?;
    Ok(msg)
}

// ---------------------------------------------------------------- 10

fn fwin(args: &[&str]) -> std::result::Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fwin"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), format!("fwin {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn criterion_10() -> Check {
    let dir = tempfile::TempDir::new().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    fwin(&["synth", "--weeks", "400", "--out", &p("raw")])?;
    fwin(&["ingest", "--manifest", &p("raw/manifest.json"), "--out", &p("ing")])?;
    let train = |out: &str| {
        fwin(&[
            "train", "--data", &p("ing/aligned.csv"), "--out", out, "--d-model", "16", "--d-ff", "32", "--n-heads", "2",
            "--seq-len", "12", "--label-len", "6", "--window", "4", "--horizon", "8", "--epochs", "2", "--patience", "2",
            "--batch-size", "16", "--runs", "3", "--seed", "3", "--task", "mm",
        ])
    };
    train(&p("a"))?;
    train(&p("b"))?;
    let read = |out: &str| fs::read(Path::new(out).join("metrics.csv")).map_err(|e| e.to_string());
    let (a, b) = (read(&p("a"))?, read(&p("b"))?);
    ensure(!a.is_empty() && a == b, "metrics.csv differs between identical runs")?;
    Ok(format!("two identical train invocations, metrics.csv {} bytes, byte-identical", a.len()))
}

// ----------------------------------------------------------------

#[test]
fn acceptance_criteria() {
    let criteria: [Criterion; 10] = [
        ("gradient suite", criterion_1),
        ("attention equivalence", criterion_2),
        ("Fourier mix oracle", criterion_3),
        ("architecture shapes", criterion_4),
        ("causality", criterion_5),
        ("data pipeline", criterion_6),
        ("training protocol", criterion_7),
        ("end-to-end learning", criterion_8),
        ("complexity", criterion_9),
        ("determinism", criterion_10),
    ];
    // FWIN_ACCEPTANCE=1,5 narrows the run while iterating; unset runs all
    let only: Option<Vec<usize>> = std::env::var("FWIN_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    // written to the stdout handle directly so the lines survive libtest's
    // output capture
    let report = |line: String| {
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
    };
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(i + 1))) {
            report(format!("SKIP criterion {:>2} ({name})", i + 1));
            continue;
        }
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let text = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {text}"))
        });
        match result {
            Ok(detail) => report(format!("PASS criterion {:>2} ({name}): {detail}", i + 1)),
            Err(detail) => {
                report(format!("FAIL criterion {:>2} ({name}): {detail}", i + 1));
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
