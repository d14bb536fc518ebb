//! Checks run by `hdrtv selftest`. Every differentiable operator is compared
//! against finite differences; the special convolutions and the modulation
//! branch must collapse to their plain counterparts in the degenerate case.

use std::time::Instant;

use hdrtv_model::stfm::Vectors;
use hdrtv_model::{DslNet, ModelConfig};
use hdrtv_tensor::gradcheck::{uniform, uniform_away_from_zero, GradCheck, GradCheckOutcome};
use hdrtv_tensor::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRAD_TOL: f64 = 1e-3;
pub const GRAD_SEEDS: [u64; 5] = [11, 23, 37, 41, 59];
pub const ORACLE_TOL: f64 = 1e-6;
pub const PARAM_TARGET: f64 = 0.93e6;
pub const PARAM_SLACK: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

type Case = Box<dyn Fn(u64, &mut ChaCha8Rng) -> Result<GradCheckOutcome>>;

fn u(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor {
    uniform(shape, -1.0, 1.0, rng)
}

/// Offsets whose fractional parts stay inside (0.05, 0.95), so no probe
/// crosses a bilinear cell boundary.
fn fractional_offsets(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-2i32..2) as f32 + rng.random_range(0.05f32..0.95)).collect();
    Tensor::from_vec(shape, data).expect("positive extents")
}

fn gradient_cases() -> Vec<(String, Case)> {
    let mut cases: Vec<(String, Case)> = Vec::new();
    let mut push = |name: &str, case: Case| cases.push((name.to_string(), case));
    push(
        "conv2d",
        Box::new(|s, r| {
            let spec = ConvSpec::new(3, 4, 3).stride(2);
            let ins = [u([2, 3, 8, 8], r).with_grad(), u([4, 3, 3, 3], r).with_grad(), u([1, 4, 1, 1], r).with_grad()];
            GradCheck::with_seed(s).run(&ins, |x| conv2d(&x[0], &spec, &x[1], Some(&x[2])))
        }),
    );
    push(
        "conv2d grouped",
        Box::new(|s, r| {
            let spec = ConvSpec::new(4, 6, 1).groups(2).bias(false);
            let ins = [u([1, 4, 5, 5], r).with_grad(), u([6, 2, 1, 1], r).with_grad()];
            GradCheck::with_seed(s).run(&ins, |x| conv2d(&x[0], &spec, &x[1], None))
        }),
    );
    for k in [7, 17] {
        push(
            &format!("depthwise {k}x{k}"),
            Box::new(move |s, r| {
                let ins =
                    [u([1, 4, 20, 20], r).with_grad(), u([4, 1, k, k], r).with_grad(), u([1, 4, 1, 1], r).with_grad()];
                GradCheck::with_seed(s).run(&ins, |x| depthwise_conv2d(&x[0], k, &x[1], Some(&x[2])))
            }),
        );
    }
    push(
        "transposed conv",
        Box::new(|s, r| {
            let spec = ConvSpec::new(3, 2, 4).stride(2).padding(1);
            let ins = [u([2, 3, 4, 4], r).with_grad(), u([3, 2, 4, 4], r).with_grad(), u([1, 2, 1, 1], r).with_grad()];
            GradCheck::with_seed(s).run(&ins, |x| transposed_conv2d(&x[0], &spec, &x[1], Some(&x[2]), 0))
        }),
    );
    push(
        "deformable",
        Box::new(|s, r| {
            let spec = ConvSpec::new(2, 3, 3);
            let ins = [
                u([1, 2, 6, 6], r).with_grad(),
                fractional_offsets([1, offset_channels((3, 3), 2), 6, 6], r).with_grad(),
                u([3, 2, 3, 3], r).with_grad(),
                u([1, 3, 1, 1], r).with_grad(),
            ];
            GradCheck::with_seed(s).run(&ins, |x| {
                deformable_conv2d(&x[0], &OffsetField::new(x[1].clone(), (3, 3), 2)?, &spec, &x[2], Some(&x[3]))
            })
        }),
    );
    push(
        "deformable offsets path",
        Box::new(|s, r| {
            let spec = ConvSpec::new(2, 2, 3).bias(false);
            let ins = [u([1, 2, 6, 6], r), fractional_offsets([1, 18, 6, 6], r).with_grad(), u([2, 2, 3, 3], r)];
            GradCheck { max_probes: 96, ..GradCheck::with_seed(s) }.run(&ins, |x| {
                deformable_conv2d(&x[0], &OffsetField::new(x[1].clone(), (3, 3), 1)?, &spec, &x[2], None)
            })
        }),
    );
    push(
        "dynamic",
        Box::new(|s, r| {
            let ins = [u([2, 3, 9, 9], r).with_grad(), u([4, 3, 7, 7], r).with_grad(), u([2, 4, 1, 1], r).with_grad()];
            GradCheck::with_seed(s).run(&ins, |x| dynamic_conv2d(&x[0], &x[1], &x[2]))
        }),
    );
    push(
        "dynamic attention path",
        Box::new(|s, r| {
            let ins = [u([2, 3, 9, 9], r), u([4, 3, 7, 7], r), uniform([2, 4, 1, 1], -2.0, 2.0, r).with_grad()];
            GradCheck::with_seed(s).run(&ins, |x| dynamic_conv2d(&x[0], &x[1], &x[2]))
        }),
    );
    push(
        "pool_avg",
        Box::new(|s, r| GradCheck::with_seed(s).run(&[u([2, 2, 6, 6], r).with_grad()], |x| pool_avg(&x[0], 3, 2, 1))),
    );
    push(
        "pool_global",
        Box::new(|s, r| GradCheck::with_seed(s).run(&[u([2, 3, 5, 4], r).with_grad()], |x| pool_global(&x[0]))),
    );
    push(
        "normalize",
        Box::new(|s, r| GradCheck::with_seed(s).run(&[u([2, 3, 4, 5], r).with_grad()], |x| normalize(&x[0]))),
    );
    push(
        "relu",
        Box::new(|s, r| {
            let x = uniform_away_from_zero([1, 2, 4, 4], 0.01, r).with_grad();
            GradCheck::with_seed(s).run(&[x], |x| Ok(relu(&x[0])))
        }),
    );
    push(
        "leaky_relu",
        Box::new(|s, r| {
            let x = uniform_away_from_zero([1, 2, 4, 4], 0.01, r).with_grad();
            GradCheck::with_seed(s).run(&[x], |x| Ok(leaky_relu(&x[0], DEFAULT_LEAKY_SLOPE)))
        }),
    );
    push(
        "upsample bilinear",
        Box::new(|s, r| {
            GradCheck::with_seed(s)
                .run(&[u([1, 2, 3, 4], r).with_grad()], |x| upsample(&x[0], 4, UpsampleMode::Bilinear))
        }),
    );
    push(
        "modulate",
        Box::new(|s, r| {
            let ins = [u([2, 3, 4, 4], r).with_grad(), u([2, 3, 1, 1], r).with_grad(), u([2, 3, 1, 1], r).with_grad()];
            GradCheck::with_seed(s).run(&ins, |x| modulate(&x[0], &x[1], &x[2]))
        }),
    );
    push(
        "modulate spatial",
        Box::new(|s, r| {
            let ins = [u([1, 3, 4, 4], r).with_grad(), u([1, 3, 4, 4], r).with_grad(), u([1, 3, 4, 4], r).with_grad()];
            GradCheck::with_seed(s).run(&ins, |x| modulate(&x[0], &x[1], &x[2]))
        }),
    );
    push(
        "l1_loss",
        Box::new(|s, r| {
            let target = u([1, 2, 2, 2], r);
            let pred = add(&target, &uniform_away_from_zero([1, 2, 2, 2], 0.01, r))?;
            GradCheck::with_seed(s).run(&[pred.with_grad(), target.with_grad()], |x| l1_loss(&x[0], &x[1]))
        }),
    );
    cases
}

/// One result per operator, each over all [`GRAD_SEEDS`].
pub fn gradient_suite() -> Vec<CheckResult> {
    gradient_cases()
        .into_iter()
        .map(|(name, case)| {
            let mut worst = 0.0f64;
            let mut failure = None;
            for seed in GRAD_SEEDS {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                match case(seed, &mut rng) {
                    Ok(out) if out.passes(GRAD_TOL) => worst = worst.max(out.max_rel_err),
                    Ok(out) => {
                        failure.get_or_insert(format!(
                            "seed {seed}: max rel err {:.3e} over {} probes",
                            out.max_rel_err, out.probes
                        ));
                    }
                    Err(e) => {
                        failure.get_or_insert(format!("seed {seed}: {e}"));
                    }
                }
            }
            let passed = failure.is_none();
            let detail = failure.unwrap_or_else(|| format!("max rel err {worst:.2e} over {} seeds", GRAD_SEEDS.len()));
            CheckResult { name: format!("gradient {name}"), passed, detail }
        })
        .collect()
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.data().iter().zip(b.data()).fold(0.0, |m, (x, y)| m.max((*x as f64 - *y as f64).abs()))
}

fn oracle(name: &str, diffs: Result<Vec<f64>>) -> CheckResult {
    match diffs {
        Ok(d) => {
            let worst = d.iter().copied().fold(0.0, f64::max);
            let passed = worst <= ORACLE_TOL && !d.is_empty();
            CheckResult {
                name: name.into(),
                passed,
                detail: format!("max |diff| {worst:.2e} over {} configs", d.len()),
            }
        }
        Err(e) => CheckResult { name: name.into(), passed: false, detail: e.to_string() },
    }
}

pub fn zero_offset_deformable_is_conv() -> CheckResult {
    let run = || -> Result<Vec<f64>> {
        let mut out = Vec::new();
        // (n, cin, cout, h, w, k, stride, deform_groups)
        for (seed, (n, cin, cout, h, w, k, stride, dg)) in
            [(1, 3, 4, 6, 7, 3, 1, 1), (2, 4, 2, 8, 8, 3, 2, 2), (1, 9, 8, 10, 6, 5, 1, 3)].into_iter().enumerate()
        {
            let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
            let spec = ConvSpec::new(cin, cout, k).stride(stride);
            let x = u([n, cin, h, w], &mut rng);
            let wt = u(spec.weight_shape(), &mut rng);
            let b = u([1, cout, 1, 1], &mut rng);
            let (oh, ow) = spec.output_extent(h, w).expect("kernel fits the input");
            let off = OffsetField::new(Tensor::zeros([n, offset_channels((k, k), dg), oh, ow]), (k, k), dg)?;
            out.push(max_abs_diff(
                &deformable_conv2d(&x, &off, &spec, &wt, Some(&b))?,
                &conv2d(&x, &spec, &wt, Some(&b))?,
            ));
        }
        Ok(out)
    };
    oracle("zero-offset deformable = conv2d", run())
}

pub fn one_hot_dynamic_is_depthwise() -> CheckResult {
    let run = || -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for (seed, (n, c, k, kc)) in [(2, 3, 7, 4), (1, 5, 3, 2), (3, 2, 5, 3)].into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed as u64);
            let x = u([n, c, 9, 8], &mut rng);
            let kernels = u([kc, c, k, k], &mut rng);
            let pick = seed % kc;
            let mut logits = vec![-200.0f32; n * kc];
            for b in 0..n {
                logits[b * kc + pick] = 200.0;
            }
            let y = dynamic_conv2d(&x, &kernels, &Tensor::from_vec([n, kc, 1, 1], logits)?)?;
            let kk = c * k * k;
            let sel = Tensor::from_vec([c, 1, k, k], kernels.data()[pick * kk..(pick + 1) * kk].to_vec())?;
            out.push(max_abs_diff(&y, &depthwise_conv2d(&x, k, &sel, None)?));
        }
        Ok(out)
    };
    oracle("one-hot dynamic = depthwise", run())
}

/// With the vector heads zeroed (scale 1, shift 0) the network equals the
/// same network evaluated with the modulation steps removed.
pub fn identity_modulation_is_reduced_network() -> CheckResult {
    let run = || -> std::result::Result<Vec<f64>, hdrtv_model::ModelError> {
        let mut out = Vec::new();
        for (seed, t, c, cc) in [(1u64, 1, 8, 8), (2, 2, 6, 4), (3, 0, 5, 7)] {
            let cfg = ModelConfig { t, c_cond: cc, ..ModelConfig::preset("tiny")?.with_width(c) };
            let mut model = DslNet::new(cfg.clone(), seed)?;
            let heads: Vec<String> = model
                .params()
                .paths()
                .filter(|p| p.starts_with("stfm.sme") || p.starts_with("stfm.tme.b") || p.starts_with("stfm.cme.b"))
                .cloned()
                .collect();
            for p in heads {
                let n = model.params().get(&p)?.numel();
                model.params_mut().set(&p, vec![0.0; n])?;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let frames: Vec<Tensor> = (0..cfg.frames()).map(|_| uniform([2, 3, 16, 32], 0.0, 1.0, &mut rng)).collect();
            let trace = model.trace(&frames)?;
            let p = model.params();
            let stfm = model.stfm();
            let reduced = add(
                &stfm.modulation.forward(p, &trace.aligned, &Vectors::default())?,
                &stfm.residual.forward(p, &trace.aligned)?,
            )?;
            let enhanced = match model.lkqe() {
                Some(l) => l.forward(p, &reduced)?,
                None => reduced,
            };
            out.push(max_abs_diff(&model.head().forward(p, &enhanced)?, &trace.output));
        }
        Ok(out)
    };
    match run() {
        Ok(d) => oracle("identity modulation = reduced network", Ok(d)),
        Err(e) => {
            CheckResult { name: "identity modulation = reduced network".into(), passed: false, detail: e.to_string() }
        }
    }
}

pub fn oracle_suite() -> Vec<CheckResult> {
    vec![zero_offset_deformable_is_conv(), one_hot_dynamic_is_depthwise(), identity_modulation_is_reduced_network()]
}

/// Exact count of the `full` preset against 0.93M ± 10%.
pub fn param_budget() -> (ModelConfig, usize, CheckResult) {
    let cfg = ModelConfig::preset("full").expect("full preset exists");
    let count = cfg.param_count();
    let rel = (count as f64 - PARAM_TARGET).abs() / PARAM_TARGET;
    let check = CheckResult {
        name: "parameter budget".into(),
        passed: rel <= PARAM_SLACK,
        detail: format!(
            "full preset has {count} parameters, {:+.2}% from 0.93M",
            100.0 * (count as f64 / PARAM_TARGET - 1.0)
        ),
    };
    (cfg, count, check)
}

/// Runs everything, printing one line per check; true when all pass.
pub fn run_all(mut emit: impl FnMut(&str)) -> bool {
    let (cfg, count, budget) = param_budget();
    emit(&format!("full-scale preset: {count} parameters"));
    emit(&format!("config: {}", serde_json::to_string(&cfg).expect("config serializes")));
    let mut ok = budget.passed;
    emit(&budget.line());
    let start = Instant::now();
    for r in gradient_suite() {
        ok &= r.passed;
        emit(&r.line());
    }
    emit(&format!("gradient suite took {:.1}s", start.elapsed().as_secs_f64()));
    for r in oracle_suite() {
        ok &= r.passed;
        emit(&r.line());
    }
    ok
}
