//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run with `cargo test -p ude-core --test acceptance`.

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::index;
use rand::{Rng as _, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_xoshiro::Xoshiro256PlusPlus;

use ude_core::datagen::SynthConfig;
use ude_core::fairness::{accuracy, disparate_impact, equal_opportunity, EvalRecord, FairnessReport};
use ude_core::gezo::{gezo_epoch, learn_ude_gezo, EditObjective, GezoConfig, SaObjective};
use ude_core::models::{train_head, FrozenEncoder, LinearHead};
use ude_core::numerics::Tensor;
use ude_core::oracle::{EmbeddingOracle, OracleServer};
use ude_core::pipeline::{
    learn_edit, run, run_with_oracle, train_disease_head, train_sa_head, Mode, OracleSpec, Outcome,
    PipelineConfig,
};
use ude_core::rng;
use ude_core::ude::{edit_loss, edit_loss_and_grad, mean_abs, Edit};
use ude_core::Error;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn count(flags: impl IntoIterator<Item = bool>) -> usize {
    flags.into_iter().filter(|&f| f).count()
}

// ---------------------------------------------------------------------------
// 1. gradient correctness

fn random_tensor(r: &mut Xoshiro256PlusPlus, shape: &[usize], scale: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(-scale..scale)).collect()).unwrap()
}

fn random_head(r: &mut Xoshiro256PlusPlus, e: usize) -> LinearHead<f64> {
    LinearHead::new(random_tensor(r, &[e, 2], 1.0), random_tensor(r, &[2], 0.5)).unwrap()
}

fn central_difference(
    enc: &FrozenEncoder<f64>,
    head: &LinearHead<f64>,
    x: &Tensor<f64>,
    a: &[u8],
    eps: &Tensor<f64>,
    dir: &Tensor<f64>,
    lambda: f64,
) -> f64 {
    let h = 1e-5;
    let lp = edit_loss(enc, head, x, a, &eps.add(&dir.scale(h)).unwrap(), lambda, None).unwrap();
    let lm = edit_loss(enc, head, x, a, &eps.sub(&dir.scale(h)).unwrap(), lambda, None).unwrap();
    (lp - lm) / (2.0 * h)
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let d = SynthConfig::default().dim();
    let enc32 = FrozenEncoder::<f32>::new(7, d);
    let enc64 = enc32.cast::<f64>();
    let mut r = Xoshiro256PlusPlus::seed_from_u64(1001);

    let mut worst64 = 0.0f64;
    for _ in 0..100 {
        let head = random_head(&mut r, enc64.embed_dim());
        let b = r.random_range(1..9);
        let x = random_tensor(&mut r, &[b, d], 1.0);
        let a: Vec<u8> = (0..b).map(|_| r.random_range(0..2)).collect();
        let eps = random_tensor(&mut r, &[d], 0.3);
        let dir = random_tensor(&mut r, &[d], 1.0);
        let lambda = 0.01;
        let (_, g) = edit_loss_and_grad(&enc64, &head, &x, &a, &eps, lambda, None).unwrap();
        let analytic = g.dot(&dir).unwrap();
        let numeric = central_difference(&enc64, &head, &x, &a, &eps, &dir, lambda);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12);
        worst64 = worst64.max(rel);
    }

    // f32 analytic gradient against f64 central differences at the same
    // f32-representable point, compared as whole vectors.
    let mut worst32 = 0.0f64;
    for _ in 0..100 {
        let head = random_head(&mut r, enc64.embed_dim()).cast::<f32>().cast::<f64>();
        let b = r.random_range(1..9);
        let x = random_tensor(&mut r, &[b, d], 1.0).cast::<f32>().cast::<f64>();
        let a: Vec<u8> = (0..b).map(|_| r.random_range(0..2)).collect();
        let eps = random_tensor(&mut r, &[d], 0.3).cast::<f32>().cast::<f64>();
        let (_, g) =
            edit_loss_and_grad(&enc32, &head.cast(), &x.cast(), &a, &eps.cast(), 0.01f32, None)
                .unwrap();
        let mut err = 0.0f64;
        let mut norm = 0.0f64;
        for p in 0..d {
            let mut unit = vec![0.0; d];
            unit[p] = 1.0;
            let unit = Tensor::new(vec![d], unit).unwrap();
            let numeric = central_difference(&enc64, &head, &x, &a, &eps, &unit, 0.01);
            err += (g.data()[p] as f64 - numeric).powi(2);
            norm += numeric * numeric;
        }
        worst32 = worst32.max((err / norm).sqrt());
    }
    let elapsed = start.elapsed();
    Verdict::new(
        worst64 < 1e-6 && worst32 < 1e-4 && elapsed < Duration::from_secs(10),
        format!("f64 worst rel err {worst64:.2e} (< 1e-6), f32 worst {worst32:.2e} (< 1e-4), {elapsed:.1?} (< 10 s)"),
    )
}

// ---------------------------------------------------------------------------
// 2. metric oracle equivalence

fn brute_rate(rec: &[(u8, u8, u8)], keep: impl Fn(u8, u8) -> bool, hit: impl Fn(u8) -> bool) -> Option<f64> {
    let selected: Vec<_> = rec.iter().filter(|(_, y, a)| keep(*y, *a)).collect();
    if selected.is_empty() {
        return None;
    }
    let hits = selected.iter().filter(|(p, _, _)| hit(*p)).count();
    Some(hits as f64 / selected.len() as f64)
}

/// EO_n, EO_p, DI, |1-DI|, accuracy by direct counting; `None` where the
/// metric is undefined.
fn brute_force(rec: &[(u8, u8, u8)]) -> [Option<f64>; 5] {
    let eo = |c: u8| {
        let t0 = brute_rate(rec, |y, a| y == c && a == 0, |p| p == c)?;
        let t1 = brute_rate(rec, |y, a| y == c && a == 1, |p| p == c)?;
        Some((t0 - t1).abs())
    };
    let di = (|| {
        let r0 = brute_rate(rec, |_, a| a == 0, |p| p == 1)?;
        let r1 = brute_rate(rec, |_, a| a == 1, |p| p == 1)?;
        if r1 == 0.0 {
            return None;
        }
        Some(r0 / r1)
    })();
    let acc = (!rec.is_empty())
        .then(|| rec.iter().filter(|(p, y, _)| p == y).count() as f64 / rec.len() as f64);
    [eo(0), eo(1), di, di.map(|v| (1.0 - v).abs()), acc]
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut r = Xoshiro256PlusPlus::seed_from_u64(2002);
    let mut mismatches = 0usize;
    let mut defined = 0usize;
    for _ in 0..1000 {
        let n = r.random_range(1..=64);
        let rec: Vec<(u8, u8, u8)> = (0..n)
            .map(|_| (r.random_range(0..2), r.random_range(0..2), r.random_range(0..2)))
            .collect();
        let er = EvalRecord::new(
            rec.iter().map(|t| t.0).collect(),
            rec.iter().map(|t| t.1).collect(),
            rec.iter().map(|t| t.2).collect(),
        )
        .unwrap();
        let ok = |v: ude_core::Result<f64>| match v {
            Ok(x) => Some(x),
            Err(Error::UndefinedMetric(_)) => None,
            Err(e) => panic!("unexpected error {e}"),
        };
        let di = ok(disparate_impact(&er).map(|d| d.0));
        let got = [
            ok(equal_opportunity(&er, 0)),
            ok(equal_opportunity(&er, 1)),
            di,
            ok(disparate_impact(&er).map(|d| d.1)),
            ok(accuracy(&er)),
        ];
        let want = brute_force(&rec);
        if got.iter().zip(&want).any(|(g, w)| g.map(f64::to_bits) != w.map(f64::to_bits)) {
            mismatches += 1;
        }
        if let Ok(report) = FairnessReport::from_record(&er) {
            defined += 1;
            let from_report = [report.eo_neg, report.eo_pos, report.di, report.one_minus_di_abs, report.accuracy];
            if from_report.iter().zip(&want).any(|(g, w)| Some(g.to_bits()) != w.map(f64::to_bits)) {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    Verdict::new(
        mismatches == 0 && elapsed < Duration::from_secs(5),
        format!("{mismatches} mismatches over 1000 records ({defined} fully defined), {elapsed:.1?} (< 5 s)"),
    )
}

// ---------------------------------------------------------------------------
// shared pipeline runs

struct Runs {
    whitebox: Vec<(Outcome, Duration)>,
    gezo: Vec<(Outcome, u64, u64)>,
}

fn whitebox_runs() -> Vec<(Outcome, Duration)> {
    let base = PipelineConfig::default();
    SEEDS
        .iter()
        .map(|&s| {
            let t = Instant::now();
            let o = run(&base.with_seed(s)).unwrap();
            (o, t.elapsed())
        })
        .collect()
}

/// GeZO runs with the query counts of the edit oracle.
fn gezo_runs(local_iters: usize) -> Vec<(Outcome, u64, u64)> {
    let mut base = PipelineConfig {
        mode: Mode::Gezo,
        ..PipelineConfig::default()
    };
    base.gezo.local_iters = local_iters;
    SEEDS
        .iter()
        .map(|&s| {
            let cfg = base.with_seed(s);
            let enc = Arc::new(cfg.build_encoder());
            let oracle = EmbeddingOracle::black_box(Arc::clone(&enc));
            let o = run_with_oracle(&cfg, &enc, &oracle).unwrap();
            let q = oracle.queries();
            (o, q.calls, q.grad_calls)
        })
        .collect()
}

// 3. ERM bias
fn criterion_3(runs: &Runs) -> Verdict {
    let hits = count(runs.whitebox.iter().map(|(o, _)| o.erm.eo_pos >= 0.2 && o.erm.one_minus_di_abs >= 0.2));
    let vals: Vec<String> = runs
        .whitebox
        .iter()
        .map(|(o, _)| format!("({:.3}, {:.3})", o.erm.eo_pos, o.erm.one_minus_di_abs))
        .collect();
    Verdict::new(hits >= 4, format!("{hits}/5 seeds with EO_p >= 0.2 and |1-DI| >= 0.2 (need 4); ERM (EO_p, |1-DI|) {}", vals.join(" ")))
}

// 4. white-box debiasing
fn criterion_4(runs: &Runs) -> Verdict {
    let ok = |o: &Outcome| {
        o.erm.eo_pos - o.ude.eo_pos >= 0.1
            && o.erm.one_minus_di_abs - o.ude.one_minus_di_abs >= 0.1
            && o.ude.accuracy >= o.erm.accuracy - 0.05
    };
    let hits = count(runs.whitebox.iter().map(|(o, _)| ok(o)));
    let slowest = runs.whitebox.iter().map(|(_, t)| *t).max().unwrap();
    let vals: Vec<String> = runs
        .whitebox
        .iter()
        .map(|(o, _)| {
            format!(
                "(dEO_p {:+.3}, d|1-DI| {:+.3}, dAcc {:+.3})",
                o.erm.eo_pos - o.ude.eo_pos,
                o.erm.one_minus_di_abs - o.ude.one_minus_di_abs,
                o.ude.accuracy - o.erm.accuracy
            )
        })
        .collect();
    Verdict::new(
        hits >= 4 && slowest < Duration::from_secs(180),
        format!("{hits}/5 seeds reduce EO_p and |1-DI| by >= 0.1 within 5 accuracy points (need 4); slowest seed {slowest:.1?} (< 3 min); {}", vals.join(" ")),
    )
}

// 5. SA concealment
fn criterion_5(runs: &Runs) -> Verdict {
    let hits = count(runs.whitebox.iter().map(|(o, _)| o.sa_clean_accuracy >= 0.9 && o.sa_edited_accuracy <= 0.65));
    let vals: Vec<String> = runs
        .whitebox
        .iter()
        .map(|(o, _)| format!("{:.3}->{:.3}", o.sa_clean_accuracy, o.sa_edited_accuracy))
        .collect();
    Verdict::new(hits >= 4, format!("{hits}/5 seeds clean >= 0.9 and edited <= 0.65 (need 4); SA acc {}", vals.join(" ")))
}

// 6. GeZO parity
fn criterion_6(runs: &Runs) -> Verdict {
    let cfg = GezoConfig::default();
    let expected = (cfg.epochs * cfg.local_iters * 2 * cfg.samples) as u64;
    let hits = count(runs.whitebox.iter().zip(&runs.gezo).map(|((w, _), (g, _, _))| {
        (g.sa_edited_accuracy - w.sa_edited_accuracy).abs() <= 0.10
            && (g.ude.eo_pos - w.ude.eo_pos).abs() <= 0.1
            && (g.ude.one_minus_di_abs - w.ude.one_minus_di_abs).abs() <= 0.1
    }));
    let forward_only = runs.gezo.iter().all(|(_, calls, grads)| *calls == expected && *grads == 0);

    // per-epoch accounting on one epoch
    let pc = PipelineConfig::default().with_seed(1);
    let enc = Arc::new(pc.build_encoder());
    let train = pc.generate_train().unwrap();
    let sa = train_sa_head(&pc, &EmbeddingOracle::black_box(Arc::clone(&enc)), &train).unwrap();
    let oracle = EmbeddingOracle::black_box(enc);
    let obj = SaObjective::new(&oracle, &sa.head, &train, cfg.lambda, None).unwrap();
    let mut r = rng::seeded(9);
    gezo_epoch(&obj, Tensor::zeros(&[obj.dim()]), &cfg, 0, &mut r).unwrap();
    let q = oracle.queries();
    let per_epoch = (cfg.local_iters * 2 * cfg.samples) as u64;
    let epoch_ok = q.calls == per_epoch && q.grad_calls == 0;

    Verdict::new(
        hits >= 3 && forward_only && epoch_ok,
        format!(
            "{hits}/5 seeds within 0.10 SA acc and 0.1 EO_p/|1-DI| of white-box (need 3); one epoch {} embeds (expect {per_epoch}), {} gradient calls; full runs {:?} embeds (expect {expected} each)",
            q.calls,
            q.grad_calls,
            runs.gezo.iter().map(|g| g.1).collect::<Vec<_>>()
        ),
    )
}

// 7. GeZO exact invariants

struct Never(usize);

impl EditObjective for Never {
    fn dim(&self) -> usize {
        self.0
    }
    fn pool_size(&self) -> usize {
        100
    }
    fn batch_loss(&self, _: &Tensor<f32>, _: &[usize]) -> ude_core::Result<f32> {
        Ok(f32::INFINITY)
    }
}

/// Momentum-free reference: each accepted direction is added to the edit
/// directly.
fn reference_no_momentum(obj: &impl EditObjective, cfg: &GezoConfig, seed: u64) -> Tensor<f32> {
    let mut r = rng::seeded(seed);
    let mut eps = Tensor::<f32>::zeros(&[obj.dim()]);
    for _ in 0..cfg.epochs {
        let mut step = cfg.init_step;
        let mut best = f32::INFINITY;
        for _ in 0..cfg.local_iters {
            let batch = index::sample(&mut r, obj.pool_size(), cfg.batch_size.min(obj.pool_size())).into_vec();
            let mut winner: Option<Vec<f32>> = None;
            for _ in 0..cfg.samples {
                let delta: Vec<f32> = (0..obj.dim())
                    .map(|_| {
                        let z: f32 = StandardNormal.sample(&mut r);
                        z * step as f32
                    })
                    .collect();
                for sign in [-1.0f32, 1.0] {
                    let d: Vec<f32> = delta.iter().map(|v| v * sign).collect();
                    let cand: Vec<f32> = eps.data().iter().zip(&d).map(|(e, v)| e + v).collect();
                    let loss = obj.batch_loss(&Tensor::from_vec(cand).unwrap(), &batch).unwrap();
                    if loss < best {
                        best = loss;
                        winner = Some(d);
                    }
                }
            }
            match winner {
                Some(d) => {
                    let next: Vec<f32> = eps.data().iter().zip(&d).map(|(e, v)| e + v).collect();
                    eps = Tensor::from_vec(next).unwrap();
                }
                None => step *= cfg.decay,
            }
        }
    }
    eps
}

fn criterion_7(runs: &Runs) -> Verdict {
    let cfg = GezoConfig::default();

    // L_best monotone within each epoch of every GeZO run
    let mut monotone = true;
    for (o, _, _) in &runs.gezo {
        for w in o.edit.iterations.windows(2) {
            if w[0].epoch == w[1].epoch {
                if let (Some(a), Some(b)) = (w[0].best_loss, w[1].best_loss) {
                    monotone &= b <= a;
                }
            }
        }
    }

    // pure decay
    let mut expected = 0.01f64;
    for _ in 0..cfg.local_iters {
        expected *= 0.95;
    }
    let decay = |seed| {
        let mut r = rng::seeded(seed);
        gezo_epoch(&Never(16), Tensor::zeros(&[16]), &cfg, 0, &mut r).unwrap()
    };
    let (d1, d2) = (decay(1), decay(2));
    let decay_ok = d1.step.to_bits() == expected.to_bits()
        && d2.step.to_bits() == expected.to_bits()
        && (d1.step - 0.01 * 0.95f64.powi(cfg.local_iters as i32)).abs() < 1e-15
        && d1.eps.data().iter().all(|v| *v == 0.0);

    // mu = 0 against the momentum-free loop
    let pc = PipelineConfig {
        synth: SynthConfig::with_side(8),
        ..PipelineConfig::default()
    }
    .with_seed(3);
    let enc = Arc::new(pc.build_encoder());
    let oracle = EmbeddingOracle::black_box(enc);
    let train = pc.generate_train().unwrap();
    let sa = train_sa_head(&pc, &oracle, &train).unwrap();
    let mu0 = GezoConfig {
        momentum: 0.0,
        epochs: 5,
        seed: 77,
        ..cfg
    };
    let ours = learn_ude_gezo(&oracle, &sa.head, &train, &mu0).unwrap();
    let obj = SaObjective::new(&oracle, &sa.head, &train, mu0.lambda, None).unwrap();
    let reference = reference_no_momentum(&obj, &mu0, 77);
    let mu0_ok = ours.eps.data().iter().map(|v| v.to_bits()).eq(reference.data().iter().map(|v| v.to_bits()))
        && ours.norm() > 0.0;

    Verdict::new(
        monotone && decay_ok && mu0_ok,
        format!(
            "L_best monotone {monotone}; pure decay s = {:e} (bits match 0.01*0.95^R: {decay_ok}); mu=0 matches reference {mu0_ok}",
            d1.step
        ),
    )
}

// 8. lambda monotonicity
fn criterion_8() -> Verdict {
    let mut hits = 0;
    let mut vals = Vec::new();
    for &s in &SEEDS {
        let cfg = PipelineConfig::default().with_seed(s);
        let enc = Arc::new(cfg.build_encoder());
        let oracle = EmbeddingOracle::white_box(enc);
        let train = cfg.generate_train().unwrap();
        let sa = train_sa_head(&cfg, &oracle, &train).unwrap();
        let norm = |lambda| {
            let mut c = cfg.clone();
            c.ude.lambda = lambda;
            learn_edit(&c, &oracle, &sa.head, &train).unwrap().norm()
        };
        let (big, small) = (norm(1.0), norm(0.01));
        hits += usize::from(big < small);
        vals.push(format!("{big:.3}<{small:.3}"));
    }
    Verdict::new(hits == 5, format!("{hits}/5 seeds with |eps| at lambda=1 below lambda=0.01 (need 5); {}", vals.join(" ")))
}

// 9. local-iteration trend
fn criterion_9(r2: &[(Outcome, u64, u64)], r20: &[(Outcome, u64, u64)]) -> Verdict {
    let mean = |rs: &[(Outcome, u64, u64)]| rs.iter().map(|r| r.0.ude.eo_pos).sum::<f64>() / rs.len() as f64;
    let (m2, m20) = (mean(r2), mean(r20));
    Verdict::new(m20 <= m2, format!("mean EO_p at R=20 {m20:.3} vs R=2 {m2:.3} (need R=20 <= R=2)"))
}

// 10. noise-map localization
fn criterion_10(runs: &Runs) -> Verdict {
    let synth = SynthConfig::default();
    let pairs: Vec<(f32, f32)> = runs
        .whitebox
        .iter()
        .map(|(o, _)| (mean_abs(&o.edit.eps, &synth.sa_region), mean_abs(&o.edit.eps, &synth.disease_region)))
        .collect();
    let hits = count(pairs.iter().map(|(a, d)| a > d));
    let vals: Vec<String> = pairs.iter().map(|(a, d)| format!("{a:.3}/{d:.3}")).collect();
    Verdict::new(hits >= 4, format!("{hits}/5 seeds with mean |eps| sa_region > disease_region (need 4); {}", vals.join(" ")))
}

// 11. transport fidelity
fn criterion_11() -> Verdict {
    let cfg = PipelineConfig {
        mode: Mode::Gezo,
        ..PipelineConfig::default()
    };
    let enc = Arc::new(cfg.build_encoder());
    let server = OracleServer::bind("127.0.0.1:0", Arc::clone(&enc)).unwrap().spawn().unwrap();
    let remote_cfg = PipelineConfig {
        oracle: OracleSpec::Remote(server.addr()),
        ..cfg.clone()
    };
    let remote = remote_cfg.edit_oracle(&enc).unwrap();
    let local = EmbeddingOracle::black_box(Arc::clone(&enc));

    let train = cfg.generate_train().unwrap();
    let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let embed_equal = bits(&remote.embed(&train.images).unwrap()) == bits(&local.embed(&train.images).unwrap());

    let sa = train_sa_head(&cfg, &local, &train).unwrap();
    let in_process = learn_edit(&cfg, &local, &sa.head, &train).unwrap();
    let over_wire = learn_edit(&remote_cfg, &remote, &sa.head, &train).unwrap();
    let eps_equal = bits(&in_process.eps) == bits(&over_wire.eps);
    drop(remote);
    server.shutdown().unwrap();
    Verdict::new(
        embed_equal && eps_equal,
        format!("embeddings bit-identical {embed_equal}; remote GeZO edit byte-identical {eps_equal} (|eps| {:.4})", in_process.norm()),
    )
}

// 12. reduction identity
fn criterion_12(runs: &Runs) -> Verdict {
    let cfg = PipelineConfig::default().with_seed(SEEDS[0]);
    let enc = Arc::new(cfg.build_encoder());
    let oracle = EmbeddingOracle::black_box(enc);
    let train = cfg.generate_train().unwrap();
    let plain = train_head(
        LinearHead::zeros(32),
        &oracle,
        &train.images,
        train.disease().unwrap(),
        &cfg.disease_head_config(),
        None,
    )
    .unwrap();
    let zero = Edit::zeros(train.dim());
    let via_zero = train_disease_head(&cfg, &oracle, Some(&zero), &train).unwrap();
    let bits = |h: &LinearHead<f32>| {
        h.weight().data().iter().chain(h.bias().data()).map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    let identical = bits(&plain.head) == bits(&via_zero.head);
    let report_path = bits(&runs.whitebox[0].0.erm_head.head) == bits(&via_zero.head);
    Verdict::new(
        identical && report_path,
        format!("zero-edit head bit-identical to plain ERM {identical}; report ERM head matches {report_path}"),
    )
}

fn main() {
    let start = Instant::now();
    let mut verdicts: Vec<(u32, &str, Verdict)> = Vec::new();
    verdicts.push((1, "gradient correctness", criterion_1()));
    verdicts.push((2, "metric oracle equivalence", criterion_2()));

    let runs = Runs {
        whitebox: whitebox_runs(),
        gezo: gezo_runs(GezoConfig::default().local_iters),
    };
    verdicts.push((3, "ERM bias by construction", criterion_3(&runs)));
    verdicts.push((4, "white-box edit debiases", criterion_4(&runs)));
    verdicts.push((5, "SA concealment", criterion_5(&runs)));
    verdicts.push((6, "GeZO parity, forward-only", criterion_6(&runs)));
    verdicts.push((7, "GeZO exact invariants", criterion_7(&runs)));
    verdicts.push((8, "lambda monotonicity", criterion_8()));
    let r2 = gezo_runs(2);
    let r20 = gezo_runs(20);
    verdicts.push((9, "local-iteration trend", criterion_9(&r2, &r20)));
    verdicts.push((10, "noise-map localization", criterion_10(&runs)));
    verdicts.push((11, "oracle transport fidelity", criterion_11()));
    verdicts.push((12, "zero-edit reduction identity", criterion_12(&runs)));

    println!();
    let mut failed = 0;
    for (n, name, v) in &verdicts {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!v.pass);
        println!("criterion {n:>2} [{tag}] {name}: {}", v.detail);
    }
    println!(
        "\nacceptance: {} passed, {failed} failed ({:.1?})",
        verdicts.len() - failed,
        start.elapsed()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
