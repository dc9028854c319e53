//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if
//! any criterion fails. Run with `cargo test -p hypgcn-cli --test acceptance`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use hypgcn_core::graph::GRAPH_LEN;
use hypgcn_core::graph::K_V;
use hypgcn_core::model::random_input;
use hypgcn_core::prune::{
    apply_dataflow_reorg, apply_fine_grained, compression_stats, hybrid_prune, propagate_coarse_temporal, PruneSpec,
};
use hypgcn_core::reference::{graph_spatial_forward_ref, model_forward_ref, reordered_forward};
use hypgcn_core::rfc::{
    decode_bank, histogram_from_banks, read_stream, relu_encode_bank, size_minibanks, storage_report, write_stream,
    BankVector, SparsityHistogram, StorageConfig,
};
use hypgcn_core::sim::{
    expected_valid, expected_valid_closed, scm_schedule, scm_trace_len, simulate_dyn_pe, DynMultPeConfig, Scenario,
    SubFilterStream,
};
use hypgcn_core::sparse::run_inference;
use hypgcn_core::tensor::VERTICES;
use hypgcn_core::{
    AdjacencyStack, CavityAxis, ChannelMask, FeatureTensor, FixedQ8p8, Model, ModelConfig, PrunedModel,
    SpatialConvLayer,
};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Criterion {
    id: &'static str,
    name: &'static str,
    limit: Duration,
    run: fn() -> Outcome,
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixed(rng: &mut ChaCha8Rng, span: i16) -> FixedQ8p8 {
    FixedQ8p8::from_raw(rng.random_range(-span..=span))
}

fn ac1_reorder() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC1);
    let n = 10_000;
    for i in 0..n {
        let (ic, oc, frames) = (
            rng.random_range(1..=8),
            rng.random_range(1..=8),
            rng.random_range(1..=4),
        );
        // Occasional full-range operands exercise saturation.
        let span = if i % 50 == 0 { i16::MAX } else { 600 };
        let f = FeatureTensor::from_fn(ic, frames, |_, _, _| fixed(&mut rng, span));
        let g = AdjacencyStack::from_graphs((0..K_V * GRAPH_LEN).map(|_| fixed(&mut rng, 300)).collect())
            .map_err(|e| e.to_string())?;
        let mut w = SpatialConvLayer::zeros(ic, oc);
        for x in &mut w.weights {
            *x = if rng.random_bool(0.3) {
                FixedQ8p8::ZERO
            } else {
                fixed(&mut rng, span)
            };
        }
        let a = graph_spatial_forward_ref(&f, &g, &w).map_err(|e| e.to_string())?;
        let b = reordered_forward(&f, &g, &w).map_err(|e| e.to_string())?;
        if let Some(at) = a.first_difference(&b) {
            return Err(format!("instance {i} ({ic}x{oc}x{frames}) differs at {at:?}"));
        }
    }
    Ok(format!("{n} instances bitwise equal"))
}

fn random_micro(rng: &mut ChaCha8Rng) -> Model {
    let blocks = rng.random_range(1..=4);
    let mut widths: Vec<usize> = (0..blocks).map(|_| *[4, 8, 12, 16].choose(rng).unwrap()).collect();
    widths.sort_unstable();
    let strides: Vec<usize> = (0..blocks).map(|_| if rng.random_bool(0.3) { 2 } else { 1 }).collect();
    let frames = rng.random_range(1..=6);
    let cfg = ModelConfig::micro(3, &widths, &strides, frames);
    Model::synthesize(cfg, rng.random()).expect("valid micro config")
}

fn random_spec(rng: &mut ChaCha8Rng, blocks: usize) -> PruneSpec {
    let mut spec = PruneSpec::dense(blocks);
    for b in spec.blocks.iter_mut().skip(1) {
        b.drop_rate = rng.random_range(0.0..0.9);
    }
    spec.pattern = if rng.random_bool(0.7) { "cav-70-1" } else { "dense" }.into();
    spec.cavity_axis = if rng.random_bool(0.5) {
        CavityAxis::InputChannel
    } else {
        CavityAxis::Filter
    };
    spec.input_skip = rng.random_bool(0.5);
    spec
}

fn ac2_golden() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC2);
    let n = 1_000;
    let mut skipped = 0u64;
    for i in 0..n {
        let model = random_micro(&mut rng);
        let pruned = hybrid_prune(&model, &random_spec(&mut rng, model.blocks.len())).map_err(|e| e.to_string())?;
        let x = random_input(3, model.config.frames, rng.random());
        let (scores, counters) = run_inference(&x, &pruned).map_err(|e| e.to_string())?;
        // Oracle: the unmodified dense reference on the masked weights.
        let expected = model_forward_ref(&pruned.input_skip.apply(&x), &pruned.model).map_err(|e| e.to_string())?;
        ensure(
            scores.len() == expected.len() && scores.iter().zip(&expected).all(|(a, b)| a.to_bits() == b.to_bits()),
            || format!("model {i}: scores {scores:?} vs {expected:?}"),
        )?;
        skipped += counters.total() - counters.performed();
    }
    Ok(format!("{n} pruned micro-models bitwise equal, {skipped} MACs skipped"))
}

fn ac3_coarse_noop() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC3);
    let n = 500;
    let mut filters_removed = 0usize;
    for i in 0..n {
        let model = random_micro(&mut rng);
        let spec = random_spec(&mut rng, model.blocks.len());
        let reorg = apply_dataflow_reorg(&model, &spec).map_err(|e| e.to_string())?;
        let coarse = propagate_coarse_temporal(reorg.clone()).map_err(|e| e.to_string())?;
        filters_removed += coarse.masks.iter().map(|m| m.filters.dropped_count()).sum::<usize>();
        let pattern = spec.block_pattern(0).map_err(|e| e.to_string())?;
        let pairs = [
            (reorg.clone(), coarse.clone()),
            (
                apply_fine_grained(reorg, &pattern),
                apply_fine_grained(coarse, &pattern),
            ),
        ];
        let x = random_input(3, model.config.frames, rng.random());
        for (a, b) in pairs {
            let sa = model_forward_ref(&x, &a.model).map_err(|e| e.to_string())?;
            let sb = model_forward_ref(&x, &b.model).map_err(|e| e.to_string())?;
            ensure(sa.iter().zip(&sb).all(|(p, q)| p.to_bits() == q.to_bits()), || {
                format!("model {i}: propagation changed scores {sa:?} -> {sb:?}")
            })?;
        }
    }
    Ok(format!(
        "{n} micro-models unchanged, {filters_removed} temporal filters removed"
    ))
}

fn ac4_expected_work() -> Outcome {
    let mut worst = 0.0f64;
    for i in 0..=1000 {
        let s = i as f64 * 1e-3;
        let oracle = 3.0 * (1.0 - s);
        for e in [expected_valid(s), expected_valid_closed(6, s)] {
            let e = e.map_err(|e| e.to_string())?;
            worst = worst.max((e - oracle).abs());
        }
    }
    ensure(worst < 1e-12, || format!("grid error {worst:e}"))?;
    let n = 100_000usize;
    let mut notes = Vec::new();
    for (i, s) in [0.1, 0.3, 0.5, 0.7, 0.9].into_iter().enumerate() {
        let stream = SubFilterStream::random(6, s, n, 40 + i as u64).map_err(|e| e.to_string())?;
        let stats = simulate_dyn_pe(&DynMultPeConfig::static_baseline(6), &stream).map_err(|e| e.to_string())?;
        let mean = stats.useful_macs as f64 / n as f64;
        // Three independent positions per event: variance 3 s (1 - s).
        let sigma = (3.0 * s * (1.0 - s) / n as f64).sqrt();
        let z = (mean - 3.0 * (1.0 - s)) / sigma;
        ensure(z.abs() < 3.0, || format!("s={s}: mean {mean} is {z:.2} sigma off"))?;
        notes.push(format!("{z:+.2}"));
    }
    Ok(format!(
        "grid error {worst:.1e}; Monte Carlo z = [{}]",
        notes.join(", ")
    ))
}

fn bank_with_popcount(rng: &mut ChaCha8Rng, n: usize) -> BankVector {
    let mut lanes: Vec<usize> = (0..16).collect();
    lanes.shuffle(rng);
    let mut v = [FixedQ8p8::ZERO; 16];
    for (i, &lane) in lanes.iter().enumerate() {
        v[lane] = FixedQ8p8::from_raw(if i < n {
            rng.random_range(1..=i16::MAX)
        } else if rng.random_bool(0.5) {
            0
        } else {
            rng.random_range(i16::MIN..0)
        });
    }
    v
}

fn ac5_rfc_roundtrip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC5);
    let n = 100_000;
    let raw: Vec<BankVector> = (0..n).map(|i| bank_with_popcount(&mut rng, i % 17)).collect();
    let enc: Vec<_> = raw.iter().map(relu_encode_bank).collect();
    let hist = SparsityHistogram::from_counts(histogram_from_banks(&enc)).map_err(|e| e.to_string())?;
    let mut layout = size_minibanks(&hist, n, 1, 1).map_err(|e| e.to_string())?;
    for e in &enc {
        layout.store_bank(e).map_err(|e| e.to_string())?;
    }
    let mut stream = Vec::new();
    write_stream(&mut stream, &enc).map_err(|e| e.to_string())?;
    let streamed = read_stream(stream.as_slice()).map_err(|e| e.to_string())?;
    for (line, v) in raw.iter().enumerate() {
        let oracle: Vec<i16> = v.iter().map(|x| x.raw().max(0)).collect();
        let loaded = layout.load_bank(line).map_err(|e| e.to_string())?;
        for bank in [loaded, streamed[line]] {
            let back = decode_bank(&bank).map_err(|e| e.to_string())?;
            let got: Vec<i16> = back.iter().map(|x| x.raw()).collect();
            ensure(got == oracle, || format!("line {line}: {got:?} vs {oracle:?}"))?;
        }
    }
    Ok(format!("{n} banks through store/load and stream, popcounts 0..=16"))
}

fn ac6_worked_example() -> Outcome {
    let hot = 0b0001_1100_0000_0111u16;
    let mut v = [FixedQ8p8::from_raw(-3); 16];
    for (lane, x) in v.iter_mut().enumerate() {
        if hot >> lane & 1 == 1 {
            *x = FixedQ8p8::from_raw(lane as i16 + 1);
        }
    }
    let e = relu_encode_bank(&v);
    ensure(e.hot == hot, || format!("hot {:016b}", e.hot))?;
    ensure(e.mbhot == 0b1100, || format!("mbhot {:04b}", e.mbhot))?;
    let occupancy: Vec<usize> = (0..4)
        .map(|j| e.minibank(j).iter().filter(|x| !x.is_zero()).count())
        .collect();
    ensure(occupancy == [4, 2, 0, 0], || format!("occupancy {occupancy:?}"))?;
    Ok(format!(
        "hot {hot:016b} -> mbhot {:04b}, occupancy {occupancy:?}",
        e.mbhot
    ))
}

/// `1 − Σ_c f_c · (c + 1) / 4`: the share of mini-bank slots left empty.
fn weighted_sum_reduction(f: [f64; 4]) -> f64 {
    1.0 - f.iter().enumerate().map(|(c, x)| x * (c + 1) as f64 / 4.0).sum::<f64>()
}

fn ac7_storage() -> Outcome {
    let cfg = StorageConfig::default();
    let uniform =
        storage_report("uniform", &SparsityHistogram::uniform(), 16_000, None, &cfg).map_err(|e| e.to_string())?;
    ensure(uniform.reduction_exact == 0.375, || {
        format!("uniform {}", uniform.reduction_exact)
    })?;
    let rows = [
        ("l1.sconv", [0.00005, 0.2935, 0.7064, 0.00005]),
        ("l1.tconv", [0.0002, 0.9473, 0.0525, 0.0]),
        ("l2.sconv", [0.0, 0.0073, 0.7579, 0.2348]),
        ("l2.tconv", [0.0, 0.3424, 0.6576, 0.0]),
    ];
    let mut notes = vec!["uniform 37.500%".to_string()];
    for (name, f) in rows {
        let hist = SparsityHistogram::new(f).map_err(|e| e.to_string())?;
        let r = storage_report(name, &hist, 15_000, None, &cfg).map_err(|e| e.to_string())?;
        let oracle = weighted_sum_reduction(f);
        ensure((r.reduction_exact - oracle).abs() * 100.0 < 0.1, || {
            format!("{name}: {} vs oracle {oracle}", r.reduction_exact)
        })?;
        notes.push(format!("{name} {:.3}%", 100.0 * r.reduction_exact));
    }
    Ok(notes.join(", "))
}

fn ac8_dsp_tradeoff() -> Outcome {
    let scenario = Scenario::load(&workspace().join("configs/sim/table2.toml")).map_err(|e| e.to_string())?;
    let t = scenario
        .reference_totals
        .ok_or("table2 scenario carries no reference totals")?;
    let oracle = (1149.0 - 882.0) / 1149.0 * 100.0;
    let got = 100.0 * t.reduction();
    ensure((t.static_dsps, t.dynamic_dsps) == (1149, 882), || {
        format!("totals {t:?}")
    })?;
    ensure((got - 23.24).abs() < 0.01 && (got - oracle).abs() < 1e-12, || {
        format!("reduction {got}%")
    })?;
    let mut checked = 0;
    for q in [4usize, 6] {
        for (i, s) in [0.0, 0.2, 0.4, 0.6, 0.8].into_iter().enumerate() {
            let stream = SubFilterStream::random(q, s, 20_000, 80 + i as u64).map_err(|e| e.to_string())?;
            let mut prev = -1.0f64;
            for d in (1..=q).rev() {
                let stats = simulate_dyn_pe(&DynMultPeConfig::new(q, d).map_err(|e| e.to_string())?, &stream)
                    .map_err(|e| e.to_string())?;
                if d == q {
                    ensure(stats.max_delay_pct == 0.0, || {
                        format!("q={q} s={s}: delay {} at full DSPs", stats.max_delay_pct)
                    })?;
                }
                ensure(stats.max_delay_pct >= prev, || {
                    format!("q={q} s={s} d={d}: delay fell to {}", stats.max_delay_pct)
                })?;
                prev = stats.max_delay_pct;
                checked += 1;
            }
        }
    }
    Ok(format!("reduction {got:.4}%, delay monotone over {checked} runs"))
}

fn ac9_scm_schedule() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xAC9);
    for _ in 0..200 {
        let (rows, oc, ic) = (
            rng.random_range(1..=6),
            rng.random_range(1..=8),
            2 * rng.random_range(1..=8),
        );
        let mut bits: Vec<bool> = (0..ic).map(|i| i < ic / 2).collect();
        bits.shuffle(&mut rng);
        let half = ChannelMask::from_bits(bits);
        let full = scm_schedule(rows, oc, &ChannelMask::all(ic)).count() as u64;
        let cut = scm_schedule(rows, oc, &half).count() as u64;
        let oracle = (rows * VERTICES * oc * ic) as u64;
        ensure(full == oracle && scm_trace_len(rows, oc, ic) == oracle, || {
            format!("{rows}x{oc}x{ic}: {full}")
        })?;
        ensure(2 * cut == full, || {
            format!("{rows}x{oc}x{ic}: half drop {cut} of {full}")
        })?;
    }
    Ok("200 configurations, full and 50% drop".into())
}

/// Graph-product MACs counted straight from the weights: an input channel
/// costs `3 × 25 × 25 × frames` unless all its spatial weights are zero.
fn graph_skip_oracle(p: &PrunedModel) -> f64 {
    let cfg = &p.model.config;
    let mut t = if p.input_skip == hypgcn_core::InputSkip::Off {
        cfg.frames
    } else {
        cfg.frames.div_ceil(2)
    };
    let (mut total, mut skipped) = (0u64, 0u64);
    for block in &p.model.blocks {
        let w = &block.spatial;
        let per = (K_V * VERTICES * VERTICES * t) as u64;
        for ic in 0..w.in_channels {
            total += per;
            let dead = (0..K_V).all(|k| (0..w.out_channels).all(|oc| w.weight(k, ic, oc).is_zero()));
            if dead {
                skipped += per;
            }
        }
        t = t.div_ceil(block.config.stride);
    }
    skipped as f64 / total as f64
}

fn ac10_compression() -> Outcome {
    let spec = PruneSpec::load(&workspace().join("configs/prune/hybrid-86.toml")).map_err(|e| e.to_string())?;
    let model = Model::synthesize(ModelConfig::standard(60), 1).map_err(|e| e.to_string())?;
    let pruned = hybrid_prune(&model, &spec).map_err(|e| e.to_string())?;
    let stats = compression_stats(&pruned);
    ensure(stats.compression_ratio >= 7.0 && stats.compression_ratio <= 8.4, || {
        format!("ratio {}", stats.compression_ratio)
    })?;
    let oracle = graph_skip_oracle(&pruned);
    ensure((stats.graph_skip_efficiency - oracle).abs() < 1e-9, || {
        format!("graph skip {} vs oracle {oracle}", stats.graph_skip_efficiency)
    })?;
    // Executed counters agree with the same oracle on a micro-model.
    let micro = Model::synthesize(ModelConfig::micro(3, &[8, 8, 16], &[1, 2, 1], 6), 5).map_err(|e| e.to_string())?;
    let mp = hybrid_prune(&micro, &PruneSpec::uniform(3, 0.5, "cav-70-1")).map_err(|e| e.to_string())?;
    let (_, counters) = run_inference(&random_input(3, 6, 1), &mp).map_err(|e| e.to_string())?;
    ensure(
        (counters.graph_skip_efficiency() - graph_skip_oracle(&mp)).abs() < 1e-9,
        || format!("executed graph skip {}", counters.graph_skip_efficiency()),
    )?;
    Ok(format!(
        "ratio {:.3}x ({:.2}% reduction), graph skip {:.6} = oracle",
        stats.compression_ratio,
        100.0 * (1.0 - 1.0 / stats.compression_ratio),
        oracle
    ))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_rfc-hypgcn"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "{args:?} exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn ac11_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let ws = workspace();
    let cfg = |p: &str| ws.join(p).to_string_lossy().into_owned();
    let mut compared = 0;
    for run in ["a", "b"] {
        let d = |name: &str| tmp.path().join(run).join(name).to_string_lossy().into_owned();
        let model = format!("{}/model.rfch", d("synth"));
        let pruned = format!("{}/pruned.rfch", d("prune"));
        cli(&[
            "synth",
            "--out",
            &d("synth"),
            "--seed",
            "4",
            "--widths",
            "8,8,16,16,16,16,32,32,32,32",
            "--strides",
            "1,1,1,1,2,1,1,2,1,1",
        ])?;
        cli(&[
            "prune",
            "--model",
            &model,
            "--spec",
            &cfg("configs/prune/hybrid-86.toml"),
            "--out",
            &d("prune"),
        ])?;
        cli(&[
            "verify",
            "--model",
            &model,
            "--pruned",
            &pruned,
            "--samples",
            "6",
            "--seed",
            "9",
            "--threads",
            "3",
            "--out",
            &d("verify"),
        ])?;
        cli(&[
            "rfc",
            "--model",
            &pruned,
            "--samples",
            "3",
            "--seed",
            "9",
            "--threads",
            "3",
            "--out",
            &d("rfc-model"),
        ])?;
        cli(&["rfc", "--scenario", &cfg("configs/rfc/table3.toml"), "--out", &d("rfc")])?;
        cli(&[
            "sim",
            "--scenario",
            &cfg("configs/sim/table2.toml"),
            "--seed",
            "9",
            "--out",
            &d("sim"),
        ])?;
    }
    for sub in ["synth", "prune", "verify", "rfc-model", "rfc", "sim"] {
        let a = dir_bytes(&tmp.path().join("a").join(sub));
        let b = dir_bytes(&tmp.path().join("b").join(sub));
        ensure(!a.is_empty() && a == b, || format!("{sub}: outputs differ"))?;
        compared += a.len();
    }
    Ok(format!("{compared} output files byte-identical across two runs"))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: "AC1",
            name: "dataflow reorder equivalence",
            limit: Duration::from_secs(60),
            run: ac1_reorder,
        },
        Criterion {
            id: "AC2",
            name: "golden sparse equivalence",
            limit: Duration::from_secs(300),
            run: ac2_golden,
        },
        Criterion {
            id: "AC3",
            name: "coarse pruning no-op",
            limit: Duration::from_secs(60),
            run: ac3_coarse_noop,
        },
        Criterion {
            id: "AC4",
            name: "expected valid work",
            limit: Duration::from_secs(30),
            run: ac4_expected_work,
        },
        Criterion {
            id: "AC5",
            name: "RFC roundtrip",
            limit: Duration::from_secs(30),
            run: ac5_rfc_roundtrip,
        },
        Criterion {
            id: "AC6",
            name: "RFC worked example",
            limit: Duration::from_secs(5),
            run: ac6_worked_example,
        },
        Criterion {
            id: "AC7",
            name: "storage sizing",
            limit: Duration::from_secs(5),
            run: ac7_storage,
        },
        Criterion {
            id: "AC8",
            name: "DSP trade-off",
            limit: Duration::from_secs(120),
            run: ac8_dsp_tradeoff,
        },
        Criterion {
            id: "AC9",
            name: "SCM schedule law",
            limit: Duration::from_secs(10),
            run: ac9_scm_schedule,
        },
        Criterion {
            id: "AC10",
            name: "compression accounting",
            limit: Duration::from_secs(60),
            run: ac10_compression,
        },
        Criterion {
            id: "AC11",
            name: "CLI determinism",
            limit: Duration::from_secs(120),
            run: ac11_determinism,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; over the {:?} limit", c.limit)),
            Err(e) => (false, e),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{:<5} {} {:<30} {:>8.2}s  {detail}",
            c.id,
            if ok { "PASS" } else { "FAIL" },
            c.name,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
