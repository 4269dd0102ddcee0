//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::fs::File;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use txscope_cli::analyze::read_csv;
use txscope_cli::{analyze, RunConfig};
use txscope_core::burstiness::{burstiness_b, busy_period_ratio, memory_m, AccountTimeline};
use txscope_core::dataset::{resolve_credits, Dataset, DatasetInputs};
use txscope_core::graph::{GraphKind, TxGraph};
use txscope_core::inequality::{gini, gini_exact, replay_balances, Checkpoint, ReplayMode};
use txscope_core::ingest::{parse_credits, Format, IngestOptions};
use txscope_core::metrics::{fit_degree_tail, fit_densification, DegreeHistogram, Direction};
use txscope_core::motifs::{
    closure_times, closure_times_from_graph, global_clustering, motif_census, MotifClass, MotifCounts,
};
use txscope_core::synth::{generate, GroundTruth, SynthConfig};
use txscope_core::types::{TimeWindow, WindowScheme};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn within(elapsed: Duration, limit_s: f64) -> Outcome {
    let s = elapsed.as_secs_f64();
    ensure!(s < limit_s, "took {s:.2}s, limit {limit_s}s");
    Ok(format!("{s:.2}s"))
}

fn window(end: i64) -> TimeWindow {
    TimeWindow {
        index: 0,
        start: 0,
        end,
        scheme: WindowScheme::Sliding,
    }
}

// 1

fn gini_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n = rng.random_range(1..=200);
        let mut xs: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(0.2) {
                    0.0
                } else {
                    rng.random_range(0.0..1e6)
                }
            })
            .collect();
        if xs.iter().all(|&x| x == 0.0) {
            xs[0] = 1.0;
        }
        let total: f64 = xs.iter().sum();
        let pairwise: f64 = xs
            .iter()
            .flat_map(|a| xs.iter().map(move |b| (a - b).abs()))
            .sum();
        let brute = pairwise / (2.0 * n as f64 * total);
        let fast = gini(&xs).map_err(|e| e.to_string())?;
        worst = worst.max((fast - brute).abs());
    }
    ensure!(worst <= 1e-10, "max deviation {worst:e}");
    let exact = gini_exact(&[1, 2, 3, 4]).map_err(|e| e.to_string())?;
    ensure!(exact.to_string() == "1/4", "gini(1,2,3,4) = {exact}");
    let t = within(t0.elapsed(), 5.0)?;
    Ok(format!("max deviation {worst:e}, gini(1,2,3,4) = {exact}, {t}"))
}

// 2

/// Pair state of an ordered triple in dyad-census terms.
#[derive(Clone, Copy, PartialEq)]
enum Dyad {
    Mutual,
    Asym,
    Null,
}

fn classify_triple(adj: &[Vec<bool>], nodes: [usize; 3]) -> Option<MotifClass> {
    let e = |i: usize, j: usize| adj[nodes[i]][nodes[j]];
    let dyad = |i: usize, j: usize| match (e(i, j), e(j, i)) {
        (true, true) => Dyad::Mutual,
        (false, false) => Dyad::Null,
        _ => Dyad::Asym,
    };
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let states = pairs.map(|(i, j)| dyad(i, j));
    let count = |d| states.iter().filter(|&&s| s == d).count();
    let (m, a, n) = (count(Dyad::Mutual), count(Dyad::Asym), count(Dyad::Null));
    let out_deg = |v: usize| (0..3).filter(|&u| u != v && e(v, u)).count();
    let third = |i: usize, j: usize| 3 - i - j;
    let pair_of = |d| pairs[states.iter().position(|&s| s == d).unwrap()];
    Some(match (m, a, n) {
        (_, _, 2..) => return None,
        (2, 0, 1) => MotifClass::T201,
        (1, 1, 1) => {
            let (x, y) = pair_of(Dyad::Mutual);
            let z = third(x, y);
            // the asymmetric pair joins z to one end of the mutual pair
            let w = if dyad(z, x) == Dyad::Asym { x } else { y };
            if e(z, w) {
                MotifClass::T111D
            } else {
                MotifClass::T111U
            }
        }
        (0, 2, 1) => {
            let (x, y) = pair_of(Dyad::Null);
            let c = third(x, y);
            match out_deg(c) {
                2 => MotifClass::T021D,
                0 => MotifClass::T021U,
                _ => MotifClass::T021C,
            }
        }
        (3, 0, 0) => MotifClass::T300,
        (2, 1, 0) => MotifClass::T210,
        (1, 2, 0) => {
            let (x, y) = pair_of(Dyad::Mutual);
            let z = third(x, y);
            match out_deg(z) {
                2 => MotifClass::T120D,
                0 => MotifClass::T120U,
                _ => MotifClass::T120C,
            }
        }
        (0, 3, 0) => {
            if (0..3).all(|v| out_deg(v) == 1) {
                MotifClass::T030C
            } else {
                MotifClass::T030T
            }
        }
        other => unreachable!("dyad counts {other:?}"),
    })
}

fn motif_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut triads = 0u64;
    for trial in 0..100 {
        let n = rng.random_range(3..=30);
        let p = rng.random_range(0.1..=0.5);
        let adj: Vec<Vec<bool>> = (0..n)
            .map(|i| (0..n).map(|j| i != j && rng.random_bool(p)).collect())
            .collect();
        let mut inter = Vec::new();
        for (i, row) in adj.iter().enumerate() {
            for (j, &on) in row.iter().enumerate() {
                if on {
                    for _ in 0..rng.random_range(1..=2) {
                        inter.push((i as u32, j as u32, 1, rng.random_range(0..1000)));
                    }
                }
            }
        }
        let g = TxGraph::from_interactions(GraphKind::Uug, window(1000), inter);

        let mut counts = [0u64; 13];
        let mut triangles = 0u64;
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    if let Some(class) = classify_triple(&adj, [a, b, c]) {
                        counts[class.id()] += 1;
                        triads += 1;
                        triangles += u64::from(class.is_closed());
                    }
                }
            }
        }
        let expected = MotifCounts::from_counts(counts);
        let got = motif_census(&g);
        ensure!(got == expected, "graph {trial}: census {got:?} != {expected:?}");

        let und = |i: usize, j: usize| adj[i][j] || adj[j][i];
        let wedges: u64 = (0..n)
            .map(|v| {
                let d = (0..n).filter(|&u| und(u, v)).count() as u64;
                d * d.saturating_sub(1) / 2
            })
            .sum();
        let cc = if wedges == 0 {
            0.0
        } else {
            (3 * triangles) as f64 / wedges as f64
        };
        let got_cc = global_clustering(&g);
        ensure!(got_cc == cc, "graph {trial}: clustering {got_cc} != {cc}");
    }
    let t = within(t0.elapsed(), 30.0)?;
    Ok(format!("100 graphs, {triads} connected triads, {t}"))
}

// 3

fn burstiness() -> Outcome {
    let t0 = Instant::now();
    let b_const = burstiness_b(&[5.0, 5.0, 5.0]).map_err(|e| e.to_string())?;
    ensure!(b_const == -1.0, "B(5,5,5) = {b_const}");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let exp = Exp::new(1.0).unwrap();
    let draws: Vec<f64> = (0..100_000).map(|_| exp.sample(&mut rng)).collect();
    let b = burstiness_b(&draws).map_err(|e| e.to_string())?;
    let m = memory_m(&draws).map_err(|e| e.to_string())?;
    ensure!(b.abs() <= 0.02, "B over exponential draws = {b}");
    ensure!(m.abs() <= 0.02, "M over independent draws = {m}");
    let m_lin = memory_m(&[1.0, 2.0, 3.0, 4.0]).map_err(|e| e.to_string())?;
    ensure!(m_lin == 1.0, "M(1,2,3,4) = {m_lin}");
    let t = within(t0.elapsed(), 5.0)?;
    Ok(format!("B(exp) = {b:.4}, M(exp) = {m:.4}, {t}"))
}

// 4

fn fits() -> Outcome {
    for alpha in [1.0, 1.23, 1.5] {
        let pts: Vec<(f64, f64)> = (0..20)
            .map(|k| {
                let n = 100.0 * 1.5f64.powi(k);
                (n, n.powf(alpha))
            })
            .collect();
        let f = fit_densification(&pts).map_err(|e| e.to_string())?;
        ensure!(
            (f.exponent - alpha).abs() <= 1e-9,
            "alpha {alpha} -> {}",
            f.exponent
        );
        ensure!((f.r_squared - 1.0).abs() <= 1e-9, "r2 {}", f.r_squared);
    }

    // survival P(D > d) = 0.79 d^-1.23 for d < 10^4, remaining mass at 10^4
    let (c, gamma, max_d, total) = (0.79f64, 1.23f64, 10_000u64, 1_000_000_000_000u64);
    let surv = |d: u64| c * (d as f64).powf(-gamma);
    let mut counts = BTreeMap::new();
    let mut placed = 0u64;
    for d in 1..max_d {
        let above = (surv(d) * total as f64).round() as u64;
        let here = total - above - placed;
        if here > 0 {
            counts.insert(d, here);
        }
        placed += here;
    }
    counts.insert(max_d, total - placed);
    let h = DegreeHistogram {
        direction: Direction::All,
        counts,
    };
    let f = fit_degree_tail(&h).map_err(|e| e.to_string())?;
    ensure!((f.exponent - gamma).abs() <= 0.02, "gamma {}", f.exponent);
    ensure!((f.coefficient - c).abs() <= 0.02, "c {}", f.coefficient);
    Ok(format!("gamma {:.4}, c {:.4}", f.exponent, f.coefficient))
}

// 5 and 8 share the large fixture

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    tx: PathBuf,
    credits: PathBuf,
    labels: PathBuf,
    prices: PathBuf,
    truth: GroundTruth,
}

fn fixture() -> Result<Fixture, String> {
    let cfg = SynthConfig {
        seed: 42,
        n_accounts: 100_000,
        n_transactions: 1_000_000,
        ..SynthConfig::default()
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path().to_path_buf();
    let files = {
        let out = generate(&cfg).map_err(|e| e.to_string())?;
        out.write_to_dir(&root.join("input"), Format::Csv)
            .map_err(|e| e.to_string())?
    };
    let truth = GroundTruth::load(&files.ground_truth).map_err(|e| e.to_string())?;
    Ok(Fixture {
        _dir: dir,
        root,
        tx: files.transactions,
        credits: files.credits,
        labels: files.labels,
        prices: files.prices,
        truth,
    })
}

fn run_analyze(settings: &[(&str, String)]) -> Result<(), String> {
    let mut cfg = RunConfig::default();
    for (k, v) in settings {
        cfg.set(k, v).map_err(|e| e.to_string())?;
    }
    let manifest = analyze(&cfg).map_err(|e| e.to_string())?;
    ensure!(
        manifest.complete,
        "bundle marked partial: {:?}",
        manifest.partial_metrics
    );
    Ok(())
}

fn path(p: &Path) -> String {
    p.display().to_string()
}

fn ground_truth(fx: &Fixture) -> Outcome {
    let truth = &fx.truth;
    let days = truth.window_seconds / 86_400;
    let out = fx.root.join("truth_bundle");
    run_analyze(&[
        ("tx", path(&fx.tx)),
        ("credits", path(&fx.credits)),
        ("scheme", "sliding".into()),
        ("width-days", days.to_string()),
        ("stride-days", days.to_string()),
        ("start", truth.config.start.to_string()),
        ("metrics", "sizes,lifecycle,balances".into()),
        ("workers", "4".into()),
        ("out", path(&out)),
    ])?;

    let (header, rows) = read_csv(&out.join("sizes.csv")).map_err(|e| e.to_string())?;
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let (ci, ck) = (col("window_index"), col("kind"));
    let mut sizes: BTreeMap<(usize, String), &Vec<String>> = BTreeMap::new();
    for r in &rows {
        sizes.insert((r[ci].parse().unwrap(), r[ck].clone()), r);
    }
    let mut checked = 0;
    for w in &truth.windows {
        for (kind, tally) in &w.graphs {
            let row = sizes
                .get(&(w.index, kind.to_string()))
                .ok_or_else(|| format!("sizes.csv lacks window {} {kind}", w.index))?;
            let got: [u64; 4] =
                ["node_count", "edge_count", "tx_count", "new_nodes"].map(|c| row[col(c)].parse().unwrap());
            let want = [tally.nodes, tally.edges, tally.transactions, tally.new_nodes];
            ensure!(got == want, "window {} {kind}: {got:?} != {want:?}", w.index);
            checked += 1;
        }
    }

    let (header, rows) = read_csv(&out.join("lifecycle_sliding.csv")).map_err(|e| e.to_string())?;
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    for w in &truth.windows {
        let row = rows
            .iter()
            .find(|r| r[col("window_index")] == w.index.to_string())
            .ok_or_else(|| format!("lifecycle lacks window {}", w.index))?;
        let l = w.lifecycle;
        let want = [
            l.created_by_eoa,
            l.created_by_contract,
            l.calls_by_eoa,
            l.calls_by_contract,
            l.suicides_to_eoa,
            l.suicides_to_contract,
        ];
        let got: [u64; 6] = [
            "created_by_eoa",
            "created_by_contract",
            "calls_by_eoa",
            "calls_by_contract",
            "suicides_to_eoa",
            "suicides_to_contract",
        ]
        .map(|c| row[col(c)].parse().unwrap());
        ensure!(got == want, "lifecycle window {}: {got:?} != {want:?}", w.index);
    }

    let (_, rows) = read_csv(&out.join("balances_final.csv")).map_err(|e| e.to_string())?;
    let bundle: BTreeMap<&str, i128> = rows
        .iter()
        .map(|r| (r[0].as_str(), r[2].parse().unwrap()))
        .collect();
    for (addr, &wei) in &truth.final_balances {
        let got = bundle.get(addr.as_str()).copied().unwrap_or(0);
        ensure!(got == wei as i128, "final balance of {addr}: {got} != {wei}");
    }
    ensure!(
        bundle
            .keys()
            .all(|a| truth.final_balances.keys().any(|t| t.as_str() == *a)),
        "balances_final.csv has accounts the generator never created"
    );

    let credits =
        parse_credits(File::open(&fx.credits).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let ds = Dataset::load(
        &fx.tx,
        Format::Csv,
        IngestOptions::default(),
        DatasetInputs::default(),
    )
    .map_err(|e| e.to_string())?;
    let credits = resolve_credits(&credits, ds.registry()).map_err(|e| format!("{e:?}"))?;
    let cps: Vec<Checkpoint> = truth
        .checkpoints
        .iter()
        .map(|c| Checkpoint::Block(c.block))
        .collect();
    let replay = replay_balances(&ds.block_ordered(), &cps, &credits, ReplayMode::Strict)
        .map_err(|e| e.to_string())?;
    ensure!(replay.sheets.len() == truth.checkpoints.len(), "checkpoint count");
    for (sheet, cp) in replay.sheets.iter().zip(&truth.checkpoints) {
        ensure!(
            sheet.total() == cp.total_wei as i128,
            "block {}: total {} != {}",
            cp.block,
            sheet.total(),
            cp.total_wei
        );
    }
    let final_total = replay.sheets.last().map(|s| s.total()).unwrap_or(0);
    ensure!(
        final_total == truth.total_credited as i128,
        "final total {final_total} != credited"
    );
    Ok(format!(
        "{} windows, {checked} graph tallies, {} accounts, {} checkpoints",
        truth.windows.len(),
        truth.final_balances.len(),
        truth.checkpoints.len()
    ))
}

// 6

fn closure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut inter = Vec::new();
    let mut gaps = Vec::new();
    for k in 0..50u32 {
        let (a, b, c) = (3 * k, 3 * k + 1, 3 * k + 2);
        let t = rng.random_range(0..10_000i64);
        let lead = rng.random_range(0..500);
        let gap = rng.random_range(1..100_000);
        inter.push((a, b, t));
        inter.push((b, c, t + lead));
        inter.push((c, a, t + lead + gap));
        gaps.push(gap);
    }
    let w = window(1_000_000);
    let planted = gaps.iter().sum::<i64>() as f64 / gaps.len() as f64;
    let direct = closure_times(inter.iter().copied(), &w);
    ensure!(direct.count == 50, "{} closures", direct.count);
    ensure!(
        direct.mean == Some(planted),
        "mean {:?} != {planted}",
        direct.mean
    );
    let g = TxGraph::from_interactions(GraphKind::Uug, w, inter.iter().map(|&(s, r, t)| (s, r, 1, t)));
    let from_graph = closure_times_from_graph(&g);
    ensure!(
        from_graph.mean == Some(planted),
        "graph mean {:?} != {planted}",
        from_graph.mean
    );
    Ok(format!("mean {planted}"))
}

// 7

fn busy_period() -> Outcome {
    let tl = AccountTimeline::new(0, (0..10).map(|i| i * 100).collect());
    let r = busy_period_ratio(&tl, 0.4).map_err(|e| e.to_string())?;
    ensure!(r == 1.0 / 3.0, "ratio {r}");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ps: Vec<f64> = (1..=20).map(|k| k as f64 / 20.0).collect();
    for i in 0..200 {
        let n = rng.random_range(3..200);
        let ts: Vec<i64> = (0..n).map(|_| rng.random_range(0..1_000_000)).collect();
        let tl = AccountTimeline::new(i, ts);
        let Ok(ratios) = ps
            .iter()
            .map(|&p| busy_period_ratio(&tl, p))
            .collect::<Result<Vec<_>, _>>()
        else {
            continue;
        };
        ensure!(
            ratios.windows(2).all(|w| w[0] <= w[1]),
            "timeline {i} not monotone: {ratios:?}"
        );
    }
    Ok("ratio(p = 0.4) = 1/3".into())
}

// 8

fn reset_peak() -> bool {
    std::fs::write("/proc/self/clear_refs", "5").is_ok()
}

fn peak_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

fn bundle_bytes(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let bytes = std::fs::read(entry.path()).map_err(|e| e.to_string())?;
        files.insert(entry.file_name().to_string_lossy().into_owned(), bytes);
    }
    Ok(files)
}

fn determinism_and_performance(fx: &Fixture) -> Outcome {
    let settings = |out: &Path, workers: &str| {
        vec![
            ("tx", path(&fx.tx)),
            ("credits", path(&fx.credits)),
            ("labels", path(&fx.labels)),
            ("prices", path(&fx.prices)),
            ("metrics", "all".into()),
            ("workers", workers.to_string()),
            ("out", path(out)),
        ]
    };
    let first = fx.root.join("full_a");
    let reset = reset_peak();
    let t0 = Instant::now();
    run_analyze(&settings(&first, "4"))?;
    let elapsed = t0.elapsed().as_secs_f64();
    let peak = peak_kib().ok_or("VmHWM unavailable")?;
    let peak_mb = peak as f64 / 1024.0;
    ensure!(elapsed < 120.0, "analyze took {elapsed:.1}s, limit 120s");
    ensure!(peak_mb < 2048.0, "peak memory {peak_mb:.0} MiB, limit 2048 MiB");

    let second = fx.root.join("full_b");
    run_analyze(&settings(&second, "2"))?;
    let (a, b) = (bundle_bytes(&first)?, bundle_bytes(&second)?);
    ensure!(a.keys().eq(b.keys()), "file lists differ");
    for (name, bytes) in &a {
        ensure!(b[name] == *bytes, "{name} differs between runs");
    }
    let note = if reset {
        ""
    } else {
        " (peak not reset, includes fixture)"
    };
    Ok(format!(
        "{elapsed:.1}s, peak {peak_mb:.0} MiB{note}, {} files byte-identical across 4 and 2 workers",
        a.len()
    ))
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |id: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS [{id}] {name}: {detail}"),
            Err(why) => {
                failures += 1;
                println!("FAIL [{id}] {name}: {why}");
            }
        }
    };
    report(1, "gini oracle", &mut gini_oracle);
    report(2, "motif oracle", &mut motif_oracle);
    report(3, "burstiness", &mut burstiness);
    report(4, "fit recovery", &mut fits);
    let fx = fixture();
    report(5, "end-to-end ground truth", &mut || {
        ground_truth(fx.as_ref().map_err(Clone::clone)?)
    });
    report(6, "closure time", &mut closure);
    report(7, "busy period", &mut busy_period);
    report(8, "determinism and performance", &mut || {
        determinism_and_performance(fx.as_ref().map_err(Clone::clone)?)
    });
    if failures == 0 {
        println!("acceptance: 8 of 8 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} of 8 criteria failed");
        ExitCode::FAILURE
    }
}
