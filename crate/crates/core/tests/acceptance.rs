//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mfvmp::allocation::server_has_surplus;
use mfvmp::baselines::{exact_solve, ffd_solve, greedy_solve, lower_bound, sfea_solve};
use mfvmp::bench::REPORT_TIME_COLUMN;
use mfvmp::consolidation::remigrate_and_merge;
use mfvmp::decomposition::{build_unified_space, decode, split};
use mfvmp::mfea::{self, crossover, evaluate, mutate, swap_mutation, Genotype, Problem};
use mfvmp::{generate_instance, Instance, MfeaConfig, PsAvailability, VmType};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const BASE_VMS: usize = 5000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn base_instance(seed: u64) -> Instance {
    generate_instance(BASE_VMS, seed, PsAvailability::Unbounded).unwrap()
}

struct BaseRuns {
    mfea_cost: Vec<f64>,
    mfea_util: Vec<f64>,
    mfea_ms: Vec<f64>,
    sfea_cost: Vec<f64>,
    sfea_ms: Vec<f64>,
    ffd_cost: Vec<f64>,
    ffd_util: Vec<f64>,
    merge_delta: Vec<f64>,
}

fn base_runs() -> BaseRuns {
    let mut r = BaseRuns {
        mfea_cost: vec![],
        mfea_util: vec![],
        mfea_ms: vec![],
        sfea_cost: vec![],
        sfea_ms: vec![],
        ffd_cost: vec![],
        ffd_util: vec![],
        merge_delta: vec![],
    };
    for seed in SEEDS {
        let inst = base_instance(seed);
        let cfg = MfeaConfig {
            seed,
            ..Default::default()
        };

        let t = Instant::now();
        let out = mfea::run(&inst, &cfg).unwrap();
        let m = remigrate_and_merge(&inst, &out.best_per_task, &inst.ps_availability).unwrap();
        r.mfea_ms.push(t.elapsed().as_secs_f64() * 1e3);
        let before: f64 = out.best_costs.iter().map(|c| c.as_f64()).sum();
        r.merge_delta.push(m.cost().as_f64() - before);
        m.check(&inst, true).unwrap();
        r.mfea_cost.push(m.cost().as_f64());
        r.mfea_util.push(m.utilization().comprehensive);

        let t = Instant::now();
        let (s, _) = sfea_solve(&inst, &cfg).unwrap();
        r.sfea_ms.push(t.elapsed().as_secs_f64() * 1e3);
        s.check(&inst, true).unwrap();
        r.sfea_cost.push(s.cost().as_f64());

        let f = ffd_solve(&inst).unwrap();
        f.check(&inst, true).unwrap();
        r.ffd_cost.push(f.cost().as_f64());
        r.ffd_util.push(f.utilization().comprehensive);
    }
    r
}

fn c1_utilization(r: &BaseRuns) -> Outcome {
    let u = mean(&r.mfea_util);
    outcome(
        u >= 0.80,
        format!(
            "mean MFEA utilization {u:.4} (>= 0.80), per seed {:.4?}",
            r.mfea_util
        ),
    )
}

fn c2_ffd_gap(r: &BaseRuns) -> Outcome {
    let gaps: Vec<f64> = r
        .ffd_cost
        .iter()
        .zip(&r.mfea_cost)
        .map(|(f, m)| (f - m) / f)
        .collect();
    let gap = (mean(&r.ffd_cost) - mean(&r.mfea_cost)) / mean(&r.ffd_cost);
    let worst = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        gap >= 0.35 && worst >= 0.35,
        format!("cost gap to FFD {gap:.4} on means, worst instance {worst:.4} (>= 0.35)"),
    )
}

fn c3_ffd_band(r: &BaseRuns) -> Outcome {
    let ok = r.ffd_util.iter().all(|u| (0.53..=0.63).contains(u));
    outcome(
        ok,
        format!(
            "FFD utilization per instance {:.4?} (within 0.53..0.63)",
            r.ffd_util
        ),
    )
}

fn c4_ablation(r: &BaseRuns) -> Outcome {
    let (mc, sc) = (mean(&r.mfea_cost), mean(&r.sfea_cost));
    let (mt, st) = (mean(&r.mfea_ms), mean(&r.sfea_ms));
    outcome(
        mc <= sc && mt < st,
        format!(
            "mean cost MFEA {mc:.2} vs SFEA {sc:.2}; mean time MFEA {mt:.0} ms vs SFEA {st:.0} ms"
        ),
    )
}

fn c5_convergence() -> Outcome {
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for seed in SEEDS {
        let inst = base_instance(seed);
        let cfg = MfeaConfig {
            seed,
            track_merged: true,
            ..Default::default()
        };
        let out = mfea::run(&inst, &cfg).unwrap();
        let merged = out.trace.series(0);
        // best-so-far merged cost
        let best_at = |it: usize| {
            merged
                .iter()
                .filter(|(i, _)| *i <= it)
                .map(|(_, c)| c.as_f64())
                .fold(f64::INFINITY, f64::min)
        };
        let (c10, c50) = (best_at(10), best_at(50));
        let rel = (c10 - c50) / c50;
        worst = worst.max(rel);
        detail.push(format!("{c10:.2}/{c50:.2}"));
    }
    outcome(
        worst <= 0.05,
        format!(
            "merged cost at iteration 10 vs 50, worst excess {:.2}% (<= 5%): {}",
            worst * 100.0,
            detail.join(" ")
        ),
    )
}

fn c6_scaling() -> Outcome {
    let time = |v: usize| {
        let inst = generate_instance(v, 11, PsAvailability::Unbounded).unwrap();
        let cfg = MfeaConfig {
            seed: 11,
            ..Default::default()
        };
        median(
            (0..3)
                .map(|_| {
                    let t = Instant::now();
                    mfea::solve(&inst, &cfg).unwrap();
                    t.elapsed().as_secs_f64() * 1e3
                })
                .collect(),
        )
    };
    let (small, large) = (time(5000), time(20000));
    let ratio = large / small;
    outcome(
        ratio <= 6.0,
        format!(
            "median time 5000 VMs {small:.0} ms, 20000 VMs {large:.0} ms, ratio {ratio:.2} (<= 6)"
        ),
    )
}

fn c7_oracles() -> Outcome {
    let mut failures = Vec::new();
    let mut count = 0;
    for seed in 0..128u64 {
        let v = 1 + (seed % 8) as usize;
        let avail = if seed % 3 == 0 {
            PsAvailability::PerType(v as u32)
        } else {
            PsAvailability::Unbounded
        };
        let inst = generate_instance(v, seed, avail).unwrap();
        let (exact, best) = exact_solve(&inst).unwrap();
        if best.check(&inst, true).is_err() || best.cost() != exact {
            failures.push(format!("seed {seed}: exact placement invalid"));
        }
        if lower_bound(&inst) > exact.as_f64() + 1e-9 {
            failures.push(format!("seed {seed}: lower bound above optimum"));
        }
        let cfg = MfeaConfig {
            seed,
            n_per_task: v.min(3),
            individuals_per_task: 3,
            max_iterations: 5,
            ..Default::default()
        };
        let solutions = [
            ("ffd", ffd_solve(&inst)),
            ("greedy", greedy_solve(&inst)),
            ("mfea", mfea::solve(&inst, &cfg).map(|x| x.0)),
            ("sfea", sfea_solve(&inst, &cfg).map(|x| x.0)),
        ];
        for (name, sol) in solutions {
            match sol {
                Ok(p) => {
                    if let Err(e) = p.check(&inst, true) {
                        failures.push(format!("seed {seed}: {name} infeasible: {e}"));
                    } else if p.cost() < exact {
                        failures.push(format!("seed {seed}: {name} beats the optimum"));
                    }
                }
                Err(e) => failures.push(format!("seed {seed}: {name} failed: {e}")),
            }
        }
        count += 1;
    }
    outcome(
        failures.is_empty(),
        format!(
            "{count} instances of 1..8 VMs, {} violations {:?}",
            failures.len(),
            failures.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn c8_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures: Vec<String> = Vec::new();

    // split arithmetic
    for case in 0..1000 {
        let v = rng.gen_range(1..=3000);
        let n = rng.gen_range(1..=v);
        let per = rng.gen_range(0..5000);
        let inst = generate_instance(v, case, PsAvailability::PerType(per)).unwrap();
        let tasks = split(&inst, n, case).unwrap();
        let sizes: usize = tasks.iter().map(|t| t.len()).sum();
        let budgets_ok = (0..inst.ps_types.len())
            .all(|l| tasks.iter().map(|t| t.ps_budget[l]).sum::<u32>() == per);
        let mut all: Vec<usize> = tasks.iter().flat_map(|t| t.vms.iter().copied()).collect();
        all.sort_unstable();
        if sizes != v || !budgets_ok || all != (0..v).collect::<Vec<_>>() {
            failures.push(format!("split V={v} n={n}"));
        }
    }

    // crossover, mutation and decode
    let mut cases = 0;
    while cases < 10_000 {
        let v = rng.gen_range(2..=240);
        let n = rng.gen_range(1..=v.min(60));
        let inst = generate_instance(v, rng.gen(), PsAvailability::Unbounded).unwrap();
        let problem = Problem::decompose(&inst, n, rng.gen()).unwrap();
        let h = problem.num_tasks();
        let random_parent = |rng: &mut ChaCha8Rng| {
            let mut order = problem.space.identity_order();
            order.shuffle(rng);
            evaluate(
                Genotype {
                    order,
                    skill_factor: rng.gen_range(0..h),
                },
                &problem,
            )
            .unwrap()
        };
        let parents: Vec<_> = (0..4).map(|_| random_parent(&mut rng)).collect();
        for _ in 0..50 {
            let a = &parents[rng.gen_range(0..4)];
            let b = &parents[rng.gen_range(0..4)];
            let mut child = crossover(a, b, problem.space.len(), &mut rng);
            let crossed_ok = problem.space.is_permutation(&child);
            mutate(&mut child, &mut rng, 0.5);
            swap_mutation(&mut child, &mut rng);
            if !crossed_ok || !problem.space.is_permutation(&child) {
                failures.push(format!("permutation lost, V={v} n={n}"));
            }
            let task = rng.gen_range(0..h);
            match decode(&problem.space, &child, task) {
                Ok(slots) => {
                    let mut ms: BTreeMap<VmType, u32> = BTreeMap::new();
                    for s in slots {
                        *ms.entry(problem.space.slot_type(s as usize)).or_default() += 1;
                    }
                    if ms != problem.tasks[task].vm_multiset {
                        failures.push(format!("decode multiset differs, V={v} n={n}"));
                    }
                }
                Err(e) => failures.push(format!("decode failed: {e}")),
            }
            if let Err(e) = evaluate(
                Genotype {
                    order: child,
                    skill_factor: task,
                },
                &problem,
            ) {
                failures.push(format!("cross-task child not evaluable: {e}"));
            }
            cases += 1;
        }
    }

    // merge conservation
    for seed in 0..40u64 {
        let v = 20 + (seed as usize * 37) % 400;
        let inst = generate_instance(v, seed, PsAvailability::Unbounded).unwrap();
        let cfg = MfeaConfig {
            seed,
            n_per_task: 10 + (seed as usize % 5) * 10,
            max_iterations: 3,
            ..Default::default()
        };
        let out = mfea::run(&inst, &cfg).unwrap();
        let merged = remigrate_and_merge(&inst, &out.best_per_task, &inst.ps_availability).unwrap();
        let kept_verbatim = out
            .best_per_task
            .iter()
            .flat_map(|p| p.servers.iter())
            .filter(|s| !server_has_surplus(s))
            .all(|s| merged.servers.contains(s));
        if merged.check(&inst, true).is_err() || !kept_verbatim {
            failures.push(format!("merge seed {seed}"));
        }
    }

    // unified space is the per-type maximum across tasks
    for seed in 0..200u64 {
        let inst =
            generate_instance(rng.gen_range(1..500), seed, PsAvailability::Unbounded).unwrap();
        let tasks = split(&inst, rng.gen_range(1..=inst.num_vms()), seed).unwrap();
        let space = build_unified_space(&tasks);
        let ok = space.multiset().iter().all(|(ty, &c)| {
            tasks
                .iter()
                .map(|t| t.vm_multiset.get(ty).copied().unwrap_or(0))
                .max()
                == Some(c)
        });
        if !ok {
            failures.push(format!("unified space seed {seed}"));
        }
    }

    outcome(
        failures.is_empty(),
        format!(
            "1000 split pairs, {cases} crossover/mutation/decode cases, 40 merges, 200 unified spaces; {} violations {:?}",
            failures.len(),
            failures.iter().take(3).collect::<Vec<_>>()
        ),
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_mfvmp"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn strip_time(csv: &str, column: usize) -> Vec<Vec<String>> {
    csv.lines()
        .map(|l| {
            l.split(',')
                .enumerate()
                .filter(|(i, _)| *i != column)
                .map(|(_, f)| f.to_string())
                .collect()
        })
        .collect()
}

fn c9_determinism() -> Outcome {
    let check = || -> Result<usize, String> {
        let mut compared = 0;
        let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
        let invocations: [&[&str]; 5] = [
            &["gen", "--vms", "600", "--seed", "9", "--out", "inst.txt"],
            &[
                "solve",
                "--solver",
                "mfea,sfea,ffd",
                "--instance",
                "inst.txt",
                "--seed",
                "3",
                "--repeats",
                "3",
                "--iters",
                "10",
                "--out",
                "solve.csv",
                "--summary",
                "summary.csv",
                "--trace",
                "trace.csv",
                "--placements",
                "pl",
            ],
            &[
                "sweep",
                "--param",
                "rmp",
                "--values",
                "0.1,0.5,0.9",
                "--instance",
                "inst.txt",
                "--repeats",
                "2",
                "--iters",
                "5",
                "--out",
                "sweep.csv",
            ],
            &["gen", "--vms", "7", "--seed", "2", "--out", "tiny.txt"],
            &[
                "solve",
                "--solver",
                "exact,ffd",
                "--instance",
                "tiny.txt",
                "--out",
                "tiny.csv",
            ],
        ];
        for d in &dirs {
            for args in invocations {
                run_cli(d.path(), args)?;
            }
        }
        let read = |d: usize, f: &str| {
            std::fs::read_to_string(dirs[d].path().join(f)).map_err(|e| format!("{f}: {e}"))
        };
        for f in ["inst.txt", "tiny.txt"] {
            if read(0, f)? != read(1, f)? {
                return Err(format!("{f} differs"));
            }
            compared += 1;
        }
        for f in ["solve.csv", "sweep.csv", "tiny.csv"] {
            if strip_time(&read(0, f)?, REPORT_TIME_COLUMN)
                != strip_time(&read(1, f)?, REPORT_TIME_COLUMN)
            {
                return Err(format!("{f} differs beyond timing"));
            }
            compared += 1;
        }
        // summary: drop the two timing columns
        let summary = |d| -> Result<Vec<Vec<String>>, String> {
            Ok(strip_time(&read(d, "summary.csv")?, 4)
                .into_iter()
                .map(|mut r| {
                    r.remove(4);
                    r
                })
                .collect())
        };
        if summary(0)? != summary(1)? {
            return Err("summary differs beyond timing".into());
        }
        // traces: drop elapsed_ms
        for f in [
            "trace-mfea-r0.csv",
            "trace-mfea-r1.csv",
            "trace-sfea-r2.csv",
        ] {
            if strip_time(&read(0, f)?, 3) != strip_time(&read(1, f)?, 3) {
                return Err(format!("{f} differs beyond timing"));
            }
            compared += 1;
        }
        for name in ["mfea-r0", "mfea-r2", "sfea-r1", "ffd-r0"] {
            let f = format!("pl/{name}.placement");
            if read(0, &f)? != read(1, &f)? {
                return Err(format!("{f} differs"));
            }
            run_cli(
                dirs[0].path(),
                &["verify", "--instance", "inst.txt", "--placement", &f],
            )?;
            compared += 1;
        }
        Ok(compared + 1)
    };
    match check() {
        Ok(n) => outcome(true, format!("{n} output files identical across two CLI runs (timing columns excluded), placements verify")),
        Err(e) => outcome(false, e),
    }
}

fn main() {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, o: Outcome| {
        println!(
            "{} criterion {n} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        if !o.pass {
            failed += 1;
        }
    };
    let runs = base_runs();
    println!(
        "INFO merge cost change per seed (merged minus sum of task bests): {:.2?}",
        runs.merge_delta
    );
    report(1, "utilization", c1_utilization(&runs));
    report(2, "ffd gap", c2_ffd_gap(&runs));
    report(3, "ffd band", c3_ffd_band(&runs));
    report(4, "ablation ordering", c4_ablation(&runs));
    report(5, "convergence", c5_convergence());
    report(6, "scaling", c6_scaling());
    report(7, "oracle suite", c7_oracles());
    report(8, "invariant suite", c8_invariants());
    report(9, "determinism", c9_determinism());
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
