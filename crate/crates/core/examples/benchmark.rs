//! Runs methods on the default synthetic benchmark and prints MPSR and
//! weighted SRCC per seed.
//!
//! cargo run --release -p contiqa --example benchmark -- 0,1,2 LwF-AW,SL,MH-CL

use std::time::Instant;

use contiqa::synthbench::{generate_sequence, SequenceSpec};
use contiqa::trainer::{run_methods, Method, SequenceConfig};

fn main() -> contiqa::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seeds: Vec<u64> = args
        .get(1)
        .map(|s| s.split(',').map(|v| v.parse().expect("seed")).collect())
        .unwrap_or_else(|| vec![0]);
    let methods: Vec<Method> = match args.get(2) {
        Some(s) => s
            .split(',')
            .map(str::parse)
            .collect::<contiqa::Result<_>>()?,
        None => vec![Method::Sl, Method::MhCl, Method::Lwf, Method::LwfAw],
    };
    for seed in seeds {
        let spec = SequenceSpec::benchmark(seed)?;
        let tasks = generate_sequence(&spec)?;
        let config = SequenceConfig::synthetic(methods[0], tasks[0].dim, seed);
        let start = Instant::now();
        let runs = run_methods(&tasks, &config, &methods)?;
        println!("seed {seed} ({:.1}s)", start.elapsed().as_secs_f64());
        for run in runs {
            let m = &run.metrics;
            let rows: Vec<String> = m
                .srcc_matrix
                .values
                .iter()
                .map(|r| {
                    r.iter()
                        .map(|v| format!("{v:.3}"))
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect();
            println!(
                "  {:<9} mpsr {:.4} wsrcc {:.4} | {}",
                run.method.name(),
                m.mpsr,
                m.weighted_srcc,
                rows.join(" / ")
            );
        }
    }
    Ok(())
}
