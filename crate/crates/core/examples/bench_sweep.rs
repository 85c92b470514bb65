//! A short benchmark run. `vctp bench <config>` runs the full sweeps.

use vctp::cli::bench::{self, BenchmarkConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = BenchmarkConfig {
        attribute_counts: vec![8, 16, 24, 32],
        runs_per_point: 5,
        voter_counts: vec![5, 25, 50],
        voter_runs: 5,
        concurrency_levels: vec![50, 200],
        output_dir: std::env::temp_dir().join("vctp-bench"),
        ..BenchmarkConfig::default()
    };
    let r = bench::run(&config)?;
    println!("n_attributes  op          mean_s     stddev_s");
    for t in &r.pch {
        println!(
            "{:>12}  {:<10}  {:.6}  {:.6}",
            t.n_attributes,
            format!("{:?}", t.op),
            t.mean_s,
            t.stddev_s
        );
    }
    for v in &r.voting {
        println!(
            "{:>3} voters: admin {:.6}s, per voter {:.6}s",
            v.n_voters, v.admin_s, v.per_voter_s
        );
    }
    for (l, b) in r.load.iter().zip(&r.throughput) {
        println!(
            "{:>3} clients: {:.6}s mean response, {:.0} commits/s, {:.0} ledger bytes/s",
            l.concurrency, l.mean_response_s, l.commits_per_s, b.ledger_bytes_per_s
        );
    }
    for f in &r.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
