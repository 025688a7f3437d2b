//! Generates the four synthetic benchmarks at full scale and prints the
//! summary statistics that characterize each one.
//!
//! Usage: cargo run --release --example synthesize_benchmarks [OUT_DIR]
//!
//! When OUT_DIR is given, each dataset is written to OUT_DIR/<task>/ in the
//! standard directory layout (edge_list.txt, subgraphs.tsv, meta.json).

use subgnn::graph;
use subgnn::synth::{make_dataset, save_dataset, SynthConfig, Task};

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn main() {
    let out_dir = std::env::args().nth(1);
    for task in Task::ALL {
        let cfg = SynthConfig::for_task(task, 7);
        let start = std::time::Instant::now();
        let ds = make_dataset(&cfg).expect("generation failed");
        let elapsed = start.elapsed().as_secs_f64();

        let g = &ds.graph;
        println!(
            "{}: {} nodes, {} edges, {} subgraphs ({:.1}s)",
            task,
            g.num_nodes(),
            g.num_edges(),
            ds.subgraphs.len(),
            elapsed
        );

        let sizes: Vec<f64> = ds.subgraphs.iter().map(|s| s.nodes.len() as f64).collect();
        let (size_mean, size_std) = mean_std(&sizes);
        println!("  subgraph size:  {size_mean:.1} +/- {size_std:.1}");

        let densities: Vec<f64> = ds
            .subgraphs
            .iter()
            .map(|s| graph::density(g, &s.nodes).unwrap())
            .collect();
        let (d_mean, d_std) = mean_std(&densities);
        println!("  density:        {d_mean:.3} +/- {d_std:.3}");

        let cuts: Vec<f64> = ds
            .subgraphs
            .iter()
            .map(|s| graph::cut_ratio(g, &s.nodes).unwrap())
            .collect();
        let (c_mean, c_std) = mean_std(&cuts);
        println!("  cut ratio:      {c_mean:.4} +/- {c_std:.4}");

        let comps: Vec<f64> = ds
            .subgraphs
            .iter()
            .map(|s| s.components.len() as f64)
            .collect();
        let (k_mean, k_std) = mean_std(&comps);
        println!("  components:     {k_mean:.1} +/- {k_std:.1}");

        if task == Task::Coreness {
            let cores = graph::core_numbers(g);
            let means: Vec<f64> = ds
                .subgraphs
                .iter()
                .map(|s| {
                    s.nodes.iter().map(|&v| cores[v as usize] as f64).sum::<f64>()
                        / s.nodes.len() as f64
                })
                .collect();
            let (m_mean, m_std) = mean_std(&means);
            println!("  mean coreness:  {m_mean:.2} +/- {m_std:.2}");
        }

        let mut label_counts = vec![0usize; ds.label_names.len()];
        for s in &ds.subgraphs {
            label_counts[s.labels[0]] += 1;
        }
        let pairs: Vec<String> = ds
            .label_names
            .iter()
            .zip(&label_counts)
            .map(|(n, c)| format!("{n}={c}"))
            .collect();
        println!("  labels:         {}", pairs.join(" "));

        if let Some(dir) = &out_dir {
            let path = std::path::Path::new(dir).join(task.as_str());
            save_dataset(&ds, &path).expect("write failed");
            println!("  wrote {}", path.display());
        }
    }
}
