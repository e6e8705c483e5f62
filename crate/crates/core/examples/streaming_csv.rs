//! Streams a CSV in chunks, fitting with bounded memory.
//!
//! cargo run --release --example streaming_csv -- [rows]

use bigsurv::io::{write_subjects, ChunkReader, ColumnSpec};
use bigsurv::sgd::{fit_streaming, fit_streaming_epochs, SgdConfig, StreamEpochs};
use bigsurv::simulation::{default_names, mse, subjects, SimConfig};

fn main() -> bigsurv::Result<()> {
    let n: usize = std::env::args().nth(1).map_or(200_000, |a| a.parse().expect("rows"));
    let sim = SimConfig::new(n, 10, 3);
    let path = std::env::temp_dir().join(format!("bigsurv-stream-{n}.csv"));
    write_subjects(&default_names(10), subjects(&sim)?, std::fs::File::create(&path)?)?;

    let reader = ChunkReader::new(&path, ColumnSpec::default()).with_chunk_size(10_000);

    // one pass in file order
    let stream = reader.stream()?;
    let stats = stream.stats();
    let one = fit_streaming(stream, &SgdConfig::default())?;
    println!(
        "1 pass:   mse {:.2e}, {} chunks read, at most {} live, {} subjects buffered",
        mse(one.estimate(), &sim.truth())?,
        stats.materialized(),
        stats.max_live(),
        one.peak_buffered_subjects
    );

    // several passes, shuffling within windows
    let cfg = SgdConfig { epochs: 3, ..SgdConfig::default() };
    let three = fit_streaming_epochs(|| reader.stream(), &cfg, StreamEpochs { shuffle_window: 20_000 })?;
    println!(
        "3 passes: mse {:.2e}, {} subjects buffered, {:.2}s",
        mse(three.estimate(), &sim.truth())?,
        three.peak_buffered_subjects,
        three.elapsed_seconds
    );
    std::fs::remove_file(path)?;
    Ok(())
}
