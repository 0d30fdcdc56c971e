//! Resampling a recording to its target rate and cutting sliding windows.

use fedgraph::dataio::{resample, segment_windows, Modality, RawRecording};
use fedgraph::{Result, Tensor2};

fn main() -> Result<()> {
    // 8 s of a 3-axis accelerometer logged at roughly 40 Hz.
    let rate = 40.0;
    let frames = 320;
    let timestamps: Vec<i64> = (0..frames)
        .map(|i| (i as f64 * 1e6 / rate) as i64)
        .collect();
    let data = (0..frames).flat_map(|i| [i as f64, 0.0, 1.0]).collect();
    let rec = RawRecording {
        client: "s01".into(),
        exercise: 2,
        repetition: 1,
        modality: Modality::Act,
        sample_rate: rate,
        frames: Tensor2::from_vec(frames, 3, data)?,
        timestamps,
    };

    let target = Modality::Act.target_rate();
    let rs = resample(&rec, target)?;
    println!(
        "{} frames at {rate} Hz -> {} frames at {target} Hz",
        rec.len(),
        rs.len()
    );

    for (window, stride) in [(5.0, 1.0), (2.0, 2.0), (5.0, 2.5)] {
        let blocks = segment_windows(&rs, window, stride)?;
        let starts: Vec<usize> = blocks.iter().map(|b| b.start_frame).collect();
        println!(
            "window {window}s stride {stride}s: {} windows starting at {starts:?}",
            blocks.len()
        );
    }
    Ok(())
}
