//! Walks the canonical social-signal catalog: 21 keyframed AU animations,
//! 7 per emotion, each interpolated to a 25-frame trajectory over the 14
//! action-unit channels.
//!
//! For every signal this prints its label, the channels it animates, and
//! the frame of peak total activation; one signal is then dumped as a
//! small intensity heat map to show the keyframe interpolation at work.
//!
//! Run with: `cargo run --example signal_catalog`

use synthfer::signalgen::{
    canonical_signals, interpolate_trajectory, AuChannel, EmotionLabel, NUM_CHANNELS,
    SIGNAL_FRAMES,
};

fn main() -> synthfer::Result<()> {
    let signals = canonical_signals();
    println!("canonical catalog: {} signals\n", signals.len());

    for label in EmotionLabel::ALL {
        let of_label: Vec<_> = signals.iter().filter(|s| s.label == label).collect();
        println!("{} ({} signals)", label.name(), of_label.len());
        for spec in of_label {
            let traj = interpolate_trajectory(spec)?;
            // Channels that move at all, and the frame of peak activation.
            let mut active = Vec::new();
            for channel in AuChannel::ALL {
                let peak = (0..SIGNAL_FRAMES)
                    .map(|t| traj.at(t, channel))
                    .fold(0.0f32, f32::max);
                if peak > 0.0 {
                    active.push(channel.code());
                }
            }
            let (peak_frame, peak_sum) = (0..SIGNAL_FRAMES)
                .map(|t| (t, traj.frames()[t].iter().sum::<f32>()))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("25 frames");
            println!(
                "  {:<22} channels [{}], peak sum {:.2} at frame {}",
                spec.id,
                active.join(", "),
                peak_sum,
                peak_frame
            );
        }
        println!();
    }

    // Heat map of one signal: rows are channels, columns are frames.
    let spec = &signals[0];
    let traj = interpolate_trajectory(spec)?;
    println!("intensity map of {:?} (darker = stronger):", spec.id);
    const SHADES: [char; 5] = [' ', '.', ':', 'o', '#'];
    for c in 0..NUM_CHANNELS {
        let channel = AuChannel::ALL[c];
        let row: String = (0..SIGNAL_FRAMES)
            .map(|t| {
                let v = traj.at(t, channel).clamp(0.0, 1.0);
                SHADES[((v * (SHADES.len() - 1) as f32).round()) as usize]
            })
            .collect();
        println!("  {:>5} |{row}|", channel.code());
    }
    Ok(())
}
