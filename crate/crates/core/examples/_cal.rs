use segpace::cli::commands::cmd_pretrain_vspp;
use segpace::cli::config::{Profile, RunConfig};
use segpace::cli::metrics::MetricsFile;
use std::time::Instant;

fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym: f64 = ys.iter().sum::<f64>() / n;
    let num: f64 = ys.iter().enumerate().map(|(i, y)| (i as f64 - xm) * (y - ym)).sum();
    let den: f64 = (0..ys.len()).map(|i| (i as f64 - xm).powi(2)).sum();
    num / den
}

fn main() {
    for seed in [7u64, 8, 9] {
        let mut config = RunConfig::defaults(Profile::Desk);
        config.out_dir = format!("/tmp/cal5-{seed}");
        config.seed = seed;
        config.optim.batch_size = 8;
        config.optim.lr_decay_epochs = 12;
        config.data.base_speed_min = 0.9;
        config.data.base_speed_max = 1.5;
        config.augment.brightness = 0.2;
        config.augment.contrast = 0.2;
        config.augment.saturation = 0.2;
        config.augment.hue = 0.05;
        config.pretext.val_draws_per_video = 8;
        let t0 = Instant::now();
        let artifacts = cmd_pretrain_vspp(&config, None).unwrap();
        let took = t0.elapsed();
        let m = MetricsFile::read(artifacts.metrics.as_ref().unwrap()).unwrap();
        let vs = m.column("val_speed_acc").unwrap();
        let vg = m.column("val_segment_acc").unwrap();
        let sl = m.column("speed_loss").unwrap();
        let gl = m.column("segment_loss").unwrap();
        let best_speed = vs.iter().cloned().fold(0.0, f64::max);
        let best_seg = vg.iter().cloned().fold(0.0, f64::max);
        println!(
            "seed {seed}: {took:?} best val speed {best_speed:.3} seg {best_seg:.3}; last5 speed {:?}; slopes: {:.4}/{:.4}",
            &vs[15..].iter().map(|v| (v * 100.0).round() / 100.0).collect::<Vec<_>>(),
            slope(&sl[10..]),
            slope(&gl[10..])
        );
    }
}
