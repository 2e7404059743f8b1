use segpace::cli::commands::{cmd_evaluate, cmd_finetune, cmd_pretrain_aux, cmd_pretrain_vspp};
use segpace::cli::config::{Profile, RunConfig};
use segpace::cli::metrics::MetricsFile;
use std::time::Instant;

fn ab_config(seed: u64, dir: &str) -> RunConfig {
    let mut config = RunConfig::defaults(Profile::Desk);
    config.out_dir = dir.into();
    config.seed = seed;
    config.data.videos_per_class = 50;
    config.data.frames_per_video = 20;
    config.data.frame_size = 24;
    config.augment.crop_size = 24;
    config.model.stage_widths = vec![8, 16, 32, 64];
    config.model.embed_dim = 64;
    config.model.predictor_hidden = 128;
    config.distill.bank_capacity = 256;
    config.optim.epochs = 4; // vspp epochs
    config.finetune.epochs = 10;
    config.finetune.lr = 0.02;
    config
}

fn test_top1(results: &std::path::Path) -> f64 {
    let file = MetricsFile::read(results).unwrap();
    let split_idx = file.header.iter().position(|h| h == "split").unwrap();
    let top1_idx = file.header.iter().position(|h| h == "top1").unwrap();
    file.rows
        .iter()
        .find(|r| r[split_idx] == "test")
        .map(|r| r[top1_idx].parse().unwrap())
        .unwrap()
}

fn main() {
    let t0 = Instant::now();
    let mut with_aux = Vec::new();
    let mut without = Vec::new();
    for seed in [21u64, 22, 23] {
        let dir = format!("/tmp/ab2-{seed}");
        let config = ab_config(seed, &dir);
        // Arm A: aux -> vspp -> finetune -> evaluate
        let mut aux_cfg = config.clone();
        aux_cfg.optim.epochs = 8;
        let aux = cmd_pretrain_aux(&aux_cfg, None).unwrap();
        let vspp_a = cmd_pretrain_vspp(&config, Some(aux.checkpoints.last().unwrap())).unwrap();
        let ft_a = cmd_finetune(&config, Some(vspp_a.checkpoints.last().unwrap())).unwrap();
        let eval_a = cmd_evaluate(&config, ft_a.checkpoints.last().unwrap()).unwrap();
        let a = test_top1(eval_a.results.as_ref().unwrap());
        // Arm B: vspp -> finetune -> evaluate
        let vspp_b = cmd_pretrain_vspp(&config, None).unwrap();
        let ft_b = cmd_finetune(&config, Some(vspp_b.checkpoints.last().unwrap())).unwrap();
        let eval_b = cmd_evaluate(&config, ft_b.checkpoints.last().unwrap()).unwrap();
        let b = test_top1(eval_b.results.as_ref().unwrap());
        println!("seed {seed}: with aux {a:.3}, without {b:.3} ({:?} elapsed)", t0.elapsed());
        with_aux.push(a);
        without.push(b);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("mean with {:.4}, mean without {:.4}, gap {:+.4}", mean(&with_aux), mean(&without), mean(&with_aux) - mean(&without));
    println!("total {:?}", t0.elapsed());
}
