use segpace::cli::commands::{cmd_evaluate, cmd_finetune, cmd_pretrain_aux};
use segpace::cli::config::{Profile, RunConfig};
use segpace::cli::metrics::MetricsFile;

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
    config.optim.epochs = 12; // aux epochs
    config.optim.lr_decay_epochs = 8;
    config.finetune.epochs = 10;
    config.finetune.lr = 0.02;
    config
}

fn top1(results: &std::path::Path, split: &str) -> f64 {
    let file = MetricsFile::read(results).unwrap();
    let s = file.header.iter().position(|h| h == "split").unwrap();
    let t = file.header.iter().position(|h| h == "top1").unwrap();
    file.rows.iter().find(|r| r[s] == split).map(|r| r[t].parse().unwrap()).unwrap()
}

fn main() {
    let mut gaps = Vec::new();
    for seed in [21u64, 22, 23] {
        let dir = format!("/tmp/pa-{seed}");
        let config = ab_config(seed, &dir);
        let aux = cmd_pretrain_aux(&config, None).unwrap();
        let ft_a = cmd_finetune(&config, Some(aux.checkpoints.last().unwrap())).unwrap();
        let ev_a = cmd_evaluate(&config, ft_a.checkpoints.last().unwrap()).unwrap();
        let ft_b = cmd_finetune(&config, None).unwrap();
        let ev_b = cmd_evaluate(&config, ft_b.checkpoints.last().unwrap()).unwrap();
        let (at, av) = (top1(ev_a.results.as_ref().unwrap(), "test"), top1(ev_a.results.as_ref().unwrap(), "val"));
        let (bt, bv) = (top1(ev_b.results.as_ref().unwrap(), "test"), top1(ev_b.results.as_ref().unwrap(), "val"));
        println!("seed {seed}: aux->ft test/val {at:.3}/{av:.3}  scratch->ft {bt:.3}/{bv:.3}");
        gaps.push((at + av) - (bt + bv));
    }
    println!("mean (val+test)/2 gap: {:+.4}", gaps.iter().sum::<f64>() / (2.0 * gaps.len() as f64));
}
