use segpace::cli::commands::{cmd_pretrain_aux, cmd_pretrain_vspp};
use segpace::cli::config::{Profile, RunConfig};
use segpace::cli::metrics::MetricsFile;

pub fn ab_config(seed: u64, dir: &str) -> RunConfig {
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
    config.optim.epochs = 16;
    config.finetune.epochs = 10;
    config.finetune.lr = 0.02;
    config
}

fn main() {
    let seed = 21u64;
    let config = ab_config(seed, "/tmp/ab4");
    let scratch = cmd_pretrain_vspp(&config, None).unwrap();
    let m = MetricsFile::read(scratch.metrics.as_ref().unwrap()).unwrap();
    let vs = m.column("val_speed_acc").unwrap();
    let vg = m.column("val_segment_acc").unwrap();
    println!("scratch vspp: val speed last4 {:?} seg last4 {:?}",
        &vs[12..].iter().map(|v| (v*1000.0).round()/1000.0).collect::<Vec<_>>(),
        &vg[12..].iter().map(|v| (v*1000.0).round()/1000.0).collect::<Vec<_>>());

    // Aux variants: (epochs, lr, gamma, momentum)
    for (label, epochs, lr, gamma, m_coef) in [
        ("soft-short", 6usize, 0.005f32, 0.07f32, 0.99f32),
        ("soft-long", 12, 0.005, 0.07, 0.99),
        ("sharp-mid", 8, 0.01, 0.02, 0.99),
    ] {
        let mut aux_cfg = ab_config(seed, &format!("/tmp/ab4-{label}"));
        aux_cfg.optim.epochs = epochs;
        aux_cfg.optim.lr = lr;
        aux_cfg.distill.gamma_teacher = gamma;
        aux_cfg.distill.gamma_student = gamma;
        aux_cfg.distill.teacher_momentum = m_coef;
        let aux = cmd_pretrain_aux(&aux_cfg, None).unwrap();
        let mut vspp_cfg = ab_config(seed, &format!("/tmp/ab4-{label}"));
        let with = cmd_pretrain_vspp(&vspp_cfg, Some(aux.checkpoints.last().unwrap())).unwrap();
        let m2 = MetricsFile::read(with.metrics.as_ref().unwrap()).unwrap();
        let vs2 = m2.column("val_speed_acc").unwrap();
        let vg2 = m2.column("val_segment_acc").unwrap();
        println!("{label}: val speed last4 {:?} seg last4 {:?}",
            &vs2[12..].iter().map(|v| (v*1000.0).round()/1000.0).collect::<Vec<_>>(),
            &vg2[12..].iter().map(|v| (v*1000.0).round()/1000.0).collect::<Vec<_>>());
        let _ = &mut vspp_cfg;
    }
}
