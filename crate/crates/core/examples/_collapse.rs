use ndarray::Array2;
use segpace::cli::checkpoint::Checkpoint;
use segpace::cli::config::{Profile, RunConfig};
use segpace::models::{init_from_scratch, l2_normalize, HeadSpec};
use segpace::dataio::Split;

fn spread(feats: &Array2<f32>) -> (f32, f32) {
    let z = l2_normalize(feats).unwrap();
    let n = z.nrows();
    let mut mean_cos = 0.0f32;
    let mut count = 0;
    for i in 0..n {
        for j in 0..i {
            mean_cos += z.row(i).dot(&z.row(j));
            count += 1;
        }
    }
    // Per-dim std of the raw features as a scale signal.
    let mean = feats.mean_axis(ndarray::Axis(0)).unwrap();
    let var = feats
        .rows()
        .into_iter()
        .map(|r| (&r - &mean).mapv(|v| v * v).sum())
        .sum::<f32>()
        / (n as f32);
    (mean_cos / count as f32, var.sqrt())
}

fn main() {
    let seed = 21u64;
    let mut config = RunConfig::defaults(Profile::Desk);
    config.seed = seed;
    config.data.videos_per_class = 50;
    config.data.frames_per_video = 20;
    config.data.frame_size = 24;
    config.augment.crop_size = 24;
    config.model.stage_widths = vec![8, 16, 32, 64];
    config.model.embed_dim = 64;
    config.model.predictor_hidden = 128;

    let dataset = config.load_dataset().unwrap();
    let enc_cfg = config.encoder_config();
    // Collect eval clips.
    let mut clips = Vec::new();
    for &i in dataset.split_indices(Split::Val).iter().take(24) {
        let v = &dataset.videos[i];
        let params = segpace::sampling::SamplerParams::new(v.num_frames, 8, 1, 1).unwrap();
        let plan = segpace::sampling::uniform_pace_indices(&params, 1, 0).unwrap();
        let clip = segpace::dataio::decode_clip(v, &plan).unwrap();
        clips.push(segpace::augment::center_crop(&clip, 24).unwrap());
    }
    let batch = segpace::distill::stack_clips(&clips);

    // Random-init encoder features.
    let fresh = init_from_scratch(&enc_cfg, HeadSpec::Classify { classes: 4 }, seed);
    let f0 = fresh.encode(&batch).unwrap();
    let (cos0, std0) = spread(&f0);
    println!("random init: mean pairwise cos {cos0:.4}, feature std {std0:.4}");

    // Aux-pretrained student encoder features.
    let ckpt = Checkpoint::load(std::path::Path::new("/tmp/pa-21/aux-s21-0a0445ca/checkpoint_epoch012.json"))
        .or_else(|_| {
            let dir = std::fs::read_dir("/tmp/pa-21").unwrap();
            let mut path = None;
            for e in dir {
                let p = e.unwrap().path();
                if p.file_name().unwrap().to_string_lossy().starts_with("aux-") {
                    path = Some(p.join("checkpoint_epoch012.json"));
                }
            }
            Checkpoint::load(&path.unwrap())
        })
        .unwrap();
    let mut model = init_from_scratch(&enc_cfg, HeadSpec::Classify { classes: 4 }, seed);
    segpace::cli::checkpoint::copy_encoder_state(&mut model, &ckpt.tensors, &ckpt.buffers).unwrap();
    let f1 = model.encode(&batch).unwrap();
    let (cos1, std1) = spread(&f1);
    println!("after aux:   mean pairwise cos {cos1:.4}, feature std {std1:.4}");
}
