use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mvmotion::camera::{make_rig, project_motion, CameraRig};
use mvmotion::checkpoint::{self, Model};
use mvmotion::data::{synth_dataset, MotionKind, MultiViewRecord};
use mvmotion::denoiser::{init_mv_from_2d, ArchConfig, Denoiser2D};
use mvmotion::diffusion::{make_schedule, ScheduleKind};
use mvmotion::evaluation::{feature_extract, fid};
use mvmotion::lifting::lift_multiview;
use mvmotion::motion::{Motion3D, Skeleton};

fn small_arch() -> ArchConfig {
    ArchConfig { local_joints: 7, d_model: 8, layers: 1, heads: 2, d_ff: 8, d_text: 4, text_tokens: 8, root_hidden: 4, text_seed: 2 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn procedural_clips_survive_projection_records_and_lifting(seed in any::<u64>(), kind in 0usize..3, views in 3usize..7, az in -7.0f64..7.0) {
        let skel = Skeleton::toy(20.0).unwrap();
        let clip = synth_dataset(&[MotionKind::ALL[kind]], 1, 1.0, &skel, seed).unwrap().remove(0);
        let rig = make_rig(views, az).unwrap();
        let mv = project_motion(&rig, &clip.motion, &skel).unwrap();
        let rec = MultiViewRecord::new(&mv, &rig, &skel, &clip.text, Some(clip.kind.name()));
        let back: MultiViewRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
        prop_assert_eq!(back.motion().unwrap(), mv.clone());
        let lifted = lift_multiview(&back.rig().unwrap(), &back.motion().unwrap(), skel.fps()).unwrap();
        let err = lifted.motion(&skel).unwrap().rmse(&clip.motion.rebased(skel.root_index())).unwrap();
        prop_assert!(err <= 1e-9, "round-trip RMSE {}", err);
    }

    #[test]
    fn lifting_ignores_view_order(seed in any::<u64>(), views in 3usize..6) {
        let skel = Skeleton::toy(20.0).unwrap();
        let clip = synth_dataset(&MotionKind::ALL, 1, 0.5, &skel, seed).unwrap().remove(0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let az: Vec<f64> = (0..views).map(|_| rng.random_range(0.0..6.28)).collect();
        let rig = CameraRig::from_azimuths(&az).unwrap();
        let mv = project_motion(&rig, &clip.motion, &skel).unwrap();
        let perm: Vec<usize> = (0..views).rev().collect();
        let rev_rig = CameraRig::from_azimuths(&perm.iter().map(|&p| az[p]).collect::<Vec<_>>()).unwrap();
        let a = lift_multiview(&rig, &mv, 20.0).unwrap().motion(&skel).unwrap();
        let b = lift_multiview(&rev_rig, &mv.permuted(&perm), 20.0).unwrap().motion(&skel).unwrap();
        prop_assert!(a.rmse(&b).unwrap() <= 1e-9);
    }

    #[test]
    fn fid_is_symmetric_and_nonnegative(seed in any::<u64>(), n in 4usize..30, d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |shift: f64| -> Vec<Vec<f64>> { (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0) + shift).collect()).collect() };
        let a = draw(0.0);
        let b = draw(0.5);
        let ab = fid(&a, &b).unwrap();
        let ba = fid(&b, &a).unwrap();
        prop_assert!(ab >= -1e-9);
        prop_assert!((ab - ba).abs() <= 1e-8 * ab.abs().max(1.0));
    }

    #[test]
    fn features_are_finite_and_sized(seed in any::<u64>()) {
        let skel = Skeleton::toy(20.0).unwrap();
        for clip in synth_dataset(&MotionKind::ALL, 3, 1.0, &skel, seed).unwrap() {
            let f = feature_extract(&clip.motion, &skel).unwrap();
            prop_assert_eq!(f.len(), 7 * 8 + 6);
            prop_assert!(f.iter().all(|x| x.is_finite()));
        }
    }
}

#[test]
fn checkpoints_round_trip_bitwise() {
    let sched = make_schedule(10, ScheduleKind::Cosine).unwrap();
    let base = Denoiser2D::new(small_arch(), 9).unwrap();
    let mv = init_mv_from_2d(&base, 3, 4).unwrap();
    for model in [Model::Single(base), Model::Multi(mv)] {
        let bytes = checkpoint::to_bytes(&model, &sched);
        let back = checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back.model.kind(), model.kind());
        assert_eq!(checkpoint::to_bytes(&back.model, &back.schedule), bytes);
    }
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let sched = make_schedule(10, ScheduleKind::Cosine).unwrap();
    let bytes = checkpoint::to_bytes(&Model::Single(Denoiser2D::new(small_arch(), 1).unwrap()), &sched);
    assert!(checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    assert!(checkpoint::from_bytes(b"NOTACKPT").is_err());
}

#[test]
fn motion_shape_is_checked() {
    assert!(Motion3D::new(3, vec![[0.0; 3]; 7], 20.0).is_err());
}
