//! Fixtures shared by the benchmarks.

use rcnn_vo_core::geometry::{euler_to_rotation, relative_motions};
use rcnn_vo_core::kitti::Segment;
use rcnn_vo_core::nalgebra::Vector3;
use rcnn_vo_core::{PoseSE3, Rng, Tensor, Trajectory};

/// A gently curving trajectory of `frames` poses, one meter apart.
pub fn curve(frames: usize) -> Trajectory {
    let step = PoseSE3 {
        rotation: euler_to_rotation(&Vector3::new(0.0, 0.01, 0.0)),
        translation: Vector3::new(0.0, 0.0, 1.0),
    };
    let mut poses = vec![PoseSE3::identity()];
    for _ in 1..frames {
        let next = poses.last().expect("non-empty").compose(&step);
        poses.push(next);
    }
    Trajectory::new(poses, 10.0).expect("valid trajectory")
}

/// A random-image training segment of `steps` pairs at `height`x`width`.
pub fn segment(steps: usize, height: usize, width: usize, seed: u64) -> Segment {
    let mut rng = Rng::new(seed);
    let poses = curve(steps + 1).poses;
    Segment {
        sequence: "bench".into(),
        start: 0,
        pairs: Tensor::uniform(vec![steps, 6, height, width], -50.0, 50.0, &mut rng),
        targets: relative_motions(&poses).expect("valid motions"),
    }
}
