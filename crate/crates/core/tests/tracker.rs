mod common;

use rewardloc::geometry::BBox;
use rewardloc::model::{Model, ModelConfig};
use rewardloc::tracker::{run_sequence, score_map_image, write_score_maps, Localizer, Tracker};

fn model(corner: bool) -> Model {
    let mut m = Model::new(ModelConfig {
        corner_head: corner,
        ..ModelConfig::tiny()
    })
    .unwrap();
    common::perturb(&mut m.params, 0.2, 5);
    m
}

#[test]
fn one_box_per_frame_and_reruns_are_identical() {
    let seq = &common::short_sequences(1, 8)[0];
    let m = model(false);
    let a = run_sequence(&m, seq, Localizer::Policy).unwrap();
    assert_eq!(a.boxes.len(), seq.len());
    assert_eq!(a.boxes[0], seq.gt[0]);
    for s in &a.scores {
        assert_eq!(s.len(), 16);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let (w, h) = (seq.frames[0].width() as f64, seq.frames[0].height() as f64);
    for b in &a.boxes {
        assert!(b.x1 >= 0.0 && b.y1 >= 0.0 && b.x2 <= w && b.y2 <= h && b.width() >= 1.0);
    }
    assert_eq!(a, run_sequence(&m, seq, Localizer::Policy).unwrap());
}

#[test]
fn random_localizer_depends_only_on_its_seed() {
    let seq = &common::short_sequences(1, 8)[0];
    let m = model(false);
    let a = run_sequence(&m, seq, Localizer::Random { seed: 1 }).unwrap();
    assert_eq!(a, run_sequence(&m, seq, Localizer::Random { seed: 1 }).unwrap());
    assert_ne!(a.boxes, run_sequence(&m, seq, Localizer::Random { seed: 2 }).unwrap().boxes);
}

#[test]
fn corner_localizer_needs_the_corner_head() {
    let seq = &common::short_sequences(1, 5)[0];
    let r = run_sequence(&model(true), seq, Localizer::Corner).unwrap();
    assert_eq!(r.boxes.len(), 5);
    assert!(run_sequence(&model(false), seq, Localizer::Corner).is_err());
}

#[test]
fn init_rejects_boxes_outside_the_frame() {
    let seq = &common::short_sequences(1, 3)[0];
    let m = model(false);
    let t = Tracker::new(&m, Localizer::Policy);
    assert!(t.init(&seq.frames[0], &BBox::new(500.0, 500.0, 520.0, 520.0)).is_err());
    assert!(t.init(&seq.frames[0], &BBox::new(5.0, 5.0, 5.0, 20.0)).is_err());
    assert!(t.init(&seq.frames[0], &seq.gt[0]).is_ok());
}

#[test]
fn score_maps_are_scaled_to_the_peak() {
    let img = score_map_image(&[0.1, 0.2, 0.3, 0.4], 2, 3);
    assert_eq!(img.dimensions(), (6, 6));
    assert_eq!(img.get_pixel(5, 5)[0], 255);
    assert_eq!(img.get_pixel(0, 0)[0], 64);

    let seq = &common::short_sequences(1, 4)[0];
    let m = model(false);
    let r = run_sequence(&m, seq, Localizer::Policy).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_score_maps(dir.path(), &r, 4).unwrap();
    let n = std::fs::read_dir(dir.path().join(&r.name)).unwrap().count();
    assert_eq!(n, 4);
}
