//! Hand-computed reference values checked against the library.

use std::f64::consts::{FRAC_PI_2, PI};

use approx::assert_abs_diff_eq;
use nalgebra::{Matrix2, Matrix4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use socnav::costmap::{rasterize_social, rasterize_static, Costmap, GridSpec, InflationParams, OccupancyGrid, INSCRIBED, LETHAL};
use socnav::fusion::{predict, update, FilterParams, KalmanTrack, Tracker};
use socnav::geometry::{Extrinsics, Point2, Point3, Pose2D};
use socnav::human::{personal_space_cost, HumanState, SocialParams};
use socnav::planner::{admissible, clearance, plan, rollout, PlannerParams, RobotLimits, Twist};
use socnav::sensing::{camera_pipeline, simulate_lidar, CameraNoiseModel, Joint, Keypoint, KeypointSet, LidarNoiseModel, Measurement, Region, Side, Source};

fn unit_amplitude() -> SocialParams {
    SocialParams {
        amplitude: 1.0,
        ..SocialParams::default()
    }
}

fn meas(t: f64, x: f64, y: f64, source: Source, var: f64) -> Measurement {
    Measurement {
        t,
        pos: Point2::new(x, y),
        source,
        noise_cov: Matrix2::identity() * var,
    }
}

#[test]
fn static_person_cost_half_meter_away() {
    let h = HumanState::new(1.0, -2.0, 0.0, 0.0);
    let expected = (-0.5f64).exp();
    for k in 0..16 {
        let a = k as f64 * PI / 8.0;
        let q = Point2::new(1.0 + 0.5 * a.cos(), -2.0 + 0.5 * a.sin());
        assert_abs_diff_eq!(personal_space_cost(&h, q, &unit_amplitude()), expected, epsilon = 1e-12);
    }
}

#[test]
fn moving_person_front_and_rear_offsets() {
    // speed 1: heading spread 2, rear spread 1
    let h = HumanState::new(0.0, 0.0, 1.0, 0.0);
    let p = unit_amplitude();
    assert_abs_diff_eq!(personal_space_cost(&h, Point2::new(4.0, 0.0), &p), (-2.0f64).exp(), epsilon = 1e-12);
    assert_abs_diff_eq!(personal_space_cost(&h, Point2::new(-2.0, 0.0), &p), (-2.0f64).exp(), epsilon = 1e-12);
}

#[test]
fn knee_only_set_maps_to_depth_and_midpoint() {
    let k = KeypointSet::default()
        .with(Joint::Knee, Side::Left, Keypoint { pos: Point3::new(0.3, 0.4, 1.5), confidence: 0.9 })
        .with(Joint::Knee, Side::Right, Keypoint { pos: Point3::new(0.1, 0.4, 1.5), confidence: 0.9 });
    let m = camera_pipeline(0.0, &k, Extrinsics { dx: 0.0, dy: 0.0 }, 0.5, &CameraNoiseModel::default()).unwrap();
    assert_abs_diff_eq!(m.pos.x, 1.5, epsilon = 1e-12);
    assert_abs_diff_eq!(m.pos.y, 0.2, epsilon = 1e-12);
}

#[test]
fn false_positive_count_matches_poisson_mean() {
    let model = LidarNoiseModel {
        false_positive_rate: 2.0,
        false_positive_box: Region { x_min: -4.0, x_max: 4.0, y_min: -4.0, y_max: 4.0 },
        ..LidarNoiseModel::default()
    };
    let runs = 100;
    let mut total = 0usize;
    for seed in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for k in 0..100 {
            total += simulate_lidar(k as f64 * 0.1, &[], &Pose2D::default(), &model, 0.1, &mut rng).len();
        }
    }
    // 100 runs of a Poisson(20) count: the mean has std sqrt(20 / 100)
    let mean = total as f64 / runs as f64;
    assert!((mean - 20.0).abs() <= 3.0 * (20.0f64 / runs as f64).sqrt(), "mean {mean}");
}

#[test]
fn prediction_without_process_noise() {
    let track = KalmanTrack {
        id: 0,
        state: nalgebra::Vector4::zeros(),
        cov: Matrix4::identity(),
        t: 0.0,
        last_update_t: 0.0,
        miss_count: 0,
        hits: 1,
    };
    let p = predict(&track, 1.0, 0.0).unwrap();
    let expected = Matrix4::new(
        2.0, 0.0, 1.0, 0.0, //
        0.0, 2.0, 0.0, 1.0, //
        1.0, 0.0, 1.0, 0.0, //
        0.0, 1.0, 0.0, 1.0,
    );
    assert_abs_diff_eq!(p.cov, expected, epsilon = 1e-12);
}

#[test]
fn unit_scalar_update() {
    let track = KalmanTrack {
        id: 0,
        state: nalgebra::Vector4::zeros(),
        cov: Matrix4::identity(),
        t: 0.0,
        last_update_t: 0.0,
        miss_count: 0,
        hits: 1,
    };
    let post = update(&track, &meas(0.0, 1.0, 1.0, Source::Lidar, 1.0), &Matrix2::identity()).unwrap();
    let gain = (post.state[0] - track.state[0]) / (1.0 - track.state[0]);
    assert_abs_diff_eq!(gain, 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(post.state[0], 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(post.cov[(0, 0)], 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(post.cov[(1, 1)], 0.5, epsilon = 1e-12);
}

#[test]
fn alternating_sources_refine_one_track() {
    let mut tracker = Tracker::new(FilterParams::default());
    tracker.ingest(&meas(0.0, 2.0, 0.0, Source::Lidar, 0.0025)).unwrap();
    tracker.ingest(&meas(0.0, 2.0, 0.0, Source::Camera, 0.0025)).unwrap();
    let after_second = tracker.tracks()[0].cov.trace();
    // spawning from the first measurement and updating with it once more
    let mut single = Tracker::new(FilterParams::default());
    single.ingest(&meas(0.0, 2.0, 0.0, Source::Lidar, 0.0025)).unwrap();
    let after_first = single.tracks()[0].cov.trace();
    assert_eq!(tracker.tracks().len(), 1);
    assert!(after_second < after_first, "{after_second} !< {after_first}");
}

#[test]
fn transient_false_positive_is_pruned() {
    let mut tracker = Tracker::new(FilterParams::default());
    for k in 0..=30 {
        let t = k as f64 * 0.1;
        let mut batch = vec![meas(t, 2.0 + 0.1 * t, 0.5, Source::Lidar, 0.0025)];
        if k == 10 {
            batch.push(meas(t, -1.0, 3.0, Source::Lidar, 0.0025));
        }
        tracker.ingest_all(&mut batch).unwrap();
        tracker.prune(t);
    }
    assert_eq!(tracker.tracks().len(), 1);
}

#[test]
fn single_cell_inflation_ring() {
    let spec = GridSpec::new(Point2::new(0.0, 0.0), 0.1, 11, 11).unwrap();
    let mut occ = OccupancyGrid::empty(11, 11);
    occ.set(5, 5, true);
    let map = rasterize_static(&occ, 0.2, &spec, &InflationParams::default()).unwrap();
    for iy in 0..11usize {
        for ix in 0..11usize {
            let d2 = (ix as i64 - 5).pow(2) + (iy as i64 - 5).pow(2);
            let c = map.get(ix, iy);
            match d2 {
                0 => assert_eq!(c, LETHAL),
                1..=4 => assert_eq!(c, INSCRIBED, "cell ({ix},{iy})"),
                _ => assert!(c < INSCRIBED, "cell ({ix},{iy}) = {c}"),
            }
        }
    }
}

#[test]
fn static_person_layer_values() {
    let spec = GridSpec::new(Point2::new(0.0, 0.0), 0.1, 31, 31).unwrap();
    let h = HumanState::new(1.55, 1.55, 0.0, 0.0);
    let map = rasterize_social(&[h], &SocialParams::default(), &spec);
    for iy in 0..31 {
        for ix in 0..31 {
            let d = spec.center(ix, iy).distance(&h.position());
            if (d - 0.3).abs() > 1e-9 {
                assert_eq!(map.get(ix, iy) == LETHAL, d < 0.3, "cell ({ix},{iy}) d={d}");
            }
        }
    }
    assert_eq!(map.get(20, 15), 154);
    assert_eq!(map.get(15, 10), 154);
}

#[test]
fn arc_rollout_matches_closed_form() {
    let (v, w, t) = (1.0, FRAC_PI_2, 1.0);
    let traj = rollout(Pose2D::default(), Twist::new(v, w), t, 0.01);
    let end = traj.last();
    assert_abs_diff_eq!(end.theta, FRAC_PI_2, epsilon = 1e-9);
    assert_abs_diff_eq!(traj.length(), v * t, epsilon = 0.01 * v * t);
    let exact = Point2::new((v / w) * (w * t).sin(), (v / w) * (1.0 - (w * t).cos()));
    assert!(end.position().distance(&exact) < 0.01 * v * t);
}

fn wall_map(x_wall: f64) -> Costmap {
    let spec = GridSpec::new(Point2::new(-1.0, -2.0), 0.05, 80, 80).unwrap();
    let mut m = Costmap::new(spec);
    let (ix, _) = spec.cell_of(Point2::new(x_wall + 0.025, 0.0)).unwrap();
    for iy in 0..spec.height {
        m.set(ix, iy, LETHAL);
    }
    m
}

#[test]
fn clearance_to_wall_ahead() {
    let map = wall_map(1.0);
    let traj = rollout(Pose2D::default(), Twist::new(1.0, 0.0), 2.0, 0.01);
    let c = clearance(&traj, &map, 0.25, 10.0);
    assert!((c - 0.75).abs() <= 0.05, "clearance {c}");
}

#[test]
fn open_map_drives_straight_to_goal() {
    let spec = GridSpec::new(Point2::new(-2.0, -2.0), 0.05, 100, 80).unwrap();
    let map = Costmap::new(spec);
    let u = plan(&Pose2D::default(), Twist::ZERO, &map, Point2::new(2.0, 0.0), &PlannerParams::default(), &RobotLimits::default());
    assert!(u.v > 0.0);
    assert!(u.w.abs() < 1e-9);
}

#[test]
fn goal_behind_turns_in_place() {
    let spec = GridSpec::new(Point2::new(-3.0, -2.0), 0.05, 100, 80).unwrap();
    let map = Costmap::new(spec);
    let u = plan(&Pose2D::default(), Twist::ZERO, &map, Point2::new(-2.0, 0.1), &PlannerParams::default(), &RobotLimits::default());
    assert!(u.w > 0.0, "{u:?}");
}

#[test]
fn adjacent_wall_keeps_command_admissible() {
    let map = wall_map(0.3);
    let limits = RobotLimits::default();
    let params = PlannerParams::default();
    let u = plan(&Pose2D::default(), Twist::new(0.3, 0.0), &map, Point2::new(2.0, 0.0), &params, &limits);
    let traj = rollout(Pose2D::default(), u, params.horizon, params.dt);
    let c = clearance(&traj, &map, limits.radius, params.clear_dist_cap);
    assert!(admissible(u, c, &limits), "{u:?} clearance {c}");
}

#[test]
fn empty_world_run_goes_straight() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/empty.yaml");
    let s = socnav::sim::Scenario::load(&path).unwrap();
    let out = socnav::sim::run(&s).unwrap();
    let m = &out.metrics;
    assert!(m.goal_reached);
    // the run ends on entering the goal tolerance
    let lo = 3.0 - s.robot.goal_tolerance;
    assert!(m.path_length >= lo - 1e-9 && m.path_length <= 3.3, "path {}", m.path_length);
}
