//! Asynchronous Kalman tracking of people.
//!
//! Each person is tracked with a constant-velocity model over the state
//! `[x, y, vx, vy]`. LiDAR and camera detections are not synchronised: every
//! measurement is applied as soon as it arrives, after predicting the tracks
//! forward to its timestamp, with the noise covariance of its own sensor.
//! Association is greedy nearest neighbour inside a Euclidean gate; an
//! unmatched measurement starts a tentative track.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::human::HumanState;
use crate::sensing::{Measurement, Source};

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("measurement at t={got} is older than tracker time {now}")]
    OutOfOrder { now: f64, got: f64 },
    #[error("innovation covariance is not positive definite")]
    SingularInnovation,
    #[error("invalid filter parameter: {0}")]
    InvalidParam(&'static str),
}

/// Where the update takes its measurement covariance from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSource {
    /// The covariance carried by each measurement.
    Reported,
    /// The configured per-sensor constants.
    Constant,
}

/// Scenario key `fusion`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    /// White-noise acceleration spectral density, (m/s^2)^2 per second.
    pub q_accel: f64,
    pub lidar_std: f64,
    pub camera_std: f64,
    pub noise_source: NoiseSource,
    pub gate_radius: f64,
    /// Nominal sensor period used to count missed updates.
    pub sensor_period: f64,
    pub max_misses: u32,
    /// Updates needed before a track counts as confirmed.
    pub min_hits: u32,
    /// Misses tolerated by a track that was never confirmed.
    pub tentative_max_misses: u32,
    pub init_pos_var: f64,
    pub init_vel_var: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            q_accel: 0.5,
            lidar_std: 0.05,
            camera_std: 0.05,
            noise_source: NoiseSource::Reported,
            gate_radius: 1.0,
            sensor_period: 0.1,
            max_misses: 10,
            min_hits: 3,
            tentative_max_misses: 2,
            init_pos_var: 0.05 * 0.05,
            init_vel_var: 1.0,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), FusionError> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !(self.q_accel >= 0.0 && self.q_accel.is_finite()) {
            return Err(FusionError::InvalidParam("q_accel must be >= 0"));
        }
        if !pos(self.lidar_std) || !pos(self.camera_std) {
            return Err(FusionError::InvalidParam("sensor std must be positive"));
        }
        if !pos(self.gate_radius) {
            return Err(FusionError::InvalidParam("gate_radius must be positive"));
        }
        if !pos(self.sensor_period) {
            return Err(FusionError::InvalidParam("sensor_period must be positive"));
        }
        if self.max_misses == 0 || self.tentative_max_misses == 0 {
            return Err(FusionError::InvalidParam("miss limits must be >= 1"));
        }
        if !pos(self.init_pos_var) || !pos(self.init_vel_var) {
            return Err(FusionError::InvalidParam("initial variances must be positive"));
        }
        Ok(())
    }

    pub fn constant_noise(&self, source: Source) -> Matrix2<f64> {
        let s = match source {
            Source::Lidar => self.lidar_std,
            Source::Camera => self.camera_std,
        };
        Matrix2::identity() * (s * s)
    }

    pub fn init_cov(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::new(
            self.init_pos_var,
            self.init_pos_var,
            self.init_vel_var,
            self.init_vel_var,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrack {
    pub id: u64,
    pub state: Vector4<f64>,
    pub cov: Matrix4<f64>,
    /// Time the state refers to.
    pub t: f64,
    pub last_update_t: f64,
    pub miss_count: u32,
    pub hits: u32,
}

impl KalmanTrack {
    pub fn new(id: u64, z: &Measurement, init_cov: Matrix4<f64>) -> Self {
        Self {
            id,
            state: Vector4::new(z.pos.x, z.pos.y, 0.0, 0.0),
            cov: init_cov,
            t: z.t,
            last_update_t: z.t,
            miss_count: 0,
            hits: 1,
        }
    }

    pub fn human(&self) -> HumanState {
        HumanState::new(self.state[0], self.state[1], self.state[2], self.state[3])
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::new(self.state[0], self.state[1])
    }
}

pub fn transition(dt: f64) -> Matrix4<f64> {
    let mut a = Matrix4::identity();
    a[(0, 2)] = dt;
    a[(1, 3)] = dt;
    a
}

/// Discretised white-noise-acceleration process noise over `dt`.
pub fn process_noise(dt: f64, q_accel: f64) -> Matrix4<f64> {
    let d3 = dt * dt * dt / 3.0 * q_accel;
    let d2 = dt * dt / 2.0 * q_accel;
    let d1 = dt * q_accel;
    let mut q = Matrix4::zeros();
    for axis in 0..2 {
        q[(axis, axis)] = d3;
        q[(axis, axis + 2)] = d2;
        q[(axis + 2, axis)] = d2;
        q[(axis + 2, axis + 2)] = d1;
    }
    q
}

fn observation() -> Matrix2x4<f64> {
    Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0)
}

fn symmetrize(p: &Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

/// Advances a track to `t_now`. People have no control input, so the
/// control term of the motion model is identically zero.
pub fn predict(track: &KalmanTrack, t_now: f64, q_accel: f64) -> Result<KalmanTrack, FusionError> {
    let dt = t_now - track.t;
    if dt < 0.0 {
        return Err(FusionError::OutOfOrder {
            now: track.t,
            got: t_now,
        });
    }
    let a = transition(dt);
    let control = Vector4::zeros();
    let mut out = track.clone();
    out.state = a * track.state + control;
    out.cov = symmetrize(&(a * track.cov * a.transpose() + process_noise(dt, q_accel)));
    out.t = t_now;
    Ok(out)
}

/// Measurement update of a position observation with covariance `r`.
pub fn update(track: &KalmanTrack, z: &Measurement, r: &Matrix2<f64>) -> Result<KalmanTrack, FusionError> {
    let h = observation();
    let p = &track.cov;
    let s = h * p * h.transpose() + r;
    let s_inv = s
        .cholesky()
        .ok_or(FusionError::SingularInnovation)?
        .inverse();
    let k = p * h.transpose() * s_inv;
    let innovation = Vector2::new(z.pos.x, z.pos.y) - h * track.state;
    let mut out = track.clone();
    out.state = track.state + k * innovation;
    // Joseph form of (I - KH) P
    let ikh = Matrix4::identity() - k * h;
    out.cov = symmetrize(&(ikh * p * ikh.transpose() + k * r * k.transpose()));
    out.last_update_t = z.t.max(track.last_update_t);
    out.miss_count = 0;
    out.hits = track.hits.saturating_add(1);
    Ok(out)
}

/// A tracked person exported for the costmap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedHuman {
    pub id: u64,
    pub state: HumanState,
    pub cov_trace: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tracker {
    params: FilterParams,
    tracks: Vec<KalmanTrack>,
    next_id: u64,
    now: f64,
}

impl Tracker {
    pub fn new(params: FilterParams) -> Self {
        Self {
            params,
            tracks: Vec::new(),
            next_id: 0,
            now: f64::NEG_INFINITY,
        }
    }

    pub fn params(&self) -> &FilterParams {
        &self.params
    }

    pub fn tracks(&self) -> &[KalmanTrack] {
        &self.tracks
    }

    fn noise_for(&self, z: &Measurement) -> Matrix2<f64> {
        match self.params.noise_source {
            NoiseSource::Reported => z.noise_cov,
            NoiseSource::Constant => self.params.constant_noise(z.source),
        }
    }

    /// Applies one measurement. Measurements must arrive in nondecreasing
    /// time order.
    pub fn ingest(&mut self, z: &Measurement) -> Result<(), FusionError> {
        if z.t < self.now {
            return Err(FusionError::OutOfOrder {
                now: self.now,
                got: z.t,
            });
        }
        self.now = z.t;
        for t in &mut self.tracks {
            *t = predict(t, z.t, self.params.q_accel)?;
        }
        let zp = Vector2::new(z.pos.x, z.pos.y);
        let nearest = self
            .tracks
            .iter()
            .enumerate()
            .map(|(i, t)| (i, (t.position() - zp).norm()))
            .filter(|&(_, d)| d <= self.params.gate_radius)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match nearest {
            Some((i, _)) => {
                let r = self.noise_for(z);
                self.tracks[i] = update(&self.tracks[i], z, &r)?;
            }
            None => {
                let id = self.next_id;
                self.next_id += 1;
                self.tracks.push(KalmanTrack::new(id, z, self.params.init_cov()));
            }
        }
        Ok(())
    }

    /// Ingests a batch after sorting it by time (stable, so equal
    /// timestamps keep their given order).
    pub fn ingest_all(&mut self, zs: &mut [Measurement]) -> Result<(), FusionError> {
        zs.sort_by(|a, b| a.t.total_cmp(&b.t));
        zs.iter().try_for_each(|z| self.ingest(z))
    }

    /// Drops tracks that missed too many sensor periods: `max_misses` for
    /// confirmed tracks, `tentative_max_misses` for the rest.
    pub fn prune(&mut self, t_now: f64) {
        let p = &self.params;
        for t in &mut self.tracks {
            let idle = (t_now - t.last_update_t).max(0.0);
            t.miss_count = (idle / p.sensor_period + 1e-9).floor() as u32;
        }
        self.tracks.retain(|t| {
            let limit = if t.hits >= p.min_hits {
                p.max_misses
            } else {
                p.tentative_max_misses
            };
            t.miss_count < limit
        });
    }

    /// Live tracks extrapolated to `t_now`, ordered by id.
    pub fn snapshot(&self, t_now: f64) -> Vec<TrackedHuman> {
        self.tracks
            .iter()
            .map(|t| {
                let p = predict(t, t_now.max(t.t), self.params.q_accel).unwrap_or_else(|_| t.clone());
                TrackedHuman {
                    id: t.id,
                    state: p.human(),
                    cov_trace: p.cov.trace(),
                }
            })
            .collect()
    }

    /// Like [`Tracker::snapshot`] but limited to confirmed tracks.
    pub fn confirmed(&self, t_now: f64) -> Vec<TrackedHuman> {
        let ids: Vec<u64> = self
            .tracks
            .iter()
            .filter(|t| t.hits >= self.params.min_hits)
            .map(|t| t.id)
            .collect();
        self.snapshot(t_now)
            .into_iter()
            .filter(|h| ids.contains(&h.id))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn meas(t: f64, x: f64, y: f64, source: Source, var: f64) -> Measurement {
        Measurement {
            t,
            pos: Point2::new(x, y),
            source,
            noise_cov: Matrix2::identity() * var,
        }
    }

    fn track(state: [f64; 4], cov: Matrix4<f64>) -> KalmanTrack {
        KalmanTrack {
            id: 0,
            state: Vector4::from(state),
            cov,
            t: 0.0,
            last_update_t: 0.0,
            miss_count: 0,
            hits: 1,
        }
    }

    fn min_eig(p: &Matrix4<f64>) -> f64 {
        p.symmetric_eigenvalues().min()
    }

    #[test]
    fn predict_constant_velocity() {
        let t = track([0.0, 0.0, 1.0, 0.0], Matrix4::identity());
        let p = predict(&t, 1.0, 0.0).unwrap();
        assert_eq!(p.state, Vector4::new(1.0, 0.0, 1.0, 0.0));
    }

    #[test]
    fn predict_zero_dt_is_identity() {
        let t = track([0.3, -1.0, 1.0, 2.0], Matrix4::identity() * 0.7);
        let p = predict(&t, 0.0, 0.5).unwrap();
        assert_eq!(p.state, t.state);
        assert_eq!(p.cov, t.cov);
    }

    #[test]
    fn predict_unit_cov_matches_hand_product() {
        let t = track([0.0; 4], Matrix4::identity());
        let p = predict(&t, 1.0, 0.0).unwrap();
        #[rustfmt::skip]
        let expected = Matrix4::new(
            2.0, 0.0, 1.0, 0.0,
            0.0, 2.0, 0.0, 1.0,
            1.0, 0.0, 1.0, 0.0,
            0.0, 1.0, 0.0, 1.0,
        );
        assert_eq!(p.cov, expected);
    }

    #[test]
    fn predict_rejects_going_back() {
        let mut t = track([0.0; 4], Matrix4::identity());
        t.t = 2.0;
        assert!(matches!(predict(&t, 1.0, 0.0), Err(FusionError::OutOfOrder { .. })));
    }

    #[test]
    fn process_noise_blocks() {
        let q = process_noise(2.0, 0.5);
        assert_abs_diff_eq!(q[(0, 0)], 8.0 / 3.0 * 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(q[(0, 2)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q[(2, 2)], 1.0, epsilon = 1e-15);
        assert_eq!(q[(0, 1)], 0.0);
        assert!(min_eig(&q) >= -1e-12);
    }

    #[test]
    fn zero_innovation_keeps_state() {
        let t = track([1.0, 2.0, 0.5, 0.0], Matrix4::identity());
        let u = update(&t, &meas(0.0, 1.0, 2.0, Source::Lidar, 0.1), &(Matrix2::identity() * 0.1)).unwrap();
        assert_eq!(u.state, t.state);
    }

    #[test]
    fn huge_noise_leaves_prior() {
        let t = track([1.0, 2.0, 0.5, 0.0], Matrix4::identity());
        let r = Matrix2::identity() * 1e15;
        let u = update(&t, &meas(0.0, 5.0, 5.0, Source::Lidar, 1e15), &r).unwrap();
        assert!((u.state - t.state).norm() < 1e-12);
        assert!((u.cov - t.cov).norm() < 1e-12);
    }

    #[test]
    fn scalar_analog_update() {
        // x-axis decoupled from everything: prior x=0, P=1, z=1, R=1
        let t = track([0.0; 4], Matrix4::identity());
        let u = update(&t, &meas(0.0, 1.0, 0.0, Source::Lidar, 1.0), &Matrix2::identity()).unwrap();
        assert_abs_diff_eq!(u.state[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(u.cov[(0, 0)], 0.5, epsilon = 1e-15);
        // velocity uncorrelated with position, so untouched
        assert_eq!(u.state[2], 0.0);
        assert_eq!(u.cov[(2, 2)], 1.0);
    }

    #[test]
    fn singular_innovation_is_reported() {
        let t = track([0.0; 4], Matrix4::zeros());
        let r = Matrix2::zeros();
        assert_eq!(
            update(&t, &meas(0.0, 1.0, 0.0, Source::Lidar, 0.0), &r),
            Err(FusionError::SingularInnovation)
        );
    }

    #[test]
    fn ingest_spawns_at_measurement() {
        let mut tr = Tracker::new(FilterParams::default());
        tr.ingest(&meas(0.0, 1.0, 2.0, Source::Lidar, 0.0025)).unwrap();
        assert_eq!(tr.tracks().len(), 1);
        assert_eq!(tr.tracks()[0].state, Vector4::new(1.0, 2.0, 0.0, 0.0));
    }

    #[test]
    fn ingest_alternating_sources_fuses() {
        let mut tr = Tracker::new(FilterParams::default());
        tr.ingest(&meas(0.0, 1.0, 2.0, Source::Lidar, 0.0025)).unwrap();
        tr.ingest(&meas(0.05, 1.0, 2.0, Source::Camera, 0.0016)).unwrap();
        let after_one = tr.tracks()[0].cov.trace();
        tr.ingest(&meas(0.1, 1.0, 2.0, Source::Lidar, 0.0025)).unwrap();
        assert_eq!(tr.tracks().len(), 1);
        assert!(tr.tracks()[0].cov.trace() < after_one);
    }

    #[test]
    fn ingest_gates_far_measurements() {
        let p = FilterParams::default();
        let mut tr = Tracker::new(p.clone());
        tr.ingest(&meas(0.0, 0.0, 0.0, Source::Lidar, 0.0025)).unwrap();
        tr.ingest(&meas(0.1, 10.0 * p.gate_radius, 0.0, Source::Lidar, 0.0025)).unwrap();
        assert_eq!(tr.tracks().len(), 2);
    }

    #[test]
    fn ingest_rejects_out_of_order() {
        let mut tr = Tracker::new(FilterParams::default());
        tr.ingest(&meas(1.0, 0.0, 0.0, Source::Lidar, 0.0025)).unwrap();
        assert_eq!(
            tr.ingest(&meas(0.5, 0.0, 0.0, Source::Lidar, 0.0025)),
            Err(FusionError::OutOfOrder { now: 1.0, got: 0.5 })
        );
    }

    #[test]
    fn constant_noise_source() {
        let p = FilterParams {
            noise_source: NoiseSource::Constant,
            lidar_std: 1.0,
            ..FilterParams::default()
        };
        let mut tr = Tracker::new(p);
        tr.ingest(&meas(0.0, 0.0, 0.0, Source::Lidar, 1e-6)).unwrap();
        tr.ingest(&meas(0.0, 0.2, 0.0, Source::Lidar, 1e-6)).unwrap();
        // prior var 0.0025 vs R = 1: barely moves
        assert!(tr.tracks()[0].state[0] < 0.001);
    }

    #[test]
    fn prune_drops_stale_tracks() {
        let p = FilterParams::default();
        let mut tr = Tracker::new(p.clone());
        for k in 0..5 {
            tr.ingest(&meas(k as f64 * 0.1, 0.0, 0.0, Source::Lidar, 0.0025)).unwrap();
        }
        let last = 0.4;
        tr.prune(last + (p.max_misses as f64 - 0.5) * p.sensor_period);
        assert_eq!(tr.tracks().len(), 1);
        tr.prune(last + p.max_misses as f64 * p.sensor_period);
        assert!(tr.tracks().is_empty());
    }

    #[test]
    fn prune_keeps_fed_tracks() {
        let p = FilterParams::default();
        let mut tr = Tracker::new(p.clone());
        for k in 0..100 {
            let t = k as f64 * p.sensor_period;
            tr.ingest(&meas(t, 0.0, 0.0, Source::Lidar, 0.0025)).unwrap();
            tr.prune(t);
        }
        assert_eq!(tr.tracks().len(), 1);
    }

    #[test]
    fn prune_kills_transient_false_positive() {
        let p = FilterParams::default();
        let mut tr = Tracker::new(p.clone());
        for k in 0..40 {
            let t = k as f64 * 0.1;
            let mut batch = vec![meas(t, 2.0 + 0.5 * t, 0.0, Source::Lidar, 0.0025)];
            if k == 10 {
                batch.push(meas(t, -2.0, 3.0, Source::Lidar, 0.0025));
            }
            tr.ingest_all(&mut batch).unwrap();
            tr.prune(t);
            if k == 10 {
                assert_eq!(tr.tracks().len(), 2);
            }
        }
        assert_eq!(tr.tracks().len(), 1);
    }

    #[test]
    fn snapshot_extrapolates() {
        let mut tr = Tracker::new(FilterParams::default());
        assert!(tr.snapshot(0.0).is_empty());
        tr.ingest(&meas(0.0, 1.0, 0.0, Source::Lidar, 0.0025)).unwrap();
        tr.tracks[0].state = Vector4::new(1.0, 0.0, 0.5, 0.0);
        let s = tr.snapshot(1.0);
        assert_eq!(s.len(), 1);
        assert_abs_diff_eq!(s[0].state.x, 1.5, epsilon = 1e-15);
        assert_eq!(s[0].state.vx, 0.5);
    }

    #[test]
    fn snapshot_ids_are_stable() {
        let mut tr = Tracker::new(FilterParams::default());
        tr.ingest(&meas(0.0, 0.0, 0.0, Source::Lidar, 0.0025)).unwrap();
        tr.ingest(&meas(0.0, 5.0, 0.0, Source::Lidar, 0.0025)).unwrap();
        let a: Vec<u64> = tr.snapshot(0.5).iter().map(|h| h.id).collect();
        let b: Vec<u64> = tr.snapshot(1.0).iter().map(|h| h.id).collect();
        assert_eq!(a, vec![0, 1]);
        assert_eq!(a, b);
    }

    #[test]
    fn confirmed_requires_hits() {
        let mut tr = Tracker::new(FilterParams::default());
        tr.ingest(&meas(0.0, 0.0, 0.0, Source::Lidar, 0.0025)).unwrap();
        assert!(tr.confirmed(0.0).is_empty());
        tr.ingest(&meas(0.1, 0.0, 0.0, Source::Lidar, 0.0025)).unwrap();
        tr.ingest(&meas(0.2, 0.0, 0.0, Source::Lidar, 0.0025)).unwrap();
        assert_eq!(tr.confirmed(0.2).len(), 1);
    }

    proptest! {
        #[test]
        fn posterior_never_exceeds_prior(
            diag in proptest::collection::vec(0.01f64..4.0, 4),
            off in -0.5f64..0.5,
            r in 0.001f64..2.0,
            zx in -3.0f64..3.0,
            zy in -3.0f64..3.0,
        ) {
            let mut cov = Matrix4::from_diagonal(&Vector4::from_vec(diag));
            let c = off * (cov[(0, 0)] * cov[(2, 2)]).sqrt();
            cov[(0, 2)] = c;
            cov[(2, 0)] = c;
            let t = track([0.0; 4], cov);
            let u = update(&t, &meas(0.0, zx, zy, Source::Camera, r), &(Matrix2::identity() * r)).unwrap();
            prop_assert!(min_eig(&(t.cov - u.cov)) >= -1e-9);
            prop_assert!(min_eig(&u.cov) >= -1e-9);
        }

        #[test]
        fn same_time_updates_commute(
            zx1 in -2.0f64..2.0, zy1 in -2.0f64..2.0,
            zx2 in -2.0f64..2.0, zy2 in -2.0f64..2.0,
            r1 in 0.001f64..0.5, r2 in 0.001f64..0.5,
        ) {
            let t = track([0.0, 0.0, 0.3, -0.2], Matrix4::identity() * 0.5);
            let a = meas(1.0, zx1, zy1, Source::Lidar, r1);
            let b = meas(1.0, zx2, zy2, Source::Camera, r2);
            let ab = update(&update(&t, &a, &a.noise_cov).unwrap(), &b, &b.noise_cov).unwrap();
            let ba = update(&update(&t, &b, &b.noise_cov).unwrap(), &a, &a.noise_cov).unwrap();
            prop_assert!((ab.state - ba.state).amax() < 1e-9);
            prop_assert!((ab.cov - ba.cov).amax() < 1e-9);
        }
    }
}
