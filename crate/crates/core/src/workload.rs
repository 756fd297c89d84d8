//! Seeded dataset and query-mix generation.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `SeedableRng::seed_from_u64(seed)`. Entities are drawn from stream 0 and
//! queries from stream 1, so the two generators are independent and both
//! reproduce bit-for-bit from the seed alone.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use thiserror::Error;

use crate::geometry::GeoShape;
use crate::grid::{GridConfig, Point};
use crate::store::Entity;

const ENTITY_STREAM: u64 = 0;
const QUERY_STREAM: u64 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("invalid radius range [{0}, {1}]: need 0 < r_min <= r_max")]
    RadiusRange(f64, f64),
    #[error("poisson rate {0} is not usable")]
    Rate(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    /// Target data set size.
    pub dss: u64,
    pub seed: u64,
    pub cfg: GridConfig,
    pub query_count: usize,
    pub radius_range: (f64, f64),
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let (lo, hi) = self.radius_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(WorkloadError::RadiusRange(lo, hi));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Homogeneous Poisson point process realized cell by cell, then trimmed or
/// topped up to exactly `dss` points.
///
/// Each cell draws a count from Poisson(dss / cells) and places that many
/// points uniformly inside the part of the cell that lies in the world. If
/// the total overshoots, uniformly chosen points are dropped; if it falls
/// short, uniform world points are appended. Ids are `0..dss` in output order.
pub fn generate_entities(spec: &WorkloadSpec) -> Result<Vec<Entity>, WorkloadError> {
    spec.validate()?;
    if spec.dss == 0 {
        return Ok(Vec::new());
    }
    let cfg = &spec.cfg;
    let mut rng = spec.rng(ENTITY_STREAM);
    let lambda = spec.dss as f64 / cfg.cell_count() as f64;
    let poisson = Poisson::new(lambda).map_err(|_| WorkloadError::Rate(lambda))?;
    let c = cfg.cell_side();

    let mut points = Vec::with_capacity(spec.dss as usize + spec.dss as usize / 16 + 16);
    for cy in 0..cfg.rows() {
        let y0 = cfg.min_h() + cy as f64 * c;
        let hy = c.min(cfg.max_h() - y0);
        for cx in 0..cfg.cols() {
            let x0 = cfg.min_d() + cx as f64 * c;
            let wx = c.min(cfg.max_d() - x0);
            let n = poisson.sample(&mut rng) as u64;
            for _ in 0..n {
                let x = x0 + rng.random::<f64>() * wx;
                let y = y0 + rng.random::<f64>() * hy;
                points.push(Point::new(x, y));
            }
        }
    }

    let target = spec.dss as usize;
    if points.len() > target {
        let mut keep = vec![true; points.len()];
        for i in index::sample(&mut rng, points.len(), points.len() - target) {
            keep[i] = false;
        }
        let mut flags = keep.into_iter();
        points.retain(|_| flags.next().unwrap_or(false));
    }
    while points.len() < target {
        let x = cfg.min_d() + rng.random::<f64>() * cfg.width();
        let y = cfg.min_h() + rng.random::<f64>() * cfg.height();
        points.push(Point::new(x, y));
    }

    Ok(points
        .into_iter()
        .enumerate()
        .map(|(i, p)| Entity::new(i as u64, p, format!("entity-{i:08}")))
        .collect())
}

/// `query_count` discs with radii uniform in `radius_range` and centers
/// uniform over the positions that keep the disc inside the world.
pub fn generate_queries(spec: &WorkloadSpec) -> Result<Vec<GeoShape>, WorkloadError> {
    spec.validate()?;
    let cfg = &spec.cfg;
    let mut rng = spec.rng(QUERY_STREAM);
    let (r_min, r_max) = spec.radius_range;
    let mut out = Vec::with_capacity(spec.query_count);
    for _ in 0..spec.query_count {
        let r = if r_min == r_max { r_min } else { rng.random_range(r_min..=r_max) };
        let px = centered(&mut rng, cfg.min_d(), cfg.max_d(), r);
        let py = centered(&mut rng, cfg.min_h(), cfg.max_h(), r);
        // radius is validated positive and the center finite
        out.push(GeoShape::Disc {
            center: Point::new(px, py),
            radius: r,
        });
    }
    Ok(out)
}

/// Uniform in `[min + r, max - r]`, or the midpoint if the disc is too wide.
fn centered(rng: &mut ChaCha8Rng, min: f64, max: f64, r: f64) -> f64 {
    let lo = min + r;
    let hi = max - r;
    if lo >= hi {
        0.5 * (min + max)
    } else {
        rng.random_range(lo..=hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::write_csv;

    fn spec(dss: u64, seed: u64) -> WorkloadSpec {
        WorkloadSpec {
            dss,
            seed,
            cfg: GridConfig::square(100.0, 10.0).unwrap(),
            query_count: 50,
            radius_range: (1.0, 20.0),
        }
    }

    #[test]
    fn zero_dss_is_empty() {
        assert!(generate_entities(&spec(0, 1)).unwrap().is_empty());
    }

    #[test]
    fn exact_cardinality_and_ids() {
        for dss in [1, 7, 99, 100, 101, 1000, 4321] {
            let es = generate_entities(&spec(dss, dss)).unwrap();
            assert_eq!(es.len() as u64, dss);
            assert!(es.iter().enumerate().all(|(i, e)| e.id == i as u64));
            assert!(es.iter().all(|e| spec(0, 0).cfg.contains(e.point)));
        }
    }

    #[test]
    fn poisson_dispersion() {
        let s = spec(10_000, 42);
        let es = generate_entities(&s).unwrap();
        assert_eq!(es.len(), 10_000);
        let mut counts = vec![0f64; 100];
        for e in &es {
            counts[s.cfg.hash_of(e.point).unwrap().0 as usize] += 1.0;
        }
        let mean = counts.iter().sum::<f64>() / 100.0;
        let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / 99.0;
        assert!((mean - 100.0).abs() < 1e-9);
        let ratio = var / mean;
        assert!((0.8..=1.2).contains(&ratio), "variance/mean = {ratio}");
    }

    #[test]
    fn deterministic_csv() {
        let render = || {
            let mut buf = Vec::new();
            write_csv(&mut buf, &generate_entities(&spec(500, 7)).unwrap()).unwrap();
            buf
        };
        assert_eq!(render(), render());
        let mut other = Vec::new();
        write_csv(&mut other, &generate_entities(&spec(500, 8)).unwrap()).unwrap();
        assert_ne!(render(), other);
    }

    #[test]
    fn partial_edge_cells_stay_in_world() {
        let s = WorkloadSpec {
            cfg: GridConfig::new(-5.0, 95.0, 0.0, 70.0, 30.0).unwrap(),
            ..spec(5000, 3)
        };
        let es = generate_entities(&s).unwrap();
        assert!(es.iter().all(|e| s.cfg.contains(e.point)));
    }

    #[test]
    fn queries_in_bounds_and_reproducible() {
        let s = spec(0, 11);
        let qs = generate_queries(&s).unwrap();
        assert_eq!(qs.len(), 50);
        assert_eq!(qs, generate_queries(&s).unwrap());
        for q in &qs {
            let GeoShape::Disc { center, radius } = q else { panic!("expected disc") };
            assert!((1.0..=20.0).contains(radius));
            assert!(center.x - radius >= 0.0 && center.x + radius <= 100.0);
            assert!(center.y - radius >= 0.0 && center.y + radius <= 100.0);
        }
        assert!(generate_queries(&WorkloadSpec { query_count: 0, ..s.clone() }).unwrap().is_empty());
    }

    #[test]
    fn oversized_radius_is_centered() {
        let s = WorkloadSpec {
            radius_range: (80.0, 80.0),
            ..spec(0, 2)
        };
        for q in generate_queries(&s).unwrap() {
            assert_eq!(q, GeoShape::disc(Point::new(50.0, 50.0), 80.0).unwrap());
        }
    }

    #[test]
    fn invalid_radius_range() {
        let s = WorkloadSpec {
            radius_range: (5.0, 1.0),
            ..spec(10, 1)
        };
        assert_eq!(generate_queries(&s), Err(WorkloadError::RadiusRange(5.0, 1.0)));
        assert!(generate_entities(&s).is_err());
    }
}
